//! Parsers for program source (`.gbc`) and annotation files (`.gba`).
//!
//! Program grammar:
//!
//! ```text
//! program   ::= (class | main)*
//! class     ::= "class" ID ["extends" ID] "{" method* "}"
//! method    ::= "method" ID "(" ")" "{" body "}"
//! main      ::= "main" "{" body "}"
//! body      ::= command*
//! command   ::= "decl" ID "=" expr ";"
//!             | ID ":=" expr ";"
//!             | ID "." ID ":=" expr ";"
//!             | "spawn" expr "." ID "(" ")" ";"
//!             | "sync" "(" expr ")" "{" body "}"
//!             | "skip" ";"
//!             | expr "." ID "(" ")" ";"
//! expr      ::= primary ("." ID)*
//! primary   ::= ID | "this" | "new" ID "{" [ID "=" expr ("," ID "=" expr)*] "}"
//! ```
//!
//! Method and main bodies are normalized to a right-associated sequence with
//! a trailing `skip` terminator; `sync` bodies are sequenced without the
//! terminator. `//` starts a line comment.
//!
//! Annotation grammar (one per line):
//!
//! ```text
//! annotation ::= "guard" ("name" | "value") target "by" guard-expr
//! target     ::= "field" ID | "var" ID "." ID "." ID
//! ```
//!
//! Guard expressions extend `expr` with the reserved variable `itself`.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::syntax::{
    Annotation, AnnotationTarget, ClassDef, Command, Expr, Name, Program, Protection, ITSELF,
    MAIN_CLASS, MAIN_METHOD, OBJECT_CLASS, RESERVED_WORDS, THIS,
};

/// A parse failure with its 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Ident(&'a str),
    Symbol(&'a str),
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    tok: Tok<'a>,
    line: u32,
    col: u32,
}

fn lex(src: &str) -> Result<Vec<Token<'_>>, ParseError> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start_line = line;
        let start_col = col;
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
                col += 1;
            }
            out.push(Token {
                tok: Tok::Ident(&src[start..i]),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        let sym = if c == ':' && bytes.get(i + 1) == Some(&b'=') {
            ":="
        } else {
            match c {
                '{' => "{",
                '}' => "}",
                '(' => "(",
                ')' => ")",
                ';' => ";",
                ',' => ",",
                '.' => ".",
                '=' => "=",
                _ => {
                    return Err(ParseError {
                        line,
                        col,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            }
        };
        i += sym.len();
        col += sym.len() as u32;
        out.push(Token {
            tok: Tok::Symbol(sym),
            line: start_line,
            col: start_col,
        });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    /// When true, `itself` is a legal variable (guard expressions only).
    allow_itself: bool,
    end_line: u32,
    end_col: u32,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let tokens = lex(src)?;
        let (end_line, end_col) = tokens
            .last()
            .map(|t| (t.line, t.col + 1))
            .unwrap_or((1, 1));
        Ok(Parser {
            tokens,
            pos: 0,
            allow_itself: false,
            end_line,
            end_col,
        })
    }

    fn peek(&self) -> Option<Tok<'a>> {
        self.tokens.get(self.pos).map(|t| t.tok)
    }

    fn here(&self) -> (u32, u32) {
        self.tokens
            .get(self.pos)
            .map(|t| (t.line, t.col))
            .unwrap_or((self.end_line, self.end_col))
    }

    fn err<T>(&self, message: String) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError { line, col, message })
    }

    fn bump(&mut self) -> Option<Tok<'a>> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat_symbol(&mut self, sym: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Symbol(s)) if s == sym => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => self.err(format!("expected `{sym}`, found {}", show(t))),
            None => self.err(format!("expected `{sym}`, found end of input")),
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => self.err(format!("expected `{kw}`, found {}", show(t))),
            None => self.err(format!("expected `{kw}`, found end of input")),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    /// A user identifier; reserved words are rejected.
    fn ident(&mut self, what: &str) -> Result<Name, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                if RESERVED_WORDS.contains(&s) {
                    self.err(format!("reserved word `{s}` cannot be used as {what}"))
                } else {
                    self.pos += 1;
                    Ok(s.to_owned())
                }
            }
            Some(t) => self.err(format!("expected {what}, found {}", show(t))),
            None => self.err(format!("expected {what}, found end of input")),
        }
    }

    /// An identifier where reserved words are allowed (annotation targets
    /// may name the `main` class/method).
    fn raw_ident(&mut self, what: &str) -> Result<Name, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s.to_owned())
            }
            Some(t) => self.err(format!("expected {what}, found {}", show(t))),
            None => self.err(format!("expected {what}, found end of input")),
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut program = Program::new();
        let mut has_main = false;
        while let Some(tok) = self.peek() {
            match tok {
                Tok::Ident("class") => {
                    self.bump();
                    let (line, col) = self.here();
                    let name = self.ident("a class name")?;
                    if program.classes.contains_key(&name) {
                        return Err(ParseError {
                            line,
                            col,
                            message: format!("duplicate class `{name}`"),
                        });
                    }
                    let parent = if self.at_keyword("extends") {
                        self.bump();
                        self.ident("a class name")?
                    } else {
                        OBJECT_CLASS.to_owned()
                    };
                    self.eat_symbol("{")?;
                    let mut methods = alloc::collections::BTreeMap::new();
                    while self.at_keyword("method") {
                        self.bump();
                        let (mline, mcol) = self.here();
                        let mname = self.ident("a method name")?;
                        self.eat_symbol("(")?;
                        self.eat_symbol(")")?;
                        self.eat_symbol("{")?;
                        let body = self.body()?;
                        self.eat_symbol("}")?;
                        if methods.insert(mname.clone(), body).is_some() {
                            return Err(ParseError {
                                line: mline,
                                col: mcol,
                                message: format!("duplicate method `{name}.{mname}`"),
                            });
                        }
                    }
                    self.eat_symbol("}")?;
                    program.classes.insert(
                        name,
                        ClassDef {
                            parent: Some(parent),
                            methods,
                        },
                    );
                }
                Tok::Ident("main") => {
                    if has_main {
                        return self.err("duplicate main block".to_owned());
                    }
                    has_main = true;
                    self.bump();
                    self.eat_symbol("{")?;
                    let body = self.body()?;
                    self.eat_symbol("}")?;
                    program.classes.insert(
                        MAIN_CLASS.to_owned(),
                        ClassDef {
                            parent: Some(OBJECT_CLASS.to_owned()),
                            methods: alloc::collections::BTreeMap::from([(
                                MAIN_METHOD.to_owned(),
                                body,
                            )]),
                        },
                    );
                }
                t => return self.err(format!("expected `class` or `main`, found {}", show(t))),
            }
        }
        Ok(program)
    }

    /// A `skip`-terminated body: commands folded right-associated onto the
    /// terminator.
    fn body(&mut self) -> Result<Command, ParseError> {
        let cmds = self.commands()?;
        Ok(Command::seq_all(cmds, Command::Skip))
    }

    /// A sync body: commands folded right-associated, no terminator. An
    /// empty block is `skip`.
    fn block(&mut self) -> Result<Command, ParseError> {
        let mut cmds = self.commands()?;
        match cmds.len() {
            0 => Ok(Command::Skip),
            _ => {
                let last = cmds.pop().expect("nonempty");
                Ok(Command::seq_all(cmds, last))
            }
        }
    }

    fn commands(&mut self) -> Result<Vec<Command>, ParseError> {
        let mut cmds = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Symbol("}")) | None => return Ok(cmds),
                _ => cmds.push(self.command()?),
            }
        }
    }

    fn command(&mut self) -> Result<Command, ParseError> {
        match self.peek() {
            Some(Tok::Ident("skip")) => {
                self.bump();
                self.eat_symbol(";")?;
                Ok(Command::Skip)
            }
            Some(Tok::Ident("decl")) => {
                self.bump();
                let x = self.ident("a variable name")?;
                self.eat_symbol("=")?;
                let e = self.expr()?;
                self.eat_symbol(";")?;
                Ok(Command::Decl(x, e))
            }
            Some(Tok::Ident("spawn")) => {
                self.bump();
                let (recv, method) = self.call_target()?;
                self.eat_symbol(";")?;
                Ok(Command::Spawn(recv, method))
            }
            Some(Tok::Ident("sync")) => {
                self.bump();
                self.eat_symbol("(")?;
                let guard = self.expr()?;
                self.eat_symbol(")")?;
                self.eat_symbol("{")?;
                let body = self.block()?;
                self.eat_symbol("}")?;
                Ok(Command::Sync(guard, alloc::boxed::Box::new(body)))
            }
            Some(Tok::Ident("lock")) | Some(Tok::Ident("unlock")) => {
                self.err("lock/unlock cannot be written in source".to_owned())
            }
            _ => self.assignment_or_call(),
        }
    }

    /// Disambiguates `x := E;`, `x.f := E;`, and `E.m();` after parsing a
    /// postfix chain.
    fn assignment_or_call(&mut self) -> Result<Command, ParseError> {
        let chain = self.expr_no_call()?;
        match self.peek() {
            Some(Tok::Symbol(":=")) => {
                self.bump();
                let rhs = self.expr()?;
                self.eat_symbol(";")?;
                match chain {
                    Expr::Var(x) => Ok(Command::AssignVar(x, rhs)),
                    Expr::Field(recv, f) => match *recv {
                        Expr::Var(x) => Ok(Command::AssignField(x, f, rhs)),
                        _ => self.err(
                            "the receiver of a field assignment must be a variable".to_owned(),
                        ),
                    },
                    Expr::New(..) => self.err("cannot assign to an object creation".to_owned()),
                }
            }
            Some(Tok::Symbol("(")) => {
                // The last field of the chain is actually the method name.
                self.bump();
                self.eat_symbol(")")?;
                self.eat_symbol(";")?;
                match chain {
                    Expr::Field(recv, m) => Ok(Command::Call(*recv, m)),
                    _ => self.err("expected `receiver.method()`".to_owned()),
                }
            }
            Some(t) => self.err(format!("expected `:=` or `(`, found {}", show(t))),
            None => self.err("expected `:=` or `(`, found end of input".to_owned()),
        }
    }

    fn call_target(&mut self) -> Result<(Expr, Name), ParseError> {
        let chain = self.expr_no_call()?;
        self.eat_symbol("(")?;
        self.eat_symbol(")")?;
        match chain {
            Expr::Field(recv, m) => Ok((*recv, m)),
            _ => self.err("expected `receiver.method()`".to_owned()),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.expr_no_call()
    }

    fn expr_no_call(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        while matches!(self.peek(), Some(Tok::Symbol("."))) {
            // Stop before `.m(` so callers can take the method name.
            self.bump();
            let f = self.ident("a field or method name")?;
            e = Expr::Field(alloc::boxed::Box::new(e), f);
            if matches!(self.peek(), Some(Tok::Symbol("("))) {
                break;
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Ident(THIS)) => {
                self.bump();
                Ok(Expr::var(THIS))
            }
            Some(Tok::Ident(ITSELF)) if self.allow_itself => {
                self.bump();
                Ok(Expr::var(ITSELF))
            }
            Some(Tok::Ident("new")) => {
                self.bump();
                let class = match self.peek() {
                    // `Object` is always in the class table even though it
                    // cannot be declared.
                    Some(Tok::Ident(OBJECT_CLASS)) => {
                        self.bump();
                        OBJECT_CLASS.to_owned()
                    }
                    _ => self.ident("a class name")?,
                };
                self.eat_symbol("{")?;
                let mut inits = Vec::new();
                if !matches!(self.peek(), Some(Tok::Symbol("}"))) {
                    loop {
                        let (line, col) = self.here();
                        let f = self.ident("a field name")?;
                        if inits.iter().any(|(g, _)| *g == f) {
                            return Err(ParseError {
                                line,
                                col,
                                message: format!("duplicate field initializer `{f}`"),
                            });
                        }
                        self.eat_symbol("=")?;
                        let e = self.expr()?;
                        inits.push((f, e));
                        if matches!(self.peek(), Some(Tok::Symbol(","))) {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.eat_symbol("}")?;
                Ok(Expr::New(class, inits))
            }
            _ => {
                let x = self.ident("an expression")?;
                Ok(Expr::Var(x))
            }
        }
    }
}

fn show(t: Tok<'_>) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Symbol(s) => format!("`{s}`"),
    }
}

/// Parses program source. Syntactic checks only; use
/// [`crate::validate::validate_program`] for scope and structure checks.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(src)?;
    p.program()
}

/// Parses an annotation file: one `guard` line per annotation, `//`
/// comments and blank lines ignored.
pub fn parse_annotations(src: &str) -> Result<Vec<Annotation>, ParseError> {
    let mut p = Parser::new(src)?;
    p.allow_itself = true;
    let mut out = Vec::new();
    while p.peek().is_some() {
        p.eat_keyword("guard")?;
        let protection = match p.bump() {
            Some(Tok::Ident("name")) => Protection::Name,
            Some(Tok::Ident("value")) => Protection::Value,
            _ => {
                p.pos = p.pos.saturating_sub(1);
                return p.err("expected `name` or `value`".to_owned());
            }
        };
        let target = match p.bump() {
            Some(Tok::Ident("field")) => AnnotationTarget::Field(p.raw_ident("a field name")?),
            Some(Tok::Ident("var")) => {
                let class = p.raw_ident("a class name")?;
                p.eat_symbol(".")?;
                let method = p.raw_ident("a method name")?;
                p.eat_symbol(".")?;
                let var = p.raw_ident("a variable name")?;
                AnnotationTarget::Var { class, method, var }
            }
            _ => {
                p.pos = p.pos.saturating_sub(1);
                return p.err("expected `field` or `var`".to_owned());
            }
        };
        p.eat_keyword("by")?;
        let guard = p.expr()?;
        out.push(Annotation {
            protection,
            target,
            guard,
        });
    }
    Ok(out)
}
