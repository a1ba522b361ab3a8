mod common;
use guardedby_core::explorer::{explore, ExploreConfig};

#[test]
#[ignore]
fn measure() {
    for (name, p) in common::corpus_programs() {
        let cfg = ExploreConfig { bound: 200, ..ExploreConfig::default() };
        match explore(&p, cfg) {
            Ok(x) => println!(
                "{name}: nodes={} leaves={} completed={} deadlock={} stuck={} bound={}",
                x.stats.configurations_visited,
                x.stats.leaves(),
                x.stats.completed,
                x.stats.deadlocked,
                x.stats.stuck,
                x.stats.bound_exhausted
            ),
            Err(e) => println!("{name}: ERROR {e}"),
        }
    }
}
