//! Maximal clearing state, two ways: flooding from the minimal state, and
//! the priority-proportional descent (which also handles default costs).
//!
//! cargo run --example max_clearing

use finclear::max_clearing::{compute_max_clearing_pp_traced, priority_structure, to_priority_proportional};
use finclear::min_clearing::compute_min_clearing;
use finclear::model::NetworkSpec;
use finclear::state_space::compute_max_clearing_flood;

fn main() {
    // b pays d before anything flows around the b-c cycle
    let net = NetworkSpec::new()
        .bank("a", 2)
        .bank("b", 0)
        .bank("c", 0)
        .bank("d", 0)
        .claim("a", "b", 2)
        .claim("b", "d", 2)
        .claim("b", "c", 5)
        .claim("c", "b", 5)
        .priority_proportional("b", &[&["d"], &["c"]])
        .build()
        .unwrap();

    let min = compute_min_clearing(&net);
    let flood = compute_max_clearing_flood(&net).unwrap();
    let pp = compute_max_clearing_pp_traced(&net).unwrap();
    assert_eq!(flood, pp.state);
    for v in net.bank_ids() {
        println!("{}: minimal {}, maximal {}", net.name(v), min[v], flood[v]);
    }
    println!("descent took {} rounds", pp.iterations());

    let b = net.bank_id("b").unwrap();
    let s = priority_structure(&net, b);
    let borders: Vec<_> = s.borders.iter().map(ToString::to_string).collect();
    println!("b has {} priority classes with borders {}", s.class_count(), borders.join(", "));

    let (rewritten, cert) = to_priority_proportional(&net);
    println!(
        "priority-proportional rewrite: {} banks ({} relays), {} claims",
        rewritten.num_banks(),
        cert.relays.len(),
        rewritten.num_claims()
    );
}
