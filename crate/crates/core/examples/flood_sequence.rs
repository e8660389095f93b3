//! Walking the space of clearing states with floods. Every intermediate
//! state is a clearing state between the minimal and the maximal one.
//!
//! cargo run --example flood_sequence

use finclear::clearing::is_clearing_state;
use finclear::graph::{active_graph, condense, flood_components};
use finclear::min_clearing::compute_min_clearing;
use finclear::model::NetworkSpec;
use finclear::rational::ratio;
use finclear::state_space::{apply_flood_sequence, compute_max_clearing_flood, FloodRequest};

fn main() {
    // two independent cycles without external assets
    let net = NetworkSpec::new()
        .bank("a", 0)
        .bank("b", 0)
        .bank("c", 0)
        .bank("d", 0)
        .claim("a", "b", 2)
        .claim("b", "a", 2)
        .claim("c", "d", 1)
        .claim("d", "c", 3)
        .build()
        .unwrap();

    let min = compute_min_clearing(&net);
    let c = condense(&active_graph(&net, &min));
    for k in flood_components(&c) {
        let names: Vec<_> = c.component(k).iter().map(|&v| net.name(v)).collect();
        println!("floodable: {{{}}}", names.join(", "));
    }

    let a = net.bank_id("a").unwrap();
    let c_bank = net.bank_id("c").unwrap();
    let steps = [
        FloodRequest { bank: a, fraction: ratio(1, 2) },
        FloodRequest { bank: c_bank, fraction: ratio(1, 3) },
    ];
    let partial = apply_flood_sequence(&net, &min, &steps).unwrap();
    assert!(is_clearing_state(&net, &partial));
    println!("after partial floods: {}", show(partial.assets()));

    let max = compute_max_clearing_flood(&net).unwrap();
    println!("maximal: {}", show(max.assets()));
}

fn show(xs: &[finclear::rational::Rational]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}
