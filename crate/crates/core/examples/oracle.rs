//! Fixed-point iteration of the clearing map as an independent check on the
//! exact algorithms.
//!
//! cargo run --example oracle

use finclear::clearing::{bottom_iterate, check_clearing_state, max_gap, phi, top_iterate_rounded, ClearingState};
use finclear::min_clearing::compute_min_clearing;
use finclear::model::NetworkSpec;
use finclear::rational::{int, to_decimal_string};
use finclear::state_space::compute_max_clearing_flood;

fn main() {
    // a cycle that leaks a little to an outside bank on every round
    let net = NetworkSpec::new()
        .bank("a", 1)
        .bank("b", 0)
        .bank("c", 0)
        .claim("a", "b", 10)
        .claim("b", "a", 9)
        .claim("b", "c", 1)
        .build()
        .unwrap();

    let min = compute_min_clearing(&net);
    let max = compute_max_clearing_flood(&net).unwrap();

    let below = bottom_iterate(&net, 50);
    println!(
        "bottom iterate after {} steps, gap to minimal {}",
        below.steps,
        to_decimal_string(&max_gap(&below.state, &min), 6)
    );
    let above = top_iterate_rounded(&net, 10_000, 64).unwrap();
    println!(
        "top iterate after {} steps, gap to maximal {}",
        above.steps,
        to_decimal_string(&max_gap(&above.state, &max), 6)
    );

    let guess = ClearingState::new(vec![int(2), int(2), int(0)]);
    let report = check_clearing_state(&net, &guess).unwrap();
    for v in &report.violations {
        println!("{}: guessed {}, the map gives {}", net.name(v.bank), v.state_value, v.mapped_value);
    }
    println!("phi(minimal) == minimal: {}", phi(&net, &min).unwrap() == min);
}
