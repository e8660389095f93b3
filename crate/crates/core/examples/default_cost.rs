//! Default costs: insolvent banks lose part of their assets. The bottom
//! iteration from zero never reaches the minimal clearing state here, while
//! the exact algorithm finds it directly.
//!
//! cargo run --example default_cost

use finclear::clearing::bottom_iterate_rounded;
use finclear::max_clearing::compute_max_clearing_pp;
use finclear::min_clearing::compute_min_clearing;
use finclear::model::NetworkSpec;
use finclear::rational::{int, to_decimal_string};

fn main() {
    let net = NetworkSpec::new()
        .bank_with_costs("v", 1, (1, 2), (1, 2))
        .bank_with_costs("w", 1, (1, 2), (1, 2))
        .claim("v", "w", 2)
        .claim("w", "v", 2)
        .build()
        .unwrap();

    let min = compute_min_clearing(&net);
    let paid: Vec<_> = min.payments(&net).iter().map(ToString::to_string).collect();
    println!("minimal: v = {}, w = {}, payments {}", min.assets()[0], min.assets()[1], paid.join(", "));

    let it = bottom_iterate_rounded(&net, 10_000, 64);
    let p = it.state.payments(&net);
    println!(
        "bottom iteration stalls after {} steps: payments 1 - {} (converged: {})",
        it.steps,
        to_decimal_string(&(int(1) - &p[0]), 3),
        it.converged
    );

    let max = compute_max_clearing_pp(&net);
    println!("maximal: v = {}, w = {}", max.assets()[0], max.assets()[1]);
}
