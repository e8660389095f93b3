//! Claims trades: a buyer takes over a claim for a return paid to the
//! creditor. Finds the creditor-positive returns and the best one.
//!
//! cargo run --example trade

use finclear::min_clearing::compute_min_clearing;
use finclear::model::NetworkSpec;
use finclear::rational::ratio;
use finclear::trade::{analyze_trade, evaluate_trade, exists_creditor_positive, nonunique_banks, Diagnostic, TradeSpec};

fn main() {
    let net = NetworkSpec::new()
        .bank("u", 1)
        .bank("v", 0)
        .bank("w", 4)
        .bank("y", 0)
        .claim("u", "v", 2)
        .claim("v", "w", 3)
        .claim("v", "y", 2)
        .claim("y", "v", 2)
        .edge_ranking("v", &["w", "y"])
        .build()
        .unwrap();
    let [u, v, w, y] = ["u", "v", "w", "y"].map(|n| net.bank_id(n).unwrap());

    let before = compute_min_clearing(&net);
    println!("before: v = {}, w = {}", before[v], before[w]);
    println!("banks without a unique clearing value: {}", nonunique_banks(&net).unwrap().len());

    let check = exists_creditor_positive(&net, u, v, w).unwrap();
    match check.diagnostic {
        Diagnostic::Exists { creditor_slope } => {
            println!("w buying (u, v) helps v: each extra unit of return raises v by {creditor_slope}")
        }
        other => println!("w buying (u, v) cannot help v: {other:?}"),
    }

    let result = analyze_trade(&net, u, v, w).unwrap();
    println!("creditor-positive returns: {}", result.interval);
    if let (Some(rho), Some(post)) = (&result.rho_star, &result.post_state) {
        println!("best return {rho}: v = {}, w = {}", post[v], post[w]);
    }

    let (after, positive) = evaluate_trade(&net, &TradeSpec { debtor: u, creditor: v, buyer: w, rho: ratio(3, 2) }).unwrap();
    println!("return 3/2: v = {}, w = {}, creditor-positive: {positive}", after[v], after[w]);

    // y has nothing to pay with
    println!("y as buyer: {}", analyze_trade(&net, u, v, y).unwrap().interval);
}
