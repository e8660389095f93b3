mod common;

use common::*;
use finclear::min_clearing::compute_min_clearing;
use finclear::rational::{int, ratio, Rational};
use finclear::state_space::compute_max_clearing_flood;
use finclear::model::{BankId, FinancialNetwork, NetworkSpec};
use finclear::trade::{
    analyze_trade, evaluate_trade, exists_creditor_positive, nonunique_banks, return_cap, Diagnostic, ReturnInterval,
    TradeSpec,
};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn reaches(net: &FinancialNetwork, from: BankId, to: BankId) -> bool {
    let mut seen = vec![false; net.num_banks()];
    let mut stack = vec![from];
    while let Some(x) = stack.pop() {
        if x == to {
            return true;
        }
        if !std::mem::replace(&mut seen[x.0], true) {
            stack.extend(net.claims().iter().filter(|c| c.debtor == x).map(|c| c.creditor));
        }
    }
    false
}

fn spec(case: TradeCase, rho: Rational) -> TradeSpec {
    TradeSpec { debtor: case.debtor, creditor: case.creditor, buyer: case.buyer, rho }
}

proptest! {
    #![proptest_config(config(96))]

    #[test]
    fn creditor_positive_returns_form_the_reported_interval(seed in any::<u64>()) {
        let Some((net, case)) = random_trade(seed, trade_params()) else { return Ok(()) };
        let result = analyze_trade(&net, case.debtor, case.creditor, case.buyer).unwrap();
        let claim = net.find_claim(case.debtor, case.creditor).unwrap();
        let cap = return_cap(&net, claim, case.buyer);
        let before = compute_min_clearing(&net);

        if result.rho_min <= cap {
            let (state, positive) = evaluate_trade(&net, &spec(case, result.rho_min.clone())).unwrap();
            prop_assert!(!positive);
            prop_assert!(before.dominates(&state));
            // the state only drops when the traded claim closes a cycle through the buyer
            if state != before {
                prop_assert!(reaches(&net, case.buyer, case.debtor));
            }
        }

        let (lo, hi) = match &result.interval {
            ReturnInterval::Empty => (result.rho_min.clone(), result.rho_min.clone()),
            ReturnInterval::LeftOpen { lo, hi } => {
                prop_assert!(*lo >= result.rho_min);
                prop_assert!(lo < hi);
                prop_assert_eq!(result.rho_star.as_ref(), Some(hi));
                (lo.clone(), hi.clone())
            }
        };
        // ten evenly spaced returns in each of (rho_min, lo], (lo, hi] and (hi, cap]
        for k in 1..=10 {
            let early = &result.rho_min + (&lo - &result.rho_min) * ratio(k, 10);
            if early > result.rho_min {
                prop_assert!(!evaluate_trade(&net, &spec(case, early.clone())).unwrap().1, "rho {} before the interval", early);
            }
            let inside = &lo + (&hi - &lo) * ratio(k, 10);
            if inside > lo {
                let (after, positive) = evaluate_trade(&net, &spec(case, inside.clone())).unwrap();
                prop_assert!(positive, "rho {} inside the interval is not creditor-positive", inside);
                prop_assert!(after.dominates(&before), "rho {} is not a Pareto improvement", inside);
                prop_assert_eq!(&after[case.buyer], &before[case.buyer]);
            }
            let outside = &hi + (&cap - &hi) * ratio(k, 10);
            if outside > hi {
                prop_assert!(!evaluate_trade(&net, &spec(case, outside.clone())).unwrap().1, "rho {} past rho*", outside);
            }
        }
        if let Some(post) = &result.post_state {
            prop_assert_eq!(post, &evaluate_trade(&net, &spec(case, hi.clone())).unwrap().0);
        }
    }

    #[test]
    fn returns_below_minimum_never_help_the_creditor(seed in any::<u64>()) {
        let Some((net, case)) = random_trade(seed, trade_params()) else { return Ok(()) };
        let result = analyze_trade(&net, case.debtor, case.creditor, case.buyer).unwrap();
        let cap = return_cap(&net, net.find_claim(case.debtor, case.creditor).unwrap(), case.buyer);
        for k in 0..4 {
            let rho = (&result.rho_min * ratio(k, 4)).min(cap.clone());
            prop_assert!(!evaluate_trade(&net, &spec(case, rho)).unwrap().1);
        }
    }

    #[test]
    fn nonunique_banks_have_zero_minimal_assets(seed in any::<u64>()) {
        let net = random_network(seed, Params::small(Schemes::Proportional));
        let min = compute_min_clearing(&net);
        let max = compute_max_clearing_flood(&net).unwrap();
        let nonunique = nonunique_banks(&net).unwrap();
        for v in net.bank_ids() {
            prop_assert_eq!(nonunique.contains(&v), min[v] != max[v]);
        }
        for v in nonunique {
            prop_assert_eq!(&min[v], &int(0));
        }
    }

    #[test]
    fn no_trade_strictly_helps_both_sides(seed in any::<u64>()) {
        let net = random_network(seed, Params::small(Schemes::Proportional));
        let before = compute_min_clearing(&net);
        for case in trade_cases(&net) {
            let cap = return_cap(&net, net.find_claim(case.debtor, case.creditor).unwrap(), case.buyer);
            for k in 1..=5 {
                let (after, _) = evaluate_trade(&net, &spec(case, &cap * ratio(k, 5))).unwrap();
                prop_assert!(!(after[case.creditor] > before[case.creditor] && after[case.buyer] > before[case.buyer]));
            }
        }
    }

    #[test]
    fn optimal_return_matches_grid_search(seed in any::<u64>()) {
        let Some((net, case)) = random_trade(seed, trade_params()) else { return Ok(()) };
        let result = analyze_trade(&net, case.debtor, case.creditor, case.buyer).unwrap();
        let cap = return_cap(&net, net.find_claim(case.debtor, case.creditor).unwrap(), case.buyer);
        let grid = grid_best_return(&net, case, &result.rho_min, &cap, 20);
        match (&result.rho_star, grid) {
            (Some(star), Some(g)) => prop_assert!(&g <= star && star - &g < ratio(1, 20)),
            (Some(star), None) => prop_assert!(star - &result.rho_min < ratio(1, 20)),
            (None, Some(g)) => prop_assert!(false, "grid found creditor-positive return {}", g),
            (None, None) => {}
        }
    }
}

/// b0 pays b2 and b3 proportionally; b3 pays b2 first, and b2 pays b1 first.
/// After b0 buys (b2, b3), b0 lies on a cycle through b2 whose flow the
/// minimal state no longer needs, so b0 loses any return it pays.
#[test]
fn buyer_on_unforced_cycle_loses() {
    let net = NetworkSpec::new()
        .bank("b0", 2)
        .bank("b1", 0)
        .bank("b2", 1)
        .bank("b3", 0)
        .claim("b2", "b3", 1)
        .claim("b2", "b1", 3)
        .claim("b0", "b2", 4)
        .claim("b3", "b2", 4)
        .claim("b0", "b3", 2)
        .claim("b3", "b1", 1)
        .edge_ranking("b2", &["b1", "b3"])
        .edge_ranking("b3", &["b2", "b1"])
        .build()
        .unwrap();
    let [b0, b2, b3] = ["b0", "b2", "b3"].map(|n| net.bank_id(n).unwrap());
    let result = analyze_trade(&net, b2, b3, b0).unwrap();
    assert_eq!(result.interval, ReturnInterval::Empty);
    let check = exists_creditor_positive(&net, b2, b3, b0).unwrap();
    assert!(!check.exists);
    assert!(matches!(check.diagnostic, Diagnostic::CirculationLost { .. }), "{:?}", check.diagnostic);
    let (after, positive) = evaluate_trade(&net, &spec(TradeCase { debtor: b2, creditor: b3, buyer: b0 }, ratio(1, 2))).unwrap();
    assert!(!positive);
    assert_eq!(after[b0], ratio(3, 2));
}

/// The creditor b2 and the buyer b3 share a cycle. A return moves money
/// within it without flooding it.
#[test]
fn shared_cycle_is_not_flooded() {
    let net = NetworkSpec::new()
        .bank("b0", 0)
        .bank("b1", 1)
        .bank("b2", 0)
        .bank("b3", 2)
        .claim("b2", "b3", 4)
        .claim("b1", "b2", 1)
        .claim("b3", "b2", 4)
        .claim("b1", "b0", 4)
        .claim("b0", "b2", 1)
        .claim("b3", "b1", 3)
        .edge_ranking("b1", &["b0", "b2"])
        .edge_ranking("b3", &["b1", "b2"])
        .build()
        .unwrap();
    let [b1, b2, b3] = ["b1", "b2", "b3"].map(|n| net.bank_id(n).unwrap());
    let case = TradeCase { debtor: b1, creditor: b2, buyer: b3 };
    let result = analyze_trade(&net, b1, b2, b3).unwrap();
    assert_eq!(result.interval, ReturnInterval::LeftOpen { lo: int(0), hi: int(1) });
    let (after, positive) = evaluate_trade(&net, &spec(case, ratio(1, 40))).unwrap();
    assert!(positive);
    assert_eq!(after[b2], ratio(41, 40));
    assert_eq!(after[b3], int(3));
}
