//! Range clearing: a clearing state with chosen banks inside intervals, or a
//! witness that none exists.
//!
//! cargo run --example range

use finclear::model::NetworkSpec;
use finclear::rational::{int, ratio};
use finclear::state_space::{solve_range_clearing, InfeasibleReason, RangeOutcome, RangeSpec, RangeTarget};

fn main() {
    let net = NetworkSpec::new()
        .bank("v", 0)
        .bank("w", 0)
        .claim("v", "w", 1)
        .claim("w", "v", 1)
        .build()
        .unwrap();
    let v = net.bank_id("v").unwrap();
    let w = net.bank_id("w").unwrap();

    let specs = [
        ("v in [1/2, 7/10]", vec![RangeTarget { bank: v, lo: ratio(1, 2), hi: ratio(7, 10) }]),
        ("v in [2, 3]", vec![RangeTarget { bank: v, lo: int(2), hi: int(3) }]),
        (
            "v in [1/2, 1], w in [0, 1/4]",
            vec![
                RangeTarget { bank: v, lo: ratio(1, 2), hi: int(1) },
                RangeTarget { bank: w, lo: int(0), hi: ratio(1, 4) },
            ],
        ),
    ];
    for (label, targets) in specs {
        match solve_range_clearing(&net, &RangeSpec { targets }).unwrap() {
            RangeOutcome::Feasible { state, floods } => {
                println!("{label}: v = {}, w = {} after {floods} flood(s)", state[v], state[w]);
            }
            RangeOutcome::Infeasible(witness) => {
                let why = match witness.reason {
                    InfeasibleReason::MinimalExceeds { minimal, hi } => format!("minimal value {minimal} exceeds {hi}"),
                    InfeasibleReason::AboveMaximal { maximal, lo } => format!("maximal value {maximal} is below {lo}"),
                    InfeasibleReason::SinkStuck { value, lo } => format!("stuck at {value} below {lo}"),
                    InfeasibleReason::Conflict { value, lo, blocking, hi } => format!(
                        "stuck at {value} below {lo}: raising it would push {} past {hi}",
                        net.name(blocking)
                    ),
                };
                println!("{label}: infeasible at {}: {why}", net.name(witness.bank));
            }
        }
    }
}
