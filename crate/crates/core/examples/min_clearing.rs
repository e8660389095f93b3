//! Minimal clearing state of a small network, with the algorithm's trace.
//!
//! cargo run --example min_clearing

use finclear::min_clearing::{compute_min_clearing_traced, TraceEvent};
use finclear::model::NetworkSpec;

fn main() {
    // v pays w before y; y owes everything back to v
    let net = NetworkSpec::new()
        .bank("u", 1)
        .bank("v", 2)
        .bank("w", 0)
        .bank("y", 0)
        .claim("u", "v", 2)
        .claim("v", "w", 2)
        .claim("v", "y", 2)
        .claim("y", "v", 2)
        .edge_ranking("v", &["w", "y"])
        .build()
        .expect("valid network");

    let run = compute_min_clearing_traced(&net).expect("no internal error");
    for event in &run.trace {
        match event {
            TraceEvent::Increase(step) => {
                println!("increase from {} by {}", net.name(step.source), step.delta);
            }
            TraceEvent::Flood(step) => {
                let names: Vec<_> = step.component.iter().map(|&v| net.name(v)).collect();
                let dir: Vec<_> = step.direction.iter().map(ToString::to_string).collect();
                println!("flood {{{}}} by {} along ({})", names.join(", "), step.scale, dir.join(", "));
            }
            TraceEvent::Rewire(v) => println!("{} became solvent", net.name(*v)),
        }
    }
    for v in net.bank_ids() {
        println!("{}: {}", net.name(v), run.state[v]);
    }
    println!("{} steps (bound {})", run.step_count(), run.step_bound());
}
