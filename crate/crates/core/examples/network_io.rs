//! Reading network documents and writing result documents, as the
//! `finclear` command does.
//!
//! cargo run --example network_io [network.json]

use finclear::io::{network_to_json, parse_network, ResultDocument};
use finclear::min_clearing::compute_min_clearing_traced;

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/piecewise.json").into());
    let net = match parse_network(&path) {
        Ok(net) => net,
        Err(e) => {
            eprintln!("{path}: {e}");
            std::process::exit(2);
        }
    };
    println!("{} banks, {} claims", net.num_banks(), net.num_claims());

    let run = compute_min_clearing_traced(&net).unwrap();
    let mut doc = ResultDocument::new("min-clear").with_state(&net, &run.state);
    doc.metadata.step_count = Some(run.step_count());
    doc.metadata.flood_count = Some(run.flood_count());
    println!("{}", doc.to_json());

    // the network serializes back to an equivalent document
    println!("{}", network_to_json(&net).unwrap());
}
