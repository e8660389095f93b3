//! Command-line front end. Every subcommand prints a [`ResultDocument`] on
//! stdout; diagnostics go to stderr.
//!
//! Exit codes: 0 success, 1 domain-negative result, 2 input or usage error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::clearing::{
    bottom_iterate, bottom_iterate_rounded, check_clearing_state, top_iterate, top_iterate_rounded, Iteration,
};
use crate::io::{parse_network, parse_result, parse_targets, ResultDocument, Value};
use crate::max_clearing::compute_max_clearing_pp_traced;
use crate::min_clearing::compute_min_clearing_traced;
use crate::model::{BankId, FinancialNetwork};
use crate::rational::{parse_exact, Rational};
use crate::state_space::{compute_max_clearing_flood_counted, solve_range_clearing, InfeasibleReason, RangeOutcome};
use crate::trade::{analyze_trade, apply_trade, evaluate_trade, TradeError, TradeSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "finclear", version, about = "Exact clearing of financial networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a network file and print its external assets.
    Validate { file: PathBuf },
    /// Minimal clearing state.
    MinClear { file: PathBuf },
    /// Maximal clearing state.
    MaxClear {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Pp)]
        method: Method,
    },
    /// Clearing state with assets inside per-bank intervals.
    Range {
        file: PathBuf,
        #[arg(long)]
        targets: PathBuf,
    },
    /// Claims trade: optimal creditor-positive return, or evaluate one return.
    Trade {
        file: PathBuf,
        #[arg(long, num_args = 2, value_names = ["DEBTOR", "CREDITOR"])]
        claim: Vec<String>,
        #[arg(long)]
        buyer: String,
        #[arg(long = "return", value_name = "RHO")]
        rho: Option<String>,
    },
    /// Fixed-point iteration of the clearing map.
    Oracle {
        file: PathBuf,
        #[arg(long, value_enum)]
        direction: Direction,
        #[arg(long)]
        steps: usize,
        /// Round iterates onto the grid 2^-B (down from below, up from above),
        /// keeping numbers small over long runs.
        #[arg(long, value_name = "B", default_value_t = 64)]
        grid_bits: u32,
        /// Iterate without rounding. Denominators can grow with every step.
        #[arg(long, conflicts_with = "grid_bits")]
        exact: bool,
    },
    /// Check that the exact assets of a result document form a clearing state.
    Verify {
        file: PathBuf,
        #[arg(long)]
        state: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Method {
    Flood,
    Pp,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Direction {
    Bottom,
    Top,
}

/// What a subcommand produced: a document and its exit code.
struct Output {
    doc: ResultDocument,
    code: i32,
}

impl Output {
    fn ok(doc: ResultDocument) -> Self {
        Output { doc, code: EXIT_OK }
    }

    fn negative(doc: ResultDocument) -> Self {
        Output { doc, code: EXIT_NEGATIVE }
    }
}

/// Failure before a document could be produced.
struct Failure {
    message: String,
    code: i32,
}

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure { message: e.to_string(), code: EXIT_INPUT }
}

/// Runs the CLI and returns the exit code, writing to the process streams.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run_cli_with(argv, &mut out, &mut err)
}

/// Same as [`run_cli`] with explicit output streams.
pub fn run_cli_with<I, T>(argv: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli.command) {
        Ok(output) => {
            let _ = writeln!(out, "{}", output.doc.to_json());
            output.code
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn execute(command: Command) -> Result<Output, Failure> {
    match command {
        Command::Validate { file } => {
            let net = parse_network(&file).map_err(input)?;
            let mut doc = ResultDocument::new("validate");
            doc.assets = external(&net);
            doc.outcome = Some(json!({
                "banks": net.num_banks(),
                "claims": net.num_claims(),
                "default_cost": net.has_default_cost(),
            }));
            Ok(Output::ok(doc))
        }
        Command::MinClear { file } => {
            let net = parse_network(&file).map_err(input)?;
            let run = compute_min_clearing_traced(&net).map_err(input)?;
            let mut doc = ResultDocument::new("min-clear").with_state(&net, &run.state);
            doc.metadata.step_count = Some(run.step_count());
            doc.metadata.flood_count = Some(run.flood_count());
            Ok(Output::ok(doc))
        }
        Command::MaxClear { file, method } => {
            let net = parse_network(&file).map_err(input)?;
            match method {
                Method::Flood => {
                    let (state, floods) = compute_max_clearing_flood_counted(&net).map_err(input)?;
                    let mut doc = ResultDocument::new("max-clear").with_state(&net, &state);
                    doc.metadata.flood_count = Some(floods);
                    doc.outcome = Some(json!({ "method": "flood" }));
                    Ok(Output::ok(doc))
                }
                Method::Pp => {
                    let run = compute_max_clearing_pp_traced(&net).map_err(input)?;
                    let mut doc = ResultDocument::new("max-clear").with_state(&net, &run.state);
                    doc.metadata.step_count = Some(run.iterations());
                    doc.outcome = Some(json!({ "method": "pp" }));
                    Ok(Output::ok(doc))
                }
            }
        }
        Command::Range { file, targets } => {
            let net = parse_network(&file).map_err(input)?;
            let spec = parse_targets(&net, &targets).map_err(input)?;
            match solve_range_clearing(&net, &spec).map_err(input)? {
                RangeOutcome::Feasible { state, floods } => {
                    let mut doc = ResultDocument::new("range").with_state(&net, &state);
                    doc.metadata.flood_count = Some(floods);
                    doc.outcome = Some(json!({ "feasible": true }));
                    Ok(Output::ok(doc))
                }
                RangeOutcome::Infeasible(w) => {
                    let mut doc = ResultDocument::new("range");
                    doc.outcome = Some(json!({
                        "feasible": false,
                        "witness": witness(&net, w.bank, &w.reason),
                    }));
                    Ok(Output::negative(doc))
                }
            }
        }
        Command::Trade { file, claim, buyer, rho } => {
            let net = parse_network(&file).map_err(input)?;
            let id = |name: &str| net.bank_id(name).ok_or_else(|| input(format!("unknown bank {name:?}")));
            let (debtor, creditor, buyer) = (id(&claim[0])?, id(&claim[1])?, id(&buyer)?);
            match rho {
                Some(text) => {
                    let rho = parse_exact(&text).map_err(|e| input(format!("--return: {e}")))?;
                    let spec = TradeSpec { debtor, creditor, buyer, rho: rho.clone() };
                    let (state, positive) = evaluate_trade(&net, &spec).map_err(trade_failure)?;
                    let traded = apply_trade(&net, &spec).map_err(trade_failure)?;
                    let mut doc = ResultDocument::new("trade").with_state(&traded, &state);
                    doc.outcome = Some(json!({
                        "return": Value::new(&rho),
                        "creditor_positive": positive,
                    }));
                    Ok(Output::ok(doc))
                }
                None => {
                    let result = analyze_trade(&net, debtor, creditor, buyer).map_err(trade_failure)?;
                    let (Some(rho_star), Some(state)) = (&result.rho_star, &result.post_state) else {
                        let mut doc = ResultDocument::new("trade");
                        doc.outcome = Some(json!({
                            "rho_min": Value::new(&result.rho_min),
                            "interval": result.interval.to_string(),
                            "creditor_positive": false,
                        }));
                        return Ok(Output::negative(doc));
                    };
                    let spec = TradeSpec { debtor, creditor, buyer, rho: rho_star.clone() };
                    let traded = apply_trade(&net, &spec).map_err(trade_failure)?;
                    let mut doc = ResultDocument::new("trade").with_state(&traded, state);
                    doc.outcome = Some(json!({
                        "rho_min": Value::new(&result.rho_min),
                        "rho_star": Value::new(rho_star),
                        "interval": result.interval.to_string(),
                        "creditor_positive": true,
                    }));
                    Ok(Output::ok(doc))
                }
            }
        }
        Command::Oracle { file, direction, steps, grid_bits, exact } => {
            let net = parse_network(&file).map_err(input)?;
            let grid_bits = (!exact).then_some(grid_bits);
            let it: Iteration = match (direction, grid_bits) {
                (Direction::Bottom, None) => bottom_iterate(&net, steps),
                (Direction::Bottom, Some(b)) => bottom_iterate_rounded(&net, steps, b),
                (Direction::Top, None) => top_iterate(&net, steps).map_err(input)?,
                (Direction::Top, Some(b)) => top_iterate_rounded(&net, steps, b).map_err(input)?,
            };
            let mut doc = ResultDocument::new("oracle").with_state(&net, &it.state);
            doc.metadata.step_count = Some(it.steps);
            doc.outcome = Some(json!({
                "direction": match direction { Direction::Bottom => "bottom", Direction::Top => "top" },
                "converged": it.converged,
                "grid_bits": grid_bits,
            }));
            Ok(if it.converged { Output::ok(doc) } else { Output::negative(doc) })
        }
        Command::Verify { file, state } => {
            let net = parse_network(&file).map_err(input)?;
            let claimed = parse_result(&state).map_err(input)?.state_for(&net).map_err(input)?;
            let report = check_clearing_state(&net, &claimed).map_err(input)?;
            let mut doc = ResultDocument::new("verify").with_state(&net, &claimed);
            let violations: Vec<_> = report
                .violations
                .iter()
                .map(|v| {
                    json!({
                        "bank": net.name(v.bank),
                        "state": Value::new(&v.state_value),
                        "mapped": Value::new(&v.mapped_value),
                    })
                })
                .collect();
            doc.outcome = Some(json!({ "clearing": report.is_clearing(), "violations": violations }));
            Ok(if report.is_clearing() { Output::ok(doc) } else { Output::negative(doc) })
        }
    }
}

fn trade_failure(e: TradeError) -> Failure {
    let code = match e {
        TradeError::NoCreditorPositiveTrade { .. } => EXIT_NEGATIVE,
        _ => EXIT_INPUT,
    };
    Failure { message: e.to_string(), code }
}

fn external(net: &FinancialNetwork) -> Vec<crate::io::BankValue> {
    net.bank_ids()
        .map(|v| crate::io::BankValue { bank: net.name(v).into(), value: Value::new(&net.bank(v).external_assets) })
        .collect()
}

fn witness(net: &FinancialNetwork, bank: BankId, reason: &InfeasibleReason) -> serde_json::Value {
    let v = |x: &Rational| Value::new(x);
    let (kind, details) = match reason {
        InfeasibleReason::MinimalExceeds { minimal, hi } => {
            ("minimal_exceeds", json!({ "minimal": v(minimal), "hi": v(hi) }))
        }
        InfeasibleReason::AboveMaximal { maximal, lo } => {
            ("above_maximal", json!({ "maximal": v(maximal), "lo": v(lo) }))
        }
        InfeasibleReason::SinkStuck { value, lo } => ("sink_stuck", json!({ "value": v(value), "lo": v(lo) })),
        InfeasibleReason::Conflict { value, lo, blocking, hi } => (
            "conflict",
            json!({ "value": v(value), "lo": v(lo), "blocking": net.name(*blocking), "hi": v(hi) }),
        ),
    };
    json!({ "bank": net.name(bank), "reason": kind, "details": details })
}
