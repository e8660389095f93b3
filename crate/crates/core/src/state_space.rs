//! Clearing states above the minimum: flood sequences, the maximal state by
//! greedy flooding, and range clearing.

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::clearing::{check_clearing_state, ClearingState};
use crate::graph::{condense, flood_components, reachable_mask, ActiveGraph};
use crate::min_clearing::{compute_min_clearing, flood_in, FloodStep, MinClearingError};
use crate::model::{BankId, FinancialNetwork};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateSpaceError {
    #[error("networks with default cost are not supported here")]
    DefaultCostUnsupported,
    #[error("start state is not a clearing state")]
    NotAClearingState,
    #[error("bank {0} is not in a non-singleton sink component of the active graph")]
    NotASinkComponent(BankId),
    #[error("flood fraction {0} is outside [0, 1]")]
    InvalidFraction(Rational),
    #[error("invalid range specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Algorithm(#[from] MinClearingError),
}

fn require_no_default_cost(net: &FinancialNetwork) -> Result<(), StateSpaceError> {
    if net.has_default_cost() {
        Err(StateSpaceError::DefaultCostUnsupported)
    } else {
        Ok(())
    }
}

/// One step of a flood sequence: flood the component containing `bank` by
/// `fraction` of the largest feasible multiple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FloodRequest {
    pub bank: BankId,
    pub fraction: Rational,
}

fn apply(assets: &mut [Rational], step: &FloodStep, scale: &Rational) {
    for (u, d) in step.component.iter().zip(&step.direction) {
        assets[u.0] += scale * d;
    }
}

fn graph(net: &FinancialNetwork, assets: &[Rational]) -> ActiveGraph {
    ActiveGraph::build_filtered(net, assets, |_| false)
}

/// Applies partial or full floods one after another. Every intermediate
/// state is a clearing state.
pub fn apply_flood_sequence(
    net: &FinancialNetwork,
    start: &ClearingState,
    steps: &[FloodRequest],
) -> Result<ClearingState, StateSpaceError> {
    require_no_default_cost(net)?;
    let report = check_clearing_state(net, start).map_err(|_| StateSpaceError::NotAClearingState)?;
    if !report.is_clearing() {
        return Err(StateSpaceError::NotAClearingState);
    }
    let mut assets = start.assets().to_vec();
    for req in steps {
        if req.fraction.is_negative() || req.fraction > Rational::one() {
            return Err(StateSpaceError::InvalidFraction(req.fraction.clone()));
        }
        if req.bank.0 >= net.num_banks() {
            return Err(StateSpaceError::NotASinkComponent(req.bank));
        }
        let g = graph(net, &assets);
        let c = condense(&g);
        let k = c.component_of(req.bank);
        if !c.is_sink(k) || c.is_singleton(k) {
            return Err(StateSpaceError::NotASinkComponent(req.bank));
        }
        let step = flood_in(net, &assets, &g, c.component(k))?;
        apply(&mut assets, &step, &(&step.scale * &req.fraction));
    }
    Ok(ClearingState::new(assets))
}

/// Floods every non-singleton sink component to saturation, starting from
/// `start`. Returns the final state and the number of floods.
pub(crate) fn saturate(
    net: &FinancialNetwork,
    start: Vec<Rational>,
) -> Result<(Vec<Rational>, usize), MinClearingError> {
    let mut assets = start;
    let mut floods = 0;
    loop {
        let g = graph(net, &assets);
        let c = condense(&g);
        let Some(&k) = flood_components(&c).first() else { return Ok((assets, floods)) };
        let step = flood_in(net, &assets, &g, c.component(k))?;
        apply(&mut assets, &step, &step.scale);
        floods += 1;
    }
}

/// Floods the non-singleton sink components reachable from `v` until none
/// is left, except the component of `keep`.
pub(crate) fn saturate_from(
    net: &FinancialNetwork,
    assets: &mut [Rational],
    v: BankId,
    keep: Option<BankId>,
) -> Result<usize, MinClearingError> {
    let mut floods = 0;
    loop {
        let g = graph(net, assets);
        let c = condense(&g);
        let reach = reachable_mask(&g, v);
        let skip = keep.map(|w| c.component_of(w));
        let Some(k) = flood_components(&c)
            .into_iter()
            .find(|&k| Some(k) != skip && c.component(k).iter().any(|b| reach[b.0]))
        else {
            return Ok(floods);
        };
        let step = flood_in(net, assets, &g, c.component(k))?;
        apply(assets, &step, &step.scale);
        floods += 1;
    }
}

/// Maximal clearing state: the minimal state flooded greedily until no
/// non-singleton sink component remains.
pub fn compute_max_clearing_flood(net: &FinancialNetwork) -> Result<ClearingState, StateSpaceError> {
    Ok(compute_max_clearing_flood_counted(net)?.0)
}

/// Same as [`compute_max_clearing_flood`], also returning the flood count.
pub fn compute_max_clearing_flood_counted(
    net: &FinancialNetwork,
) -> Result<(ClearingState, usize), StateSpaceError> {
    require_no_default_cost(net)?;
    let min = compute_min_clearing(net);
    let (assets, floods) = saturate(net, min.into_assets())?;
    Ok((ClearingState::new(assets), floods))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangeTarget {
    pub bank: BankId,
    pub lo: Rational,
    pub hi: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RangeSpec {
    pub targets: Vec<RangeTarget>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InfeasibleReason {
    /// Already the minimal clearing state puts the bank above its interval.
    MinimalExceeds { minimal: Rational, hi: Rational },
    /// Even the maximal clearing state leaves the bank below its interval.
    AboveMaximal { maximal: Rational, lo: Rational },
    /// The bank's assets cannot grow any further in a clearing state.
    SinkStuck { value: Rational, lo: Rational },
    /// Raising the bank would push `blocking` above its interval.
    Conflict { value: Rational, lo: Rational, blocking: BankId, hi: Rational },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangeWitness {
    pub bank: BankId,
    pub reason: InfeasibleReason,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RangeOutcome {
    Feasible { state: ClearingState, floods: usize },
    Infeasible(RangeWitness),
}

fn validate_spec(net: &FinancialNetwork, spec: &RangeSpec) -> Result<Vec<Option<(Rational, Rational)>>, StateSpaceError> {
    let mut bounds = vec![None; net.num_banks()];
    for t in &spec.targets {
        let slot = bounds
            .get_mut(t.bank.0)
            .ok_or_else(|| StateSpaceError::InvalidSpec(format!("unknown bank {}", t.bank)))?;
        let name = net.name(t.bank);
        if slot.is_some() {
            return Err(StateSpaceError::InvalidSpec(format!("bank {name:?} is targeted twice")));
        }
        if t.lo.is_negative() || t.lo > t.hi {
            return Err(StateSpaceError::InvalidSpec(format!(
                "interval [{}, {}] of bank {name:?} is empty or negative",
                t.lo, t.hi
            )));
        }
        *slot = Some((t.lo.clone(), t.hi.clone()));
    }
    Ok(bounds)
}

/// Largest scale `<= step.scale` that keeps every targeted bank of the
/// component at or below its upper bound, and `v` (if given) at or below
/// its lower bound. Returns the scale and the blocking bank, if an upper
/// bound was the binding term.
fn capped_scale(
    step: &FloodStep,
    assets: &[Rational],
    bounds: &[Option<(Rational, Rational)>],
    raise: Option<BankId>,
) -> (Rational, Option<BankId>) {
    let mut scale = step.scale.clone();
    let mut blocking = None;
    for (u, d) in step.component.iter().zip(&step.direction) {
        if !d.is_positive() {
            continue;
        }
        let Some((lo, hi)) = &bounds[u.0] else { continue };
        let room = (hi - &assets[u.0]) / d;
        if room < scale {
            scale = room;
            blocking = Some(*u);
        }
        if Some(*u) == raise {
            let need = (lo - &assets[u.0]) / d;
            if need < scale {
                scale = need;
                blocking = None;
            }
        }
    }
    (scale, blocking)
}

/// Searches for a clearing state with every targeted bank inside its
/// interval. Starts at the minimal state and repeatedly raises the
/// smallest-id bank below its interval by flooding its component, stopping
/// at the lower endpoint. When that component cannot be flooded, sink
/// components downstream of the bank are flooded (never past an upper
/// bound), since they can activate claims back into it.
pub fn solve_range_clearing(net: &FinancialNetwork, spec: &RangeSpec) -> Result<RangeOutcome, StateSpaceError> {
    require_no_default_cost(net)?;
    let bounds = validate_spec(net, spec)?;
    let min = compute_min_clearing(net);
    for t in &spec.targets {
        if min[t.bank] > t.hi {
            return Ok(RangeOutcome::Infeasible(RangeWitness {
                bank: t.bank,
                reason: InfeasibleReason::MinimalExceeds { minimal: min[t.bank].clone(), hi: t.hi.clone() },
            }));
        }
    }
    let (max, _) = saturate(net, min.assets().to_vec())?;
    for t in &spec.targets {
        if t.lo > max[t.bank.0] {
            return Ok(RangeOutcome::Infeasible(RangeWitness {
                bank: t.bank,
                reason: InfeasibleReason::AboveMaximal { maximal: max[t.bank.0].clone(), lo: t.lo.clone() },
            }));
        }
    }

    let mut assets = min.into_assets();
    let mut floods = 0;
    loop {
        let below = net.bank_ids().find(|v| matches!(&bounds[v.0], Some((lo, _)) if assets[v.0] < *lo));
        let Some(v) = below else {
            return Ok(RangeOutcome::Feasible { state: ClearingState::new(assets), floods });
        };
        let (lo, _) = bounds[v.0].clone().unwrap();
        let g = graph(net, &assets);
        let c = condense(&g);
        let k = c.component_of(v);
        if c.is_sink(k) && !c.is_singleton(k) {
            let step = flood_in(net, &assets, &g, c.component(k))?;
            let (scale, blocking) = capped_scale(&step, &assets, &bounds, Some(v));
            if scale.is_zero() {
                let w = blocking.expect("only an upper bound can stop a flood at zero");
                return Ok(RangeOutcome::Infeasible(RangeWitness {
                    bank: v,
                    reason: InfeasibleReason::Conflict {
                        value: assets[v.0].clone(),
                        lo,
                        blocking: w,
                        hi: bounds[w.0].clone().unwrap().1,
                    },
                }));
            }
            apply(&mut assets, &step, &scale);
            floods += 1;
            continue;
        }
        // v cannot be raised directly; try sink components downstream.
        let reach = reachable_mask(&g, v);
        let mut progressed = false;
        let mut blocked = None;
        for sink in flood_components(&c) {
            if !reach[c.component(sink)[0].0] {
                continue;
            }
            let step = flood_in(net, &assets, &g, c.component(sink))?;
            let (scale, blocking) = capped_scale(&step, &assets, &bounds, None);
            if scale.is_positive() {
                apply(&mut assets, &step, &scale);
                floods += 1;
                progressed = true;
                break;
            }
            blocked = blocked.or(blocking);
        }
        if !progressed {
            let reason = match blocked {
                Some(w) => InfeasibleReason::Conflict {
                    value: assets[v.0].clone(),
                    lo,
                    blocking: w,
                    hi: bounds[w.0].clone().unwrap().1,
                },
                None => InfeasibleReason::SinkStuck { value: assets[v.0].clone(), lo },
            };
            return Ok(RangeOutcome::Infeasible(RangeWitness { bank: v, reason }));
        }
    }
}
