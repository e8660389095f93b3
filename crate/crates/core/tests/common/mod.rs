//! Seeded random networks shared by the integration tests.
#![allow(dead_code)]

use finclear::model::{FinancialNetwork, NetworkSpec, SchemeKind, SchemeSpec};
use finclear::rational::{int, ratio, Rational};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub enum Schemes {
    /// Proportional only; payments strictly increase below the total liability.
    Proportional,
    /// Proportional, edge-ranking and priority-proportional mixed.
    Mixed,
}

#[derive(Clone, Copy, Debug)]
pub struct Params {
    pub banks: usize,
    pub claims: usize,
    pub max_liability: i64,
    pub max_external: i64,
    /// Probability that a bank has no external assets.
    pub zero_external: f64,
    pub schemes: Schemes,
    pub default_costs: bool,
}

impl Params {
    pub fn small(schemes: Schemes) -> Self {
        Params {
            banks: 6,
            claims: 12,
            max_liability: 10,
            max_external: 6,
            zero_external: 0.5,
            schemes,
            default_costs: false,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn name(i: usize) -> String {
    format!("b{i}")
}

/// Random network: between 2 and `banks` banks, at most `claims` claims.
pub fn random_network(seed: u64, p: Params) -> FinancialNetwork {
    random_spec(seed, p).build().expect("generated networks are valid")
}

pub fn random_spec(seed: u64, p: Params) -> NetworkSpec {
    let mut rng = rng(seed);
    let n = rng.gen_range(2..=p.banks);
    let m = rng.gen_range(1..=p.claims.min(n * (n - 1)));
    build_spec(&mut rng, n, m, p)
}

/// Network with exactly `n` banks and `m` claims.
pub fn sized_network(seed: u64, n: usize, m: usize, p: Params) -> FinancialNetwork {
    build_spec(&mut rng(seed), n, m, p).build().expect("generated networks are valid")
}

fn build_spec(rng: &mut ChaCha8Rng, n: usize, m: usize, p: Params) -> NetworkSpec {
    let rates = [ratio(1, 2), ratio(3, 4), int(1)];
    let mut spec = NetworkSpec::new();
    for i in 0..n {
        let ext = if rng.gen_bool(p.zero_external) { 0 } else { rng.gen_range(1..=p.max_external) };
        if p.default_costs {
            let a = rates.choose(rng).unwrap().clone();
            let b = rates.choose(rng).unwrap().clone();
            spec = spec.bank_with_costs(&name(i), ext, a, b);
        } else {
            spec = spec.bank(&name(i), ext);
        }
    }
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v))).collect();
    pairs.shuffle(rng);
    pairs.truncate(m);
    for &(u, v) in &pairs {
        spec = spec.claim(&name(u), &name(v), rng.gen_range(1..=p.max_liability));
    }
    if let Schemes::Mixed = p.schemes {
        for u in 0..n {
            let mut creditors: Vec<String> = pairs.iter().filter(|(d, _)| *d == u).map(|(_, c)| name(*c)).collect();
            if creditors.len() < 2 {
                continue;
            }
            creditors.shuffle(rng);
            let kind = match rng.gen_range(0..3) {
                0 => continue,
                1 => SchemeKind::EdgeRanking { order: creditors },
                _ => {
                    let mut classes: Vec<Vec<String>> = Vec::new();
                    for c in creditors {
                        match classes.last_mut() {
                            Some(last) if rng.gen_bool(0.5) => last.push(c),
                            _ => classes.push(vec![c]),
                        }
                    }
                    SchemeKind::PriorityProportional { classes }
                }
            };
            spec.schemes.push(SchemeSpec { bank: name(u), kind });
        }
    }
    spec
}

/// Sum of external assets and incoming liabilities; an upper bound for any
/// clearing state.
pub fn top(net: &FinancialNetwork) -> Vec<Rational> {
    finclear::clearing::lattice_top(net).unwrap().assets().to_vec()
}

/// Iterates the clearing map downwards from the lattice top, rounding every
/// iterate up to a dyadic grid so the numbers stay small. Every iterate
/// stays above the maximal clearing state, also with default costs.
pub fn rounded_top_iterate(net: &FinancialNetwork, steps: usize, bits: u32) -> Vec<Rational> {
    use finclear::clearing::{phi, ClearingState};
    use finclear::rational::ceil_to_grid;
    let mut x = top(net);
    for _ in 0..steps {
        let next = phi(net, &ClearingState::new(x.clone())).unwrap();
        let next: Vec<Rational> = next.assets().iter().zip(&x).map(|(a, old)| ceil_to_grid(a, bits).min(old.clone())).collect();
        if next == x {
            break;
        }
        x = next;
    }
    x
}

/// Exact feasibility oracle for range clearing without default cost.
///
/// Splits each bank's asset axis at the borders of all its outgoing payment
/// functions. On a product of closed cells every payment is affine, so the
/// clearing states inside it form a polyhedron; the clearing states of the
/// network are the union of these polyhedra. Returns a witness point.
pub fn range_by_cells(
    net: &FinancialNetwork,
    bounds: &[Option<(Rational, Rational)>],
) -> Option<Vec<Rational>> {
    use finclear::linalg::{simplex_solve, LinearProgram, Relation, Sense};
    use finclear::model::BankId;

    let n = net.num_banks();
    let upper = top(net);
    let cells: Vec<Vec<(Rational, Rational)>> = net
        .bank_ids()
        .map(|v| {
            let mut grid = vec![int(0)];
            for &e in net.out_claims(v) {
                grid.extend(net.claim(e).payment.borders().iter().cloned());
            }
            grid.push(upper[v.0].clone());
            grid.sort();
            grid.dedup();
            grid.retain(|x| x <= &upper[v.0]);
            if grid.len() == 1 {
                return vec![(grid[0].clone(), grid[0].clone())];
            }
            grid.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect()
        })
        .collect();

    let mut choice = vec![0usize; n];
    loop {
        let mut lp = LinearProgram::new(Sense::Minimize, vec![int(0); n]);
        for v in 0..n {
            let (lo, hi) = &cells[v][choice[v]];
            let mut unit = vec![int(0); n];
            unit[v] = int(1);
            lp.constrain(unit.clone(), Relation::Ge, lo.clone());
            lp.constrain(unit.clone(), Relation::Le, hi.clone());
            if let Some((a, b)) = &bounds[v] {
                lp.constrain(unit.clone(), Relation::Ge, a.clone());
                lp.constrain(unit, Relation::Le, b.clone());
            }
            // x_v - sum over in-claims of (p_e(lo_u) + slope_e (x_u - lo_u)) = ext_v
            let mut row = vec![int(0); n];
            row[v] = int(1);
            let mut rhs = net.bank(BankId(v)).external_assets.clone();
            for &e in net.in_claims(BankId(v)) {
                let claim = net.claim(e);
                let u = claim.debtor.0;
                let (lo_u, hi_u) = &cells[u][choice[u]];
                let slope = if lo_u == hi_u { int(0) } else { claim.payment.slope_at(lo_u).clone() };
                row[u] -= &slope;
                rhs += claim.payment.eval(lo_u) - &slope * lo_u;
            }
            lp.constrain(row, Relation::Eq, rhs);
        }
        if let Ok(sol) = simplex_solve(&lp) {
            return Some(sol.x);
        }
        let mut i = 0;
        loop {
            if i == n {
                return None;
            }
            choice[i] += 1;
            if choice[i] < cells[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Random partial flood sequence from `start`: up to `steps` floods of a
/// random non-singleton sink component by a random fraction.
pub fn random_flood_walk(
    net: &FinancialNetwork,
    start: &finclear::clearing::ClearingState,
    rng: &mut ChaCha8Rng,
    steps: usize,
) -> finclear::clearing::ClearingState {
    use finclear::graph::{active_graph, condense, flood_components};
    use finclear::state_space::{apply_flood_sequence, FloodRequest};

    let fractions = [ratio(1, 4), ratio(1, 2), ratio(3, 4), int(1)];
    let mut state = start.clone();
    for _ in 0..steps {
        let c = condense(&active_graph(net, &state));
        let Some(&k) = flood_components(&c).choose(rng) else { break };
        let bank = *c.component(k).choose(rng).unwrap();
        let fraction = fractions.choose(rng).unwrap().clone();
        state = apply_flood_sequence(net, &state, &[FloodRequest { bank, fraction }]).unwrap();
    }
    state
}

/// Target bounds around a known clearing state (feasible by construction)
/// or drawn at random (feasibility unknown).
pub fn random_targets(
    net: &FinancialNetwork,
    witness: &[Rational],
    rng: &mut ChaCha8Rng,
    around_witness: bool,
) -> Vec<Option<(Rational, Rational)>> {
    let upper = top(net);
    let widths = [int(0), ratio(1, 4), ratio(1, 2), int(1)];
    let zero = int(0);
    net.bank_ids()
        .map(|v| {
            if !rng.gen_bool(0.6) {
                return None;
            }
            if around_witness {
                let lo = (&witness[v.0] - widths.choose(rng).unwrap()).max(zero.clone());
                let hi = &witness[v.0] + widths.choose(rng).unwrap();
                Some((lo, hi))
            } else {
                let quarters = (&upper[v.0] * int(4)).to_integer();
                let q: i64 = quarters.try_into().unwrap_or(i64::MAX);
                let lo = ratio(rng.gen_range(0..=q.max(0)), 4);
                let hi = &lo + widths.choose(rng).unwrap();
                Some((lo, hi))
            }
        })
        .collect()
}

pub fn range_spec(bounds: &[Option<(Rational, Rational)>]) -> finclear::state_space::RangeSpec {
    use finclear::model::BankId;
    use finclear::state_space::{RangeSpec, RangeTarget};
    RangeSpec {
        targets: bounds
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.as_ref().map(|(lo, hi)| RangeTarget { bank: BankId(i), lo: lo.clone(), hi: hi.clone() }))
            .collect(),
    }
}

/// Small networks for the exhaustive range oracle.
pub fn range_params() -> Params {
    Params {
        banks: 4,
        claims: 7,
        max_liability: 4,
        max_external: 3,
        zero_external: 0.6,
        schemes: Schemes::Mixed,
        default_costs: false,
    }
}

/// A claim `(debtor, creditor)` and a buyer that may take it over.
#[derive(Clone, Copy, Debug)]
pub struct TradeCase {
    pub debtor: finclear::model::BankId,
    pub creditor: finclear::model::BankId,
    pub buyer: finclear::model::BankId,
}

/// Every valid (claim, buyer) pair of `net`.
pub fn trade_cases(net: &FinancialNetwork) -> Vec<TradeCase> {
    let mut out = Vec::new();
    for c in net.claims() {
        for buyer in net.bank_ids() {
            if buyer != c.debtor && buyer != c.creditor && net.find_claim(c.debtor, buyer).is_none() {
                out.push(TradeCase { debtor: c.debtor, creditor: c.creditor, buyer });
            }
        }
    }
    out
}

/// One random trade case on a random network, for networks that have one.
pub fn random_trade(seed: u64, p: Params) -> Option<(FinancialNetwork, TradeCase)> {
    let net = random_network(seed, p);
    let cases = trade_cases(&net);
    let case = *cases.choose(&mut rng(seed ^ 0x7ade))?;
    Some((net, case))
}

pub fn trade_params() -> Params {
    Params {
        banks: 5,
        claims: 8,
        max_liability: 4,
        max_external: 4,
        zero_external: 0.4,
        schemes: Schemes::Mixed,
        default_costs: false,
    }
}

/// Largest multiple of `1/steps` in `(rho_min, cap]` whose trade is
/// creditor-positive, by exhaustive evaluation.
pub fn grid_best_return(net: &FinancialNetwork, case: TradeCase, rho_min: &Rational, cap: &Rational, steps: i64) -> Option<Rational> {
    use finclear::trade::{evaluate_trade, TradeSpec};
    let hi = (cap * int(steps)).floor().to_integer();
    let lo = (rho_min * int(steps)).floor().to_integer();
    let hi: i64 = hi.try_into().unwrap();
    let lo: i64 = lo.try_into().unwrap();
    let mut best = None;
    for k in (lo..=hi).rev() {
        let rho = ratio(k, steps);
        if &rho <= rho_min {
            break;
        }
        let spec = TradeSpec { debtor: case.debtor, creditor: case.creditor, buyer: case.buyer, rho: rho.clone() };
        if evaluate_trade(net, &spec).unwrap().1 {
            best = Some(rho);
            break;
        }
    }
    best
}
