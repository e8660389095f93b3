//! The clearing map, fixed-point verification and the iteration oracles.

use std::ops::Index;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::model::{BankId, ClaimId, FinancialNetwork, Liability};
use crate::rational::{ceil_to_grid, floor_to_grid, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClearingError {
    #[error("state has {got} coordinates, network has {expected} banks")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown bank index {0}")]
    UnknownBankId(usize),
    #[error("top iteration needs a network without default cost")]
    DefaultCostUnsupported,
    #[error("top iteration needs finite liabilities")]
    UnboundedLattice,
}

/// Asset vector indexed by bank. Payments are always derived from it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ClearingState {
    assets: Vec<Rational>,
}

impl ClearingState {
    pub fn new(assets: Vec<Rational>) -> Self {
        Self { assets }
    }

    pub fn zeros(n: usize) -> Self {
        Self { assets: vec![Rational::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn assets(&self) -> &[Rational] {
        &self.assets
    }

    pub fn into_assets(self) -> Vec<Rational> {
        self.assets
    }

    pub fn asset(&self, v: BankId) -> &Rational {
        &self.assets[v.0]
    }

    /// `p_e(a_u)` for claim `e = (u, w)`.
    pub fn payment(&self, net: &FinancialNetwork, e: ClaimId) -> Rational {
        let c = net.claim(e);
        c.payment.eval(&self.assets[c.debtor.0])
    }

    pub fn payments(&self, net: &FinancialNetwork) -> Vec<Rational> {
        (0..net.num_claims()).map(|i| self.payment(net, ClaimId(i))).collect()
    }

    /// Coordinate-wise `self >= other`.
    pub fn dominates(&self, other: &ClearingState) -> bool {
        self.assets.len() == other.assets.len()
            && self.assets.iter().zip(&other.assets).all(|(a, b)| a >= b)
    }
}

impl Index<BankId> for ClearingState {
    type Output = Rational;

    fn index(&self, v: BankId) -> &Rational {
        &self.assets[v.0]
    }
}

fn check(net: &FinancialNetwork, state: &ClearingState) -> Result<(), ClearingError> {
    if state.len() != net.num_banks() {
        return Err(ClearingError::DimensionMismatch { expected: net.num_banks(), got: state.len() });
    }
    Ok(())
}

fn check_bank(net: &FinancialNetwork, v: BankId) -> Result<(), ClearingError> {
    if v.0 >= net.num_banks() {
        return Err(ClearingError::UnknownBankId(v.0));
    }
    Ok(())
}

pub(crate) fn inflow(net: &FinancialNetwork, assets: &[Rational], v: BankId) -> Rational {
    net.in_claims(v)
        .iter()
        .map(|&e| {
            let c = net.claim(e);
            c.payment.eval(&assets[c.debtor.0])
        })
        .sum()
}

/// `a^x_v + sum of payments into v`.
pub fn incoming_assets(
    net: &FinancialNetwork,
    state: &ClearingState,
    v: BankId,
) -> Result<Rational, ClearingError> {
    check(net, state)?;
    check_bank(net, v)?;
    Ok(&net.bank(v).external_assets + inflow(net, state.assets(), v))
}

/// `alpha_v a^x_v + beta_v * (sum of payments into v)`.
pub fn reduced_assets(
    net: &FinancialNetwork,
    state: &ClearingState,
    v: BankId,
) -> Result<Rational, ClearingError> {
    check(net, state)?;
    check_bank(net, v)?;
    let b = net.bank(v);
    Ok(&b.alpha * &b.external_assets + &b.beta * inflow(net, state.assets(), v))
}

/// One coordinate of the clearing map for arbitrary external assets.
pub(crate) fn phi_coord(
    net: &FinancialNetwork,
    external: &[Rational],
    assets: &[Rational],
    v: BankId,
) -> Rational {
    let b = net.bank(v);
    let flow = inflow(net, assets, v);
    let incoming = &external[v.0] + &flow;
    if solvent(net.out_liability(v), &incoming) {
        incoming
    } else {
        &b.alpha * &external[v.0] + &b.beta * flow
    }
}

fn solvent(out: &Liability, incoming: &Rational) -> bool {
    out.is_covered_by(incoming)
}

/// Clearing map with external assets replaced by `external`.
pub fn phi_with_external(
    net: &FinancialNetwork,
    external: &[Rational],
    state: &ClearingState,
) -> ClearingState {
    let assets = net.bank_ids().map(|v| phi_coord(net, external, state.assets(), v)).collect();
    ClearingState::new(assets)
}

fn external_assets(net: &FinancialNetwork) -> Vec<Rational> {
    net.banks().iter().map(|b| b.external_assets.clone()).collect()
}

/// The clearing map: solvent banks keep their incoming assets, insolvent
/// banks are cut down to their reduced assets.
pub fn phi(net: &FinancialNetwork, state: &ClearingState) -> Result<ClearingState, ClearingError> {
    check(net, state)?;
    Ok(phi_with_external(net, &external_assets(net), state))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub bank: BankId,
    pub state_value: Rational,
    pub mapped_value: Rational,
}

/// Result of a fixed-point check; empty `violations` means clearing state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClearingReport {
    pub violations: Vec<Violation>,
}

impl ClearingReport {
    pub fn is_clearing(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_clearing_state(
    net: &FinancialNetwork,
    state: &ClearingState,
) -> Result<ClearingReport, ClearingError> {
    check_clearing_state_with_external(net, &external_assets(net), state)
}

pub fn check_clearing_state_with_external(
    net: &FinancialNetwork,
    external: &[Rational],
    state: &ClearingState,
) -> Result<ClearingReport, ClearingError> {
    check(net, state)?;
    let mapped = phi_with_external(net, external, state);
    let violations = net
        .bank_ids()
        .filter(|&v| mapped[v] != state[v])
        .map(|v| Violation { bank: v, state_value: state[v].clone(), mapped_value: mapped[v].clone() })
        .collect();
    Ok(ClearingReport { violations })
}

/// `true` iff `phi(state) == state` exactly. Dimension mismatches are `false`.
pub fn is_clearing_state(net: &FinancialNetwork, state: &ClearingState) -> bool {
    check_clearing_state(net, state).map(|r| r.is_clearing()).unwrap_or(false)
}

/// Outcome of an iteration oracle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Iteration {
    pub state: ClearingState,
    /// The returned state is an exact fixed point of the clearing map.
    pub converged: bool,
    /// Number of map applications performed.
    pub steps: usize,
}

/// Bottom iteration `a^{i+1} = phi(a^i)` from the zero vector. Stops early
/// once an exact fixed point is reached.
pub fn bottom_iterate(net: &FinancialNetwork, max_steps: usize) -> Iteration {
    iterate(net, ClearingState::zeros(net.num_banks()), max_steps, |s| s)
}

/// Bottom iteration with every iterate rounded down onto the grid `2^-bits`.
/// Iterates stay below the minimal clearing state and keep increasing, so
/// this is a cheap lower bound for long runs. Stops when the rounded map
/// becomes stationary.
pub fn bottom_iterate_rounded(net: &FinancialNetwork, max_steps: usize, bits: u32) -> Iteration {
    iterate(net, ClearingState::zeros(net.num_banks()), max_steps, |s| {
        ClearingState::new(s.assets.iter().map(|a| floor_to_grid(a, bits)).collect())
    })
}

/// Upper end of the lattice, `a^x_v + L^-(v)`.
pub fn lattice_top(net: &FinancialNetwork) -> Result<ClearingState, ClearingError> {
    let mut top = Vec::with_capacity(net.num_banks());
    for v in net.bank_ids() {
        match net.in_liability(v) {
            Liability::Finite(l) => top.push(&net.bank(v).external_assets + l),
            Liability::Unbounded => return Err(ClearingError::UnboundedLattice),
        }
    }
    Ok(ClearingState::new(top))
}

/// Top iteration from the lattice top. Only meaningful without default cost,
/// where the clearing map is continuous; other networks are rejected.
pub fn top_iterate(net: &FinancialNetwork, max_steps: usize) -> Result<Iteration, ClearingError> {
    let top = top_start(net)?;
    Ok(iterate(net, top, max_steps, |s| s))
}

/// Top iteration with iterates rounded up onto the grid `2^-bits` (and
/// clamped to the lattice top), an upper bound on the maximal clearing state.
pub fn top_iterate_rounded(
    net: &FinancialNetwork,
    max_steps: usize,
    bits: u32,
) -> Result<Iteration, ClearingError> {
    let top = top_start(net)?;
    let cap = top.clone();
    Ok(iterate(net, top, max_steps, move |s| {
        let assets = s
            .assets
            .iter()
            .zip(cap.assets())
            .map(|(a, t)| {
                let up = ceil_to_grid(a, bits);
                if &up > t {
                    t.clone()
                } else {
                    up
                }
            })
            .collect();
        ClearingState::new(assets)
    }))
}

fn top_start(net: &FinancialNetwork) -> Result<ClearingState, ClearingError> {
    if net.has_default_cost() {
        return Err(ClearingError::DefaultCostUnsupported);
    }
    lattice_top(net)
}

fn iterate(
    net: &FinancialNetwork,
    start: ClearingState,
    max_steps: usize,
    round: impl Fn(ClearingState) -> ClearingState,
) -> Iteration {
    let external = external_assets(net);
    let mut state = start;
    let mut steps = 0;
    while steps < max_steps {
        let next = round(phi_with_external(net, &external, &state));
        steps += 1;
        if next == state {
            break;
        }
        state = next;
    }
    let converged = phi_with_external(net, &external, &state) == state;
    Iteration { state, converged, steps }
}

/// Largest coordinate-wise gap `max_v |a_v - b_v|`.
pub fn max_gap(a: &ClearingState, b: &ClearingState) -> Rational {
    a.assets()
        .iter()
        .zip(b.assets())
        .map(|(x, y)| (x - y).abs())
        .max()
        .unwrap_or_else(Rational::zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetworkSpec;
    use crate::rational::{int, ratio};

    fn example1() -> FinancialNetwork {
        NetworkSpec::new()
            .bank("u", 1)
            .bank("v", 0)
            .bank("w", 0)
            .claim("u", "w", 1)
            .claim("w", "u", 1)
            .claim("u", "v", 1)
            .build()
            .unwrap()
    }

    fn example2() -> FinancialNetwork {
        NetworkSpec::new()
            .bank_with_costs("v", 1, (1, 2), (1, 2))
            .bank_with_costs("w", 1, (1, 2), (1, 2))
            .claim("v", "w", 2)
            .claim("w", "v", 2)
            .build()
            .unwrap()
    }

    fn example3() -> FinancialNetwork {
        NetworkSpec::new()
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
            .unwrap()
    }

    fn state(values: &[i64]) -> ClearingState {
        ClearingState::new(values.iter().map(|&x| int(x)).collect())
    }

    #[test]
    fn incoming_and_reduced_assets() {
        let net = example2();
        let s = state(&[3, 3]);
        assert_eq!(incoming_assets(&net, &s, BankId(0)).unwrap(), int(3));
        let paying_one = state(&[1, 1]);
        assert_eq!(reduced_assets(&net, &paying_one, BankId(0)).unwrap(), int(1));
        let lone = NetworkSpec::new().bank("a", 5).build().unwrap();
        assert_eq!(incoming_assets(&lone, &state(&[0]), BankId(0)).unwrap(), int(5));
        assert_eq!(
            incoming_assets(&net, &state(&[1]), BankId(0)),
            Err(ClearingError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert_eq!(incoming_assets(&net, &s, BankId(7)), Err(ClearingError::UnknownBankId(7)));
    }

    #[test]
    fn phi_of_zero_in_example1() {
        assert_eq!(phi(&example1(), &state(&[0, 0, 0])).unwrap(), state(&[1, 0, 0]));
        let dead = NetworkSpec::new().bank("a", 0).bank("b", 0).claim("a", "b", 1);
        let dead = dead.claim("b", "a", 1).build().unwrap();
        assert_eq!(phi(&dead, &state(&[0, 0])).unwrap(), state(&[0, 0]));
    }

    #[test]
    fn clearing_state_checks() {
        assert!(is_clearing_state(&example2(), &state(&[3, 3])));
        let report = check_clearing_state(&example2(), &state(&[1, 1])).unwrap();
        assert_eq!(report.violations.len(), 2);
        assert_eq!(report.violations[0].mapped_value, int(2));
        assert!(is_clearing_state(&example3(), &state(&[1, 5, 2, 2])));
        assert!(is_clearing_state(&example1(), &state(&[2, 1, 1])));
    }

    #[test]
    fn bottom_iteration_on_example1_is_geometric() {
        let net = example1();
        for n in 0..6usize {
            let it = bottom_iterate(&net, 2 * n + 1);
            assert!(!it.converged);
            let expected: Rational = (0..=n).map(|i| ratio(1, 1 << i)).sum();
            assert_eq!(it.state[BankId(0)], expected);
            assert_eq!(it.state.payment(&net, ClaimId(0)), expected / int(2));
        }
    }

    #[test]
    fn bottom_iteration_on_example2_stays_insolvent() {
        let net = example2();
        let it = bottom_iterate(&net, 40);
        assert!(!it.converged);
        assert!(it.state[BankId(0)] < int(1));
        assert_eq!(it.state[BankId(0)], int(1) - ratio(1, 1 << 40));
        let long = bottom_iterate_rounded(&net, 10_000, 64);
        assert!(!long.converged);
        assert!(long.state[BankId(0)] < int(1));
        assert!(int(1) - &long.state[BankId(0)] < ratio(1, 1_000_000));
    }

    #[test]
    fn acyclic_network_converges() {
        let net = NetworkSpec::new()
            .bank("a", 3)
            .bank("b", 0)
            .bank("c", 0)
            .claim("a", "b", 2)
            .claim("b", "c", 5)
            .build()
            .unwrap();
        let it = bottom_iterate(&net, 10);
        assert!(it.converged);
        assert_eq!(it.state, state(&[3, 2, 2]));
        assert_eq!(top_iterate(&net, 10).unwrap().state, it.state);
    }

    #[test]
    fn top_iteration() {
        let cycle = NetworkSpec::new()
            .bank("a", 0)
            .bank("b", 0)
            .claim("a", "b", 1)
            .claim("b", "a", 1)
            .build()
            .unwrap();
        let it = top_iterate(&cycle, 5).unwrap();
        assert!(it.converged);
        assert_eq!(it.state, state(&[1, 1]));
        let lone = NetworkSpec::new().bank("a", 7).build().unwrap();
        assert_eq!(top_iterate(&lone, 1).unwrap().state, state(&[7]));
        assert_eq!(top_iterate(&example2(), 5), Err(ClearingError::DefaultCostUnsupported));
    }
}
