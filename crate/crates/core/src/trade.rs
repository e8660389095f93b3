//! Claims trades under minimal clearing: a buyer `w` takes over the claim
//! `(u, v)` and pays the creditor `v` a return `rho` out of its external
//! assets.

use std::fmt;

use num_traits::{One, Signed};
use thiserror::Error;

use crate::clearing::ClearingState;
use crate::graph::ActiveGraph;
use crate::min_clearing::{compute_min_clearing, unit_response, MinClearingError};
use crate::model::{Bank, BankId, Claim, ClaimId, FinancialNetwork, PaymentScheme};
use crate::rational::Rational;
use crate::state_space::{compute_max_clearing_flood, saturate_from, StateSpaceError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TradeError {
    #[error("claims trades are only defined without default cost")]
    DefaultCostUnsupported,
    #[error("no claim from {debtor} to {creditor}")]
    UnknownClaim { debtor: BankId, creditor: BankId },
    #[error("buyer {0} must be a bank other than the claim's debtor and creditor")]
    InvalidBuyer(BankId),
    #[error("{debtor} already owes {buyer}; the trade would duplicate that claim")]
    DuplicateEdgeAfterTrade { debtor: BankId, buyer: BankId },
    #[error("return {rho} exceeds the cap {cap}")]
    ReturnExceedsCap { rho: Rational, cap: Rational },
    #[error("return {0} is negative")]
    NegativeReturn(Rational),
    #[error("no creditor-positive return exists (pre-trade payment {rho_min})")]
    NoCreditorPositiveTrade { rho_min: Rational },
    #[error(transparent)]
    Algorithm(#[from] MinClearingError),
}

impl From<StateSpaceError> for TradeError {
    fn from(e: StateSpaceError) -> Self {
        match e {
            StateSpaceError::DefaultCostUnsupported => TradeError::DefaultCostUnsupported,
            StateSpaceError::Algorithm(e) => TradeError::Algorithm(e),
            other => TradeError::Algorithm(MinClearingError::InternalInvariant(other.to_string())),
        }
    }
}

/// Buyer `buyer` takes over the claim `debtor -> creditor` for `rho`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TradeSpec {
    pub debtor: BankId,
    pub creditor: BankId,
    pub buyer: BankId,
    pub rho: Rational,
}

/// Set of creditor-positive returns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReturnInterval {
    Empty,
    /// `(lo, hi]`
    LeftOpen { lo: Rational, hi: Rational },
}

impl fmt::Display for ReturnInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReturnInterval::Empty => write!(f, "empty"),
            ReturnInterval::LeftOpen { lo, hi } => write!(f, "({lo}, {hi}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TradeResult {
    /// Payment on the claim before the trade.
    pub rho_min: Rational,
    /// Largest creditor-positive return.
    pub rho_star: Option<Rational>,
    /// Minimal clearing state of the traded network at `rho_star`.
    pub post_state: Option<ClearingState>,
    pub interval: ReturnInterval,
}

/// Why a creditor-positive return does or does not exist.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    /// Raising the return moves `slope` of every unit on to the creditor
    /// and all of it back to the buyer.
    Exists { creditor_slope: Rational },
    /// `min(a_w^(x), l_e)` does not exceed the pre-trade payment.
    CapAtMinimum { rho_min: Rational, cap: Rational },
    /// Only `reaches` of every extra unit paid to the creditor comes back
    /// to the buyer.
    BuyerLoses { reaches: Rational },
    /// The traded claim closes a cycle through the buyer. Money that
    /// circulated through it is no longer forced, and at return `rho` the
    /// buyer ends up `buyer_loss` below its pre-trade assets.
    CirculationLost { rho: Rational, buyer_loss: Rational },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExistenceCheck {
    pub exists: bool,
    pub diagnostic: Diagnostic,
}

fn require_no_default_cost(net: &FinancialNetwork) -> Result<(), TradeError> {
    if net.has_default_cost() {
        Err(TradeError::DefaultCostUnsupported)
    } else {
        Ok(())
    }
}

fn locate(net: &FinancialNetwork, debtor: BankId, creditor: BankId, buyer: BankId) -> Result<ClaimId, TradeError> {
    let n = net.num_banks();
    let e = (debtor.0 < n && creditor.0 < n)
        .then(|| net.find_claim(debtor, creditor))
        .flatten()
        .ok_or(TradeError::UnknownClaim { debtor, creditor })?;
    if buyer.0 >= n || buyer == debtor || buyer == creditor {
        return Err(TradeError::InvalidBuyer(buyer));
    }
    if net.find_claim(debtor, buyer).is_some() {
        return Err(TradeError::DuplicateEdgeAfterTrade { debtor, buyer });
    }
    Ok(e)
}

/// `min(a_w^(x), l_e)`, the largest return the buyer may pay.
pub fn return_cap(net: &FinancialNetwork, claim: ClaimId, buyer: BankId) -> Rational {
    let l = net.claim(claim).liability.finite().expect("original claims are finite").clone();
    l.min(net.bank(buyer).external_assets.clone())
}

/// Rewrites the claim to the buyer and moves `rho` of external assets from
/// the buyer to the creditor. The debtor's payment function is unchanged.
pub fn apply_trade(net: &FinancialNetwork, spec: &TradeSpec) -> Result<FinancialNetwork, TradeError> {
    require_no_default_cost(net)?;
    let e = locate(net, spec.debtor, spec.creditor, spec.buyer)?;
    if spec.rho.is_negative() {
        return Err(TradeError::NegativeReturn(spec.rho.clone()));
    }
    let cap = return_cap(net, e, spec.buyer);
    if spec.rho > cap {
        return Err(TradeError::ReturnExceedsCap { rho: spec.rho.clone(), cap });
    }
    Ok(retarget(net, e, spec.buyer, &spec.rho))
}

fn retarget(net: &FinancialNetwork, e: ClaimId, buyer: BankId, rho: &Rational) -> FinancialNetwork {
    let (u, v) = (net.claim(e).debtor, net.claim(e).creditor);
    let mut banks: Vec<Bank> = net.banks().to_vec();
    banks[buyer.0].external_assets -= rho;
    banks[v.0].external_assets += rho;
    let mut claims: Vec<Claim> = net.claims().to_vec();
    claims[e.0].creditor = buyer;
    let swap = |x: &BankId| if *x == v { buyer } else { *x };
    let schemes = net
        .bank_ids()
        .map(|b| match net.scheme(b) {
            PaymentScheme::EdgeRanking(order) if b == u => PaymentScheme::EdgeRanking(order.iter().map(swap).collect()),
            PaymentScheme::PriorityProportional(classes) if b == u => PaymentScheme::PriorityProportional(
                classes.iter().map(|c| c.iter().map(swap).collect()).collect(),
            ),
            other => other.clone(),
        })
        .collect();
    FinancialNetwork::from_parts(banks, claims, schemes)
}

/// Banks whose minimal and maximal clearing assets differ.
pub fn nonunique_banks(net: &FinancialNetwork) -> Result<Vec<BankId>, TradeError> {
    require_no_default_cost(net)?;
    let min = compute_min_clearing(net);
    let max = compute_max_clearing_flood(net)?;
    Ok(net.bank_ids().filter(|&v| min[v] != max[v]).collect())
}

/// State of the return walk: the traded network at the pre-trade payment,
/// and its minimal clearing state with the floods that any larger return
/// triggers already applied.
struct Walk {
    traded: FinancialNetwork,
    assets: Vec<Rational>,
    creditor: BankId,
    buyer: BankId,
}

impl Walk {
    /// Floods what any further increase would flood, then returns the
    /// response of all banks to one unit paid to the creditor and taken
    /// from the buyer, or `None` if the buyer would lose.
    fn slopes(&mut self) -> Result<Result<Vec<Rational>, Rational>, TradeError> {
        saturate_from(&self.traded, &mut self.assets, self.creditor, Some(self.buyer))?;
        let g = ActiveGraph::build_filtered(&self.traded, &self.assets, |_| false);
        let mut s = unit_response(&g, self.creditor, Some(self.buyer))?;
        let reaches = std::mem::take(&mut s[self.buyer.0]);
        if reaches.is_one() {
            Ok(Ok(s))
        } else {
            Ok(Err(reaches))
        }
    }

    /// Largest step along `s` before some active edge reaches a border.
    fn step_limit(&self, s: &[Rational]) -> Option<Rational> {
        let g = ActiveGraph::build_filtered(&self.traded, &self.assets, |_| false);
        let mut best: Option<Rational> = None;
        for e in g.edges() {
            let sx = &s[e.debtor.0];
            if !sx.is_positive() {
                continue;
            }
            if let Some(gap) = self.traded.claim(e.claim).payment.next_border_delta(&self.assets[e.debtor.0]) {
                let q = gap / sx;
                if best.as_ref().is_none_or(|b| q < *b) {
                    best = Some(q);
                }
            }
        }
        best
    }
}

struct Setup {
    claim: ClaimId,
    rho_min: Rational,
    cap: Rational,
    before: ClearingState,
    walk: Walk,
}

fn setup(net: &FinancialNetwork, debtor: BankId, creditor: BankId, buyer: BankId) -> Result<Setup, TradeError> {
    require_no_default_cost(net)?;
    let claim = locate(net, debtor, creditor, buyer)?;
    let before = compute_min_clearing(net);
    let rho_min = net.claim(claim).payment.eval(&before[debtor]);
    let cap = return_cap(net, claim, buyer);
    let traded = retarget(net, claim, buyer, &rho_min.clone().min(cap.clone()));
    // Usually the pre-trade state, but lower if the trade closes a cycle
    // through the buyer.
    let assets = compute_min_clearing(&traded).into_assets();
    Ok(Setup { claim, rho_min, cap, before, walk: Walk { traded, assets, creditor, buyer } })
}

impl Setup {
    fn lost_at(&self, rho: &Rational, state: &[Rational]) -> Option<Diagnostic> {
        let w = self.walk.buyer;
        (state[w.0] < self.before[w])
            .then(|| Diagnostic::CirculationLost { rho: rho.clone(), buyer_loss: &self.before[w] - &state[w.0] })
    }

    /// Walks the return up from `rho_min` for at most `segments` segments.
    /// Every segment end is checked against the exact minimal state: the
    /// walk follows clearing states, which only bound the minimal one from
    /// above. Returns the last return at which the buyer keeps its assets,
    /// the minimal state there, and why the walk stopped.
    fn run(&mut self, net: &FinancialNetwork, segments: usize) -> Result<(Rational, Vec<Rational>, Stop), TradeError> {
        let mut rho = self.rho_min.clone();
        if let Some(d) = self.lost_at(&rho, &self.walk.assets) {
            return Ok((rho, self.walk.assets.clone(), Stop::Lost(d)));
        }
        let mut state = self.walk.assets.clone();
        for _ in 0..segments {
            if rho >= self.cap {
                return Ok((rho, state, Stop::Cap));
            }
            let s = match self.walk.slopes()? {
                Ok(s) => s,
                Err(reaches) => return Ok((rho, state, Stop::Leak(reaches))),
            };
            let room = &self.cap - &rho;
            let delta = match self.walk.step_limit(&s) {
                Some(q) if q < room => q,
                _ => room,
            };
            let next = &rho + delta;
            let truth = compute_min_clearing(&retarget(net, self.claim, self.walk.buyer, &next)).into_assets();
            if let Some(d) = self.lost_at(&next, &truth) {
                return Ok((rho, state, Stop::Lost(d)));
            }
            rho = next;
            self.walk.assets = truth.clone();
            state = truth;
        }
        Ok((rho, state, Stop::Segments))
    }
}

enum Stop {
    Cap,
    Leak(Rational),
    Lost(Diagnostic),
    Segments,
}

/// Decides whether some return makes the creditor strictly better off while
/// the buyer ends up no worse off.
pub fn exists_creditor_positive(
    net: &FinancialNetwork,
    debtor: BankId,
    creditor: BankId,
    buyer: BankId,
) -> Result<ExistenceCheck, TradeError> {
    let mut st = setup(net, debtor, creditor, buyer)?;
    if st.cap <= st.rho_min {
        return Ok(ExistenceCheck {
            exists: false,
            diagnostic: Diagnostic::CapAtMinimum { rho_min: st.rho_min, cap: st.cap },
        });
    }
    let start = st.walk.slopes()?;
    let (_, _, stop) = st.run(net, 1)?;
    let diagnostic = match (stop, start) {
        (Stop::Lost(d), _) => d,
        (Stop::Leak(reaches), _) => Diagnostic::BuyerLoses { reaches },
        (Stop::Cap | Stop::Segments, Ok(s)) => Diagnostic::Exists { creditor_slope: s[creditor.0].clone() },
        (_, Err(reaches)) => Diagnostic::BuyerLoses { reaches },
    };
    Ok(ExistenceCheck { exists: matches!(diagnostic, Diagnostic::Exists { .. }), diagnostic })
}

/// Full analysis of a trade: the pre-trade payment, the interval of
/// creditor-positive returns and the state at its right end.
pub fn analyze_trade(
    net: &FinancialNetwork,
    debtor: BankId,
    creditor: BankId,
    buyer: BankId,
) -> Result<TradeResult, TradeError> {
    let mut st = setup(net, debtor, creditor, buyer)?;
    let (rho, post, _) = st.run(net, usize::MAX)?;
    if rho <= st.rho_min {
        return Ok(TradeResult { rho_min: st.rho_min, rho_star: None, post_state: None, interval: ReturnInterval::Empty });
    }
    Ok(TradeResult {
        interval: ReturnInterval::LeftOpen { lo: st.rho_min.clone(), hi: rho.clone() },
        rho_min: st.rho_min,
        rho_star: Some(rho),
        post_state: Some(ClearingState::new(post)),
    })
}

/// The largest creditor-positive return; it maximizes the creditor's
/// post-trade assets.
pub fn optimal_creditor_positive_return(
    net: &FinancialNetwork,
    debtor: BankId,
    creditor: BankId,
    buyer: BankId,
) -> Result<TradeResult, TradeError> {
    let result = analyze_trade(net, debtor, creditor, buyer)?;
    match result.interval {
        ReturnInterval::Empty => Err(TradeError::NoCreditorPositiveTrade { rho_min: result.rho_min }),
        _ => Ok(result),
    }
}

/// Minimal clearing state after trading at `rho`, and whether the creditor
/// strictly gains while the buyer does not lose.
pub fn evaluate_trade(net: &FinancialNetwork, spec: &TradeSpec) -> Result<(ClearingState, bool), TradeError> {
    let traded = apply_trade(net, spec)?;
    let before = compute_min_clearing(net);
    let after = compute_min_clearing(&traded);
    let positive = after[spec.creditor] > before[spec.creditor] && after[spec.buyer] >= before[spec.buyer];
    Ok((after, positive))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetworkSpec;
    use crate::rational::{int, ratio};

    /// u (ext 1) owes v 2; v owes w 3 and y 2, paying w first; y owes v 2;
    /// w has ext 4.
    fn trade4() -> FinancialNetwork {
        NetworkSpec::new()
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
            .unwrap()
    }

    const U: BankId = BankId(0);
    const V: BankId = BankId(1);
    const W: BankId = BankId(2);

    #[test]
    fn trade_at_minimum_payment_keeps_state() {
        let net = trade4();
        let traded = apply_trade(&net, &TradeSpec { debtor: U, creditor: V, buyer: W, rho: int(1) }).unwrap();
        assert_eq!(compute_min_clearing(&traded), compute_min_clearing(&net));
        assert_eq!(traded.bank(W).external_assets, int(3));
        assert_eq!(traded.claim(ClaimId(0)).creditor, W);
    }

    #[test]
    fn trade_errors() {
        let net = trade4();
        let over = apply_trade(&net, &TradeSpec { debtor: U, creditor: V, buyer: W, rho: int(3) });
        assert_eq!(over, Err(TradeError::ReturnExceedsCap { rho: int(3), cap: int(2) }));
        let dup = apply_trade(&net, &TradeSpec { debtor: V, creditor: Y, buyer: W, rho: int(0) });
        assert_eq!(dup, Err(TradeError::DuplicateEdgeAfterTrade { debtor: V, buyer: W }));
        assert_eq!(
            apply_trade(&net, &TradeSpec { debtor: U, creditor: V, buyer: V, rho: int(0) }),
            Err(TradeError::InvalidBuyer(V))
        );
        assert!(matches!(
            apply_trade(&net, &TradeSpec { debtor: W, creditor: V, buyer: U, rho: int(0) }),
            Err(TradeError::UnknownClaim { .. })
        ));
    }

    const Y: BankId = BankId(3);

    #[test]
    fn optimal_return_on_trade4() {
        let net = trade4();
        let check = exists_creditor_positive(&net, U, V, W).unwrap();
        assert!(check.exists);
        let r = optimal_creditor_positive_return(&net, U, V, W).unwrap();
        assert_eq!(r.rho_min, int(1));
        assert_eq!(r.rho_star, Some(int(2)));
        assert_eq!(r.interval, ReturnInterval::LeftOpen { lo: int(1), hi: int(2) });
        let post = r.post_state.unwrap();
        assert_eq!(post[V], int(2));
        assert_eq!(post[W], int(5));
    }

    #[test]
    fn buyer_without_assets() {
        let net = NetworkSpec::new()
            .bank("u", 0)
            .bank("v", 0)
            .bank("w", 0)
            .claim("u", "v", 1)
            .claim("v", "w", 1)
            .build()
            .unwrap();
        assert_eq!(
            optimal_creditor_positive_return(&net, U, V, W),
            Err(TradeError::NoCreditorPositiveTrade { rho_min: int(0) })
        );
    }

    #[test]
    fn buyer_loses_when_money_leaks() {
        // v splits between w and a sink z, so only half of any return comes back.
        let net = NetworkSpec::new()
            .bank("u", 0)
            .bank("v", 0)
            .bank("w", 2)
            .bank("z", 0)
            .claim("u", "v", 1)
            .claim("v", "w", 1)
            .claim("v", "z", 1)
            .build()
            .unwrap();
        let check = exists_creditor_positive(&net, U, V, W).unwrap();
        assert_eq!(check.diagnostic, Diagnostic::BuyerLoses { reaches: ratio(1, 2) });
        assert_eq!(analyze_trade(&net, U, V, W).unwrap().interval, ReturnInterval::Empty);
    }

    #[test]
    fn nonunique_sets() {
        let cycle = NetworkSpec::new().bank("a", 0).bank("b", 0).claim("a", "b", 1).claim("b", "a", 1).build().unwrap();
        assert_eq!(nonunique_banks(&cycle).unwrap(), vec![BankId(0), BankId(1)]);
        assert!(nonunique_banks(&trade4()).unwrap().is_empty());
    }
}
