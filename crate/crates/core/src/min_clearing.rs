//! Minimal clearing state by injecting external assets bank by bank,
//! flooding sink components and rewiring banks with default cost once they
//! are known to be solvent.

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::clearing::ClearingState;
use crate::graph::{condense, find_flood_component, reachable_mask, ActiveGraph};
use crate::linalg::{solve_linear_system, unit_left_nullspace, LinalgError, RationalMatrix};
use crate::model::{
    make_proportional, Bank, BankId, Claim, ClaimId, FinancialNetwork, Liability, PaymentScheme,
};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MinClearingError {
    #[error("component is not a sink of the active graph")]
    NotASinkComponent,
    #[error("bank {0} is not solvent")]
    NotSolvent(BankId),
    #[error("bank {0} has no default cost")]
    NotDefaulting(BankId),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),
}

impl From<LinalgError> for MinClearingError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::DegenerateInput(s) => MinClearingError::DegenerateInput(s),
            other => MinClearingError::InternalInvariant(other.to_string()),
        }
    }
}

/// Splitter and sink banks that model the default cost of one bank.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gadget {
    pub splitter: BankId,
    pub sink: BankId,
}

/// Network without default cost that has the same minimal clearing state
/// as the original one on the original banks (until banks become solvent,
/// see [`Run::rewire_solvent_bank`]).
///
/// Original banks keep their ids; auxiliary banks come after them.
#[derive(Clone, Debug)]
pub struct AdjustedNetwork {
    pub network: FinancialNetwork,
    pub original: FinancialNetwork,
    /// Per original bank: splitter and sink, for banks with default cost
    /// that still make payments.
    pub gadgets: Vec<Option<Gadget>>,
    /// Per original bank: has default cost and positive liabilities.
    pub defaulting: Vec<bool>,
    /// Per original claim: the claim that carries it in `network`, if any.
    pub claim_map: Vec<Option<ClaimId>>,
}

impl AdjustedNetwork {
    /// Where payments to original bank `v` arrive in the adjusted network.
    pub fn entry_point(&self, v: BankId) -> BankId {
        self.gadgets[v.0].map_or(v, |g| g.splitter)
    }
}

/// Replaces every bank with default cost by an equivalent construction
/// without default cost: incoming claims go to a splitter that forwards a
/// `beta` share to the bank and the rest to a sink, and external assets are
/// scaled by `alpha`. Banks with `alpha = beta = 0` lose their out-claims.
pub fn adjust_default_cost(net: &FinancialNetwork) -> AdjustedNetwork {
    let n = net.num_banks();
    let defaulting: Vec<bool> = net
        .bank_ids()
        .map(|v| {
            net.bank(v).has_default_cost()
                && net.out_liability(v).finite().is_none_or(|l| l.is_positive())
        })
        .collect();
    let silent = |v: BankId| defaulting[v.0] && net.bank(v).alpha.is_zero() && net.bank(v).beta.is_zero();

    let mut banks: Vec<Bank> = net
        .banks()
        .iter()
        .enumerate()
        .map(|(i, b)| Bank {
            name: b.name.clone(),
            external_assets: if defaulting[i] { &b.alpha * &b.external_assets } else { b.external_assets.clone() },
            alpha: Rational::one(),
            beta: Rational::one(),
        })
        .collect();
    let mut schemes: Vec<PaymentScheme> = net.bank_ids().map(|v| net.scheme(v).clone()).collect();
    let mut gadgets = vec![None; n];
    for v in net.bank_ids() {
        if defaulting[v.0] && !silent(v) {
            let name = &net.bank(v).name;
            let splitter = BankId(banks.len());
            banks.push(aux_bank(format!("{name}~split")));
            let sink = BankId(banks.len());
            banks.push(aux_bank(format!("{name}~sink")));
            schemes.push(PaymentScheme::Proportional);
            schemes.push(PaymentScheme::Proportional);
            gadgets[v.0] = Some(Gadget { splitter, sink });
        }
    }
    let entry = |v: BankId| gadgets[v.0].map_or(v, |g: Gadget| g.splitter);

    let mut claims = Vec::new();
    let mut claim_map = vec![None; net.num_claims()];
    for (i, c) in net.claims().iter().enumerate() {
        if silent(c.debtor) {
            continue;
        }
        claim_map[i] = Some(ClaimId(claims.len()));
        claims.push(Claim { creditor: entry(c.creditor), ..c.clone() });
    }
    for v in net.bank_ids() {
        let Some(g) = gadgets[v.0] else { continue };
        let total = net.out_liability(v).finite().expect("original liabilities are finite").clone();
        let beta = &net.bank(v).beta;
        let parts = [(g.sink, (Rational::one() - beta) * &total), (v, beta * &total)];
        let parts: Vec<_> = parts.into_iter().filter(|(_, l)| l.is_positive()).collect();
        let liabilities: Vec<Rational> = parts.iter().map(|(_, l)| l.clone()).collect();
        let functions = make_proportional(&liabilities);
        for ((creditor, l), payment) in parts.into_iter().zip(functions) {
            claims.push(Claim { debtor: g.splitter, creditor, liability: Liability::Finite(l), payment });
        }
    }
    AdjustedNetwork {
        network: FinancialNetwork::from_parts(banks, claims, schemes),
        original: net.clone(),
        gadgets,
        defaulting,
        claim_map,
    }
}

fn aux_bank(name: String) -> Bank {
    Bank { name, external_assets: Rational::zero(), alpha: Rational::one(), beta: Rational::one() }
}

/// Circulation added to a non-singleton sink component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FloodStep {
    pub component: Vec<BankId>,
    /// `d` with `d = d M`, aligned with `component`, largest entry 1.
    pub direction: Vec<Rational>,
    /// Largest multiple of `direction` that stays inside the current phase.
    pub scale: Rational,
}

/// Increase of external assets at `source` by `delta`, with assets
/// growing by `delta * s_u` along the reachable set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncreaseStep {
    pub source: BankId,
    /// Non-zero entries of `s`, ascending by bank.
    pub slopes: Vec<(BankId, Rational)>,
    pub delta: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    Flood(FloodStep),
    Increase(IncreaseStep),
    /// An original bank with default cost became solvent.
    Rewire(BankId),
}

/// Result of a traced run. Bank ids inside the trace refer to the adjusted
/// network, which coincides with the input when there is no default cost.
#[derive(Clone, Debug)]
pub struct MinClearing {
    pub state: ClearingState,
    pub trace: Vec<TraceEvent>,
    pub adjusted: AdjustedNetwork,
}

impl MinClearing {
    pub fn flood_count(&self) -> usize {
        self.trace.iter().filter(|e| matches!(e, TraceEvent::Flood(_))).count()
    }

    pub fn increase_count(&self) -> usize {
        self.trace.iter().filter(|e| matches!(e, TraceEvent::Increase(_))).count()
    }

    /// Flood plus increase steps.
    pub fn step_count(&self) -> usize {
        self.flood_count() + self.increase_count()
    }

    /// Upper bound `2n + k + m` on the number of steps, taken over the
    /// adjusted network (`k` counts payment-function borders).
    pub fn step_bound(&self) -> usize {
        let net = &self.adjusted.network;
        2 * net.num_banks() + net.total_border_count() + net.num_claims()
    }
}

pub(crate) fn slope_matrix(
    g: &ActiveGraph,
    members: &[BankId],
    position: &[Option<usize>],
) -> Result<RationalMatrix, MinClearingError> {
    let mut m = RationalMatrix::zeros(members.len(), members.len());
    for (i, &u) in members.iter().enumerate() {
        for e in g.out_edges(u) {
            let j = position[e.creditor.0].ok_or(MinClearingError::NotASinkComponent)?;
            m[(i, j)] += &e.slope;
        }
    }
    Ok(m)
}

pub(crate) fn flood_in(
    net: &FinancialNetwork,
    assets: &[Rational],
    g: &ActiveGraph,
    component: &[BankId],
) -> Result<FloodStep, MinClearingError> {
    let mut position = vec![None; net.num_banks()];
    for (i, &u) in component.iter().enumerate() {
        position[u.0] = Some(i);
    }
    let m = slope_matrix(g, component, &position)?;
    let d = unit_left_nullspace(&m)?;
    let mut scale: Option<Rational> = None;
    for (i, &u) in component.iter().enumerate() {
        if !d[i].is_positive() {
            continue;
        }
        for e in g.out_edges(u) {
            if let Some(delta) = net.claim(e.claim).payment.next_border_delta(&assets[u.0]) {
                let q = delta / &d[i];
                if scale.as_ref().is_none_or(|s| q < *s) {
                    scale = Some(q);
                }
            }
        }
    }
    let scale = scale.ok_or_else(|| {
        MinClearingError::InternalInvariant("flood component has no finite border".into())
    })?;
    Ok(FloodStep { component: component.to_vec(), direction: d, scale })
}

/// Flood step for `component`, which must be a non-singleton sink
/// component of the active graph at `state`.
pub fn solve_flood_step(
    net: &FinancialNetwork,
    state: &ClearingState,
    component: &[BankId],
) -> Result<FloodStep, MinClearingError> {
    let g = ActiveGraph::build_filtered(net, state.assets(), |_| false);
    let c = condense(&g);
    let k = c.component_of(component[0]);
    let mut sorted = component.to_vec();
    sorted.sort();
    if c.component(k) != sorted.as_slice() || !c.is_sink(k) || c.is_singleton(k) {
        return Err(MinClearingError::NotASinkComponent);
    }
    flood_in(net, state.assets(), &g, component)
}

pub(crate) fn increase_in(
    net: &FinancialNetwork,
    assets: &[Rational],
    g: &ActiveGraph,
    v: BankId,
    budget: &Rational,
) -> Result<IncreaseStep, MinClearingError> {
    let s = unit_response(g, v, None)?;
    let mut delta = budget.clone();
    for e in g.edges() {
        let su = &s[e.debtor.0];
        if !su.is_positive() {
            continue;
        }
        if let Some(gap) = net.claim(e.claim).payment.next_border_delta(&assets[e.debtor.0]) {
            let q = gap / su;
            if q < delta {
                delta = q;
            }
        }
    }
    let slopes = s
        .into_iter()
        .enumerate()
        .filter(|(_, x)| !x.is_zero())
        .map(|(u, x)| (BankId(u), x))
        .collect();
    Ok(IncreaseStep { source: v, slopes, delta })
}

/// Solves `s_w - sum_u m_uw s_u = [w = v]` on the banks reachable from `v`,
/// component by component in topological order. With `absorbing = Some(w)`
/// the out-edges of `w` are ignored.
pub(crate) fn unit_response(
    g: &ActiveGraph,
    v: BankId,
    absorbing: Option<BankId>,
) -> Result<Vec<Rational>, MinClearingError> {
    let n = g.num_banks();
    let filtered;
    let g = match absorbing {
        Some(w) => {
            filtered = g.without_out_edges(w);
            &filtered
        }
        None => g,
    };
    let reach = reachable_mask(g, v);
    let cond = condense(g);
    let mut incoming: Vec<Vec<(BankId, &Rational)>> = vec![Vec::new(); n];
    for e in g.edges() {
        if reach[e.debtor.0] {
            incoming[e.creditor.0].push((e.debtor, &e.slope));
        }
    }
    let mut s = vec![Rational::zero(); n];
    let mut position = vec![None; n];
    for k in cond.topological_order() {
        let members = cond.component(k);
        if !reach[members[0].0] {
            continue;
        }
        let rhs = |w: BankId, s: &[Rational], inside: &dyn Fn(BankId) -> bool| -> Rational {
            let mut r = if w == v { Rational::one() } else { Rational::zero() };
            for &(u, m) in &incoming[w.0] {
                if !inside(u) && !s[u.0].is_zero() {
                    r += m * &s[u.0];
                }
            }
            r
        };
        if members.len() == 1 {
            let w = members[0];
            s[w.0] = rhs(w, &s, &|_| false);
            continue;
        }
        for (i, &w) in members.iter().enumerate() {
            position[w.0] = Some(i);
        }
        let inside = |u: BankId| position[u.0].is_some();
        let b: Vec<Rational> = members.iter().map(|&w| rhs(w, &s, &inside)).collect();
        let mut a = RationalMatrix::identity(members.len());
        for (i, &w) in members.iter().enumerate() {
            for &(u, m) in &incoming[w.0] {
                if let Some(j) = position[u.0] {
                    a[(i, j)] -= m;
                }
            }
        }
        let x = solve_linear_system(&a, &b).map_err(|_| {
            MinClearingError::InternalInvariant(format!(
                "increase system singular on a component of {} banks",
                members.len()
            ))
        })?;
        for (i, &w) in members.iter().enumerate() {
            s[w.0] = x[i].clone();
            position[w.0] = None;
        }
    }
    Ok(s)
}

/// Increase step at `v` with at most `budget` additional external assets.
/// `v` must not reach a non-singleton sink component.
pub fn solve_increase_step(
    net: &FinancialNetwork,
    state: &ClearingState,
    v: BankId,
    budget: &Rational,
) -> Result<IncreaseStep, MinClearingError> {
    let g = ActiveGraph::build_filtered(net, state.assets(), |_| false);
    let c = condense(&g);
    if find_flood_component(&g, &c, v).map_err(|e| MinClearingError::DegenerateInput(e.to_string()))?.is_some() {
        return Err(MinClearingError::InternalInvariant(
            "increase requested while a flood is pending".into(),
        ));
    }
    increase_in(net, state.assets(), &g, v, budget)
}

/// Working state of one run on an adjusted network.
#[derive(Clone, Debug)]
pub struct Run {
    adj: AdjustedNetwork,
    removed: Vec<bool>,
    target: Vec<Rational>,
    injected: Vec<Rational>,
    assets: Vec<Rational>,
    rewired: Vec<bool>,
    trace: Vec<TraceEvent>,
}

impl Run {
    pub fn new(adj: AdjustedNetwork) -> Self {
        let net = &adj.network;
        let n = net.num_banks();
        Self {
            removed: vec![false; net.num_claims()],
            target: net.banks().iter().map(|b| b.external_assets.clone()).collect(),
            injected: vec![Rational::zero(); n],
            assets: vec![Rational::zero(); n],
            rewired: vec![false; adj.original.num_banks()],
            trace: Vec::new(),
            adj,
        }
    }

    pub fn adjusted(&self) -> &AdjustedNetwork {
        &self.adj
    }

    /// Current assets on the adjusted network.
    pub fn assets(&self) -> &[Rational] {
        &self.assets
    }

    /// External assets injected so far.
    pub fn injected(&self) -> &[Rational] {
        &self.injected
    }

    /// External assets still to be reached, including rewired claims.
    pub fn target(&self) -> &[Rational] {
        &self.target
    }

    pub fn is_removed(&self, e: ClaimId) -> bool {
        self.removed[e.0]
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    fn graph(&self) -> ActiveGraph {
        ActiveGraph::build_filtered(&self.adj.network, &self.assets, |e| self.removed[e.0])
    }

    /// Payment on original claim `e` implied by the current run.
    fn original_payment(&self, e: ClaimId) -> Rational {
        let c = self.adj.original.claim(e);
        if self.rewired[c.debtor.0] {
            return c.liability.finite().cloned().unwrap_or_else(Rational::zero);
        }
        match self.adj.claim_map[e.0] {
            Some(ae) => self.adj.network.claim(ae).payment.eval(&self.assets[c.debtor.0]),
            None => Rational::zero(),
        }
    }

    /// Incoming assets of original bank `u` with its full external assets.
    fn original_incoming(&self, u: BankId) -> Rational {
        let orig = &self.adj.original;
        let flow: Rational = orig.in_claims(u).iter().map(|&e| self.original_payment(e)).sum();
        &orig.bank(u).external_assets + flow
    }

    pub fn is_solvent(&self, u: BankId) -> bool {
        self.adj.original.out_liability(u).is_covered_by(&self.original_incoming(u))
    }

    /// Replaces the out-claims of `u` (a defaulting bank that is now known
    /// to be solvent) by external assets at the creditors: the current
    /// payment is injected at once and the remaining liability is added to
    /// their targets.
    pub fn rewire_solvent_bank(&mut self, u: BankId) -> Result<(), MinClearingError> {
        if !self.adj.defaulting.get(u.0).copied().unwrap_or(false) {
            return Err(MinClearingError::NotDefaulting(u));
        }
        if self.rewired[u.0] {
            return Ok(());
        }
        if !self.is_solvent(u) {
            return Err(MinClearingError::NotSolvent(u));
        }
        let orig = &self.adj.original;
        for &e in orig.out_claims(u) {
            let c = orig.claim(e);
            let x = self.adj.entry_point(c.creditor);
            if let Some(ae) = self.adj.claim_map[e.0] {
                let paid = self.adj.network.claim(ae).payment.eval(&self.assets[u.0]);
                self.injected[x.0] += paid;
                self.removed[ae.0] = true;
            }
            self.target[x.0] += c.liability.finite().expect("original liabilities are finite");
        }
        self.rewired[u.0] = true;
        self.trace.push(TraceEvent::Rewire(u));
        Ok(())
    }

    fn rewire_all_solvent(&mut self) {
        loop {
            let next = (0..self.rewired.len())
                .map(BankId)
                .find(|&u| self.adj.defaulting[u.0] && !self.rewired[u.0] && self.is_solvent(u));
            match next {
                Some(u) => self.rewire_solvent_bank(u).expect("checked solvent"),
                None => return,
            }
        }
    }

    /// Runs the algorithm to completion.
    pub fn run(&mut self) -> Result<(), MinClearingError> {
        self.rewire_all_solvent();
        while let Some(v) = (0..self.target.len()).map(BankId).find(|v| self.injected[v.0] < self.target[v.0]) {
            loop {
                let g = self.graph();
                let c = condense(&g);
                let Some(k) = find_flood_component(&g, &c, v).expect("bank in range") else { break };
                let step = flood_in(&self.adj.network, &self.assets, &g, c.component(k))?;
                for (u, d) in step.component.iter().zip(&step.direction) {
                    self.assets[u.0] += &step.scale * d;
                }
                self.trace.push(TraceEvent::Flood(step));
                self.rewire_all_solvent();
            }
            let g = self.graph();
            let budget = &self.target[v.0] - &self.injected[v.0];
            let step = increase_in(&self.adj.network, &self.assets, &g, v, &budget)?;
            for (u, s) in &step.slopes {
                self.assets[u.0] += &step.delta * s;
            }
            self.injected[v.0] += &step.delta;
            self.trace.push(TraceEvent::Increase(step));
            self.rewire_all_solvent();
            debug_assert!(self.is_minimal_invariant(), "working state is not a clearing state");
        }
        Ok(())
    }

    /// The working state is a fixed point for the injected external assets.
    fn is_minimal_invariant(&self) -> bool {
        let net = &self.adj.network;
        let mut inflow = vec![Rational::zero(); net.num_banks()];
        for (i, c) in net.claims().iter().enumerate() {
            if !self.removed[i] {
                inflow[c.creditor.0] += c.payment.eval(&self.assets[c.debtor.0]);
            }
        }
        inflow.iter().zip(&self.injected).zip(&self.assets).all(|((f, x), a)| &(f + x) == a)
    }

    /// Assets of the original banks.
    pub fn projected_state(&self) -> ClearingState {
        let orig = &self.adj.original;
        let assets = orig
            .bank_ids()
            .map(|u| {
                if !self.adj.defaulting[u.0] {
                    return self.assets[u.0].clone();
                }
                if self.rewired[u.0] {
                    return self.original_incoming(u);
                }
                let b = orig.bank(u);
                let flow: Rational = orig.in_claims(u).iter().map(|&e| self.original_payment(e)).sum();
                &b.alpha * &b.external_assets + &b.beta * flow
            })
            .collect();
        ClearingState::new(assets)
    }

    pub fn into_result(self) -> MinClearing {
        let state = self.projected_state();
        MinClearing { state, trace: self.trace, adjusted: self.adj }
    }
}

/// Minimal clearing state with the full step trace.
pub fn compute_min_clearing_traced(net: &FinancialNetwork) -> Result<MinClearing, MinClearingError> {
    let mut run = Run::new(adjust_default_cost(net));
    run.run()?;
    Ok(run.into_result())
}

/// Minimal clearing state of `net`.
pub fn compute_min_clearing(net: &FinancialNetwork) -> ClearingState {
    compute_min_clearing_traced(net)
        .unwrap_or_else(|e| panic!("minimal clearing failed: {e}"))
        .state
}
