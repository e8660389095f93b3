//! Maximal clearing through priority-proportional payments: the network is
//! rewritten so every bank pays ordered classes proportionally, then a
//! descent over per-bank class counters locates the regime of the maximal
//! clearing state, one feasibility LP per step.

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::clearing::ClearingState;
use crate::linalg::{simplex_solve, simplex_solve_lexicographic, LinearProgram, LpError, Relation, Sense};
use crate::model::{
    make_priority_proportional, Bank, BankId, Claim, ClaimId, FinancialNetwork, Liability, PaymentFunction,
    PaymentScheme,
};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaxClearingError {
    #[error("feasibility program failed: {0}")]
    Lp(#[from] LpError),
    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),
}

/// One class of a bank: the parts of its claims paid together, with the
/// creditor each part finally reaches and the part's liability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriorityClass {
    pub parts: Vec<ClassPart>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassPart {
    /// The original claim this part belongs to.
    pub claim: ClaimId,
    pub creditor: BankId,
    pub liability: Rational,
}

/// Ordered classes of one bank. `borders[j]` is the cumulative liability of
/// classes `0..=j`, so the last border is the bank's total liability.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PriorityStructure {
    pub classes: Vec<PriorityClass>,
    pub borders: Vec<Rational>,
}

impl PriorityStructure {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// `x_{v,j}` with `x_{v,0} = 0`.
    pub fn border(&self, j: usize) -> Rational {
        if j == 0 {
            Rational::zero()
        } else {
            self.borders[j - 1].clone()
        }
    }
}

/// A zero-asset bank inserted on one class part of an original claim.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relay {
    pub bank: BankId,
    pub parent: ClaimId,
    /// Zero-based class index within the debtor's structure.
    pub class: usize,
    /// Debtor to relay; carries the class liability.
    pub inbound: ClaimId,
    /// Relay to creditor; unbounded liability, identity payment.
    pub outbound: ClaimId,
}

/// Links the rewritten network back to the original one. Original banks
/// keep their ids; relays are appended after them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformCertificate {
    pub original_banks: usize,
    pub relays: Vec<Relay>,
    /// For every original claim, the positions in `relays` of its parts.
    pub parts: Vec<Vec<usize>>,
    /// Class structure of every original bank.
    pub structures: Vec<PriorityStructure>,
}

impl TransformCertificate {
    /// Restricts a state of the rewritten network to the original banks.
    pub fn project(&self, state: &ClearingState) -> ClearingState {
        ClearingState::new(state.assets()[..self.original_banks].to_vec())
    }
}

/// Splits every out-claim of a bank along the union of the borders of all
/// its payment functions. Piece `j` of claim `e` has liability
/// `m_{e,j} (x_j - x_{j-1})`; zero pieces are dropped.
pub fn priority_structure(net: &FinancialNetwork, v: BankId) -> PriorityStructure {
    let Some(total) = net.out_liability(v).finite() else { return PriorityStructure::default() };
    if total.is_zero() {
        return PriorityStructure::default();
    }
    let out = net.out_claims(v);
    let mut grid: Vec<Rational> = out.iter().flat_map(|&e| net.claim(e).payment.borders().to_vec()).collect();
    grid.push(total.clone());
    grid.retain(|x| x.is_positive() && x <= total);
    grid.sort();
    grid.dedup();
    let mut classes = Vec::with_capacity(grid.len());
    let mut lo = Rational::zero();
    for hi in &grid {
        let width = hi - &lo;
        let parts = out
            .iter()
            .filter_map(|&e| {
                let c = net.claim(e);
                let liability = c.payment.slope_at(&lo) * &width;
                liability.is_positive().then_some(ClassPart { claim: e, creditor: c.creditor, liability })
            })
            .collect();
        classes.push(PriorityClass { parts });
        lo = hi.clone();
    }
    PriorityStructure { classes, borders: grid }
}

/// Rewrites `net` into an equivalent network in which every original bank
/// has priority-proportional payments. Each class part becomes a claim to
/// its own relay bank, which forwards everything to the original creditor.
pub fn to_priority_proportional(net: &FinancialNetwork) -> (FinancialNetwork, TransformCertificate) {
    let n = net.num_banks();
    let structures: Vec<PriorityStructure> = net.bank_ids().map(|v| priority_structure(net, v)).collect();
    let mut banks: Vec<Bank> = net.banks().to_vec();
    let mut schemes: Vec<PaymentScheme> = vec![PaymentScheme::Proportional; n];
    let mut relays = Vec::new();
    let mut parts = vec![Vec::new(); net.num_claims()];
    // (debtor, class, liability, relay position) in claim order
    let mut pieces = Vec::new();
    for (e, claim) in net.claims().iter().enumerate() {
        let s = &structures[claim.debtor.0];
        for (j, class) in s.classes.iter().enumerate() {
            let Some(part) = class.parts.iter().find(|p| p.claim == ClaimId(e)) else { continue };
            let bank = BankId(banks.len());
            banks.push(Bank {
                name: format!("{}~{}~{}", net.name(claim.debtor), net.name(claim.creditor), j + 1),
                external_assets: Rational::zero(),
                alpha: Rational::one(),
                beta: Rational::one(),
            });
            schemes.push(PaymentScheme::Proportional);
            parts[e].push(relays.len());
            pieces.push((claim.debtor, j, part.liability.clone()));
            relays.push(Relay { bank, parent: ClaimId(e), class: j, inbound: ClaimId(0), outbound: ClaimId(0) });
        }
    }

    // Payment functions of the inbound claims, bank by bank.
    let mut functions: Vec<Option<PaymentFunction>> = vec![None; relays.len()];
    for v in net.bank_ids() {
        let mine: Vec<usize> = (0..relays.len()).filter(|&i| pieces[i].0 == v).collect();
        if mine.is_empty() {
            continue;
        }
        let liabilities: Vec<Rational> = mine.iter().map(|&i| pieces[i].2.clone()).collect();
        let classes: Vec<Vec<usize>> = (0..structures[v.0].class_count())
            .map(|j| (0..mine.len()).filter(|&k| pieces[mine[k]].1 == j).collect())
            .collect();
        let built = make_priority_proportional(&liabilities, &classes).expect("classes partition the pieces");
        for (k, f) in mine.iter().zip(built) {
            functions[*k] = Some(f);
        }
        schemes[v.0] = PaymentScheme::PriorityProportional(
            classes.iter().map(|c| c.iter().map(|&k| relays[mine[k]].bank).collect()).collect(),
        );
    }

    let mut claims = Vec::with_capacity(2 * relays.len());
    for (i, relay) in relays.iter_mut().enumerate() {
        let parent = net.claim(relay.parent);
        relay.inbound = ClaimId(claims.len());
        claims.push(Claim {
            debtor: parent.debtor,
            creditor: relay.bank,
            liability: Liability::Finite(pieces[i].2.clone()),
            payment: functions[i].take().expect("every piece has a function"),
        });
        relay.outbound = ClaimId(claims.len());
        claims.push(Claim {
            debtor: relay.bank,
            creditor: parent.creditor,
            liability: Liability::Unbounded,
            payment: PaymentFunction::identity(),
        });
    }
    let cert = TransformCertificate { original_banks: n, relays, parts, structures };
    (FinancialNetwork::from_parts(banks, claims, schemes), cert)
}

/// Result of the counter descent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaxClearing {
    /// Maximal clearing state on the original banks.
    pub state: ClearingState,
    /// Counter vectors, one per feasibility program solved.
    pub counters: Vec<Vec<usize>>,
}

impl MaxClearing {
    pub fn iterations(&self) -> usize {
        self.counters.len()
    }
}

/// Linear data of one counter vector. Variables are `t_v = y_v - x_{v,r_v}`
/// where `y_v` is the offset-inclusive asset value.
struct Regime<'a> {
    net: &'a FinancialNetwork,
    structures: &'a [PriorityStructure],
    r: &'a [usize],
}

impl Regime<'_> {
    fn solvent(&self, v: usize) -> bool {
        self.r[v] == self.structures[v].class_count()
    }

    fn factors(&self, v: usize) -> (Rational, Rational) {
        let b = &self.net.banks()[v];
        if self.solvent(v) {
            (Rational::one(), Rational::one())
        } else {
            (b.alpha.clone(), b.beta.clone())
        }
    }

    /// Rows `t_w - beta'_w sum share_{uw} t_u (- d_w) = rhs_w`.
    fn rows(&self) -> (Vec<Vec<Rational>>, Vec<Rational>) {
        let n = self.net.num_banks();
        let mut coeff = vec![vec![Rational::zero(); n]; n];
        let mut constant = vec![Rational::zero(); n];
        for u in 0..n {
            let s = &self.structures[u];
            for class in &s.classes[..self.r[u]] {
                for p in &class.parts {
                    constant[p.creditor.0] += &p.liability;
                }
            }
            if let Some(class) = s.classes.get(self.r[u]) {
                let size: Rational = class.parts.iter().map(|p| &p.liability).sum();
                for p in &class.parts {
                    coeff[p.creditor.0][u] += &p.liability / &size;
                }
            }
        }
        let mut rhs = Vec::with_capacity(n);
        for w in 0..n {
            let (alpha, beta) = self.factors(w);
            for x in coeff[w].iter_mut() {
                *x = -(&beta * &*x);
            }
            coeff[w][w] += Rational::one();
            let ext = &self.net.banks()[w].external_assets;
            rhs.push(alpha * ext + &beta * &constant[w] - self.structures[w].border(self.r[w]));
        }
        (coeff, rhs)
    }

    fn upper(&self, v: usize) -> Option<Rational> {
        let s = &self.structures[v];
        (!self.solvent(v)).then(|| s.border(self.r[v] + 1) - s.border(self.r[v]))
    }
}

/// Offset program in `t` alone: the offsets are `d = A t - rhs`, so
/// `d >= 0` becomes `A t >= rhs` and the total offset is linear in `t`.
fn offset_program(coeff: &[Vec<Rational>], rhs: &[Rational]) -> LinearProgram {
    let n = rhs.len();
    let mut objective = vec![Rational::zero(); n];
    for row in coeff {
        for (o, x) in objective.iter_mut().zip(row) {
            *o += x;
        }
    }
    let mut lp = LinearProgram::new(Sense::Minimize, objective);
    for (row, b) in coeff.iter().zip(rhs) {
        lp.constrain(row.clone(), Relation::Ge, b.clone());
    }
    lp
}

fn offsets(coeff: &[Vec<Rational>], rhs: &[Rational], t: &[Rational]) -> Vec<Rational> {
    coeff.iter().zip(rhs).map(|(row, b)| row.iter().zip(t).map(|(x, y)| x * y).sum::<Rational>() - b).collect()
}

fn final_program(regime: &Regime) -> LinearProgram {
    let n = regime.net.num_banks();
    let (coeff, rhs) = regime.rows();
    let mut lp = LinearProgram::new(Sense::Maximize, vec![Rational::one(); n]);
    for (row, b) in coeff.into_iter().zip(rhs) {
        lp.constrain(row, Relation::Eq, b);
    }
    for v in 0..n {
        if let Some(cap) = regime.upper(v) {
            let mut row = vec![Rational::zero(); n];
            row[v] = Rational::one();
            lp.constrain(row, Relation::Le, cap);
        }
    }
    lp
}

/// Counter descent. Counters start at the class count (everyone solvent).
/// While the smallest total offset is positive, every bank that still needs
/// an offset in a normalized optimum drops one class.
pub fn compute_max_clearing_pp_traced(net: &FinancialNetwork) -> Result<MaxClearing, MaxClearingError> {
    let n = net.num_banks();
    let structures: Vec<PriorityStructure> = net.bank_ids().map(|v| priority_structure(net, v)).collect();
    let mut r: Vec<usize> = structures.iter().map(|s| s.class_count()).collect();
    let mut counters = Vec::new();
    loop {
        counters.push(r.clone());
        let regime = Regime { net, structures: &structures, r: &r };
        let (coeff, rhs) = regime.rows();
        // Least total offset; among those, least total assets, which leaves
        // an offset only where a bank sits exactly on its class border.
        let sol = simplex_solve_lexicographic(&offset_program(&coeff, &rhs), &[vec![Rational::one(); n]])?;
        let d = offsets(&coeff, &rhs, &sol.x);
        if d.iter().all(|x| x.is_zero()) {
            let sol = simplex_solve(&final_program(&regime))?;
            let assets = (0..n).map(|v| structures[v].border(r[v]) + &sol.x[v]).collect();
            return Ok(MaxClearing { state: ClearingState::new(assets), counters });
        }
        let mut next = r.clone();
        let mut changed = false;
        for v in 0..n {
            if d[v].is_positive() {
                if r[v] == 0 || !sol.x[v].is_zero() {
                    return Err(MaxClearingError::InternalInvariant(format!(
                        "bank {} needs an offset away from its class border",
                        net.name(BankId(v))
                    )));
                }
                next[v] -= 1;
                changed = true;
            }
        }
        if !changed {
            return Err(MaxClearingError::InternalInvariant("positive offset without a bank to move".into()));
        }
        r = next;
    }
}

/// Maximal clearing state on the original banks; default costs allowed.
pub fn compute_max_clearing_pp(net: &FinancialNetwork) -> ClearingState {
    match compute_max_clearing_pp_traced(net) {
        Ok(m) => m.state,
        Err(e) => panic!("maximal clearing failed: {e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::{is_clearing_state, top_iterate};
    use crate::min_clearing::compute_min_clearing;
    use crate::model::NetworkSpec;
    use crate::rational::{int, ratio};

    fn figure1_left() -> FinancialNetwork {
        NetworkSpec::new()
            .bank("v", 0)
            .bank("w", 0)
            .bank("u", 0)
            .claim("v", "w", 20)
            .claim("v", "u", 80)
            .edge_ranking("v", &["w", "u"])
            .build()
            .unwrap()
    }

    #[test]
    fn edge_ranking_classes() {
        let net = figure1_left();
        let s = priority_structure(&net, BankId(0));
        assert_eq!(s.borders, vec![int(20), int(100)]);
        assert_eq!(s.classes[0].parts, vec![ClassPart { claim: ClaimId(0), creditor: BankId(1), liability: int(20) }]);
        assert_eq!(s.classes[1].parts, vec![ClassPart { claim: ClaimId(1), creditor: BankId(2), liability: int(80) }]);
        let (pp, cert) = to_priority_proportional(&net);
        assert_eq!(pp.num_banks(), 5);
        assert_eq!(cert.relays.len(), 2);
        assert_eq!(pp.claim(cert.relays[1].outbound).liability, Liability::Unbounded);
    }

    #[test]
    fn proportional_bank_gets_one_class() {
        let net = NetworkSpec::new()
            .bank("v", 1)
            .bank("a", 0)
            .bank("b", 0)
            .claim("v", "a", 1)
            .claim("v", "b", 3)
            .build()
            .unwrap();
        let s = priority_structure(&net, BankId(0));
        assert_eq!(s.class_count(), 1);
        let (pp, cert) = to_priority_proportional(&net);
        assert_eq!(pp.num_banks(), 5);
        assert_eq!(pp.num_claims(), 4);
        assert_eq!(cert.parts, vec![vec![0], vec![1]]);
    }

    #[test]
    fn crossing_piecewise_grid() {
        use crate::model::{PiecewiseEdge, SchemeKind};
        let edge = |creditor: &str, borders: &[i64], slopes: &[Rational]| PiecewiseEdge {
            creditor: creditor.into(),
            borders: borders.iter().map(|&b| int(b)).collect(),
            slopes: slopes.to_vec(),
        };
        let net = NetworkSpec::new()
            .bank("v", 0)
            .bank("w", 0)
            .bank("u", 0)
            .claim("v", "w", 35)
            .claim("v", "u", 65)
            .scheme(
                "v",
                SchemeKind::Piecewise {
                    edges: vec![
                        edge("w", &[0, 50, 90, 100], &[ratio(1, 2), int(0), int(1)]),
                        edge("u", &[0, 50, 55, 90, 100], &[ratio(1, 2), int(1), int(1), int(0)]),
                    ],
                },
            )
            .build()
            .unwrap();
        let s = priority_structure(&net, BankId(0));
        assert_eq!(s.borders, vec![int(50), int(55), int(90), int(100)]);
        let per_claim = |e: usize| -> Rational {
            s.classes.iter().flat_map(|c| &c.parts).filter(|p| p.claim == ClaimId(e)).map(|p| p.liability.clone()).sum()
        };
        assert_eq!(per_claim(0), int(35));
        assert_eq!(per_claim(1), int(65));
    }

    #[test]
    fn maximal_states() {
        let cycle = NetworkSpec::new().bank("v", 0).bank("w", 0).claim("v", "w", 1).claim("w", "v", 1).build().unwrap();
        let m = compute_max_clearing_pp_traced(&cycle).unwrap();
        assert_eq!(m.state.assets(), &[int(1), int(1)]);
        assert_eq!(m.state, top_iterate(&cycle, 5).unwrap().state);

        let single = NetworkSpec::new().bank("v", ratio(1, 2)).bank("c", 0).claim("v", "c", 1).build().unwrap();
        let m = compute_max_clearing_pp(&single);
        assert_eq!(m.assets(), &[ratio(1, 2), ratio(1, 2)]);
    }

    #[test]
    fn default_costs() {
        let ex2 = NetworkSpec::new()
            .bank_with_costs("v", 1, ratio(1, 2), ratio(1, 2))
            .bank_with_costs("w", 1, ratio(1, 2), ratio(1, 2))
            .claim("v", "w", 2)
            .claim("w", "v", 2)
            .build()
            .unwrap();
        let m = compute_max_clearing_pp(&ex2);
        assert_eq!(m.assets(), &[int(3), int(3)]);
        assert!(is_clearing_state(&ex2, &m));
        assert_eq!(m, compute_min_clearing(&ex2));
    }

    #[test]
    fn insolvent_with_default_cost_descends() {
        // a cannot pay b in full; with beta = 1/2 it keeps half of what it gets.
        let net = NetworkSpec::new()
            .bank("s", 1)
            .bank_with_costs("a", 0, 1, ratio(1, 2))
            .bank("b", 0)
            .claim("s", "a", 1)
            .claim("a", "b", 2)
            .build()
            .unwrap();
        let m = compute_max_clearing_pp_traced(&net).unwrap();
        assert_eq!(m.state.assets(), &[int(1), ratio(1, 2), ratio(1, 2)]);
        assert!(is_clearing_state(&net, &m.state));
        for w in m.counters.windows(2) {
            assert!(w[1].iter().zip(&w[0]).all(|(a, b)| a <= b));
        }
    }
}
