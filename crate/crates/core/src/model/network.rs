use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use super::payment::{Liability, PaymentFunction, PaymentFunctionError};
use super::scheme::{make_edge_ranking, make_priority_proportional, make_proportional, SchemeError};
use crate::rational::{IntoRational, Rational};

/// Position of a bank in its network. Banks are ordered as they appear in
/// the input, and "smallest id" tie-breaking uses this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BankId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClaimId(pub usize);

impl fmt::Display for BankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bank {
    pub name: String,
    pub external_assets: Rational,
    pub alpha: Rational,
    pub beta: Rational,
}

impl Bank {
    pub fn has_default_cost(&self) -> bool {
        !self.alpha.is_one() || !self.beta.is_one()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Claim {
    pub debtor: BankId,
    pub creditor: BankId,
    pub liability: Liability,
    pub payment: PaymentFunction,
}

/// How a bank splits its assets among its creditors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PaymentScheme {
    Proportional,
    EdgeRanking(Vec<BankId>),
    PriorityProportional(Vec<Vec<BankId>>),
    Piecewise,
}

/// Unvalidated network description, as read from a file or assembled with
/// the builder methods. Banks and claims refer to each other by name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NetworkSpec {
    pub banks: Vec<BankSpec>,
    pub claims: Vec<ClaimSpec>,
    pub schemes: Vec<SchemeSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BankSpec {
    pub id: String,
    pub external_assets: Rational,
    pub alpha: Rational,
    pub beta: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClaimSpec {
    pub debtor: String,
    pub creditor: String,
    pub liability: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemeSpec {
    pub bank: String,
    pub kind: SchemeKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    Proportional,
    EdgeRanking { order: Vec<String> },
    PriorityProportional { classes: Vec<Vec<String>> },
    Piecewise { edges: Vec<PiecewiseEdge> },
}

/// One claim of a piecewise scheme; `borders` include 0 and `L^+`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiecewiseEdge {
    pub creditor: String,
    pub borders: Vec<Rational>,
    pub slopes: Vec<Rational>,
}

impl NetworkSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bank(self, id: &str, external_assets: impl IntoRational) -> Self {
        self.bank_with_costs(id, external_assets, 1, 1)
    }

    pub fn bank_with_costs(
        mut self,
        id: &str,
        external_assets: impl IntoRational,
        alpha: impl IntoRational,
        beta: impl IntoRational,
    ) -> Self {
        self.banks.push(BankSpec {
            id: id.to_string(),
            external_assets: external_assets.into_rational(),
            alpha: alpha.into_rational(),
            beta: beta.into_rational(),
        });
        self
    }

    pub fn claim(mut self, debtor: &str, creditor: &str, liability: impl IntoRational) -> Self {
        self.claims.push(ClaimSpec {
            debtor: debtor.to_string(),
            creditor: creditor.to_string(),
            liability: liability.into_rational(),
        });
        self
    }

    pub fn scheme(mut self, bank: &str, kind: SchemeKind) -> Self {
        self.schemes.push(SchemeSpec { bank: bank.to_string(), kind });
        self
    }

    pub fn edge_ranking(self, bank: &str, order: &[&str]) -> Self {
        let order = order.iter().map(|s| s.to_string()).collect();
        self.scheme(bank, SchemeKind::EdgeRanking { order })
    }

    pub fn priority_proportional(self, bank: &str, classes: &[&[&str]]) -> Self {
        let classes = classes
            .iter()
            .map(|c| c.iter().map(|s| s.to_string()).collect())
            .collect();
        self.scheme(bank, SchemeKind::PriorityProportional { classes })
    }

    pub fn build(&self) -> Result<FinancialNetwork, ValidationErrors> {
        validate_network(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("network has no banks")]
    EmptyNetwork,
    #[error("bank id {0:?} is used more than once")]
    DuplicateBankId(String),
    #[error("{context} refers to unknown bank {id:?}")]
    UnknownBankId { context: String, id: String },
    #[error("claim of {0:?} on itself")]
    SelfLoop(String),
    #[error("more than one claim from {debtor:?} to {creditor:?}")]
    DuplicateEdge { debtor: String, creditor: String },
    #[error("{field} is negative ({value})")]
    NegativeValue { field: String, value: Rational },
    #[error("{field} of bank {bank:?} is {value}, outside [0, 1]")]
    RateOutOfRange { bank: String, field: &'static str, value: Rational },
    #[error("slopes of bank {bank:?} sum to {sum} on [{lo}, {hi}), expected 1")]
    SlopeSumViolation { bank: String, lo: Rational, hi: Rational, sum: Rational },
    #[error("payment function of claim {debtor:?} -> {creditor:?}: {reason}")]
    BorderMismatch { debtor: String, creditor: String, reason: String },
    #[error("claim {debtor:?} -> {creditor:?} pays {paid} at full solvency but its liability is {liability}")]
    LiabilityMismatch { debtor: String, creditor: String, liability: Rational, paid: Rational },
    #[error("payment scheme of bank {bank:?}: {reason}")]
    InvalidScheme { bank: String, reason: String },
    #[error("bank {0:?} has more than one payment scheme")]
    DuplicateScheme(String),
}

/// Every violation found in a network description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

/// Validated network. Immutable; derived networks are built through
/// [`FinancialNetwork::from_parts`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinancialNetwork {
    banks: Vec<Bank>,
    claims: Vec<Claim>,
    schemes: Vec<PaymentScheme>,
    out_claims: Vec<Vec<ClaimId>>,
    in_claims: Vec<Vec<ClaimId>>,
    out_liability: Vec<Liability>,
    in_liability: Vec<Liability>,
    index: HashMap<String, BankId>,
}

impl FinancialNetwork {
    /// Assembles a network without validation. Out-claims of each bank are
    /// kept in the order they appear in `claims`.
    pub(crate) fn from_parts(
        banks: Vec<Bank>,
        claims: Vec<Claim>,
        schemes: Vec<PaymentScheme>,
    ) -> Self {
        let n = banks.len();
        let mut out_claims = vec![Vec::new(); n];
        let mut in_claims = vec![Vec::new(); n];
        let mut out_liability = vec![Liability::Finite(Rational::zero()); n];
        let mut in_liability = vec![Liability::Finite(Rational::zero()); n];
        for (i, c) in claims.iter().enumerate() {
            out_claims[c.debtor.0].push(ClaimId(i));
            in_claims[c.creditor.0].push(ClaimId(i));
            out_liability[c.debtor.0] = out_liability[c.debtor.0].add(&c.liability);
            in_liability[c.creditor.0] = in_liability[c.creditor.0].add(&c.liability);
        }
        let index = banks.iter().enumerate().map(|(i, b)| (b.name.clone(), BankId(i))).collect();
        Self { banks, claims, schemes, out_claims, in_claims, out_liability, in_liability, index }
    }

    pub fn num_banks(&self) -> usize {
        self.banks.len()
    }

    pub fn num_claims(&self) -> usize {
        self.claims.len()
    }

    pub fn bank_ids(&self) -> impl Iterator<Item = BankId> {
        (0..self.banks.len()).map(BankId)
    }

    pub fn banks(&self) -> &[Bank] {
        &self.banks
    }

    pub fn bank(&self, v: BankId) -> &Bank {
        &self.banks[v.0]
    }

    pub fn claims(&self) -> &[Claim] {
        &self.claims
    }

    pub fn claim(&self, e: ClaimId) -> &Claim {
        &self.claims[e.0]
    }

    pub fn scheme(&self, v: BankId) -> &PaymentScheme {
        &self.schemes[v.0]
    }

    pub fn out_claims(&self, v: BankId) -> &[ClaimId] {
        &self.out_claims[v.0]
    }

    pub fn in_claims(&self, v: BankId) -> &[ClaimId] {
        &self.in_claims[v.0]
    }

    /// `L^+(v)`.
    pub fn out_liability(&self, v: BankId) -> &Liability {
        &self.out_liability[v.0]
    }

    /// `L^-(v)`.
    pub fn in_liability(&self, v: BankId) -> &Liability {
        &self.in_liability[v.0]
    }

    pub fn bank_id(&self, name: &str) -> Option<BankId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, v: BankId) -> &str {
        &self.banks[v.0].name
    }

    pub fn find_claim(&self, debtor: BankId, creditor: BankId) -> Option<ClaimId> {
        self.out_claims[debtor.0]
            .iter()
            .copied()
            .find(|&e| self.claims[e.0].creditor == creditor)
    }

    pub fn has_default_cost(&self) -> bool {
        self.banks.iter().any(Bank::has_default_cost)
    }

    /// Total number of finite borders over all payment functions.
    pub fn total_border_count(&self) -> usize {
        self.claims.iter().map(|c| c.payment.border_count()).sum()
    }

    /// Converts back to a name-based description. `None` if the network
    /// contains unbounded claims, which have no external representation.
    pub fn to_spec(&self) -> Option<NetworkSpec> {
        let banks = self
            .banks
            .iter()
            .map(|b| BankSpec {
                id: b.name.clone(),
                external_assets: b.external_assets.clone(),
                alpha: b.alpha.clone(),
                beta: b.beta.clone(),
            })
            .collect();
        let mut claims = Vec::with_capacity(self.claims.len());
        for c in &self.claims {
            claims.push(ClaimSpec {
                debtor: self.name(c.debtor).to_string(),
                creditor: self.name(c.creditor).to_string(),
                liability: c.liability.finite()?.clone(),
            });
        }
        let names = |ids: &[BankId]| ids.iter().map(|&v| self.name(v).to_string()).collect();
        let mut schemes = Vec::new();
        for v in self.bank_ids() {
            let kind = match self.scheme(v) {
                PaymentScheme::Proportional => continue,
                PaymentScheme::EdgeRanking(order) => SchemeKind::EdgeRanking { order: names(order) },
                PaymentScheme::PriorityProportional(classes) => SchemeKind::PriorityProportional {
                    classes: classes.iter().map(|c| names(c)).collect(),
                },
                PaymentScheme::Piecewise => SchemeKind::Piecewise {
                    edges: self
                        .out_claims(v)
                        .iter()
                        .map(|&e| {
                            let c = self.claim(e);
                            let mut borders = vec![Rational::zero()];
                            borders.extend(c.payment.borders().iter().cloned());
                            PiecewiseEdge {
                                creditor: self.name(c.creditor).to_string(),
                                borders,
                                slopes: c.payment.slopes().to_vec(),
                            }
                        })
                        .collect(),
                },
            };
            schemes.push(SchemeSpec { bank: self.name(v).to_string(), kind });
        }
        Some(NetworkSpec { banks, claims, schemes })
    }
}

/// Checks a description and builds the network, reporting every violation.
pub fn validate_network(spec: &NetworkSpec) -> Result<FinancialNetwork, ValidationErrors> {
    let mut errors = Vec::new();
    if spec.banks.is_empty() {
        errors.push(ValidationError::EmptyNetwork);
    }

    let mut index: HashMap<&str, BankId> = HashMap::new();
    for (i, b) in spec.banks.iter().enumerate() {
        if index.insert(b.id.as_str(), BankId(i)).is_some() {
            errors.push(ValidationError::DuplicateBankId(b.id.clone()));
        }
        if b.external_assets.is_negative() {
            errors.push(ValidationError::NegativeValue {
                field: format!("external assets of bank {:?}", b.id),
                value: b.external_assets.clone(),
            });
        }
        for (field, value) in [("alpha", &b.alpha), ("beta", &b.beta)] {
            if value.is_negative() || *value > Rational::one() {
                errors.push(ValidationError::RateOutOfRange {
                    bank: b.id.clone(),
                    field,
                    value: value.clone(),
                });
            }
        }
    }

    let mut pairs = HashSet::new();
    let mut resolved = Vec::with_capacity(spec.claims.len());
    for c in &spec.claims {
        let context = format!("claim {:?} -> {:?}", c.debtor, c.creditor);
        let mut lookup = |id: &str| {
            let found = index.get(id).copied();
            if found.is_none() {
                errors.push(ValidationError::UnknownBankId { context: context.clone(), id: id.into() });
            }
            found
        };
        let (d, k) = (lookup(&c.debtor), lookup(&c.creditor));
        if c.liability.is_negative() {
            errors.push(ValidationError::NegativeValue {
                field: format!("liability of {context}"),
                value: c.liability.clone(),
            });
        }
        if c.debtor == c.creditor {
            errors.push(ValidationError::SelfLoop(c.debtor.clone()));
            continue;
        }
        if !pairs.insert((c.debtor.as_str(), c.creditor.as_str())) {
            errors.push(ValidationError::DuplicateEdge {
                debtor: c.debtor.clone(),
                creditor: c.creditor.clone(),
            });
            continue;
        }
        if let (Some(d), Some(k)) = (d, k) {
            resolved.push((d, k, c.liability.clone()));
        }
    }

    let mut scheme_of: Vec<Option<&SchemeKind>> = vec![None; spec.banks.len()];
    for s in &spec.schemes {
        match index.get(s.bank.as_str()) {
            None => errors.push(ValidationError::UnknownBankId {
                context: "payment scheme".into(),
                id: s.bank.clone(),
            }),
            Some(v) if scheme_of[v.0].is_some() => {
                errors.push(ValidationError::DuplicateScheme(s.bank.clone()))
            }
            Some(v) => scheme_of[v.0] = Some(&s.kind),
        }
    }

    if !errors.is_empty() {
        return Err(ValidationErrors(errors));
    }

    let n = spec.banks.len();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, (d, _, _)) in resolved.iter().enumerate() {
        out[d.0].push(i);
    }
    let mut payments: Vec<Option<PaymentFunction>> = vec![None; resolved.len()];
    let mut schemes = Vec::with_capacity(n);
    for v in 0..n {
        let name = &spec.banks[v].id;
        let liabilities: Vec<Rational> = out[v].iter().map(|&i| resolved[i].2.clone()).collect();
        let creditor_pos: HashMap<&str, usize> = out[v]
            .iter()
            .enumerate()
            .map(|(pos, &i)| (spec.banks[resolved[i].1 .0].id.as_str(), pos))
            .collect();
        let mut invalid = |reason: String| {
            errors.push(ValidationError::InvalidScheme { bank: name.clone(), reason });
        };
        let positions = |ids: &[String], invalid: &mut dyn FnMut(String)| -> Option<Vec<usize>> {
            let mut ok = true;
            let pos: Vec<usize> = ids
                .iter()
                .filter_map(|id| {
                    let p = creditor_pos.get(id.as_str()).copied();
                    if p.is_none() {
                        ok = false;
                        invalid(format!("{id:?} is not a creditor of this bank"));
                    }
                    p
                })
                .collect();
            ok.then_some(pos)
        };
        let scheme_err = |e: SchemeError| scheme_message(e, &out[v], &resolved, spec);
        let (functions, scheme) = match scheme_of[v] {
            None | Some(SchemeKind::Proportional) => {
                (Some(make_proportional(&liabilities)), PaymentScheme::Proportional)
            }
            Some(SchemeKind::EdgeRanking { order }) => {
                let built = positions(order, &mut invalid).and_then(|p| {
                    make_edge_ranking(&liabilities, &p).map_err(|e| invalid(scheme_err(e))).ok()
                });
                let ids = order.iter().filter_map(|id| index.get(id.as_str()).copied()).collect();
                (built, PaymentScheme::EdgeRanking(ids))
            }
            Some(SchemeKind::PriorityProportional { classes }) => {
                let mut pos = Some(Vec::new());
                for c in classes {
                    let p = positions(c, &mut invalid);
                    pos = pos.zip(p).map(|(mut acc, p)| {
                        acc.push(p);
                        acc
                    });
                }
                let built = pos.and_then(|p| {
                    make_priority_proportional(&liabilities, &p)
                        .map_err(|e| invalid(scheme_err(e)))
                        .ok()
                });
                let ids = classes
                    .iter()
                    .map(|c| c.iter().filter_map(|id| index.get(id.as_str()).copied()).collect())
                    .collect();
                (built, PaymentScheme::PriorityProportional(ids))
            }
            Some(SchemeKind::Piecewise { edges }) => {
                let mut piece_errors = Vec::new();
                let mut fs: Vec<Option<PaymentFunction>> = vec![None; out[v].len()];
                let mut ok = true;
                for edge in edges {
                    let Some(&pos) = creditor_pos.get(edge.creditor.as_str()) else {
                        invalid(format!("{:?} is not a creditor of this bank", edge.creditor));
                        ok = false;
                        continue;
                    };
                    if fs[pos].is_some() {
                        invalid(format!("creditor {:?} is listed more than once", edge.creditor));
                        ok = false;
                        continue;
                    }
                    let total: Rational = liabilities.iter().sum();
                    match piecewise_function(edge, &total) {
                        Ok(f) => fs[pos] = Some(f),
                        Err(e) => {
                            ok = false;
                            piece_errors.push(match e {
                                PieceError::Negative(value) => ValidationError::NegativeValue {
                                    field: format!("slope of claim {name:?} -> {:?}", edge.creditor),
                                    value,
                                },
                                PieceError::Border(reason) => ValidationError::BorderMismatch {
                                    debtor: name.clone(),
                                    creditor: edge.creditor.clone(),
                                    reason,
                                },
                            });
                        }
                    }
                }
                for (pos, f) in fs.iter().enumerate() {
                    if f.is_none() && ok {
                        let creditor = &spec.banks[resolved[out[v][pos]].1 .0].id;
                        piece_errors.push(ValidationError::InvalidScheme {
                            bank: name.clone(),
                            reason: format!("no payment function for creditor {creditor:?}"),
                        });
                        ok = false;
                    }
                }
                errors.extend(piece_errors);
                let built = if ok { fs.into_iter().collect::<Option<Vec<_>>>() } else { None };
                (built, PaymentScheme::Piecewise)
            }
        };
        schemes.push(scheme);
        let Some(functions) = functions else { continue };
        let before = errors.len();
        check_slope_sum(name, &liabilities, &functions, &mut errors);
        for (pos, f) in functions.iter().enumerate() {
            if f.terminal_value() != &liabilities[pos] {
                let creditor = &spec.banks[resolved[out[v][pos]].1 .0].id;
                errors.push(ValidationError::LiabilityMismatch {
                    debtor: name.clone(),
                    creditor: creditor.clone(),
                    liability: liabilities[pos].clone(),
                    paid: f.terminal_value().clone(),
                });
            }
        }
        if errors.len() == before {
            for (pos, f) in functions.into_iter().enumerate() {
                payments[out[v][pos]] = Some(f);
            }
        }
    }

    if !errors.is_empty() {
        return Err(ValidationErrors(errors));
    }

    let banks = spec
        .banks
        .iter()
        .map(|b| Bank {
            name: b.id.clone(),
            external_assets: b.external_assets.clone(),
            alpha: b.alpha.clone(),
            beta: b.beta.clone(),
        })
        .collect();
    let claims = resolved
        .into_iter()
        .zip(payments)
        .map(|((debtor, creditor, liability), payment)| Claim {
            debtor,
            creditor,
            liability: Liability::Finite(liability),
            payment: payment.expect("every claim received a payment function"),
        })
        .collect();
    Ok(FinancialNetwork::from_parts(banks, claims, schemes))
}

fn scheme_message(
    e: SchemeError,
    out: &[usize],
    resolved: &[(BankId, BankId, Rational)],
    spec: &NetworkSpec,
) -> String {
    let name = |pos: usize| spec.banks[resolved[out[pos]].1 .0].id.clone();
    match e {
        SchemeError::Repeated(p) => format!("creditor {:?} is listed more than once", name(p)),
        SchemeError::Missing(p) => format!("creditor {:?} is not listed", name(p)),
        SchemeError::OutOfRange(p) => format!("claim position {p} does not exist"),
        SchemeError::EmptyClass(j) => format!("priority class {j} is empty"),
    }
}

enum PieceError {
    Negative(Rational),
    Border(String),
}

fn piecewise_function(edge: &PiecewiseEdge, total: &Rational) -> Result<PaymentFunction, PieceError> {
    let f = PaymentFunction::from_segments(&edge.borders, &edge.slopes).map_err(|e| match e {
        PaymentFunctionError::NegativeSlope(m) => PieceError::Negative(m),
        other => PieceError::Border(other.to_string()),
    })?;
    let last = f.last_border().cloned().unwrap_or_else(Rational::zero);
    if &last != total {
        return Err(PieceError::Border(format!(
            "last border is {last}, expected the total liability {total}"
        )));
    }
    Ok(f)
}

/// Slopes of a bank's claims must add up to 1 on `[0, L^+)`.
fn check_slope_sum(
    bank: &str,
    liabilities: &[Rational],
    functions: &[PaymentFunction],
    errors: &mut Vec<ValidationError>,
) {
    let total: Rational = liabilities.iter().sum();
    if total.is_zero() {
        return;
    }
    let mut grid: BTreeSet<Rational> = BTreeSet::new();
    grid.insert(Rational::zero());
    grid.insert(total.clone());
    for f in functions {
        grid.extend(f.borders().iter().cloned());
    }
    let grid: Vec<Rational> = grid.into_iter().filter(|x| x <= &total).collect();
    for w in grid.windows(2) {
        let sum: Rational = functions.iter().map(|f| f.slope_at(&w[0])).sum();
        if !sum.is_one() {
            errors.push(ValidationError::SlopeSumViolation {
                bank: bank.to_string(),
                lo: w[0].clone(),
                hi: w[1].clone(),
                sum,
            });
        }
    }
}
