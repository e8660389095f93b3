//! JSON documents: networks, range targets and results.
//!
//! Exact numbers travel as strings (`"3"`, `"3/4"`, `"0.75"`); plain JSON
//! integers are accepted on input, floats are rejected.

use std::fmt;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::clearing::ClearingState;
use crate::model::{
    BankSpec, ClaimSpec, FinancialNetwork, NetworkSpec, PiecewiseEdge, SchemeKind, SchemeSpec, ValidationErrors,
};
use crate::rational::{int, parse_exact, to_decimal_string, to_exact_string, Rational};
use crate::state_space::{RangeSpec, RangeTarget};

pub const FORMAT_VERSION: &str = "1";
pub const DECIMAL_DIGITS: u32 = 12;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid network: {0}")]
    Invalid(#[from] ValidationErrors),
}

/// An exact number in a document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exact(pub Rational);

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_exact_string(&self.0))
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ExactVisitor;

        impl Visitor<'_> for ExactVisitor {
            type Value = Exact;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number as a string (\"3\", \"3/4\", \"0.75\") or an integer")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Exact, E> {
                parse_exact(v).map(Exact).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Exact, E> {
                Ok(Exact(int(v)))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Exact, E> {
                Ok(Exact(Rational::from_integer(v.into())))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Exact, E> {
                Err(E::custom(format!("floating-point number {v} is not exact; write it as a string")))
            }
        }

        d.deserialize_any(ExactVisitor)
    }
}

fn one() -> Exact {
    Exact(int(1))
}

fn is_one(x: &Exact) -> bool {
    x.0 == int(1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub format_version: String,
    pub banks: Vec<BankEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub payment_schemes: Vec<SchemeEntry>,
    #[serde(default)]
    pub claims: Vec<ClaimEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankEntry {
    pub id: String,
    pub external_assets: Exact,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub alpha: Exact,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub beta: Exact,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimEntry {
    pub debtor: String,
    pub creditor: String,
    pub liability: Exact,
}

/// Unknown fields are rejected by [`SchemeDoc`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeEntry {
    pub bank: String,
    #[serde(flatten)]
    pub kind: SchemeDoc,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeDoc {
    Proportional,
    EdgeRanking { order: Vec<String> },
    PriorityProportional { classes: Vec<Vec<String>> },
    Piecewise { edges: Vec<PiecewiseEntry> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseEntry {
    pub creditor: String,
    /// `0 = x_0 < .. < x_k = l_e`
    pub borders: Vec<Exact>,
    pub slopes: Vec<Exact>,
}

fn exacts(xs: &[Rational]) -> Vec<Exact> {
    xs.iter().cloned().map(Exact).collect()
}

fn rationals(xs: &[Exact]) -> Vec<Rational> {
    xs.iter().map(|x| x.0.clone()).collect()
}

impl From<&NetworkSpec> for NetworkDocument {
    fn from(spec: &NetworkSpec) -> Self {
        NetworkDocument {
            format_version: FORMAT_VERSION.into(),
            banks: spec
                .banks
                .iter()
                .map(|b| BankEntry {
                    id: b.id.clone(),
                    external_assets: Exact(b.external_assets.clone()),
                    alpha: Exact(b.alpha.clone()),
                    beta: Exact(b.beta.clone()),
                })
                .collect(),
            payment_schemes: spec
                .schemes
                .iter()
                .map(|s| SchemeEntry {
                    bank: s.bank.clone(),
                    kind: match &s.kind {
                        SchemeKind::Proportional => SchemeDoc::Proportional,
                        SchemeKind::EdgeRanking { order } => SchemeDoc::EdgeRanking { order: order.clone() },
                        SchemeKind::PriorityProportional { classes } => {
                            SchemeDoc::PriorityProportional { classes: classes.clone() }
                        }
                        SchemeKind::Piecewise { edges } => SchemeDoc::Piecewise {
                            edges: edges
                                .iter()
                                .map(|e| PiecewiseEntry {
                                    creditor: e.creditor.clone(),
                                    borders: exacts(&e.borders),
                                    slopes: exacts(&e.slopes),
                                })
                                .collect(),
                        },
                    },
                })
                .collect(),
            claims: spec
                .claims
                .iter()
                .map(|c| ClaimEntry {
                    debtor: c.debtor.clone(),
                    creditor: c.creditor.clone(),
                    liability: Exact(c.liability.clone()),
                })
                .collect(),
        }
    }
}

impl NetworkDocument {
    pub fn to_spec(&self) -> NetworkSpec {
        NetworkSpec {
            banks: self
                .banks
                .iter()
                .map(|b| BankSpec {
                    id: b.id.clone(),
                    external_assets: b.external_assets.0.clone(),
                    alpha: b.alpha.0.clone(),
                    beta: b.beta.0.clone(),
                })
                .collect(),
            claims: self
                .claims
                .iter()
                .map(|c| ClaimSpec { debtor: c.debtor.clone(), creditor: c.creditor.clone(), liability: c.liability.0.clone() })
                .collect(),
            schemes: self
                .payment_schemes
                .iter()
                .map(|s| SchemeSpec {
                    bank: s.bank.clone(),
                    kind: match &s.kind {
                        SchemeDoc::Proportional => SchemeKind::Proportional,
                        SchemeDoc::EdgeRanking { order } => SchemeKind::EdgeRanking { order: order.clone() },
                        SchemeDoc::PriorityProportional { classes } => {
                            SchemeKind::PriorityProportional { classes: classes.clone() }
                        }
                        SchemeDoc::Piecewise { edges } => SchemeKind::Piecewise {
                            edges: edges
                                .iter()
                                .map(|e| PiecewiseEdge {
                                    creditor: e.creditor.clone(),
                                    borders: rationals(&e.borders),
                                    slopes: rationals(&e.slopes),
                                })
                                .collect(),
                        },
                    },
                })
                .collect(),
        }
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read { path: path.display().to_string(), source })
}

/// Parses a network document without validating the network itself.
pub fn parse_document(text: &str) -> Result<NetworkDocument, IoError> {
    let doc: NetworkDocument = serde_json::from_str(text).map_err(|e| IoError::Parse(e.to_string()))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(IoError::Parse(format!(
            "unsupported format_version {:?}, expected {FORMAT_VERSION:?}",
            doc.format_version
        )));
    }
    if doc.banks.is_empty() {
        return Err(IoError::Parse("banks: at least one bank is required".into()));
    }
    Ok(doc)
}

pub fn parse_network_str(text: &str) -> Result<FinancialNetwork, IoError> {
    Ok(parse_document(text)?.to_spec().build()?)
}

pub fn parse_network(path: impl AsRef<Path>) -> Result<FinancialNetwork, IoError> {
    parse_network_str(&read(path.as_ref())?)
}

/// Serializes a network. Returns `None` for networks with unbounded claims,
/// which only arise from internal rewrites.
pub fn network_to_json(net: &FinancialNetwork) -> Option<String> {
    let spec = net.to_spec()?;
    Some(serde_json::to_string_pretty(&NetworkDocument::from(&spec)).expect("documents serialize"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsDocument {
    pub targets: Vec<TargetEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    pub bank: String,
    pub lo: Exact,
    pub hi: Exact,
}

pub fn parse_targets_str(net: &FinancialNetwork, text: &str) -> Result<RangeSpec, IoError> {
    let doc: TargetsDocument = serde_json::from_str(text).map_err(|e| IoError::Parse(e.to_string()))?;
    let targets = doc
        .targets
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let bank = net
                .bank_id(&t.bank)
                .ok_or_else(|| IoError::Parse(format!("targets[{i}].bank: unknown bank {:?}", t.bank)))?;
            Ok(RangeTarget { bank, lo: t.lo.0, hi: t.hi.0 })
        })
        .collect::<Result<_, IoError>>()?;
    Ok(RangeSpec { targets })
}

pub fn parse_targets(net: &FinancialNetwork, path: impl AsRef<Path>) -> Result<RangeSpec, IoError> {
    parse_targets_str(net, &read(path.as_ref())?)
}

/// An exact value with its decimal projection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Value {
    pub exact: Exact,
    pub decimal: String,
}

impl Value {
    pub fn new(x: &Rational) -> Self {
        Value { exact: Exact(x.clone()), decimal: to_decimal_string(x, DECIMAL_DIGITS) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankValue {
    pub bank: String,
    #[serde(flatten)]
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimValue {
    pub debtor: String,
    pub creditor: String,
    #[serde(flatten)]
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub operation: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub step_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub flood_count: Option<usize>,
    pub solver_version: String,
}

/// Output of every CLI subcommand. `exact` fields are authoritative.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub format_version: String,
    pub assets: Vec<BankValue>,
    pub payments: Vec<ClaimValue>,
    pub metadata: Metadata,
    /// Operation-specific details (range witness, trade returns, ...).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub outcome: Option<serde_json::Value>,
}

impl ResultDocument {
    pub fn new(operation: &str) -> Self {
        ResultDocument {
            format_version: FORMAT_VERSION.into(),
            assets: Vec::new(),
            payments: Vec::new(),
            metadata: Metadata {
                operation: operation.into(),
                step_count: None,
                flood_count: None,
                solver_version: concat!("finclear ", env!("CARGO_PKG_VERSION")).into(),
            },
            outcome: None,
        }
    }

    /// Fills assets and payments from a state of `net`.
    pub fn with_state(mut self, net: &FinancialNetwork, state: &ClearingState) -> Self {
        self.assets = net
            .bank_ids()
            .map(|v| BankValue { bank: net.name(v).into(), value: Value::new(&state[v]) })
            .collect();
        self.payments = net
            .claims()
            .iter()
            .zip(state.payments(net))
            .map(|(c, p)| ClaimValue {
                debtor: net.name(c.debtor).into(),
                creditor: net.name(c.creditor).into(),
                value: Value::new(&p),
            })
            .collect();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents serialize")
    }

    /// Reads the exact assets back as a state of `net`, matching banks by id.
    pub fn state_for(&self, net: &FinancialNetwork) -> Result<ClearingState, IoError> {
        let mut assets = vec![None; net.num_banks()];
        for entry in &self.assets {
            let v = net
                .bank_id(&entry.bank)
                .ok_or_else(|| IoError::Parse(format!("assets: unknown bank {:?}", entry.bank)))?;
            assets[v.0] = Some(entry.value.exact.0.clone());
        }
        let assets = assets
            .into_iter()
            .enumerate()
            .map(|(i, a)| a.ok_or_else(|| IoError::Parse(format!("assets: bank {:?} missing", net.banks()[i].name))))
            .collect::<Result<_, _>>()?;
        Ok(ClearingState::new(assets))
    }
}

pub fn parse_result_str(text: &str) -> Result<ResultDocument, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Parse(e.to_string()))
}

pub fn parse_result(path: impl AsRef<Path>) -> Result<ResultDocument, IoError> {
    parse_result_str(&read(path.as_ref())?)
}
