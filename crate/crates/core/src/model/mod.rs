//! Banks, claims, payment functions and the validated network container.

mod network;
mod payment;
mod scheme;

pub use network::{
    validate_network, Bank, BankId, BankSpec, Claim, ClaimId, ClaimSpec, FinancialNetwork,
    NetworkSpec, PaymentScheme, PiecewiseEdge, SchemeKind, SchemeSpec, ValidationError,
    ValidationErrors,
};
pub use payment::{Liability, PaymentFunction, PaymentFunctionError};
pub use scheme::{make_edge_ranking, make_priority_proportional, make_proportional, SchemeError};
