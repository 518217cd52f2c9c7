//! Secure distributed matrix multiplication over prime fields.
//!
//! A user holding `A` (and possibly `B`) hands each of `N` honest-but-curious
//! servers an encoded share, collects one answer per server and recovers
//! `AB`, while any `l` colluding servers learn nothing about the private
//! inputs. The crate provides the field and matrix arithmetic, the encoding
//! schemes, an exhaustive secrecy auditor for tiny fields, rate calculators,
//! and a local/TCP execution harness.

pub mod audit;
pub mod field;
pub mod harness;
pub mod interp;
pub mod linalg;
pub mod rates;
pub mod schemes;

pub use audit::{AuditDims, AuditReport, CollusionSet, Expectation, Verdict};
pub use field::{FieldElement, FieldError, PrimeField};
pub use linalg::{FieldMatrix, MatrixError};
pub use rates::{RatePoint, Sweep};
pub use schemes::{
    decode, encode, plan_for, Rate, SchemeError, SchemeKind, SchemeParams, SchemePlan,
};
