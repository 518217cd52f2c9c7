//! Secure encoding schemes.
//!
//! Three families share one representation, [`SchemePlan`]: every share is
//! a polynomial in the server's evaluation point whose coefficients are the
//! data blocks and the uniformly random key blocks, each assigned an
//! exponent. The product a server returns is then a polynomial whose
//! desired coefficients (the block products `A_j B_j'`) sit on degrees no
//! other term touches, so the user recovers them by interpolation.
//!
//! * one-sided: `A` is split into `N - l` row blocks and masked by `l` keys;
//!   `B` is public and sent in the clear.
//! * fully secure: `A` and `B` are both split into `r` blocks with `l` keys
//!   each, exponents spaced so every product term lands on its own degree.
//! * aligned: undesired cross terms are allowed to pile up on shared
//!   degrees, lowering the total degree (the fixed `(8, 1)` instance, or any
//!   user-supplied exponent lists that pass [`validate_exponent_plan`]).

mod codec;
mod plan;
mod record;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::field::{FieldError, PrimeField};
use crate::interp::InterpError;
use crate::linalg::MatrixError;

pub use codec::{
    decode, encode, encode_with_keys, server_compute, AnswerSet, KeyMaterial, ProductLayout,
    Share, ShareSet,
};
pub use plan::{
    achievable_rate, default_r, plan_aligned_8_1, plan_custom, plan_for, plan_fully_secure,
    plan_one_sided, validate_exponent_plan, DesiredTerm, Operand, PlanFailure, PlanVerdict,
    ProductTerm, SchemePlan, TermRef,
};
pub use record::RecordError;

/// Exact rational used for every rate in this crate.
pub type Rate = num_rational::Ratio<u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    OneSided,
    FullySecure,
    Aligned,
}

impl SchemeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::OneSided => "one-sided",
            SchemeKind::FullySecure => "fully-secure",
            SchemeKind::Aligned => "aligned",
        }
    }

    /// Whether `B` is private and therefore encoded per server.
    pub fn encodes_b(&self) -> bool {
        !matches!(self, SchemeKind::OneSided)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one-sided" => Ok(SchemeKind::OneSided),
            "fully-secure" | "fully" => Ok(SchemeKind::FullySecure),
            "aligned" => Ok(SchemeKind::Aligned),
            other => Err(SchemeError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("unknown scheme kind `{0}`")]
    UnknownKind(String),
    #[error("need at least one server")]
    NoServers,
    #[error("{colluding} colluding servers out of {servers}: must be fewer than the server count")]
    TooManyColluders { servers: usize, colluding: usize },
    #[error("field F_{modulus} is too small for {servers} distinct nonzero evaluation points")]
    FieldTooSmall { modulus: u64, servers: usize },
    #[error("invalid evaluation points: {0}")]
    BadPoints(String),
    #[error("plan builder for {expected} called with {got} parameters")]
    WrongKind { expected: SchemeKind, got: SchemeKind },
    #[error("fully-secure scheme with r={r}, l={colluding} needs {needed} servers, have {servers}")]
    Infeasible {
        r: usize,
        colluding: usize,
        needed: usize,
        servers: usize,
    },
    #[error("no block count r >= 1 fits {servers} servers with {colluding} colluding")]
    NoFeasibleR { servers: usize, colluding: usize },
    #[error("the fixed aligned scheme is defined for N=8, l=1 (got N={servers}, l={colluding})")]
    AlignedShape { servers: usize, colluding: usize },
    #[error("{operand} exponent list has {got} entries, expected {expected}")]
    TermCount {
        operand: Operand,
        expected: usize,
        got: usize,
    },
    #[error("incompatible dimensions: {0}")]
    Dimensions(String),
    #[error("key material does not fit the plan: {0}")]
    Keys(String),
    #[error("decoding needs answers from {needed} servers, got {got}")]
    InsufficientAnswers { needed: usize, got: usize },
    #[error("answer from server {server} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    AnswerShape {
        server: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("evaluation points repeat; this plan supports security audits only, not decoding")]
    NotDecodable,
    #[error("one-sided share needs the public matrix B")]
    MissingPublicB,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Interp(#[from] InterpError),
}

/// Who takes part and where each server evaluates its share polynomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeParams {
    kind: SchemeKind,
    n_servers: usize,
    n_colluding: usize,
    field: PrimeField,
    eval_points: Vec<u64>,
}

impl SchemeParams {
    /// Parameters with the default points `x_i = i` for `i = 1..=N`.
    pub fn new(
        kind: SchemeKind,
        n_servers: usize,
        n_colluding: usize,
        field: PrimeField,
    ) -> Result<Self, SchemeError> {
        Self::check_counts(kind, n_servers, n_colluding)?;
        if field.modulus() <= n_servers as u64 {
            return Err(SchemeError::FieldTooSmall {
                modulus: field.modulus(),
                servers: n_servers,
            });
        }
        Ok(Self {
            kind,
            n_servers,
            n_colluding,
            field,
            eval_points: (1..=n_servers as u64).collect(),
        })
    }

    /// Parameters for exhaustive audits over fields with fewer than `N`
    /// nonzero elements. Points cycle through `1..q-1`, so they repeat when
    /// `q <= N`; such plans can be encoded and audited but not decoded.
    pub fn desk_scale(
        kind: SchemeKind,
        n_servers: usize,
        n_colluding: usize,
        field: PrimeField,
    ) -> Result<Self, SchemeError> {
        Self::check_counts(kind, n_servers, n_colluding)?;
        let nonzero = field.modulus() - 1;
        Ok(Self {
            kind,
            n_servers,
            n_colluding,
            field,
            eval_points: (0..n_servers as u64).map(|i| i % nonzero + 1).collect(),
        })
    }

    /// Replaces the evaluation points; they must be nonzero and pairwise
    /// distinct.
    pub fn with_points(mut self, points: Vec<u64>) -> Result<Self, SchemeError> {
        Self::check_points(self.field, self.n_servers, &points, true)?;
        self.eval_points = points.into_iter().map(|p| self.field.reduce(p)).collect();
        Ok(self)
    }

    pub(crate) fn from_parts(
        kind: SchemeKind,
        n_servers: usize,
        n_colluding: usize,
        field: PrimeField,
        eval_points: Vec<u64>,
    ) -> Result<Self, SchemeError> {
        Self::check_counts(kind, n_servers, n_colluding)?;
        Self::check_points(field, n_servers, &eval_points, false)?;
        Ok(Self {
            kind,
            n_servers,
            n_colluding,
            field,
            eval_points,
        })
    }

    fn check_counts(kind: SchemeKind, n: usize, ell: usize) -> Result<(), SchemeError> {
        if n == 0 {
            return Err(SchemeError::NoServers);
        }
        if kind == SchemeKind::OneSided && ell >= n {
            return Err(SchemeError::TooManyColluders {
                servers: n,
                colluding: ell,
            });
        }
        Ok(())
    }

    fn check_points(
        field: PrimeField,
        n: usize,
        points: &[u64],
        require_distinct: bool,
    ) -> Result<(), SchemeError> {
        if points.len() != n {
            return Err(SchemeError::BadPoints(format!(
                "{} points for {n} servers",
                points.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for &p in points {
            let p = field.reduce(p);
            if p == 0 {
                return Err(SchemeError::BadPoints("points must be nonzero".into()));
            }
            if !seen.insert(p) && require_distinct {
                return Err(SchemeError::BadPoints(format!("point {p} repeats")));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn n_servers(&self) -> usize {
        self.n_servers
    }

    pub fn n_colluding(&self) -> usize {
        self.n_colluding
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn eval_points(&self) -> &[u64] {
        &self.eval_points
    }

    /// True when all evaluation points are pairwise distinct.
    pub fn is_decodable(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.eval_points.iter().all(|p| seen.insert(*p))
    }
}
