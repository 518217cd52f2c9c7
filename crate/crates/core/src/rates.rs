//! Capacity and rate calculators, and the sweep tables behind the rate
//! comparison plots.

use std::fmt::Write as _;

use thiserror::Error;

use crate::field::PrimeField;
use crate::schemes::{achievable_rate, default_r, plan_fully_secure, Rate, SchemeKind, SchemeParams};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RateError {
    #[error("{colluding} colluding servers out of {servers}: must be fewer than the server count")]
    TooManyColluders { servers: usize, colluding: usize },
    #[error("need at least one server")]
    NoServers,
    #[error("fully-secure scheme has no block count r >= 1 for N={servers}, l={colluding}")]
    Infeasible { servers: usize, colluding: usize },
    #[error("empty range {from}..={to}")]
    EmptyRange { from: usize, to: usize },
}

/// `(N - l) / N`.
pub fn one_sided_capacity(n: usize, ell: usize) -> Result<Rate, RateError> {
    if n == 0 {
        return Err(RateError::NoServers);
    }
    if ell >= n {
        return Err(RateError::TooManyColluders {
            servers: n,
            colluding: ell,
        });
    }
    Ok(Rate::new((n - ell) as u64, n as u64))
}

/// The closed-form block count `ceil(sqrt(N) - l)`, possibly below 1.
pub fn paper_r(n: usize) -> usize {
    let s = n.isqrt();
    if s * s == n {
        s
    } else {
        s + 1
    }
}

/// Both fully-secure figures for one `(N, l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FullySecureRate {
    /// Closed-form `r`, when it is at least 1.
    pub paper_r: Option<usize>,
    /// `r^2 / (r + l)^2` at the closed-form `r`.
    pub paper_rate: Option<Rate>,
    /// Largest `r` whose plan fits `N` servers.
    pub feasible_r: Option<usize>,
    /// Rate of the plan actually built at `feasible_r`.
    pub feasible_rate: Option<Rate>,
    /// The closed-form `r` needs more than `N` answers.
    pub diverges: bool,
}

/// Closed-form and feasible fully-secure rates. Errors only when neither
/// variant admits `r >= 1`.
pub fn fully_secure_rate(n: usize, ell: usize) -> Result<FullySecureRate, RateError> {
    let r = fully_secure_rate_row(n, ell)?;
    if r.paper_rate.is_none() && r.feasible_rate.is_none() {
        return Err(RateError::Infeasible {
            servers: n,
            colluding: ell,
        });
    }
    Ok(r)
}

fn fully_secure_rate_row(n: usize, ell: usize) -> Result<FullySecureRate, RateError> {
    if n == 0 {
        return Err(RateError::NoServers);
    }
    // ceil(sqrt(N) - l) = ceil(sqrt(N)) - l since l is an integer.
    let ceil_root = paper_r(n);
    let paper_r = ceil_root.checked_sub(ell).filter(|&r| r >= 1);
    let paper_rate = paper_r.map(|r| Rate::new((r * r) as u64, ((r + ell) * (r + ell)) as u64));
    let feasible_r = default_r(n, ell);
    let feasible_rate = match feasible_r {
        Some(_) => {
            let field = PrimeField::production();
            let params = SchemeParams::new(SchemeKind::FullySecure, n, ell, field)
                .expect("production field exceeds any sweep size");
            let plan = plan_fully_secure(&params, None).expect("default r is feasible");
            Some(achievable_rate(&plan))
        }
        None => None,
    };
    Ok(FullySecureRate {
        paper_r,
        paper_rate,
        feasible_r,
        feasible_rate,
        diverges: n < ceil_root * ceil_root,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatePoint {
    pub n: usize,
    pub ell: usize,
    pub one_sided: Rate,
    pub fully: FullySecureRate,
}

impl RatePoint {
    pub fn new(n: usize, ell: usize) -> Result<Self, RateError> {
        Ok(Self {
            n,
            ell,
            one_sided: one_sided_capacity(n, ell)?,
            fully: fully_secure_rate_row(n, ell)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    /// Fixed `l`, `N` over `n_from..=n_to`.
    FixEll { ell: usize, n_from: usize, n_to: usize },
    /// Fixed `N`, `l` over `ell_from..=ell_to`.
    FixN { n: usize, ell_from: usize, ell_to: usize },
}

/// Rows in sweep order. Points where the one-sided capacity is undefined
/// (`l >= N`) are rejected.
pub fn sweep_table(sweep: Sweep) -> Result<Vec<RatePoint>, RateError> {
    match sweep {
        Sweep::FixEll { ell, n_from, n_to } => {
            if n_from > n_to {
                return Err(RateError::EmptyRange { from: n_from, to: n_to });
            }
            (n_from..=n_to).map(|n| RatePoint::new(n, ell)).collect()
        }
        Sweep::FixN { n, ell_from, ell_to } => {
            if ell_from > ell_to {
                return Err(RateError::EmptyRange {
                    from: ell_from,
                    to: ell_to,
                });
            }
            (ell_from..=ell_to).map(|ell| RatePoint::new(n, ell)).collect()
        }
    }
}

pub const CSV_HEADER: &str = "N,ell,one_sided,fully_paper,fully_feasible,diverges,one_sided_f,fully_paper_f,fully_feasible_f";

fn ratio_cell(r: Option<Rate>) -> String {
    r.map(|r| format!("{}/{}", r.numer(), r.denom())).unwrap_or_default()
}

fn float_cell(r: Option<Rate>) -> String {
    r.map(|r| format!("{:.6}", *r.numer() as f64 / *r.denom() as f64))
        .unwrap_or_default()
}

/// CSV with exact `p/q` cells and 6-decimal float copies. Undefined rates
/// are empty cells.
pub fn to_csv(rows: &[RatePoint]) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for p in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            p.n,
            p.ell,
            ratio_cell(Some(p.one_sided)),
            ratio_cell(p.fully.paper_rate),
            ratio_cell(p.fully.feasible_rate),
            p.fully.diverges,
            float_cell(Some(p.one_sided)),
            float_cell(p.fully.paper_rate),
            float_cell(p.fully.feasible_rate),
        );
    }
    s
}
