//! Flat text record for plans.
//!
//! ```text
//! scheme fully-secure
//! servers 9
//! colluding 1
//! modulus 101
//! points 1 2 3 4 5 6 7 8 9
//! a_parts 2
//! a_keys 1
//! a_exponents 0 1 2
//! b_parts 2
//! b_keys 1
//! b_exponents 0 3 6
//! desired 0:1:1 1:2:1 3:1:2 4:2:2
//! total_degree 8
//! ```
//!
//! `desired` entries are `degree:a_block:b_block` with 1-based blocks.
//! Lines may appear in any order; every key is required exactly once.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::plan::{DesiredTerm, SchemePlan};
use super::{SchemeError, SchemeKind, SchemeParams};
use crate::field::PrimeField;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("plan record line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("plan record is missing `{0}`")]
    Missing(&'static str),
    #[error("plan record is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

const KEYS: [&str; 13] = [
    "scheme",
    "servers",
    "colluding",
    "modulus",
    "points",
    "a_parts",
    "a_keys",
    "a_exponents",
    "b_parts",
    "b_keys",
    "b_exponents",
    "desired",
    "total_degree",
];

fn join(values: &[u64]) -> String {
    values
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

impl SchemePlan {
    pub fn to_record(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let desired: Vec<String> = self
            .desired
            .iter()
            .map(|d| format!("{}:{}:{}", d.degree, d.a_block + 1, d.b_block + 1))
            .collect();
        let _ = writeln!(s, "scheme {}", p.kind());
        let _ = writeln!(s, "servers {}", p.n_servers());
        let _ = writeln!(s, "colluding {}", p.n_colluding());
        let _ = writeln!(s, "modulus {}", p.field().modulus());
        let _ = writeln!(s, "points {}", join(p.eval_points()));
        let _ = writeln!(s, "a_parts {}", self.a_parts);
        let _ = writeln!(s, "a_keys {}", self.a_keys);
        let _ = writeln!(s, "a_exponents {}", join(&self.a_exponents));
        let _ = writeln!(s, "b_parts {}", self.b_parts);
        let _ = writeln!(s, "b_keys {}", self.b_keys);
        let _ = writeln!(s, "b_exponents {}", join(&self.b_exponents));
        let _ = writeln!(s, "desired {}", desired.join(" "));
        let _ = writeln!(s, "total_degree {}", self.total_degree);
        s
    }

    pub fn from_record(text: &str) -> Result<Self, RecordError> {
        let mut fields: HashMap<&str, (usize, &str)> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            let Some(key) = KEYS.iter().find(|k| **k == key) else {
                return Err(RecordError::Syntax {
                    line: i + 1,
                    msg: format!("unknown key `{key}`"),
                });
            };
            if fields.insert(key, (i + 1, rest.trim())).is_some() {
                return Err(RecordError::Syntax {
                    line: i + 1,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        let get = |key: &'static str| fields.get(key).copied().ok_or(RecordError::Missing(key));
        let list = |key: &'static str| -> Result<Vec<u64>, RecordError> {
            let (line, v) = get(key)?;
            v.split_whitespace()
                .map(|t| {
                    t.parse().map_err(|_| RecordError::Syntax {
                        line,
                        msg: format!("`{t}` is not an integer"),
                    })
                })
                .collect()
        };
        let one = |key: &'static str| -> Result<u64, RecordError> {
            let values = list(key)?;
            match values[..] {
                [v] => Ok(v),
                _ => Err(RecordError::Syntax {
                    line: get(key)?.0,
                    msg: format!("`{key}` takes one integer"),
                }),
            }
        };

        let kind: SchemeKind = get("scheme")?.1.parse()?;
        let field = PrimeField::new(one("modulus")?).map_err(SchemeError::from)?;
        let params = SchemeParams::from_parts(
            kind,
            one("servers")? as usize,
            one("colluding")? as usize,
            field,
            list("points")?,
        )?;

        let (desired_line, desired_text) = get("desired")?;
        let desired = desired_text
            .split_whitespace()
            .map(|t| {
                let parts: Vec<&str> = t.split(':').collect();
                let nums: Option<Vec<u64>> = parts.iter().map(|p| p.parse().ok()).collect();
                match nums.as_deref() {
                    Some(&[degree, a, b]) if a >= 1 && b >= 1 => Ok(DesiredTerm {
                        degree,
                        a_block: a as usize - 1,
                        b_block: b as usize - 1,
                    }),
                    _ => Err(RecordError::Syntax {
                        line: desired_line,
                        msg: format!("bad desired entry `{t}`"),
                    }),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;

        let plan = SchemePlan {
            params,
            a_parts: one("a_parts")? as usize,
            a_keys: one("a_keys")? as usize,
            a_exponents: list("a_exponents")?,
            b_parts: one("b_parts")? as usize,
            b_keys: one("b_keys")? as usize,
            b_exponents: list("b_exponents")?,
            desired,
            total_degree: one("total_degree")?,
        };
        plan.check_shape()?;
        Ok(plan)
    }

    /// Structural consistency needed before encoding can index into the
    /// exponent lists.
    fn check_shape(&self) -> Result<(), RecordError> {
        let bad = |msg: String| Err(RecordError::Inconsistent(msg));
        if self.a_parts == 0 || self.a_exponents.len() != self.a_parts + self.a_keys {
            return bad(format!(
                "{} A exponents for {} blocks and {} keys",
                self.a_exponents.len(),
                self.a_parts,
                self.a_keys
            ));
        }
        if self.encodes_b() {
            if self.b_parts == 0 || self.b_exponents.len() != self.b_parts + self.b_keys {
                return bad(format!(
                    "{} B exponents for {} blocks and {} keys",
                    self.b_exponents.len(),
                    self.b_parts,
                    self.b_keys
                ));
            }
        } else if self.b_parts != 1 || self.b_keys != 0 || !self.b_exponents.is_empty() {
            return bad("one-sided plans keep B public and whole".into());
        }
        if let Some(d) = self
            .desired
            .iter()
            .find(|d| d.a_block >= self.a_parts || d.b_block >= self.b_parts)
        {
            return bad(format!(
                "desired block ({}, {}) outside the grid",
                d.a_block + 1,
                d.b_block + 1
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::{plan_aligned_8_1, plan_fully_secure, plan_one_sided};
    use proptest::prelude::*;

    fn f(q: u64) -> PrimeField {
        PrimeField::new(q).unwrap()
    }

    #[test]
    fn fully_secure_record_layout() {
        let params = SchemeParams::new(SchemeKind::FullySecure, 9, 1, f(101)).unwrap();
        let plan = plan_fully_secure(&params, None).unwrap();
        let text = plan.to_record();
        assert_eq!(
            text,
            "scheme fully-secure\nservers 9\ncolluding 1\nmodulus 101\npoints 1 2 3 4 5 6 7 8 9\n\
             a_parts 2\na_keys 1\na_exponents 0 1 2\nb_parts 2\nb_keys 1\nb_exponents 0 3 6\n\
             desired 0:1:1 1:2:1 3:1:2 4:2:2\ntotal_degree 8\n"
        );
        assert_eq!(SchemePlan::from_record(&text).unwrap(), plan);
    }

    #[test]
    fn record_rejects_bad_input() {
        let params = SchemeParams::new(SchemeKind::Aligned, 8, 1, f(11)).unwrap();
        let text = plan_aligned_8_1(&params).unwrap().to_record();
        let dropped: String = text.lines().filter(|l| !l.starts_with("points")).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            SchemePlan::from_record(&dropped),
            Err(RecordError::Missing("points"))
        ));
        let dup = format!("{text}servers 8\n");
        assert!(matches!(SchemePlan::from_record(&dup), Err(RecordError::Syntax { .. })));
        let short = text.replace("a_exponents 0 1 2", "a_exponents 0 1");
        assert!(matches!(
            SchemePlan::from_record(&short),
            Err(RecordError::Inconsistent(_))
        ));
        let bad_kind = text.replace("scheme aligned", "scheme magic");
        assert!(SchemePlan::from_record(&bad_kind).is_err());
        let zero_point = text.replace("points 1 2", "points 0 2");
        assert!(SchemePlan::from_record(&zero_point).is_err());
    }

    proptest! {
        #[test]
        fn records_round_trip(n in 1usize..=30, ell_seed in 0usize..30, kind in 0u8..3) {
            let q = f(101);
            let plan = match kind {
                0 => {
                    let ell = ell_seed % n;
                    plan_one_sided(&SchemeParams::new(SchemeKind::OneSided, n, ell, q).unwrap()).unwrap()
                }
                1 => {
                    let ell = ell_seed % 3;
                    let params = SchemeParams::new(SchemeKind::FullySecure, n, ell, q).unwrap();
                    match plan_fully_secure(&params, None) {
                        Ok(p) => p,
                        Err(_) => return Ok(()),
                    }
                }
                _ => plan_aligned_8_1(&SchemeParams::new(SchemeKind::Aligned, 8, 1, q).unwrap()).unwrap(),
            };
            prop_assert_eq!(SchemePlan::from_record(&plan.to_record()).unwrap(), plan);
        }
    }
}
