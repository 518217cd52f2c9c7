use std::collections::BTreeMap;
use std::fmt;

use super::{Rate, SchemeError, SchemeKind, SchemeParams};

/// Which input matrix a term belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operand {
    A,
    B,
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::A => f.write_str("A"),
            Operand::B => f.write_str("B"),
        }
    }
}

/// A coefficient of a share polynomial: a data block or a key, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermRef {
    Data(usize),
    Key(usize),
}

impl TermRef {
    fn label(&self, operand: Operand) -> String {
        match self {
            TermRef::Data(j) => format!("{operand}{}", j + 1),
            TermRef::Key(k) => format!("K{operand}{}", k + 1),
        }
    }
}

/// One summand of the answer polynomial. `b` is `None` when `B` is public.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductTerm {
    pub degree: u64,
    pub a: TermRef,
    pub b: Option<TermRef>,
}

impl ProductTerm {
    pub fn is_desired(&self) -> bool {
        matches!(
            (self.a, self.b),
            (TermRef::Data(_), None) | (TermRef::Data(_), Some(TermRef::Data(_)))
        )
    }
}

impl fmt::Display for ProductTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.a, self.b) {
            // With a single public B the `B1` subscript is noise.
            (a, None) => write!(f, "{}B", a.label(Operand::A)),
            (a, Some(b)) => write!(f, "{}{}", a.label(Operand::A), b.label(Operand::B)),
        }
    }
}

/// A desired block product `A_{a_block} B_{b_block}` and the degree it is
/// read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesiredTerm {
    pub degree: u64,
    pub a_block: usize,
    pub b_block: usize,
}

/// A fully resolved encoding: block counts, key counts and the exponent of
/// every term in each share polynomial.
///
/// Exponent lists hold the data blocks first, then the keys. For one-sided
/// plans `b_exponents` is empty: `B` is public and enters every answer with
/// exponent zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemePlan {
    pub(crate) params: SchemeParams,
    pub(crate) a_parts: usize,
    pub(crate) a_keys: usize,
    pub(crate) a_exponents: Vec<u64>,
    pub(crate) b_parts: usize,
    pub(crate) b_keys: usize,
    pub(crate) b_exponents: Vec<u64>,
    pub(crate) desired: Vec<DesiredTerm>,
    pub(crate) total_degree: u64,
}

impl SchemePlan {
    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn kind(&self) -> SchemeKind {
        self.params.kind()
    }

    pub fn a_parts(&self) -> usize {
        self.a_parts
    }

    pub fn b_parts(&self) -> usize {
        self.b_parts
    }

    pub fn a_keys(&self) -> usize {
        self.a_keys
    }

    pub fn b_keys(&self) -> usize {
        self.b_keys
    }

    pub fn a_exponents(&self) -> &[u64] {
        &self.a_exponents
    }

    pub fn b_exponents(&self) -> &[u64] {
        &self.b_exponents
    }

    pub fn desired(&self) -> &[DesiredTerm] {
        &self.desired
    }

    pub fn total_degree(&self) -> u64 {
        self.total_degree
    }

    /// Number of answers the decoder interpolates from.
    pub fn answers_needed(&self) -> usize {
        self.total_degree as usize + 1
    }

    pub fn encodes_b(&self) -> bool {
        self.params.kind().encodes_b()
    }

    /// Desired degrees in ascending order.
    pub fn desired_degrees(&self) -> Vec<u64> {
        let mut d: Vec<u64> = self.desired.iter().map(|t| t.degree).collect();
        d.sort_unstable();
        d
    }

    pub fn a_terms(&self) -> impl Iterator<Item = (TermRef, u64)> + '_ {
        term_iter(self.a_parts, &self.a_exponents)
    }

    pub fn b_terms(&self) -> impl Iterator<Item = (TermRef, u64)> + '_ {
        term_iter(self.b_parts, &self.b_exponents)
    }

    /// Every summand of the answer polynomial.
    pub fn product_terms(&self) -> Vec<ProductTerm> {
        let mut out = Vec::new();
        for (a, ea) in self.a_terms() {
            if self.encodes_b() {
                for (b, eb) in self.b_terms() {
                    out.push(ProductTerm {
                        degree: ea + eb,
                        a,
                        b: Some(b),
                    });
                }
            } else {
                out.push(ProductTerm {
                    degree: ea,
                    a,
                    b: None,
                });
            }
        }
        out
    }

    /// Product terms grouped by degree.
    pub fn terms_by_degree(&self) -> BTreeMap<u64, Vec<ProductTerm>> {
        let mut map: BTreeMap<u64, Vec<ProductTerm>> = BTreeMap::new();
        for t in self.product_terms() {
            map.entry(t.degree).or_default().push(t);
        }
        map
    }
}

fn term_iter(parts: usize, exponents: &[u64]) -> impl Iterator<Item = (TermRef, u64)> + '_ {
    exponents.iter().enumerate().map(move |(i, &e)| {
        let t = if i < parts {
            TermRef::Data(i)
        } else {
            TermRef::Key(i - parts)
        };
        (t, e)
    })
}

fn expect_kind(params: &SchemeParams, expected: SchemeKind) -> Result<(), SchemeError> {
    if params.kind() != expected {
        return Err(SchemeError::WrongKind {
            expected,
            got: params.kind(),
        });
    }
    Ok(())
}

/// Split `A` into `N - l` row blocks, mask with `l` keys on exponents
/// `N - l .. N - 1`.
pub fn plan_one_sided(params: &SchemeParams) -> Result<SchemePlan, SchemeError> {
    expect_kind(params, SchemeKind::OneSided)?;
    let n = params.n_servers();
    let ell = params.n_colluding();
    let parts = n - ell;
    Ok(SchemePlan {
        params: params.clone(),
        a_parts: parts,
        a_keys: ell,
        a_exponents: (0..n as u64).collect(),
        b_parts: 1,
        b_keys: 0,
        b_exponents: Vec::new(),
        desired: (0..parts)
            .map(|j| DesiredTerm {
                degree: j as u64,
                a_block: j,
                b_block: 0,
            })
            .collect(),
        total_degree: n as u64 - 1,
    })
}

/// The largest block count `r` with `(r + l)^2 <= N`, if any `r >= 1` fits.
pub fn default_r(n_servers: usize, n_colluding: usize) -> Option<usize> {
    let root = n_servers.isqrt();
    root.checked_sub(n_colluding).filter(|&r| r >= 1)
}

/// Degree-separated two-sided scheme with `r` blocks per input.
pub fn plan_fully_secure(
    params: &SchemeParams,
    r_override: Option<usize>,
) -> Result<SchemePlan, SchemeError> {
    expect_kind(params, SchemeKind::FullySecure)?;
    let n = params.n_servers();
    let ell = params.n_colluding();
    let r = match r_override {
        Some(r) => r,
        None => default_r(n, ell).ok_or(SchemeError::NoFeasibleR {
            servers: n,
            colluding: ell,
        })?,
    };
    let width = r + ell;
    if r == 0 || width * width > n {
        return Err(SchemeError::Infeasible {
            r,
            colluding: ell,
            needed: width * width,
            servers: n,
        });
    }
    let w = width as u64;
    let a_exponents: Vec<u64> = (0..w).collect();
    let b_exponents: Vec<u64> = (0..w).map(|t| t * w).collect();
    let mut desired = Vec::with_capacity(r * r);
    for jb in 0..r {
        for ja in 0..r {
            desired.push(DesiredTerm {
                degree: ja as u64 + jb as u64 * w,
                a_block: ja,
                b_block: jb,
            });
        }
    }
    Ok(SchemePlan {
        params: params.clone(),
        a_parts: r,
        a_keys: ell,
        a_exponents,
        b_parts: r,
        b_keys: ell,
        b_exponents,
        desired,
        total_degree: w * w - 1,
    })
}

/// The fixed `(8, 1)` aligned instance: `A~ = A1 + A2 x + KA x^2`,
/// `B~ = B1 + B2 x^3 + KB x^5`.
pub fn plan_aligned_8_1(params: &SchemeParams) -> Result<SchemePlan, SchemeError> {
    expect_kind(params, SchemeKind::Aligned)?;
    if params.n_servers() != 8 || params.n_colluding() != 1 {
        return Err(SchemeError::AlignedShape {
            servers: params.n_servers(),
            colluding: params.n_colluding(),
        });
    }
    plan_custom(params, 2, 2, vec![0, 1, 2], vec![0, 3, 5])
}

/// Builds a plan from explicit exponent lists (data blocks first, then `l`
/// keys, for each operand). The result is not checked for decodability or
/// alignment; run [`validate_exponent_plan`] on it.
pub fn plan_custom(
    params: &SchemeParams,
    a_parts: usize,
    b_parts: usize,
    a_exponents: Vec<u64>,
    b_exponents: Vec<u64>,
) -> Result<SchemePlan, SchemeError> {
    if params.kind() == SchemeKind::OneSided {
        return Err(SchemeError::WrongKind {
            expected: SchemeKind::Aligned,
            got: SchemeKind::OneSided,
        });
    }
    let ell = params.n_colluding();
    for (operand, parts, exps) in [
        (Operand::A, a_parts, &a_exponents),
        (Operand::B, b_parts, &b_exponents),
    ] {
        if parts == 0 || exps.len() != parts + ell {
            return Err(SchemeError::TermCount {
                operand,
                expected: parts + ell,
                got: exps.len(),
            });
        }
    }
    let mut desired = Vec::with_capacity(a_parts * b_parts);
    for (jb, &eb) in b_exponents[..b_parts].iter().enumerate() {
        for (ja, &ea) in a_exponents[..a_parts].iter().enumerate() {
            desired.push(DesiredTerm {
                degree: ea + eb,
                a_block: ja,
                b_block: jb,
            });
        }
    }
    let total_degree = a_exponents.iter().max().unwrap() + b_exponents.iter().max().unwrap();
    Ok(SchemePlan {
        params: params.clone(),
        a_parts,
        a_keys: ell,
        a_exponents,
        b_parts,
        b_keys: ell,
        b_exponents,
        desired,
        total_degree,
    })
}

/// Builds the default plan for `params.kind()`.
pub fn plan_for(params: &SchemeParams, r_override: Option<usize>) -> Result<SchemePlan, SchemeError> {
    match params.kind() {
        SchemeKind::OneSided => plan_one_sided(params),
        SchemeKind::FullySecure => plan_fully_secure(params, r_override),
        SchemeKind::Aligned => plan_aligned_8_1(params),
    }
}

/// Desired blocks recovered per answer downloaded, read off the plan's
/// structure.
pub fn achievable_rate(plan: &SchemePlan) -> Rate {
    Rate::new(plan.desired.len() as u64, plan.total_degree + 1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanFailure {
    /// A desired product shares its degree with another term.
    DesiredCollision { desired: ProductTerm, other: ProductTerm },
    /// The desired list does not match the block grid and exponents.
    DesiredMismatch(String),
    /// A key's exponent coincides with another term of the same share.
    KeyExponentClash { operand: Operand, key: usize, exponent: u64 },
    /// Fewer keys than colluding servers.
    KeyCount { operand: Operand, expected: usize, got: usize },
    TermCount { operand: Operand, expected: usize, got: usize },
    TotalDegreeMismatch { recorded: u64, actual: u64 },
    TooFewServers { needed: usize, servers: usize },
}

impl fmt::Display for PlanFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanFailure::DesiredCollision { desired, other } => write!(
                f,
                "desired term {desired} collides with {other} at degree {}",
                desired.degree
            ),
            PlanFailure::DesiredMismatch(msg) => write!(f, "desired terms: {msg}"),
            PlanFailure::KeyExponentClash {
                operand,
                key,
                exponent,
            } => write!(
                f,
                "key K{operand}{} shares exponent {exponent} with another {operand} term",
                key + 1
            ),
            PlanFailure::KeyCount {
                operand,
                expected,
                got,
            } => write!(f, "{operand} has {got} keys, needs {expected}"),
            PlanFailure::TermCount {
                operand,
                expected,
                got,
            } => write!(f, "{operand} has {got} exponents, expected {expected}"),
            PlanFailure::TotalDegreeMismatch { recorded, actual } => {
                write!(f, "total degree recorded as {recorded}, actual {actual}")
            }
            PlanFailure::TooFewServers { needed, servers } => {
                write!(f, "decoding needs {needed} answers but only {servers} servers")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanVerdict {
    pub failures: Vec<PlanFailure>,
    pub rate: Rate,
}

impl PlanVerdict {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks that every desired product sits alone on its degree, every key
/// has an exponent of its own within its share, and the answer polynomial
/// fits in `N` evaluations.
pub fn validate_exponent_plan(plan: &SchemePlan) -> PlanVerdict {
    let mut failures = Vec::new();
    let ell = plan.params.n_colluding();

    let mut operands = vec![(Operand::A, plan.a_parts, plan.a_keys, &plan.a_exponents)];
    if plan.encodes_b() {
        operands.push((Operand::B, plan.b_parts, plan.b_keys, &plan.b_exponents));
    }
    let mut shapes_ok = true;
    for &(operand, parts, keys, exps) in &operands {
        if keys != ell {
            failures.push(PlanFailure::KeyCount {
                operand,
                expected: ell,
                got: keys,
            });
        }
        if exps.len() != parts + keys {
            shapes_ok = false;
            failures.push(PlanFailure::TermCount {
                operand,
                expected: parts + keys,
                got: exps.len(),
            });
            continue;
        }
        for (k, &e) in exps[parts..].iter().enumerate() {
            let clashes = exps.iter().filter(|&&other| other == e).count() > 1;
            if clashes {
                failures.push(PlanFailure::KeyExponentClash {
                    operand,
                    key: k,
                    exponent: e,
                });
            }
        }
    }
    if !shapes_ok {
        return PlanVerdict {
            failures,
            rate: achievable_rate(plan),
        };
    }

    let terms = plan.product_terms();
    let actual_degree = terms.iter().map(|t| t.degree).max().unwrap_or(0);
    if actual_degree != plan.total_degree {
        failures.push(PlanFailure::TotalDegreeMismatch {
            recorded: plan.total_degree,
            actual: actual_degree,
        });
    }

    let expected_desired = plan.a_parts * plan.b_parts;
    if plan.desired.len() != expected_desired {
        failures.push(PlanFailure::DesiredMismatch(format!(
            "{} listed, block grid has {expected_desired}",
            plan.desired.len()
        )));
    }
    let mut seen_cells = std::collections::HashSet::new();
    for d in &plan.desired {
        if d.a_block >= plan.a_parts || d.b_block >= plan.b_parts {
            failures.push(PlanFailure::DesiredMismatch(format!(
                "block ({}, {}) outside the grid",
                d.a_block + 1,
                d.b_block + 1
            )));
            continue;
        }
        if !seen_cells.insert((d.a_block, d.b_block)) {
            failures.push(PlanFailure::DesiredMismatch(format!(
                "block ({}, {}) listed twice",
                d.a_block + 1,
                d.b_block + 1
            )));
        }
        let b_exp = if plan.encodes_b() {
            plan.b_exponents[d.b_block]
        } else {
            0
        };
        let degree = plan.a_exponents[d.a_block] + b_exp;
        if degree != d.degree {
            failures.push(PlanFailure::DesiredMismatch(format!(
                "block ({}, {}) recorded at degree {}, encodes to {degree}",
                d.a_block + 1,
                d.b_block + 1,
                d.degree
            )));
        }
    }

    for desired in terms.iter().filter(|t| t.is_desired()) {
        for other in terms.iter() {
            if other != desired && other.degree == desired.degree {
                failures.push(PlanFailure::DesiredCollision {
                    desired: *desired,
                    other: *other,
                });
            }
        }
    }

    let needed = plan.total_degree as usize + 1;
    if needed > plan.params.n_servers() {
        failures.push(PlanFailure::TooFewServers {
            needed,
            servers: plan.params.n_servers(),
        });
    }

    PlanVerdict {
        failures,
        rate: achievable_rate(plan),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PrimeField;

    fn params(kind: SchemeKind, n: usize, ell: usize) -> SchemeParams {
        SchemeParams::new(kind, n, ell, PrimeField::new(101).unwrap()).unwrap()
    }

    #[test]
    fn one_sided_example_plan() {
        let plan = plan_one_sided(&params(SchemeKind::OneSided, 4, 2)).unwrap();
        assert_eq!(plan.a_parts(), 2);
        assert_eq!(plan.a_keys(), 2);
        assert_eq!(&plan.a_exponents()[2..], &[2, 3]);
        assert_eq!(plan.desired_degrees(), vec![0, 1]);
        assert_eq!(achievable_rate(&plan), Rate::new(1, 2));
        assert!(validate_exponent_plan(&plan).is_valid());

        let plain = plan_one_sided(&params(SchemeKind::OneSided, 3, 0)).unwrap();
        assert_eq!(plain.a_keys(), 0);
        assert_eq!(achievable_rate(&plain), Rate::from_integer(1));

        let ten = plan_one_sided(&params(SchemeKind::OneSided, 10, 3)).unwrap();
        assert_eq!(achievable_rate(&ten), Rate::new(7, 10));
    }

    #[test]
    fn fully_secure_nine_one() {
        let plan = plan_fully_secure(&params(SchemeKind::FullySecure, 9, 1), Some(2)).unwrap();
        assert_eq!(plan.total_degree(), 8);
        assert_eq!(plan.desired_degrees(), vec![0, 1, 3, 4]);
        assert_eq!(plan.a_exponents(), &[0, 1, 2]);
        assert_eq!(plan.b_exponents(), &[0, 3, 6]);
        assert_eq!(achievable_rate(&plan), Rate::new(4, 9));
        // Enumerate every product degree: nine terms, nine distinct degrees.
        let mut degrees: Vec<u64> = plan.product_terms().iter().map(|t| t.degree).collect();
        degrees.sort_unstable();
        assert_eq!(degrees, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn fully_secure_degenerate_and_larger() {
        let keyless = plan_fully_secure(&params(SchemeKind::FullySecure, 4, 0), None).unwrap();
        assert_eq!(keyless.a_parts(), 2);
        assert_eq!(keyless.a_keys(), 0);
        assert_eq!(achievable_rate(&keyless), Rate::from_integer(1));

        let sixteen = plan_fully_secure(&params(SchemeKind::FullySecure, 16, 1), None).unwrap();
        assert_eq!(sixteen.a_parts(), 3);
        assert_eq!(achievable_rate(&sixteen), Rate::new(9, 16));
    }

    #[test]
    fn fully_secure_r_selection() {
        assert_eq!(default_r(8, 1), Some(1));
        assert_eq!(default_r(9, 1), Some(2));
        assert_eq!(default_r(3, 1), None);
        let p8 = params(SchemeKind::FullySecure, 8, 1);
        assert!(matches!(
            plan_fully_secure(&p8, Some(2)),
            Err(SchemeError::Infeasible { needed: 9, servers: 8, .. })
        ));
        assert_eq!(plan_fully_secure(&p8, None).unwrap().a_parts(), 1);
        assert!(matches!(
            plan_fully_secure(&params(SchemeKind::FullySecure, 3, 1), None),
            Err(SchemeError::NoFeasibleR { .. })
        ));
        assert!(matches!(
            plan_fully_secure(&p8, Some(0)),
            Err(SchemeError::Infeasible { .. })
        ));
    }

    #[test]
    fn aligned_plan_matches_example() {
        let plan = plan_aligned_8_1(&params(SchemeKind::Aligned, 8, 1)).unwrap();
        assert_eq!(plan.a_exponents(), &[0, 1, 2]);
        assert_eq!(plan.b_exponents(), &[0, 3, 5]);
        assert_eq!(plan.desired_degrees(), vec![0, 1, 3, 4]);
        assert_eq!(plan.total_degree(), 7);
        let rate = achievable_rate(&plan);
        assert_eq!(rate, Rate::new(1, 2));
        assert!(rate > Rate::new(4, 9));
        let by_degree = plan.terms_by_degree();
        let five: Vec<String> = by_degree[&5].iter().map(|t| t.to_string()).collect();
        assert_eq!(five, vec!["A1KB1", "KA1B2"]);
        let verdict = validate_exponent_plan(&plan);
        assert!(verdict.is_valid(), "{:?}", verdict.failures);
        assert_eq!(verdict.rate, Rate::new(1, 2));
        assert!(matches!(
            plan_aligned_8_1(&params(SchemeKind::Aligned, 9, 1)),
            Err(SchemeError::AlignedShape { .. })
        ));
    }

    #[test]
    fn validator_names_collisions() {
        // A1 at x^2, KA at x^0; B1 at x^0, KB at x^2: A1B1 and KAKB both land on 2.
        let p = params(SchemeKind::Aligned, 8, 1);
        let plan = plan_custom(&p, 1, 1, vec![2, 0], vec![0, 2]).unwrap();
        let verdict = validate_exponent_plan(&plan);
        assert!(!verdict.is_valid());
        assert!(verdict.failures.iter().any(|f| matches!(
            f,
            PlanFailure::DesiredCollision { desired, other }
                if desired.to_string() == "A1B1" && other.to_string() == "KA1KB1"
        )));
    }

    #[test]
    fn validator_flags_key_clash_and_small_fleet() {
        let p = params(SchemeKind::Aligned, 4, 1);
        let plan = plan_custom(&p, 1, 1, vec![0, 0], vec![0, 3]).unwrap();
        let verdict = validate_exponent_plan(&plan);
        assert!(verdict
            .failures
            .iter()
            .any(|f| matches!(f, PlanFailure::KeyExponentClash { operand: Operand::A, .. })));
        assert!(!verdict
            .failures
            .iter()
            .any(|f| matches!(f, PlanFailure::TooFewServers { .. })));
        let big = plan_custom(&p, 2, 2, vec![0, 1, 2], vec![0, 3, 5]).unwrap();
        assert!(validate_exponent_plan(&big)
            .failures
            .contains(&PlanFailure::TooFewServers { needed: 8, servers: 4 }));
    }

    #[test]
    fn fully_secure_degrees_unique_for_small_grids() {
        for r in 1..=4usize {
            for ell in 0..=3usize {
                let n = (r + ell) * (r + ell);
                let p = params(SchemeKind::FullySecure, n, ell);
                let plan = plan_fully_secure(&p, Some(r)).unwrap();
                let terms = plan.product_terms();
                let distinct: std::collections::HashSet<u64> =
                    terms.iter().map(|t| t.degree).collect();
                assert_eq!(distinct.len(), terms.len(), "r={r} l={ell}");
                assert!(validate_exponent_plan(&plan).is_valid());
            }
        }
    }
}
