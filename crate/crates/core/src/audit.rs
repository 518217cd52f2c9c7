//! Exhaustive secrecy audits over tiny fields.
//!
//! For a collusion set `L`, perfect secrecy means the distribution of the
//! pooled shares is the same for every value of the secret inputs. Over a
//! field with `q` elements and `k` key entries, each secret induces a
//! multiset of `q^k` equally likely views; the audit enumerates all of them
//! for every secret and compares the multisets exactly. No sampling is
//! involved, so a `perfect` verdict is a proof for that instance.
//!
//! The shares under audit come from the real encoder: [`LinearShareMap`]
//! probes [`encode_with_keys`](crate::schemes::encode_with_keys) with unit
//! inputs to recover the linear map from (secret, keys) to shares.

use std::fmt::{self, Write as _};

use rayon::prelude::*;
use thiserror::Error;

use crate::field::PrimeField;
use crate::linalg::FieldMatrix;
use crate::schemes::{encode_with_keys, KeyMaterial, ProductLayout, Rate, SchemeError, SchemeKind, SchemePlan};

/// Default cap on `q^(secret entries + key entries)` per collusion set.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error(
        "audit needs {states} states per collusion set, budget is {budget}; \
         try a smaller modulus or 1x1 blocks"
    )]
    BudgetExceeded { states: u128, budget: u64 },
    #[error("collusion set {0}")]
    BadSet(String),
    #[error("{kind} plans cannot be audited by {auditor}")]
    WrongScheme { kind: SchemeKind, auditor: &'static str },
    #[error("views of {view_len} entries over F_{modulus} cannot be packed")]
    ViewTooWide { view_len: usize, modulus: u64 },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

/// A set of distinct 0-based server indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CollusionSet(Vec<usize>);

impl CollusionSet {
    pub fn new(mut indices: Vec<usize>, n_servers: usize) -> Result<Self, AuditError> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(AuditError::BadSet(format!("{indices:?} repeats a server")));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= n_servers) {
            return Err(AuditError::BadSet(format!(
                "server {} out of range 1..={n_servers}",
                i + 1
            )));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every subset of `0..n` with `size` members, in lexicographic order.
    /// Size zero yields no sets.
    pub fn all(n: usize, size: usize) -> Vec<CollusionSet> {
        if size == 0 || size > n {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(CollusionSet(idx.clone()));
            let Some(pos) = (0..size).rev().find(|&i| idx[i] < n - size + i) else {
                break;
            };
            idx[pos] += 1;
            for i in pos + 1..size {
                idx[i] = idx[i - 1] + 1;
            }
        }
        out
    }
}

impl fmt::Display for CollusionSet {
    /// 1-based, comma separated.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.0.iter().map(|i| (i + 1).to_string()).collect();
        f.write_str(&ids.join(","))
    }
}

/// Shapes of the secret inputs: `A` is `rows x inner`, `B` is `inner x cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditDims {
    pub rows: usize,
    pub inner: usize,
    pub cols: usize,
}

impl AuditDims {
    pub fn new(rows: usize, inner: usize, cols: usize) -> Self {
        Self { rows, inner, cols }
    }
}

impl fmt::Display for AuditDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A {}x{}, B {}x{}", self.rows, self.inner, self.inner, self.cols)
    }
}

/// Anything that can report what a collusion set sees.
pub trait ViewSource: Sync {
    fn field(&self) -> PrimeField;
    fn n_servers(&self) -> usize;
    /// Entries of the secret inputs.
    fn secret_len(&self) -> usize;
    /// Entries of the uniform keys.
    fn key_len(&self) -> usize;
    fn view_len(&self, set: &CollusionSet) -> usize;
    /// The packed view of `set` under every key assignment, for one secret.
    /// Order is irrelevant; the length must be `q^key_len`.
    fn views(&self, set: &CollusionSet, secret: &[u64]) -> Vec<u128>;
}

/// Packs a view into one integer, base `q`.
pub fn pack_view(modulus: u64, view: &[u64]) -> u128 {
    view.iter()
        .rev()
        .fold(0u128, |acc, &v| acc * modulus as u128 + v as u128)
}

/// Decodes index `index` as `len` base-`q` digits, least significant first.
pub fn digits(modulus: u64, mut index: u128, len: usize) -> Vec<u64> {
    let q = modulus as u128;
    (0..len)
        .map(|_| {
            let d = (index % q) as u64;
            index /= q;
            d
        })
        .collect()
}

/// The linear map from (secret entries, key entries) to every server's
/// share entries, recovered by probing the encoder.
#[derive(Debug, Clone)]
pub struct LinearShareMap {
    field: PrimeField,
    kind: SchemeKind,
    secret_len: usize,
    a_key_len: usize,
    b_key_len: usize,
    /// `servers[i]` holds one coefficient row per share entry of server `i`.
    servers: Vec<Vec<Vec<u64>>>,
}

impl LinearShareMap {
    pub fn from_plan(plan: &SchemePlan, dims: AuditDims) -> Result<Self, AuditError> {
        let field = plan.params().field();
        let encodes_b = plan.encodes_b();
        let b_cols = if encodes_b { dims.cols } else { 1 };
        let layout = ProductLayout::for_plan(plan, dims.rows, dims.inner, b_cols)?;
        let a_len = dims.rows * dims.inner;
        let b_len = if encodes_b { dims.inner * dims.cols } else { 0 };
        let secret_len = a_len + b_len;
        let key_len = KeyMaterial::entry_count(plan, &layout);
        let a_key_len = plan.a_keys() * layout.a_block_rows * layout.inner;

        let shares_for = |vars: &[u64]| -> Result<Vec<Vec<u64>>, AuditError> {
            let a = FieldMatrix::new(field, dims.rows, dims.inner, vars[..a_len].to_vec())
                .map_err(SchemeError::from)?;
            let b = if encodes_b {
                FieldMatrix::new(field, dims.inner, dims.cols, vars[a_len..secret_len].to_vec())
                    .map_err(SchemeError::from)?
            } else {
                FieldMatrix::zeros(field, dims.inner, 1)
            };
            let keys = KeyMaterial::from_flat(plan, &layout, &vars[secret_len..])?;
            let shares = encode_with_keys(plan, &a, &b, &keys)?;
            Ok(shares
                .shares
                .iter()
                .map(|s| {
                    let mut v = s.a.entries().to_vec();
                    if let Some(b) = &s.b {
                        v.extend_from_slice(b.entries());
                    }
                    v
                })
                .collect())
        };

        let n_vars = secret_len + key_len;
        let zero = shares_for(&vec![0; n_vars])?;
        debug_assert!(zero.iter().flatten().all(|&v| v == 0), "encoder is not linear");
        let mut servers: Vec<Vec<Vec<u64>>> = zero
            .iter()
            .map(|entries| vec![vec![0u64; n_vars]; entries.len()])
            .collect();
        let mut unit = vec![0u64; n_vars];
        for var in 0..n_vars {
            unit[var] = 1;
            for (server, entries) in shares_for(&unit)?.into_iter().enumerate() {
                for (row, v) in entries.into_iter().enumerate() {
                    servers[server][row][var] = v;
                }
            }
            unit[var] = 0;
        }
        Ok(Self {
            field,
            kind: plan.kind(),
            secret_len,
            a_key_len,
            b_key_len: key_len - a_key_len,
            servers,
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    /// Variable indices of the `A` key entries.
    pub fn a_key_vars(&self) -> std::ops::Range<usize> {
        self.secret_len..self.secret_len + self.a_key_len
    }

    /// Variable indices of the `B` key entries.
    pub fn b_key_vars(&self) -> std::ops::Range<usize> {
        let start = self.secret_len + self.a_key_len;
        start..start + self.b_key_len
    }

    /// Coefficient of variable `var` in share entry `row` of `server`.
    pub fn coefficient(&self, server: usize, row: usize, var: usize) -> u64 {
        self.servers[server][row][var]
    }

    /// Removes key variable `var` from one server's shares.
    pub fn zero_key_coefficient(&mut self, server: usize, var: usize) {
        assert!(var >= self.secret_len, "not a key variable");
        for row in &mut self.servers[server] {
            row[var] = 0;
        }
    }

    /// Rewires every use of key variable `dst` to key variable `src`, as if
    /// the same random value were drawn for both.
    pub fn reuse_key(&mut self, dst: usize, src: usize) {
        assert!(dst >= self.secret_len && src >= self.secret_len, "not key variables");
        let f = self.field;
        for server in &mut self.servers {
            for row in server {
                row[src] = f.add_raw(row[src], row[dst]);
                row[dst] = 0;
            }
        }
    }

    fn rows_for(&self, set: &CollusionSet) -> Vec<&[u64]> {
        set.indices()
            .iter()
            .flat_map(|&s| self.servers[s].iter().map(Vec::as_slice))
            .collect()
    }
}

impl ViewSource for LinearShareMap {
    fn field(&self) -> PrimeField {
        self.field
    }

    fn n_servers(&self) -> usize {
        self.servers.len()
    }

    fn secret_len(&self) -> usize {
        self.secret_len
    }

    fn key_len(&self) -> usize {
        self.a_key_len + self.b_key_len
    }

    fn view_len(&self, set: &CollusionSet) -> usize {
        set.indices().iter().map(|&s| self.servers[s].len()).sum()
    }

    fn views(&self, set: &CollusionSet, secret: &[u64]) -> Vec<u128> {
        let f = self.field;
        let q = f.modulus();
        let rows = self.rows_for(set);
        let key_len = self.key_len();
        let secret_part: Vec<u64> = rows
            .iter()
            .map(|row| {
                row[..self.secret_len]
                    .iter()
                    .zip(secret)
                    .fold(0, |acc, (&c, &s)| f.add_raw(acc, f.mul_raw(c, s)))
            })
            .collect();
        let key_count = (q as u128).pow(key_len as u32) as usize;
        let mut keys = vec![0u64; key_len];
        let mut view = vec![0u64; rows.len()];
        let mut out = Vec::with_capacity(key_count);
        for _ in 0..key_count {
            for (slot, (row, &base)) in view.iter_mut().zip(rows.iter().zip(&secret_part)) {
                *slot = row[self.secret_len..]
                    .iter()
                    .zip(&keys)
                    .fold(base, |acc, (&c, &k)| f.add_raw(acc, f.mul_raw(c, k)));
            }
            out.push(pack_view(q, &view));
            // Odometer over key assignments.
            for k in keys.iter_mut() {
                *k += 1;
                if *k < q {
                    break;
                }
                *k = 0;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Perfect,
    Leaky,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Perfect => "perfect",
            Verdict::Leaky => "leaky",
        })
    }
}

/// Two secret values whose view distributions differ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub first: Vec<u64>,
    pub second: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetVerdict {
    pub set: CollusionSet,
    pub verdict: Verdict,
    /// Largest total-variation distance to the reference secret's view
    /// distribution.
    pub tv_distance: Rate,
    pub witness: Option<Witness>,
}

/// What the caller expects the audit to find.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    /// Every set is perfectly private.
    Perfect,
    /// At least one set distinguishes some pair of secrets.
    Leaky,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub scheme: SchemeKind,
    pub modulus: u64,
    pub dims: AuditDims,
    pub n_servers: usize,
    pub collusion_size: usize,
    pub expectation: Expectation,
    pub states_per_set: u128,
    pub sets: Vec<SetVerdict>,
}

impl AuditReport {
    pub fn sets_checked(&self) -> usize {
        self.sets.len()
    }

    pub fn is_perfect(&self) -> bool {
        self.sets.iter().all(|s| s.verdict == Verdict::Perfect)
    }

    pub fn any_leaky(&self) -> bool {
        !self.is_perfect()
    }

    pub fn meets_expectation(&self) -> bool {
        match self.expectation {
            Expectation::Perfect => self.is_perfect(),
            Expectation::Leaky => self.any_leaky(),
        }
    }

    pub fn max_tv_distance(&self) -> Rate {
        self.sets
            .iter()
            .map(|s| s.tv_distance)
            .max()
            .unwrap_or_else(|| Rate::from_integer(0))
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} audit over F_{}, N={}, {}, collusion size {}",
            self.scheme, self.modulus, self.n_servers, self.dims, self.collusion_size
        );
        let perfect = self.sets.iter().filter(|v| v.verdict == Verdict::Perfect).count();
        let _ = writeln!(
            s,
            "{} sets checked ({} states each): {} perfect, {} leaky; max TV distance {}",
            self.sets.len(),
            self.states_per_set,
            perfect,
            self.sets.len() - perfect,
            format_rational(self.max_tv_distance())
        );
        for v in self.sets.iter().filter(|v| v.verdict == Verdict::Leaky).take(5) {
            if let Some(w) = &v.witness {
                let _ = writeln!(
                    s,
                    "  leaky set {{{}}}: secrets {:?} and {:?} are distinguishable (TV {})",
                    v.set,
                    w.first,
                    w.second,
                    format_rational(v.tv_distance)
                );
            }
        }
        let expected = match self.expectation {
            Expectation::Perfect => "perfect",
            Expectation::Leaky => "leaky",
        };
        let _ = writeln!(
            s,
            "expected {expected}: {}",
            if self.meets_expectation() { "met" } else { "NOT met" }
        );
        s
    }

    /// One line per collusion set: `servers verdict tv`.
    pub fn records(&self) -> String {
        let mut s = String::new();
        for v in &self.sets {
            let _ = writeln!(s, "{} {} {}", v.set, v.verdict, format_rational(v.tv_distance));
        }
        s
    }
}

/// Always `p/q`, including integers.
pub fn format_rational(r: Rate) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Number of enumerated states per collusion set, or `None` on overflow.
pub fn state_count(modulus: u64, secret_len: usize, key_len: usize) -> Option<u128> {
    (modulus as u128).checked_pow(u32::try_from(secret_len + key_len).ok()?)
}

fn tv_between(reference: &[u128], other: &[u128]) -> Rate {
    let (mut i, mut j, mut diff) = (0usize, 0usize, 0u64);
    while i < reference.len() || j < other.len() {
        match (reference.get(i), other.get(j)) {
            (Some(a), Some(b)) if a == b => {
                i += 1;
                j += 1;
            }
            (Some(a), Some(b)) if a < b => {
                diff += 1;
                i += 1;
            }
            (Some(_), None) => {
                diff += 1;
                i += 1;
            }
            _ => {
                diff += 1;
                j += 1;
            }
        }
    }
    Rate::new(diff, 2 * reference.len() as u64)
}

fn audit_set<S: ViewSource>(source: &S, set: &CollusionSet) -> SetVerdict {
    let q = source.field().modulus();
    let secret_len = source.secret_len();
    let secret_count = (q as u128).pow(secret_len as u32);
    let first_secret = vec![0u64; secret_len];
    let mut reference = source.views(set, &first_secret);
    reference.sort_unstable();
    let mut worst = Rate::from_integer(0);
    let mut witness = None;
    for index in 1..secret_count {
        let secret = digits(q, index, secret_len);
        let mut views = source.views(set, &secret);
        views.sort_unstable();
        if views != reference {
            let tv = tv_between(&reference, &views);
            if tv > worst {
                worst = tv;
                witness = Some(Witness {
                    first: first_secret.clone(),
                    second: secret,
                });
            }
        }
    }
    SetVerdict {
        set: set.clone(),
        verdict: if witness.is_some() {
            Verdict::Leaky
        } else {
            Verdict::Perfect
        },
        tv_distance: worst,
        witness,
    }
}

/// Runs the exact comparison for every set. Returns the state count per set.
pub fn exhaustive_audit<S: ViewSource>(
    source: &S,
    sets: &[CollusionSet],
    budget: u64,
) -> Result<(u128, Vec<SetVerdict>), AuditError> {
    let q = source.field().modulus();
    let states = state_count(q, source.secret_len(), source.key_len()).unwrap_or(u128::MAX);
    if states > budget as u128 {
        return Err(AuditError::BudgetExceeded { states, budget });
    }
    for set in sets {
        if set.indices().iter().any(|&i| i >= source.n_servers()) {
            return Err(AuditError::BadSet(format!("{{{set}}} exceeds the fleet")));
        }
        let view_len = source.view_len(set);
        if (q as u128).checked_pow(view_len as u32).is_none() {
            return Err(AuditError::ViewTooWide { view_len, modulus: q });
        }
    }
    let verdicts = sets.par_iter().map(|set| audit_set(source, set)).collect();
    Ok((states, verdicts))
}

/// Audits the share map at a given collusion size.
pub fn audit_map(
    map: &LinearShareMap,
    dims: AuditDims,
    size: usize,
    expectation: Expectation,
    budget: u64,
) -> Result<AuditReport, AuditError> {
    let sets = CollusionSet::all(map.n_servers(), size);
    let (states, verdicts) = exhaustive_audit(map, &sets, budget)?;
    Ok(AuditReport {
        scheme: map.kind(),
        modulus: map.field().modulus(),
        dims,
        n_servers: map.n_servers(),
        collusion_size: size,
        expectation,
        states_per_set: states,
        sets: verdicts,
    })
}

/// Audits `plan` against every collusion set of `size` servers.
pub fn audit_at_size(
    plan: &SchemePlan,
    dims: AuditDims,
    size: usize,
    expectation: Expectation,
    budget: u64,
) -> Result<AuditReport, AuditError> {
    if size > plan.params().n_servers() {
        return Err(AuditError::BadSet(format!(
            "size {size} exceeds {} servers",
            plan.params().n_servers()
        )));
    }
    let map = precheck_and_map(plan, dims, budget)?;
    audit_map(&map, dims, size, expectation, budget)
}

fn precheck_and_map(plan: &SchemePlan, dims: AuditDims, budget: u64) -> Result<LinearShareMap, AuditError> {
    // Bound the state space before probing the encoder.
    let encodes_b = plan.encodes_b();
    let b_cols = if encodes_b { dims.cols } else { 1 };
    let layout = ProductLayout::for_plan(plan, dims.rows, dims.inner, b_cols)?;
    let secret_len = dims.rows * dims.inner + if encodes_b { dims.inner * dims.cols } else { 0 };
    let key_len = KeyMaterial::entry_count(plan, &layout);
    let states = state_count(plan.params().field().modulus(), secret_len, key_len).unwrap_or(u128::MAX);
    if states > budget as u128 {
        return Err(AuditError::BudgetExceeded { states, budget });
    }
    LinearShareMap::from_plan(plan, dims)
}

/// Perfect secrecy of `A` against every `l`-set, for one-sided plans.
pub fn audit_one_sided(plan: &SchemePlan, dims: AuditDims) -> Result<AuditReport, AuditError> {
    audit_one_sided_with_budget(plan, dims, DEFAULT_BUDGET)
}

pub fn audit_one_sided_with_budget(
    plan: &SchemePlan,
    dims: AuditDims,
    budget: u64,
) -> Result<AuditReport, AuditError> {
    if plan.kind() != SchemeKind::OneSided {
        return Err(AuditError::WrongScheme {
            kind: plan.kind(),
            auditor: "audit_one_sided",
        });
    }
    audit_at_size(plan, dims, plan.params().n_colluding(), Expectation::Perfect, budget)
}

/// Joint secrecy of `(A, B)` against every `l`-set, for two-sided plans.
pub fn audit_fully_secure(plan: &SchemePlan, dims: AuditDims) -> Result<AuditReport, AuditError> {
    audit_fully_secure_with_budget(plan, dims, DEFAULT_BUDGET)
}

pub fn audit_fully_secure_with_budget(
    plan: &SchemePlan,
    dims: AuditDims,
    budget: u64,
) -> Result<AuditReport, AuditError> {
    if !plan.encodes_b() {
        return Err(AuditError::WrongScheme {
            kind: plan.kind(),
            auditor: "audit_fully_secure",
        });
    }
    audit_at_size(plan, dims, plan.params().n_colluding(), Expectation::Perfect, budget)
}

/// Negative control: one server more than the scheme tolerates must be
/// able to distinguish some inputs.
pub fn audit_collusion_count_boundary(
    plan: &SchemePlan,
    dims: AuditDims,
) -> Result<AuditReport, AuditError> {
    audit_collusion_count_boundary_with_budget(plan, dims, DEFAULT_BUDGET)
}

pub fn audit_collusion_count_boundary_with_budget(
    plan: &SchemePlan,
    dims: AuditDims,
    budget: u64,
) -> Result<AuditReport, AuditError> {
    let size = plan.params().n_colluding() + 1;
    audit_at_size(plan, dims, size, Expectation::Leaky, budget)
}
