use std::collections::BTreeMap;

use rand::Rng;

use super::plan::DesiredTerm;
use super::{SchemeError, SchemePlan};
use crate::interp::{interpolate_subset, EvaluationSet};
use crate::linalg::{padded_len, stack_grid, FieldMatrix, PartitionSpec};

/// Logical and padded shapes of one multiplication job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductLayout {
    /// Rows of `A` (and of the product).
    pub rows: usize,
    /// Columns of `A`, rows of `B`.
    pub inner: usize,
    /// Columns of `B` (and of the product).
    pub cols: usize,
    pub a_block_rows: usize,
    pub b_block_cols: usize,
}

impl ProductLayout {
    pub fn for_plan(
        plan: &SchemePlan,
        rows: usize,
        inner: usize,
        cols: usize,
    ) -> Result<Self, SchemeError> {
        if rows == 0 || inner == 0 || cols == 0 {
            return Err(SchemeError::Dimensions(format!(
                "empty operand {rows}x{inner} * {inner}x{cols}"
            )));
        }
        Ok(Self {
            rows,
            inner,
            cols,
            a_block_rows: padded_len(rows, plan.a_parts) / plan.a_parts,
            b_block_cols: padded_len(cols, plan.b_parts) / plan.b_parts,
        })
    }

    /// Shape of every answer matrix.
    pub fn answer_shape(&self) -> (usize, usize) {
        (self.a_block_rows, self.b_block_cols)
    }
}

/// The random masks for one encoding. Drawn fresh per job and dropped after
/// the shares are built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    pub a_keys: Vec<FieldMatrix>,
    pub b_keys: Vec<FieldMatrix>,
}

impl KeyMaterial {
    pub fn random<R: Rng + ?Sized>(plan: &SchemePlan, layout: &ProductLayout, rng: &mut R) -> Self {
        let field = plan.params.field();
        let a_keys = (0..plan.a_keys)
            .map(|_| FieldMatrix::random(field, layout.a_block_rows, layout.inner, rng))
            .collect();
        let b_keys = if plan.encodes_b() {
            (0..plan.b_keys)
                .map(|_| FieldMatrix::random(field, layout.inner, layout.b_block_cols, rng))
                .collect()
        } else {
            Vec::new()
        };
        Self { a_keys, b_keys }
    }

    /// Builds keys from a flat list of entries: every `A` key in order, then
    /// every `B` key, each row-major.
    pub fn from_flat(
        plan: &SchemePlan,
        layout: &ProductLayout,
        values: &[u64],
    ) -> Result<Self, SchemeError> {
        let field = plan.params.field();
        let a_len = layout.a_block_rows * layout.inner;
        let b_len = layout.inner * layout.b_block_cols;
        let b_count = if plan.encodes_b() { plan.b_keys } else { 0 };
        let expected = plan.a_keys * a_len + b_count * b_len;
        if values.len() != expected {
            return Err(SchemeError::Keys(format!(
                "{} key entries, expected {expected}",
                values.len()
            )));
        }
        let (a_vals, b_vals) = values.split_at(plan.a_keys * a_len);
        let a_keys = a_vals
            .chunks(a_len.max(1))
            .take(plan.a_keys)
            .map(|c| FieldMatrix::new(field, layout.a_block_rows, layout.inner, c.to_vec()))
            .collect::<Result<_, _>>()?;
        let b_keys = b_vals
            .chunks(b_len.max(1))
            .take(b_count)
            .map(|c| FieldMatrix::new(field, layout.inner, layout.b_block_cols, c.to_vec()))
            .collect::<Result<_, _>>()?;
        Ok(Self { a_keys, b_keys })
    }

    /// Total number of key entries the plan draws for this layout.
    pub fn entry_count(plan: &SchemePlan, layout: &ProductLayout) -> usize {
        let b_count = if plan.encodes_b() { plan.b_keys } else { 0 };
        plan.a_keys * layout.a_block_rows * layout.inner
            + b_count * layout.inner * layout.b_block_cols
    }
}

/// The upload for one server. `b` is `None` in one-sided plans, where the
/// public `B` travels alongside instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share {
    pub server: usize,
    pub a: FieldMatrix,
    pub b: Option<FieldMatrix>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareSet {
    pub layout: ProductLayout,
    pub public_b: Option<FieldMatrix>,
    pub shares: Vec<Share>,
}

impl ShareSet {
    /// An empty answer collection sized for this job.
    pub fn answer_set(&self) -> AnswerSet {
        AnswerSet::new(self.layout)
    }
}

/// Answers keyed by 0-based server index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSet {
    pub layout: ProductLayout,
    answers: BTreeMap<usize, FieldMatrix>,
}

impl AnswerSet {
    pub fn new(layout: ProductLayout) -> Self {
        Self {
            layout,
            answers: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, server: usize, answer: FieldMatrix) -> Result<(), SchemeError> {
        let (h, w) = self.layout.answer_shape();
        if answer.shape() != (h, w) {
            return Err(SchemeError::AnswerShape {
                server,
                rows: answer.rows(),
                cols: answer.cols(),
                expected_rows: h,
                expected_cols: w,
            });
        }
        self.answers.insert(server, answer);
        Ok(())
    }

    pub fn get(&self, server: usize) -> Option<&FieldMatrix> {
        self.answers.get(&server)
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &FieldMatrix)> {
        self.answers.iter().map(|(&k, v)| (k, v))
    }
}

fn check_operands(plan: &SchemePlan, a: &FieldMatrix, b: &FieldMatrix) -> Result<ProductLayout, SchemeError> {
    let field = plan.params.field();
    field.ensure_same(&a.field())?;
    field.ensure_same(&b.field())?;
    if a.cols() != b.rows() {
        return Err(SchemeError::Dimensions(format!(
            "A is {}x{} but B is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    ProductLayout::for_plan(plan, a.rows(), a.cols(), b.cols())
}

/// Encodes `A` (and `B` when private) for every server with fresh keys.
pub fn encode<R: Rng + ?Sized>(
    plan: &SchemePlan,
    a: &FieldMatrix,
    b: &FieldMatrix,
    rng: &mut R,
) -> Result<ShareSet, SchemeError> {
    let layout = check_operands(plan, a, b)?;
    let keys = KeyMaterial::random(plan, &layout, rng);
    encode_with_keys(plan, a, b, &keys)
}

fn share_polynomial(
    field: crate::field::PrimeField,
    x: u64,
    terms: &[&FieldMatrix],
    exponents: &[u64],
) -> Result<FieldMatrix, SchemeError> {
    let (h, w) = terms[0].shape();
    let mut acc = FieldMatrix::zeros(field, h, w);
    for (term, &e) in terms.iter().zip(exponents) {
        acc.axpy_assign(field.pow_raw(x, e), term)?;
    }
    Ok(acc)
}

/// Encodes with caller-supplied keys. Used by deterministic tests and by
/// the exhaustive auditor, which enumerates every key assignment.
pub fn encode_with_keys(
    plan: &SchemePlan,
    a: &FieldMatrix,
    b: &FieldMatrix,
    keys: &KeyMaterial,
) -> Result<ShareSet, SchemeError> {
    let layout = check_operands(plan, a, b)?;
    let field = plan.params.field();
    let a_shape = (layout.a_block_rows, layout.inner);
    let b_shape = (layout.inner, layout.b_block_cols);
    let b_key_count = if plan.encodes_b() { plan.b_keys } else { 0 };
    if keys.a_keys.len() != plan.a_keys || keys.b_keys.len() != b_key_count {
        return Err(SchemeError::Keys(format!(
            "got {}+{} keys, plan uses {}+{}",
            keys.a_keys.len(),
            keys.b_keys.len(),
            plan.a_keys,
            b_key_count
        )));
    }
    if keys.a_keys.iter().any(|k| k.shape() != a_shape)
        || keys.b_keys.iter().any(|k| k.shape() != b_shape)
    {
        return Err(SchemeError::Keys("key block shape mismatch".into()));
    }

    let a_blocks = a.partition(PartitionSpec::rows(plan.a_parts))?;
    let a_terms: Vec<&FieldMatrix> = a_blocks.iter().chain(&keys.a_keys).collect();
    let b_blocks = if plan.encodes_b() {
        b.partition(PartitionSpec::cols(plan.b_parts))?
    } else {
        Vec::new()
    };
    let b_terms: Vec<&FieldMatrix> = b_blocks.iter().chain(&keys.b_keys).collect();

    let shares = plan
        .params
        .eval_points()
        .iter()
        .enumerate()
        .map(|(server, &x)| {
            let a_share = share_polynomial(field, x, &a_terms, &plan.a_exponents)?;
            let b_share = if plan.encodes_b() {
                Some(share_polynomial(field, x, &b_terms, &plan.b_exponents)?)
            } else {
                None
            };
            Ok(Share {
                server,
                a: a_share,
                b: b_share,
            })
        })
        .collect::<Result<Vec<_>, SchemeError>>()?;

    Ok(ShareSet {
        layout,
        public_b: (!plan.encodes_b()).then(|| b.clone()),
        shares,
    })
}

/// What an honest server does with its upload.
pub fn server_compute(share: &Share, public_b: Option<&FieldMatrix>) -> Result<FieldMatrix, SchemeError> {
    let rhs = match (&share.b, public_b) {
        (Some(b), _) => b,
        (None, Some(b)) => b,
        (None, None) => return Err(SchemeError::MissingPublicB),
    };
    Ok(share.a.matmul(rhs)?)
}

/// Recovers `AB` from the answers of the lowest-indexed
/// `total_degree + 1` servers.
pub fn decode(plan: &SchemePlan, answers: &AnswerSet) -> Result<FieldMatrix, SchemeError> {
    if !plan.params.is_decodable() {
        return Err(SchemeError::NotDecodable);
    }
    let needed = plan.answers_needed();
    if answers.len() < needed {
        return Err(SchemeError::InsufficientAnswers {
            needed,
            got: answers.len(),
        });
    }
    let points = plan.params.eval_points();
    let mut xs = Vec::with_capacity(needed);
    let mut values = Vec::with_capacity(needed);
    for (server, answer) in answers.iter().take(needed) {
        let x = *points.get(server).ok_or_else(|| {
            SchemeError::Dimensions(format!("answer from unknown server {}", server + 1))
        })?;
        xs.push(x);
        values.push(answer.clone());
    }
    let ev = EvaluationSet::new(xs, values)?;
    let degrees: Vec<usize> = plan.desired.iter().map(|d| d.degree as usize).collect();
    let blocks = interpolate_subset(&ev, &degrees)?;

    let mut grid: Vec<Vec<Option<FieldMatrix>>> = vec![vec![None; plan.b_parts]; plan.a_parts];
    for (DesiredTerm { a_block, b_block, .. }, block) in plan.desired.iter().zip(blocks) {
        grid[*a_block][*b_block] = Some(block);
    }
    let grid: Vec<Vec<FieldMatrix>> = grid
        .into_iter()
        .map(|row| row.into_iter().collect::<Option<Vec<_>>>())
        .collect::<Option<_>>()
        .ok_or_else(|| SchemeError::Dimensions("plan leaves product blocks undetermined".into()))?;
    let full = stack_grid(&grid)?;
    let layout = answers.layout;
    Ok(full.submatrix(0, 0, layout.rows, layout.cols))
}
