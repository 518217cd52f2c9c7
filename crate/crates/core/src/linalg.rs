//! Dense matrices over a prime field, plus the block partitioning used by
//! every encoding scheme.
//!
//! Two serializations are supported. The text form is a header line
//! `rows cols modulus` followed by one line of space-separated decimals per
//! row. The binary form is three little-endian `u64` words (rows, cols,
//! modulus) followed by `rows * cols` little-endian `u64` entries in
//! row-major order.

use std::fmt;
use std::io::{self, Read, Write};

use rand::Rng;
use thiserror::Error;

use crate::field::{FieldElement, FieldError, PrimeField};

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("expected {expected} entries for the given shape, got {got}")]
    EntryCount { expected: usize, got: usize },
    #[error("cannot multiply {left_rows}x{left_cols} by {right_rows}x{right_cols}")]
    MulShape {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("partition count must be positive")]
    ZeroParts,
    #[error("cannot stack an empty block list")]
    NoBlocks,
    #[error("ragged blocks: block {index} is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Ragged {
        index: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("malformed matrix text: {0}")]
    Parse(String),
    #[error("malformed binary matrix: {0}")]
    Binary(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Which dimension a partition splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    /// Split the rows: blocks are stacked vertically.
    Rows,
    /// Split the columns: blocks sit side by side.
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionSpec {
    pub axis: Axis,
    pub parts: usize,
}

impl PartitionSpec {
    pub fn rows(parts: usize) -> Self {
        Self {
            axis: Axis::Rows,
            parts,
        }
    }

    pub fn cols(parts: usize) -> Self {
        Self {
            axis: Axis::Cols,
            parts,
        }
    }
}

/// Rounds `len` up to the next multiple of `parts`.
pub fn padded_len(len: usize, parts: usize) -> usize {
    len.div_ceil(parts) * parts
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FieldMatrix {
    field: PrimeField,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl FieldMatrix {
    /// Builds a matrix from row-major values, reducing each modulo `q`.
    pub fn new(
        field: PrimeField,
        rows: usize,
        cols: usize,
        mut data: Vec<u64>,
    ) -> Result<Self, MatrixError> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::EmptyShape { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(MatrixError::EntryCount {
                expected: rows * cols,
                got: data.len(),
            });
        }
        for v in &mut data {
            *v = field.reduce(*v);
        }
        Ok(Self {
            field,
            rows,
            cols,
            data,
        })
    }

    /// Builds from nested rows. Panics on ragged or empty input; meant for
    /// literals in tests and examples.
    pub fn from_rows<R: AsRef<[u64]>>(field: PrimeField, rows: &[R]) -> Self {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let data: Vec<u64> = rows.iter().flat_map(|r| r.as_ref().to_vec()).collect();
        Self::new(field, rows.len(), cols, data).expect("well-formed matrix literal")
    }

    pub fn zeros(field: PrimeField, rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            field,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(field: PrimeField, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1 % field.modulus();
        }
        m
    }

    pub fn random<R: Rng + ?Sized>(field: PrimeField, rows: usize, cols: usize, rng: &mut R) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let data = (0..rows * cols).map(|_| field.sample_raw(rng)).collect();
        Self {
            field,
            rows,
            cols,
            data,
        }
    }

    #[inline]
    pub fn field(&self) -> PrimeField {
        self.field
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[u64] {
        &self.data
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> u64 {
        self.data[row * self.cols + col]
    }

    pub fn get(&self, row: usize, col: usize) -> FieldElement {
        self.field.element(self.value(row, col))
    }

    pub fn set(&mut self, row: usize, col: usize, value: u64) {
        self.data[row * self.cols + col] = self.field.reduce(value);
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), MatrixError> {
        self.field.ensure_same(&other.field)?;
        if self.shape() != other.shape() {
            return Err(MatrixError::ShapeMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, MatrixError> {
        self.field.ensure_same(&other.field)?;
        if self.cols != other.rows {
            return Err(MatrixError::MulShape {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let f = self.field;
        let mut out = vec![0u64; self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = f.add_raw(*o, f.mul_raw(a, b));
                }
            }
        }
        Ok(Self {
            field: f,
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, MatrixError> {
        self.check_same_shape(other)?;
        let f = self.field;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f.add_raw(a, b))
            .collect();
        Ok(Self { data, ..self.clone() })
    }

    pub fn scale(&self, c: FieldElement) -> Result<Self, MatrixError> {
        self.field.ensure_same(&c.field())?;
        let f = self.field;
        let data = self.data.iter().map(|&v| f.mul_raw(v, c.value())).collect();
        Ok(Self { data, ..self.clone() })
    }

    /// `self += c * m`, entrywise.
    pub fn axpy_assign(&mut self, c: u64, m: &Self) -> Result<(), MatrixError> {
        self.check_same_shape(m)?;
        let f = self.field;
        let c = f.reduce(c);
        if c == 0 {
            return Ok(());
        }
        for (acc, &v) in self.data.iter_mut().zip(&m.data) {
            *acc = f.add_raw(*acc, f.mul_raw(c, v));
        }
        Ok(())
    }

    /// Returns a copy enlarged with zero rows/columns to `rows x cols`.
    pub fn pad_to(&self, rows: usize, cols: usize) -> Self {
        assert!(rows >= self.rows && cols >= self.cols, "padding cannot shrink");
        if (rows, cols) == self.shape() {
            return self.clone();
        }
        let mut out = Self::zeros(self.field, rows, cols);
        for r in 0..self.rows {
            out.data[r * cols..r * cols + self.cols]
                .copy_from_slice(&self.data[r * self.cols..(r + 1) * self.cols]);
        }
        out
    }

    /// The `rows x cols` submatrix starting at `(row0, col0)`.
    pub fn submatrix(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Self {
        assert!(row0 + rows <= self.rows && col0 + cols <= self.cols);
        let mut data = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            data.extend_from_slice(&self.data[r * self.cols + col0..r * self.cols + col0 + cols]);
        }
        Self {
            field: self.field,
            rows,
            cols,
            data,
        }
    }

    /// Splits into `spec.parts` equal blocks along `spec.axis`, zero-padding
    /// the split dimension up to a multiple of the part count first.
    pub fn partition(&self, spec: PartitionSpec) -> Result<Vec<Self>, MatrixError> {
        if spec.parts == 0 {
            return Err(MatrixError::ZeroParts);
        }
        match spec.axis {
            Axis::Rows => {
                let padded = self.pad_to(padded_len(self.rows, spec.parts), self.cols);
                let h = padded.rows / spec.parts;
                Ok((0..spec.parts)
                    .map(|i| padded.submatrix(i * h, 0, h, self.cols))
                    .collect())
            }
            Axis::Cols => {
                let padded = self.pad_to(self.rows, padded_len(self.cols, spec.parts));
                let w = padded.cols / spec.parts;
                Ok((0..spec.parts)
                    .map(|i| padded.submatrix(0, i * w, self.rows, w))
                    .collect())
            }
        }
    }

    /// Transposes the matrix.
    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.data[r * self.cols + c]);
            }
        }
        Self {
            field: self.field,
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.rows, self.cols, self.field.modulus());
        for r in 0..self.rows {
            let row: Vec<String> = self.data[r * self.cols..(r + 1) * self.cols]
                .iter()
                .map(u64::to_string)
                .collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    /// Parses the text format. Entries must already be reduced.
    pub fn from_text(text: &str) -> Result<Self, MatrixError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| MatrixError::Parse("missing header line".into()))?;
        let nums: Vec<u64> = parse_numbers(header)?;
        let [rows, cols, modulus] = nums[..] else {
            return Err(MatrixError::Parse(format!(
                "header must be `rows cols modulus`, got `{header}`"
            )));
        };
        let field = PrimeField::new(modulus)?;
        let (rows, cols) = (rows as usize, cols as usize);
        let mut data = Vec::with_capacity(rows.saturating_mul(cols).min(1 << 24));
        let mut n_rows = 0;
        for line in lines {
            let row = parse_numbers(line)?;
            if row.len() != cols {
                return Err(MatrixError::Parse(format!(
                    "row {} has {} entries, expected {cols}",
                    n_rows + 1,
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|&&v| v >= modulus) {
                return Err(MatrixError::Parse(format!(
                    "entry {v} is not reduced modulo {modulus}"
                )));
            }
            data.extend(row);
            n_rows += 1;
        }
        if n_rows != rows {
            return Err(MatrixError::Parse(format!(
                "expected {rows} rows, found {n_rows}"
            )));
        }
        Self::new(field, rows, cols, data)
    }

    /// Byte length of the binary encoding.
    pub fn binary_len(&self) -> usize {
        24 + 8 * self.data.len()
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        w.write_all(&self.field.modulus().to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.binary_len());
        self.write_binary(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads one binary matrix. `max_entries` bounds the allocation a
    /// hostile header can request.
    pub fn read_binary<R: Read>(r: &mut R, max_entries: usize) -> Result<Self, MatrixError> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<u64, MatrixError> {
            r.read_exact(&mut word).map_err(|e| match e.kind() {
                io::ErrorKind::UnexpectedEof => MatrixError::Binary("truncated input".into()),
                _ => MatrixError::Io(e),
            })?;
            Ok(u64::from_le_bytes(word))
        };
        let rows = next(r)?;
        let cols = next(r)?;
        let modulus = next(r)?;
        let field = PrimeField::new(modulus)?;
        let count = rows
            .checked_mul(cols)
            .filter(|&c| c as usize <= max_entries && c > 0)
            .ok_or_else(|| MatrixError::Binary(format!("bad shape {rows}x{cols}")))?;
        let mut data = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let v = next(r)?;
            if v >= modulus {
                return Err(MatrixError::Binary(format!(
                    "entry {v} is not reduced modulo {modulus}"
                )));
            }
            data.push(v);
        }
        Self::new(field, rows as usize, cols as usize, data)
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self, MatrixError> {
        let mut cursor = bytes;
        let m = Self::read_binary(&mut cursor, bytes.len() / 8)?;
        if !cursor.is_empty() {
            return Err(MatrixError::Binary(format!(
                "{} trailing bytes",
                cursor.len()
            )));
        }
        Ok(m)
    }
}

fn parse_numbers(line: &str) -> Result<Vec<u64>, MatrixError> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<u64>()
                .map_err(|_| MatrixError::Parse(format!("invalid number `{t}`")))
        })
        .collect()
}

impl fmt::Debug for FieldMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldMatrix[{}x{} over {}](", self.rows, self.cols, self.field)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, "; ")?;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            write!(f, "{row:?}")?;
        }
        write!(f, ")")
    }
}

/// `acc + c * m` as a new matrix.
pub fn scalar_axpy(
    acc: &FieldMatrix,
    c: FieldElement,
    m: &FieldMatrix,
) -> Result<FieldMatrix, MatrixError> {
    acc.field.ensure_same(&c.field())?;
    let mut out = acc.clone();
    out.axpy_assign(c.value(), m)?;
    Ok(out)
}

/// Reassembles blocks along `axis`; the inverse of [`FieldMatrix::partition`]
/// when no padding was added.
pub fn stack(blocks: &[FieldMatrix], axis: Axis) -> Result<FieldMatrix, MatrixError> {
    let first = blocks.first().ok_or(MatrixError::NoBlocks)?;
    let field = first.field;
    let (h, w) = first.shape();
    for (index, b) in blocks.iter().enumerate() {
        field.ensure_same(&b.field)?;
        if b.shape() != (h, w) {
            return Err(MatrixError::Ragged {
                index,
                rows: b.rows,
                cols: b.cols,
                expected_rows: h,
                expected_cols: w,
            });
        }
    }
    match axis {
        Axis::Rows => {
            let data = blocks.iter().flat_map(|b| b.data.iter().copied()).collect();
            Ok(FieldMatrix {
                field,
                rows: h * blocks.len(),
                cols: w,
                data,
            })
        }
        Axis::Cols => {
            let cols = w * blocks.len();
            let mut data = Vec::with_capacity(h * cols);
            for r in 0..h {
                for b in blocks {
                    data.extend_from_slice(&b.data[r * w..(r + 1) * w]);
                }
            }
            Ok(FieldMatrix {
                field,
                rows: h,
                cols,
                data,
            })
        }
    }
}

/// Assembles a grid of equally shaped blocks, `grid[i][j]` landing at block
/// row `i`, block column `j`.
pub fn stack_grid(grid: &[Vec<FieldMatrix>]) -> Result<FieldMatrix, MatrixError> {
    let rows: Vec<FieldMatrix> = grid
        .iter()
        .map(|row| stack(row, Axis::Cols))
        .collect::<Result<_, _>>()?;
    stack(&rows, Axis::Rows)
}
