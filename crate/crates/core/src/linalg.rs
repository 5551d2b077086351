//! Dense symmetric linear algebra: shifted positive-definite solves, the
//! `Q(l, v)` and `q(l, v)` functionals, rank-one updates and the reference
//! smallest-eigenvalue computation.
//!
//! Everything here is a pure function of its inputs. Matrices are dense and
//! factorizations are recomputed per call.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{invalid, Error, Result};

/// Relative pivot tolerance for accepting `A - l·I` as positive definite.
pub const PD_TOLERANCE: f64 = 1e-10;

/// Magic word of the binary matrix file format (`"RABS"` on disk).
pub const MATRIX_MAGIC: u32 = 0x5342_4152;

const EIGEN_MAX_ITERATIONS: usize = 1_000_000;

/// Dense symmetric `p × p` matrix. Symmetry is exact: every constructor
/// either checks it or writes both triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self(DMatrix::zeros(dim, dim)))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self(DMatrix::identity(dim, dim)))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        check_dim(diag.len())?;
        Ok(Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag))))
    }

    /// Wraps a square matrix, rejecting anything not exactly symmetric.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(invalid(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        check_dim(m.nrows())?;
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if m[(i, j)] != m[(j, i)] {
                    return Err(invalid(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self(m))
    }

    /// Symmetrizes `m` by copying its lower triangle onto the upper one.
    pub fn from_lower(mut m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(invalid("matrix must be square"));
        }
        check_dim(m.nrows())?;
        m.fill_upper_triangle_with_lower_triangle();
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("rows must form a square matrix"));
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `self · s` for a scalar `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quadratic_form(&self, x: &Vector) -> Result<f64> {
        check_same(self.dim(), x.dim())?;
        Ok(x.0.dot(&(&self.0 * &x.0)))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(invalid("dimension must be at least 1"))
    } else {
        Ok(())
    }
}

fn check_same(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        Err(Error::DimensionMismatch { expected, actual })
    } else {
        Ok(())
    }
}

/// Dense real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(DVector<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Self {
        Self(DVector::from_vec(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    /// `i`-th standard basis vector of `ℝ^dim`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        Self(v)
    }

    pub fn from_dvector(v: DVector<f64>) -> Self {
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_dvector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Self::new(v)
    }
}

/// Cholesky factorization of `A - l·I` together with its explicit inverse.
///
/// Construction fails unless the shifted matrix is positive definite with
/// every pivot above `PD_TOLERANCE` times the largest diagonal magnitude.
#[derive(Debug, Clone)]
pub struct ShiftedFactorization {
    shift: f64,
    factor: Cholesky<f64, Dyn>,
    inverse: DMatrix<f64>,
    inverse_trace: f64,
    inverse_sq_trace: f64,
}

/// Factorizes `A - l·I`.
pub fn shifted_factorize(a: &SymMatrix, shift: f64) -> Result<ShiftedFactorization> {
    let p = a.dim();
    let mut m = a.0.clone();
    for i in 0..p {
        m[(i, i)] -= shift;
    }
    let scale = (0..p).map(|i| m[(i, i)].abs()).fold(0.0_f64, f64::max);
    let not_pd = |row: usize, pivot: f64| Error::NotPositiveDefinite { shift, row, pivot };
    if !scale.is_finite() {
        return Err(not_pd(0, f64::NAN));
    }
    let factor = Cholesky::new(m).ok_or_else(|| not_pd(0, f64::NAN))?;
    let threshold = PD_TOLERANCE * scale;
    let l = factor.l_dirty();
    for i in 0..p {
        let pivot = l[(i, i)] * l[(i, i)];
        if !(pivot > threshold) || !pivot.is_finite() {
            return Err(not_pd(i, pivot));
        }
    }
    let inverse = factor.inverse();
    let inverse_trace = inverse.trace();
    let inverse_sq_trace = inverse.norm_squared();
    if !(inverse_trace > 0.0) || !inverse_trace.is_finite() || !inverse_sq_trace.is_finite() {
        return Err(not_pd(p - 1, 0.0));
    }
    Ok(ShiftedFactorization {
        shift,
        factor,
        inverse,
        inverse_trace,
        inverse_sq_trace,
    })
}

impl ShiftedFactorization {
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn dim(&self) -> usize {
        self.inverse.nrows()
    }

    /// Solves `(A - l·I) x = b`.
    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        check_same(self.dim(), b.dim())?;
        Ok(Vector(self.factor.solve(&b.0)))
    }

    /// `Q(l, v) = vᵀ (A - l·I)⁻¹ v`.
    pub fn big_q(&self, v: &Vector) -> Result<f64> {
        check_same(self.dim(), v.dim())?;
        let w = &self.inverse * &v.0;
        Ok(v.0.dot(&w).max(0.0))
    }

    /// `q(l, v) = vᵀ (A - l·I)⁻² v / tr (A - l·I)⁻²`.
    pub fn small_q(&self, v: &Vector) -> Result<f64> {
        check_same(self.dim(), v.dim())?;
        let w = &self.inverse * &v.0;
        Ok(w.norm_squared() / self.inverse_sq_trace)
    }

    /// Both functionals from a single solve: `(Q, q)`.
    pub fn big_and_small_q(&self, v: &Vector) -> Result<(f64, f64)> {
        check_same(self.dim(), v.dim())?;
        let w = &self.inverse * &v.0;
        Ok((v.0.dot(&w).max(0.0), w.norm_squared() / self.inverse_sq_trace))
    }

    /// `tr (A - l·I)⁻¹`.
    pub fn inverse_trace(&self) -> f64 {
        self.inverse_trace
    }

    /// `tr (A - l·I)⁻²`, the squared Frobenius norm of the inverse.
    pub fn inverse_sq_trace(&self) -> f64 {
        self.inverse_sq_trace
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }
}

pub fn big_q(f: &ShiftedFactorization, v: &Vector) -> Result<f64> {
    f.big_q(v)
}

pub fn small_q(f: &ShiftedFactorization, v: &Vector) -> Result<f64> {
    f.small_q(v)
}

pub fn shifted_inverse_trace(f: &ShiftedFactorization) -> f64 {
    f.inverse_trace()
}

/// `A + v vᵀ`, written to both triangles so symmetry stays exact.
pub fn rank_one_update(a: &SymMatrix, v: &Vector) -> Result<SymMatrix> {
    let mut out = a.clone();
    rank_one_update_in_place(&mut out, v)?;
    Ok(out)
}

pub(crate) fn rank_one_update_in_place(a: &mut SymMatrix, v: &Vector) -> Result<()> {
    let p = a.dim();
    check_same(p, v.dim())?;
    let x = v.as_slice();
    for j in 0..p {
        for i in j..p {
            let add = x[i] * x[j];
            a.0[(i, j)] += add;
            if i != j {
                a.0[(j, i)] += add;
            }
        }
    }
    Ok(())
}

/// Smallest eigenvalue by a dense symmetric eigensolver.
pub fn min_eigenvalue(a: &SymMatrix) -> Result<f64> {
    let dim = a.dim();
    let eig = SymmetricEigen::try_new(a.0.clone(), f64::EPSILON, EIGEN_MAX_ITERATIONS)
        .ok_or(Error::ConvergenceFailure { dim })?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Storage flavour of a matrix file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

/// Writes a general `rows × cols` matrix in the given format.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>, format: MatrixFormat) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    match format {
        MatrixFormat::Binary => write_matrix_binary(&mut w, m)?,
        MatrixFormat::Csv => write_matrix_csv(&mut w, m)?,
    }
    w.flush()?;
    Ok(())
}

/// Little-endian header `[magic, rows, cols]` followed by row-major `f64`s.
pub fn write_matrix_binary<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    let rows = u32::try_from(m.nrows()).map_err(|_| invalid("too many rows"))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| invalid("too many columns"))?;
    w.write_all(&MATRIX_MAGIC.to_le_bytes())?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_matrix_csv<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a matrix file, detecting the binary format by its magic word and
/// falling back to CSV otherwise.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() >= 4 && u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) == MATRIX_MAGIC
    {
        parse_matrix_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Format("not UTF-8 CSV".into()))?;
        parse_matrix_csv(&text)
    }
}

pub fn parse_matrix_binary(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < 12 {
        return Err(Error::Format("truncated header".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    if word(0) != MATRIX_MAGIC {
        return Err(Error::Format(format!("bad magic {:#010x}", word(0))));
    }
    let rows = word(1) as usize;
    let cols = word(2) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(12))
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} bytes for {rows}x{cols}, found {}",
            bytes.len()
        )));
    }
    let body = &bytes[12..];
    Ok(DMatrix::from_fn(rows, cols, |i, j| {
        let at = 8 * (i * cols + j);
        f64::from_le_bytes(body[at..at + 8].try_into().unwrap())
    }))
}

pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
