//! Dense complex matrix kernels.
//!
//! Everything here works on small (≤ 128×128) dense matrices. The Hermitian
//! eigensolver (Householder tridiagonalization followed by implicit QR) comes
//! from `nalgebra`; this module adds the contract checks, a deterministic
//! ordering and phase convention, a pivot-checked Cholesky, and the generalized
//! Rayleigh-quotient maximizer used by the closed-form transmit beamformer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Ratio below which the smallest eigenvalue of a "positive definite" input is
/// treated as zero.
pub const PD_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (asymmetry {defect:e} exceeds {bound:e})")]
    NotHermitian { defect: f64, bound: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise deviation `|A[i][j] - conj(A[j][i])|`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_square(a: &CMatrix) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(NumericsError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

fn check_hermitian(a: &CMatrix) -> Result<()> {
    check_square(a)?;
    let defect = hermitian_defect(a);
    let bound = HERMITIAN_TOL * max_abs(a);
    if defect > bound {
        return Err(NumericsError::NotHermitian { defect, bound });
    }
    Ok(())
}

/// `(A + A^H) / 2`.
pub fn symmetrize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// `u v^H`.
pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

/// `Re(x^H A x)`.
pub fn quad_form(a: &CMatrix, x: &CVector) -> f64 {
    x.dotc(&(a * x)).re
}

/// `Re tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..a.ncols() {
            let x = a[(i, k)];
            let y = b[(k, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

pub fn trace_re(a: &CMatrix) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

/// Rotates `v` so that its largest-magnitude entry (first one on ties) is real
/// and nonnegative.
pub fn normalize_phase(v: &mut CVector) {
    let peak = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return;
    }
    let idx = v
        .iter()
        .position(|z| z.norm() >= peak * (1.0 - 1e-12))
        .unwrap_or(0);
    let rot = v[idx].conj() / v[idx].norm();
    for z in v.iter_mut() {
        *z *= rot;
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn max_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    /// Eigenvector belonging to the largest eigenvalue.
    pub fn top_vector(&self) -> CVector {
        self.vectors.column(self.vectors.ncols() - 1).into_owned()
    }

    /// `V diag(f(λ)) V^H`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        &scaled * self.vectors.adjoint()
    }
}

/// Decomposes the Hermitian part of `a` without checking how Hermitian it was.
/// Used internally where inputs are Hermitian up to accumulated round-off.
pub(crate) fn eigh(a: &CMatrix) -> HermitianEigen {
    let sym = symmetrize(a);
    let n = sym.nrows();
    let decomposition = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        decomposition.eigenvalues[i]
            .partial_cmp(&decomposition.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| decomposition.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col: CVector = decomposition.eigenvectors.column(src).into_owned();
        normalize_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    HermitianEigen { values, vectors }
}

pub fn hermitian_eig(a: &CMatrix) -> Result<HermitianEigen> {
    check_hermitian(a)?;
    Ok(eigh(a))
}

/// Cholesky factor of the Hermitian part of `a`; `None` when a pivot is not
/// strictly positive.
pub(crate) fn cholesky_lower(a: &CMatrix) -> Option<CMatrix> {
    let n = a.nrows();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = c64(d, 0.0);
        for i in j + 1..n {
            let mut s = 0.5 * (a[(i, j)] + a[(j, i)].conj());
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Lower-triangular `L` with `L L^H = A`.
pub fn cholesky(a: &CMatrix) -> Result<CMatrix> {
    check_hermitian(a)?;
    cholesky_lower(a).ok_or(NumericsError::NotPositiveDefinite)
}

/// Maximizer of `x^H B x / x^H A x`.
#[derive(Debug, Clone)]
pub struct RayleighMax {
    /// Unit-norm maximizer, phase-normalized.
    pub vector: CVector,
    pub value: f64,
}

/// Maximizes the generalized Rayleigh quotient `x^H B x / x^H A x` for
/// positive definite `A`.
///
/// Reduces to the Hermitian problem `L^{-1} B L^{-H}` with `L = chol(A)`; the
/// top eigenvector `y` maps back to `x = L^{-H} y`.
pub fn generalized_rayleigh_max(a: &CMatrix, b: &CMatrix) -> Result<RayleighMax> {
    check_hermitian(a)?;
    check_hermitian(b)?;
    if a.nrows() != b.nrows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let spectrum = eigh(a);
    if spectrum.max_value() <= 0.0 || spectrum.min_value() <= PD_TOL * spectrum.max_value() {
        return Err(NumericsError::NotPositiveDefinite);
    }
    let l = cholesky_lower(a).ok_or(NumericsError::NotPositiveDefinite)?;
    let left = l
        .solve_lower_triangular(&symmetrize(b))
        .ok_or(NumericsError::NotPositiveDefinite)?;
    let reduced = l
        .solve_lower_triangular(&left.adjoint())
        .ok_or(NumericsError::NotPositiveDefinite)?;
    let top = eigh(&reduced).top_vector();
    let mut x = l
        .adjoint()
        .solve_upper_triangular(&top)
        .ok_or(NumericsError::NotPositiveDefinite)?;
    let norm = x.norm();
    x.unscale_mut(norm);
    normalize_phase(&mut x);
    let value = quad_form(b, &x) / quad_form(a, &x);
    Ok(RayleighMax { vector: x, value })
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Best rank-one factor of a PSD matrix: returns `(sqrt(λ_max) u_max, λ_max)`.
/// A matrix with no positive eigenvalue yields the zero vector.
pub fn dominant_rank_one(a: &CMatrix) -> Result<(CVector, f64)> {
    check_hermitian(a)?;
    let eig = eigh(a);
    let top = eig.max_value();
    if top <= 0.0 {
        return Ok((CVector::zeros(a.nrows()), 0.0));
    }
    Ok((eig.top_vector().scale(top.sqrt()), top))
}

/// Row-major `{rows, cols, entries: [[re, im], ...]}` form used in JSON files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

impl From<&CMatrix> for MatrixRecord {
    fn from(m: &CMatrix) -> Self {
        let mut entries = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }
}

impl TryFrom<MatrixRecord> for CMatrix {
    type Error = NumericsError;

    fn try_from(r: MatrixRecord) -> Result<Self> {
        if r.entries.len() != r.rows * r.cols {
            return Err(NumericsError::DimensionMismatch(format!(
                "{} entries for a {}x{} matrix",
                r.entries.len(),
                r.rows,
                r.cols
            )));
        }
        Ok(CMatrix::from_row_iterator(
            r.rows,
            r.cols,
            r.entries.iter().map(|[re, im]| c64(*re, *im)),
        ))
    }
}

/// `#[serde(with = ...)]` adapters for matrices, vectors and lists of them.
pub mod serde_complex {
    use super::*;
    use serde::{de::Error as _, Deserializer, Serializer};

    pub mod matrix {
        use super::*;

        pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
            MatrixRecord::from(m).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<CMatrix, D::Error> {
            CMatrix::try_from(MatrixRecord::deserialize(d)?).map_err(D::Error::custom)
        }
    }

    pub mod vector {
        use super::*;

        pub fn serialize<S: Serializer>(v: &CVector, s: S) -> std::result::Result<S::Ok, S::Error> {
            v.iter()
                .map(|z| [z.re, z.im])
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<CVector, D::Error> {
            let raw = Vec::<[f64; 2]>::deserialize(d)?;
            Ok(CVector::from_iterator(
                raw.len(),
                raw.iter().map(|[re, im]| c64(*re, *im)),
            ))
        }
    }

    pub mod matrices {
        use super::*;

        pub fn serialize<S: Serializer>(
            ms: &[CMatrix],
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            ms.iter()
                .map(MatrixRecord::from)
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<CMatrix>, D::Error> {
            Vec::<MatrixRecord>::deserialize(d)?
                .into_iter()
                .map(|r| CMatrix::try_from(r).map_err(D::Error::custom))
                .collect()
        }
    }

    pub mod vectors {
        use super::*;

        pub fn serialize<S: Serializer>(
            vs: &[CVector],
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            vs.iter()
                .map(|v| v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<CVector>, D::Error> {
            let raw = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
            Ok(raw
                .iter()
                .map(|v| CVector::from_iterator(v.len(), v.iter().map(|[re, im]| c64(*re, *im))))
                .collect())
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
        symmetrize(&random_matrix(rng, n, n))
    }

    pub fn random_pd(rng: &mut impl Rng, n: usize) -> CMatrix {
        let m = random_matrix(rng, n, n);
        &m * m.adjoint() + CMatrix::identity(n, n)
    }

    pub fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        max_abs(&(a - b))
    }
}
