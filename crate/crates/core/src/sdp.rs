//! Small dense semidefinite programs over complex Hermitian matrices.
//!
//! Problems have one Hermitian PSD block `X` (n×n) and a handful of
//! nonnegative scalars `s`:
//!
//! ```text
//!   min / max   tr(C X) + c·s
//!   subject to  tr(A_i X) + a_i·s  {=, ≤, ≥}  b_i
//!               X ⪰ 0,  s ≥ 0
//! ```
//!
//! Inequalities get a nonnegative slack each, so internally everything is in
//! the standard equality form with a PSD block and a nonnegative orthant block.
//! The solver is an infeasible-start primal-dual path-following method using
//! the Nesterov-Todd scaling and Mehrotra's predictor-corrector.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    cholesky_lower, eigh, hermitian_defect, max_abs, symmetrize, trace_product, CMatrix,
    HERMITIAN_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

/// One linear constraint `tr(matrix X) + scalars·s (relation) rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub matrix: CMatrix,
    pub scalars: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub cone_dim: usize,
    pub num_scalars: usize,
    pub objective: CMatrix,
    pub scalar_objective: Vec<f64>,
    pub sense: Sense,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("constraint {index}: {reason}")]
    BadConstraint { index: usize, reason: String },
    #[error("objective: {0}")]
    BadObjective(String),
    #[error("problem has no constraints")]
    Unconstrained,
}

impl SdpProblem {
    pub fn new(cone_dim: usize, num_scalars: usize, sense: Sense) -> Self {
        Self {
            cone_dim,
            num_scalars,
            objective: CMatrix::zeros(cone_dim, cone_dim),
            scalar_objective: vec![0.0; num_scalars],
            sense,
            constraints: Vec::new(),
        }
    }

    pub fn with_objective(mut self, matrix: CMatrix, scalars: Vec<f64>) -> Self {
        self.objective = matrix;
        self.scalar_objective = scalars;
        self
    }

    pub fn add(&mut self, matrix: CMatrix, scalars: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            matrix,
            scalars,
            relation,
            rhs,
        });
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.constraints.is_empty() {
            return Err(SdpError::Unconstrained);
        }
        let n = self.cone_dim;
        let hermitian = |m: &CMatrix| hermitian_defect(m) <= HERMITIAN_TOL * max_abs(m);
        if self.objective.shape() != (n, n) || !hermitian(&self.objective) {
            return Err(SdpError::BadObjective(format!(
                "expected a Hermitian {n}x{n} matrix"
            )));
        }
        if self.scalar_objective.len() != self.num_scalars {
            return Err(SdpError::BadObjective(format!(
                "expected {} scalar coefficients, got {}",
                self.num_scalars,
                self.scalar_objective.len()
            )));
        }
        for (index, c) in self.constraints.iter().enumerate() {
            if c.matrix.shape() != (n, n) || !hermitian(&c.matrix) {
                return Err(SdpError::BadConstraint {
                    index,
                    reason: format!("expected a Hermitian {n}x{n} matrix"),
                });
            }
            if c.scalars.len() != self.num_scalars {
                return Err(SdpError::BadConstraint {
                    index,
                    reason: format!(
                        "expected {} scalar coefficients, got {}",
                        self.num_scalars,
                        c.scalars.len()
                    ),
                });
            }
            if !c.rhs.is_finite() {
                return Err(SdpError::BadConstraint {
                    index,
                    reason: "right-hand side is not finite".into(),
                });
            }
        }
        Ok(())
    }

    /// Plain-text dump for offline cross-checks. Every matrix is written in
    /// coordinate form (1-based `row col re im`), skipping exact zeros.
    pub fn write_dump<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "%%SdpProblem complex hermitian coordinate")?;
        let sense = match self.sense {
            Sense::Minimize => "minimize",
            Sense::Maximize => "maximize",
        };
        writeln!(
            out,
            "{} {} {} {}",
            self.cone_dim,
            self.num_scalars,
            self.constraints.len(),
            sense
        )?;
        write_block(
            out,
            "objective",
            &self.objective,
            &self.scalar_objective,
            None,
        )?;
        for (i, c) in self.constraints.iter().enumerate() {
            let rel = match c.relation {
                Relation::Eq => "=",
                Relation::Le => "<=",
                Relation::Ge => ">=",
            };
            write_block(
                out,
                &format!("constraint {}", i + 1),
                &c.matrix,
                &c.scalars,
                Some((rel, c.rhs)),
            )?;
        }
        Ok(())
    }
}

fn write_block<W: Write>(
    out: &mut W,
    name: &str,
    m: &CMatrix,
    scalars: &[f64],
    rel: Option<(&str, f64)>,
) -> io::Result<()> {
    let nnz = m.iter().filter(|z| z.re != 0.0 || z.im != 0.0).count();
    match rel {
        Some((r, b)) => writeln!(out, "% {name} {r} {b:.17e}")?,
        None => writeln!(out, "% {name}")?,
    }
    writeln!(out, "{nnz}")?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if z.re != 0.0 || z.im != 0.0 {
                writeln!(out, "{} {} {:.17e} {:.17e}", i + 1, j + 1, z.re, z.im)?;
            }
        }
    }
    let coeffs: Vec<String> = scalars.iter().map(|s| format!("{s:.17e}")).collect();
    writeln!(out, "scalars {}", coeffs.join(" "))
}

/// Maps a complex Hermitian problem to an equivalent real symmetric one.
///
/// Each n×n Hermitian `M` becomes the 2n×2n block `[[Re M, -Im M], [Im M, Re M]]`.
/// Traces against embedded matrices double, so every matrix block is halved to
/// keep right-hand sides, scalar coefficients and optimal values unchanged.
pub fn embed_complex(problem: &SdpProblem) -> SdpProblem {
    let embed = |m: &CMatrix| -> CMatrix {
        let n = m.nrows();
        let mut out = CMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = m[(i, j)] * 0.5;
                out[(i, j)] = Complex64::new(z.re, 0.0);
                out[(i + n, j + n)] = Complex64::new(z.re, 0.0);
                out[(i, j + n)] = Complex64::new(-z.im, 0.0);
                out[(i + n, j)] = Complex64::new(z.im, 0.0);
            }
        }
        out
    };
    SdpProblem {
        cone_dim: 2 * problem.cone_dim,
        num_scalars: problem.num_scalars,
        objective: embed(&problem.objective),
        scalar_objective: problem.scalar_objective.clone(),
        sense: problem.sense,
        constraints: problem
            .constraints
            .iter()
            .map(|c| Constraint {
                matrix: embed(&c.matrix),
                scalars: c.scalars.clone(),
                relation: c.relation,
                rhs: c.rhs,
            })
            .collect(),
    }
}

/// Recovers the complex matrix from a solution of an embedded problem by
/// averaging the two copies of each block.
pub fn extract_complex(embedded: &CMatrix) -> CMatrix {
    let n = embedded.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| {
        let re = 0.5 * (embedded[(i, j)].re + embedded[(i + n, j + n)].re);
        let im = 0.5 * (embedded[(i + n, j)].re - embedded[(i, j + n)].re);
        Complex64::new(re, im)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterateSummary {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: CMatrix,
    pub scalar_values: Vec<f64>,
    /// Objective in the problem's own sense.
    pub objective_value: f64,
    pub status: SdpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Complementarity relative to `1 + |primal| + |dual|`.
    pub duality_gap: f64,
    pub iterations: usize,
    /// Dual multipliers of the user constraints (minimization convention).
    pub y: Vec<f64>,
    /// Dual slack of the PSD block.
    pub z: CMatrix,
    pub trace: Vec<IterateSummary>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

/// Equality standard form: `min <C,X> + c·x  s.t.  <A_i,X> + a_i·x = b_i`.
struct Standard {
    n: usize,
    l: usize,
    a_mat: Vec<CMatrix>,
    a_lin: Vec<DVector<f64>>,
    b: DVector<f64>,
    c_mat: CMatrix,
    c_lin: DVector<f64>,
}

impl Standard {
    fn from_problem(p: &SdpProblem) -> Self {
        let slacks = p
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let l = p.num_scalars + slacks;
        let sign = match p.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut a_mat = Vec::with_capacity(p.constraints.len());
        let mut a_lin = Vec::with_capacity(p.constraints.len());
        let mut slack = p.num_scalars;
        for c in &p.constraints {
            a_mat.push(symmetrize(&c.matrix));
            let mut row = DVector::zeros(l);
            row.rows_mut(0, p.num_scalars).copy_from_slice(&c.scalars);
            match c.relation {
                Relation::Eq => {}
                Relation::Le => {
                    row[slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                }
            }
            a_lin.push(row);
        }
        let mut c_lin = DVector::zeros(l);
        for (k, v) in p.scalar_objective.iter().enumerate() {
            c_lin[k] = sign * v;
        }
        Self {
            n: p.cone_dim,
            l,
            a_mat,
            a_lin,
            b: DVector::from_iterator(p.constraints.len(), p.constraints.iter().map(|c| c.rhs)),
            c_mat: symmetrize(&p.objective).scale(sign),
            c_lin,
        }
    }

    fn m(&self) -> usize {
        self.a_mat.len()
    }

    fn apply(&self, x_mat: &CMatrix, x_lin: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            (0..self.m()).map(|i| trace_product(&self.a_mat[i], x_mat) + self.a_lin[i].dot(x_lin)),
        )
    }

    fn adjoint(&self, y: &DVector<f64>) -> (CMatrix, DVector<f64>) {
        let mut mat = CMatrix::zeros(self.n, self.n);
        let mut lin = DVector::zeros(self.l);
        for i in 0..self.m() {
            if y[i] != 0.0 {
                mat += self.a_mat[i].scale(y[i]);
                lin += self.a_lin[i].scale(y[i]);
            }
        }
        (mat, lin)
    }
}

fn frob(m: &CMatrix) -> f64 {
    m.norm()
}

/// Largest `α` with `X + α dX ⪰ 0`, given the Cholesky factor of `X`.
fn psd_step(lx: &CMatrix, dx: &CMatrix) -> f64 {
    let Some(left) = lx.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(scaled) = lx.solve_lower_triangular(&left.adjoint()) else {
        return 0.0;
    };
    let lambda = eigh(&scaled).min_value();
    if lambda >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lambda
    }
}

fn lin_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Scaling {
    g: CMatrix,
    w: CMatrix,
    s: DVector<f64>,
    d: DVector<f64>,
    /// `W A_j W` for every constraint.
    wa: Vec<CMatrix>,
    schur: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

struct Direction {
    dx: CMatrix,
    dx_lin: DVector<f64>,
    dy: DVector<f64>,
    dz: CMatrix,
    dz_lin: DVector<f64>,
    /// `ΔX̃ + ΔZ̃` in the scaled space.
    r_scaled: CMatrix,
}

impl Standard {
    fn scaling(
        &self,
        lx: &CMatrix,
        lz: &CMatrix,
        x_lin: &DVector<f64>,
        z_lin: &DVector<f64>,
    ) -> Option<Scaling> {
        let n = self.n;
        let svd = SVD::new(lz.adjoint() * lx, false, true);
        let v = svd.v_t?.adjoint();
        let s = svd.singular_values.clone();
        if s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return None;
        }
        let mut g = lx * v;
        for j in 0..n {
            let f = 1.0 / s[j].sqrt();
            for i in 0..n {
                g[(i, j)] *= f;
            }
        }
        let w = symmetrize(&(&g * g.adjoint()));
        let d = x_lin.component_div(z_lin);
        let wa: Vec<CMatrix> = self.a_mat.iter().map(|a| &w * a * &w).collect();
        let m = self.m();
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let lin: f64 = (0..self.l)
                    .map(|k| self.a_lin[i][k] * d[k] * self.a_lin[j][k])
                    .sum();
                let v = trace_product(&self.a_mat[i], &wa[j]) + lin;
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        let factor = match nalgebra::Cholesky::new(schur.clone()) {
            Some(f) => f,
            None => {
                let bump = 1e-12 * schur.diagonal().amax().max(1e-300);
                let mut reg = schur;
                for i in 0..m {
                    reg[(i, i)] += bump;
                }
                nalgebra::Cholesky::new(reg)?
            }
        };
        Some(Scaling {
            g,
            w,
            s,
            d,
            wa,
            schur: factor,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        sc: &Scaling,
        rp: &DVector<f64>,
        rd_mat: &CMatrix,
        rd_lin: &DVector<f64>,
        rc_scaled: &CMatrix,
        rc_lin: &DVector<f64>,
        z_lin: &DVector<f64>,
    ) -> Direction {
        let n = self.n;
        let r_scaled =
            CMatrix::from_fn(n, n, |i, j| rc_scaled[(i, j)] * (2.0 / (sc.s[i] + sc.s[j])));
        let grg = symmetrize(&(&sc.g * &r_scaled * sc.g.adjoint()));
        let w_rd_w = &sc.w * rd_mat * &sc.w;
        let rl = rc_lin.component_div(z_lin);
        let d_rd = sc.d.component_mul(rd_lin);
        let rhs = DVector::from_iterator(
            self.m(),
            (0..self.m()).map(|i| {
                rp[i] - trace_product(&self.a_mat[i], &grg) + trace_product(&self.a_mat[i], &w_rd_w)
                    - self.a_lin[i].dot(&rl)
                    + self.a_lin[i].dot(&d_rd)
            }),
        );
        let dy = sc.schur.solve(&rhs);
        let (aty_mat, aty_lin) = self.adjoint(&dy);
        let dz = symmetrize(&(rd_mat - aty_mat));
        let dz_lin = rd_lin - aty_lin;
        let mut wdzw = CMatrix::zeros(n, n);
        // W ΔZ W = W Rd W - Σ Δy_j W A_j W
        wdzw += &w_rd_w;
        for (j, wa) in sc.wa.iter().enumerate() {
            wdzw -= wa.scale(dy[j]);
        }
        let dx = symmetrize(&(grg - wdzw));
        let dx_lin = rl - sc.d.component_mul(&dz_lin);
        Direction {
            dx,
            dx_lin,
            dy,
            dz,
            dz_lin,
            r_scaled,
        }
    }
}

impl Standard {
    /// Newton refinement on the optimal face.
    ///
    /// With `X = V Vᴴ` of rank `r` (read off by comparing `X` against `Z` on
    /// the eigenvectors of `Z`) and the active scalars `J`, the optimality
    /// conditions become the square system
    ///
    /// ```text
    ///   tr(A_i V Vᴴ) + a_i·s = b_i,   Z(y) V = 0,   c_j − (Aᵀy)_j = 0  (j ∈ J)
    /// ```
    ///
    /// which converges quadratically where the interior iterates only get
    /// `O(√μ)` close in the off-face directions. The result is kept only if it
    /// is both primal and dual feasible and reduces the residual.
    fn polish(
        &self,
        x: &CMatrix,
        x_lin: &DVector<f64>,
        y: &DVector<f64>,
        z: &CMatrix,
        z_lin: &DVector<f64>,
    ) -> Option<Polished> {
        let (n, m) = (self.n, self.m());
        let ez = eigh(z);
        let r = (0..n)
            .filter(|&i| {
                let v = ez.vectors.column(i);
                (v.adjoint() * x * v)[(0, 0)].re > ez.values[i]
            })
            .count();
        let lin: Vec<usize> = (0..self.l).filter(|&j| x_lin[j] > z_lin[j]).collect();
        if r == n || 2 * n * r > POLISH_MAX_UNKNOWNS {
            return None;
        }
        let ex = eigh(x);
        let mut v = CMatrix::zeros(n, r);
        for k in 0..r {
            let col = n - 1 - k;
            let scale = ex.values[col].max(0.0).sqrt();
            v.set_column(k, &ex.vectors.column(col).scale(scale));
        }
        let mut y = y.clone();
        let mut s = DVector::from_fn(lin.len(), |j, _| x_lin[lin[j]]);

        let residual = |v: &CMatrix, y: &DVector<f64>, s: &DVector<f64>| -> DVector<f64> {
            let vv = v * v.adjoint();
            let (aty, aty_lin) = self.adjoint(y);
            let zy = &self.c_mat - aty;
            let zv = &zy * v;
            let mut out = Vec::with_capacity(m + 2 * n * r + lin.len());
            for i in 0..m {
                let lin_part: f64 = lin
                    .iter()
                    .enumerate()
                    .map(|(j, &idx)| self.a_lin[i][idx] * s[j])
                    .sum();
                out.push(trace_product(&self.a_mat[i], &vv) + lin_part - self.b[i]);
            }
            for e in zv.iter() {
                out.push(e.re);
                out.push(e.im);
            }
            for &idx in &lin {
                out.push(self.c_lin[idx] - aty_lin[idx]);
            }
            DVector::from_vec(out)
        };
        let jacobian = |v: &CMatrix, y: &DVector<f64>| -> DMatrix<f64> {
            let (aty, _) = self.adjoint(y);
            let zy = &self.c_mat - aty;
            let rows = m + 2 * n * r + lin.len();
            let cols = 2 * n * r + m + lin.len();
            let mut jac = DMatrix::zeros(rows, cols);
            let mut put =
                |col: usize, dvv: Option<&CMatrix>, dzv: &CMatrix, dlin: &[f64], dcl: &[f64]| {
                    for i in 0..m {
                        jac[(i, col)] =
                            dvv.map_or(0.0, |d| trace_product(&self.a_mat[i], d)) + dlin[i];
                    }
                    for (k, e) in dzv.iter().enumerate() {
                        jac[(m + 2 * k, col)] = e.re;
                        jac[(m + 2 * k + 1, col)] = e.im;
                    }
                    for (j, val) in dcl.iter().enumerate() {
                        jac[(m + 2 * n * r + j, col)] = *val;
                    }
                };
            let zeros_m = vec![0.0; m];
            let zeros_j = vec![0.0; lin.len()];
            for k in 0..n * r {
                for (part, unit) in [(0, Complex64::new(1.0, 0.0)), (1, Complex64::new(0.0, 1.0))] {
                    let mut dv = CMatrix::zeros(n, r);
                    dv[k] = unit;
                    let dvv = &dv * v.adjoint() + v * dv.adjoint();
                    put(2 * k + part, Some(&dvv), &(&zy * &dv), &zeros_m, &zeros_j);
                }
            }
            for i in 0..m {
                let dzv = -(&self.a_mat[i] * v);
                let dcl: Vec<f64> = lin.iter().map(|&idx| -self.a_lin[i][idx]).collect();
                put(2 * n * r + i, None, &dzv, &zeros_m, &dcl);
            }
            for (j, &idx) in lin.iter().enumerate() {
                let dlin: Vec<f64> = (0..m).map(|i| self.a_lin[i][idx]).collect();
                put(
                    2 * n * r + m + j,
                    None,
                    &CMatrix::zeros(n, r),
                    &dlin,
                    &zeros_j,
                );
            }
            jac
        };

        let start = residual(&v, &y, &s).norm();
        let mut current = start;
        for _ in 0..8 {
            let f = residual(&v, &y, &s);
            let jac = jacobian(&v, &y);
            let svd = SVD::new(jac, true, true);
            let cutoff = 1e-10 * svd.singular_values.max();
            let full = svd.solve(&(-f), cutoff).ok()?;
            let mut accepted = false;
            let mut t = 1.0;
            for _ in 0..20 {
                let step = full.scale(t);
                let mut nv = v.clone();
                for k in 0..n * r {
                    nv[k] += Complex64::new(step[2 * k], step[2 * k + 1]);
                }
                let ny = &y + step.rows(2 * n * r, m);
                let ns = &s + step.rows(2 * n * r + m, lin.len());
                let next = residual(&nv, &ny, &ns).norm();
                if next < current {
                    v = nv;
                    y = ny;
                    s = ns;
                    current = next;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            if current <= 1e-15 * (1.0 + self.b.norm()) {
                break;
            }
        }
        if !(current < start) || s.iter().any(|&v| v < 0.0) {
            return None;
        }

        let (aty, aty_lin) = self.adjoint(&y);
        let new_z = symmetrize(&(&self.c_mat - aty));
        let new_z_lin = &self.c_lin - aty_lin;
        let floor = -1e-9 * (1.0 + max_abs(&new_z));
        if eigh(&new_z).min_value() < floor {
            return None;
        }
        let mut new_x_lin = DVector::zeros(self.l);
        for (j, &idx) in lin.iter().enumerate() {
            new_x_lin[idx] = s[j];
        }
        for j in 0..self.l {
            if !lin.contains(&j) && new_z_lin[j] < floor {
                return None;
            }
        }
        let new_z_lin = DVector::from_fn(self.l, |j, _| {
            if lin.contains(&j) {
                0.0
            } else {
                new_z_lin[j].max(0.0)
            }
        });
        Some(Polished {
            x: symmetrize(&(&v * v.adjoint())),
            x_lin: new_x_lin,
            y,
            z: new_z,
            z_lin: new_z_lin,
        })
    }
}

struct Polished {
    x: CMatrix,
    x_lin: DVector<f64>,
    y: DVector<f64>,
    z: CMatrix,
    z_lin: DVector<f64>,
}

const REFINE_TOL: f64 = 1e-12;
const REFINE_STEPS: usize = 12;
/// Face polishing is skipped when the factor `V` has more real unknowns.
const POLISH_MAX_UNKNOWNS: usize = 160;

struct Snapshot {
    merit: f64,
    x: CMatrix,
    x_lin: DVector<f64>,
    y: DVector<f64>,
    z: CMatrix,
    z_lin: DVector<f64>,
    pres: f64,
    dres: f64,
    relgap: f64,
}

/// Solves a small complex SDP with the default options.
pub fn solve(problem: &SdpProblem) -> Result<SdpSolution, SdpError> {
    solve_with(problem, &SdpOptions::default())
}

pub fn solve_with(problem: &SdpProblem, options: &SdpOptions) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    let std = Standard::from_problem(problem);
    let (n, l, m) = (std.n, std.l, std.m());
    let nu = (n + l) as f64;

    let start = 1.0 + std.b.amax();
    let mut x = CMatrix::identity(n, n).scale(start);
    let mut z = CMatrix::identity(n, n).scale(start);
    let mut x_lin = DVector::from_element(l, start);
    let mut z_lin = DVector::from_element(l, start);
    let mut y = DVector::<f64>::zeros(m);

    let b_norm = std.b.norm();
    let c_norm = (frob(&std.c_mat).powi(2) + std.c_lin.norm_squared()).sqrt();
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    let mut trace = Vec::new();
    let mut status = SdpStatus::MaxIterations;
    let mut iterations = 0;
    let (mut pres, mut dres, mut relgap);
    let mut best: Option<Snapshot> = None;
    let mut refine = 0;

    loop {
        let rp = &std.b - std.apply(&x, &x_lin);
        let (aty_mat, aty_lin) = std.adjoint(&y);
        let rd_mat = symmetrize(&(&std.c_mat - aty_mat - &z));
        let rd_lin = &std.c_lin - aty_lin - &z_lin;
        let pobj = trace_product(&std.c_mat, &x) + std.c_lin.dot(&x_lin);
        let dobj = std.b.dot(&y);
        let comp = trace_product(&x, &z) + x_lin.dot(&z_lin);
        let mu = comp / nu;
        pres = rp.norm() / (1.0 + b_norm);
        dres = (frob(&rd_mat).powi(2) + rd_lin.norm_squared()).sqrt() / (1.0 + c_norm);
        relgap = comp.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());
        trace.push(IterateSummary {
            primal_objective: pobj,
            dual_objective: dobj,
            primal_residual: pres,
            dual_residual: dres,
            gap: relgap,
        });

        let merit = pres.max(dres).max(relgap);
        if merit <= options.tolerance {
            // keep going a little for a sharper face, never past the best point
            if best.as_ref().is_none_or(|b: &Snapshot| merit < b.merit) {
                best = Some(Snapshot {
                    merit,
                    x: x.clone(),
                    x_lin: x_lin.clone(),
                    y: y.clone(),
                    z: z.clone(),
                    z_lin: z_lin.clone(),
                    pres,
                    dres,
                    relgap,
                });
            }
            refine += 1;
            if merit <= REFINE_TOL || refine > REFINE_STEPS {
                break;
            }
        }
        let blowup = 1e10 * (1.0 + b_norm + c_norm);
        if dobj > blowup || pobj < -blowup || x.norm() > blowup {
            status = SdpStatus::Infeasible;
            break;
        }
        if iterations >= options.max_iterations {
            break;
        }
        iterations += 1;

        let (Some(lx), Some(lz)) = (cholesky_lower(&x), cholesky_lower(&z)) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let Some(sc) = std.scaling(&lx, &lz, &x_lin, &z_lin) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let s2 = CMatrix::from_diagonal(&sc.s.map(|v| Complex64::new(v * v, 0.0)));
        let xz_lin = x_lin.component_mul(&z_lin);

        // predictor
        let aff = std.direction(&sc, &rp, &rd_mat, &rd_lin, &(-&s2), &(-&xz_lin), &z_lin);
        let ap = 1.0f64
            .min(psd_step(&lx, &aff.dx))
            .min(lin_step(&x_lin, &aff.dx_lin));
        let ad = 1.0f64
            .min(psd_step(&lz, &aff.dz))
            .min(lin_step(&z_lin, &aff.dz_lin));
        let mu_aff = (trace_product(&(&x + aff.dx.scale(ap)), &(&z + aff.dz.scale(ad)))
            + (&x_lin + aff.dx_lin.scale(ap)).dot(&(&z_lin + aff.dz_lin.scale(ad))))
            / nu;
        let sigma = if mu > 0.0 {
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        // corrector
        let dz_scaled = sc.g.adjoint() * &aff.dz * &sc.g;
        let dx_scaled = &aff.r_scaled - &dz_scaled;
        let second = symmetrize(&(&dx_scaled * &dz_scaled));
        let rc = CMatrix::identity(n, n).scale(sigma * mu) - &s2 - second;
        let rc_lin =
            DVector::from_element(l, sigma * mu) - &xz_lin - aff.dx_lin.component_mul(&aff.dz_lin);
        let dir = std.direction(&sc, &rp, &rd_mat, &rd_lin, &rc, &rc_lin, &z_lin);

        let ap_max = psd_step(&lx, &dir.dx).min(lin_step(&x_lin, &dir.dx_lin));
        let ad_max = psd_step(&lz, &dir.dz).min(lin_step(&z_lin, &dir.dz_lin));
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let ap = 1.0f64.min(gamma * ap_max);
        let ad = 1.0f64.min(gamma * ad_max);
        if !(ap > 1e-14) && !(ad > 1e-14) {
            status = SdpStatus::NumericalFailure;
            break;
        }

        x = symmetrize(&(&x + dir.dx.scale(ap)));
        x_lin += dir.dx_lin.scale(ap);
        y += dir.dy.scale(ad);
        z = symmetrize(&(&z + dir.dz.scale(ad)));
        z_lin += dir.dz_lin.scale(ad);
    }

    if let Some(b) = best {
        status = SdpStatus::Optimal;
        x = b.x;
        x_lin = b.x_lin;
        y = b.y;
        z = b.z;
        z_lin = b.z_lin;
        pres = b.pres;
        dres = b.dres;
        relgap = b.relgap;
    }

    if status == SdpStatus::Optimal {
        if let Some(p) = std.polish(&x, &x_lin, &y, &z, &z_lin) {
            x = p.x;
            x_lin = p.x_lin;
            y = p.y;
            z = p.z;
            z_lin = p.z_lin;
            let rp = &std.b - std.apply(&x, &x_lin);
            let (aty_mat, aty_lin) = std.adjoint(&y);
            let rd_mat = symmetrize(&(&std.c_mat - aty_mat - &z));
            let rd_lin = &std.c_lin - aty_lin - &z_lin;
            let pobj = trace_product(&std.c_mat, &x) + std.c_lin.dot(&x_lin);
            let dobj = std.b.dot(&y);
            let comp = trace_product(&x, &z) + x_lin.dot(&z_lin);
            pres = rp.norm() / (1.0 + b_norm);
            dres = (frob(&rd_mat).powi(2) + rd_lin.norm_squared()).sqrt() / (1.0 + c_norm);
            relgap = comp.abs().max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());
        }
    }

    let pobj = trace_product(&std.c_mat, &x) + std.c_lin.dot(&x_lin);
    Ok(SdpSolution {
        scalar_values: x_lin.iter().take(problem.num_scalars).copied().collect(),
        x,
        objective_value: sign * pobj,
        status,
        primal_residual: pres,
        dual_residual: dres,
        duality_gap: relgap,
        iterations,
        y: y.iter().copied().collect(),
        z,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::testutil::*;
    use crate::numerics::{c64, hermitian_eig, trace_re, CVector};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize, k: usize) -> CMatrix {
        let mut e = CMatrix::zeros(n, n);
        e[(k, k)] = c64(1.0, 0.0);
        e
    }

    fn kkt_ok(sol: &SdpSolution) {
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(
            sol.primal_residual <= 1e-7,
            "primal {}",
            sol.primal_residual
        );
        assert!(sol.dual_residual <= 1e-7, "dual {}", sol.dual_residual);
        assert!(sol.duality_gap <= 1e-7, "gap {}", sol.duality_gap);
        let eig = hermitian_eig(&symmetrize(&sol.x)).unwrap();
        assert!(eig.min_value() >= -1e-8 * trace_re(&sol.x));
    }

    #[test]
    fn diagonal_constraints_force_identity() {
        let mut p =
            SdpProblem::new(2, 0, Sense::Minimize).with_objective(CMatrix::identity(2, 2), vec![]);
        p.add(unit(2, 0), vec![], Relation::Eq, 1.0);
        p.add(unit(2, 1), vec![], Relation::Eq, 1.0);
        let sol = solve(&p).unwrap();
        kkt_ok(&sol);
        assert!((sol.objective_value - 2.0).abs() < 1e-7);
        assert!(max_diff(&sol.x, &CMatrix::identity(2, 2)) < 1e-6);
    }

    #[test]
    fn trace_constraint_picks_smallest_eigen_direction() {
        let c = CMatrix::from_diagonal(&CVector::from_vec(vec![c64(1.0, 0.0), c64(2.0, 0.0)]));
        let mut p = SdpProblem::new(2, 0, Sense::Minimize).with_objective(c, vec![]);
        p.add(CMatrix::identity(2, 2), vec![], Relation::Eq, 1.0);
        let sol = solve(&p).unwrap();
        kkt_ok(&sol);
        assert!((sol.objective_value - 1.0).abs() < 1e-7);
        assert!(max_diff(&sol.x, &unit(2, 0)) < 1e-6);
    }

    #[test]
    fn maximize_with_scalars_and_inequalities() {
        // max tr(diag(3,1) X) + s  s.t. tr(X) <= 2, s <= 0.5, s + tr(X) >= 0.1
        let c = CMatrix::from_diagonal(&CVector::from_vec(vec![c64(3.0, 0.0), c64(1.0, 0.0)]));
        let mut p = SdpProblem::new(2, 1, Sense::Maximize).with_objective(c, vec![1.0]);
        p.add(CMatrix::identity(2, 2), vec![0.0], Relation::Le, 2.0);
        p.add(CMatrix::zeros(2, 2), vec![1.0], Relation::Le, 0.5);
        p.add(CMatrix::identity(2, 2), vec![1.0], Relation::Ge, 0.1);
        let sol = solve(&p).unwrap();
        kkt_ok(&sol);
        assert!((sol.objective_value - 6.5).abs() < 1e-6);
        assert!((sol.scalar_values[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn detects_infeasibility() {
        let mut p =
            SdpProblem::new(2, 0, Sense::Minimize).with_objective(CMatrix::identity(2, 2), vec![]);
        p.add(CMatrix::identity(2, 2), vec![], Relation::Eq, -1.0);
        let sol = solve(&p).unwrap();
        assert_ne!(sol.status, SdpStatus::Optimal);
    }

    #[test]
    fn rejects_malformed_problems() {
        let p = SdpProblem::new(2, 0, Sense::Minimize);
        assert_eq!(solve(&p).unwrap_err(), SdpError::Unconstrained);
        let mut p = SdpProblem::new(2, 0, Sense::Minimize);
        let mut bad = CMatrix::identity(2, 2);
        bad[(0, 1)] = c64(0.0, 1.0);
        p.add(bad, vec![], Relation::Eq, 1.0);
        assert!(matches!(
            solve(&p),
            Err(SdpError::BadConstraint { index: 0, .. })
        ));
    }

    #[test]
    fn embedding_of_imaginary_matrix() {
        let c = CMatrix::from_row_slice(
            2,
            2,
            &[c64(0.0, 0.0), c64(0.0, 1.0), c64(0.0, -1.0), c64(0.0, 0.0)],
        );
        let mut p = SdpProblem::new(2, 0, Sense::Minimize).with_objective(c, vec![]);
        p.add(CMatrix::identity(2, 2), vec![], Relation::Eq, 1.0);
        let e = embed_complex(&p);
        assert_eq!(e.cone_dim, 4);
        // Re block vanishes, Im block [[0,1],[-1,0]] (halved)
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(e.objective[(i, j)], c64(0.0, 0.0));
                assert_eq!(e.objective[(i + 2, j + 2)], c64(0.0, 0.0));
            }
        }
        assert_eq!(e.objective[(2, 1)], c64(0.5, 0.0));
        assert_eq!(e.objective[(3, 0)], c64(-0.5, 0.0));
        assert_eq!(e.objective[(0, 3)], c64(-0.5, 0.0));
        assert!(e.objective.iter().all(|z| z.im == 0.0));
        // min eigenvalue of C is -1
        let sol = solve(&e).unwrap();
        kkt_ok(&sol);
        assert!((sol.objective_value + 1.0).abs() < 1e-6);
    }

    #[test]
    fn embedding_of_scalar_problem() {
        let mut p = SdpProblem::new(1, 0, Sense::Minimize)
            .with_objective(CMatrix::from_element(1, 1, c64(3.0, 0.0)), vec![]);
        p.add(
            CMatrix::from_element(1, 1, c64(2.0, 0.0)),
            vec![],
            Relation::Eq,
            4.0,
        );
        let e = embed_complex(&p);
        assert_eq!(e.objective, CMatrix::identity(2, 2).scale(1.5));
        assert_eq!(e.constraints[0].matrix, CMatrix::identity(2, 2));
        assert_eq!(e.constraints[0].rhs, 4.0);
        let a = solve(&p).unwrap();
        let b = solve(&e).unwrap();
        assert!((a.objective_value - 6.0).abs() < 1e-6);
        assert!((b.objective_value - 6.0).abs() < 1e-6);
    }

    /// Strictly primal and dual feasible by construction, data scaled to O(1).
    fn random_feasible(rng: &mut ChaCha8Rng, n: usize, m: usize) -> SdpProblem {
        let x0 = random_pd(rng, n).unscale(n as f64);
        let z0 = random_pd(rng, n);
        let mut c = z0;
        let mut p = SdpProblem::new(n, 0, Sense::Minimize);
        for _ in 0..m {
            let a = random_hermitian(rng, n);
            let a = a.unscale(a.norm());
            let y: f64 = rng.random_range(-1.0..1.0);
            c += a.scale(y);
            let b = trace_product(&a, &x0);
            p.add(a, vec![], Relation::Eq, b);
        }
        p.objective = c.unscale(c.norm());
        p
    }

    #[test]
    fn complex_and_embedded_optima_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let p = random_feasible(&mut rng, 3, 3);
            let a = solve(&p).unwrap();
            let b = solve(&embed_complex(&p)).unwrap();
            kkt_ok(&a);
            kkt_ok(&b);
            assert!((a.objective_value - b.objective_value).abs() < 1e-6);
            let back = extract_complex(&b.x);
            assert!((trace_product(&p.objective, &back) - a.objective_value).abs() < 1e-5);
        }
    }

    #[test]
    fn complementary_slackness_and_weak_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let p = random_feasible(&mut rng, 4, 3);
            let sol = solve(&p).unwrap();
            kkt_ok(&sol);
            let xz = trace_product(&sol.x, &sol.z).abs();
            assert!(
                xz <= 1e-6 * (1.0 + sol.objective_value.abs()),
                "tr(XZ) = {xz}"
            );
            for it in &sol.trace {
                if it.primal_residual <= 1e-7 && it.dual_residual <= 1e-7 {
                    let slack = 1e-9 * (1.0 + it.primal_objective.abs());
                    assert!(it.primal_objective >= it.dual_objective - slack);
                }
            }
        }
    }

    #[test]
    fn dump_lists_every_block() {
        let mut p = SdpProblem::new(2, 1, Sense::Maximize)
            .with_objective(CMatrix::identity(2, 2), vec![1.0]);
        p.add(unit(2, 1), vec![-1.0], Relation::Eq, 0.0);
        let mut buf = Vec::new();
        p.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%SdpProblem"));
        assert!(text.contains("2 1 1 maximize"));
        assert!(text.contains("% constraint 1 = 0"));
        assert!(text.contains("2 2 1.00000000000000000e0 0.00000000000000000e0"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn row_scaling_leaves_solution_unchanged(seed in any::<u64>(), s in 0.05f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_feasible(&mut rng, 3, 2);
            let mut q = p.clone();
            q.constraints[0].matrix = q.constraints[0].matrix.scale(s);
            q.constraints[0].rhs *= s;
            let a = solve(&p).unwrap();
            let b = solve(&q).unwrap();
            prop_assert!(a.is_optimal() && b.is_optimal());
            prop_assert!(max_diff(&a.x, &b.x) <= 1e-6 * (1.0 + max_abs(&a.x)));
        }
    }
}
