//! Brute-force references for tests, acceptance checks and `verify`.
//!
//! Nothing in here is used by the beamforming algorithms. The objective
//! functions are re-derived locally from the rate formulas rather than shared
//! with `rsbf`, so a mistake on one side does not silently cancel.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::numerics::{eigh, trace_product, CMatrix, CVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(
        "enumeration of {levels}^{n} phase patterns exceeds the guard (N ≤ 6, levels^N ≤ 1e8)"
    )]
    TooLarge { n: usize, levels: usize },
}

/// Which eavesdropper aggregate the fractional objective uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    /// Sum over eavesdroppers.
    Colluding,
    /// Worst single eavesdropper.
    NonColluding,
}

/// A small synthetic instance with unit noise: Bob's cascade has unit-variance
/// entries and each Eve sample is scaled by `eve_gain`.
#[derive(Debug, Clone)]
pub struct ToyInstance {
    pub h_ab: CMatrix,
    pub eves: Vec<Vec<CMatrix>>,
    pub weights: Vec<Vec<f64>>,
}

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> CMatrix {
    let s = scale * std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(
            rng.sample::<f64, _>(StandardNormal) * s,
            rng.sample::<f64, _>(StandardNormal) * s,
        )
    })
}

/// `N x M` cascades with `k` Eves of `d` samples each, uniform weights.
pub fn toy_instance(
    m: usize,
    n: usize,
    k: usize,
    d: usize,
    eve_gain: f64,
    rng: &mut impl Rng,
) -> ToyInstance {
    let h_ab = gaussian_matrix(n, m, 1.0, rng);
    let eves = (0..k)
        .map(|_| {
            (0..d)
                .map(|_| gaussian_matrix(n, m, eve_gain, rng))
                .collect()
        })
        .collect();
    ToyInstance {
        h_ab,
        eves,
        weights: vec![vec![1.0 / d as f64; d]; k],
    }
}

/// Secrecy ratio `(|q H w|² + σ²) / (Σ_k or max_k Σ_t μ |q G w|² + σ²)`
/// evaluated with plain loops.
pub fn fractional_objective(
    q: &[Complex64],
    w: &[Complex64],
    h_ab: &CMatrix,
    eves: &[Vec<CMatrix>],
    weights: &[Vec<f64>],
    sigma0_sq: f64,
    mode: Aggregate,
) -> f64 {
    let gain = |h: &CMatrix| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for n in 0..h.nrows() {
            let mut row = Complex64::new(0.0, 0.0);
            for m in 0..h.ncols() {
                row += h[(n, m)] * w[m];
            }
            acc += q[n] * row;
        }
        acc.norm_sqr()
    };
    let bob = gain(h_ab) + sigma0_sq;
    let per_eve: Vec<f64> = eves
        .iter()
        .zip(weights)
        .map(|(samples, mu)| samples.iter().zip(mu).map(|(g, m)| m * gain(g)).sum())
        .collect();
    let leak = match mode {
        Aggregate::Colluding => per_eve.iter().sum(),
        Aggregate::NonColluding => per_eve.iter().copied().fold(0.0, f64::max),
    };
    bob / (leak + sigma0_sq)
}

fn phase_pattern(mut index: usize, n: usize, levels: usize) -> Vec<Complex64> {
    let mut q = Vec::with_capacity(n);
    for _ in 0..n {
        let m = index % levels;
        index /= levels;
        q.push(Complex64::from_polar(
            1.0,
            std::f64::consts::TAU * m as f64 / levels as f64,
        ));
    }
    q
}

/// Exhaustive search over quantized phase vectors `q_n ∈ {e^{j2πm/levels}}`.
///
/// Returns the best pattern and its fractional objective. Ties, up to a
/// relative 1e-12, keep the lowest enumeration index.
pub fn grid_search_q(
    w: &CVector,
    h_ab: &CMatrix,
    eves: &[Vec<CMatrix>],
    weights: &[Vec<f64>],
    sigma0_sq: f64,
    levels: usize,
    mode: Aggregate,
) -> Result<(CVector, f64), OracleError> {
    let n = h_ab.nrows();
    let total = (levels as f64).powi(n as i32);
    if n > 6 || total > 1e8 || levels == 0 {
        return Err(OracleError::TooLarge { n, levels });
    }
    let total = levels.pow(n as u32);
    let w = w.as_slice();
    let value = |idx: usize| {
        fractional_objective(
            &phase_pattern(idx, n, levels),
            w,
            h_ab,
            eves,
            weights,
            sigma0_sq,
            mode,
        )
    };
    let best_val = (0..total)
        .into_par_iter()
        .map(value)
        .reduce(|| f64::NEG_INFINITY, f64::max);
    // values equal up to round-off count as ties
    let tie = best_val - 1e-12 * best_val.abs();
    let best_idx = (0..total)
        .into_par_iter()
        .filter(|&idx| value(idx) >= tie)
        .min()
        .unwrap_or(0);
    Ok((
        CVector::from_vec(phase_pattern(best_idx, n, levels)),
        value(best_idx),
    ))
}

/// Largest objective drop seen when the elements of `q` are rotated by half a
/// quantization step, one at a time and all together.
pub fn quantization_slack(
    q: &CVector,
    w: &CVector,
    h_ab: &CMatrix,
    eves: &[Vec<CMatrix>],
    weights: &[Vec<f64>],
    sigma0_sq: f64,
    levels: usize,
    mode: Aggregate,
) -> f64 {
    let half = Complex64::from_polar(1.0, std::f64::consts::PI / levels as f64);
    let eval = |q: &[Complex64]| {
        fractional_objective(q, w.as_slice(), h_ab, eves, weights, sigma0_sq, mode)
    };
    let base = eval(q.as_slice());
    let mut worst = 0.0f64;
    let n = q.len();
    for k in 0..n {
        for rot in [half, half.conj()] {
            let mut p = q.as_slice().to_vec();
            p[k] *= rot;
            worst = worst.max(base - eval(&p));
        }
    }
    for rot in [half, half.conj()] {
        let p: Vec<Complex64> = q
            .iter()
            .enumerate()
            .map(|(k, z)| if k % 2 == 0 { z * rot } else { z * rot.conj() })
            .collect();
        worst = worst.max(base - eval(&p));
    }
    worst
}

/// Best of `draws` transmit vectors drawn uniformly on the sphere of radius
/// `sqrt(p_max)`. A lower bound on the true optimum.
pub fn random_search_w(
    q: &CVector,
    h_ab: &CMatrix,
    eves: &[Vec<CMatrix>],
    weights: &[Vec<f64>],
    sigma0_sq: f64,
    p_max: f64,
    draws: usize,
    mode: Aggregate,
    rng: &mut impl Rng,
) -> (CVector, f64) {
    let m = h_ab.ncols();
    let mut best = (CVector::zeros(m), f64::NEG_INFINITY);
    for _ in 0..draws {
        let w = random_sphere(m, p_max, rng);
        let v = fractional_objective(
            q.as_slice(),
            w.as_slice(),
            h_ab,
            eves,
            weights,
            sigma0_sq,
            mode,
        );
        if v > best.1 {
            best = (w, v);
        }
    }
    best
}

fn random_sphere(m: usize, p_max: f64, rng: &mut impl Rng) -> CVector {
    let mut w = CVector::from_fn(m, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let norm = w.norm();
    w.scale_mut(p_max.sqrt() / norm);
    w
}

/// Joint reference for tiny instances: every quantized `q` crossed with a
/// shared set of `draws` random transmit vectors.
pub fn joint_brute_force(
    h_ab: &CMatrix,
    eves: &[Vec<CMatrix>],
    weights: &[Vec<f64>],
    sigma0_sq: f64,
    p_max: f64,
    levels: usize,
    draws: usize,
    mode: Aggregate,
    rng: &mut impl Rng,
) -> Result<(CVector, CVector, f64), OracleError> {
    let (n, m) = h_ab.shape();
    let total = (levels as f64).powi(n as i32);
    if n > 6 || total > 1e8 || levels == 0 {
        return Err(OracleError::TooLarge { n, levels });
    }
    let candidates: Vec<CVector> = (0..draws).map(|_| random_sphere(m, p_max, rng)).collect();
    let total = levels.pow(n as u32);
    let best = (0..total)
        .into_par_iter()
        .map(|idx| {
            let q = phase_pattern(idx, n, levels);
            let mut local = (usize::MAX, f64::NEG_INFINITY);
            for (k, w) in candidates.iter().enumerate() {
                let v =
                    fractional_objective(&q, w.as_slice(), h_ab, eves, weights, sigma0_sq, mode);
                if v > local.1 {
                    local = (k, v);
                }
            }
            (idx, local.0, local.1)
        })
        .reduce(
            || (usize::MAX, usize::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.2 > a.2 || (b.2 == a.2 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    Ok((
        candidates[best.1].clone(),
        CVector::from_vec(phase_pattern(best.0, n, levels)),
        best.2,
    ))
}

/// First-order reference for `min tr(C X) s.t. tr(A_i X) = b_i, X ⪰ 0`:
/// the alternating-direction augmented Lagrangian method on the dual.
/// Returns `(X, objective)`.
pub fn first_order_sdp(
    objective: &CMatrix,
    constraints: &[(CMatrix, f64)],
    iterations: usize,
    tolerance: f64,
) -> (CMatrix, f64) {
    let n = objective.nrows();
    let m = constraints.len();
    let apply = |x: &CMatrix| -> DVector<f64> {
        DVector::from_iterator(m, constraints.iter().map(|(a, _)| trace_product(a, x)))
    };
    let adjoint = |y: &DVector<f64>| -> CMatrix {
        let mut out = CMatrix::zeros(n, n);
        for (i, (a, _)) in constraints.iter().enumerate() {
            out += a.scale(y[i]);
        }
        out
    };
    let b = DVector::from_iterator(m, constraints.iter().map(|(_, b)| *b));
    let gram = DMatrix::from_fn(m, m, |i, j| {
        trace_product(&constraints[i].0, &constraints[j].0)
    });
    let gram = gram
        .cholesky()
        .expect("constraint matrices must be linearly independent");

    let mut x = CMatrix::zeros(n, n);
    let mut s = CMatrix::zeros(n, n);
    let mut mu = 1.0;
    for it in 0..iterations {
        let rhs = -(apply(&x).scale(mu) - &b.scale(mu) + apply(&(&s - objective)));
        let y = gram.solve(&rhs);
        let v = objective - adjoint(&y) - x.scale(mu);
        let eig = eigh(&v);
        s = eig.reconstruct_with(|l| l.max(0.0));
        let x_next = (&s - &v).unscale(mu);
        let primal = (apply(&x_next) - &b).norm() / (1.0 + b.norm());
        let dual = (objective - adjoint(&y) - &s).norm() / (1.0 + objective.norm());
        x = x_next;
        if it % 50 == 49 {
            // keep the two residuals balanced
            if primal > 10.0 * dual {
                mu = (mu * 2.0).min(1e6);
            } else if dual > 10.0 * primal {
                mu = (mu * 0.5).max(1e-6);
            }
        }
        if primal.max(dual) < tolerance {
            break;
        }
    }
    let value = trace_product(objective, &x);
    (x, value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::c64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_element_grid_returns_phase_zero() {
        let inst = toy_instance(2, 1, 1, 2, 0.5, &mut rng(1));
        let w = CVector::from_element(2, c64(0.5f64.sqrt(), 0.0));
        let (q, v) = grid_search_q(
            &w,
            &inst.h_ab,
            &inst.eves,
            &inst.weights,
            1.0,
            8,
            Aggregate::Colluding,
        )
        .unwrap();
        assert_eq!(q[0], c64(1.0, 0.0));
        let rotated = [Complex64::from_polar(1.0, 1.3)];
        let other = fractional_objective(
            &rotated,
            w.as_slice(),
            &inst.h_ab,
            &inst.eves,
            &inst.weights,
            1.0,
            Aggregate::Colluding,
        );
        assert!((v - other).abs() < 1e-12 * v);
    }

    #[test]
    fn two_element_grid_matches_alignment() {
        let inst = toy_instance(2, 2, 0, 1, 0.0, &mut rng(2));
        let w = CVector::from_element(2, c64(0.5f64.sqrt(), 0.0));
        let a = &inst.h_ab * &w;
        let aligned = 1.0 + (a[0].norm() + a[1].norm()).powi(2);
        let (_, v) = grid_search_q(&w, &inst.h_ab, &[], &[], 1.0, 4, Aggregate::Colluding).unwrap();
        // a relative phase error of at most π/4 costs at most a factor cos²(π/8)
        let floor = 1.0
            + (a[0].norm().powi(2)
                + a[1].norm().powi(2)
                + 2.0 * a[0].norm() * a[1].norm() * (std::f64::consts::PI / 4.0).cos());
        assert!(
            v <= aligned + 1e-12 && v >= floor - 1e-12,
            "{floor} <= {v} <= {aligned}"
        );
    }

    #[test]
    fn grid_is_invariant_to_global_rotation() {
        let inst = toy_instance(2, 3, 2, 2, 0.7, &mut rng(3));
        let w = CVector::from_element(2, c64(0.5f64.sqrt(), 0.0));
        let rot = Complex64::from_polar(1.0, 0.9);
        let h_rot = inst.h_ab.map(|z| z * rot);
        for mode in [Aggregate::Colluding, Aggregate::NonColluding] {
            let (_, a) =
                grid_search_q(&w, &inst.h_ab, &inst.eves, &inst.weights, 1.0, 8, mode).unwrap();
            let (_, b) =
                grid_search_q(&w, &h_rot, &inst.eves, &inst.weights, 1.0, 8, mode).unwrap();
            assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn enumeration_guard() {
        let inst = toy_instance(1, 7, 0, 1, 0.0, &mut rng(4));
        let w = CVector::from_element(1, c64(1.0, 0.0));
        assert_eq!(
            grid_search_q(&w, &inst.h_ab, &[], &[], 1.0, 2, Aggregate::Colluding).unwrap_err(),
            OracleError::TooLarge { n: 7, levels: 2 }
        );
        let inst = toy_instance(1, 6, 0, 1, 0.0, &mut rng(4));
        assert!(grid_search_q(&w, &inst.h_ab, &[], &[], 1.0, 32, Aggregate::Colluding).is_err());
    }

    #[test]
    fn random_search_is_reproducible_and_nested() {
        let inst = toy_instance(3, 2, 1, 2, 0.6, &mut rng(5));
        let q = CVector::from_element(2, c64(1.0, 0.0));
        let run = |draws| {
            random_search_w(
                &q,
                &inst.h_ab,
                &inst.eves,
                &inst.weights,
                1.0,
                2.0,
                draws,
                Aggregate::Colluding,
                &mut rng(6),
            )
        };
        assert_eq!(run(1), run(1));
        let mut prev = f64::NEG_INFINITY;
        for draws in [1, 2, 4, 8, 16, 32] {
            let (w, v) = run(draws);
            assert!(v >= prev);
            assert!((w.norm_squared() - 2.0).abs() < 1e-12);
            prev = v;
        }
    }

    #[test]
    fn joint_search_nests_in_levels() {
        let inst = toy_instance(2, 2, 1, 2, 0.6, &mut rng(7));
        let coarse = joint_brute_force(
            &inst.h_ab,
            &inst.eves,
            &inst.weights,
            1.0,
            1.0,
            4,
            200,
            Aggregate::Colluding,
            &mut rng(8),
        )
        .unwrap();
        let fine = joint_brute_force(
            &inst.h_ab,
            &inst.eves,
            &inst.weights,
            1.0,
            1.0,
            8,
            200,
            Aggregate::Colluding,
            &mut rng(8),
        )
        .unwrap();
        assert!(fine.2 >= coarse.2);
        let again = joint_brute_force(
            &inst.h_ab,
            &inst.eves,
            &inst.weights,
            1.0,
            1.0,
            4,
            200,
            Aggregate::Colluding,
            &mut rng(8),
        )
        .unwrap();
        assert_eq!(coarse, again);
    }

    #[test]
    fn slack_is_zero_for_a_constant_objective() {
        let inst = toy_instance(1, 1, 0, 1, 0.0, &mut rng(9));
        let q = CVector::from_element(1, c64(1.0, 0.0));
        let w = CVector::from_element(1, c64(1.0, 0.0));
        let s = quantization_slack(&q, &w, &inst.h_ab, &[], &[], 1.0, 16, Aggregate::Colluding);
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn first_order_finds_smallest_eigenvalue() {
        // min tr(C X) s.t. tr X = 1 has value λ_min(C)
        let mut r = rng(10);
        let a = gaussian_matrix(3, 3, 1.0, &mut r);
        let c = (&a + a.adjoint()).scale(0.5);
        let (x, v) = first_order_sdp(&c, &[(CMatrix::identity(3, 3), 1.0)], 20_000, 1e-10);
        let lmin = eigh(&c).min_value();
        assert!((v - lmin).abs() < 1e-6, "{v} vs {lmin}");
        assert!((crate::numerics::trace_re(&x) - 1.0).abs() < 1e-6);
    }
}
