//! Geometric mmWave channels through the IRS, Eve uncertainty boxes and the
//! discrete sample banks the robust designs optimize against.
//!
//! Conventions:
//! * Alice has a ULA along the x axis, so her departure angle is measured
//!   from the x axis.
//! * The IRS is a UPA in the y-z plane. Azimuth is measured from the y axis
//!   and elevation from the z axis.
//! * `H_AR` is `N×M` so that `diag(h)·H_AR` is the cascade seen by a receiver
//!   with IRS-to-receiver vector `h` (length `N`).
//! * Path `l` contributes `α_l · sqrt(g_l / L)` where `g_l` is the linear
//!   path gain `10^(β_dB/10)`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{kron, serde_complex, CMatrix, CVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

/// Which end of the amplitude interval the sample bank uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleAmplitude {
    #[default]
    Min,
    Max,
}

/// How the per-Eve sample weights are refreshed in the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    /// Weights proportional to the received power at each sample.
    #[default]
    Proportional,
    /// All mass on the strongest sample.
    WorstVertex,
}

/// Physical and algorithmic parameters. Angles are in radians, powers in
/// watts, distances in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub m: usize,
    pub n_az: usize,
    pub n_el: usize,
    pub k: usize,
    pub l: usize,
    pub p_max: f64,
    pub sigma0_sq: f64,
    pub varsigma0_db: f64,
    pub c_los: f64,
    pub c_nlos: f64,
    pub lambda: f64,
    pub d0: f64,
    pub alice: [f64; 3],
    pub irs: [f64; 3],
    pub bob: [f64; 3],
    pub eve_centers: Vec<[f64; 3]>,
    pub eve_region_radius: f64,
    /// Half-width of the uniform NLoS angle perturbation.
    pub nlos_spread: f64,
    pub epsilon: f64,
    pub d_k: usize,
    pub rand_trials: usize,
    pub eval_samples: usize,
    pub inner_cap: usize,
    pub outer_cap: usize,
    pub sample_amplitude: SampleAmplitude,
    pub weight_rule: WeightRule,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let lambda = 299_792_458.0 / 28e9;
        Self {
            m: 16,
            n_az: 4,
            n_el: 4,
            k: 2,
            l: 4,
            p_max: 1.0,
            sigma0_sq: 1e-14,
            varsigma0_db: -61.4,
            c_los: 2.0,
            c_nlos: 5.0,
            lambda,
            d0: lambda / 2.0,
            alice: [10.0, 0.0, 20.0],
            irs: [0.0, 80.0, 20.0],
            bob: [20.0, 80.0, 0.0],
            eve_centers: vec![[10.0, 70.0, 0.0], [10.0, 90.0, 0.0]],
            eve_region_radius: 2.0,
            nlos_spread: 10f64.to_radians(),
            epsilon: 1e-3,
            d_k: 16,
            rand_trials: 100,
            eval_samples: 200,
            inner_cap: 50,
            outer_cap: 20,
            sample_amplitude: SampleAmplitude::Min,
            weight_rule: WeightRule::Proportional,
            seed: 1,
        }
    }
}

impl SystemConfig {
    /// IRS element count.
    pub fn n(&self) -> usize {
        self.n_az * self.n_el
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(ChannelError::InvalidConfig(msg.to_string()));
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if self.n() == 0 {
            return bad("n_az * n_el must be at least 1");
        }
        if self.l == 0 {
            return bad("l must be at least 1");
        }
        if !(self.p_max > 0.0) {
            return bad("p_max must be positive");
        }
        if !(self.sigma0_sq > 0.0) {
            return bad("sigma0_sq must be positive");
        }
        if self.d_k == 0 {
            return bad("d_k must be at least 1");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.lambda > 0.0) || !(self.d0 > 0.0) {
            return bad("lambda and d0 must be positive");
        }
        if self.d0 > self.lambda / 2.0 * (1.0 + 1e-12) {
            return bad("d0 must not exceed lambda / 2");
        }
        if self.eve_centers.len() != self.k {
            return Err(ChannelError::InvalidConfig(format!(
                "k = {} but {} eve centers given",
                self.k,
                self.eve_centers.len()
            )));
        }
        if self.eve_region_radius < 0.0 || self.nlos_spread < 0.0 {
            return bad("eve_region_radius and nlos_spread must be nonnegative");
        }
        if self.rand_trials == 0 || self.eval_samples == 0 {
            return bad("rand_trials and eval_samples must be at least 1");
        }
        if self.inner_cap == 0 || self.outer_cap == 0 {
            return bad("iteration caps must be at least 1");
        }
        Ok(())
    }
}

/// One propagation path. Angles a given link does not use are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    pub alpha: Complex64,
    pub aod_alice: f64,
    pub aoa_irs_az: f64,
    pub aoa_irs_el: f64,
    pub aod_irs_az: f64,
    pub aod_irs_el: f64,
    /// `|α| sqrt(g / L)`.
    pub amplitude: f64,
    pub is_los: bool,
}

/// One draw of every channel in the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    #[serde(with = "serde_complex::matrix")]
    pub h_ar: CMatrix,
    #[serde(with = "serde_complex::vector")]
    pub h_rb: CVector,
    #[serde(with = "serde_complex::vectors")]
    pub h_re: Vec<CVector>,
    #[serde(with = "serde_complex::matrix")]
    pub h_ab: CMatrix,
    #[serde(with = "serde_complex::matrices")]
    pub g_true: Vec<CMatrix>,
    pub paths_ar: Vec<PathComponent>,
    pub paths_rb: Vec<PathComponent>,
    pub paths_re: Vec<Vec<PathComponent>>,
    pub eve_positions: Vec<[f64; 3]>,
}

impl ChannelRealization {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("channel serialization cannot fail")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Closed interval `[lo, hi]`. Angle intervals are kept unwrapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Self { lo, hi }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Point at fraction `u ∈ [0, 1]` of the interval.
    pub fn at(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }

    /// Membership for angles, modulo 2π.
    pub fn contains_angle(&self, angle: f64) -> bool {
        if self.width() >= TAU {
            return true;
        }
        let offset = (angle - self.lo).rem_euclid(TAU);
        offset <= self.width() + 1e-12 || offset >= TAU - 1e-12
    }
}

/// Bounds on one Eve path. The phase of `α` is kept at its nominal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBounds {
    pub amplitude: Interval,
    pub azimuth: Interval,
    pub elevation: Interval,
    pub phase: f64,
    pub nominal_amplitude: f64,
}

/// Per Eve, per path bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySet {
    pub eves: Vec<Vec<PathBounds>>,
}

/// Discrete samples of each Eve's cascade plus their simplex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBank {
    pub samples: Vec<Vec<CMatrix>>,
    pub weights: Vec<Vec<f64>>,
}

impl SampleBank {
    /// One sample per Eve with unit weight.
    pub fn single(cascades: &[CMatrix]) -> Self {
        Self {
            samples: cascades.iter().map(|g| vec![g.clone()]).collect(),
            weights: vec![vec![1.0]; cascades.len()],
        }
    }

    pub fn eves(&self) -> usize {
        self.samples.len()
    }

    pub fn with_weights(&self, weights: Vec<Vec<f64>>) -> Self {
        Self {
            samples: self.samples.clone(),
            weights,
        }
    }
}

/// ULA response `exp(−j 2π/λ · m · d0 · cos(angle))`, `m = 0..count`.
pub fn steering_vector(count: usize, angle: f64, lambda: f64, d0: f64) -> CVector {
    let step = -TAU / lambda * d0 * angle.cos();
    CVector::from_fn(count, |m, _| Complex64::from_polar(1.0, step * m as f64))
}

/// UPA response `a(n_az, θ) ⊗ a(n_el, φ)`.
pub fn upa_steering(
    n_az: usize,
    n_el: usize,
    theta: f64,
    phi: f64,
    lambda: f64,
    d0: f64,
) -> CVector {
    let a = steering_vector(n_az, theta, lambda, d0);
    let b = steering_vector(n_el, phi, lambda, d0);
    let k = kron(
        &CMatrix::from_column_slice(n_az, 1, a.as_slice()),
        &CMatrix::from_column_slice(n_el, 1, b.as_slice()),
    );
    CVector::from_column_slice(k.as_slice())
}

/// `ς0 − 10 c log10(d)` in dB.
pub fn path_loss_db(exponent: f64, distance: f64, varsigma0_db: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(ChannelError::NonPositiveDistance(distance));
    }
    Ok(varsigma0_db - 10.0 * exponent * distance.log10())
}

/// `10^(path_loss_db / 10)`.
pub fn linear_gain(exponent: f64, distance: f64, varsigma0_db: f64) -> Result<f64> {
    Ok(10f64.powf(path_loss_db(exponent, distance, varsigma0_db)? / 10.0))
}

/// `diag(h) · H`.
pub fn cascade(h: &CVector, h_ar: &CMatrix) -> CMatrix {
    let mut g = h_ar.clone();
    for (i, mut row) in g.row_iter_mut().enumerate() {
        row *= h[i];
    }
    g
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn direction_cosine(v: [f64; 3], axis: usize) -> f64 {
    (v[axis] / norm3(v)).clamp(-1.0, 1.0).acos()
}

fn wrap(angle: f64) -> f64 {
    let w = angle.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn perturb(angle: f64, spread: f64, rng: &mut impl Rng) -> f64 {
    if spread == 0.0 {
        return angle;
    }
    wrap(angle + rng.random_range(-spread..=spread))
}

/// IRS-to-receiver row built from its paths: `Σ ξ e^{j∠α} a_R(θ, φ)`.
pub fn receiver_vector(paths: &[PathComponent], config: &SystemConfig) -> CVector {
    let mut h = CVector::zeros(config.n());
    for p in paths {
        let coeff = Complex64::from_polar(p.amplitude, p.alpha.arg());
        h += upa_steering(
            config.n_az,
            config.n_el,
            p.aod_irs_az,
            p.aod_irs_el,
            config.lambda,
            config.d0,
        ) * coeff;
    }
    h
}

fn draw_receiver_paths(
    config: &SystemConfig,
    position: [f64; 3],
    rng: &mut impl Rng,
) -> Result<Vec<PathComponent>> {
    let v = sub(position, config.irs);
    let d = norm3(v);
    let (theta, phi) = (direction_cosine(v, 1), direction_cosine(v, 2));
    let mut paths = Vec::with_capacity(config.l);
    for l in 0..config.l {
        let los = l == 0;
        let c = if los { config.c_los } else { config.c_nlos };
        let g = linear_gain(c, d, config.varsigma0_db)?;
        let alpha = complex_gaussian(rng);
        let (az, el) = if los {
            (theta, phi)
        } else {
            (
                perturb(theta, config.nlos_spread, rng),
                perturb(phi, config.nlos_spread, rng),
            )
        };
        paths.push(PathComponent {
            alpha,
            aod_alice: 0.0,
            aoa_irs_az: 0.0,
            aoa_irs_el: 0.0,
            aod_irs_az: az,
            aod_irs_el: el,
            amplitude: alpha.norm() * (g / config.l as f64).sqrt(),
            is_los: los,
        });
    }
    Ok(paths)
}

fn draw_incident_paths(config: &SystemConfig, rng: &mut impl Rng) -> Result<Vec<PathComponent>> {
    let out = sub(config.irs, config.alice);
    let back = sub(config.alice, config.irs);
    let d = norm3(out);
    let aod = direction_cosine(out, 0);
    let (theta, phi) = (direction_cosine(back, 1), direction_cosine(back, 2));
    let mut paths = Vec::with_capacity(config.l);
    for l in 0..config.l {
        let los = l == 0;
        let c = if los { config.c_los } else { config.c_nlos };
        let g = linear_gain(c, d, config.varsigma0_db)?;
        let alpha = complex_gaussian(rng);
        let (a, az, el) = if los {
            (aod, theta, phi)
        } else {
            (
                perturb(aod, config.nlos_spread, rng),
                perturb(theta, config.nlos_spread, rng),
                perturb(phi, config.nlos_spread, rng),
            )
        };
        paths.push(PathComponent {
            alpha,
            aod_alice: a,
            aoa_irs_az: az,
            aoa_irs_el: el,
            aod_irs_az: 0.0,
            aod_irs_el: 0.0,
            amplitude: alpha.norm() * (g / config.l as f64).sqrt(),
            is_los: los,
        });
    }
    Ok(paths)
}

/// `H_AR = Σ α sqrt(g/L) a_R(θ, φ) a_A(φ_A)^T`, shape `N×M`.
pub fn incident_matrix(paths: &[PathComponent], config: &SystemConfig) -> CMatrix {
    let mut h = CMatrix::zeros(config.n(), config.m);
    for p in paths {
        let a_r = upa_steering(
            config.n_az,
            config.n_el,
            p.aoa_irs_az,
            p.aoa_irs_el,
            config.lambda,
            config.d0,
        );
        let a_a = steering_vector(config.m, p.aod_alice, config.lambda, config.d0);
        let coeff = Complex64::from_polar(p.amplitude, p.alpha.arg());
        h += (a_r * a_a.transpose()) * coeff;
    }
    h
}

fn uniform_in_disk(center: [f64; 3], radius: f64, rng: &mut impl Rng) -> [f64; 3] {
    let r = radius * rng.random::<f64>().sqrt();
    let t = TAU * rng.random::<f64>();
    [center[0] + r * t.cos(), center[1] + r * t.sin(), center[2]]
}

/// Draws Eve positions, then every link's paths, and caches the cascades.
pub fn draw_channel(config: &SystemConfig, rng: &mut impl Rng) -> Result<ChannelRealization> {
    config.validate()?;
    let eve_positions: Vec<[f64; 3]> = config
        .eve_centers
        .iter()
        .map(|c| uniform_in_disk(*c, config.eve_region_radius, rng))
        .collect();
    let paths_ar = draw_incident_paths(config, rng)?;
    let paths_rb = draw_receiver_paths(config, config.bob, rng)?;
    let paths_re = eve_positions
        .iter()
        .map(|p| draw_receiver_paths(config, *p, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(
        config,
        paths_ar,
        paths_rb,
        paths_re,
        eve_positions,
    ))
}

/// Builds a realization from explicit paths.
pub fn assemble(
    config: &SystemConfig,
    paths_ar: Vec<PathComponent>,
    paths_rb: Vec<PathComponent>,
    paths_re: Vec<Vec<PathComponent>>,
    eve_positions: Vec<[f64; 3]>,
) -> ChannelRealization {
    let h_ar = incident_matrix(&paths_ar, config);
    let h_rb = receiver_vector(&paths_rb, config);
    let h_re: Vec<CVector> = paths_re
        .iter()
        .map(|p| receiver_vector(p, config))
        .collect();
    let h_ab = cascade(&h_rb, &h_ar);
    let g_true = h_re.iter().map(|h| cascade(h, &h_ar)).collect();
    ChannelRealization {
        h_ar,
        h_rb,
        h_re,
        h_ab,
        g_true,
        paths_ar,
        paths_rb,
        paths_re,
        eve_positions,
    }
}

/// Boxes of half-width `delta_angle` around each Eve path's angles and
/// `±delta_amp_db / 2` dB around its amplitude.
pub fn build_uncertainty(
    realization: &ChannelRealization,
    delta_angle: f64,
    delta_amp_db: f64,
) -> UncertaintySet {
    let delta_angle = delta_angle.max(0.0);
    let factor = 10f64.powf(delta_amp_db.abs() / 20.0);
    let eves = realization
        .paths_re
        .iter()
        .map(|paths| {
            paths
                .iter()
                .map(|p| PathBounds {
                    amplitude: Interval::new(p.amplitude / factor, p.amplitude * factor),
                    azimuth: Interval::new(p.aod_irs_az - delta_angle, p.aod_irs_az + delta_angle),
                    elevation: Interval::new(
                        p.aod_irs_el - delta_angle,
                        p.aod_irs_el + delta_angle,
                    ),
                    phase: p.alpha.arg(),
                    nominal_amplitude: p.amplitude,
                })
                .collect()
        })
        .collect();
    UncertaintySet { eves }
}

/// Angles and amplitude of one Eve path instantiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathDraw {
    pub azimuth: f64,
    pub elevation: f64,
    pub amplitude: f64,
}

/// Uniform angles in the box (reduced mod 2π) at the requested amplitude end.
pub fn draw_eve_paths(
    bounds: &[PathBounds],
    amplitude: SampleAmplitude,
    rng: &mut impl Rng,
) -> Vec<PathDraw> {
    bounds
        .iter()
        .map(|b| {
            let az = wrap(b.azimuth.at(rng.random::<f64>()));
            let el = wrap(b.elevation.at(rng.random::<f64>()));
            PathDraw {
                azimuth: az,
                elevation: el,
                amplitude: match amplitude {
                    SampleAmplitude::Min => b.amplitude.lo,
                    SampleAmplitude::Max => b.amplitude.hi,
                },
            }
        })
        .collect()
}

/// Eve's IRS-to-receiver vector for one instantiation of her paths.
pub fn eve_vector(bounds: &[PathBounds], draws: &[PathDraw], config: &SystemConfig) -> CVector {
    let mut h = CVector::zeros(config.n());
    for (b, d) in bounds.iter().zip(draws) {
        let coeff = Complex64::from_polar(d.amplitude, b.phase);
        h += upa_steering(
            config.n_az,
            config.n_el,
            d.azimuth,
            d.elevation,
            config.lambda,
            config.d0,
        ) * coeff;
    }
    h
}

/// Eve's cascade at interval midpoints and nominal amplitudes.
pub fn midpoint_cascades(
    uncertainty: &UncertaintySet,
    h_ar: &CMatrix,
    config: &SystemConfig,
) -> Vec<CMatrix> {
    uncertainty
        .eves
        .iter()
        .map(|bounds| {
            let draws: Vec<PathDraw> = bounds
                .iter()
                .map(|b| PathDraw {
                    azimuth: wrap(b.azimuth.mid()),
                    elevation: wrap(b.elevation.mid()),
                    amplitude: b.nominal_amplitude,
                })
                .collect();
            cascade(&eve_vector(bounds, &draws, config), h_ar)
        })
        .collect()
}

/// `D_K` cascades per Eve with angles drawn uniformly from the box and the
/// amplitude at the configured interval end; weights start uniform.
pub fn build_sample_bank(
    uncertainty: &UncertaintySet,
    h_ar: &CMatrix,
    config: &SystemConfig,
    rng: &mut impl Rng,
) -> SampleBank {
    let d_k = config.d_k.max(1);
    let samples = uncertainty
        .eves
        .iter()
        .map(|bounds| {
            (0..d_k)
                .map(|_| {
                    let draws = draw_eve_paths(bounds, config.sample_amplitude, rng);
                    cascade(&eve_vector(bounds, &draws, config), h_ar)
                })
                .collect()
        })
        .collect();
    SampleBank {
        samples,
        weights: vec![vec![1.0 / d_k as f64; d_k]; uncertainty.eves.len()],
    }
}

/// Degrees to radians, for callers working in degrees.
pub fn deg(x: f64) -> f64 {
    x * PI / 180.0
}
