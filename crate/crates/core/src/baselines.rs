//! Comparison schemes: matched filter with gain-maximizing phases, perfect
//! Eve CSI, and a design at the midpoint of the uncertainty box.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    midpoint_cascades, ChannelRealization, SampleBank, SystemConfig, UncertaintySet,
};
use crate::numerics::CVector;
use crate::rsbf::{self, gain, max_gain_phases, BeamformingSolution, Mode, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Robust,
    Perfect,
    Average,
    Mrt,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Robust,
        Scheme::Perfect,
        Scheme::Average,
        Scheme::Mrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Robust => "robust",
            Scheme::Perfect => "perfect",
            Scheme::Average => "average",
            Scheme::Mrt => "mrt",
        }
    }
}

/// A scheme together with the eavesdropping model it designs for and is
/// judged against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemeChoice {
    pub scheme: Scheme,
    pub mode: Mode,
}

impl SchemeChoice {
    pub fn new(scheme: Scheme, mode: Mode) -> Self {
        Self { scheme, mode }
    }

    /// Parses `robust`, `robust-colluding`, `mrt-noncolluding`, ...; a bare
    /// scheme name takes `default_mode`.
    pub fn parse(text: &str, default_mode: Mode) -> Result<Self, String> {
        let text = text.trim().to_ascii_lowercase();
        let (base, mode) = if let Some(b) = text.strip_suffix("-noncolluding") {
            (b, Mode::NonColluding)
        } else if let Some(b) = text.strip_suffix("-colluding") {
            (b, Mode::Colluding)
        } else {
            (text.as_str(), default_mode)
        };
        let scheme = match base {
            "robust" => Scheme::Robust,
            "perfect" => Scheme::Perfect,
            "average" => Scheme::Average,
            "mrt" => Scheme::Mrt,
            other => {
                return Err(format!(
                    "unknown scheme `{other}` (expected robust, perfect, average or mrt, optionally suffixed -colluding or -noncolluding)"
                ))
            }
        };
        Ok(Self { scheme, mode })
    }
}

impl fmt::Display for SchemeChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = match self.mode {
            Mode::Colluding => "colluding",
            Mode::NonColluding => "noncolluding",
        };
        write!(f, "{}-{suffix}", self.scheme.name())
    }
}

impl FromStr for SchemeChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s, Mode::Colluding)
    }
}

/// Phases maximizing `‖q H_AB‖²` and the matched filter on them. Eves are
/// ignored.
pub fn mrt_scheme(
    channel: &ChannelRealization,
    config: &SystemConfig,
    mode: Mode,
    rng: &mut impl Rng,
) -> BeamformingSolution {
    let h = &channel.h_ab;
    let q = max_gain_phases(h, config.rand_trials, rng);
    let b = (h.transpose() * &q).map(|z| z.conj());
    let norm = b.norm();
    let w: CVector = if norm > 0.0 {
        b.scale(config.p_max.sqrt() / norm)
    } else {
        rsbf::initial_w(h, config.p_max)
    };
    let objective = (gain(&q, h, &w) / config.sigma0_sq).ln_1p() / std::f64::consts::LN_2;
    BeamformingSolution {
        w,
        q,
        objective,
        inner_history: vec![vec![objective]],
        outer_history: vec![objective],
        status: SolveStatus::Converged,
        iterations: 1,
        sdp_failures: 0,
        steps: Vec::new(),
        mode,
        weights: Vec::new(),
    }
}

/// The robust solver fed the true Eve cascades as a one-sample bank.
pub fn perfect_csi_scheme(
    channel: &ChannelRealization,
    config: &SystemConfig,
    mode: Mode,
    rng: &mut impl Rng,
) -> rsbf::Result<BeamformingSolution> {
    let bank = SampleBank::single(&channel.g_true);
    rsbf::solve_with_bank(&channel.h_ab, &bank, config, mode, rng)
}

/// The robust solver fed one cascade per Eve at the box midpoint.
pub fn average_scheme(
    channel: &ChannelRealization,
    uncertainty: &UncertaintySet,
    config: &SystemConfig,
    mode: Mode,
    rng: &mut impl Rng,
) -> rsbf::Result<BeamformingSolution> {
    let bank = SampleBank::single(&midpoint_cascades(uncertainty, &channel.h_ar, config));
    rsbf::solve_with_bank(&channel.h_ab, &bank, config, mode, rng)
}

pub fn run_scheme(
    choice: SchemeChoice,
    channel: &ChannelRealization,
    uncertainty: &UncertaintySet,
    config: &SystemConfig,
    rng: &mut impl Rng,
) -> rsbf::Result<BeamformingSolution> {
    match choice.scheme {
        Scheme::Robust => rsbf::solve_robust(choice.mode, channel, uncertainty, config, rng),
        Scheme::Perfect => perfect_csi_scheme(channel, config, choice.mode, rng),
        Scheme::Average => average_scheme(channel, uncertainty, config, choice.mode, rng),
        Scheme::Mrt => Ok(mrt_scheme(channel, config, choice.mode, rng)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_uncertainty, deg, draw_channel, ChannelRealization};
    use crate::numerics::{c64, max_abs, CMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(k: usize) -> SystemConfig {
        SystemConfig {
            m: 4,
            n_az: 2,
            n_el: 2,
            k,
            eve_centers: SystemConfig::default()
                .eve_centers
                .into_iter()
                .cycle()
                .take(k)
                .collect(),
            d_k: 4,
            rand_trials: 30,
            ..SystemConfig::default()
        }
    }

    fn channel(config: &SystemConfig, seed: u64) -> ChannelRealization {
        draw_channel(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn feasible(sol: &BeamformingSolution, p_max: f64) {
        assert!(sol.w.norm_squared() <= p_max + 1e-9);
        assert!(sol.q.iter().all(|z| (z.norm() - 1.0).abs() <= 1e-9));
    }

    #[test]
    fn scheme_names_roundtrip() {
        for scheme in Scheme::ALL {
            for mode in [Mode::Colluding, Mode::NonColluding] {
                let choice = SchemeChoice::new(scheme, mode);
                assert_eq!(
                    SchemeChoice::parse(&choice.to_string(), Mode::Colluding).unwrap(),
                    choice
                );
            }
        }
        let bare = SchemeChoice::parse("average", Mode::NonColluding).unwrap();
        assert_eq!(bare, SchemeChoice::new(Scheme::Average, Mode::NonColluding));
        assert!(SchemeChoice::parse("zero-forcing", Mode::Colluding).is_err());
    }

    #[test]
    fn mrt_scalar_case() {
        let h = CMatrix::from_element(1, 1, c64(0.3, -0.4));
        let mut ch = channel(&small(0), 1);
        ch.h_ab = h;
        let config = SystemConfig {
            m: 1,
            p_max: 4.0,
            ..small(0)
        };
        let sol = mrt_scheme(
            &ch,
            &config,
            Mode::Colluding,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!((sol.q[0] - c64(1.0, 0.0)).norm() < 1e-12);
        assert!((sol.w[0] - c64(0.6, 0.8) * 2.0).norm() < 1e-12);
    }

    #[test]
    fn mrt_rank_one_cascade_aligns_phases() {
        let config = SystemConfig { l: 1, ..small(1) };
        let ch = channel(&config, 2);
        let sol = mrt_scheme(
            &ch,
            &config,
            Mode::Colluding,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        // H = diag(h) a b^T, so |q H w| is maximal when q_n cancels the phase of h_n a_n
        let row_gain = (ch.h_ab.transpose() * &sol.q).norm_squared();
        let aligned: f64 = ch
            .h_ab
            .column(0)
            .iter()
            .map(|z| z.norm())
            .sum::<f64>()
            .powi(2);
        let col0 = ch.h_ab.column(0).norm_squared();
        let expected = aligned * ch.h_ab.norm_squared() / col0;
        assert!(
            (row_gain - expected).abs() <= 1e-6 * expected,
            "{row_gain} vs {expected}"
        );
        feasible(&sol, config.p_max);
    }

    #[test]
    fn mrt_ignores_eves() {
        let config = small(2);
        let ch = channel(&config, 3);
        let mut other = ch.clone();
        for g in other.g_true.iter_mut() {
            *g = g.scale(5.0);
        }
        let a = mrt_scheme(
            &ch,
            &config,
            Mode::Colluding,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        let b = mrt_scheme(
            &other,
            &config,
            Mode::Colluding,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn perfect_equals_degenerate_robust() {
        let config = SystemConfig { d_k: 1, ..small(2) };
        let ch = channel(&config, 4);
        let set = build_uncertainty(&ch, 0.0, 0.0);
        for mode in [Mode::Colluding, Mode::NonColluding] {
            let p =
                perfect_csi_scheme(&ch, &config, mode, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let bank = crate::channel::build_sample_bank(
                &set,
                &ch.h_ar,
                &config,
                &mut ChaCha8Rng::seed_from_u64(2),
            );
            let r = rsbf::solve_with_bank(
                &ch.h_ab,
                &bank,
                &config,
                mode,
                &mut ChaCha8Rng::seed_from_u64(1),
            )
            .unwrap();
            assert!((p.objective - r.objective).abs() <= 1e-9 * p.objective.abs());
            feasible(&p, config.p_max);
        }
    }

    #[test]
    fn perfect_without_eves_matches_mrt() {
        let config = small(0);
        let ch = channel(&config, 5);
        let p = perfect_csi_scheme(
            &ch,
            &config,
            Mode::Colluding,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let m = mrt_scheme(
            &ch,
            &config,
            Mode::Colluding,
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        assert!(
            (p.objective - m.objective).abs() <= 1e-3 * m.objective,
            "{} vs {}",
            p.objective,
            m.objective
        );
    }

    #[test]
    fn average_at_zero_width_is_perfect() {
        let config = small(2);
        let ch = channel(&config, 6);
        let set = build_uncertainty(&ch, 0.0, 0.0);
        let mids = midpoint_cascades(&set, &ch.h_ar, &config);
        for (m, g) in mids.iter().zip(&ch.g_true) {
            assert!(max_abs(&(m - g)) <= 1e-12 * max_abs(g));
        }
        let a = average_scheme(
            &ch,
            &set,
            &config,
            Mode::Colluding,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let p = perfect_csi_scheme(
            &ch,
            &config,
            Mode::Colluding,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert!((a.objective - p.objective).abs() <= 1e-9 * p.objective.abs());
        assert!(a.weights.iter().all(|w| w.len() == 1));
    }

    #[test]
    fn every_scheme_is_feasible() {
        let config = small(2);
        let ch = channel(&config, 7);
        let set = build_uncertainty(&ch, deg(5.0), 0.0);
        for scheme in Scheme::ALL {
            for mode in [Mode::Colluding, Mode::NonColluding] {
                let sol = run_scheme(
                    SchemeChoice::new(scheme, mode),
                    &ch,
                    &set,
                    &config,
                    &mut ChaCha8Rng::seed_from_u64(3),
                )
                .unwrap();
                feasible(&sol, config.p_max);
                assert_eq!(sol.mode, mode);
            }
        }
    }
}
