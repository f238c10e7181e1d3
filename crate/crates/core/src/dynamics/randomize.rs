//! Multiplicative Gaussian parameter perturbation for domain randomization.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::params::{ParamId, VehicleParams};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomizationMode {
    /// Only the tire-track friction scale.
    FrictionOnly,
    /// Mass, inertia, axle distances, friction and tire peak factors.
    AllSingleTrack,
}

impl RandomizationMode {
    pub fn targets(self) -> &'static [ParamId] {
        match self {
            RandomizationMode::FrictionOnly => &[ParamId::Mu],
            RandomizationMode::AllSingleTrack => &[
                ParamId::M,
                ParamId::Iz,
                ParamId::Lf,
                ParamId::Lr,
                ParamId::Mu,
                ParamId::TireDF,
                ParamId::TireDR,
            ],
        }
    }
}

impl fmt::Display for RandomizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RandomizationMode::FrictionOnly => "friction_only",
            RandomizationMode::AllSingleTrack => "all_single_track",
        })
    }
}

impl FromStr for RandomizationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "friction_only" | "friction" => Ok(RandomizationMode::FrictionOnly),
            "all_single_track" | "all" => Ok(RandomizationMode::AllSingleTrack),
            other => Err(Error::Config(format!("unknown randomization mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizationSpec {
    pub sigma_dr: f64,
    pub mode: RandomizationMode,
}

impl Default for RandomizationSpec {
    fn default() -> Self {
        Self {
            sigma_dr: 0.0,
            mode: RandomizationMode::FrictionOnly,
        }
    }
}

pub const SCALE_MIN: f64 = 0.5;
pub const SCALE_MAX: f64 = 1.5;

/// One scale factor drawn from N(1, σ) and clamped to [0.5, 1.5].
pub fn draw_scale<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (1.0 + sigma * z).clamp(SCALE_MIN, SCALE_MAX)
}

/// Scales each targeted parameter by an independent factor.
pub fn randomize_params<R: Rng + ?Sized>(
    params: &VehicleParams,
    spec: &RandomizationSpec,
    rng: &mut R,
) -> VehicleParams {
    let mut out = *params;
    if spec.sigma_dr <= 0.0 {
        return out;
    }
    for &id in spec.mode.targets() {
        let k = draw_scale(spec.sigma_dr, rng);
        out.set(id, params.get(id) * k);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_sigma_is_identity() {
        let p = VehicleParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = RandomizationSpec { sigma_dr: 0.0, mode: RandomizationMode::AllSingleTrack };
        assert_eq!(randomize_params(&p, &spec, &mut rng), p);
    }

    #[test]
    fn friction_only_touches_mu() {
        let p = VehicleParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = RandomizationSpec { sigma_dr: 0.1, mode: RandomizationMode::FrictionOnly };
        let q = randomize_params(&p, &spec, &mut rng);
        for id in ParamId::ALL {
            if id == ParamId::Mu {
                assert_ne!(q.get(id), p.get(id));
            } else {
                assert_eq!(q.get(id), p.get(id));
            }
        }
    }

    #[test]
    fn all_mode_keeps_actuators_fixed() {
        let p = VehicleParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = RandomizationSpec { sigma_dr: 0.1, mode: RandomizationMode::AllSingleTrack };
        let q = randomize_params(&p, &spec, &mut rng);
        assert_eq!(q.t_delta, p.t_delta);
        assert_eq!(q.t_omega, p.t_omega);
        assert_eq!(q.delta_max, p.delta_max);
        assert_ne!(q.m, p.m);
        assert_ne!(q.front.d, p.front.d);
    }

    #[test]
    fn scale_mean_matches_statistical_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let sigma = 0.05;
        let mean = (0..n).map(|_| draw_scale(sigma, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn scales_are_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let k = draw_scale(2.0, &mut rng);
            assert!((SCALE_MIN..=SCALE_MAX).contains(&k));
        }
    }

    #[test]
    fn same_seed_same_draw() {
        let p = VehicleParams::default();
        let spec = RandomizationSpec { sigma_dr: 0.05, mode: RandomizationMode::AllSingleTrack };
        let a = randomize_params(&p, &spec, &mut ChaCha8Rng::seed_from_u64(9));
        let b = randomize_params(&p, &spec, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
