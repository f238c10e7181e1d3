use std::sync::Arc;

use rayon::prelude::*;

use super::{EnvConfig, RacingEnv, StepResult};
use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::track::TrackDefinition;

/// Steps every env with its own action. Envs that finish are reset and the
/// reset observation replaces `observation`, with the final one kept in
/// `final_observation`. With `parallel` set the envs run on the rayon pool;
/// results do not depend on scheduling since each env owns its rng.
pub fn step_batch(envs: &mut [RacingEnv], actions: &[[f64; 2]], parallel: bool) -> Result<Vec<StepResult>> {
    if envs.len() != actions.len() {
        return Err(Error::DimensionMismatch {
            expected: envs.len(),
            got: actions.len(),
        });
    }
    let one = |(env, action): (&mut RacingEnv, &[f64; 2])| -> Result<StepResult> {
        let mut r = env.step(*action)?;
        if r.done() {
            let obs = env.reset();
            r.final_observation = Some(std::mem::replace(&mut r.observation, obs));
        }
        Ok(r)
    };
    if parallel {
        envs.par_iter_mut().zip(actions.par_iter()).map(one).collect()
    } else {
        envs.iter_mut().zip(actions.iter()).map(one).collect()
    }
}

/// A fixed set of environments on one shared track, each with its own
/// rng stream derived from a base seed.
#[derive(Debug, Clone)]
pub struct VecEnv {
    envs: Vec<RacingEnv>,
    parallel: bool,
}

impl VecEnv {
    pub fn new(
        track: Arc<TrackDefinition>,
        params: VehicleParams,
        config: EnvConfig,
        count: usize,
        seed: u64,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("env count must be at least 1".into()));
        }
        let envs = (0..count)
            .map(|i| RacingEnv::new(track.clone(), params, config.clone(), stream_seed(seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { envs, parallel: true })
    }

    pub fn from_envs(envs: Vec<RacingEnv>) -> Self {
        Self { envs, parallel: true }
    }

    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.envs[0].obs_dim()
    }

    pub fn envs(&self) -> &[RacingEnv] {
        &self.envs
    }

    pub fn envs_mut(&mut self) -> &mut [RacingEnv] {
        &mut self.envs
    }

    /// Resets every env; observations are returned row-major.
    pub fn reset_all(&mut self) -> Vec<f32> {
        let dim = self.obs_dim();
        let mut out = vec![0.0; dim * self.envs.len()];
        for (env, row) in self.envs.iter_mut().zip(out.chunks_mut(dim)) {
            row.copy_from_slice(&env.reset());
        }
        out
    }

    pub fn step(&mut self, actions: &[[f64; 2]]) -> Result<Vec<StepResult>> {
        step_batch(&mut self.envs, actions, self.parallel)
    }
}

/// SplitMix64 finalizer; spreads consecutive indices into unrelated seeds.
pub fn stream_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
