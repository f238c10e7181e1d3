//! Racing environment: reset, action resolution, observation assembly,
//! progress reward and batched stepping.

mod batch;
mod config;

pub use batch::{step_batch, stream_seed, VecEnv};
pub use config::{ActionSpace, EnvConfig, ObsMaxima, TrackRepresentation};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{randomize_params, ActuatorCommand, Integrator, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::track::{progress_delta, FrenetPose, TrackDefinition};

/// Reward for leaving the track.
pub const VIOLATION_REWARD: f64 = -1.0;

/// Input accepted by [`RacingEnv::step_control`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    /// Policy output, each element nominally in [−1, 1].
    Action([f64; 2]),
    /// Actuator references set directly (baseline controllers).
    Direct(ActuatorCommand),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Net start/finish crossings since the last reset.
    pub laps: i64,
    pub state: VehicleState,
    pub pose: FrenetPose,
    pub command: ActuatorCommand,
    /// Progress accumulated in the current episode (m).
    pub episode_progress: f64,
    pub episode_steps: usize,
    /// Parameters in effect for the episode.
    pub params: VehicleParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f32>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
    /// Observation of the final state when a batched environment was
    /// auto-reset after this step; `observation` then holds the reset one.
    pub final_observation: Option<Vec<f32>>,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone)]
pub struct RacingEnv {
    track: Arc<TrackDefinition>,
    nominal: VehicleParams,
    params: VehicleParams,
    config: EnvConfig,
    integrator: Integrator,
    omega_max_obs: f64,
    omega_dot_max_obs: f64,
    rng: ChaCha8Rng,
    state: VehicleState,
    cmd: ActuatorCommand,
    omega_dot_ref: f64,
    pose: FrenetPose,
    needs_reset: bool,
    episode_steps: usize,
    episode_progress: f64,
    laps: i64,
}

impl RacingEnv {
    pub fn new(track: Arc<TrackDefinition>, nominal: VehicleParams, config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        nominal.validate()?;
        let (omega_max_obs, omega_dot_max_obs) = config.omega_maxima(&nominal);
        let integrator = Integrator {
            dt: config.dt,
            substeps: config.substeps,
            model_actuators: config.model_actuators,
        };
        Ok(Self {
            track,
            nominal,
            params: nominal,
            integrator,
            omega_max_obs,
            omega_dot_max_obs,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: VehicleState::default(),
            cmd: ActuatorCommand::default(),
            omega_dot_ref: 0.0,
            pose: FrenetPose { s: 0.0, n: 0.0, u: 0.0 },
            needs_reset: true,
            episode_steps: 0,
            episode_progress: 0.0,
            laps: 0,
            config,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn track(&self) -> &TrackDefinition {
        &self.track
    }

    pub fn track_arc(&self) -> &Arc<TrackDefinition> {
        &self.track
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn pose(&self) -> &FrenetPose {
        &self.pose
    }

    pub fn command(&self) -> &ActuatorCommand {
        &self.cmd
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn nominal_params(&self) -> &VehicleParams {
        &self.nominal
    }

    pub fn obs_dim(&self) -> usize {
        self.config.obs_dim()
    }

    pub fn needs_reset(&self) -> bool {
        self.needs_reset
    }

    /// Replaces the nominal parameters that episodes are randomized around.
    pub fn set_nominal_params(&mut self, params: VehicleParams) -> Result<()> {
        params.validate()?;
        self.nominal = params;
        Ok(())
    }

    /// Changes the truncation horizon (evaluation runs use an unbounded one).
    pub fn set_max_episode_steps(&mut self, steps: usize) {
        self.config.max_episode_steps = steps.max(1);
    }

    /// Random centerline position and speed, freshly randomized parameters.
    pub fn reset(&mut self) -> Vec<f32> {
        let s = self.rng.random_range(0.0..self.track.total_length());
        let vx = self.rng.random_range(0.0..=self.config.reset_speed_max);
        self.reset_at(s, vx)
    }

    /// Places the car on the centerline at `s`, aligned with the tangent.
    pub fn reset_at(&mut self, s: f64, vx: f64) -> Vec<f32> {
        self.params = randomize_params(&self.nominal, &self.config.randomization, &mut self.rng);
        let s = self.track.wrap_s(s);
        let (x, y, yaw) = self
            .track
            .frenet_to_global(s, 0.0)
            .expect("zero offset is always valid");
        let omega = (vx / self.params.r_w).min(self.params.omega_max);
        self.state = VehicleState {
            x,
            y,
            yaw,
            vx,
            omega,
            ..VehicleState::default()
        };
        self.cmd = ActuatorCommand {
            delta_ref: 0.0,
            omega_ref: omega,
        };
        self.omega_dot_ref = 0.0;
        self.pose = FrenetPose { s, n: 0.0, u: 0.0 };
        self.needs_reset = false;
        self.episode_steps = 0;
        self.episode_progress = 0.0;
        self.laps = 0;
        self.observation()
    }

    /// Overwrites the vehicle state (tests and diagnostics).
    pub fn set_state(&mut self, state: VehicleState) -> Result<()> {
        self.pose = self
            .track
            .global_to_frenet(state.x, state.y, state.yaw, Some(self.pose.s))?;
        self.state = state;
        Ok(())
    }

    fn resolve(&mut self, control: Control) -> ActuatorCommand {
        let p = &self.params;
        match control {
            Control::Action(raw) => {
                let a0 = raw[0].clamp(-1.0, 1.0);
                let a1 = raw[1].clamp(-1.0, 1.0);
                let delta_ref = a0 * self.config.action_scale_delta;
                match self.config.action_space {
                    ActionSpace::WheelAccel => {
                        // Contact-point acceleration expressed as wheel angular acceleration.
                        let omega_dot = a1 * self.config.action_scale_accel / p.r_w;
                        let omega_ref =
                            (self.cmd.omega_ref + omega_dot * self.config.dt).clamp(0.0, p.omega_max);
                        self.omega_dot_ref = omega_dot;
                        ActuatorCommand { delta_ref, omega_ref }
                    }
                    ActionSpace::WheelSpeed => {
                        let omega_ref = 0.5 * (a1 + 1.0) * p.omega_max;
                        self.omega_dot_ref = (omega_ref - self.cmd.omega_ref) / self.config.dt;
                        ActuatorCommand { delta_ref, omega_ref }
                    }
                }
            }
            Control::Direct(cmd) => {
                let cmd = cmd.clamped(p);
                self.omega_dot_ref = (cmd.omega_ref - self.cmd.omega_ref) / self.config.dt;
                cmd
            }
        }
        .clamped(p)
    }

    pub fn step(&mut self, action: [f64; 2]) -> Result<StepResult> {
        self.step_control(Control::Action(action))
    }

    pub fn step_control(&mut self, control: Control) -> Result<StepResult> {
        if self.needs_reset {
            return Err(Error::Usage("step called before reset or after the episode ended".into()));
        }
        self.cmd = self.resolve(control);
        self.state = self.integrator.step(&self.state, &self.cmd, &self.params)?;

        let prev_s = self.pose.s;
        let length = self.track.total_length();
        let (pose, inside) = match self.track.global_to_frenet(
            self.state.x,
            self.state.y,
            self.state.yaw,
            Some(prev_s),
        ) {
            Ok(pose) => (pose, self.track.is_inside(&pose)),
            Err(Error::OutOfDomain { distance, .. }) => (
                FrenetPose {
                    s: prev_s,
                    n: distance,
                    u: self.pose.u,
                },
                false,
            ),
            Err(e) => return Err(e),
        };
        self.pose = pose;
        let delta = progress_delta(prev_s, pose.s, length);
        if delta > 0.0 && pose.s < prev_s {
            self.laps += 1;
        } else if delta < 0.0 && pose.s > prev_s {
            self.laps -= 1;
        }
        self.episode_steps += 1;

        let (reward, terminated) = if inside {
            self.episode_progress += delta;
            (delta, false)
        } else {
            (VIOLATION_REWARD, true)
        };
        let truncated = !terminated && self.episode_steps >= self.config.max_episode_steps;
        self.needs_reset = terminated || truncated;

        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminated,
            truncated,
            info: self.info(),
            final_observation: None,
        })
    }

    pub fn info(&self) -> StepInfo {
        StepInfo {
            laps: self.laps,
            state: self.state,
            pose: self.pose,
            command: self.cmd,
            episode_progress: self.episode_progress,
            episode_steps: self.episode_steps,
            params: self.params,
        }
    }

    pub fn observation(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.obs_dim()];
        self.write_observation(&mut out);
        out
    }

    /// Writes the normalized observation for the current state into `out`.
    pub fn write_observation(&self, out: &mut [f32]) {
        build_observation(
            &self.state,
            &self.cmd,
            self.omega_dot_ref,
            &self.pose,
            &self.track,
            &self.config,
            (self.omega_max_obs, self.omega_dot_max_obs),
            out,
        );
    }
}

/// Assembles the configured observation variant, normalized by the
/// configured maxima. `omega_maxima` holds the resolved `(ω, ω̇_ref)`
/// normalizers.
#[allow(clippy::too_many_arguments)]
pub fn build_observation(
    state: &VehicleState,
    cmd: &ActuatorCommand,
    omega_dot_ref: f64,
    pose: &FrenetPose,
    track: &TrackDefinition,
    config: &EnvConfig,
    omega_maxima: (f64, f64),
    out: &mut [f32],
) {
    let m = &config.obs_maxima;
    let (w_max, wd_max) = omega_maxima;
    let dynamic = [
        state.yaw_rate / m.yaw_rate,
        state.delta / m.delta,
        cmd.delta_ref / m.delta,
        omega_dot_ref / wd_max,
        cmd.omega_ref / w_max,
        state.omega / w_max,
    ];
    match config.track_representation {
        TrackRepresentation::Geometric => {
            let n = config.n_lookahead;
            assert_eq!(out.len(), 10 + 2 * n, "observation buffer length");
            let head = [state.vx / m.vx, state.vy / m.vy, pose.u / m.u, pose.n / m.n];
            for (o, v) in out.iter_mut().zip(head.iter().chain(dynamic.iter())) {
                *o = *v as f32;
            }
            let mut c = [0.0f64; 64];
            let mut w = [0.0f64; 64];
            let mut written = 0;
            while written < n {
                let chunk = (n - written).min(64);
                let s0 = pose.s + written as f64 * config.lookahead_spacing;
                track.lookahead_into(s0, config.lookahead_spacing, &mut c[..chunk], &mut w[..chunk]);
                for k in 0..chunk {
                    out[10 + written + k] = (c[k] / m.curvature) as f32;
                    out[10 + n + written + k] = (w[k] / m.width) as f32;
                }
                written += chunk;
            }
        }
        TrackRepresentation::Progress => {
            assert_eq!(out.len(), 11, "observation buffer length");
            let head = [pose.n / m.n, pose.u / m.u, state.vx / m.vx, state.vy / m.vy];
            let tail = [pose.s / track.total_length()];
            for (o, v) in out
                .iter_mut()
                .zip(head.iter().chain(dynamic.iter()).chain(tail.iter()))
            {
                *o = *v as f32;
            }
        }
    }
}
