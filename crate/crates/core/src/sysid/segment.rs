//! Training segments and the long-horizon rollout loss.

use super::log::DriveLog;
use super::savgol::{unwrap_angles, Velocities};
use crate::dynamics::{ActuatorCommand, Integrator, VehicleParams, VehicleState};
use crate::scalar::Scalar;

/// Returned instead of a non-finite loss.
pub const BLOWUP_LOSS: f64 = 1e6;

/// Per-channel weights of the rollout MSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelWeights {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub delta: f64,
    pub omega: f64,
}

impl Default for ChannelWeights {
    fn default() -> Self {
        Self {
            x: 0.1,
            y: 0.1,
            yaw: 0.1,
            vx: 1.0,
            vy: 1.0,
            yaw_rate: 1.0,
            delta: 1.0,
            omega: 1.0,
        }
    }
}

impl ChannelWeights {
    pub const NAMES: [&'static str; 8] = ["x", "y", "yaw", "vx", "vy", "yaw_rate", "delta", "omega"];

    pub fn as_array(&self) -> [f64; 8] {
        [self.x, self.y, self.yaw, self.vx, self.vy, self.yaw_rate, self.delta, self.omega]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            yaw: a[2],
            vx: a[3],
            vy: a[4],
            yaw_rate: a[5],
            delta: a[6],
            omega: a[7],
        }
    }

    pub fn zero() -> Self {
        Self::from_array([0.0; 8])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSegment {
    pub initial_state: VehicleState,
    /// Command applied over each sample interval (zero-order hold).
    pub commands: Vec<ActuatorCommand>,
    /// Reference states; the first one equals `initial_state`.
    pub targets: Vec<VehicleState>,
    /// Sample spacing (s).
    pub dt: f64,
}

impl TrainingSegment {
    pub fn horizon(&self) -> usize {
        self.targets.len()
    }
}

/// Cuts overlapping windows of `horizon` samples with stride `horizon/2`.
/// Yaw is unwrapped so the targets are continuous.
pub fn make_segments(log: &DriveLog, vel: &Velocities, horizon: usize) -> Vec<TrainingSegment> {
    let n = log.len();
    if horizon < 2 || horizon > n {
        return Vec::new();
    }
    let stride = (horizon / 2).max(1);
    let yaw = unwrap_angles(&log.yaw);
    let state = |i: usize| VehicleState {
        x: log.x[i],
        y: log.y[i],
        yaw: yaw[i],
        vx: vel.vx[i],
        vy: vel.vy[i],
        yaw_rate: vel.yaw_rate[i],
        delta: log.delta[i],
        omega: log.omega[i],
    };
    let dt = log.dt();
    (0..=n - horizon)
        .step_by(stride)
        .map(|start| TrainingSegment {
            initial_state: state(start),
            commands: (start..start + horizon).map(|i| log.command(i)).collect(),
            targets: (start..start + horizon).map(state).collect(),
            dt,
        })
        .collect()
}

fn channels<S: Scalar>(s: &VehicleState<S>) -> [S; 8] {
    [s.x, s.y, s.yaw, s.vx, s.vy, s.yaw_rate, s.delta, s.omega]
}

/// Simulates the segment's command sequence from its initial state and
/// returns the weighted squared error summed over channels and averaged
/// over the horizon. Non-finite rollouts cost [`BLOWUP_LOSS`].
pub fn rollout_loss<S: Scalar>(
    params: &VehicleParams<S>,
    seg: &TrainingSegment,
    weights: &ChannelWeights,
    substeps: usize,
) -> S {
    let w = weights.as_array();
    let integ = Integrator::new(seg.dt, substeps);
    let mut st: VehicleState<S> = seg.initial_state.lift();
    let mut total = S::cst(0.0);
    for (k, target) in seg.targets.iter().enumerate() {
        if k > 0 {
            match integ.step(&st, &seg.commands[k - 1].lift(), params) {
                Ok(next) => st = next,
                Err(_) => return S::cst(BLOWUP_LOSS),
            }
        }
        for ((p, t), wc) in channels(&st).into_iter().zip(channels(target)).zip(w) {
            if wc != 0.0 {
                let e = p - t;
                total = total + e * e * wc;
            }
        }
    }
    let loss = total / seg.targets.len() as f64;
    if loss.value().is_finite() {
        loss
    } else {
        S::cst(BLOWUP_LOSS)
    }
}
