//! Dynamic single-track model with first-order steering and wheel-speed
//! actuators.

use super::params::VehicleParams;
use super::tire::tire_forces;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const GRAVITY: f64 = 9.81;

/// Lower bound on the longitudinal speed used in slip denominators (m/s).
pub const MIN_SLIP_SPEED: f64 = 0.3;
/// Below this speed the steering contribution to front slip fades out (m/s).
pub const CREEP_SPEED: f64 = 0.1;
/// Speed scale of the smoothed rolling-resistance sign (m/s).
const ROLL_SMOOTHING: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState<S = f64> {
    pub x: S,
    pub y: S,
    pub yaw: S,
    /// Body-frame longitudinal velocity (m/s).
    pub vx: S,
    /// Body-frame lateral velocity (m/s).
    pub vy: S,
    pub yaw_rate: S,
    /// Steering angle (rad).
    pub delta: S,
    /// Wheel rotational speed (rad/s).
    pub omega: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuatorCommand<S = f64> {
    pub delta_ref: S,
    pub omega_ref: S,
}

impl<S: Scalar> VehicleState<S> {
    fn to_array(self) -> [S; 8] {
        [self.x, self.y, self.yaw, self.vx, self.vy, self.yaw_rate, self.delta, self.omega]
    }

    fn from_array(a: [S; 8]) -> Self {
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

    pub fn values(&self) -> VehicleState<f64> {
        VehicleState::from_array(self.to_array().map(Scalar::value))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.value().is_finite())
    }
}

impl VehicleState<f64> {
    pub fn lift<S: Scalar>(&self) -> VehicleState<S> {
        VehicleState::from_array(self.to_array().map(S::cst))
    }
}

impl ActuatorCommand<f64> {
    pub fn lift<S: Scalar>(&self) -> ActuatorCommand<S> {
        ActuatorCommand {
            delta_ref: S::cst(self.delta_ref),
            omega_ref: S::cst(self.omega_ref),
        }
    }

    /// Restricts the references to the actuator limits.
    pub fn clamped(&self, p: &VehicleParams<impl Scalar>) -> Self {
        Self {
            delta_ref: self.delta_ref.clamp(-p.delta_max, p.delta_max),
            omega_ref: self.omega_ref.clamp(0.0, p.omega_max),
        }
    }
}

/// Time derivative of the full state.
///
/// With `model_actuators` false the steering and wheel-speed rows are zero;
/// the integrator then pins those states to their references.
pub fn derivatives<S: Scalar>(
    st: &VehicleState<S>,
    cmd: &ActuatorCommand<S>,
    p: &VehicleParams<S>,
    model_actuators: bool,
) -> VehicleState<S> {
    let (sin_d, cos_d) = (st.delta.sin(), st.delta.cos());
    let (sin_y, cos_y) = (st.yaw.sin(), st.yaw.cos());
    let r = st.yaw_rate;
    let vx_safe = st.vx.max(S::cst(MIN_SLIP_SPEED));

    let wheelbase = p.lf + p.lr;
    let weight = p.m * GRAVITY;
    let fz_f = weight * p.lr / wheelbase;
    let fz_r = weight * p.lf / wheelbase;

    let vy_f = st.vy + p.lf * r;
    let vy_r = st.vy - p.lr * r;
    let travel_f = vy_f.atan2(vx_safe);
    let alpha_f = st.delta - travel_f;
    let alpha_r = -vy_r.atan2(vx_safe);

    let wheel_speed = st.omega * p.r_w;
    let v_cf = st.vx * cos_d + vy_f * sin_d;
    let kappa_f = (wheel_speed - v_cf) / v_cf.abs().max(S::cst(MIN_SLIP_SPEED));
    let kappa_r = (wheel_speed - st.vx) / st.vx.abs().max(S::cst(MIN_SLIP_SPEED));

    let (mut fx_f, mut fy_f) = tire_forces(p.mu, &p.front, alpha_f, kappa_f, fz_f);
    let creep_w = st.vx.value().abs() / CREEP_SPEED;
    if creep_w < 1.0 {
        // Damped creep: the front slip angle loses its steering term.
        let (cx, cy) = tire_forces(p.mu, &p.front, -travel_f, kappa_f, fz_f);
        fx_f = fx_f * creep_w + cx * (1.0 - creep_w);
        fy_f = fy_f * creep_w + cy * (1.0 - creep_w);
    }
    let (fx_r, fy_r) = tire_forces(p.mu, &p.rear, alpha_r, kappa_r, fz_r);

    let resist = p.c_drag * st.vx * st.vx.abs() + p.c_roll * (st.vx / ROLL_SMOOTHING).tanh();
    let fx_fb = fx_f * cos_d - fy_f * sin_d;
    let fy_fb = fx_f * sin_d + fy_f * cos_d;

    let (d_delta, d_omega) = if model_actuators {
        (
            (cmd.delta_ref - st.delta) / p.t_delta,
            (cmd.omega_ref - st.omega) / p.t_omega,
        )
    } else {
        (S::cst(0.0), S::cst(0.0))
    };

    VehicleState {
        x: st.vx * cos_y - st.vy * sin_y,
        y: st.vx * sin_y + st.vy * cos_y,
        yaw: r,
        vx: (fx_fb + fx_r - resist) / p.m + st.vy * r,
        vy: (fy_fb + fy_r) / p.m - st.vx * r,
        yaw_rate: (p.lf * fy_fb - p.lr * fy_r) / p.iz,
        delta: d_delta,
        omega: d_omega,
    }
}

/// Fixed-step classical Runge–Kutta integration over one control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub dt: f64,
    pub substeps: usize,
    pub model_actuators: bool,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            dt: 0.05,
            substeps: 10,
            model_actuators: true,
        }
    }
}

impl Integrator {
    pub fn new(dt: f64, substeps: usize) -> Self {
        Self {
            dt,
            substeps,
            model_actuators: true,
        }
    }

    pub fn step<S: Scalar>(
        &self,
        state: &VehicleState<S>,
        cmd: &ActuatorCommand<S>,
        p: &VehicleParams<S>,
    ) -> Result<VehicleState<S>> {
        if !(self.dt > 0.0) || self.substeps == 0 {
            return Err(Error::Config("integrator needs dt > 0 and at least one substep".into()));
        }
        let cmd = ActuatorCommand {
            delta_ref: cmd.delta_ref.clamp(-p.delta_max, p.delta_max),
            omega_ref: cmd.omega_ref.clamp(0.0, p.omega_max),
        };
        let mut st = *state;
        if !self.model_actuators {
            st.delta = cmd.delta_ref;
            st.omega = cmd.omega_ref;
        }
        let h = self.dt / self.substeps as f64;
        let ma = self.model_actuators;
        for sub in 0..self.substeps {
            let y0 = st.to_array();
            let f = |y: [S; 8]| derivatives(&VehicleState::from_array(y), &cmd, p, ma).to_array();
            let k1 = f(y0);
            let k2 = f(std::array::from_fn(|i| y0[i] + k1[i] * (0.5 * h)));
            let k3 = f(std::array::from_fn(|i| y0[i] + k2[i] * (0.5 * h)));
            let k4 = f(std::array::from_fn(|i| y0[i] + k3[i] * h));
            let y1: [S; 8] = std::array::from_fn(|i| {
                y0[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0)
            });
            st = VehicleState::from_array(y1);
            st.delta = st.delta.clamp(-p.delta_max, p.delta_max);
            st.omega = st.omega.clamp(0.0, p.omega_max);
            if !st.is_finite() {
                return Err(Error::NumericalBlowup { substep: sub });
            }
        }
        Ok(st)
    }
}

/// Advances `state` by `dt` using `substeps` RK4 substeps with actuator
/// dynamics enabled.
pub fn integrate_step(
    state: &VehicleState,
    cmd: &ActuatorCommand,
    params: &VehicleParams,
    dt: f64,
    substeps: usize,
) -> Result<VehicleState> {
    Integrator::new(dt, substeps).step(state, cmd, params)
}
