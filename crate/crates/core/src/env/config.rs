use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dynamics::{RandomizationMode, RandomizationSpec, VehicleParams};
use crate::error::{Error, Result};
use crate::kv::{self, KvFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackRepresentation {
    /// Lookahead curvature and width samples.
    Geometric,
    /// Normalized progress along the centerline.
    Progress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    /// Second action channel is a wheel acceleration, integrated into the
    /// wheel-speed reference.
    WheelAccel,
    /// Second action channel sets the wheel-speed reference directly.
    WheelSpeed,
}

macro_rules! str_enum {
    ($ty:ty, $($variant:path => $name:literal),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

str_enum!(TrackRepresentation, TrackRepresentation::Geometric => "geometric", TrackRepresentation::Progress => "progress");
str_enum!(ActionSpace, ActionSpace::WheelAccel => "wheel_accel", ActionSpace::WheelSpeed => "wheel_speed");

/// Normalization constants; each observation element is divided by its
/// maximum. Wheel-speed maxima default to values derived from the vehicle
/// parameters when left unset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsMaxima {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub n: f64,
    pub u: f64,
    pub delta: f64,
    pub omega: Option<f64>,
    pub omega_dot: Option<f64>,
    pub curvature: f64,
    pub width: f64,
}

impl Default for ObsMaxima {
    fn default() -> Self {
        Self {
            vx: 8.0,
            vy: 3.0,
            yaw_rate: 6.0,
            n: 1.0,
            u: std::f64::consts::PI,
            delta: 0.5,
            omega: None,
            omega_dot: None,
            curvature: 3.0,
            width: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub dt: f64,
    pub substeps: usize,
    pub n_lookahead: usize,
    pub lookahead_spacing: f64,
    pub obs_maxima: ObsMaxima,
    pub action_scale_delta: f64,
    /// Wheel contact-point acceleration at full action (m/s²).
    pub action_scale_accel: f64,
    pub randomization: RandomizationSpec,
    pub track_representation: TrackRepresentation,
    pub action_space: ActionSpace,
    pub model_actuators: bool,
    /// Steps after which an episode is truncated.
    pub max_episode_steps: usize,
    /// Upper bound of the uniform reset speed (m/s).
    pub reset_speed_max: f64,
    pub vehicle_half_width: f64,
    pub track: Option<PathBuf>,
    pub params: Option<PathBuf>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            substeps: 10,
            n_lookahead: 10,
            lookahead_spacing: 0.3,
            obs_maxima: ObsMaxima::default(),
            action_scale_delta: 0.5,
            action_scale_accel: 5.0,
            randomization: RandomizationSpec::default(),
            track_representation: TrackRepresentation::Geometric,
            action_space: ActionSpace::WheelAccel,
            model_actuators: true,
            max_episode_steps: 1024,
            reset_speed_max: 2.0,
            vehicle_half_width: 0.15,
            track: None,
            params: None,
        }
    }
}

const KEYS: &[&str] = &[
    "dt",
    "substeps",
    "n_lookahead",
    "lookahead_spacing",
    "action_scale_delta",
    "action_scale_accel",
    "sigma_dr",
    "randomization_mode",
    "track_representation",
    "action_space",
    "model_actuators",
    "max_episode_steps",
    "reset_speed_max",
    "vehicle_half_width",
    "track",
    "params",
    "obs_max_vx",
    "obs_max_vy",
    "obs_max_yaw_rate",
    "obs_max_n",
    "obs_max_u",
    "obs_max_delta",
    "obs_max_omega",
    "obs_max_omega_dot",
    "obs_max_curvature",
    "obs_max_width",
];

impl EnvConfig {
    pub fn obs_dim(&self) -> usize {
        match self.track_representation {
            TrackRepresentation::Geometric => 10 + 2 * self.n_lookahead,
            TrackRepresentation::Progress => 11,
        }
    }

    /// Resolved wheel-speed normalization `(ω_max, ω̇_max)`.
    pub fn omega_maxima(&self, nominal: &VehicleParams) -> (f64, f64) {
        (
            self.obs_maxima.omega.unwrap_or(nominal.omega_max),
            self.obs_maxima
                .omega_dot
                .unwrap_or(self.action_scale_accel / nominal.r_w),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.obs_maxima;
        let positive = [
            ("dt", self.dt),
            ("lookahead_spacing", self.lookahead_spacing),
            ("action_scale_delta", self.action_scale_delta),
            ("action_scale_accel", self.action_scale_accel),
            ("obs_max_vx", m.vx),
            ("obs_max_vy", m.vy),
            ("obs_max_yaw_rate", m.yaw_rate),
            ("obs_max_n", m.n),
            ("obs_max_u", m.u),
            ("obs_max_delta", m.delta),
            ("obs_max_omega", m.omega.unwrap_or(1.0)),
            ("obs_max_omega_dot", m.omega_dot.unwrap_or(1.0)),
            ("obs_max_curvature", m.curvature),
            ("obs_max_width", m.width),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.substeps == 0 || self.n_lookahead == 0 || self.max_episode_steps == 0 {
            return Err(Error::Config(
                "substeps, n_lookahead and max_episode_steps must be at least 1".into(),
            ));
        }
        if !(self.randomization.sigma_dr >= 0.0) {
            return Err(Error::Config("sigma_dr must be non-negative".into()));
        }
        if !(self.reset_speed_max >= 0.0) || !(self.vehicle_half_width >= 0.0) {
            return Err(Error::Config("reset_speed_max and vehicle_half_width must be non-negative".into()));
        }
        Ok(())
    }

    /// Applies file entries; relative paths resolve against `base_dir`.
    pub fn apply_kv(&mut self, kv: &KvFile, base_dir: Option<&Path>) -> Result<()> {
        kv.check_known(KEYS)?;
        kv.set_if("dt", &mut self.dt)?;
        kv.set_if("substeps", &mut self.substeps)?;
        kv.set_if("n_lookahead", &mut self.n_lookahead)?;
        kv.set_if("lookahead_spacing", &mut self.lookahead_spacing)?;
        kv.set_if("action_scale_delta", &mut self.action_scale_delta)?;
        kv.set_if("action_scale_accel", &mut self.action_scale_accel)?;
        kv.set_if("sigma_dr", &mut self.randomization.sigma_dr)?;
        if let Some(mode) = kv.get_str("randomization_mode") {
            self.randomization.mode = mode.parse::<RandomizationMode>()?;
        }
        if let Some(v) = kv.get_str("track_representation") {
            self.track_representation = v.parse()?;
        }
        if let Some(v) = kv.get_str("action_space") {
            self.action_space = v.parse()?;
        }
        kv.set_if("model_actuators", &mut self.model_actuators)?;
        kv.set_if("max_episode_steps", &mut self.max_episode_steps)?;
        kv.set_if("reset_speed_max", &mut self.reset_speed_max)?;
        kv.set_if("vehicle_half_width", &mut self.vehicle_half_width)?;
        let resolve = |p: &str| match base_dir {
            Some(dir) if Path::new(p).is_relative() => dir.join(p),
            _ => PathBuf::from(p),
        };
        if let Some(p) = kv.get_str("track") {
            self.track = Some(resolve(p));
        }
        if let Some(p) = kv.get_str("params") {
            self.params = Some(resolve(p));
        }
        let m = &mut self.obs_maxima;
        kv.set_if("obs_max_vx", &mut m.vx)?;
        kv.set_if("obs_max_vy", &mut m.vy)?;
        kv.set_if("obs_max_yaw_rate", &mut m.yaw_rate)?;
        kv.set_if("obs_max_n", &mut m.n)?;
        kv.set_if("obs_max_u", &mut m.u)?;
        kv.set_if("obs_max_delta", &mut m.delta)?;
        if let Some(v) = kv.get::<f64>("obs_max_omega")? {
            m.omega = Some(v);
        }
        if let Some(v) = kv.get::<f64>("obs_max_omega_dot")? {
            m.omega_dot = Some(v);
        }
        kv.set_if("obs_max_curvature", &mut m.curvature)?;
        kv.set_if("obs_max_width", &mut m.width)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(&KvFile::read(path)?, path.parent())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let f = kv::fmt_f64;
        let m = &self.obs_maxima;
        let mut pairs: Vec<(&str, String)> = vec![
            ("dt", f(self.dt)),
            ("substeps", self.substeps.to_string()),
            ("n_lookahead", self.n_lookahead.to_string()),
            ("lookahead_spacing", f(self.lookahead_spacing)),
            ("action_scale_delta", f(self.action_scale_delta)),
            ("action_scale_accel", f(self.action_scale_accel)),
            ("sigma_dr", f(self.randomization.sigma_dr)),
            ("randomization_mode", self.randomization.mode.to_string()),
            ("track_representation", self.track_representation.to_string()),
            ("action_space", self.action_space.to_string()),
            ("model_actuators", self.model_actuators.to_string()),
            ("max_episode_steps", self.max_episode_steps.to_string()),
            ("reset_speed_max", f(self.reset_speed_max)),
            ("vehicle_half_width", f(self.vehicle_half_width)),
            ("obs_max_vx", f(m.vx)),
            ("obs_max_vy", f(m.vy)),
            ("obs_max_yaw_rate", f(m.yaw_rate)),
            ("obs_max_n", f(m.n)),
            ("obs_max_u", f(m.u)),
            ("obs_max_delta", f(m.delta)),
            ("obs_max_curvature", f(m.curvature)),
            ("obs_max_width", f(m.width)),
        ];
        if let Some(v) = m.omega {
            pairs.push(("obs_max_omega", f(v)));
        }
        if let Some(v) = m.omega_dot {
            pairs.push(("obs_max_omega_dot", f(v)));
        }
        if let Some(p) = &self.track {
            pairs.push(("track", p.display().to_string()));
        }
        if let Some(p) = &self.params {
            pairs.push(("params", p.display().to_string()));
        }
        kv::render(pairs)
    }
}
