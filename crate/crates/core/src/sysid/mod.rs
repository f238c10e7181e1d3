//! Parameter identification from drive logs by gradient descent on a
//! long-horizon rollout loss.

mod log;
mod savgol;
mod segment;

pub use log::{ingest_log, synthesize_log, DriveLog, SynthOptions, LOG_HEADER, MAX_GAP};
pub use savgol::{estimate_velocities, savgol_derivative, unwrap_angles, Velocities};
pub use segment::{make_segments, rollout_loss, ChannelWeights, TrainingSegment, BLOWUP_LOSS};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{ParamId, VehicleParams};
use crate::error::{Error, Result};
use crate::kv::{self, KvFile};
use crate::scalar::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Reverse-mode differentiation through the rollout.
    Reverse,
    /// Central differences in log-parameter space.
    FiniteDifference,
}

impl fmt::Display for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradientMode::Reverse => "reverse",
            GradientMode::FiniteDifference => "finite_difference",
        })
    }
}

impl FromStr for GradientMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reverse" | "analytic" => Ok(GradientMode::Reverse),
            "finite_difference" | "fd" => Ok(GradientMode::FiniteDifference),
            _ => Err(Error::Config(format!("unknown gradient mode `{s}`"))),
        }
    }
}

/// Step of the central differences in log-parameter space.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SysIdConfig {
    /// Samples per segment, initial sample included.
    pub horizon: usize,
    pub learning_rate: f64,
    /// Learning rate reached at the last epoch (cosine decay).
    pub learning_rate_end: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weights: ChannelWeights,
    pub gradient_mode: GradientMode,
    /// Parameters adjusted by the fit; the rest stay at their initial values.
    pub fit_params: Vec<ParamId>,
    /// RK4 substeps per log sample.
    pub substeps: usize,
    pub savgol_window: usize,
    pub savgol_order: usize,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for SysIdConfig {
    fn default() -> Self {
        Self {
            horizon: 85,
            learning_rate: 0.05,
            learning_rate_end: 0.0005,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 16,
            epochs: 200,
            weights: ChannelWeights::default(),
            gradient_mode: GradientMode::Reverse,
            fit_params: vec![ParamId::M, ParamId::Iz, ParamId::Mu, ParamId::TDelta, ParamId::TOmega],
            substeps: 2,
            savgol_window: 11,
            savgol_order: 3,
            seed: 0,
            parallel: true,
        }
    }
}

const KEYS: &[&str] = &[
    "horizon",
    "learning_rate",
    "learning_rate_end",
    "weight_decay",
    "beta1",
    "beta2",
    "batch_size",
    "epochs",
    "gradient_mode",
    "fit_params",
    "substeps",
    "savgol_window",
    "savgol_order",
    "seed",
    "weight_x",
    "weight_y",
    "weight_yaw",
    "weight_vx",
    "weight_vy",
    "weight_yaw_rate",
    "weight_delta",
    "weight_omega",
];

impl SysIdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::Config("horizon must be at least 2".into()));
        }
        let w = self.weights.as_array();
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || w.iter().all(|v| *v == 0.0) {
            return Err(Error::Config("channel weights must be non-negative with at least one positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate_end >= 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.substeps == 0 {
            return Err(Error::Config("batch_size and substeps must be positive".into()));
        }
        if self.fit_params.is_empty() {
            return Err(Error::Config("fit_params is empty".into()));
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &KvFile) -> Result<()> {
        kv.check_known(KEYS)?;
        kv.set_if("horizon", &mut self.horizon)?;
        kv.set_if("learning_rate", &mut self.learning_rate)?;
        kv.set_if("learning_rate_end", &mut self.learning_rate_end)?;
        kv.set_if("weight_decay", &mut self.weight_decay)?;
        kv.set_if("beta1", &mut self.beta1)?;
        kv.set_if("beta2", &mut self.beta2)?;
        kv.set_if("batch_size", &mut self.batch_size)?;
        kv.set_if("epochs", &mut self.epochs)?;
        kv.set_if("gradient_mode", &mut self.gradient_mode)?;
        kv.set_if("substeps", &mut self.substeps)?;
        kv.set_if("savgol_window", &mut self.savgol_window)?;
        kv.set_if("savgol_order", &mut self.savgol_order)?;
        kv.set_if("seed", &mut self.seed)?;
        if let Some(list) = kv.get_str("fit_params") {
            self.fit_params = parse_param_list(list)?;
        }
        let mut w = self.weights.as_array();
        for (slot, name) in w.iter_mut().zip(ChannelWeights::NAMES) {
            kv.set_if(&format!("weight_{name}"), slot)?;
        }
        self.weights = ChannelWeights::from_array(w);
        self.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Self::default();
        c.apply_kv(&KvFile::read(path)?)?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut pairs = vec![
            ("horizon", self.horizon.to_string()),
            ("learning_rate", kv::fmt_f64(self.learning_rate)),
            ("learning_rate_end", kv::fmt_f64(self.learning_rate_end)),
            ("weight_decay", kv::fmt_f64(self.weight_decay)),
            ("beta1", kv::fmt_f64(self.beta1)),
            ("beta2", kv::fmt_f64(self.beta2)),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("gradient_mode", self.gradient_mode.to_string()),
            (
                "fit_params",
                self.fit_params.iter().map(|p| p.name()).collect::<Vec<_>>().join(" "),
            ),
            ("substeps", self.substeps.to_string()),
            ("savgol_window", self.savgol_window.to_string()),
            ("savgol_order", self.savgol_order.to_string()),
            ("seed", self.seed.to_string()),
        ];
        let names: Vec<String> = ChannelWeights::NAMES.iter().map(|n| format!("weight_{n}")).collect();
        for (name, v) in names.iter().zip(self.weights.as_array()) {
            pairs.push((name.as_str(), kv::fmt_f64(v)));
        }
        kv::render(pairs)
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
        self.learning_rate_end + (self.learning_rate - self.learning_rate_end) * cos
    }
}

/// Parses a whitespace- or comma-separated list of parameter names.
pub fn parse_param_list(list: &str) -> Result<Vec<ParamId>> {
    list.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| ParamId::from_name(s).ok_or_else(|| Error::Config(format!("unknown parameter `{s}`"))))
        .collect()
}

fn with_log_params(base: &VehicleParams, ids: &[ParamId], theta: &[f64]) -> VehicleParams {
    let mut p = *base;
    for (&id, &t) in ids.iter().zip(theta) {
        p.set(id, t.exp());
    }
    p
}

/// Mean rollout loss over `segments` at log-parameters `theta`.
pub fn mean_loss(
    segments: &[TrainingSegment],
    base: &VehicleParams,
    ids: &[ParamId],
    theta: &[f64],
    config: &SysIdConfig,
) -> f64 {
    let p = with_log_params(base, ids, theta);
    let per = |s: &TrainingSegment| rollout_loss(&p, s, &config.weights, config.substeps);
    let losses: Vec<f64> = if config.parallel {
        segments.par_iter().map(per).collect()
    } else {
        segments.iter().map(per).collect()
    };
    losses.iter().sum::<f64>() / segments.len().max(1) as f64
}

/// Loss and reverse-mode gradient with respect to the log-parameters.
pub fn segment_gradient_reverse(
    seg: &TrainingSegment,
    base: &VehicleParams,
    ids: &[ParamId],
    theta: &[f64],
    config: &SysIdConfig,
) -> (f64, Vec<f64>) {
    let tape = Tape::new();
    let vars: Vec<Var> = theta.iter().map(|&t| tape.var(t)).collect();
    let mut p = base.lift::<Var>();
    for (&id, &v) in ids.iter().zip(&vars) {
        p.set(id, crate::scalar::Scalar::exp(v));
    }
    let loss = rollout_loss(&p, seg, &config.weights, config.substeps);
    let adj = tape.gradient(loss);
    (crate::scalar::Scalar::value(loss), vars.iter().map(|&v| adj.wrt(v)).collect())
}

/// Central-difference gradient with respect to the log-parameters.
pub fn segment_gradient_fd(
    seg: &TrainingSegment,
    base: &VehicleParams,
    ids: &[ParamId],
    theta: &[f64],
    config: &SysIdConfig,
) -> (f64, Vec<f64>) {
    let eval = |th: &[f64]| rollout_loss(&with_log_params(base, ids, th), seg, &config.weights, config.substeps);
    let loss = eval(theta);
    let mut grad = vec![0.0; theta.len()];
    let mut th = theta.to_vec();
    for i in 0..theta.len() {
        th[i] = theta[i] + FD_STEP;
        let up = eval(&th);
        th[i] = theta[i] - FD_STEP;
        let down = eval(&th);
        th[i] = theta[i];
        grad[i] = (up - down) / (2.0 * FD_STEP);
    }
    (loss, grad)
}

fn batch_gradient(
    segments: &[&TrainingSegment],
    base: &VehicleParams,
    ids: &[ParamId],
    theta: &[f64],
    config: &SysIdConfig,
) -> Vec<f64> {
    let one = |s: &&TrainingSegment| match config.gradient_mode {
        GradientMode::Reverse => segment_gradient_reverse(s, base, ids, theta, config).1,
        GradientMode::FiniteDifference => segment_gradient_fd(s, base, ids, theta, config).1,
    };
    let grads: Vec<Vec<f64>> = if config.parallel {
        segments.par_iter().map(one).collect()
    } else {
        segments.iter().map(one).collect()
    };
    let mut total = vec![0.0; theta.len()];
    for g in &grads {
        for (t, v) in total.iter_mut().zip(g) {
            *t += v;
        }
    }
    let n = grads.len().max(1) as f64;
    total.iter_mut().for_each(|v| *v /= n);
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Parameters with the lowest recorded loss.
    pub params: VehicleParams,
    /// Mean loss over all segments: entry 0 at the initial parameters,
    /// entry `e` after epoch `e`.
    pub history: Vec<f64>,
    pub best_epoch: usize,
}

impl FitResult {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.history.iter().enumerate() {
            out.push_str(&format!("{e},{l:?}\n"));
        }
        out
    }
}

/// Divergence test window and factor.
const DIVERGENCE_WINDOW: usize = 20;
const DIVERGENCE_FACTOR: f64 = 10.0;

/// True when the loss rose at each of the last `DIVERGENCE_WINDOW` epochs
/// and grew by at least `DIVERGENCE_FACTOR` overall.
fn diverged(history: &[f64]) -> bool {
    let n = history.len();
    if n <= DIVERGENCE_WINDOW {
        return false;
    }
    let w = &history[n - 1 - DIVERGENCE_WINDOW..];
    w.windows(2).all(|p| p[1] > p[0]) && w[DIVERGENCE_WINDOW] > DIVERGENCE_FACTOR * w[0]
}

/// AdamW over the log of `config.fit_params`, mini-batched over shuffled
/// segments. Returns the best parameters seen.
pub fn fit(segments: &[TrainingSegment], init: &VehicleParams, config: &SysIdConfig) -> Result<FitResult> {
    config.validate()?;
    init.validate()?;
    if segments.is_empty() {
        return Err(Error::Config("system identification needs at least one segment".into()));
    }
    let ids = &config.fit_params;
    let mut theta: Vec<f64> = ids.iter().map(|&id| init.get(id).ln()).collect();
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Config("fitted parameters must be positive".into()));
    }
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut step = 0i32;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..segments.len()).collect();

    let mut history = vec![mean_loss(segments, init, ids, &theta, config)];
    let mut best = (history[0], *init, 0);
    for epoch in 1..=config.epochs {
        let lr = config.lr_at(epoch - 1);
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainingSegment> = chunk.iter().map(|&i| &segments[i]).collect();
            let g = batch_gradient(&batch, init, ids, &theta, config);
            step += 1;
            let bc1 = 1.0 - config.beta1.powi(step);
            let bc2 = 1.0 - config.beta2.powi(step);
            for i in 0..theta.len() {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                theta[i] -= lr * (mh / (vh.sqrt() + 1e-8) + config.weight_decay * theta[i]);
            }
        }
        let loss = mean_loss(segments, init, ids, &theta, config);
        history.push(loss);
        if loss < best.0 {
            best = (loss, with_log_params(init, ids, &theta), epoch);
        }
        if !loss.is_finite() || diverged(&history) {
            return Err(Error::Divergence { epoch, loss });
        }
    }
    Ok(FitResult {
        params: best.1,
        history,
        best_epoch: best.2,
    })
}

/// Log → velocities → segments, using the config's filter and horizon.
pub fn prepare_segments(log: &DriveLog, config: &SysIdConfig) -> Result<Vec<TrainingSegment>> {
    let vel = estimate_velocities(log, config.savgol_window, config.savgol_order)?;
    Ok(make_segments(log, &vel, config.horizon))
}
