//! PPO training of the racing policy.

mod adam;
mod checkpoint;
mod gae;
mod nn;
mod policy;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::{Checkpoint, CheckpointMeta, MAGIC, VERSION};
pub use gae::{compute_gae, normalize};
pub use nn::{leaky_relu, Mlp, MlpCache, Real, LEAKY_SLOPE};
pub use policy::{gaussian_log_prob, sample_action, LossCoefs, LossStats, Minibatch, Policy, PolicyOutput, Workspace, ACTION_DIM};

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::VehicleParams;
use crate::env::{EnvConfig, VecEnv};
use crate::error::{Error, Result};
use crate::kv::{self, KvFile};
use crate::track::TrackDefinition;

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub n_envs: usize,
    pub n_steps: usize,
    pub batch_size: usize,
    pub epochs_per_update: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub total_steps: u64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub init_std: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Updates between periodic checkpoints (0 disables them).
    pub checkpoint_every: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            n_envs: 400,
            n_steps: 1024,
            batch_size: 1024,
            epochs_per_update: 10,
            lr_start: 1e-3,
            lr_end: 1e-4,
            total_steps: 120_000_000,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            seed: 0,
            init_std: 0.3,
            actor_hidden: vec![256, 256],
            critic_hidden: vec![512, 512],
            checkpoint_every: 10,
        }
    }
}

const KEYS: &[&str] = &[
    "gamma",
    "gae_lambda",
    "clip_epsilon",
    "n_envs",
    "n_steps",
    "batch_size",
    "epochs_per_update",
    "lr_start",
    "lr_end",
    "total_steps",
    "entropy_coef",
    "value_coef",
    "max_grad_norm",
    "seed",
    "init_std",
    "actor_hidden",
    "critic_hidden",
    "checkpoint_every",
];

fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Config(format!("invalid layer size `{t}`"))))
        .collect()
}

fn fmt_sizes(v: &[usize]) -> String {
    v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
}

impl PpoConfig {
    /// Laptop-scale budget: 16 envs × 256 steps, 2M steps.
    pub fn desk() -> Self {
        Self {
            n_envs: 16,
            n_steps: 256,
            total_steps: 2_000_000,
            ..Self::default()
        }
    }

    pub fn steps_per_update(&self) -> u64 {
        (self.n_envs * self.n_steps) as u64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be positive");
        }
        if self.n_envs == 0 || self.n_steps == 0 || self.batch_size == 0 {
            return bad("n_envs, n_steps and batch_size must be positive");
        }
        if !(self.lr_start >= self.lr_end && self.lr_end > 0.0) {
            return bad("learning rates must satisfy lr_start >= lr_end > 0");
        }
        if !(self.init_std > 0.0 && self.max_grad_norm > 0.0 && self.value_coef >= 0.0 && self.entropy_coef >= 0.0) {
            return bad("init_std and max_grad_norm must be positive, loss coefficients non-negative");
        }
        if self.actor_hidden.is_empty() || self.critic_hidden.is_empty() || self.actor_hidden.iter().chain(&self.critic_hidden).any(|&s| s == 0) {
            return bad("hidden layer sizes must be non-empty and positive");
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &KvFile) -> Result<()> {
        kv.check_known(KEYS)?;
        kv.set_if("gamma", &mut self.gamma)?;
        kv.set_if("gae_lambda", &mut self.gae_lambda)?;
        kv.set_if("clip_epsilon", &mut self.clip_epsilon)?;
        kv.set_if("n_envs", &mut self.n_envs)?;
        kv.set_if("n_steps", &mut self.n_steps)?;
        kv.set_if("batch_size", &mut self.batch_size)?;
        kv.set_if("epochs_per_update", &mut self.epochs_per_update)?;
        kv.set_if("lr_start", &mut self.lr_start)?;
        kv.set_if("lr_end", &mut self.lr_end)?;
        if let Some(v) = kv.get::<f64>("total_steps")? {
            if !(v >= 0.0 && v.fract() == 0.0) {
                return Err(Error::Config(format!("total_steps must be a non-negative integer, got {v}")));
            }
            self.total_steps = v as u64;
        }
        kv.set_if("entropy_coef", &mut self.entropy_coef)?;
        kv.set_if("value_coef", &mut self.value_coef)?;
        kv.set_if("max_grad_norm", &mut self.max_grad_norm)?;
        kv.set_if("seed", &mut self.seed)?;
        kv.set_if("init_std", &mut self.init_std)?;
        kv.set_if("checkpoint_every", &mut self.checkpoint_every)?;
        if let Some(s) = kv.get_str("actor_hidden") {
            self.actor_hidden = parse_sizes(s)?;
        }
        if let Some(s) = kv.get_str("critic_hidden") {
            self.critic_hidden = parse_sizes(s)?;
        }
        self.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Self::default();
        c.apply_kv(&KvFile::read(path)?)?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        kv::render([
            ("gamma", kv::fmt_f64(self.gamma)),
            ("gae_lambda", kv::fmt_f64(self.gae_lambda)),
            ("clip_epsilon", kv::fmt_f64(self.clip_epsilon)),
            ("n_envs", self.n_envs.to_string()),
            ("n_steps", self.n_steps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs_per_update", self.epochs_per_update.to_string()),
            ("lr_start", kv::fmt_f64(self.lr_start)),
            ("lr_end", kv::fmt_f64(self.lr_end)),
            ("total_steps", self.total_steps.to_string()),
            ("entropy_coef", kv::fmt_f64(self.entropy_coef)),
            ("value_coef", kv::fmt_f64(self.value_coef)),
            ("max_grad_norm", kv::fmt_f64(self.max_grad_norm)),
            ("seed", self.seed.to_string()),
            ("init_std", kv::fmt_f64(self.init_std)),
            ("actor_hidden", fmt_sizes(&self.actor_hidden)),
            ("critic_hidden", fmt_sizes(&self.critic_hidden)),
            ("checkpoint_every", self.checkpoint_every.to_string()),
        ])
    }
}

/// Linear decay from `lr_start` at progress 0 to `lr_end` at progress 1.
pub fn lr_schedule(progress: f64, config: &PpoConfig) -> f64 {
    let p = progress.clamp(0.0, 1.0);
    config.lr_start + (config.lr_end - config.lr_start) * p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub update: u64,
    pub env_steps: u64,
    /// Mean per-step reward over the rollout.
    pub mean_reward: f64,
    /// Mean progress (m) of the episodes that ended during the rollout;
    /// carried over from the previous row when none ended.
    pub mean_ep_progress: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_frac: f64,
    pub lr: f64,
}

pub const TRAIN_LOG_HEADER: &str = "update,env_steps,mean_reward,mean_ep_progress,policy_loss,value_loss,clip_frac,lr";

impl TrainLogRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.update, self.env_steps, self.mean_reward, self.mean_ep_progress, self.policy_loss, self.value_loss, self.clip_frac, self.lr
        )
    }
}

pub fn train_log_csv(rows: &[TrainLogRow]) -> String {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

/// Rollout storage, step-major (`t·n_envs + env`).
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub obs: Vec<f32>,
    pub actions: Vec<f32>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub next_values: Vec<f64>,
    pub terminated: Vec<bool>,
    pub ends: Vec<bool>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn clear(&mut self) {
        self.obs.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.rewards.clear();
        self.values.clear();
        self.next_values.clear();
        self.terminated.clear();
        self.ends.clear();
    }

    /// Per-env GAE, then advantages normalized over the whole buffer.
    pub fn advantages(&self, n_envs: usize, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut adv = vec![0.0; n];
        let mut ret = vec![0.0; n];
        for e in 0..n_envs {
            let idx: Vec<usize> = (e..n).step_by(n_envs).collect();
            let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let pickb = |v: &[bool]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let (a, r) = compute_gae(
                &pick(&self.rewards),
                &pick(&self.values),
                &pick(&self.next_values),
                &pickb(&self.terminated),
                &pickb(&self.ends),
                gamma,
                lambda,
            );
            for (k, &i) in idx.iter().enumerate() {
                adv[i] = a[k];
                ret[i] = r[k];
            }
        }
        normalize(&mut adv);
        (adv, ret)
    }
}

/// Collects rollouts on a [`VecEnv`] and applies PPO updates.
pub struct Trainer {
    config: PpoConfig,
    envs: VecEnv,
    policy: Policy<f32>,
    adam: Adam<f32>,
    rng: ChaCha8Rng,
    obs: Vec<f32>,
    env_steps: u64,
    updates: u64,
    last_progress: f64,
    buffer: RolloutBuffer,
    ws: Workspace<f32>,
    fingerprint: String,
}

impl Trainer {
    pub fn new(mut envs: VecEnv, config: PpoConfig) -> Result<Self> {
        config.validate()?;
        if envs.len() != config.n_envs {
            return Err(Error::Config(format!("expected {} envs, got {}", config.n_envs, envs.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dim = envs.obs_dim();
        let policy = Policy::new(dim, &config.actor_hidden, &config.critic_hidden, config.init_std.ln(), &mut rng);
        let adam = Adam::new(policy.params().len());
        let obs = envs.reset_all();
        let fingerprint = config.to_text();
        Ok(Self {
            config,
            envs,
            policy,
            adam,
            rng,
            obs,
            env_steps: 0,
            updates: 0,
            last_progress: 0.0,
            buffer: RolloutBuffer::default(),
            ws: Workspace::default(),
            fingerprint,
        })
    }

    /// Continues from a checkpoint. Environments start from fresh resets
    /// and the sampling stream is re-derived from the seed and update count.
    pub fn resume(envs: VecEnv, config: PpoConfig, ckpt: Checkpoint) -> Result<Self> {
        let mut t = Self::new(envs, config)?;
        t.policy.check_obs(ckpt.meta.obs_dim)?;
        if ckpt.policy.actor().sizes() != t.policy.actor().sizes() || ckpt.policy.critic().sizes() != t.policy.critic().sizes() {
            return Err(Error::Config("checkpoint network shape differs from the configured one".into()));
        }
        t.policy = ckpt.policy;
        t.adam = ckpt.adam;
        t.adam.step = ckpt.meta.adam_step;
        t.env_steps = ckpt.meta.env_steps;
        t.updates = ckpt.meta.updates;
        t.rng = ChaCha8Rng::seed_from_u64(crate::env::stream_seed(t.config.seed, t.updates));
        Ok(t)
    }

    /// Extra text stored in checkpoints next to the PPO configuration.
    pub fn set_fingerprint(&mut self, extra: &str) {
        self.fingerprint = format!("{}{extra}", self.config.to_text());
    }

    pub fn policy(&self) -> &Policy<f32> {
        &self.policy
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            meta: CheckpointMeta {
                obs_dim: self.policy.obs_dim(),
                actor_hidden: self.config.actor_hidden.clone(),
                critic_hidden: self.config.critic_hidden.clone(),
                env_steps: self.env_steps,
                updates: self.updates,
                adam_step: self.adam.step,
                fingerprint: self.fingerprint.clone(),
            },
            policy: self.policy.clone(),
            adam: self.adam.clone(),
        }
    }

    /// True while another full rollout fits in the step budget.
    pub fn has_budget(&self) -> bool {
        self.env_steps + self.config.steps_per_update() <= self.config.total_steps
    }

    fn collect(&mut self) -> Result<(f64, f64)> {
        let n_envs = self.config.n_envs;
        let dim = self.policy.obs_dim();
        self.buffer.clear();
        let mut progress_sum = 0.0;
        let mut finished = 0usize;
        let log_std = self.policy.log_std().map(|v| v as f64);
        let mut actions = vec![[0.0; 2]; n_envs];
        for _ in 0..self.config.n_steps {
            let (means, values) = self.policy.forward_batch(&self.obs, n_envs, &mut self.ws);
            let t0 = self.buffer.len();
            for i in 0..n_envs {
                let mean = [means[2 * i] as f64, means[2 * i + 1] as f64];
                let (a, raw, lp) = sample_action(mean, log_std, &mut self.rng);
                actions[i] = a;
                self.buffer.actions.extend(raw.map(|v| v as f32));
                self.buffer.log_probs.push(lp);
                self.buffer.values.push(values[i] as f64);
            }
            // The previous step's non-final successors are these values.
            if t0 >= n_envs {
                for i in 0..n_envs {
                    if !self.buffer.ends[t0 - n_envs + i] {
                        self.buffer.next_values[t0 - n_envs + i] = values[i] as f64;
                    }
                }
            }
            self.buffer.obs.extend_from_slice(&self.obs);
            let results = self.envs.step(&actions)?;
            let mut truncated_obs = Vec::new();
            let mut truncated_idx = Vec::new();
            for (i, r) in results.iter().enumerate() {
                self.buffer.rewards.push(r.reward);
                self.buffer.terminated.push(r.terminated);
                self.buffer.ends.push(r.done());
                self.buffer.next_values.push(0.0);
                if r.done() {
                    progress_sum += r.info.episode_progress;
                    finished += 1;
                }
                if r.truncated {
                    truncated_obs.extend_from_slice(r.final_observation.as_deref().unwrap_or(&r.observation));
                    truncated_idx.push(t0 + i);
                }
                self.obs[i * dim..(i + 1) * dim].copy_from_slice(&r.observation);
            }
            if !truncated_idx.is_empty() {
                let v = self.policy.values(&truncated_obs, truncated_idx.len(), &mut self.ws);
                for (k, &j) in truncated_idx.iter().enumerate() {
                    self.buffer.next_values[j] = v[k] as f64;
                }
            }
        }
        let last = self.policy.values(&self.obs, n_envs, &mut self.ws);
        let t0 = self.buffer.len() - n_envs;
        for i in 0..n_envs {
            if !self.buffer.ends[t0 + i] {
                self.buffer.next_values[t0 + i] = last[i] as f64;
            }
        }
        self.env_steps += self.buffer.len() as u64;
        let mean_reward = self.buffer.rewards.iter().sum::<f64>() / self.buffer.len() as f64;
        if finished > 0 {
            self.last_progress = progress_sum / finished as f64;
        } else if self.updates == 0 {
            // No episode finished yet: report the progress so far.
            self.last_progress = self.envs.envs().iter().map(|e| e.info().episode_progress).sum::<f64>() / n_envs as f64;
        }
        Ok((mean_reward, self.last_progress))
    }

    /// One PPO update on the current buffer.
    pub fn ppo_update(&mut self, lr: f64) -> Result<LossStats> {
        let n = self.buffer.len();
        let dim = self.policy.obs_dim();
        let (adv, ret) = self.buffer.advantages(self.config.n_envs, self.config.gamma, self.config.gae_lambda);
        let coefs = LossCoefs {
            clip_epsilon: self.config.clip_epsilon,
            value_coef: self.config.value_coef,
            entropy_coef: self.config.entropy_coef,
        };
        let mut order: Vec<usize> = (0..n).collect();
        let mut grad = vec![0.0f32; self.policy.params().len()];
        let mut sum = LossStats::default();
        let mut batches = 0usize;
        let (mut obs, mut act, mut olp, mut badv, mut bret) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..self.config.epochs_per_update {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.config.batch_size) {
                obs.clear();
                act.clear();
                olp.clear();
                badv.clear();
                bret.clear();
                for &i in chunk {
                    obs.extend_from_slice(&self.buffer.obs[i * dim..(i + 1) * dim]);
                    act.extend_from_slice(&self.buffer.actions[2 * i..2 * i + 2]);
                    olp.push(self.buffer.log_probs[i] as f32);
                    badv.push(adv[i] as f32);
                    bret.push(ret[i] as f32);
                }
                let mb = Minibatch { obs: &obs, actions: &act, old_log_prob: &olp, advantages: &badv, returns: &bret };
                grad.iter_mut().for_each(|g| *g = 0.0);
                let st = self.policy.ppo_loss(&mb, &coefs, &mut self.ws, Some(&mut grad));
                if !st.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    let ls = self.policy.log_std();
                    return Err(Error::Training(format!(
                        "non-finite loss at update {} (policy {:.4e}, value {:.4e}, entropy {:.4e}, log_std [{:.3}, {:.3}], lr {lr:.3e})",
                        self.updates + 1,
                        st.policy_loss,
                        st.value_loss,
                        st.entropy,
                        ls[0],
                        ls[1]
                    )));
                }
                clip_grad_norm(&mut grad, self.config.max_grad_norm);
                self.adam.update(self.policy.params_mut(), &grad, lr);
                sum.total += st.total;
                sum.policy_loss += st.policy_loss;
                sum.value_loss += st.value_loss;
                sum.entropy += st.entropy;
                sum.approx_kl += st.approx_kl;
                sum.clip_frac += st.clip_frac;
                batches += 1;
            }
        }
        let k = batches.max(1) as f64;
        Ok(LossStats {
            total: sum.total / k,
            policy_loss: sum.policy_loss / k,
            value_loss: sum.value_loss / k,
            entropy: sum.entropy / k,
            approx_kl: sum.approx_kl / k,
            clip_frac: sum.clip_frac / k,
        })
    }

    /// Collects one rollout and updates the networks.
    pub fn step(&mut self) -> Result<TrainLogRow> {
        let lr = lr_schedule(self.env_steps as f64 / self.config.total_steps.max(1) as f64, &self.config);
        let (mean_reward, mean_ep_progress) = self.collect()?;
        let st = self.ppo_update(lr)?;
        self.updates += 1;
        Ok(TrainLogRow {
            update: self.updates,
            env_steps: self.env_steps,
            mean_reward,
            mean_ep_progress,
            policy_loss: st.policy_loss,
            value_loss: st.value_loss,
            clip_frac: st.clip_frac,
            lr,
        })
    }

    /// Runs updates until the budget is spent, calling `on_update` after each.
    pub fn run(&mut self, mut on_update: impl FnMut(&Trainer, &TrainLogRow) -> Result<()>) -> Result<Vec<TrainLogRow>> {
        let mut rows = Vec::new();
        while self.has_budget() {
            let row = self.step()?;
            on_update(self, &row)?;
            rows.push(row);
        }
        Ok(rows)
    }
}

/// Result of [`train`].
pub struct TrainOutcome {
    pub policy: Policy<f32>,
    pub log: Vec<TrainLogRow>,
}

/// Builds the environments, trains for `ppo.total_steps` and, when
/// `checkpoint_dir` is given, writes `latest.ckpt` every
/// `checkpoint_every` updates plus `final.ckpt` and `train_log.csv`.
pub fn train(
    track: Arc<TrackDefinition>,
    params: VehicleParams,
    env_config: &EnvConfig,
    ppo: &PpoConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    train_from(track, params, env_config, ppo, checkpoint_dir, None, |_| ())
}

/// [`train`] continuing from `resume` when given; `progress` sees every
/// log row as it is produced.
pub fn train_from(
    track: Arc<TrackDefinition>,
    params: VehicleParams,
    env_config: &EnvConfig,
    ppo: &PpoConfig,
    checkpoint_dir: Option<&Path>,
    resume: Option<Checkpoint>,
    mut progress: impl FnMut(&TrainLogRow),
) -> Result<TrainOutcome> {
    let envs = VecEnv::new(track, params, env_config.clone(), ppo.n_envs, crate::env::stream_seed(ppo.seed, u64::MAX))?;
    let mut trainer = match resume {
        Some(ckpt) => Trainer::resume(envs, ppo.clone(), ckpt)?,
        None => Trainer::new(envs, ppo.clone())?,
    };
    trainer.set_fingerprint(&env_config.to_text());
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let every = ppo.checkpoint_every;
    let log = trainer.run(|t, row| {
        progress(row);
        if let Some(dir) = checkpoint_dir {
            if every > 0 && row.update % every == 0 {
                t.checkpoint().save(&dir.join("latest.ckpt"))?;
            }
        }
        Ok(())
    })?;
    if let Some(dir) = checkpoint_dir {
        trainer.checkpoint().save(&dir.join("final.ckpt"))?;
        let path = dir.join("train_log.csv");
        std::fs::write(&path, train_log_csv(&log)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(TrainOutcome { policy: trainer.policy().clone(), log })
}
