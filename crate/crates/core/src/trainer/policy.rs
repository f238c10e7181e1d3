//! Actor-critic network and the clipped PPO objective.

use rand::Rng;
use rand_distr::StandardNormal;

use super::nn::{Mlp, MlpCache, Real};
use crate::error::{Error, Result};

pub const ACTION_DIM: usize = 2;
const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7;

/// Actor (tanh-squashed means), state-independent log std and critic,
/// stored in one flat parameter vector: actor, critic, log std.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    actor: Mlp,
    critic: Mlp,
    params: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput<T> {
    pub mean: [T; ACTION_DIM],
    pub log_std: [T; ACTION_DIM],
    pub value: T,
}

/// Scratch buffers for batched passes.
#[derive(Debug, Clone, Default)]
pub struct Workspace<T> {
    actor: MlpCache<T>,
    critic: MlpCache<T>,
    grad_mean: Vec<T>,
    grad_value: Vec<T>,
}

/// One mini-batch of the rollout buffer, row-major.
#[derive(Debug, Clone, Copy)]
pub struct Minibatch<'a, T> {
    pub obs: &'a [T],
    /// Unclipped sampled actions (B×2).
    pub actions: &'a [T],
    pub old_log_prob: &'a [T],
    pub advantages: &'a [T],
    pub returns: &'a [T],
}

impl<T> Minibatch<'_, T> {
    pub fn len(&self) -> usize {
        self.old_log_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_prob.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefs {
    pub clip_epsilon: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean of `old_log_prob − log_prob`.
    pub approx_kl: f64,
    pub clip_frac: f64,
}

/// Diagonal Gaussian log density.
pub fn gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&x, &m), &ls)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_TAU
        })
        .sum()
}

/// Draws `mean + σ·ε`; returns the clipped action, the raw sample and the
/// log density of the raw sample.
pub fn sample_action<R: Rng + ?Sized>(mean: [f64; 2], log_std: [f64; 2], rng: &mut R) -> ([f64; 2], [f64; 2], f64) {
    let mut raw = [0.0; 2];
    for d in 0..2 {
        let eps: f64 = rng.sample(StandardNormal);
        raw[d] = mean[d] + log_std[d].exp() * eps;
    }
    let lp = gaussian_log_prob(&raw, &mean, &log_std);
    (raw.map(|a| a.clamp(-1.0, 1.0)), raw, lp)
}

impl<T: Real> Policy<T> {
    /// Network with all weights, biases and log std at zero.
    pub fn zeros(obs_dim: usize, actor_hidden: &[usize], critic_hidden: &[usize]) -> Self {
        let sizes = |hidden: &[usize], out: usize| {
            let mut s = vec![obs_dim];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let actor = Mlp::new(&sizes(actor_hidden, ACTION_DIM));
        let critic = Mlp::new(&sizes(critic_hidden, 1));
        let n = actor.param_len() + critic.param_len() + ACTION_DIM;
        Self { actor, critic, params: vec![T::ZERO; n] }
    }

    /// Orthogonal initialization: hidden gain √2, actor head 0.01, critic head 1.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        actor_hidden: &[usize],
        critic_hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(obs_dim, actor_hidden, critic_hidden);
        let (a, c) = (p.actor.param_len(), p.critic.param_len());
        let sqrt2 = std::f64::consts::SQRT_2;
        p.actor.init(&mut p.params[..a], sqrt2, 0.01, rng);
        p.critic.init(&mut p.params[a..a + c], sqrt2, 1.0, rng);
        p.params[a + c..].iter_mut().for_each(|v| *v = T::from_f64(init_log_std));
        p
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn split(&self) -> (&[T], &[T], &[T]) {
        let a = self.actor.param_len();
        let c = self.critic.param_len();
        (&self.params[..a], &self.params[a..a + c], &self.params[a + c..])
    }

    pub fn log_std(&self) -> [T; ACTION_DIM] {
        let (_, _, ls) = self.split();
        [ls[0], ls[1]]
    }

    pub fn check_obs(&self, len: usize) -> Result<()> {
        if len != self.obs_dim() {
            return Err(Error::DimensionMismatch { expected: self.obs_dim(), got: len });
        }
        Ok(())
    }

    pub fn forward(&self, obs: &[T]) -> Result<PolicyOutput<T>> {
        self.check_obs(obs.len())?;
        let mut ws = Workspace::default();
        let (means, values) = self.forward_batch(obs, 1, &mut ws);
        Ok(PolicyOutput {
            mean: [means[0], means[1]],
            log_std: self.log_std(),
            value: values[0],
        })
    }

    /// Means (B×2) and values (B) for `batch` observation rows.
    pub fn forward_batch(&self, obs: &[T], batch: usize, ws: &mut Workspace<T>) -> (Vec<T>, Vec<T>) {
        let (pa, pc, _) = self.split();
        self.actor.forward(pa, obs, batch, &mut ws.actor);
        self.critic.forward(pc, obs, batch, &mut ws.critic);
        let means = ws.actor.output().iter().map(|&z| z.tanh()).collect();
        (means, ws.critic.output().to_vec())
    }

    /// Values only.
    pub fn values(&self, obs: &[T], batch: usize, ws: &mut Workspace<T>) -> Vec<T> {
        let (_, pc, _) = self.split();
        self.critic.forward(pc, obs, batch, &mut ws.critic);
        ws.critic.output().to_vec()
    }

    /// PPO loss on a mini-batch; when `grad` is given, adds the loss
    /// gradient to it.
    ///
    /// Loss = −mean(min(ρA, clip(ρ)A)) + c_v·mean((V − R)²) − c_e·H.
    pub fn ppo_loss(&self, mb: &Minibatch<T>, coefs: &LossCoefs, ws: &mut Workspace<T>, grad: Option<&mut [T]>) -> LossStats {
        let b = mb.len();
        let (means, values) = self.forward_batch(mb.obs, b, ws);
        let ls = self.log_std().map(|v| v.to_f64());
        let inv_var = ls.map(|l| (-2.0 * l).exp());
        let bf = b as f64;
        let (lo, hi) = (1.0 - coefs.clip_epsilon, 1.0 + coefs.clip_epsilon);

        let mut stats = LossStats::default();
        ws.grad_mean.clear();
        ws.grad_mean.resize(b * ACTION_DIM, T::ZERO);
        ws.grad_value.clear();
        ws.grad_value.resize(b, T::ZERO);
        let mut g_ls = [0.0f64; ACTION_DIM];
        for i in 0..b {
            let mut lp = 0.0;
            let mut diff = [0.0; ACTION_DIM];
            for d in 0..ACTION_DIM {
                diff[d] = mb.actions[i * 2 + d].to_f64() - means[i * 2 + d].to_f64();
                lp += -0.5 * diff[d] * diff[d] * inv_var[d] - ls[d] - HALF_LN_TAU;
            }
            let old = mb.old_log_prob[i].to_f64();
            let adv = mb.advantages[i].to_f64();
            let ratio = (lp - old).exp();
            let clipped = ratio.clamp(lo, hi);
            let unclipped_term = ratio * adv;
            let clipped_term = clipped * adv;
            stats.policy_loss -= unclipped_term.min(clipped_term) / bf;
            stats.approx_kl += (old - lp) / bf;
            if (ratio - 1.0).abs() > coefs.clip_epsilon {
                stats.clip_frac += 1.0 / bf;
            }
            // Gradient flows only when the unclipped term is the minimum.
            let d_lp = if unclipped_term <= clipped_term { -adv * ratio / bf } else { 0.0 };
            for d in 0..ACTION_DIM {
                let mu = means[i * 2 + d].to_f64();
                let d_mu = d_lp * diff[d] * inv_var[d];
                ws.grad_mean[i * 2 + d] = T::from_f64(d_mu * (1.0 - mu * mu));
                g_ls[d] += d_lp * (diff[d] * diff[d] * inv_var[d] - 1.0);
            }
            let err = values[i].to_f64() - mb.returns[i].to_f64();
            stats.value_loss += err * err / bf;
            ws.grad_value[i] = T::from_f64(coefs.value_coef * 2.0 * err / bf);
        }
        stats.entropy = ls.iter().map(|l| l + 0.5 + HALF_LN_TAU).sum();
        stats.total = stats.policy_loss + coefs.value_coef * stats.value_loss - coefs.entropy_coef * stats.entropy;

        if let Some(grad) = grad {
            let a = self.actor.param_len();
            let c = self.critic.param_len();
            let (pa, pc, _) = self.split();
            let (ga, rest) = grad.split_at_mut(a);
            let (gc, gl) = rest.split_at_mut(c);
            self.actor.backward(pa, &mut ws.actor, &ws.grad_mean, ga);
            self.critic.backward(pc, &mut ws.critic, &ws.grad_value, gc);
            for d in 0..ACTION_DIM {
                gl[d] += T::from_f64(g_ls[d] - coefs.entropy_coef);
            }
        }
        stats
    }

    /// Same network in another precision.
    pub fn cast<U: Real>(&self) -> Policy<U> {
        Policy {
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            params: self.params.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// Replaces the parameter vector; its length must match.
    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch { expected: self.params.len(), got: params.len() });
        }
        self.params = params;
        Ok(())
    }
}
