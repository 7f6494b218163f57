//! Niceness traces, the squared-deviation intrinsic reward with batch
//! normalization, the learned niceness network (V / Q / policy estimate), its
//! TD(lambda) training, and the KL policy-imitation penalty.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{log_softmax, softmax, ForwardCache, Grads, Mlp};
use crate::optim::RmsProp;

/// Which niceness signal an imitator matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NicenessSource {
    /// Hand-coded environment metric (defections / contributions / sus).
    MetricMatching,
    /// Learned advantage (Q - V) from the niceness network.
    NicenessNetwork,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReciprocityConfig {
    /// Intrinsic reward weight: target mean |scaled intrinsic| per batch.
    pub c_im: f64,
    /// Niceness-trace decay (imitation memory).
    pub gamma_im: f64,
    /// Policy-imitation KL weight.
    pub c_kl: f64,
    /// Niceness-network return discount.
    pub gamma_nn: f64,
    /// Niceness-network TD(lambda) mixing parameter.
    pub lambda_nn: f64,
    /// Learning rate for the niceness network's own optimizer.
    pub niceness_learning_rate: f64,
    /// Floor for the batch normalizer (guards all-zero batches).
    pub epsilon: f64,
    /// Alternative normalizer: mean |env + intrinsic| instead of mean |intrinsic|.
    pub normalize_over_total: bool,
}

impl Default for ReciprocityConfig {
    fn default() -> Self {
        ReciprocityConfig {
            c_im: 0.1,
            gamma_im: 0.95,
            c_kl: 0.0,
            gamma_nn: 0.99,
            lambda_nn: 0.95,
            niceness_learning_rate: 1e-4,
            epsilon: 1e-8,
            normalize_over_total: false,
        }
    }
}

impl ReciprocityConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_im", self.c_im),
            ("c_kl", self.c_kl),
            ("niceness_learning_rate", self.niceness_learning_rate),
            ("epsilon", self.epsilon),
        ] {
            if v < 0.0 {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.gamma_im > 0.0 && self.gamma_im < 1.0) {
            return Err(Error::Config("gamma_im must be in (0,1)".into()));
        }
        for (name, v) in [("gamma_nn", self.gamma_nn), ("lambda_nn", self.lambda_nn)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must be in (0,1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Running discounted niceness N(T): `value <- decay * value + increment`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NicenessTrace {
    value: f64,
    decay: f64,
}

impl NicenessTrace {
    pub fn new(decay: f64) -> Self {
        NicenessTrace { value: 0.0, decay }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn update(&mut self, increment: f64) {
        self.value = self.decay * self.value + increment;
    }

    pub fn reset(&mut self) {
        self.value = 0.0;
    }
}

/// Intrinsic reward: negative squared deviation between the imitator's and
/// the innovator's niceness. Zero exactly at perfect matching.
pub fn intrinsic_reward(n_im: f64, n_inv: f64) -> f64 {
    let d = n_im - n_inv;
    -(d * d)
}

/// Combines environment and intrinsic rewards so the scaled intrinsic term
/// accounts for a mean absolute contribution of `c_im` per batch:
/// `r = r_env + c_im * r_int / mu`, with `mu` floored at `epsilon`.
pub fn normalize_intrinsic(
    env_rewards: &[f64],
    intrinsic: &[f64],
    c_im: f64,
    epsilon: f64,
    normalize_over_total: bool,
) -> Vec<f64> {
    debug_assert_eq!(env_rewards.len(), intrinsic.len());
    let n = intrinsic.len().max(1) as f64;
    let mu_raw = if normalize_over_total {
        env_rewards.iter().zip(intrinsic.iter()).map(|(e, i)| (e + i).abs()).sum::<f64>() / n
    } else {
        intrinsic.iter().map(|v| v.abs()).sum::<f64>() / n
    };
    let mu = mu_raw.max(epsilon);
    env_rewards
        .iter()
        .zip(intrinsic.iter())
        .map(|(e, i)| e + c_im * i / mu)
        .collect()
}

/// Per-step running niceness over a stream of increments.
///
/// With `per_event` set, the trace decays only on steps where an event
/// occurred (the per-eating-event variant); otherwise it decays every step.
pub fn running_niceness(
    increments: &[f64],
    events: &[bool],
    decay: f64,
    per_event: bool,
) -> Vec<f64> {
    let mut trace = NicenessTrace::new(decay);
    increments
        .iter()
        .zip(events.iter())
        .map(|(&inc, &ev)| {
            if !per_event || ev {
                trace.update(inc);
            }
            trace.value()
        })
        .collect()
}

/// Niceness of one action: the learned advantage Q(s,a) - V(s).
pub fn action_niceness(v: f64, q_action: f64) -> f64 {
    q_action - v
}

/// KL(p || q) loss for policy imitation plus its gradient with respect to the
/// imitator's logits. The target is a constant: no gradient flows into the
/// estimated innovator policy.
pub fn kl_imitation_loss(
    pi_im_logits: &[f64],
    pi_inv_est_logits: &[f64],
    c_kl: f64,
) -> (f64, Vec<f64>) {
    let lp = log_softmax(pi_im_logits);
    let lq = log_softmax(pi_inv_est_logits);
    let kl: f64 = lp.iter().zip(lq.iter()).map(|(&a, &b)| a.exp() * (a - b)).sum();
    let grad = lp
        .iter()
        .zip(lq.iter())
        .map(|(&a, &b)| c_kl * a.exp() * ((a - b) - kl))
        .collect();
    (c_kl * kl, grad)
}

pub const NICENESS_VALUE_HEAD: usize = 0;
pub const NICENESS_Q_HEAD: usize = 1;
pub const NICENESS_PI_HEAD: usize = 2;

/// Estimator of the innovator's state value, action values and policy, all
/// with respect to the imitator's return. Trained on innovator trajectories,
/// evaluated on both innovator and imitator trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct NicenessNet {
    pub net: Mlp,
    pub n_actions: usize,
}

impl NicenessNet {
    pub fn new<R: Rng>(obs_len: usize, n_actions: usize, hidden: &[usize], rng: &mut R) -> Self {
        let net = Mlp::new(
            obs_len,
            hidden,
            &[("value", 1), ("q", n_actions), ("policy_est", n_actions)],
            rng,
        );
        NicenessNet { net, n_actions }
    }

    pub fn zeroed(obs_len: usize, n_actions: usize, hidden: &[usize]) -> Self {
        let net = Mlp::zeroed(
            obs_len,
            hidden,
            &[("value", 1), ("q", n_actions), ("policy_est", n_actions)],
        );
        NicenessNet { net, n_actions }
    }

    /// Forward pass: `(V, Q per action, policy-estimate logits)`.
    pub fn forward(&self, features: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let mut cache = ForwardCache::default();
        self.net.forward(features, &mut cache);
        let v = cache.head_out[NICENESS_VALUE_HEAD][0];
        let q = cache.head_out[NICENESS_Q_HEAD].clone();
        let pi = cache.head_out[NICENESS_PI_HEAD].clone();
        if !v.is_finite()
            || q.iter().any(|x| !x.is_finite())
            || pi.iter().any(|x| !x.is_finite())
        {
            return Err(Error::Numerical("niceness network produced non-finite output".into()));
        }
        Ok((v, q, pi))
    }

    /// Advantage-style niceness increment for one (state, action) pair.
    pub fn increment(&self, features: &[f64], action: usize) -> Result<f64> {
        let (v, q, _) = self.forward(features)?;
        Ok(action_niceness(v, q[action]))
    }
}

/// Per-step niceness increments for a trajectory under the network source.
pub fn network_increments(
    net: &NicenessNet,
    observations: &[Vec<f64>],
    actions: &[usize],
) -> Result<Vec<f64>> {
    if observations.len() != actions.len() {
        return Err(Error::Arity { expected: observations.len(), got: actions.len() });
    }
    observations
        .iter()
        .zip(actions.iter())
        .map(|(obs, &a)| net.increment(obs, a))
        .collect()
}

/// Report from one TD(lambda) niceness-network update.
#[derive(Debug, Clone, Default)]
pub struct TdReport {
    pub value_loss: f64,
    pub q_loss: f64,
    pub policy_ce: f64,
}

/// Forward-view lambda-returns over `rewards` with the current value
/// estimates used for intermediate bootstrapping:
/// `G_t = r_t + gamma * ((1 - lambda) * V_{t+1} + lambda * G_{t+1})`.
pub fn lambda_returns(
    rewards: &[f64],
    values_next: &[f64],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    debug_assert_eq!(values_next.len(), n);
    let mut out = vec![0.0; n];
    let mut g = bootstrap;
    for t in (0..n).rev() {
        g = rewards[t] + gamma * ((1.0 - lambda) * values_next[t] + lambda * g);
        out[t] = g;
    }
    out
}

/// Loss-only counterpart of [`td_lambda_update`] for gradient checking:
/// targets are supplied so they stay constant under parameter perturbation.
pub fn td_loss(
    net: &NicenessNet,
    observations: &[Vec<f64>],
    actions: &[usize],
    targets: &[f64],
) -> f64 {
    let mut cache = ForwardCache::default();
    let mut total = 0.0;
    for ((obs, &a), &g) in observations.iter().zip(actions.iter()).zip(targets.iter()) {
        net.net.forward(obs, &mut cache);
        let v = cache.head_out[NICENESS_VALUE_HEAD][0];
        let q = cache.head_out[NICENESS_Q_HEAD][a];
        let lp = log_softmax(&cache.head_out[NICENESS_PI_HEAD]);
        total += 0.5 * (v - g) * (v - g);
        total += 0.5 * (q - g) * (q - g);
        total += -lp[a];
    }
    total / observations.len() as f64
}

/// One TD(lambda) update of the niceness network from an innovator trajectory
/// segment and the matching imitator reward stream.
///
/// The V head regresses toward the lambda-returns; the Q head regresses the
/// taken action's output toward the same targets (untaken actions receive no
/// gradient); the policy-estimate head takes a cross-entropy step toward the
/// taken innovator actions.
pub fn td_lambda_update(
    net: &mut NicenessNet,
    opt: &mut RmsProp,
    observations: &[Vec<f64>],
    actions: &[usize],
    imitator_rewards: &[f64],
    bootstrap_obs: Option<&[f64]>,
    gamma_nn: f64,
    lambda_nn: f64,
) -> Result<TdReport> {
    let n = observations.len();
    if n == 0 {
        return Err(Error::Arity { expected: 1, got: 0 });
    }
    if actions.len() != n || imitator_rewards.len() != n {
        return Err(Error::Arity { expected: n, got: actions.len().min(imitator_rewards.len()) });
    }

    // Current value estimates for bootstrapping (targets are constants).
    let mut cache = ForwardCache::default();
    let mut values = Vec::with_capacity(n + 1);
    for obs in observations.iter().skip(1) {
        net.net.forward(obs, &mut cache);
        values.push(cache.head_out[NICENESS_VALUE_HEAD][0]);
    }
    let bootstrap = match bootstrap_obs {
        Some(obs) => {
            net.net.forward(obs, &mut cache);
            cache.head_out[NICENESS_VALUE_HEAD][0]
        }
        None => 0.0,
    };
    values.push(bootstrap);
    let targets = lambda_returns(imitator_rewards, &values, bootstrap, gamma_nn, lambda_nn);

    let mut grads = Grads::zeros_like(&net.net);
    let inv_n = 1.0 / n as f64;
    let mut report = TdReport::default();
    for ((obs, &a), &g) in observations.iter().zip(actions.iter()).zip(targets.iter()) {
        net.net.forward(obs, &mut cache);
        let v = cache.head_out[NICENESS_VALUE_HEAD][0];
        let q = cache.head_out[NICENESS_Q_HEAD][a];
        let pi_logits = &cache.head_out[NICENESS_PI_HEAD];
        let probs = softmax(pi_logits);
        let lp = log_softmax(pi_logits);

        report.value_loss += 0.5 * (v - g) * (v - g) * inv_n;
        report.q_loss += 0.5 * (q - g) * (q - g) * inv_n;
        report.policy_ce += -lp[a] * inv_n;

        let d_value = vec![(v - g) * inv_n];
        let mut d_q = vec![0.0; net.n_actions];
        d_q[a] = (q - g) * inv_n;
        let d_pi: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(k, &p)| (p - if k == a { 1.0 } else { 0.0 }) * inv_n)
            .collect();
        net.net.backward(obs, &cache, &[d_value, d_q, d_pi], &mut grads);
    }
    if !grads.is_finite() {
        return Err(Error::Numerical("non-finite gradient in niceness-network update".into()));
    }
    opt.step(&mut net.net, &grads);
    Ok(report)
}
