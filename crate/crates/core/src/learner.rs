//! Synchronous advantage actor-critic on a feedforward policy/value network.
//!
//! One network per agent: a ReLU trunk over the flattened observation and two
//! linear heads (action logits, state value). Updates are plain policy
//! gradient with the advantage treated as a constant, a squared-error value
//! term, an entropy bonus, and an optional KL penalty toward a fixed target
//! distribution (used by imitators for policy imitation).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{entropy, log_softmax, sample_categorical, softmax, ForwardCache, Grads, Mlp};
use crate::optim::RmsProp;
use crate::reciprocity::kl_imitation_loss;

pub const POLICY_HEAD: usize = 0;
pub const VALUE_HEAD: usize = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    /// Return discount.
    pub discount: f64,
    pub learning_rate: f64,
    pub entropy_weight: f64,
    /// Steps collected before each update (also the normalization batch).
    pub unroll_length: usize,
    /// Unroll segments accumulated per update.
    pub batch_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            discount: 0.99,
            learning_rate: 1e-4,
            entropy_weight: 1e-3,
            unroll_length: 100,
            batch_size: 1,
            hidden_sizes: vec![32, 32],
            rmsprop_decay: 0.99,
            rmsprop_epsilon: 1e-5,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::Config(format!("discount must be in (0,1), got {}", self.discount)));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.unroll_length == 0 || self.batch_size == 0 {
            return Err(Error::Config("unroll_length and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Policy + value network for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub net: Mlp,
    pub n_actions: usize,
}

impl PolicyNet {
    pub fn new<R: Rng>(obs_len: usize, n_actions: usize, hidden: &[usize], rng: &mut R) -> Self {
        let net = Mlp::new(obs_len, hidden, &[("policy", n_actions), ("value", 1)], rng);
        PolicyNet { net, n_actions }
    }

    pub fn forward(&self, obs: &[f64], cache: &mut ForwardCache) -> (Vec<f64>, f64) {
        self.net.forward(obs, cache);
        (cache.head_out[POLICY_HEAD].clone(), cache.head_out[VALUE_HEAD][0])
    }

    /// Samples an action; returns `(action, logits, value)`.
    pub fn act<R: Rng>(&self, obs: &[f64], rng: &mut R) -> Result<(usize, Vec<f64>, f64)> {
        let mut cache = ForwardCache::default();
        let (logits, value) = self.forward(obs, &mut cache);
        if logits.iter().any(|v| !v.is_finite()) || !value.is_finite() {
            return Err(Error::Numerical("policy network produced non-finite output".into()));
        }
        let action = sample_categorical(&logits, rng)?;
        Ok((action, logits, value))
    }

    /// Value estimate only (used for bootstrapping).
    pub fn value(&self, obs: &[f64]) -> f64 {
        let mut cache = ForwardCache::default();
        self.net.forward(obs, &mut cache);
        cache.head_out[VALUE_HEAD][0]
    }

    /// Greedy (argmax) action, for evaluation probes.
    pub fn greedy(&self, obs: &[f64]) -> usize {
        let mut cache = ForwardCache::default();
        self.net.forward(obs, &mut cache);
        let logits = &cache.head_out[POLICY_HEAD];
        logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// n-step discounted returns bootstrapped from the unroll end, plus
/// advantages against the recorded value estimates.
///
/// `bootstrap` must be 0 when the final step is terminal.
pub fn compute_returns_and_advantages(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    discount: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut returns = vec![0.0; n];
    let mut acc = bootstrap;
    for t in (0..n).rev() {
        acc = rewards[t] + discount * acc;
        returns[t] = acc;
    }
    let advantages = returns.iter().zip(values.iter()).map(|(r, v)| r - v).collect();
    (returns, advantages)
}

/// One step of an update batch.
#[derive(Debug, Clone)]
pub struct StepSample {
    pub obs: Vec<f64>,
    pub action: usize,
    pub ret: f64,
    pub advantage: f64,
    /// Target logits for the KL imitation penalty, if any.
    pub kl_target_logits: Option<Vec<f64>>,
}

/// Loss components from one update, batch means.
#[derive(Debug, Clone, Default)]
pub struct LossReport {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub kl: f64,
    pub grad_norm: f64,
}

/// Batch loss without gradients. Kept separate so finite-difference tests can
/// probe the identical objective the analytic gradients descend.
pub fn a2c_loss(policy: &PolicyNet, batch: &[StepSample], entropy_weight: f64, c_kl: f64) -> f64 {
    let mut cache = ForwardCache::default();
    let mut total = 0.0;
    for s in batch {
        policy.net.forward(&s.obs, &mut cache);
        let logits = &cache.head_out[POLICY_HEAD];
        let v = cache.head_out[VALUE_HEAD][0];
        let logp = log_softmax(logits);
        total += -s.advantage * logp[s.action];
        total += 0.5 * (v - s.ret) * (v - s.ret);
        total += -entropy_weight * entropy(logits);
        if let Some(target) = &s.kl_target_logits {
            total += kl_imitation_loss(logits, target, c_kl).0;
        }
    }
    total / batch.len() as f64
}

/// Accumulates A2C gradients for `batch` into `grads`; returns the report.
pub fn a2c_gradients(
    policy: &PolicyNet,
    batch: &[StepSample],
    entropy_weight: f64,
    c_kl: f64,
    grads: &mut Grads,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::Arity { expected: 1, got: 0 });
    }
    let inv_n = 1.0 / batch.len() as f64;
    let mut report = LossReport::default();
    let mut cache = ForwardCache::default();
    for s in batch {
        policy.net.forward(&s.obs, &mut cache);
        let logits = cache.head_out[POLICY_HEAD].clone();
        let v = cache.head_out[VALUE_HEAD][0];
        let probs = softmax(&logits);
        let logp = log_softmax(&logits);
        let ent: f64 = -logp.iter().zip(probs.iter()).map(|(&l, &p)| p * l).sum::<f64>();

        report.policy += -s.advantage * logp[s.action] * inv_n;
        report.value += 0.5 * (v - s.ret) * (v - s.ret) * inv_n;
        report.entropy += ent * inv_n;

        // d(loss)/d(logit_k), all terms combined.
        let mut dlogits = vec![0.0; logits.len()];
        for k in 0..logits.len() {
            let onehot = if k == s.action { 1.0 } else { 0.0 };
            // policy-gradient term: -A * (onehot - p)
            let mut d = -s.advantage * (onehot - probs[k]);
            // entropy bonus: -w * H  =>  d = w * p * (logp + H)
            d += entropy_weight * probs[k] * (logp[k] + ent);
            dlogits[k] = d;
        }
        if let Some(target) = &s.kl_target_logits {
            let (kl_term, kl_grad) = kl_imitation_loss(&logits, target, c_kl);
            report.kl += kl_term * inv_n;
            for (d, g) in dlogits.iter_mut().zip(kl_grad.iter()) {
                *d += g;
            }
        }
        for d in dlogits.iter_mut() {
            *d *= inv_n;
        }
        let dvalue = vec![(v - s.ret) * inv_n];
        policy.net.backward(&s.obs, &cache, &[dlogits, dvalue], grads);
    }
    report.total = report.policy + report.value - entropy_weight * report.entropy + report.kl;
    if !grads.is_finite() {
        return Err(Error::Numerical("non-finite gradient in actor-critic update".into()));
    }
    report.grad_norm = grads.l2_norm();
    Ok(report)
}

/// One full update: gradients then an RMSProp step.
pub fn a2c_update(
    policy: &mut PolicyNet,
    opt: &mut RmsProp,
    batch: &[StepSample],
    entropy_weight: f64,
    c_kl: f64,
) -> Result<LossReport> {
    let mut grads = Grads::zeros_like(&policy.net);
    let report = a2c_gradients(policy, batch, entropy_weight, c_kl, &mut grads)?;
    opt.step(&mut policy.net, &grads);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn returns_single_reward_at_start() {
        let (ret, _) = compute_returns_and_advantages(&[1.0, 0.0, 0.0], &[0.0; 3], 0.0, 0.99);
        assert_eq!(ret, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn returns_hand_computed() {
        let (ret, _) = compute_returns_and_advantages(&[0.0, 0.0, 1.0], &[0.0; 3], 0.0, 0.5);
        assert_eq!(ret, vec![0.25, 0.5, 1.0]);
    }

    #[test]
    fn zero_rewards_zero_advantages() {
        let (ret, adv) = compute_returns_and_advantages(&[0.0; 4], &[0.0; 4], 0.0, 0.9);
        assert!(ret.iter().all(|&r| r == 0.0));
        assert!(adv.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn return_recursion_holds() {
        let rewards = [0.3, -1.0, 2.0, 0.0, 0.5];
        let bootstrap = 1.7;
        let discount = 0.97;
        let (ret, _) = compute_returns_and_advantages(&rewards, &[0.0; 5], bootstrap, discount);
        for t in 0..rewards.len() {
            let next = if t + 1 < ret.len() { ret[t + 1] } else { bootstrap };
            assert!((ret[t] - (rewards[t] + discount * next)).abs() < 1e-12);
        }
    }

    #[test]
    fn act_uniform_logits_uniform_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // Zero-weight network: logits identically zero -> uniform policy.
        let policy = PolicyNet {
            net: Mlp::zeroed(4, &[8], &[("policy", 5), ("value", 1)]),
            n_actions: 5,
        };
        let obs = [0.1, 0.2, 0.3, 0.4];
        let n = 10_000usize;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            let (a, _, _) = policy.act(&obs, &mut rng).unwrap();
            counts[a] += 1;
        }
        // Multinomial: per-cell sd = sqrt(n p (1-p)), p = 1/5.
        let p = 0.2;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - n as f64 * p).abs() < 3.0 * sd,
                "count {c} outside 3 sd of {}",
                n as f64 * p
            );
        }
    }

    #[test]
    fn act_deterministic_given_rng_state() {
        let mut rng_a = ChaCha8Rng::seed_from_u64(5);
        let mut rng_b = ChaCha8Rng::seed_from_u64(5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let policy = PolicyNet::new(3, 4, &[8], &mut rng);
        let obs = [0.0, 1.0, -1.0];
        assert_eq!(
            policy.act(&obs, &mut rng_a).unwrap().0,
            policy.act(&obs, &mut rng_b).unwrap().0
        );
    }

    #[test]
    fn act_rejects_non_finite() {
        let mut policy = PolicyNet {
            net: Mlp::zeroed(2, &[4], &[("policy", 3), ("value", 1)]),
            n_actions: 3,
        };
        policy.net.heads[POLICY_HEAD].b[0] = f64::NAN;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(policy.act(&[0.0, 0.0], &mut rng), Err(Error::Numerical(_))));
    }

    #[test]
    fn stationary_point_has_zero_gradient() {
        // Zero advantages, value == return, no entropy, no KL.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let policy = PolicyNet::new(3, 4, &[6], &mut rng);
        let obs = vec![0.2, -0.4, 0.9];
        let mut cache = ForwardCache::default();
        let (_, v) = policy.forward(&obs, &mut cache);
        let batch = [StepSample {
            obs,
            action: 1,
            ret: v,
            advantage: 0.0,
            kl_target_logits: None,
        }];
        let mut grads = Grads::zeros_like(&policy.net);
        let report = a2c_gradients(&policy, &batch, 0.0, 0.0, &mut grads).unwrap();
        assert!(report.grad_norm < 1e-12, "grad norm {}", report.grad_norm);
    }

    /// Full-loss gradient check: policy, value, entropy, and KL terms.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let policy = PolicyNet::new(4, 3, &[5, 5], &mut rng);
        let entropy_w = 0.01;
        let c_kl = 0.5;
        let batch: Vec<StepSample> = (0..6)
            .map(|i| StepSample {
                obs: (0..4).map(|j| ((i * 4 + j) as f64 * 0.37).sin()).collect(),
                action: i % 3,
                ret: (i as f64 * 0.3) - 0.5,
                advantage: ((i as f64) - 2.4) * 0.7,
                kl_target_logits: Some(vec![0.1 * i as f64, -0.2, 0.3]),
            })
            .collect();

        let mut grads = Grads::zeros_like(&policy.net);
        a2c_gradients(&policy, &batch, entropy_w, c_kl, &mut grads).unwrap();
        let mut flat: Vec<f64> = Vec::new();
        for g in grads.trunk.iter().chain(grads.heads.iter()) {
            flat.extend_from_slice(&g.w);
            flat.extend_from_slice(&g.b);
        }

        let h = 1e-6;
        let n_params = policy.net.param_count();
        for idx in (0..n_params).step_by(7) {
            let perturb = |delta: f64| -> f64 {
                let mut p = policy.clone();
                let mut k = 0;
                p.net.visit_mut(&mut |_, _, data| {
                    for v in data.iter_mut() {
                        if k == idx {
                            *v += delta;
                        }
                        k += 1;
                    }
                });
                a2c_loss(&p, &batch, entropy_w, c_kl)
            };
            let fd = (perturb(h) - perturb(-h)) / (2.0 * h);
            let an = flat[idx];
            let rel = (an - fd).abs() / (an.abs() + fd.abs()).max(1e-8);
            assert!(rel < 1e-4, "param {idx}: analytic {an} vs fd {fd} (rel {rel})");
        }
    }

    /// With only the entropy bonus active, repeated updates should push the
    /// policy toward uniform (entropy maximum).
    #[test]
    fn entropy_only_drives_toward_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut policy = PolicyNet::new(2, 4, &[8], &mut rng);
        let mut opt = RmsProp::new(&policy.net, 1e-2, 0.9, 1e-8);
        let obs = vec![1.0, -1.0];
        let batch = [StepSample {
            obs: obs.clone(),
            action: 0,
            ret: 0.0,
            advantage: 0.0,
            kl_target_logits: None,
        }];
        // Make the value head irrelevant: ret equals whatever v is at each step.
        for _ in 0..500 {
            let v = policy.value(&obs);
            let b = [StepSample { ret: v, ..batch[0].clone() }];
            a2c_update(&mut policy, &mut opt, &b, 1.0, 0.0).unwrap();
        }
        let mut cache = ForwardCache::default();
        let (logits, _) = policy.forward(&obs, &mut cache);
        let ent = entropy(&logits);
        assert!((ent - 4.0_f64.ln()).abs() < 1e-3, "entropy {ent} not near ln 4");
    }
}
