//! RMSProp: per-parameter root-mean-square gradient scaling.

use crate::nn::{Grads, Mlp};

#[derive(Debug, Clone)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    /// Mean-square accumulators, one vector per tensor in visit order.
    ms: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(net: &Mlp, learning_rate: f64, decay: f64, epsilon: f64) -> Self {
        let mut ms = Vec::new();
        net.visit(&mut |_, _, data| ms.push(vec![0.0; data.len()]));
        RmsProp { learning_rate, decay, epsilon, ms }
    }

    /// One update step: `p -= lr * g / sqrt(ms + eps)` with
    /// `ms = decay * ms + (1 - decay) * g^2`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        let lr = self.learning_rate;
        let decay = self.decay;
        let eps = self.epsilon;
        for ((params, grad), ms) in net.zip_grads(grads).into_iter().zip(self.ms.iter_mut()) {
            for ((p, &g), m) in params.iter_mut().zip(grad.iter()).zip(ms.iter_mut()) {
                *m = decay * *m + (1.0 - decay) * g * g;
                *p -= lr * g / (m.sqrt() + eps).max(eps);
            }
        }
    }
}
