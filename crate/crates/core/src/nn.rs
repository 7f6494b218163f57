//! Minimal dense networks with hand-written backpropagation.
//!
//! Both the policy/value network and the niceness network are small MLPs:
//! a ReLU trunk followed by linear heads. Everything is `f64`; gradients are
//! accumulated into a parallel [`Grads`] structure and validated against
//! central finite differences in the test suites.

use rand::Rng;

use crate::error::{Error, Result};

/// A fully-connected layer, row-major weights (`n_out` x `n_in`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense { n_in, n_out, w: vec![0.0; n_in * n_out], b: vec![0.0; n_out] }
    }

    /// Uniform init in [-1/sqrt(n_in), 1/sqrt(n_in)].
    pub fn init<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let mut layer = Dense::zeros(n_in, n_out);
        for v in layer.w.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        for v in layer.b.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        layer
    }

    pub fn forward_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_in);
        debug_assert_eq!(y.len(), self.n_out);
        for (o, out) in y.iter_mut().enumerate() {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x.iter()) {
                acc += wi * xi;
            }
            *out = acc;
        }
    }

    /// Accumulates parameter gradients and (optionally) the input gradient.
    pub fn backward(&self, x: &[f64], dy: &[f64], dx: Option<&mut [f64]>, g: &mut DenseGrad) {
        for (o, &d) in dy.iter().enumerate() {
            g.b[o] += d;
            let row = &mut g.w[o * self.n_in..(o + 1) * self.n_in];
            for (gw, xi) in row.iter_mut().zip(x.iter()) {
                *gw += d * xi;
            }
        }
        if let Some(dx) = dx {
            for v in dx.iter_mut() {
                *v = 0.0;
            }
            for (o, &d) in dy.iter().enumerate() {
                let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
                for (dv, wi) in dx.iter_mut().zip(row.iter()) {
                    *dv += d * wi;
                }
            }
        }
    }
}

/// Gradient buffer matching one [`Dense`].
#[derive(Debug, Clone)]
pub struct DenseGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseGrad {
    pub fn zeros_like(layer: &Dense) -> Self {
        DenseGrad { w: vec![0.0; layer.w.len()], b: vec![0.0; layer.b.len()] }
    }

    pub fn clear(&mut self) {
        self.w.iter_mut().for_each(|v| *v = 0.0);
        self.b.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// ReLU trunk plus named linear heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub trunk: Vec<Dense>,
    pub heads: Vec<Dense>,
    pub head_names: Vec<String>,
}

/// Per-sample activations retained for the backward pass.
#[derive(Debug, Default, Clone)]
pub struct ForwardCache {
    /// Post-ReLU output of each trunk layer.
    pub acts: Vec<Vec<f64>>,
    /// Head outputs, same order as `Mlp::heads`.
    pub head_out: Vec<Vec<f64>>,
}

/// Gradients for a whole [`Mlp`].
#[derive(Debug, Clone)]
pub struct Grads {
    pub trunk: Vec<DenseGrad>,
    pub heads: Vec<DenseGrad>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Grads {
            trunk: net.trunk.iter().map(DenseGrad::zeros_like).collect(),
            heads: net.heads.iter().map(DenseGrad::zeros_like).collect(),
        }
    }

    pub fn clear(&mut self) {
        self.trunk.iter_mut().for_each(DenseGrad::clear);
        self.heads.iter_mut().for_each(DenseGrad::clear);
    }

    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for g in self.trunk.iter().chain(self.heads.iter()) {
            acc += g.w.iter().map(|v| v * v).sum::<f64>();
            acc += g.b.iter().map(|v| v * v).sum::<f64>();
        }
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.trunk
            .iter()
            .chain(self.heads.iter())
            .all(|g| g.w.iter().all(|v| v.is_finite()) && g.b.iter().all(|v| v.is_finite()))
    }
}

impl Mlp {
    /// `hidden` lists trunk widths; each head is `(name, width)`.
    pub fn new<R: Rng>(
        n_in: usize,
        hidden: &[usize],
        heads: &[(&str, usize)],
        rng: &mut R,
    ) -> Self {
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut prev = n_in;
        for &h in hidden {
            trunk.push(Dense::init(prev, h, rng));
            prev = h;
        }
        let heads_v = heads.iter().map(|&(_, n)| Dense::init(prev, n, rng)).collect();
        let head_names = heads.iter().map(|&(n, _)| n.to_string()).collect();
        Mlp { trunk, heads: heads_v, head_names }
    }

    /// All-zero parameters, same topology.
    pub fn zeroed(n_in: usize, hidden: &[usize], heads: &[(&str, usize)]) -> Self {
        let mut trunk = Vec::with_capacity(hidden.len());
        let mut prev = n_in;
        for &h in hidden {
            trunk.push(Dense::zeros(prev, h));
            prev = h;
        }
        let heads_v = heads.iter().map(|&(_, n)| Dense::zeros(prev, n)).collect();
        let head_names = heads.iter().map(|&(n, _)| n.to_string()).collect();
        Mlp { trunk, heads: heads_v, head_names }
    }

    pub fn n_in(&self) -> usize {
        self.trunk.first().map(|l| l.n_in).unwrap_or(0)
    }

    /// Forward pass; fills `cache` (reused across calls to avoid allocation).
    pub fn forward(&self, x: &[f64], cache: &mut ForwardCache) {
        cache.acts.resize(self.trunk.len(), Vec::new());
        for (i, layer) in self.trunk.iter().enumerate() {
            // Split borrow: activations before i are frozen inputs.
            let (before, rest) = cache.acts.split_at_mut(i);
            let out = &mut rest[0];
            out.resize(layer.n_out, 0.0);
            let src: &[f64] = if i == 0 { x } else { &before[i - 1] };
            layer.forward_into(src, out);
            for v in out.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        cache.head_out.resize(self.heads.len(), Vec::new());
        let last = cache.acts.last().map(|v| v.as_slice()).unwrap_or(x);
        for (head, out) in self.heads.iter().zip(cache.head_out.iter_mut()) {
            out.resize(head.n_out, 0.0);
            head.forward_into(last, out);
        }
    }

    /// Backward pass from per-head output gradients; accumulates into `grads`.
    ///
    /// `head_grads[i]` may be empty to skip head `i`.
    pub fn backward(&self, x: &[f64], cache: &ForwardCache, head_grads: &[Vec<f64>], grads: &mut Grads) {
        let last_act: &[f64] = cache.acts.last().map(|v| v.as_slice()).unwrap_or(x);
        let mut d_last = vec![0.0; last_act.len()];
        let mut scratch = vec![0.0; last_act.len()];
        for ((head, dg), ghead) in self.heads.iter().zip(head_grads.iter()).zip(grads.heads.iter_mut()) {
            if dg.is_empty() {
                continue;
            }
            head.backward(last_act, dg, Some(&mut scratch), ghead);
            for (acc, s) in d_last.iter_mut().zip(scratch.iter()) {
                *acc += s;
            }
        }
        // Walk the trunk backwards, gating through ReLU masks.
        let mut dy = d_last;
        for i in (0..self.trunk.len()).rev() {
            let act = &cache.acts[i];
            for (d, a) in dy.iter_mut().zip(act.iter()) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            let src: &[f64] = if i == 0 { x } else { &cache.acts[i - 1] };
            let mut dx = vec![0.0; src.len()];
            let needs_dx = i > 0;
            self.trunk[i].backward(src, &dy, if needs_dx { Some(&mut dx) } else { None }, &mut grads.trunk[i]);
            dy = dx;
        }
    }

    /// Visit every named tensor: `(name, shape, data)`.
    pub fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for (i, layer) in self.trunk.iter().enumerate() {
            f(&format!("trunk.{i}.w"), &[layer.n_out, layer.n_in], &layer.w);
            f(&format!("trunk.{i}.b"), &[layer.n_out], &layer.b);
        }
        for (name, head) in self.head_names.iter().zip(self.heads.iter()) {
            f(&format!("{name}.w"), &[head.n_out, head.n_in], &head.w);
            f(&format!("{name}.b"), &[head.n_out], &head.b);
        }
    }

    /// Mutable tensor visit, same order as [`Mlp::visit`].
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let names: Vec<String> = self.head_names.clone();
        for (i, layer) in self.trunk.iter_mut().enumerate() {
            f(&format!("trunk.{i}.w"), &[layer.n_out, layer.n_in], &mut layer.w);
            f(&format!("trunk.{i}.b"), &[layer.n_out], &mut layer.b);
        }
        for (name, head) in names.iter().zip(self.heads.iter_mut()) {
            f(&format!("{name}.w"), &[head.n_out, head.n_in], &mut head.w);
            f(&format!("{name}.b"), &[head.n_out], &mut head.b);
        }
    }

    /// Pairs each parameter tensor with its gradient tensor, in visit order.
    pub fn zip_grads<'a>(&'a mut self, grads: &'a Grads) -> Vec<(&'a mut [f64], &'a [f64])> {
        let mut out: Vec<(&mut [f64], &[f64])> = Vec::new();
        for (layer, g) in self.trunk.iter_mut().zip(grads.trunk.iter()) {
            out.push((&mut layer.w, &g.w));
            out.push((&mut layer.b, &g.b));
        }
        for (head, g) in self.heads.iter_mut().zip(grads.heads.iter()) {
            out.push((&mut head.w, &g.w));
            out.push((&mut head.b, &g.b));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.trunk
            .iter()
            .chain(self.heads.iter())
            .map(|l| l.w.len() + l.b.len())
            .sum()
    }
}

/// Numerically-stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Log-softmax (same stabilization as [`softmax`]).
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - max - log_sum).collect()
}

/// Shannon entropy of `softmax(logits)`, in nats.
pub fn entropy(logits: &[f64]) -> f64 {
    let logp = log_softmax(logits);
    -logp.iter().map(|&lp| lp.exp() * lp).sum::<f64>()
}

/// Samples an index from `softmax(logits)` using one uniform draw.
pub fn sample_categorical<R: Rng>(logits: &[f64], rng: &mut R) -> Result<usize> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite logits in action sampling".into()));
    }
    let probs = softmax(logits);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(probs.len() - 1)
}
