//! Feed-forward network: ReLU hidden layers, softmax output, cross-entropy loss,
//! mini-batch SGD with backpropagation.
//!
//! All parameters live in one flat vector. Layer `l` stores its weights row-major with shape
//! `(out, in)` followed by its `out` biases.

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Per-sample activations. `acts[0]` is the input, `acts[last]` the softmax output.
struct Scratch {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(sizes: &[usize]) -> Self {
        Scratch {
            acts: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            deltas: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

impl Mlp {
    /// Xavier-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        inputs: usize,
        hidden: &[usize],
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(inputs);
        sizes.extend_from_slice(hidden);
        sizes.push(outputs);

        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for w in sizes.windows(2) {
            offsets.push(total);
            total += w[0] * w[1] + w[1];
        }
        offsets.push(total);

        let mut params = vec![0.0; total];
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = offsets[l];
            for p in &mut params[start..start + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Mlp {
            sizes,
            params,
            offsets,
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_outputs(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn forward_into(&self, x: &[f64], s: &mut Scratch) {
        s.acts[0].copy_from_slice(x);
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[self.offsets[l]..self.offsets[l] + n_in * n_out];
            let b = &self.params[self.offsets[l] + n_in * n_out..self.offsets[l + 1]];
            let (lower, upper) = s.acts.split_at_mut(l + 1);
            let input = &lower[l];
            let out = &mut upper[0];
            for (j, o) in out.iter_mut().enumerate() {
                let row = &w[j * n_in..(j + 1) * n_in];
                let mut z = b[j];
                for (wi, xi) in row.iter().zip(input.iter()) {
                    z += wi * xi;
                }
                *o = if l == last { z } else { z.max(0.0) };
            }
        }
        softmax_in_place(s.acts.last_mut().unwrap());
    }

    /// Class probabilities.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut s = Scratch::new(&self.sizes);
        self.forward_into(x, &mut s);
        s.acts.pop().unwrap()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.predict_proba(x))
    }

    /// Cross-entropy of one sample.
    pub fn loss(&self, x: &[f64], label: usize) -> f64 {
        -self.predict_proba(x)[label].max(f64::MIN_POSITIVE).ln()
    }

    /// Loss of one sample and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, x: &[f64], label: usize) -> (f64, Vec<f64>) {
        let mut s = Scratch::new(&self.sizes);
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_gradient(x, label, &mut s, &mut grad);
        (loss, grad)
    }

    fn accumulate_gradient(
        &self,
        x: &[f64],
        label: usize,
        s: &mut Scratch,
        grad: &mut [f64],
    ) -> f64 {
        self.forward_into(x, s);
        let last = self.layers();
        let p = &s.acts[last];
        let loss = -p[label].max(f64::MIN_POSITIVE).ln();

        // softmax + cross-entropy: dL/dz = p - onehot
        s.deltas[last].copy_from_slice(p);
        s.deltas[last][label] -= 1.0;

        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w_off = self.offsets[l];
            let b_off = w_off + n_in * n_out;
            let (lower, upper) = s.deltas.split_at_mut(l + 1);
            let delta = &upper[0];
            let input = &s.acts[l];
            for j in 0..n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[w_off + j * n_in..w_off + (j + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
                grad[b_off + j] += d;
            }
            if l > 0 {
                let prev = &mut lower[l];
                prev.iter_mut().for_each(|v| *v = 0.0);
                let w = &self.params[w_off..b_off];
                for j in 0..n_out {
                    let d = delta[j];
                    if d == 0.0 {
                        continue;
                    }
                    for (pv, wi) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *pv += d * wi;
                    }
                }
                // ReLU derivative from the post-activation value
                for (pv, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *pv = 0.0;
                    }
                }
            }
        }
        loss
    }

    /// Shuffled mini-batch SGD over `(features, label)` samples. Returns the mean loss of the
    /// last epoch.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        samples: &[(&[f64], usize)],
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        rng: &mut R,
    ) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let mut s = Scratch::new(&self.sizes);
        let mut grad = vec![0.0; self.params.len()];
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut epoch_loss = 0.0;
        for _ in 0..epochs {
            order.shuffle(rng);
            epoch_loss = 0.0;
            for chunk in order.chunks(batch_size.max(1)) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &i in chunk {
                    let (x, y) = samples[i];
                    epoch_loss += self.accumulate_gradient(x, y, &mut s, &mut grad);
                }
                let step = learning_rate / chunk.len() as f64;
                for (p, g) in self.params.iter_mut().zip(&grad) {
                    *p -= step * g;
                }
            }
            epoch_loss /= samples.len() as f64;
        }
        epoch_loss
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// First index of the maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
