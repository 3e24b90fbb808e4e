//! A small dense tanh network with hand-written backpropagation, plus the
//! Adam optimiser and linear learning-rate schedules shared by every trainer.

use serde::{Deserialize, Serialize};

use crate::rng::{standard_normal, Rng};

/// Feed-forward network: tanh hidden layers, linear output layer.
///
/// Parameters are stored flat, layer by layer, as a row-major weight matrix
/// `(out, in)` followed by the bias vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer activations recorded by [`Mlp::forward_trace`]. `layers[0]` is the
/// input, the last entry is the (linear) output.
#[derive(Clone, Debug)]
pub struct Trace {
    layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("trace has an output layer")
    }
}

impl Mlp {
    pub fn num_params_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs input and output sizes");
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::num_params_for(sizes)],
        }
    }

    /// Fan-in scaled Gaussian init; the output layer is multiplied by
    /// `output_gain` and all biases start at zero.
    pub fn new(sizes: &[usize], output_gain: f64, rng: &mut Rng) -> Self {
        let mut net = Self::zeros(sizes);
        let mut offset = 0;
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let gain = if l == last { output_gain } else { 1.0 };
            let std = gain / (fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = std * standard_normal(rng);
            }
            offset += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let y = self.affine(offset, n_in, n_out, &x, l + 1 < n_layers);
            offset += n_in * n_out + n_out;
            x = y;
        }
        x
    }

    pub fn forward_trace(&self, input: &[f64]) -> Trace {
        debug_assert_eq!(input.len(), self.input_dim());
        let n_layers = self.sizes.len() - 1;
        let mut layers = Vec::with_capacity(n_layers + 1);
        layers.push(input.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let y = self.affine(offset, n_in, n_out, &layers[l], l + 1 < n_layers);
            offset += n_in * n_out + n_out;
            layers.push(y);
        }
        Trace { layers }
    }

    fn affine(&self, offset: usize, n_in: usize, n_out: usize, x: &[f64], squash: bool) -> Vec<f64> {
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                if squash {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Backpropagates `d_output` through the recorded trace. Parameter
    /// gradients are accumulated into `grad` when given; the gradient with
    /// respect to the input is returned.
    pub fn backward(&self, trace: &Trace, d_output: &[f64], mut grad: Option<&mut [f64]>) -> Vec<f64> {
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = d_output.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let offset = offsets[l];
            let input = &trace.layers[l];
            if let Some(g) = grad.as_deref_mut() {
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        let row = &mut g[offset + o * n_in..offset + (o + 1) * n_in];
                        for (gi, xi) in row.iter_mut().zip(input) {
                            *gi += d * xi;
                        }
                    }
                    g[offset + n_in * n_out + o] += d;
                }
            }
            let w = &self.params[offset..offset + n_in * n_out];
            let mut d_in = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (di, wi) in d_in.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *di += d * wi;
                }
            }
            if l > 0 {
                for (di, a) in d_in.iter_mut().zip(input) {
                    *di *= 1.0 - a * a;
                }
            }
            delta = d_in;
        }
        delta
    }

    /// Gradient of a scalar-output network with respect to its input.
    pub fn input_gradient(&self, input: &[f64]) -> Vec<f64> {
        let trace = self.forward_trace(input);
        self.backward(&trace, &[1.0], None)
    }
}

/// Linear interpolation between `start` and `end` over training progress.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
}

impl LinearSchedule {
    pub const fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub const fn constant(value: f64) -> Self {
        Self { start: value, end: value }
    }

    /// Value after `step` of `total` steps (clamped to the end value).
    pub fn at(&self, step: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.start;
        }
        let frac = (step as f64 / (total - 1) as f64).min(1.0);
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One descent step: `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn scalar_loss(net: &Mlp, x: &[f64]) -> f64 {
        net.forward(x).iter().enumerate().map(|(i, y)| (i as f64 + 1.0) * y).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seeded(11, &[]);
        let net = Mlp::new(&[3, 5, 4, 2], 1.0, &mut rng);
        let x = [0.3, -0.7, 1.1];
        let trace = net.forward_trace(&x);
        let mut grad = vec![0.0; net.params().len()];
        let d_in = net.backward(&trace, &[1.0, 2.0], Some(&mut grad));
        let h = 1e-6;
        for i in (0..net.params().len()).step_by(3) {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let fd = (scalar_loss(&plus, &x) - scalar_loss(&minus, &x)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7, "param {i}: {fd} vs {}", grad[i]);
        }
        for j in 0..3 {
            let mut xp = x;
            xp[j] += h;
            let mut xm = x;
            xm[j] -= h;
            let fd = (scalar_loss(&net, &xp) - scalar_loss(&net, &xm)) / (2.0 * h);
            assert!((fd - d_in[j]).abs() < 1e-7);
        }
    }

    #[test]
    fn schedule_endpoints() {
        let s = LinearSchedule::new(1e-2, 1e-5);
        assert_eq!(s.at(0, 10), 1e-2);
        assert!((s.at(9, 10) - 1e-5).abs() < 1e-18);
        assert_eq!(s.at(50, 10), s.at(9, 10));
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut x, &g, 0.05);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-3));
    }
}
