//! Dense networks with hand-written backpropagation.
//!
//! Parameters live in one flat vector (per layer: row-major weights, then
//! biases) so that optimiser state, soft updates and serialisation all work
//! on plain slices.

use std::io::{Read, Write};

use rand::Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    /// Softmax over consecutive groups of `group` outputs.
    Softmax { group: usize },
}

#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
    offsets: Vec<usize>,
    version: u64,
}

// Equality ignores the cache version counter.
impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.output == other.output && self.params == other.params
    }
}

/// Activations recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[j + 1]` the post-activation output of layer `j`.
    acts: Vec<Vec<f64>>,
    version: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache has an output")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Same layout as the network parameters.
    pub params: Vec<f64>,
    /// Gradient with respect to the network input.
    pub input: Vec<f64>,
}

impl Mlp {
    /// Fan-in/fan-out scaled uniform init, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        for j in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[j], sizes[j + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in net.layer_weights_mut(j) {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer sizes {sizes:?}")));
        }
        if let OutputActivation::Softmax { group } = output {
            let out = *sizes.last().unwrap();
            if group == 0 || out % group != 0 {
                return Err(Error::InvalidConfig(format!("softmax group {group} does not divide {out}")));
            }
        }
        let mut offsets = vec![0];
        for w in sizes.windows(2) {
            offsets.push(offsets.last().unwrap() + w[0] * w[1] + w[1]);
        }
        let total = *offsets.last().unwrap();
        Ok(Self { sizes: sizes.to_vec(), output, params: vec![0.0; total], offsets, version: 0 })
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
    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }
    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn layer_weights_mut(&mut self, j: usize) -> &mut [f64] {
        let (o, n) = (self.offsets[j], self.sizes[j] * self.sizes[j + 1]);
        &mut self.params_mut()[o..o + n]
    }

    pub fn layer_bias_mut(&mut self, j: usize) -> &mut [f64] {
        let o = self.offsets[j] + self.sizes[j] * self.sizes[j + 1];
        let n = self.sizes[j + 1];
        &mut self.params_mut()[o..o + n]
    }

    fn layer(&self, j: usize) -> (&[f64], &[f64]) {
        let (o, n) = (self.offsets[j], self.sizes[j] * self.sizes[j + 1]);
        (&self.params[o..o + n], &self.params[o + n..self.offsets[j + 1]])
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut cache = self.forward_cached(input)?;
        Ok(cache.acts.pop().unwrap())
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch { expected: self.input_dim(), got: input.len() });
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        let last = self.num_layers() - 1;
        for j in 0..=last {
            let (w, b) = self.layer(j);
            let x = &acts[j];
            let n_in = self.sizes[j];
            let mut y: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bias)| bias + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if j < last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            } else if let OutputActivation::Softmax { group } = self.output {
                y.chunks_mut(group).for_each(softmax_in_place);
            }
            acts.push(y);
        }
        Ok(ForwardCache { acts, version: self.version })
    }

    /// Reverse-mode gradients of a scalar loss given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Gradients> {
        if cache.version != self.version || cache.acts.len() != self.sizes.len() {
            return Err(Error::StaleCache);
        }
        if grad_output.len() != self.output_dim() {
            return Err(Error::ShapeMismatch { expected: self.output_dim(), got: grad_output.len() });
        }
        let last = self.num_layers() - 1;
        let mut grads = vec![0.0; self.params.len()];
        // Gradient with respect to the pre-activation of the current layer.
        let mut delta: Vec<f64> = match self.output {
            OutputActivation::Identity => grad_output.to_vec(),
            OutputActivation::Softmax { group } => {
                let p = cache.output();
                let mut d = vec![0.0; p.len()];
                for ((dg, pg), gg) in d.chunks_mut(group).zip(p.chunks(group)).zip(grad_output.chunks(group)) {
                    let inner: f64 = pg.iter().zip(gg).map(|(a, b)| a * b).sum();
                    for i in 0..group {
                        dg[i] = pg[i] * (gg[i] - inner);
                    }
                }
                d
            }
        };
        for j in (0..=last).rev() {
            let (n_in, n_out) = (self.sizes[j], self.sizes[j + 1]);
            let x = &cache.acts[j];
            let o = self.offsets[j];
            for r in 0..n_out {
                let g = &mut grads[o + r * n_in..o + (r + 1) * n_in];
                g.iter_mut().zip(x).for_each(|(gw, xi)| *gw += delta[r] * xi);
                grads[o + n_out * n_in + r] += delta[r];
            }
            let (w, _) = self.layer(j);
            let mut prev = vec![0.0; n_in];
            for r in 0..n_out {
                if delta[r] != 0.0 {
                    prev.iter_mut().zip(&w[r * n_in..(r + 1) * n_in]).for_each(|(p, wi)| *p += delta[r] * wi);
                }
            }
            if j > 0 {
                // ReLU mask from the stored post-activation.
                prev.iter_mut().zip(x).for_each(|(p, a)| {
                    if *a <= 0.0 {
                        *p = 0.0
                    }
                });
            }
            delta = prev;
        }
        Ok(Gradients { params: grads, input: delta })
    }

    /// `self <- tau * online + (1 - tau) * self`.
    pub fn soft_update(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if online.sizes != self.sizes {
            return Err(Error::ShapeMismatch { expected: self.params.len(), got: online.params.len() });
        }
        soft_update(self.params_mut(), online.params(), tau);
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"MLP1")?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        let (kind, group) = match self.output {
            OutputActivation::Identity => (0u32, 0u32),
            OutputActivation::Softmax { group } => (1, group as u32),
        };
        w.write_all(&kind.to_le_bytes())?;
        w.write_all(&group.to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |detail: &str| Error::Format { what: "MLP1 file", detail: detail.into() };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"MLP1" {
            return Err(bad("bad magic"));
        }
        let count = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&count) {
            return Err(bad("implausible layer count"));
        }
        let sizes = (0..count).map(|_| read_u32(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let output = match (read_u32(&mut r)?, read_u32(&mut r)?) {
            (0, _) => OutputActivation::Identity,
            (1, g) => OutputActivation::Softmax { group: g as usize },
            _ => return Err(bad("unknown output activation")),
        };
        let mut net = Self::zeros(&sizes, output)?;
        let mut b = [0u8; 8];
        for p in net.params_mut() {
            r.read_exact(&mut b)?;
            *p = f64::from_le_bytes(b);
        }
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(bad("non-finite parameter"));
        }
        Ok(net)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// Elementwise `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut [f64], online: &[f64], tau: f64) {
    for (t, o) in target.iter_mut().zip(online) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }
}

/// Bias-corrected Adam descent step.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
}

/// Fixed-capacity FIFO store with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    cursor: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: Vec::new(), cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
    pub fn len(&self) -> usize {
        self.items.len()
    }
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.cursor] = item;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// `None` while fewer than `batch_size` items are stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Option<Vec<&T>> {
        if self.items.len() < batch_size || self.items.is_empty() {
            return None;
        }
        Some((0..batch_size).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}
