//! Masked deep-Q learning: network, optimizer, replay memory and targets.
//!
//! The network is a plain MLP over `[S_loc, S_dag]` whose last layer is
//! rectified and then multiplied elementwise by the feasibility mask
//! `S_msk`, so infeasible actions always read exactly zero.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "DQN")]
    Dqn,
    #[serde(rename = "DDQN")]
    Ddqn,
}

/// Shape of the exploration decay over episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonSchedule {
    /// `min + (1 - min) * exp(-episode / d)`
    Exponential,
    /// `min + (1 - min) * d / (d + episode)`
    Hyperbolic,
    /// `min + (1 - min) * max(0, 1 - episode / d)`
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub lr: f64,
    pub batch: usize,
    pub buffer: usize,
    pub eps_denominator: f64,
    #[serde(default = "default_eps_min")]
    pub eps_min: f64,
    #[serde(default = "default_schedule")]
    pub eps_schedule: EpsilonSchedule,
    /// Discount factor.
    pub gamma: f64,
    /// Target network soft-update rate.
    pub tau: f64,
    /// Environment actions between training sessions.
    pub train_every: usize,
    /// Gradient steps per training session.
    pub train_iters: usize,
    pub algo: Algo,
    pub hidden: [usize; 2],
}

fn default_eps_min() -> f64 {
    0.05
}

fn default_schedule() -> EpsilonSchedule {
    EpsilonSchedule::Exponential
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            lr: 1e-5,
            batch: 2560,
            buffer: 100_000,
            eps_denominator: 50.0,
            eps_min: 0.05,
            eps_schedule: EpsilonSchedule::Exponential,
            gamma: 0.99,
            tau: 0.001,
            train_every: 5,
            train_iters: 10,
            algo: Algo::Ddqn,
            hidden: [140, 150],
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch == 0 || self.batch > self.buffer {
            return bad("batch must be in 1..=buffer");
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.eps_denominator.is_nan() || self.eps_denominator <= 0.0 {
            return bad("lr and eps_denominator must be positive");
        }
        if !(0.0..=1.0).contains(&self.eps_min) {
            return bad("eps_min must lie in [0, 1]");
        }
        if self.train_every == 0 || self.hidden.contains(&0) {
            return bad("train_every and hidden sizes must be positive");
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        epsilon(episode, self.eps_denominator, self.eps_min, self.eps_schedule)
    }
}

pub fn epsilon(episode: usize, eps_d: f64, eps_min: f64, schedule: EpsilonSchedule) -> f64 {
    let e = episode as f64;
    let decay = match schedule {
        EpsilonSchedule::Exponential => (-e / eps_d).exp(),
        EpsilonSchedule::Hyperbolic => eps_d / (eps_d + e),
        EpsilonSchedule::Linear => (1.0 - e / eps_d).max(0.0),
    };
    eps_min + (1.0 - eps_min) * decay
}

/// Feed-forward network. Layer `l` maps `sizes[l]` inputs to `sizes[l+1]`
/// outputs; weights are stored input-major (`sizes[l] x sizes[l+1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone)]
pub struct Grads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

struct Cache {
    /// Input of every layer; `acts[0]` is the feature batch.
    acts: Vec<Array2<f64>>,
    /// Pre-activation of every layer.
    pre: Vec<Array2<f64>>,
}

impl QNetwork {
    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut net = QNetwork::zeros(sizes)?;
        for w in &mut net.weights {
            let bound = (6.0 / w.nrows() as f64).sqrt();
            w.mapv_inplace(|_| rng.gen_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("bad layer sizes {sizes:?}")));
        }
        let weights = sizes.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect();
        let biases = sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(QNetwork { sizes: sizes.to_vec(), weights, biases })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_actions(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Length of a full state vector: features then mask.
    pub fn state_len(&self) -> usize {
        self.input_len() + self.num_actions()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    fn forward_cache(&self, x: ArrayView2<f64>) -> Cache {
        let depth = self.weights.len();
        let mut acts = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth);
        acts.push(x.to_owned());
        for l in 0..depth {
            let mut z = acts[l].dot(&self.weights[l]);
            z += &self.biases[l];
            if l + 1 < depth {
                acts.push(z.mapv(relu));
            }
            pre.push(z);
        }
        Cache { acts, pre }
    }

    /// Masked Q-values for a batch: `mask * relu(raw)`.
    pub fn forward_batch(&self, features: ArrayView2<f64>, mask: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(features, mask)?;
        let cache = self.forward_cache(features);
        Ok(masked_output(cache.pre.last().unwrap(), mask))
    }

    /// Masked Q-values for one full state vector `[features, mask]`.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_len() {
            return Err(Error::invalid(format!("state has length {}, expected {}", state.len(), self.state_len())));
        }
        let x = ArrayView2::from_shape((1, self.input_len()), &state[..self.input_len()]).unwrap();
        let m = ArrayView2::from_shape((1, self.num_actions()), &state[self.input_len()..]).unwrap();
        Ok(self.forward_batch(x, m)?.into_raw_vec_and_offset().0)
    }

    fn check_batch(&self, features: ArrayView2<f64>, mask: ArrayView2<f64>) -> Result<()> {
        if features.ncols() != self.input_len()
            || mask.ncols() != self.num_actions()
            || features.nrows() != mask.nrows()
        {
            return Err(Error::invalid(format!(
                "batch shapes {:?} / {:?} do not fit architecture {:?}",
                features.shape(),
                mask.shape(),
                self.sizes
            )));
        }
        Ok(())
    }

    /// Gradients given `d loss / d Q` for every masked output.
    fn backward(&self, cache: &Cache, mask: ArrayView2<f64>, d_q: Array2<f64>) -> Grads {
        let depth = self.weights.len();
        let mut weights = Vec::with_capacity(depth);
        let mut biases = Vec::with_capacity(depth);
        let last = &cache.pre[depth - 1];
        let mut dz = d_q;
        ndarray::Zip::from(&mut dz).and(last).and(mask).for_each(|d, &z, &m| {
            *d *= if z > 0.0 { m } else { 0.0 };
        });
        for l in (0..depth).rev() {
            weights.push(cache.acts[l].t().dot(&dz));
            biases.push(dz.sum_axis(Axis(0)));
            if l > 0 {
                let mut da = dz.dot(&self.weights[l].t());
                ndarray::Zip::from(&mut da).and(&cache.pre[l - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                dz = da;
            }
        }
        weights.reverse();
        biases.reverse();
        Grads { weights, biases }
    }

    /// Mean over the batch of `(Q(s, a) - y)^2` and its gradient.
    pub fn td_loss_grad(
        &self,
        features: ArrayView2<f64>,
        mask: ArrayView2<f64>,
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Grads)> {
        self.check_batch(features, mask)?;
        let b = features.nrows();
        if actions.len() != b || targets.len() != b {
            return Err(Error::invalid("actions and targets must match the batch"));
        }
        let cache = self.forward_cache(features);
        let q = masked_output(cache.pre.last().unwrap(), mask);
        let mut d_q = Array2::zeros(q.raw_dim());
        let mut loss = 0.0;
        for i in 0..b {
            let diff = q[[i, actions[i]]] - targets[i];
            loss += diff * diff;
            d_q[[i, actions[i]]] = 2.0 * diff / b as f64;
        }
        Ok((loss / b as f64, self.backward(&cache, mask, d_q)))
    }

    /// Mean over actions of `(Q(s) - target)^2` for one state, with gradient.
    pub fn mse_loss_grad(&self, state: &[f64], target: &[f64]) -> Result<(f64, Grads)> {
        if state.len() != self.state_len() || target.len() != self.num_actions() {
            return Err(Error::invalid("state or target has the wrong length"));
        }
        let (x, m) = split_state(self, state);
        let cache = self.forward_cache(x);
        let q = masked_output(cache.pre.last().unwrap(), m);
        let k = self.num_actions() as f64;
        let mut loss = 0.0;
        let mut d_q = Array2::zeros(q.raw_dim());
        for a in 0..q.ncols() {
            let diff = q[[0, a]] - target[a];
            loss += diff * diff / k;
            d_q[[0, a]] = 2.0 * diff / k;
        }
        Ok((loss, self.backward(&cache, m, d_q)))
    }

    /// `target <- tau * self + (1 - tau) * target`.
    pub fn soft_update_into(&self, target: &mut QNetwork, tau: f64) {
        for (t, o) in target.weights.iter_mut().zip(&self.weights) {
            t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
        }
        for (t, o) in target.biases.iter_mut().zip(&self.biases) {
            t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
        }
    }

    /// Euclidean distance between the parameter vectors of two networks.
    pub fn param_distance(&self, other: &QNetwork) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.weights.iter().zip(&other.weights) {
            acc += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
        for (a, b) in self.biases.iter().zip(&other.biases) {
            acc += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
        acc.sqrt()
    }

    pub fn to_model_file(&self, seed: u64) -> ModelFile {
        ModelFile {
            arch: self.sizes.clone(),
            seed,
            weights: self.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            biases: self.biases.iter().map(|b| b.to_vec()).collect(),
        }
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        let mut net = QNetwork::zeros(&file.arch).map_err(|e| Error::Validation(e.to_string()))?;
        if file.weights.len() != net.weights.len() || file.biases.len() != net.biases.len() {
            return Err(Error::Validation("model layer count does not match arch".into()));
        }
        for (l, (w, b)) in file.weights.iter().zip(&file.biases).enumerate() {
            if w.len() != net.weights[l].len() || b.len() != net.biases[l].len() {
                return Err(Error::Validation(format!("layer {l} has the wrong parameter count")));
            }
            net.weights[l].as_slice_mut().unwrap().copy_from_slice(w);
            net.biases[l].as_slice_mut().unwrap().copy_from_slice(b);
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let text = serde_json::to_string(&self.to_model_file(seed))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, u64)> {
        let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok((QNetwork::from_model_file(&file)?, file.seed))
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn masked_output(raw: &Array2<f64>, mask: ArrayView2<f64>) -> Array2<f64> {
    let mut q = raw.mapv(relu);
    q *= &mask;
    q
}

fn split_state<'a>(net: &QNetwork, state: &'a [f64]) -> (ArrayView2<'a, f64>, ArrayView2<'a, f64>) {
    let n = net.input_len();
    (
        ArrayView2::from_shape((1, n), &state[..n]).unwrap(),
        ArrayView2::from_shape((1, state.len() - n), &state[n..]).unwrap(),
    )
}

/// Serialized network; weights of each layer are flattened input-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub arch: Vec<usize>,
    pub seed: u64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Largest relative error between analytic and central-difference gradients
/// of the full-vector MSE loss. Parameters whose perturbation moves a ReLU
/// across its kink are skipped, as are those with negligible gradients.
pub fn gradient_check(net: &QNetwork, state: &[f64], target: &[f64]) -> Result<f64> {
    const H: f64 = 1e-5;
    let (_, grads) = net.mse_loss_grad(state, target)?;
    let probe = Probe::new(net, state, target);
    let mut worst: f64 = 0.0;
    let mut compare = |analytic: f64, up: Option<f64>, down: Option<f64>| {
        let (Some(up), Some(down)) = (up, down) else { return };
        let numeric = (up - down) / (2.0 * H);
        if analytic.abs() + numeric.abs() > 1e-8 {
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()));
        }
    };
    for l in 0..net.weights.len() {
        let (rows, cols) = net.weights[l].dim();
        for i in 0..rows {
            let x = probe.inputs[l][i];
            for j in 0..cols {
                compare(grads.weights[l][[i, j]], probe.loss(l, j, H * x), probe.loss(l, j, -H * x));
            }
        }
        for j in 0..cols {
            compare(grads.biases[l][j], probe.loss(l, j, H), probe.loss(l, j, -H));
        }
    }
    Ok(worst)
}

/// Forward pass of one state in plain loops, kept apart from the batched
/// path. A parameter of layer `l` only shifts one pre-activation of that
/// layer, so perturbed losses are propagated from there.
struct Probe<'a> {
    net: &'a QNetwork,
    mask: &'a [f64],
    target: &'a [f64],
    /// Input of every layer.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl<'a> Probe<'a> {
    fn new(net: &'a QNetwork, state: &'a [f64], target: &'a [f64]) -> Self {
        let n = net.input_len();
        let mut inputs = vec![state[..n].to_vec()];
        let mut pre = Vec::new();
        for l in 0..net.weights.len() {
            let z = Self::layer(net, l, &inputs[l]);
            inputs.push(z.iter().copied().map(relu).collect());
            pre.push(z);
        }
        inputs.pop();
        Probe { net, mask: &state[n..], target, inputs, pre }
    }

    fn layer(net: &QNetwork, l: usize, a: &[f64]) -> Vec<f64> {
        let mut z = net.biases[l].to_vec();
        for (i, &ai) in a.iter().enumerate() {
            if ai != 0.0 {
                for (zj, &w) in z.iter_mut().zip(net.weights[l].row(i)) {
                    *zj += ai * w;
                }
            }
        }
        z
    }

    fn same_signs(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (*x > 0.0) == (*y > 0.0))
    }

    /// Loss with pre-activation `j` of layer `l` shifted by `dz`, or `None`
    /// when any ReLU changes side.
    fn loss(&self, l: usize, j: usize, dz: f64) -> Option<f64> {
        let last = self.pre.len() - 1;
        let mut z = self.pre[l].clone();
        z[j] += dz;
        if (z[j] > 0.0) != (self.pre[l][j] > 0.0) {
            return None;
        }
        if l < last {
            let da = relu(z[j]) - relu(self.pre[l][j]);
            let mut next = self.pre[l + 1].clone();
            for (n, &w) in next.iter_mut().zip(self.net.weights[l + 1].row(j)) {
                *n += da * w;
            }
            if !Self::same_signs(&next, &self.pre[l + 1]) {
                return None;
            }
            z = next;
            for k in l + 1..last {
                let a: Vec<f64> = z.iter().copied().map(relu).collect();
                let next = Self::layer(self.net, k + 1, &a);
                if !Self::same_signs(&next, &self.pre[k + 1]) {
                    return None;
                }
                z = next;
            }
        }
        let n = z.len() as f64;
        Some(z.iter().zip(self.mask).zip(self.target).map(|((&z, &m), &t)| (m * relu(z) - t).powi(2)).sum::<f64>() / n)
    }
}

/// Adam with the usual bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &QNetwork, lr: f64) -> Self {
        let zero = Grads {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        };
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: zero.clone(), v: zero }
    }

    pub fn step(&mut self, net: &mut QNetwork, grads: &Grads) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            ndarray::Zip::from(&mut net.weights[l])
                .and(&grads.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut net.biases[l])
                .and(&grads.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

/// Ring buffer of transitions. States are stored as `f32`: the encoding
/// holds small integers and 0/1 flags, which are exact at that precision.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    state_len: usize,
    states: Vec<f32>,
    next_states: Vec<f32>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    len: usize,
    head: usize,
}

/// Sampled transitions as dense matrices of full state vectors.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub dones: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_len: usize) -> Self {
        ReplayBuffer {
            capacity,
            state_len,
            states: Vec::new(),
            next_states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            len: 0,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, state: &[f64], action: usize, reward: f64, next: &[f64], done: bool) -> Result<()> {
        if state.len() != self.state_len || next.len() != self.state_len {
            return Err(Error::invalid("transition state has the wrong length"));
        }
        if self.capacity == 0 {
            return Ok(());
        }
        let k = self.state_len;
        if self.len < self.capacity {
            self.states.extend(state.iter().map(|&x| x as f32));
            self.next_states.extend(next.iter().map(|&x| x as f32));
            self.actions.push(action);
            self.rewards.push(reward);
            self.dones.push(done);
            self.len += 1;
        } else {
            let h = self.head;
            for (d, &x) in self.states[h * k..(h + 1) * k].iter_mut().zip(state) {
                *d = x as f32;
            }
            for (d, &x) in self.next_states[h * k..(h + 1) * k].iter_mut().zip(next) {
                *d = x as f32;
            }
            self.actions[h] = action;
            self.rewards[h] = reward;
            self.dones[h] = done;
        }
        self.head = (self.head + 1) % self.capacity;
        Ok(())
    }

    /// `size` distinct transitions drawn uniformly. `None` if fewer are stored.
    pub fn sample(&self, size: usize, rng: &mut Rng) -> Option<Batch> {
        if size == 0 || size > self.len {
            return None;
        }
        let picks = index::sample(rng, self.len, size);
        let k = self.state_len;
        let mut states = Array2::zeros((size, k));
        let mut next_states = Array2::zeros((size, k));
        let mut actions = Vec::with_capacity(size);
        let mut rewards = Vec::with_capacity(size);
        let mut dones = Vec::with_capacity(size);
        for (row, i) in picks.iter().enumerate() {
            for (d, &x) in states.row_mut(row).iter_mut().zip(&self.states[i * k..(i + 1) * k]) {
                *d = x as f64;
            }
            for (d, &x) in next_states.row_mut(row).iter_mut().zip(&self.next_states[i * k..(i + 1) * k]) {
                *d = x as f64;
            }
            actions.push(self.actions[i]);
            rewards.push(self.rewards[i]);
            dones.push(self.dones[i]);
        }
        Some(Batch { states, actions, rewards, next_states, dones })
    }
}

fn split_batch<'a>(net: &QNetwork, states: &'a Array2<f64>) -> (ArrayView2<'a, f64>, ArrayView2<'a, f64>) {
    let n = net.input_len();
    (states.slice(s![.., ..n]), states.slice(s![.., n..]))
}

/// Bootstrapped regression targets. Maxima range over the feasible actions
/// recorded in each next state's mask.
pub fn td_target(batch: &Batch, online: &QNetwork, target: &QNetwork, gamma: f64, algo: Algo) -> Result<Vec<f64>> {
    let (x, m) = split_batch(target, &batch.next_states);
    let q_target = target.forward_batch(x, m)?;
    let q_online = match algo {
        Algo::Ddqn => Some(online.forward_batch(x, m)?),
        Algo::Dqn => None,
    };
    let mut y = Vec::with_capacity(batch.rewards.len());
    for i in 0..batch.rewards.len() {
        if batch.dones[i] {
            y.push(batch.rewards[i]);
            continue;
        }
        let feasible = || (0..m.ncols()).filter(move |&a| m[[i, a]] > 0.0);
        let boot = match &q_online {
            None => feasible().map(|a| q_target[[i, a]]).fold(f64::NEG_INFINITY, f64::max),
            Some(qo) => {
                let mut best: Option<usize> = None;
                for a in feasible() {
                    if best.is_none_or(|b| qo[[i, a]] > qo[[i, b]]) {
                        best = Some(a);
                    }
                }
                best.map_or(f64::NEG_INFINITY, |a| q_target[[i, a]])
            }
        };
        let boot = if boot.is_finite() { boot } else { 0.0 };
        y.push(batch.rewards[i] + gamma * boot);
    }
    Ok(y)
}

/// One optimizer step on a sampled batch followed by a soft target update.
/// Returns the pre-update loss, or `None` when the buffer is too small.
pub fn train_step(
    online: &mut QNetwork,
    target: &mut QNetwork,
    adam: &mut Adam,
    buffer: &ReplayBuffer,
    config: &AgentConfig,
    rng: &mut Rng,
) -> Result<Option<f64>> {
    let Some(batch) = buffer.sample(config.batch, rng) else {
        return Ok(None);
    };
    let y = td_target(&batch, online, target, config.gamma, config.algo)?;
    let (x, m) = split_batch(online, &batch.states);
    let (loss, grads) = online.td_loss_grad(x, m, &batch.actions, &y)?;
    adam.step(online, &grads);
    online.soft_update_into(target, config.tau);
    Ok(Some(loss))
}

/// Epsilon-greedy choice among the actions whose mask entry is set; greedy
/// ties are broken uniformly.
pub fn select_action(net: &QNetwork, state: &[f64], eps: f64, rng: &mut Rng) -> Result<usize> {
    if state.len() != net.state_len() {
        return Err(Error::invalid("state has the wrong length"));
    }
    let mask = &state[net.input_len()..];
    let feasible: Vec<usize> = (0..mask.len()).filter(|&a| mask[a] > 0.0).collect();
    if feasible.is_empty() {
        return Err(Error::contract("no feasible action"));
    }
    if eps > 0.0 && rng.gen::<f64>() < eps {
        return Ok(feasible[rng.gen_range(0..feasible.len())]);
    }
    let q = net.forward(state)?;
    Ok(argmax_random_tie(&q, &feasible, rng))
}

fn argmax_random_tie(q: &[f64], feasible: &[usize], rng: &mut Rng) -> usize {
    let best = feasible.iter().map(|&a| q[a]).fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = feasible.iter().copied().filter(|&a| q[a] == best).collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.gen_range(0..ties.len())]
    }
}
