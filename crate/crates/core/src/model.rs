//! Hashed bag-of-tokens features and a one-hidden-layer MLP classifier with
//! exact backpropagation and Adam.
//!
//! Parameters live in one flat `f64` vector, layer-major: `W1` (`D x H`, row
//! per feature), `b1` (`H`), `W2` (`H x C`, row per hidden unit), `b2` (`C`).
//! Feature vectors are sparse, so a sample only touches the `W1` rows of the
//! tokens it contains.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::textvec::tokenize;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Upper bound on a per-sample loss, `-ln(f64::EPSILON)`.
pub fn max_loss() -> f64 {
    -f64::EPSILON.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub class_count: usize,
}

impl Architecture {
    pub const DEFAULT_FEATURE_DIM: usize = 1 << 14;
    pub const DEFAULT_HIDDEN_DIM: usize = 64;

    pub fn new(feature_dim: usize, hidden_dim: usize, class_count: usize) -> Result<Self> {
        let arch = Self {
            feature_dim,
            hidden_dim,
            class_count,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_classes(class_count: usize) -> Self {
        Self {
            feature_dim: Self::DEFAULT_FEATURE_DIM,
            hidden_dim: Self::DEFAULT_HIDDEN_DIM,
            class_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.hidden_dim == 0 || self.class_count == 0 {
            return Err(Error::Config("architecture dimensions must be positive".into()));
        }
        if !self.feature_dim.is_power_of_two() {
            return Err(Error::Config(format!(
                "feature dimension {} is not a power of two",
                self.feature_dim
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (d, h, c) = (self.feature_dim, self.hidden_dim, self.class_count);
        d * h + h + h * c + c
    }

    fn b1_offset(&self) -> usize {
        self.feature_dim * self.hidden_dim
    }

    fn w2_offset(&self) -> usize {
        self.b1_offset() + self.hidden_dim
    }

    fn b2_offset(&self) -> usize {
        self.w2_offset() + self.hidden_dim * self.class_count
    }
}

/// Sparse feature vector, indices strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Features {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Features {
    pub fn from_dense(dense: &[f64]) -> Self {
        let mut f = Features::default();
        for (i, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                f.indices.push(i);
                f.values.push(v);
            }
        }
        f
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

/// Hashed token counts, L2-normalized.
pub fn featurize_sparse(text: &str, dim: usize) -> Features {
    debug_assert!(dim.is_power_of_two());
    let mut counts: Vec<(usize, f64)> = tokenize(text)
        .iter()
        .map(|t| ((fnv1a64(t.as_bytes()) % dim as u64) as usize, 1.0))
        .collect();
    counts.sort_unstable_by_key(|&(i, _)| i);
    let mut f = Features::default();
    for (i, c) in counts {
        if f.indices.last() == Some(&i) {
            *f.values.last_mut().unwrap() += c;
        } else {
            f.indices.push(i);
            f.values.push(c);
        }
    }
    let norm = f.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        f.values.iter_mut().for_each(|v| *v /= norm);
    }
    f
}

/// Dense form of [`featurize_sparse`].
pub fn featurize(text: &str, dim: usize) -> Vec<f64> {
    featurize_sparse(text, dim).to_dense(dim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub arch: Architecture,
    pub params: Vec<f64>,
}

impl ModelState {
    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng::stream(seed, Purpose::Init, 0);
        let mut params = vec![0.0; arch.param_count()];
        let l1 = (6.0 / (arch.feature_dim + arch.hidden_dim) as f64).sqrt();
        let l2 = (6.0 / (arch.hidden_dim + arch.class_count) as f64).sqrt();
        for p in &mut params[..arch.b1_offset()] {
            *p = rng.random_range(-l1..l1);
        }
        let (w2, b2) = (arch.w2_offset(), arch.b2_offset());
        for p in &mut params[w2..b2] {
            *p = rng.random_range(-l2..l2);
        }
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            params: vec![0.0; arch.param_count()],
        }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::LengthMismatch {
                expected: arch.param_count(),
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self { arch, params })
    }

    pub fn features(&self, text: &str) -> Features {
        featurize_sparse(text, self.arch.feature_dim)
    }

    fn hidden_pre(&self, x: &Features) -> Vec<f64> {
        let h = self.arch.hidden_dim;
        let b1 = self.arch.b1_offset();
        let mut pre = self.params[b1..b1 + h].to_vec();
        for (i, v) in x.iter() {
            let row = &self.params[i * h..(i + 1) * h];
            for (acc, w) in pre.iter_mut().zip(row) {
                *acc += v * w;
            }
        }
        pre
    }

    fn logits_from_hidden(&self, hidden: &[f64]) -> Vec<f64> {
        let (h, c) = (self.arch.hidden_dim, self.arch.class_count);
        let w2 = self.arch.w2_offset();
        let b2 = self.arch.b2_offset();
        let mut z = self.params[b2..b2 + c].to_vec();
        for (k, &a) in hidden.iter().enumerate().take(h) {
            if a == 0.0 {
                continue;
            }
            let row = &self.params[w2 + k * c..w2 + (k + 1) * c];
            for (acc, w) in z.iter_mut().zip(row) {
                *acc += a * w;
            }
        }
        z
    }

    /// Output logits for sparse features.
    pub fn logits(&self, x: &Features) -> Vec<f64> {
        let hidden: Vec<f64> = self.hidden_pre(x).into_iter().map(|v| v.max(0.0)).collect();
        self.logits_from_hidden(&hidden)
    }

    /// Class probabilities for sparse features.
    pub fn probabilities(&self, x: &Features) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Class probabilities for a dense feature vector of length `D`.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.arch.feature_dim {
            return Err(Error::LengthMismatch {
                expected: self.arch.feature_dim,
                actual: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(self.probabilities(&Features::from_dense(features)))
    }

    pub fn predict(&self, x: &Features) -> usize {
        argmax(&self.logits(x))
    }

    /// Cross-entropy of one labeled feature vector, capped at [`max_loss`].
    pub fn loss(&self, x: &Features, label: usize) -> Result<f64> {
        self.check_label(label)?;
        let z = self.logits(x);
        Ok(cross_entropy(&z, label))
    }

    /// `-ln p(label | text)`.
    pub fn sample_loss(&self, sample: &Sample) -> Result<f64> {
        self.loss(&self.features(&sample.text), sample.label)
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.arch.class_count {
            return Err(Error::InvalidInput(format!(
                "label {label} outside 0..{}",
                self.arch.class_count
            )));
        }
        Ok(())
    }

    /// Gradient of the weighted mean cross-entropy over `batch`. Weights
    /// default to 1 and are normalized by their sum.
    pub fn batch_grad(&self, batch: &[(&Features, usize)], weights: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut ws = GradWorkspace::new(self.arch);
        self.accumulate_batch(&mut ws, batch, weights)?;
        Ok(ws.grad)
    }

    /// Adds the weighted mean cross-entropy gradient of `batch` into `ws` and
    /// returns the weighted mean loss.
    pub fn accumulate_batch(
        &self,
        ws: &mut GradWorkspace,
        batch: &[(&Features, usize)],
        weights: Option<&[f64]>,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("gradient of an empty batch".into()));
        }
        if let Some(w) = weights {
            if w.len() != batch.len() {
                return Err(Error::LengthMismatch {
                    expected: batch.len(),
                    actual: w.len(),
                });
            }
        }
        let total: f64 = weights.map_or(batch.len() as f64, |w| w.iter().sum());
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::InvalidInput("batch weights must have a positive finite sum".into()));
        }
        let mut loss = 0.0;
        for (k, &(x, label)) in batch.iter().enumerate() {
            self.check_label(label)?;
            let w = weights.map_or(1.0, |w| w[k]) / total;
            loss += w * self.accumulate_sample(ws, x, label, w);
        }
        Ok(loss)
    }

    /// Adds `scale * grad loss(x, label)` into `ws`; returns the loss.
    pub fn accumulate_sample(&self, ws: &mut GradWorkspace, x: &Features, label: usize, scale: f64) -> f64 {
        let (h, c) = (self.arch.hidden_dim, self.arch.class_count);
        let (b1, w2, b2) = (self.arch.b1_offset(), self.arch.w2_offset(), self.arch.b2_offset());
        let pre = self.hidden_pre(x);
        let hidden: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
        let z = self.logits_from_hidden(&hidden);
        let loss = cross_entropy(&z, label);
        let mut delta_out = softmax(&z);
        delta_out[label] -= 1.0;
        delta_out.iter_mut().for_each(|d| *d *= scale);

        let grad = &mut ws.grad;
        for (g, d) in grad[b2..b2 + c].iter_mut().zip(&delta_out) {
            *g += d;
        }
        let mut delta_hidden = vec![0.0; h];
        for k in 0..h {
            let row = &self.params[w2 + k * c..w2 + (k + 1) * c];
            let grow = &mut grad[w2 + k * c..w2 + (k + 1) * c];
            let mut back = 0.0;
            for j in 0..c {
                grow[j] += hidden[k] * delta_out[j];
                back += row[j] * delta_out[j];
            }
            if pre[k] > 0.0 {
                delta_hidden[k] = back;
            }
        }
        for (g, d) in grad[b1..b1 + h].iter_mut().zip(&delta_hidden) {
            *g += d;
        }
        for (i, v) in x.iter() {
            if !ws.marked[i] {
                ws.marked[i] = true;
                ws.rows.push(i);
            }
            for (g, d) in grad[i * h..(i + 1) * h].iter_mut().zip(&delta_hidden) {
                *g += v * d;
            }
        }
        loss
    }
}

/// Reusable gradient buffer that remembers which `W1` rows were written, so
/// clearing costs only the touched rows plus the dense tail.
#[derive(Debug, Clone)]
pub struct GradWorkspace {
    arch: Architecture,
    pub grad: Vec<f64>,
    rows: Vec<usize>,
    marked: Vec<bool>,
}

impl GradWorkspace {
    pub fn new(arch: Architecture) -> Self {
        Self {
            arch,
            grad: vec![0.0; arch.param_count()],
            rows: Vec::new(),
            marked: vec![false; arch.feature_dim],
        }
    }

    /// `W1` rows written since the last clear.
    pub fn touched_rows(&self) -> &[usize] {
        &self.rows
    }

    /// Offset of the dense tail (`b1`, `W2`, `b2`).
    pub fn tail_offset(&self) -> usize {
        self.arch.b1_offset()
    }

    pub fn hidden_dim(&self) -> usize {
        self.arch.hidden_dim
    }

    pub fn clear(&mut self) {
        let h = self.arch.hidden_dim;
        for &i in &self.rows {
            self.grad[i * h..(i + 1) * h].iter_mut().for_each(|g| *g = 0.0);
            self.marked[i] = false;
        }
        self.rows.clear();
        let tail = self.tail_offset();
        self.grad[tail..].iter_mut().for_each(|g| *g = 0.0);
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    (lse - z[label]).clamp(0.0, max_loss())
}

/// Lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, param_count: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn adam_step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if grad.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::LengthMismatch {
                expected: params.len(),
                actual: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, m), v), &g) in params.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(grad) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Checkpoint layout: `D`, `H`, `C` as little-endian `u64`, then the
/// parameters as little-endian `f64`.
pub fn encode_checkpoint(model: &ModelState) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * model.params.len());
    for dim in [model.arch.feature_dim, model.arch.hidden_dim, model.arch.class_count] {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelState> {
    if bytes.len() < 24 {
        return Err(Error::InvalidInput("checkpoint shorter than its header".into()));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap()) as usize;
    let arch = Architecture::new(word(0), word(1), word(2))?;
    let body = &bytes[24..];
    if body.len() != 8 * arch.param_count() {
        return Err(Error::LengthMismatch {
            expected: 8 * arch.param_count(),
            actual: body.len(),
        });
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ModelState::from_params(arch, params)
}

pub fn write_checkpoint(path: &Path, model: &ModelState) -> Result<()> {
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelState> {
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
