//! Elastic penalty on parameter drift, weighted by a diagonal empirical
//! Fisher estimate, and the similarity-scaled penalty strength.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::model::{GradWorkspace, ModelState};
use crate::textvec::{cosine, SparseVector};

/// Parameter snapshot of the previous model and its Fisher diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorState {
    pub anchor_params: Vec<f64>,
    pub fisher: Vec<f64>,
}

impl AnchorState {
    pub fn new(anchor_params: Vec<f64>, fisher: Vec<f64>) -> Result<Self> {
        if anchor_params.len() != fisher.len() {
            return Err(Error::LengthMismatch {
                expected: anchor_params.len(),
                actual: fisher.len(),
            });
        }
        if fisher.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::InvalidInput("fisher entries must be finite and non-negative".into()));
        }
        Ok(Self { anchor_params, fisher })
    }

    fn check(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.anchor_params.len() {
            return Err(Error::LengthMismatch {
                expected: self.anchor_params.len(),
                actual: params.len(),
            });
        }
        Ok(())
    }

    /// `lambda * sum_i F_i (theta_i - anchor_i)^2`
    pub fn penalty(&self, params: &[f64], lambda: f64) -> Result<f64> {
        self.check(params)?;
        let sum: f64 = params
            .iter()
            .zip(&self.anchor_params)
            .zip(&self.fisher)
            .map(|((p, a), f)| f * (p - a) * (p - a))
            .sum();
        Ok(lambda * sum)
    }

    pub fn penalty_grad(&self, params: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; params.len()];
        self.add_penalty_grad(params, lambda, &mut out)?;
        Ok(out)
    }

    /// Adds `2 lambda F_i (theta_i - anchor_i)` into `grad`.
    pub fn add_penalty_grad(&self, params: &[f64], lambda: f64, grad: &mut [f64]) -> Result<()> {
        self.check(params)?;
        if grad.len() != params.len() {
            return Err(Error::LengthMismatch {
                expected: params.len(),
                actual: grad.len(),
            });
        }
        let scale = 2.0 * lambda;
        for (((g, p), a), f) in grad.iter_mut().zip(params).zip(&self.anchor_params).zip(&self.fisher) {
            *g += scale * f * (p - a);
        }
        Ok(())
    }

    /// Two length-prefixed little-endian `f64` arrays: parameters, then Fisher.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 16 * self.fisher.len());
        for arr in [&self.anchor_params, &self.fisher] {
            out.extend_from_slice(&(arr.len() as u64).to_le_bytes());
            for v in arr.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut read_array = || -> Result<Vec<f64>> {
            let header = bytes
                .get(pos..pos + 8)
                .ok_or_else(|| Error::InvalidInput("truncated anchor checkpoint".into()))?;
            let len = u64::from_le_bytes(header.try_into().unwrap()) as usize;
            pos += 8;
            let body = bytes
                .get(pos..pos + 8 * len)
                .ok_or_else(|| Error::InvalidInput("truncated anchor checkpoint".into()))?;
            pos += 8 * len;
            Ok(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let params = read_array()?;
        let fisher = read_array()?;
        if pos != bytes.len() {
            return Err(Error::InvalidInput("trailing bytes in anchor checkpoint".into()));
        }
        AnchorState::new(params, fisher)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Empirical diagonal Fisher: mean over samples of the squared per-sample
/// loss gradient.
pub fn estimate_fisher<'a>(model: &ModelState, samples: impl IntoIterator<Item = &'a Sample>) -> Result<Vec<f64>> {
    let mut fisher = vec![0.0; model.params.len()];
    let mut ws = GradWorkspace::new(model.arch);
    let mut count = 0usize;
    for sample in samples {
        if sample.label >= model.arch.class_count {
            return Err(Error::InvalidInput(format!("sample {:?} has label {}", sample.id, sample.label)));
        }
        count += 1;
        ws.clear();
        model.accumulate_sample(&mut ws, &model.features(&sample.text), sample.label, 1.0);
        let h = ws.hidden_dim();
        let add_squares = |fisher: &mut [f64], grad: &[f64]| {
            for (f, g) in fisher.iter_mut().zip(grad) {
                *f += g * g;
            }
        };
        for &row in ws.touched_rows() {
            let span = row * h..(row + 1) * h;
            add_squares(&mut fisher[span.clone()], &ws.grad[span]);
        }
        let tail = ws.tail_offset();
        add_squares(&mut fisher[tail..], &ws.grad[tail..]);
    }
    if count == 0 {
        return Err(Error::InvalidInput("Fisher estimate needs at least one sample".into()));
    }
    let n = count as f64;
    fisher.iter_mut().for_each(|f| *f /= n);
    Ok(fisher)
}

pub fn penalty(model: &ModelState, anchor: &AnchorState, lambda: f64) -> Result<f64> {
    anchor.penalty(&model.params, lambda)
}

pub fn penalty_grad(model: &ModelState, anchor: &AnchorState, lambda: f64) -> Result<Vec<f64>> {
    anchor.penalty_grad(&model.params, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaConfig {
    pub lambda_base: f64,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        Self { lambda_base: 2000.0 }
    }
}

/// `lambda_base * cosine(V(current data), V(stored exemplars))`. An empty
/// store has the zero vector and yields 0.
pub fn adaptive_lambda(cfg: LambdaConfig, current: &SparseVector, exemplars: &SparseVector) -> f64 {
    cfg.lambda_base * cosine(current, exemplars).clamp(0.0, 1.0)
}
