//! Classification scores, BLEU-4, METEOR, ROUGE-L and the stream-level
//! average Ω.
//!
//! Every ratio that would be 0/0 is taken as 0.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_labels(preds: &[usize], golds: &[usize], positive: usize) -> Result<Self> {
        if preds.len() != golds.len() {
            return Err(Error::LengthMismatch {
                expected: golds.len(),
                actual: preds.len(),
            });
        }
        let mut c = ConfusionCounts::default();
        for (&p, &g) in preds.iter().zip(golds) {
            match (p == positive, g == positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fp) as f64)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fn_) as f64)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        ratio(2.0 * p * r, p + r)
    }
}

/// Precision, recall and F1 of `positive_class`.
pub fn prf1(preds: &[usize], golds: &[usize], positive_class: usize) -> Result<(f64, f64, f64)> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("prf1 of an empty prediction list".into()));
    }
    let c = ConfusionCounts::from_labels(preds, golds, positive_class)?;
    Ok((c.precision(), c.recall(), c.f1()))
}

/// Scores recorded for one test set after one training step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy plus precision/recall/F1: positive class 1 for binary tasks,
/// unweighted macro average over all classes otherwise.
pub fn classification_scores(preds: &[usize], golds: &[usize], class_count: usize) -> Result<ClassificationScores> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("scores of an empty prediction list".into()));
    }
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            expected: golds.len(),
            actual: preds.len(),
        });
    }
    let correct = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    let accuracy = correct as f64 / preds.len() as f64;
    let (precision, recall, f1) = if class_count == 2 {
        prf1(preds, golds, 1)?
    } else {
        let mut sums = (0.0, 0.0, 0.0);
        for c in 0..class_count {
            let (p, r, f) = prf1(preds, golds, c)?;
            sums = (sums.0 + p, sums.1 + r, sums.2 + f);
        }
        let n = class_count as f64;
        (sums.0 / n, sums.1 / n, sums.2 / n)
    };
    Ok(ClassificationScores {
        accuracy,
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BleuMode {
    /// Clipped n-gram counts pooled over the corpus.
    Corpus,
    /// Mean of per-sentence scores with add-one smoothing for n >= 2.
    SentenceSmoothed,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(|t| t.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// (clipped matches, candidate n-gram total) for n = 1..=4.
fn clipped_counts<S: AsRef<str>>(cand: &[S], reference: &[S]) -> [(usize, usize); 4] {
    let mut out = [(0, 0); 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let n = k + 1;
        let c = ngram_counts(cand, n);
        let r = ngram_counts(reference, n);
        let matched = c.iter().map(|(g, &cnt)| cnt.min(r.get(g).copied().unwrap_or(0))).sum();
        *slot = (matched, cand.len().saturating_sub(n - 1));
    }
    out
}

fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c > r {
        1.0
    } else if c == 0 {
        0.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

fn geometric(precisions: &[f64; 4]) -> f64 {
    if precisions.iter().any(|&p| p <= 0.0) {
        return 0.0;
    }
    (precisions.iter().map(|p| 0.25 * p.ln()).sum::<f64>()).exp()
}

/// Smoothed BLEU-4 of a single sentence pair.
pub fn sentence_bleu<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    let counts = clipped_counts(candidate, reference);
    let mut p = [0.0; 4];
    for (k, &(m, total)) in counts.iter().enumerate() {
        p[k] = if k == 0 {
            ratio(m as f64, total as f64)
        } else {
            (m as f64 + 1.0) / (total as f64 + 1.0)
        };
    }
    brevity_penalty(candidate.len(), reference.len()) * geometric(&p)
}

pub fn bleu4<S: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<S>], mode: BleuMode) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::LengthMismatch {
            expected: references.len(),
            actual: candidates.len(),
        });
    }
    if candidates.is_empty() {
        return Err(Error::InvalidInput("BLEU of an empty corpus".into()));
    }
    Ok(match mode {
        BleuMode::Corpus => {
            let mut pooled = [(0usize, 0usize); 4];
            let (mut c, mut r) = (0, 0);
            for (cand, reference) in candidates.iter().zip(references) {
                for (acc, (m, t)) in pooled.iter_mut().zip(clipped_counts(cand, reference)) {
                    acc.0 += m;
                    acc.1 += t;
                }
                c += cand.len();
                r += reference.len();
            }
            let p = pooled.map(|(m, t)| ratio(m as f64, t as f64));
            brevity_penalty(c, r) * geometric(&p)
        }
        BleuMode::SentenceSmoothed => {
            candidates
                .iter()
                .zip(references)
                .map(|(c, r)| sentence_bleu(c, r))
                .sum::<f64>()
                / candidates.len() as f64
        }
    })
}

/// Longest common subsequence length.
pub fn lcs_len<S: AsRef<str>>(x: &[S], y: &[S]) -> usize {
    let mut prev = vec![0usize; y.len() + 1];
    let mut cur = vec![0usize; y.len() + 1];
    for a in x {
        for (j, b) in y.iter().enumerate() {
            cur[j + 1] = if a.as_ref() == b.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[y.len()]
}

/// ROUGE-L of candidate `x` against reference `y`, with
/// `P = LCS / |y|`, `R = LCS / |x|`, `beta = P / R` and
/// `F = (1 + beta^2) P R / (R + beta^2 P)`.
pub fn rouge_l<S: AsRef<str>>(x: &[S], y: &[S]) -> f64 {
    let lcs = lcs_len(x, y) as f64;
    let p = ratio(lcs, y.len() as f64);
    let r = ratio(lcs, x.len() as f64);
    if p == 0.0 || r == 0.0 {
        return 0.0;
    }
    let beta2 = (p / r) * (p / r);
    ratio((1.0 + beta2) * p * r, r + beta2 * p)
}

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// METEOR with exact unigram matching. Each candidate token, left to right,
/// takes the first unused equal token of the reference.
pub fn meteor<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    let mut used = vec![false; reference.len()];
    let mut alignment: Vec<(usize, usize)> = Vec::new();
    for (i, c) in candidate.iter().enumerate() {
        if let Some(j) = (0..reference.len()).find(|&j| !used[j] && reference[j].as_ref() == c.as_ref()) {
            used[j] = true;
            alignment.push((i, j));
        }
    }
    let matches = alignment.len();
    if matches == 0 {
        return 0.0;
    }
    let chunks = 1 + alignment
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let p = matches as f64 / candidate.len() as f64;
    let r = matches as f64 / reference.len() as f64;
    let frag = chunks as f64 / matches as f64;
    let fmean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    (1.0 - METEOR_GAMMA * frag.powf(METEOR_BETA)) * fmean
}

/// Lower-triangular score table: `(j, i)` is the score on test set `j`
/// after training step `i`, `1 <= j <= i <= steps`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OmegaMatrix {
    cells: BTreeMap<(usize, usize), f64>,
    steps: usize,
}

impl OmegaMatrix {
    pub fn new(steps: usize) -> Self {
        Self {
            cells: BTreeMap::new(),
            steps,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn set(&mut self, j: usize, i: usize, score: f64) -> Result<()> {
        if j == 0 || j > i || i > self.steps {
            return Err(Error::InvalidInput(format!(
                "cell ({j}, {i}) outside the triangle of {} steps",
                self.steps
            )));
        }
        if !score.is_finite() {
            return Err(Error::NonFinite("omega cell"));
        }
        self.cells.insert((j, i), score);
        Ok(())
    }

    pub fn get(&self, j: usize, i: usize) -> Option<f64> {
        self.cells.get(&(j, i)).copied()
    }

    pub fn is_complete(&self) -> bool {
        (1..=self.steps).all(|i| (1..=i).all(|j| self.cells.contains_key(&(j, i))))
    }
}

/// Per-step averages `Ω_i = mean_j Ω(j, i)` and their mean `Ω`.
pub fn omega(matrix: &OmegaMatrix) -> Result<(Vec<f64>, f64)> {
    if matrix.steps == 0 {
        return Err(Error::InvalidInput("omega of an empty triangle".into()));
    }
    let mut per_step = Vec::with_capacity(matrix.steps);
    for i in 1..=matrix.steps {
        let mut sum = 0.0;
        for j in 1..=i {
            sum += matrix
                .get(j, i)
                .ok_or_else(|| Error::InvalidInput(format!("omega cell ({j}, {i}) is missing")))?;
        }
        per_step.push(sum / i as f64);
    }
    let overall = per_step.iter().sum::<f64>() / per_step.len() as f64;
    Ok((per_step, overall))
}
