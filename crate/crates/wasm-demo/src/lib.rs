//! Browser bindings for the demo page in `www/`.
//!
//! Each exported function returns a JSON string:
//!
//! - `score_text`: BLEU-4, METEOR and ROUGE-L of one candidate sentence.
//! - `forgetting_curves`: first-partition accuracy after every step for
//!   four strategies on a small drifting stream.
//! - `adaptive_lambda`: the similarity-scaled penalty strength for two
//!   sets of lines.
//!
//! The `*_json` functions hold the logic so they can be tested natively.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use repeat_core::corpus::{synthesize, DriftConfig, Sample};
use repeat_core::exemplar::{ExemplarStore, PartitionExemplars, StoredExemplar};
use repeat_core::metrics::{meteor, rouge_l, sentence_bleu};
use repeat_core::report::{omega_summaries, Metric};
use repeat_core::strategy::{run_stream, step_lambda, Budget, StrategyConfig, StrategyKind};
use repeat_core::textvec::{cosine, dataset_vector, fit_samples};
use repeat_core::Result;

/// Strategies the curve demo trains, cheapest first.
pub const CURVE_STRATEGIES: [StrategyKind; 4] = [StrategyKind::Ft, StrategyKind::Ewc, StrategyKind::Emr, StrategyKind::Repeat];

pub fn score_text_json(candidate: &str, reference: &str) -> Value {
    let c: Vec<&str> = candidate.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    json!({
        "bleu4": sentence_bleu(&c, &r),
        "meteor": meteor(&c, &r),
        "rouge_l": rouge_l(&c, &r),
    })
}

/// Settings of the small stream behind the curve demo.
#[derive(Debug, Clone, Copy)]
pub struct CurveParams {
    pub drift: f64,
    pub budget: f64,
    pub lambda_base: f64,
    pub seed: u64,
}

fn demo_stream(p: CurveParams) -> Result<repeat_core::corpus::Stream> {
    synthesize(&DriftConfig {
        train_size: 300,
        valid_size: 10,
        test_size: 100,
        drift_strength: p.drift,
        seed: p.seed,
        ..DriftConfig::default()
    })
}

fn demo_config(kind: StrategyKind, p: CurveParams) -> StrategyConfig {
    StrategyConfig {
        kind,
        epochs: 5,
        budget: Budget::Fraction(p.budget),
        lambda_base: p.lambda_base,
        seed: p.seed,
        feature_dim: 2048,
        hidden_dim: 16,
        ..StrategyConfig::default()
    }
}

/// Accuracy on the first test set after every step, plus Ω, for each
/// strategy in [`CURVE_STRATEGIES`].
pub fn forgetting_curves_json(p: CurveParams) -> Result<Value> {
    let stream = demo_stream(p)?;
    let mut out = Vec::new();
    for kind in CURVE_STRATEGIES {
        let state = run_stream(&demo_config(kind, p), &stream)?;
        let curve: Vec<f64> = state
            .history
            .iter()
            .filter(|r| r.test == 1)
            .map(|r| r.scores.accuracy)
            .collect();
        let omega = omega_summaries(&state.history)?
            .into_iter()
            .find(|s| s.metric == Metric::Accuracy)
            .map(|s| s.overall);
        let lambdas: Vec<f64> = state.steps.iter().map(|s| s.lambda).collect();
        out.push(json!({
            "strategy": kind.name(),
            "first_test_accuracy": curve,
            "omega_accuracy": omega,
            "lambda": lambdas,
            "store_sizes": state.store.sizes(),
        }));
    }
    Ok(json!({ "drift": p.drift, "runs": out }))
}

fn lines_as_samples(text: &str, prefix: &str) -> Vec<Sample> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| Sample::new(format!("{prefix}{i}"), l, 0, ""))
        .collect()
}

/// Penalty strength for new data `current` against stored exemplars
/// `stored`, one sample per non-empty line.
pub fn adaptive_lambda_json(current: &str, stored: &str, lambda_base: f64) -> Result<Value> {
    let train = lines_as_samples(current, "c");
    let kept = lines_as_samples(stored, "s");
    let mut store = ExemplarStore::new(kept.len());
    store.partitions.push(PartitionExemplars {
        t: 1,
        exemplars: kept
            .into_iter()
            .map(|sample| StoredExemplar {
                sample,
                stored_loss: 0.0,
                source_partition: 1,
            })
            .collect(),
    });
    let lambda = step_lambda(lambda_base, &train, &store)?;
    let similarity = if train.is_empty() || store.is_empty() {
        0.0
    } else {
        let tfidf = fit_samples(train.iter().chain(store.samples()))?;
        cosine(&dataset_vector(&tfidf, &train)?, &dataset_vector(&tfidf, store.samples())?)
    };
    Ok(json!({ "lambda": lambda, "similarity": similarity }))
}

fn to_js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn score_text(candidate: &str, reference: &str) -> String {
    score_text_json(candidate, reference).to_string()
}

#[wasm_bindgen]
pub fn forgetting_curves(drift: f64, budget: f64, lambda_base: f64, seed: u32) -> std::result::Result<String, JsError> {
    to_js(forgetting_curves_json(CurveParams {
        drift,
        budget,
        lambda_base,
        seed: seed as u64,
    }))
}

#[wasm_bindgen]
pub fn adaptive_lambda(current: &str, stored: &str, lambda_base: f64) -> std::result::Result<String, JsError> {
    to_js(adaptive_lambda_json(current, stored, lambda_base))
}
