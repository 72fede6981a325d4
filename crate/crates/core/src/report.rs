//! Post-processing of evaluation histories: Ω summaries, forgetting curves
//! and relative drops, medians across seeds, and the history CSV format.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{omega, ClassificationScores, OmegaMatrix};
use crate::strategy::{EvalRecord, StrategyKind};

/// Which classification score a summary is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
        }
    }

    pub fn of(self, s: &ClassificationScores) -> f64 {
        match self {
            Metric::Accuracy => s.accuracy,
            Metric::Precision => s.precision,
            Metric::Recall => s.recall,
            Metric::F1 => s.f1,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

/// Median of a non-empty list; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Records of one run, keyed by `(strategy, seed)`.
pub fn group_runs(history: &[EvalRecord]) -> BTreeMap<(StrategyKind, u64), Vec<&EvalRecord>> {
    let mut runs: BTreeMap<(StrategyKind, u64), Vec<&EvalRecord>> = BTreeMap::new();
    for r in history {
        runs.entry((r.strategy, r.seed)).or_default().push(r);
    }
    runs
}

/// Builds the triangle of one run; fails unless it is complete.
pub fn omega_matrix<'a>(records: impl IntoIterator<Item = &'a EvalRecord>, metric: Metric) -> Result<OmegaMatrix> {
    let records: Vec<&EvalRecord> = records.into_iter().collect();
    let steps = records.iter().map(|r| r.step).max().unwrap_or(0);
    let mut matrix = OmegaMatrix::new(steps);
    for r in &records {
        if matrix.get(r.test, r.step).is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate record for test {} at step {}",
                r.test, r.step
            )));
        }
        matrix.set(r.test, r.step, metric.of(&r.scores))?;
    }
    if !matrix.is_complete() {
        return Err(Error::InvalidInput(format!(
            "history of {} steps is missing cells",
            steps
        )));
    }
    Ok(matrix)
}

/// Ω of one run for one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaSummary {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub metric: Metric,
    pub per_step: Vec<f64>,
    pub overall: f64,
}

/// Ω for every run and metric, sorted by strategy, seed, then metric.
pub fn omega_summaries(history: &[EvalRecord]) -> Result<Vec<OmegaSummary>> {
    let mut out = Vec::new();
    for ((strategy, seed), records) in group_runs(history) {
        for metric in Metric::ALL {
            let (per_step, overall) = omega(&omega_matrix(records.iter().copied(), metric)?)?;
            out.push(OmegaSummary {
                strategy,
                seed,
                metric,
                per_step,
                overall,
            });
        }
    }
    Ok(out)
}

/// Median and mean of Ω over seeds, per strategy.
pub fn omega_aggregates(summaries: &[OmegaSummary], metric: Metric) -> BTreeMap<StrategyKind, (f64, f64)> {
    let mut by_kind: BTreeMap<StrategyKind, Vec<f64>> = BTreeMap::new();
    for s in summaries.iter().filter(|s| s.metric == metric) {
        by_kind.entry(s.strategy).or_default().push(s.overall);
    }
    by_kind
        .into_iter()
        .map(|(k, v)| (k, (median(&v).unwrap(), mean(&v).unwrap())))
        .collect()
}

/// Score history of one test partition across the steps after it was
/// learned. `seed` is `None` on the median-over-seeds aggregate rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForgettingRecord {
    pub strategy: StrategyKind,
    pub seed: Option<u64>,
    pub test: usize,
    /// Scores at steps `test..=K`.
    pub scores: Vec<f64>,
    /// `(score at step test - score at step K) / score at step test`; absent
    /// when the first score is 0.
    pub relative_drop: Option<f64>,
}

pub fn relative_drop(first: f64, last: f64) -> Option<f64> {
    (first > 0.0).then(|| (first - last) / first)
}

/// One record per (strategy, seed, test partition), followed by the
/// median-over-seeds records of every (strategy, test partition).
pub fn forgetting_report(history: &[EvalRecord], metric: Metric) -> Result<Vec<ForgettingRecord>> {
    let mut out = Vec::new();
    let mut per_kind: BTreeMap<(StrategyKind, usize), Vec<ForgettingRecord>> = BTreeMap::new();
    for ((strategy, seed), records) in group_runs(history) {
        let matrix = omega_matrix(records.iter().copied(), metric)?;
        let k = matrix.steps();
        for j in 1..=k {
            let scores: Vec<f64> = (j..=k).map(|i| matrix.get(j, i).unwrap()).collect();
            let record = ForgettingRecord {
                strategy,
                seed: Some(seed),
                test: j,
                relative_drop: relative_drop(scores[0], scores[scores.len() - 1]),
                scores,
            };
            per_kind.entry((strategy, j)).or_default().push(record.clone());
            out.push(record);
        }
    }
    for ((strategy, test), records) in per_kind {
        let len = records.iter().map(|r| r.scores.len()).min().unwrap_or(0);
        if records.iter().any(|r| r.scores.len() != len) {
            return Err(Error::InvalidInput(format!(
                "{strategy} runs disagree on the number of steps"
            )));
        }
        let scores: Vec<f64> = (0..len)
            .map(|i| median(&records.iter().map(|r| r.scores[i]).collect::<Vec<_>>()).unwrap())
            .collect();
        let drops: Vec<f64> = records.iter().filter_map(|r| r.relative_drop).collect();
        out.push(ForgettingRecord {
            strategy,
            seed: None,
            test,
            scores,
            relative_drop: median(&drops),
        });
    }
    Ok(out)
}

/// Formats `x` with at most 10 significant digits, plain decimal notation,
/// and no trailing zeros.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.9e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let decimals = (9 - exp).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').trim_end_matches('.').len());
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub const HISTORY_HEADER: [&str; 8] = ["strategy", "seed", "step", "test", "accuracy", "precision", "recall", "f1"];

/// Writes `#`-prefixed meta lines followed by the history table.
pub fn write_history_csv<W: Write>(out: W, meta: &[String], history: &[EvalRecord]) -> Result<()> {
    let mut out = out;
    write_meta(&mut out, meta)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HISTORY_HEADER)?;
    for r in history {
        w.write_record([
            r.strategy.name().to_string(),
            r.seed.to_string(),
            r.step.to_string(),
            r.test.to_string(),
            fmt_num(r.scores.accuracy),
            fmt_num(r.scores.precision),
            fmt_num(r.scores.recall),
            fmt_num(r.scores.f1),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_meta<W: Write>(out: &mut W, meta: &[String]) -> Result<()> {
    for line in meta {
        for part in line.lines() {
            writeln!(out, "# {part}").map_err(|e| Error::Csv(e.into()))?;
        }
    }
    Ok(())
}

fn parse_field<T: FromStr>(record: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    record
        .get(i)
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| Error::InvalidInput(format!("history row {line}: bad value in column {}", HISTORY_HEADER[i])))
}

/// Reads a history table written by [`write_history_csv`], skipping meta lines.
pub fn read_history_csv<R: Read>(input: R) -> Result<Vec<EvalRecord>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != HISTORY_HEADER {
        return Err(Error::InvalidInput(format!("unexpected history header {:?}", headers)));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let strategy: StrategyKind = row
            .get(0)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("history row {line}: unknown strategy")))?;
        out.push(EvalRecord {
            strategy,
            seed: parse_field(&row, 1, line)?,
            step: parse_field(&row, 2, line)?,
            test: parse_field(&row, 3, line)?,
            scores: ClassificationScores {
                accuracy: parse_field(&row, 4, line)?,
                precision: parse_field(&row, 5, line)?,
                recall: parse_field(&row, 6, line)?,
                f1: parse_field(&row, 7, line)?,
            },
        });
    }
    Ok(out)
}

/// Writes forgetting records; aggregate rows carry `median` in the seed column.
pub fn write_forgetting_csv<W: Write>(out: W, meta: &[String], metric: Metric, records: &[ForgettingRecord]) -> Result<()> {
    let mut out = out;
    write_meta(&mut out, meta)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["strategy", "seed", "metric", "test", "step", "score", "relative_drop"])?;
    for r in records {
        let seed = r.seed.map_or_else(|| "median".to_string(), |s| s.to_string());
        let drop = r.relative_drop.map(fmt_num).unwrap_or_default();
        for (offset, score) in r.scores.iter().enumerate() {
            w.write_record([
                r.strategy.name().to_string(),
                seed.clone(),
                metric.name().to_string(),
                r.test.to_string(),
                (r.test + offset).to_string(),
                fmt_num(*score),
                drop.clone(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
