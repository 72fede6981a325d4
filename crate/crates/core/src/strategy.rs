//! Continual-learning strategies and the per-stream training driver.
//!
//! | kind   | trains on                    | penalty                    | after training            |
//! |--------|------------------------------|----------------------------|---------------------------|
//! | FT     | current partition            | none                       | nothing                   |
//! | EMR    | current + stored exemplars   | none                       | random exemplars          |
//! | EWC    | current partition            | fixed `lambda_base`        | anchor on a random subset |
//! | REPEAT | current + stored exemplars   | similarity-scaled lambda   | representative exemplars, anchor on the store |
//! | UPPER  | every partition seen so far  | none                       | nothing                   |
//!
//! Model and Adam state carry over from one partition to the next.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetPartition, Sample, Stream};
use crate::error::{Error, Result};
use crate::ewc::{adaptive_lambda, estimate_fisher, AnchorState, LambdaConfig};
use crate::exemplar::{self, ExemplarStore};
use crate::metrics::{classification_scores, ClassificationScores};
use crate::model::{AdamConfig, Architecture, Features, GradWorkspace, ModelState, OptimizerState};
use crate::rng::{self, Purpose};
use crate::textvec::{dataset_vector, fit_samples};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StrategyKind {
    Ft,
    Emr,
    Ewc,
    Repeat,
    Upper,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Ft,
        StrategyKind::Emr,
        StrategyKind::Ewc,
        StrategyKind::Repeat,
        StrategyKind::Upper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Ft => "FT",
            StrategyKind::Emr => "EMR",
            StrategyKind::Ewc => "EWC",
            StrategyKind::Repeat => "REPEAT",
            StrategyKind::Upper => "UPPER",
        }
    }

    pub fn replays(self) -> bool {
        matches!(self, StrategyKind::Emr | StrategyKind::Repeat)
    }

    pub fn anchors(self) -> bool {
        matches!(self, StrategyKind::Ewc | StrategyKind::Repeat)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}; expected one of ft, emr, ewc, repeat, upper")))
    }
}

/// Exemplar budget `M`: a fixed count, or a fraction of all training data
/// seen so far (re-resolved at every step).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Absolute(usize),
    Fraction(f64),
}

impl Budget {
    pub fn resolve(self, seen_train: usize) -> usize {
        match self {
            Budget::Absolute(m) => m,
            Budget::Fraction(f) => (f * seen_train as f64 + 1e-9).floor() as usize,
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Absolute(m) => write!(f, "{m}"),
            Budget::Fraction(x) => write!(f, "{x}"),
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    /// Integers are absolute counts, anything else a fraction in (0, 1].
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(m) = s.parse::<usize>() {
            return Ok(Budget::Absolute(m));
        }
        let f: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("budget {s:?} is neither a count nor a fraction")))?;
        let b = Budget::Fraction(f);
        b.validate()?;
        Ok(b)
    }
}

impl Budget {
    fn validate(self) -> Result<()> {
        if let Budget::Fraction(f) = self {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("budget fraction {f} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub budget: Budget,
    pub k: usize,
    pub mu: usize,
    pub lambda_base: f64,
    pub seed: u64,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub adam: AdamConfig,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kind: StrategyKind::Repeat,
            epochs: 10,
            batch_size: 32,
            budget: Budget::Fraction(0.01),
            k: 5,
            mu: 5,
            lambda_base: 2000.0,
            seed: 0,
            feature_dim: Architecture::DEFAULT_FEATURE_DIM,
            hidden_dim: Architecture::DEFAULT_HIDDEN_DIM,
            adam: AdamConfig::default(),
        }
    }
}

impl StrategyConfig {
    pub fn with_kind(kind: StrategyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.k == 0 || self.mu == 0 {
            return Err(Error::Config("K and mu must be at least 1".into()));
        }
        if !(self.lambda_base >= 0.0 && self.lambda_base.is_finite()) {
            return Err(Error::Config("lambda_base must be finite and non-negative".into()));
        }
        if self.adam.lr.is_nan() || self.adam.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.budget.validate()?;
        Architecture::new(self.feature_dim, self.hidden_dim, 1)?;
        Ok(())
    }

    pub fn architecture(&self, class_count: usize) -> Result<Architecture> {
        Architecture::new(self.feature_dim, self.hidden_dim, class_count)
    }
}

/// Score on test set `test` after training step `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub step: usize,
    pub test: usize,
    pub scores: ClassificationScores,
}

/// What happened during one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Penalty strength used while training this step.
    pub lambda: f64,
    /// Resolved exemplar budget `M` at this step.
    pub budget: usize,
    pub mixture_size: usize,
    pub store_sizes: Vec<usize>,
    /// Mean task loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub model: ModelState,
    pub optimizer: OptimizerState,
    pub store: ExemplarStore,
    pub anchor: Option<AnchorState>,
    pub history: Vec<EvalRecord>,
    pub steps: Vec<StepRecord>,
    seen_train: usize,
}

impl RunState {
    pub fn new(cfg: &StrategyConfig, class_count: usize) -> Result<Self> {
        cfg.validate()?;
        let arch = cfg.architecture(class_count)?;
        let model = ModelState::init(arch, cfg.seed)?;
        let optimizer = OptimizerState::new(cfg.adam, arch.param_count());
        Ok(Self {
            model,
            optimizer,
            store: ExemplarStore::new(0),
            anchor: None,
            history: Vec::new(),
            steps: Vec::new(),
            seen_train: 0,
        })
    }

    /// Number of completed steps.
    pub fn completed(&self) -> usize {
        self.steps.len()
    }
}

/// Data visible to one step.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub partition: &'a DatasetPartition,
    /// Test sets of partitions `1..=t`, evaluated after training.
    pub test_sets: &'a [&'a [Sample]],
    /// Training sets of partitions `1..t`; only joint training may read them.
    pub previous_train: Option<&'a [&'a [Sample]]>,
}

fn featurize_all<'a>(model: &ModelState, samples: impl IntoIterator<Item = &'a Sample>) -> Vec<(Features, usize)> {
    samples.into_iter().map(|s| (model.features(&s.text), s.label)).collect()
}

fn train_epochs(
    cfg: &StrategyConfig,
    state: &mut RunState,
    mixture: &[(Features, usize)],
    penalty: Option<(&AnchorState, f64)>,
    step: usize,
) -> Result<Vec<f64>> {
    let mut rng = rng::stream(cfg.seed, Purpose::Shuffle, step as u64);
    let mut order: Vec<usize> = (0..mixture.len()).collect();
    let mut ws = GradWorkspace::new(state.model.arch);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            ws.clear();
            let batch: Vec<(&Features, usize)> = chunk.iter().map(|&i| (&mixture[i].0, mixture[i].1)).collect();
            let loss = state.model.accumulate_batch(&mut ws, &batch, None)?;
            loss_sum += loss * chunk.len() as f64;
            if let Some((anchor, lambda)) = penalty {
                if lambda > 0.0 {
                    anchor.add_penalty_grad(&state.model.params, lambda, &mut ws.grad)?;
                }
            }
            state.optimizer.adam_step(&mut state.model.params, &ws.grad)?;
        }
        epoch_losses.push(loss_sum / mixture.len().max(1) as f64);
    }
    Ok(epoch_losses)
}

/// Scores the model on each test set, in order.
pub fn evaluate(model: &ModelState, test_sets: &[&[Sample]]) -> Result<Vec<ClassificationScores>> {
    test_sets
        .iter()
        .map(|set| {
            let golds: Vec<usize> = set.iter().map(|s| s.label).collect();
            let preds: Vec<usize> = set.iter().map(|s| model.predict(&model.features(&s.text))).collect();
            classification_scores(&preds, &golds, model.arch.class_count)
        })
        .collect()
}

fn random_subset(train: &[Sample], size: usize, seed: u64, step: usize) -> Vec<&Sample> {
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(&mut rng::stream(seed, Purpose::Fisher, step as u64));
    idx.truncate(size);
    idx.sort_unstable();
    idx.into_iter().map(|i| &train[i]).collect()
}

/// Similarity-scaled penalty strength for the coming step: TF-IDF is fit on
/// the new training set plus the current store, and the mean vectors of the
/// two are compared.
pub fn step_lambda(lambda_base: f64, train: &[Sample], store: &ExemplarStore) -> Result<f64> {
    if store.is_empty() || train.is_empty() {
        return Ok(0.0);
    }
    let tfidf = fit_samples(train.iter().chain(store.samples()))?;
    let current = dataset_vector(&tfidf, train)?;
    let stored = dataset_vector(&tfidf, store.samples())?;
    Ok(adaptive_lambda(LambdaConfig { lambda_base }, &current, &stored))
}

/// Trains on one partition, updates the store and anchor, and appends the
/// evaluation of every test set seen so far.
pub fn run_step(cfg: &StrategyConfig, state: &mut RunState, input: StepInput<'_>) -> Result<()> {
    let t = state.completed() + 1;
    let partition = input.partition;
    if partition.index != t {
        return Err(Error::OutOfOrder {
            expected: t,
            got: partition.index,
        });
    }
    if input.test_sets.len() != t {
        return Err(Error::InvalidInput(format!(
            "step {t} needs {t} test sets, got {}",
            input.test_sets.len()
        )));
    }
    let previous: &[&[Sample]] = match (cfg.kind, input.previous_train) {
        (StrategyKind::Upper, Some(prev)) if prev.len() == t - 1 => prev,
        (StrategyKind::Upper, Some(prev)) => {
            return Err(Error::InvalidInput(format!(
                "joint training at step {t} needs {} earlier training sets, got {}",
                t - 1,
                prev.len()
            )))
        }
        (StrategyKind::Upper, None) if t > 1 => {
            return Err(Error::InvalidInput("joint training invoked without the earlier training sets".into()))
        }
        (_, Some(_)) if cfg.kind != StrategyKind::Upper => {
            return Err(Error::InvalidInput(format!(
                "{} may not read earlier training sets",
                cfg.kind
            )))
        }
        _ => &[],
    };

    let train = &partition.train;
    state.seen_train += train.len();
    let budget = cfg.budget.resolve(state.seen_train);

    let lambda = match cfg.kind {
        StrategyKind::Ewc if state.anchor.is_some() => cfg.lambda_base,
        StrategyKind::Repeat if state.anchor.is_some() => step_lambda(cfg.lambda_base, train, &state.store)?,
        _ => 0.0,
    };

    let mut mixture = featurize_all(&state.model, train);
    match cfg.kind {
        StrategyKind::Emr | StrategyKind::Repeat => {
            mixture.extend(featurize_all(&state.model, state.store.samples()));
        }
        StrategyKind::Upper => {
            for set in previous {
                mixture.extend(featurize_all(&state.model, set.iter()));
            }
        }
        _ => {}
    }
    let anchor = state.anchor.take();
    let epoch_losses = train_epochs(cfg, state, &mixture, anchor.as_ref().map(|a| (a, lambda)), t)?;

    match cfg.kind {
        StrategyKind::Emr => {
            let fresh = exemplar::select_random(train, &state.model, t, budget, cfg.seed)?;
            state.store = exemplar::update_store_random(&state.store, fresh, t, budget, cfg.seed)?;
        }
        StrategyKind::Repeat => {
            let fresh = exemplar::select_for_partition(train, &state.model, t, budget, cfg.k, cfg.mu, cfg.seed)?;
            state.store = exemplar::update_store(&state.store, fresh, t, budget)?;
            state.anchor = if state.store.is_empty() {
                None
            } else {
                let fisher = estimate_fisher(&state.model, state.store.samples())?;
                Some(AnchorState::new(state.model.params.clone(), fisher)?)
            };
        }
        StrategyKind::Ewc => {
            let subset = random_subset(train, budget.min(train.len()), cfg.seed, t);
            state.anchor = if subset.is_empty() {
                None
            } else {
                let fisher = estimate_fisher(&state.model, subset)?;
                Some(AnchorState::new(state.model.params.clone(), fisher)?)
            };
        }
        StrategyKind::Ft | StrategyKind::Upper => {}
    }

    for (j, scores) in evaluate(&state.model, input.test_sets)?.into_iter().enumerate() {
        state.history.push(EvalRecord {
            strategy: cfg.kind,
            seed: cfg.seed,
            step: t,
            test: j + 1,
            scores,
        });
    }
    state.steps.push(StepRecord {
        step: t,
        lambda,
        budget,
        mixture_size: mixture.len(),
        store_sizes: state.store.sizes(),
        epoch_losses,
    });
    Ok(())
}

/// Runs every partition of `stream` in order.
pub fn run_stream(cfg: &StrategyConfig, stream: &Stream) -> Result<RunState> {
    run_stream_with(cfg, stream, |_| {})
}

/// [`run_stream`] with a callback after every completed step.
pub fn run_stream_with(cfg: &StrategyConfig, stream: &Stream, mut on_step: impl FnMut(&RunState)) -> Result<RunState> {
    if stream.is_empty() {
        return Err(Error::InvalidInput("empty stream".into()));
    }
    let mut state = RunState::new(cfg, stream.class_count)?;
    let tests: Vec<&[Sample]> = stream.partitions.iter().map(|p| p.test.as_slice()).collect();
    let trains: Vec<&[Sample]> = stream.partitions.iter().map(|p| p.train.as_slice()).collect();
    for (i, partition) in stream.partitions.iter().enumerate() {
        let input = StepInput {
            partition,
            test_sets: &tests[..=i],
            previous_train: (cfg.kind == StrategyKind::Upper).then(|| &trains[..i]),
        };
        run_step(cfg, &mut state, input)?;
        on_step(&state);
    }
    Ok(state)
}
