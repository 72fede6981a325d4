//! Independent reference implementations used by the integration tests and
//! the acceptance runner. They favour obviousness over speed.

#![allow(dead_code)]

pub mod suites;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repeat_core::cluster::{kmeans, DEFAULT_MAX_ITER};
use repeat_core::corpus::{Sample, Stream};
use repeat_core::exemplar::{ExemplarStore, StoredExemplar};
use repeat_core::model::{Architecture, Features, ModelState};
use repeat_core::rng::{derive_seed, sample_key, Purpose};
use repeat_core::textvec::fit_samples;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- metrics

pub fn naive_confusion(preds: &[usize], golds: &[usize], positive: usize) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for i in 0..preds.len() {
        if preds[i] == positive && golds[i] == positive {
            tp += 1;
        }
        if preds[i] == positive && golds[i] != positive {
            fp += 1;
        }
        if preds[i] != positive && golds[i] == positive {
            fn_ += 1;
        }
    }
    (tp, fp, fn_)
}

fn is_subsequence(needle: &[&str], hay: &[&str]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// Longest common subsequence by enumerating every subsequence of `x`.
pub fn lcs_bruteforce(x: &[&str], y: &[&str]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << x.len()) {
        let sub: Vec<&str> = (0..x.len()).filter(|i| mask & (1 << i) != 0).map(|i| x[i]).collect();
        if sub.len() > best && is_subsequence(&sub, y) {
            best = sub.len();
        }
    }
    best
}

/// F-measure of ROUGE-L with `beta = P / R`, simplified algebraically to
/// `P R (P^2 + R^2) / (P^3 + R^3)`.
pub fn rouge_closed_form(lcs: usize, m: usize, n: usize) -> f64 {
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / n as f64;
    let r = lcs as f64 / m as f64;
    p * r * (p * p + r * r) / (p * p * p + r * r * r)
}

fn ngram_counts(tokens: &[&str], n: usize) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *out.entry(tokens[i..i + n].join("\u{1}")).or_insert(0) += 1;
        }
    }
    out
}

/// Corpus BLEU-4 from pooled clipped counts.
pub fn bleu_corpus_oracle(cands: &[Vec<&str>], refs: &[Vec<&str>]) -> f64 {
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (mut num, mut den) = (0usize, 0usize);
        for (c, r) in cands.iter().zip(refs) {
            let cc = ngram_counts(c, n);
            let rc = ngram_counts(r, n);
            for (g, k) in &cc {
                num += (*k).min(*rc.get(g).unwrap_or(&0));
                den += k;
            }
        }
        if num == 0 || den == 0 {
            return 0.0;
        }
        log_sum += 0.25 * (num as f64 / den as f64).ln();
    }
    let c: usize = cands.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * log_sum.exp()
}

/// Sentence BLEU-4 with add-one smoothing for n >= 2.
pub fn bleu_sentence_oracle(c: &[&str], r: &[&str]) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for n in 1..=4 {
        let cc = ngram_counts(c, n);
        let rc = ngram_counts(r, n);
        let num: usize = cc.iter().map(|(g, k)| (*k).min(*rc.get(g).unwrap_or(&0))).sum();
        let den: usize = cc.values().sum();
        let p = if n == 1 {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        } else {
            (num + 1) as f64 / (den + 1) as f64
        };
        product *= p;
    }
    let bp = if c.len() > r.len() { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
    bp * product.powf(0.25)
}

pub fn omega_naive(cells: &[Vec<f64>]) -> (Vec<f64>, f64) {
    // cells[i][j] holds the score on test j+1 after step i+1
    let mut per_step = Vec::new();
    for row in cells {
        let mut s = 0.0;
        for v in row {
            s += v;
        }
        per_step.push(s / row.len() as f64);
    }
    let mut total = 0.0;
    for v in &per_step {
        total += v;
    }
    let overall = total / per_step.len() as f64;
    (per_step, overall)
}

// ---------------------------------------------------------------- model

/// Cross-entropy loss of a dense input, computed with plain loops over the
/// documented parameter layout.
pub fn naive_loss(arch: Architecture, params: &[f64], x: &[f64], label: usize) -> f64 {
    let (d, h, c) = (arch.feature_dim, arch.hidden_dim, arch.class_count);
    let w1 = &params[..d * h];
    let b1 = &params[d * h..d * h + h];
    let w2 = &params[d * h + h..d * h + h + h * c];
    let b2 = &params[d * h + h + h * c..];
    let mut hidden = vec![0.0; h];
    for j in 0..h {
        let mut z = b1[j];
        for i in 0..d {
            z += x[i] * w1[i * h + j];
        }
        hidden[j] = z.max(0.0);
    }
    let mut logits = vec![0.0; c];
    for k in 0..c {
        let mut z = b2[k];
        for j in 0..h {
            z += hidden[j] * w2[j * c + k];
        }
        logits[k] = z;
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Central finite differences of `f` at `x`.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest of `|a_i - b_i| / max(|a_i|, |b_i|, floor)`.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn random_dense_features(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| if rng.random::<f64>() < 0.5 { 0.0 } else { rng.random_range(-1.0..1.0) })
        .collect()
}

pub fn random_params(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

// ---------------------------------------------------------------- text

const WORDS: [&str; 12] = [
    "alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa", "lam", "mu",
];

/// Random short text over a small vocabulary, so duplicates do occur.
pub fn random_text(rng: &mut ChaCha8Rng, vocab: usize, len: std::ops::RangeInclusive<usize>) -> String {
    let n = rng.random_range(len);
    (0..n)
        .map(|_| WORDS[rng.random_range(0..vocab.min(WORDS.len()))])
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn random_train(rng: &mut ChaCha8Rng, n: usize, classes: usize, vocab: usize, prefix: &str) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            Sample::new(
                format!("{prefix}-{i:04}"),
                random_text(rng, vocab, 1..=6),
                rng.random_range(0..classes),
                format!("g{}", i % 5),
            )
        })
        .collect()
}

// ---------------------------------------------------------------- exemplars

/// Largest-remainder split of `budget` proportional to `sizes`, remainders
/// to the largest fractional parts, ties to the lowest index.
pub fn naive_largest_remainder(sizes: &[usize], budget: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| budget * s / total).collect();
    let rems: Vec<usize> = sizes.iter().map(|&s| budget * s % total).collect();
    let mut left = budget - quotas.iter().sum::<usize>();
    let mut used = vec![false; sizes.len()];
    while left > 0 {
        let mut best: Option<usize> = None;
        for i in 0..sizes.len() {
            if used[i] {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) if rems[i] > rems[b] => best = Some(i),
                _ => {}
            }
        }
        let b = best.unwrap();
        used[b] = true;
        quotas[b] += 1;
        left -= 1;
    }
    quotas
}

/// Representative selection rewritten step by step with plain loops.
/// Returns the selected ids in output order.
#[allow(clippy::too_many_arguments)]
pub fn selection_oracle(
    train: &[Sample],
    model: &ModelState,
    t: usize,
    m: usize,
    k: usize,
    mu: usize,
    seed: u64,
) -> Vec<String> {
    // per-partition budget
    let b = m / t;
    let key_seed = derive_seed(seed, Purpose::Select, t as u64);
    // per-class budget by class frequency
    let mut classes: Vec<usize> = train.iter().map(|s| s.label).collect();
    classes.sort_unstable();
    classes.dedup();
    let class_sizes: Vec<usize> = classes
        .iter()
        .map(|&c| train.iter().filter(|s| s.label == c).count())
        .collect();
    let class_budget = naive_largest_remainder(&class_sizes, b.min(train.len()));
    let mut selected = Vec::new();
    for (ci, &class) in classes.iter().enumerate() {
        if class_budget[ci] == 0 {
            continue;
        }
        let members: Vec<&Sample> = train.iter().filter(|s| s.label == class).collect();
        // vectorize and cluster
        let tfidf = fit_samples(members.iter().copied()).unwrap();
        let vectors: Vec<_> = members.iter().map(|s| tfidf.transform_text(&s.text)).collect();
        let cluster_seed = derive_seed(seed, Purpose::Cluster, ((t as u64) << 32) | class as u64);
        let clustering = kmeans(&vectors, k, cluster_seed, DEFAULT_MAX_ITER).unwrap();
        let mut clusters: Vec<Vec<&Sample>> = vec![Vec::new(); clustering.k];
        for (pos, &a) in clustering.assignments.iter().enumerate() {
            clusters[a].push(members[pos]);
        }
        // m_i proportional to cluster size
        let sizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
        let quotas = naive_largest_remainder(&sizes, class_budget[ci]);
        for (c, cluster) in clusters.iter().enumerate() {
            let mi = quotas[c];
            // losses under the trained model, sorted ascending
            let mut ranked: Vec<(f64, &Sample)> = cluster
                .iter()
                .map(|s| (model.sample_loss(s).unwrap(), *s))
                .collect();
            for i in 1..ranked.len() {
                let mut j = i;
                while j > 0 && {
                    let (a, b) = (&ranked[j - 1], &ranked[j]);
                    a.0 > b.0 || (a.0 == b.0 && a.1.id > b.1.id)
                } {
                    ranked.swap(j - 1, j);
                    j -= 1;
                }
            }
            // candidate pool of the mu * m_i lowest losses
            let pool_len = (mu * mi).min(ranked.len());
            let pool = &ranked[..pool_len];
            // random m_i of the pool
            let mut taken = vec![false; pool_len];
            for _ in 0..mi {
                let mut best: Option<usize> = None;
                for p in 0..pool_len {
                    if taken[p] {
                        continue;
                    }
                    let key = sample_key(key_seed, &pool[p].1.id);
                    if best.is_none_or(|b| key < sample_key(key_seed, &pool[b].1.id)) {
                        best = Some(p);
                    }
                }
                taken[best.unwrap()] = true;
            }
            for p in 0..pool_len {
                if taken[p] {
                    selected.push(pool[p].1.id.clone());
                }
            }
        }
    }
    selected
}

/// Keeps, for every stored partition, the `target` exemplars that survive
/// sorting by ascending stored loss (ties: higher id survives) and
/// truncating; original order preserved.
pub fn shrink_oracle(store: &ExemplarStore, t: usize, m: usize) -> Vec<Vec<String>> {
    store
        .partitions
        .iter()
        .map(|p| {
            let target = m / t + usize::from(p.t - 1 < m % t);
            let mut sorted: Vec<&StoredExemplar> = p.exemplars.iter().collect();
            sorted.sort_by(|a, b| {
                a.stored_loss
                    .partial_cmp(&b.stored_loss)
                    .unwrap()
                    .then_with(|| b.sample.id.cmp(&a.sample.id))
            });
            sorted.truncate(target);
            let keep: HashSet<&str> = sorted.iter().map(|e| e.sample.id.as_str()).collect();
            p.exemplars
                .iter()
                .filter(|e| keep.contains(e.sample.id.as_str()))
                .map(|e| e.sample.id.clone())
                .collect()
        })
        .collect()
}

/// Structural store checks after step `t` under budget `m`.
pub fn check_store(store: &ExemplarStore, stream: &Stream, t: usize, m: usize) -> Result<(), String> {
    if store.total() > m {
        return Err(format!("step {t}: {} exemplars exceed budget {m}", store.total()));
    }
    let sizes = store.sizes();
    if sizes.len() != t {
        return Err(format!("step {t}: store has {} partitions", sizes.len()));
    }
    let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
    if spread > 1 {
        return Err(format!("step {t}: partition sizes {sizes:?} spread more than 1"));
    }
    for part in &store.partitions {
        let source: BTreeMap<&str, &Sample> = stream.partitions[part.t - 1]
            .train
            .iter()
            .map(|s| (s.id.as_str(), s))
            .collect();
        let mut seen = HashSet::new();
        for e in &part.exemplars {
            match source.get(e.sample.id.as_str()) {
                Some(s) if **s == e.sample => {}
                _ => return Err(format!("exemplar {} is not from T_{}", e.sample.id, part.t)),
            }
            if !seen.insert(&e.sample.id) {
                return Err(format!("exemplar {} stored twice", e.sample.id));
            }
        }
    }
    Ok(())
}

pub fn ids(exemplars: &[StoredExemplar]) -> Vec<String> {
    exemplars.iter().map(|e| e.sample.id.clone()).collect()
}

pub fn features_of(model: &ModelState, samples: &[Sample]) -> Vec<(Features, usize)> {
    samples.iter().map(|s| (model.features(&s.text), s.label)).collect()
}

// ---------------------------------------------------------------- runs

use repeat_core::exemplar::select_for_partition_traced;
use repeat_core::strategy::{run_step, RunState, StepInput, StrategyConfig, StrategyKind};

/// Steps through `stream`, checking the store after every step: budget,
/// spread, provenance, earlier partitions only ever shrinking, and (for
/// representative selection) that every new exemplar ranks inside its
/// cluster's candidate pool.
pub fn audit_store_run(cfg: &StrategyConfig, stream: &Stream) -> Result<RunState, String> {
    let mut state = RunState::new(cfg, stream.class_count).map_err(|e| e.to_string())?;
    let tests: Vec<&[Sample]> = stream.partitions.iter().map(|p| p.test.as_slice()).collect();
    let mut previous: Vec<Vec<String>> = Vec::new();
    let mut seen = 0;
    for (i, partition) in stream.partitions.iter().enumerate() {
        let t = i + 1;
        run_step(
            cfg,
            &mut state,
            StepInput {
                partition,
                test_sets: &tests[..t],
                previous_train: None,
            },
        )
        .map_err(|e| e.to_string())?;
        seen += partition.train.len();
        let m = cfg.budget.resolve(seen);
        if state.steps[i].budget != m {
            return Err(format!("step {t}: recorded budget {} != {m}", state.steps[i].budget));
        }
        check_store(&state.store, stream, t, m)?;
        let current: Vec<Vec<String>> = state.store.partitions.iter().map(|p| ids(&p.exemplars)).collect();
        for (j, before) in previous.iter().enumerate() {
            let before: HashSet<&String> = before.iter().collect();
            if !current[j].iter().all(|id| before.contains(id)) {
                return Err(format!("step {t}: partition {} gained exemplars", j + 1));
            }
        }
        if cfg.kind == StrategyKind::Repeat {
            let sel = select_for_partition_traced(&partition.train, &state.model, t, m, cfg.k, cfg.mu, cfg.seed)
                .map_err(|e| e.to_string())?;
            if ids(&sel.exemplars) != current[i] {
                return Err(format!("step {t}: stored selection differs from a fresh selection"));
            }
            for c in &sel.clusters {
                if c.pool_size != (cfg.mu * c.quota).min(c.ranked_ids.len()) {
                    return Err(format!("step {t}: pool size {} for quota {}", c.pool_size, c.quota));
                }
                for id in &c.selected_ids {
                    let rank = c.ranked_ids.iter().position(|r| r == id).unwrap();
                    if rank >= c.pool_size {
                        return Err(format!("step {t}: {id} has loss rank {rank} outside pool {}", c.pool_size));
                    }
                }
            }
        }
        previous = current;
    }
    Ok(state)
}

fn one_step(cfg: &StrategyConfig, stream: &Stream) -> Result<RunState, String> {
    let mut state = RunState::new(cfg, stream.class_count).map_err(|e| e.to_string())?;
    let first = &stream.partitions[0];
    let tests = [first.test.as_slice()];
    let prev: [&[Sample]; 0] = [];
    run_step(
        cfg,
        &mut state,
        StepInput {
            partition: first,
            test_sets: &tests,
            previous_train: (cfg.kind == StrategyKind::Upper).then_some(&prev[..]),
        },
    )
    .map_err(|e| e.to_string())?;
    Ok(state)
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// After the first step every strategy must hold exactly the fine-tuned
/// parameters and scores.
pub fn first_step_matches_ft(base: &StrategyConfig, stream: &Stream) -> Result<(), String> {
    let ft = one_step(&StrategyConfig { kind: StrategyKind::Ft, ..base.clone() }, stream)?;
    for kind in StrategyKind::ALL {
        let other = one_step(&StrategyConfig { kind, ..base.clone() }, stream)?;
        if !same_bits(&other.model.params, &ft.model.params) {
            return Err(format!("{kind} parameters differ from FT after step 1"));
        }
        if other.history[0].scores != ft.history[0].scores {
            return Err(format!("{kind} scores differ from FT after step 1"));
        }
        if other.steps[0].epoch_losses != ft.steps[0].epoch_losses || other.steps[0].lambda != 0.0 {
            return Err(format!("{kind} training trace differs from FT at step 1"));
        }
    }
    Ok(())
}

/// Representative replay with no penalty, one cluster and an unbounded
/// candidate pool, compared with random replay after every step.
pub fn repeat_matches_emr(base: &StrategyConfig, stream: &Stream) -> Result<(), String> {
    let repeat_cfg = StrategyConfig {
        kind: StrategyKind::Repeat,
        lambda_base: 0.0,
        k: 1,
        mu: 1_000_000,
        ..base.clone()
    };
    let emr_cfg = StrategyConfig {
        kind: StrategyKind::Emr,
        ..base.clone()
    };
    let mut a = RunState::new(&repeat_cfg, stream.class_count).map_err(|e| e.to_string())?;
    let mut b = RunState::new(&emr_cfg, stream.class_count).map_err(|e| e.to_string())?;
    let tests: Vec<&[Sample]> = stream.partitions.iter().map(|p| p.test.as_slice()).collect();
    for (i, partition) in stream.partitions.iter().enumerate() {
        for (cfg, state) in [(&repeat_cfg, &mut a), (&emr_cfg, &mut b)] {
            run_step(
                cfg,
                state,
                StepInput {
                    partition,
                    test_sets: &tests[..=i],
                    previous_train: None,
                },
            )
            .map_err(|e| e.to_string())?;
        }
        let t = i + 1;
        if !same_bits(&a.model.params, &b.model.params) {
            return Err(format!("parameters diverge at step {t}"));
        }
        let sa: Vec<Vec<String>> = a.store.partitions.iter().map(|p| ids(&p.exemplars)).collect();
        let sb: Vec<Vec<String>> = b.store.partitions.iter().map(|p| ids(&p.exemplars)).collect();
        if sa != sb {
            return Err(format!("stores diverge at step {t}"));
        }
        let ha: Vec<_> = a.history.iter().map(|r| r.scores).collect();
        let hb: Vec<_> = b.history.iter().map(|r| r.scores).collect();
        if ha != hb {
            return Err(format!("scores diverge at step {t}"));
        }
    }
    Ok(())
}

/// Penalty strengths of a representative-replay run.
pub fn check_lambdas(lambdas: &[f64], lambda_base: f64) -> Result<(), String> {
    if lambdas.first() != Some(&0.0) {
        return Err(format!("first lambda is {:?}, expected 0", lambdas.first()));
    }
    for (i, &l) in lambdas.iter().enumerate() {
        if !(0.0..=lambda_base).contains(&l) {
            return Err(format!("lambda {l} at step {} outside [0, {lambda_base}]", i + 1));
        }
    }
    Ok(())
}

/// A CSV file without its leading `#` lines.
pub fn csv_body(path: &std::path::Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
