//! Whole-criterion checks shared by the focused tests and the acceptance
//! runner. Each returns a short detail line on success.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;
use repeat_core::corpus::{synthesize, DriftConfig};
use repeat_core::ewc::AnchorState;
use repeat_core::exemplar::{select_for_partition, shrink_previous, PartitionExemplars};
use repeat_core::metrics::*;
use repeat_core::strategy::Budget;

fn w(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{name}: got {got}, expected {want} (tol {tol})"))
    }
}

/// Worked metric examples plus randomized agreement with the counting
/// oracles.
pub fn metric_suite() -> Result<String, String> {
    let exact = 1e-9;
    let hand = 1e-6;
    let mut checked = 0;
    let mut check = |name: &str, got: f64, want: f64, tol: f64| -> Result<(), String> {
        checked += 1;
        close(name, got, want, tol)
    };
    let prf = |p: &[usize], g: &[usize]| prf1(p, g, 1).map_err(|e| e.to_string());
    let (p, r, f) = prf(&[0, 1, 1], &[0, 1, 1])?;
    check("prf1 perfect P", p, 1.0, exact)?;
    check("prf1 perfect R", r, 1.0, exact)?;
    check("prf1 perfect F1", f, 1.0, exact)?;
    let (p, r, f) = prf(&[1, 1, 0, 0], &[1, 0, 1, 0])?;
    check("prf1 half P", p, 0.5, exact)?;
    check("prf1 half R", r, 0.5, exact)?;
    check("prf1 half F1", f, 0.5, exact)?;
    if prf1(&[1], &[1, 0], 1).is_ok() {
        return Err("prf1 accepted mismatched lengths".into());
    }
    let c = w("the quick brown fox jumps");
    check("bleu identical", bleu4(&[c.clone()], &[c.clone()], BleuMode::Corpus).unwrap(), 1.0, exact)?;
    let s = sentence_bleu(&w("a b c d"), &w("a b c e"));
    check("sentence bleu closed form", s, (0.75f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25), exact)?;
    check("sentence bleu hand value", s, 0.658, 5e-4)?;
    check("bleu disjoint", bleu4(&[w("a b c d")], &[w("e f g h")], BleuMode::Corpus).unwrap(), 0.0, exact)?;
    check("rouge identical", rouge_l(&w("a b c"), &w("a b c")), 1.0, exact)?;
    let rl = rouge_l(&w("a b c"), &w("a b"));
    check("rouge closed form", rl, 26.0 / 35.0, exact)?;
    check("rouge hand value", rl, 0.742857, hand)?;
    check("rouge empty", rouge_l::<&str>(&[], &[]), 0.0, exact)?;
    check("meteor disjoint", meteor(&w("a b"), &w("c d")), 0.0, exact)?;
    check("meteor two tokens", meteor(&w("a b"), &w("a b")), 0.9375, hand)?;
    check("meteor three tokens", meteor(&w("a b c"), &w("a b c")), 1.0 - 0.5 / 27.0, exact)?;
    let mut m = OmegaMatrix::new(1);
    m.set(1, 1, 0.42).map_err(|e| e.to_string())?;
    check("omega single", omega(&m).unwrap().1, 0.42, exact)?;
    let mut m = OmegaMatrix::new(2);
    for (j, i, v) in [(1, 1, 0.9), (1, 2, 0.7), (2, 2, 0.8)] {
        m.set(j, i, v).map_err(|e| e.to_string())?;
    }
    check("omega two steps", omega(&m).unwrap().1, 0.825, exact)?;

    let mut rng = rng(1001);
    for _ in 0..100 {
        let n = rng.random_range(1..5);
        let cands: Vec<String> = (0..n).map(|_| random_text(&mut rng, 5, 1..=10)).collect();
        let refs: Vec<String> = (0..n).map(|_| random_text(&mut rng, 5, 1..=10)).collect();
        let c: Vec<Vec<&str>> = cands.iter().map(|s| w(s)).collect();
        let r: Vec<Vec<&str>> = refs.iter().map(|s| w(s)).collect();
        check("corpus bleu oracle", bleu4(&c, &r, BleuMode::Corpus).unwrap(), bleu_corpus_oracle(&c, &r), exact)?;
        for (a, b) in c.iter().zip(&r) {
            check("sentence bleu oracle", sentence_bleu(a, b), bleu_sentence_oracle(a, b), exact)?;
            let l = lcs_bruteforce(a, b);
            if lcs_len(a, b) != l {
                return Err(format!("lcs of {a:?} and {b:?}"));
            }
            check("rouge oracle", rouge_l(a, b), rouge_closed_form(l, a.len(), b.len()), exact)?;
        }
        let preds: Vec<usize> = (0..50).map(|_| rng.random_range(0..3)).collect();
        let golds: Vec<usize> = (0..50).map(|_| rng.random_range(0..3)).collect();
        let (tp, fp, fn_) = naive_confusion(&preds, &golds, 1);
        let (p, r, _) = prf1(&preds, &golds, 1).unwrap();
        check("precision oracle", p, tp as f64 / (tp + fp).max(1) as f64, exact)?;
        check("recall oracle", r, tp as f64 / (tp + fn_).max(1) as f64, exact)?;
    }
    Ok(format!("{checked} values"))
}

/// Finite-difference agreement of the batch and penalty gradients.
pub fn gradient_suite(instances: usize) -> Result<String, String> {
    let arch = Architecture::new(32, 4, 3).map_err(|e| e.to_string())?;
    let mut rng = rng(1002);
    let mut worst_batch: f64 = 0.0;
    for instance in 0..instances {
        let params = random_params(&mut rng, arch.param_count(), 0.5);
        let model = ModelState::from_params(arch, params.clone()).map_err(|e| e.to_string())?;
        let n = rng.random_range(1..6);
        let batch: Vec<(Vec<f64>, usize)> = (0..n)
            .map(|_| (random_dense_features(&mut rng, 32), rng.random_range(0..3)))
            .collect();
        let weights: Option<Vec<f64>> = (instance % 2 == 1).then(|| (0..n).map(|_| rng.random_range(0.1..2.0)).collect());
        let feats: Vec<Features> = batch.iter().map(|(x, _)| Features::from_dense(x)).collect();
        let pairs: Vec<(&Features, usize)> = feats.iter().zip(&batch).map(|(f, (_, y))| (f, *y)).collect();
        let g = model.batch_grad(&pairs, weights.as_deref()).map_err(|e| e.to_string())?;
        let loss = |p: &[f64]| {
            let wts = weights.clone().unwrap_or_else(|| vec![1.0; n]);
            let total: f64 = wts.iter().sum();
            batch.iter().zip(&wts).map(|((x, y), wi)| wi * naive_loss(arch, p, x, *y)).sum::<f64>() / total
        };
        let err = max_rel_err(&g, &fd_grad(loss, &params, 1e-6), 1e-4);
        worst_batch = worst_batch.max(err);
        if err > 1e-5 {
            return Err(format!("batch_grad instance {instance}: relative error {err:e}"));
        }
    }
    let mut worst_penalty: f64 = 0.0;
    for instance in 0..instances {
        let n = rng.random_range(1..60);
        let anchor = AnchorState::new(
            random_params(&mut rng, n, 2.0),
            (0..n).map(|_| rng.random_range(0.0..3.0)).collect(),
        )
        .map_err(|e| e.to_string())?;
        let theta = random_params(&mut rng, n, 2.0);
        let lambda = rng.random_range(0.0..5.0);
        let g = anchor.penalty_grad(&theta, lambda).map_err(|e| e.to_string())?;
        let fd = fd_grad(|p| anchor.penalty(p, lambda).unwrap(), &theta, 1e-5);
        let err = max_rel_err(&g, &fd, 1e-3);
        worst_penalty = worst_penalty.max(err);
        if err > 1e-6 {
            return Err(format!("penalty_grad instance {instance}: error {err:e}"));
        }
    }
    Ok(format!("{instances}+{instances} instances, worst {worst_batch:.1e} / {worst_penalty:.1e}"))
}

pub fn random_store(rng: &mut ChaCha8Rng, partitions: usize) -> ExemplarStore {
    let mut store = ExemplarStore::new(0);
    for t in 1..=partitions {
        let n = rng.random_range(0..25);
        let exemplars = (0..n)
            .map(|i| StoredExemplar {
                sample: Sample::new(format!("p{t}-{:06}", rng.random_range(0..1000) * 100 + i), "x", 0, ""),
                // a coarse grid so ties are common
                stored_loss: rng.random_range(0..6) as f64 / 4.0,
                source_partition: t,
            })
            .collect();
        store.partitions.push(PartitionExemplars { t, exemplars });
    }
    store.budget = store.total();
    store
}

/// Selection against the plain-loop rewrite, and trimming against
/// sort-and-truncate.
pub fn selection_suite(instances: usize) -> Result<String, String> {
    let mut rng = rng(1003);
    for instance in 0..instances {
        let classes = rng.random_range(2..5);
        let n = rng.random_range(5..160);
        let vocab = rng.random_range(3..12);
        let train = random_train(&mut rng, n, classes, vocab, &format!("i{instance}"));
        let arch = Architecture::new(64, 4, classes).map_err(|e| e.to_string())?;
        let model = ModelState::from_params(arch, random_params(&mut rng, arch.param_count(), 1.0)).map_err(|e| e.to_string())?;
        let t = rng.random_range(1..6);
        let m = rng.random_range(0..=t * n);
        let (k, mu) = (rng.random_range(1..7), rng.random_range(1..7));
        let seed = rng.random::<u64>();
        let got = select_for_partition(&train, &model, t, m, k, mu, seed).map_err(|e| e.to_string())?;
        if ids(&got) != selection_oracle(&train, &model, t, m, k, mu, seed) {
            return Err(format!("selection instance {instance} (n={n} t={t} m={m} K={k} mu={mu}) differs"));
        }
    }
    for instance in 0..instances {
        let prev = rng.random_range(1..6);
        let store = random_store(&mut rng, prev);
        let m = rng.random_range(0..=store.total() + 10);
        let got = shrink_previous(&store, prev + 1, m);
        let got_ids: Vec<Vec<String>> = got.partitions.iter().map(|p| ids(&p.exemplars)).collect();
        if got_ids != shrink_oracle(&store, prev + 1, m) {
            return Err(format!("shrink instance {instance} differs"));
        }
    }
    Ok(format!("{instances} selections, {instances} shrinks"))
}

/// Store audit over randomized small streams for representative and random
/// replay.
pub fn store_suite(configs: u64) -> Result<String, String> {
    let mut rng = rng(1004);
    let mut steps = 0;
    for config in 0..configs {
        let drift = DriftConfig {
            n_classes: rng.random_range(2..5),
            train_size: rng.random_range(40..150),
            valid_size: 5,
            test_size: 20,
            seed: config,
            ..DriftConfig::default()
        };
        let stream = synthesize(&drift).map_err(|e| e.to_string())?;
        let budget = if config % 2 == 0 {
            Budget::Absolute(rng.random_range(1..drift.train_size))
        } else {
            Budget::Fraction(rng.random_range(0.02..0.3))
        };
        for kind in [StrategyKind::Repeat, StrategyKind::Emr] {
            let cfg = StrategyConfig {
                kind,
                epochs: 2,
                budget,
                k: rng.random_range(1..6),
                mu: rng.random_range(1..6),
                seed: config,
                feature_dim: 256,
                hidden_dim: 8,
                ..StrategyConfig::default()
            };
            audit_store_run(&cfg, &stream).map_err(|e| format!("config {config} {kind} budget {budget}: {e}"))?;
            steps += stream.len();
        }
    }
    Ok(format!("{configs} configs, {steps} audited steps"))
}
