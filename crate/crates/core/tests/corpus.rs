mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use repeat_core::corpus::*;
use repeat_core::Error;

fn grouped(groups: &[usize]) -> Vec<Sample> {
    let mut out = Vec::new();
    for (g, &n) in groups.iter().enumerate() {
        for k in 0..n {
            out.push(Sample::new(format!("g{g}-{k}"), format!("text {g} {k}"), g % 2, format!("group{g}")));
        }
    }
    out
}

fn groups_of(p: &DatasetPartition) -> BTreeSet<String> {
    p.train.iter().chain(&p.valid).chain(&p.test).map(|s| s.group.clone()).collect()
}

#[test]
fn ten_groups_into_five_partitions() {
    let parts = split_by_group(&grouped(&[3; 10]), 5, SplitRatios::default(), 1).unwrap();
    assert_eq!(parts.len(), 5);
    for (i, p) in parts.iter().enumerate() {
        assert_eq!(p.index, i + 1);
        assert_eq!(groups_of(p).len(), 2);
    }
}

#[test]
fn single_group_eight_one_one() {
    let parts = split_by_group(&grouped(&[10]), 1, SplitRatios::default(), 0).unwrap();
    assert_eq!((parts[0].train.len(), parts[0].valid.len(), parts[0].test.len()), (8, 1, 1));
}

#[test]
fn uneven_groups_are_disjoint_and_balanced() {
    let mut rng = rng(50);
    let sizes: Vec<usize> = (0..100).map(|_| rng.random_range(1..30)).collect();
    let samples = grouped(&sizes);
    let parts = split_by_group(&samples, 5, SplitRatios::default(), 17).unwrap();
    let group_sets: Vec<BTreeSet<String>> = parts.iter().map(groups_of).collect();
    for i in 0..5 {
        for j in i + 1..5 {
            assert!(group_sets[i].is_disjoint(&group_sets[j]));
        }
    }
    let counts: Vec<usize> = group_sets.iter().map(BTreeSet::len).collect();
    assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    let mut ids = HashSet::new();
    for p in &parts {
        for s in p.train.iter().chain(&p.valid).chain(&p.test) {
            assert!(ids.insert(s.id.clone()));
        }
        let [a, b, c] = SplitRatios::default().sizes(p.train.len() + p.valid.len() + p.test.len());
        assert_eq!((p.train.len(), p.valid.len(), p.test.len()), (a, b, c));
    }
    assert_eq!(ids.len(), samples.len());
}

#[test]
fn split_errors() {
    assert!(split_by_group(&[], 1, SplitRatios::default(), 0).is_err());
    assert!(split_by_group(&grouped(&[2, 2]), 3, SplitRatios::default(), 0).is_err());
    let mut s = grouped(&[2]);
    s[0].group.clear();
    assert!(split_by_group(&s, 1, SplitRatios::default(), 0).is_err());
}

fn tiny_cfg() -> DriftConfig {
    DriftConfig {
        n_partitions: 3,
        train_size: 60,
        valid_size: 9,
        test_size: 12,
        ..DriftConfig::default()
    }
}

#[test]
fn generated_files_round_trip_and_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    generate_synthetic(&tiny_cfg(), &a).unwrap();
    generate_synthetic(&tiny_cfg(), &b).unwrap();
    for name in ["manifest.json", "part1_train.jsonl", "part3_test.jsonl"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
    let loaded = load_stream(&a.join("manifest.json")).unwrap();
    assert_eq!(loaded, synthesize(&tiny_cfg()).unwrap());
    let indices: Vec<usize> = loaded.partitions.iter().map(|p| p.index).collect();
    assert_eq!(indices, [1, 2, 3]);
}

#[test]
fn smallest_manifest_loads() {
    let dir = tempfile::tempdir().unwrap();
    let stream = Stream {
        class_count: 2,
        partitions: vec![DatasetPartition {
            index: 1,
            train: vec![Sample::new("a", "x", 0, "g")],
            valid: vec![],
            test: vec![Sample::new("b", "y", 1, "g")],
        }],
    };
    write_stream(&stream, dir.path(), serde_json::json!({})).unwrap();
    let loaded = load_stream(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(loaded, stream);
}

#[test]
fn label_out_of_range_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let stream = Stream {
        class_count: 3,
        partitions: vec![DatasetPartition {
            index: 1,
            train: vec![Sample::new("bad-one", "x", 7, "g")],
            valid: vec![],
            test: vec![],
        }],
    };
    write_stream(&stream, dir.path(), serde_json::json!({})).unwrap();
    match load_stream(&dir.path().join("manifest.json")) {
        Err(e @ Error::LabelOutOfRange { .. }) => {
            assert!(e.to_string().contains("bad-one"));
            assert!(e.is_validation());
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_and_duplicate_records_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let stream = Stream {
        class_count: 2,
        partitions: vec![DatasetPartition {
            index: 1,
            train: vec![Sample::new("a", "x", 0, "g")],
            valid: vec![Sample::new("a", "x", 0, "g")],
            test: vec![],
        }],
    };
    write_stream(&stream, dir.path(), serde_json::json!({})).unwrap();
    let manifest = dir.path().join("manifest.json");
    assert!(matches!(load_stream(&manifest), Err(Error::DuplicateId(_))));
    fs::write(dir.path().join("part1_valid.jsonl"), "{\"id\": \"b\", \"text\": 3}\n").unwrap();
    match load_stream(&manifest) {
        Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 1),
        other => panic!("unexpected {other:?}"),
    }
    fs::write(dir.path().join("part1_valid.jsonl"), "\n{\"id\": \"c\", \"text\": \"t\", \"label\": 1, \"extra\": 5}\n").unwrap();
    let s = load_stream(&manifest).unwrap();
    assert_eq!(s.partitions[0].valid[0].id, "c");
    assert_eq!(s.partitions[0].valid[0].group, "");
}

fn signature_tokens(cfg: &DriftConfig, text: &str) -> Vec<usize> {
    let index: BTreeMap<String, usize> = (0..cfg.vocab_size).map(|i| (synthetic_word(i), i)).collect();
    text.split_whitespace()
        .map(|w| index[w])
        .filter(|&v| v >= cfg.background_size)
        .collect()
}

#[test]
fn noise_free_labels_match_their_pools() {
    let cfg = DriftConfig {
        noise_rate: 0.0,
        ..tiny_cfg()
    };
    let pools = signature_pools(&cfg).unwrap();
    let stream = synthesize(&cfg).unwrap();
    for (t, p) in stream.partitions.iter().enumerate() {
        for s in p.train.iter().chain(&p.test) {
            let pool: BTreeSet<usize> = pools[t][s.label].iter().copied().collect();
            assert!(signature_tokens(&cfg, &s.text).iter().all(|v| pool.contains(v)));
        }
    }
}

#[test]
fn noise_flips_the_stated_share_of_train_labels() {
    let cfg = tiny_cfg();
    let pools = signature_pools(&cfg).unwrap();
    let stream = synthesize(&cfg).unwrap();
    for (t, p) in stream.partitions.iter().enumerate() {
        let flipped = p
            .train
            .iter()
            .filter(|s| {
                let pool: BTreeSet<usize> = pools[t][s.label].iter().copied().collect();
                !signature_tokens(&cfg, &s.text).iter().all(|v| pool.contains(v))
            })
            .count();
        assert_eq!(flipped, (cfg.noise_rate * cfg.train_size as f64).round() as usize);
    }
}

#[test]
fn zero_drift_keeps_pools_fixed() {
    let cfg = DriftConfig {
        drift_strength: 0.0,
        ..tiny_cfg()
    };
    let pools = signature_pools(&cfg).unwrap();
    for t in 1..pools.len() {
        assert_eq!(pools[t], pools[0]);
    }
}

#[test]
fn drift_replaces_the_stated_share() {
    let cfg = DriftConfig::default();
    let pools = signature_pools(&cfg).unwrap();
    let replace = (cfg.drift_strength * cfg.pool_size as f64).round() as usize;
    for t in 1..pools.len() {
        for c in 0..cfg.n_classes {
            let prev: BTreeSet<_> = pools[t - 1][c].iter().collect();
            let cur: BTreeSet<_> = pools[t][c].iter().collect();
            assert_eq!(cur.len(), cfg.pool_size);
            assert_eq!(cur.difference(&prev).count(), replace);
        }
        let all: Vec<usize> = pools[t].iter().flatten().copied().collect();
        assert_eq!(all.iter().collect::<BTreeSet<_>>().len(), all.len(), "pools overlap within a partition");
    }
}

#[test]
fn default_stream_shape() {
    let stream = synthesize(&DriftConfig::default()).unwrap();
    assert_eq!(stream.class_count, 3);
    assert_eq!(stream.len(), 5);
    for p in &stream.partitions {
        assert_eq!((p.train.len(), p.valid.len(), p.test.len()), (2000, 250, 250));
    }
}

#[test]
fn config_validation() {
    assert!(DriftConfig { drift_strength: 1.5, ..DriftConfig::default() }.validate().is_err());
    assert!(DriftConfig { noise_rate: -0.1, ..DriftConfig::default() }.validate().is_err());
    assert!(DriftConfig { n_partitions: 0, ..DriftConfig::default() }.validate().is_err());
    assert!(DriftConfig { n_classes: 1, ..DriftConfig::default() }.validate().is_err());
    assert!(synthesize(&DriftConfig { vocab_size: 250, ..DriftConfig::default() }).is_err());
}

proptest! {
    #[test]
    fn ratio_sizes_sum_and_track_proportions(n in 0usize..5000, a in 1u32..10, b in 1u32..10, c in 1u32..10) {
        let r = SplitRatios { train: a, valid: b, test: c };
        let s = r.sizes(n);
        prop_assert_eq!(s.iter().sum::<usize>(), n);
        let total = (a + b + c) as f64;
        for (size, w) in s.iter().zip([a, b, c]) {
            prop_assert!((*size as f64 - n as f64 * w as f64 / total).abs() < 1.0);
        }
    }

    #[test]
    fn group_split_is_disjoint(sizes in prop::collection::vec(1usize..6, 1..25), n in 1usize..6, seed in any::<u64>()) {
        prop_assume!(n <= sizes.len());
        let parts = split_by_group(&grouped(&sizes), n, SplitRatios::default(), seed).unwrap();
        let sets: Vec<BTreeSet<String>> = parts.iter().map(groups_of).collect();
        for i in 0..n {
            for j in i + 1..n {
                prop_assert!(sets[i].is_disjoint(&sets[j]));
            }
        }
        let counts: Vec<usize> = sets.iter().map(BTreeSet::len).collect();
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }
}
