//! Samples, dataset streams, group-keyed splitting and the synthetic
//! drifting-corpus generator.
//!
//! On disk a stream is a JSON manifest pointing at line-delimited JSON files,
//! one `{id, text, label, group}` object per line. Relative paths in the
//! manifest are resolved against the manifest's directory.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub label: usize,
    #[serde(default)]
    pub group: String,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: usize, group: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label,
            group: group.into(),
        }
    }
}

/// One dataset of the stream; `index` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPartition {
    pub index: usize,
    pub train: Vec<Sample>,
    pub valid: Vec<Sample>,
    pub test: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub class_count: usize,
    pub partitions: Vec<DatasetPartition>,
}

impl Stream {
    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFiles {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub class_count: usize,
    pub partitions: Vec<PartitionFiles>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl StreamManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: StreamManifest = serde_json::from_str(&raw).map_err(|e| Error::MalformedManifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if manifest.partitions.is_empty() {
            return Err(Error::MalformedManifest {
                path: path.to_path_buf(),
                message: "manifest lists no partitions".into(),
            });
        }
        if manifest.class_count == 0 {
            return Err(Error::MalformedManifest {
                path: path.to_path_buf(),
                message: "class_count must be positive".into(),
            });
        }
        Ok(manifest)
    }
}

/// Reads one line-delimited record file. Blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<Sample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        if sample.id.is_empty() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: n + 1,
                message: "empty id".into(),
            });
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_records(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut buf = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut buf, s)?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Loads every partition named by the manifest, in manifest order.
pub fn load_stream(manifest_path: &Path) -> Result<Stream> {
    let manifest = StreamManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut partitions = Vec::with_capacity(manifest.partitions.len());
    for (i, files) in manifest.partitions.iter().enumerate() {
        let mut load = |p: &Path| -> Result<Vec<Sample>> {
            let samples = read_records(&base.join(p))?;
            for s in &samples {
                if s.label >= manifest.class_count {
                    return Err(Error::LabelOutOfRange {
                        id: s.id.clone(),
                        label: s.label,
                        class_count: manifest.class_count,
                    });
                }
                if !seen.insert(s.id.clone()) {
                    return Err(Error::DuplicateId(s.id.clone()));
                }
            }
            Ok(samples)
        };
        let train = load(&files.train)?;
        let valid = load(&files.valid)?;
        let test = load(&files.test)?;
        partitions.push(DatasetPartition {
            index: i + 1,
            train,
            valid,
            test,
        });
    }
    Ok(Stream {
        class_count: manifest.class_count,
        partitions,
    })
}

/// Writes a stream as record files plus `manifest.json` under `out_dir`.
pub fn write_stream(stream: &Stream, out_dir: &Path, meta: serde_json::Value) -> Result<StreamManifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    for p in &stream.partitions {
        let names = PartitionFiles {
            train: PathBuf::from(format!("part{}_train.jsonl", p.index)),
            valid: PathBuf::from(format!("part{}_valid.jsonl", p.index)),
            test: PathBuf::from(format!("part{}_test.jsonl", p.index)),
        };
        write_records(&out_dir.join(&names.train), &p.train)?;
        write_records(&out_dir.join(&names.valid), &p.valid)?;
        write_records(&out_dir.join(&names.test), &p.test)?;
        files.push(names);
    }
    let manifest = StreamManifest {
        class_count: stream.class_count,
        partitions: files,
        meta,
    };
    let path = out_dir.join("manifest.json");
    let mut body = serde_json::to_string_pretty(&manifest)?;
    body.push('\n');
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Split proportions as integer weights, e.g. 8:1:1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u32,
    pub valid: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 8,
            valid: 1,
            test: 1,
        }
    }
}

impl SplitRatios {
    /// Largest-remainder split of `n` items; ties go to the earlier split, so
    /// leftovers land in train first.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let weights = [self.train as usize, self.valid as usize, self.test as usize];
        let total: usize = weights.iter().sum();
        let mut sizes = [0usize; 3];
        let mut rems = [0usize; 3];
        for i in 0..3 {
            sizes[i] = n * weights[i] / total;
            rems[i] = n * weights[i] % total;
        }
        let mut left = n - sizes.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        sizes
    }
}

/// Shuffles the distinct groups, deals them round-robin into `n` partitions,
/// then shuffles and splits each partition by `ratios`.
pub fn split_by_group(samples: &[Sample], n: usize, ratios: SplitRatios, seed: u64) -> Result<Vec<DatasetPartition>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("split_by_group: no samples".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("split_by_group: partition count must be positive".into()));
    }
    if ratios.train == 0 || ratios.valid == 0 || ratios.test == 0 {
        return Err(Error::InvalidInput("split ratios must be positive".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.group.is_empty()) {
        return Err(Error::InvalidInput(format!("sample {:?} has no group", s.id)));
    }
    let mut by_group: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        by_group.entry(s.group.as_str()).or_default().push(s);
    }
    if n > by_group.len() {
        return Err(Error::InvalidInput(format!(
            "cannot split {} groups into {n} partitions",
            by_group.len()
        )));
    }
    let mut groups: Vec<&str> = by_group.keys().copied().collect();
    groups.shuffle(&mut rng::stream(seed, Purpose::Split, 0));

    let mut buckets: Vec<Vec<&Sample>> = vec![Vec::new(); n];
    for (i, g) in groups.iter().enumerate() {
        buckets[i % n].extend(by_group[g].iter().copied());
    }
    let mut out = Vec::with_capacity(n);
    for (i, mut bucket) in buckets.into_iter().enumerate() {
        bucket.shuffle(&mut rng::stream(seed, Purpose::Split, i as u64 + 1));
        let [a, b, _] = ratios.sizes(bucket.len());
        let owned: Vec<Sample> = bucket.into_iter().cloned().collect();
        out.push(DatasetPartition {
            index: i + 1,
            train: owned[..a].to_vec(),
            valid: owned[a..a + b].to_vec(),
            test: owned[a + b..].to_vec(),
        });
    }
    Ok(out)
}

/// Parameters of the synthetic drifting stream.
///
/// Each (class, partition) pair owns a signature pool of `pool_size` tokens;
/// a sample draws `signature_share` of its tokens from its pool and the rest
/// from a background pool shared by everything. Moving to the next
/// partition, `drift_strength` of every class pool is replaced by fresh
/// tokens the class has never used. Fresh tokens may have belonged to other
/// classes earlier in the stream, which is what makes old knowledge stale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftConfig {
    pub n_partitions: usize,
    pub n_classes: usize,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
    pub vocab_size: usize,
    pub tokens_per_sample: usize,
    pub drift_strength: f64,
    pub noise_rate: f64,
    pub seed: u64,
    pub pool_size: usize,
    pub background_size: usize,
    pub signature_share: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            n_partitions: 5,
            n_classes: 3,
            train_size: 2000,
            valid_size: 250,
            test_size: 250,
            vocab_size: 600,
            tokens_per_sample: 20,
            drift_strength: 0.9,
            noise_rate: 0.1,
            seed: 7,
            pool_size: 40,
            background_size: 200,
            signature_share: 0.6,
        }
    }
}

impl DriftConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_partitions", self.n_partitions),
            ("n_classes", self.n_classes),
            ("train_size", self.train_size),
            ("valid_size", self.valid_size),
            ("test_size", self.test_size),
            ("vocab_size", self.vocab_size),
            ("tokens_per_sample", self.tokens_per_sample),
            ("pool_size", self.pool_size),
            ("background_size", self.background_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("drift_strength", self.drift_strength),
            ("noise_rate", self.noise_rate),
            ("signature_share", self.signature_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.noise_rate > 0.0 && self.n_classes < 2 {
            return Err(Error::Config("label noise needs at least two classes".into()));
        }
        if self.background_size >= self.vocab_size {
            return Err(Error::Config("background pool leaves no room for class signatures".into()));
        }
        Ok(())
    }

    pub fn signature_tokens_per_sample(&self) -> usize {
        (self.signature_share * self.tokens_per_sample as f64).round() as usize
    }
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwxz";
const VOWELS: &[u8] = b"aeiou";

/// Pronounceable, all-lowercase, distinct word for every vocabulary index.
pub fn synthetic_word(index: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut digits = Vec::new();
    let mut i = index;
    loop {
        digits.push(i % base);
        i /= base;
        if i == 0 {
            break;
        }
    }
    while digits.len() < 2 {
        digits.push(0);
    }
    let mut word = String::with_capacity(digits.len() * 2);
    for d in digits.iter().rev() {
        word.push(CONSONANTS[d / VOWELS.len()] as char);
        word.push(VOWELS[d % VOWELS.len()] as char);
    }
    word
}

/// Signature pools indexed `[partition][class]`, holding vocabulary indices.
pub fn signature_pools(cfg: &DriftConfig) -> Result<Vec<Vec<Vec<usize>>>> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, Purpose::Generate, 0);
    let universe: Vec<usize> = (cfg.background_size..cfg.vocab_size).collect();
    let replace = (cfg.drift_strength * cfg.pool_size as f64).round() as usize;
    let too_small = || {
        Error::Config(format!(
            "vocab_size {} is too small for {} classes x {} partitions of {}-token pools",
            cfg.vocab_size, cfg.n_classes, cfg.n_partitions, cfg.pool_size
        ))
    };

    let mut used_by_class: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); cfg.n_classes];
    let mut pools: Vec<Vec<Vec<usize>>> = Vec::with_capacity(cfg.n_partitions);
    for t in 0..cfg.n_partitions {
        let mut current: Vec<Vec<usize>> = Vec::with_capacity(cfg.n_classes);
        if t == 0 {
            let mut shuffled = universe.clone();
            shuffled.shuffle(&mut rng);
            if shuffled.len() < cfg.n_classes * cfg.pool_size {
                return Err(too_small());
            }
            for c in 0..cfg.n_classes {
                let mut pool = shuffled[c * cfg.pool_size..(c + 1) * cfg.pool_size].to_vec();
                pool.sort_unstable();
                current.push(pool);
            }
        } else {
            let prev = &pools[t - 1];
            for pool in prev.iter() {
                let mut kept = pool.clone();
                kept.shuffle(&mut rng);
                kept.truncate(cfg.pool_size - replace);
                current.push(kept);
            }
            let mut taken: BTreeSet<usize> = current.iter().flatten().copied().collect();
            for c in 0..cfg.n_classes {
                let mut candidates: Vec<usize> = universe
                    .iter()
                    .copied()
                    .filter(|v| !taken.contains(v) && !used_by_class[c].contains(v))
                    .collect();
                if candidates.len() < replace {
                    return Err(too_small());
                }
                candidates.shuffle(&mut rng);
                candidates.truncate(replace);
                taken.extend(candidates.iter().copied());
                current[c].extend(candidates);
                current[c].sort_unstable();
            }
        }
        for (c, pool) in current.iter().enumerate() {
            used_by_class[c].extend(pool.iter().copied());
        }
        pools.push(current);
    }
    Ok(pools)
}

/// Builds the synthetic stream in memory.
pub fn synthesize(cfg: &DriftConfig) -> Result<Stream> {
    let pools = signature_pools(cfg)?;
    let words: Vec<String> = (0..cfg.vocab_size).map(synthetic_word).collect();
    let n_sig = cfg.signature_tokens_per_sample();
    let mut partitions = Vec::with_capacity(cfg.n_partitions);
    for (t, class_pools) in pools.iter().enumerate() {
        let index = t + 1;
        let mut rng = rng::stream(cfg.seed, Purpose::Generate, index as u64);
        let make_split = |name: &str, size: usize, rng: &mut rng::Rng| -> Vec<Sample> {
            let mut labels: Vec<usize> = (0..size).map(|i| i % cfg.n_classes).collect();
            labels.shuffle(rng);
            labels
                .into_iter()
                .enumerate()
                .map(|(i, label)| {
                    let pool = &class_pools[label];
                    let mut tokens: Vec<&str> = Vec::with_capacity(cfg.tokens_per_sample);
                    for k in 0..cfg.tokens_per_sample {
                        let v = if k < n_sig {
                            pool[rng.random_range(0..pool.len())]
                        } else {
                            rng.random_range(0..cfg.background_size)
                        };
                        tokens.push(&words[v]);
                    }
                    tokens.shuffle(rng);
                    Sample {
                        id: format!("p{index}-{name}-{i:05}"),
                        text: tokens.join(" "),
                        label,
                        group: format!("p{index}g{}", i % 8),
                    }
                })
                .collect()
        };
        let mut train = make_split("train", cfg.train_size, &mut rng);
        let valid = make_split("valid", cfg.valid_size, &mut rng);
        let test = make_split("test", cfg.test_size, &mut rng);

        let flips = (cfg.noise_rate * train.len() as f64).round() as usize;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        for &i in order.iter().take(flips) {
            let shift = rng.random_range(1..cfg.n_classes);
            train[i].label = (train[i].label + shift) % cfg.n_classes;
        }
        partitions.push(DatasetPartition {
            index,
            train,
            valid,
            test,
        });
    }
    Ok(Stream {
        class_count: cfg.n_classes,
        partitions,
    })
}

/// Generates the synthetic stream and writes it to `out_dir`.
pub fn generate_synthetic(cfg: &DriftConfig, out_dir: &Path) -> Result<StreamManifest> {
    let stream = synthesize(cfg)?;
    let meta = serde_json::json!({
        "generator": "synthetic-drift",
        "version": crate::VERSION,
        "config": cfg,
    });
    write_stream(&stream, out_dir, meta)
}
