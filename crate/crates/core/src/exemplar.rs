//! Representative exemplar selection and the budgeted exemplar store.
//!
//! After training on partition `t`, each class of the partition gets a share
//! of the per-partition budget `floor(M / t)`. Inside a class the samples are
//! clustered on TF-IDF vectors, every cluster gets a share proportional to
//! its size, and each cluster contributes a random draw from its `mu * m`
//! lowest-loss members. Earlier partitions are then trimmed back to an equal
//! share of `M` by dropping their highest stored losses.
//!
//! All integer apportioning uses largest remainders with ties going to the
//! lowest index.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, DEFAULT_MAX_ITER};
use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::rng::{self, Purpose};
use crate::textvec::fit_samples;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredExemplar {
    pub sample: Sample,
    /// Loss under the model that selected it; never recomputed.
    pub stored_loss: f64,
    pub source_partition: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionExemplars {
    pub t: usize,
    pub exemplars: Vec<StoredExemplar>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExemplarStore {
    pub budget: usize,
    pub partitions: Vec<PartitionExemplars>,
}

impl ExemplarStore {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            partitions: Vec::new(),
        }
    }

    pub fn total(&self) -> usize {
        self.partitions.iter().map(|p| p.exemplars.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.partitions.iter().map(|p| p.exemplars.len()).collect()
    }

    pub fn exemplars(&self) -> impl Iterator<Item = &StoredExemplar> {
        self.partitions.iter().flat_map(|p| p.exemplars.iter())
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.exemplars().map(|e| &e.sample)
    }

    /// Largest spread between per-partition sizes.
    pub fn spread(&self) -> usize {
        let sizes = self.sizes();
        match (sizes.iter().max(), sizes.iter().min()) {
            (Some(a), Some(b)) => a - b,
            _ => 0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = StoreDoc {
            budget: self.budget,
            partitions: self
                .partitions
                .iter()
                .map(|p| PartitionDoc {
                    t: p.t,
                    exemplars: p
                        .exemplars
                        .iter()
                        .map(|e| ExemplarDoc {
                            id: e.sample.id.clone(),
                            label: e.sample.label,
                            text: e.sample.text.clone(),
                            group: e.sample.group.clone(),
                            stored_loss: e.stored_loss,
                        })
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let doc: StoreDoc = serde_json::from_str(raw)?;
        Ok(Self {
            budget: doc.budget,
            partitions: doc
                .partitions
                .into_iter()
                .map(|p| PartitionExemplars {
                    t: p.t,
                    exemplars: p
                        .exemplars
                        .into_iter()
                        .map(|e| StoredExemplar {
                            sample: Sample {
                                id: e.id,
                                text: e.text,
                                label: e.label,
                                group: e.group,
                            },
                            stored_loss: e.stored_loss,
                            source_partition: p.t,
                        })
                        .collect(),
                })
                .collect(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut body = self.to_json()?;
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Serialize, Deserialize)]
struct StoreDoc {
    budget: usize,
    partitions: Vec<PartitionDoc>,
}

#[derive(Serialize, Deserialize)]
struct PartitionDoc {
    t: usize,
    exemplars: Vec<ExemplarDoc>,
}

#[derive(Serialize, Deserialize)]
struct ExemplarDoc {
    id: String,
    label: usize,
    text: String,
    #[serde(default)]
    group: String,
    stored_loss: f64,
}

/// Splits `budget` proportionally to `sizes` by largest remainder (ties to
/// the lowest index) without exceeding any size.
pub fn cluster_quotas(sizes: &[usize], budget: usize) -> Result<Vec<usize>> {
    if sizes.is_empty() {
        return Err(Error::InvalidInput("no clusters to apportion over".into()));
    }
    let total: usize = sizes.iter().sum();
    if budget > total {
        return Err(Error::InvalidInput(format!(
            "budget {budget} exceeds the {total} available samples"
        )));
    }
    let mut quotas = vec![0usize; sizes.len()];
    let mut active: Vec<usize> = (0..sizes.len()).filter(|&i| sizes[i] > 0).collect();
    let mut left = budget;
    while left > 0 && !active.is_empty() {
        let pool: usize = active.iter().map(|&i| sizes[i]).sum();
        let mut share: Vec<(usize, usize, usize)> = active
            .iter()
            .map(|&i| (i, left * sizes[i] / pool, left * sizes[i] % pool))
            .collect();
        let mut extra = left - share.iter().map(|s| s.1).sum::<usize>();
        let mut order: Vec<usize> = (0..share.len()).collect();
        order.sort_by(|&a, &b| share[b].2.cmp(&share[a].2).then(share[a].0.cmp(&share[b].0)));
        for &k in &order {
            if extra == 0 {
                break;
            }
            share[k].1 += 1;
            extra -= 1;
        }
        let capped: Vec<usize> = share
            .iter()
            .filter(|(i, q, _)| quotas[*i] + q > sizes[*i])
            .map(|s| s.0)
            .collect();
        if capped.is_empty() {
            for (i, q, _) in share {
                quotas[i] += q;
            }
            break;
        }
        for i in capped {
            left -= sizes[i] - quotas[i];
            quotas[i] = sizes[i];
            active.retain(|&a| a != i);
        }
    }
    Ok(quotas)
}

/// Per-partition targets for `m` exemplars over `t` partitions; the `+1`
/// remainders go to the lowest partition indices.
pub fn partition_targets(m: usize, t: usize) -> Vec<usize> {
    (0..t).map(|i| m / t + usize::from(i < m % t)).collect()
}

/// One cluster's contribution to a selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTrace {
    pub class: usize,
    pub cluster: usize,
    /// Member ids sorted by ascending loss (ties by id).
    pub ranked_ids: Vec<String>,
    pub quota: usize,
    pub pool_size: usize,
    pub selected_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub exemplars: Vec<StoredExemplar>,
    pub clusters: Vec<ClusterTrace>,
}

/// Classes present in `train`, ascending, with their quota of `budget`.
fn class_quotas(train: &[Sample], budget: usize) -> Result<Vec<(usize, usize)>> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for s in train {
        *counts.entry(s.label).or_default() += 1;
    }
    let classes: Vec<usize> = counts.keys().copied().collect();
    let sizes: Vec<usize> = counts.values().copied().collect();
    let quotas = cluster_quotas(&sizes, budget.min(train.len()))?;
    Ok(classes.into_iter().zip(quotas).collect())
}

fn by_loss(a: &(usize, f64), b: &(usize, f64), train: &[Sample]) -> Ordering {
    a.1.total_cmp(&b.1).then_with(|| train[a.0].id.cmp(&train[b.0].id))
}

/// Returns the `m` members of `pool` with the smallest random keys, keeping
/// `pool` order.
fn keyed_draw(pool: &[(usize, f64)], m: usize, key_seed: u64, train: &[Sample]) -> Vec<(usize, f64)> {
    let mut keyed: Vec<(u64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(pos, &(i, _))| (rng::sample_key(key_seed, &train[i].id), pos))
        .collect();
    keyed.sort_unstable();
    let mut chosen: Vec<usize> = keyed.into_iter().take(m).map(|(_, pos)| pos).collect();
    chosen.sort_unstable();
    chosen.into_iter().map(|pos| pool[pos]).collect()
}

fn losses(model: &ModelState, train: &[Sample]) -> Result<Vec<f64>> {
    train.iter().map(|s| model.sample_loss(s)).collect()
}

/// Representative selection for partition `t` under budget `m`, with the
/// per-cluster detail of how it was made.
pub fn select_for_partition_traced(
    train: &[Sample],
    model: &ModelState,
    t: usize,
    m: usize,
    k: usize,
    mu: usize,
    seed: u64,
) -> Result<Selection> {
    if train.is_empty() {
        return Err(Error::InvalidInput("selection from an empty training set".into()));
    }
    if t == 0 || k == 0 || mu == 0 {
        return Err(Error::InvalidInput("selection needs t, K and mu >= 1".into()));
    }
    let budget = m / t;
    let key_seed = rng::derive_seed(seed, Purpose::Select, t as u64);
    let loss = losses(model, train)?;
    let mut exemplars = Vec::new();
    let mut traces = Vec::new();
    for (class, quota) in class_quotas(train, budget)? {
        if quota == 0 {
            continue;
        }
        let members: Vec<usize> = (0..train.len()).filter(|&i| train[i].label == class).collect();
        let tfidf = fit_samples(members.iter().map(|&i| &train[i]))?;
        let vectors: Vec<_> = members.iter().map(|&i| tfidf.transform_text(&train[i].text)).collect();
        let cluster_seed = rng::derive_seed(seed, Purpose::Cluster, ((t as u64) << 32) | class as u64);
        let clustering = kmeans(&vectors, k, cluster_seed, DEFAULT_MAX_ITER)?;
        let quotas = cluster_quotas(&clustering.sizes(), quota)?;
        for (c, &mi) in quotas.iter().enumerate() {
            let mut ranked: Vec<(usize, f64)> = clustering
                .members(c)
                .into_iter()
                .map(|pos| (members[pos], loss[members[pos]]))
                .collect();
            ranked.sort_by(|a, b| by_loss(a, b, train));
            let pool_size = (mu * mi).min(ranked.len());
            let picked = keyed_draw(&ranked[..pool_size], mi, key_seed, train);
            traces.push(ClusterTrace {
                class,
                cluster: c,
                ranked_ids: ranked.iter().map(|&(i, _)| train[i].id.clone()).collect(),
                quota: mi,
                pool_size,
                selected_ids: picked.iter().map(|&(i, _)| train[i].id.clone()).collect(),
            });
            exemplars.extend(picked.into_iter().map(|(i, l)| StoredExemplar {
                sample: train[i].clone(),
                stored_loss: l,
                source_partition: t,
            }));
        }
    }
    Ok(Selection {
        exemplars,
        clusters: traces,
    })
}

/// Representative selection for partition `t` under budget `m`.
pub fn select_for_partition(
    train: &[Sample],
    model: &ModelState,
    t: usize,
    m: usize,
    k: usize,
    mu: usize,
    seed: u64,
) -> Result<Vec<StoredExemplar>> {
    Ok(select_for_partition_traced(train, model, t, m, k, mu, seed)?.exemplars)
}

/// Class-stratified uniform random selection with the same budget split and
/// random keys as [`select_for_partition`]; what random-replay stores.
pub fn select_random(
    train: &[Sample],
    model: &ModelState,
    t: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<StoredExemplar>> {
    if train.is_empty() {
        return Err(Error::InvalidInput("selection from an empty training set".into()));
    }
    if t == 0 {
        return Err(Error::InvalidInput("selection needs t >= 1".into()));
    }
    let key_seed = rng::derive_seed(seed, Purpose::Select, t as u64);
    let loss = losses(model, train)?;
    let mut exemplars = Vec::new();
    for (class, quota) in class_quotas(train, m / t)? {
        let mut members: Vec<(usize, f64)> = (0..train.len())
            .filter(|&i| train[i].label == class)
            .map(|i| (i, loss[i]))
            .collect();
        members.sort_by(|a, b| by_loss(a, b, train));
        let picked = keyed_draw(&members, quota, key_seed, train);
        exemplars.extend(picked.into_iter().map(|(i, l)| StoredExemplar {
            sample: train[i].clone(),
            stored_loss: l,
            source_partition: t,
        }));
    }
    Ok(exemplars)
}

/// Trims every partition already in the store to its share of `m` over `t`
/// partitions by dropping its highest stored losses (ties: lower id first).
pub fn shrink_previous(store: &ExemplarStore, t: usize, m: usize) -> ExemplarStore {
    let targets = partition_targets(m, t);
    let mut out = store.clone();
    out.budget = m;
    for part in &mut out.partitions {
        let target = targets.get(part.t - 1).copied().unwrap_or(0);
        let excess = part.exemplars.len().saturating_sub(target);
        if excess == 0 {
            continue;
        }
        let mut order: Vec<usize> = (0..part.exemplars.len()).collect();
        order.sort_by(|&a, &b| {
            let (ea, eb) = (&part.exemplars[a], &part.exemplars[b]);
            eb.stored_loss
                .total_cmp(&ea.stored_loss)
                .then_with(|| ea.sample.id.cmp(&eb.sample.id))
        });
        let mut drop = vec![false; part.exemplars.len()];
        for &i in &order[..excess] {
            drop[i] = true;
        }
        let mut k = 0;
        part.exemplars.retain(|_| {
            k += 1;
            !drop[k - 1]
        });
    }
    out
}

/// Same as [`shrink_previous`] but removes uniformly at random.
pub fn shrink_random(store: &ExemplarStore, t: usize, m: usize, seed: u64) -> ExemplarStore {
    let targets = partition_targets(m, t);
    let key_seed = rng::derive_seed(seed, Purpose::Rebalance, t as u64);
    let mut out = store.clone();
    out.budget = m;
    for part in &mut out.partitions {
        let target = targets.get(part.t - 1).copied().unwrap_or(0);
        if part.exemplars.len() <= target {
            continue;
        }
        let mut keyed: Vec<(u64, usize)> = part
            .exemplars
            .iter()
            .enumerate()
            .map(|(pos, e)| (rng::sample_key(key_seed, &e.sample.id), pos))
            .collect();
        keyed.sort_unstable();
        let mut keep: Vec<usize> = keyed.into_iter().take(target).map(|(_, p)| p).collect();
        keep.sort_unstable();
        part.exemplars = keep.into_iter().map(|p| part.exemplars[p].clone()).collect();
    }
    out
}

fn append(mut store: ExemplarStore, new_exemplars: Vec<StoredExemplar>, t: usize, m: usize) -> Result<ExemplarStore> {
    if let Some(last) = store.partitions.last() {
        if last.t >= t {
            return Err(Error::OutOfOrder {
                expected: last.t + 1,
                got: t,
            });
        }
    }
    store.partitions.push(PartitionExemplars {
        t,
        exemplars: new_exemplars,
    });
    store.budget = m;
    if store.total() > m {
        return Err(Error::BudgetViolation(format!(
            "store holds {} exemplars after step {t}, budget is {m}",
            store.total()
        )));
    }
    Ok(store)
}

/// Trims earlier partitions by stored loss, then appends partition `t`.
pub fn update_store(store: &ExemplarStore, new_exemplars: Vec<StoredExemplar>, t: usize, m: usize) -> Result<ExemplarStore> {
    append(shrink_previous(store, t, m), new_exemplars, t, m)
}

/// Trims earlier partitions at random, then appends partition `t`.
pub fn update_store_random(
    store: &ExemplarStore,
    new_exemplars: Vec<StoredExemplar>,
    t: usize,
    m: usize,
    seed: u64,
) -> Result<ExemplarStore> {
    append(shrink_random(store, t, m, seed), new_exemplars, t, m)
}
