//! Retrieval metrics, macro aggregation, best-config selection and a
//! paired sign-flip permutation test.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunkers::{Chunk, ChunkerConfig, ChunkerFamily};
use crate::corpus::Evidence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl Scores {
    pub fn new(recall: f64, precision: f64) -> Self {
        let f1 = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { recall, precision, f1 }
    }

    fn from_counts(hits: usize, retrieved: usize, relevant: usize) -> Self {
        let precision = if retrieved == 0 { 0.0 } else { hits as f64 / retrieved as f64 };
        Self::new(hits as f64 / relevant as f64, precision)
    }
}

/// A document counts as retrieved when any of its chunks is retrieved.
pub fn doc_metrics(retrieved: &[&Chunk], relevant: &BTreeSet<String>) -> Result<Scores> {
    if relevant.is_empty() {
        return Err(Error::Parameter("relevant document set is empty".into()));
    }
    let docs: BTreeSet<&str> = retrieved.iter().map(|c| c.doc_id.as_str()).collect();
    let hits = docs.iter().filter(|d| relevant.contains(**d)).count();
    Ok(Scores::from_counts(hits, docs.len(), relevant.len()))
}

/// Sentence-level metrics over the (doc, sentence) pairs the chunks cover.
pub fn evidence_metrics(retrieved: &[&Chunk], evidence: &BTreeSet<Evidence>) -> Result<Scores> {
    if evidence.is_empty() {
        return Err(Error::Parameter("evidence set is empty".into()));
    }
    let covered: BTreeSet<Evidence> = retrieved
        .iter()
        .flat_map(|c| {
            c.sentence_indices.iter().map(|&i| Evidence {
                doc_id: c.doc_id.clone(),
                sentence_index: i,
            })
        })
        .collect();
    let hits = covered.intersection(evidence).count();
    Ok(Scores::from_counts(hits, covered.len(), evidence.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub chunker_config: ChunkerConfig,
    pub query_id: String,
    pub k: usize,
    pub retrieved_chunk_ids: Vec<String>,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub chunker_config: ChunkerConfig,
    pub k: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub n_queries: usize,
}

/// Macro average per (config, k). Rows come out ordered by family, then
/// canonical config string, then k. Each group is summed in query_id
/// order so the result does not depend on input order.
pub fn aggregate(records: &[EvalRecord]) -> Vec<MetricRow> {
    let mut groups: BTreeMap<(ChunkerFamily, String, usize), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.chunker_config.family(), r.chunker_config.to_string(), r.k))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|mut group| {
            group.sort_by(|a, b| a.query_id.cmp(&b.query_id));
            let n = group.len() as f64;
            let mean = |f: fn(&EvalRecord) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            MetricRow {
                chunker_config: group[0].chunker_config,
                k: group[0].k,
                recall: mean(|r| r.recall),
                precision: mean(|r| r.precision),
                f1: mean(|r| r.f1),
                n_queries: group.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestConfig {
    pub family: ChunkerFamily,
    pub chunker_config: ChunkerConfig,
    pub mean_f1: f64,
}

/// Per family, the config with the highest F1 averaged over `k_list`.
/// Ties go to the lexicographically smaller canonical string.
pub fn select_best_config(rows: &[MetricRow], k_list: &[usize]) -> Result<Vec<BestConfig>> {
    if k_list.is_empty() {
        return Err(Error::Parameter("k_list is empty".into()));
    }
    let mut by_config: BTreeMap<String, (ChunkerConfig, BTreeMap<usize, f64>)> = BTreeMap::new();
    for row in rows {
        by_config
            .entry(row.chunker_config.to_string())
            .or_insert_with(|| (row.chunker_config, BTreeMap::new()))
            .1
            .insert(row.k, row.f1);
    }
    let mut best: BTreeMap<ChunkerFamily, BestConfig> = BTreeMap::new();
    for (name, (config, f1_by_k)) in &by_config {
        let mut total = 0.0;
        for k in k_list {
            match f1_by_k.get(k) {
                Some(f1) => total += f1,
                None => {
                    return Err(Error::Contract(format!("{name} has no metrics for k={k}")));
                }
            }
        }
        let mean_f1 = total / k_list.len() as f64;
        let family = config.family();
        // Iteration is in canonical order, so strict > keeps the earlier name on ties.
        if best.get(&family).is_none_or(|b| mean_f1 > b.mean_f1) {
            best.insert(family, BestConfig { family, chunker_config: *config, mean_f1 });
        }
    }
    Ok(best.into_values().collect())
}

const STAT_TOLERANCE: f64 = 1e-12;

fn signed_mean(diffs: &[f64], flip: impl Fn(usize) -> bool) -> f64 {
    let sum: f64 = diffs
        .iter()
        .enumerate()
        .map(|(i, &d)| if flip(i) { -d } else { d })
        .sum();
    (sum / diffs.len() as f64).abs()
}

/// Two-sided paired sign-flip test on `a - b`. When all 2^n sign patterns
/// fit within `iterations` they are enumerated and the exact p-value is
/// returned; otherwise `iterations` random flips give (hits + 1) / (iterations + 1).
pub fn paired_permutation_test(a: &[f64], b: &[f64], iterations: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Parameter("paired test needs at least 2 observations".into()));
    }
    if iterations < 1 {
        return Err(Error::Parameter("iterations must be >= 1".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let observed = signed_mean(&diffs, |_| false);
    let extreme = |stat: f64| stat >= observed - STAT_TOLERANCE;

    if n < usize::BITS as usize && (1usize << n) <= iterations {
        let total = 1usize << n;
        let hits = (0..total)
            .filter(|&mask| extreme(signed_mean(&diffs, |i| mask >> i & 1 == 1)))
            .count();
        return Ok(hits as f64 / total as f64);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flips = vec![false; n];
    let mut hits = 0usize;
    for _ in 0..iterations {
        flips.iter_mut().for_each(|f| *f = rng.gen());
        if extreme(signed_mean(&diffs, |i| flips[i])) {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (iterations + 1) as f64)
}
