//! The three chunker families: fixed-size, breakpoint-based and
//! clustering-based (constrained single linkage and DBSCAN over the joint
//! positional/semantic distance).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::distance::{
    consecutive_distances, gradient, joint_distance_matrix, threshold_with, StdMode,
    ThresholdPolicy,
};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::segmenter::SegmentedDocument;

/// Default single-linkage stop distance.
pub const DEFAULT_STOP_DISTANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    /// Ascending, unique, all below the document's sentence count.
    pub sentence_indices: Vec<usize>,
    pub text: String,
}

impl Chunk {
    /// Builds a chunk from sorted indices; text is the sentences joined by single spaces.
    pub fn assemble(doc: &SegmentedDocument, ordinal: usize, sentence_indices: Vec<usize>) -> Self {
        let text = sentence_indices
            .iter()
            .map(|&i| doc.sentences[i].text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        Chunk {
            chunk_id: format!("{}#{ordinal:04}", doc.doc_id),
            doc_id: doc.doc_id.clone(),
            sentence_indices,
            text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkerFamily {
    FixedSize,
    Breakpoint,
    SingleLinkage,
    Dbscan,
}

impl ChunkerFamily {
    pub const ALL: [ChunkerFamily; 4] = [
        ChunkerFamily::FixedSize,
        ChunkerFamily::Breakpoint,
        ChunkerFamily::SingleLinkage,
        ChunkerFamily::Dbscan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChunkerFamily::FixedSize => "fixed_size",
            ChunkerFamily::Breakpoint => "breakpoint",
            ChunkerFamily::SingleLinkage => "single_linkage",
            ChunkerFamily::Dbscan => "dbscan",
        }
    }
}

impl fmt::Display for ChunkerFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChunkerConfig {
    FixedSize { n_chunks: usize, overlap: usize },
    Breakpoint { policy: ThresholdPolicy },
    SingleLinkage { n_clusters: usize, lambda: f64, stop_distance: f64 },
    Dbscan { eps: f64, min_samples: usize, lambda: f64 },
}

impl ChunkerConfig {
    pub fn family(&self) -> ChunkerFamily {
        match self {
            ChunkerConfig::FixedSize { .. } => ChunkerFamily::FixedSize,
            ChunkerConfig::Breakpoint { .. } => ChunkerFamily::Breakpoint,
            ChunkerConfig::SingleLinkage { .. } => ChunkerFamily::SingleLinkage,
            ChunkerConfig::Dbscan { .. } => ChunkerFamily::Dbscan,
        }
    }

    /// Whether chunking needs sentence embeddings.
    pub fn is_semantic(&self) -> bool {
        !matches!(self, ChunkerConfig::FixedSize { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let lambda_ok = |l: f64| (0.0..=1.0).contains(&l);
        let problem = match *self {
            ChunkerConfig::FixedSize { n_chunks, overlap } => {
                if n_chunks < 1 {
                    Some("n_chunks must be >= 1".to_string())
                } else if overlap > 1 {
                    Some(format!("overlap must be 0 or 1, got {overlap}"))
                } else {
                    None
                }
            }
            ChunkerConfig::Breakpoint { policy } => policy.validate().err().map(|e| e.to_string()),
            ChunkerConfig::SingleLinkage { n_clusters, lambda, stop_distance } => {
                if n_clusters < 1 {
                    Some("n_clusters must be >= 1".into())
                } else if !lambda_ok(lambda) {
                    Some(format!("lambda must be in [0, 1], got {lambda}"))
                } else if stop_distance.is_nan() || stop_distance < 0.0 {
                    Some(format!("stop_distance must be >= 0, got {stop_distance}"))
                } else {
                    None
                }
            }
            ChunkerConfig::Dbscan { eps, min_samples, lambda } => {
                if eps.is_nan() || eps <= 0.0 {
                    Some(format!("eps must be > 0, got {eps}"))
                } else if min_samples < 1 {
                    Some("min_samples must be >= 1".into())
                } else if !lambda_ok(lambda) {
                    Some(format!("lambda must be in [0, 1], got {lambda}"))
                } else {
                    None
                }
            }
        };
        match problem {
            Some(p) => Err(Error::Parameter(format!("{self}: {p}"))),
            None => Ok(()),
        }
    }

    /// Named numeric hyperparameters, in canonical order.
    pub fn hyperparameters(&self) -> Vec<(String, f64)> {
        match *self {
            ChunkerConfig::FixedSize { n_chunks, overlap } => vec![
                ("n_chunks".into(), n_chunks as f64),
                ("overlap".into(), overlap as f64),
            ],
            ChunkerConfig::Breakpoint { policy } => {
                vec![(policy.kind.as_str().to_string(), policy.amount)]
            }
            ChunkerConfig::SingleLinkage { n_clusters, lambda, stop_distance } => vec![
                ("n_clusters".into(), n_clusters as f64),
                ("lambda".into(), lambda),
                ("stop_distance".into(), stop_distance),
            ],
            ChunkerConfig::Dbscan { eps, min_samples, lambda } => vec![
                ("eps".into(), eps),
                ("min_samples".into(), min_samples as f64),
                ("lambda".into(), lambda),
            ],
        }
    }
}

impl fmt::Display for ChunkerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.family())?;
        match self {
            ChunkerConfig::Breakpoint { policy } => write!(f, "{}={}", policy.kind, policy.amount),
            other => {
                let parts: Vec<String> = other
                    .hyperparameters()
                    .into_iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl FromStr for ChunkerConfig {
    type Err = Error;

    /// Parses the canonical form, e.g. `dbscan:eps=0.3,min_samples=2,lambda=0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parameter(format!("chunker {s:?}: {msg}"));
        let (family, rest) = s.split_once(':').ok_or_else(|| bad("expected <family>:<params>"))?;
        let mut params = Vec::new();
        for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let value: f64 = v.trim().parse().map_err(|_| bad(&format!("bad number {v:?}")))?;
            params.push((k.trim().to_string(), value));
        }
        let get = |name: &str| params.iter().find(|(k, _)| k == name).map(|(_, v)| *v);
        let need = |name: &str| get(name).ok_or_else(|| bad(&format!("missing {name}")));
        let as_count = |name: &str| -> Result<usize> {
            let v = need(name)?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(bad(&format!("{name} must be a non-negative integer")));
            }
            Ok(v as usize)
        };
        let allowed: &[&str] = match family {
            "fixed_size" => &["n_chunks", "overlap"],
            "single_linkage" => &["n_clusters", "lambda", "stop_distance"],
            "dbscan" => &["eps", "min_samples", "lambda"],
            "breakpoint" => &[],
            _ => return Err(bad("unknown chunker family")),
        };
        if family != "breakpoint" {
            if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
                return Err(bad(&format!("unexpected parameter {k}")));
            }
        }
        let config = match family {
            "fixed_size" => ChunkerConfig::FixedSize {
                n_chunks: as_count("n_chunks")?,
                overlap: if get("overlap").is_some() { as_count("overlap")? } else { 0 },
            },
            "single_linkage" => ChunkerConfig::SingleLinkage {
                n_clusters: as_count("n_clusters")?,
                lambda: need("lambda")?,
                stop_distance: get("stop_distance").unwrap_or(DEFAULT_STOP_DISTANCE),
            },
            "dbscan" => ChunkerConfig::Dbscan {
                eps: need("eps")?,
                min_samples: as_count("min_samples")?,
                lambda: need("lambda")?,
            },
            _ => {
                let [(kind, amount)] = params.as_slice() else {
                    return Err(bad("breakpoint takes exactly one <kind>=<amount>"));
                };
                ChunkerConfig::Breakpoint {
                    policy: ThresholdPolicy { kind: kind.parse()?, amount: *amount },
                }
            }
        };
        config.validate()?;
        Ok(config)
    }
}

impl Serialize for ChunkerConfig {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChunkerConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Knobs that change chunking output without being part of a config's identity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChunkOptions {
    pub std_mode: StdMode,
}

fn contiguous_chunks(doc: &SegmentedDocument, ranges: impl IntoIterator<Item = std::ops::Range<usize>>) -> Vec<Chunk> {
    ranges
        .into_iter()
        .enumerate()
        .map(|(i, r)| Chunk::assemble(doc, i, r.collect()))
        .collect()
}

fn check_aligned(doc: &SegmentedDocument, embeddings: &[EmbeddingVector]) -> Result<()> {
    if doc.n() != embeddings.len() {
        return Err(Error::Contract(format!(
            "document {} has {} sentences but {} embeddings",
            doc.doc_id,
            doc.n(),
            embeddings.len()
        )));
    }
    Ok(())
}

pub fn fixed_size_chunk(doc: &SegmentedDocument, n_chunks: usize, overlap: usize) -> Vec<Chunk> {
    let n = doc.n();
    let size = n.div_ceil(n_chunks.max(1)).max(1);
    let ranges = (0..n).step_by(size).map(|start| {
        let end = (start + size).min(n);
        if overlap > 0 && start > 0 {
            start - 1..end
        } else {
            start..end
        }
    });
    contiguous_chunks(doc, ranges)
}

/// Splits after sentence `i` wherever the distance (or its gradient) at `i`
/// strictly exceeds the policy threshold.
pub fn breakpoint_chunk(
    doc: &SegmentedDocument,
    embeddings: &[EmbeddingVector],
    policy: ThresholdPolicy,
) -> Result<Vec<Chunk>> {
    breakpoint_chunk_with(doc, embeddings, policy, StdMode::Population)
}

pub fn breakpoint_chunk_with(
    doc: &SegmentedDocument,
    embeddings: &[EmbeddingVector],
    policy: ThresholdPolicy,
    std_mode: StdMode,
) -> Result<Vec<Chunk>> {
    check_aligned(doc, embeddings)?;
    policy.validate()?;
    let n = doc.n();
    if n < 2 {
        return Ok(contiguous_chunks(doc, (n == 1).then_some(0..1)));
    }
    let distances = consecutive_distances(embeddings)?;
    let breakpoints: Vec<usize> = breakpoints_for(&distances, policy, std_mode)?;
    let mut ranges = Vec::with_capacity(breakpoints.len() + 1);
    let mut start = 0;
    for b in breakpoints {
        ranges.push(start..b + 1);
        start = b + 1;
    }
    ranges.push(start..n);
    Ok(contiguous_chunks(doc, ranges))
}

/// Positions `i` (break after sentence `i`) selected by the policy.
pub fn breakpoints_for(distances: &[f64], policy: ThresholdPolicy, std_mode: StdMode) -> Result<Vec<usize>> {
    let signal = if policy.kind.on_gradient() {
        // A single distance has no gradient; no breakpoint can be justified.
        if distances.len() < 2 {
            return Ok(Vec::new());
        }
        gradient(distances)?
    } else {
        distances.to_vec()
    };
    let cut = threshold_with(distances, policy, std_mode)?;
    Ok(signal
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > cut)
        .map(|(i, _)| i)
        .collect())
}

/// Groups of point indices into chunks ordered by their smallest index.
fn clusters_to_chunks(doc: &SegmentedDocument, mut groups: Vec<Vec<usize>>) -> Vec<Chunk> {
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort_by_key(|g| g[0]);
    groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| Chunk::assemble(doc, i, g))
        .collect()
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }

    fn groups(mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = self.find(i);
            by_root[r].push(i);
        }
        by_root.into_iter().filter(|g| !g.is_empty()).collect()
    }
}

/// Single-linkage merging over the joint distance, capped at
/// `ceil(n / n_clusters)` sentences per cluster and stopped at the first pair
/// farther apart than `stop_distance`.
pub fn single_linkage_chunk(
    doc: &SegmentedDocument,
    embeddings: &[EmbeddingVector],
    n_clusters: usize,
    lambda: f64,
    stop_distance: f64,
) -> Result<Vec<Chunk>> {
    check_aligned(doc, embeddings)?;
    ChunkerConfig::SingleLinkage { n_clusters, lambda, stop_distance }.validate()?;
    let n = doc.n();
    let matrix = joint_distance_matrix(embeddings, lambda)?;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for (a, row) in matrix.iter().enumerate() {
        pairs.extend(row.iter().enumerate().skip(a + 1).map(|(b, &d)| (d, a, b)));
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let max_size = n.div_ceil(n_clusters);
    let mut sets = DisjointSet::new(n);
    for (d, a, b) in pairs {
        if d > stop_distance {
            break;
        }
        let (ra, rb) = (sets.find(a), sets.find(b));
        if ra == rb || sets.size[ra] + sets.size[rb] > max_size {
            continue;
        }
        sets.union(ra, rb);
    }
    Ok(clusters_to_chunks(doc, sets.groups()))
}

/// DBSCAN labels over a precomputed distance matrix; `None` marks noise.
///
/// Points are scanned in index order and neighbours expanded in index order,
/// so labels are deterministic. A border point joins the first cluster that
/// reaches it.
pub fn dbscan_labels(matrix: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<Option<usize>> {
    let n = matrix.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|p| (0..n).filter(|&q| matrix[p][q] <= eps).collect())
        .collect();
    let is_core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_samples).collect();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut next_label = 0;
    for p in 0..n {
        if labels[p].is_some() || !is_core[p] {
            continue;
        }
        let label = next_label;
        next_label += 1;
        labels[p] = Some(label);
        let mut frontier = std::collections::VecDeque::from([p]);
        while let Some(q) = frontier.pop_front() {
            for &r in &neighbours[q] {
                if labels[r].is_some() {
                    continue;
                }
                labels[r] = Some(label);
                if is_core[r] {
                    frontier.push_back(r);
                }
            }
        }
    }
    labels
}

pub fn dbscan_chunk(
    doc: &SegmentedDocument,
    embeddings: &[EmbeddingVector],
    eps: f64,
    min_samples: usize,
    lambda: f64,
) -> Result<Vec<Chunk>> {
    check_aligned(doc, embeddings)?;
    ChunkerConfig::Dbscan { eps, min_samples, lambda }.validate()?;
    let matrix = joint_distance_matrix(embeddings, lambda)?;
    let labels = dbscan_labels(&matrix, eps, min_samples);
    let cluster_count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); cluster_count];
    for (i, label) in labels.iter().enumerate() {
        match label {
            Some(l) => groups[*l].push(i),
            None => groups.push(vec![i]),
        }
    }
    Ok(clusters_to_chunks(doc, groups))
}

/// Chunks one document with any configuration. Semantic configs need
/// embeddings aligned with the document's sentences.
pub fn chunk_document(
    doc: &SegmentedDocument,
    embeddings: Option<&[EmbeddingVector]>,
    config: &ChunkerConfig,
    options: ChunkOptions,
) -> Result<Vec<Chunk>> {
    config.validate()?;
    let embeddings = || {
        embeddings.ok_or_else(|| {
            Error::Contract(format!("{config} needs sentence embeddings"))
        })
    };
    match *config {
        ChunkerConfig::FixedSize { n_chunks, overlap } => Ok(fixed_size_chunk(doc, n_chunks, overlap)),
        ChunkerConfig::Breakpoint { policy } => {
            breakpoint_chunk_with(doc, embeddings()?, policy, options.std_mode)
        }
        ChunkerConfig::SingleLinkage { n_clusters, lambda, stop_distance } => {
            single_linkage_chunk(doc, embeddings()?, n_clusters, lambda, stop_distance)
        }
        ChunkerConfig::Dbscan { eps, min_samples, lambda } => {
            dbscan_chunk(doc, embeddings()?, eps, min_samples, lambda)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::ThresholdKind;
    use crate::segmenter::Sentence;
    use proptest::prelude::*;

    fn doc(n: usize) -> SegmentedDocument {
        SegmentedDocument {
            doc_id: "d".into(),
            sentences: (0..n)
                .map(|i| Sentence { index: i, text: format!("s{i}"), span: 0..0 })
                .collect(),
        }
    }

    fn basis(dim: usize, i: usize) -> EmbeddingVector {
        let mut v = vec![0.0f32; dim];
        v[i] = 1.0;
        EmbeddingVector::normalized(v).unwrap()
    }

    fn index_sets(chunks: &[Chunk]) -> Vec<Vec<usize>> {
        chunks.iter().map(|c| c.sentence_indices.clone()).collect()
    }

    #[test]
    fn fixed_size_examples() {
        // ceil(10 / 3) = 4: [0,4), [4,8), [8,10).
        let d = doc(10);
        assert_eq!(
            index_sets(&fixed_size_chunk(&d, 3, 0)),
            vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9]]
        );
        assert_eq!(
            index_sets(&fixed_size_chunk(&d, 3, 1)),
            vec![vec![0, 1, 2, 3], vec![3, 4, 5, 6, 7], vec![7, 8, 9]]
        );
        assert_eq!(index_sets(&fixed_size_chunk(&doc(1), 4, 1)), vec![vec![0]]);
        assert_eq!(fixed_size_chunk(&doc(3), 7, 0).len(), 3);
    }

    #[test]
    fn fixed_size_can_yield_fewer_chunks() {
        // n = 10, c = 4: size 3 gives 4 chunks; n = 9, c = 4: size 3 gives 3.
        assert_eq!(fixed_size_chunk(&doc(9), 4, 0).len(), 3);
    }

    #[test]
    fn chunk_text_and_ids() {
        let c = &fixed_size_chunk(&doc(5), 2, 0)[1];
        assert_eq!(c.text, "s3 s4");
        assert_eq!(c.chunk_id, "d#0001");
    }

    fn embeddings_for_distances(distances: &[f64]) -> Vec<EmbeddingVector> {
        // Consecutive vectors rotate in the plane so that 1 - cos equals each target.
        let mut angle = 0.0f64;
        let mut out = vec![EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap()];
        for d in distances {
            angle += (1.0 - d).acos();
            out.push(EmbeddingVector::normalized(vec![angle.cos() as f32, angle.sin() as f32]).unwrap());
        }
        out
    }

    #[test]
    fn breakpoint_absolute_distance() {
        let embs = embeddings_for_distances(&[0.1, 0.8, 0.2]);
        let d = consecutive_distances(&embs).unwrap();
        assert!((d[1] - 0.8).abs() < 1e-6);
        let policy = ThresholdPolicy::new(ThresholdKind::AbsoluteDistance, 0.5).unwrap();
        let chunks = breakpoint_chunk(&doc(4), &embs, policy).unwrap();
        assert_eq!(index_sets(&chunks), vec![vec![0, 1], vec![2, 3]]);

        let high = ThresholdPolicy::new(ThresholdKind::AbsoluteDistance, 0.9).unwrap();
        assert_eq!(breakpoint_chunk(&doc(4), &embs, high).unwrap().len(), 1);
    }

    #[test]
    fn breakpoint_orthogonal_alternation_gives_singletons() {
        let embs: Vec<_> = (0..4).map(|i| basis(2, i % 2)).collect();
        let policy = ThresholdPolicy::new(ThresholdKind::AbsoluteDistance, 0.5).unwrap();
        let chunks = breakpoint_chunk(&doc(4), &embs, policy).unwrap();
        assert_eq!(index_sets(&chunks), vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn breakpoint_equal_distances_never_split_on_relative_policies() {
        let embs = vec![basis(3, 0); 6];
        for kind in [ThresholdKind::Percentile, ThresholdKind::StdDev, ThresholdKind::Interquartile, ThresholdKind::GradientPercentile] {
            let policy = ThresholdPolicy::new(kind, 50.0).unwrap();
            assert_eq!(breakpoint_chunk(&doc(6), &embs, policy).unwrap().len(), 1, "{kind}");
        }
    }

    #[test]
    fn breakpoint_gradient_policy_uses_gradient_signal() {
        // D = [0, 0, 1, 1, 0]; G = [0, 0.5, 0.5, -0.5, -1].
        let embs = vec![basis(3, 0), basis(3, 0), basis(3, 0), basis(3, 1), basis(3, 2), basis(3, 2)];
        let policy = ThresholdPolicy::new(ThresholdKind::AbsoluteGradient, 0.2).unwrap();
        let chunks = breakpoint_chunk(&doc(6), &embs, policy).unwrap();
        assert_eq!(index_sets(&chunks), vec![vec![0, 1], vec![2], vec![3, 4, 5]]);
    }

    #[test]
    fn breakpoint_small_documents() {
        let p = ThresholdPolicy::new(ThresholdKind::GradientPercentile, 10.0).unwrap();
        assert_eq!(breakpoint_chunk(&doc(1), &[basis(2, 0)], p).unwrap().len(), 1);
        assert_eq!(breakpoint_chunk(&doc(2), &[basis(2, 0), basis(2, 1)], p).unwrap().len(), 1);
        assert!(breakpoint_chunk(&doc(2), &[basis(2, 0)], p).is_err());
    }

    #[test]
    fn single_linkage_positional_only() {
        // lambda = 1: adjacent pairs at 1/4 merge left to right under a cap of 2.
        let embs = vec![basis(2, 0); 4];
        let chunks = single_linkage_chunk(&doc(4), &embs, 2, 1.0, 0.5).unwrap();
        assert_eq!(index_sets(&chunks), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn single_linkage_groups_identical_non_adjacent_sentences() {
        let embs = vec![basis(3, 0), basis(3, 1), basis(3, 0), basis(3, 2)];
        let chunks = single_linkage_chunk(&doc(4), &embs, 2, 0.0, 0.5).unwrap();
        assert_eq!(index_sets(&chunks), vec![vec![0, 2], vec![1], vec![3]]);
        assert_eq!(chunks[0].text, "s0 s2");
    }

    #[test]
    fn single_linkage_singleton_document() {
        let chunks = single_linkage_chunk(&doc(1), &[basis(2, 0)], 3, 0.5, 0.5).unwrap();
        assert_eq!(index_sets(&chunks), vec![vec![0]]);
    }

    #[test]
    fn dbscan_extremes() {
        let embs = vec![basis(3, 0), basis(3, 1), basis(3, 2), basis(3, 0)];
        let all = dbscan_chunk(&doc(4), &embs, 1.0, 1, 0.0).unwrap();
        assert_eq!(index_sets(&all), vec![vec![0, 1, 2, 3]]);

        // Minimum positive joint distance at lambda = 0.5 is 0.5 * 3/4 = 0.375.
        let none = dbscan_chunk(&doc(4), &embs, 0.3, 1, 0.5).unwrap();
        assert_eq!(none.len(), 4);
    }

    #[test]
    fn dbscan_outlier_is_its_own_chunk() {
        // Points 0..=3 share a vector; point 4 is orthogonal to them.
        // With lambda = 0 and eps = 0.1: 0..=3 are mutual neighbours (core with
        // min_samples 2); 4 has only itself and is noise.
        let mut embs = vec![basis(2, 0); 4];
        embs.push(basis(2, 1));
        let chunks = dbscan_chunk(&doc(5), &embs, 0.1, 2, 0.0).unwrap();
        assert_eq!(index_sets(&chunks), vec![vec![0, 1, 2, 3], vec![4]]);
    }

    #[test]
    fn dbscan_border_point_joins_first_cluster() {
        // Point 1 is the only core point at min_samples 3; 0 and 2 are its
        // border points and 3 is noise.
        let m = vec![
            vec![0.0, 0.1, 0.9, 0.9],
            vec![0.1, 0.0, 0.1, 0.9],
            vec![0.9, 0.1, 0.0, 0.9],
            vec![0.9, 0.9, 0.9, 0.0],
        ];
        assert_eq!(dbscan_labels(&m, 0.15, 3), vec![Some(0), Some(0), Some(0), None]);
        assert_eq!(dbscan_labels(&m, 0.15, 4), vec![None; 4]);
    }

    #[test]
    fn canonical_strings_round_trip() {
        let configs = [
            ChunkerConfig::FixedSize { n_chunks: 3, overlap: 1 },
            ChunkerConfig::Breakpoint { policy: ThresholdPolicy { kind: ThresholdKind::Interquartile, amount: 0.75 } },
            ChunkerConfig::SingleLinkage { n_clusters: 4, lambda: 0.25, stop_distance: 0.5 },
            ChunkerConfig::Dbscan { eps: 0.1, min_samples: 2, lambda: 1.0 },
        ];
        let expected = [
            "fixed_size:n_chunks=3,overlap=1",
            "breakpoint:interquartile=0.75",
            "single_linkage:n_clusters=4,lambda=0.25,stop_distance=0.5",
            "dbscan:eps=0.1,min_samples=2,lambda=1",
        ];
        for (c, e) in configs.iter().zip(expected) {
            assert_eq!(c.to_string(), e);
            assert_eq!(&e.parse::<ChunkerConfig>().unwrap(), c);
        }
        assert_eq!(
            "single_linkage:n_clusters=2,lambda=0".parse::<ChunkerConfig>().unwrap(),
            ChunkerConfig::SingleLinkage { n_clusters: 2, lambda: 0.0, stop_distance: 0.5 }
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for s in [
            "fixed_size:n_chunks=0",
            "fixed_size:n_chunks=2,overlap=2",
            "fixed_size:n_chunks=2.5",
            "dbscan:eps=0,min_samples=1,lambda=0",
            "single_linkage:n_clusters=2,lambda=1.5",
            "breakpoint:percentile=120",
            "breakpoint:nonsense=1",
            "kmeans:k=3",
            "dbscan:eps=0.1,min_samples=1,lambda=0,extra=1",
        ] {
            assert!(s.parse::<ChunkerConfig>().is_err(), "{s}");
        }
    }

    fn random_embeddings(n: usize, dim: usize, seed: u64) -> Vec<EmbeddingVector> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                EmbeddingVector::normalized(v).unwrap()
            })
            .collect()
    }

    fn is_partition(chunks: &[Chunk], n: usize) -> bool {
        let mut seen = vec![0; n];
        for c in chunks {
            for &i in &c.sentence_indices {
                seen[i] += 1;
            }
        }
        seen.iter().all(|&s| s == 1)
    }

    proptest! {
        #[test]
        fn clustering_chunkers_partition(n in 1usize..40, c in 1usize..10, lambda in 0.0f64..=1.0, eps in 0.05f64..0.8, ms in 1usize..5, seed: u64) {
            let d = doc(n);
            let embs = random_embeddings(n, 6, seed);
            let sl = single_linkage_chunk(&d, &embs, c, lambda, 0.5).unwrap();
            prop_assert!(is_partition(&sl, n));
            let max = n.div_ceil(c);
            prop_assert!(sl.iter().all(|ch| ch.sentence_indices.len() <= max));
            let db = dbscan_chunk(&d, &embs, eps, ms, lambda).unwrap();
            prop_assert!(is_partition(&db, n));
            for chunks in [&sl, &db] {
                for w in chunks.windows(2) {
                    prop_assert!(w[0].sentence_indices[0] < w[1].sentence_indices[0]);
                }
            }
        }

        #[test]
        fn fixed_size_overlap_properties(n in 1usize..60, c in 1usize..12) {
            let d = doc(n);
            let plain = fixed_size_chunk(&d, c, 0);
            prop_assert!(is_partition(&plain, n));
            let over = fixed_size_chunk(&d, c, 1);
            prop_assert_eq!(over.len(), plain.len());
            let mut count = vec![0; n];
            for ch in &over {
                for &i in &ch.sentence_indices {
                    count[i] += 1;
                }
            }
            prop_assert!(count.iter().all(|&k| (1..=2).contains(&k)));
            for (o, p) in over.iter().zip(&plain) {
                prop_assert_eq!(&o.sentence_indices[o.sentence_indices.len() - p.sentence_indices.len()..], &p.sentence_indices[..]);
            }
        }

        #[test]
        fn positional_clustering_is_contiguous(n in 1usize..40, eps in 0.01f64..0.6, ms in 1usize..4, seed: u64) {
            let d = doc(n);
            let embs = random_embeddings(n, 4, seed);
            for chunks in [dbscan_chunk(&d, &embs, eps, ms, 1.0).unwrap(), single_linkage_chunk(&d, &embs, 3, 1.0, 0.5).unwrap()] {
                for ch in chunks {
                    let idx = &ch.sentence_indices;
                    prop_assert_eq!(idx[idx.len() - 1] - idx[0] + 1, idx.len());
                }
            }
        }

        #[test]
        fn breakpoint_chunks_are_contiguous_partitions(n in 1usize..30, seed: u64, kind_i in 0usize..6, amount in 0.0f64..1.0) {
            let d = doc(n);
            let embs = random_embeddings(n, 4, seed);
            let kind = ThresholdKind::ALL[kind_i];
            let amount = if matches!(kind, ThresholdKind::Percentile | ThresholdKind::GradientPercentile) { amount * 100.0 } else { amount };
            let chunks = breakpoint_chunk(&d, &embs, ThresholdPolicy::new(kind, amount).unwrap()).unwrap();
            prop_assert!(is_partition(&chunks, n));
            for ch in chunks {
                let idx = &ch.sentence_indices;
                prop_assert_eq!(idx[idx.len() - 1] - idx[0] + 1, idx.len());
            }
        }
    }
}
