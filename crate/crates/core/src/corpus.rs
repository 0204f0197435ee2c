//! Corpus loading, long-document stitching and query sampling.
//!
//! A corpus directory holds `docs.jsonl` and `queries.jsonl`. Stitched
//! corpora add `stitch_map.jsonl` recording where each source document
//! landed.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmenter::{SegmentedDocument, Segmenter};

pub const DOCS_FILE: &str = "docs.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const STITCH_MAP_FILE: &str = "stitch_map.jsonl";

/// Separator placed between source texts of a stitched document. A blank line
/// is a hard sentence boundary, so sentence counts add up exactly.
pub const STITCH_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Map<String, serde_json::Value>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence {
    pub doc_id: String,
    pub sentence_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    pub relevant_doc_ids: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<Evidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
}

/// Evidence as it may appear on disk: by index, or by sentence text to be
/// resolved against the segmented document.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvidence {
    doc_id: String,
    #[serde(default)]
    sentence_index: Option<usize>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawQuery {
    query_id: String,
    text: String,
    relevant_doc_ids: Vec<String>,
    #[serde(default)]
    evidence: Vec<RawEvidence>,
    #[serde(default)]
    reference_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StitchedDocument {
    pub doc_id: String,
    pub source_doc_ids: Vec<String>,
    /// Index of each source's first sentence within the stitched document.
    pub sentence_offsets: Vec<usize>,
}

/// Documents, their segmentation, and queries with ground truth.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub segmented: Vec<SegmentedDocument>,
    pub queries: Vec<QueryRecord>,
    position: HashMap<String, usize>,
}

impl Corpus {
    /// Segments every document and validates queries against them.
    pub fn new(documents: Vec<Document>, queries: Vec<QueryRecord>, segmenter: &dyn Segmenter) -> Result<Self> {
        let mut position = HashMap::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            if position.insert(d.doc_id.clone(), i).is_some() {
                return Err(Error::Integrity(format!("duplicate doc_id {:?}", d.doc_id)));
            }
        }
        let segmented = documents
            .iter()
            .map(|d| segmenter.segment_document(&d.doc_id, &d.text))
            .collect::<Result<Vec<_>>>()?;
        let corpus = Self { documents, segmented, queries, position };
        corpus.validate_queries()?;
        Ok(corpus)
    }

    fn validate_queries(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for q in &self.queries {
            if !ids.insert(q.query_id.as_str()) {
                return Err(Error::Integrity(format!("duplicate query_id {:?}", q.query_id)));
            }
            if let Some(missing) = q.relevant_doc_ids.iter().find(|d| !self.position.contains_key(*d)) {
                return Err(Error::Integrity(format!(
                    "query {:?} references unknown document {missing:?}",
                    q.query_id
                )));
            }
            for e in &q.evidence {
                let doc = self.segmented_doc(&e.doc_id).ok_or_else(|| {
                    Error::Integrity(format!(
                        "query {:?} has evidence in unknown document {:?}",
                        q.query_id, e.doc_id
                    ))
                })?;
                if e.sentence_index >= doc.n() {
                    return Err(Error::Integrity(format!(
                        "query {:?} evidence index {} out of range for {:?} ({} sentences)",
                        q.query_id,
                        e.sentence_index,
                        e.doc_id,
                        doc.n()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.position.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn segmented_doc(&self, doc_id: &str) -> Option<&SegmentedDocument> {
        self.position.get(doc_id).map(|&i| &self.segmented[i])
    }

    pub fn has_evidence(&self) -> bool {
        self.queries.iter().any(|q| !q.evidence.is_empty())
    }

    pub fn total_sentences(&self) -> usize {
        self.segmented.iter().map(SegmentedDocument::n).sum()
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn normalize_for_match(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Index of the sentence matching `text` exactly, else after case-folding and
/// whitespace collapsing.
pub fn resolve_evidence_text(doc: &SegmentedDocument, text: &str) -> Option<usize> {
    let wanted = text.trim();
    doc.sentences
        .iter()
        .position(|s| s.text == wanted)
        .or_else(|| {
            let wanted = normalize_for_match(wanted);
            doc.sentences.iter().position(|s| normalize_for_match(&s.text) == wanted)
        })
}

/// Loads `docs.jsonl` and `queries.jsonl` from `dir`.
pub fn load_corpus(dir: &Path, segmenter: &dyn Segmenter) -> Result<Corpus> {
    let docs_path = dir.join(DOCS_FILE);
    let documents: Vec<Document> = read_jsonl(&docs_path)?;
    for (i, d) in documents.iter().enumerate() {
        if d.text.trim().is_empty() {
            return Err(Error::Parse {
                path: docs_path.clone(),
                line: i + 1,
                message: format!("document {:?} has empty text", d.doc_id),
            });
        }
    }
    let raw: Vec<RawQuery> = read_jsonl(&dir.join(QUERIES_FILE))?;
    let mut corpus = Corpus::new(documents, Vec::new(), segmenter)?;

    let mut dropped = 0usize;
    let mut queries = Vec::with_capacity(raw.len());
    for q in raw {
        let mut evidence = Vec::with_capacity(q.evidence.len());
        for e in q.evidence {
            let index = match (e.sentence_index, &e.text) {
                (Some(i), _) => Some(i),
                (None, Some(text)) => corpus
                    .segmented_doc(&e.doc_id)
                    .and_then(|doc| resolve_evidence_text(doc, text)),
                (None, None) => {
                    return Err(Error::Integrity(format!(
                        "query {:?} has evidence without sentence_index or text",
                        q.query_id
                    )))
                }
            };
            match index {
                Some(sentence_index) => evidence.push(Evidence { doc_id: e.doc_id, sentence_index }),
                None if corpus.segmented_doc(&e.doc_id).is_none() => {
                    return Err(Error::Integrity(format!(
                        "query {:?} has evidence in unknown document {:?}",
                        q.query_id, e.doc_id
                    )))
                }
                None => dropped += 1,
            }
        }
        evidence.sort();
        evidence.dedup();
        queries.push(QueryRecord {
            query_id: q.query_id,
            text: q.text,
            relevant_doc_ids: q.relevant_doc_ids.into_iter().collect(),
            evidence,
            reference_answer: q.reference_answer,
        });
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} evidence entries whose text matched no sentence");
    }
    corpus.queries = queries;
    corpus.validate_queries()?;
    Ok(corpus)
}

pub fn write_corpus(dir: &Path, documents: &[Document], queries: &[QueryRecord]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(&dir.join(DOCS_FILE), documents)?;
    write_jsonl(&dir.join(QUERIES_FILE), queries)
}

pub fn write_stitch_map(dir: &Path, map: &[StitchedDocument]) -> Result<()> {
    write_jsonl(&dir.join(STITCH_MAP_FILE), map)
}

pub fn read_stitch_map(dir: &Path) -> Result<Vec<StitchedDocument>> {
    read_jsonl(&dir.join(STITCH_MAP_FILE))
}

#[derive(Debug, Clone)]
pub struct Stitched {
    pub documents: Vec<Document>,
    pub queries: Vec<QueryRecord>,
    pub map: Vec<StitchedDocument>,
}

/// Shuffles documents with `seed`, then greedily concatenates them into groups
/// of at least `target_sentences` sentences (the last group may fall short).
/// Relevance and evidence are remapped onto the stitched documents.
pub fn stitch(
    documents: &[Document],
    queries: &[QueryRecord],
    target_sentences: usize,
    seed: u64,
    segmenter: &dyn Segmenter,
) -> Result<Stitched> {
    if target_sentences < 1 {
        return Err(Error::Parameter("target_sentences must be >= 1".into()));
    }
    let counts: Vec<usize> = documents
        .iter()
        .map(|d| segmenter.segment(&d.text).map(|s| s.len()))
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..documents.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current = Vec::new();
    let mut current_len = 0;
    for i in order {
        current.push(i);
        current_len += counts[i];
        if current_len >= target_sentences {
            groups.push(std::mem::take(&mut current));
            current_len = 0;
        }
    }
    if !current.is_empty() {
        groups.push(current);
    }

    let width = groups.len().to_string().len().max(4);
    // source doc_id -> (stitched doc_id, sentence offset)
    let mut placement: HashMap<&str, (String, usize)> = HashMap::new();
    let mut stitched_docs = Vec::with_capacity(groups.len());
    let mut map = Vec::with_capacity(groups.len());
    for (g, members) in groups.iter().enumerate() {
        let doc_id = format!("stitched-{g:0width$}");
        let mut offset = 0;
        let mut offsets = Vec::with_capacity(members.len());
        for &m in members {
            offsets.push(offset);
            placement.insert(&documents[m].doc_id, (doc_id.clone(), offset));
            offset += counts[m];
        }
        let text = members
            .iter()
            .map(|&m| documents[m].text.trim())
            .collect::<Vec<_>>()
            .join(STITCH_SEPARATOR);
        stitched_docs.push(Document { doc_id: doc_id.clone(), text, meta: None });
        map.push(StitchedDocument {
            doc_id,
            source_doc_ids: members.iter().map(|&m| documents[m].doc_id.clone()).collect(),
            sentence_offsets: offsets,
        });
    }

    let locate = |query_id: &str, doc_id: &str| {
        placement.get(doc_id).ok_or_else(|| {
            Error::Integrity(format!("query {query_id:?} references unknown document {doc_id:?}"))
        })
    };
    let mut remapped = Vec::with_capacity(queries.len());
    for q in queries {
        let mut relevant = BTreeSet::new();
        for d in &q.relevant_doc_ids {
            relevant.insert(locate(&q.query_id, d)?.0.clone());
        }
        let mut evidence = Vec::with_capacity(q.evidence.len());
        for e in &q.evidence {
            let (target, offset) = locate(&q.query_id, &e.doc_id)?;
            evidence.push(Evidence {
                doc_id: target.clone(),
                sentence_index: offset + e.sentence_index,
            });
        }
        evidence.sort();
        evidence.dedup();
        remapped.push(QueryRecord {
            query_id: q.query_id.clone(),
            text: q.text.clone(),
            relevant_doc_ids: relevant,
            evidence,
            reference_answer: q.reference_answer.clone(),
        });
    }
    Ok(Stitched { documents: stitched_docs, queries: remapped, map })
}

/// Uniform sample without replacement of `min(count, len)` queries, kept in
/// their original order.
pub fn sample_queries(queries: &[QueryRecord], count: usize, seed: u64) -> Vec<QueryRecord> {
    let amount = count.min(queries.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, queries.len(), amount).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| queries[i].clone()).collect()
}
