//! Exact top-k chunk retrieval by cosine similarity.

use std::collections::HashSet;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::chunkers::Chunk;
use crate::corpus::write_jsonl;
use crate::embedding::{read_vector_record, write_vector_record, Embedder, EmbeddingVector};
use crate::error::{Error, Result};

pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const VECTORS_FILE: &str = "vectors.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk: Chunk,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkIndex {
    pub entries: Vec<IndexEntry>,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    /// Position of the entry in the index.
    pub entry: usize,
    pub chunk_id: String,
    pub score: f64,
}

impl ChunkIndex {
    pub fn from_parts(chunks: Vec<Chunk>, vectors: Vec<EmbeddingVector>, model_id: &str) -> Result<Self> {
        if chunks.len() != vectors.len() {
            return Err(Error::Contract(format!(
                "{} chunks but {} vectors",
                chunks.len(),
                vectors.len()
            )));
        }
        let mut ids = HashSet::with_capacity(chunks.len());
        for c in &chunks {
            if !ids.insert(c.chunk_id.as_str()) {
                return Err(Error::Contract(format!("duplicate chunk_id {:?}", c.chunk_id)));
            }
        }
        if let Some(first) = vectors.first() {
            if let Some(bad) = vectors.iter().find(|v| v.dim() != first.dim()) {
                return Err(Error::Contract(format!(
                    "mixed vector dimensions in index: {} and {}",
                    first.dim(),
                    bad.dim()
                )));
            }
        }
        if let Some(bad) = vectors.iter().find(|v| (v.norm() - 1.0).abs() > 1e-5) {
            return Err(Error::Contract(format!("index vector has norm {}", bad.norm())));
        }
        Ok(Self {
            entries: chunks
                .into_iter()
                .zip(vectors)
                .map(|(chunk, vector)| IndexEntry { chunk, vector })
                .collect(),
            model_id: model_id.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes `chunks.jsonl` and `vectors.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&dir.join(CHUNKS_FILE), self.entries.iter().map(|e| &e.chunk))?;
        let path = dir.join(VECTORS_FILE);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.entries {
            write_vector_record(&mut w, &self.model_id, &e.vector).map_err(|err| Error::io(&path, err))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let chunks_path = dir.join(CHUNKS_FILE);
        let text = fs::read_to_string(&chunks_path).map_err(|e| Error::io(&chunks_path, e))?;
        let mut chunks = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            chunks.push(serde_json::from_str::<Chunk>(line).map_err(|e| Error::Parse {
                path: chunks_path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        let path = dir.join(VECTORS_FILE);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut r = BufReader::new(file);
        let mut vectors = Vec::new();
        let mut model_id = String::new();
        while let Some((model, v)) = read_vector_record(&mut r).map_err(|e| Error::io(&path, e))? {
            if vectors.is_empty() {
                model_id = model;
            } else if model != model_id {
                return Err(Error::Contract(format!("vector file mixes models {model_id} and {model}")));
            }
            vectors.push(v);
        }
        Self::from_parts(chunks, vectors, &model_id)
    }
}

/// Embeds each chunk's assembled text and records provenance.
pub fn build_index(chunks: Vec<Chunk>, embedder: &Embedder) -> Result<ChunkIndex> {
    if chunks.is_empty() {
        return Err(Error::Parameter("cannot build an index from zero chunks".into()));
    }
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let vectors = embedder.embed_batch(&texts)?;
    ChunkIndex::from_parts(chunks, vectors, embedder.model_id())
}

/// Exact scan; descending score, ties by ascending chunk id.
pub fn retrieve_by_vector(index: &ChunkIndex, query: &EmbeddingVector, k: usize) -> Result<Vec<Hit>> {
    if index.is_empty() {
        return Err(Error::Parameter("retrieval from an empty index".into()));
    }
    if k < 1 {
        return Err(Error::Parameter("k must be >= 1".into()));
    }
    if let Some(first) = index.entries.first() {
        if first.vector.dim() != query.dim() {
            return Err(Error::Contract(format!(
                "query dimension {} does not match index dimension {}",
                query.dim(),
                first.vector.dim()
            )));
        }
    }
    let mut hits: Vec<Hit> = index
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| Hit {
            entry: i,
            chunk_id: e.chunk.chunk_id.clone(),
            score: e.vector.dot(query),
        })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
    hits.truncate(k);
    Ok(hits)
}

pub fn retrieve(index: &ChunkIndex, query_text: &str, k: usize, embedder: &Embedder) -> Result<Vec<Hit>> {
    if index.model_id != embedder.model_id() {
        return Err(Error::Contract(format!(
            "index built with {} but query embedder is {}",
            index.model_id,
            embedder.model_id()
        )));
    }
    let query = embedder.embed_one(query_text)?;
    retrieve_by_vector(index, &query, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{deterministic_embed, EmbedderSpec, EmbeddingBackend};

    fn chunk(id: &str, text: &str) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            doc_id: "d".into(),
            sentence_indices: vec![0],
            text: text.into(),
        }
    }

    fn sample_chunks() -> Vec<Chunk> {
        ["red apples grow", "blue ocean waves", "green forest trees", "apples and oranges", "ocean tides", "tall trees", "quiet night"]
            .iter()
            .enumerate()
            .map(|(i, t)| chunk(&format!("d#{i:04}"), t))
            .collect()
    }

    #[test]
    fn index_preserves_order() {
        let e = Embedder::new(EmbedderSpec::deterministic(64)).unwrap();
        let idx = build_index(sample_chunks(), &e).unwrap();
        assert_eq!(idx.len(), 7);
        for (i, entry) in idx.entries.iter().enumerate() {
            assert_eq!(entry.chunk.chunk_id, format!("d#{i:04}"));
        }
        assert!(build_index(Vec::new(), &e).is_err());
    }

    #[test]
    fn warm_rebuild_makes_no_backend_calls() {
        let e = Embedder::new(EmbedderSpec::deterministic(64)).unwrap();
        build_index(sample_chunks(), &e).unwrap();
        let calls = e.backend_calls();
        build_index(sample_chunks(), &e).unwrap();
        assert_eq!(e.backend_calls(), calls);
    }

    struct Mixed;

    impl EmbeddingBackend for Mixed {
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
            Ok(texts.iter().enumerate().map(|(i, _)| vec![1.0; 2 + i % 2]).collect())
        }
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        let e = Embedder::with_backend(EmbedderSpec::deterministic(2), Box::new(Mixed));
        assert!(matches!(build_index(sample_chunks(), &e), Err(Error::Contract(_))));
    }

    #[test]
    fn self_query_ranks_first() {
        let e = Embedder::new(EmbedderSpec::deterministic(64)).unwrap();
        let idx = build_index(sample_chunks(), &e).unwrap();
        let hits = retrieve(&idx, "green forest trees", 3, &e).unwrap();
        assert_eq!(hits[0].chunk_id, "d#0002");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn k_is_clamped_and_ties_use_chunk_id() {
        let e = Embedder::new(EmbedderSpec::deterministic(32)).unwrap();
        let chunks = vec![chunk("b", "same words"), chunk("a", "same words"), chunk("c", "other"), chunk("d", "thing")];
        let idx = build_index(chunks, &e).unwrap();
        let hits = retrieve(&idx, "same words", 10, &e).unwrap();
        assert_eq!(hits.len(), 4);
        assert_eq!(hits[0].chunk_id, "a");
        assert_eq!(hits[1].chunk_id, "b");
        assert!(retrieve(&idx, "x", 0, &e).is_err());
    }

    #[test]
    fn empty_index_is_an_error() {
        let idx = ChunkIndex { entries: Vec::new(), model_id: "m".into() };
        assert!(retrieve_by_vector(&idx, &deterministic_embed("x", 8), 1).is_err());
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = Embedder::new(EmbedderSpec::deterministic(16)).unwrap();
        let idx = build_index(sample_chunks(), &e).unwrap();
        idx.save(dir.path()).unwrap();
        assert_eq!(ChunkIndex::load(dir.path()).unwrap(), idx);
    }

    #[test]
    fn prefix_consistent_across_k() {
        let e = Embedder::new(EmbedderSpec::deterministic(8)).unwrap();
        let idx = build_index(sample_chunks(), &e).unwrap();
        let top5 = retrieve(&idx, "apples ocean trees", 5, &e).unwrap();
        let top3 = retrieve(&idx, "apples ocean trees", 3, &e).unwrap();
        assert_eq!(&top5[..3], &top3[..]);
    }
}
