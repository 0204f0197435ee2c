//! Subcommand bodies. The binary only parses arguments and maps errors to
//! exit codes; everything else lives here so it can be driven from tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chunkers::{chunk_document, Chunk, ChunkOptions, ChunkerConfig, ChunkerFamily};
use crate::config::RunConfig;
use crate::corpus::{self, load_corpus, sample_queries, write_corpus, write_stitch_map, Corpus, QueryRecord};
use crate::embedding::{Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, doc_metrics, evidence_metrics, select_best_config, BestConfig, EvalRecord, MetricRow};
use crate::generation::{generate_all, GenerationInput, Generator};
use crate::retrieval::{build_index, retrieve_by_vector, ChunkIndex};
use crate::segmenter::{RuleSegmenter, SegmentedDocument};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const BEST_CONFIGS_FILE: &str = "best_configs.json";
pub const ERRORS_FILE: &str = "errors.jsonl";
pub const ANSWERS_FILE: &str = "answers.jsonl";
pub const TRENDS_FILE: &str = "trends.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Doc,
    Evidence,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Doc => "doc",
            Task::Evidence => "evidence",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doc" => Ok(Task::Doc),
            "evidence" => Ok(Task::Evidence),
            _ => Err(Error::Parameter(format!("unknown task {s:?}; expected doc or evidence"))),
        }
    }
}

pub fn make_segmenter(config: &RunConfig) -> Result<RuleSegmenter> {
    match &config.abbreviations {
        Some(path) => RuleSegmenter::from_file(path),
        None => Ok(RuleSegmenter::default()),
    }
}

pub fn make_embedder(config: &RunConfig) -> Result<Embedder> {
    Embedder::new(config.embedder.clone())
}

pub fn load_dataset(config: &RunConfig, segmenter: &RuleSegmenter) -> Result<Corpus> {
    load_corpus(&config.dataset.path, segmenter)
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Sentence embeddings for every document, aligned with `corpus.segmented`.
fn embed_sentences(corpus: &Corpus, embedder: &Embedder) -> Result<Vec<Vec<EmbeddingVector>>> {
    let texts: Vec<&str> = corpus
        .segmented
        .iter()
        .flat_map(|d| d.sentences.iter().map(|s| s.text.as_str()))
        .collect();
    let mut flat = embedder.embed_batch(&texts)?.into_iter();
    Ok(corpus
        .segmented
        .iter()
        .map(|d| flat.by_ref().take(d.n()).collect())
        .collect())
}

fn chunk_corpus(
    docs: &[SegmentedDocument],
    embeddings: Option<&[Vec<EmbeddingVector>]>,
    config: &ChunkerConfig,
    options: ChunkOptions,
) -> Result<Vec<Chunk>> {
    let mut chunks = Vec::new();
    for (i, doc) in docs.iter().enumerate() {
        let embs = embeddings.map(|e| e[i].as_slice());
        chunks.extend(chunk_document(doc, embs, config, options)?);
    }
    Ok(chunks)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryFailure {
    pub query_id: String,
    pub error: String,
}

/// Query embeddings. A failed batch is retried one query at a time so that
/// a single bad query does not sink the rest.
fn embed_queries(queries: &[QueryRecord], embedder: &Embedder) -> (Vec<(QueryRecord, EmbeddingVector)>, Vec<QueryFailure>) {
    let texts: Vec<&str> = queries.iter().map(|q| q.text.as_str()).collect();
    match embedder.embed_batch(&texts) {
        Ok(vectors) => (queries.iter().cloned().zip(vectors).collect(), Vec::new()),
        Err(e) => {
            log::warn!("query batch failed ({e}); embedding queries individually");
            let mut ok = Vec::new();
            let mut failed = Vec::new();
            for q in queries {
                match embedder.embed_one(&q.text) {
                    Ok(v) => ok.push((q.clone(), v)),
                    Err(e) => failed.push(QueryFailure {
                        query_id: q.query_id.clone(),
                        error: e.to_string(),
                    }),
                }
            }
            (ok, failed)
        }
    }
}

fn check_failure_rate(failed: &[QueryFailure], total: usize, limit: f64) -> Result<()> {
    if total > 0 && failed.len() as f64 / total as f64 > limit {
        let first = &failed[0];
        return Err(Error::Backend {
            status: None,
            message: format!(
                "{} of {total} queries failed (limit {}%); first: {}: {}",
                failed.len(),
                limit * 100.0,
                first.query_id,
                first.error
            ),
        });
    }
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub dir: PathBuf,
    pub rows: Vec<MetricRow>,
    pub best: Vec<BestConfig>,
    pub n_queries: usize,
    pub excluded: usize,
    pub failed: usize,
}

pub fn bench_dir(config: &RunConfig, task: Task) -> PathBuf {
    config.out.join(&config.dataset.name).join(task.as_str())
}

/// Runs every grid configuration over the sampled queries and writes
/// `results.jsonl`, `summary.csv` and `best_configs.json`.
pub fn cmd_bench(config: &RunConfig, task: Task, jobs: usize) -> Result<BenchOutput> {
    config.validate()?;
    let grid = config.grid.expand()?;
    if grid.is_empty() {
        return Err(Error::Config("the chunker grid is empty".into()));
    }
    let segmenter = make_segmenter(config)?;
    let corpus = load_dataset(config, &segmenter)?;
    if task == Task::Evidence && !corpus.has_evidence() {
        return Err(Error::Config(format!(
            "dataset {} has no evidence annotations, so the evidence task cannot run",
            config.dataset.name
        )));
    }

    let sampled = sample_queries(&corpus.queries, config.query_sample, config.seed);
    let (mut usable, skipped): (Vec<QueryRecord>, Vec<QueryRecord>) = sampled.into_iter().partition(|q| match task {
        Task::Doc => !q.relevant_doc_ids.is_empty(),
        Task::Evidence => !q.evidence.is_empty(),
    });
    if !skipped.is_empty() {
        log::warn!(
            "excluded {} queries with no {} ground truth",
            skipped.len(),
            if task == Task::Doc { "relevant documents" } else { "evidence" }
        );
    }
    if usable.is_empty() {
        return Err(Error::Config(format!("no queries usable for the {task} task")));
    }
    usable.sort_by(|a, b| a.query_id.cmp(&b.query_id));

    let embedder = make_embedder(config)?;
    let pool = thread_pool(jobs)?;
    let (queries, failures) = embed_queries(&usable, &embedder);
    check_failure_rate(&failures, usable.len(), config.max_query_error_rate)?;

    let sentence_embeddings = if grid.iter().any(ChunkerConfig::is_semantic) {
        Some(embed_sentences(&corpus, &embedder)?)
    } else {
        None
    };
    let options = ChunkOptions { std_mode: config.std_mode };
    let evidence_sets: Vec<BTreeSet<corpus::Evidence>> =
        queries.iter().map(|(q, _)| q.evidence.iter().cloned().collect()).collect();

    let per_config: Vec<Vec<EvalRecord>> = pool.install(|| {
        grid.par_iter()
            .map(|chunker| -> Result<Vec<EvalRecord>> {
                let chunks = chunk_corpus(&corpus.segmented, sentence_embeddings.as_deref(), chunker, options)?;
                let index = build_index(chunks, &embedder)?;
                let mut records = Vec::with_capacity(queries.len() * config.k_list.len());
                for ((query, vector), evidence) in queries.iter().zip(&evidence_sets) {
                    let hits = retrieve_by_vector(&index, vector, config.max_k())?;
                    for &k in &config.k_list {
                        let top: Vec<&Chunk> = hits.iter().take(k).map(|h| &index.entries[h.entry].chunk).collect();
                        let scores = match task {
                            Task::Doc => doc_metrics(&top, &query.relevant_doc_ids)?,
                            Task::Evidence => evidence_metrics(&top, evidence)?,
                        };
                        records.push(EvalRecord {
                            chunker_config: *chunker,
                            query_id: query.query_id.clone(),
                            k,
                            retrieved_chunk_ids: top.iter().map(|c| c.chunk_id.clone()).collect(),
                            recall: scores.recall,
                            precision: scores.precision,
                            f1: scores.f1,
                        });
                    }
                }
                Ok(records)
            })
            .collect::<Result<_>>()
    })?;
    let records: Vec<EvalRecord> = per_config.into_iter().flatten().collect();
    let rows = aggregate(&records);
    let best = select_best_config(&rows, &config.k_list)?;

    let dir = bench_dir(config, task);
    create_dir(&dir)?;
    corpus::write_jsonl(&dir.join(RESULTS_FILE), &records)?;
    write_summary(&dir.join(SUMMARY_FILE), &config.dataset.name, &rows)?;
    let best_json = serde_json::to_string_pretty(&best).map_err(|e| Error::Contract(e.to_string()))?;
    write_text(&dir.join(BEST_CONFIGS_FILE), &(best_json + "\n"))?;
    let errors_path = dir.join(ERRORS_FILE);
    if failures.is_empty() {
        if errors_path.exists() {
            fs::remove_file(&errors_path).map_err(|e| Error::io(&errors_path, e))?;
        }
    } else {
        corpus::write_jsonl(&errors_path, &failures)?;
    }
    log::info!(
        "{task}: {} configs x {} queries x {} k values -> {}",
        grid.len(),
        queries.len(),
        config.k_list.len(),
        dir.display()
    );
    Ok(BenchOutput {
        dir,
        rows,
        best,
        n_queries: queries.len(),
        excluded: skipped.len(),
        failed: failures.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub chunker: String,
    pub config: String,
    pub k: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub n_queries: usize,
}

fn write_summary(path: &Path, dataset: &str, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["dataset", "chunker", "config", "k", "recall", "precision", "f1", "n_queries"])
        .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            dataset.to_string(),
            r.chunker_config.family().to_string(),
            r.chunker_config.to_string(),
            r.k.to_string(),
            fmt_f64(r.recall),
            fmt_f64(r.precision),
            fmt_f64(r.f1),
            r.n_queries.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

#[derive(Debug, Clone)]
pub struct StitchOutput {
    pub dir: PathBuf,
    pub source_docs: usize,
    pub stitched_docs: usize,
    pub sentences: usize,
}

/// Writes the stitched corpus (`docs.jsonl`, `queries.jsonl`, `stitch_map.jsonl`).
pub fn cmd_stitch(config: &RunConfig, out: Option<&Path>) -> Result<StitchOutput> {
    config.validate()?;
    let segmenter = make_segmenter(config)?;
    let corpus = load_dataset(config, &segmenter)?;
    let stitched = corpus::stitch(
        &corpus.documents,
        &corpus.queries,
        config.stitch.target_sentences,
        config.seed,
        &segmenter,
    )?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.stitch.out.clone())
        .unwrap_or_else(|| config.out.join(format!("{}-stitched", config.dataset.name)));
    create_dir(&dir)?;
    write_corpus(&dir, &stitched.documents, &stitched.queries)?;
    write_stitch_map(&dir, &stitched.map)?;
    Ok(StitchOutput {
        dir,
        source_docs: corpus.documents.len(),
        stitched_docs: stitched.documents.len(),
        sentences: corpus.total_sentences(),
    })
}

/// Chunks every document with one configuration and writes `chunks.jsonl`,
/// plus `vectors.bin` when `with_index` is set.
pub fn cmd_chunk(config: &RunConfig, chunker: &ChunkerConfig, out: Option<&Path>, with_index: bool) -> Result<(PathBuf, usize)> {
    config.validate()?;
    chunker.validate()?;
    let segmenter = make_segmenter(config)?;
    let corpus = load_dataset(config, &segmenter)?;
    let embedder = make_embedder(config)?;
    let embeddings = if chunker.is_semantic() {
        Some(embed_sentences(&corpus, &embedder)?)
    } else {
        None
    };
    let options = ChunkOptions { std_mode: config.std_mode };
    let chunks = chunk_corpus(&corpus.segmented, embeddings.as_deref(), chunker, options)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.out.join(&config.dataset.name).join("chunks"));
    create_dir(&dir)?;
    let count = chunks.len();
    if with_index {
        build_index(chunks, &embedder)?.save(&dir)?;
    } else {
        corpus::write_jsonl(&dir.join(crate::retrieval::CHUNKS_FILE), &chunks)?;
    }
    Ok((dir, count))
}

#[derive(Debug, Clone)]
pub struct GenOutput {
    pub path: PathBuf,
    pub answered: usize,
    pub failed: usize,
    pub mean_qa_similarity: f64,
}

/// Answers the sampled queries from the top retrieved chunks of one
/// chunker configuration and writes `answers.jsonl`.
pub fn cmd_gen(config: &RunConfig, chunker: &ChunkerConfig, out: Option<&Path>) -> Result<GenOutput> {
    config.validate()?;
    chunker.validate()?;
    let gen_config = config
        .generation
        .clone()
        .ok_or_else(|| Error::Config("no [generation] section in the configuration".into()))?;
    let generator = Generator::new(gen_config)?;
    let segmenter = make_segmenter(config)?;
    let corpus = load_dataset(config, &segmenter)?;
    let embedder = make_embedder(config)?;
    let embeddings = if chunker.is_semantic() {
        Some(embed_sentences(&corpus, &embedder)?)
    } else {
        None
    };
    let options = ChunkOptions { std_mode: config.std_mode };
    let index: ChunkIndex = build_index(
        chunk_corpus(&corpus.segmented, embeddings.as_deref(), chunker, options)?,
        &embedder,
    )?;

    let mut queries = sample_queries(&corpus.queries, config.query_sample, config.seed);
    queries.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    let (embedded, mut failures) = embed_queries(&queries, &embedder);
    let top_k = generator.config().top_k_context;
    let mut inputs = Vec::with_capacity(embedded.len());
    for (q, v) in &embedded {
        let hits = retrieve_by_vector(&index, v, top_k)?;
        inputs.push(GenerationInput {
            query_id: q.query_id.clone(),
            query: q.text.clone(),
            chunks: hits.iter().map(|h| index.entries[h.entry].chunk.text.clone()).collect(),
        });
    }
    let mut answers = Vec::new();
    for (query_id, outcome) in generate_all(&generator, &embedder, &inputs) {
        match outcome {
            Ok(a) => answers.push(a),
            Err(e) => failures.push(QueryFailure { query_id, error: e.to_string() }),
        }
    }
    failures.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    check_failure_rate(&failures, queries.len(), config.max_query_error_rate)?;

    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.out.join(&config.dataset.name).join("gen"));
    create_dir(&dir)?;
    let path = dir.join(ANSWERS_FILE);
    corpus::write_jsonl(&path, &answers)?;
    if !failures.is_empty() {
        corpus::write_jsonl(&dir.join(ERRORS_FILE), &failures)?;
    }
    let mean = if answers.is_empty() {
        0.0
    } else {
        answers.iter().map(|a| a.qa_similarity).sum::<f64>() / answers.len() as f64
    };
    Ok(GenOutput {
        path,
        answered: answers.len(),
        failed: failures.len(),
        mean_qa_similarity: mean,
    })
}

fn find_summaries(path: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_file() {
        found.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for entry in entries {
        if entry.is_dir() {
            find_summaries(&entry, found)?;
        } else if entry.file_name().is_some_and(|n| n == SUMMARY_FILE) {
            found.push(entry);
        }
    }
    Ok(())
}

/// Task label for a summary file, taken from its parent directory.
fn task_of(path: &Path) -> String {
    path.parent()
        .and_then(Path::file_name)
        .and_then(|n| n.to_str())
        .filter(|n| n.parse::<Task>().is_ok())
        .unwrap_or("unknown")
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendRow {
    pub task: String,
    pub chunker: String,
    pub hyperparameter: String,
    pub value: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub n: usize,
    pub degenerate: bool,
}

fn min_max(values: &[f64]) -> (Vec<f64>, bool) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > 0.0 {
        (values.iter().map(|v| (v - lo) / (hi - lo)).collect(), false)
    } else {
        (vec![0.5; values.len()], true)
    }
}

/// Builds hyperparameter trend rows from summary rows. Scores are min-max
/// normalized within each (task, dataset, chunker) group, per metric, then
/// averaged over every row sharing a hyperparameter value.
pub fn sweep_trends(rows: &[(String, SummaryRow)]) -> Result<Vec<TrendRow>> {
    type GroupKey = (String, String, ChunkerFamily);
    let mut groups: BTreeMap<GroupKey, Vec<(ChunkerConfig, &SummaryRow)>> = BTreeMap::new();
    for (task, row) in rows {
        let config: ChunkerConfig = row.config.parse()?;
        groups
            .entry((task.clone(), row.dataset.clone(), config.family()))
            .or_default()
            .push((config, row));
    }

    #[derive(Default)]
    struct Acc {
        sums: [f64; 3],
        n: usize,
        degenerate: bool,
    }
    // (task, family, hyperparameter position, name, value bits) -> accumulator
    let mut acc: BTreeMap<(String, ChunkerFamily, usize, String, u64), Acc> = BTreeMap::new();
    for ((task, _, family), members) in &groups {
        let metric = |f: fn(&SummaryRow) -> f64| min_max(&members.iter().map(|(_, r)| f(r)).collect::<Vec<_>>());
        let normalized = [metric(|r| r.recall), metric(|r| r.precision), metric(|r| r.f1)];
        let degenerate = normalized.iter().any(|(_, d)| *d);
        for (i, (config, _)) in members.iter().enumerate() {
            for (pos, (name, value)) in config.hyperparameters().into_iter().enumerate() {
                // Order-preserving key for non-negative floats.
                let entry = acc.entry((task.clone(), *family, pos, name, value.to_bits())).or_default();
                for (m, (vals, _)) in normalized.iter().enumerate() {
                    entry.sums[m] += vals[i];
                }
                entry.n += 1;
                entry.degenerate |= degenerate;
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|((task, family, _, name, bits), a)| TrendRow {
            task,
            chunker: family.to_string(),
            hyperparameter: name,
            value: f64::from_bits(bits),
            recall: a.sums[0] / a.n as f64,
            precision: a.sums[1] / a.n as f64,
            f1: a.sums[2] / a.n as f64,
            n: a.n,
            degenerate: a.degenerate,
        })
        .collect())
}

/// Reads every `summary.csv` under `inputs` and writes `trends.csv` to `out`.
pub fn cmd_sweep_report(inputs: &[PathBuf], out: &Path) -> Result<(PathBuf, usize)> {
    let mut files = Vec::new();
    for input in inputs {
        if !input.exists() {
            return Err(Error::NotFound(format!("results path {}", input.display())));
        }
        find_summaries(input, &mut files)?;
    }
    if files.is_empty() {
        return Err(Error::NotFound(format!("no {SUMMARY_FILE} found under the given paths")));
    }
    let mut rows = Vec::new();
    for file in &files {
        let task = task_of(file);
        rows.extend(read_summary(file)?.into_iter().map(|r| (task.clone(), r)));
    }
    let trends = sweep_trends(&rows)?;
    create_dir(out)?;
    let path = out.join(TRENDS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(["task", "chunker", "hyperparameter", "value", "recall", "precision", "f1", "n", "degenerate"])
        .map_err(|e| csv_error(&path, e))?;
    for t in &trends {
        w.write_record([
            t.task.clone(),
            t.chunker.clone(),
            t.hyperparameter.clone(),
            fmt_f64(t.value),
            fmt_f64(t.recall),
            fmt_f64(t.precision),
            fmt_f64(t.f1),
            t.n.to_string(),
            t.degenerate.to_string(),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok((path, trends.len()))
}

/// Side-by-side chunk dump of one document under several configurations.
pub fn cmd_inspect(config: &RunConfig, doc_id: &str, chunkers: &[ChunkerConfig]) -> Result<String> {
    if chunkers.is_empty() {
        return Err(Error::Parameter("inspect needs at least one chunker configuration".into()));
    }
    for c in chunkers {
        c.validate()?;
    }
    let segmenter = make_segmenter(config)?;
    let corpus = load_dataset(config, &segmenter)?;
    let doc = corpus
        .segmented_doc(doc_id)
        .ok_or_else(|| Error::NotFound(format!("document {doc_id:?}")))?;
    let embeddings = if chunkers.iter().any(ChunkerConfig::is_semantic) {
        let embedder = make_embedder(config)?;
        Some(embedder.embed_batch(&doc.sentence_texts())?)
    } else {
        None
    };
    let options = ChunkOptions { std_mode: config.std_mode };
    let mut out = String::new();
    let _ = writeln!(out, "document {doc_id} ({} sentences)", doc.n());
    for chunker in chunkers {
        let chunks = chunk_document(doc, embeddings.as_deref(), chunker, options)?;
        let _ = writeln!(out, "\n=== {chunker} ({} chunks) ===", chunks.len());
        for chunk in &chunks {
            let _ = writeln!(out, "[{}] sentences {:?}", chunk.chunk_id, chunk.sentence_indices);
            for &i in &chunk.sentence_indices {
                let _ = writeln!(out, "    {i:>3}  {}", doc.sentences[i].text);
            }
        }
    }
    Ok(out)
}
