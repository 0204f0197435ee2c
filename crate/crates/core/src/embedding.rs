//! Sentence, chunk and query embeddings.
//!
//! Every vector leaving this module is L2-normalized, whatever the backend
//! claims, so downstream cosine similarity is a plain dot product. Results are
//! cached by `(model_id, text)` in memory and, when a cache directory is
//! configured, on disk.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::http::{self, RetryPolicy, Semaphore};

pub const API_KEY_ENV: &str = "EMBED_API_KEY";
const CACHE_MAGIC: &[u8; 4] = b"CBEV";

/// A unit-length embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalizes `values` to unit length. Rejects non-finite or all-zero input.
    pub fn normalized(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("embedding has non-finite components".into()));
        }
        let norm = values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return Err(Error::Contract("cannot normalize a zero embedding".into()));
        }
        Ok(Self(
            values
                .into_iter()
                .map(|v| (f64::from(v) / norm) as f32)
                .collect(),
        ))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Dot product accumulated in f64. Dimensions must match.
    pub fn dot(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Remote,
    DeterministicTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderSpec {
    pub backend: Backend,
    pub model_id: String,
    pub dimension: usize,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Upper bound on concurrent requests to a remote backend.
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_batch_size() -> usize {
    32
}

fn default_max_in_flight() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    60
}

impl EmbedderSpec {
    pub fn deterministic(dimension: usize) -> Self {
        Self {
            backend: Backend::DeterministicTest,
            model_id: format!("hash-bow-{dimension}"),
            dimension,
            endpoint: None,
            batch_size: default_batch_size(),
            cache_dir: None,
            max_in_flight: default_max_in_flight(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn remote(endpoint: impl Into<String>, model_id: impl Into<String>, dimension: usize) -> Self {
        Self {
            backend: Backend::Remote,
            model_id: model_id.into(),
            dimension,
            endpoint: Some(endpoint.into()),
            ..Self::deterministic(dimension)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::Config(format!(
                "embedding dimension must be >= 2, got {}",
                self.dimension
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.backend == Backend::Remote && self.endpoint.is_none() {
            return Err(Error::Config("remote embedder needs an endpoint".into()));
        }
        Ok(())
    }
}

/// A source of raw (not necessarily normalized) embeddings.
pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;
}

fn token_hash(token: &str) -> u64 {
    let digest = Sha256::digest(token.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// Coordinate and sign a token contributes under the hashing embedder.
pub fn token_slot(token: &str, dimension: usize) -> (usize, f64) {
    let h = token_hash(token);
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    ((h % dimension as u64) as usize, sign)
}

/// Lowercased alphanumeric tokens, as the hashing embedder sees them.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Hashed bag-of-words embedding; texts without tokens map to `e0`.
pub fn deterministic_embed(text: &str, dimension: usize) -> EmbeddingVector {
    let dimension = dimension.max(2);
    let mut acc = vec![0.0f64; dimension];
    for token in tokens(text) {
        let (slot, sign) = token_slot(&token, dimension);
        acc[slot] += sign;
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e0 = vec![0.0f32; dimension];
        e0[0] = 1.0;
        return EmbeddingVector(e0);
    }
    EmbeddingVector(acc.into_iter().map(|v| (v / norm) as f32).collect())
}

#[derive(Debug, Clone)]
pub struct DeterministicBackend {
    pub dimension: usize,
}

impl EmbeddingBackend for DeterministicBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts
            .iter()
            .map(|t| deterministic_embed(t, self.dimension).0)
            .collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

pub struct RemoteBackend {
    endpoint: String,
    model_id: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl RemoteBackend {
    pub fn new(endpoint: &str, model_id: &str, timeout: Duration, retry: RetryPolicy) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model_id: model_id.to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            agent: http::agent(timeout),
            retry,
        }
    }
}

impl EmbeddingBackend for RemoteBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let body = EmbedRequest {
            model: &self.model_id,
            texts,
        };
        let resp: EmbedResponse = http::post_json(
            &self.agent,
            &self.endpoint,
            self.api_key.as_deref(),
            &body,
            self.retry,
        )?;
        Ok(resp.embeddings)
    }
}

/// Content address of `(model_id, text)`.
pub fn cache_key(model_id: &str, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(text.as_bytes());
    hex::encode(hasher.finalize())
}

/// Writes one vector record: magic, dimension, model id, then LE f32 values.
pub fn write_vector_record(w: &mut impl Write, model_id: &str, v: &EmbeddingVector) -> io::Result<()> {
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&(v.dim() as u32).to_le_bytes())?;
    w.write_all(&(model_id.len() as u32).to_le_bytes())?;
    w.write_all(model_id.as_bytes())?;
    for x in v.as_slice() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Reads one record written by [`write_vector_record`]; `Ok(None)` at clean EOF.
pub fn read_vector_record(r: &mut impl Read) -> io::Result<Option<(String, EmbeddingVector)>> {
    let mut magic = [0u8; 4];
    match r.read_exact(&mut magic) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    if &magic != CACHE_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad vector record magic"));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let dim = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let name_len = u32::from_le_bytes(word) as usize;
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)?;
    let model_id = String::from_utf8(name)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    let mut values = Vec::with_capacity(dim);
    for _ in 0..dim {
        r.read_exact(&mut word)?;
        values.push(f32::from_le_bytes(word));
    }
    Ok(Some((model_id, EmbeddingVector(values))))
}

/// Disk half of the cache: one file per key, sharded by key prefix.
#[derive(Debug)]
struct DiskCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl DiskCache {
    fn path(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(format!("{key}.bin"))
    }

    fn get(&self, key: &str, model_id: &str, dim: usize) -> Option<EmbeddingVector> {
        let path = self.path(key);
        let mut file = fs::File::open(&path).ok()?;
        match read_vector_record(&mut file) {
            Ok(Some((model, v))) if model == model_id && v.dim() == dim => Some(v),
            Ok(_) => {
                log::warn!("ignoring mismatched cache entry {}", path.display());
                None
            }
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    fn put(&self, key: &str, model_id: &str, v: &EmbeddingVector) -> Result<()> {
        let path = self.path(key);
        let dir = path.parent().expect("cache path has a parent");
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = dir.join(format!("{key}.tmp"));
        let mut buf = Vec::with_capacity(16 + model_id.len() + 4 * v.dim());
        write_vector_record(&mut buf, model_id, v).map_err(|e| Error::io(&tmp, e))?;
        fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

/// Embeds texts through a backend, with caching, batching and bounded concurrency.
pub struct Embedder {
    spec: EmbedderSpec,
    backend: Box<dyn EmbeddingBackend>,
    memory: RwLock<HashMap<String, EmbeddingVector>>,
    disk: Option<DiskCache>,
    in_flight: Semaphore,
    backend_calls: AtomicUsize,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl Embedder {
    pub fn new(spec: EmbedderSpec) -> Result<Self> {
        Self::with_retry(spec, RetryPolicy::default())
    }

    pub fn with_retry(spec: EmbedderSpec, retry: RetryPolicy) -> Result<Self> {
        spec.validate()?;
        let backend: Box<dyn EmbeddingBackend> = match spec.backend {
            Backend::DeterministicTest => Box::new(DeterministicBackend {
                dimension: spec.dimension,
            }),
            Backend::Remote => Box::new(RemoteBackend::new(
                spec.endpoint.as_deref().unwrap_or_default(),
                &spec.model_id,
                Duration::from_secs(spec.timeout_secs),
                retry,
            )),
        };
        Ok(Self::with_backend(spec, backend))
    }

    pub fn with_backend(spec: EmbedderSpec, backend: Box<dyn EmbeddingBackend>) -> Self {
        let disk = spec.cache_dir.clone().map(|root| DiskCache {
            root,
            write_lock: Mutex::new(()),
        });
        Self {
            in_flight: Semaphore::new(spec.max_in_flight),
            spec,
            backend,
            memory: RwLock::new(HashMap::new()),
            disk,
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    pub fn model_id(&self) -> &str {
        &self.spec.model_id
    }

    /// Number of backend requests issued so far.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn cache_dir(&self) -> Option<&Path> {
        self.disk.as_ref().map(|d| d.root.as_path())
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    pub fn embed_batch<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<EmbeddingVector>> {
        let model = self.spec.model_id.as_str();
        let dim = self.spec.dimension;
        let keys: Vec<String> = texts.iter().map(|t| cache_key(model, t.as_ref())).collect();

        let mut found: HashMap<&str, EmbeddingVector> = HashMap::new();
        let mut missing: Vec<(&str, String)> = Vec::new();
        {
            let memory = self.memory.read().unwrap_or_else(|p| p.into_inner());
            for (key, text) in keys.iter().zip(texts) {
                if found.contains_key(key.as_str()) || missing.iter().any(|(k, _)| k == key) {
                    continue;
                }
                if let Some(v) = memory.get(key) {
                    found.insert(key, v.clone());
                } else if let Some(v) = self.disk.as_ref().and_then(|d| d.get(key, model, dim)) {
                    found.insert(key, v);
                } else {
                    missing.push((key, text.as_ref().to_string()));
                }
            }
        }

        let fresh = self.fetch(&missing)?;
        {
            let mut memory = self.memory.write().unwrap_or_else(|p| p.into_inner());
            for ((key, _), v) in missing.iter().zip(fresh) {
                if let Some(disk) = &self.disk {
                    disk.put(key, model, &v)?;
                }
                memory.insert((*key).to_string(), v.clone());
                found.insert(key, v);
            }
            for (key, v) in &found {
                memory.entry((*key).to_string()).or_insert_with(|| v.clone());
            }
        }

        Ok(keys.iter().map(|k| found[k.as_str()].clone()).collect())
    }

    /// Sends cache misses to the backend in `batch_size` groups.
    fn fetch(&self, missing: &[(&str, String)]) -> Result<Vec<EmbeddingVector>> {
        if missing.is_empty() {
            return Ok(Vec::new());
        }
        let groups: Vec<Vec<String>> = missing
            .chunks(self.spec.batch_size)
            .map(|g| g.iter().map(|(_, t)| t.clone()).collect())
            .collect();
        let results: Vec<Result<Vec<EmbeddingVector>>> = thread::scope(|s| {
            let handles: Vec<_> = groups
                .iter()
                .map(|group| s.spawn(move || self.fetch_group(group)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("embedding worker panicked"))
                .collect()
        });
        let mut out = Vec::with_capacity(missing.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }

    fn fetch_group(&self, group: &[String]) -> Result<Vec<EmbeddingVector>> {
        let raw = {
            let _permit = self.in_flight.acquire();
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            self.backend.embed(group)?
        };
        if raw.len() != group.len() {
            return Err(Error::Contract(format!(
                "backend returned {} embeddings for {} texts",
                raw.len(),
                group.len()
            )));
        }
        raw.into_iter()
            .map(|v| {
                if v.len() != self.spec.dimension {
                    return Err(Error::Contract(format!(
                        "backend returned dimension {}, expected {}",
                        v.len(),
                        self.spec.dimension
                    )));
                }
                EmbeddingVector::normalized(v)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<Vec<f32>>);

    impl EmbeddingBackend for Fixed {
        fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f32>>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn deterministic_is_pure_and_order_free() {
        assert_eq!(deterministic_embed("aa bb", 64), deterministic_embed("aa bb", 64));
        assert_eq!(deterministic_embed("aa bb", 64), deterministic_embed("bb aa", 64));
        assert_eq!(deterministic_embed("AA, bb!", 64), deterministic_embed("aa bb", 64));
    }

    #[test]
    fn deterministic_vectors_are_unit_length() {
        for text in ["one", "two words", "many many many tokens here", ""] {
            let v = deterministic_embed(text, 32);
            assert!((v.norm() - 1.0).abs() < 1e-6, "{text}: {}", v.norm());
        }
    }

    #[test]
    fn tokenless_text_maps_to_e0() {
        let v = deterministic_embed("?!  ...", 8);
        assert_eq!(v.as_slice()[0], 1.0);
        assert!(v.as_slice()[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn disjoint_collision_free_tokens_are_orthogonal() {
        let dim = 256;
        let vocab = ["apple", "banana", "cherry", "delta", "echo", "falcon"];
        let slots: Vec<usize> = vocab.iter().map(|t| token_slot(t, dim).0).collect();
        let mut sorted = slots.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), vocab.len(), "fixture vocabulary collides at d={dim}");

        let a = deterministic_embed("apple banana cherry", dim);
        let b = deterministic_embed("delta echo falcon", dim);
        assert_eq!(a.dot(&b), 0.0);
    }

    #[test]
    fn normalization_rejects_bad_input() {
        assert!(EmbeddingVector::normalized(vec![0.0, 0.0]).is_err());
        assert!(EmbeddingVector::normalized(vec![f32::NAN, 1.0]).is_err());
        let v = EmbeddingVector::normalized(vec![3.0, 4.0]).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn arity_mismatch_is_a_contract_error() {
        let spec = EmbedderSpec::deterministic(2);
        let e = Embedder::with_backend(spec, Box::new(Fixed(vec![vec![1.0, 0.0]; 3])));
        let err = e.embed_batch(&["a", "b", "c", "d"]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_a_contract_error() {
        let spec = EmbedderSpec::deterministic(3);
        let e = Embedder::with_backend(
            spec,
            Box::new(Fixed(vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0]])),
        );
        assert!(matches!(e.embed_batch(&["a", "b"]), Err(Error::Contract(_))));
    }

    #[test]
    fn memory_cache_skips_backend() {
        let e = Embedder::new(EmbedderSpec::deterministic(16)).unwrap();
        let first = e.embed_batch(&["x y", "z", "x y"]).unwrap();
        assert_eq!(e.backend_calls(), 1);
        assert_eq!(first[0], first[2]);
        let second = e.embed_batch(&["z", "x y"]).unwrap();
        assert_eq!(e.backend_calls(), 1);
        assert_eq!(second[0], first[1]);
    }

    #[test]
    fn disk_cache_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = EmbedderSpec::deterministic(24);
        spec.cache_dir = Some(dir.path().to_path_buf());
        spec.batch_size = 2;

        let texts = ["alpha beta", "gamma", "delta epsilon zeta", "eta"];
        let cold = Embedder::new(spec.clone()).unwrap();
        let a = cold.embed_batch(&texts).unwrap();
        assert_eq!(cold.backend_calls(), 2);

        let warm = Embedder::new(spec).unwrap();
        let b = warm.embed_batch(&texts).unwrap();
        assert_eq!(warm.backend_calls(), 0);
        for (x, y) in a.iter().zip(&b) {
            let xb: Vec<u32> = x.as_slice().iter().map(|f| f.to_bits()).collect();
            let yb: Vec<u32> = y.as_slice().iter().map(|f| f.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn vector_records_round_trip() {
        let v = deterministic_embed("some text", 10);
        let mut buf = Vec::new();
        write_vector_record(&mut buf, "m", &v).unwrap();
        write_vector_record(&mut buf, "m2", &v).unwrap();
        let mut r = buf.as_slice();
        assert_eq!(read_vector_record(&mut r).unwrap(), Some(("m".into(), v.clone())));
        assert_eq!(read_vector_record(&mut r).unwrap(), Some(("m2".into(), v)));
        assert_eq!(read_vector_record(&mut r).unwrap(), None);
    }

    #[test]
    fn spec_validation() {
        assert!(EmbedderSpec::deterministic(1).validate().is_err());
        let mut s = EmbedderSpec::deterministic(4);
        s.batch_size = 0;
        assert!(s.validate().is_err());
        let mut r = EmbedderSpec::remote("http://x", "m", 4);
        r.endpoint = None;
        assert!(r.validate().is_err());
    }
}
