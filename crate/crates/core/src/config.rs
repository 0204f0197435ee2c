//! Run configuration, loaded from TOML, with the full default sweep grids.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chunkers::{ChunkerConfig, DEFAULT_STOP_DISTANCE};
use crate::distance::{StdMode, ThresholdKind, ThresholdPolicy};
use crate::embedding::EmbedderSpec;
use crate::error::{Error, Result};
use crate::generation::GenerationConfig;

pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: "mini".into(),
            path: PathBuf::from("data/mini"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedSizeGrid {
    pub n_chunks: Vec<usize>,
    pub overlap: Vec<usize>,
}

impl Default for FixedSizeGrid {
    fn default() -> Self {
        Self {
            n_chunks: (2..=10).collect(),
            overlap: vec![0, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreakpointGrid {
    pub percentile: Vec<f64>,
    pub std_dev: Vec<f64>,
    pub interquartile: Vec<f64>,
    pub gradient_percentile: Vec<f64>,
    pub absolute_distance: Vec<f64>,
    pub absolute_gradient: Vec<f64>,
}

impl Default for BreakpointGrid {
    fn default() -> Self {
        Self {
            percentile: vec![10.0, 30.0, 50.0, 70.0, 90.0],
            std_dev: vec![1.0, 1.5, 2.0, 2.5, 3.0],
            interquartile: vec![0.5, 0.75, 1.0, 1.25, 1.5],
            gradient_percentile: vec![10.0, 30.0, 50.0, 70.0, 90.0],
            absolute_distance: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            absolute_gradient: vec![0.01, 0.05, 0.1, 0.15, 0.2],
        }
    }
}

impl BreakpointGrid {
    fn amounts(&self, kind: ThresholdKind) -> &[f64] {
        match kind {
            ThresholdKind::Percentile => &self.percentile,
            ThresholdKind::StdDev => &self.std_dev,
            ThresholdKind::Interquartile => &self.interquartile,
            ThresholdKind::GradientPercentile => &self.gradient_percentile,
            ThresholdKind::AbsoluteDistance => &self.absolute_distance,
            ThresholdKind::AbsoluteGradient => &self.absolute_gradient,
        }
    }
}

const LAMBDAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleLinkageGrid {
    pub n_clusters: Vec<usize>,
    pub lambda: Vec<f64>,
    pub stop_distance: f64,
}

impl Default for SingleLinkageGrid {
    fn default() -> Self {
        Self {
            n_clusters: (2..=10).collect(),
            lambda: LAMBDAS.to_vec(),
            stop_distance: DEFAULT_STOP_DISTANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanGrid {
    pub eps: Vec<f64>,
    pub min_samples: Vec<usize>,
    pub lambda: Vec<f64>,
}

impl Default for DbscanGrid {
    fn default() -> Self {
        Self {
            eps: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            min_samples: (1..=5).collect(),
            lambda: LAMBDAS.to_vec(),
        }
    }
}

/// Cartesian sweep per chunker family. An empty list disables that axis
/// and therefore the family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub fixed_size: FixedSizeGrid,
    pub breakpoint: BreakpointGrid,
    pub single_linkage: SingleLinkageGrid,
    pub dbscan: DbscanGrid,
}

impl Grid {
    /// Every configuration in the grid, validated, in family order.
    pub fn expand(&self) -> Result<Vec<ChunkerConfig>> {
        let mut out = Vec::new();
        for &n_chunks in &self.fixed_size.n_chunks {
            for &overlap in &self.fixed_size.overlap {
                out.push(ChunkerConfig::FixedSize { n_chunks, overlap });
            }
        }
        for kind in ThresholdKind::ALL {
            for &amount in self.breakpoint.amounts(kind) {
                out.push(ChunkerConfig::Breakpoint {
                    policy: ThresholdPolicy::new(kind, amount)
                        .map_err(|e| Error::Config(e.to_string()))?,
                });
            }
        }
        for &lambda in &self.single_linkage.lambda {
            for &n_clusters in &self.single_linkage.n_clusters {
                out.push(ChunkerConfig::SingleLinkage {
                    n_clusters,
                    lambda,
                    stop_distance: self.single_linkage.stop_distance,
                });
            }
        }
        for &eps in &self.dbscan.eps {
            for &min_samples in &self.dbscan.min_samples {
                for &lambda in &self.dbscan.lambda {
                    out.push(ChunkerConfig::Dbscan { eps, min_samples, lambda });
                }
            }
        }
        for c in &out {
            c.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let mut names: Vec<String> = out.iter().map(ToString::to_string).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("grid repeats {}", w[0])));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StitchConfig {
    pub target_sentences: usize,
    /// Directory the stitched corpus is written to.
    pub out: Option<PathBuf>,
}

impl Default for StitchConfig {
    fn default() -> Self {
        Self {
            target_sentences: 100,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub k_list: Vec<usize>,
    pub query_sample: usize,
    pub std_mode: StdMode,
    pub abbreviations: Option<PathBuf>,
    /// Fraction of queries allowed to fail before a bench run is aborted.
    pub max_query_error_rate: f64,
    pub dataset: DatasetConfig,
    pub embedder: EmbedderSpec,
    pub grid: Grid,
    pub stitch: StitchConfig,
    pub generation: Option<GenerationConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out: PathBuf::from("runs"),
            k_list: vec![1, 3, 5, 10],
            query_sample: 100,
            std_mode: StdMode::default(),
            abbreviations: None,
            max_query_error_rate: 0.1,
            dataset: DatasetConfig::default(),
            embedder: EmbedderSpec::deterministic(DEFAULT_DIMENSION),
            grid: Grid::default(),
            stitch: StitchConfig::default(),
            generation: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.path);
        fix(&mut self.out);
        if let Some(p) = self.abbreviations.as_mut() {
            fix(p);
        }
        if let Some(p) = self.embedder.cache_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.stitch.out.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_list.is_empty() {
            return Err(Error::Config("k_list must not be empty".into()));
        }
        if self.k_list[0] < 1 || self.k_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "k_list must be strictly ascending and >= 1, got {:?}",
                self.k_list
            )));
        }
        if self.query_sample < 1 {
            return Err(Error::Config("query_sample must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_query_error_rate) {
            return Err(Error::Config("max_query_error_rate must be in [0, 1]".into()));
        }
        if self.stitch.target_sentences < 1 {
            return Err(Error::Config("stitch.target_sentences must be >= 1".into()));
        }
        self.embedder.validate()?;
        if let Some(g) = &self.generation {
            g.validate()?;
        }
        self.grid.expand().map(|_| ())
    }

    pub fn max_k(&self) -> usize {
        self.k_list.last().copied().unwrap_or(1)
    }
}
