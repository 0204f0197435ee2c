use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use chunkbench::chunkers::ChunkerConfig;
use chunkbench::commands::{self, Task};
use chunkbench::config::RunConfig;
use chunkbench::embedding::{Backend, EmbedderSpec};
use chunkbench::{Error, Result};

#[derive(Parser)]
#[command(name = "chunkbench", version, about = "Chunking strategies for retrieval, benchmarked")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[arg(long, global = true, value_enum)]
    embedder: Option<EmbedderChoice>,
    /// Output root directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset directory holding docs.jsonl and queries.jsonl.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Dataset label used in output paths and summaries.
    #[arg(long, global = true)]
    dataset_name: Option<String>,
    /// Abbreviation list for the sentence segmenter, one per line.
    #[arg(long, global = true)]
    abbreviations: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderChoice {
    Remote,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Doc,
    Evidence,
}

#[derive(Subcommand)]
enum Command {
    /// Concatenate short documents into long ones and remap ground truth.
    Stitch {
        #[arg(long)]
        target: Option<usize>,
        /// Directory for the stitched corpus.
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Chunk every document with one configuration.
    Chunk {
        #[arg(long)]
        chunker: ChunkerConfig,
        /// Also embed the chunks and write vectors.bin.
        #[arg(long)]
        index: bool,
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Sweep the chunker grid and score retrieval.
    Bench {
        #[arg(long, value_enum)]
        task: TaskArg,
    },
    /// Generate answers from retrieved chunks and score them.
    Gen {
        #[arg(long)]
        chunker: ChunkerConfig,
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Normalized hyperparameter trends from bench summaries.
    SweepReport {
        /// Summary files or directories to search; defaults to the output root.
        paths: Vec<PathBuf>,
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Print one document's chunks under each configuration.
    Inspect {
        doc_id: String,
        #[arg(long = "chunker", required = true)]
        chunkers: Vec<ChunkerConfig>,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(path) = &cli.dataset {
        config.dataset.path = path.clone();
    }
    if let Some(name) = &cli.dataset_name {
        config.dataset.name = name.clone();
    }
    if let Some(path) = &cli.abbreviations {
        config.abbreviations = Some(path.clone());
    }
    match cli.embedder {
        Some(EmbedderChoice::Test) => {
            let cache_dir = config.embedder.cache_dir.take();
            config.embedder = EmbedderSpec {
                cache_dir,
                ..EmbedderSpec::deterministic(config.embedder.dimension)
            };
        }
        Some(EmbedderChoice::Remote) if config.embedder.backend != Backend::Remote => {
            return Err(Error::Config(
                "--embedder remote needs an [embedder] section with backend = \"remote\" and an endpoint".into(),
            ));
        }
        _ => {}
    }
    if let Command::Stitch { target: Some(t), .. } = cli.command {
        config.stitch.target_sentences = t;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let config = resolve_config(&cli)?;
    match cli.command {
        Command::Stitch { dest, .. } => {
            let s = commands::cmd_stitch(&config, dest.as_deref())?;
            println!(
                "stitched {} documents into {} ({} sentences) -> {}",
                s.source_docs,
                s.stitched_docs,
                s.sentences,
                s.dir.display()
            );
        }
        Command::Chunk { chunker, index, dest } => {
            let (dir, n) = commands::cmd_chunk(&config, &chunker, dest.as_deref(), index)?;
            println!("{n} chunks -> {}", dir.display());
        }
        Command::Bench { task } => {
            let task = match task {
                TaskArg::Doc => Task::Doc,
                TaskArg::Evidence => Task::Evidence,
            };
            let b = commands::cmd_bench(&config, task, cli.jobs)?;
            println!(
                "{task}: {} queries ({} excluded, {} failed), {} summary rows -> {}",
                b.n_queries,
                b.excluded,
                b.failed,
                b.rows.len(),
                b.dir.display()
            );
            for best in &b.best {
                println!("  best {:<15} {}  mean F1 {:.4}", best.family.as_str(), best.chunker_config, best.mean_f1);
            }
        }
        Command::Gen { chunker, dest } => {
            let g = commands::cmd_gen(&config, &chunker, dest.as_deref())?;
            println!(
                "{} answers ({} failed), mean QA similarity {:.4} -> {}",
                g.answered,
                g.failed,
                g.mean_qa_similarity,
                g.path.display()
            );
        }
        Command::SweepReport { paths, dest } => {
            let paths = if paths.is_empty() { vec![config.out.clone()] } else { paths };
            let dest = dest.unwrap_or_else(|| config.out.clone());
            let (path, n) = commands::cmd_sweep_report(&paths, &dest)?;
            println!("{n} trend rows -> {}", path.display());
        }
        Command::Inspect { doc_id, chunkers } => {
            print!("{}", commands::cmd_inspect(&config, &doc_id, &chunkers)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
