//! `rocoforge` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rocoforge::caption_forge::Policy;
use rocoforge::eval::PositiveRule;
use rocoforge::image_forge::MixMode;
use rocoforge::pipeline::{exit_code, Pipeline, RunConfig, Stage};
use rocoforge::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "rocoforge", version, about = "Stress-test generation and retrieval robustness evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read the annotation file and write the internal corpus.
    Ingest,
    /// Score source words and compute the per-caption consensus.
    Ei,
    /// Generate fooling captions for each policy and seed.
    GenCaptions,
    /// Generate fooling images for each mode, lambda and seed.
    GenImages,
    /// Pre-compute embeddings for every original and generated item.
    Embed,
    /// Evaluate R@1, drop rate and FR@1.
    Eval,
    /// Render the evaluation report as markdown and text.
    Report,
    /// Run every stage in order.
    Run,
    /// Write a small synthetic Karpathy-style dataset with images.
    Fixture {
        /// Output directory.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        images: usize,
        #[arg(long = "fixture-seed", default_value_t = 0)]
        fixture_seed: u64,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Annotation JSON or ingested corpus JSONL.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    split: Option<String>,
    #[arg(long, global = true)]
    image_root: Option<PathBuf>,
    /// Embedding service base URL ("stub" for the in-process stub).
    #[arg(long, global = true)]
    provider_url: Option<String>,
    /// Comma-separated model list, e.g. vsrn,clip or stub:64.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Vec<String>,
    /// Models for evaluation when different from --models.
    #[arg(long, global = true, value_delimiter = ',')]
    eval_models: Vec<String>,
    #[arg(long, global = true, value_delimiter = ',')]
    policy: Vec<Policy>,
    #[arg(long, global = true, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    mode: Vec<MixMode>,
    #[arg(long, global = true, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long, global = true)]
    ei_seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Embedding cache directory (ROCOFORGE_CACHE takes precedence).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Fail on malformed records and unresolvable substitutions.
    #[arg(long, global = true, overrides_with = "lenient")]
    strict: bool,
    /// Skip malformed records and fall back where possible.
    #[arg(long, global = true)]
    lenient: bool,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// Keep every word's EI score instead of nouns only.
    #[arg(long, global = true)]
    full_heatmap: bool,
    /// Image-query positives: any of the image's captions, or only the first.
    #[arg(long, global = true)]
    i2t_positive: Option<PositiveRule>,
}

impl Common {
    fn config(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if self.corpus.is_some() {
            c.corpus = self.corpus;
        }
        if let Some(s) = self.split {
            c.split = s;
        }
        if self.image_root.is_some() {
            c.image_root = self.image_root;
        }
        if self.provider_url.is_some() {
            c.provider_url = self.provider_url;
        }
        if !self.models.is_empty() {
            c.models = self.models;
        }
        if !self.eval_models.is_empty() {
            c.eval_models = self.eval_models;
        }
        if !self.policy.is_empty() {
            c.policies = self.policy;
        }
        if !self.lambda.is_empty() {
            c.lambdas = self.lambda;
        }
        if !self.mode.is_empty() {
            c.modes = self.mode;
        }
        if !self.seed.is_empty() {
            c.seeds = self.seed;
        }
        if let Some(s) = self.ei_seed {
            c.ei_seed = s;
        }
        if let Some(out) = self.out {
            c.out_dir = out;
        }
        if self.cache.is_some() {
            c.cache = self.cache;
        }
        if self.strict {
            c.strict = true;
        }
        if self.lenient {
            c.strict = false;
        }
        if self.jobs.is_some() {
            c.jobs = self.jobs;
        }
        if let Some(b) = self.batch_size {
            c.batch_size = b;
        }
        c.full_heatmap |= self.full_heatmap;
        if let Some(rule) = self.i2t_positive {
            c.i2t_positive = rule;
        }
        c.apply_env();
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    let stage = match cli.command {
        Command::Fixture { dir, images, fixture_seed } => {
            let paths = rocoforge::fixture::write_karpathy_fixture(&dir, images, fixture_seed)?;
            println!("{}", paths.annotations.display());
            return Ok(());
        }
        Command::Run => None,
        Command::Ingest => Some(Stage::Ingest),
        Command::Ei => Some(Stage::Ei),
        Command::GenCaptions => Some(Stage::Captions),
        Command::GenImages => Some(Stage::Images),
        Command::Embed => Some(Stage::Embed),
        Command::Eval => Some(Stage::Eval),
        Command::Report => Some(Stage::Report),
    };
    let pipeline = Pipeline::new(cli.common.config()?)?;
    match stage {
        Some(s) => pipeline.run_stage(s)?,
        None => pipeline.run_all()?,
    }
    if matches!(stage, None | Some(Stage::Eval) | Some(Stage::Report)) {
        print!("{}", pipeline.load_report()?.to_text());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::error!("{err}");
            report_chain(&err);
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}

fn report_chain(err: &Error) {
    let mut source = std::error::Error::source(err);
    while let Some(s) = source {
        log::error!("  caused by: {s}");
        source = s.source();
    }
}
