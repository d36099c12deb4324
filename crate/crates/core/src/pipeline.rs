//! Staged end-to-end driver.
//!
//! Every stage reads the outputs of earlier stages from the run directory
//! and writes its own outputs plus a `run-manifest.json` recording the tool
//! version, a hash of the configuration, and SHA-256 digests of its inputs
//! and outputs. Stage manifests list the previous stages' manifests among
//! their inputs, so any output can be traced back to the source annotations.
//!
//! ```text
//! out/
//!   corpus/   corpus.jsonl
//!   ei/       ei_records.jsonl consensus_lowest.jsonl consensus_highest.jsonl
//!             stats_histogram.csv stats_words.csv
//!   captions/ {policy}_s{seed}.jsonl sets.json
//!   images/   {mode}/{lambda}/{seed}/*.png {mode}_{lambda}_s{seed}.jsonl
//!             pairing_s{seed}.json sets.json
//!   embed/    summary.json
//!   eval/     report.json report.csv
//!   report/   report.md report.txt
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::caption_forge::{gen_caption_set, CaptionSet, DangerList, ForgeContext, Policy, Vocabulary};
use crate::concept::{load_registry, ConceptRegistry};
use crate::corpus::{load_karpathy_split, Corpus, IngestOptions, NounLexicon, Split};
use crate::ei::{ei_statistics, score_corpus, ConsensusRecord};
use crate::embedding::{backend_for, Embedder, ModelRegistry, ProviderId, DEFAULT_BATCH_SIZE};
use crate::eval::{evaluate_with, CaptionVariant, EvalReport, ImageVariant, PositiveRule};
use crate::image_forge::{gen_image_set, lambda_label, pair_fakes, ImageSet, MixMode};
use crate::{Error, Result, TOOL_VERSION};

/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "ROCOFORGE_CACHE";

pub const MANIFEST_FILE: &str = "run-manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Karpathy-style annotation JSON, or an already ingested `.jsonl` corpus.
    pub corpus: Option<PathBuf>,
    pub split: String,
    /// Root that image `file_path`s are relative to; defaults to the
    /// directory holding the corpus file.
    pub image_root: Option<PathBuf>,
    /// Embedding service base URL; unset or `stub` uses the in-process stub.
    pub provider_url: Option<String>,
    /// Models scoring EI, as `name` or `name:dim`.
    pub models: Vec<String>,
    /// Models evaluated on the pools; empty means `models`.
    pub eval_models: Vec<String>,
    pub policies: Vec<Policy>,
    pub lambdas: Vec<f64>,
    pub modes: Vec<MixMode>,
    pub seeds: Vec<u64>,
    /// Seed for consensus tie-breaking.
    pub ei_seed: u64,
    pub out_dir: PathBuf,
    pub strict: bool,
    pub cache: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub batch_size: usize,
    pub full_heatmap: bool,
    /// Which captions count as correct for an image query.
    pub i2t_positive: PositiveRule,
    pub nouns: Option<PathBuf>,
    pub stop_nouns: Option<PathBuf>,
    pub concept_groups: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub danger: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            split: "test".into(),
            image_root: None,
            provider_url: None,
            models: ["vsrn", "clip", "vse-infty", "blip"].map(String::from).to_vec(),
            eval_models: Vec::new(),
            policies: Policy::ALL.to_vec(),
            lambdas: vec![0.9, 0.8, 0.7, 0.6],
            modes: vec![MixMode::Mix, MixMode::Patch],
            seeds: vec![0, 1, 2],
            ei_seed: 0,
            out_dir: PathBuf::from("out"),
            strict: true,
            cache: None,
            jobs: None,
            batch_size: DEFAULT_BATCH_SIZE,
            full_heatmap: false,
            i2t_positive: PositiveRule::Any,
            nouns: None,
            stop_nouns: None,
            concept_groups: None,
            synonyms: None,
            vocab: None,
            danger: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, source: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            offset: e.span().map_or(0, |s| s.start),
            line: 0,
            column: 0,
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&crate::wordlist::read_to_string(path)?, path)
    }

    /// Applies `ROCOFORGE_CACHE` when set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
            self.cache = Some(PathBuf::from(dir));
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return bad(format!("lambda {l} outside (0, 1)"));
        }
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be positive".into());
        }
        self.split.parse::<Split>()?;
        Ok(())
    }

    /// SHA-256 of the configuration, ignoring settings that cannot change
    /// results (output location, cache location, worker count).
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.cache = None;
        c.jobs = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.out_dir.join("cache"))
    }

    pub fn image_root(&self) -> PathBuf {
        if let Some(root) = &self.image_root {
            return root.clone();
        }
        self.corpus
            .as_deref()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn resolve_models(&self, specs: &[String]) -> Result<Vec<ProviderId>> {
        let registry = ModelRegistry::default();
        specs.iter().map(|s| registry.resolve(s)).collect()
    }

    pub fn scoring_models(&self) -> Result<Vec<ProviderId>> {
        self.resolve_models(&self.models)
    }

    pub fn evaluation_models(&self) -> Result<Vec<ProviderId>> {
        if self.eval_models.is_empty() {
            self.scoring_models()
        } else {
            self.resolve_models(&self.eval_models)
        }
    }

    pub fn embedder(&self) -> Embedder {
        Embedder::new(backend_for(self.provider_url.as_deref()))
            .with_cache_dir(self.cache_dir())
            .with_batch_size(self.batch_size)
    }

    fn lexicon(&self) -> Result<NounLexicon> {
        NounLexicon::load(self.nouns.as_deref(), self.stop_nouns.as_deref())
    }

    fn forge_context(&self) -> Result<ForgeContext> {
        let registry = match &self.concept_groups {
            Some(p) => load_registry(p, self.synonyms.as_deref(), self.strict)?,
            None => match &self.synonyms {
                Some(s) => ConceptRegistry::shipped().with_synonyms(crate::concept::SynonymTable::load(s)?),
                None => ConceptRegistry::shipped(),
            },
        };
        Ok(ForgeContext {
            registry,
            vocab: match &self.vocab {
                Some(p) => Vocabulary::load(p)?,
                None => Vocabulary::shipped(),
            },
            danger: match &self.danger {
                Some(p) => DangerList::load(p)?,
                None => DangerList::shipped(),
            },
            strict: self.strict,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Ei,
    Captions,
    Images,
    Embed,
    Eval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Ei,
        Stage::Captions,
        Stage::Images,
        Stage::Embed,
        Stage::Eval,
        Stage::Report,
    ];

    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Ingest => "corpus",
            Stage::Ei => "ei",
            Stage::Captions => "captions",
            Stage::Images => "images",
            Stage::Embed => "embed",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Ei => "ei",
            Stage::Captions => "gen-captions",
            Stage::Images => "gen-images",
            Stage::Embed => "embed",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage {s:?}")))
    }
}

/// Process exit code for an error: 2 for missing inputs, 3 for an
/// unreachable provider, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::MissingInput(_) => 2,
        Error::ProviderUnavailable { .. } => 3,
        _ => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionSetInfo {
    pub policy: Policy,
    pub seed: u64,
    pub file: String,
    pub entries: usize,
    pub skipped: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSetInfo {
    pub mode: MixMode,
    pub lambda: f64,
    pub seed: u64,
    pub file: String,
    pub entries: usize,
    pub skipped: usize,
    /// SHA-256 over the set's PNG paths and digests, in manifest order.
    pub png_digest: String,
}

impl ImageSetInfo {
    pub fn variant(&self) -> String {
        format!("{}_{}", self.mode, lambda_label(self.lambda))
    }
}

/// A configured run directory.
pub struct Pipeline {
    pub config: RunConfig,
    config_hash: String,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let config_hash = config.config_hash();
        Ok(Pipeline { config, config_hash })
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out_dir().join(stage.dir_name())
    }

    fn path(&self, stage: Stage, file: &str) -> PathBuf {
        self.stage_dir(stage).join(file)
    }

    /// `path` relative to the run directory when inside it.
    fn display_path(&self, path: &Path) -> String {
        path.strip_prefix(self.out_dir())
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn digest(&self, path: &Path) -> Result<FileDigest> {
        Ok(FileDigest {
            path: self.display_path(path),
            sha256: sha256_file(path)?,
        })
    }

    fn require(&self, path: &Path) -> Result<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(Error::MissingInput(path.to_path_buf()))
        }
    }

    fn read_json<T: DeserializeOwned>(&self, path: &Path) -> Result<T> {
        let text = crate::wordlist::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, &text, e))
    }

    fn write(&self, path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(path, text)
    }

    fn write_jsonl<T: Serialize>(&self, path: &Path, items: &[T]) -> Result<()> {
        let mut text = String::new();
        for item in items {
            text.push_str(&serde_json::to_string(item)?);
            text.push('\n');
        }
        self.write(path, text)
    }

    fn read_jsonl<T: DeserializeOwned>(&self, path: &Path) -> Result<Vec<T>> {
        let text = crate::wordlist::read_to_string(path)?;
        let mut out = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(line).map_err(|e| Error::parse(path, &text[offset..], e))?);
            }
            offset += line.len();
        }
        Ok(out)
    }

    fn write_manifest(&self, stage: Stage, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
        let manifest = RunManifest {
            stage: stage.as_str().into(),
            tool_version: TOOL_VERSION.into(),
            config_hash: self.config_hash.clone(),
            inputs: inputs.iter().map(|p| self.digest(p)).collect::<Result<_>>()?,
            outputs: outputs.iter().map(|p| self.digest(p)).collect::<Result<_>>()?,
        };
        self.write_json(&self.path(stage, MANIFEST_FILE), &manifest)
    }

    /// Runs `f` on a thread pool sized by the `jobs` setting.
    fn in_pool<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(jobs) = self.config.jobs {
            builder = builder.num_threads(jobs);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(f)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        log::info!("stage {stage}");
        self.in_pool(|| match stage {
            Stage::Ingest => self.ingest(),
            Stage::Ei => self.ei(),
            Stage::Captions => self.gen_captions(),
            Stage::Images => self.gen_images(),
            Stage::Embed => self.embed(),
            Stage::Eval => self.eval().map(|_| ()),
            Stage::Report => self.report(),
        })
    }

    pub fn run_all(&self) -> Result<()> {
        Stage::ALL.into_iter().try_for_each(|s| self.run_stage(s))
    }

    fn corpus_path(&self) -> PathBuf {
        self.path(Stage::Ingest, "corpus.jsonl")
    }

    fn manifest_of(&self, stage: Stage) -> PathBuf {
        self.path(stage, MANIFEST_FILE)
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let path = self.corpus_path();
        self.require(&path)?;
        Corpus::open(&path)
    }

    fn ingest(&self) -> Result<()> {
        let source = self
            .config
            .corpus
            .clone()
            .ok_or_else(|| Error::InvalidArgument("no corpus given".into()))?;
        self.require(&source)?;
        let corpus = if source.extension().is_some_and(|e| e == "jsonl") {
            Corpus::open(&source)?
        } else {
            let options = IngestOptions {
                strict: self.config.strict,
                lexicon: self.config.lexicon()?,
            };
            load_karpathy_split(&source, self.config.split.parse()?, &options)?
        };
        log::info!("{} images, {} captions", corpus.images.len(), corpus.caption_count());
        let out = self.corpus_path();
        std::fs::create_dir_all(self.stage_dir(Stage::Ingest)).map_err(|e| Error::io(self.out_dir(), e))?;
        corpus.save(&out)?;
        self.write_manifest(Stage::Ingest, &[source], &[out])
    }

    fn ei(&self) -> Result<()> {
        let corpus = self.load_corpus()?;
        let models = self.config.scoring_models()?;
        let embedder = self.config.embedder();
        let scores = score_corpus(&embedder, &models, &corpus, self.config.ei_seed, self.config.full_heatmap)?;
        if !scores.skipped.is_empty() {
            log::warn!("{} captions have no eligible source word", scores.skipped.len());
        }
        let stats = ei_statistics(&scores.lowest, &corpus);
        log::info!("consensus agreement (>= 2 models): {:.4}", stats.agreement_mass());

        let outputs = vec![
            self.path(Stage::Ei, "ei_records.jsonl"),
            self.path(Stage::Ei, "consensus_lowest.jsonl"),
            self.path(Stage::Ei, "consensus_highest.jsonl"),
            self.path(Stage::Ei, "stats_histogram.csv"),
            self.path(Stage::Ei, "stats_words.csv"),
        ];
        self.write_jsonl(&outputs[0], &scores.records)?;
        self.write_jsonl(&outputs[1], &scores.lowest)?;
        self.write_jsonl(&outputs[2], &scores.highest)?;
        self.write(&outputs[3], stats.histogram_csv())?;
        self.write(&outputs[4], stats.words_csv())?;
        self.write_manifest(
            Stage::Ei,
            &[self.corpus_path(), self.manifest_of(Stage::Ingest)],
            &outputs,
        )
    }

    fn load_consensus(&self, file: &str) -> Result<Vec<ConsensusRecord>> {
        let path = self.path(Stage::Ei, file);
        self.require(&path)?;
        self.read_jsonl(&path)
    }

    fn gen_captions(&self) -> Result<()> {
        let corpus = self.load_corpus()?;
        let ctx = self.config.forge_context()?;
        let mut inputs = vec![self.corpus_path(), self.manifest_of(Stage::Ingest)];
        let needs_ei = self.config.policies.iter().any(|p| p.needs_ei());
        let (lowest, highest) = if needs_ei {
            inputs.push(self.path(Stage::Ei, "consensus_lowest.jsonl"));
            inputs.push(self.path(Stage::Ei, "consensus_highest.jsonl"));
            inputs.push(self.manifest_of(Stage::Ei));
            (
                Some(self.load_consensus("consensus_lowest.jsonl")?),
                Some(self.load_consensus("consensus_highest.jsonl")?),
            )
        } else {
            (None, None)
        };

        let mut infos = Vec::new();
        let mut outputs = Vec::new();
        for &policy in &self.config.policies {
            for &seed in &self.config.seeds {
                let set: CaptionSet = gen_caption_set(&corpus, policy, lowest.as_deref(), highest.as_deref(), &ctx, seed)?;
                let file = format!("{policy}_s{seed}.jsonl");
                let path = self.path(Stage::Captions, &file);
                self.write_jsonl(&path, &set.entries)?;
                if !set.skipped.is_empty() {
                    log::info!("{policy} seed {seed}: skipped {:?}", set.skipped);
                }
                infos.push(CaptionSetInfo {
                    policy,
                    seed,
                    file,
                    entries: set.entries.len(),
                    skipped: set.skipped,
                });
                outputs.push(path);
            }
        }
        let index = self.path(Stage::Captions, "sets.json");
        self.write_json(&index, &infos)?;
        outputs.push(index);
        self.write_manifest(Stage::Captions, &inputs, &outputs)
    }

    fn gen_images(&self) -> Result<()> {
        let corpus = self.load_corpus()?;
        let image_root = self.config.image_root();
        let out_root = self.stage_dir(Stage::Images);
        std::fs::create_dir_all(&out_root).map_err(|e| Error::io(&out_root, e))?;
        let mut infos = Vec::new();
        let mut outputs = Vec::new();
        let mut pairings = BTreeMap::new();
        for &seed in &self.config.seeds {
            let path = self.path(Stage::Images, &format!("pairing_s{seed}.json"));
            let pairing = pair_fakes(&corpus, seed);
            self.write_json(&path, &pairing)?;
            outputs.push(path);
            pairings.insert(seed, pairing);
        }
        for &mode in &self.config.modes {
            for &lambda in &self.config.lambdas {
                for &seed in &self.config.seeds {
                    let set = gen_image_set(&corpus, &image_root, &pairings[&seed], mode, lambda, seed, &out_root)?;
                    if set.skipped > 0 {
                        log::warn!("{mode} {lambda} seed {seed}: {} unreadable images skipped", set.skipped);
                    }
                    let file = format!("{mode}_{}_s{seed}.jsonl", lambda_label(lambda));
                    let path = self.path(Stage::Images, &file);
                    set.write_jsonl(&path)?;
                    let mut hasher = Sha256::new();
                    for e in &set.entries {
                        hasher.update(e.output_path.as_bytes());
                        hasher.update([0]);
                        hasher.update(sha256_file(&out_root.join(&e.output_path))?.as_bytes());
                        hasher.update(b"\n");
                    }
                    infos.push(ImageSetInfo {
                        mode,
                        lambda,
                        seed,
                        file,
                        entries: set.entries.len(),
                        skipped: set.skipped,
                        png_digest: hex::encode(hasher.finalize()),
                    });
                    outputs.push(path);
                }
            }
        }
        let index = self.path(Stage::Images, "sets.json");
        self.write_json(&index, &infos)?;
        outputs.push(index);
        self.write_manifest(
            Stage::Images,
            &[self.corpus_path(), self.manifest_of(Stage::Ingest)],
            &outputs,
        )
    }

    fn caption_variants(&self) -> Result<(Vec<CaptionVariant>, PathBuf)> {
        let index = self.path(Stage::Captions, "sets.json");
        self.require(&index)?;
        let infos: Vec<CaptionSetInfo> = self.read_json(&index)?;
        let variants = infos
            .into_iter()
            .map(|info| {
                Ok(CaptionVariant {
                    name: info.policy.to_string(),
                    seed: info.seed,
                    entries: CaptionSet::read_jsonl(&self.path(Stage::Captions, &info.file))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok((variants, index))
    }

    fn image_variants(&self) -> Result<(Vec<ImageVariant>, PathBuf)> {
        let index = self.path(Stage::Images, "sets.json");
        self.require(&index)?;
        let infos: Vec<ImageSetInfo> = self.read_json(&index)?;
        let root = self.stage_dir(Stage::Images);
        let variants = infos
            .into_iter()
            .map(|info| {
                Ok(ImageVariant {
                    name: info.variant(),
                    seed: info.seed,
                    entries: ImageSet::read_jsonl(&self.path(Stage::Images, &info.file))?,
                    root: root.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok((variants, index))
    }

    fn embed(&self) -> Result<()> {
        let corpus = self.load_corpus()?;
        let (captions, cap_index) = self.caption_variants()?;
        let (images, img_index) = self.image_variants()?;
        let embedder = self.config.embedder();
        let image_root = self.config.image_root();

        let mut texts: Vec<String> = corpus.captions_in_order().map(|c| c.text.clone()).collect();
        texts.extend(captions.iter().flat_map(|v| v.entries.iter().map(|e| e.text.clone())));
        let mut paths: Vec<PathBuf> = corpus.images.iter().map(|i| image_root.join(&i.file_path)).collect();
        paths.extend(images.iter().flat_map(|v| v.entries.iter().map(|e| v.root.join(&e.output_path))));

        let mut summary = BTreeMap::new();
        for model in self.config.evaluation_models()? {
            embedder.embed_texts(&model, &texts)?;
            embedder.embed_images(&model, &paths)?;
            summary.insert(
                model.name.clone(),
                serde_json::json!({"dim": model.dim, "texts": texts.len(), "images": paths.len()}),
            );
        }
        let out = self.path(Stage::Embed, "summary.json");
        self.write_json(&out, &summary)?;
        self.write_manifest(
            Stage::Embed,
            &[
                self.corpus_path(),
                cap_index,
                img_index,
                self.manifest_of(Stage::Captions),
                self.manifest_of(Stage::Images),
            ],
            &[out],
        )
    }

    fn eval(&self) -> Result<EvalReport> {
        let corpus = self.load_corpus()?;
        let (captions, cap_index) = self.caption_variants()?;
        let (images, img_index) = self.image_variants()?;
        let models = self.config.evaluation_models()?;
        let report = evaluate_with(
            &self.config.embedder(),
            &models,
            &corpus,
            &self.config.image_root(),
            &captions,
            &images,
            self.config.i2t_positive,
        )?;
        let json = self.path(Stage::Eval, "report.json");
        let csv = self.path(Stage::Eval, "report.csv");
        self.write_json(&json, &report)?;
        self.write(&csv, report.to_csv())?;
        self.write_manifest(
            Stage::Eval,
            &[
                self.corpus_path(),
                cap_index,
                img_index,
                self.manifest_of(Stage::Captions),
                self.manifest_of(Stage::Images),
            ],
            &[json, csv],
        )?;
        Ok(report)
    }

    pub fn load_report(&self) -> Result<EvalReport> {
        let path = self.path(Stage::Eval, "report.json");
        self.require(&path)?;
        self.read_json(&path)
    }

    fn report(&self) -> Result<()> {
        let report = self.load_report()?;
        let md = self.path(Stage::Report, "report.md");
        let txt = self.path(Stage::Report, "report.txt");
        let mut markdown = String::from("# Robustness evaluation\n\n");
        markdown.push_str(&report.to_markdown());
        self.write(&md, markdown)?;
        self.write(&txt, report.to_text())?;
        self.write_manifest(
            Stage::Report,
            &[self.path(Stage::Eval, "report.json"), self.manifest_of(Stage::Eval)],
            &[md, txt],
        )
    }
}
