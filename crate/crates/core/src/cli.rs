//! The `clifs` command line: configuration, runtime wiring and the five
//! subcommands. Settings come from built-in defaults, then the TOML file
//! given with `--config`, then command-line flags.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{
    generate, oversample, rtt_batch, AugmentedDataset, GenerationClient, GenerationConfig, LeakageGuard,
    TranslationClient, DEFAULT_PIVOTS,
};
use crate::corpus::{chunk_document, read_documents, write_documents, DocumentReader, FusionLabel, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::eval::{classification_report, majority_baseline, regression_report, BootstrapSpec, EvalReport};
use crate::features::{
    AssemblyMode, EncoderClassifierRuntime, FeatureAssembler, FeatureGroup, FeatureHeader, FeatureMatrix,
    FeatureWriter, SentenceEncoderRuntime, DEFAULT_EMBEDDING_DIM, LAYOUT_VERSION,
};
use crate::lexical::LexiconBundle;
use crate::mlm::{FusionScorer, MaskedLmRuntime, ScorerConfig};
use crate::models::grid::{fit_classifier, fit_regressor, ClassWeighting, CvReport, HyperparameterGrid, TrainOptions};
use crate::models::persist::{load_model, save_model, ModelFile};
use crate::models::remote::RemoteConfig;
use crate::models::{FittedModel, Task};
use crate::pipeline::{FeaturePipeline, DEFAULT_BATCH};
use crate::risk::{featurize_all, prepare, run_task, split_samples, RiskOptions, RiskReport};
use crate::stub::{ContextMlm, EchoTranslator, FixedClassifier, HashingEncoder};
use crate::text::RuleSegmenter;
use crate::vocab::{load_embeddings, NerRuntime, SeedLists, Vocabularies};

pub const DEFAULT_EXPANSION_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Seed vocabularies (TOML); built-in lists when absent.
    pub seeds: Option<PathBuf>,
    /// Static word vectors for vocabulary expansion.
    pub embeddings: Option<PathBuf>,
    /// Lexicon manifest; the bundled illustrative lists when absent.
    pub lexicons: Option<PathBuf>,
    pub masked_lm: Option<PathBuf>,
    pub ner: Option<PathBuf>,
    pub sentence_encoder: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    /// Replaces the dataset-specific target terms.
    pub target_terms: Option<Vec<String>>,
    pub expansion_threshold: f64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            target_terms: None,
            expansion_threshold: DEFAULT_EXPANSION_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Zero-fill the embedding and class-probability blocks when their
    /// runtimes are missing.
    pub degraded: bool,
    pub embedding_dim: usize,
    /// Mask named entities alongside target mentions.
    pub ner: bool,
    pub max_sequence_tokens: usize,
    pub batch: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            degraded: false,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            ner: true,
            max_sequence_tokens: ScorerConfig::default().max_sequence_tokens,
            batch: DEFAULT_BATCH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub folds: usize,
    pub weighting: ClassWeighting,
    pub grid: HyperparameterGrid,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            folds: 4,
            weighting: ClassWeighting::Doubled,
            grid: HyperparameterGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// 0 disables the bootstrap.
    pub bootstrap_resamples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            bootstrap_resamples: BootstrapSpec::default().n_resamples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub pivots: Vec<String>,
    pub rtt_classes: Vec<FusionLabel>,
    pub oversample_classes: Vec<FusionLabel>,
    pub oversample_fraction: f64,
    pub max_in_flight: usize,
    pub generation: GenerationConfig,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            pivots: DEFAULT_PIVOTS.iter().map(|s| s.to_string()).collect(),
            rtt_classes: vec![FusionLabel::Low, FusionLabel::High],
            oversample_classes: vec![FusionLabel::Low, FusionLabel::High],
            oversample_fraction: 0.25,
            max_in_flight: 4,
            generation: GenerationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    pub chunk_words: usize,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig {
            chunk_words: crate::corpus::DEFAULT_CHUNK_WORDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub alpha: f64,
    /// Offline stand-ins for every model runtime and remote client.
    pub stub: bool,
    pub paths: PathsConfig,
    pub vocab: VocabConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub augment: AugmentConfig,
    pub risk: RiskConfig,
    pub remote: Option<RemoteConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            alpha: ScorerConfig::default().alpha,
            stub: false,
            paths: PathsConfig::default(),
            vocab: VocabConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            augment: AugmentConfig::default(),
            risk: RiskConfig::default(),
            remote: None,
        }
    }
}

impl RunConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&raw).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.path_slots().into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn path_slots(&mut self) -> [&mut Option<PathBuf>; 7] {
        let p = &mut self.paths;
        [
            &mut p.seeds,
            &mut p.embeddings,
            &mut p.lexicons,
            &mut p.masked_lm,
            &mut p.ner,
            &mut p.sentence_encoder,
            &mut p.classifier,
        ]
    }

    /// Every referenced path exists and numeric settings are in range.
    pub fn validate(&mut self) -> Result<()> {
        for p in self.path_slots().into_iter().flatten() {
            if !p.exists() {
                return Err(Error::config(format!("configured path {} does not exist", p.display())));
            }
        }
        ScorerConfig {
            alpha: self.alpha,
            max_sequence_tokens: self.features.max_sequence_tokens,
            ..ScorerConfig::default()
        }
        .validate()?;
        let t = self.vocab.expansion_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::config(format!("expansion threshold {t} outside (0, 1]")));
        }
        self.train.grid.validate()
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn scorer_config(&self) -> ScorerConfig {
        ScorerConfig {
            alpha: self.alpha,
            max_sequence_tokens: self.features.max_sequence_tokens,
            ..ScorerConfig::default()
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            folds: self.train.folds,
            seed: self.seed,
            weighting: self.train.weighting,
            ..TrainOptions::default()
        }
    }

    pub fn vocabularies(&self) -> Result<Vocabularies> {
        let mut seeds = match &self.paths.seeds {
            Some(p) => SeedLists::from_toml_file(p)?,
            None => SeedLists::default(),
        };
        if let Some(t) = &self.vocab.target_terms {
            seeds = seeds.with_target_terms(t);
        }
        match &self.paths.embeddings {
            Some(p) => Vocabularies::build(&seeds, &load_embeddings(p)?, self.vocab.expansion_threshold),
            None => Ok(Vocabularies::from_seeds(&seeds)),
        }
    }

    pub fn lexicons(&self) -> Result<LexiconBundle> {
        match &self.paths.lexicons {
            Some(p) => LexiconBundle::from_manifest(p),
            None => Ok(LexiconBundle::illustrative()),
        }
    }
}

/// Owned model runtimes for one run.
pub struct Runtimes {
    pub mlm: Box<dyn MaskedLmRuntime>,
    pub ner: Option<Box<dyn NerRuntime>>,
    pub encoder: Option<Box<dyn SentenceEncoderRuntime>>,
    pub classifier: Option<Box<dyn EncoderClassifierRuntime>>,
}

impl Runtimes {
    /// Stub mode builds a context-copy masked LM over the vocabulary words,
    /// a hashing encoder and a uniform classifier.
    pub fn load(cfg: &RunConfig, vocab: &Vocabularies) -> Result<Self> {
        if cfg.stub {
            let words: Vec<&str> = [&vocab.identity, &vocab.target, &vocab.kinship]
                .into_iter()
                .flat_map(|v| v.single_word_terms())
                .collect();
            return Ok(Runtimes {
                mlm: Box::new(ContextMlm::new(words)),
                ner: None,
                encoder: Some(Box::new(HashingEncoder::new(cfg.features.embedding_dim))),
                classifier: Some(Box::new(FixedClassifier::uniform())),
            });
        }
        let p = &cfg.paths;
        let mlm_path = p
            .masked_lm
            .as_ref()
            .ok_or_else(|| Error::config("paths.masked_lm is required unless stub = true"))?;
        Ok(Runtimes {
            mlm: onnx::masked_lm(mlm_path)?,
            ner: match (&p.ner, cfg.features.ner) {
                (Some(path), true) => Some(onnx::ner(path)?),
                _ => None,
            },
            encoder: p.sentence_encoder.as_deref().map(onnx::encoder).transpose()?,
            classifier: p.classifier.as_deref().map(onnx::classifier).transpose()?,
        })
    }
}

#[cfg(feature = "onnx")]
mod onnx {
    use super::*;
    use crate::runtime::{ExportManifest, OnnxClassifier, OnnxMaskedLm, OnnxNer, OnnxSentenceEncoder};

    pub fn masked_lm(p: &Path) -> Result<Box<dyn MaskedLmRuntime>> {
        Ok(Box::new(OnnxMaskedLm::load(ExportManifest::load(p)?)?))
    }

    pub fn ner(p: &Path) -> Result<Box<dyn NerRuntime>> {
        Ok(Box::new(OnnxNer::load(ExportManifest::load(p)?)?))
    }

    pub fn encoder(p: &Path) -> Result<Box<dyn SentenceEncoderRuntime>> {
        Ok(Box::new(OnnxSentenceEncoder::load(ExportManifest::load(p)?)?))
    }

    pub fn classifier(p: &Path) -> Result<Box<dyn EncoderClassifierRuntime>> {
        Ok(Box::new(OnnxClassifier::load(ExportManifest::load(p)?)?))
    }
}

#[cfg(not(feature = "onnx"))]
mod onnx {
    use super::*;

    fn missing<T>(p: &Path) -> Result<T> {
        Err(Error::config(format!(
            "{}: this build has no ONNX support (enable the `onnx` feature)",
            p.display()
        )))
    }

    pub fn masked_lm(p: &Path) -> Result<Box<dyn MaskedLmRuntime>> {
        missing(p)
    }

    pub fn ner(p: &Path) -> Result<Box<dyn NerRuntime>> {
        missing(p)
    }

    pub fn encoder(p: &Path) -> Result<Box<dyn SentenceEncoderRuntime>> {
        missing(p)
    }

    pub fn classifier(p: &Path) -> Result<Box<dyn EncoderClassifierRuntime>> {
        missing(p)
    }
}

/// Everything the feature pipeline borrows.
pub struct Context {
    pub cfg: RunConfig,
    pub vocab: Vocabularies,
    pub lexicons: LexiconBundle,
    pub runtimes: Runtimes,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let vocab = cfg.vocabularies()?;
        let lexicons = cfg.lexicons()?;
        let runtimes = Runtimes::load(&cfg, &vocab)?;
        Ok(Context {
            cfg,
            vocab,
            lexicons,
            runtimes,
        })
    }

    pub fn pipeline(&self) -> Result<FeaturePipeline<'_>> {
        let r = &self.runtimes;
        let scorer = FusionScorer::new(&self.vocab, r.mlm.as_ref(), r.ner.as_deref(), self.cfg.scorer_config())?;
        let mode = if self.cfg.features.degraded {
            AssemblyMode::Degraded
        } else {
            AssemblyMode::Strict
        };
        let assembler = FeatureAssembler::new(
            self.cfg.features.embedding_dim,
            mode,
            r.encoder.as_deref(),
            r.classifier.as_deref(),
        )?;
        Ok(FeaturePipeline::new(scorer, &self.lexicons, assembler))
    }
}

/// Provenance wrapper written around every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub alpha: f64,
    pub layout_version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, cfg: &RunConfig, body: T) -> Self {
        Report {
            command: command.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            alpha: cfg.alpha,
            layout_version: LAYOUT_VERSION,
            body,
        }
    }

    /// Pretty JSON to `path`, or to stdout without one.
    pub fn write(&self, path: Option<&Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        match path {
            Some(p) => std::fs::write(p, json + "\n").map_err(|e| Error::io(p, e)),
            None => {
                let mut out = std::io::stdout().lock();
                writeln!(out, "{json}").map_err(|e| Error::io("<stdout>", e))
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "clifs", version, about = "Identity fusion features, models and evaluation")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Use offline stub runtimes.
    #[arg(long, global = true)]
    pub stub: bool,
    /// Zero-fill feature blocks whose runtimes are missing.
    #[arg(long, global = true)]
    pub degraded: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Classification,
    Regression,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score documents into a feature file.
    Score {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Grid-search and fit a forest on a feature file.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "classification")]
        task: TaskArg,
        /// Feature groups to drop, as letters (e.g. `A,B`).
        #[arg(long, value_delimiter = ',')]
        drop: Vec<char>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a model and/or the majority baseline on a feature file.
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Training features, for the majority baseline.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build an augmented training pool with lineage.
    Augment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Held-out documents the pool must not leak.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the violence-risk task on a labeled corpus.
    Risk {
        #[arg(long)]
        input: PathBuf,
        /// A trained CLIFS classifier.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn effective_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        cfg.stub |= self.stub;
        cfg.features.degraded |= self.degraded;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.effective_config()?;
    match cli.command {
        Command::Score { input, output } => cmd_score(cfg, &input, &output).map(|n| {
            log::info!("wrote {n} records to {}", output.display());
        }),
        Command::Train {
            features,
            model,
            task,
            drop,
            report,
        } => {
            let drop = drop
                .into_iter()
                .map(|c| {
                    FeatureGroup::from_letter(c.to_ascii_uppercase())
                        .ok_or_else(|| Error::usage(format!("unknown feature group {c:?}")))
                })
                .collect::<Result<BTreeSet<_>>>()?;
            let r = cmd_train(&cfg, &features, &model, task, &drop)?;
            Report::new("train", &cfg, r).write(report.as_deref())
        }
        Command::Eval {
            features,
            model,
            train,
            report,
        } => {
            let rows = cmd_eval(&cfg, &features, model.as_deref(), train.as_deref())?;
            Report::new("eval", &cfg, EvalRows { rows }).write(report.as_deref())
        }
        Command::Augment {
            input,
            output,
            test,
            report,
        } => {
            let r = cmd_augment(&cfg, &input, &output, test.as_deref())?;
            Report::new("augment", &cfg, r).write(report.as_deref())
        }
        Command::Risk { input, model, report } => {
            let r = cmd_risk(cfg.clone(), &input, &model)?;
            Report::new("risk", &cfg, r).write(report.as_deref())
        }
    }
}

/// Streams documents to a feature file; returns the record count.
pub fn cmd_score(cfg: RunConfig, input: &Path, output: &Path) -> Result<usize> {
    let hash = cfg.hash();
    let (seed, alpha, batch) = (cfg.seed, cfg.alpha, cfg.features.batch);
    let ctx = Context::new(cfg)?;
    let pipeline = ctx.pipeline()?;
    let degraded: BTreeSet<FeatureGroup> = [
        (ctx.runtimes.encoder.is_none(), FeatureGroup::Embeddings),
        (ctx.runtimes.classifier.is_none(), FeatureGroup::ClassProbs),
    ]
    .into_iter()
    .filter_map(|(missing, g)| missing.then_some(g))
    .collect();
    let mut header = FeatureHeader::new(&pipeline.schema(), degraded);
    header.provenance.insert("config_hash".into(), hash.into());
    header.provenance.insert("seed".into(), seed.into());
    header.provenance.insert("alpha".into(), alpha.into());
    let reader = DocumentReader::open(input)?;
    let mut writer = FeatureWriter::create(output, header)?;
    let n = pipeline.stream(reader, &mut writer, batch)?;
    writer.finish()?;
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub task: Task,
    pub model_path: PathBuf,
    pub n_rows: usize,
    pub dropped_groups: Vec<FeatureGroup>,
    pub cv: CvReport,
    pub importances: Vec<(String, f64)>,
}

pub fn cmd_train(
    cfg: &RunConfig,
    features: &Path,
    model_path: &Path,
    task: TaskArg,
    drop: &BTreeSet<FeatureGroup>,
) -> Result<TrainSummary> {
    let m = FeatureMatrix::read(features)?.mask_groups(drop);
    let rows = m.rows();
    let name = features.display().to_string();
    let opts = cfg.train_options();
    let (model, cv) = match task {
        TaskArg::Classification => {
            let y = m
                .labels()
                .ok_or_else(|| Error::format(&name, "every record needs a label for classification"))?;
            fit_classifier(&rows, &y, &cfg.train.grid, &opts)?
        }
        TaskArg::Regression => {
            let y = m
                .scores()
                .ok_or_else(|| Error::format(&name, "every record needs a vifs_score for regression"))?;
            fit_regressor(&rows, &y, &cfg.train.grid, &opts)?
        }
    };
    let model = model.with_schema(m.schema.clone());
    let mut file = ModelFile::new(model);
    file.config_hash = Some(cfg.hash());
    save_model(model_path, &file)?;
    Ok(TrainSummary {
        task: file.model.task,
        model_path: model_path.to_path_buf(),
        n_rows: rows.len(),
        dropped_groups: drop.iter().copied().collect(),
        importances: file.model.ranked_importances(),
        cv,
    })
}

/// Picks the model's columns out of a feature table by name.
pub fn align_rows(model: &FittedModel, m: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
    let Some(schema) = &model.schema else {
        if m.schema.len() != model.n_features() {
            return Err(Error::usage(format!(
                "model expects {} columns, features have {}",
                model.n_features(),
                m.schema.len()
            )));
        }
        return Ok(m.rows());
    };
    let idx = schema
        .names
        .iter()
        .map(|n| {
            m.schema
                .names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| Error::usage(format!("feature file lacks column {n:?} required by the model")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(m.records.iter().map(|r| idx.iter().map(|&i| r.values[i]).collect()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRows {
    pub rows: Vec<EvalReport>,
}

pub fn cmd_eval(cfg: &RunConfig, features: &Path, model: Option<&Path>, train: Option<&Path>) -> Result<Vec<EvalReport>> {
    if model.is_none() && train.is_none() {
        return Err(Error::usage("eval needs --model, --train, or both"));
    }
    let test = FeatureMatrix::read(features)?;
    let name = features.display().to_string();
    let bootstrap = (cfg.eval.bootstrap_resamples > 0).then_some(BootstrapSpec {
        n_resamples: cfg.eval.bootstrap_resamples,
        seed: cfg.seed,
    });
    let mut rows = Vec::new();
    if let Some(tp) = train {
        let tm = FeatureMatrix::read(tp)?;
        let y_train = tm
            .labels()
            .ok_or_else(|| Error::format(tp.display().to_string(), "training records need labels"))?;
        let y_test = test.labels().ok_or_else(|| Error::format(&name, "test records need labels"))?;
        rows.push(majority_baseline(&y_train, &y_test, bootstrap)?);
    }
    if let Some(mp) = model {
        let file = load_model(mp)?;
        let x = align_rows(&file.model, &test)?;
        let label = mp.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
        rows.push(match file.model.task {
            Task::Classification => {
                let y = test.labels().ok_or_else(|| Error::format(&name, "test records need labels"))?;
                classification_report(&label, &y, &file.model.predict_labels(&x)?, bootstrap)?
            }
            Task::Regression => {
                let y = test.scores().ok_or_else(|| Error::format(&name, "test records need vifs_score"))?;
                regression_report(&label, &y, &file.model.predict_scores(&x)?)?
            }
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub output: PathBuf,
    pub n_records: usize,
    /// `label/provenance` to count.
    pub histogram: std::collections::BTreeMap<String, usize>,
    pub leakage_checked: bool,
}

fn remote_client(cfg: &RunConfig) -> Result<Option<Box<dyn crate::models::remote::ChatClient>>> {
    let Some(r) = &cfg.remote else { return Ok(None) };
    #[cfg(feature = "http")]
    {
        Ok(Some(Box::new(crate::models::remote::OpenAiChatClient::from_config(r)?)))
    }
    #[cfg(not(feature = "http"))]
    {
        let _ = r;
        Err(Error::config("remote client configured but this build has no `http` feature"))
    }
}

/// Output order: inputs, round trips, generated essays, oversampled
/// copies.
pub fn cmd_augment(cfg: &RunConfig, input: &Path, output: &Path, test: Option<&Path>) -> Result<AugmentSummary> {
    let human = read_documents(input)?;
    if let Some(d) = human.iter().find(|d| !d.provenance.is_human()) {
        return Err(Error::format(
            input.display().to_string(),
            format!("{} is not a human record; augment from the original pool", d.id),
        ));
    }
    let a = &cfg.augment;
    let remote = if cfg.stub { None } else { remote_client(cfg)? };
    let translator: Box<dyn TranslationClient> = match remote {
        Some(c) => Box::new(crate::augment::ChatTranslator { client: c }),
        None => {
            if !cfg.stub {
                return Err(Error::config("augment needs [remote] settings or stub = true"));
            }
            Box::new(EchoTranslator)
        }
    };
    let rtt_classes: BTreeSet<FusionLabel> = a.rtt_classes.iter().copied().collect();
    let rtt = rtt_batch(&human, translator.as_ref(), &a.pivots, &rtt_classes, a.max_in_flight)?;

    let genai = if cfg.stub || a.generation.per_class.iter().all(|&n| n == 0) {
        if cfg.stub {
            log::info!("stub mode: essay generation skipped");
        }
        Vec::new()
    } else {
        let client = remote_client(cfg)?.expect("remote configured above");
        let generator: Box<dyn GenerationClient> = Box::new(crate::augment::ChatGenerator { client });
        let gen_cfg = GenerationConfig {
            seed: cfg.seed,
            ..a.generation.clone()
        };
        generate(&human, generator.as_ref(), &gen_cfg)?
    };

    let over_classes: BTreeSet<FusionLabel> = a.oversample_classes.iter().copied().collect();
    let over = oversample(&human, &over_classes, a.oversample_fraction, cfg.seed)?;

    let mut records = human;
    records.extend(rtt);
    records.extend(genai);
    records.extend(over);
    let pool = AugmentedDataset::new(records);
    pool.validate_lineage()?;
    if let Some(tp) = test {
        LeakageGuard::default().check(&pool.records, &read_documents(tp)?)?;
    }
    write_documents(output, &pool.records)?;
    Ok(AugmentSummary {
        output: output.to_path_buf(),
        n_records: pool.records.len(),
        histogram: pool
            .histogram()
            .into_iter()
            .map(|((l, p), n)| (format!("{l}/{}", format!("{p:?}").to_lowercase()), n))
            .collect(),
        leakage_checked: test.is_some(),
    })
}

pub fn cmd_risk(cfg: RunConfig, input: &Path, model: &Path) -> Result<RiskReport> {
    let docs = read_documents(input)?;
    let seg = RuleSegmenter::default();
    let mut chunks = Vec::new();
    for d in &docs {
        chunks.extend(chunk_document(d, cfg.risk.chunk_words, &seg)?);
    }
    let balanced = prepare(&chunks)?;
    let file = load_model(model)?;
    if file.model.task != Task::Classification {
        return Err(Error::usage("the risk task needs a CLIFS classifier, not a regressor"));
    }
    let grid = cfg.train.grid.clone();
    let opts = RiskOptions {
        folds: cfg.train.folds,
        seed: cfg.seed,
    };
    let ctx = Context::new(cfg)?;
    let pipeline = ctx.pipeline()?;
    let samples = featurize_all(&balanced, &pipeline, &file.model)?;
    let (train, test) = split_samples(samples, opts.seed)?;
    run_task(&train, &test, &grid, &opts)
}

/// Entry point for the binary: parses arguments, runs, maps errors to exit
/// codes.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("clifs: {e}");
            e.exit_code()
        }
    }
}
