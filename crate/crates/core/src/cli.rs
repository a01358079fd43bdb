//! Batch command-line front end.
//!
//! Every subcommand writes `manifest-<command>.json` (resolved config,
//! seed, tool version) into the output directory. Exit codes: 0 success,
//! 1 runtime failure, 2 usage or configuration error.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{compute_stats, split_by_signer, DatasetStats, SegmentBounds, SplitSpec};
use crate::landmark::{missing_hand_rate, FeatureSet, TrialSequence, NUM_CLASSES};
use crate::models::eval::{cross_validate, evaluate, CvOutcome, EvalReport};
use crate::models::rnn::{train_rnn, RnnConfig, RnnModel, TrainHistory};
use crate::models::svm::{train_svm, SvmModel, SvmParams};
use crate::models::{flatten_trial, Classifier};
use crate::pipeline::{
    build_features, ingest_dataset, labels_of, load_trials, prepare, present_classes, write_trials,
    PrepConfig, Representation,
};
use crate::preprocess::{FeatureSequence, Normalizer, VariantConfig};
use crate::rq::{encode_sequence, write_token_stream, RqConfig};
use crate::seqdist::{
    dtw_features, select_templates_for, FeatureMatrix, TemplateBank, TemplateSource,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    /// Linear SVM on flattened frames.
    #[default]
    Svm,
    /// Linear SVM on DTW-template distances.
    SvmDtw,
    /// Attention bi-LSTM.
    Rnn,
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svm" => Ok(ClassifierKind::Svm),
            "svm-dtw" | "svm+dtw" => Ok(ClassifierKind::SvmDtw),
            "rnn" | "bilstm" => Ok(ClassifierKind::Rnn),
            other => Err(Error::config(
                "classifier",
                format!("unknown value `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizeConfig {
    pub enabled: bool,
    pub post_scale: f64,
    /// Leave all-zero points untouched (raw coordinates only).
    pub skip_missing: bool,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            post_scale: 1.0,
            skip_missing: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtwConfig {
    pub band: Option<usize>,
    pub template_source: TemplateSource,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RqSource {
    /// Encoder config file; built-in defaults when absent.
    pub path: Option<PathBuf>,
    /// Refit ranges to these lower/upper percentiles of the training data.
    pub fit_percentiles: Option<[f64; 2]>,
}

/// Everything a run depends on. Loaded from `--config`, then overridden by
/// command-line flags. All component seeds derive from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: Option<PathBuf>,
    pub seed: u64,
    pub bounds: SegmentBounds,
    pub variant: VariantConfig,
    pub features: FeatureSet,
    pub representation: Representation,
    pub classifier: ClassifierKind,
    pub prep: PrepConfig,
    pub split: SplitSpec,
    pub folds: usize,
    pub normalize: NormalizeConfig,
    pub svm: SvmParams,
    pub rnn: RnnConfig,
    pub dtw: DtwConfig,
    pub rq: RqSource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: None,
            seed: 0,
            bounds: SegmentBounds::default(),
            variant: VariantConfig::default(),
            features: FeatureSet::default(),
            representation: Representation::default(),
            classifier: ClassifierKind::default(),
            prep: PrepConfig::default(),
            split: SplitSpec::default(),
            folds: 10,
            normalize: NormalizeConfig::default(),
            svm: SvmParams::default(),
            rnn: RnnConfig::default(),
            dtw: DtwConfig::default(),
            rq: RqSource::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::config("folds", "need at least two folds"));
        }
        if self.variant.target_len == 0 {
            return Err(Error::config("variant.target_len", "must be positive"));
        }
        if !(self.normalize.post_scale > 0.0) {
            return Err(Error::config("normalize.post_scale", "must be positive"));
        }
        if !(self.svm.c > 0.0) {
            return Err(Error::config("svm.c", "must be positive"));
        }
        if !(self.svm.tol > 0.0) {
            return Err(Error::config("svm.tol", "must be positive"));
        }
        self.rnn.validate()?;
        if let Some([lo, hi]) = self.rq.fit_percentiles {
            if !(0.0 <= lo && lo < hi && hi <= 100.0) {
                return Err(Error::config(
                    "rq.fit_percentiles",
                    "need 0 <= lower < upper <= 100",
                ));
            }
        }
        if let Some(p) = &self.rq.path {
            if !p.is_file() {
                return Err(Error::config(
                    "rq.path",
                    format!("{} does not exist", p.display()),
                ));
            }
        }
        if let Some(p) = &self.data {
            if !p.exists() {
                return Err(Error::config(
                    "data",
                    format!("{} does not exist", p.display()),
                ));
            }
        }
        Ok(())
    }

    fn seed_components(&mut self) {
        self.svm.seed = self.seed;
        self.rnn.seed = self.seed;
    }

    fn data_dir(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| {
            Error::config("data", "no dataset path; pass --data or set SIGNSEQ_DATA")
        })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "signseq",
    version,
    about = "Word-level sign recognition from landmark sequences"
)]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Dataset root, trial directory or preprocessed directory.
    #[arg(long, global = true, env = "SIGNSEQ_DATA")]
    data: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct PipelineFlags {
    /// Comma-separated variant tokens, e.g. `prolonged,flipped`.
    #[arg(long)]
    variant: Option<VariantConfig>,
    /// `posehands75` or `full543`.
    #[arg(long)]
    features: Option<FeatureSet>,
    /// `raw` or `rq`.
    #[arg(long)]
    representation: Option<Representation>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment annotated video streams into per-trial LMK1 files.
    Ingest {
        /// `gesture` (start..end) or `full` (intention..withdrawal).
        #[arg(long)]
        bounds: Option<String>,
    },
    /// Dataset statistics and the signer split sizes.
    Stats,
    /// Frame-rate correction, calibration and dominance variant.
    Preprocess {
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Relative-quantization token streams.
    EncodeRq {
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// DTW-template feature matrices for the train and test split.
    DtwFeatures {
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Cross-validated training of one model per fold.
    Train {
        /// `svm`, `svm-dtw` or `rnn`.
        #[arg(long)]
        classifier: Option<ClassifierKind>,
        #[command(flatten)]
        flags: PipelineFlags,
    },
    /// Scores the fold models on the test signers.
    Evaluate,
    /// Plain-text summary of the evaluation report.
    Report,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.data {
        cfg.data = Some(d.clone());
    }
    let apply = |cfg: &mut PipelineConfig, f: &PipelineFlags| {
        if let Some(v) = f.variant {
            cfg.variant = v;
        }
        if let Some(v) = f.features {
            cfg.features = v;
        }
        if let Some(v) = f.representation {
            cfg.representation = v;
        }
    };
    match &cli.command {
        Command::Ingest { bounds: Some(b) } => {
            cfg.bounds = match b.as_str() {
                "gesture" => SegmentBounds::Gesture,
                "full" => SegmentBounds::Full,
                other => return Err(Error::config("bounds", format!("unknown value `{other}`"))),
            }
        }
        Command::Preprocess { flags }
        | Command::EncodeRq { flags }
        | Command::DtwFeatures { flags } => apply(&mut cfg, flags),
        Command::Train { classifier, flags } => {
            apply(&mut cfg, flags);
            if let Some(c) = classifier {
                cfg.classifier = *c;
            }
        }
        _ => {}
    }
    cfg.seed_components();
    cfg.validate()?;

    let out = cli.out.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let pool = match cli.jobs {
        Some(0) => return Err(Error::config("jobs", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| Error::config("jobs", e.to_string()))?;

    pool.install(|| {
        let name = match &cli.command {
            Command::Ingest { .. } => cmd_ingest(&cfg, &out)?,
            Command::Stats => cmd_stats(&cfg, &out)?,
            Command::Preprocess { .. } => cmd_preprocess(&cfg, &out)?,
            Command::EncodeRq { .. } => cmd_encode_rq(&cfg, &out)?,
            Command::DtwFeatures { .. } => cmd_dtw_features(&cfg, &out)?,
            Command::Train { .. } => cmd_train(&cfg, &out)?,
            Command::Evaluate => return cmd_evaluate(cfg.data.clone(), &out, cli.jobs),
            Command::Report => cmd_report(&out)?,
        };
        write_manifest(&out, name, &cfg, cli.jobs)
    })
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    command: String,
    seed: u64,
    jobs: Option<usize>,
    config: PipelineConfig,
}

fn manifest_path(out: &Path, command: &str) -> PathBuf {
    out.join(format!("manifest-{command}.json"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_manifest(
    out: &Path,
    command: &str,
    cfg: &PipelineConfig,
    jobs: Option<usize>,
) -> Result<()> {
    let m = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed: cfg.seed,
        jobs,
        config: cfg.clone(),
    };
    write_json(&manifest_path(out, command), &m)
}

/// Accepts a dataset root (annotations + videos), a directory holding a
/// `trials/` subdirectory, or a directory of trial files.
fn load_dataset(cfg: &PipelineConfig) -> Result<Vec<TrialSequence>> {
    let data = cfg.data_dir()?;
    if data.join("videos").is_dir() {
        ingest_dataset(data, cfg.bounds)
    } else if data.join("trials").is_dir() {
        load_trials(&data.join("trials"))
    } else {
        load_trials(data)
    }
}

fn cmd_ingest(cfg: &PipelineConfig, out: &Path) -> Result<&'static str> {
    let trials = ingest_dataset(cfg.data_dir()?, cfg.bounds)?;
    write_trials(&trials, &out.join("trials"))?;
    log::info!("wrote {} trials", trials.len());
    Ok("ingest")
}

#[derive(Serialize)]
struct StatsOutput {
    #[serde(flatten)]
    stats: DatasetStats,
    missing_hand_rate: f64,
    train_trials: usize,
    test_trials: usize,
}

fn cmd_stats(cfg: &PipelineConfig, out: &Path) -> Result<&'static str> {
    let trials = load_dataset(cfg)?;
    let stats = compute_stats(&trials)?;
    let missing = missing_hand_rate(&trials)?;
    let test = trials
        .iter()
        .filter(|t| cfg.split.is_test(t.signer))
        .count();
    let s = &stats;
    println!("trials             {}", s.trial_count);
    println!("max frames         {}", s.max_frames);
    println!("min frames         {}", s.min_frames);
    println!("avg frames         {:.2}", s.avg_frames);
    println!("right-hand         {}", s.right_hand_instances);
    println!("left-hand          {}", s.left_hand_instances);
    println!("train / test       {} / {}", trials.len() - test, test);
    println!("missing hand rate  {missing:.4}");
    let output = StatsOutput {
        train_trials: trials.len() - test,
        test_trials: test,
        stats,
        missing_hand_rate: missing,
    };
    write_json(&out.join("stats.json"), &output)?;
    Ok("stats")
}

fn cmd_preprocess(cfg: &PipelineConfig, out: &Path) -> Result<&'static str> {
    let prepared = prepare(&load_dataset(cfg)?, &cfg.variant, &cfg.prep)?;
    write_trials(&prepared, &out.join("preprocessed"))?;
    Ok("preprocess")
}

/// Encoder config: file or defaults, optionally refit on training trials.
fn resolve_rq(cfg: &PipelineConfig, prepared: &[TrialSequence]) -> Result<RqConfig> {
    let mut rq = match &cfg.rq.path {
        Some(p) => RqConfig::load(p)?,
        None => RqConfig::default(),
    };
    if let Some([lo, hi]) = cfg.rq.fit_percentiles {
        let frames = prepared
            .iter()
            .filter(|t| !cfg.split.is_test(t.signer))
            .flat_map(|t| t.frames.iter());
        rq.scheme = rq.scheme.fit_percentiles(frames, &rq.table, lo, hi);
    }
    Ok(rq)
}

fn cmd_encode_rq(cfg: &PipelineConfig, out: &Path) -> Result<&'static str> {
    let prepared = prepare(&load_dataset(cfg)?, &cfg.variant, &cfg.prep)?;
    let rq = resolve_rq(cfg, &prepared)?;
    rq.save(&out.join("rq_config.json"))?;
    let dir = out.join("rq");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for t in &prepared {
        let codes = encode_sequence(t, &rq.table, &rq.scheme, cfg.features)?;
        write_token_stream(&codes, &dir.join(format!("{}.tok", t.id())))?;
    }
    Ok("encode-rq")
}

/// Normalized train and test features for the configured variant.
struct SplitFeatures {
    train: Vec<FeatureSequence>,
    test: Vec<FeatureSequence>,
    normalizer: Option<Normalizer>,
    rq: RqConfig,
}

fn split_features(
    cfg: &PipelineConfig,
    normalizer: Option<Normalizer>,
    rq: Option<RqConfig>,
) -> Result<SplitFeatures> {
    let prepared = prepare(&load_dataset(cfg)?, &cfg.variant, &cfg.prep)?;
    let rq = match rq {
        Some(r) => r,
        None => resolve_rq(cfg, &prepared)?,
    };
    let (train, test) = split_by_signer(prepared, &cfg.split);
    let build = |t: &[TrialSequence]| {
        build_features(t, cfg.features, cfg.representation, &rq, &cfg.variant)
    };
    let (mut train, mut test) = (build(&train)?, build(&test)?);
    let normalizer = match normalizer {
        Some(n) => Some(n),
        None if cfg.normalize.enabled && !train.is_empty() => {
            let skip = cfg.normalize.skip_missing && cfg.representation == Representation::Raw;
            Some(Normalizer::fit(&train, cfg.normalize.post_scale, skip)?)
        }
        None => None,
    };
    if let Some(n) = &normalizer {
        for s in train.iter_mut().chain(test.iter_mut()) {
            *s = n.apply(s)?;
        }
    }
    Ok(SplitFeatures {
        train,
        test,
        normalizer,
        rq,
    })
}

fn template_bank(cfg: &PipelineConfig, f: &SplitFeatures) -> Result<TemplateBank<FeatureSequence>> {
    let pool = match cfg.dtw.template_source {
        TemplateSource::Test => {
            log::warn!("DTW templates are drawn from the test signers");
            &f.test
        }
        TemplateSource::Train => &f.train,
    };
    let classes = present_classes(&labels_of(&f.train))
        .into_iter()
        .map(crate::landmark::WordClass::from_index)
        .collect::<Result<Vec<_>>>()?;
    select_templates_for(pool, &classes, cfg.seed, cfg.dtw.template_source)
}

fn dtw_rows(
    seqs: &[FeatureSequence],
    bank: &TemplateBank<FeatureSequence>,
    band: Option<usize>,
) -> Result<Vec<Vec<f64>>> {
    seqs.iter().map(|s| dtw_features(s, bank, band)).collect()
}

#[derive(Serialize, Deserialize)]
struct DtwManifest {
    bank_seed: u64,
    source: TemplateSource,
    feature_set: FeatureSet,
    band: Option<usize>,
    template_ids: Vec<String>,
    train_labels: Vec<usize>,
    test_labels: Vec<usize>,
}

fn bank_ids(bank: &TemplateBank<FeatureSequence>) -> Vec<String> {
    bank.templates
        .iter()
        .map(|t| format!("{}_{}", t.signer, t.word))
        .collect()
}

fn cmd_dtw_features(cfg: &PipelineConfig, out: &Path) -> Result<&'static str> {
    let f = split_features(cfg, None, None)?;
    if f.train.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    let bank = template_bank(cfg, &f)?;
    let dir = out.join("dtw");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    FeatureMatrix::from_rows(&dtw_rows(&f.train, &bank, cfg.dtw.band)?)?
        .save(&dir.join("train.dtwf"))?;
    if !f.test.is_empty() {
        FeatureMatrix::from_rows(&dtw_rows(&f.test, &bank, cfg.dtw.band)?)?
            .save(&dir.join("test.dtwf"))?;
    }
    let manifest = DtwManifest {
        bank_seed: bank.seed,
        source: bank.source,
        feature_set: cfg.features,
        band: cfg.dtw.band,
        template_ids: bank_ids(&bank),
        train_labels: labels_of(&f.train),
        test_labels: labels_of(&f.test),
    };
    write_json(&dir.join("features.json"), &manifest)?;
    Ok("dtw-features")
}

/// A fold model plus its training curve.
struct Fitted<M> {
    model: M,
    history: Option<TrainHistory>,
}

impl<X: ?Sized, M: Classifier<X>> Classifier<X> for Fitted<M> {
    fn classify(&self, x: &X) -> usize {
        self.model.classify(x)
    }
}

#[derive(Serialize, Deserialize)]
struct CvSummary {
    classifier: ClassifierKind,
    folds: usize,
    stratified: bool,
    fold_sizes: Vec<usize>,
    fold_accuracies: Vec<f64>,
    avg_accuracy: f64,
    template_ids: Option<Vec<String>>,
    histories: Vec<Option<TrainHistory>>,
}

fn model_path(out: &Path, fold: usize, kind: ClassifierKind) -> PathBuf {
    let ext = match kind {
        ClassifierKind::Rnn => "rnn",
        _ => "svm",
    };
    out.join("models").join(format!("fold{fold:02}.{ext}"))
}

fn flatten_all(seqs: &[FeatureSequence], frames: usize) -> Result<Vec<Vec<f64>>> {
    seqs.iter().map(|s| flatten_trial(s, frames)).collect()
}

fn cmd_train(cfg: &PipelineConfig, out: &Path) -> Result<&'static str> {
    let f = split_features(cfg, None, None)?;
    if f.train.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    if let Some(n) = &f.normalizer {
        n.save(&out.join("normalizer.json"))?;
    }
    f.rq.save(&out.join("rq_config.json"))?;
    fs::create_dir_all(out.join("models")).map_err(|e| Error::io(out.join("models"), e))?;
    let labels = labels_of(&f.train);
    let svm_trainer = |tx: &[&Vec<f64>], ty: &[usize], _: &[&Vec<f64>], _: &[usize]| {
        train_svm(tx, ty, &cfg.svm).map(|model| Fitted {
            model,
            history: None,
        })
    };
    let mut template_ids = None;
    let (cv_meta, fold_accuracies, avg, histories) = match cfg.classifier {
        ClassifierKind::Svm | ClassifierKind::SvmDtw => {
            let xs = if cfg.classifier == ClassifierKind::Svm {
                flatten_all(&f.train, cfg.variant.target_len)?
            } else {
                let bank = template_bank(cfg, &f)?;
                template_ids = Some(bank_ids(&bank));
                dtw_rows(&f.train, &bank, cfg.dtw.band)?
            };
            let cv: CvOutcome<Fitted<SvmModel>> =
                cross_validate(&xs, &labels, cfg.folds, cfg.seed, svm_trainer)?;
            for (i, m) in cv.models.iter().enumerate() {
                m.model.save(&model_path(out, i, cfg.classifier))?;
            }
            (
                cv.plan,
                cv.fold_accuracies,
                cv.avg_accuracy,
                vec![None; cfg.folds],
            )
        }
        ClassifierKind::Rnn => {
            let rnn = cfg.rnn;
            let cv = cross_validate(&f.train, &labels, cfg.folds, cfg.seed, |tx, ty, hx, hy| {
                let val = rnn.early_stop_patience.map(|_| (hx, hy));
                train_rnn(tx, ty, val, &rnn).map(|(model, h)| Fitted {
                    model,
                    history: Some(h),
                })
            })?;
            for (i, m) in cv.models.iter().enumerate() {
                m.model.save(&model_path(out, i, cfg.classifier))?;
            }
            let histories = cv.models.into_iter().map(|m| m.history).collect();
            (cv.plan, cv.fold_accuracies, cv.avg_accuracy, histories)
        }
    };
    log::info!("average cross-validation accuracy {avg:.4}");
    let summary = CvSummary {
        classifier: cfg.classifier,
        folds: cfg.folds,
        stratified: cv_meta.stratified,
        fold_sizes: cv_meta.sizes(),
        fold_accuracies,
        avg_accuracy: avg,
        template_ids,
        histories,
    };
    write_json(&out.join("cv.json"), &summary)?;
    Ok("train")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn cmd_evaluate(data: Option<PathBuf>, out: &Path, jobs: Option<usize>) -> Result<()> {
    let train_manifest: RunManifest = read_json(&manifest_path(out, "train"))?;
    let mut cfg = train_manifest.config;
    if data.is_some() {
        cfg.data = data;
    }
    cfg.validate()?;

    let normalizer = if cfg.normalize.enabled {
        let n = Normalizer::load(&out.join("normalizer.json"))?;
        let leaked: BTreeSet<_> = n
            .fit_signers
            .iter()
            .filter(|s| cfg.split.is_test(**s))
            .collect();
        if !leaked.is_empty() {
            let names: Vec<String> = leaked.iter().map(|s| s.to_string()).collect();
            return Err(Error::config(
                "normalizer.fit_signers",
                format!("normalizer was fit on test signers {}", names.join(", ")),
            ));
        }
        Some(n)
    } else {
        None
    };
    let rq = RqConfig::load(&out.join("rq_config.json"))?;
    let cv: CvSummary = read_json(&out.join("cv.json"))?;
    let f = split_features(&cfg, normalizer, Some(rq))?;
    if f.test.is_empty() {
        return Err(Error::EmptyInput("test split"));
    }
    let labels = labels_of(&f.test);
    let report: EvalReport = match cfg.classifier {
        ClassifierKind::Svm | ClassifierKind::SvmDtw => {
            let models = (0..cfg.folds)
                .map(|i| SvmModel::load(&model_path(out, i, cfg.classifier)))
                .collect::<Result<Vec<_>>>()?;
            let xs = if cfg.classifier == ClassifierKind::Svm {
                flatten_all(&f.test, cfg.variant.target_len)?
            } else {
                let bank = template_bank(&cfg, &f)?;
                if Some(bank_ids(&bank)) != cv.template_ids {
                    return Err(Error::Invariant(
                        "DTW templates differ from the ones used in training".into(),
                    ));
                }
                dtw_rows(&f.test, &bank, cfg.dtw.band)?
            };
            for (m, x) in models.iter().zip(xs.iter().take(1)) {
                if m.width() != x.len() {
                    return Err(Error::Length {
                        expected: m.width(),
                        got: x.len(),
                    });
                }
            }
            evaluate(&models, &cv.fold_accuracies, &xs, &labels, NUM_CLASSES)?
        }
        ClassifierKind::Rnn => {
            let models = (0..cfg.folds)
                .map(|i| RnnModel::load(&model_path(out, i, cfg.classifier)))
                .collect::<Result<Vec<_>>>()?;
            if let Some(m) = models.first() {
                if m.dims.input != f.test[0].width() {
                    return Err(Error::Length {
                        expected: m.dims.input,
                        got: f.test[0].width(),
                    });
                }
            }
            evaluate(&models, &cv.fold_accuracies, &f.test, &labels, NUM_CLASSES)?
        }
    };
    report.save(out)?;
    log::info!("best test accuracy {:.4}", report.best_test_accuracy);
    write_manifest(out, "evaluate", &cfg, jobs)
}

/// Human-readable summary of `report.json`.
pub fn summarize(report: &EvalReport) -> String {
    let mut s = String::new();
    let pct = |v: f64| format!("{:.2}%", 100.0 * v);
    let _ = writeln!(s, "test trials            {}", report.test_count);
    let _ = writeln!(s, "average CV accuracy    {}", pct(report.avg_cv_accuracy));
    let _ = writeln!(
        s,
        "best test accuracy     {} (fold {})",
        pct(report.best_test_accuracy),
        report.best_fold
    );
    let _ = writeln!(s, "fold test accuracies");
    for (i, (cv, test)) in report
        .fold_accuracies
        .iter()
        .zip(&report.test_accuracies)
        .enumerate()
    {
        let _ = writeln!(
            s,
            "  fold {i:2}  cv {:>8}  test {:>8}",
            pct(*cv),
            pct(*test)
        );
    }
    let _ = writeln!(s, "per-class top-1 (classes present in test)");
    for (label, acc) in report.class_labels.iter().zip(&report.per_class_top1) {
        if let Some(a) = acc {
            let _ = writeln!(s, "  {label:<32} {}", pct(*a));
        }
    }
    s
}

fn cmd_report(out: &Path) -> Result<&'static str> {
    let report: EvalReport = read_json(&out.join("report.json"))?;
    let text = summarize(&report);
    print!("{text}");
    let path = out.join("report.txt");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok("report")
}
