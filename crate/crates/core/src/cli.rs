//! Command implementations behind the `cognitraj` binary.
//!
//! Every flag overrides exactly one [`RunConfig`] field; the config file
//! (TOML) supplies the rest. Errors are reported as a single JSON line.

use crate::eval::{emit_plot_data, eval_missing, prepare_window, EvalError, Variant, TRAIN25_FRACTION};
use crate::model::{train, write_curve_csv, Model, ModelConfig, ModelError, SceneFeatures, TrainConfig};
use crate::scene::{
    ingest_csv, make_windows, read_windows_jsonl, subsample_training, write_windows_jsonl, SceneError, SceneWindow,
    TargetPolicy, WindowConfig,
};
use crate::synth::{synth_windows, SynthKind};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("invalid value for {flag}: {message}")]
    Flag { flag: &'static str, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Flag { .. } | CliError::Usage(_) => "usage",
            CliError::Scene(_) => "scene",
            CliError::Model(_) => "model",
            CliError::Eval(_) => "eval",
            CliError::File { .. } | CliError::Io(_) => "io",
            CliError::Json(_) => "json",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Flag { .. } | CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable form, one line.
    pub fn json_line(&self) -> String {
        let mut obj = serde_json::json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            CliError::Config(v) => obj["violations"] = serde_json::json!(v),
            CliError::Flag { flag, .. } => obj["flag"] = serde_json::json!(flag),
            _ => {}
        }
        obj.to_string()
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub kind: SynthKind,
    pub n: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            kind: SynthKind::ConstantVelocity,
            n: 32,
        }
    }
}

/// Complete, validated settings of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds model initialization, shuffling, subsampling and synthesis.
    pub seed: u64,
    /// Worker cap; `None` uses every core.
    pub threads: Option<usize>,
    /// Fraction of training windows kept.
    pub fraction: f64,
    pub variant: Variant,
    pub out: Option<PathBuf>,
    /// Frames between window starts at ingestion; `None` is non-overlapping.
    pub stride_frames: Option<usize>,
    /// Also write an SVG overlay from `predict`.
    pub svg: bool,
    pub synth: SynthSettings,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            fraction: 1.0,
            variant: Variant::Complete,
            out: None,
            stride_frames: None,
            svg: true,
            synth: SynthSettings::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(vec![e.message().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::File {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Every violated field, across all sections.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            v.push(format!("fraction must be in (0, 1], got {}", self.fraction));
        }
        if self.threads == Some(0) {
            v.push("threads must be at least 1".to_string());
        }
        if self.synth.n == 0 {
            v.push("synth.n must be at least 1".to_string());
        }
        if self.stride_frames == Some(0) {
            v.push("stride_frames must be at least 1".to_string());
        }
        v.extend(self.model.violations().into_iter().map(|m| format!("model: {m}")));
        v.extend(self.train.violations().into_iter().map(|m| format!("train: {m}")));
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(v))
        }
    }

    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            t_h: self.model.t_h,
            t_f: self.model.t_f,
            dt: self.model.dt,
            stride_frames: self.stride_frames,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cognitraj", version, about = "Safety-aware multimodal trajectory prediction")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// complete, drop3, drop5, drop8 or train25.
    #[arg(long, global = true)]
    pub variant: Option<String>,
    /// Fraction of training windows kept, in (0, 1].
    #[arg(long, global = true)]
    pub fraction: Option<f64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic window corpus (JSON lines).
    Synth {
        #[arg(long)]
        kind: Option<SynthKind>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Read a trajectory CSV and cut it into windows (JSON lines).
    Ingest {
        input: PathBuf,
        /// Only use this agent as the target.
        #[arg(long)]
        target: Option<u64>,
    },
    /// Compute model inputs for every window (JSON lines).
    Featurize { windows: PathBuf },
    /// Train on a window corpus; writes `model.ckpt` and `curve.csv` into `--out`.
    Train { windows: PathBuf },
    /// Score a checkpoint on a window corpus; writes the report CSV.
    Eval { checkpoint: PathBuf, windows: PathBuf },
    /// Predict one window; writes plot data into `--out` when given.
    Predict {
        checkpoint: PathBuf,
        windows: PathBuf,
        /// Zero-based window index.
        #[arg(long, default_value_t = 0)]
        window: usize,
    },
}

/// Applies config file and flag overrides, then validates.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(v) = &cli.variant {
        cfg.variant = v.parse().map_err(|message| CliError::Flag {
            flag: "--variant",
            message,
        })?;
    }
    if let Some(f) = cli.fraction {
        cfg.fraction = f;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if cfg.variant == Variant::Train25 && cfg.fraction == 1.0 {
        cfg.fraction = TRAIN25_FRACTION;
    }
    if let Command::Synth { kind, n } = &cli.command {
        if let Some(k) = kind {
            cfg.synth.kind = *k;
        }
        if let Some(n) = n {
            cfg.synth.n = *n;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    if let Some(t) = cfg.threads {
        // Ignored when a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Synth { .. } => cmd_synth(&cfg),
        Command::Ingest { input, target } => cmd_ingest(&cfg, input, *target),
        Command::Featurize { windows } => cmd_featurize(&cfg, windows),
        Command::Train { windows } => cmd_train(&cfg, windows),
        Command::Eval { checkpoint, windows } => cmd_eval(&cfg, checkpoint, windows),
        Command::Predict {
            checkpoint,
            windows,
            window,
        } => cmd_predict(&cfg, checkpoint, windows, *window),
    }
}

fn open_out(cfg: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let f = File::create(p).map_err(|source| CliError::File {
                path: p.clone(),
                source,
            })?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn out_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Usage(format!("{command} needs --out DIR")))?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn read_windows(path: &Path) -> Result<Vec<SceneWindow>> {
    let f = File::open(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(read_windows_jsonl(BufReader::new(f))?)
}

fn summary(value: serde_json::Value) {
    println!("{value}");
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let windows = synth_windows(cfg.synth.kind, cfg.synth.n, cfg.seed, &cfg.window_config())?;
    write_windows_jsonl(&windows, open_out(cfg)?)?;
    log::info!("wrote {} {} windows", windows.len(), cfg.synth.kind);
    Ok(())
}

pub fn cmd_ingest(cfg: &RunConfig, input: &Path, target: Option<u64>) -> Result<()> {
    let tracks = ingest_csv(input, cfg.model.dt)?;
    let policy = target.map_or(TargetPolicy::Every, TargetPolicy::Agent);
    let w = make_windows(&tracks, &cfg.window_config(), policy)?;
    write_windows_jsonl(&w.windows, open_out(cfg)?)?;
    if cfg.out.is_some() {
        summary(serde_json::json!({
            "tracks": tracks.len(),
            "windows": w.windows.len(),
            "skipped_tracks": w.skipped_tracks,
        }));
    }
    Ok(())
}

pub fn cmd_featurize(cfg: &RunConfig, windows: &Path) -> Result<()> {
    let windows = read_windows(windows)?;
    let features: Vec<SceneFeatures> = windows
        .par_iter()
        .map(|w| crate::model::featurize(w, &cfg.model))
        .collect::<std::result::Result<_, _>>()?;
    let mut out = open_out(cfg)?;
    for f in &features {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, windows: &Path) -> Result<()> {
    let dir = out_dir(cfg, "train")?;
    let all = read_windows(windows)?;
    let kept = subsample_training(&all, cfg.fraction, cfg.seed)?;
    if kept.is_empty() {
        return Err(ModelError::EmptyTrainingSet.into());
    }
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    let features: Vec<SceneFeatures> = kept
        .par_iter()
        .map(|w| model.featurize(w))
        .collect::<std::result::Result<_, _>>()?;
    let outcome = train(&mut model, &features, &cfg.train_config())?;
    let ckpt = dir.join("model.ckpt");
    model.save(&ckpt)?;
    write_curve_csv(&outcome.curve, BufWriter::new(File::create(dir.join("curve.csv"))?))?;
    let last = outcome.curve.last();
    summary(serde_json::json!({
        "checkpoint": ckpt,
        "windows_total": all.len(),
        "windows_used": kept.len(),
        "fraction": cfg.fraction,
        "epochs": outcome.curve.len(),
        "steps": outcome.steps,
        "final_loss": last.map(|l| l.total),
        "aborted": outcome.aborted,
    }));
    if let Some(reason) = outcome.aborted {
        log::error!("training aborted: {reason}");
    }
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, windows: &Path) -> Result<()> {
    let model = Model::load(checkpoint)?;
    let windows = read_windows(windows)?;
    let report = eval_missing(&model, &windows, cfg.variant)?;
    report.write_csv(open_out(cfg)?)?;
    Ok(())
}

pub fn cmd_predict(cfg: &RunConfig, checkpoint: &Path, windows: &Path, index: usize) -> Result<()> {
    let model = Model::load(checkpoint)?;
    let windows = read_windows(windows)?;
    let window = windows.get(index).ok_or_else(|| CliError::Flag {
        flag: "--window",
        message: format!("index {index} out of range for {} windows", windows.len()),
    })?;
    let prepared = prepare_window(window, cfg.variant)?;
    let pred = model.predict(&model.featurize(&prepared)?)?;
    match &cfg.out {
        Some(dir) => {
            let files = emit_plot_data(&prepared, &pred, &model.config.safety, dir, &format!("window{index}"), cfg.svg)?;
            fs::write(dir.join(format!("window{index}_prediction.json")), serde_json::to_string(&pred)?)?;
            summary(serde_json::json!({
                "agents_csv": files.agents_csv,
                "modes_csv": files.modes_csv,
                "svg": files.svg,
            }));
        }
        None => summary(serde_json::to_value(&pred)?),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("cognitraj").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn toml_sections_fill_the_run_config() {
        let cfg = RunConfig::from_toml("seed = 4\nvariant = \"drop5\"\n[model]\nwidth = 8\nheads = 2\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.variant, Variant::Drop5);
        assert_eq!(cfg.model.width, 8);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train_config().seed, 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("sed = 4\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn every_violation_is_listed() {
        let cfg = RunConfig {
            fraction: 0.0,
            threads: Some(0),
            ..RunConfig::default()
        };
        match cfg.validate() {
            Err(CliError::Config(v)) => assert_eq!(v.len(), 2, "{v:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flags_override_the_file() {
        let cli = parse(&["--seed", "9", "--fraction", "0.5", "synth", "--n", "3"]);
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!((cfg.seed, cfg.fraction, cfg.synth.n), (9, 0.5, 3));
    }

    #[test]
    fn train25_implies_a_quarter_of_the_data() {
        let cfg = resolve_config(&parse(&["--variant", "train25", "synth"])).unwrap();
        assert_eq!(cfg.fraction, TRAIN25_FRACTION);
        let cfg = resolve_config(&parse(&["--variant", "train25", "--fraction", "0.5", "synth"])).unwrap();
        assert_eq!(cfg.fraction, 0.5);
    }

    #[test]
    fn bad_variant_names_the_flag() {
        let err = resolve_config(&parse(&["--variant", "drop4", "synth"])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let line: serde_json::Value = serde_json::from_str(&err.json_line()).unwrap();
        assert_eq!(line["flag"], "--variant");
        assert_eq!(line["error"], "usage");
    }
}
