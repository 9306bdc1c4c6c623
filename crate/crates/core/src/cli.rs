//! Command-line entry point: `make-data`, `train`, `infer`, `evaluate`, `separate`.
//!
//! Every output that records a run (checkpoint, report, dataset config)
//! embeds the effective flags, so results can be traced to their invocation.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::datagen::{make_dataset, DatasetConfig};
use crate::dataset::{write_manifest, Manifest, ManifestEntry};
use crate::dsp::{read_wav, write_wav, FeatureConfig, WavEncoding};
use crate::error::{Error, Result};
use crate::metrics::{CollarSpec, MetricThresholds, MetricsReport};
use crate::network::{predict_tags, MaskStack};
use crate::pipeline::{evaluate_fold, infer_entry, train_on_manifest, Model};
use crate::pooling::Pooling;
use crate::postprocess::{events_from_masks, write_event_csv, DetectedEvent, DetectionParams, PostOrder};
use crate::separation::{separate_classes, separated_file_name};
use crate::tensor_io::{load_tensor, save_tensor};
use crate::training::{Checkpoint, CheckpointMeta, TrainConfig};

pub const EXIT_OK: i32 = 0;
/// Runtime failure not covered below (bad values, shape mismatches, NaN loss).
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_UNKNOWN_FLAG: i32 = 2;
pub const EXIT_MISSING_FLAG: i32 = 3;
/// Unreadable or unwritable files, malformed audio, checkpoints or tensors.
pub const EXIT_FILE: i32 = 4;
/// A manifest that is malformed or inconsistent with the request.
pub const EXIT_DATASET: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "wsed", version, about = "Weakly-supervised sound event detection and separation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    MakeData(MakeDataArgs),
    /// Train a network on every fold but the held-out one.
    Train(TrainArgs),
    /// Write detected events (CSV) and optionally the raw masks.
    Infer(InferArgs),
    /// Score a held-out fold at tagging, frame, event and T-F level.
    Evaluate(EvaluateArgs),
    /// Resynthesize one waveform per detected class.
    Separate(SeparateArgs),
}

#[derive(Debug, Args, Serialize)]
struct MakeDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 400)]
    clips: usize,
    /// Event-to-background SNR in dB; a comma-separated list cycles per fold round.
    #[arg(long, value_delimiter = ',', default_value = "0", allow_negative_numbers = true)]
    snr: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    folds: usize,
    #[arg(long, default_value_t = 5.0)]
    clip_seconds: f64,
    #[arg(long, default_value_t = 3)]
    events_per_clip: usize,
    #[arg(long, default_value_t = 16000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PoolingArg {
    Gmp,
    Gap,
    Gwrp,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Held-out fold; all other folds train.
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[arg(long, value_enum, default_value_t = PoolingArg::Gwrp)]
    pooling: PoolingArg,
    /// GWRP decay.
    #[arg(long, default_value_t = 0.995)]
    r: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 24)]
    batch: usize,
    /// Network size.
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    net: Preset,
    /// Feature front end.
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    features: Preset,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct DetectionArgs {
    #[arg(long, default_value_t = 0.5)]
    tag_threshold: f64,
    #[arg(long, default_value_t = 0.2)]
    hi: f64,
    #[arg(long, default_value_t = 0.1)]
    lo: f64,
    #[arg(long, default_value_t = 10)]
    min_dur_frames: usize,
    #[arg(long, default_value_t = 10)]
    min_gap_frames: usize,
}

impl DetectionArgs {
    fn params(&self) -> DetectionParams {
        DetectionParams {
            tag_threshold: self.tag_threshold,
            hi: self.hi,
            lo: self.lo,
            min_frames: self.min_dur_frames,
            min_gap_frames: self.min_gap_frames,
            order: PostOrder::JoinThenFilter,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct InferArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Event CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Restrict to one fold; default is every clip.
    #[arg(long)]
    fold: Option<usize>,
    /// Directory receiving one `<clip>.masks` tensor (classes × frames × mels) per clip.
    #[arg(long)]
    masks_out: Option<PathBuf>,
    /// Skip the network and post-process previously dumped masks from this directory.
    #[arg(long, conflicts_with = "masks_out")]
    from_masks: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    detection: DetectionArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[command(flatten)]
    #[serde(flatten)]
    detection: DetectionArgs,
    #[arg(long, default_value_t = 0.2)]
    frame_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    tf_threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct SeparateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, required_unless_present = "wav")]
    manifest: Option<PathBuf>,
    /// Separate a single file instead of manifest clips.
    #[arg(long, conflicts_with = "manifest")]
    wav: Option<PathBuf>,
    #[arg(long)]
    fold: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    tag_threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `argv` (including the program name), runs the subcommand and returns
/// the process exit code. Diagnostics go to stderr as a single line.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return EXIT_OK;
                }
                ErrorKind::MissingRequiredArgument | ErrorKind::MissingSubcommand => EXIT_MISSING_FLAG,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_MISSING_FLAG,
                _ => EXIT_UNKNOWN_FLAG,
            };
            eprintln!("error: {}", one_line(&e.to_string()));
            return code;
        }
    };
    match run(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            exit_code(&e)
        }
    }
}

/// Clap's message up to the usage block, folded onto one line.
fn one_line(s: &str) -> String {
    s.lines()
        .take_while(|l| !l.starts_with("Usage:"))
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
        .trim_start_matches("error: ")
        .to_string()
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. }
        | Error::Wav(_)
        | Error::UnsupportedAudio(_)
        | Error::Format(_)
        | Error::Version { .. }
        | Error::Checksum { .. }
        | Error::Json(_) => EXIT_FILE,
        Error::Dataset(_) => EXIT_DATASET,
        _ => EXIT_FAILURE,
    }
}

fn run(cmd: &Command) -> Result<()> {
    let provenance = serde_json::to_value(cmd)?;
    match cmd {
        Command::MakeData(a) => make_data(a, provenance),
        Command::Train(a) => train_cmd(a, provenance),
        Command::Infer(a) => infer_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a, provenance),
        Command::Separate(a) => separate_cmd(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn make_data(a: &MakeDataArgs, provenance: serde_json::Value) -> Result<()> {
    let cfg = DatasetConfig {
        n_classes: a.classes,
        n_clips: a.clips,
        snr_db: a.snr.clone(),
        folds: a.folds,
        seed: a.seed,
        sample_rate: a.sample_rate,
        clip_seconds: a.clip_seconds,
        events_per_clip: a.events_per_clip,
    };
    create_dir(&a.out)?;
    let entries = make_dataset(&cfg, &a.out)?;
    write_manifest(&a.out.join("manifest.jsonl"), &entries)?;
    write_json(
        &a.out.join("dataset.json"),
        &serde_json::json!({ "run": provenance, "config": cfg }),
    )?;
    eprintln!("wrote {} clips to {}", entries.len(), a.out.display());
    Ok(())
}

fn feature_preset(p: Preset) -> FeatureConfig {
    match p {
        Preset::Desk => FeatureConfig::desk(),
        Preset::Paper => FeatureConfig::paper(),
    }
}

fn train_cmd(a: &TrainArgs, provenance: serde_json::Value) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let pooling = match a.pooling {
        PoolingArg::Gmp => Pooling::Gmp,
        PoolingArg::Gap => Pooling::Gap,
        PoolingArg::Gwrp => Pooling::gwrp(a.r)?,
    };
    let cfg = TrainConfig {
        batch_size: a.batch,
        lr: a.lr,
        epochs: a.epochs,
        pooling,
        seed: a.seed,
        fold: a.fold,
        ..Default::default()
    };
    let net = match a.net {
        Preset::Desk => "desk",
        Preset::Paper => "paper",
    };
    let ckpt = train_on_manifest(&manifest, &feature_preset(a.features), net, &cfg, provenance, |e, l| {
        eprintln!("epoch {e:>3}  loss {l:.6}");
    })?;
    ckpt.save(&a.out)?;
    let log_path = loss_log_path(&a.out);
    let mut log = String::from("epoch,loss\n");
    for (i, l) in ckpt.meta.loss_log.iter().enumerate() {
        log.push_str(&format!("{},{l}\n", i + 1));
    }
    fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;
    Ok(())
}

/// `<ckpt>.loss.csv`, next to the checkpoint.
pub fn loss_log_path(ckpt: &Path) -> PathBuf {
    let mut name = ckpt.file_name().unwrap_or_default().to_os_string();
    name.push(".loss.csv");
    ckpt.with_file_name(name)
}

fn selected<'a>(manifest: &'a Manifest, fold: Option<usize>) -> Result<Vec<&'a ManifestEntry>> {
    let out: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| fold.map_or(true, |f| e.fold == f))
        .collect();
    if out.is_empty() {
        return Err(Error::Dataset(format!("no clips selected (fold {fold:?})")));
    }
    Ok(out)
}

/// File name of a clip's mask dump inside `--masks-out`.
pub fn mask_file_name(clip_id: &str) -> String {
    format!("{clip_id}.masks")
}

fn infer_cmd(a: &InferArgs) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let params = a.detection.params();
    params.validate()?;
    let mut model = Model::from_checkpoint(&ckpt)?;
    if let Some(dir) = &a.masks_out {
        create_dir(dir)?;
    }
    let mut rows: Vec<(String, Vec<DetectedEvent>)> = Vec::new();
    for entry in selected(&manifest, a.fold)? {
        let events = match &a.from_masks {
            Some(dir) => events_from_dump(&dir.join(mask_file_name(&entry.clip_id)), &ckpt.meta, &params)?,
            None => {
                let inf = infer_entry(&mut model, &manifest, entry, &params)?;
                if let Some(dir) = &a.masks_out {
                    let m = &inf.masks;
                    save_tensor(
                        dir.join(mask_file_name(&entry.clip_id)),
                        &[m.n_classes, m.n_frames, m.n_mels],
                        &m.data,
                    )?;
                }
                inf.events
            }
        };
        rows.push((entry.clip_id.clone(), events));
    }
    let f = File::create(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut w = BufWriter::new(f);
    write_event_csv(&mut w, &rows, &ckpt.meta.class_names)
        .and_then(|()| w.flush())
        .map_err(|e| Error::io(&a.out, e))
}

/// Post-processes a mask dump exactly as live inference would.
pub fn events_from_dump(path: &Path, meta: &CheckpointMeta, params: &DetectionParams) -> Result<Vec<DetectedEvent>> {
    let t = load_tensor(path)?;
    let [k, frames, mels] = t.dims[..] else {
        return Err(Error::Shape(format!("{}: expected a rank-3 mask dump", path.display())));
    };
    let masks = MaskStack::new(t.data, k, frames, mels)?;
    let tags = predict_tags(&masks, &meta.train.pooling)?;
    events_from_masks(&masks, &tags, meta.features.hop_seconds(), params)
}

/// Body of the `evaluate` JSON report.
#[derive(Debug, Serialize)]
pub struct EvaluationReport<'a> {
    pub run: serde_json::Value,
    pub checkpoint: &'a CheckpointMeta,
    pub fold: usize,
    pub n_clips: usize,
    pub thresholds: MetricThresholds,
    pub detection: DetectionParams,
    pub metrics: MetricsReport,
}

fn evaluate_cmd(a: &EvaluateArgs, provenance: serde_json::Value) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let mut model = Model::from_checkpoint(&ckpt)?;
    let params = a.detection.params();
    let thresholds = MetricThresholds {
        tag_threshold: a.detection.tag_threshold,
        frame_threshold: a.frame_threshold,
        tf_threshold: a.tf_threshold,
        collars: CollarSpec::default(),
    };
    let ev = evaluate_fold(&mut model, &manifest, a.fold, &params, &thresholds)?;
    let report = EvaluationReport {
        run: provenance,
        checkpoint: &ckpt.meta,
        fold: a.fold,
        n_clips: ev.inferences.len(),
        thresholds,
        detection: params,
        metrics: ev.metrics,
    };
    write_json(&a.report, &report)?;
    let m = &report.metrics;
    eprintln!(
        "tagging F1 {:.3}  frame F1 {:.3}  event F1 {:.3}  T-F F1 {:.3}",
        m.tagging.f1, m.frame.f1, m.event.f1, m.tf.f1
    );
    Ok(())
}

fn separate_cmd(a: &SeparateArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let mut model = Model::from_checkpoint(&ckpt)?;
    create_dir(&a.out)?;
    let inputs: Vec<(String, PathBuf)> = match (&a.wav, &a.manifest) {
        (Some(w), _) => {
            let stem = w.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            vec![(stem, w.clone())]
        }
        (None, Some(m)) => {
            let manifest = Manifest::load(m)?;
            selected(&manifest, a.fold)?
                .into_iter()
                .map(|e| (e.clip_id.clone(), manifest.resolve(&e.mixture)))
                .collect()
        }
        (None, None) => return Err(Error::InvalidArgument("need --manifest or --wav".into())),
    };
    for (clip_id, path) in inputs {
        let wave = read_wav(&path)?;
        let logmel = model.fx.log_mel(&wave)?;
        let masks = model.net.infer(&logmel)?;
        let tags = predict_tags(&masks, &model.pooling)?;
        let classes = crate::postprocess::tagging_gate(&tags, a.tag_threshold);
        let spec = model.fx.spectrogram(&wave)?;
        let outs = separate_classes(
            &masks,
            &classes,
            &spec,
            &model.fx.filterbank,
            &model.fx.window,
            wave.samples.len(),
        )?;
        for (k, w) in outs {
            let file = a.out.join(separated_file_name(&clip_id, &model.class_names[k]));
            write_wav(&file, &w, WavEncoding::Float32)?;
        }
    }
    Ok(())
}
