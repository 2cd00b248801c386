mod config;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use ptmf_core::checks::gradcheck_modules;
use ptmf_core::data::{dataset_dims, load_manifest, load_samples, synth_subjects, write_feature_file, write_synth_dataset, Sample, SynthSpec, Task};
use ptmf_core::dsp::{extract_lld_bundle, mfcc, read_wav, FrameConfig, MelConfig};
use ptmf_core::train::{ablation_csv, evaluate, run_ablation, train_with};
use ptmf_core::{Model, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use config::Layers;

#[derive(Debug)]
pub enum CliError {
    /// Bad input or configuration: exit 1.
    Invalid(String),
    /// Filesystem failure: exit 2.
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<ptmf_core::Error> for CliError {
    fn from(e: ptmf_core::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

type Result<T> = std::result::Result<T, CliError>;

/// Personality-aware multimodal depression detection.
#[derive(Parser, Debug)]
#[command(name = "ptmf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute MFCC and energy/ZCR features from 16-bit PCM WAV files.
    Extract(ExtractArgs),
    /// Write a synthetic dataset (features, manifest, prompts).
    Synth(SynthArgs),
    /// Train a model on a manifest and save the best checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a manifest; prints a JSON metrics report.
    Eval(EvalArgs),
    /// Train every ablation variant and print a CSV table.
    Ablate(AblateArgs),
    /// Finite-difference gradient check of every module.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum TaskArg {
    Binary,
    Ternary,
    Quinary,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Binary => Task::Binary,
            TaskArg::Ternary => Task::Ternary,
            TaskArg::Quinary => Task::Quinary,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FeatureKind {
    Mfcc,
    Lld,
    Both,
}

#[derive(Args, Debug, Serialize)]
struct ExtractArgs {
    /// A WAV file or a directory of them.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = FeatureKind::Both)]
    features: FeatureKind,
    #[arg(long, default_value_t = 25.0)]
    frame_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    hop_ms: f64,
    #[arg(long, default_value_t = 13)]
    n_mfcc: usize,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, value_enum, default_value_t = TaskArg::Binary)]
    task: TaskArg,
    /// Class mean offset of the audio and visual streams, in noise SDs.
    #[arg(long, default_value_t = 1.0)]
    class_sep: f64,
    /// Class mean offset of the personality embedding. [default: same as --class-sep]
    #[arg(long)]
    personality_sep: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Overrides of the model config. Only flags given on the command line
/// replace config-file values.
#[derive(Args, Debug, Serialize)]
struct ModelFlags {
    /// Flat TOML file of ModelConfig keys. [default: none]
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = ModelConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = ModelConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = ModelConfig::default().lr)]
    lr: f64,
    #[arg(long, default_value_t = ModelConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = ModelConfig::default().dropout)]
    dropout: f64,
    #[arg(long, default_value_t = ModelConfig::default().val_fraction)]
    val_fraction: f64,
    /// Wav2Vec stream only. [default: off]
    #[arg(long, default_value_t = false)]
    no_multi_audio: bool,
    /// Plain concatenation instead of co-attention. [default: off]
    #[arg(long, default_value_t = false)]
    no_co_att: bool,
    /// OpenFace stream only. [default: off]
    #[arg(long, default_value_t = false)]
    no_multi_visual: bool,
    /// Classify from personality and fused features without the interaction module. [default: off]
    #[arg(long, default_value_t = false)]
    no_ptmfim: bool,
    /// Any other config key, as KEY=VALUE; repeatable. [default: none]
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskArg::Binary)]
    task: TaskArg,
    #[command(flatten)]
    model: ModelFlags,
    /// Checkpoint path; the config is written next to it as `<out>.config.json`.
    #[arg(long, default_value = "model.ptmf")]
    out: PathBuf,
    /// Also write the JSON-lines epoch log here. [default: none]
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskArg::Binary)]
    task: TaskArg,
    /// Write the report here instead of standard output. [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct AblateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated tasks.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "binary")]
    tasks: Vec<TaskArg>,
    #[command(flatten)]
    model: ModelFlags,
    /// Write the CSV here instead of standard output. [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of standard output. [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

fn from_cli(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

fn resolve_config(flags: &ModelFlags, task: Option<Task>, m: &ArgMatches) -> Result<ModelConfig> {
    let mut layers = Layers::new();
    if let Some(path) = &flags.config {
        layers.apply_file(path)?;
    }
    for a in &flags.set {
        layers.apply_assignment(a)?;
    }
    if from_cli(m, "seed") {
        layers.apply("seed", flags.seed)?;
    }
    if from_cli(m, "epochs") {
        layers.apply("epochs", flags.epochs)?;
    }
    if from_cli(m, "lr") {
        layers.apply("lr", flags.lr)?;
    }
    if from_cli(m, "batch_size") {
        layers.apply("batch_size", flags.batch_size)?;
    }
    if from_cli(m, "dropout") {
        layers.apply("dropout", flags.dropout)?;
    }
    if from_cli(m, "val_fraction") {
        layers.apply("val_fraction", flags.val_fraction)?;
    }
    for (id, key) in [
        ("no_multi_audio", "multi_audio"),
        ("no_co_att", "co_att"),
        ("no_multi_visual", "multi_visual"),
        ("no_ptmfim", "ptmfim"),
    ] {
        if m.get_flag(id) {
            layers.apply(key, false)?;
        }
    }
    if let Some(t) = task {
        layers.apply("n_classes", t.n_classes())?;
    }
    layers.resolve()
}

fn echo<T: Serialize>(command: &str, args: &T, model: Option<&ModelConfig>) {
    #[derive(Serialize)]
    struct Resolved<'a, T> {
        command: &'a str,
        args: &'a T,
        #[serde(skip_serializing_if = "Option::is_none")]
        model: Option<&'a ModelConfig>,
    }
    let doc = Resolved { command, args, model };
    eprintln!("resolved config:\n{}", serde_json::to_string_pretty(&doc).expect("config serialises"));
}

fn load_data(manifest: &Path) -> Result<Vec<Sample>> {
    let records = load_manifest(manifest)?;
    Ok(load_samples(&records)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Io(format!("standard output: {e}")))
        }
    }
}

fn wav_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)
            .map_err(|e| io_err(input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    echo("extract", a, None);
    fs::create_dir_all(&a.out_dir).map_err(|e| io_err(&a.out_dir, e))?;
    let mut written = String::new();
    for path in wav_inputs(&a.input)? {
        let w = read_wav(&path)?;
        let fc = FrameConfig::from_ms(w.sample_rate(), a.frame_ms, a.hop_ms)?;
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        if matches!(a.features, FeatureKind::Mfcc | FeatureKind::Both) {
            let mc = MelConfig {
                n_mfcc: a.n_mfcc,
                ..MelConfig::default_for(w.sample_rate(), fc.frame_len)
            };
            let out = a.out_dir.join(format!("{stem}.mfcc.mpft"));
            write_feature_file(&mfcc(&w, &fc, &mc)?, &out)?;
            written.push_str(&format!("{}\n", out.display()));
        }
        if matches!(a.features, FeatureKind::Lld | FeatureKind::Both) {
            let out = a.out_dir.join(format!("{stem}.lld.mpft"));
            write_feature_file(&extract_lld_bundle(&w, &fc)?, &out)?;
            written.push_str(&format!("{}\n", out.display()));
        }
    }
    emit(None, &written)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    echo("synth", a, None);
    let mut spec = SynthSpec::new(a.n, a.task.into(), a.class_sep);
    if let Some(p) = a.personality_sep {
        spec.personality_sep = p;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let subjects = synth_subjects(&spec, &mut rng)?;
    let manifest = write_synth_dataset(&subjects, &a.out_dir)?;
    emit(None, &format!("{}\n", manifest.display()))
}

fn cmd_train(a: &TrainArgs, m: &ArgMatches) -> Result<()> {
    let task = from_cli(m, "task").then(|| Task::from(a.task));
    let mut cfg = resolve_config(&a.model, task, m)?;
    let samples = load_data(&a.manifest)?;
    cfg.set_stream_dims(dataset_dims(&samples)?);
    cfg.validate()?;
    echo("train", a, Some(&cfg));

    let mut log_text = String::new();
    let mut stdout_err = None;
    let outcome = train_with(&cfg, &samples, |e| {
        let line = serde_json::to_string(e).expect("epoch log serialises");
        log::info!(
            "epoch {} loss {:.4} train acc {:.3} val f1_task {:.3}",
            e.epoch,
            e.train_loss,
            e.train_acc,
            e.val_f1_task
        );
        if stdout_err.is_none() {
            stdout_err = emit(None, &format!("{line}\n")).err();
        }
        log_text.push_str(&line);
        log_text.push('\n');
    })?;
    if let Some(e) = stdout_err {
        return Err(e);
    }
    if let Some(p) = &a.log {
        fs::write(p, &log_text).map_err(|e| io_err(p, e))?;
    }
    outcome.model.save(&a.out)?;
    let last = outcome.log.last().expect("at least one epoch");
    eprintln!(
        "best epoch {} (val f1_task {:.4}, acc_task {:.4}); final train acc {:.4}; checkpoint {}",
        outcome.best_epoch,
        outcome.best_val.f1_task,
        outcome.best_val.acc_task,
        last.train_acc,
        a.out.display()
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let model = Model::load(&a.checkpoint)?;
    echo("eval", a, Some(model.config()));
    let samples = load_data(&a.manifest)?;
    let report = evaluate(&model, &samples, a.task.into())?;
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    emit(a.out.as_deref(), &(json + "\n"))
}

fn cmd_ablate(a: &AblateArgs, m: &ArgMatches) -> Result<()> {
    let mut cfg = resolve_config(&a.model, None, m)?;
    let samples = load_data(&a.manifest)?;
    cfg.set_stream_dims(dataset_dims(&samples)?);
    cfg.validate()?;
    echo("ablate", a, Some(&cfg));
    let tasks: Vec<Task> = a.tasks.iter().map(|&t| t.into()).collect();
    let rows = run_ablation(&cfg, &samples, &tasks, |r| {
        eprintln!(
            "{} {}: acc_task {:.4} f1_task {:.4}",
            r.task, r.variant, r.metrics.acc_task, r.metrics.f1_task
        );
    })?;
    emit(a.out.as_deref(), &ablation_csv(&rows))
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    echo("gradcheck", a, None);
    let checks = gradcheck_modules(a.seed)?;
    let json = serde_json::to_string_pretty(&checks).expect("report serialises");
    emit(a.out.as_deref(), &(json + "\n"))?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.report.passed()).map(|c| c.module).collect();
    for c in &checks {
        eprintln!("{:<13} max rel err {:.3e}", c.module, c.report.max_rel_err());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("gradient check failed for {}", failed.join(", "))))
    }
}

fn run(args: Vec<OsString>) -> ExitCode {
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = Cli::from_arg_matches(&matches).expect("matches come from the same definition");
    let sub = matches.subcommand().map(|(_, m)| m).expect("subcommand is required");
    let result = match &cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a, sub),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a, sub),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Invalid(_) => 1,
                CliError::Io(_) => 2,
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(std::env::args_os().collect())
}
