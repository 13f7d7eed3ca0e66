//! Command line: batch subcommands and the live service.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use glovelink::analytics::{UserSummary, USER_CSV_HEADER};
use glovelink::gesture::{evaluate, EvalReport, MlpModel, TrainConfig};
use glovelink::handmodel::{
    class_histogram, synth_dataset, LabeledSample, SynthParams, GESTURE_COUNT,
};
use glovelink::sessionio::{
    load_model, read_dataset_file, read_trace_file, save_model, write_dataset_file, write_trace_file,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{SessionConfig, CONFIG_ENV};
use crate::pipeline::simulate;
use crate::scripts::{script_trace, ScriptKind, ScriptParams};
use crate::server::Server;
use crate::trial::report_trace;

#[derive(Debug, Parser)]
#[command(name = "glovelink", version, about = "Glove teleoperation gateway and batch tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled gesture dataset (CSV).
    SynthData(SynthDataArgs),
    /// Train the gesture classifier; prints an evaluation report.
    Train(TrainArgs),
    /// Evaluate a model on a dataset.
    Eval(EvalArgs),
    /// Replay a hand trace through classifier, controller and simulated arm.
    Simulate(SimulateArgs),
    /// Summarize trials: one JSON line per trial, then the per-user CSV row.
    Report(ReportArgs),
    /// Write a scripted hand trace.
    Script(ScriptArgs),
    /// Run the live service.
    Serve(ServeArgs),
}

fn parse_counts(s: &str) -> Result<[usize; GESTURE_COUNT], String> {
    let v: Vec<usize> = s.split(',').map(|x| x.trim().parse::<usize>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<usize>| format!("expected {GESTURE_COUNT} counts, got {}", v.len()))
}

#[derive(Debug, Args)]
pub struct SynthDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Per-class counts in label order none,pinky,ring,fist,thumbs_up.
    #[arg(long, value_parser = parse_counts, default_value = "2074,1283,2501,1674,1945")]
    pub counts: [usize; GESTURE_COUNT],
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hold out this fraction of every class into `--test-out`.
    #[arg(long, requires = "test_out", conflicts_with = "test_counts")]
    pub split: Option<f64>,
    /// Held-out set path (with `--split` or `--test-counts`).
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    /// Generate an independent held-out set with these per-class counts.
    #[arg(long, value_parser = parse_counts, requires = "test_out")]
    pub test_counts: Option<[usize; GESTURE_COUNT]>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub learning_rate: f64,
    /// Evaluate on this dataset instead of the training data.
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Injected simulator latency, seconds (overrides the config).
    #[arg(long)]
    pub latency: Option<f64>,
    /// Classify landmarks with this model instead of using recorded gestures.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Session config (else $GLOVELINK_CONFIG, else the trace's own config).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long = "trial", required = true)]
    pub trials: Vec<PathBuf>,
    #[arg(long, default_value = "user")]
    pub user: String,
    /// Write the CSV table to this file instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScriptArgs {
    #[arg(long, value_enum, default_value_t = ScriptKind::Smooth)]
    pub kind: ScriptKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 12.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 120.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Attach synthetic landmarks matching the scripted gesture.
    #[arg(long)]
    pub landmarks: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

fn print_json(v: &impl Serialize) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

/// Per-class holdout: the first `round(frac * n_c)` samples of each class
/// (after a seeded shuffle) go to the second set.
pub fn split_per_class<T: Clone>(
    samples: &[LabeledSample<T>],
    frac: f64,
    seed: u64,
) -> (Vec<LabeledSample<T>>, Vec<LabeledSample<T>>) {
    let hist = class_histogram(samples);
    let mut take = hist.map(|n| (frac * n as f64).round() as usize);
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED));
    let mut held = vec![false; samples.len()];
    for i in idx {
        let c = samples[i].label.index();
        if take[c] > 0 {
            take[c] -= 1;
            held[i] = true;
        }
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (s, h) in samples.iter().zip(held) {
        if h { b.push(s.clone()) } else { a.push(s.clone()) }
    }
    (a, b)
}

fn shared_model(p: &Path) -> anyhow::Result<Arc<MlpModel<f64>>> {
    Ok(Arc::new(load_model::<f64>(p).with_context(|| format!("loading {}", p.display()))?))
}

fn synth_data(a: &SynthDataArgs) -> anyhow::Result<()> {
    let params = SynthParams::default();
    let data = synth_dataset::<f64>(&a.counts, a.seed, &params);
    let (train, test) = match (a.split, a.test_counts) {
        (Some(f), _) => {
            if !(0.0..1.0).contains(&f) {
                bail!("--split must be in [0, 1)");
            }
            split_per_class(&data, f, a.seed)
        }
        (None, Some(c)) => (data, synth_dataset::<f64>(&c, a.seed.wrapping_add(1), &params)),
        (None, None) => (data, Vec::new()),
    };
    write_dataset_file(&a.out, &train)?;
    if let Some(p) = &a.test_out {
        write_dataset_file(p, &test)?;
    }
    print_json(&serde_json::json!({
        "train": train.len(),
        "train_counts": class_histogram(&train),
        "test": test.len(),
        "test_counts": class_histogram(&test),
    }))
}

fn train_cmd(a: &TrainArgs) -> anyhow::Result<()> {
    let data = read_dataset_file::<f64>(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let cfg = TrainConfig {
        max_epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let model = glovelink::gesture::train(&data, &cfg)?;
    save_model(&a.out, &model).with_context(|| format!("writing {}", a.out.display()))?;
    let test = match &a.test {
        Some(p) => read_dataset_file::<f64>(p).with_context(|| format!("reading {}", p.display()))?,
        None => data,
    };
    print_json(&evaluate(&model, &test)?)
}

fn eval_cmd(a: &EvalArgs) -> anyhow::Result<EvalReport> {
    let model = load_model::<f64>(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let data = read_dataset_file::<f64>(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    Ok(evaluate(&model, &data)?)
}

fn simulate_cmd(a: &SimulateArgs) -> anyhow::Result<()> {
    let input = read_trace_file::<f64>(&a.trace).with_context(|| format!("reading {}", a.trace.display()))?;
    let env_set = std::env::var_os(CONFIG_ENV).is_some_and(|v| !v.is_empty());
    let mut cfg = if a.config.is_some() || env_set {
        SessionConfig::resolve(a.config.as_deref())?
    } else {
        serde_json::from_value::<SessionConfig>(input.header.config.clone())
            .ok()
            .filter(|c| c.validate().is_ok())
            .unwrap_or_default()
    };
    if let Some(l) = a.latency {
        cfg.sim.latency = l;
    }
    cfg.validate()?;
    let model = a.model.as_deref().map(shared_model).transpose()?;
    let out = simulate(&input, &cfg, model)?;
    write_trace_file(&a.out, out.header.config, &out.records).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct TrialLine<'a> {
    trial: &'a Path,
    #[serde(flatten)]
    summary: glovelink::analytics::TrialSummary,
}

fn report_cmd(a: &ReportArgs) -> anyhow::Result<()> {
    let mut summaries = Vec::new();
    for p in &a.trials {
        let trace = read_trace_file::<f64>(p).with_context(|| format!("reading {}", p.display()))?;
        let s = report_trace(&trace).with_context(|| format!("reporting {}", p.display()))?;
        print_json(&TrialLine { trial: p, summary: s })?;
        summaries.push(s);
    }
    let user = UserSummary::from_trials(&a.user, &summaries);
    let sink: Box<dyn Write> = match &a.csv {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(BufWriter::new(sink));
    w.write_record(USER_CSV_HEADER)?;
    w.write_record(user.csv_row())?;
    w.flush()?;
    Ok(())
}

fn script_cmd(a: &ScriptArgs) -> anyhow::Result<()> {
    if !(a.duration > 0.0 && a.rate > 0.0) {
        bail!("--duration and --rate must be positive");
    }
    let p = ScriptParams { kind: a.kind, duration: a.duration, rate: a.rate, seed: a.seed, landmarks: a.landmarks };
    let t = script_trace(&p);
    write_trace_file(&a.out, t.header.config, &t.records).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn serve_cmd(a: &ServeArgs) -> anyhow::Result<()> {
    let cfg = SessionConfig::resolve(a.config.as_deref())?;
    let model: Option<Arc<MlpModel<f64>>> = a.model.as_deref().map(shared_model).transpose()?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let server = Server::start(SocketAddr::new(a.bind, a.port), cfg, model).await?;
        eprintln!("listening on {}", server.ws_url());
        tokio::select! {
            r = server.wait() => r,
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::SynthData(a) => synth_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => print_json(&eval_cmd(a)?),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Script(a) => script_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}
