use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use ptpai::experiment::{self, DataSource, ExperimentConfig, Precision};
use ptpai::net::{load_checkpoint, save_checkpoint};
use ptpai::pipeline::{
    envelope_features, hop_for_count, ingest_matlab_records, read_dataset, segment_signal, write_dataset,
    DatasetManifest, Domain, DomainDataset, RecordSource,
};
use ptpai::synth::FaultType;
use ptpai::train::{fit, score, Method};
use ptpai::{Error, Float};

#[derive(Parser)]
#[command(name = "ptpai", version, about = "Partial-set transfer learning experiments for bearing fault diagnosis")]
struct Cli {
    /// More log output; repeat for debug messages.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment file; omitted keys come from the scenario preset.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any key by dotted path, e.g. `--set train.epochs=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (same as `--set output_dir=...`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self, scenario: Option<&str>) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref(), scenario, &self.set)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the task catalog.
    ListScenarios,
    /// Synthesize the benchmark's source and full target datasets.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Build a dataset from recorded MAT-files, one record per health state.
    Prepare(PrepareArgs),
    /// Train one method on dataset files and save its checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset with ground truth.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset manifest.
        #[arg(long)]
        data: PathBuf,
    },
    /// Run every configured method on one task, repeated.
    Run {
        /// Task name from `list-scenarios`.
        scenario: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the benchmark tasks and rank the methods.
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Args)]
struct PrepareArgs {
    /// Records as `STATE=PATH`, where STATE is NC, IRF, BF or ORF.
    #[arg(long = "record", value_name = "STATE=PATH", required = true)]
    records: Vec<String>,
    /// Array name, or a unique name suffix, of the channel to read.
    #[arg(long, default_value = "DE_time")]
    channel: String,
    /// `cwru-drive-end`, `jnu`, or a sample rate in Hz.
    #[arg(long, default_value = "cwru-drive-end", value_parser = parse_record_source)]
    source: RecordSource,
    #[arg(long, default_value_t = 1024)]
    segment: usize,
    /// Windows cut from each record.
    #[arg(long, default_value_t = 1200)]
    per_class: usize,
    /// Write a target-domain dataset with sealed labels.
    #[arg(long)]
    target: bool,
    /// Output data file; the manifest is written next to it.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value = "PTPAI")]
    method: Method,
    #[command(flatten)]
    config: ConfigArgs,
}

fn parse_record_source(s: &str) -> Result<RecordSource, String> {
    match s {
        "cwru-drive-end" => Ok(RecordSource::CwruDriveEnd),
        "jnu" => Ok(RecordSource::Jnu),
        hz => hz
            .parse::<f64>()
            .ok()
            .filter(|v| *v > 0.0)
            .map(RecordSource::Custom)
            .ok_or_else(|| format!("expected cwru-drive-end, jnu or a positive rate, got `{s}`")),
    }
}

fn generate(cfg: &ExperimentConfig) -> Result<()> {
    let DataSource::Synthetic(desk) = &cfg.data else {
        bail!("generate needs `data.kind = \"synthetic\"`");
    };
    let domains = desk.generate::<f32>(cfg.seed)?;
    for (name, ds, betas) in [
        ("source", &domains.source, &domains.source_betas),
        ("target", &domains.target_full.clone().seal(), &domains.target_betas),
    ] {
        let mut m = DatasetManifest::describe(ds, "");
        m.fs = Some(desk.fs);
        m.seed = Some(cfg.seed);
        m.betas = Some(betas.clone());
        let path = write_dataset(&cfg.output_dir.join(format!("{name}.bin")), ds, m)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn prepare(args: &PrepareArgs) -> Result<()> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for rec in &args.records {
        let (state, path) = rec
            .split_once('=')
            .with_context(|| format!("record `{rec}` is not of the form STATE=PATH"))?;
        let state: FaultType = state.parse()?;
        let signal = ingest_matlab_records::<f32>(Path::new(path), &args.channel, args.source)?;
        let hop = hop_for_count(signal.len(), args.segment, args.per_class)?;
        let segments = segment_signal(&signal, args.segment, hop)?;
        let features = envelope_features(&segments[..args.per_class])?;
        info!("{path}: {} windows of {} as {state}", args.per_class, args.segment);
        rows.push(features);
        labels.extend(std::iter::repeat_n(state.class_id(), args.per_class));
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    let features = ndarray::concatenate(ndarray::Axis(0), &views)?;
    let domain = if args.target { Domain::Target } else { Domain::Source };
    let mut ds = DomainDataset::labeled(features, labels, FaultType::ALL.len(), domain)?;
    if args.target {
        ds = ds.seal();
    }
    let mut m = DatasetManifest::describe(&ds, "");
    m.fs = Some(args.source.sample_rate());
    println!("{}", write_dataset(&args.out, &ds, m)?.display());
    Ok(())
}

fn train_typed<T: Float>(args: &TrainArgs, cfg: &ExperimentConfig) -> Result<()> {
    let (source, _) = read_dataset::<T>(&args.source)?;
    let (target, _) = read_dataset::<T>(&args.target)?;
    let tcfg = args.method.configure(&cfg.train);
    let (mut net, history) = fit(&tcfg, &source, &target)?;
    std::fs::create_dir_all(&cfg.output_dir).with_context(|| cfg.output_dir.display().to_string())?;
    let stem = args.method.name().to_lowercase();
    let ckpt = cfg.output_dir.join(format!("{stem}.ckpt"));
    save_checkpoint(&ckpt, &net)?;
    history.write(&cfg.output_dir.join(format!("{stem}.history.jsonl")))?;
    println!("{}", ckpt.display());
    if target.ground_truth().is_some() {
        let (b, f1) = score(&mut net, &target)?;
        println!("target b-accuracy {b:.4} F1 {f1:.4}");
    }
    Ok(())
}

fn evaluate(checkpoint: &Path, data: &Path) -> Result<()> {
    let (_, mut net) = load_checkpoint::<f64>(checkpoint)?;
    let (ds, _) = read_dataset::<f64>(data)?;
    let (b, f1) = score(&mut net, &ds)?;
    println!("{{\"b_accuracy\": {b}, \"f1\": {f1}}}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ListScenarios => {
            let desk = ExperimentConfig::default();
            let healthy = match &desk.data {
                DataSource::Synthetic(d) => d.target.per_class,
                DataSource::Files { .. } => experiment::catalog::RECORDED_HEALTHY,
            };
            print!("{}", experiment::render_catalog(healthy));
        }
        Command::Generate { config } => generate(&config.load(None)?)?,
        Command::Prepare(args) => prepare(&args)?,
        Command::Train(args) => {
            let cfg = args.config.load(None)?;
            match cfg.precision {
                Precision::F32 => train_typed::<f32>(&args, &cfg)?,
                Precision::F64 => train_typed::<f64>(&args, &cfg)?,
            }
        }
        Command::Evaluate { checkpoint, data } => evaluate(&checkpoint, &data)?,
        Command::Run { scenario, config } => {
            let cfg = config.load(scenario.as_deref())?;
            let report = experiment::run_experiment(&cfg)?;
            print!("{}", report.to_text());
        }
        Command::Bench { config } => {
            let cfg = config.load(None)?;
            let report = experiment::bench(&cfg)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let missing = e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::FileNotFound(_))));
            ExitCode::from(if missing { 2 } else { 1 })
        }
    }
}
