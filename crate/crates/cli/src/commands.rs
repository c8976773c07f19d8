use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fedsense::experiment::{
    emit_report, Experiment, ExperimentConfig, ExperimentReport, MetricName, ReportFiles,
    Role, Scenario,
};
use fedsense::features::{
    extract_features, fit_normalizers, read_features_csv, write_features_csv, FeatureParams,
    FeatureRecord,
};
use fedsense::model::{init_default, snapshot, train, Sample, TrainConfig};
use fedsense::seed::derive_seed;
use fedsense::signal::{load_iq_file, run_campaign, write_iq_file, CampaignConfig, Label};

use crate::{config, CliError, Global, Mode};

const DEFAULT_OUT: &str = "fedsense-out";
const MANIFEST: &str = "manifest.csv";
const CONFIG: &str = "config.toml";

fn out_dir(g: &Global) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn refuse_existing(g: &Global, paths: &[PathBuf]) -> Result<(), CliError> {
    if g.overwrite {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(CliError::Run(format!(
            "{} exists (pass --overwrite to replace it)",
            p.display()
        ))),
        None => Ok(()),
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Run(format!("{}: {e}", path.display()))
}

/// One row of a campaign manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestRow {
    file: String,
    sensor: usize,
    frame: usize,
    /// 1 = signal present, 0 = noise only.
    label: u8,
    tx_power_dbm: Option<f64>,
    distance_m: f64,
    sample_rate_hz: f64,
    samples: usize,
}

pub fn campaign(g: &Global, config_path: Option<&Path>) -> Result<(), CliError> {
    let cfg = config::load(config_path, g.seed)?;
    let out = out_dir(g);
    let per_sensor = cfg.campaign.frames_per_sensor();
    let sensors = cfg.topology.sensor_count();
    if g.dry_run {
        println!("seed: {}", cfg.seed);
        println!("sensors: {sensors}");
        println!("power levels (dBm): {:?}", cfg.campaign.power_levels());
        println!(
            "frames per sensor: {per_sensor} ({} noise-only, {} signal)",
            cfg.campaign.runs_off,
            per_sensor - cfg.campaign.runs_off
        );
        println!("samples per frame: {}", cfg.campaign.samples_per_run);
        println!("files: {} under {}", sensors * per_sensor, out.display());
        return Ok(());
    }
    refuse_existing(g, &[out.join(MANIFEST), out.join(CONFIG)])?;

    let campaign = CampaignConfig {
        seed: derive_seed(cfg.seed, "campaign"),
        ..cfg.campaign.clone()
    };
    let frames = run_campaign(&campaign, &cfg.topology)?;
    let mut rows = Vec::with_capacity(sensors * per_sensor);
    for (s, sensor_frames) in frames.iter().enumerate() {
        let dir = out.join(format!("sensor{s}"));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (i, frame) in sensor_frames.iter().enumerate() {
            let file = format!("sensor{s}/frame{i:04}.iq");
            write_iq_file(out.join(&file), frame.samples())?;
            rows.push(ManifestRow {
                file,
                sensor: s,
                frame: i,
                label: u8::from(frame.label().is_signal()),
                tx_power_dbm: frame.tx_power_dbm(),
                distance_m: cfg.topology.tx_distance(s),
                sample_rate_hz: frame.sample_rate_hz(),
                samples: frame.len(),
            });
        }
    }
    let manifest = out.join(MANIFEST);
    let mut w = csv::Writer::from_path(&manifest)
        .map_err(|e| CliError::Run(format!("{}: {e}", manifest.display())))?;
    for row in &rows {
        w.serialize(row)
            .map_err(|e| CliError::Run(format!("{}: {e}", manifest.display())))?;
    }
    w.flush().map_err(io_err(&manifest))?;
    let cfg_path = out.join(CONFIG);
    fs::write(&cfg_path, config::render(&cfg)).map_err(io_err(&cfg_path))?;
    println!("wrote {} IQ files and {}", rows.len(), manifest.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelArg {
    Noise,
    Signal,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// IQ files, or campaign directories containing a manifest.csv.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Row length N.
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Row count L.
    #[arg(long, default_value_t = 8)]
    l: usize,
    /// Autocorrelation lag in samples.
    #[arg(long, default_value_t = FeatureParams::default().lag)]
    lag: usize,
    /// Filter bandwidth in Hz.
    #[arg(long, default_value_t = FeatureParams::default().bandwidth_hz)]
    bandwidth: f64,
    /// Label for bare IQ files.
    #[arg(long, value_enum, default_value_t = LabelArg::Noise)]
    label: LabelArg,
    /// Nominal TX power for bare signal-present files, in dBm.
    #[arg(long, required_if_eq("label", "signal"))]
    tx_power_dbm: Option<f64>,
    /// Sample rate for bare IQ files, in Hz.
    #[arg(long, default_value_t = fedsense::signal::DEFAULT_SAMPLE_RATE_HZ)]
    sample_rate: f64,
}

struct FrameSource {
    path: PathBuf,
    label: Label,
    sample_rate_hz: f64,
    tx_power_dbm: Option<f64>,
}

fn sources(args: &ExtractArgs) -> Result<Vec<FrameSource>, CliError> {
    let mut out = Vec::new();
    for input in &args.inputs {
        if input.is_dir() {
            let manifest = input.join(MANIFEST);
            let mut rd = csv::Reader::from_path(&manifest)
                .map_err(|e| CliError::Run(format!("{}: {e}", manifest.display())))?;
            for row in rd.deserialize::<ManifestRow>() {
                let row = row.map_err(|e| CliError::Run(format!("{}: {e}", manifest.display())))?;
                out.push(FrameSource {
                    path: input.join(&row.file),
                    label: Label::from_bool(row.label == 1),
                    sample_rate_hz: row.sample_rate_hz,
                    tx_power_dbm: row.tx_power_dbm,
                });
            }
        } else {
            out.push(FrameSource {
                path: input.clone(),
                label: Label::from_bool(args.label == LabelArg::Signal),
                sample_rate_hz: args.sample_rate,
                tx_power_dbm: (args.label == LabelArg::Signal)
                    .then_some(args.tx_power_dbm)
                    .flatten(),
            });
        }
    }
    Ok(out)
}

pub fn extract(g: &Global, args: &ExtractArgs) -> Result<(), CliError> {
    let params = FeatureParams {
        n: args.n,
        l: args.l,
        lag: args.lag,
        bandwidth_hz: args.bandwidth,
    };
    params
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let sources = sources(args)?;
    let target = g.out.as_ref().map(|d| d.join("features.csv"));
    if g.dry_run {
        println!("frames: {}", sources.len());
        println!("N = {}, L = {}, lag = {}, bandwidth = {} Hz", params.n, params.l, params.lag, params.bandwidth_hz);
        match &target {
            Some(t) => println!("output: {}", t.display()),
            None => println!("output: stdout"),
        }
        return Ok(());
    }
    if let Some(t) = &target {
        refuse_existing(g, std::slice::from_ref(t))?;
    }
    let records = sources
        .par_iter()
        .map(|src| -> Result<FeatureRecord, CliError> {
            let name = src.path.display();
            let frame = load_iq_file(&src.path, src.sample_rate_hz, src.label, src.tx_power_dbm)
                .map_err(|e| match e {
                    fedsense::Error::Io(io) => CliError::Run(format!("{name}: {io}")),
                    other => CliError::Run(other.to_string()),
                })?;
            extract_features(&frame, &params).map_err(|e| CliError::Run(format!("{name}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    match target {
        Some(t) => {
            fs::create_dir_all(t.parent().expect("joined path has a parent")).map_err(io_err(&t))?;
            let file = fs::File::create(&t).map_err(io_err(&t))?;
            write_features_csv(file, &records)?;
            eprintln!("wrote {} feature rows to {}", records.len(), t.display());
        }
        None => write_features_csv(io::stdout().lock(), &records)?,
    }
    Ok(())
}

fn print_plan(cfg: &ExperimentConfig, mode: Mode) {
    println!("seed: {}", cfg.seed);
    println!("config hash: {}", cfg.hash());
    println!("mode: {mode:?}");
    println!("sensors: {}", cfg.topology.sensor_count());
    println!("frames per sensor: {}", cfg.campaign.frames_per_sensor());
    println!("folds: {}", cfg.k_folds);
    let rotations: Vec<String> = cfg
        .rotations()
        .iter()
        .map(|r| r.map_or("none".into(), |s| format!("sensor{s}")))
        .collect();
    println!("deprivation rotations: {}", rotations.join(", "));
    println!(
        "rounds: {} x {} epochs",
        cfg.rounds,
        cfg.train.epochs / cfg.rounds
    );
    if mode != Mode::Reference {
        println!("grid:");
        for p in cfg.policies() {
            println!("  idw_p = {}, neighbors = {}", p.idw_exponent, p.neighbor_count);
        }
    }
}

fn headline(report: &ExperimentReport) {
    for cell in report.cells() {
        let label = match (cell.idw_p, cell.neighbors) {
            (Some(p), Some(k)) => format!("{} p={p} k={k}", report.scenario),
            _ => report.scenario.to_string(),
        };
        let fmt = |role, metric| {
            report
                .mean(cell, role, metric)
                .map_or("-".to_string(), |v| format!("{v:.3}"))
        };
        println!(
            "{label}: deprived pd {} pfa {} | trained pd {} pfa {} f1 {}",
            fmt(Role::Deprived, MetricName::Pd),
            fmt(Role::Deprived, MetricName::Pfa),
            fmt(Role::Trained, MetricName::Pd),
            fmt(Role::Trained, MetricName::Pfa),
            fmt(Role::Trained, MetricName::F1),
        );
    }
}

pub fn experiment(g: &Global, config_path: Option<&Path>, mode: Mode) -> Result<(), CliError> {
    let cfg = config::load(config_path, g.seed)?;
    if g.dry_run {
        print_plan(&cfg, mode);
        return Ok(());
    }
    let out = out_dir(g);
    let scenarios: &[Scenario] = match mode {
        Mode::Reference => &[Scenario::Reference],
        Mode::Federated => &[Scenario::Federated],
        Mode::Both => &[Scenario::Reference, Scenario::Federated],
    };
    let mut targets = vec![out.join(CONFIG)];
    for &s in scenarios {
        let f = ReportFiles::new(&out, s);
        targets.extend([f.report, f.cdf, f.units, f.manifest]);
    }
    refuse_existing(g, &targets)?;

    let exp = Experiment::prepare(&cfg)?;
    for &scenario in scenarios {
        let report = match scenario {
            Scenario::Reference => exp.reference()?,
            Scenario::Federated => exp.federated()?,
        };
        let files = emit_report(&report, &out, g.overwrite)?;
        headline(&report);
        println!("wrote {}", files.report.display());
    }
    let cfg_path = out.join(CONFIG);
    fs::write(&cfg_path, config::render(&cfg)).map_err(io_err(&cfg_path))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    /// Input dimension of the default model.
    #[arg(long, default_value_t = 11, conflicts_with = "train")]
    dim: usize,
    /// Train on this feature CSV before dumping.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Configuration whose `[train]` section drives training.
    #[arg(long, requires = "train")]
    config: Option<PathBuf>,
}

fn emit_snapshot(g: &Global, text: &str) -> Result<(), CliError> {
    match &g.out {
        Some(dir) => {
            let path = dir.join("model.txt");
            refuse_existing(g, std::slice::from_ref(&path))?;
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            fs::write(&path, text).map_err(io_err(&path))?;
            eprintln!("wrote {}", path.display());
        }
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Run(e.to_string()))?,
    }
    Ok(())
}

pub fn model_dump(g: &Global, args: &DumpArgs) -> Result<(), CliError> {
    let coeffs = match &args.train {
        None => init_default(args.dim).map_err(|e| CliError::Usage(e.to_string()))?,
        Some(path) => {
            let cfg = config::load(args.config.as_deref(), g.seed)?;
            let file = fs::File::open(path).map_err(io_err(path))?;
            let records = read_features_csv(file)
                .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
            let norms = fit_normalizers(&records)
                .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
            let samples: Vec<Sample> = records
                .iter()
                .map(|r| Sample::new(norms.apply(r), r.label))
                .collect();
            let train_cfg = TrainConfig {
                seed: derive_seed(cfg.seed, "model/train"),
                ..cfg.train
            };
            if g.dry_run {
                println!("would train on {} rows for {} epochs", samples.len(), train_cfg.epochs);
                return Ok(());
            }
            let start = init_default(norms.output_dim())?;
            let (coeffs, loss) = train(&start, &samples, &train_cfg)?;
            eprintln!("final epoch loss {loss:.6}");
            coeffs
        }
    };
    if g.dry_run {
        println!("would dump a model with input dimension {}", coeffs.input_dim());
        return Ok(());
    }
    emit_snapshot(g, &snapshot::to_text(&coeffs))
}

pub fn model_restore(g: &Global, path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let coeffs = snapshot::from_text(&text)
        .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    if g.dry_run {
        println!(
            "{}: valid snapshot, input dimension {}, {} parameters",
            path.display(),
            coeffs.input_dim(),
            coeffs.param_count()
        );
        return Ok(());
    }
    emit_snapshot(g, &snapshot::to_text(&coeffs))
}

