use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use easyhard::detectors::{detections_to_jsonl, load_precomputed, BackendConfig};
use easyhard::error::{Error, Result};
use easyhard::eval::evaluate;
use easyhard::harness::config::{load_dataset, resolve, ExperimentConfig};
use easyhard::harness::sweep::random_baseline;
use easyhard::harness::{emit_report, generate_benchmark, run_sweep, ReportFormat, SweepResult};
use easyhard::model::DatasetFormat;
use easyhard::router::run_standalone;

#[derive(Parser)]
#[command(name = "easyhard", version, about = "Route easy images to a fast face detector and hard ones to a slow one")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic benchmark (dataset, detections, score tables) to a directory.
    Generate(GenerateArgs),
    /// Run every criterion over the split grid, plus the random baseline.
    Sweep(ExperimentArgs),
    /// Run the random baseline only.
    Baseline(ExperimentArgs),
    /// Score one detections file against a dataset.
    Eval(EvalArgs),
    /// Re-render a saved result.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML file with any of the options below; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// jsonl | fddb-ellipse
    #[arg(long)]
    format: Option<DatasetFormat>,
    /// `id,width,height` CSV for FDDB annotations.
    #[arg(long)]
    image_sizes: Option<PathBuf>,
    /// Use an in-memory synthetic benchmark with this many images.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Detections JSONL path or `synth:q=..,s0=..,gamma=..,lambda=..,eta=..,ctp=..,cfp=..,seed=..`.
    #[arg(long)]
    fast: Option<String>,
    #[arg(long)]
    slow: Option<String>,
    #[arg(long, value_delimiter = ',')]
    criterion: Option<Vec<String>>,
    /// Score table CSV, as `name=path` or `path`.
    #[arg(long, value_delimiter = ',')]
    scores: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    splits: Option<Vec<f64>>,
    /// fast=..,slow=..,pred=..
    #[arg(long)]
    timing: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv,json,markdown,plotdata
    #[arg(long, value_delimiter = ',')]
    emit: Option<Vec<String>>,
    /// `auto` or a false-positive count.
    #[arg(long)]
    fp_axis: Option<String>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    #[arg(long)]
    confidence_threshold: Option<f64>,
}

impl ExperimentArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        Ok(base.overlay(ExperimentConfig {
            dataset: self.dataset,
            format: self.format,
            image_sizes: self.image_sizes,
            synthetic: self.synthetic,
            bench: None,
            fast: self.fast,
            slow: self.slow,
            criteria: self.criterion,
            scores: self.scores,
            splits: self.splits,
            timing: self.timing,
            runs: self.runs,
            seed: self.seed,
            out: self.out,
            emit: self.emit,
            fp_axis: self.fp_axis,
            iou_threshold: self.iou_threshold,
            confidence_threshold: self.confidence_threshold,
        }))
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    images: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file; its `[bench]` table overrides benchmark defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "jsonl")]
    format: DatasetFormat,
    #[arg(long)]
    image_sizes: Option<PathBuf>,
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    confidence_threshold: Option<f64>,
    #[arg(long)]
    fp_axis: Option<String>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',')]
    emit: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    log::info!("wrote {}", dir.join(name).display());
    Ok(())
}

/// Files into `out` (always including result.json), or everything to stdout.
fn write_result(result: &SweepResult, formats: &[ReportFormat], out: Option<&Path>) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for &f in formats.iter().chain([ReportFormat::Json].iter()) {
                write_file(dir, f.file_name(), &emit_report(result, f))?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            for (i, &f) in formats.iter().enumerate() {
                if i > 0 {
                    writeln!(stdout)?;
                }
                stdout.write_all(emit_report(result, f).as_bytes())?;
            }
        }
    }
    Ok(())
}

fn formats_for(cfg: &ExperimentConfig) -> Result<Vec<ReportFormat>> {
    match (&cfg.emit, &cfg.out) {
        (None, None) => Ok(vec![ReportFormat::Markdown]),
        _ => cfg.emit_formats(),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let file_cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let cfg = file_cfg.overlay(ExperimentConfig { synthetic: args.images, seed: args.seed, ..Default::default() });
    let bench_cfg = cfg.bench_config()?;
    let bench = generate_benchmark(&bench_cfg)?;
    let dir = &args.out;
    fs::create_dir_all(dir)?;
    write_file(dir, "dataset.jsonl", &bench.dataset.to_jsonl())?;
    for (name, backend) in [("fast.jsonl", &bench.fast), ("slow.jsonl", &bench.slow)] {
        let outputs = run_standalone(&bench.dataset, backend)?;
        write_file(dir, name, &detections_to_jsonl(outputs.values()))?;
    }
    for (name, table) in &bench.tables {
        write_file(dir, &format!("{name}.csv"), &table.to_csv())?;
    }
    let mut doc = toml::Table::new();
    doc.insert("bench".into(), toml::Value::try_from(&bench_cfg).map_err(|e| Error::Config(e.to_string()))?);
    write_file(dir, "bench.toml", &toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?)?;
    eprintln!(
        "generated {} images with {} faces in {}",
        bench.dataset.len(),
        bench.dataset.num_faces(),
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(args: ExperimentArgs) -> Result<()> {
    let cfg = args.into_config()?;
    let formats = formats_for(&cfg)?;
    let resolved = resolve(&cfg)?;
    let result = run_sweep(&resolved.experiment())?;
    write_result(&result, &formats, cfg.out.as_deref())
}

fn cmd_baseline(args: ExperimentArgs) -> Result<()> {
    let cfg = args.into_config()?;
    let formats = formats_for(&cfg)?;
    let r = resolve(&cfg)?;
    let baseline = r
        .splits
        .iter()
        .map(|&p| random_baseline(&r.dataset, r.fast.as_ref(), r.slow.as_ref(), p, r.runs, r.seed, &r.eval, &r.timing))
        .collect::<Result<Vec<_>>>()?;
    let result = SweepResult {
        dataset: r.dataset.name().to_string(),
        num_images: r.dataset.len(),
        num_faces: r.dataset.num_faces(),
        timing: r.timing,
        splits: r.splits.clone(),
        criteria: Vec::new(),
        cells: Vec::new(),
        baseline,
    };
    write_result(&result, &formats, cfg.out.as_deref())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = ExperimentConfig {
        fp_axis: args.fp_axis,
        iou_threshold: args.iou_threshold,
        ..Default::default()
    };
    let opts = cfg.eval_options()?;
    let dataset = load_dataset(&args.dataset, args.format, args.image_sizes.as_deref())?;
    let mut backend_cfg = BackendConfig::new("detections", 0.0);
    if let Some(t) = args.confidence_threshold {
        backend_cfg = backend_cfg.with_threshold(t);
    }
    let backend = load_precomputed(&fs::read_to_string(&args.detections)?, backend_cfg)?;
    let outputs = run_standalone(&dataset, &backend)?;
    let (report, matches) = evaluate(&outputs, &dataset, &opts)?;
    let doc = serde_json::json!({
        "ap": report.ap,
        "disc_roc": report.disc_roc,
        "cont_roc": report.cont_roc,
        "tp": matches.tp_count(),
        "fp": matches.fp_count(),
        "num_gt_faces": matches.num_gt_faces,
    });
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write_file(dir, "eval.json", &text)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let result: SweepResult = serde_json::from_str(&fs::read_to_string(&args.input)?)?;
    let cfg = ExperimentConfig { emit: args.emit, out: args.out, ..Default::default() };
    write_result(&result, &formats_for(&cfg)?, cfg.out.as_deref())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
