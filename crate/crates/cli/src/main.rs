use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use perception_core::detector::DetectorKind;
use perception_core::eval::{self, BenchOptions};
use perception_core::io::{self as pio, ColumnSelector, Manifest, Table};
use perception_core::preprocess::MAX_ACCURACY;
use perception_core::stream::{self, WindowMode};
use perception_core::{
    plot, Detection, DistanceMetric, FitOptions, PerceptionModel, StreamDetector,
};

#[derive(Parser)]
#[command(
    name = "perception",
    version,
    about = "Parameter-free anomaly detection"
)]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its JSON document.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Where to write the model document.
        #[arg(short, long)]
        model: PathBuf,
    },
    /// Score rows against a saved model.
    Predict {
        #[command(flatten)]
        input: InputArgs,
        #[arg(short, long)]
        model: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Detect unexpected bursts in a 0/1 indicator stream; alerts are JSON lines.
    Stream {
        /// Indicator file, one 0/1 per line; stdin when omitted or `-`.
        #[arg(short, long)]
        input: Option<PathBuf>,
        /// Window length L.
        #[arg(short = 'L', long = "window", value_parser = clap::value_parser!(u64).range(1..))]
        window: u64,
        #[arg(long, default_value = "adjacent")]
        mode: WindowMode,
        /// History to fit on first. Without it the input is fitted and then
        /// swept with the fitted counts held fixed.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Write alerts here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run one classical univariate rule.
    Baseline {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Evaluate detectors over the datasets of a manifest.
    Bench {
        /// JSON manifest: {"datasets": [{"name", "path", "label_column", ...}]}.
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated detectors to run.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "perception,zscore,modified-zscore,iqr"
        )]
        detectors: Vec<DetectorKind>,
        /// Per-run budget in seconds; slower cells are reported as `nan`.
        #[arg(long, default_value_t = 1800.0)]
        time_budget: f64,
        /// Skip the untimed warm-up run.
        #[arg(long)]
        no_warm_up: bool,
        #[command(flatten)]
        fit: FitArgs,
        /// CSV report path; stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// JSON report path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Histogram bins and per-detector thresholds as JSON, for plotting.
    Plotdata {
        #[command(flatten)]
        input: InputArgs,
        /// Number of bins (Sturges' rule by default).
        #[arg(long)]
        bins: Option<usize>,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InputArgs {
    /// CSV input; stdin when omitted or `-`.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Ground-truth column (name or 0-based index) to exclude from features.
    #[arg(long)]
    label: Option<ColumnSelector>,
}

#[derive(Args)]
struct FitArgs {
    /// Decimal places kept when integerizing.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=MAX_ACCURACY as i64))]
    acc: u32,
    /// Distance to the median for multivariate data.
    #[arg(long, default_value = "euclidean")]
    metric: DistanceMetric,
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            accuracy: self.acc,
            metric: self.metric,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Zscore,
    ModifiedZscore,
    Iqr,
}

fn read_source(path: Option<&Path>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match path {
        Some(p) if p != Path::new("-") => {
            buf = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        }
        _ => {
            io::stdin().read_to_end(&mut buf).context("reading stdin")?;
        }
    }
    Ok(buf)
}

fn read_input(args: &InputArgs) -> Result<Table> {
    let bytes = read_source(args.input.as_deref())?;
    let table = pio::read_table(bytes.as_slice(), args.label.as_ref())?;
    Ok(table)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct Row {
    index: usize,
    score: f64,
    flag: bool,
}

fn render_rows(rows: &[Row], format: Format) -> Result<String> {
    Ok(match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rows)?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::from("index,score,flag\n");
            for r in rows {
                s.push_str(&format!("{},{},{}\n", r.index, r.score, u8::from(r.flag)));
            }
            s
        }
    })
}

fn detection_rows(d: &Detection) -> Vec<Row> {
    d.scores
        .iter()
        .zip(&d.flags)
        .enumerate()
        .map(|(index, (&score, &flag))| Row { index, score, flag })
        .collect()
}

fn cmd_fit(input: &InputArgs, fit: &FitArgs, model_path: &Path) -> Result<()> {
    let table = read_input(input)?;
    let model = PerceptionModel::fit(&table.features, fit.options())?;
    model.save(model_path)?;
    println!(
        "sum={} windows={} dim={} scale_exponent={}",
        model.sum(),
        model.windows(),
        model.dim(),
        model.integerization().scale_exponent
    );
    Ok(())
}

fn cmd_predict(input: &InputArgs, model_path: &Path, output: &OutputArgs) -> Result<()> {
    let model = PerceptionModel::load(model_path)?;
    let table = read_input(input)?;
    let rows: Vec<Row> = model
        .predict(&table.features)?
        .into_iter()
        .map(|p| Row {
            index: p.index,
            score: p.score,
            flag: p.flag,
        })
        .collect();
    write_output(
        output.output.as_deref(),
        &render_rows(&rows, output.format)?,
    )
}

fn read_indicators(path: Option<&Path>) -> Result<Vec<u8>> {
    let bytes = read_source(path)?;
    let text = String::from_utf8(bytes).context("indicator stream is not UTF-8")?;
    Ok(stream::parse_indicators(&text)?)
}

fn cmd_stream(
    input: Option<&Path>,
    window: usize,
    mode: WindowMode,
    train: Option<&Path>,
    output: Option<&Path>,
) -> Result<()> {
    let data = read_indicators(input)?;
    let alerts = match train {
        None => {
            if data.is_empty() {
                Vec::new()
            } else {
                let (sum, windows) = stream::fit_stream(&stream::window_counts(
                    &data,
                    window,
                    WindowMode::Adjacent,
                )?)?;
                stream::detect(&stream::window_counts(&data, window, mode)?, sum, windows)
            }
        }
        Some(train) => {
            let history = read_indicators(Some(train))?;
            let mut detector = StreamDetector::fit(&stream::window_counts(
                &history,
                window,
                WindowMode::Adjacent,
            )?)?;
            match mode {
                WindowMode::Adjacent => detector.ingest_stream(&data)?,
                WindowMode::Sliding if data.is_empty() => Vec::new(),
                WindowMode::Sliding => stream::detect(
                    &stream::window_counts(&data, window, WindowMode::Sliding)?,
                    detector.sum(),
                    detector.windows(),
                ),
            }
        }
    };
    let mut text = String::new();
    for a in &alerts {
        text.push_str(&serde_json::to_string(a)?);
        text.push('\n');
    }
    write_output(output, &text)
}

fn cmd_baseline(input: &InputArgs, method: BaselineMethod, output: &OutputArgs) -> Result<()> {
    let table = read_input(input)?;
    let kind = match method {
        BaselineMethod::Zscore => DetectorKind::ZScore,
        BaselineMethod::ModifiedZscore => DetectorKind::ModifiedZScore,
        BaselineMethod::Iqr => DetectorKind::Iqr,
    };
    let rows = if table.features.nrows() == 0 {
        Vec::new()
    } else {
        let detection = kind
            .build(FitOptions::default())
            .fit_predict(&table.features)?;
        detection_rows(&detection)
    };
    write_output(
        output.output.as_deref(),
        &render_rows(&rows, output.format)?,
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    manifest_path: &Path,
    kinds: &[DetectorKind],
    time_budget: f64,
    warm_up: bool,
    fit: &FitArgs,
    csv: Option<&Path>,
    json: Option<&Path>,
) -> Result<()> {
    let manifest = Manifest::load(manifest_path)?;
    if manifest.datasets.is_empty() {
        bail!("manifest {} lists no datasets", manifest_path.display());
    }
    if !(time_budget.is_finite() && time_budget > 0.0) {
        bail!("time budget must be a positive number of seconds");
    }

    let mut datasets = Vec::new();
    let mut external = Vec::new();
    let mut missing = Vec::new();
    for entry in &manifest.datasets {
        match manifest.load_entry(entry) {
            Ok((ds, ext)) => {
                datasets.push(ds);
                external.extend(ext);
            }
            Err(e) => {
                log::error!("skipping dataset `{}`: {e}", entry.name);
                missing.push(entry.name.clone());
            }
        }
    }
    if !missing.is_empty() {
        eprintln!("missing or unreadable datasets: {}", missing.join(", "));
    }
    if datasets.is_empty() {
        bail!("none of the manifest's datasets could be loaded");
    }

    let detectors: Vec<_> = kinds.iter().map(|k| k.build(fit.options())).collect();
    let options = BenchOptions {
        time_budget: Duration::from_secs_f64(time_budget),
        warm_up,
    };
    let report = eval::run_benchmark(&datasets, &detectors, &external, options)?;
    write_output(csv, &report.to_csv())?;
    if let Some(path) = json {
        let mut text = report.to_json()?;
        text.push('\n');
        write_output(Some(path), &text)?;
    }
    Ok(())
}

fn cmd_plotdata(
    input: &InputArgs,
    bins: Option<usize>,
    fit: &FitArgs,
    output: Option<&Path>,
) -> Result<()> {
    let table = read_input(input)?;
    if table.features.ncols() != 1 {
        bail!(
            "plot data needs one numeric column, found {}",
            table.features.ncols()
        );
    }
    let data = plot::plot_data(table.features.as_slice(), bins, fit.options())?;
    let mut text = serde_json::to_string_pretty(&data)?;
    text.push('\n');
    write_output(output, &text)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { input, fit, model } => cmd_fit(&input, &fit, &model),
        Command::Predict {
            input,
            model,
            output,
        } => cmd_predict(&input, &model, &output),
        Command::Stream {
            input,
            window,
            mode,
            train,
            output,
        } => {
            let window = usize::try_from(window).context("window length too large")?;
            cmd_stream(
                input.as_deref(),
                window,
                mode,
                train.as_deref(),
                output.as_deref(),
            )
        }
        Command::Baseline {
            input,
            method,
            output,
        } => cmd_baseline(&input, method, &output),
        Command::Bench {
            manifest,
            detectors,
            time_budget,
            no_warm_up,
            fit,
            csv,
            json,
        } => cmd_bench(
            &manifest,
            &detectors,
            time_budget,
            !no_warm_up,
            &fit,
            csv.as_deref(),
            json.as_deref(),
        ),
        Command::Plotdata {
            input,
            bins,
            fit,
            output,
        } => cmd_plotdata(&input, bins, &fit, output.as_deref()),
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
