//! Command-line harness over the MTS sketch library: build sketches from id
//! files, merge them, estimate set-expression cardinalities, and run the
//! bias/variance experiment grid.
//!
//! Exit codes: 0 success, 2 input/data errors, 3 sketch incompatibility,
//! 4 degenerate estimation (sample too sparse or empty expression sample).

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mts::estimators::{self, EstimateError};
use mts::experiment::{self, ExperimentError};
use mts::expr;
use mts::hashing::SeedSet;
use mts::sketch::{MtsSketch, SketchConfig, SketchError};
use mts::workload::{bernoulli_sample, generate, split_seed};

const EXIT_DATA: u8 = 2;
const EXIT_INCOMPATIBLE: u8 = 3;
const EXIT_DEGENERATE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "mts",
    about = "MTS sketches: set-expression cardinality estimation from sampled streams",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a sketch from a newline-delimited file of 64-bit element ids.
    SketchBuild(SketchBuildArgs),
    /// Merge sketch files into one (all configs must match).
    Merge(MergeArgs),
    /// Estimate a set-expression cardinality from sketch files.
    Estimate(EstimateArgs),
    /// Run an experiment grid from a config file and emit CSV.
    Experiment(ExperimentArgs),
    /// Generate a workload from a config file and export its streams as
    /// newline-delimited id files.
    ExportWorkload(ExportArgs),
}

#[derive(Args)]
struct SketchBuildArgs {
    /// Input id file, one unsigned 64-bit id per line.
    #[arg(long)]
    input: PathBuf,
    /// Output sketch file.
    #[arg(long)]
    output: PathBuf,
    /// Number of register buckets.
    #[arg(short, long, default_value_t = 100)]
    m: u32,
    /// Subsample capacity in distinct elements.
    #[arg(short, long, default_value_t = 1000)]
    u: u32,
    #[arg(long, default_value_t = 1)]
    value_seed: u64,
    #[arg(long, default_value_t = 2)]
    bucket_seed: u64,
}

#[derive(Args)]
struct MergeArgs {
    /// Output sketch file.
    #[arg(long)]
    output: PathBuf,
    /// Input sketch files (at least one).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Set expression; identifiers bind to the sketch files in first-
    /// appearance order.
    #[arg(long)]
    expr: String,
    /// Apply the linear-counting small-range correction to register reads.
    #[arg(long, default_value_t = false)]
    small_range_correction: bool,
    /// Input sketch files, one per stream.
    #[arg(required = true)]
    sketches: Vec<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config file (flat key = value format).
    spec: PathBuf,
    /// Output CSV path (defaults to stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write one JSON object per run to this path.
    #[arg(long)]
    log_runs: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    /// Experiment config file naming the workload to export.
    spec: PathBuf,
    /// Directory for the exported id files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Also export Bernoulli-sampled copies at the configured rate.
    #[arg(long, default_value_t = false)]
    sampled: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SketchBuild(args) => cmd_sketch_build(args),
        Command::Merge(args) => cmd_merge(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::ExportWorkload(args) => cmd_export_workload(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<SketchError> for CliError {
    fn from(e: SketchError) -> Self {
        let code = match e {
            SketchError::IncompatibleSketches => EXIT_INCOMPATIBLE,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        let code = match e {
            EstimateError::IncompatibleSketches => EXIT_INCOMPATIBLE,
            EstimateError::SampleTooSparse | EstimateError::ExpressionSampleEmpty => {
                EXIT_DEGENERATE
            }
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Sketch(e) => e.into(),
            ExperimentError::Estimate(e) => e.into(),
            other => CliError::data(other.to_string()),
        }
    }
}

fn read_ids(path: &PathBuf) -> Result<Vec<u64>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut ids = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let id: u64 = trimmed.parse().map_err(|e| {
            CliError::data(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        ids.push(id);
    }
    Ok(ids)
}

fn load_sketch(path: &PathBuf) -> Result<MtsSketch, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    MtsSketch::from_bytes(&bytes)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn cmd_sketch_build(args: SketchBuildArgs) -> Result<ExitCode, CliError> {
    let ids = read_ids(&args.input)?;
    if ids.is_empty() {
        return Err(CliError::data(format!(
            "{}: no ids; refusing to build an empty sketch",
            args.input.display()
        )));
    }
    let config = SketchConfig::new(
        args.m,
        args.u,
        SeedSet::new(args.value_seed, args.bucket_seed),
    )?;
    let mut sketch = MtsSketch::new(config)?;
    sketch.insert_all(ids);
    fs::write(&args.output, sketch.to_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_merge(args: MergeArgs) -> Result<ExitCode, CliError> {
    let mut merged = load_sketch(&args.inputs[0])?;
    for path in &args.inputs[1..] {
        merged = merged.merge(&load_sketch(path)?)?;
    }
    fs::write(&args.output, merged.to_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_estimate(args: EstimateArgs) -> Result<ExitCode, CliError> {
    let sketches: Vec<MtsSketch> = args
        .sketches
        .iter()
        .map(load_sketch)
        .collect::<Result<_, _>>()?;
    let parsed = expr::parse(&args.expr).map_err(|e| CliError::data(e.to_string()))?;
    if parsed.expr.arity() != sketches.len() {
        return Err(CliError::data(format!(
            "expression names {} streams but {} sketch files given",
            parsed.expr.arity(),
            sketches.len()
        )));
    }

    let refs: Vec<&MtsSketch> = sketches.iter().collect();
    let (algorithm, mut report) = match (&parsed.expr, sketches.len()) {
        (mts::SetExpr::Leaf(0), 1) => ("single", estimators::estimate_single(&sketches[0])?),
        (mts::SetExpr::Node { op, left, right }, 2)
            if matches!(**left, mts::SetExpr::Leaf(0))
                && matches!(**right, mts::SetExpr::Leaf(1)) =>
        {
            match op {
                mts::SetOp::Union => (
                    "union",
                    estimators::estimate_union(&sketches[0], &sketches[1])?,
                ),
                mts::SetOp::Intersect => (
                    "intersection",
                    estimators::estimate_intersection(&sketches[0], &sketches[1])?,
                ),
                mts::SetOp::Diff => (
                    "difference",
                    estimators::estimate_difference(&sketches[0], &sketches[1])?,
                ),
            }
        }
        _ => ("expression", estimators::estimate_expression(&refs, &parsed.expr)?),
    };

    if args.small_range_correction {
        // Re-scale the sampled-count component with the corrected register
        // read; the Good-Turing lift is unchanged.
        let merged = sketches
            .iter()
            .skip(1)
            .try_fold(sketches[0].clone(), |acc, s| acc.merge(s))?;
        let raw = estimators::hll_estimate(merged.registers());
        let corrected = estimators::hll_estimate_corrected(merged.registers());
        if raw != corrected {
            report.value *= corrected / raw;
            report
                .components
                .insert("small_range_corrected_union".into(), corrected);
        }
    }

    // Human-friendly clamped copies of the (intentionally unclamped)
    // similarity components.
    for key in ["rho_hat", "rho_gt_hat"] {
        if let Some(v) = report.component(key) {
            report
                .components
                .insert(format!("{key}_clamped"), v.clamp(0.0, 1.0));
        }
    }

    let degenerate = report.warning.is_some();
    let mut doc = serde_json::to_value(&report).map_err(|e| CliError::data(e.to_string()))?;
    doc.as_object_mut()
        .expect("report serializes to an object")
        .insert("algorithm".into(), serde_json::Value::String(algorithm.into()));
    println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    if degenerate {
        return Ok(ExitCode::from(EXIT_DEGENERATE));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<ExitCode, CliError> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| CliError::data(format!("{}: {e}", args.spec.display())))?;
    let spec = experiment::parse_spec(&text)?;
    let run = || experiment::run_experiment(&spec);
    let output = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::data(e.to_string()))?
            .install(run),
        None => run(),
    }?;

    let csv = output.to_csv();
    match &args.output {
        Some(path) => fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.log_runs {
        let mut file = fs::File::create(path)?;
        for log in &output.run_logs {
            serde_json::to_writer(&mut file, log).map_err(|e| CliError::data(e.to_string()))?;
            file.write_all(b"\n")?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_export_workload(args: ExportArgs) -> Result<ExitCode, CliError> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| CliError::data(format!("{}: {e}", args.spec.display())))?;
    let spec = experiment::parse_spec(&text)?;
    let workload_spec = match &spec.scenario {
        experiment::Scenario::TwoStream { a, ratio, alphas } => {
            mts::workload::WorkloadSpec::two_stream(
                *a,
                *ratio,
                alphas[0],
                spec.freq_model,
                spec.sampling_rate,
                spec.master_seed,
            )
        }
        experiment::Scenario::ThreeStream {
            a,
            inter_ab_list,
            inter_ac,
            inter_bc,
            inter_abc,
        } => mts::workload::WorkloadSpec::three_stream(
            *a,
            inter_ab_list[0],
            *inter_ac,
            *inter_bc,
            *inter_abc,
            spec.freq_model,
            spec.sampling_rate,
            spec.master_seed,
        ),
    }
    .map_err(|e| CliError::data(e.to_string()))?;

    let workload = generate(&workload_spec).map_err(|e| CliError::data(e.to_string()))?;
    fs::create_dir_all(&args.out_dir)?;
    for (i, stream) in workload.streams.iter().enumerate() {
        let write_stream = |name: String, data: &[u64]| -> Result<(), CliError> {
            let mut out = String::with_capacity(data.len() * 12);
            for id in data {
                out.push_str(&id.to_string());
                out.push('\n');
            }
            fs::write(args.out_dir.join(name), out)?;
            Ok(())
        };
        write_stream(format!("stream_{i}.txt"), stream)?;
        if args.sampled {
            let sampled = bernoulli_sample(
                stream,
                spec.sampling_rate,
                split_seed(spec.master_seed, 7000 + i as u64),
            );
            write_stream(format!("sampled_{i}.txt"), &sampled)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
