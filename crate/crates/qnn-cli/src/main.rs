//! `qnn`: build, inspect, compress, evaluate, and verify quiver neural
//! networks with rescaling activations.
//!
//! Exit codes: 0 success / all checks pass, 1 failed validation or failed
//! verification checks, 2 usage or I/O errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qnn_core::compress::CompressionResult;
use qnn_core::generate::{random_network, ActivationKind, QuiverPreset};
use qnn_core::model::{ModelFile, QuiverSpec};
use qnn_core::quiver::{DimensionVector, NeuralQuiver};
use qnn_core::rng::Xoshiro256PlusPlus;
use qnn_core::verify::{CheckSet, VerifyOptions, VerifyReport};
use qnn_core::{feedforward_equality, QuiverNetwork};

#[derive(Parser)]
#[command(
    name = "qnn",
    version,
    about = "Quiver neural networks: lossless QR compression and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a model file and check every structural invariant.
    Validate {
        /// Path to a model JSON file.
        path: PathBuf,
    },
    /// Generate a random model with seeded uniform [0,1) weights.
    Generate(GenerateArgs),
    /// Compress a model losslessly (or lossily with --sv-threshold).
    Compress(CompressArgs),
    /// Evaluate a model on one input vector.
    Eval(EvalArgs),
    /// Re-run the verification suite on the built-in benchmark quivers.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Preset name (fig6-left, fig6-middle, fig6-right) or a path to a
    /// JSON quiver description {vertex_count, bias, edges}.
    #[arg(long)]
    quiver: String,
    /// Comma-separated widths for the non-bias vertices in ascending
    /// vertex id (the bias width is always 1). Presets have defaults.
    #[arg(long)]
    dims: Option<String>,
    /// Activation at every non-source vertex: identity, step-relu,
    /// squashing, shifted-relu, shifted-norm.
    #[arg(long, default_value = "step-relu")]
    activation: String,
    /// Shift parameter for shifted-relu.
    #[arg(long, default_value_t = 0.5)]
    shift: f64,
    /// Seed for the pinned generator (falls back to $QNN_SEED, then 1).
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CompressArgs {
    /// Input model file.
    #[arg(short, long)]
    input: PathBuf,
    /// Output path for the compressed model; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// qr (reduced dimension vector), rank (rank-aware), or basis
    /// (change-of-basis).
    #[arg(long, default_value = "qr")]
    algorithm: String,
    /// Rank tolerance for the rank/basis algorithms.
    #[arg(long)]
    tol: Option<f64>,
    /// Lossy mode (rank algorithm only): drop singular values at or below
    /// this threshold and report the resulting feedforward deviation.
    #[arg(long)]
    sv_threshold: Option<f64>,
    /// Seed for the deviation measurement in lossy mode.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Input model file.
    #[arg(short, long)]
    input: PathBuf,
    /// Comma-separated input vector, or a path to a JSON array file.
    #[arg(long)]
    x: String,
}

#[derive(Args)]
struct VerifyArgs {
    /// lossless, pgd, corollary-c, or all.
    #[arg(long, default_value = "all")]
    check: String,
    /// Random models per check.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Gradient-descent steps for the extended equivalence runs.
    #[arg(long, default_value_t = 5)]
    steps: usize,
    /// Learning rate for the gradient-descent checks.
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    /// Seed (falls back to $QNN_SEED, then 1).
    #[arg(long)]
    seed: Option<u64>,
    /// Print the JSON report instead of per-check lines.
    #[arg(long)]
    json: bool,
    /// Also write the JSON report to a file.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| std::env::var("QNN_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(1)
}

fn parse_activation(name: &str, shift: f64) -> Result<ActivationKind> {
    Ok(match name {
        "identity" => ActivationKind::Identity,
        "step-relu" => ActivationKind::StepRelu,
        "squashing" => ActivationKind::Squashing,
        "shifted-relu" => ActivationKind::ShiftedRelu(shift),
        "shifted-norm" => ActivationKind::ShiftedNorm,
        other => bail!("unknown activation {other:?} (expected identity, step-relu, squashing, shifted-relu, shifted-norm)"),
    })
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .with_context(|| format!("invalid dimension {p:?}"))
        })
        .collect()
}

fn load_quiver(arg: &str, dims_flag: &Option<String>) -> Result<(NeuralQuiver, DimensionVector)> {
    if let Some(preset) = QuiverPreset::from_name(arg) {
        let quiver = preset.quiver();
        let non_bias = match dims_flag {
            Some(s) => parse_dims(s)?,
            None => preset.default_dims(),
        };
        let dims = preset.dims(&non_bias)?;
        return Ok((quiver, dims));
    }
    // Otherwise a path to a quiver description.
    let text = std::fs::read_to_string(arg)
        .with_context(|| format!("{arg:?} is not a preset name and could not be read as a file"))?;
    let spec: QuiverSpec = serde_json::from_str(&text)?;
    let edges: Vec<(usize, usize)> = spec.edges.iter().map(|e| (e[0], e[1])).collect();
    let quiver = NeuralQuiver::new(spec.vertex_count, &edges, spec.bias)?;
    let dims_str = dims_flag
        .as_ref()
        .ok_or_else(|| anyhow!("--dims is required with a quiver file"))?;
    let mut dims = parse_dims(dims_str)?;
    if dims.len() + 1 != quiver.vertex_count() {
        bail!(
            "expected {} dimensions (bias excluded), got {}",
            quiver.vertex_count() - 1,
            dims.len()
        );
    }
    dims.insert(spec.bias, 1);
    let dims = DimensionVector::new(&quiver, dims)?;
    Ok((quiver, dims))
}

fn write_model(model: &ModelFile, output: &Option<PathBuf>) -> Result<()> {
    match output {
        Some(path) => model
            .save(path)
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{}", model.to_json()),
    }
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<ExitCode> {
    let file = ModelFile::load(path).with_context(|| format!("loading {}", path.display()))?;
    match file.to_network() {
        Ok(net) => {
            println!(
                "ok: {} vertices, {} edges, dims {:?}, {} parameters",
                net.quiver().vertex_count(),
                net.quiver().edge_count(),
                net.dims().as_slice(),
                net.parameter_count()
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(err) => {
            eprintln!("invalid model: {err} [{err:?}]");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<ExitCode> {
    let (quiver, dims) = load_quiver(&args.quiver, &args.dims)?;
    let kind = parse_activation(&args.activation, args.shift)?;
    let seed = resolve_seed(args.seed);
    let mut rng = Xoshiro256PlusPlus::from_seed(seed);
    let net = random_network(&quiver, &dims, kind, &mut rng)?;
    write_model(&ModelFile::from_network(&net), &args.output)?;
    Ok(ExitCode::SUCCESS)
}

fn summarize(label: &str, original: &QuiverNetwork, result: &CompressionResult) {
    eprintln!(
        "{label}: dims {:?} -> {:?}, parameters {} -> {}",
        original.dims().as_slice(),
        result.reduced.dims().as_slice(),
        original.parameter_count(),
        result.reduced.parameter_count()
    );
}

fn cmd_compress(args: &CompressArgs) -> Result<ExitCode> {
    let net = qnn_core::model::load_network(&args.input)
        .with_context(|| format!("loading {}", args.input.display()))?;
    let result = match args.algorithm.as_str() {
        "qr" => {
            if args.sv_threshold.is_some() {
                bail!("--sv-threshold applies to the rank algorithm only");
            }
            qnn_core::qr_compress(&net)?
        }
        "rank" => qnn_core::qr_compress_rank_aware(&net, args.tol, args.sv_threshold)?,
        "basis" => {
            if args.sv_threshold.is_some() {
                bail!("--sv-threshold applies to the rank algorithm only");
            }
            qnn_core::compress_change_of_basis(&net, args.tol)?
        }
        other => bail!("unknown algorithm {other:?} (expected qr, rank, basis)"),
    };
    summarize(&args.algorithm, &net, &result);
    if args.sv_threshold.is_some() {
        let seed = resolve_seed(args.seed);
        let deviation = feedforward_equality(&net, &result.reduced, 10, seed)?;
        eprintln!(
            "lossy compression: max feedforward deviation {deviation:.3e} over 10 seeded inputs"
        );
    }
    write_model(&ModelFile::from_network(&result.reduced), &args.output)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: &EvalArgs) -> Result<ExitCode> {
    let net = qnn_core::model::load_network(&args.input)
        .with_context(|| format!("loading {}", args.input.display()))?;
    let x: Vec<f64> = if args.x.contains(',') || args.x.parse::<f64>().is_ok() {
        args.x
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .with_context(|| format!("invalid input value {p:?}"))
            })
            .collect::<Result<_>>()?
    } else {
        let text = std::fs::read_to_string(&args.x)
            .with_context(|| format!("reading input vector from {}", args.x))?;
        serde_json::from_str(&text)?
    };
    let (y, _) = net.feedforward(&x)?;
    println!("{}", serde_json::json!({ "output": y }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    let set = CheckSet::from_name(&args.check).ok_or_else(|| {
        anyhow!(
            "unknown check {:?} (expected lossless, pgd, corollary-c, all)",
            args.check
        )
    })?;
    let options = VerifyOptions {
        seed: resolve_seed(args.seed),
        trials: args.trials,
        steps: args.steps,
        learning_rate: args.lr,
    };
    let report = qnn_core::verify::run(set, &options)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_report(&report);
    }
    if let Some(path) = &args.output {
        std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if report.overall_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn print_report(report: &VerifyReport) {
    for check in &report.checks {
        println!(
            "{} {:<55} deviation {:>10.3e}  threshold {:>8.1e}",
            if check.pass { "PASS" } else { "FAIL" },
            check.name,
            check.deviation,
            check.threshold
        );
    }
    let passed = report.checks.iter().filter(|c| c.pass).count();
    println!(
        "{}/{} checks passed (seed {})",
        passed,
        report.checks.len(),
        report.seed
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { path } => cmd_validate(path),
        Command::Generate(args) => cmd_generate(args),
        Command::Compress(args) => cmd_compress(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
