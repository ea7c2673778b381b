//! Batch CLI for the floor plan estimation pipeline.
//!
//! Thin wrapper over the library: `run` turns a keyframe stream into a floor
//! plan, `synth` renders a scene spec into a stream plus ground truth, `eval`
//! scores a prediction, `debug-maps` dumps per-room density images.
//!
//! Exit codes: 0 success, 1 input error, 2 pipeline failure.

use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use floorscan::config::PipelineConfig;
use floorscan::pipeline::{
    evaluate, read_ground_truth, read_output, run_pipeline, write_debug_maps, write_ground_truth,
    write_output,
};
use floorscan::stream::{read_stream, write_stream, KeyframeRecord};
use floorscan::synth::{generate, SceneSpec};

#[derive(Parser)]
#[command(name = "floorscan", about = "Sequential floor plan estimation from keyframe streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config file (flat key = value lines); defaults apply if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Keyframe stream path, or '-' for standard input.
    #[arg(long)]
    input: String,
    /// Floor plan output path (JSON).
    #[arg(long)]
    output: PathBuf,
    /// Override the RANSAC seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scale warm-up fraction.
    #[arg(long)]
    warmup: Option<f64>,
    /// Dump per-room H / M_P / M_H and per-round polygon images here.
    #[arg(long)]
    dump_debug: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec path (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Keyframe stream output path.
    #[arg(long)]
    output: PathBuf,
    /// Ground truth bundle output path.
    #[arg(long)]
    ground_truth: PathBuf,
    /// Override the scene seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Floor plan prediction path (JSON, as written by `run`).
    #[arg(long)]
    prediction: PathBuf,
    /// Ground truth bundle path (JSON, as written by `synth`).
    #[arg(long)]
    ground_truth: PathBuf,
    /// Report output path; stdout if omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DebugMapsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Keyframe stream path, or '-' for standard input.
    #[arg(long)]
    input: String,
    /// Directory for the dumped images.
    #[arg(long)]
    dump_debug: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    warmup: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a floor plan from a keyframe stream.
    Run(RunArgs),
    /// Generate a synthetic keyframe stream and its ground truth.
    Synth(SynthArgs),
    /// Score a prediction against ground truth.
    Eval(EvalArgs),
    /// Run the pipeline and dump per-room debug images only.
    DebugMaps(DebugMapsArgs),
}

const EXIT_INPUT: u8 = 1;
const EXIT_PIPELINE: u8 = 2;

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn load_config(
    path: Option<&Path>,
    seed: Option<u64>,
    warmup: Option<f64>,
) -> Result<PipelineConfig, String> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("reading config {}: {e}", p.display()))?;
            PipelineConfig::parse(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = seed {
        config.ransac.seed = seed;
    }
    if let Some(warmup) = warmup {
        config.scale.warmup_fraction = warmup;
        config
            .validate()
            .map_err(|e| format!("--warmup {warmup}: {e}"))?;
    }
    Ok(config)
}

fn load_stream(input: &str) -> Result<Vec<KeyframeRecord>, String> {
    let result = if input == "-" {
        let stdin = std::io::stdin();
        read_stream(BufReader::new(stdin.lock()))
    } else {
        let file = std::fs::File::open(input).map_err(|e| format!("opening {input}: {e}"))?;
        read_stream(BufReader::new(file))
    };
    result.map_err(|e| format!("reading stream {input}: {e}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let config = match load_config(args.config.as_deref(), args.seed, args.warmup) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_INPUT, e),
            };
            let records = match load_stream(&args.input) {
                Ok(r) => r,
                Err(e) => return fail(EXIT_INPUT, e),
            };
            let run = match run_pipeline(&records, &config) {
                Ok(r) => r,
                Err(e) => return fail(EXIT_PIPELINE, e),
            };
            if let Some(dir) = &args.dump_debug {
                if let Err(e) = write_debug_maps(&run, dir) {
                    return fail(EXIT_PIPELINE, e);
                }
            }
            if let Err(e) = write_output(&args.output, &run.output) {
                return fail(EXIT_PIPELINE, e);
            }
            println!(
                "{} rooms, scale {:.4} -> {}",
                run.output.rooms.len(),
                run.output.scale_used,
                args.output.display()
            );
            ExitCode::SUCCESS
        }
        Command::Synth(args) => {
            let text = match std::fs::read_to_string(&args.spec) {
                Ok(t) => t,
                Err(e) => return fail(EXIT_INPUT, format!("reading {}: {e}", args.spec.display())),
            };
            let mut spec: SceneSpec = match serde_json::from_str(&text) {
                Ok(s) => s,
                Err(e) => return fail(EXIT_INPUT, format!("{}: {e}", args.spec.display())),
            };
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            let (records, gt) = match generate(&spec) {
                Ok(pair) => pair,
                Err(e) => return fail(EXIT_PIPELINE, e),
            };
            let write = std::fs::File::create(&args.output)
                .map_err(|e| format!("creating {}: {e}", args.output.display()))
                .and_then(|f| {
                    write_stream(std::io::BufWriter::new(f), &records)
                        .map_err(|e| e.to_string())
                });
            if let Err(e) = write {
                return fail(EXIT_PIPELINE, e);
            }
            if let Err(e) = write_ground_truth(&args.ground_truth, &gt) {
                return fail(EXIT_PIPELINE, e);
            }
            println!(
                "{} keyframes -> {}, ground truth -> {}",
                records.len(),
                args.output.display(),
                args.ground_truth.display()
            );
            ExitCode::SUCCESS
        }
        Command::Eval(args) => {
            let prediction = match read_output(&args.prediction) {
                Ok(p) => p,
                Err(e) => {
                    return fail(EXIT_INPUT, format!("{}: {e}", args.prediction.display()))
                }
            };
            let gt = match read_ground_truth(&args.ground_truth) {
                Ok(g) => g,
                Err(e) => {
                    return fail(EXIT_INPUT, format!("{}: {e}", args.ground_truth.display()))
                }
            };
            let report = match evaluate(&prediction, &gt) {
                Ok(r) => r,
                Err(e) => return fail(EXIT_PIPELINE, e),
            };
            let text = report.to_text();
            match &args.output {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, &text) {
                        return fail(EXIT_PIPELINE, e);
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::SUCCESS
        }
        Command::DebugMaps(args) => {
            let config = match load_config(args.config.as_deref(), args.seed, args.warmup) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_INPUT, e),
            };
            let records = match load_stream(&args.input) {
                Ok(r) => r,
                Err(e) => return fail(EXIT_INPUT, e),
            };
            let run = match run_pipeline(&records, &config) {
                Ok(r) => r,
                Err(e) => return fail(EXIT_PIPELINE, e),
            };
            if let Err(e) = write_debug_maps(&run, &args.dump_debug) {
                return fail(EXIT_PIPELINE, e);
            }
            println!("debug maps -> {}", args.dump_debug.display());
            ExitCode::SUCCESS
        }
    }
}
