use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use combnet_cli::bench::{self, BenchOptions, DEFAULT_WARMUP};
use combnet_cli::infer::{self, FrameSource, InferArgs};
use combnet_cli::verify::{self, VerifyOptions};
use combnet_cli::{count, graph_for, load_config, resolve_seed, CliError, CliResult};
use combnet_core::graph::{init_weights, save_weights, Backend};

#[derive(Parser)]
#[command(name = "combnet", version, about = "Compact 2.5D hand keypoint network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML); the built-in reference configuration otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for weights and test data. COMBNET_SEED overrides it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Reference,
    Optimized,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer parameters and FLOPs, totals, and deployed weight-file size.
    Count {
        #[command(flatten)]
        common: Common,
    },
    /// Run the oracle-equivalence and gradient suites.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Random convolution cases.
        #[arg(long, default_value_t = 100)]
        cases: usize,
        /// Add this value to every packed kernel weight (fault injection).
        #[arg(long)]
        perturb: Option<f32>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time full forwards and individual layer classes.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Only time this backend's full forward.
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = DEFAULT_WARMUP)]
        warmup: usize,
        /// Write the CSV report here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Keypoints for one frame, as JSON.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
        /// Amplitude image (16-bit PGM).
        #[arg(long, required_unless_present = "phases", conflicts_with = "phases")]
        amplitude: Option<PathBuf>,
        /// Four phase images (16-bit PGM), combined into an amplitude image.
        #[arg(long, num_args = 4, value_names = ["P0", "P1", "P2", "P3"])]
        phases: Option<Vec<PathBuf>>,
        /// Depth image in millimetres (16-bit PGM), same size as the input.
        #[arg(long)]
        depth: PathBuf,
        /// Output file; standard output otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write seeded initial weights for the configured network.
    Init {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Include the training-only heads.
        #[arg(long)]
        all_heads: bool,
    },
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Count { common } => {
            let cfg = load_config(common.config.as_deref())?;
            let report = count::run(&cfg, resolve_seed(common.seed)?)?;
            print!("{}", report.render());
        }
        Command::Verify {
            common,
            cases,
            perturb,
            out,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let opts = VerifyOptions {
                seed: resolve_seed(common.seed)?,
                cases,
                perturb,
            };
            let report = verify::run(&cfg, opts)?;
            print!("{}", report.render());
            if let Some(p) = out {
                emit(&report.render(), Some(&p))?;
            }
            verify::check(&report)?;
        }
        Command::Bench {
            common,
            backend,
            iters,
            warmup,
            csv,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let opts = BenchOptions {
                seed: resolve_seed(common.seed)?,
                iters,
                warmup,
                backend: backend.map(|b| match b {
                    BackendArg::Reference => Backend::Reference,
                    BackendArg::Optimized => Backend::Optimized,
                }),
            };
            let report = bench::run(&cfg, opts)?;
            print!("{}", report.render_table());
            if let Some(p) = csv {
                emit(&report.to_csv(), Some(&p))?;
            }
        }
        Command::Infer {
            common,
            weights,
            amplitude,
            phases,
            depth,
            out,
        } => {
            let cfg = load_config(common.config.as_deref())?;
            let source = match (amplitude, phases) {
                (Some(a), None) => FrameSource::Amplitude(a),
                (None, Some(p)) => FrameSource::Phases(
                    p.try_into().map_err(|_| CliError::Input("--phases needs four images".into()))?,
                ),
                _ => return Err(CliError::Input("give either --amplitude or --phases".into())),
            };
            let result = infer::run(&cfg, &InferArgs { weights, source, depth })?;
            emit(&(result.to_json() + "\n"), out.as_deref())?;
        }
        Command::Init { common, out, all_heads } => {
            let cfg = load_config(common.config.as_deref())?;
            let g = graph_for(&cfg)?;
            let ws = init_weights(&g, resolve_seed(common.seed)?);
            let ws = if all_heads { ws } else { ws.inference_subset(&g)? };
            let bytes = save_weights(&ws, &out)?;
            println!("wrote {bytes} bytes to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("combnet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
