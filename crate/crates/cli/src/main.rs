//! Command-line driver: simulate fixtures, reconstruct phases, run
//! benchmark batches and derive setup parameters.

mod benchmark;
mod config;
mod failure;
mod fixture;
mod geometry;
mod reconstruct;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use holoretrieve::Method;

use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "holoretrieve", version, about = "Phase retrieval for near-field X-ray holography")]
struct Cli {
    /// TOML configuration for simulate, reconstruct and benchmark.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured reconstruction method.
    #[arg(long, global = true, value_parser = parse_method)]
    method: Option<Method>,
    /// Output directory; defaults to the configured one, else the config's directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, env = "HOLORETRIEVE_THREADS", default_value_t = 0)]
    threads: usize,
    /// Exit with status 0 even when the solver did not converge.
    #[arg(long, global = true)]
    allow_nonconverged: bool,
    /// Overrides the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate holograms of a sphere phantom and write a manifest.
    Simulate,
    /// Reconstruct a phase from holograms or a simulate manifest.
    Reconstruct,
    /// Run a list of scenarios and tabulate iterations and errors.
    Benchmark,
    /// Derive magnification, pixel size and Fresnel numbers of a cone-beam setup.
    Geometry {
        /// Source-to-sample distances in metres, comma separated.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        source_sample: Vec<f64>,
        /// Source-to-detector distance in metres.
        #[arg(long)]
        source_detector: f64,
        /// Detector pixel pitch in metres.
        #[arg(long)]
        pitch: f64,
        /// Photon energy in keV.
        #[arg(long)]
        energy: f64,
        #[arg(long, value_enum, default_value_t = geometry::Format::Text)]
        format: geometry::Format,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "ctf" => Ok(Method::Ctf),
        "cctf" => Ok(Method::Cctf),
        "nltikh" => Ok(Method::Nltikh),
        _ => Err(format!("unknown method `{s}`; expected ctf, cctf or nltikh")),
    }
}

fn require_config(cli: &Cli) -> Result<&std::path::Path, Failure> {
    cli.config
        .as_deref()
        .ok_or_else(|| Failure::Validation(vec!["--config: required for this command".into()]))
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::Validation(vec![format!("--threads: {e}")]))?;
    }
    match &cli.command {
        Command::Simulate => {
            let manifest = simulate::run(&simulate::SimulateArgs {
                config: require_config(cli)?,
                out: cli.out.as_deref(),
                seed: cli.seed,
            })?;
            println!("wrote {}", manifest.display());
        }
        Command::Reconstruct => {
            let dir = reconstruct::run(&reconstruct::ReconstructArgs {
                config: require_config(cli)?,
                method: cli.method,
                out: cli.out.as_deref(),
                seed: cli.seed,
                allow_nonconverged: cli.allow_nonconverged,
            })?;
            println!("wrote {}", dir.display());
        }
        Command::Benchmark => {
            let dir = benchmark::run(&benchmark::BenchmarkArgs {
                config: require_config(cli)?,
                out: cli.out.as_deref(),
                seed: cli.seed,
            })?;
            println!("wrote {}", dir.join("results.csv").display());
        }
        Command::Geometry { source_sample, source_detector, pitch, energy, format } => {
            print!(
                "{}",
                geometry::run(&geometry::GeometryArgs {
                    source_sample,
                    source_detector: *source_detector,
                    pixel_pitch: *pitch,
                    energy_kev: *energy,
                    format: *format,
                })?
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprint!("{f}");
            if !matches!(f, Failure::Validation(_)) {
                eprintln!();
            }
            f.exit_code()
        }
    }
}
