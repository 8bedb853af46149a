//! `delam` command line.
//!
//! Exit codes: 0 success, 1 configuration or file error, 2 solver failure,
//! 3 invariant violation.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::config::{parse_config, SimulationConfig};
use super::convergence::run_convergence;
use super::output::{run_chi_sweep, run_single};
use super::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "delam", version, about = "Mode-sensitive delamination of a viscoelastic bar")]
struct Cli {
    /// Worker threads for multi-run commands.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Overrides `verification.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `outputs.directory`, then `results`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a refinement study with a fixed `tau / h`.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [27, 54, 81])]
        levels: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a configuration, then print it resolved.
    ValidateConfig { config: PathBuf },
    /// Write the mesh as CSV.
    MeshDump {
        #[arg(long)]
        config: PathBuf,
        /// Standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<SimulationConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = seed {
        cfg.verification.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cli: Option<PathBuf>, cfg: &SimulationConfig) -> PathBuf {
    cli.or_else(|| cfg.outputs.directory.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(&config, cli.seed)?;
            let dir = out_dir(out, &cfg);
            let outcome = run_single(&cfg, &dir)?;
            println!(
                "{} steps, end t = {:.6}, full debond at {}, results in {}",
                outcome.trajectory.reports.len(),
                outcome.trajectory.end_time(),
                outcome.full_debond_time.map_or("never".into(), |t| format!("{t:.6}")),
                dir.display()
            );
            if !cfg.material.chi_sweep.is_empty() {
                let runs = run_chi_sweep(&cfg, &dir)?;
                println!("chi sweep: {} runs in {}", runs.len(), dir.join("chi_sweep").display());
            }
        }
        Command::Converge { config, levels, out } => {
            let cfg = load(&config, cli.seed)?;
            let dir = out_dir(out, &cfg);
            let report = run_convergence(&cfg, &levels, &dir, cli.threads)?;
            for d in &report.distances {
                println!("levels {} -> {}: energy L2 {:.6e}, force L2 {:.6e}", d.coarse, d.fine, d.energy_l2, d.force_l2);
            }
            println!(
                "distances decrease: {}, norm spread {:?}, bounded: {}",
                report.distances_decrease, report.norm_spread, report.norms_bounded
            );
        }
        Command::ValidateConfig { config } => {
            let cfg = load(&config, cli.seed)?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            println!("config_hash={}", cfg.hash());
            if !cfg.defaults_applied.is_empty() {
                println!("defaults: {}", cfg.defaults_applied.join(", "));
            }
        }
        Command::MeshDump { config, out } => {
            let cfg = load(&config, cli.seed)?;
            let mesh = cfg.mesh()?;
            match out {
                Some(path) => {
                    let f = fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
                    mesh.write_csv(std::io::BufWriter::new(f)).map_err(|e| HarnessError::io(&path, e))?;
                }
                None => mesh
                    .write_csv(std::io::stdout().lock())
                    .map_err(|e| HarnessError::io("<stdout>", e))?,
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(parsed) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
