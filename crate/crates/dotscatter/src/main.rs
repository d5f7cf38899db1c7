use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dotscatter::config::{Side, SolverChoice, System};
use dotscatter::{dump, run_sweep, spectrum, CliError, PreparedSystem, Result, SweepConfig};

/// Few-particle scattering through quantum dots.
///
/// Exit status: 0 ok, 1 configuration or file error, 2 numerical failure
/// (including a sweep with too many failed rows).
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; without one the defaults of `--system` are used.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_system)]
    system: Option<System>,
    /// Turn the Coulomb interaction off.
    #[arg(long, global = true)]
    no_coulomb: bool,
    #[arg(long, global = true)]
    h_nm: Option<f64>,
    #[arg(long, global = true)]
    max_levels: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Bound levels, spacings, degeneracy groups and channel thresholds.
    Spectrum {
        #[arg(long)]
        json: bool,
        /// Also write the bound wavefunctions to this CSV.
        #[arg(long)]
        wavefunctions: Option<PathBuf>,
    },
    /// Energy sweep writing channel and entropy CSVs plus a provenance file.
    Sweep(SweepArgs),
    /// Single energy; prints amplitudes and entropy.
    SolveOne {
        #[arg(long = "t0")]
        t0: f64,
        /// Write psi to this file (text header, then little-endian complex128).
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long, value_parser = parse_solver)]
        solver: Option<SolverChoice>,
        #[arg(long, value_parser = parse_side)]
        post_selection: Option<Side>,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long = "t0-min")]
    t0_min: Option<f64>,
    #[arg(long = "t0-max")]
    t0_max: Option<f64>,
    #[arg(long)]
    num_steps: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    no_refine: bool,
    #[arg(long, value_parser = parse_solver)]
    solver: Option<SolverChoice>,
    #[arg(long, value_parser = parse_side)]
    post_selection: Option<Side>,
    #[arg(long)]
    channels_csv: Option<PathBuf>,
    #[arg(long)]
    entropy_csv: Option<PathBuf>,
    #[arg(long)]
    provenance: Option<PathBuf>,
}

fn enum_value<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

fn parse_system(s: &str) -> std::result::Result<System, String> {
    enum_value(s)
}

fn parse_solver(s: &str) -> std::result::Result<SolverChoice, String> {
    enum_value(s)
}

fn parse_side(s: &str) -> std::result::Result<Side, String> {
    enum_value(s)
}

fn load(common: &Common) -> Result<SweepConfig> {
    let mut config = match (&common.config, common.system) {
        (Some(path), system) => {
            let c = SweepConfig::load(path)?;
            if system.is_some_and(|s| s != c.system) {
                return Err(CliError::Config("--system disagrees with the config file".into()));
            }
            c
        }
        (None, system) => SweepConfig::for_system(system.unwrap_or(System::Qd2p)),
    };
    if common.no_coulomb {
        config.interaction.coulomb = false;
    }
    if let Some(h) = common.h_nm {
        config.geometry.h_nm = h;
    }
    if let Some(n) = common.max_levels {
        config.eigen.max_levels = n;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load(&cli.common)?;
    match cli.command {
        Command::Spectrum { json, wavefunctions } => {
            config.validate()?;
            let report = spectrum::report_spectrum(&config)?;
            spectrum::write_report(&report, json, &mut std::io::stdout())?;
            if let Some(path) = wavefunctions {
                spectrum::write_wavefunctions(&config, &path)?;
            }
        }
        Command::Sweep(a) => {
            let s = &mut config.sweep;
            s.t0_min = a.t0_min.unwrap_or(s.t0_min);
            s.t0_max = a.t0_max.unwrap_or(s.t0_max);
            s.num_steps = a.num_steps.unwrap_or(s.num_steps);
            s.threads = a.threads.unwrap_or(s.threads);
            s.refinement.enabled &= !a.no_refine;
            config.scattering.solver = a.solver.unwrap_or(config.scattering.solver);
            config.post_selection = a.post_selection.unwrap_or(config.post_selection);
            let o = &mut config.output;
            o.channels_csv = a.channels_csv.unwrap_or(o.channels_csv.clone());
            o.entropy_csv = a.entropy_csv.unwrap_or(o.entropy_csv.clone());
            o.provenance_json = a.provenance.unwrap_or(o.provenance_json.clone());
            let sys = PreparedSystem::prepare(&config)?;
            let result = run_sweep(&sys)?;
            let p = &result.provenance;
            println!(
                "{} rows ({} failed, {} flagged, {} resumed) in {:.1} s; wrote {}",
                p.rows,
                p.failed,
                p.flagged,
                p.resumed,
                p.sweep_seconds,
                config.output.channels_csv.display()
            );
            result.check_failures(config.sweep.failure_threshold)?;
        }
        Command::SolveOne {
            t0,
            dump: path,
            solver,
            post_selection,
        } => {
            config.scattering.solver = solver.unwrap_or(config.scattering.solver);
            config.post_selection = post_selection.unwrap_or(config.post_selection);
            let sys = PreparedSystem::prepare(&config)?;
            let sol = sys.solve(t0)?;
            for w in &sol.warnings {
                log::warn!("{w}");
            }
            let p = sys.point(&sol)?;
            let a = &p.amplitudes;
            println!("T0 = {:.9} meV, E = {:.9} meV, M = {}", p.t0, a.total_energy, p.entropy.m);
            println!("solver residual {:.3e}, iterations {}", p.solver_residual, p.iterations);
            println!("{:>4} {:>14} {:>14} {:>14} {:>14} {:>5}", "n", "E_n", "T_n", "R_n", "T_n prob", "open");
            for n in 0..sys.bound_energies().len() {
                let c = &a.channels[n];
                println!(
                    "{n:>4} {:>14.6} {:>14.6} {:>14.9} {:>14.9} {:>5}",
                    c.bound_energy,
                    c.kinetic,
                    a.reflection(n),
                    a.transmission(n),
                    c.open
                );
            }
            println!("unitarity defect {:.3e}", a.unitarity_defect);
            println!("xi = {:.12} (bound ln(M+1) = {:.6})", p.entropy.xi, p.entropy.upper_bound());
            if let Some(path) = path {
                let h = &sys.hamiltonian;
                dump::write_psi(&path, &sol, h.window_len(), h.bound_dims())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
