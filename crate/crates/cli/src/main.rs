//! `nmqnet` command-line front end.
//!
//! Exit codes: 0 success, 1 a result assertion failed (`fig4` ordering),
//! 2 configuration or validation error, 3 runtime invariant failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{AssertionFailed, RuntimeFailure};
use nmqnet::control::Topology;

#[derive(Parser, Debug)]
#[command(name = "nmqnet", version, about = "Non-Markovian quantum input-output network simulator")]
struct Cli {
    /// Output file (simulate, transfer, control); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output directory (fig4, sweep).
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for parallel runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TopologyArg {
    Feedforward,
    Feedback,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the solver described by a JSON config and write a CSV.
    Simulate { config: PathBuf },
    /// Tabulate the transfer function T(iω) of a linear cavity.
    Transfer {
        #[arg(long, allow_hyphen_values = true)]
        omega0: f64,
        /// flat:gamma=G | lorentzian:g=G,gamma=K,omega_c=W | tabulated:path=FILE
        #[arg(long)]
        kernel: String,
        #[arg(long, allow_hyphen_values = true)]
        wmin: f64,
        #[arg(long, allow_hyphen_values = true)]
        wmax: f64,
        #[arg(long, default_value_t = 1001)]
        points: usize,
    },
    /// Two-qubit concurrence family (τ = 10 ns) and half-time summary.
    Fig4 {
        /// Step in units of τ.
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        /// Duration in units of τ.
        #[arg(long, default_value_t = 80.0)]
        t_end: f64,
        /// Skip the time-nonlocal solver.
        #[arg(long)]
        no_full: bool,
        /// Add an uncoupled g = 0 row.
        #[arg(long)]
        include_g0: bool,
    },
    /// Full versus eliminated-controller plant dynamics.
    Control {
        #[arg(long, value_enum)]
        topology: TopologyArg,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        omega_a: f64,
        #[arg(long, default_value_t = 0.5)]
        gamma_a: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        delta_q: f64,
        /// Qubit drive μ_d (real); defaults to 0.5 for feedforward, 0 for feedback.
        #[arg(long, allow_hyphen_values = true)]
        mu_d: Option<f64>,
        #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
        g_qb: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma_b: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        omega_b: f64,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 3)]
        fock_b: usize,
        #[arg(long, default_value_t = 5)]
        fock_a: usize,
        /// Initial plant amplitude; defaults to 0 for feedforward, 0.5 for feedback.
        #[arg(long, allow_hyphen_values = true)]
        a0: Option<f64>,
    },
    /// Run a config once per value of one parameter (JSON pointer).
    Sweep {
        config: PathBuf,
        /// e.g. /nodes/0/kernel/gamma
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
    },
}

/// Maps an error to the process exit code.
pub(crate) fn exit_code(err: Option<&anyhow::Error>) -> u8 {
    let Some(err) = err else { return 0 };
    if err.downcast_ref::<AssertionFailed>().is_some() {
        return 1;
    }
    let invariant = err.downcast_ref::<RuntimeFailure>().is_some()
        || err
            .chain()
            .filter_map(|e| e.downcast_ref::<nmqnet::Error>())
            .any(|e| matches!(e, nmqnet::Error::InvariantViolation { .. }));
    if invariant {
        3
    } else {
        2
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Simulate { config } => commands::simulate(&config, out),
        Command::Transfer { omega0, kernel, wmin, wmax, points } => {
            commands::transfer(&commands::TransferArgs { omega0, kernel, wmin, wmax, points }, out)
        }
        Command::Fig4 { dt, t_end, no_full, include_g0 } => {
            commands::fig4(&commands::Fig4Args { dt, t_end, full: !no_full, include_g0 }, &cli.out_dir)
        }
        Command::Control {
            topology,
            omega_a,
            gamma_a,
            delta_q,
            mu_d,
            g_qb,
            gamma_b,
            omega_b,
            t_end,
            dt,
            fock_b,
            fock_a,
            a0,
        } => {
            let topology = match topology {
                TopologyArg::Feedforward => Topology::Feedforward,
                TopologyArg::Feedback => Topology::Feedback,
            };
            let feedback = topology == Topology::Feedback;
            let args = commands::ControlArgs {
                topology,
                omega_a,
                gamma_a,
                delta_q,
                mu_d: mu_d.unwrap_or(if feedback { 0.0 } else { 0.5 }),
                g_qb,
                gamma_b,
                omega_b,
                t_end,
                dt,
                fock_b,
                fock_a,
                a0: a0.unwrap_or(if feedback { 0.5 } else { 0.0 }),
            };
            commands::control(&args, out)
        }
        Command::Sweep { config, param, values } => {
            let results = commands::sweep(&commands::SweepArgs { config, param, values }, &cli.out_dir)?;
            let failed: Vec<_> = results.iter().enumerate().filter_map(|(k, r)| r.as_ref().err().map(|e| (k, e))).collect();
            for (k, e) in &failed {
                eprintln!("run {k}: {e:#}");
            }
            match failed.iter().map(|(_, e)| exit_code(Some(e))).max() {
                Some(3) => Err(RuntimeFailure(format!("{} sweep run(s) failed", failed.len())).into()),
                Some(_) => anyhow::bail!("{} sweep run(s) failed", failed.len()),
                None => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(Some(&e)))
        }
    }
}
