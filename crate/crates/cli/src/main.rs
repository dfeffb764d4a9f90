use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use ihox_core::dyson::disentangle;
use ihox_core::report::{
    divergence_demo, run_verification, trajectory, write_divergence_csv, write_trajectory_csv, RunConfig, DEFAULT_SEED,
};
use ihox_core::{Error, PhysicalParams};

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

#[derive(Parser)]
#[command(name = "ihox")]
#[command(about = "Checks the Dyson map between the harmonic and the inverted oscillator")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Run the verification suite and emit a JSON report
    Verify {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Emit the quasi-classical trajectory as CSV
    Trajectory {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the disentangling parameters for (epsilon, mu+, mu-)
    Disentangle {
        #[arg(long, allow_hyphen_values = true)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        mu_plus_re: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        mu_plus_im: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        mu_minus_re: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        mu_minus_im: f64,
        /// Print JSON instead of text
        #[arg(long)]
        json: bool,
    },
    /// Norm of the naively continued ground state vs. the Hermitian one on growing boxes
    DemoDivergence {
        /// Largest half-width of the box
        #[arg(long, default_value_t = 8.0)]
        box_l: f64,
        /// Grid points per box (odd, >= 101)
        #[arg(long, default_value_t = 1001)]
        grid_n: usize,
        /// Number of nested boxes
        #[arg(long, default_value_t = 8)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Fock-space truncation
    #[arg(long, default_value_t = 128)]
    n_trunc: usize,
    /// Sub-block on which relations are compared (default n_trunc/4)
    #[arg(long)]
    sub_block: Option<usize>,
    /// Dimension used for state transport (default min(64, n_trunc))
    #[arg(long)]
    metric_dim: Option<usize>,
    #[arg(long, default_value_t = 1e-10)]
    tol_exact: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol_evolution: f64,
    #[arg(long, default_value_t = 1e-3)]
    tol_quadrature: f64,
    #[arg(long, default_value_t = 1.0)]
    hbar: f64,
    #[arg(long, default_value_t = 1.0)]
    mass: f64,
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    alpha_re: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha_im: f64,
    #[arg(long, default_value_t = 1.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Seed for the randomized parameter-box samples
    #[arg(long, env = "IHOX_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Allow omega*t_max > 1
    #[arg(long = "unsafe")]
    allow_unsafe: bool,
    /// Write to this file instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            n_trunc: self.n_trunc,
            sub_block: self.sub_block.unwrap_or(self.n_trunc / 4),
            metric_dim: self.metric_dim.unwrap_or(self.n_trunc.min(64)),
            tol_exact: self.tol_exact,
            tol_evolution: self.tol_evolution,
            tol_quadrature: self.tol_quadrature,
            hbar: self.hbar,
            mass: self.mass,
            omega: self.omega,
            alpha_re: self.alpha_re,
            alpha_im: self.alpha_im,
            t_max: self.t_max,
            dt: self.dt,
            seed: self.seed,
            allow_unsafe: self.allow_unsafe,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParams(_) => EXIT_CONFIG,
        Error::DegenerateDisentangle { .. } | Error::ZeroVZero | Error::BranchCut(_) | Error::DegenerateState(_) => {
            EXIT_DEGENERATE
        }
        _ => EXIT_FAIL,
    }
}

fn open_output(path: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<u8, (u8, String)> {
    let core = |e: Error| (exit_code(&e), e.to_string());
    let io = |e: io::Error| (EXIT_FAIL, format!("i/o: {e}"));
    match cli.command {
        Commands::Verify { run } => {
            let cfg = run.config();
            cfg.validate().map_err(core)?;
            let report = run_verification(&cfg).map_err(core)?;
            let mut out = open_output(run.output.as_ref()).map_err(io)?;
            serde_json::to_writer_pretty(&mut out, &report).map_err(|e| (EXIT_FAIL, format!("json: {e}")))?;
            writeln!(out).map_err(io)?;
            out.flush().map_err(io)?;
            for c in report.checks.iter().filter(|c| !c.pass) {
                eprintln!("FAIL {}: residual {:.3e} (tol {:.1e})", c.name, c.residual, c.tol);
            }
            Ok(if report.pass { 0 } else { EXIT_FAIL })
        }
        Commands::Trajectory { run } => {
            let cfg = run.config();
            let traj = trajectory(&cfg).map_err(core)?;
            if let Some(w) = &traj.warning {
                eprintln!("warning: {w}");
            }
            let out = open_output(run.output.as_ref()).map_err(io)?;
            write_trajectory_csv(&traj, out).map_err(core)?;
            Ok(0)
        }
        Commands::Disentangle { epsilon, mu_plus_re, mu_plus_im, mu_minus_re, mu_minus_im, json } => {
            let d = disentangle(epsilon, Complex64::new(mu_plus_re, mu_plus_im), Complex64::new(mu_minus_re, mu_minus_im))
                .map_err(core)?;
            if json {
                let mut v = serde_json::to_value(d).map_err(|e| (EXIT_FAIL, format!("json: {e}")))?;
                v["consistency_residual"] = serde_json::json!(d.consistency_residual());
                println!("{}", serde_json::to_string_pretty(&v).unwrap());
            } else {
                let c = |z: Complex64| format!("{:.15e} {:+.15e}i", z.re, z.im);
                println!("theta    = {}", c(d.theta));
                println!("chi      = {}", c(d.chi));
                println!("v_plus   = {}", c(d.v_plus));
                println!("v_minus  = {}", c(d.v_minus));
                println!("v_zero   = {}", c(d.v_zero));
                println!("consistency_residual = {:.3e}", d.consistency_residual());
            }
            Ok(0)
        }
        Commands::DemoDivergence { box_l, grid_n, steps, hbar, mass, omega, output } => {
            let params = PhysicalParams::new(hbar, mass, omega, 4).map_err(core)?;
            let rows = divergence_demo(&params, box_l, steps, grid_n).map_err(core)?;
            let out = open_output(output.as_ref()).map_err(io)?;
            write_divergence_csv(&rows, out).map_err(core)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
