use std::path::PathBuf;
use std::process::ExitCode;

use capwave::cli;
use capwave::config::RunConfig;
use capwave::verify::Suite;
use capwave::Error;
use clap::{Parser, Subcommand};

const EXIT_VALIDATION: u8 = 1;
const EXIT_ASSERTION: u8 = 3;

/// Gravity-capillary water-wave numerical lab.
#[derive(Parser)]
#[command(name = "capwave", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve the configured initial data and write trajectory, snapshots and reports.
    Simulate { config: PathBuf },
    /// Run an oracle battery: dno, calculus, symbols, smoothing or all.
    Verify {
        suite: String,
        /// Write the JSON summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// One Dirichlet-Neumann evaluation with strip dump.
    DnoTest { config: PathBuf },
    /// Summarize a simulate output directory.
    Report { dir: PathBuf },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn set_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("CAPWAVE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("CAPWAVE_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_VALIDATION) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = set_threads() {
        return fail(&e);
    }
    match cli.cmd {
        Cmd::Simulate { config } => {
            let cfg = match RunConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match cli::simulate(&cfg) {
                Ok(out) => {
                    let s = &out.summary;
                    println!("steps {} dt {:.3e} t {:.4}", s.steps, s.dt, s.t_final);
                    println!("energy drift {:.3e} mass drift {:.3e}", s.energy_drift, s.mass_drift);
                    println!("monitor c {:.4e}, jumps {}", out.monitor.c, out.monitor.jumps.len());
                    if let Some(d) = &out.dispersion {
                        println!("dispersion k {:.4} fit {:.8} linear {:.8} rel {:.2e}", d.k, d.omega_fit, d.omega_linear, d.rel_error);
                    }
                    if let Some(sm) = &out.smoothing {
                        println!("K {:.4e} kato {:.4e} garding a {:.4e}", sm.k_measured, sm.kato_integral, sm.garding.a);
                    }
                    println!("outputs in {}", cfg.output.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Cmd::Verify { suite, out, seed } => {
            let suites: Vec<Suite> = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                match suite.parse() {
                    Ok(s) => vec![s],
                    Err(e) => return fail(&e),
                }
            };
            let reports = match cli::verify(&suites, seed) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            for r in &reports {
                for c in &r.checks {
                    eprintln!(
                        "[{}] {:<10} {:<48} {:.4e} ({:?} {:.3e})",
                        if c.pass { "pass" } else { "FAIL" },
                        r.suite.name(),
                        c.name,
                        c.measured,
                        c.bound,
                        c.threshold
                    );
                }
            }
            let json = match serde_json::to_string_pretty(&reports) {
                Ok(j) => j,
                Err(e) => return fail(&e.into()),
            };
            match out {
                Some(p) => {
                    if let Err(e) = std::fs::write(&p, json) {
                        return fail(&e.into());
                    }
                }
                None => println!("{json}"),
            }
            if reports.iter().all(|r| r.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ASSERTION)
            }
        }
        Cmd::DnoTest { config } => {
            let r = RunConfig::from_file(&config).and_then(|cfg| cli::dno_test(&cfg));
            match r {
                Ok(r) => {
                    println!("{}", serde_json::to_string_pretty(&r).unwrap_or_default());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Cmd::Report { dir } => match cli::report(&dir) {
            Ok(r) => {
                println!("{}", serde_json::to_string_pretty(&r).unwrap_or_default());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
