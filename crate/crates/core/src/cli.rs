//! Batch drivers behind the `capwave` subcommands.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{InitialData, RunConfig};
use crate::dno::{cancellation_residual, DnOperator};
use crate::error::{Error, Result};
use crate::evolution::{
    diagonalize, fit_frequency, hamiltonian, mass, monitor, run_observed, write_trajectory_csv, DiagnosticRecord,
    MonitorReport, RunOptions, Stepper, WaveState,
};
use crate::field::{Field, Grid};
use crate::paradiff::Quantizer;
use crate::smoothing::{
    auto_escape, bound_check, bound_rays, fastest_retained, garding_data, garding_family, garding_fit, kato_integral,
    model_form_symbol, resolution_sweep, KatoSample,
};
use crate::verify::{run_suite, Suite, SuiteReport};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GardingSummary {
    pub a: f64,
    #[serde(rename = "A")]
    pub big_a: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub delta: f64,
    pub eps_doi: f64,
    #[serde(rename = "K_measured")]
    pub k_measured: f64,
    pub kato_integral: f64,
    pub kato_undersampled: bool,
    pub resolution_sweep: Vec<KatoSample>,
    pub garding: GardingSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispersionReport {
    pub k: f64,
    pub omega_fit: f64,
    pub omega_linear: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub dt: f64,
    pub t_final: f64,
    pub energy_drift: f64,
    pub mass_drift: f64,
    pub aborted: Option<String>,
}

pub struct SimulateOutcome {
    pub summary: RunSummary,
    pub smoothing: Option<SmoothingReport>,
    pub dispersion: Option<DispersionReport>,
    pub monitor: MonitorReport,
}

fn relative(now: f64, then: f64) -> f64 {
    if then == 0.0 {
        (now - then).abs()
    } else {
        ((now - then) / then).abs()
    }
}

/// Runs one configured evolution and writes its artifacts under `cfg.output`.
/// A run that stops midway still writes what it has, plus an `ABORTED` marker.
pub fn simulate(cfg: &RunConfig) -> Result<SimulateOutcome> {
    let dir = &cfg.output;
    fs::create_dir_all(dir)?;
    write_json(&dir.join("config.json"), cfg)?;
    let grid = cfg.grid()?;
    let model = cfg.model()?;
    let initial = cfg.initial_state()?;
    let stepper = Stepper::new(&grid, model, cfg.system(), cfg.scheme, cfg.dt)?;
    let steps = (cfg.t_final / stepper.dt).round() as usize;
    let snap_dir = dir.join("snapshots");
    if cfg.snapshot_stride > 0 {
        fs::create_dir_all(&snap_dir)?;
    }
    let opts = RunOptions {
        steps,
        sample_every: cfg.sample_stride,
        snapshot_every: (cfg.snapshot_stride > 0).then_some(cfg.snapshot_stride),
        snapshot_dir: Some(snap_dir),
        regularity: cfg.regularity(),
    };

    let rays = bound_rays();
    let (esc, first) = auto_escape(initial.eta(), cfg.delta, cfg.eps_doi, &rays)?;
    let mut k_min = first.k_measured;
    let mode = match cfg.initial {
        InitialData::Mode { k, .. } => grid.slot(k as i64),
        _ => None,
    };
    let mut phases = Vec::new();
    let e0 = hamiltonian(&initial, &model)?.total;
    let m0 = mass(&initial);
    let omega_fast = fastest_retained(&initial, &model, 1e-8);

    let result = run_observed(initial, &stepper, &opts, |s: &WaveState| {
        k_min = k_min.min(bound_check(s.eta(), &esc, &rays)?.k_measured);
        if let Some(slot) = mode {
            phases.push((s.t, diagonalize(s, &model).spectrum()[slot]));
        }
        Ok(())
    })?;

    write_trajectory_csv(&result.records, &dir.join("trajectory.csv"))?;
    result.state.write_json(&dir.join("final_state.json"))?;
    let e1 = hamiltonian(&result.state, &model).map(|e| e.total).unwrap_or(f64::NAN);
    let summary = RunSummary {
        steps: result.steps,
        dt: stepper.dt,
        t_final: result.state.t,
        energy_drift: relative(e1, e0),
        mass_drift: (mass(&result.state) - m0).abs(),
        aborted: result.aborted.as_ref().map(|e| e.to_string()),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    let mon = monitor(&result.records)?;
    write_json(&dir.join("monitor.json"), &mon)?;
    if let Some(e) = result.aborted {
        fs::write(dir.join("ABORTED"), format!("{e}\n"))?;
        return Err(e);
    }

    let dispersion = match (cfg.initial, phases.len() >= 3) {
        (InitialData::Mode { k, .. }, true) => {
            let xi = k as f64 * 2.0 * PI / grid.length();
            let omega_linear = model.omega(xi);
            let omega_fit = fit_frequency(&phases).abs();
            let r = DispersionReport {
                k: xi,
                omega_fit,
                omega_linear,
                rel_error: (omega_fit - omega_linear).abs() / omega_linear,
            };
            write_json(&dir.join("dispersion.json"), &r)?;
            Some(r)
        }
        _ => None,
    };

    let kato = kato_integral(&result.records, omega_fast)?;
    let sweep = match cfg.initial {
        InitialData::Packet { amplitude, width } if !cfg.sweep.is_empty() => {
            resolution_sweep(&cfg.sweep, &cfg.packet_params(amplitude, width))?.samples
        }
        _ => vec![],
    };
    let q = Quantizer::new(&grid);
    let fit = garding_fit(
        &garding_data(&q, &model_form_symbol(&grid, cfg.delta, 1.0), cfg.delta, &garding_family(&grid, cfg.seed))?,
        cfg.garding_budget,
    )?;
    let smoothing = SmoothingReport {
        delta: cfg.delta,
        eps_doi: esc.eps,
        k_measured: k_min,
        kato_integral: kato.value,
        kato_undersampled: kato.undersampled,
        resolution_sweep: sweep,
        garding: GardingSummary {
            a: fit.a,
            big_a: fit.big_a,
        },
    };
    write_json(&dir.join("smoothing.json"), &smoothing)?;
    Ok(SimulateOutcome {
        summary,
        smoothing: Some(smoothing),
        dispersion,
        monitor: mon,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DnoTestReport {
    pub n: usize,
    pub nz: usize,
    pub iterations: usize,
    pub residual: f64,
    /// Largest relative mismatch with `|k| tanh(h |k|)` when the surface is flat.
    pub flat_oracle: Option<f64>,
    pub cancellation: f64,
    pub mean_of_output: f64,
}

/// Single DN evaluation with the configured surface. The Dirichlet data is the
/// profile's `psi`, or `cos(2 pi x / L)` when that vanishes.
pub fn dno_test(cfg: &RunConfig) -> Result<DnoTestReport> {
    let dir = &cfg.output;
    fs::create_dir_all(dir)?;
    let grid = cfg.grid()?;
    let state = cfg.initial_state()?;
    let k0 = 2.0 * PI / grid.length();
    let psi = if state.psi().norm_inf() > 0.0 {
        state.psi().clone()
    } else {
        Field::from_fn(&grid, |x| (k0 * x).cos())
    };
    let op = DnOperator::new(state.eta(), &cfg.geometry, cfg.nz)?;
    let sol = op.solve(&psi)?;
    let g_psi = op.trace(&sol);
    g_psi.write_csv(&dir.join("dn.csv"))?;
    sol.write_csv(&dir.join("strip.csv"))?;
    let flat_oracle = (state.eta().norm_inf() == 0.0).then(|| {
        let k = k0 * (grid.n() / 8).max(1) as f64;
        let probe = Field::from_fn(&grid, |x| (k * x).cos());
        op.dn(&probe)
            .map(|out| {
                let exact = cfg.geometry.flat_dn_symbol(k);
                let slot = grid.slot((grid.n() / 8).max(1) as i64).unwrap_or(0);
                (2.0 * out.spectrum()[slot].re - exact).abs() / exact
            })
            .unwrap_or(f64::NAN)
    });
    let report = DnoTestReport {
        n: grid.n(),
        nz: cfg.nz,
        iterations: sol.iterations,
        residual: sol.residual,
        flat_oracle,
        cancellation: cancellation_residual(&op, &psi)?.relative(),
        mean_of_output: g_psi.mean().norm(),
    };
    write_json(&dir.join("dno.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct DirReport {
    pub samples: usize,
    pub t_final: f64,
    pub monitor: MonitorReport,
    pub energy_drift: f64,
    pub h0_drift: f64,
    pub max_w: f64,
    pub smoothing: Option<SmoothingReport>,
    pub dispersion: Option<DispersionReport>,
    pub aborted: Option<String>,
}

pub fn read_trajectory(path: &Path) -> Result<Vec<DiagnosticRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    rdr.deserialize::<(f64, f64, f64, f64, f64, f64, f64)>()
        .map(|row| {
            let (t, eta_norm, psi_norm, m, h_total, h0, w) =
                row.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            Ok(DiagnosticRecord {
                t,
                eta_norm,
                psi_norm,
                m,
                h_total,
                h0,
                w,
            })
        })
        .collect()
}

fn read_optional<T: for<'de> Deserialize<'de>>(path: PathBuf) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
}

/// Re-reads a simulate output directory and condenses it into `report.json`.
pub fn report(dir: &Path) -> Result<DirReport> {
    let records = read_trajectory(&dir.join("trajectory.csv"))?;
    let (first, last) = match (records.first(), records.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Config(format!("{}: empty trajectory", dir.display()))),
    };
    let aborted = dir
        .join("ABORTED")
        .exists()
        .then(|| fs::read_to_string(dir.join("ABORTED")).unwrap_or_default().trim().to_string());
    let out = DirReport {
        samples: records.len(),
        t_final: last.t,
        monitor: monitor(&records)?,
        energy_drift: relative(last.h_total, first.h_total),
        h0_drift: relative(last.h0, first.h0),
        max_w: records.iter().map(|r| r.w).fold(0.0, f64::max),
        smoothing: read_optional(dir.join("smoothing.json"))?,
        dispersion: read_optional(dir.join("dispersion.json"))?,
        aborted,
    };
    write_json(&dir.join("report.json"), &out)?;
    Ok(out)
}

/// Runs the named suites in order.
pub fn verify(suites: &[Suite], seed: u64) -> Result<Vec<SuiteReport>> {
    suites.iter().map(|&s| run_suite(s, seed)).collect()
}

/// Grid used by quick self-checks of the drivers.
pub fn small_grid() -> Result<Grid> {
    Grid::new(32, 2.0 * PI)
}
