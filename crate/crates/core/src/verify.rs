//! Oracle batteries behind `capwave verify <suite>`.

use std::f64::consts::PI;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::dno::{cancellation_residual, dirichlet_neumann, shape_derivative, DnOperator, Geometry};
use crate::error::{Error, Result};
use crate::field::{japanese, Field, Grid};
use crate::paradiff::{adjoint_symbol, compose, remainder_order, ParaOp, ProbeReport, Quantizer};
use crate::smoothing::{
    auto_escape, bound_rays, garding_data, garding_family, garding_fit, model_form_symbol, resolution_sweep,
    PacketParams, ResolutionSweep,
};
use crate::symbols::{
    curvature_symbol, default_rays, dn_symbol, factorization, parametrix, sup_scaled, symbol_identities, symmetrizer,
    test_surface, Symbol,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Dno,
    Calculus,
    Symbols,
    Smoothing,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Dno, Suite::Symbols, Suite::Calculus, Suite::Smoothing];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Dno => "dno",
            Suite::Calculus => "calculus",
            Suite::Symbols => "symbols",
            Suite::Smoothing => "smoothing",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite `{s}` (expected dno, calculus, symbols or smoothing)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

/// One invariant with its measured value.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: Bound,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound: Bound::AtMost,
            threshold,
            pass: measured <= threshold,
        }
    }

    pub fn at_least(name: &str, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound: Bound::AtLeast,
            threshold,
            pass: measured >= threshold,
        }
    }

    fn from_probe(r: &ProbeReport) -> Self {
        Self::at_least(&format!("remainder gain {}", r.claim), r.measured, r.claimed_gain - 0.25)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self { suite, checks, pass }
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Dno => dno_checks()?,
        Suite::Symbols => symbol_checks()?,
        Suite::Calculus => calculus_checks()?,
        Suite::Smoothing => smoothing_checks(seed)?,
    };
    Ok(SuiteReport::new(suite, checks))
}

/// Largest relative error of `G(0) cos(kx)` against `k tanh k` over `1 <= k <= kmax`.
pub fn flat_dn_error(n: usize, nz: usize, kmax: i64) -> Result<f64> {
    let g = Grid::new(n, 2.0 * PI)?;
    let geo = Geometry::flat(1.0);
    let op = DnOperator::new(&Field::zeros(&g), &geo, nz)?;
    let mut worst: f64 = 0.0;
    for k in 1..=kmax {
        let psi = Field::from_fn(&g, |x| (k as f64 * x).cos());
        let out = op.dn(&psi)?;
        let exact = geo.flat_dn_symbol(k as f64);
        let slot = g.slot(k).ok_or_else(|| Error::InvalidInput(format!("mode {k} off the grid")))?;
        worst = worst.max((2.0 * out.spectrum()[slot].re - exact).abs() / exact);
    }
    Ok(worst)
}

/// Relative `L^2` gap between the analytic shape derivative and a centered
/// difference with step `eps`.
pub fn shape_derivative_error(n: usize, nz: usize, eps: f64) -> Result<f64> {
    let g = Grid::new(n, 2.0 * PI)?;
    let geo = Geometry::flat(1.0);
    let eta = Field::from_fn(&g, |x| 0.1 * x.cos() + 0.05 * (2.0 * x).sin());
    let psi = Field::from_fn(&g, |x| x.sin() + 0.3 * (3.0 * x).cos());
    let h = Field::from_fn(&g, |x| (2.0 * x).cos() + 0.5 * x.sin());
    let op = DnOperator::new(&eta, &geo, nz)?;
    let an = shape_derivative(&op, &psi, &h)?;
    let gp = dirichlet_neumann(&(&eta + &h.scale(eps)), &psi, &geo, nz)?;
    let gm = dirichlet_neumann(&(&eta - &h.scale(eps)), &psi, &geo, nz)?;
    let fd = (&gp - &gm).scale(0.5 / eps);
    Ok((&fd - &an).l2_quadrature() / an.l2_quadrature())
}

/// Relative cancellation residual for `eta = 0.1 cos x`, `psi = sin x`.
pub fn cancellation_error(n: usize, nz: usize, depth: f64) -> Result<f64> {
    let g = Grid::new(n, 2.0 * PI)?;
    let eta = Field::from_fn(&g, |x| 0.1 * x.cos());
    let psi = Field::from_fn(&g, |x| x.sin());
    let op = DnOperator::new(&eta, &Geometry::flat(depth), nz)?;
    Ok(cancellation_residual(&op, &psi)?.relative())
}

fn dno_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let t = Instant::now();
    out.push(Check::at_most("flat oracle k tanh k, |k| <= 20", flat_dn_error(256, 48, 20)?, 1e-8));
    out.push(Check::at_most("flat oracle runtime [s]", t.elapsed().as_secs_f64(), 5.0));

    let g = Grid::new(64, 2.0 * PI)?;
    let op = DnOperator::new(&test_surface(&g, 0.1), &Geometry::flat(1.0), 24)?;
    let psi = Field::from_fn(&g, |x| x.sin() + 0.2 * (3.0 * x).cos());
    let (it, dense) = (op.solve(&psi)?, op.solve_dense(&psi)?);
    let gap = (&op.trace(&it) - &op.trace(&dense)).l2_quadrature() / op.trace(&dense).l2_quadrature();
    out.push(Check::at_most("iterative vs dense solve", gap, 1e-9));

    let strip = DnOperator::new(&test_surface(&g, 0.1), &Geometry::strip(1.0), 24)?;
    let mean = strip.dn(&psi)?.mean().norm();
    out.push(Check::at_most("mass conservation of G(eta) psi (strip)", mean, 1e-10));

    let (e1, e2) = (shape_derivative_error(128, 32, 0.02)?, shape_derivative_error(128, 32, 0.01)?);
    out.push(Check::at_least("shape derivative Richardson ratio", e1 / e2, 3.5));
    out.push(Check::at_most("shape derivative Richardson ratio (upper)", e1 / e2, 4.5));
    out.push(Check::at_most("shape derivative error at eps = 1e-4", shape_derivative_error(128, 32, 1e-4)?, 1e-5));

    // Chebyshev convergence is geometric until the finite-depth floor
    // (about e^{-2 h} relative) is reached, so refinement is probed above it
    let c: Vec<f64> = [8, 12, 16, 24]
        .into_iter()
        .map(|nz| cancellation_error(256, nz, 10.0))
        .collect::<Result<_>>()?;
    let worst_ratio = c.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    out.push(Check::at_most("cancellation refinement ratio, nz 8..24", worst_ratio, 0.1));
    out.push(Check::at_most("cancellation residual at nz = 64", cancellation_error(256, 64, 10.0)?, 1e-5));
    Ok(out)
}

fn symbol_checks() -> Result<Vec<Check>> {
    let g = Grid::new(128, 2.0 * PI)?;
    let eta = test_surface(&g, 0.2);
    let rays = default_rays();
    let id = symbol_identities(&eta, &rays);
    let mut out = vec![
        Check::at_most("DN symbol sub-principal symmetry", id.dn_symmetry, 1e-10),
        Check::at_most("DN symbol equals |xi|", id.dn_flat_reduction, 1e-12),
        Check::at_most("q transport equation", id.q_transport, 1e-8),
        Check::at_most("gamma sub-principal symmetry", id.gamma_symmetry, 1e-10),
        Check::at_most("gamma closed form", id.gamma_closed_form, 1e-10),
        Check::at_most("curvature closed form", id.curvature_closed_form, 1e-10),
        Check::at_most("principal intertwining p lambda = gamma q", id.principal_intertwining, 1e-10),
    ];
    let f = factorization(&eta, &Geometry::strip(0.7))?;
    let lam = f.dn_from_factor(&eta);
    let gap = sup_scaled(&lam.total().sub(&dn_symbol(&eta).total()), 1.0, &rays);
    out.push(Check::at_most("factorization reproduces the DN symbol", gap, 1e-8));
    let sym = symmetrizer(&eta);
    let par = parametrix(&sym.p)?;
    let prod = crate::paradiff::compose(&par, &sym.p, 1.5)?;
    let one = sup_scaled(&prod.total().sub(&Symbol::constant(&g, 1.0).total()), 0.0, &rays);
    out.push(Check::at_most("parametrix composes to 1", one, 1e-8));
    let hom = [&sym.p, &sym.q, &sym.gamma, &curvature_symbol(&eta), &dn_symbol(&eta)]
        .iter()
        .map(|s| s.homogeneity_defect())
        .fold(0.0, f64::max);
    out.push(Check::at_most("homogeneity of symbol parts", hom, 1e-9));
    Ok(out)
}

/// Remainder-order probes for the calculus and the symmetrizer, `shells` over
/// `n = 512` on a period-`pi` box.
pub fn calculus_probes() -> Result<Vec<ProbeReport>> {
    let g = Grid::new(512, PI)?;
    let eta = Field::from_fn(&g, |x| 0.1 * (2.0 * x).cos() + 0.05 * (4.0 * x).sin());
    let q = Quantizer::new(&g);
    let (lam, h, sym) = (dn_symbol(&eta), curvature_symbol(&eta), symmetrizer(&eta));
    let op = |s: &Symbol| q.operator(s);
    let (tp, tl, tg, tq, th) = (op(&sym.p)?, op(&lam)?, op(&sym.gamma)?, op(&sym.q)?, op(&h)?);
    let probe = |name: &str, d: ParaOp, naive: f64, claim: f64| {
        remainder_order(name, |u| d.apply(u), &g, 0.0, naive, claim, 3..=8)
    };
    Ok(vec![
        probe("T_p T_lambda - T_{p#lambda}", tp.then(&tl).sub(&op(&compose(&sym.p, &lam, 1.5)?)?), 1.5, 1.5)?,
        probe("T_q T_h - T_{q#h}", tq.then(&th).sub(&op(&compose(&sym.q, &h, 1.5)?)?), 2.0, 1.5)?,
        probe(
            "T_gamma T_gamma - T_{gamma#gamma}",
            tg.then(&tg).sub(&op(&compose(&sym.gamma, &sym.gamma, 1.5)?)?),
            3.0,
            1.5,
        )?,
        probe("T_gamma^* - T_{gamma^*}", tg.adjoint().sub(&op(&adjoint_symbol(&sym.gamma, 1.5)?)?), 1.5, 1.5)?,
        probe("T_p T_lambda - T_gamma T_q", tp.then(&tl).sub(&tg.then(&tq)), 1.5, 1.5)?,
        probe("T_q T_h - T_gamma T_p", tq.then(&th).sub(&tg.then(&tp)), 2.0, 1.5)?,
    ])
}

fn calculus_checks() -> Result<Vec<Check>> {
    Ok(calculus_probes()?.iter().map(Check::from_probe).collect())
}

/// Surfaces for the bracket bound: bumps, cosines and a solitary-like hump on
/// a long box.
pub fn surface_corpus(grid: &Grid) -> Vec<(String, Field)> {
    let k = 2.0 * PI / grid.length();
    let mut out = vec![("flat".to_string(), Field::zeros(grid))];
    for (a, w) in [(0.2, 1.0), (0.5, 2.0)] {
        out.push((format!("gaussian a={a} w={w}"), Field::from_fn(grid, |x| a * (-x * x / (2.0 * w * w)).exp())));
    }
    for m in [1.0, 4.0] {
        out.push((format!("cosine m={m}"), Field::from_fn(grid, |x| 0.3 * (m * k * x).cos())));
    }
    out.push((
        "multimode".into(),
        Field::from_fn(grid, |x| 0.2 * (k * x).cos() + 0.1 * (3.0 * k * x + 0.4).sin() + 0.05 * (7.0 * k * x).cos()),
    ));
    out.push(("solitary".into(), Field::from_fn(grid, |x| 0.4 / (x / 1.5).cosh().powi(2))));
    out
}

/// Smallest bracket constant and smallest `I3 + I5` over the corpus.
pub fn corpus_bound(delta: f64, eps0: f64) -> Result<(f64, f64, f64)> {
    let g = Grid::new(256, 40.0)?;
    let rays = bound_rays();
    let (mut k, mut s35, mut eps) = (f64::INFINITY, f64::INFINITY, eps0);
    for (_, eta) in surface_corpus(&g) {
        let (esc, rep) = auto_escape(&eta, delta, eps0, &rays)?;
        k = k.min(rep.k_measured);
        s35 = s35.min(rep.min_i3_i5);
        eps = eps.min(esc.eps);
    }
    Ok((k, s35, eps))
}

pub fn kato_sweep() -> Result<ResolutionSweep> {
    resolution_sweep(&[128, 256, 512], &PacketParams::default())
}

fn smoothing_checks(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let (k, s35, _) = corpus_bound(0.1, 0.05)?;
    out.push(Check::at_least("bracket constant K over corpus", k, f64::MIN_POSITIVE));
    out.push(Check::at_least("I3 + I5 over corpus", s35, 0.0));

    let g = Grid::new(128, 40.0)?;
    let esc = crate::smoothing::build_escape(0.1, 0.05, &g)?;
    let (sum, odd) = esc.partition_defects();
    out.push(Check::at_most("partition of unity", sum, 1e-12));
    out.push(Check::at_most("odd/even partition structure", odd, 1e-12));

    let q = Quantizer::new(&g);
    let d = model_form_symbol(&g, 0.1, 1.0);
    let d_floor = g
        .xs()
        .iter()
        .map(|x| japanese(*x).powf(-1.2))
        .fold(f64::INFINITY, f64::min);
    out.push(Check::at_least("form symbol lower bound", d_floor, f64::MIN_POSITIVE));
    let fit = garding_fit(&garding_data(&q, &d, 0.1, &garding_family(&g, seed))?, 1.0)?;
    out.push(Check::at_least("Garding coefficient a", fit.a, f64::MIN_POSITIVE));

    let sweep = kato_sweep()?;
    out.push(Check::at_most("weighted smoothing integral variation", sweep.weighted_variation, 0.10));
    let steps_up = sweep
        .samples
        .windows(2)
        .map(|w| w[1].unweighted / w[0].unweighted - 1.0)
        .fold(f64::INFINITY, f64::min);
    out.push(Check::at_least("unweighted integral growth per refinement", steps_up, 0.0));
    out.push(Check::at_least(
        "unweighted growth over weighted variation",
        (sweep.unweighted_growth - 1.0) - sweep.weighted_variation,
        0.0,
    ));
    let under = sweep.samples.iter().filter(|s| s.undersampled).count();
    out.push(Check::at_most("undersampled sweep runs", under as f64, 0.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("dn".parse::<Suite>().is_err());
    }

    #[test]
    fn check_directions() {
        assert!(Check::at_most("x", 1.0, 1.0).pass);
        assert!(!Check::at_most("x", 1.1, 1.0).pass);
        assert!(Check::at_least("x", 2.0, 1.0).pass);
        let r = SuiteReport::new(Suite::Dno, vec![Check::at_most("a", 0.0, 1.0), Check::at_least("b", 0.0, 1.0)]);
        assert!(!r.pass);
        assert_eq!(r.failures().len(), 1);
    }
}
