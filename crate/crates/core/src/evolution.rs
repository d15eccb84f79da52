//! Time evolution of the gravity-capillary system.
//!
//! Three right-hand sides are available: the raw Zakharov form, the same
//! equations rewritten with paraproducts (`paralinear_residuals` exposes the
//! smooth remainders), and the mollified approximate system. The mollified
//! system is written so that at `eps = 0` it is an exact algebraic
//! rearrangement of the Zakharov form, not just an equivalent one up to
//! smoothing operators: the mollifier is `J = I - T_{1 - j}` and the
//! symmetrizer sandwich is `I - T_wp T_{1 - j} T_p`, both equal to the
//! identity when `j = 1`.
//!
//! Integration happens in the diagonal variables of the flat linearization,
//! `a = ((b/a)^{1/4} eta^ - i (a/b)^{1/4} psi^) / sqrt 2`, which rotate as
//! `e^{i omega t}` under the linear flow.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dno::{compute_b_v, DnOperator, Geometry};
use crate::error::{Error, Result};
use crate::field::{Field, FieldRecord, Grid};
use crate::paradiff::Quantizer;
use crate::symbols::{curvature_symbol, dn_symbol, mollifier_symbol, parametrix, symmetrizer, Symbol};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Physical and numerical parameters shared by every right-hand side.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Model {
    pub geo: Geometry,
    /// Chebyshev degree of the vertical discretization.
    pub nz: usize,
}

impl Model {
    pub fn new(geo: Geometry, nz: usize) -> Result<Self> {
        geo.validate()?;
        if nz < 8 {
            return Err(Error::InvalidInput(format!("need nz >= 8, got {nz}")));
        }
        Ok(Self { geo, nz })
    }

    /// Linear frequency `omega(xi)`.
    pub fn omega(&self, xi: f64) -> f64 {
        self.geo.omega_sq(xi).max(0.0).sqrt()
    }

    pub fn omega_max(&self, grid: &Grid) -> f64 {
        grid.xis().iter().map(|&xi| self.omega(xi)).fold(0.0, f64::max)
    }
}

#[derive(Debug)]
struct Derived {
    g_psi: Field,
    b: Field,
    v: Field,
}

/// Surface elevation and trace of the velocity potential at time `t`.
#[derive(Debug)]
pub struct WaveState {
    pub t: f64,
    eta: Field,
    psi: Field,
    cache: OnceLock<Derived>,
}

impl Clone for WaveState {
    fn clone(&self) -> Self {
        Self::new(self.t, self.eta.clone(), self.psi.clone()).expect("validated state")
    }
}

impl WaveState {
    pub fn new(t: f64, eta: Field, psi: Field) -> Result<Self> {
        eta.check_same_grid(&psi)?;
        if !eta.is_real() || !psi.is_real() {
            return Err(Error::InvalidInput("surface fields must be real".into()));
        }
        if !eta.is_finite() || !psi.is_finite() {
            return Err(Error::NonFinite {
                t,
                what: "initial fields".into(),
            });
        }
        Ok(Self {
            t,
            eta,
            psi,
            cache: OnceLock::new(),
        })
    }

    pub fn zero(grid: &Grid) -> Self {
        Self::new(0.0, Field::zeros(grid), Field::zeros(grid)).expect("zero state")
    }

    pub fn grid(&self) -> &Grid {
        self.eta.grid()
    }

    pub fn eta(&self) -> &Field {
        &self.eta
    }

    pub fn psi(&self) -> &Field {
        &self.psi
    }

    fn derived(&self, model: &Model) -> Result<&Derived> {
        if let Some(d) = self.cache.get() {
            return Ok(d);
        }
        let op = DnOperator::new(&self.eta, &model.geo, model.nz)?;
        let g_psi = op.dn(&self.psi)?;
        let (b, v) = compute_b_v(&self.eta, &self.psi, &g_psi)?;
        let _ = self.cache.set(Derived { g_psi, b, v });
        Ok(self.cache.get().expect("just set"))
    }

    /// `G(eta) psi`.
    pub fn g_psi(&self, model: &Model) -> Result<&Field> {
        Ok(&self.derived(model)?.g_psi)
    }

    /// Vertical and horizontal surface velocities.
    pub fn b_v(&self, model: &Model) -> Result<(&Field, &Field)> {
        let d = self.derived(model)?;
        Ok((&d.b, &d.v))
    }

    pub fn to_record(&self) -> StateRecord {
        StateRecord {
            t: self.t,
            eta: self.eta.to_record(),
            psi: self.psi.to_record(),
        }
    }

    pub fn from_record(rec: &StateRecord) -> Result<Self> {
        Self::new(rec.t, Field::from_record(&rec.eta)?, Field::from_record(&rec.psi)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut f, &self.to_record())?;
        f.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateRecord {
    pub t: f64,
    pub eta: FieldRecord,
    pub psi: FieldRecord,
}

fn non_finite(t: f64, what: &str, f: &Field) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            t,
            what: what.to_string(),
        })
    }
}

/// Mean curvature `d_x(eta_x / sqrt(1 + eta_x^2))`.
pub fn curvature(eta: &Field) -> Field {
    eta.dx().map_dealiased(|e| e / (1.0 + e * e).sqrt()).dx()
}

/// Right-hand side of the Zakharov system.
pub fn zakharov_rhs(state: &WaveState, model: &Model) -> Result<(Field, Field)> {
    let g_psi = state.g_psi(model)?.clone();
    let geo = &model.geo;
    let ex = state.eta.dx();
    let px = state.psi.dx();
    let quad = Field::combine_dealiased(&[&ex, &px, &g_psi], |v| {
        let w = v[0] * v[1] + v[2];
        -0.5 * v[1] * v[1] + 0.5 * w * w / (1.0 + v[0] * v[0])
    });
    let dpsi = &(&curvature(&state.eta).scale(geo.kappa) - &state.eta.scale(geo.g)) + &quad;
    non_finite(state.t, "d_t eta", &g_psi)?;
    non_finite(state.t, "d_t psi", &dpsi)?;
    Ok((g_psi, dpsi))
}

/// Paraproduct operators attached to one surface.
pub struct ParaContext {
    q: Quantizer,
    lambda: Symbol,
    h: Symbol,
    b: Symbol,
    v: Symbol,
}

impl ParaContext {
    pub fn new(state: &WaveState, model: &Model) -> Result<Self> {
        let (b, v) = state.b_v(model)?;
        let mut h = curvature_symbol(&state.eta).scale(C::new(model.geo.kappa, 0.0));
        h.label = "h".into();
        Ok(Self {
            q: Quantizer::new(state.grid()),
            lambda: dn_symbol(&state.eta),
            h,
            b: Symbol::function("B", b),
            v: Symbol::function("V", v),
        })
    }

    /// `T_a u` for a real field; the imaginary residue is dropped.
    pub fn apply(&self, a: &Symbol, u: &Field) -> Result<Field> {
        Ok(self.q.quantize(a, u)?.real_part())
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.q
    }
}

/// Smooth remainders of the paralinearization,
/// `f1 = G psi - (T_lambda U - T_V eta_x)` and
/// `f2 = Z2 + T_V psi_x - T_B T_V eta_x - T_B G psi + T_h eta`,
/// where `U = psi - T_B eta` and `Z2` is the Zakharov `d_t psi`.
pub fn paralinear_residuals(state: &WaveState, model: &Model) -> Result<(Field, Field)> {
    let ctx = ParaContext::new(state, model)?;
    residuals_with(&ctx, state, model)
}

fn residuals_with(ctx: &ParaContext, state: &WaveState, model: &Model) -> Result<(Field, Field)> {
    let (g_psi, z2) = zakharov_rhs(state, model)?;
    let eta = &state.eta;
    let u = &state.psi - &ctx.apply(&ctx.b, eta)?;
    let tv_ex = ctx.apply(&ctx.v, &eta.dx())?;
    let f1 = &(&g_psi - &ctx.apply(&ctx.lambda, &u)?) + &tv_ex;
    let f2 = &(&(&(&z2 + &ctx.apply(&ctx.v, &state.psi.dx())?) - &ctx.apply(&ctx.b, &tv_ex)?)
        - &ctx.apply(&ctx.b, &g_psi)?)
        + &ctx.apply(&ctx.h, eta)?;
    Ok((f1, f2))
}

/// Right-hand side of the mollified approximate system.
pub fn mollified_rhs(state: &WaveState, eps: f64, model: &Model) -> Result<(Field, Field)> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("mollifier parameter must be >= 0, got {eps}")));
    }
    let ctx = ParaContext::new(state, model)?;
    let eta = &state.eta;
    let psi = &state.psi;
    // complement 1 - j of the mollifier; None when eps = 0
    let comp = if eps > 0.0 {
        let j = mollifier_symbol(eta, eps)?;
        Some(Symbol::constant(eta.grid(), 1.0).sub(&j))
    } else {
        None
    };
    let moll = |u: &Field| -> Result<Field> {
        match &comp {
            Some(c) => Ok(u - &ctx.apply(c, u)?),
            None => Ok(u.clone()),
        }
    };
    let (d1, d2): (Box<dyn Fn(&Field) -> Result<Field>>, Box<dyn Fn(&Field) -> Result<Field>>) = match &comp {
        None => (Box::new(|u: &Field| Ok(u.clone())), Box::new(|u: &Field| Ok(u.clone()))),
        Some(c) => {
            let sym = symmetrizer(eta);
            let wp = parametrix(&sym.p)?;
            let qv = sym.q.principal().at(0.0).iter().map(|v| v.re).collect::<Vec<_>>();
            let qs = Symbol::function("q", &Field::from_real(eta.grid(), qv.clone()));
            let qinv = Symbol::function("1/q", &Field::from_real(eta.grid(), qv.iter().map(|v| 1.0 / v).collect()));
            let (c1, c2) = (c.clone(), c.clone());
            let ctx1 = &ctx;
            let p = sym.p;
            (
                Box::new(move |u: &Field| {
                    let inner = ctx1.apply(&c1, &ctx1.apply(&p, u)?)?;
                    Ok(u - &ctx1.apply(&wp, &inner)?)
                }),
                Box::new(move |u: &Field| {
                    let inner = ctx1.apply(&c2, &ctx1.apply(&qs, u)?)?;
                    Ok(u - &ctx1.apply(&qinv, &inner)?)
                }),
            )
        }
    };

    let u = psi - &ctx.apply(&ctx.b, eta)?;
    let lam_u = ctx.apply(&ctx.lambda, &d2(&u)?)?;
    let h_eta = ctx.apply(&ctx.h, &d1(eta)?)?;
    // L^eps (eta, psi) = (-T_lambda D2 U, -T_B T_lambda D2 U + T_h D1 eta)
    let l1 = -&lam_u;
    let l2 = &(-&ctx.apply(&ctx.b, &lam_u)?) + &h_eta;

    let (meta, mpsi) = (moll(eta)?, moll(psi)?);
    let transport1 = ctx.apply(&ctx.v, &meta.dx())?;
    let transport2 = ctx.apply(&ctx.v, &mpsi.dx())?;

    let (f1, f2) = if comp.is_none() {
        residuals_with(&ctx, state, model)?
    } else {
        let smoothed = WaveState::new(state.t, meta, mpsi)?;
        paralinear_residuals(&smoothed, model)?
    };
    let f2 = &f2 + &ctx.apply(&ctx.b, &f1)?;

    let deta = &(&f1 - &transport1) - &l1;
    let dpsi = &(&f2 - &transport2) - &l2;
    non_finite(state.t, "mollified d_t eta", &deta)?;
    non_finite(state.t, "mollified d_t psi", &dpsi)?;
    Ok((deta, dpsi))
}

/// Which right-hand side drives the evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum System {
    Zakharov,
    Mollified { eps: f64 },
}

impl System {
    pub fn rhs(&self, state: &WaveState, model: &Model) -> Result<(Field, Field)> {
        match *self {
            System::Zakharov => zakharov_rhs(state, model),
            System::Mollified { eps } => mollified_rhs(state, eps, model),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
    Etdrk4,
}

impl Scheme {
    /// Largest admissible `dt * omega_max`.
    pub fn envelope(self) -> f64 {
        match self {
            Scheme::Rk4 => 2.8,
            Scheme::Etdrk4 => PI,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Scheme::Rk4),
            "etdrk4" => Ok(Scheme::Etdrk4),
            _ => Err(Error::InvalidInput(format!("unknown scheme '{s}' (rk4 | etdrk4)"))),
        }
    }
}

/// Per-mode weights `((b/a)^{1/4}, (a/b)^{1/4})` of the diagonal variables.
fn diag_weights(model: &Model, xi: f64) -> (f64, f64) {
    let a = model.geo.flat_dn_symbol(xi);
    let b = model.geo.g + model.geo.kappa * xi * xi;
    ((b / a).powf(0.25), (a / b).powf(0.25))
}

/// Spectral state vector: slots `1..n` hold the diagonal variable of each
/// nonzero mode; slot 0 holds the mean of `eta` and slot `n` the mean of `psi`.
fn to_vector(model: &Model, eta: &[C], psi: &[C], grid: &Grid) -> Vec<C> {
    let n = grid.n();
    let mut y = vec![ZERO; n + 1];
    y[0] = eta[0];
    y[n] = psi[0];
    for i in 1..n {
        let (wa, wb) = diag_weights(model, grid.xi(i));
        y[i] = (wa * eta[i] - C::new(0.0, wb) * psi[i]) / SQRT_2;
    }
    y
}

fn from_vector(model: &Model, y: &[C], grid: &Grid) -> (Vec<C>, Vec<C>) {
    let n = grid.n();
    let mut eta = vec![ZERO; n];
    let mut psi = vec![ZERO; n];
    eta[0] = y[0];
    psi[0] = y[n];
    for i in 1..n {
        let m = (n - i) % n;
        let (wa, wb) = diag_weights(model, grid.xi(i));
        let (a, am) = (y[i], y[m].conj());
        eta[i] = (a + am) / (SQRT_2 * wa);
        psi[i] = (am - a) / (SQRT_2 * C::new(0.0, wb));
    }
    (eta, psi)
}

/// Diagonal variable of every nonzero mode; the mean slot is set to zero.
pub fn diagonalize(state: &WaveState, model: &Model) -> Field {
    let g = state.grid();
    let mut y = to_vector(model, state.eta.spectrum(), state.psi.spectrum(), g);
    y.truncate(g.n());
    y[0] = ZERO;
    Field::from_spectrum(g, y, false)
}

/// Linear coefficient `i omega` of each vector slot.
fn linear_rates(model: &Model, grid: &Grid) -> Vec<C> {
    let n = grid.n();
    let mut l = vec![ZERO; n + 1];
    for (i, li) in l.iter_mut().enumerate().take(n).skip(1) {
        *li = C::new(0.0, model.omega(grid.xi(i)));
    }
    l
}

struct EtdCoeffs {
    e: Vec<C>,
    e2: Vec<C>,
    q: Vec<C>,
    f1: Vec<C>,
    f2: Vec<C>,
    f3: Vec<C>,
}

/// Contour-integral phi-functions on a circle of 32 points around each `z`.
fn etd_coeffs(rates: &[C], dt: f64) -> EtdCoeffs {
    const M: usize = 32;
    let roots: Vec<C> = (0..M)
        .map(|m| C::from_polar(1.0, PI * (m as f64 + 0.5) / (M as f64 / 2.0)))
        .collect();
    let mut out = EtdCoeffs {
        e: vec![],
        e2: vec![],
        q: vec![],
        f1: vec![],
        f2: vec![],
        f3: vec![],
    };
    for &l in rates {
        let z = l * dt;
        let (mut q, mut f1, mut f2, mut f3) = (ZERO, ZERO, ZERO, ZERO);
        for r0 in &roots {
            let r = z + r0;
            let er = r.exp();
            q += ((r / 2.0).exp() - 1.0) / r;
            f1 += (-4.0 - r + er * (4.0 - 3.0 * r + r * r)) / (r * r * r);
            f2 += (2.0 + r + er * (r - 2.0)) / (r * r * r);
            f3 += (-4.0 - 3.0 * r - r * r + er * (4.0 - r)) / (r * r * r);
        }
        let k = dt / M as f64;
        out.e.push(z.exp());
        out.e2.push((z / 2.0).exp());
        out.q.push(q * k);
        out.f1.push(f1 * k);
        out.f2.push(f2 * k);
        out.f3.push(f3 * k);
    }
    out
}

/// Fixed-step integrator for one system on one grid.
pub struct Stepper {
    pub model: Model,
    pub system: System,
    pub scheme: Scheme,
    pub dt: f64,
    grid: Grid,
    rates: Vec<C>,
    etd: Option<EtdCoeffs>,
}

impl Stepper {
    /// `dt = None` picks `0.5 / omega_max`.
    pub fn new(grid: &Grid, model: Model, system: System, scheme: Scheme, dt: Option<f64>) -> Result<Self> {
        let wmax = model.omega_max(grid);
        let dt = dt.unwrap_or(0.5 / wmax);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        if dt * wmax > scheme.envelope() {
            return Err(Error::Stability(format!(
                "dt * omega_max = {:.3} exceeds {:.3} for {scheme:?}",
                dt * wmax,
                scheme.envelope()
            )));
        }
        if model.geo.g == 0.0 && model.geo.kappa == 0.0 {
            return Err(Error::InvalidInput("need g > 0 or kappa > 0 for a dispersive flow".into()));
        }
        let rates = linear_rates(&model, grid);
        let etd = (scheme == Scheme::Etdrk4).then(|| etd_coeffs(&rates, dt));
        Ok(Self {
            model,
            system,
            scheme,
            dt,
            grid: grid.clone(),
            rates,
            etd,
        })
    }

    fn fields(&self, y: &[C], t: f64) -> Result<WaveState> {
        let (e, p) = from_vector(&self.model, y, &self.grid);
        WaveState::new(
            t,
            Field::from_spectrum(&self.grid, e, true),
            Field::from_spectrum(&self.grid, p, true),
        )
    }

    /// Full right-hand side in vector form.
    fn rhs(&self, y: &[C], t: f64) -> Result<Vec<C>> {
        let s = self.fields(y, t)?;
        let (de, dp) = self.system.rhs(&s, &self.model)?;
        Ok(to_vector(&self.model, de.spectrum(), dp.spectrum(), &self.grid))
    }

    /// Nonlinear part: full right-hand side minus the diagonal linear flow.
    fn nonlinear(&self, y: &[C], t: f64) -> Result<Vec<C>> {
        let mut r = self.rhs(y, t)?;
        for ((ri, li), yi) in r.iter_mut().zip(&self.rates).zip(y) {
            *ri -= li * yi;
        }
        Ok(r)
    }

    pub fn step(&self, state: &WaveState) -> Result<WaveState> {
        if state.grid() != &self.grid {
            return Err(Error::GridMismatch("state grid differs from stepper grid".into()));
        }
        let y = to_vector(&self.model, state.eta.spectrum(), state.psi.spectrum(), &self.grid);
        let (t, dt) = (state.t, self.dt);
        let lin = |a: &[C], b: &[C], k: f64| -> Vec<C> { a.iter().zip(b).map(|(x, y)| x + k * y).collect() };
        let next = match (&self.etd, self.scheme) {
            (Some(c), Scheme::Etdrk4) => {
                let nv = self.nonlinear(&y, t)?;
                let a: Vec<C> = (0..y.len()).map(|i| c.e2[i] * y[i] + c.q[i] * nv[i]).collect();
                let na = self.nonlinear(&a, t + dt / 2.0)?;
                let b: Vec<C> = (0..y.len()).map(|i| c.e2[i] * y[i] + c.q[i] * na[i]).collect();
                let nb = self.nonlinear(&b, t + dt / 2.0)?;
                let cc: Vec<C> = (0..y.len())
                    .map(|i| c.e2[i] * a[i] + c.q[i] * (2.0 * nb[i] - nv[i]))
                    .collect();
                let nc = self.nonlinear(&cc, t + dt)?;
                (0..y.len())
                    .map(|i| c.e[i] * y[i] + c.f1[i] * nv[i] + 2.0 * c.f2[i] * (na[i] + nb[i]) + c.f3[i] * nc[i])
                    .collect::<Vec<C>>()
            }
            _ => {
                let k1 = self.rhs(&y, t)?;
                let k2 = self.rhs(&lin(&y, &k1, dt / 2.0), t + dt / 2.0)?;
                let k3 = self.rhs(&lin(&y, &k2, dt / 2.0), t + dt / 2.0)?;
                let k4 = self.rhs(&lin(&y, &k3, dt), t + dt)?;
                (0..y.len())
                    .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect()
            }
        };
        let out = self.fields(&next, t + dt)?;
        non_finite(out.t, "eta", &out.eta)?;
        non_finite(out.t, "psi", &out.psi)?;
        Ok(out)
    }
}

/// Total energy and its quadratic part.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Energy {
    pub total: f64,
    pub quadratic: f64,
}

/// `total = 1/2 int psi G psi + g/2 int eta^2 + kappa int (sqrt(1 + eta_x^2) - 1)`;
/// `quadratic = 1/2 L sum (xi tanh(h xi) |psi^|^2 + (g + kappa xi^2) |eta^|^2)`.
pub fn hamiltonian(state: &WaveState, model: &Model) -> Result<Energy> {
    let geo = &model.geo;
    let grid = state.grid();
    let g_psi = state.g_psi(model)?;
    let kinetic = 0.5 * state.psi.inner(g_psi).re;
    let potential = 0.5 * geo.g * state.eta.inner(&state.eta).re;
    let ex = state.eta.dx().re();
    let dx = grid.dx();
    // sqrt(1+e^2) - 1 written to avoid cancellation
    let capillary: f64 = geo.kappa
        * ex.iter().map(|e| e * e / ((1.0 + e * e).sqrt() + 1.0)).sum::<f64>()
        * dx;
    let (eh, ph) = (state.eta.spectrum(), state.psi.spectrum());
    let quadratic = 0.5
        * grid.length()
        * (0..grid.n())
            .map(|i| {
                let xi = grid.xi(i);
                geo.flat_dn_symbol(xi) * ph[i].norm_sqr() + (geo.g + geo.kappa * xi * xi) * eh[i].norm_sqr()
            })
            .sum::<f64>();
    Ok(Energy {
        total: kinetic + potential + capillary,
        quadratic,
    })
}

/// `int eta dx`.
pub fn mass(state: &WaveState) -> f64 {
    state.eta.integral().re
}

/// Sobolev index and weight exponent used by the diagnostics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Regularity {
    pub s: f64,
    pub delta: f64,
}

impl Default for Regularity {
    fn default() -> Self {
        Self { s: 2.75, delta: 0.1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub eta_norm: f64,
    pub psi_norm: f64,
    /// Running sup of `||eta||_{H^{s+1/2}} + ||psi||_{H^s}`.
    pub m: f64,
    pub h_total: f64,
    pub h0: f64,
    /// `||<x>^{-1/2-delta} eta||^2_{H^{s+3/4}} + ||<x>^{-1/2-delta} psi||^2_{H^{s+1/4}}`.
    pub w: f64,
}

impl DiagnosticRecord {
    pub fn sample(state: &WaveState, model: &Model, reg: Regularity, prev_m: f64) -> Result<Self> {
        let eta_norm = state.eta.sobolev_norm(reg.s + 0.5);
        let psi_norm = state.psi.sobolev_norm(reg.s);
        let e = hamiltonian(state, model)?;
        let w = state.eta.weighted_norm(reg.s + 0.75, reg.delta)?.powi(2)
            + state.psi.weighted_norm(reg.s + 0.25, reg.delta)?.powi(2);
        Ok(Self {
            t: state.t,
            eta_norm,
            psi_norm,
            m: prev_m.max(eta_norm + psi_norm),
            h_total: e.total,
            h0: e.quadratic,
            w,
        })
    }
}

pub fn write_trajectory_csv(records: &[DiagnosticRecord], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,eta_norm,psi_norm,M,H_total,H0,w")?;
    for r in records {
        writeln!(
            f,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            r.t, r.eta_norm, r.psi_norm, r.m, r.h_total, r.h0, r.w
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Output of a run. When a step fails, `state` is the last valid state and
/// `aborted` carries the reason.
#[derive(Debug)]
pub struct Run {
    pub state: WaveState,
    pub records: Vec<DiagnosticRecord>,
    pub steps: usize,
    pub aborted: Option<Error>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub steps: usize,
    /// Diagnostics every this many steps (and at the end).
    pub sample_every: usize,
    /// Full-state JSON snapshots every this many steps, if set.
    pub snapshot_every: Option<usize>,
    pub snapshot_dir: Option<PathBuf>,
    pub regularity: Regularity,
}

pub fn run(initial: WaveState, stepper: &Stepper, opts: &RunOptions) -> Result<Run> {
    run_observed(initial, stepper, opts, |_| Ok(()))
}

/// Like [`run`], calling `observe` on every sampled state (the initial one included).
pub fn run_observed(
    initial: WaveState,
    stepper: &Stepper,
    opts: &RunOptions,
    mut observe: impl FnMut(&WaveState) -> Result<()>,
) -> Result<Run> {
    let model = stepper.model;
    let reg = opts.regularity;
    let every = opts.sample_every.max(1);
    let mut records = vec![DiagnosticRecord::sample(&initial, &model, reg, 0.0)?];
    observe(&initial)?;
    let mut state = initial;
    for k in 1..=opts.steps {
        let next = match stepper.step(&state) {
            Ok(s) => s,
            Err(e) => {
                return Ok(Run {
                    state,
                    records,
                    steps: k - 1,
                    aborted: Some(e),
                })
            }
        };
        state = next;
        if k % every == 0 || k == opts.steps {
            let prev = records.last().map(|r| r.m).unwrap_or(0.0);
            match DiagnosticRecord::sample(&state, &model, reg, prev).and_then(|r| observe(&state).map(|_| r)) {
                Ok(r) => records.push(r),
                Err(e) => {
                    return Ok(Run {
                        state,
                        records,
                        steps: k,
                        aborted: Some(e),
                    })
                }
            }
        }
        if let (Some(se), Some(dir)) = (opts.snapshot_every, &opts.snapshot_dir) {
            if se > 0 && k % se == 0 {
                state.write_json(&dir.join(format!("snapshot_{k:06}.json")))?;
            }
        }
    }
    Ok(Run {
        state,
        records,
        steps: opts.steps,
        aborted: None,
    })
}

/// Affine envelope `M(t) <= M(0) + c t` of a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct MonitorReport {
    pub m0: f64,
    pub c: f64,
    pub m_final: f64,
    /// Indices of samples where `M` grew by more than 10% in one sample.
    pub jumps: Vec<usize>,
}

pub fn monitor(records: &[DiagnosticRecord]) -> Result<MonitorReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidInput("empty trajectory".into()))?;
    let m0 = first.m;
    let c = records
        .iter()
        .filter(|r| r.t > first.t)
        .map(|r| (r.m - m0) / (r.t - first.t))
        .fold(0.0, f64::max);
    let jumps = records
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].m > 1.1 * w[0].m && w[0].m > 0.0)
        .map(|(i, _)| i + 1)
        .collect();
    Ok(MonitorReport {
        m0,
        c,
        m_final: records.last().map(|r| r.m).unwrap_or(m0),
        jumps,
    })
}

/// Least-squares angular frequency of a sampled complex signal
/// (unwrapped phase against time).
pub fn fit_frequency(samples: &[(f64, C)]) -> f64 {
    let mut phases = Vec::with_capacity(samples.len());
    let mut prev: Option<f64> = None;
    let mut offset = 0.0;
    for (_, z) in samples {
        let p = z.arg();
        if let Some(q) = prev {
            let d = p - q;
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        prev = Some(p);
        phases.push(p + offset);
    }
    let ts: Vec<f64> = samples.iter().map(|(t, _)| *t).collect();
    crate::paradiff::ls_slope(&ts, &phases)
}

/// Residual of the symmetrized system for `Phi = (T_p eta, T_q U)`:
/// `F = d_t Phi + T_V d_x Phi + (-T_gamma Phi_2, T_gamma Phi_1)`, with the
/// time derivative taken by a centered difference of two short steps.
pub fn symmetrized_residual(state: &WaveState, model: &Model, delta: f64) -> Result<(Field, Field, Field, Field)> {
    let phi = |s: &WaveState| -> Result<(Field, Field)> {
        let ctx = ParaContext::new(s, model)?;
        let sym = symmetrizer(&s.eta);
        let u = &s.psi - &ctx.apply(&ctx.b, &s.eta)?;
        Ok((ctx.apply(&sym.p, &s.eta)?, ctx.apply(&sym.q, &u)?))
    };
    let grid = state.grid();
    let fwd = Stepper::new(grid, *model, System::Zakharov, Scheme::Rk4, Some(delta))?;
    let plus = fwd.step(state)?;
    let back = WaveState::new(0.0, state.eta.clone(), -&state.psi)?;
    // time reversal: (eta, psi, t) -> (eta, -psi, -t) maps solutions to solutions
    let minus_rev = fwd.step(&back)?;
    let minus = WaveState::new(state.t - delta, minus_rev.eta.clone(), -&minus_rev.psi)?;
    let (p1p, p2p) = phi(&plus)?;
    let (p1m, p2m) = phi(&minus)?;
    let dt1 = (&p1p - &p1m).scale(0.5 / delta);
    let dt2 = (&p2p - &p2m).scale(0.5 / delta);
    let ctx = ParaContext::new(state, model)?;
    let sym = symmetrizer(&state.eta);
    let (p1, p2) = phi(state)?;
    let f1 = &(&dt1 + &ctx.apply(&ctx.v, &p1.dx())?) - &ctx.apply(&sym.gamma, &p2)?;
    let f2 = &(&dt2 + &ctx.apply(&ctx.v, &p2.dx())?) + &ctx.apply(&sym.gamma, &p1)?;
    Ok((f1, f2, p1, p2))
}
