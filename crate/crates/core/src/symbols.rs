//! Symbols `a(x, xi)` on the periodic grid, built from the surface slope.
//!
//! A [`Symbol`] is a finite sum of [`Part`]s. Each part is a closure that
//! returns the column `x_j -> a(x_j, xi)` for any real `xi`, tagged with the
//! order it is homogeneous of (or bounded by). Derivatives are taken lazily:
//! spectral in `x` (unless the part supplies an analytic `x`-derivative, as the
//! non-periodic escape functions do) and 4th-order centered differences in
//! `log |xi|` for `xi`.
//!
//! Everything here is one-dimensional, so the general formulas are written
//! with `eta_x` in place of the gradient and products in place of dot products.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::dno::{Bottom, Geometry};
use crate::error::{Error, Result};
use crate::field::{Field, Grid};

type C = Complex64;
pub type Column = Vec<C>;
type EvalFn = dyn Fn(f64) -> Column + Send + Sync;

/// Step in `log |xi|` for the difference quotients.
pub const LOG_XI_STEP: f64 = 1e-3;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

const I: C = C::new(0.0, 1.0);

/// Spectral x-derivative of a column; the Nyquist mode is dropped.
pub fn column_dx(grid: &Grid, col: &[C]) -> Column {
    let mut spec = grid.forward(col);
    let ny = grid.nyquist_slot();
    for (i, s) in spec.iter_mut().enumerate() {
        *s *= if i == ny { C::new(0.0, 0.0) } else { C::new(0.0, grid.xi(i)) };
    }
    grid.inverse(&spec)
}

fn zip_with(a: &[C], b: &[C], f: impl Fn(C, C) -> C) -> Column {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

/// Fourth-order derivative in `xi` through the substitution `xi = sgn e^t`.
fn dxi_of(f: &EvalFn, xi: f64, n: usize, step: f64) -> Column {
    if xi == 0.0 {
        return vec![C::new(0.0, 0.0); n];
    }
    let s = xi.signum();
    let t = xi.abs().ln();
    let at = |k: f64| f(s * (t + k * step).exp());
    let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
    let scale = 1.0 / (12.0 * step * xi);
    (0..n)
        .map(|j| (-p2[j] + 8.0 * p1[j] - 8.0 * m1[j] + m2[j]) * scale)
        .collect()
}

/// One homogeneous (or order-bounded) piece of a symbol.
#[derive(Clone)]
pub struct Part {
    order: f64,
    grid: Grid,
    eval: Arc<EvalFn>,
    dx: Option<Arc<EvalFn>>,
}

impl fmt::Debug for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Part")
            .field("order", &self.order)
            .field("analytic_dx", &self.dx.is_some())
            .finish()
    }
}

impl Part {
    pub fn new(grid: &Grid, order: f64, f: impl Fn(f64) -> Column + Send + Sync + 'static) -> Self {
        Self {
            order,
            grid: grid.clone(),
            eval: Arc::new(f),
            dx: None,
        }
    }

    /// Attaches an analytic x-derivative, used instead of spectral differentiation.
    pub fn with_dx(mut self, f: impl Fn(f64) -> Column + Send + Sync + 'static) -> Self {
        self.dx = Some(Arc::new(f));
        self
    }

    /// Fourier multiplier `m(xi)` (no x dependence).
    pub fn multiplier(grid: &Grid, order: f64, m: impl Fn(f64) -> C + Send + Sync + 'static) -> Self {
        let n = grid.n();
        Self::new(grid, order, move |xi| vec![m(xi); n]).with_dx(move |_| vec![C::new(0.0, 0.0); n])
    }

    /// Function of x only, order 0.
    pub fn function(grid: &Grid, vals: Vec<f64>) -> Self {
        let col: Arc<Column> = Arc::new(vals.into_iter().map(c).collect());
        Self::new(grid, 0.0, move |_| col.as_ref().clone())
    }

    pub fn zero(grid: &Grid, order: f64) -> Self {
        Self::multiplier(grid, order, |_| C::new(0.0, 0.0))
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn at(&self, xi: f64) -> Column {
        (self.eval)(xi)
    }

    pub fn has_analytic_dx(&self) -> bool {
        self.dx.is_some()
    }

    pub fn with_order(mut self, order: f64) -> Self {
        self.order = order;
        self
    }

    pub fn dx(&self) -> Part {
        match &self.dx {
            Some(d) => Part {
                order: self.order,
                grid: self.grid.clone(),
                eval: d.clone(),
                dx: None,
            },
            None => {
                let f = self.eval.clone();
                let g = self.grid.clone();
                Part::new(&self.grid, self.order, move |xi| column_dx(&g, &f(xi)))
            }
        }
    }

    pub fn dxi(&self) -> Part {
        self.dxi_with_step(LOG_XI_STEP)
    }

    pub fn dxi_with_step(&self, step: f64) -> Part {
        let f = self.eval.clone();
        let n = self.grid.n();
        let mut out = Part::new(&self.grid, self.order - 1.0, move |xi| dxi_of(f.as_ref(), xi, n, step));
        if let Some(d) = &self.dx {
            let d = d.clone();
            out.dx = Some(Arc::new(move |xi| dxi_of(d.as_ref(), xi, n, step)));
        }
        out
    }

    pub fn mul(&self, other: &Part) -> Part {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        let mut out = Part::new(&self.grid, self.order + other.order, move |xi| {
            zip_with(&f(xi), &g(xi), |a, b| a * b)
        });
        if self.dx.is_some() || other.dx.is_some() {
            let (fa, ga) = (self.eval.clone(), other.eval.clone());
            let (fd, gd) = (self.dx().eval, other.dx().eval);
            out.dx = Some(Arc::new(move |xi| {
                let (a, b, da, db) = (fa(xi), ga(xi), fd(xi), gd(xi));
                (0..a.len()).map(|j| da[j] * b[j] + a[j] * db[j]).collect()
            }));
        }
        out
    }

    /// Sum; the order of the result is the larger one.
    pub fn add(&self, other: &Part) -> Part {
        self.lin(other, c(1.0), c(1.0))
    }

    pub fn sub(&self, other: &Part) -> Part {
        self.lin(other, c(1.0), c(-1.0))
    }

    fn lin(&self, other: &Part, alpha: C, beta: C) -> Part {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        let mut out = Part::new(&self.grid, self.order.max(other.order), move |xi| {
            zip_with(&f(xi), &g(xi), |a, b| alpha * a + beta * b)
        });
        if self.dx.is_some() || other.dx.is_some() {
            let (fd, gd) = (self.dx().eval, other.dx().eval);
            out.dx = Some(Arc::new(move |xi| zip_with(&fd(xi), &gd(xi), |a, b| alpha * a + beta * b)));
        }
        out
    }

    pub fn scale(&self, s: C) -> Part {
        let f = self.eval.clone();
        let mut out = Part::new(&self.grid, self.order, move |xi| f(xi).into_iter().map(|v| s * v).collect());
        if let Some(d) = &self.dx {
            let d = d.clone();
            out.dx = Some(Arc::new(move |xi| d(xi).into_iter().map(|v| s * v).collect()));
        }
        out
    }

    /// Pointwise nonlinear map `f(a)` with declared result order.
    /// The x-derivative of the result is spectral.
    pub fn map(&self, order: f64, f: impl Fn(C) -> C + Send + Sync + 'static) -> Part {
        let e = self.eval.clone();
        Part::new(&self.grid, order, move |xi| e(xi).into_iter().map(&f).collect())
    }

    pub fn real(&self) -> Part {
        self.map(self.order, |v| c(v.re))
    }

    pub fn imag(&self) -> Part {
        self.map(self.order, |v| c(v.im))
    }

    pub fn conj(&self) -> Part {
        let f = self.eval.clone();
        let mut out = Part::new(&self.grid, self.order, move |xi| f(xi).into_iter().map(|v| v.conj()).collect());
        if let Some(d) = &self.dx {
            let d = d.clone();
            out.dx = Some(Arc::new(move |xi| d(xi).into_iter().map(|v| v.conj()).collect()));
        }
        out
    }

    /// Largest value of `|a(x, xi)| / |xi|^order` over the given frequencies.
    pub fn scaled_sup(&self, xis: &[f64]) -> f64 {
        xis.iter()
            .filter(|xi| **xi != 0.0)
            .map(|&xi| {
                let w = xi.abs().powf(-self.order);
                self.at(xi).iter().map(|v| v.norm() * w).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SymbolFlags {
    /// `conj a(x, xi) = a(x, -xi)`: the quantization preserves real fields.
    pub hermitian: bool,
    /// Independent of `xi`.
    pub x_only: bool,
    /// Each part is homogeneous in `xi` of its order.
    pub homogeneous: bool,
}

/// A sum of parts ordered by decreasing order.
#[derive(Clone)]
pub struct Symbol {
    grid: Grid,
    parts: Vec<Part>,
    pub flags: SymbolFlags,
    pub label: String,
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Symbol")
            .field("label", &self.label)
            .field("order", &self.order())
            .field("parts", &self.parts)
            .field("flags", &self.flags)
            .finish()
    }
}

impl Symbol {
    pub fn new(label: &str, parts: Vec<Part>, flags: SymbolFlags) -> Self {
        assert!(!parts.is_empty(), "symbol needs at least one part");
        let grid = parts[0].grid.clone();
        let mut parts = parts;
        parts.sort_by(|a, b| b.order.partial_cmp(&a.order).expect("finite orders"));
        Self {
            grid,
            parts,
            flags,
            label: label.to_string(),
        }
    }

    /// The constant symbol `k`.
    pub fn constant(grid: &Grid, k: f64) -> Self {
        Self::new(
            "constant",
            vec![Part::multiplier(grid, 0.0, move |_| c(k))],
            SymbolFlags {
                hermitian: true,
                x_only: true,
                homogeneous: true,
            },
        )
    }

    /// Fourier multiplier `m(xi)` of the given order.
    pub fn multiplier(
        grid: &Grid,
        label: &str,
        order: f64,
        hermitian: bool,
        m: impl Fn(f64) -> C + Send + Sync + 'static,
    ) -> Self {
        Self::new(
            label,
            vec![Part::multiplier(grid, order, m)],
            SymbolFlags {
                hermitian,
                x_only: false,
                homogeneous: true,
            },
        )
    }

    /// Real function of x (order 0).
    pub fn function(label: &str, f: &Field) -> Self {
        Self::new(
            label,
            vec![Part::function(f.grid(), f.re())],
            SymbolFlags {
                hermitian: true,
                x_only: true,
                homogeneous: true,
            },
        )
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.parts[0].order
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn principal(&self) -> &Part {
        &self.parts[0]
    }

    pub fn subprincipal(&self) -> Option<&Part> {
        self.parts.get(1)
    }

    /// The full symbol collapsed into a single part of the leading order.
    pub fn total(&self) -> Part {
        let mut acc = self.parts[0].clone();
        for p in &self.parts[1..] {
            acc = acc.add(p);
        }
        acc.with_order(self.order())
    }

    pub fn at(&self, xi: f64) -> Column {
        let mut acc = self.parts[0].at(xi);
        for p in &self.parts[1..] {
            for (a, b) in acc.iter_mut().zip(p.at(xi)) {
                *a += b;
            }
        }
        acc
    }

    pub fn map_parts(&self, label: &str, f: impl Fn(&Part) -> Part) -> Symbol {
        Symbol {
            grid: self.grid.clone(),
            parts: self.parts.iter().map(f).collect(),
            flags: self.flags,
            label: label.to_string(),
        }
    }

    pub fn dx(&self) -> Symbol {
        self.map_parts(&format!("dx({})", self.label), Part::dx)
    }

    pub fn dxi(&self) -> Symbol {
        let mut s = self.map_parts(&format!("dxi({})", self.label), Part::dxi);
        s.flags.x_only = false;
        s
    }

    pub fn scale(&self, k: C) -> Symbol {
        self.map_parts(&self.label, |p| p.scale(k))
    }

    /// All pairwise products, parts of equal order merged.
    pub fn mul(&self, other: &Symbol) -> Symbol {
        let mut parts = Vec::new();
        for a in &self.parts {
            for b in &other.parts {
                parts.push(a.mul(b));
            }
        }
        Symbol::new(
            &format!("{}*{}", self.label, other.label),
            merge_parts(parts),
            SymbolFlags {
                hermitian: self.flags.hermitian && other.flags.hermitian,
                x_only: self.flags.x_only && other.flags.x_only,
                homogeneous: self.flags.homogeneous && other.flags.homogeneous,
            },
        )
    }

    pub fn add(&self, other: &Symbol) -> Symbol {
        let mut parts = self.parts.clone();
        parts.extend(other.parts.iter().cloned());
        Symbol::new(
            &format!("{}+{}", self.label, other.label),
            merge_parts(parts),
            SymbolFlags {
                hermitian: self.flags.hermitian && other.flags.hermitian,
                x_only: self.flags.x_only && other.flags.x_only,
                homogeneous: self.flags.homogeneous && other.flags.homogeneous,
            },
        )
    }

    pub fn sub(&self, other: &Symbol) -> Symbol {
        self.add(&other.scale(c(-1.0)))
    }

    /// Drops parts of order `<= floor`.
    pub fn truncate_above(&self, floor: f64) -> Symbol {
        let parts: Vec<Part> = self
            .parts
            .iter()
            .filter(|p| p.order > floor + 1e-12)
            .cloned()
            .collect();
        if parts.is_empty() {
            return Symbol::new(&self.label, vec![Part::zero(&self.grid, self.order())], self.flags);
        }
        Symbol {
            grid: self.grid.clone(),
            parts,
            flags: self.flags,
            label: self.label.clone(),
        }
    }

    /// Largest relative defect of `a(x, 2 xi) = 2^m a(x, xi)` over the parts, on
    /// the rays `|xi| in {1, 2}`.
    pub fn homogeneity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for p in &self.parts {
            for s in [-1.0, 1.0] {
                let a1 = p.at(s);
                let a2 = p.at(2.0 * s);
                let k = 2f64.powf(p.order);
                let scale = a1.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
                for (x, y) in a1.iter().zip(&a2) {
                    worst = worst.max((y - k * x).norm() / (k * scale));
                }
            }
        }
        worst
    }

    /// Largest `|conj a(x, xi) - a(x, -xi)|` relative to `|xi|^m` on sample rays.
    pub fn reality_defect(&self, xis: &[f64]) -> f64 {
        let m = self.order();
        xis.iter()
            .filter(|xi| **xi != 0.0)
            .map(|&xi| {
                let a = self.at(xi);
                let b = self.at(-xi);
                let w = xi.abs().powf(-m);
                a.iter()
                    .zip(&b)
                    .map(|(u, v)| (u.conj() - v).norm() * w)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    pub fn to_record(&self, xis: &[f64]) -> SymbolRecord {
        let sample = |p: Option<&Part>| -> Option<Vec<Vec<[f64; 2]>>> {
            p.map(|p| {
                xis.iter()
                    .map(|&xi| p.at(xi).iter().map(|v| [v.re, v.im]).collect())
                    .collect()
            })
        };
        SymbolRecord {
            label: self.label.clone(),
            order: self.order(),
            flags: self.flags,
            x: self.grid.xs(),
            xi: xis.to_vec(),
            principal: sample(Some(self.principal())).unwrap_or_default(),
            subprincipal: sample(self.subprincipal()),
        }
    }

    pub fn write_json(&self, path: &Path, xis: &[f64]) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut f, &self.to_record(xis))?;
        f.flush()?;
        Ok(())
    }
}

/// JSON tensor form; `principal[k][j]` is the value at `(x_j, xi_k)` as `[re, im]`.
#[derive(Debug, Clone, Serialize)]
pub struct SymbolRecord {
    pub label: String,
    pub order: f64,
    pub flags: SymbolFlags,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub principal: Vec<Vec<[f64; 2]>>,
    pub subprincipal: Option<Vec<Vec<[f64; 2]>>>,
}

fn merge_parts(parts: Vec<Part>) -> Vec<Part> {
    let mut out: Vec<Part> = Vec::new();
    for p in parts {
        if let Some(q) = out.iter_mut().find(|q| (q.order - p.order).abs() < 1e-12) {
            *q = q.add(&p);
        } else {
            out.push(p);
        }
    }
    out
}

/// `{f, g} = d_xi f d_x g - d_x f d_xi g`, part by part.
pub fn poisson_bracket(f: &Symbol, g: &Symbol) -> Symbol {
    let mut parts = Vec::new();
    for a in f.parts() {
        for b in g.parts() {
            parts.push(part_bracket(a, b));
        }
    }
    Symbol::new(
        &format!("{{{},{}}}", f.label, g.label),
        merge_parts(parts),
        SymbolFlags {
            hermitian: false,
            x_only: false,
            homogeneous: f.flags.homogeneous && g.flags.homogeneous,
        },
    )
}

pub fn part_bracket(a: &Part, b: &Part) -> Part {
    a.dxi().mul(&b.dx()).sub(&a.dx().mul(&b.dxi())).with_order(a.order + b.order - 1.0)
}

/// Slope data of a surface, sampled on the grid.
#[derive(Debug, Clone)]
pub struct Surface {
    pub grid: Grid,
    pub eta_x: Arc<Vec<f64>>,
    pub eta_xx: Arc<Vec<f64>>,
}

impl Surface {
    pub fn new(eta: &Field) -> Self {
        Self {
            grid: eta.grid().clone(),
            eta_x: Arc::new(eta.dx().re()),
            eta_xx: Arc::new(eta.dxx().re()),
        }
    }

    /// Part `f(eta_x, xi)` evaluated pointwise.
    pub fn part(&self, order: f64, f: impl Fn(f64, f64) -> C + Send + Sync + 'static) -> Part {
        let ex = self.eta_x.clone();
        Part::new(&self.grid, order, move |xi| ex.iter().map(|&e| f(e, xi)).collect())
    }

    /// `(1 + eta_x^2)^power` as an order-0 part.
    pub fn slope_power(&self, power: f64) -> Part {
        self.part(0.0, move |e, _| c((1.0 + e * e).powf(power)))
    }

    /// `c = (1 + eta_x^2)^{-3/4}` as a field.
    pub fn capillary_speed(&self) -> Field {
        Field::from_real(
            &self.grid,
            self.eta_x.iter().map(|e| (1.0 + e * e).powf(-0.75)).collect(),
        )
    }
}

fn hermitian_flags() -> SymbolFlags {
    SymbolFlags {
        hermitian: true,
        x_only: false,
        homogeneous: true,
    }
}

/// Dirichlet–Neumann symbol: principal `lambda1` and sub-principal `lambda0`.
pub fn dn_symbol(eta: &Field) -> Symbol {
    let s = Surface::new(eta);
    let lambda1 = s.part(1.0, |e, xi| c(((1.0 + e * e) * xi * xi - (e * xi).powi(2)).max(0.0).sqrt()));
    let inv = s.slope_power(-1.0);
    let e_col = s.part(0.0, |e, _| c(e));
    let alpha1 = lambda1.add(&s.part(1.0, |e, xi| I * e * xi)).mul(&inv).with_order(1.0);
    let bracket = alpha1
        .mul(&e_col)
        .dx()
        .add(&lambda1.dxi().mul(&alpha1.dx()).scale(I))
        .with_order(1.0);
    let pre = {
        let l1 = lambda1.clone();
        let ex = s.eta_x.clone();
        Part::new(&s.grid, -1.0, move |xi| {
            l1.at(xi)
                .iter()
                .zip(ex.iter())
                .map(|(l, e)| if l.re == 0.0 { c(0.0) } else { (1.0 + e * e) / (2.0 * l) })
                .collect()
        })
    };
    let lambda0 = pre.mul(&bracket).with_order(0.0);
    Symbol::new("lambda", vec![lambda1, lambda0], hermitian_flags())
}

/// Mean-curvature symbol: `h2` and `h1 = -(i/2) d_x d_xi h2`.
pub fn curvature_symbol(eta: &Field) -> Symbol {
    let s = Surface::new(eta);
    let h2 = s.part(2.0, |e, xi| {
        let w = 1.0 + e * e;
        c(w.powf(-0.5) * (xi * xi - (e * xi).powi(2) / w))
    });
    let h1 = h2.dxi().dx().scale(C::new(0.0, -0.5)).with_order(1.0);
    Symbol::new("h", vec![h2, h1], hermitian_flags())
}

/// The symbols conjugating the linearized system to a skew-symmetric one.
#[derive(Debug, Clone)]
pub struct Symmetrizer {
    pub p: Symbol,
    pub q: Symbol,
    pub gamma: Symbol,
}

/// `q0 = (1 + eta_x^2)^Q_EXPONENT`. The transport equation
/// `(1/2){h2, lambda1} q0 = {h2 lambda1, q0}` with `h2 = (c lambda1)^2` forces
/// `q0 = c^{-1/3}`.
pub const Q_EXPONENT: f64 = 0.25;

pub fn symmetrizer(eta: &Field) -> Symmetrizer {
    let s = Surface::new(eta);
    let lambda = dn_symbol(eta);
    let h = curvature_symbol(eta);
    let (l1, l0) = (lambda.parts()[0].clone(), lambda.parts()[1].clone());
    let (h2, h1) = (h.parts()[0].clone(), h.parts()[1].clone());

    let q0 = s.slope_power(Q_EXPONENT);
    let q = Symbol::new(
        "q",
        vec![q0.clone()],
        SymbolFlags {
            hermitian: true,
            x_only: true,
            homogeneous: true,
        },
    );

    let g32 = h2.mul(&l1).map(1.5, |v| c(v.re.max(0.0).sqrt()));
    let ratio = {
        let (h2, l1) = (h2.clone(), l1.clone());
        Part::new(&s.grid, 0.5, move |xi| {
            zip_with(&h2.at(xi), &l1.at(xi), |a, b| {
                if b.re == 0.0 {
                    c(0.0)
                } else {
                    c((a.re / b.re).max(0.0).sqrt())
                }
            })
        })
    };
    let g12 = ratio
        .mul(&l0.real())
        .scale(c(0.5))
        .add(&g32.dxi().dx().scale(C::new(0.0, -0.5)))
        .with_order(0.5);
    let gamma = Symbol::new("gamma", vec![g32.clone(), g12.clone()], hermitian_flags());

    // p12 = q0 c sqrt(lambda1), with c = (1 + eta_x^2)^{-3/4}
    let p12 = s
        .slope_power(Q_EXPONENT - 0.75)
        .mul(&l1.map(0.5, |v| c(v.re.max(0.0).sqrt())));
    let inv_g32 = g32.map(-1.5, |v| if v.re == 0.0 { c(0.0) } else { 1.0 / v });
    let pm12 = q0
        .mul(&h1)
        .sub(&g12.mul(&p12))
        .add(&g32.dxi().mul(&p12.dx()).scale(I))
        .with_order(1.0)
        .mul(&inv_g32)
        .with_order(-0.5);
    let p = Symbol::new("p", vec![p12, pm12], hermitian_flags());
    Symmetrizer { p, q, gamma }
}

fn min_on_unit_rays(part: &Part) -> f64 {
    [-1.0, 1.0]
        .iter()
        .flat_map(|&xi| part.at(xi))
        .map(|v| v.re)
        .fold(f64::INFINITY, f64::min)
}

/// Two-term right parametrix of `p`.
pub fn parametrix(p: &Symbol) -> Result<Symbol> {
    let p12 = p.principal().clone();
    let pm12 = p
        .subprincipal()
        .cloned()
        .unwrap_or_else(|| Part::zero(p.grid(), p12.order() - 1.0));
    let floor = min_on_unit_rays(&p12);
    if !(floor > 0.0) {
        return Err(Error::Ellipticity(format!(
            "principal symbol reaches {floor:.3e} on the unit rays"
        )));
    }
    let w12 = p12.map(-p12.order(), |v| if v.re == 0.0 { c(0.0) } else { 1.0 / v });
    let w32 = w12
        .mul(&pm12)
        .add(&w12.dxi().mul(&p12.dx()).scale(-I))
        .with_order(-1.0)
        .mul(&w12)
        .scale(c(-1.0))
        .with_order(-p12.order() - 1.0);
    Ok(Symbol::new("parametrix", vec![w12, w32], hermitian_flags()))
}

/// Factorization `d_z^2 + ... = alpha (d_z - a)(d_z - A)` of the strip operator
/// for a layer of constant thickness `h`.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub a: Symbol,
    pub big_a: Symbol,
    pub thickness: f64,
}

pub fn factorization(eta: &Field, geo: &Geometry) -> Result<Factorization> {
    let h = match geo.bottom {
        Bottom::ParallelStrip { thickness } => thickness,
        Bottom::Flat { depth } => depth,
    };
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("thickness must be positive, got {h}")));
    }
    let s = Surface::new(eta);
    let root = move |e: f64, xi: f64| {
        let alpha = (1.0 + e * e) / (h * h);
        let beta = -2.0 * e / h;
        (4.0 * alpha * xi * xi - (beta * xi).powi(2)).max(0.0).sqrt()
    };
    let a1 = s.part(1.0, move |e, xi| {
        let alpha = (1.0 + e * e) / (h * h);
        let beta = -2.0 * e / h;
        (C::new(0.0, -beta * xi) - root(e, xi)) / (2.0 * alpha)
    });
    let big_a1 = s.part(1.0, move |e, xi| {
        let alpha = (1.0 + e * e) / (h * h);
        let beta = -2.0 * e / h;
        (C::new(0.0, -beta * xi) + root(e, xi)) / (2.0 * alpha)
    });
    // damping coefficient of the first-order term divided by alpha
    let exx = s.eta_xx.clone();
    let ex = s.eta_x.clone();
    let damp = Part::new(&s.grid, 0.0, move |_| {
        ex.iter()
            .zip(exx.iter())
            .map(|(e, exx)| c((exx / h) * h * h / (1.0 + e * e)))
            .collect()
    });
    let cross = a1.dxi().mul(&big_a1.dx()).scale(I).with_order(1.0);
    let diff = big_a1.sub(&a1).with_order(1.0);
    let inv_diff = diff.map(-1.0, |v| if v.norm() == 0.0 { c(0.0) } else { 1.0 / v });
    let a0 = cross.sub(&damp.mul(&a1)).mul(&inv_diff).with_order(0.0);
    let big_a0 = cross.sub(&damp.mul(&big_a1)).mul(&inv_diff).scale(c(-1.0)).with_order(0.0);
    let flags = SymbolFlags {
        hermitian: true,
        x_only: false,
        homogeneous: true,
    };
    Ok(Factorization {
        a: Symbol::new("a", vec![a1, a0], flags),
        big_a: Symbol::new("A", vec![big_a1, big_a0], flags),
        thickness: h,
    })
}

impl Factorization {
    /// `(1 + eta_x^2)/h * A - i eta_x xi`, to be compared with the DN symbol.
    pub fn dn_from_factor(&self, eta: &Field) -> Symbol {
        let s = Surface::new(eta);
        let h = self.thickness;
        let w = s.slope_power(1.0).scale(c(1.0 / h));
        let shift = s.part(1.0, |e, xi| C::new(0.0, -e * xi));
        let p1 = w.mul(&self.big_a.parts()[0]).add(&shift).with_order(1.0);
        let p0 = w.mul(&self.big_a.parts()[1]).with_order(0.0);
        Symbol::new("lambda_from_A", vec![p1, p0], hermitian_flags())
    }
}

/// Mollifier `exp(-eps gamma) - (i/2) d_x d_xi exp(-eps gamma)`.
pub fn mollifier_symbol(eta: &Field, eps: f64) -> Result<Symbol> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("mollifier parameter must be >= 0, got {eps}")));
    }
    let grid = eta.grid().clone();
    let flags = SymbolFlags {
        hermitian: true,
        x_only: eps == 0.0,
        homogeneous: eps == 0.0,
    };
    if eps == 0.0 {
        let mut s = Symbol::constant(&grid, 1.0);
        s.label = "mollifier".into();
        s.flags = flags;
        return Ok(s);
    }
    let sym = symmetrizer(eta);
    let g32 = sym.gamma.principal().clone();
    let j0 = g32.map(0.0, move |v| c((-eps * v.re).exp()));
    let jm1 = j0.dxi().dx().scale(C::new(0.0, -0.5)).with_order(-1.0);
    Ok(Symbol::new("mollifier", vec![j0, jm1], flags))
}

/// Elliptic weight `(gamma^{(3/2)})^{2s/3}` of order `s`.
pub fn elliptic_weight(eta: &Field, s: f64) -> Symbol {
    let sym = symmetrizer(eta);
    let g32 = sym.gamma.principal().clone();
    let k = 2.0 * s / 3.0;
    let beta = g32.map(s, move |v| if v.re <= 0.0 { c(0.0) } else { c(v.re.powf(k)) });
    Symbol::new("weight", vec![beta], hermitian_flags())
}

/// Log-spaced frequencies on both half-lines with `|xi| in [lo, hi]`.
pub fn log_rays(lo: f64, hi: f64, per_side: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * per_side);
    let (a, b) = (lo.ln(), hi.ln());
    for k in 0..per_side {
        let t = if per_side == 1 {
            a
        } else {
            a + (b - a) * k as f64 / (per_side - 1) as f64
        };
        out.push(t.exp());
        out.push(-t.exp());
    }
    out
}

/// Regularity indices for which the seminorm is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Regularity {
    Zero,
    Half,
    One,
    ThreeHalves,
}

impl Regularity {
    pub fn from_value(rho: f64) -> Result<Self> {
        match rho {
            r if r == 0.0 => Ok(Self::Zero),
            r if r == 0.5 => Ok(Self::Half),
            r if r == 1.0 => Ok(Self::One),
            r if r == 1.5 => Ok(Self::ThreeHalves),
            _ => Err(Error::InvalidInput(format!("regularity index {rho} not in {{0, 1/2, 1, 3/2}}"))),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Half => 0.5,
            Self::One => 1.0,
            Self::ThreeHalves => 1.5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeminormReport {
    pub value: f64,
    pub xi_samples: usize,
    /// Fractional x-regularity is measured by a grid Hölder quotient.
    pub holder_quotient: bool,
}

fn holder_half(grid: &Grid, col: &[C]) -> f64 {
    let n = col.len();
    let dx = grid.dx();
    let mut best: f64 = 0.0;
    for i in 0..n {
        for k in 1..=n / 2 {
            let j = (i + k) % n;
            let d = (col[i] - col[j]).norm() / (k as f64 * dx).sqrt();
            best = best.max(d);
        }
    }
    best
}

fn w_norm(grid: &Grid, col: &[C], rho: Regularity) -> f64 {
    let sup = |v: &[C]| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    match rho {
        Regularity::Zero => sup(col),
        Regularity::Half => sup(col) + holder_half(grid, col),
        Regularity::One => sup(col) + sup(&column_dx(grid, col)),
        Regularity::ThreeHalves => {
            let d = column_dx(grid, col);
            sup(col) + sup(&d) + holder_half(grid, &d)
        }
    }
}

/// Discrete `M^m_rho(a)`: sup over `|xi| >= 1/2` and `k <= 1 + ceil(rho)`
/// of `(1 + |xi|)^{k - m} || d_xi^k a(., xi) ||_{W^{rho, inf}}`.
pub fn seminorm(a: &Symbol, m: f64, rho: f64, xis: &[f64]) -> Result<SeminormReport> {
    let rho = Regularity::from_value(rho)?;
    let usable: Vec<f64> = xis.iter().copied().filter(|xi| xi.abs() >= 0.5).collect();
    let pos = usable.iter().filter(|x| **x > 0.0).count();
    if pos < 4 || usable.len() - pos < 4 {
        return Err(Error::Sampling(format!(
            "seminorm needs at least 4 frequencies |xi| >= 1/2 on each side, got {} and {}",
            pos,
            usable.len() - pos
        )));
    }
    if a.grid().n() < 16 {
        return Err(Error::Sampling("seminorm needs at least 16 points in x".into()));
    }
    let kmax = 1 + rho.value().ceil() as usize;
    let mut derivs = vec![a.total()];
    for k in 1..=kmax {
        // larger steps for higher derivatives keep round-off in check
        let step = 10f64.powf(-3.0 + 0.5 * k as f64);
        let prev = derivs[k - 1].clone();
        derivs.push(prev.dxi_with_step(step));
    }
    let grid = a.grid();
    let mut best: f64 = 0.0;
    for &xi in &usable {
        for (k, d) in derivs.iter().enumerate() {
            let w = (1.0 + xi.abs()).powf(k as f64 - m);
            best = best.max(w * w_norm(grid, &d.at(xi), rho));
        }
    }
    Ok(SeminormReport {
        value: best,
        xi_samples: usable.len(),
        holder_quotient: matches!(rho, Regularity::Half | Regularity::ThreeHalves),
    })
}

/// Maximum over the samples of `|a(x, xi)| / |xi|^m`.
pub fn sup_scaled(a: &Part, m: f64, xis: &[f64]) -> f64 {
    xis.iter()
        .filter(|xi| **xi != 0.0)
        .map(|&xi| {
            let w = xi.abs().powf(-m);
            a.at(xi).iter().map(|v| v.norm() * w).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// The identities the constructed symbols must satisfy, each reported as a
/// sup-norm defect scaled by the natural power of `|xi|`.
#[derive(Debug, Clone, Serialize)]
pub struct SymbolIdentities {
    /// `Im lambda0 + (1/2) d_xi d_x lambda1`.
    pub dn_symmetry: f64,
    /// `lambda - |xi|` (both parts).
    pub dn_flat_reduction: f64,
    /// `(1/2){h2, lambda1} q - {h2 lambda1, q}`.
    pub q_transport: f64,
    /// `Im gamma12 + (1/2) d_xi d_x gamma32`.
    pub gamma_symmetry: f64,
    /// `gamma - (c |xi|^{3/2} - (3i/4) xi |xi|^{-1/2} c_x)`.
    pub gamma_closed_form: f64,
    /// `h2 - c^2 xi^2`.
    pub curvature_closed_form: f64,
    /// `p12 lambda1 - gamma32 q0`.
    pub principal_intertwining: f64,
}

pub fn symbol_identities(eta: &Field, xis: &[f64]) -> SymbolIdentities {
    let s = Surface::new(eta);
    let lambda = dn_symbol(eta);
    let h = curvature_symbol(eta);
    let sym = symmetrizer(eta);
    let (l1, l0) = (&lambda.parts()[0], &lambda.parts()[1]);
    let h2 = &h.parts()[0];
    let q0 = sym.q.principal();
    let (g32, g12) = (sym.gamma.principal(), sym.gamma.parts()[1].clone());

    let dn_symmetry = sup_scaled(
        &l0.imag().add(&l1.dxi().dx().scale(c(0.5))).with_order(0.0),
        0.0,
        xis,
    );
    let abs_xi = Part::multiplier(&s.grid, 1.0, |xi| c(xi.abs()));
    let dn_flat_reduction = sup_scaled(&lambda.total().sub(&abs_xi), 1.0, xis);
    let fre = part_bracket(h2, l1)
        .mul(q0)
        .scale(c(0.5))
        .sub(&part_bracket(&h2.mul(l1), q0))
        .with_order(2.0);
    let q_transport = sup_scaled(&fre, 2.0, xis);
    let gamma_symmetry = sup_scaled(
        &g12.imag().add(&g32.dxi().dx().scale(c(0.5))).with_order(0.5),
        0.5,
        xis,
    );
    let cf = s.capillary_speed();
    let cfx = cf.dx().re();
    let cv = Arc::new(cf.re());
    let cxv = Arc::new(cfx);
    let closed = {
        let (cv, cxv) = (cv.clone(), cxv.clone());
        Part::new(&s.grid, 1.5, move |xi| {
            let a = xi.abs();
            cv.iter()
                .zip(cxv.iter())
                .map(|(c0, c1)| {
                    if a == 0.0 {
                        C::new(0.0, 0.0)
                    } else {
                        C::new(c0 * a.powf(1.5), -0.75 * xi * a.powf(-0.5) * c1)
                    }
                })
                .collect()
        })
    };
    let gamma_closed_form = sup_scaled(&sym.gamma.total().sub(&closed), 1.5, xis);
    let h2_closed = {
        let cv = cv.clone();
        Part::new(&s.grid, 2.0, move |xi| cv.iter().map(|c0| c(c0 * c0 * xi * xi)).collect())
    };
    let curvature_closed_form = sup_scaled(&h2.sub(&h2_closed), 2.0, xis);
    let principal_intertwining = sup_scaled(
        &sym.p.principal().mul(l1).sub(&g32.mul(q0)),
        1.5,
        xis,
    );
    SymbolIdentities {
        dn_symmetry,
        dn_flat_reduction,
        q_transport,
        gamma_symmetry,
        gamma_closed_form,
        curvature_closed_form,
        principal_intertwining,
    }
}

/// Default frequency samples for identity checks: log-spaced over `[1/2, 64]`.
pub fn default_rays() -> Vec<f64> {
    log_rays(0.5, 64.0, 9)
}

/// A smooth 2pi-periodic test surface.
pub fn test_surface(grid: &Grid, amp: f64) -> Field {
    let k = 2.0 * PI / grid.length();
    Field::from_fn(grid, move |x| {
        amp * ((k * x).cos() + 0.5 * (2.0 * k * x + 0.3).sin())
    })
}
