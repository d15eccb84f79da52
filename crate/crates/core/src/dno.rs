//! Dirichlet–Neumann operator of a fluid layer under a graph surface.
//!
//! The fluid domain `{ bottom < y < eta(x) }` is flattened onto the strip
//! `z in [-1, 0]` by `y = rho(x, z)`. The transported potential
//! `v(x, z) = phi(x, rho(x, z))` solves
//!
//! ```text
//! (1/D^2 + s^2) v_zz + v_xx - 2 s v_xz + (s s_z - s_x) v_z = 0,
//! D = rho_z,  s = rho_x / D,
//! ```
//!
//! with `v = psi` on `z = 0` and the physical no-flux condition at the bottom.
//! The trace `G(eta) psi = (1 + eta_x^2) v_z / D - eta_x psi_x` is returned.
//!
//! Discretization: Fourier in `x`, Chebyshev collocation in `z`, coefficients
//! multiplied pointwise on the collocation grid. The linear system is solved by
//! GMRES, left-preconditioned with the x-averaged operator, which is diagonal
//! in the Fourier index and therefore a batch of small dense solves.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chebyshev::ChebyshevStrip;
use crate::error::{Error, Result};
use crate::field::{Field, Grid};
use crate::linalg::{gmres, GmresOptions};

/// Stopping tolerance of the strip solve, relative to the oscillating part of psi.
pub const STRIP_TOL: f64 = 1e-12;
/// A stalled solve is still accepted below this relative residual.
pub const STRIP_FLOOR: f64 = 1e-10;

type C = Complex64;

fn czero() -> C {
    C::new(0.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bottom {
    /// Fixed flat bottom at `y = -depth`.
    Flat { depth: f64 },
    /// Bottom at `y = eta(x) - thickness`, moving with the surface.
    ParallelStrip { thickness: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bottom: Bottom,
    pub g: f64,
    pub kappa: f64,
}

impl Geometry {
    pub fn flat(depth: f64) -> Self {
        Self {
            bottom: Bottom::Flat { depth },
            g: 1.0,
            kappa: 1.0,
        }
    }

    pub fn strip(thickness: f64) -> Self {
        Self {
            bottom: Bottom::ParallelStrip { thickness },
            g: 1.0,
            kappa: 1.0,
        }
    }

    pub fn with_gravity(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    /// Still-water depth used by linear dispersion.
    pub fn depth(&self) -> f64 {
        match self.bottom {
            Bottom::Flat { depth } => depth,
            Bottom::ParallelStrip { thickness } => thickness,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.depth();
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("layer depth must be positive, got {h}")));
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidInput(format!("gravity must be >= 0, got {}", self.g)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "surface tension must be >= 0, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Flat-surface symbol `|xi| tanh(h |xi|)`.
    pub fn flat_dn_symbol(&self, xi: f64) -> f64 {
        xi.abs() * (self.depth() * xi.abs()).tanh()
    }

    /// Linear angular frequency squared, `(g + kappa xi^2) |xi| tanh(h |xi|)`.
    pub fn omega_sq(&self, xi: f64) -> f64 {
        (self.g + self.kappa * xi * xi) * self.flat_dn_symbol(xi)
    }
}

/// Sampled change of variables; arrays are level-major, `[l * n + j]`.
#[derive(Debug, Clone)]
pub struct CoordinateMap {
    pub z: Vec<f64>,
    pub rho: Vec<f64>,
    pub rho_z: Vec<f64>,
    pub rho_x: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StripSolution {
    pub grid: Grid,
    pub map: CoordinateMap,
    /// `v(x_j, z_l)` at `[l * n + j]`, `l = 0` is the surface.
    pub v: Vec<C>,
    /// Preconditioned residual relative to the oscillating part of psi.
    pub residual: f64,
    pub iterations: usize,
}

impl StripSolution {
    pub fn level(&self, l: usize) -> &[C] {
        let n = self.grid.n();
        &self.v[l * n..(l + 1) * n]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let n = self.grid.n();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x,z,v")?;
        for (l, z) in self.map.z.iter().enumerate() {
            for j in 0..n {
                writeln!(f, "{:.17e},{:.17e},{:.17e}", self.grid.x(j), z, self.v[l * n + j].re)?;
            }
        }
        Ok(())
    }
}

/// Spectral `(u_x, u_xx)`; the Nyquist mode is dropped from `u_x`.
fn x_derivs(grid: &Grid, u: &[C]) -> (Vec<C>, Vec<C>) {
    let spec = grid.forward(u);
    let ny = grid.nyquist_slot();
    let mut d1 = vec![czero(); spec.len()];
    let mut d2 = vec![czero(); spec.len()];
    for (i, c) in spec.iter().enumerate() {
        let xi = grid.xi(i);
        if i != ny {
            d1[i] = C::new(0.0, xi) * c;
        }
        d2[i] = -xi * xi * c;
    }
    (grid.inverse(&d1), grid.inverse(&d2))
}

/// The discretized strip problem for a fixed surface, reusable across
/// Dirichlet data.
pub struct DnOperator {
    grid: Grid,
    geo: Geometry,
    cheb: ChebyshevStrip,
    eta: Vec<f64>,
    eta_x: Vec<f64>,
    eta_xx: Vec<f64>,
    depth: Vec<f64>,
    // interior coefficients for levels 0..=nz
    c_zz: Vec<f64>,
    c_xz: Vec<f64>,
    c_z: Vec<f64>,
    // bottom row: bot_z * v_z + bot_x * v_x
    bot_z: Vec<f64>,
    bot_x: Vec<f64>,
    precond: Vec<LU<C, Dyn, Dyn>>,
}

impl std::fmt::Debug for DnOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DnOperator")
            .field("grid", &self.grid)
            .field("geometry", &self.geo)
            .field("nz", &self.nz())
            .finish()
    }
}

impl DnOperator {
    pub fn new(eta: &Field, geo: &Geometry, nz: usize) -> Result<Self> {
        geo.validate()?;
        if nz < 8 {
            return Err(Error::InvalidInput(format!("need nz >= 8, got {nz}")));
        }
        if !eta.is_finite() {
            return Err(Error::InvalidInput("surface elevation is not finite".into()));
        }
        let grid = eta.grid().clone();
        let n = grid.n();
        let cheb = ChebyshevStrip::new(nz);
        let e = eta.re();
        let ex = eta.dx().re();
        let exx = eta.dxx().re();

        let depth: Vec<f64> = match geo.bottom {
            Bottom::Flat { depth } => e.iter().map(|v| v + depth).collect(),
            Bottom::ParallelStrip { thickness } => vec![thickness; n],
        };
        if let Some((j, d)) = depth
            .iter()
            .enumerate()
            .find(|(_, d)| !(**d > 0.0 && d.is_finite()))
        {
            return Err(Error::Geometry(format!(
                "layer thickness {d:.3e} <= 0 at x = {:.4}",
                grid.x(j)
            )));
        }

        let z = cheb.nodes().to_vec();
        let mut c_zz = vec![0.0; (nz + 1) * n];
        let mut c_xz = vec![0.0; (nz + 1) * n];
        let mut c_z = vec![0.0; (nz + 1) * n];
        for (l, &zl) in z.iter().enumerate() {
            for j in 0..n {
                let d = depth[j];
                let (s, s_z, s_x) = match geo.bottom {
                    Bottom::Flat { .. } => {
                        let s = (1.0 + zl) * ex[j] / d;
                        let s_z = ex[j] / d;
                        let s_x = (1.0 + zl) * (exx[j] * d - ex[j] * ex[j]) / (d * d);
                        (s, s_z, s_x)
                    }
                    Bottom::ParallelStrip { thickness: h } => (ex[j] / h, 0.0, exx[j] / h),
                };
                c_zz[l * n + j] = 1.0 / (d * d) + s * s;
                c_xz[l * n + j] = -2.0 * s;
                c_z[l * n + j] = s * s_z - s_x;
            }
        }
        let (bot_z, bot_x): (Vec<f64>, Vec<f64>) = match geo.bottom {
            Bottom::Flat { .. } => (vec![1.0; n], vec![0.0; n]),
            Bottom::ParallelStrip { thickness: h } => (
                ex.iter().map(|a| 1.0 + a * a).collect(),
                ex.iter().map(|a| -h * a).collect(),
            ),
        };

        let mut op = Self {
            grid,
            geo: *geo,
            cheb,
            eta: e,
            eta_x: ex,
            eta_xx: exx,
            depth,
            c_zz,
            c_xz,
            c_z,
            bot_z,
            bot_x,
            precond: Vec::new(),
        };
        op.precond = op.build_preconditioner()?;
        Ok(op)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geo
    }

    pub fn nz(&self) -> usize {
        self.cheb.degree()
    }

    pub fn unknowns(&self) -> usize {
        self.nz() * self.grid.n()
    }

    fn level_mean(v: &[f64], l: usize, n: usize) -> f64 {
        v[l * n..(l + 1) * n].iter().sum::<f64>() / n as f64
    }

    fn build_preconditioner(&self) -> Result<Vec<LU<C, Dyn, Dyn>>> {
        let n = self.grid.n();
        let nz = self.nz();
        let dz = self.cheb.dz();
        let dzz = self.cheb.dzz();
        let a: Vec<f64> = (0..=nz).map(|l| Self::level_mean(&self.c_zz, l, n)).collect();
        let b: Vec<f64> = (0..=nz).map(|l| Self::level_mean(&self.c_xz, l, n)).collect();
        let c: Vec<f64> = (0..=nz).map(|l| Self::level_mean(&self.c_z, l, n)).collect();
        let e = self.bot_z.iter().sum::<f64>() / n as f64;
        let f = self.bot_x.iter().sum::<f64>() / n as f64;
        let ny = self.grid.nyquist_slot();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = self.grid.xi(i);
                let xi1 = if i == ny { 0.0 } else { xi };
                let mut m = DMatrix::<C>::zeros(nz, nz);
                for l in 1..=nz {
                    for k in 1..=nz {
                        let val = if l < nz {
                            let mut v = C::new(a[l] * dzz[(l, k)], 0.0)
                                + (C::new(0.0, b[l] * xi1) + c[l]) * dz[(l, k)];
                            if l == k {
                                v -= xi * xi;
                            }
                            v
                        } else {
                            let mut v = C::new(e * dz[(l, k)], 0.0);
                            if l == k {
                                v += C::new(0.0, f * xi1);
                            }
                            v
                        };
                        m[(l - 1, k - 1)] = val;
                    }
                }
                let lu = m.lu();
                if !lu.is_invertible() {
                    return Err(Error::Geometry(format!(
                        "averaged strip operator singular at xi = {xi}"
                    )));
                }
                Ok(lu)
            })
            .collect()
    }

    /// Discrete operator acting on the lifted unknown (levels `1..=nz`).
    pub fn apply(&self, w: &[C]) -> Vec<C> {
        let n = self.grid.n();
        let nz = self.nz();
        let dz = self.cheb.dz();
        let dzz = self.cheb.dzz();
        let derivs: Vec<(Vec<C>, Vec<C>)> = (0..nz)
            .into_par_iter()
            .map(|m| x_derivs(&self.grid, &w[m * n..(m + 1) * n]))
            .collect();
        let mut out = vec![czero(); nz * n];
        out.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
            let l = r + 1;
            let mut wz = vec![czero(); n];
            let mut wzz = vec![czero(); n];
            let mut wxz = vec![czero(); n];
            for m in 1..=nz {
                let lev = &w[(m - 1) * n..m * n];
                let wx = &derivs[m - 1].0;
                let a = dz[(l, m)];
                let b = dzz[(l, m)];
                for j in 0..n {
                    wz[j] += a * lev[j];
                    wzz[j] += b * lev[j];
                    wxz[j] += a * wx[j];
                }
            }
            let (wx, wxx) = &derivs[l - 1];
            if l < nz {
                let o = l * n;
                for j in 0..n {
                    row[j] = self.c_zz[o + j] * wzz[j]
                        + wxx[j]
                        + self.c_xz[o + j] * wxz[j]
                        + self.c_z[o + j] * wz[j];
                }
            } else {
                for j in 0..n {
                    row[j] = self.bot_z[j] * wz[j] + self.bot_x[j] * wx[j];
                }
            }
        });
        out
    }

    fn precondition(&self, r: &[C]) -> Vec<C> {
        let n = self.grid.n();
        let nz = self.nz();
        let spec: Vec<Vec<C>> = (0..nz)
            .into_par_iter()
            .map(|l| self.grid.forward(&r[l * n..(l + 1) * n]))
            .collect();
        let solved: Vec<DVector<C>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let rhs = DVector::from_iterator(nz, spec.iter().map(|s| s[i]));
                self.precond[i].solve(&rhs).expect("factorization checked at build")
            })
            .collect();
        let mut out = vec![czero(); nz * n];
        out.par_chunks_mut(n).enumerate().for_each(|(l, row)| {
            let s: Vec<C> = solved.iter().map(|v| v[l]).collect();
            row.copy_from_slice(&self.grid.inverse(&s));
        });
        out
    }

    /// Right-hand side of the lifted problem `v = psi + w`.
    fn rhs(&self, psi: &Field) -> Vec<C> {
        let n = self.grid.n();
        let nz = self.nz();
        let (px, pxx) = x_derivs(&self.grid, psi.values());
        let mut b = vec![czero(); nz * n];
        for l in 1..nz {
            for j in 0..n {
                b[(l - 1) * n + j] = -pxx[j];
            }
        }
        for j in 0..n {
            b[(nz - 1) * n + j] = -self.bot_x[j] * px[j];
        }
        b
    }

    fn scale_of(psi: &Field, nz: usize) -> f64 {
        let mean = psi.mean();
        let dev: f64 = psi.values().iter().map(|v| (v - mean).norm_sqr()).sum::<f64>().sqrt();
        dev * (nz as f64).sqrt()
    }

    fn check_psi(&self, psi: &Field) -> Result<()> {
        if psi.grid() != &self.grid {
            return Err(Error::GridMismatch(format!(
                "psi on {:?}, surface on {:?}",
                psi.grid(),
                self.grid
            )));
        }
        if !psi.is_finite() {
            return Err(Error::InvalidInput("Dirichlet data is not finite".into()));
        }
        Ok(())
    }

    pub fn solve(&self, psi: &Field) -> Result<StripSolution> {
        self.check_psi(psi)?;
        let n = self.grid.n();
        let nz = self.nz();
        let b = self.rhs(psi);
        let scale = Self::scale_of(psi, nz);
        let (w, residual, iterations) = if scale == 0.0 {
            (vec![czero(); nz * n], 0.0, 0)
        } else {
            let pb = self.precondition(&b);
            let out = gmres(
                |v| self.precondition(&self.apply(v)),
                |v| v.to_vec(),
                &pb,
                GmresOptions {
                    restart: 40,
                    max_iter: 400,
                    target: STRIP_TOL * scale,
                    stall_floor: STRIP_FLOOR * scale,
                },
            )?;
            (out.x, out.residual / scale, out.iterations)
        };
        let mut v = Vec::with_capacity((nz + 1) * n);
        v.extend_from_slice(psi.values());
        for l in 0..nz {
            for j in 0..n {
                v.push(psi.at(j) + w[l * n + j]);
            }
        }
        Ok(StripSolution {
            grid: self.grid.clone(),
            map: self.coordinate_map(),
            v,
            residual,
            iterations,
        })
    }

    /// Direct dense solve of the same discrete system (small grids only).
    pub fn solve_dense(&self, psi: &Field) -> Result<StripSolution> {
        self.check_psi(psi)?;
        let n = self.grid.n();
        let nz = self.nz();
        let m = self.unknowns();
        if m > 4096 {
            return Err(Error::InvalidInput(format!(
                "dense strip solve limited to 4096 unknowns, got {m}"
            )));
        }
        let mut a = DMatrix::<C>::zeros(m, m);
        let mut e = vec![czero(); m];
        for col in 0..m {
            e[col] = C::new(1.0, 0.0);
            let c = self.apply(&e);
            for (row, v) in c.iter().enumerate() {
                a[(row, col)] = *v;
            }
            e[col] = czero();
        }
        let b = DVector::from_vec(self.rhs(psi));
        let w = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Geometry("dense strip matrix is singular".into()))?;
        let mut v = Vec::with_capacity((nz + 1) * n);
        v.extend_from_slice(psi.values());
        for l in 0..nz {
            for j in 0..n {
                v.push(psi.at(j) + w[l * n + j]);
            }
        }
        Ok(StripSolution {
            grid: self.grid.clone(),
            map: self.coordinate_map(),
            v,
            residual: 0.0,
            iterations: 0,
        })
    }

    /// Boundary trace of a strip solution.
    pub fn trace(&self, sol: &StripSolution) -> Field {
        let n = self.grid.n();
        let nz = self.nz();
        let dz = self.cheb.dz();
        let psi = sol.level(0);
        let (px, _) = x_derivs(&self.grid, psi);
        let mut vz = vec![czero(); n];
        for m in 0..=nz {
            let c = dz[(0, m)];
            for (acc, v) in vz.iter_mut().zip(sol.level(m)) {
                *acc += c * v;
            }
        }
        let vals: Vec<C> = (0..n)
            .map(|j| {
                let ex = self.eta_x[j];
                (1.0 + ex * ex) * vz[j] / self.depth[j] - ex * px[j]
            })
            .collect();
        let real = psi.iter().all(|c| c.im == 0.0);
        if real {
            Field::from_real(&self.grid, vals.iter().map(|c| c.re).collect())
        } else {
            Field::from_complex(&self.grid, vals)
        }
    }

    /// `G(eta) psi`.
    pub fn dn(&self, psi: &Field) -> Result<Field> {
        let sol = self.solve(psi)?;
        Ok(self.trace(&sol))
    }

    pub fn coordinate_map(&self) -> CoordinateMap {
        let n = self.grid.n();
        let z = self.cheb.nodes().to_vec();
        let mut rho = Vec::with_capacity(z.len() * n);
        let mut rho_z = Vec::with_capacity(z.len() * n);
        let mut rho_x = Vec::with_capacity(z.len() * n);
        for &zl in &z {
            for j in 0..n {
                match self.geo.bottom {
                    Bottom::Flat { depth } => {
                        rho.push((1.0 + zl) * self.eta[j] + zl * depth);
                        rho_z.push(self.eta[j] + depth);
                        rho_x.push((1.0 + zl) * self.eta_x[j]);
                    }
                    Bottom::ParallelStrip { thickness } => {
                        rho.push(thickness * zl + self.eta[j]);
                        rho_z.push(thickness);
                        rho_x.push(self.eta_x[j]);
                    }
                }
            }
        }
        CoordinateMap { z, rho, rho_z, rho_x }
    }

    /// Second x-derivative of the surface used by the coefficients.
    pub fn eta_xx(&self) -> &[f64] {
        &self.eta_xx
    }
}

pub fn solve_strip(eta: &Field, psi: &Field, geo: &Geometry, nz: usize) -> Result<StripSolution> {
    DnOperator::new(eta, geo, nz)?.solve(psi)
}

pub fn dirichlet_neumann(eta: &Field, psi: &Field, geo: &Geometry, nz: usize) -> Result<Field> {
    DnOperator::new(eta, geo, nz)?.dn(psi)
}

/// Vertical and horizontal surface velocities,
/// `B = (eta_x psi_x + G psi) / (1 + eta_x^2)` and `V = psi_x - B eta_x`.
pub fn compute_b_v(eta: &Field, psi: &Field, g_psi: &Field) -> Result<(Field, Field)> {
    eta.check_same_grid(psi)?;
    eta.check_same_grid(g_psi)?;
    let ex = eta.dx();
    let px = psi.dx();
    let num = &ex.mul(&px) + g_psi;
    let inv = ex.map_dealiased(|a| 1.0 / (1.0 + a * a));
    let b = num.mul(&inv);
    let v = &px - &b.mul(&ex);
    Ok((b, v))
}

/// `-G(eta)(B h) - d_x(V h)`: derivative of `eta -> G(eta) psi` along `h`.
pub fn shape_derivative(op: &DnOperator, psi: &Field, h: &Field) -> Result<Field> {
    if !matches!(op.geometry().bottom, Bottom::Flat { .. }) {
        return Err(Error::InvalidInput(
            "shape derivative formula needs a fixed bottom".into(),
        ));
    }
    let eta = Field::from_real(op.grid(), op.eta.clone());
    let g_psi = op.dn(psi)?;
    let (b, v) = compute_b_v(&eta, psi, &g_psi)?;
    let gb = op.dn(&b.mul(h))?;
    let flux = v.mul(h).dx();
    Ok(&(-&gb) - &flux)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CancellationReport {
    /// `|| G(eta) B + d_x V ||_{L^2}`.
    pub residual: f64,
    /// `|| d_x V ||_{L^2}`, the natural scale.
    pub reference: f64,
}

impl CancellationReport {
    pub fn relative(&self) -> f64 {
        if self.reference == 0.0 {
            self.residual
        } else {
            self.residual / self.reference
        }
    }
}

/// Defect of the identity `G(eta) B = -d_x V`, which holds for a layer of
/// infinite depth; with a flat bottom at depth `h` it carries an
/// `O(exp(-2 h |xi|))` correction.
pub fn cancellation_residual(op: &DnOperator, psi: &Field) -> Result<CancellationReport> {
    if !matches!(op.geometry().bottom, Bottom::Flat { .. }) {
        return Err(Error::InvalidInput(
            "cancellation identity needs a fixed bottom".into(),
        ));
    }
    let eta = Field::from_real(op.grid(), op.eta.clone());
    let g_psi = op.dn(psi)?;
    let (b, v) = compute_b_v(&eta, psi, &g_psi)?;
    let gb = op.dn(&b)?;
    let vx = v.dx();
    let res = &gb + &vx;
    Ok(CancellationReport {
        residual: res.l2_quadrature(),
        reference: vx.l2_quadrature(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn flat_surface_cosine_extension() {
        let g = grid(32);
        let h0 = 1.3;
        let k = 3.0;
        let eta = Field::zeros(&g);
        let psi = Field::from_fn(&g, |x| (k * x).cos());
        let op = DnOperator::new(&eta, &Geometry::flat(h0), 24).unwrap();
        let sol = op.solve(&psi).unwrap();
        assert!(sol.iterations <= 2);
        let n = g.n();
        for (l, z) in sol.map.z.iter().enumerate() {
            for j in 0..n {
                let exact = (k * g.x(j)).cos() * (k * h0 * (1.0 + z)).cosh() / (k * h0).cosh();
                assert!((sol.v[l * n + j].re - exact).abs() < 1e-11);
            }
        }
        let gpsi = op.trace(&sol);
        for j in 0..n {
            let exact = k * (k * h0).tanh() * (k * g.x(j)).cos();
            assert!((gpsi.at(j).re - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn constants_are_harmonic() {
        let g = grid(32);
        let eta = Field::from_fn(&g, |x| 0.1 * x.cos());
        let psi = Field::from_fn(&g, |_| 2.5);
        for geo in [Geometry::flat(1.0), Geometry::strip(1.0)] {
            let op = DnOperator::new(&eta, &geo, 12).unwrap();
            let sol = op.solve(&psi).unwrap();
            assert!(sol.v.iter().all(|v| (v.re - 2.5).abs() < 1e-14));
            assert!(op.trace(&sol).norm_inf() < 1e-12);
        }
    }

    #[test]
    fn degenerate_layer_is_rejected() {
        let g = grid(16);
        let eta = Field::from_fn(&g, |x| 1.5 * x.cos());
        assert!(matches!(
            DnOperator::new(&eta, &Geometry::flat(1.0), 8),
            Err(Error::Geometry(_))
        ));
        assert!(DnOperator::new(&Field::zeros(&g), &Geometry::flat(1.0), 4).is_err());
    }

    #[test]
    fn gmres_matches_dense_solve() {
        let g = grid(32);
        let eta = Field::from_fn(&g, |x| 0.05 * x.cos());
        let psi = Field::from_fn(&g, |x| x.sin() + 0.2 * (2.0 * x).cos());
        for geo in [Geometry::flat(1.0), Geometry::strip(0.8)] {
            let op = DnOperator::new(&eta, &geo, 16).unwrap();
            let it = op.solve(&psi).unwrap();
            let dense = op.solve_dense(&psi).unwrap();
            let scale = dense.v.iter().map(|c| c.norm()).fold(0.0, f64::max);
            let err = it
                .v
                .iter()
                .zip(&dense.v)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err <= 1e-6 * scale, "{err}");
            assert!(it.residual <= 1e-10);
        }
    }

    #[test]
    fn matches_exact_harmonic_function_under_curved_surface() {
        // phi = cosh(k (y + h)) cos(k x) is harmonic with phi_y = 0 on y = -h
        let g = grid(64);
        let (h0, k) = (1.0, 2.0);
        let eta = Field::from_fn(&g, |x| 0.1 * x.cos() + 0.05 * (2.0 * x).sin());
        let ev = eta.re();
        let ex = eta.dx().re();
        let psi = Field::from_real(
            &g,
            (0..g.n())
                .map(|j| (k * (ev[j] + h0)).cosh() * (k * g.x(j)).cos())
                .collect(),
        );
        let exact: Vec<f64> = (0..g.n())
            .map(|j| {
                let x = g.x(j);
                let y = ev[j] + h0;
                k * (k * y).sinh() * (k * x).cos() + ex[j] * k * (k * y).cosh() * (k * x).sin()
            })
            .collect();
        let gpsi = dirichlet_neumann(&eta, &psi, &Geometry::flat(h0), 32).unwrap();
        let scale = exact.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in gpsi.re().iter().zip(&exact) {
            assert!((a - b).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn b_v_formulas() {
        let g = grid(32);
        let psi = Field::from_fn(&g, |x| x.sin());
        let gpsi = Field::from_fn(&g, |x| x.sin() * 0.9);
        let (b, v) = compute_b_v(&Field::zeros(&g), &psi, &gpsi).unwrap();
        for j in 0..g.n() {
            assert!((b.at(j) - gpsi.at(j)).norm() < 1e-14);
            assert!((v.at(j).re - g.x(j).cos()).abs() < 1e-13);
        }
        let eta = Field::from_fn(&g, |x| 0.2 * (2.0 * x).cos());
        let (b, v) = compute_b_v(&eta, &psi, &gpsi).unwrap();
        let back = &v + &b.mul(&eta.dx());
        for (a, c) in back.values().iter().zip(psi.dx().values()) {
            assert!((a - c).norm() < 1e-12);
        }
    }

    #[test]
    fn shape_derivative_needs_fixed_bottom() {
        let g = grid(16);
        let op = DnOperator::new(&Field::zeros(&g), &Geometry::strip(1.0), 8).unwrap();
        let one = Field::from_fn(&g, |x| x.cos());
        assert!(shape_derivative(&op, &one, &one).is_err());
        let op = DnOperator::new(&Field::zeros(&g), &Geometry::flat(1.0), 8).unwrap();
        let d = shape_derivative(&op, &one, &Field::zeros(&g)).unwrap();
        assert!(d.norm_inf() < 1e-14);
        let d = shape_derivative(&op, &Field::from_fn(&g, |_| 1.0), &one).unwrap();
        assert!(d.norm_inf() < 1e-12);
    }

    #[test]
    fn strip_dump_has_all_nodes() {
        let g = grid(16);
        let sol = solve_strip(
            &Field::zeros(&g),
            &Field::from_fn(&g, |x| x.cos()),
            &Geometry::flat(1.0),
            8,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("strip.csv");
        sol.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text.lines().count(), 1 + 16 * 9);
    }
}
