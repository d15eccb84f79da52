//! Periodic grid functions with synchronized physical and spectral views.
//!
//! The whole line is truncated to a torus of period `L`. Collocation points
//! are `x_j = -L/2 + j L / n` and a field is represented by the trigonometric
//! polynomial
//!
//! ```text
//! u(x) = sum_k  u_k exp(i xi_k x),     xi_k = 2 pi k / L,   -n/2 <= k < n/2
//! ```
//!
//! so the spectrum stored here is `u_k = (1/n) sum_j u(x_j) exp(-i xi_k x_j)`.
//! With this convention `int |u|^2 dx = L sum_k |u_k|^2`.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative spectral mass allowed in the outer third of the band.
pub const DEALIAS_TAIL_TOL: f64 = 1e-10;

struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    pad_fwd: Arc<dyn Fft<f64>>,
    pad_inv: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid on `[-L/2, L/2)`.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    length: f64,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length
    }
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "grid size must be a power of two >= 8, got {n}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid period must be positive, got {length}"
            )));
        }
        let mut planner = FftPlanner::new();
        let m = 3 * n / 2;
        let plans = Plans {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            pad_fwd: planner.plan_fft_forward(m),
            pad_inv: planner.plan_fft_inverse(m),
        };
        Ok(Self {
            n,
            length,
            plans: Arc::new(plans),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -0.5 * self.length + j as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Signed integer wavenumber stored at FFT slot `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT slot holding integer wavenumber `k`, if it is inside the band.
    pub fn slot(&self, k: i64) -> Option<usize> {
        let n = self.n as i64;
        if k >= -n / 2 && k < n / 2 {
            Some(k.rem_euclid(n) as usize)
        } else {
            None
        }
    }

    pub fn xi(&self, i: usize) -> f64 {
        2.0 * PI * self.wavenumber(i) as f64 / self.length
    }

    pub fn xis(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.xi(i)).collect()
    }

    pub fn nyquist_slot(&self) -> usize {
        self.n / 2
    }

    pub fn xi_max(&self) -> f64 {
        PI * self.n as f64 / self.length
    }

    /// Forward transform with the normalization described in the module docs.
    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.n);
        let mut buf = values.to_vec();
        self.plans.fwd.process(&mut buf);
        let inv_n = 1.0 / self.n as f64;
        for (i, c) in buf.iter_mut().enumerate() {
            // shift of the origin to x_0 = -L/2
            let sign = if self.wavenumber(i).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            *c *= inv_n * sign;
        }
        buf
    }

    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(spectrum.len(), self.n);
        let mut buf: Vec<Complex64> = spectrum
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let sign = if self.wavenumber(i).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                c * sign
            })
            .collect();
        self.plans.inv.process(&mut buf);
        buf
    }

    /// Padded (3n/2) physical samples of a band-limited spectrum, Nyquist dropped.
    fn pad_to_physical(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let m = 3 * n / 2;
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (i, c) in spectrum.iter().enumerate() {
            if i == n / 2 {
                continue;
            }
            let k = self.wavenumber(i);
            let slot = k.rem_euclid(m as i64) as usize;
            // origin shift on the padded grid: x_0 = -L/2 as well
            let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            buf[slot] = c * sign;
        }
        self.plans.pad_inv.process(&mut buf);
        buf
    }

    fn padded_to_spectrum(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        let n = self.n;
        let m = 3 * n / 2;
        self.plans.pad_fwd.process(&mut buf);
        let inv_m = 1.0 / m as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (i, o) in out.iter_mut().enumerate() {
            if i == n / 2 {
                continue;
            }
            let k = self.wavenumber(i);
            let slot = k.rem_euclid(m as i64) as usize;
            let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            *o = buf[slot] * inv_m * sign;
        }
        out
    }
}

/// A sampled periodic function; the spectrum is computed on first use.
#[derive(Clone)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
    real: bool,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("real", &self.real)
            .field("norm_inf", &self.norm_inf())
            .finish()
    }
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self::from_real(grid, vec![0.0; grid.n()])
    }

    pub fn from_real(grid: &Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n(), "sample count must match grid");
        Self {
            grid: grid.clone(),
            values: values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
            real: true,
            spectrum: OnceLock::new(),
        }
    }

    pub fn from_complex(grid: &Grid, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), grid.n(), "sample count must match grid");
        Self {
            grid: grid.clone(),
            values,
            real: false,
            spectrum: OnceLock::new(),
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_real(grid, grid.xs().into_iter().map(f).collect())
    }

    /// Builds a field from its spectrum. When `real` is set the spectrum is
    /// taken to be Hermitian and the imaginary residue of the samples dropped.
    pub fn from_spectrum(grid: &Grid, spectrum: Vec<Complex64>, real: bool) -> Self {
        assert_eq!(spectrum.len(), grid.n(), "spectrum length must match grid");
        let mut values = grid.inverse(&spectrum);
        let spectrum = if real {
            for v in values.iter_mut() {
                v.im = 0.0;
            }
            let mut s = spectrum;
            // Hermitian projection keeps the cached spectrum consistent
            let n = grid.n();
            let copy = s.clone();
            for i in 0..n {
                let j = (n - i) % n;
                s[i] = 0.5 * (copy[i] + copy[j].conj());
            }
            s
        } else {
            spectrum
        };
        let cell = OnceLock::new();
        let _ = cell.set(spectrum);
        Self {
            grid: grid.clone(),
            values,
            real,
            spectrum: cell,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when the field was built (or derived) as a real function.
    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.im).collect()
    }

    pub fn real_part(&self) -> Field {
        Field::from_real(&self.grid, self.re())
    }

    pub fn imag_part(&self) -> Field {
        Field::from_real(&self.grid, self.im())
    }

    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| {
            let mut s = self.grid.forward(&self.values);
            if self.real {
                let n = self.grid.n();
                let copy = s.clone();
                for i in 0..n {
                    let j = (n - i) % n;
                    s[i] = 0.5 * (copy[i] + copy[j].conj());
                }
            }
            s
        })
    }

    pub fn at(&self, j: usize) -> Complex64 {
        self.values[j]
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Trapezoidal `L^2` norm on the grid.
    pub fn l2_quadrature(&self) -> f64 {
        (self.values.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dx()).sqrt()
    }

    /// `int u conj(v) dx` by the trapezoidal rule.
    pub fn inner(&self, other: &Field) -> Complex64 {
        self.check_same_grid(other).expect("inner product across grids");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum::<Complex64>()
            * self.grid.dx()
    }

    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.grid.dx()
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// Fourier multiplier `m(D)`. At the Nyquist slot the symmetrized value
    /// `(m(xi_N) + m(-xi_N))/2` is used so that real fields stay real under
    /// multipliers with `m(-xi) = conj m(xi)`.
    pub fn multiplier(&self, m: impl Fn(f64) -> Complex64) -> Result<Field> {
        let grid = &self.grid;
        let spec = self.spectrum();
        let mut out = vec![zero(); grid.n()];
        let mut hermitian = true;
        for (i, o) in out.iter_mut().enumerate() {
            let xi = grid.xi(i);
            let mk = if i == grid.nyquist_slot() {
                0.5 * (m(xi) + m(-xi))
            } else {
                m(xi)
            };
            if !(mk.re.is_finite() && mk.im.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "multiplier is not finite at xi = {xi}"
                )));
            }
            if i != 0 && i != grid.nyquist_slot() {
                let mm = m(-xi);
                if (mm - mk.conj()).norm() > 1e-14 * (1.0 + mk.norm()) {
                    hermitian = false;
                }
            } else if mk.im.abs() > 1e-14 * (1.0 + mk.norm()) {
                hermitian = false;
            }
            *o = mk * spec[i];
        }
        Ok(Field::from_spectrum(grid, out, self.real && hermitian))
    }

    pub fn real_multiplier(&self, m: impl Fn(f64) -> f64) -> Result<Field> {
        self.multiplier(|xi| Complex64::new(m(xi), 0.0))
    }

    /// Spectral derivative; the Nyquist mode is annihilated.
    pub fn dx(&self) -> Field {
        self.multiplier(|xi| Complex64::new(0.0, xi))
            .expect("derivative multiplier is finite")
    }

    pub fn dxx(&self) -> Field {
        self.multiplier(|xi| Complex64::new(-xi * xi, 0.0))
            .expect("second derivative multiplier is finite")
    }

    /// `|D|^s` with the zero mode set to `at_zero`.
    pub fn abs_d_pow(&self, s: f64, at_zero: f64) -> Field {
        self.real_multiplier(|xi| if xi == 0.0 { at_zero } else { xi.abs().powf(s) })
            .expect("finite multiplier")
    }

    /// Dealiased product by 3/2 zero padding.
    pub fn mul(&self, other: &Field) -> Field {
        self.check_same_grid(other).expect("product across grids");
        let a = self.grid.pad_to_physical(self.spectrum());
        let b = self.grid.pad_to_physical(other.spectrum());
        let prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let spec = self.grid.padded_to_spectrum(prod);
        Field::from_spectrum(&self.grid, spec, self.real && other.real)
    }

    /// Pointwise real function evaluated on the padded grid, then truncated.
    pub fn map_dealiased(&self, f: impl Fn(f64) -> f64) -> Field {
        let a = self.grid.pad_to_physical(self.spectrum());
        let vals: Vec<Complex64> = a.iter().map(|c| Complex64::new(f(c.re), 0.0)).collect();
        let spec = self.grid.padded_to_spectrum(vals);
        Field::from_spectrum(&self.grid, spec, true)
    }

    /// Dealiased evaluation of a real function of several real fields.
    pub fn combine_dealiased(fields: &[&Field], f: impl Fn(&[f64]) -> f64) -> Field {
        let grid = fields[0].grid.clone();
        let padded: Vec<Vec<Complex64>> = fields
            .iter()
            .map(|u| grid.pad_to_physical(u.spectrum()))
            .collect();
        let m = padded[0].len();
        let mut args = vec![0.0; fields.len()];
        let vals: Vec<Complex64> = (0..m)
            .map(|p| {
                for (a, col) in args.iter_mut().zip(&padded) {
                    *a = col[p].re;
                }
                Complex64::new(f(&args), 0.0)
            })
            .collect();
        let spec = grid.padded_to_spectrum(vals);
        Field::from_spectrum(&grid, spec, true)
    }

    /// Pointwise (collocation) product without dealiasing.
    pub fn mul_pointwise(&self, other: &Field) -> Field {
        self.check_same_grid(other).expect("product across grids");
        let vals = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        self.with_values(vals, self.real && other.real)
    }

    pub fn map_pointwise(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_real(&self.grid, self.values.iter().map(|c| f(c.re)).collect())
    }

    pub fn scale(&self, c: f64) -> Field {
        self.with_values(self.values.iter().map(|v| v * c).collect(), self.real)
    }

    pub fn scale_complex(&self, c: Complex64) -> Field {
        self.with_values(self.values.iter().map(|v| v * c).collect(), false)
    }

    fn with_values(&self, values: Vec<Complex64>, real: bool) -> Field {
        let mut values = values;
        if real {
            for v in values.iter_mut() {
                v.im = 0.0;
            }
        }
        Field {
            grid: self.grid.clone(),
            values,
            real,
            spectrum: OnceLock::new(),
        }
    }

    /// Zeroes every mode with `|k| >= n/3` and the Nyquist mode.
    pub fn dealias_filter(&self) -> Field {
        let grid = &self.grid;
        let cut = grid.n() as i64 / 3;
        let spec: Vec<Complex64> = self
            .spectrum()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if grid.wavenumber(i).abs() >= cut || i == grid.nyquist_slot() {
                    zero()
                } else {
                    *c
                }
            })
            .collect();
        Field::from_spectrum(grid, spec, self.real)
    }

    /// Fraction of spectral energy carried by the outer third of the band.
    pub fn tail_fraction(&self) -> f64 {
        let grid = &self.grid;
        let cut = grid.n() as i64 / 3;
        let mut total = 0.0;
        let mut tail = 0.0;
        for (i, c) in self.spectrum().iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            if grid.wavenumber(i).abs() >= cut || i == grid.nyquist_slot() {
                tail += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    pub fn check_tail(&self, what: &str) -> Result<()> {
        let t = self.tail_fraction();
        if t > DEALIAS_TAIL_TOL {
            return Err(Error::InvalidInput(format!(
                "{what}: spectral tail fraction {t:.3e} exceeds {DEALIAS_TAIL_TOL:.0e}"
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.values.len() as f64
    }

    /// Discrete `H^s` norm, `(L sum_k (1 + xi_k^2)^s |u_k|^2)^(1/2)`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let grid = &self.grid;
        let sum: f64 = self
            .spectrum()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let xi = grid.xi(i);
                (1.0 + xi * xi).powf(s) * c.norm_sqr()
            })
            .sum();
        (sum * grid.length()).sqrt()
    }

    /// `|| <x>^{-1/2-delta} u ||_{H^s}` with `<x> = (1 + x^2)^{1/2}` on the
    /// centered fundamental domain.
    pub fn weighted_norm(&self, s: f64, delta: f64) -> Result<f64> {
        Ok(self.weighted(delta)?.sobolev_norm(s))
    }

    pub fn weighted(&self, delta: f64) -> Result<Field> {
        if !(delta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "weight exponent delta must be positive, got {delta}"
            )));
        }
        let grid = &self.grid;
        let vals = self
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| v * japanese(grid.x(j)).powf(-0.5 - delta))
            .collect();
        Ok(self.with_values(vals, self.real))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x,re,im")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(f, "{:.17e},{:.17e},{:.17e}", self.grid.x(j), v.re, v.im)?;
        }
        Ok(())
    }

    pub fn to_record(&self) -> FieldRecord {
        FieldRecord {
            grid: GridRecord {
                n: self.grid.n(),
                length: self.grid.length(),
            },
            real: self.real,
            spectrum: self.spectrum().iter().map(|c| [c.re, c.im]).collect(),
        }
    }

    pub fn from_record(rec: &FieldRecord) -> Result<Field> {
        let grid = Grid::new(rec.grid.n, rec.grid.length)?;
        if rec.spectrum.len() != grid.n() {
            return Err(Error::InvalidInput(format!(
                "spectrum has {} entries for n = {}",
                rec.spectrum.len(),
                grid.n()
            )));
        }
        let spec = rec
            .spectrum
            .iter()
            .map(|[re, im]| Complex64::new(*re, *im))
            .collect();
        Ok(Field::from_spectrum(&grid, spec, rec.real))
    }
}

/// `<x> = (1 + x^2)^{1/2}`.
pub fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub n: usize,
    pub length: f64,
}

/// JSON form of a field: grid plus spectrum in FFT slot order as `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub grid: GridRecord,
    #[serde(default)]
    pub real: bool,
    pub spectrum: Vec<[f64; 2]>,
}

impl<'a> Add<&'a Field> for &'a Field {
    type Output = Field;
    fn add(self, rhs: &'a Field) -> Field {
        self.check_same_grid(rhs).expect("sum across grids");
        let v = self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect();
        self.with_values(v, self.real && rhs.real)
    }
}

impl<'a> Sub<&'a Field> for &'a Field {
    type Output = Field;
    fn sub(self, rhs: &'a Field) -> Field {
        self.check_same_grid(rhs).expect("difference across grids");
        let v = self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect();
        self.with_values(v, self.real && rhs.real)
    }
}

impl Add for Field {
    type Output = Field;
    fn add(self, rhs: Field) -> Field {
        &self + &rhs
    }
}

impl Sub for Field {
    type Output = Field;
    fn sub(self, rhs: Field) -> Field {
        &self - &rhs
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scale(rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(64, 2.0 * PI).unwrap()
    }

    fn dft_direct(grid: &Grid, values: &[Complex64]) -> Vec<Complex64> {
        let n = grid.n();
        (0..n)
            .map(|i| {
                let xi = grid.xi(i);
                values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * Complex64::from_polar(1.0, -xi * grid.x(j)))
                    .sum::<Complex64>()
                    / n as f64
            })
            .collect()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(6, 1.0).is_err());
        assert!(Grid::new(24, 1.0).is_err());
        assert!(Grid::new(16, 0.0).is_err());
        let g = Grid::new(16, 3.0).unwrap();
        assert_eq!(g.x(0), -1.5);
        assert_eq!(g.wavenumber(8), -8);
        assert_eq!(g.xi(1), -g.xi(15));
    }

    #[test]
    fn identity_multiplier() {
        let g = grid();
        let u = Field::from_fn(&g, |x| (x.sin() + 0.3 * (3.0 * x).cos()).exp());
        let v = u.multiplier(|_| Complex64::new(1.0, 0.0)).unwrap();
        for (a, b) in u.values().iter().zip(v.values()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn abs_xi_on_cosine() {
        let g = Grid::new(32, 5.0).unwrap();
        let k = 2.0 * PI / 5.0;
        let u = Field::from_fn(&g, |x| (k * x).cos());
        let v = u.real_multiplier(|xi| xi.abs()).unwrap();
        for j in 0..g.n() {
            assert!((v.at(j).re - k * (k * g.x(j)).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_multiplier_is_rejected() {
        let g = grid();
        let u = Field::from_fn(&g, |x| x.cos());
        assert!(u.real_multiplier(|xi| 1.0 / xi).is_err());
    }

    #[test]
    fn spectrum_matches_direct_dft() {
        let g = Grid::new(32, 7.0).unwrap();
        let u = Field::from_fn(&g, |x| (0.4 * x).sin() * (-x * x / 4.0).exp() + 0.1 * x.cos());
        let direct = dft_direct(&g, u.values());
        for (a, b) in u.spectrum().iter().zip(&direct) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn sobolev_zero_is_l2_quadrature() {
        let g = Grid::new(64, 10.0).unwrap();
        let u = Field::from_fn(&g, |x| (2.0 * PI * x / 10.0).sin());
        let exact = (5.0f64).sqrt(); // int_0^L sin^2 = L/2
        assert!((u.sobolev_norm(0.0) - exact).abs() < 1e-12);
        assert!((u.l2_quadrature() - exact).abs() < 1e-12);
        assert_eq!(Field::zeros(&g).sobolev_norm(1.5), 0.0);
    }

    #[test]
    fn weighted_norm_rules() {
        let g = Grid::new(128, 40.0).unwrap();
        let u = Field::from_fn(&g, |x| (-x * x).exp());
        assert!(u.weighted_norm(0.0, 0.0).is_err());
        assert_eq!(Field::zeros(&g).weighted_norm(1.0, 0.2).unwrap(), 0.0);
        let w: Vec<f64> = [0.1, 0.5, 2.0]
            .iter()
            .map(|&d| u.weighted_norm(0.5, d).unwrap())
            .collect();
        assert!(w[0] > w[1] && w[1] > w[2]);
    }

    #[test]
    fn dealiased_product_is_exact_for_band_limited_inputs() {
        let g = Grid::new(16, 2.0 * PI).unwrap();
        let a = Field::from_fn(&g, |x| (5.0 * x).cos());
        let b = Field::from_fn(&g, |x| (6.0 * x).cos());
        // cos5 cos6 = (cos x + cos 11x)/2; mode 11 is outside the band
        let p = a.mul(&b);
        for j in 0..g.n() {
            assert!((p.at(j).re - 0.5 * g.x(j).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn record_round_trip() {
        let g = grid();
        let u = Field::from_fn(&g, |x| x.sin().powi(3));
        let rec = u.to_record();
        let json = serde_json::to_string(&rec).unwrap();
        let back = Field::from_record(&serde_json::from_str(&json).unwrap()).unwrap();
        for (a, b) in u.values().iter().zip(back.values()) {
            assert!((a - b).norm() < 1e-14);
        }
    }
}
