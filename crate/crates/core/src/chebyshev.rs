//! Chebyshev–Gauss–Lobatto collocation on the vertical interval `[-1, 0]`.
//!
//! Node `l` sits at `z_l = (cos(pi l / N) - 1) / 2`, so `l = 0` is the top
//! (`z = 0`) and `l = N` the bottom (`z = -1`).

use std::f64::consts::PI;

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct ChebyshevStrip {
    z: Vec<f64>,
    dz: DMatrix<f64>,
    dzz: DMatrix<f64>,
}

impl ChebyshevStrip {
    /// `degree` is `N`; there are `N + 1` nodes.
    pub fn new(degree: usize) -> Self {
        assert!(degree >= 2, "need at least three Chebyshev nodes");
        let n = degree;
        let t: Vec<f64> = (0..=n).map(|l| (PI * l as f64 / n as f64).cos()).collect();
        let c = |l: usize| -> f64 {
            let edge = if l == 0 || l == n { 2.0 } else { 1.0 };
            if l % 2 == 0 {
                edge
            } else {
                -edge
            }
        };
        // Trefethen's construction with the negative-sum trick on the diagonal
        let mut d = DMatrix::<f64>::zeros(n + 1, n + 1);
        for i in 0..=n {
            for j in 0..=n {
                if i != j {
                    d[(i, j)] = c(i) / c(j) / (t[i] - t[j]);
                }
            }
        }
        for i in 0..=n {
            let s: f64 = (0..=n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
            d[(i, i)] = -s;
        }
        // z = (t - 1)/2  =>  d/dz = 2 d/dt
        let dz = d * 2.0;
        let dzz = &dz * &dz;
        let z = t.iter().map(|ti| 0.5 * (ti - 1.0)).collect();
        Self { z, dz, dzz }
    }

    pub fn degree(&self) -> usize {
        self.z.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.z
    }

    pub fn dz(&self) -> &DMatrix<f64> {
        &self.dz
    }

    pub fn dzz(&self) -> &DMatrix<f64> {
        &self.dzz
    }

    /// Clenshaw–Curtis weights for `int_{-1}^{0} f dz`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let n = self.degree();
        let theta: Vec<f64> = (0..=n).map(|l| PI * l as f64 / n as f64).collect();
        let mut w = vec![0.0; n + 1];
        let half = n / 2;
        for (l, wl) in w.iter_mut().enumerate() {
            let mut v = 1.0;
            for k in 1..=half {
                let b = if 2 * k == n { 1.0 } else { 2.0 };
                v -= b * (2.0 * k as f64 * theta[l]).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
            let edge = l == 0 || l == n;
            *wl = if edge { v / n as f64 } else { 2.0 * v / n as f64 };
            // interval length 1 instead of 2
            *wl *= 0.5;
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_run_top_to_bottom() {
        let c = ChebyshevStrip::new(8);
        assert_eq!(c.nodes()[0], 0.0);
        assert!((c.nodes()[8] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn differentiates_exponential() {
        let c = ChebyshevStrip::new(24);
        let k = 3.0;
        let f: Vec<f64> = c.nodes().iter().map(|z| (k * z).exp()).collect();
        for i in 0..=24 {
            let d1: f64 = (0..=24).map(|j| c.dz()[(i, j)] * f[j]).sum();
            let d2: f64 = (0..=24).map(|j| c.dzz()[(i, j)] * f[j]).sum();
            assert!((d1 - k * f[i]).abs() < 1e-11);
            assert!((d2 - k * k * f[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_is_exact_on_polynomials() {
        let c = ChebyshevStrip::new(16);
        let w = c.quadrature_weights();
        let int: f64 = c.nodes().iter().zip(&w).map(|(z, w)| w * z.powi(5)).sum();
        assert!((int + 1.0 / 6.0).abs() < 1e-14);
    }
}
