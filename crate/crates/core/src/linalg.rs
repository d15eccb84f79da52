//! Restarted, right-preconditioned GMRES for matrix-free complex operators.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    /// Absolute target on the 2-norm of the residual.
    pub target: f64,
    /// A restart cycle that stalls (less than 2x reduction) is accepted
    /// once the true residual is below this floor.
    pub stall_floor: f64,
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Solves `A M^{-1} y = b`, returning `x = M^{-1} y`.
pub fn gmres(
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
    precond: impl Fn(&[Complex64]) -> Vec<Complex64>,
    b: &[Complex64],
    opts: GmresOptions,
) -> Result<GmresOutcome> {
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut x = vec![zero; n];
    let mut r = b.to_vec();
    let mut beta = norm2(&r);
    let mut iterations = 0;
    if beta <= opts.target {
        return Ok(GmresOutcome {
            x,
            iterations,
            residual: beta,
        });
    }
    let m = opts.restart.max(1);
    let mut prev_beta = beta;
    while iterations < opts.max_iter {
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|c| c / beta).collect());
        let mut h = vec![vec![zero; m]; m + 1];
        let mut cs = vec![zero; m];
        let mut sn = vec![zero; m];
        let mut g = vec![zero; m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            iterations += 1;
            k_used = k + 1;
            let mut w = apply(&precond(&basis[k]));
            // modified Gram-Schmidt, twice for robustness
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let hij = dot(q, &w);
                    h[i][k] += hij;
                    axpy(-hij, q, &mut w);
                }
            }
            let wn = norm2(&w);
            h[k + 1][k] = Complex64::new(wn, 0.0);
            for i in 0..k {
                let t = cs[i].conj() * h[i][k] + sn[i].conj() * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let (a, bb) = (h[k][k], h[k + 1][k]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                cs[k] = Complex64::new(1.0, 0.0);
                sn[k] = zero;
            } else {
                cs[k] = a / den;
                sn[k] = bb / den;
            }
            h[k][k] = cs[k].conj() * a + sn[k].conj() * bb;
            h[k + 1][k] = zero;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            let res = g[k + 1].norm();
            if res <= opts.target || wn == 0.0 || iterations >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|c| c / wn).collect());
        }
        // back substitution
        let mut y = vec![zero; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut z = vec![zero; n];
        for (yi, q) in y.iter().zip(&basis) {
            axpy(*yi, q, &mut z);
        }
        let dx = precond(&z);
        axpy(Complex64::new(1.0, 0.0), &dx, &mut x);
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        beta = norm2(&r);
        let stalled = beta > 0.5 * prev_beta && beta <= opts.stall_floor;
        prev_beta = beta;
        if beta <= opts.target || stalled {
            return Ok(GmresOutcome {
                x,
                iterations,
                residual: beta,
            });
        }
    }
    Err(Error::Solver {
        iterations,
        residual: beta,
        target: opts.target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_small_nonsymmetric_system() {
        let n = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a: Vec<Vec<Complex64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let d = if i == j { 4.0 } else { 0.0 };
                        Complex64::new(d + 0.3 * rng.gen::<f64>(), 0.3 * rng.gen::<f64>())
                    })
                    .collect()
            })
            .collect();
        let apply = |v: &[Complex64]| -> Vec<Complex64> {
            a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
        };
        let xs: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let b = apply(&xs);
        let out = gmres(
            apply,
            |v| v.to_vec(),
            &b,
            GmresOptions {
                restart: 10,
                max_iter: 400,
                target: 1e-11 * norm2(&b),
                stall_floor: 0.0,
            },
        )
        .unwrap();
        for (u, v) in out.x.iter().zip(&xs) {
            assert!((u - v).norm() < 1e-8);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let b = vec![Complex64::new(1.0, 0.0); 4];
        // singular operator
        let err = gmres(
            |v| vec![v[0], v[0], v[0], v[0]],
            |v| v.to_vec(),
            &[b[0], -b[1], b[2], b[3]],
            GmresOptions {
                restart: 2,
                max_iter: 6,
                target: 1e-12,
                stall_floor: 0.0,
            },
        );
        assert!(matches!(err, Err(Error::Solver { .. })));
    }
}
