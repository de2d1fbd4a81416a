//! Restarted GMRES with right preconditioning.

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2};

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    /// Target relative residual `‖b − Ax‖ / ‖b‖`.
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            restart: 50,
            max_iter: 2000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual of the returned iterate, recomputed from scratch.
    pub residual: f64,
}

/// Solves `A x = b` with GMRES(m) on `A M⁻¹ y = b`, `x = M⁻¹ y`.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: GmresOptions,
) -> Result<GmresOutcome> {
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::InvalidArgument(format!("tolerance {} outside (0, 1)", opts.tol)));
    }
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let m = opts.restart.max(1);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm2(&r);
        if beta / bnorm <= opts.tol {
            break;
        }
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|x| x / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            if iterations >= opts.max_iter {
                break;
            }
            iterations += 1;
            let mut w = apply(&precond(&v[k]));
            // modified Gram–Schmidt with one reorthogonalisation pass
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let hij = dot(&w, vi);
                    h[i][k] += hij;
                    axpy(-hij, vi, &mut w);
                }
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() / bnorm <= 0.5 * opts.tol || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut dy = vec![0.0; n];
        for (i, yi) in y.iter().enumerate() {
            axpy(*yi, &v[i], &mut dy);
        }
        let dx = precond(&dy);
        axpy(1.0, &dx, &mut x);
    }
    let ax = apply(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let residual = norm2(&r) / bnorm;
    if residual > opts.tol {
        return Err(Error::NotConverged { iterations, residual });
    }
    Ok(GmresOutcome {
        x,
        iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Csr;
    use rand::{Rng, SeedableRng};

    fn random_nonsymmetric(n: usize, seed: u64) -> Csr {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + rng.random::<f64>()));
            for _ in 0..3 {
                let j = rng.random_range(0..n);
                t.push((i, j, rng.random::<f64>() - 0.5));
            }
        }
        Csr::from_triplets(n, n, t)
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = random_nonsymmetric(10, 1);
        let out = gmres(|x| a.mul_vec(x), |x| x.to_vec(), &[0.0; 10], GmresOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn solves_with_and_without_restart() {
        let a = random_nonsymmetric(200, 7);
        let b: Vec<f64> = (0..200).map(|i| (i as f64).sin()).collect();
        for restart in [5, 50] {
            let opts = GmresOptions {
                tol: 1e-12,
                restart,
                max_iter: 2000,
            };
            let d = a.diag();
            let out = gmres(
                |x| a.mul_vec(x),
                |x| x.iter().zip(&d).map(|(x, d)| x / d).collect(),
                &b,
                opts,
            )
            .unwrap();
            let r = a.mul_vec(&out.x);
            let err = r.iter().zip(&b).map(|(r, b)| (r - b).powi(2)).sum::<f64>().sqrt();
            assert!(err <= 1e-12 * norm2(&b) * 1.0001);
        }
    }

    #[test]
    fn iteration_cap_reported() {
        let a = random_nonsymmetric(100, 3);
        let b = vec![1.0; 100];
        let opts = GmresOptions {
            tol: 1e-14,
            restart: 2,
            max_iter: 3,
        };
        let res = gmres(|x| a.mul_vec(x), |x| x.to_vec(), &b, opts);
        assert!(matches!(res, Err(Error::NotConverged { iterations: 3, .. })));
    }
}
