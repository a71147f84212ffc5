//! Shift-invert Lanczos with full reorthogonalization.

use super::banded::BandLu;
use crate::error::{Error, Result};
use crate::operator::CsrMatrix;
use nalgebra::{DMatrix, SymmetricEigen};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(w, b);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
}

/// Deterministic pseudo-random start vector.
fn start_vector(n: usize, salt: u64) -> Vec<f64> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64 ^ salt.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// The `want` eigenpairs of `m` closest to `sigma`, ordered by distance.
///
/// Each returned pair has residual `‖Hv − λv‖ ≤ tol·‖H‖`.
pub fn nearest_eigenpairs(m: &CsrMatrix, band: usize, sigma: f64, want: usize, tol: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = m.dim;
    let want = want.min(n);
    if want == 0 {
        return Ok(Vec::new());
    }
    let lu = BandLu::factor(m, band, sigma)?;
    let norm = m.norm_bound().max(1e-300);
    let max_steps = n.min((4 * want + 60).max(120)).min(n.max(1));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_steps);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut v = start_vector(n, 1);
    normalize(&mut v);
    let mut restarts = 1u64;
    let mut check_at = (2 * want + 10).min(max_steps);
    loop {
        let mut w = lu.solve(&v);
        let alpha = dot(&w, &v);
        basis.push(v);
        orthogonalize(&mut w, &basis);
        alphas.push(alpha);
        let mut beta = normalize(&mut w);
        let steps = basis.len();
        let breakdown = beta <= 1e-13 * alpha.abs().max(1e-300);
        if breakdown || steps >= check_at || steps == max_steps {
            let k = steps;
            let mut t = DMatrix::zeros(k, k);
            for i in 0..k {
                t[(i, i)] = alphas[i];
                if i + 1 < k {
                    t[(i, i + 1)] = betas[i];
                    t[(i + 1, i)] = betas[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
            let top = &order[..want.min(k)];
            let resid_beta = if breakdown { 0.0 } else { beta };
            let converged = top.len() == want
                && top.iter().all(|&i| {
                    let theta = eig.eigenvalues[i];
                    (resid_beta * eig.eigenvectors[(k - 1, i)]).abs() <= 0.1 * tol * theta.abs() * norm / (norm + sigma.abs())
                });
            if converged || steps == max_steps {
                let mut out = Vec::with_capacity(want);
                for &i in top {
                    let theta = eig.eigenvalues[i];
                    let lambda = sigma + 1.0 / theta;
                    let mut x = vec![0.0; n];
                    for (j, b) in basis.iter().enumerate() {
                        let c = eig.eigenvectors[(j, i)];
                        x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += c * bi);
                    }
                    normalize(&mut x);
                    let mut hx = vec![0.0; n];
                    m.matvec(&x, &mut hx);
                    let r = hx.iter().zip(&x).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
                    if r > tol * norm {
                        return Err(Error::NoConvergence(format!(
                            "Lanczos residual {r:.3e} at {lambda} after {steps} steps"
                        )));
                    }
                    out.push((lambda, x));
                }
                out.sort_by(|a, b| (a.0 - sigma).abs().total_cmp(&(b.0 - sigma).abs()));
                return Ok(out);
            }
            check_at = (check_at + check_at / 2 + 10).min(max_steps);
        }
        if breakdown {
            restarts += 1;
            let mut fresh = start_vector(n, restarts);
            orthogonalize(&mut fresh, &basis);
            beta = 0.0;
            if normalize(&mut fresh) == 0.0 {
                return Err(Error::NoConvergence("Krylov space exhausted".into()));
            }
            w = fresh;
        }
        betas.push(beta);
        v = w;
    }
}
