//! Banded factorizations of `H − σ` for symmetric matrices with lower
//! bandwidth `b`.

use crate::error::{Error, Result};
use crate::operator::CsrMatrix;

/// LU with partial pivoting; `U` has upper bandwidth `2b`.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    b: usize,
    width: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
    l: Vec<f64>,
}

impl BandLu {
    pub fn factor(m: &CsrMatrix, b: usize, shift: f64) -> Result<Self> {
        let n = m.dim;
        let width = 3 * b + 1;
        let mut a = vec![0.0; n * width];
        let at = |i: usize, j: usize| i * width + (j + b - i);
        for i in 0..n {
            for (j, v) in m.row(i) {
                debug_assert!(j + b >= i && j <= i + b);
                a[at(i, j)] = v;
            }
            a[at(i, i)] -= shift;
        }
        let scale = m.norm_bound().max(shift.abs()).max(1.0);
        let mut piv = vec![0; n];
        let mut l = vec![0.0; n * b.max(1)];
        for k in 0..n {
            let last = (k + b).min(n - 1);
            let mut p = k;
            for i in k + 1..=last {
                if a[at(i, k)].abs() > a[at(p, k)].abs() {
                    p = i;
                }
            }
            if a[at(p, k)].abs() <= f64::EPSILON * 1e-3 * scale {
                return Err(Error::Resonant { energy: shift, distance: 0.0 });
            }
            let right = (k + 2 * b).min(n - 1);
            if p != k {
                for j in k..=right {
                    a.swap(at(k, j), at(p, j));
                }
            }
            piv[k] = p;
            let pivot = a[at(k, k)];
            for i in k + 1..=last {
                let f = a[at(i, k)] / pivot;
                l[k * b + (i - k - 1)] = f;
                a[at(i, k)] = 0.0;
                if f != 0.0 {
                    for j in k + 1..=right {
                        a[at(i, j)] -= f * a[at(k, j)];
                    }
                }
            }
        }
        Ok(Self { n, b, width, a, piv, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, b, w) = (self.n, self.b, self.width);
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..=(k + b).min(n - 1) {
                    x[i] -= self.l[k * b + (i - k - 1)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let row = &self.a[k * w..(k + 1) * w];
            let mut s = x[k];
            for j in k + 1..=(k + 2 * b).min(n - 1) {
                s -= row[j + b - k] * x[j];
            }
            x[k] = s / row[b];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Number of eigenvalues of `m` strictly below `shift`, by Sylvester's law of
/// inertia applied to an unpivoted banded `LDLᵀ` of `m − shift`.
pub fn count_below(m: &CsrMatrix, b: usize, shift: f64) -> usize {
    let n = m.dim;
    let w = b + 1;
    let mut t = vec![0.0; n * w];
    for i in 0..n {
        for (j, v) in m.row(i) {
            if j <= i {
                t[i * w + (i - j)] = v;
            }
        }
        t[i * w] -= shift;
    }
    let tiny = f64::EPSILON * m.norm_bound().max(shift.abs()).max(1.0);
    let mut negatives = 0;
    let mut col = vec![0.0; b];
    for j in 0..n {
        let mut d = t[j * w];
        if d.abs() < tiny {
            d = if d < 0.0 { -tiny } else { tiny };
        }
        if d < 0.0 {
            negatives += 1;
        }
        let last = (j + b).min(n - 1);
        for i in j + 1..=last {
            col[i - j - 1] = t[i * w + (i - j)] / d;
        }
        for i in j + 1..=last {
            let li = col[i - j - 1] * d;
            if li == 0.0 {
                continue;
            }
            for k in j + 1..=i {
                t[i * w + (i - k)] -= li * col[k - j - 1];
            }
        }
    }
    negatives
}
