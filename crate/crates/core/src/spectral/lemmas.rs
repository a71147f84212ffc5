//! Resolvent inequalities for partially interactive boxes and for nested
//! boxes.

use super::{Resolvent, RESONANCE_GUARD};
use crate::error::{Error, Result};
use crate::geometry::{complement, interaction_class, NRectangle};
use crate::operator::{kronecker_factors, FiniteVolumeOperator};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct KronBound {
    /// `‖χ_x R χ_y‖` for `H = A ⊗ I + I ⊗ B`.
    pub lhs: f64,
    /// `Σ_{λ ∈ σ(A)} ‖χ R_B(z − λ) χ‖`.
    pub rhs_first: f64,
    /// `Σ_{μ ∈ σ(B)} ‖χ R_A(z − μ) χ‖`.
    pub rhs_second: f64,
}

fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(m.clone());
    (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.len() == 1 {
        return m[(0, 0)].abs();
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Both sides of the partial-interaction resolvent bound, from the
/// eigendecompositions of the factors. Cells are index sets of the factor
/// grids: `(rows of A, rows of B)` and `(cols of A, cols of B)`.
pub fn kron_resolvent_bound(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    z: f64,
    rows: (&[usize], &[usize]),
    cols: (&[usize], &[usize]),
) -> Result<KronBound> {
    let (la, ua) = sorted_eigen(a);
    let (lb, ub) = sorted_eigen(b);
    let scale = la.iter().chain(&lb).fold(1.0f64, |m, v| m.max(v.abs()));
    let guard = RESONANCE_GUARD * scale;
    let distance = la.iter().flat_map(|l| lb.iter().map(move |m| (l + m - z).abs())).fold(f64::INFINITY, f64::min);
    if distance < guard {
        return Err(Error::Resonant { energy: z, distance });
    }
    let (ra, rb) = rows;
    let (ca, cb) = cols;
    let shifted_block = |u: &DMatrix<f64>, vals: &[f64], shift: f64, r: &[usize], c: &[usize]| {
        DMatrix::from_fn(r.len(), c.len(), |i, j| {
            (0..vals.len()).map(|q| u[(r[i], q)] * u[(c[j], q)] / (vals[q] + shift - z)).sum::<f64>()
        })
    };
    let mut full = DMatrix::zeros(ra.len() * rb.len(), ca.len() * cb.len());
    let mut rhs_first = 0.0;
    for (p, &lambda) in la.iter().enumerate() {
        let m = shifted_block(&ub, &lb, lambda, rb, cb);
        rhs_first += spectral_norm(&m);
        for (i, &ri) in ra.iter().enumerate() {
            for (j, &cj) in ca.iter().enumerate() {
                let w = ua[(ri, p)] * ua[(cj, p)];
                if w == 0.0 {
                    continue;
                }
                for k in 0..rb.len() {
                    for l in 0..cb.len() {
                        full[(i * rb.len() + k, j * cb.len() + l)] += w * m[(k, l)];
                    }
                }
            }
        }
    }
    let rhs_second = lb.iter().map(|&mu| spectral_norm(&shifted_block(&ua, &la, mu, ra, ca))).sum();
    Ok(KronBound { lhs: spectral_norm(&full), rhs_first, rhs_second })
}

#[derive(Clone, Debug, Serialize)]
pub struct PiBoundReport {
    pub energy: f64,
    pub split: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub lhs: f64,
    pub rhs_first: f64,
    pub rhs_second: f64,
    pub holds_first: bool,
    pub holds_second: bool,
    /// Direct block norm agrees with the Kronecker-sum reconstruction.
    pub consistent: bool,
}

impl PiBoundReport {
    pub fn holds(&self) -> bool {
        self.holds_first && self.holds_second && self.consistent
    }
}

fn particles_of(x: &[f64], d: usize, set: &[usize]) -> Vec<f64> {
    set.iter().flat_map(|&i| x[i * d..(i + 1) * d].iter().copied()).collect()
}

pub fn pi_resolvent_bound_check(op: &FiniteVolumeOperator, e: f64, a: &[f64], b: &[f64]) -> Result<PiBoundReport> {
    let class = interaction_class(op.rect(), op.params().interaction.range);
    let split = class.split().ok_or(Error::NotPartiallyInteractive)?.to_vec();
    let (fa, fb) = kronecker_factors(op, &split)?;
    let d = op.rect().d();
    let rest = complement(&split, op.rect().n());
    let (ca, cb) = (op.unit_cell(a), op.unit_cell(b));
    let lhs = Resolvent::new(op, e, &[&ca, &cb])?.block_norm(&ca, &cb);
    let rows = (fa.unit_cell(&particles_of(a, d, &split)), fb.unit_cell(&particles_of(a, d, &rest)));
    let cols = (fa.unit_cell(&particles_of(b, d, &split)), fb.unit_cell(&particles_of(b, d, &rest)));
    let kb = kron_resolvent_bound(
        &fa.matrix().to_dense(),
        &fb.matrix().to_dense(),
        e,
        (&rows.0, &rows.1),
        (&cols.0, &cols.1),
    )?;
    let tol = 1e-10;
    Ok(PiBoundReport {
        energy: e,
        split,
        a: a.to_vec(),
        b: b.to_vec(),
        lhs,
        rhs_first: kb.rhs_first,
        rhs_second: kb.rhs_second,
        holds_first: lhs <= kb.rhs_first * (1.0 + tol),
        holds_second: lhs <= kb.rhs_second * (1.0 + tol),
        consistent: (lhs - kb.lhs).abs() <= 1e-8 * lhs.max(1e-300).max(kb.lhs),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GeometricResolventReport {
    pub energy: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Shell point attaining `rhs`.
    pub witness: Vec<f64>,
    pub factor: f64,
    pub shell_points: usize,
    pub holds: bool,
}

fn bounds(r: &NRectangle, q: usize) -> (f64, f64) {
    let c = r.center().coords()[q];
    let s = r.axis_side(q);
    (c - 0.5 * s, c + 0.5 * s)
}

/// Points of `inner` at sup-distance exactly `depth` from the part of its
/// boundary inside `outer`, on a grid of the given pitch along each face.
pub fn boundary_shell(inner: &NRectangle, outer: &NRectangle, depth: f64, pitch: f64) -> Vec<Vec<f64>> {
    let axes = inner.n() * inner.d();
    let eps = 1e-9;
    // (lower face interior, upper face interior) per axis
    let interior: Vec<(bool, bool)> = (0..axes)
        .map(|q| {
            let (lo, hi) = bounds(inner, q);
            let (olo, ohi) = bounds(outer, q);
            (lo > olo + eps, hi < ohi - eps)
        })
        .collect();
    let range = |q: usize| -> Vec<f64> {
        let (lo, hi) = bounds(inner, q);
        let a = if interior[q].0 { lo + depth } else { lo };
        let b = if interior[q].1 { hi - depth } else { hi };
        if a > b + eps {
            return Vec::new();
        }
        let steps = ((b - a) / pitch).floor() as usize;
        let mut v: Vec<f64> = (0..=steps).map(|k| a + k as f64 * pitch).collect();
        if b - v[v.len() - 1] > eps {
            v.push(b);
        }
        v
    };
    let mut out: Vec<Vec<f64>> = Vec::new();
    for q in 0..axes {
        let (lo, hi) = bounds(inner, q);
        let mut levels = Vec::new();
        if interior[q].0 {
            levels.push(lo + depth);
        }
        if interior[q].1 {
            levels.push(hi - depth);
        }
        for level in levels {
            let mut pts = vec![Vec::new()];
            for r in 0..axes {
                let vals = if r == q { vec![level] } else { range(r) };
                pts = pts
                    .into_iter()
                    .flat_map(|p: Vec<f64>| {
                        vals.iter().map(move |&v| {
                            let mut p = p.clone();
                            p.push(v);
                            p
                        })
                    })
                    .collect();
            }
            out.extend(pts);
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    out.dedup();
    out
}

/// Checks `‖χ_y R_outer χ_x‖ ≤ ℓ^{nd} max_a ‖χ_y R_outer χ_a‖ ‖χ_a R_inner χ_x‖`
/// over the shell at depth `(1+δ₊)/2`.
pub fn geometric_resolvent_check(
    inner: &FiniteVolumeOperator,
    outer: &FiniteVolumeOperator,
    e: f64,
    x: &[f64],
    y: &[f64],
) -> Result<GeometricResolventReport> {
    let (li, lo) = (inner.rect(), outer.rect());
    if li.n() != lo.n() || li.d() != lo.d() || !li.is_box() || !lo.is_box() {
        return Err(Error::Precondition("boxes with matching particle count and dimension required".into()));
    }
    let axes = li.n() * li.d();
    let eps = 1e-9;
    for q in 0..axes {
        let (a, b) = bounds(li, q);
        let (oa, ob) = bounds(lo, q);
        if a < oa - eps || b > ob + eps {
            return Err(Error::Precondition("inner box not contained in outer box".into()));
        }
    }
    let ell = li.sides()[0];
    if ell >= lo.sides()[0] {
        return Err(Error::Precondition("inner box must be smaller".into()));
    }
    let delta = inner.params().profile.delta_plus;
    let reach = 0.5 * (3.0 + delta);
    for q in 0..axes {
        let (a, b) = bounds(li, q);
        let (oa, ob) = bounds(lo, q);
        let left = (x[q] - reach).max(oa);
        let right = (x[q] + reach).min(ob);
        if left < a - eps || right > b + eps {
            return Err(Error::Precondition(format!("cube of side {} around x leaves the inner box", 3.0 + delta)));
        }
    }
    let inside_outer = (0..axes).all(|q| {
        let (oa, ob) = bounds(lo, q);
        y[q] > oa && y[q] < ob
    });
    if !inside_outer || li.contains(y) {
        return Err(Error::Precondition("y must lie in the outer box and outside the inner one".into()));
    }
    let shell = boundary_shell(li, lo, 0.5 * (1.0 + delta), 0.5);
    if shell.is_empty() {
        return Err(Error::Precondition("empty boundary shell".into()));
    }
    let cx_out = outer.unit_cell(x);
    let cy = outer.unit_cell(y);
    let cx_in = inner.unit_cell(x);
    let shell_out: Vec<Vec<usize>> = shell.iter().map(|a| outer.unit_cell(a)).collect();
    let shell_in: Vec<Vec<usize>> = shell.iter().map(|a| inner.unit_cell(a)).collect();
    let mut sets_out: Vec<&[usize]> = vec![&cx_out, &cy];
    sets_out.extend(shell_out.iter().map(|s| s.as_slice()));
    let mut sets_in: Vec<&[usize]> = vec![&cx_in];
    sets_in.extend(shell_in.iter().map(|s| s.as_slice()));
    let r_out = Resolvent::new(outer, e, &sets_out)?;
    let r_in = Resolvent::new(inner, e, &sets_in)?;
    let lhs = r_out.block_norm(&cy, &cx_out);
    let factor = ell.powi(axes as i32);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for k in 0..shell.len() {
        let v = factor * r_out.block_norm(&cy, &shell_out[k]) * r_in.block_norm(&shell_in[k], &cx_in);
        if v > best.0 {
            best = (v, k);
        }
    }
    let rhs = best.0;
    Ok(GeometricResolventReport {
        energy: e,
        x: x.to_vec(),
        y: y.to_vec(),
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { f64::INFINITY },
        witness: shell[best.1].clone(),
        factor,
        shell_points: shell.len(),
        holds: lhs <= rhs * (1.0 + 1e-10),
    })
}
