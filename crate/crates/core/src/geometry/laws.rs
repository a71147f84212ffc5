//! Exact verification of the covering laws in rational arithmetic.
//!
//! Lengths and probe points are rationals; the floating-point [`Cover`] is
//! built from their `f64` images and every law is then decided exactly on the
//! grid it produced. Dyadic inputs with small denominators have exact `f64`
//! images, so nothing is lost in the conversion.

use super::{suitable_cover, CellRule, Configuration, Cover, NRectangle};
use crate::error::Result;
use num_rational::Ratio;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub type Q = Ratio<i128>;

pub fn q(num: i128, den: i128) -> Q {
    Ratio::new(num, den)
}

pub fn to_f64(v: Q) -> f64 {
    *v.numer() as f64 / *v.denom() as f64
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CoverLawReport {
    pub alpha_index: i64,
    pub cells: u128,
    pub alpha_admissible: bool,
    pub nesting: bool,
    pub number: bool,
    pub free_guarantee: bool,
    pub boundary_cover: bool,
    pub lattice_cover: bool,
    pub probes: usize,
    pub failures: Vec<String>,
}

impl CoverLawReport {
    pub fn all_hold(&self) -> bool {
        self.alpha_admissible
            && self.nesting
            && self.number
            && self.free_guarantee
            && self.boundary_cover
            && self.lattice_cover
    }
}

fn qabs(v: Q) -> Q {
    if v < Q::from_integer(0) {
        -v
    } else {
        v
    }
}

fn pow(v: Q, e: usize) -> Q {
    (0..e).fold(Q::from_integer(1), |acc, _| acc * v)
}

/// Checks the covering laws of the box `Λ_L(x)` in `R^{nd}` with cells of side `ell`.
///
/// `probes` are points of the parent used for the boundary law, `lattice`
/// integer points (anywhere) used for the lattice law.
pub fn check_cover_laws(
    center: &[Q],
    d: usize,
    l: Q,
    ell: Q,
    probes: &[Vec<Q>],
    lattice: &[Vec<i64>],
) -> Result<(Cover, CoverLawReport)> {
    let cfg = Configuration::new(d, center.iter().map(|&c| to_f64(c)).collect())?;
    let parent = NRectangle::cube(cfg, to_f64(l))?;
    let cover = suitable_cover(&parent, to_f64(ell))?;
    let axes = center.len();
    let two = Q::from_integer(2);
    let mut rep = CoverLawReport { alpha_index: cover.alpha_index(), ..Default::default() };

    let k = cover.alpha_index();
    let c = (l - ell) / (two * ell);
    let alpha = c / Q::from_integer(k as i128);
    let exact_k = (c * q(5, 4)).ceil().to_integer() as i64;
    rep.alpha_admissible = k == exact_k && alpha >= q(3, 5) && alpha <= q(4, 5);
    if !rep.alpha_admissible {
        rep.failures.push(format!("alpha index {k} vs exact {exact_k}, alpha {alpha}"));
    }
    let p = alpha * ell;
    let half = l / two;
    let cell_half = ell / two;

    // Per axis the cells are the intervals jp ± ℓ/2, |j| ≤ k. Consecutive cells
    // overlap, the extreme ones end on the parent boundary, and the next grid
    // point lies outside the open parent. Products of such axis covers cover
    // the product box, both open and closed.
    let kq = Q::from_integer(k as i128);
    rep.nesting = p < ell
        && kq * p + cell_half == half
        && kq * p < half
        && (kq + Q::from_integer(1)) * p >= half;
    if !rep.nesting {
        rep.failures.push("cells do not tile the parent".into());
    }
    let f64_ok = cover.indices().iter().take(64).all(|ix| {
        let r = cover.center_of(ix);
        ix.iter()
            .enumerate()
            .all(|(a, &j)| (r[a] - to_f64(center[a] + Q::from_integer(j as i128) * p)).abs() <= 1e-9 * (1.0 + r[a].abs()))
    });
    if !f64_ok {
        rep.nesting = false;
        rep.failures.push("floating centers drift from exact centers".into());
    }

    let count = Q::from_integer(2 * k as i128 + 1);
    rep.cells = (2 * k as u128 + 1).pow(axes as u32);
    let formula = (l - ell) / p + Q::from_integer(1);
    let total = pow(count, axes);
    rep.number = formula == count
        && cover.len() as u128 == rep.cells
        && pow(l / ell, axes) <= total
        && total <= pow(two * l / ell, axes);
    if !rep.number {
        rep.failures.push(format!("cell count {total} outside bounds"));
    }

    // Distinct grid points differ by a nonzero multiple of p on some axis, and
    // the open cubes of sides ℓ/5 and ℓ are disjoint iff that gap is ≥ 3ℓ/5.
    let reach = ell / Q::from_integer(10) + cell_half;
    rep.free_guarantee = p >= reach
        && (-k..=k).all(|a| {
            (-k..=k).filter(|&b| b != a).all(|b| qabs(Q::from_integer((a - b) as i128) * p) >= reach)
        });
    if !rep.free_guarantee {
        rep.failures.push("small cubes meet foreign cells".into());
    }

    let tenth = ell / Q::from_integer(10);
    rep.boundary_cover = true;
    for y in probes {
        if (0..axes).any(|a| qabs(y[a] - center[a]) >= half) {
            continue;
        }
        rep.probes += 1;
        let yf: Vec<f64> = y.iter().map(|&v| to_f64(v)).collect();
        let ix = cover.cell_index_for(&yf, CellRule::Parent);
        let ok = (0..axes).all(|a| {
            let r = center[a] + Q::from_integer(ix[a] as i128) * p;
            let lo = (y[a] - tenth).max(center[a] - half);
            let hi = (y[a] + tenth).min(center[a] + half);
            ix[a].abs() <= k && lo >= r - cell_half && hi <= r + cell_half
        });
        if !ok {
            rep.boundary_cover = false;
            rep.failures.push(format!("probe {yf:?} not covered by cell {ix:?}"));
        }
    }

    rep.lattice_cover = true;
    for y in lattice {
        rep.probes += 1;
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let ix = cover.cell_index_for(&yf, CellRule::Lattice);
        let ok = (0..axes).all(|a| {
            let r = center[a] + Q::from_integer(ix[a] as i128) * p;
            qabs(Q::from_integer(y[a] as i128) - r) + tenth <= cell_half
        });
        if !ok {
            rep.lattice_cover = false;
            rep.failures.push(format!("lattice point {y:?} not covered by cell {ix:?}"));
        }
    }
    Ok((cover, rep))
}

/// Adversarial probe points: midpoints between neighbouring centers, points
/// next to the parent boundary and the centers themselves, combined across
/// axes by cycling through the per-axis candidates.
pub fn adversarial_probes(center: &[Q], l: Q, ell: Q) -> Vec<Vec<Q>> {
    let c = (l - ell) / (Q::from_integer(2) * ell);
    let k = (c * q(5, 4)).ceil().to_integer();
    let p = c / Q::from_integer(k) * ell;
    let half = l / Q::from_integer(2);
    let eps = ell / Q::from_integer(1024);
    let mut offsets = Vec::new();
    for j in -k..=k {
        let r = Q::from_integer(j) * p;
        offsets.push(r);
        offsets.push(r + p / Q::from_integer(2));
    }
    offsets.push(half - eps);
    offsets.push(-half + eps);
    let m = offsets.len();
    (0..m)
        .map(|s| {
            center
                .iter()
                .enumerate()
                .map(|(a, &x)| x + offsets[(s + 3 * a) % m])
                .collect::<Vec<_>>()
        })
        .filter(|y: &Vec<Q>| y.iter().zip(center).all(|(v, x)| qabs(*v - *x) < half))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub n: usize,
    pub d: usize,
    pub side: f64,
    pub ell: f64,
    pub report: CoverLawReport,
}

/// Checks the covering laws on `count` random dyadic boxes with at most
/// `max_axes` axes (`d ≤ 2`, `n ≤ 3`), `ℓ ∈ [1, 4]` and `L ∈ [6ℓ, 6ℓ + 14)`.
pub fn cover_law_sweep(count: usize, max_axes: usize, seed: u64) -> Result<Vec<SweepRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |m: u64| (rng.next_u64() % m) as i128;
    let mut rows = Vec::with_capacity(count);
    for index in 0..count {
        let axes = 1 + draw(max_axes.clamp(1, 3) as u64) as usize;
        let d = if axes == 2 && draw(2) == 1 { 2 } else { 1 };
        let n = axes / d;
        let ell = q(8 + draw(25), 8);
        let l = ell * Q::from_integer(6) + q(draw(112), 8);
        let center: Vec<Q> = (0..axes).map(|_| q(draw(129) - 64, 8)).collect();
        let probes = adversarial_probes(&center, l, ell);
        let reach = (to_f64(l) / 2.0).ceil() as i128 + 2;
        let lattice: Vec<Vec<i64>> = (0..24)
            .map(|_| center.iter().map(|c| (c.to_integer() + draw(2 * reach as u64 + 1) - reach) as i64).collect())
            .collect();
        let (_, report) = check_cover_laws(&center, d, l, ell, &probes, &lattice)?;
        rows.push(SweepRow { index, n, d, side: to_f64(l), ell: to_f64(ell), report });
    }
    Ok(rows)
}
