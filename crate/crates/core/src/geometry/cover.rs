use super::{Configuration, NRectangle};
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

/// Overlapping grid of `ℓ`-cells covering a box of side `L`.
///
/// Cell centers are `x + αℓ j` with `j ∈ {-k..k}^{Nd}`, where
/// `α = (L-ℓ)/(2ℓk)` and `k` is the smallest integer putting `α` in `[3/5, 4/5]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cover {
    parent: NRectangle,
    cell_side: f64,
    alpha: f64,
    half_count: i64,
    pitch: f64,
    k_constants: Vec<u64>,
}

/// How to pick a cell for a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellRule {
    /// Nearest grid center inside the parent; the enlarged point cube, cut
    /// down to the parent, lies in the chosen cell.
    Parent,
    /// Nearest center of the infinite grid.
    Lattice,
}

pub fn suitable_cover(parent: &NRectangle, ell: f64) -> Result<Cover> {
    if !parent.is_box() {
        return Err(invalid("suitable covers are defined for boxes"));
    }
    if !(ell > 0.0) {
        return Err(invalid("cell side must be positive"));
    }
    let l = parent.sides()[0];
    if ell > l / 6.0 * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("cell side {ell} exceeds L/6 = {}", l / 6.0)));
    }
    let c = (l - ell) / (2.0 * ell);
    let mut k = (1.25 * c - 1e-9).ceil().max(1.0) as i64;
    while c / (k as f64) > 0.8 + 1e-12 {
        k += 1;
    }
    let alpha = c / k as f64;
    if alpha < 0.6 - 1e-12 {
        return Err(Error::Precondition(format!("no admissible alpha for L={l}, ell={ell}")));
    }
    let mut cover = Cover {
        parent: parent.clone(),
        cell_side: ell,
        alpha,
        half_count: k,
        pitch: (l - ell) / (2.0 * k as f64),
        k_constants: Vec::new(),
    };
    cover.set_multiplicity(1);
    Ok(cover)
}

fn first_k(alpha: f64, n: usize) -> u64 {
    let target = 3.0 * n as f64;
    let mut k = ((target - 1.0) / (2.0 * alpha)).floor().max(1.0) as u64;
    while 2.0 * k as f64 * alpha + 1.0 <= target {
        k += 1;
    }
    while k > 1 && 2.0 * (k - 1) as f64 * alpha + 1.0 > target {
        k -= 1;
    }
    k
}

impl Cover {
    /// Recomputes the enclosing-box constants `k_1..k_{J N^N}`.
    ///
    /// `k_m` is the smallest `k` such that any connected union of `m` cubes of
    /// side `(2k_1α+1)ℓ` centred on the grid sits inside one cube of side
    /// `(2kα+1)ℓ` centred on the grid. The worst case is a straight chain with
    /// the largest overlapping step.
    pub fn set_multiplicity(&mut self, j: usize) {
        let n = self.parent.n();
        let k1 = first_k(self.alpha, n);
        let ratio = 2.0 * k1 as f64 + 1.0 / self.alpha;
        let step = (ratio - 1e-9).ceil() as u64 - 1;
        let count = j.max(1) * n.pow(n as u32);
        self.k_constants = (1..=count as u64).map(|m| k1 + ((m - 1) * step).div_ceil(2)).collect();
    }

    pub fn parent(&self) -> &NRectangle {
        &self.parent
    }

    pub fn cell_side(&self) -> f64 {
        self.cell_side
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The `k` with `α = (L-ℓ)/(2ℓk)`; the grid has `2k+1` centers per axis.
    pub fn alpha_index(&self) -> i64 {
        self.half_count
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn k_constants(&self) -> &[u64] {
        &self.k_constants
    }

    /// Sides `(2k_jα+1)ℓ` of the enclosing boxes, one per `k_j`.
    pub fn enclosing_sides(&self) -> Vec<f64> {
        self.k_constants
            .iter()
            .map(|&k| (2.0 * k as f64 * self.alpha + 1.0) * self.cell_side)
            .collect()
    }

    pub fn axes(&self) -> usize {
        self.parent.n() * self.parent.d()
    }

    pub fn cells_per_axis(&self) -> usize {
        (2 * self.half_count + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.cells_per_axis().pow(self.axes() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn center_of(&self, index: &[i64]) -> Vec<f64> {
        let x = self.parent.center().coords();
        index.iter().enumerate().map(|(q, &j)| x[q] + j as f64 * self.pitch).collect()
    }

    /// Grid indices in lexicographic order.
    pub fn indices(&self) -> Vec<Vec<i64>> {
        let k = self.half_count;
        let mut out = vec![Vec::new()];
        for _ in 0..self.axes() {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (-k..=k).map(move |j| {
                        let mut q = p.clone();
                        q.push(j);
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        self.indices().iter().map(|i| self.center_of(i)).collect()
    }

    /// The cell `Λ_ℓ(r)` as an n-particle box.
    pub fn cell(&self, center: &[f64]) -> NRectangle {
        let c = Configuration::new(self.parent.d(), center.to_vec()).expect("cover center has parent shape");
        NRectangle::cube(c, self.cell_side).expect("positive cell side")
    }

    /// Grid index of the cell chosen for `y`; ties go to the smaller index.
    pub fn cell_index_for(&self, y: &[f64], rule: CellRule) -> Vec<i64> {
        let x = self.parent.center().coords();
        let half = 0.5 * self.parent.sides()[0];
        let inside = y.iter().zip(x).all(|(a, b)| (a - b).abs() <= half);
        let clamp = rule == CellRule::Parent && inside;
        let k = self.half_count;
        y.iter()
            .zip(x)
            .map(|(a, b)| {
                let j = ((a - b) / self.pitch - 0.5).ceil() as i64;
                if clamp {
                    j.clamp(-k, k)
                } else {
                    j
                }
            })
            .collect()
    }

    pub fn cover_cell_for(&self, y: &[f64], rule: CellRule) -> Vec<f64> {
        self.center_of(&self.cell_index_for(y, rule))
    }
}
