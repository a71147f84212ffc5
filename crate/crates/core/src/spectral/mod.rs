//! Eigenvalues, resolvent blocks `‖χ_a R(E) χ_b‖` and the deterministic
//! spectral estimates used by the multiscale analysis.

pub mod banded;
pub mod lanczos;
pub mod lemmas;

use crate::error::{invalid, Error, Result};
use crate::geometry::sup_dist;
use crate::operator::FiniteVolumeOperator;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

pub use lemmas::{
    geometric_resolvent_check, kron_resolvent_bound, pi_resolvent_bound_check, GeometricResolventReport, KronBound,
    PiBoundReport,
};

/// Largest dimension handled by the dense eigensolver.
pub const DENSE_LIMIT: usize = 4000;
/// Below this size resolvent blocks come from the eigendecomposition even
/// when it has not been computed yet.
pub const AUTO_EIGEN_LIMIT: usize = 600;
pub const SOLVER_TOL: f64 = 1e-9;
/// `E` counts as numerically resonant when `dist(E, σ) < RESONANCE_GUARD·‖H‖`.
pub const RESONANCE_GUARD: f64 = 1e-10;
/// Slack on the Combes–Thomas bound for the discretized operator.
pub const CT_SLACK: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Dense,
    ShiftInvert,
}

#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Columns are unit eigenvectors matching `eigenvalues`.
    #[serde(skip)]
    pub eigenvectors: Option<DMatrix<f64>>,
    pub tol: f64,
    pub method: SolverMethod,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn distance_to(&self, e: f64) -> f64 {
        self.eigenvalues.iter().map(|l| (l - e).abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn below(&self, e: f64) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().copied().take_while(move |&l| l <= e)
    }
}

/// Full eigendecomposition, computed once per operator.
pub fn dense_eigen(op: &FiniteVolumeOperator) -> Result<Arc<Spectrum>> {
    if let Some(s) = op.eigen_cell().get() {
        return Ok(s.clone());
    }
    if op.dim() > DENSE_LIMIT {
        return Err(Error::Budget(format!("dimension {} above the dense limit {DENSE_LIMIT}", op.dim())));
    }
    let eig = SymmetricEigen::new(op.matrix().to_dense());
    let mut order: Vec<usize> = (0..op.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(op.dim(), op.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
    let s = Arc::new(Spectrum {
        eigenvalues,
        eigenvectors: Some(vectors),
        tol: SOLVER_TOL,
        method: SolverMethod::Dense,
    });
    Ok(op.eigen_cell().get_or_init(|| s).clone())
}

fn uses_eigen(op: &FiniteVolumeOperator) -> bool {
    op.eigen_cell().get().is_some() || op.dim() <= AUTO_EIGEN_LIMIT
}

/// Eigenvalues in the closed window `[lo, hi]`, or all of them.
pub fn spectrum(op: &FiniteVolumeOperator, window: Option<(f64, f64)>) -> Result<Spectrum> {
    if op.dim() <= DENSE_LIMIT {
        let full = dense_eigen(op)?;
        let Some((lo, hi)) = window else {
            return Ok((*full).clone());
        };
        let keep: Vec<usize> = (0..full.len()).filter(|&i| full.eigenvalues[i] >= lo && full.eigenvalues[i] <= hi).collect();
        let vectors = full.eigenvectors.as_ref().map(|v| v.select_columns(keep.iter()));
        return Ok(Spectrum {
            eigenvalues: keep.iter().map(|&i| full.eigenvalues[i]).collect(),
            eigenvectors: vectors,
            tol: full.tol,
            method: SolverMethod::Dense,
        });
    }
    match window {
        Some((lo, hi)) => spectrum_iterative(op, lo, hi),
        None => Err(Error::Budget(format!("full spectrum of dimension {} needs a window", op.dim()))),
    }
}

/// Eigenpairs in `[lo, hi]` by shift-invert Lanczos about the midpoint, with
/// the count fixed beforehand by inertia.
pub fn spectrum_iterative(op: &FiniteVolumeOperator, lo: f64, hi: f64) -> Result<Spectrum> {
    if !(lo <= hi) {
        return Err(invalid("empty window"));
    }
    let m = op.matrix();
    let b = op.band();
    let slack = 1e-12 * op.norm_bound().max(1.0);
    let count = banded::count_below(m, b, hi + slack) - banded::count_below(m, b, lo - slack);
    let empty = Spectrum { eigenvalues: Vec::new(), eigenvectors: None, tol: SOLVER_TOL, method: SolverMethod::ShiftInvert };
    if count == 0 {
        return Ok(empty);
    }
    if count > 2000 {
        return Err(Error::Budget(format!("{count} eigenvalues in window")));
    }
    let mut sigma = 0.5 * (lo + hi);
    let mut pairs = None;
    for attempt in 0..4 {
        match lanczos::nearest_eigenpairs(m, b, sigma, count, SOLVER_TOL) {
            Ok(p) => {
                pairs = Some(p);
                break;
            }
            Err(Error::Resonant { .. }) => sigma += (hi - lo).max(1e-6) * 1e-3 * (attempt + 1) as f64,
            Err(e) => return Err(e),
        }
    }
    let mut pairs = pairs.ok_or_else(|| Error::NoConvergence("shift coincides with eigenvalues".into()))?;
    pairs.retain(|(l, _)| *l >= lo - slack && *l <= hi + slack);
    if pairs.len() != count {
        return Err(Error::NoConvergence(format!("found {} of {count} eigenvalues in window", pairs.len())));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let vectors = DMatrix::from_fn(op.dim(), count, |r, c| pairs[c].1[r]);
    Ok(Spectrum {
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        eigenvectors: Some(vectors),
        ..empty
    })
}

fn gershgorin_lower(op: &FiniteVolumeOperator) -> f64 {
    let m = op.matrix();
    (0..m.dim)
        .map(|i| m.row(i).map(|(j, v)| if i == j { v } else { -v.abs() }).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

pub fn lowest_eigenvalue(op: &FiniteVolumeOperator) -> Result<f64> {
    if uses_eigen(op) {
        return Ok(dense_eigen(op)?.eigenvalues[0]);
    }
    let sigma = gershgorin_lower(op) - 1.0;
    let pairs = lanczos::nearest_eigenpairs(op.matrix(), op.band(), sigma, 1, SOLVER_TOL)?;
    let lambda = pairs[0].0;
    let margin = 1e-8 * op.norm_bound().max(1.0);
    if banded::count_below(op.matrix(), op.band(), lambda - margin) != 0 {
        return Err(Error::NoConvergence("Lanczos missed the ground state".into()));
    }
    Ok(lambda)
}

pub fn distance_to_spectrum(op: &FiniteVolumeOperator, e: f64) -> Result<f64> {
    if uses_eigen(op) {
        return Ok(dense_eigen(op)?.distance_to(e));
    }
    match lanczos::nearest_eigenpairs(op.matrix(), op.band(), e, 1, SOLVER_TOL) {
        Ok(p) => Ok((p[0].0 - e).abs()),
        Err(Error::Resonant { .. }) => Ok(0.0),
        Err(err) => Err(err),
    }
}

/// `#{λ ≤ e}`.
pub fn count_at_most(op: &FiniteVolumeOperator, e: f64) -> usize {
    if let Some(s) = op.eigen_cell().get() {
        return s.eigenvalues.partition_point(|&l| l <= e);
    }
    let slack = 1e-12 * op.norm_bound().max(1.0);
    banded::count_below(op.matrix(), op.band(), e + slack)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolventMethod {
    Eigen,
    BandedSolve,
}

/// Entries of `(H − E)^{-1}` among a fixed set of grid nodes.
#[derive(Clone, Debug)]
pub struct Resolvent {
    energy: f64,
    nodes: Vec<usize>,
    g: DMatrix<f64>,
    distance: Option<f64>,
    method: ResolventMethod,
}

impl Resolvent {
    /// Fails with [`Error::Resonant`] when `E` is within the resonance guard
    /// of the spectrum.
    pub fn new(op: &FiniteVolumeOperator, energy: f64, cells: &[&[usize]]) -> Result<Self> {
        let mut nodes: Vec<usize> = cells.iter().flat_map(|c| c.iter().copied()).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let guard = RESONANCE_GUARD * op.norm_bound().max(1.0);
        if uses_eigen(op) {
            let s = dense_eigen(op)?;
            let distance = s.distance_to(energy);
            if distance < guard {
                return Err(Error::Resonant { energy, distance });
            }
            let v = s.eigenvectors.as_ref().expect("dense eigenvectors");
            let k = nodes.len();
            let mut w = DMatrix::zeros(k, op.dim());
            let mut wd = DMatrix::zeros(k, op.dim());
            for (r, &i) in nodes.iter().enumerate() {
                for c in 0..op.dim() {
                    w[(r, c)] = v[(i, c)];
                    wd[(r, c)] = v[(i, c)] / (s.eigenvalues[c] - energy);
                }
            }
            let g = &wd * w.transpose();
            return Ok(Self { energy, nodes, g, distance: Some(distance), method: ResolventMethod::Eigen });
        }
        let (m, b) = (op.matrix(), op.band());
        if banded::count_below(m, b, energy + guard) != banded::count_below(m, b, energy - guard) {
            return Err(Error::Resonant { energy, distance: guard });
        }
        let lu = banded::BandLu::factor(m, b, energy)?;
        let columns: Vec<Vec<f64>> = nodes
            .par_iter()
            .map(|&c| {
                let mut e = vec![0.0; op.dim()];
                e[c] = 1.0;
                lu.solve_in_place(&mut e);
                nodes.iter().map(|&r| e[r]).collect()
            })
            .collect();
        let k = nodes.len();
        let g = DMatrix::from_fn(k, k, |r, c| columns[c][r]);
        Ok(Self { energy, nodes, g, distance: None, method: ResolventMethod::BandedSolve })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn method(&self) -> ResolventMethod {
        self.method
    }

    /// Exact distance from `E` to the spectrum when the eigenvalues were used.
    pub fn distance(&self) -> Option<f64> {
        self.distance
    }

    fn positions(&self, set: &[usize]) -> Vec<usize> {
        set.iter()
            .map(|i| self.nodes.binary_search(i).expect("node registered with the resolvent"))
            .collect()
    }

    /// `‖χ_rows R χ_cols‖` as the largest singular value of the block.
    pub fn block_norm(&self, rows: &[usize], cols: &[usize]) -> f64 {
        if rows.is_empty() || cols.is_empty() {
            return 0.0;
        }
        let (pr, pc) = (self.positions(rows), self.positions(cols));
        let block = DMatrix::from_fn(pr.len(), pc.len(), |r, c| self.g[(pr[r], pc[c])]);
        if block.len() == 1 {
            return block[(0, 0)].abs();
        }
        block.singular_values().iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockNormReport {
    pub energy: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub separation: f64,
    pub value: f64,
    pub method: &'static str,
    pub tol: f64,
}

/// `‖χ_b R(E) χ_a‖` over the unit cells around `a` and `b`.
pub fn resolvent_block_norm(op: &FiniteVolumeOperator, e: f64, a: &[f64], b: &[f64]) -> Result<BlockNormReport> {
    let (ca, cb) = (op.unit_cell(a), op.unit_cell(b));
    let r = Resolvent::new(op, e, &[&ca, &cb])?;
    Ok(BlockNormReport {
        energy: e,
        a: a.to_vec(),
        b: b.to_vec(),
        separation: sup_dist(a, b),
        value: r.block_norm(&cb, &ca),
        method: "svd",
        tol: SOLVER_TOL,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CountReport {
    pub energy: f64,
    pub count: usize,
    pub side: f64,
    pub axes: usize,
    /// `E^{nd/2} ℓ^{nd}`.
    pub weyl_scale: f64,
    /// `count / weyl_scale`, the fitted constant.
    pub ratio: f64,
}

pub fn counting_check(op: &FiniteVolumeOperator, e: f64) -> CountReport {
    let count = count_at_most(op, e);
    let axes = op.rect().n() * op.rect().d();
    let side = op.rect().min_side();
    let weyl_scale = if e > 0.0 { e.powf(axes as f64 / 2.0) * side.powi(axes as i32) } else { 0.0 };
    let ratio = if weyl_scale > 0.0 { count as f64 / weyl_scale } else { 0.0 };
    CountReport { energy: e, count, side, axes, weyl_scale, ratio }
}

#[derive(Clone, Debug, Serialize)]
pub struct CtEntry {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub separation: f64,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CombesThomasReport {
    pub energy: f64,
    pub inf_spectrum: f64,
    pub slack: f64,
    pub entries: Vec<CtEntry>,
    /// Pairs closer than `L/100`, not tested.
    pub skipped: usize,
    pub all_pass: bool,
}

/// `(4/3)(inf σ − E)^{-1} exp(−√(inf σ − E)·r/3)`.
pub fn combes_thomas_bound(gap: f64, separation: f64) -> f64 {
    4.0 / 3.0 / gap * (-(gap.sqrt()) * separation / 3.0).exp()
}

pub fn combes_thomas_check(op: &FiniteVolumeOperator, e: f64, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<CombesThomasReport> {
    let inf = lowest_eigenvalue(op)?;
    if e >= inf {
        return Err(Error::Precondition(format!("energy {e} is not below inf σ = {inf}")));
    }
    let gap = inf - e;
    let min_sep = op.rect().min_side() / 100.0;
    let tested: Vec<&(Vec<f64>, Vec<f64>)> = pairs.iter().filter(|(a, b)| sup_dist(a, b) >= min_sep).collect();
    let cells: Vec<(Vec<usize>, Vec<usize>)> = tested.iter().map(|(a, b)| (op.unit_cell(a), op.unit_cell(b))).collect();
    let all: Vec<&[usize]> = cells.iter().flat_map(|(x, y)| [x.as_slice(), y.as_slice()]).collect();
    let r = Resolvent::new(op, e, &all)?;
    let entries: Vec<CtEntry> = tested
        .iter()
        .zip(&cells)
        .map(|((a, b), (ca, cb))| {
            let separation = sup_dist(a, b);
            let value = r.block_norm(cb, ca);
            let bound = CT_SLACK * combes_thomas_bound(gap, separation);
            CtEntry { a: a.clone(), b: b.clone(), separation, value, bound, pass: value <= bound }
        })
        .collect();
    Ok(CombesThomasReport {
        energy: e,
        inf_spectrum: inf,
        slack: CT_SLACK,
        all_pass: entries.iter().all(|x| x.pass),
        skipped: pairs.len() - tested.len(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{sample_disorder, AmplitudeDistribution, DisorderField, SiteBox};
    use crate::geometry::{Configuration, NRectangle};
    use crate::operator::{assemble, CsrMatrix, ModelParams};
    use std::f64::consts::PI;

    fn cube(c: &[f64], side: f64) -> NRectangle {
        NRectangle::cube(Configuration::new(1, c.to_vec()).unwrap(), side).unwrap()
    }

    fn free(r: &NRectangle, mesh: f64) -> FiniteVolumeOperator {
        let region = SiteBox::covering(&[r]).unwrap();
        let f = DisorderField::constant(&region, 0.0, &AmplitudeDistribution::default()).unwrap();
        assemble(r, &f, &ModelParams { n: r.n(), mesh, ..Default::default() }).unwrap()
    }

    fn disordered(r: &NRectangle, mesh: f64, seed: u64) -> FiniteVolumeOperator {
        let region = SiteBox::covering(&[r]).unwrap();
        let f = sample_disorder(&region, &AmplitudeDistribution::default(), seed).unwrap();
        assemble(r, &f, &ModelParams { n: r.n(), mesh, ..Default::default() }).unwrap()
    }

    #[test]
    fn two_point_spectrum() {
        let op = free(&cube(&[0.0], 3.0), 1.0);
        let s = spectrum(&op, None).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-12 && (s.eigenvalues[1] - 3.0).abs() < 1e-12);
        assert!(spectrum(&op, Some((-5.0, 0.5))).unwrap().is_empty());
        assert_eq!(spectrum(&op, Some((2.0, 5.0))).unwrap().eigenvalues.len(), 1);
    }

    #[test]
    fn diagonal_operator() {
        let op = free(&cube(&[0.0], 3.0), 1.0);
        let diag = op.with_matrix(CsrMatrix::from_dense(&DMatrix::from_diagonal(&nalgebra::dvector![5.0, 2.0]))).unwrap();
        assert_eq!(spectrum(&diag, None).unwrap().eigenvalues, vec![2.0, 5.0]);
        let r = Resolvent::new(&diag, 0.0, &[&[0, 1]]).unwrap();
        assert!((r.block_norm(&[0, 1], &[0, 1]) - 0.5).abs() < 1e-15);
        assert!(matches!(Resolvent::new(&diag, 2.0, &[&[0]]), Err(Error::Resonant { .. })));
    }

    #[test]
    fn residuals_within_tolerance() {
        let op = disordered(&cube(&[0.0], 8.0), 0.25, 4);
        let s = spectrum(&op, None).unwrap();
        let v = s.eigenvectors.as_ref().unwrap();
        let h = op.matrix().to_dense();
        for (k, &l) in s.eigenvalues.iter().enumerate() {
            let x = v.column(k);
            assert!((&h * x - x * l).norm() <= s.tol * op.norm_bound());
        }
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.eigenvalues[0] >= 0.0);
    }

    #[test]
    fn iterative_matches_dense() {
        let r = NRectangle::new(Configuration::new(1, vec![0.0, 9.0]).unwrap(), vec![7.0, 6.5]).unwrap();
        let op = disordered(&r, 0.25, 11);
        assert!(op.dim() > AUTO_EIGEN_LIMIT);
        let it = spectrum_iterative(&op, 3.0, 4.0).unwrap();
        let low = lowest_eigenvalue(&op).unwrap();
        let near = distance_to_spectrum(&op, 3.3).unwrap();
        let count = count_at_most(&op, 3.5);
        let dense = dense_eigen(&op).unwrap();
        let expect: Vec<f64> = dense.eigenvalues.iter().copied().filter(|l| (3.0..=4.0).contains(l)).collect();
        assert_eq!(it.eigenvalues.len(), expect.len());
        for (a, b) in it.eigenvalues.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((low - dense.eigenvalues[0]).abs() < 1e-8);
        assert!((near - dense.distance_to(3.3)).abs() < 1e-8);
        assert_eq!(count, dense.eigenvalues.partition_point(|&l| l <= 3.5));
    }

    #[test]
    fn banded_and_eigen_resolvents_agree() {
        let r = NRectangle::new(Configuration::new(1, vec![0.0, 9.0]).unwrap(), vec![7.0, 6.5]).unwrap();
        let a = disordered(&r, 0.25, 2);
        let cells = [a.unit_cell(&[-1.0, 8.0]), a.unit_cell(&[2.0, 10.5])];
        let banded = Resolvent::new(&a, 1.7, &[&cells[0], &cells[1]]).unwrap();
        assert_eq!(banded.method(), ResolventMethod::BandedSolve);
        dense_eigen(&a).unwrap();
        let eigen = Resolvent::new(&a, 1.7, &[&cells[0], &cells[1]]).unwrap();
        assert_eq!(eigen.method(), ResolventMethod::Eigen);
        let (x, y) = (banded.block_norm(&cells[1], &cells[0]), eigen.block_norm(&cells[1], &cells[0]));
        assert!((x - y).abs() <= 1e-9 * x.max(1.0));
    }

    #[test]
    fn block_norms_below_inverse_distance() {
        for seed in 0..5 {
            let op = disordered(&cube(&[0.5], 7.0), 0.25, seed);
            let s = dense_eigen(&op).unwrap();
            for e in [-0.3, 1.1, 4.7] {
                let r = resolvent_block_norm(&op, e, &[-2.0], &[1.25]).unwrap();
                assert!(r.value <= 1.0 / s.distance_to(e) * (1.0 + 1e-10));
            }
        }
    }

    #[test]
    fn counting_matches_closed_form() {
        let op = free(&cube(&[0.0], 10.0), 0.25);
        let m = op.dim();
        let h: f64 = 0.25;
        for e in [0.0, 0.5, 3.0, 12.7, 40.0] {
            let exact = (1..=m).filter(|&k| 2.0 * (1.0 - (k as f64 * PI / (m + 1) as f64).cos()) / (h * h) <= e).count();
            assert_eq!(counting_check(&op, e).count, exact);
        }
        assert_eq!(counting_check(&op, 0.0).count, 0);
        let mut last = 0;
        for k in 0..50 {
            let c = counting_check(&op, k as f64).count;
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn weyl_scaling_in_volume() {
        let e = 4.0;
        let small = counting_check(&free(&cube(&[0.0], 20.0), 0.25), e).count as f64;
        let large = counting_check(&free(&cube(&[0.0], 40.0), 0.25), e).count as f64;
        assert!((large / small - 2.0).abs() <= 0.5);
    }

    #[test]
    fn combes_thomas_on_free_operator() {
        let op = free(&cube(&[0.0], 12.0), 0.25);
        let inf = lowest_eigenvalue(&op).unwrap();
        let pts: Vec<f64> = (-5..=5).map(|k| k as f64).collect();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> =
            pts.iter().flat_map(|&a| pts.iter().map(move |&b| (vec![a], vec![b]))).collect();
        for e in [inf - 0.5, inf - 1.0, -2.0, -5.0] {
            let rep = combes_thomas_check(&op, e, &pairs).unwrap();
            assert!(rep.all_pass, "{:?}", rep.entries.iter().find(|x| !x.pass));
            assert_eq!(rep.skipped, 11);
        }
        assert!(matches!(combes_thomas_check(&op, inf + 0.1, &pairs), Err(Error::Precondition(_))));
        // ‖a−b‖ = L/4 example.
        let r = resolvent_block_norm(&op, inf - 1.0, &[-1.5], &[1.5]).unwrap();
        assert!(r.value <= CT_SLACK * combes_thomas_bound(1.0, 3.0));
    }
}
