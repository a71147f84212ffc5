//! Finite-difference discretization of `−Δ + V + U` on an n-particle
//! rectangle with Dirichlet boundary condition.
//!
//! Every flattened axis `q` (particle `q / d`, coordinate `q % d`) carries the
//! interior nodes `lo_q + h·(k+1)`, `k < m_q`, where `m_q = L_q/h − 1`. Nodes
//! are ordered lexicographically with axis 0 most significant.

use crate::disorder::{
    face_potential, interaction_potential, hex_prefix, AmplitudeDistribution, DisorderField, InteractionSpec,
    SingleSiteProfile,
};
use crate::error::{invalid, Error, Result};
use crate::geometry::{complement, Configuration, NRectangle};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Dirichlet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub n: usize,
    #[serde(default)]
    pub profile: SingleSiteProfile,
    #[serde(default)]
    pub distribution: AmplitudeDistribution,
    #[serde(default)]
    pub interaction: InteractionSpec,
    #[serde(default = "default_mesh")]
    pub mesh: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

fn default_mesh() -> f64 {
    0.25
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            d: 1,
            n: 1,
            profile: SingleSiteProfile::default(),
            distribution: AmplitudeDistribution::default(),
            interaction: InteractionSpec::default(),
            mesh: default_mesh(),
            boundary: Boundary::Dirichlet,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(invalid("d and n must be at least 1"));
        }
        if !(self.mesh > 0.0 && self.mesh.is_finite()) {
            return Err(invalid("mesh must be positive"));
        }
        self.profile.validate()?;
        self.distribution.validate()?;
        self.interaction.validate()
    }

    pub fn with_particles(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("params serialize");
        hex_prefix(&Sha256::digest(json.as_bytes()))
    }

    /// Interior node count along a side of length `side`.
    pub fn interior_nodes(&self, side: f64) -> Result<usize> {
        let cells = side / self.mesh;
        let r = cells.round();
        if (cells - r).abs() > 1e-9 * cells.max(1.0) {
            return Err(invalid(format!("mesh {} does not divide side {side}", self.mesh)));
        }
        if r < 3.0 {
            return Err(invalid(format!("mesh {} too coarse for side {side}: need at least 2 interior nodes", self.mesh)));
        }
        Ok(r as usize - 1)
    }

    /// Whether a rectangle side fits the mesh.
    pub fn fits(&self, side: f64) -> bool {
        self.interior_nodes(side).is_ok()
    }
}

/// Symmetric matrix in compressed rows with both triangles stored and
/// columns sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.vals[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.cols[p], self.vals[p]))
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.dim {
            y[i] = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    /// Largest `|i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.dim).flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j))).max().unwrap_or(0)
    }

    /// Max absolute row sum, an upper bound for the spectral norm.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn from_dense(m: &nalgebra::DMatrix<f64>) -> Self {
        let dim = m.nrows();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                if m[(i, j)] != 0.0 {
                    cols.push(j);
                    vals.push(m[(i, j)]);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { dim, row_ptr, cols, vals }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub disorder: String,
    pub params: String,
}

#[derive(Clone, Debug)]
pub struct FiniteVolumeOperator {
    rect: NRectangle,
    params: ModelParams,
    field: Arc<DisorderField>,
    /// Node index offset: position on axis q is `(offset_q + k + 1)·h`.
    offsets: Vec<f64>,
    counts: Vec<usize>,
    strides: Vec<usize>,
    matrix: CsrMatrix,
    provenance: Provenance,
    eigen: OnceLock<Arc<crate::spectral::Spectrum>>,
}

fn axis_offset(lo: f64, h: f64) -> f64 {
    let t = lo / h;
    if (t - t.round()).abs() < 1e-9 {
        t.round()
    } else {
        t
    }
}

/// Assembles the operator on `rect` with disorder `field`.
pub fn assemble(rect: &NRectangle, field: &DisorderField, params: &ModelParams) -> Result<FiniteVolumeOperator> {
    assemble_shared(rect, Arc::new(field.clone()), params)
}

pub fn assemble_shared(
    rect: &NRectangle,
    field: Arc<DisorderField>,
    params: &ModelParams,
) -> Result<FiniteVolumeOperator> {
    params.validate()?;
    if rect.d() != params.d {
        return Err(Error::DimensionMismatch(format!("rectangle in R^{} but model in R^{}", rect.d(), params.d)));
    }
    if field.region().d() != params.d {
        return Err(Error::DimensionMismatch("disorder field dimension".into()));
    }
    let (n, d, h) = (rect.n(), rect.d(), params.mesh);
    let axes = n * d;
    let mut counts = Vec::with_capacity(axes);
    let mut offsets = Vec::with_capacity(axes);
    for q in 0..axes {
        let side = rect.axis_side(q);
        counts.push(params.interior_nodes(side)?);
        offsets.push(axis_offset(rect.center().coords()[q] - 0.5 * side, h));
    }
    let mut strides = vec![1usize; axes];
    for q in (0..axes.saturating_sub(1)).rev() {
        strides[q] = strides[q + 1] * counts[q + 1];
    }
    let dim: usize = counts.iter().product();

    // Per-particle potential tables over that particle's own d-dimensional node grid.
    let mut tables: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let sub = &counts[i * d..(i + 1) * d];
        let size: usize = sub.iter().product();
        let mut table = Vec::with_capacity(size);
        let mut y = vec![0.0; d];
        for lin in 0..size {
            let mut rem = lin;
            for c in (0..d).rev() {
                let k = rem % sub[c];
                rem /= sub[c];
                y[c] = (offsets[i * d + c] + (k + 1) as f64) * h;
            }
            table.push(face_potential(rect, i, &field, &params.profile, &y)?);
        }
        tables.push(table);
    }

    let kinetic = 2.0 * axes as f64 / (h * h);
    let hop = -1.0 / (h * h);
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut cols = Vec::with_capacity(dim * (2 * axes + 1));
    let mut vals = Vec::with_capacity(dim * (2 * axes + 1));
    row_ptr.push(0);
    let mut idx = vec![0usize; axes];
    let mut coords = vec![0.0; axes];
    for row in 0..dim {
        let mut rem = row;
        for q in (0..axes).rev() {
            idx[q] = rem % counts[q];
            rem /= counts[q];
            coords[q] = (offsets[q] + (idx[q] + 1) as f64) * h;
        }
        let mut diag = kinetic;
        for (i, table) in tables.iter().enumerate() {
            let sub = &counts[i * d..(i + 1) * d];
            let mut lin = 0;
            for c in 0..d {
                lin = lin * sub[c] + idx[i * d + c];
            }
            diag += table[lin];
        }
        if n > 1 {
            let x = Configuration::new(d, coords.clone())?;
            diag += interaction_potential(&params.interaction, &x);
        }
        // Neighbours in increasing column order: lower ones from axis 0 down,
        // then the diagonal, then upper ones from the last axis up.
        for q in 0..axes {
            if idx[q] > 0 {
                cols.push(row - strides[q]);
                vals.push(hop);
            }
        }
        cols.push(row);
        vals.push(diag);
        for q in (0..axes).rev() {
            if idx[q] + 1 < counts[q] {
                cols.push(row + strides[q]);
                vals.push(hop);
            }
        }
        row_ptr.push(cols.len());
    }
    let provenance = Provenance { disorder: field.digest(), params: params.digest() };
    Ok(FiniteVolumeOperator {
        rect: rect.clone(),
        params: params.clone(),
        field,
        offsets,
        counts,
        strides,
        matrix: CsrMatrix { dim, row_ptr, cols, vals },
        provenance,
        eigen: OnceLock::new(),
    })
}

impl FiniteVolumeOperator {
    pub fn rect(&self) -> &NRectangle {
        &self.rect
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn field(&self) -> &Arc<DisorderField> {
        &self.field
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    pub fn mesh(&self) -> f64 {
        self.params.mesh
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub(crate) fn eigen_cell(&self) -> &OnceLock<Arc<crate::spectral::Spectrum>> {
        &self.eigen
    }

    /// Same grid with a different symmetric matrix of matching pattern
    /// bandwidth; used for synthetic operators.
    pub fn with_matrix(&self, matrix: CsrMatrix) -> Result<Self> {
        if matrix.dim != self.dim() || !matrix.is_symmetric() || matrix.bandwidth() > self.band() {
            return Err(invalid("replacement matrix must be symmetric with the same size and band"));
        }
        let digest = hex_prefix(&Sha256::digest(dump_matrix(&matrix).as_bytes()));
        Ok(Self {
            matrix,
            provenance: Provenance { disorder: self.provenance.disorder.clone(), params: format!("custom-{digest}") },
            eigen: OnceLock::new(),
            ..self.clone()
        })
    }

    pub fn axis_counts(&self) -> &[usize] {
        &self.counts
    }

    /// Lower bandwidth of the lexicographic ordering.
    pub fn band(&self) -> usize {
        if self.counts.len() > 1 {
            self.strides[0]
        } else {
            1
        }
    }

    pub fn multi_index(&self, mut row: usize) -> Vec<usize> {
        let mut idx = vec![0; self.counts.len()];
        for q in (0..self.counts.len()).rev() {
            idx[q] = row % self.counts[q];
            row /= self.counts[q];
        }
        idx
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn axis_position(&self, q: usize, k: usize) -> f64 {
        (self.offsets[q] + (k + 1) as f64) * self.params.mesh
    }

    pub fn node_position(&self, row: usize) -> Vec<f64> {
        self.multi_index(row).iter().enumerate().map(|(q, &k)| self.axis_position(q, k)).collect()
    }

    /// Nodes `y` with `c_q − s/2 ≤ y_q < c_q + s/2` on every axis.
    pub fn nodes_in_cube(&self, center: &[f64], side: f64) -> Vec<usize> {
        let mut ranges = Vec::with_capacity(self.counts.len());
        for (q, &c) in center.iter().enumerate() {
            let r: Vec<usize> = (0..self.counts[q])
                .filter(|&k| {
                    let y = self.axis_position(q, k);
                    c - 0.5 * side <= y && y < c + 0.5 * side
                })
                .collect();
            if r.is_empty() {
                return Vec::new();
            }
            ranges.push(r);
        }
        let mut out = vec![0usize];
        for (q, r) in ranges.iter().enumerate() {
            out = out.iter().flat_map(|&base| r.iter().map(move |&k| base + k * self.strides[q])).collect();
        }
        out.sort_unstable();
        out
    }

    /// Nodes of the unit cube `χ_a`.
    pub fn unit_cell(&self, a: &[f64]) -> Vec<usize> {
        self.nodes_in_cube(a, 1.0)
    }

    pub fn norm_bound(&self) -> f64 {
        self.matrix.norm_bound()
    }

    /// Sorted `i j value` triplets, one per line.
    pub fn dump(&self) -> String {
        dump_matrix(&self.matrix)
    }
}

fn dump_matrix(m: &CsrMatrix) -> String {
    let mut s = String::with_capacity(m.nnz() * 24);
    for i in 0..m.dim {
        for (j, v) in m.row(i) {
            let _ = writeln!(s, "{i} {j} {v:?}");
        }
    }
    s
}

/// Factor operators of a partially interactive box split into `j` and its
/// complement, checked entrywise against the full operator.
pub fn kronecker_factors(
    op: &FiniteVolumeOperator,
    j: &[usize],
) -> Result<(FiniteVolumeOperator, FiniteVolumeOperator)> {
    let n = op.rect.n();
    if n < 2 || j.is_empty() || j.len() >= n {
        return Err(Error::NotPartiallyInteractive);
    }
    let jc = complement(j, n);
    let fa = assemble_shared(&op.rect.select(j), op.field.clone(), &op.params.with_particles(j.len()))?;
    let fb = assemble_shared(&op.rect.select(&jc), op.field.clone(), &op.params.with_particles(jc.len()))?;
    let d = op.rect.d();
    let axes_of = |set: &[usize]| -> Vec<usize> { set.iter().flat_map(|&i| i * d..(i + 1) * d).collect() };
    let (qa, qb) = (axes_of(j), axes_of(&jc));
    let split = |row: usize| {
        let idx = op.multi_index(row);
        let a: Vec<usize> = qa.iter().map(|&q| idx[q]).collect();
        let b: Vec<usize> = qb.iter().map(|&q| idx[q]).collect();
        (fa.linear_index(&a), fb.linear_index(&b))
    };
    let scale = op.norm_bound().max(1.0);
    let mut nnz = 0usize;
    for row in 0..op.dim() {
        let (ra, rb) = split(row);
        for (col, v) in op.matrix.row(row) {
            let (ca, cb) = split(col);
            let mut expect = 0.0;
            if rb == cb {
                expect += fa.matrix.get(ra, ca);
            }
            if ra == ca {
                expect += fb.matrix.get(rb, cb);
            }
            if (expect - v).abs() > 1e-12 * scale {
                return Err(Error::InconsistentRange(format!(
                    "entry ({row},{col}) is {v} but the Kronecker sum gives {expect}"
                )));
            }
            nnz += 1;
        }
    }
    let kron_nnz = fa.matrix.nnz() * fb.dim() + fa.dim() * fb.matrix.nnz() - fa.dim() * fb.dim();
    if nnz != kron_nnz {
        return Err(Error::InconsistentRange("sparsity patterns differ".into()));
    }
    Ok((fa, fb))
}
