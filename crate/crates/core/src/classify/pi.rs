//! Classification of partially interactive boxes through their two factor
//! boxes at shifted energies.

use super::{resonance_verdict, BlockTable, ResonanceMode, Verdict, VerdictKind, Witness};
use crate::error::{Error, Result};
use crate::geometry::{interaction_class, is_l_distant, suitable_cover, Configuration, NRectangle};
use crate::operator::{assemble_shared, kronecker_factors, FiniteVolumeOperator};
use crate::spectral::{dense_eigen, spectrum};
use serde::{Deserialize, Serialize};

/// `Left` is the factor on the split `J`, `Right` the one on its complement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorSide {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CombinationMode {
    /// Factors `θ`-suitable; the box should be `θ/2`-suitable.
    Suitable { theta: f64 },
    /// Factors `m`-regular; the box should be `(m − 100(nd+1)log(2ℓ)/ℓ)`-regular.
    Regular { m: f64 },
    /// Factors `ζ`-SES; the box should be `ζ_out`-SES for `ζ_out < ζ`.
    Ses { zeta: f64, zeta_out: f64 },
}

impl CombinationMode {
    fn apply(&self, table: &BlockTable) -> Verdict {
        match *self {
            Self::Suitable { theta } => table.suitable(theta),
            Self::Regular { m } => table.regular(m),
            Self::Ses { zeta, .. } => table.ses(zeta),
        }
    }

    fn degraded(&self, table: &BlockTable, n: usize, d: usize) -> Verdict {
        let l = table.side;
        match *self {
            Self::Suitable { theta } => table.suitable(theta / 2.0),
            Self::Regular { m } => table.regular(m - 100.0 * (n * d + 1) as f64 * (2.0 * l).ln() / l),
            Self::Ses { zeta_out, .. } => table.ses(zeta_out),
        }
    }
}

pub(crate) struct Factors {
    pub split: Vec<usize>,
    pub left: FiniteVolumeOperator,
    pub right: FiniteVolumeOperator,
}

impl Factors {
    pub(crate) fn of(op: &FiniteVolumeOperator) -> Result<Self> {
        let class = interaction_class(op.rect(), op.params().interaction.range);
        let split = class.split().ok_or(Error::NotPartiallyInteractive)?.to_vec();
        let (left, right) = kronecker_factors(op, &split)?;
        Ok(Self { split, left, right })
    }

    /// The factor on `side` and the opposite factor, whose eigenvalues shift
    /// the energy.
    fn pick(&self, side: FactorSide) -> (&FiniteVolumeOperator, &FiniteVolumeOperator) {
        match side {
            FactorSide::Left => (&self.left, &self.right),
            FactorSide::Right => (&self.right, &self.left),
        }
    }
}

/// Eigenvalues of `op` at most `cap`.
pub(crate) fn truncated_spectrum(op: &FiniteVolumeOperator, cap: f64) -> Result<Vec<f64>> {
    let floor = -op.norm_bound() - 1.0;
    if cap < floor {
        return Ok(Vec::new());
    }
    Ok(spectrum(op, Some((floor, cap)))?.eigenvalues)
}

#[derive(Clone, Debug, Serialize)]
pub struct PiCombinationReport {
    pub energy: f64,
    pub split: Vec<usize>,
    pub side: f64,
    pub mode: CombinationMode,
    /// Eigenvalues of the right factor used to shift the left one, and vice versa.
    pub left_shifts: Vec<f64>,
    pub right_shifts: Vec<f64>,
    /// Shifts at which a factor box fails the mode's goodness.
    pub left_failures: Vec<f64>,
    pub right_failures: Vec<f64>,
    pub hypothesis: bool,
    pub conclusion: Verdict,
    pub implication_holds: bool,
    /// Lemma parameter ranges that this instance falls outside of.
    pub notes: Vec<String>,
}

/// Goodness of both factors at every shifted energy `E − μ`, with `μ` in
/// the other factor's spectrum up to `2E^{(n)}`, against goodness of the
/// whole box at the degraded parameter.
pub fn classify_pi_combination(
    op: &FiniteVolumeOperator,
    e: f64,
    mode: CombinationMode,
    e_n: f64,
) -> Result<PiCombinationReport> {
    let f = Factors::of(op)?;
    if e > e_n {
        return Err(Error::Precondition(format!("energy {e} above E^(n) = {e_n}")));
    }
    let cap = 2.0 * e_n;
    let left_shifts = truncated_spectrum(&f.right, cap)?;
    let right_shifts = truncated_spectrum(&f.left, cap)?;
    let failures = |factor: &FiniteVolumeOperator, shifts: &[f64]| -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for &mu in shifts {
            if !mode.apply(&BlockTable::new(factor, e - mu)?).outcome {
                out.push(mu);
            }
        }
        Ok(out)
    };
    let left_failures = failures(&f.left, &left_shifts)?;
    let right_failures = failures(&f.right, &right_shifts)?;
    let hypothesis = left_failures.is_empty() && right_failures.is_empty();
    let (n, d) = (op.rect().n(), op.rect().d());
    let conclusion = mode.degraded(&BlockTable::new(op, e)?, n, d);
    let mut notes = Vec::new();
    match mode {
        CombinationMode::Suitable { theta } if theta <= (2 * n * d + 2) as f64 => {
            notes.push(format!("θ = {theta} is not above 2nd+2"))
        }
        CombinationMode::Regular { m } if m > e_n.max(0.0).sqrt() / 6.0 => {
            notes.push(format!("m = {m} exceeds √E^(n)/6"))
        }
        CombinationMode::Ses { zeta, zeta_out } if !(0.0 < zeta_out && zeta_out < zeta && zeta < 1.0) => {
            notes.push("needs 0 < ζ_out < ζ < 1".into())
        }
        _ => {}
    }
    Ok(PiCombinationReport {
        energy: e,
        split: f.split,
        side: op.rect().sides()[0],
        mode,
        left_shifts,
        right_shifts,
        left_failures,
        right_failures,
        hypothesis,
        implication_holds: !hypothesis || conclusion.outcome,
        conclusion,
        notes,
    })
}

/// Grid-centered sub-boxes `Λ_t(u) ⊆ Λ` with `t = (2k_jα+1)ℓ` and
/// `u ∈ x + αℓZ^{nd}`, for the constants of the suitable `ℓ`-cover with
/// multiplicity `j`.
pub fn sub_boxes(rect: &NRectangle, ell: f64, multiplicity: usize) -> Result<Vec<NRectangle>> {
    let mut cover = suitable_cover(rect, ell)?;
    cover.set_multiplicity(multiplicity);
    let l = rect.sides()[0];
    let pitch = cover.pitch();
    let k = cover.alpha_index();
    let mut sides = cover.enclosing_sides();
    sides.sort_by(f64::total_cmp);
    sides.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let x = rect.center().coords();
    let mut out = Vec::new();
    for t in sides.into_iter().filter(|&t| t <= l + 1e-9) {
        let reach: Vec<i64> = (0..=2 * k).filter(|&i| i as f64 * pitch + 0.5 * t <= 0.5 * l + 1e-9).collect();
        let max = *reach.last().unwrap_or(&0);
        let mut centers = vec![Vec::new()];
        for q in 0..x.len() {
            centers = centers
                .into_iter()
                .flat_map(|c: Vec<f64>| {
                    (-max..=max).map(move |i| {
                        let mut c = c.clone();
                        c.push(x[q] + i as f64 * pitch);
                        c
                    })
                })
                .collect();
        }
        for c in centers {
            out.push(NRectangle::cube(Configuration::new(rect.d(), c)?, t)?);
        }
    }
    Ok(out)
}

fn kind_for(side: FactorSide, beta: f64) -> VerdictKind {
    match side {
        FactorSide::Left => VerdictKind::Lnr { beta },
        FactorSide::Right => VerdictKind::Rnr { beta },
    }
}

fn side_nonresonance(f: &Factors, side: FactorSide, e: f64, ell: f64, beta: f64, e_n: f64) -> Result<Verdict> {
    let (factor, other) = f.pick(side);
    let shifts = truncated_spectrum(other, 2.0 * e_n)?;
    let mut margin = f64::INFINITY;
    let mut witnesses = Vec::new();
    let mut worst: Option<Witness> = None;
    for sub in sub_boxes(factor.rect(), ell, 1)? {
        let sub_op = assemble_shared(&sub, factor.field().clone(), factor.params())?;
        let spec = dense_eigen(&sub_op)?;
        let t = sub.sides()[0];
        for &mu in &shifts {
            let v = resonance_verdict(spec.distance_to(e - mu), e - mu, t, ResonanceMode::Beta { beta });
            let Witness::Spectrum { distance, bound, .. } = v.witnesses[0] else { unreachable!() };
            let w = Witness::SubBox {
                side,
                center: sub.center().coords().to_vec(),
                length: t,
                shift: mu,
                distance,
                bound,
            };
            if v.outcome {
                witnesses.push(w.clone());
            }
            if -v.margin < margin {
                margin = -v.margin;
                worst = Some(w);
            }
        }
    }
    let outcome = witnesses.is_empty();
    if outcome {
        witnesses.extend(worst);
    }
    Ok(Verdict { kind: kind_for(side, beta), outcome, margin, witnesses })
}

/// Every grid sub-box of one factor is `(E − μ, β)`-nonresonant for each
/// `μ` in the other factor's spectrum up to `2E^{(N)}`.
pub fn classify_lnr(
    op: &FiniteVolumeOperator,
    e: f64,
    ell: f64,
    beta: f64,
    e_n: f64,
    side: FactorSide,
) -> Result<Verdict> {
    side_nonresonance(&Factors::of(op)?, side, e, ell, beta, e_n)
}

/// `β`-nonresonant, left nonresonant and right nonresonant.
pub fn classify_hnr(op: &FiniteVolumeOperator, e: f64, ell: f64, beta: f64, e_n: f64) -> Result<Verdict> {
    let f = Factors::of(op)?;
    let own = resonance_verdict(
        dense_or_banded_distance(op, e)?,
        e,
        op.rect().min_side(),
        ResonanceMode::Beta { beta },
    );
    let left = side_nonresonance(&f, FactorSide::Left, e, ell, beta, e_n)?;
    let right = side_nonresonance(&f, FactorSide::Right, e, ell, beta, e_n)?;
    let outcome = !own.outcome && left.outcome && right.outcome;
    let mut witnesses = Vec::new();
    for (ok, v) in [(!own.outcome, own.clone()), (left.outcome, left.clone()), (right.outcome, right.clone())] {
        if outcome || !ok {
            witnesses.extend(v.witnesses);
        }
    }
    Ok(Verdict {
        kind: VerdictKind::Hnr { beta },
        outcome,
        margin: (-own.margin).min(left.margin).min(right.margin),
        witnesses,
    })
}

fn dense_or_banded_distance(op: &FiniteVolumeOperator, e: f64) -> Result<f64> {
    crate::spectral::distance_to_spectrum(op, e)
}

/// Indices of a largest subset of `points` that are pairwise `ℓ`-distant.
pub fn max_distant_set(points: &[Configuration], ell: f64) -> Result<Vec<usize>> {
    let n = points.len();
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let far = is_l_distant(&points[i], &points[j], ell)?;
            adj[i][j] = far;
            adj[j][i] = far;
        }
    }
    let mut best = Vec::new();
    let mut current = Vec::new();
    expand(&adj, &mut current, (0..n).collect(), Vec::new(), &mut best);
    Ok(best)
}

fn expand(adj: &[Vec<bool>], r: &mut Vec<usize>, p: Vec<usize>, x: Vec<usize>, best: &mut Vec<usize>) {
    if p.is_empty() && x.is_empty() {
        if r.len() > best.len() {
            *best = r.clone();
        }
        return;
    }
    if r.len() + p.len() <= best.len() {
        return;
    }
    let pivot = p.iter().chain(&x).copied().max_by_key(|&u| p.iter().filter(|&&v| adj[u][v]).count());
    let pivot = pivot.expect("nonempty candidate set");
    let mut p = p;
    let mut x = x;
    let candidates: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
    for v in candidates {
        r.push(v);
        let np = p.iter().copied().filter(|&u| adj[v][u]).collect();
        let nx = x.iter().copied().filter(|&u| adj[v][u]).collect();
        expand(adj, r, np, nx, best);
        r.pop();
        p.retain(|&u| u != v);
        x.push(v);
    }
}

fn side_regular(f: &Factors, side: FactorSide, e: f64, m: f64, ell: f64, e_n: f64) -> Result<Verdict> {
    let (factor, other) = f.pick(side);
    let shifts = truncated_spectrum(other, 2.0 * e_n)?;
    let cover = suitable_cover(factor.rect(), ell)?;
    let cells: Vec<FiniteVolumeOperator> = cover
        .centers()
        .iter()
        .map(|c| assemble_shared(&cover.cell(c), factor.field().clone(), factor.params()))
        .collect::<Result<_>>()?;
    let mut largest = 0usize;
    let mut witnesses = Vec::new();
    for &mu in &shifts {
        let mut bad = Vec::new();
        for cell in &cells {
            if !BlockTable::new(cell, e - mu)?.regular(m).outcome {
                bad.push(cell.rect().center().clone());
            }
        }
        let set = max_distant_set(&bad, ell)?;
        largest = largest.max(set.len());
        if set.len() >= 2 {
            witnesses.push(Witness::Cells {
                side,
                shift: mu,
                a: bad[set[0]].coords().to_vec(),
                b: bad[set[1]].coords().to_vec(),
            });
        }
    }
    let kind = match side {
        FactorSide::Left => VerdictKind::Lregular { m },
        FactorSide::Right => VerdictKind::Rregular { m },
    };
    Ok(Verdict { kind, outcome: witnesses.is_empty(), margin: 1.0 - largest as f64, witnesses })
}

/// No two `ℓ`-distant `(m, E − μ)`-nonregular cells in the suitable cover of
/// one factor, for `μ` in the other factor's spectrum up to `2E^{(N)}`.
pub fn classify_side_regular(
    op: &FiniteVolumeOperator,
    e: f64,
    m: f64,
    ell: f64,
    e_n: f64,
    side: FactorSide,
) -> Result<Verdict> {
    side_regular(&Factors::of(op)?, side, e, m, ell, e_n)
}

pub fn classify_preregular(op: &FiniteVolumeOperator, e: f64, m: f64, ell: f64, e_n: f64) -> Result<Verdict> {
    let f = Factors::of(op)?;
    let left = side_regular(&f, FactorSide::Left, e, m, ell, e_n)?;
    let right = side_regular(&f, FactorSide::Right, e, m, ell, e_n)?;
    let mut witnesses = left.witnesses;
    witnesses.extend(right.witnesses);
    Ok(Verdict {
        kind: VerdictKind::Preregular { m },
        outcome: left.outcome && right.outcome,
        margin: left.margin.min(right.margin),
        witnesses,
    })
}
