//! Desk-scale checks of the deterministic lemmas behind each induction step:
//! verify the hypotheses on a concrete box, then test the conclusion.

use super::ensemble::BoxSpec;
use crate::classify::{
    classify_hnr, classify_pi_combination, classify_preregular, classify_regular, classify_resonant, classify_ses,
    classify_suitable, energy_stability_check, max_distant_set, sub_boxes, CombinationMode, ResonanceMode, Verdict,
};
use crate::disorder::{sample_disorder, DisorderField, SiteBox};
use crate::error::{Error, Result};
use crate::geometry::{suitable_cover, Configuration, NRectangle};
use crate::operator::{assemble_shared, FiniteVolumeOperator, ModelParams};
use crate::spectral::{distance_to_spectrum, geometric_resolvent_check, RESONANCE_GUARD};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Smallest inner scale, in grid cells `ℓ/h`, at which a conclusion that
/// holds "for ℓ large" is held to account.
pub const ELL_MIN_CELLS: f64 = 24.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LemmaInstance {
    /// `‖χ_y R_outer χ_x‖ ≤ ℓ^{nd} ‖χ_y R_outer χ_a‖ ‖χ_a R_inner χ_x‖`
    /// for some shell point `a`.
    ResIne { inner: BoxSpec, outer: BoxSpec, energy: f64, e_n: f64, x: Vec<f64>, y: Vec<f64> },
    /// Goodness of both factors at shifted energies gives goodness of a
    /// partially interactive box.
    #[serde(rename = "PIsuit")]
    PiSuit { rect: BoxSpec, energy: f64, e_n: f64, mode: CombinationMode },
    /// Few distant bad `ℓ`-cells and nonresonant sub-boxes give
    /// `(m_ℓ − 1/(2ℓ^κ))`-regularity at `L = ℓ^γ`.
    #[serde(rename = "part2prop1a")]
    Part2Prop1a { rect: BoxSpec, ell: f64, energy: f64, m_ell: f64, m0: f64, kappa: f64, gamma: f64, beta: f64, j: usize },
    /// `(m, E₀)`-regular with `‖R(E₀)‖ ≤ e^{L^β}` gives
    /// `(m − 100 log 2/L)`-goodness near `E₀`; `offsets` are in units of `η`.
    #[serde(rename = "part4lem0")]
    Part4Lem0 { rect: BoxSpec, m: f64, beta: f64, e0: f64, offsets: Vec<f64> },
    #[serde(rename = "part1prop1a")]
    Part1Prop1a { rect: BoxSpec, ell: f64, energy: f64, theta: f64, s: f64, j: usize },
    #[serde(rename = "part3prop1a")]
    Part3Prop1a { rect: BoxSpec, ell: f64, energy: f64, zeta0: f64, beta: f64 },
    #[serde(rename = "part2firstthm")]
    Part2FirstThm { rect: BoxSpec, ell: f64, energy: f64, e_n: f64, m_star: f64, kappa: f64, beta: f64 },
}

/// A lemma instance with its model; the disorder is drawn from the seed
/// unless `amplitude` pins every site to one value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSpec {
    pub params: ModelParams,
    #[serde(default)]
    pub amplitude: Option<f64>,
    pub instance: LemmaInstance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaStatus {
    Skipped,
    Holds,
    Violated,
}

#[derive(Clone, Debug, Serialize)]
pub struct Hypothesis {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub kind: String,
    pub status: LemmaStatus,
    pub hypotheses: Vec<Hypothesis>,
    pub conclusion: Option<Verdict>,
    /// Inner scale in grid cells.
    pub cells: f64,
    pub above_min: bool,
    pub notes: Vec<String>,
}

impl LemmaInstance {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ResIne { .. } => "res-ine",
            Self::PiSuit { .. } => "PIsuit",
            Self::Part2Prop1a { .. } => "part2prop1a",
            Self::Part4Lem0 { .. } => "part4lem0",
            Self::Part1Prop1a { .. } => "part1prop1a",
            Self::Part3Prop1a { .. } => "part3prop1a",
            Self::Part2FirstThm { .. } => "part2firstthm",
        }
    }
}

struct Ctx {
    params: ModelParams,
    field: Arc<DisorderField>,
}

impl Ctx {
    fn op(&self, rect: &NRectangle) -> Result<FiniteVolumeOperator> {
        assemble_shared(rect, self.field.clone(), &self.params)
    }
}

struct Draft {
    hypotheses: Vec<Hypothesis>,
    conclusion: Option<Verdict>,
    notes: Vec<String>,
    scale: f64,
    holds: bool,
}

impl Draft {
    fn new(scale: f64) -> Self {
        Self { hypotheses: Vec::new(), conclusion: None, notes: Vec::new(), scale, holds: true }
    }

    fn hyp(&mut self, name: &str, holds: bool, detail: impl Into<String>) -> bool {
        self.hypotheses.push(Hypothesis { name: name.into(), holds, detail: detail.into() });
        holds
    }

    fn met(&self) -> bool {
        self.hypotheses.iter().all(|h| h.holds)
    }

    fn conclude(&mut self, v: Verdict) {
        self.holds = v.outcome;
        self.conclusion = Some(v);
    }
}

pub fn verify_deterministic_lemma(spec: &LemmaSpec, seed: u64) -> Result<LemmaReport> {
    spec.params.validate()?;
    let d = spec.params.d;
    let rects = instance_rects(&spec.instance, d)?;
    let refs: Vec<&NRectangle> = rects.iter().collect();
    let region = SiteBox::covering(&refs)?;
    let field = match spec.amplitude {
        Some(v) => DisorderField::constant(&region, v, &spec.params.distribution)?,
        None => sample_disorder(&region, &spec.params.distribution, seed)?,
    };
    let ctx = Ctx { params: spec.params.clone(), field: Arc::new(field) };
    let draft = match &spec.instance {
        LemmaInstance::ResIne { energy, e_n, x, y, .. } => res_ine(&ctx, &rects[0], &rects[1], *energy, *e_n, x, y)?,
        LemmaInstance::PiSuit { energy, e_n, mode, .. } => pi_suit(&ctx, &rects[0], *energy, *e_n, *mode)?,
        LemmaInstance::Part2Prop1a { ell, energy, m_ell, m0, kappa, gamma, beta, j, .. } => {
            part2prop1a(&ctx, &rects[0], *ell, *energy, *m_ell, *m0, *kappa, *gamma, *beta, *j)?
        }
        LemmaInstance::Part4Lem0 { m, beta, e0, offsets, .. } => part4lem0(&ctx, &rects[0], *m, *beta, *e0, offsets)?,
        LemmaInstance::Part1Prop1a { ell, energy, theta, s, j, .. } => {
            part1prop1a(&ctx, &rects[0], *ell, *energy, *theta, *s, *j)?
        }
        LemmaInstance::Part3Prop1a { ell, energy, zeta0, beta, .. } => {
            part3prop1a(&ctx, &rects[0], *ell, *energy, *zeta0, *beta)?
        }
        LemmaInstance::Part2FirstThm { ell, energy, e_n, m_star, kappa, beta, .. } => {
            part2firstthm(&ctx, &rects[0], *ell, *energy, *e_n, *m_star, *kappa, *beta)?
        }
    };
    let cells = draft.scale / spec.params.mesh;
    let status = if !draft.met() {
        LemmaStatus::Skipped
    } else if draft.holds {
        LemmaStatus::Holds
    } else {
        LemmaStatus::Violated
    };
    Ok(LemmaReport {
        kind: spec.instance.name().into(),
        status,
        hypotheses: draft.hypotheses,
        conclusion: draft.conclusion,
        cells,
        above_min: cells >= ELL_MIN_CELLS - 1e-9,
        notes: draft.notes,
    })
}

fn instance_rects(inst: &LemmaInstance, d: usize) -> Result<Vec<NRectangle>> {
    Ok(match inst {
        LemmaInstance::ResIne { inner, outer, .. } => vec![inner.rect(d)?, outer.rect(d)?],
        LemmaInstance::PiSuit { rect, .. }
        | LemmaInstance::Part2Prop1a { rect, .. }
        | LemmaInstance::Part4Lem0 { rect, .. }
        | LemmaInstance::Part1Prop1a { rect, .. }
        | LemmaInstance::Part3Prop1a { rect, .. }
        | LemmaInstance::Part2FirstThm { rect, .. } => vec![rect.rect(d)?],
    })
}

fn res_ine(
    ctx: &Ctx,
    inner: &NRectangle,
    outer: &NRectangle,
    e: f64,
    e_n: f64,
    x: &[f64],
    y: &[f64],
) -> Result<Draft> {
    let mut dr = Draft::new(inner.sides()[0]);
    dr.hyp("energy below E^(n)", e <= e_n, format!("E = {e}, E^(n) = {e_n}"));
    let (inner_op, outer_op) = (ctx.op(inner)?, ctx.op(outer)?);
    for (name, op) in [("E outside σ(inner)", &inner_op), ("E outside σ(outer)", &outer_op)] {
        let dist = distance_to_spectrum(op, e)?;
        dr.hyp(name, dist > RESONANCE_GUARD * op.norm_bound().max(1.0), format!("distance {dist:.3e}"));
    }
    if !dr.met() {
        return Ok(dr);
    }
    match geometric_resolvent_check(&inner_op, &outer_op, e, x, y) {
        Ok(rep) => {
            dr.hyp("placement of x and y", true, "");
            dr.notes.push(format!("lhs {:.3e}, rhs {:.3e}, ratio {:.3e}", rep.lhs, rep.rhs, rep.ratio));
            dr.holds = rep.holds;
        }
        Err(Error::Precondition(why)) => {
            dr.hyp("placement of x and y", false, why);
        }
        Err(e) => return Err(e),
    }
    Ok(dr)
}

fn pi_suit(ctx: &Ctx, rect: &NRectangle, e: f64, e_n: f64, mode: CombinationMode) -> Result<Draft> {
    let mut dr = Draft::new(rect.sides()[0]);
    if !dr.hyp("energy below E^(n)", e <= e_n, format!("E = {e}, E^(n) = {e_n}")) {
        return Ok(dr);
    }
    let op = ctx.op(rect)?;
    let rep = match classify_pi_combination(&op, e, mode, e_n) {
        Ok(r) => r,
        Err(Error::NotPartiallyInteractive) => {
            dr.hyp("partially interactive", false, "no split with separated particle groups");
            return Ok(dr);
        }
        Err(err) => return Err(err),
    };
    dr.hyp("partially interactive", true, format!("split {:?}", rep.split));
    dr.hyp("parameter range", rep.notes.is_empty(), rep.notes.join("; "));
    dr.hyp(
        "factors good at shifted energies",
        rep.hypothesis,
        format!("{} left and {} right failures", rep.left_failures.len(), rep.right_failures.len()),
    );
    dr.conclude(rep.conclusion);
    Ok(dr)
}

/// Shared hypotheses of the cover lemmas: `L`-box nonresonant, at most `j`
/// pairwise `ℓ`-distant bad cells of the suitable `ℓ`-cover, and every grid
/// sub-box nonresonant.
fn cover_hypotheses(
    dr: &mut Draft,
    ctx: &Ctx,
    rect: &NRectangle,
    ell: f64,
    j: usize,
    e: f64,
    resonance: ResonanceMode,
    bad: impl Fn(&FiniteVolumeOperator) -> Result<bool>,
) -> Result<()> {
    let op = ctx.op(rect)?;
    let res = classify_resonant(&op, e, resonance)?;
    if !dr.hyp("box nonresonant", !res.outcome, format!("margin {:.3}", -res.margin)) {
        return Ok(());
    }
    let cover = suitable_cover(rect, ell)?;
    let mut bad_centers = Vec::new();
    for c in cover.centers() {
        if bad(&ctx.op(&cover.cell(&c))?)? {
            bad_centers.push(Configuration::new(rect.d(), c)?);
        }
    }
    let far = max_distant_set(&bad_centers, ell)?.len();
    let ok = dr.hyp(
        "few distant bad cells",
        far <= j,
        format!("{} bad cells, {far} pairwise distant, allowed {j}", bad_centers.len()),
    );
    if !ok {
        return Ok(());
    }
    let subs = sub_boxes(rect, ell, j.max(1))?;
    let mut resonant = 0;
    for s in &subs {
        if classify_resonant(&ctx.op(s)?, e, resonance)?.outcome {
            resonant += 1;
        }
    }
    dr.hyp("sub-boxes nonresonant", resonant == 0, format!("{resonant} of {} resonant", subs.len()));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn part2prop1a(
    ctx: &Ctx,
    rect: &NRectangle,
    ell: f64,
    e: f64,
    m_ell: f64,
    m0: f64,
    kappa: f64,
    gamma: f64,
    beta: f64,
    j: usize,
) -> Result<Draft> {
    let l = rect.sides()[0];
    let mut dr = Draft::new(ell);
    dr.hyp("L = ℓ^γ", (l - ell.powf(gamma)).abs() <= 1e-9 * l, format!("L = {l}, ℓ^γ = {}", ell.powf(gamma)));
    let cap = (gamma - 1.0).min(gamma * (1.0 - beta)).min(1.0);
    dr.hyp("κ range", kappa > 0.0 && kappa < cap, format!("κ = {kappa}, bound {cap}"));
    let floor = ell.powf(-kappa);
    dr.hyp("m_ℓ range", m_ell >= floor && m_ell <= m0, format!("m_ℓ = {m_ell} in [{floor:.4}, {m0}]"));
    if !dr.met() {
        return Ok(dr);
    }
    cover_hypotheses(&mut dr, ctx, rect, ell, j, e, ResonanceMode::Beta { beta }, |op| {
        Ok(!classify_regular(op, e, m_ell)?.outcome)
    })?;
    if !dr.met() {
        return Ok(dr);
    }
    let m_l = m_ell - 0.5 * ell.powf(-kappa);
    if m_l < l.powf(-kappa) {
        dr.notes.push(format!("m_L = {m_l:.4} is below L^-κ = {:.4}", l.powf(-kappa)));
    }
    dr.conclude(classify_regular(&ctx.op(rect)?, e, m_l)?);
    Ok(dr)
}

fn part4lem0(ctx: &Ctx, rect: &NRectangle, m: f64, beta: f64, e0: f64, offsets: &[f64]) -> Result<Draft> {
    let l = rect.min_side();
    let mut dr = Draft::new(l);
    let op = ctx.op(rect)?;
    let eta = 0.5 * (-m * l - 2.0 * l.powf(beta)).exp();
    let mut first: Option<Verdict> = None;
    for &o in offsets {
        let rep = energy_stability_check(&op, e0, m, beta, e0 + o * eta)?;
        if let Some(why) = rep.skipped {
            dr.hyp(&format!("hypotheses at offset {o}"), false, why);
            continue;
        }
        if !rep.implication_holds {
            dr.holds = false;
            first = rep.conclusion.clone();
        } else if first.is_none() {
            first = rep.conclusion.clone();
        }
    }
    if dr.hypotheses.is_empty() {
        dr.hyp("regular at E0 with bounded resolvent", true, format!("η = {eta:.3e}"));
    }
    dr.conclusion = first;
    Ok(dr)
}

fn part1prop1a(ctx: &Ctx, rect: &NRectangle, ell: f64, e: f64, theta: f64, s: f64, j: usize) -> Result<Draft> {
    let (n, d) = (rect.n() as f64, rect.d() as f64);
    let nd = n * d;
    let mut dr = Draft::new(ell);
    dr.hyp("θ > 8Nd", theta > 8.0 * nd, format!("θ = {theta}"));
    dr.hyp("Nd < s < s + 2Nd < θ", nd < s && s + 2.0 * nd < theta, format!("s = {s}"));
    let y = rect.sides()[0] / ell;
    let need = 4000.0 * j as f64 * n.powf(n + 1.0);
    dr.hyp("Y ≥ 4000 J N^(N+1)", y >= need, format!("Y = {y}, need {need}"));
    if !dr.met() {
        return Ok(dr);
    }
    cover_hypotheses(&mut dr, ctx, rect, ell, j, e, ResonanceMode::Suitable { s }, |op| {
        Ok(!classify_suitable(op, e, theta)?.outcome)
    })?;
    if dr.met() {
        dr.conclude(classify_suitable(&ctx.op(rect)?, e, theta)?);
    }
    Ok(dr)
}

fn part3prop1a(ctx: &Ctx, rect: &NRectangle, ell: f64, e: f64, zeta0: f64, beta: f64) -> Result<Draft> {
    let n = rect.n() as f64;
    let mut dr = Draft::new(ell);
    let y = rect.sides()[0] / ell;
    let need = (3800.0 * n.powf(n + 1.0)).powf(1.0 / (1.0 - zeta0));
    dr.hyp("Y ≥ (3800 N^(N+1))^(1/(1−ζ0))", y >= need, format!("Y = {y}, need {need:.3e}"));
    if !dr.met() {
        return Ok(dr);
    }
    let j = y.powf(zeta0).floor() as usize;
    cover_hypotheses(&mut dr, ctx, rect, ell, j, e, ResonanceMode::Beta { beta }, |op| {
        Ok(!classify_ses(op, e, zeta0)?.outcome)
    })?;
    if dr.met() {
        dr.conclude(classify_ses(&ctx.op(rect)?, e, zeta0)?);
    }
    Ok(dr)
}

#[allow(clippy::too_many_arguments)]
fn part2firstthm(
    ctx: &Ctx,
    rect: &NRectangle,
    ell: f64,
    e: f64,
    e_n: f64,
    m_star: f64,
    kappa: f64,
    beta: f64,
) -> Result<Draft> {
    let mut dr = Draft::new(ell);
    if !dr.hyp("energy below E^(N)", e <= e_n, format!("E = {e}, E^(N) = {e_n}")) {
        return Ok(dr);
    }
    let op = ctx.op(rect)?;
    let hnr = match classify_hnr(&op, e, ell, beta, e_n) {
        Ok(v) => v,
        Err(Error::NotPartiallyInteractive) => {
            dr.hyp("partially interactive", false, "no split with separated particle groups");
            return Ok(dr);
        }
        Err(err) => return Err(err),
    };
    dr.hyp("highly nonresonant", hnr.outcome, format!("margin {:.3}", hnr.margin));
    let pre = classify_preregular(&op, e, m_star, ell, e_n)?;
    dr.hyp("preregular", pre.outcome, format!("margin {:.3}", pre.margin));
    if !dr.met() {
        return Ok(dr);
    }
    let l = rect.sides()[0];
    let nd = (rect.n() * rect.d()) as f64;
    let m_l = m_star - 0.5 * l.powf(-kappa) - 100.0 * (nd + 1.0) * (2.0 * l).ln() / l;
    dr.conclude(classify_regular(&op, e, m_l)?);
    Ok(dr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::InteractionSpec;

    fn params(n: usize) -> ModelParams {
        ModelParams {
            n,
            mesh: 0.25,
            interaction: InteractionSpec { bound: 1.0, range: 0.5, ..InteractionSpec::default() },
            ..ModelParams::default()
        }
    }

    fn cube(center: &[f64], side: f64) -> BoxSpec {
        BoxSpec { center: center.to_vec(), side }
    }

    fn free(params: ModelParams, instance: LemmaInstance) -> LemmaSpec {
        LemmaSpec { params, amplitude: Some(0.0), instance }
    }

    #[test]
    fn res_ine_free_deep() {
        let spec = free(
            params(1),
            LemmaInstance::ResIne {
                inner: cube(&[-3.0], 6.0),
                outer: cube(&[0.0], 12.0),
                energy: -2.0,
                e_n: 1.0,
                x: vec![-4.5],
                y: vec![3.0],
            },
        );
        let rep = verify_deterministic_lemma(&spec, 0).unwrap();
        assert_eq!(rep.status, LemmaStatus::Holds, "{rep:?}");
        assert!(rep.above_min);
    }

    #[test]
    fn pi_suit_free_deep() {
        let spec = free(
            params(2),
            LemmaInstance::PiSuit {
                rect: cube(&[-4.0, 4.0], 6.0),
                energy: -20.0,
                e_n: 1.0,
                mode: CombinationMode::Regular { m: 1.0 / 6.0 },
            },
        );
        let rep = verify_deterministic_lemma(&spec, 0).unwrap();
        assert_eq!(rep.status, LemmaStatus::Holds, "{rep:?}");
    }

    #[test]
    fn violated_hypothesis_skips() {
        let spec = free(
            params(2),
            LemmaInstance::PiSuit {
                rect: cube(&[0.0, 0.0], 6.0),
                energy: -20.0,
                e_n: 1.0,
                mode: CombinationMode::Regular { m: 0.1 },
            },
        );
        assert_eq!(verify_deterministic_lemma(&spec, 0).unwrap().status, LemmaStatus::Skipped);
        let spec = free(
            params(1),
            LemmaInstance::Part2Prop1a {
                rect: cube(&[0.0], 36.0),
                ell: 6.0,
                energy: -1.0,
                m_ell: 0.01,
                m0: 1.0,
                kappa: 0.5,
                gamma: 2.0,
                beta: 0.2,
                j: 1,
            },
        );
        assert_eq!(verify_deterministic_lemma(&spec, 0).unwrap().status, LemmaStatus::Skipped);
    }

    #[test]
    fn part2prop1a_free_deep() {
        let spec = free(
            params(1),
            LemmaInstance::Part2Prop1a {
                rect: cube(&[0.0], 36.0),
                ell: 6.0,
                energy: -1.0,
                m_ell: 0.5,
                m0: 1.0,
                kappa: 0.5,
                gamma: 2.0,
                beta: 0.2,
                j: 1,
            },
        );
        let rep = verify_deterministic_lemma(&spec, 0).unwrap();
        assert_eq!(rep.status, LemmaStatus::Holds, "{rep:?}");
    }

    #[test]
    fn part4lem0_free_deep() {
        let spec = free(
            params(1),
            LemmaInstance::Part4Lem0 {
                rect: cube(&[0.0], 6.0),
                m: 0.5,
                beta: 0.2,
                e0: -1.0,
                offsets: vec![-0.9, 0.0, 0.5],
            },
        );
        let rep = verify_deterministic_lemma(&spec, 0).unwrap();
        assert_eq!(rep.status, LemmaStatus::Holds, "{rep:?}");
    }

    #[test]
    fn large_ratio_lemmas_skip_at_desk_scale() {
        let spec = free(
            params(1),
            LemmaInstance::Part1Prop1a { rect: cube(&[0.0], 36.0), ell: 6.0, energy: -1.0, theta: 9.0, s: 2.0, j: 1 },
        );
        let rep = verify_deterministic_lemma(&spec, 0).unwrap();
        assert_eq!(rep.status, LemmaStatus::Skipped);
        assert!(rep.hypotheses.iter().any(|h| h.name.starts_with('Y') && !h.holds));
        let spec = free(
            params(1),
            LemmaInstance::Part3Prop1a { rect: cube(&[0.0], 36.0), ell: 6.0, energy: -1.0, zeta0: 0.3, beta: 0.2 },
        );
        assert_eq!(verify_deterministic_lemma(&spec, 0).unwrap().status, LemmaStatus::Skipped);
    }

    #[test]
    fn instance_round_trips_through_json() {
        let inst = LemmaInstance::Part4Lem0 { rect: cube(&[0.0], 6.0), m: 0.5, beta: 0.2, e0: -1.0, offsets: vec![0.0] };
        let s = serde_json::to_string(&inst).unwrap();
        assert!(s.contains("\"kind\":\"part4lem0\""));
        assert_eq!(serde_json::from_str::<LemmaInstance>(&s).unwrap(), inst);
    }
}
