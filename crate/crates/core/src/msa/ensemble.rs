use super::{
    gamma_constant, initial_step_energy, stream, EnsembleEstimate, GammaInputs, MeanEstimate,
    RatioEstimate,
};
use crate::classify::{classify_regular, classify_ses, classify_suitable};
use crate::disorder::{face_site_range, DisorderField, SiteBox};
use crate::error::{invalid, Error, Result};
use crate::geometry::{hausdorff_distance, separation_class, Configuration, NRectangle};
use crate::operator::{assemble_shared, FiniteVolumeOperator, ModelParams};
use crate::spectral::{count_at_most, spectrum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const TRIAL_FAMILY: u64 = 1;
const FROZEN_FAMILY: u64 = 2;
const FACE_FAMILY: u64 = 3;

/// A cube of side `side` around the configuration `center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center: Vec<f64>,
    pub side: f64,
}

impl BoxSpec {
    pub fn rect(&self, d: usize) -> Result<NRectangle> {
        NRectangle::cube(Configuration::new(d, self.center.clone())?, self.side)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventSpec {
    Nonsuitable { theta: f64, energy: f64, center: Vec<f64>, side: f64 },
    Nonregular { m: f64, energy: f64, center: Vec<f64>, side: f64 },
    NonSes { zeta: f64, energy: f64, center: Vec<f64>, side: f64 },
    /// Some `E ∈ I` at which both boxes are `m`-nonregular. `E` runs over a
    /// grid of step `grid_step` together with the eigenvalues of both boxes
    /// that fall in `I`.
    TwoBoxIntervalNonregular {
        m: f64,
        interval: [f64; 2],
        a: Vec<f64>,
        b: Vec<f64>,
        side: f64,
        #[serde(default = "default_grid_step")]
        grid_step: f64,
    },
}

fn default_grid_step() -> f64 {
    0.01
}

impl EventSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Nonsuitable { theta, energy, side, .. } => format!("nonsuitable(θ={theta}, E={energy}, L={side})"),
            Self::Nonregular { m, energy, side, .. } => format!("nonregular(m={m}, E={energy}, L={side})"),
            Self::NonSes { zeta, energy, side, .. } => format!("non-ses(ζ={zeta}, E={energy}, L={side})"),
            Self::TwoBoxIntervalNonregular { m, interval, side, .. } => {
                format!("two-box-nonregular(m={m}, I=[{}, {}], L={side})", interval[0], interval[1])
            }
        }
    }

    fn boxes(&self, d: usize) -> Result<Vec<NRectangle>> {
        match self {
            Self::Nonsuitable { center, side, .. } | Self::Nonregular { center, side, .. } | Self::NonSes { center, side, .. } => {
                Ok(vec![BoxSpec { center: center.clone(), side: *side }.rect(d)?])
            }
            Self::TwoBoxIntervalNonregular { a, b, side, interval, grid_step, .. } => {
                if !(interval[0] <= interval[1]) || !(*grid_step > 0.0) {
                    return Err(invalid("need lo ≤ hi and a positive grid step"));
                }
                let ra = BoxSpec { center: a.clone(), side: *side }.rect(d)?;
                let rb = BoxSpec { center: b.clone(), side: *side }.rect(d)?;
                let dist = hausdorff_distance(ra.center(), rb.center())?;
                if dist < *side {
                    return Err(Error::Precondition(format!("box centers at Hausdorff distance {dist} < L = {side}")));
                }
                Ok(vec![ra, rb])
            }
        }
    }

    fn occurs(&self, ops: &[FiniteVolumeOperator]) -> Result<bool> {
        Ok(match self {
            Self::Nonsuitable { theta, energy, .. } => !classify_suitable(&ops[0], *energy, *theta)?.outcome,
            Self::Nonregular { m, energy, .. } => !classify_regular(&ops[0], *energy, *m)?.outcome,
            Self::NonSes { zeta, energy, .. } => !classify_ses(&ops[0], *energy, *zeta)?.outcome,
            Self::TwoBoxIntervalNonregular { m, interval, grid_step, .. } => {
                let [lo, hi] = *interval;
                let steps = ((hi - lo) / grid_step).ceil() as usize;
                let mut energies: Vec<f64> = (0..=steps).map(|k| (lo + k as f64 * grid_step).min(hi)).collect();
                for op in ops {
                    energies.extend(spectrum(op, Some((lo, hi)))?.eigenvalues);
                }
                energies.sort_by(f64::total_cmp);
                energies.dedup();
                for e in energies {
                    if !classify_regular(&ops[0], e, *m)?.outcome && !classify_regular(&ops[1], e, *m)?.outcome {
                        return Ok(true);
                    }
                }
                false
            }
        })
    }
}

fn trial_operators(
    rects: &[NRectangle],
    region: &SiteBox,
    params: &ModelParams,
    seed: u64,
    stream_of: impl Fn(&[i64]) -> u64,
) -> Result<Vec<FiniteVolumeOperator>> {
    let field = Arc::new(DisorderField::sample_with(region, &params.distribution, seed, stream_of)?);
    rects.iter().map(|r| assemble_shared(r, field.clone(), params)).collect()
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(invalid("at least one trial is needed"));
    }
    Ok(())
}

/// Monte Carlo probability of `event`; trial `t` draws its disorder from
/// stream `t` of `seed`, so the result does not depend on the worker count.
pub fn estimate_event_probability(
    event: &EventSpec,
    params: &ModelParams,
    trials: u64,
    seed: u64,
) -> Result<EnsembleEstimate> {
    check_trials(trials)?;
    let rects = event.boxes(params.d)?;
    let refs: Vec<&NRectangle> = rects.iter().collect();
    let region = SiteBox::covering(&refs)?;
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| {
            let ops = trial_operators(&rects, &region, params, seed, |_| stream(TRIAL_FAMILY, t))?;
            event.occurs(&ops)
        })
        .collect::<Result<Vec<bool>>>()?;
    EnsembleEstimate::from_counts(event.label(), hits.iter().filter(|&&h| h).count() as u64, trials, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialStepOptions {
    pub side: f64,
    pub p0: f64,
    pub eps: f64,
    pub theta: f64,
    pub min_side: f64,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InitialStepReport {
    pub n: usize,
    pub side: f64,
    pub e_l: f64,
    pub p0: f64,
    pub energies: Vec<f64>,
    pub per_energy: Vec<EnsembleEstimate>,
    /// Nonsuitable at one of the sampled energies.
    pub union: EnsembleEstimate,
    pub pass: bool,
    /// `p0 − ci_hi` of the union estimate.
    pub margin: f64,
}

/// Offsets below `E_L` at which suitability is sampled.
const INITIAL_OFFSETS: [f64; 3] = [0.0, 0.25, 1.0];

/// Estimates the chance that a box at the origin fails to be
/// `(θ, E)`-suitable for some sampled `E ≤ E_L`.
pub fn verify_initial_step(params: &ModelParams, opts: &InitialStepOptions) -> Result<InitialStepReport> {
    check_trials(opts.trials)?;
    if opts.side < opts.min_side {
        return Err(invalid(format!("L = {} is below the minimum {}", opts.side, opts.min_side)));
    }
    let n = params.n;
    let e_l = initial_step_energy(n, opts.side, opts.p0, opts.eps, params.profile.delta_plus, params.d)?;
    let energies: Vec<f64> = INITIAL_OFFSETS.iter().map(|o| e_l - o).collect();
    let rect = BoxSpec { center: vec![0.0; n * params.d], side: opts.side }.rect(params.d)?;
    let region = SiteBox::covering(&[&rect])?;
    let rows = (0..opts.trials)
        .into_par_iter()
        .map(|t| {
            let ops = trial_operators(std::slice::from_ref(&rect), &region, params, opts.seed, |_| stream(TRIAL_FAMILY, t))?;
            energies
                .iter()
                .map(|&e| classify_suitable(&ops[0], e, opts.theta).map(|v| !v.outcome))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_energy = Vec::new();
    for (k, e) in energies.iter().enumerate() {
        let hits = rows.iter().filter(|r| r[k]).count() as u64;
        per_energy.push(EnsembleEstimate::from_counts(
            format!("nonsuitable(θ={}, E={e}, L={})", opts.theta, opts.side),
            hits,
            opts.trials,
            opts.seed,
        )?);
    }
    let hits = rows.iter().filter(|r| r.iter().any(|&h| h)).count() as u64;
    let union = EnsembleEstimate::from_counts(
        format!("nonsuitable(θ={}, some E ≤ {e_l}, L={})", opts.theta, opts.side),
        hits,
        opts.trials,
        opts.seed,
    )?;
    let margin = opts.p0 - union.ci_hi;
    Ok(InitialStepReport {
        n,
        side: opts.side,
        e_l,
        p0: opts.p0,
        energies,
        per_energy,
        pass: margin >= 0.0,
        margin,
        union,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WegnerOptions {
    pub interval: [f64; 2],
    pub face: usize,
    pub e_plus: f64,
    /// Dimension constant in the Wegner width.
    pub m_d: f64,
    pub trials: u64,
    pub seed: u64,
    /// Face resamplings per frozen background.
    #[serde(default = "default_batch")]
    pub batch: u64,
}

fn default_batch() -> u64 {
    50
}

#[derive(Clone, Debug, Serialize)]
pub struct WegnerReport {
    pub interval: [f64; 2],
    pub width: f64,
    pub gamma: f64,
    pub side: f64,
    pub face: usize,
    /// Only the sites of one face vary; the rest are redrawn once per batch.
    pub face_average: MeanEstimate,
    pub full_average: MeanEstimate,
    /// `E[tr χ_I] / (|I| L^{nd})`.
    pub per_volume: f64,
    pub averages_agree: bool,
}

fn wegner_gamma(params: &ModelParams, e_plus: f64, m_d: f64) -> Result<f64> {
    gamma_constant(&GammaInputs {
        n: params.n,
        e_plus,
        m_plus: params.distribution.m_plus(),
        delta_minus: params.profile.delta_minus,
        delta_plus: params.profile.delta_plus,
        d: params.d,
        interaction_bound: params.interaction.bound,
        m_d,
    })
}

fn trace_in(op: &FiniteVolumeOperator, lo: f64, hi: f64) -> f64 {
    (count_at_most(op, hi) - count_at_most(op, lo)) as f64
}

/// `E[tr χ_I(H)]` averaged over the face-`i` amplitudes alone and over all
/// amplitudes.
pub fn wegner_trace_estimate(rect: &NRectangle, params: &ModelParams, opts: &WegnerOptions) -> Result<WegnerReport> {
    check_trials(opts.trials)?;
    if opts.batch == 0 {
        return Err(invalid("batch size must be positive"));
    }
    if opts.face >= rect.n() {
        return Err(invalid(format!("face {} out of range", opts.face)));
    }
    let [lo, hi] = opts.interval;
    let gamma = wegner_gamma(params, opts.e_plus, opts.m_d)?;
    let width = hi - lo;
    if !(width >= 0.0) || width > 2.0 * gamma {
        return Err(Error::Precondition(format!("|I| = {width} exceeds 2γ = {}", 2.0 * gamma)));
    }
    if lo < 0.0 || hi >= opts.e_plus {
        return Err(Error::Precondition(format!("I = [{lo}, {hi}] is not inside [0, {})", opts.e_plus)));
    }
    let rects = std::slice::from_ref(rect);
    let region = SiteBox::covering(&[rect])?;
    let (flo, fhi) = face_site_range(rect, opts.face);
    let on_face = |s: &[i64]| s.iter().enumerate().all(|(c, &v)| flo[c] <= v && v <= fhi[c]);
    let face_samples = (0..opts.trials)
        .into_par_iter()
        .map(|t| {
            let frozen = stream(FROZEN_FAMILY, t / opts.batch);
            let fresh = stream(FACE_FAMILY, t);
            let ops = trial_operators(rects, &region, params, opts.seed, |s| if on_face(s) { fresh } else { frozen })?;
            Ok(trace_in(&ops[0], lo, hi))
        })
        .collect::<Result<Vec<f64>>>()?;
    let full_samples = (0..opts.trials)
        .into_par_iter()
        .map(|t| {
            let ops = trial_operators(rects, &region, params, opts.seed, |_| stream(TRIAL_FAMILY, t))?;
            Ok(trace_in(&ops[0], lo, hi))
        })
        .collect::<Result<Vec<f64>>>()?;
    let face_average = MeanEstimate::from_samples(&face_samples)?;
    let full_average = MeanEstimate::from_samples(&full_samples)?;
    let side = rect.max_side();
    let volume = side.powi((rect.n() * rect.d()) as i32);
    let per_volume = if width > 0.0 { full_average.mean / (width * volume) } else { 0.0 };
    Ok(WegnerReport {
        interval: opts.interval,
        width,
        gamma,
        side,
        face: opts.face,
        averages_agree: face_average.overlaps(&full_average),
        face_average,
        full_average,
        per_volume,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WegnerScalingReport {
    pub base: WegnerReport,
    pub doubled_width: WegnerReport,
    pub doubled_side: WegnerReport,
    /// Expected ratio 2.
    pub width_ratio: RatioEstimate,
    /// Expected ratio `2^{nd}`.
    pub side_ratio: RatioEstimate,
    pub width_ok: bool,
    pub side_ok: bool,
    pub averages_agree: bool,
}

/// Runs the trace estimate on `I` and on `I` widened to twice its length
/// about its midpoint, and on the box of twice the side.
pub fn wegner_scaling(
    rect: &NRectangle,
    params: &ModelParams,
    opts: &WegnerOptions,
    width_tolerance: f64,
    side_tolerance: f64,
) -> Result<WegnerScalingReport> {
    let [lo, hi] = opts.interval;
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let wide = WegnerOptions { interval: [mid - 2.0 * half, mid + 2.0 * half], ..opts.clone() };
    let big = NRectangle::new(rect.center().clone(), rect.sides().iter().map(|s| 2.0 * s).collect())?;
    let base = wegner_trace_estimate(rect, params, opts)?;
    let doubled_width = wegner_trace_estimate(rect, params, &wide)?;
    let doubled_side = wegner_trace_estimate(&big, params, opts)?;
    let width_ratio = RatioEstimate::of(&doubled_width.full_average, &base.full_average)?;
    let side_ratio = RatioEstimate::of(&doubled_side.full_average, &base.full_average)?;
    let side_target = 2f64.powi((rect.n() * rect.d()) as i32);
    Ok(WegnerScalingReport {
        width_ok: width_ratio.consistent_with(2.0, width_tolerance),
        side_ok: side_ratio.consistent_with(side_target, side_tolerance),
        averages_agree: base.averages_agree && doubled_width.averages_agree && doubled_side.averages_agree,
        width_ratio,
        side_ratio,
        base,
        doubled_width,
        doubled_side,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpacingReport {
    pub estimate: EnsembleEstimate,
    pub eps: f64,
    pub gamma: f64,
    /// `estimate / (ε L^{2nd})`, absent for `ε = 0`.
    pub ratio_to_bound: Option<f64>,
}

fn set_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for &x in a {
        let k = b.partition_point(|&y| y < x);
        if k < b.len() {
            best = best.min(b[k] - x);
        }
        if k > 0 {
            best = best.min(x - b[k - 1]);
        }
    }
    best
}

/// `P{dist(σ(H₁) ∩ (−∞,E₊], σ(H₂) ∩ (−∞,E₊]) ≤ ε}` for partially separated
/// rectangles sharing one disorder draw per trial.
pub fn two_volume_spacing_estimate(
    r1: &NRectangle,
    r2: &NRectangle,
    params: &ModelParams,
    e_plus: f64,
    eps: f64,
    m_d: f64,
    trials: u64,
    seed: u64,
) -> Result<SpacingReport> {
    check_trials(trials)?;
    if !separation_class(r1, r2)?.is_partially_separated() {
        return Err(Error::NotSeparated);
    }
    let gamma = wegner_gamma(params, e_plus, m_d)?;
    if !(eps >= 0.0) || eps > gamma {
        return Err(Error::Precondition(format!("ε = {eps} is not in [0, γ = {gamma}]")));
    }
    let rects = [r1.clone(), r2.clone()];
    let region = SiteBox::covering(&[r1, r2])?;
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| {
            let ops = trial_operators(&rects, &region, params, seed, |_| stream(TRIAL_FAMILY, t))?;
            let floor = -ops.iter().map(|o| o.norm_bound()).fold(0.0, f64::max) - 1.0;
            let s1 = spectrum(&ops[0], Some((floor, e_plus)))?.eigenvalues;
            let s2 = spectrum(&ops[1], Some((floor, e_plus)))?.eigenvalues;
            Ok(set_distance(&s1, &s2) <= eps)
        })
        .collect::<Result<Vec<bool>>>()?;
    let count = hits.iter().filter(|&&h| h).count() as u64;
    let estimate = EnsembleEstimate::from_counts(format!("spacing ≤ {eps}"), count, trials, seed)?;
    let l = r1.max_side().max(r2.max_side());
    let scale = eps * l.powi((2 * r1.n() * r1.d()) as i32);
    Ok(SpacingReport { ratio_to_bound: (eps > 0.0).then(|| estimate.estimate / scale), estimate, eps, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::InteractionSpec;
    use crate::spectral::lowest_eigenvalue;

    fn params() -> ModelParams {
        ModelParams { interaction: InteractionSpec::none(), mesh: 0.5, ..ModelParams::default() }
    }

    #[test]
    fn deep_energy_is_always_suitable() {
        let ev = EventSpec::Nonsuitable { theta: 1.0, energy: -5.0, center: vec![0.0], side: 12.0 };
        let est = estimate_event_probability(&ev, &params(), 200, 3).unwrap();
        assert_eq!(est.successes, 0);
        assert!(est.ci_hi <= 0.02);
        assert_eq!(est, estimate_event_probability(&ev, &params(), 200, 3).unwrap());
        assert!(estimate_event_probability(&ev, &params(), 0, 3).is_err());
    }

    #[test]
    fn planted_eigenvalue_is_always_resonant() {
        // Zero disorder makes every trial the free operator.
        let mut p = params();
        p.distribution = crate::disorder::AmplitudeDistribution::Histogram { m_plus: 1e-12, weights: vec![1.0] };
        let rect = BoxSpec { center: vec![0.0], side: 12.0 }.rect(1).unwrap();
        let field = DisorderField::constant(&SiteBox::covering(&[&rect]).unwrap(), 0.0, &p.distribution).unwrap();
        let e0 = lowest_eigenvalue(&crate::operator::assemble(&rect, &field, &p).unwrap()).unwrap();
        let ev = EventSpec::Nonregular { m: 0.1, energy: e0, center: vec![0.0], side: 12.0 };
        let est = estimate_event_probability(&ev, &p, 20, 1).unwrap();
        assert_eq!(est.successes, 20);
    }

    #[test]
    fn two_box_needs_distance() {
        let ev = EventSpec::TwoBoxIntervalNonregular {
            m: 0.1,
            interval: [-1.0, -0.5],
            a: vec![0.0],
            b: vec![6.0],
            side: 12.0,
            grid_step: 0.1,
        };
        assert!(matches!(estimate_event_probability(&ev, &params(), 5, 1), Err(Error::Precondition(_))));
        let ev = EventSpec::TwoBoxIntervalNonregular {
            m: 0.1,
            interval: [-1.0, -0.5],
            a: vec![0.0],
            b: vec![24.0],
            side: 12.0,
            grid_step: 0.1,
        };
        assert_eq!(estimate_event_probability(&ev, &params(), 10, 1).unwrap().successes, 0);
    }

    #[test]
    fn nesting_on_shared_batch() {
        let at = |theta| {
            let ev = EventSpec::Nonsuitable { theta, energy: 0.0, center: vec![0.0], side: 12.0 };
            estimate_event_probability(&ev, &params(), 60, 9).unwrap().successes
        };
        assert!(at(0.5) <= at(1.0) && at(1.0) <= at(3.0));
    }

    fn wegner_opts(interval: [f64; 2]) -> WegnerOptions {
        WegnerOptions { interval, face: 0, e_plus: 1.5, m_d: 1.0, trials: 60, seed: 4, batch: 10 }
    }

    #[test]
    fn wegner_preconditions_and_nesting() {
        let rect = BoxSpec { center: vec![0.0], side: 10.0 }.rect(1).unwrap();
        let p = params();
        let empty = wegner_trace_estimate(&rect, &p, &wegner_opts([0.8, 0.8])).unwrap();
        assert_eq!(empty.full_average.mean, 0.0);
        assert!(matches!(wegner_trace_estimate(&rect, &p, &wegner_opts([0.1, 1.0])), Err(Error::Precondition(_))));
        assert!(wegner_trace_estimate(&rect, &p, &wegner_opts([-0.1, 0.1])).is_err());
        let narrow = wegner_trace_estimate(&rect, &p, &wegner_opts([0.7, 0.9])).unwrap();
        let wide = wegner_trace_estimate(&rect, &p, &wegner_opts([0.6, 1.0])).unwrap();
        assert!(narrow.full_average.mean <= wide.full_average.mean);
        assert!(narrow.face_average.mean <= wide.face_average.mean);
        assert!((narrow.gamma - 0.2249).abs() < 1e-3);
    }

    #[test]
    fn spacing_needs_separation_and_nests() {
        let p = params();
        let r1 = BoxSpec { center: vec![0.0], side: 6.0 }.rect(1).unwrap();
        let r2 = BoxSpec { center: vec![10.0], side: 6.0 }.rect(1).unwrap();
        assert!(matches!(two_volume_spacing_estimate(&r1, &r1, &p, 1.5, 0.1, 1.0, 5, 1), Err(Error::NotSeparated)));
        let zero = two_volume_spacing_estimate(&r1, &r2, &p, 1.5, 0.0, 1.0, 40, 1).unwrap();
        assert_eq!(zero.estimate.successes, 0);
        let a = two_volume_spacing_estimate(&r1, &r2, &p, 1.5, 0.05, 1.0, 40, 1).unwrap();
        let b = two_volume_spacing_estimate(&r1, &r2, &p, 1.5, 0.2, 1.0, 40, 1).unwrap();
        assert!(a.estimate.successes <= b.estimate.successes);
    }

    #[test]
    fn set_distance_sorted() {
        assert_eq!(set_distance(&[0.0, 1.0], &[0.4, 2.5]), 0.4);
        assert_eq!(set_distance(&[], &[1.0]), f64::INFINITY);
    }
}
