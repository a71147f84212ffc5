//! Exponents, length scales and Monte Carlo drivers for the four multiscale
//! analyses.

mod ensemble;
mod lemmas;
mod stage;

pub use ensemble::{
    estimate_event_probability, two_volume_spacing_estimate, verify_initial_step, wegner_scaling,
    wegner_trace_estimate, BoxSpec, EventSpec, InitialStepOptions, InitialStepReport, SpacingReport, WegnerOptions,
    WegnerReport, WegnerScalingReport,
};
pub use lemmas::{
    verify_deterministic_lemma, Hypothesis, LemmaInstance, LemmaReport, LemmaSpec, LemmaStatus, ELL_MIN_CELLS,
};
pub use stage::{run_msa_stage, ScaleRow, Stage, StageConfig, StageReport};

use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

/// The exponents `ζ < ζ₂ < γζ₂ < ζ₁ < γζ₁ < β < ζ₀ < τ < 1` with
/// `ζγ² < ζ₂`, the rate exponent `κ` and the mass `m*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentLedger {
    pub zeta: f64,
    pub zeta2: f64,
    pub zeta1: f64,
    pub zeta0: f64,
    pub beta: f64,
    pub tau: f64,
    pub gamma: f64,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub m_star: Option<f64>,
    /// `E^{(N)}`, needed for the bound `m* ≤ √E^{(N)}/6`.
    #[serde(default)]
    pub e_top: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerCheck {
    pub valid: bool,
    pub violations: Vec<String>,
}

impl ExponentLedger {
    pub fn validate(&self) -> LedgerCheck {
        let g = self.gamma;
        let chain = [
            ("0", 0.0),
            ("ζ", self.zeta),
            ("ζ2", self.zeta2),
            ("γζ2", g * self.zeta2),
            ("ζ1", self.zeta1),
            ("γζ1", g * self.zeta1),
            ("β", self.beta),
            ("ζ0", self.zeta0),
            ("τ", self.tau),
            ("1", 1.0),
        ];
        let mut violations = Vec::new();
        for w in chain.windows(2) {
            if !(w[0].1 < w[1].1) {
                violations.push(format!("{} = {} is not below {} = {}", w[0].0, w[0].1, w[1].0, w[1].1));
            }
        }
        let zg = self.zeta * g * g;
        if !(zg < self.zeta2) {
            violations.push(format!("ζγ² = {zg} is not below ζ2 = {}", self.zeta2));
        }
        if let Some(k) = self.kappa {
            let cap = (g - 1.0).min(g * (1.0 - self.beta)).min(1.0);
            if !(k > 0.0 && k < cap) {
                violations.push(format!("κ = {k} is not in (0, {cap})"));
            }
        }
        if let (Some(m), Some(e)) = (self.m_star, self.e_top) {
            let cap = e.max(0.0).sqrt() / 6.0;
            if !(m > 0.0 && m <= cap) {
                violations.push(format!("m* = {m} is not in (0, √E/6 = {cap}]"));
            }
        }
        LedgerCheck { valid: violations.is_empty(), violations }
    }
}

pub fn validate_ledger(ledger: &ExponentLedger) -> LedgerCheck {
    ledger.validate()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `L_{k+1} = Y L_k`.
    Geometric { y: f64 },
    /// `L_{k+1} = L_k^γ`.
    Power { gamma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleSchedule {
    pub kind: ScheduleKind,
    pub l0: f64,
    pub scales: Vec<f64>,
}

/// The first `steps` scales starting from `l0`.
pub fn scale_schedule(kind: ScheduleKind, l0: f64, steps: usize) -> Result<ScaleSchedule> {
    if !(l0 > 1.0) {
        return Err(invalid("L0 must exceed 1"));
    }
    let mut scales = Vec::with_capacity(steps);
    let mut l = l0;
    for _ in 0..steps {
        scales.push(l);
        l = match kind {
            ScheduleKind::Geometric { y } if y > 1.0 => y * l,
            ScheduleKind::Power { gamma } if gamma > 1.0 => snap(l.powf(gamma)),
            _ => return Err(invalid("growth factor must exceed 1")),
        };
    }
    Ok(ScaleSchedule { kind, l0, scales })
}

fn snap(v: f64) -> f64 {
    if (v - v.round()).abs() < 1e-9 * v.max(1.0) {
        v.round()
    } else {
        v
    }
}

impl ScaleSchedule {
    /// Places where the schedule falls short of the constants the
    /// propositions ask for with `n` particles in dimension `d`.
    pub fn shortfalls(&self, n: usize, d: usize) -> Vec<String> {
        let nf = n as f64;
        let mut out = Vec::new();
        if let ScheduleKind::Geometric { y } = self.kind {
            let need = 4000.0 * nf.powi(n as i32 + 1);
            if y < need {
                out.push(format!("Y = {y} is below 4000 N^(N+1) = {need}"));
            }
        }
        let need = 114.0 * ((n * d) as f64).sqrt();
        if self.l0 < need {
            out.push(format!("L0 = {} is below 114 √(nd) = {need:.1}", self.l0));
        }
        out
    }
}

/// `E^{(n)} = 2^{N−n} E^{(N)}` for `n = 1..=N`.
pub fn energy_ladder(top_n: usize, e_top: f64) -> Vec<f64> {
    (1..=top_n).map(|n| 2f64.powi((top_n - n) as i32) * e_top).collect()
}

/// Default `p₀ = ½ (2Y)^{−Nd}`.
pub fn default_p0(y: f64, n: usize, d: usize) -> f64 {
    0.5 * (2.0 * y).powi(-((n * d) as i32))
}

/// `E_L^{(n)} = (n/2) (d log(L+δ₊+2) − log p₀ + log n)^{−(2+ε)/d}`.
pub fn initial_step_energy(n: usize, l: f64, p0: f64, eps: f64, delta_plus: f64, d: usize) -> Result<f64> {
    if n == 0 || d == 0 || !(l > 0.0) || !(p0 > 0.0 && p0 <= 1.0) || !(eps > 0.0) || !(delta_plus > 0.0) {
        return Err(invalid("need n, d ≥ 1, L > 0, p0 ∈ (0,1], ε > 0, δ+ > 0"));
    }
    let (nf, df) = (n as f64, d as f64);
    let base = df * (l + delta_plus + 2.0).ln() - p0.ln() + nf.ln();
    Ok(0.5 * nf * base.powf(-(2.0 + eps) / df))
}

/// Inputs of the Wegner width `γ_{n,E₊}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaInputs {
    pub n: usize,
    pub e_plus: f64,
    pub m_plus: f64,
    pub delta_minus: f64,
    pub delta_plus: f64,
    pub d: usize,
    pub interaction_bound: f64,
    /// The dimension constant in the exponent, which is not known explicitly.
    pub m_d: f64,
}

/// `γ² = ½ η^{M_d(1+K^{2/3})}` with `η = min(δ₋/2, 1/2)` and
/// `K = n(n−1)‖Ũ‖ + 2M₊δ₊^d + E₊`.
pub fn gamma_constant(g: &GammaInputs) -> Result<f64> {
    if !(g.e_plus > 0.0 && g.m_plus > 0.0 && g.delta_minus > 0.0 && g.delta_plus > 0.0 && g.m_d > 0.0) {
        return Err(invalid("γ needs positive E+, M+, δ±, M_d"));
    }
    let eta = (0.5 * g.delta_minus).min(0.5);
    let nf = g.n as f64;
    let k = nf * (nf - 1.0) * g.interaction_bound + 2.0 * g.m_plus * g.delta_plus.powi(g.d as i32) + g.e_plus;
    Ok((0.5 * eta.powf(g.m_d * (1.0 + k.powf(2.0 / 3.0)))).sqrt())
}

/// Monte Carlo probability with a two-sided 95% Clopper–Pearson interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleEstimate {
    pub event: String,
    pub trials: u64,
    pub successes: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
}

impl EnsembleEstimate {
    pub fn from_counts(event: impl Into<String>, successes: u64, trials: u64, seed: u64) -> Result<Self> {
        if trials == 0 {
            return Err(invalid("at least one trial is needed"));
        }
        let (ci_lo, ci_hi) = clopper_pearson(successes, trials, 0.95);
        Ok(Self {
            event: event.into(),
            trials,
            successes,
            estimate: successes as f64 / trials as f64,
            ci_lo,
            ci_hi,
            seed,
        })
    }
}

/// Exact binomial interval at confidence `level`.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> (f64, f64) {
    let a = 0.5 * (1.0 - level);
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 { 0.0 } else { Beta::new(kf, nf - kf + 1.0).map(|b| b.inverse_cdf(a)).unwrap_or(0.0) };
    let hi = if k == n { 1.0 } else { Beta::new(kf + 1.0, nf - kf).map(|b| b.inverse_cdf(1.0 - a)).unwrap_or(1.0) };
    (lo, hi)
}

/// Sample mean with a normal-approximation 95% interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub trials: u64,
    pub mean: f64,
    pub std_err: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(invalid("at least one trial is needed"));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let std_err = (var / n).sqrt();
        Ok(Self { trials: xs.len() as u64, mean, std_err, ci_lo: mean - 1.96 * std_err, ci_hi: mean + 1.96 * std_err })
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

/// Ratio of two independent means with a delta-method standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioEstimate {
    pub value: f64,
    pub std_err: f64,
}

impl RatioEstimate {
    pub fn of(num: &MeanEstimate, den: &MeanEstimate) -> Result<Self> {
        if den.mean == 0.0 {
            return Err(Error::Precondition("ratio with zero denominator".into()));
        }
        let value = num.mean / den.mean;
        let rel = (num.std_err / num.mean.max(f64::MIN_POSITIVE)).hypot(den.std_err / den.mean);
        Ok(Self { value, std_err: value.abs() * rel })
    }

    /// Whether `target·(1 ± tolerance)` is within 1.96 standard errors.
    pub fn consistent_with(&self, target: f64, tolerance: f64) -> bool {
        (self.value - target).abs() <= tolerance * target + 1.96 * self.std_err
    }
}

/// Stream id for the `index`-th member of an independent family.
pub(crate) fn stream(family: u64, index: u64) -> u64 {
    (family << 40) | index
}
