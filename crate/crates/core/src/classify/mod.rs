//! Box classification at a fixed energy: suitable, subexponentially suitable
//! and regular boxes, resonances, and the combination rules for partially
//! interactive boxes.
//!
//! The quantifier "for all `a, b ∈ Λ` with `‖a−b‖ ≥ L/100`" is evaluated on
//! the centers of the suitable `L/6`-cover of the box. Thresholds are compared
//! in log space.

mod pi;

pub use pi::{
    classify_hnr, classify_lnr, classify_pi_combination, classify_preregular, classify_side_regular,
    max_distant_set, sub_boxes, CombinationMode, FactorSide, PiCombinationReport,
};

use crate::error::{invalid, Error, Result};
use crate::geometry::{sup_dist, suitable_cover};
use crate::operator::FiniteVolumeOperator;
use crate::spectral::{distance_to_spectrum, Resolvent};
use serde::Serialize;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

/// Relative slack on log-space threshold comparisons.
pub const LOG_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictKind {
    Suitable { theta: f64 },
    Ses { zeta: f64 },
    Regular { m: f64 },
    SuitablyResonant { s: f64 },
    BetaResonant { beta: f64 },
    Good { m: f64, beta: f64 },
    Lregular { m: f64 },
    Rregular { m: f64 },
    Preregular { m: f64 },
    Lnr { beta: f64 },
    Rnr { beta: f64 },
    Hnr { beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Witness {
    /// The block `‖χ_a R χ_b‖` with the largest excess over its bound.
    Pair { a: Vec<f64>, b: Vec<f64>, separation: f64, value: f64, bound: f64 },
    /// Distance from the energy to the spectrum.
    Spectrum { energy: f64, distance: f64, bound: f64 },
    /// A resonant sub-box of a factor box at a shifted energy.
    SubBox { side: FactorSide, center: Vec<f64>, length: f64, shift: f64, distance: f64, bound: f64 },
    /// Two distant nonregular cells of a factor cover at a shifted energy.
    Cells { side: FactorSide, shift: f64, a: Vec<f64>, b: Vec<f64> },
}

/// Outcome of a classification. `margin` is in log units; for pass/fail
/// kinds a nonnegative margin means the box qualifies, for the resonance
/// kinds a positive margin means it is resonant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub outcome: bool,
    pub margin: f64,
    pub witnesses: Vec<Witness>,
}

pub(crate) fn within(log_value: f64, log_bound: f64) -> bool {
    log_value <= log_bound + LOG_SLACK * (1.0 + log_bound.abs())
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockEntry {
    pub a: usize,
    pub b: usize,
    pub separation: f64,
    pub value: f64,
}

/// Block norms of `R(E)` between all far-apart pairs of witness centers.
#[derive(Clone, Debug, Serialize)]
pub struct BlockTable {
    pub energy: f64,
    pub side: f64,
    pub centers: Vec<Vec<f64>>,
    pub entries: Vec<BlockEntry>,
    /// Set when `E` is numerically in the spectrum; holds that distance.
    pub resonance: Option<f64>,
}

/// Centers of the suitable `L/6`-cover of a box.
pub fn witness_centers(op: &FiniteVolumeOperator) -> Result<Vec<Vec<f64>>> {
    let rect = op.rect();
    if !rect.is_box() {
        return Err(invalid("classification is defined for boxes"));
    }
    Ok(suitable_cover(rect, rect.sides()[0] / 6.0)?.centers())
}

impl BlockTable {
    pub fn new(op: &FiniteVolumeOperator, energy: f64) -> Result<Self> {
        let centers = witness_centers(op)?;
        let side = op.rect().sides()[0];
        let cells: Vec<Vec<usize>> = centers.iter().map(|c| op.unit_cell(c)).collect();
        let refs: Vec<&[usize]> = cells.iter().map(|c| c.as_slice()).collect();
        let resolvent = match Resolvent::new(op, energy, &refs) {
            Ok(r) => r,
            Err(Error::Resonant { distance, .. }) => {
                return Ok(Self { energy, side, centers, entries: Vec::new(), resonance: Some(distance) })
            }
            Err(e) => return Err(e),
        };
        let mut entries = Vec::new();
        for a in 0..centers.len() {
            for b in a + 1..centers.len() {
                let separation = sup_dist(&centers[a], &centers[b]);
                if separation >= side / 100.0 {
                    let value = resolvent.block_norm(&cells[a], &cells[b]);
                    entries.push(BlockEntry { a, b, separation, value });
                }
            }
        }
        Ok(Self { energy, side, centers, entries, resonance: None })
    }

    /// Checks every entry against `exp(log_bound(separation))`.
    fn evaluate(&self, kind: VerdictKind, log_bound: impl Fn(f64) -> f64) -> Verdict {
        if let Some(distance) = self.resonance {
            return Verdict {
                kind,
                outcome: false,
                margin: f64::NEG_INFINITY,
                witnesses: vec![Witness::Spectrum { energy: self.energy, distance, bound: 0.0 }],
            };
        }
        let mut worst: Option<(f64, &BlockEntry, f64)> = None;
        let mut outcome = true;
        for e in &self.entries {
            let lb = log_bound(e.separation);
            let lv = e.value.ln();
            outcome &= within(lv, lb);
            let slack = lb - lv;
            if worst.is_none_or(|w| slack < w.0) {
                worst = Some((slack, e, lb));
            }
        }
        match worst {
            None => Verdict { kind, outcome: true, margin: f64::INFINITY, witnesses: Vec::new() },
            Some((slack, e, lb)) => Verdict {
                kind,
                outcome,
                margin: if outcome { slack.max(0.0) } else { slack.min(-f64::MIN_POSITIVE) },
                witnesses: vec![Witness::Pair {
                    a: self.centers[e.a].clone(),
                    b: self.centers[e.b].clone(),
                    separation: e.separation,
                    value: e.value,
                    bound: lb.exp(),
                }],
            },
        }
    }

    fn suitable_raw(&self, theta: f64) -> Verdict {
        let ll = self.side.ln();
        self.evaluate(VerdictKind::Suitable { theta }, |_| -theta * ll)
    }

    fn ses_raw(&self, zeta: f64) -> Verdict {
        let t = -self.side.powf(zeta);
        self.evaluate(VerdictKind::Ses { zeta }, |_| t)
    }

    fn regular_raw(&self, m: f64) -> Verdict {
        self.evaluate(VerdictKind::Regular { m }, |sep| -m * sep)
    }

    pub fn suitable(&self, theta: f64) -> Verdict {
        audit(self, Some(theta), None, None);
        self.suitable_raw(theta)
    }

    pub fn ses(&self, zeta: f64) -> Verdict {
        audit(self, None, None, Some(zeta));
        self.ses_raw(zeta)
    }

    pub fn regular(&self, m: f64) -> Verdict {
        audit(self, None, Some(m), None);
        self.regular_raw(m)
    }
}

pub fn classify_suitable(op: &FiniteVolumeOperator, e: f64, theta: f64) -> Result<Verdict> {
    Ok(BlockTable::new(op, e)?.suitable(theta))
}

pub fn classify_ses(op: &FiniteVolumeOperator, e: f64, zeta: f64) -> Result<Verdict> {
    Ok(BlockTable::new(op, e)?.ses(zeta))
}

pub fn classify_regular(op: &FiniteVolumeOperator, e: f64, m: f64) -> Result<Verdict> {
    Ok(BlockTable::new(op, e)?.regular(m))
}

#[derive(Clone, Debug, Serialize)]
pub struct Implication {
    pub name: &'static str,
    pub premise: Verdict,
    pub conclusion: Verdict,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodboxReport {
    pub energy: f64,
    pub side: f64,
    pub implications: Vec<Implication>,
    pub all_hold: bool,
}

/// The four relations between regular, suitable and SES boxes, evaluated on
/// one block table:
/// regular(m) ⇒ suitable(mL/(100 log L)), suitable(θ) ⇒ regular(θ log L/L),
/// regular(L^{ζ−1}) ⇒ SES(ζ − log 100/log L), SES(ζ) ⇒ regular(L^{ζ−1}).
pub fn goodbox_implications(table: &BlockTable, theta: f64, m: f64, zeta: f64) -> Result<GoodboxReport> {
    let l = table.side;
    if !(l > 1.0) {
        return Err(invalid("the implications need L > 1"));
    }
    if !(theta > 0.0 && m > 0.0) {
        return Err(invalid("θ and m must be positive"));
    }
    let ll = l.ln();
    let pairs = [
        ("regular_implies_suitable", table.regular_raw(m), table.suitable_raw(m * l / (100.0 * ll))),
        ("suitable_implies_regular", table.suitable_raw(theta), table.regular_raw(theta * ll / l)),
        (
            "regular_implies_ses",
            table.regular_raw(l.powf(zeta - 1.0)),
            table.ses_raw(zeta - 100f64.ln() / ll),
        ),
        ("ses_implies_regular", table.ses_raw(zeta), table.regular_raw(l.powf(zeta - 1.0))),
    ];
    let implications: Vec<Implication> = pairs
        .into_iter()
        .map(|(name, premise, conclusion)| {
            let holds = !premise.outcome || conclusion.outcome;
            Implication { name, premise, conclusion, holds }
        })
        .collect();
    let all_hold = implications.iter().all(|i| i.holds);
    Ok(GoodboxReport { energy: table.energy, side: l, implications, all_hold })
}

static AUDIT_ON: AtomicBool = AtomicBool::new(false);
static AUDITED: AtomicU64 = AtomicU64::new(0);
static AUDIT_FAILURES: Mutex<Vec<GoodboxReport>> = Mutex::new(Vec::new());

/// Once enabled, every table-based classification also checks
/// [`goodbox_implications`] on the same table.
pub fn enable_goodbox_audit() {
    AUDIT_ON.store(true, Ordering::SeqCst);
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditSummary {
    pub checked: u64,
    pub failures: Vec<GoodboxReport>,
}

pub fn goodbox_audit_summary() -> AuditSummary {
    AuditSummary {
        checked: AUDITED.load(Ordering::SeqCst),
        failures: AUDIT_FAILURES.lock().map(|f| f.clone()).unwrap_or_default(),
    }
}

fn audit(table: &BlockTable, theta: Option<f64>, m: Option<f64>, zeta: Option<f64>) {
    if !AUDIT_ON.load(Ordering::Relaxed) || !(table.side > 1.0) {
        return;
    }
    let theta = theta.filter(|t| *t > 0.0).unwrap_or(1.0);
    let m = m.filter(|m| *m > 0.0).unwrap_or(0.1);
    let zeta = zeta.unwrap_or(0.5);
    if let Ok(report) = goodbox_implications(table, theta, m, zeta) {
        AUDITED.fetch_add(1, Ordering::SeqCst);
        if !report.all_hold {
            if let Ok(mut f) = AUDIT_FAILURES.lock() {
                f.push(report);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ResonanceMode {
    /// `dist(σ, E) < L^{−s}`.
    Suitable { s: f64 },
    /// `dist(σ, E) < ½ e^{−L^β}`.
    Beta { beta: f64 },
}

impl ResonanceMode {
    pub fn threshold(&self, side: f64) -> f64 {
        match *self {
            Self::Suitable { s } => side.powf(-s),
            Self::Beta { beta } => 0.5 * (-side.powf(beta)).exp(),
        }
    }

    fn kind(&self) -> VerdictKind {
        match *self {
            Self::Suitable { s } => VerdictKind::SuitablyResonant { s },
            Self::Beta { beta } => VerdictKind::BetaResonant { beta },
        }
    }
}

/// Resonance verdict from a known distance to the spectrum; the test is strict.
pub fn resonance_verdict(distance: f64, energy: f64, side: f64, mode: ResonanceMode) -> Verdict {
    let bound = mode.threshold(side);
    Verdict {
        kind: mode.kind(),
        outcome: distance < bound,
        margin: bound.ln() - distance.ln(),
        witnesses: vec![Witness::Spectrum { energy, distance, bound }],
    }
}

/// Resonance with `L` the shortest side.
pub fn classify_resonant(op: &FiniteVolumeOperator, e: f64, mode: ResonanceMode) -> Result<Verdict> {
    let dist = distance_to_spectrum(op, e)?;
    Ok(resonance_verdict(dist, e, op.rect().min_side(), mode))
}

/// Regular and `β`-nonresonant.
pub fn classify_good(op: &FiniteVolumeOperator, e: f64, m: f64, beta: f64) -> Result<Verdict> {
    let res = classify_resonant(op, e, ResonanceMode::Beta { beta })?;
    let reg = classify_regular(op, e, m)?;
    let outcome = reg.outcome && !res.outcome;
    let mut witnesses = reg.witnesses;
    witnesses.extend(res.witnesses);
    Ok(Verdict { kind: VerdictKind::Good { m, beta }, outcome, margin: reg.margin.min(-res.margin), witnesses })
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub e0: f64,
    pub energy: f64,
    pub eta: f64,
    /// Why the instance does not meet the hypotheses, if it does not.
    pub skipped: Option<String>,
    pub degraded_mass: f64,
    pub conclusion: Option<Verdict>,
    pub implication_holds: bool,
}

/// If the box is `(m, E0)`-regular with `‖R(E0)‖ ≤ e^{L^β}`, it is
/// `(m − 100 log 2/L, E)`-good for `|E − E0| < ½ e^{−mL − 2L^β}`.
pub fn energy_stability_check(
    op: &FiniteVolumeOperator,
    e0: f64,
    m: f64,
    beta: f64,
    e: f64,
) -> Result<StabilityReport> {
    let l = op.rect().min_side();
    let eta = 0.5 * (-m * l - 2.0 * l.powf(beta)).exp();
    let degraded_mass = m - 100.0 * 2f64.ln() / l;
    let mut report =
        StabilityReport { e0, energy: e, eta, skipped: None, degraded_mass, conclusion: None, implication_holds: true };
    let dist = distance_to_spectrum(op, e0)?;
    if dist < (-l.powf(beta)).exp() {
        report.skipped = Some(format!("‖R(E0)‖ = {:.3e} exceeds e^(L^β)", 1.0 / dist));
        return Ok(report);
    }
    if !classify_regular(op, e0, m)?.outcome {
        report.skipped = Some("box is not (m, E0)-regular".into());
        return Ok(report);
    }
    if (e - e0).abs() >= eta {
        report.skipped = Some(format!("|E − E0| = {:.3e} is outside the window {eta:.3e}", (e - e0).abs()));
        return Ok(report);
    }
    let good = classify_good(op, e, degraded_mass, beta)?;
    report.implication_holds = good.outcome;
    report.conclusion = Some(good);
    Ok(report)
}
