use super::ensemble::{estimate_event_probability, EventSpec};
use super::{scale_schedule, EnsembleEstimate, ExponentLedger, ScheduleKind};
use crate::error::{invalid, Error, Result};
use crate::operator::ModelParams;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Nonsuitability against `L_k^{−p}`.
    #[serde(rename = "1")]
    Suitable,
    /// `m₀/2`-nonregularity against `L_k^{−p}`.
    #[serde(rename = "2")]
    Regular,
    /// `ζ₀`-nonSES against `e^{−L_k^{ζ₁}}`.
    #[serde(rename = "3")]
    Ses,
    /// `m₀/2`-nonregularity against `e^{−L_k^{ζ₂}}`.
    #[serde(rename = "4-single")]
    SingleEnergy,
    /// Two distant boxes both nonregular somewhere in `I`, against `e^{−L_k^ζ}`.
    #[serde(rename = "4-interval")]
    Interval,
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "1" => Self::Suitable,
            "2" => Self::Regular,
            "3" => Self::Ses,
            "4-single" => Self::SingleEnergy,
            "4-interval" => Self::Interval,
            other => return Err(invalid(format!("unknown stage {other:?}"))),
        })
    }
}

impl Stage {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Suitable => "1",
            Self::Regular => "2",
            Self::Ses => "3",
            Self::SingleEnergy => "4-single",
            Self::Interval => "4-interval",
        }
    }
}

fn default_p() -> f64 {
    1.0
}

fn default_max_dim() -> usize {
    crate::spectral::DENSE_LIMIT
}

fn default_grid_step() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: Stage,
    pub schedule: ScheduleKind,
    pub l0: f64,
    pub steps: usize,
    pub energy: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub m0: f64,
    #[serde(default)]
    pub ledger: Option<ExponentLedger>,
    /// Energy interval for the two-box stage.
    #[serde(default)]
    pub interval: Option<[f64; 2]>,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub illustrative: bool,
    /// Largest matrix dimension the run may build.
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleRow {
    pub scale: f64,
    pub event: String,
    pub trials: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub target_bound: f64,
    pub mode: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageReport {
    pub stage: &'static str,
    pub illustrative: bool,
    pub rows: Vec<ScaleRow>,
    pub estimates: Vec<EnsembleEstimate>,
    pub warnings: Vec<String>,
    /// No estimate rises significantly above its predecessor.
    pub nonincreasing: bool,
    pub pass: bool,
}

fn need_ledger(cfg: &StageConfig) -> Result<&ExponentLedger> {
    let ledger = cfg.ledger.as_ref().ok_or_else(|| invalid(format!("stage {} needs a ledger", cfg.stage.label())))?;
    let check = ledger.validate();
    if !check.valid {
        return Err(Error::Config(check.violations));
    }
    Ok(ledger)
}

fn matrix_dim(params: &ModelParams, side: f64) -> Result<usize> {
    let per_axis = params.interior_nodes(side)?;
    Ok(per_axis.pow((params.n * params.d) as u32))
}

/// One Monte Carlo estimate per scale of the schedule, all from the same
/// master seed.
pub fn run_msa_stage(cfg: &StageConfig, params: &ModelParams) -> Result<StageReport> {
    if cfg.trials == 0 {
        return Err(invalid("at least one trial is needed"));
    }
    params.validate()?;
    let schedule = scale_schedule(cfg.schedule, cfg.l0, cfg.steps)?;
    let warnings = schedule.shortfalls(params.n, params.d);
    if !cfg.illustrative && !warnings.is_empty() {
        return Err(Error::Precondition(format!("constants not met outside illustrative mode: {}", warnings.join("; "))));
    }
    for &l in &schedule.scales {
        let dim = matrix_dim(params, l)?;
        if dim > cfg.max_dim {
            return Err(Error::Budget(format!("L = {l} needs dimension {dim} > budget {}", cfg.max_dim)));
        }
    }
    let center = vec![0.0; params.n * params.d];
    let mode = if cfg.illustrative { "illustrative" } else { "full" };
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for &l in &schedule.scales {
        let (event, target) = match cfg.stage {
            Stage::Suitable => (
                EventSpec::Nonsuitable { theta: cfg.theta, energy: cfg.energy, center: center.clone(), side: l },
                l.powf(-cfg.p),
            ),
            Stage::Regular => (
                EventSpec::Nonregular { m: 0.5 * cfg.m0, energy: cfg.energy, center: center.clone(), side: l },
                l.powf(-cfg.p),
            ),
            Stage::Ses => {
                let lg = need_ledger(cfg)?;
                (
                    EventSpec::NonSes { zeta: lg.zeta0, energy: cfg.energy, center: center.clone(), side: l },
                    (-l.powf(lg.zeta1)).exp(),
                )
            }
            Stage::SingleEnergy => {
                let lg = need_ledger(cfg)?;
                (
                    EventSpec::Nonregular { m: 0.5 * cfg.m0, energy: cfg.energy, center: center.clone(), side: l },
                    (-l.powf(lg.zeta2)).exp(),
                )
            }
            Stage::Interval => {
                let lg = need_ledger(cfg)?;
                let interval = cfg.interval.ok_or_else(|| invalid("stage 4-interval needs an interval"))?;
                let b = center.iter().map(|c| c + 2.0 * l).collect();
                (
                    EventSpec::TwoBoxIntervalNonregular {
                        m: cfg.m0,
                        interval,
                        a: center.clone(),
                        b,
                        side: l,
                        grid_step: cfg.grid_step,
                    },
                    (-l.powf(lg.zeta)).exp(),
                )
            }
        };
        let est = estimate_event_probability(&event, params, cfg.trials, cfg.seed)?;
        rows.push(ScaleRow {
            scale: l,
            event: est.event.clone(),
            trials: est.trials,
            estimate: est.estimate,
            ci_lo: est.ci_lo,
            ci_hi: est.ci_hi,
            target_bound: target,
            mode,
        });
        estimates.push(est);
    }
    let nonincreasing = rows.windows(2).all(|w| w[1].ci_lo <= w[0].ci_hi);
    let within_targets = rows.iter().all(|r| r.estimate <= r.target_bound);
    Ok(StageReport {
        stage: cfg.stage.label(),
        illustrative: cfg.illustrative,
        pass: nonincreasing && (cfg.illustrative || within_targets),
        rows,
        estimates,
        warnings,
        nonincreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::InteractionSpec;

    fn cfg(stage: Stage, trials: u64) -> StageConfig {
        StageConfig {
            stage,
            schedule: ScheduleKind::Geometric { y: 2.0 },
            l0: 6.0,
            steps: 2,
            energy: -0.5,
            theta: 1.0,
            p: 1.0,
            m0: 0.2,
            ledger: None,
            interval: None,
            grid_step: 0.05,
            trials,
            seed: 11,
            illustrative: true,
            max_dim: 4000,
        }
    }

    fn params() -> ModelParams {
        ModelParams { mesh: 0.5, interaction: InteractionSpec::none(), ..ModelParams::default() }
    }

    #[test]
    fn zero_trials_and_budget_are_errors() {
        assert!(run_msa_stage(&cfg(Stage::Suitable, 0), &params()).is_err());
        let mut c = cfg(Stage::Suitable, 5);
        c.max_dim = 10;
        assert!(matches!(run_msa_stage(&c, &params()), Err(Error::Budget(_))));
        c.max_dim = 4000;
        c.illustrative = false;
        assert!(matches!(run_msa_stage(&c, &params()), Err(Error::Precondition(_))));
        assert!(run_msa_stage(&cfg(Stage::Ses, 5), &params()).is_err());
    }

    #[test]
    fn stage_one_rows() {
        let rep = run_msa_stage(&cfg(Stage::Suitable, 20), &params()).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert_eq!(rep.rows[1].scale, 12.0);
        assert!(rep.rows.iter().all(|r| r.mode == "illustrative"));
        assert!((rep.rows[0].target_bound - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!("4-interval".parse::<Stage>().unwrap(), Stage::Interval);
        assert!("5".parse::<Stage>().is_err());
    }
}
