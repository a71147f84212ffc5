//! Configuration and orchestration of the command-line experiments. Each run
//! writes `<experiment>.jsonl` records and a `<experiment>.csv` table into
//! the output directory.

mod config;

pub use config::{
    parse_config, parse_config_str, ClassifySection, CoverSection, InitialStepSection, LemmaCheckSection, LemmaEntry,
    MsaSection, RunConfig, TwoVolumeSection, WegnerSection,
};

use crate::classify::{classify_pi_combination, goodbox_implications, BlockTable};
use crate::disorder::{sample_disorder, SiteBox};
use crate::error::{Error, Result};
use crate::geometry::laws::cover_law_sweep;
use crate::geometry::NRectangle;
use crate::msa::{
    run_msa_stage, two_volume_spacing_estimate, verify_deterministic_lemma, verify_initial_step, wegner_scaling,
    wegner_trace_estimate, BoxSpec, InitialStepOptions, LemmaSpec, LemmaStatus, StageConfig, WegnerOptions,
    WegnerReport,
};
use crate::operator::{assemble, FiniteVolumeOperator, ModelParams};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::PathBuf;

pub const OUT_DIR_ENV: &str = "MSALAB_OUT_DIR";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Cover,
    Classify,
    Wegner,
    TwoVolume,
    InitialStep,
    LemmaCheck,
    Msa,
    DumpMatrix,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cover => "cover",
            Self::Classify => "classify",
            Self::Wegner => "wegner",
            Self::TwoVolume => "two-volume",
            Self::InitialStep => "initial-step",
            Self::LemmaCheck => "lemma-check",
            Self::Msa => "msa",
            Self::DumpMatrix => "dump-matrix",
        }
    }

    fn statistical(&self) -> bool {
        matches!(self, Self::Wegner | Self::TwoVolume | Self::InitialStep | Self::Msa)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub illustrative: bool,
}

impl RunConfig {
    /// Command-line values win over the environment, which wins over the file.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(dir) = &o.out_dir {
            self.out_dir = dir.clone();
        } else if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
            self.out_dir = PathBuf::from(dir);
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunOutcome {
    pub experiment: &'static str,
    pub passed: bool,
    pub failures: Vec<String>,
    pub jsonl: PathBuf,
    pub csv: PathBuf,
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Default)]
struct Output {
    records: Vec<Value>,
    failures: Vec<String>,
}

macro_rules! row {
    ($($v:expr),* $(,)?) => { vec![$($v.to_string()),*] };
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| Error::Config(vec![format!("missing section [{name}]")]))
}

fn check_dim(params: &ModelParams, side: f64, budget: usize) -> Result<()> {
    let dim = params.interior_nodes(side)?.pow((params.n * params.d) as u32);
    if dim > budget {
        return Err(Error::Budget(format!("side {side} needs dimension {dim} > budget {budget}")));
    }
    Ok(())
}

fn sampled_operator(cfg: &RunConfig, params: &ModelParams, spec: &BoxSpec) -> Result<FiniteVolumeOperator> {
    check_dim(params, spec.side, cfg.memory_budget)?;
    let rect = spec.rect(params.d)?;
    let field = sample_disorder(&SiteBox::covering(&[&rect])?, &params.distribution, cfg.seed)?;
    assemble(&rect, &field, params)
}

/// Runs `exp` and writes its artifacts. On a compute error the records
/// gathered so far are written with an abort marker before the error is
/// returned.
pub fn run(cfg: &RunConfig, exp: Experiment, illustrative: bool) -> Result<RunOutcome> {
    if exp.statistical() && cfg.trials == 0 {
        return Err(Error::Config(vec!["trials must be positive for a statistical experiment".into()]));
    }
    let mut out = Output::default();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let result = pool.install(|| dispatch(cfg, exp, illustrative, &mut out));
    std::fs::create_dir_all(&cfg.out_dir)?;
    let jsonl = cfg.out_dir.join(format!("{}.jsonl", exp.name()));
    let csv_path = cfg.out_dir.join(format!("{}.csv", exp.name()));
    let digest = cfg.digest();
    let envelope = |record: &Value| {
        json!({
            "experiment": exp.name(),
            "config_digest": digest,
            "seed": cfg.seed,
            "version": VERSION,
            "record": record,
        })
    };
    let mut lines = String::new();
    for r in &out.records {
        lines.push_str(&envelope(r).to_string());
        lines.push('\n');
    }
    let table = match result {
        Ok(t) => t,
        Err(e) => {
            lines.push_str(&envelope(&json!({ "aborted": true, "partial": true, "error": e.to_string() })).to_string());
            lines.push('\n');
            std::fs::write(&jsonl, lines)?;
            return Err(e);
        }
    };
    std::fs::write(&jsonl, lines)?;
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_error)?;
    let mut header = vec!["config_digest", "seed"];
    header.extend(&table.header);
    w.write_record(&header).map_err(csv_error)?;
    for row in &table.rows {
        let mut full = vec![digest.clone(), cfg.seed.to_string()];
        full.extend(row.iter().cloned());
        w.write_record(&full).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(RunOutcome { experiment: exp.name(), passed: out.failures.is_empty(), failures: out.failures, jsonl, csv: csv_path })
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn dispatch(cfg: &RunConfig, exp: Experiment, illustrative: bool, out: &mut Output) -> Result<Table> {
    match exp {
        Experiment::Cover => cover(cfg, out),
        Experiment::Classify => classify(cfg, out),
        Experiment::Wegner => wegner(cfg, out),
        Experiment::TwoVolume => two_volume(cfg, out),
        Experiment::InitialStep => initial_step(cfg, out),
        Experiment::LemmaCheck => lemma_check(cfg, out),
        Experiment::Msa => msa(cfg, illustrative, out),
        Experiment::DumpMatrix => dump_matrix(cfg, out),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn cover(cfg: &RunConfig, out: &mut Output) -> Result<Table> {
    let sec = cfg.cover.clone().unwrap_or(CoverSection { instances: 200, max_axes: 3 });
    let mut t = Table::new(&[
        "index", "n", "d", "side", "ell", "alpha_index", "cells", "alpha", "nesting", "number", "free", "boundary",
        "lattice", "probes",
    ]);
    for r in cover_law_sweep(sec.instances, sec.max_axes, cfg.seed)? {
        let p = &r.report;
        if !p.all_hold() {
            out.failures.push(format!("instance {}: {}", r.index, p.failures.join("; ")));
        }
        t.push(row![
            r.index, r.n, r.d, r.side, r.ell, p.alpha_index, p.cells, p.alpha_admissible, p.nesting, p.number,
            p.free_guarantee, p.boundary_cover, p.lattice_cover, p.probes
        ]);
        out.records.push(to_value(&r));
    }
    Ok(t)
}

fn classify(cfg: &RunConfig, out: &mut Output) -> Result<Table> {
    let sec = section(&cfg.classify, "classify")?;
    let params = cfg.model.with_particles(sec.center.len() / cfg.model.d);
    let op = sampled_operator(cfg, &params, &BoxSpec { center: sec.center.clone(), side: sec.side })?;
    let mut t = Table::new(&[
        "energy", "resonant", "suitable", "suitable_margin", "ses", "ses_margin", "regular", "regular_margin",
        "goodbox_all_hold",
    ]);
    for &e in &sec.energies {
        let table = BlockTable::new(&op, e)?;
        let (s, z, r) = (table.suitable(sec.theta), table.ses(sec.zeta), table.regular(sec.m));
        let good = goodbox_implications(&table, sec.theta, sec.m, sec.zeta)?;
        if !good.all_hold {
            out.failures.push(format!("goodbox implication failed at E = {e}"));
        }
        t.push(row![
            e,
            table.resonance.is_some(),
            s.outcome,
            s.margin,
            z.outcome,
            z.margin,
            r.outcome,
            r.margin,
            good.all_hold
        ]);
        let mut rec = json!({ "energy": e, "suitable": s, "ses": z, "regular": r, "goodbox": good });
        if let (Some(mode), Some(e_n)) = (sec.combination, sec.e_n) {
            match classify_pi_combination(&op, e, mode, e_n) {
                Ok(pi) => {
                    if !pi.implication_holds && pi.notes.is_empty() {
                        out.failures.push(format!("combination implication failed at E = {e}"));
                    }
                    rec["combination"] = to_value(&pi);
                }
                Err(Error::NotPartiallyInteractive) => rec["combination"] = json!("not partially interactive"),
                Err(err) => return Err(err),
            }
        }
        out.records.push(rec);
    }
    Ok(t)
}

fn wegner_row(t: &mut Table, variant: &str, r: &WegnerReport) {
    t.push(row![
        variant,
        r.interval[0],
        r.interval[1],
        r.side,
        r.face,
        r.face_average.mean,
        r.face_average.std_err,
        r.full_average.mean,
        r.full_average.std_err,
        r.per_volume,
        r.averages_agree
    ]);
}

fn wegner(cfg: &RunConfig, out: &mut Output) -> Result<Table> {
    let sec = section(&cfg.wegner, "wegner")?;
    let params = cfg.model.with_particles(sec.center.len() / cfg.model.d);
    let spec = BoxSpec { center: sec.center.clone(), side: sec.side };
    check_dim(&params, if sec.scaling { 2.0 * sec.side } else { sec.side }, cfg.memory_budget)?;
    let rect = spec.rect(params.d)?;
    let opts = WegnerOptions {
        interval: sec.interval,
        face: sec.face,
        e_plus: sec.e_plus,
        m_d: sec.m_d,
        trials: cfg.trials,
        seed: cfg.seed,
        batch: sec.batch,
    };
    let mut t = Table::new(&[
        "variant", "lo", "hi", "side", "face", "face_mean", "face_se", "full_mean", "full_se", "per_volume", "agree",
    ]);
    let reports = if sec.scaling {
        let s = wegner_scaling(&rect, &params, &opts, sec.width_tolerance, sec.side_tolerance)?;
        if !s.width_ok {
            out.failures.push(format!("doubling |I| gave ratio {:.3} ± {:.3}", s.width_ratio.value, s.width_ratio.std_err));
        }
        if !s.side_ok {
            out.failures.push(format!("doubling L gave ratio {:.3} ± {:.3}", s.side_ratio.value, s.side_ratio.std_err));
        }
        out.records.push(json!({ "width_ratio": s.width_ratio, "side_ratio": s.side_ratio }));
        vec![("base", s.base), ("doubled_width", s.doubled_width), ("doubled_side", s.doubled_side)]
    } else {
        vec![("base", wegner_trace_estimate(&rect, &params, &opts)?)]
    };
    for (name, r) in reports {
        if !r.averages_agree {
            out.failures.push(format!("{name}: face and full averages disagree"));
        }
        wegner_row(&mut t, name, &r);
        out.records.push(json!({ "variant": name, "report": r }));
    }
    Ok(t)
}

fn two_volume(cfg: &RunConfig, out: &mut Output) -> Result<Table> {
    let sec = section(&cfg.two_volume, "two-volume")?;
    let params = cfg.model.with_particles(sec.first.center.len() / cfg.model.d);
    check_dim(&params, sec.first.side.max(sec.second.side), cfg.memory_budget)?;
    let (r1, r2) = (sec.first.rect(params.d)?, sec.second.rect(params.d)?);
    let mut eps = sec.eps.clone();
    eps.sort_by(f64::total_cmp);
    let mut t = Table::new(&["eps", "trials", "successes", "estimate", "ci_lo", "ci_hi", "ratio_to_bound"]);
    let mut last = 0;
    for e in eps {
        let r = two_volume_spacing_estimate(&r1, &r2, &params, sec.e_plus, e, sec.m_d, cfg.trials, cfg.seed)?;
        let est = &r.estimate;
        if est.successes < last {
            out.failures.push(format!("estimate decreased at ε = {e}"));
        }
        last = est.successes;
        let ratio = r.ratio_to_bound.map(|v| v.to_string()).unwrap_or_default();
        t.push(row![e, est.trials, est.successes, est.estimate, est.ci_lo, est.ci_hi, ratio]);
        out.records.push(to_value(&r));
    }
    Ok(t)
}

fn initial_step(cfg: &RunConfig, out: &mut Output) -> Result<Table> {
    let sec = section(&cfg.initial_step, "initial-step")?;
    check_dim(&cfg.model, sec.side, cfg.memory_budget)?;
    let opts = InitialStepOptions {
        side: sec.side,
        p0: sec.p0,
        eps: sec.eps,
        theta: sec.theta,
        min_side: sec.min_side,
        trials: cfg.trials,
        seed: cfg.seed,
    };
    let r = verify_initial_step(&cfg.model, &opts)?;
    if !r.pass {
        out.failures.push(format!("ci_hi {:.4} exceeds p0 = {}", r.union.ci_hi, r.p0));
    }
    let mut t = Table::new(&["energy", "trials", "successes", "estimate", "ci_lo", "ci_hi", "p0"]);
    for (e, est) in r.energies.iter().zip(&r.per_energy) {
        t.push(row![e, est.trials, est.successes, est.estimate, est.ci_lo, est.ci_hi, r.p0]);
    }
    let u = &r.union;
    t.push(row!["union", u.trials, u.successes, u.estimate, u.ci_lo, u.ci_hi, r.p0]);
    out.records.push(to_value(&r));
    Ok(t)
}

/// Seed of draw `k` of lemma instance `i`.
fn lemma_seed(seed: u64, i: usize, k: u64) -> u64 {
    seed ^ ((i as u64) << 32) ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn lemma_check(cfg: &RunConfig, out: &mut Output) -> Result<Table> {
    let sec = section(&cfg.lemma_check, "lemma-check")?;
    let mut t = Table::new(&["instance", "draw", "kind", "status", "cells", "above_min", "margin"]);
    for (i, entry) in sec.instances.iter().enumerate() {
        let params = entry.n.map(|n| cfg.model.with_particles(n)).unwrap_or_else(|| cfg.model.clone());
        let spec = LemmaSpec { params, amplitude: entry.amplitude, instance: entry.instance.clone() };
        let draws = if entry.amplitude.is_some() { 1 } else { sec.sweep };
        for k in 0..draws {
            let r = verify_deterministic_lemma(&spec, lemma_seed(cfg.seed, i, k))?;
            if r.status == LemmaStatus::Violated && r.above_min {
                out.failures.push(format!("instance {i} draw {k}: {} violated", r.kind));
            }
            let margin = r.conclusion.as_ref().map(|v| v.margin.to_string()).unwrap_or_default();
            t.push(row![i, k, r.kind, to_value(&r.status).as_str().unwrap_or(""), r.cells, r.above_min, margin]);
            out.records.push(json!({ "instance": i, "draw": k, "report": r }));
        }
    }
    Ok(t)
}

fn msa(cfg: &RunConfig, illustrative: bool, out: &mut Output) -> Result<Table> {
    let sec = section(&cfg.msa, "msa")?;
    let stage = StageConfig {
        stage: sec.stage,
        schedule: sec.schedule,
        l0: sec.l0,
        steps: sec.steps,
        energy: sec.energy,
        theta: sec.theta,
        p: sec.p,
        m0: sec.m0,
        ledger: cfg.ledger.clone(),
        interval: sec.interval,
        grid_step: sec.grid_step,
        trials: cfg.trials,
        seed: cfg.seed,
        illustrative,
        max_dim: cfg.memory_budget,
    };
    let r = run_msa_stage(&stage, &cfg.model)?;
    if !r.pass {
        out.failures.push(if r.nonincreasing {
            "estimates exceed their target bounds".into()
        } else {
            "estimates increase across scales".into()
        });
    }
    let mut t =
        Table::new(&["scale", "event", "trials", "estimate", "ci_lo", "ci_hi", "target_bound", "mode"]);
    for row in &r.rows {
        t.push(row![row.scale, row.event, row.trials, row.estimate, row.ci_lo, row.ci_hi, row.target_bound, row.mode]);
    }
    out.records.push(to_value(&r));
    Ok(t)
}

fn dump_matrix(cfg: &RunConfig, out: &mut Output) -> Result<Table> {
    let spec = section(&cfg.dump_matrix, "dump-matrix")?;
    let params = cfg.model.with_particles(spec.center.len() / cfg.model.d);
    let op = sampled_operator(cfg, &params, spec)?;
    let m = op.matrix();
    let mut t = Table::new(&["row", "col", "value"]);
    for i in 0..m.dim {
        for (j, v) in m.row(i) {
            t.push(row![i, j, format!("{v:?}")]);
        }
    }
    let rect: &NRectangle = op.rect();
    out.records.push(json!({
        "dim": op.dim(),
        "nnz": m.nnz(),
        "band": op.band(),
        "sides": rect.sides(),
        "provenance": op.provenance(),
    }));
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str, dir: &std::path::Path) -> RunConfig {
        let text = format!("seed = 3\ntrials = 20\nout_dir = {:?}\n[model]\nd = 1\nn = 1\nmesh = 0.5\n{extra}", dir);
        parse_config_str(&text).unwrap()
    }

    #[test]
    fn cover_experiment_passes_and_repeats() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config("[cover]\ninstances = 15\n", dir.path());
        let a = run(&cfg, Experiment::Cover, false).unwrap();
        assert!(a.passed, "{:?}", a.failures);
        let first = std::fs::read(&a.csv).unwrap();
        run(&cfg, Experiment::Cover, false).unwrap();
        assert_eq!(first, std::fs::read(&a.csv).unwrap());
        assert_eq!(std::fs::read_to_string(&a.csv).unwrap().lines().count(), 16);
    }

    #[test]
    fn zero_trials_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(
            "[initial-step]\nside = 12.0\np0 = 0.1\neps = 1.0\ntheta = 1.0\n",
            dir.path(),
        );
        cfg.trials = 0;
        assert!(matches!(run(&cfg, Experiment::InitialStep, false), Err(Error::Config(_))));
        assert!(matches!(run(&cfg, Experiment::Wegner, false), Err(Error::Config(_))));
    }

    #[test]
    fn missing_section_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config("", dir.path());
        assert!(matches!(run(&cfg, Experiment::Classify, false), Err(Error::Config(_))));
    }

    #[test]
    fn budget_abort_leaves_marker() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config("[dump-matrix]\ncenter = [0.0]\nside = 12.0\n", dir.path());
        cfg.memory_budget = 5;
        assert!(matches!(run(&cfg, Experiment::DumpMatrix, false), Err(Error::Budget(_))));
        let text = std::fs::read_to_string(dir.path().join("dump-matrix.jsonl")).unwrap();
        assert!(text.contains("\"aborted\":true"));
    }
}
