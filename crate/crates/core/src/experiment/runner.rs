//! Seeded replication of a scenario: simulate, select, evaluate, aggregate.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Read};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::config::{Process, ScenarioConfig};
use crate::covariates::{load_grid, synth_covariates, CovariateSet};
use crate::criteria::Criterion;
use crate::error::{Error, Result};
use crate::geometry::PointPattern;
use crate::rng::replicate_rng;
use crate::selection::{select, thomas_params, EvalGrid, SelectOptions, SelectionResult, EVAL_GRID};
use crate::simulate::{calibrate_omega, sim_poisson_with, sim_thomas_with, IntensitySpec};

/// Minimum fraction of replicates that must succeed for a study to count.
pub const MIN_SUCCESS_RATE: f64 = 0.9;

/// Outcome of one criterion on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub n_points: usize,
    pub criterion: Criterion,
    pub model_id: u32,
    pub p_l: usize,
    pub p_star: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub kl: f64,
    pub ise: f64,
    /// Cluster parameters used for the chosen model, if any.
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
}

const RECORD_HEADER: [&str; 12] =
    ["replicate", "n_points", "criterion", "model_id", "p_l", "p_star", "tpr", "fpr", "kl", "ise", "kappa", "gamma"];

impl ReplicateRecord {
    fn to_record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.replicate.to_string(),
            self.n_points.to_string(),
            self.criterion.name().to_string(),
            self.model_id.to_string(),
            self.p_l.to_string(),
            self.p_star.to_string(),
            self.tpr.to_string(),
            self.fpr.to_string(),
            self.kl.to_string(),
            self.ise.to_string(),
            opt(self.kappa),
            opt(self.gamma),
        ]
    }

    fn from_record(r: &csv::StringRecord) -> Result<Self> {
        if r.len() != RECORD_HEADER.len() {
            return Err(Error::Parse(format!("expected {} fields, got {}", RECORD_HEADER.len(), r.len())));
        }
        fn f<T: std::str::FromStr>(s: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse(format!("bad field `{s}`")))
        }
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { f(s).map(Some) };
        Ok(Self {
            replicate: f(&r[0])?,
            n_points: f(&r[1])?,
            criterion: r[2].parse().map_err(|_| Error::Parse(format!("bad criterion `{}`", &r[2])))?,
            model_id: f(&r[3])?,
            p_l: f(&r[4])?,
            p_star: f(&r[5])?,
            tpr: f(&r[6])?,
            fpr: f(&r[7])?,
            kl: f(&r[8])?,
            ise: f(&r[9])?,
            kappa: opt(&r[10])?,
            gamma: opt(&r[11])?,
        })
    }
}

/// Table-style aggregate for one criterion. Rates are in percent; MISE and
/// MKL are raw means.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionSummary {
    pub criterion: Criterion,
    pub tpr: f64,
    pub fpr: f64,
    pub mise: f64,
    pub mkl: f64,
    pub mean_p_star: f64,
    pub sd_p_star: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone)]
pub struct StudySummary {
    pub name: String,
    pub rows: Vec<CriterionSummary>,
    pub replicates: usize,
    pub failed: usize,
    /// Wall-clock time; reported on screen only, never written to disk.
    pub runtime: Duration,
    /// Whether p̂* was estimated (clustered fitting) and should be displayed.
    pub clustered: bool,
}

impl StudySummary {
    pub fn row(&self, c: Criterion) -> Option<&CriterionSummary> {
        self.rows.iter().find(|r| r.criterion == c)
    }

    /// Plain-text table with criteria as columns.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}: {} replicates ({} failed), {:.1}s",
            self.name,
            self.replicates,
            self.failed,
            self.runtime.as_secs_f64()
        );
        let _ = write!(s, "{:<14}", "");
        for r in &self.rows {
            let _ = write!(s, "{:>12}", r.criterion.label());
        }
        s.push('\n');
        let mut line = |label: &str, f: &dyn Fn(&CriterionSummary) -> String| {
            let _ = write!(s, "{label:<14}");
            for r in &self.rows {
                let _ = write!(s, "{:>12}", f(r));
            }
            s.push('\n');
        };
        line("TPR (%)", &|r| format!("{:.1}", r.tpr));
        line("FPR (%)", &|r| format!("{:.1}", r.fpr));
        line("MISE", &|r| format!("{:.4e}", r.mise));
        line("MKL", &|r| format!("{:.4e}", r.mkl));
        if self.clustered {
            line("Mean(p*)", &|r| if r.criterion.uses_p_star() { format!("{:.1}", r.mean_p_star) } else { "-".into() });
            line("SD(p*)", &|r| if r.criterion.uses_p_star() { format!("{:.1}", r.sd_p_star) } else { "-".into() });
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["criterion", "tpr_pct", "fpr_pct", "mise", "mkl", "mean_p_star", "sd_p_star", "replicates"])?;
        for r in &self.rows {
            w.write_record([
                r.criterion.name().to_string(),
                r.tpr.to_string(),
                r.fpr.to_string(),
                r.mise.to_string(),
                r.mkl.to_string(),
                r.mean_p_star.to_string(),
                r.sd_p_star.to_string(),
                r.replicates.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Aggregate per-replicate records. Records are ordered by replicate before
/// summing so the result does not depend on input order.
pub fn summarize(records: &[ReplicateRecord], criteria: &[Criterion]) -> Vec<CriterionSummary> {
    criteria
        .iter()
        .map(|&c| {
            let mut rs: Vec<&ReplicateRecord> = records.iter().filter(|r| r.criterion == c).collect();
            rs.sort_by_key(|r| r.replicate);
            let col = |f: fn(&ReplicateRecord) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let p_star = col(|r| r.p_star);
            CriterionSummary {
                criterion: c,
                tpr: 100.0 * mean(&col(|r| r.tpr)),
                fpr: 100.0 * mean(&col(|r| r.fpr)),
                mise: mean(&col(|r| r.ise)),
                mkl: mean(&col(|r| r.kl)),
                mean_p_star: mean(&p_star),
                sd_p_star: sample_sd(&p_star),
                replicates: rs.len(),
            }
        })
        .collect()
}

pub fn read_replicates<R: Read>(input: R) -> Result<Vec<ReplicateRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(RECORD_HEADER.iter().copied()) {
        return Err(Error::Parse("unexpected replicates.csv header".into()));
    }
    rdr.records().map(|r| ReplicateRecord::from_record(&r?)).collect()
}

/// Recompute the summary rows from a `replicates.csv` written by a run.
pub fn resummarize(path: impl AsRef<Path>, criteria: &[Criterion]) -> Result<Vec<CriterionSummary>> {
    Ok(summarize(&read_replicates(File::open(path)?)?, criteria))
}

/// The covariates a scenario uses: the configured rasters, standardized, or
/// seeded synthetic fields with one per coefficient.
pub fn scenario_covariates(cfg: &ScenarioConfig) -> Result<CovariateSet> {
    if cfg.covariate_files.is_empty() {
        synth_covariates(cfg.covariate_seed, cfg.beta.len(), cfg.window, cfg.covariate_grid)
    } else {
        let fields = cfg.covariate_files.iter().map(|f| load_grid(f, cfg.window)).collect::<Result<Vec<_>>>()?;
        CovariateSet::new(fields)?.standardize()
    }
}

/// True intensity of a scenario with `ω` calibrated to the target mean.
pub fn scenario_intensity(cfg: &ScenarioConfig, cov: Arc<CovariateSet>) -> Result<IntensitySpec> {
    let spec = IntensitySpec::new(1.0, cfg.beta.clone(), cov)?;
    let omega = calibrate_omega(&spec, cfg.mu)?;
    spec.with_omega(omega)
}

/// Simulate the pattern of replicate `index`.
pub fn simulate_replicate(cfg: &ScenarioConfig, spec: &IntensitySpec, index: usize) -> Result<PointPattern> {
    let mut rng = replicate_rng(cfg.master_seed, index as u64);
    match cfg.process {
        Process::Poisson => sim_poisson_with(spec, &cfg.window, &mut rng),
        Process::Thomas => {
            let tp = cfg.thomas.ok_or_else(|| Error::Config("thomas process requires kappa and gamma".into()))?;
            sim_thomas_with(spec, tp, &cfg.window, &mut rng)
        }
    }
}

struct ReplicateOutput {
    pattern: PointPattern,
    selection: SelectionResult,
    records: Vec<ReplicateRecord>,
}

fn run_replicate(
    cfg: &ScenarioConfig,
    spec: &IntensitySpec,
    cov: &CovariateSet,
    grid: &EvalGrid,
    opts: &SelectOptions,
    index: usize,
) -> Result<ReplicateOutput> {
    let pattern = simulate_replicate(cfg, spec, index)?;
    let selection = select(&pattern, cov, opts)?;
    let n_failed = selection.failures.len();
    let n_models = selection.outcomes.len() + n_failed;
    // the full model must dominate every nested model in log-likelihood
    if let Some(full) = selection.outcomes.iter().find(|o| o.report.model.dim() == cov.len() + 1) {
        let best = selection.reports().map(|r| r.loglik).fold(f64::NEG_INFINITY, f64::max);
        if full.report.loglik < best - 1e-6 * best.abs().max(1.0) {
            log::warn!("replicate {index}: full model log-likelihood is not maximal");
        }
    }
    if n_failed > 0 {
        log::warn!("replicate {index}: {n_failed} of {n_models} models excluded");
    }
    let records = cfg
        .criteria
        .iter()
        .map(|&c| {
            let o = selection.chosen_outcome(c).expect("every criterion has a choice");
            let m = grid.metrics(&o.report.model, spec, &o.fit);
            let tp = thomas_params(o);
            ReplicateRecord {
                replicate: index,
                n_points: pattern.len(),
                criterion: c,
                model_id: o.report.model.mask(),
                p_l: o.report.p_l,
                p_star: o.report.p_star,
                tpr: m.tpr,
                fpr: m.fpr,
                kl: m.kl,
                ise: m.ise,
                kappa: tp.map(|t| t.kappa),
                gamma: tp.map(|t| t.gamma),
            }
        })
        .collect();
    Ok(ReplicateOutput { pattern, selection, records })
}

/// Run every replicate of `cfg`. When `out_dir` is given the long-format
/// selection table, per-replicate metrics, the summary and (optionally) the
/// simulated patterns are written there; all files are deterministic.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: Option<&Path>) -> Result<StudySummary> {
    cfg.validate()?;
    let start = Instant::now();
    let cov = Arc::new(scenario_covariates(cfg)?);
    let spec = scenario_intensity(cfg, cov.clone())?;
    let grid = EvalGrid::new(&cov, EVAL_GRID)?;
    let mut opts = SelectOptions::new(cfg.pcf_fitting, cfg.dummy_count(), cfg.r_max);
    opts.criteria = cfg.criteria.clone();
    opts.estimate_once = cfg.estimate_once;
    log::info!(
        "{}: omega = {:.6e}, m = {}, {} replicates",
        cfg.name,
        spec.omega(),
        opts.m,
        cfg.replicates
    );

    let outputs: Vec<Result<ReplicateOutput>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| {
            let r = run_replicate(cfg, &spec, &cov, &grid, &opts, i);
            match &r {
                Ok(o) => log::debug!("replicate {i}: {} points", o.pattern.len()),
                Err(e) => log::warn!("replicate {i} failed: {e}"),
            }
            r
        })
        .collect();

    let failed = outputs.iter().filter(|o| o.is_err()).count();
    let succeeded = cfg.replicates - failed;
    if (succeeded as f64) < MIN_SUCCESS_RATE * cfg.replicates as f64 {
        let first = outputs.iter().find_map(|o| o.as_ref().err()).map(|e| e.to_string()).unwrap_or_default();
        return Err(Error::OptimFailure(format!(
            "only {succeeded} of {} replicates succeeded (first error: {first})",
            cfg.replicates
        )));
    }

    let records: Vec<ReplicateRecord> = outputs.iter().flatten().flat_map(|o| o.records.iter().cloned()).collect();
    let summary = StudySummary {
        name: cfg.name.clone(),
        rows: summarize(&records, &cfg.criteria),
        replicates: succeeded,
        failed,
        runtime: start.elapsed(),
        clustered: cfg.pcf_fitting == crate::selection::PcfFitting::Thomas,
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.cfg"), cfg.to_text())?;
        let mut long = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("selection_long.csv"))?));
        long.write_record(SelectionResult::long_header())?;
        let mut reps = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("replicates.csv"))?));
        reps.write_record(RECORD_HEADER)?;
        if cfg.write_patterns {
            fs::create_dir_all(dir.join("patterns"))?;
        }
        let width = (cfg.replicates.max(2) - 1).to_string().len().max(4);
        for (i, o) in outputs.iter().enumerate() {
            let Ok(o) = o else { continue };
            o.selection.write_long_rows(&mut long, i)?;
            for r in &o.records {
                reps.write_record(r.to_record())?;
            }
            if cfg.write_patterns {
                let path = dir.join("patterns").join(format!("replicate_{i:0width$}.csv"));
                o.pattern.write_csv(BufWriter::new(File::create(path)?))?;
            }
        }
        long.flush()?;
        reps.flush()?;
        summary.write_csv(&dir.join("summary.csv"))?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        ScenarioConfig::parse(
            "name = tiny\nwindow = 200, 100\nmu = 120\nbeta = 0.5, -0.25, 0\nreplicates = 6\nm = 4x\n\
             covariate_grid = 41, 21\nwrite_patterns = true\n",
        )
        .unwrap()
    }

    #[test]
    fn deterministic_outputs_and_reaggregation() {
        let cfg = tiny();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = run_scenario(&cfg, Some(a.path())).unwrap();
        run_scenario(&cfg, Some(b.path())).unwrap();
        for f in ["selection_long.csv", "replicates.csv", "summary.csv", "config.cfg", "patterns/replicate_0003.csv"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let again = resummarize(a.path().join("replicates.csv"), &cfg.criteria).unwrap();
        assert_eq!(again, sa.rows);
        for r in &sa.rows {
            assert!((0.0..=100.0).contains(&r.tpr) && (0.0..=100.0).contains(&r.fpr));
            assert!(r.mise >= 0.0);
            assert_eq!(r.replicates, 6);
        }
    }

    #[test]
    fn more_replicates_extend_earlier_rows() {
        let mut cfg = tiny();
        cfg.write_patterns = false;
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_scenario(&cfg, Some(a.path())).unwrap();
        cfg.replicates = 8;
        run_scenario(&cfg, Some(b.path())).unwrap();
        let short = fs::read_to_string(a.path().join("replicates.csv")).unwrap();
        let long = fs::read_to_string(b.path().join("replicates.csv")).unwrap();
        assert!(long.starts_with(&short));
    }

    #[test]
    fn summary_statistics() {
        let rec = |i: usize, tpr: f64, p_star: f64| ReplicateRecord {
            replicate: i,
            n_points: 10,
            criterion: Criterion::Cic,
            model_id: 3,
            p_l: 3,
            p_star,
            tpr,
            fpr: 0.0,
            kl: 1.0,
            ise: 2.0,
            kappa: None,
            gamma: None,
        };
        let rows = summarize(&[rec(1, 0.5, 4.0), rec(0, 1.0, 2.0)], &[Criterion::Cic]);
        assert_eq!(rows[0].tpr, 75.0);
        assert_eq!(rows[0].mean_p_star, 3.0);
        assert!((rows[0].sd_p_star - 2f64.sqrt()).abs() < 1e-15);
    }
}
