//! Exhaustive selection over the `2^p` covariate subsets and the evaluation
//! metrics used to score a selection against the truth.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::covariates::CovariateSet;
use crate::criteria::{criteria, p_star, t2_matrix_on_frame, CriteriaReport, Criterion};
use crate::error::{Error, Result};
use crate::geometry::PointPattern;
use crate::likelihood::{build_quadrature, FitResult, ModelFrame, ModelSpec};
use crate::second_order::{k_inhom_with_values, min_contrast, r_grid, PcfModel, DEFAULT_R_GRID_LEN};
use crate::simulate::{IntensitySpec, ThomasParams};

pub const MAX_COVARIATES: usize = 20;
/// Lattice used for the KL and ISE integrals.
pub const EVAL_GRID: (usize, usize) = (801, 401);

/// All `2^p` models in increasing order of their covariate bitmask.
pub fn enumerate_models(p: usize) -> Result<Vec<ModelSpec>> {
    if p == 0 || p > MAX_COVARIATES {
        return Err(Error::TooManyCovariates(p));
    }
    Ok((0..1u32 << p).map(ModelSpec::from_mask).collect())
}

/// Which pair correlation the criteria assume when scoring each model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcfFitting {
    Poisson,
    Thomas,
}

impl FromStr for PcfFitting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "poisson" => Ok(PcfFitting::Poisson),
            "thomas" => Ok(PcfFitting::Thomas),
            other => Err(Error::Config(format!("unknown pcf fitting `{other}`"))),
        }
    }
}

impl fmt::Display for PcfFitting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PcfFitting::Poisson => "poisson",
            PcfFitting::Thomas => "thomas",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SelectOptions {
    pub pcf_fitting: PcfFitting,
    /// Requested number of dummy points.
    pub m: usize,
    /// Upper limit of the minimum contrast fit.
    pub r_max: f64,
    pub criteria: Vec<Criterion>,
    /// Estimate `(κ, γ)` once from the full model instead of per model.
    pub estimate_once: bool,
}

impl SelectOptions {
    pub fn new(pcf_fitting: PcfFitting, m: usize, r_max: f64) -> Self {
        Self { pcf_fitting, m, r_max, criteria: Criterion::ALL.to_vec(), estimate_once: false }
    }
}

/// One scored candidate.
#[derive(Debug, Clone)]
pub struct ModelOutcome {
    pub fit: FitResult,
    pub report: CriteriaReport,
    pub pcf: PcfModel,
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    /// Successfully scored models in enumeration order.
    pub outcomes: Vec<ModelOutcome>,
    /// Models excluded from selection, with the reason.
    pub failures: Vec<(ModelSpec, String)>,
    /// Index into `outcomes` of the choice under each criterion.
    pub chosen: Vec<(Criterion, usize)>,
}

impl SelectionResult {
    pub fn chosen_outcome(&self, c: Criterion) -> Option<&ModelOutcome> {
        self.chosen.iter().find(|(k, _)| *k == c).map(|(_, i)| &self.outcomes[*i])
    }

    pub fn chosen_model(&self, c: Criterion) -> Option<&ModelSpec> {
        self.chosen_outcome(c).map(|o| &o.report.model)
    }

    pub fn reports(&self) -> impl Iterator<Item = &CriteriaReport> {
        self.outcomes.iter().map(|o| &o.report)
    }

    /// Long-format rows: replicate, model id, model, criterion, value, chosen.
    pub fn write_long_rows<W: Write>(&self, wtr: &mut csv::Writer<W>, replicate: usize) -> Result<()> {
        for (idx, o) in self.outcomes.iter().enumerate() {
            for &(c, chosen_idx) in &self.chosen {
                wtr.write_record([
                    replicate.to_string(),
                    o.report.model.mask().to_string(),
                    o.report.model.to_string(),
                    c.name().to_string(),
                    o.report.value(c).to_string(),
                    u8::from(idx == chosen_idx).to_string(),
                ])?;
            }
        }
        Ok(())
    }

    pub fn long_header() -> [&'static str; 6] {
        ["replicate", "model_id", "model", "criterion", "value", "chosen"]
    }
}

/// Parsimony-first ordering used to break exact ties.
fn tie_key(m: &ModelSpec) -> (usize, &[usize]) {
    (m.dim(), m.subset())
}

/// Index of the minimiser of `c` among `reports`.
pub fn argmin(reports: &[&CriteriaReport], c: Criterion) -> Option<usize> {
    (0..reports.len()).min_by(|&a, &b| {
        let (ra, rb) = (reports[a], reports[b]);
        ra.value(c)
            .total_cmp(&rb.value(c))
            .then_with(|| tie_key(&ra.model).cmp(&tie_key(&rb.model)))
    })
}

/// Fit every candidate model to `pattern`, score it, and choose per criterion.
pub fn select(pattern: &PointPattern, cov: &CovariateSet, opts: &SelectOptions) -> Result<SelectionResult> {
    if pattern.is_empty() {
        return Err(Error::EmptyPattern);
    }
    let models = enumerate_models(cov.len())?;
    let scheme = Arc::new(build_quadrature(pattern, opts.m)?);
    let frame = ModelFrame::new(scheme.clone(), cov)?;
    let n = pattern.len();
    let area = pattern.window().area();
    let m = scheme.m();
    let grid = r_grid(opts.r_max, DEFAULT_R_GRID_LEN);

    let estimate_pcf = |fit: &FitResult| -> Result<PcfModel> {
        // data nodes come first in the scheme
        let eta = frame.linear_predictor(&fit.model, &fit.beta_hat)?;
        let lambda: Vec<f64> = eta[..n].iter().map(|e| e.exp()).collect();
        let kest = k_inhom_with_values(pattern, &lambda, &grid)?;
        Ok(PcfModel::Thomas(min_contrast(&kest, opts.r_max)?))
    };

    let shared_pcf = match (opts.pcf_fitting, opts.estimate_once) {
        (PcfFitting::Thomas, true) => {
            let full = frame.fit(&ModelSpec::full(cov.len()))?;
            Some(estimate_pcf(&full)?)
        }
        _ => None,
    };

    let scored: Vec<Result<ModelOutcome>> = models
        .par_iter()
        .map(|model| {
            let fit = frame.fit(model)?;
            if !fit.converged {
                return Err(Error::OptimFailure(format!("Newton did not converge for {model}")));
            }
            let pcf = match (opts.pcf_fitting, shared_pcf) {
                (PcfFitting::Poisson, _) => PcfModel::Poisson,
                (PcfFitting::Thomas, Some(shared)) => shared,
                (PcfFitting::Thomas, None) => estimate_pcf(&fit)?,
            };
            let ps = match pcf {
                PcfModel::Poisson => model.dim() as f64,
                _ => p_star(&fit, &t2_matrix_on_frame(&frame, &fit, model, &pcf)?)?,
            };
            let report = criteria(&fit, ps, n, area, m);
            Ok(ModelOutcome { fit, report, pcf })
        })
        .collect();

    let mut outcomes = Vec::with_capacity(models.len());
    let mut failures = Vec::new();
    for (model, r) in models.into_iter().zip(scored) {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::warn!("model {model} excluded: {e}");
                failures.push((model, e.to_string()));
            }
        }
    }
    if outcomes.is_empty() {
        return Err(Error::OptimFailure("every candidate model failed".into()));
    }
    let refs: Vec<&CriteriaReport> = outcomes.iter().map(|o| &o.report).collect();
    let chosen = opts
        .criteria
        .iter()
        .map(|&c| (c, argmin(&refs, c).expect("non-empty")))
        .collect();
    Ok(SelectionResult { outcomes, failures, chosen })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub kl: f64,
    pub ise: f64,
}

/// TPR and FPR of a chosen subset against the informative set. A vacuous
/// rate (no informative, or no non-informative, covariates) is 1 for TPR and
/// 0 for FPR.
pub fn selection_rates(chosen: &ModelSpec, informative: &[usize], p: usize) -> (f64, f64) {
    let n_inf = informative.len();
    let n_non = p - n_inf;
    let hits = informative.iter().filter(|j| chosen.contains(**j)).count();
    let false_hits = chosen.subset().iter().filter(|j| !informative.contains(j)).count();
    let tpr = if n_inf == 0 { 1.0 } else { hits as f64 / n_inf as f64 };
    let fpr = if n_non == 0 { 0.0 } else { false_hits as f64 / n_non as f64 };
    (tpr, fpr)
}

/// Covariates evaluated on a fine lattice with trapezoid weights, for
/// integrating functions of the intensity over the window.
#[derive(Debug, Clone)]
pub struct EvalGrid {
    p: usize,
    z: Vec<f64>,
    weights: Vec<f64>,
}

impl EvalGrid {
    pub fn new(cov: &CovariateSet, dims: (usize, usize)) -> Result<Self> {
        let (nx, ny) = dims;
        if nx < 2 || ny < 2 {
            return Err(Error::Dimension(format!("evaluation grid must be at least 2x2, got {nx}x{ny}")));
        }
        let w = cov.window();
        let (dx, dy) = (w.width() / (nx - 1) as f64, w.height() / (ny - 1) as f64);
        let p = cov.len();
        let mut z = vec![0.0; nx * ny * p];
        let mut weights = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = if j == ny - 1 { w.y_max() } else { w.y_min() + j as f64 * dy };
            let wy = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
            for i in 0..nx {
                let x = if i == nx - 1 { w.x_max() } else { w.x_min() + i as f64 * dx };
                let wx = if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
                let k = j * nx + i;
                cov.eval_into(x, y, &mut z[k * p..(k + 1) * p])?;
                weights.push(wx * wy * dx * dy);
            }
        }
        Ok(Self { p, z, weights })
    }

    /// `(KL, ISE)` between `ρ*(u) = ω exp{β·z}` and `ρ̂(u) = exp{b₀ + b·z}`,
    /// where `b` is a full-length coefficient vector.
    pub fn divergences(&self, omega: f64, beta: &[f64], b0: f64, b: &[f64]) -> (f64, f64) {
        let (mut kl, mut ise) = (0.0, 0.0);
        for (row, w) in self.z.chunks(self.p).zip(&self.weights) {
            let log_true = omega.ln() + dot(beta, row);
            let log_fit = b0 + dot(b, row);
            let (rt, rf) = (log_true.exp(), log_fit.exp());
            kl += w * (rt * (log_true - 1.0) - rf * (log_fit - 1.0));
            ise += w * (rt - rf) * (rt - rf);
        }
        (kl, ise)
    }

    pub fn metrics(&self, chosen: &ModelSpec, truth: &IntensitySpec, fitted: &FitResult) -> EvalMetrics {
        let (tpr, fpr) = selection_rates(chosen, &truth.informative_set(), self.p);
        let (kl, ise) = self.divergences(truth.omega(), truth.beta(), fitted.beta_hat[0], &fitted.coefficients(self.p));
        EvalMetrics { tpr, fpr, kl, ise }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn eval_metrics(chosen: &ModelSpec, truth: &IntensitySpec, fitted: &FitResult, cov: &CovariateSet) -> Result<EvalMetrics> {
    Ok(EvalGrid::new(cov, EVAL_GRID)?.metrics(chosen, truth, fitted))
}

/// Thomas parameters of a scored model, if any.
pub fn thomas_params(o: &ModelOutcome) -> Option<ThomasParams> {
    match o.pcf {
        PcfModel::Thomas(tp) => Some(tp),
        PcfModel::Poisson => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::synth_covariates;
    use crate::geometry::Window;
    use crate::simulate::{calibrate_omega, sim_poisson};

    #[test]
    fn enumeration() {
        let one = enumerate_models(1).unwrap();
        assert_eq!(one, vec![ModelSpec::intercept_only(), ModelSpec::new(vec![1]).unwrap()]);
        let six = enumerate_models(6).unwrap();
        assert_eq!(six.len(), 64);
        assert!(six.iter().all(|m| m.dim() == m.subset().len() + 1));
        assert!(matches!(enumerate_models(21), Err(Error::TooManyCovariates(21))));
        assert!(enumerate_models(0).is_err());
    }

    #[test]
    fn rates() {
        let m12 = ModelSpec::new(vec![1, 2]).unwrap();
        assert_eq!(selection_rates(&m12, &[1, 2], 6), (1.0, 0.0));
        let m134 = ModelSpec::new(vec![1, 3, 4]).unwrap();
        assert_eq!(selection_rates(&m134, &[1, 2], 6), (0.5, 0.5));
    }

    #[test]
    fn ties_prefer_parsimony_then_lexicographic() {
        let mk = |sub: Vec<usize>, v: f64| CriteriaReport {
            model: ModelSpec::new(sub).unwrap(),
            loglik: 0.0,
            p_l: 0,
            p_star: 0.0,
            aic: v,
            bic_n: v,
            bic_w: v,
            bic_nm: v,
            cic: v,
            cbic: v,
            pi_values: crate::criteria::PenaltyValues { n: 1.0, area: 1.0, n_plus_m: 1.0 },
        };
        let a = mk(vec![2, 3], 1.0);
        let b = mk(vec![4], 1.0);
        let c = mk(vec![1, 5], 1.0);
        let d = mk(vec![1], 2.0);
        let refs = vec![&a, &b, &c, &d];
        assert_eq!(argmin(&refs, Criterion::Aic), Some(1));
        let refs = vec![&a, &c];
        assert_eq!(argmin(&refs, Criterion::Aic), Some(1));
    }

    fn setup(mu: f64, w: Window) -> (IntensitySpec, Arc<CovariateSet>) {
        let cov = Arc::new(synth_covariates(1, 6, w, (101, 51)).unwrap());
        let spec = IntensitySpec::new(1.0, vec![0.5, -0.25, 0.0, 0.0, 0.0, 0.0], cov.clone()).unwrap();
        (spec.with_omega(calibrate_omega(&spec, mu).unwrap()).unwrap(), cov)
    }

    #[test]
    fn selection_is_deterministic_and_consistent() {
        let w = Window::rect(1000.0, 500.0).unwrap();
        let (spec, cov) = setup(400.0, w);
        let p = sim_poisson(&spec, &w, 9).unwrap();
        let opts = SelectOptions::new(PcfFitting::Poisson, 1600, 20.0);
        let a = select(&p, &cov, &opts).unwrap();
        let b = select(&p, &cov, &opts).unwrap();
        assert_eq!(a.outcomes.len(), 64);
        for c in Criterion::ALL {
            assert_eq!(a.chosen_model(c), b.chosen_model(c));
        }
        // full model has maximal log-likelihood; nested models never beat their supersets
        let full = a.outcomes.iter().map(|o| o.report.loglik).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.outcomes[63].report.loglik, full);
        for o in &a.outcomes {
            for q in &a.outcomes {
                if o.report.model.is_subset_of(&q.report.model) {
                    assert!(q.report.loglik >= o.report.loglik - 1e-9);
                }
            }
            assert_eq!(o.report.cic, o.report.aic);
            assert_eq!(o.report.cbic, o.report.bic_n);
        }
        // penalty ordering: log N > 2 so BIC(N) never picks a larger model than AIC
        let aic = a.chosen_model(Criterion::Aic).unwrap();
        let bic = a.chosen_model(Criterion::BicN).unwrap();
        assert!(bic.dim() <= aic.dim());
    }

    #[test]
    fn small_window_bic_w_picks_full_model() {
        let w = Window::rect(1.0, 0.5).unwrap();
        let (spec, cov) = setup(50.0, w);
        let cov = Arc::new(cov.rescaled(w));
        let spec = IntensitySpec::new(spec.omega(), spec.beta().to_vec(), cov.clone()).unwrap();
        let p = sim_poisson(&spec, &w, 1).unwrap();
        let r = select(&p, &cov, &SelectOptions::new(PcfFitting::Poisson, 200, 0.1)).unwrap();
        assert_eq!(r.chosen_model(Criterion::BicW).unwrap(), &ModelSpec::full(6));
    }

    #[test]
    fn metrics_zero_at_truth() {
        let w = Window::rect(1000.0, 500.0).unwrap();
        let (spec, cov) = setup(400.0, w);
        let p = sim_poisson(&spec, &w, 2).unwrap();
        let mut f = crate::likelihood::fit(&p, &ModelSpec::new(vec![1, 2]).unwrap(), &cov, 1600).unwrap();
        f.beta_hat = vec![spec.omega().ln(), 0.5, -0.25];
        let grid = EvalGrid::new(&cov, (201, 101)).unwrap();
        let m = grid.metrics(&f.model, &spec, &f);
        assert!(m.kl.abs() < 1e-12 && m.ise.abs() < 1e-18);
        assert_eq!((m.tpr, m.fpr), (1.0, 0.0));
    }

    #[test]
    fn ise_matches_flat_closed_form() {
        let w = Window::rect(2.0, 1.0).unwrap();
        let (_, cov) = setup(1.0, w);
        let spec = IntensitySpec::new(3.0, vec![0.0; 6], cov.clone()).unwrap();
        let p = PointPattern::new(vec![(0.5, 0.5), (1.5, 0.5)], w).unwrap();
        let f = crate::likelihood::fit(&p, &ModelSpec::intercept_only(), &cov, 16).unwrap();
        let m = eval_metrics(&ModelSpec::intercept_only(), &spec, &f, &cov).unwrap();
        // ρ̂ = N/|W| = 1 everywhere
        assert!((m.ise - 2.0 * 4.0).abs() < 1e-9);
        let kl = 2.0 * (3.0 * (3f64.ln() - 1.0) - (0.0 - 1.0));
        assert!((m.kl - kl).abs() < 1e-9);
    }

    #[test]
    fn rejects_empty_pattern() {
        let w = Window::rect(1.0, 1.0).unwrap();
        let cov = synth_covariates(1, 2, w, (11, 11)).unwrap();
        let opts = SelectOptions::new(PcfFitting::Poisson, 16, 0.1);
        assert!(matches!(select(&PointPattern::empty(w), &cov, &opts), Err(Error::EmptyPattern)));
    }
}
