//! Self-checks runnable from the command line: each suite compares a library
//! computation against an independent slow evaluation.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::covariates::{synth_covariates, CovariateSet};
use crate::criteria::{evidence_1d, t2_matrix};
use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};
use crate::likelihood::{build_quadrature, fit, ModelFrame, ModelSpec};
use crate::rng::{replicate_rng, seeded_rng};
use crate::second_order::PcfModel;
use crate::simulate::{calibrate_omega, sim_poisson_with, sim_thomas_with, IntensitySpec, ThomasParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gradient,
    Campbell,
    Evidence,
    T2,
    All,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gradient" => Ok(Suite::Gradient),
            "campbell" => Ok(Suite::Campbell),
            "evidence" => Ok(Suite::Evidence),
            "t2" => Ok(Suite::T2),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!("unknown check suite `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.to_string(), passed, detail }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(match suite {
        Suite::Gradient => vec![gradient(seed)?],
        Suite::Campbell => campbell(seed)?,
        Suite::Evidence => vec![evidence(seed)?],
        Suite::T2 => vec![t2(seed)?],
        Suite::All => {
            let mut v = vec![gradient(seed)?];
            v.extend(campbell(seed)?);
            v.push(evidence(seed)?);
            v.push(t2(seed)?);
            v
        }
    })
}

fn small_setup(seed: u64, p: usize, mu: f64, beta: Vec<f64>) -> Result<(IntensitySpec, Arc<CovariateSet>, Window)> {
    let w = Window::rect(100.0, 50.0)?;
    let cov = Arc::new(synth_covariates(seed, p, w, (41, 21))?);
    let spec = IntensitySpec::new(1.0, beta, cov.clone())?;
    let spec = spec.with_omega(calibrate_omega(&spec, mu)?)?;
    Ok((spec, cov, w))
}

/// Analytic score and sensitivity against central differences on random
/// (pattern, model, β) triples; relative error below 1e-6.
pub fn gradient(seed: u64) -> Result<CheckOutcome> {
    let (spec, cov, w) = small_setup(seed, 3, 150.0, vec![0.4, -0.3, 0.2])?;
    let mut worst = 0.0f64;
    for t in 0..50u64 {
        let mut rng = replicate_rng(seed, t);
        let pattern = sim_poisson_with(&spec, &w, &mut rng)?;
        if pattern.is_empty() {
            continue;
        }
        let model = ModelSpec::from_mask(rng.random_range(0..8));
        let frame = ModelFrame::new(Arc::new(build_quadrature(&pattern, 300)?), &cov)?;
        let d = model.dim();
        let mut beta: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        beta[0] += (pattern.len() as f64 / w.area()).ln();
        let ev = frame.evaluate(&model, &beta)?;
        let h = 1e-5;
        let scale_s = ev.score.amax().max(1.0);
        let scale_h = ev.sensitivity.amax().max(1.0);
        for k in 0..d {
            let mut bp = beta.clone();
            let mut bm = beta.clone();
            bp[k] += h;
            bm[k] -= h;
            let fd = (frame.loglik(&model, &bp)? - frame.loglik(&model, &bm)?) / (2.0 * h);
            worst = worst.max((fd - ev.score[k]).abs() / scale_s);
            let (sp, sm) = (frame.score(&model, &bp)?, frame.score(&model, &bm)?);
            for a in 0..d {
                let fd = -(sp[a] - sm[a]) / (2.0 * h);
                worst = worst.max((fd - ev.sensitivity[(a, k)]).abs() / scale_h);
            }
        }
    }
    Ok(outcome("gradient", worst < 1e-6, format!("max relative error {worst:.3e} over 50 triples")))
}

/// Mean counts of both simulators against the target mean.
pub fn campbell(seed: u64) -> Result<Vec<CheckOutcome>> {
    let reps = 300usize;
    let (spec, _, w) = small_setup(seed, 2, 200.0, vec![0.5, -0.25])?;
    let counts: Vec<f64> = (0..reps)
        .map(|r| sim_poisson_with(&spec, &w, &mut replicate_rng(seed, r as u64)).map(|p| p.len() as f64))
        .collect::<Result<_>>()?;
    let mu = spec.expected_count();
    let mean = counts.iter().sum::<f64>() / reps as f64;
    let tol = 3.0 * (mu / reps as f64).sqrt();
    let poisson = outcome(
        "campbell/poisson",
        (mean - mu).abs() <= tol,
        format!("mean {mean:.2} vs mu {mu:.2} (tolerance {tol:.2})"),
    );

    let tp = ThomasParams::new(4e-3, 3.0)?;
    let counts: Vec<f64> = (0..reps)
        .map(|r| sim_thomas_with(&spec, tp, &w, &mut replicate_rng(seed + 1, r as u64)).map(|p| p.len() as f64))
        .collect::<Result<_>>()?;
    let mean = counts.iter().sum::<f64>() / reps as f64;
    let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    let thomas = outcome(
        "campbell/thomas",
        (mean - mu).abs() <= 3.0 * se && var > mu,
        format!("mean {mean:.2} vs mu {mu:.2} (se {se:.2}), variance {var:.1}"),
    );
    Ok(vec![poisson, thomas])
}

/// The 1-D evidence against a plain trapezoid integral on a wide fixed grid.
pub fn evidence(seed: u64) -> Result<CheckOutcome> {
    let (spec, cov, w) = small_setup(seed, 1, 80.0, vec![0.0])?;
    let mut worst = 0.0f64;
    for r in 0..5u64 {
        let pattern = sim_poisson_with(&spec, &w, &mut replicate_rng(seed, r))?;
        let prior_sd = 10.0;
        let got = evidence_1d(&pattern, &cov, prior_sd)?;
        let frame = ModelFrame::new(Arc::new(build_quadrature(&pattern, (4 * pattern.len()).max(64))?), &cov)?;
        let model = ModelSpec::intercept_only();
        let centre = (pattern.len() as f64 / w.area()).ln();
        let n = 200_000;
        let (a, b) = (centre - 3.0, centre + 3.0);
        let step = (b - a) / n as f64;
        let log_f = |x: f64| -> Result<f64> {
            Ok(frame.loglik(&model, &[x])? - 0.5 * x * x / (prior_sd * prior_sd)
                - (prior_sd * (2.0 * std::f64::consts::PI).sqrt()).ln())
        };
        let peak = log_f(centre)?;
        let mut sum = 0.0;
        for k in 0..=n {
            let x = a + k as f64 * step;
            let wk = if k == 0 || k == n { 0.5 } else { 1.0 };
            sum += wk * (log_f(x)? - peak).exp();
        }
        let want = peak + (sum * step).ln();
        worst = worst.max((got - want).abs());
    }
    Ok(outcome("evidence", worst < 1e-6, format!("max absolute log-evidence difference {worst:.3e}")))
}

/// Intercept-only T₂ under a Thomas pcf against a midpoint double integral.
pub fn t2(seed: u64) -> Result<CheckOutcome> {
    let w = Window::rect(100.0, 50.0)?;
    let cov = synth_covariates(seed, 1, w, (11, 11))?;
    let mut rng = seeded_rng(seed);
    let pts: Vec<(f64, f64)> = (0..300).map(|_| (rng.random::<f64>() * 100.0, rng.random::<f64>() * 50.0)).collect();
    let pattern = PointPattern::new(pts, w)?;
    let model = ModelSpec::intercept_only();
    let f = fit(&pattern, &model, &cov, 2000)?;
    let tp = ThomasParams::new(4e-4, 5.0)?;
    let pcf = PcfModel::Thomas(tp);
    let got = t2_matrix(&f, &model, &cov, &pcf)?[(0, 0)];

    let rho = f.beta_hat[0].exp();
    let (nx, ny) = (100usize, 50usize);
    let (dx, dy) = (w.width() / nx as f64, w.height() / ny as f64);
    let cells: Vec<(f64, f64)> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| ((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy)))
        .collect();
    let mut sum = 0.0;
    for &(x1, y1) in &cells {
        for &(x2, y2) in &cells {
            sum += pcf.excess(((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt());
        }
    }
    let want = rho * rho * sum * (dx * dy).powi(2);
    let rel = (got - want).abs() / want;
    Ok(outcome("t2", rel < 0.02, format!("quadrature {got:.6e} vs brute force {want:.6e} (relative {rel:.3e})")))
}
