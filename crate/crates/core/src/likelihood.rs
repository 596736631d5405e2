//! Berman–Turner quadrature and the Poisson (composite) log-likelihood.
//!
//! For a model with design vector `x(u) = (1, z_j(u))_{j∈I}` the quadrature
//! form of the log-likelihood is
//!
//! ```text
//! ℓ(β) = Σ_{data} β·x(u) − Σ_{nodes} w·exp{β·x(u)}
//! ```
//!
//! with score `Σ_data x − Σ_nodes w x e^{β·x}` and sensitivity
//! `Σ_nodes w x xᵀ e^{β·x}`. The sensitivity is exactly the negative Hessian
//! of `ℓ`, so Newton's method on this concave objective is the natural
//! solver. The intercept absorbs any constant factor of the intensity.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::covariates::CovariateSet;
use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};

pub const MAX_NEWTON_ITERATIONS: usize = 100;
pub const SCORE_TOLERANCE: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;
const SINGULAR_RATIO: f64 = 1e-10;

/// Covariate subset `I ⊆ {1, …, p}`; the intercept is always present.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    subset: Vec<usize>,
}

impl ModelSpec {
    /// `subset` holds 1-based covariate indices; it is sorted and deduplicated.
    pub fn new(mut subset: Vec<usize>) -> Result<Self> {
        subset.sort_unstable();
        subset.dedup();
        if subset.first() == Some(&0) {
            return Err(Error::Dimension("covariate indices are 1-based".into()));
        }
        Ok(Self { subset })
    }

    pub fn intercept_only() -> Self {
        Self { subset: Vec::new() }
    }

    pub fn full(p: usize) -> Self {
        Self { subset: (1..=p).collect() }
    }

    /// Model whose subset is the set bits of `mask` (bit j-1 ↔ covariate j).
    pub fn from_mask(mask: u32) -> Self {
        Self { subset: (0..32).filter(|b| mask >> b & 1 == 1).map(|b| b as usize + 1).collect() }
    }

    pub fn mask(&self) -> u32 {
        self.subset.iter().fold(0, |m, j| m | 1 << (j - 1))
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// Design dimension including the intercept.
    pub fn dim(&self) -> usize {
        self.subset.len() + 1
    }

    pub fn contains(&self, j: usize) -> bool {
        self.subset.binary_search(&j).is_ok()
    }

    pub fn is_subset_of(&self, other: &ModelSpec) -> bool {
        self.subset.iter().all(|j| other.contains(*j))
    }

    fn check(&self, p: usize) -> Result<()> {
        match self.subset.last() {
            Some(&j) if j > p => Err(Error::Dimension(format!("covariate index {j} exceeds p = {p}"))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.subset.iter().map(|j| j.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadNode {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
    pub is_data: bool,
}

/// Data points followed by dummy points at the centres of a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureScheme {
    window: Window,
    nodes: Vec<QuadNode>,
    n_data: usize,
    grid: (usize, usize),
}

impl QuadratureScheme {
    pub fn nodes(&self) -> &[QuadNode] {
        &self.nodes
    }
    pub fn window(&self) -> &Window {
        &self.window
    }
    pub fn n_data(&self) -> usize {
        self.n_data
    }
    /// Number of dummy points.
    pub fn m(&self) -> usize {
        self.grid.0 * self.grid.1
    }
    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }
    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }
}

/// Dummy grid of `⌈√(m·a)⌉ × ⌈√(m/a)⌉` cell centres, `a` the window aspect
/// ratio. Each cell's area is shared equally by the data and dummy points it
/// contains.
pub fn build_quadrature(p: &PointPattern, m: usize) -> Result<QuadratureScheme> {
    if m < 4 {
        return Err(Error::Config(format!("need at least 4 dummy points, got {m}")));
    }
    let w = *p.window();
    let aspect = w.width() / w.height();
    let nx = ((m as f64 * aspect).sqrt().ceil() as usize).max(1);
    let ny = ((m as f64 / aspect).sqrt().ceil() as usize).max(1);
    let (dx, dy) = (w.width() / nx as f64, w.height() / ny as f64);
    let cell_of = |x: f64, y: f64| {
        let i = (((x - w.x_min()) / dx).floor().max(0.0) as usize).min(nx - 1);
        let j = (((y - w.y_min()) / dy).floor().max(0.0) as usize).min(ny - 1);
        j * nx + i
    };
    let mut occupancy = vec![1usize; nx * ny];
    let data_cells: Vec<usize> = p.points().iter().map(|&(x, y)| cell_of(x, y)).collect();
    for &c in &data_cells {
        occupancy[c] += 1;
    }
    let cell_area = dx * dy;
    let mut nodes = Vec::with_capacity(p.len() + nx * ny);
    for (&(x, y), &c) in p.points().iter().zip(&data_cells) {
        nodes.push(QuadNode { x, y, weight: cell_area / occupancy[c] as f64, is_data: true });
    }
    for j in 0..ny {
        for i in 0..nx {
            nodes.push(QuadNode {
                x: w.x_min() + (i as f64 + 0.5) * dx,
                y: w.y_min() + (j as f64 + 0.5) * dy,
                weight: cell_area / occupancy[j * nx + i] as f64,
                is_data: false,
            });
        }
    }
    Ok(QuadratureScheme { window: w, nodes, n_data: p.len(), grid: (nx, ny) })
}

/// A quadrature scheme with every covariate evaluated at every node. Built
/// once per pattern and shared read-only by all candidate model fits.
#[derive(Debug, Clone)]
pub struct ModelFrame {
    scheme: Arc<QuadratureScheme>,
    p: usize,
    /// Row-major `n_nodes × p`.
    z: Vec<f64>,
}

impl ModelFrame {
    pub fn new(scheme: Arc<QuadratureScheme>, cov: &CovariateSet) -> Result<Self> {
        let p = cov.len();
        let mut z = vec![0.0; scheme.nodes.len() * p];
        for (node, row) in scheme.nodes.iter().zip(z.chunks_mut(p)) {
            cov.eval_into(node.x, node.y, row)?;
        }
        Ok(Self { scheme, p, z })
    }

    pub fn scheme(&self) -> &Arc<QuadratureScheme> {
        &self.scheme
    }
    pub fn n_covariates(&self) -> usize {
        self.p
    }
    pub fn n_nodes(&self) -> usize {
        self.scheme.nodes.len()
    }

    /// Design row `(1, z_j)_{j∈I}` of node `i` written into `out`.
    pub fn design_row(&self, model: &ModelSpec, i: usize, out: &mut [f64]) {
        let row = &self.z[i * self.p..(i + 1) * self.p];
        out[0] = 1.0;
        for (o, &j) in out[1..].iter_mut().zip(&model.subset) {
            *o = row[j - 1];
        }
    }

    fn check(&self, model: &ModelSpec, beta: &[f64]) -> Result<()> {
        model.check(self.p)?;
        if beta.len() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), got: beta.len() });
        }
        Ok(())
    }

    /// `β·x(u)` at every node.
    pub fn linear_predictor(&self, model: &ModelSpec, beta: &[f64]) -> Result<Vec<f64>> {
        self.check(model, beta)?;
        let mut x = vec![0.0; model.dim()];
        Ok((0..self.n_nodes())
            .map(|i| {
                self.design_row(model, i, &mut x);
                dot(beta, &x)
            })
            .collect())
    }

    pub fn loglik(&self, model: &ModelSpec, beta: &[f64]) -> Result<f64> {
        self.check(model, beta)?;
        let mut x = vec![0.0; model.dim()];
        let mut data_term = 0.0;
        let mut integral = 0.0;
        for (i, node) in self.scheme.nodes.iter().enumerate() {
            self.design_row(model, i, &mut x);
            let eta = dot(beta, &x);
            if node.is_data {
                data_term += eta;
            }
            integral += node.weight * eta.exp();
        }
        Ok(data_term - integral)
    }

    pub fn score(&self, model: &ModelSpec, beta: &[f64]) -> Result<DVector<f64>> {
        Ok(self.evaluate(model, beta)?.score)
    }

    pub fn sensitivity(&self, model: &ModelSpec, beta: &[f64]) -> Result<DMatrix<f64>> {
        let s = self.evaluate(model, beta)?.sensitivity;
        check_conditioning(&s)?;
        Ok(s)
    }

    /// Log-likelihood, score and sensitivity in one pass over the nodes.
    pub fn evaluate(&self, model: &ModelSpec, beta: &[f64]) -> Result<Evaluation> {
        self.check(model, beta)?;
        let d = model.dim();
        let mut x = vec![0.0; d];
        let mut loglik = 0.0;
        let mut score = DVector::zeros(d);
        let mut sens = DMatrix::zeros(d, d);
        for (i, node) in self.scheme.nodes.iter().enumerate() {
            self.design_row(model, i, &mut x);
            let eta = dot(beta, &x);
            let mu = node.weight * eta.exp();
            if node.is_data {
                loglik += eta;
                for (s, xa) in score.iter_mut().zip(&x) {
                    *s += xa;
                }
            }
            loglik -= mu;
            for a in 0..d {
                score[a] -= mu * x[a];
                let mxa = mu * x[a];
                for b in 0..=a {
                    sens[(a, b)] += mxa * x[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                sens[(b, a)] = sens[(a, b)];
            }
        }
        Ok(Evaluation { loglik, score, sensitivity: sens })
    }

    /// Maximise `ℓ` by Newton steps with step halving, starting from the
    /// intercept-only MLE `(log{N/|W|}, 0, …, 0)`.
    pub fn fit(&self, model: &ModelSpec) -> Result<FitResult> {
        model.check(self.p)?;
        let n = self.scheme.n_data;
        if n == 0 {
            return Err(Error::EmptyPattern);
        }
        let d = model.dim();
        let tol = SCORE_TOLERANCE * (n as f64).max(1.0);
        let mut beta = vec![0.0; d];
        beta[0] = (n as f64 / self.scheme.window.area()).ln();
        let mut cur = self.evaluate(model, &beta)?;
        let mut iterations = 0;
        let mut converged = sup_norm(&cur.score) < tol;
        while !converged && iterations < MAX_NEWTON_ITERATIONS {
            let step = newton_direction(&cur.sensitivity, &cur.score)?;
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
                let next = self.evaluate(model, &trial)?;
                if next.loglik.is_finite() && next.loglik >= cur.loglik - 1e-12 * cur.loglik.abs().max(1.0) {
                    accepted = Some((trial, next));
                    break;
                }
                t *= 0.5;
            }
            iterations += 1;
            match accepted {
                Some((b, e)) => {
                    beta = b;
                    cur = e;
                }
                None => break,
            }
            converged = sup_norm(&cur.score) < tol;
        }
        check_conditioning(&cur.sensitivity)?;
        if !converged {
            log::warn!("model {model}: Newton stopped after {iterations} iterations without convergence");
        }
        Ok(FitResult {
            model: model.clone(),
            beta_hat: beta,
            loglik: cur.loglik,
            sensitivity: cur.sensitivity,
            scheme: self.scheme.clone(),
            converged,
            iterations,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loglik: f64,
    pub score: DVector<f64>,
    pub sensitivity: DMatrix<f64>,
}

fn newton_direction(sens: &DMatrix<f64>, score: &DVector<f64>) -> Result<DVector<f64>> {
    match sens.clone().cholesky() {
        Some(ch) => Ok(ch.solve(score)),
        None => Err(Error::SingularSensitivity { ratio: eigen_ratio(sens) }),
    }
}

fn eigen_ratio(s: &DMatrix<f64>) -> f64 {
    let ev = s.clone().symmetric_eigenvalues();
    let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    if max > 0.0 {
        min / max
    } else {
        0.0
    }
}

pub(crate) fn check_conditioning(s: &DMatrix<f64>) -> Result<()> {
    let ratio = eigen_ratio(s);
    if !(ratio >= SINGULAR_RATIO) {
        return Err(Error::SingularSensitivity { ratio });
    }
    Ok(())
}

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximiser of the quadrature log-likelihood for one model.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: ModelSpec,
    /// Intercept first; it estimates `β₀ + log θ`.
    pub beta_hat: Vec<f64>,
    pub loglik: f64,
    pub sensitivity: DMatrix<f64>,
    pub scheme: Arc<QuadratureScheme>,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn n_points(&self) -> usize {
        self.scheme.n_data
    }

    /// `exp{β̂·x(u)}` at an arbitrary location.
    pub fn fitted_intensity(&self, cov: &CovariateSet, x: f64, y: f64) -> Result<f64> {
        let z = cov.eval(x, y)?;
        let mut eta = self.beta_hat[0];
        for (b, &j) in self.beta_hat[1..].iter().zip(&self.model.subset) {
            eta += b * z[j - 1];
        }
        Ok(eta.exp())
    }

    /// Full-length coefficient vector over all `p` covariates (zeros for
    /// excluded ones), without the intercept.
    pub fn coefficients(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (b, &j) in self.beta_hat[1..].iter().zip(&self.model.subset) {
            out[j - 1] = *b;
        }
        out
    }

    /// Standard errors from the inverse sensitivity (Poisson case).
    pub fn standard_errors(&self) -> Result<Vec<f64>> {
        let ch = self
            .sensitivity
            .clone()
            .cholesky()
            .ok_or(Error::SingularSensitivity { ratio: eigen_ratio(&self.sensitivity) })?;
        let inv = ch.inverse();
        Ok((0..inv.nrows()).map(|i| inv[(i, i)].sqrt()).collect())
    }

    pub fn csv_header(p: usize) -> Vec<String> {
        let mut h = vec!["model_id".to_string(), "model".to_string(), "beta0".to_string()];
        h.extend((1..=p).map(|j| format!("beta{j}")));
        h.extend(["loglik", "converged", "iterations"].map(String::from));
        h
    }

    /// Report record: model id, β̂ (blank for excluded covariates), ℓ, convergence.
    pub fn csv_record(&self, p: usize) -> Vec<String> {
        let mut r = vec![self.model.mask().to_string(), self.model.to_string(), self.beta_hat[0].to_string()];
        let mut slots = vec![String::new(); p];
        for (b, &j) in self.beta_hat[1..].iter().zip(&self.model.subset) {
            slots[j - 1] = b.to_string();
        }
        r.extend(slots);
        r.push(self.loglik.to_string());
        r.push(self.converged.to_string());
        r.push(self.iterations.to_string());
        r
    }
}

pub fn loglik(scheme: &QuadratureScheme, model: &ModelSpec, cov: &CovariateSet, beta: &[f64]) -> Result<f64> {
    ModelFrame::new(Arc::new(scheme.clone()), cov)?.loglik(model, beta)
}

pub fn score(scheme: &QuadratureScheme, model: &ModelSpec, cov: &CovariateSet, beta: &[f64]) -> Result<DVector<f64>> {
    ModelFrame::new(Arc::new(scheme.clone()), cov)?.score(model, beta)
}

pub fn sensitivity(
    scheme: &QuadratureScheme,
    model: &ModelSpec,
    cov: &CovariateSet,
    beta: &[f64],
) -> Result<DMatrix<f64>> {
    ModelFrame::new(Arc::new(scheme.clone()), cov)?.sensitivity(model, beta)
}

pub fn fit(p: &PointPattern, model: &ModelSpec, cov: &CovariateSet, m: usize) -> Result<FitResult> {
    if p.is_empty() {
        return Err(Error::EmptyPattern);
    }
    let scheme = Arc::new(build_quadrature(p, m)?);
    ModelFrame::new(scheme, cov)?.fit(model)
}
