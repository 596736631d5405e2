//! Effective degrees of freedom and information criteria.
//!
//! For a fitted model with sensitivity `S` the effective number of
//! parameters is `p* = p + tr(S⁻¹ T₂)` where
//!
//! ```text
//! T₂ = ∫∫_{W²} x(u) x(v)ᵀ ρ(u) ρ(v) {g(u, v) − 1} du dv
//! ```
//!
//! evaluated at the fitted intensity and an estimated pair correlation.
//! Under a Poisson pcf `T₂ = 0` and `p* = p`, so CIC collapses to AIC and
//! CBIC to BIC(N).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::covariates::CovariateSet;
use crate::error::{Error, Result};
use crate::geometry::PointPattern;
use crate::likelihood::{build_quadrature, FitResult, ModelFrame, ModelSpec};
use crate::second_order::PcfModel;

/// Pairs with `g − 1` below this fraction of `g(0) − 1` are dropped from T₂.
pub const T2_CUTOFF: f64 = 1e-6;

/// `T₂` on the fit's quadrature nodes.
pub fn t2_matrix(fit: &FitResult, model: &ModelSpec, cov: &CovariateSet, pcf: &PcfModel) -> Result<DMatrix<f64>> {
    let frame = ModelFrame::new(fit.scheme.clone(), cov)?;
    t2_matrix_on_frame(&frame, fit, model, pcf)
}

/// As [`t2_matrix`] reusing a prebuilt frame.
///
/// With `a_i = w_i ρ̂(u_i)` the quadrature double sum is
/// `Σ_i Σ_j a_i a_j x_i x_jᵀ (g(‖u_i − u_j‖) − 1)`, diagonal included. Pairs
/// are found through a cell list with side at least the pcf cutoff radius.
pub fn t2_matrix_on_frame(frame: &ModelFrame, fit: &FitResult, model: &ModelSpec, pcf: &PcfModel) -> Result<DMatrix<f64>> {
    let d = model.dim();
    if fit.beta_hat.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: fit.beta_hat.len() });
    }
    let tp = match pcf {
        PcfModel::Poisson => return Ok(DMatrix::zeros(d, d)),
        PcfModel::Thomas(tp) => *tp,
    };
    let scheme = frame.scheme();
    let nodes = scheme.nodes();
    let n = nodes.len();
    let eta = frame.linear_predictor(model, &fit.beta_hat)?;

    // weighted design rows a_i x_i, row-major n × d
    let mut ax = vec![0.0; n * d];
    for (i, row) in ax.chunks_mut(d).enumerate() {
        frame.design_row(model, i, row);
        let a = nodes[i].weight * eta[i].exp();
        row.iter_mut().for_each(|v| *v *= a);
    }

    let amplitude = pcf.excess(0.0);
    let inv_scale = 1.0 / (4.0 * tp.gamma * tp.gamma);
    let r_cut = pcf.cutoff(T2_CUTOFF);
    let r_cut2 = r_cut * r_cut;

    let w = scheme.window();
    let side = r_cut.max((w.area() / (4.0 * n as f64)).sqrt());
    let cx = ((w.width() / side).ceil() as usize).max(1);
    let cy = ((w.height() / side).ceil() as usize).max(1);
    let cell_of = |x: f64, y: f64| {
        let i = (((x - w.x_min()) / side) as usize).min(cx - 1);
        let j = (((y - w.y_min()) / side) as usize).min(cy - 1);
        (i, j)
    };
    // counting sort of nodes into cells
    let mut start = vec![0usize; cx * cy + 1];
    let cells: Vec<(usize, usize)> = nodes.iter().map(|q| cell_of(q.x, q.y)).collect();
    for &(i, j) in &cells {
        start[j * cx + i + 1] += 1;
    }
    for k in 0..cx * cy {
        start[k + 1] += start[k];
    }
    let mut fill = start.clone();
    let mut members = vec![0usize; n];
    for (idx, &(i, j)) in cells.iter().enumerate() {
        let c = j * cx + i;
        members[fill[c]] = idx;
        fill[c] += 1;
    }

    // h_i = Σ_j (g_ij − 1) a_j x_j
    let mut h = vec![0.0; n * d];
    for (i, q) in nodes.iter().enumerate() {
        let (ci, cj) = cells[i];
        let own = &ax[i * d..(i + 1) * d];
        for (hk, v) in h[i * d..(i + 1) * d].iter_mut().zip(own) {
            *hk += amplitude * v;
        }
        for nj in cj.saturating_sub(1)..=(cj + 1).min(cy - 1) {
            for ni in ci.saturating_sub(1)..=(ci + 1).min(cx - 1) {
                let c = nj * cx + ni;
                for &j in &members[start[c]..start[c + 1]] {
                    if j <= i {
                        continue;
                    }
                    let dx = nodes[j].x - q.x;
                    let dy = nodes[j].y - q.y;
                    let r2 = dx * dx + dy * dy;
                    if r2 > r_cut2 {
                        continue;
                    }
                    let g1 = amplitude * (-r2 * inv_scale).exp();
                    for k in 0..d {
                        h[i * d + k] += g1 * ax[j * d + k];
                        h[j * d + k] += g1 * ax[i * d + k];
                    }
                }
            }
        }
    }

    let mut t2 = DMatrix::zeros(d, d);
    for i in 0..n {
        for a in 0..d {
            let va = ax[i * d + a];
            for b in 0..d {
                t2[(a, b)] += va * h[i * d + b];
            }
        }
    }
    // exact symmetry; the two triangles differ only by summation order
    let sym = (&t2 + t2.transpose()) * 0.5;
    Ok(sym)
}

/// `p + tr(S⁻¹ T₂)` via a Cholesky solve.
pub fn p_star(fit: &FitResult, t2: &DMatrix<f64>) -> Result<f64> {
    let p = fit.model.dim();
    if t2.nrows() != p || t2.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, got: t2.nrows() });
    }
    let ch = fit
        .sensitivity
        .clone()
        .cholesky()
        .ok_or(Error::SingularSensitivity { ratio: 0.0 })?;
    let x = ch.solve(t2);
    Ok(p as f64 + x.trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    Aic,
    BicN,
    BicW,
    BicNm,
    Cic,
    Cbic,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::Aic,
        Criterion::BicN,
        Criterion::BicW,
        Criterion::BicNm,
        Criterion::Cic,
        Criterion::Cbic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::BicN => "bic_n",
            Criterion::BicW => "bic_w",
            Criterion::BicNm => "bic_nm",
            Criterion::Cic => "cic",
            Criterion::Cbic => "cbic",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Criterion::Aic => "AIC",
            Criterion::BicN => "BIC(N)",
            Criterion::BicW => "BIC(|W|)",
            Criterion::BicNm => "BIC(N+m)",
            Criterion::Cic => "CIC",
            Criterion::Cbic => "CBIC",
        }
    }

    /// Whether the criterion uses the estimated effective degrees of freedom.
    pub fn uses_p_star(&self) -> bool {
        matches!(self, Criterion::Cic | Criterion::Cbic)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown criterion `{s}`")))
    }
}

/// Penalties `π` used by the BIC(π) variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyValues {
    pub n: f64,
    pub area: f64,
    pub n_plus_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriteriaReport {
    pub model: ModelSpec,
    pub loglik: f64,
    pub p_l: usize,
    pub p_star: f64,
    pub aic: f64,
    pub bic_n: f64,
    pub bic_w: f64,
    pub bic_nm: f64,
    pub cic: f64,
    pub cbic: f64,
    pub pi_values: PenaltyValues,
}

impl CriteriaReport {
    pub fn value(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Aic => self.aic,
            Criterion::BicN => self.bic_n,
            Criterion::BicW => self.bic_w,
            Criterion::BicNm => self.bic_nm,
            Criterion::Cic => self.cic,
            Criterion::Cbic => self.cbic,
        }
    }

    /// `−2ℓ + p log π` for an arbitrary penalty.
    pub fn bic_pi(&self, pi: f64) -> f64 {
        -2.0 * self.loglik + self.p_l as f64 * pi.ln()
    }
}

pub fn criteria(fit: &FitResult, p_star: f64, n_points: usize, area: f64, m: usize) -> CriteriaReport {
    let ell = fit.loglik;
    let p_l = fit.model.dim();
    let p = p_l as f64;
    let pi_values = PenaltyValues {
        n: n_points as f64,
        area,
        n_plus_m: (n_points + m) as f64,
    };
    let log_n = pi_values.n.ln();
    CriteriaReport {
        model: fit.model.clone(),
        loglik: ell,
        p_l,
        p_star,
        aic: -2.0 * ell + 2.0 * p,
        bic_n: -2.0 * ell + p * log_n,
        bic_w: -2.0 * ell + p * area.ln(),
        bic_nm: -2.0 * ell + p * pi_values.n_plus_m.ln(),
        cic: -2.0 * ell + 2.0 * p_star,
        cbic: -2.0 * ell + p_star * log_n,
        pi_values,
    }
}

/// `log ∫ exp{ℓ(β₀)} φ(β₀; 0, prior_sd²) dβ₀` for the intercept-only model,
/// by adaptive Simpson over the posterior mode ± 10 posterior sd.
pub fn evidence_1d(p: &PointPattern, cov: &CovariateSet, prior_sd: f64) -> Result<f64> {
    if !(prior_sd > 0.0) {
        return Err(Error::Config(format!("prior sd must be positive, got {prior_sd}")));
    }
    let m = (4 * p.len()).max(64);
    let frame = ModelFrame::new(Arc::new(build_quadrature(p, m)?), cov)?;
    let model = ModelSpec::intercept_only();
    let prec = 1.0 / (prior_sd * prior_sd);
    let log_prior = |b: f64| -0.5 * b * b * prec - (prior_sd * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let log_post = |b: f64| -> Result<f64> { Ok(frame.loglik(&model, &[b])? + log_prior(b)) };

    // posterior mode by damped Newton on a concave function
    let mut b = 0.0;
    let mut h = log_post(b)?;
    let mut curvature = 0.0;
    for _ in 0..200 {
        let ev = frame.evaluate(&model, &[b])?;
        let grad = ev.score[0] - b * prec;
        curvature = ev.sensitivity[(0, 0)] + prec;
        if grad.abs() < 1e-12 * curvature.max(1.0) {
            break;
        }
        let mut step = grad / curvature;
        loop {
            let nh = log_post(b + step)?;
            if nh >= h || step.abs() < 1e-300 {
                b += step;
                h = nh;
                break;
            }
            step *= 0.5;
        }
    }
    let sd = 1.0 / curvature.sqrt();
    let f = |x: f64| -> f64 {
        match log_post(x) {
            Ok(v) => (v - h).exp(),
            Err(_) => f64::NAN,
        }
    };
    let (a, c) = (b - 10.0 * sd, b + 10.0 * sd);
    let integral = adaptive_simpson(&f, a, c, 1e-10 * sd, 60)?;
    if !(integral > 0.0) || !integral.is_finite() {
        return Err(Error::QuadratureFailure(format!("non-positive integral {integral}")));
    }
    Ok(h + integral.ln())
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64> {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        if !(left.is_finite() && right.is_finite()) {
            return Err(Error::QuadratureFailure("integrand not finite".into()));
        }
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::QuadratureFailure("maximum subdivision depth reached".into()));
        }
        Ok(recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)?
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)?)
    }
    let (fa, fb) = (f(a), f(b));
    // start from a uniform split so the peak is always sampled
    let pieces = 8;
    let h = (b - a) / pieces as f64;
    let mut total = 0.0;
    let mut x0 = a;
    let mut f0 = fa;
    for k in 1..=pieces {
        let x1 = if k == pieces { b } else { a + k as f64 * h };
        let f1 = if k == pieces { fb } else { f(x1) };
        let (m, fm, whole) = simpson(f, x0, f0, x1, f1);
        total += recurse(f, x0, f0, x1, f1, m, fm, whole, tol / pieces as f64, max_depth)?;
        x0 = x1;
        f0 = f1;
    }
    Ok(total)
}
