//! Inhomogeneous Poisson and Thomas cluster simulation by thinning.
//!
//! Both simulators target the log-linear intensity
//! `ρ(u) = ω exp{β·z(u)}`. Since every covariate is bilinear on the same
//! lattice, `β·z` is bilinear on each cell and attains its maximum at a node;
//! the dominating rate is the largest node intensity times
//! [`BOUND_SAFETY`]. Any evaluated intensity above the bound is reported as
//! [`Error::BoundViolation`] rather than silently truncated.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::covariates::CovariateSet;
use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};
use crate::rng::seeded_rng;

pub const BOUND_SAFETY: f64 = 1.05;

/// Parent buffer around the window, in units of the dispersal scale.
pub const PARENT_BUFFER_SCALES: f64 = 4.0;

/// `ρ(u) = ω exp{β·z(u)}`.
#[derive(Debug, Clone)]
pub struct IntensitySpec {
    omega: f64,
    beta: Vec<f64>,
    covariates: Arc<CovariateSet>,
}

impl IntensitySpec {
    pub fn new(omega: f64, beta: Vec<f64>, covariates: Arc<CovariateSet>) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::Config(format!("omega must be positive, got {omega}")));
        }
        if beta.len() != covariates.len() {
            return Err(Error::DimensionMismatch { expected: covariates.len(), got: beta.len() });
        }
        Ok(Self { omega, beta, covariates })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }
    pub fn covariates(&self) -> &Arc<CovariateSet> {
        &self.covariates
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(omega, self.beta.clone(), self.covariates.clone())
    }

    /// Indices (1-based) of covariates with a nonzero coefficient.
    pub fn informative_set(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j + 1)
            .collect()
    }

    pub fn intensity_at(&self, x: f64, y: f64) -> Result<f64> {
        let mut z = vec![0.0; self.beta.len()];
        self.covariates.eval_into(x, y, &mut z)?;
        Ok(self.omega * dot(&self.beta, &z).exp())
    }

    /// `β·z` at every lattice node, in lattice order.
    fn node_predictor(&self) -> Vec<f64> {
        let (nx, ny) = self.covariates.dims();
        (0..nx * ny)
            .map(|k| {
                self.covariates
                    .fields()
                    .iter()
                    .zip(&self.beta)
                    .map(|(f, b)| b * f.values()[k])
                    .sum()
            })
            .collect()
    }

    /// Largest node intensity.
    pub fn max_node_intensity(&self) -> f64 {
        let m = self.node_predictor().into_iter().fold(f64::NEG_INFINITY, f64::max);
        self.omega * m.exp()
    }

    /// `∫_W exp{β·z(u)} du` over the covariate window.
    pub fn integral_of_exp_predictor(&self) -> f64 {
        let (nx, ny) = self.covariates.dims();
        let eta = self.node_predictor();
        let w = self.covariates.window();
        let cell_area = w.width() / (nx - 1) as f64 * (w.height() / (ny - 1) as f64);
        let mut total = 0.0;
        for j in 0..ny - 1 {
            let mut row = 0.0;
            for i in 0..nx - 1 {
                let k = j * nx + i;
                row += cell_mean_exp_bilinear(eta[k], eta[k + 1], eta[k + nx], eta[k + nx + 1]);
            }
            total += row;
        }
        total * cell_area
    }

    /// Expected number of points in the covariate window.
    pub fn expected_count(&self) -> f64 {
        self.omega * self.integral_of_exp_predictor()
    }
}

/// Gauss–Legendre nodes and weights on [0, 1].
const GL_NODES: [f64; 5] = [
    0.046_910_077_030_668,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_6,
    0.953_089_922_969_332,
];
const GL_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_54,
    0.239_314_335_249_683_23,
    0.284_444_444_444_444_45,
    0.239_314_335_249_683_23,
    0.118_463_442_528_094_54,
];

/// Mean of `exp` of the bilinear interpolant of four corner values over a unit cell.
fn cell_mean_exp_bilinear(v00: f64, v10: f64, v01: f64, v11: f64) -> f64 {
    let mut acc = 0.0;
    for (t, wt) in GL_NODES.iter().zip(&GL_WEIGHTS) {
        let lo = v00 + t * (v01 - v00);
        let hi = v10 + t * (v11 - v10);
        let mut inner = 0.0;
        for (s, ws) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            inner += ws * (lo + s * (hi - lo)).exp();
        }
        acc += wt * inner;
    }
    acc
}

/// Cluster process parameters: parent intensity and Gaussian dispersal sd.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThomasParams {
    pub kappa: f64,
    pub gamma: f64,
}

impl ThomasParams {
    pub fn new(kappa: f64, gamma: f64) -> Result<Self> {
        if !(kappa > 0.0 && gamma > 0.0) || !kappa.is_finite() || !gamma.is_finite() {
            return Err(Error::Config(format!("kappa and gamma must be positive, got {kappa}, {gamma}")));
        }
        Ok(Self { kappa, gamma })
    }
}

pub fn intensity_at(spec: &IntensitySpec, u: (f64, f64)) -> Result<f64> {
    spec.intensity_at(u.0, u.1)
}

/// ω' such that `∫_W ω' exp{β·z(u)} du = target_mu`.
pub fn calibrate_omega(spec: &IntensitySpec, target_mu: f64) -> Result<f64> {
    if !(target_mu > 0.0) {
        return Err(Error::Config(format!("target mean must be positive, got {target_mu}")));
    }
    Ok(target_mu / spec.integral_of_exp_predictor())
}

fn check_window(spec: &IntensitySpec, window: &Window) -> Result<()> {
    let cw = spec.covariates.window();
    for (x, y) in [(window.x_min(), window.y_min()), (window.x_max(), window.y_max())] {
        if !cw.contains(x, y) {
            return Err(Error::OutOfWindow { x, y });
        }
    }
    Ok(())
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::Config(format!("Poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as u64)
}

struct Thinner<'a> {
    spec: &'a IntensitySpec,
    bound: f64,
    z: Vec<f64>,
}

impl<'a> Thinner<'a> {
    fn new(spec: &'a IntensitySpec) -> Self {
        Self {
            spec,
            bound: BOUND_SAFETY * spec.max_node_intensity(),
            z: vec![0.0; spec.beta.len()],
        }
    }

    fn accept<R: Rng + ?Sized>(&mut self, x: f64, y: f64, rng: &mut R) -> Result<bool> {
        self.spec.covariates.eval_into(x, y, &mut self.z)?;
        let rho = self.spec.omega * dot(&self.spec.beta, &self.z).exp();
        if rho > self.bound {
            return Err(Error::BoundViolation { value: rho, bound: self.bound });
        }
        Ok(rng.random::<f64>() * self.bound < rho)
    }
}

/// Inhomogeneous Poisson process on `window` by dominated thinning.
pub fn sim_poisson_with<R: Rng + ?Sized>(spec: &IntensitySpec, window: &Window, rng: &mut R) -> Result<PointPattern> {
    check_window(spec, window)?;
    let mut thin = Thinner::new(spec);
    let n = poisson_count(thin.bound * window.area(), rng)?;
    let mut pts = Vec::new();
    for _ in 0..n {
        let x = window.x_min() + rng.random::<f64>() * window.width();
        let y = window.y_min() + rng.random::<f64>() * window.height();
        if thin.accept(x, y, rng)? {
            pts.push((x, y));
        }
    }
    PointPattern::new(pts, *window)
}

pub fn sim_poisson(spec: &IntensitySpec, window: &Window, seed: u64) -> Result<PointPattern> {
    sim_poisson_with(spec, window, &mut seeded_rng(seed))
}

/// Inhomogeneous Thomas process: stationary Poisson parents with intensity
/// κ on the window dilated by 4γ; each parent `c` spawns an inhomogeneous
/// Poisson cluster with intensity `ρ(u) k(u − c; γ) / κ`, restricted to the
/// window. The superposition has intensity `ρ`.
pub fn sim_thomas_with<R: Rng + ?Sized>(
    spec: &IntensitySpec,
    tp: ThomasParams,
    window: &Window,
    rng: &mut R,
) -> Result<PointPattern> {
    check_window(spec, window)?;
    let mut thin = Thinner::new(spec);
    let outer = window.dilate(PARENT_BUFFER_SCALES * tp.gamma)?;
    let n_parents = poisson_count(tp.kappa * outer.area(), rng)?;
    let mut parents = Vec::with_capacity(n_parents as usize);
    for _ in 0..n_parents {
        parents.push((
            outer.x_min() + rng.random::<f64>() * outer.width(),
            outer.y_min() + rng.random::<f64>() * outer.height(),
        ));
    }
    let offspring_mean = thin.bound / tp.kappa;
    let mut pts = Vec::new();
    for (cx, cy) in parents {
        let n = poisson_count(offspring_mean, rng)?;
        for _ in 0..n {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            let (x, y) = (cx + tp.gamma * dx, cy + tp.gamma * dy);
            // the uniform is drawn only for in-window candidates
            if window.contains(x, y) && thin.accept(x, y, rng)? {
                pts.push((x, y));
            }
        }
    }
    PointPattern::new(pts, *window)
}

pub fn sim_thomas(spec: &IntensitySpec, tp: ThomasParams, window: &Window, seed: u64) -> Result<PointPattern> {
    sim_thomas_with(spec, tp, window, &mut seeded_rng(seed))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::{synth_covariates, CovariateField};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn big() -> Window {
        Window::rect(1000.0, 500.0).unwrap()
    }

    fn synth(w: Window) -> Arc<CovariateSet> {
        Arc::new(synth_covariates(1, 6, w, (101, 51)).unwrap())
    }

    #[test]
    fn intensity_examples() {
        let cov = synth(big());
        let flat = IntensitySpec::new(0.3, vec![0.0; 6], cov.clone()).unwrap();
        assert_eq!(intensity_at(&flat, (123.0, 45.0)).unwrap(), 0.3);

        let w = Window::rect(1.0, 1.0).unwrap();
        let ln2 = CovariateField::new("a", w, 2, 2, vec![2f64.ln(); 4]).unwrap();
        let zero = CovariateField::new("b", w, 2, 2, vec![0.0; 4]).unwrap();
        let set = Arc::new(CovariateSet::new(vec![ln2, zero.clone()]).unwrap());
        let s = IntensitySpec::new(1.0, vec![1.0, 0.7], set).unwrap();
        assert!((s.intensity_at(0.4, 0.4).unwrap() - 2.0).abs() < 1e-15);

        let set0 = Arc::new(CovariateSet::new(vec![zero]).unwrap());
        let s0 = IntensitySpec::new(1.5, vec![0.5], set0).unwrap();
        assert_eq!(s0.intensity_at(0.2, 0.9).unwrap(), 1.5);
        assert!(matches!(s0.intensity_at(2.0, 0.0), Err(Error::OutOfWindow { .. })));
    }

    #[test]
    fn spec_validation() {
        let cov = synth(big());
        assert!(IntensitySpec::new(0.0, vec![0.0; 6], cov.clone()).is_err());
        assert!(matches!(
            IntensitySpec::new(1.0, vec![0.0; 5], cov),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn calibration_flat_and_linear() {
        let cov = synth(big());
        let spec = IntensitySpec::new(1.0, vec![0.0; 6], cov).unwrap();
        let w = calibrate_omega(&spec, 800.0).unwrap();
        assert!((w - 0.0016).abs() < 1e-17);
        let w2 = calibrate_omega(&spec, 1600.0).unwrap();
        assert!((w2 - 2.0 * w).abs() < 1e-17);
    }

    #[test]
    fn calibration_matches_monte_carlo_integral() {
        let cov = synth(big());
        let spec = IntensitySpec::new(1.0, vec![0.5, -0.25, 0.0, 0.0, 0.0, 0.0], cov).unwrap();
        let omega = calibrate_omega(&spec, 200.0).unwrap();
        let calibrated = spec.with_omega(omega).unwrap();
        // independent Monte-Carlo estimate of ∫ρ with its standard error
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 400_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = rng.random::<f64>() * 1000.0;
            let y = rng.random::<f64>() * 500.0;
            let v = calibrated.intensity_at(x, y).unwrap() * 500_000.0;
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - 200.0).abs() < 4.0 * se, "mc {mean} ± {se}");
        assert!((calibrated.expected_count() - 200.0).abs() < 1e-9);
    }

    #[test]
    fn exp_bilinear_cell_mean_is_exact_for_constants() {
        assert!((cell_mean_exp_bilinear(0.3, 0.3, 0.3, 0.3) - 0.3f64.exp()).abs() < 1e-15);
        // separable case ∫∫ e^{a s} e^{b t} = (e^a − 1)/a · (e^b − 1)/b
        let (a, b): (f64, f64) = (0.8, -0.4);
        let exact = (a.exp() - 1.0) / a * ((b.exp() - 1.0) / b);
        // bilinear interpolant of a s + b t is exact (no st term)
        let v = cell_mean_exp_bilinear(0.0, a, b, a + b);
        assert!((v - exact).abs() < 1e-9);
    }

    #[test]
    fn determinism() {
        let cov = synth(big());
        let spec = IntensitySpec::new(1e-3, vec![0.5, -0.25, 0.0, 0.0, 0.0, 0.0], cov).unwrap();
        assert_eq!(sim_poisson(&spec, &big(), 5).unwrap(), sim_poisson(&spec, &big(), 5).unwrap());
        let tp = ThomasParams::new(4e-4, 5.0).unwrap();
        assert_eq!(sim_thomas(&spec, tp, &big(), 5).unwrap(), sim_thomas(&spec, tp, &big(), 5).unwrap());
    }

    #[test]
    fn near_zero_intensity_is_mostly_empty() {
        let cov = synth(big());
        let spec = IntensitySpec::new(1.0, vec![0.0; 6], cov).unwrap();
        let spec = spec.with_omega(calibrate_omega(&spec, 0.001).unwrap()).unwrap();
        let total: usize = (0..1000).map(|s| sim_poisson(&spec, &big(), s).unwrap().len()).sum();
        assert!((total as f64) / 1000.0 < 0.01);
    }

    #[test]
    fn poisson_mean_count() {
        let cov = synth(big());
        let spec = IntensitySpec::new(1.0, vec![0.0; 6], cov).unwrap();
        let spec = spec.with_omega(calibrate_omega(&spec, 200.0).unwrap()).unwrap();
        let mean = (0..500).map(|s| sim_poisson(&spec, &big(), s).unwrap().len()).sum::<usize>() as f64 / 500.0;
        assert!((mean - 200.0).abs() < 3.0 * (200.0f64 / 500.0).sqrt(), "mean {mean}");
    }

    #[test]
    fn expected_parent_count() {
        let w = Window::rect(500.0, 250.0).unwrap();
        assert!((4e-4 * w.area() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn thomas_requires_positive_parameters() {
        assert!(ThomasParams::new(0.0, 5.0).is_err());
        assert!(ThomasParams::new(4e-4, -1.0).is_err());
    }
}
