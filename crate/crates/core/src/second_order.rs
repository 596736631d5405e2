//! Second-order structure: Thomas pair correlation and K-function, the
//! translation-corrected inhomogeneous K estimator, and minimum contrast
//! estimation of `(κ, γ)`.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::PointPattern;
use crate::simulate::ThomasParams;

/// Number of radii in a default K-function grid.
pub const DEFAULT_R_GRID_LEN: usize = 512;
/// Exponent applied to K before comparing empirical and theoretical curves.
pub const CONTRAST_EXPONENT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcfModel {
    Poisson,
    Thomas(ThomasParams),
}

impl PcfModel {
    /// `g(r)`; for the Thomas process `1 + exp(−r²/4γ²)/(4πγ²κ)`, the
    /// self-convolution of the Gaussian dispersal density divided by κ.
    pub fn pcf(&self, r: f64) -> f64 {
        1.0 + self.excess(r)
    }

    /// `g(r) − 1`.
    pub fn excess(&self, r: f64) -> f64 {
        match self {
            PcfModel::Poisson => 0.0,
            PcfModel::Thomas(tp) => {
                let s = 4.0 * tp.gamma * tp.gamma;
                (-r * r / s).exp() / (PI * s * tp.kappa)
            }
        }
    }

    /// Radius beyond which `g − 1` is below `rel · (g(0) − 1)`.
    pub fn cutoff(&self, rel: f64) -> f64 {
        match self {
            PcfModel::Poisson => 0.0,
            PcfModel::Thomas(tp) => 2.0 * tp.gamma * (-rel.ln()).sqrt(),
        }
    }
}

pub fn pcf(model: &PcfModel, r: f64) -> f64 {
    model.pcf(r)
}

/// `K(r) = πr² + (1 − exp(−r²/4γ²))/κ`.
pub fn k_theoretical(tp: &ThomasParams, r: f64) -> f64 {
    PI * r * r + (-(-r * r / (4.0 * tp.gamma * tp.gamma)).exp_m1()) / tp.kappa
}

/// `n` equispaced radii from 0 to `r_max`.
pub fn r_grid(r_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|k| r_max * k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KEstimate {
    pub r_grid: Vec<f64>,
    pub k_hat: Vec<f64>,
}

impl KEstimate {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["r", "k_hat"])?;
        for (r, k) in self.r_grid.iter().zip(&self.k_hat) {
            wtr.write_record([r.to_string(), k.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Inhomogeneous K with translation edge correction,
/// `K̂(r) = Σ_{u≠v, ‖u−v‖≤r} 1/{λ(u)λ(v)|W ∩ (W + u − v)|}`.
pub fn k_inhom<F>(p: &PointPattern, intensity_hat: F, r_grid: &[f64]) -> Result<KEstimate>
where
    F: Fn(f64, f64) -> f64,
{
    let lambda: Vec<f64> = p.points().iter().map(|&(x, y)| intensity_hat(x, y)).collect();
    k_inhom_with_values(p, &lambda, r_grid)
}

/// As [`k_inhom`] with the intensity already evaluated at each point.
pub fn k_inhom_with_values(p: &PointPattern, lambda: &[f64], r_grid: &[f64]) -> Result<KEstimate> {
    if p.len() < 2 {
        return Err(Error::EmptyPattern);
    }
    if lambda.len() != p.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), got: lambda.len() });
    }
    if let Some(bad) = lambda.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::Config(format!("intensity must be positive at every point, got {bad}")));
    }
    if r_grid.is_empty() || r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("r grid must be strictly increasing".into()));
    }
    let w = p.window();
    let r_max = *r_grid.last().unwrap();
    let pts = p.points();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| pts[a].0.total_cmp(&pts[b].0));
    let mut increments = vec![0.0; r_grid.len()];
    for (oi, &i) in order.iter().enumerate() {
        let (xi, yi) = pts[i];
        for &j in &order[oi + 1..] {
            let (xj, yj) = pts[j];
            let dx = xj - xi;
            if dx > r_max {
                break;
            }
            let dy = yj - yi;
            let d = (dx * dx + dy * dy).sqrt();
            if d > r_max {
                continue;
            }
            let a = w.translate_overlap_area(dx, dy);
            if a <= 0.0 {
                continue;
            }
            let k = r_grid.partition_point(|&r| r < d);
            increments[k] += 2.0 / (lambda[i] * lambda[j] * a);
        }
    }
    let mut acc = 0.0;
    let k_hat = increments
        .into_iter()
        .map(|inc| {
            acc += inc;
            acc
        })
        .collect();
    Ok(KEstimate { r_grid: r_grid.to_vec(), k_hat })
}

/// Search box for `(log κ, log γ)` in minimum contrast.
#[derive(Debug, Clone, Copy)]
struct Bounds {
    log_kappa: (f64, f64),
    log_gamma: (f64, f64),
}

impl Bounds {
    fn contains(&self, v: &[f64; 2]) -> bool {
        v[0] >= self.log_kappa.0 && v[0] <= self.log_kappa.1 && v[1] >= self.log_gamma.0 && v[1] <= self.log_gamma.1
    }
    fn clamp(&self, v: [f64; 2]) -> [f64; 2] {
        [v[0].clamp(self.log_kappa.0, self.log_kappa.1), v[1].clamp(self.log_gamma.0, self.log_gamma.1)]
    }
}

struct Contrast<'a> {
    r: &'a [f64],
    target: Vec<f64>,
    bounds: Bounds,
}

impl Contrast<'_> {
    fn value(&self, v: &[f64; 2]) -> f64 {
        if !self.bounds.contains(v) {
            return f64::INFINITY;
        }
        let tp = ThomasParams { kappa: v[0].exp(), gamma: v[1].exp() };
        let mut prev: Option<(f64, f64)> = None;
        let mut total = 0.0;
        for (&r, &t) in self.r.iter().zip(&self.target) {
            let d = t - k_theoretical(&tp, r).powf(CONTRAST_EXPONENT);
            let f = d * d;
            if let Some((r0, f0)) = prev {
                total += 0.5 * (r - r0) * (f + f0);
            }
            prev = Some((r, f));
        }
        total
    }
}

/// Minimise `∫_{r_min}^{r_max} {K̂(r)^{1/4} − K(r; κ, γ)^{1/4}}² dr` (trapezoid
/// rule on the estimate's grid, `r_min` its first positive radius) by
/// Nelder–Mead in `(log κ, log γ)` from four starts.
///
/// γ is confined to `[r_min/2, r_max]`: the contrast carries no information
/// about dispersal beyond the fitting range. κ is confined to six decades
/// either side of `1/(π r_max²)`; clustering-free data drives κ̂ to the top
/// of that range.
pub fn min_contrast(kest: &KEstimate, r_max: f64) -> Result<ThomasParams> {
    let grid = &kest.r_grid;
    if grid.len() < 3 || !(r_max > grid[1]) || r_max > *grid.last().unwrap() * (1.0 + 1e-12) {
        return Err(Error::Config(format!("r_max {r_max} outside the estimate's radius grid")));
    }
    let lo = 1;
    let hi = grid.partition_point(|&r| r <= r_max * (1.0 + 1e-12));
    let r = &grid[lo..hi];
    let target: Vec<f64> = kest.k_hat[lo..hi].iter().map(|k| k.max(0.0).powf(CONTRAST_EXPONENT)).collect();
    let r_min = r[0];
    let area_scale = PI * r_max * r_max;
    let bounds = Bounds {
        log_kappa: ((1e-6 / area_scale).ln(), (1e6 / area_scale).ln()),
        log_gamma: ((0.5 * r_min).ln(), r_max.ln()),
    };
    let contrast = Contrast { r, target, bounds };

    let k_end = kest.k_hat[hi - 1];
    let excess = k_end - area_scale;
    let kappa_c = if excess > 0.0 { 1.0 / excess } else { 100.0 / area_scale };
    let mut starts = Vec::with_capacity(4);
    for kf in [0.1, 10.0] {
        for gf in [0.01, 0.5] {
            starts.push(bounds.clamp([(kappa_c * kf).ln(), (r_max * gf).ln()]));
        }
    }
    let f = |v: &[f64; 2]| contrast.value(v);
    let best_start = starts.iter().map(f).fold(f64::INFINITY, f64::min);
    let mut best: Option<([f64; 2], f64)> = None;
    for s in &starts {
        let (mut x, mut fx) = nelder_mead(&f, *s, 0.5, 4000);
        // restart once from the optimum with a fresh simplex
        let (x2, fx2) = nelder_mead(&f, x, 0.05, 4000);
        if fx2 <= fx {
            x = x2;
            fx = fx2;
        }
        if fx.is_finite() && best.is_none_or(|(_, b)| fx < b) {
            best = Some((x, fx));
        }
    }
    match best {
        Some((x, fx)) if fx < best_start || fx == 0.0 => Ok(ThomasParams { kappa: x[0].exp(), gamma: x[1].exp() }),
        Some((_, fx)) => Err(Error::OptimFailure(format!(
            "no start improved the contrast (best start {best_start:.4e}, best end {fx:.4e})"
        ))),
        None => Err(Error::OptimFailure("contrast not finite at any start".into())),
    }
}

/// Two-dimensional Nelder–Mead with standard coefficients.
fn nelder_mead<F: Fn(&[f64; 2]) -> f64>(f: &F, x0: [f64; 2], step: f64, max_evals: usize) -> ([f64; 2], f64) {
    let mut simplex = [x0, [x0[0] + step, x0[1]], [x0[0], x0[1] + step]];
    let mut values = simplex.map(|v| f(&v));
    let mut evals = 3;
    while evals < max_evals {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.map(|i| simplex[i]);
        values = idx.map(|i| values[i]);
        let size = (1..3)
            .flat_map(|k| (0..2).map(move |d| (k, d)))
            .map(|(k, d)| (simplex[k][d] - simplex[0][d]).abs())
            .fold(0.0, f64::max);
        if size < 1e-11 {
            break;
        }
        let centroid = [(simplex[0][0] + simplex[1][0]) / 2.0, (simplex[0][1] + simplex[1][1]) / 2.0];
        let worst = simplex[2];
        let along = |t: f64| [centroid[0] + t * (worst[0] - centroid[0]), centroid[1] + t * (worst[1] - centroid[1])];
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[2] = xe;
                values[2] = fe;
            } else {
                simplex[2] = xr;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = xr;
            values[2] = fr;
        } else {
            let xc = if fr < values[2] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            evals += 1;
            if fc < values[2].min(fr) {
                simplex[2] = xc;
                values[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = [
                        simplex[0][0] + 0.5 * (simplex[k][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[k][1] - simplex[0][1]),
                    ];
                    values[k] = f(&simplex[k]);
                }
                evals += 2;
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best], values[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Window;

    fn thomas() -> ThomasParams {
        ThomasParams { kappa: 4e-4, gamma: 5.0 }
    }

    #[test]
    fn pcf_examples() {
        assert_eq!(pcf(&PcfModel::Poisson, 3.0), 1.0);
        let t = PcfModel::Thomas(thomas());
        // the tail bound at 10γ needs 4πγ²κ ≳ 14; at κ = 4e-4 it holds from 12γ
        assert!((t.pcf(60.0) - 1.0).abs() < 1e-12);
        assert!(t.pcf(51.0) - 1.0 > 1e-12);
        let dense = PcfModel::Thomas(ThomasParams { kappa: 0.05, gamma: 5.0 });
        assert!((dense.pcf(51.0) - 1.0).abs() < 1e-12);
        let at0 = 1.0 + 1.0 / (4.0 * PI * 25.0 * 4e-4);
        assert!((t.pcf(0.0) - at0).abs() < 1e-12);
        assert!((t.pcf(0.0) - 8.9577).abs() < 1e-4);
    }

    #[test]
    fn convolution_at_zero_matches_numerical_2d_convolution() {
        // (k*k)(0) = ∫ k(w)² dw for the N(0, γ² I) density
        let g: f64 = 5.0;
        let k = |x: f64, y: f64| (-(x * x + y * y) / (2.0 * g * g)).exp() / (2.0 * PI * g * g);
        let h = 0.05;
        let mut acc = 0.0;
        let n = (40.0 / h) as i64;
        for i in -n..=n {
            for j in -n..=n {
                let v = k(i as f64 * h, j as f64 * h);
                acc += v * v;
            }
        }
        acc *= h * h;
        let t = PcfModel::Thomas(thomas());
        assert!(((1.0 + acc / 4e-4) - t.pcf(0.0)).abs() < 1e-8);
    }

    #[test]
    fn pcf_monotone() {
        let t = PcfModel::Thomas(thomas());
        let denser = PcfModel::Thomas(ThomasParams { kappa: 8e-4, gamma: 5.0 });
        for k in 0..60 {
            let r = k as f64 * 0.5;
            assert!(t.pcf(r + 0.5) < t.pcf(r));
            assert!(t.pcf(r) > 1.0);
            assert!(denser.pcf(r) < t.pcf(r));
        }
    }

    #[test]
    fn k_theoretical_examples() {
        let tp = thomas();
        assert_eq!(k_theoretical(&tp, 0.0), 0.0);
        let far = 500.0;
        assert!((k_theoretical(&tp, far) - (PI * far * far + 1.0 / 4e-4)).abs() < 1e-6);
        let want = PI * 100.0 + (1.0 - (-1.0f64).exp()) / 4e-4;
        assert!((k_theoretical(&tp, 10.0) - want).abs() < 1e-9);
    }

    #[test]
    fn k_theoretical_matches_radial_integral_of_pcf() {
        let tp = thomas();
        let model = PcfModel::Thomas(tp);
        // composite Simpson of 2πr g(r) on [0, R]
        for &big_r in &[1.0, 10.0, 25.0, 50.0] {
            let n = 20_000;
            let h = big_r / n as f64;
            let f = |r: f64| 2.0 * PI * r * model.pcf(r);
            let mut s = f(0.0) + f(big_r);
            for i in 1..n {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s *= h / 3.0;
            let k = k_theoretical(&tp, big_r);
            assert!(((s - k) / k).abs() < 1e-8, "R={big_r}: {s} vs {k}");
            assert!(k_theoretical(&tp, big_r * 1.01) > k);
        }
    }

    #[test]
    fn k_inhom_two_points() {
        let w = Window::rect(10.0, 10.0).unwrap();
        let p = PointPattern::new(vec![(2.0, 2.0), (5.0, 6.0)], w).unwrap();
        let grid = r_grid(8.0, 17);
        let k = k_inhom(&p, |_, _| 0.5, &grid).unwrap();
        let jump = 2.0 / (0.25 * 42.0);
        for (r, v) in grid.iter().zip(&k.k_hat) {
            if *r < 5.0 {
                assert_eq!(*v, 0.0);
            } else {
                assert!((v - jump).abs() < 1e-15);
            }
        }
        assert!(k_inhom(&PointPattern::new(vec![(1.0, 1.0)], w).unwrap(), |_, _| 1.0, &grid).is_err());
    }

    #[test]
    fn k_inhom_relabel_invariant() {
        let w = Window::rect(10.0, 10.0).unwrap();
        let pts = vec![(1.0, 1.0), (2.0, 3.5), (7.0, 2.0), (6.5, 6.0), (3.0, 9.0)];
        let mut rev = pts.clone();
        rev.reverse();
        let lam = |x: f64, y: f64| 0.05 + 0.01 * x + 0.002 * y;
        let grid = r_grid(5.0, 64);
        let a = k_inhom(&PointPattern::new(pts, w).unwrap(), lam, &grid).unwrap();
        let b = k_inhom(&PointPattern::new(rev, w).unwrap(), lam, &grid).unwrap();
        for (x, y) in a.k_hat.iter().zip(&b.k_hat) {
            assert!((x - y).abs() <= 1e-12 * x.abs());
        }
        assert_eq!(a.k_hat[0], 0.0);
        assert!(a.k_hat.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn min_contrast_recovers_exact_parameters() {
        for tp in [thomas(), ThomasParams { kappa: 4e-4, gamma: 15.0 }] {
            let r_max = if tp.gamma == 5.0 { 20.0 } else { 50.0 };
            let grid = r_grid(r_max, DEFAULT_R_GRID_LEN);
            let kest = KEstimate { k_hat: grid.iter().map(|&r| k_theoretical(&tp, r)).collect(), r_grid: grid };
            let est = min_contrast(&kest, r_max).unwrap();
            assert!(((est.kappa - tp.kappa) / tp.kappa).abs() < 1e-4, "{est:?}");
            assert!(((est.gamma - tp.gamma) / tp.gamma).abs() < 1e-4, "{est:?}");
        }
    }

    #[test]
    fn min_contrast_on_poisson_k_pushes_kappa_up() {
        let grid = r_grid(20.0, DEFAULT_R_GRID_LEN);
        let kest = KEstimate { k_hat: grid.iter().map(|&r| PI * r * r).collect(), r_grid: grid };
        let est = min_contrast(&kest, 20.0).unwrap();
        let excess = PcfModel::Thomas(est).excess(0.0);
        assert!(excess < 1e-3, "{est:?}");
    }

    #[test]
    fn min_contrast_rejects_bad_range() {
        let grid = r_grid(20.0, 64);
        let kest = KEstimate { k_hat: grid.iter().map(|&r| PI * r * r).collect(), r_grid: grid };
        assert!(min_contrast(&kest, 40.0).is_err());
    }

    #[test]
    fn k_csv_has_two_columns() {
        let kest = KEstimate { r_grid: vec![0.0, 1.0], k_hat: vec![0.0, 3.0] };
        let mut buf = Vec::new();
        kest.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "r,k_hat\n0,0\n1,3\n");
    }
}
