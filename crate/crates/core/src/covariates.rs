//! Gridded spatial covariates with bilinear evaluation.
//!
//! A field stores values at the nodes of a regular `nx × ny` lattice spanning
//! its window, node `(i, j)` sitting at
//! `(x_min + i·Lx/(nx−1), y_min + j·Ly/(ny−1))`. Evaluation between nodes is
//! bilinear, so `z(u)` is continuous and never leaves the range of the four
//! surrounding node values. Because the lattice is defined in relative
//! coordinates, a field can be moved to a different window without touching
//! its values.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Window;

/// Default lattice for the 2:1 windows used in the studies.
pub const DEFAULT_GRID: (usize, usize) = (201, 101);

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateField {
    name: String,
    window: Window,
    nx: usize,
    ny: usize,
    /// Row-major in y: `values[j * nx + i]`.
    values: Vec<f64>,
}

impl CovariateField {
    pub fn new(name: impl Into<String>, window: Window, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Dimension(format!("grid must be at least 2x2, got {nx}x{ny}")));
        }
        if values.len() != nx * ny {
            return Err(Error::DimensionMismatch { expected: nx * ny, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("covariate grid contains non-finite values".into()));
        }
        Ok(Self { name: name.into(), window, nx, ny, values })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn window(&self) -> &Window {
        &self.window
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Same values spanning a different window.
    pub fn rescaled(&self, window: Window) -> Self {
        Self { window, ..self.clone() }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !self.window.contains(x, y) {
            return Err(Error::OutOfWindow { x, y });
        }
        let c = Cell::locate(&self.window, self.nx, self.ny, x, y);
        Ok(c.interpolate(&self.values, self.nx))
    }

    /// Grid mean and population standard deviation.
    pub fn grid_moments(&self) -> (f64, f64) {
        moments(&self.values)
    }
}

/// Bilinear cell lookup shared by every field on a lattice.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cell {
    i: usize,
    j: usize,
    fx: f64,
    fy: f64,
}

impl Cell {
    pub(crate) fn locate(w: &Window, nx: usize, ny: usize, x: f64, y: f64) -> Self {
        let (s, t) = w.to_unit(x, y);
        let gx = (s.clamp(0.0, 1.0)) * (nx - 1) as f64;
        let gy = (t.clamp(0.0, 1.0)) * (ny - 1) as f64;
        let i = (gx.floor() as usize).min(nx - 2);
        let j = (gy.floor() as usize).min(ny - 2);
        Self { i, j, fx: gx - i as f64, fy: gy - j as f64 }
    }

    pub(crate) fn interpolate(&self, values: &[f64], nx: usize) -> f64 {
        let k = self.j * nx + self.i;
        let v00 = values[k];
        let v10 = values[k + 1];
        let v01 = values[k + nx];
        let v11 = values[k + nx + 1];
        let bottom = v00 + self.fx * (v10 - v00);
        let top = v01 + self.fx * (v11 - v01);
        bottom + self.fy * (top - bottom)
    }
}

fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Covariates `z_1, …, z_p` sharing one window and lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSet {
    fields: Vec<CovariateField>,
    standardized: bool,
}

impl CovariateSet {
    pub fn new(fields: Vec<CovariateField>) -> Result<Self> {
        let Some(first) = fields.first() else {
            return Err(Error::Dimension("covariate set needs at least one field".into()));
        };
        for f in &fields[1..] {
            if f.window != first.window || f.dims() != first.dims() {
                return Err(Error::Dimension(format!(
                    "field `{}` does not share the window and grid of `{}`",
                    f.name, first.name
                )));
            }
        }
        Ok(Self { fields, standardized: false })
    }

    pub fn fields(&self) -> &[CovariateField] {
        &self.fields
    }
    pub fn len(&self) -> usize {
        self.fields.len()
    }
    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
    pub fn window(&self) -> &Window {
        &self.fields[0].window
    }
    pub fn dims(&self) -> (usize, usize) {
        self.fields[0].dims()
    }
    pub fn is_standardized(&self) -> bool {
        self.standardized
    }
    pub fn names(&self) -> Vec<String> {
        self.fields.iter().map(|f| f.name.clone()).collect()
    }

    /// Evaluate every field at `(x, y)` into `out`.
    pub fn eval_into(&self, x: f64, y: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: out.len() });
        }
        let w = self.window();
        if !w.contains(x, y) {
            return Err(Error::OutOfWindow { x, y });
        }
        let (nx, ny) = self.dims();
        let cell = Cell::locate(w, nx, ny, x, y);
        for (o, f) in out.iter_mut().zip(&self.fields) {
            *o = cell.interpolate(&f.values, nx);
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, y, &mut out)?;
        Ok(out)
    }

    /// All fields moved onto `window` (values untouched).
    pub fn rescaled(&self, window: Window) -> Self {
        Self {
            fields: self.fields.iter().map(|f| f.rescaled(window)).collect(),
            standardized: self.standardized,
        }
    }

    /// Center and scale each field by its grid mean and population sd.
    pub fn standardize(&self) -> Result<Self> {
        let mut fields = Vec::with_capacity(self.len());
        for f in &self.fields {
            let (mean, sd) = f.grid_moments();
            if !(sd > 1e-12 * mean.abs().max(1.0)) {
                return Err(Error::DegenerateCovariate(f.name.clone()));
            }
            let values = f.values.iter().map(|v| (v - mean) / sd).collect();
            fields.push(CovariateField { values, ..f.clone() });
        }
        Ok(Self { fields, standardized: true })
    }
}

/// Free-function form of [`CovariateField::eval`].
pub fn eval(f: &CovariateField, u: (f64, f64)) -> Result<f64> {
    f.eval(u.0, u.1)
}

/// Free-function form of [`CovariateSet::standardize`].
pub fn standardize(s: &CovariateSet) -> Result<CovariateSet> {
    s.standardize()
}

const SYNTH_TERMS: usize = 4;
const MAX_ABS_CORRELATION: f64 = 0.9;

/// Smooth synthetic covariates: each field is a few low-frequency cosine
/// waves with seeded phases plus a seeded bilinear trend, standardized.
/// Fields whose grid correlation with an earlier field reaches 0.9 in
/// magnitude are redrawn.
pub fn synth_covariates(seed: u64, p: usize, window: Window, grid: (usize, usize)) -> Result<CovariateSet> {
    if p == 0 {
        return Err(Error::Dimension("need at least one covariate".into()));
    }
    let (nx, ny) = grid;
    if nx < 2 || ny < 2 {
        return Err(Error::Dimension(format!("grid must be at least 2x2, got {nx}x{ny}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fields: Vec<CovariateField> = Vec::with_capacity(p);
    while fields.len() < p {
        let values = synth_surface(&mut rng, nx, ny);
        let (mean, sd) = moments(&values);
        if sd < 1e-8 {
            continue;
        }
        let values: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
        let collinear = fields
            .iter()
            .any(|f| standardized_correlation(&f.values, &values).abs() >= MAX_ABS_CORRELATION);
        if collinear {
            continue;
        }
        let name = format!("z{}", fields.len() + 1);
        fields.push(CovariateField::new(name, window, nx, ny, values)?);
    }
    CovariateSet::new(fields)?.standardize()
}

fn synth_surface(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> Vec<f64> {
    struct Wave {
        amp: f64,
        fx: f64,
        fy: f64,
        phase: f64,
    }
    let waves: Vec<Wave> = (0..SYNTH_TERMS)
        .map(|_| Wave {
            amp: rng.random_range(0.5..1.5),
            fx: rng.random_range(0.25..2.5) * if rng.random::<bool>() { 1.0 } else { -1.0 },
            fy: rng.random_range(0.25..2.5),
            phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect();
    let trend: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let mut values = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let t = j as f64 / (ny - 1) as f64;
        for i in 0..nx {
            let s = i as f64 / (nx - 1) as f64;
            let mut v = trend[0] * s + trend[1] * t + trend[2] * s * t;
            for w in &waves {
                v += w.amp * (2.0 * PI * (w.fx * s + w.fy * t) + w.phase).cos();
            }
            values.push(v);
        }
    }
    values
}

/// Correlation of two mean-zero, unit-sd grids.
fn standardized_correlation(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// Load a covariate field from a CSV matrix of reals. Row `j` holds the
/// nodes at the j-th y level (first row = `y_min`), column `i` the x level.
pub fn load_grid(path: impl AsRef<Path>, window: Window) -> Result<CovariateField> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "covariate".into());
    let file = std::fs::File::open(path)?;
    read_grid(file, name, window)
}

pub fn read_grid<R: Read>(input: R, name: impl Into<String>, window: Window) -> Result<CovariateField> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut values = Vec::new();
    let mut nx = None;
    let mut ny = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        match nx {
            None => nx = Some(rec.len()),
            Some(n) if n != rec.len() => {
                return Err(Error::Parse(format!("row {} has {} entries, expected {n}", ny + 1, rec.len())))
            }
            _ => {}
        }
        for s in rec.iter() {
            let v = s
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad value `{s}`: {e}")))?;
            values.push(v);
        }
        ny += 1;
    }
    let nx = nx.unwrap_or(0);
    if nx < 2 || ny < 2 {
        return Err(Error::Dimension(format!("grid must be at least 2x2, got {ny} rows x {nx} columns")));
    }
    CovariateField::new(name, window, nx, ny, values)
}
