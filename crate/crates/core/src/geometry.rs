//! Rectangular observation windows and planar point patterns.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Closed axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Window {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidWindow(format!(
                "[{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self { x_min, x_max, y_min, y_max })
    }

    /// `[0, width] × [0, height]`.
    pub fn rect(width: f64, height: f64) -> Result<Self> {
        Self::new(0.0, width, 0.0, height)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }
    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Boundary points count as inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Grow the window by `margin` on every side.
    pub fn dilate(&self, margin: f64) -> Result<Self> {
        Self::new(
            self.x_min - margin,
            self.x_max + margin,
            self.y_min - margin,
            self.y_max + margin,
        )
    }

    /// Area of `self ∩ (self + (dx, dy))`, the translation edge-correction weight.
    pub fn translate_overlap_area(&self, dx: f64, dy: f64) -> f64 {
        (self.width() - dx.abs()).max(0.0) * (self.height() - dy.abs()).max(0.0)
    }

    /// Map a point to relative coordinates in `[0, 1]²`.
    pub fn to_unit(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x_min) / self.width(), (y - self.y_min) / self.height())
    }
}

/// Free-function form of [`Window::area`].
pub fn area(w: &Window) -> f64 {
    w.area()
}

/// Free-function form of [`Window::translate_overlap_area`].
pub fn translate_overlap_area(w: &Window, shift: (f64, f64)) -> f64 {
    w.translate_overlap_area(shift.0, shift.1)
}

/// A finite set of points observed in a window.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    points: Vec<(f64, f64)>,
    window: Window,
}

impl PointPattern {
    pub fn new(points: Vec<(f64, f64)>, window: Window) -> Result<Self> {
        if let Some(&(x, y)) = points.iter().find(|(x, y)| !window.contains(*x, *y)) {
            return Err(Error::OutOfWindow { x, y });
        }
        Ok(Self { points, window })
    }

    pub fn empty(window: Window) -> Self {
        Self { points: Vec::new(), window }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points inside `w` (closed).
    pub fn count_in(&self, w: &Window) -> usize {
        self.points.iter().filter(|(x, y)| w.contains(*x, *y)).count()
    }

    /// Write as CSV with header `x,y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["x", "y"])?;
        for (x, y) in &self.points {
            wtr.write_record([x.to_string(), y.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read a CSV with header `x,y`; the window comes from the run configuration.
    pub fn read_csv<R: Read>(input: R, window: Window) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
            return Err(Error::Parse(format!("expected header `x,y`, got {headers:?}")));
        }
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad coordinate `{s}`: {e}")))
            };
            points.push((parse(&rec[0])?, parse(&rec[1])?));
        }
        Self::new(points, window)
    }
}

/// Free-function form of [`PointPattern::count_in`].
pub fn count_in(p: &PointPattern, w: &Window) -> usize {
    p.count_in(w)
}
