//! Geometric Shack-Hartmann slope models.
//!
//! Slopes are wavefront tilts in radians: optical-path differences across a
//! subaperture divided by the distance separating them.

use crate::error::{invalid, Result};
use crate::geometry::{Point, SubapertureGrid};

/// How a subaperture turns a wavefront into an x/y slope pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlopeModel {
    /// Mean path difference between opposite edges, sampled at `samples` points per edge.
    EdgeDifference { samples: usize },
    /// Mean of pixel finite differences on a `pixels × pixels` grid per subaperture.
    AveragedGradient { pixels: usize },
}

impl Default for SlopeModel {
    fn default() -> Self {
        SlopeModel::EdgeDifference { samples: 8 }
    }
}

/// Sample offsets (pitch units, relative to the subaperture centre) of one slope model.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeStencil {
    pub x_plus: Vec<Point>,
    pub x_minus: Vec<Point>,
    pub y_plus: Vec<Point>,
    pub y_minus: Vec<Point>,
    /// Separation between plus and minus samples, pitch units.
    pub baseline: f64,
}

impl SlopeStencil {
    pub fn new(model: SlopeModel) -> Result<Self> {
        let (n, hi, lo) = match model {
            SlopeModel::EdgeDifference { samples } => {
                if samples < 1 {
                    return Err(invalid("edge model needs at least one sample per edge"));
                }
                (samples, 0.5, -0.5)
            }
            SlopeModel::AveragedGradient { pixels } => {
                if pixels < 2 {
                    return Err(invalid(
                        "finite differences need at least 2 pixels per subaperture",
                    ));
                }
                let p = pixels as f64;
                (pixels, 0.5 - 0.5 / p, -0.5 + 0.5 / p)
            }
        };
        let along: Vec<f64> = (0..n).map(|k| -0.5 + (k as f64 + 0.5) / n as f64).collect();
        Ok(Self {
            x_plus: along.iter().map(|&t| [hi, t]).collect(),
            x_minus: along.iter().map(|&t| [lo, t]).collect(),
            y_plus: along.iter().map(|&t| [t, hi]).collect(),
            y_minus: along.iter().map(|&t| [t, lo]).collect(),
            baseline: hi - lo,
        })
    }

    /// Slopes at subaperture centre `c` of the wavefront `opd_m` (metres, argument in pitch units).
    pub fn slopes_at(
        &self,
        c: Point,
        pitch_m: f64,
        opd_m: &mut impl FnMut(Point) -> f64,
    ) -> [f64; 2] {
        let diff = |plus: &[Point], minus: &[Point], f: &mut dyn FnMut(Point) -> f64| {
            let mut acc = 0.0;
            for (p, m) in plus.iter().zip(minus) {
                acc += f([c[0] + p[0], c[1] + p[1]]) - f([c[0] + m[0], c[1] + m[1]]);
            }
            acc
        };
        let norm = 1.0 / (self.x_plus.len() as f64 * self.baseline * pitch_m);
        let sx = diff(&self.x_plus, &self.x_minus, opd_m) * norm;
        let sy = diff(&self.y_plus, &self.y_minus, opd_m) * norm;
        [sx, sy]
    }
}

/// Per-subaperture x and y slope planes, row-major `d_sub × d_sub`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeField {
    pub d_sub: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SlopeField {
    pub fn zeros(d_sub: usize) -> Self {
        Self {
            d_sub,
            x: vec![0.0; d_sub * d_sub],
            y: vec![0.0; d_sub * d_sub],
        }
    }

    /// Unpacks a slope vector (x-slopes then y-slopes over `grid.wfs_cells()`).
    pub fn from_vector(grid: &SubapertureGrid, v: &[f64]) -> Self {
        let n = grid.n_wfs();
        let mut f = Self::zeros(grid.d_sub);
        for (k, &(r, c)) in grid.wfs_cells().iter().enumerate() {
            f.x[r * grid.d_sub + c] = v[k];
            f.y[r * grid.d_sub + c] = v[n + k];
        }
        f
    }

    pub fn to_vector(&self, grid: &SubapertureGrid) -> Vec<f64> {
        let cells = grid.wfs_cells();
        let mut v = Vec::with_capacity(2 * cells.len());
        v.extend(cells.iter().map(|&(r, c)| self.x[r * self.d_sub + c]));
        v.extend(cells.iter().map(|&(r, c)| self.y[r * self.d_sub + c]));
        v
    }
}

/// Slope vector of an analytic wavefront `opd_m(point) -> metres`.
pub fn wavefront_slopes(
    model: SlopeModel,
    grid: &SubapertureGrid,
    mut opd_m: impl FnMut(Point) -> f64,
) -> Result<Vec<f64>> {
    let stencil = SlopeStencil::new(model)?;
    let n = grid.n_wfs();
    let mut v = vec![0.0; 2 * n];
    for (k, &(r, c)) in grid.wfs_cells().iter().enumerate() {
        let [sx, sy] = stencil.slopes_at(grid.center(r, c), grid.pitch_m, &mut opd_m);
        v[k] = sx;
        v[n + k] = sy;
    }
    Ok(v)
}

/// Averaged finite-difference slopes of a sampled phase map.
///
/// `phase` is row-major `n_side × n_side` in radians at `lambda_m`, covering
/// the `d_sub × d_sub` subaperture square with `n_side / d_sub` pixels per
/// subaperture. Slopes outside `mask_wfs` are zero.
pub fn sh_slopes(
    phase: &[f64],
    n_side: usize,
    grid: &SubapertureGrid,
    lambda_m: f64,
) -> Result<SlopeField> {
    if phase.len() != n_side * n_side {
        return Err(invalid(format!(
            "phase needs {} samples, got {}",
            n_side * n_side,
            phase.len()
        )));
    }
    if n_side % grid.d_sub != 0 {
        return Err(invalid(format!(
            "{n_side} pixels do not divide into {} subapertures",
            grid.d_sub
        )));
    }
    let p = n_side / grid.d_sub;
    if p < 2 {
        return Err(invalid("need at least 2 pixels per subaperture"));
    }
    let h = grid.pitch_m / p as f64;
    let scale = lambda_m / (2.0 * std::f64::consts::PI) / ((p - 1) as f64 * h) / p as f64;
    let mut field = SlopeField::zeros(grid.d_sub);
    for &(r, c) in grid.wfs_cells() {
        let (r0, c0) = (r * p, c * p);
        let mut sx = 0.0;
        let mut sy = 0.0;
        for k in 0..p {
            sx += phase[(r0 + k) * n_side + c0 + p - 1] - phase[(r0 + k) * n_side + c0];
            sy += phase[(r0 + p - 1) * n_side + c0 + k] - phase[r0 * n_side + c0 + k];
        }
        field.x[r * grid.d_sub + c] = sx * scale;
        field.y[r * grid.d_sub + c] = sy * scale;
    }
    Ok(field)
}

/// Pixel-centre coordinates (pitch units) of an `n_side` phase grid over `d_sub` subapertures.
pub fn pixel_coordinate(i: usize, n_side: usize, d_sub: usize) -> f64 {
    let p = n_side as f64 / d_sub as f64;
    -(d_sub as f64) / 2.0 + (i as f64 + 0.5) / p
}
