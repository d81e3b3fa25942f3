//! Pupil geometry: mis-registration transforms, binary masks and the
//! Shack-Hartmann subaperture grid.
//!
//! Coordinates are pupil-centred and expressed in units of the subaperture
//! pitch. Grid rows run along `y` and columns along `x`.

use crate::error::{invalid, Result};

pub type Point = [f64; 2];

/// Geometric mismatch between the DM as designed and as seen by the WFS.
///
/// Applied to a point as rotation by `clocking_deg` (counter-clockwise with
/// `y` up), then per-axis scaling, then translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MisRegistration {
    pub shift_x: f64,
    pub shift_y: f64,
    pub clocking_deg: f64,
    pub mag_x: f64,
    pub mag_y: f64,
}

impl Default for MisRegistration {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl MisRegistration {
    pub const IDENTITY: Self = Self {
        shift_x: 0.0,
        shift_y: 0.0,
        clocking_deg: 0.0,
        mag_x: 1.0,
        mag_y: 1.0,
    };

    pub fn new(
        shift_x: f64,
        shift_y: f64,
        clocking_deg: f64,
        mag_x: f64,
        mag_y: f64,
    ) -> Result<Self> {
        let m = Self {
            shift_x,
            shift_y,
            clocking_deg,
            mag_x,
            mag_y,
        };
        m.validate()?;
        Ok(m)
    }

    /// Pure lateral shift.
    pub fn from_shift(shift_x: f64, shift_y: f64) -> Self {
        Self {
            shift_x,
            shift_y,
            ..Self::IDENTITY
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.shift_x,
            self.shift_y,
            self.clocking_deg,
            self.mag_x,
            self.mag_y,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("mis-registration has non-finite fields"));
        }
        if self.mag_x <= 0.0 || self.mag_y <= 0.0 {
            return Err(invalid(format!(
                "magnification must be positive, got ({}, {})",
                self.mag_x, self.mag_y
            )));
        }
        Ok(())
    }

    pub fn shift(&self) -> [f64; 2] {
        [self.shift_x, self.shift_y]
    }

    pub fn with_shift(mut self, shift: [f64; 2]) -> Self {
        self.shift_x = shift[0];
        self.shift_y = shift[1];
        self
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// True when the transform is a pure translation.
    pub fn is_translation(&self) -> bool {
        self.clocking_deg == 0.0 && self.mag_x == 1.0 && self.mag_y == 1.0
    }

    /// Linear part (scale after rotation) as a row-major 2×2 matrix.
    pub fn linear(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.clocking_deg.to_radians().sin_cos();
        [
            [self.mag_x * c, -self.mag_x * s],
            [self.mag_y * s, self.mag_y * c],
        ]
    }

    pub fn affine(&self) -> Affine2 {
        Affine2 {
            m: self.linear(),
            t: self.shift(),
        }
    }

    /// Inverse map: translation removed first, then scaling, then rotation.
    pub fn inverse(&self) -> Affine2 {
        self.affine().inverse()
    }

    /// Maps one point. Steps that are exact no-ops are skipped so that the
    /// identity transform returns its input bit for bit.
    pub fn apply(&self, p: Point) -> Point {
        let [mut x, mut y] = p;
        if self.clocking_deg != 0.0 {
            let (s, c) = self.clocking_deg.to_radians().sin_cos();
            (x, y) = (c * x - s * y, s * x + c * y);
        }
        if self.mag_x != 1.0 {
            x *= self.mag_x;
        }
        if self.mag_y != 1.0 {
            y *= self.mag_y;
        }
        if self.shift_x != 0.0 {
            x += self.shift_x;
        }
        if self.shift_y != 0.0 {
            y += self.shift_y;
        }
        [x, y]
    }
}

/// Applies `m` to every point.
pub fn apply_misreg(points: &[Point], m: &MisRegistration) -> Vec<Point> {
    points.iter().map(|&p| m.apply(p)).collect()
}

/// General planar affine map `p -> m·p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine2 {
    pub m: [[f64; 2]; 2],
    pub t: [f64; 2],
}

impl Affine2 {
    pub const IDENTITY: Self = Self {
        m: [[1.0, 0.0], [0.0, 1.0]],
        t: [0.0, 0.0],
    };

    pub fn apply(&self, p: Point) -> Point {
        [
            self.m[0][0] * p[0] + self.m[0][1] * p[1] + self.t[0],
            self.m[1][0] * p[0] + self.m[1][1] * p[1] + self.t[1],
        ]
    }

    /// Linear part only.
    pub fn apply_linear(&self, v: Point) -> Point {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inverse(&self) -> Affine2 {
        let det = self.determinant();
        let inv = [
            [self.m[1][1] / det, -self.m[0][1] / det],
            [-self.m[1][0] / det, self.m[0][0] / det],
        ];
        let t = [
            -(inv[0][0] * self.t[0] + inv[0][1] * self.t[1]),
            -(inv[1][0] * self.t[0] + inv[1][1] * self.t[1]),
        ];
        Affine2 { m: inv, t }
    }
}

/// Square binary grid, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    n: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            cells: vec![false; n * n],
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            n,
            cells: vec![true; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                cells.push(f(r, c));
            }
        }
        Self { n, cells }
    }

    pub fn from_cells(n: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != n * n {
            return Err(invalid(format!(
                "mask needs {} cells, got {}",
                n * n,
                cells.len()
            )));
        }
        Ok(Self { n, cells })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.n + col]
    }

    /// Out-of-range coordinates read as unset.
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        let n = self.n as isize;
        row >= 0 && col >= 0 && row < n && col < n && self.get(row as usize, col as usize)
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.cells[row * self.n + col] = value;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    /// Row-major list of set cells.
    pub fn indices(&self) -> Vec<(usize, usize)> {
        (0..self.n * self.n)
            .filter(|&i| self.cells[i])
            .map(|i| (i / self.n, i % self.n))
            .collect()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.n == other.n && self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    /// Erosion by a 3×3 structuring element; cells beyond the border count as unset.
    pub fn eroded(&self) -> Mask {
        Mask::from_fn(self.n, |r, c| {
            (-1..=1).all(|dr| (-1..=1).all(|dc| self.get_signed(r as isize + dr, c as isize + dc)))
        })
    }

    /// Mirror across the vertical axis (`x -> -x`).
    pub fn flipped_x(&self) -> Mask {
        Mask::from_fn(self.n, |r, c| self.get(r, self.n - 1 - c))
    }
}

/// Builds the WFS and valid-slope masks of an annular pupil.
///
/// A subaperture belongs to `mask_wfs` when its centre lies within
/// `[obscuration·R, R]` with `R = d_sub / 2`. `mask_valid` is the 3×3 erosion of
/// `mask_wfs`, dropping the outer ring and the corners along the central hole.
pub fn make_annulus_masks(d_sub: usize, obscuration: f64) -> Result<(Mask, Mask)> {
    if d_sub < 4 {
        return Err(invalid(format!("d_sub must be at least 4, got {d_sub}")));
    }
    if !(0.0..1.0).contains(&obscuration) {
        return Err(invalid(format!(
            "obscuration ratio must be in [0, 1), got {obscuration}"
        )));
    }
    let radius = d_sub as f64 / 2.0;
    let inner = obscuration * radius;
    let half = (d_sub as f64 - 1.0) / 2.0;
    let wfs = Mask::from_fn(d_sub, |r, c| {
        let rho = (c as f64 - half).hypot(r as f64 - half);
        rho <= radius && rho >= inner
    });
    let valid = wfs.eroded();
    Ok((wfs, valid))
}

/// Shack-Hartmann lenslet grid over the pupil.
#[derive(Clone, Debug, PartialEq)]
pub struct SubapertureGrid {
    pub d_sub: usize,
    pub pitch_m: f64,
    pub mask_wfs: Mask,
    pub mask_valid: Mask,
    wfs_cells: Vec<(usize, usize)>,
}

impl SubapertureGrid {
    pub fn annular(d_sub: usize, obscuration: f64, pitch_m: f64) -> Result<Self> {
        let (wfs, valid) = make_annulus_masks(d_sub, obscuration)?;
        Self::from_masks(pitch_m, wfs, valid)
    }

    pub fn from_masks(pitch_m: f64, mask_wfs: Mask, mask_valid: Mask) -> Result<Self> {
        if !(pitch_m > 0.0) {
            return Err(invalid(format!("pitch must be positive, got {pitch_m}")));
        }
        if mask_wfs.size() != mask_valid.size() {
            return Err(invalid("mask sizes differ"));
        }
        if !mask_valid.is_subset_of(&mask_wfs) {
            return Err(invalid("valid mask is not contained in the WFS mask"));
        }
        let wfs_cells = mask_wfs.indices();
        Ok(Self {
            d_sub: mask_wfs.size(),
            pitch_m,
            mask_wfs,
            mask_valid,
            wfs_cells,
        })
    }

    /// Centre of subaperture `(row, col)` in pitch units.
    pub fn center(&self, row: usize, col: usize) -> Point {
        let half = (self.d_sub as f64 - 1.0) / 2.0;
        [col as f64 - half, row as f64 - half]
    }

    /// Modelled subapertures in row-major order; slope vectors follow this order.
    pub fn wfs_cells(&self) -> &[(usize, usize)] {
        &self.wfs_cells
    }

    pub fn n_wfs(&self) -> usize {
        self.wfs_cells.len()
    }

    /// Length of a slope vector: all x-slopes then all y-slopes.
    pub fn n_slopes(&self) -> usize {
        2 * self.wfs_cells.len()
    }
}
