//! Open-loop lateral-shift estimation by masked least-squares correlation of a
//! measured modal IM against a reference modal IM.
//!
//! For each integer lag `δ` the best scale
//!
//! ```text
//! α(δ) = Σ_m Σ_x v(x)·ĨM_m(x)·w(x-δ)·IM_m(x-δ) / Σ_m Σ_x v(x)·w(x-δ)·IM_m(x-δ)²
//! ```
//!
//! is computed with zero-padded FFT correlations (`v` is the valid-slope mask
//! of the measurement, `w` the WFS mask of the reference, and every mode
//! contributes its x and y planes). The map is then sinc-interpolated by
//! spectral zero-padding and its maximum gives the shift.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::fft::{fft2, signed_freq, wrap_index, Direction};
use crate::geometry::Mask;
use crate::optics::ModalIm;

/// Lags whose denominator falls below this fraction of the largest one are invalid.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

/// Above this factor the interpolated map is only evaluated around the coarse maxima.
pub const FULL_UPSAMPLE_LIMIT: usize = 16;

/// The peak search skips lags whose denominator is below this fraction of the
/// largest one. There the masks share only a handful of subapertures and
/// slope noise divided by a tiny overlap can outgrow the true peak.
pub const PEAK_MIN_OVERLAP: f64 = 0.05;

/// Coarse maxima searched by the local refinement.
const REFINE_CANDIDATES: usize = 8;

/// Relative difference under which two map values count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Square map over lags `origin + i·step`, `i = 0..n`, on both axes.
/// Row index runs along y, column index along x.
#[derive(Clone, Debug, PartialEq)]
pub struct LagGrid {
    pub n: usize,
    pub origin: f64,
    pub step: f64,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl LagGrid {
    /// `[δx, δy]` of a cell.
    pub fn lag(&self, row: usize, col: usize) -> [f64; 2] {
        [
            self.origin + col as f64 * self.step,
            self.origin + row as f64 * self.step,
        ]
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.n + col;
        self.valid[i].then_some(self.values[i])
    }

    /// Largest valid cell, ties resolved toward the smallest shift and then
    /// the smallest polar angle.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        let mut best: Option<Candidate> = None;
        for r in 0..self.n {
            for c in 0..self.n {
                if let Some(v) = self.get(r, c) {
                    let cand = Candidate {
                        value: v,
                        lag: self.lag(r, c),
                        cell: (r, c),
                    };
                    if best.as_ref().map_or(true, |b| cand.beats(b)) {
                        best = Some(cand);
                    }
                }
            }
        }
        best.map(|b| b.cell)
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    value: f64,
    lag: [f64; 2],
    cell: (usize, usize),
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        let scale = self.value.abs().max(other.value.abs());
        if (self.value - other.value).abs() > TIE_TOLERANCE * scale {
            return self.value > other.value;
        }
        let (ra, rb) = (
            self.lag[0].hypot(self.lag[1]),
            other.lag[0].hypot(other.lag[1]),
        );
        if (ra - rb).abs() > 1e-12 {
            return ra < rb;
        }
        polar_angle(self.lag) < polar_angle(other.lag)
    }
}

fn polar_angle(p: [f64; 2]) -> f64 {
    let a = p[1].atan2(p[0]);
    if a < 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

/// Correlation map over integer lags `-(d-1)..=d-1` and its interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaMap {
    /// Subapertures across the correlated planes.
    pub d: usize,
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    /// `α` on integer lags.
    pub base: LagGrid,
    pub m_up: usize,
    /// `α` on lags spaced by `1 / m_up`; equal to `base` when `m_up = 1`.
    pub upsampled: LagGrid,
}

impl AlphaMap {
    /// Side of the integer-lag map, `2d - 1`.
    pub fn side(&self) -> usize {
        self.base.n
    }

    pub fn max_lag(&self) -> usize {
        self.d - 1
    }

    /// `α` at integer lag `(δx, δy)`, `None` when invalid or out of range.
    pub fn at_lag(&self, dx: i64, dy: i64) -> Option<f64> {
        let r = self.max_lag() as i64;
        if dx.abs() > r || dy.abs() > r {
            return None;
        }
        self.base.get((dy + r) as usize, (dx + r) as usize)
    }
}

/// Result of [`estimate_shift_modal`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModalShift {
    /// `[δx, δy]` in subaperture pitches.
    pub shift: [f64; 2],
    /// Interpolated `α` at the maximum.
    pub alpha: f64,
    /// `alpha` times the reference amplitude, micrometres.
    pub amplitude_um: f64,
}

/// Slope planes of a modal IM: x then y plane for each mode, row-major `d × d`.
pub fn modal_planes(im: &ModalIm) -> Vec<Vec<f64>> {
    let mut planes = Vec::with_capacity(2 * im.n_modes());
    for m in 0..im.n_modes() {
        let f = im.field(m);
        planes.push(f.x);
        planes.push(f.y);
    }
    planes
}

/// Reference side of the correlation, reusable across measurements.
#[derive(Clone, Debug)]
pub struct ModalCorrelator {
    d: usize,
    pad: usize,
    n_planes: usize,
    mask_valid: Mask,
    reference_conj: Vec<Vec<Complex64>>,
    denominator: Vec<f64>,
    reference_amplitude_um: f64,
}

impl ModalCorrelator {
    /// `reference` holds `d × d` planes; `mask_wfs` weights the reference and
    /// `mask_valid` the measurements.
    pub fn new(
        reference: &[Vec<f64>],
        d: usize,
        mask_valid: &Mask,
        mask_wfs: &Mask,
    ) -> Result<Self> {
        if reference.is_empty() {
            return Err(invalid("no reference planes"));
        }
        if mask_valid.size() != d || mask_wfs.size() != d {
            return Err(invalid(format!("masks must be {d} × {d}")));
        }
        if let Some(p) = reference.iter().find(|p| p.len() != d * d) {
            return Err(invalid(format!(
                "reference plane has {} values, expected {}",
                p.len(),
                d * d
            )));
        }
        if mask_valid.count() == 0 || mask_wfs.count() == 0 {
            return Err(invalid("masks select no subaperture"));
        }
        let pad = 2 * d;
        let mut planner = FftPlanner::new();
        let mut reference_conj = Vec::with_capacity(reference.len());
        let mut energy = vec![0.0; d * d];
        for plane in reference {
            let masked: Vec<f64> = (0..d * d)
                .map(|i| if mask_wfs.cells()[i] { plane[i] } else { 0.0 })
                .collect();
            for (e, v) in energy.iter_mut().zip(&masked) {
                *e += v * v;
            }
            let mut spec = padded_spectrum(&mut planner, &masked, d, pad);
            spec.iter_mut().for_each(|z| *z = z.conj());
            reference_conj.push(spec);
        }
        let valid: Vec<f64> = mask_valid
            .cells()
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        let valid_spec = padded_spectrum(&mut planner, &valid, d, pad);
        let mut energy_spec = padded_spectrum(&mut planner, &energy, d, pad);
        energy_spec
            .iter_mut()
            .zip(&valid_spec)
            .for_each(|(e, v)| *e = v * e.conj());
        let denominator = lag_map(&mut planner, energy_spec, d, pad);
        Ok(Self {
            d,
            pad,
            n_planes: reference.len(),
            mask_valid: mask_valid.clone(),
            reference_conj,
            denominator,
            reference_amplitude_um: 1.0,
        })
    }

    /// Correlator for a reference modal IM and its grid masks.
    pub fn from_modal_im(reference: &ModalIm, mask_valid: &Mask, mask_wfs: &Mask) -> Result<Self> {
        if reference.n_modes() == 0 {
            return Err(invalid("reference IM has no modes"));
        }
        let mut c = Self::new(
            &modal_planes(reference),
            reference.grid.d_sub,
            mask_valid,
            mask_wfs,
        )?;
        c.reference_amplitude_um = reference.amplitude_um;
        Ok(c)
    }

    pub fn reference_amplitude_um(&self) -> f64 {
        self.reference_amplitude_um
    }

    /// Integer-lag `α` map of measured planes (same order as the reference).
    pub fn correlate(&self, measured: &[Vec<f64>]) -> Result<AlphaMap> {
        if measured.len() != self.n_planes {
            return Err(invalid(format!(
                "measured {} planes, reference has {}",
                measured.len(),
                self.n_planes
            )));
        }
        let (d, pad) = (self.d, self.pad);
        let mut planner = FftPlanner::new();
        let mut acc = vec![Complex64::default(); pad * pad];
        for (plane, ref_conj) in measured.iter().zip(&self.reference_conj) {
            if plane.len() != d * d {
                return Err(invalid("measured plane has the wrong size"));
            }
            let masked: Vec<f64> = (0..d * d)
                .map(|i| {
                    if self.mask_valid.cells()[i] {
                        plane[i]
                    } else {
                        0.0
                    }
                })
                .collect();
            let spec = padded_spectrum(&mut planner, &masked, d, pad);
            for ((a, s), r) in acc.iter_mut().zip(&spec).zip(ref_conj) {
                *a += s * r;
            }
        }
        let numerator = lag_map(&mut planner, acc, d, pad);
        let dmax = self.denominator.iter().copied().fold(0.0, f64::max);
        if !(dmax > 0.0) {
            return Err(invalid("reference has no energy inside the masks"));
        }
        let floor = DENOMINATOR_FLOOR * dmax;
        let side = 2 * d - 1;
        let mut values = vec![0.0; side * side];
        let mut valid = vec![false; side * side];
        for i in 0..side * side {
            if self.denominator[i] > floor {
                values[i] = numerator[i] / self.denominator[i];
                valid[i] = values[i].is_finite();
            }
        }
        if valid.iter().all(|&v| !v) {
            return Err(invalid("no valid lag"));
        }
        let base = LagGrid {
            n: side,
            origin: -((d - 1) as f64),
            step: 1.0,
            values,
            valid,
        };
        Ok(AlphaMap {
            d,
            numerator,
            denominator: self.denominator.clone(),
            upsampled: base.clone(),
            base,
            m_up: 1,
        })
    }

    pub fn correlate_im(&self, measured: &ModalIm) -> Result<AlphaMap> {
        self.correlate(&modal_planes(measured))
    }

    /// Shift and amplitude of a measured modal IM.
    pub fn estimate(&self, measured: &ModalIm, m_up: usize) -> Result<ModalShift> {
        let map = self.correlate_im(measured)?;
        let (shift, alpha) = peak(&map, m_up)?;
        Ok(ModalShift {
            shift,
            alpha,
            amplitude_um: alpha * self.reference_amplitude_um,
        })
    }
}

fn padded_spectrum(
    planner: &mut FftPlanner<f64>,
    plane: &[f64],
    d: usize,
    pad: usize,
) -> Vec<Complex64> {
    let mut buf = vec![Complex64::default(); pad * pad];
    for r in 0..d {
        for c in 0..d {
            buf[r * pad + c] = Complex64::new(plane[r * d + c], 0.0);
        }
    }
    fft2(planner, &mut buf, pad, pad, Direction::Forward);
    buf
}

/// Inverse transform of a cross-spectrum, unwrapped to lags `-(d-1)..=d-1`.
fn lag_map(
    planner: &mut FftPlanner<f64>,
    mut spec: Vec<Complex64>,
    d: usize,
    pad: usize,
) -> Vec<f64> {
    fft2(planner, &mut spec, pad, pad, Direction::Inverse);
    let norm = 1.0 / (pad * pad) as f64;
    let side = 2 * d - 1;
    let r = (d - 1) as i64;
    let mut out = vec![0.0; side * side];
    for iy in 0..side {
        let qy = wrap_index(iy as i64 - r, pad);
        for ix in 0..side {
            let qx = wrap_index(ix as i64 - r, pad);
            out[iy * side + ix] = spec[qy * pad + qx].re * norm;
        }
    }
    out
}

/// Correlation map of a measured modal IM against a reference one.
pub fn masked_modal_correlation(
    measured: &ModalIm,
    reference: &ModalIm,
    mask_valid: &Mask,
    mask_wfs: &Mask,
) -> Result<AlphaMap> {
    if measured.modes != reference.modes {
        return Err(invalid("measured and reference IMs cover different modes"));
    }
    if measured.grid.d_sub != reference.grid.d_sub {
        return Err(invalid("measured and reference IMs use different grids"));
    }
    ModalCorrelator::from_modal_im(reference, mask_valid, mask_wfs)?.correlate_im(measured)
}

/// Spectrum of the base map with invalid lags zeroed.
fn base_spectrum(map: &AlphaMap) -> Vec<Complex64> {
    let n = map.side();
    let mut buf: Vec<Complex64> = map
        .base
        .values
        .iter()
        .zip(&map.base.valid)
        .map(|(&v, &ok)| Complex64::new(if ok { v } else { 0.0 }, 0.0))
        .collect();
    fft2(&mut FftPlanner::new(), &mut buf, n, n, Direction::Forward);
    buf
}

/// Upsampled cell `u` (per axis) is valid when it lies inside the lag range
/// and the base lags around it are valid.
fn upsampled_valid(map: &AlphaMap, m_up: usize, uy: usize, ux: usize) -> bool {
    let n = map.side();
    let last = (n - 1) * m_up;
    if uy > last || ux > last {
        return false;
    }
    let (y0, y1) = (uy / m_up, uy.div_ceil(m_up));
    let (x0, x1) = (ux / m_up, ux.div_ceil(m_up));
    [(y0, x0), (y0, x1), (y1, x0), (y1, x1)]
        .iter()
        .all(|&(r, c)| map.base.valid[r * n + c])
}

/// Sinc interpolation of the `α` map by zero-padding its spectrum `m_up` times.
pub fn upsample_alpha(map: &AlphaMap, m_up: usize) -> Result<AlphaMap> {
    if m_up == 0 {
        return Err(invalid("upsampling factor must be at least 1"));
    }
    if m_up == 1 {
        return Ok(AlphaMap {
            m_up: 1,
            upsampled: map.base.clone(),
            ..map.clone()
        });
    }
    let n = map.side();
    let big = n * m_up;
    let spec = base_spectrum(map);
    let mut buf = vec![Complex64::default(); big * big];
    for iy in 0..n {
        let qy = wrap_index(signed_freq_odd(iy, n), big);
        for ix in 0..n {
            let qx = wrap_index(signed_freq_odd(ix, n), big);
            buf[qy * big + qx] = spec[iy * n + ix];
        }
    }
    fft2(
        &mut FftPlanner::new(),
        &mut buf,
        big,
        big,
        Direction::Inverse,
    );
    let norm = 1.0 / (n * n) as f64;
    let mut values = vec![0.0; big * big];
    let mut valid = vec![false; big * big];
    for uy in 0..big {
        for ux in 0..big {
            let i = uy * big + ux;
            if upsampled_valid(map, m_up, uy, ux) {
                values[i] = buf[i].re * norm;
                valid[i] = true;
            }
        }
    }
    let upsampled = LagGrid {
        n: big,
        origin: map.base.origin,
        step: 1.0 / m_up as f64,
        values,
        valid,
    };
    Ok(AlphaMap {
        m_up,
        upsampled,
        ..map.clone()
    })
}

/// Signed frequency for an odd-length axis (the base map side is always odd).
fn signed_freq_odd(i: usize, n: usize) -> i64 {
    signed_freq(i, n)
}

/// Interpolated map at cells `(uy, ux)` of the `m_up`-times finer grid, by a
/// direct matrix DFT of the base spectrum.
fn interpolate_cells(
    map: &AlphaMap,
    spec: &[Complex64],
    m_up: usize,
    rows: &[usize],
    cols: &[usize],
) -> DMatrix<f64> {
    let n = map.side();
    let tau = std::f64::consts::TAU;
    let kernel = |us: &[usize]| {
        DMatrix::from_fn(us.len(), n, |i, k| {
            let pos = us[i] as f64 / m_up as f64;
            Complex64::from_polar(1.0, tau * signed_freq_odd(k, n) as f64 * pos / n as f64)
        })
    };
    let f = DMatrix::from_row_slice(n, n, spec);
    let out = kernel(rows) * f * kernel(cols).transpose();
    let norm = 1.0 / (n * n) as f64;
    out.map(|z| z.re * norm)
}

/// Location and value of the interpolated maximum.
///
/// Up to [`FULL_UPSAMPLE_LIMIT`] the whole map is interpolated; above it only
/// windows of ±1 lag around the largest coarse values are evaluated, on the
/// same fine grid.
pub fn peak(map: &AlphaMap, m_up: usize) -> Result<([f64; 2], f64)> {
    if m_up == 0 {
        return Err(invalid("upsampling factor must be at least 1"));
    }
    let eligible = overlap_eligible(map);
    let n = map.side();
    if m_up <= FULL_UPSAMPLE_LIMIT {
        let mut up = upsample_alpha(map, m_up)?.upsampled;
        for uy in 0..up.n {
            for ux in 0..up.n {
                if !near_eligible(&eligible, n, m_up, uy, ux) {
                    up.valid[uy * up.n + ux] = false;
                }
            }
        }
        let (r, c) = up
            .argmax()
            .ok_or_else(|| Error::Numerical("no valid lag".into()))?;
        return Ok((up.lag(r, c), up.values[r * up.n + c]));
    }
    let mut coarse: Vec<(f64, usize)> = (0..n * n)
        .filter(|&i| eligible[i])
        .map(|i| (map.base.values[i], i))
        .collect();
    if coarse.is_empty() {
        return Err(Error::Numerical("no valid lag".into()));
    }
    coarse.sort_by(|a, b| b.0.total_cmp(&a.0));
    coarse.truncate(REFINE_CANDIDATES);
    let spec = base_spectrum(map);
    let last = ((n - 1) * m_up) as i64;
    let step = 1.0 / m_up as f64;
    let mut best: Option<Candidate> = None;
    for &(_, i) in &coarse {
        let window = |center: usize| -> Vec<usize> {
            let c = (center * m_up) as i64;
            ((c - m_up as i64).max(0)..=(c + m_up as i64).min(last))
                .map(|u| u as usize)
                .collect()
        };
        let rows = window(i / n);
        let cols = window(i % n);
        let vals = interpolate_cells(map, &spec, m_up, &rows, &cols);
        for (a, &uy) in rows.iter().enumerate() {
            for (b, &ux) in cols.iter().enumerate() {
                if !upsampled_valid(map, m_up, uy, ux) || !near_eligible(&eligible, n, m_up, uy, ux)
                {
                    continue;
                }
                let lag = [
                    map.base.origin + ux as f64 * step,
                    map.base.origin + uy as f64 * step,
                ];
                let cand = Candidate {
                    value: vals[(a, b)],
                    lag,
                    cell: (uy, ux),
                };
                if best.as_ref().map_or(true, |b| cand.beats(b)) {
                    best = Some(cand);
                }
            }
        }
    }
    let b = best.ok_or_else(|| Error::Numerical("no valid lag".into()))?;
    Ok((b.lag, b.value))
}

/// Valid base lags with enough mask overlap to take part in the peak search.
fn overlap_eligible(map: &AlphaMap) -> Vec<bool> {
    // hand-built maps carry no denominator
    if map.denominator.len() != map.base.valid.len() {
        return map.base.valid.clone();
    }
    let dmax = map.denominator.iter().copied().fold(0.0, f64::max);
    map.base
        .valid
        .iter()
        .zip(&map.denominator)
        .map(|(&ok, &den)| ok && den >= PEAK_MIN_OVERLAP * dmax)
        .collect()
}

/// Fine cell whose surrounding base lags are all eligible.
fn near_eligible(eligible: &[bool], n: usize, m_up: usize, uy: usize, ux: usize) -> bool {
    let (y0, y1) = (uy / m_up, uy.div_ceil(m_up));
    let (x0, x1) = (ux / m_up, ux.div_ceil(m_up));
    if y1 >= n || x1 >= n {
        return false;
    }
    [(y0, x0), (y0, x1), (y1, x0), (y1, x1)]
        .iter()
        .all(|&(r, c)| eligible[r * n + c])
}

/// Shift of `measured` relative to `reference` and the amplitude correction.
pub fn estimate_shift_modal(
    measured: &ModalIm,
    reference: &ModalIm,
    mask_valid: &Mask,
    mask_wfs: &Mask,
    m_up: usize,
) -> Result<ModalShift> {
    let map = masked_modal_correlation(measured, reference, mask_valid, mask_wfs)?;
    let (shift, alpha) = peak(&map, m_up)?;
    Ok(ModalShift {
        shift,
        alpha,
        amplitude_um: alpha * reference.amplitude_um,
    })
}
