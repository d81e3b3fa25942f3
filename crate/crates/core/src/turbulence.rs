//! Kolmogorov phase screens and frozen-flow layers.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::fft::{fft2, signed_freq, Direction};
use crate::rng::RngStream;

/// Phase power spectral density constant of Kolmogorov turbulence.
const KOLMOGOROV_PSD: f64 = 0.023;

/// Periodic phase screen in radians at `lambda0_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseScreen {
    n: usize,
    data: Vec<f64>,
    pub sample_pitch_m: f64,
    pub r0_m: f64,
    pub lambda0_m: f64,
}

/// Rectangular pixel window on a screen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub col0: usize,
    pub row0: usize,
    pub cols: usize,
    pub rows: usize,
}

impl PhaseScreen {
    /// Wraps existing samples. `data` is row-major `n × n`.
    pub fn from_data(
        n: usize,
        data: Vec<f64>,
        sample_pitch_m: f64,
        r0_m: f64,
        lambda0_m: f64,
    ) -> Result<Self> {
        if data.len() != n * n {
            return Err(invalid(format!(
                "screen needs {} samples, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self {
            n,
            data,
            sample_pitch_m,
            r0_m,
            lambda0_m,
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    /// Side length in metres.
    pub fn extent_m(&self) -> f64 {
        self.n as f64 * self.sample_pitch_m
    }

    pub fn rms(&self) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear sample at fractional pixel position with periodic wraparound.
    /// Integer positions return the stored sample exactly.
    pub fn sample_px(&self, x: f64, y: f64) -> f64 {
        let n = self.n as i64;
        let xf = x.floor();
        let yf = y.floor();
        let fx = x - xf;
        let fy = y - yf;
        let c0 = (xf as i64).rem_euclid(n) as usize;
        let r0 = (yf as i64).rem_euclid(n) as usize;
        let c1 = (c0 + 1) % self.n;
        let r1 = (r0 + 1) % self.n;
        let row = |r: usize| {
            let a = self.data[r * self.n + c0];
            if fx == 0.0 {
                a
            } else {
                a + fx * (self.data[r * self.n + c1] - a)
            }
        };
        let lo = row(r0);
        if fy == 0.0 {
            lo
        } else {
            lo + fy * (row(r1) - lo)
        }
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: f64) -> PhaseScreen {
        PhaseScreen {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Draws a Kolmogorov screen by filtering complex white noise in Fourier space.
///
/// No subharmonics are added, so the screen is exactly periodic and lacks
/// power on scales comparable to its size.
pub fn generate_screen(
    n_pix: usize,
    sample_pitch_m: f64,
    r0_m: f64,
    lambda0_m: f64,
    rng: RngStream,
) -> Result<PhaseScreen> {
    if n_pix < 64 {
        return Err(invalid(format!(
            "screen must be at least 64 pixels, got {n_pix}"
        )));
    }
    if !(r0_m > 0.0) {
        return Err(invalid(format!("r0 must be positive, got {r0_m}")));
    }
    if !(sample_pitch_m > 0.0) || !(lambda0_m > 0.0) {
        return Err(invalid("sample pitch and wavelength must be positive"));
    }
    let n = n_pix;
    let df = 1.0 / (n as f64 * sample_pitch_m);
    let amp0 = (KOLMOGOROV_PSD * r0_m.powf(-5.0 / 3.0)).sqrt() * df;
    let mut r = rng.rng();
    let mut spec = vec![Complex64::default(); n * n];
    for row in 0..n {
        let fy = signed_freq(row, n) as f64 * df;
        for col in 0..n {
            let re: f64 = r.sample(StandardNormal);
            let im: f64 = r.sample(StandardNormal);
            if row == 0 && col == 0 {
                continue;
            }
            let fx = signed_freq(col, n) as f64 * df;
            let f = fx.hypot(fy);
            spec[row * n + col] = Complex64::new(re, im) * (amp0 * f.powf(-11.0 / 6.0));
        }
    }
    let mut planner = FftPlanner::new();
    fft2(&mut planner, &mut spec, n, n, Direction::Inverse);
    let data = spec.iter().map(|c| c.re).collect();
    Ok(PhaseScreen {
        n,
        data,
        sample_pitch_m,
        r0_m,
        lambda0_m,
    })
}

/// Window of `screen` moved by `v0·t` along `theta0_deg`, bilinearly
/// interpolated and wrapped periodically.
pub fn sample_frozen_flow(
    screen: &PhaseScreen,
    t: f64,
    v0: f64,
    theta0_deg: f64,
    window: Window,
) -> Vec<f64> {
    let (s, c) = theta0_deg.to_radians().sin_cos();
    let travel = v0 * t / screen.sample_pitch_m;
    let dx = travel * c;
    let dy = travel * s;
    let mut out = Vec::with_capacity(window.rows * window.cols);
    for r in 0..window.rows {
        for col in 0..window.cols {
            out.push(screen.sample_px(
                (window.col0 + col) as f64 + dx,
                (window.row0 + r) as f64 + dy,
            ));
        }
    }
    out
}

/// `r0` at wavelength `lambda` given its value at `lambda0`.
pub fn scale_r0(r0_at_lambda0: f64, lambda0: f64, lambda: f64) -> f64 {
    r0_at_lambda0 * (lambda / lambda0).powf(1.2)
}

/// Turbulent layer parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerParams {
    pub cn2_weight: f64,
    pub v0: f64,
    pub theta0_deg: f64,
}

/// Vertical turbulence profile: global `r0` at `lambda0` split across layers.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSet {
    pub r0_m: f64,
    pub lambda0_m: f64,
    pub layers: Vec<LayerParams>,
}

impl LayerSet {
    pub fn single(r0_m: f64, lambda0_m: f64, v0: f64, theta0_deg: f64) -> Self {
        Self {
            r0_m,
            lambda0_m,
            layers: vec![LayerParams {
                cn2_weight: 1.0,
                v0,
                theta0_deg,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(invalid("layer set is empty"));
        }
        let sum: f64 = self.layers.iter().map(|l| l.cn2_weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("Cn2 weights sum to {sum}, expected 1")));
        }
        if self.layers.iter().any(|l| !(l.cn2_weight > 0.0)) {
            return Err(invalid("Cn2 weights must be positive"));
        }
        if !(self.r0_m > 0.0) {
            return Err(invalid("r0 must be positive"));
        }
        Ok(())
    }

    /// Fried parameter of layer `i` on its own.
    pub fn layer_r0(&self, i: usize) -> f64 {
        self.r0_m * self.layers[i].cn2_weight.powf(-0.6)
    }
}

/// Five-layer profile with a 10 cm global Fried parameter at 500 nm.
pub fn gpao_profile() -> LayerSet {
    let rows = [
        (0.67, 12.2, 150.1),
        (0.07, 8.3, 79.6),
        (0.10, 30.3, -70.0),
        (0.10, 56.0, -7.7),
        (0.06, 32.5, -82.6),
    ];
    LayerSet {
        r0_m: 0.10,
        lambda0_m: 500e-9,
        layers: rows
            .iter()
            .map(|&(cn2_weight, v0, theta0_deg)| LayerParams {
                cn2_weight,
                v0,
                theta0_deg,
            })
            .collect(),
    }
}

/// A layer set with one generated screen per layer.
#[derive(Clone, Debug)]
pub struct Atmosphere {
    pub profile: LayerSet,
    pub screens: Vec<PhaseScreen>,
}

impl Atmosphere {
    /// Generates independent screens, layer `i` drawing from `rng.substream(i)`.
    pub fn generate(
        profile: LayerSet,
        n_pix: usize,
        sample_pitch_m: f64,
        rng: RngStream,
    ) -> Result<Self> {
        profile.validate()?;
        let screens = (0..profile.layers.len())
            .map(|i| {
                generate_screen(
                    n_pix,
                    sample_pitch_m,
                    profile.layer_r0(i),
                    profile.lambda0_m,
                    rng.substream(i as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { profile, screens })
    }

    /// Optical path difference in metres at pupil position `(x_m, y_m)` and time `t`.
    /// The pupil centre sits at the centre of every screen at `t = 0`.
    pub fn opd_m(&self, x_m: f64, y_m: f64, t: f64) -> f64 {
        self.at_time(t).opd_m(x_m, y_m)
    }

    /// Snapshot of the frozen-flow offsets at time `t`.
    pub fn at_time(&self, t: f64) -> AtmosphereSnapshot<'_> {
        let offsets = self
            .profile
            .layers
            .iter()
            .zip(&self.screens)
            .map(|(layer, screen)| {
                let (s, c) = layer.theta0_deg.to_radians().sin_cos();
                let half = screen.size() as f64 / 2.0;
                [
                    layer.v0 * t * c / screen.sample_pitch_m + half,
                    layer.v0 * t * s / screen.sample_pitch_m + half,
                ]
            })
            .collect();
        AtmosphereSnapshot { atm: self, offsets }
    }
}

/// Atmosphere frozen at one instant.
pub struct AtmosphereSnapshot<'a> {
    atm: &'a Atmosphere,
    offsets: Vec<[f64; 2]>,
}

impl AtmosphereSnapshot<'_> {
    pub fn opd_m(&self, x_m: f64, y_m: f64) -> f64 {
        let mut acc = 0.0;
        for (screen, off) in self.atm.screens.iter().zip(&self.offsets) {
            let inv = 1.0 / screen.sample_pitch_m;
            acc += screen.sample_px(x_m * inv + off[0], y_m * inv + off[1]);
        }
        acc * self.atm.profile.lambda0_m / (2.0 * std::f64::consts::PI)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn structure_function(screen: &PhaseScreen, lag: usize) -> f64 {
        let n = screen.size();
        let mut acc = 0.0;
        for r in 0..n {
            for c in 0..n {
                let v = screen.get(r, c);
                let dx = screen.get(r, (c + lag) % n) - v;
                let dy = screen.get((r + lag) % n, c) - v;
                acc += dx * dx + dy * dy;
            }
        }
        acc / (2 * n * n) as f64
    }

    #[test]
    fn structure_function_follows_kolmogorov() {
        let r0_px = 8.0;
        let lags = [2usize, 4, 6, 8, 10];
        let mut d = vec![0.0; lags.len()];
        for k in 0..50 {
            let s = generate_screen(256, 1.0, r0_px, 500e-9, RngStream::new(11, k)).unwrap();
            for (i, &lag) in lags.iter().enumerate() {
                d[i] += structure_function(&s, lag) / 50.0;
            }
        }
        for (i, &lag) in lags.iter().enumerate() {
            let ratio = d[i] / (6.88 * (lag as f64 / r0_px).powf(5.0 / 3.0));
            assert!((0.6..=1.1).contains(&ratio), "lag {lag}: ratio {ratio}");
        }
    }

    #[test]
    fn piston_free() {
        let s = generate_screen(128, 0.02, 0.1, 500e-9, RngStream::new(1, 2)).unwrap();
        assert!(s.mean().abs() <= 1e-10 * s.rms());
    }

    #[test]
    fn doubling_r0_scales_amplitude() {
        let a = generate_screen(64, 0.05, 0.1, 500e-9, RngStream::new(5, 5)).unwrap();
        let b = generate_screen(64, 0.05, 0.2, 500e-9, RngStream::new(5, 5)).unwrap();
        let f = 2f64.powf(-5.0 / 6.0);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x * f - y).abs() <= 1e-12 * a.rms());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(generate_screen(32, 0.1, 0.1, 5e-7, RngStream::new(0, 0)).is_err());
        assert!(generate_screen(64, 0.1, 0.0, 5e-7, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn frozen_flow_windows() {
        let s = generate_screen(64, 0.5, 3.0, 500e-9, RngStream::new(2, 0)).unwrap();
        let w = Window {
            col0: 5,
            row0: 7,
            cols: 10,
            rows: 9,
        };
        let at0 = sample_frozen_flow(&s, 0.0, 12.0, 33.0, w);
        for r in 0..9 {
            for c in 0..10 {
                assert_eq!(at0[r * 10 + c].to_bits(), s.get(7 + r, 5 + c).to_bits());
            }
        }
        // one full period along x: 64 px × 0.5 m = 32 m at 2 m/s
        let wrapped = sample_frozen_flow(&s, 16.0, 2.0, 0.0, w);
        assert_eq!(wrapped, at0);
        // half a pixel along x
        let half = sample_frozen_flow(&s, 0.125, 2.0, 0.0, w);
        for r in 0..9 {
            for c in 0..10 {
                let expected = 0.5 * (s.get(7 + r, 5 + c) + s.get(7 + r, 6 + c));
                assert!((half[r * 10 + c] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn r0_wavelength_scaling() {
        assert!((scale_r0(0.12, 500e-9, 750e-9) - 0.195).abs() < 5e-4);
        assert_eq!(scale_r0(0.1, 500e-9, 500e-9), 0.1);
    }

    #[test]
    fn gpao_layers() {
        let p = gpao_profile();
        assert_eq!(p.layers.len(), 5);
        assert_eq!(p.layers[3].v0, 56.0);
        let sum: f64 = p.layers.iter().map(|l| l.cn2_weight).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!((p.layer_r0(0) - 0.10 * 0.67f64.powf(-0.6)).abs() < 1e-15);
        p.validate().unwrap();
    }
}
