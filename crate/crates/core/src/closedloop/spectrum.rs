//! Spatio-temporal spectrum of command telemetry and its empirical
//! symmetric/antisymmetric correlation.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::aoloop::TelemetryCube;
use crate::error::{invalid, Result};
use crate::fft::{fft_axis, signed_freq, wrap_index, Direction};

/// Cross-spectra with either part below this modulus are invalid.
pub const SPECTRUM_FLOOR: f64 = 1e-300;

/// Spatial frequency on the actuator grid, in cycles per `d_act` pitches.
pub type Wavevector = [i64; 2];

/// 3D spectrum of a telemetry cube with its per-node temporal mean removed.
///
/// The temporal transform uses `exp(-2πi f t)`, matching the delays of the
/// transfer functions. The spatial transform uses `exp(+2πi k·x)`: with the
/// mirror shifted by `+δ` as seen by the sensor, this makes the coupling phase
/// of frequency `k` equal to `+2π k·δ`.
#[derive(Clone, Debug)]
pub struct FourierTelemetry {
    pub d_act: usize,
    pub n_frames: usize,
    /// Loop period, seconds.
    pub dt: f64,
    /// Row-major `[f][ky][kx]`.
    spectrum: Vec<Complex64>,
}

impl FourierTelemetry {
    /// Frequency of temporal bin `j`, Hz (signed).
    pub fn frequency(&self, j: usize) -> f64 {
        signed_freq(j, self.n_frames) as f64 / (self.n_frames as f64 * self.dt)
    }

    /// Strictly positive temporal bins below Nyquist: `1..=(n_frames - 1) / 2`.
    pub fn positive_bins(&self) -> std::ops::RangeInclusive<usize> {
        1..=(self.n_frames - 1) / 2
    }

    pub fn positive_frequencies(&self) -> Vec<f64> {
        self.positive_bins().map(|j| self.frequency(j)).collect()
    }

    /// Transform value at wavevector `k` and temporal bin `j`.
    pub fn full(&self, k: Wavevector, j: usize) -> Complex64 {
        let n = self.d_act;
        let qy = wrap_index(k[1], n);
        let qx = wrap_index(k[0], n);
        self.spectrum[(j * n + qy) * n + qx]
    }

    /// Symmetric part `½[F(k) + F(-k)]`.
    pub fn c1(&self, k: Wavevector, j: usize) -> Complex64 {
        0.5 * (self.full(k, j) + self.full([-k[0], -k[1]], j))
    }

    /// Antisymmetric part `(i/2)[F(k) - F(-k)]`.
    pub fn c2(&self, k: Wavevector, j: usize) -> Complex64 {
        Complex64::new(0.0, 0.5) * (self.full(k, j) - self.full([-k[0], -k[1]], j))
    }

    /// Wavevectors counted once per `±k` pair: `kx > 0`, or `kx = 0` and `ky > 0`.
    /// Nyquist rows and columns of even grids are left out.
    pub fn half_plane(&self) -> Vec<Wavevector> {
        half_plane(self.d_act)
    }
}

pub(crate) fn half_plane(d_act: usize) -> Vec<Wavevector> {
    let hi = ((d_act - 1) / 2) as i64;
    let mut ks = Vec::new();
    for ky in -hi..=hi {
        for kx in 0..=hi {
            if kx > 0 || ky > 0 {
                ks.push([kx, ky]);
            }
        }
    }
    ks
}

/// 3D transform of a telemetry cube.
pub fn split_telemetry(cube: &TelemetryCube) -> Result<FourierTelemetry> {
    let n = cube.d_act;
    let nt = cube.n_frames;
    if nt < 2 || n < 2 {
        return Err(invalid("telemetry too small to transform"));
    }
    if cube.frames.len() != nt * n * n {
        return Err(invalid("telemetry size does not match its shape"));
    }
    if cube.frames.iter().any(|v| !v.is_finite()) {
        return Err(invalid("telemetry contains non-finite values"));
    }
    let plane = n * n;
    let mut mean = vec![0.0; plane];
    for t in 0..nt {
        for (m, v) in mean
            .iter_mut()
            .zip(&cube.frames[t * plane..(t + 1) * plane])
        {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nt as f64);
    let mut data: Vec<Complex64> = cube
        .frames
        .iter()
        .enumerate()
        .map(|(i, &v)| Complex64::new(v - mean[i % plane], 0.0))
        .collect();
    let shape = [nt, n, n];
    let mut planner = FftPlanner::new();
    fft_axis(&mut planner, &mut data, &shape, 0, Direction::Forward);
    fft_axis(&mut planner, &mut data, &shape, 1, Direction::Inverse);
    fft_axis(&mut planner, &mut data, &shape, 2, Direction::Inverse);
    Ok(FourierTelemetry {
        d_act: n,
        n_frames: nt,
        dt: cube.dt,
        spectrum: data,
    })
}

/// `Im[c1 c̄2 / (|c1||c2|)]` at one wavevector and temporal bin.
pub fn correlation_at(ft: &FourierTelemetry, k: Wavevector, j: usize) -> Option<f64> {
    let (a, b) = (ft.c1(k, j), ft.c2(k, j));
    let (na, nb) = (a.norm(), b.norm());
    if na < SPECTRUM_FLOOR || nb < SPECTRUM_FLOOR {
        return None;
    }
    Some((a * b.conj()).im / (na * nb))
}

/// Empirical correlation over the half-plane and positive frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaMap {
    pub d_act: usize,
    pub ks: Vec<Wavevector>,
    pub freqs_hz: Vec<f64>,
    /// Row-major `[k][f]`.
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl EtaMap {
    pub fn n_freqs(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn get(&self, ik: usize, jf: usize) -> Option<f64> {
        let i = ik * self.n_freqs() + jf;
        self.valid[i].then_some(self.values[i])
    }
}

pub fn empirical_correlation(ft: &FourierTelemetry) -> EtaMap {
    let ks = ft.half_plane();
    let bins: Vec<usize> = ft.positive_bins().collect();
    let mut values = Vec::with_capacity(ks.len() * bins.len());
    let mut valid = Vec::with_capacity(ks.len() * bins.len());
    for &k in &ks {
        for &j in &bins {
            match correlation_at(ft, k, j) {
                Some(v) => {
                    values.push(v);
                    valid.push(true);
                }
                None => {
                    values.push(0.0);
                    valid.push(false);
                }
            }
        }
    }
    EtaMap {
        d_act: ft.d_act,
        ks,
        freqs_hz: ft.positive_frequencies(),
        values,
        valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cube_from(n: usize, nt: usize, f: impl Fn(usize, usize, usize) -> f64) -> TelemetryCube {
        let mut cube = TelemetryCube::new(n, 1e-3, 1e9);
        for t in 0..nt {
            let frame: Vec<f64> = (0..n * n).map(|i| f(t, i / n, i % n)).collect();
            cube.push_frame(&frame);
        }
        cube
    }

    fn random_cube(n: usize, nt: usize, seed: u64) -> TelemetryCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = vec![0.0; n * n * nt];
        crate::rng::fill_normal(&mut rng, &mut v);
        cube_from(n, nt, |t, r, c| v[(t * n + r) * n + c])
    }

    /// Direct triple sum with the same sign conventions.
    fn direct(cube: &TelemetryCube, k: Wavevector, j: usize) -> Complex64 {
        let (n, nt) = (cube.d_act, cube.n_frames);
        let plane = n * n;
        let mut mean = vec![0.0; plane];
        for t in 0..nt {
            for i in 0..plane {
                mean[i] += cube.frames[t * plane + i] / nt as f64;
            }
        }
        let mut acc = Complex64::default();
        let tau = std::f64::consts::TAU;
        for t in 0..nt {
            for r in 0..n {
                for c in 0..n {
                    let v = cube.frames[t * plane + r * n + c] - mean[r * n + c];
                    let phase = -tau * (j * t) as f64 / nt as f64
                        + tau * (k[0] * c as i64 + k[1] * r as i64) as f64 / n as f64;
                    acc += v * Complex64::from_polar(1.0, phase);
                }
            }
        }
        acc
    }

    #[test]
    fn matches_direct_transform_and_reconstructs() {
        let cube = random_cube(5, 12, 1);
        let ft = split_telemetry(&cube).unwrap();
        for k in [[1, 0], [2, -1], [0, 2], [-2, 2]] {
            for j in 0..12 {
                let d = direct(&cube, k, j);
                assert!((ft.full(k, j) - d).norm() < 1e-9);
                let i = Complex64::new(0.0, 1.0);
                assert!((ft.c1(k, j) - i * ft.c2(k, j) - d).norm() < 1e-9);
                assert!((ft.c1(k, j) + i * ft.c2(k, j) - ft.full([-k[0], -k[1]], j)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn temporal_conjugate_symmetry() {
        let cube = random_cube(5, 16, 2);
        let ft = split_telemetry(&cube).unwrap();
        for k in ft.half_plane() {
            for j in 1..16 {
                let jm = 16 - j;
                assert!((ft.c1(k, jm) - ft.c1(k, j).conj()).norm() < 1e-9);
                assert!((ft.c2(k, jm) - ft.c2(k, j).conj()).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn pure_cosine_and_sine_modes() {
        let (n, nt) = (7, 32);
        let tau = std::f64::consts::TAU;
        let g = |t: usize| (0.3 * t as f64).sin() + 0.2 * (t as f64 * 1.7).cos();
        let k0 = [2i64, 1];
        let phase =
            move |r: usize, c: usize| tau * (k0[0] * c as i64 + k0[1] * r as i64) as f64 / n as f64;
        let cos_cube = cube_from(n, nt, |t, r, c| phase(r, c).cos() * g(t));
        let sin_cube = cube_from(n, nt, |t, r, c| phase(r, c).sin() * g(t));
        let ft_cos = split_telemetry(&cos_cube).unwrap();
        let ft_sin = split_telemetry(&sin_cube).unwrap();
        let g_mean = (0..nt).map(g).sum::<f64>() / nt as f64;
        for j in 0..nt {
            let gj: Complex64 = (0..nt)
                .map(|t| {
                    (g(t) - g_mean) * Complex64::from_polar(1.0, -tau * (j * t) as f64 / nt as f64)
                })
                .sum();
            let scale = (n * n) as f64 / 2.0;
            assert!(ft_cos.c2(k0, j).norm() < 1e-9);
            assert!((ft_cos.c1(k0, j) - gj * scale).norm() < 1e-9);
            assert!(ft_sin.c1(k0, j).norm() < 1e-9);
        }
    }

    #[test]
    fn correlation_bounds_and_antisymmetry() {
        let cube = random_cube(6, 40, 3);
        let ft = split_telemetry(&cube).unwrap();
        let eta = empirical_correlation(&ft);
        assert!(eta.values.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        for &k in &[[1i64, 2], [2, -2], [0, 1]] {
            for j in 1..20 {
                let v = correlation_at(&ft, k, j).unwrap();
                let vk = correlation_at(&ft, [-k[0], -k[1]], j).unwrap();
                let vf = correlation_at(&ft, k, 40 - j).unwrap();
                assert!((v + vk).abs() < 1e-12);
                assert!((v + vf).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_gives_unit_correlation() {
        let n = 5;
        let nt = 16;
        let tau = std::f64::consts::TAU;
        let k0 = [1i64, 0];
        // c1 ∝ cos(ωt), c2 ∝ sin(ωt): a quarter-period lag between the parts.
        let cube = cube_from(n, nt, |t, r, c| {
            let ph = tau * (k0[0] * c as i64 + k0[1] * r as i64) as f64 / n as f64;
            let w = tau * 3.0 * t as f64 / nt as f64;
            ph.cos() * w.cos() + ph.sin() * w.sin()
        });
        let ft = split_telemetry(&cube).unwrap();
        let v = correlation_at(&ft, k0, 3).unwrap();
        assert!((v.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_noise_has_no_mean_correlation() {
        let cube = random_cube(21, 256, 4);
        let eta = empirical_correlation(&split_telemetry(&cube).unwrap());
        let n = eta.values.len() as f64;
        let mean = eta.values.iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn half_plane_counts_each_pair_once() {
        for n in [5usize, 6, 41] {
            let ks = half_plane(n);
            let hi = ((n - 1) / 2) as i64;
            assert_eq!(ks.len() as i64, ((2 * hi + 1).pow(2) - 1) / 2);
            for k in &ks {
                assert!(!ks.contains(&[-k[0], -k[1]]));
            }
        }
    }
}
