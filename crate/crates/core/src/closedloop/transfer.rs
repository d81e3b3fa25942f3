//! Continuous-time loop transfer functions and the small-shift correlation signature.

use rustfft::num_complex::Complex64;

use crate::config::LoopConfig;
use crate::error::{invalid, Error, Result};

/// `|1 + μ|` below this marks a pole of the closed loop.
pub const POLE_TOLERANCE: f64 = 1e-9;

/// WFS, controller, DM and open-loop responses at one frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopTransfer {
    pub wfs: Complex64,
    pub controller: Complex64,
    pub dm: Complex64,
    /// `dm · controller · wfs`
    pub open_loop: Complex64,
}

fn hold(tau: f64, f: f64) -> Complex64 {
    let x = Complex64::new(0.0, -std::f64::consts::TAU * tau * f);
    (Complex64::new(1.0, 0.0) - x.exp()) / (-x)
}

fn delay(tau: f64, f: f64) -> Complex64 {
    Complex64::from_polar(1.0, -std::f64::consts::TAU * tau * f)
}

fn check_frequency(config: &LoopConfig, f: f64) -> Result<()> {
    let nyquist = 0.5 / config.tau_rtc;
    if !(f > 0.0) || f > nyquist * (1.0 + 1e-12) {
        return Err(invalid(format!("frequency {f} Hz outside (0, {nyquist}]")));
    }
    Ok(())
}

/// Exposure-integrating WFS, leaky integrator with latency and zero-order-hold DM.
pub fn transfer_functions(config: &LoopConfig, f: f64) -> Result<LoopTransfer> {
    check_frequency(config, f)?;
    let wfs = hold(config.tau_wfs, f);
    let dm = hold(config.tau_dm, f);
    let controller = config.g_int * delay(config.tau_lat, f)
        / (1.0 - (1.0 - config.g_leak) * delay(config.tau_rtc, f));
    Ok(LoopTransfer {
        wfs,
        controller,
        dm,
        open_loop: dm * controller * wfs,
    })
}

/// Open-loop response of the frame-sampled loop: measurements reach the
/// mirror `delay_frames` periods after exposure.
pub fn sampled_open_loop(config: &LoopConfig, f: f64) -> Result<Complex64> {
    check_frequency(config, f)?;
    let lag = config.delay_frames() as f64 * config.tau_rtc;
    Ok(config.g_int * delay(lag, f) / (1.0 - (1.0 - config.g_leak) * delay(config.tau_rtc, f)))
}

/// `2·Im(μ̄ / (1 + μ̄))`, or `None` at a pole.
pub fn eta0_from_open_loop(mu: Complex64) -> Option<f64> {
    let denom = 1.0 + mu.conj();
    (denom.norm() >= POLE_TOLERANCE).then(|| 2.0 * (mu.conj() / denom).im)
}

/// Imaginary part of the noise-driven correlation between the symmetric and
/// antisymmetric parts of a spatial frequency coupled by phase `theta`:
/// `2 sinθ · Im[(1 + μ cosθ) μ̄] / (|1 + μ cosθ|² + |μ sinθ|²)`.
pub fn coupled_correlation(mu: Complex64, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let a = 1.0 + mu * c;
    2.0 * s * (a * mu.conj()).im / (a.norm_sqr() + (mu * s).norm_sqr())
}

/// `η0` sampled on a frequency grid; poles are flagged invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct Eta0Curve {
    pub freqs_hz: Vec<f64>,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

pub fn eta0_curve(config: &LoopConfig, freqs_hz: &[f64]) -> Result<Eta0Curve> {
    let mut values = Vec::with_capacity(freqs_hz.len());
    let mut valid = Vec::with_capacity(freqs_hz.len());
    for &f in freqs_hz {
        let mu = transfer_functions(config, f)?.open_loop;
        match eta0_from_open_loop(mu) {
            Some(v) if v.is_finite() => {
                values.push(v);
                valid.push(true);
            }
            _ => {
                values.push(0.0);
                valid.push(false);
            }
        }
    }
    if valid.iter().all(|&v| !v) && !freqs_hz.is_empty() {
        return Err(Error::Numerical(
            "every frequency sits on a loop pole".into(),
        ));
    }
    Ok(Eta0Curve {
        freqs_hz: freqs_hz.to_vec(),
        values,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nyquist_values() {
        let cfg = LoopConfig::default();
        let t = transfer_functions(&cfg, 500.0).unwrap();
        let expect_s = Complex64::new(0.0, -2.0 / std::f64::consts::PI);
        assert!((t.wfs - expect_s).norm() < 1e-12);
        assert!((t.dm - expect_s).norm() < 1e-12);
        assert!((t.controller - Complex64::new(-0.25, 0.0)).norm() < 1e-12);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((t.open_loop - Complex64::new(1.0 / pi2, 0.0)).norm() < 1e-12);
        assert!(eta0_from_open_loop(t.open_loop).unwrap().abs() < 1e-12);
    }

    #[test]
    fn low_frequency_limit() {
        let cfg = LoopConfig::default();
        let mu = transfer_functions(&cfg, 1e-4).unwrap().open_loop;
        assert!(mu.norm() > 1e3);
        assert!(eta0_from_open_loop(mu).unwrap().abs() < 1e-2);
    }

    #[test]
    fn hold_modulus_bounded() {
        let cfg = LoopConfig::default();
        for i in 1..=500 {
            let t = transfer_functions(&cfg, i as f64).unwrap();
            assert!(t.wfs.norm() <= 1.0 + 1e-15);
        }
        assert!((transfer_functions(&cfg, 1e-6).unwrap().wfs.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn eta0_is_finite_and_vanishes_at_nyquist() {
        let cfg = LoopConfig::default();
        let f: Vec<f64> = (1..=500).map(|i| i as f64).collect();
        let curve = eta0_curve(&cfg, &f).unwrap();
        assert!(curve.valid.iter().all(|&v| v));
        assert!(curve.values.iter().all(|v| v.is_finite() && v.abs() < 10.0));
        // positive below the loop bandwidth, negative overshoot above
        assert!(curve.values[50] > 0.5 && curve.values[250] < -0.1);
        assert!(curve.values[499].abs() < 1e-12);
    }

    #[test]
    fn vanishing_gain_flattens_eta0() {
        let cfg = LoopConfig {
            g_int: 1e-9,
            ..LoopConfig::default()
        };
        let f: Vec<f64> = (1..=50).map(|i| 10.0 * i as f64).collect();
        assert!(eta0_curve(&cfg, &f)
            .unwrap()
            .values
            .iter()
            .all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn small_coupling_matches_eta0() {
        let cfg = LoopConfig::default();
        for f in [20.0, 80.0, 230.0] {
            let mu = transfer_functions(&cfg, f).unwrap().open_loop;
            let theta = 1e-3;
            let ratio = coupled_correlation(mu, theta) / theta;
            let eta0 = eta0_from_open_loop(mu).unwrap();
            assert!(
                (ratio - eta0).abs() < 1e-5 * (1.0 + eta0.abs()),
                "f {f}: {ratio} vs {eta0}"
            );
        }
    }

    #[test]
    fn frequency_range_is_enforced() {
        let cfg = LoopConfig::default();
        assert!(transfer_functions(&cfg, 0.0).is_err());
        assert!(transfer_functions(&cfg, 501.0).is_err());
        assert!(sampled_open_loop(&cfg, 500.0).is_ok());
    }
}
