//! Controlled-frequency disk and least-squares fits of the correlation model
//! `η(k, f) = 2π·η0(f)·k·δ`.

use std::f64::consts::TAU;

use crate::closedloop::spectrum::{half_plane, EtaMap, Wavevector};
use crate::closedloop::transfer::Eta0Curve;
use crate::error::{invalid, Error, Result};

/// Radius of the controlled disk, cycles per `d_act` pitches: `π k_max² = (n_mod / n_act)·d_act²`.
pub fn k_max(n_mod: usize, n_act: usize, d_act: usize) -> f64 {
    d_act as f64 * (n_mod as f64 / (std::f64::consts::PI * n_act as f64)).sqrt()
}

/// Half-plane wavevectors inside the controlled disk.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSpace {
    pub d_act: usize,
    pub k_max: f64,
    pub ks: Vec<Wavevector>,
}

impl ControlSpace {
    pub fn contains(&self, k: Wavevector) -> bool {
        (k[0] as f64).hypot(k[1] as f64) <= self.k_max
    }

    /// Wavevector in cycles per actuator pitch.
    pub fn per_pitch(&self, k: Wavevector) -> [f64; 2] {
        [
            k[0] as f64 / self.d_act as f64,
            k[1] as f64 / self.d_act as f64,
        ]
    }
}

pub fn control_space_mask(n_mod: usize, n_act: usize, d_act: usize) -> Result<ControlSpace> {
    if n_mod == 0 || n_mod > n_act {
        return Err(invalid(format!(
            "n_mod must be in [1, {n_act}], got {n_mod}"
        )));
    }
    if n_act > d_act * d_act {
        return Err(invalid("more actuators than grid nodes"));
    }
    let r = k_max(n_mod, n_act, d_act);
    let ks = half_plane(d_act)
        .into_iter()
        .filter(|k| (k[0] as f64).hypot(k[1] as f64) <= r)
        .collect();
    Ok(ControlSpace {
        d_act,
        k_max: r,
        ks,
    })
}

fn check_grids(eta: &EtaMap, eta0: &Eta0Curve) -> Result<()> {
    if eta.freqs_hz.len() != eta0.freqs_hz.len()
        || eta
            .freqs_hz
            .iter()
            .zip(&eta0.freqs_hz)
            .any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(invalid(
            "correlation map and η0 use different frequency grids",
        ));
    }
    Ok(())
}

/// Least-squares shift (subaperture pitches) from the correlation map over the
/// controlled disk and every positive frequency.
pub fn estimate_shift_cl(eta: &EtaMap, eta0: &Eta0Curve, ctrl: &ControlSpace) -> Result<[f64; 2]> {
    check_grids(eta, eta0)?;
    if eta.d_act != ctrl.d_act {
        return Err(invalid("control space and telemetry use different grids"));
    }
    let (mut a, mut b) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
    for (ik, &k) in eta.ks.iter().enumerate() {
        if !ctrl.contains(k) {
            continue;
        }
        let kp = ctrl.per_pitch(k);
        for jf in 0..eta.n_freqs() {
            let (Some(y), true) = (eta.get(ik, jf), eta0.valid[jf]) else {
                continue;
            };
            let h = [TAU * eta0.values[jf] * kp[0], TAU * eta0.values[jf] * kp[1]];
            for r in 0..2 {
                b[r] += h[r] * y;
                for c in 0..2 {
                    a[r][c] += h[r] * h[c];
                }
            }
        }
    }
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let trace = a[0][0] + a[1][1];
    if !(trace > 0.0) || det <= 1e-12 * trace * trace {
        return Err(Error::Numerical(
            "correlation model has rank below 2".into(),
        ));
    }
    Ok([
        (a[1][1] * b[0] - a[0][1] * b[1]) / det,
        (a[0][0] * b[1] - a[1][0] * b[0]) / det,
    ])
}

/// Temporal profile fitted at fixed shift:
/// `η_t(f) = Σ_k η(k, f)·(k·δ) / Σ_k 2π (k·δ)²`. `None` for a zero shift.
pub fn fit_eta_t(eta: &EtaMap, shift: [f64; 2], ctrl: &ControlSpace) -> Option<Vec<f64>> {
    let proj: Vec<Option<f64>> = eta
        .ks
        .iter()
        .map(|&k| {
            ctrl.contains(k).then(|| {
                let kp = ctrl.per_pitch(k);
                kp[0] * shift[0] + kp[1] * shift[1]
            })
        })
        .collect();
    let mut out = vec![0.0; eta.n_freqs()];
    let mut any = false;
    for (jf, o) in out.iter_mut().enumerate() {
        let (mut num, mut den) = (0.0, 0.0);
        for (ik, p) in proj.iter().enumerate() {
            if let (Some(p), Some(y)) = (p, eta.get(ik, jf)) {
                num += y * p;
                den += TAU * p * p;
            }
        }
        if den > 0.0 {
            *o = num / den;
            any = true;
        }
    }
    any.then_some(out)
}

/// Spatial map fitted against `η0`: `η_2D(k) = Σ_f η(k, f)·η0(f) / Σ_f η0(f)²`,
/// one value per half-plane wavevector of `eta`.
pub fn fit_eta_2d(eta: &EtaMap, eta0: &Eta0Curve) -> Result<Vec<f64>> {
    check_grids(eta, eta0)?;
    Ok((0..eta.ks.len())
        .map(|ik| {
            let (mut num, mut den) = (0.0, 0.0);
            for jf in 0..eta.n_freqs() {
                if let (Some(y), true) = (eta.get(ik, jf), eta0.valid[jf]) {
                    num += y * eta0.values[jf];
                    den += eta0.values[jf].powi(2);
                }
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedloop::transfer::eta0_curve;
    use crate::config::LoopConfig;

    fn synthetic(d_act: usize, n_frames: usize, shift: [f64; 2]) -> (EtaMap, Eta0Curve) {
        let freqs: Vec<f64> = (1..=(n_frames - 1) / 2)
            .map(|j| j as f64 / (n_frames as f64 * 1e-3))
            .collect();
        let eta0 = eta0_curve(&LoopConfig::default(), &freqs).unwrap();
        let ks = half_plane(d_act);
        let mut values = Vec::new();
        for k in &ks {
            let kp = [k[0] as f64 / d_act as f64, k[1] as f64 / d_act as f64];
            for v in &eta0.values {
                values.push(TAU * v * (kp[0] * shift[0] + kp[1] * shift[1]));
            }
        }
        let valid = vec![true; values.len()];
        (
            EtaMap {
                d_act,
                ks,
                freqs_hz: freqs,
                values,
                valid,
            },
            eta0,
        )
    }

    #[test]
    fn reference_disk_radius() {
        assert!((k_max(500, 1353, 41) - 14.06).abs() < 0.01);
        assert!((k_max(1353, 1353, 41) - 41.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn disk_grows_with_modes() {
        let small = control_space_mask(100, 1353, 41).unwrap();
        let large = control_space_mask(800, 1353, 41).unwrap();
        assert!(small.ks.iter().all(|k| large.ks.contains(k)));
        assert!(large.ks.len() > small.ks.len());
        assert!(control_space_mask(0, 1353, 41).is_err());
        assert!(control_space_mask(1354, 1353, 41).is_err());
    }

    #[test]
    fn consistent_map_recovers_shift() {
        let (eta, eta0) = synthetic(41, 500, [0.12, -0.07]);
        let ctrl = control_space_mask(500, 1353, 41).unwrap();
        let est = estimate_shift_cl(&eta, &eta0, &ctrl).unwrap();
        assert!((est[0] - 0.12).abs() < 1e-10 && (est[1] + 0.07).abs() < 1e-10);
    }

    #[test]
    fn consistent_map_fits_exactly() {
        let shift = [0.1, 0.05];
        let (eta, eta0) = synthetic(41, 200, shift);
        let ctrl = control_space_mask(500, 1353, 41).unwrap();
        let t = fit_eta_t(&eta, shift, &ctrl).unwrap();
        for (a, b) in t.iter().zip(&eta0.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let map = fit_eta_2d(&eta, &eta0).unwrap();
        for (ik, k) in eta.ks.iter().enumerate() {
            let expect = TAU * (k[0] as f64 * shift[0] + k[1] as f64 * shift[1]) / 41.0;
            assert!((map[ik] - expect).abs() < 1e-12);
        }
        assert!(fit_eta_t(&eta, [0.0, 0.0], &ctrl).is_none());
    }

    #[test]
    fn single_wavevector_is_rank_deficient() {
        let (eta, eta0) = synthetic(41, 100, [0.1, 0.0]);
        let ctrl = ControlSpace {
            d_act: 41,
            k_max: 1.0,
            ks: vec![[1, 0]],
        };
        let mut eta = eta;
        let n_f = eta.n_freqs();
        for (ik, k) in eta.ks.clone().iter().enumerate() {
            if *k != [1, 0] && *k != [0, 1] {
                eta.valid[ik * n_f..(ik + 1) * n_f].fill(false);
            }
            if *k == [0, 1] {
                eta.valid[ik * n_f..(ik + 1) * n_f].fill(false);
            }
        }
        assert!(estimate_shift_cl(&eta, &eta0, &ctrl).is_err());
    }
}
