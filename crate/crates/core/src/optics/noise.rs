//! Photon noise on geometric slopes and angle unit conversions.

use crate::error::{invalid, Result};

/// Milliarcseconds per radian.
pub const MAS_PER_RAD: f64 = 180.0 / std::f64::consts::PI * 3600.0 * 1000.0;

/// Sensing wavelength of the reference system.
pub const WFS_WAVELENGTH_M: f64 = 750e-9;

/// Standard deviation (radians) of photon noise on a slope measured across
/// a subaperture with `n_ph` photons per frame.
pub fn photon_noise_sigma(n_ph: f64, r0_at_wfs_m: f64, lambda_wfs_m: f64) -> Result<f64> {
    if !(n_ph > 0.0) {
        return Err(invalid(format!(
            "photon count must be positive, got {n_ph}"
        )));
    }
    if !(r0_at_wfs_m > 0.0) || !(lambda_wfs_m > 0.0) {
        return Err(invalid("r0 and wavelength must be positive"));
    }
    Ok(lambda_wfs_m / (2.0 * r0_at_wfs_m) / (2.0 * n_ph).sqrt())
}

pub fn rad_to_mas(rad: f64) -> f64 {
    rad * MAS_PER_RAD
}

pub fn mas_to_rad(mas: f64) -> f64 {
    mas / MAS_PER_RAD
}

/// Detector plate scale used to express slopes in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateScale {
    pub mas_per_px: f64,
}

impl Default for PlateScale {
    /// 0.25 px per 200 mas.
    fn default() -> Self {
        Self { mas_per_px: 800.0 }
    }
}

impl PlateScale {
    pub fn px_to_rad(&self, px: f64) -> f64 {
        mas_to_rad(px * self.mas_per_px)
    }

    pub fn rad_to_px(&self, rad: f64) -> f64 {
        rad_to_mas(rad) / self.mas_per_px
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_noise_levels() {
        let r0 = crate::turbulence::scale_r0(0.12, 500e-9, 750e-9);
        let s10 = rad_to_mas(photon_noise_sigma(10.0, r0, 750e-9).unwrap());
        let s1000 = rad_to_mas(photon_noise_sigma(1000.0, r0, 750e-9).unwrap());
        assert!((s10 - 88.6).abs() < 0.05, "{s10}");
        assert!((s1000 - 8.86).abs() < 0.005, "{s1000}");
        let a = photon_noise_sigma(25.0, r0, 750e-9).unwrap();
        let b = photon_noise_sigma(100.0, r0, 750e-9).unwrap();
        assert!((a / b - 2.0).abs() < 1e-14);
        assert!(photon_noise_sigma(0.0, r0, 750e-9).is_err());
    }

    #[test]
    fn plate_scale() {
        let p = PlateScale::default();
        assert!((rad_to_mas(p.px_to_rad(0.25)) - 200.0).abs() < 1e-9);
        assert!((p.rad_to_px(p.px_to_rad(0.1)) - 0.1).abs() < 1e-15);
    }
}
