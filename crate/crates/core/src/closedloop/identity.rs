//! Self-test of the two-mode closed-loop algebra.
//!
//! For one spatial frequency with coupling phase `θ`, the residual wavefront
//! obeys `(I + μR(θ))·w = -A·C·R(θ)·n + p` with `R(θ) = [[cosθ, sinθ], [-sinθ, cosθ]]`.
//! The closed forms of the inverse, of the measurement transfer matrices and
//! of the measurement covariances are compared to direct 2×2 algebra.

use nalgebra::Matrix2;
use rustfft::num_complex::Complex64;

use crate::closedloop::transfer::transfer_functions;
use crate::config::LoopConfig;
use crate::error::{Error, Result};

/// Largest absolute deviation of each closed form from the direct computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityResiduals {
    /// `M(θ)⁻¹ = Δ(θ)⁻¹ M(-θ)`
    pub inverse: f64,
    /// `M(-θ)R(θ) = [[μ+cosθ, sinθ], [-sinθ, μ+cosθ]]`
    pub rotation: f64,
    /// Noise-to-measurement transfer matrix.
    pub noise_transfer: f64,
    /// Measurement covariance with noise only.
    pub noise_covariance: f64,
    /// Measurement covariance with turbulence only.
    pub turbulence_covariance: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.inverse,
            self.rotation,
            self.noise_transfer,
            self.noise_covariance,
            self.turbulence_covariance,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

type C2 = Matrix2<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn coupling(mu: Complex64, theta: f64) -> C2 {
    let (s, co) = theta.sin_cos();
    C2::new(1.0 + mu * co, mu * s, -mu * s, 1.0 + mu * co)
}

fn rotation(theta: f64) -> C2 {
    let (s, co) = theta.sin_cos();
    C2::new(c(co), c(s), c(-s), c(co))
}

fn max_abs(m: &C2) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Turbulence cross-covariance used by the self-test.
const TURB_CROSS: Complex64 = Complex64::new(0.3, -0.2);

pub fn matrix_identity_check(theta: f64, f: f64, config: &LoopConfig) -> Result<IdentityResiduals> {
    let t = transfer_functions(config, f)?;
    let mu = t.open_loop;
    let (s, co) = theta.sin_cos();
    let delta = 1.0 + 2.0 * mu * co + mu * mu;
    if delta.norm() < 1e-12 {
        return Err(Error::Numerical(format!(
            "coupling matrix is singular at θ = {theta}, f = {f}"
        )));
    }
    let m = coupling(mu, theta);
    let m_inv = m
        .try_inverse()
        .ok_or_else(|| Error::Numerical("coupling matrix is singular".into()))?;
    let inverse = max_abs(&(m_inv - coupling(mu, -theta) / delta));
    let rot = coupling(mu, -theta) * rotation(theta);
    let rotation_res = max_abs(&(rot - C2::new(mu + co, c(s), c(-s), mu + co)));

    let eye = C2::identity();
    let noise_direct = eye - m_inv * rotation(theta) * mu;
    let noise_closed = eye - C2::new(mu + co, c(s), c(-s), mu + co) * (mu / delta);
    let noise_transfer = max_abs(&(noise_direct - noise_closed));

    let a = 1.0 + mu * co;
    let b = mu * s;
    let cov_n = noise_direct * noise_direct.adjoint();
    let diag_n = (a / delta).norm_sqr() + (b / delta).norm_sqr();
    let cross_n = Complex64::new(0.0, 2.0 * ((a / delta.norm_sqr()) * mu.conj() * s).im);
    let noise_covariance =
        max_abs(&(cov_n - C2::new(c(diag_n), cross_n, cross_n.conj(), c(diag_n))));

    let turb = m_inv * t.wfs;
    let p = C2::new(c(1.0), TURB_CROSS, TURB_CROSS.conj(), c(1.0));
    let cov_p = turb * p * turb.adjoint();
    let g = (t.wfs / delta).norm_sqr();
    let base = a.norm_sqr() + b.norm_sqr();
    let m11 = g * (base - 2.0 * (a * mu.conj() * s * TURB_CROSS).re);
    let m22 = g * (base + 2.0 * ((1.0 + mu.conj() * co) * mu * s * TURB_CROSS).re);
    let m12 = g
        * (Complex64::new(0.0, 2.0 * (a * mu.conj() * s).im) + a.norm_sqr() * TURB_CROSS
            - b.norm_sqr() * TURB_CROSS.conj());
    let turbulence_covariance = max_abs(&(cov_p - C2::new(c(m11), m12, m12.conj(), c(m22))));

    Ok(IdentityResiduals {
        inverse,
        rotation: rotation_res,
        noise_transfer,
        noise_covariance,
        turbulence_covariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coupling_is_diagonal() {
        let cfg = LoopConfig::default();
        let mu = transfer_functions(&cfg, 40.0).unwrap().open_loop;
        let m = coupling(mu, 0.0);
        assert!(max_abs(&(m - C2::identity() * (1.0 + mu))) < 1e-15);
        assert!(matrix_identity_check(0.0, 40.0, &cfg).unwrap().max() < 1e-12);
    }

    #[test]
    fn random_samples_satisfy_identities() {
        use rand::{Rng, SeedableRng};
        let cfg = LoopConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let f = rng.gen_range(0.5..500.0);
            let r = matrix_identity_check(theta, f, &cfg).unwrap();
            assert!(r.max() < 1e-10, "θ {theta} f {f}: {r:?}");
        }
    }
}
