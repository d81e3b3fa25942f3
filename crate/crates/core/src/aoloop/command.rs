use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::optics::{KlBasis, ZonalIm};

/// Relative singular-value cutoff of the modal pseudo-inverse.
pub const SVD_CUTOFF: f64 = 1e-7;

/// Modal-filtered reconstructor `K_n · pinv(IM · K_n)`.
#[derive(Clone, Debug)]
pub struct CommandMatrix {
    pub n_mod: usize,
    /// Singular values kept above the cutoff.
    pub rank: usize,
    pub singular_values: Vec<f64>,
    basis: DMatrix<f64>,
    projector: DMatrix<f64>,
    noise_factor: DMatrix<f64>,
    matrix: DMatrix<f64>,
}

impl CommandMatrix {
    /// True when some singular values fell below the cutoff.
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.n_mod
    }

    /// Slopes to command correction, `n_act × n_slopes`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Controlled modes as columns, `n_act × n_mod`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Slopes to modal coefficients, `n_mod × n_slopes`.
    pub fn projector(&self) -> &DMatrix<f64> {
        &self.projector
    }

    /// Square root of `projector · projectorᵀ`: maps unit white slope noise
    /// to modal noise with the right covariance.
    pub fn noise_factor(&self) -> &DMatrix<f64> {
        &self.noise_factor
    }

    pub fn apply(&self, slopes: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(slopes)
    }
}

/// Builds the reconstructor for the first `n_mod` non-piston KL modes.
pub fn build_command_matrix(
    reference_im: &ZonalIm,
    kl: &KlBasis,
    n_mod: usize,
) -> Result<CommandMatrix> {
    if kl.n_act() != reference_im.n_act() {
        return Err(invalid(format!(
            "basis has {} actuators, IM has {}",
            kl.n_act(),
            reference_im.n_act()
        )));
    }
    let basis = kl.controlled(n_mod)?;
    let b = &reference_im.matrix * &basis;
    let svd = b.svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD returned no U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD returned no V".into()))?;
    let s = svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    if !(smax > 0.0) || !smax.is_finite() {
        return Err(Error::Numerical(
            "interaction matrix has no usable singular values".into(),
        ));
    }
    let inv: Vec<f64> = s
        .iter()
        .map(|&v| if v > SVD_CUTOFF * smax { 1.0 / v } else { 0.0 })
        .collect();
    let rank = inv.iter().filter(|&&v| v != 0.0).count();
    let mut v_scaled = v_t.transpose();
    for (j, &w) in inv.iter().enumerate() {
        v_scaled.column_mut(j).scale_mut(w);
    }
    let projector = &v_scaled * u.transpose();
    let matrix = &basis * &projector;
    let mut singular_values: Vec<f64> = s.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    Ok(CommandMatrix {
        n_mod,
        rank,
        singular_values,
        basis,
        projector,
        noise_factor: v_scaled,
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aoloop::fixture::Small;

    #[test]
    fn left_inverse_on_controlled_modes() {
        let s = Small::new();
        let n_mod = 40;
        let cm = build_command_matrix(&s.im, &s.kl, n_mod).unwrap();
        assert_eq!(cm.rank, n_mod);
        assert!(!cm.rank_deficient());
        for m in 2..=n_mod + 1 {
            let k = s.kl.mode(m);
            let back = cm.matrix() * (&s.im.matrix * &k);
            assert!((back - &k).amax() < 1e-6, "mode {m}");
        }
    }

    #[test]
    fn first_uncontrolled_mode_is_filtered() {
        let s = Small::new();
        let n_mod = 40;
        let cm = build_command_matrix(&s.im, &s.kl, n_mod).unwrap();
        let k = s.kl.mode(n_mod + 2);
        let out = cm.matrix() * (&s.im.matrix * &k);
        assert!(k.dot(&out).abs() < 1e-10);
        for m in [1, n_mod + 2, n_mod + 3] {
            assert!(s.kl.mode(m).dot(&out).abs() < 1e-10);
        }
    }

    #[test]
    fn noise_factor_matches_projector_covariance() {
        let s = Small::new();
        let cm = build_command_matrix(&s.im, &s.kl, 30).unwrap();
        let a = cm.projector() * cm.projector().transpose();
        let b = cm.noise_factor() * cm.noise_factor().transpose();
        assert!((a - &b).amax() < 1e-9 * b.amax());
    }

    #[test]
    fn rejects_mismatched_basis() {
        let s = Small::new();
        let other = crate::optics::DmModel::fried(8, 0.2, Default::default()).unwrap();
        let kl = crate::optics::build_kl_basis(&other, 1.0).unwrap();
        assert!(build_command_matrix(&s.im, &kl, 10).is_err());
    }
}
