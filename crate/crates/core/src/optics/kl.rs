//! Karhunen-Loève modes in DM command space.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::optics::dm::DmModel;

/// Orthonormal command-space modes. Mode numbers are 1-based: mode 1 is
/// piston, modes 2 and 3 are tip and tilt, and the rest follow in decreasing
/// turbulent variance.
#[derive(Clone, Debug)]
pub struct KlBasis {
    modes: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl KlBasis {
    /// Wraps an externally computed basis (columns = modes, piston first).
    pub fn from_parts(modes: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        if modes.ncols() != eigenvalues.len() {
            return Err(invalid("one eigenvalue per mode is required"));
        }
        Ok(Self { modes, eigenvalues })
    }

    pub fn n_act(&self) -> usize {
        self.modes.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.ncols()
    }

    /// All modes as columns.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.modes
    }

    /// Eigenvalue of each mode; the piston entry is zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Command vector of 1-based mode `m`.
    pub fn mode(&self, m: usize) -> DVector<f64> {
        self.modes.column(m - 1).into_owned()
    }

    /// Columns for the given 1-based mode numbers.
    pub fn columns(&self, modes: &[usize]) -> Result<DMatrix<f64>> {
        if let Some(&bad) = modes.iter().find(|&&m| m == 0 || m > self.n_modes()) {
            return Err(invalid(format!(
                "mode {bad} outside 1..={}",
                self.n_modes()
            )));
        }
        Ok(DMatrix::from_fn(self.n_act(), modes.len(), |r, c| {
            self.modes[(r, modes[c] - 1)]
        }))
    }

    /// The `n_mod` controlled modes: modes 2..=n_mod+1, piston excluded.
    pub fn controlled(&self, n_mod: usize) -> Result<DMatrix<f64>> {
        if n_mod == 0 || n_mod + 1 > self.n_modes() {
            return Err(invalid(format!(
                "cannot control {n_mod} modes out of {}",
                self.n_modes() - 1
            )));
        }
        Ok(self.modes.columns(1, n_mod).into_owned())
    }
}

/// Builds the basis from the double-centred Kolmogorov covariance
/// `-½·6.88·(r_ij·r0_ratio)^{5/3}` over the nominal actuator positions, where
/// `r0_ratio` is the actuator pitch divided by `r0`.
pub fn build_kl_basis(dm: &DmModel, r0_ratio: f64) -> Result<KlBasis> {
    if !(r0_ratio > 0.0) {
        return Err(invalid("r0 ratio must be positive"));
    }
    let pos = dm.nominal_positions();
    let n = pos.len();
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let r = (pos[i][0] - pos[j][0]).hypot(pos[i][1] - pos[j][1]);
            if r < 1e-9 {
                return Err(invalid(format!("actuators {j} and {i} coincide")));
            }
            let v = -0.5 * 6.88 * (r * r0_ratio).powf(5.0 / 3.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    // J·C·J with J = I - 11ᵀ/n
    let row_mean: Vec<f64> = (0..n).map(|i| cov.row(i).sum() / n as f64).collect();
    let total = row_mean.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] += total - row_mean[i] - row_mean[j];
        }
    }
    let eig = cov.symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "covariance eigendecomposition failed".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    // The piston direction is the null space left by the centring.
    let piston = *order
        .iter()
        .min_by(|&&a, &&b| {
            eig.eigenvalues[a]
                .abs()
                .total_cmp(&eig.eigenvalues[b].abs())
        })
        .expect("non-empty");
    order.retain(|&k| k != piston);

    let mut modes = DMatrix::<f64>::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    modes.column_mut(0).fill(1.0 / (n as f64).sqrt());
    eigenvalues.push(0.0);
    for (col, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let lead = v.iter().copied().find(|x| x.abs() > 1e-8).unwrap_or(1.0);
        if lead < 0.0 {
            v.neg_mut();
        }
        modes.set_column(col + 1, &v);
        eigenvalues.push(eig.eigenvalues[k]);
    }
    Ok(KlBasis { modes, eigenvalues })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::dm::InfluenceParams;

    fn basis() -> (DmModel, KlBasis) {
        let dm = DmModel::fried(16, 0.2, InfluenceParams::default()).unwrap();
        let kl = build_kl_basis(&dm, 2.0).unwrap();
        (dm, kl)
    }

    #[test]
    fn orthonormal_and_ordered() {
        let (_, kl) = basis();
        let g = kl.matrix().transpose() * kl.matrix();
        let eye = DMatrix::<f64>::identity(kl.n_modes(), kl.n_modes());
        assert!((g - eye).amax() < 1e-8);
        let ev = &kl.eigenvalues()[1..];
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn tip_tilt_lead_the_basis() {
        let (dm, kl) = basis();
        let span = kl.columns(&[2, 3]).unwrap();
        for axis in 0..2 {
            let mut t =
                DVector::from_iterator(dm.n_act(), dm.nominal_positions().iter().map(|p| p[axis]));
            let mean = t.mean();
            t.add_scalar_mut(-mean);
            t.normalize_mut();
            let captured = (span.transpose() * &t).norm();
            assert!(captured > 0.95, "axis {axis}: {captured}");
        }
    }

    #[test]
    fn covariance_is_diagonalised() {
        let (dm, kl) = basis();
        let pos = dm.nominal_positions();
        let n = pos.len();
        let c = DMatrix::from_fn(n, n, |i, j| {
            let r = (pos[i][0] - pos[j][0]).hypot(pos[i][1] - pos[j][1]);
            -0.5 * 6.88 * (r * 2.0).powf(5.0 / 3.0)
        });
        let j = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
        let d = kl.matrix().transpose() * (&j * c * &j) * kl.matrix();
        let top = kl.eigenvalues()[1];
        for r in 0..n {
            for s in 0..n {
                if r != s {
                    assert!(d[(r, s)].abs() < 1e-6 * top);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_mode_numbers() {
        let (_, kl) = basis();
        assert!(kl.columns(&[0]).is_err());
        assert!(kl.columns(&[kl.n_modes() + 1]).is_err());
        assert!(kl.controlled(kl.n_modes()).is_err());
        assert_eq!(kl.controlled(10).unwrap().ncols(), 10);
    }
}
