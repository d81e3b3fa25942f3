//! Zonal and modal interaction matrices.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::geometry::{MisRegistration, Point, SubapertureGrid};
use crate::optics::dm::{influence_function, DmModel};
use crate::optics::kl::KlBasis;
use crate::optics::wfs::{wavefront_slopes, SlopeField, SlopeModel, SlopeStencil};

/// Slopes (radians) per unit actuator command, one column per actuator.
///
/// `amplitude_um` is the peak deflection of a unit command.
#[derive(Clone, Debug, PartialEq)]
pub struct ZonalIm {
    pub grid: SubapertureGrid,
    pub amplitude_um: f64,
    pub matrix: DMatrix<f64>,
}

/// Slopes per unit modal command, one column per listed KL mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalIm {
    pub grid: SubapertureGrid,
    pub amplitude_um: f64,
    /// 1-based KL mode numbers.
    pub modes: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

impl ZonalIm {
    pub fn n_act(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn field(&self, i: usize) -> SlopeField {
        SlopeField::from_vector(&self.grid, self.matrix.column(i).as_slice())
    }
}

impl ModalIm {
    pub fn n_modes(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn field(&self, i: usize) -> SlopeField {
        SlopeField::from_vector(&self.grid, self.matrix.column(i).as_slice())
    }

    /// Copy with every slope multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            matrix: &self.matrix * s,
            ..self.clone()
        }
    }
}

fn wfs_lookup(grid: &SubapertureGrid) -> Vec<Option<usize>> {
    let mut idx = vec![None; grid.d_sub * grid.d_sub];
    for (k, &(r, c)) in grid.wfs_cells().iter().enumerate() {
        idx[r * grid.d_sub + c] = Some(k);
    }
    idx
}

/// Edge-difference zonal IM with 8 samples per edge.
pub fn synth_zonal_im(
    dm: &DmModel,
    grid: &SubapertureGrid,
    misreg: &MisRegistration,
    amplitude_um: f64,
) -> ZonalIm {
    synth_zonal_im_with(dm, grid, misreg, amplitude_um, SlopeModel::default())
        .expect("default slope model is valid")
}

/// Zonal IM of `dm` seen through `misreg` with an explicit slope model.
pub fn synth_zonal_im_with(
    dm: &DmModel,
    grid: &SubapertureGrid,
    misreg: &MisRegistration,
    amplitude_um: f64,
    model: SlopeModel,
) -> Result<ZonalIm> {
    if dm.d_act() != grid.d_sub + 1 {
        return Err(invalid(format!(
            "DM with {} nodes across does not fit {} subapertures",
            dm.d_act(),
            grid.d_sub
        )));
    }
    let stencil = SlopeStencil::new(model)?;
    let reg = dm.registered(misreg);
    let lookup = wfs_lookup(grid);
    let n_wfs = grid.n_wfs();
    let mut matrix = DMatrix::<f64>::zeros(2 * n_wfs, dm.n_act());
    let to_m = 1e-6;

    if misreg.is_translation() && dm.uniform_params() {
        // Every actuator sees the same sub-pitch offset: build one footprint and stamp it.
        let prm = dm.params()[0];
        let amp = prm.amplitude_um * amplitude_um / dm.reference_amplitude();
        let support = prm.support_radius();
        let reach = support + 1.0;
        let [sx, sy] = misreg.shift();
        let u_lo = (sx - 0.5 - reach).floor() as i64;
        let u_hi = (sx - 0.5 + reach).ceil() as i64;
        let v_lo = (sy - 0.5 - reach).floor() as i64;
        let v_hi = (sy - 0.5 + reach).ceil() as i64;
        let width = (u_hi - u_lo + 1) as usize;
        let mut footprint = vec![[0.0f64; 2]; width * (v_hi - v_lo + 1) as usize];
        let mut psi = |p: Point| {
            let r = p[0].hypot(p[1]);
            if r > support {
                0.0
            } else {
                influence_function(r, amp, prm.alpha, prm.beta) * to_m
            }
        };
        for v in v_lo..=v_hi {
            for u in u_lo..=u_hi {
                let rel = [u as f64 + 0.5 - sx, v as f64 + 0.5 - sy];
                if rel[0].hypot(rel[1]) > reach {
                    continue;
                }
                footprint[(v - v_lo) as usize * width + (u - u_lo) as usize] =
                    stencil.slopes_at(rel, grid.pitch_m, &mut psi);
            }
        }
        let d = grid.d_sub as i64;
        for (i, &(ar, ac)) in dm.nodes().iter().enumerate() {
            let mut col = matrix.column_mut(i);
            for v in v_lo..=v_hi {
                let r = ar as i64 + v;
                if r < 0 || r >= d {
                    continue;
                }
                for u in u_lo..=u_hi {
                    let c = ac as i64 + u;
                    if c < 0 || c >= d {
                        continue;
                    }
                    if let Some(k) = lookup[(r * d + c) as usize] {
                        let s = footprint[(v - v_lo) as usize * width + (u - u_lo) as usize];
                        col[k] = s[0];
                        col[n_wfs + k] = s[1];
                    }
                }
            }
        }
    } else {
        let reach = reg.support_radius() + 1.0;
        let half = (grid.d_sub as f64 - 1.0) / 2.0;
        let d = grid.d_sub as i64;
        for i in 0..dm.n_act() {
            let p = reg.positions()[i];
            let c_lo = ((p[0] + half - reach).floor() as i64).max(0);
            let c_hi = ((p[0] + half + reach).ceil() as i64).min(d - 1);
            let r_lo = ((p[1] + half - reach).floor() as i64).max(0);
            let r_hi = ((p[1] + half + reach).ceil() as i64).min(d - 1);
            let mut f = |q: Point| reg.actuator_surface(i, q, amplitude_um) * to_m;
            let mut col = matrix.column_mut(i);
            for r in r_lo..=r_hi {
                for c in c_lo..=c_hi {
                    if let Some(k) = lookup[(r * d + c) as usize] {
                        let s = stencil.slopes_at(
                            grid.center(r as usize, c as usize),
                            grid.pitch_m,
                            &mut f,
                        );
                        col[k] = s[0];
                        col[n_wfs + k] = s[1];
                    }
                }
            }
        }
    }
    Ok(ZonalIm {
        grid: grid.clone(),
        amplitude_um,
        matrix,
    })
}

/// Modal IM for the listed 1-based KL modes.
pub fn project_zonal_to_modal(zonal: &ZonalIm, kl: &KlBasis, modes: &[usize]) -> Result<ModalIm> {
    if modes.is_empty() {
        return Err(invalid("mode list is empty"));
    }
    if kl.n_act() != zonal.n_act() {
        return Err(invalid(format!(
            "basis has {} actuators, IM has {}",
            kl.n_act(),
            zonal.n_act()
        )));
    }
    let k = kl.columns(modes)?;
    Ok(ModalIm {
        grid: zonal.grid.clone(),
        amplitude_um: zonal.amplitude_um,
        modes: modes.to_vec(),
        matrix: &zonal.matrix * k,
    })
}

/// Slopes of the full mirror surface for `command`, computed point by point.
pub fn command_slopes(
    dm: &DmModel,
    grid: &SubapertureGrid,
    misreg: &MisRegistration,
    amplitude_um: f64,
    model: SlopeModel,
    command: &[f64],
) -> Result<Vec<f64>> {
    if command.len() != dm.n_act() {
        return Err(invalid(format!(
            "command has {} entries, DM has {}",
            command.len(),
            dm.n_act()
        )));
    }
    let reg = dm.registered(misreg);
    wavefront_slopes(model, grid, |p| {
        reg.surface(command, p, amplitude_um) * 1e-6
    })
}
