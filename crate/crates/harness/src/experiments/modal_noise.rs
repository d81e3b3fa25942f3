//! Modal estimator accuracy versus slope noise and number of fitted modes.

use aoreg::geometry::MisRegistration;
use aoreg::modal::ModalCorrelator;
use aoreg::optics::{project_zonal_to_modal, synth_zonal_im, ModalIm, PlateScale};
use aoreg::rng::{fill_normal, RngStream};
use rayon::prelude::*;

use super::{run_stream, ExperimentId};
use crate::context::SimContext;
use crate::error::Result;
use crate::stats::mean_std;
use crate::table::ResultTable;

pub const COLUMNS: [&str; 9] = [
    "sigma_px",
    "max_mode",
    "bias_pct",
    "std_pct",
    "bias_x_pct",
    "std_x_pct",
    "bias_y_pct",
    "std_y_pct",
    "runs",
];

/// Lowest KL mode fed to the modal estimator (piston and tip-tilt excluded).
pub const FIRST_MODE: usize = 4;

/// Poke amplitude of the modal IMs, micrometres.
pub const POKE_UM: f64 = 4.0;

/// White slope noise of `sigma_rad` on every entry.
pub fn add_slope_noise(im: &ModalIm, sigma_rad: f64, rng: RngStream) -> ModalIm {
    let mut out = im.clone();
    if sigma_rad > 0.0 {
        let mut noise = vec![0.0; out.matrix.len()];
        fill_normal(&mut rng.rng(), &mut noise);
        out.matrix
            .iter_mut()
            .zip(noise)
            .for_each(|(v, n)| *v += sigma_rad * n);
    }
    out
}

/// Synthetic modal IM of `modes` for a registration.
pub fn synthetic_modal_im(
    ctx: &SimContext,
    misreg: &MisRegistration,
    modes: &[usize],
) -> Result<ModalIm> {
    let zonal = synth_zonal_im(&ctx.dm, &ctx.grid, misreg, POKE_UM);
    Ok(project_zonal_to_modal(&zonal, &ctx.kl, modes)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModalNoiseSpec {
    pub shift: [f64; 2],
    pub sigmas_px: Vec<f64>,
    pub max_modes: Vec<usize>,
    pub runs: usize,
    pub m_up: usize,
    pub seed: u64,
}

impl ModalNoiseSpec {
    pub fn preset(seed: u64, full: bool) -> Self {
        Self {
            shift: [4.18, 4.18],
            sigmas_px: vec![0.0, 0.1, 0.25, 0.5],
            max_modes: if full {
                vec![10, 20, 30, 50, 100, 200]
            } else {
                vec![10, 20, 50, 100]
            },
            runs: if full { 1000 } else { 200 },
            m_up: 100,
            seed,
        }
    }

    pub fn run(&self, ctx: &SimContext) -> Result<ResultTable> {
        let plate = PlateScale::default();
        let truth = MisRegistration::from_shift(self.shift[0], self.shift[1]);
        let mut table = ResultTable::new(ExperimentId::ModalNoise.name(), &COLUMNS);
        let mut cell = 0u64;
        for &max_mode in &self.max_modes {
            let modes: Vec<usize> = (FIRST_MODE..=max_mode).collect();
            let reference = synthetic_modal_im(ctx, &MisRegistration::default(), &modes)?;
            let measured = synthetic_modal_im(ctx, &truth, &modes)?;
            let corr = ModalCorrelator::from_modal_im(
                &reference,
                &ctx.grid.mask_valid,
                &ctx.grid.mask_wfs,
            )?;
            for &sigma in &self.sigmas_px {
                let sigma_rad = plate.px_to_rad(sigma);
                let base = run_stream(self.seed, ExperimentId::ModalNoise, cell);
                cell += 1;
                let errors: Vec<[f64; 2]> = (0..self.runs as u64)
                    .into_par_iter()
                    .map(|r| {
                        let noisy = add_slope_noise(&measured, sigma_rad, base.substream(r));
                        let est = corr.estimate(&noisy, self.m_up)?;
                        Ok([
                            100.0 * (est.shift[0] - self.shift[0]),
                            100.0 * (est.shift[1] - self.shift[1]),
                        ])
                    })
                    .collect::<Result<_>>()?;
                let xs: Vec<f64> = errors.iter().map(|e| e[0]).collect();
                let ys: Vec<f64> = errors.iter().map(|e| e[1]).collect();
                let pooled: Vec<f64> = xs.iter().chain(&ys).copied().collect();
                let (b, s) = mean_std(&pooled);
                let (bx, sx) = mean_std(&xs);
                let (by, sy) = mean_std(&ys);
                table.push(vec![
                    sigma,
                    max_mode as f64,
                    b,
                    s,
                    bx,
                    sx,
                    by,
                    sy,
                    self.runs as f64,
                ])?;
            }
        }
        Ok(table)
    }
}
