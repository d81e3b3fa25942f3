//! Lateral-shift corrective loops in the presence of clocking and stretch.

use aoreg::aoloop::{corrective_loop_step, Disturbance, PhotonNoise};
use aoreg::geometry::MisRegistration;
use aoreg::modal::ModalCorrelator;
use aoreg::optics::PlateScale;
use rayon::prelude::*;

use super::modal_noise::{add_slope_noise, synthetic_modal_im, FIRST_MODE};
use super::{run_stream, ExperimentId};
use crate::context::{CorrectiveRun, SimContext};
use crate::error::Result;
use crate::table::ResultTable;

pub const COLUMNS: [&str; 8] = [
    "estimator",
    "case",
    "rho",
    "theta_deg",
    "iteration",
    "shift_x_pct",
    "shift_y_pct",
    "error_pct",
];

/// `estimator` column values.
pub const MODAL: f64 = 0.0;
pub const CLOSED_LOOP: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CrosstalkSpec {
    /// `(ρ, θ°)` pairs run through the modal estimator.
    pub modal_cases: Vec<(f64, f64)>,
    pub modal_start: [f64; 2],
    pub modal_iterations: usize,
    pub sigma_px: f64,
    pub max_mode: usize,
    pub m_up: usize,
    /// `(ρ, θ°)` pairs run through the closed-loop estimator.
    pub loop_cases: Vec<(f64, f64)>,
    pub loop_start: [f64; 2],
    pub loop_gain: f64,
    pub loop_updates: usize,
    pub n_mod: usize,
    pub n_ph: f64,
    pub batch_frames: usize,
    pub seed: u64,
}

impl CrosstalkSpec {
    pub fn preset(seed: u64, full: bool) -> Self {
        let modal_cases = if full {
            vec![
                (0.7, 0.0),
                (0.8, 0.0),
                (0.9, 0.0),
                (1.1, 0.0),
                (1.2, 0.0),
                (1.3, 0.0),
                (1.0, 2.0),
                (1.0, 5.0),
                (1.0, 10.0),
                (1.0, 15.0),
                (1.0, 20.0),
            ]
        } else {
            vec![
                (0.8, 0.0),
                (0.9, 0.0),
                (1.1, 0.0),
                (1.2, 0.0),
                (1.0, 5.0),
                (1.0, 10.0),
                (1.0, 15.0),
            ]
        };
        let loop_cases = if full {
            vec![
                (0.97, 0.0),
                (0.98, 0.0),
                (0.99, 0.0),
                (1.01, 0.0),
                (1.02, 0.0),
                (1.03, 0.0),
                (1.0, -3.0),
                (1.0, -1.5),
                (1.0, 1.5),
                (1.0, 3.0),
            ]
        } else {
            vec![
                (0.98, 0.0),
                (1.02, 0.0),
                (1.0, -1.5),
                (1.0, 1.5),
                (1.0, 3.0),
            ]
        };
        Self {
            modal_cases,
            modal_start: [4.18, 3.73],
            modal_iterations: 4,
            sigma_px: 0.25,
            max_mode: 50,
            m_up: 8,
            loop_cases,
            loop_start: [0.25, 0.0],
            loop_gain: 0.5,
            loop_updates: if full { 20 } else { 10 },
            n_mod: 500,
            n_ph: 100.0,
            batch_frames: 500,
            seed,
        }
    }

    pub fn run(&self, ctx: &SimContext) -> Result<ResultTable> {
        let mut table = ResultTable::new(ExperimentId::Crosstalk.name(), &COLUMNS);
        for (case, shifts) in self.modal_runs(ctx)?.into_iter().enumerate() {
            let (rho, theta) = self.modal_cases[case];
            push_trace(&mut table, MODAL, case, rho, theta, &shifts)?;
        }
        for (case, shifts) in self.loop_runs(ctx)?.into_iter().enumerate() {
            let (rho, theta) = self.loop_cases[case];
            push_trace(
                &mut table,
                CLOSED_LOOP,
                self.modal_cases.len() + case,
                rho,
                theta,
                &shifts,
            )?;
        }
        Ok(table)
    }

    fn modal_runs(&self, ctx: &SimContext) -> Result<Vec<Vec<[f64; 2]>>> {
        let modes: Vec<usize> = (FIRST_MODE..=self.max_mode).collect();
        let reference = synthetic_modal_im(ctx, &MisRegistration::default(), &modes)?;
        let corr =
            ModalCorrelator::from_modal_im(&reference, &ctx.grid.mask_valid, &ctx.grid.mask_wfs)?;
        let sigma_rad = PlateScale::default().px_to_rad(self.sigma_px);
        self.modal_cases
            .par_iter()
            .enumerate()
            .map(|(case, &(rho, theta))| {
                let stream = run_stream(self.seed, ExperimentId::Crosstalk, case as u64);
                let mut misreg = MisRegistration::new(
                    self.modal_start[0],
                    self.modal_start[1],
                    theta,
                    rho,
                    rho,
                )?;
                let mut shifts = vec![misreg.shift()];
                for it in 0..self.modal_iterations {
                    let measured = synthetic_modal_im(ctx, &misreg, &modes)?;
                    let noisy = add_slope_noise(&measured, sigma_rad, stream.substream(it as u64));
                    let est = corr.estimate(&noisy, self.m_up)?;
                    misreg = corrective_loop_step(&misreg, est.shift, 1.0);
                    shifts.push(misreg.shift());
                }
                Ok(shifts)
            })
            .collect()
    }

    fn loop_runs(&self, ctx: &SimContext) -> Result<Vec<Vec<[f64; 2]>>> {
        ctx.command_matrix(self.n_mod)?;
        let offset = self.modal_cases.len() as u64;
        self.loop_cases
            .par_iter()
            .enumerate()
            .map(|(case, &(rho, theta))| {
                let stream = run_stream(self.seed, ExperimentId::Crosstalk, offset + case as u64);
                let run = CorrectiveRun {
                    n_mod: self.n_mod,
                    start: MisRegistration::new(
                        self.loop_start[0],
                        self.loop_start[1],
                        theta,
                        rho,
                        rho,
                    )?,
                    gain: self.loop_gain,
                    updates: self.loop_updates,
                    batch_frames: self.batch_frames,
                };
                Ok(ctx
                    .corrective_run(
                        run,
                        Disturbance::None,
                        PhotonNoise::reference(self.n_ph),
                        stream,
                    )?
                    .shifts)
            })
            .collect()
    }
}

fn push_trace(
    table: &mut ResultTable,
    estimator: f64,
    case: usize,
    rho: f64,
    theta: f64,
    shifts: &[[f64; 2]],
) -> Result<()> {
    for (it, s) in shifts.iter().enumerate() {
        let (x, y) = (100.0 * s[0], 100.0 * s[1]);
        table.push(vec![
            estimator,
            case as f64,
            rho,
            theta,
            it as f64,
            x,
            y,
            x.hypot(y),
        ])?;
    }
    Ok(())
}
