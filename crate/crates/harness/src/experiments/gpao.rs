//! Corrective-loop convergence under the five-layer reference atmosphere.

use aoreg::aoloop::{Disturbance, PhotonNoise};
use aoreg::geometry::MisRegistration;
use aoreg::turbulence::{gpao_profile, Atmosphere};
use rayon::prelude::*;

use super::wind_bias::SCREEN_PITCH_M;
use super::{direction, run_stream, ExperimentId};
use crate::context::{CorrectiveRun, SimContext};
use crate::error::Result;
use crate::table::ResultTable;

pub const COLUMNS: [&str; 5] = [
    "n_ph",
    "iteration",
    "shift_x_pct",
    "shift_y_pct",
    "abs_shift_pct",
];

/// Trailing updates averaged into the converged value.
pub const TAIL: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct GpaoSpec {
    pub n_ph: Vec<f64>,
    pub start_pct: f64,
    pub start_angle_deg: f64,
    pub n_mod: usize,
    pub gain: f64,
    pub updates: usize,
    pub batch_frames: usize,
    pub screen_pixels: usize,
    pub screen_pitch_m: f64,
    pub seed: u64,
}

impl GpaoSpec {
    pub fn preset(seed: u64, full: bool) -> Self {
        Self {
            n_ph: if full {
                vec![10.0, 100.0, 1000.0]
            } else {
                vec![100.0]
            },
            start_pct: 70.0,
            start_angle_deg: 35.0,
            n_mod: 500,
            gain: 0.5,
            updates: 40,
            batch_frames: 500,
            screen_pixels: if full { 2048 } else { 1024 },
            screen_pitch_m: SCREEN_PITCH_M,
            seed,
        }
    }

    pub fn run(&self, ctx: &SimContext) -> Result<ResultTable> {
        ctx.command_matrix(self.n_mod)?;
        let u = direction(self.start_angle_deg);
        let start = MisRegistration::from_shift(
            self.start_pct / 100.0 * u[0],
            self.start_pct / 100.0 * u[1],
        );
        let traces: Vec<Vec<[f64; 2]>> = self
            .n_ph
            .par_iter()
            .enumerate()
            .map(|(i, &n_ph)| {
                let stream = run_stream(self.seed, ExperimentId::Gpao, i as u64);
                let atm = Atmosphere::generate(
                    gpao_profile(),
                    self.screen_pixels,
                    self.screen_pitch_m,
                    stream.substream(1),
                )?;
                let run = CorrectiveRun {
                    n_mod: self.n_mod,
                    start,
                    gain: self.gain,
                    updates: self.updates,
                    batch_frames: self.batch_frames,
                };
                let trace = ctx.corrective_run(
                    run,
                    Disturbance::Turbulence(&atm),
                    PhotonNoise::for_atmosphere(n_ph, &atm),
                    stream.substream(2),
                )?;
                Ok(trace.shifts)
            })
            .collect::<Result<_>>()?;
        let mut table = ResultTable::new(ExperimentId::Gpao.name(), &COLUMNS);
        for (&n_ph, shifts) in self.n_ph.iter().zip(&traces) {
            for (it, s) in shifts.iter().enumerate() {
                let (x, y) = (100.0 * s[0], 100.0 * s[1]);
                table.push(vec![n_ph, it as f64, x, y, x.hypot(y)])?;
            }
        }
        Ok(table)
    }
}

/// Mean `|δ|` over the last `TAIL` updates for one photon level.
pub fn converged_error(table: &ResultTable, n_ph: f64) -> Result<f64> {
    let v = table.filter("n_ph", n_ph)?.column("abs_shift_pct")?;
    let tail = &v[v.len().saturating_sub(TAIL)..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}
