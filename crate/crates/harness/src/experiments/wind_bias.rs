//! Converged closed-loop bias under a single frozen-flow layer.

use aoreg::aoloop::{fit_convergence_exponential, Disturbance, PhotonNoise};
use aoreg::geometry::MisRegistration;
use aoreg::turbulence::{Atmosphere, LayerSet};
use rayon::prelude::*;

use super::{derotate, direction, run_stream, ExperimentId};
use crate::context::{CorrectiveRun, SimContext};
use crate::error::Result;
use crate::table::ResultTable;

pub const COLUMNS: [&str; 12] = [
    "n_ph",
    "v0",
    "theta0_deg",
    "bias_parallel_pct",
    "bias_perp_pct",
    "rate_parallel",
    "rate_perp",
    "fit_rms_parallel_pct",
    "fit_rms_perp_pct",
    "tail_parallel_pct",
    "tail_perp_pct",
    "fit_converged",
];

/// Default screen sampling, metres per pixel.
pub const SCREEN_PITCH_M: f64 = 0.05;

/// Updates averaged for the tail columns.
const TAIL: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct WindBiasSpec {
    pub n_ph: Vec<f64>,
    pub speeds: Vec<f64>,
    pub angles_deg: Vec<f64>,
    pub r0_m: f64,
    pub lambda0_m: f64,
    pub screen_pixels: usize,
    pub screen_pitch_m: f64,
    pub n_mod: usize,
    pub gain: f64,
    pub batch_frames: usize,
    /// Updates per run, and for `n_ph ≥ 1000`.
    pub updates: usize,
    pub updates_low_noise: usize,
    pub seed: u64,
}

impl WindBiasSpec {
    pub fn preset(seed: u64, full: bool) -> Self {
        let (n_ph, speeds, angles_deg, screen_pixels) = if full {
            (
                vec![10.0, 100.0, 1000.0],
                vec![1.0, 5.0, 10.0, 20.0, 30.0, 37.5, 50.0, 65.0, 80.0],
                (0..=12).map(|i| 7.5 * i as f64).collect(),
                2048,
            )
        } else {
            (
                vec![100.0],
                vec![10.0, 20.0, 37.5],
                vec![0.0, 45.0, 90.0],
                1024,
            )
        };
        Self {
            n_ph,
            speeds,
            angles_deg,
            r0_m: 0.12,
            lambda0_m: 500e-9,
            screen_pixels,
            screen_pitch_m: SCREEN_PITCH_M,
            n_mod: 500,
            gain: 0.5,
            batch_frames: 500,
            updates: 40,
            updates_low_noise: 60,
            seed,
        }
    }

    pub fn run(&self, ctx: &SimContext) -> Result<ResultTable> {
        let mut jobs = Vec::new();
        for &n_ph in &self.n_ph {
            for &v0 in &self.speeds {
                for &angle in &self.angles_deg {
                    jobs.push((n_ph, v0, angle));
                }
            }
        }
        ctx.command_matrix(self.n_mod)?;
        let rows: Vec<Vec<f64>> = jobs
            .par_iter()
            .enumerate()
            .map(|(i, &(n_ph, v0, angle))| {
                let stream = run_stream(self.seed, ExperimentId::WindBias, i as u64);
                let atm = Atmosphere::generate(
                    LayerSet::single(self.r0_m, self.lambda0_m, v0, angle),
                    self.screen_pixels,
                    self.screen_pitch_m,
                    stream.substream(1),
                )?;
                let run = CorrectiveRun {
                    n_mod: self.n_mod,
                    start: MisRegistration::default(),
                    gain: self.gain,
                    updates: if n_ph >= 1000.0 {
                        self.updates_low_noise
                    } else {
                        self.updates
                    },
                    batch_frames: self.batch_frames,
                };
                let trace = ctx.corrective_run(
                    run,
                    Disturbance::Turbulence(&atm),
                    PhotonNoise::for_atmosphere(n_ph, &atm),
                    stream.substream(2),
                )?;
                let u = direction(angle);
                let wind: Vec<[f64; 2]> = trace
                    .shifts
                    .iter()
                    .map(|s| derotate(*s, u).map(|v| 100.0 * v))
                    .collect();
                let mut row = vec![n_ph, v0, angle];
                let mut fits = Vec::new();
                for axis in 0..2 {
                    let series: Vec<f64> = wind.iter().map(|w| w[axis]).collect();
                    let fit = fit_convergence_exponential(&series)?;
                    let tail = &series[series.len().saturating_sub(TAIL)..];
                    fits.push((fit, tail.iter().sum::<f64>() / tail.len() as f64));
                }
                row.extend([
                    fits[0].0.asymptote,
                    fits[1].0.asymptote,
                    fits[0].0.rate,
                    fits[1].0.rate,
                ]);
                row.extend([fits[0].0.rms, fits[1].0.rms, fits[0].1, fits[1].1]);
                row.push(f64::from(u8::from(
                    fits[0].0.converged && fits[1].0.converged,
                )));
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let mut table = ResultTable::new(ExperimentId::WindBias.name(), &COLUMNS);
        for r in rows {
            table.push(r)?;
        }
        Ok(table)
    }
}
