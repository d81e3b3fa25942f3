//! Mean closed-loop estimate versus true shift amplitude, noise-only batches.

use aoreg::aoloop::{Disturbance, PhotonNoise};
use aoreg::geometry::MisRegistration;
use rayon::prelude::*;

use super::{derotate, direction, run_stream, ExperimentId};
use crate::context::SimContext;
use crate::error::Result;
use crate::stats::{linear_fit, mean_std, LineFit};
use crate::table::ResultTable;

pub const COLUMNS: [&str; 7] = [
    "n_mod",
    "amplitude_pct",
    "mean_parallel_pct",
    "std_parallel_pct",
    "mean_perp_pct",
    "std_perp_pct",
    "runs",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivitySpec {
    pub amplitudes_pct: Vec<f64>,
    pub angles_deg: Vec<f64>,
    pub n_mods: Vec<usize>,
    pub repetitions: usize,
    pub batch_frames: usize,
    pub n_ph: f64,
    pub seed: u64,
}

impl SensitivitySpec {
    /// 0–70 % in 5 % steps; 8 angles at desk scale, 72 with `full`.
    pub fn preset(seed: u64, full: bool) -> Self {
        let n_angles = if full { 72 } else { 8 };
        Self {
            amplitudes_pct: (0..=14).map(|i| 5.0 * i as f64).collect(),
            angles_deg: (0..n_angles)
                .map(|i| 360.0 * i as f64 / n_angles as f64)
                .collect(),
            n_mods: vec![250, 500, 800, 1200],
            repetitions: 1,
            batch_frames: 500,
            n_ph: 100.0,
            seed,
        }
    }

    pub fn run(&self, ctx: &SimContext) -> Result<ResultTable> {
        let mut jobs = Vec::new();
        for &n_mod in &self.n_mods {
            for &amp in &self.amplitudes_pct {
                for &angle in &self.angles_deg {
                    for rep in 0..self.repetitions {
                        jobs.push((n_mod, amp, angle, rep));
                    }
                }
            }
        }
        for &n_mod in &self.n_mods {
            ctx.command_matrix(n_mod)?;
        }
        let results: Vec<[f64; 2]> = jobs
            .par_iter()
            .enumerate()
            .map(|(i, &(n_mod, amp, angle, _))| {
                let u = direction(angle);
                let shift = [amp / 100.0 * u[0], amp / 100.0 * u[1]];
                let cube = ctx.batch(
                    n_mod,
                    MisRegistration::from_shift(shift[0], shift[1]),
                    Disturbance::None,
                    PhotonNoise::reference(self.n_ph),
                    self.batch_frames,
                    run_stream(self.seed, ExperimentId::Sensitivity, i as u64),
                )?;
                let est = ctx.estimate(&cube, n_mod)?.shift;
                let d = derotate(est, u);
                Ok([100.0 * d[0], 100.0 * d[1]])
            })
            .collect::<Result<_>>()?;
        let mut table = ResultTable::new(ExperimentId::Sensitivity.name(), &COLUMNS);
        let per_amp = self.angles_deg.len() * self.repetitions;
        for (n_mod, chunk) in self
            .n_mods
            .iter()
            .zip(results.chunks(self.amplitudes_pct.len() * per_amp))
        {
            for (amp, runs) in self.amplitudes_pct.iter().zip(chunk.chunks(per_amp)) {
                let par: Vec<f64> = runs.iter().map(|r| r[0]).collect();
                let perp: Vec<f64> = runs.iter().map(|r| r[1]).collect();
                let (mp, sp) = mean_std(&par);
                let (mq, sq) = mean_std(&perp);
                table.push(vec![*n_mod as f64, *amp, mp, sp, mq, sq, runs.len() as f64])?;
            }
        }
        Ok(table)
    }
}

/// Line through the mean estimates for one `n_mod` with amplitudes up to `max_pct`.
pub fn response_fit(table: &ResultTable, n_mod: usize, max_pct: f64) -> Result<Option<LineFit>> {
    let t = table.filter("n_mod", n_mod as f64)?;
    let amp = t.column("amplitude_pct")?;
    let mean = t.column("mean_parallel_pct")?;
    let (x, y): (Vec<f64>, Vec<f64>) = amp
        .iter()
        .zip(&mean)
        .filter(|(a, _)| **a <= max_pct + 1e-9)
        .map(|(a, m)| (*a, *m))
        .unzip();
    Ok(linear_fit(&x, &y))
}
