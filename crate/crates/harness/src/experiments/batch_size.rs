//! Statistics of the closed-loop estimate versus telemetry batch length.

use aoreg::aoloop::{Disturbance, PhotonNoise};
use aoreg::geometry::MisRegistration;
use rayon::prelude::*;

use super::{run_stream, ExperimentId};
use crate::context::SimContext;
use crate::error::Result;
use crate::stats::{mean_std, power_law_exponent};
use crate::table::ResultTable;

pub const COLUMNS: [&str; 6] = [
    "n_frames",
    "mean_x_pct",
    "std_x_pct",
    "mean_y_pct",
    "std_y_pct",
    "batches",
];

/// Frames dropped at the start of every run so batches start in steady state.
const WARM_UP: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchSizeSpec {
    pub shift: [f64; 2],
    pub sizes: Vec<usize>,
    pub batches: usize,
    pub n_mod: usize,
    pub n_ph: f64,
    pub seed: u64,
}

impl BatchSizeSpec {
    pub fn preset(seed: u64, _full: bool) -> Self {
        Self {
            shift: [0.10, 0.0],
            sizes: vec![50, 100, 200, 500, 1000, 2000, 5000],
            batches: 100,
            n_mod: 500,
            n_ph: 100.0,
            seed,
        }
    }

    /// Run `b` is one independent loop as long as the largest batch; the
    /// batch of size `s` from run `b` is its first `s` steady-state frames.
    pub fn run(&self, ctx: &SimContext) -> Result<ResultTable> {
        let longest = self.sizes.iter().copied().max().unwrap_or(0);
        ctx.command_matrix(self.n_mod)?;
        let per_run: Vec<Vec<[f64; 2]>> = (0..self.batches)
            .into_par_iter()
            .map(|b| {
                let cube = ctx.batch(
                    self.n_mod,
                    MisRegistration::from_shift(self.shift[0], self.shift[1]),
                    Disturbance::None,
                    PhotonNoise::reference(self.n_ph),
                    WARM_UP + longest,
                    run_stream(self.seed, ExperimentId::BatchSize, b as u64),
                )?;
                self.sizes
                    .iter()
                    .map(|&s| Ok(ctx.estimate(&cube.slice(WARM_UP, s), self.n_mod)?.shift))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut table = ResultTable::new(ExperimentId::BatchSize.name(), &COLUMNS);
        for (i, &s) in self.sizes.iter().enumerate() {
            let x: Vec<f64> = per_run.iter().map(|r| 100.0 * r[i][0]).collect();
            let y: Vec<f64> = per_run.iter().map(|r| 100.0 * r[i][1]).collect();
            let (mx, sx) = mean_std(&x);
            let (my, sy) = mean_std(&y);
            table.push(vec![s as f64, mx, sx, my, sy, self.batches as f64])?;
        }
        Ok(table)
    }
}

/// Log-log slope of the x-axis standard deviation against batch length.
pub fn std_exponent(table: &ResultTable) -> Result<Option<f64>> {
    Ok(power_law_exponent(
        &table.column("n_frames")?,
        &table.column("std_x_pct")?,
    ))
}
