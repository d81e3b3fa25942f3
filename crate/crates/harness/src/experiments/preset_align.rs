//! Open-loop alignment from push-pull modal IMs measured through turbulence.

use aoreg::aoloop::{corrective_loop_step, measure_modal_im_pushpull, Disturbance, PhotonNoise};
use aoreg::geometry::MisRegistration;
use aoreg::modal::ModalCorrelator;
use aoreg::turbulence::{Atmosphere, LayerSet};

use super::modal_noise::{synthetic_modal_im, FIRST_MODE};
use super::wind_bias::SCREEN_PITCH_M;
use super::{run_stream, ExperimentId};
use crate::context::SimContext;
use crate::error::Result;
use crate::table::ResultTable;

pub const COLUMNS: [&str; 6] = [
    "iteration",
    "shift_x_pct",
    "shift_y_pct",
    "estimate_x_pct",
    "estimate_y_pct",
    "abs_shift_pct",
];

#[derive(Clone, Debug, PartialEq)]
pub struct PresetAlignSpec {
    pub start: [f64; 2],
    pub gain: f64,
    pub iterations: usize,
    pub max_mode: usize,
    pub poke_um: f64,
    pub m_up: usize,
    pub n_ph: f64,
    pub v0: f64,
    pub wind_angle_deg: f64,
    pub r0_m: f64,
    pub screen_pixels: usize,
    pub screen_pitch_m: f64,
    pub seed: u64,
}

impl PresetAlignSpec {
    pub fn preset(seed: u64, full: bool) -> Self {
        Self {
            start: [-9.085, -3.774],
            gain: 0.8,
            iterations: if full { 10 } else { 6 },
            max_mode: 50,
            poke_um: 4.0,
            m_up: 8,
            n_ph: 100.0,
            v0: 8.4,
            wind_angle_deg: 0.0,
            r0_m: 0.14,
            screen_pixels: if full { 2048 } else { 1024 },
            screen_pitch_m: SCREEN_PITCH_M,
            seed,
        }
    }

    pub fn run(&self, ctx: &SimContext) -> Result<ResultTable> {
        let modes: Vec<usize> = (FIRST_MODE..=self.max_mode).collect();
        let reference = synthetic_modal_im(ctx, &MisRegistration::default(), &modes)?;
        let corr =
            ModalCorrelator::from_modal_im(&reference, &ctx.grid.mask_valid, &ctx.grid.mask_wfs)?;
        let stream = run_stream(self.seed, ExperimentId::PresetAlign, 0);
        let atm = Atmosphere::generate(
            LayerSet::single(self.r0_m, 500e-9, self.v0, self.wind_angle_deg),
            self.screen_pixels,
            self.screen_pitch_m,
            stream.substream(0),
        )?;
        let noise = PhotonNoise::for_atmosphere(self.n_ph, &atm);
        let period = ctx.config.loop_config().tau_rtc;
        let frames = 2 * modes.len();

        let mut misreg = MisRegistration::from_shift(self.start[0], self.start[1]);
        let mut table = ResultTable::new(ExperimentId::PresetAlign.name(), &COLUMNS);
        for it in 0..=self.iterations {
            let s = misreg.shift();
            let row = |est: [f64; 2]| {
                let (x, y) = (100.0 * s[0], 100.0 * s[1]);
                vec![it as f64, x, y, 100.0 * est[0], 100.0 * est[1], x.hypot(y)]
            };
            if it == self.iterations {
                table.push(row([f64::NAN, f64::NAN]))?;
                break;
            }
            let t0 = (it * frames) as f64 * period;
            let measured = measure_modal_im_pushpull(
                ctx.chain(),
                &misreg,
                &ctx.kl,
                &modes,
                self.poke_um,
                Disturbance::Turbulence(&atm),
                Some(noise),
                stream.substream(1 + it as u64),
                t0,
                period,
            )?;
            let est = corr.estimate(&measured, self.m_up)?.shift;
            table.push(row(est))?;
            misreg = corrective_loop_step(&misreg, est, self.gain);
        }
        Ok(table)
    }
}
