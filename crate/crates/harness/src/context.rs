//! Geometry, KL basis and command matrices shared by every experiment.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use aoreg::aoloop::{
    build_command_matrix, corrective_loop_step, CommandMatrix, Disturbance, LoopSimulator,
    PhotonNoise, TelemetryCube, WfsChain,
};
use aoreg::closedloop::{estimate_from_telemetry, ClosedLoopEstimate};
use aoreg::config::{LoopConfig, SimConfig};
use aoreg::geometry::{MisRegistration, SubapertureGrid};
use aoreg::optics::{build_kl_basis, DmModel, InfluenceParams, KlBasis, ZonalIm};
use aoreg::rng::RngStream;

use crate::error::Result;

/// Reference Fried parameter of the KL covariance, metres.
pub const KL_R0_M: f64 = 0.12;

/// Everything that depends only on the system geometry.
pub struct SimContext {
    pub config: SimConfig,
    pub grid: SubapertureGrid,
    pub dm: DmModel,
    pub kl: KlBasis,
    /// Zonal IM at the assumed (identity) registration.
    pub reference_im: ZonalIm,
    commands: Mutex<HashMap<usize, Arc<CommandMatrix>>>,
}

impl SimContext {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let grid = SubapertureGrid::annular(config.d_sub, config.obscuration, config.pitch_m)?;
        let dm = DmModel::fried(config.d_sub, config.pitch_m, InfluenceParams::default())?;
        let kl = build_kl_basis(&dm, config.pitch_m / KL_R0_M)?;
        let reference_im =
            WfsChain::new(&dm, &grid).interaction_matrix(&MisRegistration::default())?;
        Ok(Self {
            config,
            grid,
            dm,
            kl,
            reference_im,
            commands: Mutex::new(HashMap::new()),
        })
    }

    /// Context of the default configuration, built once per process.
    pub fn shared() -> Result<&'static SimContext> {
        static CTX: OnceLock<SimContext> = OnceLock::new();
        if let Some(c) = CTX.get() {
            return Ok(c);
        }
        let built = SimContext::new(SimConfig::default())?;
        Ok(CTX.get_or_init(|| built))
    }

    pub fn chain(&self) -> WfsChain<'_> {
        WfsChain::new(&self.dm, &self.grid)
    }

    pub fn n_act(&self) -> usize {
        self.dm.n_act()
    }

    pub fn loop_config(&self, n_mod: usize) -> LoopConfig {
        LoopConfig {
            n_mod,
            ..self.config.loop_config()
        }
    }

    /// Command matrix controlling `n_mod` modes, cached.
    pub fn command_matrix(&self, n_mod: usize) -> Result<Arc<CommandMatrix>> {
        if let Some(cm) = self
            .commands
            .lock()
            .expect("command cache poisoned")
            .get(&n_mod)
        {
            return Ok(cm.clone());
        }
        let cm = Arc::new(build_command_matrix(&self.reference_im, &self.kl, n_mod)?);
        self.commands
            .lock()
            .expect("command cache poisoned")
            .entry(n_mod)
            .or_insert(cm.clone());
        Ok(cm)
    }

    /// One noise-driven telemetry batch from a fresh loop.
    pub fn batch(
        &self,
        n_mod: usize,
        misreg: MisRegistration,
        disturbance: Disturbance<'_>,
        noise: PhotonNoise,
        n_frames: usize,
        rng: RngStream,
    ) -> Result<TelemetryCube> {
        let cm = self.command_matrix(n_mod)?;
        let mut sim = LoopSimulator::new(
            self.loop_config(n_mod),
            self.chain(),
            &cm,
            misreg,
            disturbance,
            Some(noise),
            rng,
        )?;
        Ok(sim.run(n_frames)?)
    }

    pub fn estimate(&self, cube: &TelemetryCube, n_mod: usize) -> Result<ClosedLoopEstimate> {
        Ok(estimate_from_telemetry(
            cube,
            &self.loop_config(n_mod),
            self.n_act(),
        )?)
    }
}

/// Closed-loop corrective iterations on one running loop.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectiveTrace {
    /// True shift before each update, then after the last one.
    pub shifts: Vec<[f64; 2]>,
    /// Estimate of each batch.
    pub estimates: Vec<[f64; 2]>,
}

/// Settings of a closed-loop corrective run.
#[derive(Clone, Copy, Debug)]
pub struct CorrectiveRun {
    pub n_mod: usize,
    pub start: MisRegistration,
    pub gain: f64,
    pub updates: usize,
    pub batch_frames: usize,
}

impl SimContext {
    /// Runs the AO loop continuously, estimating the shift on every batch and
    /// moving the true registration by `-gain·estimate` in between.
    pub fn corrective_run(
        &self,
        run: CorrectiveRun,
        disturbance: Disturbance<'_>,
        noise: PhotonNoise,
        rng: RngStream,
    ) -> Result<CorrectiveTrace> {
        let cm = self.command_matrix(run.n_mod)?;
        let mut sim = LoopSimulator::new(
            self.loop_config(run.n_mod),
            self.chain(),
            &cm,
            run.start,
            disturbance,
            Some(noise),
            rng,
        )?;
        let mut misreg = run.start;
        let mut trace = CorrectiveTrace {
            shifts: vec![misreg.shift()],
            estimates: Vec::new(),
        };
        for _ in 0..run.updates {
            let cube = sim.run(run.batch_frames)?;
            let est = self.estimate(&cube, run.n_mod)?.shift;
            misreg = corrective_loop_step(&misreg, est, run.gain);
            sim.set_misregistration(misreg)?;
            trace.estimates.push(est);
            trace.shifts.push(misreg.shift());
        }
        Ok(trace)
    }
}
