use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;

use crate::aoloop::command::CommandMatrix;
use crate::aoloop::telemetry::TelemetryCube;
use crate::config::LoopConfig;
use crate::error::{invalid, Error, Result};
use crate::geometry::{MisRegistration, SubapertureGrid};
use crate::optics::noise::{photon_noise_sigma, WFS_WAVELENGTH_M};
use crate::optics::{
    synth_zonal_im_with, DmModel, KlBasis, ModalIm, SlopeModel, SlopeStencil, ZonalIm,
};
use crate::rng::{fill_normal, RngStream};
use crate::turbulence::{scale_r0, Atmosphere};

/// Frames simulated per vectorised block.
const BLOCK: usize = 500;

/// Photon-limited slope noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotonNoise {
    pub n_ph: f64,
    pub r0_wfs_m: f64,
    pub lambda_wfs_m: f64,
}

impl PhotonNoise {
    /// `n_ph` photons with r0 = 12 cm at 500 nm, sensed at 750 nm.
    pub fn reference(n_ph: f64) -> Self {
        Self {
            n_ph,
            r0_wfs_m: scale_r0(0.12, 500e-9, WFS_WAVELENGTH_M),
            lambda_wfs_m: WFS_WAVELENGTH_M,
        }
    }

    /// `n_ph` photons under a given atmosphere, sensed at 750 nm.
    pub fn for_atmosphere(n_ph: f64, atm: &Atmosphere) -> Self {
        Self {
            n_ph,
            r0_wfs_m: scale_r0(atm.profile.r0_m, atm.profile.lambda0_m, WFS_WAVELENGTH_M),
            lambda_wfs_m: WFS_WAVELENGTH_M,
        }
    }

    pub fn sigma(&self) -> Result<f64> {
        photon_noise_sigma(self.n_ph, self.r0_wfs_m, self.lambda_wfs_m)
    }
}

/// What the loop has to correct besides noise.
#[derive(Clone, Copy, Debug)]
pub enum Disturbance<'a> {
    None,
    /// Fixed slope vector added every frame.
    Static(&'a [f64]),
    Turbulence(&'a Atmosphere),
}

/// Mirror plus sensor as seen by the loop.
#[derive(Clone, Copy, Debug)]
pub struct WfsChain<'a> {
    pub dm: &'a DmModel,
    pub grid: &'a SubapertureGrid,
    /// Peak deflection of a unit command, micrometres.
    pub amplitude_um: f64,
    pub slope_model: SlopeModel,
}

impl<'a> WfsChain<'a> {
    pub fn new(dm: &'a DmModel, grid: &'a SubapertureGrid) -> Self {
        Self {
            dm,
            grid,
            amplitude_um: dm.reference_amplitude(),
            slope_model: SlopeModel::default(),
        }
    }

    /// Zonal IM of the mirror seen through `misreg`.
    pub fn interaction_matrix(&self, misreg: &MisRegistration) -> Result<ZonalIm> {
        synth_zonal_im_with(
            self.dm,
            self.grid,
            misreg,
            self.amplitude_um,
            self.slope_model,
        )
    }

    /// Slopes produced by the atmosphere at time `t`.
    pub fn turbulence_slopes(&self, atm: &Atmosphere, t: f64, out: &mut [f64]) -> Result<()> {
        let stencil = SlopeStencil::new(self.slope_model)?;
        let pitch = self.grid.pitch_m;
        let n = self.grid.n_wfs();
        let snap = atm.at_time(t);
        let mut opd = |p: [f64; 2]| snap.opd_m(p[0] * pitch, p[1] * pitch);
        for (k, &(r, c)) in self.grid.wfs_cells().iter().enumerate() {
            let [sx, sy] = stencil.slopes_at(self.grid.center(r, c), pitch, &mut opd);
            out[k] = sx;
            out[n + k] = sy;
        }
        Ok(())
    }
}

/// Stateful closed loop: leaky integrator on `n_mod` modes with command clipping.
///
/// Slopes are `S(turbulence) + IM_true · c + noise` and the command update is
/// `c ← clip((1 - g_leak)·c - g_int·M·s)`, the slopes of frame `i` reaching
/// the mirror `delay_frames` frames later. While no command saturates, the
/// state evolves in modal coordinates; after the first clipping event the
/// loop continues on full actuator vectors.
pub struct LoopSimulator<'a> {
    config: LoopConfig,
    chain: WfsChain<'a>,
    command: &'a CommandMatrix,
    misreg: MisRegistration,
    response: DMatrix<f64>,
    modal_response: DMatrix<f64>,
    disturbance: Disturbance<'a>,
    sigma: f64,
    rng: ChaCha12Rng,
    frame: u64,
    modal_state: DVector<f64>,
    command_state: DVector<f64>,
    zonal: bool,
    pending: VecDeque<DVector<f64>>,
}

impl<'a> LoopSimulator<'a> {
    pub fn new(
        config: LoopConfig,
        chain: WfsChain<'a>,
        command: &'a CommandMatrix,
        misreg: MisRegistration,
        disturbance: Disturbance<'a>,
        noise: Option<PhotonNoise>,
        rng: RngStream,
    ) -> Result<Self> {
        config.validate(chain.dm.n_act())?;
        if config.n_mod != command.n_mod {
            return Err(invalid(format!(
                "loop controls {} modes but the command matrix was built for {}",
                config.n_mod, command.n_mod
            )));
        }
        if command.projector().ncols() != chain.grid.n_slopes() {
            return Err(invalid("command matrix does not match the sensor"));
        }
        if let Disturbance::Static(s) = disturbance {
            if s.len() != chain.grid.n_slopes() {
                return Err(invalid("static disturbance has the wrong slope count"));
            }
        }
        let sigma = noise.map(|n| n.sigma()).transpose()?.unwrap_or(0.0);
        let n_mod = command.n_mod;
        let delay = config.delay_frames();
        let mut sim = Self {
            config,
            chain,
            command,
            misreg,
            response: DMatrix::zeros(0, 0),
            modal_response: DMatrix::zeros(0, 0),
            disturbance,
            sigma,
            rng: rng.rng(),
            frame: 0,
            modal_state: DVector::zeros(n_mod),
            command_state: DVector::zeros(chain.dm.n_act()),
            zonal: false,
            pending: (1..delay).map(|_| DVector::zeros(n_mod)).collect(),
        };
        sim.set_misregistration(misreg)?;
        Ok(sim)
    }

    /// Changes the true registration; loop state and time carry over.
    pub fn set_misregistration(&mut self, misreg: MisRegistration) -> Result<()> {
        misreg.validate()?;
        let im = self.chain.interaction_matrix(&misreg)?;
        self.response = self.command.projector() * &im.matrix;
        self.modal_response = &self.response * self.command.basis();
        self.misreg = misreg;
        Ok(())
    }

    pub fn misregistration(&self) -> &MisRegistration {
        &self.misreg
    }

    /// Frames simulated so far.
    pub fn frame_index(&self) -> u64 {
        self.frame
    }

    /// Noise standard deviation per slope, radians.
    pub fn noise_sigma(&self) -> f64 {
        self.sigma
    }

    /// True once clipping has forced the actuator-space path.
    pub fn saturated(&self) -> bool {
        self.zonal
    }

    /// Current DM command vector.
    pub fn command(&self) -> DVector<f64> {
        if self.zonal {
            self.command_state.clone()
        } else {
            self.command.basis() * &self.modal_state
        }
    }

    fn clip(&self, mut c: DVector<f64>) -> DVector<f64> {
        let b = self.config.clip;
        c.apply(|v| *v = v.clamp(-b, b));
        c
    }

    /// Modal projection of the disturbance for frames `first..first + n`.
    fn disturbance_block(&self, first: u64, n: usize) -> Result<DMatrix<f64>> {
        let p = self.command.projector();
        match self.disturbance {
            Disturbance::None => Ok(DMatrix::zeros(p.nrows(), n)),
            Disturbance::Static(s) => {
                let u = p * DVector::from_column_slice(s);
                Ok(DMatrix::from_fn(p.nrows(), n, |r, _| u[r]))
            }
            Disturbance::Turbulence(atm) => {
                let mut slopes = DMatrix::<f64>::zeros(p.ncols(), n);
                for j in 0..n {
                    let t = (first + j as u64) as f64 * self.config.tau_rtc;
                    self.chain
                        .turbulence_slopes(atm, t, slopes.column_mut(j).as_mut_slice())?;
                }
                Ok(p * slopes)
            }
        }
    }

    fn noise_block(&mut self, n: usize) -> DMatrix<f64> {
        let n_mod = self.command.n_mod;
        if self.sigma == 0.0 {
            return DMatrix::zeros(n_mod, n);
        }
        let mut z = DMatrix::<f64>::zeros(n_mod, n);
        fill_normal(&mut self.rng, z.as_mut_slice());
        self.command.noise_factor() * z * self.sigma
    }

    /// Advances the loop by `n_frames` and returns the recorded commands.
    pub fn run(&mut self, n_frames: usize) -> Result<TelemetryCube> {
        let d_act = self.chain.dm.d_act();
        let mut cube = TelemetryCube::new(d_act, self.config.tau_rtc, self.config.clip);
        cube.loop_config = Some(self.config);
        cube.true_misreg = Some(self.misreg);
        cube.frames.reserve(n_frames * d_act * d_act);
        let mut done = 0;
        while done < n_frames {
            let nb = BLOCK.min(n_frames - done);
            self.run_block(nb, &mut cube)?;
            done += nb;
        }
        Ok(cube)
    }

    fn run_block(&mut self, nb: usize, cube: &mut TelemetryCube) -> Result<()> {
        let drive = self.disturbance_block(self.frame, nb)? + self.noise_block(nb);
        let g = self.config.g_int;
        let keep = 1.0 - self.config.g_leak;
        let mut start = 0;
        if !self.zonal {
            let snapshot = self.pending.clone();
            let n_mod = self.command.n_mod;
            let mut states = DMatrix::<f64>::zeros(n_mod, nb);
            let mut inputs = DMatrix::<f64>::zeros(n_mod, nb);
            for i in 0..nb {
                states.set_column(i, &self.modal_state);
                let u = drive.column(i) + &self.modal_response * &self.modal_state;
                inputs.set_column(i, &u);
                self.pending.push_back(u);
                let used = self
                    .pending
                    .pop_front()
                    .expect("delay line is never empty after a push");
                self.modal_state = &self.modal_state * keep - used * g;
            }
            let commands = self.command.basis() * &states;
            if commands.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("loop produced non-finite commands".into()));
            }
            let b = self.config.clip;
            let first_clip = (0..nb).find(|&i| commands.column(i).iter().any(|v| v.abs() > b));
            let stop = first_clip.unwrap_or(nb);
            for i in 0..stop {
                cube.push_frame(&self.chain.dm.to_grid(commands.column(i).as_slice()));
            }
            self.frame += stop as u64;
            let Some(j) = first_clip else {
                return Ok(());
            };
            // Rewind to frame j and continue on the actuator path.
            let lag = self.pending.len();
            let mut pending = VecDeque::with_capacity(lag);
            for back in (1..=lag).rev() {
                let idx = j as isize - back as isize;
                if idx >= 0 {
                    pending.push_back(inputs.column(idx as usize).into_owned());
                } else {
                    pending.push_back(snapshot[(snapshot.len() as isize + idx) as usize].clone());
                }
            }
            self.pending = pending;
            self.command_state = self.clip(commands.column(j).into_owned());
            self.zonal = true;
            start = j;
        }
        for i in start..nb {
            cube.push_frame(&self.chain.dm.to_grid(self.command_state.as_slice()));
            let u = drive.column(i) + &self.response * &self.command_state;
            self.pending.push_back(u);
            let used = self
                .pending
                .pop_front()
                .expect("delay line is never empty after a push");
            let next = &self.command_state * keep - self.command.basis() * used * g;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("loop produced non-finite commands".into()));
            }
            self.command_state = self.clip(next);
            self.frame += 1;
        }
        Ok(())
    }
}

/// Runs a fresh loop from zero command for `n_frames`.
#[allow(clippy::too_many_arguments)]
pub fn run_closed_loop(
    config: LoopConfig,
    chain: WfsChain<'_>,
    command: &CommandMatrix,
    true_misreg: MisRegistration,
    disturbance: Disturbance<'_>,
    noise: Option<PhotonNoise>,
    n_frames: usize,
    rng: RngStream,
) -> Result<TelemetryCube> {
    let mut sim = LoopSimulator::new(config, chain, command, true_misreg, disturbance, noise, rng)?;
    sim.run(n_frames)
}

/// Open-loop push-pull measurement of a modal IM.
///
/// Mode `j` is played at `+amplitude_um` on frame `2j` and `-amplitude_um`
/// on frame `2j + 1` (times counted from `t0` in steps of `frame_period`),
/// and the slope difference is normalised to a unit modal command.
#[allow(clippy::too_many_arguments)]
pub fn measure_modal_im_pushpull(
    chain: WfsChain<'_>,
    true_misreg: &MisRegistration,
    kl: &KlBasis,
    modes: &[usize],
    amplitude_um: f64,
    disturbance: Disturbance<'_>,
    noise: Option<PhotonNoise>,
    rng: RngStream,
    t0: f64,
    frame_period: f64,
) -> Result<ModalIm> {
    if !(amplitude_um > 0.0) {
        return Err(invalid("push-pull amplitude must be positive"));
    }
    if modes.is_empty() {
        return Err(invalid("mode list is empty"));
    }
    let im = chain.interaction_matrix(true_misreg)?;
    let k = kl.columns(modes)?;
    let response = &im.matrix * k;
    let sigma = noise.map(|n| n.sigma()).transpose()?.unwrap_or(0.0);
    let cmd = amplitude_um / chain.amplitude_um;
    let n_slopes = chain.grid.n_slopes();
    let mut r = rng.rng();
    let mut matrix = DMatrix::<f64>::zeros(n_slopes, modes.len());
    let mut turb = vec![0.0; n_slopes];
    let mut noise_buf = vec![0.0; n_slopes];
    let mut measure = |frame: usize, sign: f64, col: usize, out: &mut Vec<f64>| -> Result<()> {
        let t = t0 + frame as f64 * frame_period;
        match disturbance {
            Disturbance::None => turb.iter_mut().for_each(|v| *v = 0.0),
            Disturbance::Static(s) => turb.copy_from_slice(s),
            Disturbance::Turbulence(atm) => chain.turbulence_slopes(atm, t, &mut turb)?,
        }
        if sigma > 0.0 {
            fill_normal(&mut r, &mut noise_buf);
        }
        out.clear();
        for i in 0..n_slopes {
            out.push(turb[i] + sign * cmd * response[(i, col)] + sigma * noise_buf[i]);
        }
        Ok(())
    };
    let mut plus = Vec::with_capacity(n_slopes);
    let mut minus = Vec::with_capacity(n_slopes);
    for col in 0..modes.len() {
        measure(2 * col, 1.0, col, &mut plus)?;
        measure(2 * col + 1, -1.0, col, &mut minus)?;
        for i in 0..n_slopes {
            matrix[(i, col)] = (plus[i] - minus[i]) / (2.0 * cmd);
        }
    }
    Ok(ModalIm {
        grid: chain.grid.clone(),
        amplitude_um: chain.amplitude_um,
        modes: modes.to_vec(),
        matrix,
    })
}
