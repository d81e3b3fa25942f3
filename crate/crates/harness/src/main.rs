use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use aoreg::aoloop::{Disturbance, PhotonNoise};
use aoreg::config::SimConfig;
use aoreg::geometry::MisRegistration;
use aoreg::io::{
    load_slope_planes, load_telemetry, save_slope_planes, save_telemetry, SlopePlanes,
};
use aoreg::modal::estimate_shift_modal;
use aoreg::optics::PlateScale;
use aoreg::rng::RngStream;
use aoreg::turbulence::{Atmosphere, LayerSet};
use aoreg_harness::experiments::modal_noise::{add_slope_noise, synthetic_modal_im, POKE_UM};
use aoreg_harness::plot::save_plot;
use aoreg_harness::{ExperimentId, HarnessError, SimContext};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aoreg",
    version,
    about = "DM/WFS lateral mis-registration simulator and estimators"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` simulation config; defaults apply otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file, or directory for `exp`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Full-size grids instead of desk-scale ones.
    #[arg(long, global = true)]
    full: bool,
    /// Skip PNG plots.
    #[arg(long, global = true)]
    no_plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the AO loop and writes an AOTC telemetry file.
    Simulate {
        #[arg(long, default_value_t = 500)]
        frames: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        shift_x: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        shift_y: f64,
        #[arg(long, default_value_t = 100.0)]
        n_ph: f64,
        /// Frozen-flow wind speed in m/s; no turbulence when absent.
        #[arg(long)]
        wind: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        wind_angle: f64,
        /// Fried parameter at 500 nm, metres.
        #[arg(long, default_value_t = 0.12)]
        r0: f64,
    },
    /// Writes a synthetic modal IM (AOIM) at a given shift.
    SynthIm {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        shift_x: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        shift_y: f64,
        #[arg(long, default_value_t = 4)]
        first_mode: usize,
        #[arg(long, default_value_t = 50)]
        last_mode: usize,
        /// Slope noise in pixels.
        #[arg(long, default_value_t = 0.0)]
        noise_px: f64,
    },
    /// Modal estimator on two AOIM files.
    EstimateModal {
        measured: PathBuf,
        reference: PathBuf,
        #[arg(long, default_value_t = 8)]
        m_up: usize,
        /// Poke amplitude of the reference, micrometres.
        #[arg(long, default_value_t = POKE_UM)]
        amplitude: f64,
        #[arg(long, default_value_t = 4)]
        first_mode: usize,
    },
    /// Closed-loop estimator on an AOTC telemetry file.
    EstimateCl {
        telemetry: PathBuf,
        /// Controlled modes of the loop that produced the telemetry.
        #[arg(long)]
        n_mod: Option<usize>,
    },
    /// Runs one simulation study and writes `<name>.csv` (and plots).
    Exp {
        #[arg(value_parser = |s: &str| s.parse::<ExperimentId>())]
        name: ExperimentId,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(h) = e.downcast_ref::<HarnessError>() {
        return h.exit_code() as u8;
    }
    if let Some(c) = e.downcast_ref::<aoreg::Error>() {
        return match c {
            aoreg::Error::Numerical(_) => 3,
            aoreg::Error::Io(_) => 1,
            _ => 2,
        };
    }
    1
}

fn load_config(common: &Common) -> anyhow::Result<SimConfig> {
    let mut cfg = match &common.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_path(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let common = &cli.common;
    let cfg = load_config(common)?;
    match cli.command {
        Command::Simulate {
            frames,
            shift_x,
            shift_y,
            n_ph,
            wind,
            wind_angle,
            r0,
        } => {
            let seed = cfg.seed;
            let n_mod = cfg.n_mod;
            let ctx = SimContext::new(cfg)?;
            let stream = RngStream::new(seed, 0);
            let misreg = MisRegistration::from_shift(shift_x, shift_y);
            let cube = match wind {
                Some(v0) => {
                    let atm = Atmosphere::generate(
                        LayerSet::single(r0, 500e-9, v0, wind_angle),
                        1024,
                        0.05,
                        stream.substream(1),
                    )?;
                    let noise = PhotonNoise::for_atmosphere(n_ph, &atm);
                    ctx.batch(
                        n_mod,
                        misreg,
                        Disturbance::Turbulence(&atm),
                        noise,
                        frames,
                        stream.substream(2),
                    )?
                }
                None => ctx.batch(
                    n_mod,
                    misreg,
                    Disturbance::None,
                    PhotonNoise::reference(n_ph),
                    frames,
                    stream.substream(2),
                )?,
            };
            let path = out_path(common, "telemetry.aotc");
            save_telemetry(&path, &cube).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {} frames to {}", cube.n_frames, path.display());
        }
        Command::SynthIm {
            shift_x,
            shift_y,
            first_mode,
            last_mode,
            noise_px,
        } => {
            if first_mode == 0 || first_mode > last_mode {
                return Err(aoreg::Error::InvalidParameter(format!(
                    "bad mode range {first_mode}..={last_mode}"
                ))
                .into());
            }
            let seed = cfg.seed;
            let ctx = SimContext::new(cfg)?;
            let modes: Vec<usize> = (first_mode..=last_mode).collect();
            let im =
                synthetic_modal_im(&ctx, &MisRegistration::from_shift(shift_x, shift_y), &modes)?;
            let im = add_slope_noise(
                &im,
                PlateScale::default().px_to_rad(noise_px),
                RngStream::new(seed, 0),
            );
            let path = out_path(common, "im.aoim");
            save_slope_planes(&path, &SlopePlanes::from_modal(&im))
                .with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {} modes to {}", modes.len(), path.display());
        }
        Command::EstimateModal {
            measured,
            reference,
            m_up,
            amplitude,
            first_mode,
        } => {
            let load = |p: &Path| -> anyhow::Result<_> {
                let planes =
                    load_slope_planes(p).with_context(|| format!("reading {}", p.display()))?;
                let modes = (first_mode..first_mode + planes.items.len()).collect();
                Ok(planes.to_modal(cfg.pitch_m, amplitude, modes)?)
            };
            let (m, r) = (load(&measured)?, load(&reference)?);
            let est = estimate_shift_modal(&m, &r, &r.grid.mask_valid, &r.grid.mask_wfs, m_up)?;
            println!("shift_x = {}", est.shift[0]);
            println!("shift_y = {}", est.shift[1]);
            println!("amplitude_um = {}", est.amplitude_um);
        }
        Command::EstimateCl { telemetry, n_mod } => {
            let cube = load_telemetry(&telemetry)
                .with_context(|| format!("reading {}", telemetry.display()))?;
            let n_mod = n_mod.unwrap_or(cfg.n_mod);
            let lc = aoreg::config::LoopConfig {
                n_mod,
                ..cfg.loop_config()
            };
            let d = cube
                .d_act
                .checked_sub(1)
                .ok_or_else(|| aoreg::Error::Format("empty command grid".into()))?;
            let n_act = aoreg::optics::DmModel::fried(d, cfg.pitch_m, Default::default())?.n_act();
            let est = aoreg::closedloop::estimate_from_telemetry(&cube, &lc, n_act)?;
            println!("shift_x = {}", est.shift[0]);
            println!("shift_y = {}", est.shift[1]);
        }
        Command::Exp { name } => {
            let seed = cfg.seed;
            let ctx = SimContext::new(cfg)?;
            let table = name.run(&ctx, seed, common.full)?;
            let dir = out_path(common, "results");
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let csv = dir.join(format!("{}.csv", name.name()));
            table.save(&csv)?;
            println!("wrote {} rows to {}", table.rows.len(), csv.display());
            if !common.no_plots {
                for (suffix, spec) in name.plots() {
                    let png = dir.join(format!("{}_{suffix}.png", name.name()));
                    save_plot(&table, &spec, &png)?;
                }
            }
        }
    }
    Ok(())
}
