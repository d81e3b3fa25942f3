//! Simulation studies, each producing one result table.

pub mod batch_size;
pub mod crosstalk;
pub mod gpao;
pub mod modal_noise;
pub mod preset_align;
pub mod sensitivity;
pub mod wind_bias;

use aoreg::rng::RngStream;

use crate::context::SimContext;
use crate::error::Result;
use crate::plot::LinePlot;
use crate::table::ResultTable;

/// Experiment identifiers as used on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentId {
    Sensitivity,
    WindBias,
    Gpao,
    ModalNoise,
    Crosstalk,
    BatchSize,
    PresetAlign,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [
        ExperimentId::Sensitivity,
        ExperimentId::WindBias,
        ExperimentId::Gpao,
        ExperimentId::ModalNoise,
        ExperimentId::Crosstalk,
        ExperimentId::BatchSize,
        ExperimentId::PresetAlign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Sensitivity => "sensitivity",
            ExperimentId::WindBias => "wind-bias",
            ExperimentId::Gpao => "gpao",
            ExperimentId::ModalNoise => "modal-noise",
            ExperimentId::Crosstalk => "crosstalk",
            ExperimentId::BatchSize => "batch-size",
            ExperimentId::PresetAlign => "preset-align",
        }
    }

    /// Tag mixed into every random stream of this experiment.
    fn tag(self) -> u64 {
        self as u64 + 1
    }

    /// Runs the desk-scale grid, or the full one with `full`.
    pub fn run(self, ctx: &SimContext, seed: u64, full: bool) -> Result<ResultTable> {
        match self {
            ExperimentId::Sensitivity => sensitivity::SensitivitySpec::preset(seed, full).run(ctx),
            ExperimentId::WindBias => wind_bias::WindBiasSpec::preset(seed, full).run(ctx),
            ExperimentId::Gpao => gpao::GpaoSpec::preset(seed, full).run(ctx),
            ExperimentId::ModalNoise => modal_noise::ModalNoiseSpec::preset(seed, full).run(ctx),
            ExperimentId::Crosstalk => crosstalk::CrosstalkSpec::preset(seed, full).run(ctx),
            ExperimentId::BatchSize => batch_size::BatchSizeSpec::preset(seed, full).run(ctx),
            ExperimentId::PresetAlign => preset_align::PresetAlignSpec::preset(seed, full).run(ctx),
        }
    }

    /// Plots derived from the table; never read back.
    pub fn plots(self) -> Vec<(&'static str, LinePlot)> {
        let p = |x: &str, y: &str, g: Option<&str>| LinePlot {
            x: x.into(),
            y: y.into(),
            group: g.map(Into::into),
        };
        match self {
            ExperimentId::Sensitivity => vec![(
                "mean",
                p("amplitude_pct", "mean_parallel_pct", Some("n_mod")),
            )],
            ExperimentId::WindBias => vec![
                ("parallel", p("v0", "bias_parallel_pct", Some("theta0_deg"))),
                (
                    "perpendicular",
                    p("v0", "bias_perp_pct", Some("theta0_deg")),
                ),
            ],
            ExperimentId::Gpao => {
                vec![("convergence", p("iteration", "abs_shift_pct", Some("n_ph")))]
            }
            ExperimentId::ModalNoise => vec![("std", p("max_mode", "std_pct", Some("sigma_px")))],
            ExperimentId::Crosstalk => vec![("error", p("iteration", "error_pct", Some("case")))],
            ExperimentId::BatchSize => vec![("std", p("n_frames", "std_x_pct", None))],
            ExperimentId::PresetAlign => {
                vec![("convergence", p("iteration", "abs_shift_pct", None))]
            }
        }
    }
}

impl std::str::FromStr for ExperimentId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ExperimentId::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment {s:?}"))
    }
}

/// Random stream of run `run` in experiment `id`; distinct runs never share a stream.
pub fn run_stream(seed: u64, id: ExperimentId, run: u64) -> RngStream {
    RngStream::new(seed, (id.tag() << 40) | run)
}

/// Unit vector at `deg` degrees.
pub(crate) fn direction(deg: f64) -> [f64; 2] {
    let (s, c) = deg.to_radians().sin_cos();
    [c, s]
}

/// Components of `v` along `u` and along `u` turned by +90°.
pub(crate) fn derotate(v: [f64; 2], u: [f64; 2]) -> [f64; 2] {
    [v[0] * u[0] + v[1] * u[1], -v[0] * u[1] + v[1] * u[0]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_back() {
        for e in ExperimentId::ALL {
            assert_eq!(e.name().parse::<ExperimentId>().unwrap(), e);
        }
        assert!("nope".parse::<ExperimentId>().is_err());
    }

    #[test]
    fn streams_are_unique() {
        let mut seen = std::collections::HashSet::new();
        for e in ExperimentId::ALL {
            for r in 0..1000 {
                assert!(seen.insert(run_stream(1, e, r)));
            }
        }
    }

    #[test]
    fn derotation() {
        let u = direction(90.0);
        let d = derotate([0.0, 2.0], u);
        assert!((d[0] - 2.0).abs() < 1e-15 && d[1].abs() < 1e-15);
        let d = derotate([1.0, 0.0], u);
        assert!(d[0].abs() < 1e-15 && (d[1] + 1.0).abs() < 1e-15);
    }
}
