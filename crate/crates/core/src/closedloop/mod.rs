//! Non-perturbative lateral-shift estimation from closed-loop command telemetry.
//!
//! A shift `δ` between mirror and sensor couples the cosine and sine parts of
//! each spatial frequency `k` with phase `θ = 2π k·δ`; noise propagated
//! through the loop then leaves an imaginary correlation `≈ θ·η0(f)` between
//! the two parts, from which `δ` is fitted.

pub mod coupled;
pub mod fit;
pub mod identity;
pub mod spectrum;
pub mod transfer;

pub use coupled::{simulate_coupled_pair, PairCorrelation};
pub use fit::{control_space_mask, estimate_shift_cl, fit_eta_2d, fit_eta_t, k_max, ControlSpace};
pub use identity::{matrix_identity_check, IdentityResiduals};
pub use spectrum::{
    correlation_at, empirical_correlation, split_telemetry, EtaMap, FourierTelemetry, Wavevector,
};
pub use transfer::{
    coupled_correlation, eta0_curve, eta0_from_open_loop, sampled_open_loop, transfer_functions,
    Eta0Curve, LoopTransfer,
};

use crate::aoloop::TelemetryCube;
use crate::config::LoopConfig;
use crate::error::Result;

/// Shift estimate with the intermediate maps.
#[derive(Clone, Debug)]
pub struct ClosedLoopEstimate {
    /// `[δx, δy]` in subaperture pitches.
    pub shift: [f64; 2],
    pub eta: EtaMap,
    pub eta0: Eta0Curve,
    pub control: ControlSpace,
}

/// Runs the whole chain on one telemetry batch.
pub fn estimate_from_telemetry(
    cube: &TelemetryCube,
    config: &LoopConfig,
    n_act: usize,
) -> Result<ClosedLoopEstimate> {
    cube.validate()?;
    let ft = split_telemetry(cube)?;
    let eta = empirical_correlation(&ft);
    let eta0 = eta0_curve(config, &eta.freqs_hz)?;
    let control = control_space_mask(config.n_mod, n_act, cube.d_act)?;
    let shift = estimate_shift_cl(&eta, &eta0, &control)?;
    Ok(ClosedLoopEstimate {
        shift,
        eta,
        eta0,
        control,
    })
}
