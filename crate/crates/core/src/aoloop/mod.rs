//! Closed-loop AO simulation, push-pull IM measurement and the outer loop
//! correcting lateral registration.

pub mod command;
pub mod corrective;
pub mod sim;
pub mod telemetry;

pub use command::{build_command_matrix, CommandMatrix};
pub use corrective::{
    corrective_loop_step, fit_convergence_exponential, nelder_mead, ExponentialFit,
};
pub use sim::{
    measure_modal_im_pushpull, run_closed_loop, Disturbance, LoopSimulator, PhotonNoise, WfsChain,
};
pub use telemetry::TelemetryCube;
