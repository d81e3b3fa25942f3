//! Deformable mirror, KL basis, Shack-Hartmann sensor and interaction matrices.

pub mod dm;
pub mod im;
pub mod kl;
pub mod noise;
pub mod wfs;

pub use dm::{influence_function, DmModel, InfluenceParams};
pub use im::{
    command_slopes, project_zonal_to_modal, synth_zonal_im, synth_zonal_im_with, ModalIm, ZonalIm,
};
pub use kl::{build_kl_basis, KlBasis};
pub use noise::{photon_noise_sigma, PlateScale};
pub use wfs::{sh_slopes, wavefront_slopes, SlopeField, SlopeModel, SlopeStencil};
