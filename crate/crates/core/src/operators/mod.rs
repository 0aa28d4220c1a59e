//! Test signals and measurement operators.

mod convection;
mod image;
mod occupancy;
mod radon;

pub use convection::{
    convection_exact, convection_grid, sample_convection_points, ConvectionPoints, ConvectionProblem, T_MAX, X_MAX,
};
pub use image::{
    downsample_box, make_multiview, pixel_coords, poisson_photon_noise, procedural_image, radial_image, bump_phantom, BoxDownsample, ClipPolicy,
    ImageGrid, ImageKind, MultiviewSet, View,
};
pub use occupancy::{occupancy_analytic, voxel_coords, Shape, VoxelGrid};
pub use radon::{adjoint_mismatch, detector_bins, radon, radon_adjoint_check, uniform_angles, RadonOperator, Sinogram};

#[derive(Debug, thiserror::Error)]
pub enum OperatorError {
    #[error("image {height}x{width} is not divisible by factor {factor}")]
    NotDivisible { height: usize, width: usize, factor: usize },
    #[error("expected a single-channel image, got {0} channels")]
    MultiChannel(usize),
    #[error("input too small: {0}")]
    TooSmall(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
