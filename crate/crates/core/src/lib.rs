pub mod features;
pub mod metrics;
pub mod mesh;
pub mod nn;
pub mod synth;
pub mod train;
pub(crate) mod vec3;
pub mod voxel;
