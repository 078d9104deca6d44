//! Reconstruction of the skull bone flap removed during decompressive
//! craniectomy, from binary skull masks.
//!
//! The pipeline is self-supervised: complete skulls are turned into training
//! pairs by a virtual craniectomy (a random spherical cut), so no annotated
//! post-operative data is needed. Two reconstruction strategies are provided
//! — direct flap estimation (DE) and reconstruct-and-subtract (RS) — backed
//! by a 3D U-Net / autoencoder pair, plus PCA shape-space and manual ABC
//! baselines, and a Dice/Hausdorff/volume evaluation harness.
//!
//! Modules follow the pipeline stages:
//!
//! * [`grid`] / [`volumetry`] — voxel model, preprocessing, mask algebra
//! * [`craniectomy`] — virtual craniectomy simulation
//! * [`phantoms`] — synthetic skull cohort generator
//! * [`nets`] / [`training`] — encoder-decoder models and the training loop
//! * [`reconstruction`] — DE / RS / PCA / ABC flap estimators
//! * [`metrics`] / [`harness`] — evaluation measures and experiment runner
//! * [`io`] — NIfTI file round-trip

pub mod container;
pub mod craniectomy;
pub mod error;
pub mod figures;
pub mod grid;
pub mod harness;
pub mod io;
pub mod metrics;
#[cfg(feature = "torch")]
pub mod nets;
pub mod phantoms;
pub mod reconstruction;
pub mod rng;
pub mod training;
pub mod volumetry;

pub use error::{Error, Result};
pub use grid::{GridGeom, SkullMask, VoxelGrid};
