//! Simulation of a single-path sub-Hadamard snapshot spectrometer.
//!
//! The crate covers the whole measurement chain: Hadamard-S coding
//! matrices ([`smatrix`]), synthetic scenes ([`scene`]), the coded
//! dispersive forward model with detector noise ([`optics`]), linear
//! spectral reconstruction ([`recon`]), SNR metrics and Monte Carlo
//! harnesses ([`metrics`]), a from-scratch convolutional network that
//! recovers the coded intensity image from the overlapped measurement
//! ([`netunmix`]), and experiment drivers that tie them together
//! ([`pipeline`]).

pub mod error;
pub mod metrics;
pub mod netunmix;
pub mod optics;
pub mod pipeline;
pub mod recon;
pub mod scene;
pub mod seeds;
pub mod smatrix;

pub use error::{Error, Result};
pub use optics::{Code, CodedIntensity, DispersedImage, NoiseKind, NoiseModel};
pub use recon::{ReconMethod, ReconResult, SnapMatrix};
pub use scene::{SceneModel, SpectralCube};
pub use smatrix::{build_smatrix, SMatrix, SMatrixInverse};
