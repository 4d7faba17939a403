//! Convolutional network that regresses the coded intensity image `S∘I`
//! from the overlapped dispersive measurement `g`.
//!
//! The layout has two parts. The unmixing part is a `1 × (m+1)`
//! convolution along the dispersion axis, a pointwise expansion to `m`
//! channels and four 3×3 convolutions narrowing back to one. The
//! enhancement part is an encoder-decoder of downsamplers, factorized
//! residual blocks and stride-2 transposed convolutions.
//!
//! Everything runs in `f64` on the CPU with explicit backward passes.

pub mod arch;
pub mod gradcheck;
pub mod io;
pub mod layers;
pub mod loss;
pub mod tensor;
pub mod train;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{dims_err, Result};
use crate::optics::{Code, DispersedImage};

pub use arch::{build_network, ArchConfig, NetworkParams, Preset};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use io::{read_params, write_params};
pub use layers::DownsamplerKind;
pub use loss::{hard_mining_loss, mse_loss, LossKind};
pub use tensor::Tensor;
pub use train::{train, Optimizer, Sample, TrainConfig, TrainOutcome};

/// Zero-pad `g` (`n × (n+m−1)`) to the network input `W × (W+m−1)`.
pub fn input_tensor(arch: &ArchConfig, g: &DispersedImage) -> Result<Tensor> {
    if g.bands() != arch.bands || g.rows() > arch.width {
        return Err(dims_err(
            "measurement (rows, bands)",
            (arch.width, arch.bands),
            (g.rows(), g.bands()),
        ));
    }
    let (_, h, w) = arch.input_dims();
    Tensor::from_matrix(g.data())?.pad_to(h, w)
}

/// Network sample for one measurement and its `n × n` coded-intensity label.
pub fn make_sample(arch: &ArchConfig, g: &DispersedImage, label: &DMatrix<f64>) -> Result<Sample> {
    if label.shape() != (g.rows(), g.rows()) {
        return Err(dims_err("label", (g.rows(), g.rows()), label.shape()));
    }
    Ok(Sample {
        input: input_tensor(arch, g)?,
        label: Tensor::from_matrix(label)?.pad_to(arch.width, arch.width)?,
    })
}

/// The aperture code as a `1 × W × W` training mask: zero wherever the
/// coded intensity is known to vanish.
pub fn code_mask(arch: &ArchConfig, code: &Code) -> Result<Tensor> {
    Tensor::from_matrix(&code.to_matrix())?.pad_to(arch.width, arch.width)
}

/// [`infer`] followed by zeroing the pixels the code closes.
pub fn infer_masked(
    params: &NetworkParams,
    g: &DispersedImage,
    code: &Code,
) -> Result<DMatrix<f64>> {
    let est = infer(params, g)?;
    if code.order() != est.nrows() {
        return Err(dims_err("code order", est.nrows(), code.order()));
    }
    Ok(est.component_mul(&code.to_matrix()))
}

/// Intensity estimate `Î` for `g`, cropped to `n × n` and clamped at zero.
pub fn infer(params: &NetworkParams, g: &DispersedImage) -> Result<DMatrix<f64>> {
    let out = params.predict(&input_tensor(&params.arch, g)?)?;
    let n = g.rows();
    Ok(out.crop(n, n)?.into_matrix()?.map(|v| v.max(0.0)))
}

pub fn infer_batch(params: &NetworkParams, gs: &[DispersedImage]) -> Result<Vec<DMatrix<f64>>> {
    gs.par_iter().map(|g| infer(params, g)).collect()
}

/// Baseline without learning: every pixel takes the mean of the `m`
/// detector columns its spectrum lands on, `Î(i,j) = (1/m) Σ_λ g(i, j+λ)`.
pub fn naive_dedisperse(g: &DispersedImage) -> DMatrix<f64> {
    let (n, m) = (g.rows(), g.bands());
    let d = g.data();
    DMatrix::from_fn(n, n, |i, j| {
        (0..m).map(|l| d[(i, j + l)]).sum::<f64>() / m as f64
    })
}
