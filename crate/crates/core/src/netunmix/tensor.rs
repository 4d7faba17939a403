use nalgebra::DMatrix;

use crate::error::{dims_err, Error, Result};

/// Dense `(channels, height, width)` tensor, row-major within each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::SizeMismatch {
                expected: c * h * w,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor values".into()));
        }
        Ok(Self { c, h, w, data })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    /// Skips the finiteness scan; for layer outputs computed from finite inputs.
    pub(crate) fn from_raw(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), c * h * w);
        Self { c, h, w, data }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let (h, w) = m.shape();
        Self::new(
            1,
            h,
            w,
            (0..h)
                .flat_map(|i| (0..w).map(move |j| m[(i, j)]))
                .collect(),
        )
    }

    /// Single-channel matrix view of channel `ch`.
    pub fn channel_matrix(&self, ch: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            self.h,
            self.w,
            &self.data[ch * self.h * self.w..(ch + 1) * self.h * self.w],
        )
    }

    pub fn into_matrix(self) -> Result<DMatrix<f64>> {
        if self.c != 1 {
            return Err(dims_err("tensor channels", 1, self.c));
        }
        Ok(DMatrix::from_row_slice(self.h, self.w, &self.data))
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.h + y) * self.w + x
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_raw(
            self.c,
            self.h,
            self.w,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Elementwise product with a tensor of the same shape.
    pub fn mul_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a *= b;
        }
    }

    /// Copy into a larger zero tensor at the top-left corner.
    pub fn pad_to(&self, h: usize, w: usize) -> Result<Tensor> {
        if h < self.h || w < self.w {
            return Err(dims_err("padded size", (self.h, self.w), (h, w)));
        }
        let mut out = Tensor::zeros(self.c, h, w);
        for c in 0..self.c {
            for y in 0..self.h {
                let src = self.idx(c, y, 0);
                let dst = out.idx(c, y, 0);
                out.data[dst..dst + self.w].copy_from_slice(&self.data[src..src + self.w]);
            }
        }
        Ok(out)
    }

    /// Top-left `h × w` window of every channel.
    pub fn crop(&self, h: usize, w: usize) -> Result<Tensor> {
        if h > self.h || w > self.w {
            return Err(dims_err("crop size", (self.h, self.w), (h, w)));
        }
        let mut out = Tensor::zeros(self.c, h, w);
        for c in 0..self.c {
            for y in 0..h {
                let src = self.idx(c, y, 0);
                let dst = out.idx(c, y, 0);
                out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
            }
        }
        Ok(out)
    }

    pub(crate) fn check_dims(&self, what: &str, dims: (usize, usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(dims_err(what, dims, self.dims()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks() {
        assert!(Tensor::new(1, 2, 2, vec![0.0; 3]).is_err());
        assert!(Tensor::new(1, 1, 1, vec![f64::NAN]).is_err());
        let t = Tensor::new(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.get(1, 0, 0), 3.0);
    }

    #[test]
    fn pad_crop_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = Tensor::from_matrix(&m).unwrap();
        let p = t.pad_to(3, 5).unwrap();
        assert_eq!(p.get(0, 1, 2), 6.0);
        assert_eq!(p.get(0, 2, 4), 0.0);
        assert_eq!(p.crop(2, 3).unwrap(), t);
        assert_eq!(t.into_matrix().unwrap(), m);
    }
}
