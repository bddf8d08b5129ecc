//! Channel-major raster used for images, measurements and network activations.

use crate::error::{dims_mismatch, Error, Result};
use crate::scalar::Scalar;

/// A `C x H x W` raster stored channel-major, row-major within a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        assert!(channels >= 1 && height >= 1 && width >= 1, "image dims must be >= 1");
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dims must be >= 1, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(dims_mismatch(channels * height * width, data.len()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut img = Self::zeros(channels, height, width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    img.data[(c * height + y) * width + x] = f(c, y, x);
                }
            }
        }
        img
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }
    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }
    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }
    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Single channel `c` as its own image.
    pub fn channel(&self, c: usize) -> Image<T> {
        Image {
            channels: 1,
            height: self.height,
            width: self.width,
            data: self.plane(c).to_vec(),
        }
    }

    /// Stacks single- or multi-channel images of identical spatial size.
    pub fn stack(parts: &[Image<T>]) -> Result<Image<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("cannot stack zero images".into()))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.height != h || p.width != w {
                return Err(dims_mismatch((h, w), (p.height, p.width)));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Image::from_vec(channels, h, w, data)
    }

    pub fn same_dims(&self, other: &Image<T>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(dims_mismatch(self.dims(), other.dims()));
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Image<T> {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Image<T>, f: impl Fn(T, T) -> T) -> Result<Image<T>> {
        self.same_dims(other)?;
        Ok(Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Image<T>) -> Result<Image<T>> {
        self.zip_map(other, |a, b| a + b)
    }
    pub fn sub(&self, other: &Image<T>) -> Result<Image<T>> {
        self.zip_map(other, |a, b| a - b)
    }
    pub fn scale(&self, s: T) -> Image<T> {
        self.map(|v| v * s)
    }

    /// Euclidean inner product accumulated in `f64`.
    pub fn dot(&self, other: &Image<T>) -> Result<f64> {
        self.same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.f64() * b.f64())
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.f64() * v.f64()).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| v.f64()).sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp(&self, lo: T, hi: T) -> Image<T> {
        self.map(|v| v.max(lo).min(hi))
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::c(v.f64())).collect(),
        }
    }
}

/// Reflects an integer index into `0..n` about the first and last samples
/// (`-1 -> 1`, `n -> n - 2`), folding repeatedly for far indices.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut r = i.rem_euclid(period);
    if r >= n as isize {
        r = period - r;
    }
    r as usize
}

/// Continuous counterpart of [`reflect_index`] on sample coordinates in `[0, n-1]`.
#[inline]
pub fn reflect_coord<T: Scalar>(x: T, n: usize) -> T {
    if n == 1 {
        return T::zero();
    }
    let last = T::from_usize_lossy(n - 1);
    let period = last + last;
    let mut r = x % period;
    if r < T::zero() {
        r += period;
    }
    if r > last {
        r = period - r;
    }
    // guard against `period - tiny` rounding past the edge
    r.max(T::zero()).min(last)
}
