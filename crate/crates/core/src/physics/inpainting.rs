use rand::Rng;

use crate::error::{dims_mismatch, Error, Result};
use crate::image::Image;
use crate::linear::LinearMap;
use crate::scalar::Scalar;

/// Random pixel masking: `y = m ⊙ x` per channel, with `m` a binary raster.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintingOperator<T> {
    mask: Image<T>,
    masked_fraction: f64,
}

impl<T: Scalar> InpaintingOperator<T> {
    /// Wraps an existing `1 x H x W` mask; entries must be exactly 0 or 1.
    pub fn from_mask(mask: Image<T>, masked_fraction: f64) -> Result<Self> {
        if mask.channels() != 1 {
            return Err(dims_mismatch(1, mask.channels()));
        }
        if mask.data().iter().any(|&v| v != T::zero() && v != T::one()) {
            return Err(Error::InvalidParameter("mask entries must be 0 or 1".into()));
        }
        Ok(Self {
            mask,
            masked_fraction,
        })
    }

    pub fn mask(&self) -> &Image<T> {
        &self.mask
    }

    /// Nominal masked fraction `p` the mask was drawn with.
    pub fn masked_fraction(&self) -> f64 {
        self.masked_fraction
    }

    pub fn kept_count(&self) -> usize {
        self.mask.data().iter().filter(|&&v| v == T::one()).count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_count() as f64 / self.mask.len() as f64
    }

    pub fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        if (x.height(), x.width()) != (self.mask.height(), self.mask.width()) {
            return Err(dims_mismatch(
                (self.mask.height(), self.mask.width()),
                (x.height(), x.width()),
            ));
        }
        let mut out = x.clone();
        let m = self.mask.data();
        for c in 0..x.channels() {
            for (v, &k) in out.plane_mut(c).iter_mut().zip(m) {
                *v *= k;
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> LinearMap<T> for InpaintingOperator<T> {
    fn name(&self) -> &'static str {
        "inpaint"
    }
    fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        InpaintingOperator::apply(self, x)
    }
    fn adjoint(&self, y: &Image<T>) -> Result<Image<T>> {
        InpaintingOperator::apply(self, y)
    }
}

/// Draws an i.i.d. Bernoulli(1 - p) keep-mask.
pub fn random_mask<T: Scalar, R: Rng + ?Sized>(
    p: f64,
    height: usize,
    width: usize,
    rng: &mut R,
) -> Result<InpaintingOperator<T>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "masked fraction must lie in [0, 1), got {p}"
        )));
    }
    let mask = Image::from_fn(1, height, width, |_, _, _| {
        if rng.random::<f64>() >= p {
            T::one()
        } else {
            T::zero()
        }
    });
    Ok(InpaintingOperator {
        mask,
        masked_fraction: p,
    })
}

pub fn inpaint_apply<T: Scalar>(op: &InpaintingOperator<T>, x: &Image<T>) -> Result<Image<T>> {
    op.apply(x)
}
