//! Fixed linear maps between rasters, each paired with its exact adjoint.

use crate::error::Result;
use crate::image::Image;
use crate::scalar::Scalar;

/// A linear operator on images with a matching transpose.
///
/// Implementations must satisfy `<A x, v> = <x, A^T v>` to rounding error;
/// the autodiff tape relies on `adjoint` for back-propagation through
/// [`Tape::linear`](crate::autodiff::Tape::linear).
pub trait LinearMap<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, x: &Image<T>) -> Result<Image<T>>;
    fn adjoint(&self, y: &Image<T>) -> Result<Image<T>>;
}

/// Relative dot-product test `|<Ax, v> - <x, A^T v>| / max(|<Ax, v>|, tiny)`.
pub fn adjoint_mismatch<T: Scalar, M: LinearMap<T> + ?Sized>(
    map: &M,
    x: &Image<T>,
    v: &Image<T>,
) -> Result<f64> {
    let lhs = map.apply(x)?.dot(v)?;
    let rhs = x.dot(&map.adjoint(v)?)?;
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300))
}
