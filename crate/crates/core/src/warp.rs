//! Homographies realised as sparse linear operators on rasters.
//!
//! Every output pixel gathers four source samples with bilinear weights.
//! Out-of-range source coordinates are folded back by reflection about the
//! first and last pixel centres, so weights stay a partition of unity and
//! the table is a fixed linear map with an exact transpose.

use crate::error::{dims_mismatch, Result};
use crate::image::{reflect_coord, Image};
use crate::linear::LinearMap;
use crate::projective::{Homography, Projected, INFINITY_EPS};
use crate::scalar::Scalar;

/// Precomputed bilinear gather table.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpTable<T> {
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    index: Vec<[u32; 4]>,
    weight: Vec<[T; 4]>,
}

/// Bilinear taps for a sample coordinate already folded into `[0, n-1]`.
#[inline]
fn taps<T: Scalar>(x: T, n: usize) -> (usize, usize, T) {
    let x0 = x.floor();
    let i0 = (x0.to_usize().unwrap_or(0)).min(n - 1);
    if i0 + 1 >= n {
        (i0, i0, T::zero())
    } else {
        (i0, i0 + 1, x - x0)
    }
}

impl<T: Scalar> WarpTable<T> {
    fn from_coords(
        in_h: usize,
        in_w: usize,
        out_h: usize,
        out_w: usize,
        mut src: impl FnMut(usize, usize) -> (T, T),
    ) -> Self {
        let mut index = Vec::with_capacity(out_h * out_w);
        let mut weight = Vec::with_capacity(out_h * out_w);
        for i in 0..out_h {
            for j in 0..out_w {
                let (sx, sy) = src(i, j);
                let sx = if sx.is_finite() { reflect_coord(sx, in_w) } else { T::zero() };
                let sy = if sy.is_finite() { reflect_coord(sy, in_h) } else { T::zero() };
                let (x0, x1, fx) = taps(sx, in_w);
                let (y0, y1, fy) = taps(sy, in_h);
                let one = T::one();
                index.push([
                    (y0 * in_w + x0) as u32,
                    (y0 * in_w + x1) as u32,
                    (y1 * in_w + x0) as u32,
                    (y1 * in_w + x1) as u32,
                ]);
                weight.push([
                    (one - fx) * (one - fy),
                    fx * (one - fy),
                    (one - fx) * fy,
                    fx * fy,
                ]);
            }
        }
        Self {
            in_h,
            in_w,
            out_h,
            out_w,
            index,
            weight,
        }
    }

    /// Table realising `x'(p) = x(h^-1 p)` on an `height x width` grid.
    pub fn from_homography(h: &Homography<T>, height: usize, width: usize) -> Result<Self> {
        let inv = h.inverse()?;
        let half = T::c(0.5);
        let eps = T::c(INFINITY_EPS);
        let m = *inv.matrix();
        Ok(Self::from_coords(height, width, height, width, |i, j| {
            let u = T::from_usize_lossy(j) + half;
            let v = T::from_usize_lossy(i) + half;
            match inv.apply_point(u, v) {
                Projected::Finite(su, sv) => (su - half, sv - half),
                Projected::AtInfinity => {
                    // push the vanishing point far away along its direction
                    let [x, y, w] = m.mul_vec([u, v, T::one()]);
                    let w = if w < T::zero() { -eps } else { eps };
                    (x / w - half, y / w - half)
                }
            }
        }))
    }

    /// Bilinear upsampling by an integer factor: fine pixel `i` reads coarse
    /// sample coordinate `i / factor`, so coarse samples sit on fine pixels
    /// `0, factor, 2 factor, ...`.
    pub fn upsample(in_h: usize, in_w: usize, factor: usize) -> Self {
        assert!(factor >= 1, "upsample factor must be >= 1");
        let f = T::from_usize_lossy(factor);
        Self::from_coords(in_h, in_w, in_h * factor, in_w * factor, |i, j| {
            (T::from_usize_lossy(j) / f, T::from_usize_lossy(i) / f)
        })
    }

    pub fn input_size(&self) -> (usize, usize) {
        (self.in_h, self.in_w)
    }

    pub fn output_size(&self) -> (usize, usize) {
        (self.out_h, self.out_w)
    }

    /// Source indices and weights of output pixel `p` (row-major).
    pub fn taps(&self, p: usize) -> (&[u32; 4], &[T; 4]) {
        (&self.index[p], &self.weight[p])
    }

    pub fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        if (x.height(), x.width()) != (self.in_h, self.in_w) {
            return Err(dims_mismatch((self.in_h, self.in_w), (x.height(), x.width())));
        }
        let mut out = Image::zeros(x.channels(), self.out_h, self.out_w);
        for c in 0..x.channels() {
            let src = x.plane(c);
            let dst = out.plane_mut(c);
            for (p, d) in dst.iter_mut().enumerate() {
                let (ix, w) = (&self.index[p], &self.weight[p]);
                *d = w[0] * src[ix[0] as usize]
                    + w[1] * src[ix[1] as usize]
                    + w[2] * src[ix[2] as usize]
                    + w[3] * src[ix[3] as usize];
            }
        }
        Ok(out)
    }

    /// Transpose: weighted scatter-add back onto the source grid.
    pub fn adjoint(&self, v: &Image<T>) -> Result<Image<T>> {
        if (v.height(), v.width()) != (self.out_h, self.out_w) {
            return Err(dims_mismatch((self.out_h, self.out_w), (v.height(), v.width())));
        }
        let mut out = Image::zeros(v.channels(), self.in_h, self.in_w);
        for c in 0..v.channels() {
            let src = v.plane(c);
            let dst = out.plane_mut(c);
            for (p, &s) in src.iter().enumerate() {
                let (ix, w) = (&self.index[p], &self.weight[p]);
                for k in 0..4 {
                    dst[ix[k] as usize] += w[k] * s;
                }
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> LinearMap<T> for WarpTable<T> {
    fn name(&self) -> &'static str {
        "warp"
    }
    fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        WarpTable::apply(self, x)
    }
    fn adjoint(&self, y: &Image<T>) -> Result<Image<T>> {
        WarpTable::adjoint(self, y)
    }
}

pub fn build_warp<T: Scalar>(h: &Homography<T>, height: usize, width: usize) -> Result<WarpTable<T>> {
    WarpTable::from_homography(h, height, width)
}

pub fn warp_apply<T: Scalar>(t: &WarpTable<T>, x: &Image<T>) -> Result<Image<T>> {
    t.apply(x)
}

pub fn warp_adjoint<T: Scalar>(t: &WarpTable<T>, v: &Image<T>) -> Result<Image<T>> {
    t.adjoint(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projective::{camera_rotation_homography, CameraIntrinsics, EulerAngles, Mat3};

    fn ramp(c: usize, h: usize, w: usize) -> Image<f64> {
        Image::from_fn(c, h, w, |c, y, x| (c * 1000 + y * 37 + x * 3) as f64 * 1e-3)
    }

    fn translation(du: f64, dv: f64) -> Homography<f64> {
        Homography::from_matrix(Mat3([[1.0, 0.0, du], [0.0, 1.0, dv], [0.0, 0.0, 1.0]])).unwrap()
    }

    #[test]
    fn identity_table_is_identity() {
        let t = build_warp(&Homography::identity(), 7, 9).unwrap();
        let x = ramp(2, 7, 9);
        assert_eq!(t.apply(&x).unwrap(), x);
        assert_eq!(t.adjoint(&x).unwrap(), x);
        for p in 0..63 {
            let (ix, w) = t.taps(p);
            assert_eq!(ix[0] as usize, p);
            assert_eq!(w[0], 1.0);
        }
    }

    #[test]
    fn integer_shift_translates_interior() {
        let (h, w) = (12, 16);
        let t = build_warp(&translation(5.0, 0.0), h, w).unwrap();
        let x = ramp(1, h, w);
        let y = t.apply(&x).unwrap();
        for i in 0..h {
            for j in 5..w {
                assert_eq!(y.get(0, i, j), x.get(0, i, j - 5));
            }
            // reflected border: output col j reads source col 5 - j
            for j in 0..5 {
                assert_eq!(y.get(0, i, j), x.get(0, i, 5 - j));
            }
        }
        // adjoint moves interior mass the opposite way
        let back = t.adjoint(&y).unwrap();
        for i in 0..h {
            for j in 6..w - 5 {
                assert_eq!(back.get(0, i, j), y.get(0, i, j + 5));
            }
        }
    }

    #[test]
    fn quarter_turn_matches_array_rotation() {
        let n = 10;
        let k = CameraIntrinsics::<f64>::centred(n, n);
        let h = camera_rotation_homography(&k, &EulerAngles::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let x = ramp(1, n, n);
        let y = build_warp(&h, n, n).unwrap().apply(&x).unwrap();
        // output (row i, col j) reads source (row n-1-j, col i)
        for i in 0..n {
            for j in 0..n {
                assert!((y.get(0, i, j) - x.get(0, n - 1 - j, i)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn weights_partition_unity_and_bound_energy() {
        let k = CameraIntrinsics::<f64>::centred(20, 24);
        let h = camera_rotation_homography(&k, &EulerAngles::new(0.2, -0.15, 0.4));
        let t = build_warp(&h, 20, 24).unwrap();
        for p in 0..20 * 24 {
            let (ix, w) = t.taps(p);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&v| v >= 0.0));
            assert!(ix.iter().all(|&i| (i as usize) < 20 * 24));
        }
        let x = ramp(1, 20, 24).map(|v| (v * 13.0).sin());
        assert!(t.apply(&x).unwrap().max_abs() <= x.max_abs() + 1e-15);
    }

    #[test]
    fn constant_image_stays_constant() {
        let k = CameraIntrinsics::<f64>::centred(16, 16);
        let h = camera_rotation_homography(&k, &EulerAngles::new(0.3, 0.1, -0.7));
        let x = Image::filled(3, 16, 16, 0.42);
        let y = build_warp(&h, 16, 16).unwrap().apply(&x).unwrap();
        assert!(y.data().iter().all(|v| (v - 0.42).abs() < 1e-14));
    }

    #[test]
    fn upsample_hits_coarse_samples() {
        let x = ramp(1, 4, 5);
        let t = WarpTable::upsample(4, 5, 3);
        let y = t.apply(&x).unwrap();
        assert_eq!(y.dims(), (1, 12, 15));
        for i in 0..4 {
            for j in 0..5 {
                assert_eq!(y.get(0, 3 * i, 3 * j), x.get(0, i, j));
            }
        }
        assert!((y.get(0, 0, 1) - (2.0 * x.get(0, 0, 0) + x.get(0, 0, 1)) / 3.0).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let t = build_warp(&Homography::<f64>::identity(), 4, 4).unwrap();
        assert!(t.apply(&Image::zeros(1, 4, 5)).is_err());
        assert!(t.adjoint(&Image::zeros(1, 5, 4)).is_err());
    }
}
