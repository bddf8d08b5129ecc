//! Stride-1 "same" 2-D convolution (cross-correlation) kernels.

use serde::{Deserialize, Serialize};

use crate::image::reflect_index;
use crate::scalar::Scalar;

/// Boundary extension used to keep the output the size of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Reflect,
    Zero,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub ci: usize,
    pub co: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl ConvDims {
    fn r(&self) -> usize {
        self.k / 2
    }
    fn ph(&self) -> usize {
        self.h + 2 * self.r()
    }
    fn pw(&self) -> usize {
        self.w + 2 * self.r()
    }
}

/// Source index along one axis for padded position `p`, or `None` for a zero pad.
#[inline]
fn source(p: usize, r: usize, n: usize, pad: Padding) -> Option<usize> {
    let i = p as isize - r as isize;
    if (0..n as isize).contains(&i) {
        return Some(i as usize);
    }
    match pad {
        Padding::Reflect => Some(reflect_index(i, n)),
        Padding::Zero => None,
    }
}

pub(crate) fn pad<T: Scalar>(x: &[T], d: &ConvDims, mode: Padding) -> Vec<T> {
    let (r, ph, pw) = (d.r(), d.ph(), d.pw());
    let mut out = vec![T::zero(); d.ci * ph * pw];
    let cols: Vec<Option<usize>> = (0..pw).map(|p| source(p, r, d.w, mode)).collect();
    for c in 0..d.ci {
        for py in 0..ph {
            let Some(sy) = source(py, r, d.h, mode) else { continue };
            let src = &x[(c * d.h + sy) * d.w..][..d.w];
            let dst = &mut out[(c * ph + py) * pw..][..pw];
            for (px, s) in cols.iter().enumerate() {
                if let Some(sx) = s {
                    dst[px] = src[*sx];
                }
            }
        }
    }
    out
}

/// Adjoint of [`pad`]: folds a padded gradient back onto the input grid.
pub(crate) fn unpad_adjoint<T: Scalar>(gp: &[T], d: &ConvDims, mode: Padding) -> Vec<T> {
    let (r, ph, pw) = (d.r(), d.ph(), d.pw());
    let mut out = vec![T::zero(); d.ci * d.h * d.w];
    let cols: Vec<Option<usize>> = (0..pw).map(|p| source(p, r, d.w, mode)).collect();
    for c in 0..d.ci {
        for py in 0..ph {
            let Some(sy) = source(py, r, d.h, mode) else { continue };
            let src = &gp[(c * ph + py) * pw..][..pw];
            let dst = &mut out[(c * d.h + sy) * d.w..][..d.w];
            for (px, s) in cols.iter().enumerate() {
                if let Some(sx) = s {
                    dst[*sx] += src[px];
                }
            }
        }
    }
    out
}

pub(crate) fn forward<T: Scalar>(xp: &[T], w: &[T], b: Option<&[T]>, d: &ConvDims) -> Vec<T> {
    let (k, ph, pw) = (d.k, d.ph(), d.pw());
    let hw = d.h * d.w;
    let mut out = vec![T::zero(); d.co * hw];
    for co in 0..d.co {
        let o = &mut out[co * hw..][..hw];
        if let Some(b) = b {
            o.fill(b[co]);
        }
        for ci in 0..d.ci {
            let xc = &xp[ci * ph * pw..][..ph * pw];
            for ky in 0..k {
                let wr = &w[((co * d.ci + ci) * k + ky) * k..][..k];
                if k == 3 {
                    let (w0, w1, w2) = (wr[0], wr[1], wr[2]);
                    for i in 0..d.h {
                        let src = &xc[(i + ky) * pw..][..d.w + 2];
                        let dst = &mut o[i * d.w..][..d.w];
                        for (j, a) in dst.iter_mut().enumerate() {
                            *a += w0 * src[j] + w1 * src[j + 1] + w2 * src[j + 2];
                        }
                    }
                    continue;
                }
                for (kx, &wv) in wr.iter().enumerate() {
                    for i in 0..d.h {
                        let src = &xc[(i + ky) * pw + kx..][..d.w];
                        let dst = &mut o[i * d.w..][..d.w];
                        for (a, &s) in dst.iter_mut().zip(src) {
                            *a += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(d xp, d w, d b)` for upstream gradient `g` of shape `co x h x w`.
pub(crate) fn backward<T: Scalar>(
    xp: &[T],
    w: &[T],
    g: &[T],
    d: &ConvDims,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (k, ph, pw) = (d.k, d.ph(), d.pw());
    let hw = d.h * d.w;
    let mut gxp = vec![T::zero(); d.ci * ph * pw];
    let mut gw = vec![T::zero(); w.len()];
    let mut gb = vec![T::zero(); d.co];
    for co in 0..d.co {
        let go = &g[co * hw..][..hw];
        gb[co] = go.iter().copied().sum();
        for ci in 0..d.ci {
            let xc = &xp[ci * ph * pw..][..ph * pw];
            let gxc = &mut gxp[ci * ph * pw..][..ph * pw];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((co * d.ci + ci) * k + ky) * k + kx;
                    let wv = w[widx];
                    let mut acc = T::zero();
                    for i in 0..d.h {
                        let gr = &go[i * d.w..][..d.w];
                        let off = (i + ky) * pw + kx;
                        let xr = &xc[off..][..d.w];
                        acc += dot(gr, xr);
                        let gxr = &mut gxc[off..][..d.w];
                        for (a, &s) in gxr.iter_mut().zip(gr) {
                            *a += wv * s;
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    (gxp, gw, gb)
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            lanes[k] += x[k] * y[k];
        }
    }
    let mut s = lanes.iter().copied().sum::<T>();
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}
