//! Training objectives.
//!
//! Every squared-error term is a per-element mean: measurement terms divide
//! each part by its number of observed entries and sum over parts, image
//! terms divide by the number of pixels times channels. With this
//! normalization Gaussian SURE at `sigma = 0` equals the MC loss exactly.
//!
//! # Poisson SURE
//!
//! For `y = gamma * N` with `N ~ Poisson(z / gamma)` and `h = A f(y)`,
//! `E[z_k g(y)] = E[y_k g(y - gamma e_k)]` and `E[y_k^2] = z_k^2 + gamma z_k`.
//! Expanding `||h - z||^2` and replacing each unobservable expectation gives
//!
//! ```text
//! E||h(y) - z||^2 = E[ ||h(y) - y||^2 - gamma sum_k y_k
//!                      + 2 gamma sum_k y_k (h_k(y) - h_k(y - gamma e_k)) ]
//! ```
//!
//! A first-order expansion `h_k(y) - h_k(y - gamma e_k) ~ gamma dh_k/dy_k`
//! and a Rademacher probe `b` turn the last sum into
//! `(2 gamma / tau) sum_k b_k y_k (h_k(y + tau b) - h_k(y))`, the form used
//! by [`sure_poisson`].

use std::sync::Arc;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{dims_mismatch, Error, Result};
use crate::image::Image;
use crate::linear::LinearMap;
use crate::models::{ReconNet, Task};
use crate::physics::{ForwardOperator, Measurement, NoiseModel, PansharpeningOperator};
use crate::projective::{sample_transform, GroupKind, GroupSpec, TransformBounds};
use crate::scalar::Scalar;
use crate::warp::WarpTable;

/// Forward differences `(x[i, j+1] - x[i, j], x[i+1, j] - x[i, j])` stacked
/// as channels; the last column / row difference is zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct FiniteDiff;

impl<T: Scalar> LinearMap<T> for FiniteDiff {
    fn name(&self) -> &'static str {
        "finite_diff"
    }
    fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        let (c, h, w) = x.dims();
        let mut out = Image::zeros(2 * c, h, w);
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let v = x.get(ch, i, j);
                    if j + 1 < w {
                        out.set(2 * ch, i, j, x.get(ch, i, j + 1) - v);
                    }
                    if i + 1 < h {
                        out.set(2 * ch + 1, i, j, x.get(ch, i + 1, j) - v);
                    }
                }
            }
        }
        Ok(out)
    }
    fn adjoint(&self, d: &Image<T>) -> Result<Image<T>> {
        let (c2, h, w) = d.dims();
        if c2 % 2 != 0 {
            return Err(dims_mismatch("even channel count", c2));
        }
        let mut out = Image::zeros(c2 / 2, h, w);
        for ch in 0..c2 / 2 {
            for i in 0..h {
                for j in 0..w {
                    if j + 1 < w {
                        let g = d.get(2 * ch, i, j);
                        out.set(ch, i, j + 1, out.get(ch, i, j + 1) + g);
                        out.set(ch, i, j, out.get(ch, i, j) - g);
                    }
                    if i + 1 < h {
                        let g = d.get(2 * ch + 1, i, j);
                        out.set(ch, i + 1, j, out.get(ch, i + 1, j) + g);
                        out.set(ch, i, j, out.get(ch, i, j) - g);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Channels `[start, start + len)` of a `total`-channel image.
#[derive(Debug, Clone, Copy)]
struct ChannelSlice {
    start: usize,
    len: usize,
    total: usize,
}

impl<T: Scalar> LinearMap<T> for ChannelSlice {
    fn name(&self) -> &'static str {
        "channel_slice"
    }
    fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        if x.channels() != self.total {
            return Err(dims_mismatch(self.total, x.channels()));
        }
        let n = x.plane_len();
        Image::from_vec(
            self.len,
            x.height(),
            x.width(),
            x.data()[self.start * n..(self.start + self.len) * n].to_vec(),
        )
    }
    fn adjoint(&self, y: &Image<T>) -> Result<Image<T>> {
        let n = y.plane_len();
        let mut data = vec![T::zero(); self.total * n];
        data[self.start * n..(self.start + self.len) * n].copy_from_slice(y.data());
        Image::from_vec(self.total, y.height(), y.width(), data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TvFlavor {
    #[default]
    Anisotropic,
    Isotropic,
}

/// Smoothing added under the square root of isotropic TV.
pub const ISOTROPIC_TV_EPS: f64 = 1e-8;

/// A single objective term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTerm {
    Mc,
    Tv,
    Ei,
    Sure,
    Supervised,
    Wald,
}

impl LossTerm {
    pub fn name(self) -> &'static str {
        match self {
            LossTerm::Mc => "mc",
            LossTerm::Tv => "tv",
            LossTerm::Ei => "ei",
            LossTerm::Sure => "sure",
            LossTerm::Supervised => "supervised",
            LossTerm::Wald => "wald",
        }
    }
}

impl FromStr for LossTerm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "mc" => LossTerm::Mc,
            "tv" => LossTerm::Tv,
            "ei" => LossTerm::Ei,
            "sure" => LossTerm::Sure,
            "supervised" => LossTerm::Supervised,
            "wald" => LossTerm::Wald,
            other => return Err(Error::InvalidParameter(format!("unknown loss term `{other}`"))),
        })
    }
}

/// Parses `"mc+tv+ei"`-style selections; terms are kept in canonical order.
pub fn parse_terms(s: &str) -> Result<Vec<LossTerm>> {
    let mut terms = s.split('+').map(LossTerm::from_str).collect::<Result<Vec<_>>>()?;
    terms.sort();
    let n = terms.len();
    terms.dedup();
    if terms.len() != n {
        return Err(Error::InvalidParameter(format!("repeated loss term in `{s}`")));
    }
    Ok(terms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub mc: f64,
    pub tv: f64,
    pub ei: f64,
    pub sure: f64,
    pub supervised: f64,
    pub wald: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mc: 1.0,
            tv: 1.0,
            ei: 1.0,
            sure: 1.0,
            supervised: 1.0,
            wald: 1.0,
        }
    }
}

impl LossWeights {
    pub fn get(&self, t: LossTerm) -> f64 {
        match t {
            LossTerm::Mc => self.mc,
            LossTerm::Tv => self.tv,
            LossTerm::Ei => self.ei,
            LossTerm::Sure => self.sure,
            LossTerm::Supervised => self.supervised,
            LossTerm::Wald => self.wald,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// `+`-separated terms, e.g. `"mc+tv+ei"` or `"sure+ei"`.
    pub terms: String,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default = "default_group")]
    pub group: GroupKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub bounds: TransformBounds,
    /// Hutchinson probes per SURE evaluation.
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// SURE perturbation `tau = tau_scale * max|y|`.
    #[serde(default = "default_tau_scale")]
    pub tau_scale: f64,
    #[serde(default)]
    pub tv: TvFlavor,
}

fn default_group() -> GroupKind {
    GroupKind::PanTilt
}
fn default_alpha() -> f64 {
    0.1
}
fn default_probes() -> usize {
    1
}
fn default_tau_scale() -> f64 {
    1e-3
}

impl LossConfig {
    pub fn new(terms: &str) -> Self {
        Self {
            terms: terms.into(),
            weights: LossWeights::default(),
            group: default_group(),
            alpha: default_alpha(),
            bounds: TransformBounds::default(),
            probes: default_probes(),
            tau_scale: default_tau_scale(),
            tv: TvFlavor::default(),
        }
    }

    pub fn parsed_terms(&self) -> Result<Vec<LossTerm>> {
        parse_terms(&self.terms)
    }

    /// Checks the term selection against the task.
    pub fn validate(&self, task: Task) -> Result<()> {
        let terms = self.parsed_terms()?;
        let bad = |m: String| Err(Error::InvalidParameter(format!("loss: {m}")));
        let consistency = [LossTerm::Mc, LossTerm::Sure, LossTerm::Supervised, LossTerm::Wald];
        if !terms.iter().any(|t| consistency.contains(t)) {
            return bad(format!("`{}` has no consistency term", self.terms));
        }
        for t in &terms {
            let w = self.weights.get(*t);
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("weight of {} must be >= 0", t.name()));
            }
        }
        if task == Task::Inpainting && terms.iter().any(|t| matches!(t, LossTerm::Tv | LossTerm::Wald)) {
            return bad("tv and wald apply to pansharpening only".into());
        }
        if terms.contains(&LossTerm::Mc) && terms.contains(&LossTerm::Sure) {
            return bad("sure replaces mc; select one".into());
        }
        if self.probes == 0 {
            return bad("probes must be >= 1".into());
        }
        if !(self.tau_scale > 0.0) {
            return bad("tau_scale must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// A tape with the network parameters bound, plus the physics of one tile.
pub struct Graph<'a, T: Scalar> {
    pub tape: Tape<T>,
    pub params: Vec<Var>,
    pub net: &'a ReconNet<T>,
    pub op: &'a ForwardOperator<T>,
    maps: Vec<Arc<dyn LinearMap<T>>>,
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new(net: &'a ReconNet<T>, op: &'a ForwardOperator<T>) -> Self {
        let mut tape = Tape::new();
        let params = net.params().bind(&mut tape);
        Self {
            tape,
            params,
            net,
            op,
            maps: op.part_maps(),
        }
    }

    pub fn measurement(&mut self, y: &Measurement<T>) -> Result<Vec<Var>> {
        if y.len() != self.maps.len() {
            return Err(dims_mismatch(self.maps.len(), y.len()));
        }
        Ok(y.parts.iter().map(|p| self.tape.image(p)).collect())
    }

    pub fn reconstruct(&mut self, y: &[Var]) -> Result<Var> {
        self.net.forward(&mut self.tape, &self.params, y)
    }

    /// `A x` recorded part by part.
    pub fn forward_op(&mut self, x: Var) -> Result<Vec<Var>> {
        let maps = self.maps.clone();
        maps.into_iter().map(|m| self.tape.linear(x, m)).collect()
    }

    fn part_count(&self, part: usize, v: Var) -> Result<usize> {
        let s = self.tape.shape(v)?;
        Ok(self.op.measured_count(part, (s[0], s[1], s[2])).max(1))
    }

    /// `sum_i ||a_i - b_i||^2 / m_i` over the selected parts.
    pub fn measurement_sq(&mut self, a: &[Var], b: &[Var], parts: &[usize]) -> Result<Var> {
        let mut terms = Vec::with_capacity(parts.len());
        for &i in parts {
            let m = self.part_count(i, b[i])?;
            let d = self.tape.sub(a[i], b[i])?;
            let q = self.tape.square(d)?;
            let s = self.tape.sum(q)?;
            terms.push(self.tape.scale(s, T::one() / T::from_usize_lossy(m))?);
        }
        self.tape.add_all(&terms)
    }

    /// Mean squared difference of two images.
    pub fn image_mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.tape.sub(a, b)?;
        let q = self.tape.square(d)?;
        self.tape.mean(q)
    }

    pub fn value(&self, v: Var) -> Result<f64> {
        Ok(self.tape.scalar_value(v)?.f64())
    }
}

fn all_parts(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// `sum_i ||A_i x_hat - y_i||^2 / m_i` over all measurement parts.
pub fn mc_loss<T: Scalar>(g: &mut Graph<T>, xhat: Var, y: &[Var]) -> Result<Var> {
    let ax = g.forward_op(xhat)?;
    g.measurement_sq(&ax, y, &all_parts(y.len()))
}

/// MC restricted to chosen parts (e.g. the MS part of pansharpening).
pub fn mc_loss_parts<T: Scalar>(g: &mut Graph<T>, xhat: Var, y: &[Var], parts: &[usize]) -> Result<Var> {
    let ax = g.forward_op(xhat)?;
    g.measurement_sq(&ax, y, parts)
}

/// `||T_g x1 - f(A T_g x1)||^2` per element, with `x1 = f(y)` given.
pub fn ei_loss<T: Scalar>(g: &mut Graph<T>, xhat: Var, transform: Arc<WarpTable<T>>) -> Result<Var> {
    let x2 = g.tape.linear(xhat, transform)?;
    let y2 = g.forward_op(x2)?;
    let x3 = g.reconstruct(&y2)?;
    g.image_mse(x2, x3)
}

/// Samples `g` from the configured group and builds its warp table.
pub fn sample_warp<T: Scalar, R: Rng + ?Sized>(
    cfg: &LossConfig,
    height: usize,
    width: usize,
    rng: &mut R,
) -> Result<Arc<WarpTable<T>>> {
    let spec = GroupSpec {
        bounds: cfg.bounds,
        ..GroupSpec::new(cfg.group, cfg.alpha, height, width)
    };
    let h = sample_transform::<T, R>(&spec, rng);
    Ok(Arc::new(WarpTable::from_homography(&h, height, width)?))
}

/// Rademacher probes restricted to the observed entries.
pub fn rademacher_probe<T: Scalar, R: Rng + ?Sized>(
    op: &ForwardOperator<T>,
    y: &Measurement<T>,
    rng: &mut R,
) -> Result<Measurement<T>> {
    let mut parts = Vec::with_capacity(y.len());
    for (i, p) in y.parts.iter().enumerate() {
        let (c, h, w) = p.dims();
        let b = Image::from_fn(c, h, w, |_, _, _| if rng.random::<bool>() { T::one() } else { -T::one() });
        parts.push(op.project_measurement(i, &b)?);
    }
    Ok(Measurement::new(parts))
}

fn tau_for<T: Scalar>(y: &Measurement<T>, scale: f64) -> f64 {
    let m = y.parts.iter().map(|p| p.max_abs().f64()).fold(0.0, f64::max);
    if m > 0.0 {
        scale * m
    } else {
        scale
    }
}

#[derive(Debug, Clone, Copy)]
enum SureKind {
    Gaussian(f64),
    Poisson(f64),
}

fn sure_impl<T: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    xhat: Var,
    y: &Measurement<T>,
    yv: &[Var],
    kind: SureKind,
    probes: usize,
    tau_scale: f64,
    rng: &mut R,
) -> Result<Var> {
    if probes == 0 {
        return Err(Error::InvalidParameter("SURE needs at least one probe".into()));
    }
    let h = g.forward_op(xhat)?;
    let fit = g.measurement_sq(&h, yv, &all_parts(yv.len()))?;
    let counts: Vec<usize> = (0..yv.len()).map(|i| g.part_count(i, yv[i])).collect::<Result<_>>()?;
    let (coef, offset) = match kind {
        SureKind::Gaussian(sigma) => (2.0 * sigma * sigma, -(yv.len() as f64) * sigma * sigma),
        SureKind::Poisson(gamma) => {
            // -gamma * sum_k y_k / m_i per part
            let off: f64 = y
                .parts
                .iter()
                .zip(&counts)
                .map(|(p, &m)| -gamma * p.data().iter().map(|v| v.f64()).sum::<f64>() / m as f64)
                .sum();
            (2.0 * gamma, off)
        }
    };
    if coef == 0.0 {
        return Ok(fit);
    }
    let tau = tau_for(y, tau_scale);
    let mut div_terms = Vec::new();
    for _ in 0..probes {
        let b = rademacher_probe(g.op, y, rng)?;
        let yp = y.zip_map(&b, |a, p| a + T::c(tau) * p)?;
        let ypv: Vec<Var> = yp.parts.iter().map(|p| g.tape.image(p)).collect();
        let xp = g.reconstruct(&ypv)?;
        let hp = g.forward_op(xp)?;
        for i in 0..yv.len() {
            // weights b (Gaussian) or b * y (Poisson), divided by m_i * tau
            let w = match kind {
                SureKind::Gaussian(_) => b.parts[i].clone(),
                SureKind::Poisson(_) => b.parts[i].zip_map(&y.parts[i], |p, v| p * v)?,
            };
            let s = coef / (tau * counts[i] as f64 * probes as f64);
            let wv = g.tape.image(&w.scale(T::c(s)));
            let d = g.tape.sub(hp[i], h[i])?;
            let prod = g.tape.mul(wv, d)?;
            div_terms.push(g.tape.sum(prod)?);
        }
    }
    let div = g.tape.add_all(&div_terms)?;
    let total = g.tape.add(fit, div)?;
    let off = g.tape.leaf(Tensor::scalar(T::c(offset)));
    g.tape.add(total, off)
}

/// Gaussian SURE of the per-part mean measurement error:
/// `sum_i [ ||h_i - y_i||^2 / m_i - sigma^2 ] + 2 sigma^2 div`,
/// `div = sum_i b_i^T (h_i(y + tau b) - h_i(y)) / (tau m_i)` averaged over probes.
#[allow(clippy::too_many_arguments)]
pub fn sure_gaussian<T: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    xhat: Var,
    y: &Measurement<T>,
    yv: &[Var],
    sigma: f64,
    probes: usize,
    tau_scale: f64,
    rng: &mut R,
) -> Result<Var> {
    sure_impl(g, xhat, y, yv, SureKind::Gaussian(sigma), probes, tau_scale, rng)
}

/// Poisson unbiased risk estimate for `y = gamma * Poisson(z / gamma)`;
/// see the module documentation for the derivation.
#[allow(clippy::too_many_arguments)]
pub fn sure_poisson<T: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    xhat: Var,
    y: &Measurement<T>,
    yv: &[Var],
    gamma: f64,
    probes: usize,
    tau_scale: f64,
    rng: &mut R,
) -> Result<Var> {
    if y.parts.iter().any(|p| p.data().iter().any(|&v| v < T::zero())) {
        return Err(Error::Physics("Poisson SURE requires non-negative measurements".into()));
    }
    sure_impl(g, xhat, y, yv, SureKind::Poisson(gamma), probes, tau_scale, rng)
}

/// SURE for the configured noise model; plain MC when noiseless.
#[allow(clippy::too_many_arguments)]
pub fn sure_loss<T: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    xhat: Var,
    y: &Measurement<T>,
    yv: &[Var],
    noise: &NoiseModel,
    probes: usize,
    tau_scale: f64,
    rng: &mut R,
) -> Result<Var> {
    match *noise {
        NoiseModel::None => mc_loss(g, xhat, yv),
        NoiseModel::Gaussian { sigma } => sure_gaussian(g, xhat, y, yv, sigma, probes, tau_scale, rng),
        NoiseModel::Poisson { gain } => sure_poisson(g, xhat, y, yv, gain, probes, tau_scale, rng),
    }
}

/// `TV(R_pan x_hat - y_pan)` per pixel.
pub fn tv_structural<T: Scalar>(
    tape: &mut Tape<T>,
    pan_of_xhat: Var,
    y_pan: Var,
    flavor: TvFlavor,
) -> Result<Var> {
    let r = tape.sub(pan_of_xhat, y_pan)?;
    let shape = tape.shape(r)?.to_vec();
    let pixels = shape.iter().skip(1).product::<usize>().max(1);
    let d = tape.linear(r, Arc::new(FiniteDiff))?;
    let s = match flavor {
        TvFlavor::Anisotropic => {
            let a = tape.abs(d)?;
            tape.sum(a)?
        }
        TvFlavor::Isotropic => {
            let c = shape[0];
            let mut mags = Vec::with_capacity(c);
            for ch in 0..c {
                let pick = |k: usize| ChannelSlice {
                    start: 2 * ch + k,
                    len: 1,
                    total: 2 * c,
                };
                let dx = tape.linear(d, Arc::new(pick(0)))?;
                let dy = tape.linear(d, Arc::new(pick(1)))?;
                let (qx, qy) = (tape.square(dx)?, tape.square(dy)?);
                let q = tape.add(qx, qy)?;
                let eps = tape.leaf(Tensor::filled(&[1, shape[1], shape[2]], T::c(ISOTROPIC_TV_EPS)));
                let q = tape.add(q, eps)?;
                let m = tape.sqrt(q)?;
                mags.push(tape.sum(m)?);
            }
            tape.add_all(&mags)?
        }
    };
    tape.scale(s, T::one() / T::from_usize_lossy(pixels))
}

/// Plain per-element MSE to ground truth.
pub fn supervised_loss<T: Scalar>(g: &mut Graph<T>, xhat: Var, x: Option<&Image<T>>) -> Result<Var> {
    let x = x.ok_or_else(|| Error::MissingGroundTruth("supervised loss".into()))?;
    let xv = g.tape.image(x);
    g.image_mse(xhat, xv)
}

/// Wald's protocol: reconstruct from the re-degraded pair and compare with
/// the original `y_ms`.
pub fn wald_loss<T: Scalar>(g: &mut Graph<T>, op: &PansharpeningOperator<T>, y: &Measurement<T>) -> Result<Var> {
    let ((ms_r, pan_r), target) = op.wald_pair(&y.parts[0], &y.parts[1])?;
    let inputs = [g.tape.image(&ms_r), g.tape.image(&pan_r)];
    let xr = g.reconstruct(&inputs)?;
    let t = g.tape.image(&target);
    g.image_mse(xr, t)
}

/// Inputs to one evaluation of the configured objective.
pub struct Batch<'b, T: Scalar> {
    pub y: &'b Measurement<T>,
    pub reference: Option<&'b Image<T>>,
    pub noise: &'b NoiseModel,
}

/// The weighted objective and each term's unweighted value.
pub struct Objective {
    pub total: Var,
    pub terms: Vec<(LossTerm, f64)>,
}

/// Builds the configured training loss on `g`.
///
/// For pansharpening `mc` covers the MS part only and `tv` the pan part; a
/// `sure` term covers both parts and stands in for both.
pub fn objective<T: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    cfg: &LossConfig,
    batch: &Batch<'_, T>,
    rng: &mut R,
) -> Result<Objective> {
    let terms = cfg.parsed_terms()?;
    let task = g.net.config().task;
    let yv = g.measurement(batch.y)?;
    let needs_xhat = terms.iter().any(|t| *t != LossTerm::Wald);
    let xhat = if needs_xhat { Some(g.reconstruct(&yv)?) } else { None };
    let mut weighted = Vec::new();
    let mut values = Vec::new();
    for &t in &terms {
        let x1 = xhat.unwrap_or(yv[0]);
        let v = match t {
            LossTerm::Mc => match task {
                Task::Inpainting => mc_loss(g, x1, &yv)?,
                Task::Pansharpening => mc_loss_parts(g, x1, &yv, &[0])?,
            },
            LossTerm::Tv => {
                let ForwardOperator::Pansharpening(op) = g.op else {
                    return Err(Error::InvalidParameter("tv needs a pansharpening operator".into()));
                };
                let srf: Arc<dyn LinearMap<T>> = Arc::new(op.srf.clone());
                let p = g.tape.linear(x1, srf)?;
                tv_structural(&mut g.tape, p, yv[1], cfg.tv)?
            }
            LossTerm::Ei => {
                let s = g.tape.shape(x1)?.to_vec();
                let warp = sample_warp(cfg, s[1], s[2], rng)?;
                ei_loss(g, x1, warp)?
            }
            LossTerm::Sure => sure_loss(g, x1, batch.y, &yv, batch.noise, cfg.probes, cfg.tau_scale, rng)?,
            LossTerm::Supervised => supervised_loss(g, x1, batch.reference)?,
            LossTerm::Wald => {
                let ForwardOperator::Pansharpening(op) = g.op else {
                    return Err(Error::InvalidParameter("wald needs a pansharpening operator".into()));
                };
                let op = op.clone();
                wald_loss(g, &op, batch.y)?
            }
        };
        let value = g.value(v)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss term `{}`", t.name())));
        }
        values.push((t, value));
        weighted.push(g.tape.scale(v, T::c(cfg.weights.get(t)))?);
    }
    let total = g.tape.add_all(&weighted)?;
    Ok(Objective { total, terms: values })
}

/// Unsupervised pansharpening loss: `mc(MS) + tv + ei`, or `sure + ei`
/// under noise, with unit weights.
pub fn pansharpen_unsup_loss<T: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<T>,
    y: &Measurement<T>,
    noise: &NoiseModel,
    group: GroupKind,
    alpha: f64,
    rng: &mut R,
) -> Result<Objective> {
    let terms = if noise.is_noiseless() { "mc+tv+ei" } else { "sure+ei" };
    let cfg = LossConfig {
        group,
        alpha,
        ..LossConfig::new(terms)
    };
    objective(g, &cfg, &Batch { y, reference: None, noise }, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::adjoint_mismatch;
    use crate::models::ReconNetConfig;
    use crate::physics::{random_mask, Srf};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parse_term_lists() {
        assert_eq!(parse_terms("mc+tv+ei").unwrap(), vec![LossTerm::Mc, LossTerm::Tv, LossTerm::Ei]);
        assert_eq!(parse_terms("ei+sure").unwrap(), vec![LossTerm::Ei, LossTerm::Sure]);
        assert!(parse_terms("mc+mc").is_err());
        assert!(parse_terms("mse").is_err());
        assert!(LossConfig::new("ei").validate(Task::Inpainting).is_err());
        assert!(LossConfig::new("mc+tv").validate(Task::Inpainting).is_err());
        assert!(LossConfig::new("mc+tv+ei").validate(Task::Pansharpening).is_ok());
    }

    #[test]
    fn finite_diff_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Image::from_fn(2, 5, 7, |_, _, _| rng.random::<f64>());
        let v = Image::from_fn(4, 5, 7, |_, _, _| rng.random::<f64>());
        assert!(adjoint_mismatch(&FiniteDiff, &x, &v).unwrap() < 1e-12);
    }

    #[test]
    fn tv_hand_computed() {
        // r = R x - y_pan:
        // [0 1 3]
        // [2 2 2]
        // [0 0 5]
        // |dx|: 1+2, 0+0, 0+5 = 8 ; |dy|: 2+1+1, 2+2+3 = 11 ; TV = 19 / 9
        let r = Image::from_vec(1, 3, 3, vec![0.0, 1.0, 3.0, 2.0, 2.0, 2.0, 0.0, 0.0, 5.0]).unwrap();
        let mut tape = Tape::<f64>::new();
        let a = tape.image(&r);
        let z = tape.image(&Image::zeros(1, 3, 3));
        let tv = tv_structural(&mut tape, a, z, TvFlavor::Anisotropic).unwrap();
        assert!((tape.scalar_value(tv).unwrap() - 19.0 / 9.0).abs() < 1e-14);
        let shifted = tape.image(&r.map(|v| v + 0.25));
        let b = tape.image(&r);
        let tv0 = tv_structural(&mut tape, shifted, b, TvFlavor::Isotropic).unwrap();
        assert!(tape.scalar_value(tv0).unwrap() < 1e-3);
    }

    fn inpaint_setup(rng: &mut ChaCha8Rng) -> (ReconNet<f64>, ForwardOperator<f64>) {
        let cfg = ReconNetConfig {
            hidden: 3,
            blocks: 1,
            ..ReconNetConfig::inpainting(1)
        };
        let net = ReconNet::new(cfg, rng).unwrap();
        let op = ForwardOperator::inpainting(random_mask(0.5, 8, 8, rng).unwrap());
        (net, op)
    }

    #[test]
    fn identity_net_has_zero_mc_and_sure_matches_mc_at_zero_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (_, op) = inpaint_setup(&mut rng);
        let net = ReconNet::zeroed(ReconNetConfig {
            hidden: 3,
            blocks: 1,
            ..ReconNetConfig::inpainting(1)
        })
        .unwrap();
        let x = Image::from_fn(1, 8, 8, |_, _, _| rng.random::<f64>());
        let y = op.apply(&x).unwrap();
        let mut g = Graph::new(&net, &op);
        let yv = g.measurement(&y).unwrap();
        let xh = g.reconstruct(&yv).unwrap();
        let mc = mc_loss(&mut g, xh, &yv).unwrap();
        assert_eq!(g.value(mc).unwrap(), 0.0);

        let (net, _) = inpaint_setup(&mut rng);
        let mut g = Graph::new(&net, &op);
        let yv = g.measurement(&y).unwrap();
        let xh = g.reconstruct(&yv).unwrap();
        let mc = mc_loss(&mut g, xh, &yv).unwrap();
        let s = sure_gaussian(&mut g, xh, &y, &yv, 0.0, 2, 1e-3, &mut rng).unwrap();
        assert_eq!(g.value(mc).unwrap(), g.value(s).unwrap());
    }

    #[test]
    fn ei_with_identity_transform_compares_reconstructions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, op) = inpaint_setup(&mut rng);
        let net = ReconNet::zeroed(ReconNetConfig {
            hidden: 2,
            blocks: 1,
            ..ReconNetConfig::inpainting(1)
        })
        .unwrap();
        let x = Image::from_fn(1, 8, 8, |_, _, _| rng.random::<f64>());
        let y = op.apply(&x).unwrap();
        let mut g = Graph::new(&net, &op);
        let yv = g.measurement(&y).unwrap();
        let xh = g.reconstruct(&yv).unwrap();
        let id = Arc::new(WarpTable::from_homography(&crate::projective::Homography::identity(), 8, 8).unwrap());
        let e = ei_loss(&mut g, xh, id).unwrap();
        // the zero net returns its input, which is already masked
        assert_eq!(g.value(e).unwrap(), 0.0);
    }

    #[test]
    fn poisson_sure_handles_zeros_and_rejects_negatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (net, op) = inpaint_setup(&mut rng);
        let y = Measurement::new(vec![Image::zeros(1, 8, 8)]);
        let mut g = Graph::new(&net, &op);
        let yv = g.measurement(&y).unwrap();
        let xh = g.reconstruct(&yv).unwrap();
        let s = sure_poisson(&mut g, xh, &y, &yv, 0.02, 1, 1e-3, &mut rng).unwrap();
        assert!(g.value(s).unwrap().is_finite());
        let neg = Measurement::new(vec![Image::filled(1, 8, 8, -0.1)]);
        assert!(sure_poisson(&mut g, xh, &neg, &yv, 0.02, 1, 1e-3, &mut rng).is_err());
    }

    #[test]
    fn pansharpen_objective_reports_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = ReconNetConfig {
            hidden: 2,
            blocks: 1,
            ..ReconNetConfig::pansharpening(2, 2)
        };
        let net = ReconNet::new(cfg, &mut rng).unwrap();
        let op = ForwardOperator::pansharpening(PansharpeningOperator::new(2, 1.0, Srf::flat(2)).unwrap());
        let x = Image::from_fn(2, 8, 8, |_, _, _| rng.random::<f64>());
        let y = op.apply(&x).unwrap();
        let mut g = Graph::new(&net, &op);
        let obj = pansharpen_unsup_loss(&mut g, &y, &NoiseModel::None, GroupKind::PanTilt, 0.1, &mut rng).unwrap();
        let names: Vec<_> = obj.terms.iter().map(|(t, _)| t.name()).collect();
        assert_eq!(names, ["mc", "tv", "ei"]);
        let sum: f64 = obj.terms.iter().map(|(_, v)| v).sum();
        assert!((g.value(obj.total).unwrap() - sum).abs() < 1e-12);
    }
}
