//! Residual CNN reconstructors `f_theta` for inpainting and pansharpening.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{fan_in_uniform, Padding, Params, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linear::LinearMap;
use crate::physics::{BlurDownsample, Kernel2D, Measurement};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Inpainting,
    Pansharpening,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Inpainting => "inpainting",
            Task::Pansharpening => "pansharpening",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconNetConfig {
    pub task: Task,
    /// Image channels `C` of the reconstruction.
    pub channels: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_kernel")]
    pub kernel_size: usize,
    #[serde(default = "default_highpass")]
    pub highpass_size: usize,
    /// Resolution ratio `j` between pan and MS (pansharpening only).
    #[serde(default = "default_factor")]
    pub factor: usize,
    #[serde(default)]
    pub padding: Padding,
}

fn default_hidden() -> usize {
    16
}
fn default_blocks() -> usize {
    4
}
fn default_kernel() -> usize {
    3
}
fn default_highpass() -> usize {
    11
}
fn default_factor() -> usize {
    4
}

impl ReconNetConfig {
    pub fn inpainting(channels: usize) -> Self {
        Self {
            task: Task::Inpainting,
            channels,
            hidden: default_hidden(),
            blocks: default_blocks(),
            kernel_size: default_kernel(),
            highpass_size: default_highpass(),
            factor: 1,
            padding: Padding::Reflect,
        }
    }

    pub fn pansharpening(channels: usize, factor: usize) -> Self {
        Self {
            task: Task::Pansharpening,
            factor,
            ..Self::inpainting(channels)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("model: {m}")));
        if self.channels == 0 || self.hidden == 0 {
            return bad("channels and hidden must be >= 1");
        }
        if self.blocks == 0 {
            return bad("blocks must be >= 1");
        }
        if self.kernel_size.is_multiple_of(2) || self.highpass_size.is_multiple_of(2) {
            return bad("kernel sizes must be odd");
        }
        if self.task == Task::Pansharpening && self.factor == 0 {
            return bad("factor must be >= 1");
        }
        Ok(())
    }

    fn in_channels(&self) -> usize {
        match self.task {
            Task::Inpainting => self.channels,
            Task::Pansharpening => self.channels + 1,
        }
    }
}

/// `identity - boxblur(size)` with reflection padding.
#[derive(Debug, Clone)]
pub struct HighPass<T> {
    blur: BlurDownsample<T>,
}

impl<T: Scalar> HighPass<T> {
    pub fn new(size: usize) -> Result<Self> {
        let n = size * size;
        let kernel = Kernel2D::new(size, vec![T::one() / T::from_usize_lossy(n); n])?;
        Ok(Self {
            blur: BlurDownsample::new(kernel, 1)?,
        })
    }
}

impl<T: Scalar> LinearMap<T> for HighPass<T> {
    fn name(&self) -> &'static str {
        "highpass"
    }
    fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        x.sub(&self.blur.apply(x)?)
    }
    fn adjoint(&self, y: &Image<T>) -> Result<Image<T>> {
        y.sub(&self.blur.adjoint(y)?)
    }
}

/// Residual CNN: `conv -> relu -> blocks x [h + conv(relu(conv h))] -> conv`,
/// added onto the task's linear baseline.
#[derive(Debug, Clone)]
pub struct ReconNet<T: Scalar> {
    config: ReconNetConfig,
    params: Params<T>,
    highpass: Option<Arc<HighPass<T>>>,
}

impl<T: Scalar> ReconNet<T> {
    /// Fan-in uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(config: ReconNetConfig, rng: &mut R) -> Result<Self> {
        Self::build(config, |shape| fan_in_uniform(shape, rng))
    }

    /// A network whose every weight is zero: reconstructs the linear baseline.
    pub fn zeroed(config: ReconNetConfig) -> Result<Self> {
        Self::build(config, Tensor::zeros)
    }

    fn build(config: ReconNetConfig, mut init: impl FnMut(&[usize]) -> Tensor<T>) -> Result<Self> {
        config.validate()?;
        let (k, hid) = (config.kernel_size, config.hidden);
        let mut params = Params::new();
        let mut conv = |name: &str, co: usize, ci: usize| {
            params.push(format!("{name}.w"), init(&[co, ci, k, k]));
            params.push(format!("{name}.b"), Tensor::zeros(&[co]));
        };
        conv("head", hid, config.in_channels());
        for b in 0..config.blocks {
            conv(&format!("block{b}.conv1"), hid, hid);
            conv(&format!("block{b}.conv2"), hid, hid);
        }
        conv("tail", config.channels, hid);
        Self::with_params(config, params)
    }

    pub fn with_params(config: ReconNetConfig, params: Params<T>) -> Result<Self> {
        config.validate()?;
        let highpass = match config.task {
            Task::Pansharpening => Some(Arc::new(HighPass::new(config.highpass_size)?)),
            Task::Inpainting => None,
        };
        let expected = 2 * (2 + 2 * config.blocks);
        if params.len() != expected {
            return Err(Error::Checkpoint(format!(
                "model expects {expected} parameter tensors, got {}",
                params.len()
            )));
        }
        let net = Self {
            config,
            params,
            highpass,
        };
        Ok(net)
    }

    /// Replaces the parameters after checking names and shapes.
    pub fn load_params(&mut self, params: Params<T>) -> Result<()> {
        params.check_layout(&self.params)?;
        self.params = params;
        Ok(())
    }

    pub fn config(&self) -> &ReconNetConfig {
        &self.config
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    fn cnn(&self, tape: &mut Tape<T>, p: &[Var], input: Var) -> Result<Var> {
        let pad = self.config.padding;
        let mut h = tape.conv2d(input, p[0], Some(p[1]), pad)?;
        h = tape.relu(h)?;
        for b in 0..self.config.blocks {
            let i = 2 + 4 * b;
            let t = tape.conv2d(h, p[i], Some(p[i + 1]), pad)?;
            let t = tape.relu(t)?;
            let t = tape.conv2d(t, p[i + 2], Some(p[i + 3]), pad)?;
            h = tape.add(h, t)?;
        }
        let n = p.len();
        tape.conv2d(h, p[n - 2], Some(p[n - 1]), pad)
    }

    /// Records `f_theta(y)` on `tape`. `p` are the bound parameters from
    /// [`Params::bind`]; `parts` are the measurement rasters (`[y]` or
    /// `[y_ms, y_pan]`).
    pub fn forward(&self, tape: &mut Tape<T>, p: &[Var], parts: &[Var]) -> Result<Var> {
        if p.len() != self.params.len() {
            return Err(Error::Shape {
                op: "recon",
                detail: format!("{} parameter handles for {} parameters", p.len(), self.params.len()),
            });
        }
        match (self.config.task, parts) {
            (Task::Inpainting, &[y]) => {
                let r = self.cnn(tape, p, y)?;
                tape.add(y, r)
            }
            (Task::Pansharpening, &[ms, pan]) => {
                let (ms_shape, pan_shape) = (tape.shape(ms)?.to_vec(), tape.shape(pan)?.to_vec());
                let j = self.config.factor;
                if ms_shape.len() != 3
                    || pan_shape.len() != 3
                    || pan_shape[0] != 1
                    || ms_shape[0] != self.config.channels
                    || pan_shape[1] != j * ms_shape[1]
                    || pan_shape[2] != j * ms_shape[2]
                {
                    return Err(Error::Shape {
                        op: "recon_pansharpen",
                        detail: format!("ms {ms_shape:?}, pan {pan_shape:?}, factor {j}"),
                    });
                }
                let up = tape.upsample(ms, j)?;
                let hp = self.highpass.clone().expect("pansharpening net has a high-pass");
                let detail = tape.linear(pan, hp)?;
                let input = tape.concat_channels(&[up, detail])?;
                let r = self.cnn(tape, p, input)?;
                tape.add(up, r)
            }
            (task, _) => Err(Error::Shape {
                op: "recon",
                detail: format!("{task} expects {} measurement parts, got {}", task_parts(task), parts.len()),
            }),
        }
    }

    /// Evaluates `f_theta(y)` without keeping a tape.
    pub fn reconstruct(&self, y: &Measurement<T>) -> Result<Image<T>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let parts: Vec<Var> = y.parts.iter().map(|img| tape.image(img)).collect();
        let out = self.forward(&mut tape, &p, &parts)?;
        tape.image_value(out)
    }
}

fn task_parts(task: Task) -> usize {
    match task {
        Task::Inpainting => 1,
        Task::Pansharpening => 2,
    }
}

/// The linear baseline of each task: `y` itself or the upsampled `y_ms`.
pub fn linear_baseline<T: Scalar>(task: Task, factor: usize, y: &Measurement<T>) -> Result<Image<T>> {
    match task {
        Task::Inpainting => Ok(y.parts[0].clone()),
        Task::Pansharpening => {
            let ms = &y.parts[0];
            crate::warp::WarpTable::upsample(ms.height(), ms.width(), factor).apply(ms)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_is_linear_baseline() {
        let y = Measurement::new(vec![Image::from_fn(3, 8, 8, |c, i, j| (c + i * j) as f64 * 0.01)]);
        let net = ReconNet::<f64>::zeroed(ReconNetConfig::inpainting(3)).unwrap();
        assert_eq!(net.reconstruct(&y).unwrap(), y.parts[0]);

        let ms = Image::from_fn(4, 4, 4, |c, i, j| (c * 3 + i + 2 * j) as f64 * 0.02);
        let pan = Image::from_fn(1, 16, 16, |_, i, j| ((i * j) % 5) as f64 * 0.1);
        let y = Measurement::new(vec![ms, pan]);
        let net = ReconNet::<f64>::zeroed(ReconNetConfig::pansharpening(4, 4)).unwrap();
        let out = net.reconstruct(&y).unwrap();
        assert_eq!(out.dims(), (4, 16, 16));
        assert_eq!(out, linear_baseline(Task::Pansharpening, 4, &y).unwrap());
    }

    #[test]
    fn output_shapes_follow_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (c, h, w, hidden) in [(1, 5, 7, 2), (3, 8, 6, 4)] {
            let cfg = ReconNetConfig {
                hidden,
                blocks: 1,
                ..ReconNetConfig::inpainting(c)
            };
            let net = ReconNet::<f64>::new(cfg, &mut rng).unwrap();
            let y = Measurement::new(vec![Image::filled(c, h, w, 0.3)]);
            assert_eq!(net.reconstruct(&y).unwrap().dims(), (c, h, w));
        }
    }

    #[test]
    fn highpass_kills_constants() {
        let hp = HighPass::<f64>::new(5).unwrap();
        let out = hp.apply(&Image::filled(1, 12, 12, 0.8)).unwrap();
        assert!(out.max_abs() < 1e-14);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let net = ReconNet::<f64>::zeroed(ReconNetConfig::pansharpening(4, 4)).unwrap();
        let y = Measurement::new(vec![Image::zeros(4, 4, 4), Image::zeros(1, 12, 16)]);
        assert!(net.reconstruct(&y).is_err());
        let y = Measurement::new(vec![Image::zeros(4, 16, 16)]);
        assert!(net.reconstruct(&y).is_err());
    }
}
