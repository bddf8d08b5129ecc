use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Measurement noise `eta`.
///
/// Poisson noise is scaled: `y = gain * Poisson(z / gain)`, so `E[y] = z`
/// and `Var[y] = gain * z`; `gain = 0` is the noiseless limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    #[default]
    None,
    Gaussian {
        sigma: f64,
    },
    Poisson {
        gain: f64,
    },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::Gaussian { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            NoiseModel::Poisson { gain } if gain >= 0.0 && gain.is_finite() => Ok(()),
            other => Err(Error::InvalidParameter(format!("invalid noise model {other:?}"))),
        }
    }

    pub fn is_noiseless(&self) -> bool {
        match *self {
            NoiseModel::None => true,
            NoiseModel::Gaussian { sigma } => sigma == 0.0,
            NoiseModel::Poisson { gain } => gain == 0.0,
        }
    }
}

pub fn apply_noise<T: Scalar, R: Rng + ?Sized>(
    model: &NoiseModel,
    z: &Image<T>,
    rng: &mut R,
) -> Result<Image<T>> {
    model.validate()?;
    match *model {
        NoiseModel::None => Ok(z.clone()),
        NoiseModel::Gaussian { sigma } => {
            if sigma == 0.0 {
                return Ok(z.clone());
            }
            Ok(z.map(|v| {
                let e: f64 = StandardNormal.sample(rng);
                v + T::c(sigma * e)
            }))
        }
        NoiseModel::Poisson { gain } => {
            if let Some(bad) = z.data().iter().find(|v| **v < T::zero() || !v.is_finite()) {
                return Err(Error::Physics(format!(
                    "Poisson noise needs non-negative input, found {bad}"
                )));
            }
            if gain == 0.0 {
                return Ok(z.clone());
            }
            let mut out = z.clone();
            for v in out.data_mut() {
                let lambda = v.f64() / gain;
                let count = if lambda > 0.0 {
                    Poisson::new(lambda)
                        .map_err(|e| Error::Physics(e.to_string()))?
                        .sample(rng)
                } else {
                    0.0
                };
                *v = T::c(gain * count);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_conventions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = Image::from_fn(1, 4, 4, |_, y, x| (y * 4 + x) as f64 / 16.0);
        for m in [
            NoiseModel::None,
            NoiseModel::Gaussian { sigma: 0.0 },
            NoiseModel::Poisson { gain: 0.0 },
        ] {
            assert_eq!(apply_noise(&m, &z, &mut rng).unwrap(), z);
        }
    }

    #[test]
    fn poisson_rejects_negative_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = Image::filled(1, 2, 2, -0.1f64);
        assert!(matches!(
            apply_noise(&NoiseModel::Poisson { gain: 0.1 }, &z, &mut rng),
            Err(Error::Physics(_))
        ));
        assert!(NoiseModel::Gaussian { sigma: -1.0 }.validate().is_err());
    }

    #[test]
    fn poisson_handles_zero_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = Image::zeros(1, 3, 3);
        let y = apply_noise::<f64, _>(&NoiseModel::Poisson { gain: 0.02 }, &z, &mut rng).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = Image::filled(1, 100, 100, 0.25f64);
        let y = apply_noise(&NoiseModel::Gaussian { sigma: 0.1 }, &z, &mut rng).unwrap();
        let d = y.sub(&z).unwrap();
        let mean = d.mean();
        let var = d.norm_sq() / d.len() as f64 - mean * mean;
        assert!(mean.abs() < 3.0 * 0.1 / 100.0);
        assert!((var - 0.01).abs() < 0.01 * 0.05);
    }
}
