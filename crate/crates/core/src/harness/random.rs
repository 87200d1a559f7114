//! Seeded random test inputs.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::rng::SeedStream;
use crate::bump::{sample_axis_bump, BumpProfile, ProfileKind};
use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, GridFunction, GridShape};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum InputModel {
    /// Real part of random Fourier coefficients `amplitude (1 + |xi|^2)^{-decay/2} (z1 + i z2)/sqrt 2`.
    /// `decay` defaults to `d/2 + 1`.
    GaussianField { amplitude: f64, decay: Option<f64> },
    /// Normal coefficients against normalized mean-zero tensor bumps on random dyadic rectangles.
    RandomWaveletSum { terms: usize },
    /// Indicator of a union of random dyadic rectangles with scales in `scales`.
    IndicatorUnion { count: usize, scales: (i32, i32) },
}

impl InputModel {
    pub fn gaussian_field() -> Self {
        InputModel::GaussianField { amplitude: 1.0, decay: None }
    }

    pub fn random_wavelet_sum() -> Self {
        InputModel::RandomWaveletSum { terms: 16 }
    }

    pub fn indicator_union() -> Self {
        InputModel::IndicatorUnion { count: 4, scales: (-3, -1) }
    }

    /// The three models in the order used by [`mixed_model`].
    pub fn defaults() -> [InputModel; 3] {
        [Self::gaussian_field(), Self::random_wavelet_sum(), Self::indicator_union()]
    }

    pub fn name(&self) -> &'static str {
        match self {
            InputModel::GaussianField { .. } => "gaussian_field",
            InputModel::RandomWaveletSum { .. } => "random_wavelet_sum",
            InputModel::IndicatorUnion { .. } => "indicator_union",
        }
    }
}

impl fmt::Display for InputModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "gaussian_field" => Ok(Self::gaussian_field()),
            "random_wavelet_sum" => Ok(Self::random_wavelet_sum()),
            "indicator_union" => Ok(Self::indicator_union()),
            other => Err(Error::Parse(format!("unknown input model `{other}`"))),
        }
    }
}

/// Model for trial `trial`: the defaults in rotation.
pub fn mixed_model(trial: u64) -> InputModel {
    InputModel::defaults()[(trial % 3) as usize]
}

/// Deterministic in `seed`; uses stream 0.
pub fn random_function(seed: u64, dim: usize, log_resolution: u32, model: &InputModel) -> Result<GridFunction> {
    random_function_from(&mut SeedStream::new(seed), dim, log_resolution, model)
}

fn random_interval(rng: &mut SeedStream, scales: (i32, i32)) -> DyadicInterval {
    let span = (scales.1 - scales.0 + 1) as u64;
    let scale = scales.0 + rng.below(span) as i32;
    let position = rng.below(1u64 << (-scale)) as i64;
    DyadicInterval { scale, position }
}

pub fn random_function_from(
    rng: &mut SeedStream,
    dim: usize,
    log_resolution: u32,
    model: &InputModel,
) -> Result<GridFunction> {
    let shape = GridShape::new(dim, log_resolution)?;
    match *model {
        InputModel::GaussianField { amplitude, decay } => {
            let decay = decay.unwrap_or(dim as f64 / 2.0 + 1.0);
            let mut spec = FrequencyGrid::zeros(dim, log_resolution)?;
            let mut freq = vec![0i64; dim];
            for i in 0..shape.len() {
                spec.frequency_of(i, &mut freq);
                let r2: f64 = freq.iter().map(|&k| (k * k) as f64).sum();
                let a = amplitude * (1.0 + r2).powf(-decay / 2.0) / std::f64::consts::SQRT_2;
                let (x, y) = (rng.normal(), rng.normal());
                spec.coefficients_mut()[i] = Complex64::new(a * x, a * y);
            }
            let f = spec.inverse_transform();
            Ok(f.map(|z| Complex64::new(z.re, 0.0)))
        }
        InputModel::RandomWaveletSum { terms } => {
            let finest = -(log_resolution as i32 - 3).max(0);
            let profile = BumpProfile::of_kind(ProfileKind::MeanZeroWavelet);
            let mut out = GridFunction::zeros(dim, log_resolution)?;
            for _ in 0..terms {
                let c = rng.normal();
                let factors = (0..dim)
                    .map(|_| {
                        let i = random_interval(rng, (finest, 0));
                        sample_axis_bump(i.realize(), &profile, true, true, log_resolution)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let term = GridFunction::from_fn(dim, log_resolution, |x| {
                    let n = shape.side() as f64;
                    let v: f64 = x.iter().zip(&factors).map(|(xa, b)| b[(xa * n).round() as usize]).product();
                    Complex64::new(c * v, 0.0)
                })?;
                out = out.add(&term)?;
            }
            Ok(out)
        }
        InputModel::IndicatorUnion { count, scales } => {
            let l = log_resolution as i32;
            if scales.0 > scales.1 || scales.1 > 0 || scales.0 < -l {
                return Err(Error::InvalidParameter(format!("scales {scales:?} not within [-{l}, 0]")));
            }
            let mut values = vec![0.0; shape.len()];
            for _ in 0..count {
                let axes: Vec<DyadicInterval> = (0..dim).map(|_| random_interval(rng, scales)).collect();
                let rect = crate::dyadic::DyadicRectangle::new(axes)?;
                for i in rect.cells(log_resolution) {
                    values[i] = 1.0;
                }
            }
            GridFunction::from_real(dim, log_resolution, &values)
        }
    }
}
