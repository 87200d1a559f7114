//! Empirical operator-norm estimates: max over random inputs of `||T(f..)||_r / prod ||f_j||_{p_j}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::random::{mixed_model, random_function_from, InputModel};
use super::rng::{stream_id, SeedStream};
use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// A pure, deterministic operator of one or two grid functions.
pub trait NormOperator: Sync {
    fn id(&self) -> String;
    fn arity(&self) -> usize;
    fn apply(&self, inputs: &[GridFunction]) -> Result<GridFunction>;
}

/// Wraps a closure as a [`NormOperator`].
pub struct FnOperator<F> {
    id: String,
    arity: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&[GridFunction]) -> Result<GridFunction> + Sync,
{
    pub fn new(id: impl Into<String>, arity: usize, f: F) -> Self {
        Self { id: id.into(), arity, f }
    }
}

impl<F> NormOperator for FnOperator<F>
where
    F: Fn(&[GridFunction]) -> Result<GridFunction> + Sync,
{
    fn id(&self) -> String {
        self.id.clone()
    }

    fn arity(&self) -> usize {
        self.arity
    }

    fn apply(&self, inputs: &[GridFunction]) -> Result<GridFunction> {
        (self.f)(inputs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRequest {
    pub input_exponents: Vec<f64>,
    pub output_exponent: f64,
    pub trials: usize,
    pub resolutions: Vec<u32>,
    pub dim: usize,
    pub seed: u64,
    /// Fixed model for every input; `None` rotates through the defaults by trial.
    pub model: Option<InputModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionEstimate {
    pub log_resolution: u32,
    pub max_ratio: f64,
    /// Trial index of the maximizer; with the seed it identifies the inputs.
    pub argmax_trial: Option<u64>,
    /// Per-trial ratios, `None` where an input was zero.
    pub ratios: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub operator: String,
    pub seed: u64,
    pub trials: usize,
    pub per_resolution: Vec<ResolutionEstimate>,
}

impl NormEstimate {
    pub fn at(&self, log_resolution: u32) -> Option<&ResolutionEstimate> {
        self.per_resolution.iter().find(|r| r.log_resolution == log_resolution)
    }

    /// `max_ratio` at the last resolution over the first.
    pub fn growth(&self) -> f64 {
        match (self.per_resolution.first(), self.per_resolution.last()) {
            (Some(a), Some(b)) if a.max_ratio > 0.0 => b.max_ratio / a.max_ratio,
            _ => 1.0,
        }
    }
}

/// The normalized inputs of trial `trial` at resolution `L`, or `None` if one of them is zero.
pub fn trial_inputs(req: &NormRequest, log_resolution: u32, trial: u64) -> Result<Option<Vec<GridFunction>>> {
    let model = req.model.unwrap_or_else(|| mixed_model(trial));
    let mut out = Vec::with_capacity(req.input_exponents.len());
    for (j, &p) in req.input_exponents.iter().enumerate() {
        let mut rng = SeedStream::with_stream(req.seed, stream_id(log_resolution, trial, j as u32));
        let f = random_function_from(&mut rng, req.dim, log_resolution, &model)?;
        match f.normalized(p)? {
            Some(f) => out.push(f),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

pub fn estimate_norm(op: &dyn NormOperator, req: &NormRequest) -> Result<NormEstimate> {
    if op.arity() != req.input_exponents.len() {
        return Err(Error::InvalidParameter(format!(
            "operator {} takes {} inputs, {} exponents given",
            op.id(),
            op.arity(),
            req.input_exponents.len()
        )));
    }
    if req.trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    let mut per_resolution = Vec::with_capacity(req.resolutions.len());
    for &l in &req.resolutions {
        let ratios: Vec<Option<f64>> = (0..req.trials as u64)
            .into_par_iter()
            .map(|t| {
                let Some(inputs) = trial_inputs(req, l, t)? else {
                    return Ok(None);
                };
                Ok(Some(op.apply(&inputs)?.lp_norm(req.output_exponent)?))
            })
            .collect::<Result<_>>()?;
        let mut max_ratio = 0.0;
        let mut argmax_trial = None;
        for (t, r) in ratios.iter().enumerate() {
            if let Some(r) = *r {
                if argmax_trial.is_none() || r > max_ratio {
                    max_ratio = r;
                    argmax_trial = Some(t as u64);
                }
            }
        }
        per_resolution.push(ResolutionEstimate { log_resolution: l, max_ratio, argmax_trial, ratios });
    }
    Ok(NormEstimate { operator: op.id(), seed: req.seed, trials: req.trials, per_resolution })
}
