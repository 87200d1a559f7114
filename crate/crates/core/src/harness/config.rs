//! JSON experiment configurations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bump::ProfileKind;
use crate::error::{Error, Result};
use crate::grid::{MAX_DIM, MAX_LOG_RESOLUTION, MIN_LOG_RESOLUTION};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LemmaDecompose,
    VerifyDomination,
    NormScan,
    StoppingTrace,
    SymbolCheck,
    HybridEval,
    ApplyTm,
}

fn default_resolutions() -> Vec<u32> {
    vec![6]
}
fn default_dim() -> usize {
    2
}
fn default_trials() -> usize {
    10
}
fn default_decay() -> u32 {
    10
}
fn default_terms() -> u32 {
    4
}
fn default_lattice() -> usize {
    5
}
fn default_alpha_max() -> u32 {
    2
}
fn default_samples() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_resolutions")]
    pub resolutions: Vec<u32>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Decay exponent `M` of the dilated-support decomposition.
    #[serde(default = "default_decay")]
    pub decay: u32,
    /// Number of decomposition terms `N`, or `K_max` for the stopping trace.
    #[serde(default = "default_terms")]
    pub terms: u32,
    /// Points per shift parameter.
    #[serde(default = "default_lattice")]
    pub lattice: usize,
    #[serde(default)]
    pub profile: ProfileKind,
    /// `a,b` for the lemma decomposition.
    #[serde(default)]
    pub interval: Option<String>,
    /// Mean-preserving lemma variant; defaults to true for the wavelet profile.
    #[serde(default)]
    pub mean_zero: Option<bool>,
    /// `j1[,j2]` for domination checks and norm scans of paraproducts.
    #[serde(default)]
    pub type_vector: Option<String>,
    /// Hybrid letters, or the operator name for a norm scan.
    #[serde(default)]
    pub pattern: Option<String>,
    #[serde(default)]
    pub symbol: Option<String>,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: u32,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub f: Option<PathBuf>,
    #[serde(default)]
    pub g: Option<PathBuf>,
    #[serde(default)]
    pub collection: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            seed: 0,
            resolutions: default_resolutions(),
            dim: default_dim(),
            p: None,
            q: None,
            r: None,
            trials: default_trials(),
            decay: default_decay(),
            terms: default_terms(),
            lattice: default_lattice(),
            profile: ProfileKind::default(),
            interval: None,
            mean_zero: None,
            type_vector: None,
            pattern: None,
            symbol: None,
            alpha_max: default_alpha_max(),
            samples: default_samples(),
            input: None,
            f: None,
            g: None,
            collection: None,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(Error::InvalidParameter(format!("dim {} outside 1..={MAX_DIM}", self.dim)));
        }
        if self.resolutions.is_empty() {
            return Err(Error::InvalidParameter("at least one resolution is required".into()));
        }
        if let Some(l) = self.resolutions.iter().find(|l| !(MIN_LOG_RESOLUTION..=MAX_LOG_RESOLUTION).contains(*l)) {
            return Err(Error::InvalidGrid(format!(
                "L = {l} outside {MIN_LOG_RESOLUTION}..={MAX_LOG_RESOLUTION}"
            )));
        }
        if self.lattice == 0 {
            return Err(Error::InvalidParameter("lattice size must be >= 1".into()));
        }
        for e in [self.p, self.q, self.r].into_iter().flatten() {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidExponent(e));
            }
        }
        if let (Some(p), Some(q), Some(r)) = (self.p, self.q, self.r) {
            if (1.0 / p + 1.0 / q - 1.0 / r).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("1/{p} + 1/{q} != 1/{r}")));
            }
        }
        Ok(())
    }

    pub fn resolution(&self) -> u32 {
        self.resolutions[0]
    }
}
