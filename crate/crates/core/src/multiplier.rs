//! Bilinear Fourier multipliers `T_m(f, g)(x) = sum m(xi_1, xi_2) f^(xi_1) g^(xi_2) e^{2 pi i x (xi_1 + xi_2)}`
//! on the frequency grid, and a finite-difference check of the per-axis Marcinkiewicz bounds
//! `|d^{alpha_1}_{xi-bar_1} ... d^{alpha_d}_{xi-bar_d} m| <= C prod |xi-bar_i|^{-|alpha_i|}`.
//!
//! A frequency point is `(xi_1, xi_2)` with `xi_1, xi_2` in `R^d`, laid out as
//! `[xi_1[0], .., xi_1[d-1], xi_2[0], .., xi_2[d-1]]`. The group `xi-bar_i = (xi_1[i], xi_2[i])`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, GridFunction, MAX_DIM};
use crate::harness::rng::SeedStream;

pub const ARITY: usize = 2;
pub const MAX_ALPHA: u32 = 3;
pub const DEFAULT_ALPHA_MAX: u32 = 2;

/// Degree-0 homogeneous factor of one group `(a, b) = xi-bar_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisFactor {
    One,
    /// `a / |(a, b)|`
    Riesz,
    /// `(a^2 - b^2) / |(a, b)|^2`
    Mikhlin,
}

impl AxisFactor {
    pub fn eval(self, a: f64, b: f64) -> f64 {
        let r2 = a * a + b * b;
        match self {
            AxisFactor::One => 1.0,
            _ if r2 == 0.0 => 0.0,
            AxisFactor::Riesz => a / r2.sqrt(),
            AxisFactor::Mikhlin => (a * a - b * b) / r2,
        }
    }

    pub fn is_singular(self) -> bool {
        self != AxisFactor::One
    }
}

type Evaluator = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

#[derive(Clone)]
pub enum SymbolKind {
    Constant(Complex64),
    Tensor(Vec<AxisFactor>),
    Custom { evaluator: Evaluator, singular_axes: Vec<usize> },
}

impl fmt::Debug for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolKind::Constant(c) => write!(f, "Constant({c})"),
            SymbolKind::Tensor(t) => write!(f, "Tensor({t:?})"),
            SymbolKind::Custom { singular_axes, .. } => write!(f, "Custom(singular {singular_axes:?})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Symbol {
    dim: usize,
    name: String,
    kind: SymbolKind,
}

/// Names accepted by [`Symbol::named`].
pub const SYMBOL_NAMES: [&str; 6] = ["constant", "riesz", "mikhlin", "double-riesz", "double-mikhlin", "triple-riesz"];

impl Symbol {
    fn check_dim(dim: usize) -> Result<()> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidParameter(format!("symbol dimension {dim} outside 1..={MAX_DIM}")));
        }
        Ok(())
    }

    pub fn constant(dim: usize, value: Complex64) -> Result<Self> {
        Self::check_dim(dim)?;
        Ok(Self { dim, name: "constant".into(), kind: SymbolKind::Constant(value) })
    }

    pub fn tensor(factors: Vec<AxisFactor>) -> Result<Self> {
        Self::check_dim(factors.len())?;
        let name = factors.iter().map(|f| format!("{f:?}").to_lowercase()).collect::<Vec<_>>().join("x");
        Ok(Self { dim: factors.len(), name, kind: SymbolKind::Tensor(factors) })
    }

    /// An arbitrary symbol; `singular_axes` lists the groups `i` where `xi-bar_i = 0` is singular.
    pub fn custom(
        dim: usize,
        name: &str,
        singular_axes: Vec<usize>,
        evaluator: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::check_dim(dim)?;
        if let Some(a) = singular_axes.iter().find(|&&a| a >= dim) {
            return Err(Error::InvalidParameter(format!("singular axis {a} outside 0..{dim}")));
        }
        Ok(Self { dim, name: name.into(), kind: SymbolKind::Custom { evaluator: Arc::new(evaluator), singular_axes } })
    }

    /// Built-in symbols; `riesz` and `mikhlin` use the same factor on every axis.
    pub fn named(name: &str, dim: usize) -> Result<Self> {
        let fixed = |want: usize, f: AxisFactor| {
            if dim != want {
                return Err(Error::DimensionMismatch { expected: want, found: dim });
            }
            Self::tensor(vec![f; want])
        };
        let mut s = match name {
            "constant" => Self::constant(dim, Complex64::new(1.0, 0.0)),
            "riesz" => Self::check_dim(dim).and_then(|_| Self::tensor(vec![AxisFactor::Riesz; dim])),
            "mikhlin" => Self::check_dim(dim).and_then(|_| Self::tensor(vec![AxisFactor::Mikhlin; dim])),
            "double-riesz" => fixed(2, AxisFactor::Riesz),
            "double-mikhlin" => fixed(2, AxisFactor::Mikhlin),
            "triple-riesz" => fixed(3, AxisFactor::Riesz),
            other => Err(Error::Parse(format!("unknown symbol `{other}`; expected one of {SYMBOL_NAMES:?}"))),
        }?;
        s.name = name.to_string();
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arity(&self) -> usize {
        ARITY
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &SymbolKind {
        &self.kind
    }

    pub fn singular_axes(&self) -> Vec<usize> {
        match &self.kind {
            SymbolKind::Constant(_) => Vec::new(),
            SymbolKind::Tensor(t) => (0..t.len()).filter(|&i| t[i].is_singular()).collect(),
            SymbolKind::Custom { singular_axes, .. } => singular_axes.clone(),
        }
    }

    /// `m(xi)` for `xi` of length `2 d`.
    pub fn evaluate(&self, xi: &[f64]) -> Complex64 {
        debug_assert_eq!(xi.len(), ARITY * self.dim);
        match &self.kind {
            SymbolKind::Constant(c) => *c,
            SymbolKind::Tensor(t) => {
                let d = self.dim;
                Complex64::new(t.iter().enumerate().map(|(i, f)| f.eval(xi[i], xi[d + i])).product(), 0.0)
            }
            SymbolKind::Custom { evaluator, .. } => evaluator(xi),
        }
    }
}

/// `(alpha_i)` with `alpha_i = (order in xi_1[i], order in xi_2[i])`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<[u32; 2]>);

impl MultiIndex {
    pub fn group_order(&self, i: usize) -> u32 {
        self.0[i][0] + self.0[i][1]
    }

    pub fn order(&self) -> u32 {
        (0..self.0.len()).map(|i| self.group_order(i)).sum()
    }

    /// All multi-indices with `|alpha_i| <= alpha_max` in each of `dim` groups.
    pub fn enumerate(dim: usize, alpha_max: u32) -> Vec<MultiIndex> {
        let per_group: Vec<[u32; 2]> =
            (0..=alpha_max).flat_map(|t| (0..=t).map(move |a| [a, t - a])).collect();
        let mut out = vec![Vec::new()];
        for _ in 0..dim {
            out = out
                .into_iter()
                .flat_map(|prefix: Vec<[u32; 2]>| {
                    per_group.iter().map(move |g| {
                        let mut v = prefix.clone();
                        v.push(*g);
                        v
                    })
                })
                .collect();
        }
        let mut out: Vec<MultiIndex> = out.into_iter().map(MultiIndex).collect();
        out.sort_by_key(|m| (m.order(), m.0.clone()));
        out
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.0 {
            write!(f, "[{} {}]", g[0], g[1])?;
        }
        Ok(())
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let groups = s
            .trim()
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| Error::Parse(format!("multi-index `{s}`")))?;
        groups
            .split("][")
            .map(|g| {
                let parts: Vec<u32> = g
                    .split_whitespace()
                    .map(|p| p.parse().map_err(|e| Error::Parse(format!("multi-index entry `{p}`: {e}"))))
                    .collect::<Result<_>>()?;
                match parts[..] {
                    [a, b] => Ok([a, b]),
                    _ => Err(Error::Parse(format!("group `[{g}]` needs two entries"))),
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(MultiIndex)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEntry {
    pub multi_index: MultiIndex,
    /// `max |d^alpha m| prod |xi-bar_i|^{|alpha_i|}` over the samples.
    pub worst: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarcinkiewiczReport {
    pub symbol: String,
    pub alpha_max: u32,
    pub samples: usize,
    pub entries: Vec<ConstantEntry>,
}

impl MarcinkiewiczReport {
    pub fn max_constant(&self) -> f64 {
        self.entries.iter().map(|e| e.worst).fold(0.0, f64::max)
    }

    pub fn constant(&self, alpha: &MultiIndex) -> Option<f64> {
        self.entries.iter().find(|e| &e.multi_index == alpha).map(|e| e.worst)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["multi_index", "worst_constant"])?;
        for e in &self.entries {
            w.write_record([e.multi_index.to_string(), format!("{:.12e}", e.worst)])?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Finite-difference step for a group at radius `r`.
pub fn fd_step(r: f64) -> f64 {
    (1e-3f64).min(r / 100.0)
}

/// Log-uniform radius range for sampled groups, as powers of ten.
pub const SAMPLE_DECADES: (f64, f64) = (-3.0, -1.0);

/// Sample points: each group at radius `10^U(SAMPLE_DECADES)` and a uniform angle.
pub fn sample_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SeedStream::new(seed);
    (0..count)
        .map(|_| {
            let mut xi = vec![0.0; ARITY * dim];
            for i in 0..dim {
                let r = 10f64.powf(rng.uniform_in(SAMPLE_DECADES.0, SAMPLE_DECADES.1));
                let a = std::f64::consts::TAU * rng.uniform();
                xi[i] = r * a.cos();
                xi[dim + i] = r * a.sin();
            }
            xi
        })
        .collect()
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Centered difference of order `alpha` at `xi`, steps `h[i]` per group.
fn finite_difference(m: &Symbol, xi: &[f64], alpha: &MultiIndex, h: &[f64]) -> Complex64 {
    let d = m.dim;
    // (coordinate, order, step)
    let axes: Vec<(usize, u32, f64)> = (0..d)
        .flat_map(|i| [(i, alpha.0[i][0], h[i]), (d + i, alpha.0[i][1], h[i])])
        .filter(|a| a.1 > 0)
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    let mut digits = vec![0u32; axes.len()];
    let mut point = xi.to_vec();
    loop {
        let mut weight = 1.0;
        for (slot, &(c, o, step)) in axes.iter().enumerate() {
            let j = digits[slot];
            point[c] = xi[c] + (o as f64 / 2.0 - j as f64) * step;
            weight *= if j.is_multiple_of(2) { 1.0 } else { -1.0 } * binomial(o, j);
        }
        total += m.evaluate(&point) * weight;
        let mut slot = 0;
        loop {
            if slot == axes.len() {
                let scale: f64 = axes.iter().map(|&(_, o, step)| step.powi(o as i32)).product();
                return total / scale;
            }
            digits[slot] += 1;
            if digits[slot] <= axes[slot].1 {
                break;
            }
            digits[slot] = 0;
            slot += 1;
        }
    }
}

/// Worst scaled derivative for every multi-index, at the given points.
pub fn check_marcinkiewicz_at(m: &Symbol, alpha_max: u32, points: &[Vec<f64>]) -> Result<MarcinkiewiczReport> {
    if alpha_max > MAX_ALPHA {
        return Err(Error::InvalidParameter(format!("alpha_max {alpha_max} exceeds {MAX_ALPHA}")));
    }
    let d = m.dim;
    let alphas = MultiIndex::enumerate(d, alpha_max);
    let mut worst = vec![0.0f64; alphas.len()];
    for xi in points {
        if xi.len() != ARITY * d {
            return Err(Error::DimensionMismatch { expected: ARITY * d, found: xi.len() });
        }
        let radii: Vec<f64> = (0..d).map(|i| xi[i].hypot(xi[d + i])).collect();
        let h: Vec<f64> = radii.iter().map(|&r| fd_step(r)).collect();
        if let Some(i) = (0..d).find(|&i| !(h[i] > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "sample {xi:?} lies on the singular subspace of group {i}"
            )));
        }
        for (w, alpha) in worst.iter_mut().zip(&alphas) {
            let weight: f64 = (0..d).map(|i| radii[i].powi(alpha.group_order(i) as i32)).product();
            *w = w.max(finite_difference(m, xi, alpha, &h).norm() * weight);
        }
    }
    Ok(MarcinkiewiczReport {
        symbol: m.name.clone(),
        alpha_max,
        samples: points.len(),
        entries: alphas.into_iter().zip(worst).map(|(multi_index, worst)| ConstantEntry { multi_index, worst }).collect(),
    })
}

pub fn check_marcinkiewicz(m: &Symbol, alpha_max: u32, sample_count: usize, seed: u64) -> Result<MarcinkiewiczReport> {
    check_marcinkiewicz_at(m, alpha_max, &sample_points(m.dim, sample_count, seed))
}

/// Largest frequency magnitude kept on each axis: `|xi_a| < N/4`.
pub fn band_radius(log_resolution: u32) -> i64 {
    (1i64 << log_resolution) / 4
}

/// Zero every coefficient with some `|xi_a| >= N/4`.
pub fn band_limit(f: &GridFunction) -> GridFunction {
    let mut spec = f.forward_transform();
    let k = band_radius(f.log_resolution());
    let mut freq = vec![0i64; f.dim()];
    for i in 0..spec.coefficients().len() {
        spec.frequency_of(i, &mut freq);
        if freq.iter().any(|x| x.abs() >= k) {
            spec.coefficients_mut()[i] = Complex64::new(0.0, 0.0);
        }
    }
    spec.inverse_transform()
}

/// Band coefficients as a dense box of side `2K - 1`, frequency `-(K-1)` first.
fn band_box(spec: &FrequencyGrid, k: i64) -> Vec<Complex64> {
    let d = spec.shape().dim;
    let side = (2 * k - 1) as usize;
    let mut out = Vec::with_capacity(side.pow(d as u32));
    let mut freq = vec![0i64; d];
    for idx in 0..side.pow(d as u32) {
        let mut rest = idx;
        for a in (0..d).rev() {
            freq[a] = (rest % side) as i64 - (k - 1);
            rest /= side;
        }
        out.push(spec.get(&freq).expect("band frequency on grid"));
    }
    out
}

enum PairWeight<'a> {
    Direct(&'a Symbol),
    /// `tables[a][i * side + j] = m_a(xi_1 = i - (K-1), xi_2 = j - (K-1))`, times `scale`.
    Tables { tables: Vec<Vec<f64>>, scale: Complex64 },
}

fn tm_core(m: &Symbol, f: &GridFunction, g: &GridFunction, weight: PairWeight<'_>) -> Result<GridFunction> {
    f.shape().ensure_same(&g.shape())?;
    if f.dim() != m.dim {
        return Err(Error::DimensionMismatch { expected: m.dim, found: f.dim() });
    }
    let d = m.dim;
    let l = f.log_resolution();
    let k = band_radius(l);
    let mut out = FrequencyGrid::zeros(d, l)?;
    if k == 0 {
        return Ok(out.inverse_transform());
    }
    let fb = band_box(&f.forward_transform(), k);
    let gb = band_box(&g.forward_transform(), k);
    let side = 2 * k - 1;
    let out_side = 2 * side - 1;
    let out_len = (out_side as usize).pow(d as u32);

    let values: Vec<Complex64> = (0..out_len)
        .into_par_iter()
        .map(|o| {
            // omega offset per axis in 0..out_side; omega = offset - 2(K-1)
            let mut omega = [0i64; MAX_DIM];
            let mut rest = o;
            for a in (0..d).rev() {
                omega[a] = (rest % out_side as usize) as i64;
                rest /= out_side as usize;
            }
            // xi_1 box index i_a in max(0, omega_a - (side-1)) ..= min(side-1, omega_a)
            let lo: Vec<i64> = (0..d).map(|a| (omega[a] - (side - 1)).max(0)).collect();
            let hi: Vec<i64> = (0..d).map(|a| omega[a].min(side - 1)).collect();
            let mut i = lo.clone();
            let mut acc = Complex64::new(0.0, 0.0);
            let mut xi = vec![0.0; 2 * d];
            loop {
                let mut fi = 0usize;
                let mut gi = 0usize;
                for a in 0..d {
                    fi = fi * side as usize + i[a] as usize;
                    gi = gi * side as usize + (omega[a] - i[a]) as usize;
                }
                let w = match &weight {
                    PairWeight::Direct(sym) => {
                        for a in 0..d {
                            xi[a] = (i[a] - (k - 1)) as f64;
                            xi[d + a] = (omega[a] - i[a] - (k - 1)) as f64;
                        }
                        sym.evaluate(&xi)
                    }
                    PairWeight::Tables { tables, scale } => {
                        let mut v = 1.0;
                        for a in 0..d {
                            v *= tables[a][(i[a] * side + omega[a] - i[a]) as usize];
                        }
                        scale * v
                    }
                };
                acc += w * fb[fi] * gb[gi];
                let mut a = d;
                loop {
                    if a == 0 {
                        return acc;
                    }
                    a -= 1;
                    i[a] += 1;
                    if i[a] <= hi[a] {
                        break;
                    }
                    i[a] = lo[a];
                }
            }
        })
        .collect();

    let mut freq = vec![0i64; d];
    for (o, v) in values.into_iter().enumerate() {
        let mut rest = o;
        for a in (0..d).rev() {
            freq[a] = (rest % out_side as usize) as i64 - 2 * (k - 1);
            rest /= out_side as usize;
        }
        out.set(&freq, v)?;
    }
    Ok(out.inverse_transform())
}

/// `T_m(f, g)` after band-limiting both inputs to `|xi_a| < N/4`, so `xi_1 + xi_2` never aliases.
/// Tensor and constant symbols go through per-axis tables.
pub fn apply_tm(m: &Symbol, f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    let k = band_radius(f.log_resolution());
    let side = (2 * k - 1).max(0) as usize;
    let factor_table = |factor: AxisFactor| -> Vec<f64> {
        (0..side * side)
            .map(|ij| factor.eval((ij / side) as f64 - (k - 1) as f64, (ij % side) as f64 - (k - 1) as f64))
            .collect()
    };
    let weight = match &m.kind {
        SymbolKind::Constant(c) => PairWeight::Tables { tables: vec![vec![1.0; side * side]; m.dim], scale: *c },
        SymbolKind::Tensor(t) => PairWeight::Tables {
            tables: t.iter().map(|&fa| factor_table(fa)).collect(),
            scale: Complex64::new(1.0, 0.0),
        },
        SymbolKind::Custom { .. } => PairWeight::Direct(m),
    };
    tm_core(m, f, g, weight)
}

/// Same as [`apply_tm`] but always evaluates the symbol pair by pair.
pub fn apply_tm_direct(m: &Symbol, f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    tm_core(m, f, g, PairWeight::Direct(m))
}
