//! Exceptional sets and stopping-time partitions for the restricted weak-type estimate of the
//! bi-parameter trilinear form `Lambda^{(1,2)}`.
//!
//! Level sets are indexed absolutely: for a score `s` and constant `C`, `Omega_n = {s > C 2^{-n}}`.
//! The partition for `f` starts at `n = -5|k|`, the one for `h` at `n = -N`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bump::BumpProfile;
use crate::dyadic::{DyadicRectangle, RectangleCollection, ShiftLattice, ShiftParams};
use crate::error::{Error, Result};
use crate::grid::{wrap_centered, GridFunction, GridSet, GridShape};
use crate::paraproduct::{AxisShifts, Paraproduct, ParaproductSpec, SlotThree};
use crate::sqmax::{hl_maximal, Hybrid, HybridSpec};
use crate::tensor::{BumpBank, LemmaConfig};

/// Upper bound on threshold halvings in [`greedy_levels`].
pub const MAX_HALVINGS: usize = 64;
/// Largest factor by which [`build_exceptional`] may grow the constant.
pub const MAX_DOUBLINGS: u32 = 30;

fn strong_maximal_of(set: &GridSet) -> Vec<f64> {
    hl_maximal(&set.indicator()).real_parts()
}

/// `|k| = k_1 + k_2`.
pub fn k_norm(k: &[u32]) -> u32 {
    k.iter().sum()
}

/// The dilation vectors `{0..=k_max}^2`.
pub fn dilation_set(k_max: u32) -> Vec<[u32; 2]> {
    (0..=k_max).flat_map(|a| (0..=k_max).map(move |b| [a, b])).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DilationSets {
    pub k: [u32; 2],
    /// `{MS(f) > C 2^{5|k|}} u {SM(g) > C 2^{5|k|}}`
    pub omega: GridSet,
    /// `{MM(chi_omega) > 1/100}`
    pub omega_tilde: GridSet,
    /// `{MM(chi_omega_tilde) >= 2^{-|k|}}`
    pub omega_tilde_tilde: GridSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExceptionalSets {
    pub constant_c: f64,
    pub per_dilation: Vec<DilationSets>,
    pub global_omega: GridSet,
    pub e: GridSet,
    pub e_prime: GridSet,
}

impl ExceptionalSets {
    pub fn sets_for(&self, k: [u32; 2]) -> Option<&DilationSets> {
        self.per_dilation.iter().find(|s| s.k == k)
    }
}

fn sets_at(ms: &[f64], sm: &[f64], shape: GridShape, c: f64, knorm: u32) -> (GridSet, GridSet, GridSet) {
    let threshold = c * 2f64.powi(5 * knorm as i32);
    let omega = GridSet::above(shape, ms, threshold).union(&GridSet::above(shape, sm, threshold));
    let omega_tilde = GridSet::above(shape, &strong_maximal_of(&omega), 0.01);
    let omega_tilde_tilde = GridSet::at_least(shape, &strong_maximal_of(&omega_tilde), 2f64.powi(-(knorm as i32)));
    (omega, omega_tilde, omega_tilde_tilde)
}

/// Exceptional sets for every dilation in `ks`. The constant starts at `c_init` and doubles until
/// the union of all `omega_tilde_tilde` has measure below 1/2.
pub fn build_exceptional(
    ms_f: &GridFunction,
    sm_g: &GridFunction,
    e: &GridSet,
    ks: &[[u32; 2]],
    c_init: f64,
) -> Result<ExceptionalSets> {
    let shape = ms_f.shape();
    shape.ensure_same(&sm_g.shape())?;
    shape.ensure_same(&e.shape())?;
    if !(c_init > 0.0 && c_init.is_finite()) {
        return Err(Error::InvalidParameter(format!("initial constant {c_init} must be positive")));
    }
    let ms = ms_f.real_parts();
    let sm = sm_g.real_parts();
    let mut norms: Vec<u32> = ks.iter().map(|k| k_norm(k)).collect();
    norms.sort_unstable();
    norms.dedup();

    let mut c = c_init;
    let mut measure = 1.0;
    for _ in 0..=MAX_DOUBLINGS {
        let by_norm: BTreeMap<u32, (GridSet, GridSet, GridSet)> =
            norms.iter().map(|&kn| (kn, sets_at(&ms, &sm, shape, c, kn))).collect();
        let mut global = GridSet::empty(shape);
        for (_, _, ttilde) in by_norm.values() {
            global = global.union(ttilde);
        }
        measure = global.measure();
        if measure < 0.5 {
            let per_dilation = ks
                .iter()
                .map(|&k| {
                    let (omega, omega_tilde, omega_tilde_tilde) = by_norm[&k_norm(&k)].clone();
                    DilationSets { k, omega, omega_tilde, omega_tilde_tilde }
                })
                .collect();
            let e_prime = e.difference(&global);
            return Ok(ExceptionalSets { constant_c: c, per_dilation, global_omega: global, e: e.clone(), e_prime });
        }
        c *= 2.0;
    }
    Err(Error::ConstantDiverged { limit: c_init * 2f64.powi(MAX_DOUBLINGS as i32), measure })
}

/// Number of grid cells of `set` inside `r`, and the cell count of `r`.
fn overlap(set: &GridSet, r: &DyadicRectangle) -> (usize, usize) {
    let cells = r.cells(set.shape().log_resolution);
    (cells.iter().filter(|&&i| set.contains(i)).count(), cells.len())
}

/// `|R n S| > |R| / 100`
fn dense_in(set: &GridSet, r: &DyadicRectangle) -> bool {
    let (hit, total) = overlap(set, r);
    100 * hit > total
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyLevels {
    pub start_threshold: f64,
    /// `thresholds[m] = start / 2^m`.
    pub thresholds: Vec<f64>,
    /// `level_sets[m] = {score > thresholds[m]}`.
    pub level_sets: Vec<GridSet>,
    /// Rectangle indices selected at step `m`; `levels[0]` is always empty.
    pub levels: Vec<Vec<usize>>,
    /// Step that received the leftovers, if any.
    pub terminal: Option<usize>,
}

impl GreedyLevels {
    pub fn step_of(&self, rect: usize) -> Option<usize> {
        self.levels.iter().position(|l| l.contains(&rect))
    }
}

/// Halve the threshold repeatedly; at step `m` select the not-yet-selected rectangles that meet
/// `{score > start / 2^m}` in more than 1% of their measure. Once the threshold is below the
/// smallest positive score (or after [`MAX_HALVINGS`] steps) the rest form one final level.
pub fn greedy_levels(
    score: &GridFunction,
    rects: &[DyadicRectangle],
    start_threshold: f64,
) -> Result<GreedyLevels> {
    if !(start_threshold > 0.0 && start_threshold.is_finite()) {
        return Err(Error::InvalidParameter(format!("start threshold {start_threshold} must be positive")));
    }
    let shape = score.shape();
    let values = score.real_parts();
    if values.iter().any(|&v| v < 0.0 || v.is_nan()) {
        return Err(Error::InvalidParameter("scores must be nonnegative".into()));
    }
    let min_positive = values.iter().cloned().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    let mut remaining: Vec<usize> = (0..rects.len()).collect();
    let mut thresholds = vec![start_threshold];
    let mut level_sets = vec![GridSet::above(shape, &values, start_threshold)];
    let mut levels = vec![Vec::new()];
    let mut terminal = None;
    for m in 1..=MAX_HALVINGS {
        let threshold = start_threshold / 2f64.powi(m as i32);
        let set = GridSet::above(shape, &values, threshold);
        let (chosen, rest): (Vec<usize>, Vec<usize>) =
            remaining.iter().partition(|&&r| dense_in(&set, &rects[r]));
        thresholds.push(threshold);
        level_sets.push(set);
        levels.push(chosen);
        remaining = rest;
        if remaining.is_empty() {
            break;
        }
        if threshold < min_positive || m == MAX_HALVINGS {
            let last = m + 1;
            let threshold = start_threshold / 2f64.powi(last as i32);
            thresholds.push(threshold);
            level_sets.push(GridSet::above(shape, &values, threshold));
            levels.push(std::mem::take(&mut remaining));
            terminal = Some(last);
            break;
        }
    }
    Ok(GreedyLevels { start_threshold, thresholds, level_sets, levels, terminal })
}

/// Greedy levels placed at absolute indices `n = start_level + m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub start_level: i64,
    pub greedy: GreedyLevels,
}

impl Partition {
    pub fn absolute_level(&self, rect: usize) -> Option<i64> {
        self.greedy.step_of(rect).map(|m| self.start_level + m as i64)
    }

    /// `Omega_n` for absolute `n`.
    pub fn level_set(&self, n: i64) -> Option<&GridSet> {
        let m = n - self.start_level;
        (m >= 0).then(|| self.greedy.level_sets.get(m as usize)).flatten()
    }

    /// Rectangles of absolute level `n`.
    pub fn level(&self, n: i64) -> &[usize] {
        let m = n - self.start_level;
        if m < 0 {
            return &[];
        }
        self.greedy.levels.get(m as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_terminal(&self, n: i64) -> bool {
        self.greedy.terminal.map(|m| self.start_level + m as i64) == Some(n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub levels: [i64; 3],
    pub rects: Vec<usize>,
    /// `|union of R in the cell|`.
    pub shadow: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoppingTrace {
    pub collection: RectangleCollection,
    pub partitions: [Partition; 3],
    pub cells: Vec<Cell>,
}

/// Intersect the three partitions into cells `T_{n1,n2,n3}`, check that every rectangle keeps
/// more than 97% of its measure outside `Omega_{n1-1} u Omega'_{n2-1} u Omega''_{n3-1}`, and
/// check `|Omega_{T_{n1}}| <= |{MM(chi_{Omega_{n1}}) > 1/100}|` (pointwise) for each non-terminal level.
pub fn combine_cells(collection: &RectangleCollection, partitions: [Partition; 3]) -> Result<StoppingTrace> {
    let rects = collection.rects();
    let mut grouped: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for r in 0..rects.len() {
        let mut key = [0i64; 3];
        for (slot, p) in partitions.iter().enumerate() {
            key[slot] = p.absolute_level(r).ok_or_else(|| {
                Error::InvariantViolation(format!("rectangle {} missing from partition {}", rects[r], slot + 1))
            })?;
        }
        grouped.entry(key).or_default().push(r);
    }
    let mut cells = Vec::with_capacity(grouped.len());
    for (levels, members) in grouped {
        let prev: Vec<&GridSet> = (0..3)
            .map(|s| {
                partitions[s].level_set(levels[s] - 1).ok_or_else(|| {
                    Error::InvariantViolation(format!("no level set below level {}", levels[s]))
                })
            })
            .collect::<Result<_>>()?;
        let bad = prev[0].union(prev[1]).union(prev[2]);
        let mut shadow = None::<GridSet>;
        for &r in &members {
            let (hit, total) = overlap(&bad, &rects[r]);
            if 100 * (total - hit) <= 97 * total {
                return Err(Error::InvariantViolation(format!(
                    "rectangle {} keeps only {}/{} cells outside the previous level sets in cell {:?}",
                    rects[r],
                    total - hit,
                    total,
                    levels
                )));
            }
            let set = shadow.get_or_insert_with(|| GridSet::empty(bad.shape()));
            for i in rects[r].cells(bad.shape().log_resolution) {
                set.insert(i);
            }
        }
        cells.push(Cell { levels, rects: members, shadow: shadow.map_or(0.0, |s| s.measure()) });
    }
    for (slot, p) in partitions.iter().enumerate() {
        for (m, members) in p.greedy.levels.iter().enumerate() {
            let n = p.start_level + m as i64;
            if members.is_empty() || p.is_terminal(n) {
                continue;
            }
            let set = &p.greedy.level_sets[m];
            let enlarged = GridSet::above(set.shape(), &strong_maximal_of(set), 0.01);
            for &r in members {
                if rects[r].cells(set.shape().log_resolution).iter().any(|&i| !enlarged.contains(i)) {
                    return Err(Error::InvariantViolation(format!(
                        "rectangle {} of level {n} (partition {}) leaves {{MM > 1/100}}",
                        rects[r],
                        slot + 1
                    )));
                }
            }
        }
    }
    Ok(StoppingTrace { collection: collection.clone(), partitions, cells })
}

/// Grid cells of `prod_a dilate(I_a, k_a)` (open, periodic), i.e. the support of lemma term `k`.
pub fn dilated_cells(r: &DyadicRectangle, k: &[u32], log_resolution: u32) -> Vec<usize> {
    let n = 1usize << log_resolution;
    let mut out = vec![0usize];
    for (axis, &ka) in r.axes.iter().zip(k) {
        let j = axis.realize().dilate(ka);
        let c = j.center();
        let half = 0.5 * j.length;
        let members: Vec<usize> =
            (0..n).filter(|&i| wrap_centered(i as f64 / n as f64 - c).abs() < half).collect();
        out = out.iter().flat_map(|&b| members.iter().map(move |&i| b * n + i)).collect();
    }
    out
}

/// Split into rectangles meeting the complement of `omega_tilde` (Part I) and those inside it
/// (Part II). Every Part II rectangle must have its `2^k` dilate inside `omega_tilde_tilde`.
pub fn part_split(
    collection: &RectangleCollection,
    sets: &DilationSets,
) -> Result<(RectangleCollection, RectangleCollection)> {
    let l = sets.omega_tilde.shape().log_resolution;
    let (inside, outside): (Vec<&DyadicRectangle>, Vec<&DyadicRectangle>) = collection
        .iter()
        .partition(|r| r.cells(l).iter().all(|&i| sets.omega_tilde.contains(i)));
    for r in &inside {
        if dilated_cells(r, &sets.k, l).iter().any(|&i| !sets.omega_tilde_tilde.contains(i)) {
            return Err(Error::InvariantViolation(format!(
                "dilate 2^{:?} of {r} is not inside the doubly enlarged set",
                sets.k
            )));
        }
    }
    let part_i = RectangleCollection::new(collection.dim(), outside.into_iter().cloned().collect())?;
    let part_ii = RectangleCollection::new(collection.dim(), inside.into_iter().cloned().collect())?;
    Ok((part_i, part_ii))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub levels: [i64; 3],
    pub count: usize,
    pub shadow: f64,
    /// `shadow / (2^{n1 p theta1} 2^{n2 q theta2} 2^{n3 alpha theta3})` with the cell's theta.
    pub ratio: f64,
}

/// Interpolation weights for cells with `n3 > 0` and with `n3 <= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerThetas {
    pub positive: [f64; 3],
    pub nonpositive: [f64; 3],
}

impl Default for LedgerThetas {
    fn default() -> Self {
        Self { positive: [0.5, 0.5, 0.0], nonpositive: [0.3, 0.3, 0.4] }
    }
}

impl LedgerThetas {
    pub fn for_level(&self, n3: i64) -> [f64; 3] {
        if n3 > 0 {
            self.positive
        } else {
            self.nonpositive
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub thetas: LedgerThetas,
    pub rows: Vec<LedgerRow>,
    pub max_ratio: f64,
    /// `sum 2^{-n1-n2-n3} |Omega_T|` over cells with `n3 > 0`.
    pub sum_positive: f64,
    /// Same over `n3 <= 0`.
    pub sum_nonpositive: f64,
    /// `sum 2^{-n1-n2-n3} 2^{n1 p theta1 + n2 q theta2 + n3 alpha theta3}` over cells with `n3 > 0`.
    pub bound_positive: f64,
    pub bound_nonpositive: f64,
    /// `1 - p theta1 > 0`, `1 - q theta2 > 0` and `alpha theta3 > 1` for the `n3 <= 0` weights.
    pub nonpositive_summable: bool,
}

impl LedgerReport {
    pub fn total(&self) -> f64 {
        self.sum_positive + self.sum_nonpositive
    }
}

pub fn validate_theta(theta: [f64; 3], alpha: f64) -> Result<()> {
    if (theta.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("theta {theta:?} must sum to 1")));
    }
    if theta.iter().any(|t| !(0.0..1.0).contains(t)) {
        return Err(Error::InvalidParameter(format!("theta {theta:?} must lie in [0,1)")));
    }
    if !(alpha > 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must exceed 1")));
    }
    Ok(())
}

pub fn verify_ledger(cells: &[Cell], p: f64, q: f64, alpha: f64, thetas: &LedgerThetas) -> Result<LedgerReport> {
    validate_theta(thetas.positive, alpha)?;
    validate_theta(thetas.nonpositive, alpha)?;
    let t = thetas.nonpositive;
    let nonpositive_summable = 1.0 - p * t[0] > 0.0 && 1.0 - q * t[1] > 0.0 && alpha * t[2] > 1.0;
    let mut rows = Vec::with_capacity(cells.len());
    let (mut sums, mut bounds, mut max_ratio) = ([0.0; 2], [0.0; 2], 0.0f64);
    for cell in cells {
        let theta = thetas.for_level(cell.levels[2]);
        let [n1, n2, n3] = cell.levels.map(|n| n as f64);
        let bound = 2f64.powf(n1 * p * theta[0] + n2 * q * theta[1] + n3 * alpha * theta[2]);
        let weight = 2f64.powf(-(n1 + n2 + n3));
        let ratio = cell.shadow / bound;
        max_ratio = max_ratio.max(ratio);
        let case = usize::from(cell.levels[2] <= 0);
        sums[case] += weight * cell.shadow;
        bounds[case] += weight * bound;
        rows.push(LedgerRow { levels: cell.levels, count: cell.rects.len(), shadow: cell.shadow, ratio });
    }
    Ok(LedgerReport {
        thetas: *thetas,
        rows,
        max_ratio,
        sum_positive: sums[0],
        sum_nonpositive: sums[1],
        bound_positive: bounds[0],
        bound_nonpositive: bounds[1],
        nonpositive_summable,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    pub p: f64,
    pub q: f64,
    /// Decay exponent `M` of the slot-3 lemma terms.
    pub decay: u32,
    pub k_max: u32,
    pub c_init: f64,
    pub lattice: ShiftLattice,
    pub profile: BumpProfile,
    pub alpha: f64,
    pub thetas: LedgerThetas,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self {
            p: 2.5,
            q: 2.5,
            decay: 12,
            k_max: 4,
            c_init: 1.0 / 64.0,
            lattice: ShiftLattice::default(),
            profile: BumpProfile::default(),
            alpha: 3.0,
            thetas: LedgerThetas::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DilationReport {
    pub k: [u32; 2],
    pub part_i: usize,
    pub part_ii: usize,
    /// Largest `|term|` among Part II rectangles paired against `chi_{E'}` (slot-3 lemma term `k`).
    pub part_ii_contribution: f64,
    pub start_levels: [i64; 3],
    pub trace: StoppingTrace,
    pub ledger: LedgerReport,
}

impl DilationReport {
    /// The Part I sum of `2^{-n1-n2-n3}|Omega_T|` divided by `2^{10|k|}`.
    pub fn normalized_total(&self) -> f64 {
        self.ledger.total() / 2f64.powi(10 * k_norm(&self.k) as i32)
    }
}

pub const LAMBDA_ROUNDOFF: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct StoppingRun {
    pub exceptional: ExceptionalSets,
    pub dilations: Vec<DilationReport>,
    /// `|Lambda(f, g, chi_{E'})|` at each lattice point, same shift on every axis and slot.
    pub lambda_lattice: Vec<f64>,
    /// `||h||_2 sum_R |R|^{-1/2} |<f,Phi1>| |<g,Phi2>|` at the same lattice points: the size of
    /// the form without cancellation against `h`.
    pub lambda_scale: Vec<f64>,
}

impl StoppingRun {
    pub fn lambda_max(&self) -> f64 {
        self.lambda_lattice.iter().cloned().fold(0.0, f64::max)
    }

    /// Lattice values of `|Lambda|` with those below `LAMBDA_ROUNDOFF` times their absolute
    /// scale set to zero (exact cancellation up to rounding).
    pub fn lambda_resolved(&self) -> Vec<f64> {
        self.lambda_lattice
            .iter()
            .zip(&self.lambda_scale)
            .map(|(&v, &s)| if v <= LAMBDA_ROUNDOFF * s { 0.0 } else { v })
            .collect()
    }

    pub fn ledger_constant(&self) -> f64 {
        self.dilations.iter().map(DilationReport::normalized_total).fold(0.0, f64::max)
    }

    pub fn in6_cells(&self) -> usize {
        self.dilations.iter().map(|d| d.trace.cells.len()).sum()
    }
}

/// Bi-parameter stopping-time pipeline for the type-`(1,2)` form on a fixed collection.
#[derive(Debug)]
pub struct StoppingPipeline {
    collection: RectangleCollection,
    config: StoppingConfig,
    bank: Arc<BumpBank>,
}

impl StoppingPipeline {
    pub fn new(collection: RectangleCollection, log_resolution: u32, config: StoppingConfig) -> Result<Self> {
        if collection.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: collection.dim() });
        }
        collection.check_resolution(log_resolution)?;
        if config.decay < 4 {
            return Err(Error::InvalidParameter(format!("decay exponent {} must be >= 4", config.decay)));
        }
        let lemma = LemmaConfig { decay_exponent: config.decay, term_count: config.k_max.max(1) };
        let bank = Arc::new(BumpBank::new(log_resolution, config.profile).with_lemma(lemma));
        Ok(Self { collection, config, bank })
    }

    pub fn collection(&self) -> &RectangleCollection {
        &self.collection
    }

    fn hybrid(&self, pattern: &str, dilation: Option<[u32; 2]>, collection: &RectangleCollection) -> Result<Hybrid> {
        let mut spec = HybridSpec::new(pattern.parse()?, collection.clone())?
            .with_lattice(self.config.lattice)
            .with_profile(self.config.profile);
        spec = match dilation {
            Some(k) => spec.with_dilation(k.to_vec(), self.config.decay)?,
            None if pattern == "MS" => spec.with_slot(1)?,
            None => spec.with_slot(2)?,
        };
        Hybrid::with_bank(spec, self.bank.clone())
    }

    pub fn maximal_square(&self, f: &GridFunction) -> Result<GridFunction> {
        self.hybrid("MS", None, &self.collection)?.evaluate(f)
    }

    pub fn square_maximal(&self, g: &GridFunction) -> Result<GridFunction> {
        self.hybrid("SM", None, &self.collection)?.evaluate(g)
    }

    pub fn square_square_dilated(&self, h: &GridFunction, k: [u32; 2]) -> Result<GridFunction> {
        self.hybrid("SS", Some(k), &self.collection)?.evaluate(h)
    }

    fn paraproduct(&self, collection: RectangleCollection, shift: ShiftParams) -> Result<Paraproduct> {
        let spec = ParaproductSpec::new(vec![1, 2], collection)?
            .with_profile(self.config.profile)
            .with_shifts(vec![AxisShifts::uniform(shift); 2])?;
        Paraproduct::with_bank(spec, self.bank.clone())
    }

    /// Run every stage for normalized `f`, `g` with `E` the whole torus.
    pub fn run(&self, f: &GridFunction, g: &GridFunction) -> Result<StoppingRun> {
        let shape = f.shape();
        let ks = dilation_set(self.config.k_max);
        let ms = self.maximal_square(f)?;
        let sm = self.square_maximal(g)?;
        let e = GridSet::full(shape);
        let exceptional = build_exceptional(&ms, &sm, &e, &ks, self.config.c_init)?;
        let c = exceptional.constant_c;
        let h = exceptional.e_prime.indicator();
        let para0 = self.paraproduct(self.collection.clone(), ShiftParams::ZERO)?;

        let mut dilations = Vec::with_capacity(ks.len());
        for &k in &ks {
            let sets = exceptional.sets_for(k).expect("every dilation has sets");
            let (part_i, part_ii) = part_split(&self.collection, sets)?;

            let part_ii_contribution = if part_ii.is_empty() {
                0.0
            } else {
                para0
                    .restricted(part_ii.clone())?
                    .trilinear_terms(f, g, &h, &SlotThree::LemmaTerms(k.to_vec()))?
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
            };

            let ss = self.square_square_dilated(&h, k)?;
            let kn = k_norm(&k) as i64;
            let start = -5 * kn;
            let start_threshold = c * 2f64.powi(5 * kn as i32);
            let part_rects = part_i.rects();
            let pf = Partition { start_level: start, greedy: greedy_levels(&ms, part_rects, start_threshold)? };
            let pg = Partition { start_level: start, greedy: greedy_levels(&sm, part_rects, start_threshold)? };
            let big_n = start_level_for(&ss, part_rects, c)?;
            let ph = Partition {
                start_level: -big_n,
                greedy: greedy_levels(&ss, part_rects, c * 2f64.powi(big_n as i32))?,
            };
            let trace = combine_cells(&part_i, [pf, pg, ph])?;
            let ledger =
                verify_ledger(&trace.cells, self.config.p, self.config.q, self.config.alpha, &self.config.thetas)?;
            dilations.push(DilationReport {
                k,
                part_i: part_i.len(),
                part_ii: part_ii.len(),
                part_ii_contribution,
                start_levels: [start, start, -big_n],
                trace,
                ledger,
            });
        }
        let h_norm = h.lp_norm(2.0)?;
        let (lambda_lattice, lambda_scale) = self
            .config
            .lattice
            .points()
            .into_iter()
            .map(|s| {
                let para = self.paraproduct(self.collection.clone(), s)?;
                Ok((para.trilinear_symmetric(f, g, &h)?.norm(), para.pair_mass(f, g)? * h_norm))
            })
            .collect::<Result<Vec<(f64, f64)>>>()?
            .into_iter()
            .unzip();
        Ok(StoppingRun { exceptional, dilations, lambda_lattice, lambda_scale })
    }

    /// `Lambda` with plain slot-3 bumps, and `sum_k 2^{-M|k|} Lambda_k` over `k in {0..=k_max}^2`.
    pub fn split_reconstruction(&self, f: &GridFunction, g: &GridFunction, h: &GridFunction) -> Result<(Complex64, Complex64)> {
        let para = self.paraproduct(self.collection.clone(), ShiftParams::ZERO)?;
        let direct = para.trilinear_symmetric(f, g, h)?;
        let mut split = Complex64::new(0.0, 0.0);
        for k in dilation_set(self.config.k_max) {
            let terms = para.trilinear_terms(f, g, h, &SlotThree::LemmaTerms(k.to_vec()))?;
            let weight = 2f64.powi(-((self.config.decay * k_norm(&k)) as i32));
            split += terms.iter().sum::<Complex64>() * weight;
        }
        Ok((direct, split))
    }
}

/// Smallest `N >= 1` with `|R n {score > C 2^N}| < |R|/100` for every rectangle.
pub fn start_level_for(score: &GridFunction, rects: &[DyadicRectangle], c: f64) -> Result<i64> {
    let values = score.real_parts();
    let shape = score.shape();
    for n in 1..=4096i64 {
        let set = GridSet::above(shape, &values, c * 2f64.powi(n as i32));
        if rects.iter().all(|r| {
            let (hit, total) = overlap(&set, r);
            100 * hit < total
        }) {
            return Ok(n);
        }
    }
    Err(Error::InvariantViolation("no start level found for the third partition".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paraproduct::standard_collection;

    fn indicator_of(r: &DyadicRectangle, l: u32, value: f64) -> GridFunction {
        let shape = GridShape::new(r.dim(), l).unwrap();
        let mut v = vec![0.0; shape.len()];
        for i in r.cells(l) {
            v[i] = value;
        }
        GridFunction::from_real(r.dim(), l, &v).unwrap()
    }

    #[test]
    fn single_rectangle_lands_on_third_level() {
        let r: DyadicRectangle = "-2:1,-1:0".parse().unwrap();
        let score = indicator_of(&r, 5, 2.0);
        let levels = greedy_levels(&score, &[r], 8.0).unwrap();
        assert_eq!(levels.step_of(0), Some(3));
        assert_eq!(levels.terminal, None);
    }

    #[test]
    fn zero_score_sends_everything_to_terminal_level() {
        let col = standard_collection(2, 5).unwrap();
        let score = GridFunction::zeros(2, 5).unwrap();
        let levels = greedy_levels(&score, col.rects(), 1.0).unwrap();
        assert_eq!(levels.terminal, Some(2));
        assert_eq!(levels.levels[2].len(), col.len());
    }

    #[test]
    fn unselected_rectangles_stay_sparse_in_earlier_sets() {
        let l = 5;
        let col = standard_collection(2, l).unwrap();
        let score = GridFunction::from_fn(2, l, |x| {
            num_complex::Complex64::new(((x[0] * 7.0).sin() * (x[1] * 13.0).cos()).abs() * 10.0, 0.0)
        })
        .unwrap();
        let levels = greedy_levels(&score, col.rects(), 16.0).unwrap();
        for (m, members) in levels.levels.iter().enumerate().skip(1) {
            for &r in members {
                let (hit, total) = overlap(&levels.level_sets[m - 1], &col.rects()[r]);
                assert!(100 * (total - hit) > 99 * total);
            }
        }
        let placed: usize = levels.levels.iter().map(Vec::len).sum();
        assert_eq!(placed, col.len());
    }

    #[test]
    fn ledger_single_cell() {
        let cell = Cell { levels: [1, 1, 1], rects: vec![0], shadow: 0.25 };
        let rep = verify_ledger(&[cell], 2.0, 2.0, 3.0, &LedgerThetas::default()).unwrap();
        assert!((rep.total() - 0.25 / 8.0).abs() < 1e-15);
        assert_eq!(rep.sum_nonpositive, 0.0);
        assert!((rep.rows[0].ratio - 0.25 / 4.0).abs() < 1e-15);
        let empty = verify_ledger(&[], 2.5, 2.5, 3.0, &LedgerThetas::default()).unwrap();
        assert_eq!(empty.total(), 0.0);
        assert!(empty.nonpositive_summable);
        let bad = |positive| LedgerThetas { positive, ..Default::default() };
        assert!(verify_ledger(&[], 2.0, 2.0, 3.0, &bad([0.5, 0.5, 0.5])).is_err());
        assert!(verify_ledger(&[], 2.0, 2.0, 3.0, &bad([1.0, 0.0, 0.0])).is_err());
        assert!(verify_ledger(&[], 2.0, 2.0, 1.0, &LedgerThetas::default()).is_err());
    }

    #[test]
    fn quiet_inputs_have_empty_exceptional_set() {
        let shape = GridShape::new(2, 5).unwrap();
        let zero = GridFunction::zeros(2, 5).unwrap();
        let e = GridSet::full(shape);
        let sets = build_exceptional(&zero, &zero, &e, &dilation_set(2), 1.0 / 64.0).unwrap();
        assert_eq!(sets.constant_c, 1.0 / 64.0);
        assert!(sets.global_omega.is_empty());
        assert_eq!(sets.e_prime, e);
    }

    #[test]
    fn huge_scores_exhaust_the_constant() {
        let shape = GridShape::new(2, 4).unwrap();
        let big = GridFunction::constant(2, 4, num_complex::Complex64::new(1e300, 0.0)).unwrap();
        let err = build_exceptional(&big, &big, &GridSet::full(shape), &[[0, 0]], 1.0).unwrap_err();
        assert!(matches!(err, Error::ConstantDiverged { .. }));
    }

    #[test]
    fn dilated_support_scales_with_k() {
        let l = 6;
        let r: DyadicRectangle = "-3:2,-2:1".parse().unwrap();
        let own = dilated_cells(&r, &[0, 0], l);
        assert!(own.iter().all(|i| r.cells(l).contains(i)));
        // the open interval drops one boundary row per axis
        assert_eq!(own.len(), 7 * 15);
        let wide = dilated_cells(&r, &[1, 1], l);
        assert_eq!(wide.len(), 15 * 31);
    }

    #[test]
    fn exceptional_sets_are_nested() {
        let l = 5;
        let col = standard_collection(2, l).unwrap();
        let pipe = StoppingPipeline::new(col, l, StoppingConfig { k_max: 1, ..Default::default() }).unwrap();
        let f = GridFunction::from_fn(2, l, |x| {
            num_complex::Complex64::new(if x[0] < 0.2 && x[1] < 0.3 { 3.0 } else { 0.1 }, 0.0)
        })
        .unwrap();
        let ms = pipe.maximal_square(&f).unwrap();
        let sm = pipe.square_maximal(&f).unwrap();
        let sets = build_exceptional(&ms, &sm, &GridSet::full(f.shape()), &dilation_set(1), 1.0 / 64.0).unwrap();
        assert!(sets.global_omega.measure() < 0.5);
        for s in &sets.per_dilation {
            assert!(s.omega.is_subset(&s.omega_tilde));
            assert!(s.omega_tilde.is_subset(&s.omega_tilde_tilde));
            assert!(s.omega_tilde_tilde.is_subset(&sets.global_omega));
        }
    }
}
