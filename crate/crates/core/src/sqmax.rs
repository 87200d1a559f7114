//! Square and maximal hybrid operators: the strong maximal function `MM`, and the per-axis
//! mixtures `MS`, `SM`, `SS` (plus the dilated-bump variant `SS^k`) built from normalized bump
//! coefficients `A(R) = sup_shifts |<f, Phi_R>|^2 / |R|`.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bump::BumpProfile;
use crate::dyadic::{DyadicInterval, DyadicRectangle, RectangleCollection, ShiftLattice, ShiftParams};
use crate::error::{Error, Result};
use crate::grid::{for_each_line, GridFunction, GridShape};
use crate::tensor::{contract_leading, pairings_map, AxisBumps, BumpBank, LemmaConfig, SparseAxis, Trie};

/// Default decay exponent of the lemma terms used by `SS^k`.
pub const DEFAULT_LEMMA_DECAY: u32 = 10;

fn real_grid(shape: GridShape, values: Vec<f64>) -> GridFunction {
    GridFunction::from_shape(shape, values.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
}

/// Cyclic window averages of width `2w` from those of width `w` along `axis`.
fn double_average(data: &[f64], shape: GridShape, axis: usize, w: usize) -> Vec<f64> {
    let mut out = data.to_vec();
    let n = shape.side();
    for_each_line(&mut out, shape, axis, |line| {
        let prev = line.to_vec();
        for s in 0..n {
            line[s] = 0.5 * (prev[s] + prev[(s + w) % n]);
        }
    });
    out
}

/// `out[i] = max_{s in [i-w+1, i]} line[s]` (cyclic) along `axis`.
fn sliding_max(data: &mut [f64], shape: GridShape, axis: usize, w: usize) {
    let n = shape.side();
    if w == 1 {
        return;
    }
    for_each_line(data, shape, axis, |line| {
        if w >= n {
            let m = line.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            line.iter_mut().for_each(|v| *v = m);
            return;
        }
        let src = line.to_vec();
        let mut dq: VecDeque<usize> = VecDeque::new();
        // positions n-w+1 .. n-1 precede index 0 cyclically
        for p in (n - w + 1)..(n + n) {
            let v = src[p % n];
            while dq.back().is_some_and(|&b| src[b % n] <= v) {
                dq.pop_back();
            }
            dq.push_back(p);
            while dq.front().is_some_and(|&f| f + w <= p) {
                dq.pop_front();
            }
            if p >= n {
                line[p - n] = src[dq.front().copied().expect("window is nonempty") % n];
            }
        }
    });
}

fn strong_maximal_rec(
    data: Vec<f64>,
    axis: usize,
    shape: GridShape,
    widths: &mut Vec<usize>,
    best: &mut [f64],
) {
    let mut cur = data;
    for j in 0..=shape.log_resolution {
        if j > 0 {
            cur = double_average(&cur, shape, axis, 1 << (j - 1));
        }
        widths.push(1 << j);
        if axis + 1 < shape.dim {
            strong_maximal_rec(cur.clone(), axis + 1, shape, widths, best);
        } else {
            let mut m = cur.clone();
            for (a, &w) in widths.iter().enumerate() {
                sliding_max(&mut m, shape, a, w);
            }
            for (b, v) in best.iter_mut().zip(&m) {
                *b = b.max(*v);
            }
        }
        widths.pop();
    }
}

/// Maximal function over grid-aligned axis-parallel rectangles whose side lengths are powers
/// of two cells (any position, wrapping periodically) and which contain the point. Any
/// grid-aligned rectangle sits inside one of these with at most `2^d` times its measure, so this
/// is within a factor `2^d` of [`hl_maximal_exhaustive`].
pub fn hl_maximal(f: &GridFunction) -> GridFunction {
    let shape = f.shape();
    let abs: Vec<f64> = f.samples().iter().map(|z| z.norm()).collect();
    let mut best = vec![0.0f64; abs.len()];
    strong_maximal_rec(abs, 0, shape, &mut Vec::new(), &mut best);
    real_grid(shape, best)
}

/// Maximal function over every grid-aligned rectangle (all side lengths `1..=N`). Cost grows like
/// `N^{2d}`; meant for small grids and cross-checks.
pub fn hl_maximal_exhaustive(f: &GridFunction) -> GridFunction {
    let shape = f.shape();
    let n = shape.side();
    let abs: Vec<f64> = f.samples().iter().map(|z| z.norm()).collect();
    let mut best = vec![0.0f64; abs.len()];
    let mut widths = vec![1usize; shape.dim];
    loop {
        let mut avg = abs.clone();
        for (a, &w) in widths.iter().enumerate() {
            for_each_line(&mut avg, shape, a, |line| {
                let src = line.to_vec();
                for s in 0..n {
                    line[s] = (0..w).map(|o| src[(s + o) % n]).sum::<f64>() / w as f64;
                }
            });
        }
        for (a, &w) in widths.iter().enumerate() {
            sliding_max(&mut avg, shape, a, w);
        }
        for (b, v) in best.iter_mut().zip(&avg) {
            *b = b.max(*v);
        }
        let Some(a) = widths.iter().rposition(|&w| w < n) else { break };
        widths[a] += 1;
        for w in &mut widths[a + 1..] {
            *w = 1;
        }
    }
    real_grid(shape, best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Letter {
    S,
    M,
}

/// A letter per axis, e.g. `MS`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pattern(pub Vec<Letter>);

impl Pattern {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn has_square(&self) -> bool {
        self.0.contains(&Letter::S)
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .trim()
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'S' => Ok(Letter::S),
                'M' => Ok(Letter::M),
                other => Err(Error::Parse(format!("pattern letter `{other}` is not S or M"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if letters.is_empty() || letters.len() > crate::grid::MAX_DIM {
            return Err(Error::Parse(format!("pattern `{s}` needs 1..=3 letters")));
        }
        Ok(Pattern(letters))
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.0 {
            f.write_str(match l {
                Letter::S => "S",
                Letter::M => "M",
            })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridSpec {
    pub pattern: Pattern,
    pub collection: RectangleCollection,
    /// Bump slot; only slot 3 can be replaced by lemma terms.
    pub slot: u8,
    pub lattice: ShiftLattice,
    /// Lemma term per axis for `SS^k`; `None` uses the plain bumps.
    pub dilation: Option<Vec<u32>>,
    /// Axis aggregated outermost first. The displayed formulas use `0, 1, ...`.
    pub axis_order: Vec<usize>,
    pub profile: BumpProfile,
    pub lemma_decay: u32,
}

impl HybridSpec {
    pub fn new(pattern: Pattern, collection: RectangleCollection) -> Result<Self> {
        let d = pattern.dim();
        let slot = if pattern.0.iter().all(|&l| l == Letter::S) { 3 } else { 1 };
        let spec = Self {
            pattern,
            collection,
            slot,
            lattice: ShiftLattice::default(),
            dilation: None,
            axis_order: (0..d).collect(),
            profile: BumpProfile::default(),
            lemma_decay: DEFAULT_LEMMA_DECAY,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_lattice(mut self, lattice: ShiftLattice) -> Self {
        self.lattice = lattice;
        self
    }

    pub fn with_profile(mut self, profile: BumpProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn with_slot(mut self, slot: u8) -> Result<Self> {
        self.slot = slot;
        self.validate()?;
        Ok(self)
    }

    /// `SS^k`: slot-3 bumps replaced by lemma term `k_a` on axis `a`.
    pub fn with_dilation(mut self, k: Vec<u32>, decay: u32) -> Result<Self> {
        self.slot = 3;
        self.dilation = Some(k);
        self.lemma_decay = decay;
        self.validate()?;
        Ok(self)
    }

    pub fn with_axis_order(mut self, order: Vec<usize>) -> Result<Self> {
        self.axis_order = order;
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.collection.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: self.collection.dim() });
        }
        if !(1..=3).contains(&self.slot) {
            return Err(Error::InvalidParameter(format!("slot {} outside 1..=3", self.slot)));
        }
        let mut order = self.axis_order.clone();
        order.sort_unstable();
        if order != (0..d).collect::<Vec<_>>() {
            return Err(Error::InvalidParameter(format!("axis order {:?} is not a permutation", self.axis_order)));
        }
        if let Some(k) = &self.dilation {
            if k.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: k.len() });
            }
            if self.slot != 3 {
                return Err(Error::InvalidParameter("lemma terms replace slot-3 bumps only".into()));
            }
        }
        Ok(())
    }

    /// Bumps on `S` axes carry cancellation; on `M` axes they do not.
    pub fn cancellation(&self, axis: usize) -> bool {
        self.pattern.0[axis] == Letter::S
    }
}

/// A hybrid operator bound to a resolution.
#[derive(Clone, Debug)]
pub struct Hybrid {
    spec: HybridSpec,
    bank: Arc<BumpBank>,
}

struct LatticeBumps<'a> {
    hybrid: &'a Hybrid,
    points: Vec<ShiftParams>,
}

impl AxisBumps for LatticeBumps<'_> {
    fn variants(&self, axis: usize, interval: &DyadicInterval) -> Result<Vec<Arc<SparseAxis>>> {
        let spec = &self.hybrid.spec;
        let cancel = spec.cancellation(axis);
        self.points
            .iter()
            .map(|&s| match &spec.dilation {
                Some(k) => self.hybrid.bank.lemma_term(interval, s, cancel, k[axis]),
                None => self.hybrid.bank.get(interval, s, cancel),
            })
            .collect()
    }
}

impl Hybrid {
    pub fn new(spec: HybridSpec, log_resolution: u32) -> Result<Self> {
        spec.validate()?;
        spec.collection.check_resolution(log_resolution)?;
        let mut bank = BumpBank::new(log_resolution, spec.profile);
        if let Some(k) = &spec.dilation {
            let terms = k.iter().copied().max().unwrap_or(0).max(1);
            bank = bank.with_lemma(LemmaConfig { decay_exponent: spec.lemma_decay, term_count: terms });
        }
        Ok(Self { spec, bank: Arc::new(bank) })
    }

    /// Share an existing bump cache (same resolution and profile).
    pub fn with_bank(spec: HybridSpec, bank: Arc<BumpBank>) -> Result<Self> {
        spec.validate()?;
        spec.collection.check_resolution(bank.log_resolution())?;
        Ok(Self { spec, bank })
    }

    pub fn spec(&self) -> &HybridSpec {
        &self.spec
    }

    pub fn log_resolution(&self) -> u32 {
        self.bank.log_resolution()
    }

    fn check_input(&self, f: &GridFunction) -> Result<()> {
        if f.dim() != self.spec.dim() {
            return Err(Error::DimensionMismatch { expected: self.spec.dim(), found: f.dim() });
        }
        if f.log_resolution() != self.log_resolution() {
            return Err(Error::ResolutionMismatch { expected: self.log_resolution(), found: f.log_resolution() });
        }
        Ok(())
    }

    /// `A(R) = max over the shift lattice of |<f, Phi_R>|^2 / |R|`, in collection order.
    pub fn coefficients(&self, f: &GridFunction) -> Result<Vec<f64>> {
        self.check_input(f)?;
        let rects = self.spec.collection.rects();
        let provider = LatticeBumps { hybrid: self, points: self.spec.lattice.points() };
        pairings_map(f, rects, &provider, &|r, c| {
            let m = c.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
            m / rects[r].measure()
        })
    }

    pub fn evaluate(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check_input(f)?;
        if !self.spec.pattern.has_square() && self.spec.dilation.is_none() {
            return Ok(hl_maximal(f));
        }
        let a = self.coefficients(f)?;
        let values = aggregate(&self.spec, f.shape(), &a)?;
        Ok(real_grid(f.shape(), values))
    }
}

/// Letter-wise aggregation of per-rectangle values `a` (sum on `S`, max on `M`) over rectangles
/// containing the point, in `spec.axis_order`; square root iff the pattern contains an `S`.
pub fn aggregate(spec: &HybridSpec, shape: GridShape, a: &[f64]) -> Result<Vec<f64>> {
    let rects = spec.collection.rects();
    if a.len() != rects.len() {
        return Err(Error::InvalidParameter(format!("{} values for {} rectangles", a.len(), rects.len())));
    }
    let order = &spec.axis_order;
    let permuted: Vec<DyadicRectangle> =
        rects.iter().map(|r| DyadicRectangle { axes: order.iter().map(|&ax| r.axes[ax]).collect() }).collect();
    let letters: Vec<Letter> = order.iter().map(|&ax| spec.pattern.0[ax]).collect();
    let trie = Trie::build(&permuted);
    let n = shape.side();
    let perm_values = aggregate_rec(&trie, 0, &letters, a, n, shape.log_resolution);
    let mut out = vec![0.0; shape.len()];
    let mut idx = [0usize; crate::grid::MAX_DIM];
    let mut nat = [0usize; crate::grid::MAX_DIM];
    for (p, v) in perm_values.iter().enumerate() {
        shape.multi_index(p, &mut idx[..shape.dim]);
        for (k, &ax) in order.iter().enumerate() {
            nat[ax] = idx[k];
        }
        out[shape.linear_index(&nat[..shape.dim])] = *v;
    }
    if spec.pattern.has_square() {
        out.iter_mut().for_each(|v| *v = v.sqrt());
    }
    Ok(out)
}

fn aggregate_rec(
    children: &[(DyadicInterval, Trie)],
    depth: usize,
    letters: &[Letter],
    a: &[f64],
    n: usize,
    log_resolution: u32,
) -> Vec<f64> {
    let remaining = letters.len() - depth;
    let stride = n.pow(remaining as u32 - 1);
    let mut out = vec![0.0; stride * n];
    for (interval, child) in children {
        let inner = match child {
            Trie::Leaf(r) => vec![a[*r]],
            Trie::Node(grand) => aggregate_rec(grand, depth + 1, letters, a, n, log_resolution),
        };
        for i in interval.cell_range(log_resolution) {
            let row = &mut out[i * stride..(i + 1) * stride];
            match letters[depth] {
                Letter::S => row.iter_mut().zip(&inner).for_each(|(o, x)| *o += x),
                Letter::M => row.iter_mut().zip(&inner).for_each(|(o, x)| *o = o.max(*x)),
            }
        }
    }
    out
}

/// Evaluate a pattern on `f` with the standard settings.
pub fn hybrid(spec: &HybridSpec, f: &GridFunction) -> Result<GridFunction> {
    Hybrid::new(spec.clone(), f.log_resolution())?.evaluate(f)
}

/// `SS^k(h)`.
pub fn hybrid_dilated(spec: &HybridSpec, h: &GridFunction) -> Result<GridFunction> {
    if spec.dilation.is_none() {
        return Err(Error::InvalidParameter("hybrid_dilated needs a dilation vector".into()));
    }
    hybrid(spec, h)
}

/// Partial contractions `g_I(y) = |I|^{-1/2} <g(., y), phi_I>` for every axis-0 interval of the
/// collection and every lattice shift, feeding the vector-valued functions below.
fn leading_partials(
    g: &GridFunction,
    collection: &RectangleCollection,
    lattice: ShiftLattice,
    bank: &BumpBank,
) -> Result<Vec<(DyadicInterval, Vec<Vec<Complex64>>)>> {
    if g.dim() != 2 || collection.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: g.dim() });
    }
    let mut firsts: Vec<DyadicInterval> = collection.iter().map(|r| r.axes[0]).collect();
    firsts.sort();
    firsts.dedup();
    firsts
        .into_iter()
        .map(|i| {
            let scale = i.length().sqrt().recip();
            let parts = lattice
                .points()
                .into_iter()
                .map(|s| {
                    let b = bank.get(&i, s, true)?;
                    Ok(contract_leading(g.samples(), &b).into_iter().map(|z| z * scale).collect())
                })
                .collect::<Result<Vec<Vec<Complex64>>>>()?;
            Ok((i, parts))
        })
        .collect()
}

fn vector_function(
    g: &GridFunction,
    collection: &RectangleCollection,
    lattice: ShiftLattice,
    profile: BumpProfile,
    inner: impl Fn(&[Complex64]) -> Vec<f64>,
) -> Result<GridFunction> {
    let shape = g.shape();
    let l = shape.log_resolution;
    let n = shape.side();
    let bank = BumpBank::new(l, profile);
    collection.check_resolution(l)?;
    let mut acc = vec![0.0; shape.len()];
    for (i, parts) in leading_partials(g, collection, lattice, &bank)? {
        let mut best = vec![0.0f64; n];
        for p in &parts {
            for (b, v) in best.iter_mut().zip(inner(p)) {
                *b = b.max(v * v);
            }
        }
        for x in i.cell_range(l) {
            acc[x * n..(x + 1) * n].iter_mut().zip(&best).for_each(|(a, b)| *a += b);
        }
    }
    Ok(real_grid(shape, acc.into_iter().map(f64::sqrt).collect()))
}

/// `(sum_I chi_I(x) sup_shift |g_I(y)|^2)^{1/2}` over the axis-0 intervals of the collection.
pub fn vector_square(
    g: &GridFunction,
    collection: &RectangleCollection,
    lattice: ShiftLattice,
    profile: BumpProfile,
) -> Result<GridFunction> {
    vector_function(g, collection, lattice, profile, |p| p.iter().map(|z| z.norm()).collect())
}

/// `(sum_I chi_I(x) sup_shift (M_y g_I)(y)^2)^{1/2}`: the vector-valued maximal function of the
/// same partial contractions.
pub fn vector_maximal(
    g: &GridFunction,
    collection: &RectangleCollection,
    lattice: ShiftLattice,
    profile: BumpProfile,
) -> Result<GridFunction> {
    let l = g.log_resolution();
    vector_function(g, collection, lattice, profile, |p| {
        let line = GridFunction::new(1, l, p.to_vec()).expect("line has N samples");
        hl_maximal(&line).real_parts()
    })
}
