//! Tensor-product bump machinery shared by the paraproduct and hybrid operators.
//!
//! A rectangle bump `Phi_R = phi_0 (x) phi_1 (x) ...` is stored as one sparse window per axis.
//! Pairings `<f, Phi_R>` are computed by contracting the leading axis first; rectangles sharing
//! their leading intervals share the partial contractions, which is what keeps full collections
//! at `L = 8` cheap.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bump::{decompose_mean_zero, decompose_plain, sample_axis_bump, AdaptedBump, BumpProfile};
use crate::dyadic::{DyadicInterval, DyadicRectangle, ShiftParams};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridShape};

/// Number of independent accumulators used by [`synthesize`]; fixed so that the summation order
/// does not depend on the thread count.
const REDUCTION_CHUNKS: usize = 8;

/// Values of a periodic 1-d function on a circular window `start, start+1, ...` (mod `n`).
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAxis {
    n: usize,
    start: usize,
    values: Vec<f64>,
}

impl SparseAxis {
    /// Smallest circular window containing every nonzero entry.
    pub fn from_dense(dense: &[f64]) -> Self {
        let n = dense.len();
        let nonzero: Vec<usize> = (0..n).filter(|&i| dense[i] != 0.0).collect();
        let Some(&last) = nonzero.last() else {
            return Self { n, start: 0, values: Vec::new() };
        };
        // the window starts right after the longest circular run of zeros
        let mut best_gap = n - 1 - last + nonzero[0];
        let mut start = nonzero[0];
        for w in nonzero.windows(2) {
            let gap = w[1] - w[0] - 1;
            if gap > best_gap {
                best_gap = gap;
                start = w[1];
            }
        }
        let len = n - best_gap;
        let values = (0..len).map(|j| dense[(start + j) % n]).collect();
        Self { n, start, values }
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(grid index, value)` pairs of the window.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let n = self.n;
        let start = self.start;
        self.values.iter().enumerate().map(move |(j, &v)| ((start + j) % n, v))
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// `g(rest) = N^{-1} sum_i src(i, rest) phi(i)`: contraction of the slowest axis.
pub fn contract_leading(src: &[Complex64], bump: &SparseAxis) -> Vec<Complex64> {
    let n = bump.n;
    let stride = src.len() / n;
    let inv = 1.0 / n as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); stride];
    for (i, v) in bump.iter() {
        let w = v * inv;
        let row = &src[i * stride..(i + 1) * stride];
        for (o, x) in out.iter_mut().zip(row) {
            *o += x * w;
        }
    }
    out
}

/// `N^{-1} sum_i src(i) phi(i)` for a one-axis `src`; the window is split into its two
/// contiguous pieces instead of wrapping per index.
fn dot_window(src: &[Complex64], bump: &SparseAxis) -> Complex64 {
    let n = bump.n;
    let head = (n - bump.start).min(bump.values.len());
    let (a, b) = bump.values.split_at(head);
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, &v) in src[bump.start..bump.start + head].iter().zip(a) {
        acc += x * v;
    }
    for (x, &v) in src[..b.len()].iter().zip(b) {
        acc += x * v;
    }
    acc / n as f64
}

/// Rectangles grouped by their interval on each successive axis.
#[derive(Clone, Debug)]
pub enum Trie {
    Leaf(usize),
    Node(Vec<(DyadicInterval, Trie)>),
}

impl Trie {
    pub fn build(rects: &[DyadicRectangle]) -> Vec<(DyadicInterval, Trie)> {
        let idx: Vec<usize> = (0..rects.len()).collect();
        Self::group(rects, &idx, 0)
    }

    fn group(rects: &[DyadicRectangle], idx: &[usize], axis: usize) -> Vec<(DyadicInterval, Trie)> {
        let mut groups: BTreeMap<DyadicInterval, Vec<usize>> = BTreeMap::new();
        for &i in idx {
            groups.entry(rects[i].axes[axis]).or_default().push(i);
        }
        groups
            .into_iter()
            .map(|(interval, members)| {
                let child = if axis + 1 == rects[members[0]].dim() {
                    Trie::Leaf(members[0])
                } else {
                    Trie::Node(Self::group(rects, &members, axis + 1))
                };
                (interval, child)
            })
            .collect()
    }
}

/// Supplies the candidate bumps for one axis interval (several when a supremum is taken).
pub trait AxisBumps: Sync {
    fn variants(&self, axis: usize, interval: &DyadicInterval) -> Result<Vec<Arc<SparseAxis>>>;
}

impl<F> AxisBumps for F
where
    F: Fn(usize, &DyadicInterval) -> Result<Vec<Arc<SparseAxis>>> + Sync,
{
    fn variants(&self, axis: usize, interval: &DyadicInterval) -> Result<Vec<Arc<SparseAxis>>> {
        self(axis, interval)
    }
}

fn descend<T: Send>(
    partials: &[Vec<Complex64>],
    children: &[(DyadicInterval, Trie)],
    axis: usize,
    bumps: &dyn AxisBumps,
    reduce: &(dyn Fn(usize, &[Complex64]) -> T + Sync),
    out: &mut Vec<(usize, T)>,
) -> Result<()> {
    for (interval, child) in children {
        let variants = bumps.variants(axis, interval)?;
        if let Trie::Leaf(r) = child {
            if partials.first().is_some_and(|p| p.len() == variants[0].n) {
                let scalars: Vec<Complex64> =
                    partials.iter().flat_map(|p| variants.iter().map(move |v| dot_window(p, v))).collect();
                out.push((*r, reduce(*r, &scalars)));
                continue;
            }
        }
        let next: Vec<Vec<Complex64>> = partials
            .iter()
            .flat_map(|p| variants.iter().map(move |v| contract_leading(p, v)))
            .collect();
        match child {
            Trie::Leaf(r) => {
                let scalars: Vec<Complex64> = next.iter().map(|v| v[0]).collect();
                out.push((*r, reduce(*r, &scalars)));
            }
            Trie::Node(grand) => descend(&next, grand, axis + 1, bumps, reduce, out)?,
        }
    }
    Ok(())
}

/// For each rectangle, the pairings `<f, Phi_R>` over every combination of per-axis variants
/// (axis 0 varying slowest), passed to `reduce` together with the rectangle index.
pub fn pairings_map<T: Send>(
    f: &GridFunction,
    rects: &[DyadicRectangle],
    bumps: &dyn AxisBumps,
    reduce: &(dyn Fn(usize, &[Complex64]) -> T + Sync),
) -> Result<Vec<T>> {
    if let Some(r) = rects.iter().find(|r| r.dim() != f.dim()) {
        return Err(Error::DimensionMismatch { expected: f.dim(), found: r.dim() });
    }
    let trie = Trie::build(rects);
    let root = vec![f.samples().to_vec()];
    let parts: Vec<Vec<(usize, T)>> = trie
        .par_iter()
        .map(|group| {
            let mut out = Vec::new();
            descend(&root, std::slice::from_ref(group), 0, bumps, reduce, &mut out)?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut slots: Vec<Option<T>> = (0..rects.len()).map(|_| None).collect();
    for (r, v) in parts.into_iter().flatten() {
        slots[r] = Some(v);
    }
    Ok(slots.into_iter().map(|v| v.expect("every rectangle is a trie leaf")).collect())
}

/// `<f, Phi_R>` with a single bump per axis.
pub fn pairings(f: &GridFunction, rects: &[DyadicRectangle], bumps: &dyn AxisBumps) -> Result<Vec<Complex64>> {
    pairings_map(f, rects, bumps, &|_, c| c[0])
}

fn accumulate(
    out: &mut [Complex64],
    children: &[(DyadicInterval, Trie)],
    axis: usize,
    n: usize,
    coeffs: &[Complex64],
    bumps: &dyn AxisBumps,
) -> Result<()> {
    let stride = out.len() / n;
    for (interval, child) in children {
        let phi = bumps.variants(axis, interval)?.swap_remove(0);
        let inner = match child {
            Trie::Leaf(r) => vec![coeffs[*r]],
            Trie::Node(grand) => {
                let mut g = vec![Complex64::new(0.0, 0.0); stride];
                accumulate(&mut g, grand, axis + 1, n, coeffs, bumps)?;
                g
            }
        };
        for (i, v) in phi.iter() {
            let row = &mut out[i * stride..(i + 1) * stride];
            for (o, x) in row.iter_mut().zip(&inner) {
                *o += x * v;
            }
        }
    }
    Ok(())
}

/// Pairwise tree sum of equally sized buffers.
pub(crate) fn tree_sum(mut parts: Vec<Vec<Complex64>>) -> Vec<Complex64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// `sum_R coeffs[R] Phi_R` on the grid, using the first variant of each axis bump.
pub fn synthesize(
    shape: GridShape,
    rects: &[DyadicRectangle],
    coeffs: &[Complex64],
    bumps: &dyn AxisBumps,
) -> Result<GridFunction> {
    if let Some(r) = rects.iter().find(|r| r.dim() != shape.dim) {
        return Err(Error::DimensionMismatch { expected: shape.dim, found: r.dim() });
    }
    let trie = Trie::build(rects);
    let n = shape.side();
    let chunk = trie.len().div_ceil(REDUCTION_CHUNKS).max(1);
    let parts: Vec<Vec<Complex64>> = trie
        .par_chunks(chunk)
        .map(|groups| {
            let mut out = vec![Complex64::new(0.0, 0.0); shape.len()];
            accumulate(&mut out, groups, 0, n, coeffs, bumps)?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut parts = parts;
    if parts.is_empty() {
        parts.push(vec![Complex64::new(0.0, 0.0); shape.len()]);
    }
    Ok(GridFunction::from_shape(shape, tree_sum(parts)))
}

/// Parameters of the lemma decomposition applied to axis bumps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LemmaConfig {
    pub decay_exponent: u32,
    pub term_count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct BumpKey {
    interval: DyadicInterval,
    lambda: u64,
    t: u64,
    cancellation: bool,
}

impl BumpKey {
    fn new(interval: DyadicInterval, shift: ShiftParams, cancellation: bool) -> Self {
        Self { interval, lambda: shift.lambda.to_bits(), t: shift.t.to_bits(), cancellation }
    }
}

/// Cache of L^2-normalized axis bumps (and optionally their lemma terms) at one resolution.
#[derive(Debug)]
pub struct BumpBank {
    log_resolution: u32,
    profile: BumpProfile,
    lemma: Option<LemmaConfig>,
    bumps: RwLock<HashMap<BumpKey, Arc<SparseAxis>>>,
    terms: RwLock<HashMap<BumpKey, Arc<Vec<Arc<SparseAxis>>>>>,
}

impl BumpBank {
    pub fn new(log_resolution: u32, profile: BumpProfile) -> Self {
        Self {
            log_resolution,
            profile,
            lemma: None,
            bumps: RwLock::new(HashMap::new()),
            terms: RwLock::new(HashMap::new()),
        }
    }

    pub fn with_lemma(mut self, lemma: LemmaConfig) -> Self {
        self.lemma = Some(lemma);
        self
    }

    pub fn log_resolution(&self) -> u32 {
        self.log_resolution
    }

    pub fn profile(&self) -> &BumpProfile {
        &self.profile
    }

    pub fn lemma(&self) -> Option<LemmaConfig> {
        self.lemma
    }

    /// The bump adapted to `interval` realized with `shift`.
    pub fn get(&self, interval: &DyadicInterval, shift: ShiftParams, cancellation: bool) -> Result<Arc<SparseAxis>> {
        let key = BumpKey::new(*interval, shift, cancellation);
        if let Some(b) = self.bumps.read().expect("bump cache poisoned").get(&key) {
            return Ok(b.clone());
        }
        interval.check_resolution(self.log_resolution)?;
        let dense = sample_axis_bump(
            interval.realize_shifted(shift),
            &self.profile,
            cancellation,
            true,
            self.log_resolution,
        )?;
        let b = Arc::new(SparseAxis::from_dense(&dense));
        self.bumps.write().expect("bump cache poisoned").insert(key, b.clone());
        Ok(b)
    }

    /// Term `k` of the lemma decomposition of [`BumpBank::get`]'s bump: the mean-preserving
    /// variant when the bump carries cancellation, the telescoping one otherwise.
    pub fn lemma_term(
        &self,
        interval: &DyadicInterval,
        shift: ShiftParams,
        cancellation: bool,
        k: u32,
    ) -> Result<Arc<SparseAxis>> {
        let lemma = self
            .lemma
            .ok_or_else(|| Error::InvalidParameter("bump bank has no lemma configuration".into()))?;
        if k > lemma.term_count {
            return Err(Error::InvalidParameter(format!(
                "lemma term {k} beyond configured count {}",
                lemma.term_count
            )));
        }
        let key = BumpKey::new(*interval, shift, cancellation);
        if let Some(t) = self.terms.read().expect("bump cache poisoned").get(&key) {
            return Ok(t[k as usize].clone());
        }
        let realized = interval.realize_shifted(shift);
        let bump = AdaptedBump::build(realized, self.profile, cancellation, true, self.log_resolution)?;
        let d = if cancellation {
            decompose_mean_zero(&bump, lemma.decay_exponent, lemma.term_count)?
        } else {
            decompose_plain(&bump, lemma.decay_exponent, lemma.term_count)?
        };
        let terms: Vec<Arc<SparseAxis>> = d
            .terms
            .iter()
            .map(|t| Arc::new(SparseAxis::from_dense(&t.samples.real_parts())))
            .collect();
        let out = terms[k as usize].clone();
        self.terms.write().expect("bump cache poisoned").insert(key, Arc::new(terms));
        Ok(out)
    }

    /// Residual `R^N` of the lemma decomposition.
    pub fn lemma_residual(
        &self,
        interval: &DyadicInterval,
        shift: ShiftParams,
        cancellation: bool,
    ) -> Result<Arc<SparseAxis>> {
        let lemma = self
            .lemma
            .ok_or_else(|| Error::InvalidParameter("bump bank has no lemma configuration".into()))?;
        let realized = interval.realize_shifted(shift);
        let bump = AdaptedBump::build(realized, self.profile, cancellation, true, self.log_resolution)?;
        let d = if cancellation {
            decompose_mean_zero(&bump, lemma.decay_exponent, lemma.term_count)?
        } else {
            decompose_plain(&bump, lemma.decay_exponent, lemma.term_count)?
        };
        Ok(Arc::new(SparseAxis::from_dense(&d.residual().real_parts())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::RectangleCollection;

    #[test]
    fn sparse_window_round_trip() {
        let mut dense = vec![0.0; 16];
        dense[14] = 1.0;
        dense[15] = 2.0;
        dense[1] = 3.0;
        let s = SparseAxis::from_dense(&dense);
        assert_eq!(s.start(), 14);
        assert_eq!(s.len(), 4);
        assert_eq!(s.to_dense(), dense);
        assert!(SparseAxis::from_dense(&[0.0; 8]).is_empty());
        let full = SparseAxis::from_dense(&[1.0; 8]);
        assert_eq!(full.len(), 8);
    }

    #[test]
    fn pairings_match_dense_sum() {
        let l = 4;
        let bank = BumpBank::new(l, BumpProfile::default());
        let f = GridFunction::from_fn(2, l, |x| Complex64::new(x[0] * x[0] - x[1], x[0] * x[1])).unwrap();
        let c = RectangleCollection::enumerate(2, l, (-2, 0), |_| true).unwrap();
        let shift = ShiftParams::new(0.5, 0.25).unwrap();
        let provider = |axis: usize, i: &DyadicInterval| Ok(vec![bank.get(i, shift, axis == 1)?]);
        let got = pairings(&f, c.rects(), &provider).unwrap();
        let n = 16;
        for (r, g) in c.iter().zip(&got) {
            let a = bank.get(&r.axes[0], shift, false).unwrap().to_dense();
            let b = bank.get(&r.axes[1], shift, true).unwrap().to_dense();
            let mut want = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    want += f.samples()[i * n + j] * a[i] * b[j];
                }
            }
            want /= (n * n) as f64;
            assert!((want - g).norm() < 1e-13);
        }
        let synth = synthesize(f.shape(), c.rects(), &got, &provider).unwrap();
        let mut dense = vec![Complex64::new(0.0, 0.0); n * n];
        for (r, g) in c.iter().zip(&got) {
            let a = bank.get(&r.axes[0], shift, false).unwrap().to_dense();
            let b = bank.get(&r.axes[1], shift, true).unwrap().to_dense();
            for i in 0..n {
                for j in 0..n {
                    dense[i * n + j] += g * a[i] * b[j];
                }
            }
        }
        let dense = GridFunction::from_shape(f.shape(), dense);
        assert!(synth.max_abs_diff(&dense).unwrap() < 1e-12);
    }

    #[test]
    fn lemma_terms_rebuild_the_bump() {
        let bank = BumpBank::new(8, BumpProfile::default())
            .with_lemma(LemmaConfig { decay_exponent: 12, term_count: 4 });
        let i = DyadicInterval::new(-3, 5).unwrap();
        for cancellation in [false, true] {
            let shift = ShiftParams::new(0.25, 0.75).unwrap();
            let full = bank.get(&i, shift, cancellation).unwrap().to_dense();
            let mut acc = bank.lemma_residual(&i, shift, cancellation).unwrap().to_dense();
            for k in 0..=4 {
                let t = bank.lemma_term(&i, shift, cancellation, k).unwrap().to_dense();
                for (a, v) in acc.iter_mut().zip(t) {
                    *a += v * 2f64.powi(-12 * k as i32);
                }
            }
            for (a, b) in acc.iter().zip(full) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
