//! Dyadic intervals `2^k [n, n+1)`, their shifted and dilated real realizations,
//! and finite rectangle collections.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::wrap_centered;

/// A closed real interval stored as `(left, length)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealInterval {
    pub left: f64,
    pub length: f64,
}

impl RealInterval {
    pub fn new(left: f64, right: f64) -> Result<Self> {
        if !(left.is_finite() && right.is_finite()) || right <= left {
            return Err(Error::InvalidParameter(format!("interval [{left}, {right}] is empty")));
        }
        Ok(Self { left, length: right - left })
    }

    pub fn right(&self) -> f64 {
        self.left + self.length
    }

    pub fn center(&self) -> f64 {
        self.left + 0.5 * self.length
    }

    /// The interval with the same center and length `2^k |J|`.
    pub fn dilate(&self, k: u32) -> RealInterval {
        let length = self.length * 2f64.powi(k as i32);
        RealInterval { left: self.center() - 0.5 * length, length }
    }

    /// Offset of `x` from the center, reduced periodically into `[-1/2, 1/2)`.
    pub fn periodic_offset(&self, x: f64) -> f64 {
        wrap_centered(x - self.center())
    }

    /// Periodic distance from `x` to the interval (0 inside).
    pub fn periodic_distance(&self, x: f64) -> f64 {
        (self.periodic_offset(x).abs() - 0.5 * self.length).max(0.0)
    }
}

impl fmt::Display for RealInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.left, self.right())
    }
}

impl FromStr for RealInterval {
    type Err = Error;

    /// Parses `a,b`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("expected `a,b`, found `{s}`")))?;
        let parse = |v: &str| {
            v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("interval endpoint `{v}`: {e}")))
        };
        RealInterval::new(parse(a)?, parse(b)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftParams {
    pub lambda: f64,
    pub t: f64,
}

impl ShiftParams {
    pub const ZERO: ShiftParams = ShiftParams { lambda: 0.0, t: 0.0 };

    pub fn new(lambda: f64, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) || !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "shift parameters ({lambda}, {t}) must lie in [0,1]"
            )));
        }
        Ok(Self { lambda, t })
    }

    pub fn is_zero(&self) -> bool {
        self.lambda == 0.0 && self.t == 0.0
    }
}

/// Evenly spaced values `i/(n-1)`, `i = 0..n`, for both `lambda` and `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftLattice {
    pub size: usize,
}

impl Default for ShiftLattice {
    fn default() -> Self {
        Self { size: 5 }
    }
}

impl ShiftLattice {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidParameter("shift lattice needs at least one point".into()));
        }
        Ok(Self { size })
    }

    /// Lattice containing only `(0, 0)`.
    pub fn trivial() -> Self {
        Self { size: 1 }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.size == 1 {
            return vec![0.0];
        }
        let m = (self.size - 1) as f64;
        (0..self.size).map(|i| i as f64 / m).collect()
    }

    /// All `(lambda, t)` pairs, `lambda` varying slowest.
    pub fn points(&self) -> Vec<ShiftParams> {
        let v = self.values();
        v.iter()
            .flat_map(|&lambda| v.iter().map(move |&t| ShiftParams { lambda, t }))
            .collect()
    }
}

/// `2^scale [position, position + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub scale: i32,
    pub position: i64,
}

impl DyadicInterval {
    /// An interval inside `[0,1)`: requires `scale <= 0` and `0 <= position < 2^{-scale}`.
    pub fn new(scale: i32, position: i64) -> Result<Self> {
        if !(-62..=0).contains(&scale) {
            return Err(Error::InvalidParameter(format!("scale {scale} outside [-62, 0]")));
        }
        if position < 0 || position >= 1i64 << (-scale) {
            return Err(Error::InvalidParameter(format!(
                "position {position} outside [0, 2^{}) at scale {scale}",
                -scale
            )));
        }
        Ok(Self { scale, position })
    }

    pub fn unit() -> Self {
        Self { scale: 0, position: 0 }
    }

    /// Checks that the interval is resolved by a grid with `2^log_resolution` cells.
    pub fn check_resolution(&self, log_resolution: u32) -> Result<()> {
        if self.scale < -(log_resolution as i32) {
            return Err(Error::InvalidParameter(format!(
                "scale {} finer than the grid (L = {log_resolution})",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        2f64.powi(self.scale)
    }

    pub fn left(&self) -> f64 {
        self.position as f64 * self.length()
    }

    pub fn realize(&self) -> RealInterval {
        RealInterval { left: self.left(), length: self.length() }
    }

    /// `2^{k+lambda} [n+t, n+t+1]`.
    pub fn realize_shifted(&self, s: ShiftParams) -> RealInterval {
        let length = 2f64.powf(self.scale as f64 + s.lambda);
        RealInterval { left: length * (self.position as f64 + s.t), length }
    }

    /// Half-open range of grid cells covered at `2^log_resolution` cells per axis.
    pub fn cell_range(&self, log_resolution: u32) -> std::ops::Range<usize> {
        let width = 1usize << (log_resolution as i32 + self.scale);
        let start = self.position as usize * width;
        start..start + width
    }

    pub fn contains(&self, other: &DyadicInterval) -> bool {
        other.scale <= self.scale
            && (other.position >> (self.scale - other.scale)) == self.position
    }

    pub fn is_disjoint(&self, other: &DyadicInterval) -> bool {
        !self.contains(other) && !other.contains(self)
    }

    pub fn parent(&self) -> Option<DyadicInterval> {
        (self.scale < 0).then(|| DyadicInterval { scale: self.scale + 1, position: self.position >> 1 })
    }

    pub fn children(&self) -> [DyadicInterval; 2] {
        let scale = self.scale - 1;
        [
            DyadicInterval { scale, position: 2 * self.position },
            DyadicInterval { scale, position: 2 * self.position + 1 },
        ]
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.scale, self.position)
    }
}

impl FromStr for DyadicInterval {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (k, n) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected `k:n`, found `{s}`")))?;
        let k = k.trim().parse().map_err(|e| Error::Parse(format!("scale `{k}`: {e}")))?;
        let n = n.trim().parse().map_err(|e| Error::Parse(format!("position `{n}`: {e}")))?;
        DyadicInterval::new(k, n)
    }
}

/// Product of one dyadic interval per axis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicRectangle {
    pub axes: Vec<DyadicInterval>,
}

impl DyadicRectangle {
    pub fn new(axes: Vec<DyadicInterval>) -> Result<Self> {
        if axes.is_empty() || axes.len() > crate::grid::MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "rectangle needs 1..=3 axes, found {}",
                axes.len()
            )));
        }
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn measure(&self) -> f64 {
        2f64.powi(self.axes.iter().map(|a| a.scale).sum())
    }

    pub fn scales(&self) -> impl Iterator<Item = i32> + '_ {
        self.axes.iter().map(|a| a.scale)
    }

    pub fn contains(&self, other: &DyadicRectangle) -> bool {
        self.dim() == other.dim() && self.axes.iter().zip(&other.axes).all(|(a, b)| a.contains(b))
    }

    pub fn check_resolution(&self, log_resolution: u32) -> Result<()> {
        self.axes.iter().try_for_each(|a| a.check_resolution(log_resolution))
    }

    /// Linear indices of the grid cells covered by the rectangle.
    pub fn cells(&self, log_resolution: u32) -> Vec<usize> {
        let n = 1usize << log_resolution;
        let mut out = vec![0usize];
        for axis in &self.axes {
            let range = axis.cell_range(log_resolution);
            out = out
                .iter()
                .flat_map(|&base| range.clone().map(move |i| base * n + i))
                .collect();
        }
        out
    }
}

impl Ord for DyadicRectangle {
    fn cmp(&self, other: &Self) -> Ordering {
        self.scales()
            .cmp(other.scales())
            .then_with(|| self.axes.iter().map(|a| a.position).cmp(other.axes.iter().map(|a| a.position)))
    }
}

impl PartialOrd for DyadicRectangle {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for DyadicRectangle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.axes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl FromStr for DyadicRectangle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let axes = s.split(',').map(str::parse).collect::<Result<Vec<DyadicInterval>>>()?;
        DyadicRectangle::new(axes)
    }
}

/// A finite, duplicate-free, sorted set of rectangles of a common dimension.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectangleCollection {
    dim: usize,
    rects: Vec<DyadicRectangle>,
}

impl RectangleCollection {
    pub fn empty(dim: usize) -> Self {
        Self { dim, rects: Vec::new() }
    }

    /// Rejects duplicates and dimension mismatches; the result is sorted.
    pub fn new(dim: usize, mut rects: Vec<DyadicRectangle>) -> Result<Self> {
        if let Some(r) = rects.iter().find(|r| r.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: r.dim() });
        }
        rects.sort();
        if let Some(w) = rects.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!("duplicate rectangle {}", w[0])));
        }
        Ok(Self { dim, rects })
    }

    /// Like [`RectangleCollection::new`] but silently drops duplicates.
    pub fn from_iter_dedup(dim: usize, rects: impl IntoIterator<Item = DyadicRectangle>) -> Result<Self> {
        let mut rects: Vec<_> = rects.into_iter().collect();
        rects.sort();
        rects.dedup();
        Self::new(dim, rects)
    }

    /// Every rectangle whose per-axis scales lie in `[scale_min, scale_max]` and which passes `filter`.
    pub fn enumerate(
        dim: usize,
        log_resolution: u32,
        scale_range: (i32, i32),
        filter: impl Fn(&DyadicRectangle) -> bool,
    ) -> Result<Self> {
        let (lo, hi) = scale_range;
        let l = log_resolution as i32;
        if dim == 0 || dim > crate::grid::MAX_DIM {
            return Err(Error::InvalidParameter(format!("dimension {dim} outside 1..=3")));
        }
        if lo > hi || lo < -l || hi > 0 {
            return Err(Error::InvalidParameter(format!(
                "scale range [{lo}, {hi}] not within [-{l}, 0]"
            )));
        }
        let intervals: Vec<DyadicInterval> = (lo..=hi)
            .flat_map(|k| (0..1i64 << (-k)).map(move |n| DyadicInterval { scale: k, position: n }))
            .collect();
        let mut rects = vec![Vec::new()];
        for _ in 0..dim {
            rects = rects
                .into_iter()
                .flat_map(|prefix: Vec<DyadicInterval>| {
                    intervals.iter().map(move |&i| {
                        let mut v = prefix.clone();
                        v.push(i);
                        v
                    })
                })
                .collect();
        }
        let rects = rects
            .into_iter()
            .map(|axes| DyadicRectangle { axes })
            .filter(|r| filter(r))
            .collect();
        Self::new(dim, rects)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    pub fn rects(&self) -> &[DyadicRectangle] {
        &self.rects
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DyadicRectangle> {
        self.rects.iter()
    }

    pub fn contains(&self, r: &DyadicRectangle) -> bool {
        self.rects.binary_search(r).is_ok()
    }

    pub fn is_subset(&self, other: &RectangleCollection) -> bool {
        self.rects.iter().all(|r| other.contains(r))
    }

    pub fn filter(&self, keep: impl Fn(&DyadicRectangle) -> bool) -> RectangleCollection {
        Self { dim: self.dim, rects: self.rects.iter().filter(|r| keep(r)).cloned().collect() }
    }

    pub fn check_resolution(&self, log_resolution: u32) -> Result<()> {
        self.rects.iter().try_for_each(|r| r.check_resolution(log_resolution))
    }

    /// One rectangle per line in `k1:n1,k2:n2` form.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.rects {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }

    /// Parses [`RectangleCollection::to_lines`] output; blank lines and `#` comments are skipped.
    pub fn parse_lines(text: &str) -> Result<Self> {
        let rects = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::parse)
            .collect::<Result<Vec<DyadicRectangle>>>()?;
        let dim = rects
            .first()
            .map(DyadicRectangle::dim)
            .ok_or_else(|| Error::Parse("collection file has no rectangles".into()))?;
        Self::new(dim, rects)
    }
}

impl<'a> IntoIterator for &'a RectangleCollection {
    type Item = &'a DyadicRectangle;
    type IntoIter = std::slice::Iter<'a, DyadicRectangle>;

    fn into_iter(self) -> Self::IntoIter {
        self.rects.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn di(k: i32, n: i64) -> DyadicInterval {
        DyadicInterval::new(k, n).unwrap()
    }

    #[test]
    fn realize_shifted_examples() {
        // position 3 at scale 0 lies outside [0,1), so build it directly.
        let i = DyadicInterval { scale: 0, position: 3 };
        assert_eq!(i.realize_shifted(ShiftParams::ZERO), RealInterval { left: 3.0, length: 1.0 });
        let s = ShiftParams::new(1.0, 0.0).unwrap();
        assert_eq!(i.realize_shifted(s), RealInterval { left: 6.0, length: 2.0 });
        let s = ShiftParams::new(0.0, 0.5).unwrap();
        assert_eq!(di(-1, 0).realize_shifted(s), RealInterval { left: 0.25, length: 0.5 });
    }

    #[test]
    fn dilate_examples() {
        let unit = RealInterval::new(0.0, 1.0).unwrap();
        assert_eq!(unit.dilate(0), unit);
        assert_eq!(unit.dilate(1), RealInterval::new(-0.5, 1.5).unwrap());
        let j = RealInterval::new(0.25, 0.5).unwrap();
        let d = j.dilate(2);
        assert_eq!((d.left, d.right()), (-0.125, 0.875));
    }

    #[test]
    fn enumerate_counts() {
        let c = RectangleCollection::enumerate(1, 2, (-1, -1), |_| true).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.rects()[0].axes[0].realize(), RealInterval { left: 0.0, length: 0.5 });
        assert_eq!(RectangleCollection::enumerate(2, 2, (-1, -1), |_| true).unwrap().len(), 4);
        assert_eq!(RectangleCollection::enumerate(2, 3, (-3, -1), |_| true).unwrap().len(), 196);
        assert!(RectangleCollection::enumerate(2, 3, (-4, -1), |_| true).is_err());
    }

    #[test]
    fn ordering_is_scales_then_positions() {
        let c = RectangleCollection::enumerate(2, 2, (-2, -1), |_| true).unwrap();
        for w in c.rects().windows(2) {
            let a: Vec<i32> = w[0].scales().collect();
            let b: Vec<i32> = w[1].scales().collect();
            assert!(a <= b);
        }
        assert_eq!(c.rects()[0].to_string(), "-2:0,-2:0");
    }

    #[test]
    fn duplicates_rejected() {
        let r: DyadicRectangle = "-1:0,-2:3".parse().unwrap();
        assert!(RectangleCollection::new(2, vec![r.clone(), r.clone()]).is_err());
        assert_eq!(RectangleCollection::from_iter_dedup(2, vec![r.clone(), r]).unwrap().len(), 1);
    }

    #[test]
    fn nesting_is_exhaustive() {
        let all: Vec<DyadicInterval> =
            (-6..=0).flat_map(|k| (0..1i64 << -k).map(move |n| di(k, n))).collect();
        for a in &all {
            for b in &all {
                let ra = a.realize();
                let rb = b.realize();
                let overlap = ra.left.max(rb.left) < ra.right().min(rb.right());
                assert_eq!(overlap, !a.is_disjoint(b), "{a} {b}");
                if overlap {
                    assert!(a.contains(b) || b.contains(a));
                }
            }
        }
    }

    #[test]
    fn cells_match_realization() {
        let r: DyadicRectangle = "-1:1,-2:2".parse().unwrap();
        let cells = r.cells(3);
        assert_eq!(cells.len(), 8);
        assert!(cells.contains(&(4 * 8 + 4)));
        assert!(cells.contains(&(7 * 8 + 5)));
        assert!(!cells.contains(&(3 * 8 + 4)));
    }

    #[test]
    fn lines_round_trip() {
        let c = RectangleCollection::enumerate(2, 3, (-2, -1), |r| r.axes[0].position == 0).unwrap();
        assert_eq!(RectangleCollection::parse_lines(&c.to_lines()).unwrap(), c);
    }

    #[test]
    fn lattice_points() {
        let l = ShiftLattice::default();
        assert_eq!(l.values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(l.points().len(), 25);
        assert_eq!(ShiftLattice::trivial().points(), vec![ShiftParams::ZERO]);
        assert!(ShiftParams::new(1.5, 0.0).is_err());
    }
}
