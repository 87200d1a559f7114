//! Adapted bumps on one axis, the smooth cutoff `psi`, and the two decompositions of a bump
//! into pieces supported on the dilates `2^k J`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dyadic::RealInterval;
use crate::error::{Error, Result};
use crate::grid::{wrap_centered, GridFunction};

/// Gaussian width relative to the interval length.
const GAUSSIAN_WIDTHS_PER_INTERVAL: f64 = 6.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    #[default]
    GaussianLike,
    CompactSmooth,
    MeanZeroWavelet,
}

impl std::str::FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "gaussian_like" | "gaussian" => Ok(Self::GaussianLike),
            "compact_smooth" | "compact" => Ok(Self::CompactSmooth),
            "mean_zero_wavelet" | "wavelet" => Ok(Self::MeanZeroWavelet),
            other => Err(Error::Parse(format!("unknown bump profile `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BumpProfile {
    pub kind: ProfileKind,
    /// Largest decay exponent `alpha` checked by [`verify_adapted`].
    pub decay_order: u32,
    /// Largest derivative order `l` checked by [`verify_adapted`].
    pub smoothness_order: u32,
}

impl BumpProfile {
    pub fn new(kind: ProfileKind, decay_order: u32, smoothness_order: u32) -> Result<Self> {
        if decay_order < 2 || smoothness_order < 1 {
            return Err(Error::InvalidParameter(format!(
                "bump profile needs decay order >= 2 and smoothness order >= 1, got {decay_order}, {smoothness_order}"
            )));
        }
        Ok(Self { kind, decay_order, smoothness_order })
    }

    pub fn of_kind(kind: ProfileKind) -> Self {
        Self { kind, decay_order: 4, smoothness_order: 2 }
    }

    /// Half-width of the support of the (truncated) profile for an interval of length `len`.
    pub fn support_radius(&self, len: f64) -> f64 {
        match self.kind {
            ProfileKind::CompactSmooth => 0.5 * len,
            ProfileKind::GaussianLike | ProfileKind::MeanZeroWavelet => {
                let sigma = len / GAUSSIAN_WIDTHS_PER_INTERVAL;
                sigma * (2.0 * (1.0 / f64::EPSILON).ln()).sqrt()
            }
        }
    }

    /// Positive envelope at offset `u` from the center.
    fn envelope(&self, u: f64, len: f64) -> f64 {
        match self.kind {
            ProfileKind::CompactSmooth => {
                let s = 2.0 * u / len;
                if s.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
            ProfileKind::GaussianLike | ProfileKind::MeanZeroWavelet => {
                let sigma = len / GAUSSIAN_WIDTHS_PER_INTERVAL;
                let v = (-(u * u) / (2.0 * sigma * sigma)).exp();
                if v < f64::EPSILON {
                    0.0
                } else {
                    v
                }
            }
        }
    }

    /// Odd shape: the derivative of the envelope up to a positive factor.
    fn odd_shape(&self, u: f64, len: f64) -> f64 {
        let env = self.envelope(u, len);
        if env == 0.0 {
            return 0.0;
        }
        match self.kind {
            ProfileKind::CompactSmooth => {
                let s = 2.0 * u / len;
                let d = 1.0 - s * s;
                -env * s / (d * d)
            }
            ProfileKind::GaussianLike | ProfileKind::MeanZeroWavelet => {
                let sigma = len / GAUSSIAN_WIDTHS_PER_INTERVAL;
                -env * u / sigma
            }
        }
    }
}

impl Default for BumpProfile {
    fn default() -> Self {
        Self::of_kind(ProfileKind::GaussianLike)
    }
}

/// Sample a bump adapted to `interval` on the 1-d grid of `2^log_resolution` points.
///
/// Periodic images are summed. With `cancellation` (or for the wavelet profile) the odd shape is
/// used and its grid mean is removed exactly against the envelope. With `normalized` the grid
/// `L^2` norm is 1; otherwise the profile is left at unit height.
pub fn sample_axis_bump(
    interval: RealInterval,
    profile: &BumpProfile,
    cancellation: bool,
    normalized: bool,
    log_resolution: u32,
) -> Result<Vec<f64>> {
    let n = 1usize << log_resolution;
    let h = 1.0 / n as f64;
    let len = interval.length;
    let c = interval.center();
    let radius = profile.support_radius(len);
    let odd = cancellation || profile.kind == ProfileKind::MeanZeroWavelet;

    let mut values = vec![0.0; n];
    let mut envelope = vec![0.0; n];
    // integer grid positions j with |j h - c - m| <= radius for some image m
    let lo = ((c - radius) / h).ceil() as i64;
    let hi = ((c + radius) / h).floor() as i64;
    for j in lo..=hi {
        let u = j as f64 * h - c;
        let idx = j.rem_euclid(n as i64) as usize;
        envelope[idx] += profile.envelope(u, len);
        values[idx] += if odd { profile.odd_shape(u, len) } else { profile.envelope(u, len) };
    }
    if odd {
        let env_sum: f64 = envelope.iter().sum();
        if env_sum > 0.0 {
            let w = values.iter().sum::<f64>() / env_sum;
            for (v, e) in values.iter_mut().zip(&envelope) {
                *v -= w * e;
            }
        }
    }
    let norm = if normalized {
        (values.iter().map(|v| v * v).sum::<f64>() * h).sqrt()
    } else {
        values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bump on {interval} vanishes on the grid (L = {log_resolution})"
        )));
    }
    for v in &mut values {
        *v /= norm;
    }
    Ok(values)
}

/// A sampled 1-d bump adapted to `interval`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedBump {
    pub interval: RealInterval,
    pub profile: BumpProfile,
    pub normalized: bool,
    pub cancellation: bool,
    pub samples: GridFunction,
}

impl AdaptedBump {
    pub fn build(
        interval: RealInterval,
        profile: BumpProfile,
        cancellation: bool,
        normalized: bool,
        log_resolution: u32,
    ) -> Result<Self> {
        let values = sample_axis_bump(interval, &profile, cancellation, normalized, log_resolution)?;
        let samples = GridFunction::from_real(1, log_resolution, &values)?;
        Ok(Self { interval, profile, normalized, cancellation, samples })
    }

    /// Wrap arbitrary samples, e.g. to test the adaptedness check on non-bumps.
    pub fn from_samples(
        interval: RealInterval,
        profile: BumpProfile,
        normalized: bool,
        cancellation: bool,
        samples: GridFunction,
    ) -> Result<Self> {
        if samples.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: samples.dim() });
        }
        Ok(Self { interval, profile, normalized, cancellation, samples })
    }

    pub fn log_resolution(&self) -> u32 {
        self.samples.log_resolution()
    }
}

fn smooth_gate(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// `h(s) / (h(s) + h(1-s))` with `h(x) = e^{-1/x}`: 0 for `s <= 0`, 1 for `s >= 1`.
pub fn smooth_ramp(s: f64) -> f64 {
    let a = smooth_gate(s);
    let b = smooth_gate(1.0 - s);
    a / (a + b)
}

/// The standard cutoff: 1 on `|u| <= 1/4`, 0 on `|u| >= 1/2`.
pub fn cutoff_profile(u: f64) -> f64 {
    let a = u.abs();
    if a <= 0.25 {
        1.0
    } else if a >= 0.5 {
        0.0
    } else {
        smooth_ramp((0.5 - a) * 4.0)
    }
}

/// `psi((x - x_I) / |I|)` at a real point, without periodic reduction.
pub fn cutoff_value(interval: RealInterval, x: f64) -> f64 {
    cutoff_profile((x - interval.center()) / interval.length)
}

/// The cutoff adapted to `interval` sampled on the periodic 1-d grid, using the nearest image
/// of each grid point.
pub fn make_cutoff(interval: RealInterval, log_resolution: u32) -> Result<GridFunction> {
    let c = interval.center();
    GridFunction::from_fn(1, log_resolution, |x| {
        Complex64::new(cutoff_profile(wrap_centered(x[0] - c) / interval.length), 0.0)
    })
}

fn cutoff_values(interval: RealInterval, log_resolution: u32) -> Vec<f64> {
    let n = 1usize << log_resolution;
    let c = interval.center();
    (0..n)
        .map(|i| cutoff_profile(wrap_centered(i as f64 / n as f64 - c) / interval.length))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptedConstant {
    pub derivative: u32,
    pub alpha: u32,
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptedReport {
    pub entries: Vec<AdaptedConstant>,
}

impl AdaptedReport {
    pub fn constant(&self, derivative: u32, alpha: u32) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.derivative == derivative && e.alpha == alpha)
            .map(|e| e.constant)
    }

    pub fn max_constant(&self) -> f64 {
        self.entries.iter().map(|e| e.constant).fold(0.0, f64::max)
    }
}

/// Worst constants `max_x |Phi^{(l)}(x)| |J|^l (1 + dist(x,J)/|J|)^alpha` for
/// `l <= smoothness_order`, `alpha <= decay_order`. Derivatives are periodic centered differences;
/// normalized bumps are first rescaled by `|J|^{1/2}`.
pub fn verify_adapted(b: &AdaptedBump) -> Result<AdaptedReport> {
    let n = b.samples.side();
    let len = b.interval.length;
    let cells = len * n as f64;
    if cells < 8.0 {
        return Err(Error::BumpTooNarrow { cells });
    }
    let h = 1.0 / n as f64;
    let scale = if b.normalized { len.sqrt() } else { 1.0 };
    let mut deriv: Vec<Complex64> = b.samples.samples().iter().map(|z| z * scale).collect();
    let weights: Vec<f64> =
        (0..n).map(|i| 1.0 + b.interval.periodic_distance(i as f64 * h) / len).collect();
    let mut entries = Vec::new();
    for l in 0..=b.profile.smoothness_order {
        if l > 0 {
            deriv = (0..n)
                .map(|i| (deriv[(i + 1) % n] - deriv[(i + n - 1) % n]) / (2.0 * h))
                .collect();
        }
        let lscale = len.powi(l as i32);
        for alpha in 0..=b.profile.decay_order {
            let constant = deriv
                .iter()
                .zip(&weights)
                .map(|(z, w)| z.norm() * lscale * w.powi(alpha as i32))
                .fold(0.0, f64::max);
            entries.push(AdaptedConstant { derivative: l, alpha, constant });
        }
    }
    Ok(AdaptedReport { entries })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionTerm {
    pub k: u32,
    /// `dilate(J, k)`; the term vanishes outside it.
    pub support: RealInterval,
    /// `phi^k_J`, i.e. already multiplied by `2^{Mk}`.
    pub samples: GridFunction,
}

/// `phi = sum_{k <= N} 2^{-Mk} phi^k + R^N`.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpDecomposition {
    pub decay_exponent: u32,
    pub term_count: u32,
    pub mean_zero: bool,
    pub terms: Vec<DecompositionTerm>,
    /// `R^k` after extracting term `k`, for `k = 0..=N`.
    pub residuals: Vec<GridFunction>,
}

impl BumpDecomposition {
    pub fn weight(&self, k: u32) -> f64 {
        2f64.powi(-((self.decay_exponent * k) as i32))
    }

    pub fn residual(&self) -> &GridFunction {
        self.residuals.last().expect("decomposition has at least one residual")
    }

    /// `sum_k 2^{-Mk} phi^k + R^N`.
    pub fn reconstruct(&self) -> GridFunction {
        let mut acc = self.residual().samples().to_vec();
        for t in &self.terms {
            let w = self.weight(t.k);
            for (a, z) in acc.iter_mut().zip(t.samples.samples()) {
                *a += z * w;
            }
        }
        GridFunction::from_shape(self.residual().shape(), acc)
    }

    /// Largest `|phi^k|` at grid points outside `dilate(J, k)`.
    pub fn sup_outside_support(&self, k: u32) -> f64 {
        let t = &self.terms[k as usize];
        let n = t.samples.side();
        let half = 0.5 * t.support.length;
        t.samples
            .samples()
            .iter()
            .enumerate()
            .filter(|(i, _)| t.support.periodic_offset(*i as f64 / n as f64).abs() > half)
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max)
    }
}

fn check_decomposition_args(phi: &AdaptedBump, m: u32, n: u32) -> Result<()> {
    if m < 4 {
        return Err(Error::InvalidParameter(format!("decay exponent M = {m} must be >= 4")));
    }
    if n < 1 {
        return Err(Error::InvalidParameter("term count N must be >= 1".into()));
    }
    if m * n > 1000 {
        return Err(Error::InvalidParameter(format!("2^(M N) with M N = {} overflows", m * n)));
    }
    if phi.samples.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: phi.samples.dim() });
    }
    Ok(())
}

/// Telescoping split: term 0 is `phi psi_J`, term k is `2^{Mk} phi (psi_{2^k J} - psi_{2^{k-1} J})`.
pub fn decompose_plain(phi: &AdaptedBump, m: u32, n: u32) -> Result<BumpDecomposition> {
    check_decomposition_args(phi, m, n)?;
    let shape = phi.samples.shape();
    let l = shape.log_resolution;
    let f = phi.samples.samples();
    let mut terms = Vec::with_capacity(n as usize + 1);
    let mut residuals = Vec::with_capacity(n as usize + 1);
    let mut prev = vec![0.0; f.len()];
    for k in 0..=n {
        let support = phi.interval.dilate(k);
        let psi = cutoff_values(support, l);
        let weight = 2f64.powi((m * k) as i32);
        let term = f.iter().zip(psi.iter().zip(&prev)).map(|(z, (p, q))| z * ((p - q) * weight)).collect();
        let residual = f.iter().zip(&psi).map(|(z, p)| z * (1.0 - p)).collect();
        terms.push(DecompositionTerm { k, support, samples: GridFunction::from_shape(shape, term) });
        residuals.push(GridFunction::from_shape(shape, residual));
        prev = psi;
    }
    Ok(BumpDecomposition { decay_exponent: m, term_count: n, mean_zero: false, terms, residuals })
}

/// Mean-preserving split of a mean-zero bump: at step `k` the current residual is cut against
/// `psi_{2^k J}` after subtracting the constant that makes the extracted piece mean zero; that
/// constant times the cutoff is carried into the next residual.
pub fn decompose_mean_zero(phi: &AdaptedBump, m: u32, n: u32) -> Result<BumpDecomposition> {
    check_decomposition_args(phi, m, n)?;
    let mean = phi.samples.quadrature().norm();
    if mean > 1e-10 {
        return Err(Error::NonzeroMean(mean));
    }
    let shape = phi.samples.shape();
    let l = shape.log_resolution;
    let mut current: Vec<Complex64> = phi.samples.samples().to_vec();
    let mut terms = Vec::with_capacity(n as usize + 1);
    let mut residuals = Vec::with_capacity(n as usize + 1);
    for k in 0..=n {
        let support = phi.interval.dilate(k);
        let psi = cutoff_values(support, l);
        let psi_sum: f64 = psi.iter().sum();
        let paired: Complex64 = current.iter().zip(&psi).map(|(z, p)| z * p).sum();
        let w = paired / psi_sum;
        let weight = 2f64.powi((m * k) as i32);
        let mut term = Vec::with_capacity(current.len());
        let mut next = Vec::with_capacity(current.len());
        for (z, &p) in current.iter().zip(&psi) {
            term.push((z - w) * p * weight);
            next.push(w * p + z * (1.0 - p));
        }
        terms.push(DecompositionTerm { k, support, samples: GridFunction::from_shape(shape, term) });
        residuals.push(GridFunction::from_shape(shape, next.clone()));
        current = next;
    }
    Ok(BumpDecomposition { decay_exponent: m, term_count: n, mean_zero: true, terms, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(a: f64, b: f64) -> RealInterval {
        RealInterval::new(a, b).unwrap()
    }

    #[test]
    fn cutoff_examples() {
        let i = interval(-0.5, 0.5);
        assert_eq!(cutoff_value(i, 0.0), 1.0);
        assert_eq!(cutoff_value(i, 0.6), 0.0);
        assert_eq!(cutoff_value(i, 0.2), 1.0);
        assert_eq!(cutoff_value(i, 0.5), 0.0);
        let mid = cutoff_value(i, 0.375);
        assert!((mid - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cutoff_grid_support() {
        let i = interval(0.25, 0.5);
        let psi = make_cutoff(i, 6).unwrap();
        for (j, z) in psi.samples().iter().enumerate() {
            let x = j as f64 / 64.0;
            if !(0.25..=0.5).contains(&x) {
                assert_eq!(z.re, 0.0);
            }
            if (0.3125..=0.4375).contains(&x) {
                assert_eq!(z.re, 1.0);
            }
        }
    }

    #[test]
    fn bump_invariants() {
        for kind in [ProfileKind::GaussianLike, ProfileKind::CompactSmooth, ProfileKind::MeanZeroWavelet] {
            for cancellation in [false, true] {
                let b = AdaptedBump::build(
                    interval(0.3, 0.55),
                    BumpProfile::of_kind(kind),
                    cancellation,
                    true,
                    8,
                )
                .unwrap();
                assert!((b.samples.lp_norm(2.0).unwrap() - 1.0).abs() < 1e-6);
                if cancellation || kind == ProfileKind::MeanZeroWavelet {
                    assert!(b.samples.quadrature().norm() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn wide_bumps_wrap_periodically() {
        let b = AdaptedBump::build(interval(-0.5, 1.5), BumpProfile::default(), false, true, 6).unwrap();
        let s = b.samples.samples();
        assert!((s[0].re - s[32].re).abs() > 0.0);
        assert!(s.iter().all(|z| z.re > 0.0));
    }

    #[test]
    fn canonical_gaussian_is_adapted() {
        let b = AdaptedBump::build(interval(0.0, 0.25), BumpProfile::default(), false, true, 8).unwrap();
        let report = verify_adapted(&b).unwrap();
        assert!(report.constant(0, 2).unwrap() <= 10.0);
    }

    #[test]
    fn zero_function_has_zero_constants() {
        let b = AdaptedBump::from_samples(
            interval(0.0, 0.25),
            BumpProfile::default(),
            false,
            false,
            GridFunction::zeros(1, 7).unwrap(),
        )
        .unwrap();
        assert_eq!(verify_adapted(&b).unwrap().max_constant(), 0.0);
    }

    #[test]
    fn indicator_derivative_blows_up() {
        let j = interval(0.25, 0.5);
        let constant_at = |l: u32| {
            let f = GridFunction::from_fn(1, l, |x| {
                Complex64::new(if x[0] >= 0.25 && x[0] < 0.5 { 1.0 } else { 0.0 }, 0.0)
            })
            .unwrap();
            let b = AdaptedBump::from_samples(j, BumpProfile::default(), false, false, f).unwrap();
            verify_adapted(&b).unwrap().constant(1, 0).unwrap()
        };
        let coarse = constant_at(6);
        let fine = constant_at(10);
        assert!(fine > 10.0 * coarse, "{coarse} {fine}");
    }

    #[test]
    fn narrow_bumps_rejected() {
        let b = AdaptedBump::build(interval(0.0, 1.0 / 32.0), BumpProfile::default(), false, true, 7).unwrap();
        assert!(matches!(verify_adapted(&b), Err(Error::BumpTooNarrow { .. })));
    }

    #[test]
    fn plain_collapses_for_supported_bumps() {
        // psi_J is 1 only on the middle half of J, so the source lives there.
        let j = interval(0.25, 0.75);
        let f = GridFunction::from_fn(1, 7, |x| {
            Complex64::new(cutoff_profile(4.0 * (x[0] - 0.5)), 0.0)
        })
        .unwrap();
        let phi = AdaptedBump::from_samples(j, BumpProfile::default(), false, false, f.clone()).unwrap();
        let d = decompose_plain(&phi, 10, 3).unwrap();
        assert!(d.terms[0].samples.max_abs_diff(&f).unwrap() < 1e-15);
        for t in &d.terms[1..] {
            assert_eq!(t.samples.sup_norm(), 0.0);
        }
    }

    #[test]
    fn plain_tail_bound() {
        let phi = AdaptedBump::build(interval(0.375, 0.625), BumpProfile::default(), false, true, 10).unwrap();
        let d = decompose_plain(&phi, 10, 4).unwrap();
        let sup = phi.samples.sup_norm();
        assert!(d.residual().sup_norm() <= 100.0 * 2f64.powi(-40) * sup);
        assert!(d.reconstruct().max_abs_diff(&phi.samples).unwrap() <= 1e-12);
        for k in 0..=4 {
            assert_eq!(d.sup_outside_support(k), 0.0);
        }
    }

    #[test]
    fn mean_zero_terms() {
        let phi = AdaptedBump::build(
            interval(0.4, 0.6),
            BumpProfile::of_kind(ProfileKind::MeanZeroWavelet),
            true,
            true,
            10,
        )
        .unwrap();
        let d = decompose_mean_zero(&phi, 10, 3).unwrap();
        for t in &d.terms {
            assert!(t.samples.quadrature().norm() <= 1e-12 * 2f64.powi(10 * t.k as i32).max(1.0));
        }
        let sup = phi.samples.sup_norm();
        assert!(d.residual().sup_norm() <= 100.0 * 2f64.powi(-40) * sup);
        assert!(d.reconstruct().max_abs_diff(&phi.samples).unwrap() <= 1e-12);
    }

    #[test]
    fn mean_zero_rejects_nonzero_mean() {
        let phi = AdaptedBump::build(interval(0.4, 0.6), BumpProfile::default(), false, true, 8).unwrap();
        assert!(matches!(decompose_mean_zero(&phi, 10, 2), Err(Error::NonzeroMean(_))));
    }

    #[test]
    fn zero_function_decomposes_to_zero() {
        let phi = AdaptedBump::from_samples(
            interval(0.4, 0.6),
            BumpProfile::default(),
            true,
            true,
            GridFunction::zeros(1, 8).unwrap(),
        )
        .unwrap();
        let d = decompose_mean_zero(&phi, 10, 3).unwrap();
        assert!(d.terms.iter().all(|t| t.samples.sup_norm() == 0.0));
        assert_eq!(d.residual().sup_norm(), 0.0);
    }
}
