//! Discretized dyadic paraproducts
//! `Pi(f, g) = sum_R |R|^{-1/2} <f, Phi^1_R> <g, Phi^2_R> Phi^3_R`
//! with tensor-product bumps, and the trilinear form `Lambda(f, g, h) = int Pi(f, g) h`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bump::BumpProfile;
use crate::dyadic::{DyadicInterval, DyadicRectangle, RectangleCollection, ShiftParams};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::tensor::{pairings, synthesize, AxisBumps, BumpBank, LemmaConfig, SparseAxis};

/// Per-axis shift parameters: one dilation `lambda` and a translation `t_i` for each slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisShifts {
    pub lambda: f64,
    pub t: [f64; 3],
}

impl AxisShifts {
    pub const ZERO: AxisShifts = AxisShifts { lambda: 0.0, t: [0.0; 3] };

    pub fn new(lambda: f64, t: [f64; 3]) -> Result<Self> {
        for &v in std::iter::once(&lambda).chain(t.iter()) {
            ShiftParams::new(v, 0.0)?;
        }
        Ok(Self { lambda, t })
    }

    /// The same `(lambda, t)` in every slot.
    pub fn uniform(s: ShiftParams) -> Self {
        Self { lambda: s.lambda, t: [s.t; 3] }
    }

    pub fn slot(&self, slot: usize) -> ShiftParams {
        ShiftParams { lambda: self.lambda, t: self.t[slot - 1] }
    }
}

/// Parses a type vector such as `1,2`.
pub fn parse_type_vector(s: &str) -> Result<Vec<u8>> {
    s.split(',')
        .map(|p| {
            let j: u8 = p.trim().parse().map_err(|e| Error::Parse(format!("type entry `{p}`: {e}")))?;
            if (1..=3).contains(&j) {
                Ok(j)
            } else {
                Err(Error::Parse(format!("type entry {j} outside 1..=3")))
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParaproductSpec {
    pub dim: usize,
    /// `j_a`: the slot without cancellation on axis `a`.
    pub type_vector: Vec<u8>,
    pub collection: RectangleCollection,
    pub shifts: Vec<AxisShifts>,
    pub profile: BumpProfile,
}

impl ParaproductSpec {
    pub fn new(type_vector: Vec<u8>, collection: RectangleCollection) -> Result<Self> {
        let dim = collection.dim();
        let spec = Self {
            dim,
            shifts: vec![AxisShifts::ZERO; dim],
            type_vector,
            collection,
            profile: BumpProfile::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_shifts(mut self, shifts: Vec<AxisShifts>) -> Result<Self> {
        self.shifts = shifts;
        self.validate()?;
        Ok(self)
    }

    pub fn with_profile(mut self, profile: BumpProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.type_vector.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: self.type_vector.len() });
        }
        if self.shifts.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: self.shifts.len() });
        }
        if self.collection.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: self.collection.dim() });
        }
        if let Some(j) = self.type_vector.iter().find(|j| !(1..=3).contains(*j)) {
            return Err(Error::InvalidParameter(format!("type entry {j} outside 1..=3")));
        }
        Ok(())
    }

    /// Slot `slot` carries cancellation on axis `axis` iff it is not the type slot there.
    pub fn cancellation(&self, slot: usize, axis: usize) -> bool {
        slot != self.type_vector[axis] as usize
    }
}

/// Which bumps fill slot 3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SlotThree {
    Plain,
    /// Lemma term `k_a` on each axis.
    LemmaTerms(Vec<u32>),
}

/// A paraproduct bound to a resolution, with its bump cache.
#[derive(Clone, Debug)]
pub struct Paraproduct {
    spec: ParaproductSpec,
    bank: Arc<BumpBank>,
}

struct SlotBumps<'a> {
    para: &'a Paraproduct,
    slot: usize,
    three: &'a SlotThree,
}

impl AxisBumps for SlotBumps<'_> {
    fn variants(&self, axis: usize, interval: &DyadicInterval) -> Result<Vec<Arc<SparseAxis>>> {
        let spec = &self.para.spec;
        let shift = spec.shifts[axis].slot(self.slot);
        let cancel = spec.cancellation(self.slot, axis);
        let b = match (self.slot, self.three) {
            (3, SlotThree::LemmaTerms(k)) => self.para.bank.lemma_term(interval, shift, cancel, k[axis])?,
            _ => self.para.bank.get(interval, shift, cancel)?,
        };
        Ok(vec![b])
    }
}

impl Paraproduct {
    pub fn new(spec: ParaproductSpec, log_resolution: u32) -> Result<Self> {
        spec.validate()?;
        spec.collection.check_resolution(log_resolution)?;
        let bank = Arc::new(BumpBank::new(log_resolution, spec.profile));
        Ok(Self { spec, bank })
    }

    /// Enables slot-3 lemma terms.
    pub fn with_lemma(spec: ParaproductSpec, log_resolution: u32, lemma: LemmaConfig) -> Result<Self> {
        spec.validate()?;
        spec.collection.check_resolution(log_resolution)?;
        let bank = Arc::new(BumpBank::new(log_resolution, spec.profile).with_lemma(lemma));
        Ok(Self { spec, bank })
    }

    /// Uses an existing bump cache, which must match the profile.
    pub fn with_bank(spec: ParaproductSpec, bank: Arc<BumpBank>) -> Result<Self> {
        spec.validate()?;
        spec.collection.check_resolution(bank.log_resolution())?;
        if *bank.profile() != spec.profile {
            return Err(Error::InvalidParameter("bump cache profile differs from the paraproduct profile".into()));
        }
        Ok(Self { spec, bank })
    }

    pub fn spec(&self) -> &ParaproductSpec {
        &self.spec
    }

    pub fn bank(&self) -> &Arc<BumpBank> {
        &self.bank
    }

    pub fn log_resolution(&self) -> u32 {
        self.bank.log_resolution()
    }

    /// Same bumps and shifts over a different collection.
    pub fn restricted(&self, collection: RectangleCollection) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.collection = collection;
        spec.validate()?;
        Ok(Self { spec, bank: self.bank.clone() })
    }

    /// Same collection with different shifts; the bump cache is shared.
    pub fn reshifted(&self, shifts: Vec<AxisShifts>) -> Result<Self> {
        let spec = self.spec.clone().with_shifts(shifts)?;
        Ok(Self { spec, bank: self.bank.clone() })
    }

    fn check_input(&self, f: &GridFunction) -> Result<()> {
        if f.dim() != self.spec.dim {
            return Err(Error::DimensionMismatch { expected: self.spec.dim, found: f.dim() });
        }
        if f.log_resolution() != self.log_resolution() {
            return Err(Error::ResolutionMismatch { expected: self.log_resolution(), found: f.log_resolution() });
        }
        Ok(())
    }

    /// `<f, Phi^slot_R>` for every `R` in collection order.
    pub fn coefficients(&self, slot: usize, f: &GridFunction) -> Result<Vec<Complex64>> {
        self.coefficients_with(slot, f, &SlotThree::Plain)
    }

    pub fn coefficients_with(&self, slot: usize, f: &GridFunction, three: &SlotThree) -> Result<Vec<Complex64>> {
        if !(1..=3).contains(&slot) {
            return Err(Error::InvalidParameter(format!("slot {slot} outside 1..=3")));
        }
        self.check_input(f)?;
        pairings(f, self.spec.collection.rects(), &SlotBumps { para: self, slot, three })
    }

    fn weights(&self, f: &GridFunction, g: &GridFunction) -> Result<Vec<Complex64>> {
        let a = self.coefficients(1, f)?;
        let b = self.coefficients(2, g)?;
        Ok(self
            .spec
            .collection
            .iter()
            .zip(a.iter().zip(&b))
            .map(|(r, (x, y))| x * y / r.measure().sqrt())
            .collect())
    }

    /// The paraproduct `Pi(f, g)`.
    pub fn apply(&self, f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
        self.apply_with(f, g, &SlotThree::Plain)
    }

    pub fn apply_with(&self, f: &GridFunction, g: &GridFunction, three: &SlotThree) -> Result<GridFunction> {
        self.check_input(g)?;
        let w = self.weights(f, g)?;
        synthesize(f.shape(), self.spec.collection.rects(), &w, &SlotBumps { para: self, slot: 3, three })
    }

    /// One-parameter paraproduct.
    pub fn apply_1d(&self, f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
        if self.spec.dim != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: self.spec.dim });
        }
        self.apply(f, g)
    }

    /// `quadrature(Pi(f, g) h)`, pairing against `h` without conjugation.
    pub fn trilinear_form(&self, f: &GridFunction, g: &GridFunction, h: &GridFunction) -> Result<Complex64> {
        self.check_input(h)?;
        Ok(self.apply(f, g)?.mul(h)?.quadrature())
    }

    /// `sum_R |R|^{-1/2} <f, Phi^1_R> <g, Phi^2_R> int h Phi^3_R`.
    pub fn trilinear_symmetric(&self, f: &GridFunction, g: &GridFunction, h: &GridFunction) -> Result<Complex64> {
        self.trilinear_terms(f, g, h, &SlotThree::Plain).map(|t| t.iter().sum())
    }

    /// Per-rectangle contributions to the symmetric sum, in collection order.
    pub fn trilinear_terms(
        &self,
        f: &GridFunction,
        g: &GridFunction,
        h: &GridFunction,
        three: &SlotThree,
    ) -> Result<Vec<Complex64>> {
        self.check_input(g)?;
        let w = self.weights(f, g)?;
        // the bumps are real, so <h, Phi> = int h Phi
        let c = self.coefficients_with(3, h, three)?;
        Ok(w.iter().zip(&c).map(|(a, b)| a * b).collect())
    }

    /// `sum_R |R|^{-1/2} |<f,Phi^1>| |<g,Phi^2>|`. Times `||h||_2` this bounds the trilinear
    /// form, since the slot-3 bumps are L^2-normalized.
    pub fn pair_mass(&self, f: &GridFunction, g: &GridFunction) -> Result<f64> {
        self.check_input(f)?;
        self.check_input(g)?;
        Ok(self.weights(f, g)?.iter().map(|z| z.norm()).sum())
    }

    /// `sum_R |R|^{-1/2} |<f,Phi^1>| |<g,Phi^2>| |<h,Phi^3>|`.
    pub fn trilinear_absolute(&self, f: &GridFunction, g: &GridFunction, h: &GridFunction) -> Result<f64> {
        Ok(self.trilinear_terms(f, g, h, &SlotThree::Plain)?.iter().map(|z| z.norm()).sum())
    }
}

/// All rectangles with per-axis scales in `[-(L - 3), 0]`: the default collection used by the
/// experiments.
pub fn standard_collection(dim: usize, log_resolution: u32) -> Result<RectangleCollection> {
    let finest = -(log_resolution as i32 - 3).max(0);
    RectangleCollection::enumerate(dim, log_resolution, (finest, 0), |_| true)
}

/// Dense `Phi_R` for slot `slot`, for oracles and diagnostics.
pub fn dense_rectangle_bump(para: &Paraproduct, slot: usize, r: &DyadicRectangle) -> Result<GridFunction> {
    let spec = para.spec();
    let l = para.log_resolution();
    let factors = r
        .axes
        .iter()
        .enumerate()
        .map(|(a, i)| {
            Ok(para.bank().get(i, spec.shifts[a].slot(slot), spec.cancellation(slot, a))?.to_dense())
        })
        .collect::<Result<Vec<_>>>()?;
    GridFunction::from_fn(r.dim(), l, |x| {
        let n = (1usize << l) as f64;
        let v: f64 = x
            .iter()
            .zip(&factors)
            .map(|(xa, fa)| fa[(xa * n).round() as usize])
            .product();
        Complex64::new(v, 0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn wave(dim: usize, l: u32, a: f64) -> GridFunction {
        GridFunction::from_fn(dim, l, |x| {
            let s: f64 = x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v).sum();
            c((a * s * 6.3).sin() + 0.3 * a, (s * a).cos())
        })
        .unwrap()
    }

    #[test]
    fn zero_inputs_give_zero() {
        let col = standard_collection(1, 6).unwrap();
        let p = Paraproduct::new(ParaproductSpec::new(vec![1], col).unwrap(), 6).unwrap();
        let f = wave(1, 6, 1.0);
        let zero = GridFunction::zeros(1, 6).unwrap();
        assert_eq!(p.apply_1d(&zero, &f).unwrap().sup_norm(), 0.0);
        assert_eq!(p.apply_1d(&f, &zero).unwrap().sup_norm(), 0.0);
        assert_eq!(p.trilinear_form(&f, &f, &zero).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn singleton_matches_single_term() {
        let r: DyadicRectangle = "-2:1".parse().unwrap();
        let col = RectangleCollection::new(1, vec![r.clone()]).unwrap();
        let spec = ParaproductSpec::new(vec![2], col)
            .unwrap()
            .with_shifts(vec![AxisShifts::new(0.5, [0.25, 0.5, 1.0]).unwrap()])
            .unwrap();
        let p = Paraproduct::new(spec, 7).unwrap();
        let f = wave(1, 7, 1.3);
        let g = wave(1, 7, -0.7);
        let phi: Vec<GridFunction> = (1..=3).map(|s| dense_rectangle_bump(&p, s, &r).unwrap()).collect();
        let a = f.inner(&phi[0]).unwrap();
        let b = g.inner(&phi[1]).unwrap();
        let want = phi[2].scale(a * b / r.measure().sqrt());
        assert!(p.apply_1d(&f, &g).unwrap().max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn cancellation_flags_follow_type() {
        let col = standard_collection(2, 5).unwrap();
        let spec = ParaproductSpec::new(vec![1, 2], col).unwrap();
        assert!(!spec.cancellation(1, 0) && spec.cancellation(2, 0) && spec.cancellation(3, 0));
        assert!(spec.cancellation(1, 1) && !spec.cancellation(2, 1) && spec.cancellation(3, 1));
        let p = Paraproduct::new(spec, 5).unwrap();
        for r in p.spec().collection.iter().take(20) {
            for slot in 1..=3 {
                let b = dense_rectangle_bump(&p, slot, r).unwrap();
                let mean_zero = (0..2).any(|a| p.spec().cancellation(slot, a));
                assert!((b.lp_norm(2.0).unwrap() - 1.0).abs() < 1e-6);
                if mean_zero {
                    assert!(b.quadrature().norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn both_evaluation_orders_agree() {
        let col = standard_collection(2, 5).unwrap();
        let spec = ParaproductSpec::new(vec![1, 2], col).unwrap();
        let p = Paraproduct::new(spec, 5).unwrap();
        let (f, g, h) = (wave(2, 5, 1.0), wave(2, 5, 2.0), wave(2, 5, -1.5));
        let a = p.trilinear_form(&f, &g, &h).unwrap();
        let b = p.trilinear_symmetric(&f, &g, &h).unwrap();
        assert!((a - b).norm() < 1e-11 * (1.0 + a.norm()));
        assert!(a.norm() <= p.trilinear_absolute(&f, &g, &h).unwrap() + 1e-12);
    }

    #[test]
    fn type_vector_parsing() {
        assert_eq!(parse_type_vector("1,2").unwrap(), vec![1, 2]);
        assert!(parse_type_vector("4").is_err());
        assert!(ParaproductSpec::new(vec![1], standard_collection(2, 4).unwrap()).is_err());
    }
}
