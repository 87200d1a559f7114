//! Functions on the periodic cube `[0,1)^d` sampled on a uniform dyadic grid.
//!
//! Samples are stored row-major with axis order `(x, y, z)`: the linear index of
//! the multi-index `(i_0, .., i_{d-1})` is `((i_0 * N) + i_1) * N + i_2`. All
//! integrals are Riemann sums, so the measure of a single cell is `N^{-d}`.

use std::io::{Read, Write};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const MIN_LOG_RESOLUTION: u32 = 2;
pub const MAX_LOG_RESOLUTION: u32 = 14;
pub const MAX_DIM: usize = 3;

/// Reduce `x` modulo 1 into `[-1/2, 1/2)`.
pub fn wrap_centered(x: f64) -> f64 {
    let r = x - x.round();
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

fn check_shape(dim: usize, log_resolution: u32) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidGrid(format!("dimension {dim} outside 1..=3")));
    }
    if !(MIN_LOG_RESOLUTION..=MAX_LOG_RESOLUTION).contains(&log_resolution) {
        return Err(Error::InvalidGrid(format!(
            "log resolution {log_resolution} outside {MIN_LOG_RESOLUTION}..={MAX_LOG_RESOLUTION}"
        )));
    }
    Ok(())
}

/// Shape bookkeeping shared by grid-valued types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridShape {
    pub dim: usize,
    pub log_resolution: u32,
}

impl GridShape {
    pub fn new(dim: usize, log_resolution: u32) -> Result<Self> {
        check_shape(dim, log_resolution)?;
        Ok(Self { dim, log_resolution })
    }

    pub fn side(&self) -> usize {
        1usize << self.log_resolution
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn cell_measure(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn multi_index(&self, mut index: usize, out: &mut [usize]) {
        let n = self.side();
        for a in (0..self.dim).rev() {
            out[a] = index % n;
            index /= n;
        }
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        let n = self.side();
        idx.iter().fold(0, |acc, &i| acc * n + i)
    }

    /// Stride of axis `axis` in the row-major layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.side().pow((self.dim - 1 - axis) as u32)
    }

    pub fn ensure_same(&self, other: &GridShape) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        if self.log_resolution != other.log_resolution {
            return Err(Error::ResolutionMismatch {
                expected: self.log_resolution,
                found: other.log_resolution,
            });
        }
        Ok(())
    }
}

/// Apply `op` to every 1-d line of `data` running along `axis`.
pub(crate) fn for_each_line<T: Copy + Default>(
    data: &mut [T],
    shape: GridShape,
    axis: usize,
    mut op: impl FnMut(&mut [T]),
) {
    let n = shape.side();
    let stride = shape.stride(axis);
    let block = stride * n;
    let mut line = vec![T::default(); n];
    for outer in (0..data.len()).step_by(block) {
        for inner in 0..stride {
            let base = outer + inner;
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + i * stride];
            }
            op(&mut line);
            for (i, v) in line.iter().enumerate() {
                data[base + i * stride] = *v;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    shape: GridShape,
    samples: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(dim: usize, log_resolution: u32, samples: Vec<Complex64>) -> Result<Self> {
        let shape = GridShape::new(dim, log_resolution)?;
        if samples.len() != shape.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, found {}",
                shape.len(),
                samples.len()
            )));
        }
        Ok(Self { shape, samples })
    }

    pub fn from_real(dim: usize, log_resolution: u32, values: &[f64]) -> Result<Self> {
        Self::new(dim, log_resolution, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(dim: usize, log_resolution: u32) -> Result<Self> {
        let shape = GridShape::new(dim, log_resolution)?;
        Ok(Self { shape, samples: vec![Complex64::new(0.0, 0.0); shape.len()] })
    }

    pub fn constant(dim: usize, log_resolution: u32, value: Complex64) -> Result<Self> {
        let shape = GridShape::new(dim, log_resolution)?;
        Ok(Self { shape, samples: vec![value; shape.len()] })
    }

    /// Sample `f` at the grid points `i / N`.
    pub fn from_fn(
        dim: usize,
        log_resolution: u32,
        mut f: impl FnMut(&[f64]) -> Complex64,
    ) -> Result<Self> {
        let shape = GridShape::new(dim, log_resolution)?;
        let h = 1.0 / shape.side() as f64;
        let mut idx = [0usize; MAX_DIM];
        let mut x = [0f64; MAX_DIM];
        let samples = (0..shape.len())
            .map(|i| {
                shape.multi_index(i, &mut idx[..dim]);
                for a in 0..dim {
                    x[a] = idx[a] as f64 * h;
                }
                f(&x[..dim])
            })
            .collect();
        Ok(Self { shape, samples })
    }

    pub(crate) fn from_shape(shape: GridShape, samples: Vec<Complex64>) -> Self {
        debug_assert_eq!(samples.len(), shape.len());
        Self { shape, samples }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn log_resolution(&self) -> u32 {
        self.shape.log_resolution
    }

    /// Samples per axis, `N = 2^L`.
    pub fn side(&self) -> usize {
        self.shape.side()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.re).collect()
    }

    /// Riemann sum of the samples over `[0,1)^d`, i.e. their mean.
    pub fn quadrature(&self) -> Complex64 {
        let sum: Complex64 = self.samples.iter().sum();
        sum * self.shape.cell_measure()
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::InvalidExponent(p));
        }
        if p.is_infinite() {
            return Ok(self.sup_norm());
        }
        let sum: f64 = if p == 2.0 {
            self.samples.iter().map(|z| z.norm_sqr()).sum()
        } else {
            self.samples.iter().map(|z| z.norm().powf(p)).sum()
        };
        Ok((sum * self.shape.cell_measure()).powf(1.0 / p))
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn abs(&self) -> GridFunction {
        self.map(|z| Complex64::new(z.norm(), 0.0))
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> GridFunction {
        Self { shape: self.shape, samples: self.samples.iter().map(|&z| f(z)).collect() }
    }

    pub fn scale(&self, c: Complex64) -> GridFunction {
        self.map(|z| z * c)
    }

    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<GridFunction> {
        self.shape.ensure_same(&other.shape)?;
        let samples =
            self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape, samples })
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a * b)
    }

    /// `quadrature(self * conj(other))`.
    pub fn inner(&self, other: &GridFunction) -> Result<Complex64> {
        self.shape.ensure_same(&other.shape)?;
        let sum: Complex64 =
            self.samples.iter().zip(&other.samples).map(|(a, b)| a * b.conj()).sum();
        Ok(sum * self.shape.cell_measure())
    }

    /// Sup-norm distance to `other`.
    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        self.shape.ensure_same(&other.shape)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Divide by the `L^p` norm; `None` for the zero function.
    pub fn normalized(&self, p: f64) -> Result<Option<GridFunction>> {
        let norm = self.lp_norm(p)?;
        if norm == 0.0 || !norm.is_finite() {
            return Ok(None);
        }
        Ok(Some(self.scale(Complex64::new(1.0 / norm, 0.0))))
    }

    pub fn forward_transform(&self) -> FrequencyGrid {
        let mut data = self.samples.clone();
        transform_in_place(&mut data, self.shape, false);
        let scale = self.shape.cell_measure();
        for z in &mut data {
            *z *= scale;
        }
        FrequencyGrid { shape: self.shape, coefficients: data }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
        w.write_record(["dim", "log_resolution"])?;
        w.write_record([self.dim().to_string(), self.log_resolution().to_string()])?;
        for z in &self.samples {
            w.write_record([z.re.to_string(), z.im.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<GridFunction> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
        let mut records = r.records();
        let mut next = || -> Result<Option<csv::StringRecord>> { Ok(records.next().transpose()?) };
        let mut head = next()?.ok_or_else(|| Error::Parse("empty grid file".into()))?;
        if head.get(0).map(str::trim) == Some("dim") {
            head = next()?.ok_or_else(|| Error::Parse("missing dim,log_resolution row".into()))?;
        }
        let field = |rec: &csv::StringRecord, i: usize| -> Result<String> {
            rec.get(i)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| Error::Parse(format!("missing column {i} in {rec:?}")))
        };
        let dim: usize = field(&head, 0)?.parse().map_err(|e| Error::Parse(format!("dim: {e}")))?;
        let log_resolution: u32 = field(&head, 1)?
            .parse()
            .map_err(|e| Error::Parse(format!("log_resolution: {e}")))?;
        let mut samples = Vec::new();
        while let Some(rec) = next()? {
            let re: f64 = field(&rec, 0)?.parse().map_err(|e| Error::Parse(format!("re: {e}")))?;
            let im: f64 = match rec.get(1) {
                Some(s) => s.trim().parse().map_err(|e| Error::Parse(format!("im: {e}")))?,
                None => 0.0,
            };
            samples.push(Complex64::new(re, im));
        }
        GridFunction::new(dim, log_resolution, samples)
    }
}

/// Fourier coefficients `c_xi = N^{-d} sum_x f(x) e^{-2 pi i xi.x}`, stored in FFT order:
/// storage index `i` along an axis holds frequency `i` for `i < N/2` and `i - N` otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    shape: GridShape,
    coefficients: Vec<Complex64>,
}

impl FrequencyGrid {
    pub fn zeros(dim: usize, log_resolution: u32) -> Result<Self> {
        let shape = GridShape::new(dim, log_resolution)?;
        Ok(Self { shape, coefficients: vec![Complex64::new(0.0, 0.0); shape.len()] })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.coefficients
    }

    /// Storage index along one axis of integer frequency `k`, if it lies in `[-N/2, N/2)`.
    pub fn axis_index(&self, k: i64) -> Option<usize> {
        let n = self.shape.side() as i64;
        if k < -n / 2 || k >= n / 2 {
            return None;
        }
        Some(k.rem_euclid(n) as usize)
    }

    /// Integer frequency held at storage index `i` along an axis.
    pub fn axis_frequency(&self, i: usize) -> i64 {
        let n = self.shape.side();
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    pub fn index_of(&self, freq: &[i64]) -> Option<usize> {
        if freq.len() != self.shape.dim {
            return None;
        }
        let mut idx = [0usize; MAX_DIM];
        for (a, &k) in freq.iter().enumerate() {
            idx[a] = self.axis_index(k)?;
        }
        Some(self.shape.linear_index(&idx[..self.shape.dim]))
    }

    pub fn get(&self, freq: &[i64]) -> Option<Complex64> {
        self.index_of(freq).map(|i| self.coefficients[i])
    }

    pub fn set(&mut self, freq: &[i64], value: Complex64) -> Result<()> {
        let i = self
            .index_of(freq)
            .ok_or_else(|| Error::InvalidParameter(format!("frequency {freq:?} out of range")))?;
        self.coefficients[i] = value;
        Ok(())
    }

    /// Frequency vector of storage position `index`.
    pub fn frequency_of(&self, index: usize, out: &mut [i64]) {
        let mut idx = [0usize; MAX_DIM];
        self.shape.multi_index(index, &mut idx[..self.shape.dim]);
        for a in 0..self.shape.dim {
            out[a] = self.axis_frequency(idx[a]);
        }
    }

    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn inverse_transform(&self) -> GridFunction {
        let mut data = self.coefficients.clone();
        transform_in_place(&mut data, self.shape, true);
        GridFunction::from_shape(self.shape, data)
    }
}

/// Unnormalized multi-dimensional DFT, axis by axis.
fn transform_in_place(data: &mut [Complex64], shape: GridShape, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let n = shape.side();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..shape.dim {
        for_each_line(data, shape, axis, |line| fft.process_with_scratch(line, &mut scratch));
    }
}

/// A subset of grid cells; measure is the cell count times `N^{-d}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridSet {
    shape: GridShape,
    cells: Vec<bool>,
}

impl GridSet {
    pub fn empty(shape: GridShape) -> Self {
        Self { shape, cells: vec![false; shape.len()] }
    }

    pub fn full(shape: GridShape) -> Self {
        Self { shape, cells: vec![true; shape.len()] }
    }

    pub fn from_cells(shape: GridShape, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != shape.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} cells, found {}",
                shape.len(),
                cells.len()
            )));
        }
        Ok(Self { shape, cells })
    }

    /// Cells where `values > threshold`.
    pub fn above(shape: GridShape, values: &[f64], threshold: f64) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        Self { shape, cells: values.iter().map(|&v| v > threshold).collect() }
    }

    /// Cells where `values >= threshold`.
    pub fn at_least(shape: GridShape, values: &[f64], threshold: f64) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        Self { shape, cells: values.iter().map(|&v| v >= threshold).collect() }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn contains(&self, index: usize) -> bool {
        self.cells[index]
    }

    pub fn insert(&mut self, index: usize) {
        self.cells[index] = true;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.shape.cell_measure()
    }

    pub fn union(&self, other: &GridSet) -> GridSet {
        let cells = self.cells.iter().zip(&other.cells).map(|(&a, &b)| a || b).collect();
        Self { shape: self.shape, cells }
    }

    pub fn intersection(&self, other: &GridSet) -> GridSet {
        let cells = self.cells.iter().zip(&other.cells).map(|(&a, &b)| a && b).collect();
        Self { shape: self.shape, cells }
    }

    pub fn difference(&self, other: &GridSet) -> GridSet {
        let cells = self.cells.iter().zip(&other.cells).map(|(&a, &b)| a && !b).collect();
        Self { shape: self.shape, cells }
    }

    pub fn complement(&self) -> GridSet {
        Self { shape: self.shape, cells: self.cells.iter().map(|&c| !c).collect() }
    }

    pub fn is_subset(&self, other: &GridSet) -> bool {
        self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    pub fn indicator(&self) -> GridFunction {
        let samples = self
            .cells
            .iter()
            .map(|&c| Complex64::new(if c { 1.0 } else { 0.0 }, 0.0))
            .collect();
        GridFunction::from_shape(self.shape, samples)
    }

    pub fn indicator_values(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn quadrature_examples() {
        let one = GridFunction::constant(1, 4, c(1.0)).unwrap();
        assert_eq!(one.quadrature(), c(1.0));
        let zero = GridFunction::zeros(2, 3).unwrap();
        assert_eq!(zero.quadrature(), c(0.0));
        let sine = GridFunction::from_fn(1, 8, |x| c((2.0 * PI * x[0]).sin())).unwrap();
        assert!(sine.quadrature().norm() <= 1e-12);
    }

    #[test]
    fn lp_norm_examples() {
        let one = GridFunction::constant(1, 5, c(1.0)).unwrap();
        assert!((one.lp_norm(2.0).unwrap() - 1.0).abs() < 1e-15);
        let half = GridFunction::from_fn(1, 6, |x| c(if x[0] < 0.5 { 1.0 } else { 0.0 })).unwrap();
        assert!((half.lp_norm(2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let quarter =
            GridFunction::from_fn(1, 6, |x| c(if x[0] < 0.25 { 2.0 } else { 0.0 })).unwrap();
        assert!((quarter.lp_norm(4.0).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(quarter.lp_norm(f64::INFINITY).unwrap(), 2.0);
    }

    #[test]
    fn lp_norm_rejects_small_exponents() {
        let one = GridFunction::constant(1, 3, c(1.0)).unwrap();
        assert!(matches!(one.lp_norm(0.5), Err(Error::InvalidExponent(_))));
        assert!(one.lp_norm(f64::NAN).is_err());
    }

    #[test]
    fn shape_guards() {
        assert!(GridFunction::zeros(1, 1).is_err());
        assert!(GridFunction::zeros(1, 15).is_err());
        assert!(GridFunction::zeros(4, 2).is_err());
        assert!(GridFunction::new(1, 3, vec![c(0.0); 7]).is_err());
    }

    #[test]
    fn transform_of_constant_and_pure_frequency() {
        let one = GridFunction::constant(1, 4, c(1.0)).unwrap();
        let spec = one.forward_transform();
        for (i, z) in spec.coefficients().iter().enumerate() {
            let expected = if i == 0 { 1.0 } else { 0.0 };
            assert!((z - c(expected)).norm() < 1e-14);
        }
        let wave = GridFunction::from_fn(1, 5, |x| Complex64::from_polar(1.0, 2.0 * PI * 3.0 * x[0]))
            .unwrap();
        let spec = wave.forward_transform();
        assert!((spec.get(&[3]).unwrap() - c(1.0)).norm() < 1e-12);
        assert!(spec.get(&[-3]).unwrap().norm() < 1e-12);
        assert!(spec.get(&[16]).is_none());
    }

    #[test]
    fn two_dimensional_frequency_layout() {
        let wave = GridFunction::from_fn(2, 4, |x| {
            Complex64::from_polar(1.0, 2.0 * PI * (2.0 * x[0] - 5.0 * x[1]))
        })
        .unwrap();
        let spec = wave.forward_transform();
        assert!((spec.get(&[2, -5]).unwrap() - c(1.0)).norm() < 1e-12);
        assert!((spec.energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let f = GridFunction::from_fn(2, 2, |x| Complex64::new(x[0].sin() / 3.0, -x[1] * 0.1))
            .unwrap();
        let text = f.to_csv_string().unwrap();
        assert!(text.starts_with("dim,log_resolution\n2,2\n"));
        let g = GridFunction::read_csv(text.as_bytes()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn grid_set_measure() {
        let shape = GridShape::new(2, 3).unwrap();
        let values: Vec<f64> = (0..shape.len()).map(|i| i as f64).collect();
        let s = GridSet::above(shape, &values, 31.5);
        assert_eq!(s.measure(), 0.5);
        assert_eq!(s.complement().measure(), 0.5);
        assert!(s.intersection(&s.complement()).is_empty());
        assert!(s.is_subset(&GridSet::full(shape)));
    }

    #[test]
    fn wrap_centered_range() {
        assert!((wrap_centered(0.6) + 0.4).abs() < 1e-15);
        assert_eq!(wrap_centered(0.5), -0.5);
        assert_eq!(wrap_centered(-0.5), -0.5);
        assert!((wrap_centered(1.25) - 0.25).abs() < 1e-15);
    }
}
