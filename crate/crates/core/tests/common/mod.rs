//! Independent dense oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use num_complex::Complex64;
use polydisc::bump::sample_axis_bump;
use polydisc::harness::SeedStream;
use polydisc::paraproduct::AxisShifts;
use polydisc::{BumpProfile, DyadicInterval, DyadicRectangle, GridFunction, RectangleCollection, Symbol};

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Dense `Phi_R` for one slot, built axis by axis straight from the bump sampler.
pub fn dense_tensor_bump(
    r: &DyadicRectangle,
    type_vector: &[u8],
    shifts: &[AxisShifts],
    slot: usize,
    profile: &BumpProfile,
    l: u32,
) -> Vec<f64> {
    let n = 1usize << l;
    let d = r.dim();
    let axes: Vec<Vec<f64>> = r
        .axes
        .iter()
        .enumerate()
        .map(|(a, i)| {
            let cancel = type_vector[a] as usize != slot;
            let s = shifts[a].slot(slot);
            sample_axis_bump(i.realize_shifted(s), profile, cancel, true, l).unwrap()
        })
        .collect();
    let mut out = vec![0.0; n.pow(d as u32)];
    for (p, v) in out.iter_mut().enumerate() {
        let mut rest = p;
        let mut prod = 1.0;
        for a in (0..d).rev() {
            prod *= axes[a][rest % n];
            rest /= n;
        }
        *v = prod;
    }
    out
}

/// Literal rectangle sum: `(Pi(f, g), sum_R |R|^{-1/2} <f,Phi1> <g,Phi2> int h Phi3)`.
pub fn oracle_paraproduct(
    type_vector: &[u8],
    shifts: &[AxisShifts],
    rects: &[DyadicRectangle],
    profile: &BumpProfile,
    f: &GridFunction,
    g: &GridFunction,
    h: &GridFunction,
) -> (Vec<Complex64>, Complex64) {
    let l = f.log_resolution();
    let total = f.len();
    let cell = 1.0 / total as f64;
    let pair = |u: &GridFunction, phi: &[f64]| -> Complex64 {
        u.samples().iter().zip(phi).map(|(x, p)| x * p).sum::<Complex64>() * cell
    };
    let mut out = vec![Complex64::new(0.0, 0.0); total];
    let mut lambda = Complex64::new(0.0, 0.0);
    for r in rects {
        let b1 = dense_tensor_bump(r, type_vector, shifts, 1, profile, l);
        let b2 = dense_tensor_bump(r, type_vector, shifts, 2, profile, l);
        let b3 = dense_tensor_bump(r, type_vector, shifts, 3, profile, l);
        let w = pair(f, &b1) * pair(g, &b2) / r.measure().sqrt();
        for (o, p) in out.iter_mut().zip(&b3) {
            *o += w * p;
        }
        lambda += w * pair(h, &b3);
    }
    (out, lambda)
}

/// Naive double loop over every frequency pair of the grid (d = 1).
pub fn brute_force_tm_1d(m: &Symbol, f: &GridFunction, g: &GridFunction) -> Vec<Complex64> {
    let n = f.side();
    let (fh, gh) = (f.forward_transform(), g.forward_transform());
    let freqs: Vec<i64> = (0..n).map(|i| fh.axis_frequency(i)).collect();
    (0..n)
        .map(|x| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &a in &freqs {
                for &b in &freqs {
                    let phase = Complex64::from_polar(1.0, std::f64::consts::TAU * ((a + b) * x as i64) as f64 / n as f64);
                    acc += m.evaluate(&[a as f64, b as f64]) * fh.get(&[a]).unwrap() * gh.get(&[b]).unwrap() * phase;
                }
            }
            acc
        })
        .collect()
}

pub fn random_real(rng: &mut SeedStream, dim: usize, l: u32) -> GridFunction {
    let n = 1usize << (l as usize * dim);
    let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    GridFunction::from_real(dim, l, &v).unwrap()
}

pub fn random_complex(rng: &mut SeedStream, dim: usize, l: u32) -> GridFunction {
    let n = 1usize << (l as usize * dim);
    let v: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.normal(), rng.normal())).collect();
    GridFunction::new(dim, l, v).unwrap()
}

/// Up to `max` distinct rectangles drawn from `pool`.
pub fn random_subcollection(rng: &mut SeedStream, pool: &RectangleCollection, max: usize) -> RectangleCollection {
    let mut rects = pool.rects().to_vec();
    // partial Fisher-Yates
    let take = max.min(rects.len());
    for i in 0..take {
        let j = i + rng.below((rects.len() - i) as u64) as usize;
        rects.swap(i, j);
    }
    rects.truncate(take);
    RectangleCollection::new(pool.dim(), rects).unwrap()
}

pub fn random_shifts(rng: &mut SeedStream, dim: usize) -> Vec<AxisShifts> {
    (0..dim)
        .map(|_| AxisShifts::new(rng.uniform(), [rng.uniform(), rng.uniform(), rng.uniform()]).unwrap())
        .collect()
}

/// A random dyadic interval of length between `2^-max_depth` and `2^-min_depth`.
pub fn random_interval(rng: &mut SeedStream, min_depth: u32, max_depth: u32) -> DyadicInterval {
    let depth = min_depth + rng.below((max_depth - min_depth + 1) as u64) as u32;
    let n = rng.below(1u64 << depth) as i64;
    DyadicInterval::new(-(depth as i32), n).unwrap()
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
