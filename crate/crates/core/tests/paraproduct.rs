mod common;

use num_complex::Complex64;
use polydisc::harness::experiments::triple_inputs;
use polydisc::harness::SeedStream;
use polydisc::paraproduct::{dense_rectangle_bump, standard_collection, AxisShifts};
use polydisc::*;
use proptest::prelude::*;

use common::*;

fn para(dim: usize, type_vector: Vec<u8>, rects: RectangleCollection, shifts: Vec<AxisShifts>, l: u32) -> Paraproduct {
    let spec = ParaproductSpec::new(type_vector, rects).unwrap().with_shifts(shifts).unwrap();
    assert_eq!(spec.dim, dim);
    Paraproduct::new(spec, l).unwrap()
}

/// max over trials of |Lambda| at each lattice point, inputs normalized in L^3.
fn lattice_maxima(dim: usize, type_vector: &[u8], l: u32, trials: u64) -> Vec<f64> {
    let base = para(dim, type_vector.to_vec(), standard_collection(dim, l).unwrap(), vec![AxisShifts::ZERO; dim], l);
    let points = ShiftLattice::default().points();
    let mut best = vec![0.0f64; points.len()];
    for t in 0..trials {
        let x = triple_inputs(1, dim, l, t).unwrap();
        let x: Vec<GridFunction> = x.iter().map(|f| f.normalized(3.0).unwrap().unwrap()).collect();
        for (b, s) in best.iter_mut().zip(&points) {
            let p = base.reshifted(vec![AxisShifts::uniform(*s); dim]).unwrap();
            *b = b.max(p.trilinear_symmetric(&x[0], &x[1], &x[2]).unwrap().norm());
        }
    }
    best
}

#[test]
fn lattice_supremum_stays_bounded_across_resolutions() {
    for (dim, tv, ls) in [(1usize, vec![1u8], vec![6u32, 8, 10]), (2, vec![1, 2], vec![5, 6])] {
        let sups: Vec<f64> = ls.iter().map(|&l| lattice_maxima(dim, &tv, l, 50).into_iter().fold(0.0, f64::max)).collect();
        let hi = sups.iter().cloned().fold(0.0, f64::max);
        let lo = sups.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi <= 2.0 * lo, "d={dim}: lattice suprema {sups:?}");
    }
}

/// Lattice points with `lambda > 0` move the bumps to `2^lambda n`, so small-scale terms drift
/// away from the inputs' mass; the per-point maxima spread by 10x or more at these sizes.
#[test]
#[ignore = "per-point spread over the shift lattice is 10-50x at desk resolutions"]
fn lattice_spread_within_four() {
    for (dim, tv, l) in [(1usize, vec![1u8], 8u32), (2, vec![1, 2], 6)] {
        let m = lattice_maxima(dim, &tv, l, 20);
        let hi = m.iter().cloned().fold(0.0, f64::max);
        let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi <= 4.0 * lo, "d={dim}: spread {}", hi / lo);
    }
}

#[test]
fn brute_force_sum_on_small_collection() {
    let l = 6;
    let mut rng = SeedStream::with_stream(21, 0);
    let rects = random_subcollection(&mut rng, &standard_collection(2, l).unwrap(), 25);
    assert_eq!(rects.len(), 25);
    for tv in [vec![1u8, 1], vec![1, 2], vec![3, 2]] {
        let shifts = random_shifts(&mut rng, 2);
        let p = para(2, tv.clone(), rects.clone(), shifts.clone(), l);
        let [f, g, h] = [0, 1, 2].map(|_| random_complex(&mut rng, 2, l));
        let (want, want_lambda) = oracle_paraproduct(&tv, &shifts, rects.rects(), &BumpProfile::default(), &f, &g, &h);
        assert!(max_diff(p.apply(&f, &g).unwrap().samples(), &want) <= 1e-12);
        assert!((p.trilinear_form(&f, &g, &h).unwrap() - want_lambda).norm() <= 1e-12);
    }
}

#[test]
fn three_parameter_oracle() {
    let l = 4;
    let mut rng = SeedStream::with_stream(22, 0);
    let rects = random_subcollection(&mut rng, &standard_collection(3, l).unwrap(), 12);
    let tv = vec![2u8, 3, 1];
    let shifts = random_shifts(&mut rng, 3);
    let p = para(3, tv.clone(), rects.clone(), shifts.clone(), l);
    let [f, g, h] = [0, 1, 2].map(|_| random_complex(&mut rng, 3, l));
    let (want, want_lambda) = oracle_paraproduct(&tv, &shifts, rects.rects(), &BumpProfile::default(), &f, &g, &h);
    assert!(max_diff(p.apply(&f, &g).unwrap().samples(), &want) <= 1e-12);
    assert!((p.trilinear_symmetric(&f, &g, &h).unwrap() - want_lambda).norm() <= 1e-12);
}

#[test]
fn dense_bumps_match_axis_products() {
    let l = 6;
    let mut rng = SeedStream::with_stream(23, 0);
    let rects = random_subcollection(&mut rng, &standard_collection(2, l).unwrap(), 10);
    let tv = vec![2u8, 1];
    let shifts = random_shifts(&mut rng, 2);
    let p = para(2, tv.clone(), rects.clone(), shifts.clone(), l);
    for r in rects.iter() {
        for slot in 1..=3 {
            let dense = dense_rectangle_bump(&p, slot, r).unwrap();
            let want = dense_tensor_bump(r, &tv, &shifts, slot, &BumpProfile::default(), l);
            let err = dense.samples().iter().zip(&want).map(|(a, b)| (a.re - b).abs() + a.im.abs()).fold(0.0, f64::max);
            assert!(err <= 1e-12, "{r} slot {slot}: {err}");
        }
    }
}

#[test]
fn coefficients_factor_on_tensor_inputs() {
    let l = 6;
    let mut rng = SeedStream::with_stream(24, 0);
    let rects = random_subcollection(&mut rng, &standard_collection(2, l).unwrap(), 40);
    let tv = vec![1u8, 2];
    let shifts = random_shifts(&mut rng, 2);
    let p2 = para(2, tv.clone(), rects.clone(), shifts.clone(), l);
    let (u, v) = (random_complex(&mut rng, 1, l), random_complex(&mut rng, 1, l));
    let n = 1usize << l;
    let tensor: Vec<Complex64> = (0..n * n).map(|i| u.samples()[i / n] * v.samples()[i % n]).collect();
    let f = GridFunction::new(2, l, tensor).unwrap();
    // the same bumps seen one axis at a time
    let axis = |a: usize| {
        let intervals = RectangleCollection::from_iter_dedup(
            1,
            rects.iter().map(|r| DyadicRectangle::new(vec![r.axes[a]]).unwrap()),
        )
        .unwrap();
        para(1, vec![tv[a]], intervals, vec![shifts[a]], l)
    };
    let (px, py) = (axis(0), axis(1));
    for slot in 1..=3 {
        let c2 = p2.coefficients(slot, &f).unwrap();
        let (cx, cy) = (px.coefficients(slot, &u).unwrap(), py.coefficients(slot, &v).unwrap());
        let find = |p: &Paraproduct, i: DyadicInterval| p.spec().collection.rects().iter().position(|r| r.axes[0] == i).unwrap();
        for (r, got) in rects.iter().zip(&c2) {
            let want = cx[find(&px, r.axes[0])] * cy[find(&py, r.axes[1])];
            assert!((got - want).norm() <= 1e-10, "{r} slot {slot}");
        }
    }
}

#[test]
fn absolute_sums_dominate_the_form() {
    let l = 6;
    let mut rng = SeedStream::with_stream(25, 0);
    for _ in 0..10 {
        let rects = random_subcollection(&mut rng, &standard_collection(2, l).unwrap(), 60);
        let p = para(2, vec![1, 2], rects, random_shifts(&mut rng, 2), l);
        let [f, g, h] = [0, 1, 2].map(|_| random_complex(&mut rng, 2, l));
        let lambda = p.trilinear_symmetric(&f, &g, &h).unwrap().norm();
        let abs = p.trilinear_absolute(&f, &g, &h).unwrap();
        let mass = p.pair_mass(&f, &g).unwrap() * h.lp_norm(2.0).unwrap();
        assert!(lambda <= abs * (1.0 + 1e-12));
        assert!(abs <= mass * (1.0 + 1e-12));
    }
}

#[test]
fn empty_collection_gives_zero() {
    let l = 5;
    let p = para(2, vec![1, 2], RectangleCollection::empty(2), vec![AxisShifts::ZERO; 2], l);
    let f = random_complex(&mut SeedStream::new(1), 2, l);
    assert_eq!(p.apply(&f, &f).unwrap().sup_norm(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn bilinear_in_inputs(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let l = 5;
        let mut rng = SeedStream::new(seed);
        let rects = random_subcollection(&mut rng, &standard_collection(2, l).unwrap(), 30);
        let p = para(2, vec![1 + rng.below(3) as u8, 1 + rng.below(3) as u8], rects, random_shifts(&mut rng, 2), l);
        let [f1, f2, g, h] = [0, 1, 2, 3].map(|_| random_complex(&mut rng, 2, l));
        let (ca, cb) = (Complex64::new(a, b), Complex64::new(b, -a));
        let mix = f1.scale(ca).add(&f2.scale(cb)).unwrap();
        let lhs = p.apply(&mix, &g).unwrap();
        let rhs = p.apply(&f1, &g).unwrap().scale(ca).add(&p.apply(&f2, &g).unwrap().scale(cb)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12 * (1.0 + rhs.sup_norm()));
        let mixed_g = p.apply(&g, &mix).unwrap();
        let sum_g = p.apply(&g, &f1).unwrap().scale(ca).add(&p.apply(&g, &f2).unwrap().scale(cb)).unwrap();
        prop_assert!(mixed_g.max_abs_diff(&sum_g).unwrap() <= 1e-12 * (1.0 + sum_g.sup_norm()));
        let lam = p.trilinear_form(&f1, &g, &h).unwrap();
        prop_assert!((p.trilinear_symmetric(&f1, &g, &h).unwrap() - lam).norm() <= 1e-12 * (1.0 + lam.norm()));
    }
}
