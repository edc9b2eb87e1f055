//! Property tests for the basis, sketch, factorized and tree invariants.

use kdsketch::basis::{
    c_vector, indicator_partial_sum_1d, indicator_partial_sum_pd, indicator_partial_sum_pd_expanded, basis_len,
};
use kdsketch::factorized::{build_transform_1d, factorized_basis_1d, factorized_point_basis, sketch_shard_factorized};
use kdsketch::sketch::{approx_count, merge, sketch_shard, standardize};
use kdsketch::*;
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = f64> {
    1e-6..1.0 - 1e-6
}

/// An interval `a < b` inside `[0, 1]`, sometimes touching a face.
fn interval() -> impl Strategy<Value = (f64, f64)> {
    (0.0..1.0f64, 0.0..1.0f64, 0u8..5).prop_map(|(u, v, face)| {
        let a = u.min(v);
        let b = u.max(v).max(a + 1e-3).min(1.0);
        match face {
            0 => (0.0, b),
            1 => (a, 1.0),
            _ => (a, b),
        }
    })
}

fn neighborhood(p: usize) -> impl Strategy<Value = Neighborhood64> {
    prop::collection::vec(interval(), p).prop_map(|iv| {
        let (lo, hi): (Vec<f64>, Vec<f64>) = iv.into_iter().unzip();
        Neighborhood::new(lo, hi).unwrap()
    })
}

fn points(p: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = PointSet64> {
    prop::collection::vec(unit(), n.start * p..n.end * p).prop_map(move |mut c| {
        c.truncate(c.len() / p * p);
        PointSet::new(p, c).unwrap()
    })
}

fn accuracy() -> impl Strategy<Value = AccuracyParameter> {
    prop::collection::vec(1usize..=4, 1..=3).prop_map(|parts| AccuracyParameter::new(parts).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_matches_expanded_form(p in 1usize..=3, order in 1usize..=8, seed in any::<u64>()) {
        let mut s = seed;
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); ((s >> 11) as f64 + 0.5) / (1u64 << 53) as f64 };
        let x = UnitPoint::new((0..p).map(|_| next()).collect()).unwrap();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for _ in 0..p {
            let (u, v) = (next(), next());
            lo.push(u.min(v));
            hi.push(u.max(v) + 1e-9);
        }
        let nb = Neighborhood::new(lo, hi).unwrap();
        let product = indicator_partial_sum_pd(&x, &nb, order).unwrap();
        let expanded = indicator_partial_sum_pd_expanded(&x, &nb, order).unwrap();
        prop_assert!(rel(product, expanded) <= 1e-9, "{product} vs {expanded}");
    }

    #[test]
    fn product_of_one_dimensional_sums(x in prop::collection::vec(unit(), 1..4), order in 1usize..60, seed in 0usize..1000) {
        let p = x.len();
        let nb = Neighborhood::new(
            (0..p).map(|l| ((seed + 7 * l) % 10) as f64 / 20.0).collect(),
            (0..p).map(|l| 0.5 + ((seed + 3 * l) % 10) as f64 / 20.0).collect(),
        ).unwrap();
        let direct: f64 = (0..p)
            .map(|l| indicator_partial_sum_1d(x[l], nb.lower()[l], nb.upper()[l], order).unwrap())
            .product();
        let pd = indicator_partial_sum_pd(&UnitPoint::new(x).unwrap(), &nb, order).unwrap();
        prop_assert!(rel(direct, pd) <= 1e-12);
    }

    #[test]
    fn full_cube_is_exactly_one(x in prop::collection::vec(unit(), 1..5), order in 1usize..300) {
        let p = x.len();
        prop_assert_eq!(indicator_partial_sum_pd(&UnitPoint::new(x).unwrap(), &Neighborhood::full(p), order).unwrap(), 1.0);
    }

    #[test]
    fn partial_sums_are_bounded(x in unit(), (a, b) in interval(), order in 1usize..=500) {
        let v = indicator_partial_sum_1d(x, a, b, order).unwrap();
        prop_assert!(v.abs() <= 3.0, "|1_J| = {}", v.abs());
    }

    #[test]
    fn standardized_entries_in_unit_range(pts in points(2, 1..200), order in 1usize..6) {
        let t = standardize(&sketch_shard(&Shard { id: 0, points: pts }, order, 2).unwrap()).unwrap();
        prop_assert_eq!(t.values()[0], 1.0);
        prop_assert!(t.values().iter().all(|v| v.abs() <= 1.0 + 1e-15));
    }

    #[test]
    fn partition_invariance(pts in points(2, 16..200), parts in prop::sample::select(vec![1usize, 2, 4, 16]), order in 1usize..5) {
        let whole = standardize(&sketch_shard(&Shard { id: 0, points: pts.clone() }, order, 2).unwrap()).unwrap();
        let folded = pts
            .split(parts)
            .iter()
            .map(|s| sketch_shard(s, order, 2).unwrap())
            .reduce(|a, b| merge(&a, &b).unwrap())
            .unwrap();
        let folded = standardize(&folded).unwrap();
        for (a, b) in whole.values().iter().zip(folded.values()) {
            prop_assert!(rel(*a, *b) <= 1e-12);
        }
    }

    #[test]
    fn order_of_summation(pts in points(2, 1..60), nb in neighborhood(2), order in 1usize..6) {
        let t = standardize(&sketch_shard(&Shard { id: 0, points: pts.clone() }, order, 2).unwrap()).unwrap();
        let sketch_side = approx_count(&t, &nb).unwrap();
        let mean = pts
            .iter()
            .map(|x| indicator_partial_sum_pd(&UnitPoint::new(x.to_vec()).unwrap(), &nb, order).unwrap())
            .sum::<f64>()
            / pts.len() as f64;
        prop_assert!(rel(sketch_side, mean) <= 1e-10, "{sketch_side} vs {mean}");
    }

    #[test]
    fn cardinality(acc in accuracy()) {
        let mut seen = vec![false; acc.basis_len()];
        let radices = acc.radices();
        let total: usize = radices.iter().product();
        prop_assert_eq!(total + 1, 2 * acc.order() + 1);
        seen[acc.factorized_position(None).unwrap()] = true;
        let mut tuple = vec![1usize; radices.len()];
        for _ in 0..total {
            let pos = acc.factorized_position(Some(&tuple)).unwrap();
            prop_assert!(!seen[pos]);
            seen[pos] = true;
            for k in (0..tuple.len()).rev() {
                tuple[k] += 1;
                if tuple[k] <= radices[k] { break; }
                tuple[k] = 1;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn trig_budget(acc in accuracy(), x in prop::collection::vec(unit(), 1..4)) {
        let p = x.len();
        let (vectors, calls) = factorized_point_basis(&UnitPoint::new(x).unwrap(), &acc);
        prop_assert_eq!(calls, (p * acc.factors()) as u64);
        prop_assert!(vectors.iter().all(|v| v.len() == acc.basis_len()));
    }

    #[test]
    fn end_to_end_counts(pts in points(2, 1..300), nb in neighborhood(2), acc in accuracy()) {
        prop_assume!(acc.order() <= 15);
        let shard = Shard { id: 0, points: pts };
        let tf = build_transform_1d(&acc).unwrap();
        let ft = sketch_shard_factorized(&shard, &acc, 2).unwrap().standardize().unwrap();
        let recovered = kdsketch::factorized::recover_standard(&ft, &tf).unwrap();
        let direct = standardize(&sketch_shard(&shard, acc.order(), 2).unwrap()).unwrap();
        let (r, d) = (approx_count(&recovered, &nb).unwrap(), approx_count(&direct, &nb).unwrap());
        prop_assert!((r - d).abs() <= 1e-7, "{r} vs {d}");
    }
}

/// Every accuracy parameter the transform accepts reproduces the standard
/// basis on a dense grid.
#[test]
fn basis_equivalence_on_grid() {
    for parts in [vec![1], vec![4], vec![3, 5], vec![2, 2], vec![2, 3, 2], vec![5, 3], vec![11], vec![8, 8], vec![4, 16]] {
        let acc = AccuracyParameter::new(parts).unwrap();
        let tf = build_transform_1d(&acc).unwrap();
        let m = acc.basis_len();
        let mut fact = vec![0.0; m];
        let mut std = vec![0.0; m];
        let mut worst = 0.0f64;
        for i in 0..1000 {
            let z = (i as f64 + 0.5) / 1000.0;
            factorized_basis_1d(z, &acc, &mut fact);
            c_vector(z, &mut std);
            let got = tf.apply(&fact);
            for (g, s) in got.iter().zip(&std) {
                worst = worst.max((g - s).abs());
            }
        }
        assert!(worst < 1e-8, "{acc}: {worst:e}");
        assert_eq!(m, basis_len(acc.order()));
    }
}

/// A long leading factor cannot be represented to the residual tolerance in
/// double precision; the builder must say so rather than return a bad matrix.
#[test]
fn ill_conditioned_transform_is_rejected() {
    for parts in [vec![13], vec![2, 32]] {
        let acc = AccuracyParameter::new(parts).unwrap();
        assert!(matches!(build_transform_1d(&acc), Err(Error::SingularTransform(_))));
    }
}

/// Twenty fixed-seed draws of the accuracy parameter, counted directly.
#[test]
fn cardinality_twenty_draws() {
    let mut s: u64 = 0x9e37_79b9_7f4a_7c15;
    for _ in 0..20 {
        let mut parts = Vec::new();
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        for k in 0..1 + (s % 3) as usize {
            parts.push(1 + ((s >> (8 * k + 4)) % 6) as usize);
        }
        let acc = AccuracyParameter::new(parts).unwrap();
        let enumerated = 1 + acc.radices().iter().product::<usize>();
        assert_eq!(enumerated, 2 * acc.order() + 1);
        assert_eq!(acc.basis_len(), enumerated);
    }
}
