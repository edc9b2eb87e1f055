use kdsketch::basis::{coef_c, indicator_partial_sum_pd};
use kdsketch::eval::generate_scaled;
use kdsketch::sketch::*;
use kdsketch::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(n: usize, p: usize, seed: u64) -> PointSet64 {
    generate_scaled(DataDistribution::Uniform, n, p, 0.0, seed, 1e-6).unwrap()
}

fn whole(points: &PointSet64) -> Shard<f64> {
    Shard {
        id: 0,
        points: points.clone(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

#[test]
fn single_point_and_empty_shard() {
    let pts = PointSet::new(1, vec![0.5]).unwrap();
    let t = sketch_shard(&whole(&pts), 1, 1).unwrap();
    assert_eq!(t.values(), &[1.0, 0.5f64.cos(), 0.5f64.sin()]);
    assert_eq!(t.count(), 1);
    let empty = sketch_shard(&whole(&PointSet::empty(2)), 3, 2).unwrap();
    assert_eq!(empty.count(), 0);
    assert!(empty.values().iter().all(|&v| v == 0.0));
    assert!(matches!(standardize(&empty), Err(Error::EmptySketch)));
}

#[test]
fn brute_force_double_loop() {
    let pts = uniform(100, 2, 3);
    let t = sketch_shard(&whole(&pts), 2, 2).unwrap();
    for j0 in 0..5 {
        for j1 in 0..5 {
            let brute: f64 = pts
                .iter()
                .map(|x| coef_c(j0, x[0]).unwrap() * coef_c(j1, x[1]).unwrap())
                .sum();
            assert!((t.get(&[j0, j1]) - brute).abs() < 1e-12, "({j0},{j1})");
        }
    }
}

#[test]
fn merge_identity_and_commutativity() {
    let a = sketch_shard(&whole(&uniform(50, 2, 4)), 3, 2).unwrap();
    let b = sketch_shard(&whole(&uniform(70, 2, 5)), 3, 2).unwrap();
    let zero = SketchTensor::zeros(AccuracyParameter::single(3).unwrap(), 2);
    assert_eq!(merge(&a, &zero).unwrap(), a);
    let (ab, ba) = (merge(&a, &b).unwrap(), merge(&b, &a).unwrap());
    assert_eq!(ab.values(), ba.values());
    assert_eq!(ab.count(), 120);
    let other = sketch_shard(&whole(&uniform(10, 2, 6)), 4, 2).unwrap();
    assert!(matches!(merge(&a, &other), Err(Error::ShapeMismatch(_))));
}

#[test]
fn four_way_partition() {
    let pts = uniform(1000, 3, 7);
    let full = sketch_shard(&whole(&pts), 3, 3).unwrap();
    // An uneven partition, not just `split`.
    let cuts = [0, 13, 400, 401, 1000];
    let folded = cuts
        .windows(2)
        .map(|w| {
            let part = PointSet::new(3, pts.coords()[3 * w[0]..3 * w[1]].to_vec()).unwrap();
            sketch_shard(&whole(&part), 3, 3).unwrap()
        })
        .reduce(|a, b| merge(&a, &b).unwrap())
        .unwrap();
    for (a, b) in full.values().iter().zip(folded.values()) {
        assert!(rel(*a, *b) <= 1e-12);
    }
}

#[test]
fn standardize_examples() {
    let raw = SketchTensor::from_parts(
        AccuracyParameter::single(1).unwrap(),
        1,
        vec![2.0, 2.0 * 0.5f64.cos(), 2.0 * 0.5f64.sin()],
        2,
        false,
    )
    .unwrap();
    let s = standardize(&raw).unwrap();
    assert_eq!(s.values(), &[1.0, 0.5f64.cos(), 0.5f64.sin()]);
    assert_eq!(standardize(&s).unwrap(), s);
    let t = standardize(&sketch_shard(&whole(&uniform(1000, 2, 8)), 5, 2).unwrap()).unwrap();
    assert_eq!(t.values()[0], 1.0);
    assert!(t.values().iter().all(|v| v.abs() <= 1.0));
}

#[test]
fn approx_count_uniform_half() {
    let pts = uniform(100_000, 2, 9);
    let (t, _) = map_reduce_build(&pts.split(4), 64, 2, 1).unwrap();
    let full = Neighborhood::full(2);
    assert_eq!(approx_count(&t, &full).unwrap(), 1.0);
    let nb = Neighborhood::new(vec![0.2, 0.0], vec![0.7, 1.0]).unwrap();
    let approx = approx_count(&t, &nb).unwrap();
    let exact = pts.fraction_inside(&nb);
    assert!((approx - 0.5).abs() < 0.01, "{approx}");
    assert!((approx - exact).abs() < 0.01);
    assert!(matches!(
        approx_count(&sketch_shard(&whole(&pts), 2, 2).unwrap(), &nb),
        Err(Error::NotStandardized)
    ));
}

#[test]
fn approx_count_is_mean_of_partial_sums() {
    let pts = uniform(1000, 2, 10);
    let t = standardize(&sketch_shard(&whole(&pts), 6, 2).unwrap()).unwrap();
    let nb = Neighborhood::new(vec![0.1, 0.35], vec![0.55, 0.9]).unwrap();
    let mean = pts
        .iter()
        .map(|x| indicator_partial_sum_pd(&UnitPoint::new(x.to_vec()).unwrap(), &nb, 6).unwrap())
        .sum::<f64>()
        / 1000.0;
    assert!(rel(approx_count(&t, &nb).unwrap(), mean) <= 1e-10);
}

#[test]
fn map_reduce_determinism_and_reads() {
    let pts = uniform(20_000, 2, 11);
    let single = standardize(&sketch_shard(&whole(&pts), 4, 2).unwrap()).unwrap();
    let (one, report) = map_reduce_build(&pts.split(1), 4, 2, 1).unwrap();
    assert_eq!(one, single);
    assert_eq!(report.points_read, 20_000);
    let shards = pts.split(16);
    let (reference, _) = map_reduce_build(&shards, 4, 2, 1).unwrap();
    for parallelism in [4, 8] {
        let (t, r) = map_reduce_build(&shards, 4, 2, parallelism).unwrap();
        assert_eq!(r.points_read, 20_000);
        for (a, b) in reference.values().iter().zip(t.values()) {
            assert!(rel(*a, *b) <= 1e-12);
        }
    }
    let empty = vec![Shard {
        id: 0,
        points: PointSet::<f64>::empty(2),
    }];
    assert!(map_reduce_build(&empty, 4, 2, 1).is_err());
}

fn random_box(rng: &mut ChaCha8Rng) -> Neighborhood64 {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for _ in 0..2 {
        let a: f64 = rng.random_range(0.05..0.6);
        lo.push(a);
        hi.push(rng.random_range(a + 0.2..0.95));
    }
    Neighborhood::new(lo, hi).unwrap()
}

#[test]
fn empirical_error_decays_with_order() {
    let pts = uniform(100_000, 2, 12);
    let (t8, _) = map_reduce_build(&pts.split(2), 8, 2, 1).unwrap();
    let (t64, _) = map_reduce_build(&pts.split(2), 64, 2, 1).unwrap();
    assert_eq!(empirical_error(&pts, &t64, &Neighborhood::full(2)).unwrap(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut better = 0;
    let mut worst64 = 0.0f64;
    for _ in 0..10 {
        let nb = random_box(&mut rng);
        let e8 = empirical_error(&pts, &t8, &nb).unwrap().abs();
        let e64 = empirical_error(&pts, &t64, &nb).unwrap().abs();
        if e64 <= e8 {
            better += 1;
        }
        worst64 = worst64.max(e64);
    }
    assert!(better >= 8, "J=64 better in only {better} of 10");
    assert!(worst64 <= 0.02, "{worst64}");
}
