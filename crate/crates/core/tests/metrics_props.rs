use crackseg_core::metrics::{
    confusion, default_thresholds, f1, mpa, pr_curve, precision, recall, PrCurve, PrPoint,
};
use crackseg_core::{Mask, ProbMap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_tally(pred: &Mask, truth: &Mask) -> [u64; 4] {
    let mut c = [0u64; 4];
    for y in 0..truth.height() {
        for x in 0..truth.width() {
            let k = match (pred.get(y, x), truth.get(y, x)) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            c[k] += 1;
        }
    }
    c
}

fn naive_ratios(c: [u64; 4]) -> (f64, f64, f64) {
    let [tp, fp, fn_, _] = c.map(|v| v as f64);
    let p = if tp + fp == 0.0 { 1.0 } else { tp / (tp + fp) };
    let r = if tp + fn_ == 0.0 {
        1.0
    } else {
        tp / (tp + fn_)
    };
    let f = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f)
}

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, density: f64) -> Mask {
    Mask::from_fn(h, w, |_, _| rng.random_bool(density))
}

fn random_probs(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ProbMap {
    let v: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>()).collect();
    ProbMap::from_crack_probs(h, w, &v).unwrap()
}

#[test]
fn counts_and_ratios_match_naive_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let dp = rng.random_range(0.0..0.3);
        let dt = rng.random_range(0.0..0.3);
        let pred = random_mask(&mut rng, 16, 16, dp);
        let truth = random_mask(&mut rng, 16, 16, dt);
        let c = confusion(&pred, &truth).unwrap();
        let naive = naive_tally(&pred, &truth);
        assert_eq!([c.tp, c.fp, c.fn_, c.tn], naive);
        let (p, r, f) = naive_ratios(naive);
        assert!((precision(&c) - p).abs() <= 1e-12);
        assert!((recall(&c) - r).abs() <= 1e-12);
        assert!((f1(precision(&c), recall(&c)) - f).abs() <= 1e-12);
    }
}

#[test]
fn curve_matches_brute_force_thresholding() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let thresholds = default_thresholds();
    for _ in 0..100 {
        let n = rng.random_range(1..4);
        let probs: Vec<ProbMap> = (0..n).map(|_| random_probs(&mut rng, 8, 8)).collect();
        let truths: Vec<Mask> = (0..n).map(|_| random_mask(&mut rng, 8, 8, 0.2)).collect();
        let curve = pr_curve(&probs, &truths, &thresholds).unwrap();
        for &t in &thresholds {
            let mut c = [0u64; 4];
            for (p, m) in probs.iter().zip(&truths) {
                let pred = Mask::from_fn(8, 8, |y, x| p.crack(y, x) >= t);
                for (a, b) in c.iter_mut().zip(naive_tally(&pred, m)) {
                    *a += b;
                }
            }
            let (pp, rr, _) = naive_ratios(c);
            let pt = curve.point_at(t).unwrap();
            assert!((pt.precision - pp).abs() <= 1e-12);
            assert!((pt.recall - rr).abs() <= 1e-12);
        }
    }
}

#[test]
fn perfect_maps_and_zero_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let truth = random_mask(&mut rng, 12, 12, 0.1);
        let p = ProbMap::from_mask(&truth);
        let curve = pr_curve(&[p], std::slice::from_ref(&truth), &default_thresholds()).unwrap();
        assert_eq!(mpa(&curve).unwrap(), 1.0);
        let noisy = random_probs(&mut rng, 12, 12);
        let curve = pr_curve(
            &[noisy],
            std::slice::from_ref(&truth),
            &default_thresholds(),
        )
        .unwrap();
        let z = curve.point_at(0.0).unwrap();
        assert_eq!(z.recall, 1.0);
        if truth.crack_count() > 0 {
            assert!((z.precision - truth.crack_fraction()).abs() <= 1e-12);
        }
    }
}

#[test]
fn f1_bounds_on_grid() {
    for i in 1..=50 {
        for j in 1..=50 {
            let (p, r) = (i as f64 / 50.0, j as f64 / 50.0);
            let f = f1(p, r);
            assert!(f <= 2.0 * p.min(r) + 1e-15);
            assert!(f >= p.min(r) - 1e-15);
        }
    }
    assert_eq!(f1(0.0, 0.0), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn all_scores_lie_in_unit_interval(
        seed in any::<u64>(),
        density in 0.0f64..0.6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probs = vec![random_probs(&mut rng, 6, 7), random_probs(&mut rng, 6, 7)];
        let truths = vec![random_mask(&mut rng, 6, 7, density), random_mask(&mut rng, 6, 7, density)];
        let curve = pr_curve(&probs, &truths, &default_thresholds()).unwrap();
        for pt in &curve.points {
            prop_assert!((0.0..=1.0).contains(&pt.precision));
            prop_assert!((0.0..=1.0).contains(&pt.recall));
            prop_assert!((0.0..=1.0).contains(&f1(pt.precision, pt.recall)));
        }
        let a = mpa(&curve).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn pooling_equals_concatenation(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probs: Vec<ProbMap> = (0..n).map(|_| random_probs(&mut rng, 4, 5)).collect();
        let truths: Vec<Mask> = (0..n).map(|_| random_mask(&mut rng, 4, 5, 0.3)).collect();
        let pooled = pr_curve(&probs, &truths, &default_thresholds()).unwrap();
        // stack the images vertically into one tall image
        let crack: Vec<f64> = probs.iter().flat_map(|p| p.crack_probs().collect::<Vec<_>>()).collect();
        let big_p = ProbMap::from_crack_probs(4 * n, 5, &crack).unwrap();
        let big_t = Mask::from_fn(4 * n, 5, |y, x| truths[y / 4].get(y % 4, x));
        let single = pr_curve(&[big_p], &[big_t], &default_thresholds()).unwrap();
        prop_assert_eq!(pooled, single);
    }

    #[test]
    fn mpa_ignores_threshold_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probs = vec![random_probs(&mut rng, 8, 8)];
        let truths = vec![random_mask(&mut rng, 8, 8, 0.25)];
        let mut ts = default_thresholds();
        let a = mpa(&pr_curve(&probs, &truths, &ts).unwrap()).unwrap();
        ts.reverse();
        ts.swap(3, 70);
        let b = mpa(&pr_curve(&probs, &truths, &ts).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip(points in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..20)) {
        let mut pts: Vec<PrPoint> = points
            .iter()
            .enumerate()
            .map(|(i, &(p, r))| PrPoint { threshold: 1.0 - i as f64 / 32.0, precision: p, recall: r })
            .collect();
        pts.dedup_by(|a, b| a.threshold == b.threshold);
        let curve = PrCurve { points: pts };
        let back = PrCurve::from_csv(&curve.to_csv()).unwrap();
        prop_assert_eq!(back.points.len(), curve.points.len());
        for (a, b) in back.points.iter().zip(&curve.points) {
            prop_assert!((a.precision - b.precision).abs() <= 1e-11);
            prop_assert!((a.recall - b.recall).abs() <= 1e-11);
        }
    }
}
