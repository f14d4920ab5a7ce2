use crackseg_core::decision::{map_rule, ml_rule, threshold_rule};
use crackseg_core::metrics::{confusion, recall};
use crackseg_core::{Mask, PriorMap, ProbMap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn probs(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ProbMap {
    // a few exact ties at 0.5 keep the tie rule honest
    let v: Vec<f64> = (0..h * w)
        .map(|_| {
            if rng.random_bool(0.05) {
                0.5
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    ProbMap::from_crack_probs(h, w, &v).unwrap()
}

fn priors(rng: &mut ChaCha8Rng, h: usize, w: usize, hi: f64) -> PriorMap {
    let v: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.001..hi)).collect();
    PriorMap::from_crack_priors(h, w, &v).unwrap()
}

#[test]
fn rule_identities_hold_pixelwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let p = probs(&mut rng, 8, 8);
        let q = priors(&mut rng, 8, 8, 0.999);
        assert_eq!(map_rule(&p), threshold_rule(&p, 0.5).unwrap());
        let ml = ml_rule(&p, &q).unwrap();
        let oracle = Mask::from_fn(8, 8, |y, x| {
            // ratio form: p_c / q_c ≥ p_b / q_b
            p.crack(y, x) * q.background(y, x) >= p.background(y, x) * q.crack(y, x)
        });
        let thresh = Mask::from_fn(8, 8, |y, x| p.crack(y, x) >= q.crack(y, x));
        assert_eq!(ml, thresh);
        assert_eq!(ml, oracle);
    }
}

#[test]
fn low_priors_never_lose_recall() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..100 {
        let p = probs(&mut rng, 8, 8);
        let q = priors(&mut rng, 8, 8, 0.5);
        let truth = Mask::from_fn(8, 8, |_, _| rng.random_bool(0.2));
        let map = confusion(&map_rule(&p), &truth).unwrap();
        let ml = confusion(&ml_rule(&p, &q).unwrap(), &truth).unwrap();
        assert!(ml.tp >= map.tp);
        assert!(ml.fn_ <= map.fn_);
        assert!(recall(&ml) >= recall(&map));
    }
}

proptest! {
    #[test]
    fn threshold_sets_are_nested(seed in any::<u64>(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = probs(&mut rng, 6, 6);
        let m_lo = threshold_rule(&p, lo).unwrap();
        let m_hi = threshold_rule(&p, hi).unwrap();
        for (h, l) in m_hi.labels().iter().zip(m_lo.labels()) {
            prop_assert!(h <= l);
        }
    }

    #[test]
    fn prior_adjustment_at_half_is_ml(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = probs(&mut rng, 5, 5);
        let q = priors(&mut rng, 5, 5, 0.9);
        let adj = p.prior_adjusted(&q).unwrap();
        let by_adj = threshold_rule(&adj, 0.5).unwrap();
        let by_ml = ml_rule(&p, &q).unwrap();
        prop_assert_eq!(by_adj, by_ml);
    }
}
