use crackseg_core::optim::{opt_init, opt_step, Algorithm, OptimizerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one_step(spec: &OptimizerSpec, x0: f64, g: f64) -> f64 {
    let mut p = vec![x0];
    let mut s = opt_init(spec, &p).unwrap();
    opt_step(spec, &mut s, &mut p, &vec![g]).unwrap();
    p[0]
}

#[test]
fn sgd_first_step() {
    let spec = OptimizerSpec {
        learning_rate: 0.1,
        ..OptimizerSpec::defaults(Algorithm::Sgd)
    };
    assert!((one_step(&spec, 1.0, 1.0) - 0.9).abs() <= 1e-12);
    let momentum = OptimizerSpec {
        learning_rate: 0.1,
        momentum: 0.9,
        ..OptimizerSpec::defaults(Algorithm::Sgd)
    };
    // velocity starts at zero, so the first step is plain SGD
    assert!((one_step(&momentum, 1.0, 1.0) - 0.9).abs() <= 1e-12);
}

#[test]
fn adadelta_first_step() {
    let spec = OptimizerSpec::defaults(Algorithm::Adadelta);
    assert_eq!(
        (spec.rho, spec.epsilon, spec.learning_rate),
        (0.95, 1e-6, 1.0)
    );
    let eg = 0.05 * 1.0;
    let oracle = -(1e-6f64).sqrt() / (eg + 1e-6f64).sqrt();
    let delta = one_step(&spec, 0.0, 1.0);
    assert!((delta - oracle).abs() <= 1e-12);
    assert!((delta + 0.0044719).abs() < 1e-6);
}

#[test]
fn adam_first_step_is_sign_scaled() {
    let spec = OptimizerSpec::defaults(Algorithm::Adam);
    for g in [3.0, -0.02, 1e-3] {
        let m_hat = (1.0 - 0.9) * g / (1.0 - 0.9);
        let v_hat = (1.0 - 0.999) * g * g / (1.0 - 0.999);
        let oracle = -0.001 * m_hat / (f64::sqrt(v_hat) + 1e-8);
        let delta = one_step(&spec, 0.0, g);
        assert!((delta - oracle).abs() <= 1e-12);
        assert!((delta + 0.001 * g.signum()).abs() < 1e-6);
    }
}

#[test]
fn every_algorithm_solves_a_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let curv: Vec<f64> = (0..10).map(|_| rng.random_range(0.5..2.0)).collect();
    let centre: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    // Adam-family steps are bounded by the learning rate, so 500 steps at
    // 0.001 cannot travel much further than this.
    let start: Vec<f64> = centre
        .iter()
        .map(|c| c + rng.random_range(-0.3..0.3))
        .collect();
    let f = |x: &[f64]| -> f64 {
        x.iter()
            .zip(&centre)
            .zip(&curv)
            .map(|((x, c), a)| 0.5 * a * (x - c).powi(2))
            .sum()
    };
    for alg in Algorithm::ALL {
        let spec = OptimizerSpec::defaults(alg);
        let mut x = start.clone();
        let mut s = opt_init(&spec, &x).unwrap();
        let f0 = f(&x);
        for _ in 0..500 {
            let g: Vec<f64> = x
                .iter()
                .zip(&centre)
                .zip(&curv)
                .map(|((x, c), a)| a * (x - c))
                .collect();
            opt_step(&spec, &mut s, &mut x, &g).unwrap();
        }
        assert!(
            f(&x) <= 0.1 * f0,
            "{alg} reached {} of the initial loss",
            f(&x) / f0
        );
    }
}

#[test]
fn steps_are_pure_functions_of_their_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    for alg in Algorithm::ALL {
        let spec = OptimizerSpec::defaults(alg);
        let mut s = opt_init(&spec, &x).unwrap();
        let mut p = x.clone();
        for _ in 0..3 {
            opt_step(&spec, &mut s, &mut p, &g).unwrap();
        }
        let (mut s1, mut p1) = (s.clone(), p.clone());
        let (mut s2, mut p2) = (s.clone(), p.clone());
        opt_step(&spec, &mut s1, &mut p1, &g).unwrap();
        opt_step(&spec, &mut s2, &mut p2, &g).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p1), bits(&p2));
        assert_eq!(s1, s2);
    }
}
