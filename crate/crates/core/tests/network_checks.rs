use crackseg_core::network::{
    forward, init_params, loss_and_gradients, predict, weighted_cross_entropy, ArchSpec, NetParams,
};
use crackseg_core::optim::ParamBuffers;
use crackseg_core::{ClassWeights, Grid3, Mask};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Grid3 {
    Grid3::from_fn(h, w, 3, |_, _, _| rng.random::<f64>())
}

fn loss(params: &NetParams, img: &Grid3, truth: &Mask, w: &ClassWeights) -> f64 {
    let (p, _) = forward(params, img).unwrap();
    weighted_cross_entropy(&p, truth, w).unwrap()
}

#[test]
fn analytic_gradients_match_central_differences() {
    let arch = ArchSpec {
        depth: 2,
        channels: vec![4, 4],
        kernel_size: 3,
        input_height: 8,
        input_width: 8,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let img = image(&mut rng, 8, 8);
    let truth = Mask::from_fn(8, 8, |_, _| rng.random_bool(0.3));
    let w = ClassWeights::new(0.7, 2.5).unwrap();
    let mut params = init_params(&arch, 5).unwrap();
    // nonzero biases so every bias gradient is exercised off the origin
    for l in &mut params.layers {
        for b in &mut l.bias {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let (_, grads) = loss_and_gradients(&params, &img, &truth, &w).unwrap();
    let analytic: Vec<Vec<f64>> = grads.buffers().iter().map(|b| b.to_vec()).collect();
    let names = params.layout();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (bi, (name, len)) in names.iter().enumerate() {
        for k in 0..*len {
            let orig = params.buffers()[bi][k];
            params.buffers_mut()[bi][k] = orig + h;
            let up = loss(&params, &img, &truth, &w);
            params.buffers_mut()[bi][k] = orig - h;
            let down = loss(&params, &img, &truth, &w);
            params.buffers_mut()[bi][k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[bi][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-4, "{name}[{k}]: analytic {a}, numeric {numeric}");
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn single_sample_overfits_monotonically() {
    let arch = ArchSpec {
        depth: 1,
        channels: vec![4],
        kernel_size: 3,
        input_height: 16,
        input_width: 16,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let img = image(&mut rng, 16, 16);
    let truth = Mask::from_fn(16, 16, |y, x| y == x || y == x + 1);
    let w = ClassWeights::new(1.0, 1.0).unwrap();
    let mut params = init_params(&arch, 2).unwrap();
    let mut prev = f64::INFINITY;
    for _ in 0..50 {
        let (l, g) = loss_and_gradients(&params, &img, &truth, &w).unwrap();
        assert!(l < prev, "loss rose from {prev} to {l}");
        prev = l;
        for (p, d) in params.buffers_mut().into_iter().zip(g.buffers()) {
            for (v, dv) in p.iter_mut().zip(d) {
                *v -= 0.05 * dv;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_shape_and_normalization(
        depth in 1usize..4,
        ch in 1usize..5,
        k in prop::sample::select(vec![1usize, 3, 5]),
        hm in 1usize..4,
        wm in 1usize..4,
        seed in any::<u64>(),
    ) {
        let (h, w) = (hm << depth, wm << depth);
        let arch = ArchSpec {
            depth,
            channels: vec![ch; depth],
            kernel_size: k,
            input_height: h,
            input_width: w,
        };
        let params = init_params(&arch, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = predict(&params, &image(&mut rng, h, w)).unwrap();
        prop_assert_eq!(p.dims(), (h, w));
        for y in 0..h {
            for x in 0..w {
                prop_assert!((p.crack(y, x) + p.background(y, x) - 1.0).abs() <= 1e-9);
            }
        }
    }
}
