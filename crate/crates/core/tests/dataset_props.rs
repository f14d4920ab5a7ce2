use std::collections::BTreeSet;

use crackseg_core::dataset::pmap::{decode_grid, encode_grid};
use crackseg_core::dataset::{
    gen_synthetic, load_probmap, save_probmap, split_dataset, split_sizes, SynthConfig,
};
use crackseg_core::ProbMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn splits_partition_the_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let n = rng.random_range(5..400);
        let seed = rng.random::<u64>();
        let ids: Vec<String> = (0..n).map(|i| format!("img{i:03}")).collect();
        let s = split_dataset(&ids, seed).unwrap();
        let (tr, va, te) = split_sizes(n);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (tr, va, te));
        let all: BTreeSet<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        assert_eq!(all.len(), n);
        assert!(ids.iter().all(|i| all.contains(i)));
        assert_eq!(split_dataset(&ids, seed).unwrap(), s);
    }
}

#[test]
fn synthetic_masks_are_thin_and_nonempty() {
    let cfg = SynthConfig {
        count: 40,
        height: 32,
        width: 32,
        seed: 2,
        ..SynthConfig::default()
    };
    for s in gen_synthetic(&cfg).unwrap() {
        let f = s.mask.crack_fraction();
        assert!(s.mask.crack_count() > 0);
        assert!(f < 0.5);
        assert!(f >= cfg.target_crack_fraction[0] && f <= cfg.target_crack_fraction[1]);
    }
}

#[test]
fn probmaps_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for i in 0..100 {
        let (h, w) = (rng.random_range(1..20), rng.random_range(1..20));
        let v: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>()).collect();
        let m = ProbMap::from_crack_probs(h, w, &v).unwrap();
        let path = dir.path().join(format!("{i}.pmap"));
        save_probmap(&m, &path).unwrap();
        let back = load_probmap(&path).unwrap();
        let bits = |p: &ProbMap| {
            p.grid()
                .data()
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&back), bits(&m));
        assert_eq!(
            decode_grid(&encode_grid(m.grid()).unwrap()).unwrap(),
            *m.grid()
        );
    }
}
