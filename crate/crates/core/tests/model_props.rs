use deepmem::ortho::{cayley, inverse_cayley, orthogonality_deviation, SkewParam};
use deepmem::tasks::{
    classify_sim, data_accuracy, gen_copy, gen_sim, invert_permutation, pixel_permutation, CopyConfig, SimConfig, Target,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn skew() -> impl Strategy<Value = SkewParam> {
    (1usize..=12).prop_flat_map(|r| {
        (prop::collection::vec(-3.0f64..3.0, r * (r - 1) / 2), prop::collection::vec(any::<bool>(), r))
            .prop_map(move |(u, s)| SkewParam::new(r, u, s.into_iter().map(|b| if b { 1.0 } else { -1.0 }).collect()).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cayley_is_orthogonal_and_invertible(p in skew()) {
        let w = cayley(&p);
        prop_assert!(orthogonality_deviation(&w) < 1e-12);
        let a = inverse_cayley(&w, p.d()).unwrap();
        prop_assert!(a.max_abs_diff(&p.a()) < 1e-8);
    }

    #[test]
    fn copy_layout(m in 1usize..6, b in 0usize..30, n in 2u32..12, seed in any::<u64>()) {
        let cfg = CopyConfig::new(m, b, n).unwrap();
        let v = cfg.vocab();
        let s = gen_copy(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let Target::Sequence(target) = &s.target else { panic!("copy target must be a sequence") };
        let t = cfg.seq_len();
        prop_assert_eq!(s.input.len(), t);
        prop_assert_eq!(target.len(), t);
        prop_assert!(s.input[..m].iter().all(|&x| v.is_data(x)));
        prop_assert_eq!(s.input[m + b], v.trigger());
        prop_assert!(s.input.iter().enumerate().all(|(i, &x)| i < m || i == m + b || x == v.blank()));
        prop_assert_eq!(&target[t - m..], &s.input[..m]);
        prop_assert!(target[..t - m].iter().all(|&x| x == v.blank()));
    }

    #[test]
    fn accuracy_ignores_prefix(m in 1usize..5, b in 0usize..10, seed in any::<u64>(), junk in any::<u32>()) {
        let cfg = CopyConfig::new(m, b, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let targets: Vec<Vec<u32>> = (0..4).map(|_| match gen_copy(&cfg, &mut rng).target { Target::Sequence(t) => t, _ => unreachable!() }).collect();
        let mut preds = targets.clone();
        let t = cfg.seq_len();
        for p in &mut preds {
            for x in &mut p[..t - m] {
                *x = junk % 7;
            }
        }
        prop_assert_eq!(data_accuracy(&preds, &targets, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn similarity_samples_match_their_class(half_m in 1usize..4, extra in 1usize..10, n in 2u32..10, seed in any::<u64>()) {
        let m = 2 * half_m;
        let t = 2 * (m + extra);
        let cfg = SimConfig::new(t, m, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let s = gen_sim(&cfg, &mut rng);
            let Target::Class(c) = s.target else { panic!("similarity target must be a class") };
            prop_assert_eq!(s.input.len(), t);
            prop_assert_eq!(classify_sim(&s.input, &cfg), Some(c));
            prop_assert_eq!(s.input.iter().filter(|&&x| x != cfg.vocab().blank()).count(), 2 * m);
        }
    }

    #[test]
    fn pixel_permutation_is_bijection(seed in any::<u64>(), len in 1usize..=784) {
        let p = pixel_permutation(seed, len);
        let mut sorted = p.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..len).collect::<Vec<_>>());
        let inv = invert_permutation(&p);
        prop_assert!((0..len).all(|k| inv[p[k]] == k));
    }
}
