use std::collections::HashSet;

use deepmem::seprank::{
    bucket_reward_dp, bucket_reward_optimal, enumerate_states, enumerate_trajectories, rearrangement_check, repetition_count,
    repetition_nested_count, verify_decomp_identity, StateVector,
};
use deepmem::tensor::{multiset_coeff, Matrix};
use deepmem::rat;
use proptest::prelude::*;

fn state(max_colors: usize, max_k: u32) -> impl Strategy<Value = StateVector> {
    prop::collection::vec(0..=max_k, 1..=max_colors)
        .prop_filter("K within bounds", move |c| (1..=max_k).contains(&c.iter().sum::<u32>()))
        .prop_map(StateVector::new)
}

fn colors_for(p: &StateVector) -> Vec<usize> {
    p.counts().iter().enumerate().flat_map(|(c, &n)| std::iter::repeat(c + 1).take(n as usize)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn state_count_is_multiset(rbar in 1usize..=4, k in 0u32..=6) {
        let states = enumerate_states(rbar, k).unwrap();
        prop_assert_eq!(multiset_coeff(rbar as u64, k as u64).unwrap(), states.len().into());
        prop_assert!(states.iter().all(|s| s.k() == k && s.colors() == rbar));
        prop_assert_eq!(states.iter().collect::<HashSet<_>>().len(), states.len());
    }

    #[test]
    fn trajectories_are_valid_and_distinct(p in state(3, 6)) {
        let all = enumerate_trajectories(&p).unwrap();
        prop_assert!(!all.is_empty());
        prop_assert!(all.iter().all(|t| t.is_valid_from(&p)));
        prop_assert_eq!(all.iter().collect::<HashSet<_>>().len(), all.len());
    }

    #[test]
    fn decomp_identity_for_random_z(rows in 1usize..=3, cols in 1usize..=2, t in prop::sample::select(vec![2usize, 4]), vals in prop::collection::vec(-3i64..=3, 9)) {
        let z = Matrix::from_fn(rows, cols, |i, j| rat(vals[i * 3 + j]));
        prop_assert!(verify_decomp_identity(&z, t).unwrap());
    }

    #[test]
    fn bucket_dp_equals_exhaustive(p in state(3, 5), order in any::<u64>(), omega in 2u64..30) {
        let mut d = colors_for(&p);
        let n = d.len();
        for i in (1..n).rev() {
            d.swap(i, (order as usize).wrapping_mul(i + 7) % (i + 1));
        }
        prop_assert_eq!(bucket_reward_dp(&d, &p, omega).unwrap(), bucket_reward_optimal(&d, &p, omega).unwrap());
    }

    #[test]
    fn rearrangement_is_strict(raw in prop::collection::hash_set(prop::collection::vec(0u64..20, 3), 2..=4), shift in 1usize..4) {
        let vectors: Vec<Vec<u64>> = raw.into_iter().collect();
        let n = vectors.len();
        let sigma: Vec<usize> = (0..n).map(|i| (i + shift % n.max(2)) % n).collect();
        prop_assume!(sigma.iter().enumerate().any(|(i, &s)| i != s));
        prop_assert!(rearrangement_check(&vectors, &sigma).unwrap());
    }

    #[test]
    fn repetition_nested_equals_closed_form(half in 1usize..=5, l in 1usize..=5) {
        prop_assert_eq!(repetition_nested_count(2 * half, l).unwrap(), repetition_count(2 * half, l).unwrap());
    }
}
