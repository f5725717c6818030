use deepmem::rac::{build_weights_tensor_tt, mps_chain, network_grid, random_shallow_rac, GridSpec};
use deepmem::seprank::hadamard_bound_trial;
use deepmem::tensor::exact::rref;
use deepmem::tensor::{
    exact_rank, matricize, mps_contract, multiset_coeff, numeric_rank, unmatricize, DenseTensor, Matrix, Partition, DEFAULT_REL_TOL,
};
use deepmem::{rat, Rational, Scalar};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tensor_and_partition() -> impl Strategy<Value = (DenseTensor<Rational>, Partition)> {
    (1usize..=3, 1usize..=5).prop_flat_map(|(m, t)| {
        let n = m.pow(t as u32);
        (prop::collection::vec(-9i64..=9, n), prop::collection::vec(any::<bool>(), t)).prop_map(move |(vals, mask)| {
            let a = DenseTensor::new(vec![m; t], vals.into_iter().map(rat).collect()).unwrap();
            let (i, j): (Vec<usize>, Vec<usize>) = (1..=t).partition(|k| mask[k - 1]);
            (a, Partition::new(i, j).unwrap())
        })
    })
}

fn int_matrix(max: usize, bound: i64) -> impl Strategy<Value = Matrix<Rational>> {
    (1..=max, 1..=max).prop_flat_map(move |(r, c)| {
        prop::collection::vec(-bound..=bound, r * c).prop_map(move |v| Matrix::new(r, c, v.into_iter().map(rat).collect()).unwrap())
    })
}

/// Matrix with a planted rank: product of `r x k` and `k x c` integer factors.
fn low_rank_matrix() -> impl Strategy<Value = Matrix<Rational>> {
    (1usize..=6, 1usize..=6, 1usize..=3).prop_flat_map(|(r, c, k)| {
        (prop::collection::vec(-3i64..=3, r * k), prop::collection::vec(-3i64..=3, k * c)).prop_map(move |(u, v)| {
            let u = Matrix::new(r, k, u.into_iter().map(rat).collect()).unwrap();
            let v = Matrix::new(k, c, v.into_iter().map(rat).collect()).unwrap();
            u.matmul(&v).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matricize_round_trips((a, p) in tensor_and_partition()) {
        let mat = matricize(&a, &p).unwrap();
        let m = a.shape()[0];
        prop_assert_eq!(mat.rows() * mat.cols(), a.len());
        prop_assert_eq!(mat.rows(), m.pow(p.row_modes().len() as u32));
        prop_assert_eq!(unmatricize(&mat, m, &p).unwrap(), a);
    }

    #[test]
    fn numeric_rank_matches_exact(a in low_rank_matrix()) {
        let f = a.map(|x| x.to_f64());
        prop_assert_eq!(numeric_rank(&f, DEFAULT_REL_TOL).unwrap(), exact_rank(&a));
    }

    #[test]
    fn bareiss_rank_matches_rref(a in int_matrix(6, 4)) {
        let (reduced, pivots) = rref(&a);
        prop_assert_eq!(exact_rank(&a), pivots.len());
        prop_assert_eq!(exact_rank(&a), exact_rank(&a.transpose()));
        prop_assert_eq!(exact_rank(&reduced), pivots.len());
    }

    #[test]
    fn hadamard_power_rank_bound(seed in any::<u64>(), rows in 1usize..=8, cols in 1usize..=8, r in 1usize..=3, p in 1u32..=4) {
        let (measured, bound) = hadamard_bound_trial(rows, cols, r, p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(BigUint::from(measured) <= bound);
    }

    #[test]
    fn multiset_pascal_recurrence(n in 2u64..40, k in 1u64..40) {
        let lhs = multiset_coeff(n, k).unwrap();
        prop_assert_eq!(lhs, multiset_coeff(n - 1, k).unwrap() + multiset_coeff(n, k - 1).unwrap());
    }

    #[test]
    fn tt_mps_and_forward_grids_agree(seed in any::<u64>(), m in 1usize..=3, r in 1usize..=3, t in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_shallow_rac(m, r, 2, &mut rng).unwrap();
        for c in 0..2 {
            let tt = build_weights_tensor_tt(&net, c, t).unwrap();
            prop_assert_eq!(&tt, &mps_contract(&mps_chain(&net, c, t).unwrap()).unwrap());
            prop_assert_eq!(&tt, &network_grid(&net, &GridSpec::one_hot(m, t), c).unwrap());
        }
    }
}
