use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stshape::exactmat::{adjugate, det, hnf_decompose, is_unimodular, IntMatrix};

fn random_nonsingular(rng: &mut ChaCha8Rng, n: usize, bound: i64) -> IntMatrix {
    loop {
        let rows: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-bound..=bound)).collect()).collect();
        let m = IntMatrix::from_rows(&rows).unwrap();
        if !det(&m).unwrap().is_zero() {
            return m;
        }
    }
}

/// Product of `k` random elementary column operations: unimodular by
/// construction.
fn random_unimodular(rng: &mut ChaCha8Rng, n: usize, k: usize) -> IntMatrix {
    let mut u = IntMatrix::identity(n);
    for _ in 0..k {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        let f = BigInt::from(rng.random_range(-3i64..=3));
        for r in 0..n {
            let t = &u[(r, j)] * &f;
            u[(r, i)] += t;
        }
        if rng.random_bool(0.2) {
            for r in 0..n {
                u[(r, i)] = -u[(r, i)].clone();
            }
        }
    }
    u
}

fn check(q: &IntMatrix) {
    let h = hnf_decompose(q).unwrap();
    assert_eq!(h.r.mul(&h.v).unwrap(), *q);
    assert!(is_unimodular(&h.v).unwrap());
    assert!(h.r.is_hnf(), "{:?}", h.r);
    assert_eq!(h.det(), det(q).unwrap().abs());
}

#[test]
fn thousand_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.random_range(2..=10);
        let q = random_nonsingular(&mut rng, n, 100);
        check(&q);
    }
}

#[test]
fn form_is_unique_under_column_unimodular_change() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let q = random_nonsingular(&mut rng, n, 20);
        let u = random_unimodular(&mut rng, n, 12);
        let a = hnf_decompose(&q).unwrap();
        let b = hnf_decompose(&q.mul(&u).unwrap()).unwrap();
        assert_eq!(a.r, b.r);
    }
}

#[test]
fn adjugate_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.random_range(1..=7);
        let q = random_nonsingular(&mut rng, n, 50);
        let (d, adj) = adjugate(&q).unwrap();
        assert_eq!(d, det(&q).unwrap());
        let p = q.mul(&adj).unwrap();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { d.clone() } else { BigInt::zero() };
                assert_eq!(p[(i, j)], want);
            }
        }
    }
}

#[test]
fn singular_is_rejected() {
    let q = IntMatrix::from_rows(&[vec![1, 2], vec![2, 4]]).unwrap();
    assert!(hnf_decompose(&q).is_err());
    assert!(!is_unimodular(&q).unwrap());
}

#[test]
fn large_entries_stay_exact() {
    // Entries near 2^62 overflow any fixed-width product.
    let big = 1i64 << 62;
    let q = IntMatrix::from_rows(&[vec![big, 3, 1], vec![7, big - 1, 5], vec![2, 9, big - 3]]).unwrap();
    check(&q);
    assert!(det(&q).unwrap() > BigInt::one() << 180);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn hnf_reconstructs(n in 2usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_nonsingular(&mut rng, n, 100);
        let h = hnf_decompose(&q).unwrap();
        prop_assert_eq!(h.r.mul(&h.v).unwrap(), q.clone());
        prop_assert!(h.r.is_hnf());
        prop_assert!(is_unimodular(&h.v).unwrap());
    }

    #[test]
    fn hnf_of_hnf_is_itself(n in 2usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_nonsingular(&mut rng, n, 30);
        let r = hnf_decompose(&q).unwrap().r;
        let again = hnf_decompose(&r).unwrap();
        prop_assert_eq!(&again.r, &r);
        prop_assert_eq!(again.v, IntMatrix::identity(n));
    }
}
