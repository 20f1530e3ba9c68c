use nalgebra::DMatrix;
use num_bigint::{BigInt, BigUint};
use num_complex::Complex64;
use num_traits::{Signed, ToPrimitive};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stshape::exactmat::{det, IntMatrix};
use stshape::linalg::{cdet, max_abs_diff, CMatrix, Gauss};
use stshape::plusfact::{plus_factorize, PlusFactorization};
use stshape::shaping::{HnfShaper, Mode, SchemeOptions, ShapingScheme};

fn small_det_matrix(rng: &mut ChaCha8Rng, n: usize, max_det: i64) -> IntMatrix {
    loop {
        let rows: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-9..=9)).collect()).collect();
        let m = IntMatrix::from_rows(&rows).unwrap();
        let d = det(&m).unwrap().abs();
        if d > BigInt::from(0) && d <= BigInt::from(max_det) {
            return m;
        }
    }
}

#[test]
fn hnf_codec_exhaustive_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..30 {
        let n = rng.random_range(2..=4);
        let q = small_det_matrix(&mut rng, n, 10_000);
        let h = HnfShaper::from_q(1.0, q.clone()).unwrap();
        let cosets = h.cosets().to_u64().unwrap();
        for idx in 0..cosets {
            let z = h.encode(&BigInt::from(idx)).unwrap();
            assert!(h.contains(&z), "{z:?} outside the fundamental region");
            assert_eq!(h.decode(&z).unwrap(), BigUint::from(idx));
        }
    }
}

#[test]
fn hnf_decode_is_coset_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..30 {
        let n = rng.random_range(2..=5);
        let q = small_det_matrix(&mut rng, n, 10_000);
        let h = HnfShaper::from_q(1.0, q.clone()).unwrap();
        let cosets = h.cosets().to_u64().unwrap();
        for _ in 0..100 {
            let idx = rng.random_range(0..cosets);
            let z = h.encode(&BigInt::from(idx)).unwrap();
            let k: Vec<BigInt> = (0..n).map(|_| BigInt::from(rng.random_range(-50..=50))).collect();
            let shift = q.mul_vec(&k).unwrap();
            let moved: Vec<i64> = z.iter().zip(&shift).map(|(a, b)| a + b.to_i64().unwrap()).collect();
            assert_eq!(h.decode(&moved).unwrap(), BigUint::from(idx));
        }
    }
}

#[test]
fn shaped_scheme_roundtrips_every_data_word() {
    let g = stshape::stcode::CodeDefinition::golden().layers()[0].generator.clone();
    for mode in [Mode::Hnf, Mode::Plus, Mode::None] {
        let s = ShapingScheme::build(&g, mode, 4, &SchemeOptions::default()).unwrap();
        let cap = s.capacity().to_u64().unwrap();
        assert_eq!(cap, 256);
        for i in 0..cap {
            let d = s.index_to_digits(&BigUint::from(i)).unwrap();
            let z = s.encode(&d).unwrap();
            assert!(s.is_valid_point(&z));
            assert_eq!(s.decode(&z).unwrap(), d, "{mode:?}");
            let b = s.search_box();
            assert!(z.iter().zip(&b).all(|(v, (lo, hi))| lo <= v && v <= hi));
        }
    }
}

fn random_unit_det(rng: &mut ChaCha8Rng, n: usize, real: bool) -> CMatrix {
    let m = CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.random_range(-1.0..1.0);
        let im: f64 = if real { 0.0 } else { rng.random_range(-1.0..1.0) };
        Complex64::new(re, im)
    });
    let d = cdet(&m).unwrap().norm();
    m / Complex64::new(d.powf(1.0 / n as f64), 0.0)
}

fn random_word(rng: &mut ChaCha8Rng, n: usize, real: bool, bound: i64) -> Vec<Gauss> {
    (0..n)
        .map(|_| Gauss::new(rng.random_range(-bound..=bound), if real { 0 } else { rng.random_range(-bound..=bound) }))
        .collect()
}

#[test]
fn plus_roundtrip_up_to_fifty() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let sizes = [2usize, 3, 4, 5, 8, 13, 21, 34, 50];
    let mut words = 0;
    for &n in &sizes {
        for real in [false, true] {
            let q = random_unit_det(&mut rng, n, real);
            let f = plus_factorize(&q).unwrap();
            for _ in 0..600 {
                let s = random_word(&mut rng, n, real, 255);
                let t = f.forward(&s).unwrap();
                assert_eq!(f.inverse(&t).unwrap(), s);
                words += 1;
            }
        }
    }
    assert!(words >= 10_000);
}

#[test]
fn plus_forward_stays_within_error_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for n in 2..=6 {
        let q = random_unit_det(&mut rng, n, false);
        let f = plus_factorize(&q).unwrap();
        let bound = f.error_bound();
        for _ in 0..300 {
            let s = random_word(&mut rng, n, false, 100);
            let t = f.forward(&s).unwrap();
            let exact = &q * nalgebra::DVector::from_iterator(n, s.iter().map(|v| Complex64::new(v.re as f64, v.im as f64)));
            for i in 0..n {
                let e = Complex64::new(t[i].re as f64, t[i].im as f64) - exact[i];
                assert!(e.re.abs() <= bound[i] + 1e-9, "re {i}: {} > {}", e.re, bound[i]);
                assert!(e.im.abs() <= bound[n + i] + 1e-9, "im {i}: {} > {}", e.im, bound[n + i]);
            }
        }
    }
}

#[test]
fn plus_reconstructs_orthogonal_8x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let a = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
    let q = a.qr().q().map(|v| Complex64::new(v, 0.0));
    let f = plus_factorize(&q).unwrap();
    assert!(f.is_real());
    assert!(max_abs_diff(&f.product(), &q) <= 1e-9);
}

#[test]
fn plus_json_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let q = random_unit_det(&mut rng, 4, false);
    let f = plus_factorize(&q).unwrap();
    let text = serde_json::to_string(&f).unwrap();
    let g: PlusFactorization = serde_json::from_str(&text).unwrap();
    let s = random_word(&mut rng, 4, false, 50);
    assert_eq!(f.forward(&s).unwrap(), g.forward(&s).unwrap());
}

#[test]
fn plus_rejects_bad_determinant() {
    let q = CMatrix::identity(3, 3) * Complex64::new(2.0, 0.0);
    assert!(plus_factorize(&q).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plus_chain_roundtrip(n in 2usize..7, seed in any::<u64>(), real in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_unit_det(&mut rng, n, real);
        let f = plus_factorize(&q).unwrap();
        prop_assert!(max_abs_diff(&f.product(), &q) < 1e-8);
        for _ in 0..20 {
            let s = random_word(&mut rng, n, real, 1000);
            prop_assert_eq!(f.inverse(&f.forward(&s).unwrap()).unwrap(), s);
        }
    }

    #[test]
    fn hnf_codec_roundtrip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = small_det_matrix(&mut rng, 3, 5000);
        let h = HnfShaper::from_q(1.0, q).unwrap();
        let cosets = h.cosets().to_u64().unwrap();
        let idx = rng.random_range(0..cosets);
        let z = h.encode(&BigInt::from(idx)).unwrap();
        prop_assert_eq!(h.decode(&z).unwrap(), BigUint::from(idx));
    }
}
