use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stshape::linalg::{max_abs_diff, CMatrix};
use stshape::shaping::{Mode, SchemeOptions};
use stshape::stcode::{assemble_codeword, CodeDefinition, LayeredScheme};
use stshape::Error;

#[test]
fn fixtures_load_and_are_unitary() {
    for name in ["golden", "perfect4x4", "layered5x5"] {
        let c = CodeDefinition::builtin(name).unwrap();
        let m = c.antennas();
        for l in c.layers() {
            let p = l.generator.adjoint() * &l.generator;
            assert!(max_abs_diff(&p, &CMatrix::identity(m, m)) < 1e-9, "{name}");
        }
        let again = CodeDefinition::from_json_str(&c.to_json_string()).unwrap();
        assert_eq!(again.layers().len(), m);
    }
}

#[test]
fn overlapping_masks_are_rejected() {
    let text = include_str!("../data/corrupt_overlap.json");
    assert!(matches!(CodeDefinition::from_json_str(text), Err(Error::MaskOverlap { .. })));
}

#[test]
fn schema_errors() {
    assert!(matches!(CodeDefinition::from_json_str("{}"), Err(Error::Schema(_))));
    let ragged = r#"{"name":"x","m":2,"l":2,"layers":[{"G":[[[1,0]],[[0,0],[1,0]]]},{"G":[[[1,0],[0,0]],[[0,0],[1,0]]]}]}"#;
    assert!(CodeDefinition::from_json_str(ragged).is_err());
    let singular = r#"{"name":"x","m":2,"l":2,"layers":[{"G":[[[1,0],[1,0]],[[1,0],[1,0]]]},{"G":[[[1,0],[0,0]],[[0,0],[1,0]]]}]}"#;
    assert!(matches!(CodeDefinition::from_json_str(singular), Err(Error::Singular)));
    assert!(CodeDefinition::resolve("no-such-code").is_err());
}

#[test]
fn every_cell_carries_exactly_one_symbol() {
    let c = CodeDefinition::builtin("perfect4x4").unwrap();
    let symbols: Vec<Vec<Complex64>> =
        (0..4).map(|k| (0..4).map(|j| Complex64::new((10 * k + j) as f64, 0.0)).collect()).collect();
    let x = assemble_codeword(&c, &symbols, 1.0).unwrap();
    let mut seen: Vec<f64> = x.0.iter().map(|v| v.re).collect();
    seen.sort_by(f64::total_cmp);
    let mut want: Vec<f64> = (0..4).flat_map(|k| (0..4).map(move |j| (10 * k + j) as f64)).collect();
    want.sort_by(f64::total_cmp);
    assert_eq!(seen, want);
}

#[test]
fn normalized_codewords_have_unit_power() {
    for mode in [Mode::None, Mode::Hnf, Mode::Plus] {
        let s = LayeredScheme::normalized(&CodeDefinition::golden(), mode, 8, &SchemeOptions::default(), 100_000, 1)
            .unwrap();
        let p = s.average_power(20_000, 99).unwrap() * s.scale() * s.scale();
        assert!((p - 1.0).abs() < 0.02, "{mode:?}: {p}");
    }
}

#[test]
fn layers_have_equal_average_power() {
    // Checked rather than assumed: the per-layer mean |x|^2 of the shaped code.
    let s = LayeredScheme::build(&CodeDefinition::golden(), Mode::Plus, 8, &SchemeOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut acc = vec![0.0; s.schemes().len()];
    let n = 50_000;
    for _ in 0..n {
        let data = s.random_data(&mut rng);
        for (k, (sch, d)) in s.schemes().iter().zip(&data).enumerate() {
            acc[k] += sch.signal(&sch.encode(d).unwrap()).iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
    }
    let mean = acc.iter().sum::<f64>() / acc.len() as f64;
    for a in &acc {
        assert!((a / mean - 1.0).abs() < 0.02, "{acc:?}");
    }
}
