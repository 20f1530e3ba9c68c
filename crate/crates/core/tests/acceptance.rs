//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary (`harness = false`). Failures are reported, not fatal, unless
//! `STSHAPE_ACCEPTANCE_STRICT=1` is set, in which case any FAIL exits 1.

use std::time::{Duration, Instant};

use num_bigint::{BigInt, BigUint};
use num_complex::Complex64;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stshape::exactmat::{det, hnf_decompose, is_unimodular, IntMatrix};
use stshape::linalg::{cdet, CMatrix, Gauss};
use stshape::mimo_sim::{brute_force_ml, cep_sweep, transmit, Region, SphereDecoder, SweepConfig};
use stshape::papr_stats::{collect_papr, power_increase};
use stshape::peak_density::{
    curve_b_vs_rho, default_one_over_rho_grid, solve_density, solve_peak_power_density,
};
use stshape::plusfact::plus_factorize;
use stshape::shaping::{HnfShaper, Mode, SchemeOptions, ShapingScheme};
use stshape::stcode::{CodeDefinition, LayeredScheme, NORMALIZATION_WORDS};

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let mut o = f();
    let dt = t.elapsed();
    if let Some(l) = limit {
        if dt > l {
            o.pass = false;
            o.detail.push_str(&format!("; took {:.1} s, limit {} s", dt.as_secs_f64(), l.as_secs()));
        }
    }
    println!(
        "[{}] C{id} {name}: {} ({:.1} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        dt.as_secs_f64()
    );
    o.pass
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, bound: i64) -> IntMatrix {
    let rows: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-bound..=bound)).collect()).collect();
    IntMatrix::from_rows(&rows).unwrap()
}

fn hnf_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut ok, mut total) = (0, 0);
    while total < 1000 {
        let n = rng.random_range(2..=10);
        let q = random_matrix(&mut rng, n, 100);
        if det(&q).unwrap().is_zero() {
            continue;
        }
        total += 1;
        let h = hnf_decompose(&q).unwrap();
        if h.r.mul(&h.v).unwrap() == q && is_unimodular(&h.v).unwrap() && h.r.is_hnf() {
            ok += 1;
        }
    }
    Outcome { pass: ok == total, detail: format!("{ok}/{total} matrices reconstruct exactly with unimodular V and canonical R") }
}

fn reversibility_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();

    // HNF codec, every data word, on random matrices with |det| <= 1e4.
    let mut words = 0u64;
    let mut matrices = 0;
    while matrices < 20 {
        let n = rng.random_range(2..=4);
        let q = random_matrix(&mut rng, n, 9);
        let d = det(&q).unwrap().abs();
        if d.is_zero() || d > BigInt::from(10_000) {
            continue;
        }
        matrices += 1;
        let h = HnfShaper::from_q(1.0, q.clone()).unwrap();
        for idx in 0..h.cosets().to_u64().unwrap() {
            let z = h.encode(&BigInt::from(idx)).unwrap();
            words += 1;
            if h.decode(&z).unwrap() != BigUint::from(idx) {
                failures.push(format!("hnf roundtrip idx {idx}"));
            }
            let k: Vec<BigInt> = (0..n).map(|_| BigInt::from(rng.random_range(-20..=20))).collect();
            let moved: Vec<i64> =
                z.iter().zip(q.mul_vec(&k).unwrap()).map(|(a, b)| a + b.to_i64().unwrap()).collect();
            if h.decode(&moved).unwrap() != BigUint::from(idx) {
                failures.push(format!("coset shift idx {idx}"));
            }
        }
    }
    // The same through a real shaping scheme (Golden layer, sigma = 4).
    let g = CodeDefinition::golden().layers()[0].generator.clone();
    let s = ShapingScheme::build(&g, Mode::Hnf, 4, &SchemeOptions::default()).unwrap();
    let det_r = s.hnf().unwrap().decomposition().det();
    if det_r <= BigInt::from(10_000) {
        for i in 0..s.capacity().to_u64().unwrap() {
            let d = s.index_to_digits(&BigUint::from(i)).unwrap();
            words += 1;
            if s.decode(&s.encode(&d).unwrap()).ok() != Some(d) {
                failures.push(format!("golden hnf word {i}"));
            }
        }
    }

    // PLUS, 1e4 random words spread over sizes up to 50.
    let sizes = [2usize, 3, 4, 6, 8, 12, 16, 24, 32, 50];
    let mut plus_words = 0;
    for &n in &sizes {
        let m = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let q = &m / Complex64::new(cdet(&m).unwrap().norm().powf(1.0 / n as f64), 0.0);
        let f = plus_factorize(&q).unwrap();
        for _ in 0..1000 {
            let s: Vec<Gauss> =
                (0..n).map(|_| Gauss::new(rng.random_range(0..256), rng.random_range(0..256))).collect();
            plus_words += 1;
            if f.inverse(&f.forward(&s).unwrap()).unwrap() != s {
                failures.push(format!("plus size {n}"));
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "hnf {words} words + coset shifts, plus {plus_words} words (sizes 2..50): {} mismatches",
            failures.len()
        ),
    }
}

fn golden(mode: Mode, sigma: u32) -> LayeredScheme {
    LayeredScheme::build(&CodeDefinition::golden(), mode, sigma, &SchemeOptions::default()).unwrap()
}

fn cubic_asymptote() -> Outcome {
    // 1e6 symbols = 250k Golden codewords of 4 symbols.
    let s = collect_papr(&golden(Mode::Plus, 256), 250_000, SEED).unwrap();
    let x = s.crossing_db(1e-3);
    Outcome { pass: x <= 5.8, detail: format!("PLUS sigma=256 crossing at 1e-3: {x:.3} dB (limit 5.8, cube 4.77)") }
}

fn reduction_direction() -> Outcome {
    let u = collect_papr(&golden(Mode::None, 8), 250_000, SEED).unwrap().crossing_db(1e-3);
    let h = collect_papr(&golden(Mode::Hnf, 8), 250_000, SEED).unwrap().crossing_db(1e-3);
    let p = collect_papr(&golden(Mode::Plus, 8), 250_000, SEED).unwrap().crossing_db(1e-3);
    Outcome {
        pass: u - h >= 1.5 && u - p >= 1.5,
        detail: format!(
            "unshaped {u:.3} dB, HNF {h:.3} dB (gap {:.3}), PLUS {p:.3} dB (gap {:.3}); need >= 1.5",
            u - h,
            u - p
        ),
    }
}

fn table_power() -> Outcome {
    let code = match CodeDefinition::builtin("perfect4x4") {
        Ok(c) => c,
        Err(e) => return Outcome { pass: false, detail: format!("fixture: {e}") },
    };
    let o = SchemeOptions::default();
    let cells = [(Mode::Hnf, 8, 4.9), (Mode::Plus, 8, 4.6), (Mode::Plus, 16, 3.5)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (mode, sigma, want) in cells {
        let r = power_increase(&code, mode, sigma, &o, 100_000, SEED).unwrap();
        let ok = (r.increase_percent - want).abs() <= 1.5;
        pass &= ok;
        parts.push(format!(
            "{mode:?}/{}-QAM {:.2}% (want {want} +- 1.5){}",
            sigma * sigma,
            r.increase_percent,
            if ok { "" } else { " X" }
        ));
    }
    Outcome { pass, detail: format!("4x4 fixture: {}", parts.join(", ")) }
}

fn oracle() -> Outcome {
    let code = CodeDefinition::uncoded(2).unwrap();
    let s = LayeredScheme::normalized(&code, Mode::None, 2, &SchemeOptions::default(), NORMALIZATION_WORDS, SEED)
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut agree = 0;
    let n = 10_000;
    for _ in 0..n {
        let snr = rng.random_range(0.0..30.0);
        let tx = transmit(&s, 2, snr, &mut rng).unwrap();
        let out = SphereDecoder::new(&s, &tx.channel.h, snr, Region::Strict).unwrap().decode(&tx.y).unwrap();
        let (_, best) = brute_force_ml(&s, &tx.channel.h, &tx.y, snr, Region::Strict, 100_000).unwrap();
        if (out.metric - best).abs() <= 1e-9 * best.max(1.0) {
            agree += 1;
        }
    }
    Outcome { pass: agree == n, detail: format!("{agree}/{n} 2x2 4-QAM instances match the 256-candidate brute force") }
}

fn cep_invariance() -> Outcome {
    let code = CodeDefinition::golden();
    let o = SchemeOptions::default();
    let cfg = |mode| SweepConfig {
        code: "golden".into(),
        mode,
        sigma: 8,
        snr_db: vec![26.0, 30.0, 34.0],
        trials: 100_000,
        seed: SEED,
        receivers: None,
        region: Region::Unbounded,
    };
    let shaped = LayeredScheme::normalized(&code, Mode::Plus, 8, &o, NORMALIZATION_WORDS, SEED).unwrap();
    let plain = LayeredScheme::normalized(&code, Mode::None, 8, &o, NORMALIZATION_WORDS, SEED).unwrap();
    let a = cep_sweep(&shaped, &cfg(Mode::Plus)).unwrap();
    let b = cep_sweep(&plain, &cfg(Mode::None)).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (x, y) in a.points.iter().zip(&b.points) {
        let width = (x.ci_high - x.ci_low) / 2.0 + (y.ci_high - y.ci_low) / 2.0;
        let diff = (x.cep - y.cep).abs();
        pass &= diff < width;
        parts.push(format!("{} dB: {:.3e} vs {:.3e} (|d| {:.2e}, width {:.2e})", x.snr_db, x.cep, y.cep, diff, width));
    }
    Outcome { pass, detail: format!("PLUS vs unshaped 64-QAM, {}", parts.join("; ")) }
}

fn density() -> Outcome {
    let mut fails = Vec::new();
    let d = solve_density(2.0, 1.0).unwrap();
    if (d.a, d.b) != (1.0, 0.0) {
        fails.push(format!("rho=2 gives ({}, {})", d.a, d.b));
    }
    let d = solve_density(1e6, 1.0).unwrap();
    if (d.a - 2.0).abs() > 1e-5 || (d.b - 2.0).abs() > 1e-5 {
        fails.push(format!("rho=1e6 gives ({}, {})", d.a, d.b));
    }
    let mut worst: f64 = 0.0;
    for rho in [1.5, 2.0, 3.0, 5.0, 10.0, 100.0] {
        for p in [0.5, 1.0, 4.0] {
            let (r1, r2) = solve_density(rho, p).unwrap().residuals();
            worst = worst.max(r1.abs()).max(r2.abs());
        }
    }
    if worst > 1e-10 {
        fails.push(format!("residual {worst:e}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut moments = Vec::new();
    for (rho, p) in [(2.0, 1.0), (5.0, 1.0), (10.0, 4.0), (1.1, 1.0), (1.5, 2.0)] {
        let d = solve_peak_power_density(rho, p).unwrap();
        let want = if rho >= 2.0 { p } else { rho * p / 2.0 };
        let s = d.sample(&mut rng, 1_000_000);
        let m = s.iter().map(|r| r * r).sum::<f64>() / s.len() as f64;
        let rel = (m / want - 1.0).abs();
        moments.push(rel);
        if rel > 0.01 {
            fails.push(format!("E[r^2] at rho={rho}: {m} vs {want}"));
        }
    }
    match curve_b_vs_rho(&default_one_over_rho_grid()) {
        Ok(c) => {
            if !c.windows(2).all(|w| w[1].bt < w[0].bt) {
                fails.push("b-vs-rho curve not monotone".into());
            }
        }
        Err(e) => fails.push(format!("b-vs-rho curve: {e}")),
    }
    let max_rel = moments.iter().cloned().fold(0.0, f64::max);
    Outcome {
        pass: fails.is_empty(),
        detail: if fails.is_empty() {
            format!("limits exact, max residual {worst:.1e}, max moment error {:.3}%, b-vs-rho monotone", 100.0 * max_rel)
        } else {
            fails.join("; ")
        },
    }
}

fn main() {
    let results = [
        run(1, "hnf-correctness", Some(Duration::from_secs(60)), hnf_suite),
        run(2, "reversibility", Some(Duration::from_secs(120)), reversibility_suite),
        run(3, "cubic-asymptote", Some(Duration::from_secs(180)), cubic_asymptote),
        run(4, "papr-reduction-direction", None, reduction_direction),
        run(5, "table-power-increase", None, table_power),
        run(6, "sphere-decoder-oracle", Some(Duration::from_secs(60)), oracle),
        run(7, "cep-invariance", None, cep_invariance),
        run(8, "density-solver", None, density),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    let strict = std::env::var("STSHAPE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if passed != results.len() && strict {
        std::process::exit(1);
    }
}
