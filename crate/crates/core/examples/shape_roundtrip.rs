//! Encode data words onto shaped Golden-code lattice points in every mode
//! and decode them back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stshape::shaping::{Mode, SchemeOptions};
use stshape::stcode::{CodeDefinition, LayeredScheme};

fn main() -> stshape::Result<()> {
    let code = CodeDefinition::golden();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for mode in [Mode::None, Mode::Hnf, Mode::Plus] {
        let scheme = LayeredScheme::build(&code, mode, 8, &SchemeOptions::default())?;
        let data = scheme.random_data(&mut rng);
        let (points, x) = scheme.encode(&data)?;
        let back: Vec<Vec<u32>> =
            scheme.schemes().iter().zip(&points).map(|(s, z)| s.decode(z)).collect::<stshape::Result<_>>()?;
        assert_eq!(back, data);
        println!("{mode:?}: data {data:?}\n  points {points:?}\n  codeword {:.3}", x.0);
    }
    Ok(())
}
