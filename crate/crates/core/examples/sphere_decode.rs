//! One noisy Golden-code block decoded by the sphere decoder, checked
//! against exhaustive search at 4-QAM.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stshape::mimo_sim::{brute_force_ml, transmit, Region, SphereDecoder};
use stshape::shaping::{Mode, SchemeOptions};
use stshape::stcode::{CodeDefinition, LayeredScheme};

fn main() -> stshape::Result<()> {
    let code = CodeDefinition::golden();
    let scheme = LayeredScheme::normalized(&code, Mode::Plus, 2, &SchemeOptions::default(), 10_000, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let snr = 8.0;
    let tx = transmit(&scheme, 2, snr, &mut rng)?;
    let out = SphereDecoder::new(&scheme, &tx.channel.h, snr, Region::Strict)?.decode(&tx.y)?;
    let (best, metric) = brute_force_ml(&scheme, &tx.channel.h, &tx.y, snr, Region::Strict, 1 << 20)?;
    println!("sent     {:?}", tx.points);
    println!("decoded  {:?} metric {:.4} ({} nodes)", out.points, out.metric, out.nodes);
    println!("exhaust  {best:?} metric {metric:.4}");
    Ok(())
}
