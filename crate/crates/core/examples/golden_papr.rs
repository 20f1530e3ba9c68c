//! PAPR CCDF of the Golden code at 64-QAM, shaped against unshaped.
//! Prints CSV; pass a codeword count as the first argument.

use stshape::papr_stats::{collect_papr, default_grid_db};
use stshape::shaping::{Mode, SchemeOptions};
use stshape::stcode::{CodeDefinition, LayeredScheme};

fn main() -> stshape::Result<()> {
    let words = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let code = CodeDefinition::golden();
    let o = SchemeOptions::default();
    let grid = default_grid_db();
    let mut curves = Vec::new();
    for mode in [Mode::Hnf, Mode::Plus, Mode::None] {
        let samples = collect_papr(&LayeredScheme::build(&code, mode, 8, &o)?, words, 1)?;
        eprintln!("{mode:?}: CCDF 1e-3 at {:.2} dB", samples.crossing_db(1e-3));
        curves.push(samples.curve(&grid));
    }
    print!("{}", curves[0].to_csv(&[("ccdf_plus", &curves[1]), ("ccdf_unshaped", &curves[2])]));
    Ok(())
}
