//! Average power increase of shaping over the unshaped constellation for
//! the built-in codes.

use stshape::papr_stats::power_increase;
use stshape::shaping::{Mode, SchemeOptions};
use stshape::stcode::CodeDefinition;

fn main() -> stshape::Result<()> {
    let o = SchemeOptions::default();
    println!("code,mode,qam,increase_percent");
    for name in ["golden", "perfect4x4"] {
        let code = CodeDefinition::builtin(name)?;
        for mode in [Mode::Hnf, Mode::Plus] {
            for sigma in [8, 16] {
                let r = power_increase(&code, mode, sigma, &o, 50_000, 1)?;
                println!("{name},{mode:?},{},{:.2}", sigma * sigma, r.increase_percent);
            }
        }
    }
    Ok(())
}
