//! Codeword error probability of the shaped and unshaped Golden code at
//! 64-QAM. Pass blocks per point as the first argument.

use stshape::mimo_sim::{run_cep_sweep, Region, SweepConfig};
use stshape::shaping::Mode;

fn main() -> stshape::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    for mode in [Mode::Plus, Mode::None] {
        let config = SweepConfig {
            code: "golden".into(),
            mode,
            sigma: 8,
            snr_db: vec![18.0, 22.0, 26.0, 30.0, 34.0],
            trials,
            seed: 1,
            receivers: None,
            region: Region::Unbounded,
        };
        println!("# {mode:?}");
        print!("{}", run_cep_sweep(&config)?.to_csv());
    }
    Ok(())
}
