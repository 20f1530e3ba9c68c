//! Peak-to-average power statistics of transmitted codewords.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shaping::{Mode, SchemeOptions};
use crate::stcode::{CodeDefinition, LayeredScheme};

/// Instantaneous-to-mean power ratios `|x|^2 / mean |x|^2` (linear scale).
pub fn papr_values(symbols: &[Complex64]) -> Result<Vec<f64>> {
    if symbols.is_empty() {
        return Err(Error::InvalidParameter("no symbols".into()));
    }
    let p: Vec<f64> = symbols.iter().map(|x| x.norm_sqr()).collect();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    if mean <= 0.0 || !mean.is_finite() {
        return Err(Error::Degenerate(format!("mean power {mean}")));
    }
    Ok(p.into_iter().map(|v| v / mean).collect())
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `0.0, 0.1, ..., 10.0` dB.
pub fn default_grid_db() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 10.0).collect()
}

/// Per-antenna symbol powers, accumulated in chunks that can be merged.
#[derive(Clone, Debug, Default)]
pub struct PaprAccumulator {
    powers: Vec<Vec<f64>>,
}

impl PaprAccumulator {
    pub fn new(antennas: usize) -> Self {
        PaprAccumulator { powers: vec![Vec::new(); antennas] }
    }

    pub fn push(&mut self, antenna: usize, x: Complex64) {
        self.powers[antenna].push(x.norm_sqr());
    }

    pub fn merge(&mut self, other: PaprAccumulator) {
        if self.powers.is_empty() {
            *self = other;
            return;
        }
        for (a, b) in self.powers.iter_mut().zip(other.powers) {
            a.extend(b);
        }
    }

    pub fn finish(self) -> Result<PaprSamples> {
        let per_antenna = self
            .powers
            .into_iter()
            .map(|p| {
                if p.len() < 1000 {
                    return Err(Error::InvalidParameter(format!("{} samples, need at least 1000", p.len())));
                }
                let mean = p.iter().sum::<f64>() / p.len() as f64;
                if mean <= 0.0 {
                    return Err(Error::Degenerate("all-zero antenna stream".into()));
                }
                let mut v: Vec<f64> = p.into_iter().map(|x| x / mean).collect();
                v.sort_by(f64::total_cmp);
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PaprSamples { per_antenna })
    }
}

/// Sorted PAPR samples per antenna, each normalized by its own mean power.
#[derive(Clone, Debug)]
pub struct PaprSamples {
    per_antenna: Vec<Vec<f64>>,
}

fn exceed(sorted: &[f64], t: f64) -> f64 {
    let idx = sorted.partition_point(|&v| v <= t);
    (sorted.len() - idx) as f64 / sorted.len() as f64
}

impl PaprSamples {
    pub fn antennas(&self) -> usize {
        self.per_antenna.len()
    }

    pub fn samples_per_antenna(&self) -> usize {
        self.per_antenna.first().map_or(0, Vec::len)
    }

    /// `P(PAPR > t)` for each antenna, `t` in dB.
    pub fn ccdf_per_antenna(&self, t_db: f64) -> Vec<f64> {
        let t = 10f64.powf(t_db / 10.0);
        self.per_antenna.iter().map(|s| exceed(s, t)).collect()
    }

    /// Antenna-averaged CCDF at `t_db`.
    pub fn ccdf(&self, t_db: f64) -> f64 {
        let v = self.ccdf_per_antenna(t_db);
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Smallest threshold (dB) at which the antenna-averaged CCDF is at most `p`.
    pub fn crossing_db(&self, p: f64) -> f64 {
        let mut all: Vec<f64> = self.per_antenna.iter().flatten().copied().collect();
        all.sort_by(f64::total_cmp);
        let n = all.len();
        let allowed = (p * n as f64).floor() as usize;
        if allowed >= n {
            return to_db(all[0]);
        }
        to_db(all[n - allowed - 1])
    }

    pub fn curve(&self, grid_db: &[f64]) -> CcdfCurve {
        let per: Vec<Vec<f64>> = grid_db.iter().map(|&t| self.ccdf_per_antenna(t)).collect();
        CcdfCurve {
            thresholds_db: grid_db.to_vec(),
            average: per.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect(),
            per_antenna: per,
            samples: self.samples_per_antenna(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CcdfCurve {
    pub thresholds_db: Vec<f64>,
    /// `per_antenna[k][a]`: CCDF of antenna `a` at `thresholds_db[k]`.
    pub per_antenna: Vec<Vec<f64>>,
    pub average: Vec<f64>,
    pub samples: usize,
}

impl CcdfCurve {
    /// `papr_db,ccdf_ant1,..,ccdf_avg[,extra columns]`.
    pub fn to_csv(&self, extra: &[(&str, &CcdfCurve)]) -> String {
        let ants = self.per_antenna.first().map_or(0, Vec::len);
        let mut out = String::from("papr_db");
        for a in 0..ants {
            write!(out, ",ccdf_ant{}", a + 1).unwrap();
        }
        out.push_str(",ccdf_avg");
        for (name, _) in extra {
            write!(out, ",{name}").unwrap();
        }
        out.push('\n');
        for (k, t) in self.thresholds_db.iter().enumerate() {
            write!(out, "{t:.1}").unwrap();
            for v in &self.per_antenna[k] {
                write!(out, ",{v:.6e}").unwrap();
            }
            write!(out, ",{:.6e}", self.average[k]).unwrap();
            for (_, c) in extra {
                write!(out, ",{:.6e}", c.average[k]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Codeword symbols of `codewords` random codewords, split into fixed
/// chunks with their own seeds so the result does not depend on threading.
pub fn collect_papr(scheme: &LayeredScheme, codewords: usize, seed: u64) -> Result<PaprSamples> {
    const CHUNK: usize = 4096;
    let m = scheme.code().antennas();
    let chunks = codewords.div_ceil(CHUNK);
    let parts: Vec<Result<PaprAccumulator>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64 + 1);
            let n = CHUNK.min(codewords - c * CHUNK);
            let mut acc = PaprAccumulator::new(m);
            for _ in 0..n {
                let data = scheme.random_data(&mut rng);
                let (_, x) = scheme.encode(&data)?;
                for a in 0..m {
                    for t in 0..x.0.ncols() {
                        acc.push(a, x.0[(a, t)]);
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = PaprAccumulator::new(m);
    for p in parts {
        total.merge(p?);
    }
    total.finish()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PowerReport {
    pub avg_power_shaped: f64,
    pub avg_power_unshaped: f64,
    pub increase_percent: f64,
    pub codewords: usize,
}

/// Average symbol power of the shaped code against the unshaped one, both
/// fed the same data stream.
pub fn power_increase(
    code: &CodeDefinition,
    mode: Mode,
    sigma: u32,
    options: &SchemeOptions,
    codewords: usize,
    seed: u64,
) -> Result<PowerReport> {
    let shaped = LayeredScheme::build(code, mode, sigma, options)?;
    let plain = LayeredScheme::build(code, Mode::None, sigma, options)?;
    let (ps, pu) = rayon::join(|| shaped.average_power(codewords, seed), || plain.average_power(codewords, seed));
    let (ps, pu) = (ps?, pu?);
    Ok(PowerReport {
        avg_power_shaped: ps,
        avg_power_unshaped: pu,
        increase_percent: 100.0 * (ps / pu - 1.0),
        codewords,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_envelope_is_zero_db() {
        let x: Vec<Complex64> = (0..8).map(|k| Complex64::from_polar(2.0, k as f64)).collect();
        for v in papr_values(&x).unwrap() {
            assert!((to_db(v)).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_stream_is_degenerate() {
        let x = vec![Complex64::new(0.0, 0.0); 4];
        assert!(matches!(papr_values(&x), Err(Error::Degenerate(_))));
    }

    #[test]
    fn too_few_samples() {
        let mut acc = PaprAccumulator::new(1);
        acc.push(0, Complex64::new(1.0, 0.0));
        assert!(acc.finish().is_err());
    }

    #[test]
    fn crossing_of_two_level_stream() {
        // 990 samples at power 1, 10 at power 11: mean 1.1.
        let mut acc = PaprAccumulator::new(1);
        for k in 0..1000 {
            let amp = if k < 10 { 11f64.sqrt() } else { 1.0 };
            acc.push(0, Complex64::new(amp, 0.0));
        }
        let s = acc.finish().unwrap();
        assert!((s.crossing_db(0.01) - to_db(1.0 / 1.1)).abs() < 1e-12);
        assert!((s.crossing_db(0.001) - to_db(10.0)).abs() < 1e-12);
        assert!((s.ccdf(0.0) - 0.01).abs() < 1e-12);
    }
}
