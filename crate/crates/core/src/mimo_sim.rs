//! Quasi-static Rayleigh fading link: channel draws, transmission,
//! maximum-likelihood detection by sphere decoding and codeword error
//! rate sweeps.

use std::fmt::Write as _;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, RMatrix};
use crate::shaping::{Mode, SchemeOptions};
use crate::stcode::{CodeDefinition, CodewordMatrix, LayeredScheme, NORMALIZATION_WORDS};

/// Circularly symmetric complex Gaussian with `E|z|^2 = variance`
/// (Box-Muller on two uniforms).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    let r = (-u1.ln()).sqrt() * variance.sqrt();
    Complex64::from_polar(r, std::f64::consts::TAU * u2)
}

/// `n x m` channel with i.i.d. unit-variance complex Gaussian entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub h: CMatrix,
}

impl ChannelRealization {
    pub fn draw<R: Rng + ?Sized>(receivers: usize, transmitters: usize, rng: &mut R) -> Self {
        ChannelRealization { h: CMatrix::from_fn(receivers, transmitters, |_, _| complex_gaussian(rng, 1.0)) }
    }

    pub fn receivers(&self) -> usize {
        self.h.nrows()
    }

    pub fn transmitters(&self) -> usize {
        self.h.ncols()
    }
}

/// One received block and what was sent.
#[derive(Clone, Debug)]
pub struct Transmission {
    pub y: CMatrix,
    pub channel: ChannelRealization,
    pub data: Vec<Vec<u32>>,
    pub points: Vec<Vec<i64>>,
    pub codeword: CodewordMatrix,
    pub snr_db: f64,
}

/// `sqrt(SNR / m)` for `m` transmit antennas.
pub fn channel_gain(snr_db: f64, transmitters: usize) -> f64 {
    (10f64.powf(snr_db / 10.0) / transmitters as f64).sqrt()
}

/// Unit-variance complex white noise.
pub fn noise_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, 1.0))
}

/// Draws data and a channel, sends one codeword:
/// `Y = sqrt(SNR/m) H X + W` with unit-variance noise.
pub fn transmit<R: Rng + ?Sized>(
    scheme: &LayeredScheme,
    receivers: usize,
    snr_db: f64,
    rng: &mut R,
) -> Result<Transmission> {
    let data = scheme.random_data(rng);
    let channel = ChannelRealization::draw(receivers, scheme.code().antennas(), rng);
    transmit_with(scheme, data, channel, snr_db, rng)
}

pub fn transmit_with<R: Rng + ?Sized>(
    scheme: &LayeredScheme,
    data: Vec<Vec<u32>>,
    channel: ChannelRealization,
    snr_db: f64,
    rng: &mut R,
) -> Result<Transmission> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidParameter(format!("snr {snr_db} dB")));
    }
    let (points, codeword) = scheme.encode(&data)?;
    let gain = channel_gain(snr_db, scheme.code().antennas());
    let y = &channel.h * &codeword.0 * Complex64::new(gain, 0.0) + noise_matrix(channel.receivers(), codeword.0.ncols(), rng);
    Ok(Transmission { y, channel, data, points, codeword, snr_db })
}

/// Real-valued model `vec(Y) = B z - t + noise` over the concatenated
/// lattice coordinates of all layers.
#[derive(Clone, Debug)]
pub struct EffectiveLattice {
    pub b: RMatrix,
    pub t: DVector<f64>,
    /// Coordinate range of each layer inside `z`.
    pub layer_ranges: Vec<std::ops::Range<usize>>,
}

impl EffectiveLattice {
    pub fn new(scheme: &LayeredScheme, h: &CMatrix, snr_db: f64) -> Result<Self> {
        let code = scheme.code();
        let (m, l, n) = (code.antennas(), code.slots(), h.nrows());
        if h.ncols() != m {
            return Err(Error::Dimension(format!("channel has {} columns for {m} antennas", h.ncols())));
        }
        let c = channel_gain(snr_db, m) * scheme.scale();
        let dims: usize = scheme.schemes().iter().map(|s| s.dim()).sum();
        let rows = 2 * n * l;
        let mut b = RMatrix::zeros(rows, dims);
        let mut t = DVector::zeros(rows);
        let mut ranges = Vec::new();
        let mut base = 0;
        for (k, s) in scheme.schemes().iter().enumerate() {
            let sig = s.signal_matrix();
            let off = s.offset();
            for (j, (row, col)) in code.mask(k).into_iter().enumerate() {
                for r in 0..n {
                    let hv = h[(r, row)] * c;
                    let (re, im) = (col * n + r, n * l + col * n + r);
                    for i in 0..s.dim() {
                        let (a, bi) = (sig[(j, i)], sig[(m + j, i)]);
                        b[(re, base + i)] += hv.re * a - hv.im * bi;
                        b[(im, base + i)] += hv.im * a + hv.re * bi;
                    }
                    let (a, bi) = (off[j], off[m + j]);
                    t[re] += hv.re * a - hv.im * bi;
                    t[im] += hv.im * a + hv.re * bi;
                }
            }
            ranges.push(base..base + s.dim());
            base += s.dim();
        }
        Ok(EffectiveLattice { b, t, layer_ranges: ranges })
    }

    /// `vec(Y)` stacked as real parts then imaginary parts, column-major.
    pub fn vectorize(y: &CMatrix) -> DVector<f64> {
        let (n, l) = (y.nrows(), y.ncols());
        let mut v = DVector::zeros(2 * n * l);
        for col in 0..l {
            for r in 0..n {
                v[col * n + r] = y[(r, col)].re;
                v[n * l + col * n + r] = y[(r, col)].im;
            }
        }
        v
    }

    pub fn metric(&self, yv: &DVector<f64>, z: &[i64]) -> f64 {
        let zf = DVector::from_iterator(z.len(), z.iter().map(|&v| v as f64));
        (yv + &self.t - &self.b * zf).norm_squared()
    }

    pub fn split(&self, z: &[i64]) -> Vec<Vec<i64>> {
        self.layer_ranges.iter().map(|r| z[r.clone()].to_vec()).collect()
    }
}

/// Which lattice points the decoder may return.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// Every integer point in the shaping box padded by one.
    Box,
    /// Only images of data words.
    Strict,
    /// The whole integer lattice (plain lattice decoding).
    #[default]
    Unbounded,
}

/// Coordinate bound standing in for "no bound"; far beyond any point the
/// enumeration can reach, and small enough that `f64` holds it exactly.
const UNBOUNDED: i64 = 1 << 40;

#[derive(Clone, Debug)]
pub struct DetectionResult {
    /// Decoded lattice point per layer.
    pub points: Vec<Vec<i64>>,
    pub metric: f64,
    pub nodes: u64,
    /// False only if the search had to be cut short (never, currently).
    pub exact_ml: bool,
    pub restarted: bool,
}

/// Depth-first Schnorr-Euchner enumeration over a box-constrained integer
/// lattice.
pub struct SphereDecoder<'a> {
    scheme: &'a LayeredScheme,
    lattice: EffectiveLattice,
    qt: RMatrix,
    r: RMatrix,
    lo: Vec<i64>,
    hi: Vec<i64>,
    region: Region,
}

impl<'a> SphereDecoder<'a> {
    pub fn new(scheme: &'a LayeredScheme, h: &CMatrix, snr_db: f64, region: Region) -> Result<Self> {
        let lattice = EffectiveLattice::new(scheme, h, snr_db)?;
        let d = lattice.b.ncols();
        if lattice.b.nrows() < d {
            return Err(Error::RankDeficient);
        }
        let qr = lattice.b.clone().qr();
        let r = qr.r();
        let scale = lattice.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if (0..d).any(|i| r[(i, i)].abs() <= 1e-10 * scale.max(1e-300)) {
            return Err(Error::RankDeficient);
        }
        let qt = qr.q().transpose();
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for s in scheme.schemes() {
            let bounds = match region {
                Region::Strict if s.mode() == Mode::None => vec![(0, s.sigma() as i64 - 1); s.dim()],
                Region::Unbounded => vec![(-UNBOUNDED, UNBOUNDED); s.dim()],
                _ => s.search_box(),
            };
            for (a, c) in bounds {
                lo.push(a);
                hi.push(c);
            }
        }
        Ok(SphereDecoder { scheme, lattice, qt, r, lo, hi, region })
    }

    pub fn lattice(&self) -> &EffectiveLattice {
        &self.lattice
    }

    pub fn bounds(&self) -> (&[i64], &[i64]) {
        (&self.lo, &self.hi)
    }

    fn admissible(&self, z: &[i64]) -> bool {
        match self.region {
            Region::Box | Region::Unbounded => true,
            Region::Strict => {
                self.scheme.schemes().iter().zip(self.lattice.split(z)).all(|(s, p)| s.is_valid_point(&p))
            }
        }
    }

    pub fn decode(&self, y: &CMatrix) -> Result<DetectionResult> {
        let yv = EffectiveLattice::vectorize(y);
        let target = &self.qt * (&yv + &self.lattice.t);
        let d = self.r.ncols();

        // Babai point, clamped to the box, sets the initial radius.
        let mut babai = vec![0i64; d];
        for i in (0..d).rev() {
            let c = self.centre(&target, &babai, i);
            babai[i] = (c.round() as i64).clamp(self.lo[i], self.hi[i]);
        }
        // In strict mode an inadmissible Babai point is replaced by the
        // encoding of the data word it decodes to.
        if !self.admissible(&babai) {
            let mut z = Vec::with_capacity(d);
            for (s, p) in self.scheme.schemes().iter().zip(self.lattice.split(&babai)) {
                z.extend(s.encode(&s.decode_clamped(&p)?)?);
            }
            if z.iter().zip(&self.lo).zip(&self.hi).all(|((v, a), b)| a <= v && v <= b) {
                babai = z;
            }
        }
        let babai_dist = self.partial_distance(&target, &babai);
        let mut state = Enum { best: None, radius: babai_dist * (1.0 + 1e-12) + 1e-12, nodes: 0 };
        if self.admissible(&babai) {
            state.best = Some((babai_dist, babai.clone()));
        }
        self.enumerate(&target, &mut state);
        let mut restarted = false;
        if state.best.is_none() {
            restarted = true;
            state.radius = f64::INFINITY;
            self.enumerate(&target, &mut state);
        }
        let (_, z) = state.best.ok_or_else(|| Error::Solver("no admissible lattice point in the search box".into()))?;
        let metric = self.lattice.metric(&yv, &z);
        Ok(DetectionResult { points: self.lattice.split(&z), metric, nodes: state.nodes, exact_ml: true, restarted })
    }

    fn centre(&self, target: &DVector<f64>, z: &[i64], i: usize) -> f64 {
        let s: f64 = target[i] - (i + 1..z.len()).map(|j| self.r[(i, j)] * z[j] as f64).sum::<f64>();
        s / self.r[(i, i)]
    }

    fn partial_distance(&self, target: &DVector<f64>, z: &[i64]) -> f64 {
        let d = z.len();
        (0..d)
            .map(|i| {
                let s = target[i] - (i..d).map(|j| self.r[(i, j)] * z[j] as f64).sum::<f64>();
                s * s
            })
            .sum()
    }

    fn enumerate(&self, target: &DVector<f64>, st: &mut Enum) {
        let d = self.r.ncols();
        let mut z = vec![0i64; d];
        self.visit(target, d, 0.0, &mut z, st);
    }

    fn visit(&self, target: &DVector<f64>, level: usize, dist: f64, z: &mut Vec<i64>, st: &mut Enum) {
        if level == 0 {
            if st.best.as_ref().is_none_or(|(b, _)| dist < *b) && self.admissible(z) {
                st.best = Some((dist, z.clone()));
                st.radius = st.radius.min(dist);
            }
            return;
        }
        let i = level - 1;
        let c = self.centre(target, z, i);
        let rii = self.r[(i, i)];
        let mut zig = ZigZag::new(c, self.lo[i], self.hi[i]);
        while let Some(v) = zig.next() {
            let e = rii * (v as f64 - c);
            let nd = dist + e * e;
            if nd > st.radius {
                break;
            }
            st.nodes += 1;
            z[i] = v;
            self.visit(target, i, nd, z, st);
        }
        z[i] = 0;
    }
}

struct Enum {
    best: Option<(f64, Vec<i64>)>,
    radius: f64,
    nodes: u64,
}

/// Integers in `[lo, hi]` by increasing distance from `c`; on equal
/// distance the smaller magnitude comes first.
struct ZigZag {
    c: f64,
    left: i64,
    right: i64,
    lo: i64,
    hi: i64,
}

impl ZigZag {
    fn new(c: f64, lo: i64, hi: i64) -> Self {
        let f = c.floor().clamp(lo as f64 - 1.0, hi as f64) as i64;
        ZigZag { c, left: f, right: f + 1, lo, hi }
    }

    fn next(&mut self) -> Option<i64> {
        let l_ok = self.left >= self.lo;
        let r_ok = self.right <= self.hi;
        let take_left = match (l_ok, r_ok) {
            (false, false) => return None,
            (true, false) => true,
            (false, true) => false,
            (true, true) => {
                let dl = self.c - self.left as f64;
                let dr = self.right as f64 - self.c;
                dl < dr || (dl == dr && self.left.abs() <= self.right.abs())
            }
        };
        if take_left {
            self.left -= 1;
            Some(self.left + 1)
        } else {
            self.right += 1;
            Some(self.right - 1)
        }
    }
}

/// Exhaustive search over the same candidate set as the decoder, scoring
/// each candidate from the complex model `||Y - sqrt(SNR/m) H X||^2`.
/// In strict mode the candidates are the encodings of all data words,
/// otherwise every integer point of the search box. Refuses candidate sets
/// larger than `limit`.
pub fn brute_force_ml(
    scheme: &LayeredScheme,
    h: &CMatrix,
    y: &CMatrix,
    snr_db: f64,
    region: Region,
    limit: u64,
) -> Result<(Vec<Vec<i64>>, f64)> {
    let dec = SphereDecoder::new(scheme, h, snr_db, region)?;
    let (lo, hi): (Vec<i64>, Vec<i64>) = match region {
        Region::Box | Region::Unbounded => (dec.lo.clone(), dec.hi.clone()),
        Region::Strict => {
            let d: usize = scheme.schemes().iter().map(|s| s.dim()).sum();
            (vec![0; d], vec![scheme.sigma() as i64 - 1; d])
        }
    };
    let mut count: u64 = 1;
    for (a, b) in lo.iter().zip(&hi) {
        count = count.saturating_mul((b - a + 1) as u64);
    }
    if count > limit {
        return Err(Error::InvalidParameter(format!("{count} candidates exceed the limit {limit}")));
    }
    let gain = Complex64::new(channel_gain(snr_db, scheme.code().antennas()), 0.0);
    let mut v = lo.clone();
    let mut best: Option<(f64, Vec<Vec<i64>>)> = None;
    loop {
        let pts = match region {
            Region::Box | Region::Unbounded => dec.lattice().split(&v),
            Region::Strict => {
                let words: Vec<Vec<u32>> = dec.lattice().split(&v).into_iter().map(|w| w.into_iter().map(|d| d as u32).collect()).collect();
                scheme.encode(&words)?.0
            }
        };
        let x = scheme.codeword(&pts)?;
        let metric = (y - h * &x.0 * gain).iter().map(|e| e.norm_sqr()).sum::<f64>();
        if best.as_ref().is_none_or(|(b, _)| metric < *b) {
            best = Some((metric, pts));
        }
        // Odometer step.
        let mut i = 0;
        loop {
            if i == v.len() {
                let (m, p) = best.expect("at least one candidate");
                return Ok((p, m));
            }
            if v[i] < hi[i] {
                v[i] += 1;
                break;
            }
            v[i] = lo[i];
            i += 1;
        }
    }
}

/// Two-sided Clopper-Pearson interval for `errors` out of `trials`.
pub fn clopper_pearson(errors: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 || errors > trials {
        return Err(Error::InvalidParameter(format!("{errors} errors in {trials} trials")));
    }
    let alpha = 1.0 - confidence;
    let (k, n) = (errors as f64, trials as f64);
    let beta = |a: f64, b: f64| Beta::new(a, b).map_err(|e| Error::Solver(e.to_string()));
    let lo = if errors == 0 { 0.0 } else { beta(k, n - k + 1.0)?.inverse_cdf(alpha / 2.0) };
    let hi = if errors == trials { 1.0 } else { beta(k + 1.0, n - k)?.inverse_cdf(1.0 - alpha / 2.0) };
    Ok((lo, hi))
}

fn default_mode() -> Mode {
    Mode::Plus
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Built-in code name or path to a code file.
    pub code: String,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub sigma: u32,
    pub snr_db: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    /// Receive antennas; defaults to the number of transmit antennas.
    #[serde(default)]
    pub receivers: Option<usize>,
    #[serde(default)]
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CepPoint {
    pub snr_db: f64,
    pub errors: u64,
    pub trials: u64,
    pub cep: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CepCurve {
    pub points: Vec<CepPoint>,
}

impl CepCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("snr_db,cep,ci_low,ci_high,trials\n");
        for p in &self.points {
            writeln!(out, "{},{:.6e},{:.6e},{:.6e},{}", p.snr_db, p.cep, p.ci_low, p.ci_high, p.trials).unwrap();
        }
        out
    }
}

pub fn run_cep_sweep(config: &SweepConfig) -> Result<CepCurve> {
    let code = CodeDefinition::resolve(&config.code)?;
    let scheme = LayeredScheme::normalized(
        &code,
        config.mode,
        config.sigma,
        &SchemeOptions::default(),
        NORMALIZATION_WORDS,
        config.seed,
    )?;
    cep_sweep(&scheme, config)
}

/// Monte-Carlo codeword error rate of an already built scheme. Block `b`
/// at SNR index `s` uses its own generator stream, so results do not depend
/// on the number of worker threads.
pub fn cep_sweep(scheme: &LayeredScheme, config: &SweepConfig) -> Result<CepCurve> {
    if config.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if config.snr_db.is_empty() {
        return Err(Error::InvalidParameter("empty SNR list".into()));
    }
    let receivers = config.receivers.unwrap_or(scheme.code().antennas());
    let mut points = Vec::new();
    for (s, &snr) in config.snr_db.iter().enumerate() {
        let errors: u64 = (0..config.trials)
            .into_par_iter()
            .map(|b| -> Result<u64> {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(((s as u64) << 40) | b);
                let tx = transmit(scheme, receivers, snr, &mut rng)?;
                let dec = SphereDecoder::new(scheme, &tx.channel.h, snr, config.region)?;
                let out = dec.decode(&tx.y)?;
                Ok(block_error(scheme, &tx, &out) as u64)
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        let (ci_low, ci_high) = clopper_pearson(errors, config.trials, 0.95)?;
        points.push(CepPoint {
            snr_db: snr,
            errors,
            trials: config.trials,
            cep: errors as f64 / config.trials as f64,
            ci_low,
            ci_high,
        });
    }
    Ok(CepCurve { points })
}

/// A block is in error when any layer decodes to different data (points
/// outside the data domain count as errors).
fn block_error(scheme: &LayeredScheme, tx: &Transmission, out: &DetectionResult) -> bool {
    scheme.schemes().iter().zip(&out.points).zip(&tx.data).any(|((s, z), d)| match s.decode(z) {
        Ok(w) => &w != d,
        Err(_) => true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zigzag_order() {
        let v: Vec<i64> = std::iter::from_fn({
            let mut z = ZigZag::new(0.3, -2, 2);
            move || z.next()
        })
        .collect();
        assert_eq!(v, vec![0, 1, -1, 2, -2]);
        let mut z = ZigZag::new(0.5, -2, 2);
        assert_eq!(z.next(), Some(0));
        assert_eq!(z.next(), Some(1));
        let mut z = ZigZag::new(9.0, 0, 3);
        assert_eq!(z.next(), Some(3));
        let mut z = ZigZag::new(-9.0, 0, 3);
        assert_eq!(z.next(), Some(0));
    }

    #[test]
    fn clopper_pearson_edges() {
        let (lo, hi) = clopper_pearson(0, 10, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(5, 10, 0.95).unwrap();
        assert!(lo < 0.5 && hi > 0.5 && (lo + hi - 1.0).abs() < 1e-9);
    }

    #[test]
    fn noiseless_detection_recovers_points() {
        let code = CodeDefinition::golden();
        let s = LayeredScheme::normalized(&code, Mode::Plus, 8, &SchemeOptions::default(), 1000, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let data = s.random_data(&mut rng);
            let ch = ChannelRealization::draw(2, 2, &mut rng);
            let (pts, x) = s.encode(&data).unwrap();
            let y = &ch.h * &x.0 * Complex64::new(channel_gain(20.0, 2), 0.0);
            let out = SphereDecoder::new(&s, &ch.h, 20.0, Region::Box).unwrap().decode(&y).unwrap();
            assert_eq!(out.points, pts);
            assert!(out.metric < 1e-18);
        }
    }
}
