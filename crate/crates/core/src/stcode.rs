//! Layered space-time codes: per-layer generators, threading masks and
//! codeword assembly.
//!
//! Layer `k` of an `m x m` code carries `m` symbols; symbol `j` is sent from
//! antenna `j` in time slot `(j - shift_k) mod m`. With the default shifts
//! `shift_k = k` the layers tile the codeword along its cyclic diagonals.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cdet, CMatrix};
use crate::shaping::{Mode, SchemeOptions, ShapingScheme};

#[derive(Clone, Debug)]
pub struct Layer {
    pub generator: CMatrix,
    pub shift: usize,
}

#[derive(Clone, Debug)]
pub struct CodeDefinition {
    name: String,
    m: usize,
    l: usize,
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct CodeJson {
    name: String,
    m: usize,
    l: usize,
    layers: Vec<LayerJson>,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shift: Option<usize>,
    #[serde(rename = "G")]
    g: Vec<Vec<[f64; 2]>>,
}

const PERFECT_4X4: &str = include_str!("../data/perfect4x4.json");
const LAYERED_5X5: &str = include_str!("../data/layered5x5.json");

impl CodeDefinition {
    pub fn new(name: impl Into<String>, m: usize, l: usize, layers: Vec<Layer>) -> Result<Self> {
        if m == 0 || l != m {
            return Err(Error::Schema(format!("need a square m x m codeword, got {m} x {l}")));
        }
        if layers.len() != m {
            return Err(Error::Schema(format!("{} layers for m = {m}", layers.len())));
        }
        let mut owner = vec![None::<usize>; m * l];
        for (k, layer) in layers.iter().enumerate() {
            if layer.generator.shape() != (m, m) {
                return Err(Error::Dimension(format!(
                    "layer {k} generator is {:?}, expected {m}x{m}",
                    layer.generator.shape()
                )));
            }
            if layer.generator.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Schema(format!("layer {k} generator has non-finite entries")));
            }
            if cdet(&layer.generator)?.norm() < 1e-12 {
                return Err(Error::Singular);
            }
            if layer.shift >= m {
                return Err(Error::Schema(format!("layer {k} shift {} out of range", layer.shift)));
            }
            for (row, col) in mask_positions(m, layer.shift) {
                if owner[row * l + col].replace(k).is_some() {
                    return Err(Error::MaskOverlap { row, col });
                }
            }
        }
        Ok(CodeDefinition { name: name.into(), m, l, layers })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn antennas(&self) -> usize {
        self.m
    }

    pub fn slots(&self) -> usize {
        self.l
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Codeword positions `(antenna, slot)` of layer `k`, in symbol order.
    pub fn mask(&self, k: usize) -> Vec<(usize, usize)> {
        mask_positions(self.m, self.layers[k].shift)
    }

    /// The 2x2 Golden code: `G = [[a, a t], [a', a' t']] / sqrt 5` with
    /// `t = (1 + sqrt 5)/2`, `a = 1 + i(1 - t)` and conjugates `t'`, `a'`.
    /// The second layer is multiplied by `diag(1, i)`.
    pub fn golden() -> Self {
        let s5 = 5f64.sqrt();
        let t = (1.0 + s5) / 2.0;
        let tb = (1.0 - s5) / 2.0;
        let a = Complex64::new(1.0, 1.0 - t);
        let ab = Complex64::new(1.0, 1.0 - tb);
        let g = CMatrix::from_row_slice(2, 2, &[a, a * t, ab, ab * tb]) / Complex64::new(s5, 0.0);
        let mut g2 = g.clone();
        for j in 0..2 {
            g2[(1, j)] *= Complex64::i();
        }
        let layers = vec![Layer { generator: g, shift: 0 }, Layer { generator: g2, shift: 1 }];
        CodeDefinition::new("golden-2x2", 2, 2, layers).expect("golden code is well formed")
    }

    /// `m x m` layered code without coding across antennas: every layer
    /// sends plain QAM. The generators are `e^{i pi/4} I` so that the
    /// lattice is treated as complex (a real identity would give PAM).
    pub fn uncoded(m: usize) -> Result<Self> {
        let rot = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        let layers = (0..m).map(|k| Layer { generator: CMatrix::identity(m, m) * rot, shift: k }).collect();
        CodeDefinition::new(format!("uncoded-{m}x{m}"), m, m, layers)
    }

    /// `golden`, `perfect4x4`, `layered5x5` or `uncoded<m>`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "golden" => Ok(Self::golden()),
            "perfect4x4" => Self::from_json_str(PERFECT_4X4),
            "layered5x5" => Self::from_json_str(LAYERED_5X5),
            other => match other.strip_prefix("uncoded").map(str::parse::<usize>) {
                Some(Ok(m)) if m > 0 => Self::uncoded(m),
                _ => Err(Error::InvalidParameter(format!("unknown built-in code {other:?}"))),
            },
        }
    }

    /// A built-in name or a path to a code JSON file.
    pub fn resolve(spec: &str) -> Result<Self> {
        match Self::builtin(spec) {
            Ok(c) => Ok(c),
            Err(_) if Path::new(spec).exists() => Self::load(spec),
            Err(e) => Err(e),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let j: CodeJson = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let layers = j
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, lj)| {
                let n = lj.g.len();
                if lj.g.iter().any(|r| r.len() != n) {
                    return Err(Error::Schema(format!("layer {k} generator is not square")));
                }
                Ok(Layer {
                    generator: CMatrix::from_fn(n, n, |i, c| Complex64::new(lj.g[i][c][0], lj.g[i][c][1])),
                    shift: lj.shift.unwrap_or(k),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CodeDefinition::new(j.name, j.m, j.l, layers)
    }

    pub fn to_json_string(&self) -> String {
        let j = CodeJson {
            name: self.name.clone(),
            m: self.m,
            l: self.l,
            layers: self
                .layers
                .iter()
                .map(|lay| LayerJson {
                    shift: Some(lay.shift),
                    g: (0..self.m)
                        .map(|i| (0..self.m).map(|c| [lay.generator[(i, c)].re, lay.generator[(i, c)].im]).collect())
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&j).expect("serializable")
    }
}

fn mask_positions(m: usize, shift: usize) -> Vec<(usize, usize)> {
    (0..m).map(|j| (j, (j + m - shift) % m)).collect()
}

/// `m x l` matrix of transmitted symbols (antennas by time slots).
#[derive(Clone, Debug, PartialEq)]
pub struct CodewordMatrix(pub CMatrix);

/// Places each layer's symbols on its mask and scales by `scale`.
pub fn assemble_codeword(code: &CodeDefinition, symbols: &[Vec<Complex64>], scale: f64) -> Result<CodewordMatrix> {
    if symbols.len() != code.layers.len() {
        return Err(Error::Dimension(format!("{} layers of symbols for {} layers", symbols.len(), code.layers.len())));
    }
    let mut x = CMatrix::zeros(code.m, code.l);
    for (k, sym) in symbols.iter().enumerate() {
        if sym.len() != code.m {
            return Err(Error::Dimension(format!("layer {k} has {} symbols, expected {}", sym.len(), code.m)));
        }
        for (j, (row, col)) in code.mask(k).into_iter().enumerate() {
            x[(row, col)] = sym[j] * scale;
        }
    }
    Ok(CodewordMatrix(x))
}

/// A code together with one shaping scheme per layer and the power
/// normalization applied to every codeword.
#[derive(Clone, Debug)]
pub struct LayeredScheme {
    code: CodeDefinition,
    schemes: Vec<ShapingScheme>,
    scale: f64,
}

/// Number of random codewords used for the empirical power normalization.
pub const NORMALIZATION_WORDS: usize = 100_000;

impl LayeredScheme {
    /// Builds the per-layer schemes; the codeword scale starts at 1.
    pub fn build(code: &CodeDefinition, mode: Mode, sigma: u32, options: &SchemeOptions) -> Result<Self> {
        let schemes = code
            .layers
            .iter()
            .map(|l| ShapingScheme::build(&l.generator, mode, sigma, options))
            .collect::<Result<Vec<_>>>()?;
        Ok(LayeredScheme { code: code.clone(), schemes, scale: 1.0 })
    }

    /// Builds the schemes and scales codewords to unit average power per
    /// antenna, measured over `words` random codewords.
    pub fn normalized(
        code: &CodeDefinition,
        mode: Mode,
        sigma: u32,
        options: &SchemeOptions,
        words: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut s = Self::build(code, mode, sigma, options)?;
        let p = s.average_power(words, seed)?;
        if p <= 0.0 || !p.is_finite() {
            return Err(Error::Degenerate(format!("average symbol power {p}")));
        }
        s.scale = 1.0 / p.sqrt();
        Ok(s)
    }

    pub fn code(&self) -> &CodeDefinition {
        &self.code
    }

    pub fn schemes(&self) -> &[ShapingScheme] {
        &self.schemes
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn mode(&self) -> Mode {
        self.schemes[0].mode()
    }

    pub fn sigma(&self) -> u32 {
        self.schemes[0].sigma()
    }

    pub fn random_data<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<u32>> {
        let sigma = self.sigma();
        self.schemes.iter().map(|s| (0..s.dim()).map(|_| rng.random_range(0..sigma)).collect()).collect()
    }

    /// Encodes one data word per layer; returns the lattice points and the
    /// (scaled) codeword.
    pub fn encode(&self, data: &[Vec<u32>]) -> Result<(Vec<Vec<i64>>, CodewordMatrix)> {
        if data.len() != self.schemes.len() {
            return Err(Error::Dimension(format!("{} data words for {} layers", data.len(), self.schemes.len())));
        }
        let points = self.schemes.iter().zip(data).map(|(s, d)| s.encode(d)).collect::<Result<Vec<_>>>()?;
        let cw = self.codeword(&points)?;
        Ok((points, cw))
    }

    pub fn codeword(&self, points: &[Vec<i64>]) -> Result<CodewordMatrix> {
        let symbols: Vec<Vec<Complex64>> = self.schemes.iter().zip(points).map(|(s, z)| s.signal(z)).collect();
        assemble_codeword(&self.code, &symbols, self.scale)
    }

    /// Mean `|x|^2` over antennas and slots of unscaled codewords.
    pub fn average_power(&self, words: usize, seed: u64) -> Result<f64> {
        if words == 0 {
            return Err(Error::InvalidParameter("need at least one codeword".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = 0.0;
        for _ in 0..words {
            let data = self.random_data(&mut rng);
            for (s, d) in self.schemes.iter().zip(&data) {
                acc += s.signal(&s.encode(d)?).iter().map(|x| x.norm_sqr()).sum::<f64>();
            }
        }
        Ok(acc / (words * self.code.m * self.code.l) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_masks_partition_the_grid() {
        let c = CodeDefinition::golden();
        assert_eq!(c.mask(0), vec![(0, 0), (1, 1)]);
        assert_eq!(c.mask(1), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn golden_generator_is_unitary() {
        let code = CodeDefinition::golden();
        let g = &code.layers()[0].generator;
        let p = g.adjoint() * g;
        assert!(crate::linalg::max_abs_diff(&p, &CMatrix::identity(2, 2)) < 1e-12);
    }

    #[test]
    fn builtin_golden_matches_data_file() {
        let from_file = CodeDefinition::from_json_str(include_str!("../data/golden.json")).unwrap();
        let built = CodeDefinition::golden();
        for (a, b) in from_file.layers().iter().zip(built.layers()) {
            assert!(crate::linalg::max_abs_diff(&a.generator, &b.generator) < 1e-14);
        }
    }

    #[test]
    fn overlapping_shifts_are_rejected() {
        let err = CodeDefinition::from_json_str(include_str!("../data/corrupt_overlap.json")).unwrap_err();
        assert!(matches!(err, Error::MaskOverlap { row: 0, col: 1 }), "{err:?}");
    }

    #[test]
    fn assembly_places_symbols() {
        let c = CodeDefinition::golden();
        let one = Complex64::new(1.0, 0.0);
        let x = assemble_codeword(&c, &[vec![one, one * 2.0], vec![one * 3.0, one * 4.0]], 1.0).unwrap();
        assert_eq!(x.0[(0, 0)], one);
        assert_eq!(x.0[(1, 1)], one * 2.0);
        assert_eq!(x.0[(0, 1)], one * 3.0);
        assert_eq!(x.0[(1, 0)], one * 4.0);
    }
}
