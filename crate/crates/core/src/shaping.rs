//! Cubic shaping of lattice codewords.
//!
//! A layer transmits `x = G s` for an integer vector `s`. Unshaped, `s` ranges
//! over a hypercube of side `sigma` and `x` over a skewed parallelotope.
//! Shaping picks a different representative `s~` of `s` so that `x` lands in
//! (or near) a hypercube instead:
//!
//! * [`Mode::Hnf`] uses the sublattice `Q Z^D`, `Q = round(sigma~ G^-1)`, and
//!   sends the coset representative of the data word inside `Q [0,1)^D`. The
//!   Hermite form of `Q` numbers the cosets.
//! * [`Mode::Plus`] applies the integer-to-integer map of a PLUS
//!   factorization of `G^-1` (rescaled to unit determinant).
//! * [`Mode::None`] is the unshaped reference.
//!
//! Data words are vectors of `D` digits in `0..sigma`, where `D` is the real
//! dimension of the layer (`2m` for complex generators, `m` for real ones).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use num_bigint::{BigInt, BigUint, Sign};
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactmat::{adjugate, det, hnf_decompose, HnfDecomposition, IntMatrix};
use crate::linalg::{
    cdet, cinverse, expand_real, is_real, require_square, round_i64, CMatrix, ComplexMatrixJson,
    Gauss, RMatrix,
};
use crate::plusfact::{plus_factorize_with, PlusFactorization, PlusOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hnf,
    Plus,
    None,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s.to_ascii_lowercase().as_str() {
            "hnf" => Ok(Mode::Hnf),
            "plus" => Ok(Mode::Plus),
            "none" | "unshaped" => Ok(Mode::None),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeOptions {
    /// Subtract the (approximate) centroid of the constellation.
    pub centered: bool,
    /// Tie-breaking budget handed to the PLUS factorization.
    pub tie_budget: usize,
    /// The `sigma~` scan gives up beyond this multiple of
    /// `sigma * |det G|^(1/D)`.
    pub max_scale_factor: f64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions { centered: true, tie_budget: PlusOptions::default().tie_budget, max_scale_factor: 4.0 }
    }
}

#[derive(Clone, Debug)]
pub struct HnfShaper {
    sigma_tilde: f64,
    q: IntMatrix,
    hnf: HnfDecomposition,
    det: BigInt,
    adj: IntMatrix,
    radix: Vec<BigInt>,
    fast: Option<FastHnf>,
}

// Same arithmetic in checked i128, used whenever the matrices fit.
#[derive(Clone, Debug)]
struct FastHnf {
    q: Vec<i128>,
    adj: Vec<i128>,
    det: i128,
    r: Vec<i128>,
    radix: Vec<i128>,
}

#[derive(Clone, Debug)]
pub struct PlusShaper {
    q: CMatrix,
    scale: f64,
    factors: PlusFactorization,
}

#[derive(Clone, Debug)]
enum Kind {
    None,
    Hnf(Box<HnfShaper>),
    Plus(Box<PlusShaper>),
}

#[derive(Clone, Debug)]
pub struct ShapingScheme {
    mode: Mode,
    sigma: u32,
    options: SchemeOptions,
    complex: bool,
    g: CMatrix,
    signal: RMatrix,
    offset: Vec<f64>,
    capacity: BigUint,
    kind: Kind,
}

impl ShapingScheme {
    pub fn build(g: &CMatrix, mode: Mode, sigma: u32, options: &SchemeOptions) -> Result<Self> {
        let m = require_square(g)?;
        if sigma < 2 {
            return Err(Error::InvalidParameter(format!("sigma must be at least 2, got {sigma}")));
        }
        if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("generator has non-finite entries".into()));
        }
        if cdet(g)?.norm() < 1e-12 {
            return Err(Error::Singular);
        }
        let complex = !is_real(g);
        let d = if complex { 2 * m } else { m };
        let signal = if complex {
            expand_real(g)
        } else {
            let mut s = RMatrix::zeros(2 * m, m);
            s.view_mut((0, 0), (m, m)).copy_from(&g.map(|z| z.re));
            s
        };
        let capacity = BigUint::from(sigma).pow(d as u32);
        let half = (sigma as f64 - 1.0) / 2.0;

        let (kind, centre) = match mode {
            Mode::None => (Kind::None, vec![half; d]),
            Mode::Hnf => {
                let g_real = if complex { expand_real(g) } else { g.map(|z| z.re) };
                let h = HnfShaper::build(&g_real, sigma, options.max_scale_factor)?;
                let c = h.centroid();
                (Kind::Hnf(Box::new(h)), c)
            }
            Mode::Plus => {
                let ginv = cinverse(g)?;
                let scale = cdet(g)?.norm().powf(1.0 / m as f64);
                let mut q = ginv * Complex64::new(scale, 0.0);
                if !complex {
                    q = q.map(|z| Complex64::new(z.re, 0.0));
                }
                let factors = plus_factorize_with(&q, PlusOptions { tie_budget: options.tie_budget, ..PlusOptions::default() })?;
                let qr = if complex { expand_real(&q) } else { q.map(|z| z.re) };
                let c = (&qr * DVector::from_element(d, half)).as_slice().to_vec();
                (Kind::Plus(Box::new(PlusShaper { q, scale, factors })), c)
            }
        };
        let offset = if options.centered {
            (&signal * DVector::from_vec(centre)).as_slice().to_vec()
        } else {
            vec![0.0; 2 * m]
        };
        Ok(ShapingScheme {
            mode,
            sigma,
            options: options.clone(),
            complex,
            g: g.clone(),
            signal,
            offset,
            capacity,
            kind,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn sigma(&self) -> u32 {
        self.sigma
    }

    pub fn options(&self) -> &SchemeOptions {
        &self.options
    }

    pub fn generator(&self) -> &CMatrix {
        &self.g
    }

    /// Number of antennas / symbols per layer.
    pub fn symbols(&self) -> usize {
        self.g.nrows()
    }

    /// Real dimension `D` of lattice points and data words.
    pub fn dim(&self) -> usize {
        if self.complex {
            2 * self.symbols()
        } else {
            self.symbols()
        }
    }

    pub fn is_complex(&self) -> bool {
        self.complex
    }

    /// Number of data words, `sigma^D`.
    pub fn capacity(&self) -> &BigUint {
        &self.capacity
    }

    /// Maps lattice coordinates to `[Re x; Im x]` (before the offset).
    pub fn signal_matrix(&self) -> &RMatrix {
        &self.signal
    }

    /// Subtracted from `signal_matrix() * z`; zero when centering is off.
    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn hnf(&self) -> Option<&HnfShaper> {
        match &self.kind {
            Kind::Hnf(h) => Some(h),
            _ => None,
        }
    }

    pub fn plus(&self) -> Option<&PlusShaper> {
        match &self.kind {
            Kind::Plus(p) => Some(p),
            _ => None,
        }
    }

    fn check_digits(&self, digits: &[u32]) -> Result<()> {
        if digits.len() != self.dim() {
            return Err(Error::Dimension(format!("{} digits, expected {}", digits.len(), self.dim())));
        }
        if let Some((i, &v)) = digits.iter().enumerate().find(|(_, &v)| v >= self.sigma) {
            return Err(Error::OutOfRange { index: i, detail: format!("digit {v} >= sigma {}", self.sigma) });
        }
        Ok(())
    }

    fn check_point(&self, z: &[i64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::Dimension(format!("point of length {}, expected {}", z.len(), self.dim())));
        }
        Ok(())
    }

    /// Base-`sigma` digits (least significant first) of a data index.
    pub fn index_to_digits(&self, index: &BigUint) -> Result<Vec<u32>> {
        if index >= &self.capacity {
            return Err(Error::OutOfRange { index: 0, detail: format!("data index {index} >= sigma^D") });
        }
        let mut digits = vec![0u32; self.dim()];
        let mut rest = index.clone();
        let base = BigUint::from(self.sigma);
        for d in digits.iter_mut() {
            let (q, r) = rest.div_rem(&base);
            *d = r.to_u32().unwrap_or(0);
            rest = q;
        }
        Ok(digits)
    }

    pub fn digits_to_index(&self, digits: &[u32]) -> Result<BigUint> {
        self.check_digits(digits)?;
        let base = BigUint::from(self.sigma);
        Ok(digits.iter().rev().fold(BigUint::zero(), |acc, &d| acc * &base + BigUint::from(d)))
    }

    /// Data word to lattice point (real coordinates).
    pub fn encode(&self, digits: &[u32]) -> Result<Vec<i64>> {
        self.check_digits(digits)?;
        match &self.kind {
            Kind::None => Ok(digits.iter().map(|&d| d as i64).collect()),
            Kind::Hnf(h) => {
                if let Some(f) = &h.fast {
                    let base = self.sigma as u128;
                    let idx = digits.iter().rev().fold(0u128, |acc, &d| acc * base + d as u128);
                    if let Some(z) = f.encode(idx as i128) {
                        return Ok(z);
                    }
                }
                h.encode(&BigInt::from(self.digits_to_index(digits)?))
            }
            Kind::Plus(p) => {
                let s = self.to_gauss(&digits.iter().map(|&d| d as i64).collect::<Vec<_>>());
                Ok(self.gauss_to_ints(&p.factors.forward(&s)?))
            }
        }
    }

    /// Lattice point back to its data word. Points outside the data domain
    /// are reported as [`Error::OutOfRange`].
    pub fn decode(&self, z: &[i64]) -> Result<Vec<u32>> {
        self.raw_digits(z)?
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if (0..self.sigma as i64).contains(&v) {
                    Ok(v as u32)
                } else {
                    Err(Error::OutOfRange { index: i, detail: format!("symbol {v} outside 0..{}", self.sigma) })
                }
            })
            .collect()
    }

    /// Like [`decode`](Self::decode), but out-of-range digits are clamped
    /// into `0..sigma`, so every point maps to some data word.
    pub fn decode_clamped(&self, z: &[i64]) -> Result<Vec<u32>> {
        let top = self.sigma as i64 - 1;
        Ok(self.raw_digits(z)?.iter().map(|&v| v.clamp(0, top) as u32).collect())
    }

    fn raw_digits(&self, z: &[i64]) -> Result<Vec<i64>> {
        self.check_point(z)?;
        match &self.kind {
            Kind::None => Ok(z.to_vec()),
            Kind::Hnf(h) => {
                let index = match h.fast.as_ref().and_then(|f| f.decode(z)) {
                    Some(i) => BigUint::from(i as u128),
                    None => h.decode(z)?,
                };
                Ok(self.index_to_digits(&index)?.into_iter().map(i64::from).collect())
            }
            Kind::Plus(p) => Ok(self.gauss_to_ints(&p.factors.inverse(&self.to_gauss(z))?)),
        }
    }

    /// Whether `z` is the image of some data word.
    pub fn is_valid_point(&self, z: &[i64]) -> bool {
        match &self.kind {
            Kind::Hnf(h) => h.contains(z) && self.decode(z).is_ok(),
            _ => self.decode(z).is_ok(),
        }
    }

    /// Transmitted symbols `x = G z - offset`.
    pub fn signal(&self, z: &[i64]) -> Vec<Complex64> {
        let m = self.symbols();
        let mut re_im = self.offset.iter().map(|o| -o).collect::<Vec<_>>();
        for (j, &zj) in z.iter().enumerate() {
            if zj == 0 {
                continue;
            }
            let zf = zj as f64;
            for (i, v) in re_im.iter_mut().enumerate() {
                *v += self.signal[(i, j)] * zf;
            }
        }
        (0..m).map(|i| Complex64::new(re_im[i], re_im[m + i])).collect()
    }

    /// Integer box containing every valid lattice point, padded by one.
    pub fn search_box(&self) -> Vec<(i64, i64)> {
        let top = self.sigma as f64 - 1.0;
        match &self.kind {
            Kind::None => vec![(-1, self.sigma as i64); self.dim()],
            Kind::Hnf(h) => {
                let d = self.dim();
                (0..d)
                    .map(|i| {
                        let (mut lo, mut hi) = (BigInt::zero(), BigInt::zero());
                        for j in 0..d {
                            let v = &h.q[(i, j)];
                            if v.is_negative() {
                                lo += v;
                            } else {
                                hi += v;
                            }
                        }
                        (lo.to_i64().unwrap_or(i64::MIN / 4) - 1, hi.to_i64().unwrap_or(i64::MAX / 4) + 1)
                    })
                    .collect()
            }
            Kind::Plus(p) => {
                let qr = if self.complex { expand_real(&p.q) } else { p.q.map(|z| z.re) };
                let bound = p.factors.error_bound();
                (0..self.dim())
                    .map(|i| {
                        let (mut lo, mut hi) = (0.0, 0.0);
                        for j in 0..self.dim() {
                            let v = qr[(i, j)] * top;
                            if v < 0.0 {
                                lo += v;
                            } else {
                                hi += v;
                            }
                        }
                        ((lo - bound[i]).floor() as i64 - 1, (hi + bound[i]).ceil() as i64 + 1)
                    })
                    .collect()
            }
        }
    }

    fn to_gauss(&self, z: &[i64]) -> Vec<Gauss> {
        let m = self.symbols();
        if self.complex {
            (0..m).map(|i| Gauss::new(z[i], z[m + i])).collect()
        } else {
            z.iter().map(|&v| Gauss::new(v, 0)).collect()
        }
    }

    fn gauss_to_ints(&self, s: &[Gauss]) -> Vec<i64> {
        if self.complex {
            s.iter().map(|v| v.re).chain(s.iter().map(|v| v.im)).collect()
        } else {
            s.iter().map(|v| v.re).collect()
        }
    }

    /// Serializable description; [`SchemeJson::build`] reconstructs the scheme.
    pub fn to_json(&self) -> SchemeJson {
        let (sigma_tilde, q, hnf) = match &self.kind {
            Kind::Hnf(h) => (Some(h.sigma_tilde), Some(h.q.clone()), Some(h.hnf.clone())),
            _ => (None, None, None),
        };
        SchemeJson {
            mode: self.mode,
            sigma: self.sigma,
            options: self.options.clone(),
            generator: ComplexMatrixJson(self.g.clone()),
            sigma_tilde,
            q,
            hnf,
            factors: self.plus().map(|p| p.factors.clone()),
            offset: self.offset.clone(),
        }
    }
}

/// On-disk scheme. Derived fields are informative; rebuilding only uses the
/// generator, mode, `sigma` and options.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchemeJson {
    pub mode: Mode,
    pub sigma: u32,
    #[serde(default)]
    pub options: SchemeOptions,
    pub generator: ComplexMatrixJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<IntMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hnf: Option<HnfDecomposition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<PlusFactorization>,
    #[serde(default)]
    pub offset: Vec<f64>,
}

impl SchemeJson {
    pub fn build(&self) -> Result<ShapingScheme> {
        ShapingScheme::build(&self.generator.0, self.mode, self.sigma, &self.options)
    }
}

impl PlusShaper {
    /// Unit-determinant matrix that was factorized (`scale * G^-1`).
    pub fn q(&self) -> &CMatrix {
        &self.q
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn factors(&self) -> &PlusFactorization {
        &self.factors
    }
}

impl HnfShaper {
    fn build(g_real: &RMatrix, sigma: u32, max_factor: f64) -> Result<Self> {
        let ginv = g_real.clone().try_inverse().ok_or(Error::Singular)?;
        let (sigma_tilde, q) = search_sigma_tilde(&ginv, sigma, max_factor)?;
        Self::from_q(sigma_tilde, q)
    }

    /// Shaper for an explicit integer matrix `q`.
    pub fn from_q(sigma_tilde: f64, q: IntMatrix) -> Result<Self> {
        let hnf = hnf_decompose(&q)?;
        let (d, adj) = adjugate(&q)?;
        let radix = hnf.diagonal();
        let fast = FastHnf::new(&q, &adj, &d, &hnf.r);
        Ok(HnfShaper { sigma_tilde, q, hnf, det: d, adj, radix, fast })
    }

    pub fn sigma_tilde(&self) -> f64 {
        self.sigma_tilde
    }

    pub fn q(&self) -> &IntMatrix {
        &self.q
    }

    pub fn decomposition(&self) -> &HnfDecomposition {
        &self.hnf
    }

    pub fn det(&self) -> &BigInt {
        &self.det
    }

    /// Number of cosets, `|det Q|`.
    pub fn cosets(&self) -> BigUint {
        self.det.magnitude().clone()
    }

    fn dim(&self) -> usize {
        self.q.rows()
    }

    /// Coset index to the representative inside `Q [0,1)^D`.
    pub fn encode(&self, index: &BigInt) -> Result<Vec<i64>> {
        if index.is_negative() || index.magnitude() >= self.det.magnitude() {
            return Err(Error::OutOfRange { index: 0, detail: format!("coset index {index} >= |det Q|") });
        }
        let mut s = Vec::with_capacity(self.dim());
        let mut rest = index.clone();
        for r in &self.radix {
            let (q, m) = rest.div_mod_floor(r);
            s.push(m);
            rest = q;
        }
        let t = self.adj.mul_vec(&s)?;
        let gamma: Vec<BigInt> = t.iter().map(|v| v.div_floor(&self.det)).collect();
        let qg = self.q.mul_vec(&gamma)?;
        s.iter()
            .zip(&qg)
            .enumerate()
            .map(|(i, (a, b))| {
                (a - b).to_i64().ok_or_else(|| Error::OutOfRange { index: i, detail: "coordinate overflow".into() })
            })
            .collect()
    }

    /// Any representative of a coset back to its index (top-down over the
    /// rows of `R`).
    pub fn decode(&self, z: &[i64]) -> Result<BigUint> {
        let d = self.dim();
        if z.len() != d {
            return Err(Error::Dimension(format!("point of length {}, expected {d}", z.len())));
        }
        let mut t: Vec<BigInt> = z.iter().map(|&v| BigInt::from(v)).collect();
        let r = &self.hnf.r;
        let mut index = BigInt::zero();
        let mut weight = BigInt::one();
        for i in 0..d {
            let rii = &r[(i, i)];
            let si = t[i].mod_floor(rii);
            let f = (&si - &t[i]) / rii;
            if !f.is_zero() {
                for k in i..d {
                    t[k] += &f * &r[(k, i)];
                }
            }
            index += &si * &weight;
            weight *= rii;
        }
        Ok(index.to_biguint().expect("nonnegative index"))
    }

    /// Whether `Q^-1 z` lies in `[0,1)^D`.
    pub fn contains(&self, z: &[i64]) -> bool {
        let zb: Vec<BigInt> = z.iter().map(|&v| BigInt::from(v)).collect();
        let Ok(t) = self.adj.mul_vec(&zb) else {
            return false;
        };
        t.iter().all(|v| {
            if self.det.is_positive() {
                !v.is_negative() && v < &self.det
            } else {
                !v.is_positive() && v > &self.det
            }
        })
    }

    /// Centroid of the integer points in `Q [0,1)^D`. For each coordinate,
    /// `(Q^-1 z)_i mod 1` runs uniformly over a cyclic group of order
    /// `n_i = |det| / gcd(|det|, row i of adj Q)`, whose mean is
    /// `1/2 - 1/(2 n_i)`.
    fn centroid(&self) -> Vec<f64> {
        let d = self.dim();
        let det_abs = self.det.abs();
        let c: Vec<f64> = (0..d)
            .map(|i| {
                let g = self.adj.row(i).iter().fold(det_abs.clone(), |acc, v| acc.gcd(v));
                let n = (&det_abs / g).to_f64().unwrap_or(f64::INFINITY);
                0.5 - 0.5 / n
            })
            .collect();
        let qf = DMatrix::from_row_slice(d, d, &self.q.to_f64());
        (qf * DVector::from_vec(c)).as_slice().to_vec()
    }
}

impl FastHnf {
    fn new(q: &IntMatrix, adj: &IntMatrix, d: &BigInt, r: &IntMatrix) -> Option<Self> {
        let conv = |m: &IntMatrix| -> Option<Vec<i128>> {
            (0..m.rows()).flat_map(|i| m.row(i).iter().map(|v| v.to_i128())).collect()
        };
        Some(FastHnf {
            q: conv(q)?,
            adj: conv(adj)?,
            det: d.to_i128()?,
            radix: (0..q.rows()).map(|i| r[(i, i)].to_i128()).collect::<Option<_>>()?,
            r: conv(r)?,
        })
    }

    fn dot(row: &[i128], v: &[i128]) -> Option<i128> {
        row.iter().zip(v).try_fold(0i128, |acc, (a, b)| acc.checked_add(a.checked_mul(*b)?))
    }

    // `None` on overflow; the caller then redoes the work with big integers.
    fn encode(&self, index: i128) -> Option<Vec<i64>> {
        let n = self.radix.len();
        if index < 0 || index >= self.det.abs() {
            return None;
        }
        let mut s = Vec::with_capacity(n);
        let mut rest = index;
        for &r in &self.radix {
            s.push(rest.rem_euclid(r));
            rest = rest.div_euclid(r);
        }
        let gamma: Vec<i128> = (0..n)
            .map(|i| Some(Integer::div_floor(&Self::dot(&self.adj[i * n..(i + 1) * n], &s)?, &self.det)))
            .collect::<Option<_>>()?;
        (0..n)
            .map(|i| i64::try_from(s[i].checked_sub(Self::dot(&self.q[i * n..(i + 1) * n], &gamma)?)?).ok())
            .collect()
    }

    fn decode(&self, z: &[i64]) -> Option<i128> {
        let n = self.radix.len();
        let mut t: Vec<i128> = z.iter().map(|&v| v as i128).collect();
        let mut index: i128 = 0;
        let mut weight: i128 = 1;
        for i in 0..n {
            let rii = self.radix[i];
            let si = t[i].rem_euclid(rii);
            let f = (si - t[i]) / rii;
            if f != 0 {
                for (k, tk) in t.iter_mut().enumerate().skip(i) {
                    *tk = tk.checked_add(f.checked_mul(self.r[k * n + i])?)?;
                }
            }
            index = index.checked_add(si.checked_mul(weight)?)?;
            weight = weight.checked_mul(rii)?;
        }
        Some(index)
    }
}

#[derive(PartialEq)]
struct Breakpoint(f64);

impl Eq for Breakpoint {}

impl PartialOrd for Breakpoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Breakpoint {
    // Reversed: BinaryHeap pops the smallest breakpoint first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0)
    }
}

fn rounded(ginv: &RMatrix, t: f64) -> IntMatrix {
    let d = ginv.nrows();
    let data = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| BigInt::from(round_i64(t * ginv[(i, j)])))
        .collect();
    IntMatrix::new(d, d, data).expect("square")
}

/// Smallest `sigma~` with `|det round(sigma~ G^-1)| >= sigma^D`.
///
/// `round(t G^-1)` is piecewise constant in `t`, jumping only at
/// `t = (k + 1/2) / |g_ij|`. The scan visits those intervals in increasing
/// order, starting from a Hadamard lower bound below which no interval can
/// be feasible, and reports the midpoint of the first feasible one.
pub fn search_sigma_tilde(ginv: &RMatrix, sigma: u32, max_factor: f64) -> Result<(f64, IntMatrix)> {
    let d = require_square(ginv)?;
    let target = BigInt::from(sigma).pow(d as u32);
    let det_g = ginv.clone().determinant().abs();
    if det_g == 0.0 || !det_g.is_finite() {
        return Err(Error::Singular);
    }
    let nominal = sigma as f64 / det_g.powf(1.0 / d as f64);
    let cap = nominal * max_factor;

    let row_norms: Vec<f64> = (0..d).map(|i| ginv.row(i).norm()).collect();
    let slack = 0.5 * (d as f64).sqrt();
    let log_target = d as f64 * (sigma as f64).ln();
    let hadamard = |t: f64| row_norms.iter().map(|&r| (t * r + slack).ln()).sum::<f64>();
    let (mut lo, mut hi) = (0.0, nominal);
    if hadamard(lo) < log_target {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hadamard(mid) < log_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let start = lo;

    let big = ginv.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut heap = BinaryHeap::new();
    for &g in ginv.iter() {
        let a = g.abs();
        if a <= 1e-12 * big {
            continue;
        }
        let mut k = (start * a - 0.5).ceil().max(0.0);
        if (k + 0.5) / a <= start {
            k += 1.0;
        }
        heap.push((Breakpoint((k + 0.5) / a), a.to_bits(), k as u64));
    }

    let mut left = start;
    while left <= cap {
        let Some((Breakpoint(right), bits, k)) = heap.pop() else {
            break;
        };
        if right > left * (1.0 + 1e-12) {
            let mid = 0.5 * (left + right);
            let q = rounded(ginv, mid);
            let dq = det(&q)?;
            if !dq.is_zero() && dq.abs() >= target {
                return Ok((mid, q));
            }
        }
        let a = f64::from_bits(bits);
        heap.push((Breakpoint((k as f64 + 1.5) / a), bits, k + 1));
        left = right;
    }
    Err(Error::Construction(format!(
        "no sigma~ up to {cap:.4} gives |det Q| >= {sigma}^{d}"
    )))
}

/// Signed-magnitude helper used by tests and the command line.
pub fn bigint_from_biguint(v: &BigUint) -> BigInt {
    BigInt::from_biguint(Sign::Plus, v.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(m: usize, v: &[f64]) -> CMatrix {
        RMatrix::from_row_slice(m, m, v).map(|x| Complex64::new(x, 0.0))
    }

    #[test]
    fn identity_generator_gives_sigma_times_identity() {
        let s = ShapingScheme::build(&real(2, &[1.0, 0.0, 0.0, 1.0]), Mode::Hnf, 4, &SchemeOptions::default())
            .unwrap();
        let h = s.hnf().unwrap();
        assert_eq!(h.sigma_tilde(), 4.0);
        let four = IntMatrix::from_rows(&[vec![4, 0], vec![0, 4]]).unwrap();
        assert_eq!(h.q(), &four);
        assert_eq!(h.decomposition().r, four);
        assert_eq!(h.decomposition().v, IntMatrix::identity(2));
    }

    #[test]
    fn mixed_radix_example() {
        let q = IntMatrix::from_rows(&[vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 3]]).unwrap();
        let h = HnfShaper::from_q(1.0, q).unwrap();
        // 5 = 0 + 1*(1*2)... digits: 5 mod 1 = 0, 5 mod 2 = 1, 2 mod 3 = 2
        assert_eq!(h.encode(&BigInt::from(5)).unwrap(), vec![0, 1, 2]);
        assert_eq!(h.decode(&[0, 1, 2]).unwrap(), BigUint::from(5u32));
    }

    #[test]
    fn centroid_of_diagonal_box_is_exact() {
        let q = IntMatrix::from_rows(&[vec![4, 0], vec![0, 6]]).unwrap();
        let h = HnfShaper::from_q(1.0, q).unwrap();
        assert_eq!(h.centroid(), vec![1.5, 2.5]);
    }

    #[test]
    fn plus_identity_is_unshaped() {
        let g = real(2, &[1.0, 0.0, 0.0, 1.0]);
        let s = ShapingScheme::build(&g, Mode::Plus, 8, &SchemeOptions::default()).unwrap();
        let d = vec![3, 7];
        assert_eq!(s.encode(&d).unwrap(), vec![3, 7]);
        assert_eq!(s.offset(), &[3.5, 3.5, 0.0, 0.0]);
    }

    #[test]
    fn out_of_range_digit() {
        let g = real(2, &[1.0, 0.0, 0.0, 1.0]);
        let s = ShapingScheme::build(&g, Mode::Hnf, 4, &SchemeOptions::default()).unwrap();
        assert!(matches!(s.encode(&[1, 4]), Err(Error::OutOfRange { index: 1, .. })));
    }
}
