//! Factorization of a unit-determinant matrix into exactly invertible
//! integer-to-integer maps: `Q = P * L * D_R * U * S0`.
//!
//! `L`, `U` and `S0` are triangular elementary reversible matrices (TERMs):
//! unit-magnitude Gaussian diagonals, arbitrary off-diagonal entries. Each one
//! maps Gaussian-integer vectors to Gaussian-integer vectors by rounding the
//! off-diagonal contribution, and the inverse recomputes the very same sums,
//! so `inverse(forward(s)) == s` holds bit for bit. `D_R` is a residual phase
//! rotation on the last coordinate, itself realised as three real lifting
//! steps, and `P` a permutation.
//!
//! ```
//! use nalgebra::DMatrix;
//! use num_complex::Complex64;
//! use stshape::linalg::Gauss;
//! use stshape::plusfact::plus_factorize;
//!
//! let c = std::f64::consts::FRAC_1_SQRT_2;
//! let q = DMatrix::from_row_slice(2, 2, &[c, -c, c, c]).map(|x| Complex64::new(x, 0.0));
//! let f = plus_factorize(&q).unwrap();
//! let s = vec![Gauss::new(5, 0), Gauss::new(-2, 0)];
//! let t = f.forward(&s).unwrap();
//! assert_eq!(f.inverse(&t).unwrap(), s);
//! ```

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    cdet, cinverse, expand_real, gauss_to_c64, real_part, require_square, round_gauss, round_i64,
    CMatrix, Gauss, RMatrix,
};

/// Powers of `i`, the admissible TERM diagonal entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "i")]
    I,
    #[serde(rename = "-1")]
    MinusOne,
    #[serde(rename = "-i")]
    MinusI,
}

impl Unit {
    pub fn from_power(k: i64) -> Unit {
        match k.rem_euclid(4) {
            0 => Unit::One,
            1 => Unit::I,
            2 => Unit::MinusOne,
            _ => Unit::MinusI,
        }
    }

    pub fn power(self) -> i64 {
        match self {
            Unit::One => 0,
            Unit::I => 1,
            Unit::MinusOne => 2,
            Unit::MinusI => 3,
        }
    }

    pub fn value(self) -> Complex64 {
        match self {
            Unit::One => Complex64::new(1.0, 0.0),
            Unit::I => Complex64::new(0.0, 1.0),
            Unit::MinusOne => Complex64::new(-1.0, 0.0),
            Unit::MinusI => Complex64::new(0.0, -1.0),
        }
    }

    pub fn inv(self) -> Unit {
        Unit::from_power(-self.power())
    }

    pub fn apply(self, z: Gauss) -> Gauss {
        match self {
            Unit::One => z,
            Unit::I => Gauss::new(-z.im, z.re),
            Unit::MinusOne => -z,
            Unit::MinusI => Gauss::new(z.im, -z.re),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TermKind {
    Lower,
    Upper,
    /// Single-row elementary reversible matrix: off-diagonal entries only in `row`.
    Serm { row: usize },
}

#[derive(Clone)]
pub struct TermFactor {
    kind: TermKind,
    entries: CMatrix,
    diag: Vec<Unit>,
    // Nonzero off-diagonal entries per row, ascending column order.
    terms: Vec<Vec<(usize, Complex64)>>,
}

impl fmt::Debug for TermFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TermFactor")
            .field("kind", &self.kind)
            .field("diag", &self.diag)
            .field("terms", &self.terms)
            .finish()
    }
}

impl TermFactor {
    /// Builds a TERM from its off-diagonal entries (the diagonal of `entries`
    /// is ignored) and its unit diagonal.
    pub fn new(kind: TermKind, entries: CMatrix, diag: Vec<Unit>) -> Result<Self> {
        let n = require_square(&entries)?;
        if diag.len() != n {
            return Err(Error::Dimension(format!("diagonal of length {} for size {n}", diag.len())));
        }
        if let TermKind::Serm { row } = kind {
            if row >= n {
                return Err(Error::InvalidParameter(format!("SERM row {row} out of 0..{n}")));
            }
        }
        let mut terms = vec![Vec::new(); n];
        let mut clean = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let a = entries[(i, j)];
                if i == j || a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let allowed = match kind {
                    TermKind::Lower => j < i,
                    TermKind::Upper => j > i,
                    TermKind::Serm { row } => i == row,
                };
                if !allowed {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({i}, {j}) not allowed in a {kind:?} factor"
                    )));
                }
                if !a.re.is_finite() || !a.im.is_finite() {
                    return Err(Error::InvalidParameter(format!("entry ({i}, {j}) is not finite")));
                }
                terms[i].push((j, a));
                clean[(i, j)] = a;
            }
        }
        Ok(TermFactor { kind, entries: clean, diag, terms })
    }

    pub fn identity(kind: TermKind, n: usize) -> Self {
        TermFactor::new(kind, CMatrix::zeros(n, n), vec![Unit::One; n]).expect("identity TERM")
    }

    pub fn kind(&self) -> TermKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn diagonal(&self) -> &[Unit] {
        &self.diag
    }

    /// Off-diagonal entries (zero diagonal).
    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn matrix(&self) -> CMatrix {
        let mut m = self.entries.clone();
        for (i, u) in self.diag.iter().enumerate() {
            m[(i, i)] = u.value();
        }
        m
    }

    pub fn is_identity(&self) -> bool {
        self.terms.iter().all(Vec::is_empty) && self.diag.iter().all(|&u| u == Unit::One)
    }

    /// Rows whose output involves a rounding.
    pub fn rounded_rows(&self) -> Vec<usize> {
        (0..self.size()).filter(|&i| !self.terms[i].is_empty()).collect()
    }

    fn row_sum(&self, i: usize, s: &[Gauss]) -> Gauss {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(j, a) in &self.terms[i] {
            acc += a * gauss_to_c64(s[j]);
        }
        round_gauss(acc)
    }

    fn check_len(&self, v: &[Gauss]) -> Result<()> {
        if v.len() != self.size() {
            return Err(Error::Dimension(format!(
                "vector of length {} for a factor of size {}",
                v.len(),
                self.size()
            )));
        }
        Ok(())
    }

    /// `y_i = j_i s_i + [sum_{k != i} a_ik s_k]`.
    pub fn forward(&self, s: &[Gauss]) -> Result<Vec<Gauss>> {
        self.check_len(s)?;
        Ok((0..s.len()).map(|i| self.diag[i].apply(s[i]) + self.row_sum(i, s)).collect())
    }

    /// Exact inverse of [`TermFactor::forward`].
    pub fn inverse(&self, y: &[Gauss]) -> Result<Vec<Gauss>> {
        self.check_len(y)?;
        let n = y.len();
        let mut s = vec![Gauss::new(0, 0); n];
        let solve = |i: usize, s: &mut Vec<Gauss>| {
            let r = self.row_sum(i, s);
            s[i] = self.diag[i].inv().apply(y[i] - r);
        };
        match self.kind {
            TermKind::Lower => (0..n).for_each(|i| solve(i, &mut s)),
            TermKind::Upper => (0..n).rev().for_each(|i| solve(i, &mut s)),
            TermKind::Serm { row } => {
                (0..n).filter(|&i| i != row).for_each(|i| solve(i, &mut s));
                solve(row, &mut s);
            }
        }
        Ok(s)
    }
}

/// Multiplication of coordinate `index` by `e^{i theta}`, implemented as three
/// real lifting steps on its real and imaginary parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftingRotation {
    pub index: usize,
    pub theta: f64,
    p: f64,
    s: f64,
}

impl LiftingRotation {
    pub fn new(index: usize, theta: f64) -> Result<Self> {
        let (s, c) = theta.sin_cos();
        if s.abs() < 1e-12 || !theta.is_finite() {
            return Err(Error::InvalidParameter(format!("no lifting for rotation angle {theta}")));
        }
        Ok(LiftingRotation { index, theta, p: (1.0 - c) / s, s })
    }

    pub fn forward(&self, v: &mut [Gauss]) {
        let z = &mut v[self.index];
        let (mut x, mut y) = (z.re, z.im);
        y += round_i64(self.p * x as f64);
        x += round_i64(-self.s * y as f64);
        y += round_i64(self.p * x as f64);
        *z = Gauss::new(x, y);
    }

    pub fn inverse(&self, v: &mut [Gauss]) {
        let z = &mut v[self.index];
        let (mut x, mut y) = (z.re, z.im);
        y -= round_i64(self.p * x as f64);
        x -= round_i64(-self.s * y as f64);
        y -= round_i64(self.p * x as f64);
        *z = Gauss::new(x, y);
    }

    /// The three lifting steps as real-coordinate matrices (size `2n`), in
    /// application order, each paired with the real coordinate it rounds.
    fn steps(&self, n: usize) -> [(RMatrix, usize); 3] {
        let (x, y) = (self.index, n + self.index);
        let lift = |row: usize, col: usize, a: f64| {
            let mut t = RMatrix::identity(2 * n, 2 * n);
            t[(row, col)] = a;
            (t, row)
        };
        [lift(y, x, self.p), lift(x, y, -self.s), lift(y, x, self.p)]
    }
}

/// The 2x2 real rotation by `theta` written as `L(p) * U(-sin) * L(p)` with
/// `p = (1 - cos) / sin`.
pub fn rotation_lifting(theta: f64) -> Result<[TermFactor; 3]> {
    let rot = LiftingRotation::new(0, theta)?;
    let real = |x: f64| Complex64::new(x, 0.0);
    let lower = TermFactor::new(
        TermKind::Lower,
        CMatrix::from_row_slice(2, 2, &[real(0.0), real(0.0), real(rot.p), real(0.0)]),
        vec![Unit::One; 2],
    )?;
    let upper = TermFactor::new(
        TermKind::Upper,
        CMatrix::from_row_slice(2, 2, &[real(0.0), real(-rot.s), real(0.0), real(0.0)]),
        vec![Unit::One; 2],
    )?;
    Ok([lower.clone(), upper, lower])
}

/// `out[map[i]] = in[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    pub map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidParameter(format!("{map:?} is not a permutation")));
            }
        }
        Ok(Permutation { map })
    }

    pub fn identity(n: usize) -> Self {
        Permutation { map: (0..n).collect() }
    }

    pub fn apply<T: Copy + Default>(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); v.len()];
        for (i, &m) in self.map.iter().enumerate() {
            out[m] = v[i];
        }
        out
    }

    pub fn apply_inverse<T: Copy + Default>(&self, v: &[T]) -> Vec<T> {
        self.map.iter().map(|&m| v[m]).collect()
    }

    pub fn matrix(&self) -> CMatrix {
        let n = self.map.len();
        let mut p = CMatrix::zeros(n, n);
        for (i, &m) in self.map.iter().enumerate() {
            p[(m, i)] = Complex64::new(1.0, 0.0);
        }
        p
    }
}

/// One factor of the chain, listed in application order by
/// [`PlusFactorization::factors`].
#[derive(Clone, Debug)]
pub enum Factor {
    Term(TermFactor),
    Rotation(LiftingRotation),
    Permutation(Permutation),
}

#[derive(Clone, Debug)]
pub struct PlusFactorization {
    real: bool,
    p: Permutation,
    l: TermFactor,
    rotation: Option<LiftingRotation>,
    u: TermFactor,
    s0: TermFactor,
}

struct Stage {
    t: RMatrix,
    rounded: Vec<usize>,
}

impl PlusFactorization {
    pub fn size(&self) -> usize {
        self.p.map.len()
    }

    /// True when every factor is real, so real integer vectors stay real.
    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn permutation(&self) -> &Permutation {
        &self.p
    }

    pub fn lower(&self) -> &TermFactor {
        &self.l
    }

    pub fn upper(&self) -> &TermFactor {
        &self.u
    }

    pub fn serm(&self) -> &TermFactor {
        &self.s0
    }

    pub fn rotation(&self) -> Option<&LiftingRotation> {
        self.rotation.as_ref()
    }

    pub fn factors(&self) -> Vec<Factor> {
        let mut f = vec![Factor::Term(self.s0.clone()), Factor::Term(self.u.clone())];
        if let Some(r) = self.rotation {
            f.push(Factor::Rotation(r));
        }
        f.push(Factor::Term(self.l.clone()));
        f.push(Factor::Permutation(self.p.clone()));
        f
    }

    /// `P * L * D_R * U * S0` in floating point.
    pub fn product(&self) -> CMatrix {
        let n = self.size();
        let mut d = CMatrix::identity(n, n);
        if let Some(r) = self.rotation {
            d[(r.index, r.index)] = Complex64::from_polar(1.0, r.theta);
        }
        self.p.matrix() * self.l.matrix() * d * self.u.matrix() * self.s0.matrix()
    }

    /// `s~ = P[L[D_R[U[S0 s]]]]`.
    pub fn forward(&self, s: &[Gauss]) -> Result<Vec<Gauss>> {
        let mut v = self.s0.forward(s)?;
        v = self.u.forward(&v)?;
        if let Some(r) = self.rotation {
            r.forward(&mut v);
        }
        v = self.l.forward(&v)?;
        Ok(self.p.apply(&v))
    }

    pub fn inverse(&self, t: &[Gauss]) -> Result<Vec<Gauss>> {
        if t.len() != self.size() {
            return Err(Error::Dimension(format!(
                "vector of length {} for size {}",
                t.len(),
                self.size()
            )));
        }
        let mut v = self.p.apply_inverse(t);
        v = self.l.inverse(&v)?;
        if let Some(r) = self.rotation {
            r.inverse(&mut v);
        }
        v = self.u.inverse(&v)?;
        self.s0.inverse(&v)
    }

    /// Real dimension of the rounding-error analysis: `n` for real chains,
    /// `2n` (real parts first) otherwise.
    pub fn real_dim(&self) -> usize {
        if self.real {
            self.size()
        } else {
            2 * self.size()
        }
    }

    fn real_matrix(&self, m: &CMatrix) -> RMatrix {
        if self.real {
            real_part(m)
        } else {
            expand_real(m)
        }
    }

    fn term_stage(&self, f: &TermFactor) -> Stage {
        let n = self.size();
        let rows = f.rounded_rows();
        let mut rounded = rows.clone();
        if !self.real {
            rounded.extend(rows.iter().map(|r| r + n));
        }
        Stage { t: self.real_matrix(&f.matrix()), rounded }
    }

    fn stages(&self) -> Vec<Stage> {
        let mut st = vec![self.term_stage(&self.s0), self.term_stage(&self.u)];
        if let Some(r) = self.rotation {
            for (t, row) in r.steps(self.size()) {
                st.push(Stage { t, rounded: vec![row] });
            }
        }
        st.push(self.term_stage(&self.l));
        st.push(Stage { t: self.real_matrix(&self.p.matrix()), rounded: vec![] });
        st
    }

    /// For every stage, the map carrying an error injected right after that
    /// stage to the output, paired with the coordinates that stage rounds.
    fn propagators(&self) -> Vec<(RMatrix, Vec<usize>)> {
        let stages = self.stages();
        let d = self.real_dim();
        let mut out = Vec::with_capacity(stages.len());
        let mut tail = RMatrix::identity(d, d);
        for st in stages.iter().rev() {
            out.push((tail.clone(), st.rounded.clone()));
            tail = &tail * &st.t;
        }
        out.reverse();
        out
    }

    /// Per real coordinate of the output, a bound on `|s~ - Q s|` that holds
    /// for every input: each rounding contributes at most 1/2 through the
    /// stages that follow it.
    pub fn error_bound(&self) -> Vec<f64> {
        let d = self.real_dim();
        let mut b = vec![0.0; d];
        for (prop, rounded) in self.propagators() {
            for &c in &rounded {
                for (i, bi) in b.iter_mut().enumerate() {
                    *bi += 0.5 * prop[(i, c)].abs();
                }
            }
        }
        b
    }

    /// Expected power of `g * (s~ - Q s)` when every rounding error is an
    /// independent uniform variable on `[-1/2, 1/2)`. `g` acts on the real
    /// coordinates of the output (see [`PlusFactorization::real_dim`]).
    pub fn predicted_error_power(&self, g: &RMatrix) -> f64 {
        let mut total = 0.0;
        for (prop, rounded) in self.propagators() {
            let gp = g * prop;
            for &c in &rounded {
                total += gp.column(c).norm_squared() / 12.0;
            }
        }
        total
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PlusOptions {
    /// Search every pivot sequence when there are at most this many.
    pub exhaustive_limit: usize,
    /// Otherwise, number of complete factorizations compared when greedy
    /// pivot choices tie.
    pub tie_budget: usize,
}

impl Default for PlusOptions {
    fn default() -> Self {
        PlusOptions { exhaustive_limit: 50_000, tie_budget: 256 }
    }
}

pub fn plus_factorize(q: &CMatrix) -> Result<PlusFactorization> {
    plus_factorize_with(q, PlusOptions::default())
}

/// Factorizes `q` (square, `|det q| = 1` within `1e-6`).
///
/// Elimination runs on the columns `0..n-1`. Before column `k` is
/// eliminated, a pivot row is chosen, the column is multiplied by a unit
/// `u_k` and a multiple `s_k` of the last column is subtracted so that the
/// pivot becomes exactly one; `s` and the units end up in `S0`.
///
/// Different choices give different rounding-error power in the signal
/// domain (`q^-1` times the accumulated error). When the number of pivot
/// sequences is at most `exhaustive_limit`, all are tried; otherwise each
/// step greedily minimises `|s_k|` and only ties are branched on. The chain
/// with the lowest predicted error power is returned; the earliest one
/// wins exact ties, so the identity maps to identity factors.
pub fn plus_factorize_with(q: &CMatrix, opts: PlusOptions) -> Result<PlusFactorization> {
    let n = require_square(q)?;
    if q.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let d = cdet(q)?.norm();
    if (d - 1.0).abs() > 1e-6 {
        return Err(Error::Normalization(d));
    }
    let real = q.iter().all(|z| z.im == 0.0);
    let qinv = cinverse(q)?;
    let signal = if real { real_part(&qinv) } else { expand_real(&qinv) };
    let scale = q.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let units: &[Unit] = if real {
        &[Unit::One, Unit::MinusOne]
    } else {
        &[Unit::One, Unit::I, Unit::MinusOne, Unit::MinusI]
    };
    let mut sequences = 1.0f64;
    for k in 0..n.saturating_sub(1) {
        sequences *= ((n - k) * units.len()) as f64;
    }

    let mut search = Search {
        n,
        real,
        tol: 1e-12 * scale,
        signal,
        units,
        exhaustive: sequences <= opts.exhaustive_limit as f64,
        budget: opts.tie_budget.max(1),
        leaves: 0,
        best: None,
    };
    let start = Partial {
        w: q.clone(),
        order: (0..n).collect(),
        lmul: CMatrix::zeros(n, n),
        s: vec![Complex64::new(0.0, 0.0); n],
        col_units: vec![Unit::One; n],
    };
    search.explore(0, start)?;
    search
        .best
        .map(|(_, f)| f)
        .ok_or_else(|| Error::Factorization("no admissible pivot sequence".into()))
}

#[derive(Clone)]
struct Partial {
    w: CMatrix,
    order: Vec<usize>,
    lmul: CMatrix,
    s: Vec<Complex64>,
    col_units: Vec<Unit>,
}

struct Search<'a> {
    n: usize,
    real: bool,
    tol: f64,
    signal: RMatrix,
    units: &'a [Unit],
    exhaustive: bool,
    budget: usize,
    leaves: usize,
    best: Option<(f64, PlusFactorization)>,
}

impl Search<'_> {
    /// `|s_k|` needed to turn `u * w[r][k]` into one.
    fn pivot_cost(&self, w: &CMatrix, r: usize, k: usize, u: Unit) -> f64 {
        let num = (u.value() * w[(r, k)] - Complex64::new(1.0, 0.0)).norm();
        if num <= self.tol {
            return 0.0;
        }
        let den = w[(r, self.n - 1)].norm();
        if den <= self.tol {
            f64::INFINITY
        } else {
            num / den
        }
    }

    fn explore(&mut self, k: usize, part: Partial) -> Result<()> {
        let n = self.n;
        if k + 1 >= n {
            let f = self.finish(part)?;
            let power = f.predicted_error_power(&self.signal);
            self.leaves += 1;
            if self.best.as_ref().is_none_or(|(b, _)| power < *b * (1.0 - 1e-12)) {
                self.best = Some((power, f));
            }
            return Ok(());
        }
        let mut cands: Vec<(f64, usize, Unit)> = Vec::new();
        for r in k..n {
            for &u in self.units {
                if u != Unit::One && part.w[(r, k)].norm() <= self.tol {
                    continue;
                }
                let c = self.pivot_cost(&part.w, r, k, u);
                if c.is_finite() {
                    cands.push((c, r, u));
                }
            }
        }
        if cands.is_empty() {
            return Err(Error::Factorization(format!("no usable pivot for column {k}")));
        }
        // Stable: equal costs keep row-then-unit order.
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        let min = cands[0].0;
        if !self.exhaustive {
            cands.retain(|c| c.0 <= min * (1.0 + 1e-9) + 1e-12);
        }
        for (idx, &(_, r, u)) in cands.iter().enumerate() {
            if idx > 0 && !self.exhaustive && self.leaves >= self.budget {
                break;
            }
            let mut p = part.clone();
            self.step(&mut p, k, r, u);
            self.explore(k + 1, p)?;
        }
        Ok(())
    }

    fn step(&self, p: &mut Partial, k: usize, r: usize, u: Unit) {
        let n = self.n;
        if r != k {
            p.w.swap_rows(k, r);
            p.order.swap(k, r);
            for j in 0..k {
                let t = p.lmul[(k, j)];
                p.lmul[(k, j)] = p.lmul[(r, j)];
                p.lmul[(r, j)] = t;
            }
        }
        if u != Unit::One {
            for i in 0..n {
                p.w[(i, k)] *= u.value();
            }
        }
        p.col_units[k] = u;
        let one = Complex64::new(1.0, 0.0);
        let s = if (p.w[(k, k)] - one).norm() <= self.tol {
            Complex64::new(0.0, 0.0)
        } else {
            (p.w[(k, k)] - one) / p.w[(k, n - 1)]
        };
        p.s[k] = s;
        if s != Complex64::new(0.0, 0.0) {
            for i in 0..n {
                let t = s * p.w[(i, n - 1)];
                p.w[(i, k)] -= t;
            }
        }
        p.w[(k, k)] = one;
        for i in k + 1..n {
            let m = p.w[(i, k)];
            p.lmul[(i, k)] = m;
            if m == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in k..n {
                let t = m * p.w[(k, j)];
                p.w[(i, j)] -= t;
            }
            p.w[(i, k)] = Complex64::new(0.0, 0.0);
        }
    }

    fn finish(&self, p: Partial) -> Result<PlusFactorization> {
        let n = self.n;
        let clean = |z: Complex64| {
            let re = if z.re.abs() <= 1e-14 { 0.0 } else { z.re };
            let im = if z.im.abs() <= 1e-14 || self.real { 0.0 } else { z.im };
            Complex64::new(re, im)
        };
        let d = p.w[(n - 1, n - 1)];
        let phi = d.arg();
        let quarter = (phi / FRAC_PI_2).round();
        let theta = phi - quarter * FRAC_PI_2;
        let unit = Unit::from_power(quarter as i64);
        let rotation = if theta.abs() > 1e-12 && !self.real {
            Some(LiftingRotation::new(n - 1, theta)?)
        } else {
            None
        };

        let mut l = CMatrix::zeros(n, n);
        let mut u = CMatrix::zeros(n, n);
        let mut s0 = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                l[(i, j)] = clean(p.lmul[(i, j)]);
            }
            for j in i + 1..n {
                u[(i, j)] = clean(p.w[(i, j)]);
            }
        }
        // Column units move to the right of S: S diag(u)^-1 is again a SERM.
        let sdiag: Vec<Unit> = p.col_units.iter().map(|u| u.inv()).collect();
        for k in 0..n.saturating_sub(1) {
            s0[(n - 1, k)] = clean(p.s[k] * sdiag[k].value());
        }
        let mut udiag = vec![Unit::One; n];
        udiag[n - 1] = unit;
        Ok(PlusFactorization {
            real: self.real,
            p: Permutation::new(p.order)?,
            l: TermFactor::new(TermKind::Lower, l, vec![Unit::One; n])?,
            rotation,
            u: TermFactor::new(TermKind::Upper, u, udiag)?,
            s0: TermFactor::new(TermKind::Serm { row: n - 1 }, s0, sdiag)?,
        })
    }
}

// Serialized factor list, application order.

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FactorJson {
    Serm { row: usize, diagonal: Vec<Unit>, entries: Vec<Vec<[f64; 2]>> },
    Upper { diagonal: Vec<Unit>, entries: Vec<Vec<[f64; 2]>> },
    Lower { diagonal: Vec<Unit>, entries: Vec<Vec<[f64; 2]>> },
    Rotation { index: usize, theta: f64 },
    Permutation { map: Vec<usize> },
}

#[derive(Serialize, Deserialize)]
struct FactorizationJson {
    size: usize,
    real: bool,
    factors: Vec<FactorJson>,
}

fn entries_json(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

fn entries_from_json(e: &[Vec<[f64; 2]>]) -> Result<CMatrix> {
    let n = e.len();
    if e.iter().any(|r| r.len() != n) {
        return Err(Error::Schema("factor entries must be square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| Complex64::new(e[i][j][0], e[i][j][1])))
}

impl Serialize for PlusFactorization {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let factors = self
            .factors()
            .into_iter()
            .map(|f| match f {
                Factor::Term(t) => {
                    let (diagonal, entries) = (t.diag.clone(), entries_json(&t.entries));
                    match t.kind {
                        TermKind::Serm { row } => FactorJson::Serm { row, diagonal, entries },
                        TermKind::Upper => FactorJson::Upper { diagonal, entries },
                        TermKind::Lower => FactorJson::Lower { diagonal, entries },
                    }
                }
                Factor::Rotation(r) => FactorJson::Rotation { index: r.index, theta: r.theta },
                Factor::Permutation(p) => FactorJson::Permutation { map: p.map },
            })
            .collect();
        FactorizationJson { size: self.size(), real: self.real, factors }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PlusFactorization {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = FactorizationJson::deserialize(d)?;
        let build = || -> Result<PlusFactorization> {
            let mut it = j.factors.into_iter();
            let mut next = || it.next().ok_or_else(|| Error::Schema("truncated factor list".into()));
            let s0 = match next()? {
                FactorJson::Serm { row, diagonal, entries } => {
                    TermFactor::new(TermKind::Serm { row }, entries_from_json(&entries)?, diagonal)?
                }
                _ => return Err(Error::Schema("first factor must be a SERM".into())),
            };
            let u = match next()? {
                FactorJson::Upper { diagonal, entries } => {
                    TermFactor::new(TermKind::Upper, entries_from_json(&entries)?, diagonal)?
                }
                _ => return Err(Error::Schema("second factor must be upper".into())),
            };
            let mut f = next()?;
            let mut rotation = None;
            if let FactorJson::Rotation { index, theta } = f {
                rotation = Some(LiftingRotation::new(index, theta)?);
                f = next()?;
            }
            let l = match f {
                FactorJson::Lower { diagonal, entries } => {
                    TermFactor::new(TermKind::Lower, entries_from_json(&entries)?, diagonal)?
                }
                _ => return Err(Error::Schema("expected a lower factor".into())),
            };
            let p = match next()? {
                FactorJson::Permutation { map } => Permutation::new(map)?,
                _ => return Err(Error::Schema("last factor must be a permutation".into())),
            };
            let n = j.size;
            if [s0.size(), u.size(), l.size(), p.map.len()].iter().any(|&k| k != n) {
                return Err(Error::Schema("factor sizes disagree".into()));
            }
            Ok(PlusFactorization { real: j.real, p, l, rotation, u, s0 })
        };
        build().map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn upper_term_example() {
        let e = CMatrix::from_row_slice(2, 2, &[c(0.0), c(0.5), c(0.0), c(0.0)]);
        let t = TermFactor::new(TermKind::Upper, e, vec![Unit::One; 2]).unwrap();
        let s = [Gauss::new(3, 0), Gauss::new(5, 0)];
        // 3 + round(2.5) = 6
        assert_eq!(t.forward(&s).unwrap(), vec![Gauss::new(6, 0), Gauss::new(5, 0)]);
        assert_eq!(t.inverse(&[Gauss::new(6, 0), Gauss::new(5, 0)]).unwrap(), s.to_vec());
    }

    #[test]
    fn serm_with_integer_row_is_exact() {
        let mut e = CMatrix::zeros(3, 3);
        e[(2, 0)] = c(2.0);
        e[(2, 1)] = c(-3.0);
        let t = TermFactor::new(TermKind::Serm { row: 2 }, e, vec![Unit::One; 3]).unwrap();
        let s = [Gauss::new(2, 0), Gauss::new(1, 0), Gauss::new(7, 0)];
        // 7 + 4 - 3 = 8
        assert_eq!(t.forward(&s).unwrap()[2], Gauss::new(8, 0));
        let zero = TermFactor::identity(TermKind::Serm { row: 2 }, 3);
        assert_eq!(zero.forward(&s).unwrap(), s.to_vec());
    }

    #[test]
    fn misplaced_entry_is_rejected() {
        let e = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        assert!(TermFactor::new(TermKind::Lower, e, vec![Unit::One; 2]).is_err());
    }

    #[test]
    fn quarter_turn_lifting() {
        let [a, b, cc] = rotation_lifting(FRAC_PI_2).unwrap();
        let close = |m: &CMatrix, want: [f64; 4]| {
            let w = CMatrix::from_row_slice(2, 2, &want.map(c));
            assert!(crate::linalg::max_abs_diff(m, &w) < 1e-15, "{m} vs {w}");
        };
        close(&a.matrix(), [1.0, 0.0, 1.0, 1.0]);
        close(&b.matrix(), [1.0, -1.0, 0.0, 1.0]);
        close(&cc.matrix(), [1.0, 0.0, 1.0, 1.0]);
        let prod = a.matrix() * b.matrix() * cc.matrix();
        close(&prod, [0.0, -1.0, 1.0, 0.0]);
    }

    #[test]
    fn identity_factorizes_to_identities() {
        let f = plus_factorize(&CMatrix::identity(4, 4)).unwrap();
        assert_eq!(f.permutation(), &Permutation::identity(4));
        assert!(f.lower().is_identity());
        assert!(f.upper().is_identity());
        assert!(f.serm().is_identity());
        assert!(f.rotation().is_none());
    }

    #[test]
    fn non_unit_determinant_is_rejected() {
        let q = CMatrix::identity(2, 2) * c(2.0);
        assert!(matches!(plus_factorize(&q), Err(Error::Normalization(_))));
    }

    #[test]
    fn pure_phase_needs_rotation() {
        let z = Complex64::from_polar(1.0, 0.3);
        let q = CMatrix::from_row_slice(1, 1, &[z]);
        let f = plus_factorize(&q).unwrap();
        assert!(f.rotation().is_some());
        assert!(crate::linalg::max_abs_diff(&f.product(), &q) < 1e-12);
        let s = vec![Gauss::new(17, -4)];
        assert_eq!(f.inverse(&f.forward(&s).unwrap()).unwrap(), s);
    }

    #[test]
    fn json_roundtrip_keeps_the_map() {
        let z = Complex64::from_polar(1.0, 0.7);
        let q = CMatrix::from_row_slice(2, 2, &[c(0.6), z * 0.8, c(-0.8), z * 0.6]);
        let f = plus_factorize(&q).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        let g: PlusFactorization = serde_json::from_str(&text).unwrap();
        let s = vec![Gauss::new(9, 2), Gauss::new(-3, 11)];
        assert_eq!(f.forward(&s).unwrap(), g.forward(&s).unwrap());
    }
}
