//! Exact integer matrices: determinants, adjugates and Hermite normal form.
//!
//! Everything here runs on arbitrary-precision integers so that the lattice
//! shaping layer never has to worry about overflow when `sigma` grows.
//!
//! ```
//! use stshape::exactmat::{hnf_decompose, IntMatrix};
//!
//! let q = IntMatrix::from_rows(&[vec![2, 1], vec![0, 3]]).unwrap();
//! let hnf = hnf_decompose(&q).unwrap();
//! assert_eq!(hnf.r.mul(&hnf.v).unwrap(), q);
//! assert!(hnf.r.is_lower_triangular());
//! ```

use std::fmt;
use std::ops::{Index, IndexMut};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigInt>,
}

impl IntMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<BigInt>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(IntMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![BigInt::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = BigInt::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flatten().map(|&v| BigInt::from(v)).collect();
        Self::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[BigInt] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, other: &IntMatrix) -> Result<IntMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * &other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> Result<Vec<BigInt>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.rows).all(|i| (i + 1..self.cols).all(|j| self[(i, j)].is_zero()))
    }

    /// Canonical lower-triangular form: positive diagonal and
    /// `0 <= r[i][j] < r[i][i]` left of the diagonal.
    pub fn is_hnf(&self) -> bool {
        self.is_square()
            && self.is_lower_triangular()
            && (0..self.rows).all(|i| {
                let d = &self[(i, i)];
                d.is_positive() && (0..i).all(|j| !self[(i, j)].is_negative() && &self[(i, j)] < d)
            })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn max_abs(&self) -> BigInt {
        self.data.iter().map(|v| v.abs()).max().unwrap_or_default()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }
}

impl Index<(usize, usize)> for IntMatrix {
    type Output = BigInt;
    fn index(&self, (i, j): (usize, usize)) -> &BigInt {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for IntMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut BigInt {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<String>> =
            (0..self.rows).map(|i| self.row(i).iter().map(|v| v.to_string()).collect()).collect();
        write!(f, "IntMatrix{rows:?}")
    }
}

/// JSON form: `{"rows": r, "cols": c, "data": [[..], ..]}`. Entries that do not
/// fit in an `i64` are written as decimal strings.
#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    data: Vec<Vec<JsonInt>>,
}

struct JsonInt(BigInt);

impl Serialize for JsonInt {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0.to_i64() {
            Some(v) => s.serialize_i64(v),
            None => s.serialize_str(&self.0.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for JsonInt {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n
                .as_i64()
                .map(|v| JsonInt(BigInt::from(v)))
                .ok_or_else(|| de::Error::custom(format!("non-integer entry {n}"))),
            serde_json::Value::String(s) => s
                .parse::<BigInt>()
                .map(JsonInt)
                .map_err(|_| de::Error::custom(format!("bad integer string {s:?}"))),
            other => Err(de::Error::custom(format!("unexpected entry {other}"))),
        }
    }
}

impl Serialize for IntMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson {
            rows: self.rows,
            cols: self.cols,
            data: (0..self.rows)
                .map(|i| self.row(i).iter().cloned().map(JsonInt).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for IntMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = MatrixJson::deserialize(d)?;
        if m.data.len() != m.rows || m.data.iter().any(|r| r.len() != m.cols) {
            return Err(de::Error::custom("data does not match rows/cols"));
        }
        let data = m.data.into_iter().flatten().map(|v| v.0).collect();
        IntMatrix::new(m.rows, m.cols, data).map_err(de::Error::custom)
    }
}

fn require_square(m: &IntMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{}x{} is not square", m.rows, m.cols)));
    }
    Ok(())
}

/// Determinant by fraction-free (Bareiss) elimination.
pub fn det(m: &IntMatrix) -> Result<BigInt> {
    require_square(m)?;
    let n = m.rows;
    if n == 0 {
        return Ok(BigInt::one());
    }
    let mut a = m.clone();
    let mut prev = BigInt::one();
    let mut negate = false;
    for k in 0..n - 1 {
        let Some(p) = (k..n).find(|&r| !a[(r, k)].is_zero()) else {
            return Ok(BigInt::zero());
        };
        if p != k {
            a.swap_rows(p, k);
            negate = !negate;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&a[(k, k)] * &a[(i, j)] - &a[(i, k)] * &a[(k, j)]) / &prev;
                a[(i, j)] = v;
            }
            a[(i, k)] = BigInt::zero();
        }
        prev = a[(k, k)].clone();
    }
    let d = a[(n - 1, n - 1)].clone();
    Ok(if negate { -d } else { d })
}

pub fn is_unimodular(m: &IntMatrix) -> Result<bool> {
    Ok(det(m)?.abs().is_one())
}

/// Returns `(det(m), adj(m))` with `m * adj(m) = det(m) * I`.
///
/// Fraction-free Gauss-Jordan on `[m | I]`; every division is exact.
pub fn adjugate(m: &IntMatrix) -> Result<(BigInt, IntMatrix)> {
    require_square(m)?;
    let n = m.rows;
    let w = 2 * n;
    let mut a = IntMatrix::zeros(n, w);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = m[(i, j)].clone();
        }
        a[(i, n + i)] = BigInt::one();
    }
    let mut prev = BigInt::one();
    let mut negate = false;
    for k in 0..n {
        let Some(p) = (k..n).find(|&r| !a[(r, k)].is_zero()) else {
            return Err(Error::Singular);
        };
        if p != k {
            a.swap_rows(p, k);
            negate = !negate;
        }
        for i in (0..n).filter(|&i| i != k) {
            for j in (0..w).filter(|&j| j != k) {
                let v = (&a[(k, k)] * &a[(i, j)] - &a[(i, k)] * &a[(k, j)]) / &prev;
                a[(i, j)] = v;
            }
            a[(i, k)] = BigInt::zero();
        }
        prev = a[(k, k)].clone();
    }
    // Left block is now prev * I and the right block prev * m^-1.
    let mut adj = IntMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, n + j)].clone();
            adj[(i, j)] = if negate { -v } else { v };
        }
    }
    let d = if negate { -prev } else { prev };
    Ok((d, adj))
}

/// `q = r * v` with `r` in canonical lower-triangular Hermite form and `v`
/// unimodular.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnfDecomposition {
    pub r: IntMatrix,
    pub v: IntMatrix,
}

impl HnfDecomposition {
    pub fn diagonal(&self) -> Vec<BigInt> {
        (0..self.r.rows).map(|i| self.r[(i, i)].clone()).collect()
    }

    pub fn det(&self) -> BigInt {
        self.diagonal().iter().product()
    }
}

/// Column-style Hermite normal form of a nonsingular square matrix.
///
/// Works row by row: the nonzero entry of smallest magnitude right of the
/// diagonal is swapped onto it, then the remaining entries are cleared with
/// extended-gcd column combinations. Every column operation `E` applied to
/// `r` is undone on `v` as a row operation, so `r * v == q` at all times.
pub fn hnf_decompose(q: &IntMatrix) -> Result<HnfDecomposition> {
    require_square(q)?;
    let n = q.rows;
    let mut r = q.clone();
    let mut v = IntMatrix::identity(n);

    for i in 0..n {
        loop {
            let pivot = (i..n)
                .filter(|&j| !r[(i, j)].is_zero())
                .min_by(|&a, &b| r[(i, a)].abs().cmp(&r[(i, b)].abs()));
            let Some(p) = pivot else {
                return Err(Error::Singular);
            };
            if p != i {
                swap_cols(&mut r, i, p);
                v.swap_rows(i, p);
            }
            let mut done = true;
            for j in i + 1..n {
                if r[(i, j)].is_zero() {
                    continue;
                }
                done = false;
                let a = r[(i, i)].clone();
                let b = r[(i, j)].clone();
                let eg = a.extended_gcd(&b);
                let (g, x, y) = (eg.gcd, eg.x, eg.y);
                let ag = &a / &g;
                let bg = &b / &g;
                // Columns: c_i <- x c_i + y c_j, c_j <- -b/g c_i + a/g c_j.
                for k in 0..n {
                    let ci = r[(k, i)].clone();
                    let cj = r[(k, j)].clone();
                    r[(k, i)] = &x * &ci + &y * &cj;
                    r[(k, j)] = &ag * &cj - &bg * &ci;
                }
                // Rows of v: inverse of the 2x2 block [[x, -b/g], [y, a/g]].
                for k in 0..n {
                    let vi = v[(i, k)].clone();
                    let vj = v[(j, k)].clone();
                    v[(i, k)] = &ag * &vi + &bg * &vj;
                    v[(j, k)] = &x * &vj - &y * &vi;
                }
            }
            if done {
                break;
            }
        }
        if r[(i, i)].is_negative() {
            for k in 0..n {
                r[(k, i)] = -r[(k, i)].clone();
                v[(i, k)] = -v[(i, k)].clone();
            }
        }
        // Reduce the entries left of the new pivot.
        let d = r[(i, i)].clone();
        for j in 0..i {
            let f = r[(i, j)].div_floor(&d);
            if f.is_zero() {
                continue;
            }
            for k in i..n {
                let t = &f * &r[(k, i)];
                r[(k, j)] -= t;
            }
            for k in 0..n {
                let t = &f * &v[(j, k)];
                v[(i, k)] += t;
            }
        }
    }
    Ok(HnfDecomposition { r, v })
}

fn swap_cols(m: &mut IntMatrix, a: usize, b: usize) {
    for k in 0..m.rows {
        m.data.swap(k * m.cols + a, k * m.cols + b);
    }
}
