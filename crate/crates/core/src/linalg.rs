//! Small helpers shared by the floating-point side of the crate.

use nalgebra::DMatrix;
use num_complex::{Complex, Complex64};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;
/// Gaussian integer.
pub type Gauss = Complex<i64>;

/// Rounds to the nearest integer, halves away from zero.
pub fn round_i64(x: f64) -> i64 {
    x.round() as i64
}

pub fn round_gauss(z: Complex64) -> Gauss {
    Gauss::new(round_i64(z.re), round_i64(z.im))
}

pub fn gauss_to_c64(z: Gauss) -> Complex64 {
    Complex64::new(z.re as f64, z.im as f64)
}

pub fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

/// `[[Re G, -Im G], [Im G, Re G]]`, acting on `[Re s; Im s]`.
pub fn expand_real(g: &CMatrix) -> RMatrix {
    let (r, c) = g.shape();
    let mut out = RMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = g[(i, j)];
            out[(i, j)] = z.re;
            out[(i, c + j)] = -z.im;
            out[(r + i, j)] = z.im;
            out[(r + i, c + j)] = z.re;
        }
    }
    out
}

pub fn real_part(g: &CMatrix) -> RMatrix {
    g.map(|z| z.re)
}

pub fn require_square<T>(m: &DMatrix<T>) -> Result<usize> {
    let (r, c) = m.shape();
    if r != c || r == 0 {
        return Err(Error::Dimension(format!("{r}x{c} is not a nonempty square matrix")));
    }
    Ok(r)
}

pub fn cdet(m: &CMatrix) -> Result<Complex64> {
    require_square(m)?;
    Ok(m.clone().lu().determinant())
}

pub fn cinverse(m: &CMatrix) -> Result<CMatrix> {
    require_square(m)?;
    m.clone().try_inverse().ok_or(Error::Singular)
}

/// Largest absolute entry difference.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// JSON wrapper for complex matrices: `{"rows", "cols", "data"}` where each
/// entry is either a number or an `[re, im]` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrixJson(pub CMatrix);

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Vec<Entry>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Pair([f64; 2]),
}

impl Serialize for ComplexMatrixJson {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m = &self.0;
        RawMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data: (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| Entry::Pair([m[(i, j)].re, m[(i, j)].im])).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrixJson {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawMatrix::deserialize(d)?;
        if raw.data.len() != raw.rows || raw.data.iter().any(|r| r.len() != raw.cols) {
            return Err(de::Error::custom("data does not match rows/cols"));
        }
        let m = CMatrix::from_fn(raw.rows, raw.cols, |i, j| match raw.data[i][j] {
            Entry::Real(x) => Complex64::new(x, 0.0),
            Entry::Pair([re, im]) => Complex64::new(re, im),
        });
        Ok(ComplexMatrixJson(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expand_real_of_i() {
        let g = CMatrix::from_element(1, 1, Complex64::new(0.0, 1.0));
        let gr = expand_real(&g);
        let s = nalgebra::DVector::from_vec(vec![2.0, 3.0]);
        let x = gr * s;
        assert_eq!(x.as_slice(), &[-3.0, 2.0]);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_i64(2.5), 3);
        assert_eq!(round_i64(-2.5), -3);
        assert_eq!(round_i64(-0.4), 0);
    }

    #[test]
    fn complex_matrix_json_accepts_both_entry_forms() {
        let s = r#"{"rows":1,"cols":2,"data":[[1.5,[0,-2]]]}"#;
        let m: ComplexMatrixJson = serde_json::from_str(s).unwrap();
        assert_eq!(m.0[(0, 0)], Complex64::new(1.5, 0.0));
        assert_eq!(m.0[(0, 1)], Complex64::new(0.0, -2.0));
    }
}
