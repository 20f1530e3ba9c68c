//! PLUS factorization of a unit-determinant complex matrix, then an exact
//! integer roundtrip through the reversible map.

use num_complex::Complex64;
use stshape::linalg::{max_abs_diff, CMatrix, Gauss};
use stshape::plusfact::plus_factorize;

fn main() -> stshape::Result<()> {
    let t = 0.3f64;
    // a rotation scaled so that |det| = 1
    let q = CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(t.cos(), 0.0),
            Complex64::new(-t.sin(), 0.2),
            Complex64::new(t.sin(), 0.2),
            Complex64::new(t.cos(), 0.0),
        ],
    );
    let q = &q / stshape::linalg::cdet(&q)?.sqrt();
    let f = plus_factorize(&q)?;
    println!("reconstruction error {:.2e}", max_abs_diff(&f.product(), &q));
    println!("per-coordinate error bound {:?}", f.error_bound());

    let s = vec![Gauss::new(3, -1), Gauss::new(-7, 4)];
    let y = f.forward(&s)?;
    let back = f.inverse(&y)?;
    println!("{s:?} -> {y:?} -> {back:?}");
    assert_eq!(back, s);
    Ok(())
}
