//! Hermite normal form of a small integer matrix and of a badly scaled one.

use stshape::exactmat::{hnf_decompose, is_unimodular, IntMatrix};

fn main() -> stshape::Result<()> {
    let q = IntMatrix::from_rows(&[vec![4, 1, -2], vec![3, 7, 5], vec![-6, 2, 9]])?;
    let d = hnf_decompose(&q)?;
    println!("Q = {q:?}");
    println!("R = {:?}", d.r);
    println!("V = {:?}", d.v);
    println!("det = {}, V unimodular: {}", d.det(), is_unimodular(&d.v)?);
    assert_eq!(d.r.mul(&d.v)?, q);

    let big = IntMatrix::from_rows(&[vec![i64::MAX / 3, 5], vec![7, i64::MAX / 5]])?;
    let d = hnf_decompose(&big)?;
    println!("large entries: det = {}", d.det());
    Ok(())
}
