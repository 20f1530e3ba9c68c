//! Maximum-entropy amplitude densities under average-power and PAPR
//! constraints.
//!
//! The optimal amplitude density is `f(r) = a r exp(-b r^2 / 2)` on
//! `[0, sqrt(rho P)]` with a uniform phase. Writing `c = b rho P`, the two
//! moment conditions collapse to the scalar equation
//! `g(c) = 2/c - 1/(1 - exp(-c/2)) + 1 = 1/rho`, which is strictly
//! decreasing from 1 (`c -> -inf`) to 0 (`c -> +inf`) and equals 1/2 at 0.

use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    RhoGt2,
    RhoEq2,
    RhoLt2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakDensity {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
    pub p: f64,
    /// `b rho P`.
    pub c: f64,
    pub regime: Regime,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Differential entropy of the complex symbol, nats.
    pub h_star: f64,
    /// `h_star` minus the unconstrained (complex Gaussian) entropy.
    pub k: f64,
}

/// `g(c) = 2/c - 1/expm1(c/2)`, the same as the form above; the removable
/// singularity at 0 goes through the Bernoulli series.
pub fn inverse_papr_of_c(c: f64) -> f64 {
    let x = c / 2.0;
    if x.abs() < 0.25 {
        let x2 = x * x;
        0.5 - x / 12.0 + x * x2 / 720.0 - x * x2 * x2 / 30240.0 + x * x2 * x2 * x2 / 1_209_600.0
            - x * x2 * x2 * x2 * x2 / 47_900_160.0
    } else if c == f64::INFINITY {
        0.0
    } else {
        2.0 / c - 1.0 / x.exp_m1()
    }
}

/// `(1 - exp(-c/2)) / c`.
pub fn phi1(c: f64) -> f64 {
    if c == 0.0 {
        0.5
    } else {
        -(-c / 2.0).exp_m1() / c
    }
}

/// `(1 - (1 + c/2) exp(-c/2)) / c^2`.
pub fn phi2(c: f64) -> f64 {
    let x = c / 2.0;
    if x.abs() < 0.5 {
        // sum_{k>=2} (-1)^k (k-1) x^(k-2) / (4 k!)
        let mut sum = 0.0;
        let mut fact = 2.0;
        let mut pow = 1.0;
        for k in 2..24 {
            if k > 2 {
                fact *= k as f64;
                pow *= -x;
            }
            sum += (k - 1) as f64 * pow / (4.0 * fact);
        }
        sum
    } else {
        (-(-x).exp_m1() - x * (-x).exp()) / (c * c)
    }
}

fn check_power(p: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("average power {p} must be positive and finite")));
    }
    Ok(())
}

/// Solves `g(c) = 1/rho` by bisection on a bracket that is widened until it
/// encloses the root. `g` is monotone, so any sign change is the root.
pub fn solve_c(rho: f64) -> Result<f64> {
    if rho.is_nan() || rho <= 1.0 {
        return Err(Error::Infeasible(format!("PAPR {rho} must exceed 1")));
    }
    if rho == 2.0 {
        return Ok(0.0);
    }
    if rho == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let target = 1.0 / rho;
    let f = |c: f64| inverse_papr_of_c(c) - target;
    let (mut lo, mut hi) = if rho > 2.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    for _ in 0..2000 {
        if f(lo) >= 0.0 && f(hi) <= 0.0 {
            break;
        }
        if rho > 2.0 {
            lo = hi;
            hi *= 2.0;
        } else {
            hi = lo;
            lo *= 2.0;
        }
        if !lo.is_finite() || !hi.is_finite() {
            break;
        }
    }
    if !(f(lo) >= 0.0 && f(hi) <= 0.0) {
        return Err(Error::Solver(format!("no bracket for rho = {rho}")));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Entropy-maximizing density with `E[r^2] = P` and `r^2 <= rho P`.
/// `rho = inf` gives the Rayleigh density `a = b = 2/P`.
pub fn solve_density(rho: f64, p: f64) -> Result<PeakDensity> {
    check_power(p)?;
    let c = solve_c(rho)?;
    let regime = if rho > 2.0 {
        Regime::RhoGt2
    } else if rho == 2.0 {
        Regime::RhoEq2
    } else {
        Regime::RhoLt2
    };
    if rho == f64::INFINITY {
        return Ok(PeakDensity { a: 2.0 / p, b: 2.0 / p, rho, p, c, regime });
    }
    let t = rho * p;
    Ok(PeakDensity { a: 1.0 / (t * phi1(c)), b: c / t, rho, p, c, regime })
}

/// Maximizer under `E[r^2] <= P` and the peak bound `r^2 <= rho P`. For
/// `rho >= 2` this is [`solve_density`]; below 2 the power constraint is
/// slack and the density is linear (`b = 0`, `a = 2/(rho P)`), so
/// `E[r^2] = rho P / 2`.
pub fn solve_peak_power_density(rho: f64, p: f64) -> Result<PeakDensity> {
    check_power(p)?;
    if rho.is_nan() || rho <= 1.0 {
        return Err(Error::Infeasible(format!("PAPR {rho} must exceed 1")));
    }
    if rho >= 2.0 {
        return solve_density(rho, p);
    }
    Ok(PeakDensity { a: 2.0 / (rho * p), b: 0.0, rho, p, c: 0.0, regime: Regime::RhoLt2 })
}

impl PeakDensity {
    /// Largest amplitude, `sqrt(rho P)`.
    pub fn support(&self) -> f64 {
        (self.rho * self.p).sqrt()
    }

    pub fn pdf(&self, r: f64) -> f64 {
        if r < 0.0 || r > self.support() {
            return 0.0;
        }
        self.a * r * (-self.b * r * r / 2.0).exp()
    }

    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r >= self.support() {
            return 1.0;
        }
        let r2 = r * r;
        self.a * r2 * phi1(self.b * r2)
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let r2 = if self.b == 0.0 {
            2.0 * u / self.a
        } else {
            -2.0 / self.b * (-u * self.b / self.a).ln_1p()
        };
        r2.max(0.0).sqrt().min(self.support())
    }

    /// `E[r^2]` from the closed form.
    pub fn second_moment(&self) -> f64 {
        if self.rho == f64::INFINITY {
            return 2.0 / self.b;
        }
        let t = self.rho * self.p;
        2.0 * self.a * t * t * phi2(self.b * t)
    }

    /// Residuals of `(a/b)(1 - e^{-b rho P/2}) = 1` and
    /// `2 (a/b)(b rho P)^{-1} [1 - (1 + b rho P/2) e^{-b rho P/2}] = 1/rho`,
    /// evaluated as written when `|c| >= 0.1` and through the series forms
    /// near `c = 0`.
    pub fn residuals(&self) -> (f64, f64) {
        let (a, b, t) = (self.a, self.b, self.rho * self.p);
        let c = b * t;
        if c.abs() >= 0.1 {
            let e = (-c / 2.0).exp();
            let r1 = a / b * (1.0 - e) - 1.0;
            let r2 = 2.0 * (a / b) / c * (1.0 - (1.0 + c / 2.0) * e) - 1.0 / self.rho;
            (r1, r2)
        } else {
            let r1 = a * t * phi1(c) - 1.0;
            let r2 = 2.0 * a * t * phi2(c) - 1.0 / self.rho;
            (r1, r2)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.inverse_cdf(rng.random::<f64>())).collect()
    }

    /// Complex samples `r e^{i theta}` with uniform phase.
    pub fn sample_complex<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<num_complex::Complex64> {
        (0..n)
            .map(|_| {
                let r = self.inverse_cdf(rng.random::<f64>());
                num_complex::Complex64::from_polar(r, 2.0 * PI * rng.random::<f64>())
            })
            .collect()
    }

    /// `h* = -ln a + b E[r^2]/2 + ln 2 pi` and `k = h* - ln(pi e P)`.
    pub fn entropy(&self) -> EntropyReport {
        let h_star = -self.a.ln() + self.b * self.second_moment() / 2.0 + (2.0 * PI).ln();
        EntropyReport { h_star, k: h_star - (PI * self.p).ln() - 1.0 }
    }
}

/// Vasicek m-spacing estimate of the differential entropy of a scalar
/// sample (nats).
pub fn vasicek_entropy(samples: &[f64], m: usize) -> Result<f64> {
    let n = samples.len();
    if m == 0 || 2 * m >= n {
        return Err(Error::InvalidParameter(format!("window {m} for {n} samples")));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    for i in 0..n {
        let hi = x[(i + m).min(n - 1)];
        let lo = x[i.saturating_sub(m)];
        let gap = (hi - lo).max(f64::MIN_POSITIVE);
        acc += (n as f64 / (2.0 * m as f64) * gap).ln();
    }
    Ok(acc / n as f64)
}

/// Entropy of a complex symbol with uniform phase, estimated from amplitude
/// samples through `t = r^2`: `h(x) = h(t) + ln pi`.
pub fn entropy_from_amplitudes(r: &[f64]) -> Result<f64> {
    let t: Vec<f64> = r.iter().map(|v| v * v).collect();
    let m = ((t.len() as f64).sqrt().round() as usize).max(1);
    Ok(vasicek_entropy(&t, m)? + PI.ln())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub one_over_rho: f64,
    pub bt: f64,
}

/// `b T` (`T = rho P / 2`, so `bT = c/2`) against `1/rho`. Fails if the
/// emitted values are not strictly decreasing.
pub fn curve_b_vs_rho(one_over_rho: &[f64]) -> Result<Vec<CurvePoint>> {
    let mut out: Vec<CurvePoint> = Vec::with_capacity(one_over_rho.len());
    for &v in one_over_rho {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidParameter(format!("1/rho = {v} outside (0, 1)")));
        }
        let bt = solve_c(1.0 / v)? / 2.0;
        if let Some(prev) = out.last() {
            if (v > prev.one_over_rho) != (bt < prev.bt) {
                return Err(Error::Solver(format!("curve not monotone near 1/rho = {v}")));
            }
        }
        out.push(CurvePoint { one_over_rho: v, bt });
    }
    Ok(out)
}

/// `0.02, 0.04, ..., 0.98`.
pub fn default_one_over_rho_grid() -> Vec<f64> {
    (1..50).map(|k| k as f64 / 50.0).collect()
}

pub fn curve_b_vs_rho_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("one_over_rho,bT\n");
    for p in points {
        writeln!(out, "{:.4},{:.12e}", p.one_over_rho, p.bt).unwrap();
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub p: f64,
    pub h_star: f64,
    pub rho: f64,
}

/// `h*` for every `(rho, P)` pair, `rho` outermost.
pub fn curve_hstar(powers: &[f64], rhos: &[f64]) -> Result<Vec<EntropyPoint>> {
    let mut out = Vec::new();
    for &rho in rhos {
        for &p in powers {
            let d = solve_density(rho, p)?;
            out.push(EntropyPoint { p, h_star: d.entropy().h_star, rho });
        }
    }
    Ok(out)
}

/// Powers `10^(k/10)` for `k = 0..=20` (0 to 20 dB).
pub fn default_power_grid() -> Vec<f64> {
    (0..=20).map(|k| 10f64.powf(k as f64 / 10.0)).collect()
}

pub fn default_rho_set() -> Vec<f64> {
    vec![1.1, 2.0, 5.0, f64::INFINITY]
}

pub fn curve_hstar_csv(points: &[EntropyPoint]) -> String {
    let mut out = String::from("P,h_star,rho\n");
    for e in points {
        writeln!(out, "{:.6},{:.12e},{}", e.p, e.h_star, e.rho).unwrap();
    }
    out
}

/// Bits per nat, for callers that report in bits.
pub fn nats_to_bits(h: f64) -> f64 {
    h / LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_and_closed_form_agree() {
        for &c in &[-0.6, -0.51, 0.49, 0.5, 0.51, 0.99, 1.01] {
            let x = c / 2.0;
            let closed = 2.0 / c - 1.0 / f64::exp_m1(x);
            assert!((inverse_papr_of_c(c) - closed).abs() < 1e-14, "{c}");
        }
        for &c in &[-1.01, -0.99, 0.99, 1.01] {
            let x: f64 = c / 2.0;
            let closed = (1.0 - (1.0 + x) * (-x).exp()) / (c * c);
            assert!((phi2(c) - closed).abs() < 1e-14, "{c}");
        }
        assert_eq!(inverse_papr_of_c(0.0), 0.5);
        assert_eq!(phi2(0.0), 0.125);
    }

    #[test]
    fn rho_two_is_linear() {
        let d = solve_density(2.0, 1.0).unwrap();
        assert_eq!((d.a, d.b, d.regime), (1.0, 0.0, Regime::RhoEq2));
        assert!((d.entropy().k - (2.0 / std::f64::consts::E).ln()).abs() < 1e-15);
    }

    #[test]
    fn regime_signs() {
        assert!(solve_density(5.0, 1.0).unwrap().b > 0.0);
        assert!(solve_density(1.5, 1.0).unwrap().b < 0.0);
        assert!(matches!(solve_density(1.0, 1.0), Err(Error::Infeasible(_))));
        assert!(matches!(solve_density(0.5, 1.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn inverse_cdf_inverts_cdf() {
        for rho in [1.2, 2.0, 3.0, 40.0] {
            let d = solve_density(rho, 2.0).unwrap();
            for k in 1..20 {
                let u = k as f64 / 20.0;
                assert!((d.cdf(d.inverse_cdf(u)) - u).abs() < 1e-12);
            }
        }
    }
}
