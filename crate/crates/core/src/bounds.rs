//! Closed-form errors and upper bounds.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::Serialize;

use crate::codes::{BibdParams, CodeParams, FrcParams};
use crate::decoding::kron_composite_d;
use crate::error::{Error, Result};

/// One evaluated formula.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRecord {
    pub name: &'static str,
    pub s: f64,
    pub value: f64,
    /// The raw value left `[0, 1]` and was clamped.
    pub clamped: bool,
    pub inputs: BTreeMap<&'static str, f64>,
}

impl BoundRecord {
    fn new(name: &'static str, s: f64, raw: f64, inputs: &[(&'static str, f64)]) -> Self {
        let value = raw.clamp(0.0, 1.0);
        BoundRecord {
            name,
            s,
            value,
            clamped: value != raw,
            inputs: inputs.iter().copied().collect(),
        }
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::InvalidParams(format!("{name} must be positive")))
    } else {
        Ok(())
    }
}

/// FRC error `(l/k) floor(s/r)`, defined for real `s`.
pub fn frc_error(l: usize, k: usize, r: usize, s: f64) -> Result<f64> {
    positive("l", l)?;
    positive("k", k)?;
    positive("r", r)?;
    if s.is_nan() || s < 0.0 {
        return Err(Error::InvalidParams(format!("s = {s} must be non-negative")));
    }
    Ok(l as f64 / k as f64 * (s / r as f64).floor())
}

/// Worst-case error of a lambda-uniform code, `1 - l^2 (n-s) / (k l + k λ (n-s-1))`.
pub fn bibd_error(n: usize, k: usize, l: usize, lambda: usize, s: usize) -> Result<f64> {
    positive("l", l)?;
    positive("k", k)?;
    if s > n {
        return Err(Error::InvalidParams(format!("s = {s} exceeds n = {n}")));
    }
    if s == n {
        return Ok(1.0);
    }
    let m = (n - s) as f64;
    let (k, l, lambda) = (k as f64, l as f64, lambda as f64);
    Ok(1.0 - l * l * m / (k * l + k * lambda * (m - 1.0)))
}

pub fn bibd_error_for(b: &BibdParams, s: usize) -> Result<f64> {
    bibd_error(b.n, b.k, b.l, b.lambda, s)
}

/// Exact `bibd_error` as a ratio of integers.
pub fn bibd_error_rational(n: i64, k: i64, l: i64, lambda: i64, s: i64) -> Ratio<i64> {
    if s == n {
        return Ratio::from_integer(1);
    }
    let m = n - s;
    Ratio::from_integer(1) - Ratio::new(l * l * m, k * l + k * lambda * (m - 1))
}

/// Exact FRC error for integer `s`.
pub fn frc_error_rational(l: i64, k: i64, r: i64, s: i64) -> Ratio<i64> {
    Ratio::new(l * (s / r), k)
}

/// Error of `F1 ⊗ F2`, computed both as `(l1/k1) err(F2, s/r1)` and
/// `(l2/k2) err(F1, s/r2)`.
pub fn thm3_error(f1: &FrcParams, f2: &FrcParams, s: f64) -> Result<f64> {
    let n = (f1.n * f2.n) as f64;
    if !(0.0..=n).contains(&s) {
        return Err(Error::InvalidParams(format!("s = {s} outside [0, {n}]")));
    }
    let a = f1.l as f64 / f1.k as f64 * frc_error(f2.l, f2.k, f2.r, s / f1.r as f64)?;
    let b = f2.l as f64 / f2.k as f64 * frc_error(f1.l, f1.k, f1.r, s / f2.r as f64)?;
    if (a - b).abs() > 1e-12 {
        return Err(Error::InternalInconsistency(format!(
            "product FRC forms disagree at s = {s}: {a} vs {b}"
        )));
    }
    Ok(a)
}

/// Both product FRC forms, exactly, for integer `s`.
pub fn thm3_error_rational(f1: &FrcParams, f2: &FrcParams, s: i64) -> (Ratio<i64>, Ratio<i64>) {
    let (l1, k1, r1) = (f1.l as i64, f1.k as i64, f1.r as i64);
    let (l2, k2, r2) = (f2.l as i64, f2.k as i64, f2.r as i64);
    // floor((s / r1) / r2) = floor(s / (r1 r2))
    let a = Ratio::new(l1, k1) * Ratio::new(l2 * (s / (r1 * r2)), k2);
    let b = Ratio::new(l2, k2) * Ratio::new(l1 * (s / (r2 * r1)), k1);
    (a, b)
}

/// Upper bound on the error of `F ⊗ B`.
pub fn thm4_bound(f: &FrcParams, b: &BibdParams, s: usize) -> Result<BoundRecord> {
    FrcParams::new(f.n, f.k, f.l, f.r)?;
    let n = f.n * b.n;
    if s > n {
        return Err(Error::InvalidParams(format!("s = {s} exceeds n1 n2 = {n}")));
    }
    let block = f.r * b.n;
    let bb = (s - (s / block) * block) / f.r;
    let frc_part = frc_error(f.l, f.k, f.r, s as f64 / b.n as f64)?;
    let raw = frc_part + f.l as f64 / f.k as f64 * bibd_error_for(b, bb.min(b.n))?;
    Ok(BoundRecord::new(
        "thm4",
        s as f64,
        raw,
        &[
            ("n1", f.n as f64),
            ("k1", f.k as f64),
            ("l1", f.l as f64),
            ("r1", f.r as f64),
            ("n2", b.n as f64),
            ("k2", b.k as f64),
            ("l2", b.l as f64),
            ("lambda2", b.lambda as f64),
            ("b", bb as f64),
        ],
    ))
}

/// Upper bound on the error of `B1 ⊗ B2`.
pub fn thm5_bound(b1: &BibdParams, b2: &BibdParams, s: usize) -> Result<BoundRecord> {
    positive("l1", b1.l)?;
    positive("l2", b2.l)?;
    let n = b1.n * b2.n;
    if s > n {
        return Err(Error::InvalidParams(format!("s = {s} exceeds n1 n2 = {n}")));
    }
    let d = kron_composite_d(&CodeParams::from(*b1), &CodeParams::from(*b2))?;
    let m = (n - s) as f64;
    let ll = (b1.l * b2.l) as f64;
    let kk = (b1.k * b2.k) as f64;
    let lam = (b1.lambda * b2.lambda) as f64;
    let raw = if s == n { 1.0 } else { 1.0 - ll * ll * m / (kk * (d + lam * m)) };
    Ok(BoundRecord::new(
        "thm5",
        s as f64,
        raw,
        &[
            ("n1", b1.n as f64),
            ("k1", b1.k as f64),
            ("l1", b1.l as f64),
            ("lambda1", b1.lambda as f64),
            ("n2", b2.n as f64),
            ("k2", b2.k as f64),
            ("l2", b2.l as f64),
            ("lambda2", b2.lambda as f64),
            ("d", d),
        ],
    ))
}

/// Upper bound on the Gram quadratic form `1^T G_U^T G_U 1` of `B1 ⊗ B2`
/// over any `m` surviving workers: `m d + λ1 λ2 m^2`.
pub fn kron_gram_bound(b1: &BibdParams, b2: &BibdParams, m: usize) -> Result<f64> {
    let d = kron_composite_d(&CodeParams::from(*b1), &CodeParams::from(*b2))?;
    let m = m as f64;
    Ok(m * d + (b1.lambda * b2.lambda) as f64 * m * m)
}

/// Expected-error bound for a probabilistic BIBD; same form as [`bibd_error`].
pub fn pbibd_bound(n: usize, k: usize, l: usize, lambda: usize, s: usize) -> Result<BoundRecord> {
    let raw = bibd_error(n, k, l, lambda, s)?;
    Ok(BoundRecord::new(
        "pbibd",
        s as f64,
        raw,
        &[("n", n as f64), ("k", k as f64), ("l", l as f64), ("lambda", lambda as f64)],
    ))
}

/// Smallest load `l` with exact recovery from any `s` stragglers: `ceil(k (s+1) / n)`.
pub fn exact_recovery_threshold(n: usize, k: usize, s: usize) -> usize {
    (k * (s + 1)).div_ceil(n)
}

/// Indices `s` where `2 e(s) > e(s-1) + e(s+1) + tol`.
pub fn convexity_violations(seq: &[f64], tol: f64) -> Vec<usize> {
    (1..seq.len().saturating_sub(1))
        .filter(|&s| 2.0 * seq[s] > seq[s - 1] + seq[s + 1] + tol)
        .collect()
}

/// Indices `s` where `e(s) < e(s-1) - tol`.
pub fn monotonicity_violations(seq: &[f64], tol: f64) -> Vec<usize> {
    (1..seq.len()).filter(|&s| seq[s] < seq[s - 1] - tol).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FANO: BibdParams = BibdParams {
        n: 7,
        k: 7,
        l: 3,
        r: 3,
        lambda: 1,
    };

    fn frc4() -> FrcParams {
        FrcParams::new(4, 4, 2, 2).unwrap()
    }

    #[test]
    fn frc_values() {
        assert!((frc_error(2, 6, 2, 3.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(frc_error(2, 6, 2, 0.0).unwrap(), 0.0);
        assert_eq!(frc_error(2, 4, 2, 2.5).unwrap(), 0.5);
        assert!(frc_error(0, 4, 2, 1.0).is_err());
        assert_eq!(frc_error_rational(2, 6, 2, 3), Ratio::new(1, 3));
    }

    #[test]
    fn bibd_values() {
        assert!((bibd_error(7, 7, 3, 1, 2).unwrap() - 4.0 / 49.0).abs() < 1e-15);
        assert_eq!(bibd_error(7, 7, 3, 1, 7).unwrap(), 1.0);
        assert!(bibd_error(7, 7, 3, 1, 0).unwrap().abs() < 1e-15);
        assert_eq!(bibd_error_rational(7, 7, 3, 1, 2), Ratio::new(4, 49));
        assert_eq!(bibd_error_rational(7, 7, 3, 1, 1), Ratio::new(1, 28));
        assert!(bibd_error(7, 7, 3, 1, 8).is_err());
    }

    #[test]
    fn product_frc_forms() {
        let f = frc4();
        assert_eq!(thm3_error(&f, &f, 5.0).unwrap(), 0.25);
        assert_eq!(thm3_error(&f, &f, 0.0).unwrap(), 0.0);
        assert_eq!(thm3_error(&f, &f, 16.0).unwrap(), 1.0);
        let g = FrcParams::new(6, 3, 1, 2).unwrap();
        for s in 0..=24 {
            let (a, b) = thm3_error_rational(&f, &g, s);
            assert_eq!(a, b);
            let fl = thm3_error(&f, &g, s as f64).unwrap();
            assert!((fl - *a.numer() as f64 / *a.denom() as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn thm4_values() {
        let f = frc4();
        let rec = thm4_bound(&f, &FANO, 3).unwrap();
        assert!((rec.value - 0.5 / 28.0).abs() < 1e-15);
        assert_eq!(rec.inputs["b"], 1.0);
        assert_eq!(thm4_bound(&f, &FANO, 0).unwrap().value, 0.0);
        assert_eq!(thm4_bound(&f, &FANO, 14).unwrap().value, 0.5);
        assert!(!thm4_bound(&f, &FANO, 14).unwrap().clamped);
    }

    #[test]
    fn thm4_clamps_above_one() {
        let f = frc4();
        let flagged: Vec<usize> = (0..=28)
            .filter(|&s| thm4_bound(&f, &FANO, s).unwrap().clamped)
            .collect();
        for s in 0..=28 {
            let rec = thm4_bound(&f, &FANO, s).unwrap();
            assert!((0.0..=1.0).contains(&rec.value));
        }
        // s = 27: err(F, 27/7) = 0.5 floor(1.93) = 0.5, b = floor(13/2) = 6
        assert!(!flagged.contains(&27));
    }

    #[test]
    fn thm5_values() {
        let rec = thm5_bound(&FANO, &FANO, 0).unwrap();
        assert_eq!(rec.inputs["d"], 32.0);
        assert!(rec.value.abs() < 1e-15);
        let rec = thm5_bound(&FANO, &FANO, 7).unwrap();
        assert!((rec.value - (1.0 - 81.0 * 42.0 / (49.0 * 74.0))).abs() < 1e-15);
        assert!((rec.value - 0.06176).abs() < 1e-4);
        assert_eq!(thm5_bound(&FANO, &FANO, 49).unwrap().value, 1.0);
    }

    #[test]
    fn recovery_threshold() {
        assert_eq!(exact_recovery_threshold(7, 7, 0), 1);
        assert_eq!(exact_recovery_threshold(7, 7, 6), 7);
        assert_eq!(exact_recovery_threshold(6, 6, 1), 2);
    }

    #[test]
    fn bibd_sequence_is_convex_and_monotone() {
        for (n, k, l, lambda) in [(7, 7, 3, 1), (11, 11, 5, 2), (13, 13, 4, 1), (21, 21, 5, 1)] {
            let seq: Vec<f64> = (0..=n).map(|s| bibd_error(n, k, l, lambda, s).unwrap()).collect();
            assert!(convexity_violations(&seq, 1e-15).is_empty());
            assert!(monotonicity_violations(&seq, 0.0).is_empty());
        }
    }

    #[test]
    fn violation_helpers_detect() {
        assert_eq!(convexity_violations(&[0.0, 0.6, 0.7, 1.0], 0.0), vec![1]);
        assert_eq!(monotonicity_violations(&[0.0, 0.5, 0.4], 0.0), vec![2]);
    }
}
