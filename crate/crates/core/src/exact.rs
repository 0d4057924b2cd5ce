//! Exact rational least squares.
//!
//! An independent route to the optimal squared error: the normal equations
//! are eliminated over the rationals, so results on small codes can be
//! compared with closed-form fractions without any tolerance.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rayon::prelude::*;

use crate::codes::EncodingMatrix;
use crate::error::{Error, Result};
use crate::worstcase::SubsetRange;

fn int(v: usize) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Exact `min_v ||G_U v - 1_k||^2`.
pub fn optimal_squared_error(g: &EncodingMatrix, survivors: &[usize]) -> BigRational {
    optimal_from_gram(&g.gram(), g.n(), g.column_weights(), g.k(), survivors)
}

/// Exact normalized error for one survivor set.
pub fn normalized_error(g: &EncodingMatrix, survivors: &[usize]) -> BigRational {
    optimal_squared_error(g, survivors) / int(g.k())
}

fn optimal_from_gram(
    gram: &[u32],
    n: usize,
    weights: &[usize],
    k: usize,
    survivors: &[usize],
) -> BigRational {
    let m = survivors.len();
    // augmented system [A | b]
    let mut a: Vec<Vec<BigRational>> = survivors
        .iter()
        .map(|&i| {
            let mut row: Vec<BigRational> = survivors
                .iter()
                .map(|&j| int(gram[i * n + j] as usize))
                .collect();
            row.push(int(weights[i]));
            row
        })
        .collect();
    let b_orig: Vec<BigRational> = survivors.iter().map(|&i| int(weights[i])).collect();

    // Gauss-Jordan; a zero pivot of a PSD matrix means a zero row and column,
    // and consistency (b in the range of A) makes its equation vacuous.
    let mut pivot_cols = Vec::with_capacity(m);
    let mut row = 0;
    for col in 0..m {
        let Some(p) = (row..m).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(row, p);
        let pivot = a[row][col].clone();
        for x in &mut a[row][col..=m] {
            *x = &*x / &pivot;
        }
        let pivot_row = a[row].clone();
        for (r, target) in a.iter_mut().enumerate() {
            if r != row && !target[col].is_zero() {
                let f = target[col].clone();
                for (x, p) in target[col..=m].iter_mut().zip(&pivot_row[col..=m]) {
                    *x -= &f * p;
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    let mut x = vec![BigRational::zero(); m];
    for (r, &c) in pivot_cols.iter().enumerate() {
        x[c] = a[r][m].clone();
    }
    // at a least-squares optimum ||G v - 1||^2 = k - 1^T G v
    let fitted: BigRational = b_orig.iter().zip(&x).map(|(b, v)| b * v).sum();
    int(k) - fitted
}

/// Exact worst case over all `s`-straggler sets: normalized error and the
/// lexicographically smallest straggler set attaining it.
pub fn worst_case(g: &EncodingMatrix, s: usize, cap: u128) -> Result<(BigRational, Vec<usize>)> {
    let n = g.n();
    if s > n {
        return Err(Error::InvalidParams(format!("s = {s} exceeds n = {n}")));
    }
    let range = SubsetRange::new(n, s, cap)?;
    let gram = g.gram();
    let weights = g.column_weights();
    let best = range
        .chunks()
        .into_par_iter()
        .map(|chunk| {
            let mut best: Option<(BigRational, Vec<usize>)> = None;
            chunk.for_each(|stragglers, survivors| {
                let e = optimal_from_gram(&gram, n, weights, g.k(), survivors);
                if best.as_ref().is_none_or(|(b, _)| e > *b) {
                    best = Some((e, stragglers.to_vec()));
                }
            });
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(None::<(BigRational, Vec<usize>)>, |acc, cand| match acc {
            Some(a) if a.0 >= cand.0 => Some(a),
            _ => Some(cand),
        })
        .expect("at least one subset");
    Ok((best.0 / int(g.k()), best.1))
}

/// Checks a rational is a non-negative value no larger than one.
pub fn in_unit_interval(x: &BigRational) -> bool {
    !x.is_negative() && *x <= BigRational::from_integer(1.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{build_catalog_bibd, build_frc};

    fn ratio(p: i64, q: i64) -> BigRational {
        BigRational::new(p.into(), q.into())
    }

    #[test]
    fn fano_one_straggler_is_one_twenty_eighth() {
        let (g, _) = build_catalog_bibd("fano").unwrap();
        assert_eq!(normalized_error(&g, &[1, 2, 3, 4, 5, 6]), ratio(1, 28));
        let (e, w) = worst_case(&g, 1, 1_000).unwrap();
        assert_eq!(e, ratio(1, 28));
        assert_eq!(w, vec![0]);
    }

    #[test]
    fn frc_worst_case_matches_formula() {
        let g = build_frc(6, 6, 2, 2).unwrap();
        let (e, w) = worst_case(&g, 3, 1_000).unwrap();
        assert_eq!(e, ratio(1, 3));
        assert_eq!(w, vec![0, 1, 2]);
        assert_eq!(normalized_error(&g, &[]), ratio(1, 1));
        assert!(in_unit_interval(&e));
    }
}
