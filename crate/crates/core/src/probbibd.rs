//! Probabilistic BIBD gradient codes.
//!
//! Rows of the encoding matrix are drawn i.i.d. from a law `p` on `{0,1}^n`
//! chosen so that every column has `l` ones and every column pair shares
//! `lambda` ones in expectation. The constraints form the linear system
//! `A p = b`, where `A` is the generator matrix of the order-2 Reed-Muller
//! code of length `2^n`. We use the symmetric solution that puts mass
//! `alpha` on `0^n`, `gamma` on `1^n` and `beta` on every other row.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::EncodingMatrix;
use crate::decoding::{gram_error, GramCache, Solver};
use crate::error::{Error, Result};
use crate::tol::{Caps, TOL};

/// Largest `n` for which residuals are checked against the expanded system.
pub const EXPAND_LIMIT: usize = 14;

/// Binary coefficient matrix of the row-distribution constraints.
///
/// Row 0 is the total-probability equation, rows `1..=n` the marginals
/// `P(X_j = 1)`, then the pairs `P(X_i = X_j = 1)` in lexicographic `(i, j)`
/// order. Column `t` is the outcome whose bit `j` is `x_{j+1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rm2System {
    pub n: usize,
    pub rows: Vec<Vec<u8>>,
}

impl Rm2System {
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn col_count(&self) -> usize {
        1 << self.n
    }

    /// Right-hand side `(1, l/k x n, lambda/k x C(n,2))`.
    pub fn rhs(&self, k: usize, l: usize, lambda: usize) -> Vec<f64> {
        let n = self.n;
        let mut b = vec![1.0];
        b.extend(std::iter::repeat_n(l as f64 / k as f64, n));
        b.extend(std::iter::repeat_n(lambda as f64 / k as f64, n * (n - 1) / 2));
        b
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(p).filter(|(&a, _)| a == 1).map(|(_, x)| x).sum())
            .collect()
    }
}

pub fn rm2_generator(n: usize) -> Result<Rm2System> {
    rm2_generator_with_cap(n, Caps::default().rm_vars)
}

pub fn rm2_generator_with_cap(n: usize, cap: usize) -> Result<Rm2System> {
    if n == 0 {
        return Err(Error::InvalidParams("need n >= 1 variables".into()));
    }
    if n > cap {
        return Err(Error::CapExceeded {
            what: "Reed-Muller variable count",
            value: n as u128,
            cap: cap as u128,
        });
    }
    let width = 1usize << n;
    let bit = |t: usize, j: usize| (t >> j) & 1 == 1;
    let mut rows = Vec::with_capacity(1 + n + n * (n - 1) / 2);
    rows.push(vec![1u8; width]);
    for j in 0..n {
        rows.push((0..width).map(|t| bit(t, j) as u8).collect());
    }
    for i in 0..n {
        for j in i + 1..n {
            rows.push((0..width).map(|t| (bit(t, i) && bit(t, j)) as u8).collect());
        }
    }
    Ok(Rm2System { n, rows })
}

/// Rank over the reals by Gaussian elimination with partial pivoting.
pub fn real_rank(rows: &[Vec<u8>], pivot_tol: f64) -> usize {
    let mut a: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| x as f64).collect())
        .collect();
    let m = a.len();
    let w = a.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..w {
        if rank == m {
            break;
        }
        let p = (rank..m)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if a[p][col].abs() <= pivot_tol {
            continue;
        }
        a.swap(rank, p);
        let pivot = a[rank][col];
        let (top, rest) = a.split_at_mut(rank + 1);
        let pivot_row = &top[rank];
        for row in rest.iter_mut().take(m - rank - 1) {
            let f = row[col] / pivot;
            if f != 0.0 {
                for (x, p) in row[col..w].iter_mut().zip(&pivot_row[col..w]) {
                    *x -= f * p;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Symmetric row law `(alpha, beta, ..., beta, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowDistribution {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub lambda: usize,
    /// Probability of the all-zero row.
    pub alpha: f64,
    /// Probability of each of the `2^n - 2` non-constant rows.
    pub beta: f64,
    /// Probability of the all-one row.
    pub gamma: f64,
}

impl RowDistribution {
    /// Total mass on non-constant rows, `(2^n - 2) beta`.
    pub fn nonconstant_mass(&self) -> f64 {
        (2f64.powi(self.n as i32) - 2.0) * self.beta
    }

    /// The full probability vector of length `2^n`.
    pub fn expand(&self) -> Vec<f64> {
        let width = 1usize << self.n;
        (0..width)
            .map(|t| {
                if t == 0 {
                    self.alpha
                } else if t == width - 1 {
                    self.gamma
                } else {
                    self.beta
                }
            })
            .collect()
    }
}

/// The symmetric solution of `A p = b`, which exists whenever
/// `n >= l >= lambda` but may have negative entries.
pub fn closed_form_solution(n: usize, k: usize, l: usize, lambda: usize) -> Result<RowDistribution> {
    if n == 0 || k == 0 {
        return Err(Error::Infeasible("n >= 1 and k >= 1".into()));
    }
    if n < l {
        return Err(Error::Infeasible(format!("n >= l (n = {n}, l = {l})")));
    }
    if l < lambda {
        return Err(Error::Infeasible(format!("l >= lambda (l = {l}, lambda = {lambda})")));
    }
    let (kf, lf, mf) = (k as f64, l as f64, lambda as f64);
    let q = 2f64.powi(n as i32 - 2);
    let beta = (lf - mf) / (kf * q);
    let gamma = (2.0 * mf - lf + (lf - mf) / q) / kf;
    let alpha = 1.0 + (2.0 * mf - 3.0 * lf) / kf + (lf - mf) / (kf * q);
    // roundoff near zero on boundary parameters
    let fix = |x: f64| if x < 0.0 && x > -1e-15 { 0.0 } else { x };
    Ok(RowDistribution {
        n,
        k,
        l,
        lambda,
        alpha: fix(alpha),
        beta: fix(beta),
        gamma: fix(gamma),
    })
}

/// Closed-form non-negative solution for `(n, k, l, lambda)`.
pub fn solve_distribution(n: usize, k: usize, l: usize, lambda: usize) -> Result<RowDistribution> {
    let dist = closed_form_solution(n, k, l, lambda)?;
    if 2 * lambda < l {
        return Err(Error::Infeasible(format!(
            "2 lambda >= l (lambda = {lambda}, l = {l})"
        )));
    }
    if k + 2 * lambda < 3 * l {
        return Err(Error::Infeasible(format!(
            "k >= 3l - 2 lambda (k = {k}, l = {l}, lambda = {lambda})"
        )));
    }
    Ok(dist)
}

/// Residuals of `A p - b`, grouped by constraint family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    pub total: f64,
    pub marginal: f64,
    pub pair: f64,
    pub max: f64,
    /// Whether the expanded `2^n` system was used (otherwise the three
    /// reduced equations).
    pub expanded: bool,
    pub min_probability: f64,
}

impl ResidualReport {
    pub fn ok(&self) -> bool {
        self.max <= TOL.system_residual && self.min_probability >= 0.0
    }
}

pub fn verify_system(dist: &RowDistribution) -> ResidualReport {
    let (k, l, lambda) = (dist.k as f64, dist.l as f64, dist.lambda as f64);
    let min_probability = dist.alpha.min(dist.beta).min(dist.gamma);
    let (total, marginal, pair, expanded) = if dist.n <= EXPAND_LIMIT && dist.n >= 2 {
        let sys = rm2_generator(dist.n).expect("n within cap");
        let ap = sys.apply(&dist.expand());
        let b = sys.rhs(dist.k, dist.l, dist.lambda);
        let dev: Vec<f64> = ap.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
        let n = dist.n;
        let group_max = |r: std::ops::Range<usize>| dev[r].iter().copied().fold(0.0, f64::max);
        (group_max(0..1), group_max(1..1 + n), group_max(1 + n..dev.len()), true)
    } else {
        let n = dist.n as i32;
        let total = (dist.alpha + dist.beta * (2f64.powi(n) - 2.0) + dist.gamma - 1.0).abs();
        let marginal = (dist.beta * (2f64.powi(n - 1) - 1.0) + dist.gamma - l / k).abs();
        let pair = if dist.n >= 2 {
            (dist.beta * (2f64.powi(n - 2) - 1.0) + dist.gamma - lambda / k).abs()
        } else {
            0.0
        };
        (total, marginal, pair, false)
    };
    ResidualReport {
        total,
        marginal,
        pair,
        max: total.max(marginal).max(pair),
        expanded,
        min_probability,
    }
}

fn sample_row(dist: &RowDistribution, rng: &mut ChaCha8Rng, row: &mut [bool]) {
    let u: f64 = rng.random();
    if u < dist.alpha {
        row.fill(false);
    } else if u < dist.alpha + dist.gamma || dist.n < 2 {
        row.fill(true);
    } else {
        // uniform over non-constant rows by rejection
        loop {
            for x in row.iter_mut() {
                *x = rng.random::<bool>();
            }
            let ones = row.iter().filter(|&&x| x).count();
            if ones != 0 && ones != row.len() {
                break;
            }
        }
    }
}

/// Draws `rows` i.i.d. rows from `dist` with ChaCha8 seeded by `seed`.
pub fn sample_rows(dist: &RowDistribution, rows: usize, seed: u64) -> Result<EncodingMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(dist, rows, &mut rng)
}

fn sample_with(dist: &RowDistribution, rows: usize, rng: &mut ChaCha8Rng) -> Result<EncodingMatrix> {
    let n = dist.n;
    let mut bits = vec![false; rows * n];
    for chunk in bits.chunks_mut(n) {
        sample_row(dist, rng, chunk);
    }
    EncodingMatrix::from_fn(rows, n, |i, j| bits[i * n + j])
}

/// A `k x n` probabilistic BIBD encoding matrix. Realizations may contain
/// all-zero columns; nothing is enforced per realization.
pub fn sample_code(dist: &RowDistribution, k: usize, seed: u64) -> Result<EncodingMatrix> {
    if k != dist.k {
        return Err(Error::InvalidParams(format!(
            "distribution was solved for k = {}, asked for k = {k}",
            dist.k
        )));
    }
    sample_rows(dist, k, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    /// Least squares per realization.
    Optimal,
    /// `l / (l + lambda (n - s - 1))` on every survivor.
    BibdConstant,
}

impl std::str::FromStr for Decoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(Decoder::Optimal),
            "bibd_constant" => Ok(Decoder::BibdConstant),
            other => Err(Error::Config(format!(
                "unknown decoder `{other}` (expected optimal or bibd_constant)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Per-trial normalized errors for the survivor set `{0, ..., n-s-1}`.
///
/// The row law is exchangeable over columns, so every survivor set of the
/// same size has the same expected error. Trial `t` samples with ChaCha8
/// seeded by `seed` on stream `t`.
pub fn trial_errors(
    dist: &RowDistribution,
    k: usize,
    s: usize,
    trials: usize,
    seed: u64,
    decoder: Decoder,
) -> Result<Vec<f64>> {
    let n = dist.n;
    if s > n {
        return Err(Error::InvalidParams(format!("s = {s} exceeds n = {n}")));
    }
    if trials == 0 {
        return Err(Error::InvalidParams("need at least one trial".into()));
    }
    let survivors: Vec<usize> = (0..n - s).collect();
    let constant = if survivors.is_empty() {
        0.0
    } else {
        dist.l as f64 / (dist.l as f64 + dist.lambda as f64 * (survivors.len() as f64 - 1.0))
    };
    (0..trials as u64)
        .into_par_iter()
        .map_init(Solver::new, |solver, t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let g = sample_with(dist, k, &mut rng)?;
            let cache = GramCache::new(&g);
            let e = match decoder {
                Decoder::Optimal => solver.optimal_error(&cache, &survivors)?,
                Decoder::BibdConstant => {
                    let v = vec![constant; survivors.len()];
                    gram_error(&cache, &survivors, &v, TOL.clamp)
                }
            };
            Ok(e / k as f64)
        })
        .collect()
}

/// Monte-Carlo estimate of the expected normalized error with `s`
/// stragglers. The reduction runs sequentially in trial order.
pub fn expected_error_mc(
    dist: &RowDistribution,
    k: usize,
    s: usize,
    trials: usize,
    seed: u64,
    decoder: Decoder,
) -> Result<McEstimate> {
    let errs = trial_errors(dist, k, s, trials, seed, decoder)?;
    let t = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / t;
    let var = if errs.len() > 1 {
        errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (t - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        stderr: (var / t).sqrt(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rm2_n3_matches_displayed_system() {
        let sys = rm2_generator(3).unwrap();
        let expected: [[u8; 8]; 7] = [
            [1, 1, 1, 1, 1, 1, 1, 1],
            [0, 1, 0, 1, 0, 1, 0, 1],
            [0, 0, 1, 1, 0, 0, 1, 1],
            [0, 0, 0, 0, 1, 1, 1, 1],
            [0, 0, 0, 1, 0, 0, 0, 1],
            [0, 0, 0, 0, 0, 1, 0, 1],
            [0, 0, 0, 0, 0, 0, 1, 1],
        ];
        assert_eq!(sys.rows.len(), 7);
        for (row, exp) in sys.rows.iter().zip(expected.iter()) {
            assert_eq!(row.as_slice(), exp.as_slice());
        }
        assert_eq!(real_rank(&sys.rows, TOL.rank_pivot), 7);
    }

    #[test]
    fn rm2_n2() {
        let sys = rm2_generator(2).unwrap();
        assert_eq!(sys.rows, vec![vec![1, 1, 1, 1], vec![0, 1, 0, 1], vec![0, 0, 1, 1], vec![0, 0, 0, 1]]);
    }

    #[test]
    fn rm2_row_weights_and_rank() {
        for n in 1..=10 {
            let sys = rm2_generator(n).unwrap();
            let m = 1 + n + n * (n - 1) / 2;
            assert_eq!(sys.row_count(), m);
            let w = |r: &Vec<u8>| r.iter().filter(|&&x| x == 1).count();
            assert_eq!(w(&sys.rows[0]), 1 << n);
            for r in &sys.rows[1..=n] {
                assert_eq!(w(r), 1 << (n - 1));
            }
            for r in &sys.rows[n + 1..] {
                assert_eq!(w(r), 1 << (n - 2));
            }
            assert_eq!(real_rank(&sys.rows, TOL.rank_pivot), m, "n = {n}");
        }
        assert!(matches!(rm2_generator(21), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn distribution_7_7_3_2() {
        let d = solve_distribution(7, 7, 3, 2).unwrap();
        assert!((d.alpha - 65.0 / 224.0).abs() < 1e-12);
        assert!((d.beta - 1.0 / 224.0).abs() < 1e-12);
        assert!((d.gamma - 33.0 / 224.0).abs() < 1e-12);
        let rep = verify_system(&d);
        assert!(rep.expanded);
        assert!(rep.ok(), "{rep:?}");
    }

    #[test]
    fn l_equals_lambda_is_all_or_nothing() {
        for (n, k, l) in [(5, 9, 3), (7, 7, 7), (3, 3, 1)] {
            let d = solve_distribution(n, k, l, l).unwrap();
            assert_eq!(d.beta, 0.0);
            assert!((d.gamma - l as f64 / k as f64).abs() < 1e-15);
            assert!((d.alpha - (1.0 - l as f64 / k as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn infeasible_conditions_are_named() {
        let err = solve_distribution(4, 4, 3, 1).unwrap_err();
        assert!(matches!(&err, Error::Infeasible(c) if c.starts_with("2 lambda >= l")), "{err}");
        assert!(matches!(solve_distribution(2, 9, 3, 2), Err(Error::Infeasible(c)) if c.starts_with("n >= l")));
        assert!(matches!(solve_distribution(5, 9, 2, 3), Err(Error::Infeasible(c)) if c.starts_with("l >= lambda")));
        assert!(matches!(solve_distribution(7, 4, 3, 2), Err(Error::Infeasible(c)) if c.starts_with("k >= 3l")));
    }

    #[test]
    fn perturbed_beta_shows_in_marginal_rows() {
        let mut d = solve_distribution(7, 7, 3, 2).unwrap();
        d.beta += 1e-3;
        let rep = verify_system(&d);
        assert!((rep.marginal - 63.0 * 1e-3).abs() < 1e-12, "{rep:?}");
        assert!((rep.pair - 31.0 * 1e-3).abs() < 1e-12);
        assert!(!rep.ok());
    }

    #[test]
    fn n3_system_is_exact() {
        // (3, 3, 2, 1) breaks k >= 3l - 2 lambda, so alpha = -1/6
        assert!(solve_distribution(3, 3, 2, 1).is_err());
        let d = closed_form_solution(3, 3, 2, 1).unwrap();
        assert!((d.alpha + 1.0 / 6.0).abs() < 1e-15);
        let rep = verify_system(&d);
        assert!(rep.max < 1e-15, "{rep:?}");
        assert!(!rep.ok());
        let d = solve_distribution(3, 4, 2, 1).unwrap();
        assert!(verify_system(&d).max < 1e-15);
    }

    #[test]
    fn large_n_uses_reduced_equations() {
        let d = solve_distribution(30, 100, 10, 6).unwrap();
        let rep = verify_system(&d);
        assert!(!rep.expanded);
        assert!(rep.ok(), "{rep:?}");
    }

    #[test]
    fn degenerate_alpha_one_gives_zero_matrix() {
        let d = RowDistribution {
            n: 5,
            k: 4,
            l: 0,
            lambda: 0,
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
        };
        let g = sample_code(&d, 4, 3).unwrap();
        assert_eq!(g.total_ones(), 0);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let d = solve_distribution(7, 7, 3, 2).unwrap();
        assert_eq!(sample_code(&d, 7, 42).unwrap(), sample_code(&d, 7, 42).unwrap());
        assert!(sample_code(&d, 8, 42).is_err());
    }

    fn binomial_band(p: f64, trials: f64) -> f64 {
        3.0 * (p * (1.0 - p) / trials).sqrt()
    }

    #[test]
    fn sampled_rows_match_marginals_and_pairs() {
        let d = solve_distribution(7, 7, 3, 2).unwrap();
        let rows = 100_000;
        let g = sample_rows(&d, rows, 2024).unwrap();
        let t = rows as f64;
        let p1 = 3.0 / 7.0;
        for j in 0..7 {
            let freq = g.column_weights()[j] as f64 / t;
            assert!((freq - p1).abs() <= binomial_band(p1, t), "column {j}: {freq}");
        }
        let p2 = 2.0 / 7.0;
        for a in 0..7 {
            for b in a + 1..7 {
                let freq = g.intersection(a, b) as f64 / t;
                assert!((freq - p2).abs() <= binomial_band(p2, t), "pair ({a},{b}): {freq}");
            }
        }
    }

    #[test]
    fn all_stragglers_error_is_one() {
        let d = solve_distribution(7, 7, 3, 2).unwrap();
        for dec in [Decoder::Optimal, Decoder::BibdConstant] {
            let est = expected_error_mc(&d, 7, 7, 20, 1, dec).unwrap();
            assert_eq!(est.mean, 1.0);
            assert_eq!(est.stderr, 0.0);
        }
    }

    #[test]
    fn optimal_never_worse_than_constant_per_trial() {
        let d = solve_distribution(7, 7, 3, 2).unwrap();
        for s in 0..7 {
            let opt = trial_errors(&d, 7, s, 300, 9, Decoder::Optimal).unwrap();
            let con = trial_errors(&d, 7, s, 300, 9, Decoder::BibdConstant).unwrap();
            for (o, c) in opt.iter().zip(&con) {
                assert!(*o <= c + 1e-12, "s = {s}: {o} > {c}");
            }
        }
    }
}
