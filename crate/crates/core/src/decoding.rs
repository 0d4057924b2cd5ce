//! Decoding vectors and squared errors for a fixed set of surviving workers.
//!
//! Least squares goes through the normal equations `G_U^T G_U v = G_U^T 1`.
//! Gram matrices here are small and integer valued, so a symmetric pivoted
//! LDL^T factorization that drops negligible pivots is exact on the
//! structured codes and still yields a minimizer when `G_U` is rank deficient.

use serde::{Deserialize, Serialize};

use crate::codes::{CodeParams, EncodingMatrix};
use crate::error::{Error, Result};
use crate::tol::{Tolerances, TOL};

/// A set of failed workers and its complement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StragglerScenario {
    pub n: usize,
    pub stragglers: Vec<usize>,
    pub survivors: Vec<usize>,
}

impl StragglerScenario {
    pub fn new(n: usize, stragglers: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut failed = vec![false; n];
        for j in stragglers {
            if j >= n {
                return Err(Error::ShapeMismatch(format!(
                    "straggler index {j} out of range for n = {n}"
                )));
            }
            failed[j] = true;
        }
        Ok(Self::from_mask(&failed))
    }

    pub fn from_survivors(n: usize, survivors: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut alive = vec![false; n];
        for j in survivors {
            if j >= n {
                return Err(Error::ShapeMismatch(format!(
                    "worker index {j} out of range for n = {n}"
                )));
            }
            alive[j] = true;
        }
        let failed: Vec<bool> = alive.iter().map(|a| !a).collect();
        Ok(Self::from_mask(&failed))
    }

    /// No stragglers.
    pub fn none(n: usize) -> Self {
        Self::from_mask(&vec![false; n])
    }

    fn from_mask(failed: &[bool]) -> Self {
        let (mut stragglers, mut survivors) = (Vec::new(), Vec::new());
        for (j, &f) in failed.iter().enumerate() {
            if f {
                stragglers.push(j);
            } else {
                survivors.push(j);
            }
        }
        StragglerScenario {
            n: failed.len(),
            stragglers,
            survivors,
        }
    }

    pub fn s(&self) -> usize {
        self.stragglers.len()
    }
}

/// Weights applied to the surviving workers' results, aligned with `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingVector {
    pub values: Vec<f64>,
}

impl DecodingVector {
    pub fn constant(value: f64, len: usize) -> Self {
        DecodingVector {
            values: vec![value; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Full Gram matrix and column weights of a code, as floats.
///
/// Sub-problems for any survivor set are read out of this cache instead of
/// recounting intersections.
#[derive(Debug, Clone)]
pub struct GramCache {
    n: usize,
    k: usize,
    gram: Vec<f64>,
    weights: Vec<f64>,
}

impl GramCache {
    pub fn new(g: &EncodingMatrix) -> Self {
        GramCache {
            n: g.n(),
            k: g.k(),
            gram: g.gram().into_iter().map(f64::from).collect(),
            weights: g.column_weights().iter().map(|&w| w as f64).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.gram[a * self.n + b]
    }

    pub fn weight(&self, a: usize) -> f64 {
        self.weights[a]
    }

    /// `1^T G_U^T G_U 1`, the sum of the Gram submatrix.
    pub fn ones_quadratic_form(&self, survivors: &[usize]) -> f64 {
        survivors
            .iter()
            .map(|&a| survivors.iter().map(|&b| self.entry(a, b)).sum::<f64>())
            .sum()
    }
}

/// Reusable scratch space for repeated least-squares solves.
#[derive(Debug, Default, Clone)]
pub struct Solver {
    a: Vec<f64>,
    rhs: Vec<f64>,
    perm: Vec<usize>,
    diag: Vec<f64>,
    x: Vec<f64>,
    tol: Option<Tolerances>,
}

impl Solver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tolerances(tol: Tolerances) -> Self {
        Solver {
            tol: Some(tol),
            ..Self::default()
        }
    }

    fn tol(&self) -> Tolerances {
        self.tol.unwrap_or(TOL)
    }

    /// Least-squares decoding vector for survivors `u`.
    pub fn decode(&mut self, cache: &GramCache, u: &[usize]) -> Result<Vec<f64>> {
        let m = u.len();
        self.load(cache, u);
        let tol = self.tol();
        let limit = tol.normal_residual_per_row * cache.k as f64;
        let x = self.solve_pivoted(m, tol.pivot);
        let residual = normal_residual(cache, u, &x);
        if residual <= limit {
            return Ok(x);
        }
        // rank detection failed to give a consistent solution: regularize
        let max_diag = u.iter().map(|&a| cache.entry(a, a)).fold(0.0, f64::max);
        self.load(cache, u);
        for i in 0..m {
            self.a[i * m + i] += tol.jitter * max_diag.max(1.0);
        }
        let x = self.solve_pivoted(m, 0.0);
        let residual = normal_residual(cache, u, &x);
        if residual <= limit {
            Ok(x)
        } else {
            Err(Error::NumericalFailure {
                residual,
                tolerance: limit,
            })
        }
    }

    /// Minimal squared error `min_v ||G_U v - 1||^2` (not normalized).
    pub fn optimal_error(&mut self, cache: &GramCache, u: &[usize]) -> Result<f64> {
        if u.is_empty() {
            return Ok(cache.k as f64);
        }
        let v = self.decode(cache, u)?;
        Ok(gram_error(cache, u, &v, self.tol().clamp))
    }

    fn load(&mut self, cache: &GramCache, u: &[usize]) {
        let m = u.len();
        self.a.clear();
        self.a.reserve(m * m);
        for &a in u {
            self.a.extend(u.iter().map(|&b| cache.entry(a, b)));
        }
        self.rhs.clear();
        self.rhs.extend(u.iter().map(|&a| cache.weight(a)));
    }

    /// Solves the loaded system by LDL^T with symmetric diagonal pivoting.
    /// Pivots at or below `rel_tol * max_diag` end the factorization; the
    /// corresponding unknowns are set to zero.
    fn solve_pivoted(&mut self, m: usize, rel_tol: f64) -> Vec<f64> {
        let a = &mut self.a;
        self.perm.clear();
        self.perm.extend(0..m);
        self.diag.clear();
        let max_diag = (0..m).map(|i| a[i * m + i]).fold(0.0, f64::max);
        let threshold = rel_tol * max_diag;
        let mut rank = 0;
        for t in 0..m {
            let mut p = t;
            for i in t + 1..m {
                if a[i * m + i] > a[p * m + p] {
                    p = i;
                }
            }
            if a[p * m + p] <= threshold || a[p * m + p] <= 0.0 {
                break;
            }
            if p != t {
                for c in 0..m {
                    a.swap(t * m + c, p * m + c);
                }
                for r in 0..m {
                    a.swap(r * m + t, r * m + p);
                }
                self.perm.swap(t, p);
            }
            let d = a[t * m + t];
            // store multipliers in column t below the diagonal
            for i in t + 1..m {
                a[i * m + t] /= d;
            }
            for i in t + 1..m {
                let li = a[i * m + t];
                if li == 0.0 {
                    continue;
                }
                for j in t + 1..=i {
                    a[i * m + j] -= li * d * a[j * m + t];
                }
            }
            // keep the upper triangle in sync for the pivot search and swaps
            for i in t + 1..m {
                for j in t + 1..i {
                    a[j * m + i] = a[i * m + j];
                }
            }
            self.diag.push(d);
            rank += 1;
        }

        // forward substitution with the unit lower factor
        let b: Vec<f64> = self.perm.iter().map(|&p| self.rhs[p]).collect();
        let mut z = b[..rank].to_vec();
        for i in 0..rank {
            for j in 0..i {
                z[i] -= a[i * m + j] * z[j];
            }
        }
        for (zi, d) in z.iter_mut().zip(&self.diag) {
            *zi /= d;
        }
        for i in (0..rank).rev() {
            for j in i + 1..rank {
                z[i] -= a[j * m + i] * z[j];
            }
        }
        self.x.clear();
        self.x.resize(m, 0.0);
        for (i, zi) in z.into_iter().enumerate() {
            self.x[self.perm[i]] = zi;
        }
        self.x.clone()
    }
}

fn normal_residual(cache: &GramCache, u: &[usize], v: &[f64]) -> f64 {
    u.iter()
        .map(|&a| {
            let row: f64 = u.iter().zip(v).map(|(&b, vb)| cache.entry(a, b) * vb).sum();
            (row - cache.weight(a)).abs()
        })
        .fold(0.0, f64::max)
}

/// `k - 2 v^T G_U^T 1 + v^T G_U^T G_U v`, clamped at zero.
pub fn gram_error(cache: &GramCache, u: &[usize], v: &[f64], clamp: f64) -> f64 {
    let linear: f64 = u.iter().zip(v).map(|(&a, va)| cache.weight(a) * va).sum();
    let quad: f64 = u
        .iter()
        .zip(v)
        .map(|(&a, va)| {
            va * u
                .iter()
                .zip(v)
                .map(|(&b, vb)| cache.entry(a, b) * vb)
                .sum::<f64>()
        })
        .sum();
    let e = cache.k as f64 - 2.0 * linear + quad;
    if e < 0.0 && e >= -clamp {
        0.0
    } else {
        e
    }
}

fn check_survivors(g: &EncodingMatrix, u: &[usize]) -> Result<()> {
    if let Some(&bad) = u.iter().find(|&&j| j >= g.n()) {
        return Err(Error::ShapeMismatch(format!(
            "worker {bad} out of range for n = {}",
            g.n()
        )));
    }
    Ok(())
}

/// Least-squares optimal decoding vector for survivors `u`.
pub fn optimal_decoding(g: &EncodingMatrix, u: &[usize]) -> Result<DecodingVector> {
    if u.is_empty() {
        return Err(Error::InvalidParams(
            "optimal decoding needs at least one surviving worker".into(),
        ));
    }
    check_survivors(g, u)?;
    let cache = GramCache::new(g);
    Ok(DecodingVector {
        values: Solver::new().decode(&cache, u)?,
    })
}

/// `min_v ||G_U v - 1_k||^2`; equals `k` when `u` is empty.
pub fn optimal_squared_error(g: &EncodingMatrix, u: &[usize]) -> Result<f64> {
    check_survivors(g, u)?;
    Solver::new().optimal_error(&GramCache::new(g), u)
}

/// Constant decoder `l / (l + lambda (n - s - 1))` of a code with uniform
/// pairwise intersections `lambda < l`.
pub fn closed_form_decoding(l: usize, lambda: usize, n: usize, s: usize) -> Result<DecodingVector> {
    if l <= lambda {
        return Err(Error::InvalidParams(format!(
            "closed-form decoding needs l > lambda, got l = {l}, lambda = {lambda}"
        )));
    }
    if s >= n {
        return Err(Error::InvalidParams(format!(
            "closed-form decoding needs s < n, got s = {s}, n = {n}"
        )));
    }
    let survivors = n - s;
    let value = l as f64 / (l as f64 + lambda as f64 * (survivors as f64 - 1.0));
    Ok(DecodingVector::constant(value, survivors))
}

/// Squared error `||G_U v - 1_k||^2` by the Gram expansion.
pub fn squared_error(g: &EncodingMatrix, u: &[usize], v: &DecodingVector) -> Result<f64> {
    if v.len() != u.len() {
        return Err(Error::DimensionMismatch(format!(
            "decoding vector has {} entries for {} survivors",
            v.len(),
            u.len()
        )));
    }
    check_survivors(g, u)?;
    let cache = GramCache::new(g);
    Ok(gram_error(&cache, u, &v.values, TOL.clamp))
}

/// Composite intersection constant of a product of two uniform codes:
/// `(l1 - λ1)(l2 - λ2) + n2 (l1 λ2 - λ1 λ2) + n1 (λ1 l2 - λ1 λ2)`.
pub fn kron_composite_d(p1: &CodeParams, p2: &CodeParams) -> Result<f64> {
    let (l1, n1, m1) = uniform_parts(p1)?;
    let (l2, n2, m2) = uniform_parts(p2)?;
    Ok((l1 - m1) * (l2 - m2) + n2 * (l1 * m2 - m1 * m2) + n1 * (m1 * l2 - m1 * m2))
}

fn uniform_parts(p: &CodeParams) -> Result<(f64, f64, f64)> {
    let lambda = p
        .lambda
        .ok_or_else(|| Error::InvalidParams("product decoder needs lambda-uniform factors".into()))?;
    if p.l < lambda {
        return Err(Error::InvalidParams(format!(
            "need l >= lambda, got l = {}, lambda = {lambda}",
            p.l
        )));
    }
    Ok((p.l as f64, p.n as f64, lambda as f64))
}

/// Constant decoder `a* = l1 l2 / (d + (n1 n2 - s) λ1 λ2)` for a product of
/// two lambda-uniform codes.
pub fn kron_constant_decoder(p1: &CodeParams, p2: &CodeParams, s: usize) -> Result<DecodingVector> {
    let d = kron_composite_d(p1, p2)?;
    let n = p1.n * p2.n;
    if s >= n {
        return Err(Error::InvalidParams(format!(
            "need s < n1 n2 = {n}, got s = {s}"
        )));
    }
    let survivors = n - s;
    let lam = (p1.lambda.unwrap_or(0) * p2.lambda.unwrap_or(0)) as f64;
    let a = (p1.l * p2.l) as f64 / (d + survivors as f64 * lam);
    Ok(DecodingVector::constant(a, survivors))
}
