//! Adversarial straggler search.
//!
//! The normalized worst-case squared error is the maximum, over all sets of
//! `s` stragglers, of the least-squares residual of the survivors divided by
//! `k`. Small instances are enumerated exhaustively; larger ones are lower
//! bounded by random sampling plus the structured adversaries that the
//! closed-form analyses single out.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::{
    frc_product_order, kronecker_swap_permutations, BibdParams, CodeStructure, EncodingMatrix,
    FrcParams,
};
use crate::decoding::{GramCache, Solver, StragglerScenario};
use crate::error::{Error, Result};
use crate::tol::{Caps, TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exhaustive,
    Sampled,
    Structured,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exhaustive => "exhaustive",
            Method::Sampled => "sampled",
            Method::Structured => "structured",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseResult {
    pub s: usize,
    /// Normalized worst-case squared error.
    pub error: f64,
    pub witness: StragglerScenario,
    pub method: Method,
    pub subsets_evaluated: u128,
    /// Smallest normalized error among the evaluated subsets.
    pub min_error: f64,
}

/// `C(n, s)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, s: usize) -> u128 {
    if s > n {
        return 0;
    }
    let s = s.min(n - s);
    let mut acc: u128 = 1;
    for i in 0..s {
        // acc * (n - i) / (i + 1) stays integral at every step
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i as u128 + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// All `s`-subsets of `0..n` in lexicographic order, split into fixed
/// contiguous rank ranges.
#[derive(Debug, Clone, Copy)]
pub struct SubsetRange {
    n: usize,
    s: usize,
    total: u128,
}

/// Rank range `[start, start + len)` of the lexicographic enumeration.
#[derive(Debug, Clone, Copy)]
pub struct SubsetChunk {
    n: usize,
    s: usize,
    start: u128,
    len: u128,
}

const TARGET_CHUNKS: u128 = 512;

impl SubsetRange {
    pub fn new(n: usize, s: usize, cap: u128) -> Result<Self> {
        if s > n {
            return Err(Error::InvalidParams(format!("s = {s} exceeds n = {n}")));
        }
        let total = binomial(n, s);
        if total > cap {
            return Err(Error::CapExceeded {
                what: "straggler subsets C(n, s)",
                value: total,
                cap,
            });
        }
        Ok(SubsetRange { n, s, total })
    }

    pub fn total(&self) -> u128 {
        self.total
    }

    /// Chunking depends only on `C(n, s)`, never on the thread count.
    pub fn chunks(&self) -> Vec<SubsetChunk> {
        let size = self.total.div_ceil(TARGET_CHUNKS).max(1);
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.total {
            let len = size.min(self.total - start);
            out.push(SubsetChunk {
                n: self.n,
                s: self.s,
                start,
                len,
            });
            start += len;
        }
        out
    }
}

impl SubsetChunk {
    /// Calls `f(stragglers, survivors)` for every subset in the chunk, in
    /// lexicographic order of the straggler set.
    pub fn for_each(&self, mut f: impl FnMut(&[usize], &[usize])) {
        let (n, s) = (self.n, self.s);
        let mut comb = unrank(n, s, self.start);
        let mut survivors = Vec::with_capacity(n - s);
        for step in 0..self.len {
            survivors.clear();
            let mut next = 0;
            for &c in &comb {
                survivors.extend(next..c);
                next = c + 1;
            }
            survivors.extend(next..n);
            f(&comb, &survivors);
            if step + 1 < self.len {
                advance(&mut comb, n);
            }
        }
    }
}

/// Lexicographic unranking of `s`-subsets of `0..n`.
fn unrank(n: usize, s: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(s);
    let mut c = 0;
    for i in 0..s {
        loop {
            let count = binomial(n - c - 1, s - i - 1);
            if rank < count {
                break;
            }
            rank -= count;
            c += 1;
        }
        out.push(c);
        c += 1;
    }
    out
}

fn advance(comb: &mut [usize], n: usize) {
    let s = comb.len();
    let mut i = s;
    while i > 0 {
        i -= 1;
        if comb[i] < n - s + i {
            comb[i] += 1;
            for j in i + 1..s {
                comb[j] = comb[j - 1] + 1;
            }
            return;
        }
    }
}

/// Runs `f(stragglers, survivors)` for every `s`-subset in parallel.
pub fn visit_subsets<F>(n: usize, s: usize, cap: u128, f: F) -> Result<u128>
where
    F: Fn(&[usize], &[usize]) + Sync,
{
    let range = SubsetRange::new(n, s, cap)?;
    range
        .chunks()
        .into_par_iter()
        .for_each(|chunk| chunk.for_each(&f));
    Ok(range.total())
}

/// Folds every `s`-subset into chunk-local accumulators created by `init`.
/// The accumulators come back in chunk order.
pub fn fold_subsets<T, I, F>(n: usize, s: usize, cap: u128, init: I, f: F) -> Result<Vec<T>>
where
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(&mut T, &[usize], &[usize]) + Sync,
{
    let range = SubsetRange::new(n, s, cap)?;
    Ok(range
        .chunks()
        .into_par_iter()
        .map(|chunk| {
            let mut acc = init();
            chunk.for_each(|st, su| f(&mut acc, st, su));
            acc
        })
        .collect())
}

#[derive(Debug, Clone)]
struct Best {
    error: f64,
    witness: Vec<usize>,
    min: f64,
    count: u128,
}

impl Best {
    fn empty() -> Self {
        Best {
            error: f64::NEG_INFINITY,
            witness: Vec::new(),
            min: f64::INFINITY,
            count: 0,
        }
    }

    fn offer(&mut self, error: f64, witness: &[usize]) {
        self.count += 1;
        self.min = self.min.min(error);
        let better = error > self.error + TOL.tie
            || ((error - self.error).abs() <= TOL.tie && witness < self.witness.as_slice());
        if better {
            self.error = error;
            self.witness = witness.to_vec();
        }
    }

    fn merge(mut self, other: Best) -> Best {
        let count = self.count + other.count;
        let min = self.min.min(other.min);
        if other.count > 0 {
            self.count = 0;
            self.offer(other.error, &other.witness);
        }
        self.count = count;
        self.min = min;
        self
    }
}

pub fn exhaustive_worst_case(g: &EncodingMatrix, s: usize) -> Result<WorstCaseResult> {
    exhaustive_worst_case_with_cap(g, s, Caps::default().subsets)
}

/// Exact maximum over all `C(n, s)` straggler sets. Ties go to the
/// lexicographically smallest straggler set.
pub fn exhaustive_worst_case_with_cap(g: &EncodingMatrix, s: usize, cap: u128) -> Result<WorstCaseResult> {
    let n = g.n();
    let range = SubsetRange::new(n, s, cap)?;
    let cache = GramCache::new(g);
    let k = g.k() as f64;
    let partials: Vec<Result<Best>> = range
        .chunks()
        .into_par_iter()
        .map(|chunk| {
            let mut solver = Solver::new();
            let mut best = Best::empty();
            let mut failure = None;
            chunk.for_each(|stragglers, survivors| {
                if failure.is_some() {
                    return;
                }
                match solver.optimal_error(&cache, survivors) {
                    Ok(e) => best.offer(e / k, stragglers),
                    Err(err) => failure = Some(err),
                }
            });
            match failure {
                Some(err) => Err(err),
                None => Ok(best),
            }
        })
        .collect();
    let mut best = Best::empty();
    for part in partials {
        best = best.merge(part?);
    }
    Ok(WorstCaseResult {
        s,
        error: best.error,
        witness: StragglerScenario::new(n, best.witness)?,
        method: Method::Exhaustive,
        subsets_evaluated: best.count,
        min_error: best.min,
    })
}

/// Normalized optimal error of one scenario.
pub fn scenario_error(g: &EncodingMatrix, scenario: &StragglerScenario) -> Result<f64> {
    if scenario.n != g.n() {
        return Err(Error::ShapeMismatch(format!(
            "scenario over {} workers for a code with n = {}",
            scenario.n,
            g.n()
        )));
    }
    let cache = GramCache::new(g);
    Ok(Solver::new().optimal_error(&cache, &scenario.survivors)? / g.k() as f64)
}

/// Lower bound on the worst case: the maximum over `trials` uniformly drawn
/// straggler sets and every candidate in `structured`.
///
/// Trial `t` draws from ChaCha8 seeded with `seed` on stream `t`, so results
/// do not depend on scheduling.
pub fn sampled_worst_case(
    g: &EncodingMatrix,
    s: usize,
    trials: usize,
    seed: u64,
    structured: &[StragglerScenario],
) -> Result<WorstCaseResult> {
    let n = g.n();
    if s > n {
        return Err(Error::InvalidParams(format!("s = {s} exceeds n = {n}")));
    }
    if trials == 0 && structured.is_empty() {
        return Err(Error::InvalidParams("need at least one trial".into()));
    }
    for c in structured {
        if c.n != n || c.s() != s {
            return Err(Error::ShapeMismatch(format!(
                "structured candidate with n = {}, s = {} for n = {n}, s = {s}",
                c.n,
                c.s()
            )));
        }
    }
    let cache = GramCache::new(g);
    let k = g.k() as f64;
    let sampled: Vec<Result<(f64, Vec<usize>)>> = (0..trials as u64)
        .into_par_iter()
        .map_init(Solver::new, |solver, t| {
            let stragglers = sample_stragglers(n, s, seed, t);
            let sc = StragglerScenario::new(n, stragglers)?;
            let e = solver.optimal_error(&cache, &sc.survivors)? / k;
            Ok((e, sc.stragglers))
        })
        .collect();
    let mut best = Best::empty();
    for r in sampled {
        let (e, w) = r?;
        best.offer(e, &w);
    }
    let sampled_best = best.clone();
    let mut solver = Solver::new();
    for c in structured {
        let e = solver.optimal_error(&cache, &c.survivors)? / k;
        best.offer(e, &c.stragglers);
    }
    let method = if sampled_best.count > 0 && best.witness == sampled_best.witness {
        Method::Sampled
    } else {
        Method::Structured
    };
    Ok(WorstCaseResult {
        s,
        error: best.error,
        witness: StragglerScenario::new(n, best.witness)?,
        method,
        subsets_evaluated: best.count,
        min_error: best.min,
    })
}

/// Sorted uniformly random `s`-subset of `0..n` for trial `t`.
pub fn sample_stragglers(n: usize, s: usize, seed: u64, t: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    let mut v = index::sample(&mut rng, n, s).into_vec();
    v.sort_unstable();
    v
}

/// Outcome of [`worst_case_auto`].
#[derive(Debug, Clone, PartialEq)]
pub struct AutoResult {
    pub result: WorstCaseResult,
    /// Set when the exhaustive cap forced a sampled lower bound.
    pub downgraded: bool,
}

/// Exhaustive search when `C(n, s)` fits the cap, otherwise sampling plus
/// structured candidates.
pub fn worst_case_auto(
    g: &EncodingMatrix,
    s: usize,
    cap: u128,
    trials: usize,
    seed: u64,
    structured: &[StragglerScenario],
) -> Result<AutoResult> {
    if binomial(g.n(), s) <= cap {
        Ok(AutoResult {
            result: exhaustive_worst_case_with_cap(g, s, cap)?,
            downgraded: false,
        })
    } else {
        Ok(AutoResult {
            result: sampled_worst_case(g, s, trials, seed, structured)?,
            downgraded: true,
        })
    }
}

/// Straggles `floor(s / r)` whole blocks and the remaining `s mod r` workers
/// in the next block.
pub fn frc_adversary(p: &FrcParams, s: usize) -> Result<StragglerScenario> {
    FrcParams::new(p.n, p.k, p.l, p.r).map_err(|e| Error::NotAnFrc(e.to_string()))?;
    if s > p.n {
        return Err(Error::InvalidParams(format!("s = {s} exceeds n = {}", p.n)));
    }
    StragglerScenario::new(p.n, 0..s)
}

/// Worst-case candidate for `F ⊗ B` with `F` an FRC: straggle
/// `c = floor(s / (r1 n2))` whole blocks, then spread the remainder evenly
/// over the `r1` sub-blocks of block `c`.
pub fn kron_frc_bibd_adversary(f: &FrcParams, b: &BibdParams, s: usize) -> Result<StragglerScenario> {
    FrcParams::new(f.n, f.k, f.l, f.r).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let n = f.n * b.n;
    if s > n {
        return Err(Error::ShapeMismatch(format!("s = {s} exceeds n1 n2 = {n}")));
    }
    let block = f.r * b.n;
    let c = s / block;
    let rem = s - c * block;
    let mut stragglers: Vec<usize> = (0..c * block).collect();
    if rem > 0 {
        let base = c * block;
        for j in 0..f.r {
            let take = rem / f.r + usize::from(j < rem % f.r);
            stragglers.extend((0..take).map(|t| base + j * b.n + t));
        }
    }
    StragglerScenario::new(n, stragglers)
}

/// Candidate straggler sets suggested by the structure of a code.
pub fn structured_candidates(structure: &CodeStructure, s: usize) -> Result<Vec<StragglerScenario>> {
    let n = structure_n(structure);
    if s > n {
        return Err(Error::InvalidParams(format!("s = {s} exceeds n = {n}")));
    }
    let mut out = vec![StragglerScenario::new(n, 0..s)?];
    match structure {
        CodeStructure::Frc(p) => out.push(frc_adversary(p, s)?),
        CodeStructure::Kronecker(a, b) => match (a.as_ref(), b.as_ref()) {
            (CodeStructure::Frc(f1), CodeStructure::Frc(f2)) => {
                let (_, cols) = frc_product_order(f1, f2);
                out.push(StragglerScenario::new(n, cols[..s].iter().copied())?);
            }
            (CodeStructure::Frc(f), CodeStructure::Bibd(bp)) => {
                out.push(kron_frc_bibd_adversary(f, bp, s)?);
            }
            (CodeStructure::Bibd(bp), CodeStructure::Frc(f)) => {
                let fb = kron_frc_bibd_adversary(f, bp, s)?;
                // B ⊗ F column j is F ⊗ B column cols[j]
                let (_, cols) = kronecker_swap_permutations((f.k, f.n), (bp.k, bp.n));
                let mut hit = vec![false; n];
                for &j in &fb.stragglers {
                    hit[j] = true;
                }
                out.push(StragglerScenario::new(n, (0..n).filter(|&j| hit[cols[j]]))?);
            }
            _ => {
                // whole classes (same right-factor worker) first
                let inner = structure_n(b);
                let class_major: Vec<usize> = (0..n).map(|t| (t % (n / inner)) * inner + t / (n / inner)).collect();
                out.push(StragglerScenario::new(n, class_major[..s].iter().copied())?);
            }
        },
        _ => {}
    }
    out.dedup();
    Ok(out)
}

fn structure_n(structure: &CodeStructure) -> usize {
    match structure {
        CodeStructure::Frc(p) => p.n,
        CodeStructure::Bibd(p) => p.n,
        CodeStructure::ProbBibd { n, .. } => *n,
        CodeStructure::Kronecker(a, b) => structure_n(a) * structure_n(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{build_catalog_bibd, build_frc, kronecker, CatalogDesign};


    #[test]
    fn binomial_values() {
        assert_eq!(binomial(28, 6), 376_740);
        assert_eq!(binomial(49, 4), 211_876);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(5, 6), 0);
        assert_eq!(binomial(200, 100), u128::MAX);
    }

    #[test]
    fn chunks_cover_lexicographic_order() {
        let range = SubsetRange::new(9, 4, u128::MAX).unwrap();
        let mut seen = Vec::new();
        for chunk in range.chunks() {
            chunk.for_each(|st, su| {
                assert_eq!(st.len() + su.len(), 9);
                seen.push(st.to_vec());
            });
        }
        assert_eq!(seen.len(), 126);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(seen[0], vec![0, 1, 2, 3]);
        assert_eq!(seen[125], vec![5, 6, 7, 8]);
    }

    #[test]
    fn cap_is_enforced() {
        let g = build_frc(12, 12, 3, 3).unwrap();
        let err = exhaustive_worst_case_with_cap(&g, 6, 100).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { value: 924, .. }));
    }

    #[test]
    fn frc_6622_three_stragglers() {
        let g = build_frc(6, 6, 2, 2).unwrap();
        let r = exhaustive_worst_case(&g, 3).unwrap();
        assert_eq!(r.error, 1.0 / 3.0);
        assert_eq!(r.witness.stragglers, vec![0, 1, 2]);
        assert_eq!(r.subsets_evaluated, 20);
        let adv = frc_adversary(&FrcParams::new(6, 6, 2, 2).unwrap(), 3).unwrap();
        assert_eq!(adv.stragglers, vec![0, 1, 2]);
        assert_eq!(scenario_error(&g, &adv).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn frc_adversary_edges() {
        let p = FrcParams::new(6, 6, 2, 2).unwrap();
        let g = build_frc(6, 6, 2, 2).unwrap();
        let none = frc_adversary(&p, 0).unwrap();
        assert!(none.stragglers.is_empty());
        assert_eq!(scenario_error(&g, &none).unwrap(), 0.0);
        let all = frc_adversary(&p, 6).unwrap();
        assert_eq!(scenario_error(&g, &all).unwrap(), 1.0);
        let bad = FrcParams { n: 6, k: 6, l: 4, r: 2 };
        assert!(matches!(frc_adversary(&bad, 1), Err(Error::NotAnFrc(_))));
    }

    #[test]
    fn fano_one_straggler() {
        let (g, _) = build_catalog_bibd("fano").unwrap();
        let r = exhaustive_worst_case(&g, 1).unwrap();
        assert!((r.error - 1.0 / 28.0).abs() < 1e-12);
        assert_eq!(r.witness.stragglers, vec![0]);
        assert!((r.min_error - r.error).abs() < 1e-12);
    }

    #[test]
    fn no_stragglers_exact_recovery() {
        for g in [build_frc(6, 6, 2, 2).unwrap(), CatalogDesign::Fano.build()] {
            assert!(exhaustive_worst_case(&g, 0).unwrap().error.abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_with_full_coverage_matches_exhaustive() {
        let (g, _) = build_catalog_bibd("biplane11").unwrap();
        let ex = exhaustive_worst_case(&g, 3).unwrap();
        let sa = sampled_worst_case(&g, 3, 5_000, 7, &[]).unwrap();
        assert!((ex.error - sa.error).abs() < 1e-12);
        let g = kronecker(&build_frc(4, 4, 2, 2).unwrap(), &build_frc(3, 3, 1, 1).unwrap()).unwrap();
        let ex = exhaustive_worst_case(&g, 5).unwrap();
        let sa = sampled_worst_case(&g, 5, 20_000, 3, &[]).unwrap();
        assert_eq!(ex.error, sa.error);
        assert_eq!(ex.witness, sa.witness);
    }

    #[test]
    fn sampling_is_reproducible() {
        let (f, _) = build_catalog_bibd("fano").unwrap();
        let g = kronecker(&f, &f).unwrap();
        let a = sampled_worst_case(&g, 7, 200, 11, &[]).unwrap();
        let b = sampled_worst_case(&g, 7, 200, 11, &[]).unwrap();
        assert_eq!(a, b);
        assert_eq!(sample_stragglers(49, 7, 11, 3), sample_stragglers(49, 7, 11, 3));
        assert_ne!(sample_stragglers(49, 7, 11, 3), sample_stragglers(49, 7, 11, 4));
    }

    #[test]
    fn kron_frc_bibd_adversary_shapes() {
        let f = FrcParams::new(4, 4, 2, 2).unwrap();
        let b = CatalogDesign::Fano.params();
        let full = kron_frc_bibd_adversary(&f, &b, 14).unwrap();
        assert_eq!(full.stragglers, (0..14).collect::<Vec<_>>());
        assert!(kron_frc_bibd_adversary(&f, &b, 0).unwrap().stragglers.is_empty());
        // s = 3: c = 0, sub-blocks get 2 and 1 stragglers
        let three = kron_frc_bibd_adversary(&f, &b, 3).unwrap();
        assert_eq!(three.stragglers, vec![0, 1, 7]);
        assert!(kron_frc_bibd_adversary(&f, &b, 29).is_err());
    }

    #[test]
    fn structured_candidates_have_requested_size() {
        let fano = CodeStructure::Bibd(CatalogDesign::Fano.params());
        let frc = CodeStructure::Frc(FrcParams::new(4, 4, 2, 2).unwrap());
        let kinds = [
            CodeStructure::Kronecker(Box::new(frc.clone()), Box::new(fano.clone())),
            CodeStructure::Kronecker(Box::new(fano.clone()), Box::new(frc.clone())),
            CodeStructure::Kronecker(Box::new(fano.clone()), Box::new(fano.clone())),
            CodeStructure::Kronecker(Box::new(frc.clone()), Box::new(frc.clone())),
        ];
        for kind in &kinds {
            for s in [0, 3, 9, 16] {
                for c in structured_candidates(kind, s).unwrap() {
                    assert_eq!(c.s(), s);
                }
            }
        }
    }

    #[test]
    fn swapped_frc_bibd_candidate_is_equivalent() {
        let f = FrcParams::new(4, 4, 2, 2).unwrap();
        let b = CatalogDesign::Fano.params();
        let fg = build_frc(4, 4, 2, 2).unwrap();
        let bg = CatalogDesign::Fano.build();
        let fb = kronecker(&fg, &bg).unwrap();
        let bf = kronecker(&bg, &fg).unwrap();
        let sb = CodeStructure::Kronecker(Box::new(CodeStructure::Bibd(b)), Box::new(CodeStructure::Frc(f)));
        for s in [3, 9, 15] {
            let direct = kron_frc_bibd_adversary(&f, &b, s).unwrap();
            let mapped = structured_candidates(&sb, s).unwrap().pop().unwrap();
            let e1 = scenario_error(&fb, &direct).unwrap();
            let e2 = scenario_error(&bf, &mapped).unwrap();
            assert!((e1 - e2).abs() < 1e-12, "s={s}: {e1} vs {e2}");
        }
    }
}
