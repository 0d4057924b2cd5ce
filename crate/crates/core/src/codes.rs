//! Encoding matrices and the constructions that produce them.
//!
//! An encoding matrix is a `k x n` binary matrix: row `i` is data piece `i`,
//! column `j` is worker `j`, and a one means worker `j` computes the gradient
//! of piece `i`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probbibd;
use crate::tol::Caps;

const WORD: usize = 64;

fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD)
}

/// Dense binary `k x n` matrix stored as packed bits.
///
/// Rows are stored row-major; a transposed copy keeps each column packed so
/// that column intersections are a popcount over `k / 64` words.
#[derive(Clone, PartialEq, Eq)]
pub struct EncodingMatrix {
    k: usize,
    n: usize,
    row_words: usize,
    col_words: usize,
    rows: Vec<u64>,
    cols: Vec<u64>,
    col_weights: Vec<usize>,
}

impl EncodingMatrix {
    /// Builds a matrix from a predicate on `(row, column)`.
    pub fn from_fn(k: usize, n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::DimensionMismatch(format!(
                "encoding matrix must be at least 1x1, got {k}x{n}"
            )));
        }
        let row_words = words_for(n);
        let col_words = words_for(k);
        let mut rows = vec![0u64; k * row_words];
        let mut cols = vec![0u64; n * col_words];
        let mut col_weights = vec![0usize; n];
        for i in 0..k {
            for j in 0..n {
                if f(i, j) {
                    rows[i * row_words + j / WORD] |= 1 << (j % WORD);
                    cols[j * col_words + i / WORD] |= 1 << (i % WORD);
                    col_weights[j] += 1;
                }
            }
        }
        Ok(EncodingMatrix {
            k,
            n,
            row_words,
            col_words,
            rows,
            cols,
            col_weights,
        })
    }

    /// Builds a matrix from rows of 0/1 bytes.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|&&b| b > 1) {
                return Err(Error::InvalidParams(format!(
                    "row {i} contains non-binary entry {bad}"
                )));
            }
        }
        Self::from_fn(k, n, |i, j| rows[i].as_ref()[j] == 1)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        debug_assert!(i < self.k && j < self.n);
        self.rows[i * self.row_words + j / WORD] >> (j % WORD) & 1 == 1
    }

    pub fn column_weights(&self) -> &[usize] {
        &self.col_weights
    }

    pub fn row_weights(&self) -> Vec<usize> {
        (0..self.k)
            .map(|i| {
                self.rows[i * self.row_words..(i + 1) * self.row_words]
                    .iter()
                    .map(|w| w.count_ones() as usize)
                    .sum()
            })
            .collect()
    }

    pub fn total_ones(&self) -> usize {
        self.col_weights.iter().sum()
    }

    fn column_bits(&self, j: usize) -> &[u64] {
        &self.cols[j * self.col_words..(j + 1) * self.col_words]
    }

    /// Number of data pieces shared by workers `a` and `b`.
    pub fn intersection(&self, a: usize, b: usize) -> usize {
        self.column_bits(a)
            .iter()
            .zip(self.column_bits(b))
            .map(|(x, y)| (x & y).count_ones() as usize)
            .sum()
    }

    /// Full `n x n` Gram matrix `G^T G`, row-major.
    pub fn gram(&self) -> Vec<u32> {
        let n = self.n;
        let mut gram = vec![0u32; n * n];
        for a in 0..n {
            gram[a * n + a] = self.col_weights[a] as u32;
            for b in a + 1..n {
                let c = self.intersection(a, b) as u32;
                gram[a * n + b] = c;
                gram[b * n + a] = c;
            }
        }
        gram
    }

    /// Rows as 0/1 byte vectors.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.k)
            .map(|i| (0..self.n).map(|j| self.get(i, j) as u8).collect())
            .collect()
    }

    /// Returns the matrix with `out[i][j] = self[row_perm[i]][col_perm[j]]`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Result<Self> {
        if !is_permutation(row_perm, self.k) || !is_permutation(col_perm, self.n) {
            return Err(Error::DimensionMismatch(
                "row/column permutations do not match the matrix shape".into(),
            ));
        }
        Self::from_fn(self.k, self.n, |i, j| self.get(row_perm[i], col_perm[j]))
    }

    /// Keeps only the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.n) {
            return Err(Error::DimensionMismatch(format!(
                "column {bad} out of range for n = {}",
                self.n
            )));
        }
        Self::from_fn(self.k, cols.len(), |i, j| self.get(i, cols[j]))
    }

    /// Text form: a `k n` header line, then `k` lines of `n` characters in `{0,1}`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.k * (self.n + 1) + 16);
        out.push_str(&format!("{} {}\n", self.k, self.n));
        for i in 0..self.k {
            for j in 0..self.n {
                out.push(if self.get(i, j) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty matrix file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad matrix header `{header}`: {e}")))?;
        let [k, n] = dims[..] else {
            return Err(Error::Config(format!(
                "matrix header must be `k n`, got `{header}`"
            )));
        };
        let mut rows = Vec::with_capacity(k);
        for line in lines {
            let row: Vec<u8> = line
                .trim()
                .chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    other => Err(Error::Config(format!("bad matrix character `{other}`"))),
                })
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(Error::Config(format!(
                    "matrix row {} has {} characters, expected {n}",
                    rows.len(),
                    row.len()
                )));
            }
            rows.push(row);
        }
        if rows.len() != k {
            return Err(Error::Config(format!(
                "matrix file declares {k} rows but has {}",
                rows.len()
            )));
        }
        Self::from_rows(&rows)
    }
}

impl fmt::Debug for EncodingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EncodingMatrix({}x{})\n{}", self.k, self.n, self.to_text())
    }
}

fn is_permutation(perm: &[usize], len: usize) -> bool {
    if perm.len() != len {
        return false;
    }
    let mut seen = vec![false; len];
    perm.iter()
        .all(|&p| p < len && !std::mem::replace(&mut seen[p], true))
}

/// `(n, k, l, r, lambda)` parameters of a gradient code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeParams {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub r: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<usize>,
}

impl CodeParams {
    pub fn fractional_redundancy(&self) -> f64 {
        self.r as f64 / self.n as f64
    }
}

/// Parameters of an `(n, k, l, r)` fractional repetition code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrcParams {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub r: usize,
}

impl FrcParams {
    pub fn new(n: usize, k: usize, l: usize, r: usize) -> Result<Self> {
        let p = FrcParams { n, k, l, r };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        let FrcParams { n, k, l, r } = *self;
        if n == 0 || k == 0 || l == 0 || r == 0 {
            return Err(Error::DimensionMismatch(format!(
                "FRC({n},{k},{l},{r}) needs positive parameters"
            )));
        }
        if k % l != 0 || n % r != 0 || k / l != n / r {
            return Err(Error::DimensionMismatch(format!(
                "FRC({n},{k},{l},{r}) needs l | k, r | n and k/l = n/r"
            )));
        }
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        self.n / self.r
    }
}

/// Parameters of a BIBD gradient code with uniform pairwise intersections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibdParams {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub r: usize,
    pub lambda: usize,
}

impl From<BibdParams> for CodeParams {
    fn from(b: BibdParams) -> Self {
        CodeParams {
            n: b.n,
            k: b.k,
            l: b.l,
            r: b.r,
            lambda: Some(b.lambda),
        }
    }
}

impl From<FrcParams> for CodeParams {
    fn from(f: FrcParams) -> Self {
        CodeParams {
            n: f.n,
            k: f.k,
            l: f.l,
            r: f.r,
            lambda: None,
        }
    }
}

pub fn build_frc(n: usize, k: usize, l: usize, r: usize) -> Result<EncodingMatrix> {
    let p = FrcParams::new(n, k, l, r)?;
    build_frc_from(&p)
}

pub fn build_frc_from(p: &FrcParams) -> Result<EncodingMatrix> {
    p.check()?;
    EncodingMatrix::from_fn(p.k, p.n, |i, j| i / p.l == j / p.r)
}

/// Symmetric designs realized from cyclic difference sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogDesign {
    /// (7, 3, 1): the Fano plane.
    Fano,
    /// (11, 5, 2) biplane.
    Biplane11,
    /// (13, 4, 1): projective plane of order 3.
    Pg2_3,
    /// (21, 5, 1): projective plane of order 4.
    Pg2_4,
}

impl CatalogDesign {
    pub const ALL: [CatalogDesign; 4] = [
        CatalogDesign::Fano,
        CatalogDesign::Biplane11,
        CatalogDesign::Pg2_3,
        CatalogDesign::Pg2_4,
    ];

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "fano" | "pg2_2" => Ok(CatalogDesign::Fano),
            "biplane11" => Ok(CatalogDesign::Biplane11),
            "pg2_3" => Ok(CatalogDesign::Pg2_3),
            "pg2_4" => Ok(CatalogDesign::Pg2_4),
            _ => Err(Error::UnknownDesign(name.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CatalogDesign::Fano => "fano",
            CatalogDesign::Biplane11 => "biplane11",
            CatalogDesign::Pg2_3 => "pg2_3",
            CatalogDesign::Pg2_4 => "pg2_4",
        }
    }

    pub fn modulus(self) -> usize {
        match self {
            CatalogDesign::Fano => 7,
            CatalogDesign::Biplane11 => 11,
            CatalogDesign::Pg2_3 => 13,
            CatalogDesign::Pg2_4 => 21,
        }
    }

    pub fn difference_set(self) -> &'static [usize] {
        match self {
            CatalogDesign::Fano => &[1, 2, 4],
            CatalogDesign::Biplane11 => &[1, 3, 4, 5, 9],
            CatalogDesign::Pg2_3 => &[0, 1, 3, 9],
            CatalogDesign::Pg2_4 => &[3, 6, 7, 12, 14],
        }
    }

    pub fn params(self) -> BibdParams {
        let v = self.modulus();
        let l = self.difference_set().len();
        // symmetric design: l(l-1) = lambda(v-1)
        let lambda = l * (l - 1) / (v - 1);
        BibdParams {
            n: v,
            k: v,
            l,
            r: l,
            lambda,
        }
    }

    /// Incidence matrix: worker `j` holds the translate `D + j (mod v)`.
    pub fn build(self) -> EncodingMatrix {
        let v = self.modulus();
        let mut member = vec![false; v];
        for &d in self.difference_set() {
            member[d] = true;
        }
        EncodingMatrix::from_fn(v, v, |i, j| member[(i + v - j) % v])
            .expect("catalog designs are non-empty")
    }
}

pub fn build_catalog_bibd(name: &str) -> Result<(EncodingMatrix, CodeParams)> {
    let design = CatalogDesign::from_name(name)?;
    Ok((design.build(), design.params().into()))
}

/// Kronecker product with the default entry cap.
pub fn kronecker(a: &EncodingMatrix, b: &EncodingMatrix) -> Result<EncodingMatrix> {
    kronecker_with_cap(a, b, Caps::default().matrix_entries)
}

/// Entry `((i1, i2), (j1, j2))` of the result is `a[i1][j1] * b[i2][j2]`,
/// with row index `i1 * k2 + i2` and column index `j1 * n2 + j2`.
pub fn kronecker_with_cap(
    a: &EncodingMatrix,
    b: &EncodingMatrix,
    cap: usize,
) -> Result<EncodingMatrix> {
    let (k1, n1, k2, n2) = (a.k, a.n, b.k, b.n);
    let rows = k1.checked_mul(k2);
    let cols = n1.checked_mul(n2);
    match (rows, cols) {
        (Some(rows), Some(cols)) if rows.checked_mul(cols).is_some_and(|e| e <= cap) => {
            EncodingMatrix::from_fn(rows, cols, |i, j| {
                a.get(i / k2, j / n2) && b.get(i % k2, j % n2)
            })
        }
        _ => Err(Error::SizeOverflow {
            rows: k1.saturating_mul(k2),
            cols: n1.saturating_mul(n2),
            cap,
        }),
    }
}

/// Row and column permutations taking `A ⊗ B` to `B ⊗ A`:
/// `(B ⊗ A)[i][j] = (A ⊗ B)[rows[i]][cols[j]]`.
pub fn kronecker_swap_permutations(
    (k1, n1): (usize, usize),
    (k2, n2): (usize, usize),
) -> (Vec<usize>, Vec<usize>) {
    // B ⊗ A row i = (i2, i1) with i = i2 * k1 + i1; in A ⊗ B that is i1 * k2 + i2.
    let rows = (0..k1 * k2).map(|i| (i % k1) * k2 + i / k1).collect();
    let cols = (0..n1 * n2).map(|j| (j % n1) * n2 + j / n1).collect();
    (rows, cols)
}

/// Row and column orders under which `F1 ⊗ F2` reads as the FRC
/// `(n1 n2, k1 k2, l1 l2, r1 r2)`: `perm[new] = old`.
pub fn frc_product_order(f1: &FrcParams, f2: &FrcParams) -> (Vec<usize>, Vec<usize>) {
    let order = |outer: usize, inner: usize, size1: usize, size2: usize| -> Vec<usize> {
        // index (a, b) of the product; group by (a / size1, b / size2)
        let blocks2 = inner / size2;
        let mut keyed: Vec<(usize, usize, usize)> = (0..outer * inner)
            .map(|idx| {
                let (a, b) = (idx / inner, idx % inner);
                let block = (a / size1) * blocks2 + b / size2;
                let offset = (a % size1) * size2 + b % size2;
                (block, offset, idx)
            })
            .collect();
        keyed.sort_unstable();
        keyed.into_iter().map(|(_, _, idx)| idx).collect()
    };
    (
        order(f1.k, f2.k, f1.l, f2.l),
        order(f1.n, f2.n, f1.r, f2.r),
    )
}

/// Structural summary of an encoding matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub k: usize,
    pub n: usize,
    pub total_ones: usize,
    pub column_weights: BTreeSet<usize>,
    pub row_weights: BTreeSet<usize>,
    /// Multiset of intersections over distinct column pairs: value -> count.
    pub intersections: BTreeMap<usize, usize>,
    pub zero_columns: usize,
    /// Constant column weight `l` and constant row weight `r`.
    pub is_gc: bool,
    /// Set when every pair of distinct columns shares exactly `lambda` rows.
    pub lambda_uniform: Option<usize>,
    pub params: Option<CodeParams>,
}

impl ValidationReport {
    pub fn is_lambda_gc(&self) -> bool {
        self.is_gc && self.lambda_uniform.is_some()
    }
}

pub fn validate(g: &EncodingMatrix) -> ValidationReport {
    let column_weights: BTreeSet<usize> = g.column_weights().iter().copied().collect();
    let row_weight_list = g.row_weights();
    let row_weights: BTreeSet<usize> = row_weight_list.iter().copied().collect();
    let mut intersections = BTreeMap::new();
    for a in 0..g.n() {
        for b in a + 1..g.n() {
            *intersections.entry(g.intersection(a, b)).or_insert(0) += 1;
        }
    }
    let is_gc = column_weights.len() == 1 && row_weights.len() == 1;
    let lambda_uniform = match intersections.len() {
        1 => intersections.keys().next().copied(),
        // a single worker has no pairs; treat it as vacuously uniform with lambda = 0
        0 => Some(0),
        _ => None,
    };
    let params = is_gc.then(|| CodeParams {
        n: g.n(),
        k: g.k(),
        l: *column_weights.first().unwrap(),
        r: *row_weights.first().unwrap(),
        lambda: lambda_uniform,
    });
    ValidationReport {
        k: g.k(),
        n: g.n(),
        total_ones: g.total_ones(),
        zero_columns: g.column_weights().iter().filter(|&&w| w == 0).count(),
        column_weights,
        row_weights,
        intersections,
        is_gc,
        lambda_uniform,
        params,
    }
}

/// Declarative recipe for an encoding matrix.
///
/// JSON form: `{"type":"frc","n":6,"k":6,"l":2,"r":2}`,
/// `{"type":"catalog","name":"fano"}`,
/// `{"type":"prob_bibd","n":7,"k":7,"l":3,"lambda":2,"seed":1}`,
/// `{"type":"kronecker","left":{...},"right":{...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodeDescriptor {
    Frc {
        n: usize,
        k: usize,
        l: usize,
        r: usize,
    },
    Catalog {
        name: String,
    },
    ProbBibd {
        n: usize,
        k: usize,
        l: usize,
        lambda: usize,
        seed: u64,
    },
    Kronecker {
        left: Box<CodeDescriptor>,
        right: Box<CodeDescriptor>,
    },
}

/// Known structure of a descriptor, used to pick formulas, bounds and
/// structured adversaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodeStructure {
    Frc(FrcParams),
    Bibd(BibdParams),
    ProbBibd {
        n: usize,
        k: usize,
        l: usize,
        lambda: usize,
    },
    Kronecker(Box<CodeStructure>, Box<CodeStructure>),
}

impl CodeDescriptor {
    pub fn frc(n: usize, k: usize, l: usize, r: usize) -> Self {
        CodeDescriptor::Frc { n, k, l, r }
    }

    pub fn catalog(name: &str) -> Self {
        CodeDescriptor::Catalog {
            name: name.to_string(),
        }
    }

    pub fn kron(left: CodeDescriptor, right: CodeDescriptor) -> Self {
        CodeDescriptor::Kronecker {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid code descriptor: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("descriptor serialization cannot fail")
    }

    pub fn depth(&self) -> usize {
        match self {
            CodeDescriptor::Kronecker { left, right } => 1 + left.depth().max(right.depth()),
            _ => 1,
        }
    }

    pub fn label(&self) -> String {
        match self {
            CodeDescriptor::Frc { n, k, l, r } => format!("frc({n},{k},{l},{r})"),
            CodeDescriptor::Catalog { name } => name.clone(),
            CodeDescriptor::ProbBibd {
                n,
                k,
                l,
                lambda,
                seed,
            } => format!("prob_bibd({n},{k},{l},{lambda};seed={seed})"),
            CodeDescriptor::Kronecker { left, right } => {
                format!("kron({},{})", left.label(), right.label())
            }
        }
    }

    pub fn structure(&self) -> Result<CodeStructure> {
        Ok(match self {
            CodeDescriptor::Frc { n, k, l, r } => CodeStructure::Frc(FrcParams::new(*n, *k, *l, *r)?),
            CodeDescriptor::Catalog { name } => {
                CodeStructure::Bibd(CatalogDesign::from_name(name)?.params())
            }
            CodeDescriptor::ProbBibd { n, k, l, lambda, .. } => CodeStructure::ProbBibd {
                n: *n,
                k: *k,
                l: *l,
                lambda: *lambda,
            },
            CodeDescriptor::Kronecker { left, right } => CodeStructure::Kronecker(
                Box::new(left.structure()?),
                Box::new(right.structure()?),
            ),
        })
    }

    pub fn build(&self, caps: &Caps) -> Result<EncodingMatrix> {
        match self {
            CodeDescriptor::Frc { n, k, l, r } => {
                let p = FrcParams::new(*n, *k, *l, *r)?;
                if n.saturating_mul(*k) > caps.matrix_entries {
                    return Err(Error::SizeOverflow {
                        rows: *k,
                        cols: *n,
                        cap: caps.matrix_entries,
                    });
                }
                build_frc_from(&p)
            }
            CodeDescriptor::Catalog { name } => Ok(build_catalog_bibd(name)?.0),
            CodeDescriptor::ProbBibd {
                n,
                k,
                l,
                lambda,
                seed,
            } => {
                if n.saturating_mul(*k) > caps.matrix_entries {
                    return Err(Error::SizeOverflow {
                        rows: *k,
                        cols: *n,
                        cap: caps.matrix_entries,
                    });
                }
                let dist = probbibd::solve_distribution(*n, *k, *l, *lambda)?;
                probbibd::sample_code(&dist, *k, *seed)
            }
            CodeDescriptor::Kronecker { left, right } => {
                let a = left.build(caps)?;
                let b = right.build(caps)?;
                kronecker_with_cap(&a, &b, caps.matrix_entries)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_intersections(g: &EncodingMatrix) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for a in 0..g.n() {
            for b in a + 1..g.n() {
                let c = (0..g.k()).filter(|&i| g.get(i, a) && g.get(i, b)).count();
                *out.entry(c).or_insert(0) += 1;
            }
        }
        out
    }

    #[test]
    fn frc_4422_is_two_diagonal_blocks() {
        let g = build_frc(4, 4, 2, 2).unwrap();
        assert_eq!(g.to_text(), "4 4\n1100\n1100\n0011\n0011\n");
    }

    #[test]
    fn frc_6622_reports_l2_r2() {
        let g = build_frc(6, 6, 2, 2).unwrap();
        assert_eq!(
            g.to_text(),
            "6 6\n110000\n110000\n001100\n001100\n000011\n000011\n"
        );
        let p = validate(&g).params.unwrap();
        assert_eq!((p.l, p.r), (2, 2));
    }

    #[test]
    fn frc_6423_matches_definition() {
        let g = build_frc(6, 4, 2, 3).unwrap();
        assert_eq!(6 * 2, 4 * 3);
        for i in 0..4 {
            for j in 0..6 {
                let expected = (i < 2 && j < 3) || (i >= 2 && j >= 3);
                assert_eq!(g.get(i, j), expected, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn frc_rejects_bad_dimensions() {
        assert!(matches!(build_frc(6, 6, 4, 2), Err(Error::DimensionMismatch(_))));
        assert!(matches!(build_frc(6, 6, 2, 4), Err(Error::DimensionMismatch(_))));
        assert!(matches!(build_frc(6, 4, 2, 2), Err(Error::DimensionMismatch(_))));
        assert!(matches!(build_frc(49, 49, 9, 9), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn catalog_designs_have_uniform_lambda() {
        let expected = [
            ("fano", (7, 3, 1)),
            ("biplane11", (11, 5, 2)),
            ("pg2_3", (13, 4, 1)),
            ("pg2_4", (21, 5, 1)),
        ];
        for (name, (v, l, lambda)) in expected {
            let (g, p) = build_catalog_bibd(name).unwrap();
            assert_eq!((p.n, p.k, p.l, p.r, p.lambda), (v, v, l, l, Some(lambda)));
            let pairs = brute_intersections(&g);
            assert_eq!(pairs.len(), 1, "{name}: {pairs:?}");
            assert_eq!(pairs.get(&lambda), Some(&(v * (v - 1) / 2)));
            assert!(g.column_weights().iter().all(|&w| w == l));
            assert!(g.row_weights().iter().all(|&w| w == l));
            // BIBD gradient code constraint r(l - 1) = lambda (k - 1)
            assert_eq!(l * (l - 1), lambda * (v - 1));
        }
    }

    #[test]
    fn unknown_design_is_an_error() {
        assert!(matches!(
            build_catalog_bibd("pg2_5"),
            Err(Error::UnknownDesign(_))
        ));
    }

    #[test]
    fn kronecker_of_frcs_is_an_frc() {
        // F ⊗ F has the FRC(16,16,4,4) block structure only after regrouping
        // rows and columns by (block1, block2); entrywise it differs.
        let f = build_frc(4, 4, 2, 2).unwrap();
        let prod = kronecker(&f, &f).unwrap();
        let direct = build_frc(16, 16, 4, 4).unwrap();
        assert_ne!(prod, direct);
        let p = FrcParams::new(4, 4, 2, 2).unwrap();
        let (rows, cols) = frc_product_order(&p, &p);
        assert_eq!(prod.permuted(&rows, &cols).unwrap(), direct);
        let rep = validate(&prod);
        assert_eq!(rep.params.map(|p| (p.l, p.r)), Some((4, 4)));
    }

    #[test]
    fn frc_product_order_gives_an_frc() {
        let f1 = FrcParams::new(4, 4, 2, 2).unwrap();
        let f2 = FrcParams::new(6, 3, 1, 2).unwrap();
        let g = kronecker(&build_frc(4, 4, 2, 2).unwrap(), &build_frc(6, 3, 1, 2).unwrap()).unwrap();
        let (rows, cols) = frc_product_order(&f1, &f2);
        let canon = g.permuted(&rows, &cols).unwrap();
        assert_eq!(canon, build_frc(24, 12, 2, 4).unwrap());
    }

    #[test]
    fn kronecker_identity() {
        let one = EncodingMatrix::from_rows(&[[1u8]]).unwrap();
        let (b, _) = build_catalog_bibd("biplane11").unwrap();
        assert_eq!(kronecker(&one, &b).unwrap(), b);
        assert_eq!(kronecker(&b, &one).unwrap(), b);
    }

    #[test]
    fn kronecker_fano_squared() {
        let (f, _) = build_catalog_bibd("fano").unwrap();
        let g = kronecker(&f, &f).unwrap();
        assert_eq!((g.k(), g.n()), (49, 49));
        let rep = validate(&g);
        assert_eq!(rep.column_weights, BTreeSet::from([9]));
        assert_eq!(rep.row_weights, BTreeSet::from([9]));
        // same block or same class: 3 shared pieces; otherwise 1
        let expected = BTreeMap::from([(1, 882), (3, 294)]);
        assert_eq!(rep.intersections, expected);
        assert_eq!(brute_intersections(&g), expected);
        assert_eq!(rep.lambda_uniform, None);
    }

    #[test]
    fn kronecker_respects_cap() {
        let (f, _) = build_catalog_bibd("fano").unwrap();
        assert!(matches!(
            kronecker_with_cap(&f, &f, 49 * 49 - 1),
            Err(Error::SizeOverflow { .. })
        ));
    }

    #[test]
    fn kronecker_commutes_up_to_permutation() {
        let a = build_frc(4, 4, 2, 2).unwrap();
        let (b, _) = build_catalog_bibd("fano").unwrap();
        let ab = kronecker(&a, &b).unwrap();
        let ba = kronecker(&b, &a).unwrap();
        let (rows, cols) = kronecker_swap_permutations((a.k(), a.n()), (b.k(), b.n()));
        assert_eq!(ab.permuted(&rows, &cols).unwrap(), ba);
    }

    #[test]
    fn validate_frc_intersections() {
        let rep = validate(&build_frc(4, 4, 2, 2).unwrap());
        assert_eq!(rep.intersections, BTreeMap::from([(0, 4), (2, 2)]));
        assert!(rep.is_gc);
        assert_eq!(rep.lambda_uniform, None);
    }

    #[test]
    fn fano_validates_as_lambda_gc() {
        let (g, _) = build_catalog_bibd("fano").unwrap();
        let rep = validate(&g);
        assert!(rep.is_lambda_gc());
        assert_eq!(
            rep.params,
            Some(CodeParams {
                n: 7,
                k: 7,
                l: 3,
                r: 3,
                lambda: Some(1)
            })
        );
    }

    #[test]
    fn text_format_round_trip_and_errors() {
        let (g, _) = build_catalog_bibd("pg2_3").unwrap();
        assert_eq!(EncodingMatrix::from_text(&g.to_text()).unwrap(), g);
        assert!(EncodingMatrix::from_text("2 2\n10\n").is_err());
        assert!(EncodingMatrix::from_text("1 2\n12\n").is_err());
        assert!(EncodingMatrix::from_text("x\n").is_err());
    }

    #[test]
    fn descriptor_json_schema() {
        let d = CodeDescriptor::kron(CodeDescriptor::catalog("fano"), CodeDescriptor::frc(4, 4, 2, 2));
        let json = d.to_json();
        assert_eq!(
            json,
            r#"{"type":"kronecker","left":{"type":"catalog","name":"fano"},"right":{"type":"frc","n":4,"k":4,"l":2,"r":2}}"#
        );
        assert_eq!(CodeDescriptor::from_json(&json).unwrap(), d);
        assert_eq!(d.depth(), 2);
        assert!(CodeDescriptor::from_json(r#"{"type":"frc","n":4}"#).is_err());
        assert!(CodeDescriptor::from_json(r#"{"type":"hadamard"}"#).is_err());
    }

    #[test]
    fn descriptor_builds_nested_catalog_product() {
        let d = CodeDescriptor::kron(CodeDescriptor::catalog("fano"), CodeDescriptor::catalog("fano"));
        let g = d.build(&Caps::default()).unwrap();
        assert_eq!((g.k(), g.n()), (49, 49));
    }
}
