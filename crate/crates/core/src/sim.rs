//! Coded gradient descent on synthetic least-squares data.
//!
//! Each data piece `i` contributes the gradient of `(x_i^T θ - y_i)^2 / 2`.
//! Worker `j` returns the sum of the gradients of the pieces it holds, the
//! master combines the surviving sums with a decoding vector and takes the
//! step `θ <- θ - (α / k) ĝ`. An uncoded run with the exact gradient sum is
//! advanced alongside as the reference trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::{validate, CodeDescriptor, EncodingMatrix};
use crate::decoding::{closed_form_decoding, GramCache, Solver, StragglerScenario};
use crate::error::{Error, Result};
use crate::tol::Caps;
use crate::worstcase::{sample_stragglers, structured_candidates, worst_case_auto, Method};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    /// `k` feature vectors of length `p`.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub theta_star: Vec<f64>,
}

impl Dataset {
    pub fn k(&self) -> usize {
        self.x.len()
    }

    pub fn p(&self) -> usize {
        self.theta_star.len()
    }

    /// `(1/k) sum_i (x_i^T θ - y_i)^2 / 2`.
    pub fn loss(&self, theta: &[f64]) -> f64 {
        let total: f64 = self
            .x
            .iter()
            .zip(&self.y)
            .map(|(x, y)| (dot(x, theta) - y).powi(2) / 2.0)
            .sum();
        total / self.k() as f64
    }

    /// Per-piece gradients `f_i = (x_i^T θ - y_i) x_i`.
    pub fn piece_gradients(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(x, y)| {
                let r = dot(x, theta) - y;
                x.iter().map(|v| r * v).collect()
            })
            .collect()
    }

    /// Step size `1 / (2 λ_max((1/k) X^T X))`.
    pub fn default_learning_rate(&self) -> f64 {
        let lmax = self.lipschitz();
        if lmax > 0.0 {
            1.0 / (2.0 * lmax)
        } else {
            1.0
        }
    }

    /// Largest eigenvalue of `(1/k) X^T X` by power iteration.
    pub fn lipschitz(&self) -> f64 {
        let p = self.p();
        let k = self.k() as f64;
        let apply = |v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; p];
            for x in &self.x {
                let c = dot(x, v) / k;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += c * xi;
                }
            }
            out
        };
        let mut v = vec![1.0 / (p as f64).sqrt(); p];
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = apply(&v);
            let norm = dot(&w, &w).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = dot(&v, &w);
            v = w.into_iter().map(|x| x / norm).collect();
            if (next - lambda).abs() <= 1e-13 * next.abs() {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear-regression data `y = X θ* + noise ε` with standard normal `X`,
/// `θ*` and `ε`.
pub fn make_dataset(k: usize, p: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if k == 0 || p == 0 {
        return Err(Error::InvalidParams("need k >= 1 and p >= 1".into()));
    }
    if !noise.is_finite() {
        return Err(Error::InvalidParams("noise must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let theta_star: Vec<f64> = (0..p).map(|_| normal()).collect();
    let x: Vec<Vec<f64>> = (0..k).map(|_| (0..p).map(|_| normal()).collect()).collect();
    let y = x
        .iter()
        .map(|xi| dot(xi, &theta_star) + noise * normal())
        .collect();
    Ok(Dataset { x, y, theta_star })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    /// Least squares on the surviving columns.
    Optimal,
    /// `l / (l + λ (n - s - 1))` on every survivor; needs a lambda-uniform code.
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StragglerPolicy {
    /// The worst straggler set of size `s`, found once per code.
    AdversarialWorstCase { s: usize },
    /// A fresh uniform `s`-subset every iteration.
    RandomUniform { s: usize, seed: u64 },
    Fixed { stragglers: Vec<usize> },
}

impl StragglerPolicy {
    pub fn s(&self) -> usize {
        match self {
            StragglerPolicy::AdversarialWorstCase { s } | StragglerPolicy::RandomUniform { s, .. } => *s,
            StragglerPolicy::Fixed { stragglers } => stragglers.len(),
        }
    }
}

/// Adversarial scenario found for a code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversaryInfo {
    pub stragglers: Vec<usize>,
    pub error: f64,
    pub method: Method,
    pub downgraded: bool,
}

/// A policy bound to one code.
#[derive(Debug, Clone)]
pub struct ResolvedPolicy {
    n: usize,
    policy: StragglerPolicy,
    fixed: Option<StragglerScenario>,
    pub adversary: Option<AdversaryInfo>,
}

impl ResolvedPolicy {
    /// Binds `policy` to `g`. The adversarial search runs here, once.
    pub fn resolve(
        policy: &StragglerPolicy,
        g: &EncodingMatrix,
        descriptor: Option<&CodeDescriptor>,
        caps: &Caps,
        trials: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = g.n();
        let s = policy.s();
        if s >= n {
            return Err(Error::PolicyInfeasible { s, n });
        }
        let (fixed, adversary) = match policy {
            StragglerPolicy::AdversarialWorstCase { s } => {
                let candidates = match descriptor.map(CodeDescriptor::structure).transpose()? {
                    Some(st) => structured_candidates(&st, *s)?,
                    None => vec![StragglerScenario::new(n, 0..*s)?],
                };
                let auto = worst_case_auto(g, *s, caps.subsets, trials, seed, &candidates)?;
                let info = AdversaryInfo {
                    stragglers: auto.result.witness.stragglers.clone(),
                    error: auto.result.error,
                    method: auto.result.method,
                    downgraded: auto.downgraded,
                };
                (Some(auto.result.witness), Some(info))
            }
            StragglerPolicy::Fixed { stragglers } => {
                let sc = StragglerScenario::new(n, stragglers.iter().copied())?;
                if sc.s() != stragglers.len() {
                    return Err(Error::Config("fixed stragglers contain duplicates".into()));
                }
                (Some(sc), None)
            }
            StragglerPolicy::RandomUniform { .. } => (None, None),
        };
        Ok(ResolvedPolicy {
            n,
            policy: policy.clone(),
            fixed,
            adversary,
        })
    }

    /// Scenario in force at iteration `t`.
    pub fn scenario(&self, t: usize) -> Result<StragglerScenario> {
        match (&self.fixed, &self.policy) {
            (Some(sc), _) => Ok(sc.clone()),
            (None, StragglerPolicy::RandomUniform { s, seed }) => {
                StragglerScenario::new(self.n, sample_stragglers(self.n, *s, *seed, t as u64))
            }
            _ => Err(Error::InternalInconsistency("unresolved straggler policy".into())),
        }
    }
}

/// Decoding vector for the survivors of `scenario`.
pub fn decoding_vector(
    g: &EncodingMatrix,
    cache: &GramCache,
    scenario: &StragglerScenario,
    decoder: DecoderKind,
) -> Result<Vec<f64>> {
    if scenario.survivors.is_empty() {
        return Ok(Vec::new());
    }
    match decoder {
        DecoderKind::Optimal => Solver::new().decode(cache, &scenario.survivors),
        DecoderKind::ClosedForm => {
            let rep = validate(g);
            let params = rep.params.filter(|p| p.lambda.is_some()).ok_or_else(|| {
                Error::InvalidParams("closed-form decoder needs a lambda-uniform code".into())
            })?;
            let lambda = params.lambda.unwrap_or(0);
            Ok(closed_form_decoding(params.l, lambda, g.n(), scenario.s())?.values)
        }
    }
}

/// Partial sums returned by the surviving workers, in survivor order.
pub fn worker_sums(g: &EncodingMatrix, f: &[Vec<f64>], survivors: &[usize]) -> Vec<Vec<f64>> {
    let p = f.first().map_or(0, Vec::len);
    survivors
        .par_iter()
        .map(|&j| {
            let mut acc = vec![0.0; p];
            for (i, fi) in f.iter().enumerate() {
                if g.get(i, j) {
                    for (a, v) in acc.iter_mut().zip(fi) {
                        *a += v;
                    }
                }
            }
            acc
        })
        .collect()
}

/// `f G_U v`, the decoded approximation of the gradient sum.
pub fn decoded_sum(g: &EncodingMatrix, f: &[Vec<f64>], survivors: &[usize], v: &[f64]) -> Vec<f64> {
    let p = f.first().map_or(0, Vec::len);
    let sums = worker_sums(g, f, survivors);
    let mut out = vec![0.0; p];
    for (w, c) in sums.iter().zip(v) {
        for (o, x) in out.iter_mut().zip(w) {
            *o += c * x;
        }
    }
    out
}

fn exact_sum(f: &[Vec<f64>]) -> Vec<f64> {
    let p = f.first().map_or(0, Vec::len);
    let mut out = vec![0.0; p];
    for fi in f {
        for (o, x) in out.iter_mut().zip(fi) {
            *o += x;
        }
    }
    out
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `||f G_U v - f 1_k||` for given per-piece gradients.
pub fn gradient_sum_deviation(
    g: &EncodingMatrix,
    f: &[Vec<f64>],
    scenario: &StragglerScenario,
    v: &[f64],
) -> Result<f64> {
    if f.len() != g.k() {
        return Err(Error::ShapeMismatch(format!(
            "{} per-piece gradients for k = {}",
            f.len(),
            g.k()
        )));
    }
    let approx = decoded_sum(g, f, &scenario.survivors, v);
    Ok(distance(&approx, &exact_sum(f)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GDState {
    pub theta: Vec<f64>,
    /// Uncoded exact-GD iterate from the same start.
    pub reference: Vec<f64>,
    pub t: usize,
    pub learning_rate: f64,
    /// Loss at iterations `0..=t`.
    pub loss_history: Vec<f64>,
    /// `||θ - θ_ref||` at iterations `0..=t`.
    pub deviation_history: Vec<f64>,
    /// `||ĝ - f 1_k||` for steps `1..=t`.
    pub grad_deviation_history: Vec<f64>,
}

impl GDState {
    pub fn new(data: &Dataset, learning_rate: f64) -> Self {
        let theta = vec![0.0; data.p()];
        GDState {
            loss_history: vec![data.loss(&theta)],
            deviation_history: vec![0.0],
            grad_deviation_history: Vec::new(),
            reference: theta.clone(),
            theta,
            t: 0,
            learning_rate,
        }
    }
}

/// One coded step with the straggler set `scenario`.
pub fn coded_gd_step(
    state: &GDState,
    data: &Dataset,
    g: &EncodingMatrix,
    scenario: &StragglerScenario,
    v: &[f64],
) -> Result<GDState> {
    if data.k() != g.k() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} pieces, code has k = {}",
            data.k(),
            g.k()
        )));
    }
    if scenario.n != g.n() || v.len() != scenario.survivors.len() {
        return Err(Error::ShapeMismatch("scenario or decoder does not fit the code".into()));
    }
    if scenario.s() >= g.n() {
        return Err(Error::PolicyInfeasible {
            s: scenario.s(),
            n: g.n(),
        });
    }
    let step = state.learning_rate / data.k() as f64;
    let f = data.piece_gradients(&state.theta);
    let approx = decoded_sum(g, &f, &scenario.survivors, v);
    let exact = exact_sum(&f);
    let theta: Vec<f64> = state.theta.iter().zip(&approx).map(|(t, a)| t - step * a).collect();
    let f_ref = data.piece_gradients(&state.reference);
    let reference: Vec<f64> = state
        .reference
        .iter()
        .zip(exact_sum(&f_ref))
        .map(|(t, a)| t - step * a)
        .collect();

    let mut next = state.clone();
    next.t += 1;
    next.loss_history.push(data.loss(&theta));
    next.deviation_history.push(distance(&theta, &reference));
    next.grad_deviation_history.push(distance(&approx, &exact));
    next.theta = theta;
    next.reference = reference;
    Ok(next)
}

/// Runs `iterations` coded steps under a resolved policy.
pub fn run_gd(
    data: &Dataset,
    g: &EncodingMatrix,
    policy: &ResolvedPolicy,
    decoder: DecoderKind,
    learning_rate: f64,
    iterations: usize,
) -> Result<GDState> {
    let cache = GramCache::new(g);
    let mut state = GDState::new(data, learning_rate);
    let mut fixed_v: Option<(StragglerScenario, Vec<f64>)> = None;
    for t in 0..iterations {
        let sc = policy.scenario(t)?;
        let v = match &fixed_v {
            Some((prev, v)) if *prev == sc => v.clone(),
            _ => {
                let v = decoding_vector(g, &cache, &sc, decoder)?;
                fixed_v = Some((sc.clone(), v.clone()));
                v
            }
        };
        state = coded_gd_step(&state, data, g, &sc, &v)?;
        if !state.loss_history.last().is_some_and(|l| l.is_finite()) {
            return Err(Error::NumericalFailure {
                residual: f64::INFINITY,
                tolerance: f64::MAX,
            });
        }
    }
    Ok(state)
}

fn default_dimension() -> usize {
    5
}

fn default_noise() -> f64 {
    0.1
}

fn default_trials() -> usize {
    1000
}

fn default_redundancy_tolerance() -> f64 {
    0.05
}

/// Experiment description read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub codes: Vec<CodeDescriptor>,
    pub policy: StragglerPolicy,
    #[serde(default = "optimal")]
    pub decoder: DecoderKind,
    pub iterations: usize,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub data_seed: u64,
    /// Seed for the adversary search.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_redundancy_tolerance")]
    pub redundancy_tolerance: f64,
}

fn optimal() -> DecoderKind {
    DecoderKind::Optimal
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.codes.is_empty() {
            return Err(Error::Config("`codes` must list at least one descriptor".into()));
        }
        if self.dimension == 0 {
            return Err(Error::Config("`dimension` must be positive".into()));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(Error::Config("`noise` must be finite and non-negative".into()));
        }
        if let Some(a) = self.learning_rate {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Config("`learning_rate` must be positive".into()));
            }
        }
        if self.redundancy_tolerance.is_nan() || self.redundancy_tolerance < 0.0 {
            return Err(Error::Config("`redundancy_tolerance` must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub code: String,
    pub n: usize,
    pub k: usize,
    pub fractional_redundancy: f64,
    pub learning_rate: f64,
    pub s: usize,
    pub adversary: Option<AdversaryInfo>,
    pub final_loss: f64,
    pub final_deviation: f64,
    pub loss_history: Vec<f64>,
    pub deviation_history: Vec<f64>,
    pub grad_deviation_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub iterations: usize,
    pub decoder: DecoderKind,
    pub policy: StragglerPolicy,
    /// Set when the codes' fractional redundancies `r/n` differ by more
    /// than the configured tolerance.
    pub redundancy_mismatch: bool,
    pub runs: Vec<RunReport>,
}

/// Average fraction of workers holding each piece, `total_ones / (k n)`.
/// Equals `r / n` for a code with constant row weight `r`.
pub fn fractional_redundancy(g: &EncodingMatrix) -> f64 {
    g.total_ones() as f64 / (g.k() * g.n()) as f64
}

pub fn redundancy_mismatch(values: &[f64], tol: f64) -> bool {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.len() > 1 && hi - lo > tol
}

pub fn run_experiment(cfg: &ExperimentConfig, caps: &Caps) -> Result<ExperimentReport> {
    cfg.check()?;
    let mut runs = Vec::with_capacity(cfg.codes.len());
    for desc in &cfg.codes {
        let g = desc.build(caps)?;
        let data = make_dataset(g.k(), cfg.dimension, cfg.noise, cfg.data_seed)?;
        let policy = ResolvedPolicy::resolve(&cfg.policy, &g, Some(desc), caps, cfg.trials, cfg.seed)?;
        let lr = cfg.learning_rate.unwrap_or_else(|| data.default_learning_rate());
        let state = run_gd(&data, &g, &policy, cfg.decoder, lr, cfg.iterations)?;
        runs.push(RunReport {
            code: desc.label(),
            n: g.n(),
            k: g.k(),
            fractional_redundancy: fractional_redundancy(&g),
            learning_rate: lr,
            s: cfg.policy.s(),
            adversary: policy.adversary.clone(),
            final_loss: *state.loss_history.last().unwrap(),
            final_deviation: *state.deviation_history.last().unwrap(),
            loss_history: state.loss_history,
            deviation_history: state.deviation_history,
            grad_deviation_history: state.grad_deviation_history,
        });
    }
    let fr: Vec<f64> = runs.iter().map(|r| r.fractional_redundancy).collect();
    Ok(ExperimentReport {
        iterations: cfg.iterations,
        decoder: cfg.decoder,
        policy: cfg.policy.clone(),
        redundancy_mismatch: redundancy_mismatch(&fr, cfg.redundancy_tolerance),
        runs,
    })
}

/// Time series as CSV with columns `code, t, loss, deviation_from_exact_gd`.
pub fn write_series_csv<W: std::io::Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["code", "t", "loss", "deviation_from_exact_gd"])?;
    for run in &report.runs {
        for (t, (loss, dev)) in run.loss_history.iter().zip(&run.deviation_history).enumerate() {
            w.write_record([
                run.code.clone(),
                t.to_string(),
                format!("{loss:.17e}"),
                format!("{dev:.17e}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
