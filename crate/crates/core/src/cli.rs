//! The `gradcode` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{bibd_error, frc_error, pbibd_bound, thm3_error, thm4_bound, thm5_bound};
use crate::codes::{validate, CodeDescriptor, CodeStructure, EncodingMatrix};
use crate::error::{Error, Result};
use crate::probbibd::{expected_error_mc, solve_distribution, Decoder};
use crate::sim::{fractional_redundancy, redundancy_mismatch, run_experiment, write_series_csv, ExperimentConfig};
use crate::tol::Caps;
use crate::worstcase::{
    binomial, exhaustive_worst_case_with_cap, sampled_worst_case, structured_candidates, Method,
};

#[derive(Debug, Parser)]
#[command(name = "gradcode", version, about = "Gradient codes under adversarial stragglers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalOpts,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Random trials for sampled searches and Monte Carlo.
    #[arg(long, global = true, default_value_t = 10_000)]
    pub trials: usize,
    /// Maximum subsets for an exhaustive search (also `GRADCODE_CAP`).
    #[arg(long, global = true)]
    pub cap: Option<u128>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Fail instead of downgrading when the subset cap is exceeded.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchMethod {
    Auto,
    Exhaustive,
    Sampled,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an encoding matrix and write it with its validation report.
    Construct {
        /// Descriptor JSON, a path to a JSON file, or a catalog name.
        #[arg(long, short)]
        descriptor: String,
        #[arg(long, short)]
        out: PathBuf,
        /// Where to write the validation report (default: stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the structure of a matrix file.
    Validate {
        #[arg(long, short)]
        matrix: PathBuf,
    },
    /// Worst-case error per straggler count next to the matching formula.
    ErrorCurve {
        #[arg(long, short)]
        descriptor: String,
        #[command(flatten)]
        range: RangeOpts,
        #[arg(long, value_enum, default_value_t = SearchMethod::Auto)]
        method: SearchMethod,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Error curves of several codes keyed by the fraction of stragglers.
    Compare {
        #[arg(long = "descriptor", short, required = true)]
        descriptors: Vec<String>,
        #[command(flatten)]
        range: RangeOpts,
        #[arg(long, value_enum, default_value_t = SearchMethod::Auto)]
        method: SearchMethod,
        /// Largest allowed spread of `r/n` across the codes.
        #[arg(long, default_value_t = 0.05)]
        redundancy_tol: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo expected error of a probabilistic BIBD code.
    McExpected {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        lambda: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value = "optimal")]
        decoder: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Coded gradient descent driven by a JSON config.
    Simulate {
        #[arg(long, short)]
        config: PathBuf,
        /// Summary JSON path (default: stdout).
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// Time series CSV path.
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RangeOpts {
    /// Straggler counts: `all`, `a..b`, `a..=b` or a comma list.
    #[arg(long = "s", default_value = "all")]
    pub s: String,
    /// Straggler fractions in `[0, 1]`, rounded to counts; overrides `--s`.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Vec<f64>,
}

impl RangeOpts {
    pub fn resolve(&self, n: usize) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = if !self.fractions.is_empty() {
            self.fractions
                .iter()
                .map(|&f| {
                    if (0.0..=1.0).contains(&f) {
                        Ok((f * n as f64).round() as usize)
                    } else {
                        Err(Error::Config(format!("fraction {f} outside [0, 1]")))
                    }
                })
                .collect::<Result<_>>()?
        } else {
            parse_s_range(&self.s, n)?
        };
        out.sort_unstable();
        out.dedup();
        if let Some(&s) = out.iter().find(|&&s| s > n) {
            return Err(Error::Config(format!("straggler count {s} exceeds n = {n}")));
        }
        Ok(out)
    }
}

pub fn parse_s_range(text: &str, n: usize) -> Result<Vec<usize>> {
    let text = text.trim();
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("bad straggler count `{t}`")))
    };
    if text == "all" {
        return Ok((0..=n).collect());
    }
    if let Some((a, b)) = text.split_once("..=") {
        return Ok((num(a)?..=num(b)?).collect());
    }
    if let Some((a, b)) = text.split_once("..") {
        return Ok((num(a)?..num(b)?).collect());
    }
    text.split(',').map(num).collect()
}

/// Reads a descriptor given as inline JSON, a JSON file or a catalog name.
pub fn parse_descriptor(arg: &str) -> Result<CodeDescriptor> {
    let t = arg.trim();
    if t.starts_with('{') {
        return CodeDescriptor::from_json(t);
    }
    let path = Path::new(t);
    if path.is_file() {
        return CodeDescriptor::from_json(&fs::read_to_string(path)?);
    }
    if crate::codes::CatalogDesign::from_name(t).is_ok() {
        return Ok(CodeDescriptor::catalog(t));
    }
    Err(Error::Config(format!(
        "`{t}` is not descriptor JSON, a readable file or a catalog name"
    )))
}

/// One row of an error curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub s: usize,
    pub fraction_straggled: f64,
    pub measured_error: f64,
    pub method: Method,
    pub formula_or_bound: Option<f64>,
    pub bound_name: Option<&'static str>,
    pub witness: Vec<usize>,
    pub warning: Option<&'static str>,
}

pub const CURVE_COLUMNS: [&str; 8] = [
    "s",
    "fraction_straggled",
    "measured_error",
    "method",
    "formula_or_bound",
    "bound_name",
    "witness",
    "warning",
];

impl CurveRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.s.to_string(),
            self.fraction_straggled.to_string(),
            self.measured_error.to_string(),
            self.method.as_str().to_string(),
            self.formula_or_bound.map(|v| v.to_string()).unwrap_or_default(),
            self.bound_name.unwrap_or_default().to_string(),
            join(&self.witness),
            self.warning.unwrap_or_default().to_string(),
        ]
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// Closed form (FRC, BIBD, product FRC) or upper bound matching a structure.
pub fn formula_for(structure: &CodeStructure, s: usize) -> Result<Option<(f64, &'static str)>> {
    Ok(match structure {
        CodeStructure::Frc(p) => Some((frc_error(p.l, p.k, p.r, s as f64)?, "frc")),
        CodeStructure::Bibd(b) => Some((bibd_error(b.n, b.k, b.l, b.lambda, s)?, "bibd")),
        CodeStructure::ProbBibd { n, k, l, lambda } => {
            Some((pbibd_bound(*n, *k, *l, *lambda, s)?.value, "pbibd_expected"))
        }
        CodeStructure::Kronecker(a, b) => match (a.as_ref(), b.as_ref()) {
            (CodeStructure::Frc(f1), CodeStructure::Frc(f2)) => {
                Some((thm3_error(f1, f2, s as f64)?, "thm3"))
            }
            (CodeStructure::Frc(f), CodeStructure::Bibd(b)) | (CodeStructure::Bibd(b), CodeStructure::Frc(f)) => {
                Some((thm4_bound(f, b, s)?.value, "thm4"))
            }
            (CodeStructure::Bibd(b1), CodeStructure::Bibd(b2)) => {
                Some((thm5_bound(b1, b2, s)?.value, "thm5"))
            }
            _ => None,
        },
    })
}

/// Options shared by the worst-case searches of one command.
#[derive(Debug, Clone, Copy)]
pub struct SearchOpts {
    pub method: SearchMethod,
    pub cap: u128,
    pub trials: usize,
    pub seed: u64,
    pub strict: bool,
}

pub fn error_curve(
    desc: &CodeDescriptor,
    g: &EncodingMatrix,
    s_values: &[usize],
    opts: &SearchOpts,
) -> Result<Vec<CurveRow>> {
    let structure = desc.structure()?;
    let n = g.n();
    let mut rows = Vec::with_capacity(s_values.len());
    for &s in s_values {
        if s > n {
            return Err(Error::Config(format!("straggler count {s} exceeds n = {n}")));
        }
        let over_cap = binomial(n, s) > opts.cap;
        let (exhaustive, warning) = match opts.method {
            SearchMethod::Sampled => (false, None),
            _ if over_cap && opts.strict => {
                return Err(Error::CapExceeded {
                    what: "straggler subsets",
                    value: binomial(n, s),
                    cap: opts.cap,
                })
            }
            _ if over_cap => (false, Some("cap_exceeded_downgraded_to_sampled")),
            _ => (true, None),
        };
        let res = if exhaustive {
            exhaustive_worst_case_with_cap(g, s, opts.cap)?
        } else {
            let candidates = structured_candidates(&structure, s)?;
            sampled_worst_case(g, s, opts.trials, opts.seed, &candidates)?
        };
        let formula = formula_for(&structure, s)?;
        rows.push(CurveRow {
            s,
            fraction_straggled: s as f64 / n as f64,
            measured_error: res.error,
            method: res.method,
            formula_or_bound: formula.map(|f| f.0),
            bound_name: formula.map(|f| f.1),
            witness: res.witness.stragglers,
            warning,
        });
    }
    Ok(rows)
}

/// One row of the long-format comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub code: String,
    pub n: usize,
    pub fractional_redundancy: f64,
    #[serde(flatten)]
    pub curve: CurveRow,
    pub redundancy_mismatch: bool,
}

pub const COMPARE_COLUMNS: [&str; 12] = [
    "fraction_straggled",
    "code",
    "n",
    "fractional_redundancy",
    "s",
    "measured_error",
    "method",
    "formula_or_bound",
    "bound_name",
    "witness",
    "warning",
    "redundancy_mismatch",
];

impl CompareRow {
    fn fields(&self) -> Vec<String> {
        let c = self.curve.fields();
        vec![
            c[1].clone(),
            self.code.clone(),
            self.n.to_string(),
            self.fractional_redundancy.to_string(),
            c[0].clone(),
            c[2].clone(),
            c[3].clone(),
            c[4].clone(),
            c[5].clone(),
            c[6].clone(),
            c[7].clone(),
            self.redundancy_mismatch.to_string(),
        ]
    }
}

pub fn compare(
    descs: &[CodeDescriptor],
    range: &RangeOpts,
    opts: &SearchOpts,
    redundancy_tol: f64,
    caps: &Caps,
) -> Result<Vec<CompareRow>> {
    if descs.len() < 2 {
        return Err(Error::Config("compare needs at least two descriptors".into()));
    }
    let mut per_code = Vec::with_capacity(descs.len());
    for d in descs {
        let g = d.build(caps)?;
        let s_values = range.resolve(g.n())?;
        let curve = error_curve(d, &g, &s_values, opts)?;
        per_code.push((d.label(), g.n(), fractional_redundancy(&g), curve));
    }
    let fr: Vec<f64> = per_code.iter().map(|c| c.2).collect();
    let mismatch = redundancy_mismatch(&fr, redundancy_tol);
    let mut rows: Vec<CompareRow> = per_code
        .into_iter()
        .flat_map(|(code, n, frac, curve)| {
            curve.into_iter().map(move |c| CompareRow {
                code: code.clone(),
                n,
                fractional_redundancy: frac,
                curve: c,
                redundancy_mismatch: mismatch,
            })
        })
        .collect();
    // stable: codes keep their input order within a fraction
    rows.sort_by(|a, b| a.curve.fraction_straggled.total_cmp(&b.curve.fraction_straggled));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub params: McParams,
    pub s: usize,
    pub trials: usize,
    pub mean: f64,
    pub stderr: f64,
    pub bound: f64,
    pub decoder: Decoder,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McParams {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub lambda: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn write_table<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn emit(out: &Option<PathBuf>, stdout: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => stdout.write_all(bytes)?,
    }
    Ok(())
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Runs a parsed command, writing results to files or `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let mut caps = Caps::from_env();
    if let Some(cap) = cli.global.cap {
        caps.subsets = cap;
    }
    let g_opts = &cli.global;
    let search = |method| SearchOpts {
        method,
        cap: caps.subsets,
        trials: g_opts.trials,
        seed: g_opts.seed,
        strict: g_opts.strict,
    };
    match cli.command {
        Command::Construct { descriptor, out, report } => {
            let desc = parse_descriptor(&descriptor)?;
            let g = desc.build(&caps)?;
            fs::write(&out, g.to_text())?;
            emit(&report, stdout, &json_bytes(&validate(&g))?)?;
        }
        Command::Validate { matrix } => {
            let g = EncodingMatrix::from_text(&fs::read_to_string(matrix)?)?;
            stdout.write_all(&json_bytes(&validate(&g))?)?;
        }
        Command::ErrorCurve { descriptor, range, method, out } => {
            let desc = parse_descriptor(&descriptor)?;
            let g = desc.build(&caps)?;
            let rows = error_curve(&desc, &g, &range.resolve(g.n())?, &search(method))?;
            let bytes = match g_opts.format {
                Format::Json => json_bytes(&rows)?,
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_table(&mut buf, &CURVE_COLUMNS, rows.iter().map(CurveRow::fields))?;
                    buf
                }
            };
            emit(&out, stdout, &bytes)?;
        }
        Command::Compare { descriptors, range, method, redundancy_tol, out } => {
            let descs = descriptors
                .iter()
                .map(|d| parse_descriptor(d))
                .collect::<Result<Vec<_>>>()?;
            let rows = compare(&descs, &range, &search(method), redundancy_tol, &caps)?;
            let bytes = match g_opts.format {
                Format::Json => json_bytes(&rows)?,
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_table(&mut buf, &COMPARE_COLUMNS, rows.iter().map(CompareRow::fields))?;
                    buf
                }
            };
            emit(&out, stdout, &bytes)?;
        }
        Command::McExpected { n, k, l, lambda, s, decoder, out } => {
            let decoder: Decoder = decoder.parse()?;
            let dist = solve_distribution(n, k, l, lambda)?;
            let est = expected_error_mc(&dist, k, s, g_opts.trials, g_opts.seed, decoder)?;
            let report = McReport {
                params: McParams {
                    n,
                    k,
                    l,
                    lambda,
                    alpha: dist.alpha,
                    beta: dist.beta,
                    gamma: dist.gamma,
                },
                s,
                trials: est.trials,
                mean: est.mean,
                stderr: est.stderr,
                bound: pbibd_bound(n, k, l, lambda, s)?.value,
                decoder,
                seed: g_opts.seed,
            };
            emit(&out, stdout, &json_bytes(&report)?)?;
        }
        Command::Simulate { config, out_json, out_csv } => {
            let cfg = ExperimentConfig::from_json(&fs::read_to_string(config)?)?;
            let report = run_experiment(&cfg, &caps)?;
            if let Some(path) = out_csv {
                write_series_csv(&report, fs::File::create(path)?)?;
            }
            emit(&out_json, stdout, &json_bytes(&report)?)?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return 2;
            }
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
