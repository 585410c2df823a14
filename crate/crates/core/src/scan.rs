//! Range scanner, run configuration and record formatting.

use std::fmt::Display;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::arith::{Factorization, PrimeTable};
use crate::divisors::{dyadic_concentration, DivisorList, DEFAULT_DIVISOR_CAP};
use crate::error::{Error, Result};
use crate::identities::DEFAULT_EQ1_BITSIZE_CAP;
use crate::sum::CompensatedSum;
use crate::vandermonde::{VandermondeReport, DEFAULT_EXACT_CAP};

pub const CSV_HEADER: &str = "n,tau,omega2,is_square,log_v,s,s_star,residual,normalized_residual,lower_ratio,upper_ratio,s_ratio,conc_max,conc_normalized,theta_max";

/// Numbers per work unit handed to a worker.
const CHUNK: u64 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(Error::Config(format!("unknown output format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Largest `tau(n)` for which `V(n)` is computed exactly.
    pub exact_cap: u64,
    /// Relative tolerance for asserted identities and inequalities.
    pub float_tol: f64,
    pub output_format: OutputFormat,
    pub thread_count: usize,
    /// Largest bit size of `n^tau(n)` for the exact divisor-product check.
    pub eq1_bitsize_cap: u64,
    pub divisor_cap: u64,
    /// Scan fails when `lower_ratio` drops below this; 0 records only.
    pub lower_ratio_floor: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            exact_cap: DEFAULT_EXACT_CAP,
            float_tol: 1e-9,
            output_format: OutputFormat::Csv,
            thread_count: std::thread::available_parallelism().map_or(1, |n| n.get()),
            eq1_bitsize_cap: DEFAULT_EQ1_BITSIZE_CAP,
            divisor_cap: DEFAULT_DIVISOR_CAP,
            lower_ratio_floor: 0.0,
        }
    }
}

impl Config {
    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_str(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        match key {
            "exact_cap" => self.exact_cap = parse(key, value)?,
            "float_tol" => self.float_tol = parse(key, value)?,
            "output_format" => self.output_format = value.parse()?,
            "thread_count" => self.thread_count = parse(key, value)?,
            "eq1_bitsize_cap" => self.eq1_bitsize_cap = parse(key, value)?,
            "divisor_cap" => self.divisor_cap = parse(key, value)?,
            "lower_ratio_floor" => self.lower_ratio_floor = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.exact_cap == 0
            || self.thread_count == 0
            || self.eq1_bitsize_cap == 0
            || self.divisor_cap == 0
        {
            return Err(Error::Config(
                "caps and thread_count must be positive".into(),
            ));
        }
        if !(self.float_tol > 0.0 && self.float_tol <= 1e-3) {
            return Err(Error::Config(format!(
                "float_tol = {} outside (0, 1e-3]",
                self.float_tol
            )));
        }
        Ok(())
    }
}

/// One scanned integer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRecord {
    pub n: u64,
    pub tau: u64,
    pub omega2: u64,
    pub is_square: bool,
    pub log_v: f64,
    pub s: f64,
    pub s_star: f64,
    pub residual: f64,
    pub normalized_residual: f64,
    pub lower_ratio: f64,
    pub upper_ratio: f64,
    pub s_ratio: f64,
    pub conc_max: u64,
    pub conc_normalized: f64,
    pub theta_max: f64,
}

impl ScanRecord {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.tau,
            self.omega2,
            self.is_square,
            fmt_g12(self.log_v),
            fmt_g12(self.s),
            fmt_g12(self.s_star),
            fmt_g12(self.residual),
            fmt_g12(self.normalized_residual),
            fmt_g12(self.lower_ratio),
            fmt_g12(self.upper_ratio),
            fmt_g12(self.s_ratio),
            self.conc_max,
            fmt_g12(self.conc_normalized),
            fmt_g12(self.theta_max),
        )
    }

    pub fn to_json(&self) -> String {
        let r = round_g12;
        let rounded = Self {
            log_v: r(self.log_v),
            s: r(self.s),
            s_star: r(self.s_star),
            residual: r(self.residual),
            normalized_residual: r(self.normalized_residual),
            lower_ratio: r(self.lower_ratio),
            upper_ratio: r(self.upper_ratio),
            s_ratio: r(self.s_ratio),
            conc_normalized: r(self.conc_normalized),
            theta_max: r(self.theta_max),
            ..self.clone()
        };
        serde_json::to_string(&rounded).expect("plain struct serializes")
    }
}

/// Extremes over a scan; ties keep the smallest `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSummary {
    pub count: u64,
    pub max_conc_normalized: (f64, u64),
    pub min_lower_ratio: (f64, u64),
    pub max_s_ratio: (f64, u64),
    pub max_normalized_residual: (f64, u64),
}

impl ScanSummary {
    fn new(first: &ScanRecord) -> Self {
        Self {
            count: 0,
            max_conc_normalized: (first.conc_normalized, first.n),
            min_lower_ratio: (first.lower_ratio, first.n),
            max_s_ratio: (first.s_ratio, first.n),
            max_normalized_residual: (first.normalized_residual, first.n),
        }
    }

    fn update(&mut self, r: &ScanRecord) {
        self.count += 1;
        if r.conc_normalized > self.max_conc_normalized.0 {
            self.max_conc_normalized = (r.conc_normalized, r.n);
        }
        if r.lower_ratio < self.min_lower_ratio.0 {
            self.min_lower_ratio = (r.lower_ratio, r.n);
        }
        if r.s_ratio > self.max_s_ratio.0 {
            self.max_s_ratio = (r.s_ratio, r.n);
        }
        if r.normalized_residual > self.max_normalized_residual.0 {
            self.max_normalized_residual = (r.normalized_residual, r.n);
        }
    }
}

impl std::fmt::Display for ScanSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "summary: records={} max_conc_normalized={} at n={} min_lower_ratio={} at n={} max_s_ratio={} at n={} max_normalized_residual={} at n={}",
            self.count,
            fmt_g12(self.max_conc_normalized.0),
            self.max_conc_normalized.1,
            fmt_g12(self.min_lower_ratio.0),
            self.min_lower_ratio.1,
            fmt_g12(self.max_s_ratio.0),
            self.max_s_ratio.1,
            fmt_g12(self.max_normalized_residual.0),
            self.max_normalized_residual.1,
        )
    }
}

fn violation(n: u64, message: String) -> Error {
    Error::Invariant {
        n: BigUint::from(n),
        message,
    }
}

/// Left side summed over the divisors and right side from the prime powers,
/// for `sum (log d - log(n)/2)^2 = tau sum (log p^a)^2 (a+2)/(12a)`.
fn second_moment_float(f: &Factorization, logs: &[f64]) -> (f64, f64) {
    let half = f.ln() / 2.0;
    let lhs = logs
        .iter()
        .map(|l| (l - half).powi(2))
        .collect::<CompensatedSum>()
        .value();
    let rhs = f
        .factors()
        .iter()
        .map(|pp| {
            let a = f64::from(pp.exponent);
            pp.ln().powi(2) * (a + 2.0) / (12.0 * a)
        })
        .collect::<CompensatedSum>()
        .value()
        * f.tau() as f64;
    (lhs, rhs)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Computes and checks the record for one `n >= 2`.
pub fn scan_one(n: u64, table: &PrimeTable, config: &Config) -> Result<ScanRecord> {
    if n < 2 {
        return Err(Error::UnitInput { op: "scan" });
    }
    let tol = config.float_tol;
    let f = table.factor(n)?;
    let ds = DivisorList::with_cap(&f, config.divisor_cap)?;
    let rep = VandermondeReport::from_divisors(&ds, false, config.exact_cap)?;
    let conc = dyadic_concentration(&ds);
    let logs = ds.logs();

    if !rep.s_bounds_hold(tol) {
        return Err(violation(
            n,
            format!("S(n) = {} outside [tau^2/4, 3 tau^2/8] log n", rep.s),
        ));
    }
    if !rep.upper_bound_holds(tol) {
        return Err(violation(
            n,
            format!("log V(n) = {} above 3 tau^2/8 log n", rep.log_v),
        ));
    }
    if !rep.residual_nonnegative(tol) {
        return Err(violation(
            n,
            format!("S(n) - log V(n) = {} < 0", rep.residual),
        ));
    }
    let sum_logs = logs.iter().copied().collect::<CompensatedSum>().value();
    let half_tau_ln = rep.tau as f64 / 2.0 * f.ln();
    if !close(sum_logs, half_tau_ln, tol) {
        return Err(violation(
            n,
            format!("sum log d = {sum_logs} != tau/2 log n = {half_tau_ln}"),
        ));
    }
    let (m_lhs, m_rhs) = second_moment_float(&f, &logs);
    if !close(m_lhs, m_rhs, tol) {
        return Err(violation(n, format!("second moment {m_lhs} != {m_rhs}")));
    }
    let lower_ratio = rep.lower_ratio.expect("n >= 2");
    if lower_ratio < config.lower_ratio_floor {
        return Err(violation(
            n,
            format!(
                "lower_ratio = {lower_ratio} below floor {}",
                config.lower_ratio_floor
            ),
        ));
    }

    Ok(ScanRecord {
        n,
        tau: rep.tau,
        omega2: rep.omega2,
        is_square: rep.is_square,
        log_v: rep.log_v,
        s: rep.s,
        s_star: rep.s_star,
        residual: rep.residual,
        normalized_residual: rep.normalized_residual.expect("n >= 2"),
        lower_ratio,
        upper_ratio: rep.upper_ratio.expect("n >= 2"),
        s_ratio: rep.s_ratio.expect("n >= 2"),
        conc_max: conc.max_count,
        conc_normalized: conc.normalized.expect("n >= 2"),
        theta_max: f.theta_max()?,
    })
}

/// Scans `[from, to]` in parallel, handing records to `sink` in ascending `n`.
///
/// Work is split into fixed-size chunks computed by a pool of
/// `config.thread_count` workers; each batch of chunks is merged in order
/// before the next starts, so the sink sees the same sequence at any
/// thread count. The first failing `n` (smallest) aborts the scan.
pub fn scan_with<F>(from: u64, to: u64, config: &Config, mut sink: F) -> Result<ScanSummary>
where
    F: FnMut(&ScanRecord) -> Result<()>,
{
    if from < 2 || from > to {
        return Err(Error::OutOfRange {
            name: "from",
            value: from as f64,
            expected: "2 <= from <= to",
        });
    }
    config.validate()?;
    let table = PrimeTable::for_range(to);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.thread_count)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    let chunks: Vec<(u64, u64)> = (0..)
        .map(|i| from.saturating_add(i * CHUNK))
        .take_while(|&lo| lo <= to && lo >= from)
        .map(|lo| (lo, lo.saturating_add(CHUNK - 1).min(to)))
        .collect();
    let batch = config.thread_count * 8;

    let mut summary: Option<ScanSummary> = None;
    for group in chunks.chunks(batch) {
        let results: Vec<Result<Vec<ScanRecord>>> = pool.install(|| {
            group
                .par_iter()
                .map(|&(lo, hi)| (lo..=hi).map(|n| scan_one(n, &table, config)).collect())
                .collect()
        });
        for chunk in results {
            for record in chunk? {
                summary
                    .get_or_insert_with(|| ScanSummary::new(&record))
                    .update(&record);
                sink(&record)?;
            }
        }
    }
    Ok(summary.expect("nonempty range"))
}

/// Collects every record of `[from, to]`.
pub fn scan_range(from: u64, to: u64, config: &Config) -> Result<(Vec<ScanRecord>, ScanSummary)> {
    let mut records = Vec::new();
    let summary = scan_with(from, to, config, |r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok((records, summary))
}

/// Writes `[from, to]` to `out` in `config.output_format`.
pub fn scan_to_writer<W: Write + ?Sized>(
    from: u64,
    to: u64,
    config: &Config,
    out: &mut W,
) -> Result<ScanSummary> {
    if config.output_format == OutputFormat::Csv {
        writeln!(out, "{CSV_HEADER}")?;
    }
    let format = config.output_format;
    let summary = scan_with(from, to, config, |r| {
        match format {
            OutputFormat::Csv => writeln!(out, "{}", r.to_csv())?,
            OutputFormat::Jsonl => writeln!(out, "{}", r.to_json())?,
        }
        Ok(())
    })?;
    out.flush()?;
    Ok(summary)
}

/// `x` with 12 significant digits in the style of C's `%.12g`.
pub fn fmt_g12(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-5..DIGITS).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (DIGITS - 1 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to 12 significant digits.
pub fn round_g12(x: f64) -> f64 {
    fmt_g12(x).parse().unwrap_or(x)
}

pub(crate) fn ser_display<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

pub(crate) fn ser_opt_display<T: Display, S: Serializer>(
    v: &Option<T>,
    s: S,
) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

pub(crate) fn ser_factorization<S: Serializer>(f: &Factorization, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(f)
}
