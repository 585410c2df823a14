//! Command-line front end: `report`, `verify`, `scan`, `limitpoint`, `concentration`.
//!
//! Exit codes: 0 pass, 1 invariant or verification failure, 2 usage,
//! 3 cap refusal, 4 I/O, 5 prime search exhausted.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

use crate::arith::{factor, Factorization};
use crate::divisors::{dyadic_concentration, DivisorList};
use crate::error::Error;
use crate::identities::{
    check_eq1_exact, divisor_product_float, second_moment_check, variance_check,
};
use crate::limitpoints::{
    construct, primorial_base, target_ratio, ExperimentConfig, LimitPointExperiment,
    DEFAULT_EPSILON, DEFAULT_KAPPA_GRID,
};
use crate::scan::{fmt_g12, scan_to_writer, Config, OutputFormat};
use crate::vandermonde::VandermondeReport;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAP: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_PRIME: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "vdiv",
    version,
    about = "Vandermonde determinant of the divisors of an integer"
)]
pub struct Cli {
    /// Config file of `key = value` lines overriding the defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for `scan`.
    #[arg(long, global = true, env = "VDIV_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Every statistic of V(n), S(n), S*(n) plus divisor concentration.
    Report {
        n: BigUint,
        /// Also compute V(n) as an exact integer.
        #[arg(long)]
        exact: bool,
    },
    /// Run all identity and inequality checks for n.
    Verify { n: BigUint },
    /// Scan a range of integers and write one record per n.
    Scan(ScanArgs),
    /// Build N = p * n and compare S(N) / (tau(N)^2 log N) with its target.
    Limitpoint(LimitArgs),
    /// Most divisors of n in any interval [X, 2X].
    Concentration { n: BigUint },
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub from: u64,
    #[arg(long)]
    pub to: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv or jsonl.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("base_choice").required(true).args(["base", "base_primorial"])))]
pub struct LimitArgs {
    /// Runs the default grid 0.25, 0.5, 1, 2, 4 when omitted.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub base: Option<BigUint>,
    /// Use the product of the first k primes as base.
    #[arg(long)]
    pub base_primorial: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invariant { .. } => EXIT_FAIL,
        Error::CapExceeded { .. } | Error::BitSizeCapExceeded { .. } => EXIT_CAP,
        Error::Io(_) => EXIT_IO,
        Error::PrimeSearchExhausted { .. } => EXIT_PRIME,
        Error::Zero
        | Error::UnitInput { .. }
        | Error::FactorizationUnsupported(_)
        | Error::InvalidFactorization(_)
        | Error::OutOfRange { .. }
        | Error::Config(_) => EXIT_USAGE,
    }
}

fn load_config(cli: &Cli) -> Result<Config, Error> {
    let mut config = Config::default();
    if let Some(path) = &cli.config {
        config.apply_file(path)?;
    }
    if let Some(t) = cli.threads {
        config.thread_count = t;
    }
    config.validate()?;
    Ok(config)
}

/// Runs one parsed command, writing results to `out` and diagnostics to `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = load_config(cli).and_then(|config| match &cli.command {
        Command::Report { n, exact } => cmd_report(n, *exact, &config, out),
        Command::Verify { n } => cmd_verify(n, &config, out),
        Command::Scan(args) => cmd_scan(args, config, out),
        Command::Limitpoint(args) => cmd_limitpoint(args, &config, out),
        Command::Concentration { n } => cmd_concentration(n, &config, out),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), fmt_g12)
}

fn factor_positive(n: &BigUint) -> Result<Factorization, Error> {
    if n.is_zero() {
        return Err(Error::Zero);
    }
    factor(n)
}

pub fn cmd_report(
    n: &BigUint,
    exact: bool,
    config: &Config,
    out: &mut dyn Write,
) -> Result<i32, Error> {
    let f = factor_positive(n)?;
    let ds = DivisorList::with_cap(&f, config.divisor_cap)?;
    if exact && f.tau() > config.exact_cap {
        return Err(Error::CapExceeded {
            what: "exact V(n)",
            tau: f.tau(),
            cap: config.exact_cap,
        });
    }
    let rep = VandermondeReport::from_divisors(&ds, exact, config.exact_cap)?;
    let conc = dyadic_concentration(&ds);
    let theta = f.theta_max().ok();

    writeln!(out, "n                   {}", rep.n)?;
    writeln!(out, "factorization       {f}")?;
    writeln!(out, "tau                 {}", rep.tau)?;
    writeln!(out, "omega2              {}", rep.omega2)?;
    writeln!(out, "is_square           {}", rep.is_square)?;
    writeln!(out, "log_v               {}", fmt_g12(rep.log_v))?;
    writeln!(out, "s                   {}", fmt_g12(rep.s))?;
    writeln!(out, "s_star              {}", fmt_g12(rep.s_star))?;
    writeln!(out, "residual            {}", fmt_g12(rep.residual))?;
    writeln!(out, "normalized_residual {}", opt(rep.normalized_residual))?;
    writeln!(out, "lower_ratio         {}", opt(rep.lower_ratio))?;
    writeln!(out, "upper_ratio         {}", opt(rep.upper_ratio))?;
    writeln!(out, "s_ratio             {}", opt(rep.s_ratio))?;
    if rep.lower_bound_attained(config.float_tol) {
        writeln!(
            out,
            "                    lower bound attained: S(n) = tau^2/4 log n"
        )?;
    }
    writeln!(out, "conc_max            {}", conc.max_count)?;
    writeln!(out, "conc_witness        {}", conc.witness_x)?;
    writeln!(out, "conc_normalized     {}", opt(conc.normalized))?;
    writeln!(out, "theta_max           {}", opt(theta))?;
    if exact {
        match &rep.exact_v {
            Some(v) => writeln!(out, "exact_v             {v}")?,
            None => writeln!(out, "exact_v             -")?,
        }
    }
    let mut record = serde_json::to_value(&rep).expect("report serializes");
    record["conc_max"] = conc.max_count.into();
    record["conc_witness"] = conc.witness_x.to_string().into();
    record["conc_normalized"] = serde_json::to_value(conc.normalized).unwrap();
    record["theta_max"] = serde_json::to_value(theta).unwrap();
    writeln!(out, "{record}")?;
    Ok(EXIT_OK)
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

pub fn cmd_verify(n: &BigUint, config: &Config, out: &mut dyn Write) -> Result<i32, Error> {
    if n < &BigUint::from(2u32) {
        return Err(Error::UnitInput { op: "verify" });
    }
    let f = factor(n)?;
    let ds = DivisorList::with_cap(&f, config.divisor_cap)?;
    let tol = config.float_tol;
    let mut checks = Vec::new();

    checks.push(match check_eq1_exact(&ds, config.eq1_bitsize_cap) {
        Ok(ok) => Check {
            name: "divisor_product_exact",
            passed: ok,
            detail: "(prod d)^2 = n^tau".into(),
        },
        Err(Error::BitSizeCapExceeded { bits, .. }) => {
            let (lhs, rhs) = divisor_product_float(&ds);
            Check {
                name: "divisor_product_float",
                passed: (lhs - rhs).abs() <= tol * rhs.abs().max(1.0),
                detail: format!("n^tau needs {bits} bits; sum log d = {lhs}, tau/2 log n = {rhs}"),
            }
        }
        Err(e) => return Err(e),
    });

    for (name, check) in [
        ("variance_form", variance_check(&f)?),
        ("second_moment", second_moment_check(&f)?),
    ] {
        checks.push(Check {
            name,
            passed: check.passed(),
            detail: format!(
                "exact coefficients equal: {}; float lhs = {}, rhs = {}",
                check.exact, check.float_lhs, check.float_rhs
            ),
        });
    }

    let rep = VandermondeReport::from_divisors(&ds, false, config.exact_cap)?;
    let t2 = (rep.tau as f64).powi(2);
    let ln_n = f.ln();
    let (lo, hi) = (t2 / 4.0 * ln_n, 3.0 * t2 / 8.0 * ln_n);
    checks.push(Check {
        name: "s_lower_bound",
        passed: rep.s >= lo - tol * lo,
        detail: format!("S = {} >= tau^2/4 log n = {lo}", rep.s),
    });
    checks.push(Check {
        name: "s_upper_bound",
        passed: rep.s <= hi + tol * hi,
        detail: format!("S = {} <= 3 tau^2/8 log n = {hi}", rep.s),
    });
    checks.push(Check {
        name: "log_v_upper_bound",
        passed: rep.upper_bound_holds(tol),
        detail: format!("log V = {} <= {hi}", rep.log_v),
    });
    checks.push(Check {
        name: "residual_nonnegative",
        passed: rep.residual_nonnegative(tol),
        detail: format!("S - log V = {}", rep.residual),
    });

    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{tag} {:<21} {}", c.name, c.detail)?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(
        out,
        "{} of {} checks passed for n = {n}",
        checks.len() - failed,
        checks.len()
    )?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAIL })
}

pub fn cmd_scan(args: &ScanArgs, mut config: Config, out: &mut dyn Write) -> Result<i32, Error> {
    if let Some(fmt) = &args.format {
        config.output_format = fmt.parse::<OutputFormat>()?;
    }
    if args.from < 2 || args.from > args.to {
        return Err(Error::OutOfRange {
            name: "from",
            value: args.from as f64,
            expected: "2 <= from <= to",
        });
    }
    let summary = match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            let summary = scan_to_writer(args.from, args.to, &config, &mut w)?;
            writeln!(out, "{summary}")?;
            summary
        }
        None => {
            let summary = scan_to_writer(args.from, args.to, &config, out)?;
            eprintln!("{summary}");
            summary
        }
    };
    debug_assert_eq!(summary.count, args.to - args.from + 1);
    Ok(EXIT_OK)
}

fn print_experiment(e: &LimitPointExperiment, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(
        out,
        "base_n              {} = {}",
        e.base_n, e.base_factorization
    )?;
    writeln!(out, "kappa               {}", fmt_g12(e.kappa))?;
    writeln!(
        out,
        "epsilon             {} (used {})",
        fmt_g12(e.epsilon),
        fmt_g12(e.epsilon_used)
    )?;
    if e.kappa_constraint_violated {
        writeln!(
            out,
            "warning             kappa <= 2 epsilon; construction outside its stated regime"
        )?;
    }
    let label = if e.probable { " (probable prime)" } else { "" };
    writeln!(out, "found_prime         {}{label}", e.found_prime)?;
    writeln!(out, "big_n               {}", e.big_n)?;
    writeln!(out, "tau_big_n           {}", e.tau_big_n)?;
    writeln!(out, "measured_ratio      {}", fmt_g12(e.measured_ratio))?;
    writeln!(out, "target              {}", fmt_g12(e.target))?;
    writeln!(out, "deviation           {}", fmt_g12(e.deviation))?;
    writeln!(out, "theta_max_base      {}", fmt_g12(e.theta_max_base))?;
    writeln!(
        out,
        "partition           |D1| = {}, |D2| = {}, |D3| = {}",
        e.d1, e.d2, e.d3
    )?;
    writeln!(
        out,
        "size regime         log2 tau(N) = {} vs 1/(4 theta_max) = {}",
        fmt_g12(e.log2_tau_big_n),
        fmt_g12(e.required_log2_tau)
    )?;
    writeln!(
        out,
        "{}",
        serde_json::to_string(e).expect("experiment serializes")
    )
}

pub fn cmd_limitpoint(
    args: &LimitArgs,
    config: &Config,
    out: &mut dyn Write,
) -> Result<i32, Error> {
    let kappas: Vec<f64> = match args.kappa {
        Some(k) => vec![k],
        None => DEFAULT_KAPPA_GRID.to_vec(),
    };
    for &k in &kappas {
        target_ratio(k)?;
    }
    let base = match (&args.base, args.base_primorial) {
        (Some(n), _) => factor_positive(n)?,
        (None, Some(0)) => {
            return Err(Error::OutOfRange {
                name: "base-primorial",
                value: 0.0,
                expected: "k >= 1",
            })
        }
        (None, Some(k)) => primorial_base(k),
        (None, None) => unreachable!("clap requires one base option"),
    };
    let exp_config = ExperimentConfig {
        divisor_cap: config.divisor_cap,
        ..ExperimentConfig::default()
    };
    for (i, &kappa) in kappas.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        let e = construct(&base, kappa, args.epsilon, &exp_config)?;
        print_experiment(&e, out)?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_concentration(n: &BigUint, config: &Config, out: &mut dyn Write) -> Result<i32, Error> {
    let f = factor_positive(n)?;
    let ds = DivisorList::with_cap(&f, config.divisor_cap)?;
    let c = dyadic_concentration(&ds);
    writeln!(out, "n               {n}")?;
    writeln!(out, "tau             {}", f.tau())?;
    writeln!(out, "omega2          {}", f.omega2())?;
    writeln!(out, "max_count       {}", c.max_count)?;
    writeln!(out, "witness_x       {}", c.witness_x)?;
    writeln!(out, "normalized      {}", opt(c.normalized))?;
    if let Some(x) = c.witness_x.to_u64() {
        let window: Vec<String> = ds
            .to_big_vec()
            .into_iter()
            .filter(|d| d >= &BigUint::from(x) && d <= &(BigUint::from(x) * 2u32))
            .map(|d| d.to_string())
            .collect();
        writeln!(
            out,
            "window          [{x}, {}] holds {}",
            2 * x as u128,
            window.join(", ")
        )?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let cli = Cli::try_parse_from(std::iter::once("vdiv").chain(args.iter().copied())).unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(&cli, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn report_exact_12() {
        let (code, out, _) = run_args(&["report", "12", "--exact"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("exact_v             68428800"), "{out}");
        let json: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
        assert_eq!(json["exact_v"], "68428800");
    }

    #[test]
    fn report_degenerate_and_prime() {
        let (code, out, _) = run_args(&["report", "1"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("log_v               0\n"));
        assert!(out.contains("s_ratio             -\n"));
        let (_, out, _) = run_args(&["report", "2"]);
        assert!(out.contains("s_ratio             0.25\n"));
        assert!(out.contains("lower bound attained"));
        assert_eq!(run_args(&["report", "0"]).0, EXIT_USAGE);
    }

    #[test]
    fn report_exact_cap_exit() {
        let (code, _, err) = run_args(&["report", "720720", "--exact"]);
        assert_eq!(code, EXIT_OK, "{err}"); // tau = 240 <= 1024
        let (code, _, err) = run_args(&["report", "963761198400", "--exact"]); // tau = 6720
        assert_eq!(code, EXIT_CAP);
        assert!(err.contains("1024"));
    }

    #[test]
    fn verify_codes() {
        let (code, out, _) = run_args(&["verify", "360"]);
        assert_eq!(code, EXIT_OK, "{out}");
        assert!(!out.contains("FAIL"));
        assert_eq!(run_args(&["verify", "1"]).0, EXIT_USAGE);
        let (code, out, _) = run_args(&["verify", "510510"]);
        assert_eq!(code, EXIT_OK, "{out}");
    }

    #[test]
    fn concentration_output() {
        let (code, out, _) = run_args(&["concentration", "12"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("max_count       3\n"));
        assert!(out.contains("witness_x       2\n"));
        assert!(out.contains("normalized      1.11803398875\n"), "{out}");
        let (_, out, _) = run_args(&["concentration", "1024"]);
        assert!(out.contains("max_count       2\n"));
        assert!(out.contains("normalized      1.81818181818\n"), "{out}");
    }

    #[test]
    fn limitpoint_codes() {
        let (code, out, _) = run_args(&[
            "limitpoint",
            "--kappa",
            "1",
            "--base",
            "6",
            "--epsilon",
            "0.3",
        ]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("found_prime         7\n"));
        assert!(out.contains("big_n               42\n"));
        assert!(out.contains("target              0.3125\n"));
        assert_eq!(
            run_args(&["limitpoint", "--kappa", "0", "--base", "6"]).0,
            EXIT_USAGE
        );
        let (code, out, _) = run_args(&["limitpoint", "--kappa", "2", "--base-primorial", "7"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("target              0.333333333333\n"));
    }

    #[test]
    fn limitpoint_exhaustion_exit() {
        let (code, _, err) = run_args(&[
            "limitpoint",
            "--kappa",
            "0.01",
            "--base",
            "2",
            "--epsilon",
            "0.01",
        ]);
        assert_eq!(code, EXIT_PRIME, "{err}");
    }

    #[test]
    fn scan_usage_and_io() {
        assert_eq!(
            run_args(&["scan", "--from", "5", "--to", "4"]).0,
            EXIT_USAGE
        );
        let (code, _, _) = run_args(&[
            "scan",
            "--from",
            "2",
            "--to",
            "10",
            "--out",
            "/nonexistent/dir/x.csv",
        ]);
        assert_eq!(code, EXIT_IO);
        assert_eq!(
            run_args(&["scan", "--from", "2", "--to", "10", "--format", "xml"]).0,
            EXIT_USAGE
        );
    }
}
