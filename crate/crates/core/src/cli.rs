//! `symfpt` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 unsupported boundary,
//! 4 unresolved comparison or calibration failure. Errors are reported as a
//! single `error: <kind>: <message>` line on stderr.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::distribution::{cdf, conditional_cdf, prob_finite, ToleranceSpec};
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::sampler::{calibrate_envelope_with_grid, FptOutcome, Sampler, DEFAULT_GRID};
use crate::series::Boundary;
use crate::validation::{euler_fpt_oracle, goodness_of_fit, verify_envelope, OracleConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_UNSUPPORTED: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "symfpt",
    version,
    about = "Exact first passage times of Brownian motion to the boundary ±(a + b t)"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,

    /// Output format.
    #[arg(long, value_enum, default_value = "csv", global = true)]
    pub format: Format,

    /// Write output to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw passage times (finite or infinite).
    Sample {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        alpha: f64,
    },
    /// Evaluate P[τ ≤ t] and P[τ ≤ t | τ < ∞].
    Cdf {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        /// Comma-separated evaluation times.
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        t: Vec<f64>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Evaluate P[τ < ∞].
    ProbFinite {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Calibrate the gamma envelope and scan it for violations.
    Envelope {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        alpha: f64,
        /// Calibration grid size.
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        /// Size of the independent verification grid.
        #[arg(long, default_value_t = 10_000)]
        verify_grid: usize,
    },
    /// Sample and report goodness of fit as JSON.
    Validate {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        alpha: f64,
    },
    /// Euler grid-crossing oracle: empirical CDF table and censored fraction.
    Oracle {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Times at which to tabulate the empirical CDF.
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,4")]
        t: Vec<f64>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match RunConfig::try_parse_from(args) {
        Ok(cfg) => run(&cfg, stdout, stderr),
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let reason: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more"))
                .filter(|l| !l.is_empty())
                .collect();
            let reason = reason.join(" ");
            let reason = reason.trim_start_matches("error: ");
            let _ = writeln!(stderr, "error: invalid_argument: {reason}");
            EXIT_INVALID
        }
    }
}

/// Runs a parsed configuration, returning the process exit code.
pub fn run(cfg: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let rendered = match render(cfg) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}: {}", e.kind(), e);
            return exit_code(&e);
        }
    };
    let written = match &cfg.out {
        Some(path) => std::fs::write(path, rendered.as_bytes()),
        None => stdout.write_all(rendered.as_bytes()),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: io: {e}");
            EXIT_INVALID
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::UnsupportedBoundary { .. } => EXIT_UNSUPPORTED,
        Error::UnresolvedComparison { .. }
        | Error::CalibrationFailure(_)
        | Error::DegenerateDifference { .. }
        | Error::ProposalExhaustion { .. } => EXIT_NUMERIC,
        Error::InvalidBoundary { .. } | Error::InvalidArgument(_) | Error::EmptySample => {
            EXIT_INVALID
        }
    }
}

/// Bit-faithful JSON number (17 significant digits), `null` if not finite.
fn json_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

fn line_boundary(a: f64, b: f64) -> Result<Boundary> {
    if a > 0.0 && a.is_finite() && b == 0.0 {
        return Err(Error::UnsupportedBoundary { a });
    }
    Boundary::new(a, b)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidArgument("n must be >= 1".into()))
    } else {
        Ok(())
    }
}

fn render(cfg: &RunConfig) -> Result<String> {
    let mut s = String::new();
    let json = cfg.format == Format::Json;
    match cfg.command {
        Command::Sample {
            a,
            b,
            n,
            seed,
            alpha,
        } => {
            check_n(n)?;
            let sampler = Sampler::new(a, b, alpha)?;
            let (draws, stats) = sampler.draw_batch(n, seed)?;
            let finite = draws.iter().filter(|d| d.is_finite()).count();
            let ff = finite as f64 / n as f64;
            let rate = stats.acceptance_rate();
            if json {
                s.push_str("{\"records\":[");
                for (i, d) in draws.iter().enumerate() {
                    if i > 0 {
                        s.push(',');
                    }
                    let (outcome, time) = match d {
                        FptOutcome::Finite(t) => ("finite", json_num(*t)),
                        FptOutcome::Infinite => ("infinite", "null".to_string()),
                    };
                    let _ = write!(
                        s,
                        "{{\"index\":{i},\"outcome\":\"{outcome}\",\"time\":{time}}}"
                    );
                }
                let _ = writeln!(
                    s,
                    "],\"summary\":{{\"n\":{n},\"finite_fraction\":{},\"acceptance_rate\":{},\"max_terms_used\":{},\"proposals\":{},\"unresolved_events\":{}}}}}",
                    json_num(ff),
                    json_num(rate),
                    stats.max_terms_used,
                    stats.proposals,
                    stats.unresolved_events
                );
            } else {
                s.push_str("index,outcome,time\n");
                for (i, d) in draws.iter().enumerate() {
                    match d {
                        FptOutcome::Finite(t) => {
                            let _ = writeln!(s, "{i},finite,{t}");
                        }
                        FptOutcome::Infinite => {
                            let _ = writeln!(s, "{i},infinite,");
                        }
                    }
                }
                let rate = if rate.is_finite() {
                    rate.to_string()
                } else {
                    String::new()
                };
                let _ = writeln!(
                    s,
                    "# finite_fraction={ff},acceptance_rate={rate},max_terms_used={}",
                    stats.max_terms_used
                );
            }
        }
        Command::Cdf { a, b, ref t, tol } => {
            let boundary = line_boundary(a, b)?;
            let tol = ToleranceSpec::new(tol)?;
            let mut rows = Vec::with_capacity(t.len());
            for &ti in t {
                rows.push((
                    ti,
                    cdf(&boundary, ti, tol)?,
                    conditional_cdf(&boundary, ti, tol)?,
                ));
            }
            if json {
                s.push_str("{\"rows\":[");
                for (i, (t, c, cc)) in rows.iter().enumerate() {
                    if i > 0 {
                        s.push(',');
                    }
                    let _ = write!(
                        s,
                        "{{\"t\":{},\"cdf\":{},\"conditional_cdf\":{}}}",
                        json_num(*t),
                        json_num(*c),
                        json_num(*cc)
                    );
                }
                s.push_str("]}\n");
            } else {
                s.push_str("t,cdf,conditional_cdf\n");
                for (t, c, cc) in rows {
                    let _ = writeln!(s, "{t},{c},{cc}");
                }
            }
        }
        Command::ProbFinite { a, b, tol } => {
            let boundary = line_boundary(a, b)?;
            let c = prob_finite(&boundary, ToleranceSpec::new(tol)?);
            if json {
                let _ = writeln!(s, "{{\"prob_finite\":{}}}", json_num(c));
            } else {
                let _ = writeln!(s, "prob_finite\n{c}");
            }
        }
        Command::Envelope {
            a,
            b,
            alpha,
            grid,
            verify_grid,
        } => {
            let boundary = line_boundary(a, b)?;
            let env = calibrate_envelope_with_grid(&boundary, alpha, grid)?;
            let violations = verify_envelope(&env, verify_grid)?;
            let acc = env.predicted_acceptance();
            if json {
                let _ = writeln!(
                    s,
                    "{{\"alpha\":{},\"rate\":{},\"log_m_prime\":{},\"predicted_acceptance\":{},\"violations\":{violations}}}",
                    json_num(env.alpha),
                    json_num(env.rate),
                    json_num(env.log_m_prime),
                    json_num(acc)
                );
            } else {
                s.push_str("alpha,rate,log_m_prime,predicted_acceptance,violations\n");
                let _ = writeln!(
                    s,
                    "{},{},{},{acc},{violations}",
                    env.alpha, env.rate, env.log_m_prime
                );
            }
        }
        Command::Validate {
            a,
            b,
            n,
            seed,
            alpha,
        } => {
            check_n(n)?;
            let boundary = line_boundary(a, b)?;
            let sampler = Sampler::new(a, b, alpha)?;
            let (draws, _) = sampler.draw_batch(n, seed)?;
            let r = goodness_of_fit(&boundary, &draws)?;
            let _ = writeln!(
                s,
                "{{\"ks_statistic\":{},\"ks_threshold_99\":{},\"n\":{},\"n_finite\":{},\"finite_fraction\":{},\"expected_C\":{},\"finite_band\":{},\"band_violations\":{},\"pass\":{}}}",
                json_num(r.ks_statistic),
                json_num(r.ks_threshold_99),
                r.n,
                r.n_finite,
                json_num(r.finite_fraction),
                json_num(r.expected_c),
                json_num(r.finite_band),
                r.band_violations,
                r.passed()
            );
        }
        Command::Oracle {
            a,
            b,
            dt,
            horizon,
            n,
            seed,
            ref t,
        } => {
            let ocfg = OracleConfig::new(dt, horizon, n)?;
            if b == 0.0 && a > 0.0 {
                return Err(Error::UnsupportedBoundary { a });
            }
            let emp = euler_fpt_oracle(a, b, &ocfg, &mut RandomSource::new(seed))?;
            let analytic = |ti: f64| -> Result<f64> {
                if a == 0.0 {
                    Ok(1.0)
                } else {
                    cdf(&Boundary::new(a, b)?, ti, ToleranceSpec::default())
                }
            };
            let mut rows = Vec::with_capacity(t.len());
            for &ti in t {
                if ti < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "time must be >= 0, got {ti}"
                    )));
                }
                rows.push((ti, emp.ecdf(ti), analytic(ti)?));
            }
            if json {
                s.push_str("{\"rows\":[");
                for (i, (t, e, c)) in rows.iter().enumerate() {
                    if i > 0 {
                        s.push(',');
                    }
                    let _ = write!(
                        s,
                        "{{\"t\":{},\"empirical_cdf\":{},\"analytic_cdf\":{}}}",
                        json_num(*t),
                        json_num(*e),
                        json_num(*c)
                    );
                }
                let _ = writeln!(
                    s,
                    "],\"censored_fraction\":{},\"n_paths\":{}}}",
                    json_num(emp.censored_fraction()),
                    emp.n_paths
                );
            } else {
                s.push_str("t,empirical_cdf,analytic_cdf\n");
                for (t, e, c) in rows {
                    let _ = writeln!(s, "{t},{e},{c}");
                }
                let _ = writeln!(
                    s,
                    "# censored_fraction={},n_paths={}",
                    emp.censored_fraction(),
                    emp.n_paths
                );
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = main_with_args(
            std::iter::once("symfpt").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn json_numbers_have_17_digits() {
        assert_eq!(json_num(0.1), "1.0000000000000001e-1");
        assert_eq!(json_num(f64::INFINITY), "null");
        let x = 0.269_999_671_677_354_5;
        assert_eq!(json_num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn prob_finite_csv() {
        let (code, out, _) = run_args(&["prob-finite", "--a", "1", "--b", "1"]);
        assert_eq!(code, 0);
        let v: f64 = out.lines().nth(1).unwrap().parse().unwrap();
        assert!((v - 0.2699997).abs() < 5e-8);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            run_args(&["sample", "--a", "1", "--b", "0", "--n", "1", "--seed", "1"]).0,
            3
        );
        assert_eq!(
            run_args(&["sample", "--a", "1", "--b", "1", "--n", "0", "--seed", "1"]).0,
            2
        );
        assert_eq!(
            run_args(&["sample", "--a", "1", "--b", "1", "--n", "3"]).0,
            2
        );
        assert_eq!(run_args(&["prob-finite", "--a", "-1", "--b", "1"]).0, 2);
        assert_eq!(
            run_args(&["prob-finite", "--a", "1", "--b", "1", "--tol", "2"]).0,
            2
        );
        assert_eq!(run_args(&["cdf", "--a", "1", "--b", "0", "--t", "1"]).0, 3);
        assert_eq!(
            run_args(&[
                "sample", "--a", "1", "--b", "1", "--n", "1", "--seed", "1", "--alpha", "0.2"
            ])
            .0,
            2
        );
        assert_eq!(run_args(&["bogus"]).0, 2);
    }

    #[test]
    fn errors_are_one_line() {
        let (code, _, err) =
            run_args(&["sample", "--a", "1", "--b", "0", "--n", "1", "--seed", "1"]);
        assert_eq!(code, 3);
        assert_eq!(err.lines().count(), 1);
        assert!(err.starts_with("error: unsupported_boundary:"));
        let (_, _, err) = run_args(&["sample", "--a", "1"]);
        assert_eq!(err.lines().count(), 1);
        assert!(err.starts_with("error: invalid_argument:"));
    }

    #[test]
    fn sample_zero_intercept() {
        let (code, out, _) =
            run_args(&["sample", "--a", "0", "--b", "1", "--n", "2", "--seed", "1"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "index,outcome,time");
        assert_eq!(lines[1], "0,finite,0");
        assert!(lines[3].starts_with("# finite_fraction=1,"));
    }

    #[test]
    fn cdf_rows() {
        let (code, out, _) = run_args(&["cdf", "--a", "1", "--b", "1", "--t", "0,1"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "t,cdf,conditional_cdf");
        assert_eq!(lines[1], "0,0,0");
        let cols: Vec<f64> = lines[2].split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cols[1] - 0.1808).abs() < 1e-4);
    }
}
