use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mpec_core::report::{self, fmt_set, fmt_vec, ReportOptions};
use mpec_core::{
    classify_indices, directional_derivatives, evaluate_at_reference, finite_difference_probe, load_problem, src_check,
    Error, ProblemKind, ProblemSpec, Verdict,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "mpec-check",
    version,
    about = "Second-order condition checks for small MPECs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Zero tolerance for activity and sign decisions.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Feasibility and index sets at the reference point.
    Classify { file: PathBuf },
    /// Strong regularity of the lower NCP.
    Src { file: PathBuf },
    /// First and second directional derivatives of the lower solution.
    Dirderiv {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_vector)]
        dx: Vector,
    },
    /// Second-order verdicts without the branch decomposition.
    SecondOrder {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_vector)]
        dx: Vec<Vector>,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_vector)]
        pi: Option<Vector>,
        #[arg(long)]
        strict_complementarity: bool,
    },
    /// Classical second-order test on every complementarity branch.
    Branches { file: PathBuf },
    /// Solve the lower problem along x̄ + τ·dx.
    Probe {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_vector)]
        dx: Vector,
        #[arg(long, value_parser = parse_vector)]
        taus: Vector,
    },
    /// Every applicable check.
    Report { file: PathBuf },
}

/// Comma-separated reals.
#[derive(Clone, Debug)]
struct Vector(Vec<f64>);

fn parse_vector(s: &str) -> Result<Vector, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()
        .map(Vector)
}

struct Output {
    text: String,
    json: String,
    code: u8,
}

enum Failure {
    Io(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(e.into())
    }
}

fn load(path: &Path, tol: f64) -> Result<ProblemSpec, Failure> {
    let content = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok(load_problem(&content)?.with_zero_tol(tol))
}

fn code_of(v: &Verdict) -> u8 {
    report::exit_code([v]) as u8
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    let tol = cli.tol;
    let spec = |f: &Path| load(f, tol);
    match &cli.command {
        Command::Classify { file } => {
            let s = spec(file)?;
            let ev = evaluate_at_reference(&s, tol)?;
            let part = classify_indices(&ev)?;
            let sets = report::IndexSets::from(&part);
            let mut text = format!(
                "alpha = {}, beta = {}, gamma = {}\n",
                fmt_set(&sets.alpha),
                fmt_set(&sets.beta),
                fmt_set(&sets.gamma)
            );
            for (i, p) in ev.feasibility.pairs.iter().enumerate() {
                let _ = writeln!(
                    text,
                    "pair {}: variable {}, function {}, {:?}",
                    i + 1,
                    p.variable_value,
                    p.function_value,
                    p.status
                );
            }
            Ok(Output {
                text,
                json: serde_json::to_string_pretty(&json!({ "index_sets": sets, "feasibility": ev.feasibility }))?,
                code: 0,
            })
        }
        Command::Src { file } => {
            let s = spec(file)?;
            let ev = evaluate_at_reference(&s, tol)?;
            let part = classify_indices(&ev)?;
            let r = src_check(&ev, &part)?;
            let mut text = format!(
                "beta = {}\nalpha block nonsingular: {}\n",
                fmt_set(&report::IndexSets::from(&part).beta),
                r.alpha_block_nonsingular
            );
            if let Some(sc) = &r.schur {
                let _ = writeln!(text, "Schur complement: {:?}", sc.to_rows());
            }
            if let Some(c) = &r.p_certificate {
                if let Some(v) = &c.violating_subset {
                    let one: Vec<usize> = v.iter().map(|i| i + 1).collect();
                    let _ = writeln!(text, "nonpositive principal minor on {}", fmt_set(&one));
                }
            }
            let _ = writeln!(text, "P-matrix: {}\nsrc_holds: {}", r.schur_is_p, r.src_holds);
            Ok(Output {
                text,
                json: serde_json::to_string_pretty(&r)?,
                code: if r.src_holds { 0 } else { 1 },
            })
        }
        Command::Dirderiv { file, dx } => {
            let s = spec(file)?;
            let ev = evaluate_at_reference(&s, tol)?;
            let part = classify_indices(&ev)?;
            let dd = directional_derivatives(&ev, &part, &dx.0)?;
            let one = |v: &[usize]| v.iter().map(|i| i + 1).collect::<Vec<_>>();
            let (a, b, g) = (
                one(&dd.index_sets.d_beta_a),
                one(&dd.index_sets.d_beta_b),
                one(&dd.index_sets.d_beta_g),
            );
            let mut text = format!(
                "dx = {}\ny' = {}\ndbeta_a = {}, dbeta_b = {}, dbeta_g = {}\n",
                fmt_vec(&dd.dx),
                fmt_vec(&dd.y_prime),
                fmt_set(&a),
                fmt_set(&b),
                fmt_set(&g)
            );
            match &dd.y_second {
                Some(y) => {
                    let _ = writeln!(text, "y'' = {}", fmt_vec(y));
                }
                None => text.push_str("y'' = undetermined\n"),
            }
            for w in &dd.warnings {
                let _ = writeln!(text, "warning: {w}");
            }
            Ok(Output {
                text,
                json: serde_json::to_string_pretty(&json!({
                    "dx": dd.dx,
                    "y_prime": dd.y_prime,
                    "d_beta_a": a,
                    "d_beta_b": b,
                    "d_beta_g": g,
                    "y_second": dd.y_second,
                    "warnings": dd.warnings,
                }))?,
                code: if dd.y_second.is_some() { 0 } else { 3 },
            })
        }
        Command::SecondOrder {
            file,
            dx,
            pi,
            strict_complementarity,
        } => {
            let s = spec(file)?;
            let pi = pi.as_ref().map(|v| v.0.clone());
            if pi.is_some() && s.kind != ProblemKind::Ncp {
                return Err(Error::schema("pi", "only NCP problems take a user multiplier").into());
            }
            let opts = ReportOptions {
                zero_tol: tol,
                directions: dx.iter().map(|v| v.0.clone()).collect(),
                pi,
                restrict_strict_complementarity: *strict_complementarity,
                piecewise: false,
            };
            let r = report::analyze(&s, &opts)?;
            Ok(Output {
                text: report::render_text(&r),
                json: serde_json::to_string_pretty(&r)?,
                code: r.exit_code() as u8,
            })
        }
        Command::Branches { file } => {
            let s = spec(file)?;
            let ev = evaluate_at_reference(&s, tol)?;
            let part = classify_indices(&ev)?;
            let r = mpec_core::piecewise_analysis(&s, &ev, &part)?;
            let mut text = String::new();
            for c in &r.branches {
                let _ = writeln!(text, "branch {:#b}: {} (MFCQ {})", c.mask, c.verdict, c.mfcq);
                for w in &c.warnings {
                    let _ = writeln!(text, "  warning: {w}");
                }
            }
            let _ = writeln!(text, "piecewise_sufficient: {}", r.aggregate);
            Ok(Output {
                text,
                json: serde_json::to_string_pretty(&r)?,
                code: code_of(&r.aggregate),
            })
        }
        Command::Probe { file, dx, taus } => {
            let s = spec(file)?;
            let t = finite_difference_probe(&s, &dx.0, &taus.0)?;
            let mut text = format!("dx = {}\ny' = {}\n", fmt_vec(&t.dx), fmt_vec(&t.y_prime));
            if let Some(y) = &t.y_second {
                let _ = writeln!(text, "y'' = {}", fmt_vec(y));
            }
            let _ = writeln!(text, "tau\ty\tfirst_order\tsecond_order");
            let cell = |v: &Option<Vec<f64>>| v.as_deref().map(fmt_vec).unwrap_or_else(|| "-".into());
            for r in &t.rows {
                let _ = write!(
                    text,
                    "{:e}\t{}\t{}\t{}",
                    r.tau,
                    cell(&r.y),
                    cell(&r.first_order),
                    cell(&r.second_order)
                );
                if let Some(e) = &r.error {
                    let _ = write!(text, "\t{e}");
                }
                text.push('\n');
            }
            Ok(Output {
                text,
                json: serde_json::to_string_pretty(&t)?,
                code: if t.rows.iter().any(|r| r.error.is_some()) { 3 } else { 0 },
            })
        }
        Command::Report { file } => {
            let s = spec(file)?;
            let opts = ReportOptions {
                zero_tol: tol,
                ..ReportOptions::default()
            };
            let r = report::analyze(&s, &opts)?;
            Ok(Output {
                text: report::render_text(&r),
                json: serde_json::to_string_pretty(&r)?,
                code: r.exit_code() as u8,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match run(&cli) {
        Ok(o) => o,
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(match e {
                Error::Multiplicity { .. } => 3,
                _ => 2,
            });
        }
    };
    let body = match cli.format {
        Format::Text => out.text,
        Format::Json => out.json + "\n",
    };
    match &cli.out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, body) {
                eprintln!("error: {}: {e}", p.display());
                return ExitCode::from(2);
            }
        }
        None => print!("{body}"),
    }
    ExitCode::from(out.code)
}
