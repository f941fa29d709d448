mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use output::{emit, Format, Report};
use stein_poisson::bounds::log_grid;
use stein_poisson::cert::certificate_with;
use stein_poisson::io::{read_cost_table, read_pmf, read_probabilities};
use stein_poisson::{
    conjecture_scan, factor_report, poisson_pmf, scan_constants, simulate_coupled, wasserstein_p,
    wasserstein_rho, CostKind, CostRho, Error, Family, LatticePmf, SimulationConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "stein-poisson",
    version,
    about = "Stein factors, rho-Wasserstein distances and Poisson approximation certificates"
)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,

    /// Write output here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Upper tail mass left out of truncated Poisson tables.
    #[arg(
        long,
        global = true,
        env = "STEIN_POISSON_EPS_TAIL",
        default_value_t = 1e-12
    )]
    eps_tail: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Rho {
    R1,
    R2,
    Rhalf,
    Table,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact Stein factors, their bounds and the boundary values.
    Factors {
        #[arg(long, value_enum)]
        rho: Rho,
        #[arg(long)]
        lambda: f64,
        /// Cost values rho(0), rho(1), ... one per line; required for `--rho table`.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Universal constants over a grid of lambda values.
    Scan {
        /// `log:LO:HI:N`, `lin:LO:HI:N` or a comma-separated list.
        #[arg(long)]
        grid: String,
    },
    /// Transport distance under the cost |rho(i) - rho(j)|.
    Wasserstein {
        /// `index,prob` rows.
        #[arg(long)]
        nu1: PathBuf,
        #[arg(long)]
        nu2: PathBuf,
        #[arg(long, value_enum)]
        rho: Rho,
        /// Parameter of the square-root cost.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Quantile Wasserstein distance of order p.
    W2 {
        #[arg(long)]
        nu1: PathBuf,
        #[arg(long)]
        nu2: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Poisson approximation certificate for a sum of independent Bernoullis.
    Poibin {
        /// One success probability per line.
        #[arg(long)]
        probs: PathBuf,
    },
    /// Certificates along families of equal-probability sums.
    Conjecture {
        /// `p=P:n=N1,N2,...`; may be repeated.
        #[arg(long, required = true)]
        family: Vec<String>,
    },
    /// Monte-Carlo estimate of the resolvent diagonal integral.
    Simulate {
        #[arg(long)]
        i: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, env = "STEIN_POISSON_SEED", default_value_t = 1)]
        seed: u64,
        /// Exponential discount rate.
        #[arg(long, default_value_t = 2.0)]
        s: f64,
    },
}

/// Failure carrying its exit code: 1 for usage and input errors, 2 for violations.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::Parse { .. } => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

/// Outcome of a command: its report and whether every checked invariant held.
struct Outcome {
    report: Report,
    ok: bool,
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn in_file<T>(path: &Path, r: stein_poisson::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn cost_for(
    rho: Rho,
    lambda: Option<f64>,
    table: Option<&Path>,
    n: usize,
) -> Result<CostRho, Failure> {
    let cost = match rho {
        Rho::R1 => CostRho::linear(n)?,
        Rho::R2 => CostRho::squared(n)?,
        Rho::Rhalf => {
            let l = lambda.ok_or_else(|| Failure::usage("--rho rhalf needs --lambda"))?;
            CostRho::sqrt_case(l, n)?
        }
        Rho::Table => {
            let path = table.ok_or_else(|| Failure::usage("--rho table needs --table FILE"))?;
            let values = in_file(path, read_cost_table(open(path)?))?;
            let n = values
                .len()
                .checked_sub(4)
                .ok_or_else(|| Failure::usage("cost table needs at least 8 values"))?;
            CostRho::new(CostKind::Table { values }, n)?
        }
    };
    Ok(cost)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::usage(format!("bad grid spec {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let grid = match spec.split(':').collect::<Vec<_>>()[..] {
        [kind @ ("log" | "lin"), lo, hi, n] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            if !(lo > 0.0 && hi >= lo && n >= 1) {
                return Err(bad());
            }
            match (kind, n) {
                (_, 1) => vec![lo],
                ("log", _) => log_grid(lo, hi, n),
                _ => (0..n)
                    .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
                    .collect(),
            }
        }
        [list] => list.split(',').map(num).collect::<Result<_, _>>()?,
        _ => return Err(bad()),
    };
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    let eps = cli.eps_tail;
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(Failure::usage(format!(
            "eps-tail must lie in (0, 1e-3], got {eps}"
        )));
    }
    match &cli.command {
        Command::Factors { rho, lambda, table } => {
            let pmf = poisson_pmf(*lambda, eps)?;
            let cost = cost_for(*rho, Some(*lambda), table.as_deref(), pmf.trunc_index())?;
            let r = factor_report(&cost, *lambda, &pmf)?;
            Ok(Outcome {
                ok: r.all_dominated(),
                report: Report::record(&r)?,
            })
        }
        Command::Scan { grid } => {
            let grid = parse_grid(grid)?;
            let r = scan_constants(&grid)?;
            let columns = vec!["lambda", "xi1", "xi2", "scaled_xi1", "scaled_xi2"];
            let rows = r
                .rows
                .iter()
                .map(|row| {
                    vec![
                        json!(row.lambda),
                        json!(row.xi1),
                        json!(row.xi2),
                        json!(row.scaled_xi1),
                        json!(row.scaled_xi2),
                    ]
                })
                .collect();
            Ok(Outcome {
                ok: true,
                report: Report::Table {
                    columns,
                    rows,
                    full: serde_json::to_value(&r)?,
                },
            })
        }
        Command::Wasserstein {
            nu1,
            nu2,
            rho,
            lambda,
            table,
        } => {
            let a = in_file(nu1, read_pmf(open(nu1)?))?;
            let b = in_file(nu2, read_pmf(open(nu2)?))?;
            let n = a.trunc_index().max(b.trunc_index()).max(4);
            let cost = cost_for(*rho, *lambda, table.as_deref(), n)?;
            let r = wasserstein_rho(&a, &b, &cost)?;
            Ok(Outcome {
                ok: true,
                report: Report::record(&r)?,
            })
        }
        Command::W2 { nu1, nu2, p } => {
            let a = in_file(nu1, read_pmf(open(nu1)?))?;
            let b = in_file(nu2, read_pmf(open(nu2)?))?;
            let d = wasserstein_p(&LatticePmf::from(&a), &LatticePmf::from(&b), *p)?;
            Ok(Outcome {
                ok: true,
                report: Report::Record(json!({ "p": p, "distance": d })),
            })
        }
        Command::Poibin { probs } => {
            let p = in_file(probs, read_probabilities(open(probs)?))?;
            let c = certificate_with(&p, eps)?;
            Ok(Outcome {
                ok: c.valid() && c.holds(),
                report: Report::record(&c)?,
            })
        }
        Command::Conjecture { family } => {
            let families: Vec<Family> =
                family.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
            let r = conjecture_scan(&families)?;
            let columns = vec![
                "p", "n", "mu", "mu2", "mu3", "lam", "bound1", "bound2", "exact1", "exact2",
                "ratio", "holds",
            ];
            let rows = r
                .rows
                .iter()
                .map(|row| {
                    let c = &row.certificate;
                    vec![
                        json!(row.p),
                        json!(row.n),
                        json!(c.mu),
                        json!(c.mu2),
                        json!(c.mu3),
                        json!(c.lam),
                        json!(c.bound1),
                        json!(c.bound2),
                        json!(c.exact1),
                        json!(c.exact2),
                        json!(row.ratio),
                        json!(c.holds()),
                    ]
                })
                .collect();
            let ok = r.rows.iter().all(|row| row.certificate.holds());
            Ok(Outcome {
                ok,
                report: Report::Table {
                    columns,
                    rows,
                    full: serde_json::to_value(&r)?,
                },
            })
        }
        Command::Simulate {
            i,
            lambda,
            paths,
            seed,
            s,
        } => {
            let config = SimulationConfig::new(*i, *lambda, *s, *paths, *seed);
            let r = simulate_coupled(&config)?;
            let ok = r
                .samples
                .iter()
                .all(|t| t.diagonal.estimate <= t.mode_probability + 3.0 * t.diagonal.std_error);
            Ok(Outcome {
                ok,
                report: Report::record(&r)?,
            })
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Factors { .. } => "factors",
        Command::Scan { .. } => "scan",
        Command::Wasserstein { .. } => "wasserstein",
        Command::W2 { .. } => "w2",
        Command::Poibin { .. } => "poibin",
        Command::Conjecture { .. } => "conjecture",
        Command::Simulate { .. } => "simulate",
    }
}

fn write_report(cli: &Cli, outcome: &Outcome) -> Result<(), Failure> {
    let mut sink: Box<dyn Write> = match &cli.output {
        Some(path) => {
            Box::new(BufWriter::new(File::create(path).map_err(|e| {
                Failure::usage(format!("{}: {e}", path.display()))
            })?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    emit(
        command_name(&cli.command),
        &outcome.report,
        cli.format,
        &mut sink,
    )?;
    sink.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = run(&cli).and_then(|outcome| {
        write_report(&cli, &outcome)?;
        Ok(outcome.ok)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: a checked bound or invariant failed; see the report");
            ExitCode::from(2)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
