use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use perbranch::config::ProblemConfig;
use perbranch::continuation::{
    branch_from_trivial, find_trivial_pairs, ContinuationOptions, Region,
};
use perbranch::degree::{problem_degree, DegreeOptions};
use perbranch::fields::{validate, ProblemSpec};
use perbranch::integrate::{constant_history, integrate_dde, integrate_ode, IntegrateOptions};
use perbranch::poincare::poincare_map;
use perbranch::problems::{self, REGISTRY};
use perbranch::region::{parse_point, BoxRegion};
use perbranch::verify::{self, Suite, VerifyOptions};
use perbranch::Error;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "perbranch",
    version,
    about = "Periodic solution branches of delay-perturbed periodic ODEs"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Registry name or path to a TOML problem file
    #[arg(long, global = true, default_value = "paper-linear-3d")]
    problem: String,
    /// Write JSON output here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write tabular output (trajectory or branch) as CSV
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Integrator tolerance
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, global = true, default_value_t = verify::DEFAULT_SEED)]
    seed: u64,
    /// Worker threads for degree subdivision and Jacobian columns
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the (perturbed) equation from a constant history
    Flow {
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        /// Initial point, e.g. `0.1,0,0`
        #[arg(long)]
        start: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        periods: f64,
        /// Uniform output samples; 0 keeps the integrator mesh
        #[arg(long, default_value_t = 0)]
        samples: usize,
    },
    /// Translation operator over one period
    Poincare {
        #[arg(long)]
        start: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        /// Use the autonomous field Φ instead of a(t)Φ
        #[arg(long)]
        autonomous: bool,
    },
    /// Degree of the unperturbed field on a box
    Degree {
        /// Box as `lo..hi` per axis, e.g. `-1..1,-1..1`
        #[arg(long = "box")]
        region: Option<String>,
    },
    /// Zeros of the unperturbed field as trivial periodic pairs
    TrivialPairs {
        #[arg(long = "box")]
        region: Option<String>,
    },
    /// Continue the branch from the trivial pair nearest the box centre
    Branch {
        #[arg(long = "box")]
        region: Option<String>,
        #[arg(long)]
        lambda_max: Option<f64>,
        #[arg(long, default_value_t = 16)]
        nodes: usize,
        #[arg(long, default_value_t = 0.5)]
        max_step: f64,
        /// Orbit samples stored per pair in the JSON report
        #[arg(long, default_value_t = 32)]
        orbit_samples: usize,
    },
    /// Run verification suites
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Print the resolved configuration as TOML
    Config,
    /// List registry problems
    List,
}

enum Failure {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::UnknownProblem(_)
            | Error::Dimension { .. }
            | Error::Domain { .. } => Failure::Usage(e.into()),
            _ => Failure::Numerical(e.into()),
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn io(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Numerical(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

struct Loaded {
    config: ProblemConfig,
    spec: ProblemSpec,
}

impl Loaded {
    fn new(name: &str) -> Result<Self, Failure> {
        let config = problems::load_config(name)?;
        let spec = config.build()?;
        let report = validate(&spec);
        if !report.passed() {
            let failed: Vec<String> = report
                .failures()
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect();
            return Err(usage(anyhow!(
                "problem failed validation: {}",
                failed.join("; ")
            )));
        }
        let config = spec.config().cloned().unwrap_or(config);
        Ok(Self { config, spec })
    }

    fn envelope(&self, command: &str, result: Value) -> Value {
        json!({
            "command": command,
            "config_hash": self.config.hash(),
            "config": self.config,
            "result": result,
        })
    }

    fn csv_header(&self) -> String {
        let config = serde_json::to_string(&self.config).expect("config serializes");
        format!(
            "# config: {config}\n# config_hash: {}\n",
            self.config.hash()
        )
    }

    fn state_box(&self, arg: &Option<String>) -> Result<BoxRegion, Failure> {
        if let Some(s) = arg {
            return Ok(s.parse::<BoxRegion>()?);
        }
        Ok(problems::default_region(&self.spec)?.state_box)
    }

    fn start(&self, arg: &Option<String>) -> Result<Vec<f64>, Failure> {
        let x = match arg {
            Some(s) => parse_point(s)?,
            None => self.spec.default_start()?,
        };
        if x.len() != self.spec.dim() {
            return Err(Error::Dimension {
                expected: self.spec.dim(),
                got: x.len(),
            }
            .into());
        }
        Ok(self.spec.project(&x)?)
    }
}

fn emit(common: &Common, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(io)? + "\n";
    match &common.out {
        Some(path) => fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(io),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_csv(common: &Common, text: &str) -> Result<(), Failure> {
    if let Some(path) = &common.csv {
        fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(io)?;
    }
    Ok(())
}

fn row(values: impl IntoIterator<Item = f64>) -> String {
    let cells: Vec<String> = values.into_iter().map(|v| format!("{v:.16e}")).collect();
    cells.join(",") + "\n"
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let common = &cli.common;
    if !(common.tol > 0.0 && common.tol.is_finite()) {
        return Err(usage(anyhow!("--tol must be positive")));
    }
    let integrate = IntegrateOptions {
        tol: common.tol,
        ..IntegrateOptions::default()
    };
    match &cli.command {
        Command::List => {
            let entries: Vec<Value> = REGISTRY
                .iter()
                .map(|e| json!({ "name": e.name, "description": e.description }))
                .collect();
            emit(common, &json!(entries))
        }
        Command::Config => {
            let loaded = Loaded::new(&common.problem)?;
            let text = loaded.config.to_toml_string()?;
            match &common.out {
                Some(path) => fs::write(path, text).map_err(io),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Verify { suite } => {
            let suite: Suite = suite.parse()?;
            let opts = VerifyOptions {
                seed: common.seed,
                integrate,
            };
            let report = verify::run(suite, &opts);
            for c in report.failures() {
                eprintln!("FAIL {}: {}", c.name, c.detail);
            }
            let value = json!({
                "command": "verify",
                "config": { "suite": suite, "seed": common.seed, "tol": common.tol },
                "result": report,
            });
            emit(common, &value)?;
            if report.passed {
                Ok(())
            } else {
                Err(Failure::Verification)
            }
        }
        Command::Flow {
            lambda,
            start,
            periods,
            samples,
        } => {
            let loaded = Loaded::new(&common.problem)?;
            let p = &loaded.spec;
            let x0 = loaded.start(start)?;
            if !(*periods > 0.0 && periods.is_finite()) {
                return Err(usage(anyhow!("--periods must be positive")));
            }
            let t1 = periods * p.period();
            let seg = if *lambda == 0.0 {
                integrate_ode(p, &x0, (0.0, t1), &integrate)?
            } else {
                integrate_dde(p, *lambda, &constant_history(&x0, p.lag()), t1, &integrate)?
            };
            let times: Vec<f64> = if *samples == 0 {
                seg.nodes().iter().copied().filter(|t| *t >= 0.0).collect()
            } else {
                (0..=*samples)
                    .map(|i| t1 * i as f64 / *samples as f64)
                    .collect()
            };
            let mut csv = loaded.csv_header();
            let names: Vec<String> = (0..p.dim()).map(|i| format!("x{i}")).collect();
            let _ = writeln!(csv, "t,{}", names.join(","));
            for &t in &times {
                let t = t.min(seg.t1());
                let x = seg.eval(t)?;
                csv.push_str(&row(std::iter::once(t).chain(x)));
            }
            write_csv(common, &csv)?;
            emit(
                common,
                &loaded.envelope(
                    "flow",
                    json!({
                        "lambda": lambda,
                        "start": x0,
                        "t_end": seg.t1(),
                        "end_state": seg.end_state(),
                        "steps": seg.len() - 1,
                        "truncated": seg.is_truncated(),
                        "max_constraint_residual": seg.max_constraint_residual(),
                    }),
                ),
            )
        }
        Command::Poincare {
            start,
            lambda,
            autonomous,
        } => {
            let loaded = Loaded::new(&common.problem)?;
            let p = &loaded.spec;
            let x0 = loaded.start(start)?;
            let image = if *lambda == 0.0 {
                poincare_map(p, !autonomous, &x0, &integrate)?
            } else {
                let opts = IntegrateOptions {
                    use_coefficient: !autonomous,
                    ..integrate
                };
                let seg = integrate_dde(
                    p,
                    *lambda,
                    &constant_history(&x0, p.lag()),
                    p.period(),
                    &opts,
                )?;
                if seg.is_truncated() {
                    return Err(Error::NotInDomain {
                        t_escape: seg.t1(),
                        t_end: p.period(),
                    }
                    .into());
                }
                seg.end_state().to_vec()
            };
            let displacement = image
                .iter()
                .zip(&x0)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            emit(
                common,
                &loaded.envelope(
                    "poincare",
                    json!({
                        "lambda": lambda,
                        "autonomous": autonomous,
                        "start": x0,
                        "image": image,
                        "displacement": displacement,
                    }),
                ),
            )
        }
        Command::Degree { region } => {
            let loaded = Loaded::new(&common.problem)?;
            let b = loaded.state_box(region)?;
            let d = problem_degree(&loaded.spec, &b, &DegreeOptions::default())?;
            emit(
                common,
                &loaded.envelope("degree", json!({ "box": b.to_string(), "degree": d })),
            )
        }
        Command::TrivialPairs { region } => {
            let loaded = Loaded::new(&common.problem)?;
            let b = loaded.state_box(region)?;
            let opts = ContinuationOptions {
                integrate,
                ..ContinuationOptions::default()
            };
            let t = find_trivial_pairs(&loaded.spec, &b, &DegreeOptions::default(), &opts)?;
            let pairs: Vec<Value> = t
                .pairs
                .iter()
                .map(|q| {
                    json!({
                        "point": q.pair.history.at_zero(),
                        "index": q.index,
                        "residual_norm": q.pair.residual_norm,
                        "is_trivial": q.pair.is_trivial,
                    })
                })
                .collect();
            emit(
                common,
                &loaded.envelope(
                    "trivial-pairs",
                    json!({ "box": b.to_string(), "degree": t.degree, "pairs": pairs, "warnings": t.warnings }),
                ),
            )
        }
        Command::Branch {
            region,
            lambda_max,
            nodes,
            max_step,
            orbit_samples,
        } => {
            let loaded = Loaded::new(&common.problem)?;
            let default = problems::default_region(&loaded.spec)?;
            let region = Region::new(
                lambda_max.unwrap_or(default.lambda_max),
                match region {
                    Some(_) => loaded.state_box(region)?,
                    None => default.state_box,
                },
            )?;
            let opts = ContinuationOptions {
                m: *nodes,
                max_step: *max_step,
                integrate,
                ..ContinuationOptions::default()
            };
            let run = branch_from_trivial(&loaded.spec, &region, &DegreeOptions::default(), &opts)?;
            let b = &run.branch;
            let dim = loaded.spec.dim();
            let mut csv = loaded.csv_header();
            let names: Vec<String> = (0..dim).map(|i| format!("x{i}_at_0")).collect();
            let _ = writeln!(
                csv,
                "lambda,amplitude,orbit_max_norm,residual_norm,{}",
                names.join(",")
            );
            for q in &b.pairs {
                let head = [q.lambda, q.amplitude(), q.orbit_max_norm(), q.residual_norm];
                csv.push_str(&row(head
                    .into_iter()
                    .chain(q.history.at_zero().iter().copied())));
            }
            write_csv(common, &csv)?;
            emit(
                common,
                &loaded.envelope(
                    "branch",
                    json!({
                        "region": region,
                        "degree": run.trivial.degree,
                        "origin": run.trivial.pairs[run.origin_index].pair.history.at_zero(),
                        "origin_index": run.trivial.pairs[run.origin_index].index,
                        "noncompactness_witness": b.termination.is_noncompactness_witness(),
                        "branch": b.report(*orbit_samples),
                    }),
                ),
            )
        }
    }
}
