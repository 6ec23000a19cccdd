use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tfmlab::bounds::lp;
use tfmlab::catalog::{default_catalog, Family, MechanismSpec, PaymentCurve};
use tfmlab::checkers::{CoalitionCap, Property};
use tfmlab::grid::GridSpec;
use tfmlab::model::{BidderId, Mechanism};
use tfmlab::money::{Money, Reserve};
use tfmlab::report::{self, BoundsJob, Report, RunConfig};

#[derive(Parser)]
#[command(name = "tfmlab", version, about = "Check incentive properties of transaction fee mechanisms")]
struct Cli {
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Search sequentially and omit timings, so reports are reproducible.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check properties of one mechanism on a grid.
    Check(CheckArgs),
    /// Run a prepared experiment suite.
    Suite {
        #[command(subcommand)]
        suite: SuiteCommand,
    },
    /// Evaluate the analytic bounds.
    Bounds {
        #[command(subcommand)]
        bound: BoundsCommand,
    },
    /// Solve the discretized feasibility program.
    Lp {
        /// Geometric grid `base:ratio:count`.
        #[arg(long, default_value = "1:3/2:20")]
        grid_geom: String,
        /// Grid index whose single-bid allocation is maximized (default: top).
        #[arg(long)]
        target: Option<usize>,
        /// Also write the program in CPLEX LP format.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// List catalog mechanisms.
    Catalog {
        #[command(subcommand)]
        action: CatalogCommand,
    },
    /// Execute a JSON run configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct CheckArgs {
    /// Mechanism family, e.g. `third_price` or `burned-second-price`.
    #[arg(long)]
    mechanism: String,
    /// Reserve or burn rate; `inf` for never allocating.
    #[arg(long)]
    r: Option<Reserve>,
    /// Payment curve: `id`, `const`, `<a>v+<b>`.
    #[arg(long)]
    f: Option<PaymentCurve>,
    /// Special bidder of the non-anonymous family, e.g. `b0`.
    #[arg(long)]
    i_star: Option<BidderId>,
    /// Bid grid `lo..hi:step`.
    #[arg(long, default_value = "0..2:1/4")]
    grid: GridSpec,
    /// Largest number of real bids per profile.
    #[arg(long)]
    max_bidders: Option<usize>,
    /// Largest number of injected fake bids.
    #[arg(long)]
    fake_bids: Option<usize>,
    /// Coalition size for `oca` and `scp` given without one: a number or `all`.
    #[arg(long, default_value = "1")]
    coalition: CoalitionCap,
    /// Properties: dsic, mmic, oca[:c], oca_joint, scp[:c], scale, ctpa, anon.
    #[arg(long = "property", short = 'p', value_delimiter = ',', required = true)]
    properties: Vec<String>,
    /// Only search these value vectors, e.g. `1,1/2,1/4`. Repeatable.
    #[arg(long)]
    focus: Vec<String>,
}

#[derive(Subcommand)]
enum SuiteCommand {
    /// Search both characterized families for a non-trivial mechanism
    /// passing DSIC, MMIC and OCA(1).
    Impossibility {
        #[arg(long, default_value = "0..4:1/2")]
        grid: GridSpec,
        #[arg(long, value_delimiter = ',', default_value = "0,1/2,1,2,inf")]
        reserves: Vec<Reserve>,
    },
    /// Reproduce the headline values with expected and actual columns.
    Paper,
}

#[derive(Subcommand)]
enum BoundsCommand {
    /// Minimize the single-bid allocation bound.
    Allocation {
        #[arg(long, default_value_t = 1e6)]
        a_max: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Contradiction test and threshold for the two-bidder bounds.
    Efficiency {
        #[arg(long)]
        v1: f64,
        #[arg(long)]
        v2: f64,
        /// Ratios `u/v1` to test.
        #[arg(long, value_delimiter = ',', default_value = "0.842,0.83")]
        ratio: Vec<f64>,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

#[derive(Subcommand)]
enum CatalogCommand {
    List,
}

fn parse_property(text: &str, cap: CoalitionCap) -> Result<Property> {
    Ok(match text.trim() {
        "oca" => Property::Oca(cap),
        "scp" => Property::Scp(cap),
        other => other.parse()?,
    })
}

fn parse_values(text: &str) -> Result<Vec<Money>> {
    text.split(',')
        .map(|v| v.trim().parse::<Money>().with_context(|| format!("bad value `{v}`")))
        .collect()
}

fn check_config(args: CheckArgs, deterministic: bool) -> Result<RunConfig> {
    let Some(family) = Family::parse(&args.mechanism) else {
        let known: Vec<&str> = Family::ALL.iter().map(|f| f.as_str()).collect();
        bail!("unknown mechanism `{}`; known: {}", args.mechanism, known.join(", "));
    };
    let mut spec = MechanismSpec::of(family);
    spec.r = args.r;
    spec.f = args.f;
    spec.i_star = args.i_star;
    let mut grid = args.grid;
    if args.max_bidders.is_some() || args.fake_bids.is_some() {
        let n = args.max_bidders.unwrap_or(grid.max_profile_size());
        let fakes = args.fake_bids.unwrap_or(grid.max_fake_bids());
        grid = grid.with_caps(n, fakes);
    }
    let properties = args
        .properties
        .iter()
        .map(|p| parse_property(p, args.coalition))
        .collect::<Result<Vec<_>>>()?;
    let focus = if args.focus.is_empty() {
        None
    } else {
        Some(args.focus.iter().map(|f| parse_values(f)).collect::<Result<Vec<_>>>()?)
    };
    Ok(RunConfig {
        mechanism: Some(spec),
        grid: Some(grid),
        properties,
        deterministic: deterministic || focus.is_some(),
        focus,
        ..RunConfig::default()
    })
}

fn summarize(report: &Report) {
    for v in &report.verdicts {
        let status = match v.verdict.witness() {
            None => "pass".to_string(),
            Some(w) => format!("violation (lhs {}, rhs {})", w.lhs, w.rhs),
        };
        println!("{} {} on {}: {status}", v.mechanism, v.property, v.grid);
    }
    if let Some(s) = &report.suite {
        println!("{}: {}", s.name, if s.ok { "ok" } else { "FAILED" });
        for e in &s.expectations {
            let mark = if e.ok { "ok  " } else { "FAIL" };
            println!("  {mark} {}: expected {}, got {}", e.name, e.expected, e.actual);
        }
    }
    for e in &report.errors {
        eprintln!("error: {e}");
    }
}

fn emit(report: &Report, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
            summarize(report);
        }
        None => print!("{}", report.to_json()),
    }
    Ok(())
}

fn bounds_config(job: BoundsJob, deterministic: bool) -> RunConfig {
    RunConfig {
        bounds: vec![job],
        deterministic,
        ..RunConfig::default()
    }
}

fn execute(cli: Cli) -> Result<Option<Report>> {
    let det = cli.deterministic;
    let report = match cli.command {
        Command::Check(args) => report::run(&check_config(args, det)?)?,
        Command::Suite { suite } => match suite {
            SuiteCommand::Impossibility { grid, reserves } => {
                report::suite_deterministic_impossibility(&reserves, &grid, det)
            }
            SuiteCommand::Paper => report::suite_paper_tables(det),
        },
        Command::Bounds { bound } => {
            let job = match bound {
                BoundsCommand::Allocation { a_max, tol } => BoundsJob::AllocationBound { a_max, tol },
                BoundsCommand::Efficiency { v1, v2, ratio, tol } => BoundsJob::Efficiency {
                    v1,
                    v2,
                    ratios: ratio,
                    tol,
                },
            };
            report::run(&bounds_config(job, det))?
        }
        Command::Lp {
            grid_geom,
            target,
            export,
        } => {
            if let Some(path) = export {
                let grid = GridSpec::parse_geometric(&grid_geom)?;
                let program = lp::build_lp(&grid)?;
                fs::write(&path, lp::to_lp_format(&program))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            report::run(&bounds_config(BoundsJob::Lp { grid_geom, target }, det))?
        }
        Command::Catalog { .. } => {
            for m in default_catalog() {
                let anon = if m.is_anonymous() { "anonymous" } else { "non-anonymous" };
                println!("{:<44} {anon}", m.spec().to_string());
            }
            println!();
            for f in Family::ALL {
                println!("family {}", f.as_str());
            }
            return Ok(None);
        }
        Command::Run { config } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = RunConfig::from_json(&text)?;
            cfg.deterministic |= det;
            let report = report::run(&cfg)?;
            let out = cli.out.as_ref().or(cfg.output.as_ref());
            emit(&report, out)?;
            return Ok(Some(report));
        }
    };
    emit(&report, cli.out.as_ref())?;
    Ok(Some(report))
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(Some(report)) if report.failed() => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
