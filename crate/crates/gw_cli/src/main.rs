mod opts;
mod render;
mod source;
mod sweep;
mod verify;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gray_wyner::gaussian::{solve_gaussian_rd, wyner_ci, GaussianSolution, GaussianSpec, Region};
use gray_wyner::model::{discretize_gaussian, Multipliers, Weights};
use gray_wyner::rd_solver::{rd_from_multipliers, solve_rd, RdResult};
use opts::SolverOpts;
use render::{csv_opt, f, num, pair, Unit};
use serde_json::{json, Map, Value};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "gw", version, about = "Weighted rate-distortion for the Gray-Wyner network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Report rates in bits instead of nats.
    #[arg(long, global = true)]
    bits: bool,
    /// Write the result here instead of stdout.
    #[arg(long, short, global = true, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Seed for the randomized starting priors.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a finite-alphabet source given as JSON.
    Discrete(DiscreteArgs),
    /// Closed-form solution for a unit-variance Gaussian pair.
    Gaussian(GaussianArgs),
    /// Lossy Wyner common information of a Gaussian pair.
    Wyner(WynerArgs),
    /// Sweep one distortion or the weight scale; CSV by default.
    Sweep(sweep::SweepArgs),
    /// Run the optimality and certificate checks on a built-in corpus.
    Verify(verify::VerifyArgs),
}

#[derive(Debug, Args)]
struct DiscreteArgs {
    /// Source file: {"alphabet": [n1, n2], "probs": [[...]], "d1": [[...]], "d2": [[...]]}.
    source: PathBuf,
    /// alpha0,alpha1,alpha2
    #[arg(long, value_parser = parse_triple, default_value = "1,1,1")]
    weights: (f64, f64, f64),
    /// Target distortions D1,D2.
    #[arg(long, value_parser = parse_pair, conflicts_with = "multipliers", required_unless_present = "multipliers")]
    targets: Option<(f64, f64)>,
    /// Fixed multipliers beta1,beta2 instead of targets.
    #[arg(long, value_parser = parse_pair)]
    multipliers: Option<(f64, f64)>,
    /// Write the final inner Lagrangian trace as CSV.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Debug, Args)]
struct GaussianArgs {
    #[arg(long, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, value_parser = parse_triple, default_value = "1,1,1")]
    weights: (f64, f64, f64),
    #[arg(long, value_parser = parse_pair)]
    targets: (f64, f64),
    /// Also solve a discretized copy of the source numerically and compare.
    #[arg(long)]
    check: bool,
    /// Grid points per axis for --check.
    #[arg(long, default_value_t = 33)]
    grid: usize,
    /// Grid half width, in standard deviations, for --check.
    #[arg(long, default_value_t = 4.0)]
    half_width: f64,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Debug, Args)]
struct WynerArgs {
    #[arg(long, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, value_parser = parse_pair)]
    targets: (f64, f64),
}

pub(crate) fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("\"{}\": {}", t.trim(), e))).collect()
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    match parse_list(s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        v => Err(format!("expected two comma-separated numbers, got {}", v.len())),
    }
}

pub(crate) fn parse_triple(s: &str) -> Result<(f64, f64, f64), String> {
    match parse_list(s)?.as_slice() {
        [a, b, c] => Ok((*a, *b, *c)),
        v => Err(format!("expected three comma-separated numbers, got {}", v.len())),
    }
}

pub(crate) fn weights(t: (f64, f64, f64)) -> Result<Weights> {
    Ok(Weights::new(t.0, t.1, t.2)?)
}

/// Rendered output and the exit code: 0 success, 1 failed checks, 2 not converged.
pub(crate) struct Outcome {
    pub text: String,
    pub code: u8,
}

impl Outcome {
    pub fn solved(text: String, converged: bool) -> Self {
        Self { text, code: if converged { 0 } else { 2 } }
    }
}

fn run_discrete(a: &DiscreteArgs, fmt: Format, unit: Unit, seed: Option<u64>) -> Result<Outcome> {
    let (pmf, dist) = source::read_source(&a.source)?;
    let w = weights(a.weights)?;
    let cfg = a.solver.outer(seed)?;
    let r = match (a.targets, a.multipliers) {
        (Some(t), _) => solve_rd(&pmf, &dist, &w, t, &cfg)?,
        (None, Some(b)) => rd_from_multipliers(&pmf, &dist, &w, &Multipliers::new(b.0, b.1)?, &cfg.inner)?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    if let Some(path) = &a.trace {
        let mut s = format!("iteration,{}\n", unit.key("lagrangian"));
        for (i, v) in r.trace.iter().enumerate() {
            let _ = writeln!(s, "{},{}", i + 1, num(unit.of(*v)));
        }
        std::fs::write(path, s).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(Outcome::solved(render_discrete(&r, &w, fmt, unit), r.converged && r.inner_converged))
}

fn render_discrete(r: &RdResult, w: &Weights, fmt: Format, unit: Unit) -> String {
    let rt = &r.rate_triple;
    match fmt {
        Format::Json => {
            let mut m = Map::new();
            m.insert("unit".into(), json!(unit.name()));
            m.insert("mode".into(), json!(if r.targets.is_some() { "targets" } else { "multipliers" }));
            m.insert("weights".into(), json!([w.a0, w.a1, w.a2]));
            m.insert("targets".into(), json!(r.targets.map(|t| [t.0, t.1])));
            m.insert(unit.key("rd"), json!(unit.of(r.rd_value)));
            m.insert(unit.key("rd_at_achieved"), json!(unit.of(r.rd_at_achieved)));
            m.insert("R0".into(), json!(unit.of(rt.r0)));
            m.insert("R1".into(), json!(unit.of(rt.r1)));
            m.insert("R2".into(), json!(unit.of(rt.r2)));
            m.insert("D1".into(), json!(r.achieved.0));
            m.insert("D2".into(), json!(r.achieved.1));
            m.insert("beta1".into(), json!(r.multipliers.b1));
            m.insert("beta2".into(), json!(r.multipliers.b2));
            m.insert(unit.key("lagrangian"), json!(unit.of(r.lagrangian)));
            m.insert("inner_iterations".into(), json!(r.inner_iterations));
            m.insert("inner_converged".into(), json!(r.inner_converged));
            m.insert("outer_iters".into(), json!(r.outer_iterations));
            m.insert("converged".into(), json!(r.converged));
            m.insert("notes".into(), json!(r.notes));
            render::json(m)
        }
        Format::Csv => {
            let u = unit.name();
            format!(
                "rd_{u},R0_{u},R1_{u},R2_{u},D1,D2,beta1,beta2,outer_iters,converged\n{},{},{},{},{},{},{},{},{},{}\n",
                num(unit.of(r.rd_value)),
                num(unit.of(rt.r0)),
                num(unit.of(rt.r1)),
                num(unit.of(rt.r2)),
                num(r.achieved.0),
                num(r.achieved.1),
                num(r.multipliers.b1),
                num(r.multipliers.b2),
                r.outer_iterations,
                r.converged && r.inner_converged,
            )
        }
        Format::Text => {
            let u = unit.name();
            let mut rows = vec![
                ("weights", format!("({}, {}, {})", w.a0, w.a1, w.a2)),
                ("targets", r.targets.map(pair).unwrap_or_else(|| "none (fixed multipliers)".into())),
                ("rd", format!("{} {}", f(unit.of(r.rd_value)), u)),
                ("R0 R1 R2", format!("{} {} {} {}", f(unit.of(rt.r0)), f(unit.of(rt.r1)), f(unit.of(rt.r2)), u)),
                ("achieved D", format!("({}, {})", f(r.achieved.0), f(r.achieved.1))),
                ("multipliers", format!("({}, {})", f(r.multipliers.b1), f(r.multipliers.b2))),
                ("iterations", format!("outer {}, last inner {}", r.outer_iterations, r.inner_iterations)),
                ("converged", format!("{}", r.converged && r.inner_converged)),
            ];
            for n in &r.notes {
                rows.push(("note", n.clone()));
            }
            render::text(&rows)
        }
    }
}

fn gaussian_fields(s: &GaussianSolution, unit: Unit) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("region".into(), json!(s.region.to_string()));
    if let Region::Special(c) = s.region {
        m.insert("special_case".into(), json!(c.numeral()));
    }
    let (m1, m2, s0) = match s.params {
        Some(p) => (Some(p.0), Some(p.1), Some(p.2)),
        None => (None, None, None),
    };
    m.insert("m1".into(), json!(m1));
    m.insert("m2".into(), json!(m2));
    m.insert("sigma0sq".into(), json!(s0));
    m.insert(unit.key("rd"), json!(unit.of(s.rd_value)));
    m.insert("R0".into(), json!(unit.of(s.rate_triple.r0)));
    m.insert("R1".into(), json!(unit.of(s.rate_triple.r1)));
    m.insert("R2".into(), json!(unit.of(s.rate_triple.r2)));
    m.insert("unit".into(), json!(unit.name()));
    m.insert("boundary_root".into(), json!(s.boundary_root));
    m.insert("certificate".into(), serde_json::to_value(s.certificate).expect("plain numbers"));
    m
}

fn run_gaussian(a: &GaussianArgs, fmt: Format, unit: Unit, seed: Option<u64>) -> Result<Outcome> {
    let spec = GaussianSpec::new(a.rho)?;
    let w = weights(a.weights)?;
    let s = solve_gaussian_rd(&w, a.targets, &spec)?;
    let mut check = None;
    if a.check {
        let (pmf, dist) = discretize_gaussian(a.rho, a.half_width, a.grid)?;
        let mut cfg = a.solver.outer(seed)?;
        // m1 * m2 auxiliary symbols would be far more than the optimum uses.
        if cfg.inner.u_size.is_none() && a.solver.u_size.is_none() {
            cfg.inner.u_size = Some(8);
        }
        if let Some(c) = s.certificate {
            cfg.initial = (c.beta1 / w.a0, c.beta2 / w.a0);
        }
        let r = solve_rd(&pmf, &dist, &w, a.targets, &cfg)?;
        check = Some(r);
    }
    let converged = check.as_ref().is_none_or(|r| r.converged && r.inner_converged);
    let u = unit.name();
    let text = match fmt {
        Format::Json => {
            let mut m = gaussian_fields(&s, unit);
            if let Some(r) = &check {
                m.insert(
                    "check".into(),
                    json!({
                        "grid_points": a.grid,
                        "half_width": a.half_width,
                        unit.key("rd"): unit.of(r.rd_value),
                        unit.key("difference"): unit.of(r.rd_value - s.rd_value),
                        "outer_iters": r.outer_iterations,
                        "converged": r.converged && r.inner_converged,
                    }),
                );
            }
            render::json(m)
        }
        Format::Csv => {
            let (m1, m2, s0) = s.params.map_or((None, None, None), |p| (Some(p.0), Some(p.1), Some(p.2)));
            let mut out = format!("region,m1,m2,sigma0sq,rd_{u},R0_{u},R1_{u},R2_{u}");
            if check.is_some() {
                let _ = write!(out, ",check_rd_{u},check_converged");
            }
            let _ = write!(
                out,
                "\n{},{},{},{},{},{},{},{}",
                s.region,
                csv_opt(m1),
                csv_opt(m2),
                csv_opt(s0),
                num(unit.of(s.rd_value)),
                num(unit.of(s.rate_triple.r0)),
                num(unit.of(s.rate_triple.r1)),
                num(unit.of(s.rate_triple.r2))
            );
            if let Some(r) = &check {
                let _ = write!(out, ",{},{}", num(unit.of(r.rd_value)), r.converged && r.inner_converged);
            }
            out.push('\n');
            out
        }
        Format::Text => {
            let mut rows = vec![("region", s.region.to_string())];
            if let Region::Special(c) = s.region {
                rows.push(("special case", c.numeral().to_string()));
            }
            if let Some((m1, m2, s0)) = s.params {
                rows.push(("m1 m2 sigma0sq", format!("{} {} {}", f(m1), f(m2), f(s0))));
            }
            rows.push(("rd", format!("{} {}", f(unit.of(s.rd_value)), u)));
            let rt = &s.rate_triple;
            rows.push(("R0 R1 R2", format!("{} {} {} {}", f(unit.of(rt.r0)), f(unit.of(rt.r1)), f(unit.of(rt.r2)), u)));
            if let Some(c) = &s.certificate {
                rows.push(("multipliers", format!("({}, {})", f(c.beta1), f(c.beta2))));
            }
            if s.boundary_root {
                rows.push(("note", "root taken at the edge of its bracket".into()));
            }
            if let Some(r) = &check {
                rows.push((
                    "numerical check",
                    format!(
                        "{} {} on a {}-point grid (difference {:+.2e}, converged {})",
                        f(unit.of(r.rd_value)),
                        u,
                        a.grid,
                        unit.of(r.rd_value - s.rd_value),
                        r.converged && r.inner_converged
                    ),
                ));
            }
            render::text(&rows)
        }
    };
    Ok(Outcome::solved(text, converged))
}

fn run_wyner(a: &WynerArgs, fmt: Format, unit: Unit) -> Result<Outcome> {
    let spec = GaussianSpec::new(a.rho)?;
    let (cw, case) = wyner_ci(a.targets, &spec)?;
    let u = unit.name();
    let text = match fmt {
        Format::Json => {
            let mut m = Map::new();
            m.insert("rho".into(), json!(a.rho));
            m.insert("D1".into(), json!(a.targets.0));
            m.insert("D2".into(), json!(a.targets.1));
            m.insert("case".into(), json!(case.to_string()));
            m.insert(unit.key("c_w"), json!(unit.of(cw)));
            render::json(m)
        }
        Format::Csv => format!("rho,D1,D2,case,C_W_{u}\n{},{},{},{},{}\n", num(a.rho), num(a.targets.0), num(a.targets.1), case, num(unit.of(cw))),
        Format::Text => render::text(&[("case", case.to_string()), ("C_W", format!("{} {}", f(unit.of(cw)), u))]),
    };
    Ok(Outcome::solved(text, true))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GW_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).with_context(|| format!("GW_THREADS must be a positive integer, got \"{}\"", v))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot size the thread pool")?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Outcome> {
    configure_threads()?;
    let unit = Unit { bits: cli.bits };
    match &cli.command {
        Command::Discrete(a) => run_discrete(a, cli.format, unit, cli.seed),
        Command::Gaussian(a) => run_gaussian(a, cli.format, unit, cli.seed),
        Command::Wyner(a) => run_wyner(a, cli.format, unit),
        Command::Sweep(a) => sweep::run(a, cli.format, unit, cli.seed),
        Command::Verify(a) => verify::run(a, cli.format, cli.seed),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = run(&cli).and_then(|o| {
        emit(&cli, &o.text)?;
        Ok(o.code)
    });
    match result {
        Ok(2) => {
            eprintln!("warning: not converged; the result is partial");
            ExitCode::from(2)
        }
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(1)
        }
    }
}
