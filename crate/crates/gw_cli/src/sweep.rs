//! `gw sweep`: one-parameter sweeps and the common-rate tradeoff table.

use crate::opts::SolverOpts;
use crate::render::{csv_opt, num, Unit};
use crate::{parse_list, parse_triple, weights, Format, Outcome};
use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use gray_wyner::gaussian::{solve_gaussian_rd, GaussianSpec};
use gray_wyner::model::Weights;
use gray_wyner::rd_solver::{sweep_discrete, sweep_gaussian, SweepAxis, SweepRow};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    D1,
    D2,
    AlphaRay,
}

impl From<Axis> for SweepAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::D1 => SweepAxis::D1,
            Axis::D2 => SweepAxis::D2,
            Axis::AlphaRay => SweepAxis::AlphaRay,
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep description; flags given alongside override its fields.
    file: Option<PathBuf>,
    /// "gaussian" or the path of a source JSON file.
    #[arg(long)]
    source: Option<String>,
    // Lists are parsed whole from one comma-separated value; the qualified
    // path keeps clap from treating them as repeated arguments.
    /// Correlation; a comma-separated list in tradeoff mode.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    rho: Option<std::vec::Vec<f64>>,
    #[arg(long, value_parser = parse_triple)]
    weights: Option<(f64, f64, f64)>,
    /// Base targets D1,D2; the swept coordinate is replaced by the grid value.
    #[arg(long, value_parser = crate::parse_list)]
    targets: Option<std::vec::Vec<f64>>,
    #[arg(long, value_enum)]
    axis: Option<Axis>,
    /// Grid values: "start:stop:count" (inclusive) or a comma-separated list.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<std::vec::Vec<f64>>,
    /// Emit R0 against R1+R2 over a family of private weights (Gaussian only).
    #[arg(long)]
    tradeoff: bool,
    /// Private weights a for the tradeoff family (1, a, a); 1 is always included.
    #[arg(long, value_parser = parse_list)]
    private_weights: Option<std::vec::Vec<f64>>,
    /// Mark the alpha = (1,1,1) corner, whose common rate is the Wyner point.
    #[arg(long)]
    wyner_point: bool,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Debug, Default, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
    #[default]
    None,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    source: Option<String>,
    #[serde(default)]
    rho: OneOrMany,
    weights: Option<[f64; 3]>,
    targets: Option<[f64; 2]>,
    axis: Option<Axis>,
    grid: Option<Vec<f64>>,
    #[serde(default)]
    tradeoff: bool,
    private_weights: Option<Vec<f64>>,
    #[serde(default)]
    wyner_point: bool,
}

fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, n] => {
            let a: f64 = a.trim().parse().map_err(|e| format!("grid start: {}", e))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("grid stop: {}", e))?;
            let n: usize = n.trim().parse().map_err(|e| format!("grid count: {}", e))?;
            Ok(match n {
                0 => Vec::new(),
                1 => vec![a],
                _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
            })
        }
        [_] => parse_list(s),
        _ => Err("expected start:stop:count or a comma-separated list".into()),
    }
}

/// Fully resolved sweep request.
#[derive(Debug)]
struct Plan {
    source: String,
    rho: Vec<f64>,
    weights: (f64, f64, f64),
    targets: (f64, f64),
    axis: Axis,
    grid: Vec<f64>,
    tradeoff: bool,
    private_weights: Vec<f64>,
    wyner_point: bool,
}

fn plan(a: &SweepArgs) -> Result<Plan> {
    let file = match &a.file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str::<SweepFile>(&text).with_context(|| format!("invalid sweep file {}", p.display()))?
        }
        None => SweepFile::default(),
    };
    let rho = match (&a.rho, file.rho) {
        (Some(v), _) => v.clone(),
        (None, OneOrMany::One(r)) => vec![r],
        (None, OneOrMany::Many(v)) => v,
        (None, OneOrMany::None) => Vec::new(),
    };
    let targets = match (&a.targets, file.targets) {
        (Some(v), _) => match v.as_slice() {
            [d1, d2] => (*d1, *d2),
            _ => bail!("--targets takes two numbers"),
        },
        (None, Some(t)) => (t[0], t[1]),
        (None, None) => (1.0, 1.0),
    };
    let grid = a.grid.clone().or(file.grid).context("no grid given")?;
    if grid.is_empty() {
        bail!("sweep grid is empty");
    }
    let mut private_weights =
        a.private_weights.clone().or(file.private_weights).unwrap_or_else(|| vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.25, 1.5, 2.0]);
    if !private_weights.contains(&1.0) {
        private_weights.push(1.0);
    }
    private_weights.sort_by(f64::total_cmp);
    Ok(Plan {
        source: a.source.clone().or(file.source).context("no source given; use \"gaussian\" or a source file")?,
        rho,
        weights: a.weights.or(file.weights.map(|w| (w[0], w[1], w[2]))).unwrap_or((1.0, 1.0, 1.0)),
        targets,
        axis: a.axis.or(file.axis).unwrap_or(Axis::D1),
        grid,
        tradeoff: a.tradeoff || file.tradeoff,
        private_weights,
        wyner_point: a.wyner_point || file.wyner_point,
    })
}

fn sweep_header(unit: Unit) -> String {
    let u = unit.name();
    format!("axis_value,rd_{u},R0_{u},R1_{u},R2_{u},D1,D2,beta1,beta2,outer_iters,converged\n")
}

fn sweep_line(out: &mut String, first: &str, r: &SweepRow, unit: Unit) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{}",
        first,
        num(unit.of(r.rd_nats)),
        num(unit.of(r.r0_nats)),
        num(unit.of(r.r1_nats)),
        num(unit.of(r.r2_nats)),
        num(r.d1),
        num(r.d2),
        csv_opt(r.beta1),
        csv_opt(r.beta2),
        r.outer_iters,
        r.converged
    );
}

fn row_json(r: &SweepRow, unit: Unit) -> serde_json::Value {
    json!({
        "axis_value": r.axis_value,
        unit.key("rd"): unit.of(r.rd_nats),
        "R0": unit.of(r.r0_nats),
        "R1": unit.of(r.r1_nats),
        "R2": unit.of(r.r2_nats),
        "D1": r.d1,
        "D2": r.d2,
        "beta1": r.beta1,
        "beta2": r.beta2,
        "outer_iters": r.outer_iters,
        "converged": r.converged,
        "region": r.region,
        "error": r.error,
    })
}

fn single_rho(p: &Plan) -> Result<GaussianSpec> {
    match p.rho.as_slice() {
        [r] => Ok(GaussianSpec::new(*r)?),
        [] => bail!("a Gaussian sweep needs --rho"),
        _ => bail!("several correlations are only allowed with --tradeoff"),
    }
}

fn target_at(axis: Axis, v: f64, t: (f64, f64)) -> (f64, f64) {
    match axis {
        Axis::D1 => (v, t.1),
        Axis::D2 => (t.0, v),
        Axis::AlphaRay => t,
    }
}

/// The alpha = (1,1,1) solution at each grid point's targets, as sweep rows.
fn wyner_rows(spec: &GaussianSpec, p: &Plan) -> Result<Vec<SweepRow>> {
    let corner = Weights::new(1.0, 1.0, 1.0)?;
    let targets: Vec<(f64, f64)> = p.grid.iter().map(|&v| target_at(p.axis, v, p.targets)).collect();
    let mut rows = Vec::new();
    for t in targets {
        let mut r = sweep_gaussian(spec, &corner, t, SweepAxis::D1, &[t.0])?.remove(0);
        r.axis_value = match p.axis {
            Axis::D2 => t.1,
            _ => t.0,
        };
        rows.push(r);
    }
    Ok(rows)
}

fn render_rows(rows: &[SweepRow], extra: &[SweepRow], fmt: Format, unit: Unit) -> String {
    match fmt {
        Format::Json => {
            let mut m = serde_json::Map::new();
            m.insert("unit".into(), json!(unit.name()));
            m.insert("rows".into(), rows.iter().map(|r| row_json(r, unit)).collect());
            if !extra.is_empty() {
                m.insert("wyner_point".into(), extra.iter().map(|r| row_json(r, unit)).collect());
            }
            crate::render::json(m)
        }
        Format::Csv | Format::Text => {
            let mut out = sweep_header(unit);
            for r in rows {
                sweep_line(&mut out, &num(r.axis_value), r, unit);
            }
            for r in extra {
                sweep_line(&mut out, "wyner_point", r, unit);
            }
            out
        }
    }
}

struct TradeoffRow {
    rho: f64,
    targets: (f64, f64),
    a: f64,
    region: String,
    r0: f64,
    r12: f64,
}

fn tradeoff(p: &Plan, fmt: Format, unit: Unit) -> Result<Outcome> {
    if p.source != "gaussian" {
        bail!("--tradeoff needs the Gaussian source");
    }
    if p.axis == Axis::AlphaRay {
        bail!("--tradeoff sweeps a distortion; use --axis d1 or d2");
    }
    if p.rho.is_empty() {
        bail!("--tradeoff needs at least one --rho");
    }
    let mut jobs = Vec::new();
    for &rho in &p.rho {
        let spec = GaussianSpec::new(rho)?;
        for &v in &p.grid {
            for &a in &p.private_weights {
                jobs.push((spec, target_at(p.axis, v, p.targets), a));
            }
        }
    }
    let rows: Vec<TradeoffRow> = jobs
        .par_iter()
        .map(|&(spec, t, a)| {
            let w = Weights::new(1.0, a, a)?;
            let s = solve_gaussian_rd(&w, t, &spec)?;
            Ok(TradeoffRow {
                rho: spec.rho(),
                targets: t,
                a,
                region: s.region.to_string(),
                r0: s.rate_triple.r0,
                r12: s.rate_triple.r1 + s.rate_triple.r2,
            })
        })
        .collect::<Result<_>>()?;
    let mark = |r: &TradeoffRow| p.wyner_point && r.a == 1.0;
    let text = match fmt {
        Format::Json => {
            let list: Vec<_> = rows
                .iter()
                .map(|r| {
                    json!({"rho": r.rho, "D1": r.targets.0, "D2": r.targets.1, "alpha1": r.a, "alpha2": r.a,
                           "region": r.region, "R0": unit.of(r.r0), "R1plusR2": unit.of(r.r12), "wyner_point": mark(r)})
                })
                .collect();
            let mut m = serde_json::Map::new();
            m.insert("unit".into(), json!(unit.name()));
            m.insert("rows".into(), json!(list));
            crate::render::json(m)
        }
        Format::Csv | Format::Text => {
            let mut out = String::from("rho,D1,D2,alpha1,alpha2,region,R0,R1plusR2,wyner_point\n");
            for r in &rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    num(r.rho),
                    num(r.targets.0),
                    num(r.targets.1),
                    num(r.a),
                    num(r.a),
                    r.region,
                    num(unit.of(r.r0)),
                    num(unit.of(r.r12)),
                    mark(r)
                );
            }
            out
        }
    };
    Ok(Outcome::solved(text, true))
}

pub fn run(a: &SweepArgs, fmt: Format, unit: Unit, seed: Option<u64>) -> Result<Outcome> {
    let p = plan(a)?;
    if p.tradeoff {
        return tradeoff(&p, fmt, unit);
    }
    let w = weights(p.weights)?;
    let (rows, extra) = if p.source == "gaussian" {
        let spec = single_rho(&p)?;
        let rows = sweep_gaussian(&spec, &w, p.targets, p.axis.into(), &p.grid)?;
        let extra = if p.wyner_point {
            if p.axis == Axis::AlphaRay {
                bail!("--wyner-point needs a distortion axis");
            }
            wyner_rows(&spec, &p)?
        } else {
            Vec::new()
        };
        (rows, extra)
    } else {
        if p.wyner_point {
            bail!("--wyner-point is only defined for the Gaussian source");
        }
        let (pmf, dist) = crate::source::read_source(Path::new(&p.source))?;
        let cfg = a.solver.outer(seed)?;
        (sweep_discrete(&pmf, &dist, &w, p.targets, p.axis.into(), &p.grid, &cfg)?, Vec::new())
    };
    for (i, r) in rows.iter().enumerate() {
        if let Some(e) = &r.error {
            eprintln!("row {} (axis value {}): {}", i, r.axis_value, e);
        }
    }
    let converged = rows.iter().all(|r| r.error.is_none() && r.converged);
    Ok(Outcome::solved(render_rows(&rows, &extra, fmt, unit), converged))
}
