//! Target distortions to weighted rate via an outer search over the
//! Lagrange multipliers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ba_core::{minimize_lagrangian, BaConfig};
use crate::error::{Error, Result};
use crate::gaussian::{solve_gaussian_rd, GaussianSpec};
use crate::model::{
    d_max, expected_distortions, rate_triple, rate_triple_raw, CodingDistribution, DistortionSpec, JointPmf,
    Multipliers, RateTriple, ReproductionPrior, Weights,
};

/// How the multipliers move between outer iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// beta <- max(0, beta + gamma_n (D_achieved - D_target)), gamma_n = gamma0 decay^n.
    Subgradient,
    /// Per-coordinate secant on the achieved distortion as a function of its
    /// multiplier, falling back to the subgradient step whenever the secant
    /// slope is unusable. Each step is limited to a factor of 4 either way.
    #[default]
    Secant,
}

/// `initial` and `gamma0` are in units of the common weight a0, so scaling
/// all weights scales the whole multiplier path with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterConfig {
    pub epsilon_d: f64,
    pub gamma0: f64,
    pub decay: f64,
    pub max_outer: usize,
    #[serde(default)]
    pub step: StepRule,
    pub initial: (f64, f64),
    pub inner: BaConfig,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            epsilon_d: 1e-4,
            gamma0: 2.0,
            decay: 0.97,
            max_outer: 100,
            step: StepRule::Secant,
            initial: (1.0, 1.0),
            inner: BaConfig::default(),
        }
    }
}

impl OuterConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.epsilon_d > 0.0) || !(self.gamma0 > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Invalid(format!(
                "need epsilon_d > 0, gamma0 > 0 and decay in (0, 1]; got {}, {}, {}",
                self.epsilon_d, self.gamma0, self.decay
            )));
        }
        if self.max_outer == 0 {
            return Err(Error::Invalid("max_outer must be at least 1".into()));
        }
        self.inner.check()
    }
}

/// One multiplier evaluation: Lagrangian minimum and the distortions it achieves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub multipliers: Multipliers,
    pub lagrangian: f64,
    pub achieved: (f64, f64),
    pub inner_iterations: usize,
    /// Largest step-to-step increase of the inner Lagrangian trace.
    pub max_ascent: f64,
}

#[derive(Debug, Clone)]
pub struct RdResult {
    /// Weighted rate. At the achieved distortions for a fixed-multiplier run;
    /// at the targets (best dual value seen) for a target run.
    pub rd_value: f64,
    /// Lagrangian minus multiplier times achieved distortion.
    pub rd_at_achieved: f64,
    pub achieved: (f64, f64),
    pub targets: Option<(f64, f64)>,
    pub multipliers: Multipliers,
    pub lagrangian: f64,
    pub rate_triple: RateTriple,
    pub inner_iterations: usize,
    pub inner_converged: bool,
    pub trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub history: Vec<DualPoint>,
    pub notes: Vec<String>,
    pub coding: CodingDistribution,
    pub prior: ReproductionPrior,
}

/// Runs the inner minimization once at fixed multipliers.
pub fn rd_from_multipliers(
    pmf: &JointPmf,
    dist: &DistortionSpec,
    w: &Weights,
    b: &Multipliers,
    inner: &BaConfig,
) -> Result<RdResult> {
    let state = minimize_lagrangian(pmf, dist, w, b, inner)?;
    let max_ascent = state.max_ascent();
    let raw = rate_triple_raw(pmf, &state.coding)?;
    let achieved = expected_distortions(pmf, &state.coding, dist)?;
    // lagrangian_p = weighted rates + b . D, so the value at the achieved
    // distortions is the weighted rate itself.
    let rd = raw.weighted(w);
    let lagrangian = rd + b.b1 * achieved.0 + b.b2 * achieved.1;
    let point = DualPoint { multipliers: *b, lagrangian, achieved, inner_iterations: state.iteration, max_ascent };
    Ok(RdResult {
        rd_value: rd,
        rd_at_achieved: rd,
        achieved,
        targets: None,
        multipliers: *b,
        lagrangian,
        rate_triple: rate_triple(pmf, &state.coding)?,
        inner_iterations: state.iteration,
        inner_converged: state.converged,
        trace: state.trace,
        outer_iterations: 1,
        converged: state.converged,
        history: vec![point],
        notes: Vec::new(),
        coding: state.coding,
        prior: state.prior,
    })
}

/// Weighted rate at target distortions.
///
/// Targets at or above the constant-guess distortion pin that multiplier to
/// zero. The reported value is the largest `L*(b) - b . D_target` over all
/// multipliers evaluated.
pub fn solve_rd(
    pmf: &JointPmf,
    dist: &DistortionSpec,
    w: &Weights,
    targets: (f64, f64),
    config: &OuterConfig,
) -> Result<RdResult> {
    config.check()?;
    if !(targets.0 > 0.0 && targets.1 > 0.0) {
        return Err(Error::Invalid(format!("targets ({}, {}) must be positive", targets.0, targets.1)));
    }
    let dmax = d_max(pmf, dist)?;
    let active = [targets.0 < dmax.0, targets.1 < dmax.1];
    let t = [targets.0, targets.1];
    let mut notes = Vec::new();
    for i in 0..2 {
        if !active[i] {
            notes.push(format!(
                "target D{} = {} is at or above the constant-guess distortion {}; multiplier pinned to 0",
                i + 1,
                t[i],
                [dmax.0, dmax.1][i]
            ));
        }
    }
    let mut beta = [
        if active[0] { w.a0 * config.initial.0.max(0.0) } else { 0.0 },
        if active[1] { w.a0 * config.initial.1.max(0.0) } else { 0.0 },
    ];
    let mut inner = config.inner.clone();
    let mut history: Vec<DualPoint> = Vec::new();
    let mut best_dual = f64::NEG_INFINITY;
    let mut last: Option<RdResult> = None;
    let mut converged = false;
    let mut outer = 0;
    while outer < config.max_outer {
        outer += 1;
        let b = Multipliers { b1: beta[0], b2: beta[1] };
        let r = rd_from_multipliers(pmf, dist, w, &b, &inner)?;
        inner.init = Some(r.prior.clone());
        history.push(r.history[0]);
        best_dual = best_dual.max(r.lagrangian - beta[0] * t[0] - beta[1] * t[1]);
        let d = [r.achieved.0, r.achieved.1];
        let satisfied = |i: usize| -> bool {
            (d[i] - t[i]).abs() <= config.epsilon_d || (beta[i] == 0.0 && d[i] <= t[i] + config.epsilon_d)
        };
        let done = satisfied(0) && satisfied(1) && r.inner_converged;
        last = Some(r);
        if done {
            converged = true;
            break;
        }
        let gamma = w.a0 * config.gamma0 * config.decay.powi(outer as i32 - 1);
        for i in 0..2 {
            if !active[i] {
                continue;
            }
            let sub = (beta[i] + gamma * (d[i] - t[i])).max(0.0);
            let next = match (config.step, history.len()) {
                (StepRule::Secant, n) if n >= 2 => {
                    let prev = &history[n - 2];
                    let (b0, d0) = ([prev.multipliers.b1, prev.multipliers.b2][i], [prev.achieved.0, prev.achieved.1][i]);
                    let slope = (d[i] - d0) / (beta[i] - b0);
                    if slope.is_finite() && slope < 0.0 && beta[i] > 0.0 {
                        let s = beta[i] + (t[i] - d[i]) / slope;
                        s.clamp(0.25 * beta[i], 4.0 * beta[i])
                    } else {
                        sub
                    }
                }
                _ => sub,
            };
            if (d[i] - t[i]).abs() > config.epsilon_d {
                beta[i] = next;
            }
        }
    }
    let mut r = last.expect("at least one outer iteration");
    if !converged {
        notes.push(format!("outer loop stopped after {} iterations without meeting epsilon_d", outer));
    }
    r.rd_value = best_dual.max(0.0);
    r.targets = Some(targets);
    r.outer_iterations = outer;
    r.converged = converged;
    r.history = history;
    r.notes = notes;
    Ok(r)
}

/// Which quantity a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    D1,
    D2,
    /// Multiplies all three weights by the grid value.
    AlphaRay,
}

/// One row of a sweep; `error` is set instead of the numbers when the point failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub rd_nats: f64,
    pub r0_nats: f64,
    pub r1_nats: f64,
    pub r2_nats: f64,
    pub d1: f64,
    pub d2: f64,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub outer_iters: usize,
    pub converged: bool,
    pub region: Option<String>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(axis_value: f64, e: Error) -> Self {
        Self {
            axis_value,
            rd_nats: f64::NAN,
            r0_nats: f64::NAN,
            r1_nats: f64::NAN,
            r2_nats: f64::NAN,
            d1: f64::NAN,
            d2: f64::NAN,
            beta1: None,
            beta2: None,
            outer_iters: 0,
            converged: false,
            region: None,
            error: Some(e.to_string()),
        }
    }
}

fn point_for(axis: SweepAxis, v: f64, w: &Weights, targets: (f64, f64)) -> (Weights, (f64, f64)) {
    match axis {
        SweepAxis::D1 => (*w, (v, targets.1)),
        SweepAxis::D2 => (*w, (targets.0, v)),
        SweepAxis::AlphaRay => (w.scaled(v), targets),
    }
}

/// Solves every grid point of a finite-source sweep, rows in grid order.
pub fn sweep_discrete(
    pmf: &JointPmf,
    dist: &DistortionSpec,
    w: &Weights,
    targets: (f64, f64),
    axis: SweepAxis,
    grid: &[f64],
    config: &OuterConfig,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Invalid("sweep grid is empty".into()));
    }
    Ok(grid
        .par_iter()
        .map(|&v| {
            let (wv, tv) = point_for(axis, v, w, targets);
            match Weights::new(wv.a0, wv.a1, wv.a2).and_then(|wv| solve_rd(pmf, dist, &wv, tv, config)) {
                Ok(r) => SweepRow {
                    axis_value: v,
                    rd_nats: r.rd_value,
                    r0_nats: r.rate_triple.r0,
                    r1_nats: r.rate_triple.r1,
                    r2_nats: r.rate_triple.r2,
                    d1: r.achieved.0,
                    d2: r.achieved.1,
                    beta1: Some(r.multipliers.b1),
                    beta2: Some(r.multipliers.b2),
                    outer_iters: r.outer_iterations,
                    converged: r.converged,
                    region: None,
                    error: None,
                },
                Err(e) => SweepRow::failed(v, e),
            }
        })
        .collect())
}

/// Closed-form Gaussian sweep, rows in grid order.
pub fn sweep_gaussian(
    spec: &GaussianSpec,
    w: &Weights,
    targets: (f64, f64),
    axis: SweepAxis,
    grid: &[f64],
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Invalid("sweep grid is empty".into()));
    }
    Ok(grid
        .par_iter()
        .map(|&v| {
            let (wv, tv) = point_for(axis, v, w, targets);
            match Weights::new(wv.a0, wv.a1, wv.a2).and_then(|wv| solve_gaussian_rd(&wv, tv, spec)) {
                Ok(s) => SweepRow {
                    axis_value: v,
                    rd_nats: s.rd_value,
                    r0_nats: s.rate_triple.r0,
                    r1_nats: s.rate_triple.r1,
                    r2_nats: s.rate_triple.r2,
                    d1: tv.0,
                    d2: tv.1,
                    beta1: s.certificate.as_ref().map(|c| c.beta1),
                    beta2: s.certificate.as_ref().map(|c| c.beta2),
                    outer_iters: 0,
                    converged: true,
                    region: Some(s.region.to_string()),
                    error: None,
                },
                Err(e) => SweepRow::failed(v, e),
            }
        })
        .collect())
}

/// Indices i where rd increases by more than `slack` from row i to row i+1
/// while the distortion axis increases.
pub fn monotonicity_violations(rows: &[SweepRow], slack: f64) -> Vec<usize> {
    rows.windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].error.is_none() && w[1].error.is_none())
        .filter(|(_, w)| w[1].axis_value > w[0].axis_value && w[1].rd_nats > w[0].rd_nats + slack)
        .map(|(i, _)| i)
        .collect()
}
