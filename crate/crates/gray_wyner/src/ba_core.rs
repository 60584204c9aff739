//! Alternating minimization of the Lagrangian over a coding distribution and
//! a free reproduction prior, with optimality certificates.
//!
//! All f quantities are kept as logarithms. `f1` does not depend on `x2`
//! (and `f2` not on `x1`), so they are stored over `(x1, u, y1)` and
//! `(x2, u, y2)` only; the accessors still take the full index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    expected_distortions, marginals, rate_triple_raw, Cell, CodingDistribution, Dims, DistortionSpec, JointPmf,
    Multipliers, ReproductionPrior, Validate, Weights, LOG_FLOOR,
};

/// Slack used when deciding whether a set of multipliers is feasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn ln0(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

pub(crate) fn require_positive(w: &Weights) -> Result<()> {
    if !w.all_positive() {
        return Err(Error::ZeroWeight(format!(
            "weights ({}, {}, {}) must all be positive for the iterative solver; \
             use the Gaussian closed forms or drop the layer",
            w.a0, w.a1, w.a2
        )));
    }
    Ok(())
}

fn invalid<T: Validate>(x: &T, what: &str) -> Result<()> {
    x.validate().map_err(|v| Error::Invalid(format!("{}: {}", what, v)))
}

/// The f0, f1, f2 functions generated by a reproduction prior.
#[derive(Debug, Clone, PartialEq)]
pub struct FTriple {
    dims: Dims,
    weights: Weights,
    ln_qu: Vec<f64>,
    ln_f0: Vec<f64>,
    ln_f1: Vec<f64>,
    ln_f2: Vec<f64>,
    ln_s1: Vec<f64>,
    ln_s2: Vec<f64>,
    ln_k1: Vec<f64>,
    ln_k2: Vec<f64>,
}

impl FTriple {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn weights(&self) -> Weights {
        self.weights
    }

    pub fn ln_f0(&self, x1: usize, x2: usize, u: usize) -> f64 {
        self.ln_f0[(x1 * self.dims.n2 + x2) * self.dims.k + u]
    }

    pub fn f0(&self, x1: usize, x2: usize, u: usize) -> f64 {
        self.ln_f0(x1, x2, u).exp()
    }

    pub fn f1(&self, x1: usize, _x2: usize, u: usize, y1: usize) -> f64 {
        self.ln_f1[(x1 * self.dims.k + u) * self.dims.m1 + y1].exp()
    }

    pub fn f2(&self, _x1: usize, x2: usize, u: usize, y2: usize) -> f64 {
        self.ln_f2[(x2 * self.dims.k + u) * self.dims.m2 + y2].exp()
    }

    /// ln of the sum of f1 over y1, at (x1, u).
    pub fn ln_sum_f1(&self, x1: usize, u: usize) -> f64 {
        self.ln_s1[x1 * self.dims.k + u]
    }

    /// ln of the sum of f2 over y2, at (x2, u).
    pub fn ln_sum_f2(&self, x2: usize, u: usize) -> f64 {
        self.ln_s2[x2 * self.dims.k + u]
    }

    /// ln of the sum of f0 over u, at (x1, x2).
    pub fn ln_sum_f0(&self, x1: usize, x2: usize) -> f64 {
        let k = self.dims.k;
        let b = (x1 * self.dims.n2 + x2) * k;
        log_sum_exp(&self.ln_f0[b..b + k])
    }
}

/// Builds f1 = q(y1|u) exp(-b1/a1 d1), f2 likewise, and
/// f0 = q(u) (sum f1)^(a1/a0) (sum f2)^(a2/a0).
pub fn update_f(prior: &ReproductionPrior, dist: &DistortionSpec, w: &Weights, b: &Multipliers) -> Result<FTriple> {
    require_positive(w)?;
    if prior.m1() != dist.m1() || prior.m2() != dist.m2() {
        return Err(Error::Dimension(format!(
            "prior reproduces {}x{} symbols but distortion expects {}x{}",
            prior.m1(),
            prior.m2(),
            dist.m1(),
            dist.m2()
        )));
    }
    let dims = Dims { n1: dist.n1(), n2: dist.n2(), k: prior.k(), m1: prior.m1(), m2: prior.m2() };
    let Dims { n1, n2, k, m1, m2 } = dims;
    let ln_k1: Vec<f64> = dist.d1_matrix().iter().map(|d| -(b.b1 / w.a1) * d).collect();
    let ln_k2: Vec<f64> = dist.d2_matrix().iter().map(|d| -(b.b2 / w.a2) * d).collect();
    let ln_qu: Vec<f64> = prior.qu().iter().map(|&q| ln0(q)).collect();
    let ln_qy1: Vec<f64> = prior.qy1().iter().map(|&q| ln0(q)).collect();
    let ln_qy2: Vec<f64> = prior.qy2().iter().map(|&q| ln0(q)).collect();

    let side = |n: usize, m: usize, ln_q: &[f64], ln_k: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut lf = vec![0.0; n * k * m];
        let mut ls = vec![0.0; n * k];
        lf.par_chunks_mut(k * m).zip(ls.par_chunks_mut(k)).enumerate().for_each(|(x, (lf, ls))| {
            for u in 0..k {
                for y in 0..m {
                    lf[u * m + y] = ln_q[u * m + y] + ln_k[x * m + y];
                }
                ls[u] = log_sum_exp(&lf[u * m..(u + 1) * m]);
            }
        });
        (lf, ls)
    };
    let (ln_f1, ln_s1) = side(n1, m1, &ln_qy1, &ln_k1);
    let (ln_f2, ln_s2) = side(n2, m2, &ln_qy2, &ln_k2);

    let (c1, c2) = (w.a1 / w.a0, w.a2 / w.a0);
    let mut ln_f0 = vec![0.0; n1 * n2 * k];
    ln_f0.par_chunks_mut(n2 * k).enumerate().for_each(|(x1, row)| {
        for x2 in 0..n2 {
            for u in 0..k {
                row[x2 * k + u] = ln_qu[u] + c1 * ln_s1[x1 * k + u] + c2 * ln_s2[x2 * k + u];
            }
        }
    });
    Ok(FTriple { dims, weights: *w, ln_qu, ln_f0, ln_f1, ln_f2, ln_s1, ln_s2, ln_k1, ln_k2 })
}

/// p(u|x) proportional to f0, p(y1|x1,u) to f1 and p(y2|x2,u) to f2.
pub fn update_p(pmf: &JointPmf, f: &FTriple) -> Result<CodingDistribution> {
    let d = f.dims;
    if pmf.n1() != d.n1 || pmf.n2() != d.n2 {
        return Err(Error::Dimension(format!(
            "pmf is {}x{} but f was built for {}x{}",
            pmf.n1(),
            pmf.n2(),
            d.n1,
            d.n2
        )));
    }
    let k = d.k;
    let mut pu = vec![0.0; d.n1 * d.n2 * k];
    let bad = pu
        .par_chunks_mut(k)
        .enumerate()
        .filter_map(|(cell, out)| {
            let lf = &f.ln_f0[cell * k..(cell + 1) * k];
            let z = log_sum_exp(lf);
            if !z.is_finite() {
                return Some(cell);
            }
            for (o, l) in out.iter_mut().zip(lf) {
                *o = (l - z).exp();
            }
            None
        })
        .min();
    if let Some(cell) = bad {
        return Err(Error::Degenerate(format!(
            "sum of f0 over u vanishes at (x1={}, x2={})",
            cell / d.n2,
            cell % d.n2
        )));
    }
    let cond = |lf: &[f64], ls: &[f64], m: usize| -> Vec<f64> {
        lf.iter().enumerate().map(|(i, l)| (l - ls[i / m]).exp()).collect()
    };
    let py1 = cond(&f.ln_f1, &f.ln_s1, d.m1);
    let py2 = cond(&f.ln_f2, &f.ln_s2, d.m2);
    CodingDistribution::factored(d, pu, py1, py2)
}

/// Prior equal to the marginals p(u), p(y1|u), p(y2|u) induced by `coding`.
pub fn update_q(pmf: &JointPmf, coding: &CodingDistribution) -> Result<ReproductionPrior> {
    let m = marginals(pmf, coding)?;
    let d = coding.dims();
    let cond = |puy: &[f64], mm: usize| -> Vec<f64> {
        let mut out = vec![0.0; puy.len()];
        for u in 0..d.k {
            let s = m.pu[u];
            for y in 0..mm {
                out[u * mm + y] = if s > 0.0 { puy[u * mm + y] / s } else { 1.0 / mm as f64 };
            }
        }
        out
    };
    ReproductionPrior::from_factors(m.pu.clone(), cond(&m.puy1, d.m1), cond(&m.puy2, d.m2))
}

/// -a0 * sum_x p(x) ln sum_u f0(x, u).
pub fn lagrangian_value_from_f(pmf: &JointPmf, f: &FTriple, w: &Weights) -> Result<f64> {
    let d = f.dims;
    let mut acc = 0.0;
    for x1 in 0..d.n1 {
        for x2 in 0..d.n2 {
            let p = pmf.p(x1, x2);
            if p == 0.0 {
                continue;
            }
            let z = f.ln_sum_f0(x1, x2);
            if !z.is_finite() {
                return Err(Error::Degenerate(format!("sum of f0 over u vanishes at (x1={}, x2={})", x1, x2)));
            }
            acc += p * z;
        }
    }
    Ok(-w.a0 * acc)
}

/// a0 I(X;U) + a1 I(X;Y1|U) + a2 I(X;Y2|U) + b1 E d1 + b2 E d2.
pub fn lagrangian_p(
    pmf: &JointPmf,
    coding: &CodingDistribution,
    dist: &DistortionSpec,
    w: &Weights,
    b: &Multipliers,
) -> Result<f64> {
    require_positive(w)?;
    let r = rate_triple_raw(pmf, coding)?;
    let (e1, e2) = expected_distortions(pmf, coding, dist)?;
    Ok(r.weighted(w) + b.b1 * e1 + b.b2 * e2)
}

/// The Lagrangian with the true marginals replaced by `prior`.
pub fn lagrangian_pq(
    pmf: &JointPmf,
    coding: &CodingDistribution,
    prior: &ReproductionPrior,
    dist: &DistortionSpec,
    w: &Weights,
    b: &Multipliers,
) -> Result<f64> {
    require_positive(w)?;
    coding.check_source(pmf)?;
    let d = coding.dims();
    if prior.k() != d.k || prior.m1() != d.m1 || prior.m2() != d.m2 {
        return Err(Error::Dimension("prior and coding alphabets differ".into()));
    }
    let (e1, e2) = expected_distortions(pmf, coding, dist)?;
    let (qu, qy1, qy2) = (prior.qu(), prior.qy1(), prior.qy2());
    let mut cell = Cell::new(d);
    let mut acc = 0.0;
    for x1 in 0..d.n1 {
        for x2 in 0..d.n2 {
            let p = pmf.p(x1, x2);
            if p == 0.0 {
                continue;
            }
            coding.cell(x1, x2, &mut cell);
            for u in 0..d.k {
                let pu = cell.pu[u];
                if pu <= 0.0 {
                    continue;
                }
                if qu[u] <= 0.0 {
                    return Err(Error::Domain(format!("prior has no mass at u={} used by the coding", u)));
                }
                let mut t = w.a0 * (pu / qu[u]).ln();
                for (layer, puy, qy, m, a) in
                    [(1, &cell.puy1, qy1, d.m1, w.a1), (2, &cell.puy2, qy2, d.m2, w.a2)]
                {
                    for y in 0..m {
                        let j = puy[u * m + y];
                        if j <= 0.0 {
                            continue;
                        }
                        let q = qy[u * m + y];
                        if q <= 0.0 {
                            return Err(Error::Domain(format!(
                                "prior has no mass at (u={}, y{}={}) used by the coding",
                                u, layer, y
                            )));
                        }
                        t += a * (j / pu) * ((j / pu).max(LOG_FLOOR) / q).ln();
                    }
                }
                acc += p * pu * t;
            }
        }
    }
    Ok(acc + b.b1 * e1 + b.b2 * e2)
}

fn default_n_iter() -> usize {
    500
}

fn default_epsilon() -> f64 {
    1e-4
}

fn default_restarts() -> usize {
    1
}

/// Settings for [`minimize_lagrangian`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaConfig {
    /// Stop once successive Lagrangian values differ by at most this, in
    /// nats per unit of the common weight a0.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_n_iter")]
    pub max_iterations: usize,
    /// Size of the auxiliary alphabet; defaults to m1 * m2.
    #[serde(default)]
    pub u_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Independent seeded starts (seeds `seed`, `seed + 1`, ...); the run
    /// with the lowest final Lagrangian is kept. Ignored with `init`.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Explicit starting prior; overrides `u_size`, `seed` and `restarts`.
    #[serde(skip)]
    pub init: Option<ReproductionPrior>,
    /// Debug aid: corrupts the final prior update so the certificates fail.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub tamper: bool,
}

impl Default for BaConfig {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            max_iterations: default_n_iter(),
            u_size: None,
            seed: 0,
            restarts: default_restarts(),
            init: None,
            tamper: false,
        }
    }
}

impl BaConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Invalid("max_iterations must be at least 1".into()));
        }
        if self.u_size == Some(0) {
            return Err(Error::Invalid("u_size must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Invalid("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of [`minimize_lagrangian`]: final coding, prior and the trace of
/// Lagrangian values, one per iteration.
#[derive(Debug, Clone)]
pub struct BaState {
    pub coding: CodingDistribution,
    pub prior: ReproductionPrior,
    pub lagrangian_value: f64,
    pub iteration: usize,
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl BaState {
    /// Largest increase between consecutive trace entries (0 for a descent).
    pub fn max_ascent(&self) -> f64 {
        self.trace.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Seeded starting prior: uniform q(u), and for each u the source marginal
/// (when the alphabets agree, else uniform) with a 1% random tilt.
pub fn default_prior(pmf: &JointPmf, dist: &DistortionSpec, k: usize, seed: u64) -> ReproductionPrior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = |marg: Vec<f64>, m: usize| -> Vec<f64> {
        let v = if marg.len() == m { marg } else { vec![1.0 / m as f64; m] };
        let floor = 1e-6 / m as f64;
        let v: Vec<f64> = v.iter().map(|p| p.max(floor)).collect();
        let s: f64 = v.iter().sum();
        v.iter().map(|p| p / s).collect()
    };
    let b1 = base(pmf.marginal1(), dist.m1());
    let b2 = base(pmf.marginal2(), dist.m2());
    let mut tilt = |b: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(k * b.len());
        for _ in 0..k {
            let row: Vec<f64> = b.iter().map(|p| p * (1.0 + 0.01 * (2.0 * rng.random::<f64>() - 1.0))).collect();
            let s: f64 = row.iter().sum();
            out.extend(row.iter().map(|p| p / s));
        }
        out
    };
    let qy1 = tilt(&b1);
    let qy2 = tilt(&b2);
    ReproductionPrior::from_factors(vec![1.0 / k as f64; k], qy1, qy2).expect("consistent sizes")
}

fn tamper_prior(prior: &ReproductionPrior) -> ReproductionPrior {
    let (k, m1) = (prior.k(), prior.m1());
    let mut qy1 = prior.qy1().to_vec();
    for u in 0..k {
        for y in 0..m1 {
            let point = if y == 0 { 1.0 } else { 0.0 };
            qy1[u * m1 + y] = 0.7 * qy1[u * m1 + y] + 0.3 * point;
        }
    }
    ReproductionPrior::from_factors(prior.qu().to_vec(), qy1, prior.qy2().to_vec()).expect("same sizes")
}

/// Alternates f, p and q updates until the Lagrangian changes by at most
/// `config.epsilon * w.a0`. Running out of iterations is reported through
/// `converged = false`, not as an error. With several restarts the run with
/// the lowest final Lagrangian is returned.
pub fn minimize_lagrangian(
    pmf: &JointPmf,
    dist: &DistortionSpec,
    w: &Weights,
    b: &Multipliers,
    config: &BaConfig,
) -> Result<BaState> {
    require_positive(w)?;
    config.check()?;
    invalid(pmf, "source")?;
    dist.check_source(pmf)?;
    let starts: Vec<ReproductionPrior> = match &config.init {
        Some(q) => {
            invalid(q, "initial prior")?;
            if q.m1() != dist.m1() || q.m2() != dist.m2() {
                return Err(Error::Dimension("initial prior does not match the reproduction alphabets".into()));
            }
            vec![q.clone()]
        }
        None => {
            let k = config.u_size.unwrap_or(dist.m1() * dist.m2());
            (0..config.restarts as u64).map(|i| default_prior(pmf, dist, k, config.seed.wrapping_add(i))).collect()
        }
    };
    let mut best: Option<BaState> = None;
    for prior in starts {
        let state = run_from(pmf, dist, w, b, config, prior)?;
        if best.as_ref().is_none_or(|s| state.lagrangian_value < s.lagrangian_value) {
            best = Some(state);
        }
    }
    let mut state = best.expect("at least one start");
    if config.tamper {
        state.prior = tamper_prior(&state.prior);
    }
    Ok(state)
}

fn run_from(
    pmf: &JointPmf,
    dist: &DistortionSpec,
    w: &Weights,
    b: &Multipliers,
    config: &BaConfig,
    mut prior: ReproductionPrior,
) -> Result<BaState> {
    let mut trace = Vec::new();
    let mut coding;
    let mut converged = false;
    loop {
        let f = update_f(&prior, dist, w, b)?;
        let l = lagrangian_value_from_f(pmf, &f, w)?;
        coding = update_p(pmf, &f)?;
        prior = update_q(pmf, &coding)?;
        let done = trace.last().is_some_and(|prev: &f64| (prev - l).abs() <= config.epsilon * w.a0);
        trace.push(l);
        if done {
            converged = true;
            break;
        }
        if trace.len() >= config.max_iterations {
            break;
        }
    }
    Ok(BaState { coding, prior, lagrangian_value: *trace.last().expect("at least one iteration"), iteration: trace.len(), trace, converged })
}

/// Summed multiplier families per u, (u, y1) and (u, y2).
#[derive(Debug, Clone, PartialEq)]
pub struct MuSums {
    pub k: usize,
    pub m1: usize,
    pub m2: usize,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
}

impl MuSums {
    /// Largest violation of sum mu1 <= sum mu0 <= 1 and sum mu2 <= sum mu0,
    /// as a message, or None when the triple is feasible within `tol`.
    pub fn infeasibility(&self, tol: f64) -> Option<String> {
        for u in 0..self.k {
            if self.mu0[u] > 1.0 + tol {
                return Some(format!("sum of mu0 at u={} is {} > 1", u, self.mu0[u]));
            }
            for y in 0..self.m1 {
                if self.mu1[u * self.m1 + y] > self.mu0[u] + tol {
                    return Some(format!(
                        "sum of mu1 at (u={}, y1={}) is {} > sum of mu0 = {}",
                        u,
                        y,
                        self.mu1[u * self.m1 + y],
                        self.mu0[u]
                    ));
                }
            }
            for y in 0..self.m2 {
                if self.mu2[u * self.m2 + y] > self.mu0[u] + tol {
                    return Some(format!(
                        "sum of mu2 at (u={}, y2={}) is {} > sum of mu0 = {}",
                        u,
                        y,
                        self.mu2[u * self.m2 + y],
                        self.mu0[u]
                    ));
                }
            }
        }
        None
    }

    /// Largest distance of any sum from 1.
    pub fn max_deviation_from_one(&self) -> f64 {
        self.mu0.iter().chain(&self.mu1).chain(&self.mu2).map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// The three multiplier sums with theta = f0 and psi_i = f_i.
pub fn mu_sums(pmf: &JointPmf, f: &FTriple) -> Result<MuSums> {
    let d = f.dims;
    if pmf.n1() != d.n1 || pmf.n2() != d.n2 {
        return Err(Error::Dimension("pmf does not match f".into()));
    }
    let (k, m1, m2) = (d.k, d.m1, d.m2);
    let w = f.weights;
    let (c1, c2) = (w.a1 / w.a0, w.a2 / w.a0);
    let mut s = MuSums { k, m1, m2, mu0: vec![0.0; k], mu1: vec![0.0; k * m1], mu2: vec![0.0; k * m2] };
    for x1 in 0..d.n1 {
        for x2 in 0..d.n2 {
            let p = pmf.p(x1, x2);
            if p == 0.0 {
                continue;
            }
            let lz = f.ln_sum_f0(x1, x2);
            if !lz.is_finite() {
                return Err(Error::Degenerate(format!("sum of f0 over u vanishes at (x1={}, x2={})", x1, x2)));
            }
            for u in 0..k {
                let ls1 = f.ln_s1[x1 * k + u];
                let ls2 = f.ln_s2[x2 * k + u];
                let l0 = c1 * ls1 + c2 * ls2 - lz;
                s.mu0[u] += p * l0.exp();
                for y in 0..m1 {
                    s.mu1[u * m1 + y] += p * (l0 - ls1 + f.ln_k1[x1 * m1 + y]).exp();
                }
                for y in 0..m2 {
                    s.mu2[u * m2 + y] += p * (l0 - ls2 + f.ln_k2[x2 * m2 + y]).exp();
                }
            }
        }
    }
    Ok(s)
}

/// -a0 sum_x p(x) ln sum_u theta for theta = f0. Fails when the triple does
/// not satisfy the multiplier-sum constraints.
pub fn lower_bound_value(pmf: &JointPmf, f: &FTriple, w: &Weights) -> Result<f64> {
    let s = mu_sums(pmf, f)?;
    if let Some(msg) = s.infeasibility(FEASIBILITY_TOL) {
        return Err(Error::Infeasible(msg));
    }
    lagrangian_value_from_f(pmf, f, w)
}

/// A lower bound on the minimum Lagrangian valid for any f.
///
/// Scaling psi_i by c_i(u) >= 1 divides sum mu_i / sum mu0 by c_i(u), and
/// dividing theta by lambda divides every sum by lambda. Choosing
/// c_i(u) = max(1, max_y sum mu_i / sum mu0) and lambda as the largest
/// resulting sum mu0 gives a feasible triple whose value is the plain value
/// minus a0 ln lambda.
pub fn feasible_lower_bound(pmf: &JointPmf, f: &FTriple, w: &Weights) -> Result<f64> {
    let s = mu_sums(pmf, f)?;
    let (c1, c2) = (w.a1 / w.a0, w.a2 / w.a0);
    let mut lambda: f64 = 0.0;
    for u in 0..s.k {
        let m0 = s.mu0[u];
        if m0 <= 0.0 {
            continue;
        }
        let r1 = s.mu1[u * s.m1..(u + 1) * s.m1].iter().fold(0.0f64, |a, v| a.max(*v)) / m0;
        let r2 = s.mu2[u * s.m2..(u + 1) * s.m2].iter().fold(0.0f64, |a, v| a.max(*v)) / m0;
        lambda = lambda.max(m0 * r1.max(1.0).powf(c1) * r2.max(1.0).powf(c2));
    }
    Ok(lagrangian_value_from_f(pmf, f, w)? - w.a0 * lambda.ln())
}

/// Maximum of each optimality function and the overall verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KtCertificate {
    /// Over u with q(u) > 0 this is p(u)/q(u) for the next update; over
    /// unused u it is maximized over the reproduction conditionals.
    pub max_upsilon0: f64,
    pub max_upsilon1: f64,
    pub max_upsilon2: f64,
    pub pass: bool,
}

/// Largest value of sum_x p(x) S1^c1 S2^c2 / F0 over reproduction
/// conditionals r1, r2 for a fresh u, with S_i = sum_y r_i(y) exp(-b_i d_i / a_i).
/// Estimated by multiplicative ascent from every point mass pair's best and
/// from the uniform pair.
fn unused_upsilon0(pmf: &JointPmf, f: &FTriple) -> f64 {
    let d = f.dims;
    let w = f.weights;
    let (c1, c2) = (w.a1 / w.a0, w.a2 / w.a0);
    let kern1: Vec<f64> = f.ln_k1.iter().map(|v| v.exp()).collect();
    let kern2: Vec<f64> = f.ln_k2.iter().map(|v| v.exp()).collect();
    let inv_f0: Vec<f64> = (0..d.n1 * d.n2).map(|c| (-f.ln_sum_f0(c / d.n2, c % d.n2)).exp()).collect();
    let eval = |r1: &[f64], r2: &[f64], g1: Option<&mut Vec<f64>>, g2: Option<&mut Vec<f64>>| -> f64 {
        let s1: Vec<f64> = (0..d.n1).map(|x| (0..d.m1).map(|y| r1[y] * kern1[x * d.m1 + y]).sum()).collect();
        let s2: Vec<f64> = (0..d.n2).map(|x| (0..d.m2).map(|y| r2[y] * kern2[x * d.m2 + y]).sum()).collect();
        let mut total = 0.0;
        let (mut g1, mut g2) = (g1, g2);
        if let Some(g) = g1.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        if let Some(g) = g2.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for x1 in 0..d.n1 {
            for x2 in 0..d.n2 {
                let p = pmf.p(x1, x2);
                if p == 0.0 {
                    continue;
                }
                let v = p * s1[x1].powf(c1) * s2[x2].powf(c2) * inv_f0[x1 * d.n2 + x2];
                total += v;
                if let Some(g) = g1.as_deref_mut() {
                    for y in 0..d.m1 {
                        g[y] += v * c1 * kern1[x1 * d.m1 + y] / s1[x1];
                    }
                }
                if let Some(g) = g2.as_deref_mut() {
                    for y in 0..d.m2 {
                        g[y] += v * c2 * kern2[x2 * d.m2 + y] / s2[x2];
                    }
                }
            }
        }
        total
    };
    let point = |m: usize, i: usize| -> Vec<f64> { (0..m).map(|y| if y == i { 1.0 } else { 0.0 }).collect() };
    let mut best = f64::NEG_INFINITY;
    let mut best_pair = (0, 0);
    for y1 in 0..d.m1 {
        for y2 in 0..d.m2 {
            let v = eval(&point(d.m1, y1), &point(d.m2, y2), None, None);
            if v > best {
                best = v;
                best_pair = (y1, y2);
            }
        }
    }
    let starts = [
        (vec![1.0 / d.m1 as f64; d.m1], vec![1.0 / d.m2 as f64; d.m2]),
        (
            point(d.m1, best_pair.0).iter().map(|v| 0.9 * v + 0.1 / d.m1 as f64).collect(),
            point(d.m2, best_pair.1).iter().map(|v| 0.9 * v + 0.1 / d.m2 as f64).collect(),
        ),
    ];
    let mut g1 = vec![0.0; d.m1];
    let mut g2 = vec![0.0; d.m2];
    for (mut r1, mut r2) in starts {
        for _ in 0..200 {
            let v = eval(&r1, &r2, Some(&mut g1), Some(&mut g2));
            best = best.max(v);
            for (r, g) in [(&mut r1, &g1), (&mut r2, &g2)] {
                let z: f64 = r.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
                if z > 0.0 {
                    r.iter_mut().zip(g.iter()).for_each(|(a, b)| *a *= b / z);
                }
            }
        }
        best = best.max(eval(&r1, &r2, None, None));
    }
    best
}

/// Checks the optimality conditions of `prior`: every u must have
/// upsilon0 <= 1 and every used u must have upsilon1, upsilon2 <= 1.
pub fn kt_check(
    pmf: &JointPmf,
    prior: &ReproductionPrior,
    dist: &DistortionSpec,
    w: &Weights,
    b: &Multipliers,
    tol: f64,
) -> Result<KtCertificate> {
    let f = update_f(prior, dist, w, b)?;
    let s = mu_sums(pmf, &f)?;
    let qu = prior.qu();
    let mut max0 = f64::NEG_INFINITY;
    let mut max1 = f64::NEG_INFINITY;
    let mut max2 = f64::NEG_INFINITY;
    let mut any_unused = false;
    for u in 0..s.k {
        if qu[u] > 0.0 {
            max0 = max0.max(s.mu0[u]);
            max1 = s.mu1[u * s.m1..(u + 1) * s.m1].iter().fold(max1, |a, v| a.max(*v));
            max2 = s.mu2[u * s.m2..(u + 1) * s.m2].iter().fold(max2, |a, v| a.max(*v));
        } else {
            any_unused = true;
        }
    }
    if any_unused {
        max0 = max0.max(unused_upsilon0(pmf, &f));
    }
    let pass = max0 <= 1.0 + tol && max1 <= 1.0 + tol && max2 <= 1.0 + tol;
    Ok(KtCertificate { max_upsilon0: max0, max_upsilon1: max1, max_upsilon2: max2, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w111() -> Weights {
        Weights::new(1.0, 1.0, 1.0).unwrap()
    }

    fn singleton() -> (JointPmf, DistortionSpec, ReproductionPrior) {
        let pmf = JointPmf::new(1, 1, vec![1.0]).unwrap();
        let dist = DistortionSpec::new(1, 1, vec![0.0], 1, 1, vec![0.0]).unwrap();
        (pmf, dist, ReproductionPrior::uniform(1, 1, 1))
    }

    #[test]
    fn zero_weight_is_rejected() {
        let (pmf, dist, _) = singleton();
        let w = Weights::new(1.0, 0.0, 1.0).unwrap();
        let err = minimize_lagrangian(&pmf, &dist, &w, &Multipliers::new(1.0, 1.0).unwrap(), &BaConfig::default());
        assert!(matches!(err, Err(Error::ZeroWeight(_))));
    }

    #[test]
    fn zero_multipliers_keep_f1_at_the_prior() {
        let pmf = JointPmf::dsbs(0.4).unwrap();
        let dist = DistortionSpec::hamming(2, 2);
        let prior = default_prior(&pmf, &dist, 3, 1);
        let f = update_f(&prior, &dist, &w111(), &Multipliers::new(0.0, 0.0).unwrap()).unwrap();
        for x1 in 0..2 {
            for u in 0..3 {
                for y in 0..2 {
                    assert!((f.f1(x1, 0, u, y) - prior.qy1()[u * 2 + y]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn zero_distortion_sums_f1_to_one() {
        let pmf = JointPmf::dsbs(0.4).unwrap();
        let dist = DistortionSpec::new(2, 2, vec![0.0; 4], 2, 2, vec![0.0; 4]).unwrap();
        let prior = default_prior(&pmf, &dist, 2, 5);
        let f = update_f(&prior, &dist, &w111(), &Multipliers::new(3.0, 1.0).unwrap()).unwrap();
        for x1 in 0..2 {
            for u in 0..2 {
                assert!(f.ln_sum_f1(x1, u).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_f0_gives_uniform_u() {
        let pmf = JointPmf::uniform(2, 2);
        let dist = DistortionSpec::new(2, 1, vec![0.0; 2], 2, 1, vec![0.0; 2]).unwrap();
        let prior = ReproductionPrior::uniform(4, 1, 1);
        let f = update_f(&prior, &dist, &w111(), &Multipliers::new(1.0, 1.0).unwrap()).unwrap();
        let p = update_p(&pmf, &f).unwrap();
        let mut cell = Cell::new(p.dims());
        p.cell(1, 0, &mut cell);
        assert!(cell.pu.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn point_mass_coding_gives_point_mass_prior() {
        let pmf = JointPmf::dsbs(0.3).unwrap();
        let dims = Dims { n1: 2, n2: 2, k: 2, m1: 2, m2: 2 };
        let c = CodingDistribution::factored(dims, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0], vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let q = update_q(&pmf, &c).unwrap();
        assert_eq!(q.qu(), &[0.0, 1.0]);
        assert_eq!(q.joint()[(1 * 2) * 2 + 1], 1.0);
    }

    #[test]
    fn singleton_value_and_certificates_are_trivial() {
        let (pmf, dist, prior) = singleton();
        let b = Multipliers::new(0.0, 0.0).unwrap();
        let f = update_f(&prior, &dist, &w111(), &b).unwrap();
        assert_eq!(lagrangian_value_from_f(&pmf, &f, &w111()).unwrap(), 0.0);
        let s = mu_sums(&pmf, &f).unwrap();
        assert_eq!((s.mu0[0], s.mu1[0], s.mu2[0]), (1.0, 1.0, 1.0));
        let kt = kt_check(&pmf, &prior, &dist, &w111(), &b, 0.0).unwrap();
        assert!(kt.pass);
        assert_eq!(lower_bound_value(&pmf, &f, &w111()).unwrap(), 0.0);
    }

    #[test]
    fn zero_multipliers_converge_to_zero() {
        let pmf = JointPmf::dsbs(0.45).unwrap();
        let dist = DistortionSpec::hamming(2, 2);
        let cfg = BaConfig { epsilon: 1e-10, max_iterations: 2000, ..Default::default() };
        let s = minimize_lagrangian(&pmf, &dist, &w111(), &Multipliers::new(0.0, 0.0).unwrap(), &cfg).unwrap();
        assert!(s.lagrangian_value.abs() < 1e-8, "{}", s.lagrangian_value);
        let r = crate::model::rate_triple(&pmf, &s.coding).unwrap();
        assert!(r.r0 + r.r1 + r.r2 < 1e-6);
    }

    #[test]
    fn run_out_of_iterations_is_flagged() {
        let pmf = JointPmf::dsbs(0.45).unwrap();
        let dist = DistortionSpec::hamming(2, 2);
        let cfg = BaConfig { epsilon: 1e-14, max_iterations: 3, ..Default::default() };
        let s = minimize_lagrangian(&pmf, &dist, &w111(), &Multipliers::new(3.0, 3.0).unwrap(), &cfg).unwrap();
        assert!(!s.converged);
        assert_eq!(s.trace.len(), 3);
    }

    #[test]
    fn infeasible_triple_names_the_inequality() {
        // A lopsided prior: the rarely used u gets far more than its share
        // after one update, so sum mu0 exceeds 1 there.
        let pmf = JointPmf::dsbs(0.45).unwrap();
        let dist = DistortionSpec::hamming(2, 2);
        let prior = ReproductionPrior::from_factors(vec![0.99, 0.01], vec![0.9, 0.1, 0.1, 0.9], vec![0.9, 0.1, 0.1, 0.9])
            .unwrap();
        let f = update_f(&prior, &dist, &w111(), &Multipliers::new(4.0, 4.0).unwrap()).unwrap();
        match lower_bound_value(&pmf, &f, &w111()) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("sum of mu"), "{}", msg),
            other => panic!("expected infeasibility, got {:?}", other),
        }
    }
}
