//! Sources, distortion measures, coding distributions and the information
//! measures computed from them.
//!
//! Everything is in nats. Arrays are flat `Vec<f64>` in row-major order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied inside logarithms once true zeros have been filtered out.
pub const LOG_FLOOR: f64 = 1e-300;

/// Tolerance on the total mass of a joint pmf.
pub const PMF_SUM_TOL: f64 = 1e-12;

/// Tolerance on conditional and prior normalization.
pub const COND_SUM_TOL: f64 = 1e-10;

/// `p ln(p/q)` with `0 ln 0 = 0`.
#[inline]
pub fn plogpq(p: f64, q: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * (p.max(LOG_FLOOR) / q.max(LOG_FLOOR)).ln()
    }
}

/// First failed invariant, with the offending indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub message: String,
    pub index: Vec<usize>,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

pub trait Validate {
    fn validate(&self) -> std::result::Result<(), Violation>;
}

fn violation(message: String, index: Vec<usize>) -> std::result::Result<(), Violation> {
    Err(Violation { message, index })
}

/// Joint distribution p(x1, x2) on an `n1 x n2` alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPmf {
    n1: usize,
    n2: usize,
    probs: Vec<f64>,
}

impl JointPmf {
    /// Checks shape only; call [`Validate::validate`] for the value invariants.
    pub fn new(n1: usize, n2: usize, probs: Vec<f64>) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Dimension("alphabet sizes must be at least 1".into()));
        }
        if probs.len() != n1 * n2 {
            return Err(Error::Dimension(format!(
                "expected {} probabilities for a {}x{} alphabet, got {}",
                n1 * n2,
                n1,
                n2,
                probs.len()
            )));
        }
        Ok(Self { n1, n2, probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n1 = rows.len();
        let n2 = rows.first().map_or(0, |r| r.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n2 {
                return Err(Error::Dimension(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    r.len(),
                    n2
                )));
            }
        }
        Self::new(n1, n2, rows.concat())
    }

    pub fn uniform(n1: usize, n2: usize) -> Self {
        let v = 1.0 / (n1 * n2) as f64;
        Self { n1, n2, probs: vec![v; n1 * n2] }
    }

    /// Doubly symmetric binary source: p(x1 = x2) = px per diagonal cell and
    /// 0.5 - px per off-diagonal cell.
    pub fn dsbs(px: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&px) {
            return Err(Error::Invalid(format!("px = {} outside [0, 0.5]", px)));
        }
        Self::new(2, 2, vec![px, 0.5 - px, 0.5 - px, px])
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn p(&self, x1: usize, x2: usize) -> f64 {
        self.probs[x1 * self.n2 + x2]
    }

    pub fn marginal1(&self) -> Vec<f64> {
        (0..self.n1).map(|a| (0..self.n2).map(|b| self.p(a, b)).sum()).collect()
    }

    pub fn marginal2(&self) -> Vec<f64> {
        (0..self.n2).map(|b| (0..self.n1).map(|a| self.p(a, b)).sum()).collect()
    }
}

impl Validate for JointPmf {
    fn validate(&self) -> std::result::Result<(), Violation> {
        for x1 in 0..self.n1 {
            for x2 in 0..self.n2 {
                let v = self.p(x1, x2);
                if !v.is_finite() {
                    return violation(format!("non-finite entry at ({},{})", x1, x2), vec![x1, x2]);
                }
                if v < 0.0 {
                    return violation(format!("negative entry at ({},{})", x1, x2), vec![x1, x2]);
                }
            }
        }
        let s: f64 = self.probs.iter().sum();
        if (s - 1.0).abs() > PMF_SUM_TOL {
            return violation(format!("probabilities sum to {} instead of 1", s), vec![]);
        }
        Ok(())
    }
}

/// Per-letter distortion matrices d1 (n1 x m1) and d2 (n2 x m2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    n1: usize,
    m1: usize,
    d1: Vec<f64>,
    n2: usize,
    m2: usize,
    d2: Vec<f64>,
}

impl DistortionSpec {
    pub fn new(n1: usize, m1: usize, d1: Vec<f64>, n2: usize, m2: usize, d2: Vec<f64>) -> Result<Self> {
        if n1 == 0 || m1 == 0 || n2 == 0 || m2 == 0 {
            return Err(Error::Dimension("distortion alphabets must be nonempty".into()));
        }
        if d1.len() != n1 * m1 || d2.len() != n2 * m2 {
            return Err(Error::Dimension(format!(
                "distortion matrices have {} and {} entries, expected {}x{} and {}x{}",
                d1.len(),
                d2.len(),
                n1,
                m1,
                n2,
                m2
            )));
        }
        let spec = Self { n1, m1, d1, n2, m2, d2 };
        spec.validate().map_err(|v| Error::Invalid(v.message))?;
        Ok(spec)
    }

    pub fn from_rows(d1: &[Vec<f64>], d2: &[Vec<f64>]) -> Result<Self> {
        let shape = |d: &[Vec<f64>], name: &str| -> Result<(usize, usize)> {
            let m = d.first().map_or(0, |r| r.len());
            for (i, r) in d.iter().enumerate() {
                if r.len() != m {
                    return Err(Error::Dimension(format!("{} row {} has {} entries, expected {}", name, i, r.len(), m)));
                }
            }
            Ok((d.len(), m))
        };
        let (n1, m1) = shape(d1, "d1")?;
        let (n2, m2) = shape(d2, "d2")?;
        Self::new(n1, m1, d1.concat(), n2, m2, d2.concat())
    }

    /// Hamming distortion with reproduction alphabets equal to the source alphabets.
    pub fn hamming(n1: usize, n2: usize) -> Self {
        let h = |n: usize| -> Vec<f64> {
            (0..n * n).map(|i| if i / n == i % n { 0.0 } else { 1.0 }).collect()
        };
        Self { n1, m1: n1, d1: h(n1), n2, m2: n2, d2: h(n2) }
    }

    pub fn n1(&self) -> usize {
        self.n1
    }
    pub fn n2(&self) -> usize {
        self.n2
    }
    pub fn m1(&self) -> usize {
        self.m1
    }
    pub fn m2(&self) -> usize {
        self.m2
    }

    #[inline]
    pub fn d1(&self, x1: usize, y1: usize) -> f64 {
        self.d1[x1 * self.m1 + y1]
    }

    #[inline]
    pub fn d2(&self, x2: usize, y2: usize) -> f64 {
        self.d2[x2 * self.m2 + y2]
    }

    pub fn d1_matrix(&self) -> &[f64] {
        &self.d1
    }

    pub fn d2_matrix(&self) -> &[f64] {
        &self.d2
    }

    pub fn check_source(&self, pmf: &JointPmf) -> Result<()> {
        if pmf.n1() != self.n1 || pmf.n2() != self.n2 {
            return Err(Error::Dimension(format!(
                "source is {}x{} but distortion rows are {} and {}",
                pmf.n1(),
                pmf.n2(),
                self.n1,
                self.n2
            )));
        }
        Ok(())
    }
}

impl Validate for DistortionSpec {
    fn validate(&self) -> std::result::Result<(), Violation> {
        for (name, d, m, layer) in [("d1", &self.d1, self.m1, 1usize), ("d2", &self.d2, self.m2, 2)] {
            for (i, &v) in d.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return violation(
                        format!("{} entry ({},{}) = {} is not a finite nonnegative number", name, i / m, i % m, v),
                        vec![layer, i / m, i % m],
                    );
                }
            }
        }
        Ok(())
    }
}

/// Layer weights (alpha0, alpha1, alpha2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Weights {
    pub fn new(a0: f64, a1: f64, a2: f64) -> Result<Self> {
        let w = Self { a0, a1, a2 };
        if [a0, a1, a2].iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Invalid(format!("weights ({}, {}, {}) must be finite and nonnegative", a0, a1, a2)));
        }
        if a0 == 0.0 && a1 == 0.0 && a2 == 0.0 {
            return Err(Error::Invalid("weights must not all be zero".into()));
        }
        Ok(w)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { a0: c * self.a0, a1: c * self.a1, a2: c * self.a2 }
    }

    /// Exchanges the roles of the two sources.
    pub fn swapped(&self) -> Self {
        Self { a0: self.a0, a1: self.a2, a2: self.a1 }
    }

    pub fn all_positive(&self) -> bool {
        self.a0 > 0.0 && self.a1 > 0.0 && self.a2 > 0.0
    }
}

/// Lagrange multipliers (beta1, beta2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub b1: f64,
    pub b2: f64,
}

impl Multipliers {
    pub fn new(b1: f64, b2: f64) -> Result<Self> {
        if !(b1.is_finite() && b2.is_finite()) || b1 < 0.0 || b2 < 0.0 {
            return Err(Error::Invalid(format!("multipliers ({}, {}) must be finite and nonnegative", b1, b2)));
        }
        Ok(Self { b1, b2 })
    }
}

/// Alphabet sizes of a coding distribution: sources, auxiliary, reproductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n1: usize,
    pub n2: usize,
    pub k: usize,
    pub m1: usize,
    pub m2: usize,
}

/// The conditional p(u, y1, y2 | x1, x2).
///
/// `Joint` stores the full five-way array. `Factored` stores
/// p(u|x1,x2) p(y1|x1,u) p(y2|x2,u), which is the form every iterate of the
/// alternating minimization takes and needs far less memory on large grids.
#[derive(Debug, Clone, PartialEq)]
pub enum CodingDistribution {
    Joint { dims: Dims, values: Vec<f64> },
    Factored { dims: Dims, pu: Vec<f64>, py1: Vec<f64>, py2: Vec<f64> },
}

/// Slices of the coding distribution at a fixed source pair: p(u|x),
/// p(u,y1|x) and p(u,y2|x).
#[derive(Debug, Clone)]
pub struct Cell {
    pub pu: Vec<f64>,
    pub puy1: Vec<f64>,
    pub puy2: Vec<f64>,
}

impl Cell {
    pub fn new(d: Dims) -> Self {
        Self { pu: vec![0.0; d.k], puy1: vec![0.0; d.k * d.m1], puy2: vec![0.0; d.k * d.m2] }
    }
}

impl CodingDistribution {
    pub fn joint(dims: Dims, values: Vec<f64>) -> Result<Self> {
        let len = dims.n1 * dims.n2 * dims.k * dims.m1 * dims.m2;
        if values.len() != len || len == 0 {
            return Err(Error::Dimension(format!("expected {} values, got {}", len, values.len())));
        }
        Ok(Self::Joint { dims, values })
    }

    pub fn factored(dims: Dims, pu: Vec<f64>, py1: Vec<f64>, py2: Vec<f64>) -> Result<Self> {
        let Dims { n1, n2, k, m1, m2 } = dims;
        if n1 * n2 * k * m1 * m2 == 0 {
            return Err(Error::Dimension("all alphabet sizes must be at least 1".into()));
        }
        if pu.len() != n1 * n2 * k || py1.len() != n1 * k * m1 || py2.len() != n2 * k * m2 {
            return Err(Error::Dimension("factor lengths do not match the alphabet sizes".into()));
        }
        Ok(Self::Factored { dims, pu, py1, py2 })
    }

    /// Coding that ignores the source: u, y1, y2 drawn from `prior`.
    pub fn independent(n1: usize, n2: usize, prior: &ReproductionPrior) -> Self {
        let dims = Dims { n1, n2, k: prior.k, m1: prior.m1, m2: prior.m2 };
        let mut values = Vec::with_capacity(n1 * n2 * prior.joint.len());
        for _ in 0..n1 * n2 {
            values.extend_from_slice(&prior.joint);
        }
        Self::Joint { dims, values }
    }

    pub fn dims(&self) -> Dims {
        match self {
            Self::Joint { dims, .. } | Self::Factored { dims, .. } => *dims,
        }
    }

    /// Fills `cell` with the slices at (x1, x2).
    pub fn cell(&self, x1: usize, x2: usize, cell: &mut Cell) {
        let d = self.dims();
        let (k, m1, m2) = (d.k, d.m1, d.m2);
        match self {
            Self::Joint { values, .. } => {
                let base = (x1 * d.n2 + x2) * k * m1 * m2;
                cell.puy1.iter_mut().for_each(|v| *v = 0.0);
                cell.puy2.iter_mut().for_each(|v| *v = 0.0);
                for u in 0..k {
                    let mut su = 0.0;
                    for y1 in 0..m1 {
                        for y2 in 0..m2 {
                            let v = values[base + (u * m1 + y1) * m2 + y2];
                            su += v;
                            cell.puy1[u * m1 + y1] += v;
                            cell.puy2[u * m2 + y2] += v;
                        }
                    }
                    cell.pu[u] = su;
                }
            }
            Self::Factored { pu, py1, py2, .. } => {
                let bu = (x1 * d.n2 + x2) * k;
                for u in 0..k {
                    let p = pu[bu + u];
                    cell.pu[u] = p;
                    let b1 = (x1 * k + u) * m1;
                    for y1 in 0..m1 {
                        cell.puy1[u * m1 + y1] = p * py1[b1 + y1];
                    }
                    let b2 = (x2 * k + u) * m2;
                    for y2 in 0..m2 {
                        cell.puy2[u * m2 + y2] = p * py2[b2 + y2];
                    }
                }
            }
        }
    }

    /// Value of p(u, y1, y2 | x1, x2).
    pub fn value(&self, x1: usize, x2: usize, u: usize, y1: usize, y2: usize) -> f64 {
        let d = self.dims();
        match self {
            Self::Joint { values, .. } => values[((((x1 * d.n2 + x2) * d.k + u) * d.m1 + y1) * d.m2) + y2],
            Self::Factored { pu, py1, py2, .. } => {
                pu[(x1 * d.n2 + x2) * d.k + u] * py1[(x1 * d.k + u) * d.m1 + y1] * py2[(x2 * d.k + u) * d.m2 + y2]
            }
        }
    }

    /// Expands to the full five-way array.
    pub fn to_joint(&self) -> Self {
        match self {
            Self::Joint { .. } => self.clone(),
            Self::Factored { dims, .. } => {
                let d = *dims;
                let mut values = Vec::with_capacity(d.n1 * d.n2 * d.k * d.m1 * d.m2);
                for x1 in 0..d.n1 {
                    for x2 in 0..d.n2 {
                        for u in 0..d.k {
                            for y1 in 0..d.m1 {
                                for y2 in 0..d.m2 {
                                    values.push(self.value(x1, x2, u, y1, y2));
                                }
                            }
                        }
                    }
                }
                Self::Joint { dims: d, values }
            }
        }
    }

    pub fn check_source(&self, pmf: &JointPmf) -> Result<()> {
        let d = self.dims();
        if d.n1 != pmf.n1() || d.n2 != pmf.n2() {
            return Err(Error::Dimension(format!(
                "coding is indexed by a {}x{} source but the pmf is {}x{}",
                d.n1,
                d.n2,
                pmf.n1(),
                pmf.n2()
            )));
        }
        Ok(())
    }
}

impl Validate for CodingDistribution {
    fn validate(&self) -> std::result::Result<(), Violation> {
        let d = self.dims();
        let mut cell = Cell::new(d);
        let negative = match self {
            Self::Joint { values, .. } => values.iter().position(|v| !(*v >= 0.0 && v.is_finite())),
            Self::Factored { pu, py1, py2, .. } => pu
                .iter()
                .chain(py1.iter())
                .chain(py2.iter())
                .position(|v| !(*v >= 0.0 && v.is_finite())),
        };
        if let Some(i) = negative {
            return violation(format!("negative or non-finite coding entry at flat index {}", i), vec![i]);
        }
        if let Self::Factored { py1, py2, .. } = self {
            for (name, p, n, m) in [("p(y1|x1,u)", py1, d.n1, d.m1), ("p(y2|x2,u)", py2, d.n2, d.m2)] {
                for row in 0..n * d.k {
                    let s: f64 = p[row * m..(row + 1) * m].iter().sum();
                    if (s - 1.0).abs() > COND_SUM_TOL {
                        return violation(
                            format!("{} slice at (x={}, u={}) sums to {}", name, row / d.k, row % d.k, s),
                            vec![row / d.k, row % d.k],
                        );
                    }
                }
            }
        }
        for x1 in 0..d.n1 {
            for x2 in 0..d.n2 {
                self.cell(x1, x2, &mut cell);
                let s: f64 = match self {
                    Self::Joint { values, .. } => {
                        let w = d.k * d.m1 * d.m2;
                        let b = (x1 * d.n2 + x2) * w;
                        values[b..b + w].iter().sum()
                    }
                    Self::Factored { .. } => cell.pu.iter().sum(),
                };
                if (s - 1.0).abs() > COND_SUM_TOL {
                    return violation(
                        format!("conditional slice at (x1={}, x2={}) sums to {}", x1, x2, s),
                        vec![x1, x2],
                    );
                }
            }
        }
        Ok(())
    }
}

/// The free reproduction distribution q(u, y1, y2) with its conditional caches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionPrior {
    k: usize,
    m1: usize,
    m2: usize,
    joint: Vec<f64>,
    qu: Vec<f64>,
    qy1: Vec<f64>,
    qy2: Vec<f64>,
}

fn conditional(joint_um: &[f64], qu: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; joint_um.len()];
    for (u, &q) in qu.iter().enumerate() {
        for y in 0..m {
            out[u * m + y] = if q > 0.0 { joint_um[u * m + y] / q } else { 1.0 / m as f64 };
        }
    }
    out
}

impl ReproductionPrior {
    /// Builds the prior from a joint q(u, y1, y2); the caches are its marginals.
    pub fn from_joint(k: usize, m1: usize, m2: usize, joint: Vec<f64>) -> Result<Self> {
        if joint.len() != k * m1 * m2 || joint.is_empty() {
            return Err(Error::Dimension(format!("expected {} prior values, got {}", k * m1 * m2, joint.len())));
        }
        let mut qu = vec![0.0; k];
        let mut qu1 = vec![0.0; k * m1];
        let mut qu2 = vec![0.0; k * m2];
        for u in 0..k {
            for y1 in 0..m1 {
                for y2 in 0..m2 {
                    let v = joint[(u * m1 + y1) * m2 + y2];
                    qu[u] += v;
                    qu1[u * m1 + y1] += v;
                    qu2[u * m2 + y2] += v;
                }
            }
        }
        let qy1 = conditional(&qu1, &qu, m1);
        let qy2 = conditional(&qu2, &qu, m2);
        Ok(Self { k, m1, m2, joint, qu, qy1, qy2 })
    }

    /// Builds q(u) q(y1|u) q(y2|u) from its factors.
    pub fn from_factors(qu: Vec<f64>, qy1: Vec<f64>, qy2: Vec<f64>) -> Result<Self> {
        let k = qu.len();
        if k == 0 || qy1.len() % k != 0 || qy2.len() % k != 0 || qy1.is_empty() || qy2.is_empty() {
            return Err(Error::Dimension("prior factor lengths are inconsistent".into()));
        }
        let (m1, m2) = (qy1.len() / k, qy2.len() / k);
        let mut joint = Vec::with_capacity(k * m1 * m2);
        for u in 0..k {
            for y1 in 0..m1 {
                for y2 in 0..m2 {
                    joint.push(qu[u] * qy1[u * m1 + y1] * qy2[u * m2 + y2]);
                }
            }
        }
        Ok(Self { k, m1, m2, joint, qu, qy1, qy2 })
    }

    pub fn uniform(k: usize, m1: usize, m2: usize) -> Self {
        Self::from_factors(vec![1.0 / k as f64; k], vec![1.0 / m1 as f64; k * m1], vec![1.0 / m2 as f64; k * m2])
            .expect("nonzero sizes")
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn m1(&self) -> usize {
        self.m1
    }
    pub fn m2(&self) -> usize {
        self.m2
    }
    pub fn joint(&self) -> &[f64] {
        &self.joint
    }
    /// q(u).
    pub fn qu(&self) -> &[f64] {
        &self.qu
    }
    /// q(y1|u), k x m1.
    pub fn qy1(&self) -> &[f64] {
        &self.qy1
    }
    /// q(y2|u), k x m2.
    pub fn qy2(&self) -> &[f64] {
        &self.qy2
    }
}

impl Validate for ReproductionPrior {
    fn validate(&self) -> std::result::Result<(), Violation> {
        if let Some(i) = self.joint.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return violation(format!("negative or non-finite prior entry at flat index {}", i), vec![i]);
        }
        let s: f64 = self.joint.iter().sum();
        if (s - 1.0).abs() > COND_SUM_TOL {
            return violation(format!("prior sums to {} instead of 1", s), vec![]);
        }
        let (k, m1, m2) = (self.k, self.m1, self.m2);
        for u in 0..k {
            let qu = self.qu[u];
            if qu <= 0.0 {
                continue;
            }
            for y1 in 0..m1 {
                let j: f64 = (0..m2).map(|y2| self.joint[(u * m1 + y1) * m2 + y2]).sum();
                if (j - qu * self.qy1[u * m1 + y1]).abs() > COND_SUM_TOL {
                    return violation(format!("cached q(y1|u) inconsistent at (u={}, y1={})", u, y1), vec![u, y1]);
                }
            }
            for y2 in 0..m2 {
                let j: f64 = (0..m1).map(|y1| self.joint[(u * m1 + y1) * m2 + y2]).sum();
                if (j - qu * self.qy2[u * m2 + y2]).abs() > COND_SUM_TOL {
                    return violation(format!("cached q(y2|u) inconsistent at (u={}, y2={})", u, y2), vec![u, y2]);
                }
            }
        }
        Ok(())
    }
}

/// Mutual informations (I(X;U), I(X;Y1|U), I(X;Y2|U)) in nats.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateTriple {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl RateTriple {
    pub fn weighted(&self, w: &Weights) -> f64 {
        w.a0 * self.r0 + w.a1 * self.r1 + w.a2 * self.r2
    }
}

/// Marginals p(u), p(u,y1), p(u,y2) induced by a coding distribution.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub pu: Vec<f64>,
    pub puy1: Vec<f64>,
    pub puy2: Vec<f64>,
}

pub fn marginals(pmf: &JointPmf, coding: &CodingDistribution) -> Result<Marginals> {
    coding.check_source(pmf)?;
    let d = coding.dims();
    let mut cell = Cell::new(d);
    let mut m = Marginals { pu: vec![0.0; d.k], puy1: vec![0.0; d.k * d.m1], puy2: vec![0.0; d.k * d.m2] };
    for x1 in 0..d.n1 {
        for x2 in 0..d.n2 {
            let p = pmf.p(x1, x2);
            if p == 0.0 {
                continue;
            }
            coding.cell(x1, x2, &mut cell);
            for (a, b) in m.pu.iter_mut().zip(&cell.pu) {
                *a += p * b;
            }
            for (a, b) in m.puy1.iter_mut().zip(&cell.puy1) {
                *a += p * b;
            }
            for (a, b) in m.puy2.iter_mut().zip(&cell.puy2) {
                *a += p * b;
            }
        }
    }
    Ok(m)
}

/// Raw (unclamped) rate triple.
pub(crate) fn rate_triple_raw(pmf: &JointPmf, coding: &CodingDistribution) -> Result<RateTriple> {
    let marg = marginals(pmf, coding)?;
    let d = coding.dims();
    let mut cell = Cell::new(d);
    let (mut r0, mut r1, mut r2) = (0.0, 0.0, 0.0);
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
                r0 += p * plogpq(pu, marg.pu[u]);
                for y1 in 0..d.m1 {
                    let j = cell.puy1[u * d.m1 + y1];
                    if j > 0.0 {
                        let cond_x = j / pu;
                        let cond = marg.puy1[u * d.m1 + y1] / marg.pu[u];
                        r1 += p * j * (cond_x.max(LOG_FLOOR) / cond.max(LOG_FLOOR)).ln();
                    }
                }
                for y2 in 0..d.m2 {
                    let j = cell.puy2[u * d.m2 + y2];
                    if j > 0.0 {
                        let cond_x = j / pu;
                        let cond = marg.puy2[u * d.m2 + y2] / marg.pu[u];
                        r2 += p * j * (cond_x.max(LOG_FLOOR) / cond.max(LOG_FLOOR)).ln();
                    }
                }
            }
        }
    }
    Ok(RateTriple { r0, r1, r2 })
}

/// (I(X1,X2;U), I(X1,X2;Y1|U), I(X1,X2;Y2|U)) in nats, each clamped at 0.
pub fn rate_triple(pmf: &JointPmf, coding: &CodingDistribution) -> Result<RateTriple> {
    let r = rate_triple_raw(pmf, coding)?;
    Ok(RateTriple { r0: r.r0.max(0.0), r1: r.r1.max(0.0), r2: r.r2.max(0.0) })
}

/// (E d1(X1,Y1), E d2(X2,Y2)) under the induced joint.
pub fn expected_distortions(pmf: &JointPmf, coding: &CodingDistribution, dist: &DistortionSpec) -> Result<(f64, f64)> {
    coding.check_source(pmf)?;
    dist.check_source(pmf)?;
    let d = coding.dims();
    if d.m1 != dist.m1() || d.m2 != dist.m2() {
        return Err(Error::Dimension(format!(
            "coding reproduces {}x{} symbols but distortion expects {}x{}",
            d.m1,
            d.m2,
            dist.m1(),
            dist.m2()
        )));
    }
    let mut cell = Cell::new(d);
    let (mut e1, mut e2) = (0.0, 0.0);
    for x1 in 0..d.n1 {
        for x2 in 0..d.n2 {
            let p = pmf.p(x1, x2);
            if p == 0.0 {
                continue;
            }
            coding.cell(x1, x2, &mut cell);
            for u in 0..d.k {
                for y1 in 0..d.m1 {
                    e1 += p * cell.puy1[u * d.m1 + y1] * dist.d1(x1, y1);
                }
                for y2 in 0..d.m2 {
                    e2 += p * cell.puy2[u * d.m2 + y2] * dist.d2(x2, y2);
                }
            }
        }
    }
    Ok((e1, e2))
}

/// Smallest expected distortion achievable with a constant reproduction.
pub fn d_max(pmf: &JointPmf, dist: &DistortionSpec) -> Result<(f64, f64)> {
    dist.check_source(pmf)?;
    let p1 = pmf.marginal1();
    let p2 = pmf.marginal2();
    let best = |p: &[f64], m: usize, d: &dyn Fn(usize, usize) -> f64| -> f64 {
        (0..m)
            .map(|y| p.iter().enumerate().map(|(x, px)| px * d(x, y)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    };
    Ok((best(&p1, dist.m1(), &|x, y| dist.d1(x, y)), best(&p2, dist.m2(), &|x, y| dist.d2(x, y))))
}

/// Unit-variance bivariate Gaussian with correlation `rho` sampled on a
/// `points x points` grid over `[-half_width, half_width]^2`, with squared
/// error distortion and reproductions on the same grid.
pub fn discretize_gaussian(rho: f64, half_width: f64, points: usize) -> Result<(JointPmf, DistortionSpec)> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::Invalid(format!("correlation {} out of range (-1, 1)", rho)));
    }
    if points < 3 || !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::Invalid(format!(
            "grid needs at least 3 points and a positive half width (got {} points, half width {})",
            points, half_width
        )));
    }
    let step = 2.0 * half_width / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| -half_width + i as f64 * step).collect();
    let c = 1.0 / (2.0 * (1.0 - rho * rho));
    let mut probs = Vec::with_capacity(points * points);
    for &a in &grid {
        for &b in &grid {
            probs.push((-(a * a - 2.0 * rho * a * b + b * b) * c).exp());
        }
    }
    // Symmetric pairwise summation keeps the (x1,x2) <-> (-x1,-x2) symmetry exact.
    let total = pairwise_sum(&probs);
    probs.iter_mut().for_each(|p| *p /= total);
    let sq: Vec<f64> = grid.iter().flat_map(|&x| grid.iter().map(move |&y| (x - y) * (x - y))).collect();
    let pmf = JointPmf::new(points, points, probs)?;
    let dist = DistortionSpec::new(points, points, sq.clone(), points, points, sq)?;
    Ok((pmf, dist))
}

/// Grid coordinates used by [`discretize_gaussian`].
pub fn gaussian_grid(half_width: f64, points: usize) -> Vec<f64> {
    let step = 2.0 * half_width / (points - 1) as f64;
    (0..points).map(|i| -half_width + i as f64 * step).collect()
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_pmf_is_valid() {
        assert!(JointPmf::uniform(2, 2).validate().is_ok());
    }

    #[test]
    fn negative_entry_is_reported_with_index() {
        let pmf = JointPmf::new(2, 2, vec![0.6, -0.1, 0.25, 0.25]).unwrap();
        let v = pmf.validate().unwrap_err();
        assert_eq!(v.message, "negative entry at (0,1)");
        assert_eq!(v.index, vec![0, 1]);
    }

    #[test]
    fn short_conditional_slice_is_reported() {
        let dims = Dims { n1: 1, n2: 2, k: 1, m1: 1, m2: 1 };
        let c = CodingDistribution::joint(dims, vec![1.0, 0.9]).unwrap();
        let v = c.validate().unwrap_err();
        assert!(v.message.contains("(x1=0, x2=1)"), "{}", v.message);
    }

    #[test]
    fn independent_coding_has_zero_rates() {
        let pmf = JointPmf::new(2, 2, vec![0.4, 0.1, 0.2, 0.3]).unwrap();
        let prior = ReproductionPrior::from_factors(vec![0.3, 0.7], vec![0.5, 0.5, 0.2, 0.8], vec![0.9, 0.1, 0.4, 0.6])
            .unwrap();
        let c = CodingDistribution::independent(2, 2, &prior);
        let r = rate_triple(&pmf, &c).unwrap();
        assert!(r.r0.abs() < 1e-15 && r.r1.abs() < 1e-15 && r.r2.abs() < 1e-15);
    }

    #[test]
    fn copy_of_fair_bit_costs_ln2() {
        let pmf = JointPmf::new(2, 1, vec![0.5, 0.5]).unwrap();
        let dims = Dims { n1: 2, n2: 1, k: 2, m1: 1, m2: 1 };
        let c = CodingDistribution::joint(dims, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let r = rate_triple(&pmf, &c).unwrap();
        assert!((r.r0 - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!((r.r1, r.r2), (0.0, 0.0));
    }

    #[test]
    fn copies_have_zero_hamming_distortion() {
        let pmf = JointPmf::dsbs(0.4).unwrap();
        let dims = Dims { n1: 2, n2: 2, k: 1, m1: 2, m2: 2 };
        let mut pu = vec![1.0; 4];
        pu.iter_mut().for_each(|v| *v = 1.0);
        let py = vec![1.0, 0.0, 0.0, 1.0];
        let c = CodingDistribution::factored(dims, pu, py.clone(), py).unwrap();
        assert_eq!(expected_distortions(&pmf, &c, &DistortionSpec::hamming(2, 2)).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn uniform_guess_has_half_mismatch() {
        let pmf = JointPmf::uniform(2, 2);
        let prior = ReproductionPrior::uniform(1, 2, 2);
        let c = CodingDistribution::independent(2, 2, &prior);
        let (e1, e2) = expected_distortions(&pmf, &c, &DistortionSpec::hamming(2, 2)).unwrap();
        assert!((e1 - 0.5).abs() < 1e-15 && (e2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn d_max_guesses_the_mode() {
        let fair = JointPmf::uniform(2, 2);
        assert_eq!(d_max(&fair, &DistortionSpec::hamming(2, 2)).unwrap().0, 0.5);
        let skew = JointPmf::new(2, 1, vec![0.9, 0.1]).unwrap();
        let d = DistortionSpec::hamming(2, 1);
        assert!((d_max(&skew, &d).unwrap().0 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn factored_expands_to_the_same_joint() {
        let dims = Dims { n1: 2, n2: 1, k: 2, m1: 2, m2: 1 };
        let c = CodingDistribution::factored(
            dims,
            vec![0.3, 0.7, 0.6, 0.4],
            vec![0.5, 0.5, 0.1, 0.9, 0.2, 0.8, 1.0, 0.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let j = c.to_joint();
        assert!(j.validate().is_ok());
        for x1 in 0..2 {
            for u in 0..2 {
                for y1 in 0..2 {
                    assert_eq!(c.value(x1, 0, u, y1, 0), j.value(x1, 0, u, y1, 0));
                }
            }
        }
    }

    #[test]
    fn gaussian_grid_is_normalized_and_point_symmetric() {
        let (pmf, dist) = discretize_gaussian(0.3, 3.0, 9).unwrap();
        assert!(pmf.validate().is_ok());
        for a in 0..9 {
            for b in 0..9 {
                assert_eq!(pmf.p(a, b), pmf.p(8 - a, 8 - b));
            }
        }
        assert_eq!(dist.d1(0, 8), 36.0);
    }

    #[test]
    fn gaussian_grid_rejects_bad_input() {
        assert!(discretize_gaussian(1.0, 4.0, 9).is_err());
        assert!(discretize_gaussian(0.5, 4.0, 2).is_err());
        assert!(discretize_gaussian(0.5, 0.0, 9).is_err());
    }
}
