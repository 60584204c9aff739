//! Closed forms for a pair of unit-variance Gaussian sources with correlation
//! rho under squared error.
//!
//! The auxiliary U has variance `sigma0sq` and enters the reproductions as
//! `Y_i = m_i U + V_i`. Writing `K` for the conditional covariance of the
//! sources given U,
//!
//! ```text
//! K = [[1 - m1^2 s, rho - m1 m2 s], [rho - m1 m2 s, 1 - m2^2 s]],  s = sigma0sq
//! R0 = 1/2 ln((1 - rho^2) / det K),  Ri = 1/2 ln(K_ii / D_i).
//! ```

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RateTriple, Weights};

/// Slack on the inequality predicates that select a region.
pub const PREDICATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    rho: f64,
}

impl GaussianSpec {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Domain(format!("correlation out of range: {} is not in (0, 1)", rho)));
        }
        Ok(Self { rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

fn check_targets(targets: (f64, f64)) -> Result<()> {
    if !(targets.0 > 0.0 && targets.1 > 0.0 && targets.0.is_finite() && targets.1.is_finite()) {
        return Err(Error::Domain(format!("distortions ({}, {}) must be positive and finite", targets.0, targets.1)));
    }
    Ok(())
}

fn ln_plus(x: f64) -> f64 {
    x.ln().max(0.0)
}

/// Weight and distortion combinations with an immediate answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpecialCase {
    /// alpha0 = 0: everything goes on the free private links.
    NoCommonCost,
    /// alpha2 = 0 and alpha1 > alpha0: describe X1 on the common link.
    OnlyFirstCommon,
    /// D2 >= 1: the second source needs nothing.
    SecondFree,
    /// alpha1 = 0 and alpha2 > alpha0.
    OnlySecondCommon,
    /// D1 >= 1.
    FirstFree,
    /// alpha1 + alpha2 <= alpha0: separate description is cheapest.
    Separate,
}

impl SpecialCase {
    /// Roman numeral in the order the cases are usually listed.
    pub fn numeral(&self) -> &'static str {
        match self {
            Self::NoCommonCost => "i",
            Self::OnlyFirstCommon => "ii",
            Self::SecondFree => "iii",
            Self::OnlySecondCommon => "iv",
            Self::FirstFree => "v",
            Self::Separate => "vi",
        }
    }
}

/// Returns the rate and case when the weights or targets make the problem
/// trivial, else `None`.
///
/// A target at or above 1 is served by the common link alone at weight
/// alpha0. When alpha1 + alpha2 <= alpha0 the separate description is used
/// first, so a free layer then costs nothing.
pub fn special_case_rd(w: &Weights, targets: (f64, f64), spec: &GaussianSpec) -> Result<Option<(SpecialCase, f64, RateTriple)>> {
    check_targets(targets)?;
    let _ = spec;
    let (d1, d2) = targets;
    let r1 = 0.5 * ln_plus(1.0 / d1);
    let r2 = 0.5 * ln_plus(1.0 / d2);
    let out = |case, r0: f64, ra: f64, rb: f64| {
        let rt = RateTriple { r0, r1: ra, r2: rb };
        Some((case, rt.weighted(w), rt))
    };
    Ok(if w.a0 == 0.0 {
        // Both descriptions ride on the free common link.
        out(SpecialCase::NoCommonCost, r1 + r2, 0.0, 0.0)
    } else if w.a1 + w.a2 <= w.a0 {
        out(SpecialCase::Separate, 0.0, r1, r2)
    } else if w.a2 == 0.0 && w.a1 > w.a0 {
        out(SpecialCase::OnlyFirstCommon, r1, 0.0, 0.0)
    } else if w.a1 == 0.0 && w.a2 > w.a0 {
        out(SpecialCase::OnlySecondCommon, r2, 0.0, 0.0)
    } else if d2 >= 1.0 {
        out(SpecialCase::SecondFree, r1, 0.0, 0.0)
    } else if d1 >= 1.0 {
        out(SpecialCase::FirstFree, r2, 0.0, 0.0)
    } else {
        None
    })
}

/// The two binary cubics whose roots fix (m1, m2).
pub fn f_alpha(m1: f64, m2: f64, s: f64, rho: f64, w: &Weights) -> (f64, f64) {
    let (c1, c2) = (w.a1 / w.a0, w.a2 / w.a0);
    let cross = rho - m1 * m2 * s;
    let f1 = c1 * (m2 - m1 * rho) * cross + (c1 - 1.0) * (m1 - m2 * rho) * (1.0 - m1 * m1 * s);
    let f2 = c2 * (m1 - m2 * rho) * cross + (c2 - 1.0) * (m2 - m1 * rho) * (1.0 - m2 * m2 * s);
    (f1, f2)
}

/// Interior stationary point (nu1, nu2) = (1 - m1^2, 1 - m2^2) at sigma0sq = 1
/// for unequal private weights.
pub fn nu_values(w: &Weights, rho: f64) -> Result<(f64, f64)> {
    let (a0, a1, a2) = (w.a0, w.a1, w.a2);
    if a1 == a2 {
        return Err(Error::Regime("alpha1 = alpha2 has no separate nu values; use the equal-weight interior point".into()));
    }
    if a0 < a1.max(a2) || a1 + a2 <= a0 {
        return Err(Error::Regime(format!(
            "nu values need alpha0 >= max(alpha1, alpha2) and alpha1 + alpha2 > alpha0; got ({}, {}, {})",
            a0, a1, a2
        )));
    }
    if a1 == a0 {
        return Ok((0.0, 1.0 - rho * rho));
    }
    if a2 == a0 {
        return Ok((1.0 - rho * rho, 0.0));
    }
    let sq = ((a1 - a2).powi(2) * rho * rho + 4.0 * (a0 - a1) * (a0 - a2)).sqrt();
    let n1 = (a0 - a1) * a1 / ((a0 - a2) * a2 - (a0 - a1) * a1)
        * ((((a2 - a1) * rho + sq) / (2.0 * (a0 - a1))).powi(2) - 1.0);
    let n2 = (a0 - a2) * a2 / ((a0 - a1) * a1 - (a0 - a2) * a2)
        * ((((a1 - a2) * rho + sq) / (2.0 * (a0 - a2))).powi(2) - 1.0);
    Ok((n1, n2))
}

/// Which loading is solved for; the other is held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unknown {
    /// Solve f_alpha1(m1, fixed) = 0.
    M1,
    /// Solve f_alpha2(fixed, m2) = 0.
    M2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub m: f64,
    /// True when the cubic degenerates and the root is the bracket's upper end.
    pub boundary: bool,
}

/// Unique root of the relevant cubic inside
/// `(fixed rho, min(fixed / rho, rho / (fixed s)))`, by bisection.
pub fn find_root_m(unknown: Unknown, fixed: f64, s: f64, rho: f64, w: &Weights) -> Result<Root> {
    let lo = fixed * rho;
    let up_a = fixed / rho;
    let up_b = rho / (fixed * s);
    let hi = up_a.min(up_b);
    let case = if (up_a - up_b).abs() <= 1e-12 * up_a {
        "both upper ends coincide"
    } else if up_a < up_b {
        "upper end fixed/rho"
    } else {
        "upper end rho/(fixed sigma0^2)"
    };
    if !(hi > lo) {
        return Err(Error::Regime(format!("empty root bracket ({}, {}) ({})", lo, hi, case)));
    }
    let weight = match unknown {
        Unknown::M1 => w.a1,
        Unknown::M2 => w.a2,
    };
    if weight == w.a0 {
        return Ok(Root { m: hi, boundary: true });
    }
    let g = |m: f64| -> f64 {
        match unknown {
            Unknown::M1 => f_alpha(m, fixed, s, rho, w).0,
            Unknown::M2 => f_alpha(fixed, m, s, rho, w).1,
        }
    };
    let margin = 1e-12 * (hi - lo);
    let (a, b) = (lo + margin, hi - margin);
    let bisect = |h: &dyn Fn(f64) -> f64| -> Option<f64> {
        let (mut x0, mut x1) = (a, b);
        let f0 = h(x0);
        if f0 == 0.0 {
            return Some(x0);
        }
        if f0.signum() == h(x1).signum() {
            return None;
        }
        // Runs to full precision; the certificate amplifies the residual by |H|^2.
        for _ in 0..200 {
            let mid = 0.5 * (x0 + x1);
            if mid <= x0 || mid >= x1 {
                return Some(if h(x0).abs() <= h(x1).abs() { x0 } else { x1 });
            }
            let fm = h(mid);
            if fm == 0.0 {
                return Some(mid);
            }
            if fm.signum() == f0.signum() {
                x0 = mid;
            } else {
                x1 = mid;
            }
        }
        Some(0.5 * (x0 + x1))
    };
    if let Some(m) = bisect(&g) {
        return Ok(Root { m, boundary: false });
    }
    // The cubic can vanish at the upper end itself; divide that root out.
    if g(hi).abs() <= 1e-12 {
        if let Some(m) = bisect(&|m: f64| g(m) / (hi - m)) {
            return Ok(Root { m, boundary: false });
        }
    }
    Err(Error::Regime(format!("no sign change of the cubic in ({}, {}) ({})", lo, hi, case)))
}

/// Which closed form applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Special(SpecialCase),
    /// m1 = 1, sigma0sq = 1 - D1, m2 from the cubic.
    DD1,
    /// m2 = 1, sigma0sq = 1 - D2, m1 from the cubic.
    DD2,
    /// Both private rates vanish.
    DD3,
    /// Interior point with unequal private weights.
    DD4Neq,
    /// Interior point with equal private weights.
    DD4Eq,
    /// alpha2 <= alpha0 < alpha1: layer 1 carried on the common link.
    SuccRef12,
    /// alpha1 <= alpha0 < alpha2.
    SuccRef21,
    /// Both private weights above alpha0.
    Xiao,
    /// U carries nothing.
    NoCommon,
    /// Describing X2 on the common link already meets D1.
    Inactive1,
    /// Describing X1 on the common link already meets D2.
    Inactive2,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Special(_) => "SPECIAL",
            Self::DD1 => "DD1",
            Self::DD2 => "DD2",
            Self::DD3 => "DD3",
            Self::DD4Neq => "DD4_NEQ",
            Self::DD4Eq => "DD4_EQ",
            Self::SuccRef12 => "SUCC_REF_12",
            Self::SuccRef21 => "SUCC_REF_21",
            Self::Xiao => "XIAO",
            Self::NoCommon => "NO_COMMON",
            Self::Inactive1 => "INACTIVE_1",
            Self::Inactive2 => "INACTIVE_2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub region: Region,
    pub m1: f64,
    pub m2: f64,
    pub sigma0sq: f64,
    /// The cubic root came from the degenerate boundary limit.
    pub boundary_root: bool,
}

/// Conditional covariance of the sources given U: (K11, K12, K22).
pub fn conditional_cov(m1: f64, m2: f64, s: f64, rho: f64) -> (f64, f64, f64) {
    (1.0 - m1 * m1 * s, rho - m1 * m2 * s, 1.0 - m2 * m2 * s)
}

/// Residuals of the selection predicates; all are >= -tol when the
/// parameters are admissible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub f1: f64,
    pub f2: f64,
    pub k11_minus_d1: f64,
    pub k22_minus_d2: f64,
    pub cross: f64,
    pub ratio: f64,
}

impl Residuals {
    pub fn new(m1: f64, m2: f64, s: f64, rho: f64, w: &Weights, targets: (f64, f64)) -> Self {
        let (f1, f2) = f_alpha(m1, m2, s, rho, w);
        let (k11, k12, k22) = conditional_cov(m1, m2, s, rho);
        let ratio = if m1 > 0.0 && m2 > 0.0 { (m1 / m2).min(m2 / m1) - rho } else { f64::INFINITY };
        Self { f1, f2, k11_minus_d1: k11 - targets.0, k22_minus_d2: k22 - targets.1, cross: k12, ratio }
    }

    pub fn admissible(&self, tol: f64) -> bool {
        self.f1 >= -tol
            && self.f2 >= -tol
            && self.k11_minus_d1 >= -tol
            && self.k22_minus_d2 >= -tol
            && self.cross >= -tol
            && self.ratio > -1e-12
    }
}

impl fmt::Display for Residuals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "f1={:.3e} f2={:.3e} K11-D1={:.3e} K22-D2={:.3e} K12={:.3e} ratio-rho={:.3e}",
            self.f1, self.f2, self.k11_minus_d1, self.k22_minus_d2, self.cross, self.ratio
        )
    }
}

/// Picks the region and its (m1, m2, sigma0sq) for weights and targets not
/// covered by [`special_case_rd`].
///
/// With alpha0 at least both private weights the candidates are tried in
/// the order DD3, DD1, DD2, interior point, no common part; the first whose
/// predicates hold wins. Otherwise the region follows from how alpha0
/// compares with alpha1 and alpha2.
pub fn classify_region(w: &Weights, targets: (f64, f64), spec: &GaussianSpec) -> Result<Classification> {
    check_targets(targets)?;
    let (d1, d2) = targets;
    if !(d1 < 1.0 && d2 < 1.0) || !w.all_positive() || w.a1 + w.a2 <= w.a0 {
        return Err(Error::Regime("weights or targets fall under a special case".into()));
    }
    let rho = spec.rho();
    let (a0, a1, a2) = (w.a0, w.a1, w.a2);
    let make = |region, m1, m2, s, boundary_root| Classification { region, m1, m2, sigma0sq: s, boundary_root };
    let ok = |m1: f64, m2: f64, s: f64| Residuals::new(m1, m2, s, rho, w, targets).admissible(PREDICATE_TOL);

    if a0 >= a1 && a0 >= a2 {
        let mut interior: Option<(Region, f64, f64, f64, bool)> = None;
        if a1 != a2 {
            let (n1, n2) = nu_values(w, rho)?;
            if n1 < 1.0 && n2 < 1.0 {
                interior = Some((Region::DD4Neq, (1.0 - n1).max(0.0).sqrt(), (1.0 - n2).max(0.0).sqrt(), 1.0, false));
            }
        } else if a1 == a0 {
            // Every point of m1 m2 = rho solves both cubics; take the one with
            // the smallest common rate that still meets both distortions.
            let lo = rho * rho / (1.0 - d2);
            let hi = 1.0 - d1;
            if lo <= hi {
                let t = rho.clamp(lo, hi);
                interior = Some((Region::DD4Eq, t.sqrt(), rho / t.sqrt(), 1.0, false));
            }
        } else {
            let den = a0 - a1 - a2;
            let m1 = ((a1 * rho + a1 - a0) / den).abs().sqrt();
            let m2 = ((a2 * rho + a2 - a0) / den).abs().sqrt();
            let (f1, f2) = f_alpha(m1, m2, 1.0, rho, w);
            // The absolute value can pick the wrong sign; keep it only when
            // it really is a stationary point.
            if f1.abs() <= 1e-9 && f2.abs() <= 1e-9 {
                interior = Some((Region::DD4Eq, m1, m2, 1.0, false));
            }
        }
        // With all weights equal the corner and interior candidates give the
        // same total, and the interior point has the smallest common rate.
        let all_equal = a1 == a0 && a2 == a0;
        let mut tried: Vec<(Region, f64, f64, f64, bool)> = Vec::new();
        tried.push((Region::DD3, (1.0 - d1).sqrt(), (1.0 - d2).sqrt(), 1.0, false));
        if all_equal {
            tried.extend(interior);
        }
        if let Ok(r) = find_root_m(Unknown::M2, 1.0, 1.0 - d1, rho, w) {
            tried.push((Region::DD1, 1.0, r.m, 1.0 - d1, r.boundary));
        }
        if let Ok(r) = find_root_m(Unknown::M1, 1.0, 1.0 - d2, rho, w) {
            tried.push((Region::DD2, r.m, 1.0, 1.0 - d2, r.boundary));
        }
        if !all_equal {
            tried.extend(interior);
        }
        tried.push((Region::NoCommon, 0.0, 0.0, 1.0, false));
        for &(region, m1, m2, s, b) in &tried {
            if ok(m1, m2, s) {
                return Ok(make(region, m1, m2, s, b));
            }
        }
        let report: Vec<String> = tried
            .iter()
            .map(|&(region, m1, m2, s, _)| format!("{}: {}", region, Residuals::new(m1, m2, s, rho, w, targets)))
            .collect();
        return Err(Error::Classification(report.join("; ")));
    }

    let inactive1 = d1 >= 1.0 - rho * rho * (1.0 - d2);
    let inactive2 = d2 >= 1.0 - rho * rho * (1.0 - d1);
    if a1 <= a0 {
        // alpha1 <= alpha0 < alpha2
        let s = 1.0 - d2;
        if inactive1 {
            return Ok(make(Region::Inactive1, rho, 1.0, s, false));
        }
        if let Ok(r) = find_root_m(Unknown::M1, 1.0, s, rho, w) {
            if ok(r.m, 1.0, s) {
                return Ok(make(Region::SuccRef21, r.m, 1.0, s, r.boundary));
            }
        }
        let m1 = ((1.0 - d1) / s).sqrt();
        if ok(m1, 1.0, s) {
            return Ok(make(Region::SuccRef21, m1, 1.0, s, false));
        }
        return Err(Error::Classification(format!(
            "{}: {}",
            Region::SuccRef21,
            Residuals::new(m1, 1.0, s, rho, w, targets)
        )));
    }
    if a2 <= a0 {
        // alpha2 <= alpha0 < alpha1
        let s = 1.0 - d1;
        if inactive2 {
            return Ok(make(Region::Inactive2, 1.0, rho, s, false));
        }
        if let Ok(r) = find_root_m(Unknown::M2, 1.0, s, rho, w) {
            if ok(1.0, r.m, s) {
                return Ok(make(Region::SuccRef12, 1.0, r.m, s, r.boundary));
            }
        }
        let m2 = ((1.0 - d2) / s).sqrt();
        if ok(1.0, m2, s) {
            return Ok(make(Region::SuccRef12, 1.0, m2, s, false));
        }
        return Err(Error::Classification(format!(
            "{}: {}",
            Region::SuccRef12,
            Residuals::new(1.0, m2, s, rho, w, targets)
        )));
    }
    if inactive1 {
        return Ok(make(Region::Inactive1, rho, 1.0, 1.0 - d2, false));
    }
    if inactive2 {
        return Ok(make(Region::Inactive2, 1.0, rho, 1.0 - d1, false));
    }
    Ok(make(Region::Xiao, (1.0 - d1).sqrt(), (1.0 - d2).sqrt(), 1.0, false))
}

/// Weighted rate for the given parameters:
/// a0 R0 + a1 R1 + a2 R2 with the plain (unclamped) logarithms.
pub fn parametric_rd(m1: f64, m2: f64, s: f64, targets: (f64, f64), spec: &GaussianSpec, w: &Weights) -> f64 {
    rate_triple_gaussian(m1, m2, s, targets, spec).weighted(w)
}

/// (R0, R1, R2) for the given parameters.
pub fn rate_triple_gaussian(m1: f64, m2: f64, s: f64, targets: (f64, f64), spec: &GaussianSpec) -> RateTriple {
    let rho = spec.rho();
    let (k11, k12, k22) = conditional_cov(m1, m2, s, rho);
    let det = k11 * k22 - k12 * k12;
    // Rates that vanish analytically come out as +-1e-16; larger negatives are
    // left alone so a wrong parameter set stays visible.
    let clean = |r: f64| if r < 0.0 && r > -1e-12 { 0.0 } else { r };
    RateTriple {
        r0: clean(0.5 * ((1.0 - rho * rho) / det).ln()),
        r1: clean(0.5 * (k11 / targets.0).ln()),
        r2: clean(0.5 * (k22 / targets.1).ln()),
    }
}

/// Dual quantities that certify a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateBundle {
    /// Inverse of the conditional covariance, row-major.
    pub h: [[f64; 2]; 2],
    pub det_h: f64,
    pub b: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub det_g1: f64,
    pub det_g2: f64,
    pub k0: f64,
    pub sigma_v1sq: f64,
    pub sigma_v2sq: f64,
}

impl CertificateBundle {
    /// gamma_i (beta_i / alpha_i - omega_i) for both layers.
    pub fn complementary_slackness(&self, w: &Weights) -> (f64, f64) {
        (self.gamma1 * (self.beta1 / w.a1 - self.omega1), self.gamma2 * (self.beta2 / w.a2 - self.omega2))
    }

    /// Distortions implied by the dual quantities.
    pub fn reconstructed_distortions(&self, w: &Weights) -> (f64, f64) {
        (
            self.eta1 / (2.0 * (self.gamma1 + self.beta1 / w.a1 * self.eta1)),
            self.eta2 / (2.0 * (self.gamma2 + self.beta2 / w.a2 * self.eta2)),
        )
    }

    /// Weighted rate recomputed from the determinants alone.
    pub fn rd_identity(&self, w: &Weights, spec: &GaussianSpec) -> f64 {
        let rho = spec.rho();
        0.5 * w.a0 * (1.0 - rho * rho).ln() + 0.5 * (w.a0 - w.a1 - w.a2) * self.det_h.ln()
            + 0.5 * w.a1 * self.det_g1.ln()
            + 0.5 * w.a2 * self.det_g2.ln()
    }
}

/// Certificate quantities for parameters with both loadings positive.
pub fn certificate(m1: f64, m2: f64, s: f64, targets: (f64, f64), spec: &GaussianSpec, w: &Weights) -> Result<CertificateBundle> {
    if !(m1 > 0.0 && m2 > 0.0) {
        return Err(Error::Regime("certificate needs both loadings positive".into()));
    }
    let rho = spec.rho();
    let (k11, k12, k22) = conditional_cov(m1, m2, s, rho);
    let det = k11 * k22 - k12 * k12;
    if !(det > 0.0) {
        return Err(Error::Regime(format!("conditional covariance is singular (det = {})", det)));
    }
    let det_h = 1.0 / det;
    let h = [[k22 / det, -k12 / det], [-k12 / det, k11 / det]];
    let (c1, c2) = (w.a1 / w.a0, w.a2 / w.a0);
    let (d1, d2) = targets;
    let b = -m1 * m2 * h[0][1];
    let omega1 = (m1 - m2 * rho) * det_h / (2.0 * c1 * m1);
    let omega2 = (m2 - m1 * rho) * det_h / (2.0 * c2 * m2);
    let eta1 = b / (m2 * m2) + 2.0 * c2 * omega2;
    let eta2 = b / (m1 * m1) + 2.0 * c1 * omega1;
    let (f1, f2) = f_alpha(m1, m2, s, rho, w);
    let gamma1 = f1 * det_h * det_h / (2.0 * c1 * m1);
    let gamma2 = f2 * det_h * det_h / (2.0 * c2 * m2);
    let beta1 = w.a0 * k11 * (m1 - m2 * rho) * det_h / (2.0 * m1 * d1);
    let beta2 = w.a0 * k22 * (m2 - m1 * rho) * det_h / (2.0 * m2 * d2);
    let det_g1 = 2.0 * (gamma1 + eta1 * beta1 / w.a1);
    let det_g2 = 2.0 * (gamma2 + eta2 * beta2 / w.a2);
    let k0 = (det_h.powf(1.0 - c1 - c2) * det_g1.powf(c1) * det_g2.powf(c2)).sqrt() / (2.0 * PI);
    let sigma_v1sq = 0.5 * (1.0 / omega1 - w.a1 / beta1);
    let sigma_v2sq = 0.5 * (1.0 / omega2 - w.a2 / beta2);
    Ok(CertificateBundle {
        h,
        det_h,
        b,
        omega1,
        omega2,
        eta1,
        eta2,
        gamma1,
        gamma2,
        beta1,
        beta2,
        det_g1,
        det_g2,
        k0,
        sigma_v1sq,
        sigma_v2sq,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSolution {
    pub region: Region,
    /// (m1, m2, sigma0sq); absent for the special cases.
    pub params: Option<(f64, f64, f64)>,
    pub boundary_root: bool,
    pub rd_value: f64,
    pub rate_triple: RateTriple,
    pub certificate: Option<CertificateBundle>,
}

/// Weighted rate-distortion value with its region, parameters, rates and
/// certificate.
///
/// In the XIAO region the common rate is
/// `1/2 ln((1 - rho^2) / (D1 D2 - ([rho - sqrt((1-D1)(1-D2))]^+)^2))` and the
/// private rates vanish. In the INACTIVE regions the common link describes
/// one source and the other target is met for free.
pub fn solve_gaussian_rd(w: &Weights, targets: (f64, f64), spec: &GaussianSpec) -> Result<GaussianSolution> {
    if let Some((case, rd, rt)) = special_case_rd(w, targets, spec)? {
        return Ok(GaussianSolution {
            region: Region::Special(case),
            params: None,
            boundary_root: false,
            rd_value: rd,
            rate_triple: rt,
            certificate: None,
        });
    }
    let c = classify_region(w, targets, spec)?;
    let rho = spec.rho();
    let (d1, d2) = targets;
    let rate_triple = match c.region {
        Region::Xiao => {
            let pp = (rho - ((1.0 - d1) * (1.0 - d2)).sqrt()).max(0.0);
            RateTriple { r0: 0.5 * ((1.0 - rho * rho) / (d1 * d2 - pp * pp)).ln(), r1: 0.0, r2: 0.0 }
        }
        Region::Inactive1 => RateTriple { r0: 0.5 * (1.0 / d2).ln(), r1: 0.0, r2: 0.0 },
        Region::Inactive2 => RateTriple { r0: 0.5 * (1.0 / d1).ln(), r1: 0.0, r2: 0.0 },
        _ => rate_triple_gaussian(c.m1, c.m2, c.sigma0sq, targets, spec),
    };
    let certificate = if c.m1 > 0.0 && c.m2 > 0.0 { certificate(c.m1, c.m2, c.sigma0sq, targets, spec, w).ok() } else { None };
    Ok(GaussianSolution {
        region: c.region,
        params: Some((c.m1, c.m2, c.sigma0sq)),
        boundary_root: c.boundary_root,
        rd_value: rate_triple.weighted(w),
        rate_triple,
        certificate,
    })
}

/// Branch of the common information formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WynerCase {
    Case1,
    Case2,
    Case3,
    Case4_1,
    Case4_2,
    /// Mirror image of 4.2 with the sources exchanged.
    Case4_3,
}

impl fmt::Display for WynerCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Case1 => "1",
            Self::Case2 => "2",
            Self::Case3 => "3",
            Self::Case4_1 => "4.1",
            Self::Case4_2 => "4.2",
            Self::Case4_3 => "4.3",
        })
    }
}

/// Lossy Wyner common information in nats.
///
/// A target at or above 1 is treated as the limit of cases 1 and 2: only
/// the other source is described, so the value is 1/2 ln+(1/D_other).
pub fn wyner_ci(targets: (f64, f64), spec: &GaussianSpec) -> Result<(f64, WynerCase)> {
    check_targets(targets)?;
    let rho = spec.rho();
    let r2 = rho * rho;
    let (d1, d2) = targets;
    if d1 >= 1.0 {
        return Ok((0.5 * ln_plus(1.0 / d2), WynerCase::Case1));
    }
    if d2 >= 1.0 {
        return Ok((0.5 * ln_plus(1.0 / d1), WynerCase::Case2));
    }
    if (1.0 - d1) / (1.0 - d2) < r2 {
        return Ok((0.5 * (1.0 / d2).ln(), WynerCase::Case1));
    }
    if (1.0 - d2) / (1.0 - d1) < r2 {
        return Ok((0.5 * (1.0 / d1).ln(), WynerCase::Case2));
    }
    let prod = (1.0 - d1) * (1.0 - d2);
    if prod <= r2 {
        let g = rho - prod.sqrt();
        return Ok((0.5 * ((1.0 - r2) / (d1 * d2 - g * g)).ln(), WynerCase::Case3));
    }
    if d1 <= 1.0 - rho && d2 <= 1.0 - rho {
        return Ok((0.5 * ((1.0 + rho) / (1.0 - rho)).ln(), WynerCase::Case4_1));
    }
    if d1 <= 1.0 - rho {
        return Ok((0.5 * ((1.0 - r2) / (r2 + d2 - r2 / (1.0 - d2))).ln(), WynerCase::Case4_2));
    }
    Ok((0.5 * ((1.0 - r2) / (r2 + d1 - r2 / (1.0 - d1))).ln(), WynerCase::Case4_3))
}
