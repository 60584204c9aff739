//! Reference computations shared by the integration tests. Everything here
//! is written from the definitions, without calling the solvers under test.

#![allow(dead_code)]

use gray_wyner::model::{CodingDistribution, DistortionSpec, JointPmf, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random pmf with every entry at least `floor` before normalization.
pub fn random_pmf(r: &mut ChaCha8Rng, n1: usize, n2: usize, floor: f64) -> JointPmf {
    let v: Vec<f64> = (0..n1 * n2).map(|_| floor + r.random::<f64>()).collect();
    let s: f64 = v.iter().sum();
    JointPmf::new(n1, n2, v.iter().map(|x| x / s).collect()).unwrap()
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum()
}

/// Full joint p(x1, x2, u, y1, y2) as a flat array.
fn full_joint(pmf: &JointPmf, coding: &CodingDistribution) -> (Vec<f64>, [usize; 5]) {
    let d = coding.dims();
    let shape = [d.n1, d.n2, d.k, d.m1, d.m2];
    let mut out = Vec::with_capacity(shape.iter().product());
    for x1 in 0..d.n1 {
        for x2 in 0..d.n2 {
            for u in 0..d.k {
                for y1 in 0..d.m1 {
                    for y2 in 0..d.m2 {
                        out.push(pmf.p(x1, x2) * coding.value(x1, x2, u, y1, y2));
                    }
                }
            }
        }
    }
    (out, shape)
}

/// Marginal over the axes listed in `keep`, in that order.
fn marginal(joint: &[f64], shape: [usize; 5], keep: &[usize]) -> Vec<f64> {
    let size: usize = keep.iter().map(|&a| shape[a]).product();
    let mut out = vec![0.0; size];
    let mut idx = [0usize; 5];
    for v in joint {
        let mut flat = 0;
        for &a in keep {
            flat = flat * shape[a] + idx[a];
        }
        out[flat] += v;
        for a in (0..5).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

/// (I(X;U), I(X;Y1|U), I(X;Y2|U)) from entropies of the full joint.
pub fn brute_rates(pmf: &JointPmf, coding: &CodingDistribution) -> (f64, f64, f64) {
    let (j, s) = full_joint(pmf, coding);
    let h = |keep: &[usize]| entropy(&marginal(&j, s, keep));
    let r0 = h(&[0, 1]) + h(&[2]) - h(&[0, 1, 2]);
    let r1 = h(&[0, 1, 2]) + h(&[2, 3]) - h(&[2]) - h(&[0, 1, 2, 3]);
    let r2 = h(&[0, 1, 2]) + h(&[2, 4]) - h(&[2]) - h(&[0, 1, 2, 4]);
    (r0, r1, r2)
}

pub fn brute_distortions(pmf: &JointPmf, coding: &CodingDistribution, dist: &DistortionSpec) -> (f64, f64) {
    let (j, s) = full_joint(pmf, coding);
    let p1 = marginal(&j, s, &[0, 3]);
    let p2 = marginal(&j, s, &[1, 4]);
    let e1 = (0..s[0]).flat_map(|x| (0..s[3]).map(move |y| (x, y))).map(|(x, y)| p1[x * s[3] + y] * dist.d1(x, y)).sum();
    let e2 = (0..s[1]).flat_map(|x| (0..s[4]).map(move |y| (x, y))).map(|(x, y)| p2[x * s[4] + y] * dist.d2(x, y)).sum();
    (e1, e2)
}

/// Random coding distribution in the full five-way form.
pub fn random_joint_coding(r: &mut ChaCha8Rng, n1: usize, n2: usize, k: usize, m1: usize, m2: usize) -> CodingDistribution {
    let block = k * m1 * m2;
    let mut values = Vec::with_capacity(n1 * n2 * block);
    for _ in 0..n1 * n2 {
        let v: Vec<f64> = (0..block).map(|_| 0.01 + r.random::<f64>()).collect();
        let s: f64 = v.iter().sum();
        values.extend(v.iter().map(|x| x / s));
    }
    CodingDistribution::joint(gray_wyner::model::Dims { n1, n2, k, m1, m2 }, values).unwrap()
}

// Binary source, binary U and binary reproductions, Hamming distortion.
//
// Parameters (12 numbers in [0, 1]):
//   t[x1*2+x2]     = P(U=0 | x1, x2)
//   t[4+x1*2+u]    = P(Y1=0 | x1, u)
//   t[8+x2*2+u]    = P(Y2=0 | x2, u)

fn bin(p: f64, v: usize) -> f64 {
    if v == 0 {
        p
    } else {
        1.0 - p
    }
}

fn xlogy(p: f64, q: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * (p / q).ln()
    }
}

/// Private-layer cost for one u: a I(X;Y|U=u) weight times the mass of u,
/// plus the multiplier times the distortion contribution. `pxu[x]` is the
/// joint mass of (x, u), `r[x]` is P(Y=0 | x, u).
fn layer_cost(pxu: [f64; 2], r: [f64; 2], a: f64, b: f64) -> f64 {
    let pu = pxu[0] + pxu[1];
    if pu <= 0.0 {
        return 0.0;
    }
    let mut cost = 0.0;
    for y in 0..2 {
        let py = (pxu[0] * bin(r[0], y) + pxu[1] * bin(r[1], y)) / pu;
        for x in 0..2 {
            let c = bin(r[x], y);
            cost += a * pxu[x] * xlogy(c, py);
            if x != y {
                cost += b * pxu[x] * c;
            }
        }
    }
    cost
}

/// The weighted Lagrangian for the 12-number binary coding family.
pub fn binary_lagrangian(p: &[[f64; 2]; 2], t: &[f64; 12], w: &Weights, b: (f64, f64)) -> f64 {
    let mut pu = [0.0; 2];
    for x1 in 0..2 {
        for x2 in 0..2 {
            for u in 0..2 {
                pu[u] += p[x1][x2] * bin(t[x1 * 2 + x2], u);
            }
        }
    }
    let mut total = 0.0;
    for x1 in 0..2 {
        for x2 in 0..2 {
            for u in 0..2 {
                total += w.a0 * p[x1][x2] * xlogy(bin(t[x1 * 2 + x2], u), pu[u]);
            }
        }
    }
    for u in 0..2 {
        let (mut p1, mut p2) = ([0.0; 2], [0.0; 2]);
        for x1 in 0..2 {
            for x2 in 0..2 {
                let m = p[x1][x2] * bin(t[x1 * 2 + x2], u);
                p1[x1] += m;
                p2[x2] += m;
            }
        }
        total += layer_cost(p1, [t[4 + u], t[6 + u]], w.a1, b.0);
        total += layer_cost(p2, [t[8 + u], t[10 + u]], w.a2, b.1);
    }
    total
}

/// Private-layer cost at its optimum for the mass split `pxu`. The cost is
/// convex in the test channel, so a grid start plus pattern search is exact.
fn layer_min(pxu: [f64; 2], a: f64, b: f64) -> f64 {
    const G: usize = 10;
    let mut best = ([0.5, 0.5], f64::INFINITY);
    for i in 0..=G {
        for j in 0..=G {
            let r = [i as f64 / G as f64, j as f64 / G as f64];
            let c = layer_cost(pxu, r, a, b);
            if c < best.1 {
                best = (r, c);
            }
        }
    }
    compass(|r| layer_cost(pxu, *r, a, b), best.0, 1.0 / G as f64)
}

/// [`binary_lagrangian`] with the private layers minimized out, as a
/// function of P(U = 0 | x1, x2) alone.
pub fn binary_profile(p: &[[f64; 2]; 2], t: &[f64; 4], w: &Weights, b: (f64, f64)) -> f64 {
    let mut pu = [0.0; 2];
    for x1 in 0..2 {
        for x2 in 0..2 {
            for u in 0..2 {
                pu[u] += p[x1][x2] * bin(t[x1 * 2 + x2], u);
            }
        }
    }
    let mut total = 0.0;
    for x1 in 0..2 {
        for x2 in 0..2 {
            for u in 0..2 {
                total += w.a0 * p[x1][x2] * xlogy(bin(t[x1 * 2 + x2], u), pu[u]);
            }
        }
    }
    for u in 0..2 {
        let (mut p1, mut p2) = ([0.0; 2], [0.0; 2]);
        for x1 in 0..2 {
            for x2 in 0..2 {
                let m = p[x1][x2] * bin(t[x1 * 2 + x2], u);
                p1[x1] += m;
                p2[x2] += m;
            }
        }
        total += layer_min(p1, w.a1, b.0) + layer_min(p2, w.a2, b.1);
    }
    total
}

/// Minimum of [`binary_lagrangian`]: exhaustive grid over P(U|X) with the
/// private layers minimized exactly, then pattern-search refinement of the
/// best grid points.
pub fn binary_lagrangian_oracle(p: &[[f64; 2]; 2], w: &Weights, b: (f64, f64)) -> f64 {
    const G: usize = 8;
    let mut seeds: Vec<(f64, [f64; 4])> = Vec::new();
    for code in 0..(G + 1).pow(4) {
        let mut t = [0.0; 4];
        let mut c = code;
        for slot in t.iter_mut() {
            *slot = (c % (G + 1)) as f64 / G as f64;
            c /= G + 1;
        }
        seeds.push((binary_profile(p, &t, w, b), t));
    }
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
    seeds
        .iter()
        .take(12)
        .map(|(_, t)| compass(|t| binary_profile(p, t, w, b), *t, 1.0 / G as f64))
        .fold(f64::INFINITY, f64::min)
}

/// Coordinate pattern search on the unit cube.
pub fn compass<const N: usize>(f: impl Fn(&[f64; N]) -> f64, start: [f64; N], step: f64) -> f64 {
    let mut x = start;
    let mut fx = f(&x);
    let mut h = step;
    while h > 1e-9 {
        let mut improved = false;
        for i in 0..N {
            for dir in [1.0, -1.0] {
                let mut y = x;
                y[i] = (y[i] + dir * h).clamp(0.0, 1.0);
                let fy = f(&y);
                if fy < fx - 1e-15 {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    fx
}

/// Weighted Gaussian rate for a conditional covariance K = Cov(X | U):
/// a0/2 ln(det C / det K) + a_i/2 ln+(K_ii / D_i).
pub fn gaussian_rate_for_k(k: (f64, f64, f64), rho: f64, w: &Weights, t: (f64, f64)) -> f64 {
    let det = k.0 * k.2 - k.1 * k.1;
    let lp = |x: f64| x.ln().max(0.0);
    0.5 * w.a0 * ((1.0 - rho * rho) / det).ln() + 0.5 * w.a1 * lp(k.0 / t.0) + 0.5 * w.a2 * lp(k.2 / t.1)
}

/// Minimum of [`gaussian_rate_for_k`] over every K with 0 < K <= C.
///
/// For fixed diagonal the determinant is largest at the smallest |K12|
/// allowed by C - K >= 0, which is [rho - sqrt((1-K11)(1-K22))]^+. That
/// leaves a search over (K11, K22): a grid followed by compass refinement.
/// Independent of the region logic.
pub fn gaussian_oracle(rho: f64, w: &Weights, t: (f64, f64)) -> f64 {
    let eval = |v: &[f64; 2]| -> f64 {
        let (k11, k22) = (v[0], v[1]);
        let k12 = (rho - ((1.0 - k11) * (1.0 - k22)).sqrt()).max(0.0);
        if !(k11 * k22 - k12 * k12 > 1e-15) {
            return f64::INFINITY;
        }
        gaussian_rate_for_k((k11, k12, k22), rho, w, t)
    };
    const G: usize = 200;
    let mut starts: Vec<(f64, [f64; 2])> = Vec::new();
    for i in 1..=G {
        for j in 1..=G {
            let v = [i as f64 / G as f64, j as f64 / G as f64];
            starts.push((eval(&v), v));
        }
    }
    for v in [[t.0.min(1.0), t.1.min(1.0)], [t.0.min(1.0), 1.0], [1.0, t.1.min(1.0)]] {
        starts.push((eval(&v), v));
    }
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    starts.iter().take(8).map(|(_, v)| compass(eval, *v, 1.0 / G as f64)).fold(f64::INFINITY, f64::min)
}
