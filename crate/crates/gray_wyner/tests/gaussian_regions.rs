mod common;

use gray_wyner::gaussian::*;
use gray_wyner::model::Weights;

const WEIGHTS: [(f64, f64, f64); 6] = [(1.0, 1.0, 1.0), (1.0, 0.9, 0.8), (1.0, 0.6, 0.8), (1.0, 2.0, 2.0), (1.0, 0.5, 2.0), (1.0, 2.0, 0.5)];
const RHOS: [f64; 3] = [0.3, 0.5, 0.9];

fn w(a: (f64, f64, f64)) -> Weights {
    Weights::new(a.0, a.1, a.2).unwrap()
}

fn spec(rho: f64) -> GaussianSpec {
    GaussianSpec::new(rho).unwrap()
}

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

fn each_point(n: usize, mut f: impl FnMut(&Weights, &GaussianSpec, (f64, f64))) {
    let g = grid(n);
    for a in WEIGHTS {
        for rho in RHOS {
            for &d1 in &g {
                for &d2 in &g {
                    f(&w(a), &spec(rho), (d1, d2));
                }
            }
        }
    }
}

fn has_certificate(r: Region) -> bool {
    matches!(
        r,
        Region::DD1 | Region::DD2 | Region::DD3 | Region::DD4Neq | Region::DD4Eq | Region::SuccRef12 | Region::SuccRef21
    )
}

#[test]
fn closed_form_special_cases() {
    let s = spec(0.5);
    let (_, v, _) = special_case_rd(&w((0.0, 1.0, 1.0)), (0.2, 0.7), &s).unwrap().unwrap();
    assert_eq!(v, 0.0);
    let (c, v, _) = special_case_rd(&w((1.0, 0.3, 0.4)), (0.25, 0.5), &s).unwrap().unwrap();
    assert_eq!(c, SpecialCase::Separate);
    assert!((v - (0.15 * 4f64.ln() + 0.2 * 2f64.ln())).abs() <= 1e-12);
    let (_, v, _) = special_case_rd(&w((1.0, 0.9, 0.9)), (1.2, 0.5), &s).unwrap().unwrap();
    assert!((v - 0.5 * 2f64.ln()).abs() <= 1e-12);
    assert!(special_case_rd(&w((1.0, 0.9, 0.9)), (0.5, 0.5), &s).unwrap().is_none());
}

#[test]
fn equal_weights_at_a_symmetric_target() {
    let s = solve_gaussian_rd(&w((1.0, 1.0, 1.0)), (0.3, 0.3), &spec(0.5)).unwrap();
    assert_eq!(s.region, Region::DD4Eq);
    let (m1, m2, sig) = s.params.unwrap();
    assert!((m1 - 0.5f64.sqrt()).abs() <= 1e-12 && (m2 - 0.5f64.sqrt()).abs() <= 1e-12 && sig == 1.0);
    assert!((s.rd_value - (0.5 * 3f64.ln() + (5.0f64 / 3.0).ln())).abs() <= 1e-12);
    assert!((s.rd_value - 0.5 * (25.0f64 / 3.0).ln()).abs() <= 1e-12);
    assert!((s.rate_triple.r0 - 0.5 * 3f64.ln()).abs() <= 1e-12);
    assert!((s.rate_triple.r1 - 0.5 * (5.0f64 / 3.0).ln()).abs() <= 1e-12);
    assert!((s.rate_triple.r2 - s.rate_triple.r1).abs() <= 1e-15);
    let (f1, f2) = f_alpha(m1, m2, sig, 0.5, &w((1.0, 1.0, 1.0)));
    assert!(f1.abs() <= 1e-12 && f2.abs() <= 1e-12);
}

#[test]
fn lopsided_target_uses_the_first_corner() {
    let s = solve_gaussian_rd(&w((1.0, 1.0, 1.0)), (0.9, 0.5), &spec(0.5)).unwrap();
    assert!(matches!(s.region, Region::DD1 | Region::Inactive1), "{}", s.region);
    assert!((s.params.unwrap().2 - 0.1).abs() <= 1e-12 || s.region == Region::Inactive1);
}

#[test]
fn expensive_private_links_give_the_joint_rate() {
    let s = solve_gaussian_rd(&w((1.0, 2.0, 2.0)), (0.4, 0.4), &spec(0.5)).unwrap();
    assert_eq!(s.region, Region::Xiao);
    assert!((s.rd_value - 0.5 * (0.75f64 / 0.16).ln()).abs() <= 1e-12);
    let (m1, m2, _) = s.params.unwrap();
    assert!((m1 - 0.6f64.sqrt()).abs() <= 1e-15 && (m2 - 0.6f64.sqrt()).abs() <= 1e-15);
}

#[test]
fn an_unneeded_first_source_leaves_only_the_second() {
    let s = solve_gaussian_rd(&w((1.0, 0.9, 0.8)), (1.5, 0.4), &spec(0.5)).unwrap();
    assert!((s.rd_value - 0.5 * (1.0f64 / 0.4).ln()).abs() <= 1e-12);
}

#[test]
fn wyner_common_information_examples() {
    let (v, c) = wyner_ci((0.3, 0.3), &spec(0.5)).unwrap();
    assert_eq!(c, WynerCase::Case4_1);
    assert!((v - 0.5 * 3f64.ln()).abs() <= 1e-12);
    let (v, c) = wyner_ci((0.9, 0.5), &spec(0.5)).unwrap();
    assert_eq!(c, WynerCase::Case1);
    assert!((v - 0.5 * 2f64.ln()).abs() <= 1e-12);
    let (v, c) = wyner_ci((0.5, 0.5), &spec(0.9)).unwrap();
    assert_eq!(c, WynerCase::Case3);
    assert!((v - 0.5 * (0.19f64 / 0.09).ln()).abs() <= 1e-12);
}

#[test]
fn wyner_cases_swap_with_the_targets() {
    let s = spec(0.5);
    for &(d1, d2) in &[(0.9, 0.5), (0.2, 0.7), (0.6, 0.65), (0.3, 0.3)] {
        let (a, _) = wyner_ci((d1, d2), &s).unwrap();
        let (b, _) = wyner_ci((d2, d1), &s).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn every_grid_point_gets_one_admissible_region() {
    each_point(100, |w, s, t| {
        let sol = solve_gaussian_rd(w, t, s).unwrap_or_else(|e| panic!("{:?} {:?}: {}", w, t, e));
        let rt = sol.rate_triple;
        assert!((rt.weighted(w) - sol.rd_value).abs() <= 1e-10);
        if let Some((m1, m2, sig)) = sol.params {
            let rho = s.rho();
            if has_certificate(sol.region) {
                assert!(rho >= m1 * m2 * sig - 1e-12, "{} {:?} {:?}", sol.region, w, t);
                let r = Residuals::new(m1, m2, sig, rho, w, t);
                assert!(r.admissible(1e-9), "{} {:?} {:?}: {}", sol.region, w, t, r);
                assert!((parametric_rd(m1, m2, sig, t, s, w) - sol.rd_value).abs() <= 1e-10);
            }
        }
    });
}

#[test]
fn certificates_hold_wherever_both_loadings_are_interior() {
    let mut checked = 0;
    each_point(100, |w, s, t| {
        let sol = solve_gaussian_rd(w, t, s).unwrap();
        if !has_certificate(sol.region) {
            return;
        }
        let c = sol.certificate.unwrap_or_else(|| panic!("{} {:?} {:?} has no certificate", sol.region, w, t));
        checked += 1;
        let ctx = format!("{} {:?} {:?}", sol.region, w, t);
        // At a bracket-end root one loading is rho times the other, which
        // zeroes that layer's omega and multiplier: its constraint is slack.
        let omega_floor = if sol.boundary_root { -1e-12 } else { 0.0 };
        assert!(c.det_h > 0.0 && c.omega1 > omega_floor && c.omega2 > omega_floor, "{} {:?}", ctx, c);
        assert!(c.gamma1 >= -1e-9 && c.gamma2 >= -1e-9 && c.beta1 >= -1e-9 && c.beta2 >= -1e-9, "{} {:?}", ctx, c);
        let (cs1, cs2) = c.complementary_slackness(w);
        assert!(cs1.abs() <= 1e-8 && cs2.abs() <= 1e-8, "{} {} {}", ctx, cs1, cs2);
        let (r1, r2) = c.reconstructed_distortions(w);
        assert!((r1 - t.0).abs() <= 1e-8 && (r2 - t.1).abs() <= 1e-8, "{} {} {}", ctx, r1, r2);
        assert!((c.rd_identity(w, s) - sol.rd_value).abs() <= 1e-9, "{}", ctx);
    });
    assert!(checked > 50_000, "{}", checked);
}

#[test]
fn corner_certificates_have_the_expected_structure() {
    let s = spec(0.5);
    let wt = w((1.0, 0.9, 0.8));
    let mut corners = 0;
    for &d1 in &grid(50) {
        for &d2 in &grid(50) {
            let sol = solve_gaussian_rd(&wt, (d1, d2), &s).unwrap();
            if sol.region != Region::DD3 {
                continue;
            }
            let c = sol.certificate.unwrap();
            assert!(c.sigma_v1sq.abs() <= 1e-12 && c.sigma_v2sq.abs() <= 1e-12, "{:?}", c);
            assert!(sol.rate_triple.r1.abs() <= 1e-15 && sol.rate_triple.r2.abs() <= 1e-15);
            corners += 1;
        }
    }
    assert!(corners > 0);

    let mut seen = false;
    for &d1 in &grid(100) {
        let sol = solve_gaussian_rd(&wt, (d1, 0.2), &s).unwrap();
        if sol.region == Region::DD1 {
            let c = sol.certificate.unwrap();
            assert!(c.gamma2.abs() <= 1e-9);
            assert!((c.beta1 / wt.a1 - c.omega1).abs() <= 1e-9);
            seen = true;
        }
    }
    assert!(seen);
}

fn cubic(unknown: Unknown, m: f64, fixed: f64, s: f64, rho: f64, w: &Weights) -> f64 {
    match unknown {
        Unknown::M1 => f_alpha(m, fixed, s, rho, w).0,
        Unknown::M2 => f_alpha(fixed, m, s, rho, w).1,
    }
}

fn sign_changes(unknown: Unknown, fixed: f64, s: f64, rho: f64, w: &Weights, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let x = |i: usize| lo + (hi - lo) * i as f64 / n as f64;
    let mut prev = cubic(unknown, x(1), fixed, s, rho, w);
    for i in 2..n {
        let v = cubic(unknown, x(i), fixed, s, rho, w);
        if v != 0.0 && prev != 0.0 && v.signum() != prev.signum() {
            out.push((x(i - 1), x(i)));
        }
        if v != 0.0 {
            prev = v;
        }
    }
    out
}

#[test]
fn root_matches_a_dense_scan() {
    let wt = w((1.0, 0.8, 0.6));
    let (rho, s) = (0.5, 1.0 - 0.4);
    let root = find_root_m(Unknown::M2, 1.0, s, rho, &wt).unwrap();
    let (lo, hi) = (rho, (1.0 / rho).min(rho / s));
    let cells = sign_changes(Unknown::M2, 1.0, s, rho, &wt, lo, hi, 1_000_000);
    assert_eq!(cells.len(), 1);
    // Scan the cell again to pin the crossing below 1e-8.
    let fine = sign_changes(Unknown::M2, 1.0, s, rho, &wt, cells[0].0, cells[0].1, 1_000_000);
    assert_eq!(fine.len(), 1);
    assert!(root.m >= fine[0].0 - 1e-8 && root.m <= fine[0].1 + 1e-8, "{} not in {:?}", root.m, fine[0]);
    assert!(cubic(Unknown::M2, root.m, 1.0, s, rho, &wt).abs() <= 1e-10);
}

#[test]
fn roots_used_by_the_classifier_are_unique_and_accurate() {
    let mut checked = 0;
    for a in WEIGHTS {
        let wt = w(a);
        for rho in RHOS {
            for &d in &grid(20) {
                for unknown in [Unknown::M1, Unknown::M2] {
                    let s = 1.0 - d;
                    let Ok(root) = find_root_m(unknown, 1.0, s, rho, &wt) else { continue };
                    if root.boundary {
                        continue;
                    }
                    checked += 1;
                    assert!(cubic(unknown, root.m, 1.0, s, rho, &wt).abs() <= 1e-10);
                    let (lo, hi) = (rho, (1.0 / rho).min(rho / s));
                    let cells = sign_changes(unknown, 1.0, s, rho, &wt, lo, hi, 100_000);
                    assert!(cells.len() <= 1, "{:?} {} {}: {:?}", a, rho, d, cells);
                }
            }
        }
    }
    assert!(checked > 100, "{}", checked);
}

#[test]
fn degenerate_weight_puts_the_root_at_the_bracket_end() {
    let r = find_root_m(Unknown::M1, 1.0, 0.6, 0.5, &w((1.0, 1.0, 0.7))).unwrap();
    assert!(r.boundary);
    assert_eq!(r.m, 2.0f64.min(0.5 / 0.6));
}

#[test]
fn exchanging_the_layers_exchanges_the_solution() {
    each_point(25, |wt, s, t| {
        let a = solve_gaussian_rd(wt, t, s).unwrap();
        let b = solve_gaussian_rd(&wt.swapped(), (t.1, t.0), s).unwrap();
        assert!((a.rd_value - b.rd_value).abs() <= 1e-10, "{:?} {:?}", wt, t);
        assert!((a.rate_triple.r1 - b.rate_triple.r2).abs() <= 1e-9 && (a.rate_triple.r2 - b.rate_triple.r1).abs() <= 1e-9);
        if let (Some(p), Some(q)) = (a.params, b.params) {
            if has_certificate(a.region) {
                assert!((p.0 - q.1).abs() <= 1e-9 && (p.1 - q.0).abs() <= 1e-9, "{} {:?} {:?}", a.region, wt, t);
            }
        }
    });
}

#[test]
fn value_is_continuous_across_region_boundaries() {
    let g = grid(100);
    let mut crossings = 0;
    for a in WEIGHTS {
        let wt = w(a);
        for rho in RHOS {
            let s = spec(rho);
            let region = |t| solve_gaussian_rd(&wt, t, &s).unwrap().region;
            let value = |t| solve_gaussian_rd(&wt, t, &s).unwrap().rd_value;
            for &fixed in g.iter().step_by(7) {
                for axis in 0..2 {
                    let pt = |v: f64| if axis == 0 { (v, fixed) } else { (fixed, v) };
                    for k in 0..g.len() - 1 {
                        let (mut lo, mut hi) = (g[k], g[k + 1]);
                        let r0 = region(pt(lo));
                        if r0 == region(pt(hi)) {
                            continue;
                        }
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            if region(pt(mid)) == r0 {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        let edge = 0.5 * (lo + hi);
                        let jump = (value(pt(edge - 1e-6)) - value(pt(edge + 1e-6))).abs();
                        assert!(jump <= 1e-4, "{:?} rho {} at {:?}: jump {}", a, rho, pt(edge), jump);
                        crossings += 1;
                    }
                }
            }
        }
    }
    assert!(crossings > 50, "{}", crossings);
}

#[test]
fn closed_form_matches_a_direct_covariance_search() {
    for a in WEIGHTS {
        let wt = w(a);
        for rho in RHOS {
            for &t in &[(0.15, 0.2), (0.3, 0.3), (0.5, 0.2), (0.8, 0.4), (0.9, 0.5), (0.6, 0.7)] {
                let sol = solve_gaussian_rd(&wt, t, &spec(rho)).unwrap();
                let oracle = common::gaussian_oracle(rho, &wt, t);
                assert!((sol.rd_value - oracle).abs() <= 1e-6, "{} {:?} rho {} {:?}: {} vs {}", sol.region, a, rho, t, sol.rd_value, oracle);
            }
        }
    }
}

#[test]
fn common_rate_equals_the_common_information_in_the_intermediate_case() {
    let wt = w((1.0, 1.0, 1.0));
    let mut checked = 0;
    for rho in [0.3, 0.5, 0.9] {
        let s = spec(rho);
        for &d1 in &grid(40) {
            for &d2 in &grid(40) {
                let (cw, case) = wyner_ci((d1, d2), &s).unwrap();
                if case != WynerCase::Case3 {
                    continue;
                }
                let sol = solve_gaussian_rd(&wt, (d1, d2), &s).unwrap();
                assert!((sol.rate_triple.r0 - cw).abs() <= 1e-9, "{} {:?}: {} vs {}", sol.region, (d1, d2), sol.rate_triple.r0, cw);
                checked += 1;
            }
        }
    }
    assert!(checked > 20, "{}", checked);
}

#[test]
fn out_of_range_correlation_is_rejected() {
    assert!(GaussianSpec::new(0.0).is_err() && GaussianSpec::new(1.0).is_err() && GaussianSpec::new(-0.2).is_err());
}
