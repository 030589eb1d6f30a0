//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use lowrank_sdp::baselines::{fw_init, rank_r_truncate, FwConfig};
use lowrank_sdp::diagnostics::{
    check_factor_bound, check_overspec_bound, estimate_growth, regularity_ratios, Directions, GrowthConfig,
    RegularityConfig,
};
use lowrank_sdp::generate::{gen_matrix_sensing, gen_maxcut_planted, gen_random_quadratics};
use lowrank_sdp::linalg::{padded_procrustes_distance, sym_from_factor};
use lowrank_sdp::pogs::{pogs_solve, project_graph, prox_h_linear, prox_norm_offset, PogsParams, ProjectionMode, Subproblem};
use lowrank_sdp::problem::{min_norm_subgrad, objective_grad, objective_value, phi_f_grad, phi_value_lambda, SubgradBranch};
use lowrank_sdp::prox_linear::{check_descent, descent_lipschitz, random_init, DESCENT_BETA};
use lowrank_sdp::{prox_linear_solve, Factor, Instance, PenaltyParams, SolveConfig, SymMat, TraceRecord};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

fn penalty(inst: &Instance) -> f64 {
    2.0 * inst.certificate.as_ref().unwrap().y_star.norm() + 1.0
}

/// Gaps at or below this are rounding noise in `phi` and carry no rate information.
fn gap_floor(phi_star: f64) -> f64 {
    1e-12 * (1.0 + phi_star.abs())
}

/// Least-squares slope of `log gap` against the iteration index over the last
/// half of the trace, ignoring points at the floor. Falls back to the last 20
/// points above the floor when the run hit the floor before the halfway mark.
fn tail_log_slope(gaps: &[f64], floor: f64) -> Option<f64> {
    let half = gaps.len() / 2;
    let mut pts: Vec<(f64, f64)> = (half..gaps.len())
        .filter(|&k| gaps[k] > floor)
        .map(|k| (k as f64, gaps[k].ln()))
        .collect();
    if pts.len() < 20 {
        let above: Vec<usize> = (0..gaps.len()).filter(|&k| gaps[k] > floor).collect();
        pts = above[above.len().saturating_sub(20)..]
            .iter()
            .map(|&k| (k as f64, gaps[k].ln()))
            .collect();
    }
    if pts.len() < 5 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn gaps(trace: &[TraceRecord], phi_star: f64) -> Vec<f64> {
    trace.iter().map(|r| r.phi - phi_star).collect()
}

fn maxcut_config(lambda: f64, iters: usize) -> SolveConfig {
    let mut cfg = SolveConfig::new(lambda);
    cfg.max_outer = iters;
    cfg.grad_map_tol = 1e-12;
    cfg
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r1_stuck = 0;
    let mut worst_slope = f64::NEG_INFINITY;
    let mut worst_gap = 0.0_f64;
    for seed in SEEDS {
        let inst = gen_maxcut_planted(50, 2, seed).unwrap();
        let lambda = penalty(&inst);
        let phi_star = inst.optimal_value().unwrap();
        for r in 1..=3 {
            let cfg = maxcut_config(lambda, 300);
            let out = prox_linear_solve(&inst, &random_init(50, r, seed + 1000).unwrap(), &cfg).unwrap();
            let last = out.trace.last().unwrap();
            let gap = last.phi - phi_star;
            if r == 1 {
                if gap >= 1e-2 {
                    r1_stuck += 1;
                }
                continue;
            }
            ensure!(last.feas <= 1e-8, "seed {seed} r={r}: feas {:.3e}", last.feas);
            ensure!(gap <= 1e-6, "seed {seed} r={r}: gap {gap:.3e}");
            let slope = tail_log_slope(&gaps(&out.trace, phi_star), gap_floor(phi_star))
                .ok_or(format!("seed {seed} r={r}: too few points above the floor"))?;
            ensure!(slope <= 0.999f64.ln(), "seed {seed} r={r}: slope {slope:.3e}");
            worst_slope = worst_slope.max(slope);
            worst_gap = worst_gap.max(gap);
        }
    }
    ensure!(r1_stuck >= 8, "rank 1 reached the optimum on {} seeds", 10 - r1_stuck);
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs <= 300.0, "took {secs:.1}s");
    Ok(format!(
        "worst r>=2 gap {worst_gap:.2e}, worst slope {worst_slope:.3}, r=1 stuck {r1_stuck}/10, {secs:.1}s"
    ))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let lambda = 500.0;
    let mut slow = 0;
    let mut worst_feas = 0.0_f64;
    let mut worst_slope = f64::NEG_INFINITY;
    let mut min_ratios = Vec::new();
    for seed in SEEDS {
        let inst = gen_random_quadratics(50, 3, 25, 1.0, seed).unwrap();
        let phi_star = inst.optimal_value().unwrap();
        for r in [3, 4] {
            let cfg = maxcut_config(lambda, 500);
            let out = prox_linear_solve(&inst, &random_init(50, r, seed + 1000).unwrap(), &cfg).unwrap();
            let g = gaps(&out.trace, phi_star);
            if r == 3 {
                let feas = out.trace.last().unwrap().feas;
                ensure!(feas <= 1e-10, "seed {seed} r=3: feas {feas:.3e}");
                let slope = tail_log_slope(&g, gap_floor(phi_star))
                    .ok_or(format!("seed {seed} r=3: too few points above the floor"))?;
                ensure!(slope <= 0.999f64.ln(), "seed {seed} r=3: slope {slope:.3e}");
                worst_feas = worst_feas.max(feas);
                worst_slope = worst_slope.max(slope);
            } else {
                let tail = &g[g.len().saturating_sub(101)..];
                let min_ratio = tail.windows(2).map(|w| w[1] / w[0]).fold(f64::INFINITY, f64::min);
                min_ratios.push(min_ratio);
                if tail.len() == 101 && tail.iter().all(|&v| v > 0.0) && min_ratio >= 0.99 {
                    slow += 1;
                }
            }
        }
    }
    ensure!(slow >= 8, "r=4 sublinear on {slow}/10 seeds, min ratios {min_ratios:.4?}");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs <= 900.0, "took {secs:.1}s");
    Ok(format!(
        "r=3 worst feas {worst_feas:.2e}, worst slope {worst_slope:.3}; r=4 sublinear {slow}/10; {secs:.1}s"
    ))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut orders = Vec::new();
    for seed in 1..=3u64 {
        let mc = gen_maxcut_planted(50, 2, seed).unwrap();
        let mc_cert = mc.certificate.clone().unwrap();
        let q = gen_random_quadratics(50, 3, 25, 1.0, seed).unwrap();
        let q_cert = q.certificate.clone().unwrap();
        // a vanishing dual slack leaves only the quartic term along new columns
        let flat = gen_random_quadratics(50, 3, 25, 1e-8, seed).unwrap();
        let flat_cert = flat.certificate.clone().unwrap();
        let mut new_cols = GrowthConfig::new(4, 200, seed);
        new_cols.directions = Directions::NewColumns;
        let cases = [
            ("linear r*", &mc, &mc_cert, GrowthConfig::new(2, 200, seed), (1.8, 2.2)),
            ("linear r*+1", &mc, &mc_cert, GrowthConfig::new(3, 200, seed), (1.8, 2.2)),
            ("quad r*", &q, &q_cert, GrowthConfig::new(3, 200, seed), (1.8, 2.2)),
            ("quad r*+1 new cols", &flat, &flat_cert, new_cols, (3.5, 4.5)),
        ];
        for (name, inst, cert, cfg, (lo, hi)) in cases {
            let rep = estimate_growth(inst, cert, &cfg).map_err(|e| format!("{name} seed {seed}: {e}"))?;
            let p = rep.fitted_order;
            ensure!((lo..=hi).contains(&p), "{name} seed {seed}: order {p:.3}");
            orders.push(format!("{p:.2}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs <= 120.0, "took {secs:.1}s");
    Ok(format!("orders [{}], {secs:.1}s", orders.join(" ")))
}

fn criterion_4() -> Outcome {
    let mut g = rng(4);
    let mut min_margin = f64::INFINITY;
    for trial in 0..1000 {
        let n = g.random_range(2..=20);
        let r = g.random_range(1..=n.min(5));
        let star = gauss_factor(&mut g, n, r);
        let scale = 10f64.powf(g.random_range(-3.0..1.0));
        let near = Factor::new(star.as_matrix() + gauss_mat(&mut g, n, r) * scale).unwrap();
        let b = check_factor_bound(&near, &star).unwrap();
        ensure!(b.holds, "factor bound trial {trial}: {} < {}", b.lhs, b.rhs);
        min_margin = min_margin.min(b.lhs - b.rhs);

        let width = g.random_range(1..=n.min(5));
        let true_rank = g.random_range(1..=width);
        let u_star = gauss_factor(&mut g, n, true_rank).pad_columns(width);
        let u = Factor::new(u_star.as_matrix() + gauss_mat(&mut g, n, width) * scale).unwrap();
        let b = check_overspec_bound(&u, &u_star).unwrap();
        ensure!(b.holds, "overspec bound trial {trial}: {} < {}", b.lhs, b.rhs);
    }
    Ok(format!("2000 pairs, no violations (min factor margin {min_margin:.2e})"))
}

/// Prox of `w ||. + a||` through the Moreau decomposition: the conjugate of
/// `w ||.||` is the indicator of the radius-`w` ball, so
/// `prox(v) = v - proj_ball(v + a)`.
fn prox_norm_oracle(v: &DVector<f64>, a: &DVector<f64>, w: f64) -> DVector<f64> {
    let shifted = v + a;
    let nrm = shifted.norm();
    let proj = if nrm <= w { shifted } else { shifted * (w / nrm) };
    v - proj
}

fn criterion_5() -> Outcome {
    let mut g = rng(5);
    let mut worst_model = 0.0_f64;
    for case in 0..20 {
        let n = 3 + case % 3;
        let r = 1 + case % 2;
        let seed = case as u64;
        let inst = match case % 3 {
            0 => gen_maxcut_planted(n, 1, seed).unwrap(),
            1 => gen_random_quadratics(n, 1, n - 1, 1.0, seed).unwrap(),
            _ => gen_matrix_sensing(n, 1, 2 * n, seed).unwrap(),
        };
        let base = gauss_factor(&mut g, n, r);
        let t = g.random_range(0.2..1.0);
        let lambda = g.random_range(0.5..3.0);
        let sub = Subproblem::new(&inst, &base, t, lambda).unwrap();
        let res = pogs_solve(&sub, &PogsParams::default()).unwrap();
        let dq = dense_quadratic(|m| smooth_model(&inst, &base, t, m), n, r);
        let m = dense_graph(&inst, &base);
        let r0 = inst.constraints.residual(&sym_from_factor(&base)).unwrap();
        let oracle = dual_ascent_oracle(&dq, &m, &r0, lambda, 1_000_000);
        let want = model_value_dense(&inst, &base, t, lambda, &DMatrix::from_column_slice(n, r, oracle.as_slice()));
        let got = sub.model_value(&res.delta);
        ensure!((got - want).abs() <= 1e-6, "subproblem {case}: {got} vs oracle {want}");
        worst_model = worst_model.max((got - want).abs());
    }

    let mut worst_prox = 0.0_f64;
    for case in 0..100 {
        let k = 1 + case % 6;
        let v = gauss_vec(&mut g, k) * 2.0;
        let a = gauss_vec(&mut g, k);
        let w = g.random_range(0.0..3.0);
        let got = prox_norm_offset(&v, &a, w);
        let want = prox_norm_oracle(&v, &a, w);
        let err = (&got - &want).norm();
        ensure!(err <= 1e-8, "prox_norm_offset case {case}: error {err:.3e}");
        // optimality: v - z is a subgradient of w ||. + a|| at z
        let sub = &v - &got;
        let at = &got + &a;
        let opt = if at.norm() > 1e-12 { (&sub - &at * (w / at.norm())).norm() } else { (sub.norm() - w).max(0.0) };
        ensure!(opt <= 1e-8 * (1.0 + w), "prox_norm_offset case {case}: optimality {opt:.3e}");
        worst_prox = worst_prox.max(err);
    }

    let mut worst_lin = 0.0_f64;
    for case in 0..100 {
        let n = 3 + case % 4;
        let r = 1 + case % 3;
        let inst = gen_maxcut_planted(n, 1, case as u64).unwrap();
        let base = gauss_factor(&mut g, n, r);
        let v = gauss_factor(&mut g, n, r);
        let t = g.random_range(0.1..2.0);
        let rho = g.random_range(0.1..5.0);
        let sub = Subproblem::new(&inst, &base, t, 1.0).unwrap();
        let got = prox_h_linear(&sub, &v, rho).unwrap();
        let dq = dense_quadratic(|m| smooth_model(&inst, &base, t, m), n, r);
        let lhs = &dq.h + DMatrix::<f64>::identity(n * r, n * r) * rho;
        let want = lhs.lu().solve(&(v.vec() * rho - &dq.g)).unwrap();
        let err = (got.vec() - &want).norm();
        ensure!(err <= 1e-8 * (1.0 + want.norm()), "prox_h_linear case {case}: error {err:.3e}");
        worst_lin = worst_lin.max(err);
    }

    let mut worst_proj = 0.0_f64;
    for case in 0..100 {
        let n = 3 + case % 4;
        let r = 1 + case % 3;
        let inst = match case % 3 {
            0 => gen_maxcut_planted(n, 1, case as u64).unwrap(),
            1 => gen_random_quadratics(n, 1, n - 1, 1.0, case as u64).unwrap(),
            _ => gen_matrix_sensing(n, 1, 2 * n, case as u64).unwrap(),
        };
        let base = gauss_factor(&mut g, n, r);
        let sub = Subproblem::new(&inst, &base, 0.5, 1.0).unwrap();
        let m = dense_graph(&inst, &base);
        let z = gauss_vec(&mut g, m.nrows());
        let d = gauss_factor(&mut g, n, r);
        let lhs = DMatrix::<f64>::identity(n * r, n * r) + m.transpose() * &m;
        let dn = lhs.lu().solve(&(d.vec() + m.transpose() * &z)).unwrap();
        let zn = &m * &dn;
        let mode = if case % 2 == 0 { ProjectionMode::Direct } else { ProjectionMode::Cg };
        let (gz, gd) = project_graph(&z, &d, &sub, mode, 1e-14, 1000).unwrap();
        let err = (&gz - &zn).norm() + (gd.vec() - &dn).norm();
        ensure!(err <= 1e-8 * (1.0 + dn.norm() + zn.norm()), "project_graph case {case}: error {err:.3e}");
        worst_proj = worst_proj.max(err);
    }
    Ok(format!(
        "model {worst_model:.1e}, prox_norm_offset {worst_prox:.1e}, prox_h_linear {worst_lin:.1e}, project_graph {worst_proj:.1e}"
    ))
}

/// Relative error of an analytic gradient against central differences along
/// every direction of a basis.
fn fd_rel_err(f: impl Fn(&DMatrix<f64>) -> f64, x: &DMatrix<f64>, grad: &DMatrix<f64>, basis: &[DMatrix<f64>]) -> f64 {
    let h = 1e-5 * (1.0 + x.norm());
    let fd = DVector::from_iterator(basis.len(), basis.iter().map(|e| central_diff(&f, x, e, h)));
    let an = DVector::from_iterator(basis.len(), basis.iter().map(|e| grad.dot(e)));
    (&fd - &an).norm() / an.norm().max(1e-300)
}

fn unit_basis(n: usize, m: usize) -> Vec<DMatrix<f64>> {
    (0..n * m)
        .map(|j| {
            let mut e = DMatrix::zeros(n, m);
            e[(j % n, j / n)] = 1.0;
            e
        })
        .collect()
}

fn sym_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            out.push(e);
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let mut g = rng(6);
    let (n, r) = (6, 2);
    let insts = [
        gen_maxcut_planted(n, 2, 6).unwrap(),
        gen_random_quadratics(n, 2, 4, 1.0, 6).unwrap(),
        gen_matrix_sensing(n, 2, 20, 6).unwrap(),
    ];
    let lambda = 2.5;
    let params = PenaltyParams::new(lambda).unwrap();
    let mut worst = 0.0_f64;
    for inst in &insts {
        let kind = inst.objective.kind_name();
        for point in 0..100 {
            let x = gauss_sym(&mut g, n);
            let grad = objective_grad(&inst.objective, &x);
            let f = |m: &DMatrix<f64>| objective_value(&inst.objective, &SymMat::from_square(m.clone()).unwrap());
            let e1 = fd_rel_err(f, x.as_matrix(), grad.as_matrix(), &sym_basis(n));

            let rf = gauss_factor(&mut g, n, r);
            let fac = |m: &DMatrix<f64>| Factor::new(m.clone()).unwrap();
            let phi_f = |m: &DMatrix<f64>| objective_value(&inst.objective, &sym_from_factor(&fac(m)));
            let e2 = fd_rel_err(phi_f, rf.as_matrix(), phi_f_grad(inst, &rf).unwrap().as_matrix(), &unit_basis(n, r));

            let s = min_norm_subgrad(inst, &rf, &params).unwrap();
            ensure!(s.branch == SubgradBranch::Infeasible, "{kind} point {point}: feasible random point");
            let phi = |m: &DMatrix<f64>| phi_value_lambda(inst, &fac(m), lambda).unwrap().phi;
            let e3 = fd_rel_err(phi, rf.as_matrix(), s.g.as_matrix(), &unit_basis(n, r));

            let e = e1.max(e2).max(e3);
            ensure!(e <= 1e-5, "{kind} point {point}: relative errors {e1:.2e} {e2:.2e} {e3:.2e}");
            worst = worst.max(e);
        }
    }
    Ok(format!("300 points, worst relative error {worst:.2e}"))
}

fn criterion_7() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut steps = 0;
    for seed in SEEDS {
        let inst = gen_maxcut_planted(50, 2, seed).unwrap();
        let lambda = penalty(&inst);
        for r in 1..=3 {
            let r0 = random_init(50, r, seed + 1000).unwrap();
            let l = descent_lipschitz(&inst, lambda, &r0).unwrap();
            let mut cfg = maxcut_config(lambda, 300);
            cfg.t = 1.0 / (l * DESCENT_BETA);
            let out = prox_linear_solve(&inst, &r0, &cfg).unwrap();
            for w in out.trace.windows(2) {
                let margin = check_descent(&w[0], &w[1], l, DESCENT_BETA);
                ensure!(margin >= -1e-9, "seed {seed} r={r} iter {}: margin {margin:.3e}", w[1].iter);
                worst = worst.min(margin);
                steps += 1;
            }
        }
    }
    Ok(format!("{steps} steps, smallest margin {worst:.2e}"))
}

fn criterion_8() -> Outcome {
    let mut g = rng(8);
    let insts = [
        gen_maxcut_planted(30, 2, 8).unwrap(),
        gen_random_quadratics(30, 2, 15, 1.0, 8).unwrap(),
        gen_matrix_sensing(30, 2, 150, 8).unwrap(),
    ];
    let mut worst = f64::INFINITY;
    for inst in &insts {
        let cert = inst.certificate.as_ref().unwrap();
        let lambda = penalty(inst);
        let at_star = phi_value_lambda(inst, &cert.r_star, lambda).unwrap().phi;
        for probe in 0..1000 {
            let r = 1 + probe % 4;
            let scale = 10f64.powf(g.random_range(-4.0..1.0));
            let cand = if r >= cert.rank && probe % 2 == 0 {
                // nearby points on the padded solution's neighbourhood
                let pad = cert.r_star.pad_columns(r);
                Factor::new(pad.as_matrix() + gauss_mat(&mut g, inst.n, r) * scale).unwrap()
            } else {
                gauss_factor(&mut g, inst.n, r).scale(scale)
            };
            let v = phi_value_lambda(inst, &cand, lambda).unwrap().phi;
            ensure!(
                at_star <= v + 1e-10,
                "{} probe {probe}: phi(R*) {at_star} > phi(R) {v}",
                inst.objective.kind_name()
            );
            worst = worst.min(v - at_star);
        }
    }
    Ok(format!("3000 probes, smallest excess {worst:.2e}"))
}

fn criterion_9() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in 1..=5u64 {
        let inst = gen_maxcut_planted(50, 2, seed).unwrap();
        let cert = inst.certificate.clone().unwrap();
        let rep = regularity_ratios(&inst, &cert, &RegularityConfig::for_certificate(&cert, 200, seed)).unwrap();
        let ratio = rep.max_norm_convexity_ratio;
        ensure!(ratio.is_finite() && ratio <= 10.0, "seed {seed}: ratio {ratio:.3}");
        worst = worst.max(ratio);
    }
    Ok(format!("largest norm-convexity ratio {worst:.3}"))
}

fn criterion_10() -> Outcome {
    let mut worst = 0.0_f64;
    for seed in SEEDS {
        let inst = gen_maxcut_planted(50, 2, seed).unwrap();
        let cert = inst.certificate.clone().unwrap();
        let lambda = penalty(&inst);
        let fw = fw_init(&inst, &FwConfig::new(50.0, lambda)).unwrap();
        let r0 = rank_r_truncate(&fw.x, cert.rank).unwrap();
        let mut cfg = maxcut_config(lambda, 100);
        cfg.t = 4.0 / lambda;
        let out = prox_linear_solve(&inst, &r0, &cfg).unwrap();
        ensure!(out.trace.len() <= 101, "seed {seed}: {} records", out.trace.len());
        let dist = padded_procrustes_distance(&out.r, &cert.r_star).unwrap();
        ensure!(dist <= 1e-5, "seed {seed}: distance {dist:.3e}");
        worst = worst.max(dist);
    }
    Ok(format!("10/10 seeds, largest distance {worst:.2e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("maxcut linear convergence", criterion_1),
        ("random quadratics", criterion_2),
        ("growth orders", criterion_3),
        ("factor bounds", criterion_4),
        ("subproblem oracles", criterion_5),
        ("gradient checks", criterion_6),
        ("descent property", criterion_7),
        ("global optimality", criterion_8),
        ("regularity ratios", criterion_9),
        ("initializer pipeline", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.ends_with(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{id} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} ({name}): FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
