mod common;

use common::*;
use lowrank_sdp::generate::{gen_matrix_sensing, gen_maxcut_planted, gen_random_quadratics};
use lowrank_sdp::linalg::sym_from_factor;
use lowrank_sdp::problem::{
    constraint_jacobian_mr, gradient_mapping, min_norm_subgrad, objective_grad, objective_value, phi_f_grad,
    phi_value, phi_value_lambda, SubgradBranch,
};
use lowrank_sdp::{Factor, Instance, LinOpA, Objective, PenaltyParams, SymMat};
use nalgebra::{DMatrix, DVector};

fn small_linear(c: DMatrix<f64>) -> Instance {
    let n = c.nrows();
    Instance::new("small", Objective::Linear(SymMat::from_square(c).unwrap()), LinOpA::unit_diagonal(n), None).unwrap()
}

#[test]
fn objective_value_examples() {
    let eye = SymMat::identity(2);
    assert_eq!(objective_value(&Objective::Linear(eye.clone()), &eye), 2.0);
    let mut g = rng(1);
    let y = gauss_sym(&mut g, 4);
    assert_eq!(objective_value(&Objective::QuadDistance(y.clone()), &y), 0.0);
    let inst = gen_matrix_sensing(8, 2, 30, 3).unwrap();
    let x_star = inst.certificate.as_ref().unwrap().x_star();
    assert!(objective_value(&inst.objective, &x_star).abs() <= 1e-24);
}

#[test]
fn objective_grad_examples() {
    let mut g = rng(2);
    let c = gauss_sym(&mut g, 3);
    let x = gauss_sym(&mut g, 3);
    assert_eq!(objective_grad(&Objective::Linear(c.clone()), &x), c);
    let grad = objective_grad(&Objective::QuadDistance(SymMat::zeros(3)), &SymMat::identity(3));
    assert_eq!(grad, SymMat::identity(3));
}

#[test]
fn objective_grad_matches_finite_differences_for_each_kind() {
    let mut g = rng(3);
    let sensing = gen_matrix_sensing(5, 2, 12, 9).unwrap();
    let objectives = [
        Objective::Linear(gauss_sym(&mut g, 5)),
        Objective::QuadDistance(gauss_sym(&mut g, 5)),
        sensing.objective.clone(),
    ];
    for obj in &objectives {
        for _ in 0..20 {
            let x = gauss_sym(&mut g, 5);
            let dir = gauss_sym(&mut g, 5);
            let h = 1e-6 * (1.0 + x.frobenius_norm());
            let f = |m: &DMatrix<f64>| objective_value(obj, &SymMat::from_square(m.clone()).unwrap());
            let fd = central_diff(f, x.as_matrix(), dir.as_matrix(), h);
            let an = objective_grad(obj, &x).inner(&dir);
            assert!(rel_err(fd, an) <= 1e-5, "{}: {fd} vs {an}", obj.kind_name());
        }
    }
}

#[test]
fn phi_examples() {
    let inst = gen_maxcut_planted(12, 2, 4).unwrap();
    let cert = inst.certificate.clone().unwrap();
    let p = PenaltyParams::new(3.0).unwrap();
    let v = phi_value(&inst, &cert.r_star, &p).unwrap();
    assert!(v.feas <= 1e-10);
    assert!((v.phi - inst.optimal_value().unwrap()).abs() <= 1e-9);

    let mut g = rng(4);
    let r = gauss_factor(&mut g, 12, 2);
    let v0 = phi_value_lambda(&inst, &r, 0.0).unwrap();
    assert_eq!(v0.phi, v0.f_val);
    let v = phi_value(&inst, &r, &p).unwrap();
    assert!((v.phi - (v.f_val + 3.0 * v.feas)).abs() <= 1e-12 * (1.0 + v.phi.abs()));

    // n = 2 MaxCut with C = -[[0,1],[1,0]] at R = (1, 1)^T: X is all ones,
    // f = -2 and the diagonal constraint holds.
    let tiny = small_linear(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]));
    let r = Factor::from_rows(2, 1, &[1.0, 1.0]).unwrap();
    let v = phi_value(&tiny, &r, &PenaltyParams::new(10.0).unwrap()).unwrap();
    assert_eq!((v.phi, v.f_val, v.feas), (-2.0, -2.0, 0.0));
    // R = (2, 0)^T: X = diag(4, 0), f = 0, residual (3, -1).
    let r = Factor::from_rows(2, 1, &[2.0, 0.0]).unwrap();
    let v = phi_value(&tiny, &r, &PenaltyParams::new(10.0).unwrap()).unwrap();
    assert!((v.phi - 10.0 * 10f64.sqrt()).abs() <= 1e-12);
}

#[test]
fn phi_f_grad_examples_and_finite_differences() {
    let mut g = rng(5);
    let c = gauss_sym(&mut g, 6);
    let inst = small_linear(c.as_matrix().clone());
    let r = gauss_factor(&mut g, 6, 2);
    let grad = phi_f_grad(&inst, &r).unwrap();
    assert!((grad.as_matrix() - c.as_matrix() * r.as_matrix() * 2.0).norm() <= 1e-12);

    let q = gen_random_quadratics(6, 2, 4, 1.0, 5).unwrap();
    let r_on = q.certificate.as_ref().unwrap().r_star.clone();
    let y = sym_from_factor(&r_on);
    let at_target = Instance::new("y", Objective::QuadDistance(y), q.constraints.clone(), None).unwrap();
    assert!(phi_f_grad(&at_target, &r_on).unwrap().frobenius_norm() <= 1e-12);

    for inst in [&inst, &q] {
        for _ in 0..20 {
            let r = gauss_factor(&mut g, 6, 2);
            let dir = gauss_mat(&mut g, 6, 2);
            let f = |m: &DMatrix<f64>| phi_value_lambda(inst, &Factor::new(m.clone()).unwrap(), 0.0).unwrap().f_val;
            let h = 1e-6 * (1.0 + r.frobenius_norm());
            let fd = central_diff(f, r.as_matrix(), &dir, h);
            let an = phi_f_grad(inst, &r).unwrap().as_matrix().dot(&dir);
            assert!(rel_err(fd, an) <= 1e-5, "{fd} vs {an}");
        }
    }
}

#[test]
fn min_norm_subgrad_vanishes_at_planted_optimum() {
    for seed in 0..3 {
        let inst = gen_maxcut_planted(15, 2, seed).unwrap();
        let cert = inst.certificate.clone().unwrap();
        let p = PenaltyParams::new(2.0 * cert.y_star.norm() + 1.0).unwrap();
        let s = min_norm_subgrad(&inst, &cert.r_star, &p).unwrap();
        assert_eq!(s.branch, SubgradBranch::Feasible);
        assert!(s.g.frobenius_norm() <= 1e-6, "{}", s.g.frobenius_norm());
        assert!(!s.clamped);
    }
}

#[test]
fn min_norm_subgrad_infeasible_branch_is_the_gradient() {
    let mut g = rng(6);
    let inst = gen_random_quadratics(6, 2, 4, 1.0, 6).unwrap();
    let lambda = 3.0;
    let p = PenaltyParams::new(lambda).unwrap();
    for _ in 0..20 {
        let r = gauss_factor(&mut g, 6, 3).scale(2.0);
        let s = min_norm_subgrad(&inst, &r, &p).unwrap();
        assert_eq!(s.branch, SubgradBranch::Infeasible);
        let dir = gauss_mat(&mut g, 6, 3);
        let f = |m: &DMatrix<f64>| phi_value_lambda(&inst, &Factor::new(m.clone()).unwrap(), lambda).unwrap().phi;
        let fd = central_diff(f, r.as_matrix(), &dir, 1e-6 * (1.0 + r.frobenius_norm()));
        let an = s.g.as_matrix().dot(&dir);
        assert!(rel_err(fd, an) <= 1e-5, "{fd} vs {an}");
    }
}

#[test]
fn min_norm_subgrad_is_zero_with_zero_objective_at_feasible_point() {
    let inst = small_linear(DMatrix::zeros(4, 4));
    let r = Factor::from_rows(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.6, 0.8, -0.8, 0.6]).unwrap();
    let s = min_norm_subgrad(&inst, &r, &PenaltyParams::new(1.0).unwrap()).unwrap();
    assert_eq!(s.branch, SubgradBranch::Feasible);
    assert!(s.g.frobenius_norm() <= 1e-14);
}

#[test]
fn min_norm_subgrad_feasible_branch_is_minimal_over_the_ball() {
    // Oracle: the subdifferential at a feasible point is grad + M w with
    // ||w|| <= 2 lambda; compare against a dense grid-free check by sampling.
    let mut g = rng(7);
    let inst = small_linear(gauss_sym(&mut g, 4).into_matrix());
    let rows: Vec<f64> = (0..4)
        .flat_map(|_| {
            let v = gauss_vec(&mut g, 2);
            let v = &v / v.norm();
            vec![v[0], v[1]]
        })
        .collect();
    let r = Factor::from_rows(4, 2, &rows).unwrap();
    let (m, _) = constraint_jacobian_mr(&inst, &r).unwrap();
    let grad = phi_f_grad(&inst, &r).unwrap().vec();
    for lambda in [0.05, 0.3, 5.0] {
        let s = min_norm_subgrad(&inst, &r, &PenaltyParams::new(lambda).unwrap()).unwrap();
        let best = s.g.frobenius_norm();
        for _ in 0..2000 {
            let w = gauss_vec(&mut g, 4);
            let w = &w * (2.0 * lambda * rand::Rng::random::<f64>(&mut g) / w.norm());
            assert!(best <= (&grad + &m * w).norm() + 1e-9);
        }
    }
}

#[test]
fn constraint_jacobian_examples() {
    let inst = small_linear(DMatrix::zeros(3, 3));
    let s = 0.5f64.sqrt();
    let r = Factor::from_rows(3, 2, &[1.0, 0.0, s, s, 0.0, 1.0]).unwrap();
    let (m, sigma) = constraint_jacobian_mr(&inst, &r).unwrap();
    assert_eq!(m.shape(), (6, 3));
    assert!((sigma - 1.0).abs() <= 1e-12);
    for i in 0..3 {
        let mut e = DMatrix::zeros(3, 2);
        e.row_mut(i).copy_from(&r.as_matrix().row(i));
        assert!((m.column(i) - DVector::from_column_slice(e.as_slice())).norm() <= 1e-15);
    }
    let (m0, s0) = constraint_jacobian_mr(&inst, &Factor::zeros(3, 2)).unwrap();
    assert_eq!(m0.norm(), 0.0);
    assert_eq!(s0, 0.0);

    let single = Instance::new(
        "trace",
        Objective::Linear(SymMat::zeros(3)),
        LinOpA::new(vec![SymMat::identity(3)], DVector::from_element(1, 1.0)).unwrap(),
        None,
    )
    .unwrap();
    let (m1, s1) = constraint_jacobian_mr(&single, &r).unwrap();
    assert!((m1.column(0) - r.vec()).norm() <= 1e-15);
    assert!((s1 - r.frobenius_norm()).abs() <= 1e-12);
}

#[test]
fn gradient_mapping_examples() {
    let mut g = rng(8);
    let r = gauss_factor(&mut g, 4, 2);
    let d = gauss_factor(&mut g, 4, 2);
    assert_eq!(gradient_mapping(&r, &r, 0.3).unwrap().frobenius_norm(), 0.0);
    let g1 = gradient_mapping(&r, &r.add(&d), 1.0).unwrap();
    assert!((g1.as_matrix() - d.as_matrix()).norm() <= 1e-14);
    let g2 = gradient_mapping(&r, &r.add(&d), 0.5).unwrap();
    assert!((g2.as_matrix() - d.as_matrix() * 2.0).norm() <= 1e-14);
    assert!(gradient_mapping(&r, &r, 0.0).is_err());
}

#[test]
fn planted_optimum_beats_random_probes() {
    let mut g = rng(9);
    let inst = gen_maxcut_planted(10, 2, 9).unwrap();
    let cert = inst.certificate.clone().unwrap();
    let lambda = cert.y_star.norm() + 1.0;
    let best = phi_value_lambda(&inst, &cert.r_star, lambda).unwrap().phi;
    for i in 0..300 {
        let scale = 10f64.powf(-3.0 + 4.0 * (i as f64) / 300.0);
        let r = cert.r_star.add(&gauss_factor(&mut g, 10, 2).scale(scale));
        assert!(best <= phi_value_lambda(&inst, &r, lambda).unwrap().phi + 1e-10);
    }
}

#[test]
fn phi_is_orbit_invariant() {
    let mut g = rng(10);
    let inst = gen_random_quadratics(8, 3, 5, 1.0, 10).unwrap();
    let r = inst.certificate.as_ref().unwrap().r_star.clone();
    let w = orthogonal(&mut g, 3);
    let a = phi_value_lambda(&inst, &r, 7.0).unwrap().phi;
    let b = phi_value_lambda(&inst, &r.mul_right(&w), 7.0).unwrap().phi;
    assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
}

#[test]
fn penalty_params_validate() {
    assert!(PenaltyParams::new(0.0).is_err());
    assert!(PenaltyParams::new(f64::NAN).is_err());
    assert!(PenaltyParams::with_tol(1.0, 0.0).is_err());
}
