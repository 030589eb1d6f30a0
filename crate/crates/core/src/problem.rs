//! Problem instances and the exact-penalty objective
//! `phi(R) = f(R R^T) + lambda * ||A(R R^T) - b||_2`.

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::validate_certificate;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{
    pinv_solve, svd_sorted, sym_from_factor, Factor, LinOpA, SymMat,
};

/// The smooth convex part `f`.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    /// `<C, X>`
    Linear(SymMat),
    /// `1/2 ||X - Y||_F^2`
    QuadDistance(SymMat),
    /// `1/(2N) sum_i (c_i^T X c_i - d_i)^2`
    MatrixSensing {
        vectors: Vec<DVector<f64>>,
        d: DVector<f64>,
    },
}

impl Objective {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Objective::Linear(_) => "linear",
            Objective::QuadDistance(_) => "quad_distance",
            Objective::MatrixSensing { .. } => "matrix_sensing",
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        match self {
            Objective::Linear(c) | Objective::QuadDistance(c) => {
                if c.n() != n {
                    return Err(dim_err("objective matrix", n, c.n()));
                }
            }
            Objective::MatrixSensing { vectors, d } => {
                if vectors.is_empty() {
                    return Err(Error::InvalidParameter {
                        name: "N",
                        reason: "matrix sensing needs at least one measurement".into(),
                    });
                }
                if vectors.len() != d.len() {
                    return Err(dim_err("matrix sensing d", vectors.len(), d.len()));
                }
                if let Some(v) = vectors.iter().find(|v| v.len() != n) {
                    return Err(dim_err("matrix sensing vector", n, v.len()));
                }
                if d.iter().chain(vectors.iter().flat_map(|v| v.iter())).any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("matrix sensing data"));
                }
            }
        }
        Ok(())
    }
}

/// Planted primal/dual optimum `(R*, y*, Z*)`.
///
/// The convention is `grad f(X*) + A*(y*) - Z* = 0`, `Z* >= 0`,
/// `<Z*, X*> = 0`, with `X* = R* R*^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub r_star: Factor,
    pub y_star: DVector<f64>,
    pub z_star: SymMat,
    pub rank: usize,
}

impl Certificate {
    pub fn x_star(&self) -> SymMat {
        sym_from_factor(&self.r_star)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: String,
    pub n: usize,
    pub objective: Objective,
    pub constraints: LinOpA,
    pub certificate: Option<Certificate>,
}

impl Instance {
    /// Validates dimensions and, when present, the certificate.
    pub fn new(
        name: impl Into<String>,
        objective: Objective,
        constraints: LinOpA,
        certificate: Option<Certificate>,
    ) -> Result<Self> {
        let n = constraints.n();
        objective.check(n)?;
        let inst = Instance {
            name: name.into(),
            n,
            objective,
            constraints,
            certificate: None,
        };
        match certificate {
            Some(cert) => {
                validate_certificate(&inst, &cert)?;
                Ok(Instance {
                    certificate: Some(cert),
                    ..inst
                })
            }
            None => Ok(inst),
        }
    }

    /// `f(X*)`, which equals `phi(R*)` because `R*` is feasible.
    pub fn optimal_value(&self) -> Option<f64> {
        self.certificate
            .as_ref()
            .map(|c| objective_value(&self.objective, &c.x_star()))
    }

    fn check_factor(&self, r: &Factor) -> Result<()> {
        if r.n() != self.n {
            return Err(dim_err("factor rows", self.n, r.n()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyParams {
    pub lambda: f64,
    pub feas_tol: f64,
}

impl PenaltyParams {
    pub fn new(lambda: f64) -> Result<Self> {
        Self::with_tol(lambda, 1e-9)
    }

    pub fn with_tol(lambda: f64, feas_tol: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("must be positive, got {lambda}"),
            });
        }
        if !(feas_tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "feas_tol",
                reason: format!("must be positive, got {feas_tol}"),
            });
        }
        Ok(PenaltyParams { lambda, feas_tol })
    }
}

fn sensing_residuals(vectors: &[DVector<f64>], d: &DVector<f64>, x: &SymMat) -> DVector<f64> {
    DVector::from_iterator(
        vectors.len(),
        vectors
            .iter()
            .zip(d.iter())
            .map(|(c, di)| c.dot(&x.mul_vec(c)) - di),
    )
}

pub fn objective_value(obj: &Objective, x: &SymMat) -> f64 {
    match obj {
        Objective::Linear(c) => c.inner(x),
        Objective::QuadDistance(y) => 0.5 * x.sub(y).as_matrix().norm_squared(),
        Objective::MatrixSensing { vectors, d } => {
            let res = sensing_residuals(vectors, d, x);
            0.5 * res.norm_squared() / vectors.len() as f64
        }
    }
}

pub fn objective_grad(obj: &Objective, x: &SymMat) -> SymMat {
    match obj {
        Objective::Linear(c) => c.clone(),
        Objective::QuadDistance(y) => x.sub(y),
        Objective::MatrixSensing { vectors, d } => {
            let res = sensing_residuals(vectors, d, x);
            let n = x.n();
            let scale = 1.0 / vectors.len() as f64;
            let mut g = DMatrix::zeros(n, n);
            for (c, ri) in vectors.iter().zip(res.iter()) {
                g.ger(ri * scale, c, c, 1.0);
            }
            SymMat::symmetrize(g)
        }
    }
}

/// Value of the penalized objective with its two parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiValue {
    pub phi: f64,
    pub f_val: f64,
    pub feas: f64,
}

pub fn phi_value(inst: &Instance, r: &Factor, p: &PenaltyParams) -> Result<PhiValue> {
    phi_value_lambda(inst, r, p.lambda)
}

/// As [`phi_value`] but with a bare penalty weight (which may be zero).
pub fn phi_value_lambda(inst: &Instance, r: &Factor, lambda: f64) -> Result<PhiValue> {
    inst.check_factor(r)?;
    let x = sym_from_factor(r);
    let f_val = objective_value(&inst.objective, &x);
    let feas = inst.constraints.residual(&x)?.norm();
    Ok(PhiValue {
        phi: f_val + lambda * feas,
        f_val,
        feas,
    })
}

/// `grad phi_f(R) = 2 grad f(R R^T) R`.
pub fn phi_f_grad(inst: &Instance, r: &Factor) -> Result<Factor> {
    inst.check_factor(r)?;
    let g = objective_grad(&inst.objective, &sym_from_factor(r));
    Ok(Factor::from_matrix_unchecked(g.mul_factor(r) * 2.0))
}

/// `M_R = [vec(A_1 R), ..., vec(A_k R)]` (column-major vectorization) and
/// its smallest singular value.
pub fn constraint_jacobian_mr(inst: &Instance, r: &Factor) -> Result<(DMatrix<f64>, f64)> {
    inst.check_factor(r)?;
    let m = jacobian_columns(&inst.constraints, r);
    let (_, s, _) = svd_sorted(&m);
    let sigma_min = s.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((m, if sigma_min.is_finite() { sigma_min } else { 0.0 }))
}

pub(crate) fn jacobian_columns(a: &LinOpA, r: &Factor) -> DMatrix<f64> {
    let (n, rr) = r.shape();
    let mut m = DMatrix::zeros(n * rr, a.k());
    for (i, ai) in a.mats().iter().enumerate() {
        let air = ai.mul_factor(r);
        m.column_mut(i).copy_from_slice(air.as_slice());
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubgradBranch {
    Feasible,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct MinNormSubgrad {
    pub g: Factor,
    pub branch: SubgradBranch,
    /// Set when the constraint Jacobian lost rank below the pseudoinverse threshold.
    pub rank_deficient: bool,
    /// Set when the feasible-branch multiplier hit the ball `||w|| <= 2 lambda`.
    pub clamped: bool,
}

/// Minimum-norm element of the subdifferential of `phi` at `R`.
///
/// At a feasible point the subdifferential is
/// `{grad phi_f + M_R w : ||w|| <= 2 lambda}` (the factor 2 comes from
/// differentiating `R R^T`). The unconstrained minimizer over `w` gives the
/// projection of `grad phi_f` onto the complement of `range(M_R)`; when that
/// multiplier leaves the ball, a ball-constrained least squares is solved.
pub fn min_norm_subgrad(inst: &Instance, r: &Factor, p: &PenaltyParams) -> Result<MinNormSubgrad> {
    inst.check_factor(r)?;
    let x = sym_from_factor(r);
    let res = inst.constraints.residual(&x)?;
    let feas = res.norm();
    let grad = phi_f_grad(inst, r)?;
    let (n, rr) = r.shape();
    let m = jacobian_columns(&inst.constraints, r);
    let b_norm = inst.constraints.b().norm();

    if feas > p.feas_tol * (1.0 + b_norm) {
        let coef = &res * (2.0 * p.lambda / feas);
        let g = grad.vec() + &m * coef;
        return Ok(MinNormSubgrad {
            g: Factor::from_vec(n, rr, &g),
            branch: SubgradBranch::Infeasible,
            rank_deficient: false,
            clamped: false,
        });
    }

    let gv = grad.vec();
    let (w, rank) = pinv_solve(&m, &(-&gv));
    let rank_deficient = rank < m.ncols().min(m.nrows());
    let radius = 2.0 * p.lambda;
    let (w, clamped) = if w.norm() <= radius {
        (w, false)
    } else {
        (ball_least_squares(&m, &gv, radius), true)
    };
    let g = gv + &m * w;
    Ok(MinNormSubgrad {
        g: Factor::from_vec(n, rr, &g),
        branch: SubgradBranch::Feasible,
        rank_deficient,
        clamped,
    })
}

/// `argmin_{||w|| <= radius} ||g + M w||` by accelerated projected gradient.
pub(crate) fn ball_least_squares(m: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let gram = m.transpose() * m;
    let lin = m.transpose() * g;
    let lmax = gram
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let k = gram.nrows();
    if lmax <= 0.0 {
        return DVector::zeros(k);
    }
    let step = 1.0 / lmax;
    let project = |v: DVector<f64>| {
        let nv = v.norm();
        if nv > radius {
            v * (radius / nv)
        } else {
            v
        }
    };
    let mut w = DVector::zeros(k);
    let mut y = w.clone();
    let mut tk = 1.0_f64;
    for _ in 0..200_000 {
        let grad = &gram * &y + &lin;
        let w_next = project(&y - grad * step);
        let change = (&w_next - &w).norm();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        y = &w_next + (&w_next - &w) * ((tk - 1.0) / t_next);
        w = w_next;
        tk = t_next;
        if change <= 1e-12 * (1.0 + w.norm()) {
            break;
        }
    }
    w
}

/// Prox-linear gradient mapping `(R_next - R) / t`.
pub fn gradient_mapping(r: &Factor, r_next: &Factor, t: f64) -> Result<Factor> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: format!("stepsize must be positive, got {t}"),
        });
    }
    if r.shape() != r_next.shape() {
        return Err(dim_err(
            "gradient_mapping",
            format!("{:?}", r.shape()),
            format!("{:?}", r_next.shape()),
        ));
    }
    Ok(r_next.sub(r).scale(1.0 / t))
}
