//! Projected gradient descent for unit-diagonal problems and a full-storage
//! method-of-multipliers / Frank-Wolfe initializer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    adjoint_lin_op, apply_lin_op, fix_sign, min_eigpair_from, sym_eig_ascending, sym_from_factor,
    Factor, LinOpA, SymMat,
};
use crate::problem::{objective_grad, objective_value, Instance, Objective};

/// True when the constraints are exactly diag(X) = 1.
pub fn is_unit_diagonal(a: &LinOpA) -> bool {
    let n = a.n();
    a.k() == n
        && a.b().iter().all(|&b| b == 1.0)
        && a.mats().iter().enumerate().all(|(i, m)| {
            let m = m.as_matrix();
            m[(i, i)] == 1.0 && m.iter().filter(|&&x| x != 0.0).count() == 1
        })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgdRecord {
    pub iter: usize,
    /// `<C, R R^T>`
    pub objective: f64,
    /// `||diag(R R^T) - 1||`
    pub feas: f64,
    /// Rows that vanished in this step and were kept from the previous iterate.
    pub zero_rows: usize,
}

#[derive(Clone, Debug)]
pub struct PgdOutput {
    pub r: Factor,
    pub trace: Vec<PgdRecord>,
}

/// `R <- row-normalize((I - 2 t C) R)` for `diag(R R^T) = 1`.
pub fn pgd_maxcut(inst: &Instance, r0: &Factor, t: f64, iters: usize) -> Result<PgdOutput> {
    let Objective::Linear(c) = &inst.objective else {
        return Err(Error::WrongObjective {
            expected: "linear",
            found: inst.objective.kind_name(),
        });
    };
    if !is_unit_diagonal(&inst.constraints) {
        return Err(Error::InvalidParameter {
            name: "constraints",
            reason: "projected gradient needs diag(X) = 1 constraints".into(),
        });
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: format!("stepsize must be positive, got {t}"),
        });
    }
    if r0.n() != inst.n {
        return Err(crate::error::dim_err("initial factor rows", inst.n, r0.n()));
    }
    let mut r = r0.as_matrix().clone();
    let mut zero = 0;
    normalize_rows_keep(&mut r, r0.as_matrix(), &mut zero);
    let mut trace = Vec::with_capacity(iters + 1);
    let measure = |r: &DMatrix<f64>| {
        let x = sym_from_factor(&Factor::from_matrix_unchecked(r.clone()));
        let feas = x.as_matrix().diagonal().iter().map(|d| (d - 1.0).powi(2)).sum::<f64>().sqrt();
        (c.inner(&x), feas)
    };
    let (objective, feas) = measure(&r);
    trace.push(PgdRecord {
        iter: 0,
        objective,
        feas,
        zero_rows: zero,
    });
    for iter in 1..=iters {
        let mut next = &r - c.as_matrix() * &r * (2.0 * t);
        let mut zero = 0;
        normalize_rows_keep(&mut next, &r, &mut zero);
        if zero > 0 {
            log::warn!("projected gradient: {zero} zero rows at iteration {iter}");
        }
        r = next;
        let (objective, feas) = measure(&r);
        trace.push(PgdRecord {
            iter,
            objective,
            feas,
            zero_rows: zero,
        });
    }
    Ok(PgdOutput {
        r: Factor::from_matrix_unchecked(r),
        trace,
    })
}

fn normalize_rows_keep(m: &mut DMatrix<f64>, prev: &DMatrix<f64>, zero: &mut usize) {
    for i in 0..m.nrows() {
        let nrm = m.row(i).norm();
        if nrm > 0.0 && nrm.is_finite() {
            let row = m.row(i) / nrm;
            m.set_row(i, &row);
        } else {
            *zero += 1;
            let p = prev.row(i);
            let pn = p.norm();
            let row = if pn > 0.0 { p / pn } else { p.into_owned() };
            m.set_row(i, &row);
        }
    }
}

/// Up to this order the oracle uses a dense eigendecomposition; above it,
/// warm-started power iteration.
pub const DENSE_EIG_MAX: usize = 400;

#[derive(Clone, Debug, PartialEq)]
pub struct FwConfig {
    /// Trace bound `alpha >= tr(X*)`.
    pub alpha_trace: f64,
    /// Augmented Lagrangian parameter.
    pub rho: f64,
    pub outer_rounds: usize,
    pub inner_fw_iters: usize,
    pub eig_tol: f64,
    pub eig_max_iter: usize,
    pub step: FwStep,
    /// Restart the step counter `j` at every multiplier round.
    pub restart_steps: bool,
}

/// Frank-Wolfe step size rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FwStep {
    /// `tau_j = 2 / (j + 2)`
    OpenLoop,
    /// Exact minimization of the quadratic augmented Lagrangian on the segment.
    LineSearch,
}

impl FwConfig {
    /// 40 rounds of 100 Frank-Wolfe steps.
    pub fn new(alpha_trace: f64, rho: f64) -> Self {
        FwConfig {
            alpha_trace,
            rho,
            outer_rounds: 40,
            inner_fw_iters: 100,
            eig_tol: 1e-6,
            eig_max_iter: 100_000,
            step: FwStep::OpenLoop,
            restart_steps: false,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha_trace", self.alpha_trace), ("rho", self.rho), ("eig_tol", self.eig_tol)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if self.outer_rounds == 0 || self.inner_fw_iters == 0 || self.eig_max_iter == 0 {
            return Err(Error::InvalidParameter {
                name: "outer_rounds",
                reason: "iteration counts must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FwRound {
    pub round: usize,
    /// `||A(X) - b||`
    pub feas: f64,
    /// Frank-Wolfe duality gap at the last inner step.
    pub fw_gap: f64,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct FwOutput {
    pub x: SymMat,
    pub multiplier: DVector<f64>,
    pub rounds: Vec<FwRound>,
}

/// Frank-Wolfe direction `S = alpha v v^T` for the most negative eigenvector
/// of `grad`, or `S = 0` when `grad` is PSD.
fn lmo(grad: &SymMat, alpha: f64, cfg: &FwConfig, warm: Option<&DVector<f64>>) -> Result<(SymMat, DVector<f64>)> {
    let (value, vector) = if grad.n() <= DENSE_EIG_MAX {
        let (values, vectors) = sym_eig_ascending(grad);
        (values[0], vectors.column(0).into_owned())
    } else {
        let pair = min_eigpair_from(grad, cfg.eig_tol, cfg.eig_max_iter, warm)?;
        (pair.value, pair.vector)
    };
    let s = if value < 0.0 {
        SymMat::outer(&vector, alpha)
    } else {
        SymMat::zeros(grad.n())
    };
    Ok((s, vector))
}

/// `grad L = grad f(X) + A*(mult + rho (A(X) - b))`.
fn lagrangian_grad(inst: &Instance, x: &SymMat, mult: &DVector<f64>, rho: f64) -> Result<SymMat> {
    let res = inst.constraints.residual(x)?;
    let w = mult + res * rho;
    Ok(objective_grad(&inst.objective, x).add(&adjoint_lin_op(&inst.constraints, &w)?))
}

/// Minimizer over `[0, 1]` of the augmented Lagrangian along `X + tau D`,
/// given the slope `-<grad L, D>`.
fn segment_minimizer(inst: &Instance, dir: &SymMat, descent: f64, rho: f64) -> Result<f64> {
    let ad = apply_lin_op(&inst.constraints, dir)?;
    let mut curv = rho * ad.norm_squared();
    if let Objective::QuadDistance(_) = inst.objective {
        curv += dir.as_matrix().norm_squared();
    }
    if descent <= 0.0 {
        return Ok(0.0);
    }
    Ok(if curv > 0.0 { (descent / curv).min(1.0) } else { 1.0 })
}

pub fn fw_init(inst: &Instance, cfg: &FwConfig) -> Result<FwOutput> {
    cfg.validate()?;
    if matches!(inst.objective, Objective::MatrixSensing { .. }) {
        return Err(Error::WrongObjective {
            expected: "linear or quad_distance",
            found: inst.objective.kind_name(),
        });
    }
    let n = inst.n;
    let mut x = SymMat::zeros(n);
    let mut mult = DVector::zeros(inst.constraints.k());
    let mut warm: Option<DVector<f64>> = None;
    let mut rounds = Vec::with_capacity(cfg.outer_rounds);
    let mut j = 0;
    for round in 0..cfg.outer_rounds {
        let mut fw_gap = f64::INFINITY;
        if cfg.restart_steps {
            j = 0;
        }
        for _ in 0..cfg.inner_fw_iters {
            j += 1;
            let grad = lagrangian_grad(inst, &x, &mult, cfg.rho)?;
            let (s, v) = lmo(&grad, cfg.alpha_trace, cfg, warm.as_ref())?;
            warm = Some(v);
            let dir = s.sub(&x);
            fw_gap = -grad.inner(&dir);
            let tau = match cfg.step {
                FwStep::OpenLoop => 2.0 / (j as f64 + 2.0),
                FwStep::LineSearch => segment_minimizer(inst, &dir, fw_gap, cfg.rho)?,
            };
            x = x.add(&dir.scale(tau));
        }
        let res = apply_lin_op(&inst.constraints, &x)? - inst.constraints.b();
        mult += &res * cfg.rho;
        let feas = res.norm();
        log::debug!("fw round {round}: feas {feas:e}, gap {fw_gap:e}");
        rounds.push(FwRound {
            round,
            feas,
            fw_gap,
            objective: objective_value(&inst.objective, &x),
        });
    }
    Ok(FwOutput {
        x,
        multiplier: mult,
        rounds,
    })
}

/// `R = Q_r sqrt(max(lambda, 0))` from the top `r` eigenpairs.
pub fn rank_r_truncate(x: &SymMat, r: usize) -> Result<Factor> {
    let n = x.n();
    if r == 0 || r > n {
        return Err(Error::InvalidParameter {
            name: "r",
            reason: format!("need 1 <= r <= {n}, got {r}"),
        });
    }
    let (values, vectors) = sym_eig_ascending(x);
    let mut out = DMatrix::zeros(n, r);
    for j in 0..r {
        let src = n - 1 - j;
        let scale = values[src].max(0.0).sqrt();
        let mut col: Vec<f64> = vectors.column(src).iter().copied().collect();
        fix_sign(&mut col);
        for (i, v) in col.iter().enumerate() {
            out[(i, j)] = v * scale;
        }
    }
    Factor::new(out)
}
