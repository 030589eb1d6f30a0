//! Prox-linear outer loop on the exact penalty objective.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{lin_op_norm, padded_procrustes_distance, Factor};
use crate::pogs::{pogs_solve_warm, PogsParams, PogsResult, PogsState, Subproblem};
use crate::problem::{objective_grad, phi_value_lambda, Instance, Objective, PhiValue};
use crate::linalg::sym_from_factor;

/// Lipschitz constant of the Jacobian of `R -> R R^T`.
pub const DESCENT_BETA: f64 = 2.0;
const MAX_HALVINGS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub lambda: f64,
    pub t: f64,
    pub max_outer: usize,
    /// Stop once `||G_t||_F` falls to this level.
    pub grad_map_tol: f64,
    /// When set, convergence also requires `feas <= feas_target`.
    pub feas_target: Option<f64>,
    pub pogs: PogsParams,
    /// Log the Procrustes distance to the certificate factor.
    pub record_dist: bool,
    /// Carry ADMM duals from one subproblem to the next.
    pub warm_start: bool,
    /// Double a halved stepsize after each accepted step, up to `t`. Without
    /// it, halvings forced by overshoot far from the solution slow the whole
    /// remaining run.
    pub recover_t: bool,
}

impl SolveConfig {
    /// `t = 1 / lambda`, 500 outer iterations.
    pub fn new(lambda: f64) -> Self {
        SolveConfig {
            lambda,
            t: 1.0 / lambda,
            max_outer: 500,
            grad_map_tol: 1e-9,
            feas_target: None,
            pogs: PogsParams::default(),
            record_dist: true,
            warm_start: true,
            recover_t: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("t", self.t), ("grad_map_tol", self.grad_map_tol)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if let Some(f) = self.feas_target {
            if !(f > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "feas_target",
                    reason: format!("must be positive, got {f}"),
                });
            }
        }
        self.pogs.validate()
    }
}

/// One row of the solve trace. `grad_map_norm` and `inner_iters` describe
/// the step taken from this point.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub phi: f64,
    pub f_val: f64,
    pub feas: f64,
    pub grad_map_norm: f64,
    pub dist_to_solution: Option<f64>,
    pub inner_iters: usize,
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Stalled,
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub r: Factor,
    pub trace: Vec<TraceRecord>,
    pub status: SolveStatus,
    /// Stepsize in force at exit (after any halvings).
    pub t_final: f64,
    /// Total halvings over the run, including ones later recovered.
    pub halvings: usize,
}

/// `N(0, 1/n)` entries.
pub fn random_init(n: usize, r: usize, seed: u64) -> Result<Factor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (1.0 / n as f64).sqrt()).map_err(|e| Error::InvalidParameter {
        name: "n",
        reason: e.to_string(),
    })?;
    Factor::new(DMatrix::from_fn(n, r, |_, _| normal.sample(&mut rng)))
}

/// `L = L_f + lambda ||A||` where `L_f = ||grad f||_F` at `at` (exact for a
/// linear objective).
pub fn descent_lipschitz(inst: &Instance, lambda: f64, at: &Factor) -> Result<f64> {
    let lf = match &inst.objective {
        Objective::Linear(c) => c.frobenius_norm(),
        obj => objective_grad(obj, &sym_from_factor(at)).frobenius_norm(),
    };
    Ok(lf + lambda * lin_op_norm(&inst.constraints, 1e-12)?)
}

/// `phi_prev - phi_cur - ||G_t(prev)||^2 / (2 L beta)`; non-negative when the
/// descent inequality held for the step out of `prev`.
pub fn check_descent(prev: &TraceRecord, cur: &TraceRecord, lipschitz: f64, beta: f64) -> f64 {
    prev.phi - cur.phi - prev.grad_map_norm * prev.grad_map_norm / (2.0 * lipschitz * beta)
}

struct Step {
    delta: Factor,
    next: Factor,
    value: PhiValue,
    inner: PogsResult,
}

pub fn prox_linear_solve(inst: &Instance, r0: &Factor, cfg: &SolveConfig) -> Result<SolveOutput> {
    cfg.validate()?;
    if r0.n() != inst.n {
        return Err(crate::error::dim_err("initial factor rows", inst.n, r0.n()));
    }
    let start = Instant::now();
    let star = inst.certificate.as_ref().filter(|_| cfg.record_dist).map(|c| &c.r_star);
    let mut r = r0.clone();
    let mut value = phi_value_lambda(inst, &r, cfg.lambda)?;
    let mut t = cfg.t;
    let mut halvings = 0;
    // halvings currently in force
    let mut depth = 0;
    let mut warm: Option<PogsState> = None;
    let mut trace = Vec::new();
    let mut prev_g = f64::INFINITY;
    let mut status = SolveStatus::MaxIter;
    let mut accepted = 0;

    let record = |iter: usize, r: &Factor, v: &PhiValue, g: f64, inner: usize| -> Result<TraceRecord> {
        Ok(TraceRecord {
            iter,
            phi: v.phi,
            f_val: v.f_val,
            feas: v.feas,
            grad_map_norm: g,
            dist_to_solution: star.map(|s| padded_procrustes_distance(r, s)).transpose()?,
            inner_iters: inner,
            wall_time: start.elapsed().as_secs_f64(),
        })
    };

    let mut prev_step = f64::INFINITY;
    loop {
        let mut pogs = cfg.pogs.clone();
        pogs.rel_tol = (0.1 * prev_g).clamp(1e-13, 1e-6);
        pogs.abs_tol = (1e-4 * prev_step).clamp(1e-16, cfg.pogs.abs_tol);
        let mut step = take_step(inst, &r, t, cfg.lambda, &pogs, warm.as_ref())?;
        let slack = 1e-12 * (1.0 + value.phi.abs());
        if step.value.phi > value.phi + slack || step.inner.fell_back_to_null {
            pogs.rel_tol *= 0.1;
            pogs.abs_tol *= 0.1;
            step = take_step(inst, &r, t, cfg.lambda, &pogs, None)?;
        }
        let g = step.delta.frobenius_norm() / t;
        // an unconverged inner solve that lost to the null step says nothing about stationarity
        let failed = step.value.phi > value.phi + slack || (step.inner.fell_back_to_null && !step.inner.converged);
        let done = !failed && g <= cfg.grad_map_tol && cfg.feas_target.map_or(true, |f| value.feas <= f);
        if done || accepted == cfg.max_outer {
            if done {
                status = SolveStatus::Converged;
            }
            trace.push(record(accepted, &r, &value, g, step.inner.iterations)?);
            break;
        }
        if failed {
            // null step
            halvings += 1;
            depth += 1;
            t *= 0.5;
            warm = None;
            log::debug!("null step at outer iteration {accepted}; stepsize halved to {t:e}");
            if depth > MAX_HALVINGS {
                status = SolveStatus::Stalled;
                trace.push(record(accepted, &r, &value, g, step.inner.iterations)?);
                break;
            }
            continue;
        }
        trace.push(record(accepted, &r, &value, g, step.inner.iterations)?);
        prev_g = g;
        prev_step = step.delta.frobenius_norm();
        if cfg.warm_start {
            warm = Some(step.inner.state.clone());
        }
        r = step.next;
        value = step.value;
        accepted += 1;
        if cfg.recover_t && depth > 0 {
            depth -= 1;
            t = cfg.t * 0.5f64.powi(depth as i32);
        }
    }
    Ok(SolveOutput {
        r,
        trace,
        status,
        t_final: t,
        halvings,
    })
}

fn take_step(
    inst: &Instance,
    r: &Factor,
    t: f64,
    lambda: f64,
    pogs: &PogsParams,
    warm: Option<&PogsState>,
) -> Result<Step> {
    let sub = Subproblem::new(inst, r, t, lambda)?;
    let inner = pogs_solve_warm(&sub, pogs, warm)?;
    let next = r.add(&inner.delta);
    let value = phi_value_lambda(inst, &next, lambda)?;
    Ok(Step {
        delta: inner.delta.clone(),
        next,
        value,
        inner,
    })
}
