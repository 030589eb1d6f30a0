//! Proximal operator graph splitting (POGS) for the prox-linear subproblem
//!
//! ```text
//! minimize_D  f(R R^T + R D^T + D R^T) + lambda ||z + A(R R^T) - b|| + ||D||^2 / (2t)
//! subject to  z = 2 A(R D^T)
//! ```
//!
//! The two blocks are `g(z) = lambda ||z + r0||` and
//! `h(D) = f(R R^T + R D^T + D R^T) + ||D||^2 / (2t)`. Each ADMM sweep takes
//! the proximal step on both blocks, projects onto the graph
//! `{(z, D) : z = M D}` and updates the scaled duals.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::cg::conjugate_gradient;
use crate::error::{Error, Result};
use crate::linalg::{sym_from_factor, Factor, SymMat};
use crate::problem::{ball_least_squares, jacobian_columns, objective_grad, objective_value, Instance, Objective};

/// Graph projection strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionMode {
    /// Direct when `n r k <= 4e6`, otherwise conjugate gradient.
    Auto,
    Direct,
    Cg,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PogsParams {
    /// ADMM parameter; `None` uses the penalty weight.
    pub rho: Option<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub projection: ProjectionMode,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// One residual-balancing rescale of `rho` after 100 iterations.
    pub adapt_rho: bool,
}

impl Default for PogsParams {
    fn default() -> Self {
        PogsParams {
            rho: None,
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_iter: 5000,
            projection: ProjectionMode::Auto,
            cg_tol: 1e-12,
            cg_max_iter: 1000,
            adapt_rho: true,
        }
    }
}

impl PogsParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("abs_tol", self.abs_tol),
            ("rel_tol", self.rel_tol),
            ("cg_tol", self.cg_tol),
            ("rho", self.rho.unwrap_or(1.0)),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if self.rel_tol >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "rel_tol",
                reason: "must be below 1".into(),
            });
        }
        if self.max_iter == 0 || self.cg_max_iter == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iter",
                reason: "iteration caps must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Data for the Hessian of `D -> f(X + R D^T + D R^T)`.
#[derive(Clone, Debug)]
enum Curvature {
    None,
    Quadratic { rtr: DMatrix<f64> },
    Sensing { vecs: DMatrix<f64>, proj: DMatrix<f64>, scale: f64 },
}

/// One prox-linear model, with everything that depends only on the base point
/// cached.
#[derive(Clone, Debug)]
pub struct Subproblem<'a> {
    inst: &'a Instance,
    base: Factor,
    t: f64,
    lambda: f64,
    x: SymMat,
    residual: DVector<f64>,
    f_base: f64,
    /// `2 grad f(X) R`, the gradient of the smooth part at `D = 0` (without the prox term).
    lin_grad: DMatrix<f64>,
    /// `nr x k`, columns `2 vec(A_i R)`; the graph map is `z = graph^T vec(D)`.
    graph: DMatrix<f64>,
    curvature: Curvature,
}

impl<'a> Subproblem<'a> {
    pub fn new(inst: &'a Instance, base: &Factor, t: f64, lambda: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter {
                name: "t",
                reason: format!("stepsize must be positive, got {t}"),
            });
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("must be positive, got {lambda}"),
            });
        }
        if base.n() != inst.n {
            return Err(crate::error::dim_err("subproblem base", inst.n, base.n()));
        }
        let x = sym_from_factor(base);
        let residual = inst.constraints.residual(&x)?;
        let f_base = objective_value(&inst.objective, &x);
        let lin_grad = objective_grad(&inst.objective, &x).mul_factor(base) * 2.0;
        let graph = jacobian_columns(&inst.constraints, base) * 2.0;
        let curvature = match &inst.objective {
            Objective::Linear(_) => Curvature::None,
            Objective::QuadDistance(_) => Curvature::Quadratic {
                rtr: base.as_matrix().transpose() * base.as_matrix(),
            },
            Objective::MatrixSensing { vectors, .. } => {
                let vecs = DMatrix::from_columns(vectors);
                let proj = vecs.transpose() * base.as_matrix();
                Curvature::Sensing {
                    vecs,
                    proj,
                    scale: 1.0 / vectors.len() as f64,
                }
            }
        };
        Ok(Subproblem {
            inst,
            base: base.clone(),
            t,
            lambda,
            x,
            residual,
            f_base,
            lin_grad,
            graph,
            curvature,
        })
    }

    pub fn base(&self) -> &Factor {
        &self.base
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn instance(&self) -> &Instance {
        self.inst
    }

    /// Cached `A(R R^T) - b`.
    pub fn residual(&self) -> &DVector<f64> {
        &self.residual
    }

    pub fn x(&self) -> &SymMat {
        &self.x
    }

    fn shape(&self) -> (usize, usize) {
        self.base.shape()
    }

    /// `z = 2 A(R D^T)`.
    pub fn graph_map(&self, d: &Factor) -> DVector<f64> {
        self.graph.tr_mul(&d.vec())
    }

    fn graph_adjoint(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.graph * z
    }

    /// `R D^T + D R^T`
    fn lift(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        let rd = self.base.as_matrix() * d.transpose();
        &rd + rd.transpose()
    }

    /// Hessian of the smooth model part, prox term excluded.
    fn curvature_apply(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let r = self.base.as_matrix();
        match &self.curvature {
            Curvature::None => DMatrix::zeros(v.nrows(), v.ncols()),
            Curvature::Quadratic { rtr } => (r * (v.transpose() * r) + v * rtr) * 2.0,
            Curvature::Sensing { vecs, proj, scale } => {
                let cv = vecs.transpose() * v;
                let mut weighted = proj.clone();
                for (i, mut row) in weighted.row_iter_mut().enumerate() {
                    let s = 2.0 * proj.row(i).dot(&cv.row(i));
                    row *= s;
                }
                vecs * weighted * (2.0 * scale)
            }
        }
    }

    /// Smooth block `h(D) = f(X + R D^T + D R^T) + ||D||^2 / (2t)`.
    pub fn smooth_value(&self, d: &Factor) -> f64 {
        let dm = d.as_matrix();
        let f = match &self.inst.objective {
            Objective::Linear(_) => self.f_base + self.lin_grad.dot(dm),
            _ => {
                let xl = SymMat::symmetrize(self.x.as_matrix() + self.lift(dm));
                objective_value(&self.inst.objective, &xl)
            }
        };
        f + 0.5 * dm.norm_squared() / self.t
    }

    /// Gradient of the smooth block.
    pub fn smooth_grad(&self, d: &Factor) -> Factor {
        let dm = d.as_matrix();
        let g = &self.lin_grad + self.curvature_apply(dm) + dm / self.t;
        Factor::from_matrix_unchecked(g)
    }

    /// Full model value at the increment `d`.
    pub fn model_value(&self, d: &Factor) -> f64 {
        let lin = &self.residual + self.graph_map(d);
        self.smooth_value(d) + self.lambda * lin.norm()
    }

    /// Distance from zero to the model subdifferential at `d`.
    pub fn model_optimality_residual(&self, d: &Factor) -> f64 {
        let grad = self.smooth_grad(d).vec();
        let lin = &self.residual + self.graph_map(d);
        let ln = lin.norm();
        if ln > 1e-9 * (1.0 + self.residual.norm()) {
            (grad + self.graph_adjoint(&lin) * (self.lambda / ln)).norm()
        } else {
            let w = ball_least_squares(&self.graph, &grad, self.lambda);
            (grad + &self.graph * w).norm()
        }
    }
}

/// `prox` of `w ||z + a||_2`: `-a + max(1 - w / ||v + a||, 0) (v + a)`.
pub fn prox_norm_offset(v: &DVector<f64>, a: &DVector<f64>, w: f64) -> DVector<f64> {
    let shifted = v + a;
    let nrm = shifted.norm();
    if nrm == 0.0 {
        return -a.clone();
    }
    let scale = (1.0 - w / nrm).max(0.0);
    shifted * scale - a
}

/// Closed-form prox of the linear-objective model block:
/// `D = (rho v - 2 C R) / (1/t + rho)`.
pub fn prox_h_linear(sub: &Subproblem, v: &Factor, rho: f64) -> Result<Factor> {
    if !matches!(sub.inst.objective, Objective::Linear(_)) {
        return Err(Error::WrongObjective {
            expected: "linear",
            found: sub.inst.objective.kind_name(),
        });
    }
    check_shape(sub, v)?;
    let d = (v.as_matrix() * rho - &sub.lin_grad) / (1.0 / sub.t + rho);
    Ok(Factor::from_matrix_unchecked(d))
}

/// Prox of a quadratic model block (quadratic distance or matrix sensing) by
/// matrix-free conjugate gradient on `grad h(D) + rho (D - v) = 0`.
pub fn prox_h_quadratic(
    sub: &Subproblem,
    v: &Factor,
    rho: f64,
    cg_tol: f64,
    cg_max_iter: usize,
) -> Result<Factor> {
    if matches!(sub.inst.objective, Objective::Linear(_)) {
        return Err(Error::WrongObjective {
            expected: "quadratic",
            found: "linear",
        });
    }
    check_shape(sub, v)?;
    prox_h_cg(sub, v, rho, cg_tol, cg_max_iter, None).map(|(d, _)| d)
}

fn check_shape(sub: &Subproblem, v: &Factor) -> Result<()> {
    if v.shape() != sub.shape() {
        return Err(crate::error::dim_err(
            "prox input",
            format!("{:?}", sub.shape()),
            format!("{:?}", v.shape()),
        ));
    }
    Ok(())
}

fn prox_h_cg(
    sub: &Subproblem,
    v: &Factor,
    rho: f64,
    cg_tol: f64,
    cg_max_iter: usize,
    warm: Option<&Factor>,
) -> Result<(Factor, usize)> {
    let (n, r) = sub.shape();
    let diag = 1.0 / sub.t + rho;
    let rhs_m = v.as_matrix() * rho - &sub.lin_grad;
    let rhs = DVector::from_column_slice(rhs_m.as_slice());
    let tol = cg_tol * (1.0 + (v.as_matrix() * rho).norm());
    let x0 = warm.map(|w| w.vec());
    let out = conjugate_gradient(
        |x| {
            let xm = DMatrix::from_column_slice(n, r, x.as_slice());
            let hx = sub.curvature_apply(&xm) + &xm * diag;
            DVector::from_column_slice(hx.as_slice())
        },
        &rhs,
        x0.as_ref(),
        tol,
        cg_max_iter,
    );
    if !out.converged {
        return Err(Error::CgNonConvergence {
            iterations: out.iterations,
            residual: out.residual,
            best: Box::new(DMatrix::from_column_slice(n, r, out.x.as_slice())),
        });
    }
    Ok((Factor::from_vec(n, r, &out.x), out.iterations))
}

/// Projection onto `{(z, D) : z = 2 A(R D^T)}`, cached per subproblem.
enum GraphProjector {
    /// Cholesky of `I_k + M M^T`, used as `(I + M^T M)^-1 = I - M^T (I + M M^T)^-1 M`.
    Dual(Cholesky<f64, Dyn>),
    /// Cholesky of `I_{nr} + M^T M`.
    Primal(Cholesky<f64, Dyn>),
    Cg { tol: f64, max_iter: usize },
}

impl GraphProjector {
    fn new(sub: &Subproblem, mode: ProjectionMode, cg_tol: f64, cg_max_iter: usize) -> Result<Self> {
        let (nr, k) = sub.graph.shape();
        let direct = match mode {
            ProjectionMode::Direct => true,
            ProjectionMode::Cg => false,
            ProjectionMode::Auto => (nr as f64) * (k as f64) <= 4e6,
        };
        if !direct {
            return Ok(GraphProjector::Cg {
                tol: cg_tol,
                max_iter: cg_max_iter,
            });
        }
        let g = &sub.graph;
        let (gram, dual) = if k <= nr {
            (g.tr_mul(g), true)
        } else {
            (g * g.transpose(), false)
        };
        let dim = gram.nrows();
        let system = gram + DMatrix::identity(dim, dim);
        let chol = Cholesky::new(system).ok_or_else(|| Error::InvalidParameter {
            name: "graph",
            reason: "projection system not positive definite".into(),
        })?;
        Ok(if dual {
            GraphProjector::Dual(chol)
        } else {
            GraphProjector::Primal(chol)
        })
    }

    fn project(&self, sub: &Subproblem, z: &DVector<f64>, d: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let w = d + sub.graph_adjoint(z);
        let dn = match self {
            GraphProjector::Dual(chol) => {
                let mw = sub.graph.tr_mul(&w);
                let s = chol.solve(&mw);
                w - &sub.graph * s
            }
            GraphProjector::Primal(chol) => chol.solve(&w),
            GraphProjector::Cg { tol, max_iter } => {
                let tol_abs = tol * (1.0 + w.norm());
                let out = conjugate_gradient(
                    |x| x + &sub.graph * sub.graph.tr_mul(x),
                    &w,
                    None,
                    tol_abs,
                    *max_iter,
                );
                if !out.converged {
                    let (n, r) = sub.shape();
                    return Err(Error::CgNonConvergence {
                        iterations: out.iterations,
                        residual: out.residual,
                        best: Box::new(DMatrix::from_column_slice(n, r, out.x.as_slice())),
                    });
                }
                out.x
            }
        };
        let zn = sub.graph.tr_mul(&dn);
        Ok((zn, dn))
    }
}

/// Projection of `(z, d)` onto the graph of `D -> 2 A(R D^T)`.
pub fn project_graph(
    z: &DVector<f64>,
    d: &Factor,
    sub: &Subproblem,
    mode: ProjectionMode,
    cg_tol: f64,
    cg_max_iter: usize,
) -> Result<(DVector<f64>, Factor)> {
    check_shape(sub, d)?;
    if z.len() != sub.graph.ncols() {
        return Err(crate::error::dim_err("project_graph z", sub.graph.ncols(), z.len()));
    }
    let proj = GraphProjector::new(sub, mode, cg_tol, cg_max_iter)?;
    let (zn, dn) = proj.project(sub, z, &d.vec())?;
    let (n, r) = sub.shape();
    Ok((zn, Factor::from_vec(n, r, &dn)))
}

/// ADMM state carried between subproblems. Duals are stored unscaled so
/// they survive a change of `rho`.
#[derive(Clone, Debug)]
pub struct PogsState {
    pub dual_z: DVector<f64>,
    pub dual_d: DMatrix<f64>,
    pub rho: f64,
}

#[derive(Clone, Debug)]
pub struct PogsResult {
    pub delta: Factor,
    pub iterations: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub converged: bool,
    /// Total conjugate gradient iterations spent in the smooth prox.
    pub cg_iterations: usize,
    /// Set when the null step beat the ADMM iterate.
    pub fell_back_to_null: bool,
    pub state: PogsState,
}

pub fn pogs_solve(sub: &Subproblem, params: &PogsParams) -> Result<PogsResult> {
    pogs_solve_warm(sub, params, None)
}

/// POGS in scaled form. `warm` supplies duals from a previous, nearby
/// subproblem; primal variables always start at the null step.
pub fn pogs_solve_warm(sub: &Subproblem, params: &PogsParams, warm: Option<&PogsState>) -> Result<PogsResult> {
    params.validate()?;
    let (n, r) = sub.shape();
    let k = sub.graph.ncols();
    let nr = n * r;
    let mut rho = params.rho.unwrap_or(sub.lambda);
    let projector = GraphProjector::new(sub, params.projection, params.cg_tol, params.cg_max_iter)?;
    let linear = matches!(sub.inst.objective, Objective::Linear(_));

    let mut z = DVector::zeros(k);
    let mut d = DVector::zeros(nr);
    let (mut uz, mut ud) = match warm {
        Some(s) if s.dual_z.len() == k && s.dual_d.shape() == (n, r) => (
            &s.dual_z / rho,
            DVector::from_column_slice(s.dual_d.as_slice()) / rho,
        ),
        _ => (DVector::zeros(k), DVector::zeros(nr)),
    };
    let mut last_half: Option<Factor> = None;
    let mut cg_total = 0;
    let mut iterations = 0;
    let mut primal_res = f64::INFINITY;
    let mut dual_res = f64::INFINITY;
    let mut converged = false;
    let mut rescaled = false;

    for it in 1..=params.max_iter {
        iterations = it;
        let z_half = prox_norm_offset(&(&z - &uz), &sub.residual, sub.lambda / rho);
        let v = Factor::from_vec(n, r, &(&d - &ud));
        let d_half_f = if linear {
            prox_h_linear(sub, &v, rho)?
        } else {
            let (df, cgi) = prox_h_cg(sub, &v, rho, params.cg_tol, params.cg_max_iter, last_half.as_ref())?;
            cg_total += cgi;
            df
        };
        let d_half = d_half_f.vec();
        let (z_new, d_new) = projector.project(sub, &(&z_half + &uz), &(&d_half + &ud))?;

        let rz = &z_half - &z_new;
        let rd = &d_half - &d_new;
        uz += &rz;
        ud += &rd;
        primal_res = (rz.norm_squared() + rd.norm_squared()).sqrt();
        dual_res = rho * ((&z_new - &z).norm_squared() + (&d_new - &d).norm_squared()).sqrt();
        let scale_pri = (z_half.norm_squared() + d_half.norm_squared())
            .sqrt()
            .max((z_new.norm_squared() + d_new.norm_squared()).sqrt());
        let scale_dual = rho * (uz.norm_squared() + ud.norm_squared()).sqrt();
        let eps_pri = params.abs_tol + params.rel_tol * scale_pri;
        let eps_dual = params.abs_tol + params.rel_tol * scale_dual;
        z = z_new;
        d = d_new;
        last_half = Some(d_half_f);

        if primal_res <= eps_pri && dual_res <= eps_dual {
            converged = true;
            break;
        }
        if params.adapt_rho && !rescaled && it == 100 {
            let factor = graph_norm(&sub.graph).sqrt().max(2.0);
            let new_rho = if primal_res > 10.0 * dual_res {
                Some(rho * factor)
            } else if dual_res > 10.0 * primal_res {
                Some(rho / factor)
            } else {
                None
            };
            if let Some(new_rho) = new_rho {
                uz *= rho / new_rho;
                ud *= rho / new_rho;
                rho = new_rho;
                rescaled = true;
            }
        }
    }

    let candidate = Factor::from_vec(n, r, &d);
    let null = Factor::zeros(n, r);
    let fell_back = sub.model_value(&candidate) > sub.model_value(&null);
    let delta = if fell_back { null } else { candidate };
    Ok(PogsResult {
        delta,
        iterations,
        primal_res,
        dual_res,
        converged,
        cg_iterations: cg_total,
        fell_back_to_null: fell_back,
        state: PogsState {
            dual_z: uz * rho,
            dual_d: DMatrix::from_column_slice(n, r, (ud * rho).as_slice()),
            rho,
        },
    })
}

fn graph_norm(g: &DMatrix<f64>) -> f64 {
    // largest singular value through the smaller Gram matrix
    let gram = if g.ncols() <= g.nrows() { g.tr_mul(g) } else { g * g.transpose() };
    gram.symmetric_eigenvalues().iter().copied().fold(0.0, f64::max).sqrt()
}
