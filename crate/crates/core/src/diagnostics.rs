//! Empirical checks of the local geometry around a planted solution:
//! factorization growth bounds, growth-order fits, norm-convexity ratios,
//! KKT residuals and the rate constants.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Error, Result};
use crate::generate::{gaussian_matrix, range_basis};
use crate::linalg::{
    adjoint_lin_op, orthogonal_complement, padded_procrustes_distance, pinv_solve, procrustes,
    svd_sorted, sym_eig_ascending, sym_from_factor, Factor, LinOpA,
};
use crate::problem::{
    jacobian_columns, min_norm_subgrad, objective_grad, phi_f_grad, Certificate, Instance,
    Objective, PenaltyParams,
};

/// Relative tolerance for certificate validation.
pub const CERT_TOL: f64 = 1e-8;
/// Slack on the factorization growth inequalities.
pub const BOUND_SLACK: f64 = 1e-10;
/// Below this `gamma_Q` the certificate is treated as dual degenerate.
pub const GAMMA_Q_FLOOR: f64 = 1e-12;

/// Checks `grad f(X*) + A*(y*) - Z* = 0`, `Z* >= 0`, `<Z*, X*> = 0` and
/// feasibility of `X*`, all relative to the data scale.
pub fn validate_certificate(inst: &Instance, cert: &Certificate) -> Result<()> {
    let n = inst.n;
    if cert.r_star.n() != n {
        return Err(dim_err("certificate R_star rows", n, cert.r_star.n()));
    }
    if cert.rank != cert.r_star.r() {
        return Err(dim_err("certificate rank", cert.r_star.r(), cert.rank));
    }
    if cert.y_star.len() != inst.constraints.k() {
        return Err(dim_err("certificate y_star", inst.constraints.k(), cert.y_star.len()));
    }
    if cert.z_star.n() != n {
        return Err(dim_err("certificate Z_star", n, cert.z_star.n()));
    }
    let x = cert.x_star();
    let res = inst.constraints.residual(&x)?.norm();
    let b_norm = inst.constraints.b().norm();
    if res > CERT_TOL * (1.0 + b_norm) {
        return Err(Error::Certificate(format!("X* infeasible, residual {res:e}")));
    }
    let grad = objective_grad(&inst.objective, &x);
    let ay = adjoint_lin_op(&inst.constraints, &cert.y_star)?;
    let stat = grad.add(&ay).sub(&cert.z_star).frobenius_norm();
    let scale = 1.0 + grad.frobenius_norm() + ay.frobenius_norm() + cert.z_star.frobenius_norm();
    if stat > CERT_TOL * scale {
        return Err(Error::Certificate(format!("stationarity residual {stat:e}")));
    }
    let z_norm = cert.z_star.frobenius_norm();
    let lmin = sym_eig_ascending(&cert.z_star).0[0];
    if lmin < -CERT_TOL * (1.0 + z_norm) {
        return Err(Error::Certificate(format!("Z* not PSD, min eigenvalue {lmin:e}")));
    }
    let comp = cert.z_star.inner(&x).abs();
    if comp > CERT_TOL * (1.0 + z_norm * x.frobenius_norm()) {
        return Err(Error::Certificate(format!("complementarity <Z*, X*> = {comp:e}")));
    }
    Ok(())
}

/// Orthonormal basis of `S^r` under the trace inner product.
fn sym_basis(r: usize) -> Vec<DMatrix<f64>> {
    let mut basis = Vec::with_capacity(r * (r + 1) / 2);
    for j in 0..r {
        let mut e = DMatrix::zeros(r, r);
        e[(j, j)] = 1.0;
        basis.push(e);
        for l in (j + 1)..r {
            let mut e = DMatrix::zeros(r, r);
            e[(j, l)] = std::f64::consts::FRAC_1_SQRT_2;
            e[(l, j)] = std::f64::consts::FRAC_1_SQRT_2;
            basis.push(e);
        }
    }
    basis
}

/// Dual non-degeneracy constant: smallest eigenvalue of
/// `W -> sum_i <Q1^T A_i Q1, W>^2` over `S^r`, with `r = q1.ncols()`.
pub fn gamma_q(constraints: &LinOpA, q1: &DMatrix<f64>) -> f64 {
    let basis = sym_basis(q1.ncols());
    let k = constraints.k();
    let mut coef = DMatrix::zeros(k, basis.len());
    for (i, a) in constraints.mats().iter().enumerate() {
        let reduced = q1.transpose() * a.as_matrix() * q1;
        for (j, e) in basis.iter().enumerate() {
            coef[(i, j)] = reduced.dot(e);
        }
    }
    let gram = coef.tr_mul(&coef);
    gram.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `||R R^T - R* R*^T||^2 >= 2(sqrt 2 - 1) sigma_r(R*)^2 ||R - R*||^2` with
/// `R*` Procrustes-aligned to `R`.
pub fn check_factor_bound(r: &Factor, r_star: &Factor) -> Result<BoundCheck> {
    let (_, dist) = procrustes(r, r_star)?;
    let sigma_r = svd_sorted(r_star.as_matrix()).1.iter().copied().fold(f64::INFINITY, f64::min);
    let lhs = psd_gap_squared(r, r_star);
    let rhs = 2.0 * (2f64.sqrt() - 1.0) * sigma_r * sigma_r * dist * dist;
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - BOUND_SLACK,
    })
}

/// `||U U^T - U* U*^T||^2 >= (2(sqrt 2 - 1) / 9r) ||U - U*||^4` after alignment.
pub fn check_overspec_bound(u: &Factor, u_star: &Factor) -> Result<BoundCheck> {
    let (_, dist) = procrustes(u, u_star)?;
    let width = u.r() as f64;
    let lhs = psd_gap_squared(u, u_star);
    let rhs = 2.0 * (2f64.sqrt() - 1.0) / (9.0 * width) * dist.powi(4);
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - BOUND_SLACK,
    })
}

/// `||U U^T - V V^T||_F^2` via `(U - V) V^T + V (U - V)^T + (U - V)(U - V)^T`,
/// which keeps precision when the factors are close.
fn psd_gap_squared(u: &Factor, v: &Factor) -> f64 {
    gap_matrix(v.as_matrix(), &(u.as_matrix() - v.as_matrix())).norm_squared()
}

/// `(V + D)(V + D)^T - V V^T`.
fn gap_matrix(v: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let vd = v * d.transpose();
    &vd + vd.transpose() + d * d.transpose()
}

/// Sampling directions for [`estimate_growth`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Directions {
    /// Random directions in the tangent space of the constraints.
    Tangent,
    /// Only the padded columns move, orthogonally to `range(R*)`.
    NewColumns,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthConfig {
    pub rank: usize,
    pub samples: usize,
    /// Radius band, multiplied by `1 + ||R*||_F`.
    pub radii: (f64, f64),
    pub directions: Directions,
    pub seed: u64,
}

impl GrowthConfig {
    pub fn new(rank: usize, samples: usize, seed: u64) -> Self {
        GrowthConfig {
            rank,
            samples,
            radii: (1e-4, 1e-1),
            directions: Directions::Tangent,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthReport {
    /// Slope of `log(phi_f - phi_f*)` against `log dist`.
    pub fitted_order: f64,
    pub fitted_constant: f64,
    pub sample_count: usize,
    /// Samples lost to retraction failure or a non-positive gap.
    pub dropped: usize,
    /// Absolute radius band used.
    pub radius_range: (f64, f64),
}

/// Feasible sample near the solution set.
struct Sample {
    u: Factor,
    dist: f64,
    /// `phi_f(U) - phi_f*`
    gap_f: f64,
    residual: DVector<f64>,
}

const RETRACT_STEPS: usize = 50;
const RETRACT_TOL: f64 = 1e-11;

/// Damped Gauss-Newton on `A(U U^T) - b` with minimum-norm steps.
fn retract(constraints: &LinOpA, u: &Factor) -> Option<Factor> {
    let (n, r) = u.shape();
    let tol = RETRACT_TOL * (1.0 + constraints.b().norm());
    let mut cur = u.clone();
    let mut res = constraints.residual(&sym_from_factor(&cur)).ok()?;
    for _ in 0..RETRACT_STEPS {
        if res.norm() <= tol {
            return Some(cur);
        }
        let jac = jacobian_columns(constraints, &cur).transpose() * 2.0;
        let (step, _) = pinv_solve(&jac, &(-&res));
        let step = Factor::from_vec(n, r, &step);
        let mut scale = 1.0;
        loop {
            let trial = cur.add(&step.scale(scale));
            let trial_res = constraints.residual(&sym_from_factor(&trial)).ok()?;
            if trial_res.norm() < res.norm() || scale < 1e-6 {
                cur = trial;
                res = trial_res;
                break;
            }
            scale *= 0.5;
        }
    }
    (res.norm() <= tol).then_some(cur)
}

/// Exact `f(X* + D) - f(X*)` split as `<grad f(X*), D>` plus the curvature part,
/// using `grad f(X*) = Z* - A*(y*)`.
fn objective_gap(inst: &Instance, cert: &Certificate, d: &DMatrix<f64>, residual: &DVector<f64>) -> f64 {
    let first = cert.z_star.as_matrix().dot(d) - cert.y_star.dot(residual);
    let second = match &inst.objective {
        Objective::Linear(_) => 0.0,
        Objective::QuadDistance(_) => 0.5 * d.norm_squared(),
        Objective::MatrixSensing { vectors, .. } => {
            let s: f64 = vectors.iter().map(|c| c.dot(&(d * c)).powi(2)).sum();
            0.5 * s / vectors.len() as f64
        }
    };
    first + second
}

fn padded_star(cert: &Certificate, rank: usize) -> Result<Factor> {
    if rank < cert.rank {
        return Err(Error::InvalidParameter {
            name: "rank",
            reason: format!("sampling rank {rank} below certificate rank {}", cert.rank),
        });
    }
    Ok(cert.r_star.pad_columns(rank))
}

fn log_radii(lo: f64, hi: f64, count: usize, i: usize) -> f64 {
    if count <= 1 {
        return lo;
    }
    let s = i as f64 / (count - 1) as f64;
    (lo.ln() + s * (hi.ln() - lo.ln())).exp()
}

fn check_band(radii: (f64, f64)) -> Result<()> {
    if !(radii.0 > 0.0 && radii.1 > radii.0) {
        return Err(Error::InvalidParameter {
            name: "radii",
            reason: format!("need 0 < lo < hi, got {radii:?}"),
        });
    }
    Ok(())
}

/// Random direction of unit norm, projected to the tangent space of the
/// constraints at `u_star` (or onto the new columns).
fn direction(
    rng: &mut ChaCha8Rng,
    inst: &Instance,
    cert: &Certificate,
    u_star: &Factor,
    mode: Directions,
) -> Result<DMatrix<f64>> {
    let (n, r) = u_star.shape();
    let mut d = gaussian_matrix(rng, n, r);
    match mode {
        Directions::Tangent => {
            let jac = jacobian_columns(&inst.constraints, u_star).transpose();
            let (corr, _) = pinv_solve(&jac, &(&jac * DVector::from_column_slice(d.as_slice())));
            let v = DVector::from_column_slice(d.as_slice()) - corr;
            d = DMatrix::from_column_slice(n, r, v.as_slice());
        }
        Directions::NewColumns => {
            if r == cert.rank {
                return Err(Error::InvalidParameter {
                    name: "directions",
                    reason: "new-column directions need rank above the certificate rank".into(),
                });
            }
            let q2 = orthogonal_complement(cert.r_star.as_matrix());
            d.columns_mut(0, cert.rank).fill(0.0);
            let tail = d.columns(cert.rank, r - cert.rank).into_owned();
            let projected = &q2 * (q2.transpose() * tail);
            d.columns_mut(cert.rank, r - cert.rank).copy_from(&projected);
        }
    }
    let nrm = d.norm();
    if nrm == 0.0 {
        return Err(Error::Sampling("degenerate sampling direction".into()));
    }
    Ok(d / nrm)
}

fn feasible_samples(
    inst: &Instance,
    cert: &Certificate,
    rank: usize,
    samples: usize,
    band: (f64, f64),
    mode: Directions,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Sample>, usize)> {
    let u_star = padded_star(cert, rank)?;
    let mut out = Vec::with_capacity(samples);
    let mut dropped = 0;
    for i in 0..samples {
        let radius = log_radii(band.0, band.1, samples, i);
        let d = direction(rng, inst, cert, &u_star, mode)? * radius;
        let trial = Factor::from_matrix_unchecked(u_star.as_matrix() + d);
        let Some(u) = retract(&inst.constraints, &trial) else {
            dropped += 1;
            continue;
        };
        out.push(sample_at(inst, cert, &u_star, u)?);
    }
    Ok((out, dropped))
}

fn sample_at(inst: &Instance, cert: &Certificate, u_star: &Factor, u: Factor) -> Result<Sample> {
    let diff = u.as_matrix() - u_star.as_matrix();
    let gap = gap_matrix(u_star.as_matrix(), &diff);
    let residual = inst.constraints.residual(&sym_from_factor(&u))?;
    let gap_f = objective_gap(inst, cert, &gap, &residual);
    let dist = padded_procrustes_distance(&u, &cert.r_star)?;
    Ok(Sample {
        u,
        dist,
        gap_f,
        residual,
    })
}

/// Least-squares line `y = a + p x`; returns `(p, a)`.
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let p = sxy / sxx;
    (p, my - p * mx)
}

/// Fits the growth order of `phi_f` over feasible points near the certificate.
pub fn estimate_growth(inst: &Instance, cert: &Certificate, cfg: &GrowthConfig) -> Result<GrowthReport> {
    check_band(cfg.radii)?;
    if cfg.samples < 10 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: format!("need at least 10, got {}", cfg.samples),
        });
    }
    let scale = 1.0 + cert.r_star.frobenius_norm();
    let band = (cfg.radii.0 * scale, cfg.radii.1 * scale);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (samples, mut dropped) =
        feasible_samples(inst, cert, cfg.rank, cfg.samples, band, cfg.directions, &mut rng)?;
    let mut xs = Vec::with_capacity(samples.len());
    let mut ys = Vec::with_capacity(samples.len());
    for s in &samples {
        if s.gap_f > 0.0 && s.dist > 0.0 {
            xs.push(s.dist.ln());
            ys.push(s.gap_f.ln());
        } else {
            dropped += 1;
        }
    }
    if xs.len() < 10 || 2 * xs.len() < cfg.samples {
        return Err(Error::Sampling(format!(
            "only {} of {} samples usable",
            xs.len(),
            cfg.samples
        )));
    }
    let (order, intercept) = fit_line(&xs, &ys);
    Ok(GrowthReport {
        fitted_order: order,
        fitted_constant: intercept.exp(),
        sample_count: xs.len(),
        dropped,
        radius_range: band,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityConfig {
    pub rank: usize,
    pub lambda: f64,
    pub samples: usize,
    pub radii: (f64, f64),
    pub seed: u64,
}

impl RegularityConfig {
    /// Penalty `2 ||y*|| + 1` and the default radius band.
    pub fn for_certificate(cert: &Certificate, samples: usize, seed: u64) -> Self {
        RegularityConfig {
            rank: cert.rank,
            lambda: 2.0 * cert.y_star.norm() + 1.0,
            samples,
            radii: (1e-4, 1e-1),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    /// `sup (phi - phi*) / (dist(0, subdiff phi) dist(x, S))`
    pub max_norm_convexity_ratio: f64,
    /// `sup dist(x, S) / dist(0, subdiff phi)`
    pub max_subreg_ratio: f64,
    pub feasible_samples: usize,
    pub infeasible_samples: usize,
    pub skipped: usize,
}

/// Norm-convexity and subdifferential-regularity ratios over feasible
/// (retracted) and infeasible (raw) points in the radius band.
pub fn regularity_ratios(inst: &Instance, cert: &Certificate, cfg: &RegularityConfig) -> Result<RegularityReport> {
    check_band(cfg.radii)?;
    let params = PenaltyParams::new(cfg.lambda)?;
    let scale = 1.0 + cert.r_star.frobenius_norm();
    let band = (cfg.radii.0 * scale, cfg.radii.1 * scale);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u_star = padded_star(cert, cfg.rank)?;
    let half = cfg.samples / 2;
    let (feasible, mut skipped) =
        feasible_samples(inst, cert, cfg.rank, cfg.samples - half, band, Directions::Tangent, &mut rng)?;
    let nfeas = feasible.len();
    let (n, r) = u_star.shape();
    let mut all = feasible;
    for i in 0..half {
        let radius = log_radii(band.0, band.1, half, i);
        let d = gaussian_matrix(&mut rng, n, r);
        let d = &d * (radius / d.norm());
        let u = Factor::from_matrix_unchecked(u_star.as_matrix() + d);
        all.push(sample_at(inst, cert, &u_star, u)?);
    }
    let ninfeas = all.len() - nfeas;
    let mut max_nc = 0.0_f64;
    let mut max_sr = 0.0_f64;
    for s in &all {
        let gap = s.gap_f + cfg.lambda * s.residual.norm();
        let g = min_norm_subgrad(inst, &s.u, &params)?.g.frobenius_norm();
        if g < 1e-14 || s.dist < 1e-14 {
            skipped += 1;
            continue;
        }
        max_nc = max_nc.max(gap / (g * s.dist));
        max_sr = max_sr.max(s.dist / g);
    }
    Ok(RegularityReport {
        max_norm_convexity_ratio: max_nc,
        max_subreg_ratio: max_sr,
        feasible_samples: nfeas,
        infeasible_samples: ninfeas,
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KktResidual {
    /// Multiplier in the certificate convention, so that `grad f(X) + A*(y_fit)`
    /// annihilates `R` as well as possible.
    pub y_fit: DVector<f64>,
    pub primal_res: f64,
    /// `min_y ||grad phi_f(R) + M_R y||`
    pub stat_res: f64,
}

pub fn kkt_residual(inst: &Instance, r: &Factor) -> Result<KktResidual> {
    let grad = phi_f_grad(inst, r)?.vec();
    let m = jacobian_columns(&inst.constraints, r);
    let (w, _) = pinv_solve(&m, &(-&grad));
    let stat_res = (&grad + &m * &w).norm();
    let primal_res = inst.constraints.residual(&sym_from_factor(r))?.norm();
    // grad phi_f = 2 (grad f) R and M_R y = (A* y) R, so the fitted w is 2 y.
    Ok(KktResidual {
        y_fit: w * 0.5,
        primal_res,
        stat_res,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaReport {
    pub kappa: f64,
    pub c: f64,
    pub gamma_q: f64,
    pub lambda_z: f64,
}

/// Over-specified growth constants for a linear objective.
pub fn kappa_c(inst: &Instance, cert: &Certificate) -> Result<KappaReport> {
    if !matches!(inst.objective, Objective::Linear(_)) {
        return Err(Error::WrongObjective {
            expected: "linear",
            found: inst.objective.kind_name(),
        });
    }
    let r = cert.rank;
    let q1 = range_basis(cert.r_star.as_matrix());
    let q2 = orthogonal_complement(cert.r_star.as_matrix());
    let gamma = gamma_q(&inst.constraints, &q1);
    if gamma < GAMMA_Q_FLOOR {
        return Err(Error::DualDegenerate(gamma));
    }
    let s = svd_sorted(cert.r_star.as_matrix()).1;
    let l1 = s[0] * s[0];
    let lr = s[r - 1] * s[r - 1];
    let cross: f64 = inst
        .constraints
        .mats()
        .iter()
        .map(|a| (q2.transpose() * a.as_matrix() * &q1).norm_squared())
        .sum();
    let kappa = 4.0 * l1 / lr * cross / gamma;
    let eig = sym_eig_ascending(&cert.z_star).0;
    let lambda_z = eig.get(r).copied().unwrap_or(0.0);
    Ok(KappaReport {
        kappa,
        c: 1.0 / (2.0 * kappa + 1.0),
        gamma_q: gamma,
        lambda_z,
    })
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive, got {v}"),
        });
    }
    Ok(())
}

/// `q = 1 - 1 / (9 + 40 l + 100 l^2 L beta / alpha)`.
pub fn predicted_rate(ell: f64, lipschitz: f64, beta: f64, alpha_phi: f64) -> Result<f64> {
    check_positive("ell", ell)?;
    check_positive("L", lipschitz)?;
    check_positive("beta", beta)?;
    check_positive("alpha_phi", alpha_phi)?;
    let denom = 9.0 + 40.0 * ell + 100.0 * ell * ell * lipschitz * beta / alpha_phi;
    Ok(1.0 - 1.0 / denom)
}

/// SDP form `q = 1 - 1 / (209 + 5000 (L_f + lambda ||A||) / alpha)`.
pub fn predicted_rate_sdp(lipschitz: f64, alpha_phi: f64) -> Result<f64> {
    check_positive("L", lipschitz)?;
    check_positive("alpha_phi", alpha_phi)?;
    Ok(1.0 - 1.0 / (209.0 + 5000.0 * lipschitz / alpha_phi))
}
