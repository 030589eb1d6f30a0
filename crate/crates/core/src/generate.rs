//! Instance generators for the planted experiment families.
//!
//! All randomness comes from a `ChaCha8Rng` seeded with the 64-bit seed;
//! Gaussian draws use `rand_distr::StandardNormal` and are taken in the order
//! documented on each generator. Identical inputs give identical instances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diagnostics::gamma_q;
use crate::error::{Error, Result};
use crate::linalg::{
    adjoint_lin_op, apply_lin_op, orthogonal_complement, svd_sorted, sym_from_factor, Factor,
    LinOpA, SymMat,
};
use crate::problem::{Certificate, Instance, Objective};

/// Smallest accepted dual non-degeneracy constant for planted MaxCut.
pub const MIN_GAMMA_Q: f64 = 1e-6;
const MAX_RESAMPLES: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    MaxCutPlanted,
    Z2Sync { snr: f64 },
    RandomQuadratics { k: usize, lambda_z: f64 },
    MatrixSensing { samples: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::MaxCutPlanted => "maxcut",
            Family::Z2Sync { .. } => "z2sync",
            Family::RandomQuadratics { .. } => "quadratics",
            Family::MatrixSensing { .. } => "sensing",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub family: Family,
    pub n: usize,
    pub r_star: usize,
    pub seed: u64,
}

/// A generated instance, plus the planted sign vector for Z2 synchronization.
#[derive(Clone, Debug)]
pub struct Generated {
    pub instance: Instance,
    pub planted_signs: Option<Vec<f64>>,
}

pub fn generate(spec: &GenSpec) -> Result<Generated> {
    let instance = match spec.family {
        Family::MaxCutPlanted => gen_maxcut_planted(spec.n, spec.r_star, spec.seed)?,
        Family::Z2Sync { snr } => {
            let (instance, signs) = gen_z2_sync(spec.n, snr, spec.seed)?;
            return Ok(Generated {
                instance,
                planted_signs: Some(signs),
            });
        }
        Family::RandomQuadratics { k, lambda_z } => {
            gen_random_quadratics(spec.n, spec.r_star, k, lambda_z, spec.seed)?
        }
        Family::MatrixSensing { samples } => {
            gen_matrix_sensing(spec.n, spec.r_star, samples, spec.seed)?
        }
    };
    Ok(Generated {
        instance,
        planted_signs: None,
    })
}

pub(crate) fn gaussian_matrix(rng: &mut impl Rng, n: usize, m: usize) -> DMatrix<f64> {
    // column-major fill order
    DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
}

pub(crate) fn gaussian_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn normalize_rows(m: &mut DMatrix<f64>) -> Result<()> {
    for mut row in m.row_iter_mut() {
        let nr = row.norm();
        if nr == 0.0 {
            return Err(Error::Generation("zero row in planted factor".into()));
        }
        row /= nr;
    }
    Ok(())
}

/// Orthonormal basis of `range(R)` from the thin SVD.
pub(crate) fn range_basis(r: &DMatrix<f64>) -> DMatrix<f64> {
    svd_sorted(r).0
}

fn rank_check(r_star: usize, n: usize, upper: usize) -> Result<()> {
    if r_star == 0 || r_star > upper {
        return Err(Error::InvalidParameter {
            name: "r_star",
            reason: format!("need 1 <= r_star <= {upper} for n = {n}, got {r_star}"),
        });
    }
    Ok(())
}

/// Planted MaxCut (`diag(X) = 1`) with a full dual certificate.
///
/// Draw order per attempt: `R*` (n x r, column-major), then `y*` (n).
/// `C = Z* - Diag(y*)` with `Z* = Q2 Q2^T` on the complement of `range(R*)`.
pub fn gen_maxcut_planted(n: usize, r_star: usize, seed: u64) -> Result<Instance> {
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "planted MaxCut needs n >= 2".into(),
        });
    }
    rank_check(r_star, n, n - 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let constraints = LinOpA::unit_diagonal(n);
    let mut last_gamma = 0.0;
    for _ in 0..MAX_RESAMPLES {
        let mut r = gaussian_matrix(&mut rng, n, r_star);
        let y = gaussian_vector(&mut rng, n);
        if normalize_rows(&mut r).is_err() {
            continue;
        }
        let q1 = range_basis(&r);
        let q2 = orthogonal_complement(&r);
        if q2.ncols() != n - r_star {
            continue;
        }
        let gamma = gamma_q(&constraints, &q1);
        last_gamma = gamma;
        if !(gamma > MIN_GAMMA_Q) {
            continue;
        }
        let z = SymMat::symmetrize(&q2 * q2.transpose());
        let c = z.sub(&SymMat::from_diagonal(y.as_slice()));
        let cert = Certificate {
            r_star: Factor::new(r)?,
            y_star: y,
            z_star: z,
            rank: r_star,
        };
        return Instance::new(
            format!("maxcut-n{n}-r{r_star}-s{seed}"),
            Objective::Linear(c),
            constraints,
            Some(cert),
        );
    }
    Err(Error::Generation(format!(
        "dual non-degeneracy not reached after {MAX_RESAMPLES} draws (last gamma_Q = {last_gamma:e})"
    )))
}

/// Z2 synchronization: `C = -((snr/n) x x^T + W)` with GOE noise `W`.
///
/// Draw order: signs `x` (n uniform bits), then `W` upper triangle row by
/// row (diagonal first in each row).
pub fn gen_z2_sync(n: usize, snr: f64, seed: u64) -> Result<(Instance, Vec<f64>)> {
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "Z2 synchronization needs n >= 2".into(),
        });
    }
    if !(snr >= 0.0) || !snr.is_finite() {
        return Err(Error::InvalidParameter {
            name: "snr",
            reason: format!("must be non-negative, got {snr}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signs: Vec<f64> = (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let w = goe(&mut rng, n);
    let x = DVector::from_column_slice(&signs);
    let signal = &x * x.transpose() * (snr / n as f64);
    let c = SymMat::symmetrize(-(signal + w));
    let inst = Instance::new(
        format!("z2sync-n{n}-s{seed}"),
        Objective::Linear(c),
        LinOpA::unit_diagonal(n),
        None,
    )?;
    Ok((inst, signs))
}

/// Gaussian orthogonal ensemble scaled so off-diagonals have variance `1/n`
/// and diagonals `2/n`.
pub(crate) fn goe(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let sd_off = (1.0 / n as f64).sqrt();
    let sd_diag = (2.0 / n as f64).sqrt();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let g: f64 = rng.sample(StandardNormal);
            if i == j {
                w[(i, i)] = g * sd_diag;
            } else {
                w[(i, j)] = g * sd_off;
                w[(j, i)] = g * sd_off;
            }
        }
    }
    w
}

/// Random quadratics `min 1/2 ||X - Y||^2` with a planted rank-`r_star` optimum.
///
/// 1. `R*` Gaussian, `Z = lambda_z Q2 Q2^T`.
/// 2. `y ~ N(0, I_k)`, `A_i = a_i a_i^T` with Gaussian `a_i`, `b = A(X*)`.
/// 3. `Y = X* + A*(y) - Z`.
///
/// Draw order: `R*` (column-major), `y`, then `a_1, ..., a_k`.
pub fn gen_random_quadratics(
    n: usize,
    r_star: usize,
    k: usize,
    lambda_z: f64,
    seed: u64,
) -> Result<Instance> {
    rank_check(r_star, n, n)?;
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "at least one constraint required".into(),
        });
    }
    if !(lambda_z > 0.0) || !lambda_z.is_finite() {
        return Err(Error::InvalidParameter {
            name: "lambda_z",
            reason: format!("must be positive, got {lambda_z}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = gaussian_matrix(&mut rng, n, r_star);
    let y = gaussian_vector(&mut rng, k);
    let mats: Vec<SymMat> = (0..k)
        .map(|_| SymMat::outer(&gaussian_vector(&mut rng, n), 1.0))
        .collect();

    let r = Factor::new(r)?;
    let x_star = sym_from_factor(&r);
    let q2 = orthogonal_complement(r.as_matrix());
    let z = SymMat::symmetrize(&q2 * q2.transpose() * lambda_z);
    let placeholder = LinOpA::new(mats, DVector::zeros(k))?;
    let b = apply_lin_op(&placeholder, &x_star)?;
    let constraints = LinOpA::new(placeholder.mats().to_vec(), b)?;
    let target = x_star.add(&adjoint_lin_op(&constraints, &y)?).sub(&z);
    let cert = Certificate {
        r_star: r,
        y_star: y,
        z_star: z,
        rank: r_star,
    };
    Instance::new(
        format!("quadratics-n{n}-r{r_star}-k{k}-s{seed}"),
        Objective::QuadDistance(target),
        constraints,
        Some(cert),
    )
}

/// Low-rank matrix sensing over `diag(X) = 1` with `d_i = c_i^T X* c_i`.
///
/// Draw order: `R*` (column-major, rows then normalized), then `c_1..c_N`.
/// The certificate carries `y* = 0`, `Z* = 0`, valid since `grad f(X*) = 0`.
pub fn gen_matrix_sensing(n: usize, r_star: usize, samples: usize, seed: u64) -> Result<Instance> {
    rank_check(r_star, n, n)?;
    if samples == 0 {
        return Err(Error::InvalidParameter {
            name: "N",
            reason: "at least one measurement required".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = gaussian_matrix(&mut rng, n, r_star);
    normalize_rows(&mut r)?;
    let vectors: Vec<DVector<f64>> = (0..samples).map(|_| gaussian_vector(&mut rng, n)).collect();
    let r = Factor::new(r)?;
    let x_star = sym_from_factor(&r);
    let d = DVector::from_iterator(samples, vectors.iter().map(|c| c.dot(&x_star.mul_vec(c))));
    let cert = Certificate {
        r_star: r,
        y_star: DVector::zeros(n),
        z_star: SymMat::zeros(n),
        rank: r_star,
    };
    Instance::new(
        format!("sensing-n{n}-r{r_star}-N{samples}-s{seed}"),
        Objective::MatrixSensing { vectors, d },
        LinOpA::unit_diagonal(n),
        Some(cert),
    )
}
