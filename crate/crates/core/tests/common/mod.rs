//! Helpers shared by the integration tests.
#![allow(dead_code)]

use lowrank_sdp::{Factor, SymMat};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gauss(rng))
}

pub fn gauss_mat(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| gauss(rng))
}

pub fn gauss_factor(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Factor {
    Factor::new(gauss_mat(rng, n, r)).unwrap()
}

pub fn gauss_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMat {
    SymMat::from_square(gauss_mat(rng, n, n)).unwrap()
}

/// Haar-ish orthogonal matrix from the QR of a Gaussian matrix.
pub fn orthogonal(rng: &mut ChaCha8Rng, r: usize) -> DMatrix<f64> {
    gauss_mat(rng, r, r).qr().q()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Central difference of `f` at `x` along `dir`.
pub fn central_diff(f: impl Fn(&DMatrix<f64>) -> f64, x: &DMatrix<f64>, dir: &DMatrix<f64>, h: f64) -> f64 {
    (f(&(x + dir * h)) - f(&(x - dir * h))) / (2.0 * h)
}

pub fn to_f64_slice(m: &DMatrix<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

use lowrank_sdp::linalg::{apply_lin_op, sym_from_factor};
use lowrank_sdp::problem::objective_value;
use lowrank_sdp::Instance;

/// `R D^T + D R^T` built densely.
pub fn lift(r: &Factor, d: &DMatrix<f64>) -> DMatrix<f64> {
    let rd = r.as_matrix() * d.transpose();
    &rd + rd.transpose()
}

fn basis_factor(n: usize, r: usize, j: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, r);
    e[(j % n, j / n)] = 1.0;
    e
}

/// Dense `k x nr` matrix of `D -> A(R D^T + D R^T)` in column-major `vec(D)` order.
pub fn dense_graph(inst: &Instance, r: &Factor) -> DMatrix<f64> {
    let (n, rr) = r.shape();
    let k = inst.constraints.k();
    let mut m = DMatrix::zeros(k, n * rr);
    for j in 0..n * rr {
        let e = basis_factor(n, rr, j);
        let col = apply_lin_op(&inst.constraints, &SymMat::from_square(lift(r, &e)).unwrap()).unwrap();
        m.set_column(j, &col);
    }
    m
}

/// The smooth model block evaluated from scratch:
/// `f(R R^T + R D^T + D R^T) + ||D||^2 / (2t)`.
pub fn smooth_model(inst: &Instance, r: &Factor, t: f64, d: &DMatrix<f64>) -> f64 {
    let x = sym_from_factor(r).as_matrix() + lift(r, d);
    objective_value(&inst.objective, &SymMat::from_square(x).unwrap()) + 0.5 * d.norm_squared() / t
}

pub fn model_value_dense(inst: &Instance, r: &Factor, t: f64, lambda: f64, d: &DMatrix<f64>) -> f64 {
    let x = sym_from_factor(r);
    let r0 = inst.constraints.residual(&x).unwrap();
    let m = dense_graph(inst, r);
    let v = DVector::from_column_slice(d.as_slice());
    smooth_model(inst, r, t, d) + lambda * (r0 + m * v).norm()
}

/// Exact quadratic `s(D) = c + g^T vec(D) + vec(D)^T H vec(D) / 2` recovered
/// from function values with unit steps (exact for quadratic `s`).
pub struct DenseQuadratic {
    pub c: f64,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
}

pub fn dense_quadratic(s: impl Fn(&DMatrix<f64>) -> f64, n: usize, r: usize) -> DenseQuadratic {
    let dim = n * r;
    let zero = DMatrix::zeros(n, r);
    let c = s(&zero);
    let single: Vec<f64> = (0..dim).map(|i| s(&basis_factor(n, r, i))).collect();
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let e = basis_factor(n, r, i) + basis_factor(n, r, j);
            let v = s(&e) - single[i] - single[j] + c;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let g = DVector::from_fn(dim, |i, _| single[i] - c - 0.5 * h[(i, i)]);
    DenseQuadratic { c, g, h }
}

/// Minimizer of `s(D) + lambda ||r0 + M vec(D)||` for a strongly convex
/// quadratic `s`, by projected gradient ascent on the dual ball
/// `||u|| <= lambda` for a fixed number of iterations.
pub fn dual_ascent_oracle(q: &DenseQuadratic, m: &DMatrix<f64>, r0: &DVector<f64>, lambda: f64, iters: usize) -> DVector<f64> {
    let hinv = q.h.clone().try_inverse().expect("strongly convex model");
    let primal = |u: &DVector<f64>| -(&hinv * (&q.g + m.transpose() * u));
    let gram = m * &hinv * m.transpose();
    let lip = gram.symmetric_eigenvalues().max().max(1e-300);
    let step = 1.0 / lip;
    let base = r0 - m * (&hinv * &q.g);
    let mut u = DVector::zeros(m.nrows());
    let mut gu = DVector::zeros(m.nrows());
    for _ in 0..iters {
        // dual gradient: r0 + M D(u)
        gram.mul_to(&u, &mut gu);
        u.axpy(step, &base, 1.0);
        u.axpy(-step, &gu, 1.0);
        let nu = u.norm();
        if nu > lambda {
            u *= lambda / nu;
        }
    }
    primal(&u)
}
