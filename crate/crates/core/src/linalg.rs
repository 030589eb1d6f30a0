//! Dense symmetric-matrix and factor arithmetic.
//!
//! Everything downstream works with three containers: [`SymMat`] for points
//! and data in the symmetric space, [`Factor`] for `n x r` Burer-Monteiro
//! factors (and their increments), and [`LinOpA`] for the equality
//! constraint operator `X -> (<A_1, X>, ..., <A_k, X>)`.
//!
//! Singular and eigen vectors are sign-normalized so that the entry of
//! largest magnitude is positive. Ties resolve to the lowest index.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{dim_err, Error, Result};

/// Relative threshold below which singular values are treated as zero.
pub const PINV_RTOL: f64 = 1e-10;

/// A dense symmetric matrix. Symmetry is exact: construction averages the
/// input with its transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMat(DMatrix<f64>);

impl SymMat {
    /// Symmetrizes `m` as `(m + m^T) / 2`.
    pub fn from_square(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(dim_err("SymMat", "square matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "dimension must be positive".into(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("SymMat"));
        }
        Ok(Self::symmetrize(m))
    }

    pub(crate) fn symmetrize(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut s = m;
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        SymMat(s)
    }

    pub fn zeros(n: usize) -> Self {
        SymMat(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMat(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMat(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Rank-one matrix `s * v v^T`.
    pub fn outer(v: &DVector<f64>, s: f64) -> Self {
        let m = v * v.transpose() * s;
        Self::symmetrize(m)
    }

    /// Builds from a row-major upper triangle (including the diagonal) of
    /// length `n (n + 1) / 2`.
    pub fn from_upper_triangle(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * (n + 1) / 2 {
            return Err(dim_err("upper triangle", n * (n + 1) / 2, data.len()));
        }
        let mut m = DMatrix::zeros(n, n);
        let mut it = data.iter();
        for i in 0..n {
            for j in i..n {
                let v = *it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self::from_square(m)
    }

    /// Row-major upper triangle including the diagonal.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &SymMat) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        SymMat(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        SymMat(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> SymMat {
        SymMat(&self.0 * s)
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &SymMat) -> SymMat {
        SymMat(&self.0 + &other.0 * s)
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }

    /// `S R` for a factor-shaped right operand.
    pub fn mul_factor(&self, r: &Factor) -> DMatrix<f64> {
        &self.0 * r.as_matrix()
    }
}

/// An `n x r` factor with `1 <= r <= n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor(DMatrix<f64>);

impl Factor {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let (n, r) = m.shape();
        if r == 0 || r > n {
            return Err(Error::InvalidParameter {
                name: "r",
                reason: format!("factor shape {n}x{r} needs 1 <= r <= n"),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Factor"));
        }
        Ok(Factor(m))
    }

    /// Row-major construction, mostly for tests and small fixtures.
    pub fn from_rows(n: usize, r: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * r {
            return Err(dim_err("Factor::from_rows", n * r, data.len()));
        }
        Self::new(DMatrix::from_row_slice(n, r, data))
    }

    pub fn zeros(n: usize, r: usize) -> Self {
        Factor(DMatrix::zeros(n, r))
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        Factor(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn r(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn inner(&self, other: &Factor) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn add(&self, other: &Factor) -> Factor {
        Factor(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Factor) -> Factor {
        Factor(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> Factor {
        Factor(&self.0 * s)
    }

    /// Right multiplication by an `r x r` matrix (the orthogonal group action).
    pub fn mul_right(&self, omega: &DMatrix<f64>) -> Factor {
        Factor(&self.0 * omega)
    }

    /// Appends zero columns up to width `r`. Returns a copy when already that wide.
    pub fn pad_columns(&self, r: usize) -> Factor {
        let (n, cur) = self.shape();
        if r <= cur {
            return self.clone();
        }
        let mut m = DMatrix::zeros(n, r);
        m.view_mut((0, 0), (n, cur)).copy_from(&self.0);
        Factor(m)
    }

    /// Column-major vectorization.
    pub fn vec(&self) -> DVector<f64> {
        DVector::from_column_slice(self.0.as_slice())
    }

    pub fn from_vec(n: usize, r: usize, v: &DVector<f64>) -> Factor {
        Factor(DMatrix::from_column_slice(n, r, v.as_slice()))
    }
}

/// The constraint operator `[A(X)]_i = <A_i, X>` with right-hand side `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinOpA {
    mats: Vec<SymMat>,
    b: DVector<f64>,
}

impl LinOpA {
    pub fn new(mats: Vec<SymMat>, b: DVector<f64>) -> Result<Self> {
        if mats.is_empty() {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: "at least one constraint required".into(),
            });
        }
        let n = mats[0].n();
        if let Some(bad) = mats.iter().find(|m| m.n() != n) {
            return Err(dim_err("LinOpA matrices", n, bad.n()));
        }
        if b.len() != mats.len() {
            return Err(dim_err("LinOpA b", mats.len(), b.len()));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("constraints.b"));
        }
        Ok(LinOpA { mats, b })
    }

    /// `diag(X) = 1` in dimension `n`.
    pub fn unit_diagonal(n: usize) -> Self {
        let mats = (0..n)
            .map(|i| {
                let mut d = vec![0.0; n];
                d[i] = 1.0;
                SymMat::from_diagonal(&d)
            })
            .collect();
        LinOpA {
            mats,
            b: DVector::from_element(n, 1.0),
        }
    }

    pub fn k(&self) -> usize {
        self.mats.len()
    }

    pub fn n(&self) -> usize {
        self.mats[0].n()
    }

    pub fn mats(&self) -> &[SymMat] {
        &self.mats
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Residual `A(X) - b`.
    pub fn residual(&self, x: &SymMat) -> Result<DVector<f64>> {
        Ok(apply_lin_op(self, x)? - &self.b)
    }

    /// Gram matrix `G_ij = <A_i, A_j>`, the matrix of `A A*`.
    pub fn gram(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut g = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = self.mats[i].inner(&self.mats[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }
}

/// An eigenpair with its residual `||S v - value v||_2`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigPair {
    pub value: f64,
    pub vector: DVector<f64>,
    pub residual: f64,
}

/// `R R^T`.
pub fn sym_from_factor(r: &Factor) -> SymMat {
    SymMat::symmetrize(r.as_matrix() * r.as_matrix().transpose())
}

pub fn apply_lin_op(a: &LinOpA, x: &SymMat) -> Result<DVector<f64>> {
    if x.n() != a.n() {
        return Err(dim_err("apply_lin_op", a.n(), x.n()));
    }
    Ok(DVector::from_iterator(
        a.k(),
        a.mats.iter().map(|ai| ai.inner(x)),
    ))
}

/// `A*(y) = sum_i y_i A_i`.
pub fn adjoint_lin_op(a: &LinOpA, y: &DVector<f64>) -> Result<SymMat> {
    if y.len() != a.k() {
        return Err(dim_err("adjoint_lin_op", a.k(), y.len()));
    }
    let n = a.n();
    let mut out = DMatrix::zeros(n, n);
    for (ai, &yi) in a.mats.iter().zip(y.iter()) {
        if yi != 0.0 {
            out += ai.as_matrix() * yi;
        }
    }
    Ok(SymMat(out))
}

/// The linearized constraint increment `2 <A_i R, D>`, equal to
/// `A(R D^T + D R^T)`.
pub fn lin_op_factored(a: &LinOpA, r: &Factor, d: &Factor) -> Result<DVector<f64>> {
    if r.shape() != d.shape() {
        return Err(dim_err(
            "lin_op_factored",
            format!("{:?}", r.shape()),
            format!("{:?}", d.shape()),
        ));
    }
    if r.n() != a.n() {
        return Err(dim_err("lin_op_factored", a.n(), r.n()));
    }
    Ok(DVector::from_iterator(
        a.k(),
        a.mats
            .iter()
            .map(|ai| 2.0 * (ai.as_matrix() * r.as_matrix()).dot(d.as_matrix())),
    ))
}

/// Operator norm of `X -> A(X)` (Frobenius to Euclidean), by power
/// iteration on the Gram matrix of `A A*`.
pub fn lin_op_norm(a: &LinOpA, tol: f64) -> Result<f64> {
    lin_op_norm_with(a, tol, 10_000)
}

pub fn lin_op_norm_with(a: &LinOpA, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: "must be positive".into(),
        });
    }
    let g = a.gram();
    let k = g.nrows();
    let scale = g.norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    // Deterministic start with every coordinate excited.
    let mut v = DVector::from_fn(k, |i, _| 1.0 + 1e-3 * (i as f64 + 1.0).sqrt());
    v /= v.norm();
    let mut estimate = 0.0;
    for it in 0..max_iter {
        let w = &g * &v;
        let mu = v.dot(&w);
        let resid = (&w - &v * mu).norm();
        estimate = mu;
        if resid <= tol * mu.abs().max(f64::MIN_POSITIVE) {
            return Ok(mu.max(0.0).sqrt());
        }
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        v = w / wn;
        if it + 1 == max_iter {
            return Err(Error::NonConvergence {
                method: "lin_op_norm",
                iterations: max_iter,
                estimate: mu.max(0.0).sqrt(),
                residual: resid,
            });
        }
    }
    Ok(estimate.max(0.0).sqrt())
}

/// Orthogonal Procrustes: `Omega = V U^T` from the SVD `R^T Q = U S V^T`,
/// minimizing `||R - Q Omega||_F`. Returns `(Omega, distance)`.
pub fn procrustes(r: &Factor, q: &Factor) -> Result<(DMatrix<f64>, f64)> {
    if r.shape() != q.shape() {
        return Err(dim_err(
            "procrustes",
            format!("{:?}", r.shape()),
            format!("{:?}", q.shape()),
        ));
    }
    let m = r.as_matrix().transpose() * q.as_matrix();
    let (u, _s, v) = svd_sorted(&m);
    let omega = &v * u.transpose();
    let dist = (r.as_matrix() - q.as_matrix() * &omega).norm();
    Ok((omega, dist))
}

/// Procrustes distance after padding the narrower factor with zero columns.
pub fn padded_procrustes_distance(r: &Factor, target: &Factor) -> Result<f64> {
    let width = r.r().max(target.r());
    let a = r.pad_columns(width);
    let b = target.pad_columns(width);
    Ok(procrustes(&a, &b)?.1)
}

/// Minimum eigenpair by shifted power iteration on `c I - S`, `c = ||S||_F + 1`.
///
/// Convergence: `residual <= tol * (1 + ||S||_F)`.
pub fn min_eigpair(s: &SymMat, tol: f64, max_iter: usize) -> Result<EigPair> {
    min_eigpair_from(s, tol, max_iter, None)
}

/// As [`min_eigpair`], optionally warm-started from `start`.
pub fn min_eigpair_from(
    s: &SymMat,
    tol: f64,
    max_iter: usize,
    start: Option<&DVector<f64>>,
) -> Result<EigPair> {
    let n = s.n();
    let fro = s.frobenius_norm();
    let shift = fro + 1.0;
    let target = tol * (1.0 + fro);
    let mut v = match start {
        Some(x) if x.len() == n && x.norm() > 0.0 => x / x.norm(),
        Some(x) if x.len() != n => return Err(dim_err("min_eigpair start", n, x.len())),
        _ => {
            let x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i as f64 + 1.0) * 0.7).sin());
            &x / x.norm()
        }
    };
    let sm = s.as_matrix();
    let mut best: Option<EigPair> = None;
    for _ in 0..max_iter.max(1) {
        let sv = sm * &v;
        let value = v.dot(&sv);
        let residual = (&sv - &v * value).norm();
        if best.as_ref().map_or(true, |b| residual < b.residual) {
            best = Some(EigPair {
                value,
                vector: v.clone(),
                residual,
            });
        }
        if residual <= target {
            let mut pair = EigPair {
                value,
                vector: v,
                residual,
            };
            fix_sign(pair.vector.as_mut_slice());
            return Ok(pair);
        }
        let w = &v * shift - sv;
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        v = w / wn;
    }
    let mut best = best.expect("at least one iteration");
    fix_sign(best.vector.as_mut_slice());
    Err(Error::EigenNonConvergence {
        iterations: max_iter,
        best: Box::new(best),
    })
}

/// Flips `v` so its largest-magnitude entry is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut idx = 0;
    let mut best = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v.get(idx).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Full eigendecomposition with eigenvalues ascending and sign-normalized
/// eigenvectors in the columns.
pub fn sym_eig_ascending(s: &SymMat) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(s.as_matrix().clone());
    let n = s.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
        fix_sign(&mut col);
        vectors.column_mut(dst).copy_from_slice(&col);
    }
    (values, vectors)
}

/// Thin SVD `m = U diag(s) V^T` with singular values descending and each
/// left singular vector sign-normalized (right vectors follow).
pub fn svd_sorted(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let p = svd.singular_values.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut uu = DMatrix::zeros(u.nrows(), p);
    let mut vv = DMatrix::zeros(vt.ncols(), p);
    let mut ss = DVector::zeros(p);
    for (dst, &src) in order.iter().enumerate() {
        let mut ucol: Vec<f64> = u.column(src).iter().copied().collect();
        let mut vcol: Vec<f64> = vt.row(src).iter().copied().collect();
        let before = ucol.clone();
        fix_sign(&mut ucol);
        if ucol != before {
            vcol.iter_mut().for_each(|x| *x = -*x);
        }
        uu.column_mut(dst).copy_from_slice(&ucol);
        vv.column_mut(dst).copy_from_slice(&vcol);
        ss[dst] = svd.singular_values[src];
    }
    (uu, ss, vv)
}

/// Least-squares solution `argmin_x ||m x - rhs||` of minimum norm, through
/// a thresholded pseudoinverse. Also returns the numerical rank.
pub fn pinv_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, usize) {
    let (u, s, v) = svd_sorted(m);
    let smax = s.iter().copied().fold(0.0, f64::max);
    let cutoff = PINV_RTOL * smax;
    let mut x = DVector::zeros(m.ncols());
    let mut rank = 0;
    for i in 0..s.len() {
        if s[i] > cutoff && s[i] > 0.0 {
            rank += 1;
            let coef = u.column(i).dot(rhs) / s[i];
            x.axpy(coef, &v.column(i), 1.0);
        }
    }
    (x, rank)
}

/// Orthonormal basis of the orthogonal complement of `range(r)`, using the
/// numerical rank of `r`.
pub fn orthogonal_complement(r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = r.nrows();
    let full = SVD::new(
        {
            // pad to square so that U is n x n
            let mut m = DMatrix::zeros(n, n);
            m.view_mut((0, 0), (n, r.ncols())).copy_from(r);
            m
        },
        true,
        false,
    );
    let u = full.u.expect("requested U");
    let s = &full.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&i| !(s[i] > PINV_RTOL * smax && s[i] > 0.0)).collect();
    let mut q2 = DMatrix::zeros(n, keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        let mut col: Vec<f64> = u.column(src).iter().copied().collect();
        fix_sign(&mut col);
        q2.column_mut(dst).copy_from_slice(&col);
    }
    q2
}
