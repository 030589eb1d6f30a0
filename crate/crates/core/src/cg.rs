use nalgebra::DVector;

/// Outcome of a conjugate gradient solve.
#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Conjugate gradient for a symmetric positive definite operator, stopping
/// when `||apply(x) - rhs|| <= tol`.
pub fn conjugate_gradient<F>(
    mut apply: F,
    rhs: &DVector<f64>,
    x0: Option<&DVector<f64>>,
    tol: f64,
    max_iter: usize,
) -> CgOutcome
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let mut x = match x0 {
        Some(x0) => x0.clone(),
        None => DVector::zeros(rhs.len()),
    };
    let mut r = if x0.is_some() { rhs - apply(&x) } else { rhs.clone() };
    let mut rr = r.norm_squared();
    if rr.sqrt() <= tol {
        return CgOutcome {
            x,
            iterations: 0,
            residual: rr.sqrt(),
            converged: true,
        };
    }
    let mut p = r.clone();
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return CgOutcome {
                x,
                iterations: it,
                residual: rr.sqrt(),
                converged: false,
            };
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_next = r.norm_squared();
        if rr_next.sqrt() <= tol {
            return CgOutcome {
                x,
                iterations: it,
                residual: rr_next.sqrt(),
                converged: true,
            };
        }
        let beta = rr_next / rr;
        p = &r + p * beta;
        rr = rr_next;
    }
    CgOutcome {
        x,
        iterations: max_iter,
        residual: rr.sqrt(),
        converged: false,
    }
}
