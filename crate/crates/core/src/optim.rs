//! Damped Newton maximization with backtracking line search.

use nalgebra::{DMatrix, DVector};

use crate::numerics::max_abs;

/// A smooth function to be maximized, with exact first and second derivatives.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn grad_hess(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Stop once the gradient max-norm falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    /// Negative Hessian at `x`.
    pub neg_hessian: DMatrix<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub enum NewtonFailure {
    NotConverged { last: DVector<f64>, grad_norm: f64, iterations: usize },
    Indefinite { at: DVector<f64> },
}

/// Solve `(A + lambda I) s = g` for the smallest `lambda` (from a short ladder)
/// that makes the shifted matrix positive definite.
fn damped_solve(neg_h: &DMatrix<f64>, g: &DVector<f64>) -> Option<(DVector<f64>, bool)> {
    if let Some(ch) = neg_h.clone().cholesky() {
        return Some((ch.solve(g), true));
    }
    let scale = (0..neg_h.nrows()).map(|i| neg_h[(i, i)].abs()).fold(1e-8, f64::max);
    let mut lambda = 1e-6 * scale;
    for _ in 0..30 {
        let mut shifted = neg_h.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += lambda;
        }
        if let Some(ch) = shifted.cholesky() {
            return Some((ch.solve(g), false));
        }
        lambda *= 10.0;
    }
    None
}

pub fn maximize<O: Objective + ?Sized>(
    obj: &O,
    x0: DVector<f64>,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome, NewtonFailure> {
    let mut x = x0;
    let mut f = obj.value(&x);
    if !f.is_finite() {
        // pull towards the origin until the objective is finite
        for _ in 0..60 {
            x *= 0.5;
            f = obj.value(&x);
            if f.is_finite() {
                break;
            }
        }
    }
    for it in 0..=cfg.max_iter {
        let (g, h) = obj.grad_hess(&x);
        let neg_h = -h;
        let gnorm = max_abs(&g);
        if gnorm < cfg.grad_tol {
            if neg_h.clone().cholesky().is_none() {
                return Err(NewtonFailure::Indefinite { at: x });
            }
            return Ok(NewtonOutcome {
                x,
                value: f,
                grad: g,
                neg_hessian: neg_h,
                iterations: it,
            });
        }
        if it == cfg.max_iter || !gnorm.is_finite() {
            return Err(NewtonFailure::NotConverged {
                last: x,
                grad_norm: gnorm,
                iterations: it,
            });
        }
        let Some((step, _pure)) = damped_solve(&neg_h, &g) else {
            return Err(NewtonFailure::NotConverged {
                last: x,
                grad_norm: gnorm,
                iterations: it,
            });
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &x + &step * t;
            let fc = obj.value(&cand);
            // the second clause admits steps whose predicted gain is below rounding noise
            if fc.is_finite()
                && (fc >= f + 1e-4 * t * slope || (slope * t < 1e-12 * (1.0 + f.abs()) && fc >= f - 1e-12 * (1.0 + f.abs())))
            {
                x = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(NewtonFailure::NotConverged {
                last: x,
                grad_norm: gnorm,
                iterations: it,
            });
        }
    }
    unreachable!("loop returns on its last iteration")
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        mean: DVector<f64>,
        prec: DMatrix<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.mean.len()
        }
        fn value(&self, x: &DVector<f64>) -> f64 {
            let d = x - &self.mean;
            -0.5 * (d.transpose() * &self.prec * &d)[(0, 0)]
        }
        fn grad_hess(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
            (-(&self.prec * (x - &self.mean)), -self.prec.clone())
        }
    }

    #[test]
    fn quadratic_converges_in_one_step() {
        let q = Quadratic {
            mean: DVector::from_vec(vec![1.5, -2.0, 0.25]),
            prec: DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]),
        };
        let out = maximize(&q, DVector::zeros(3), &NewtonConfig::default()).unwrap();
        assert!(out.iterations <= 2);
        assert!((out.x - &q.mean).amax() < 1e-12);
    }

    #[test]
    fn non_concave_start_still_finds_maximum() {
        // f(x) = -x^4/4 + x^2/2 - x has its maximum near x = -1.32
        struct Quartic;
        impl Objective for Quartic {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: &DVector<f64>) -> f64 {
                let v = x[0];
                -v.powi(4) / 4.0 + v * v / 2.0 - v
            }
            fn grad_hess(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
                let v = x[0];
                (DVector::from_element(1, -v.powi(3) + v - 1.0), DMatrix::from_element(1, 1, -3.0 * v * v + 1.0))
            }
        }
        let out = maximize(&Quartic, DVector::from_element(1, 0.1), &NewtonConfig::default()).unwrap();
        assert!((out.x[0] + 1.324_717_957_244_746).abs() < 1e-9);
    }

    #[test]
    fn unbounded_objective_reports_failure() {
        struct Linear;
        impl Objective for Linear {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: &DVector<f64>) -> f64 {
                x[0]
            }
            fn grad_hess(&self, _x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
                (DVector::from_element(1, 1.0), DMatrix::zeros(1, 1))
            }
        }
        let cfg = NewtonConfig { grad_tol: 1e-8, max_iter: 5 };
        assert!(matches!(
            maximize(&Linear, DVector::zeros(1), &cfg),
            Err(NewtonFailure::NotConverged { iterations: 5, .. })
        ));
    }
}
