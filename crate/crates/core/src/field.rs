//! Vector and scalar fields on a chart, with optional analytic derivatives.
//!
//! Missing derivatives fall back to central finite differences: step
//! [`FD_STEP`] for first derivatives and [`FD_STEP_SECOND`] for second ones.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::Point;

/// Central-difference step for first derivatives.
pub const FD_STEP: f64 = 1e-5;
/// Central-difference step for second derivatives.
pub const FD_STEP_SECOND: f64 = 1e-4;

type VecFn = Arc<dyn Fn(&Point) -> DVector<f64> + Send + Sync>;
type MatFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;
type RealFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// A smooth vector field `x ↦ X(x)`. Jacobian entry `(i, j)` is `∂_j X^i`.
#[derive(Clone)]
pub struct VectorField {
    value: VecFn,
    jacobian: Option<MatFn>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl VectorField {
    pub fn new(value: impl Fn(&Point) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            jacobian: None,
        }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// Constant field.
    pub fn constant(v: DVector<f64>) -> Self {
        let n = v.len();
        Self::new(move |_| v.clone()).with_jacobian(move |_| DMatrix::zeros(n, n))
    }

    /// Coordinate field `∂_i` in an `n`-dimensional chart.
    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        Self::constant(e)
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    #[inline]
    pub fn value(&self, x: &Point) -> DVector<f64> {
        (self.value)(x)
    }

    pub fn jacobian(&self, x: &Point) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(x),
            None => self.fd_jacobian(x),
        }
    }

    pub fn fd_jacobian(&self, x: &Point) -> DMatrix<f64> {
        let n = x.len();
        let mut cols = Vec::with_capacity(n);
        let mut xp = x.clone();
        for j in 0..n {
            xp[j] = x[j] + FD_STEP;
            let plus = self.value(&xp);
            xp[j] = x[j] - FD_STEP;
            let minus = self.value(&xp);
            xp[j] = x[j];
            cols.push((plus - minus) / (2.0 * FD_STEP));
        }
        DMatrix::from_columns(&cols)
    }

    /// Pointwise product `φ X`.
    pub fn scaled_by(&self, phi: ScalarField) -> Self {
        let me = self.clone();
        let me2 = self.clone();
        let phi2 = phi.clone();
        Self::new(move |x| me.value(x) * phi.value(x)).with_jacobian(move |x| {
            let v = me2.value(x);
            let grad = phi2.gradient(x);
            me2.jacobian(x) * phi2.value(x) + v * grad.transpose()
        })
    }
}

/// A smooth scalar field with optional gradient and Hessian.
#[derive(Clone)]
pub struct ScalarField {
    value: RealFn,
    gradient: Option<VecFn>,
    hessian: Option<MatFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .finish()
    }
}

impl ScalarField {
    pub fn new(value: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&Point) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    /// The `i`-th chart coordinate `x ↦ x^i`.
    pub fn coordinate(n: usize, i: usize) -> Self {
        Self::new(move |x| x[i])
            .with_gradient(move |_| {
                let mut g = DVector::zeros(n);
                g[i] = 1.0;
                g
            })
            .with_hessian(move |_| DMatrix::zeros(n, n))
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.gradient.is_some() && self.hessian.is_some()
    }

    #[inline]
    pub fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Point) -> DVector<f64> {
        match &self.gradient {
            Some(g) => g(x),
            None => self.fd_gradient(x),
        }
    }

    pub fn hessian(&self, x: &Point) -> DMatrix<f64> {
        match (&self.hessian, &self.gradient) {
            (Some(h), _) => h(x),
            (None, Some(_)) => {
                // differentiate the analytic gradient once
                let n = x.len();
                let mut xp = x.clone();
                let mut h = DMatrix::zeros(n, n);
                for j in 0..n {
                    xp[j] = x[j] + FD_STEP;
                    let gp = self.gradient(&xp);
                    xp[j] = x[j] - FD_STEP;
                    let gm = self.gradient(&xp);
                    xp[j] = x[j];
                    h.set_column(j, &((gp - gm) / (2.0 * FD_STEP)));
                }
                (&h + h.transpose()) * 0.5
            }
            (None, None) => self.fd_hessian(x),
        }
    }

    pub fn fd_gradient(&self, x: &Point) -> DVector<f64> {
        let n = x.len();
        let mut xp = x.clone();
        DVector::from_fn(n, |j, _| {
            xp[j] = x[j] + FD_STEP;
            let p = self.value(&xp);
            xp[j] = x[j] - FD_STEP;
            let m = self.value(&xp);
            xp[j] = x[j];
            (p - m) / (2.0 * FD_STEP)
        })
    }

    pub fn fd_hessian(&self, x: &Point) -> DMatrix<f64> {
        let n = x.len();
        let h = FD_STEP_SECOND;
        let f0 = self.value(x);
        let mut out = DMatrix::zeros(n, n);
        let mut xp = x.clone();
        for i in 0..n {
            xp[i] = x[i] + h;
            let p = self.value(&xp);
            xp[i] = x[i] - h;
            let m = self.value(&xp);
            xp[i] = x[i];
            out[(i, i)] = (p - 2.0 * f0 + m) / (h * h);
            for j in (i + 1)..n {
                let mut eval = |si: f64, sj: f64| {
                    xp[i] = x[i] + si * h;
                    xp[j] = x[j] + sj * h;
                    let v = self.value(&xp);
                    xp[i] = x[i];
                    xp[j] = x[j];
                    v
                };
                let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}
