//! Affine connections in a chart.
//!
//! Christoffel symbols follow `∇_{∂_j} ∂_k = Γ^i_{jk} ∂_i` and are stored as a
//! [`Tensor3`] indexed `(i, j, k)`. No symmetry is assumed.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geodesics::{rk4_step, step_count};
use crate::srgeom::SubRiemannianStructure;
use crate::tensor::Tensor3;
use crate::{Point, Tangent};

/// Central-difference step for derivatives of Christoffel symbols.
pub const CHRISTOFFEL_FD_STEP: f64 = 1e-4;
/// Predicate tolerance when all inputs carry analytic derivatives.
pub const TOL_ANALYTIC: f64 = 1e-8;
/// Predicate tolerance when finite differences are involved.
pub const TOL_FD: f64 = 1e-5;
/// Number of quasi-random points used by the sampled predicates.
pub const DEFAULT_SAMPLE_COUNT: usize = 100;

type TensorFn = Arc<dyn Fn(&Point) -> Tensor3 + Send + Sync>;
type TensorListFn = Arc<dyn Fn(&Point) -> Vec<Tensor3> + Send + Sync>;
type MatFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;
type MatListFn = Arc<dyn Fn(&Point) -> Vec<DMatrix<f64>> + Send + Sync>;
type MatGridFn = Arc<dyn Fn(&Point) -> Vec<Vec<DMatrix<f64>>> + Send + Sync>;

#[derive(Clone)]
pub struct AffineConnection {
    label: String,
    domain: Domain,
    christoffels: TensorFn,
    derivatives: Option<TensorListFn>,
    analytic: bool,
}

impl fmt::Debug for AffineConnection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineConnection")
            .field("label", &self.label)
            .field("n", &self.dim())
            .field("analytic", &self.analytic)
            .finish()
    }
}

impl AffineConnection {
    /// `analytic` declares whether the symbols are exact (no finite differences inside).
    pub fn new(
        label: impl Into<String>,
        domain: Domain,
        analytic: bool,
        christoffels: impl Fn(&Point) -> Tensor3 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            domain,
            christoffels: Arc::new(christoffels),
            derivatives: None,
            analytic,
        }
    }

    /// Supplies `∂_b Γ` as a list indexed by `b`.
    pub fn with_derivatives(mut self, d: impl Fn(&Point) -> Vec<Tensor3> + Send + Sync + 'static) -> Self {
        self.derivatives = Some(Arc::new(d));
        self
    }

    /// `Γ ≡ 0`.
    pub fn flat(domain: Domain) -> Self {
        let n = domain.dim();
        Self::new("flat", domain, true, move |_| Tensor3::zeros(n))
            .with_derivatives(move |_| vec![Tensor3::zeros(n); n])
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn is_analytic(&self) -> bool {
        self.analytic
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.derivatives.is_some()
    }

    fn check(&self, x: &Point) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if !self.domain.contains(x) {
            return Err(Error::OutOfDomain {
                point: x.iter().copied().collect(),
            });
        }
        Ok(())
    }

    pub fn christoffels(&self, x: &Point) -> Result<Tensor3> {
        self.check(x)?;
        let t = (self.christoffels)(x);
        if !t.is_finite() {
            return Err(Error::SingularFrame { condition: f64::INFINITY });
        }
        Ok(t)
    }

    #[inline]
    pub(crate) fn christoffels_unchecked(&self, x: &Point) -> Tensor3 {
        (self.christoffels)(x)
    }

    /// `∂_b Γ^i_{jk}` as a list over `b`; central differences when not supplied.
    pub fn christoffel_derivatives(&self, x: &Point) -> Result<Vec<Tensor3>> {
        self.check(x)?;
        Ok(self.christoffel_derivatives_unchecked(x))
    }

    pub(crate) fn christoffel_derivatives_unchecked(&self, x: &Point) -> Vec<Tensor3> {
        if let Some(d) = &self.derivatives {
            return d(x);
        }
        let h = CHRISTOFFEL_FD_STEP;
        let mut xp = x.clone();
        (0..x.len())
            .map(|b| {
                xp[b] = x[b] + h;
                let plus = (self.christoffels)(&xp);
                xp[b] = x[b] - h;
                let minus = (self.christoffels)(&xp);
                xp[b] = x[b];
                plus.sub(&minus).scaled(0.5 / h)
            })
            .collect()
    }

    /// `T^i_{jk} = Γ^i_{jk} − Γ^i_{kj}`.
    pub fn torsion(&self, x: &Point) -> Result<Tensor3> {
        Ok(torsion_of(&self.christoffels(x)?))
    }

    /// `∇̂_X Y = ∇_X Y − T(X, Y)`, i.e. `Γ̂^i_{jk} = Γ^i_{kj}`.
    pub fn adjoint(&self) -> Self {
        let base = self.christoffels.clone();
        let derivatives = self.derivatives.clone().map(|d| -> TensorListFn {
            Arc::new(move |x: &Point| d(x).iter().map(Tensor3::transpose_last).collect())
        });
        let label = match self.label.strip_prefix("adjoint(").and_then(|s| s.strip_suffix(')')) {
            Some(inner) => inner.to_string(),
            None => format!("adjoint({})", self.label),
        };
        Self {
            label,
            domain: self.domain.clone(),
            christoffels: Arc::new(move |x| base(x).transpose_last()),
            derivatives,
            analytic: self.analytic,
        }
    }

    /// `(∇_X Y)^i = X^j ∂_j Y^i + Γ^i_{jk} X^j Y^k`.
    pub fn covariant_derivative(&self, x: &Point, a: &VectorField, b: &VectorField) -> Result<Tangent> {
        let gamma = self.christoffels(x)?;
        let xa = a.value(x);
        Ok(b.jacobian(x) * &xa + gamma.contract(&xa, &b.value(x)))
    }

    /// Index-free `Γ(u)` with `Γ(u)^k_j = u^i Γ^k_{ij}`.
    pub fn gamma_of(&self, x: &Point, u: &Tangent) -> Result<DMatrix<f64>> {
        Ok(self.christoffels(x)?.contract_middle(u))
    }
}

/// `T^i_{jk} = Γ^i_{jk} − Γ^i_{kj}` from a Christoffel array.
pub fn torsion_of(gamma: &Tensor3) -> Tensor3 {
    gamma.sub(&gamma.transpose_last())
}

/// Outcome of a sampled predicate: `holds` iff `residual ≤ tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredicateReport {
    pub holds: bool,
    pub residual: f64,
    pub tol: f64,
}

impl PredicateReport {
    fn new(residual: f64, tol: f64) -> Self {
        Self {
            holds: residual <= tol,
            residual,
            tol,
        }
    }
}

/// Tolerance matched to the derivative sources of `S` and `∇`.
pub fn default_tolerance(s: &SubRiemannianStructure, conn: &AffineConnection) -> f64 {
    if s.has_analytic_jacobians() && conn.is_analytic() {
        TOL_ANALYTIC
    } else {
        TOL_FD
    }
}

/// Default sample of the structure's domain.
pub fn default_sample_points(s: &SubRiemannianStructure) -> Vec<Point> {
    s.domain().quasi_random_points(DEFAULT_SAMPLE_COUNT)
}

fn compatibility_residual_at(conn: &AffineConnection, s: &SubRiemannianStructure, x: &Point) -> Result<f64> {
    let w = s.full_frame_matrix(x)?;
    let gamma = conn.christoffels(x)?;
    let lu = w.lu();
    let (n, k) = (s.n(), s.k());
    let jacs: Vec<DMatrix<f64>> = s.horizontal_frame().iter().map(|e| e.jacobian(x)).collect();
    let values: Vec<DVector<f64>> = s.horizontal_frame().iter().map(|e| e.value(x)).collect();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let gj = gamma.slice_middle(j);
        let coeffs: Vec<DVector<f64>> = (0..k)
            .map(|a| {
                let nabla = jacs[a].column(j) + &gj * &values[a];
                lu.solve(&nabla).ok_or(Error::SingularFrame { condition: f64::INFINITY })
            })
            .collect::<Result<_>>()?;
        for a in 0..k {
            // complement part of ∇_{∂_j} E_a
            worst = worst.max(coeffs[a].rows(k, n - k).amax());
            for b in a..k {
                // h(∇_j E_a, E_b) + h(E_a, ∇_j E_b)
                worst = worst.max((coeffs[a][b] + coeffs[b][a]).abs());
            }
        }
    }
    Ok(worst)
}

/// Compatibility: `∇_{∂_j} E_a` stays horizontal and the frame stays h-orthonormal.
pub fn is_compatible(
    conn: &AffineConnection,
    s: &SubRiemannianStructure,
    points: &[Point],
    tol: f64,
) -> Result<PredicateReport> {
    let mut worst: f64 = 0.0;
    for x in points {
        worst = worst.max(compatibility_residual_at(conn, s, x)?);
    }
    Ok(PredicateReport::new(worst, tol))
}

/// Normality, checked as compatibility of the adjoint.
pub fn is_normal(
    conn: &AffineConnection,
    s: &SubRiemannianStructure,
    points: &[Point],
    tol: f64,
) -> Result<PredicateReport> {
    is_compatible(&conn.adjoint(), s, points, tol)
}

/// Horizontal coefficients of `T(E_a, E_b)` vanish for all horizontal pairs.
pub fn horizontal_torsion_is_vertical(
    conn: &AffineConnection,
    s: &SubRiemannianStructure,
    points: &[Point],
    tol: f64,
) -> Result<PredicateReport> {
    let k = s.k();
    let mut worst: f64 = 0.0;
    for x in points {
        let w = s.full_frame_matrix(x)?;
        let t = conn.torsion(x)?;
        let lu = w.lu();
        let e: Vec<DVector<f64>> = s.horizontal_frame().iter().map(|f| f.value(x)).collect();
        for a in 0..k {
            for b in (a + 1)..k {
                let c = lu
                    .solve(&t.contract(&e[a], &e[b]))
                    .ok_or(Error::SingularFrame { condition: f64::INFINITY })?;
                worst = worst.max(c.rows(0, k).amax());
            }
        }
    }
    Ok(PredicateReport::new(worst, tol))
}

/// Dynamic normality check: integrates `∇_{α^♯} α = 0` together with
/// `ẋ = α^♯` and compares against the Hamiltonian flow from the same
/// initial covector. Returns the largest deviation in `(x, α)` over `[0, T]`.
pub fn normal_dynamic_residual(
    conn: &AffineConnection,
    s: &SubRiemannianStructure,
    x0: &Point,
    p0: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    let n = s.n();
    let steps = step_count(horizon, dt)?;
    let h = horizon / steps as f64;
    let pack = |x: &Point, p: &DVector<f64>| {
        let mut y = DVector::zeros(2 * n);
        y.rows_mut(0, n).copy_from(x);
        y.rows_mut(n, n).copy_from(p);
        y
    };
    let autoparallel = |y: &DVector<f64>| {
        let x: Point = y.rows(0, n).into_owned();
        let a: DVector<f64> = y.rows(n, n).into_owned();
        let v = s.cometric_unchecked(&x) * &a;
        // α̇_k = Γ^i_{jk} ẋ^j α_i
        let da = conn.christoffels_unchecked(&x).contract_middle(&v).tr_mul(&a);
        pack(&v, &da)
    };
    let hamilton = |y: &DVector<f64>| {
        let x: Point = y.rows(0, n).into_owned();
        let (dx, dp) = s.hamiltonian_rhs(&x, &y.rows(n, n).into_owned());
        pack(&dx, &dp)
    };
    s.check_domain(x0)?;
    let mut ya = pack(x0, p0);
    let mut yh = ya.clone();
    let mut worst: f64 = 0.0;
    for step in 1..=steps {
        ya = rk4_step(&ya, h, autoparallel);
        yh = rk4_step(&yh, h, hamilton);
        let x: Point = yh.rows(0, n).into_owned();
        if !s.domain().contains(&x) {
            return Err(Error::LeftDomain {
                time: step as f64 * h,
                last: x.iter().copied().collect(),
            });
        }
        worst = worst.max((&ya - &yh).amax());
    }
    Ok(worst)
}

/// Connection making every frame field parallel: `Γ(∂_j) = −(∂_j W) W⁻¹`.
pub fn frame_parallel_connection(s: &SubRiemannianStructure) -> AffineConnection {
    let me = s.clone();
    let n = s.n();
    AffineConnection::new("frame-parallel", s.domain().clone(), s.has_analytic_jacobians(), move |x| {
        let w = me.frame_unchecked(x);
        let Some(w_inv) = w.try_inverse() else {
            return Tensor3::from_fn(n, |_, _, _| f64::NAN);
        };
        let jacs: Vec<DMatrix<f64>> = me.frame_fields().map(|f| f.jacobian(x)).collect();
        let mut t = Tensor3::zeros(n);
        for j in 0..n {
            let dw = DMatrix::from_fn(n, n, |i, a| jacs[a][(i, j)]);
            let m = -(dw * &w_inv);
            for i in 0..n {
                for kk in 0..n {
                    t.set(i, j, kk, m[(i, kk)]);
                }
            }
        }
        t
    })
}

/// Skew correction of a compatible reference connection `∇′` so that the
/// horizontal part of `T(H, H)` vanishes; the result stays compatible.
///
/// With `T′_H = pr_H T′`, the correction on horizontal arguments is
/// `h(κ(X)Y₁, Y₂) = ½(−h(T′_H(X,Y₁),Y₂) + h(T′_H(Y₁,Y₂),pr_H X) + h(T′_H(X,Y₂),Y₁))`
/// and it is extended by zero on the complement.
pub fn kappa_correction(s: &SubRiemannianStructure, reference: &AffineConnection) -> Result<AffineConnection> {
    let points = default_sample_points(s);
    let tol = default_tolerance(s, reference);
    let report = is_compatible(reference, s, &points, tol)?;
    if !report.holds {
        return Err(Error::NotCompatibleInput {
            residual: report.residual,
        });
    }
    let me = s.clone();
    let base = reference.clone();
    let label = format!("kappa({})", reference.label());
    Ok(AffineConnection::new(label, s.domain().clone(), reference.is_analytic(), move |x| {
        let gamma = base.christoffels_unchecked(x);
        match kappa_term(&me, &gamma, x) {
            Some(kappa) => gamma.plus(&kappa),
            None => Tensor3::from_fn(me.n(), |_, _, _| f64::NAN),
        }
    }))
}

/// Coordinate form of `κ̃`: entry `(i, j, k)` is `(κ̃(∂_j) ∂_k)^i`.
fn kappa_term(s: &SubRiemannianStructure, gamma: &Tensor3, x: &Point) -> Option<Tensor3> {
    let (n, k) = (s.n(), s.k());
    let w = s.frame_unchecked(x);
    let w_inv = w.clone().try_inverse()?;
    let e = w.columns(0, k).into_owned();
    let t = torsion_of(gamma);
    // h(T′_H(X, Y), E_c) is the c-th horizontal frame coefficient of T′(X, Y)
    let th = |a: &DVector<f64>, b: &DVector<f64>| -> DVector<f64> { (&w_inv * t.contract(a, b)).rows(0, k).into_owned() };
    let ecols: Vec<DVector<f64>> = (0..k).map(|a| e.column(a).into_owned()).collect();
    let thee: Vec<Vec<DVector<f64>>> = (0..k).map(|b| (0..k).map(|c| th(&ecols[b], &ecols[c])).collect()).collect();
    let horizontal_rows = w_inv.rows(0, k).into_owned();
    let mut out = Tensor3::zeros(n);
    for j in 0..n {
        let mut dj = DVector::zeros(n);
        dj[j] = 1.0;
        let pr_dj = horizontal_rows.column(j).into_owned();
        let tdj: Vec<DVector<f64>> = (0..k).map(|b| th(&dj, &ecols[b])).collect();
        let kj = DMatrix::from_fn(k, k, |c, b| 0.5 * (-tdj[b][c] + thee[b][c].dot(&pr_dj) + tdj[c][b]));
        let m = &e * kj * &horizontal_rows;
        for i in 0..n {
            for kk in 0..n {
                out.set(i, j, kk, m[(i, kk)]);
            }
        }
    }
    Some(out)
}

/// Riemannian metric `g_{ij}` in a chart, with its first and optionally second derivatives.
#[derive(Clone)]
pub struct RiemannianMetric {
    domain: Domain,
    metric: MatFn,
    first: MatListFn,
    second: Option<MatGridFn>,
}

impl fmt::Debug for RiemannianMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RiemannianMetric")
            .field("n", &self.domain.dim())
            .field("second_derivatives", &self.second.is_some())
            .finish()
    }
}

impl RiemannianMetric {
    /// `first(x)[b] = ∂_b g`.
    pub fn new(
        domain: Domain,
        metric: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
        first: impl Fn(&Point) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            domain,
            metric: Arc::new(metric),
            first: Arc::new(first),
            second: None,
        }
    }

    /// `second(x)[b][c] = ∂_b ∂_c g`.
    pub fn with_second_derivatives(
        mut self,
        second: impl Fn(&Point) -> Vec<Vec<DMatrix<f64>>> + Send + Sync + 'static,
    ) -> Self {
        self.second = Some(Arc::new(second));
        self
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn metric(&self, x: &Point) -> DMatrix<f64> {
        (self.metric)(x)
    }

    pub fn first_derivatives(&self, x: &Point) -> Vec<DMatrix<f64>> {
        (self.first)(x)
    }

    /// `‖Fᵀ g F − Id‖∞`, or with `A` the membership residual of `F A⁻¹`.
    pub fn frame_residual(&self, x: &Point, f: &DMatrix<f64>, anisotropy: Option<&DMatrix<f64>>) -> Result<f64> {
        let g = self.metric(x);
        match anisotropy {
            None => Ok(crate::linalg::orthonormality_residual(&g, f)),
            Some(a) => {
                let a_inv = a
                    .clone()
                    .try_inverse()
                    .ok_or(Error::InvalidConfig("anisotropy matrix is singular".into()))?;
                Ok(crate::linalg::orthonormality_residual(&g, &(f * a_inv)))
            }
        }
    }

    /// Levi-Civita connection, `Γ^i_{jk} = ½ g^{il}(∂_j g_{lk} + ∂_k g_{lj} − ∂_l g_{jk})`.
    /// Carries analytic derivatives when second derivatives of `g` are known.
    pub fn levi_civita(&self) -> AffineConnection {
        let me = self.clone();
        let conn = AffineConnection::new("levi-civita", self.domain.clone(), true, move |x| {
            let g_inv = me.metric(x).try_inverse().unwrap_or_else(|| DMatrix::from_element(me.dim(), me.dim(), f64::NAN));
            levi_civita_from(&g_inv, &me.first_derivatives(x))
        });
        match &self.second {
            None => conn,
            Some(second) => {
                let me = self.clone();
                let second = second.clone();
                conn.with_derivatives(move |x| {
                    let n = me.dim();
                    let g_inv = me.metric(x).try_inverse().unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
                    let dg = me.first_derivatives(x);
                    let ddg = second(x);
                    (0..n)
                        .map(|b| {
                            let dg_inv = -(&g_inv * &dg[b] * &g_inv);
                            levi_civita_from(&dg_inv, &dg).plus(&levi_civita_from(&g_inv, &ddg[b]))
                        })
                        .collect()
                })
            }
        }
    }
}

/// `½ m^{il}(d_j g_{lk} + d_k g_{lj} − d_l g_{jk})`, linear in both `m` and `d`.
fn levi_civita_from(m: &DMatrix<f64>, d: &[DMatrix<f64>]) -> Tensor3 {
    let n = m.nrows();
    Tensor3::from_fn(n, |i, j, k| {
        0.5 * (0..n)
            .map(|l| m[(i, l)] * (d[j][(l, k)] + d[k][(l, j)] - d[l][(j, k)]))
            .sum::<f64>()
    })
}
