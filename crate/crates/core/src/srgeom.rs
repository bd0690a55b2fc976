//! Sub-Riemannian structures in a single chart.
//!
//! A structure is given by an h-orthonormal horizontal frame `E_1..E_k` and a
//! complement frame `V_1..V_{n-k}`. The metric `h` is implicit in the frame,
//! so every derived object (cometric, ♯, the flat map onto horizontal
//! covectors, horizontal divergence, the sub-Laplacian) closes over it.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::tensor::Tensor3;
use crate::{Point, Tangent};

/// Frames with a larger condition number are rejected.
pub const MAX_FRAME_CONDITION: f64 = 1e12;
/// Tolerance on the complement part of a vector declared horizontal.
pub const TOL_SPAN: f64 = 1e-9;

/// Cotangent vector, components `p_i` in the coordinate coframe.
#[derive(Debug, Clone, PartialEq)]
pub struct Covector(pub DVector<f64>);

impl Covector {
    pub fn new(components: Vec<f64>) -> Self {
        Self(DVector::from_vec(components))
    }

    pub fn components(&self) -> &DVector<f64> {
        &self.0
    }

    /// `α(v)`.
    pub fn apply(&self, v: &Tangent) -> f64 {
        self.0.dot(v)
    }
}

#[derive(Clone)]
pub struct SubRiemannianStructure {
    name: String,
    n: usize,
    horizontal: Vec<VectorField>,
    complement: Vec<VectorField>,
    domain: Domain,
}

impl fmt::Debug for SubRiemannianStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubRiemannianStructure")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("k", &self.horizontal.len())
            .finish()
    }
}

impl SubRiemannianStructure {
    pub fn new(
        name: impl Into<String>,
        horizontal: Vec<VectorField>,
        complement: Vec<VectorField>,
        domain: Domain,
    ) -> Result<Self> {
        let n = domain.dim();
        if horizontal.is_empty() {
            return Err(Error::InvalidConfig("horizontal rank must be at least 1".into()));
        }
        if horizontal.len() + complement.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: horizontal.len() + complement.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            n,
            horizontal,
            complement,
            domain,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Chart dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Horizontal rank.
    pub fn k(&self) -> usize {
        self.horizontal.len()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn horizontal_frame(&self) -> &[VectorField] {
        &self.horizontal
    }

    pub fn complement_frame(&self) -> &[VectorField] {
        &self.complement
    }

    /// Frame fields in order `E_1..E_k, V_1..V_{n-k}`.
    pub fn frame_fields(&self) -> impl Iterator<Item = &VectorField> {
        self.horizontal.iter().chain(self.complement.iter())
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.frame_fields().all(VectorField::has_analytic_jacobian)
    }

    pub fn check_domain(&self, x: &Point) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                point: x.iter().copied().collect(),
            })
        }
    }

    /// Full frame without domain or conditioning checks.
    pub(crate) fn frame_unchecked(&self, x: &Point) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.frame_fields().map(|f| f.value(x)).collect();
        DMatrix::from_columns(&cols)
    }

    /// `n × k` matrix of the horizontal frame.
    pub fn horizontal_matrix(&self, x: &Point) -> Result<DMatrix<f64>> {
        self.check_domain(x)?;
        let cols: Vec<DVector<f64>> = self.horizontal.iter().map(|f| f.value(x)).collect();
        Ok(DMatrix::from_columns(&cols))
    }

    /// Columns `E_1(x)..E_k(x), V_1(x)..V_{n-k}(x)`.
    pub fn full_frame_matrix(&self, x: &Point) -> Result<DMatrix<f64>> {
        self.check_domain(x)?;
        let w = self.frame_unchecked(x);
        let condition = condition_number(&w);
        if !(condition <= MAX_FRAME_CONDITION) {
            return Err(Error::SingularFrame { condition });
        }
        Ok(w)
    }

    /// Coefficients of `w` in the full frame.
    pub fn frame_coefficients(&self, x: &Point, w: &Tangent) -> Result<DVector<f64>> {
        let frame = self.full_frame_matrix(x)?;
        frame
            .lu()
            .solve(w)
            .ok_or(Error::SingularFrame { condition: f64::INFINITY })
    }

    /// `g^{ij}(x) = Σ_a E_a^i E_a^j`.
    pub fn cometric(&self, x: &Point) -> Result<DMatrix<f64>> {
        self.check_domain(x)?;
        Ok(self.cometric_unchecked(x))
    }

    pub(crate) fn cometric_unchecked(&self, x: &Point) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n, self.n);
        for e in &self.horizontal {
            let v = e.value(x);
            g.ger(1.0, &v, &v, 1.0);
        }
        g
    }

    /// `α^♯ = g(x) α`.
    pub fn sharp(&self, x: &Point, alpha: &Covector) -> Result<Tangent> {
        Ok(self.cometric(x)? * &alpha.0)
    }

    /// The covector `α_u` with `α_u^♯ = u` that annihilates the complement.
    pub fn flat_horizontal(&self, x: &Point, u: &Tangent) -> Result<Covector> {
        let w = self.full_frame_matrix(x)?;
        let k = self.k();
        let lu = w.clone().lu();
        let c = lu.solve(u).ok_or(Error::SingularFrame { condition: f64::INFINITY })?;
        let vertical = w.columns(k, self.n - k) * c.rows(k, self.n - k);
        let residual = vertical.amax();
        if residual > TOL_SPAN * u.amax().max(1.0) {
            return Err(Error::NotHorizontal { residual });
        }
        let mut rhs = DVector::zeros(self.n);
        rhs.rows_mut(0, k).copy_from(&c.rows(0, k));
        let alpha = w
            .transpose()
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularFrame { condition: f64::INFINITY })?;
        Ok(Covector(alpha))
    }

    /// `Γ^{ij}_k = ½ ∂_k g^{ij}`, assembled with the product rule from the frame Jacobians.
    pub fn dual_christoffels(&self, x: &Point) -> Result<Tensor3> {
        self.check_domain(x)?;
        Ok(self.dual_christoffels_unchecked(x))
    }

    pub(crate) fn dual_christoffels_unchecked(&self, x: &Point) -> Tensor3 {
        let n = self.n;
        let mut t = Tensor3::zeros(n);
        for e in &self.horizontal {
            let v = e.value(x);
            let jac = e.jacobian(x);
            for i in 0..n {
                for j in i..n {
                    for k in 0..n {
                        let d = 0.5 * (jac[(i, k)] * v[j] + v[i] * jac[(j, k)]);
                        t.add(i, j, k, d);
                        if j != i {
                            t.add(j, i, k, d);
                        }
                    }
                }
            }
        }
        t
    }

    /// Drops the complement coefficients of `w`.
    pub fn project_horizontal(&self, x: &Point, w: &Tangent) -> Result<Tangent> {
        let frame = self.full_frame_matrix(x)?;
        let c = frame
            .clone()
            .lu()
            .solve(w)
            .ok_or(Error::SingularFrame { condition: f64::INFINITY })?;
        let k = self.k();
        Ok(frame.columns(0, k) * c.rows(0, k))
    }

    /// `[X, Y](x) = DY·X − DX·Y`.
    pub fn lie_bracket(&self, x: &Point, a: &VectorField, b: &VectorField) -> Result<Tangent> {
        self.check_domain(x)?;
        Ok(lie_bracket_at(x, a, b))
    }

    /// `div^V(Y) = −Σ_i h(pr_H [Y, E_i], E_i)`.
    pub fn horizontal_divergence(&self, x: &Point, y: &VectorField) -> Result<f64> {
        let frame = self.full_frame_matrix(x)?;
        let lu = frame.lu();
        let mut div = 0.0;
        for (i, e) in self.horizontal.iter().enumerate() {
            let br = lie_bracket_at(x, y, e);
            let c = lu.solve(&br).ok_or(Error::SingularFrame { condition: f64::INFINITY })?;
            div -= c[i];
        }
        Ok(div)
    }

    /// `Δ^V f = Σ_j [E_j(E_j f) + div^V(E_j) E_j f]`.
    pub fn sub_laplacian(&self, x: &Point, f: &ScalarField) -> Result<f64> {
        self.check_domain(x)?;
        let grad = f.gradient(x);
        let hess = f.hessian(x);
        let mut total = 0.0;
        for e in &self.horizontal {
            let v = e.value(x);
            let dv = e.jacobian(x) * &v;
            let second = v.dot(&(&hess * &v)) + grad.dot(&dv);
            total += second + self.horizontal_divergence(x, e)? * grad.dot(&v);
        }
        Ok(total)
    }

    /// The horizontal gradient `x ↦ (df)^♯(x)` as a vector field.
    ///
    /// Carries an analytic Jacobian when both the frame and `f` have analytic
    /// derivatives; otherwise the Jacobian is differenced.
    pub fn sharp_gradient_field(&self, f: &ScalarField) -> VectorField {
        let me = self.clone();
        let g = f.clone();
        let field = VectorField::new(move |x| me.cometric_unchecked(x) * g.gradient(x));
        if self.has_analytic_jacobians() && f.has_analytic_derivatives() {
            let me = self.clone();
            let g = f.clone();
            field.with_jacobian(move |x| {
                let n = me.n;
                let grad = g.gradient(x);
                let dual = me.dual_christoffels_unchecked(x);
                let mut jac = me.cometric_unchecked(x) * g.hessian(x);
                for i in 0..n {
                    for j in 0..n {
                        let mut s = 0.0;
                        for l in 0..n {
                            s += 2.0 * dual.get(i, l, j) * grad[l];
                        }
                        jac[(i, j)] += s;
                    }
                }
                jac
            })
        } else {
            field
        }
    }

    /// Sub-Laplacian evaluated literally as `div^V((df)^♯)`.
    pub fn sub_laplacian_literal(&self, x: &Point, f: &ScalarField) -> Result<f64> {
        self.horizontal_divergence(x, &self.sharp_gradient_field(f))
    }

    /// `H(x, p) = ½ pᵀ g(x) p`.
    pub fn hamiltonian(&self, x: &Point, p: &Covector) -> Result<f64> {
        self.check_domain(x)?;
        Ok(0.5 * self.horizontal.iter().map(|e| e.value(x).dot(&p.0).powi(2)).sum::<f64>())
    }

    /// Right-hand side of the normal-geodesic Hamiltonian system:
    /// `ẋ = g p`, `ṗ_i = −Γ^{jk}_i p_j p_k`. Uses `g = Σ E_a E_aᵀ` directly,
    /// so `ṗ_i = −Σ_a (E_a·p)(∂_i E_a · p)`.
    pub(crate) fn hamiltonian_rhs(&self, x: &Point, p: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let mut dx = DVector::zeros(self.n);
        let mut dp = DVector::zeros(self.n);
        for e in &self.horizontal {
            let v = e.value(x);
            let s = v.dot(p);
            dx.axpy(s, &v, 1.0);
            dp.gemv_tr(-s, &e.jacobian(x), p, 1.0);
        }
        (dx, dp)
    }

    /// `‖u‖_h` of a horizontal vector, read from its frame coefficients.
    pub fn horizontal_norm(&self, x: &Point, u: &Tangent) -> Result<f64> {
        let c = self.frame_coefficients(x, u)?;
        Ok(c.rows(0, self.k()).norm())
    }
}

/// `[X, Y](x) = DY(x)·X(x) − DX(x)·Y(x)`.
pub fn lie_bracket_at(x: &Point, a: &VectorField, b: &VectorField) -> Tangent {
    b.jacobian(x) * a.value(x) - a.jacobian(x) * b.value(x)
}

/// Ratio of extreme singular values; infinite for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}
