//! Built-in geometries with analytic derivatives and the name registry.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};

use crate::connections::{AffineConnection, RiemannianMetric};
use crate::domain::{Domain, FULL_TURN};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::srgeom::SubRiemannianStructure;
use crate::Point;

/// Shear rate of the twisted model.
pub const TWISTED_MU: f64 = 0.3;
/// Polar radius of the default ellipsoid.
pub const ELLIPSOID_POLAR_RADIUS: f64 = 1.5;
/// Half-width of the excluded polar caps in the `t` coordinate.
pub const POLE_MARGIN: f64 = 0.05;

fn v(values: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(values)
}

fn m3(rows: [[f64; 3]; 3]) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| rows[i][j])
}

/// `ℝ^n` with the coordinate frame and no complement.
pub fn euclidean(n: usize) -> SubRiemannianStructure {
    assert!(n >= 1, "dimension must be positive");
    let frame = (0..n).map(|i| VectorField::coordinate(n, i)).collect();
    SubRiemannianStructure::new(format!("euclidean{n}"), frame, Vec::new(), Domain::unbounded(n))
        .expect("coordinate frame is valid")
}

/// Heisenberg group: `E_1 = ∂x − (y/2)∂z`, `E_2 = ∂y + (x/2)∂z`, `V = ∂z`.
pub fn heisenberg() -> SubRiemannianStructure {
    let e1 = VectorField::new(|x| v(&[1.0, 0.0, -0.5 * x[1]]))
        .with_jacobian(|_| m3([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, -0.5, 0.0]]));
    let e2 = VectorField::new(|x| v(&[0.0, 1.0, 0.5 * x[0]]))
        .with_jacobian(|_| m3([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.5, 0.0, 0.0]]));
    SubRiemannianStructure::new("heisenberg", vec![e1, e2], vec![VectorField::coordinate(3, 2)], Domain::unbounded(3))
        .expect("heisenberg frame is valid")
}

/// `E_1 = ∂x`, `E_2 = (1 + μx)∂y + x∂z`, `V = ∂z` on `|x| < 1/μ`.
/// `[E_1, E_2] = μ∂y + ∂z` has a horizontal part.
pub fn twisted() -> SubRiemannianStructure {
    let mu = TWISTED_MU;
    let e1 = VectorField::coordinate(3, 0);
    let e2 = VectorField::new(move |x| v(&[0.0, 1.0 + mu * x[0], x[0]]))
        .with_jacobian(move |_| m3([[0.0, 0.0, 0.0], [mu, 0.0, 0.0], [1.0, 0.0, 0.0]]));
    let bound = 1.0 / mu;
    let domain = Domain::open_box(vec![-bound, f64::NEG_INFINITY, f64::NEG_INFINITY], vec![bound, f64::INFINITY, f64::INFINITY])
        .with_sample_box(vec![-2.0, -1.0, -1.0], vec![2.0, 1.0, 1.0]);
    SubRiemannianStructure::new("twisted", vec![e1, e2], vec![VectorField::coordinate(3, 2)], domain)
        .expect("twisted frame is valid")
}

/// Surface `φ(s,t) = (cos s sin t, sin s sin t, c cos t)` with its induced
/// metric, an orthonormal frame and the Levi-Civita connection.
#[derive(Debug, Clone)]
pub struct EllipsoidModel {
    pub polar_radius: f64,
    pub structure: SubRiemannianStructure,
    pub metric: RiemannianMetric,
    pub levi_civita: AffineConnection,
}

fn ellipsoid_domain() -> Domain {
    Domain::open_box(vec![f64::NEG_INFINITY, POLE_MARGIN], vec![f64::INFINITY, PI - POLE_MARGIN])
        .with_period(0, FULL_TURN)
        .with_sample_box(vec![0.0, 0.3], vec![TAU, PI - 0.3])
}

/// Orthonormal structure and metric of the ellipsoid with polar radius `c`.
pub fn ellipsoid_riemannian(c: f64) -> (SubRiemannianStructure, RiemannianMetric) {
    let a = c * c - 1.0;
    let g_tt = move |t: f64| 1.0 + a * t.sin().powi(2);
    let metric = RiemannianMetric::new(
        ellipsoid_domain(),
        move |x| DMatrix::from_diagonal(&v(&[x[1].sin().powi(2), g_tt(x[1])])),
        move |x| {
            let s2 = (2.0 * x[1]).sin();
            vec![DMatrix::zeros(2, 2), DMatrix::from_diagonal(&v(&[s2, a * s2]))]
        },
    )
    .with_second_derivatives(move |x| {
        let c2 = 2.0 * (2.0 * x[1]).cos();
        let z = DMatrix::zeros(2, 2);
        vec![vec![z.clone(), z.clone()], vec![z, DMatrix::from_diagonal(&v(&[c2, a * c2]))]]
    });
    let e1 = VectorField::new(|x| v(&[1.0 / x[1].sin(), 0.0]))
        .with_jacobian(|x| DMatrix::from_row_slice(2, 2, &[0.0, -x[1].cos() / x[1].sin().powi(2), 0.0, 0.0]));
    let e2 = VectorField::new(move |x| v(&[0.0, g_tt(x[1]).powf(-0.5)])).with_jacobian(move |x| {
        let d = -0.5 * g_tt(x[1]).powf(-1.5) * a * (2.0 * x[1]).sin();
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, d])
    });
    let structure = SubRiemannianStructure::new("ellipsoid", vec![e1, e2], Vec::new(), ellipsoid_domain())
        .expect("ellipsoid frame is valid");
    (structure, metric)
}

pub fn ellipsoid_surface(c: f64) -> EllipsoidModel {
    let (structure, metric) = ellipsoid_riemannian(c);
    let levi_civita = metric.levi_civita();
    EllipsoidModel {
        polar_radius: c,
        structure,
        metric,
        levi_civita,
    }
}

/// Ellipsoid with the default polar radius.
pub fn ellipsoid() -> EllipsoidModel {
    ellipsoid_surface(ELLIPSOID_POLAR_RADIUS)
}

/// Rejects points outside the polar band.
pub fn check_pole_band(x: &Point) -> Result<()> {
    let t = x[1];
    if t > POLE_MARGIN && t < PI - POLE_MARGIN {
        Ok(())
    } else {
        Err(Error::PoleProximity { t })
    }
}

/// Anisotropic frame-bundle walk context on the ellipsoid.
#[derive(Debug, Clone)]
pub struct FrameBundleModel {
    pub surface: EllipsoidModel,
    pub anisotropy: DMatrix<f64>,
    pub start: Point,
    pub initial_frame: DMatrix<f64>,
}

/// Default anisotropy `diag(4, 1/4)`.
pub fn default_anisotropy() -> DMatrix<f64> {
    DMatrix::from_diagonal(&v(&[4.0, 0.25]))
}

/// Default start on the equator.
pub fn default_frame_start() -> Point {
    v(&[0.0, PI / 2.0])
}

/// Gram-Schmidt of the coordinate frame against `g`.
pub fn orthonormal_coordinate_frame(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        for q in &cols {
            let proj = q.dot(&(g * &e));
            e -= q * proj;
        }
        let norm = e.dot(&(g * &e)).sqrt();
        cols.push(e / norm);
    }
    DMatrix::from_columns(&cols)
}

/// Frame-bundle context with initial frame `F_SO(start) · A`.
pub fn ellipsoid_frame_bundle(anisotropy: DMatrix<f64>, start: Point) -> Result<FrameBundleModel> {
    if anisotropy.shape() != (2, 2) {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: anisotropy.nrows(),
        });
    }
    if anisotropy.determinant().abs() < 1e-12 {
        return Err(Error::InvalidConfig("anisotropy matrix is singular".into()));
    }
    check_pole_band(&start)?;
    let surface = ellipsoid();
    let initial_frame = orthonormal_coordinate_frame(&surface.metric.metric(&start)) * &anisotropy;
    Ok(FrameBundleModel {
        surface,
        anisotropy,
        start,
        initial_frame,
    })
}

/// `f = x² + y²` on the first two coordinates.
pub fn probe_quad_xy(n: usize) -> ScalarField {
    ScalarField::new(|x| x[0] * x[0] + x[1] * x[1])
        .with_gradient(move |x| {
            let mut g = DVector::zeros(n);
            g[0] = 2.0 * x[0];
            g[1] = 2.0 * x[1];
            g
        })
        .with_hessian(move |_| {
            let mut h = DMatrix::zeros(n, n);
            h[(0, 0)] = 2.0;
            h[(1, 1)] = 2.0;
            h
        })
}

/// The last coordinate.
pub fn probe_coord_z(n: usize) -> ScalarField {
    ScalarField::coordinate(n, n - 1)
}

/// Radius of the support of [`probe_bump`].
pub const BUMP_RADIUS: f64 = 2.0;

/// Smooth bump `exp(1 − 1/(1 − |x|²/R²))`, supported in the ball of radius `R`.
pub fn probe_bump(n: usize) -> ScalarField {
    let r2 = BUMP_RADIUS * BUMP_RADIUS;
    let parts = move |x: &Point| -> Option<(f64, f64, f64)> {
        let s = 1.0 - x.norm_squared() / r2;
        if s <= 0.0 {
            return None;
        }
        let f = (1.0 - 1.0 / s).exp();
        // derivatives with respect to q = |x|²/R²
        Some((f, -f / (s * s), f / s.powi(4) - 2.0 * f / s.powi(3)))
    };
    ScalarField::new(move |x| parts(x).map_or(0.0, |p| p.0))
        .with_gradient(move |x| parts(x).map_or_else(|| DVector::zeros(n), |(_, d1, _)| x * (2.0 * d1 / r2)))
        .with_hessian(move |x| match parts(x) {
            None => DMatrix::zeros(n, n),
            Some((_, d1, d2)) => x * x.transpose() * (4.0 * d2 / (r2 * r2)) + DMatrix::identity(n, n) * (2.0 * d1 / r2),
        })
}

/// Probe names accepted by [`probe`].
pub const PROBE_NAMES: [&str; 3] = ["quad_xy", "coord_z", "bump"];

pub fn probe(name: &str, n: usize) -> Result<ScalarField> {
    match name {
        "quad_xy" if n >= 2 => Ok(probe_quad_xy(n)),
        "coord_z" => Ok(probe_coord_z(n)),
        "bump" => Ok(probe_bump(n)),
        _ => Err(Error::InvalidConfig(format!(
            "unknown probe `{name}` for dimension {n}; available: {}",
            PROBE_NAMES.join(", ")
        ))),
    }
}

/// A registry entry.
#[derive(Debug, Clone)]
pub enum Model {
    SubRiemannian(SubRiemannianStructure),
    Ellipsoid(EllipsoidModel),
    EllipsoidFrames(FrameBundleModel),
}

impl Model {
    /// The structure whose horizontal frame drives sampling.
    pub fn structure(&self) -> &SubRiemannianStructure {
        match self {
            Model::SubRiemannian(s) => s,
            Model::Ellipsoid(e) => &e.structure,
            Model::EllipsoidFrames(f) => &f.surface.structure,
        }
    }
}

/// Summary of a registry entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDescriptor {
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub domain: &'static str,
    pub analytic_jacobians: bool,
    pub has_metric: bool,
}

/// Registry names; `euclidean<n>` stands for any positive `n`.
pub const REGISTRY_NAMES: [&str; 5] = ["euclidean<n>", "heisenberg", "twisted", "ellipsoid", "ellipsoid-frames"];

pub fn lookup(name: &str) -> Result<Model> {
    match name {
        "heisenberg" => Ok(Model::SubRiemannian(heisenberg())),
        "twisted" => Ok(Model::SubRiemannian(twisted())),
        "ellipsoid" => Ok(Model::Ellipsoid(ellipsoid())),
        "ellipsoid-frames" => Ok(Model::EllipsoidFrames(ellipsoid_frame_bundle(default_anisotropy(), default_frame_start())?)),
        other => match other.strip_prefix("euclidean").and_then(|d| d.parse::<usize>().ok()) {
            Some(n) if (1..=64).contains(&n) => Ok(Model::SubRiemannian(euclidean(n))),
            _ => Err(Error::InvalidConfig(format!(
                "unknown model `{other}`; registry: {}",
                REGISTRY_NAMES.join(", ")
            ))),
        },
    }
}

pub fn describe(name: &str) -> Result<ModelDescriptor> {
    let model = lookup(name)?;
    let s = model.structure();
    let domain = match &model {
        Model::SubRiemannian(_) if name == "twisted" => "|x| < 1/mu",
        Model::SubRiemannian(_) => "R^n",
        _ => "s mod 2pi, 0.05 < t < pi - 0.05",
    };
    Ok(ModelDescriptor {
        name: name.to_string(),
        n: s.n(),
        k: s.k(),
        domain,
        analytic_jacobians: s.has_analytic_jacobians(),
        has_metric: !matches!(model, Model::SubRiemannian(_)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connections::{
        default_sample_points, frame_parallel_connection, horizontal_torsion_is_vertical, kappa_correction, TOL_ANALYTIC,
    };

    #[test]
    fn analytic_jacobians_match_fd() {
        let mut structures = vec![heisenberg(), twisted(), euclidean(3), ellipsoid().structure];
        structures.push(ellipsoid_surface(1.0).structure);
        for s in structures {
            for x in s.domain().quasi_random_points(100) {
                for f in s.frame_fields() {
                    assert!((f.jacobian(&x) - f.fd_jacobian(&x)).amax() < 1e-6, "{}", s.name());
                }
            }
        }
    }

    #[test]
    fn heisenberg_complement_preserves_metric() {
        let s = heisenberg();
        let dz = VectorField::coordinate(3, 2);
        for x in s.domain().quasi_random_points(50) {
            for e in s.horizontal_frame() {
                let c = s.frame_coefficients(&x, &s.lie_bracket(&x, &dz, e).unwrap()).unwrap();
                assert!(c.rows(0, 2).amax() <= 1e-10);
            }
        }
        let e = s.horizontal_frame();
        let x = v(&[0.5, -0.5, 0.0]);
        assert!(s.horizontal_divergence(&x, &e[1]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn twisted_bracket_has_horizontal_part() {
        let s = twisted();
        let e = s.horizontal_frame();
        let x = v(&[0.0, 0.0, 0.0]);
        let br = s.lie_bracket(&x, &e[0], &e[1]).unwrap();
        assert!((br - v(&[0.0, TWISTED_MU, 1.0])).amax() < 1e-15);
        let pr = s.project_horizontal(&x, &s.lie_bracket(&x, &e[0], &e[1]).unwrap()).unwrap();
        assert!((pr - v(&[0.0, TWISTED_MU, 0.0])).amax() < 1e-15);
        for x in s.domain().quasi_random_points(20) {
            let pr = s.project_horizontal(&x, &s.lie_bracket(&x, &e[0], &e[1]).unwrap()).unwrap();
            assert!(pr.amax() > 1e-3);
        }
        let pts = default_sample_points(&s);
        let fp = frame_parallel_connection(&s);
        assert!(!horizontal_torsion_is_vertical(&fp, &s, &pts, TOL_ANALYTIC).unwrap().holds);
        let kc = kappa_correction(&s, &fp).unwrap();
        assert!(horizontal_torsion_is_vertical(&kc, &s, &pts, TOL_ANALYTIC).unwrap().holds);
    }

    #[test]
    fn ellipsoid_metric_from_embedding() {
        let e = ellipsoid();
        let c = e.polar_radius;
        for x in e.structure.domain().quasi_random_points(30) {
            let (s, t) = (x[0], x[1]);
            let j = DMatrix::from_row_slice(
                3,
                2,
                &[-s.sin() * t.sin(), s.cos() * t.cos(), s.cos() * t.sin(), s.sin() * t.cos(), 0.0, -c * t.sin()],
            );
            assert!((j.transpose() * &j - e.metric.metric(&x)).amax() < 1e-14);
            // the orthonormal frame is g-orthonormal
            let f = DMatrix::from_columns(&[e.structure.horizontal_frame()[0].value(&x), e.structure.horizontal_frame()[1].value(&x)]);
            assert!(crate::linalg::orthonormality_residual(&e.metric.metric(&x), &f) < 1e-14);
            // the cometric of the frame is the inverse metric
            let g_inv = e.structure.cometric(&x).unwrap();
            assert!((g_inv * e.metric.metric(&x) - DMatrix::<f64>::identity(2, 2)).amax() < 1e-13);
        }
        let eq = e.metric.metric(&v(&[0.7, PI / 2.0]));
        assert!((eq - DMatrix::from_diagonal(&v(&[1.0, 2.25]))).amax() < 1e-15);
    }

    #[test]
    fn metric_derivatives_match_fd() {
        let e = ellipsoid();
        let h = 1e-5;
        for x in e.structure.domain().quasi_random_points(20) {
            let d = e.metric.first_derivatives(&x);
            for b in 0..2 {
                let mut xp = x.clone();
                xp[b] += h;
                let mut xm = x.clone();
                xm[b] -= h;
                let fd = (e.metric.metric(&xp) - e.metric.metric(&xm)) / (2.0 * h);
                assert!((fd - &d[b]).amax() < 1e-8);
            }
        }
    }

    /// Gaussian curvature by the Brioschi formula for a diagonal metric
    /// `E(t) ds² + G(t) dt²`: `K = −(1/(2√(EG))) ∂_t(E_t/√(EG))`.
    fn brioschi_curvature(m: &RiemannianMetric, t: f64) -> f64 {
        let at = |t: f64| {
            let x = v(&[0.0, t]);
            let g = m.metric(&x);
            let d = m.first_derivatives(&x);
            (g[(0, 0)], g[(1, 1)], d[1][(0, 0)])
        };
        let ratio = |t: f64| {
            let (e, g, e_t) = at(t);
            e_t / (e * g).sqrt()
        };
        let h = 1e-5;
        let (e, g, _) = at(t);
        -(ratio(t + h) - ratio(t - h)) / (2.0 * h) / (2.0 * (e * g).sqrt())
    }

    #[test]
    fn unit_sphere_has_curvature_one() {
        let sphere = ellipsoid_surface(1.0);
        for t in [0.4, 1.0, 1.5, 2.5] {
            assert!((brioschi_curvature(&sphere.metric, t) - 1.0).abs() < 1e-6);
        }
        // on the ellipsoid the equator is flatter than the poles
        let e = ellipsoid();
        let k_eq = brioschi_curvature(&e.metric, PI / 2.0);
        let k_polar = brioschi_curvature(&e.metric, 0.2);
        assert!((k_eq - 1.0 / 2.25).abs() < 1e-6, "{k_eq}");
        assert!(k_polar > k_eq);
    }

    #[test]
    fn levi_civita_is_torsion_free_and_metric() {
        let e = ellipsoid();
        for x in e.structure.domain().quasi_random_points(100) {
            let gamma = e.levi_civita.christoffels(&x).unwrap();
            assert_eq!(e.levi_civita.torsion(&x).unwrap().max_abs(), 0.0);
            // ∇g: ∂_j g_{ab} − Γ^l_{ja} g_{lb} − Γ^l_{jb} g_{al}
            let g = e.metric.metric(&x);
            let d = e.metric.first_derivatives(&x);
            for j in 0..2 {
                let gj = gamma.slice_middle(j);
                let r = &d[j] - gj.transpose() * &g - &g * &gj;
                assert!(r.amax() < 1e-8);
            }
        }
    }

    #[test]
    fn frame_bundle_initial_frame_in_fa() {
        let fb = ellipsoid_frame_bundle(default_anisotropy(), default_frame_start()).unwrap();
        let r = fb
            .surface
            .metric
            .frame_residual(&fb.start, &fb.initial_frame, Some(&fb.anisotropy))
            .unwrap();
        assert!(r < 1e-15);
        assert!(matches!(
            ellipsoid_frame_bundle(default_anisotropy(), v(&[0.0, 0.01])),
            Err(Error::PoleProximity { .. })
        ));
    }

    #[test]
    fn probes_have_consistent_derivatives() {
        for name in PROBE_NAMES {
            let f = probe(name, 3).unwrap();
            for x in [v(&[0.3, -0.2, 0.5]), v(&[1.1, 0.4, -0.9])] {
                assert!((f.gradient(&x) - f.fd_gradient(&x)).amax() < 1e-8, "{name}");
                assert!((f.hessian(&x) - f.fd_hessian(&x)).amax() < 1e-5, "{name}");
            }
        }
        assert_eq!(probe_bump(3).value(&v(&[2.5, 0.0, 0.0])), 0.0);
        assert_eq!(probe_bump(3).value(&v(&[0.0, 0.0, 0.0])), 1.0);
    }

    #[test]
    fn registry() {
        for name in ["heisenberg", "twisted", "ellipsoid", "ellipsoid-frames", "euclidean2", "euclidean7"] {
            assert!(lookup(name).is_ok(), "{name}");
        }
        let err = lookup("klein-bottle").unwrap_err();
        assert!(err.to_string().contains("heisenberg"));
        assert!(lookup("euclidean0").is_err());
        let d = describe("heisenberg").unwrap();
        assert_eq!((d.n, d.k), (3, 2));
    }
}
