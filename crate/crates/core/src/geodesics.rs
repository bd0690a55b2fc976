//! Fixed-step RK4 integration of normal geodesics, affine geodesics and frame
//! transport, plus the closed-form Heisenberg geodesic.

use nalgebra::{Complex, DMatrix, DVector};

use crate::connections::AffineConnection;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::srgeom::{Covector, SubRiemannianStructure};
use crate::{Point, Tangent};

/// Default step for experiment integrations.
pub const DT_EXPERIMENT: f64 = 1e-3;
/// Default step for oracle integrations.
pub const DT_ORACLE: f64 = 1e-5;

/// Number of RK4 steps covering `[0, horizon]` with steps no longer than `dt`
/// (up to a relative slack of 1e-9). The actual step is `horizon / N`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon > 0.0 && horizon.is_finite() && dt > 0.0 && dt.is_finite()) {
        return Err(Error::StepSizeInvalid { dt, horizon });
    }
    let ratio = horizon / dt;
    Ok(((ratio - 1e-9 * ratio.max(1.0)).ceil() as usize).max(1))
}

/// One classical Runge-Kutta step.
pub fn rk4_step(y: &DVector<f64>, h: f64, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DVector<f64> {
    let k1 = f(y);
    let k2 = f(&(y + &k1 * (0.5 * h)));
    let k3 = f(&(y + &k2 * (0.5 * h)));
    let k4 = f(&(y + &k3 * h));
    y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

/// Sampled solution of a geodesic or transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPath {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub covectors: Option<Vec<DVector<f64>>>,
    pub velocities: Option<Vec<Tangent>>,
    pub frames: Option<Vec<DMatrix<f64>>>,
}

impl GeodesicPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn endpoint(&self) -> &Point {
        self.points.last().expect("paths hold at least the initial state")
    }

    /// `sup_t |H(t) − H(0)|` for a path that carries covectors.
    pub fn hamiltonian_drift(&self, s: &SubRiemannianStructure) -> Result<f64> {
        let covs = self
            .covectors
            .as_ref()
            .ok_or(Error::InsufficientData("path carries no covectors".into()))?;
        let h0 = s.hamiltonian(&self.points[0], &Covector(covs[0].clone()))?;
        let mut worst: f64 = 0.0;
        for (x, p) in self.points.iter().zip(covs) {
            worst = worst.max((s.hamiltonian(x, &Covector(p.clone()))? - h0).abs());
        }
        Ok(worst)
    }
}

/// State layout `[x | rest]`; `rest` holds `p`, `v` or `(v, F)` depending on the system.
struct Integrator<'a> {
    n: usize,
    domain: &'a Domain,
    steps: usize,
    h: f64,
}

impl<'a> Integrator<'a> {
    fn new(domain: &'a Domain, horizon: f64, dt: f64) -> Result<Self> {
        let steps = step_count(horizon, dt)?;
        Ok(Self {
            n: domain.dim(),
            domain,
            steps,
            h: horizon / steps as f64,
        })
    }

    /// Runs the system, calling `record(time, state)` after every step.
    /// Periodic coordinates are wrapped after each step.
    fn run(
        &self,
        mut y: DVector<f64>,
        rhs: impl Fn(&DVector<f64>) -> DVector<f64>,
        mut record: impl FnMut(f64, &DVector<f64>),
    ) -> Result<DVector<f64>> {
        let n = self.n;
        for step in 1..=self.steps {
            let next = rk4_step(&y, self.h, &rhs);
            let mut x: Point = next.rows(0, n).into_owned();
            if !self.domain.contains(&x) {
                return Err(Error::LeftDomain {
                    time: (step - 1) as f64 * self.h,
                    last: y.rows(0, n).iter().copied().collect(),
                });
            }
            y = next;
            if self.domain.is_periodic() {
                self.domain.wrap(&mut x);
                y.rows_mut(0, n).copy_from(&x);
            }
            record(step as f64 * self.h, &y);
        }
        Ok(y)
    }
}

fn stack(parts: &[&[f64]]) -> DVector<f64> {
    DVector::from_iterator(parts.iter().map(|p| p.len()).sum(), parts.iter().flat_map(|p| p.iter().copied()))
}

fn check_start(domain: &Domain, x0: &Point) -> Result<()> {
    if x0.len() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            found: x0.len(),
        });
    }
    if !domain.contains(x0) {
        return Err(Error::OutOfDomain {
            point: x0.iter().copied().collect(),
        });
    }
    Ok(())
}

fn hamiltonian_system(s: &SubRiemannianStructure) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
    let n = s.n();
    move |y| {
        let x: Point = y.rows(0, n).into_owned();
        let (dx, dp) = s.hamiltonian_rhs(&x, &y.rows(n, n).into_owned());
        stack(&[dx.as_slice(), dp.as_slice()])
    }
}

/// Normal geodesic from `(x0, p0)`: `ẋ = g p`, `ṗ_i = −Γ^{jk}_i p_j p_k`.
pub fn hamiltonian_flow(s: &SubRiemannianStructure, x0: &Point, p0: &Covector, horizon: f64, dt: f64) -> Result<GeodesicPath> {
    check_start(s.domain(), x0)?;
    let n = s.n();
    let integ = Integrator::new(s.domain(), horizon, dt)?;
    let mut times = vec![0.0];
    let mut points = vec![x0.clone()];
    let mut covs = vec![p0.0.clone()];
    integ.run(stack(&[x0.as_slice(), p0.0.as_slice()]), hamiltonian_system(s), |t, y| {
        times.push(t);
        points.push(y.rows(0, n).into_owned());
        covs.push(y.rows(n, n).into_owned());
    })?;
    Ok(GeodesicPath {
        times,
        points,
        covectors: Some(covs),
        velocities: None,
        frames: None,
    })
}

/// Endpoint `(x(T), p(T))` of the Hamiltonian flow without storing the path.
pub fn hamiltonian_endpoint(
    s: &SubRiemannianStructure,
    x0: &Point,
    p0: &Covector,
    horizon: f64,
    dt: f64,
) -> Result<(Point, Covector)> {
    check_start(s.domain(), x0)?;
    let n = s.n();
    let integ = Integrator::new(s.domain(), horizon, dt)?;
    let y = integ.run(stack(&[x0.as_slice(), p0.0.as_slice()]), hamiltonian_system(s), |_, _| {})?;
    Ok((y.rows(0, n).into_owned(), Covector(y.rows(n, n).into_owned())))
}

/// Normal geodesic with horizontal initial conditions `(x, u)`.
pub fn normal_geodesic_horizontal(s: &SubRiemannianStructure, x: &Point, u: &Tangent, horizon: f64, dt: f64) -> Result<GeodesicPath> {
    let p = s.flat_horizontal(x, u)?;
    hamiltonian_flow(s, x, &p, horizon, dt)
}

fn affine_system(conn: &AffineConnection) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
    let n = conn.dim();
    move |y| {
        let x: Point = y.rows(0, n).into_owned();
        let v: Tangent = y.rows(n, n).into_owned();
        let a = -conn.christoffels_unchecked(&x).contract(&v, &v);
        stack(&[v.as_slice(), a.as_slice()])
    }
}

/// `ẍ^i = −Γ^i_{jk} ẋ^j ẋ^k` from `(x, u)`.
pub fn affine_geodesic(conn: &AffineConnection, x: &Point, u: &Tangent, horizon: f64, dt: f64) -> Result<GeodesicPath> {
    check_start(conn.domain(), x)?;
    let n = conn.dim();
    let integ = Integrator::new(conn.domain(), horizon, dt)?;
    let mut times = vec![0.0];
    let mut points = vec![x.clone()];
    let mut vels = vec![u.clone()];
    integ.run(stack(&[x.as_slice(), u.as_slice()]), affine_system(conn), |t, y| {
        times.push(t);
        points.push(y.rows(0, n).into_owned());
        vels.push(y.rows(n, n).into_owned());
    })?;
    Ok(GeodesicPath {
        times,
        points,
        covectors: None,
        velocities: Some(vels),
        frames: None,
    })
}

/// Affine geodesic with a frame transported along it:
/// `ẍ = −Γ(ẋ, ẋ)`, `Ḟ = −Γ(ẋ) F`. Returns `(x(T), ẋ(T), F(T))`.
pub fn geodesic_with_transport(
    conn: &AffineConnection,
    x: &Point,
    u: &Tangent,
    frame: &DMatrix<f64>,
    horizon: f64,
    dt: f64,
) -> Result<(Point, Tangent, DMatrix<f64>)> {
    check_start(conn.domain(), x)?;
    let n = conn.dim();
    let integ = Integrator::new(conn.domain(), horizon, dt)?;
    let rhs = |y: &DVector<f64>| {
        let x: Point = y.rows(0, n).into_owned();
        let v: Tangent = y.rows(n, n).into_owned();
        let f = DMatrix::from_column_slice(n, n, y.rows(2 * n, n * n).as_slice());
        let gamma = conn.christoffels_unchecked(&x);
        let a = -gamma.contract(&v, &v);
        let df = -(gamma.contract_middle(&v) * f);
        stack(&[v.as_slice(), a.as_slice(), df.as_slice()])
    };
    let y = integ.run(stack(&[x.as_slice(), u.as_slice(), frame.as_slice()]), rhs, |_, _| {})?;
    Ok((
        y.rows(0, n).into_owned(),
        y.rows(n, n).into_owned(),
        DMatrix::from_column_slice(n, n, y.rows(2 * n, n * n).as_slice()),
    ))
}

/// Transports `F0` along a sampled path carrying velocities by RK4 on
/// `Ḟ = −Γ(ẋ) F`. Midpoint states come from cubic Hermite interpolation.
pub fn parallel_transport_frame(conn: &AffineConnection, path: &GeodesicPath, f0: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    let vels = path
        .velocities
        .as_ref()
        .ok_or(Error::InsufficientData("path carries no velocities".into()))?;
    if f0.determinant().abs() < 1e-12 {
        return Err(Error::InvalidConfig("initial frame is singular".into()));
    }
    let domain = conn.domain();
    let gamma_at = |x: &Point, v: &Tangent| conn.christoffels_unchecked(x).contract_middle(v);
    let mut frames = vec![f0.clone()];
    let mut f = f0.clone();
    for i in 0..path.len().saturating_sub(1) {
        let h = path.times[i + 1] - path.times[i];
        let (x0, x1) = (&path.points[i], &path.points[i + 1]);
        let (v0, v1) = (&vels[i], &vels[i + 1]);
        // wrapped coordinates: work with the short chord
        let chord = domain.difference(x1, x0);
        let x_end = x0 + &chord;
        let x_mid = x0 + &chord * 0.5 + (v0 - v1) * (h / 8.0);
        let v_mid = &chord * (1.5 / h) - (v0 + v1) * 0.25;
        let g0 = gamma_at(x0, v0);
        let gm = gamma_at(&x_mid, &v_mid);
        let g1 = gamma_at(&x_end, v1);
        let k1 = -(&g0 * &f);
        let k2 = -(&gm * (&f + &k1 * (0.5 * h)));
        let k3 = -(&gm * (&f + &k2 * (0.5 * h)));
        let k4 = -(&g1 * (&f + &k3 * h));
        f += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        frames.push(f.clone());
    }
    Ok(frames)
}

/// Closed-form normal geodesic of the Heisenberg model with
/// `E_1 = ∂x − (y/2)∂z`, `E_2 = ∂y + (x/2)∂z`.
///
/// With `w = x + iy`, `c = p_z` and `v₀ = (p_x − y₀c/2) + i(p_y + x₀c/2)`:
/// `w(t) = w₀ + v₀ t φ(ct)` where `φ(θ) = (e^{iθ} − 1)/(iθ)`, and
/// `z(t) = z₀ + ½[Im(w̄₀ v₀ t φ(ct)) + |v₀|² (t − sin(ct)/c)/c]`.
pub fn heisenberg_exact_geodesic(x0: &Point, p0: &Covector, t: f64) -> Point {
    let (x, y, z) = (x0[0], x0[1], x0[2]);
    let p = &p0.0;
    let c = p[2];
    let v0 = Complex::new(p[0] - 0.5 * y * c, p[1] + 0.5 * x * c);
    let w0 = Complex::new(x, y);
    let theta = c * t;
    let (phi, area) = if theta.abs() < 1e-3 {
        let t2 = theta * theta;
        (
            Complex::new(1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0),
            theta / 6.0 - theta * t2 / 120.0,
        )
    } else {
        let e = Complex::new(theta.cos() - 1.0, theta.sin());
        (e / Complex::new(0.0, theta), (theta - theta.sin()) / (theta * theta))
    };
    let disp = v0 * phi * t;
    let w = w0 + disp;
    let zt = z + 0.5 * ((w0.conj() * disp).im + v0.norm_sqr() * t * t * area);
    DVector::from_vec(vec![w.re, w.im, zt])
}
