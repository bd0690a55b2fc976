//! Explicit retractions, the exact exponential, and the order-verification harness.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::connections::{AffineConnection, RiemannianMetric};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::geodesics::{geodesic_with_transport, hamiltonian_endpoint, DT_ORACLE};
use crate::linalg::{log_log_slope, spd_sqrt_and_inverse};
use crate::srgeom::{Covector, SubRiemannianStructure};
use crate::walker::sample_horizontal_unit;
use crate::{Point, Tangent};

/// Errors at or below this are excluded from slope fits.
pub const ERROR_FLOOR: f64 = 1e-12;
/// Slope a second-order retraction must reach.
pub const SECOND_ORDER_SLOPE: f64 = 2.9;

/// Geometric t-grid `{1e-1, 10^{-1.5}, 1e-2, 10^{-2.5}, 1e-3}`.
pub fn default_t_grid() -> Vec<f64> {
    [-1.0, -1.5, -2.0, -2.5, -3.0].iter().map(|e: &f64| 10f64.powf(*e)).collect()
}

#[derive(Debug, Clone)]
pub enum Retraction {
    /// Endpoint of the normal geodesic, integrated with step `dt`.
    ExactExp { structure: SubRiemannianStructure, dt: f64 },
    /// Second-order Taylor expansion of the normal geodesic.
    Ret1 { structure: SubRiemannianStructure },
    /// Second-order Taylor expansion of the `∇`-geodesic.
    Ret2 { connection: AffineConnection },
    /// `Ret2` plus a second-order transported frame, re-orthonormalized.
    Ret3 { connection: AffineConnection, metric: RiemannianMetric },
    /// `Ret3` on the anisotropic bundle `F_A = F_SO · A`; `None` means `A = Id`.
    Ret3Prime {
        connection: AffineConnection,
        metric: RiemannianMetric,
        anisotropy: Option<DMatrix<f64>>,
    },
    /// Affine geodesic with a parallel-transported frame, integrated with step `dt`.
    GeodesicTransport { connection: AffineConnection, dt: f64 },
}

impl Retraction {
    pub fn kind(&self) -> &'static str {
        match self {
            Retraction::ExactExp { .. } => "exact-exp",
            Retraction::Ret1 { .. } => "ret1",
            Retraction::Ret2 { .. } => "ret2",
            Retraction::Ret3 { .. } => "ret3",
            Retraction::Ret3Prime { .. } => "ret3-prime",
            Retraction::GeodesicTransport { .. } => "geodesic-transport",
        }
    }

    pub fn domain(&self) -> &Domain {
        match self {
            Retraction::ExactExp { structure, .. } | Retraction::Ret1 { structure } => structure.domain(),
            Retraction::Ret2 { connection }
            | Retraction::Ret3 { connection, .. }
            | Retraction::Ret3Prime { connection, .. }
            | Retraction::GeodesicTransport { connection, .. } => connection.domain(),
        }
    }

    pub fn transports_frames(&self) -> bool {
        matches!(
            self,
            Retraction::Ret3 { .. } | Retraction::Ret3Prime { .. } | Retraction::GeodesicTransport { .. }
        )
    }

    fn finish(&self, x: &Point, mut out: Point, t: f64) -> Result<Point> {
        let domain = self.domain();
        if !domain.contains(&out) {
            return Err(Error::LeftDomain {
                time: t,
                last: x.iter().copied().collect(),
            });
        }
        domain.wrap(&mut out);
        Ok(out)
    }

    fn check_start(&self, x: &Point) -> Result<()> {
        let domain = self.domain();
        if x.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: x.len(),
            });
        }
        if !domain.contains(x) {
            return Err(Error::OutOfDomain {
                point: x.iter().copied().collect(),
            });
        }
        Ok(())
    }

    /// `Ret_x(t u)`. `t = 0` returns `x` unchanged.
    pub fn evaluate(&self, x: &Point, u: &Tangent, t: f64) -> Result<Point> {
        self.check_start(x)?;
        if !(t >= 0.0) {
            return Err(Error::StepSizeInvalid { dt: t, horizon: t });
        }
        if t == 0.0 {
            return Ok(x.clone());
        }
        let out = match self {
            Retraction::ExactExp { structure, dt } => {
                let p = structure.flat_horizontal(x, u)?;
                match hamiltonian_endpoint(structure, x, &p, t, dt.min(t)) {
                    Ok((y, _)) => y,
                    Err(Error::LeftDomain { .. }) => {
                        return Err(Error::LeftDomain {
                            time: t,
                            last: x.iter().copied().collect(),
                        })
                    }
                    Err(e) => return Err(e),
                }
            }
            Retraction::Ret1 { structure } => ret1_point(structure, x, u, t)?,
            Retraction::Ret2 { connection }
            | Retraction::Ret3 { connection, .. }
            | Retraction::Ret3Prime { connection, .. } => ret2_point(connection, x, u, t)?,
            Retraction::GeodesicTransport { connection, dt } => {
                let n = x.len();
                geodesic_with_transport(connection, x, u, &DMatrix::identity(n, n), t, dt.min(t))
                    .map_err(|e| match e {
                        Error::LeftDomain { .. } => Error::LeftDomain {
                            time: t,
                            last: x.iter().copied().collect(),
                        },
                        other => other,
                    })?
                    .0
            }
        };
        self.finish(x, out, t)
    }

    /// `(Ret_x(t u), F̃(t))` for the frame-transporting kinds.
    pub fn evaluate_frame(&self, x: &Point, frame: &DMatrix<f64>, u: &Tangent, t: f64) -> Result<(Point, DMatrix<f64>)> {
        self.check_start(x)?;
        if !(t >= 0.0) {
            return Err(Error::StepSizeInvalid { dt: t, horizon: t });
        }
        if t == 0.0 {
            return Ok((x.clone(), frame.clone()));
        }
        match self {
            Retraction::Ret3 { connection, metric } => {
                let (y, f) = ret3_frame(connection, metric, x, frame, u, t, None)?;
                Ok((self.finish(x, y, t)?, f))
            }
            Retraction::Ret3Prime {
                connection,
                metric,
                anisotropy,
            } => {
                let (y, f) = ret3_frame(connection, metric, x, frame, u, t, anisotropy.as_ref())?;
                Ok((self.finish(x, y, t)?, f))
            }
            Retraction::GeodesicTransport { connection, dt } => {
                let (y, _, f) = geodesic_with_transport(connection, x, u, frame, t, dt.min(t)).map_err(|e| match e {
                    Error::LeftDomain { .. } => Error::LeftDomain {
                        time: t,
                        last: x.iter().copied().collect(),
                    },
                    other => other,
                })?;
                Ok((self.finish(x, y, t)?, f))
            }
            other => Err(Error::FrameNotSupported { kind: other.kind() }),
        }
    }
}

/// `x + t g p + ½t²(2 g^{lk} Γ^{ij}_k − g^{ik} Γ^{lj}_k) p_l p_j` with `p` the horizontal flat of `u`.
fn ret1_point(s: &SubRiemannianStructure, x: &Point, u: &Tangent, t: f64) -> Result<Point> {
    let p = s.flat_horizontal(x, u)?;
    ret1_from_covector(s, x, &p, t)
}

/// Second-order Taylor polynomial of the normal geodesic from a general
/// covector `p`, vertical components included.
pub fn ret1_from_covector(s: &SubRiemannianStructure, x: &Point, p: &Covector, t: f64) -> Result<Point> {
    let p = &p.0;
    let g = s.cometric(x)?;
    let dual = s.dual_christoffels(x)?;
    let n = s.n();
    let gp = &g * p;
    let first = dual.contract(p, &gp) * 2.0;
    let b = DVector::from_fn(n, |k, _| {
        let mut acc = 0.0;
        for l in 0..n {
            for j in 0..n {
                acc += dual.get(l, j, k) * p[l] * p[j];
            }
        }
        acc
    });
    let second = first - &g * b;
    Ok(x + gp * t + second * (0.5 * t * t))
}

/// `x + t u − ½t² Γ(u, u)`.
fn ret2_point(conn: &AffineConnection, x: &Point, u: &Tangent, t: f64) -> Result<Point> {
    let gamma = conn.christoffels(x)?;
    Ok(x + u * t - gamma.contract(u, u) * (0.5 * t * t))
}

/// Second-order frame polynomial `Id − tΓ(u) + ½t²(Γ(u)² − Γ̇(u))`, with
/// `Γ̇(u)^k_j = u^a u^b (∂_b Γ^k_{aj} − Γ^i_{ab} Γ^k_{ij})`.
pub fn frame_polynomial(conn: &AffineConnection, x: &Point, u: &Tangent, t: f64) -> Result<DMatrix<f64>> {
    let gamma = conn.christoffels(x)?;
    let dgamma = conn.christoffel_derivatives(x)?;
    let n = x.len();
    let gu = gamma.contract_middle(u);
    let mut gdot = -gamma.contract_middle(&gamma.contract(u, u));
    for (b, d) in dgamma.iter().enumerate() {
        if u[b] != 0.0 {
            gdot += d.contract_middle(u) * u[b];
        }
    }
    Ok(DMatrix::identity(n, n) - &gu * t + (&gu * &gu - gdot) * (0.5 * t * t))
}

/// Point and polar-corrected frame of Ret-3 / Ret-3′ before domain handling.
fn ret3_frame(
    conn: &AffineConnection,
    metric: &RiemannianMetric,
    x: &Point,
    frame: &DMatrix<f64>,
    u: &Tangent,
    t: f64,
    anisotropy: Option<&DMatrix<f64>>,
) -> Result<(Point, DMatrix<f64>)> {
    let y = ret2_point(conn, x, u, t)?;
    let poly = frame_polynomial(conn, x, u, t)?;
    let e = match anisotropy {
        None => poly * frame,
        Some(a) => {
            let a_inv = a
                .clone()
                .try_inverse()
                .ok_or(Error::InvalidConfig("anisotropy matrix is singular".into()))?;
            poly * frame * a_inv
        }
    };
    let g = metric.metric(&y);
    let (_, s_inv) = spd_sqrt_and_inverse(&(e.transpose() * g * &e))?;
    let f = match anisotropy {
        None => e * s_inv,
        Some(a) => e * s_inv * a,
    };
    Ok((y, f))
}

/// Errors of one sample across the t-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSample {
    pub x: Point,
    pub u: Tangent,
    pub errors: Vec<f64>,
    /// `None` when fewer than two errors exceed [`ERROR_FLOOR`].
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    pub t_grid: Vec<f64>,
    pub samples: Vec<OrderSample>,
}

impl OrderReport {
    /// Smallest per-sample slope among samples with a fit.
    pub fn min_slope(&self) -> Option<f64> {
        self.samples.iter().filter_map(|s| s.slope).reduce(f64::min)
    }

    /// Slope fitted to all above-floor errors pooled together.
    pub fn pooled_slope(&self) -> Option<f64> {
        let (t, e): (Vec<f64>, Vec<f64>) = self
            .samples
            .iter()
            .flat_map(|s| self.t_grid.iter().copied().zip(s.errors.iter().copied()))
            .unzip();
        log_log_slope(&t, &e, ERROR_FLOOR)
    }

    /// True when every sample stays at or below the floor on the whole grid.
    pub fn is_exact(&self) -> bool {
        self.samples.iter().all(|s| s.errors.iter().all(|&e| e <= ERROR_FLOOR))
    }

    pub fn max_error(&self) -> f64 {
        self.samples.iter().flat_map(|s| s.errors.iter().copied()).fold(0.0, f64::max)
    }

    /// Exact agreement, or every fitted sample reaching `threshold` with no
    /// sample left ambiguous (a single point above the floor).
    pub fn passes(&self, threshold: f64) -> bool {
        if self.is_exact() {
            return true;
        }
        let ambiguous = self
            .samples
            .iter()
            .any(|s| s.slope.is_none() && s.errors.iter().any(|&e| e > ERROR_FLOOR));
        !ambiguous && self.min_slope().is_some_and(|m| m >= threshold)
    }
}

/// Runs `error(x, u, t)` over every sample and grid value.
pub fn order_test(
    samples: &[(Point, Tangent)],
    t_grid: &[f64],
    error: impl Fn(&Point, &Tangent, f64) -> Result<f64>,
) -> Result<OrderReport> {
    let samples = samples
        .iter()
        .map(|(x, u)| {
            let errors = t_grid.iter().map(|&t| error(x, u, t)).collect::<Result<Vec<f64>>>()?;
            let slope = log_log_slope(t_grid, &errors, ERROR_FLOOR);
            Ok(OrderSample {
                x: x.clone(),
                u: u.clone(),
                errors,
                slope,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OrderReport {
        t_grid: t_grid.to_vec(),
        samples,
    })
}

/// Chart max-norm distance between `candidate` and `oracle` endpoints.
pub fn point_order_test(
    candidate: &Retraction,
    oracle: &Retraction,
    samples: &[(Point, Tangent)],
    t_grid: &[f64],
) -> Result<OrderReport> {
    let domain = candidate.domain().clone();
    order_test(samples, t_grid, |x, u, t| {
        let a = candidate.evaluate(x, u, t)?;
        let b = oracle.evaluate(x, u, t)?;
        Ok(domain.difference(&a, &b).amax())
    })
}

/// Joint point and frame error against geodesic transport with step `dt`.
/// `frames[i]` is the initial frame of sample `i`.
pub fn frame_order_test(
    candidate: &Retraction,
    connection: &AffineConnection,
    samples: &[(Point, Tangent)],
    frames: &[DMatrix<f64>],
    t_grid: &[f64],
    dt: f64,
) -> Result<OrderReport> {
    if frames.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            found: frames.len(),
        });
    }
    let domain = candidate.domain().clone();
    let oracle = Retraction::GeodesicTransport {
        connection: connection.clone(),
        dt,
    };
    let mut reports = Vec::with_capacity(samples.len());
    for (sample, f0) in samples.iter().zip(frames) {
        let one = order_test(std::slice::from_ref(sample), t_grid, |x, u, t| {
            let (xa, fa) = candidate.evaluate_frame(x, f0, u, t)?;
            let (xb, fb) = oracle.evaluate_frame(x, f0, u, t)?;
            Ok(domain.difference(&xa, &xb).amax().max((fa - fb).amax()))
        })?;
        reports.extend(one.samples);
    }
    Ok(OrderReport {
        t_grid: t_grid.to_vec(),
        samples: reports,
    })
}

/// `count` pairs `(x, u)`: `x` uniform in the sampling box, `u` uniform on
/// the horizontal unit sphere at `x`.
pub fn random_horizontal_samples(s: &SubRiemannianStructure, count: usize, seed: u64) -> Result<Vec<(Point, Tangent)>> {
    use rand::Rng;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = s.n();
    let (lo, hi) = s.domain().sample_box();
    (0..count)
        .map(|_| {
            let x = DVector::from_fn(n, |i, _| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>());
            let u = sample_horizontal_unit(s, &x, &mut rng)?;
            Ok((x, u))
        })
        .collect()
}

/// Oracle for point order tests: exact exponential at step [`DT_ORACLE`].
pub fn oracle_exp(s: &SubRiemannianStructure) -> Retraction {
    Retraction::ExactExp {
        structure: s.clone(),
        dt: DT_ORACLE,
    }
}
