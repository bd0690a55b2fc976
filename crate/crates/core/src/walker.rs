//! Retraction-based random walks, their transition and generator operators,
//! parabolic time scaling, and moment statistics.
//!
//! A walk step samples `u` uniformly on the horizontal unit sphere and moves
//! to `Ret_x(ε√k u)`; frame walks sample `ū ∈ S^{n−1}`, set `u = F ū` and move
//! for time `ε√n`. With this scaling the one-step generator
//! `(U^ε f − f)/ε²` tends to `½ Δ^V f` ([`GENERATOR_LIMIT_FACTOR`]).

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::connections::RiemannianMetric;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::linalg::log_log_slope;
use crate::retractions::Retraction;
use crate::srgeom::SubRiemannianStructure;
use crate::{Point, Tangent};

/// Generator family used for replica streams.
pub const RNG_FAMILY: &str = "ChaCha20 (rand_chacha 0.9)";
/// How replica streams are derived from the seed.
pub const RNG_STREAM_RECIPE: &str = "ChaCha20Rng::seed_from_u64(seed), then set_stream(replica index)";
/// `lim_{ε→0} (U^ε f − f)/ε² = GENERATOR_LIMIT_FACTOR · Δ^V f` under the ε√k step.
pub const GENERATOR_LIMIT_FACTOR: f64 = 0.5;
/// Generator errors at or below this count as exact; roundoff in
/// `(U^ε f − f)/ε²` grows like `1/ε²`.
pub const GENERATOR_ERROR_FLOOR: f64 = 1e-9;

/// RNG stream of replica `replica`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Uniform point on `S^{k−1} ⊂ ℝ^k` by normalized Gaussians.
pub fn sample_unit_sphere<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let c = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = c.norm();
        if norm > 1e-300 {
            return c / norm;
        }
    }
}

/// Uniform unit vector of `H_x`: `Σ c_a E_a(x)` with `c` uniform on `S^{k−1}`.
pub fn sample_horizontal_unit<R: Rng + ?Sized>(s: &SubRiemannianStructure, x: &Point, rng: &mut R) -> Result<Tangent> {
    s.check_domain(x)?;
    let c = sample_unit_sphere(s.k(), rng);
    let mut u = DVector::zeros(s.n());
    for (a, e) in s.horizontal_frame().iter().enumerate() {
        u.axpy(c[a], &e.value(x), 1.0);
    }
    Ok(u)
}

/// Tracks `‖(F A⁻¹)ᵀ g (F A⁻¹) − Id‖∞` along frame walks.
#[derive(Debug, Clone)]
pub struct FrameCheck {
    pub metric: RiemannianMetric,
    pub anisotropy: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct WalkConfig {
    /// Supplies the horizontal frame for sampling.
    pub structure: SubRiemannianStructure,
    pub retraction: Retraction,
    pub epsilon: f64,
    pub steps: usize,
    pub seed: u64,
    pub initial: Point,
    /// Present for frame-bundle walks.
    pub initial_frame: Option<DMatrix<f64>>,
    pub replicas: usize,
    pub record_every: usize,
    pub frame_check: Option<FrameCheck>,
}

impl WalkConfig {
    pub fn new(structure: SubRiemannianStructure, retraction: Retraction, epsilon: f64, steps: usize, seed: u64, initial: Point) -> Self {
        Self {
            structure,
            retraction,
            epsilon,
            steps,
            seed,
            initial,
            initial_frame: None,
            replicas: 1,
            record_every: 1,
            frame_check: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidConfig("replicas must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be at least 1".into()));
        }
        self.structure.check_domain(&self.initial)?;
        if let Some(f) = &self.initial_frame {
            let n = self.structure.n();
            if f.shape() != (n, n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: f.nrows(),
                });
            }
            if f.determinant().abs() < 1e-12 {
                return Err(Error::InvalidConfig("initial frame is singular".into()));
            }
            if !self.retraction.transports_frames() {
                return Err(Error::FrameNotSupported {
                    kind: self.retraction.kind(),
                });
            }
        }
        Ok(())
    }

    /// `ε√k` for point walks, `ε√n` for frame walks.
    pub fn step_time(&self) -> f64 {
        let d = if self.initial_frame.is_some() {
            self.structure.n()
        } else {
            self.structure.k()
        };
        self.epsilon * (d as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkRecord {
    pub step: usize,
    pub x: Point,
    pub frame: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WalkStatus {
    Completed,
    /// The step with this index would have left the chart.
    LeftDomain { step: usize },
    /// A numerical failure at this step (e.g. a degenerate frame).
    Failed { step: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath {
    pub replica: usize,
    /// Configured number of steps.
    pub steps: usize,
    /// Steps `0, r, 2r, ...` plus the final state reached.
    pub records: Vec<WalkRecord>,
    pub status: WalkStatus,
    pub max_frame_residual: Option<f64>,
}

impl WalkPath {
    pub fn is_completed(&self) -> bool {
        self.status == WalkStatus::Completed
    }

    pub fn last(&self) -> &WalkRecord {
        self.records.last().expect("the initial state is always recorded")
    }

    /// Last step index actually reached.
    pub fn reached_step(&self) -> usize {
        self.last().step
    }

    pub fn record_at(&self, step: usize, record_every: usize) -> Result<&WalkRecord> {
        self.records
            .binary_search_by_key(&step, |r| r.step)
            .map(|i| &self.records[i])
            .map_err(|_| Error::StepNotRecorded { step, record_every })
    }
}

/// Runs every replica. Exits from the chart are reported in the path status.
pub fn walk(config: &WalkConfig) -> Result<Vec<WalkPath>> {
    config.validate()?;
    Ok((0..config.replicas)
        .into_par_iter()
        .map(|r| run_replica(config, r))
        .collect())
}

fn run_replica(config: &WalkConfig, replica: usize) -> WalkPath {
    let mut rng = replica_rng(config.seed, replica as u64);
    let s = &config.structure;
    let tau = config.step_time();
    let mut x = config.initial.clone();
    let mut frame = config.initial_frame.clone();
    let residual = |x: &Point, f: &Option<DMatrix<f64>>| -> Option<f64> {
        let check = config.frame_check.as_ref()?;
        check.metric.frame_residual(x, f.as_ref()?, check.anisotropy.as_ref()).ok()
    };
    let mut max_residual = residual(&x, &frame);
    let mut records = vec![WalkRecord {
        step: 0,
        x: x.clone(),
        frame: frame.clone(),
    }];
    let mut status = WalkStatus::Completed;
    let mut reached = 0;
    for step in 1..=config.steps {
        let result = match &frame {
            None => sample_horizontal_unit(s, &x, &mut rng).and_then(|u| config.retraction.evaluate(&x, &u, tau).map(|y| (y, None))),
            Some(f) => {
                let ubar = sample_unit_sphere(s.n(), &mut rng);
                let u = f * ubar;
                config.retraction.evaluate_frame(&x, f, &u, tau).map(|(y, g)| (y, Some(g)))
            }
        };
        match result {
            Ok((y, f)) => {
                x = y;
                frame = f;
                reached = step;
                if let Some(r) = residual(&x, &frame) {
                    max_residual = Some(max_residual.map_or(r, |m| m.max(r)));
                }
                if step % config.record_every == 0 {
                    records.push(WalkRecord {
                        step,
                        x: x.clone(),
                        frame: frame.clone(),
                    });
                }
            }
            Err(Error::LeftDomain { .. }) | Err(Error::OutOfDomain { .. }) => {
                status = WalkStatus::LeftDomain { step };
                break;
            }
            Err(e) => {
                status = WalkStatus::Failed {
                    step,
                    reason: e.to_string(),
                };
                break;
            }
        }
    }
    if records.last().map(|r| r.step) != Some(reached) {
        records.push(WalkRecord { step: reached, x, frame });
    }
    WalkPath {
        replica,
        steps: config.steps,
        records,
        status,
        max_frame_residual: max_residual,
    }
}

/// `⌊t/ε²⌋`, snapping ratios within `1e-9` relative of an integer to it.
pub fn scaled_step_index(epsilon: f64, t: f64) -> Result<usize> {
    if !(epsilon > 0.0 && t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidConfig(format!("invalid time scaling (epsilon = {epsilon}, t = {t})")));
    }
    let r = t / (epsilon * epsilon);
    let nearest = r.round();
    let idx = if (r - nearest).abs() <= 1e-9 * r.max(1.0) { nearest } else { r.floor() };
    Ok(idx as usize)
}

/// State of `X^ε_t = x^ε_{⌊t/ε²⌋}`.
pub fn time_scaled_sample<'a>(path: &'a WalkPath, epsilon: f64, t: f64, record_every: usize) -> Result<&'a WalkRecord> {
    let idx = scaled_step_index(epsilon, t)?;
    if idx > path.steps || idx > path.reached_step() {
        return Err(Error::HorizonExceeded {
            time: t,
            steps: path.steps.min(path.reached_step()),
        });
    }
    path.record_at(idx, record_every)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEntry {
    /// Index into the function list.
    pub function: usize,
    pub time: f64,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub entries: Vec<MomentEntry>,
    /// Replicas excluded because they did not complete.
    pub censored: usize,
}

impl MomentTable {
    pub fn get(&self, function: usize, time: f64) -> Option<&MomentEntry> {
        self.entries.iter().find(|e| e.function == function && e.time == time)
    }
}

/// Means, sample variances and standard errors of `f(X^ε_t)` over completed replicas.
pub fn moment_statistics(
    paths: &[WalkPath],
    functions: &[ScalarField],
    times: &[f64],
    epsilon: f64,
    record_every: usize,
) -> Result<MomentTable> {
    let used: Vec<&WalkPath> = paths.iter().filter(|p| p.is_completed()).collect();
    let censored = paths.len() - used.len();
    if used.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} completed replicas ({} censored); need at least 2",
            used.len(),
            censored
        )));
    }
    let mut entries = Vec::with_capacity(functions.len() * times.len());
    for (fi, f) in functions.iter().enumerate() {
        for &t in times {
            let values = used
                .iter()
                .map(|p| time_scaled_sample(p, epsilon, t, record_every).map(|r| f.value(&r.x)))
                .collect::<Result<Vec<f64>>>()?;
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            entries.push(MomentEntry {
                function: fi,
                time: t,
                mean,
                variance,
                std_error: (variance / count as f64).sqrt(),
                count,
            });
        }
    }
    Ok(MomentTable { entries, censored })
}

/// Quadrature over the horizontal unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quadrature {
    /// `m` equispaced directions for `k = 2`; the two points `±E_1` for `k = 1`.
    Deterministic(usize),
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEstimate {
    pub value: f64,
    /// Monte Carlo standard error; `None` for deterministic rules.
    pub std_error: Option<f64>,
}

/// Mean and Monte Carlo standard error of `f(Ret_x(√k ε u)) − f(x)` over
/// the horizontal unit sphere. Averaging increments avoids cancelling
/// against `f(x)` after the sum.
fn mean_increment(
    s: &SubRiemannianStructure,
    r: &Retraction,
    f: &ScalarField,
    x: &Point,
    epsilon: f64,
    quadrature: Quadrature,
) -> Result<TransitionEstimate> {
    s.check_domain(x)?;
    if epsilon == 0.0 {
        return Ok(TransitionEstimate {
            value: 0.0,
            std_error: None,
        });
    }
    let fx = f.value(x);
    let tau = epsilon * (s.k() as f64).sqrt();
    let frame: Vec<DVector<f64>> = s.horizontal_frame().iter().map(|e| e.value(x)).collect();
    let eval = |u: &Tangent| r.evaluate(x, u, tau).map(|y| f.value(&y) - fx);
    match quadrature {
        Quadrature::Deterministic(m) => {
            let values: Vec<f64> = match s.k() {
                1 => vec![eval(&frame[0])?, eval(&(-&frame[0]))?],
                2 => (0..m)
                    .map(|j| {
                        let th = TAU * j as f64 / m as f64;
                        eval(&(&frame[0] * th.cos() + &frame[1] * th.sin()))
                    })
                    .collect::<Result<_>>()?,
                k => {
                    return Err(Error::InvalidConfig(format!(
                        "deterministic quadrature needs k <= 2, structure has k = {k}"
                    )))
                }
            };
            Ok(TransitionEstimate {
                value: values.iter().sum::<f64>() / values.len() as f64,
                std_error: None,
            })
        }
        Quadrature::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidConfig("Monte Carlo needs at least 2 samples".into()));
            }
            let mut rng = replica_rng(seed, 0);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..samples {
                let u = sample_horizontal_unit(s, x, &mut rng)?;
                let v = eval(&u)?;
                sum += v;
                sum_sq += v * v;
            }
            let nf = samples as f64;
            let mean = sum / nf;
            let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
            Ok(TransitionEstimate {
                value: mean,
                std_error: Some((var / nf).sqrt()),
            })
        }
    }
}

/// `(U^ε f)(x)`: average of `f(Ret_x(√k ε u))` over the horizontal unit sphere.
pub fn transition_operator(
    s: &SubRiemannianStructure,
    r: &Retraction,
    f: &ScalarField,
    x: &Point,
    epsilon: f64,
    quadrature: Quadrature,
) -> Result<TransitionEstimate> {
    let inc = mean_increment(s, r, f, x, epsilon, quadrature)?;
    Ok(TransitionEstimate {
        value: f.value(x) + inc.value,
        std_error: inc.std_error,
    })
}

/// `L^ε f(x) = (U^ε f(x) − f(x)) / ε²`.
pub fn generator_value(
    s: &SubRiemannianStructure,
    r: &Retraction,
    f: &ScalarField,
    x: &Point,
    epsilon: f64,
    quadrature: Quadrature,
) -> Result<f64> {
    Ok(mean_increment(s, r, f, x, epsilon, quadrature)?.value / (epsilon * epsilon))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorRow {
    pub epsilon: f64,
    pub point_index: usize,
    /// `L^ε f(x)`.
    pub value: f64,
    /// `Δ^V f(x)`.
    pub laplacian: f64,
}

impl GeneratorRow {
    /// `|L^ε f − c Δ^V f|`.
    pub fn error_against(&self, factor: f64) -> f64 {
        (self.value - factor * self.laplacian).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorReport {
    pub eps_grid: Vec<f64>,
    pub rows: Vec<GeneratorRow>,
}

impl GeneratorReport {
    /// Per-ε maximum over base points of `|L^ε f − factor·Δ^V f|`.
    pub fn max_errors(&self, factor: f64) -> Vec<f64> {
        self.eps_grid
            .iter()
            .map(|&eps| {
                self.rows
                    .iter()
                    .filter(|r| r.epsilon == eps)
                    .map(|r| r.error_against(factor))
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// Log-log slope of [`Self::max_errors`] against ε; `None` when fewer than
    /// two errors exceed the floor.
    pub fn slope(&self, factor: f64) -> Option<f64> {
        log_log_slope(&self.eps_grid, &self.max_errors(factor), GENERATOR_ERROR_FLOOR)
    }

    /// True when every error is at or below the floor.
    pub fn is_exact(&self, factor: f64) -> bool {
        self.max_errors(factor).iter().all(|&e| e <= GENERATOR_ERROR_FLOOR)
    }
}

/// Tabulates `L^ε f` over base points and a strictly decreasing ε-grid.
pub fn generator_estimate(
    s: &SubRiemannianStructure,
    r: &Retraction,
    f: &ScalarField,
    points: &[Point],
    eps_grid: &[f64],
    quadrature: Quadrature,
) -> Result<GeneratorReport> {
    if eps_grid.is_empty() || eps_grid.windows(2).any(|w| !(w[1] < w[0])) || eps_grid.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidConfig("epsilon grid must be positive and strictly decreasing".into()));
    }
    match quadrature {
        Quadrature::Deterministic(m) if m < 8 => {
            return Err(Error::InvalidConfig(format!("deterministic quadrature needs m >= 8, got {m}")))
        }
        Quadrature::MonteCarlo { samples, .. } if samples < 10_000 => {
            return Err(Error::InvalidConfig(format!("Monte Carlo quadrature needs N >= 10000, got {samples}")))
        }
        _ => {}
    }
    let laplacians = points.iter().map(|x| s.sub_laplacian(x, f)).collect::<Result<Vec<f64>>>()?;
    let mut rows = Vec::with_capacity(points.len() * eps_grid.len());
    for &eps in eps_grid {
        for (i, x) in points.iter().enumerate() {
            rows.push(GeneratorRow {
                epsilon: eps,
                point_index: i,
                value: generator_value(s, r, f, x, eps, quadrature)?,
                laplacian: laplacians[i],
            });
        }
    }
    Ok(GeneratorReport {
        eps_grid: eps_grid.to_vec(),
        rows,
    })
}
