//! Single-chart validity regions and deterministic sampling inside them.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::Point;

type Predicate = Arc<dyn Fn(&Point) -> bool + Send + Sync>;

/// Chart validity region: an open box, optional periodic coordinates and an
/// optional extra predicate. The sampling box bounds quasi-random test points
/// and is independent of the validity box (it must lie inside it).
#[derive(Clone)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    periods: Vec<Option<f64>>,
    predicate: Option<Predicate>,
    sample_lower: Vec<f64>,
    sample_upper: Vec<f64>,
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Domain")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("periods", &self.periods)
            .field("predicate", &self.predicate.is_some())
            .finish()
    }
}

impl Domain {
    /// All of `ℝ^n`; test points are drawn from `[-1, 1]^n`.
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            periods: vec![None; n],
            predicate: None,
            sample_lower: vec![-1.0; n],
            sample_upper: vec![1.0; n],
        }
    }

    /// Open box `lower < x < upper`.
    pub fn open_box(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        let n = lower.len();
        let sample_lower = lower
            .iter()
            .zip(&upper)
            .map(|(&l, &u)| if l.is_finite() && u.is_finite() { l + 0.1 * (u - l) } else if l.is_finite() { l + 0.1 } else { -1.0 })
            .collect();
        let sample_upper = lower
            .iter()
            .zip(&upper)
            .map(|(&l, &u)| if l.is_finite() && u.is_finite() { u - 0.1 * (u - l) } else if u.is_finite() { u - 0.1 } else { 1.0 })
            .collect();
        Self {
            lower,
            upper,
            periods: vec![None; n],
            predicate: None,
            sample_lower,
            sample_upper,
        }
    }

    pub fn with_period(mut self, coord: usize, period: f64) -> Self {
        self.periods[coord] = Some(period);
        self
    }

    pub fn with_predicate(mut self, p: impl Fn(&Point) -> bool + Send + Sync + 'static) -> Self {
        self.predicate = Some(Arc::new(p));
        self
    }

    pub fn with_sample_box(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), self.dim());
        assert_eq!(upper.len(), self.dim());
        self.sample_lower = lower;
        self.sample_upper = upper;
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Bounds of the box used for test points.
    pub fn sample_box(&self) -> (&[f64], &[f64]) {
        (&self.sample_lower, &self.sample_upper)
    }

    pub fn contains(&self, x: &Point) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let inside = x
            .iter()
            .enumerate()
            .all(|(i, &v)| self.periods[i].is_some() || (v > self.lower[i] && v < self.upper[i]));
        inside && self.predicate.as_ref().is_none_or(|p| p(x))
    }

    /// True when the axis-aligned neighbourhood of radius `margin` lies in the domain.
    pub fn contains_with_margin(&self, x: &Point, margin: f64) -> bool {
        if !self.contains(x) {
            return false;
        }
        x.iter().enumerate().all(|(i, &v)| {
            self.periods[i].is_some() || (v - margin > self.lower[i] && v + margin < self.upper[i])
        })
    }

    /// Maps periodic coordinates into `[0, period)`.
    pub fn wrap(&self, x: &mut Point) {
        for (i, p) in self.periods.iter().enumerate() {
            if let Some(p) = p {
                let v = x[i].rem_euclid(*p);
                // rem_euclid can round up to exactly p
                x[i] = if v >= *p { 0.0 } else { v };
            }
        }
    }

    /// `a − b`, with periodic coordinates reduced to `[−p/2, p/2)`.
    pub fn difference(&self, a: &Point, b: &Point) -> Point {
        let mut d = a - b;
        for (i, p) in self.periods.iter().enumerate() {
            if let Some(p) = p {
                d[i] = (d[i] + 0.5 * p).rem_euclid(*p) - 0.5 * p;
            }
        }
        d
    }

    pub fn is_periodic(&self) -> bool {
        self.periods.iter().any(Option::is_some)
    }

    /// `count` Halton points in the sampling box (bases 2, 3, 5, ...), skipping the origin term.
    pub fn quasi_random_points(&self, count: usize) -> Vec<Point> {
        let n = self.dim();
        (1..=count)
            .map(|idx| {
                DVector::from_fn(n, |d, _| {
                    let h = radical_inverse(idx as u64, PRIMES[d % PRIMES.len()]);
                    self.sample_lower[d] + h * (self.sample_upper[d] - self.sample_lower[d])
                })
            })
            .collect()
    }
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Period of the longitude coordinate used by the ellipsoid chart.
pub const FULL_TURN: f64 = TAU;
