//! Retraction axioms and order, polar-step properties, and walk-level invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use srwalk::connections::{frame_parallel_connection, kappa_correction};
use srwalk::field::ScalarField;
use srwalk::geodesics::DT_EXPERIMENT;
use srwalk::linalg::{log_log_slope, orthonormality_residual};
use srwalk::models::{self, default_anisotropy, orthonormal_coordinate_frame, EllipsoidModel};
use srwalk::retractions::{
    default_t_grid, frame_order_test, frame_polynomial, oracle_exp, point_order_test, random_horizontal_samples,
    Retraction, SECOND_ORDER_SLOPE,
};
use srwalk::walker::{generator_estimate, walk, FrameCheck, Quadrature, WalkConfig, GENERATOR_LIMIT_FACTOR};
use srwalk::{Point, SubRiemannianStructure};

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

fn rotation(a: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
}

/// Every point retraction applicable to a structure, paired with it.
fn point_retractions() -> Vec<(SubRiemannianStructure, Retraction)> {
    let mut out = Vec::new();
    for s in [models::euclidean(3), models::heisenberg(), models::twisted()] {
        let kappa = kappa_correction(&s, &frame_parallel_connection(&s)).unwrap();
        out.push((s.clone(), Retraction::ExactExp { structure: s.clone(), dt: DT_EXPERIMENT }));
        out.push((s.clone(), Retraction::Ret1 { structure: s.clone() }));
        out.push((s, Retraction::Ret2 { connection: kappa }));
    }
    let e = models::ellipsoid();
    out.push((e.structure.clone(), Retraction::ExactExp { structure: e.structure.clone(), dt: DT_EXPERIMENT }));
    out.push((e.structure.clone(), Retraction::Ret1 { structure: e.structure.clone() }));
    out.push((e.structure.clone(), Retraction::Ret2 { connection: e.levi_civita.clone() }));
    out.push((e.structure.clone(), ret3(&e)));
    out.push((e.structure.clone(), ret3_prime(&e, Some(default_anisotropy()))));
    out
}

fn ret3(e: &EllipsoidModel) -> Retraction {
    Retraction::Ret3 {
        connection: e.levi_civita.clone(),
        metric: e.metric.clone(),
    }
}

fn ret3_prime(e: &EllipsoidModel, a: Option<DMatrix<f64>>) -> Retraction {
    Retraction::Ret3Prime {
        connection: e.levi_civita.clone(),
        metric: e.metric.clone(),
        anisotropy: a,
    }
}

#[test]
fn retractions_fix_base_point_and_have_unit_velocity() {
    let h = 1e-4;
    for (s, r) in point_retractions() {
        for (x, u) in random_horizontal_samples(&s, 5, 21).unwrap() {
            assert_eq!(r.evaluate(&x, &u, 0.0).unwrap(), x);
            // one-sided second-order difference
            let d1 = s.domain().difference(&r.evaluate(&x, &u, h).unwrap(), &x);
            let d2 = s.domain().difference(&r.evaluate(&x, &u, 2.0 * h).unwrap(), &x);
            let vel = (d1 * 4.0 - d2) / (2.0 * h);
            assert!((vel - &u).amax() < 1e-6, "{} on {}", r.kind(), s.name());
        }
    }
}

#[test]
fn second_order_point_retractions_on_every_model() {
    for (s, r) in point_retractions() {
        let samples = random_horizontal_samples(&s, 20, 4).unwrap();
        let report = point_order_test(&r, &oracle_exp(&s), &samples, &default_t_grid()).unwrap();
        assert!(
            report.passes(SECOND_ORDER_SLOPE),
            "{} on {}: min slope {:?}, max error {}",
            r.kind(),
            s.name(),
            report.min_slope(),
            report.max_error()
        );
    }
}

fn ellipsoid_frames(e: &EllipsoidModel, samples: &[(Point, DVector<f64>)], a: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, (x, _))| orthonormal_coordinate_frame(&e.metric.metric(x)) * rotation(0.7 * i as f64) * a)
        .collect()
}

#[test]
fn ret3_family_is_second_order_in_point_and_frame() {
    let e = models::ellipsoid();
    let samples = random_horizontal_samples(&e.structure, 20, 8).unwrap();
    let id = DMatrix::identity(2, 2);
    let a = default_anisotropy();
    for (r, frames) in [
        (ret3(&e), ellipsoid_frames(&e, &samples, &id)),
        (ret3_prime(&e, Some(a.clone())), ellipsoid_frames(&e, &samples, &a)),
    ] {
        let report = frame_order_test(&r, &e.levi_civita, &samples, &frames, &default_t_grid(), 1e-5).unwrap();
        assert!(report.passes(SECOND_ORDER_SLOPE), "{}: {:?}", r.kind(), report.min_slope());
    }
}

#[test]
fn ret3_base_point_is_ret2_base_point() {
    let e = models::ellipsoid();
    let r2 = Retraction::Ret2 { connection: e.levi_civita.clone() };
    let r3 = ret3(&e);
    for (x, u) in random_horizontal_samples(&e.structure, 20, 1).unwrap() {
        let f0 = orthonormal_coordinate_frame(&e.metric.metric(&x));
        for t in [0.3, 0.05] {
            let (y, _) = r3.evaluate_frame(&x, &f0, &u, t).unwrap();
            assert_eq!(y, r2.evaluate(&x, &u, t).unwrap());
            assert_eq!(y, r3.evaluate(&x, &u, t).unwrap());
        }
    }
}

#[test]
fn ret3_prime_with_identity_is_ret3() {
    let e = models::ellipsoid();
    for (x, u) in random_horizontal_samples(&e.structure, 10, 2).unwrap() {
        let f0 = orthonormal_coordinate_frame(&e.metric.metric(&x)) * rotation(0.3);
        let a = ret3(&e).evaluate_frame(&x, &f0, &u, 0.1).unwrap();
        let b = ret3_prime(&e, None).evaluate_frame(&x, &f0, &u, 0.1).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn polar_factor_is_third_order_close_to_identity() {
    let e = models::ellipsoid();
    let ts = [0.1, 0.05, 0.025, 0.0125];
    for (x, u) in random_horizontal_samples(&e.structure, 10, 6).unwrap() {
        let f0 = orthonormal_coordinate_frame(&e.metric.metric(&x));
        let dev: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let y = Retraction::Ret2 { connection: e.levi_civita.clone() }.evaluate(&x, &u, t).unwrap();
                let f = frame_polynomial(&e.levi_civita, &x, &u, t).unwrap() * &f0;
                let s2 = f.transpose() * e.metric.metric(&y) * &f;
                let eig = s2.symmetric_eigen().eigenvalues;
                assert!(eig.min() > 0.0);
                eig.iter().map(|l| (l.sqrt() - 1.0).abs()).fold(0.0, f64::max)
            })
            .collect();
        let slope = log_log_slope(&ts, &dev, 1e-14).unwrap();
        assert!(slope > 2.8, "{slope} {dev:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ret3_output_is_orthonormal(s0 in 0.0..6.28f64, t0 in 0.4..2.7f64, ang in 0.0..6.28f64, rot in 0.0..6.28f64, t in 0.001..0.3f64) {
        let e = models::ellipsoid();
        let x = v(&[s0, t0]);
        let f0 = orthonormal_coordinate_frame(&e.metric.metric(&x)) * rotation(rot);
        let u = f0.column(0) * ang.cos() + f0.column(1) * ang.sin();
        let (y, f) = ret3(&e).evaluate_frame(&x, &f0, &u, t).unwrap();
        prop_assert!(orthonormality_residual(&e.metric.metric(&y), &f) <= 1e-12);
        let a = default_anisotropy();
        let (y, f) = ret3_prime(&e, Some(a.clone())).evaluate_frame(&x, &(&f0 * &a), &u, t).unwrap();
        prop_assert!(e.metric.frame_residual(&y, &f, Some(&a)).unwrap() <= 1e-12);
    }
}

#[test]
fn frame_walk_keeps_orthonormality() {
    let e = models::ellipsoid();
    let x0 = v(&[0.0, std::f64::consts::FRAC_PI_2]);
    let mut cfg = WalkConfig::new(e.structure.clone(), ret3(&e), 0.05, 2000, 3, x0.clone());
    cfg.initial_frame = Some(orthonormal_coordinate_frame(&e.metric.metric(&x0)));
    cfg.frame_check = Some(FrameCheck {
        metric: e.metric.clone(),
        anisotropy: None,
    });
    cfg.record_every = 100;
    cfg.replicas = 4;
    for path in walk(&cfg).unwrap() {
        let r = path.max_frame_residual.unwrap();
        assert!(r <= 1e-9, "replica {}: {r}", path.replica);
    }
}

#[test]
fn generator_vanishes_on_odd_functions_in_euclidean_space() {
    let s = models::euclidean(2);
    let c = v(&[0.3, -0.4]);
    let f = {
        let c = c.clone();
        ScalarField::new(move |x| {
            let d = x - &c;
            d[0].powi(3) + 2.0 * d[0] * d[1] * d[1] + (3.0 * d[1]).sin()
        })
    };
    let r = Retraction::Ret1 { structure: s.clone() };
    let report = generator_estimate(&s, &r, &f, &[c], &[0.2, 0.1, 0.05], Quadrature::Deterministic(32)).unwrap();
    for row in &report.rows {
        assert!(row.value.abs() < 1e-10, "{}", row.value);
    }
}

#[test]
fn generator_converges_on_heisenberg_for_second_order_retractions() {
    // distance to the measured limit GENERATOR_LIMIT_FACTOR · Δ^V f
    let s = models::heisenberg();
    let kappa = kappa_correction(&s, &frame_parallel_connection(&s)).unwrap();
    let eps = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let points: Vec<Point> = s.domain().quasi_random_points(5);
    let wavy = ScalarField::new(|x| (x[0] + 0.5 * x[2]).sin() * (0.8 * x[1]).cos() + 0.3 * x[2] * x[2]);
    for r in [
        Retraction::ExactExp { structure: s.clone(), dt: DT_EXPERIMENT },
        Retraction::Ret1 { structure: s.clone() },
        Retraction::Ret2 { connection: kappa.clone() },
    ] {
        for f in [models::probe_bump(3), wavy.clone()] {
            let report = generator_estimate(&s, &r, &f, &points, &eps, Quadrature::Deterministic(32)).unwrap();
            let errs = report.max_errors(GENERATOR_LIMIT_FACTOR);
            for w in errs.windows(2) {
                assert!(w[1] <= 1.1 * w[0] + 1e-12, "{} not monotone: {errs:?}", r.kind());
            }
            let scale = points
                .iter()
                .map(|x| (GENERATOR_LIMIT_FACTOR * s.sub_laplacian(x, &f).unwrap()).abs())
                .fold(0.0, f64::max);
            assert!(*errs.last().unwrap() <= 0.1 * scale + 1e-3, "{}: {errs:?}", r.kind());
        }
    }
}
