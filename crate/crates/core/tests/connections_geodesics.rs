//! Connection predicates, geodesic integrators and frame transport.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use srwalk::connections::{
    default_sample_points, frame_parallel_connection, horizontal_torsion_is_vertical, is_compatible, is_normal,
    kappa_correction, normal_dynamic_residual,
};
use srwalk::geodesics::{
    affine_geodesic, geodesic_with_transport, hamiltonian_endpoint, hamiltonian_flow, heisenberg_exact_geodesic,
    normal_geodesic_horizontal, parallel_transport_frame, GeodesicPath,
};
use srwalk::linalg::orthonormality_residual;
use srwalk::models::{self, orthonormal_coordinate_frame};
use srwalk::retractions::random_horizontal_samples;
use srwalk::{AffineConnection, Covector, SubRiemannianStructure};

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

/// Built-in compatible connections with their structures.
fn compatible_connections() -> Vec<(SubRiemannianStructure, AffineConnection)> {
    let mut out = Vec::new();
    for s in [models::euclidean(3), models::heisenberg(), models::twisted()] {
        let fp = frame_parallel_connection(&s);
        let kappa = kappa_correction(&s, &fp).unwrap();
        out.push((s.clone(), fp));
        out.push((s, kappa));
    }
    let e = models::ellipsoid();
    out.push((e.structure.clone(), frame_parallel_connection(&e.structure)));
    out.push((e.structure.clone(), e.levi_civita.clone()));
    out
}

#[test]
fn adjoints_of_compatible_connections_are_normal() {
    for (s, c) in compatible_connections() {
        let pts = default_sample_points(&s);
        let compat = is_compatible(&c, &s, &pts, 1e-8).unwrap();
        assert!(compat.holds, "{} on {}: {:?}", c.label(), s.name(), compat);
        let adj = c.adjoint();
        let normal = is_normal(&adj, &s, &pts, 1e-8).unwrap();
        assert!(normal.holds, "{} on {}: {:?}", adj.label(), s.name(), normal);
        // and back: the adjoint of a normal connection is compatible
        let back = is_compatible(&adj.adjoint(), &s, &pts, 1e-8).unwrap();
        assert!(back.holds);
    }
}

#[test]
fn kappa_correction_postcondition_on_every_model() {
    let e = models::ellipsoid();
    let cases = [
        models::euclidean(2),
        models::euclidean(3),
        models::heisenberg(),
        models::twisted(),
        e.structure.clone(),
    ];
    for s in cases {
        let k = kappa_correction(&s, &frame_parallel_connection(&s)).unwrap();
        let pts = default_sample_points(&s);
        assert!(is_compatible(&k, &s, &pts, 1e-8).unwrap().holds, "{}", s.name());
        let t = horizontal_torsion_is_vertical(&k, &s, &pts, 1e-8).unwrap();
        assert!(t.holds, "{}: {:?}", s.name(), t);
    }
}

#[test]
fn kappa_correction_on_a_riemannian_surface_is_levi_civita() {
    // with k = n the corrected connection is torsion-free and metric, hence Levi-Civita
    let e = models::ellipsoid();
    let k = kappa_correction(&e.structure, &frame_parallel_connection(&e.structure)).unwrap();
    for x in default_sample_points(&e.structure) {
        let d = k.christoffels(&x).unwrap().max_abs_diff(&e.levi_civita.christoffels(&x).unwrap());
        assert!(d < 1e-8, "{d}");
    }
}

#[test]
fn kappa_correction_rejects_incompatible_reference() {
    let s = models::heisenberg();
    let flat = AffineConnection::flat(s.domain().clone());
    assert!(kappa_correction(&s, &flat).is_err());
}

#[test]
fn geodesics_of_a_connection_and_its_adjoint_coincide() {
    for (s, c) in compatible_connections() {
        let adj = c.adjoint();
        for (x, u) in random_horizontal_samples(&s, 5, 11).unwrap() {
            let a = affine_geodesic(&c, &x, &u, 0.5, 1e-3).unwrap();
            let b = affine_geodesic(&adj, &x, &u, 0.5, 1e-3).unwrap();
            for (p, q) in a.points.iter().zip(&b.points) {
                let d = s.domain().difference(p, q).amax();
                assert!(d < 1e-10, "{} on {}: {d}", c.label(), s.name());
            }
        }
    }
}

#[test]
fn hamiltonian_is_conserved_on_every_model() {
    let e = models::ellipsoid();
    let cases: [(SubRiemannianStructure, f64); 5] = [
        (models::euclidean(3), 2.0),
        (models::heisenberg(), 2.0),
        (models::twisted(), 1.0),
        (e.structure.clone(), 1.0),
        (models::ellipsoid_surface(1.0).structure, 1.0),
    ];
    for (s, horizon) in cases {
        for (x, u) in random_horizontal_samples(&s, 5, 3).unwrap() {
            // add a vertical covector component where there is one
            let mut p = s.flat_horizontal(&x, &u).unwrap().0;
            for vf in s.complement_frame() {
                p += vf.value(&x) * 0.7;
            }
            let path = hamiltonian_flow(&s, &x, &Covector(p), horizon, 1e-3).unwrap();
            let drift = path.hamiltonian_drift(&s).unwrap();
            assert!(drift <= 1e-8, "{}: {drift}", s.name());
        }
    }
}

fn rk4_halving_ratio(s: &SubRiemannianStructure, x: &DVector<f64>, p: &Covector, horizon: f64, dt: f64) -> f64 {
    let end = |h: f64| hamiltonian_endpoint(s, x, p, horizon, h).unwrap().0;
    let reference = end(dt / 8.0);
    let e1 = s.domain().difference(&end(dt), &reference).amax();
    let e2 = s.domain().difference(&end(dt / 2.0), &reference).amax();
    e1 / e2
}

#[test]
fn rk4_is_fourth_order_on_heisenberg_and_ellipsoid() {
    let h = models::heisenberg();
    let ratio = rk4_halving_ratio(&h, &v(&[0.2, -0.1, 0.3]), &Covector(v(&[1.0, 0.5, 2.0])), 1.0, 0.05);
    assert!(ratio >= 14.0, "heisenberg {ratio}");
    let e = models::ellipsoid().structure;
    let ratio = rk4_halving_ratio(&e, &v(&[0.4, 1.2]), &Covector(v(&[1.0, 0.8])), 1.0, 0.05);
    assert!(ratio >= 14.0, "ellipsoid {ratio}");
}

#[test]
fn hamiltonian_flow_matches_closed_form_on_heisenberg() {
    let s = models::heisenberg();
    let x0 = v(&[0.3, -0.2, 0.1]);
    let p0 = Covector(v(&[0.6, -0.8, 1.7]));
    let path = hamiltonian_flow(&s, &x0, &p0, 1.0, 1e-3).unwrap();
    for (t, x) in path.times.iter().zip(&path.points) {
        let exact = heisenberg_exact_geodesic(&x0, &p0, *t);
        assert!((x - exact).amax() < 1e-10);
    }
}

#[test]
fn compatible_affine_geodesics_keep_horizontal_speed() {
    for (s, c) in compatible_connections() {
        // short horizon on the ellipsoid keeps clear of the pole band
        let horizon = if s.domain().is_periodic() { 0.2 } else { 1.0 };
        for (x, u) in random_horizontal_samples(&s, 3, 5).unwrap() {
            let path = affine_geodesic(&c, &x, &u, horizon, 1e-3).unwrap();
            let vels = path.velocities.as_ref().unwrap();
            for (p, w) in path.points.iter().zip(vels) {
                let speed = s.horizontal_norm(p, w).unwrap();
                assert!((speed - 1.0).abs() <= 1e-7, "{} on {}: {speed}", c.label(), s.name());
            }
        }
    }
}

#[test]
fn frame_parallel_geodesics_are_normal_on_heisenberg() {
    let s = models::heisenberg();
    let c = frame_parallel_connection(&s);
    for (x, u) in random_horizontal_samples(&s, 10, 9).unwrap() {
        let a = affine_geodesic(&c, &x, &u, 1.0, 1e-3).unwrap();
        let b = normal_geodesic_horizontal(&s, &x, &u, 1.0, 1e-3).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!((p - q).amax() < 1e-6);
        }
    }
}

#[test]
fn adjoint_of_compatible_connection_carries_the_hamiltonian_flow() {
    for s in [models::heisenberg(), models::twisted()] {
        let c = kappa_correction(&s, &frame_parallel_connection(&s)).unwrap().adjoint();
        for (x, u) in random_horizontal_samples(&s, 3, 17).unwrap() {
            let mut p = s.flat_horizontal(&x, &u).unwrap().0;
            p += s.complement_frame()[0].value(&x) * 0.5;
            let r = normal_dynamic_residual(&c, &s, &x, &p, 1.0, 1e-3).unwrap();
            assert!(r < 1e-8, "{}: {r}", s.name());
        }
    }
}

#[test]
fn levi_civita_transport_preserves_orthonormality() {
    let e = models::ellipsoid();
    let x = v(&[0.5, 1.3]);
    let f0 = orthonormal_coordinate_frame(&e.metric.metric(&x));
    let u = f0.column(0) * 0.6 + f0.column(1) * 0.8;
    let (x1, _, f1) = geodesic_with_transport(&e.levi_civita, &x, &u, &f0, 1.0, 1e-3).unwrap();
    let r = orthonormality_residual(&e.metric.metric(&x1), &f1);
    assert!(r < 1e-8, "{r}");
}

#[test]
fn sphere_holonomy_around_a_latitude() {
    let sphere = models::ellipsoid_surface(1.0);
    let lc = &sphere.levi_civita;
    for t0 in [0.6, PI / 3.0, 1.2] {
        let steps = 4000;
        let h = TAU / steps as f64;
        let mut path = GeodesicPath {
            times: Vec::new(),
            points: Vec::new(),
            covectors: None,
            velocities: Some(Vec::new()),
            frames: None,
        };
        for j in 0..=steps {
            let s = (j as f64 * h).rem_euclid(TAU);
            path.times.push(j as f64 * h);
            path.points.push(v(&[s, t0]));
            path.velocities.as_mut().unwrap().push(v(&[1.0, 0.0]));
        }
        let x0 = v(&[0.0, t0]);
        let f0 = orthonormal_coordinate_frame(&sphere.metric.metric(&x0));
        let f1 = parallel_transport_frame(lc, &path, &f0).unwrap().pop().unwrap();
        let rot: DMatrix<f64> = f0.clone().try_inverse().unwrap() * f1;
        // rotation by 2π(1 − cos t0) up to orientation; compare cosines
        let expected = (TAU * (1.0 - t0.cos())).cos();
        assert!((rot[(0, 0)] - expected).abs() < 1e-8, "t0 = {t0}: {} vs {expected}", rot[(0, 0)]);
        assert!((rot[(1, 1)] - expected).abs() < 1e-8);
    }
}
