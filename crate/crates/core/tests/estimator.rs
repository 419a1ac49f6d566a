use approx::assert_relative_eq;
use geobayes::embedding::AmbientPoint;
use geobayes::estimator::{
    estimate_batch, exact_bayes_euclidean, plugin_estimate, second_order_drift, second_order_estimate, EstimatorKind,
    EstimatorSpec, PointEstimator,
};
use geobayes::manifold::{ManifoldDescriptor, QuadratureGrid};
use geobayes::maps::{CodomainPoint, MapDescriptor};
use geobayes::prior::{PriorDensity, PriorForm};
use geobayes::Error;
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};

fn circle() -> ManifoldDescriptor {
    ManifoldDescriptor::circle(1.0).unwrap()
}

fn uniform(m: &ManifoldDescriptor, res: &[usize]) -> PriorDensity {
    PriorDensity::uniform(&QuadratureGrid::new(m, res).unwrap())
}

fn pt(v: &[f64]) -> AmbientPoint {
    AmbientPoint(v.to_vec())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// I₁(x)/I₀(x) from the continued fraction 1/(2/x + 1/(4/x + …)),
/// evaluated bottom-up.
fn bessel_ratio(x: f64) -> f64 {
    let mut t = 0.0;
    for k in (1..=400).rev() {
        t = 1.0 / (2.0 * k as f64 / x + t);
    }
    t
}

/// Posterior mean of ι(θ) for the unit circle under a uniform prior.
fn circle_posterior_mean(x: &[f64], eps: f64) -> Vec<f64> {
    let rho = norm(x);
    let r = bessel_ratio(rho / (eps * eps));
    vec![r * x[0] / rho, r * x[1] / rho]
}

#[test]
fn spec_validation() {
    let c = circle();
    let prior = uniform(&c, &[32]);
    let iota = MapDescriptor::inclusion(&c).unwrap();
    assert!(EstimatorSpec::plugin(&iota, &prior, 0.0).is_err());
    assert!(EstimatorSpec::plugin(&iota, &prior, f64::NAN).is_err());
    let power = MapDescriptor::circle_power(&c, 2).unwrap();
    assert!(matches!(EstimatorSpec::exact_euclidean(&power, &prior, 0.1, 64), Err(Error::UnsupportedCodomain(_))));
    let s = ManifoldDescriptor::sphere(1.0).unwrap();
    assert!(matches!(EstimatorSpec::plugin(&MapDescriptor::identity(&s).unwrap(), &prior, 0.1), Err(Error::GridMismatch(_))));
    let exact = EstimatorSpec::exact_euclidean(&iota, &prior, 0.1, 64).unwrap();
    assert_eq!(exact.with_epsilon(0.2).unwrap().kind, EstimatorKind::ExactEuclidean);
}

#[test]
fn plugin_examples() {
    let c = circle();
    let prior = uniform(&c, &[32]);
    let id = EstimatorSpec::plugin(&MapDescriptor::identity(&c).unwrap(), &prior, 0.1).unwrap();
    assert_eq!(plugin_estimate(&id, &pt(&[1.5, 0.0])).unwrap().coords(), &[0.0]);
    let iota = EstimatorSpec::plugin(&MapDescriptor::inclusion(&c).unwrap(), &prior, 0.1).unwrap();
    let y = plugin_estimate(&iota, &pt(&[1.5, 0.0])).unwrap();
    assert_relative_eq!(y.coords()[0], 1.0, epsilon = 1e-15);
    assert!(y.coords()[1].abs() < 1e-15);
    // Points at or beyond the reach are rejected.
    assert!(matches!(plugin_estimate(&iota, &pt(&[2.0, 0.0])), Err(Error::OutsideTube { .. })));

    let t = ManifoldDescriptor::flat_torus(1.0, 1.0).unwrap();
    let proj = MapDescriptor::torus_to_circle(&t, 0).unwrap();
    let spec = EstimatorSpec::plugin(&proj, &uniform(&t, &[16, 16]), 0.1).unwrap();
    let x = t.embed_coords(&[0.7, 2.1]);
    let nudged: Vec<f64> = x.iter().enumerate().map(|(k, v)| v * if k < 2 { 1.2 } else { 0.9 }).collect();
    assert_relative_eq!(plugin_estimate(&spec, &pt(&nudged)).unwrap().coords()[0], 0.7, epsilon = 1e-12);
}

#[test]
fn second_order_examples() {
    let c = circle();
    let prior = uniform(&c, &[32]);
    let eps = 0.1;
    let id = EstimatorSpec::second_order(&MapDescriptor::identity(&c).unwrap(), &prior, eps).unwrap();
    let x = pt(&[0.8 * 1.3f64.cos(), 0.8 * 1.3f64.sin()]);
    assert_eq!(second_order_estimate(&id, &x).unwrap(), plugin_estimate(&id, &x).unwrap());

    let iota = EstimatorSpec::second_order(&MapDescriptor::inclusion(&c).unwrap(), &prior, eps).unwrap();
    let y = second_order_estimate(&iota, &x).unwrap();
    let scale = 1.0 - eps * eps / 2.0;
    assert_relative_eq!(y.coords()[0], scale * 1.3f64.cos(), epsilon = 1e-14);
    assert_relative_eq!(y.coords()[1], scale * 1.3f64.sin(), epsilon = 1e-14);
}

#[test]
fn second_order_drift_follows_the_log_prior_gradient() {
    let c = circle();
    let grid = QuadratureGrid::new(&c, &[64]).unwrap();
    let id = MapDescriptor::identity(&c).unwrap();
    let closed = PriorDensity::from_form(&grid, PriorForm::Cosine { amplitude: 0.5, axis: 0 }).unwrap();
    let log_lambda = |t: f64| (1.0 + 0.5 * t.cos()).ln();
    let h = 1e-4;
    let fd = |t: f64| {
        // Central difference with Richardson extrapolation.
        let d1 = (log_lambda(t + h) - log_lambda(t - h)) / (2.0 * h);
        let d2 = (log_lambda(t + 2.0 * h) - log_lambda(t - 2.0 * h)) / (4.0 * h);
        (4.0 * d1 - d2) / 3.0
    };
    let points = [0.3, 1.9, 4.0];
    for t in points {
        let drift = second_order_drift(&id, &closed, &[t]).unwrap();
        assert!((drift[0] - fd(t)).abs() < 1e-8, "{} vs {}", drift[0], fd(t));
    }
    // Grid priors differentiate ω spectrally and interpolate with four-point
    // stencils, so off-node drift errors fall as h⁴.
    let grid_error = |n: usize| {
        let g = QuadratureGrid::new(&c, &[n]).unwrap();
        let nodal: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * g.coords(i)[0].cos()).collect();
        let sampled = PriorDensity::from_lambda(&g, &nodal).unwrap();
        let id = MapDescriptor::identity(&c).unwrap();
        points.iter().map(|&t| (second_order_drift(&id, &sampled, &[t]).unwrap()[0] - fd(t)).abs()).fold(0.0, f64::max)
    };
    let (e64, e128) = (grid_error(64), grid_error(128));
    assert!(e128 < 1e-6 && (e64 / e128).log2() > 3.5, "{e64} {e128}");
    let eps = 0.1;
    let spec = EstimatorSpec::second_order(&id, &closed, eps).unwrap();
    let y = second_order_estimate(&spec, &pt(&[1.2 * 0.3f64.cos(), 1.2 * 0.3f64.sin()])).unwrap();
    let d = second_order_drift(&id, &closed, &[0.3]).unwrap()[0];
    assert_relative_eq!(y.coords()[0], 0.3 + eps * eps * d, epsilon = 1e-14);
}

#[test]
fn second_order_step_has_the_drift_length() {
    let s = ManifoldDescriptor::sphere(1.0).unwrap();
    let grid = QuadratureGrid::new(&s, &[16, 32]).unwrap();
    let prior = PriorDensity::from_form(&grid, PriorForm::Cosine { amplitude: 0.4, axis: 0 }).unwrap();
    let eps = 0.15;
    for map in [MapDescriptor::identity(&s).unwrap(), MapDescriptor::inclusion(&s).unwrap()] {
        let spec = EstimatorSpec::second_order(&map, &prior, eps).unwrap();
        for theta in [[0.7, 1.1], [2.0, 5.5]] {
            let x: Vec<f64> = s.embed_coords(&theta).iter().map(|v| v * 1.25).collect();
            let y = second_order_estimate(&spec, &pt(&x)).unwrap();
            let base = map.eval_coords(&theta);
            let drift = second_order_drift(&map, &prior, &theta).unwrap();
            let expected = eps * eps * map.codomain.inner(&base, &drift, &drift).sqrt();
            let dist = map.codomain.distance_coords(&base, y.coords()).value;
            assert!((dist - expected).abs() < 1e-10, "{}: {dist} vs {expected}", map.name());
        }
    }
}

#[test]
fn exact_estimator_examples() {
    let c = circle();
    let prior = uniform(&c, &[32]);
    let iota = MapDescriptor::inclusion(&c).unwrap();
    let spec = EstimatorSpec::exact_euclidean(&iota, &prior, 0.1, 512).unwrap();
    let origin = exact_bayes_euclidean(&spec, &pt(&[0.0, 0.0])).unwrap();
    assert!(norm(&origin.point) < 1e-14);
    let e = exact_bayes_euclidean(&spec, &pt(&[1.1, 0.0])).unwrap();
    assert!(e.converged);
    assert!(e.point[0] > 0.0 && e.point[0] < 1.0 && e.point[1].abs() < 1e-14);
    assert!((e.point[0] - circle_posterior_mean(&[1.1, 0.0], 0.1)[0]).abs() < 1e-10);
    let far = EstimatorSpec::exact_euclidean(&iota, &prior, 0.01, 64).unwrap();
    assert!(matches!(exact_bayes_euclidean(&far, &pt(&[30.0, 0.0])), Err(Error::DenominatorUnderflow(_))));
    let plug = EstimatorSpec::plugin(&iota, &prior, 0.1).unwrap();
    assert!(exact_bayes_euclidean(&plug, &pt(&[1.1, 0.0])).is_err());
}

#[test]
fn exact_estimator_matches_bessel_oracle() {
    let c = circle();
    let iota = MapDescriptor::inclusion(&c).unwrap();
    let spec = EstimatorSpec::exact_euclidean(&iota, &uniform(&c, &[32]), 0.1, 512).unwrap();
    for (rho, t) in [(0.6, 0.2), (0.95, 2.5), (1.3, 4.1)] {
        for eps in [0.2, 0.1, 0.05] {
            let x = [rho * f64::cos(t), rho * f64::sin(t)];
            let e = exact_bayes_euclidean(&spec.with_epsilon(eps).unwrap(), &pt(&x)).unwrap();
            let oracle = circle_posterior_mean(&x, eps);
            assert!(e.converged);
            for (a, b) in e.point.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn exact_and_second_order_agree_to_fourth_order_on_the_manifold() {
    let c = circle();
    let iota = MapDescriptor::inclusion(&c).unwrap();
    let prior = uniform(&c, &[32]);
    let exact = EstimatorSpec::exact_euclidean(&iota, &prior, 0.2, 512).unwrap();
    let second = EstimatorSpec::second_order(&iota, &prior, 0.2).unwrap();
    let gap = |rho: f64, eps: f64| {
        let x = pt(&[rho * 0.9f64.cos(), rho * 0.9f64.sin()]);
        let a = exact_bayes_euclidean(&exact.with_epsilon(eps).unwrap(), &x).unwrap().point;
        let b = second_order_estimate(&second.with_epsilon(eps).unwrap(), &x).unwrap();
        let d: Vec<f64> = a.iter().zip(b.coords()).map(|(p, q)| p - q).collect();
        norm(&d)
    };
    // On Θ the difference is ε⁴/8 + O(ε⁶).
    for eps in [0.1, 0.05, 0.025] {
        assert_relative_eq!(gap(1.0, eps) / eps.powi(4), 0.125, max_relative = 0.05);
    }
    // Off Θ the ε² coefficients differ by (1 − 1/ρ)/2, since the exact
    // estimator's correction scales with 1/ρ while the second-order one is
    // constant along normals.
    for rho in [0.7, 1.3] {
        for eps in [0.05, 0.025] {
            let coef = gap(rho, eps) / (eps * eps);
            assert_relative_eq!(coef, (1.0 - 1.0 / rho).abs() / 2.0, max_relative = 0.05);
        }
    }
}

#[test]
fn normal_derivative_of_the_exact_correction_is_second_order() {
    let c = circle();
    let iota = MapDescriptor::inclusion(&c).unwrap();
    let exact = EstimatorSpec::exact_euclidean(&iota, &uniform(&c, &[32]), 0.2, 512).unwrap();
    let h = 1e-3;
    let derivative = |eps: f64| {
        let spec = exact.with_epsilon(eps).unwrap();
        // Radial component of (exact − plugin) at ρ = 1 ± h; plugin is e₁.
        let f = |rho: f64| exact_bayes_euclidean(&spec, &pt(&[rho, 0.0])).unwrap().point[0] - 1.0;
        (f(1.0 + h) - f(1.0 - h)) / (2.0 * h)
    };
    let d: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&e| derivative(e)).collect();
    for (v, eps) in d.iter().zip([0.2, 0.1, 0.05]) {
        assert_relative_eq!(v / (eps * eps), 0.5, max_relative = 0.06);
    }
    let order = (d[1] / d[2]).log2();
    assert!((order - 2.0).abs() < 0.1, "observed order {order}");
}

#[test]
fn estimators_commute_with_rotations() {
    let rot = |a: f64, v: &[f64]| -> Vec<f64> {
        let (s, c) = a.sin_cos();
        let mut out = v.to_vec();
        out[0] = c * v[0] - s * v[1];
        out[1] = s * v[0] + c * v[1];
        out
    };
    let c = circle();
    let iota = MapDescriptor::inclusion(&c).unwrap();
    let prior = uniform(&c, &[32]);
    let specs = [
        EstimatorSpec::plugin(&iota, &prior, 0.1).unwrap(),
        EstimatorSpec::second_order(&iota, &prior, 0.1).unwrap(),
        EstimatorSpec::exact_euclidean(&iota, &prior, 0.1, 512).unwrap(),
    ];
    for spec in &specs {
        for (x, a) in [([1.2, 0.3], 0.77), ([-0.4, 0.6], 2.9)] {
            let gx = spec.estimate(&pt(&x)).unwrap();
            let grx = spec.estimate(&pt(&rot(a, &x))).unwrap();
            for (p, q) in rot(a, gx.coords()).iter().zip(grx.coords()) {
                assert!((p - q).abs() < 1e-9, "{:?}", spec.kind);
            }
        }
    }
    let s = ManifoldDescriptor::sphere(1.0).unwrap();
    let iota = MapDescriptor::inclusion(&s).unwrap();
    let spec = EstimatorSpec::second_order(&iota, &uniform(&s, &[8, 16]), 0.1).unwrap();
    let x = [0.3, -0.9, 0.5];
    let gx = spec.estimate(&pt(&x)).unwrap();
    let grx = spec.estimate(&pt(&rot(1.3, &x))).unwrap();
    for (p, q) in rot(1.3, gx.coords()).iter().zip(grx.coords()) {
        assert!((p - q).abs() < 1e-9);
    }
}

#[test]
fn batch_evaluation_is_order_preserving_and_deterministic() {
    let c = circle();
    let spec = EstimatorSpec::second_order(&MapDescriptor::inclusion(&c).unwrap(), &uniform(&c, &[32]), 0.1).unwrap();
    let points: Vec<AmbientPoint> =
        (0..500).map(|k| pt(&[(1.0 + 0.001 * k as f64) * (k as f64).cos(), (k as f64).sin()])).collect();
    let a = estimate_batch(&spec, &points);
    let b = estimate_batch(&spec, &points);
    for ((x, p), q) in points.iter().zip(&a).zip(&b) {
        assert_eq!(p, q);
        assert_eq!(p, &spec.estimate(x));
    }
}

fn catalog() -> Vec<(ManifoldDescriptor, Vec<usize>)> {
    vec![
        (circle(), vec![16]),
        (ManifoldDescriptor::sphere(1.5).unwrap(), vec![8, 16]),
        (ManifoldDescriptor::flat_torus(1.0, 2.0).unwrap(), vec![8, 8]),
        (ManifoldDescriptor::torus_of_revolution(2.0, 1.0).unwrap(), vec![8, 8]),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plugin_recovers_the_map_on_embedded_points(which in 0usize..4, s in prop::array::uniform2(0.0..1.0f64)) {
        let (m, res) = &catalog()[which];
        let theta: Vec<f64> = m
            .periodic_coordinates()
            .iter()
            .zip(&s)
            .map(|(&p, &t)| if p { t * TAU } else { 0.2 + t * (PI - 0.4) })
            .collect();
        for map in [MapDescriptor::identity(m).unwrap(), MapDescriptor::inclusion(m).unwrap()] {
            let spec = EstimatorSpec::plugin(&map, &uniform(m, res), 0.1).unwrap();
            let y = plugin_estimate(&spec, &AmbientPoint(m.embed_coords(&theta))).unwrap();
            let target = map.eval_coords(&theta);
            let d = match &y {
                CodomainPoint::Euclidean(v) => norm(&v.iter().zip(&target).map(|(a, b)| a - b).collect::<Vec<_>>()),
                CodomainPoint::Chart(p) => map.codomain.distance_coords(&p.coords, &target).value,
            };
            prop_assert!(d < 1e-12);
        }
    }
}
