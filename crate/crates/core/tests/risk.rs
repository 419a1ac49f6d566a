use approx::assert_relative_eq;
use geobayes::embedding::AmbientPoint;
use geobayes::estimator::{EstimatorSpec, PointEstimator};
use geobayes::manifold::{ManifoldDescriptor, QuadratureGrid};
use geobayes::maps::{CodomainPoint, MapDescriptor};
use geobayes::prior::{PriorDensity, PriorForm};
use geobayes::risk::{
    bayes_risk, bayes_risk_ambient, centered_risk, expansion_coefficients, fit_expansion, pointwise_risk,
    rejected_mass_bound, risk_curve, risk_curve_with, CovarianceSource, RiskEstimate,
};
use geobayes::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const EPS_GRID: [f64; 5] = [0.05, 0.075, 0.1, 0.15, 0.2];

fn circle() -> ManifoldDescriptor {
    ManifoldDescriptor::circle(1.0).unwrap()
}

fn grid(m: &ManifoldDescriptor, res: &[usize]) -> QuadratureGrid {
    QuadratureGrid::new(m, res).unwrap()
}

fn uniform(m: &ManifoldDescriptor, res: &[usize]) -> PriorDensity {
    PriorDensity::uniform(&grid(m, res))
}

fn cosine(m: &ManifoldDescriptor, res: &[usize], amplitude: f64, axis: usize) -> PriorDensity {
    PriorDensity::from_form(&grid(m, res), PriorForm::Cosine { amplitude, axis }).unwrap()
}

fn within(a: &RiskEstimate, b: &RiskEstimate, k: f64) -> bool {
    (a.value - b.value).abs() <= k * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

#[test]
fn constant_map_has_zero_risk() {
    let c = circle();
    let constant = MapDescriptor::constant(&c, vec![0.3, -1.0]).unwrap();
    let prior = uniform(&c, &[16]);
    for spec in [
        EstimatorSpec::plugin(&constant, &prior, 0.2).unwrap(),
        EstimatorSpec::second_order(&constant, &prior, 0.2).unwrap(),
    ] {
        let r = pointwise_risk(&spec, &[1.0], 2000, 3).unwrap();
        assert_eq!((r.value, r.std_error), (0.0, 0.0));
        let r = centered_risk(&spec, 0.0, 2000, 3).unwrap();
        assert_eq!(r.value, 0.0);
    }
    let coeffs = expansion_coefficients(&constant, &prior, &grid(&c, &[16])).unwrap();
    assert_eq!((coeffs.a2, coeffs.a4), (0.0, 0.0));
}

#[test]
fn sample_count_is_validated() {
    let c = circle();
    let spec = EstimatorSpec::plugin(&MapDescriptor::inclusion(&c).unwrap(), &uniform(&c, &[16]), 0.1).unwrap();
    assert!(matches!(pointwise_risk(&spec, &[0.0], 999, 1), Err(Error::InvalidArgument(_))));
}

#[test]
fn plugin_leading_term_is_the_energy_density() {
    let c = circle();
    let prior = uniform(&c, &[16]);
    let eps = 0.1;
    // The plugin ε⁴ coefficient is O(1), so the sample size keeps the
    // standard error above the ε⁴ bias, where the leading-term check is
    // meaningful.
    for (map, a2) in [(MapDescriptor::inclusion(&c).unwrap(), 1.0), (MapDescriptor::circle_power(&c, 2).unwrap(), 4.0)] {
        let spec = EstimatorSpec::plugin(&map, &prior, eps).unwrap();
        let r = pointwise_risk(&spec, &[0.4], 20_000, 7).unwrap();
        let ratio = r.value / (eps * eps);
        let se = r.std_error / (eps * eps);
        assert!((ratio - a2).abs() < 4.0 * se, "{}: {ratio} ± {se}", map.name());
        assert_eq!(r.rejected_mass, 0.0);
    }
}

#[test]
fn second_order_bayes_risk_on_the_circle() {
    let c = circle();
    let spec =
        EstimatorSpec::second_order(&MapDescriptor::inclusion(&c).unwrap(), &uniform(&c, &[16]), 0.1).unwrap();
    let r = bayes_risk(&spec, 200_000, 11).unwrap();
    let expected = 0.01 + 0.5e-4;
    assert!((r.value - expected).abs() < 4.0 * r.std_error, "{} vs {expected} ± {}", r.value, r.std_error);
}

#[test]
fn bayes_risk_is_the_volume_average_of_pointwise_risk() {
    let t = ManifoldDescriptor::torus_of_revolution(2.0, 1.0).unwrap();
    let g = grid(&t, &[8, 8]);
    let spec = EstimatorSpec::plugin(&MapDescriptor::inclusion(&t).unwrap(), &PriorDensity::uniform(&g), 0.3).unwrap();
    let vol = t.volume();
    let (mut mean, mut var) = (0.0, 0.0);
    for i in 0..g.len() {
        let r = pointwise_risk(&spec, g.coords(i), 10_000, 100 + i as u64).unwrap();
        let w = g.weights[i] / vol;
        mean += w * r.value;
        var += (w * r.std_error).powi(2);
    }
    let avg = RiskEstimate { value: mean, std_error: var.sqrt(), samples: 0, epsilon: 0.3, rejected_mass: 0.0, seed: 0 };
    let b = bayes_risk(&spec, 100_000, 5).unwrap();
    assert!(within(&avg, &b, 3.0), "{} ± {} vs {} ± {}", avg.value, avg.std_error, b.value, b.std_error);
}

#[test]
fn prior_sampling_and_ambient_integration_agree() {
    let c = circle();
    let prior = cosine(&c, &[64], 0.5, 0);
    let spec = EstimatorSpec::second_order(&MapDescriptor::inclusion(&c).unwrap(), &prior, 0.15).unwrap();
    let a = bayes_risk(&spec, 100_000, 21).unwrap();
    let b = bayes_risk_ambient(&spec, 100_000, 22, &[256]).unwrap();
    assert!(within(&a, &b, 3.0), "{} ± {} vs {} ± {}", a.value, a.std_error, b.value, b.std_error);
    assert!(b.rejected_mass < 1e-6);
}

#[test]
fn leading_term_does_not_depend_on_the_prior() {
    let c = circle();
    let id = MapDescriptor::identity(&c).unwrap();
    let bump: Vec<f64> = {
        let g = grid(&c, &[64]);
        (0..64).map(|i| (-(geobayes::manifold::wrap_difference(g.coords(i)[0] - 1.0) / 0.4).powi(2)).exp() + 1e-3).collect()
    };
    let bumped = PriorDensity::from_lambda(&grid(&c, &[64]), &bump).unwrap();
    let eps = 0.05;
    let a = bayes_risk(&EstimatorSpec::plugin(&id, &uniform(&c, &[64]), eps).unwrap(), 100_000, 1).unwrap();
    let b = bayes_risk(&EstimatorSpec::plugin(&id, &bumped, eps).unwrap(), 100_000, 2).unwrap();
    let scale = eps * eps;
    let ra = RiskEstimate { value: a.value / scale, std_error: a.std_error / scale, ..a.clone() };
    let rb = RiskEstimate { value: b.value / scale, std_error: b.std_error / scale, ..b.clone() };
    assert!(within(&ra, &rb, 3.0));
    assert_relative_eq!(ra.value, 1.0, max_relative = 0.02);
}

#[test]
fn expansion_coefficients_of_catalog_maps() {
    let c = circle();
    let iota = MapDescriptor::inclusion(&c).unwrap();
    let e = expansion_coefficients(&iota, &uniform(&c, &[32]), &grid(&c, &[32])).unwrap();
    assert!((e.a2 - 1.0).abs() < 1e-10 && (e.a4 - 0.5).abs() < 1e-8, "{} {}", e.a2, e.a4);

    let s = ManifoldDescriptor::sphere(1.0).unwrap();
    let e = expansion_coefficients(&MapDescriptor::identity(&s).unwrap(), &uniform(&s, &[8, 16]), &grid(&s, &[8, 16])).unwrap();
    assert!((e.a2 - 2.0).abs() < 1e-10 && (e.a4 - 2.0 / 3.0).abs() < 1e-6, "{} {}", e.a2, e.a4);

    // Γ = γ∘π carries the curvature of the embedded fibre circle, so the
    // projection has A₄ = 1/r² rather than zero (flat torus in ℝ⁴).
    let t = ManifoldDescriptor::flat_torus(1.0, 1.0).unwrap();
    let proj = MapDescriptor::torus_to_circle(&t, 0).unwrap();
    let e = expansion_coefficients(&proj, &uniform(&t, &[8, 8]), &grid(&t, &[8, 8])).unwrap();
    assert!((e.a2 - 1.0).abs() < 1e-10 && (e.a4 - 1.0).abs() < 1e-6, "{} {}", e.a2, e.a4);
}

#[test]
fn pointwise_integrand_matches_operator_form() {
    let c = circle();
    let t = ManifoldDescriptor::flat_torus(1.0, 2.0).unwrap();
    let s = ManifoldDescriptor::sphere(1.0).unwrap();
    let cases = vec![
        (MapDescriptor::inclusion(&c).unwrap(), cosine(&c, &[64], 0.5, 0), grid(&c, &[64])),
        (MapDescriptor::circle_power(&c, 2).unwrap(), cosine(&c, &[64], 0.3, 0), grid(&c, &[64])),
        (MapDescriptor::identity(&t).unwrap(), cosine(&t, &[32, 32], 0.4, 1), grid(&t, &[32, 32])),
        (MapDescriptor::inclusion(&t).unwrap(), cosine(&t, &[32, 32], 0.4, 0), grid(&t, &[32, 32])),
        (MapDescriptor::identity(&s).unwrap(), uniform(&s, &[12, 24]), grid(&s, &[12, 24])),
    ];
    for (map, prior, g) in cases {
        let e = expansion_coefficients(&map, &prior, &g).unwrap();
        assert!((e.a4 - e.operator_form).abs() < 1e-8, "{}: {} vs {}", map.name(), e.a4, e.operator_form);
    }
    let e = expansion_coefficients(&MapDescriptor::inclusion(&c).unwrap(), &cosine(&c, &[64], 0.5, 0), &grid(&c, &[64])).unwrap();
    assert!(e.dirichlet > 0.0);
    assert!(e.opposite_sign_form() - e.a4 > 0.1);
}

#[test]
fn fit_recovers_a_constructed_curve() {
    let normal = Normal::new(0.0, 1e-9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let estimates: Vec<RiskEstimate> = EPS_GRID
        .iter()
        .map(|&e| RiskEstimate {
            value: 3.0 * e * e + 7.0 * e.powi(4) + normal.sample(&mut rng),
            std_error: 1e-9,
            samples: 1,
            epsilon: e,
            rejected_mass: 0.0,
            seed: 4,
        })
        .collect();
    let fit = fit_expansion(&estimates).unwrap();
    assert!((fit.a2_hat - 3.0).abs() < 3.0 * fit.a2_se());
    assert!((fit.a4_hat - 7.0).abs() < 3.0 * fit.a4_se());
    assert_eq!(fit.covariance_source, CovarianceSource::StandardErrors);
    let det = fit.covariance[0][0] * fit.covariance[1][1] - fit.covariance[0][1] * fit.covariance[1][0];
    assert!(fit.covariance[0][0] > 0.0 && det > 0.0);

    assert!(matches!(fit_expansion(&estimates[..3]), Err(Error::InsufficientDesign(_))));
    let narrow: Vec<RiskEstimate> = [0.1, 0.12, 0.14, 0.16]
        .iter()
        .map(|&e| RiskEstimate { epsilon: e, ..estimates[0].clone() })
        .collect();
    assert!(matches!(fit_expansion(&narrow), Err(Error::InsufficientDesign(_))));
    let repeated: Vec<RiskEstimate> = [0.05, 0.05, 0.2, 0.2, 0.2]
        .iter()
        .map(|&e| RiskEstimate { epsilon: e, ..estimates[0].clone() })
        .collect();
    assert!(matches!(fit_expansion(&repeated), Err(Error::InsufficientDesign(_))));
}

#[test]
fn monte_carlo_is_reproducible_across_thread_counts() {
    let c = circle();
    let spec = EstimatorSpec::second_order(&MapDescriptor::inclusion(&c).unwrap(), &cosine(&c, &[32], 0.5, 0), 0.1).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| bayes_risk(&spec, 20_000, 9).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, bayes_risk(&spec, 20_000, 9).unwrap());
    assert_ne!(a.value, bayes_risk(&spec, 20_000, 10).unwrap().value);
}

#[test]
fn common_random_numbers_change_values_within_noise() {
    let c = circle();
    let spec = EstimatorSpec::second_order(&MapDescriptor::inclusion(&c).unwrap(), &uniform(&c, &[16]), 0.1).unwrap();
    let n = |_: f64| 50_000;
    let on = risk_curve(&spec, &EPS_GRID, &n, 31, true).unwrap();
    let off = risk_curve(&spec, &EPS_GRID, &n, 31, false).unwrap();
    for (a, b) in on.estimates.iter().zip(&off.estimates) {
        assert!(within(a, b, 3.0));
    }
    // Under common random numbers the first shard draws are shared.
    assert_ne!(on.shard_means[0][0], off.shard_means[0][0]);
    let fit = on.fit().unwrap();
    assert_eq!(fit.covariance_source, CovarianceSource::BatchMeans);
    assert!((fit.a2_hat - 1.0).abs() < 4.0 * fit.a2_se());
    // Sharing draws across levels shrinks the ε⁴ uncertainty.
    assert!(fit.a4_se() < 0.5 * off.fit().unwrap().a4_se());
}

#[test]
fn rejected_mass_respects_the_tail_bound() {
    let c = circle();
    let spec = EstimatorSpec::plugin(&MapDescriptor::inclusion(&c).unwrap(), &uniform(&c, &[16]), 1.0 / 6.0).unwrap();
    let r = bayes_risk(&spec, 50_000, 8).unwrap();
    assert!(r.rejected_mass <= rejected_mass_bound(1.0, 1.0 / 6.0));
    let wide = bayes_risk(&spec.with_epsilon(0.6).unwrap(), 50_000, 8).unwrap();
    assert!(wide.rejected_mass > 0.01);
}

#[test]
fn risk_matches_the_closed_form_expansion() {
    let c = circle();
    let prior = uniform(&c, &[32]);
    for map in [MapDescriptor::inclusion(&c).unwrap(), MapDescriptor::circle_power(&c, 2).unwrap()] {
        let e = expansion_coefficients(&map, &prior, &grid(&c, &[32])).unwrap();
        let eps = 0.1;
        let r = bayes_risk(&EstimatorSpec::second_order(&map, &prior, eps).unwrap(), 200_000, 13).unwrap();
        let closed = e.a2 * eps * eps + e.a4 * eps.powi(4);
        assert!((r.value - closed).abs() <= (3.0 * r.std_error).max(10.0 * eps.powi(6)), "{}: {} vs {closed}", map.name(), r.value);
    }
}

/// The second-order estimator moved by ε⁴ along the manifold.
struct Perturbed {
    inner: EstimatorSpec,
}

impl PointEstimator for Perturbed {
    fn estimate(&self, x: &AmbientPoint) -> geobayes::Result<CodomainPoint> {
        let y = self.inner.estimate(x)?;
        let e4 = self.inner.epsilon.powi(4);
        let v = y.coords();
        // Unit tangent of the circle at the estimate's direction.
        let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
        Ok(CodomainPoint::Euclidean(vec![v[0] - e4 * v[1] / r, v[1] + e4 * v[0] / r]))
    }
}

#[test]
fn fourth_order_perturbations_leave_the_fit_stable() {
    let c = circle();
    let spec = EstimatorSpec::second_order(&MapDescriptor::inclusion(&c).unwrap(), &uniform(&c, &[16]), 0.1).unwrap();
    let n = |_: f64| 100_000;
    let base = risk_curve(&spec, &EPS_GRID, &n, 41, true).unwrap().fit().unwrap();
    let moved = risk_curve_with(&spec, &|s| Box::new(Perturbed { inner: s.clone() }), &EPS_GRID, &n, 41, true)
        .unwrap()
        .fit()
        .unwrap();
    assert!((moved.a4_hat - base.a4_hat).abs() < 2.0 * base.a4_se(), "{} vs {} ± {}", moved.a4_hat, base.a4_hat, base.a4_se());
}
