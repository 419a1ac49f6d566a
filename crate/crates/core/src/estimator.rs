//! Estimators g: E → Λ from an ambient observation x = ι(θ) + εz: the
//! plug-in γ∘π, the second-order Bayes approximation, and the exact
//! posterior mean by quadrature when Λ is Euclidean.

use crate::embedding::AmbientPoint;
use crate::error::{Error, Result};
use crate::manifold::QuadratureGrid;
use crate::maps::{jet2, Codomain, CodomainPoint, MapDescriptor};
use crate::prior::PriorDensity;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Plugin,
    SecondOrder,
    ExactEuclidean,
}

/// Default number of nodes per periodic axis for the exact estimator.
pub const DEFAULT_QUADRATURE_RESOLUTION: usize = 512;

/// Doubling the resolution must move the exact estimate by less than this
/// for the quadrature to count as converged.
pub const QUADRATURE_CONVERGENCE_TOL: f64 = 1e-10;

/// Quadrature nodes prepared once per spec: ι(θᵢ), γ(θᵢ), log(wᵢλ(θᵢ)).
#[derive(Clone, Debug)]
struct QuadratureCache {
    embedded: Vec<Vec<f64>>,
    image: Vec<Vec<f64>>,
    log_weight: Vec<f64>,
}

impl QuadratureCache {
    fn new(map: &MapDescriptor, prior: &PriorDensity, resolution: usize) -> Result<Self> {
        let m = &map.domain;
        let res: Vec<usize> = m
            .periodic_coordinates()
            .iter()
            .map(|&p| if p { resolution } else { (resolution / 2).max(8) })
            .collect();
        let grid = QuadratureGrid::new(m, &res)?;
        let mut embedded = Vec::with_capacity(grid.len());
        let mut image = Vec::with_capacity(grid.len());
        let mut log_weight = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let x = grid.coords(i);
            embedded.push(m.embed_coords(x));
            image.push(map.eval_coords(x));
            log_weight.push((grid.weights[i] * prior.density_at(x)).ln());
        }
        Ok(Self { embedded, image, log_weight })
    }

    /// Posterior mean of γ(θ) and the log of the unnormalised denominator.
    fn posterior_mean(&self, x: &[f64], epsilon: f64) -> (Vec<f64>, f64) {
        let scale = -0.5 / (epsilon * epsilon);
        let exps: Vec<f64> = self
            .embedded
            .iter()
            .zip(&self.log_weight)
            .map(|(e, lw)| lw + scale * e.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .collect();
        let top = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let k = self.image[0].len();
        let mut num = vec![0.0; k];
        let mut den = 0.0;
        for (e, y) in exps.iter().zip(&self.image) {
            let w = (e - top).exp();
            den += w;
            for (n, v) in num.iter_mut().zip(y) {
                *n += w * v;
            }
        }
        (num.iter().map(|n| n / den).collect(), top + den.ln())
    }
}

/// An estimator: kind, map, prior and noise level.
#[derive(Clone, Debug)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub map: MapDescriptor,
    pub prior: PriorDensity,
    pub epsilon: f64,
    pub quadrature_resolution: usize,
    quadrature: Option<Arc<(QuadratureCache, QuadratureCache)>>,
}

impl EstimatorSpec {
    pub fn new(
        kind: EstimatorKind,
        map: &MapDescriptor,
        prior: &PriorDensity,
        epsilon: f64,
        quadrature_resolution: usize,
    ) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("noise level must be positive, got {epsilon}")));
        }
        if prior.grid.manifold != map.domain {
            return Err(Error::GridMismatch(format!(
                "prior lives on {}, map domain is {}",
                prior.grid.manifold.name(),
                map.domain.name()
            )));
        }
        let quadrature = if kind == EstimatorKind::ExactEuclidean {
            if !matches!(map.codomain, Codomain::Euclidean(_)) {
                return Err(Error::UnsupportedCodomain(format!(
                    "exact posterior mean needs a Euclidean codomain, got {}",
                    map.codomain.name()
                )));
            }
            if quadrature_resolution < 8 {
                return Err(Error::Resolution(format!("quadrature resolution {quadrature_resolution} below 8")));
            }
            Some(Arc::new((
                QuadratureCache::new(map, prior, quadrature_resolution)?,
                QuadratureCache::new(map, prior, 2 * quadrature_resolution)?,
            )))
        } else {
            None
        };
        Ok(Self { kind, map: map.clone(), prior: prior.clone(), epsilon, quadrature_resolution, quadrature })
    }

    pub fn plugin(map: &MapDescriptor, prior: &PriorDensity, epsilon: f64) -> Result<Self> {
        Self::new(EstimatorKind::Plugin, map, prior, epsilon, 0)
    }

    pub fn second_order(map: &MapDescriptor, prior: &PriorDensity, epsilon: f64) -> Result<Self> {
        Self::new(EstimatorKind::SecondOrder, map, prior, epsilon, 0)
    }

    pub fn exact_euclidean(map: &MapDescriptor, prior: &PriorDensity, epsilon: f64, resolution: usize) -> Result<Self> {
        Self::new(EstimatorKind::ExactEuclidean, map, prior, epsilon, resolution)
    }

    /// The same estimator at another noise level; quadrature caches do not
    /// depend on ε and are shared.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("noise level must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon, ..self.clone() })
    }

    pub fn codomain(&self) -> &Codomain {
        &self.map.codomain
    }
}

/// Evaluation of an estimator at an observation.
pub trait PointEstimator: Sync {
    fn estimate(&self, x: &AmbientPoint) -> Result<CodomainPoint>;
}

impl PointEstimator for EstimatorSpec {
    fn estimate(&self, x: &AmbientPoint) -> Result<CodomainPoint> {
        match self.kind {
            EstimatorKind::Plugin => plugin_estimate(self, x),
            EstimatorKind::SecondOrder => second_order_estimate(self, x),
            EstimatorKind::ExactEuclidean => exact_bayes_euclidean(self, x).map(|e| CodomainPoint::Euclidean(e.point)),
        }
    }
}

/// γ(π(x)).
pub fn plugin_estimate(spec: &EstimatorSpec, x: &AmbientPoint) -> Result<CodomainPoint> {
    let foot = spec.map.domain.project(x)?;
    Ok(spec.map.eval(&foot.base))
}

/// ½τ(γ) + dγ(∇log λ) at a domain point, in codomain chart components.
pub fn second_order_drift(map: &MapDescriptor, prior: &PriorDensity, theta: &[f64]) -> Result<Vec<f64>> {
    let jet = jet2(map, theta);
    let dlog = prior.log_gradient_at(theta)?;
    let n = dlog.len();
    let grad: Vec<f64> =
        (0..n).map(|i| (0..n).map(|j| jet.domain_metric_inv[(i, j)] * dlog[j]).sum()).collect();
    let pushed = jet.push(&grad);
    Ok(jet.tension.iter().zip(&pushed).map(|(t, p)| 0.5 * t + p).collect())
}

/// exp_{γ(θ̂)}(ε²(½τ(γ) + dγ(∇log λ))) with θ̂ = π(x).
pub fn second_order_estimate(spec: &EstimatorSpec, x: &AmbientPoint) -> Result<CodomainPoint> {
    let foot = spec.map.domain.project(x)?;
    let theta = &foot.base.coords;
    let drift = second_order_drift(&spec.map, &spec.prior, theta)?;
    let e2 = spec.epsilon * spec.epsilon;
    let step: Vec<f64> = drift.iter().map(|d| e2 * d).collect();
    let base = spec.map.eval_coords(theta);
    Ok(spec.map.codomain.point(spec.map.codomain.exp_coords(&base, &step)?))
}

/// Exact posterior mean with its quadrature diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactEstimate {
    pub point: Vec<f64>,
    /// Doubling the resolution moved the result by less than
    /// [`QUADRATURE_CONVERGENCE_TOL`].
    pub converged: bool,
    pub refinement_change: f64,
    /// log ∫λ(θ) exp(−|x − ι(θ)|²/2ε²) dθ.
    pub log_denominator: f64,
}

/// Smallest log-denominator accepted before the observation counts as too
/// far from Θ for the posterior to be represented.
const LOG_DENOMINATOR_FLOOR: f64 = -700.0;

/// E[γ(θ) | x] for a Euclidean codomain by grid quadrature.
pub fn exact_bayes_euclidean(spec: &EstimatorSpec, x: &AmbientPoint) -> Result<ExactEstimate> {
    let (coarse, fine) = spec.quadrature.as_deref().ok_or_else(|| {
        Error::InvalidArgument("exact posterior mean needs a spec of kind exact-euclidean".into())
    })?;
    if x.0.len() != spec.map.domain.ambient_dim() {
        return Err(Error::InvalidArgument(format!(
            "ambient point needs {} coordinates, got {}",
            spec.map.domain.ambient_dim(),
            x.0.len()
        )));
    }
    let (a, _) = coarse.posterior_mean(&x.0, spec.epsilon);
    let (b, log_den) = fine.posterior_mean(&x.0, spec.epsilon);
    if !(log_den > LOG_DENOMINATOR_FLOOR) {
        return Err(Error::DenominatorUnderflow(log_den));
    }
    let change = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    Ok(ExactEstimate {
        point: b,
        converged: change < QUADRATURE_CONVERGENCE_TOL,
        refinement_change: change,
        log_denominator: log_den,
    })
}

/// Estimates for a batch of observations, in input order.
pub fn estimate_batch<E: PointEstimator + ?Sized>(est: &E, points: &[AmbientPoint]) -> Vec<Result<CodomainPoint>> {
    points.par_iter().map(|x| est.estimate(x)).collect()
}

