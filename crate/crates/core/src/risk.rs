//! Pointwise and Bayes risk by Monte Carlo, the closed-form ε² and ε⁴
//! coefficients, and their regression estimates from a risk curve.
//!
//! Monte Carlo work is split into [`SHARDS`] fixed shards; shard i draws from
//! ChaCha8 stream i of the master seed and partial sums are combined in
//! shard order, so results do not depend on the thread count.

use crate::embedding::AmbientPoint;
use crate::error::{Error, Result};
use crate::estimator::{EstimatorSpec, PointEstimator};
use crate::manifold::QuadratureGrid;
use crate::maps::{jet2, kappa_general, Codomain, CodomainPoint, MapDescriptor};
use crate::prior::PriorDensity;
use crate::subriemannian::cometric_at;
use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

pub const SHARDS: usize = 64;

/// Smallest sample count accepted by the Monte Carlo routines.
pub const MIN_SAMPLES: usize = 1000;

/// A Monte Carlo risk value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub epsilon: f64,
    /// Fraction of observations outside the tube, counted with zero loss.
    pub rejected_mass: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct ShardSum {
    n: usize,
    sum: f64,
    sum_sq: f64,
    rejected: usize,
}

impl ShardSum {
    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
}

fn combine(shards: &[ShardSum], epsilon: f64, seed: u64) -> RiskEstimate {
    let (mut n, mut s, mut s2, mut rej) = (0usize, 0.0, 0.0, 0usize);
    for sh in shards {
        n += sh.n;
        s += sh.sum;
        s2 += sh.sum_sq;
        rej += sh.rejected;
    }
    let mean = s / n as f64;
    let var = ((s2 / n as f64 - mean * mean) * n as f64 / (n as f64 - 1.0)).max(0.0);
    RiskEstimate {
        value: mean,
        std_error: (var / n as f64).sqrt(),
        samples: n,
        epsilon,
        rejected_mass: rej as f64 / n as f64,
        seed,
    }
}

fn shard_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn shard_sizes(samples: usize) -> Vec<usize> {
    (0..SHARDS).map(|i| samples / SHARDS + usize::from(i < samples % SHARDS)).collect()
}

/// Squared codomain distance.
pub fn squared_loss(codomain: &Codomain, estimate: &CodomainPoint, target: &[f64]) -> f64 {
    match codomain {
        Codomain::Euclidean(_) => estimate.coords().iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum(),
        Codomain::Manifold(m) => m.distance_coords(estimate.coords(), target).value.powi(2),
    }
}

/// Loss at one draw; `None` when the observation leaves the tube.
fn draw_loss(spec: &EstimatorSpec, est: &dyn PointEstimator, theta: &[f64], z: &[f64]) -> Result<Option<f64>> {
    let m = &spec.map.domain;
    let x: Vec<f64> = m.embed_coords(theta).iter().zip(z).map(|(a, b)| a + spec.epsilon * b).collect();
    match est.estimate(&AmbientPoint(x)) {
        Ok(g) => Ok(Some(squared_loss(&spec.map.codomain, &g, &spec.map.eval_coords(theta)))),
        Err(Error::OutsideTube { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn run_shards<F>(
    spec: &EstimatorSpec,
    est: &dyn PointEstimator,
    samples: usize,
    seed: u64,
    stream_offset: u64,
    draw_theta: F,
) -> Result<Vec<ShardSum>>
where
    F: Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("at least {MIN_SAMPLES} samples are required, got {samples}")));
    }
    let s = spec.map.domain.ambient_dim();
    shard_sizes(samples)
        .into_par_iter()
        .enumerate()
        .map(|(i, n)| {
            let mut rng = shard_rng(seed, stream_offset + i as u64);
            let mut acc = ShardSum { n, ..Default::default() };
            let mut z = vec![0.0; s];
            for _ in 0..n {
                let theta = draw_theta(&mut rng);
                z.iter_mut().for_each(|c| *c = rng.sample(StandardNormal));
                match draw_loss(spec, est, &theta, &z)? {
                    Some(l) => {
                        acc.sum += l;
                        acc.sum_sq += l * l;
                    }
                    None => acc.rejected += 1,
                }
            }
            Ok(acc)
        })
        .collect()
}

/// R_ε(g, θ) = E dist(g(ι(θ) + εz), γ(θ))² over the tube.
pub fn pointwise_risk(spec: &EstimatorSpec, theta: &[f64], samples: usize, seed: u64) -> Result<RiskEstimate> {
    let theta = spec.map.domain.normalize_coords(theta)?;
    let shards = run_shards(spec, spec, samples, seed, 0, |_| theta.clone())?;
    Ok(combine(&shards, spec.epsilon, seed))
}

/// R_ε(g; λ) with θ ~ λ dθ and x = ι(θ) + εz.
pub fn bayes_risk(spec: &EstimatorSpec, samples: usize, seed: u64) -> Result<RiskEstimate> {
    let shards = run_shards(spec, spec, samples, seed, 0, |rng| spec.prior.sample(rng))?;
    Ok(combine(&shards, spec.epsilon, seed))
}

/// R_ε(g; λ) in its original form ∫∫ dist(g(x), γ(θ))² λ(θ) ψ_ε(x − ι(θ)) dθ dx:
/// x uniform in a box around the tube, the θ integral by grid quadrature.
/// Rejected mass is the estimated prior-predictive mass outside the tube.
pub fn bayes_risk_ambient(spec: &EstimatorSpec, samples: usize, seed: u64, resolution: &[usize]) -> Result<RiskEstimate> {
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("at least {MIN_SAMPLES} samples are required, got {samples}")));
    }
    let m = &spec.map.domain;
    let grid = QuadratureGrid::new(m, resolution)?;
    let s = m.ambient_dim();
    let eps = spec.epsilon;
    let embedded: Vec<Vec<f64>> = (0..grid.len()).map(|i| m.embed_coords(grid.coords(i))).collect();
    let targets: Vec<Vec<f64>> = (0..grid.len()).map(|i| spec.map.eval_coords(grid.coords(i))).collect();
    let weight: Vec<f64> = (0..grid.len()).map(|i| grid.weights[i] * spec.prior.density_at(grid.coords(i))).collect();
    let reach = m.reach();
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..s)
        .map(|k| {
            let (a, b) = embedded.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), e| (a.min(e[k]), b.max(e[k])));
            (a - reach, b + reach)
        })
        .unzip();
    let volume: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let norm = (2.0 * std::f64::consts::PI * eps * eps).powf(-(s as f64) / 2.0);
    let shards: Vec<(ShardSum, f64)> = shard_sizes(samples)
        .into_par_iter()
        .enumerate()
        .map(|(i, n)| -> Result<(ShardSum, f64)> {
            let mut rng = shard_rng(seed, i as u64);
            let mut acc = ShardSum { n, ..Default::default() };
            let mut mass = 0.0;
            for _ in 0..n {
                let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..*b)).collect();
                let g = match spec.estimate(&AmbientPoint(x.clone())) {
                    Ok(g) => g,
                    Err(Error::OutsideTube { .. }) => continue,
                    Err(e) => return Err(e),
                };
                let mut inner = 0.0;
                let mut inner_mass = 0.0;
                for ((e, t), w) in embedded.iter().zip(&targets).zip(&weight) {
                    let d2: f64 = e.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
                    let psi = w * norm * (-0.5 * d2 / (eps * eps)).exp();
                    if psi > 0.0 {
                        inner += squared_loss(&spec.map.codomain, &g, t) * psi;
                        inner_mass += psi;
                    }
                }
                let v = volume * inner;
                acc.sum += v;
                acc.sum_sq += v * v;
                mass += volume * inner_mass;
            }
            Ok((acc, mass))
        })
        .collect::<Result<_>>()?;
    let sums: Vec<ShardSum> = shards.iter().map(|(a, _)| *a).collect();
    let mut est = combine(&sums, eps, seed);
    let inside: f64 = shards.iter().map(|(_, m)| m).sum::<f64>() / samples as f64;
    est.rejected_mass = (1.0 - inside).clamp(0.0, 1.0);
    Ok(est)
}

/// Bayes risks over a noise grid, with per-shard means kept for
/// batch-means covariance of the fitted coefficients.
#[derive(Clone, Debug, Serialize)]
pub struct RiskCurve {
    pub estimates: Vec<RiskEstimate>,
    /// `shard_means[k][i]`: mean loss of shard i at the k-th noise level.
    pub shard_means: Vec<Vec<f64>>,
    pub common_random_numbers: bool,
}

/// Bayes risk at each ε. With common random numbers every level reuses the
/// same (θ, z) draws (a prefix of the same streams when sample counts
/// differ); otherwise level k uses its own block of streams.
pub fn risk_curve(
    spec: &EstimatorSpec,
    epsilons: &[f64],
    samples: &dyn Fn(f64) -> usize,
    seed: u64,
    common_random_numbers: bool,
) -> Result<RiskCurve> {
    risk_curve_with(spec, &|s| Box::new(s.clone()), epsilons, samples, seed, common_random_numbers)
}

/// [`risk_curve`] for an estimator rebuilt from `spec` at each noise level;
/// the [`EstimatorSpec`] supplies the map, prior and sampling.
pub fn risk_curve_with(
    spec: &EstimatorSpec,
    build: &dyn Fn(&EstimatorSpec) -> Box<dyn PointEstimator>,
    epsilons: &[f64],
    samples: &dyn Fn(f64) -> usize,
    seed: u64,
    common_random_numbers: bool,
) -> Result<RiskCurve> {
    let mut estimates = Vec::with_capacity(epsilons.len());
    let mut shard_means = Vec::with_capacity(epsilons.len());
    for (k, &eps) in epsilons.iter().enumerate() {
        let at = spec.with_epsilon(eps)?;
        let offset = if common_random_numbers { 0 } else { ((k as u64) + 1) << 32 };
        let est = build(&at);
        let shards = run_shards(&at, est.as_ref(), samples(eps), seed, offset, |rng| at.prior.sample(rng))?;
        shard_means.push(shards.iter().map(ShardSum::mean).collect());
        estimates.push(combine(&shards, eps, seed));
    }
    Ok(RiskCurve { estimates, shard_means, common_random_numbers })
}

/// R_ε − ε²A₂.
pub fn centered_risk(spec: &EstimatorSpec, a2: f64, samples: usize, seed: u64) -> Result<RiskEstimate> {
    let mut r = bayes_risk(spec, samples, seed)?;
    r.value -= spec.epsilon * spec.epsilon * a2;
    Ok(r)
}

/// Closed-form risk coefficients and their integrands.
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionCoefficients {
    /// ∫λ|dγ|² dθ.
    pub a2: f64,
    /// ∫λ{½|∇dΓ|² − |τ(γ) + dγ(∇log λ)|² − ⅔⟨dΓ, Ric dΓ⟩} dθ.
    pub a4: f64,
    pub a2_nodes: Vec<f64>,
    pub a4_nodes: Vec<f64>,
    pub kappa_nodes: Vec<f64>,
    /// ∫μ(dω, dω) dθ.
    pub dirichlet: f64,
    /// ∫κλ dθ − 4∫μ(dω, dω) dθ.
    pub operator_form: f64,
}

impl ExpansionCoefficients {
    /// ∫κλ dθ + 4∫μ(dω, dω) dθ, the value with the opposite sign of the
    /// Dirichlet term.
    pub fn opposite_sign_form(&self) -> f64 {
        self.operator_form + 8.0 * self.dirichlet
    }
}

/// A₂, A₄ by quadrature on `grid`, both from the pointwise integrand and
/// from the operator form.
pub fn expansion_coefficients(map: &MapDescriptor, prior: &PriorDensity, grid: &QuadratureGrid) -> Result<ExpansionCoefficients> {
    if grid.manifold != map.domain {
        return Err(Error::GridMismatch("quadrature grid and map domain differ".into()));
    }
    let n = grid.dim();
    let nodes: Vec<Result<(f64, f64, f64, f64, f64)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.coords(i);
            let lambda = prior.density_at(x);
            if !(lambda > 0.0) {
                return Err(Error::VanishingPrior);
            }
            let dlog = prior.log_gradient_at(x)?;
            let jet = jet2(map, x);
            let rep = kappa_general(map, x);
            let grad: Vec<f64> = (0..n).map(|a| (0..n).map(|b| jet.domain_metric_inv[(a, b)] * dlog[b]).sum()).collect();
            let pushed = jet.push(&grad);
            let drift: Vec<f64> = jet.tension.iter().zip(&pushed).map(|(t, p)| t + p).collect();
            let a4 = 0.5 * rep.composite_hessian_sq - jet.inner(&drift, &drift) - 2.0 / 3.0 * rep.ricci_term;
            // μ(dω, dω) = ¼ λ μ(d log λ, d log λ).
            let mu = cometric_at(map, x);
            let mut q = 0.0;
            for a in 0..n {
                for b in 0..n {
                    q += mu[(a, b)] * dlog[a] * dlog[b];
                }
            }
            Ok((lambda, rep.energy, a4, rep.kappa, 0.25 * lambda * q))
        })
        .collect();
    let nodes: Vec<(f64, f64, f64, f64, f64)> = nodes.into_iter().collect::<Result<_>>()?;
    let a2_nodes: Vec<f64> = nodes.iter().map(|v| v.1).collect();
    let a4_nodes: Vec<f64> = nodes.iter().map(|v| v.2).collect();
    let kappa_nodes: Vec<f64> = nodes.iter().map(|v| v.3).collect();
    let weighted = |f: &dyn Fn(&(f64, f64, f64, f64, f64)) -> f64| grid.integrate(&nodes.iter().map(f).collect::<Vec<_>>());
    let dirichlet = weighted(&|v| v.4);
    Ok(ExpansionCoefficients {
        a2: weighted(&|v| v.0 * v.1),
        a4: weighted(&|v| v.0 * v.2),
        a2_nodes,
        a4_nodes,
        kappa_nodes,
        dirichlet,
        operator_form: weighted(&|v| v.0 * v.3) - 4.0 * dirichlet,
    })
}

/// How the coefficient covariance was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceSource {
    /// (XᵀWX)⁻¹ from the per-level standard errors, treating levels as
    /// independent.
    StandardErrors,
    /// Spread of the same linear estimator applied shard by shard.
    BatchMeans,
}

/// Weighted least-squares fit R(ε) ≈ Â₂ε² + Â₄ε⁴.
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionFit {
    pub a2_hat: f64,
    pub a4_hat: f64,
    pub covariance: [[f64; 2]; 2],
    pub epsilon_grid: Vec<f64>,
    /// √Σ wₖ rₖ² over the levels.
    pub residual_norm: f64,
    /// Residual of each level, R(εₖ) − Â₂εₖ² − Â₄εₖ⁴.
    pub residuals: Vec<f64>,
    pub covariance_source: CovarianceSource,
}

impl ExpansionFit {
    pub fn a2_se(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn a4_se(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
}

/// Span of noise levels a fit needs.
pub const MIN_EPSILON_SPAN: f64 = 4.0;

fn check_design(eps: &[f64]) -> Result<()> {
    let mut distinct: Vec<f64> = eps.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    if distinct.len() < 4 {
        return Err(Error::InsufficientDesign(format!("{} distinct noise levels, need 4", distinct.len())));
    }
    let span = distinct[distinct.len() - 1] / distinct[0];
    if span < MIN_EPSILON_SPAN * (1.0 - 1e-9) {
        return Err(Error::InsufficientDesign(format!("noise levels span a factor {span:.3}, need {MIN_EPSILON_SPAN}")));
    }
    Ok(())
}

/// The 2×n matrix mapping level values to (Â₂, Â₄), with the normal matrix.
fn wls_operator(eps: &[f64], weights: &[f64]) -> Result<(Vec<[f64; 2]>, Matrix2<f64>)> {
    let mut xtwx = Matrix2::zeros();
    for (e, w) in eps.iter().zip(weights) {
        let row = Vector2::new(e * e, e.powi(4));
        xtwx += row * row.transpose() * *w;
    }
    // Scale-invariant conditioning check.
    let d = Matrix2::new(1.0 / xtwx[(0, 0)].sqrt(), 0.0, 0.0, 1.0 / xtwx[(1, 1)].sqrt());
    let scaled = d * xtwx * d;
    if !(scaled.determinant() > 1e-12) {
        return Err(Error::SingularDesign);
    }
    let inv = xtwx.try_inverse().ok_or(Error::SingularDesign)?;
    let ops = eps
        .iter()
        .zip(weights)
        .map(|(e, w)| {
            let c = inv * Vector2::new(e * e, e.powi(4)) * *w;
            [c[0], c[1]]
        })
        .collect();
    Ok((ops, inv))
}

fn fit_values(eps: &[f64], values: &[f64], ops: &[[f64; 2]], weights: &[f64]) -> (f64, f64, Vec<f64>, f64) {
    let a2: f64 = ops.iter().zip(values).map(|(c, v)| c[0] * v).sum();
    let a4: f64 = ops.iter().zip(values).map(|(c, v)| c[1] * v).sum();
    let residuals: Vec<f64> = eps.iter().zip(values).map(|(e, v)| v - a2 * e * e - a4 * e.powi(4)).collect();
    let chi = residuals.iter().zip(weights).map(|(r, w)| w * r * r).sum::<f64>().sqrt();
    (a2, a4, residuals, chi)
}

/// WLS fit with weights 1/SE²; the covariance treats levels as independent.
pub fn fit_expansion(estimates: &[RiskEstimate]) -> Result<ExpansionFit> {
    let eps: Vec<f64> = estimates.iter().map(|r| r.epsilon).collect();
    check_design(&eps)?;
    let weights: Vec<f64> = if estimates.iter().all(|r| r.std_error > 0.0) {
        estimates.iter().map(|r| r.std_error.powi(-2)).collect()
    } else {
        vec![1.0; estimates.len()]
    };
    let (ops, inv) = wls_operator(&eps, &weights)?;
    let values: Vec<f64> = estimates.iter().map(|r| r.value).collect();
    let (a2, a4, residuals, chi) = fit_values(&eps, &values, &ops, &weights);
    Ok(ExpansionFit {
        a2_hat: a2,
        a4_hat: a4,
        covariance: [[inv[(0, 0)], inv[(0, 1)]], [inv[(1, 0)], inv[(1, 1)]]],
        epsilon_grid: eps,
        residual_norm: chi,
        residuals,
        covariance_source: CovarianceSource::StandardErrors,
    })
}

impl RiskCurve {
    /// WLS fit with weights 1/SE² and a batch-means covariance, valid when
    /// levels share random numbers.
    pub fn fit(&self) -> Result<ExpansionFit> {
        let mut fit = fit_expansion(&self.estimates)?;
        let eps = &fit.epsilon_grid;
        let weights: Vec<f64> = self.estimates.iter().map(|r| r.std_error.powi(-2)).collect();
        let (ops, _) = wls_operator(eps, &weights)?;
        let per_shard: Vec<(f64, f64)> = (0..SHARDS)
            .map(|i| {
                let v: Vec<f64> = self.shard_means.iter().map(|s| s[i]).collect();
                let (a2, a4, _, _) = fit_values(eps, &v, &ops, &weights);
                (a2, a4)
            })
            .collect();
        let s = SHARDS as f64;
        let m2 = per_shard.iter().map(|p| p.0).sum::<f64>() / s;
        let m4 = per_shard.iter().map(|p| p.1).sum::<f64>() / s;
        let mut cov = [[0.0; 2]; 2];
        for (a2, a4) in &per_shard {
            let d = [a2 - m2, a4 - m4];
            for r in 0..2 {
                for c in 0..2 {
                    cov[r][c] += d[r] * d[c];
                }
            }
        }
        // Shards are equal-sized up to one sample, so the pooled estimate is
        // the shard average and its covariance is the shard covariance / S.
        for row in &mut cov {
            for v in row.iter_mut() {
                *v /= (s - 1.0) * s;
            }
        }
        fit.covariance = cov;
        fit.covariance_source = CovarianceSource::BatchMeans;
        Ok(fit)
    }
}

/// The bound exp(−(r/2ε)²/2) · 10 on the rejected mass, meaningful for
/// ε ≤ r/6.
pub fn rejected_mass_bound(reach: f64, epsilon: f64) -> f64 {
    10.0 * (-(reach / (2.0 * epsilon)).powi(2) / 2.0).exp()
}

