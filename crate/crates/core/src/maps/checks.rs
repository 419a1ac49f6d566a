use super::curvature::orthonormal_frame;
use super::jet::{differential_pairing, jet2, tension_gradient_with_jet, FIELD_STEP};
use super::{ricci_coupling, Codomain, CodomainPoint, MapDescriptor};
use crate::error::{Error, Result};
use crate::fd;
use crate::grid_calculus::{nodal_gradient, GradientScheme};
use crate::manifold::QuadratureGrid;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// k-th derivative at t = 0 of t ↦ log_{γ(x)} γ(exp_x(t v)), the map in
/// normal coordinates along v. Order 2 gives ∇dγ(v, v) and order 3 gives
/// ∇²dγ(v, v, v).
pub fn normal_coordinate_derivative(map: &MapDescriptor, x: &[f64], v: &[f64], order: usize) -> Result<Vec<f64>> {
    let y = map.eval_coords(x);
    let len = map.domain.norm_at(x, v);
    if len == 0.0 {
        return Ok(vec![0.0; map.codomain.dim()]);
    }
    let failure = std::cell::Cell::new(None);
    let curve = |t: f64| -> Vec<f64> {
        let w: Vec<f64> = v.iter().map(|c| c * t).collect();
        let attempt = map
            .domain
            .exp_coords(x, &w)
            .and_then(|p| map.codomain.log_coords(&y, &map.eval_coords(&p)));
        match attempt {
            Ok(l) => l,
            Err(e) => {
                failure.set(Some(e));
                vec![0.0; y.len()]
            }
        }
    };
    let d = fd::derivative(&curve, order, 2e-2 / len);
    match failure.take() {
        Some(e) => Err(e),
        None => Ok(d),
    }
}

/// Symmetric third covariant derivative ∇²dγ evaluated on chart basis
/// vectors, by polarisation of the cubic form v ↦ ∇²dγ(v, v, v).
/// Entry `[a][(i * n + j) * n + k]`.
pub fn third_derivative_tensor(map: &MapDescriptor, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = map.domain.dim();
    let m = map.codomain.dim();
    let mut out = vec![vec![0.0; n * n * n]; m];
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                let mut acc = vec![0.0; m];
                for signs in 0..8u32 {
                    let s = [
                        if signs & 1 == 0 { 1.0 } else { -1.0 },
                        if signs & 2 == 0 { 1.0 } else { -1.0 },
                        if signs & 4 == 0 { 1.0 } else { -1.0 },
                    ];
                    let mut v = vec![0.0; n];
                    v[i] += s[0];
                    v[j] += s[1];
                    v[k] += s[2];
                    if v.iter().all(|c| *c == 0.0) {
                        continue;
                    }
                    let c = normal_coordinate_derivative(map, x, &v, 3)?;
                    let sign = s[0] * s[1] * s[2];
                    for (a, ci) in acc.iter_mut().zip(&c) {
                        *a += sign * ci / 48.0;
                    }
                }
                for (i2, j2, k2) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                    for a in 0..m {
                        out[a][(i2 * n + j2) * n + k2] = acc[a];
                    }
                }
            }
        }
    }
    Ok(out)
}

fn cubic_apply(t: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    t.iter()
        .map(|ta| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        s += ta[(i * n + j) * n + k] * v[i] * v[j] * v[k];
                    }
                }
            }
            s
        })
        .collect()
}

/// Truncated Taylor expansion of γ in normal coordinates:
/// exp_{γ(x)}(dγ(v) + ½∇dγ(v, v) + ⅙∇²dγ(v, v, v)), up to `order` terms.
pub fn maclaurin_eval(map: &MapDescriptor, x: &[f64], v: &[f64], order: usize) -> Result<CodomainPoint> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!("expansion order must be 1, 2 or 3, got {order}")));
    }
    let jet = jet2(map, x);
    let grad = jet.energy_density().sqrt();
    let radius = if grad > 0.0 {
        (map.codomain.injectivity_radius() / grad).min(map.domain.injectivity_radius())
    } else {
        map.domain.injectivity_radius()
    };
    let norm = map.domain.norm_at(x, v);
    if norm >= radius {
        return Err(Error::RadiusViolation { norm, radius });
    }
    let mut w = jet.push(v);
    if order >= 2 {
        for (wi, h) in w.iter_mut().zip(jet.hessian_apply(v, v)) {
            *wi += 0.5 * h;
        }
    }
    if order >= 3 {
        let t = third_derivative_tensor(map, x)?;
        for (wi, c) in w.iter_mut().zip(cubic_apply(&t, v)) {
            *wi += c / 6.0;
        }
    }
    let y = map.eval_coords(x);
    Ok(map.codomain.point(map.codomain.normalize(&map.codomain.exp_coords(&y, &w)?)))
}

/// Monte Carlo estimate next to its closed form.
#[derive(Clone, Debug, serde::Serialize)]
pub struct MomentCheck {
    pub name: &'static str,
    pub monte_carlo: f64,
    pub std_error: f64,
    pub closed_form: f64,
}

impl MomentCheck {
    /// Discrepancy in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.monte_carlo - self.closed_form).abs() / self.std_error.max(1e-300)
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct MomentReport {
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<MomentCheck>,
}

/// Gaussian moments of the normal-coordinate Taylor terms for v ~ N(0, I)
/// in an orthonormal frame:
/// E|dγ(v)|² = |dγ|², E|∇dγ(v, v)|² = |τ|² + 2|∇dγ|² and
/// E⟨dγ(v), ∇²dγ(v, v, v)⟩ = ⟨dγ, 3∇τ − 2 Ric dγ⟩.
pub fn gaussian_moment_check(map: &MapDescriptor, x: &[f64], samples: usize, seed: u64) -> Result<MomentReport> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let jet = jet2(map, x);
    let n = map.domain.dim();
    let frame = orthonormal_frame(&jet.domain_metric);
    let cubic = third_derivative_tensor(map, x)?;
    let grad_tau = tension_gradient_with_jet(map, &jet);
    let closed = [
        jet.energy_density(),
        jet.tension_norm_sq() + 2.0 * jet.hessian_norm_sq(),
        3.0 * differential_pairing(&jet, &grad_tau) - 2.0 * ricci_coupling(map, x),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut z = vec![0.0; n];
    for _ in 0..samples {
        z.iter_mut().for_each(|c| *c = StandardNormal.sample(&mut rng));
        let v: Vec<f64> = (0..n).map(|i| (0..n).map(|k| frame[(i, k)] * z[k]).sum()).collect();
        let dv = jet.push(&v);
        let hv = jet.hessian_apply(&v, &v);
        let tv = cubic_apply(&cubic, &v);
        let vals = [jet.inner(&dv, &dv), jet.inner(&hv, &hv), jet.inner(&dv, &tv)];
        for k in 0..3 {
            sums[k] += vals[k];
            sq[k] += vals[k] * vals[k];
        }
    }
    let nf = samples as f64;
    let names = ["energy", "hessian", "third-order"];
    let checks = (0..3)
        .map(|k| {
            let mean = sums[k] / nf;
            let var = (sq[k] / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
            MomentCheck { name: names[k], monte_carlo: mean, std_error: (var / nf).sqrt(), closed_form: closed[k] }
        })
        .collect();
    Ok(MomentReport { samples, seed, checks })
}

/// Discrete integration-by-parts residual
/// ∫λ⟨∇σ, dγ⟩ + ∫⟨σ, λτ(γ) + dγ(∇λ)⟩, which vanishes in the continuum for
/// every section σ along γ. `sigma` returns codomain components at a
/// domain point.
pub fn ibp_residual(
    lambda: &[f64],
    map: &MapDescriptor,
    grid: &QuadratureGrid,
    sigma: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    scheme: GradientScheme,
) -> Result<f64> {
    if grid.manifold != map.domain {
        return Err(Error::GridMismatch("grid is not on the map's domain".into()));
    }
    if lambda.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} values for {} nodes", lambda.len(), grid.len())));
    }
    let n = grid.dim();
    let grad = nodal_gradient(grid, lambda, scheme);
    let terms = grid.map_nodes(|x| {
        let jet = jet2(map, x);
        let s = sigma(x);
        let m = s.len();
        let gamma = map.codomain.christoffel(&jet.value);
        // ∇ᵢσ with the pulled-back connection.
        let mut cov = nalgebra::DMatrix::zeros(m, n);
        for i in 0..n {
            let d = fd::partial(sigma, x, &[i], FIELD_STEP);
            for a in 0..m {
                let mut v = d[a];
                for b in 0..m {
                    for c in 0..m {
                        v += gamma.get(a, b, c) * jet.differential[(b, i)] * s[c];
                    }
                }
                cov[(a, i)] = v;
            }
        }
        (jet, s, cov)
    });
    let mut total = 0.0;
    for (node, (jet, s, cov)) in terms.iter().enumerate() {
        let lam = lambda[node];
        let pair = differential_pairing(jet, cov);
        let dl: Vec<f64> = grad[node * n..node * n + n].to_vec();
        let raised: Vec<f64> = (0..n).map(|i| (0..n).map(|j| jet.domain_metric_inv[(i, j)] * dl[j]).sum()).collect();
        let pushed = jet.push(&raised);
        let drift: Vec<f64> = jet.tension.iter().zip(&pushed).map(|(t, p)| lam * t + p).collect();
        total += grid.weights[node] * (lam * pair + jet.inner(s, &drift));
    }
    Ok(total)
}

/// ⟨dF, Ric dF⟩ for a map F from a Euclidean domain into a codomain chart,
/// through the Bochner identity |∇dF|² + ⟨dF, ∇τ⟩ − ½Δ|dF|² with every
/// derivative of F up to third order taken numerically. `f` must return
/// continuous (unwrapped) codomain coordinates near `x`.
pub fn bochner_flat_domain(f: &dyn Fn(&[f64]) -> Vec<f64>, codomain: &Codomain, x: &[f64], h: f64) -> f64 {
    let s = x.len();
    let y = f(x);
    let m = y.len();
    let d1: Vec<Vec<f64>> = (0..s).map(|a| fd::partial(f, x, &[a], h)).collect();
    let mut d2 = vec![vec![vec![0.0; m]; s]; s];
    for a in 0..s {
        for b in a..s {
            let v = fd::partial(f, x, &[a, b], h);
            d2[a][b] = v.clone();
            d2[b][a] = v;
        }
    }
    // d3[c][a] = ∂c∂a∂a F; the same tensor with indices swapped gives ∂a∂c∂c F.
    let mut d3 = vec![vec![vec![0.0; m]; s]; s];
    for c in 0..s {
        for a in 0..s {
            d3[c][a] = fd::partial(f, x, &[c, a, a], h);
        }
    }
    let met = codomain.metric_jet(&y);
    let (gam, dgam) = codomain.christoffel_with_derivatives(&y);
    let dgam_at = |dl: usize, al: usize, be: usize, ga: usize| dgam[((dl * m + al) * m + be) * m + ga];
    let hh = &met.g;
    let inner = |u: &[f64], w: &[f64]| -> f64 {
        let mut t = 0.0;
        for i in 0..m {
            for j in 0..m {
                t += hh[(i, j)] * u[i] * w[j];
            }
        }
        t
    };
    let hess = |a: usize, b: usize| -> Vec<f64> {
        let mut out = d2[a][b].clone();
        let g = gam.contract(&d1[a], &d1[b]);
        out.iter_mut().zip(g).for_each(|(o, v)| *o += v);
        out
    };
    let mut hess_sq = 0.0;
    let mut tau = vec![0.0; m];
    for a in 0..s {
        for b in 0..s {
            let hab = hess(a, b);
            hess_sq += inner(&hab, &hab);
            if a == b {
                tau.iter_mut().zip(&hab).for_each(|(t, v)| *t += v);
            }
        }
    }
    let mut pairing = 0.0;
    for c in 0..s {
        let mut dtau = vec![0.0; m];
        for a in 0..s {
            for al in 0..m {
                let mut v = d3[c][a][al];
                for be in 0..m {
                    for ga in 0..m {
                        let mut dg = 0.0;
                        for dl in 0..m {
                            dg += dgam_at(dl, al, be, ga) * d1[c][dl];
                        }
                        v += dg * d1[a][be] * d1[a][ga] + 2.0 * gam.get(al, be, ga) * d2[c][a][be] * d1[a][ga];
                    }
                }
                dtau[al] += v;
            }
        }
        let corr = gam.contract(&d1[c], &tau);
        let cov: Vec<f64> = dtau.iter().zip(corr).map(|(a, b)| a + b).collect();
        pairing += inner(&d1[c], &cov);
    }
    // Δ|dF|² assembled from the derivatives of F and of the metric.
    let mut lap = 0.0;
    for c in 0..s {
        for a in 0..s {
            for al in 0..m {
                for be in 0..m {
                    let mut dh_c = 0.0;
                    let mut ddh_cc = 0.0;
                    for dl in 0..m {
                        dh_c += met.dg[dl][(al, be)] * d1[c][dl];
                        ddh_cc += met.dg[dl][(al, be)] * d2[c][c][dl];
                        for ep in 0..m {
                            ddh_cc += met.d2g[ep * m + dl][(al, be)] * d1[c][ep] * d1[c][dl];
                        }
                    }
                    lap += ddh_cc * d1[a][al] * d1[a][be]
                        + 4.0 * dh_c * d2[c][a][al] * d1[a][be]
                        + 2.0 * hh[(al, be)] * (d3[a][c][al] * d1[a][be] + d2[c][a][al] * d2[c][a][be]);
                }
            }
        }
    }
    hess_sq + pairing - 0.5 * lap
}
