use super::{Codomain, MapDescriptor};
use crate::fd;
use crate::manifold::metric_inverse;
use nalgebra::DMatrix;

/// Covariant 2-jet of a map at a point, in domain and codomain chart
/// components.
#[derive(Clone, Debug)]
pub struct MapJet2 {
    pub at: Vec<f64>,
    /// Codomain coordinates of the image, unnormalised.
    pub value: Vec<f64>,
    /// dγ, codomain_dim × domain_dim.
    pub differential: DMatrix<f64>,
    /// `hessian[a]` holds (∇dγ)ᵃᵢⱼ.
    pub hessian: Vec<DMatrix<f64>>,
    /// τ(γ)ᵃ = gⁱʲ (∇dγ)ᵃᵢⱼ.
    pub tension: Vec<f64>,
    pub domain_metric: DMatrix<f64>,
    pub domain_metric_inv: DMatrix<f64>,
    pub codomain_metric: DMatrix<f64>,
}

impl MapJet2 {
    /// |dγ|² = gⁱʲ hₐᵦ ∂ᵢγᵃ ∂ⱼγᵇ.
    pub fn energy_density(&self) -> f64 {
        let pulled = self.differential.transpose() * &self.codomain_metric * &self.differential;
        (&self.domain_metric_inv * pulled).trace()
    }

    /// |∇dγ|².
    pub fn hessian_norm_sq(&self) -> f64 {
        let m = self.hessian.len();
        let raised: Vec<DMatrix<f64>> =
            self.hessian.iter().map(|h| &self.domain_metric_inv * h * &self.domain_metric_inv).collect();
        let mut s = 0.0;
        for a in 0..m {
            for b in 0..m {
                let hab = self.codomain_metric[(a, b)];
                if hab != 0.0 {
                    s += hab * raised[a].component_mul(&self.hessian[b]).sum();
                }
            }
        }
        s
    }

    pub fn tension_norm_sq(&self) -> f64 {
        codomain_inner(&self.codomain_metric, &self.tension, &self.tension)
    }

    /// ∇dγ(u, w) for domain chart vectors.
    pub fn hessian_apply(&self, u: &[f64], w: &[f64]) -> Vec<f64> {
        self.hessian
            .iter()
            .map(|h| {
                let mut s = 0.0;
                for i in 0..u.len() {
                    for j in 0..w.len() {
                        s += h[(i, j)] * u[i] * w[j];
                    }
                }
                s
            })
            .collect()
    }

    /// dγ(u) for a domain chart vector.
    pub fn push(&self, u: &[f64]) -> Vec<f64> {
        (0..self.differential.nrows())
            .map(|a| (0..u.len()).map(|i| self.differential[(a, i)] * u[i]).sum())
            .collect()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        codomain_inner(&self.codomain_metric, a, b)
    }
}

pub(crate) fn codomain_inner(h: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            s += h[(i, j)] * a[i] * b[j];
        }
    }
    s
}

/// Covariant 2-jet: (∇dγ)ᵃᵢⱼ = ∂ᵢ∂ⱼγᵃ − Γᵏᵢⱼ ∂ₖγᵃ + Γᵃᵦ꜀(γ) ∂ᵢγᵇ ∂ⱼγᶜ.
pub fn jet2(map: &MapDescriptor, x: &[f64]) -> MapJet2 {
    let n = map.domain.dim();
    let cj = map.coord_jet(x);
    let m = cj.value.len();
    let dom_gamma = map.domain.christoffel(x);
    let cod_gamma = map.codomain.christoffel(&cj.value);
    let g = map.domain.metric(x);
    let ginv = metric_inverse(&g);
    let hmet = map.codomain.metric(&cj.value);
    let j = &cj.jacobian;
    let mut hessian = Vec::with_capacity(m);
    for a in 0..m {
        let mut h = cj.second[a].clone();
        for i in 0..n {
            for k in i..n {
                let mut s = 0.0;
                for l in 0..n {
                    s -= dom_gamma.get(l, i, k) * j[(a, l)];
                }
                if !matches!(map.codomain, Codomain::Euclidean(_)) {
                    for b in 0..m {
                        for c in 0..m {
                            s += cod_gamma.get(a, b, c) * j[(b, i)] * j[(c, k)];
                        }
                    }
                }
                h[(i, k)] += s;
                if i != k {
                    h[(k, i)] += s;
                }
            }
        }
        hessian.push(h);
    }
    let tension = hessian.iter().map(|h| ginv.component_mul(h).sum()).collect();
    MapJet2 {
        at: x.to_vec(),
        value: cj.value,
        differential: cj.jacobian,
        hessian,
        tension,
        domain_metric: g,
        domain_metric_inv: ginv,
        codomain_metric: hmet,
    }
}

/// Step used for differentiating smooth fields numerically.
pub(crate) const FIELD_STEP: f64 = 1e-2;

/// Covariant derivative ∇τ(γ): `out[(a, i)]` = (∇ᵢτ)ᵃ, with ∂ᵢτ from
/// Richardson-extrapolated central differences of the closed-form tension.
pub fn tension_gradient(map: &MapDescriptor, x: &[f64]) -> DMatrix<f64> {
    let jet = jet2(map, x);
    tension_gradient_with_jet(map, &jet)
}

pub(crate) fn tension_gradient_with_jet(map: &MapDescriptor, jet: &MapJet2) -> DMatrix<f64> {
    let n = map.domain.dim();
    let m = jet.value.len();
    let f = |p: &[f64]| jet2(map, p).tension;
    let cod_gamma = map.codomain.christoffel(&jet.value);
    let mut out = DMatrix::zeros(m, n);
    for i in 0..n {
        let d = fd::partial(&f, &jet.at, &[i], FIELD_STEP);
        for a in 0..m {
            let mut s = d[a];
            for b in 0..m {
                for c in 0..m {
                    s += cod_gamma.get(a, b, c) * jet.differential[(b, i)] * jet.tension[c];
                }
            }
            out[(a, i)] = s;
        }
    }
    out
}

/// ⟨dγ, ∇τ⟩ = gⁱʲ hₐᵦ ∂ᵢγᵃ (∇ⱼτ)ᵇ.
pub(crate) fn differential_pairing(jet: &MapJet2, grad_tau: &DMatrix<f64>) -> f64 {
    let m = jet.differential.transpose() * &jet.codomain_metric * grad_tau;
    jet.domain_metric_inv.component_mul(&m).sum()
}
