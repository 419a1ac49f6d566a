use super::jet::{codomain_inner, differential_pairing, jet2, tension_gradient_with_jet, FIELD_STEP};
use super::{MapDescriptor, MapJet2};
use crate::error::{Error, Result};
use crate::fd;
use crate::manifold::metric_inverse;
use nalgebra::DMatrix;
use serde::Serialize;

/// Which closed form produced `kappa`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaFormula {
    General,
    Immersion,
    Submersion,
}

/// κ at a point with every ingredient, so its assembly can be audited.
///
/// With Γ = γ∘π the composition through the nearest-point projection,
/// κ = ½|∇dΓ|² − ⅔⟨dΓ, Ric dΓ⟩ + |τ(γ)|² + 2⟨dγ, ∇τ(γ)⟩.
#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    pub formula: KappaFormula,
    pub kappa: f64,
    /// |∇dΓ|² over the ambient space.
    pub composite_hessian_sq: f64,
    /// |∇dγ|² over the manifold.
    pub map_hessian_sq: f64,
    /// |∇dΓ|² − |∇dγ|², the part contributed by the curvature of the
    /// projection.
    pub projection_term: f64,
    /// ⟨dΓ, Ric dΓ⟩.
    pub ricci_term: f64,
    /// |τ(γ)|².
    pub tension_sq: f64,
    /// ⟨dγ, ∇τ(γ)⟩.
    pub tension_pairing: f64,
    /// |dγ|².
    pub energy: f64,
}

/// Columns form a g-orthonormal frame in chart components.
pub(crate) fn orthonormal_frame(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    match g.clone().cholesky() {
        Some(ch) => ch.l().transpose().try_inverse().unwrap_or_else(|| DMatrix::identity(n, n)),
        None => {
            let eig = nalgebra::SymmetricEigen::new(g.clone());
            let mut e = eig.eigenvectors.clone();
            for k in 0..n {
                let ev = eig.eigenvalues[k];
                let s = if ev > 1e-300 { 1.0 / ev.sqrt() } else { 0.0 };
                for i in 0..n {
                    e[(i, k)] *= s;
                }
            }
            e
        }
    }
}

/// Σᵢⱼ ⟨uᵢ, R(uᵢ, uⱼ)uⱼ⟩ in the codomain for uᵢ = dγ(eᵢ).
fn codomain_sectional_sum(map: &MapDescriptor, jet: &MapJet2) -> f64 {
    if matches!(map.codomain, super::Codomain::Euclidean(_)) {
        return 0.0;
    }
    let curv = map.codomain.curvature(&jet.value);
    let e = orthonormal_frame(&jet.domain_metric);
    let n = e.ncols();
    let u: Vec<Vec<f64>> = (0..n).map(|i| jet.push(e.column(i).as_slice())).collect();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let r = curv.apply(&u[i], &u[j], &u[j]);
            s += codomain_inner(&jet.codomain_metric, &u[i], &r);
        }
    }
    s
}

/// ⟨dγ, Ric dγ⟩ = −⟨dγ, dγ(Ric)⟩ + Σᵢⱼ ⟨dγ(eᵢ), R(dγ(eᵢ), dγ(eⱼ))dγ(eⱼ)⟩.
pub fn ricci_coupling(map: &MapDescriptor, x: &[f64]) -> f64 {
    let jet = jet2(map, x);
    ricci_coupling_with_jet(map, &jet)
}

fn ricci_coupling_with_jet(map: &MapDescriptor, jet: &MapJet2) -> f64 {
    let ric = map.domain.curvature(&jet.at).ricci;
    let pulled = jet.differential.transpose() * &jet.codomain_metric * &jet.differential;
    let domain_part = (&pulled * &jet.domain_metric_inv * &ric * &jet.domain_metric_inv).trace();
    -domain_part + codomain_sectional_sum(map, jet)
}

/// The same quantity through the Bochner identity
/// ⟨dγ, Ric dγ⟩ = |∇dγ|² + ⟨dγ, ∇τ⟩ − ½Δ|dγ|², with Δ the trace of the
/// Hessian and derivatives of the closed-form fields taken numerically.
pub fn ricci_coupling_bochner(map: &MapDescriptor, x: &[f64]) -> f64 {
    let jet = jet2(map, x);
    let n = map.domain.dim();
    let grad_tau = tension_gradient_with_jet(map, &jet);
    let pairing = differential_pairing(&jet, &grad_tau);
    let energy = |p: &[f64]| jet2(map, p).energy_density();
    let grad = fd::gradient(&energy, x, FIELD_STEP);
    let hess = fd::hessian(&energy, x, FIELD_STEP);
    let gamma = map.domain.christoffel(x);
    let mut lap = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut cov = hess[i * n + j];
            for k in 0..n {
                cov -= gamma.get(k, i, j) * grad[k];
            }
            lap += jet.domain_metric_inv[(i, j)] * cov;
        }
    }
    jet.hessian_norm_sq() + pairing - 0.5 * lap
}

struct Ingredients {
    jet: MapJet2,
    pairing: f64,
    composite_hessian_sq: f64,
    ricci_term: f64,
}

fn ingredients(map: &MapDescriptor, x: &[f64]) -> Ingredients {
    let dom = &map.domain;
    let jet = jet2(map, x);
    let grad_tau = tension_gradient_with_jet(map, &jet);
    let pairing = differential_pairing(&jet, &grad_tau);
    let nph = dom.normal_projection_hessian_coords(x);
    let basis = nph.basis();
    let n = dom.dim();
    // dπ of each ambient basis vector in chart components.
    let dpi: Vec<Vec<f64>> = basis
        .iter()
        .enumerate()
        .map(|(a, f)| if a < n { dom.ambient_to_components(x, f) } else { vec![0.0; n] })
        .collect();
    let mut composite_hessian_sq = 0.0;
    for a in 0..basis.len() {
        for b in 0..basis.len() {
            let c = dom.ambient_to_components(x, &nph.apply(&basis[a], &basis[b]));
            let mut h = jet.hessian_apply(&dpi[a], &dpi[b]);
            for (hi, pi) in h.iter_mut().zip(jet.push(&c)) {
                *hi += pi;
            }
            composite_hessian_sq += jet.inner(&h, &h);
        }
    }
    // The ambient space is flat, so only the codomain curvature enters.
    let ricci_term = codomain_sectional_sum(map, &jet);
    Ingredients { jet, pairing, composite_hessian_sq, ricci_term }
}

fn report(formula: KappaFormula, kappa: f64, ing: &Ingredients) -> CurvatureReport {
    let map_hessian_sq = ing.jet.hessian_norm_sq();
    CurvatureReport {
        formula,
        kappa,
        composite_hessian_sq: ing.composite_hessian_sq,
        map_hessian_sq,
        projection_term: ing.composite_hessian_sq - map_hessian_sq,
        ricci_term: ing.ricci_term,
        tension_sq: ing.jet.tension_norm_sq(),
        tension_pairing: ing.pairing,
        energy: ing.jet.energy_density(),
    }
}

/// κ from its defining expression, valid for every map in the catalog.
pub fn kappa_general(map: &MapDescriptor, x: &[f64]) -> CurvatureReport {
    let ing = ingredients(map, x);
    let kappa = 0.5 * ing.composite_hessian_sq - 2.0 / 3.0 * ing.ricci_term + ing.jet.tension_norm_sq()
        + 2.0 * ing.pairing;
    report(KappaFormula::General, kappa, &ing)
}

fn relative_defect(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max() / b.abs().max().max(1e-300)
}

const STRUCTURE_TOL: f64 = 1e-9;

/// Closed form for isometric immersions:
/// κ = (5/3)|B|² − (2/3)|τ(ι)|² − (1/6)|∇dγ|² − (1/3)|τ(γ)|², with B and
/// τ(ι) the second fundamental form and tension of the ambient embedding.
pub fn kappa_immersion(map: &MapDescriptor, x: &[f64]) -> Result<CurvatureReport> {
    let jet = jet2(map, x);
    let pulled = jet.differential.transpose() * &jet.codomain_metric * &jet.differential;
    let defect = relative_defect(&pulled, &jet.domain_metric);
    if defect > STRUCTURE_TOL {
        return Err(Error::NotImmersion(defect));
    }
    let ing = ingredients(map, x);
    let b = map.domain.second_fundamental_form_coords(x);
    let kappa = 5.0 / 3.0 * b.norm_sq - 2.0 / 3.0 * b.tension_norm_sq() - ing.jet.hessian_norm_sq() / 6.0
        - ing.jet.tension_norm_sq() / 3.0;
    Ok(report(KappaFormula::Immersion, kappa, &ing))
}

/// Closed form for Riemannian submersions:
/// κ = −(1/6)scal(Λ) + |τ(γ)|² + (3/2)⟨dγ, ∇τ(γ)⟩.
pub fn kappa_submersion(map: &MapDescriptor, x: &[f64]) -> Result<CurvatureReport> {
    let jet = jet2(map, x);
    let pushed = &jet.differential * &jet.domain_metric_inv * jet.differential.transpose();
    let hinv = metric_inverse(&jet.codomain_metric);
    let defect = relative_defect(&pushed, &hinv);
    if defect > STRUCTURE_TOL {
        return Err(Error::NotSubmersion(defect));
    }
    let ing = ingredients(map, x);
    let scal = map.codomain.curvature(&jet.value).scalar;
    let kappa = -scal / 6.0 + ing.jet.tension_norm_sq() + 1.5 * ing.pairing;
    Ok(report(KappaFormula::Submersion, kappa, &ing))
}
