//! The sub-riemannian structure E = (ker dγ)^⊥ induced by a map, its
//! cometric μ, and discrete sub-laplacians together with the operators
//! L, L_a and H assembled on quadrature grids.
//!
//! Sign convention: Δ_E is positive semidefinite, with
//! ∫u Δ_E v dν = ∫μ(du, dv) dν. The operators L and H are assembled so that
//! their quadratic forms are Q(ω) = ∫κω² − 4∫μ(dω, dω) (and
//! ε²Q(ω) + ∫|dγ|²ω² for H); their largest eigenvalue is a ground-state
//! problem for the positive operator 4Δ_E − κ.

use crate::error::{Error, Result};
use crate::fd;
use crate::manifold::{metric_inverse, AxisKind, QuadratureGrid};
use crate::maps::{kappa_general, MapDescriptor};
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;
use serde::Serialize;

/// Recorded next to every eigenvalue report.
pub const SIGN_CONVENTION: &str = "Q(w) = int kappa w^2 - 4 int mu(dw, dw); L = kappa - 4 Delta_E with Delta_E >= 0";

/// Relative eigenvalue threshold below which a direction of μ counts as null.
const RANK_TOL: f64 = 1e-10;

/// μ = G⁻¹JᵀHJG⁻¹ at a domain chart point.
pub fn cometric_at(map: &MapDescriptor, x: &[f64]) -> DMatrix<f64> {
    let cj = map.coord_jet(x);
    let ginv = metric_inverse(&map.domain.metric(x));
    let h = map.codomain.metric(&cj.value);
    let mu = &ginv * cj.jacobian.transpose() * h * &cj.jacobian * &ginv;
    (&mu + mu.transpose()) * 0.5
}

/// Rank of a cometric measured against the domain metric.
pub fn cometric_rank(mu: &DMatrix<f64>, g: &DMatrix<f64>) -> usize {
    let l = match g.clone().cholesky() {
        Some(c) => c.l(),
        None => return mu.rank(RANK_TOL),
    };
    let m = l.transpose() * mu * &l;
    let ev = nalgebra::SymmetricEigen::new((&m + m.transpose()) * 0.5).eigenvalues;
    let top = ev.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0;
    }
    ev.iter().filter(|&&e| e > RANK_TOL * top).count()
}

/// The cometric of a map sampled on a grid.
#[derive(Clone, Debug)]
pub struct CometricField {
    pub grid: QuadratureGrid,
    pub map: MapDescriptor,
    /// μ at every node, acting on chart covectors.
    pub mu: Vec<DMatrix<f64>>,
    pub rank: Vec<usize>,
    /// Whether E is integrable (rank-deficient and involutive), in which
    /// case the optimal prior concentrates on leaves.
    pub integrable: bool,
}

impl CometricField {
    pub fn at(&self, x: &[f64]) -> DMatrix<f64> {
        cometric_at(&self.map, x)
    }

    pub fn max_rank(&self) -> usize {
        self.rank.iter().copied().max().unwrap_or(0)
    }
}

pub fn cometric(map: &MapDescriptor, grid: &QuadratureGrid) -> Result<CometricField> {
    if grid.manifold != map.domain {
        return Err(Error::GridMismatch("grid is not on the map's domain".into()));
    }
    let mu: Vec<DMatrix<f64>> = grid.map_nodes(|x| cometric_at(map, x));
    let rank: Vec<usize> = (0..grid.len())
        .into_par_iter()
        .map(|i| cometric_rank(&mu[i], &map.domain.metric(grid.coords(i))))
        .collect();
    let n = grid.dim();
    let max_rank = rank.iter().copied().max().unwrap_or(0);
    let integrable = max_rank < n && {
        let probes = [0, grid.len() / 3, 2 * grid.len() / 3];
        probes.iter().all(|&i| involutive(map, grid.coords(i)))
    };
    Ok(CometricField { grid: grid.clone(), map: map.clone(), mu, rank, integrable })
}

/// Frobenius test at a point: brackets of the fields X_c = μ·c, for the
/// covectors c spanning the image of μ at `x`, stay inside E.
fn involutive(map: &MapDescriptor, x: &[f64]) -> bool {
    let mu0 = cometric_at(map, x);
    let g = map.domain.metric(x);
    let r = cometric_rank(&mu0, &g);
    if r <= 1 {
        return true;
    }
    let eig = nalgebra::SymmetricEigen::new(mu0.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let covectors: Vec<DVector<f64>> = order[..r].iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
    let values: Vec<DVector<f64>> = covectors.iter().map(|c| &mu0 * c).collect();
    let span = DMatrix::from_columns(&values);
    let proj = &span * span.clone().pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::zeros(r, span.nrows()));
    let n = x.len();
    for a in 0..r {
        for b in a + 1..r {
            let (ca, cb) = (&covectors[a], &covectors[b]);
            let fa = |p: &[f64]| (cometric_at(map, p) * ca).as_slice().to_vec();
            let fb = |p: &[f64]| (cometric_at(map, p) * cb).as_slice().to_vec();
            let mut bracket = DVector::zeros(n);
            for i in 0..n {
                let da = fd::partial(&fa, x, &[i], 1e-3);
                let db = fd::partial(&fb, x, &[i], 1e-3);
                for k in 0..n {
                    bracket[k] += db[k] * values[a][i] - da[k] * values[b][i];
                }
            }
            let off = &bracket - &proj * &bracket;
            if off.norm() > 1e-6 * (1.0 + bracket.norm()) {
                return false;
            }
        }
    }
    true
}

/// Which operator a [`DiscreteOperator`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Sublaplacian,
    LaplaceBeltrami,
    L,
    LWeighted,
    H,
}

/// A grid operator A = diag(potential) + coeff · W⁻¹K, self-adjoint in the
/// inner product ⟨u, v⟩_W = Σ wᵢ uᵢ vᵢ. K is the symmetric stiffness
/// matrix of the Dirichlet form uᵀKv ≈ ∫μ(du, dv) in the operator's measure.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub kind: OperatorKind,
    pub grid: QuadratureGrid,
    pub weights: Vec<f64>,
    pub potential: Vec<f64>,
    pub stiffness: CsrMatrix<f64>,
    pub coeff: f64,
    pub epsilon: Option<f64>,
}

impl DiscreteOperator {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Ku.
    pub fn stiffness_apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (i, row) in self.stiffness.row_iter().enumerate() {
            out[i] = row.col_indices().iter().zip(row.values()).map(|(&j, v)| v * u[j]).sum();
        }
        out
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let ku = self.stiffness_apply(u);
        (0..u.len()).map(|i| self.potential[i] * u[i] + self.coeff * ku[i] / self.weights[i]).collect()
    }

    /// ⟨u, v⟩_W.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum()
    }

    /// uᵀKv.
    pub fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> f64 {
        self.stiffness_apply(v).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    /// ⟨u, Au⟩_W.
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        let pot: f64 = self.weights.iter().zip(&self.potential).zip(u).map(|((w, p), a)| w * p * a * a).sum();
        pot + self.coeff * self.dirichlet_form(u, u)
    }

    /// Symmetric matrix S = W·diag(potential) + coeff·K, so that Au = αu is
    /// the generalised problem Su = αWu.
    pub fn symmetric_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut s = DMatrix::zeros(n, n);
        for (i, row) in self.stiffness.row_iter().enumerate() {
            for (&j, v) in row.col_indices().iter().zip(row.values()) {
                s[(i, j)] += self.coeff * v;
            }
            s[(i, i)] += self.weights[i] * self.potential[i];
        }
        s
    }

    /// S·u with S as in [`Self::symmetric_dense`].
    pub fn symmetric_apply(&self, u: &[f64]) -> Vec<f64> {
        let ku = self.stiffness_apply(u);
        (0..u.len()).map(|i| self.weights[i] * self.potential[i] * u[i] + self.coeff * ku[i]).collect()
    }
}

/// Control-volume width of node `k` along an axis: the periodic spacing, or
/// the coordinate weight on a colatitude axis (so that node weights are the
/// exact cell areas).
fn transverse_width(grid: &QuadratureGrid, axis: usize, k: usize) -> f64 {
    grid.axes[axis].weights[k]
}

/// Stiffness matrix of ∫μ(du, dv) b dθ for a cometric given pointwise, with
/// b a positive nodal density (edges use √(bᵢbⱼ)).
fn assemble_stiffness(
    grid: &QuadratureGrid,
    mu_at: &(dyn Fn(&[f64]) -> DMatrix<f64> + Sync),
    density: Option<&[f64]>,
) -> CsrMatrix<f64> {
    let n = grid.len();
    let d = grid.dim();
    let m = &grid.manifold;
    let edge_scale = |i: usize, j: usize| density.map(|b| (b[i] * b[j]).sqrt()).unwrap_or(1.0);
    // Edges along each axis between node i and its successor.
    let edges: Vec<Vec<(usize, usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let idx = grid.multi_index(i);
            let x = grid.coords(i);
            let mut out = Vec::with_capacity(d);
            for axis in 0..d {
                let ax = &grid.axes[axis];
                let k = idx[axis];
                let (j, dist, face) = match ax.kind {
                    AxisKind::Periodic => {
                        let mut jdx = idx.clone();
                        jdx[axis] = (k + 1) % ax.len();
                        let h = ax.spacing();
                        (grid.flat_index(&jdx), h, x[axis] + 0.5 * h)
                    }
                    AxisKind::Colatitude => {
                        if k + 1 == ax.len() {
                            continue;
                        }
                        let mut jdx = idx.clone();
                        jdx[axis] = k + 1;
                        (grid.flat_index(&jdx), ax.nodes[k + 1] - ax.nodes[k], ax.faces[k + 1])
                    }
                };
                let mut xf = x.to_vec();
                xf[axis] = face;
                let mu = mu_at(&xf);
                let coef = mu[(axis, axis)];
                if coef == 0.0 {
                    continue;
                }
                let across: f64 = (0..d).filter(|&l| l != axis).map(|l| transverse_width(grid, l, idx[l])).product();
                let c = coef * m.volume_density(&xf) * across / dist * edge_scale(i, j);
                out.push((i, j, c));
            }
            out
        })
        .collect();
    let mut coo = CooMatrix::new(n, n);
    for (i, j, c) in edges.into_iter().flatten() {
        coo.push(i, i, c);
        coo.push(j, j, c);
        coo.push(i, j, -c);
        coo.push(j, i, -c);
    }
    // Mixed terms μᵏˡ ∂ₖu ∂ₗv from cell-averaged differences.
    for k in 0..d {
        for l in k + 1..d {
            for (i, j, c) in cross_terms(grid, mu_at, k, l, &edge_scale) {
                coo.push(i, j, c);
            }
        }
    }
    CsrMatrix::from(&coo)
}

fn cross_terms(
    grid: &QuadratureGrid,
    mu_at: &(dyn Fn(&[f64]) -> DMatrix<f64> + Sync),
    k: usize,
    l: usize,
    edge_scale: &(dyn Fn(usize, usize) -> f64 + Sync),
) -> Vec<(usize, usize, f64)> {
    let d = grid.dim();
    let m = &grid.manifold;
    (0..grid.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let idx = grid.multi_index(i);
            let x = grid.coords(i);
            let step = |axis: usize, jdx: &mut Vec<usize>| -> Option<(f64, f64)> {
                let ax = &grid.axes[axis];
                let kk = jdx[axis];
                match ax.kind {
                    AxisKind::Periodic => {
                        jdx[axis] = (kk + 1) % ax.len();
                        Some((ax.spacing(), ax.nodes[kk] + 0.5 * ax.spacing()))
                    }
                    AxisKind::Colatitude if kk + 1 < ax.len() => {
                        jdx[axis] = kk + 1;
                        Some((ax.nodes[kk + 1] - ax.nodes[kk], ax.faces[kk + 1]))
                    }
                    AxisKind::Colatitude => None,
                }
            };
            let mut out = Vec::new();
            let mut i10 = idx.clone();
            let Some((hk, ck)) = step(k, &mut i10) else { return out.into_iter() };
            let mut i01 = idx.clone();
            let Some((hl, cl)) = step(l, &mut i01) else { return out.into_iter() };
            let mut i11 = i10.clone();
            step(l, &mut i11);
            let mut xc = x.to_vec();
            xc[k] = ck;
            xc[l] = cl;
            let mu = mu_at(&xc);
            let mkl = mu[(k, l)];
            if mkl.abs() <= 1e-14 * (mu[(k, k)].abs() + mu[(l, l)].abs()).max(1e-300) {
                return out.into_iter();
            }
            let nodes = [i, grid.flat_index(&i10), grid.flat_index(&i01), grid.flat_index(&i11)];
            // ∂ₖ and ∂ₗ at the cell centre as combinations of the corners.
            let dk = [-0.5 / hk, 0.5 / hk, -0.5 / hk, 0.5 / hk];
            let dl = [-0.5 / hl, -0.5 / hl, 0.5 / hl, 0.5 / hl];
            let others: f64 = (0..d).filter(|&a| a != k && a != l).map(|a| transverse_width(grid, a, idx[a])).product();
            let scale = (edge_scale(nodes[0], nodes[3]) * edge_scale(nodes[1], nodes[2])).sqrt();
            let c = mkl * m.volume_density(&xc) * hk * hl * others * scale;
            for p in 0..4 {
                for q in 0..4 {
                    out.push((nodes[p], nodes[q], c * (dk[p] * dl[q] + dl[p] * dk[q])));
                }
            }
            out.into_iter()
        })
        .collect()
}

fn check_density(values: &[f64], len: usize) -> Result<()> {
    if values.len() != len {
        return Err(Error::GridMismatch(format!("{} values for {} nodes", values.len(), len)));
    }
    match values.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
        Some(&v) => Err(Error::NonPositiveWeight(v)),
        None => Ok(()),
    }
}

/// Δ_E for the measure b·dθ (b ≡ 1 when `density` is `None`).
pub fn sublaplacian(mu: &CometricField, density: Option<&[f64]>) -> Result<DiscreteOperator> {
    let grid = &mu.grid;
    if let Some(b) = density {
        check_density(b, grid.len())?;
    }
    let map = &mu.map;
    let stiffness = assemble_stiffness(grid, &|x| cometric_at(map, x), density);
    let weights = match density {
        Some(b) => grid.weights.iter().zip(b).map(|(w, b)| w * b).collect(),
        None => grid.weights.clone(),
    };
    Ok(DiscreteOperator {
        kind: OperatorKind::Sublaplacian,
        grid: grid.clone(),
        weights,
        potential: vec![0.0; grid.len()],
        stiffness,
        coeff: 1.0,
        epsilon: None,
    })
}

/// The Laplace–Beltrami operator of the domain, positive semidefinite.
pub fn laplace_beltrami(grid: &QuadratureGrid) -> DiscreteOperator {
    let m = grid.manifold.clone();
    let stiffness = assemble_stiffness(grid, &|x| metric_inverse(&m.metric(x)), None);
    DiscreteOperator {
        kind: OperatorKind::LaplaceBeltrami,
        grid: grid.clone(),
        weights: grid.weights.clone(),
        potential: vec![0.0; grid.len()],
        stiffness,
        coeff: 1.0,
        epsilon: None,
    }
}

/// κ at every grid node.
pub fn kappa_field(map: &MapDescriptor, grid: &QuadratureGrid) -> Vec<f64> {
    grid.map_nodes(|x| kappa_general(map, x).kappa)
}

/// |dγ|² at every grid node.
pub fn energy_field(map: &MapDescriptor, grid: &QuadratureGrid) -> Vec<f64> {
    grid.map_nodes(|x| {
        let mu = cometric_at(map, x);
        (map.domain.metric(x) * mu).trace()
    })
}

/// L = κ − 4Δ_E, or for a positive weight a the operator acting on η = ω/a
/// in the measure a²dθ. Its form ⟨η, L_a η⟩ equals Q(aη) exactly, which
/// makes the potential κ_a = κ − 4(Δ_E a)/a.
pub fn assemble_l(kappa: &[f64], mu: &CometricField, a: Option<&[f64]>) -> Result<DiscreteOperator> {
    let grid = &mu.grid;
    if kappa.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} κ values for {} nodes", kappa.len(), grid.len())));
    }
    match a {
        None => {
            let mut op = sublaplacian(mu, None)?;
            op.kind = OperatorKind::L;
            op.potential = kappa.to_vec();
            op.coeff = -4.0;
            Ok(op)
        }
        Some(a) => {
            check_density(a, grid.len())?;
            let plain = sublaplacian(mu, None)?;
            let ka = plain.stiffness_apply(a);
            let a2: Vec<f64> = a.iter().map(|v| v * v).collect();
            let mut op = sublaplacian(mu, Some(&a2))?;
            op.kind = OperatorKind::LWeighted;
            op.potential = (0..grid.len()).map(|i| kappa[i] - 4.0 * ka[i] / (grid.weights[i] * a[i])).collect();
            op.coeff = -4.0;
            Ok(op)
        }
    }
}

/// H = ε²L + |dγ|².
pub fn assemble_h(l: &DiscreteOperator, energy: &[f64], epsilon: f64) -> Result<DiscreteOperator> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {epsilon}")));
    }
    if energy.len() != l.len() {
        return Err(Error::GridMismatch(format!("{} energy values for {} nodes", energy.len(), l.len())));
    }
    let e2 = epsilon * epsilon;
    Ok(DiscreteOperator {
        kind: OperatorKind::H,
        grid: l.grid.clone(),
        weights: l.weights.clone(),
        potential: l.potential.iter().zip(energy).map(|(p, e)| e2 * p + e).collect(),
        stiffness: l.stiffness.clone(),
        coeff: e2 * l.coeff,
        epsilon: Some(epsilon),
    })
}
