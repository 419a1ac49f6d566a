//! Prior densities on the parameter manifold and the least-favourable prior
//! eigenproblems for L, L_a and H.

use crate::error::{Error, Result};
use crate::grid_calculus::{interpolate, interpolate_components, nodal_gradient, GradientScheme};
use crate::manifold::QuadratureGrid;
use crate::subriemannian::{assemble_h, DiscreteOperator, OperatorKind, SIGN_CONVENTION};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Priors with a closed form, as they appear in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorForm {
    /// λ = 1 / vol(Θ).
    Uniform,
    /// λ ∝ 1 + amplitude · cos(θ_axis), |amplitude| < 1.
    Cosine { amplitude: f64, axis: usize },
}

/// A prior λ = ω² with respect to the Riemannian volume dθ, sampled on a
/// grid and optionally known in closed form.
#[derive(Clone, Debug)]
pub struct PriorDensity {
    pub grid: QuadratureGrid,
    pub omega: Vec<f64>,
    pub lambda: Vec<f64>,
    /// a² when the prior came from the weighted problem with flat measure
    /// a²dθ.
    pub flat_weight: Option<Vec<f64>>,
    pub form: Option<PriorForm>,
    /// Normalising constant of the closed form.
    scale: f64,
    /// Spectral nodal gradient of ω, `dim` components per node.
    omega_gradient: Vec<f64>,
}

impl PriorDensity {
    pub fn uniform(grid: &QuadratureGrid) -> Self {
        Self::from_form(grid, PriorForm::Uniform).expect("uniform prior is always valid")
    }

    pub fn from_form(grid: &QuadratureGrid, form: PriorForm) -> Result<Self> {
        let unnormalised = |x: &[f64]| match form {
            PriorForm::Uniform => 1.0,
            PriorForm::Cosine { amplitude, axis } => 1.0 + amplitude * x[axis].cos(),
        };
        if let PriorForm::Cosine { amplitude, axis } = form {
            if axis >= grid.dim() {
                return Err(Error::InvalidArgument(format!("prior axis {axis} on a {}-dimensional grid", grid.dim())));
            }
            if !(amplitude.abs() < 1.0) {
                return Err(Error::InvalidArgument(format!("cosine prior needs |amplitude| < 1, got {amplitude}")));
            }
        }
        // The grid rule integrates these trigonometric forms exactly.
        let raw: Vec<f64> = (0..grid.len()).map(|i| unnormalised(grid.coords(i))).collect();
        let z = grid.integrate(&raw);
        let lambda: Vec<f64> = raw.iter().map(|v| v / z).collect();
        let mut p = Self::build(grid, lambda.iter().map(|v| v.sqrt()).collect(), None);
        p.form = Some(form);
        p.scale = 1.0 / z;
        Ok(p)
    }

    /// A prior from nodal values of λ, normalised to unit mass.
    pub fn from_lambda(grid: &QuadratureGrid, lambda: &[f64]) -> Result<Self> {
        if lambda.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", lambda.len(), grid.len())));
        }
        if let Some(&v) = lambda.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("prior density must be nonnegative, got {v}")));
        }
        let z = grid.integrate(lambda);
        if !(z > 0.0) {
            return Err(Error::VanishingPrior);
        }
        Ok(Self::build(grid, lambda.iter().map(|v| (v / z).sqrt()).collect(), None))
    }

    /// A prior from nodal values of ω, with the sign fixed so that ∫ω > 0
    /// and λ = ω² normalised.
    pub fn from_omega(grid: &QuadratureGrid, omega: &[f64], flat_weight: Option<Vec<f64>>) -> Result<Self> {
        if omega.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", omega.len(), grid.len())));
        }
        let sign = if grid.integrate(omega) < 0.0 { -1.0 } else { 1.0 };
        let mass: f64 = grid.integrate(&omega.iter().map(|w| w * w).collect::<Vec<_>>());
        if !(mass > 0.0) {
            return Err(Error::VanishingPrior);
        }
        let s = sign / mass.sqrt();
        Ok(Self::build(grid, omega.iter().map(|w| w * s).collect(), flat_weight))
    }

    fn build(grid: &QuadratureGrid, omega: Vec<f64>, flat_weight: Option<Vec<f64>>) -> Self {
        let lambda = omega.iter().map(|w| w * w).collect();
        let omega_gradient = nodal_gradient(grid, &omega, GradientScheme::Spectral);
        Self { grid: grid.clone(), omega, lambda, flat_weight, form: None, scale: 1.0, omega_gradient }
    }

    /// λ at a chart point.
    pub fn density_at(&self, x: &[f64]) -> f64 {
        match self.form {
            Some(PriorForm::Uniform) => self.scale,
            Some(PriorForm::Cosine { amplitude, axis }) => self.scale * (1.0 + amplitude * x[axis].cos()),
            None => interpolate(&self.grid, &self.omega, x).powi(2),
        }
    }

    /// Chart components of d log λ at a point.
    pub fn log_gradient_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.dim();
        match self.form {
            Some(PriorForm::Uniform) => Ok(vec![0.0; n]),
            Some(PriorForm::Cosine { amplitude, axis }) => {
                let mut g = vec![0.0; n];
                g[axis] = -amplitude * x[axis].sin() / (1.0 + amplitude * x[axis].cos());
                Ok(g)
            }
            None => {
                let w = interpolate(&self.grid, &self.omega, x);
                if !(w.abs() > 1e-300) {
                    return Err(Error::VanishingPrior);
                }
                let dw = interpolate_components(&self.grid, &self.omega_gradient, n, x);
                Ok(dw.iter().map(|d| 2.0 * d / w).collect())
            }
        }
    }

    /// Upper bound on λ used for rejection sampling.
    fn density_bound(&self) -> f64 {
        match self.form {
            Some(PriorForm::Uniform) => self.scale,
            Some(PriorForm::Cosine { amplitude, .. }) => self.scale * (1.0 + amplitude.abs()),
            // Cubic interpolation overshoots nodal maxima only slightly.
            None => 1.5 * self.lambda.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// A draw θ ~ λ dθ by rejection from the volume-uniform distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = &self.grid.manifold;
        let bound = self.density_bound();
        loop {
            let x = m.sample_uniform(rng);
            if rng.random::<f64>() * bound <= self.density_at(&x) {
                return x;
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.integrate(&self.lambda)
    }
}

/// Which eigensolver produced a solution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenMethod {
    /// Dense below [`DENSE_LIMIT`] unknowns, shift-and-invert above.
    #[default]
    Auto,
    Dense,
    ShiftInvert,
}

pub const DENSE_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    pub method: EigenMethod,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { method: EigenMethod::Auto, tolerance: 1e-10, max_iterations: 10_000 }
    }
}

/// The largest eigenpair of a grid operator.
#[derive(Clone, Debug)]
pub struct EigenSolution {
    pub alpha: f64,
    pub prior: PriorDensity,
    /// ‖Aω − αω‖_W / ‖ω‖_W.
    pub residual: f64,
    pub iterations: usize,
    pub method: EigenMethod,
    /// Distance to the next eigenvalue when the dense route computed it.
    pub gap: Option<f64>,
    pub kind: OperatorKind,
}

/// The eigenvector in W-orthonormal form with its eigenvalue.
struct RawEigen {
    alpha: f64,
    vector: Vec<f64>,
    iterations: usize,
    gap: Option<f64>,
    method: EigenMethod,
}

fn weighted_residual(op: &DiscreteOperator, alpha: f64, v: &[f64]) -> f64 {
    let av = op.apply(v);
    let r: Vec<f64> = av.iter().zip(v).map(|(a, b)| a - alpha * b).collect();
    (op.inner(&r, &r) / op.inner(v, v)).sqrt()
}

fn dense_top(op: &DiscreteOperator) -> RawEigen {
    let n = op.len();
    let s = op.symmetric_dense();
    let root: Vec<f64> = op.weights.iter().map(|w| w.sqrt()).collect();
    let b = DMatrix::from_fn(n, n, |i, j| s[(i, j)] / (root[i] * root[j]));
    let eig = nalgebra::SymmetricEigen::new((&b + b.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
    let top = eig.eigenvalues[order[0]];
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let degenerate: Vec<usize> = order.iter().copied().take_while(|&k| top - eig.eigenvalues[k] <= 1e-9 * scale).collect();
    let gap = order.get(degenerate.len()).map(|&k| top - eig.eigenvalues[k]);
    // In a degenerate top eigenspace pick the projection of the constant.
    let constant = DVector::from_iterator(n, root.iter().copied());
    let mut y = DVector::zeros(n);
    for &k in &degenerate {
        let e = eig.eigenvectors.column(k);
        y += e * e.dot(&constant);
    }
    if y.norm() < 1e-8 * constant.norm() {
        y = eig.eigenvectors.column(order[0]).into_owned();
    }
    let vector = y.iter().zip(&root).map(|(v, r)| v / r).collect();
    RawEigen { alpha: top, vector, iterations: 1, gap, method: EigenMethod::Dense }
}

/// Preconditioned conjugate gradients for (σW − S)x = rhs.
fn cg_solve(op: &DiscreteOperator, sigma: f64, rhs: &[f64], x0: &[f64], tol: f64, cap: usize) -> Result<Vec<f64>> {
    let n = rhs.len();
    let apply = |v: &[f64]| -> Vec<f64> {
        let sv = op.symmetric_apply(v);
        (0..n).map(|i| sigma * op.weights[i] * v[i] - sv[i]).collect()
    };
    let diag: Vec<f64> = {
        let mut d = vec![0.0; n];
        for (i, row) in op.stiffness.row_iter().enumerate() {
            let kii = row.col_indices().iter().zip(row.values()).find(|(&j, _)| j == i).map(|(_, v)| *v).unwrap_or(0.0);
            d[i] = sigma * op.weights[i] - op.weights[i] * op.potential[i] - op.coeff * kii;
        }
        d
    };
    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    for it in 0..cap {
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol * bnorm {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::EigenNonConvergence { iterations: it, residual: rnorm / bnorm });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(Error::EigenNonConvergence { iterations: cap, residual: rnorm / bnorm })
}

/// Inverse iteration with the fixed shift σ = max(potential) + δ, above the
/// whole spectrum because the Dirichlet part is nonpositive. Started from
/// the constant so a degenerate top eigenspace yields the projection of
/// the constant.
fn shift_invert_top(op: &DiscreteOperator, opts: &EigenOptions) -> Result<RawEigen> {
    let n = op.len();
    let pmax = op.potential.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sigma = pmax + 1e-3 * (1.0 + pmax.abs());
    let mut v = vec![1.0; n];
    let norm = op.inner(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut alpha = op.quadratic_form(&v);
    for it in 1..=opts.max_iterations {
        let rhs: Vec<f64> = v.iter().zip(&op.weights).map(|(a, w)| a * w).collect();
        let guess: Vec<f64> = v.iter().map(|x| x / (sigma - alpha).max(1e-12)).collect();
        let mut next = cg_solve(op, sigma, &rhs, &guess, 1e-13, 20 * n + 100)?;
        let norm = op.inner(&next, &next).sqrt();
        next.iter_mut().for_each(|x| *x /= norm);
        alpha = op.quadratic_form(&next);
        v = next;
        let res = weighted_residual(op, alpha, &v);
        if res <= opts.tolerance * (1.0 + alpha.abs()) {
            return Ok(RawEigen { alpha, vector: v, iterations: it, gap: None, method: EigenMethod::ShiftInvert });
        }
    }
    Err(Error::EigenNonConvergence { iterations: opts.max_iterations, residual: weighted_residual(op, alpha, &v) })
}

fn solve_raw(op: &DiscreteOperator, opts: &EigenOptions) -> Result<RawEigen> {
    let dense = match opts.method {
        EigenMethod::Dense => true,
        EigenMethod::ShiftInvert => false,
        EigenMethod::Auto => op.len() < DENSE_LIMIT,
    };
    if dense {
        Ok(dense_top(op))
    } else {
        shift_invert_top(op, opts)
    }
}

/// Largest eigenpair of L (or H), with ω nonnegative and ∫ω² dθ = 1.
pub fn solve_optimal_prior(op: &DiscreteOperator, opts: &EigenOptions) -> Result<EigenSolution> {
    if op.kind == OperatorKind::LWeighted {
        return Err(Error::InvalidArgument("weighted operators are solved with solve_weighted_prior".into()));
    }
    let raw = solve_raw(op, opts)?;
    let residual = weighted_residual(op, raw.alpha, &raw.vector);
    let prior = PriorDensity::from_omega(&op.grid, &raw.vector, None)?;
    Ok(EigenSolution {
        alpha: raw.alpha,
        prior,
        residual,
        iterations: raw.iterations,
        method: raw.method,
        gap: raw.gap,
        kind: op.kind,
    })
}

/// Largest eigenpair of L_a η = α a²η with ∫η² a²dθ = 1; the prior is
/// λ = a²η².
pub fn solve_weighted_prior(op: &DiscreteOperator, a: &[f64], opts: &EigenOptions) -> Result<EigenSolution> {
    if a.len() != op.len() {
        return Err(Error::GridMismatch(format!("{} weight values for {} nodes", a.len(), op.len())));
    }
    let raw = solve_raw(op, opts)?;
    let residual = weighted_residual(op, raw.alpha, &raw.vector);
    let omega: Vec<f64> = raw.vector.iter().zip(a).map(|(e, a)| e * a).collect();
    let prior = PriorDensity::from_omega(&op.grid, &omega, Some(a.iter().map(|v| v * v).collect()))?;
    Ok(EigenSolution {
        alpha: raw.alpha,
        prior,
        residual,
        iterations: raw.iterations,
        method: raw.method,
        gap: raw.gap,
        kind: op.kind,
    })
}

/// How α_ε was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaEpsilonRoute {
    /// |dγ|² constant: α_ε = |dγ|² + ε²α.
    Affine,
    /// Largest eigenvalue of H = ε²L + |dγ|².
    HEigensolve,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaEpsilon {
    pub epsilon: f64,
    pub alpha_epsilon: f64,
    pub route: AlphaEpsilonRoute,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimaxReport {
    /// r(Θ), or r*(Θ) for the weighted problem.
    pub r_theta: f64,
    pub weighted: bool,
    pub alpha_epsilon: Vec<AlphaEpsilon>,
    pub energy_constant: bool,
    pub residual: f64,
    pub integrable_distribution: bool,
    pub sign_convention: &'static str,
}

/// Second-order minimax quantities from a solved L (or L_a) problem.
pub fn minimax_report(
    solution: &EigenSolution,
    l: &DiscreteOperator,
    energy: &[f64],
    epsilons: &[f64],
    integrable: bool,
    opts: &EigenOptions,
) -> Result<MinimaxReport> {
    let (lo, hi) = energy.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    let energy_constant = hi - lo <= 1e-10 * (1.0 + hi.abs());
    let mut alpha_epsilon = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let entry = if energy_constant {
            AlphaEpsilon { epsilon: eps, alpha_epsilon: hi + eps * eps * solution.alpha, route: AlphaEpsilonRoute::Affine }
        } else {
            let h = assemble_h(l, energy, eps)?;
            let sol = solve_raw(&h, opts)?;
            AlphaEpsilon { epsilon: eps, alpha_epsilon: sol.alpha, route: AlphaEpsilonRoute::HEigensolve }
        };
        alpha_epsilon.push(entry);
    }
    Ok(MinimaxReport {
        r_theta: solution.alpha,
        weighted: solution.kind == OperatorKind::LWeighted,
        alpha_epsilon,
        energy_constant,
        residual: solution.residual,
        integrable_distribution: integrable,
        sign_convention: SIGN_CONVENTION,
    })
}
