use super::ManifoldDescriptor;
use nalgebra::DMatrix;

/// Metric tensor with its first and second coordinate derivatives.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub g: DMatrix<f64>,
    /// `dg[k]` is ∂ₖg.
    pub dg: Vec<DMatrix<f64>>,
    /// `d2g[k * n + l]` is ∂ₖ∂ₗg.
    pub d2g: Vec<DMatrix<f64>>,
}

/// Christoffel symbols Γᵏᵢⱼ of the Levi-Civita connection, stored as
/// `data[(k * n + i) * n + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim * dim] }
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    /// Γ(u, w) with upper index free.
    pub fn contract(&self, u: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n];
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..n {
                if u[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    s += self.get(k, i, j) * u[i] * w[j];
                }
            }
            *o = s;
        }
        out
    }
}

/// Riemann tensor Rᵃ_bcd (convention R(X,Y) = ∇ₓ∇ᵧ − ∇ᵧ∇ₓ − ∇_[X,Y]),
/// Ricci tensor Ric_bd = Rᵃ_bad and scalar curvature.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    pub dim: usize,
    pub riemann: Vec<f64>,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
}

impl CurvatureData {
    #[inline]
    pub fn riemann(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let n = self.dim;
        self.riemann[((a * n + b) * n + c) * n + d]
    }

    /// R(x, y)z with the upper index free.
    pub fn apply(&self, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n];
        for (a, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        s += self.riemann(a, b, c, d) * z[b] * x[c] * y[d];
                    }
                }
            }
            *o = s;
        }
        out
    }

    pub fn flat(dim: usize) -> Self {
        Self { dim, riemann: vec![0.0; dim.pow(4)], ricci: DMatrix::zeros(dim, dim), scalar: 0.0 }
    }
}

/// Diagonal metric entries with first and second derivatives, for the
/// catalog kinds whose metric is diagonal and depends on at most the first
/// coordinate.
struct DiagJet {
    g: Vec<f64>,
    dg0: Vec<f64>,
    d2g00: Vec<f64>,
}

impl ManifoldDescriptor {
    fn diag_jet(&self, x: &[f64]) -> DiagJet {
        match *self {
            Self::Circle { radius: r } => DiagJet { g: vec![r * r], dg0: vec![0.0], d2g00: vec![0.0] },
            Self::Sphere { radius: r } => {
                let (s, c) = x[0].sin_cos();
                let r2 = r * r;
                DiagJet {
                    g: vec![r2, r2 * s * s],
                    dg0: vec![0.0, 2.0 * r2 * s * c],
                    d2g00: vec![0.0, 2.0 * r2 * (c * c - s * s)],
                }
            }
            Self::FlatTorus { r1, r2 } => {
                DiagJet { g: vec![r1 * r1, r2 * r2], dg0: vec![0.0; 2], d2g00: vec![0.0; 2] }
            }
            Self::TorusOfRevolution { major, minor } => {
                let (s, c) = x[0].sin_cos();
                let rho = major + minor * c;
                DiagJet {
                    g: vec![minor * minor, rho * rho],
                    dg0: vec![0.0, -2.0 * minor * s * rho],
                    d2g00: vec![0.0, -2.0 * minor * c * rho + 2.0 * minor * minor * s * s],
                }
            }
            Self::Product { .. } => unreachable!("product metrics are assembled blockwise"),
        }
    }

    pub fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        self.metric_jet(x).g
    }

    pub fn metric_jet(&self, x: &[f64]) -> MetricJet {
        let n = self.dim();
        let mut jet = MetricJet {
            g: DMatrix::zeros(n, n),
            dg: vec![DMatrix::zeros(n, n); n],
            d2g: vec![DMatrix::zeros(n, n); n * n],
        };
        for (f, c, _) in self.factor_layout() {
            let d = f.diag_jet(&x[c..c + f.dim()]);
            for i in 0..f.dim() {
                jet.g[(c + i, c + i)] = d.g[i];
                jet.dg[c][(c + i, c + i)] = d.dg0[i];
                jet.d2g[c * n + c][(c + i, c + i)] = d.d2g00[i];
            }
        }
        jet
    }

    /// √det g, the Riemannian density in chart coordinates.
    pub fn volume_density(&self, x: &[f64]) -> f64 {
        self.metric(x).determinant().max(0.0).sqrt()
    }

    pub fn christoffel(&self, x: &[f64]) -> Christoffel {
        christoffel_from_jet(&self.metric_jet(x))
    }

    /// Christoffel symbols and their derivatives ∂ₘΓᵏᵢⱼ stored as
    /// `[((m * n + k) * n + i) * n + j]`.
    pub fn christoffel_with_derivatives(&self, x: &[f64]) -> (Christoffel, Vec<f64>) {
        let jet = self.metric_jet(x);
        let n = self.dim();
        let gamma = christoffel_from_jet(&jet);
        let ginv = metric_inverse(&jet.g);
        let mut dgamma = vec![0.0; n.pow(4)];
        for m in 0..n {
            // ∂ₘ g⁻¹ = −g⁻¹ (∂ₘ g) g⁻¹
            let dginv = -(&ginv * &jet.dg[m] * &ginv);
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut s = 0.0;
                        for l in 0..n {
                            let lower = jet.dg[i][(l, j)] + jet.dg[j][(l, i)] - jet.dg[l][(i, j)];
                            let dlower = jet.d2g[m * n + i][(l, j)] + jet.d2g[m * n + j][(l, i)]
                                - jet.d2g[m * n + l][(i, j)];
                            s += 0.5 * (dginv[(k, l)] * lower + ginv[(k, l)] * dlower);
                        }
                        dgamma[((m * n + k) * n + i) * n + j] = s;
                    }
                }
            }
        }
        (gamma, dgamma)
    }

    pub fn curvature(&self, x: &[f64]) -> CurvatureData {
        let n = self.dim();
        let (gamma, dgamma) = self.christoffel_with_derivatives(x);
        let dg = |m: usize, k: usize, i: usize, j: usize| dgamma[((m * n + k) * n + i) * n + j];
        let mut riemann = vec![0.0; n.pow(4)];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let mut s = dg(c, a, d, b) - dg(d, a, c, b);
                        for e in 0..n {
                            s += gamma.get(a, c, e) * gamma.get(e, d, b) - gamma.get(a, d, e) * gamma.get(e, c, b);
                        }
                        riemann[((a * n + b) * n + c) * n + d] = s;
                    }
                }
            }
        }
        let mut ricci = DMatrix::zeros(n, n);
        for b in 0..n {
            for d in 0..n {
                ricci[(b, d)] = (0..n).map(|a| riemann[((a * n + b) * n + a) * n + d]).sum();
            }
        }
        let ginv = metric_inverse(&self.metric(x));
        let scalar = (0..n).flat_map(|b| (0..n).map(move |d| (b, d))).map(|(b, d)| ginv[(b, d)] * ricci[(b, d)]).sum();
        CurvatureData { dim: n, riemann, ricci, scalar }
    }
}

pub(crate) fn christoffel_from_jet(jet: &MetricJet) -> Christoffel {
    let n = jet.g.nrows();
    let ginv = metric_inverse(&jet.g);
    let mut out = Christoffel::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    if ginv[(k, l)] != 0.0 {
                        s += ginv[(k, l)] * (jet.dg[i][(l, j)] + jet.dg[j][(l, i)] - jet.dg[l][(i, j)]);
                    }
                }
                out.data[(k * n + i) * n + j] = 0.5 * s;
            }
        }
    }
    out
}

/// Inverse of a symmetric positive semidefinite matrix; singular directions
/// (the sphere chart at its poles) are dropped.
pub fn metric_inverse(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || g[(i, j)] == 0.0));
    if diagonal {
        let mut inv = DMatrix::zeros(n, n);
        for i in 0..n {
            let d = g[(i, i)];
            inv[(i, i)] = if d.abs() > 1e-300 { 1.0 / d } else { 0.0 };
        }
        return inv;
    }
    g.clone().try_inverse().unwrap_or_else(|| g.clone().pseudo_inverse(1e-14).unwrap_or(DMatrix::zeros(n, n)))
}
