//! Catalog manifolds with explicit charts, metrics, curvature, geodesics and
//! quadrature grids.
//!
//! Coordinates follow one convention per kind:
//!
//! | kind | coordinates | metric |
//! |---|---|---|
//! | circle(r) | angle θ ∈ [0, 2π) | r² |
//! | sphere(r) | colatitude u ∈ [0, π], longitude v ∈ [0, 2π) | r² diag(1, sin²u) |
//! | flat-torus(r₁, r₂) | two angles | diag(r₁², r₂²) |
//! | torus-of-revolution(R, r) | tube angle u, revolution angle v | diag(r², (R + r cos u)²) |
//! | product | concatenated factor coordinates | block diagonal |
//!
//! The flat torus is embedded in R⁴ as a product of two round circles.

mod geodesic;
mod grid;
mod metric;

pub use geodesic::{DistanceAccuracy, DistanceResult};
pub use grid::{gauss_legendre, AxisKind, GridAxis, QuadratureGrid};
pub use metric::{metric_inverse, Christoffel, CurvatureData, MetricJet};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// A manifold from the catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ManifoldDescriptor {
    Circle { radius: f64 },
    Sphere { radius: f64 },
    FlatTorus { r1: f64, r2: f64 },
    TorusOfRevolution { major: f64, minor: f64 },
    Product { factors: Vec<ManifoldDescriptor> },
}

fn check_radius(name: &str, r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDescriptor(format!("{name} must be positive and finite, got {r}")))
    }
}

impl ManifoldDescriptor {
    pub fn circle(radius: f64) -> Result<Self> {
        let m = Self::Circle { radius };
        m.validate()?;
        Ok(m)
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        let m = Self::Sphere { radius };
        m.validate()?;
        Ok(m)
    }

    pub fn flat_torus(r1: f64, r2: f64) -> Result<Self> {
        let m = Self::FlatTorus { r1, r2 };
        m.validate()?;
        Ok(m)
    }

    pub fn torus_of_revolution(major: f64, minor: f64) -> Result<Self> {
        let m = Self::TorusOfRevolution { major, minor };
        m.validate()?;
        Ok(m)
    }

    pub fn product(factors: Vec<ManifoldDescriptor>) -> Result<Self> {
        let m = Self::Product { factors };
        m.validate()?;
        Ok(m)
    }

    /// Checks parameters; descriptors read from configuration files should be
    /// validated before use.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Circle { radius } | Self::Sphere { radius } => check_radius("radius", *radius),
            Self::FlatTorus { r1, r2 } => {
                check_radius("r1", *r1)?;
                check_radius("r2", *r2)
            }
            Self::TorusOfRevolution { major, minor } => {
                check_radius("major radius", *major)?;
                check_radius("minor radius", *minor)?;
                if minor >= major {
                    return Err(Error::InvalidDescriptor(format!(
                        "torus of revolution needs minor < major, got {minor} >= {major}"
                    )));
                }
                Ok(())
            }
            Self::Product { factors } => {
                if factors.len() < 2 {
                    return Err(Error::InvalidDescriptor("product needs at least two factors".into()));
                }
                factors.iter().try_for_each(|f| f.validate())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Circle { .. } => 1,
            Self::Sphere { .. } | Self::FlatTorus { .. } | Self::TorusOfRevolution { .. } => 2,
            Self::Product { factors } => factors.iter().map(|f| f.dim()).sum(),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Self::Circle { .. } => 2,
            Self::Sphere { .. } | Self::TorusOfRevolution { .. } => 3,
            Self::FlatTorus { .. } => 4,
            Self::Product { factors } => factors.iter().map(|f| f.ambient_dim()).sum(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Circle { radius } => format!("circle({radius})"),
            Self::Sphere { radius } => format!("sphere({radius})"),
            Self::FlatTorus { r1, r2 } => format!("flat-torus({r1}, {r2})"),
            Self::TorusOfRevolution { major, minor } => format!("torus-of-revolution({major}, {minor})"),
            Self::Product { factors } => {
                let names: Vec<String> = factors.iter().map(|f| f.name()).collect();
                format!("product[{}]", names.join(" x "))
            }
        }
    }

    /// Which chart coordinates are angles of period 2π.
    pub fn periodic_coordinates(&self) -> Vec<bool> {
        match self {
            Self::Circle { .. } => vec![true],
            Self::Sphere { .. } => vec![false, true],
            Self::FlatTorus { .. } | Self::TorusOfRevolution { .. } => vec![true, true],
            Self::Product { factors } => factors.iter().flat_map(|f| f.periodic_coordinates()).collect(),
        }
    }

    /// Conservative lower bound on the injectivity radius.
    pub fn injectivity_radius(&self) -> f64 {
        match self {
            Self::Circle { radius } | Self::Sphere { radius } => PI * radius,
            Self::FlatTorus { r1, r2 } => PI * r1.min(*r2),
            Self::TorusOfRevolution { major, minor } => (PI * minor).min(*major - *minor),
            Self::Product { factors } => factors
                .iter()
                .map(|f| f.injectivity_radius())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Points closer than this to a cut locus are rejected by `log_map`.
    pub fn cut_locus_margin(&self) -> f64 {
        1e-3 * self.injectivity_radius()
    }

    /// Factor descriptors with their coordinate and ambient offsets.
    pub(crate) fn factor_layout(&self) -> Vec<(&ManifoldDescriptor, usize, usize)> {
        match self {
            Self::Product { factors } => {
                let mut out = Vec::with_capacity(factors.len());
                let (mut c, mut a) = (0, 0);
                for f in factors {
                    out.push((f, c, a));
                    c += f.dim();
                    a += f.ambient_dim();
                }
                out
            }
            _ => vec![(self, 0, 0)],
        }
    }

    /// Brings coordinates into the canonical chart domain.
    pub fn normalize_coords(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::OutsideChart(format!("expected {} coordinates, got {}", self.dim(), x.len())));
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::OutsideChart(format!("non-finite coordinates {x:?}")));
        }
        Ok(match self {
            Self::Sphere { .. } => {
                let p = self.embed_coords(x);
                self.coords_from_ambient(&p)
            }
            Self::Product { .. } => {
                let mut out = Vec::with_capacity(x.len());
                for (f, c, _) in self.factor_layout() {
                    out.extend(f.normalize_coords(&x[c..c + f.dim()])?);
                }
                out
            }
            _ => x.iter().map(|&c| wrap_angle(c)).collect(),
        })
    }

    /// Isometric embedding in chart coordinates.
    pub fn embed_coords(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            Self::Circle { radius: r } => vec![r * x[0].cos(), r * x[0].sin()],
            Self::Sphere { radius: r } => {
                let (su, cu) = x[0].sin_cos();
                let (sv, cv) = x[1].sin_cos();
                vec![r * su * cv, r * su * sv, r * cu]
            }
            Self::FlatTorus { r1, r2 } => {
                vec![r1 * x[0].cos(), r1 * x[0].sin(), r2 * x[1].cos(), r2 * x[1].sin()]
            }
            Self::TorusOfRevolution { major, minor } => {
                let (su, cu) = x[0].sin_cos();
                let (sv, cv) = x[1].sin_cos();
                let rho = major + minor * cu;
                vec![rho * cv, rho * sv, minor * su]
            }
            Self::Product { .. } => {
                let mut out = Vec::with_capacity(self.ambient_dim());
                for (f, c, _) in self.factor_layout() {
                    out.extend(f.embed_coords(&x[c..c + f.dim()]));
                }
                out
            }
        }
    }

    /// Chart coordinates of a point lying on the embedded manifold, up to
    /// rounding. Off the manifold this is the chart value of the radial
    /// projection and is only meaningful near the image.
    pub(crate) fn coords_from_ambient(&self, p: &[f64]) -> Vec<f64> {
        match *self {
            Self::Circle { .. } => vec![wrap_angle(p[1].atan2(p[0]))],
            Self::Sphere { .. } => {
                let rho = p[0].hypot(p[1]);
                let u = rho.atan2(p[2]);
                let v = if rho == 0.0 { 0.0 } else { wrap_angle(p[1].atan2(p[0])) };
                vec![u, v]
            }
            Self::FlatTorus { .. } => {
                vec![wrap_angle(p[1].atan2(p[0])), wrap_angle(p[3].atan2(p[2]))]
            }
            Self::TorusOfRevolution { major, .. } => {
                let v = p[1].atan2(p[0]);
                let rho = p[0].hypot(p[1]);
                let u = p[2].atan2(rho - major);
                vec![wrap_angle(u), wrap_angle(v)]
            }
            Self::Product { .. } => {
                let mut out = Vec::with_capacity(self.dim());
                for (f, _, a) in self.factor_layout() {
                    out.extend(f.coords_from_ambient(&p[a..a + f.ambient_dim()]));
                }
                out
            }
        }
    }

    /// Jacobian of the embedding, ambient_dim × dim.
    pub fn embed_jacobian(&self, x: &[f64]) -> nalgebra::DMatrix<f64> {
        let mut j = nalgebra::DMatrix::zeros(self.ambient_dim(), self.dim());
        match *self {
            Self::Circle { radius: r } => {
                j[(0, 0)] = -r * x[0].sin();
                j[(1, 0)] = r * x[0].cos();
            }
            Self::Sphere { radius: r } => {
                let (su, cu) = x[0].sin_cos();
                let (sv, cv) = x[1].sin_cos();
                j[(0, 0)] = r * cu * cv;
                j[(1, 0)] = r * cu * sv;
                j[(2, 0)] = -r * su;
                j[(0, 1)] = -r * su * sv;
                j[(1, 1)] = r * su * cv;
            }
            Self::FlatTorus { r1, r2 } => {
                j[(0, 0)] = -r1 * x[0].sin();
                j[(1, 0)] = r1 * x[0].cos();
                j[(2, 1)] = -r2 * x[1].sin();
                j[(3, 1)] = r2 * x[1].cos();
            }
            Self::TorusOfRevolution { major, minor } => {
                let (su, cu) = x[0].sin_cos();
                let (sv, cv) = x[1].sin_cos();
                let rho = major + minor * cu;
                j[(0, 0)] = -minor * su * cv;
                j[(1, 0)] = -minor * su * sv;
                j[(2, 0)] = minor * cu;
                j[(0, 1)] = -rho * sv;
                j[(1, 1)] = rho * cv;
            }
            Self::Product { .. } => {
                for (f, c, a) in self.factor_layout() {
                    let jf = f.embed_jacobian(&x[c..c + f.dim()]);
                    j.view_mut((a, c), (f.ambient_dim(), f.dim())).copy_from(&jf);
                }
            }
        }
        j
    }

    /// Second partial derivatives of the embedding: entry `[i * dim + j]` is
    /// the ambient vector ∂ᵢ∂ⱼι.
    pub fn embed_second_derivatives(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = self.dim();
        let s = self.ambient_dim();
        let mut h = vec![vec![0.0; s]; n * n];
        match *self {
            Self::Circle { radius: r } => {
                h[0] = vec![-r * x[0].cos(), -r * x[0].sin()];
            }
            Self::Sphere { radius: r } => {
                let (su, cu) = x[0].sin_cos();
                let (sv, cv) = x[1].sin_cos();
                h[0] = vec![-r * su * cv, -r * su * sv, -r * cu];
                h[1] = vec![-r * cu * sv, r * cu * cv, 0.0];
                h[2] = h[1].clone();
                h[3] = vec![-r * su * cv, -r * su * sv, 0.0];
            }
            Self::FlatTorus { r1, r2 } => {
                h[0] = vec![-r1 * x[0].cos(), -r1 * x[0].sin(), 0.0, 0.0];
                h[3] = vec![0.0, 0.0, -r2 * x[1].cos(), -r2 * x[1].sin()];
            }
            Self::TorusOfRevolution { major, minor } => {
                let (su, cu) = x[0].sin_cos();
                let (sv, cv) = x[1].sin_cos();
                let rho = major + minor * cu;
                h[0] = vec![-minor * cu * cv, -minor * cu * sv, -minor * su];
                h[1] = vec![minor * su * sv, -minor * su * cv, 0.0];
                h[2] = h[1].clone();
                h[3] = vec![-rho * cv, -rho * sv, 0.0];
            }
            Self::Product { .. } => {
                for (f, c, a) in self.factor_layout() {
                    let nf = f.dim();
                    let hf = f.embed_second_derivatives(&x[c..c + nf]);
                    for i in 0..nf {
                        for j in 0..nf {
                            h[(c + i) * n + c + j][a..a + f.ambient_dim()].copy_from_slice(&hf[i * nf + j]);
                        }
                    }
                }
            }
        }
        h
    }

    /// Uniform-volume sample, used for importance sampling and rejection.
    pub fn sample_uniform<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match *self {
            Self::Circle { .. } => vec![rng.random::<f64>() * TAU],
            Self::FlatTorus { .. } => vec![rng.random::<f64>() * TAU, rng.random::<f64>() * TAU],
            Self::Sphere { .. } => {
                let z: f64 = 1.0 - 2.0 * rng.random::<f64>();
                vec![z.clamp(-1.0, 1.0).acos(), rng.random::<f64>() * TAU]
            }
            Self::TorusOfRevolution { major, minor } => loop {
                let u = rng.random::<f64>() * TAU;
                let v = rng.random::<f64>() * TAU;
                if rng.random::<f64>() * (major + minor) <= major + minor * u.cos() {
                    break vec![u, v];
                }
            },
            Self::Product { ref factors } => factors.iter().flat_map(|f| f.sample_uniform(rng)).collect(),
        }
    }

    /// Riemannian volume.
    pub fn volume(&self) -> f64 {
        match *self {
            Self::Circle { radius } => TAU * radius,
            Self::Sphere { radius } => 4.0 * PI * radius * radius,
            Self::FlatTorus { r1, r2 } => TAU * TAU * r1 * r2,
            Self::TorusOfRevolution { major, minor } => TAU * TAU * major * minor,
            Self::Product { ref factors } => factors.iter().map(|f| f.volume()).product(),
        }
    }
}

/// Wraps an angle into [0, 2π).
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle difference into (-π, π].
pub fn wrap_difference(d: f64) -> f64 {
    let w = (d + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// A point of a catalog manifold in its canonical chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint {
    pub manifold: ManifoldDescriptor,
    pub coords: Vec<f64>,
}

impl ChartPoint {
    /// Validates and normalises the coordinates.
    pub fn new(manifold: &ManifoldDescriptor, coords: &[f64]) -> Result<Self> {
        if let ManifoldDescriptor::Sphere { .. } = manifold {
            if coords.len() == 2 && !(0.0..=PI).contains(&coords[0]) {
                return Err(Error::OutsideChart(format!("colatitude {} outside [0, π]", coords[0])));
            }
        }
        Ok(Self { manifold: manifold.clone(), coords: manifold.normalize_coords(coords)? })
    }

    pub fn embed(&self) -> Vec<f64> {
        self.manifold.embed_coords(&self.coords)
    }
}

/// A tangent vector in chart components. On the sphere the chart degenerates
/// at the poles, so an ambient representative may be carried alongside and
/// takes precedence there.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub components: Vec<f64>,
    pub ambient: Option<Vec<f64>>,
}

impl TangentVector {
    pub fn new(base: &ChartPoint, components: &[f64]) -> Result<Self> {
        if components.len() != base.manifold.dim() {
            return Err(Error::InvalidArgument(format!(
                "tangent vector needs {} components, got {}",
                base.manifold.dim(),
                components.len()
            )));
        }
        Ok(Self { base: base.clone(), components: components.to_vec(), ambient: None })
    }

    /// Builds a tangent vector from an ambient vector, projecting onto the
    /// tangent space.
    pub fn from_ambient(base: &ChartPoint, ambient: &[f64]) -> Result<Self> {
        let m = &base.manifold;
        if ambient.len() != m.ambient_dim() {
            return Err(Error::InvalidArgument("ambient vector has wrong dimension".into()));
        }
        let components = m.ambient_to_components(&base.coords, ambient);
        let amb = m.tangent_projection(&base.coords, ambient);
        Ok(Self { base: base.clone(), components, ambient: Some(amb) })
    }

    /// Riemannian norm; uses the ambient representative when present.
    pub fn norm(&self) -> f64 {
        match &self.ambient {
            Some(a) => a.iter().map(|c| c * c).sum::<f64>().sqrt(),
            None => self.base.manifold.norm_at(&self.base.coords, &self.components),
        }
    }

    /// Ambient image under the differential of the embedding.
    pub fn to_ambient(&self) -> Vec<f64> {
        match &self.ambient {
            Some(a) => a.clone(),
            None => {
                let j = self.base.manifold.embed_jacobian(&self.base.coords);
                let v = nalgebra::DVector::from_column_slice(&self.components);
                (j * v).as_slice().to_vec()
            }
        }
    }
}

impl ManifoldDescriptor {
    /// Riemannian norm of chart components at `x`.
    pub fn norm_at(&self, x: &[f64], v: &[f64]) -> f64 {
        let g = self.metric(x);
        let v = nalgebra::DVector::from_column_slice(v);
        (v.transpose() * &g * &v)[(0, 0)].max(0.0).sqrt()
    }

    /// Least-squares chart components of an ambient vector; uses a
    /// pseudo-inverse so the degenerate sphere chart at the poles is handled.
    pub fn ambient_to_components(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let j = self.embed_jacobian(x);
        let jt_a = j.transpose() * nalgebra::DVector::from_column_slice(a);
        let g = j.transpose() * &j;
        let n = self.dim();
        let mut out = vec![0.0; n];
        let eig = nalgebra::SymmetricEigen::new(g);
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
        for k in 0..n {
            let ev = eig.eigenvalues[k];
            if ev > 1e-24 * scale.max(1e-300) && ev > 1e-28 {
                let col = eig.eigenvectors.column(k);
                let coef = col.dot(&jt_a) / ev;
                for i in 0..n {
                    out[i] += coef * col[i];
                }
            }
        }
        out
    }

    /// Orthogonal projection of an ambient vector onto the tangent space.
    pub fn tangent_projection(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let frame = self.tangent_frame_ambient(x);
        let mut out = vec![0.0; a.len()];
        for t in &frame {
            let c: f64 = t.iter().zip(a).map(|(p, q)| p * q).sum();
            for (o, ti) in out.iter_mut().zip(t) {
                *o += c * ti;
            }
        }
        out
    }

    /// Orthonormal tangent frame as ambient vectors. At sphere poles the
    /// frame is completed from the limiting directions.
    pub fn tangent_frame_ambient(&self, x: &[f64]) -> Vec<Vec<f64>> {
        match *self {
            Self::Sphere { .. } => {
                let (su, cu) = x[0].sin_cos();
                let (sv, cv) = x[1].sin_cos();
                vec![vec![cu * cv, cu * sv, -su], vec![-sv, cv, 0.0]]
            }
            Self::Product { .. } => {
                let s = self.ambient_dim();
                let mut out = Vec::new();
                for (f, c, a) in self.factor_layout() {
                    for t in f.tangent_frame_ambient(&x[c..c + f.dim()]) {
                        let mut v = vec![0.0; s];
                        v[a..a + f.ambient_dim()].copy_from_slice(&t);
                        out.push(v);
                    }
                }
                out
            }
            _ => {
                let j = self.embed_jacobian(x);
                gram_schmidt((0..self.dim()).map(|k| j.column(k).iter().copied().collect()).collect())
            }
        }
    }
}

/// Modified Gram–Schmidt; drops vectors that become numerically dependent.
pub(crate) fn gram_schmidt(vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for mut v in vs {
        let n0: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        for _ in 0..2 {
            for q in &out {
                let c: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let n: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-10 * n0.max(1e-300) && n > 0.0 {
            v.iter_mut().for_each(|c| *c /= n);
            out.push(v);
        }
    }
    out
}
