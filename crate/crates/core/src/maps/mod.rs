//! Smooth maps between catalog manifolds, their covariant 2-jets, tension
//! fields, Ricci couplings and the pointwise curvature functional κ.

mod checks;
mod curvature;
mod jet;

pub use checks::{
    bochner_flat_domain, gaussian_moment_check, ibp_residual, maclaurin_eval, normal_coordinate_derivative,
    third_derivative_tensor, MomentCheck, MomentReport,
};
pub use curvature::{kappa_general, kappa_immersion, kappa_submersion, ricci_coupling, ricci_coupling_bochner, CurvatureReport};
pub use jet::{jet2, tension_gradient, MapJet2};

use crate::error::{Error, Result};
use crate::manifold::{ChartPoint, Christoffel, CurvatureData, DistanceAccuracy, DistanceResult, ManifoldDescriptor, MetricJet};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Target of a map: a catalog manifold or a Euclidean space.
#[derive(Clone, Debug, PartialEq)]
pub enum Codomain {
    Manifold(ManifoldDescriptor),
    Euclidean(usize),
}

/// A point of a codomain in its coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum CodomainPoint {
    Chart(ChartPoint),
    Euclidean(Vec<f64>),
}

impl CodomainPoint {
    pub fn coords(&self) -> &[f64] {
        match self {
            Self::Chart(p) => &p.coords,
            Self::Euclidean(v) => v,
        }
    }
}

impl Codomain {
    pub fn dim(&self) -> usize {
        match self {
            Self::Manifold(m) => m.dim(),
            Self::Euclidean(s) => *s,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Manifold(m) => m.name(),
            Self::Euclidean(s) => format!("R^{s}"),
        }
    }

    pub fn point(&self, coords: Vec<f64>) -> CodomainPoint {
        match self {
            Self::Manifold(m) => CodomainPoint::Chart(ChartPoint { manifold: m.clone(), coords }),
            Self::Euclidean(_) => CodomainPoint::Euclidean(coords),
        }
    }

    pub fn metric_jet(&self, y: &[f64]) -> MetricJet {
        match self {
            Self::Manifold(m) => m.metric_jet(y),
            Self::Euclidean(s) => MetricJet {
                g: DMatrix::identity(*s, *s),
                dg: vec![DMatrix::zeros(*s, *s); *s],
                d2g: vec![DMatrix::zeros(*s, *s); s * s],
            },
        }
    }

    pub fn metric(&self, y: &[f64]) -> DMatrix<f64> {
        match self {
            Self::Manifold(m) => m.metric(y),
            Self::Euclidean(s) => DMatrix::identity(*s, *s),
        }
    }

    pub fn christoffel(&self, y: &[f64]) -> Christoffel {
        match self {
            Self::Manifold(m) => m.christoffel(y),
            Self::Euclidean(s) => Christoffel::zeros(*s),
        }
    }

    pub fn christoffel_with_derivatives(&self, y: &[f64]) -> (Christoffel, Vec<f64>) {
        match self {
            Self::Manifold(m) => m.christoffel_with_derivatives(y),
            Self::Euclidean(s) => (Christoffel::zeros(*s), vec![0.0; s.pow(4)]),
        }
    }

    pub fn curvature(&self, y: &[f64]) -> CurvatureData {
        match self {
            Self::Manifold(m) => m.curvature(y),
            Self::Euclidean(s) => CurvatureData::flat(*s),
        }
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self {
            Self::Manifold(m) => m.injectivity_radius(),
            Self::Euclidean(_) => f64::INFINITY,
        }
    }

    pub fn exp_coords(&self, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Manifold(m) => m.exp_coords(y, w),
            Self::Euclidean(_) => Ok(y.iter().zip(w).map(|(a, b)| a + b).collect()),
        }
    }

    /// Logarithm in codomain chart components.
    pub fn log_coords(&self, y: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Manifold(m) => Ok(m.log_coords(y, z)?.components),
            Self::Euclidean(_) => Ok(z.iter().zip(y).map(|(a, b)| a - b).collect()),
        }
    }

    pub fn distance_coords(&self, y: &[f64], z: &[f64]) -> DistanceResult {
        match self {
            Self::Manifold(m) => m.distance_coords(y, z),
            Self::Euclidean(_) => DistanceResult {
                value: y.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
                accuracy: DistanceAccuracy::Exact,
            },
        }
    }

    pub fn normalize(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Self::Manifold(m) => m.normalize_coords(y).unwrap_or_else(|_| y.to_vec()),
            Self::Euclidean(_) => y.to_vec(),
        }
    }

    pub fn inner(&self, y: &[f64], a: &[f64], b: &[f64]) -> f64 {
        match self {
            Self::Euclidean(_) => a.iter().zip(b).map(|(p, q)| p * q).sum(),
            Self::Manifold(m) => {
                let h = m.metric(y);
                let n = a.len();
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += h[(i, j)] * a[i] * b[j];
                    }
                }
                s
            }
        }
    }
}

/// Catalog map kinds, as they appear in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapKind {
    Identity,
    /// The isometric embedding into the ambient Euclidean space.
    Inclusion,
    /// θ ↦ kθ on a circle.
    CirclePower { k: i32 },
    /// Projection of a flat torus onto one of its circle factors.
    TorusToCircle {
        #[serde(default)]
        factor: usize,
    },
    /// A circle of radius r onto the equator of the sphere of radius r.
    GreatCircleIntoSphere,
    /// Maps applied in order, each stage acting on the previous codomain.
    Composite { stages: Vec<MapKind> },
    /// θ ↦ c in a Euclidean space.
    Constant { value: Vec<f64> },
}

/// A concrete map with domain and codomain.
#[derive(Clone, Debug, PartialEq)]
pub struct MapDescriptor {
    pub kind: MapKind,
    pub domain: ManifoldDescriptor,
    pub codomain: Codomain,
    stages: Vec<MapDescriptor>,
}

impl MapDescriptor {
    pub fn new(domain: &ManifoldDescriptor, kind: MapKind) -> Result<Self> {
        domain.validate()?;
        let simple = |codomain: Codomain| Self { kind: kind.clone(), domain: domain.clone(), codomain, stages: vec![] };
        match (&kind, domain) {
            (MapKind::Identity, _) => Ok(simple(Codomain::Manifold(domain.clone()))),
            (MapKind::Inclusion, _) => Ok(simple(Codomain::Euclidean(domain.ambient_dim()))),
            (MapKind::CirclePower { k }, ManifoldDescriptor::Circle { .. }) => {
                if *k == 0 {
                    return Err(Error::InvalidDescriptor("circle power needs k ≠ 0".into()));
                }
                Ok(simple(Codomain::Manifold(domain.clone())))
            }
            (MapKind::TorusToCircle { factor }, ManifoldDescriptor::FlatTorus { r1, r2 }) => {
                let r = match factor {
                    0 => *r1,
                    1 => *r2,
                    _ => return Err(Error::InvalidDescriptor(format!("flat torus has factors 0 and 1, got {factor}"))),
                };
                Ok(simple(Codomain::Manifold(ManifoldDescriptor::Circle { radius: r })))
            }
            (MapKind::GreatCircleIntoSphere, ManifoldDescriptor::Circle { radius }) => {
                Ok(simple(Codomain::Manifold(ManifoldDescriptor::Sphere { radius: *radius })))
            }
            (MapKind::Constant { value }, _) => {
                if value.is_empty() || value.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidDescriptor("constant map needs a finite nonempty value".into()));
                }
                Ok(simple(Codomain::Euclidean(value.len())))
            }
            (MapKind::Composite { stages }, _) => {
                if stages.is_empty() {
                    return Err(Error::InvalidDescriptor("composite map needs at least one stage".into()));
                }
                let mut built = Vec::with_capacity(stages.len());
                let mut current = domain.clone();
                for (i, s) in stages.iter().enumerate() {
                    let m = Self::new(&current, s.clone())?;
                    if i + 1 < stages.len() {
                        current = match &m.codomain {
                            Codomain::Manifold(c) => c.clone(),
                            Codomain::Euclidean(_) => {
                                return Err(Error::InvalidDescriptor(
                                    "only the last stage of a composite may map into Euclidean space".into(),
                                ))
                            }
                        };
                    }
                    built.push(m);
                }
                let codomain = built.last().map(|m| m.codomain.clone()).unwrap_or(Codomain::Euclidean(0));
                Ok(Self { kind, domain: domain.clone(), codomain, stages: built })
            }
            (k, d) => Err(Error::InvalidDescriptor(format!("map {k:?} is not defined on {}", d.name()))),
        }
    }

    pub fn identity(domain: &ManifoldDescriptor) -> Result<Self> {
        Self::new(domain, MapKind::Identity)
    }

    pub fn inclusion(domain: &ManifoldDescriptor) -> Result<Self> {
        Self::new(domain, MapKind::Inclusion)
    }

    pub fn circle_power(domain: &ManifoldDescriptor, k: i32) -> Result<Self> {
        Self::new(domain, MapKind::CirclePower { k })
    }

    pub fn torus_to_circle(domain: &ManifoldDescriptor, factor: usize) -> Result<Self> {
        Self::new(domain, MapKind::TorusToCircle { factor })
    }

    pub fn great_circle_into_sphere(domain: &ManifoldDescriptor) -> Result<Self> {
        Self::new(domain, MapKind::GreatCircleIntoSphere)
    }

    pub fn constant(domain: &ManifoldDescriptor, value: Vec<f64>) -> Result<Self> {
        Self::new(domain, MapKind::Constant { value })
    }

    pub fn composite(domain: &ManifoldDescriptor, stages: Vec<MapKind>) -> Result<Self> {
        Self::new(domain, MapKind::Composite { stages })
    }

    pub fn name(&self) -> String {
        let k = match &self.kind {
            MapKind::Identity => "identity".to_string(),
            MapKind::Inclusion => "inclusion".to_string(),
            MapKind::CirclePower { k } => format!("circle-power({k})"),
            MapKind::TorusToCircle { factor } => format!("torus-to-circle({factor})"),
            MapKind::GreatCircleIntoSphere => "great-circle-into-sphere".to_string(),
            MapKind::Constant { value } => format!("constant{value:?}"),
            MapKind::Composite { .. } => {
                let names: Vec<String> = self.stages.iter().map(|s| s.name()).collect();
                return format!("composite[{}]", names.join(" -> "));
            }
        };
        format!("{k}: {} -> {}", self.domain.name(), self.codomain.name())
    }

    /// Value in codomain coordinates (normalised).
    pub fn eval_coords(&self, x: &[f64]) -> Vec<f64> {
        self.codomain.normalize(&self.coord_jet(x).value)
    }

    pub fn eval(&self, p: &ChartPoint) -> CodomainPoint {
        self.codomain.point(self.eval_coords(&p.coords))
    }

    /// Value, Jacobian and coordinate second derivatives (not yet
    /// covariant). The value may leave the canonical chart range.
    pub(crate) fn coord_jet(&self, x: &[f64]) -> CoordJet {
        let n = self.domain.dim();
        match &self.kind {
            MapKind::Identity => CoordJet {
                value: x.to_vec(),
                jacobian: DMatrix::identity(n, n),
                second: vec![DMatrix::zeros(n, n); n],
            },
            MapKind::Inclusion => {
                let s = self.domain.ambient_dim();
                let h = self.domain.embed_second_derivatives(x);
                let second = (0..s)
                    .map(|a| DMatrix::from_fn(n, n, |i, j| h[i * n + j][a]))
                    .collect();
                CoordJet { value: self.domain.embed_coords(x), jacobian: self.domain.embed_jacobian(x), second }
            }
            MapKind::CirclePower { k } => CoordJet {
                value: vec![*k as f64 * x[0]],
                jacobian: DMatrix::from_element(1, 1, *k as f64),
                second: vec![DMatrix::zeros(1, 1)],
            },
            MapKind::TorusToCircle { factor } => {
                let mut j = DMatrix::zeros(1, 2);
                j[(0, *factor)] = 1.0;
                CoordJet { value: vec![x[*factor]], jacobian: j, second: vec![DMatrix::zeros(2, 2)] }
            }
            MapKind::GreatCircleIntoSphere => CoordJet {
                value: vec![std::f64::consts::FRAC_PI_2, x[0]],
                jacobian: DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
                second: vec![DMatrix::zeros(1, 1); 2],
            },
            MapKind::Constant { value } => CoordJet {
                value: value.clone(),
                jacobian: DMatrix::zeros(value.len(), n),
                second: vec![DMatrix::zeros(n, n); value.len()],
            },
            MapKind::Composite { .. } => {
                let mut jet = self.stages[0].coord_jet(x);
                for stage in &self.stages[1..] {
                    let outer = stage.coord_jet(&jet.value);
                    let second = (0..outer.value.len())
                        .map(|a| {
                            let mut h = jet.jacobian.transpose() * &outer.second[a] * &jet.jacobian;
                            for b in 0..jet.value.len() {
                                h += &jet.second[b] * outer.jacobian[(a, b)];
                            }
                            h
                        })
                        .collect();
                    jet = CoordJet { value: outer.value, jacobian: &outer.jacobian * &jet.jacobian, second };
                }
                jet
            }
        }
    }
}

/// Coordinate 2-jet of a map at a point.
#[derive(Clone, Debug)]
pub(crate) struct CoordJet {
    pub value: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    /// `second[a]` holds ∂ᵢ∂ⱼγᵃ.
    pub second: Vec<DMatrix<f64>>,
}
