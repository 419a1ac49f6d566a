//! Isometric embeddings of the catalog manifolds, nearest-point projection
//! from a tubular neighbourhood, second fundamental form and the covariant
//! Hessian of the projection along the manifold.

use crate::error::{Error, Result};
use crate::manifold::{gram_schmidt, ChartPoint, ManifoldDescriptor};

/// A point of the ambient Euclidean space.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientPoint(pub Vec<f64>);

impl AmbientPoint {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// Result of projecting an ambient point onto the manifold: the foot point
/// and the normal offset `x − ι(foot)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TubePoint {
    pub base: ChartPoint,
    pub offset: Vec<f64>,
    pub distance: f64,
}

/// Orthonormal tangent and normal frames at a point, as ambient vectors.
#[derive(Clone, Debug)]
pub struct Frames {
    pub tangent: Vec<Vec<f64>>,
    pub normal: Vec<Vec<f64>>,
}

/// Second fundamental form in an orthonormal tangent frame.
#[derive(Clone, Debug)]
pub struct SecondFundamentalForm {
    pub frame: Vec<Vec<f64>>,
    /// `values[i * n + j]` is the normal vector B(tᵢ, tⱼ).
    pub values: Vec<Vec<f64>>,
    /// Mean-curvature (tension) vector, the trace of B.
    pub tension: Vec<f64>,
    /// |B|².
    pub norm_sq: f64,
}

impl SecondFundamentalForm {
    pub fn dim(&self) -> usize {
        self.frame.len()
    }

    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        &self.values[i * self.dim() + j]
    }

    pub fn tension_norm_sq(&self) -> f64 {
        dot(&self.tension, &self.tension)
    }
}

/// Covariant Hessian of the nearest-point projection at a point of the
/// manifold, a symmetric bilinear map from the ambient space to the tangent
/// space.
#[derive(Clone, Debug)]
pub struct NormalProjectionHessian {
    pub frames: Frames,
    pub sff: SecondFundamentalForm,
}

impl NormalProjectionHessian {
    /// ∇dπ(a, b) for ambient vectors a = x + y, b = u + v split into tangent
    /// and normal parts: B'ₓv + B'ᵤy, where ⟨B'ₓv, t⟩ = ⟨B(x, t), v⟩.
    pub fn apply(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let t = &self.frames.tangent;
        let n = t.len();
        let ca: Vec<f64> = t.iter().map(|ti| dot(ti, a)).collect();
        let cb: Vec<f64> = t.iter().map(|ti| dot(ti, b)).collect();
        let mut na = a.to_vec();
        let mut nb = b.to_vec();
        for (k, ti) in t.iter().enumerate() {
            for (s, tv) in ti.iter().enumerate() {
                na[s] -= ca[k] * tv;
                nb[s] -= cb[k] * tv;
            }
        }
        let mut out = vec![0.0; a.len()];
        for k in 0..n {
            let mut c = 0.0;
            for i in 0..n {
                let bik = self.sff.at(i, k);
                c += ca[i] * dot(bik, &nb) + cb[i] * dot(bik, &na);
            }
            for (o, tv) in out.iter_mut().zip(&t[k]) {
                *o += c * tv;
            }
        }
        out
    }

    /// Orthonormal ambient basis: tangent frame followed by normal frame.
    pub fn basis(&self) -> Vec<Vec<f64>> {
        self.frames.tangent.iter().chain(self.frames.normal.iter()).cloned().collect()
    }

    /// |∇dπ|² over the ambient space.
    pub fn norm_sq(&self) -> f64 {
        let basis = self.basis();
        let mut s = 0.0;
        for a in &basis {
            for b in &basis {
                let h = self.apply(a, b);
                s += dot(&h, &h);
            }
        }
        s
    }

    /// Tension of the projection, the ambient trace of ∇dπ.
    pub fn trace(&self) -> Vec<f64> {
        let basis = self.basis();
        let mut out = vec![0.0; basis[0].len()];
        for a in &basis {
            for (o, h) in out.iter_mut().zip(self.apply(a, a)) {
                *o += h;
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ManifoldDescriptor {
    pub fn embed(&self, p: &ChartPoint) -> AmbientPoint {
        AmbientPoint(self.embed_coords(&p.coords))
    }

    /// Radius of the tubular neighbourhood on which the nearest-point
    /// projection is smooth and unique.
    pub fn reach(&self) -> f64 {
        match *self {
            Self::Circle { radius } | Self::Sphere { radius } => radius,
            Self::FlatTorus { r1, r2 } => r1.min(r2),
            Self::TorusOfRevolution { major, minor } => minor.min(major - minor),
            Self::Product { ref factors } => factors.iter().map(|f| f.reach()).fold(f64::INFINITY, f64::min),
        }
    }

    /// Nearest-point projection, returning the foot point coordinates and
    /// the distance. Fails only at points with no unique foot point.
    fn project_raw(&self, x: &[f64]) -> Option<(Vec<f64>, f64)> {
        match *self {
            Self::Circle { radius } => {
                let rho = x[0].hypot(x[1]);
                (rho > 0.0).then(|| (self.coords_from_ambient(x), (rho - radius).abs()))
            }
            Self::Sphere { radius } => {
                let rho = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                (rho > 0.0).then(|| (self.coords_from_ambient(x), (rho - radius).abs()))
            }
            Self::FlatTorus { r1, r2 } => {
                let a = x[0].hypot(x[1]);
                let b = x[2].hypot(x[3]);
                (a > 0.0 && b > 0.0).then(|| (self.coords_from_ambient(x), (a - r1).hypot(b - r2)))
            }
            Self::TorusOfRevolution { major, minor } => {
                let rho = x[0].hypot(x[1]);
                let tube = (rho - major).hypot(x[2]);
                (rho > 0.0 && tube > 0.0).then(|| (self.coords_from_ambient(x), (tube - minor).abs()))
            }
            Self::Product { .. } => {
                let mut coords = Vec::with_capacity(self.dim());
                let mut d2 = 0.0;
                for (f, _, a) in self.factor_layout() {
                    let (c, d) = f.project_raw(&x[a..a + f.ambient_dim()])?;
                    coords.extend(c);
                    d2 += d * d;
                }
                Some((coords, d2.sqrt()))
            }
        }
    }

    /// Distance from an ambient point to the embedded manifold, where the
    /// nearest point is unique.
    pub fn distance_to_manifold(&self, x: &[f64]) -> Option<f64> {
        self.project_raw(x).map(|(_, d)| d)
    }

    pub fn project(&self, x: &AmbientPoint) -> Result<TubePoint> {
        if x.0.len() != self.ambient_dim() {
            return Err(Error::InvalidArgument(format!(
                "ambient point needs {} coordinates, got {}",
                self.ambient_dim(),
                x.0.len()
            )));
        }
        let reach = self.reach();
        let (coords, distance) =
            self.project_raw(&x.0).ok_or(Error::OutsideTube { distance: reach, reach })?;
        if !(distance < reach) {
            return Err(Error::OutsideTube { distance, reach });
        }
        let foot = self.embed_coords(&coords);
        let offset = x.0.iter().zip(&foot).map(|(a, b)| a - b).collect();
        Ok(TubePoint { base: ChartPoint { manifold: self.clone(), coords }, offset, distance })
    }

    /// Outward unit normals, one per codimension.
    pub fn normal_frame_ambient(&self, x: &[f64]) -> Vec<Vec<f64>> {
        match *self {
            Self::Circle { .. } => vec![vec![x[0].cos(), x[0].sin()]],
            Self::Sphere { radius } => vec![self.embed_coords(x).into_iter().map(|c| c / radius).collect()],
            Self::FlatTorus { .. } => {
                vec![vec![x[0].cos(), x[0].sin(), 0.0, 0.0], vec![0.0, 0.0, x[1].cos(), x[1].sin()]]
            }
            Self::TorusOfRevolution { .. } => {
                let (su, cu) = x[0].sin_cos();
                let (sv, cv) = x[1].sin_cos();
                vec![vec![cu * cv, cu * sv, su]]
            }
            Self::Product { .. } => {
                let s = self.ambient_dim();
                let mut out = Vec::new();
                for (f, c, a) in self.factor_layout() {
                    for nv in f.normal_frame_ambient(&x[c..c + f.dim()]) {
                        let mut v = vec![0.0; s];
                        v[a..a + f.ambient_dim()].copy_from_slice(&nv);
                        out.push(v);
                    }
                }
                out
            }
        }
    }

    pub fn tangent_normal_frames(&self, p: &ChartPoint) -> Frames {
        Frames { tangent: self.tangent_frame_ambient(&p.coords), normal: self.normal_frame_ambient(&p.coords) }
    }

    /// Normal frame obtained numerically by completing the tangent frame;
    /// used to cross-check the closed forms.
    pub fn normal_frame_completion(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let s = self.ambient_dim();
        let tangent = self.tangent_frame_ambient(x);
        let mut vs = tangent.clone();
        for k in 0..s {
            let mut e = vec![0.0; s];
            e[k] = 1.0;
            vs.push(e);
        }
        gram_schmidt(vs).into_iter().skip(tangent.len()).collect()
    }

    /// Normal component of an ambient vector.
    pub fn normal_part(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let t = self.tangent_projection(x, a);
        a.iter().zip(&t).map(|(p, q)| p - q).collect()
    }

    pub fn second_fundamental_form_coords(&self, x: &[f64]) -> SecondFundamentalForm {
        let n = self.dim();
        let frame = self.tangent_frame_ambient(x);
        let hess = self.embed_second_derivatives(x);
        // Chart components of each frame vector.
        let comps: Vec<Vec<f64>> = frame.iter().map(|t| self.ambient_to_components(x, t)).collect();
        let normal_parts: Vec<Vec<f64>> = hess.iter().map(|h| self.normal_part(x, h)).collect();
        let s = self.ambient_dim();
        let mut values = vec![vec![0.0; s]; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = &mut values[i * n + j];
                for a in 0..n {
                    for b in 0..n {
                        let c = comps[i][a] * comps[j][b];
                        if c != 0.0 {
                            for (vk, hk) in v.iter_mut().zip(&normal_parts[a * n + b]) {
                                *vk += c * hk;
                            }
                        }
                    }
                }
            }
        }
        let mut tension = vec![0.0; s];
        let mut norm_sq = 0.0;
        for i in 0..n {
            for (t, b) in tension.iter_mut().zip(&values[i * n + i]) {
                *t += b;
            }
            for j in 0..n {
                norm_sq += dot(&values[i * n + j], &values[i * n + j]);
            }
        }
        SecondFundamentalForm { frame, values, tension, norm_sq }
    }

    pub fn second_fundamental_form(&self, p: &ChartPoint) -> SecondFundamentalForm {
        self.second_fundamental_form_coords(&p.coords)
    }

    pub fn normal_projection_hessian_coords(&self, x: &[f64]) -> NormalProjectionHessian {
        NormalProjectionHessian {
            frames: Frames { tangent: self.tangent_frame_ambient(x), normal: self.normal_frame_ambient(x) },
            sff: self.second_fundamental_form_coords(x),
        }
    }

    pub fn normal_projection_hessian(&self, p: &ChartPoint) -> NormalProjectionHessian {
        self.normal_projection_hessian_coords(&p.coords)
    }

    /// Intrinsic scalar curvature next to the Gauss-equation value
    /// |τ|² − |B|², which agree for every isometric embedding.
    pub fn scal_check(&self, p: &ChartPoint) -> (f64, f64) {
        let b = self.second_fundamental_form(p);
        (self.curvature(&p.coords).scalar, b.tension_norm_sq() - b.norm_sq)
    }
}
