use super::{wrap_angle, wrap_difference, ChartPoint, ManifoldDescriptor, TangentVector};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Number of RK4 steps used for numerically integrated geodesics.
pub(crate) const GEODESIC_STEPS: usize = 128;
const SHOOTING_MAX_ITER: usize = 50;
const SHOOTING_TOL: f64 = 1e-11;
const GRAPH_RESOLUTION: usize = 96;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceAccuracy {
    /// Closed form, rounding error only.
    Exact,
    /// Converged geodesic shooting.
    Shooting,
    /// Shortest path on a discrete graph; error of order the graph spacing.
    GraphApproximation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceResult {
    pub value: f64,
    pub accuracy: DistanceAccuracy,
}

/// Output of the logarithm in chart components, with an ambient
/// representative where the chart degenerates.
#[derive(Clone, Debug)]
pub(crate) struct LogCoords {
    pub components: Vec<f64>,
    pub ambient: Option<Vec<f64>>,
    pub length: f64,
    pub accuracy: DistanceAccuracy,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ManifoldDescriptor {
    /// Exponential map on coordinates; the result is normalised.
    pub fn exp_coords(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match *self {
            Self::Circle { .. } | Self::FlatTorus { .. } => {
                Ok(x.iter().zip(v).map(|(a, b)| wrap_angle(a + b)).collect())
            }
            Self::Sphere { .. } => {
                let j = self.embed_jacobian(x);
                let a = (j * DVector::from_column_slice(v)).as_slice().to_vec();
                Ok(self.sphere_exp_ambient(x, &a))
            }
            Self::TorusOfRevolution { .. } => {
                let (y, _) = self.integrate_geodesic(x, v)?;
                Ok(y.iter().map(|&c| wrap_angle(c)).collect())
            }
            Self::Product { .. } => {
                let mut out = Vec::with_capacity(x.len());
                for (f, c, _) in self.factor_layout() {
                    let r = c..c + f.dim();
                    out.extend(f.exp_coords(&x[r.clone()], &v[r])?);
                }
                Ok(out)
            }
        }
    }

    /// Great-circle exponential from an ambient tangent vector at `x`.
    fn sphere_exp_ambient(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let r = match *self {
            Self::Sphere { radius } => radius,
            _ => unreachable!(),
        };
        let p = self.embed_coords(x);
        let len = norm(a);
        if len == 0.0 {
            return self.coords_from_ambient(&p);
        }
        let ang = len / r;
        let (s, c) = ang.sin_cos();
        let q: Vec<f64> = p.iter().zip(a).map(|(pi, ai)| c * pi + s * r * ai / len).collect();
        self.coords_from_ambient(&q)
    }

    /// Exponential of a tangent vector, honouring its ambient representative.
    pub fn exp_map(&self, v: &TangentVector) -> Result<ChartPoint> {
        let coords = match (&v.ambient, self) {
            (Some(a), Self::Sphere { .. }) => self.sphere_exp_ambient(&v.base.coords, a),
            (Some(a), Self::Product { .. }) => {
                let mut out = Vec::new();
                for (f, c, off) in self.factor_layout() {
                    let x = &v.base.coords[c..c + f.dim()];
                    let af = &a[off..off + f.ambient_dim()];
                    match f {
                        Self::Sphere { .. } => out.extend(f.sphere_exp_ambient(x, af)),
                        _ => out.extend(f.exp_coords(x, &f.ambient_to_components(x, af))?),
                    }
                }
                out
            }
            _ => self.exp_coords(&v.base.coords, &v.components)?,
        };
        Ok(ChartPoint { manifold: self.clone(), coords })
    }

    /// Geodesic acceleration −Γ(ẋ, ẋ).
    pub(crate) fn geodesic_rhs(&self, x: &[f64], xd: &[f64]) -> Vec<f64> {
        match *self {
            // Γᵘᵥᵥ = ρ sin u / r and Γᵛᵤᵥ = −r sin u / ρ with ρ = R + r cos u.
            Self::TorusOfRevolution { major, minor } => {
                let (su, cu) = x[0].sin_cos();
                let rho = major + minor * cu;
                vec![-rho * su / minor * xd[1] * xd[1], 2.0 * minor * su / rho * xd[0] * xd[1]]
            }
            _ => self.christoffel(x).contract(xd, xd).into_iter().map(|a| -a).collect(),
        }
    }

    /// Geodesic acceleration from the general Christoffel assembly.
    #[cfg(test)]
    fn geodesic_rhs_generic(&self, x: &[f64], xd: &[f64]) -> Vec<f64> {
        self.christoffel(x).contract(xd, xd).into_iter().map(|a| -a).collect()
    }

    /// Fixed-step RK4 integration of the geodesic equation over t ∈ [0, 1].
    /// Coordinates are returned unwrapped together with the final velocity.
    pub(crate) fn integrate_geodesic(&self, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = x.len();
        let h = 1.0 / GEODESIC_STEPS as f64;
        let mut pos = x.to_vec();
        let mut vel = v.to_vec();
        let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
        for _ in 0..GEODESIC_STEPS {
            let k1x = vel.clone();
            let k1v = self.geodesic_rhs(&pos, &vel);
            let p2 = axpy(&pos, 0.5 * h, &k1x);
            let v2 = axpy(&vel, 0.5 * h, &k1v);
            let k2v = self.geodesic_rhs(&p2, &v2);
            let p3 = axpy(&pos, 0.5 * h, &v2);
            let v3 = axpy(&vel, 0.5 * h, &k2v);
            let k3v = self.geodesic_rhs(&p3, &v3);
            let p4 = axpy(&pos, h, &v3);
            let v4 = axpy(&vel, h, &k3v);
            let k4v = self.geodesic_rhs(&p4, &v4);
            for i in 0..n {
                pos[i] += h / 6.0 * (k1x[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
                vel[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
            }
            if pos.iter().chain(vel.iter()).any(|c| !c.is_finite()) {
                return Err(Error::OdeFailure);
            }
        }
        Ok((pos, vel))
    }

    /// Logarithm on coordinates with cut-locus checking.
    pub(crate) fn log_coords(&self, x: &[f64], y: &[f64]) -> Result<LogCoords> {
        let margin = self.cut_locus_margin();
        match *self {
            Self::Circle { radius } => {
                let d = wrap_difference(y[0] - x[0]);
                let to_cut = radius * (std::f64::consts::PI - d.abs());
                if to_cut < margin {
                    return Err(Error::CutLocus { distance: to_cut, threshold: margin });
                }
                Ok(LogCoords { components: vec![d], ambient: None, length: radius * d.abs(), accuracy: DistanceAccuracy::Exact })
            }
            Self::FlatTorus { r1, r2 } => {
                let d = [wrap_difference(y[0] - x[0]), wrap_difference(y[1] - x[1])];
                let pi = std::f64::consts::PI;
                let to_cut = (r1 * (pi - d[0].abs())).min(r2 * (pi - d[1].abs()));
                if to_cut < margin {
                    return Err(Error::CutLocus { distance: to_cut, threshold: margin });
                }
                Ok(LogCoords {
                    components: d.to_vec(),
                    ambient: None,
                    length: (r1 * d[0]).hypot(r2 * d[1]),
                    accuracy: DistanceAccuracy::Exact,
                })
            }
            Self::Sphere { radius } => {
                let p = self.embed_coords(x);
                let q = self.embed_coords(y);
                let pq = dot(&p, &q);
                let cross = [
                    p[1] * q[2] - p[2] * q[1],
                    p[2] * q[0] - p[0] * q[2],
                    p[0] * q[1] - p[1] * q[0],
                ];
                let ang = norm(&cross).atan2(pq);
                let to_cut = radius * (std::f64::consts::PI - ang);
                if to_cut < margin {
                    return Err(Error::CutLocus { distance: to_cut, threshold: margin });
                }
                let mut t: Vec<f64> = q.iter().zip(&p).map(|(qi, pi)| qi - pq / (radius * radius) * pi).collect();
                let tn = norm(&t);
                if tn > 0.0 {
                    t.iter_mut().for_each(|c| *c *= radius * ang / tn);
                } else {
                    t.iter_mut().for_each(|c| *c = 0.0);
                }
                let components = self.ambient_to_components(x, &t);
                Ok(LogCoords { components, ambient: Some(t), length: radius * ang, accuracy: DistanceAccuracy::Exact })
            }
            Self::TorusOfRevolution { .. } => self.torus_log(x, y),
            Self::Product { .. } => {
                let mut components = Vec::new();
                let mut ambient = vec![0.0; self.ambient_dim()];
                let mut any_ambient = false;
                let mut len2 = 0.0;
                let mut accuracy = DistanceAccuracy::Exact;
                for (f, c, a) in self.factor_layout() {
                    let r = c..c + f.dim();
                    let l = f.log_coords(&x[r.clone()], &y[r.clone()])?;
                    len2 += l.length * l.length;
                    if l.accuracy != DistanceAccuracy::Exact {
                        accuracy = l.accuracy;
                    }
                    let amb = match &l.ambient {
                        Some(v) => {
                            any_ambient = true;
                            v.clone()
                        }
                        None => {
                            let j = f.embed_jacobian(&x[r.clone()]);
                            (j * DVector::from_column_slice(&l.components)).as_slice().to_vec()
                        }
                    };
                    ambient[a..a + f.ambient_dim()].copy_from_slice(&amb);
                    components.extend(l.components);
                }
                Ok(LogCoords { components, ambient: any_ambient.then_some(ambient), length: len2.sqrt(), accuracy })
            }
        }
    }

    /// Chart difference with periodic coordinates wrapped into (−π, π].
    fn wrapped_chart_difference(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        self.periodic_coordinates()
            .iter()
            .zip(from.iter().zip(to))
            .map(|(&p, (a, b))| if p { wrap_difference(b - a) } else { b - a })
            .collect()
    }

    /// Damped Newton shooting from an initial velocity guess.
    fn shoot(&self, x: &[f64], y: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        let residual = |v: &[f64]| -> Result<Vec<f64>> {
            let (end, _) = self.integrate_geodesic(x, v)?;
            Ok(self.wrapped_chart_difference(y, &end))
        };
        let mut v = guess.to_vec();
        let mut f = residual(&v)?;
        let mut fnorm = norm(&f);
        for _ in 0..SHOOTING_MAX_ITER {
            if fnorm < SHOOTING_TOL {
                return Ok(v);
            }
            let h = 1e-6;
            let mut jac = DMatrix::zeros(n, n);
            for k in 0..n {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[k] += h;
                vm[k] -= h;
                let fp = residual(&vp)?;
                let fm = residual(&vm)?;
                for i in 0..n {
                    jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
                }
            }
            let step = match jac.lu().solve(&DVector::from_column_slice(&f)) {
                Some(s) => s,
                None => break,
            };
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-4 {
                let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, b)| a - t * b).collect();
                if let Ok(ft) = residual(&trial) {
                    let nt = norm(&ft);
                    if nt < fnorm {
                        v = trial;
                        f = ft;
                        fnorm = nt;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if fnorm < SHOOTING_TOL {
            Ok(v)
        } else {
            Err(Error::ShootingFailed { iterations: SHOOTING_MAX_ITER, residual: fnorm })
        }
    }

    /// Shortest converged shooting solution among the nine periodic images
    /// of the target; nearly tied candidates indicate the cut locus.
    fn torus_log(&self, x: &[f64], y: &[f64]) -> Result<LogCoords> {
        let tau = std::f64::consts::TAU;
        let base = self.wrapped_chart_difference(x, y);
        let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
        for a in [0.0, -tau, tau] {
            for b in [0.0, -tau, tau] {
                let guess = vec![base[0] + a, base[1] + b];
                candidates.push((self.norm_at(x, &guess), guess));
            }
        }
        candidates.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap_or(Ordering::Equal));
        let mut solutions: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut last_err = None;
        for (guess_len, guess) in &candidates {
            if let Some((best, _)) = solutions.first() {
                if *guess_len > 2.0 * best + 1.0 {
                    continue;
                }
            }
            match self.shoot(x, y, guess) {
                Ok(v) => {
                    let len = self.norm_at(x, &v);
                    if !solutions.iter().any(|(l, s)| (l - len).abs() < 1e-9 && norm(&self.wrapped_chart_difference(s, &v)) < 1e-7) {
                        solutions.push((len, v));
                        solutions.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap_or(Ordering::Equal));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        let Some((len, v)) = solutions.first().cloned() else {
            return Err(last_err.unwrap_or(Error::ShootingFailed { iterations: 0, residual: f64::INFINITY }));
        };
        let margin = self.cut_locus_margin();
        if let Some((len2, _)) = solutions.get(1) {
            if len2 - len < margin {
                return Err(Error::CutLocus { distance: len2 - len, threshold: margin });
            }
        }
        Ok(LogCoords { components: v, ambient: None, length: len, accuracy: DistanceAccuracy::Shooting })
    }

    pub fn log_map(&self, p: &ChartPoint, q: &ChartPoint) -> Result<TangentVector> {
        let l = self.log_coords(&p.coords, &q.coords)?;
        Ok(TangentVector { base: p.clone(), components: l.components, ambient: l.ambient })
    }

    /// Geodesic distance on coordinates; never fails, but reports how it was
    /// obtained.
    pub fn distance_coords(&self, x: &[f64], y: &[f64]) -> DistanceResult {
        match *self {
            Self::Circle { radius } => DistanceResult {
                value: radius * wrap_difference(y[0] - x[0]).abs(),
                accuracy: DistanceAccuracy::Exact,
            },
            Self::FlatTorus { r1, r2 } => DistanceResult {
                value: (r1 * wrap_difference(y[0] - x[0])).hypot(r2 * wrap_difference(y[1] - x[1])),
                accuracy: DistanceAccuracy::Exact,
            },
            Self::Sphere { radius } => {
                let p = self.embed_coords(x);
                let q = self.embed_coords(y);
                let cross = [
                    p[1] * q[2] - p[2] * q[1],
                    p[2] * q[0] - p[0] * q[2],
                    p[0] * q[1] - p[1] * q[0],
                ];
                DistanceResult { value: radius * norm(&cross).atan2(dot(&p, &q)), accuracy: DistanceAccuracy::Exact }
            }
            Self::TorusOfRevolution { .. } => match self.torus_log(x, y) {
                Ok(l) => DistanceResult { value: l.length, accuracy: l.accuracy },
                Err(Error::CutLocus { .. }) => match self.torus_log_unchecked(x, y) {
                    Some(len) => DistanceResult { value: len, accuracy: DistanceAccuracy::Shooting },
                    None => self.graph_distance(x, y),
                },
                Err(_) => self.graph_distance(x, y),
            },
            Self::Product { .. } => {
                let mut s = 0.0;
                let mut accuracy = DistanceAccuracy::Exact;
                for (f, c, _) in self.factor_layout() {
                    let r = c..c + f.dim();
                    let d = f.distance_coords(&x[r.clone()], &y[r]);
                    s += d.value * d.value;
                    if d.accuracy != DistanceAccuracy::Exact {
                        accuracy = d.accuracy;
                    }
                }
                DistanceResult { value: s.sqrt(), accuracy }
            }
        }
    }

    /// Shortest shooting length without the cut-locus tie check.
    fn torus_log_unchecked(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let base = self.wrapped_chart_difference(x, y);
        let tau = std::f64::consts::TAU;
        let mut best: Option<f64> = None;
        for a in [0.0, -tau, tau] {
            for b in [0.0, -tau, tau] {
                if let Ok(v) = self.shoot(x, y, &[base[0] + a, base[1] + b]) {
                    let len = self.norm_at(x, &v);
                    best = Some(best.map_or(len, |m: f64| m.min(len)));
                }
            }
        }
        best
    }

    pub fn distance(&self, p: &ChartPoint, q: &ChartPoint) -> DistanceResult {
        self.distance_coords(&p.coords, &q.coords)
    }

    /// Dijkstra on a periodic grid with a 16-neighbour stencil. Both
    /// coordinates must be periodic.
    pub fn graph_distance(&self, x: &[f64], y: &[f64]) -> DistanceResult {
        let n = GRAPH_RESOLUTION;
        let h = std::f64::consts::TAU / n as f64;
        let idx = |a: f64| ((wrap_angle(a) / h).round() as usize) % n;
        let (sx, sy) = (idx(x[0]), idx(x[1]));
        let (tx, ty) = (idx(y[0]), idx(y[1]));
        let offsets: Vec<(i64, i64)> = [
            (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1),
            (2, 1), (2, -1), (-2, 1), (-2, -1), (1, 2), (1, -2), (-1, 2), (-1, -2),
        ]
        .to_vec();
        let mut dist = vec![f64::INFINITY; n * n];
        let mut heap = BinaryHeap::new();
        dist[sx * n + sy] = 0.0;
        heap.push(HeapItem(0.0, sx * n + sy));
        while let Some(HeapItem(d, node)) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            if node == tx * n + ty {
                break;
            }
            let (i, j) = (node / n, node % n);
            for &(di, dj) in &offsets {
                let ni = (i as i64 + di).rem_euclid(n as i64) as usize;
                let nj = (j as i64 + dj).rem_euclid(n as i64) as usize;
                let mid = [(i as f64 + 0.5 * di as f64) * h, (j as f64 + 0.5 * dj as f64) * h];
                let len = self.norm_at(&mid, &[di as f64 * h, dj as f64 * h]);
                let nd = d + len;
                if nd < dist[ni * n + nj] {
                    dist[ni * n + nj] = nd;
                    heap.push(HeapItem(nd, ni * n + nj));
                }
            }
        }
        DistanceResult { value: dist[tx * n + ty], accuracy: DistanceAccuracy::GraphApproximation }
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal).then_with(|| other.1.cmp(&self.1))
    }
}
