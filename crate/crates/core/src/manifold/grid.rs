use super::{ChartPoint, ManifoldDescriptor};
use crate::error::{Error, Result};
use std::f64::consts::{PI, TAU};

/// Gauss–Legendre nodes and weights on [−1, 1], nodes in decreasing order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisKind {
    /// Uniform nodes on a 2π-periodic angle.
    Periodic,
    /// Colatitude nodes at Gauss–Legendre points in cos u.
    Colatitude,
}

/// One coordinate axis of a tensor-product grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridAxis {
    pub kind: AxisKind,
    pub nodes: Vec<f64>,
    /// Coordinate-measure weights; a node weight is the product of these
    /// times √det g.
    pub weights: Vec<f64>,
    /// Control-volume faces, `faces[k]` and `faces[k + 1]` bracket node k.
    pub faces: Vec<f64>,
}

impl GridAxis {
    fn periodic(n: usize) -> Self {
        let h = TAU / n as f64;
        Self {
            kind: AxisKind::Periodic,
            nodes: (0..n).map(|k| k as f64 * h).collect(),
            weights: vec![h; n],
            faces: (0..=n).map(|k| (k as f64 - 0.5) * h).collect(),
        }
    }

    /// Gauss–Legendre in x = cos u. The faces accumulate the weights so each
    /// control volume carries exactly its quadrature weight of area.
    fn colatitude(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let nodes: Vec<f64> = x.iter().map(|c| c.acos()).collect();
        let weights = w.iter().zip(&nodes).map(|(wi, u)| wi / u.sin()).collect();
        let mut faces = Vec::with_capacity(n + 1);
        let mut acc = 1.0;
        faces.push(0.0);
        for wi in w.iter().take(n - 1) {
            acc -= wi;
            faces.push(acc.clamp(-1.0, 1.0).acos());
        }
        faces.push(PI);
        Self { kind: AxisKind::Colatitude, nodes, weights, faces }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_periodic(&self) -> bool {
        self.kind == AxisKind::Periodic
    }

    /// Uniform spacing of a periodic axis.
    pub fn spacing(&self) -> f64 {
        TAU / self.len() as f64
    }
}

/// Tensor-product quadrature on a catalog manifold, with nodes in row-major
/// order (last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    pub manifold: ManifoldDescriptor,
    pub axes: Vec<GridAxis>,
    pub resolution: Vec<usize>,
    /// Node coordinates, `dim` values per node.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

fn axis_kinds(m: &ManifoldDescriptor) -> Vec<AxisKind> {
    m.periodic_coordinates()
        .into_iter()
        .map(|p| if p { AxisKind::Periodic } else { AxisKind::Colatitude })
        .collect()
}

impl QuadratureGrid {
    /// `resolution` gives the node count per coordinate axis.
    pub fn new(manifold: &ManifoldDescriptor, resolution: &[usize]) -> Result<Self> {
        manifold.validate()?;
        let kinds = axis_kinds(manifold);
        if resolution.len() != kinds.len() {
            return Err(Error::Resolution(format!(
                "{} needs {} axis resolutions, got {}",
                manifold.name(),
                kinds.len(),
                resolution.len()
            )));
        }
        if let Some(&r) = resolution.iter().find(|&&r| r < 8) {
            return Err(Error::Resolution(format!("each axis needs at least 8 nodes, got {r}")));
        }
        // Gradients across a pole pair each longitude with its antipode.
        for (i, k) in kinds.iter().enumerate() {
            if *k == AxisKind::Colatitude && resolution[i + 1] % 2 != 0 {
                return Err(Error::Resolution(format!(
                    "sphere longitude resolution must be even for pole handling, got {}",
                    resolution[i + 1]
                )));
            }
        }
        let axes: Vec<GridAxis> = kinds
            .iter()
            .zip(resolution)
            .map(|(k, &n)| match k {
                AxisKind::Periodic => GridAxis::periodic(n),
                AxisKind::Colatitude => GridAxis::colatitude(n),
            })
            .collect();
        let dim = axes.len();
        let total: usize = resolution.iter().product();
        let mut points = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let x: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a.nodes[i]).collect();
            let w: f64 = idx.iter().zip(&axes).map(|(&i, a)| a.weights[i]).product();
            weights.push(w * manifold.volume_density(&x));
            points.extend_from_slice(&x);
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < resolution[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        Ok(Self { manifold: manifold.clone(), axes, resolution: resolution.to_vec(), points, weights })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn node(&self, i: usize) -> ChartPoint {
        ChartPoint { manifold: self.manifold.clone(), coords: self.coords(i).to_vec() }
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for a in (0..self.dim().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.resolution[a + 1];
        }
        s
    }

    /// Multi-index of a node.
    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        let mut rem = i;
        self.strides()
            .iter()
            .zip(&self.resolution)
            .map(|(&s, &r)| {
                let k = rem / s;
                rem -= k * s;
                k % r
            })
            .collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Evaluates `f` at every node.
    pub fn map_nodes<T, F: Fn(&[f64]) -> T + Sync + Send>(&self, f: F) -> Vec<T>
    where
        T: Send,
    {
        use rayon::prelude::*;
        (0..self.len()).into_par_iter().map(|i| f(self.coords(i))).collect()
    }

    pub fn same_nodes(&self, other: &QuadratureGrid) -> bool {
        self.manifold == other.manifold && self.resolution == other.resolution
    }
}
