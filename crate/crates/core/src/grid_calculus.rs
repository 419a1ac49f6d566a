//! Differentiation and interpolation of nodal fields on quadrature grids.

use crate::manifold::{AxisKind, QuadratureGrid};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

/// How nodal gradients are formed along periodic axes. Colatitude axes
/// always use second-order differences with reflection through the poles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientScheme {
    /// Fourier differentiation, exact for band-limited fields.
    Spectral,
    /// Second-order central differences.
    Central,
}

/// Index of the node reached by stepping `step` along `axis`, with periodic
/// wrap; off the end of a colatitude axis the step continues through the
/// pole onto the antipodal longitude. Returns the node and the coordinate
/// value seen from the starting node.
pub(crate) fn neighbour(grid: &QuadratureGrid, idx: &[usize], axis: usize, step: i64) -> (usize, f64) {
    let ax = &grid.axes[axis];
    let n = ax.len() as i64;
    let k = idx[axis] as i64 + step;
    let mut j = idx.to_vec();
    match ax.kind {
        AxisKind::Periodic => {
            let h = ax.spacing();
            j[axis] = k.rem_euclid(n) as usize;
            (grid.flat_index(&j), ax.nodes[idx[axis]] + step as f64 * h)
        }
        AxisKind::Colatitude => {
            let lon = axis + 1;
            let nl = grid.resolution[lon];
            if k < 0 {
                let m = (-k - 1) as usize;
                j[axis] = m;
                j[lon] = (idx[lon] + nl / 2) % nl;
                (grid.flat_index(&j), -ax.nodes[m])
            } else if k >= n {
                let m = (2 * n - 1 - k) as usize;
                j[axis] = m;
                j[lon] = (idx[lon] + nl / 2) % nl;
                (grid.flat_index(&j), TAU - ax.nodes[m])
            } else {
                j[axis] = k as usize;
                (grid.flat_index(&j), ax.nodes[k as usize])
            }
        }
    }
}

/// Chart partial derivatives of a nodal field, `out[node * dim + axis]`.
pub fn nodal_gradient(grid: &QuadratureGrid, values: &[f64], scheme: GradientScheme) -> Vec<f64> {
    let d = grid.dim();
    let mut out = vec![0.0; grid.len() * d];
    for axis in 0..d {
        let ax = &grid.axes[axis];
        if ax.kind == AxisKind::Periodic && scheme == GradientScheme::Spectral {
            spectral_axis_derivative(grid, values, axis, &mut out);
            continue;
        }
        for i in 0..grid.len() {
            let idx = grid.multi_index(i);
            let x0 = ax.nodes[idx[axis]];
            let (im, xm) = neighbour(grid, &idx, axis, -1);
            let (ip, xp) = neighbour(grid, &idx, axis, 1);
            let (hm, hp) = (x0 - xm, xp - x0);
            let g = -hp / (hm * (hm + hp)) * values[im] + (hp - hm) / (hm * hp) * values[i]
                + hm / (hp * (hm + hp)) * values[ip];
            out[i * d + axis] = g;
        }
    }
    out
}

fn spectral_axis_derivative(grid: &QuadratureGrid, values: &[f64], axis: usize, out: &mut [f64]) {
    let d = grid.dim();
    let n = grid.resolution[axis];
    let stride = grid.strides()[axis];
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for start in 0..grid.len() {
        if grid.multi_index(start)[axis] != 0 {
            continue;
        }
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(values[start + k * stride], 0.0);
        }
        fwd.process(&mut buf);
        for (k, b) in buf.iter_mut().enumerate() {
            let freq = if 2 * k < n {
                k as f64
            } else if 2 * k == n {
                0.0
            } else {
                k as f64 - n as f64
            };
            *b *= Complex::new(0.0, freq);
        }
        inv.process(&mut buf);
        for (k, b) in buf.iter().enumerate() {
            out[(start + k * stride) * d + axis] = b.re / n as f64;
        }
    }
}

/// Four-point Lagrange stencil along one axis: node indices and weights.
fn axis_stencil(grid: &QuadratureGrid, axis: usize, x: f64) -> ([usize; 4], [f64; 4]) {
    let ax = &grid.axes[axis];
    let n = ax.len();
    let (idx, pts): ([usize; 4], [f64; 4]) = match ax.kind {
        AxisKind::Periodic => {
            let h = ax.spacing();
            let t = crate::manifold::wrap_angle(x) / h;
            let k = t.floor() as i64;
            let mut idx = [0; 4];
            let mut pts = [0.0; 4];
            for (m, off) in (-1..=2).enumerate() {
                idx[m] = (k + off).rem_euclid(n as i64) as usize;
                pts[m] = (k + off) as f64 * h;
            }
            let shift = crate::manifold::wrap_angle(x) - x;
            for p in pts.iter_mut() {
                *p -= shift;
            }
            (idx, pts)
        }
        AxisKind::Colatitude => {
            let k = ax.nodes.partition_point(|&u| u <= x).saturating_sub(1);
            let start = k.saturating_sub(1).min(n - 4);
            let idx = [start, start + 1, start + 2, start + 3];
            let pts = [ax.nodes[start], ax.nodes[start + 1], ax.nodes[start + 2], ax.nodes[start + 3]];
            (idx, pts)
        }
    };
    let mut w = [1.0; 4];
    for m in 0..4 {
        for l in 0..4 {
            if l != m {
                w[m] *= (x - pts[l]) / (pts[m] - pts[l]);
            }
        }
    }
    (idx, w)
}

/// Tensor-product cubic interpolation of a nodal field.
pub fn interpolate(grid: &QuadratureGrid, values: &[f64], x: &[f64]) -> f64 {
    let d = grid.dim();
    let stencils: Vec<([usize; 4], [f64; 4])> = (0..d).map(|a| axis_stencil(grid, a, x[a])).collect();
    let strides = grid.strides();
    let mut total = 0.0;
    let count = 4usize.pow(d as u32);
    for c in 0..count {
        let mut rem = c;
        let mut node = 0;
        let mut w = 1.0;
        for a in 0..d {
            let m = rem % 4;
            rem /= 4;
            node += stencils[a].0[m] * strides[a];
            w *= stencils[a].1[m];
        }
        total += w * values[node];
    }
    total
}

/// Interpolates every component of a field stored as `values[node * k + c]`.
pub fn interpolate_components(grid: &QuadratureGrid, values: &[f64], k: usize, x: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let stencils: Vec<([usize; 4], [f64; 4])> = (0..d).map(|a| axis_stencil(grid, a, x[a])).collect();
    let strides = grid.strides();
    let mut out = vec![0.0; k];
    for c in 0..4usize.pow(d as u32) {
        let mut rem = c;
        let mut node = 0;
        let mut w = 1.0;
        for a in 0..d {
            let m = rem % 4;
            rem /= 4;
            node += stencils[a].0[m] * strides[a];
            w *= stencils[a].1[m];
        }
        for (o, v) in out.iter_mut().zip(&values[node * k..node * k + k]) {
            *o += w * v;
        }
    }
    out
}
