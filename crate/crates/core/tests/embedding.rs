use approx::assert_relative_eq;
use geobayes::embedding::AmbientPoint;
use geobayes::fd;
use geobayes::manifold::{wrap_difference, ChartPoint, ManifoldDescriptor};
use geobayes::Error;
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};

fn catalog() -> Vec<ManifoldDescriptor> {
    vec![
        ManifoldDescriptor::circle(1.5).unwrap(),
        ManifoldDescriptor::sphere(0.7).unwrap(),
        ManifoldDescriptor::flat_torus(1.0, 2.0).unwrap(),
        ManifoldDescriptor::torus_of_revolution(2.0, 1.0).unwrap(),
        ManifoldDescriptor::product(vec![
            ManifoldDescriptor::circle(1.0).unwrap(),
            ManifoldDescriptor::sphere(1.0).unwrap(),
        ])
        .unwrap(),
    ]
}

fn interior_point(m: &ManifoldDescriptor, s: &[f64]) -> Vec<f64> {
    m.periodic_coordinates()
        .iter()
        .zip(s)
        .map(|(&p, &t)| if p { t * TAU } else { 0.2 + t * (PI - 0.4) })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn frames_form_an_orthonormal_ambient_basis() {
    for m in catalog() {
        let x = interior_point(&m, &[0.3, 0.6, 0.8]);
        let p = ChartPoint::new(&m, &x).unwrap();
        let f = m.tangent_normal_frames(&p);
        assert_eq!(f.tangent.len(), m.dim());
        assert_eq!(f.tangent.len() + f.normal.len(), m.ambient_dim());
        let basis: Vec<&Vec<f64>> = f.tangent.iter().chain(&f.normal).collect();
        let s = m.ambient_dim();
        // Gram identity Σ eₖeₖᵀ = I.
        for i in 0..s {
            for j in 0..s {
                let g: f64 = basis.iter().map(|e| e[i] * e[j]).sum();
                assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
        }
        // The closed-form normals span the numerically completed normal space.
        let completed = m.normal_frame_completion(&x);
        for nv in &f.normal {
            let proj: f64 = completed.iter().map(|c| dot(c, nv).powi(2)).sum();
            assert_relative_eq!(proj, 1.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn circle_and_sphere_normals_are_radial() {
    let c = ManifoldDescriptor::circle(2.0).unwrap();
    let p = ChartPoint::new(&c, &[0.4]).unwrap();
    let n = &c.tangent_normal_frames(&p).normal[0];
    assert_relative_eq!(n[0], 0.4f64.cos(), epsilon = 1e-15);
    let s = ManifoldDescriptor::sphere(3.0).unwrap();
    let p = ChartPoint::new(&s, &[1.0, 2.0]).unwrap();
    let n = &s.tangent_normal_frames(&p).normal[0];
    let e = p.embed();
    for k in 0..3 {
        assert_relative_eq!(n[k], e[k] / 3.0, epsilon = 1e-15);
    }
}

#[test]
fn second_fundamental_form_of_round_spaces() {
    let c = ManifoldDescriptor::circle(2.0).unwrap();
    let b = c.second_fundamental_form(&ChartPoint::new(&c, &[1.0]).unwrap());
    assert_relative_eq!(b.norm_sq, 0.25, epsilon = 1e-14);
    let s = ManifoldDescriptor::sphere(0.5).unwrap();
    let p = ChartPoint::new(&s, &[0.8, 0.1]).unwrap();
    let b = s.second_fundamental_form(&p);
    assert_relative_eq!(b.norm_sq, 8.0, epsilon = 1e-12);
    // Mean-curvature vector points inward with length 2/r.
    let e = p.embed();
    for k in 0..3 {
        assert_relative_eq!(b.tension[k], -2.0 / 0.5 * e[k] / 0.5, epsilon = 1e-12);
    }
    let t = ManifoldDescriptor::flat_torus(1.0, 2.0).unwrap();
    let b = t.second_fundamental_form(&ChartPoint::new(&t, &[0.3, 0.9]).unwrap());
    assert_relative_eq!(b.norm_sq, 1.0 + 0.25, epsilon = 1e-13);
}

#[test]
fn second_fundamental_form_matches_finite_difference_oracle() {
    for m in catalog() {
        let x = interior_point(&m, &[0.41, 0.27, 0.66]);
        let n = m.dim();
        let b = m.second_fundamental_form_coords(&x);
        let comps: Vec<Vec<f64>> = b.frame.iter().map(|t| m.ambient_to_components(&x, t)).collect();
        let embed = |p: &[f64]| m.embed_coords(p);
        for i in 0..n {
            for j in 0..n {
                // Second derivative of ι along the frame vectors, normal part.
                let mut d2 = vec![0.0; m.ambient_dim()];
                for a in 0..n {
                    for c in 0..n {
                        let coef = comps[i][a] * comps[j][c];
                        if coef != 0.0 {
                            let h = fd::partial(&embed, &x, &[a, c], 1e-2);
                            for (d, hv) in d2.iter_mut().zip(h) {
                                *d += coef * hv;
                            }
                        }
                    }
                }
                let normal = m.normal_part(&x, &d2);
                for (u, v) in normal.iter().zip(b.at(i, j)) {
                    assert!((u - v).abs() < 1e-9, "{}", m.name());
                }
            }
        }
    }
}

#[test]
fn gauss_equation_holds_for_every_catalog_embedding() {
    for m in catalog() {
        for s in [[0.1, 0.2, 0.3], [0.8, 0.5, 0.2]] {
            let p = ChartPoint::new(&m, &interior_point(&m, &s)).unwrap();
            let (intrinsic, extrinsic) = m.scal_check(&p);
            assert!((intrinsic - extrinsic).abs() < 1e-10, "{}: {intrinsic} vs {extrinsic}", m.name());
        }
    }
}

#[test]
fn projection_hessian_matches_chart_finite_differences() {
    // ∇dπ at a point of the manifold from second differences of the chart
    // projection, made covariant with the Christoffel symbols.
    for m in catalog() {
        let x = interior_point(&m, &[0.35, 0.55, 0.15]);
        let nph = m.normal_projection_hessian_coords(&x);
        let basis = nph.basis();
        let p0 = m.embed_coords(&x);
        let periodic = m.periodic_coordinates();
        let chart_proj = |y: &[f64]| -> Vec<f64> {
            let tp = m.project(&AmbientPoint(y.to_vec())).unwrap();
            tp.base
                .coords
                .iter()
                .zip(&x)
                .zip(&periodic)
                .map(|((c, c0), &per)| if per { c0 + wrap_difference(c - c0) } else { *c })
                .collect()
        };
        let gamma = m.christoffel(&x);
        let jac = m.embed_jacobian(&x);
        let n = m.dim();
        for (a, fa) in basis.iter().enumerate() {
            for fb in basis.iter().skip(a) {
                let along = |st: &[f64]| {
                    let y: Vec<f64> = p0.iter().zip(fa).zip(fb).map(|((p, u), w)| p + st[0] * u + st[1] * w).collect();
                    chart_proj(&y)
                };
                let d2 = fd::partial(&along, &[0.0, 0.0], &[0, 1], 1e-2);
                let da = fd::partial(&along, &[0.0, 0.0], &[0], 1e-2);
                let db = fd::partial(&along, &[0.0, 0.0], &[1], 1e-2);
                let corr = gamma.contract(&da, &db);
                let chart: Vec<f64> = d2.iter().zip(&corr).map(|(u, v)| u + v).collect();
                let ambient: Vec<f64> = (0..m.ambient_dim()).map(|s| (0..n).map(|k| jac[(s, k)] * chart[k]).sum()).collect();
                let closed = nph.apply(fa, fb);
                for (u, v) in ambient.iter().zip(&closed) {
                    assert!((u - v).abs() < 1e-7, "{}: {u} vs {v}", m.name());
                }
            }
        }
    }
}

#[test]
fn projection_hessian_norm_and_trace() {
    for m in catalog() {
        let x = interior_point(&m, &[0.6, 0.3, 0.9]);
        let nph = m.normal_projection_hessian_coords(&x);
        assert_relative_eq!(nph.norm_sq(), 2.0 * nph.sff.norm_sq, epsilon = 1e-12);
        assert!(nph.trace().iter().all(|c| c.abs() < 1e-12));
    }
}

#[test]
fn projection_rejects_points_outside_the_tube() {
    let c = ManifoldDescriptor::circle(1.0).unwrap();
    assert!(matches!(c.project(&AmbientPoint(vec![0.0, 0.0])), Err(Error::OutsideTube { .. })));
    assert!(matches!(c.project(&AmbientPoint(vec![2.5, 0.0])), Err(Error::OutsideTube { .. })));
    let t = ManifoldDescriptor::torus_of_revolution(2.0, 1.0).unwrap();
    assert_relative_eq!(t.reach(), 1.0);
    assert!(t.project(&AmbientPoint(vec![2.0, 0.0, 0.99])).is_ok());
    assert!(t.project(&AmbientPoint(vec![0.0, 0.0, 0.3])).is_err());
    assert!(c.project(&AmbientPoint(vec![1.0, 0.0, 0.0])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn project_inverts_embed_and_offsets_are_normal(s in prop::array::uniform3(0.0..1.0f64),
                                                   coef in prop::array::uniform2(-1.0..1.0f64),
                                                   which in 0usize..5) {
        let m = &catalog()[which];
        let x = interior_point(m, &s);
        let p = ChartPoint::new(m, &x).unwrap();
        let e = p.embed();
        let tp = m.project(&AmbientPoint(e.clone())).unwrap();
        prop_assert!(m.distance_coords(&tp.base.coords, &p.coords).value < 1e-12);
        prop_assert!(tp.distance < 1e-12);
        // Move along normals by less than the reach and project back.
        let normals = m.normal_frame_ambient(&x);
        let mut y = e.clone();
        let scale = 0.45 * m.reach();
        for (nv, c) in normals.iter().zip(coef.iter().chain(std::iter::repeat(&0.3))) {
            for (yi, ni) in y.iter_mut().zip(nv) {
                *yi += scale * c * ni;
            }
        }
        let tp = m.project(&AmbientPoint(y.clone())).unwrap();
        prop_assert!(m.distance_coords(&tp.base.coords, &p.coords).value < 1e-10);
        let off_norm = tp.offset.iter().map(|c| c * c).sum::<f64>().sqrt();
        prop_assert!((off_norm - tp.distance).abs() < 1e-12);
        for t in m.tangent_frame_ambient(&tp.base.coords) {
            prop_assert!(dot(&t, &tp.offset).abs() < 1e-12);
        }
    }
}
