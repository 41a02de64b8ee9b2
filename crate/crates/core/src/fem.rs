//! P1 finite-element assembly on a [`TriangleMesh`].
//!
//! Coefficients are nodal (piecewise-linear) fields; every element integral is
//! evaluated with the exact formula for products of up to three barycentric
//! coordinates, `∫_T λ₁^a λ₂^b λ₃^c = 2|T| a! b! c! / (a+b+c+2)!`.

use crate::error::Result;
use crate::field::NodalField;
use crate::mesh::TriangleMesh;
use crate::sparse::SparseSymmetricMatrix;

/// Mass matrix `∫ w φ_i φ_j`, unweighted when `weight` is `None`.
pub fn assemble_mass(mesh: &TriangleMesh, weight: Option<&NodalField>) -> Result<SparseSymmetricMatrix> {
    match weight {
        None => Ok(mass_element_weighted(mesh, None)),
        Some(w) => {
            check_len(mesh, w, "mass weight")?;
            w.require_positive("mass weight")?;
            Ok(mass_nodal_weighted(mesh, w))
        }
    }
}

/// Stiffness matrix `∫ a ∇φ_i·∇φ_j` for a strictly positive nodal coefficient.
pub fn assemble_stiffness(mesh: &TriangleMesh, coeff: &NodalField) -> Result<SparseSymmetricMatrix> {
    check_len(mesh, coeff, "stiffness coefficient")?;
    coeff.require_positive("stiffness coefficient")?;
    Ok(stiffness_nodal(mesh, coeff))
}

fn check_len(mesh: &TriangleMesh, f: &[f64], what: &str) -> Result<()> {
    if f.len() != mesh.node_count() {
        return Err(crate::AetError::Shape(format!(
            "{what} has {} values for {} nodes",
            f.len(),
            mesh.node_count()
        )));
    }
    Ok(())
}

/// `∫ w φ_i φ_j` with `w` piecewise linear; no sign check.
pub(crate) fn mass_nodal_weighted(mesh: &TriangleMesh, w: &[f64]) -> SparseSymmetricMatrix {
    let mut m = SparseSymmetricMatrix::zeros(mesh.pattern().clone());
    let slots = mesh.pattern().element_slots().to_vec();
    let vals = m.values_mut();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.areas()[t];
        let wl = tri.map(|i| w[i]);
        let wsum = wl[0] + wl[1] + wl[2];
        for a in 0..3 {
            for b in 0..3 {
                let v = if a == b {
                    // w_a/10 + (others)/30
                    area * (wl[a] / 10.0 + (wsum - wl[a]) / 30.0)
                } else {
                    let c = 3 - a - b;
                    area * ((wl[a] + wl[b]) / 30.0 + wl[c] / 60.0)
                };
                vals[slots[t][3 * a + b]] += v;
            }
        }
    }
    m
}

/// `∫ w φ_i φ_j` with `w` constant on each triangle (`None` = 1).
pub(crate) fn mass_element_weighted(mesh: &TriangleMesh, w: Option<&[f64]>) -> SparseSymmetricMatrix {
    let mut m = SparseSymmetricMatrix::zeros(mesh.pattern().clone());
    let slots = mesh.pattern().element_slots();
    let vals = m.values_mut();
    for (t, area) in mesh.areas().iter().enumerate() {
        let scale = area * w.map_or(1.0, |w| w[t]) / 12.0;
        for a in 0..3 {
            for b in 0..3 {
                vals[slots[t][3 * a + b]] += if a == b { 2.0 * scale } else { scale };
            }
        }
    }
    m
}

fn stiffness_from_element_integrals(mesh: &TriangleMesh, coeff_integral: impl Fn(usize) -> f64) -> SparseSymmetricMatrix {
    let mut k = SparseSymmetricMatrix::zeros(mesh.pattern().clone());
    let slots = mesh.pattern().element_slots();
    let grads = mesh.gradients();
    let vals = k.values_mut();
    for t in 0..mesh.triangles().len() {
        let c = coeff_integral(t);
        let g = &grads[t];
        for a in 0..3 {
            for b in 0..3 {
                vals[slots[t][3 * a + b]] += c * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            }
        }
    }
    k
}

/// `∫ a ∇φ_i·∇φ_j` with `a` piecewise linear; no sign check.
pub(crate) fn stiffness_nodal(mesh: &TriangleMesh, a: &[f64]) -> SparseSymmetricMatrix {
    let tris = mesh.triangles();
    let areas = mesh.areas();
    stiffness_from_element_integrals(mesh, |t| {
        let [i, j, k] = tris[t];
        areas[t] * (a[i] + a[j] + a[k]) / 3.0
    })
}

/// `∫ c ∇φ_i·∇φ_j` with `c` constant per triangle.
pub(crate) fn stiffness_element(mesh: &TriangleMesh, c: &[f64]) -> SparseSymmetricMatrix {
    let areas = mesh.areas();
    stiffness_from_element_integrals(mesh, |t| areas[t] * c[t])
}

/// `∫ a b ∇φ_i·∇φ_j` with `a`, `b` both piecewise linear (exact quadratic coefficient).
pub(crate) fn stiffness_product(mesh: &TriangleMesh, a: &[f64], b: &[f64]) -> SparseSymmetricMatrix {
    let tris = mesh.triangles();
    let areas = mesh.areas();
    stiffness_from_element_integrals(mesh, |t| product_integral(areas[t], tris[t], a, b))
}

/// `∫_T a b` for piecewise-linear `a`, `b`.
pub(crate) fn product_integral(area: f64, tri: [usize; 3], a: &[f64], b: &[f64]) -> f64 {
    let al = tri.map(|i| a[i]);
    let bl = tri.map(|i| b[i]);
    let diag: f64 = (0..3).map(|k| al[k] * bl[k]).sum();
    let sa: f64 = al.iter().sum();
    let sb: f64 = bl.iter().sum();
    area * (diag + sa * sb) / 12.0
}

/// Gradient of a P1 field on every triangle.
pub fn element_gradients(mesh: &TriangleMesh, u: &[f64]) -> Vec<[f64; 2]> {
    mesh.triangles()
        .iter()
        .zip(mesh.gradients())
        .map(|(tri, g)| {
            let mut out = [0.0; 2];
            for k in 0..3 {
                out[0] += u[tri[k]] * g[k][0];
                out[1] += u[tri[k]] * g[k][1];
            }
            out
        })
        .collect()
}

/// Row sums of the mass matrix, `∫ φ_i`.
pub fn lumped_mass(mesh: &TriangleMesh) -> Vec<f64> {
    let mut out = vec![0.0; mesh.node_count()];
    for (tri, area) in mesh.triangles().iter().zip(mesh.areas()) {
        for &i in tri {
            out[i] += area / 3.0;
        }
    }
    out
}

/// `∫ f` for a P1 field.
pub fn integrate(mesh: &TriangleMesh, f: &[f64]) -> f64 {
    lumped_mass(mesh).iter().zip(f).map(|(m, v)| m * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_mesh;
    use std::f64::consts::PI;

    fn unit_right_triangle() -> TriangleMesh {
        // right triangle inscribed in the unit circle (hypotenuse on a diameter), area 1
        let nodes = vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
        TriangleMesh::new(1.0, nodes, vec![[0, 1, 2]], vec![0, 1, 2]).unwrap()
    }

    #[test]
    fn single_element_mass_matches_analytic() {
        let mesh = unit_right_triangle();
        let area = mesh.areas()[0];
        assert!((area - 1.0).abs() < 1e-15);
        let m = assemble_mass(&mesh, None).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((m.get(i, j) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn nodal_weighted_mass_reduces_to_unweighted_for_constants() {
        let mesh = generate_disk_mesh(1.0, 200).unwrap();
        let m = assemble_mass(&mesh, None).unwrap();
        let m2 = assemble_mass(&mesh, Some(&NodalField::constant(mesh.node_count(), 2.0))).unwrap();
        for (a, b) in m.values().iter().zip(m2.values()) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs().max(1e-300) * 10.0);
        }
    }

    #[test]
    fn nodal_weight_against_brute_force_quadrature() {
        // Degree-3 integrand on one triangle: compare with a 7-point rule exact to degree 5.
        let mesh = unit_right_triangle();
        let w = [0.3, 1.7, 2.2];
        let m = mass_nodal_weighted(&mesh, &w);
        let (pts, wts) = dunavant5();
        let area = mesh.areas()[0];
        for i in 0..3 {
            for j in 0..3 {
                let q: f64 = pts
                    .iter()
                    .zip(&wts)
                    .map(|(l, wt)| {
                        let wl = w[0] * l[0] + w[1] * l[1] + w[2] * l[2];
                        wt * wl * l[i] * l[j]
                    })
                    .sum::<f64>()
                    * area;
                assert!((m.get(i, j) - q).abs() < 1e-14, "{i}{j}");
            }
        }
    }

    fn dunavant5() -> (Vec<[f64; 3]>, Vec<f64>) {
        let a1 = 0.059_715_871_789_770;
        let b1 = 0.470_142_064_105_115;
        let a2 = 0.797_426_985_353_087;
        let b2 = 0.101_286_507_323_456;
        let w0 = 0.225;
        let w1 = 0.132_394_152_788_506;
        let w2 = 0.125_939_180_544_827;
        let pts = vec![
            [1.0 / 3.0; 3],
            [a1, b1, b1],
            [b1, a1, b1],
            [b1, b1, a1],
            [a2, b2, b2],
            [b2, a2, b2],
            [b2, b2, a2],
        ];
        let wts = vec![w0, w1, w1, w1, w2, w2, w2];
        (pts, wts)
    }

    #[test]
    fn partition_of_unity() {
        let mesh = generate_disk_mesh(1.0, 1500).unwrap();
        let m = assemble_mass(&mesh, None).unwrap();
        let total = m.total();
        assert!((total - mesh.total_area()).abs() < 1e-12);
        assert!((total - PI).abs() / PI < 0.01);
        let rows = m.row_sums();
        let lumped = lumped_mass(&mesh);
        for (r, l) in rows.iter().zip(&lumped) {
            assert!((r - l).abs() < 1e-15);
        }
        assert!(m.asymmetry() < 1e-12);
    }

    #[test]
    fn stiffness_properties() {
        let mesh = generate_disk_mesh(1.0, 1500).unwrap();
        let one = NodalField::constant(mesh.node_count(), 1.0);
        let k = assemble_stiffness(&mesh, &one).unwrap();
        let ones = vec![1.0; mesh.node_count()];
        let r = k.mul_vec(&ones);
        let row_norm = k.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(r.iter().all(|v| v.abs() < 1e-10 * row_norm));
        let x1 = mesh.nodal(|x, _| x);
        let energy = k.quadratic_form(&x1);
        assert!((energy - PI).abs() / PI < 0.01, "{energy}");
        let k3 = assemble_stiffness(&mesh, &NodalField::constant(mesh.node_count(), 3.0)).unwrap();
        for (a, b) in k.values().iter().zip(k3.values()) {
            assert!((3.0 * a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
        assert!(k.asymmetry() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_coefficients() {
        let mesh = generate_disk_mesh(1.0, 50).unwrap();
        let mut c = NodalField::constant(mesh.node_count(), 1.0);
        c[7] = 0.0;
        assert!(assemble_stiffness(&mesh, &c).is_err());
        c[7] = -1.0;
        assert!(assemble_mass(&mesh, Some(&c)).is_err());
        assert!(assemble_mass(&mesh, Some(&NodalField::constant(3, 1.0))).is_err());
    }

    #[test]
    fn product_stiffness_matches_interpolated_coefficient_for_constant_factor() {
        let mesh = generate_disk_mesh(1.0, 300).unwrap();
        let a = mesh.nodal(|x, y| 1.0 + 0.3 * x - 0.2 * y);
        let two = vec![2.0; mesh.node_count()];
        let k1 = stiffness_product(&mesh, &a, &two);
        let a2: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let k2 = stiffness_nodal(&mesh, &a2);
        for (x, y) in k1.values().iter().zip(k2.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_of_linear_function_are_exact() {
        let mesh = generate_disk_mesh(1.0, 120).unwrap();
        let u = mesh.nodal(|x, y| 2.0 * x - 3.0 * y + 0.5);
        for g in element_gradients(&mesh, &u) {
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);
        }
    }
}
