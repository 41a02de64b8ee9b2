//! Randomized invariants of the discretization, linear algebra and statistics.

use aet_core::electrostatics::{BoundaryCurrent, NeumannSolver};
use aet_core::fem::{assemble_mass, assemble_stiffness};
use aet_core::generate_disk_mesh;
use aet_core::sparse::dot;
use aet_core::uq::{derive_seed, mean_std};
use aet_core::{NodalField, TriangleMesh};
use proptest::prelude::*;
use std::sync::OnceLock;

fn mesh() -> &'static TriangleMesh {
    static MESH: OnceLock<TriangleMesh> = OnceLock::new();
    MESH.get_or_init(|| generate_disk_mesh(1.0, 400).unwrap())
}

fn field(coeffs: &[f64; 4]) -> Vec<f64> {
    mesh().nodal(|x, y| coeffs[0] + coeffs[1] * x + coeffs[2] * y + coeffs[3] * (3.0 * x * y).sin())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mass_is_positive_and_factor_reproduces_it(c in prop::array::uniform4(-2.0f64..2.0)) {
        let m = mesh();
        let mass = assemble_mass(m, None).unwrap();
        let v = field(&c);
        let q = mass.quadratic_form(&v);
        prop_assume!(dot(&v, &v) > 1e-8);
        prop_assert!(q > 0.0);
        let factor = m.symbolic_cholesky().factor(&mass, 0.0).unwrap();
        let lt = factor.apply_lt(&v);
        prop_assert!((dot(&lt, &lt) - q).abs() <= 1e-10 * q);
    }

    #[test]
    fn stiffness_annihilates_constants_and_is_semidefinite(
        c in prop::array::uniform4(-2.0f64..2.0),
        s in prop::array::uniform4(-0.3f64..0.3),
    ) {
        let m = mesh();
        let sigma: Vec<f64> = field(&s).iter().map(|v| 1.0 + v.abs()).collect();
        let k = assemble_stiffness(m, &NodalField::new(sigma)).unwrap();
        let ones = vec![1.0; m.node_count()];
        let scale = k.quadratic_form(&field(&[0.0, 1.0, 1.0, 0.0]));
        prop_assert!(k.mul_vec(&ones).iter().all(|v| v.abs() <= 1e-10 * scale));
        prop_assert!(k.quadratic_form(&field(&c)) >= -1e-12 * scale);
    }

    #[test]
    fn neumann_solution_satisfies_its_system(a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let m = mesh();
        let sigma = NodalField::new(m.nodal(|x, y| 1.0 + 0.4 * (x * y).cos()));
        let solver = NeumannSolver::new(m, &sigma).unwrap();
        let f = BoundaryCurrent::projected(m, "mix", move |x, y| a * x + b * y);
        let u = solver.solve(m, &f);
        let k = assemble_stiffness(m, &sigma).unwrap();
        let load = f.load(m);
        let r: Vec<f64> = k.mul_vec(&u).iter().zip(&load).map(|(x, y)| x - y).collect();
        let norm = dot(&load, &load).sqrt().max(1e-300);
        prop_assert!(dot(&r, &r).sqrt() <= 1e-8 * norm.max(1e-12));
        prop_assert!(m.boundary_inner(&u, &vec![1.0; m.node_count()]).abs() <= 1e-10);
    }

    #[test]
    fn derived_seeds_depend_on_both_inputs(master in any::<u64>(), i in 0usize..1000) {
        prop_assert_eq!(derive_seed(master, i), derive_seed(master, i));
        prop_assert_ne!(derive_seed(master, i), derive_seed(master, i + 1));
        prop_assert_ne!(derive_seed(master, i), derive_seed(master.wrapping_add(1), i));
    }

    #[test]
    fn ensemble_statistics_are_shift_invariant(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 2..8),
        shift in -10.0f64..10.0,
    ) {
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let (mean, std) = mean_std(&refs).unwrap();
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        let srefs: Vec<&[f64]> = shifted.iter().map(|r| r.as_slice()).collect();
        let (smean, sstd) = mean_std(&srefs).unwrap();
        for i in 0..6 {
            prop_assert!((smean[i] - mean[i] - shift).abs() < 1e-9);
            prop_assert!((sstd[i] - std[i]).abs() < 1e-9);
            prop_assert!(std[i] >= 0.0);
        }
    }
}
