use proptest::prelude::*;

use pogd_ilc::cost::QuadCost;
use pogd_ilc::linalg::{
    weighted_mat_norm, weighted_project, weighted_vec_norm, BoxSet, Matrix, SpdMatrix, Vector,
};
use pogd_ilc::model::{lift, synth_slm_standin, LiftedModel};

fn spd(n: usize, entries: &[f64], floor: f64) -> SpdMatrix {
    let a = Matrix::from_column_slice(n, n, &entries[..n * n]);
    SpdMatrix::new(&a * a.transpose() + Matrix::identity(n, n) * floor).unwrap()
}

fn vector(n: usize, entries: &[f64]) -> Vector {
    Vector::from_column_slice(&entries[..n])
}

fn problem() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..7).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-1.0..1.0f64, n * n),
            prop::collection::vec(-4.0..4.0f64, n),
            prop::collection::vec(-4.0..4.0f64, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn projection_is_nonexpansive_and_idempotent((n, a, x, y) in problem()) {
        let w = spd(n, &a, 0.05);
        let set = BoxSet::uniform(n, -1.0, 1.5).unwrap();
        let (x, y) = (vector(n, &x), vector(n, &y));
        let px = weighted_project(&x, &set, &w).unwrap();
        let py = weighted_project(&y, &set, &w).unwrap();
        prop_assert!(set.contains(&px, 1e-12));
        let lhs = weighted_vec_norm(&(&px - &py), &w).unwrap();
        let rhs = weighted_vec_norm(&(&x - &y), &w).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-12);
        let ppx = weighted_project(&px, &set, &w).unwrap();
        prop_assert!((&ppx - &px).amax() <= 1e-10);
    }

    #[test]
    fn interior_points_project_to_themselves((n, a, x, _y) in problem()) {
        let w = spd(n, &a, 0.05);
        let set = BoxSet::uniform(n, -5.0, 5.0).unwrap();
        let x = vector(n, &x);
        let px = weighted_project(&x, &set, &w).unwrap();
        prop_assert!((&px - &x).amax() <= 1e-12);
    }

    #[test]
    fn weighted_norms_are_consistent((n, a, x, y) in problem()) {
        let p = spd(n, &a, 0.1);
        let x = vector(n, &x);
        let direct = x.dot(&(p.matrix() * &x)).sqrt();
        prop_assert!((weighted_vec_norm(&x, &p).unwrap() - direct).abs() <= 1e-10 * (1.0 + direct));
        // induced norm bounds the action on any vector
        let b = Matrix::from_fn(n, n, |i, j| y[(i + j) % n] * 0.3);
        let bx = weighted_vec_norm(&(&b * &x), &p).unwrap();
        let nb = weighted_mat_norm(&b, &p).unwrap();
        prop_assert!(bx <= nb * weighted_vec_norm(&x, &p).unwrap() * (1.0 + 1e-9) + 1e-12);
        let ident = weighted_mat_norm(&Matrix::identity(n, n), &p).unwrap();
        prop_assert!((ident - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences((n, a, x, y) in problem(), q in 0.1..10.0f64, rho in 0.0..1.0f64) {
        let m = LiftedModel::from_matrix(Matrix::from_fn(n, n, |i, j| {
            if i == j { 1.0 + a[i * n + j].abs() } else if i > j { a[i * n + j] } else { 0.0 }
        })).unwrap();
        let cost = QuadCost::new(
            m.clone(),
            m,
            vector(n, &y),
            SpdMatrix::scaled_identity(n, q).unwrap(),
            Matrix::identity(n, n) * rho,
        ).unwrap();
        let x = vector(n, &x);
        let g = cost.true_grad(&x).unwrap();
        let h = 1e-4;
        for i in 0..n {
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (cost.eval(&up).unwrap() - cost.eval(&down).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g.norm()));
        }
    }

    #[test]
    fn lifting_is_linear(seed in 0u64..50, horizon in 2usize..40, s in -3.0..3.0f64, t in -3.0..3.0f64) {
        let ss = synth_slm_standin(seed);
        let m = lift(&ss, horizon).unwrap();
        let u: Vec<f64> = (0..horizon).map(|i| (i as f64 * 0.37).sin()).collect();
        let v: Vec<f64> = (0..horizon).map(|i| (i as f64 * 0.11).cos()).collect();
        let combo: Vec<f64> = u.iter().zip(&v).map(|(a, b)| s * a + t * b).collect();
        let lifted = m.apply(&Vector::from_vec(combo.clone())).unwrap();
        let simulated = ss.simulate(&combo);
        let separate = m.apply(&Vector::from_vec(u)).unwrap() * s + m.apply(&Vector::from_vec(v)).unwrap() * t;
        for k in 0..horizon {
            prop_assert!((lifted[k] - simulated[k]).abs() <= 1e-9 * (1.0 + simulated[k].abs()));
            prop_assert!((lifted[k] - separate[k]).abs() <= 1e-9 * (1.0 + separate[k].abs()));
        }
    }
}
