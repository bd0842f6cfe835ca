use nalgebra::DMatrix;
use proptest::prelude::*;
use qadapt::quantum::{layer_unary_matrix, pyramid_layout};
use qadapt::adapter::direct_sum;
use qadapt::{cayley, compound, MinorOp};

fn matrix(n: usize, values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, &values[..n * n])
}

fn comp(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    compound(a, k, MinorOp::Comp).unwrap().entries
}

proptest! {
    #[test]
    fn cauchy_binet(n in 2usize..6, k in 1usize..4, a in prop::collection::vec(-1.0f64..1.0, 36), b in prop::collection::vec(-1.0f64..1.0, 36)) {
        prop_assume!(k <= n);
        let (a, b) = (matrix(n, &a), matrix(n, &b));
        let err = (comp(&(&a * &b), k) - comp(&a, k) * comp(&b, k)).amax();
        prop_assert!(err < 1e-12);
    }

    // The second compound of diag(1, B) is diag(B, C2(B)) in lexicographic
    // order: a C2-only block of size n + 1 contains every C1+C2 block of size n.
    #[test]
    fn second_compound_embeds_first_plus_second(n in 2usize..6, p in prop::collection::vec(-1.0f64..1.0, 25)) {
        let b = cayley(&matrix(n, &p)).unwrap();
        let mut lifted = DMatrix::identity(n + 1, n + 1);
        lifted.view_mut((1, 1), (n, n)).copy_from(&b);
        let want = direct_sum(&[b.clone(), comp(&b, 2)]);
        prop_assert!((comp(&lifted, 2) - want).amax() < 1e-12);
    }

    #[test]
    fn compound_of_transpose(n in 2usize..6, k in 1usize..4, a in prop::collection::vec(-1.0f64..1.0, 36)) {
        prop_assume!(k <= n);
        let a = matrix(n, &a);
        prop_assert!((comp(&a.transpose(), k) - comp(&a, k).transpose()).amax() < 1e-12);
    }
}

#[test]
fn pyramid_unary_matrices_are_rotations() {
    for n in 2..=7 {
        let layout = pyramid_layout(n).unwrap();
        let theta: Vec<f64> = (0..layout.num_angles()).map(|i| 0.3 + 0.17 * i as f64).collect();
        let w = layer_unary_matrix(&layout, &theta).unwrap();
        assert!((w.transpose() * &w - DMatrix::identity(n, n)).amax() < 1e-13);
        assert!((w.determinant() - 1.0).abs() < 1e-12);
    }
}
