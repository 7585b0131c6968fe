//! Dense `f64` linear algebra with hand-written backward passes and a
//! finite-difference oracle for checking them.

mod matrix;
mod ops;
mod tape;

pub use matrix::{dot, matmul_backward, norm, Matrix};
pub use ops::{
    cosine_similarity, cosine_similarity_grad, l2_distance, l2_distance_grad, log_softmax,
    log_sum_exp, softmax, softmax_backward,
};
pub use tape::{fd_gradient, ParamTape};

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-3.0f64..3.0, rows * cols)
            .prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
    }

    proptest! {
        #[test]
        fn matmul_is_associative(
            (a, b, c) in (1usize..6, 1usize..6, 1usize..6, 1usize..6)
                .prop_flat_map(|(m, n, p, q)| (matrix(m, n), matrix(n, p), matrix(p, q)))
        ) {
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.norm().max(1.0);
            prop_assert!(left.max_abs_diff(&right) <= 1e-9 * scale);
        }
    }
}
