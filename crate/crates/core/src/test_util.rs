use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-1, 1]`.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax()
}

/// Central differences of a scalar function of a matrix.
pub fn fd_gradient<F: Fn(&DMatrix<f64>) -> f64>(x: &DMatrix<f64>, f: F) -> DMatrix<f64> {
    let h = 1e-6;
    let mut probe = x.clone();
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let orig = probe[(i, j)];
        probe[(i, j)] = orig + h;
        let up = f(&probe);
        probe[(i, j)] = orig - h;
        let down = f(&probe);
        probe[(i, j)] = orig;
        (up - down) / (2.0 * h)
    })
}
