use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::seed::rng_from;

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of Q sign-corrected by the diagonal of R.
pub fn random_rotation(dimension: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from(seed);
    let gaussian = DMatrix::from_fn(dimension, dimension, |_, _| {
        StandardNormal.sample(&mut rng)
    });
    let qr = gaussian.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dimension {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}
