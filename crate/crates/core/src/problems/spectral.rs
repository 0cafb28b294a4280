//! Spectral norm by power iteration on `K^T K`.

use super::rng::SplitMix64;
use nalgebra::DMatrix;

const REL_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 1000;

/// Largest singular value of `m`, to relative tolerance `1e-6`.
///
/// The Rayleigh-quotient estimate approaches the true norm from below, so
/// the converged value is inflated by ten times the tolerance to keep it a
/// valid upper bound on `||m x|| / ||x||`.
pub fn spectral_norm(m: &DMatrix<f64>, seed: u64) -> f64 {
    let n = m.ncols();
    if n == 0 || m.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let mut rng = SplitMix64::stream(seed, "power-iteration");
    let mut v = nalgebra::DVector::from_fn(n, |_, _| rng.next_f64() + 0.5);
    v /= v.norm();

    let mut sigma = 0.0_f64;
    for _ in 0..MAX_ITERS {
        let w = m.tr_mul(&(m * &v));
        let lambda = w.norm();
        if lambda == 0.0 {
            return 0.0;
        }
        let next = lambda.sqrt();
        let done = (next - sigma).abs() <= REL_TOL * next;
        sigma = next;
        v = w / lambda;
        if done {
            break;
        }
    }
    sigma * (1.0 + 10.0 * REL_TOL)
}
