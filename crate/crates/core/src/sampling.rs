//! Deterministic point samplers used by property tests and diagnostics.

use crate::problems::rng::SplitMix64;
use nalgebra::DVector;

/// Uniform sample from a Euclidean ball: gaussian direction scaled by
/// `radius * u^(1/n)`.
pub fn sample_ball(center: &DVector<f64>, radius: f64, rng: &mut SplitMix64) -> DVector<f64> {
    let n = center.len();
    let mut dir = DVector::zeros(n);
    let mut i = 0;
    while i < n {
        let (a, b) = gaussian_pair(rng);
        dir[i] = a;
        if i + 1 < n {
            dir[i + 1] = b;
        }
        i += 2;
    }
    let norm = dir.norm();
    if norm == 0.0 {
        return center.clone();
    }
    let scale = radius * rng.next_f64().powf(1.0 / n as f64);
    center + dir * (scale / norm)
}

/// Sample from the interior of the probability simplex via normalized
/// exponentials.
pub fn sample_simplex(n: usize, rng: &mut SplitMix64) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    for i in 0..n {
        v[i] = -(1.0 - rng.next_f64()).ln();
    }
    let total: f64 = v.iter().sum();
    v / total
}

fn gaussian_pair(rng: &mut SplitMix64) -> (f64, f64) {
    let u1 = 1.0 - rng.next_f64(); // in (0, 1], safe for ln
    let u2 = rng.next_f64();
    let r = (-2.0 * u1.ln()).sqrt();
    let angle = std::f64::consts::TAU * u2;
    (r * angle.cos(), r * angle.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_samples_stay_inside() {
        let center = DVector::from_vec(vec![0.5, -0.5, 0.0]);
        let mut rng = SplitMix64::new(1);
        for _ in 0..200 {
            let x = sample_ball(&center, 2.0, &mut rng);
            assert!((x - &center).norm() <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn simplex_samples_are_distributions() {
        let mut rng = SplitMix64::new(2);
        for _ in 0..200 {
            let x = sample_simplex(4, &mut rng);
            assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(x.iter().all(|&v| v > 0.0));
        }
    }
}
