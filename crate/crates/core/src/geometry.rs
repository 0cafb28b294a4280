//! Normed-space setup, prox functions, Bregman divergence, and the proximal
//! mapping operator used by every solver step.
//!
//! Two geometries ship with the crate, both with exact closed-form mirror
//! steps:
//!
//! * [`EuclideanBall`] — `psi = ||x||^2 / 2` over a Euclidean ball, the
//!   mirror step is a plain ball projection;
//! * [`EntropySimplex`] — negative entropy over the probability simplex,
//!   the mirror step is a multiplicative-weights update.

use nalgebra::DVector;
use thiserror::Error;

/// Points farther than this (in primal norm) from the feasible set are
/// rejected by domain checks.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Slack allowed when checking the first-order optimality of a mirror step.
pub const MIRROR_OPT_TOL: f64 = 1e-8;

/// Coordinates of the entropy update are clamped to this floor before
/// normalization, keeping logarithms finite.
pub const ENTROPY_CLAMP: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point lies outside the feasible set (defect {defect:.3e})")]
    OutsideDomain { defect: f64 },
    #[error("mirror step requires a positive step size, got {0}")]
    NonPositiveStep(f64),
    #[error("inner solve of the proximal mapping did not reach tolerance")]
    InnerSolveFailed,
}

/// A Bregman geometry: the norm pair, the strongly convex prox function,
/// and the feasible set with its radius constants.
///
/// Implementations must guarantee, for points of the feasible set:
///
/// * `bregman(x, y) >= strong_convexity() / 2 * primal_norm(x - y)^2`;
/// * `max_x V(x, x0) <= initial_radius_sq()` for `x0 = start()`;
/// * `max_{x,y} V(x, y) <= pairwise_radius_sq()`;
/// * `primal_norm(x - y) <= diameter()`.
pub trait Geometry: Send + Sync {
    fn dim(&self) -> usize;

    fn primal_norm(&self, x: &DVector<f64>) -> f64;

    /// Norm of the conjugate space, `||p||_* = max { <p, x> : ||x|| <= 1 }`.
    fn dual_norm(&self, p: &DVector<f64>) -> f64;

    /// Prox function value `psi(x)`.
    fn prox_value(&self, x: &DVector<f64>) -> f64;

    /// Gradient of the prox function.
    fn prox_grad(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Strong convexity modulus of the prox function w.r.t. the primal norm.
    fn strong_convexity(&self) -> f64;

    /// Membership test at tolerance [`MEMBERSHIP_TOL`].
    fn contains(&self, x: &DVector<f64>) -> bool;

    /// Diameter `D` of the feasible set in the primal norm.
    fn diameter(&self) -> f64;

    /// `R^2` with `max_x V(x, x0) <= R^2` for the starting point `x0`.
    fn initial_radius_sq(&self) -> f64;

    /// `theta^2` with `max_{x,y} V(x, y) <= theta^2` over the set.
    fn pairwise_radius_sq(&self) -> f64;

    /// Interior starting point `x0`.
    fn start(&self) -> DVector<f64>;

    /// Smallest axis-aligned box containing the set, as `(lower, upper)`.
    fn bounding_box(&self) -> (DVector<f64>, DVector<f64>);

    /// Closed-form `argmin_{u in Q} { <p, u> + V(u, x) }`. The caller has
    /// already validated `x`.
    fn mirror_step_raw(&self, x: &DVector<f64>, p: &DVector<f64>) -> DVector<f64>;

    /// Bregman divergence `V(x, y) = psi(x) - psi(y) - <grad psi(y), x - y>`.
    fn bregman(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64, GeometryError> {
        self.check_membership(x)?;
        self.check_membership(y)?;
        let diff = x - y;
        Ok(self.prox_value(x) - self.prox_value(y) - self.prox_grad(y).dot(&diff))
    }

    /// Proximal mapping step `Mirr_x(h * p)`.
    fn mirror_step(
        &self,
        x: &DVector<f64>,
        p: &DVector<f64>,
        h: f64,
    ) -> Result<DVector<f64>, GeometryError> {
        if h <= 0.0 {
            return Err(GeometryError::NonPositiveStep(h));
        }
        self.check_membership(x)?;
        Ok(self.mirror_step_raw(x, &(p * h)))
    }

    fn check_membership(&self, x: &DVector<f64>) -> Result<(), GeometryError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(GeometryError::OutsideDomain {
                defect: self.membership_defect(x),
            })
        }
    }

    /// Primal-norm distance-to-set estimate used in error reports.
    fn membership_defect(&self, x: &DVector<f64>) -> f64;
}

/// Euclidean geometry: `psi = ||x||_2^2 / 2` over a ball, self-dual norm.
///
/// The constants are tight closed forms: with radius `r` and start `x0`,
/// `R^2 = (r + ||x0 - c||)^2 / 2`, `D = 2r`, `theta^2 = 2 r^2`.
#[derive(Debug, Clone)]
pub struct EuclideanBall {
    center: DVector<f64>,
    radius: f64,
    start: DVector<f64>,
}

impl EuclideanBall {
    /// Ball with the start at its center.
    pub fn new(center: DVector<f64>, radius: f64) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        let start = center.clone();
        Self {
            center,
            radius,
            start,
        }
    }

    /// Unit ball centered at the origin.
    pub fn unit(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), 1.0)
    }

    /// Ball with an explicit interior starting point.
    pub fn with_start(center: DVector<f64>, radius: f64, start: DVector<f64>) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        assert!(
            (&start - &center).norm() < radius,
            "starting point must be interior"
        );
        Self {
            center,
            radius,
            start,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }
}

impl Geometry for EuclideanBall {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn primal_norm(&self, x: &DVector<f64>) -> f64 {
        x.norm()
    }

    fn dual_norm(&self, p: &DVector<f64>) -> f64 {
        p.norm()
    }

    fn prox_value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.norm_squared()
    }

    fn prox_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    fn strong_convexity(&self) -> f64 {
        1.0
    }

    fn contains(&self, x: &DVector<f64>) -> bool {
        self.membership_defect(x) <= MEMBERSHIP_TOL
    }

    fn membership_defect(&self, x: &DVector<f64>) -> f64 {
        ((x - &self.center).norm() - self.radius).max(0.0)
    }

    fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    fn initial_radius_sq(&self) -> f64 {
        let offset = (&self.start - &self.center).norm();
        let reach = self.radius + offset;
        0.5 * reach * reach
    }

    fn pairwise_radius_sq(&self) -> f64 {
        2.0 * self.radius * self.radius
    }

    fn start(&self) -> DVector<f64> {
        self.start.clone()
    }

    fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        let lo = self.center.map(|c| c - self.radius);
        let hi = self.center.map(|c| c + self.radius);
        (lo, hi)
    }

    fn mirror_step_raw(&self, x: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        let target = x - p;
        let offset = &target - &self.center;
        let dist = offset.norm();
        if dist <= self.radius {
            target
        } else {
            &self.center + offset * (self.radius / dist)
        }
    }
}

/// Entropy geometry: `psi = sum_i x_i ln x_i` over the probability simplex,
/// 1-strongly convex w.r.t. the l1 norm; the dual norm is l-infinity.
///
/// The mirror step is the multiplicative-weights update
/// `u_i ∝ x_i exp(-p_i)`.
#[derive(Debug, Clone)]
pub struct EntropySimplex {
    dim: usize,
}

impl EntropySimplex {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "simplex needs at least two coordinates");
        Self { dim }
    }
}

impl Geometry for EntropySimplex {
    fn dim(&self) -> usize {
        self.dim
    }

    fn primal_norm(&self, x: &DVector<f64>) -> f64 {
        x.iter().map(|v| v.abs()).sum()
    }

    fn dual_norm(&self, p: &DVector<f64>) -> f64 {
        p.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    fn prox_value(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
            .sum()
    }

    fn prox_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| 1.0 + v.max(ENTROPY_CLAMP).ln())
    }

    fn strong_convexity(&self) -> f64 {
        1.0
    }

    fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim && self.membership_defect(x) <= MEMBERSHIP_TOL
    }

    fn membership_defect(&self, x: &DVector<f64>) -> f64 {
        let negative: f64 = x.iter().map(|v| (-v).max(0.0)).sum();
        let sum_gap = (x.iter().sum::<f64>() - 1.0).abs();
        negative.max(sum_gap)
    }

    fn diameter(&self) -> f64 {
        2.0
    }

    fn initial_radius_sq(&self) -> f64 {
        (self.dim as f64).ln()
    }

    fn pairwise_radius_sq(&self) -> f64 {
        // KL(x, y) <= ln(1 / min_i y_i); valid for every point the clamped
        // update can produce.
        -ENTROPY_CLAMP.ln()
    }

    fn start(&self) -> DVector<f64> {
        DVector::from_element(self.dim, 1.0 / self.dim as f64)
    }

    fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        (
            DVector::zeros(self.dim),
            DVector::from_element(self.dim, 1.0),
        )
    }

    fn mirror_step_raw(&self, x: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        // Shift exponents so the largest is zero, then clamp and normalize.
        let shift = p.iter().fold(f64::INFINITY, |acc, &v| acc.min(v));
        let mut updated = DVector::zeros(self.dim);
        for i in 0..self.dim {
            let w = x[i].max(0.0) * (-(p[i] - shift)).exp();
            updated[i] = w.max(ENTROPY_CLAMP);
        }
        let total: f64 = updated.iter().sum();
        updated / total
    }
}

/// Checks the fundamental prox-mapping inequality for a convex function `f`:
/// with `z = Mirr_y(h * grad f(y))`,
///
/// `h (f(y) - f(x)) <= h^2/2 ||grad f(y)||_*^2 + V(x, y) - V(x, z)`
///
/// up to [`MIRROR_OPT_TOL`]. Test oracle; not used by the solvers.
pub fn verify_lemma1<F, G>(
    geom: &dyn Geometry,
    f_value: F,
    f_subgrad: G,
    y: &DVector<f64>,
    x: &DVector<f64>,
    h: f64,
) -> Result<bool, GeometryError>
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let grad = f_subgrad(y);
    let z = geom.mirror_step(y, &grad, h)?;
    let left = h * (f_value(y) - f_value(x));
    let dual = geom.dual_norm(&grad);
    let right = 0.5 * h * h * dual * dual + geom.bregman(x, y)? - geom.bregman(x, &z)?;
    Ok(left <= right + MIRROR_OPT_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_ball, sample_simplex};
    use crate::problems::rng::SplitMix64;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn bregman_vanishes_on_the_diagonal() {
        let ball = EuclideanBall::unit(2);
        let x = vec2(0.3, -0.1);
        assert_eq!(ball.bregman(&x, &x).unwrap(), 0.0);

        let simplex = EntropySimplex::new(3);
        let mut rng = SplitMix64::new(7);
        for _ in 0..50 {
            let p = sample_simplex(3, &mut rng);
            assert!(simplex.bregman(&p, &p).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn bregman_euclidean_is_half_squared_distance() {
        let ball = EuclideanBall::unit(2);
        let v = ball.bregman(&vec2(1.0, 0.0), &vec2(0.0, 0.0)).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bregman_entropy_is_kl_divergence() {
        let simplex = EntropySimplex::new(2);
        let x = vec2(0.5, 0.5);
        let y = vec2(0.25, 0.75);
        let v = simplex.bregman(&x, &y).unwrap();
        // Direct evaluation of sum x_i ln(x_i / y_i).
        let kl = 0.5 * (0.5_f64 / 0.25).ln() + 0.5 * (0.5_f64 / 0.75).ln();
        assert!((v - kl).abs() < 1e-12);
        assert!((v - 0.14384).abs() < 1e-5);
    }

    #[test]
    fn bregman_rejects_points_outside_the_set() {
        let ball = EuclideanBall::unit(2);
        let outside = vec2(1.5, 0.0);
        assert!(matches!(
            ball.bregman(&outside, &vec2(0.0, 0.0)),
            Err(GeometryError::OutsideDomain { .. })
        ));
        assert!(matches!(
            ball.mirror_step(&outside, &vec2(1.0, 0.0), 1.0),
            Err(GeometryError::OutsideDomain { .. })
        ));
    }

    #[test]
    fn mirror_step_fixed_point_at_zero_covector() {
        let ball = EuclideanBall::unit(2);
        let z = ball
            .mirror_step(&vec2(0.0, 0.0), &vec2(0.0, 0.0), 1.0)
            .unwrap();
        assert_eq!(z, vec2(0.0, 0.0));
    }

    #[test]
    fn mirror_step_projects_onto_the_ball() {
        let ball = EuclideanBall::unit(2);
        let z = ball
            .mirror_step(&vec2(0.0, 0.0), &vec2(2.0, 0.0), 1.0)
            .unwrap();
        assert!((z - vec2(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn mirror_step_multiplicative_update_on_the_simplex() {
        let simplex = EntropySimplex::new(2);
        let z = simplex
            .mirror_step(&vec2(0.5, 0.5), &vec2(3.0_f64.ln(), 0.0), 1.0)
            .unwrap();
        assert!((z[0] - 0.25).abs() < 1e-12);
        assert!((z[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn mirror_step_rejects_non_positive_step() {
        let ball = EuclideanBall::unit(2);
        assert!(matches!(
            ball.mirror_step(&vec2(0.0, 0.0), &vec2(1.0, 0.0), 0.0),
            Err(GeometryError::NonPositiveStep(_))
        ));
    }

    #[test]
    fn bregman_dominates_squared_norm() {
        // V(x, y) >= sigma/2 ||x - y||^2 on sampled pairs.
        let ball = EuclideanBall::new(vec2(0.2, -0.3), 1.5);
        let mut rng = SplitMix64::new(11);
        for _ in 0..1000 {
            let x = sample_ball(ball.center(), ball.radius(), &mut rng);
            let y = sample_ball(ball.center(), ball.radius(), &mut rng);
            let v = ball.bregman(&x, &y).unwrap();
            let lower = 0.5 * ball.strong_convexity() * (&x - &y).norm_squared();
            assert!(v >= lower - 1e-10);
        }

        let simplex = EntropySimplex::new(4);
        let mut rng = SplitMix64::new(12);
        for _ in 0..1000 {
            let x = sample_simplex(4, &mut rng);
            let y = sample_simplex(4, &mut rng);
            let v = simplex.bregman(&x, &y).unwrap();
            let d1 = simplex.primal_norm(&(&x - &y));
            assert!(v >= 0.5 * d1 * d1 - 1e-10);
        }
    }

    #[test]
    fn set_constants_bound_sampled_points() {
        let ball = EuclideanBall::with_start(DVector::zeros(3), 1.0, DVector::from_vec(vec![0.5, 0.0, 0.0]));
        let x0 = ball.start();
        let mut rng = SplitMix64::new(13);
        for _ in 0..500 {
            let x = sample_ball(ball.center(), ball.radius(), &mut rng);
            let y = sample_ball(ball.center(), ball.radius(), &mut rng);
            assert!(ball.bregman(&x, &x0).unwrap() <= ball.initial_radius_sq() + 1e-12);
            assert!(ball.bregman(&x, &y).unwrap() <= ball.pairwise_radius_sq() + 1e-12);
            assert!(ball.primal_norm(&(&x - &y)) <= ball.diameter() + 1e-12);
        }

        let simplex = EntropySimplex::new(5);
        let u = simplex.start();
        let mut rng = SplitMix64::new(14);
        for _ in 0..500 {
            let x = sample_simplex(5, &mut rng);
            let y = sample_simplex(5, &mut rng);
            assert!(simplex.bregman(&x, &u).unwrap() <= simplex.initial_radius_sq() + 1e-12);
            assert!(simplex.bregman(&x, &y).unwrap() <= simplex.pairwise_radius_sq());
            assert!(simplex.primal_norm(&(&x - &y)) <= simplex.diameter() + 1e-12);
        }
    }

    #[test]
    fn norm_pair_properties_hold_on_samples() {
        let ball = EuclideanBall::unit(3);
        let simplex = EntropySimplex::new(3);
        let mut rng = SplitMix64::new(15);
        for _ in 0..300 {
            let x = sample_ball(&DVector::zeros(3), 2.0, &mut rng);
            let y = sample_ball(&DVector::zeros(3), 2.0, &mut rng);
            let scale = rng.next_f64() * 4.0 - 2.0;
            for geom in [&ball as &dyn Geometry, &simplex as &dyn Geometry] {
                // Absolute homogeneity and the triangle inequality.
                let hx = geom.primal_norm(&(&x * scale));
                assert!((hx - scale.abs() * geom.primal_norm(&x)).abs() < 1e-12);
                let tri = geom.primal_norm(&(&x + &y));
                assert!(tri <= geom.primal_norm(&x) + geom.primal_norm(&y) + 1e-12);
                // Generalized Cauchy-Schwarz with the dual norm.
                let pairing = x.dot(&y).abs();
                assert!(pairing <= geom.dual_norm(&x) * geom.primal_norm(&y) + 1e-12);
            }
        }
    }

    #[test]
    fn mirror_step_output_stays_feasible() {
        let ball = EuclideanBall::new(vec2(0.1, 0.1), 0.8);
        let simplex = EntropySimplex::new(3);
        let mut rng = SplitMix64::new(16);
        for _ in 0..500 {
            let x = sample_ball(ball.center(), ball.radius(), &mut rng);
            let p = sample_ball(&DVector::zeros(2), 3.0, &mut rng);
            let h = rng.next_f64() * 2.0 + 1e-3;
            let z = ball.mirror_step(&x, &p, h).unwrap();
            assert!(ball.contains(&z));

            let xs = sample_simplex(3, &mut rng);
            let ps = sample_ball(&DVector::zeros(3), 3.0, &mut rng);
            let zs = simplex.mirror_step(&xs, &ps, h).unwrap();
            assert!(simplex.contains(&zs));
        }
    }

    #[test]
    fn mirror_step_matches_closed_form_ball_projection() {
        let ball = EuclideanBall::new(vec2(-0.2, 0.4), 1.3);
        let mut rng = SplitMix64::new(17);
        for _ in 0..500 {
            let x = sample_ball(ball.center(), ball.radius(), &mut rng);
            let p = sample_ball(&DVector::zeros(2), 5.0, &mut rng);
            let h = rng.next_f64() * 2.0 + 1e-3;
            let z = ball.mirror_step(&x, &p, h).unwrap();
            // Independent projection of x - h p onto the ball.
            let target = &x - &p * h;
            let offset = &target - ball.center();
            let expected = if offset.norm() <= ball.radius() {
                target
            } else {
                ball.center() + offset.normalize() * ball.radius()
            };
            assert!((z - expected).norm() < 1e-8);
        }
    }

    #[test]
    fn mirror_step_satisfies_first_order_optimality() {
        // <h p + grad psi(z) - grad psi(x), u - z> >= -tol for all u in Q.
        let ball = EuclideanBall::unit(2);
        let simplex = EntropySimplex::new(3);
        let mut rng = SplitMix64::new(18);
        for _ in 0..200 {
            let x = sample_ball(ball.center(), ball.radius(), &mut rng);
            let p = sample_ball(&DVector::zeros(2), 2.0, &mut rng);
            let h = rng.next_f64() + 1e-3;
            let z = ball.mirror_step(&x, &p, h).unwrap();
            let stationarity = &p * h + ball.prox_grad(&z) - ball.prox_grad(&x);
            for _ in 0..20 {
                let u = sample_ball(ball.center(), ball.radius(), &mut rng);
                assert!(stationarity.dot(&(&u - &z)) >= -MIRROR_OPT_TOL);
            }

            let xs = sample_simplex(3, &mut rng);
            let ps = sample_ball(&DVector::zeros(3), 2.0, &mut rng);
            let zs = simplex.mirror_step(&xs, &ps, h).unwrap();
            let stationarity = &ps * h + simplex.prox_grad(&zs) - simplex.prox_grad(&xs);
            for _ in 0..20 {
                let u = sample_simplex(3, &mut rng);
                assert!(stationarity.dot(&(&u - &zs)) >= -MIRROR_OPT_TOL);
            }
        }
    }

    #[test]
    fn lemma1_constant_function_is_tight() {
        let ball = EuclideanBall::unit(2);
        let ok = verify_lemma1(
            &ball,
            |_| 4.2,
            |_| DVector::zeros(2),
            &vec2(0.3, 0.2),
            &vec2(-0.5, 0.1),
            1.0,
        )
        .unwrap();
        assert!(ok);
    }

    #[test]
    fn lemma1_holds_for_random_linear_and_quadratic_functions() {
        let ball = EuclideanBall::unit(2);
        let mut rng = SplitMix64::new(19);
        for trial in 0..200 {
            let y = sample_ball(ball.center(), ball.radius(), &mut rng);
            let x = sample_ball(ball.center(), ball.radius(), &mut rng);
            let h = rng.next_f64() * 0.9 + 0.1;
            let ok = if trial % 2 == 0 {
                let c = sample_ball(&DVector::zeros(2), 2.0, &mut rng);
                let c_grad = c.clone();
                verify_lemma1(&ball, move |u| c.dot(u), move |_| c_grad.clone(), &y, &x, h)
            } else {
                verify_lemma1(
                    &ball,
                    |u| u.norm_squared(),
                    |u| u * 2.0,
                    &y,
                    &x,
                    h,
                )
            }
            .unwrap();
            assert!(ok, "prox inequality failed at trial {trial}");
        }
    }

    #[test]
    fn lemma1_holds_on_the_simplex() {
        let simplex = EntropySimplex::new(3);
        let mut rng = SplitMix64::new(20);
        for _ in 0..100 {
            let y = sample_simplex(3, &mut rng);
            let x = sample_simplex(3, &mut rng);
            let c = sample_ball(&DVector::zeros(3), 1.5, &mut rng);
            let c_grad = c.clone();
            let h = rng.next_f64() * 0.5 + 0.05;
            assert!(verify_lemma1(
                &simplex,
                move |u| c.dot(u),
                move |_| c_grad.clone(),
                &y,
                &x,
                h
            )
            .unwrap());
        }
    }
}
