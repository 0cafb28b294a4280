//! Problem abstraction and concrete instances: a bounded (possibly only
//! delta-monotone) operator over a Bregman geometry, plus a family of
//! Lipschitz convex inequality constraints.

pub mod rng;
pub mod spectral;

use crate::geometry::{EuclideanBall, Geometry};
use nalgebra::{DMatrix, DVector};
use rng::SplitMix64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

type PointFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),
}

/// Operator evaluator with its bound `L_F` and monotonicity slack `delta`
/// (`delta = 0` for monotone operators).
#[derive(Clone)]
pub struct OperatorSpec {
    eval: PointFn,
    /// `L_F` with `||F(x)||_* <= L_F` over the feasible set.
    pub bound: f64,
    /// Smallest known `delta >= 0` with `<F(x) - F(y), x - y> >= -delta`.
    pub monotonicity_slack: f64,
}

impl OperatorSpec {
    pub fn new<F>(eval: F, bound: f64) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        assert!(bound > 0.0, "operator bound must be positive");
        Self {
            eval: Arc::new(eval),
            bound,
            monotonicity_slack: 0.0,
        }
    }

    pub fn with_slack(mut self, delta: f64) -> Self {
        assert!(delta >= 0.0);
        self.monotonicity_slack = delta;
        self
    }

    pub fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.eval)(x)
    }

    /// Largest violation of `<F(x) - F(y), x - y> >= 0` over the given
    /// pairs; at most `monotonicity_slack` up to rounding.
    pub fn monotonicity_defect<'a, I>(&self, pairs: I) -> f64
    where
        I: IntoIterator<Item = (&'a DVector<f64>, &'a DVector<f64>)>,
    {
        let mut worst = 0.0_f64;
        for (x, y) in pairs {
            let inner = (self.value(x) - self.value(y)).dot(&(x - y));
            worst = worst.max(-inner);
        }
        worst
    }
}

/// One convex constraint: evaluator, subgradient selector, and Lipschitz
/// constant.
#[derive(Clone)]
pub struct Constraint {
    eval: ScalarFn,
    subgrad: PointFn,
    pub lipschitz: f64,
}

impl Constraint {
    pub fn new<E, S>(eval: E, subgrad: S, lipschitz: f64) -> Self
    where
        E: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        S: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        assert!(lipschitz > 0.0, "Lipschitz constant must be positive");
        Self {
            eval: Arc::new(eval),
            subgrad: Arc::new(subgrad),
            lipschitz,
        }
    }

    /// Affine constraint `g(x) = <a, x> - b` with the exact Lipschitz
    /// constant `||a||_2`.
    pub fn affine(a: DVector<f64>, b: f64) -> Self {
        let lipschitz = a.norm();
        let grad = a.clone();
        Self::new(move |x| a.dot(x) - b, move |_| grad.clone(), lipschitz)
    }
}

/// Family `g_i, i = 0..m`, treated by the solvers either through its max or
/// constraint-by-constraint. Indices are zero-based.
#[derive(Clone)]
pub struct ConstraintFamily {
    items: Vec<Constraint>,
}

impl ConstraintFamily {
    pub fn new(items: Vec<Constraint>) -> Self {
        assert!(!items.is_empty(), "constraint family cannot be empty");
        Self { items }
    }

    /// Single constant constraint `g = -1`; makes every point feasible for
    /// problems that carry no real functional constraints.
    pub fn trivial(dim: usize) -> Self {
        Self::new(vec![Constraint::new(
            |_| -1.0,
            move |_| DVector::zeros(dim),
            1.0,
        )])
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn value(&self, index: usize, x: &DVector<f64>) -> f64 {
        (self.items[index].eval)(x)
    }

    pub fn subgrad(&self, index: usize, x: &DVector<f64>) -> DVector<f64> {
        (self.items[index].subgrad)(x)
    }

    pub fn lipschitz(&self, index: usize) -> f64 {
        self.items[index].lipschitz
    }

    /// `M_g`, the largest per-constraint Lipschitz constant.
    pub fn max_lipschitz(&self) -> f64 {
        self.items
            .iter()
            .fold(0.0_f64, |acc, c| acc.max(c.lipschitz))
    }

    /// `(max_i g_i(x), argmax)`; ties resolve to the smallest index.
    pub fn eval_max(&self, x: &DVector<f64>) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut best_index = 0;
        for (i, c) in self.items.iter().enumerate() {
            let v = (c.eval)(x);
            if v > best {
                best = v;
                best_index = i;
            }
        }
        (best, best_index)
    }

    /// Subgradient of `max_i g_i` at `x`: the subgradient of the smallest
    /// maximizing index.
    pub fn subgradient_of_max(&self, x: &DVector<f64>) -> DVector<f64> {
        let (_, index) = self.eval_max(x);
        self.subgrad(index, x)
    }

    /// Smallest index with `g_i(x) > threshold`, if any.
    pub fn first_violating(&self, x: &DVector<f64>, threshold: f64) -> Option<usize> {
        self.items
            .iter()
            .position(|c| (c.eval)(x) > threshold)
    }

    /// All constraint values at `x`, in index order.
    pub fn values(&self, x: &DVector<f64>) -> Vec<f64> {
        self.items.iter().map(|c| (c.eval)(x)).collect()
    }
}

/// A variational inequality with functional constraints, ready to solve.
#[derive(Clone)]
pub struct VIProblem {
    pub geometry: Arc<dyn Geometry>,
    pub operator: OperatorSpec,
    pub constraints: ConstraintFamily,
    /// Known solution, when the generator has one. Used by tests and
    /// reporting only.
    pub witness: Option<DVector<f64>>,
}

impl VIProblem {
    pub fn new(
        geometry: Arc<dyn Geometry>,
        operator: OperatorSpec,
        constraints: ConstraintFamily,
    ) -> Self {
        Self {
            geometry,
            operator,
            constraints,
            witness: None,
        }
    }

    pub fn with_constraints(mut self, constraints: ConstraintFamily) -> Self {
        self.constraints = constraints;
        self
    }

    pub fn with_witness(mut self, witness: DVector<f64>) -> Self {
        self.witness = Some(witness);
        self
    }
}

/// Spec of a Harker-Pang operator instance `F(x) = K x + q` with
/// `K = A A^T + B + C` (`B` skew-symmetric, `C` nonnegative diagonal) on the
/// Euclidean unit ball.
#[derive(Debug, Clone)]
pub struct HpHardSpec {
    pub n: usize,
    pub seed: u64,
    /// Offset `q`; `None` means all zeros, for which the solution is the
    /// origin.
    pub q: Option<DVector<f64>>,
}

impl HpHardSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, q: None }
    }
}

/// Spec of a random affine constraint family `g_i(x) = <a_i, x> - b_i` with
/// all coefficients uniform in `[0, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearConstraintsSpec {
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

/// Builds the Harker-Pang instance. `A` entries are uniform on
/// `[0, n^{-1/2})` so that `||K||_2` stays of moderate size as the dimension
/// grows; `B = S - S^T` and `C` use entries uniform on `[0, 1)`.
///
/// The returned problem carries the trivial constraint family; attach real
/// constraints with [`VIProblem::with_constraints`]. The start is placed
/// away from the origin so that zero-offset instances do not begin at their
/// own solution.
pub fn generate_hphard(spec: &HpHardSpec) -> VIProblem {
    let n = spec.n;
    assert!(n >= 1);
    let scale = 1.0 / (n as f64).sqrt();
    let mut a_rng = SplitMix64::stream(spec.seed, "hphard-a");
    let a = DMatrix::from_fn(n, n, |_, _| a_rng.next_f64() * scale);
    let mut s_rng = SplitMix64::stream(spec.seed, "hphard-b");
    let s = DMatrix::from_fn(n, n, |_, _| s_rng.next_f64());
    let mut c_rng = SplitMix64::stream(spec.seed, "hphard-c");
    let c = DVector::from_fn(n, |_, _| c_rng.next_f64());

    let k = &a * a.transpose() + (&s - s.transpose()) + DMatrix::from_diagonal(&c);
    let q = spec.q.clone().unwrap_or_else(|| DVector::zeros(n));
    assert_eq!(q.len(), n, "offset dimension mismatch");

    let bound = spectral::spectral_norm(&k, spec.seed) + q.norm();
    let k_op = k.clone();
    let q_op = q.clone();
    let operator = OperatorSpec::new(move |x| &k_op * x + &q_op, bound);

    let start = DVector::from_element(n, 0.5 / (n as f64).sqrt());
    let geometry = Arc::new(EuclideanBall::with_start(DVector::zeros(n), 1.0, start));

    let mut problem = VIProblem::new(geometry, operator, ConstraintFamily::trivial(n));
    if q.iter().all(|&v| v == 0.0) {
        problem = problem.with_witness(DVector::zeros(n));
    }
    problem
}

/// Random affine constraints; `x = 0` is always feasible since every
/// `b_i >= 0`.
pub fn generate_linear_constraints(spec: &LinearConstraintsSpec) -> ConstraintFamily {
    assert!(spec.m >= 1 && spec.n >= 1);
    let mut rng = SplitMix64::stream(spec.seed, "linear-constraints");
    let mut items = Vec::with_capacity(spec.m);
    for _ in 0..spec.m {
        let a = DVector::from_fn(spec.n, |_, _| rng.next_f64());
        let b = rng.next_f64();
        items.push(Constraint::affine(a, b));
    }
    ConstraintFamily::new(items)
}

/// Harker-Pang instance with `m` random affine constraints sharing the seed.
pub fn hphard_instance(n: usize, m: usize, seed: u64) -> VIProblem {
    let problem = generate_hphard(&HpHardSpec::new(n, seed));
    if m == 0 {
        problem
    } else {
        let constraints = generate_linear_constraints(&LinearConstraintsSpec { m, n, seed });
        problem.with_constraints(constraints)
    }
}

/// Polynomial part of the forsaken-game objective.
fn forsaken_h_prime(t: f64) -> f64 {
    0.5 * t - 2.0 * t.powi(3) + t.powi(5)
}

const FORSAKEN_RADIUS: f64 = 1.2;

/// Largest `|h'|` on `[-r, r]`: checked at the boundary and at the interior
/// stationary points `t^2 = (6 ± sqrt(26)) / 10` of `h''`.
fn forsaken_h_prime_sup(r: f64) -> f64 {
    let disc = 26.0_f64.sqrt();
    let candidates = [
        r,
        ((6.0 + disc) / 10.0).sqrt(),
        ((6.0 - disc) / 10.0).sqrt(),
    ];
    candidates
        .iter()
        .filter(|t| **t <= r)
        .fold(0.0_f64, |acc, &t| acc.max(forsaken_h_prime(t).abs()))
}

/// The forsaken min-max game as a saddle-point operator with a single
/// ellipse constraint `x^2 + 4 y^2 <= 1`, over the Euclidean ball of radius
/// 1.2.
///
/// The operator is not globally monotone; the stored slack is the bound
/// `1.3 * D^2` obtained from the most negative curvature of `h` on the ball.
pub fn forsaken_problem() -> VIProblem {
    let r = FORSAKEN_RADIUS;
    let operator = OperatorSpec::new(
        |z: &DVector<f64>| {
            let (x, y) = (z[0], z[1]);
            DVector::from_vec(vec![
                y - 0.45 + forsaken_h_prime(x),
                -x + forsaken_h_prime(y),
            ])
        },
        {
            // Componentwise suprema over the ball, combined in l2.
            let h_sup = forsaken_h_prime_sup(r);
            let f1 = r + 0.45 + h_sup;
            let f2 = r + h_sup;
            (f1 * f1 + f2 * f2).sqrt()
        },
    )
    .with_slack(1.3 * (2.0 * r) * (2.0 * r));

    let constraint = Constraint::new(
        |z: &DVector<f64>| z[0] * z[0] + 4.0 * z[1] * z[1] - 1.0,
        |z: &DVector<f64>| DVector::from_vec(vec![2.0 * z[0], 8.0 * z[1]]),
        8.0 * r,
    );

    let geometry = Arc::new(EuclideanBall::new(DVector::zeros(2), r));
    VIProblem::new(geometry, operator, ConstraintFamily::new(vec![constraint]))
        .with_witness(DVector::from_vec(vec![0.08, 0.4]))
}

/// Adapts a convex minimization problem: `F = subgradient of f`.
pub fn wrap_minimization<G>(subgrad: G, bound: f64) -> OperatorSpec
where
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
{
    OperatorSpec::new(subgrad, bound)
}

/// Adapts a convex-concave saddle problem on `(u, v)` with `u` of length
/// `n_u`: `F(u, v) = (grad_u f, -grad_v f)`.
pub fn wrap_saddle<Gu, Gv>(grad_u: Gu, grad_v: Gv, n_u: usize, bound: f64) -> OperatorSpec
where
    Gu: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    Gv: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
{
    OperatorSpec::new(
        move |z: &DVector<f64>| {
            let gu = grad_u(z);
            let gv = grad_v(z);
            debug_assert_eq!(gu.len(), n_u);
            let mut out = DVector::zeros(gu.len() + gv.len());
            out.rows_mut(0, gu.len()).copy_from(&gu);
            out.rows_mut(gu.len(), gv.len()).copy_from(&(-gv));
            out
        },
        bound,
    )
}

/// Adapts a fixed-point problem for `T`: `F(x) = x - T(x)`.
pub fn wrap_fixed_point<T>(map: T, bound: f64) -> OperatorSpec
where
    T: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
{
    OperatorSpec::new(move |x: &DVector<f64>| x - map(x), bound)
}

/// Affine constraint coefficients for custom problem specs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineConstraintSpec {
    pub a: Vec<f64>,
    pub b: f64,
}

/// On-disk problem description consumed by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemSpec {
    Hphard {
        n: usize,
        m: usize,
        seed: u64,
    },
    Forsaken {},
    /// Linear operator `F(x) = K x + q` with affine constraints, over a
    /// Euclidean ball centered at the origin.
    Custom {
        n: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
        #[serde(default)]
        constraints: Vec<AffineConstraintSpec>,
        /// Starting point; defaults to the center.
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
}

fn default_radius() -> f64 {
    1.0
}

/// Materializes a [`ProblemSpec`].
pub fn build_problem(spec: &ProblemSpec) -> Result<VIProblem, ProblemError> {
    match spec {
        ProblemSpec::Hphard { n, m, seed } => {
            if *n < 1 {
                return Err(ProblemError::InvalidSpec("hphard needs n >= 1".into()));
            }
            Ok(hphard_instance(*n, *m, *seed))
        }
        ProblemSpec::Forsaken {} => Ok(forsaken_problem()),
        ProblemSpec::Custom {
            n,
            radius,
            matrix,
            offset,
            constraints,
            x0,
        } => build_custom(*n, *radius, matrix, offset.as_deref(), constraints, x0.as_deref()),
    }
}

fn build_custom(
    n: usize,
    radius: f64,
    matrix: &[Vec<f64>],
    offset: Option<&[f64]>,
    constraints: &[AffineConstraintSpec],
    x0: Option<&[f64]>,
) -> Result<VIProblem, ProblemError> {
    if n < 1 {
        return Err(ProblemError::InvalidSpec("custom needs n >= 1".into()));
    }
    if radius <= 0.0 {
        return Err(ProblemError::InvalidSpec("radius must be positive".into()));
    }
    if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
        return Err(ProblemError::InvalidSpec(format!(
            "matrix must be {n} x {n}"
        )));
    }
    let k = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
    let q = match offset {
        Some(values) => {
            if values.len() != n {
                return Err(ProblemError::InvalidSpec(format!(
                    "offset must have length {n}"
                )));
            }
            DVector::from_column_slice(values)
        }
        None => DVector::zeros(n),
    };

    let bound = spectral::spectral_norm(&k, 0) + q.norm();
    if bound == 0.0 {
        return Err(ProblemError::InvalidSpec(
            "operator is identically zero".into(),
        ));
    }
    let operator = OperatorSpec::new(move |x: &DVector<f64>| &k * x + &q, bound);

    let family = if constraints.is_empty() {
        ConstraintFamily::trivial(n)
    } else {
        let mut items = Vec::with_capacity(constraints.len());
        for c in constraints {
            if c.a.len() != n {
                return Err(ProblemError::InvalidSpec(format!(
                    "constraint coefficient vector must have length {n}"
                )));
            }
            if c.a.iter().all(|&v| v == 0.0) {
                return Err(ProblemError::InvalidSpec(
                    "constraint coefficients cannot all be zero".into(),
                ));
            }
            items.push(Constraint::affine(DVector::from_column_slice(&c.a), c.b));
        }
        ConstraintFamily::new(items)
    };

    let center = DVector::zeros(n);
    let geometry = match x0 {
        Some(values) => {
            if values.len() != n {
                return Err(ProblemError::InvalidSpec(format!(
                    "x0 must have length {n}"
                )));
            }
            let start = DVector::from_column_slice(values);
            if start.norm() >= radius {
                return Err(ProblemError::InvalidSpec(
                    "x0 must lie strictly inside the ball".into(),
                ));
            }
            Arc::new(EuclideanBall::with_start(center, radius, start))
        }
        None => Arc::new(EuclideanBall::new(center, radius)),
    };

    Ok(VIProblem::new(geometry, operator, family))
}
