//! Mirror-descent state machine: seven step-size / stopping-rule variants
//! with productive / non-productive step switching, and a per-constraint
//! mode for problems with many functional constraints.
//!
//! An iteration is *productive* when the constraint value at the current
//! iterate is within the variant's threshold; the operator step is taken and
//! the iterate enters the averaged output. Otherwise the step follows a
//! constraint subgradient. Runs are deterministic.

use crate::certify;
use crate::geometry::GeometryError;
use crate::problems::VIProblem;
use nalgebra::DVector;
use thiserror::Error;

/// Norms at or below this are treated as vanishing by the adaptive rules.
pub const DEGENERATE_NORM_TOL: f64 = 1e-14;

/// Trace points are recorded only up to this dimension.
const TRACE_POINT_DIM: usize = 4;

/// The seven solver variants. They differ in the productivity threshold,
/// the two step sizes, and the stopping inequalities; see [`step_size`] and
/// [`check_stop`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Fixed steps `eps / L_F^2` and `eps / M_g^2`.
    A1,
    /// Fully adaptive steps `eps / ||v_k||_*^2`.
    A2,
    /// Adaptive operator steps, fixed constraint steps `eps / M_g`,
    /// threshold `eps * M_g`.
    A3,
    /// Steps `eps / ||F||_*` and `eps / ||grad g||_*^2`.
    A4,
    /// Steps `eps / ||F||_*` and `eps / M_g`, threshold `eps * M_g`.
    A5,
    /// Steps `eps / (M_g ||F||_*)` and `eps / M_g^2`.
    A6,
    /// Common step `theta (sum of squared norms)^{-1/2}`, plain-average
    /// output.
    A7,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::A1,
        Algorithm::A2,
        Algorithm::A3,
        Algorithm::A4,
        Algorithm::A5,
        Algorithm::A6,
        Algorithm::A7,
    ];

    pub fn index(self) -> u8 {
        match self {
            Algorithm::A1 => 1,
            Algorithm::A2 => 2,
            Algorithm::A3 => 3,
            Algorithm::A4 => 4,
            Algorithm::A5 => 5,
            Algorithm::A6 => 6,
            Algorithm::A7 => 7,
        }
    }

    pub fn from_index(index: u8) -> Option<Self> {
        Algorithm::ALL.get(index.checked_sub(1)? as usize).copied()
    }

    /// Variants 3 and 5 admit points with `g <= eps * M_g` as productive;
    /// the rest use the plain `eps` threshold.
    pub fn scaled_threshold(self) -> bool {
        matches!(self, Algorithm::A3 | Algorithm::A5)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "algorithm {}", self.index())
    }
}

/// Which of the two stopping inequalities terminates the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    One,
    Two,
}

impl Criterion {
    pub fn index(self) -> u8 {
        match self {
            Criterion::One => 1,
            Criterion::Two => 2,
        }
    }

    pub fn from_index(index: u8) -> Option<Self> {
        match index {
            1 => Some(Criterion::One),
            2 => Some(Criterion::Two),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub criterion: Criterion,
    /// Target accuracy; drives both the step sizes and the thresholds.
    pub eps: f64,
    /// Monotonicity slack of the operator oracle; only widens the reported
    /// guarantee, never changes the iterates.
    pub delta: f64,
    /// Iteration budget. `None` resolves to ten times the
    /// criterion-2 worst-case count for the instance.
    pub max_iter: Option<u64>,
    /// Switch on first-violated-constraint stepping instead of stepping
    /// along the subgradient of the max.
    pub many_constraints: bool,
    /// Record every s-th iterate (plus the final one) in the trace.
    pub trace_every: Option<u64>,
    /// Run the full budget and ignore the stopping inequalities; used by
    /// trajectory experiments.
    pub fixed_budget: bool,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, criterion: Criterion, eps: f64) -> Self {
        Self {
            algorithm,
            criterion,
            eps,
            delta: 0.0,
            max_iter: None,
            many_constraints: false,
            trace_every: None,
            fixed_budget: false,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_max_iter(mut self, max_iter: u64) -> Self {
        self.max_iter = Some(max_iter);
        self
    }

    pub fn with_many_constraints(mut self) -> Self {
        self.many_constraints = true;
        self
    }

    pub fn with_trace_every(mut self, stride: u64) -> Self {
        self.trace_every = Some(stride);
        self
    }

    pub fn with_fixed_budget(mut self) -> Self {
        self.fixed_budget = true;
        self
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Criterion1,
    Criterion2,
    MaxIter,
    /// A violated constraint produced a vanishing subgradient, which
    /// contradicts convexity; the run cannot continue meaningfully.
    DegenerateOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Productive,
    NonProductive,
}

/// One recorded iterate. `g_value` is the constraint value that decided the
/// step kind, `norm_used` the dual norm of the step direction, and `point`
/// the iterate itself for low-dimensional problems.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub iter: u64,
    pub kind: StepKind,
    pub g_value: f64,
    pub norm_used: f64,
    pub step_size: f64,
    pub point: Option<Vec<f64>>,
}

/// Instance constants shared by the step rules, the stopping inequalities,
/// and the certificates.
#[derive(Debug, Clone, Copy)]
pub struct Constants {
    pub eps: f64,
    pub l_f: f64,
    pub m_g: f64,
    pub diameter: f64,
    pub r_sq: f64,
    pub theta_sq: f64,
}

impl Constants {
    pub fn for_run(problem: &VIProblem, eps: f64) -> Self {
        Self {
            eps,
            l_f: problem.operator.bound,
            m_g: problem.constraints.max_lipschitz(),
            diameter: problem.geometry.diameter(),
            r_sq: problem.geometry.initial_radius_sq(),
            theta_sq: problem.geometry.pairwise_radius_sq(),
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta_sq.sqrt()
    }
}

/// Running state of a solve. `sum_wf` / `sum_wx` accumulate the output
/// weights (`h_i^F` for variants 1-6, `1` for variant 7) and the weighted
/// productive iterates. The inverse-square sums back the adaptive stopping
/// inequalities; on a degenerate productive step they grow by `h / eps`,
/// the value implied by the substituted weight.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub k: u64,
    pub x: DVector<f64>,
    pub i_count: u64,
    pub j_count: u64,
    pub sum_wf: f64,
    pub sum_wx: DVector<f64>,
    /// `sum over productive i of 1 / ||F(x_i)||_*^2`.
    pub sum_inv_f2: f64,
    /// `sum over non-productive i of 1 / ||grad g(x_i)||_*^2`.
    pub sum_inv_g2: f64,
    /// `sum over all steps of 1 / M_i^2`.
    pub sum_inv_m2: f64,
    /// `sum over all steps of M_i^2` (variant 7).
    pub sum_m2: f64,
    last_productive_h: Option<f64>,
    pub trace: Vec<TraceRecord>,
}

impl SolverState {
    fn new(x0: DVector<f64>) -> Self {
        let dim = x0.len();
        Self {
            k: 0,
            x: x0,
            i_count: 0,
            j_count: 0,
            sum_wf: 0.0,
            sum_wx: DVector::zeros(dim),
            sum_inv_f2: 0.0,
            sum_inv_g2: 0.0,
            sum_inv_m2: 0.0,
            sum_m2: 0.0,
            last_productive_h: None,
            trace: Vec::new(),
        }
    }
}

/// Final accumulator values carried into the result for certificates and
/// diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct FinalSums {
    pub sum_wf: f64,
    pub sum_inv_f2: f64,
    pub sum_inv_g2: f64,
    pub sum_inv_m2: f64,
    pub sum_m2: f64,
}

/// Output of a solve.
#[derive(Debug, Clone)]
pub struct RunResult {
    /// Weighted average of the productive iterates (plain average for
    /// variant 7).
    pub x_hat: DVector<f64>,
    pub i_count: u64,
    pub j_count: u64,
    pub iterations: u64,
    pub termination: Termination,
    /// Guarantee on `<F(x), x_hat - x>` over the set; `None` when the run
    /// ended without a criterion firing.
    pub certified_bound: Option<f64>,
    /// Per-constraint values at `x_hat`.
    pub feasibility: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    pub sums: FinalSums,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no productive steps after {iterations} iterations; the averaged output is undefined")]
    NoProductiveSteps { iterations: u64 },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Signals that an adaptive step rule received a vanishing norm (or, for
/// variant 7, an empty norm history).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("degenerate operator norm in an adaptive step rule")]
pub struct DegenerateNorm;

/// Productivity threshold: `eps * M_g` for variants 3 and 5, `eps`
/// otherwise.
pub fn productivity_threshold(algorithm: Algorithm, eps: f64, m_g: f64) -> f64 {
    if algorithm.scaled_threshold() {
        eps * m_g
    } else {
        eps
    }
}

/// Whether a step at constraint value `g_value` is productive. The
/// inequality is non-strict: boundary points count as productive.
pub fn productivity_test(algorithm: Algorithm, eps: f64, m_g: f64, g_value: f64) -> bool {
    g_value <= productivity_threshold(algorithm, eps, m_g)
}

/// Step size for the given variant and step kind. `current_norm` is the
/// dual norm of the step direction; `sum_m2` must already include the
/// current squared norm (variant 7 sums over `t <= k`).
pub fn step_size(
    algorithm: Algorithm,
    role: StepKind,
    eps: f64,
    l_f: f64,
    m_g: f64,
    theta: f64,
    current_norm: f64,
    sum_m2: f64,
) -> Result<f64, DegenerateNorm> {
    let adaptive = |value: f64| {
        if current_norm <= DEGENERATE_NORM_TOL {
            Err(DegenerateNorm)
        } else {
            Ok(value)
        }
    };
    match (algorithm, role) {
        (Algorithm::A1, StepKind::Productive) => Ok(eps / (l_f * l_f)),
        (Algorithm::A1, StepKind::NonProductive) => Ok(eps / (m_g * m_g)),
        (Algorithm::A2, _) => adaptive(eps / (current_norm * current_norm)),
        (Algorithm::A3, StepKind::Productive) => adaptive(eps / (current_norm * current_norm)),
        (Algorithm::A3, StepKind::NonProductive) => Ok(eps / m_g),
        (Algorithm::A4, _) | (Algorithm::A5, StepKind::Productive) => {
            let value = match role {
                StepKind::Productive => eps / current_norm,
                StepKind::NonProductive => eps / (current_norm * current_norm),
            };
            adaptive(value)
        }
        (Algorithm::A5, StepKind::NonProductive) => Ok(eps / m_g),
        (Algorithm::A6, StepKind::Productive) => adaptive(eps / (m_g * current_norm)),
        (Algorithm::A6, StepKind::NonProductive) => Ok(eps / (m_g * m_g)),
        (Algorithm::A7, _) => {
            if sum_m2 > 0.0 {
                Ok(theta / sum_m2.sqrt())
            } else {
                Err(DegenerateNorm)
            }
        }
    }
}

/// Evaluates the stopping inequality for the variant / criterion pair on
/// the current accumulators.
///
/// Criterion 1 yields the sharper guarantee but subtracts a term
/// proportional to the non-productive count, so it is not guaranteed to
/// fire; every run therefore carries an iteration budget. Variant 7 stops
/// once `eps k >= 2 theta (sum M_t^2)^{1/2} (+ |J| M_g D)`, the form under
/// which its guarantee is provable.
pub fn check_stop(
    algorithm: Algorithm,
    criterion: Criterion,
    state: &SolverState,
    constants: &Constants,
) -> bool {
    let eps = constants.eps;
    let half_eps_sq = 0.5 * eps * eps;
    let (l_f, m_g, d) = (constants.l_f, constants.m_g, constants.diameter);
    let i = state.i_count as f64;
    let j = state.j_count as f64;
    let rhs = match (algorithm, criterion) {
        (Algorithm::A1, crit) => {
            let gain = half_eps_sq * i / (l_f * l_f) + half_eps_sq * j / (m_g * m_g);
            match crit {
                Criterion::One => gain - eps * d * j / m_g,
                Criterion::Two => gain,
            }
        }
        (Algorithm::A2, crit) => {
            let gain = half_eps_sq * state.sum_inv_m2;
            match crit {
                Criterion::One => gain - m_g * d * eps * state.sum_inv_g2,
                Criterion::Two => gain,
            }
        }
        (Algorithm::A3, crit) => {
            let gain = half_eps_sq * state.sum_inv_f2 + half_eps_sq * j;
            match crit {
                Criterion::One => gain - eps * d * j,
                Criterion::Two => gain,
            }
        }
        (Algorithm::A4, Criterion::One) => {
            half_eps_sq * i + (half_eps_sq - eps * m_g * d) * state.sum_inv_g2
        }
        (Algorithm::A4, Criterion::Two) => half_eps_sq * (i + state.sum_inv_g2),
        (Algorithm::A5, crit) => {
            let gain = half_eps_sq * (i + j);
            match crit {
                Criterion::One => gain - eps * d * j,
                Criterion::Two => gain,
            }
        }
        (Algorithm::A6, crit) => {
            let gain = half_eps_sq * (i + j) / (m_g * m_g);
            match crit {
                Criterion::One => gain - eps * d * j / m_g,
                Criterion::Two => gain,
            }
        }
        (Algorithm::A7, crit) => {
            let lhs = eps * state.k as f64;
            let needed = 2.0 * constants.theta() * state.sum_m2.sqrt();
            return match crit {
                Criterion::One => lhs >= needed + j * m_g * d,
                Criterion::Two => lhs >= needed,
            };
        }
    };
    constants.r_sq <= rhs
}

/// Worst-case iteration count under criterion 2.
pub fn criterion2_cap(algorithm: Algorithm, constants: &Constants) -> u64 {
    let eps_sq = constants.eps * constants.eps;
    let l_sq = constants.l_f * constants.l_f;
    let m_sq = constants.m_g * constants.m_g;
    let bound = match algorithm {
        Algorithm::A1 | Algorithm::A2 => 2.0 * constants.r_sq * l_sq.max(m_sq) / eps_sq,
        Algorithm::A3 => 2.0 * constants.r_sq * l_sq.max(1.0) / eps_sq,
        Algorithm::A4 => 2.0 * constants.r_sq * m_sq.max(1.0) / eps_sq,
        Algorithm::A5 => 2.0 * constants.r_sq / eps_sq,
        Algorithm::A6 => 2.0 * constants.r_sq * m_sq / eps_sq,
        Algorithm::A7 => 4.0 * constants.theta_sq * l_sq.max(m_sq) / eps_sq,
    };
    if bound >= u64::MAX as f64 {
        u64::MAX
    } else {
        bound.ceil() as u64
    }
}

/// Default iteration budget: ten times the criterion-2 worst case.
pub fn default_max_iter(algorithm: Algorithm, constants: &Constants) -> u64 {
    criterion2_cap(algorithm, constants).saturating_mul(10).max(1)
}

struct Decision {
    kind: StepKind,
    g_value: f64,
    direction: DVector<f64>,
    norm: f64,
    h: f64,
    degenerate: bool,
}

enum DecisionOutcome {
    Step(Decision),
    DegenerateSubgradient { g_value: f64, norm: f64 },
}

fn decide(
    problem: &VIProblem,
    algorithm: Algorithm,
    per_constraint: bool,
    threshold: f64,
    constants: &Constants,
    state: &SolverState,
) -> DecisionOutcome {
    let x = &state.x;
    // Pick the constraint view: max over the family, or first violator.
    let (g_value, productive, violator) = if per_constraint {
        let mut max_value = f64::NEG_INFINITY;
        let mut violator = None;
        for index in 0..problem.constraints.len() {
            let value = problem.constraints.value(index, x);
            max_value = max_value.max(value);
            if value > threshold {
                violator = Some((index, value));
                break;
            }
        }
        match violator {
            Some((index, value)) => (value, false, Some(index)),
            None => (max_value, true, None),
        }
    } else {
        let (value, index) = problem.constraints.eval_max(x);
        (value, value <= threshold, Some(index))
    };

    let eps = constants.eps;
    if productive {
        let direction = problem.operator.value(x);
        let norm = problem.geometry.dual_norm(&direction);
        let degenerate = norm <= DEGENERATE_NORM_TOL;
        let h = match step_size(
            algorithm,
            StepKind::Productive,
            eps,
            constants.l_f,
            constants.m_g,
            constants.theta(),
            norm,
            state.sum_m2 + norm * norm,
        ) {
            Ok(h) => h,
            // Vanishing operator norm: the point is stationary. Keep it as
            // a productive iterate with the previous weight.
            Err(DegenerateNorm) => state
                .last_productive_h
                .unwrap_or(eps / (constants.l_f * constants.l_f)),
        };
        DecisionOutcome::Step(Decision {
            kind: StepKind::Productive,
            g_value,
            direction,
            norm,
            h,
            degenerate,
        })
    } else {
        let index = violator.expect("non-productive step always has an index");
        let direction = problem.constraints.subgrad(index, x);
        let norm = problem.geometry.dual_norm(&direction);
        if norm <= DEGENERATE_NORM_TOL {
            // A zero subgradient with g > threshold > 0 >= g(x_*)
            // contradicts convexity.
            return DecisionOutcome::DegenerateSubgradient { g_value, norm };
        }
        let h = step_size(
            algorithm,
            StepKind::NonProductive,
            eps,
            constants.l_f,
            constants.m_g,
            constants.theta(),
            norm,
            state.sum_m2 + norm * norm,
        )
        .expect("non-productive rules only divide by the checked norm");
        DecisionOutcome::Step(Decision {
            kind: StepKind::NonProductive,
            g_value,
            direction,
            norm,
            h,
            degenerate: false,
        })
    }
}

/// Runs the configured variant on the problem.
///
/// Dispatches to the per-constraint mode when
/// `config.many_constraints` is set.
pub fn solve(problem: &VIProblem, config: &SolverConfig) -> Result<RunResult, SolveError> {
    run(problem, config, config.many_constraints)
}

/// Per-constraint mode: a step is productive only when every constraint is
/// within the threshold; otherwise the step follows the subgradient of the
/// first violated constraint. With a single constraint this coincides with
/// [`solve`] exactly.
pub fn solve_many_constraints(
    problem: &VIProblem,
    config: &SolverConfig,
) -> Result<RunResult, SolveError> {
    if !config.many_constraints {
        return Err(SolveError::BadConfig(
            "solve_many_constraints requires config.many_constraints".into(),
        ));
    }
    run(problem, config, true)
}

fn run(
    problem: &VIProblem,
    config: &SolverConfig,
    per_constraint: bool,
) -> Result<RunResult, SolveError> {
    if !(config.eps > 0.0) {
        return Err(SolveError::BadConfig("eps must be positive".into()));
    }
    if config.delta < 0.0 {
        return Err(SolveError::BadConfig("delta must be nonnegative".into()));
    }
    if config.max_iter == Some(0) {
        return Err(SolveError::BadConfig("max_iter must be at least 1".into()));
    }

    let constants = Constants::for_run(problem, config.eps);
    let algorithm = config.algorithm;
    let threshold = productivity_threshold(algorithm, config.eps, constants.m_g);
    let max_iter = config
        .max_iter
        .unwrap_or_else(|| default_max_iter(algorithm, &constants));
    let trace_stride = config.trace_every.filter(|&s| s > 0);

    let mut state = SolverState::new(problem.geometry.start());
    let record_points = problem.geometry.dim() <= TRACE_POINT_DIM;

    let termination = loop {
        if state.k >= max_iter {
            break Termination::MaxIter;
        }
        let decision = match decide(problem, algorithm, per_constraint, threshold, &constants, &state)
        {
            DecisionOutcome::Step(d) => d,
            DecisionOutcome::DegenerateSubgradient { .. } => break Termination::DegenerateOperator,
        };
        if let Some(stride) = trace_stride {
            if state.k % stride == 0 {
                state.trace.push(trace_record(&decision, &state, record_points));
            }
        }
        apply(problem, algorithm, &constants, &mut state, &decision)?;
        debug_assert!(problem.geometry.contains(&state.x));
        debug_assert_eq!(state.i_count + state.j_count, state.k);
        if !config.fixed_budget && check_stop(algorithm, config.criterion, &state, &constants) {
            break match config.criterion {
                Criterion::One => Termination::Criterion1,
                Criterion::Two => Termination::Criterion2,
            };
        }
    };

    if trace_stride.is_some() {
        // Terminal iterate: record the step it would take.
        let record = match decide(problem, algorithm, per_constraint, threshold, &constants, &state)
        {
            DecisionOutcome::Step(d) => trace_record(&d, &state, record_points),
            DecisionOutcome::DegenerateSubgradient { g_value, norm } => TraceRecord {
                iter: state.k,
                kind: StepKind::NonProductive,
                g_value,
                norm_used: norm,
                step_size: 0.0,
                point: record_points.then(|| state.x.iter().copied().collect()),
            },
        };
        state.trace.push(record);
    }

    if state.i_count == 0 {
        return Err(SolveError::NoProductiveSteps {
            iterations: state.k,
        });
    }

    let x_hat = &state.sum_wx / state.sum_wf;
    let feasibility = problem.constraints.values(&x_hat);
    let mut result = RunResult {
        x_hat,
        i_count: state.i_count,
        j_count: state.j_count,
        iterations: state.k,
        termination,
        certified_bound: None,
        feasibility,
        trace: std::mem::take(&mut state.trace),
        sums: FinalSums {
            sum_wf: state.sum_wf,
            sum_inv_f2: state.sum_inv_f2,
            sum_inv_g2: state.sum_inv_g2,
            sum_inv_m2: state.sum_inv_m2,
            sum_m2: state.sum_m2,
        },
    };
    result.certified_bound = certify::certificate(&result, problem, config)
        .ok()
        .map(|c| c.gap_bound);
    Ok(result)
}

fn apply(
    problem: &VIProblem,
    algorithm: Algorithm,
    constants: &Constants,
    state: &mut SolverState,
    decision: &Decision,
) -> Result<(), SolveError> {
    match decision.kind {
        StepKind::Productive => {
            let weight = if algorithm == Algorithm::A7 {
                1.0
            } else {
                decision.h
            };
            state.sum_wf += weight;
            state.sum_wx += &state.x * weight;
            state.i_count += 1;
            let inv_sq = if decision.degenerate {
                decision.h / constants.eps
            } else {
                1.0 / (decision.norm * decision.norm)
            };
            state.sum_inv_f2 += inv_sq;
            state.sum_inv_m2 += inv_sq;
            state.last_productive_h = Some(decision.h);
        }
        StepKind::NonProductive => {
            state.j_count += 1;
            let inv_sq = 1.0 / (decision.norm * decision.norm);
            state.sum_inv_g2 += inv_sq;
            state.sum_inv_m2 += inv_sq;
        }
    }
    state.sum_m2 += decision.norm * decision.norm;
    state.x = problem
        .geometry
        .mirror_step(&state.x, &decision.direction, decision.h)?;
    state.k += 1;
    Ok(())
}

fn trace_record(decision: &Decision, state: &SolverState, record_points: bool) -> TraceRecord {
    TraceRecord {
        iter: state.k,
        kind: decision.kind,
        g_value: decision.g_value,
        norm_used: decision.norm,
        step_size: decision.h,
        point: record_points.then(|| state.x.iter().copied().collect()),
    }
}
