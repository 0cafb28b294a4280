//! A-priori accuracy guarantees for finished runs, plus brute-force
//! verification oracles for low-dimensional instances.
//!
//! Each (variant, criterion) pair certifies a bound on the gap
//! `sup_{x in Q} <F(x), x_hat - x>`. Criterion 1 yields the clean
//! epsilon-order bound; criterion 2 adds an excess term driven by the
//! non-productive steps. A delta-monotone operator shifts every bound up by
//! exactly `delta`.

use crate::problems::VIProblem;
use crate::solvers::{Algorithm, Criterion, FinalSums, RunResult, SolverConfig, Termination};
use nalgebra::DVector;
use thiserror::Error;

/// Default per-axis resolution of the grid oracle.
pub const DEFAULT_GRID_RESOLUTION: usize = 400;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("no accuracy guarantee applies to a run that ended with {0:?}")]
    Uncertified(Termination),
    #[error("problem carries no witness solution")]
    NoWitness,
    #[error("the grid oracle supports dimensions up to 3, got {0}")]
    DimensionTooLarge(usize),
    #[error("no feasible grid point at this resolution")]
    EmptyGrid,
}

/// Named scalar term of a certified bound.
#[derive(Debug, Clone, Copy)]
pub struct Component {
    pub name: &'static str,
    pub value: f64,
}

/// Certified accuracy of a finished run.
#[derive(Debug, Clone)]
pub struct Certificate {
    /// Bound on `<F(x), x_hat - x>` over the whole set.
    pub gap_bound: f64,
    /// Bound on the constraint value at the output: `eps`, or `eps * M_g`
    /// for the variants with the scaled threshold.
    pub feasibility_bound: f64,
    pub algorithm: Algorithm,
    pub criterion: Criterion,
    pub delta: f64,
    /// Nonnegative terms summing to `gap_bound`.
    pub components: Vec<Component>,
}

/// Base term and criterion-2 excess of the gap bound, before the delta
/// shift. The excess vanishes identically when no non-productive step was
/// taken.
pub fn gap_bound_terms(
    algorithm: Algorithm,
    criterion: Criterion,
    eps: f64,
    l_f: f64,
    m_g: f64,
    diameter: f64,
    i_count: u64,
    j_count: u64,
    sums: &FinalSums,
) -> (f64, f64) {
    let base = match algorithm {
        Algorithm::A1 | Algorithm::A2 | Algorithm::A3 | Algorithm::A7 => eps,
        Algorithm::A4 | Algorithm::A5 => eps * l_f,
        Algorithm::A6 => eps * l_f / m_g,
    };
    if criterion == Criterion::One || j_count == 0 {
        return (base, 0.0);
    }
    let i = i_count as f64;
    let j = j_count as f64;
    let excess = match algorithm {
        Algorithm::A1 => diameter * l_f * l_f * j / (m_g * i),
        Algorithm::A2 => m_g * diameter * sums.sum_inv_g2 / sums.sum_inv_f2,
        Algorithm::A3 => diameter * j / sums.sum_inv_f2,
        Algorithm::A4 => m_g * diameter * l_f * sums.sum_inv_g2 / i,
        Algorithm::A5 => diameter * l_f * j / i,
        Algorithm::A6 => diameter * l_f * j / (m_g * i),
        Algorithm::A7 => j * m_g * diameter / i,
    };
    (base, excess)
}

/// Builds the certificate for a run that terminated under one of the two
/// stopping criteria.
pub fn certificate(
    result: &RunResult,
    problem: &VIProblem,
    config: &SolverConfig,
) -> Result<Certificate, CertifyError> {
    match result.termination {
        Termination::Criterion1 | Termination::Criterion2 => {}
        other => return Err(CertifyError::Uncertified(other)),
    }
    let l_f = problem.operator.bound;
    let m_g = problem.constraints.max_lipschitz();
    let (base, excess) = gap_bound_terms(
        config.algorithm,
        config.criterion,
        config.eps,
        l_f,
        m_g,
        problem.geometry.diameter(),
        result.i_count,
        result.j_count,
        &result.sums,
    );
    // The slack is added last so the bound for slack `d` is exactly the
    // zero-slack bound plus `d`.
    let gap_bound = (base + excess) + config.delta;
    let feasibility_bound = if config.algorithm.scaled_threshold() {
        config.eps * m_g
    } else {
        config.eps
    };
    Ok(Certificate {
        gap_bound,
        feasibility_bound,
        algorithm: config.algorithm,
        criterion: config.criterion,
        delta: config.delta,
        components: vec![
            Component {
                name: "base",
                value: base,
            },
            Component {
                name: "nonproductive_excess",
                value: excess,
            },
            Component {
                name: "monotonicity_slack",
                value: config.delta,
            },
        ],
    })
}

/// Brute-force gap: maximum of `<F(x), x_hat - x>` over a regular grid on
/// the set's bounding box, filtered by membership and `g(x) <= 0`.
/// Dimensions up to 3 only.
pub fn gap_oracle(
    problem: &VIProblem,
    x_hat: &DVector<f64>,
    resolution: usize,
) -> Result<f64, CertifyError> {
    let dim = problem.geometry.dim();
    if dim > 3 {
        return Err(CertifyError::DimensionTooLarge(dim));
    }
    let resolution = resolution.max(2);
    let (lo, hi) = problem.geometry.bounding_box();
    let mut index = vec![0usize; dim];
    let mut point = DVector::zeros(dim);
    let mut best: Option<f64> = None;
    loop {
        for d in 0..dim {
            let t = index[d] as f64 / (resolution - 1) as f64;
            point[d] = lo[d] + (hi[d] - lo[d]) * t;
        }
        if problem.geometry.contains(&point) {
            let (g, _) = problem.constraints.eval_max(&point);
            if g <= 0.0 {
                let value = problem.operator.value(&point).dot(&(x_hat - &point));
                best = Some(best.map_or(value, |b: f64| b.max(value)));
            }
        }
        // Advance the mixed-radix counter.
        let mut d = 0;
        loop {
            if d == dim {
                return best.ok_or(CertifyError::EmptyGrid);
            }
            index[d] += 1;
            if index[d] < resolution {
                break;
            }
            index[d] = 0;
            d += 1;
        }
    }
}

/// Primal-norm distance from the output to the stored witness solution.
pub fn distance_to_witness(problem: &VIProblem, x_hat: &DVector<f64>) -> Result<f64, CertifyError> {
    let witness = problem.witness.as_ref().ok_or(CertifyError::NoWitness)?;
    Ok(problem.geometry.primal_norm(&(x_hat - witness)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EuclideanBall;
    use crate::problems::{
        generate_hphard, hphard_instance, ConstraintFamily, HpHardSpec, OperatorSpec,
    };
    use crate::solvers::{solve, SolverConfig};
    use std::sync::Arc;

    fn round_3sf(x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let scale = 10f64.powi(2 - x.abs().log10().floor() as i32);
        (x * scale).round() / scale
    }

    fn empty_sums() -> FinalSums {
        FinalSums {
            sum_wf: 1.0,
            sum_inv_f2: 1.0,
            sum_inv_g2: 0.0,
            sum_inv_m2: 1.0,
            sum_m2: 1.0,
        }
    }

    #[test]
    fn criterion_one_bases_match_reported_estimates() {
        let sums = empty_sums();
        let (l_f, m_g) = (6.125326, 6.22351);
        let (base, excess) = gap_bound_terms(
            Algorithm::A1,
            Criterion::One,
            0.05,
            l_f,
            m_g,
            2.0,
            10,
            0,
            &sums,
        );
        assert_eq!(base + excess, 0.05);

        let (base, _) = gap_bound_terms(
            Algorithm::A4,
            Criterion::One,
            0.05,
            l_f,
            m_g,
            2.0,
            10,
            0,
            &sums,
        );
        assert!((base - 0.3063).abs() < 5e-5);
        assert_eq!(round_3sf(base), 0.306);

        let (base, _) = gap_bound_terms(
            Algorithm::A6,
            Criterion::One,
            0.05,
            l_f,
            m_g,
            2.0,
            10,
            0,
            &sums,
        );
        assert_eq!(round_3sf(base), 0.0492);
    }

    #[test]
    fn criterion_two_excess_vanishes_without_nonproductive_steps() {
        let sums = empty_sums();
        for alg in Algorithm::ALL {
            let (base1, excess1) =
                gap_bound_terms(alg, Criterion::One, 0.05, 3.0, 2.0, 2.0, 12, 0, &sums);
            let (base2, excess2) =
                gap_bound_terms(alg, Criterion::Two, 0.05, 3.0, 2.0, 2.0, 12, 0, &sums);
            assert_eq!(base1, base2);
            assert_eq!(excess1, 0.0);
            assert_eq!(excess2, 0.0);
        }
    }

    #[test]
    fn bounds_are_affine_in_delta_with_unit_slope() {
        let problem = hphard_instance(10, 4, 2);
        for alg in Algorithm::ALL {
            for crit in [Criterion::One, Criterion::Two] {
                let plain = SolverConfig::new(alg, crit, 0.05);
                let shifted = SolverConfig::new(alg, crit, 0.05).with_delta(0.01);
                let result = solve(&problem, &plain).unwrap();
                if !matches!(
                    result.termination,
                    Termination::Criterion1 | Termination::Criterion2
                ) {
                    continue;
                }
                let c0 = certificate(&result, &problem, &plain).unwrap();
                let c1 = certificate(&result, &problem, &shifted).unwrap();
                assert_eq!(c1.gap_bound, c0.gap_bound + 0.01, "{alg} {crit:?}");
                for part in &c1.components {
                    assert!(part.value >= 0.0);
                }
            }
        }
    }

    #[test]
    fn certificate_refuses_budget_terminations() {
        let problem = hphard_instance(4, 2, 3);
        let config = SolverConfig::new(Algorithm::A2, Criterion::Two, 0.05)
            .with_max_iter(5)
            .with_fixed_budget();
        let result = solve(&problem, &config).unwrap();
        assert_eq!(result.termination, Termination::MaxIter);
        assert!(matches!(
            certificate(&result, &problem, &config),
            Err(CertifyError::Uncertified(Termination::MaxIter))
        ));
        assert_eq!(result.certified_bound, None);
    }

    #[test]
    fn gap_oracle_zero_operator() {
        let op = OperatorSpec::new(|x: &DVector<f64>| x * 0.0, 1.0);
        let problem = crate::problems::VIProblem::new(
            Arc::new(EuclideanBall::unit(2)),
            op,
            ConstraintFamily::trivial(2),
        );
        let x_hat = DVector::from_vec(vec![0.3, -0.4]);
        let gap = gap_oracle(&problem, &x_hat, 101).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn gap_oracle_linear_one_dimensional() {
        // F(x) = x on [-1, 1] with x_hat = 0: sup of -x^2 is 0.
        let op = OperatorSpec::new(|x: &DVector<f64>| x.clone(), 1.0);
        let problem = crate::problems::VIProblem::new(
            Arc::new(EuclideanBall::unit(1)),
            op,
            ConstraintFamily::trivial(1),
        );
        let gap = gap_oracle(&problem, &DVector::zeros(1), DEFAULT_GRID_RESOLUTION).unwrap();
        assert!(gap <= 0.0 && gap >= -1e-4);
    }

    #[test]
    fn gap_oracle_rejects_high_dimensions() {
        let problem = hphard_instance(4, 2, 1);
        assert!(matches!(
            gap_oracle(&problem, &DVector::zeros(4), 10),
            Err(CertifyError::DimensionTooLarge(4))
        ));
    }

    #[test]
    fn oracle_stays_below_the_certificate_in_2d() {
        let problem = hphard_instance(2, 1, 6);
        let config = SolverConfig::new(Algorithm::A2, Criterion::One, 0.05);
        let result = solve(&problem, &config).unwrap();
        assert_eq!(result.termination, Termination::Criterion1);
        let bound = result.certified_bound.unwrap();
        let gap = gap_oracle(&problem, &result.x_hat, DEFAULT_GRID_RESOLUTION).unwrap();
        assert!(gap <= bound + 1e-6, "gap {gap} exceeds bound {bound}");
    }

    #[test]
    fn witness_distances() {
        let problem = generate_hphard(&HpHardSpec::new(2, 5));
        let witness = problem.witness.clone().unwrap();
        assert_eq!(distance_to_witness(&problem, &witness).unwrap(), 0.0);
        let off = DVector::from_vec(vec![0.1, 0.0]);
        assert!((distance_to_witness(&problem, &off).unwrap() - 0.1).abs() < 1e-15);

        let no_witness = hphard_instance(2, 1, 5).with_constraints(ConstraintFamily::trivial(2));
        let mut stripped = no_witness;
        stripped.witness = None;
        assert!(matches!(
            distance_to_witness(&stripped, &off),
            Err(CertifyError::NoWitness)
        ));
    }
}
