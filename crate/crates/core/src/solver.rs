//! Block coordinate descent on
//! `‖X − ΦA‖²_F + λ Σ_m ‖Φ_m‖_Φ ‖(A_{m,:})ᵀ‖_A`.
//!
//! Each iteration takes a gradient step on the loss for `Φ`, a proximal step
//! per factor column, then the same for `A` with one proximal step per
//! coefficient row. Step sizes are the reciprocal block Lipschitz constants of
//! the loss gradient, recomputed every iteration. The method only converges to
//! a Nash point of the alternating scheme; it does not certify global optimality.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::IncidenceOperator;
use crate::prox::{phi_prox_objective, prox_a_norm, prox_phi_norm, ProxConfig, RegularizerWeights};
use crate::shape::fit_all;

/// Added to Lipschitz constants before inverting.
pub const STEP_DELTA: f64 = 1e-8;
/// Upper bound for automatically chosen step sizes.
pub const MAX_STEP: f64 = 1e6;
const POWER_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSize {
    Fixed(f64),
    #[default]
    #[serde(with = "auto_tag")]
    Auto,
}

mod auto_tag {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("expected \"auto\" or a number, got {s:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub factors: usize,
    pub max_iterations: usize,
    /// Stop when the relative objective change falls below this.
    pub tolerance: f64,
    pub seed: u64,
    pub step_phi: StepSize,
    pub step_a: StepSize,
    pub prox: ProxConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            factors: 8,
            max_iterations: 200,
            tolerance: 1e-6,
            seed: 0,
            step_phi: StepSize::Auto,
            step_a: StepSize::Auto,
            prox: ProxConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.factors == 0 {
            return Err(Error::invalid("factors", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be positive"));
        }
        for (name, s) in [("step_phi", self.step_phi), ("step_a", self.step_a)] {
            if let StepSize::Fixed(v) = s {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::invalid(name, format!("{v} is not a positive step")));
                }
            }
        }
        self.prox.validate()
    }
}

/// Per-iteration record of a [`solve`] run. Entry 0 describes the initial state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub objectives: Vec<f64>,
    /// Fraction of exactly-zero entries of `Φ`.
    pub sparsity: Vec<f64>,
    pub seconds: Vec<f64>,
    pub converged: bool,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.objectives.len().saturating_sub(1)
    }

    pub fn final_objective(&self) -> f64 {
        self.objectives.last().copied().unwrap_or(f64::NAN)
    }
}

/// Current factor and coefficient matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub factors: DMatrix<f64>,
    pub coefficients: DMatrix<f64>,
}

/// The data being factorized together with the regularizer.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub data: &'a DMatrix<f64>,
    pub weights: &'a RegularizerWeights,
    pub incidence: &'a IncidenceOperator,
}

impl<'a> Problem<'a> {
    pub fn new(
        data: &'a DMatrix<f64>,
        weights: &'a RegularizerWeights,
        incidence: &'a IncidenceOperator,
    ) -> Result<Self> {
        if incidence.cols() != data.nrows() {
            return Err(Error::dim("incidence columns", data.nrows(), incidence.cols()));
        }
        weights.validate()?;
        Ok(Problem {
            data,
            weights,
            incidence,
        })
    }
}

/// Value of the full objective.
pub fn objective(
    data: &DMatrix<f64>,
    factors: &DMatrix<f64>,
    coefficients: &DMatrix<f64>,
    weights: &RegularizerWeights,
    incidence: &IncidenceOperator,
) -> f64 {
    let residual = factors * coefficients - data;
    let loss = residual.norm_squared();
    let penalty: f64 = (0..factors.ncols())
        .map(|m| {
            let row: Vec<f64> = coefficients.row(m).iter().copied().collect();
            let a = weights.a_norm(&row);
            if a == 0.0 {
                0.0
            } else {
                weights.phi_norm(factors.column(m).as_slice(), incidence) * a
            }
        })
        .sum();
    loss + weights.lambda * penalty
}

/// Gradients of `‖X − ΦA‖²_F` with respect to `Φ` and `A`.
pub fn loss_gradients(
    data: &DMatrix<f64>,
    factors: &DMatrix<f64>,
    coefficients: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let residual = factors * coefficients - data;
    let g_phi = &residual * coefficients.transpose() * 2.0;
    let g_a = factors.transpose() * &residual * 2.0;
    (g_phi, g_a)
}

/// `M` distinct columns of the identity `I_dim`, chosen uniformly by `seed`.
pub fn init_factors(dim: usize, factors: usize, seed: u64) -> Result<DMatrix<f64>> {
    if factors > dim {
        return Err(Error::dim("factor count (at most 3N)", dim, factors));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, dim, factors);
    let mut phi = DMatrix::zeros(dim, factors);
    for (m, row) in picks.iter().enumerate() {
        phi[(row, m)] = 1.0;
    }
    Ok(phi)
}

/// Identity-column factors with least-squares coefficients. Starting from
/// `A = 0` would make the first factor gradient vanish.
pub fn initial_factorization(data: &DMatrix<f64>, factors: usize, seed: u64) -> Result<Factorization> {
    let phi = init_factors(data.nrows(), factors, seed)?;
    let a = fit_all(&phi, data)?;
    Ok(Factorization {
        factors: phi,
        coefficients: a,
    })
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix by power
/// iteration from a fixed start vector.
pub fn largest_eigenvalue(gram: &DMatrix<f64>, iterations: usize) -> f64 {
    let n = gram.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * ((i * 7919) % 101) as f64);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = gram * &v;
        let norm = w.norm();
        if norm == 0.0 || !norm.is_finite() {
            return if norm.is_finite() { 0.0 } else { f64::INFINITY };
        }
        estimate = v.dot(&w);
        v = w / norm;
    }
    estimate.max((gram * &v).dot(&v))
}

fn step_from_lipschitz(sigma: f64) -> f64 {
    (1.0 / (2.0 * sigma + STEP_DELTA)).min(MAX_STEP)
}

/// `ε_Φ = 1/(2σ_max(AAᵀ) + δ)` and `ε_A = 1/(2σ_max(ΦᵀΦ) + δ)`.
pub fn auto_step_sizes(factors: &DMatrix<f64>, coefficients: &DMatrix<f64>) -> (f64, f64) {
    let s_phi = largest_eigenvalue(&(coefficients * coefficients.transpose()), POWER_ITERATIONS);
    let s_a = largest_eigenvalue(&(factors.transpose() * factors), POWER_ITERATIONS);
    (step_from_lipschitz(s_phi), step_from_lipschitz(s_a))
}

fn check_finite(m: &DMatrix<f64>, what: &str, iteration: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            message: format!("{what} became non-finite"),
            iteration: Some(iteration),
        })
    }
}

/// Fraction of exactly-zero entries.
pub fn zero_fraction(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.iter().filter(|v| **v == 0.0).count() as f64 / m.len() as f64
}

/// One block coordinate descent sweep over `Φ` then `A`.
pub fn bcd_step(
    problem: &Problem<'_>,
    state: &Factorization,
    config: &SolverConfig,
    iteration: usize,
) -> Result<Factorization> {
    let x = problem.data;
    let w = problem.weights;
    let e = problem.incidence;
    let phi = &state.factors;
    let a = &state.coefficients;
    if phi.nrows() != x.nrows() || a.ncols() != x.ncols() || phi.ncols() != a.nrows() {
        return Err(Error::dim("factorization shape", x.nrows(), phi.nrows()));
    }
    check_finite(phi, "factors", iteration)?;
    check_finite(a, "coefficients", iteration)?;

    // Φ block.
    let step_phi = match config.step_phi {
        StepSize::Fixed(s) => s,
        StepSize::Auto => step_from_lipschitz(largest_eigenvalue(&(a * a.transpose()), POWER_ITERATIONS)),
    };
    let residual = phi * a - x;
    let moved = phi - (&residual * a.transpose()) * (2.0 * step_phi);
    let columns: Vec<DVector<f64>> = (0..phi.ncols())
        .into_par_iter()
        .map(|m| {
            let row: Vec<f64> = a.row(m).iter().copied().collect();
            let scale = step_phi * w.lambda * w.a_norm(&row);
            let target = moved.column(m).into_owned();
            let candidate = prox_phi_norm(&target, scale, w, e, &config.prox)?;
            // Accept the inexact prox only if it improves the column's surrogate.
            let current = phi.column(m);
            let f_new = phi_prox_objective(candidate.as_slice(), target.as_slice(), scale, w, e);
            let f_old = phi_prox_objective(current.as_slice(), target.as_slice(), scale, w, e);
            Ok(if f_new <= f_old {
                candidate
            } else {
                current.into_owned()
            })
        })
        .collect::<Result<_>>()
        .map_err(|err| match err {
            Error::Numeric { message, .. } => Error::Numeric {
                message,
                iteration: Some(iteration),
            },
            other => other,
        })?;
    let new_phi = DMatrix::from_columns(&columns);
    check_finite(&new_phi, "factors", iteration)?;

    // A block.
    let step_a = match config.step_a {
        StepSize::Fixed(s) => s,
        StepSize::Auto => step_from_lipschitz(largest_eigenvalue(&(new_phi.transpose() * &new_phi), POWER_ITERATIONS)),
    };
    let residual = &new_phi * a - x;
    let moved = a - (new_phi.transpose() * &residual) * (2.0 * step_a);
    let mut new_a = moved.clone();
    for m in 0..new_phi.ncols() {
        let scale = step_a * w.lambda * w.phi_norm(new_phi.column(m).as_slice(), e);
        let row = moved.row(m).transpose();
        let shrunk = prox_a_norm(&row, scale, w.lambda_a);
        new_a.row_mut(m).copy_from(&shrunk.transpose());
    }
    check_finite(&new_a, "coefficients", iteration)?;

    Ok(Factorization {
        factors: new_phi,
        coefficients: new_a,
    })
}

/// Runs BCD from a given starting point.
pub fn solve_from(
    problem: &Problem<'_>,
    start: Factorization,
    config: &SolverConfig,
) -> Result<(Factorization, SolverTrace)> {
    config.validate()?;
    let mut state = start;
    let mut trace = SolverTrace::default();
    let objective_of = |s: &Factorization| {
        objective(
            problem.data,
            &s.factors,
            &s.coefficients,
            problem.weights,
            problem.incidence,
        )
    };
    let mut current = objective_of(&state);
    trace.objectives.push(current);
    trace.sparsity.push(zero_fraction(&state.factors));
    trace.seconds.push(0.0);

    for it in 1..=config.max_iterations {
        let t0 = Instant::now();
        state = bcd_step(problem, &state, config, it)?;
        let next = objective_of(&state);
        trace.objectives.push(next);
        trace.sparsity.push(zero_fraction(&state.factors));
        trace.seconds.push(t0.elapsed().as_secs_f64());
        log::debug!("iteration {it}: objective {next:.6e}");
        let change = (current - next).abs() / current.abs().max(f64::MIN_POSITIVE);
        current = next;
        if change < config.tolerance || next == 0.0 {
            trace.converged = true;
            break;
        }
    }
    Ok((state, trace))
}

/// Factorizes `data` from the identity-column initialization of `config.seed`.
pub fn solve(
    data: &DMatrix<f64>,
    incidence: &IncidenceOperator,
    weights: &RegularizerWeights,
    config: &SolverConfig,
) -> Result<(Factorization, SolverTrace)> {
    let problem = Problem::new(data, weights, incidence)?;
    config.validate()?;
    let start = initial_factorization(data, config.factors, config.seed)?;
    solve_from(&problem, start, config)
}
