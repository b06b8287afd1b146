//! BFGS on the approximate Hessian (not its inverse) with a backtracking
//! line search that accepts any strict decrease.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numfmt;

use super::LossGradient;

/// Something to minimise over a flat parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, omega: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, omega: &[f64]) -> Result<LossGradient>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub kappa_max: usize,
    pub rho_min: f64,
    /// Line-search contraction factor.
    pub shrink: f64,
    pub gradient_tol: f64,
    /// Skip the update when `s^T y <= curvature_tol |s| |y|`.
    pub curvature_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            kappa_max: 1000,
            rho_min: 1e-5,
            shrink: 0.75,
            gradient_tol: 1e-12,
            curvature_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerStatus {
    Converged,
    MaxIterations,
    #[serde(rename = "failed")]
    LineSearchFailed,
}

impl OptimizerStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIterations => "max_iterations",
            Self::LineSearchFailed => "failed",
        }
    }
}

/// One line of the training log. `rho` is 0 for the initial point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub kappa: usize,
    #[serde(with = "numfmt::scalar")]
    pub loss: f64,
    #[serde(with = "numfmt::scalar")]
    pub grad_norm: f64,
    #[serde(with = "numfmt::scalar")]
    pub rho: f64,
    #[serde(with = "numfmt::vec")]
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub omega: Vec<f64>,
    pub hessian: DMatrix<f64>,
    pub kappa: usize,
    pub rho: f64,
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub status: OptimizerStatus,
    pub skipped_updates: usize,
    pub history: Vec<IterationRecord>,
}

impl OptimizerState {
    pub fn grad_norm(&self) -> f64 {
        norm(&self.gradient)
    }

    pub fn loss_history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().map(|r| r.loss)
    }

    /// The log as JSON lines, one record per accepted iterate.
    pub fn log_lines(&self) -> Result<Vec<String>> {
        self.history
            .iter()
            .map(|r| serde_json::to_string(r).map_err(Into::into))
            .collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scaled_identity(dim: usize, scale: f64) -> DMatrix<f64> {
    // A zero or non-finite gradient norm would make H singular.
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    DMatrix::identity(dim, dim) * scale
}

/// Minimises `objective` from `initial`. Objective errors abort; a failed line
/// search is a normal outcome reported in `status` with the best iterate.
pub fn bfgs_minimize<O: Objective + ?Sized>(
    objective: &O,
    initial: &[f64],
    options: &BfgsOptions,
) -> Result<OptimizerState> {
    bfgs_minimize_with(objective, initial, options, |_| {})
}

/// As [`bfgs_minimize`], calling `observe` with each record as it is made.
pub fn bfgs_minimize_with<O, F>(
    objective: &O,
    initial: &[f64],
    options: &BfgsOptions,
    mut observe: F,
) -> Result<OptimizerState>
where
    O: Objective + ?Sized,
    F: FnMut(&IterationRecord),
{
    if initial.len() != objective.dim() {
        return Err(invalid(
            "omega",
            format!("objective has {} parameters, got {}", objective.dim(), initial.len()),
        ));
    }
    if !(options.rho_min > 0.0 && options.rho_min <= 1.0) {
        return Err(invalid("rho_min", "must lie in (0, 1]"));
    }
    if !(options.shrink > 0.0 && options.shrink < 1.0) {
        return Err(invalid("shrink", "must lie in (0, 1)"));
    }
    let dim = initial.len();
    let start = objective.value_and_gradient(initial)?;
    let mut state = OptimizerState {
        omega: initial.to_vec(),
        hessian: scaled_identity(dim, norm(&start.grad)),
        kappa: 0,
        rho: 0.0,
        loss: start.value,
        gradient: start.grad,
        status: OptimizerStatus::MaxIterations,
        skipped_updates: 0,
        history: Vec::new(),
    };
    let record = |state: &OptimizerState| IterationRecord {
        kappa: state.kappa,
        loss: state.loss,
        grad_norm: state.grad_norm(),
        rho: state.rho,
        omega: state.omega.clone(),
    };
    state.history.push(record(&state));
    observe(state.history.last().unwrap());

    loop {
        if state.grad_norm() < options.gradient_tol {
            state.status = OptimizerStatus::Converged;
            break;
        }
        if state.kappa >= options.kappa_max {
            state.status = OptimizerStatus::MaxIterations;
            break;
        }
        let g = DVector::from_column_slice(&state.gradient);
        let sigma = match state.hessian.clone().cholesky() {
            Some(chol) => chol.solve(&(-&g)),
            None => {
                state.hessian = scaled_identity(dim, g.norm());
                -&g / state.hessian[(0, 0)]
            }
        };

        let mut rho = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = state.omega.iter().zip(sigma.iter()).map(|(w, d)| w + rho * d).collect();
            let value = objective.value(&trial)?;
            if value < state.loss {
                break Some(trial);
            }
            rho *= options.shrink;
            if rho < options.rho_min {
                break None;
            }
        };
        let Some(trial) = accepted else {
            state.status = OptimizerStatus::LineSearchFailed;
            break;
        };

        let next = objective.value_and_gradient(&trial)?;
        let step = DVector::from_iterator(dim, trial.iter().zip(&state.omega).map(|(a, b)| a - b));
        let y = DVector::from_column_slice(&next.grad) - &g;
        let sy = step.dot(&y);
        if sy > options.curvature_tol * step.norm() * y.norm() {
            let hs = &state.hessian * &step;
            let shs = step.dot(&hs);
            state.hessian += &y * y.transpose() / sy - &hs * hs.transpose() / shs;
            // Keep H exactly symmetric against rounding.
            state.hessian = (&state.hessian + state.hessian.transpose()) * 0.5;
        } else {
            state.skipped_updates += 1;
        }

        state.omega = trial;
        state.loss = next.value;
        state.gradient = next.grad;
        state.rho = rho;
        state.kappa += 1;
        state.history.push(record(&state));
        observe(state.history.last().unwrap());
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Quadratic {
        a: DMatrix<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.a.nrows()
        }

        fn value(&self, omega: &[f64]) -> Result<f64> {
            let w = DVector::from_column_slice(omega);
            Ok(0.5 * w.dot(&(&self.a * &w)))
        }

        fn value_and_gradient(&self, omega: &[f64]) -> Result<LossGradient> {
            let w = DVector::from_column_slice(omega);
            Ok(LossGradient {
                value: self.value(omega)?,
                grad: (&self.a * w).data.into(),
            })
        }
    }

    /// Reports the negated gradient, so every proposed direction ascends.
    struct Ascent<O>(O);

    impl<O: Objective> Objective for Ascent<O> {
        fn dim(&self) -> usize {
            self.0.dim()
        }

        fn value(&self, omega: &[f64]) -> Result<f64> {
            self.0.value(omega)
        }

        fn value_and_gradient(&self, omega: &[f64]) -> Result<LossGradient> {
            let mut lg = self.0.value_and_gradient(omega)?;
            lg.grad.iter_mut().for_each(|g| *g = -*g);
            Ok(lg)
        }
    }

    fn random_spd(dim: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(dim, dim) * 0.5
    }

    // Unit-first steps with simple decrease lose the finite termination of
    // exact line searches; 3-5 times the dimension is typical.
    #[test]
    fn quadratic_converges_quickly() {
        for (dim, seed) in [(6, 1), (10, 2), (18, 3)] {
            let q = Quadratic {
                a: random_spd(dim, seed),
            };
            let start = vec![1.0; dim];
            let opts = BfgsOptions {
                kappa_max: 5 * dim,
                ..BfgsOptions::default()
            };
            let state = bfgs_minimize(&q, &start, &opts).unwrap();
            assert!(state.grad_norm() < 1e-8, "dim {dim}: {}", state.grad_norm());
            assert!(state.omega.iter().all(|w| w.abs() < 1e-7));
        }
    }

    #[test]
    fn accepted_steps_decrease_and_hessian_stays_spd() {
        let q = Quadratic { a: random_spd(8, 9) };
        let mut seen = Vec::new();
        let opts = BfgsOptions {
            kappa_max: 30,
            gradient_tol: 0.0,
            ..BfgsOptions::default()
        };
        let state = bfgs_minimize_with(&q, &[3.0; 8], &opts, |r| seen.push(r.kappa)).unwrap();
        let losses: Vec<f64> = state.loss_history().collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(seen, (0..=state.kappa).collect::<Vec<_>>());
        let eig = state.hessian.clone().symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn zero_gradient_returns_immediately() {
        let q = Quadratic { a: random_spd(4, 5) };
        let state = bfgs_minimize(&q, &[0.0; 4], &BfgsOptions::default()).unwrap();
        assert_eq!(state.kappa, 0);
        assert_eq!(state.status, OptimizerStatus::Converged);
        assert_eq!(state.omega, vec![0.0; 4]);
        assert_eq!(state.history.len(), 1);
    }

    #[test]
    fn ascent_double_fails_the_line_search() {
        let q = Ascent(Quadratic { a: random_spd(4, 6) });
        let start = [1.0, -2.0, 0.5, 0.25];
        let state = bfgs_minimize(&q, &start, &BfgsOptions::default()).unwrap();
        assert_eq!(state.status, OptimizerStatus::LineSearchFailed);
        assert_eq!(state.kappa, 0);
        assert_eq!(state.omega, start.to_vec());
        assert_eq!(state.status.as_str(), "failed");
    }

    #[test]
    fn option_validation() {
        let q = Quadratic { a: random_spd(2, 1) };
        assert!(bfgs_minimize(&q, &[1.0], &BfgsOptions::default()).is_err());
        let bad = BfgsOptions {
            rho_min: 0.0,
            ..BfgsOptions::default()
        };
        assert!(bfgs_minimize(&q, &[1.0, 1.0], &bad).is_err());
    }

    #[test]
    fn deterministic_trajectory() {
        let q = Quadratic { a: random_spd(6, 11) };
        let opts = BfgsOptions {
            kappa_max: 7,
            ..BfgsOptions::default()
        };
        let a = bfgs_minimize(&q, &[1.0; 6], &opts).unwrap();
        let b = bfgs_minimize(&q, &[1.0; 6], &opts).unwrap();
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn log_lines_round_trip() {
        let q = Quadratic { a: random_spd(3, 2) };
        let opts = BfgsOptions {
            kappa_max: 3,
            ..BfgsOptions::default()
        };
        let state = bfgs_minimize(&q, &[1.0; 3], &opts).unwrap();
        let lines = state.log_lines().unwrap();
        assert_eq!(lines.len(), state.history.len());
        let first: IterationRecord = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(first.rho, 0.0);
        let last: IterationRecord = serde_json::from_str(lines.last().unwrap()).unwrap();
        assert_eq!(&last, state.history.last().unwrap());
    }
}
