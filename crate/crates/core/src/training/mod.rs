//! Recurrent loss over `Q` predicted steps, its gradient by backpropagation
//! through the layered network, and BFGS training of the stencil weights.
//!
//! For one case and one horizon `q` the backward pass seeds
//! `delta_+(q) = u~((s+q)h) - u((s+q)h)` and walks the recurrence back to the
//! kickstart levels:
//!
//! * `delta_C(s-1+l) = h sum_j alpha_j delta_+(l+j)` for `l = q..0`,
//!   `j <= min(s-1, q-l)`;
//! * `delta_+(l-1) = delta_+(l) + U^T vec(delta_C(s-1+l) w^T)` for `l > 0`;
//! * `delta_C(m) = h sum_i alpha_{s-1+i-m} delta_+(i)` for kickstart levels
//!   `m = s-2..0`, `i <= min(m, q)`.
//!
//! The effective-stencil gradient is `sum_l Z(l h)^T delta_C(l h)`, mapped to
//! `(w1, w2)` by the block `[-(c/h_x) I; (nu/h_x^2) I]`.

mod bfgs;

pub use bfgs::{
    bfgs_minimize, bfgs_minimize_with, BfgsOptions, IterationRecord, Objective, OptimizerState, OptimizerStatus,
};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::exact_solution::TrainingSet;
use crate::multistep::AbScheme;
use crate::network::{ForwardRecord, StencilNetwork};
use crate::numfmt;
use crate::stencil::{Grid, StencilWeights};

/// `J` and `grad_omega J`, the latter ordered `[d/dw1; d/dw2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossGradient {
    #[serde(with = "numfmt::scalar")]
    pub value: f64,
    #[serde(with = "numfmt::vec")]
    pub grad: Vec<f64>,
}

/// Backpropagated deltas of `J_{tau q}` for one case and horizon `q`.
///
/// `plus[l]` belongs to the state at level `s + l` (`l = 0..=q`, so
/// `plus[q]` is the residual); `conv[m]` is the convolution-layer delta at
/// level `m = 0..=s-1+q`. Deltas at later levels vanish and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaField {
    pub s: usize,
    pub q: usize,
    pub plus: Vec<Vec<f64>>,
    pub conv: Vec<Vec<f64>>,
}

impl DeltaField {
    /// Reshape-layer delta `Delta_R = delta_C w^T`.
    pub fn reshape_delta(&self, level: usize, stencil: &[f64]) -> DMatrix<f64> {
        DVector::from_column_slice(&self.conv[level]) * DVector::from_column_slice(stencil).transpose()
    }

    /// Assignment-layer delta: `Delta_R` flattened row by row.
    pub fn assignment_delta(&self, level: usize, stencil: &[f64]) -> Vec<f64> {
        self.conv[level]
            .iter()
            .flat_map(|&c| stencil.iter().map(move |&w| c * w))
            .collect()
    }

    /// Input-layer delta `U^T delta_A`.
    pub fn input_delta(&self, level: usize, net: &StencilNetwork) -> Result<Vec<f64>> {
        net.map()
            .assignment_adjoint(&self.assignment_delta(level, net.effective_stencil()))
    }

    pub fn conv_norms(&self) -> Vec<f64> {
        self.conv
            .iter()
            .map(|d| d.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }
}

/// `J(omega)` for a training set and stencil size, as an [`Objective`].
#[derive(Debug, Clone)]
pub struct RecurrentLoss<'a> {
    training: &'a TrainingSet,
    grid: Grid,
    scheme: AbScheme,
    q: usize,
}

impl<'a> RecurrentLoss<'a> {
    /// Uses every predicted level of the set (`Q = training.q`).
    pub fn new(training: &'a TrainingSet, stencil_size: usize) -> Result<Self> {
        Self::with_horizon(training, stencil_size, training.q)
    }

    pub fn with_horizon(training: &'a TrainingSet, stencil_size: usize, q: usize) -> Result<Self> {
        if q == 0 {
            return Err(invalid("Q", "must be at least 1"));
        }
        if training.cases.is_empty() {
            return Err(invalid("T", "training set has no cases"));
        }
        let grid = Grid::new(training.n_param, training.problem.period, stencil_size)?;
        let scheme = AbScheme::new(training.s)?;
        for case in &training.cases {
            if case.len() < training.s + q {
                return Err(invalid(
                    "Q",
                    format!("needs {} levels per case, found {}", training.s + q, case.len()),
                ));
            }
            for level in case {
                check_len("training level", grid.nodes(), level.len())?;
            }
        }
        Ok(Self {
            training,
            grid,
            scheme,
            q,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn scheme(&self) -> &AbScheme {
        &self.scheme
    }

    pub fn horizon(&self) -> usize {
        self.q
    }

    pub fn training(&self) -> &TrainingSet {
        self.training
    }

    pub fn network(&self, omega: &[f64]) -> Result<StencilNetwork> {
        check_len("omega", 2 * self.grid.stencil_size(), omega.len())?;
        let weights = StencilWeights::from_omega(omega)?;
        StencilNetwork::new(
            self.grid,
            &weights,
            &self.training.problem,
            self.scheme.clone(),
            self.training.h_t,
        )
    }

    fn kickstart<'c>(&self, case: &'c [Vec<f64>]) -> &'c [Vec<f64>] {
        &case[..self.scheme.s()]
    }

    fn case_loss(&self, net: &StencilNetwork, case: &[Vec<f64>]) -> Result<f64> {
        let predicted = net.forward(self.kickstart(case), self.q)?;
        let s = self.scheme.s();
        Ok(predicted
            .iter()
            .enumerate()
            .map(|(q, u)| half_squared_distance(u, &case[s + q]))
            .sum())
    }

    pub fn loss(&self, omega: &[f64]) -> Result<f64> {
        let net = self.network(omega)?;
        let per_case = self
            .training
            .cases
            .par_iter()
            .map(|case| self.case_loss(&net, case))
            .collect::<Result<Vec<_>>>()?;
        Ok(per_case.into_iter().sum())
    }

    fn deltas(&self, net: &StencilNetwork, record: &ForwardRecord, case: &[Vec<f64>], q: usize) -> Result<DeltaField> {
        let s = self.scheme.s();
        let alpha = self.scheme.alpha();
        let h = self.training.h_t;
        let nodes = self.grid.nodes();
        let mut plus = vec![Vec::new(); q + 1];
        let mut conv = vec![Vec::new(); s + q];
        plus[q] = record.states[s + q]
            .iter()
            .zip(&case[s + q])
            .map(|(a, b)| a - b)
            .collect();
        let combine = |terms: &mut dyn Iterator<Item = (f64, &Vec<f64>)>| {
            let mut out = vec![0.0; nodes];
            for (a, d) in terms {
                for (o, x) in out.iter_mut().zip(d) {
                    *o += h * a * x;
                }
            }
            out
        };
        for l in (0..=q).rev() {
            let top = (s - 1).min(q - l);
            conv[s - 1 + l] = combine(&mut (0..=top).map(|j| (alpha[j], &plus[l + j])));
            if l > 0 {
                let field = DeltaField {
                    s,
                    q,
                    plus: Vec::new(),
                    conv: vec![conv[s - 1 + l].clone()],
                };
                let through = field.input_delta(0, net)?;
                plus[l - 1] = plus[l].iter().zip(&through).map(|(a, b)| a + b).collect();
            }
        }
        for m in (0..s - 1).rev() {
            let top = m.min(q);
            conv[m] = combine(&mut (0..=top).map(|i| (alpha[s - 1 + i - m], &plus[i])));
        }
        Ok(DeltaField { s, q, plus, conv })
    }

    /// Deltas of `J_{tau q}` at `omega`.
    pub fn delta_field(&self, omega: &[f64], tau: usize, q: usize) -> Result<DeltaField> {
        if q >= self.q {
            return Err(invalid("q", format!("must be below Q = {}", self.q)));
        }
        let case = self
            .training
            .cases
            .get(tau)
            .ok_or_else(|| invalid("tau", format!("only {} cases", self.training.cases.len())))?;
        let net = self.network(omega)?;
        let record = net.record(self.kickstart(case), q + 1)?;
        self.deltas(&net, &record, case, q)
    }

    /// Loss, effective-stencil gradient and squared `delta_C` norms per level.
    fn case_backprop(&self, net: &StencilNetwork, case: &[Vec<f64>]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let s = self.scheme.s();
        let n = self.grid.stencil_size();
        let record = net.record(self.kickstart(case), self.q)?;
        let mut value = 0.0;
        let mut grad = DVector::zeros(n);
        let mut norms = vec![0.0; s + self.q];
        for q in 0..self.q {
            let field = self.deltas(net, &record, case, q)?;
            value += 0.5 * field.plus[q].iter().map(|r| r * r).sum::<f64>();
            for (level, delta) in field.conv.iter().enumerate() {
                grad += record.gathered[level].tr_mul(&DVector::from_column_slice(delta));
                norms[level] += delta.iter().map(|x| x * x).sum::<f64>();
            }
        }
        Ok((value, grad.data.into(), norms))
    }

    fn reduce(&self, omega: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let net = self.network(omega)?;
        let per_case = self
            .training
            .cases
            .par_iter()
            .map(|case| self.case_backprop(&net, case))
            .collect::<Result<Vec<_>>>()?;
        // Fixed tau order keeps the sum independent of scheduling.
        let n = self.grid.stencil_size();
        let mut value = 0.0;
        let mut grad = vec![0.0; n];
        let mut norms = vec![0.0; self.scheme.s() + self.q];
        for (v, g, nrm) in per_case {
            value += v;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            norms.iter_mut().zip(&nrm).for_each(|(a, b)| *a += b);
        }
        Ok((value, grad, norms))
    }

    fn omega_gradient(&self, effective: &[f64]) -> Vec<f64> {
        let h_x = self.grid.h_x();
        let p = &self.training.problem;
        let first = -p.c / h_x;
        let second = p.nu / (h_x * h_x);
        effective
            .iter()
            .map(|g| first * g)
            .chain(effective.iter().map(|g| second * g))
            .collect()
    }

    pub fn backprop(&self, omega: &[f64]) -> Result<LossGradient> {
        let (value, effective, _) = self.reduce(omega)?;
        Ok(LossGradient {
            value,
            grad: self.omega_gradient(&effective),
        })
    }

    /// `(sum_{tau,q} |delta_C(l h)|^2)^{1/2}` for `l = 0..s+Q-1`; small values
    /// at early levels indicate vanishing gradients through the recurrence.
    pub fn conv_delta_norms(&self, omega: &[f64]) -> Result<Vec<f64>> {
        let (_, _, norms) = self.reduce(omega)?;
        Ok(norms.into_iter().map(f64::sqrt).collect())
    }
}

impl Objective for RecurrentLoss<'_> {
    fn dim(&self) -> usize {
        2 * self.grid.stencil_size()
    }

    fn value(&self, omega: &[f64]) -> Result<f64> {
        self.loss(omega)
    }

    fn value_and_gradient(&self, omega: &[f64]) -> Result<LossGradient> {
        self.backprop(omega)
    }
}

fn half_squared_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// `J` at `weights` over the first `q` predicted levels of `training`.
pub fn loss(weights: &StencilWeights, training: &TrainingSet, q: usize) -> Result<f64> {
    RecurrentLoss::with_horizon(training, weights.n(), q)?.loss(&weights.to_omega())
}

/// `J` and its gradient at `weights`.
pub fn backprop(weights: &StencilWeights, training: &TrainingSet, q: usize) -> Result<LossGradient> {
    RecurrentLoss::with_horizon(training, weights.n(), q)?.backprop(&weights.to_omega())
}

/// Trains from `initial`; the result's `omega` is the best iterate found.
pub fn train(
    initial: &StencilWeights,
    training: &TrainingSet,
    options: &BfgsOptions,
    observe: impl FnMut(&IterationRecord),
) -> Result<OptimizerState> {
    let objective = RecurrentLoss::new(training, initial.n())?;
    bfgs_minimize_with(&objective, &initial.to_omega(), options, observe)
}
