//! Collocation weights on centered periodic neighborhoods and the circulant
//! differentiation operator they define.
//!
//! Weights are stored at unit spacing. A node's effective stencil for
//! `-c d/dx + nu d^2/dx^2` is `-(c/h_x) w1 + (nu/h_x^2) w2`, and the
//! operator acts by circular convolution with it.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::exact_solution::PdeProblem;
use crate::numfmt;

/// Equispaced periodic grid `x_k = k h_x`, `k = 0..=N`, `h_x = P/(N+1)`,
/// with centered neighborhoods of `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_param: usize,
    period: f64,
    stencil_size: usize,
}

impl Grid {
    pub fn new(n_param: usize, period: f64, stencil_size: usize) -> Result<Self> {
        check_stencil_size(stencil_size)?;
        if stencil_size > n_param {
            return Err(invalid(
                "n",
                format!("stencil size {stencil_size} exceeds N = {n_param}"),
            ));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(invalid("period", "must be positive"));
        }
        Ok(Self {
            n_param,
            period,
            stencil_size,
        })
    }

    /// `N`; the grid has `N + 1` nodes.
    pub fn n_param(&self) -> usize {
        self.n_param
    }

    pub fn nodes(&self) -> usize {
        self.n_param + 1
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn stencil_size(&self) -> usize {
        self.stencil_size
    }

    pub fn half_width(&self) -> usize {
        (self.stencil_size - 1) / 2
    }

    pub fn h_x(&self) -> f64 {
        self.period / self.nodes() as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.h_x()
    }
}

fn check_stencil_size(n: usize) -> Result<()> {
    if n < 3 || n.is_multiple_of(2) {
        Err(invalid("n", format!("stencil size must be odd and >= 3, got {n}")))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivative {
    First,
    Second,
}

impl Derivative {
    fn order(self) -> usize {
        match self {
            Derivative::First => 1,
            Derivative::Second => 2,
        }
    }
}

/// Finite-difference weights for derivatives at `z` from values at `nodes`
/// (Fornberg's recursion). Returns `weights[m][j]` for derivative order
/// `m = 0..=max_order`.
fn fornberg(z: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let count = nodes.len();
    let mut c = vec![vec![0.0; max_order + 1]; count];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..count {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    (0..=max_order).map(|m| c.iter().map(|row| row[m]).collect()).collect()
}

/// Weights of the derivative of the degree `n-1` Lagrange interpolant on
/// offsets `-(n-1)/2 ..= (n-1)/2` (unit spacing), evaluated at offset 0.
pub fn lagrange_collocation_weights(n: usize, derivative: Derivative) -> Result<Vec<f64>> {
    check_stencil_size(n)?;
    let half = (n - 1) as f64 / 2.0;
    let offsets: Vec<f64> = (0..n).map(|j| j as f64 - half).collect();
    let mut all = fornberg(0.0, &offsets, derivative.order());
    Ok(all.swap_remove(derivative.order()))
}

/// Trainable weights `omega = [w1; w2]` at unit spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightsRepr", into = "WeightsRepr")]
pub struct StencilWeights {
    w1: Vec<f64>,
    w2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WeightsRepr {
    n: usize,
    #[serde(with = "numfmt::vec")]
    w1: Vec<f64>,
    #[serde(with = "numfmt::vec")]
    w2: Vec<f64>,
}

impl TryFrom<WeightsRepr> for StencilWeights {
    type Error = Error;

    fn try_from(repr: WeightsRepr) -> Result<Self> {
        check_len("stencil weights `n`", repr.n, repr.w1.len())?;
        Self::new(repr.w1, repr.w2)
    }
}

impl From<StencilWeights> for WeightsRepr {
    fn from(w: StencilWeights) -> Self {
        WeightsRepr {
            n: w.n(),
            w1: w.w1,
            w2: w.w2,
        }
    }
}

impl StencilWeights {
    pub fn new(w1: Vec<f64>, w2: Vec<f64>) -> Result<Self> {
        check_stencil_size(w1.len())?;
        check_len("stencil weights w2", w1.len(), w2.len())?;
        if w1.iter().chain(&w2).any(|w| !w.is_finite()) {
            return Err(invalid("weights", "entries must be finite"));
        }
        Ok(Self { w1, w2 })
    }

    /// Full-order collocation weights on `n` nodes.
    pub fn lagrange(n: usize) -> Result<Self> {
        Self::new(
            lagrange_collocation_weights(n, Derivative::First)?,
            lagrange_collocation_weights(n, Derivative::Second)?,
        )
    }

    /// Second-order centered differences `1/2 [-1, 0, 1]` and `[1, -2, 1]`,
    /// zero-padded to `n` entries. This is the training starting point.
    pub fn centered(n: usize) -> Result<Self> {
        check_stencil_size(n)?;
        let mid = (n - 1) / 2;
        let mut w1 = vec![0.0; n];
        let mut w2 = vec![0.0; n];
        w1[mid - 1] = -0.5;
        w1[mid + 1] = 0.5;
        w2[mid - 1] = 1.0;
        w2[mid] = -2.0;
        w2[mid + 1] = 1.0;
        Self::new(w1, w2)
    }

    pub fn zeros(n: usize) -> Result<Self> {
        check_stencil_size(n)?;
        Ok(Self {
            w1: vec![0.0; n],
            w2: vec![0.0; n],
        })
    }

    pub fn n(&self) -> usize {
        self.w1.len()
    }

    pub fn w1(&self) -> &[f64] {
        &self.w1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    /// Flattened decision vector `[w1; w2]` of length `2n`.
    pub fn to_omega(&self) -> Vec<f64> {
        let mut omega = self.w1.clone();
        omega.extend_from_slice(&self.w2);
        omega
    }

    pub fn from_omega(omega: &[f64]) -> Result<Self> {
        if !omega.len().is_multiple_of(2) {
            return Err(invalid("omega", "length must be even"));
        }
        let n = omega.len() / 2;
        Self::new(omega[..n].to_vec(), omega[n..].to_vec())
    }
}

/// `-(c/h_x) w1 + (nu/h_x^2) w2`.
pub fn effective_stencil(weights: &StencilWeights, problem: &PdeProblem, h_x: f64) -> Vec<f64> {
    let a = -problem.c / h_x;
    let b = problem.nu / (h_x * h_x);
    weights
        .w1
        .iter()
        .zip(&weights.w2)
        .map(|(w1, w2)| a * w1 + b * w2)
        .collect()
}

/// Discrete mode indices in spectrum order: `-floor(N/2) ..= floor(N/2)`,
/// followed by the Nyquist mode `(N+1)/2` when `N + 1` is even so that
/// all `N + 1` eigenvalues are listed.
pub fn mode_indices(n_param: usize) -> Vec<i64> {
    let half = (n_param / 2) as i64;
    let mut modes: Vec<i64> = (-half..=half).collect();
    if n_param % 2 == 1 {
        modes.push(half + 1);
    }
    modes
}

/// Circulant action of the stencil on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffOperator {
    grid: Grid,
    weights: StencilWeights,
    problem: PdeProblem,
    stencil: Vec<f64>,
}

impl DiffOperator {
    pub fn new(grid: Grid, weights: StencilWeights, problem: PdeProblem) -> Result<Self> {
        check_len("stencil size vs grid", grid.stencil_size(), weights.n())?;
        let stencil = effective_stencil(&weights, &problem, grid.h_x());
        Ok(Self {
            grid,
            weights,
            problem,
            stencil,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &StencilWeights {
        &self.weights
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    pub fn effective_stencil(&self) -> &[f64] {
        &self.stencil
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; u.len()];
        self.apply_into(u, &mut out)?;
        Ok(out)
    }

    /// `out[k] = sum_j w[j] u[(k + j - half) mod (N+1)]`.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.grid.nodes();
        check_len("operator input", m, u.len())?;
        check_len("operator output", m, out.len())?;
        let half = self.grid.half_width();
        for (k, slot) in out.iter_mut().enumerate() {
            let start = k + m - half;
            *slot = self
                .stencil
                .iter()
                .enumerate()
                .map(|(j, w)| w * u[(start + j) % m])
                .sum();
        }
        Ok(())
    }

    /// `lambda_eta = sum_j w_{j} e^{i 2 pi (j - half) eta / (N+1)}` for the
    /// modes of [`mode_indices`].
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let m = self.grid.nodes() as f64;
        let half = self.grid.half_width() as i64;
        mode_indices(self.grid.n_param())
            .into_iter()
            .map(|eta| {
                self.stencil
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| {
                        let offset = j as i64 - half;
                        // Reduce before scaling so large N keeps the phase exact.
                        let turns = (offset * eta).rem_euclid(self.grid.nodes() as i64) as f64;
                        Complex64::from_polar(w, TAU * turns / m)
                    })
                    .sum()
            })
            .collect()
    }
}
