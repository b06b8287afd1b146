//! One Adams-Bashforth step on the semi-discrete system, evaluated as a
//! five-layer linear network without biases:
//!
//! 1. input: the newest state `zeta_I`;
//! 2. assignment: gather each node's neighborhood into an `n(N+1)` vector;
//! 3. reshape: view that vector as an `(N+1) x n` matrix `Z`;
//! 4. convolution: `zeta_C = Z w`, with `w` the effective stencil;
//! 5. additive: `zeta_+ = zeta_I + h sum_j alpha_j zeta_C(t - j h)`.
//!
//! The 0/1 selector matrices of the assignment and reshape layers are
//! realised by index arithmetic in [`GatherMap`].

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::exact_solution::PdeProblem;
use crate::multistep::AbScheme;
use crate::stencil::{effective_stencil, Grid, StencilWeights};

/// Source indices of every node's neighborhood, in ascending physical
/// coordinate (periodic images included), row-major `(N+1) x n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatherMap {
    nodes: usize,
    n: usize,
    indices: Vec<usize>,
}

impl GatherMap {
    pub fn new(grid: &Grid) -> Self {
        let nodes = grid.nodes();
        let n = grid.stencil_size();
        let half = grid.half_width();
        let indices = (0..nodes)
            .flat_map(|k| (0..n).map(move |j| (k + nodes + j - half) % nodes))
            .collect();
        Self { nodes, n, indices }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, k: usize) -> &[usize] {
        &self.indices[k * self.n..(k + 1) * self.n]
    }

    /// `zeta_A = U zeta_I`: block `k` holds `u` over node `k`'s neighborhood.
    pub fn assignment(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("assignment input", self.nodes, u.len())?;
        Ok(self.indices.iter().map(|&i| u[i]).collect())
    }

    /// `U^T delta_A`: scatter-adds each block entry back to its source node.
    pub fn assignment_adjoint(&self, delta: &[f64]) -> Result<Vec<f64>> {
        check_len("assignment adjoint input", self.indices.len(), delta.len())?;
        let mut out = vec![0.0; self.nodes];
        for (&i, &d) in self.indices.iter().zip(delta) {
            out[i] += d;
        }
        Ok(out)
    }
}

/// `Z[k][j] = assigned[k n + j]`.
pub fn reshape(assigned: &[f64], nodes: usize, n: usize) -> Result<DMatrix<f64>> {
    check_len("reshape input", nodes * n, assigned.len())?;
    Ok(DMatrix::from_row_slice(nodes, n, assigned))
}

/// `zeta_C = Z (-(c/h_x) w1 + (nu/h_x^2) w2)`.
pub fn convolution(z: &DMatrix<f64>, weights: &StencilWeights, problem: &PdeProblem, grid: &Grid) -> Result<Vec<f64>> {
    convolve(z, &effective_stencil(weights, problem, grid.h_x()))
}

fn convolve(z: &DMatrix<f64>, stencil: &[f64]) -> Result<Vec<f64>> {
    check_len("convolution stencil", z.ncols(), stencil.len())?;
    Ok((z * DVector::from_column_slice(stencil)).data.into())
}

/// Ring buffers of the last `s` states and their convolution outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    zeta_plus: VecDeque<Vec<f64>>,
    zeta_conv: VecDeque<Vec<f64>>,
    /// Time level of the newest state.
    level: usize,
    capacity: usize,
}

impl TrajectoryState {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn newest(&self) -> &[f64] {
        self.zeta_plus.back().expect("state holds at least one level")
    }

    /// States newest first.
    pub fn states(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.zeta_plus.iter().rev()
    }

    /// True when the newest state's convolution has been computed.
    pub fn is_aligned(&self) -> bool {
        self.zeta_conv.len() == self.zeta_plus.len()
    }

    fn push_state(&mut self, u: Vec<f64>) {
        self.zeta_plus.push_back(u);
        if self.zeta_plus.len() > self.capacity {
            self.zeta_plus.pop_front();
            // The matching oldest convolution leaves with it.
            self.zeta_conv.pop_front();
        }
        self.level += 1;
    }

    fn push_convolution(&mut self, c: Vec<f64>) {
        self.zeta_conv.push_back(c);
    }
}

/// Additive layer: `zeta_+ = zeta_I + h sum_j alpha_j zeta_C(t - j h)` with
/// `zeta_I` the newest state. Pushes the result as the new newest state.
pub fn additive(state: &mut TrajectoryState, scheme: &AbScheme, h_t: f64) -> Result<Vec<f64>> {
    let s = scheme.s();
    if state.zeta_plus.len() < s || !state.is_aligned() {
        return Err(Error::InsufficientHistory {
            needed: s,
            available: state.zeta_conv.len().min(state.zeta_plus.len()),
        });
    }
    let mut next = state.newest().to_vec();
    for (alpha, conv) in scheme.alpha().iter().zip(state.zeta_conv.iter().rev()) {
        for (u, c) in next.iter_mut().zip(conv) {
            *u += h_t * alpha * c;
        }
    }
    state.push_state(next.clone());
    Ok(next)
}

/// Everything the backward pass needs from one trajectory: states `u(l h)`,
/// gathered matrices `Z(l h)` and convolutions `zeta_C(l h)` for every level.
#[derive(Debug, Clone)]
pub struct ForwardRecord {
    pub states: Vec<Vec<f64>>,
    pub gathered: Vec<DMatrix<f64>>,
    pub convolutions: Vec<Vec<f64>>,
}

/// The layered network for fixed weights, scheme and step.
#[derive(Debug, Clone)]
pub struct StencilNetwork {
    grid: Grid,
    map: GatherMap,
    scheme: AbScheme,
    stencil: Vec<f64>,
    h_t: f64,
}

impl StencilNetwork {
    pub fn new(grid: Grid, weights: &StencilWeights, problem: &PdeProblem, scheme: AbScheme, h_t: f64) -> Result<Self> {
        check_len("network weights", grid.stencil_size(), weights.n())?;
        Ok(Self {
            map: GatherMap::new(&grid),
            stencil: effective_stencil(weights, problem, grid.h_x()),
            grid,
            scheme,
            h_t,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn map(&self) -> &GatherMap {
        &self.map
    }

    pub fn scheme(&self) -> &AbScheme {
        &self.scheme
    }

    pub fn effective_stencil(&self) -> &[f64] {
        &self.stencil
    }

    pub fn h_t(&self) -> f64 {
        self.h_t
    }

    /// Input, assignment, reshape and convolution layers for one state.
    pub fn layered_convolution(&self, u: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let assigned = self.map.assignment(u)?;
        let z = reshape(&assigned, self.map.nodes(), self.map.n())?;
        let conv = convolve(&z, &self.stencil)?;
        Ok((z, conv))
    }

    /// Seeds the buffers with `s` exact levels (oldest first) and their
    /// convolutions computed through the layers.
    pub fn kickstart(&self, samples: &[Vec<f64>]) -> Result<TrajectoryState> {
        check_len("kickstart levels", self.scheme.s(), samples.len())?;
        let mut state = TrajectoryState {
            zeta_plus: VecDeque::with_capacity(self.scheme.s() + 1),
            zeta_conv: VecDeque::with_capacity(self.scheme.s() + 1),
            level: 0,
            capacity: self.scheme.s(),
        };
        for (l, u) in samples.iter().enumerate() {
            let (_, conv) = self.layered_convolution(u)?;
            state.zeta_plus.push_back(u.clone());
            state.zeta_conv.push_back(conv);
            state.level = l;
        }
        Ok(state)
    }

    /// One full pass: additive layer, then the convolution of the new state.
    pub fn step(&self, state: &mut TrajectoryState) -> Result<Vec<f64>> {
        let next = additive(state, &self.scheme, self.h_t)?;
        let (_, conv) = self.layered_convolution(&next)?;
        state.push_convolution(conv);
        Ok(next)
    }

    /// States at levels `s ..= s - 1 + steps` from `s` kickstart levels.
    pub fn forward(&self, samples: &[Vec<f64>], steps: usize) -> Result<Vec<Vec<f64>>> {
        let mut state = self.kickstart(samples)?;
        (0..steps).map(|_| self.step(&mut state)).collect()
    }

    /// Forward pass keeping every intermediate the backward pass needs.
    /// Levels `0..s + steps` are recorded.
    pub fn record(&self, samples: &[Vec<f64>], steps: usize) -> Result<ForwardRecord> {
        check_len("kickstart levels", self.scheme.s(), samples.len())?;
        let s = self.scheme.s();
        let total = s + steps;
        let mut states = Vec::with_capacity(total);
        let mut gathered = Vec::with_capacity(total);
        let mut convolutions = Vec::with_capacity(total);
        for u in samples {
            let (z, conv) = self.layered_convolution(u)?;
            states.push(u.clone());
            gathered.push(z);
            convolutions.push(conv);
        }
        for level in s..total {
            let mut next = states[level - 1].clone();
            for (j, alpha) in self.scheme.alpha().iter().enumerate() {
                for (u, c) in next.iter_mut().zip(&convolutions[level - 1 - j]) {
                    *u += self.h_t * alpha * c;
                }
            }
            let (z, conv) = self.layered_convolution(&next)?;
            states.push(next);
            gathered.push(z);
            convolutions.push(conv);
        }
        Ok(ForwardRecord {
            states,
            gathered,
            convolutions,
        })
    }
}
