//! Adams-Bashforth schemes: exact coefficients, the time step on the
//! semi-discrete system, and linear stability (boundary locus, root
//! condition, critical step).

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Ratio;

use crate::error::{check_len, invalid, Error, Result};
use crate::stencil::DiffOperator;

pub const MAX_STEPS: usize = 8;

/// Default slack on `|zeta| <= 1` in the root condition.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;

/// Default relative width at which critical-step bisection stops.
pub const DEFAULT_BISECTION_TOL: f64 = 1e-6;

/// Roots closer than this are treated as one repeated root. Eigenvalue
/// solvers split a double root by about `sqrt(eps)`, so the radius sits
/// above that.
const REPEATED_ROOT_RADIUS: f64 = 1e-7;

type Rational = Ratio<i128>;

fn poly_mul_linear(poly: &[Rational], shift: i128, scale: Rational) -> Vec<Rational> {
    // poly * (tau + shift) * scale
    let mut out = vec![Rational::from_integer(0); poly.len() + 1];
    for (i, &c) in poly.iter().enumerate() {
        out[i] += c * Rational::from_integer(shift) * scale;
        out[i + 1] += c * scale;
    }
    out
}

/// `alpha_l = int_0^1 prod_{m != l} (tau + m) / (m - l) dtau`, `m, l in 0..s`,
/// in exact rational arithmetic.
pub fn ab_coefficients_exact(s: usize) -> Result<Vec<Rational>> {
    if !(1..=MAX_STEPS).contains(&s) {
        return Err(invalid("s", format!("step count must be in 1..={MAX_STEPS}, got {s}")));
    }
    Ok((0..s as i128)
        .map(|l| {
            let basis = (0..s as i128)
                .filter(|&m| m != l)
                .fold(vec![Rational::from_integer(1)], |poly, m| {
                    poly_mul_linear(&poly, m, Rational::new(1, m - l))
                });
            basis
                .iter()
                .enumerate()
                .map(|(power, &c)| c / Rational::from_integer(power as i128 + 1))
                .sum()
        })
        .collect())
}

pub fn ab_coefficients(s: usize) -> Result<Vec<f64>> {
    Ok(ab_coefficients_exact(s)?
        .into_iter()
        .map(|r| *r.numer() as f64 / *r.denom() as f64)
        .collect())
}

/// An `s`-step Adams-Bashforth method.
#[derive(Debug, Clone, PartialEq)]
pub struct AbScheme {
    alpha: Vec<f64>,
}

impl AbScheme {
    pub fn new(s: usize) -> Result<Self> {
        Ok(Self {
            alpha: ab_coefficients(s)?,
        })
    }

    pub fn s(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `u(t + h) = u(t) + h sum_l alpha_l D u(t - l h)`; `history[l]` holds
    /// `u(t - l h)`, newest first.
    pub fn ab_step(&self, op: &DiffOperator, history: &[Vec<f64>], h_t: f64) -> Result<Vec<f64>> {
        if history.len() < self.s() {
            return Err(Error::InsufficientHistory {
                needed: self.s(),
                available: history.len(),
            });
        }
        let nodes = op.grid().nodes();
        let mut next = history[0].clone();
        check_len("multistep history", nodes, next.len())?;
        let mut rate = vec![0.0; nodes];
        for (alpha, level) in self.alpha.iter().zip(history) {
            op.apply_into(level, &mut rate)?;
            for (u, r) in next.iter_mut().zip(&rate) {
                *u += h_t * alpha * r;
            }
        }
        Ok(next)
    }

    /// Companion matrix of the recurrence for `mu' = z mu` with `xi = z h`:
    /// first row `[1 + alpha_0 xi, alpha_1 xi, ...]`, ones on the subdiagonal.
    pub fn companion(&self, xi: Complex64) -> DMatrix<Complex64> {
        let s = self.s();
        let mut m = DMatrix::zeros(s, s);
        for (j, &a) in self.alpha.iter().enumerate() {
            m[(0, j)] = xi * a;
        }
        m[(0, 0)] += Complex64::new(1.0, 0.0);
        for i in 1..s {
            m[(i, i - 1)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Roots of `zeta^s - (1 + alpha_0 xi) zeta^{s-1} - sum_j alpha_j xi zeta^{s-1-j}`.
    pub fn characteristic_roots(&self, xi: Complex64) -> Result<Vec<Complex64>> {
        if self.s() == 1 {
            return Ok(vec![Complex64::new(1.0, 0.0) + xi * self.alpha[0]]);
        }
        if !(xi.re.is_finite() && xi.im.is_finite()) {
            return Err(Error::RootFinder(xi));
        }
        self.companion(xi)
            .eigenvalues()
            .map(|v| v.iter().copied().collect())
            .ok_or(Error::RootFinder(xi))
    }

    /// Largest characteristic root modulus minus one.
    pub fn root_excess(&self, xi: Complex64) -> Result<f64> {
        Ok(self
            .characteristic_roots(xi)?
            .iter()
            .map(|r| r.norm())
            .fold(f64::NEG_INFINITY, f64::max)
            - 1.0)
    }

    /// Root condition: every root has `|zeta| <= 1 + tol`, and roots that
    /// coincide with another root must satisfy `|zeta| < 1 - tol`.
    pub fn is_stable(&self, xi: Complex64, tol: f64) -> Result<bool> {
        if !(tol >= 0.0) {
            return Err(invalid("tol", "must be nonnegative"));
        }
        let roots = self.characteristic_roots(xi)?;
        let radius = tol.max(REPEATED_ROOT_RADIUS);
        for (i, r) in roots.iter().enumerate() {
            let modulus = r.norm();
            if modulus > 1.0 + tol {
                return Ok(false);
            }
            let repeated = roots
                .iter()
                .enumerate()
                .any(|(j, other)| j != i && (r - other).norm() <= radius);
            if repeated && modulus >= 1.0 - tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Boundary locus: the `xi` for which `e^{i theta}` is a characteristic
    /// root, `(e^{i theta} - 1) / sum_l alpha_l e^{-i l theta}`.
    pub fn stability_boundary(&self, theta: f64) -> Result<Complex64> {
        let numerator = Complex64::from_polar(1.0, theta) - 1.0;
        let denominator: Complex64 = self
            .alpha
            .iter()
            .enumerate()
            .map(|(l, &a)| Complex64::from_polar(a, -(l as f64) * theta))
            .sum();
        if denominator.norm() < 1e-14 {
            return Err(Error::DegenerateBoundary(theta));
        }
        Ok(numerator / denominator)
    }

    /// Boundary at `theta_i = 2 pi i / count`, `i = 0..count`.
    pub fn boundary_samples(&self, count: usize) -> Result<Vec<Complex64>> {
        (0..count)
            .map(|i| self.stability_boundary(TAU * i as f64 / count as f64))
            .collect()
    }

    /// True when every `lambda h` of `spectrum` passes [`Self::is_stable`].
    pub fn spectrum_is_stable(&self, spectrum: &[Complex64], h: f64, tol: f64) -> Result<bool> {
        for &lambda in spectrum {
            if !self.is_stable(lambda * h, tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Largest `h_t` placing every `lambda h_t` of `op`'s spectrum in the
    /// stability region, or `None` when only `h_t = 0` works.
    pub fn critical_timestep(&self, op: &DiffOperator, tol_rel: f64) -> Result<Option<f64>> {
        self.critical_timestep_for_spectrum(&op.eigenvalues(), tol_rel, DEFAULT_ROOT_TOL)
    }

    /// Bisection on `[0, h_hint]`, `h_hint = 10 / max |lambda|` (expanded if
    /// the hint itself is stable).
    ///
    /// With a positive root tolerance, spectra that are unstable for every
    /// `h > 0` still pass at tiny steps where the root excess grows like a
    /// high power of `h` and stays under `tol`. A genuine critical step is a
    /// transversal crossing, so the excess at twice the bisection result is
    /// compared against `sqrt(tol)` to tell the two apart.
    pub fn critical_timestep_for_spectrum(
        &self,
        spectrum: &[Complex64],
        tol_rel: f64,
        root_tol: f64,
    ) -> Result<Option<f64>> {
        if !(tol_rel > 0.0) {
            return Err(invalid("tol_rel", "must be positive"));
        }
        let radius = spectrum.iter().map(|l| l.norm()).fold(0.0, f64::max);
        if radius == 0.0 {
            return Err(Error::UnboundedTimestep);
        }
        let mut lo = 0.0;
        let mut hi = 10.0 / radius;
        let mut doublings = 0;
        while self.spectrum_is_stable(spectrum, hi, root_tol)? {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 60 {
                return Err(Error::UnboundedTimestep);
            }
        }
        for _ in 0..200 {
            if hi - lo <= tol_rel * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.spectrum_is_stable(spectrum, mid, root_tol)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo == 0.0 {
            return Ok(None);
        }
        let mut excess = f64::NEG_INFINITY;
        for &lambda in spectrum {
            excess = excess.max(self.root_excess(lambda * 2.0 * lo)?);
        }
        if excess < root_tol.sqrt() {
            return Ok(None);
        }
        Ok(Some(lo))
    }
}

/// A scheme with its traced boundary, for plotting and membership queries.
#[derive(Debug, Clone)]
pub struct StabilityProbe {
    pub scheme: AbScheme,
    pub boundary_samples: Vec<Complex64>,
    pub tolerance: f64,
}

impl StabilityProbe {
    pub fn new(scheme: AbScheme, samples: usize, tolerance: f64) -> Result<Self> {
        let boundary_samples = scheme.boundary_samples(samples)?;
        Ok(Self {
            scheme,
            boundary_samples,
            tolerance,
        })
    }

    /// Membership by the root condition; the traced curve is never used
    /// for this.
    pub fn contains(&self, xi: Complex64) -> Result<bool> {
        self.scheme.is_stable(xi, self.tolerance)
    }
}
