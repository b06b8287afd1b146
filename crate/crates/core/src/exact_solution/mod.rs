//! Exact spectral solutions of the periodic advection-diffusion problem
//! `u_t = -c u_x + nu u_xx`, their Fourier coefficients, and synthetic
//! training trajectories sampled from them.

pub mod quadrature;

use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::numfmt;
use quadrature::{integrate, QuadratureOptions};

/// Physical setup: advection speed, diffusion coefficient and period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeProblem {
    pub c: f64,
    pub nu: f64,
    pub period: f64,
}

impl PdeProblem {
    pub fn new(c: f64, nu: f64, period: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(invalid("c", "must be finite"));
        }
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(invalid("nu", format!("must be finite and nonnegative, got {nu}")));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(invalid("period", format!("must be positive, got {period}")));
        }
        Ok(Self { c, nu, period })
    }

    /// Angular wavenumber `2 pi eta / P`.
    pub fn wavenumber(&self, eta: i64) -> f64 {
        TAU * eta as f64 / self.period
    }

    /// Eigenvalue of the continuous operator on the mode `e^{i k x}`.
    pub fn mode_eigenvalue(&self, eta: i64) -> Complex64 {
        let k = self.wavenumber(eta);
        Complex64::new(-k * k * self.nu, -k * self.c)
    }

    /// Time factor `e^{-i k c t - k^2 nu t}` of mode `eta`.
    ///
    /// The phase is reduced modulo one period before scaling so long
    /// horizons keep full accuracy.
    fn time_factor(&self, eta: i64, t: f64) -> Complex64 {
        let k = self.wavenumber(eta);
        let shift = (self.c * t / self.period).rem_euclid(1.0);
        let phase = -TAU * (eta as f64 * shift).rem_euclid(1.0);
        Complex64::from_polar((-k * k * self.nu * t).exp(), phase)
    }
}

/// 1-periodic extension of the bump `e^{1/((2x-1)^2-1)}`, zero at the integers.
pub fn bump_initial(x: f64) -> f64 {
    let frac = x - x.floor();
    if frac == 0.0 {
        return 0.0;
    }
    let y = 2.0 * frac - 1.0;
    (1.0 / (y * y - 1.0)).exp()
}

/// Fourier coefficients `b_eta(0)` for `|eta| <= eta_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierData {
    eta_max: usize,
    /// `coeffs[eta + eta_max]`.
    coeffs: Vec<Complex64>,
}

impl FourierData {
    pub fn new(eta_max: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_len("FourierData coefficients", 2 * eta_max + 1, coeffs.len())?;
        Ok(Self { eta_max, coeffs })
    }

    /// Real even data: `b_eta = b_{-eta} = amplitudes[eta]`.
    pub fn from_symmetric_real(amplitudes: &[f64]) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(invalid("amplitudes", "need at least the mean mode"));
        }
        let eta_max = amplitudes.len() - 1;
        let coeffs = (-(eta_max as i64)..=eta_max as i64)
            .map(|eta| Complex64::new(amplitudes[eta.unsigned_abs() as usize], 0.0))
            .collect();
        Ok(Self { eta_max, coeffs })
    }

    pub fn eta_max(&self) -> usize {
        self.eta_max
    }

    /// Zero outside the retained band.
    pub fn coefficient(&self, eta: i64) -> Complex64 {
        if eta.unsigned_abs() as usize > self.eta_max {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(eta + self.eta_max as i64) as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let shift = self.eta_max as i64;
        self.coeffs.iter().enumerate().map(move |(i, &b)| (i as i64 - shift, b))
    }

    /// Drops every mode with `|eta| > eta_max`.
    pub fn truncated(&self, eta_max: usize) -> Self {
        let eta_max = eta_max.min(self.eta_max);
        let lo = self.eta_max - eta_max;
        Self {
            eta_max,
            coeffs: self.coeffs[lo..lo + 2 * eta_max + 1].to_vec(),
        }
    }

    /// Largest `|b_{-eta} - conj(b_eta)|`; zero for data of a real function.
    pub fn conjugate_asymmetry(&self) -> f64 {
        (0..=self.eta_max as i64)
            .map(|eta| (self.coefficient(-eta) - self.coefficient(eta).conj()).norm())
            .fold(0.0, f64::max)
    }
}

/// Computes `(1/P) int_0^P f(x) e^{-i 2 pi eta x / P} dx` for `|eta| <= eta_max`
/// by adaptive Gauss-Kronrod quadrature.
///
/// `f` is real, so only `eta >= 0` is integrated and the negative modes are
/// filled in by conjugation. Modes are integrated in parallel; each result
/// is independent of the schedule.
pub fn fourier_coefficients<F>(f: F, period: f64, eta_max: usize, abstol: f64) -> Result<FourierData>
where
    F: Fn(f64) -> f64 + Sync,
{
    fourier_coefficients_with_budget(f, period, eta_max, abstol, QuadratureOptions::default().max_panels)
}

/// [`fourier_coefficients`] with an explicit per-mode panel budget.
pub fn fourier_coefficients_with_budget<F>(
    f: F,
    period: f64,
    eta_max: usize,
    abstol: f64,
    max_panels: usize,
) -> Result<FourierData>
where
    F: Fn(f64) -> f64 + Sync,
{
    if !(abstol > 0.0) {
        return Err(invalid("abstol", "must be positive"));
    }
    if !(period > 0.0) {
        return Err(invalid("period", "must be positive"));
    }
    let outcomes: Vec<_> = (0..=eta_max)
        .into_par_iter()
        .map(|eta| {
            let k = TAU * eta as f64 / period;
            let opts = QuadratureOptions {
                // Tolerance applies to the coefficient, which carries a 1/P factor.
                abstol: abstol * period,
                // Roughly one panel per oscillation before refinement.
                initial_panels: 2 * eta + 4,
                max_panels,
            };
            let out = integrate(|x| Complex64::from_polar(f(x), -k * x), 0.0, period, &opts);
            (eta, out)
        })
        .collect();

    if let Some((eta, out)) = outcomes
        .iter()
        .filter(|(_, out)| !out.converged)
        .max_by(|a, b| a.1.error_estimate.total_cmp(&b.1.error_estimate))
    {
        return Err(Error::QuadratureNonConvergence {
            mode: *eta as i64,
            estimate: out.error_estimate / period,
            abstol,
        });
    }

    let positive: Vec<Complex64> = outcomes.iter().map(|(_, o)| o.value / period).collect();
    let mut coeffs = Vec::with_capacity(2 * eta_max + 1);
    coeffs.extend(positive[1..].iter().rev().map(|b| b.conj()));
    coeffs.extend_from_slice(&positive);
    FourierData::new(eta_max, coeffs)
}

/// Complex partial sum `sum_eta b_eta e^{i k (x - c t) - k^2 nu t}`.
pub fn exact_solution_complex(problem: &PdeProblem, data: &FourierData, x: f64, t: f64) -> Complex64 {
    data.iter()
        .map(|(eta, b)| {
            let spatial = Complex64::from_polar(1.0, problem.wavenumber(eta) * x);
            b * problem.time_factor(eta, t) * spatial
        })
        .sum()
}

/// Real part of the truncated exact solution at `(x, t)`.
pub fn exact_solution(problem: &PdeProblem, data: &FourierData, x: f64, t: f64) -> f64 {
    exact_solution_complex(problem, data, x, t).re
}

/// Evaluates truncated series on the grid `x_k = k P / (N+1)`.
///
/// Modes are folded onto the `N+1` discrete frequencies they alias to and
/// then summed with one inverse FFT per time level, so the cost per level
/// is independent of how many modes are retained.
pub struct GridSampler {
    problem: PdeProblem,
    data: FourierData,
    nodes: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl GridSampler {
    pub fn new(problem: PdeProblem, data: FourierData, n_param: usize) -> Result<Self> {
        if n_param < 2 {
            return Err(invalid("N", format!("need N >= 2, got {n_param}")));
        }
        let nodes = n_param + 1;
        let fft = FftPlanner::new().plan_fft_inverse(nodes);
        Ok(Self {
            problem,
            data,
            nodes,
            fft,
        })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn sample(&self, t: f64) -> Vec<f64> {
        let m = self.nodes as i64;
        let mut bins = vec![Complex64::new(0.0, 0.0); self.nodes];
        for (eta, b) in self.data.iter() {
            if b == Complex64::new(0.0, 0.0) {
                continue;
            }
            bins[eta.rem_euclid(m) as usize] += b * self.problem.time_factor(eta, t);
        }
        self.fft.process(&mut bins);
        bins.into_iter().map(|z| z.re).collect()
    }
}

/// Samples `u(x_k, l h_t)` for `l = 0..levels`; entry `[l][k]`.
pub fn sample_grid_solution(
    problem: &PdeProblem,
    data: &FourierData,
    n_param: usize,
    h_t: f64,
    levels: usize,
) -> Result<Vec<Vec<f64>>> {
    if !(h_t > 0.0) {
        return Err(invalid("h_t", "must be positive"));
    }
    if levels == 0 {
        return Err(invalid("levels", "need at least one level"));
    }
    let sampler = GridSampler::new(*problem, data.clone(), n_param)?;
    Ok((0..levels).map(|l| sampler.sample(l as f64 * h_t)).collect())
}

/// Decay exponents accepted for synthetic coefficients.
pub const DECAY_RATES: [u32; 4] = [0, 2, 4, 8];

/// Synthetic trajectories: `cases[tau][l][k] = u_tau(x_k, l h_t)` for
/// `l = 0..s+Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub problem: PdeProblem,
    pub n_param: usize,
    pub h_t: f64,
    pub s: usize,
    pub q: usize,
    pub decay_p: u32,
    pub seed: u64,
    #[serde(with = "nested")]
    pub cases: Vec<Vec<Vec<f64>>>,
}

impl TrainingSet {
    pub fn levels(&self) -> usize {
        self.s + self.q
    }

    pub fn nodes(&self) -> usize {
        self.n_param + 1
    }

    /// Writes `training_set.json` and one `case_XXXX.csv` per trajectory.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("training_set.json"), serde_json::to_vec_pretty(self)?)?;
        for (tau, case) in self.cases.iter().enumerate() {
            let mut file = std::fs::File::create(dir.join(format!("case_{tau:04}.csv")))?;
            write_levels_csv(&mut file, case)?;
        }
        Ok(())
    }
}

/// Random amplitudes `b_eta = b_{-eta}` for one case, `eta = 0..=(N-1)/2`.
///
/// Each case reads its own ChaCha8 stream (`stream = tau`) of the generator
/// seeded with `seed`, so cases are reproducible independently of how many
/// others are drawn.
pub fn synthetic_amplitudes(n_param: usize, decay_p: u32, seed: u64, tau: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tau);
    let top = n_param.saturating_sub(1) / 2;
    (0..=top)
        .map(|eta| {
            let draw = loop {
                let v: f64 = rng.gen_range(-1.0..1.0);
                if v != -1.0 {
                    break v;
                }
            };
            // The mean mode keeps its raw draw for every p.
            if eta == 0 {
                draw
            } else {
                draw / (eta as f64).powi(decay_p as i32)
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn generate_training_set(
    problem: &PdeProblem,
    n_param: usize,
    h_t: f64,
    s: usize,
    q: usize,
    cases: usize,
    decay_p: u32,
    seed: u64,
) -> Result<TrainingSet> {
    if !DECAY_RATES.contains(&decay_p) {
        return Err(invalid("p", format!("must be one of {DECAY_RATES:?}, got {decay_p}")));
    }
    if cases == 0 {
        return Err(invalid("T", "need at least one training case"));
    }
    if s == 0 || q == 0 {
        return Err(invalid("s/Q", "both must be at least 1"));
    }
    let trajectories = (0..cases as u64)
        .into_par_iter()
        .map(|tau| {
            let amplitudes = synthetic_amplitudes(n_param, decay_p, seed, tau);
            let data = FourierData::from_symmetric_real(&amplitudes)?;
            sample_grid_solution(problem, &data, n_param, h_t, s + q)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingSet {
        problem: *problem,
        n_param,
        h_t,
        s,
        q,
        decay_p,
        seed,
        cases: trajectories,
    })
}

/// Column-major CSV: header `x_index,level_0,...`, then one row per node.
pub fn write_levels_csv<W: Write>(out: &mut W, levels: &[Vec<f64>]) -> Result<()> {
    let nodes = levels.first().map_or(0, Vec::len);
    write!(out, "x_index")?;
    for l in 0..levels.len() {
        write!(out, ",level_{l}")?;
    }
    writeln!(out)?;
    for k in 0..nodes {
        write!(out, "{k}")?;
        for level in levels {
            write!(out, ",{}", numfmt::f17(level[k]))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

mod nested {
    use serde::ser::{SerializeSeq, Serializer};
    use serde::{Deserialize, Deserializer, Serialize};

    struct Row<'a>(&'a [f64]);

    impl Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            crate::numfmt::vec::serialize(self.0, s)
        }
    }

    pub fn serialize<S: Serializer>(cases: &[Vec<Vec<f64>>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(cases.len()))?;
        for case in cases {
            let rows: Vec<Row<'_>> = case.iter().map(|r| Row(r)).collect();
            seq.serialize_element(&rows)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Vec<f64>>>, D::Error> {
        Vec::<Vec<Vec<f64>>>::deserialize(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_cosine() -> FourierData {
        FourierData::from_symmetric_real(&[0.0, 0.5]).unwrap()
    }

    #[test]
    fn bump_values() {
        assert!((bump_initial(0.5) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(bump_initial(0.0), 0.0);
        assert_eq!(bump_initial(-3.0), 0.0);
        assert!((bump_initial(1.5) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((bump_initial(0.2) - bump_initial(-0.8)).abs() < 1e-15);
    }

    #[test]
    fn problem_rejects_bad_parameters() {
        assert!(PdeProblem::new(1.0, -1e-3, 1.0).is_err());
        assert!(PdeProblem::new(1.0, 0.0, 0.0).is_err());
        assert!(PdeProblem::new(f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn cosine_coefficients_are_orthogonal() {
        let data = fourier_coefficients(|x| (TAU * x).cos(), 1.0, 4, 1e-15).unwrap();
        for (eta, b) in data.iter() {
            let expected = if eta.abs() == 1 { 0.5 } else { 0.0 };
            assert!((b - Complex64::new(expected, 0.0)).norm() < 1e-14, "eta {eta}: {b}");
        }
    }

    #[test]
    fn coefficients_respect_the_period() {
        let period = 3.0;
        let data = fourier_coefficients(|x| (TAU * 2.0 * x / period).sin(), period, 3, 1e-15).unwrap();
        assert!((data.coefficient(2) - Complex64::new(0.0, -0.5)).norm() < 1e-14);
        assert!((data.coefficient(-2) - Complex64::new(0.0, 0.5)).norm() < 1e-14);
    }

    #[test]
    fn quadrature_failure_names_a_mode() {
        // A jump at x = 0.3 cannot be resolved to 1e-15 within 16 panels.
        let step = |x: f64| if x < 0.3 { 1.0 } else { 0.0 };
        match fourier_coefficients_with_budget(step, 1.0, 3, 1e-15, 16) {
            Err(Error::QuadratureNonConvergence { mode, estimate, .. }) => {
                assert!((0..=3).contains(&mode));
                assert!(estimate > 1e-15);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(matches!(
            fourier_coefficients(bump_initial, 1.0, 2, 0.0),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn initial_time_reconstructs_partial_sum() {
        let data = FourierData::from_symmetric_real(&[0.3, 0.2, -0.1]).unwrap();
        let problem = PdeProblem::new(1.0, 0.1, 1.0).unwrap();
        for x in [0.0, 0.17, 0.5, 0.93] {
            let expected = 0.3 + 0.4 * (TAU * x).cos() - 0.2 * (2.0 * TAU * x).cos();
            assert!((exact_solution(&problem, &data, x, 0.0) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn pure_advection_translates() {
        let data = FourierData::from_symmetric_real(&[0.1, 0.4, 0.3, -0.2, 0.05]).unwrap();
        let problem = PdeProblem::new(0.7, 0.0, 1.0).unwrap();
        for &(x, t) in &[(0.1, 0.3), (0.45, 2.0), (0.9, 17.3)] {
            let moved = exact_solution(&problem, &data, x, t);
            let origin = exact_solution(&problem, &data, x - problem.c * t, 0.0);
            assert!((moved - origin).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_decays_in_closed_form() {
        let problem = PdeProblem::new(0.0, 0.05, 1.0).unwrap();
        let data = single_cosine();
        for &(x, t) in &[(0.0, 0.0), (0.2, 0.5), (0.7, 3.0)] {
            let expected = (TAU * x).cos() * (-TAU * TAU * problem.nu * t).exp();
            assert!((exact_solution(&problem, &data, x, t) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_sampler_matches_direct_summation() {
        let problem = PdeProblem::new(1.0, 1e-3, 1.0).unwrap();
        // Modes beyond the grid Nyquist exercise the aliasing fold.
        let amplitudes: Vec<f64> = (0..40).map(|e| 1.0 / (1.0 + e as f64).powi(2)).collect();
        let data = FourierData::from_symmetric_real(&amplitudes).unwrap();
        let n_param = 12;
        let levels = sample_grid_solution(&problem, &data, n_param, 0.37, 4).unwrap();
        for (l, column) in levels.iter().enumerate() {
            for (k, &v) in column.iter().enumerate() {
                let x = k as f64 / (n_param + 1) as f64;
                let direct = exact_solution(&problem, &data, x, l as f64 * 0.37);
                assert!((v - direct).abs() < 1e-12, "l {l} k {k}");
            }
        }
    }

    #[test]
    fn grid_samples_shift_under_grid_aligned_advection() {
        let n_param = 10;
        let h_x = 1.0 / (n_param + 1) as f64;
        let problem = PdeProblem::new(1.0, 0.0, 1.0).unwrap();
        let data = FourierData::from_symmetric_real(&[0.2, 0.5, -0.3, 0.1]).unwrap();
        let levels = sample_grid_solution(&problem, &data, n_param, h_x, 5).unwrap();
        assert_eq!(levels.len(), 5);
        for l in 0..4 {
            for k in 0..=n_param {
                let prev = (k + n_param) % (n_param + 1);
                assert!((levels[l + 1][k] - levels[l][prev]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_data_is_stationary() {
        let problem = PdeProblem::new(1.0, 0.3, 1.0).unwrap();
        let data = FourierData::from_symmetric_real(&[0.75]).unwrap();
        let levels = sample_grid_solution(&problem, &data, 6, 0.1, 3).unwrap();
        for column in &levels {
            assert!(column.iter().all(|&v| (v - 0.75).abs() < 1e-15));
        }
    }

    #[test]
    fn single_level_is_the_initial_data() {
        let problem = PdeProblem::new(1.0, 0.3, 1.0).unwrap();
        let data = FourierData::from_symmetric_real(&[0.1, 0.2]).unwrap();
        let levels = sample_grid_solution(&problem, &data, 7, 0.1, 1).unwrap();
        assert_eq!(levels.len(), 1);
        for (k, &v) in levels[0].iter().enumerate() {
            let x = k as f64 / 8.0;
            assert!((v - (0.1 + 0.4 * (TAU * x).cos())).abs() < 1e-14);
        }
    }

    #[test]
    fn training_set_shapes_and_decay() {
        let problem = PdeProblem::new(1.0, 1e-2, 1.0).unwrap();
        let set = generate_training_set(&problem, 21, 1e-3, 2, 3, 4, 8, 7).unwrap();
        assert_eq!(set.cases.len(), 4);
        for case in &set.cases {
            assert_eq!(case.len(), 5);
            assert!(case.iter().all(|level| level.len() == 22));
        }
        for tau in 0..4 {
            let a = synthetic_amplitudes(21, 8, 7, tau);
            assert_eq!(a.len(), 11);
            for (eta, &v) in a.iter().enumerate().skip(1) {
                assert!(v.abs() <= (eta as f64).powi(-8));
            }
            assert!(a[0].abs() < 1.0);
        }
    }

    #[test]
    fn training_set_without_decay_spans_unit_interval() {
        let a = synthetic_amplitudes(51, 0, 3, 0);
        assert!(a.iter().all(|v| v.abs() < 1.0));
        // Undamped draws: some high mode carries an O(1) amplitude.
        assert!(a[10..].iter().any(|v| v.abs() > 0.5));
    }

    #[test]
    fn training_set_is_deterministic_and_validated() {
        let problem = PdeProblem::new(1.0, 0.0, 1.0).unwrap();
        let a = generate_training_set(&problem, 11, 0.01, 3, 2, 3, 2, 99).unwrap();
        let b = generate_training_set(&problem, 11, 0.01, 3, 2, 3, 2, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_training_set(&problem, 11, 0.01, 3, 2, 3, 2, 100).unwrap();
        assert_ne!(a, c);
        assert!(generate_training_set(&problem, 11, 0.01, 3, 2, 3, 3, 99).is_err());
        assert!(generate_training_set(&problem, 11, 0.01, 3, 2, 0, 2, 99).is_err());
    }

    #[test]
    fn training_set_json_round_trips() {
        let problem = PdeProblem::new(1.0, 1e-4, 1.0).unwrap();
        let set = generate_training_set(&problem, 8, 0.01, 2, 1, 2, 4, 5).unwrap();
        let text = serde_json::to_string(&set).unwrap();
        let back: TrainingSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        write_levels_csv(&mut out, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x_index,level_0,level_1");
        assert_eq!(lines[1], "0,1.0000000000000000e0,3.0000000000000000e0");
        assert_eq!(lines.len(), 3);
    }
}
