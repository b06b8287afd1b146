//! Globally adaptive 7/15-point Gauss-Kronrod quadrature for complex-valued
//! integrands on a finite interval.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

// Kronrod abscissae on [-1, 1], descending; odd indices are the Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub abstol: f64,
    /// Uniform panels the interval is split into before refinement starts.
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abstol: 1e-15,
            initial_panels: 1,
            max_panels: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOutcome {
    pub value: Complex64,
    pub error_estimate: f64,
    pub panels: usize,
    pub converged: bool,
    /// The estimate exceeds `abstol` only through panels whose discrepancy
    /// is at the rounding level of their own sums, which bisection cannot
    /// reduce further.
    pub roundoff_limited: bool,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    /// `error`, or 0 once it is below the rounding floor.
    reducible: f64,
}

/// Rounding floor of a panel sum relative to `int |f|` (as in QUADPACK).
const ROUNDOFF_FACTOR: f64 = 50.0 * f64::EPSILON;

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.reducible
            .total_cmp(&other.reducible)
            .then(self.error.total_cmp(&other.error))
    }
}

fn gauss_kronrod<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut absolute = fc.norm() * WGK[7];
    for i in 0..7 {
        let dx = half * XGK[i];
        let (left, right) = (f(center - dx), f(center + dx));
        let pair = left + right;
        kronrod += pair * WGK[i];
        absolute += (left.norm() + right.norm()) * WGK[i];
        if i % 2 == 1 {
            gauss += pair * WG[i / 2];
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).norm();
    let floor = ROUNDOFF_FACTOR * absolute * half.abs();
    let reducible = if error > floor { error } else { 0.0 };
    Panel {
        a,
        b,
        value,
        error,
        reducible,
    }
}

/// Integrates `f` over `[a, b]`, bisecting the panel with the largest
/// Kronrod-Gauss discrepancy until the summed discrepancy is at most
/// `abstol` or the panel budget runs out. Panels already at their rounding
/// floor are not split; if only those keep the sum above `abstol` the result
/// counts as converged and is flagged `roundoff_limited`.
pub fn integrate<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, opts: &QuadratureOptions) -> QuadratureOutcome {
    let count = opts.initial_panels.max(1);
    let width = (b - a) / count as f64;
    let mut heap: BinaryHeap<Panel> = (0..count)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = if i + 1 == count { b } else { lo + width };
            gauss_kronrod(&f, lo, hi)
        })
        .collect();

    let total = |heap: &BinaryHeap<Panel>| heap.iter().fold((0.0, 0.0), |(e, r), p| (e + p.error, r + p.reducible));
    let (mut error, mut reducible) = total(&heap);
    while error > opts.abstol && reducible > opts.abstol && heap.len() < opts.max_panels {
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) {
            // Panel cannot be split in floating point.
            heap.push(worst);
            break;
        }
        heap.push(gauss_kronrod(&f, worst.a, mid));
        heap.push(gauss_kronrod(&f, mid, worst.b));
        (error, reducible) = total(&heap);
    }

    // Sum in position order so the result is independent of heap layout.
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value = panels.iter().map(|p| p.value).sum();
    QuadratureOutcome {
        value,
        error_estimate: error,
        panels: panels.len(),
        converged: error <= opts.abstol || reducible <= opts.abstol,
        roundoff_limited: error > opts.abstol && reducible <= opts.abstol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_weights_integrate_constants() {
        let total = 2.0 * WGK[..7].iter().sum::<f64>() + WGK[7];
        assert!((total - 2.0).abs() < 1e-15);
        let gauss = 2.0 * (WG[0] + WG[1] + WG[2]) + WG[3];
        assert!((gauss - 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_panel_is_exact_for_high_degree_polynomials() {
        // K15 integrates degree 22, G7 degree 13 exactly.
        let opts = QuadratureOptions {
            abstol: 1.0,
            ..Default::default()
        };
        for m in [0, 5, 13, 22] {
            let out = integrate(|x| Complex64::new(x.powi(m), 0.0), 0.0, 1.0, &opts);
            let exact = 1.0 / (m as f64 + 1.0);
            assert!((out.value.re - exact).abs() < 1e-14, "degree {m}");
        }
    }

    #[test]
    fn oscillatory_integrand_converges() {
        // Integral of e^{-i 2 pi 40 x} * x over [0, 1] is i / (2 pi 40).
        let k = std::f64::consts::TAU * 40.0;
        let out = integrate(
            |x| Complex64::from_polar(x, -k * x),
            0.0,
            1.0,
            &QuadratureOptions::default(),
        );
        assert!(out.converged);
        assert!((out.value - Complex64::new(0.0, 1.0 / k)).norm() < 1e-14);
    }

    #[test]
    fn panel_budget_exhaustion_is_reported() {
        let opts = QuadratureOptions {
            abstol: 1e-15,
            initial_panels: 1,
            max_panels: 4,
        };
        let out = integrate(|x| Complex64::new(x.abs().sqrt(), 0.0), -1.0, 1.0, &opts);
        assert!(!out.converged);
        assert!(out.error_estimate > 1e-15);
    }
}
