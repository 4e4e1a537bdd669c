//! Adaptive Gauss–Kronrod (7/15) integration.
//!
//! Used as the independent oracle for the closed-form likelihood ratios: the
//! integrands are evaluated from their defining densities and never touch the
//! normal CDF.

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
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

#[allow(clippy::excessive_precision)]
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

/// Gauss weights for the odd-indexed Kronrod nodes (and the centre).
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 4000;
const ROUNDOFF_ULPS: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Panel {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Panel {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Globally adaptive integration of `f` over the finite interval `[a, b]`,
/// starting from `panels` equal subintervals.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    panels: usize,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("bounds", "quadrature bounds must be finite"));
    }
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut work: Vec<Panel> = (0..panels)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = if i + 1 == panels { b } else { lo + width };
            gk15(&f, lo, hi)
        })
        .collect();

    loop {
        let value: f64 = work.iter().map(|p| p.value).sum();
        let error: f64 = work.iter().map(|p| p.error).sum();
        // below this the error estimate is dominated by rounding in the sums
        let roundoff = ROUNDOFF_ULPS * f64::EPSILON * work.iter().map(|p| p.value.abs()).sum::<f64>();
        if error <= abs_tol.max(rel_tol * value.abs()).max(roundoff) {
            return Ok(Integral { value, error });
        }
        if work.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureNonConvergence {
                estimate: value,
                error,
            });
        }
        let (worst, _) = work
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty panel list");
        let p = work.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        work.push(gk15(&f, p.a, mid));
        work.push(gk15(&f, mid, p.b));
    }
}

/// `log ∫_lo^hi exp(g(t)) dt` for a unimodal log-integrand whose mode is near
/// `centre` with spread `scale`.
///
/// The integration window is `centre ± 12·scale` intersected with `[lo, hi]`,
/// and `g` is shifted by its value at the clamped centre before
/// exponentiation.
pub fn log_integrate_exp(
    g: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    centre: f64,
    scale: f64,
) -> Result<f64> {
    const HALF_WIDTH_SDS: f64 = 12.0;
    let anchor = centre.clamp(lo, hi);
    let a = lo.max(anchor - HALF_WIDTH_SDS * scale);
    let b = hi.min(anchor + HALF_WIDTH_SDS * scale);
    if a.is_nan() || b.is_nan() || a >= b {
        return Ok(f64::NEG_INFINITY);
    }
    let shift = g(anchor);
    if !shift.is_finite() {
        return Err(Error::NonFinite("log-integrand at window anchor"));
    }
    // g itself carries rounding error of order ε·|g|, which exp() turns into
    // relative noise of the same size
    let rel_tol = 1e-13_f64.max(64.0 * f64::EPSILON * shift.abs());
    let res = integrate(|t| (g(t) - shift).exp(), a, b, 24, rel_tol, 0.0)?;
    Ok(shift + res.value.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_transcendental_integrals() {
        let r = integrate(|x| x * x, 0.0, 3.0, 1, 1e-14, 0.0).unwrap();
        assert!((r.value - 9.0).abs() < 1e-13);
        let r = integrate(f64::sin, 0.0, std::f64::consts::PI, 4, 1e-14, 0.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-13);
        let r = integrate(|x| (-x * x).exp(), -10.0, 10.0, 8, 1e-14, 0.0).unwrap();
        assert!((r.value - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn log_integral_of_shifted_gaussian_kernel() {
        // ∫ exp(-(t-m)²/(2s²) + 5000) dt = 5000 + log(s√(2π))
        let (m, s) = (3.7, 0.02);
        let got = log_integrate_exp(|t| -0.5 * ((t - m) / s).powi(2) + 5000.0, f64::NEG_INFINITY, f64::INFINITY, m, s)
            .unwrap();
        let want = 5000.0 + (s * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn infinite_bounds_rejected() {
        assert!(integrate(|x| x, 0.0, f64::INFINITY, 1, 1e-10, 0.0).is_err());
    }

    #[test]
    fn non_convergence_reports_estimate() {
        let err = integrate(|x| if x < 0.5 { 0.0 } else { 1.0 / (x - 0.5).sqrt().max(1e-300) }, 0.0, 1.0, 1, 1e-15, 0.0);
        match err {
            Err(Error::QuadratureNonConvergence { estimate, .. }) => assert!(estimate.is_finite()),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
