//! Adaptive Gauss–Kronrod (7/15) integration on finite and infinite ranges.

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

const MAX_DEPTH: u32 = 60;

/// Absolute tolerance used for standard-normal integrands.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Half-width of the integration window for standard-normal integrands.
pub const NORMAL_CUTOFF: f64 = 12.0;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth >= MAX_DEPTH || !err.is_finite() {
        return value;
    }
    let mid = 0.5 * (a + b);
    adapt(f, a, mid, 0.5 * tol, depth + 1) + adapt(f, mid, b, 0.5 * tol, depth + 1)
}

/// `∫_a^b f` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    adapt(&f, a, b, tol, 0)
}

/// `∫_a^b f` split at interior `breaks` (kinks of the integrand).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut points: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let share = tol / (points.len() - 1) as f64;
    points.windows(2).map(|w| adapt(&f, w[0], w[1], share, 0)).sum()
}

/// `∫_0^∞ f` through the substitution `x = s / (1 - s)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: f64) -> f64 {
    let g = |s: f64| {
        let one_minus = 1.0 - s;
        let x = s / one_minus;
        let v = f(x) / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mapped: Vec<f64> = breaks.iter().filter(|&&x| x > 0.0).map(|&x| x / (1.0 + x)).collect();
    integrate_with_breaks(g, 0.0, 1.0, &mapped, tol)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E h(g)` for `g ~ N(0, 1)` over `[-12, 12]`, splitting at `breaks`.
pub fn normal_expectation<F: Fn(f64) -> f64>(h: F, breaks: &[f64]) -> f64 {
    let integrand = |x: f64| h(x) * normal_pdf(x);
    integrate_with_breaks(integrand, -NORMAL_CUTOFF, NORMAL_CUTOFF, breaks, DEFAULT_TOLERANCE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomials_are_exact() {
        let v = integrate(|x| x.powi(5) - 3.0 * x * x + 1.0, -1.0, 2.0, 1e-12);
        // 64/6 - 1/6 - (8 + 1) + 3
        assert_abs_diff_eq!(v, 63.0 / 6.0 - 9.0 + 3.0, epsilon = 1e-12);
    }

    #[test]
    fn normal_moments() {
        assert_abs_diff_eq!(normal_expectation(|_| 1.0, &[]), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(normal_expectation(|x| x * x, &[]), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(normal_expectation(|x| x.powi(4), &[]), 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            normal_expectation(f64::abs, &[0.0]),
            (2.0 / std::f64::consts::PI).sqrt(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn half_line_exponential() {
        assert_abs_diff_eq!(integrate_half_line(|x| (-x).exp(), &[], 1e-11), 1.0, epsilon = 1e-9);
        // ∫_0^∞ 1/(1+x)^2 = 1
        assert_abs_diff_eq!(
            integrate_half_line(|x| 1.0 / ((1.0 + x) * (1.0 + x)), &[], 1e-11),
            1.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn kinked_integrand_with_breaks() {
        // ∫_{-2}^{2} min(x², 1) dx = 2/3 + 2 = 8/3
        let v = integrate_with_breaks(|x| (x * x).min(1.0), -2.0, 2.0, &[-1.0, 1.0], 1e-12);
        assert_abs_diff_eq!(v, 8.0 / 3.0, epsilon = 1e-12);
    }
}
