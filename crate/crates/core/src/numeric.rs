//! Small numerical toolbox shared by the modules: pairwise reductions,
//! adaptive Gauss–Kronrod quadrature and a few special functions.

use crate::error::{Error, Result};

/// Pairwise (cascade) summation. Order-insensitive to within `O(ε log n)`,
/// and deterministic for a fixed input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sample mean and standard error of the mean of i.i.d. observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

pub fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len();
    if n == 0 {
        return MeanSe {
            mean: f64::NAN,
            se: f64::NAN,
        };
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return MeanSe { mean, se: 0.0 };
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    MeanSe {
        mean,
        se: (var / n as f64).sqrt(),
    }
}

/// Mean and binomial standard error of a vector of indicators.
pub fn proportion(hits: usize, trials: usize) -> MeanSe {
    if trials == 0 {
        return MeanSe {
            mean: f64::NAN,
            se: f64::NAN,
        };
    }
    let p = hits as f64 / trials as f64;
    MeanSe {
        mean: p,
        se: (p * (1.0 - p) / trials as f64).sqrt(),
    }
}

// Gauss–Kronrod 7/15 nodes on [-1, 1] (non-negative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Subdivides the interval with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numeric(format!("integration bounds must be finite: [{a}, {b}]")));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (v, e) = gk15(&f, lo, hi);
    let mut parts = vec![(lo, hi, v, e)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::Numeric("integrand produced a non-finite value".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(sign * total);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Numeric(format!(
                "quadrature did not converge: estimate {total:e}, error {err:e}"
            )));
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (l, r, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (l + r);
        let (v1, e1) = gk15(&f, l, mid);
        let (v2, e2) = gk15(&f, mid, r);
        parts.push((l, mid, v1, e1));
        parts.push((mid, r, v2, e2));
    }
}

/// Integrate over `[a, b]` splitting at the given interior breakpoints
/// (kinks of the integrand).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64> {
    let mut knots = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    knots.extend(inner);
    knots.push(b);
    let mut total = 0.0;
    for w in knots.windows(2) {
        total += integrate(&f, w[0], w[1], rel_tol, abs_tol)?;
    }
    Ok(total)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// `Γ(a) / Γ(b)` for positive arguments, evaluated in log space.
pub fn gamma_ratio(a: f64, b: f64) -> f64 {
    (ln_gamma(a) - ln_gamma(b)).exp()
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `Ei(x)` for `x > 0` by its power series.
pub fn exp_integral_ei(x: f64) -> f64 {
    assert!(x > 0.0, "Ei is only implemented for positive arguments");
    let mut term = 1.0;
    let mut sum = 0.0;
    let mut k = 1.0;
    loop {
        term *= x / k;
        let add = term / k;
        sum += add;
        if add < sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    EULER_GAMMA + x.ln() + sum
}

/// Logarithmic integral `li(x) = Ei(ln x)` for `x > 1`.
pub fn log_integral(x: f64) -> f64 {
    exp_integral_ei(x.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_integers() {
        let v: Vec<f64> = (1..=10_000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 50_005_000.0);
    }

    #[test]
    fn quadrature_of_polynomial_and_kink() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-12, 0.0).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let v = integrate_with_breaks(|x: f64| (x - 1.0).abs(), 0.0, 3.0, &[1.0], 1e-12, 0.0).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn gamma_against_reference_values() {
        // mpmath, 30 digits
        for (x, want) in [
            (0.5, 1.772_453_850_905_516),
            (0.9, 1.068_628_702_119_319_3),
            (0.1, 9.513_507_698_668_732),
        ] {
            assert!((gamma(x) / want - 1.0).abs() < 1e-12, "Γ({x})");
        }
        assert!((gamma_ratio(150.5, 151.0) - (ln_gamma(150.5) - ln_gamma(151.0)).exp()).abs() < 1e-15);
    }

    #[test]
    fn ei_reference_values() {
        // mpmath ei(1), ei(10), li(100)
        assert!((exp_integral_ei(1.0) / 1.895_117_816_355_936_8 - 1.0).abs() < 1e-13);
        assert!((exp_integral_ei(10.0) / 2_492.228_976_241_877_7 - 1.0).abs() < 1e-13);
        assert!((log_integral(100.0) / 30.126_141_584_079_63 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn proportion_se_is_binomial() {
        let p = proportion(25, 100);
        assert_eq!(p.mean, 0.25);
        assert!((p.se - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
    }
}
