//! Independent reference values for the Berman constants.

use std::f64::consts::{PI, SQRT_2};

use crate::error::Result;
use crate::scaling::normal_survival;

const Z_SPAN: f64 = 12.0;

/// `E[𝕀(J>x)/J | Z = z]` for `J = √(2z² + 4E)`, `E ~ Exp(1)`.
fn alpha2_conditional(z: f64, x: f64) -> f64 {
    let c = 2.0 * z * z;
    let w0 = c.max(x * x);
    // ∫_{e0}^∞ e^{−e} (c + 4e)^{−1/2} de in closed form
    0.5 * PI.sqrt() * (c / 4.0).exp() * libm::erfc(w0.sqrt() / 2.0)
}

fn std_normal_density(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `B₂(x) = E[𝕀(J>x)/J]` for the continuous α = 2 excursion length
/// `J = √(2Z² + 4E)`, by quadrature over `Z`.
pub fn alpha2_berman(x: f64) -> Result<f64> {
    let f = |z: f64| alpha2_conditional(z, x) * std_normal_density(z);
    let breaks = [-x / SQRT_2, 0.0, x / SQRT_2];
    crate::numeric::integrate_with_breaks(f, -Z_SPAN, Z_SPAN, &breaks, 1e-12, 1e-15)
}

/// `F₂(x) = 1 − B₂(x)/B₂(0)`.
pub fn alpha2_jump_cdf(x: f64) -> Result<f64> {
    Ok(1.0 - alpha2_berman(x)? / alpha2_berman(0.0)?)
}

/// Windowed constant `B₂(S, x)` for the continuous α = 2 field on `[0, S]`.
///
/// For fixed `Z` the path `√2 Z s − s²` is a concave parabola, so the
/// sojourn of `W + z` exceeds `x` iff `z > −M_x(Z)` with `M_x` the best
/// endpoint minimum over windows of length `x`; the `z`-integral is then
/// `e^{M_x(Z)}` and the remaining `Z`-integral is done numerically.
pub fn alpha2_windowed(s_max: f64, x: f64) -> Result<f64> {
    if x >= s_max {
        return Ok(0.0);
    }
    let f = |z: f64| {
        let vertex = z / SQRT_2;
        let a = (vertex - 0.5 * x).clamp(0.0, s_max - x);
        // W(s) − z²/2 = −(s − z/√2)²
        let gap = (a - vertex).abs().max((a + x - vertex).abs());
        (-gap * gap).exp() / (2.0 * PI).sqrt()
    };
    let breaks = [0.0, SQRT_2 * 0.5 * x, SQRT_2 * (s_max - 0.5 * x), SQRT_2 * s_max];
    crate::numeric::integrate_with_breaks(f, -Z_SPAN, Z_SPAN + SQRT_2 * s_max, &breaks, 1e-12, 1e-15)
}

/// Discrete Pickands constant of `√2 B(s) − |s|` sampled on the grid `δℤ`:
/// `exp(−2 Σ_{k≥1} Ψ(√(kδ/2))/k) / δ`.
pub fn discrete_pickands_bm(delta: f64) -> f64 {
    let mut sum = 0.0;
    let mut k = 1u64;
    loop {
        let term = normal_survival((k as f64 * delta / 2.0).sqrt()) / k as f64;
        sum += term;
        if term < 1e-18 {
            break;
        }
        k += 1;
    }
    (-2.0 * sum).exp() / delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::integrate;

    fn conditional_by_quadrature(z: f64, x: f64) -> f64 {
        let c = 2.0 * z * z;
        let e0 = ((x * x - c) / 4.0).max(0.0);
        integrate(|e: f64| (-e).exp() / (c + 4.0 * e).sqrt(), e0, e0 + 60.0, 1e-13, 0.0).unwrap()
    }

    #[test]
    fn conditional_closed_form_matches_quadrature() {
        for (z, x) in [(0.0, 0.0), (0.3, 1.0), (-1.2, 0.5), (2.0, 4.0), (0.01, 2.0)] {
            let closed = alpha2_conditional(z, x);
            let quad = conditional_by_quadrature(z, x);
            assert!((closed / quad - 1.0).abs() < 1e-10, "z={z} x={x}: {closed} vs {quad}");
        }
    }

    #[test]
    fn alpha2_constant_is_inverse_sqrt_pi() {
        let b0 = alpha2_berman(0.0).unwrap();
        assert!((b0 - 1.0 / PI.sqrt()).abs() < 1e-12, "{b0}");
        let f = alpha2_jump_cdf(0.0).unwrap();
        assert!(f.abs() < 1e-14);
        let mut prev = b0;
        for x in [0.5, 1.0, 2.0, 4.0] {
            let b = alpha2_berman(x).unwrap();
            assert!(b < prev && b > 0.0);
            prev = b;
        }
    }

    #[test]
    fn alpha2_windowed_grows_linearly() {
        // B₂(S,0)/S → 1/√π, and B₂(S,0) ≥ 1 from the s = 0 point alone
        let small = alpha2_windowed(0.0 + 1e-9, 0.0).unwrap();
        assert!((small - 1.0).abs() < 1e-6, "{small}");
        let big = alpha2_windowed(400.0, 0.0).unwrap();
        assert!((big / 400.0 - 1.0 / PI.sqrt()).abs() < 0.01, "{}", big / 400.0);
        assert_eq!(alpha2_windowed(1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn discrete_pickands_values() {
        // Values of the series for three grid sizes, computed independently.
        assert!((discrete_pickands_bm(0.1) - 0.770_869_195_502_479_3).abs() < 1e-9);
        assert!((discrete_pickands_bm(0.05) - 0.831_832_507_030_438_3).abs() < 1e-9);
        assert!((discrete_pickands_bm(0.005) - 0.943_408_158_358_458_6).abs() < 1e-7);
    }
}
