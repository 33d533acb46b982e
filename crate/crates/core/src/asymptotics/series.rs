//! Series over convolution powers: the `D3` jump series and the compound
//! Poisson tail.

use serde::{Deserialize, Serialize};

use super::convolution::FAlphaConvolution;
use crate::error::{Error, Result};
use crate::numeric::{gamma, gamma_ratio, ln_gamma};

/// Hard cap on the number of convolution powers a series may request.
pub const MAX_TERMS: usize = 10_000;

/// A truncated series with a rigorous error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    /// `|value − exact| ≤ error_bound`.
    pub error_bound: f64,
    pub terms: usize,
    /// Total weight of the omitted terms, the bound obtained from `F̄^{*k} ≤ 1`.
    pub uniform_remainder: f64,
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("tolerance must be positive, got {tol}")))
    }
}

/// Truncated sum `Σ_{k≥1} w_k F̄^{*k}(x)` given remainder weights
/// `r_K = Σ_{k>K} w_k`. As `F̄^{*k}` is nondecreasing in `k` the omitted
/// terms lie in `[r_K F̄^{*K}(x), r_K]`; the lower end is added and
/// `r_K F^{*K}(x)` is the bound.
fn sum_series(
    x: f64,
    conv: &mut FAlphaConvolution,
    tol: f64,
    weight: impl Fn(usize) -> f64,
    remainder: impl Fn(usize) -> f64,
) -> Result<SeriesValue> {
    check_tol(tol)?;
    if !(x >= 0.0) {
        return Err(Error::range("x", x, 0.0, f64::INFINITY));
    }
    let mut partial = 0.0;
    for k in 1..=MAX_TERMS {
        conv.ensure(k)?;
        let tail = conv.tail(k, x)?;
        partial += weight(k) * tail;
        let r = remainder(k);
        let bound = r * (1.0 - tail);
        if bound < tol {
            return Ok(SeriesValue {
                value: partial + r * tail,
                error_bound: bound,
                terms: k,
                uniform_remainder: r,
            });
        }
    }
    Err(Error::Truncation(format!(
        "series at x={x} did not reach tolerance {tol:e} within {MAX_TERMS} terms"
    )))
}

/// Coefficient `λ Γ(k−λ)/k!`.
pub fn d3_coefficient(lambda: f64, k: usize) -> f64 {
    lambda * gamma_ratio(k as f64 - lambda, k as f64 + 1.0)
}

/// `λ Σ_{k>K} Γ(k−λ)/k! = Γ(K+1−λ)/Γ(K+1)`.
pub fn d3_remainder(lambda: f64, k: usize) -> f64 {
    gamma_ratio(k as f64 + 1.0 - lambda, k as f64 + 1.0)
}

/// Smallest `K` with `d3_remainder(λ, K) < tol`, i.e. the truncation the
/// uniform bound `F̄^{*k} ≤ 1` alone would need. Saturates at `u64::MAX`.
pub fn uniform_bound_terms(lambda: f64, tol: f64) -> u64 {
    // remainder ~ K^{−λ}; bracket then bisect
    let r = |k: f64| (ln_gamma(k + 1.0 - lambda) - ln_gamma(k + 1.0)).exp();
    let mut hi = 1.0f64;
    while r(hi) >= tol {
        hi *= 2.0;
        if hi > 1.8e19 {
            return u64::MAX;
        }
    }
    let mut lo = (hi / 2.0).floor();
    if r(lo) < tol {
        return lo as u64;
    }
    while hi - lo > 1.0 {
        let mid = ((lo + hi) / 2.0).floor();
        if r(mid) < tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi as u64
}

/// `λ Σ_{k≥1} Γ(k−λ)/k! · F̄^{*k}(x)` for `λ ∈ (0, 1)`.
pub fn d3_series(lambda: f64, x: f64, conv: &mut FAlphaConvolution, tol: f64) -> Result<SeriesValue> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::range("lambda", lambda, 0.0, 1.0));
    }
    sum_series(x, conv, tol, |k| d3_coefficient(lambda, k), |k| d3_remainder(lambda, k))
}

/// `Γ(1−λ)`, the value of [`d3_series`] at `x = 0`.
pub fn d3_series_at_zero(lambda: f64) -> f64 {
    gamma(1.0 - lambda)
}

fn poisson_pmf(l: f64, k: usize) -> f64 {
    (k as f64 * l.ln() - l - ln_gamma(k as f64 + 1.0)).exp()
}

/// `P(N > K)` for `N ~ Poisson(l)`, summed upward from `K+1`.
fn poisson_upper(l: f64, k: usize) -> f64 {
    let mut term = poisson_pmf(l, k + 1);
    let mut sum = 0.0;
    let mut j = k + 1;
    while term > 0.0 {
        sum += term;
        j += 1;
        term *= l / j as f64;
        if term < sum * 1e-17 && j as f64 > l {
            break;
        }
    }
    sum
}

/// `P(Y(l) > x)` for the compound Poisson sum of `N(l) ~ Poisson(l)` jumps.
pub fn compound_poisson_tail(l: f64, x: f64, conv: &mut FAlphaConvolution, tol: f64) -> Result<SeriesValue> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::range("l", l, 0.0, f64::INFINITY));
    }
    sum_series(x, conv, tol, |k| poisson_pmf(l, k), |k| poisson_upper(l, k))
}
