//! Level-dependent time scaling `v(u)`, solving `u²(1 − r(1/v)) = 1`, the
//! normal survival function `Ψ(u)` and the excursion arrival scale
//! `m(u) = (B_α(0) v(u) Ψ(u))⁻¹`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};

/// Standard normal survival function `Ψ(u) = P(N(0,1) > u)`.
///
/// Uses `erfc` (musl port) up to `u = 8` and the asymptotic expansion
/// `φ(u)/u · Σ (−1)ⁿ (2n−1)!! u^{−2n}` beyond, truncated at its smallest term.
pub fn normal_survival(u: f64) -> f64 {
    if u.is_nan() {
        return f64::NAN;
    }
    if u <= 8.0 {
        return 0.5 * libm::erfc(u * FRAC_1_SQRT_2);
    }
    let density = (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
    if density == 0.0 {
        return 0.0;
    }
    let inv_u2 = 1.0 / (u * u);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 1.0;
    loop {
        let next = -term * (2.0 * n - 1.0) * inv_u2;
        if next.abs() >= term.abs() || next.abs() < 1e-17 {
            break;
        }
        sum += next;
        term = next;
        n += 1.0;
    }
    density / u * sum
}

const BRACKET_LO: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;
const RESIDUAL_TOL: f64 = 1e-10;

/// Solves `u²(1 − r(1/v)) = 1` for `v`, with `u > 1`.
///
/// Bisection on `w = 1/v` (geometric midpoints) over `[1e-12, 1]`; the lower
/// end shrinks and the upper end doubles while the root lies outside. Models with an explicit
/// inversion return the closed form after the bisection cross-check.
pub fn solve_v(model: &CovarianceModel, u: f64) -> Result<f64> {
    if !(u > 1.0 && u.is_finite()) {
        return Err(Error::range("level u", u, 1.0, f64::INFINITY));
    }
    let target = 1.0 / (u * u);
    let excess = |w: f64| -> Result<f64> { Ok(model.one_minus_r(w)? - target) };

    let mut lo = BRACKET_LO;
    while excess(lo)? >= 0.0 {
        if lo < 1e-280 {
            return Err(Error::Solver(format!(
                "no sign change: 1 - r({lo:e}) already exceeds u^-2 at u = {u}"
            )));
        }
        lo *= 1e-6;
    }
    let mut hi = 1.0f64.min(model.max_lag());
    while excess(hi)? < 0.0 {
        if hi >= model.max_lag() || hi >= 1e6 {
            return Err(Error::Solver(format!(
                "no sign change in [{lo:e}, {hi}] for u = {u}"
            )));
        }
        lo = hi;
        hi = (2.0 * hi).min(model.max_lag());
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = if excess(lo)?.abs() <= excess(hi)?.abs() { lo } else { hi };
    let residual = u * u * (model.one_minus_r(w)?) - 1.0;
    if residual.abs() > RESIDUAL_TOL {
        return Err(Error::Solver(format!(
            "residual {residual:e} after bisection at u = {u}"
        )));
    }
    match closed_form_v(model, u) {
        Some(v) => {
            if (v * w - 1.0).abs() > 1e-8 {
                return Err(Error::Solver(format!(
                    "closed form v = {v} disagrees with bisection v = {}",
                    1.0 / w
                )));
            }
            Ok(v)
        }
        None => Ok(1.0 / w),
    }
}

/// Explicit inversion of the defining equation, where one exists.
pub fn closed_form_v(model: &CovarianceModel, u: f64) -> Option<f64> {
    match model {
        CovarianceModel::FracOu { alpha } => {
            let w = (-(-1.0 / (u * u)).ln_1p()).powf(1.0 / alpha);
            Some(1.0 / w)
        }
        // r(t) = 1 − t/a on [0, a] when α = 1.
        CovarianceModel::FbmIncrement { alpha, a } if *alpha == 1.0 => Some(u * u / a),
        _ => None,
    }
}

/// Scaling quantities at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelScaling {
    pub u: f64,
    pub v: f64,
    pub psi: f64,
    pub m: f64,
}

impl LevelScaling {
    /// Grid step in process time giving `points_per_unit` points per `1/v(u)`.
    pub fn grid_step(&self, points_per_unit: f64) -> f64 {
        1.0 / (points_per_unit * self.v)
    }
}

/// Composes [`solve_v`] and [`normal_survival`] with a Berman constant
/// estimate `b0 = B̂_α(0)` into `m(u) = 1 / (b0 v Ψ(u))`.
pub fn scaling_bundle(model: &CovarianceModel, u: f64, b0: f64) -> Result<LevelScaling> {
    if !(b0 > 0.0 && b0.is_finite()) {
        return Err(Error::invalid(format!("Berman constant must be positive, got {b0}")));
    }
    let v = solve_v(model, u)?;
    let psi = normal_survival(u);
    Ok(LevelScaling {
        u,
        v,
        psi,
        m: 1.0 / (b0 * v * psi),
    })
}
