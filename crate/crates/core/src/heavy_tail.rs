//! The random horizon `T`: tail functions, inverse-CDF samplers and
//! integrated tails `l(u) = ∫₀ᵘ P(T > t) dt` for the four scenarios.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss_sim::keyed_rng;
use crate::numeric::{integrate_with_breaks, log_integral};
use crate::params::{split_spec, Params};

/// Tail regime of the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scenario {
    /// `E[T] < ∞`.
    D1,
    /// `F̄` regularly varying with index 1.
    D2,
    /// `F̄` regularly varying with index `λ ∈ (0, 1)`.
    D3 { lambda: f64 },
    /// `F̄` slowly varying.
    D4,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Self::D1 => "D1",
            Self::D2 => "D2",
            Self::D3 { .. } => "D3",
            Self::D4 => "D4",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Parametric horizon families. `Pareto` covers D1 (`λ > 1`), D2 (`λ = 1`)
/// and D3 (`λ < 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum HorizonFamily {
    Deterministic { t0: f64 },
    Exponential { mean: f64 },
    /// `F̄(t) = min(1, (t/t₀)^{−λ})`.
    Pareto { lambda: f64, t0: f64 },
    /// `F̄(t) = (t₀/t)(ln t₀/ln t)^p` for `t ≥ t₀ > 1`, `p > 1`: index 1
    /// with a finite mean.
    Pareto1LogCorrected { t0: f64, p: f64 },
    /// `F̄(t) = min(1, ln t₀/ln t)`, `t₀ > 1`.
    LogPareto { t0: f64 },
}

/// A validated horizon with its scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HorizonFamily", into = "HorizonFamily")]
pub struct HorizonModel {
    pub scenario: Scenario,
    pub family: HorizonFamily,
}

impl From<HorizonModel> for HorizonFamily {
    fn from(h: HorizonModel) -> Self {
        h.family
    }
}

impl TryFrom<HorizonFamily> for HorizonModel {
    type Error = Error;

    fn try_from(family: HorizonFamily) -> Result<Self> {
        HorizonModel::new(family)
    }
}

fn positive(what: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::range(what, x, 0.0, f64::INFINITY))
    }
}

impl HorizonModel {
    pub fn new(family: HorizonFamily) -> Result<Self> {
        use HorizonFamily::*;
        let scenario = match family {
            Deterministic { t0 } => {
                positive("t0", t0)?;
                Scenario::D1
            }
            Exponential { mean } => {
                positive("mean", mean)?;
                Scenario::D1
            }
            Pareto { lambda, t0 } => {
                positive("lambda", lambda)?;
                positive("t0", t0)?;
                if lambda > 1.0 {
                    Scenario::D1
                } else if lambda == 1.0 {
                    Scenario::D2
                } else {
                    Scenario::D3 { lambda }
                }
            }
            Pareto1LogCorrected { t0, p } => {
                if !(t0 > 1.0 && t0.is_finite()) {
                    return Err(Error::range("t0", t0, 1.0, f64::INFINITY));
                }
                if !(p > 1.0 && p.is_finite()) {
                    return Err(Error::range("p", p, 1.0, f64::INFINITY));
                }
                Scenario::D2
            }
            LogPareto { t0 } => {
                if !(t0 > 1.0 && t0.is_finite()) {
                    return Err(Error::range("t0", t0, 1.0, f64::INFINITY));
                }
                Scenario::D4
            }
        };
        Ok(Self { scenario, family })
    }

    pub fn deterministic(t0: f64) -> Result<Self> {
        Self::new(HorizonFamily::Deterministic { t0 })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        Self::new(HorizonFamily::Exponential { mean })
    }

    pub fn pareto(lambda: f64, t0: f64) -> Result<Self> {
        Self::new(HorizonFamily::Pareto { lambda, t0 })
    }

    pub fn pareto1_log_corrected(t0: f64, p: f64) -> Result<Self> {
        Self::new(HorizonFamily::Pareto1LogCorrected { t0, p })
    }

    pub fn log_pareto(t0: f64) -> Result<Self> {
        Self::new(HorizonFamily::LogPareto { t0 })
    }

    /// Canonical family for a scenario: Exponential(1), Pareto(1, 1),
    /// Pareto(λ, 1) and LogPareto(e).
    pub fn canonical(scenario: Scenario) -> Result<Self> {
        match scenario {
            Scenario::D1 => Self::exponential(1.0),
            Scenario::D2 => Self::pareto(1.0, 1.0),
            Scenario::D3 { lambda } => {
                if !(lambda > 0.0 && lambda < 1.0) {
                    return Err(Error::range("lambda", lambda, 0.0, 1.0));
                }
                Self::pareto(lambda, 1.0)
            }
            Scenario::D4 => Self::log_pareto(std::f64::consts::E),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            HorizonFamily::Deterministic { .. } => "deterministic",
            HorizonFamily::Exponential { .. } => "exponential",
            HorizonFamily::Pareto { .. } => "pareto",
            HorizonFamily::Pareto1LogCorrected { .. } => "pareto1_log_corrected",
            HorizonFamily::LogPareto { .. } => "log_pareto",
        }
    }

    /// `P(T > t)`.
    pub fn tail(&self, t: f64) -> f64 {
        use HorizonFamily::*;
        if t < 0.0 {
            return 1.0;
        }
        match self.family {
            Deterministic { t0 } => {
                if t < t0 {
                    1.0
                } else {
                    0.0
                }
            }
            Exponential { mean } => (-t / mean).exp(),
            Pareto { lambda, t0 } => {
                if t <= t0 {
                    1.0
                } else {
                    (t / t0).powf(-lambda)
                }
            }
            Pareto1LogCorrected { t0, p } => {
                if t <= t0 {
                    1.0
                } else {
                    (t0 / t) * (t0.ln() / t.ln()).powf(p)
                }
            }
            LogPareto { t0 } => {
                if t <= t0 {
                    1.0
                } else {
                    t0.ln() / t.ln()
                }
            }
        }
    }

    /// Inverse of the tail: the `t` with `P(T > t) = q`, for `q ∈ (0, 1]`.
    pub fn tail_inverse(&self, q: f64) -> f64 {
        use HorizonFamily::*;
        debug_assert!(q > 0.0 && q <= 1.0);
        match self.family {
            Deterministic { t0 } => t0,
            Exponential { mean } => -mean * q.ln(),
            Pareto { lambda, t0 } => t0 * q.powf(-1.0 / lambda),
            Pareto1LogCorrected { t0, .. } => {
                if q >= 1.0 {
                    return t0;
                }
                // tail is decreasing in y = ln t; bracket then bisect
                let (mut lo, mut hi) = (t0.ln(), t0.ln() + 1.0);
                while self.tail(hi.exp()) > q {
                    lo = hi;
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.tail(mid.exp()) > q {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi {
                        break;
                    }
                }
                (0.5 * (lo + hi)).exp()
            }
            LogPareto { t0 } => (t0.ln() / q).exp(),
        }
    }

    /// Inverse-CDF sample from one uniform `U ∈ [0, 1)`, using `1 − U` as
    /// the tail level.
    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        self.tail_inverse(1.0 - u)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_from_uniform(rng.random::<f64>())
    }

    /// `p`-quantile, `P(T ≤ t) = p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::range("probability", p, 0.0, 1.0));
        }
        Ok(self.tail_inverse(1.0 - p))
    }

    /// `E[T]` when finite.
    pub fn mean(&self) -> Option<f64> {
        use HorizonFamily::*;
        match self.family {
            Deterministic { t0 } => Some(t0),
            Exponential { mean } => Some(mean),
            Pareto { lambda, t0 } if lambda > 1.0 => Some(t0 * lambda / (lambda - 1.0)),
            Pareto1LogCorrected { t0, p } => Some(t0 * (1.0 + t0.ln() / (p - 1.0))),
            _ => None,
        }
    }

    /// `l(u) = ∫₀ᵘ P(T > t) dt` in closed form.
    pub fn integrated_tail(&self, u: f64) -> f64 {
        use HorizonFamily::*;
        if u <= 0.0 {
            return 0.0;
        }
        match self.family {
            Deterministic { t0 } => u.min(t0),
            Exponential { mean } => -mean * (-u / mean).exp_m1(),
            Pareto { t0, .. } | Pareto1LogCorrected { t0, .. } | LogPareto { t0 } if u <= t0 => u,
            Pareto { lambda, t0 } => {
                if lambda == 1.0 {
                    t0 * (1.0 + (u / t0).ln())
                } else {
                    t0 + t0 * ((u / t0).powf(1.0 - lambda) - 1.0) / (1.0 - lambda)
                }
            }
            Pareto1LogCorrected { t0, p } => {
                t0 + t0 * t0.ln() / (p - 1.0) * (1.0 - (t0.ln() / u.ln()).powf(p - 1.0))
            }
            LogPareto { t0 } => t0 + t0.ln() * (log_integral(u) - log_integral(t0)),
        }
    }

    /// `l(u)` by adaptive quadrature of the tail in `y = ln t` beyond the
    /// kink, relative tolerance `1e-12`; used to cross-check the closed forms.
    pub fn integrated_tail_quadrature(&self, u: f64) -> Result<f64> {
        if u <= 0.0 {
            return Ok(0.0);
        }
        let kink = match self.family {
            HorizonFamily::Deterministic { t0 }
            | HorizonFamily::Pareto { t0, .. }
            | HorizonFamily::Pareto1LogCorrected { t0, .. }
            | HorizonFamily::LogPareto { t0 } => t0,
            HorizonFamily::Exponential { .. } => 0.0,
        };
        if let HorizonFamily::Exponential { mean } = self.family {
            let breaks = [1.0, 4.0, 16.0, 64.0].map(|k| k * mean);
            return integrate_with_breaks(|t| self.tail(t), 0.0, u.min(800.0 * mean), &breaks, 1e-12, 0.0);
        }
        if u <= kink {
            return integrate_with_breaks(|t| self.tail(t), 0.0, u, &[], 1e-12, 0.0);
        }
        let head = integrate_with_breaks(|t| self.tail(t), 0.0, kink, &[], 1e-12, 0.0)?;
        let body = integrate_with_breaks(|y: f64| self.tail(y.exp()) * y.exp(), kink.ln(), u.ln(), &[], 1e-12, 0.0)?;
        Ok(head + body)
    }
}

impl fmt::Display for HorizonModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use HorizonFamily::*;
        match self.family {
            Deterministic { t0 } => write!(f, "deterministic(t0={t0})"),
            Exponential { mean } => write!(f, "exponential(mean={mean})"),
            Pareto { lambda, t0 } => write!(f, "pareto(lambda={lambda},t0={t0})"),
            Pareto1LogCorrected { t0, p } => write!(f, "pareto1_log_corrected(t0={t0},p={p})"),
            LogPareto { t0 } => write!(f, "log_pareto(t0={t0})"),
        }
    }
}

/// Parses `deterministic:t0=1`, `exponential:mean=1`,
/// `pareto:lambda=0.5,t0=1`, `pareto1-log:t0=3,p=3` and `log-pareto:t0=e`
/// (`t0` defaults to `e` for the last two).
impl FromStr for HorizonModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = split_spec(s)?;
        let rest = rest.replace("t0=e", &format!("t0={}", std::f64::consts::E));
        let mut p = Params::parse(&rest)?;
        let e = std::f64::consts::E;
        let family = match kind {
            "deterministic" => HorizonFamily::Deterministic { t0: p.take_f64("t0")? },
            "exponential" => HorizonFamily::Exponential { mean: p.take_f64_or("mean", 1.0)? },
            "pareto" => HorizonFamily::Pareto {
                lambda: p.take_f64("lambda")?,
                t0: p.take_f64_or("t0", 1.0)?,
            },
            "pareto1-log" | "pareto1_log_corrected" => HorizonFamily::Pareto1LogCorrected {
                t0: p.take_f64_or("t0", e)?,
                p: p.take_f64_or("p", 3.0)?,
            },
            "log-pareto" | "log_pareto" => HorizonFamily::LogPareto { t0: p.take_f64_or("t0", e)? },
            other => return Err(Error::Config(format!("unknown horizon family '{other}'"))),
        };
        p.finish()?;
        Self::new(family)
    }
}

/// `sample_T`: one inverse-CDF draw from stream 0 of `seed`.
pub fn sample_t(h: &HorizonModel, seed: u64) -> f64 {
    h.sample(&mut keyed_rng(seed, 0))
}
