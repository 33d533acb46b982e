//! Stationary correlation models `r(t)` with unit variance.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A correlation function given as a table of `(t, r)` pairs, linearly
/// interpolated. The local index `alpha` of `1 − r` at zero must be supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCovariance {
    t: Vec<f64>,
    r: Vec<f64>,
    alpha: f64,
}

impl TabulatedCovariance {
    pub fn new(t: Vec<f64>, r: Vec<f64>, alpha: f64) -> Result<Self> {
        if t.len() != r.len() || t.len() < 2 {
            return Err(Error::invalid("tabulated covariance needs at least two (t, r) rows"));
        }
        if t[0] != 0.0 || r[0] != 1.0 {
            return Err(Error::invalid("tabulated covariance must start at t = 0 with r = 1"));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("tabulated covariance times must be strictly increasing"));
        }
        if r.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::invalid("tabulated correlations must lie in [-1, 1]"));
        }
        check_alpha(alpha, true)?;
        Ok(Self { t, r, alpha })
    }

    /// Reads a two-column CSV `t,r`. A header row is optional.
    pub fn from_csv(path: impl AsRef<Path>, alpha: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut t = Vec::new();
        let mut r = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::invalid(format!("row {i}: expected two columns, got {}", rec.len())));
            }
            let (a, b) = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    t.push(a);
                    r.push(b);
                }
                _ if i == 0 => continue,
                _ => return Err(Error::invalid(format!("row {i}: non-numeric entry"))),
            }
        }
        Self::new(t, r, alpha)
    }

    pub fn max_t(&self) -> f64 {
        *self.t.last().expect("validated non-empty")
    }

    fn eval(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.max_t()).contains(&t) {
            return Err(Error::range("tabulated covariance lag", t, 0.0, self.max_t()));
        }
        let i = self.t.partition_point(|&x| x <= t);
        if i >= self.t.len() {
            return Ok(*self.r.last().expect("non-empty"));
        }
        let (t0, t1) = (self.t[i - 1], self.t[i]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.r[i - 1] + w * (self.r[i] - self.r[i - 1]))
    }
}

/// Stationary correlation model.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceModel {
    /// Fractional Ornstein–Uhlenbeck, `r(t) = exp(−t^α)`, `α ∈ (0, 2]`.
    FracOu { alpha: f64 },
    /// Normalised increments of fBm over a lag `a`, `α ∈ (0, 2)`.
    FbmIncrement { alpha: f64, a: f64 },
    Tabulated(TabulatedCovariance),
}

fn check_alpha(alpha: f64, allow_two: bool) -> Result<()> {
    let ok = alpha > 0.0 && (alpha < 2.0 || (allow_two && alpha == 2.0));
    if ok {
        Ok(())
    } else {
        Err(Error::range("alpha", alpha, 0.0, 2.0))
    }
}

impl CovarianceModel {
    pub fn frac_ou(alpha: f64) -> Result<Self> {
        check_alpha(alpha, true)?;
        Ok(Self::FracOu { alpha })
    }

    pub fn fbm_increment(alpha: f64, a: f64) -> Result<Self> {
        check_alpha(alpha, false)?;
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("fbm increment lag must be positive, got {a}")));
        }
        Ok(Self::FbmIncrement { alpha, a })
    }

    /// Index of regular variation of `1 − r` at zero.
    pub fn alpha(&self) -> f64 {
        match self {
            Self::FracOu { alpha } | Self::FbmIncrement { alpha, .. } => *alpha,
            Self::Tabulated(tab) => tab.alpha,
        }
    }

    /// True when the process is Markov (the classical OU process), so that
    /// exact sequential simulation is available.
    pub fn is_markov(&self) -> bool {
        matches!(self, Self::FracOu { alpha } if *alpha == 1.0)
    }

    /// Largest lag at which the model can be evaluated.
    pub fn max_lag(&self) -> f64 {
        match self {
            Self::Tabulated(tab) => tab.max_t(),
            _ => f64::INFINITY,
        }
    }

    /// Evaluates `r(t)` for `t ≥ 0`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::range("covariance lag", t, 0.0, f64::INFINITY));
        }
        Ok(match self {
            Self::FracOu { alpha } => (-t.powf(*alpha)).exp(),
            Self::FbmIncrement { alpha, a } => fbm_increment_corr(*alpha, *a, t),
            Self::Tabulated(tab) => tab.eval(t)?,
        })
    }

    /// `1 − r(t)`, evaluated without cancellation where a closed form allows.
    pub fn one_minus_r(&self, t: f64) -> Result<f64> {
        match self {
            Self::FracOu { alpha } if t >= 0.0 => Ok(-(-t.powf(*alpha)).exp_m1()),
            _ => Ok(1.0 - self.eval(t)?),
        }
    }

    /// Short descriptor used in reports and path metadata.
    pub fn id(&self) -> String {
        self.to_string()
    }

    /// Numerical check of Berman's condition `r(t) log t → 0` on a
    /// log-spaced grid out to `t = 10⁶`.
    pub fn berman_condition(&self) -> BermanConditionReport {
        const T_MAX: f64 = 1e6;
        const TOL: f64 = 1e-3;
        let t_end = T_MAX.min(self.max_lag());
        let mut worst_tail: f64 = 0.0;
        let mut at_end = f64::NAN;
        if t_end > 10.0 {
            let steps = 400;
            let lo = 10f64.ln();
            let hi = t_end.ln();
            for k in 0..=steps {
                let t = (lo + (hi - lo) * k as f64 / steps as f64).exp();
                let Ok(r) = self.eval(t) else { break };
                let val = (r * t.ln()).abs();
                if t >= t_end / 10.0 {
                    worst_tail = worst_tail.max(val);
                }
                at_end = val;
            }
        }
        // |r(t)| ≤ C (t − a)^{α−2} for the fBm increments, so r log t → 0
        // analytically whenever α < 2.
        let analytic_decay_exponent = match self {
            Self::FracOu { .. } => Some(f64::NEG_INFINITY),
            Self::FbmIncrement { alpha, .. } if *alpha == 1.0 => Some(f64::NEG_INFINITY),
            Self::FbmIncrement { alpha, .. } => Some(alpha - 2.0),
            Self::Tabulated(_) => None,
        };
        BermanConditionReport {
            t_max: t_end,
            value_at_t_max: at_end,
            max_over_last_decade: worst_tail,
            tolerance: TOL,
            within_tolerance: worst_tail <= TOL,
            analytic_decay_exponent,
            advisory_only: matches!(self, Self::Tabulated(_)),
        }
    }
}

fn fbm_increment_corr(alpha: f64, a: f64, t: f64) -> f64 {
    if t > a {
        // t^α [(1+x)^α + (1−x)^α − 2] with x = a/t, free of cancellation in t^α
        let x = a / t;
        let d = (alpha * x.ln_1p()).exp_m1() + (alpha * (-x).ln_1p()).exp_m1();
        return t.powf(alpha) * d / (2.0 * a.powf(alpha));
    }
    ((a + t).powf(alpha) + (a - t).abs().powf(alpha) - 2.0 * t.powf(alpha)) / (2.0 * a.powf(alpha))
}

impl fmt::Display for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FracOu { alpha } => write!(f, "frac_ou(alpha={alpha})"),
            Self::FbmIncrement { alpha, a } => write!(f, "fbm_increment(alpha={alpha},a={a})"),
            Self::Tabulated(tab) => write!(f, "tabulated(alpha={},rows={})", tab.alpha, tab.t.len()),
        }
    }
}

/// Outcome of [`CovarianceModel::berman_condition`].
#[derive(Debug, Clone, PartialEq)]
pub struct BermanConditionReport {
    pub t_max: f64,
    pub value_at_t_max: f64,
    pub max_over_last_decade: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
    /// Exponent `β < 0` with `|r(t)| = O(t^β)` when known in closed form.
    pub analytic_decay_exponent: Option<f64>,
    pub advisory_only: bool,
}

/// Serializable description of a model, as found in config files and on
/// the command line (`frac-ou:alpha=1`, `fbm-increment:alpha=1,a=2`,
/// `tabulated:path=cov.csv,alpha=1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    FracOu { alpha: f64 },
    FbmIncrement { alpha: f64, a: f64 },
    Tabulated { path: String, alpha: f64 },
}

impl ModelSpec {
    pub fn build(&self) -> Result<CovarianceModel> {
        match self {
            Self::FracOu { alpha } => CovarianceModel::frac_ou(*alpha),
            Self::FbmIncrement { alpha, a } => CovarianceModel::fbm_increment(*alpha, *a),
            Self::Tabulated { path, alpha } => {
                Ok(CovarianceModel::Tabulated(TabulatedCovariance::from_csv(path, *alpha)?))
            }
        }
    }
}

impl std::str::FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = crate::params::split_spec(s)?;
        let mut p = crate::params::Params::parse(params)?;
        let spec = match kind {
            "frac-ou" | "frac_ou" => Self::FracOu { alpha: p.take_f64("alpha")? },
            "fbm-increment" | "fbm_increment" => Self::FbmIncrement {
                alpha: p.take_f64("alpha")?,
                a: p.take_f64("a")?,
            },
            "tabulated" => Self::Tabulated {
                path: p.take_str("path")?,
                alpha: p.take_f64("alpha")?,
            },
            other => return Err(Error::Config(format!("unknown model kind '{other}'"))),
        };
        p.finish()?;
        Ok(spec)
    }
}
