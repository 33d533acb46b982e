//! Limit laws for the scaled sojourn time over a random horizon, in the four
//! horizon regimes, plus the closed forms for the built-in covariance models.

mod convolution;
mod series;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use convolution::{convolve_tails, FAlphaConvolution, JumpLaw, LEAKAGE_TOL};
pub use series::{
    compound_poisson_tail, d3_coefficient, d3_remainder, d3_series, d3_series_at_zero,
    uniform_bound_terms, SeriesValue, MAX_TERMS,
};

use crate::berman::BermanTable;
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::heavy_tail::{HorizonModel, Scenario};
use crate::scaling::{scaling_bundle, LevelScaling};

/// Default absolute tolerance for the `D3` series.
pub const SERIES_TOL: f64 = 1e-8;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Inputs entering one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ingredients {
    pub v: f64,
    pub psi: f64,
    pub m: f64,
    pub b_x: f64,
    pub b0: f64,
    pub mean_t: Option<f64>,
    pub l_m: Option<f64>,
    pub tail_t_m: Option<f64>,
    pub series: Option<SeriesValue>,
}

/// Closed-form variant for the built-in models, where `v Ψ(u)` and `m(u)`
/// are replaced by their leading-order expressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub v_psi: f64,
    pub m: f64,
    pub predicted_tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPrediction {
    pub scenario: Scenario,
    pub u: f64,
    pub x: f64,
    pub predicted_tail: f64,
    pub ingredients: Ingredients,
    pub closed_form: Option<ClosedForm>,
}

/// Length scale `a` of the built-in models (1 for the fractional OU).
fn model_scale(model: &CovarianceModel) -> Option<f64> {
    match model {
        CovarianceModel::FracOu { .. } => Some(1.0),
        CovarianceModel::FbmIncrement { a, .. } => Some(*a),
        CovarianceModel::Tabulated(_) => None,
    }
}

/// Leading-order `(v Ψ(u), m(u))` for the built-in models. `m` may be
/// infinite for large `u`.
pub fn closed_form_scaling(model: &CovarianceModel, u: f64, b0: f64) -> Option<(f64, f64)> {
    let a = model_scale(model)?;
    let alpha = model.alpha();
    let e = 2.0 / alpha - 1.0;
    let v_psi = INV_SQRT_2PI * u.powf(e) * (-0.5 * u * u).exp() / a;
    let m = SQRT_2PI * a / b0 * u.powf(-e) * (0.5 * u * u).exp();
    Some((v_psi, m))
}

/// Evaluates limit laws for one `(model, horizon, Berman table)` triple,
/// caching the convolution powers needed in regime `D3`.
#[derive(Debug)]
pub struct Predictor<'a> {
    model: &'a CovarianceModel,
    horizon: HorizonModel,
    berman: &'a BermanTable,
    tol: f64,
    conv: Option<FAlphaConvolution>,
    series_cache: BTreeMap<u64, SeriesValue>,
}

impl<'a> Predictor<'a> {
    pub fn new(model: &'a CovarianceModel, horizon: HorizonModel, berman: &'a BermanTable) -> Result<Self> {
        if (berman.alpha - model.alpha()).abs() > 1e-12 {
            return Err(Error::Contract(format!(
                "Berman table has alpha={} but the model has alpha={}",
                berman.alpha,
                model.alpha()
            )));
        }
        Ok(Self {
            model,
            horizon,
            berman,
            tol: SERIES_TOL,
            conv: None,
            series_cache: BTreeMap::new(),
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn horizon(&self) -> &HorizonModel {
        &self.horizon
    }

    /// `λ Σ Γ(k−λ)/k! F̄_α^{*k}(x)`.
    pub fn series(&mut self, lambda: f64, x: f64) -> Result<SeriesValue> {
        if let Some(s) = self.series_cache.get(&x.to_bits()) {
            return Ok(*s);
        }
        let stale = self.conv.as_ref().is_none_or(|c| x > c.x_max());
        if stale {
            let law = JumpLaw::from_berman(self.berman)?;
            let reach = law.top().max(x);
            self.conv = Some(FAlphaConvolution::new(&law, Some(reach))?);
        }
        let conv = self.conv.as_mut().expect("built above");
        let s = d3_series(lambda, x, conv, self.tol)?;
        self.series_cache.insert(x.to_bits(), s);
        Ok(s)
    }

    pub fn predict(&mut self, u: f64, x: f64) -> Result<AsymptoticPrediction> {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::range("x", x, 0.0, f64::INFINITY));
        }
        let b0 = self.berman.b0();
        let b_x = self.berman.berman_at(x);
        let LevelScaling { v, psi, m, .. } = scaling_bundle(self.model, u, b0)?;
        let h = self.horizon.clone();
        let mut ing = Ingredients {
            v,
            psi,
            m,
            b_x,
            b0,
            mean_t: None,
            l_m: None,
            tail_t_m: None,
            series: None,
        };
        // the regime formula as a function of (vΨ, m)
        let mut series_value = None;
        if let Scenario::D3 { lambda } = h.scenario {
            series_value = Some(self.series(lambda, x)?);
        }
        let law = |v_psi: f64, m: f64| -> f64 {
            match h.scenario {
                Scenario::D1 => b_x * h.mean().expect("D1 horizon has a mean") * v_psi,
                Scenario::D2 => b_x * h.integrated_tail(m) * v_psi,
                Scenario::D3 { .. } => series_value.expect("computed above").value * h.tail(m),
                Scenario::D4 => h.tail(m),
            }
        };
        let predicted_tail = law(v * psi, m);
        match h.scenario {
            Scenario::D1 => ing.mean_t = h.mean(),
            Scenario::D2 => ing.l_m = Some(h.integrated_tail(m)),
            Scenario::D3 { .. } => {
                ing.series = series_value;
                ing.tail_t_m = Some(h.tail(m));
            }
            Scenario::D4 => ing.tail_t_m = Some(h.tail(m)),
        }
        let closed_form = closed_form_scaling(self.model, u, b0).map(|(v_psi, m)| ClosedForm {
            v_psi,
            m,
            predicted_tail: law(v_psi, m),
        });
        Ok(AsymptoticPrediction {
            scenario: h.scenario,
            u,
            x,
            predicted_tail,
            ingredients: ing,
            closed_form,
        })
    }
}

/// One-shot prediction; `scenario` must be the horizon's regime.
pub fn predict_tail(
    scenario: Scenario,
    model: &CovarianceModel,
    horizon: &HorizonModel,
    berman: &BermanTable,
    u: f64,
    x: f64,
) -> Result<AsymptoticPrediction> {
    if scenario != horizon.scenario {
        return Err(Error::Contract(format!(
            "scenario {scenario} does not match horizon {horizon} (regime {})",
            horizon.scenario
        )));
    }
    Predictor::new(model, horizon.clone(), berman)?.predict(u, x)
}

/// Flat CSV row for a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub scenario: String,
    pub alpha: f64,
    pub family: String,
    pub u: f64,
    pub x: f64,
    pub predicted_tail: f64,
    pub closed_form_tail: Option<f64>,
    pub v: f64,
    pub psi: f64,
    pub m: f64,
    pub b_x: f64,
    pub b0: f64,
    pub mean_t: Option<f64>,
    pub l_m: Option<f64>,
    pub tail_t_m: Option<f64>,
    pub series: Option<f64>,
    pub series_bound: Option<f64>,
    pub closed_form_v_psi: Option<f64>,
    pub closed_form_m: Option<f64>,
}

impl PredictionRow {
    pub fn new(p: &AsymptoticPrediction, alpha: f64, horizon: &HorizonModel) -> Self {
        let i = &p.ingredients;
        Self {
            scenario: p.scenario.label().to_string(),
            alpha,
            family: horizon.to_string(),
            u: p.u,
            x: p.x,
            predicted_tail: p.predicted_tail,
            closed_form_tail: p.closed_form.map(|c| c.predicted_tail),
            v: i.v,
            psi: i.psi,
            m: i.m,
            b_x: i.b_x,
            b0: i.b0,
            mean_t: i.mean_t,
            l_m: i.l_m,
            tail_t_m: i.tail_t_m,
            series: i.series.map(|s| s.value),
            series_bound: i.series.map(|s| s.error_bound),
            closed_form_v_psi: p.closed_form.map(|c| c.v_psi),
            closed_form_m: p.closed_form.map(|c| c.m),
        }
    }
}

pub fn write_predictions<W: Write>(out: W, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions_file(path: impl AsRef<Path>, rows: &[PredictionRow]) -> Result<()> {
    write_predictions(std::fs::File::create(path)?, rows)
}
