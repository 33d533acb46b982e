//! Monte Carlo estimates of sojourn tails over random horizons and their
//! comparison with the limit laws.

mod checks;
mod engine;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use checks::{
    compound_poisson_convergence_check, horizon_rule_flags, intermediate_horizon_ratio_check, sup_identity_check,
    CheckSettings, CpCheckReport, CpCheckRow, CpCheckSummary, HorizonRule, RatioCheckReport, RatioCheckRow,
    SupIdentityReport,
};
pub use engine::{count_threshold, points_in, simulate_tails, LevelSetup, PathDiagnostics, TailEstimate};

use crate::asymptotics::Predictor;
use crate::berman::BermanTable;
use crate::covariance::{CovarianceModel, ModelSpec};
use crate::error::{Error, Result};
use crate::heavy_tail::HorizonModel;
use crate::scaling::{scaling_bundle, LevelScaling};

pub const CONFIG_VERSION: u32 = 1;
/// Tail level of `T` used for the default truncation cap.
pub const CAP_TAIL: f64 = 1e-4;
/// Multiple of `m(u)` used for the default truncation cap.
pub const CAP_M_MULTIPLE: f64 = 1e3;
pub const MIN_POINTS_PER_UNIT: f64 = 10.0;
/// Relative tolerance when matching the Berman table step to `1/ppu`.
const GRID_MATCH_TOL: f64 = 1e-9;

fn default_ppu() -> f64 {
    10.0
}

/// One comparison run, read from JSON. Unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub model: ModelSpec,
    pub horizon: HorizonModel,
    pub u_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub replications: usize,
    /// Grid points per `1/v(u)`.
    #[serde(default = "default_ppu")]
    pub points_per_unit: f64,
    /// Fixed horizon cap; by default `min(q_{1−1e-4}(T), 1e3 m(u))`.
    #[serde(default)]
    pub horizon_cap: Option<f64>,
    pub seed: u64,
    /// Berman table JSON, relative to the config file.
    pub berman_table: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if !(self.points_per_unit >= MIN_POINTS_PER_UNIT && self.points_per_unit.is_finite()) {
            return Err(Error::Config(format!(
                "points_per_unit must be at least {MIN_POINTS_PER_UNIT}, got {}",
                self.points_per_unit
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be positive".into()));
        }
        if self.u_grid.iter().any(|u| !(*u > 0.0 && u.is_finite())) {
            return Err(Error::Config("u-grid values must be positive and finite".into()));
        }
        if self.x_grid.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::Config("x-grid values must be non-negative and finite".into()));
        }
        if let Some(c) = self.horizon_cap {
            if !(c > 0.0) {
                return Err(Error::Config(format!("horizon_cap must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; the Berman table path is resolved
    /// against the config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        if cfg.berman_table.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.berman_table = dir.join(&cfg.berman_table);
            }
        }
        Ok(cfg)
    }

    /// Horizon cap at one level.
    pub fn cap(&self, sc: &LevelScaling) -> Result<f64> {
        match self.horizon_cap {
            Some(c) => Ok(c),
            None => default_cap(&self.horizon, sc),
        }
    }
}

/// `min(q_{1−1e-4}(T), 1e3 m(u))`.
pub fn default_cap(horizon: &HorizonModel, sc: &LevelScaling) -> Result<f64> {
    Ok(horizon.quantile(1.0 - CAP_TAIL)?.min(CAP_M_MULTIPLE * sc.m))
}

/// Report line for one `(u, x)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub alpha: f64,
    pub family: String,
    pub u: f64,
    pub x: f64,
    pub empirical: f64,
    pub se: f64,
    pub predicted: f64,
    /// Absent when the empirical tail is zero.
    pub ratio: Option<f64>,
    /// `;`-separated.
    pub flags: String,
}

/// Per-level diagnostics written to the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    pub scaling: LevelScaling,
    pub step: f64,
    pub cap: f64,
    /// `P(T > cap)`, the width of the truncation bias bracket.
    pub truncated_mass: f64,
    pub replications: u64,
    pub hits: Vec<u64>,
    pub closed_form_predicted: Vec<Option<f64>>,
    pub paths: PathDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub levels: Vec<LevelDiagnostics>,
    pub berman_step: f64,
    pub grid_matched: bool,
    pub config: ExperimentConfig,
}

impl ComparisonReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        if self.rows.is_empty() {
            w.write_record(["scenario", "alpha", "family", "u", "x", "empirical", "se", "predicted", "ratio", "flags"])?;
        }
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Everything except the rows.
    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            config: &'a ExperimentConfig,
            berman_step: f64,
            grid_matched: bool,
            levels: &'a [LevelDiagnostics],
        }
        let text = serde_json::to_string_pretty(&Sidecar {
            config: &self.config,
            berman_step: self.berman_step,
            grid_matched: self.grid_matched,
            levels: &self.levels,
        })?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// `P(v(u) L_u[0, T] > x)` by Monte Carlo for one `(u, x)`.
pub fn empirical_sojourn_tail(cfg: &ExperimentConfig, berman: &BermanTable, u: f64, x: f64) -> Result<TailEstimate> {
    let model = cfg.model.build()?;
    check_table(&model, berman)?;
    let sc = scaling_bundle(&model, u, berman.b0())?;
    let setup = LevelSetup {
        u,
        v: sc.v,
        step: sc.grid_step(cfg.points_per_unit),
        cap: cfg.cap(&sc)?,
    };
    let (est, _) = simulate_tails(&model, &cfg.horizon, &setup, &[x], cfg.replications, cfg.seed)?;
    Ok(est[0])
}

fn check_table(model: &CovarianceModel, berman: &BermanTable) -> Result<()> {
    if (berman.alpha - model.alpha()).abs() > 1e-12 {
        return Err(Error::Contract(format!(
            "Berman table has alpha={} but the model has alpha={}",
            berman.alpha,
            model.alpha()
        )));
    }
    Ok(())
}

/// Full `(u, x)` sweep of simulated tails against predictions.
pub fn run_comparison(cfg: &ExperimentConfig, berman: &BermanTable) -> Result<ComparisonReport> {
    cfg.validate()?;
    let model = cfg.model.build()?;
    check_table(&model, berman)?;
    let grid_matched = (berman.step * cfg.points_per_unit - 1.0).abs() < GRID_MATCH_TOL;
    let mut predictor = Predictor::new(&model, cfg.horizon, berman)?;
    let mut rows = Vec::new();
    let mut levels = Vec::new();
    let scenario = cfg.horizon.scenario.label().to_string();
    let family = cfg.horizon.to_string();
    for &u in &cfg.u_grid {
        let sc = scaling_bundle(&model, u, berman.b0())?;
        let cap = cfg.cap(&sc)?;
        let setup = LevelSetup {
            u,
            v: sc.v,
            step: sc.grid_step(cfg.points_per_unit),
            cap,
        };
        let (est, paths) = simulate_tails(&model, &cfg.horizon, &setup, &cfg.x_grid, cfg.replications, cfg.seed)?;
        let truncated_mass = cfg.horizon.tail(cap);
        let mut closed = Vec::new();
        for e in &est {
            let p = predictor.predict(u, e.x)?;
            closed.push(p.closed_form.map(|c| c.predicted_tail));
            let mut flags = Vec::new();
            if truncated_mass > 10.0 * e.estimate {
                flags.push("truncation");
            }
            if !grid_matched {
                flags.push("grid_mismatch");
            }
            if paths.approximate {
                flags.push("approximate");
            }
            if paths.clipped {
                flags.push("clipped");
            }
            rows.push(ComparisonRow {
                scenario: scenario.clone(),
                alpha: model.alpha(),
                family: family.clone(),
                u,
                x: e.x,
                empirical: e.estimate,
                se: e.se,
                predicted: p.predicted_tail,
                ratio: (e.hits > 0).then(|| e.estimate / p.predicted_tail),
                flags: flags.join(";"),
            });
        }
        levels.push(LevelDiagnostics {
            scaling: sc,
            step: setup.step,
            cap,
            truncated_mass,
            replications: cfg.replications as u64,
            hits: est.iter().map(|e| e.hits).collect(),
            closed_form_predicted: closed,
            paths,
        });
    }
    Ok(ComparisonReport {
        rows,
        levels,
        berman_step: berman.step,
        grid_matched,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests;
