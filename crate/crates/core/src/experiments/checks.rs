//! Convergence checks on intermediate and compound-Poisson horizons, and
//! the sup identity at `x = 0`.

use serde::{Deserialize, Serialize};

use super::engine::{
    count_threshold, first_exceedances, points_in, replicate, PathDiagnostics, TailEstimate, TAG_PATH,
};
use crate::asymptotics::{compound_poisson_tail, FAlphaConvolution, JumpLaw, SERIES_TOL};
use crate::berman::BermanTable;
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::gauss_sim::{keyed_rng, stream_key, ExceedanceScanner, GridPath, PathStreamer};
use crate::scaling::{scaling_bundle, LevelScaling};
use crate::sojourn::scaled_sojourn;

fn check_alpha(alpha: f64, model: &CovarianceModel, berman: &BermanTable) -> Result<()> {
    if (alpha - model.alpha()).abs() > 1e-12 || (alpha - berman.alpha).abs() > 1e-12 {
        return Err(Error::Contract(format!(
            "alpha={alpha} but model has {} and Berman table has {}",
            model.alpha(),
            berman.alpha
        )));
    }
    Ok(())
}

fn check_ppu(points_per_unit: f64) -> Result<()> {
    if points_per_unit >= 10.0 && points_per_unit.is_finite() {
        Ok(())
    } else {
        Err(Error::range("points per unit", points_per_unit, 10.0, f64::INFINITY))
    }
}

/// Common settings of the two convergence checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSettings {
    pub u_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_ppu")]
    pub points_per_unit: f64,
}

fn default_ppu() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpCheckRow {
    pub u: f64,
    pub l: f64,
    pub x: f64,
    pub empirical: f64,
    pub se: f64,
    pub target: f64,
    pub target_bound: f64,
    pub discrepancy: f64,
}

/// Largest discrepancy over the `l`-grid at one `(u, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpCheckSummary {
    pub u: f64,
    pub x: f64,
    pub sup_discrepancy: f64,
    /// Standard error of the empirical value attaining the supremum.
    pub se: f64,
    pub argmax_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpCheckReport {
    pub rows: Vec<CpCheckRow>,
    pub summary: Vec<CpCheckSummary>,
    pub scaling: Vec<LevelScaling>,
    pub diagnostics: Vec<PathDiagnostics>,
}

/// Empirical `P(v L_u[0, l m(u)] > x)` against the compound Poisson tail
/// `P(Y(l) > x)` for every `l` in `l_grid ⊂ [l_bounds.0, l_bounds.1]`.
/// One path of length `max(l) m(u)` per replication serves all `l` and `x`.
pub fn compound_poisson_convergence_check(
    alpha: f64,
    berman: &BermanTable,
    model: &CovarianceModel,
    l_grid: &[f64],
    l_bounds: (f64, f64),
    settings: &CheckSettings,
) -> Result<CpCheckReport> {
    check_alpha(alpha, model, berman)?;
    check_ppu(settings.points_per_unit)?;
    let (l0, l1) = l_bounds;
    if !(l0 > 0.0 && l0 < l1 && l1.is_finite()) {
        return Err(Error::invalid(format!("need 0 < l0 < l1 < inf, got ({l0}, {l1})")));
    }
    if l_grid.is_empty() || l_grid.iter().any(|l| !(*l >= l0 && *l <= l1)) {
        return Err(Error::invalid(format!("l-grid must be non-empty and inside [{l0}, {l1}]")));
    }
    let x_top = settings.x_grid.iter().copied().fold(0.0, f64::max);
    let law = JumpLaw::from_berman(berman)?;
    let mut conv = FAlphaConvolution::new(&law, Some(law.top().max(x_top)))?;
    let mut targets = Vec::new();
    for &x in &settings.x_grid {
        for &l in l_grid {
            let s = compound_poisson_tail(l, x, &mut conv, SERIES_TOL)?;
            // at x = 0 the tail is P(N(l) ≥ 1)
            let value = if x == 0.0 { -(-l).exp_m1() } else { s.value };
            targets.push((value, s.error_bound));
        }
    }
    let l_max = l_grid.iter().copied().fold(0.0, f64::max);
    let mut report = CpCheckReport {
        rows: Vec::new(),
        summary: Vec::new(),
        scaling: Vec::new(),
        diagnostics: Vec::new(),
    };
    for &u in &settings.u_grid {
        let sc = scaling_bundle(model, u, berman.b0())?;
        let step = sc.grid_step(settings.points_per_unit);
        let scanner = ExceedanceScanner::new(model, step)?;
        let ks: Vec<usize> = settings.x_grid.iter().map(|&x| count_threshold(x, sc.v, step)).collect();
        let k_max = ks.iter().copied().max().unwrap_or(0);
        let windows: Vec<usize> = l_grid.iter().map(|&l| points_in(l * sc.m, step)).collect();
        let n = points_in(l_max * sc.m, step);
        let outcomes = replicate(settings.replications, |rep, work| {
            first_exceedances(&scanner, n, u, k_max, settings.seed, rep, work)
        })?;
        let mut diag = PathDiagnostics::default();
        let mut hits = vec![0u64; ks.len() * windows.len()];
        for (idx, info) in &outcomes {
            diag.approximate |= info.approximate;
            diag.clipped |= info.clipped;
            diag.miss_bound += info.miss_bound;
            diag.mean_sampled += info.sampled as f64;
            for (a, &k) in ks.iter().enumerate() {
                for (b, &w) in windows.iter().enumerate() {
                    hits[a * windows.len() + b] += (idx.len() >= k && idx[k - 1] < w) as u64;
                }
            }
        }
        let r = settings.replications as u64;
        diag.mean_points = n as f64;
        diag.mean_sampled /= settings.replications.max(1) as f64;
        for (a, &x) in settings.x_grid.iter().enumerate() {
            let mut best: Option<CpCheckSummary> = None;
            for (b, &l) in l_grid.iter().enumerate() {
                let j = a * l_grid.len() + b;
                let est = TailEstimate::new(x, hits[j], r);
                let (target, bound) = targets[j];
                let d = (est.estimate - target).abs();
                report.rows.push(CpCheckRow {
                    u,
                    l,
                    x,
                    empirical: est.estimate,
                    se: est.se,
                    target,
                    target_bound: bound,
                    discrepancy: d,
                });
                if best.is_none_or(|s| d > s.sup_discrepancy) {
                    best = Some(CpCheckSummary { u, x, sup_discrepancy: d, se: est.se, argmax_l: l });
                }
            }
            report.summary.extend(best);
        }
        report.scaling.push(sc);
        report.diagnostics.push(diag);
    }
    Ok(report)
}

/// Intermediate horizon `A(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum HorizonRule {
    /// `A(u) = √(m(u)/v(u))`.
    SqrtMOverV,
    Constant { value: f64 },
    FractionOfM { fraction: f64 },
}

impl HorizonRule {
    pub fn eval(&self, sc: &LevelScaling) -> f64 {
        match *self {
            Self::SqrtMOverV => (sc.m / sc.v).sqrt(),
            Self::Constant { value } => value,
            Self::FractionOfM { fraction } => fraction * sc.m,
        }
    }
}

impl std::str::FromStr for HorizonRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = crate::params::split_spec(s)?;
        let mut p = crate::params::Params::parse(rest)?;
        let rule = match kind {
            "sqrt-m-over-v" | "sqrt_m_over_v" => Self::SqrtMOverV,
            "constant" => Self::Constant { value: p.take_f64("value")? },
            "fraction-of-m" | "fraction_of_m" => Self::FractionOfM { fraction: p.take_f64("fraction")? },
            other => return Err(Error::Config(format!("unknown horizon rule '{other}'"))),
        };
        p.finish()?;
        Ok(rule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioCheckRow {
    pub u: f64,
    pub a: f64,
    pub x: f64,
    pub empirical: f64,
    pub se: f64,
    pub predicted: f64,
    pub ratio: f64,
    pub ratio_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCheckReport {
    pub rule: HorizonRule,
    pub rows: Vec<RatioCheckRow>,
    pub scaling: Vec<LevelScaling>,
    pub diagnostics: Vec<PathDiagnostics>,
    /// Violations of `A v → ∞` or `A/m → 0` detected along the u-grid.
    pub flags: Vec<String>,
}

/// Growth conditions on `A(u)` checked along an increasing u-grid.
pub fn horizon_rule_flags(rule: &HorizonRule, scalings: &[LevelScaling]) -> Vec<String> {
    let mut flags = Vec::new();
    let av: Vec<f64> = scalings.iter().map(|s| rule.eval(s) * s.v).collect();
    let am: Vec<f64> = scalings.iter().map(|s| rule.eval(s) / s.m).collect();
    if av.iter().any(|&x| x < 1.0) || av.windows(2).any(|w| w[1] <= w[0]) {
        flags.push("a_times_v_not_growing".to_string());
    }
    if am.iter().any(|&x| x >= 1.0) || am.windows(2).any(|w| w[1] >= w[0]) {
        flags.push("a_over_m_not_vanishing".to_string());
    }
    flags
}

/// Empirical `P(v L_u[0, A(u)] > x)` divided by `B̂_α(x) A(u) v(u) Ψ(u)`.
pub fn intermediate_horizon_ratio_check(
    alpha: f64,
    berman: &BermanTable,
    model: &CovarianceModel,
    rule: HorizonRule,
    settings: &CheckSettings,
) -> Result<RatioCheckReport> {
    check_alpha(alpha, model, berman)?;
    check_ppu(settings.points_per_unit)?;
    if settings.u_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("u-grid must be increasing"));
    }
    let scalings = settings
        .u_grid
        .iter()
        .map(|&u| scaling_bundle(model, u, berman.b0()))
        .collect::<Result<Vec<_>>>()?;
    let mut report = RatioCheckReport {
        rule,
        rows: Vec::new(),
        flags: horizon_rule_flags(&rule, &scalings),
        scaling: scalings.clone(),
        diagnostics: Vec::new(),
    };
    for sc in &scalings {
        let a = rule.eval(sc);
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("horizon A(u)={a} at u={}", sc.u)));
        }
        let step = sc.grid_step(settings.points_per_unit);
        let scanner = ExceedanceScanner::new(model, step)?;
        let ks: Vec<usize> = settings.x_grid.iter().map(|&x| count_threshold(x, sc.v, step)).collect();
        let k_max = ks.iter().copied().max().unwrap_or(0);
        let n = points_in(a, step);
        let outcomes = replicate(settings.replications, |rep, work| {
            first_exceedances(&scanner, n, sc.u, k_max, settings.seed, rep, work)
        })?;
        let mut diag = PathDiagnostics { mean_points: n as f64, ..Default::default() };
        let mut hits = vec![0u64; ks.len()];
        for (idx, info) in &outcomes {
            diag.approximate |= info.approximate;
            diag.clipped |= info.clipped;
            diag.miss_bound += info.miss_bound;
            diag.mean_sampled += info.sampled as f64;
            for (h, &k) in hits.iter_mut().zip(&ks) {
                *h += (idx.len() >= k) as u64;
            }
        }
        diag.mean_sampled /= settings.replications.max(1) as f64;
        for (&x, h) in settings.x_grid.iter().zip(hits) {
            let est = TailEstimate::new(x, h, settings.replications as u64);
            let predicted = berman.berman_at(x) * a * sc.v * sc.psi;
            report.rows.push(RatioCheckRow {
                u: sc.u,
                a,
                x,
                empirical: est.estimate,
                se: est.se,
                predicted,
                ratio: est.estimate / predicted,
                ratio_se: est.se / predicted,
            });
        }
        report.diagnostics.push(diag);
    }
    Ok(report)
}

/// Positive sojourn against a sup crossing on the same full grid paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupIdentityReport {
    pub u: f64,
    pub horizon: f64,
    pub step: f64,
    pub replications: u64,
    pub sojourn_hits: u64,
    pub sup_hits: u64,
    /// Paths on which the two indicators disagree.
    pub mismatches: u64,
    pub estimate: f64,
    pub se: f64,
    /// `B̂_α(0) v(u) Ψ(u) · horizon`.
    pub predicted: f64,
}

/// Simulates `r` full paths on `[0, horizon]` at `points_per_unit` points
/// per `1/v(u)` and compares `{v L_u > 0}` with `{max X > u}` path by path.
pub fn sup_identity_check(
    model: &CovarianceModel,
    u: f64,
    horizon: f64,
    b0: f64,
    points_per_unit: f64,
    r: usize,
    seed: u64,
) -> Result<SupIdentityReport> {
    check_ppu(points_per_unit)?;
    let sc = scaling_bundle(model, u, b0)?;
    let step = sc.grid_step(points_per_unit);
    let n = points_in(horizon, step).max(2);
    let streamer = PathStreamer::new(model, step)?;
    let outcomes = replicate(r, |rep, _| {
        let (values, _) = streamer.collect(n, &mut keyed_rng(seed, stream_key(&[TAG_PATH, rep])))?;
        let sup = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let path = GridPath::new(step, values)?;
        let soj = scaled_sojourn(&path, u, horizon.min(path.duration()), &sc)?;
        Ok((soj.scaled > 0.0, sup > u))
    })?;
    let sojourn_hits = outcomes.iter().filter(|o| o.0).count() as u64;
    let sup_hits = outcomes.iter().filter(|o| o.1).count() as u64;
    let mismatches = outcomes.iter().filter(|o| o.0 != o.1).count() as u64;
    let est = TailEstimate::new(0.0, sojourn_hits, r as u64);
    Ok(SupIdentityReport {
        u,
        horizon,
        step,
        replications: r as u64,
        sojourn_hits,
        sup_hits,
        mismatches,
        estimate: est.estimate,
        se: est.se,
        predicted: b0 * sc.v * sc.psi * horizon,
    })
}
