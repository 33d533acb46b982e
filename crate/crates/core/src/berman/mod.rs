//! Monte Carlo estimation of the Berman constants `B_α(x)`, the limit law
//! `G_α` of the total sojourn of `W_α + E` above zero, and the jump law
//! `F_α(x) = 1 − B_α(x)/B_α(0)`.
//!
//! The primary estimator uses `B_α(x) = E[𝕀(J > x)/J]` with
//! `J = ∫ 𝕀(W_α(s) + E > 0) ds`, `E ~ Exp(1)`, evaluated on the grid.

pub mod oracle;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss_sim::{keyed_rng, stream_key, WAlphaSampler, WAlphaWork, MAX_POINTS};
use crate::numeric::mean_se;

/// Number of cells of the stored `F̂_α` table.
pub const F_CELLS: usize = 2048;
/// Quantile of `J` at which the `F̂_α` table ends.
pub const F_TOP_QUANTILE: f64 = 0.9999;
pub const MIN_REPLICATIONS: usize = 1000;
const MAX_REJECT_FRACTION: f64 = 1e-3;
/// Relative (to the grid step) distance within which a sojourn equals `x`.
const TIE_TOLERANCE: f64 = 1e-9;

const TAG_TABLE: u64 = 1;
const TAG_SHIFT: u64 = 2;
const TAG_DIRECT: u64 = 3;

/// Default grid step `min(0.01, 0.01^{2/α})`, coarsened if needed so that
/// `[−S, S]` fits in [`MAX_POINTS`] points.
pub fn default_step(alpha: f64, s_max: f64) -> f64 {
    let rule = 0.01f64.min(0.01f64.powf(2.0 / alpha));
    rule.max(2.0 * s_max / (MAX_POINTS - 1) as f64)
}

/// Sojourn of `w + e` above zero over the left-endpoint cells of `w`.
fn grid_sojourn(w: &[f64], e: f64, step: f64) -> f64 {
    let cells = &w[..w.len() - 1];
    step * cells.iter().filter(|&&x| x > -e).count() as f64
}

/// Draws `r` limit sojourns in pairs, one keyed stream per pair.
fn limit_sojourns(sampler: &WAlphaSampler, r: usize, seed: u64) -> Vec<f64> {
    let pairs = r.div_ceil(2);
    let step = sampler.step();
    let out: Vec<(f64, f64)> = (0..pairs)
        .into_par_iter()
        .map_init(
            || (WAlphaWork::default(), Vec::new(), Vec::new()),
            |(work, a, b), k| {
                let mut rng = keyed_rng(seed, stream_key(&[TAG_TABLE, k as u64]));
                sampler.fill_pair(&mut rng, work, a, b);
                let ea: f64 = rng.sample(Exp1);
                let eb: f64 = rng.sample(Exp1);
                (grid_sojourn(a, ea, step), grid_sojourn(b, eb, step))
            },
        )
        .collect();
    let mut j: Vec<f64> = out.into_iter().flat_map(|(a, b)| [a, b]).collect();
    j.truncate(r);
    j
}

/// One draw of `J`, the grid sojourn of `W_α + E` above 0 on `[−S, S)`.
pub fn sample_limit_sojourn(alpha: f64, s_max: f64, step: f64, seed: u64) -> Result<f64> {
    let sampler = WAlphaSampler::new(alpha, s_max, step)?;
    Ok(limit_sojourns(&sampler, 1, seed)[0])
}

/// Estimated `B̂_α(x)` on an x-grid together with the empirical jump law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BermanTable {
    pub alpha: f64,
    #[serde(rename = "S")]
    pub s_max: f64,
    pub step: f64,
    pub replications: usize,
    pub x_grid: Vec<f64>,
    pub b_values: Vec<f64>,
    pub b_se: Vec<f64>,
    /// Cell edges of the `F̂_α` table, uniform on `[0, q_{0.9999}(J)]`.
    pub f_grid: Vec<f64>,
    pub f_cdf: Vec<f64>,
    pub seed: u64,
    /// `F̂_α` on `x_grid` and its delta-method (jackknife) standard error.
    pub f_values: Vec<f64>,
    pub f_se: Vec<f64>,
    pub rejected: usize,
    /// Upper bound `1/step` of the `1/J` weights.
    pub weight_cap: f64,
    /// Largest `F̂_α` mass carried by a single value of `J`.
    pub max_atom_mass: f64,
    pub clipped_eigenvalues: bool,
    /// Sorted accepted samples of `J`; not serialised.
    #[serde(skip)]
    pub g_samples: Vec<f64>,
    #[serde(skip)]
    suffix: Vec<f64>,
    #[serde(skip)]
    suffix_sq: Vec<f64>,
}

fn check_x_grid(x_grid: &[f64]) -> Result<()> {
    if x_grid.first() != Some(&0.0) {
        return Err(Error::invalid("x-grid must start at 0"));
    }
    if x_grid.windows(2).any(|w| !(w[1] > w[0])) || x_grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("x-grid must be finite and strictly increasing"));
    }
    Ok(())
}

impl BermanTable {
    /// Builds the table from sampled sojourns. Zero samples count as
    /// rejected; more than 0.1% rejections is an estimation error.
    pub fn from_samples(
        alpha: f64,
        s_max: f64,
        step: f64,
        seed: u64,
        x_grid: &[f64],
        samples: Vec<f64>,
        clipped_eigenvalues: bool,
    ) -> Result<Self> {
        check_x_grid(x_grid)?;
        let total = samples.len();
        let mut j: Vec<f64> = samples.into_iter().filter(|&x| x > 0.0).collect();
        let rejected = total - j.len();
        if rejected as f64 > MAX_REJECT_FRACTION * total as f64 {
            return Err(Error::Estimation(format!("{rejected} of {total} sojourn samples were zero")));
        }
        if j.is_empty() {
            return Err(Error::Estimation("no accepted sojourn samples".into()));
        }
        if j.iter().any(|x| !x.is_finite()) {
            return Err(Error::Estimation("non-finite sojourn sample".into()));
        }
        j.sort_by(f64::total_cmp);
        let n = j.len();
        // suffix[i] = Σ_{k ≥ i} 1/J_k, accumulated from the largest J
        let mut suffix = vec![0.0; n + 1];
        let mut suffix_sq = vec![0.0; n + 1];
        for i in (0..n).rev() {
            let z = 1.0 / j[i];
            suffix[i] = suffix[i + 1] + z;
            suffix_sq[i] = suffix_sq[i + 1] + z * z;
        }
        let top = j[((F_TOP_QUANTILE * n as f64).ceil() as usize).clamp(1, n) - 1];
        let f_grid: Vec<f64> = (0..=F_CELLS).map(|i| top * i as f64 / F_CELLS as f64).collect();

        let mut max_atom = 0.0f64;
        let mut i = 0;
        while i < n {
            let k = j[i..].partition_point(|&x| x == j[i]);
            max_atom = max_atom.max(k as f64 / j[i]);
            i += k;
        }
        let mut table = Self {
            alpha,
            s_max,
            step,
            replications: total,
            x_grid: x_grid.to_vec(),
            b_values: Vec::new(),
            b_se: Vec::new(),
            f_grid,
            f_cdf: Vec::new(),
            seed,
            f_values: Vec::new(),
            f_se: Vec::new(),
            rejected,
            weight_cap: 1.0 / step,
            max_atom_mass: max_atom / suffix[0],
            clipped_eigenvalues,
            g_samples: j,
            suffix,
            suffix_sq,
        };
        let b0 = table.b0();
        for &x in x_grid {
            let (b, se) = table.sample_b(x);
            let q = b / b0;
            let (w1, w2) = table.weighted_sq(x);
            let ss = (w2 - 2.0 * q * w1 + q * q * table.suffix_sq[0]).max(0.0);
            table.b_values.push(b);
            table.b_se.push(se);
            table.f_values.push(1.0 - q);
            table.f_se.push(if n > 1 { (ss / (n - 1) as f64 / n as f64).sqrt() / b0 } else { 0.0 });
        }
        table.f_cdf = table.f_grid.iter().map(|&x| 1.0 - table.sample_b(x).0 / b0).collect();
        Ok(table)
    }

    /// Index range of samples tied with `x`. Grid sojourns live on the
    /// lattice `δℕ`, and a tie counts with weight 1/2 in `𝕀(J > x)`.
    fn tie_range(&self, x: f64) -> (usize, usize) {
        let eps = TIE_TOLERANCE * self.step;
        let lo = self.g_samples.partition_point(|&j| j < x - eps);
        let hi = lo + self.g_samples[lo..].partition_point(|&j| j <= x + eps);
        (lo, hi)
    }

    /// `(Σ w/J², Σ w²/J²)` for the tie-weighted indicator `w`.
    fn weighted_sq(&self, x: f64) -> (f64, f64) {
        let (lo, hi) = self.tie_range(x);
        let tie = self.suffix_sq[lo] - self.suffix_sq[hi];
        (self.suffix_sq[hi] + 0.5 * tie, self.suffix_sq[hi] + 0.25 * tie)
    }

    fn sample_b(&self, x: f64) -> (f64, f64) {
        let n = self.g_samples.len() as f64;
        let (lo, hi) = self.tie_range(x);
        let b = 0.5 * (self.suffix[lo] + self.suffix[hi]) / n;
        let (_, w2) = self.weighted_sq(x);
        let var = if n > 1.0 {
            ((w2 - n * b * b) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        (b, (var / n).sqrt())
    }

    /// `B̂_α(0)`.
    pub fn b0(&self) -> f64 {
        if self.g_samples.is_empty() {
            self.b_values[0]
        } else {
            self.suffix[0] / self.g_samples.len() as f64
        }
    }

    /// True when the raw samples are available (not a deserialised table).
    pub fn has_samples(&self) -> bool {
        !self.g_samples.is_empty()
    }

    /// `B̂_α(x)` at any `x ≥ 0`: exact from the samples when present,
    /// otherwise from the x-grid or the stored `F̂_α` table.
    pub fn berman_at(&self, x: f64) -> f64 {
        if self.has_samples() {
            return self.sample_b(x).0;
        }
        if let Some(i) = self.x_grid.iter().position(|&g| g == x) {
            return self.b_values[i];
        }
        self.b0() * (1.0 - self.f_interp(x))
    }

    /// Standard error of `B̂_α(x)` (samples required, else grid lookup).
    pub fn berman_se_at(&self, x: f64) -> Option<f64> {
        if self.has_samples() {
            return Some(self.sample_b(x).1);
        }
        self.x_grid.iter().position(|&g| g == x).map(|i| self.b_se[i])
    }

    /// `F̂_α(x) = 1 − B̂_α(x)/B̂_α(0)`.
    pub fn f_at(&self, x: f64) -> f64 {
        if self.has_samples() {
            return 1.0 - self.berman_at(x) / self.b0();
        }
        self.f_interp(x)
    }

    fn f_interp(&self, x: f64) -> f64 {
        let top = *self.f_grid.last().expect("non-empty grid");
        if x <= 0.0 {
            return 0.0;
        }
        if x >= top {
            return *self.f_cdf.last().expect("non-empty cdf");
        }
        let h = top / F_CELLS as f64;
        let pos = x / h;
        let i = (pos.floor() as usize).min(F_CELLS - 1);
        let w = pos - i as f64;
        self.f_cdf[i] + w * (self.f_cdf[i + 1] - self.f_cdf[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        check_x_grid(&self.x_grid)?;
        let n = self.x_grid.len();
        if [self.b_values.len(), self.b_se.len(), self.f_values.len(), self.f_se.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::invalid("Berman table columns differ in length"));
        }
        if self.f_grid.len() != F_CELLS + 1 || self.f_cdf.len() != F_CELLS + 1 {
            return Err(Error::invalid(format!("F table must have {} edges", F_CELLS + 1)));
        }
        if !(self.b_values[0] > 0.0) {
            return Err(Error::invalid("B(0) must be positive"));
        }
        Ok(())
    }
}

/// Estimates `B̂_α(x)` on `x_grid` from `r` limit sojourns on `[−S, S)`.
pub fn estimate_berman(alpha: f64, x_grid: &[f64], s_max: f64, step: f64, r: usize, seed: u64) -> Result<BermanTable> {
    if r < MIN_REPLICATIONS {
        return Err(Error::range("replications", r as f64, MIN_REPLICATIONS as f64, f64::INFINITY));
    }
    check_x_grid(x_grid)?;
    let sampler = WAlphaSampler::new(alpha, s_max, step)?;
    let samples = limit_sojourns(&sampler, r, seed);
    BermanTable::from_samples(alpha, s_max, step, seed, x_grid, samples, sampler.clipped())
}

/// Monte Carlo estimate of `B_α(S, x)/S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowedEstimate {
    #[serde(rename = "S")]
    pub s_max: f64,
    pub x: f64,
    pub step: f64,
    pub replications: usize,
    pub value: f64,
    pub se: f64,
}

fn windowed_common(alpha: f64, s_max: f64, x: f64, step: f64, r: usize) -> Result<Option<WAlphaSampler>> {
    if r == 0 {
        return Err(Error::invalid("at least one replication is required"));
    }
    if !(x >= 0.0) {
        return Err(Error::range("x", x, 0.0, f64::INFINITY));
    }
    let sampler = WAlphaSampler::new(alpha, s_max, step)?;
    let window = sampler.origin_index() as f64 * step;
    Ok((x < window).then_some(sampler))
}

fn zero_estimate(s_max: f64, x: f64, step: f64, r: usize) -> WindowedEstimate {
    WindowedEstimate {
        s_max,
        x,
        step,
        replications: r,
        value: 0.0,
        se: 0.0,
    }
}

fn paired_means<F>(sampler: &WAlphaSampler, r: usize, seed: u64, tag: u64, per_path: F) -> Vec<f64>
where
    F: Fn(&[f64], f64) -> f64 + Sync,
{
    let pairs = r.div_ceil(2);
    let out: Vec<(f64, f64)> = (0..pairs)
        .into_par_iter()
        .map_init(
            || (WAlphaWork::default(), Vec::new(), Vec::new()),
            |(work, a, b), k| {
                let mut rng = keyed_rng(seed, stream_key(&[tag, k as u64]));
                sampler.fill_pair(&mut rng, work, a, b);
                let ea: f64 = rng.sample(Exp1);
                let eb: f64 = rng.sample(Exp1);
                (per_path(a, ea), per_path(b, eb))
            },
        )
        .collect();
    let mut v: Vec<f64> = out.into_iter().flat_map(|(a, b)| [a, b]).collect();
    v.truncate(r);
    v
}

/// Estimates `B_α(S, x)/S` for the window `[0, S)`.
///
/// Uses the shift representation
/// `B_α(S, x) = ∫₀^S E[𝕀(J_t > x)/J_t] dt`, where `J_t` is the sojourn of
/// `W_α + E` above 0 over `[−t, S − t)`; on the grid the `t`-integral is an
/// average over all shifts, computed from one path on `[−S, S)` by prefix
/// counts. The estimate is unbiased for the grid version of `B_α(S, x)/S`.
pub fn estimate_berman_windowed(alpha: f64, s_max: f64, x: f64, step: f64, r: usize, seed: u64) -> Result<WindowedEstimate> {
    let Some(sampler) = windowed_common(alpha, s_max, x, step, r)? else {
        return Ok(zero_estimate(s_max, x, step, r));
    };
    let o = sampler.origin_index();
    let per_path = |w: &[f64], e: f64| {
        let mut prefix = Vec::with_capacity(w.len() + 1);
        let mut c = 0u32;
        prefix.push(0);
        for &v in w {
            c += u32::from(v > -e);
            prefix.push(c);
        }
        let mut total = 0.0;
        for shift in 0..o {
            let lo = o - shift;
            let count = prefix[lo + o] - prefix[lo];
            let j = step * f64::from(count);
            if j > x {
                total += 1.0 / j;
            }
        }
        total / o as f64
    };
    let values = paired_means(&sampler, r, seed, TAG_SHIFT, per_path);
    let est = mean_se(&values);
    Ok(WindowedEstimate {
        s_max: o as f64 * step,
        x,
        step,
        replications: r,
        value: est.mean,
        se: est.se,
    })
}

/// Smallest cell count `k` with `step·k > x`.
fn cells_exceeding(x: f64, step: f64) -> usize {
    let mut k = (x / step).floor() as usize + 1;
    while k > 1 && step * (k - 1) as f64 > x {
        k -= 1;
    }
    while step * k as f64 <= x {
        k += 1;
    }
    k
}

/// Direct estimator of `B_α(S, x)/S` on `[0, S)`: for each path the
/// `z`-integral is exactly `e^{y*}` with `y*` the `k`-th largest grid value,
/// `k` the smallest count whose sojourn exceeds `x`. Its variance grows
/// quickly with `S`; intended for small windows.
pub fn estimate_berman_windowed_direct(alpha: f64, s_max: f64, x: f64, step: f64, r: usize, seed: u64) -> Result<WindowedEstimate> {
    let Some(sampler) = windowed_common(alpha, s_max, x, step, r)? else {
        return Ok(zero_estimate(s_max, x, step, r));
    };
    let o = sampler.origin_index();
    let k = cells_exceeding(x, step);
    let window = o as f64 * step;
    let per_path = |w: &[f64], _e: f64| {
        let mut part = w[o..2 * o].to_vec();
        let (_, kth, _) = part.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        kth.exp() / window
    };
    let values = paired_means(&sampler, r, seed, TAG_DIRECT, per_path);
    let est = mean_se(&values);
    Ok(WindowedEstimate {
        s_max: window,
        x,
        step,
        replications: r,
        value: est.mean,
        se: est.se,
    })
}
