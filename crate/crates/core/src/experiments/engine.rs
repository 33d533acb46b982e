//! Replication driver shared by the experiments.

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::gauss_sim::{keyed_rng, stream_key, ExceedanceScanner, ScanInfo, StreamWork};
use crate::heavy_tail::HorizonModel;

const CHUNK: usize = 1024;
/// Stream tags; the horizon and the path of a replication use separate
/// streams so that `T` is shared by every level.
pub(crate) const TAG_HORIZON: u64 = 0x11;
pub(crate) const TAG_PATH: u64 = 0x12;

/// Grid points `iδ` in `[0, t)`, snapping times within `1e-9` cells.
pub fn points_in(t: f64, step: f64) -> usize {
    if !(t > 0.0) {
        return 0;
    }
    let x = t / step;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Smallest exceedance count `k` with `v · kδ > x`.
pub fn count_threshold(x: f64, v: f64, step: f64) -> usize {
    let scaled = |k: usize| v * (k as f64 * step);
    let mut k = (x / (v * step)).floor().max(0.0) as usize;
    while k > 0 && scaled(k - 1) > x {
        k -= 1;
    }
    while !(scaled(k) > x) {
        k += 1;
    }
    k
}

/// Runs `r` replications in fixed chunks; the output order and every
/// reduction are independent of the thread count.
pub(crate) fn replicate<T, F>(r: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut StreamWork) -> Result<T> + Sync,
{
    let chunks: Vec<Result<Vec<T>>> = (0..r.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut work = StreamWork::default();
            (c * CHUNK..((c + 1) * CHUNK).min(r))
                .map(|rep| f(rep as u64, &mut work))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(r);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// The first `k_max` exceedance indices among the first `n` grid points.
pub(crate) fn first_exceedances(
    scanner: &ExceedanceScanner,
    n: usize,
    level: f64,
    k_max: usize,
    seed: u64,
    rep: u64,
    work: &mut StreamWork,
) -> Result<(Vec<usize>, ScanInfo)> {
    let mut rng = keyed_rng(seed, stream_key(&[TAG_PATH, rep]));
    let mut idx = Vec::new();
    if k_max == 0 {
        return Ok((idx, ScanInfo::default()));
    }
    let info = scanner.scan(n, level, &mut rng, work, |i| {
        idx.push(i);
        if idx.len() >= k_max {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    Ok((idx, info))
}

/// Binomial proportion with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub x: f64,
    pub hits: u64,
    pub replications: u64,
    pub estimate: f64,
    pub se: f64,
}

impl TailEstimate {
    pub(crate) fn new(x: f64, hits: u64, replications: u64) -> Self {
        let n = replications as f64;
        let p = if replications > 0 { hits as f64 / n } else { 0.0 };
        Self {
            x,
            hits,
            replications,
            estimate: p,
            se: if replications > 0 { (p * (1.0 - p) / n).sqrt() } else { 0.0 },
        }
    }
}

/// Aggregate simulation diagnostics over replications.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PathDiagnostics {
    pub approximate: bool,
    pub clipped: bool,
    /// Sum over replications of the per-path skipped-exceedance bounds.
    pub miss_bound: f64,
    pub mean_points: f64,
    pub mean_sampled: f64,
    /// Replications whose horizon was shortened to the cap.
    pub capped: u64,
}

/// Settings of one level for [`simulate_tails`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSetup {
    pub u: f64,
    /// Scale applied to the raw sojourn (normally `v(u)`).
    pub v: f64,
    pub step: f64,
    /// Horizon truncation; `T` is replaced by `min(T, cap)`.
    pub cap: f64,
}

/// `P(v · L_u[0, min(T, cap)] > x)` for every `x` in `x_grid`, from `r`
/// replications with common random numbers across levels and `x`.
pub fn simulate_tails(
    model: &CovarianceModel,
    horizon: &HorizonModel,
    level: &LevelSetup,
    x_grid: &[f64],
    r: usize,
    seed: u64,
) -> Result<(Vec<TailEstimate>, PathDiagnostics)> {
    if x_grid.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(Error::invalid("x values must be finite and non-negative"));
    }
    if !(level.cap > 0.0) {
        return Err(Error::range("horizon cap", level.cap, 0.0, f64::INFINITY));
    }
    let scanner = ExceedanceScanner::new(model, level.step)?;
    let ks: Vec<usize> = x_grid.iter().map(|&x| count_threshold(x, level.v, level.step)).collect();
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let outcomes = replicate(r, |rep, work| {
        let t = horizon.sample(&mut keyed_rng(seed, stream_key(&[TAG_HORIZON, rep])));
        let capped = t > level.cap;
        let n = points_in(t.min(level.cap), level.step);
        let (idx, info) = first_exceedances(&scanner, n, level.u, k_max, seed, rep, work)?;
        Ok((idx.len(), n, capped, info))
    })?;
    let mut hits = vec![0u64; ks.len()];
    let mut diag = PathDiagnostics::default();
    for (count, n, capped, info) in &outcomes {
        for (h, &k) in hits.iter_mut().zip(&ks) {
            *h += (*count >= k) as u64;
        }
        diag.approximate |= info.approximate;
        diag.clipped |= info.clipped;
        diag.miss_bound += info.miss_bound;
        diag.mean_points += *n as f64;
        diag.mean_sampled += info.sampled as f64;
        diag.capped += *capped as u64;
    }
    if r > 0 {
        diag.mean_points /= r as f64;
        diag.mean_sampled /= r as f64;
    }
    let est = x_grid
        .iter()
        .zip(hits)
        .map(|(&x, h)| TailEstimate::new(x, h, r as u64))
        .collect();
    Ok((est, diag))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert_eq!(count_threshold(0.0, 12.0, 1.0 / 120.0), 1);
        assert_eq!(count_threshold(1.0, 12.0, 1.0 / 120.0), 11);
        assert_eq!(count_threshold(0.95, 10.0, 0.01), 10);
        for (x, v, s) in [(0.37, 9.1, 0.011), (2.0, 16.0, 1.0 / 160.0), (5.5, 1.0, 0.5)] {
            let k = count_threshold(x, v, s);
            assert!(v * (k as f64 * s) > x);
            assert!(k == 0 || !(v * ((k - 1) as f64 * s) > x));
        }
    }

    #[test]
    fn grid_points() {
        assert_eq!(points_in(1.0, 0.1), 10);
        assert_eq!(points_in(1.05, 0.1), 11);
        assert_eq!(points_in(0.0, 0.1), 0);
        assert_eq!(points_in(0.3, 0.1), 3);
    }

    #[test]
    fn replicate_is_ordered() {
        let v = replicate(3000, |rep, _| Ok(rep)).unwrap();
        assert_eq!(v, (0..3000).collect::<Vec<_>>());
    }

    #[test]
    fn far_below_level_gives_certain_exceedance() {
        let model = CovarianceModel::frac_ou(1.0).unwrap();
        let h = HorizonModel::deterministic(1.0).unwrap();
        let setup = LevelSetup { u: -10.0, v: 1.0, step: 0.01, cap: 2.0 };
        let (est, _) = simulate_tails(&model, &h, &setup, &[0.0, 0.5], 500, 1).unwrap();
        assert_eq!(est[0].estimate, 1.0);
        assert_eq!(est[1].estimate, 1.0);
    }

    #[test]
    fn x_beyond_capped_horizon_is_zero() {
        let model = CovarianceModel::frac_ou(1.0).unwrap();
        let h = HorizonModel::exponential(1.0).unwrap();
        let setup = LevelSetup { u: -10.0, v: 2.0, step: 0.01, cap: 3.0 };
        let (est, diag) = simulate_tails(&model, &h, &setup, &[6.0, 7.0], 500, 1).unwrap();
        assert_eq!(est[0].hits, 0);
        assert_eq!(est[1].hits, 0);
        assert!(diag.capped > 0);
    }

    #[test]
    fn tails_are_monotone_in_x() {
        let model = CovarianceModel::frac_ou(1.0).unwrap();
        let h = HorizonModel::exponential(2.0).unwrap();
        let setup = LevelSetup { u: 2.0, v: 4.0, step: 0.025, cap: 50.0 };
        let xs = [0.0, 0.3, 1.0, 2.0, 4.0];
        let (est, _) = simulate_tails(&model, &h, &setup, &xs, 2000, 9).unwrap();
        assert!(est.windows(2).all(|w| w[1].hits <= w[0].hits));
        assert!(est[0].hits > 0);
    }

    proptest::proptest! {
        #[test]
        fn threshold_is_the_smallest_exceeding_count(x in 0.0f64..20.0, v in 0.5f64..50.0, ppu in 5.0f64..40.0) {
            let step = 1.0 / (ppu * v);
            let k = count_threshold(x, v, step);
            proptest::prop_assert!(v * (k as f64 * step) > x);
            proptest::prop_assert!(k == 0 || !(v * ((k - 1) as f64 * step) > x));
        }

        #[test]
        fn points_cover_the_window(t in 0.0f64..100.0, step in 1e-3f64..1.0) {
            let n = points_in(t, step);
            proptest::prop_assert!(n as f64 * step >= t * (1.0 - 1e-9));
            proptest::prop_assert!(n == 0 || ((n - 1) as f64) * step < t);
        }
    }
}
