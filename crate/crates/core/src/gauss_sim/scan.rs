//! Streams the grid indices at which a stationary path exceeds a level.

use std::ops::ControlFlow;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::covariance::CovarianceModel;
use crate::error::Result;

use super::stream::{PathStreamer, StreamWork};

/// Per-interval probability below which a Markov bridge is not refined.
pub const SKIP_PROBABILITY: f64 = 1e-13;
const BLOCK_TIME: f64 = 1.0;
const MAX_BLOCK: usize = 1 << 16;

/// Outcome of one scan.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScanInfo {
    pub approximate: bool,
    pub clipped: bool,
    /// Upper bound on the probability that some skipped grid point exceeded
    /// the level (Markov model only).
    pub miss_bound: f64,
    /// Number of Gaussian values actually generated.
    pub sampled: usize,
}

#[derive(Debug, Clone, Copy)]
struct Bridge {
    w0: f64,
    w1: f64,
    sd: f64,
    /// `e^{L}` and `e^{2L} − 1` for the interval length `L`.
    grow: f64,
    spread: f64,
}

/// Exact conditional moments for the classical OU process `r(t) = e^{−t}`.
#[derive(Debug, Clone)]
struct BridgeTable {
    block: usize,
    rho: Vec<f64>,
    bridges: Vec<Bridge>,
}

impl BridgeTable {
    fn new(step: f64) -> Self {
        let mut block = 1;
        while block < MAX_BLOCK && (2 * block) as f64 * step <= BLOCK_TIME {
            block *= 2;
        }
        let rho: Vec<f64> = (0..=block).map(|k| (-(k as f64) * step).exp()).collect();
        let bridges = (0..=block)
            .map(|len| {
                let k1 = len / 2;
                let (r1, r2) = (rho[k1], rho[len - k1]);
                let det = 1.0 - (r1 * r2).powi(2);
                let (w0, w1) = if len >= 2 {
                    (r1 * (1.0 - r2 * r2) / det, r2 * (1.0 - r1 * r1) / det)
                } else {
                    (0.0, 0.0)
                };
                let l = len as f64 * step;
                Bridge {
                    w0,
                    w1,
                    sd: (1.0 - w0 * r1 - w1 * r2).max(0.0).sqrt(),
                    grow: l.exp(),
                    spread: (2.0 * l).exp_m1(),
                }
            })
            .collect();
        Self { block, rho, bridges }
    }
}

/// Crossing bound for the bridge from `a` to `b` over an interval: through
/// `X(t) = e^{−t} W(e^{2t})` the event is a Brownian bridge crossing the
/// curve `u√s`, which is bounded by crossing its minimum on the interval.
fn crossing_bound(a: f64, b: f64, level: f64, br: &Bridge) -> Option<f64> {
    let c = if level >= 0.0 { level } else { level * br.grow };
    let end = b * br.grow;
    if a < c && end < c {
        Some((-2.0 * (c - a) * (c - end) / br.spread).exp())
    } else {
        None
    }
}

struct MarkovScan<'a, R: ?Sized, F> {
    table: &'a BridgeTable,
    level: f64,
    rng: &'a mut R,
    visit: F,
    info: ScanInfo,
}

impl<R: Rng + ?Sized, F: FnMut(usize) -> ControlFlow<()>> MarkovScan<'_, R, F> {
    fn normal(&mut self) -> f64 {
        self.info.sampled += 1;
        self.rng.sample(StandardNormal)
    }

    /// Visits exceedances strictly inside `(lo, lo + len)`.
    fn refine(&mut self, lo: usize, len: usize, a: f64, b: f64) -> ControlFlow<()> {
        if len < 2 {
            return ControlFlow::Continue(());
        }
        let br = self.table.bridges[len];
        if let Some(p) = crossing_bound(a, b, self.level, &br) {
            if p < SKIP_PROBABILITY {
                self.info.miss_bound += p;
                return ControlFlow::Continue(());
            }
        }
        let k1 = len / 2;
        let mid = br.w0 * a + br.w1 * b + br.sd * self.normal();
        self.refine(lo, k1, a, mid)?;
        if mid > self.level {
            (self.visit)(lo + k1)?;
        }
        self.refine(lo + k1, len - k1, mid, b)
    }

    fn run(&mut self, n: usize) {
        let mut x = self.normal();
        if x > self.level && (self.visit)(0).is_break() {
            return;
        }
        let mut pos = 0;
        while pos + 1 < n {
            let len = self.table.block.min(n - 1 - pos);
            let r = self.table.rho[len];
            let y = r * x + (1.0 - r * r).sqrt() * self.normal();
            if self.refine(pos, len, x, y).is_break() {
                return;
            }
            pos += len;
            if y > self.level && (self.visit)(pos).is_break() {
                return;
            }
            x = y;
        }
    }
}

/// Reports, in increasing order, the indices `i < n` with `X(iδ) > level`.
///
/// For the classical OU process the path is generated by exact bridge
/// refinement and subintervals whose crossing probability is below
/// [`SKIP_PROBABILITY`] are not resolved; other models are streamed in full.
#[derive(Debug)]
pub struct ExceedanceScanner {
    streamer: PathStreamer,
    bridges: Option<BridgeTable>,
}

impl ExceedanceScanner {
    pub fn new(model: &CovarianceModel, step: f64) -> Result<Self> {
        let streamer = PathStreamer::new(model, step)?;
        let bridges = model.is_markov().then(|| BridgeTable::new(step));
        Ok(Self { streamer, bridges })
    }

    pub fn step(&self) -> f64 {
        self.streamer.step()
    }

    pub fn scan<R, F>(&self, n: usize, level: f64, rng: &mut R, work: &mut StreamWork, mut visit: F) -> Result<ScanInfo>
    where
        R: Rng + ?Sized,
        F: FnMut(usize) -> ControlFlow<()>,
    {
        if n == 0 {
            return Ok(ScanInfo::default());
        }
        if let Some(table) = &self.bridges {
            let mut s = MarkovScan {
                table,
                level,
                rng,
                visit,
                info: ScanInfo::default(),
            };
            s.run(n);
            return Ok(s.info);
        }
        let mut sampled = 0;
        let info = self.streamer.run(n, rng, work, |offset, chunk| {
            sampled = offset + chunk.len();
            for (j, &v) in chunk.iter().enumerate() {
                if v > level {
                    visit(offset + j)?;
                }
            }
            ControlFlow::Continue(())
        })?;
        Ok(ScanInfo {
            approximate: info.approximate,
            clipped: info.clipped,
            miss_bound: 0.0,
            sampled,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss_sim::rng::keyed_rng;

    fn ou() -> CovarianceModel {
        CovarianceModel::frac_ou(1.0).unwrap()
    }

    #[test]
    fn bridge_moments_match_direct_conditioning() {
        let step = 0.03;
        let t = BridgeTable::new(step);
        assert_eq!(t.block, 32);
        for len in [2usize, 3, 7, 32] {
            let br = t.bridges[len];
            let k1 = len / 2;
            // conditional law of X(k1 δ) given X(0), X(len δ) by Gaussian algebra
            let r = |k: usize| (-(k as f64) * step).exp();
            let s = nalgebra::Matrix2::new(1.0, r(len), r(len), 1.0);
            let c = nalgebra::RowVector2::new(r(k1), r(len - k1));
            let w = c * s.try_inverse().unwrap();
            let var = 1.0 - (w * c.transpose())[(0, 0)];
            assert!((w[0] - br.w0).abs() < 1e-12 && (w[1] - br.w1).abs() < 1e-12);
            assert!((var.sqrt() - br.sd).abs() < 1e-10);
        }
    }

    #[test]
    fn low_level_visits_every_point() {
        let s = ExceedanceScanner::new(&ou(), 0.01).unwrap();
        let mut seen = Vec::new();
        let info = s
            .scan(1000, f64::NEG_INFINITY, &mut keyed_rng(3, 1), &mut StreamWork::default(), |i| {
                seen.push(i);
                ControlFlow::Continue(())
            })
            .unwrap();
        assert_eq!(seen, (0..1000).collect::<Vec<_>>());
        assert_eq!(info.sampled, 1000);
        assert_eq!(info.miss_bound, 0.0);
    }

    #[test]
    fn indices_increase_and_stay_in_range() {
        let s = ExceedanceScanner::new(&ou(), 0.02).unwrap();
        for seed in 0..20 {
            let mut seen: Vec<usize> = Vec::new();
            s.scan(5000, 1.0, &mut keyed_rng(seed, 2), &mut StreamWork::default(), |i| {
                seen.push(i);
                ControlFlow::Continue(())
            })
            .unwrap();
            assert!(seen.windows(2).all(|w| w[0] < w[1]));
            assert!(seen.iter().all(|&i| i < 5000));
        }
    }

    #[test]
    fn scan_is_deterministic_and_stops_early() {
        let s = ExceedanceScanner::new(&ou(), 0.01).unwrap();
        let collect = |seed| {
            let mut v = Vec::new();
            s.scan(100_000, 2.0, &mut keyed_rng(seed, 5), &mut StreamWork::default(), |i| {
                v.push(i);
                ControlFlow::Continue(())
            })
            .unwrap();
            v
        };
        assert_eq!(collect(4), collect(4));
        let mut calls = 0;
        s.scan(100_000, 0.0, &mut keyed_rng(4, 5), &mut StreamWork::default(), |_| {
            calls += 1;
            ControlFlow::Break(())
        })
        .unwrap();
        assert_eq!(calls, 1);
    }

    #[test]
    fn refinement_matches_plain_recursion_in_law() {
        // exceedance statistics of the skipping scan against the full AR(1) path
        let (step, n, level, reps) = (1.0 / 90.0, 900, 2.5, 4000u64);
        let scan = ExceedanceScanner::new(&ou(), step).unwrap();
        let plain = PathStreamer::new(&ou(), step).unwrap();
        let mut work = StreamWork::default();
        let (mut hit_a, mut hit_b, mut cnt_a, mut cnt_b) = (0.0, 0.0, 0.0, 0.0);
        let mut sampled = 0;
        for r in 0..reps {
            let mut c = 0usize;
            let info = scan
                .scan(n, level, &mut keyed_rng(11, r), &mut work, |_| {
                    c += 1;
                    ControlFlow::Continue(())
                })
                .unwrap();
            sampled += info.sampled;
            assert!(info.miss_bound < 1e-9);
            hit_a += (c > 0) as u8 as f64;
            cnt_a += c as f64;
            let (path, _) = plain.collect(n, &mut keyed_rng(12, r)).unwrap();
            let c = path.iter().filter(|&&v| v > level).count();
            hit_b += (c > 0) as u8 as f64;
            cnt_b += c as f64;
        }
        let r = reps as f64;
        let (pa, pb) = (hit_a / r, hit_b / r);
        let se = ((pa * (1.0 - pa) + pb * (1.0 - pb)) / r).sqrt();
        assert!((pa - pb).abs() < 4.0 * se, "{pa} vs {pb}");
        assert!((cnt_a / cnt_b - 1.0).abs() < 0.15, "{cnt_a} vs {cnt_b}");
        assert!(sampled < (n * reps as usize) / 3, "sampled {sampled}");
    }

    #[test]
    fn non_markov_models_stream_in_full() {
        let model = CovarianceModel::frac_ou(1.5).unwrap();
        let s = ExceedanceScanner::new(&model, 0.05).unwrap();
        let info = s
            .scan(300, 10.0, &mut keyed_rng(1, 1), &mut StreamWork::default(), |_| ControlFlow::Continue(()))
            .unwrap();
        assert_eq!(info.sampled, 300);
    }
}
