//! The drifted fBm field `W_α(s) = √2 B_α(s) − |s|^α` on `[−S, S]`.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::circulant::{fgn_autocov, CirculantPlan, CirculantWork};
use super::rng::keyed_rng;

/// Largest number of grid points on `[−S, S]`.
pub const MAX_POINTS: usize = 1 << 24;

/// One sampled `W_α` path on the symmetric grid `s_i = (i − origin_index)·step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WAlphaPath {
    pub alpha: f64,
    pub step: f64,
    pub origin_index: usize,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl WAlphaPath {
    pub fn s(&self, i: usize) -> f64 {
        (i as f64 - self.origin_index as f64) * self.step
    }
}

/// Reusable sampler for `W_α` on a fixed grid.
///
/// fBm is synthesised on `[0, 2S]` from fractional Gaussian noise and
/// recentred at `S`, which is exact in law by stationarity of increments.
/// For `α = 2` the fBm is the random line `s·Z`.
#[derive(Debug)]
pub struct WAlphaSampler {
    alpha: f64,
    step: f64,
    half: usize,
    drift: Vec<f64>,
    noise_scale: f64,
    plan: Option<CirculantPlan>,
}

/// Buffers reused across calls to [`WAlphaSampler::fill_pair`].
#[derive(Debug, Default)]
pub struct WAlphaWork {
    circ: CirculantWork,
}

impl WAlphaSampler {
    pub fn new(alpha: f64, s_max: f64, step: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::range("alpha", alpha, 0.0, 2.0));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {step}")));
        }
        if !(s_max > 0.0 && s_max.is_finite()) {
            return Err(Error::invalid(format!("half-window S must be positive, got {s_max}")));
        }
        let half = (s_max / step).round() as usize;
        if half == 0 {
            return Err(Error::invalid(format!("step {step} exceeds half-window {s_max}")));
        }
        let points = 2 * half + 1;
        if points > MAX_POINTS {
            return Err(Error::range("grid points on [-S, S]", points as f64, 3.0, MAX_POINTS as f64));
        }
        let drift = (0..points)
            .map(|i| ((i as f64 - half as f64) * step).abs().powf(alpha))
            .collect();
        let plan = if alpha == 2.0 {
            None
        } else {
            Some(CirculantPlan::power_of_two(2 * half, |k| Ok(fgn_autocov(alpha, k)))?)
        };
        Ok(Self {
            alpha,
            step,
            half,
            drift,
            noise_scale: step.powf(alpha / 2.0),
            plan,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn origin_index(&self) -> usize {
        self.half
    }

    pub fn len(&self) -> usize {
        self.drift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drift.is_empty()
    }

    pub fn clipped(&self) -> bool {
        self.plan.as_ref().is_some_and(CirculantPlan::clipped)
    }

    /// Writes two independent paths into `a` and `b`.
    pub fn fill_pair<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        work: &mut WAlphaWork,
        a: &mut Vec<f64>,
        b: &mut Vec<f64>,
    ) {
        let n = self.len();
        a.clear();
        b.clear();
        match &self.plan {
            None => {
                let za: f64 = rng.sample(StandardNormal);
                let zb: f64 = rng.sample(StandardNormal);
                for (i, d) in self.drift.iter().enumerate() {
                    let s = (i as f64 - self.half as f64) * self.step;
                    a.push(SQRT_2 * za * s - d);
                    b.push(SQRT_2 * zb * s - d);
                }
            }
            Some(plan) => {
                plan.fill(rng, &mut work.circ);
                self.integrate(work.circ.re(n - 1), a);
                self.integrate(work.circ.im(n - 1), b);
            }
        }
        a[self.half] = 0.0;
        b[self.half] = 0.0;
    }

    fn integrate(&self, noise: impl Iterator<Item = f64>, out: &mut Vec<f64>) {
        let mut acc = 0.0;
        out.push(0.0);
        for g in noise {
            acc += g * self.noise_scale;
            out.push(acc);
        }
        let centre = out[self.half];
        for (w, d) in out.iter_mut().zip(&self.drift) {
            *w = SQRT_2 * (*w - centre) - d;
        }
    }

    /// One path from stream `key` of `seed`.
    pub fn sample(&self, seed: u64, key: u64) -> WAlphaPath {
        let mut rng = keyed_rng(seed, key);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        self.fill_pair(&mut rng, &mut WAlphaWork::default(), &mut a, &mut b);
        WAlphaPath {
            alpha: self.alpha,
            step: self.step,
            origin_index: self.half,
            values: a,
            seed,
        }
    }
}

/// Samples `W_α` on `[−S, S]` with the given grid step.
pub fn simulate_w_alpha(alpha: f64, s_max: f64, step: f64, seed: u64) -> Result<WAlphaPath> {
    Ok(WAlphaSampler::new(alpha, s_max, step)?.sample(seed, 0))
}
