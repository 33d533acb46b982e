//! Circulant embedding of a stationary covariance sequence.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Relative size below which negative eigenvalues are clipped to zero.
pub const CLIP_TOLERANCE: f64 = 1e-8;

/// Factorised circulant embedding of `c_0, …, c_{n−1}` into size `M ≥ 2(n−1)`.
pub struct CirculantPlan {
    len: usize,
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    clipped: bool,
    min_ratio: f64,
}

impl std::fmt::Debug for CirculantPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantPlan")
            .field("len", &self.len)
            .field("size", &self.scale.len())
            .field("clipped", &self.clipped)
            .finish()
    }
}

/// Reusable buffers for [`CirculantPlan::fill`].
#[derive(Debug, Default)]
pub struct CirculantWork {
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl CirculantPlan {
    /// Embeds into an explicit even size `size ≥ 2(len − 1)`. `acov(k)` must
    /// be defined for `k ≤ size / 2`.
    pub fn with_size(len: usize, size: usize, acov: impl Fn(usize) -> Result<f64>) -> Result<Self> {
        if len < 2 {
            return Err(Error::invalid(format!("path length must be at least 2, got {len}")));
        }
        if size % 2 != 0 || size < 2 * (len - 1) {
            return Err(Error::invalid(format!("embedding size {size} too small for length {len}")));
        }
        let half = size / 2;
        let mut first = Vec::with_capacity(half + 1);
        for k in 0..=half {
            first.push(acov(k)?);
        }
        let mut row: Vec<Complex64> = (0..size)
            .map(|k| Complex64::new(first[k.min(size - k)], 0.0))
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(size);
        fft.process(&mut row);
        let max = row.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let min = row.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if !(max > 0.0) {
            return Err(Error::Embedding { min_eigenvalue: min, max_eigenvalue: max });
        }
        if min < -CLIP_TOLERANCE * max {
            return Err(Error::Embedding { min_eigenvalue: min, max_eigenvalue: max });
        }
        let clipped = min < 0.0;
        let m = size as f64;
        let scale = row.iter().map(|z| (z.re.max(0.0) / m).sqrt()).collect();
        Ok(Self {
            len,
            scale,
            fft,
            clipped,
            min_ratio: min / max,
        })
    }

    /// Embeds into the smallest power of two `≥ 2(len − 1)`.
    pub fn power_of_two(len: usize, acov: impl Fn(usize) -> Result<f64>) -> Result<Self> {
        let size = (2 * len.saturating_sub(1)).max(2).next_power_of_two();
        Self::with_size(len, size, acov)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn size(&self) -> usize {
        self.scale.len()
    }

    /// True when small negative eigenvalues were set to zero.
    pub fn clipped(&self) -> bool {
        self.clipped
    }

    /// Smallest eigenvalue relative to the largest.
    pub fn min_eigenvalue_ratio(&self) -> f64 {
        self.min_ratio
    }

    /// Draws one complex vector whose real and imaginary parts over the first
    /// `len` entries are two independent exact samples. Read them with
    /// [`CirculantWork::re`] and [`CirculantWork::im`].
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, work: &mut CirculantWork) {
        let size = self.size();
        work.buf.clear();
        work.buf.extend(self.scale.iter().map(|&s| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            Complex64::new(s * a, s * b)
        }));
        let need = self.fft.get_inplace_scratch_len();
        if work.scratch.len() < need {
            work.scratch.resize(need, Complex64::default());
        }
        debug_assert_eq!(work.buf.len(), size);
        self.fft.process_with_scratch(&mut work.buf, &mut work.scratch[..need]);
    }

    /// Convenience wrapper returning both samples.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut work = CirculantWork::default();
        self.fill(rng, &mut work);
        (work.re(self.len).collect(), work.im(self.len).collect())
    }
}

impl CirculantWork {
    pub fn re(&self, len: usize) -> impl Iterator<Item = f64> + '_ {
        self.buf[..len].iter().map(|z| z.re)
    }

    pub fn im(&self, len: usize) -> impl Iterator<Item = f64> + '_ {
        self.buf[..len].iter().map(|z| z.im)
    }
}

/// Autocovariance of unit-step fractional Gaussian noise with `H = α/2`,
/// `½(|k+1|^α − 2|k|^α + |k−1|^α)`.
pub fn fgn_autocov(alpha: f64, k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 0.5 * (2f64.powf(alpha) - 2.0),
        _ => {
            let kf = k as f64;
            let x = 1.0 / kf;
            let d = (alpha * x.ln_1p()).exp_m1() + (alpha * (-x).ln_1p()).exp_m1();
            0.5 * kf.powf(alpha) * d
        }
    }
}
