//! Iterated convolution powers of a discretised jump law.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::berman::BermanTable;
use crate::error::{Error, Result};

/// Largest admissible deviation of total mass from one.
pub const LEAKAGE_TOL: f64 = 1e-6;
const DIRECT_MAX: usize = 256;

/// A probability law on `[0, ∞)` discretised to cells of width `h`; the
/// mass of cell `i` sits at its midpoint `(i + ½)h`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLaw {
    h: f64,
    mass: Vec<f64>,
    /// Mass beyond the last cell that was moved into it.
    lumped: f64,
}

impl JumpLaw {
    /// From cell masses. Total mass must be one within [`LEAKAGE_TOL`].
    pub fn from_masses(h: f64, mass: Vec<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("cell width must be positive, got {h}")));
        }
        if mass.is_empty() || mass.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::invalid("cell masses must be finite and non-negative"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > LEAKAGE_TOL {
            return Err(Error::GridResolution(format!("jump law has total mass {total}")));
        }
        Ok(Self { h, mass, lumped: 0.0 })
    }

    /// Differences a CDF on `cells` uniform cells over `[0, top]`; mass
    /// beyond `top` is moved into the last cell.
    pub fn from_cdf(cdf: impl Fn(f64) -> f64, top: f64, cells: usize) -> Result<Self> {
        if cells == 0 || !(top > 0.0) {
            return Err(Error::invalid("need a positive range and at least one cell"));
        }
        let h = top / cells as f64;
        let edges: Vec<f64> = (0..=cells).map(|i| cdf(i as f64 * h)).collect();
        Self::from_edges(h, &edges)
    }

    fn from_edges(h: f64, edges: &[f64]) -> Result<Self> {
        if edges[0].abs() > LEAKAGE_TOL {
            return Err(Error::invalid(format!("CDF at 0 is {}, expected 0", edges[0])));
        }
        let mut mass: Vec<f64> = edges.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
        let last = *edges.last().expect("non-empty");
        let lumped = (1.0 - last).max(0.0);
        *mass.last_mut().expect("non-empty") += lumped;
        let mut law = Self::from_masses(h, mass)?;
        law.lumped = lumped;
        Ok(law)
    }

    /// Jump law `F̂_α` of a Berman table.
    pub fn from_berman(table: &BermanTable) -> Result<Self> {
        let top = *table.f_grid.last().expect("validated grid");
        let h = top / (table.f_grid.len() - 1) as f64;
        Self::from_edges(h, &table.f_cdf)
    }

    /// Unit mass at `c`, which must be a cell midpoint `(i + ½)h`.
    pub fn point_mass(c: f64, h: f64) -> Result<Self> {
        let i = c / h - 0.5;
        if (i - i.round()).abs() > 1e-9 || i < -1e-9 {
            return Err(Error::invalid(format!("{c} is not a cell midpoint for width {h}")));
        }
        let i = i.round() as usize;
        let mut mass = vec![0.0; i + 1];
        mass[i] = 1.0;
        Self::from_masses(h, mass)
    }

    pub fn cell_width(&self) -> f64 {
        self.h
    }

    pub fn cells(&self) -> usize {
        self.mass.len()
    }

    pub fn top(&self) -> f64 {
        self.h * self.mass.len() as f64
    }

    pub fn lumped_mass(&self) -> f64 {
        self.lumped
    }
}

/// Tails `F̄^{*k}` for `k = 1..K` on the grid `x_i = i·h`, `0 ≤ x_i ≤ x_max`.
///
/// Powers are formed on the truncated grid; mass pushed beyond it is tracked
/// exactly as overflow, so tails read on the grid are those of the full
/// convolution. Between grid points tails are linear, which corresponds to
/// spreading each atom uniformly over one cell.
#[derive(Debug, Clone)]
pub struct FAlphaConvolution {
    h: f64,
    len: usize,
    base: Vec<f64>,
    /// `base_suffix[j] = Σ_{b ≥ j} base[b]` including mass beyond the grid.
    base_suffix: Vec<f64>,
    current: Vec<f64>,
    overflow: f64,
    tails: Vec<Vec<f64>>,
}

impl FAlphaConvolution {
    /// Reads tails up to `x_max` (default: the law's own range).
    pub fn new(law: &JumpLaw, x_max: Option<f64>) -> Result<Self> {
        let reach = x_max.unwrap_or(law.top()).max(law.h);
        if !reach.is_finite() {
            return Err(Error::invalid("read range must be finite"));
        }
        let len = (reach / law.h).ceil() as usize;
        let mut base = vec![0.0; len];
        let n = law.mass.len().min(len);
        base[..n].copy_from_slice(&law.mass[..n]);
        let beyond: f64 = law.mass[n..].iter().sum();
        let mut base_suffix = vec![0.0; len + 1];
        base_suffix[len] = beyond;
        for j in (0..len).rev() {
            base_suffix[j] = base_suffix[j + 1] + base[j];
        }
        let mut conv = Self {
            h: law.h,
            len,
            current: base.clone(),
            base,
            base_suffix,
            overflow: beyond,
            tails: Vec::new(),
        };
        conv.push_tails();
        Ok(conv)
    }

    pub fn cell_width(&self) -> f64 {
        self.h
    }

    /// Largest `x` at which tails can be read.
    pub fn x_max(&self) -> f64 {
        self.len as f64 * self.h
    }

    /// Number of powers computed so far.
    pub fn k_max(&self) -> usize {
        self.tails.len()
    }

    fn push_tails(&mut self) {
        let k = self.tails.len() + 1;
        let n = self.len;
        let mut suffix = vec![0.0; n + 1];
        suffix[n] = self.overflow;
        for j in (0..n).rev() {
            suffix[j] = suffix[j + 1] + self.current[j];
        }
        // atom j of the k-fold sits at (j + k/2)h, spread over one cell
        let tails = (0..=n)
            .map(|i| {
                if k % 2 == 1 {
                    let lo = (i + 1).saturating_sub(k.div_ceil(2)).min(n);
                    suffix[lo]
                } else {
                    let shift = k / 2;
                    let lo = (i + 1).saturating_sub(shift).min(n);
                    let half = if i >= shift && i - shift < n { 0.5 * self.current[i - shift] } else { 0.0 };
                    suffix[lo] + half
                }
            })
            .collect();
        self.tails.push(tails);
    }

    fn step(&mut self) -> Result<()> {
        let n = self.len;
        let conv = linear_convolution(&self.current, &self.base, n);
        let pushed: f64 = self
            .current
            .iter()
            .enumerate()
            .map(|(a, p)| p * self.base_suffix[n - a])
            .sum();
        let in_grid: f64 = conv.iter().sum();
        let overflow = self.overflow + pushed;
        let leakage = (in_grid + overflow - 1.0).abs();
        if leakage > LEAKAGE_TOL {
            return Err(Error::GridResolution(format!(
                "convolution power {} leaks mass {leakage:e}",
                self.tails.len() + 1
            )));
        }
        self.current = conv;
        self.overflow = overflow;
        self.push_tails();
        Ok(())
    }

    /// Computes powers up to `k`.
    pub fn ensure(&mut self, k: usize) -> Result<()> {
        while self.tails.len() < k {
            self.step()?;
        }
        Ok(())
    }

    /// `F̄^{*k}(x)`; `k ≤ k_max()`, `0 ≤ x ≤ x_max()`.
    pub fn tail(&self, k: usize, x: f64) -> Result<f64> {
        if k == 0 || k > self.tails.len() {
            return Err(Error::range("convolution power", k as f64, 1.0, self.tails.len() as f64));
        }
        if !(x >= 0.0 && x <= self.x_max() * (1.0 + 1e-12)) {
            return Err(Error::range("tail argument", x, 0.0, self.x_max()));
        }
        let t = &self.tails[k - 1];
        let pos = (x / self.h).min(self.len as f64);
        let i = (pos.floor() as usize).min(self.len - 1);
        let w = pos - i as f64;
        Ok(((1.0 - w) * t[i] + w * t[i + 1]).clamp(0.0, 1.0))
    }

    /// Tail values of power `k` on the grid `x_i = i·h`.
    pub fn tail_grid(&self, k: usize) -> Option<&[f64]> {
        self.tails.get(k.wrapping_sub(1)).map(Vec::as_slice)
    }
}

/// `F̄^{*k}` for `k = 1..K` on the law's own range.
pub fn convolve_tails(law: &JumpLaw, k: usize) -> Result<FAlphaConvolution> {
    if k == 0 {
        return Err(Error::invalid("need at least one convolution power"));
    }
    let mut c = FAlphaConvolution::new(law, None)?;
    c.ensure(k)?;
    Ok(c)
}

/// First `n` terms of the linear convolution of two length-`n` vectors.
fn linear_convolution(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    if n <= DIRECT_MAX {
        let mut out = vec![0.0; n];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &y) in out[i..].iter_mut().zip(b) {
                *o += x * y;
            }
        }
        return out;
    }
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut fa: Vec<Complex64> = (0..size)
        .map(|i| Complex64::new(a.get(i).copied().unwrap_or(0.0), b.get(i).copied().unwrap_or(0.0)))
        .collect();
    fwd.process(&mut fa);
    // unpack the two real transforms from one complex transform
    let mut prod = vec![Complex64::default(); size];
    for k in 0..size {
        let z = fa[k];
        let zc = fa[(size - k) % size].conj();
        let xa = (z + zc) * 0.5;
        let xb = (z - zc) * Complex64::new(0.0, -0.5);
        prod[k] = xa * xb;
    }
    inv.process(&mut prod);
    let scale = 1.0 / size as f64;
    prod[..n].iter().map(|z| (z.re * scale).max(0.0)).collect()
}
