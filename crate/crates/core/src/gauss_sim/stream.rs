//! Long stationary paths delivered chunk by chunk.

use std::collections::HashMap;
use std::ops::ControlFlow;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};

use super::circulant::{CirculantPlan, CirculantWork};
use super::dense::{DenseFactor, DENSE_MAX_LEN};

/// Longest path simulated in one embedding; longer paths are glued.
pub const ONE_SHOT_MAX: usize = 1 << 22;
/// Number of trailing points conditioned on when gluing chunks.
pub const GLUE_OVERLAP: usize = 64;
const GLUE_BLOCK: usize = 1 << 21;
const KRIGING_MAX_ROWS: usize = 1 << 16;
const MARKOV_CHUNK: usize = 1 << 13;
const VISIT_CHUNK: usize = 1 << 16;

/// Properties of one streamed path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamInfo {
    /// Chunks were glued by conditioning on a finite overlap.
    pub approximate: bool,
    /// Small negative eigenvalues were clipped in the embedding.
    pub clipped: bool,
}

/// Exact-in-law factorisation of a Toeplitz covariance of a given length.
#[derive(Debug, Clone)]
pub(crate) enum Factor {
    Circulant(Arc<CirculantPlan>),
    Dense(Arc<DenseFactor>),
}

impl Factor {
    /// Circulant embedding padded to a power of two, then the minimal
    /// embedding, then the dense fallback for short paths.
    pub(crate) fn build(len: usize, acov: &dyn Fn(usize) -> Result<f64>) -> Result<Self> {
        let first = match CirculantPlan::power_of_two(len, acov) {
            Ok(p) => return Ok(Self::Circulant(Arc::new(p))),
            Err(e) => e,
        };
        let minimal = 2 * (len - 1);
        if minimal != minimal.next_power_of_two() {
            if let Ok(p) = CirculantPlan::with_size(len, minimal, acov) {
                return Ok(Self::Circulant(Arc::new(p)));
            }
        }
        if len <= DENSE_MAX_LEN {
            return Ok(Self::Dense(Arc::new(DenseFactor::new(len, acov)?)));
        }
        Err(first)
    }

    pub(crate) fn clipped(&self) -> bool {
        match self {
            Self::Circulant(p) => p.clipped(),
            Self::Dense(d) => d.clipped(),
        }
    }

    /// Writes the first `len` points of one sample into `out`.
    pub(crate) fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, work: &mut CirculantWork, len: usize, out: &mut Vec<f64>) {
        out.clear();
        match self {
            Self::Circulant(p) => {
                p.fill(rng, work);
                out.extend(work.re(len));
            }
            Self::Dense(d) => out.extend(d.sample(rng).into_iter().take(len)),
        }
    }
}

/// Kriging weights predicting the next block from the last overlap.
#[derive(Debug)]
struct Kriging {
    /// Row `i` holds the weights for block point `i`; rows beyond are zero.
    weights: Vec<[f64; GLUE_OVERLAP]>,
}

impl Kriging {
    fn new(acov: &dyn Fn(usize) -> Result<f64>) -> Result<Self> {
        let p = GLUE_OVERLAP;
        let kxx = DMatrix::from_fn(p, p, |i, j| acov(i.abs_diff(j)).unwrap_or(f64::NAN));
        if kxx.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("covariance undefined inside the glue overlap".into()));
        }
        let eig = kxx.symmetric_eigen();
        let cutoff = 1e-12 * eig.eigenvalues.max();
        let inv_diag = eig.eigenvalues.map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
        let kinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_diag) * eig.eigenvectors.transpose();
        let mut weights = Vec::new();
        let mut small_run = 0;
        for i in 0..KRIGING_MAX_ROWS.min(GLUE_BLOCK - p) {
            let mut k = [0.0; GLUE_OVERLAP];
            for (j, kj) in k.iter_mut().enumerate() {
                *kj = acov(p + i - j)?;
            }
            let mut row = [0.0; GLUE_OVERLAP];
            for (a, r) in row.iter_mut().enumerate() {
                *r = (0..p).map(|b| kinv[(a, b)] * k[b]).sum();
            }
            let size = row.iter().chain(&k).fold(0.0f64, |m, v| m.max(v.abs()));
            weights.push(row);
            small_run = if size < 1e-13 { small_run + 1 } else { 0 };
            if small_run >= 32 {
                break;
            }
        }
        Ok(Self { weights })
    }
}

/// Buffers reused across streamed paths.
#[derive(Debug, Default)]
pub struct StreamWork {
    circ: CirculantWork,
    chunk: Vec<f64>,
    tail: Vec<f64>,
}

enum Backend {
    Markov { rho: f64, innovation: f64 },
    Gaussian {
        acov: Box<dyn Fn(usize) -> Result<f64> + Send + Sync>,
        factors: Mutex<HashMap<usize, Factor>>,
        kriging: Mutex<Option<Arc<Kriging>>>,
    },
}

/// Generates stationary paths of arbitrary length on a fixed grid.
///
/// The classical OU process is generated exactly by its AR(1) recursion.
/// Other models use one circulant embedding up to [`ONE_SHOT_MAX`] points
/// (padded to a power of two and cached per size) and overlap-conditioned
/// gluing beyond, which is flagged as approximate.
pub struct PathStreamer {
    step: f64,
    model_id: String,
    backend: Backend,
}

impl std::fmt::Debug for PathStreamer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PathStreamer")
            .field("step", &self.step)
            .field("model", &self.model_id)
            .finish()
    }
}

impl PathStreamer {
    pub fn new(model: &CovarianceModel, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {step}")));
        }
        let backend = if model.is_markov() {
            let rho = (-step).exp();
            Backend::Markov {
                rho,
                innovation: (-(-2.0 * step).exp_m1()).sqrt(),
            }
        } else {
            let m = model.clone();
            Backend::Gaussian {
                acov: Box::new(move |k| m.eval(k as f64 * step)),
                factors: Mutex::new(HashMap::new()),
                kriging: Mutex::new(None),
            }
        };
        Ok(Self {
            step,
            model_id: model.id(),
            backend,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    fn factor(&self, cap: usize) -> Result<Factor> {
        let Backend::Gaussian { acov, factors, .. } = &self.backend else {
            unreachable!("factor requested for Markov backend")
        };
        if let Some(f) = factors.lock().expect("factor cache poisoned").get(&cap) {
            return Ok(f.clone());
        }
        let f = Factor::build(cap, acov.as_ref())?;
        factors
            .lock()
            .expect("factor cache poisoned")
            .entry(cap)
            .or_insert(f.clone());
        Ok(f)
    }

    fn kriging(&self) -> Result<Arc<Kriging>> {
        let Backend::Gaussian { acov, kriging, .. } = &self.backend else {
            unreachable!("kriging requested for Markov backend")
        };
        let mut slot = kriging.lock().expect("kriging cache poisoned");
        if let Some(k) = slot.as_ref() {
            return Ok(k.clone());
        }
        let k = Arc::new(Kriging::new(acov.as_ref())?);
        *slot = Some(k.clone());
        Ok(k)
    }

    /// Streams a path of `n` points, calling `visit(offset, chunk)` on
    /// consecutive chunks until it breaks or the path ends.
    pub fn run<R, F>(&self, n: usize, rng: &mut R, work: &mut StreamWork, mut visit: F) -> Result<StreamInfo>
    where
        R: Rng + ?Sized,
        F: FnMut(usize, &[f64]) -> ControlFlow<()>,
    {
        let mut info = StreamInfo::default();
        if n == 0 {
            return Ok(info);
        }
        match &self.backend {
            Backend::Markov { rho, innovation } => {
                let mut x: f64 = rng.sample(StandardNormal);
                let mut offset = 0;
                while offset < n {
                    let len = MARKOV_CHUNK.min(n - offset);
                    work.chunk.clear();
                    for _ in 0..len {
                        work.chunk.push(x);
                        let z: f64 = rng.sample(StandardNormal);
                        x = rho * x + innovation * z;
                    }
                    if visit(offset, &work.chunk).is_break() {
                        break;
                    }
                    offset += len;
                }
            }
            Backend::Gaussian { .. } if n <= ONE_SHOT_MAX => {
                let factor = self.factor(n.max(2).next_power_of_two())?;
                info.clipped = factor.clipped();
                factor.sample_into(rng, &mut work.circ, n, &mut work.chunk);
                for (c, chunk) in work.chunk.chunks(VISIT_CHUNK).enumerate() {
                    if visit(c * VISIT_CHUNK, chunk).is_break() {
                        break;
                    }
                }
            }
            Backend::Gaussian { .. } => {
                info.approximate = true;
                let factor = self.factor(GLUE_BLOCK)?;
                info.clipped = factor.clipped();
                let kriging = self.kriging()?;
                let p = GLUE_OVERLAP;
                let fresh = GLUE_BLOCK - p;
                let mut offset = 0;
                // The first block is unconditional and keeps all points.
                factor.sample_into(rng, &mut work.circ, GLUE_BLOCK, &mut work.chunk);
                let mut take = GLUE_BLOCK.min(n);
                loop {
                    let mut stop = false;
                    for (c, chunk) in work.chunk[..take].chunks(VISIT_CHUNK).enumerate() {
                        if visit(offset + c * VISIT_CHUNK, chunk).is_break() {
                            stop = true;
                            break;
                        }
                    }
                    offset += take;
                    if stop || offset >= n {
                        break;
                    }
                    work.tail.clear();
                    work.tail.extend_from_slice(&work.chunk[take - p..take]);
                    factor.sample_into(rng, &mut work.circ, GLUE_BLOCK, &mut work.chunk);
                    let mut diff = [0.0; GLUE_OVERLAP];
                    for (d, (a, b)) in diff.iter_mut().zip(work.tail.iter().zip(&work.chunk[..p])) {
                        *d = a - b;
                    }
                    for (row, y) in kriging.weights.iter().zip(&mut work.chunk[p..]) {
                        *y += row.iter().zip(&diff).map(|(w, d)| w * d).sum::<f64>();
                    }
                    work.chunk.drain(..p);
                    take = fresh.min(n - offset);
                }
            }
        }
        Ok(info)
    }

    /// Collects a whole path of `n` points.
    pub fn collect<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Vec<f64>, StreamInfo)> {
        let mut out = Vec::with_capacity(n);
        let info = self.run(n, rng, &mut StreamWork::default(), |_, c| {
            out.extend_from_slice(c);
            ControlFlow::Continue(())
        })?;
        Ok((out, info))
    }
}
