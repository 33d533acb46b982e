//! Exact simulation of stationary Gaussian paths on a uniform grid and of
//! the drifted fBm field `W_α`.

mod circulant;
mod dense;
pub mod rng;
mod scan;
mod stream;
mod w_alpha;

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use circulant::{fgn_autocov, CirculantPlan, CirculantWork, CLIP_TOLERANCE};
pub use dense::{DenseFactor, DENSE_MAX_LEN};
pub use rng::{keyed_rng, stream_key, SimRng};
pub use scan::{ExceedanceScanner, ScanInfo, SKIP_PROBABILITY};
pub use stream::{PathStreamer, StreamInfo, StreamWork, GLUE_OVERLAP, ONE_SHOT_MAX};
pub use w_alpha::{simulate_w_alpha, WAlphaPath, WAlphaSampler, WAlphaWork, MAX_POINTS};

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use stream::Factor;

/// One sampled trajectory `X(0), X(δ), …, X((n−1)δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub step: f64,
    pub values: Vec<f64>,
    pub seed: u64,
    pub model_id: String,
    /// Set when small negative embedding eigenvalues were clipped.
    #[serde(default)]
    pub clipped_eigenvalues: bool,
}

impl GridPath {
    pub fn new(step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {step}")));
        }
        if values.len() < 2 {
            return Err(Error::invalid("a grid path needs at least two points"));
        }
        Ok(Self {
            step,
            values,
            seed: 0,
            model_id: String::from("explicit"),
            clipped_eigenvalues: false,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time span `n·δ` covered by the left-endpoint cells.
    pub fn duration(&self) -> f64 {
        self.values.len() as f64 * self.step
    }

    /// Debug dump as CSV rows `index,t,value`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "index,t,value")?;
        for (i, x) in self.values.iter().enumerate() {
            writeln!(w, "{i},{},{x}", i as f64 * self.step)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fixed-length sampler for one model and grid.
#[derive(Debug, Clone)]
pub struct StationarySampler {
    len: usize,
    step: f64,
    model_id: String,
    factor: Factor,
}

impl StationarySampler {
    pub fn new(model: &CovarianceModel, n: usize, step: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("path length must be at least 2, got {n}")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {step}")));
        }
        let acov = |k: usize| model.eval(k as f64 * step);
        Ok(Self {
            len: n,
            step,
            model_id: model.id(),
            factor: Factor::build(n, &acov)?,
        })
    }

    pub fn clipped(&self) -> bool {
        self.factor.clipped()
    }

    /// Two independent paths (the dense fallback draws them separately).
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R, work: &mut CirculantWork) -> (Vec<f64>, Vec<f64>) {
        match &self.factor {
            Factor::Circulant(p) => {
                p.fill(rng, work);
                (work.re(self.len).collect(), work.im(self.len).collect())
            }
            Factor::Dense(d) => (d.sample(rng), d.sample(rng)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, work: &mut CirculantWork) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len);
        self.factor.sample_into(rng, work, self.len, &mut out);
        out
    }

    /// One path from stream `key` of `seed`.
    pub fn path(&self, seed: u64, key: u64) -> GridPath {
        let values = self.sample(&mut keyed_rng(seed, key), &mut CirculantWork::default());
        GridPath {
            step: self.step,
            values,
            seed,
            model_id: self.model_id.clone(),
            clipped_eigenvalues: self.clipped(),
        }
    }
}

/// Samples `n` grid points of a centred stationary unit-variance process.
pub fn simulate_stationary(model: &CovarianceModel, n: usize, step: f64, seed: u64) -> Result<GridPath> {
    Ok(StationarySampler::new(model, n, step)?.path(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::mean_se;
    use crate::covariance::TabulatedCovariance;

    #[test]
    fn same_seed_same_path() {
        let m = CovarianceModel::fbm_increment(0.7, 1.0).unwrap();
        let a = simulate_stationary(&m, 300, 0.1, 42).unwrap();
        let b = simulate_stationary(&m, 300, 0.1, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, simulate_stationary(&m, 300, 0.1, 43).unwrap().values);
        assert_eq!(a.model_id, "fbm_increment(alpha=0.7,a=1)");
    }

    #[test]
    fn two_point_correlation() {
        let step = 0.7;
        let m = CovarianceModel::frac_ou(1.0).unwrap();
        let sampler = StationarySampler::new(&m, 2, step).unwrap();
        let mut rng = keyed_rng(3, 0);
        let mut work = CirculantWork::default();
        let mut prods = Vec::new();
        for _ in 0..50_000 {
            let (a, b) = sampler.sample_pair(&mut rng, &mut work);
            prods.push(a[0] * a[1]);
            prods.push(b[0] * b[1]);
        }
        let est = mean_se(&prods);
        assert!((est.mean - (-step).exp()).abs() < 3.0 * est.se, "{est:?}");
    }

    #[test]
    fn smooth_model_has_unit_variance() {
        let m = CovarianceModel::frac_ou(2.0).unwrap();
        let sampler = StationarySampler::new(&m, 1024, 0.01).unwrap();
        let mut rng = keyed_rng(4, 0);
        let mut work = CirculantWork::default();
        let mut sq = Vec::new();
        for _ in 0..5_000 {
            let (a, b) = sampler.sample_pair(&mut rng, &mut work);
            sq.push(a[0] * a[0]);
            sq.push(b[0] * b[0]);
        }
        let var = sq.iter().sum::<f64>() / sq.len() as f64;
        assert!((0.97..=1.03).contains(&var), "{var}");
    }

    #[test]
    fn tabulated_model_beyond_table_falls_back() {
        // Table covers lags up to 2, the path needs lags up to 1.9 only.
        let t: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
        let r: Vec<f64> = t.iter().map(|x| (-x).exp()).collect();
        let m = CovarianceModel::Tabulated(TabulatedCovariance::new(t, r, 1.0).unwrap());
        let p = simulate_stationary(&m, 191, 0.01, 1).unwrap();
        assert_eq!(p.len(), 191);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let p = GridPath::new(0.5, vec![1.0, -2.0, 3.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("path.csv");
        p.write_csv(&file).unwrap();
        let text = std::fs::read_to_string(file).unwrap();
        assert_eq!(text, "index,t,value\n0,0,1\n1,0.5,-2\n2,1,3\n");
    }
}
