//! Sojourn (occupation) times above a level on grid paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss_sim::GridPath;
use crate::scaling::LevelScaling;

const GRID_SNAP: f64 = 1e-9;

/// Raw and scaled sojourn over one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SojournResult {
    pub raw: f64,
    pub scaled: f64,
    pub level: f64,
    pub window: (f64, f64),
}

/// Number of values strictly above `level`.
pub fn count_above(values: &[f64], level: f64) -> usize {
    values.iter().filter(|&&x| x > level).count()
}

/// First grid index with `t_i ≥ t`, treating times within `1e-9` cells of a
/// grid point as on it.
fn index_at(t: f64, step: f64) -> usize {
    let x = t / step;
    let r = x.round();
    if (x - r).abs() < GRID_SNAP {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Left-endpoint sojourn `δ · #{t_i ∈ [a, b) : X(t_i) > level}`.
///
/// The path covers `[0, nδ]`: point `i` stands for the cell `[iδ, (i+1)δ)`.
pub fn sojourn_time(path: &GridPath, level: f64, a: f64, b: f64) -> Result<f64> {
    let end = path.duration();
    if !(a >= 0.0 && a < end) {
        return Err(Error::range("window start", a, 0.0, end));
    }
    if !(b > a && b <= end * (1.0 + GRID_SNAP)) {
        return Err(Error::range("window end", b, a, end));
    }
    let i0 = index_at(a, path.step);
    let i1 = index_at(b, path.step).min(path.len());
    if i1 <= i0 {
        return Ok(0.0);
    }
    Ok(path.step * count_above(&path.values[i0..i1], level) as f64)
}

/// `v(u)` times the sojourn above `u` over `[0, T]`.
pub fn scaled_sojourn(path: &GridPath, u: f64, t_value: f64, scaling: &LevelScaling) -> Result<SojournResult> {
    if !(t_value >= 0.0) {
        return Err(Error::range("horizon", t_value, 0.0, f64::INFINITY));
    }
    let raw = if t_value == 0.0 {
        0.0
    } else {
        sojourn_time(path, u, 0.0, t_value)?
    };
    Ok(SojournResult {
        raw,
        scaled: raw * scaling.v,
        level: u,
        window: (0.0, t_value),
    })
}
