//! Differential-privacy and communication-efficiency primitives for model
//! updates: L2 clipping, Gaussian noise, top-k sparsification, DP-FedAvg
//! aggregation and byte accounting.
//!
//! Noise is calibrated with the classic Gaussian mechanism,
//! `sigma = C * sqrt(2 ln(1.25 / delta)) / epsilon`, which is only a valid
//! (epsilon, delta) guarantee for `epsilon <= 1`. Larger budgets are
//! accepted with a warning.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Flat, finite, non-empty vector of model parameters or an update.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("weight vector is empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "weight {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len.max(1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.0)
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn l2_norm(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Top-k update: kept positions (strictly increasing) and their values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseUpdate {
    indices: Vec<usize>,
    values: Vec<f64>,
    original_len: usize,
}

impl SparseUpdate {
    pub fn new(indices: Vec<usize>, values: Vec<f64>, original_len: usize) -> Result<Self> {
        let s = Self {
            indices,
            values,
            original_len,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.indices.is_empty() {
            return Err(Error::CorruptUpdate("no entries".into()));
        }
        if self.indices.len() != self.values.len() {
            return Err(Error::CorruptUpdate(format!(
                "{} indices but {} values",
                self.indices.len(),
                self.values.len()
            )));
        }
        if let Some(w) = self.indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::CorruptUpdate(format!(
                "indices not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        let last = *self.indices.last().unwrap();
        if last >= self.original_len {
            return Err(Error::CorruptUpdate(format!(
                "index {last} out of range for length {}",
                self.original_len
            )));
        }
        Ok(())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn original_len(&self) -> usize {
        self.original_len
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Privacy loss parameter; `Infinite` disables noise entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Finite(f64),
    Infinite,
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Epsilon::Finite(e) => write!(f, "{e}"),
            Epsilon::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "infinity" => Ok(Epsilon::Infinite),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::config(format!("epsilon {s:?} is not a number or \"inf\"")))
                .map(|e| {
                    if e.is_infinite() && e > 0.0 {
                        Epsilon::Infinite
                    } else {
                        Epsilon::Finite(e)
                    }
                }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: Epsilon,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: Epsilon, delta: f64) -> Result<Self> {
        if let Epsilon::Finite(e) = epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::config(format!("epsilon must be > 0, got {e}")));
            }
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    /// Noise-free budget for tests and baselines.
    pub fn disabled() -> Self {
        Self {
            epsilon: Epsilon::Infinite,
            delta: 1e-5,
        }
    }

    pub fn epsilon(&self) -> Epsilon {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipConfig {
    clip_norm: f64,
}

impl ClipConfig {
    pub fn new(clip_norm: f64) -> Result<Self> {
        if clip_norm.is_nan() || clip_norm <= 0.0 {
            return Err(Error::config(format!("clip norm must be > 0, got {clip_norm}")));
        }
        Ok(Self { clip_norm })
    }

    pub fn clip_norm(&self) -> f64 {
        self.clip_norm
    }
}

/// Scales `w` onto the L2 ball of radius `C` when it lies outside.
///
/// The result's computed norm never exceeds `C`, which makes the operation
/// exactly idempotent.
pub fn clip_weights(w: &WeightVector, cfg: &ClipConfig) -> WeightVector {
    WeightVector(clip_slice(&w.0, cfg.clip_norm))
}

fn clip_slice(w: &[f64], c: f64) -> Vec<f64> {
    let norm = l2_norm(w);
    if norm <= c {
        return w.to_vec();
    }
    let mut scale = c / norm;
    loop {
        let out: Vec<f64> = w.iter().map(|x| x * scale).collect();
        if l2_norm(&out) <= c {
            return out;
        }
        // rounding left the norm a few ulps above c
        scale *= 1.0 - f64::EPSILON;
    }
}

/// Per-coordinate noise scale for L2 sensitivity `sensitivity`.
pub fn gaussian_sigma(sensitivity: f64, budget: &PrivacyBudget) -> f64 {
    match budget.epsilon {
        Epsilon::Infinite => 0.0,
        Epsilon::Finite(eps) => {
            if eps > 1.0 {
                log::warn!(
                    "epsilon={eps} > 1: the classic Gaussian-mechanism bound does not hold"
                );
            }
            sensitivity * (2.0 * (1.25 / budget.delta).ln()).sqrt() / eps
        }
    }
}

fn perturb(values: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return values.to_vec();
    }
    let mut rng = SeededRng::new(seed);
    values.iter().map(|v| v + sigma * rng.standard_normal()).collect()
}

/// Adds i.i.d. `N(0, sigma^2)` noise with `sigma = gaussian_sigma(C, budget)`.
///
/// `w` is assumed to be clipped to `C` already; this is not checked.
pub fn add_gaussian_noise(
    w: &WeightVector,
    budget: &PrivacyBudget,
    cfg: &ClipConfig,
    seed: u64,
) -> WeightVector {
    let sigma = gaussian_sigma(cfg.clip_norm, budget);
    WeightVector(perturb(&w.0, sigma, seed))
}

fn check_sparsity(sparsity: f64) -> Result<()> {
    if (0.0..1.0).contains(&sparsity) {
        Ok(())
    } else {
        Err(Error::config(format!("sparsity must lie in [0, 1), got {sparsity}")))
    }
}

/// Number of entries kept at the given sparsity: `max(1, ceil((1 - s) n))`.
///
/// A product within 1e-9 relative of an integer snaps to that integer, so
/// that e.g. `s = 0.975, n = 1000` keeps 25 rather than 26.
pub fn keep_count(n: usize, sparsity: f64) -> Result<usize> {
    check_sparsity(sparsity)?;
    if n == 0 {
        return Err(Error::invalid("length must be >= 1"));
    }
    let exact = (1.0 - sparsity) * n as f64;
    let nearest = exact.round();
    let k = if (exact - nearest).abs() <= 1e-9 * n as f64 {
        nearest
    } else {
        exact.ceil()
    };
    Ok((k as usize).clamp(1, n))
}

/// Keeps the `k` largest-magnitude entries (ties go to the lower index).
/// Returns the sparse update and the achieved sparsity `(n - k) / n`.
pub fn sparsify(w: &WeightVector, sparsity: f64) -> Result<(SparseUpdate, f64)> {
    let n = w.len();
    let k = keep_count(n, sparsity)?;
    let mut order: Vec<usize> = (0..n).collect();
    let by_magnitude = |a: &usize, b: &usize| {
        w.0[*b]
            .abs()
            .total_cmp(&w.0[*a].abs())
            .then_with(|| a.cmp(b))
    };
    if k < n {
        order.select_nth_unstable_by(k - 1, by_magnitude);
        order.truncate(k);
    }
    order.sort_unstable();
    let values = order.iter().map(|&i| w.0[i]).collect();
    let update = SparseUpdate {
        indices: order,
        values,
        original_len: n,
    };
    Ok((update, (n - k) as f64 / n as f64))
}

/// Expands a sparse update back to a dense vector with zeros elsewhere.
pub fn densify(s: &SparseUpdate) -> Result<WeightVector> {
    s.validate()?;
    let mut out = vec![0.0; s.original_len];
    for (&i, &v) in s.indices.iter().zip(&s.values) {
        out[i] = v;
    }
    Ok(WeightVector(out))
}

fn check_same_len(updates: &[WeightVector]) -> Result<usize> {
    let first = updates
        .first()
        .ok_or_else(|| Error::invalid("no client updates"))?;
    let n = first.len();
    if let Some((i, u)) = updates.iter().enumerate().find(|(_, u)| u.len() != n) {
        return Err(Error::invalid(format!(
            "client {i} update has length {}, expected {n}",
            u.len()
        )));
    }
    Ok(n)
}

/// Mean of the clipped updates, summed in input order.
pub fn clipped_mean(updates: &[WeightVector], cfg: &ClipConfig) -> Result<WeightVector> {
    check_same_len(updates)?;
    let mut acc = clip_slice(&updates[0].0, cfg.clip_norm);
    for u in &updates[1..] {
        for (a, v) in acc.iter_mut().zip(clip_slice(&u.0, cfg.clip_norm)) {
            *a += v;
        }
    }
    let m = updates.len() as f64;
    acc.iter_mut().for_each(|a| *a /= m);
    Ok(WeightVector(acc))
}

/// DP-FedAvg: clip each update to `C`, average, then add Gaussian noise
/// calibrated to the mean's sensitivity `C / m`.
pub fn dp_fedavg_aggregate(
    client_updates: &[WeightVector],
    cfg: &ClipConfig,
    budget: &PrivacyBudget,
    seed: u64,
) -> Result<WeightVector> {
    let mean = clipped_mean(client_updates, cfg)?;
    let sigma = gaussian_sigma(cfg.clip_norm / client_updates.len() as f64, budget);
    Ok(WeightVector(perturb(&mean.0, sigma, seed)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// Counts only transmitted values.
    ValueOnly,
    /// Counts values plus their position indices.
    ValuePlusIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommCost {
    pub dense_bytes: u64,
    pub sparse_bytes: u64,
    pub reduction: f64,
}

/// Bytes for a dense vs. top-k transmission of an `n`-vector.
pub fn comm_cost(
    n: usize,
    sparsity: f64,
    value_bytes: u64,
    index_bytes: u64,
    mode: CostMode,
) -> Result<CommCost> {
    let k = keep_count(n, sparsity)? as u64;
    let dense = n as u64 * value_bytes;
    let sparse = match mode {
        CostMode::ValueOnly => k * value_bytes,
        CostMode::ValuePlusIndex => k * (value_bytes + index_bytes),
    };
    let reduction = if dense == 0 {
        0.0
    } else {
        (dense as f64 - sparse as f64) / dense as f64
    };
    Ok(CommCost {
        dense_bytes: dense,
        sparse_bytes: sparse,
        reduction,
    })
}
