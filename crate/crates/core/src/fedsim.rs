//! Deterministic federated-learning simulation.
//!
//! A seeded two-class Gaussian-blob problem is split across clients, each
//! client runs full-batch logistic-regression gradient descent, and the
//! server aggregates the updates densely, top-k sparsified, or sparsified
//! with DP-FedAvg noise. Clients may train in parallel; updates are always
//! combined in client-index order so every run is bit-reproducible.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::privacy::{
    self, clipped_mean, comm_cost, densify, dp_fedavg_aggregate, sparsify, ClipConfig, CostMode,
    PrivacyBudget, WeightVector,
};
use crate::rng::SeededRng;

/// Bytes per transmitted value and per transmitted index.
pub const VALUE_BYTES: u64 = 4;
pub const INDEX_BYTES: u64 = 4;

const TRAIN_STREAM: u64 = 0;
const TEST_STREAM: u64 = 1;
const DIRECTION_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientDataset {
    pub client_id: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl ClientDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        if self.labels.is_empty() || self.features.len() != self.labels.len() {
            return Err(Error::invalid(format!(
                "client {}: {} feature rows for {} labels",
                self.client_id,
                self.features.len(),
                self.labels.len()
            )));
        }
        let d = self.num_features();
        if self.features.iter().any(|row| row.len() != d) {
            return Err(Error::invalid(format!(
                "client {}: ragged feature rows",
                self.client_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedConfig {
    pub num_clients: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub sparsity: f64,
    pub budget: PrivacyBudget,
    pub clip: ClipConfig,
    pub seed: u64,
    pub samples_per_client: usize,
    pub num_features: usize,
    /// Label skew: 0 gives an i.i.d. split, 1 gives single-class clients.
    pub heterogeneity: f64,
    /// Distance between the two class means.
    pub class_separation: f64,
    pub test_samples: usize,
}

impl Default for FederatedConfig {
    /// The reference configuration: 4 clients x 500 samples, d = 10, 30 rounds.
    fn default() -> Self {
        Self {
            num_clients: 4,
            rounds: 30,
            local_epochs: 5,
            learning_rate: 0.1,
            sparsity: 0.0,
            budget: PrivacyBudget::disabled(),
            clip: ClipConfig::new(1.0).expect("positive"),
            seed: 0,
            samples_per_client: 500,
            num_features: 10,
            heterogeneity: 0.0,
            class_separation: 3.0,
            test_samples: 1000,
        }
    }
}

impl FederatedConfig {
    /// Small clients trained for many local epochs in a high-dimensional,
    /// weakly separated problem, so the trained model memorises its data.
    pub fn overfitting_scenario(seed: u64) -> Self {
        Self {
            num_clients: 4,
            rounds: 10,
            local_epochs: 200,
            learning_rate: 0.5,
            samples_per_client: 20,
            num_features: 50,
            class_separation: 1.0,
            test_samples: 80,
            clip: ClipConfig::new(5.0).expect("positive"),
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_clients", self.num_clients),
            ("rounds", self.rounds),
            ("samples_per_client", self.samples_per_client),
            ("num_features", self.num_features),
            ("test_samples", self.test_samples),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.heterogeneity) {
            return Err(Error::config("heterogeneity must lie in [0, 1]"));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(Error::config("class_separation must be >= 0"));
        }
        privacy::keep_count(self.num_features + 1, self.sparsity)?;
        Ok(())
    }
}

fn class_direction(cfg: &FederatedConfig) -> Vec<f64> {
    let mut rng = SeededRng::with_stream(cfg.seed, DIRECTION_STREAM);
    let raw: Vec<f64> = (0..cfg.num_features).map(|_| rng.standard_normal()).collect();
    let norm = privacy::l2_norm(&raw).max(f64::MIN_POSITIVE);
    raw.into_iter().map(|x| x / norm).collect()
}

fn sample_row(rng: &mut SeededRng, direction: &[f64], half_sep: f64, label: u8) -> Vec<f64> {
    let sign = if label == 1 { 1.0 } else { -1.0 };
    direction
        .iter()
        .map(|u| sign * half_sep * u + rng.standard_normal())
        .collect()
}

/// Seeded client partition of the blob problem.
pub fn partition_synthetic(config: &FederatedConfig) -> Result<Vec<ClientDataset>> {
    config.validate()?;
    let direction = class_direction(config);
    let half_sep = config.class_separation / 2.0;
    let mut rng = SeededRng::with_stream(config.seed, TRAIN_STREAM);
    let n = config.samples_per_client;
    let clients = (0..config.num_clients)
        .map(|client_id| {
            // even clients lean to class 0, odd clients to class 1
            let lean = if client_id % 2 == 1 { 1.0 } else { -1.0 };
            let p_pos = 0.5 + 0.5 * config.heterogeneity * lean;
            let positives = (p_pos * n as f64).round() as usize;
            let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < positives)).collect();
            rng.shuffle(&mut labels);
            let features = labels
                .iter()
                .map(|&y| sample_row(&mut rng, &direction, half_sep, y))
                .collect();
            ClientDataset {
                client_id,
                features,
                labels,
            }
        })
        .collect();
    Ok(clients)
}

/// Balanced held-out set drawn from a stream disjoint from the clients'.
pub fn held_out_test_set(config: &FederatedConfig) -> Result<ClientDataset> {
    config.validate()?;
    let direction = class_direction(config);
    let mut rng = SeededRng::with_stream(config.seed, TEST_STREAM);
    let n = config.test_samples;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
    rng.shuffle(&mut labels);
    let features = labels
        .iter()
        .map(|&y| sample_row(&mut rng, &direction, config.class_separation / 2.0, y))
        .collect();
    Ok(ClientDataset {
        client_id: usize::MAX,
        features,
        labels,
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Linear score `w . x + b`; the bias is the last weight.
fn logit(weights: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    weights[..d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + weights[d]
}

fn check_dims(weights: &[f64], data: &ClientDataset) -> Result<()> {
    data.validate()?;
    if weights.len() != data.num_features() + 1 {
        return Err(Error::invalid(format!(
            "weights have length {}, expected {} (features + bias)",
            weights.len(),
            data.num_features() + 1
        )));
    }
    Ok(())
}

/// Cross-entropy of a single example.
pub fn sample_loss(weights: &[f64], x: &[f64], y: u8) -> f64 {
    let z = logit(weights, x);
    softplus(z) - f64::from(y) * z
}

/// Mean logistic loss over a dataset.
pub fn logistic_loss(weights: &[f64], data: &ClientDataset) -> Result<f64> {
    check_dims(weights, data)?;
    Ok(per_sample_losses(weights, data).iter().sum::<f64>() / data.len() as f64)
}

pub fn per_sample_losses(weights: &[f64], data: &ClientDataset) -> Vec<f64> {
    data.features
        .iter()
        .zip(&data.labels)
        .map(|(x, &y)| sample_loss(weights, x, y))
        .collect()
}

/// Gradient of the mean logistic loss.
pub fn logistic_gradient(weights: &[f64], data: &ClientDataset) -> Result<Vec<f64>> {
    check_dims(weights, data)?;
    Ok(gradient_unchecked(weights, data))
}

fn gradient_unchecked(weights: &[f64], data: &ClientDataset) -> Vec<f64> {
    let d = data.num_features();
    let mut grad = vec![0.0; d + 1];
    for (x, &y) in data.features.iter().zip(&data.labels) {
        let residual = sigmoid(logit(weights, x)) - f64::from(y);
        for (g, v) in grad[..d].iter_mut().zip(x) {
            *g += residual * v;
        }
        grad[d] += residual;
    }
    let n = data.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    grad
}

/// Full-batch gradient descent for `epochs` steps; returns the weight delta.
pub fn local_train(
    model_weights: &WeightVector,
    data: &ClientDataset,
    epochs: usize,
    learning_rate: f64,
) -> Result<WeightVector> {
    check_dims(model_weights, data)?;
    let mut w = model_weights.to_vec();
    for _ in 0..epochs {
        let grad = gradient_unchecked(&w, data);
        for (wi, g) in w.iter_mut().zip(grad) {
            *wi -= learning_rate * g;
        }
    }
    let delta = w.iter().zip(model_weights.iter()).map(|(a, b)| a - b).collect();
    WeightVector::new(delta)
}

pub fn predict(weights: &[f64], x: &[f64]) -> u8 {
    u8::from(logit(weights, x) > 0.0)
}

/// Unweighted mean of the per-class F1 over {0, 1}. A class absent from
/// both predictions and truths scores 1.
pub fn macro_f1(predictions: &[u8], truths: &[u8]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions"));
    }
    let f1 = |class: u8| {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&p, &t) in predictions.iter().zip(truths) {
            match (p == class, t == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        if tp + fp + fn_ == 0 {
            1.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        }
    };
    Ok((f1(0) + f1(1)) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    Dense,
    Sparse,
    SparseDp,
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "sparse" => Ok(Self::Sparse),
            "sparse_dp" => Ok(Self::SparseDp),
            other => Err(Error::config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub macro_f1: f64,
    /// Bytes uploaded by all clients this round.
    pub bytes_sent: u64,
    pub cumulative_bytes: u64,
    pub global_weights_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedRun {
    pub history: Vec<RoundMetrics>,
    pub final_weights: WeightVector,
}

/// Upload size for one client. Sparse modes send whichever encoding is
/// smaller, so a barely-sparse update never costs more than a dense one.
fn upload_bytes(n: usize, sparsity: f64, mode: AggregationMode) -> Result<u64> {
    let cost = comm_cost(n, sparsity, VALUE_BYTES, INDEX_BYTES, CostMode::ValuePlusIndex)?;
    Ok(match mode {
        AggregationMode::Dense => cost.dense_bytes,
        AggregationMode::Sparse | AggregationMode::SparseDp => {
            cost.sparse_bytes.min(cost.dense_bytes)
        }
    })
}

fn round_seed(seed: u64, round: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ (round as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn evaluate(weights: &[f64], data: &ClientDataset) -> Result<f64> {
    check_dims(weights, data)?;
    let preds: Vec<u8> = data.features.iter().map(|x| predict(weights, x)).collect();
    macro_f1(&preds, &data.labels)
}

/// Runs the simulation on the synthetic partition for `config`.
pub fn run_federated(config: &FederatedConfig, mode: AggregationMode) -> Result<FederatedRun> {
    let clients = partition_synthetic(config)?;
    let test = held_out_test_set(config)?;
    run_federated_on(config, mode, &clients, &test)
}

/// Runs the simulation on caller-supplied client data.
pub fn run_federated_on(
    config: &FederatedConfig,
    mode: AggregationMode,
    clients: &[ClientDataset],
    test: &ClientDataset,
) -> Result<FederatedRun> {
    config.validate()?;
    if clients.is_empty() {
        return Err(Error::invalid("no clients"));
    }
    let dim = clients[0].num_features() + 1;
    let mut global = WeightVector::zeros(dim);
    let per_client = upload_bytes(dim, config.sparsity, mode)?;
    let mut history = Vec::with_capacity(config.rounds);
    let mut cumulative = 0u64;
    for round in 0..config.rounds {
        let updates: Vec<WeightVector> = clients
            .par_iter()
            .map(|c| local_train(&global, c, config.local_epochs, config.learning_rate))
            .collect::<Result<_>>()?;
        let updates = match mode {
            AggregationMode::Dense => updates,
            AggregationMode::Sparse | AggregationMode::SparseDp => updates
                .iter()
                .map(|u| sparsify(u, config.sparsity).and_then(|(s, _)| densify(&s)))
                .collect::<Result<_>>()?,
        };
        let aggregate = match mode {
            AggregationMode::Dense | AggregationMode::Sparse => {
                clipped_mean(&updates, &config.clip)?
            }
            AggregationMode::SparseDp => dp_fedavg_aggregate(
                &updates,
                &config.clip,
                &config.budget,
                round_seed(config.seed, round),
            )?,
        };
        let next: Vec<f64> = global.iter().zip(aggregate.iter()).map(|(w, a)| w + a).collect();
        global = WeightVector::new(next)?;
        let bytes_sent = per_client * clients.len() as u64;
        cumulative += bytes_sent;
        history.push(RoundMetrics {
            round: round + 1,
            macro_f1: evaluate(&global, test)?,
            bytes_sent,
            cumulative_bytes: cumulative,
            global_weights_norm: global.l2_norm(),
        });
    }
    Ok(FederatedRun {
        history,
        final_weights: global,
    })
}

/// Best balanced accuracy of a loss-threshold membership attack.
///
/// Every midpoint between consecutive distinct pooled losses is tried as a
/// threshold (plus the two trivial ones); a loss below the threshold is
/// called "member". The attacker may also invert its rule, so the result
/// is never below 0.5.
pub fn mia_loss_threshold_attack(member_losses: &[f64], nonmember_losses: &[f64]) -> Result<f64> {
    if member_losses.is_empty() || nonmember_losses.is_empty() {
        return Err(Error::invalid("attack needs member and non-member losses"));
    }
    if member_losses.iter().chain(nonmember_losses).any(|l| l.is_nan()) {
        return Err(Error::invalid("loss is NaN"));
    }
    let mut pooled: Vec<(f64, bool)> = member_losses
        .iter()
        .map(|&l| (l, true))
        .chain(nonmember_losses.iter().map(|&l| (l, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let members = member_losses.len() as u128;
    let nonmembers = nonmember_losses.len() as u128;
    // members below threshold, nonmembers at or above it
    let mut tp: u128 = 0;
    let mut tn: u128 = nonmembers;
    let score = |tp: u128, tn: u128| {
        let num = tp * nonmembers + tn * members;
        let den = 2 * members * nonmembers;
        let b = num as f64 / den as f64;
        b.max((den - num) as f64 / den as f64)
    };
    let mut best = score(tp, tn);
    let mut i = 0;
    while i < pooled.len() {
        let value = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == value {
            if pooled[i].1 {
                tp += 1;
            } else {
                tn -= 1;
            }
            i += 1;
        }
        best = best.max(score(tp, tn));
    }
    Ok(best)
}

/// Losses of the final model on the clients' training rows (members) and
/// on the held-out rows (non-members).
pub fn membership_losses(
    weights: &[f64],
    clients: &[ClientDataset],
    test: &ClientDataset,
) -> (Vec<f64>, Vec<f64>) {
    let members = clients
        .iter()
        .flat_map(|c| per_sample_losses(weights, c))
        .collect();
    (members, per_sample_losses(weights, test))
}
