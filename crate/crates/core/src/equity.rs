//! Equitable aid prioritisation with adversarial debiasing.
//!
//! A one-hidden-layer network maps standardised upazila features to a
//! hidden representation `h = tanh(W x + b)`. A predictor head regresses
//! the priority score `sigmoid(w . h + b2)` with squared error, and an
//! adversary head tries to recover the region from `h` with logistic loss.
//! The adversary's gradient passes back into the encoder through a
//! gradient-reversal layer (identity forward, `-lambda * g` backward), so
//! the encoder is pushed towards region-invariant representations.
//!
//! All gradients are hand-derived; `Network::gradient` is checked against
//! finite differences in the tests.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::ops::Range;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Region {
    Haor,
    #[serde(rename = "non-Haor")]
    NonHaor,
}

impl Region {
    pub fn is_haor(self) -> bool {
        self == Region::Haor
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Haor => "Haor",
            Region::NonHaor => "non-Haor",
        })
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Haor" | "haor" => Ok(Region::Haor),
            "non-Haor" | "non-haor" | "nonhaor" => Ok(Region::NonHaor),
            other => Err(Error::invalid(format!("region {other:?} is not Haor/non-Haor"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpazilaRecord {
    pub name: String,
    pub district: String,
    pub region_type: Region,
    pub poverty_rate: f64,
    /// Flood damage in millions of USD.
    pub damage_usd_m: f64,
    pub affected_population: u64,
}

/// Number of model inputs derived from a record.
pub const NUM_FEATURES: usize = 3;

impl UpazilaRecord {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::invalid("upazila name is empty"));
        }
        if !(0.0..=1.0).contains(&self.poverty_rate) {
            return Err(Error::invalid(format!(
                "{}: poverty_rate {} outside [0, 1]",
                self.name, self.poverty_rate
            )));
        }
        if !(self.damage_usd_m >= 0.0 && self.damage_usd_m.is_finite()) {
            return Err(Error::invalid(format!(
                "{}: damage {} must be a non-negative number",
                self.name, self.damage_usd_m
            )));
        }
        Ok(())
    }

    /// Unstandardised inputs: poverty rate, log damage, log affected people.
    pub fn raw_features(&self) -> [f64; NUM_FEATURES] {
        [
            self.poverty_rate,
            self.damage_usd_m.ln_1p(),
            (self.affected_population as f64).ln_1p(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DebiasConfig {
    /// Gradient-reversal strength; 0 trains the unregularised baseline.
    pub lambda: f64,
    pub hidden_width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for DebiasConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            hidden_width: 8,
            epochs: 3000,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

impl DebiasConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.hidden_width == 0 || self.epochs == 0 {
            return Err(Error::config("hidden_width and epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        Ok(())
    }
}

/// Backward pass of the gradient-reversal layer.
pub fn grl_backward(upstream_gradient: &[f64], lambda: f64) -> Vec<f64> {
    upstream_gradient.iter().map(|g| -lambda * g).collect()
}

/// Forward pass of the gradient-reversal layer.
pub fn grl_forward(x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Which loss a parameter is trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Updated with `d(mse)/d(theta) - lambda * d(bce)/d(theta)`.
    Encoder,
    /// Updated with `d(mse)/d(theta)`.
    Predictor,
    /// Updated with `d(bce)/d(theta)`.
    Adversary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Losses {
    pub mse: f64,
    pub adversary_bce: f64,
}

/// Encoder + two heads, stored as one flat parameter vector laid out as
/// `[W (hidden x inputs, row-major), b, w_pred, b_pred, w_adv, b_adv]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    inputs: usize,
    hidden: usize,
    params: Vec<f64>,
}

struct Forward {
    hidden: Vec<f64>,
    prediction: f64,
    adversary: f64,
}

impl Network {
    pub fn new(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let mut net = Self {
            inputs,
            hidden,
            params: vec![0.0; hidden * inputs + 3 * hidden + 2],
        };
        let enc_scale = 1.0 / (inputs as f64).sqrt();
        let head_scale = 1.0 / (hidden as f64).sqrt();
        for i in net.w1() {
            net.params[i] = enc_scale * rng.standard_normal();
        }
        for i in net.w_pred().chain(net.w_adv()) {
            net.params[i] = head_scale * rng.standard_normal();
        }
        net
    }

    pub fn from_params(inputs: usize, hidden: usize, params: Vec<f64>) -> Result<Self> {
        let expected = hidden * inputs + 3 * hidden + 2;
        if params.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            inputs,
            hidden,
            params,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    fn w1(&self) -> Range<usize> {
        0..self.hidden * self.inputs
    }

    fn b1(&self) -> Range<usize> {
        let s = self.hidden * self.inputs;
        s..s + self.hidden
    }

    fn w_pred(&self) -> Range<usize> {
        let s = self.b1().end;
        s..s + self.hidden
    }

    fn b_pred(&self) -> usize {
        self.w_pred().end
    }

    fn w_adv(&self) -> Range<usize> {
        let s = self.b_pred() + 1;
        s..s + self.hidden
    }

    fn b_adv(&self) -> usize {
        self.w_adv().end
    }

    pub fn group(&self, index: usize) -> ParamGroup {
        if index < self.w_pred().start {
            ParamGroup::Encoder
        } else if index <= self.b_pred() {
            ParamGroup::Predictor
        } else {
            ParamGroup::Adversary
        }
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let p = &self.params;
        let (w1, b1) = (&p[self.w1()], &p[self.b1()]);
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &w1[j * self.inputs..(j + 1) * self.inputs];
                (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[j]).tanh()
            })
            .collect();
        // the reversal layer is the identity on the forward pass
        let adv_in = grl_forward(&hidden);
        let dot = |w: &[f64], h: &[f64]| w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
        Forward {
            prediction: sigmoid(dot(&p[self.w_pred()], &hidden) + p[self.b_pred()]),
            adversary: sigmoid(dot(&p[self.w_adv()], &adv_in) + p[self.b_adv()]),
            hidden,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.forward(x).prediction
    }

    /// Adversary's probability that the input is from a Haor region.
    pub fn adversary_probability(&self, x: &[f64]) -> f64 {
        self.forward(x).adversary
    }

    pub fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).hidden
    }

    /// Mean squared error of the predictor and mean cross-entropy of the
    /// adversary over a batch.
    pub fn losses(&self, xs: &[Vec<f64>], targets: &[f64], regions: &[Region]) -> Losses {
        let n = xs.len() as f64;
        let (mut mse, mut bce) = (0.0, 0.0);
        for ((x, &y), r) in xs.iter().zip(targets).zip(regions) {
            let f = self.forward(x);
            mse += (f.prediction - y).powi(2);
            bce += adversary_loss(f.adversary, r.is_haor());
        }
        Losses {
            mse: mse / n,
            adversary_bce: bce / n,
        }
    }

    /// Update direction for every parameter: ordinary gradients for the
    /// two heads, and for the encoder the predictor gradient plus the
    /// adversary gradient after the reversal layer.
    pub fn gradient(
        &self,
        xs: &[Vec<f64>],
        targets: &[f64],
        regions: &[Region],
        lambda: f64,
    ) -> Vec<f64> {
        let p = &self.params;
        let n = xs.len() as f64;
        let mut grad = vec![0.0; p.len()];
        let (w_pred, w_adv) = (&p[self.w_pred()], &p[self.w_adv()]);
        for ((x, &y), r) in xs.iter().zip(targets).zip(regions) {
            let f = self.forward(x);
            let s = if r.is_haor() { 1.0 } else { 0.0 };
            // d(mse_i)/d(pre-activation) and d(bce_i)/d(logit)
            let d_pred = 2.0 * (f.prediction - y) * f.prediction * (1.0 - f.prediction) / n;
            let d_adv = (f.adversary - s) / n;

            for j in 0..self.hidden {
                grad[self.w_pred().start + j] += d_pred * f.hidden[j];
                grad[self.w_adv().start + j] += d_adv * f.hidden[j];
            }
            grad[self.b_pred()] += d_pred;
            grad[self.b_adv()] += d_adv;

            let from_pred: Vec<f64> = w_pred.iter().map(|w| d_pred * w).collect();
            let from_adv: Vec<f64> = w_adv.iter().map(|w| d_adv * w).collect();
            let reversed = grl_backward(&from_adv, lambda);
            for j in 0..self.hidden {
                let dh = from_pred[j] + reversed[j];
                let dz = dh * (1.0 - f.hidden[j] * f.hidden[j]);
                let row = self.w1().start + j * self.inputs;
                for (k, v) in x.iter().enumerate() {
                    grad[row + k] += dz * v;
                }
                grad[self.b1().start + j] += dz;
            }
        }
        grad
    }
}

fn adversary_loss(prob: f64, haor: bool) -> f64 {
    let p = prob.clamp(1e-15, 1.0 - 1e-15);
    if haor {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Per-feature standardisation fitted on the training records.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    means: [f64; NUM_FEATURES],
    stds: [f64; NUM_FEATURES],
}

impl Standardizer {
    pub fn fit(records: &[UpazilaRecord]) -> Self {
        let n = records.len() as f64;
        let mut means = [0.0; NUM_FEATURES];
        let mut stds = [0.0; NUM_FEATURES];
        for r in records {
            for (m, v) in means.iter_mut().zip(r.raw_features()) {
                *m += v / n;
            }
        }
        for r in records {
            for ((s, v), m) in stds.iter_mut().zip(r.raw_features()).zip(means) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in &mut stds {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        Self { means, stds }
    }

    pub fn transform(&self, record: &UpazilaRecord) -> Vec<f64> {
        record
            .raw_features()
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mse: f64,
    pub adversary_bce: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairModel {
    pub network: Network,
    pub standardizer: Standardizer,
    pub config: DebiasConfig,
    /// Losses before each update; the last entry is after training.
    pub history: Vec<EpochLoss>,
}

impl FairModel {
    pub fn score(&self, record: &UpazilaRecord) -> f64 {
        self.network.predict(&self.standardizer.transform(record))
    }

    pub fn scores(&self, records: &[UpazilaRecord]) -> Vec<f64> {
        records.iter().map(|r| self.score(r)).collect()
    }

    /// Fraction of records whose region the adversary head guesses right.
    pub fn adversary_accuracy(&self, records: &[UpazilaRecord]) -> f64 {
        let hits = records
            .iter()
            .filter(|r| {
                let p = self
                    .network
                    .adversary_probability(&self.standardizer.transform(r));
                (p >= 0.5) == r.region_type.is_haor()
            })
            .count();
        hits as f64 / records.len().max(1) as f64
    }
}

/// Joint full-batch gradient descent on predictor MSE and adversary
/// cross-entropy, with the adversary gradient reversed into the encoder.
pub fn train_fair_regressor(
    records: &[UpazilaRecord],
    targets: &[f64],
    config: &DebiasConfig,
) -> Result<FairModel> {
    config.validate()?;
    if records.len() < 4 {
        return Err(Error::invalid(format!("need at least 4 records, got {}", records.len())));
    }
    if records.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} records but {} targets",
            records.len(),
            targets.len()
        )));
    }
    for r in records {
        r.validate()?;
    }
    if let Some(t) = targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::invalid(format!("target {t} outside [0, 1]")));
    }
    let standardizer = Standardizer::fit(records);
    let xs: Vec<Vec<f64>> = records.iter().map(|r| standardizer.transform(r)).collect();
    let regions: Vec<Region> = records.iter().map(|r| r.region_type).collect();
    let mut network = Network::new(NUM_FEATURES, config.hidden_width, config.seed);
    let mut history = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let l = network.losses(&xs, targets, &regions);
        if !(l.mse.is_finite() && l.adversary_bce.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(EpochLoss {
            epoch,
            mse: l.mse,
            adversary_bce: l.adversary_bce,
        });
        if epoch == config.epochs {
            break;
        }
        let grad = network.gradient(&xs, targets, &regions, config.lambda);
        for (p, g) in network.params_mut().iter_mut().zip(grad) {
            *p -= config.learning_rate * g;
        }
        if network.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
    }
    Ok(FairModel {
        network,
        standardizer,
        config: *config,
        history,
    })
}

/// Debiased model trained with the default configuration on the bundled
/// flood-damage fixture. Training is deterministic, so this is the same
/// model on every call.
pub fn reference_model() -> &'static FairModel {
    static MODEL: OnceLock<FairModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let (records, targets) = crate::data_io::bundled_pdna();
        train_fair_regressor(&records, &targets, &DebiasConfig::default())
            .expect("reference configuration converges")
    })
}

fn region_means(values: &[f64], regions: &[Region]) -> Result<(f64, f64)> {
    if values.len() != regions.len() {
        return Err(Error::invalid(format!(
            "{} values but {} region flags",
            values.len(),
            regions.len()
        )));
    }
    let (mut sum, mut count) = ([0.0; 2], [0usize; 2]);
    for (v, r) in values.iter().zip(regions) {
        let i = usize::from(!r.is_haor());
        sum[i] += v;
        count[i] += 1;
    }
    let found = count.iter().filter(|&&c| c > 0).count();
    if found < 2 {
        return Err(Error::InsufficientGroups { found });
    }
    Ok((sum[0] / count[0] as f64, sum[1] / count[1] as f64))
}

/// `|mean score (Haor) - mean score (non-Haor)|` on continuous scores.
pub fn statistical_parity_difference(scores: &[f64], regions: &[Region]) -> Result<f64> {
    let (haor, other) = region_means(scores, regions)?;
    Ok((haor - other).abs())
}

/// Difference between the regions' mean absolute residuals.
pub fn regional_fairness_gap(scores: &[f64], targets: &[f64], regions: &[Region]) -> Result<f64> {
    if scores.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} targets",
            scores.len(),
            targets.len()
        )));
    }
    let residuals: Vec<f64> = scores.iter().zip(targets).map(|(s, t)| (s - t).abs()).collect();
    let (haor, other) = region_means(&residuals, regions)?;
    Ok((haor - other).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedUpazila {
    pub rank: usize,
    pub name: String,
    pub priority: f64,
    pub region_type: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PriorityRanking {
    pub entries: Vec<RankedUpazila>,
}

impl PriorityRanking {
    /// Sorts by score descending, then name ascending.
    pub fn from_scores(records: &[UpazilaRecord], scores: &[f64]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("no records to rank"));
        }
        if records.len() != scores.len() {
            return Err(Error::invalid("records and scores differ in length"));
        }
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| records[a].name.cmp(&records[b].name))
        });
        let entries = order
            .into_iter()
            .enumerate()
            .map(|(i, k)| RankedUpazila {
                rank: i + 1,
                name: records[k].name.clone(),
                priority: scores[k],
                region_type: records[k].region_type,
            })
            .collect();
        Ok(Self { entries })
    }

    /// Listing-style text, one `Rank N: name (priority=...)` line per
    /// entry; `verbose` adds the region of each upazila.
    pub fn to_text(&self, verbose: bool) -> String {
        let width = self.entries.iter().map(|e| e.name.chars().count()).max().unwrap_or(0);
        let mut out = String::new();
        for e in &self.entries {
            let pad = " ".repeat(width - e.name.chars().count());
            let _ = write!(out, "Rank {}: {}{pad} (priority={:.4}", e.rank, e.name, e.priority);
            if verbose {
                let _ = write!(out, ", {} region", e.region_type);
            }
            out.push_str(")\n");
        }
        out
    }

    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.rank)
    }
}

/// Scores every record with the model and ranks them.
pub fn generate_priority_ranking(
    records: &[UpazilaRecord],
    model: &FairModel,
) -> Result<PriorityRanking> {
    PriorityRanking::from_scores(records, &model.scores(records))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingShift {
    pub changed_fraction: f64,
    /// Baseline rank minus fair rank; positive means moved up.
    pub deltas: BTreeMap<String, i64>,
}

pub fn ranking_shift(baseline: &PriorityRanking, fair: &PriorityRanking) -> Result<RankingShift> {
    let fair_ranks: BTreeMap<&str, usize> =
        fair.entries.iter().map(|e| (e.name.as_str(), e.rank)).collect();
    if fair_ranks.len() != baseline.entries.len() || fair.entries.len() != baseline.entries.len() {
        return Err(Error::invalid("rankings cover different upazila sets"));
    }
    let mut deltas = BTreeMap::new();
    for e in &baseline.entries {
        let f = fair_ranks
            .get(e.name.as_str())
            .ok_or_else(|| Error::invalid(format!("{} missing from fair ranking", e.name)))?;
        deltas.insert(e.name.clone(), e.rank as i64 - *f as i64);
    }
    let changed = deltas.values().filter(|&&d| d != 0).count();
    Ok(RankingShift {
        changed_fraction: changed as f64 / deltas.len() as f64,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(name: &str, region: Region, poverty: f64, damage: f64, people: u64) -> UpazilaRecord {
        UpazilaRecord {
            name: name.into(),
            district: "D".into(),
            region_type: region,
            poverty_rate: poverty,
            damage_usd_m: damage,
            affected_population: people,
        }
    }

    fn six() -> (Vec<UpazilaRecord>, Vec<f64>) {
        let recs = vec![
            record("a", Region::Haor, 0.40, 80.0, 200_000),
            record("b", Region::Haor, 0.35, 40.0, 150_000),
            record("c", Region::Haor, 0.30, 30.0, 120_000),
            record("d", Region::NonHaor, 0.20, 10.0, 90_000),
            record("e", Region::NonHaor, 0.25, 15.0, 60_000),
            record("f", Region::NonHaor, 0.15, 5.0, 40_000),
        ];
        let targets = vec![0.9, 0.7, 0.6, 0.3, 0.35, 0.1];
        (recs, targets)
    }

    #[test]
    fn grl_identities() {
        assert!(grl_backward(&[1.0, -3.0], 0.0).iter().all(|&g| g == 0.0));
        assert_eq!(grl_backward(&[1.0, -2.0], 1.0), vec![-1.0, 2.0]);
        assert_eq!(grl_backward(&[4.0], 0.5), vec![-2.0]);
        assert_eq!(grl_forward(&[0.3, -0.1]), vec![0.3, -0.1]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (recs, targets) = six();
        let st = Standardizer::fit(&recs);
        let xs: Vec<Vec<f64>> = recs.iter().map(|r| st.transform(r)).collect();
        let regions: Vec<Region> = recs.iter().map(|r| r.region_type).collect();
        for lambda in [0.0, 1.0] {
            let net = Network::new(NUM_FEATURES, 4, 11);
            let analytic = net.gradient(&xs, &targets, &regions, lambda);
            for (i, &exact) in analytic.iter().enumerate() {
                let objective = |n: &Network| {
                    let l = n.losses(&xs, &targets, &regions);
                    match net.group(i) {
                        ParamGroup::Encoder => l.mse - lambda * l.adversary_bce,
                        ParamGroup::Predictor => l.mse,
                        ParamGroup::Adversary => l.adversary_bce,
                    }
                };
                let h = 1e-5;
                let (mut up, mut down) = (net.clone(), net.clone());
                up.params_mut()[i] += h;
                down.params_mut()[i] -= h;
                let numeric = (objective(&up) - objective(&down)) / (2.0 * h);
                let scale = exact.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (exact - numeric).abs() / scale <= 1e-4 || (exact - numeric).abs() < 1e-10,
                    "param {i} lambda {lambda}: {} vs {numeric}",
                    exact
                );
            }
        }
    }

    #[test]
    fn baseline_training_reduces_mse() {
        let (recs, targets) = six();
        let cfg = DebiasConfig {
            lambda: 0.0,
            epochs: 500,
            ..Default::default()
        };
        let m = train_fair_regressor(&recs, &targets, &cfg).unwrap();
        assert!(m.history.last().unwrap().mse < m.history[0].mse);
    }

    #[test]
    fn lambda_does_not_touch_forward_pass() {
        let (recs, targets) = six();
        let mut a = train_fair_regressor(&recs, &targets, &DebiasConfig { epochs: 10, ..Default::default() }).unwrap();
        let b = a.clone();
        a.config.lambda = 0.0;
        assert_eq!(a.scores(&recs), b.scores(&recs));
    }

    #[test]
    fn training_is_deterministic() {
        let (recs, targets) = six();
        let cfg = DebiasConfig { epochs: 50, ..Default::default() };
        let a = train_fair_regressor(&recs, &targets, &cfg).unwrap();
        let b = train_fair_regressor(&recs, &targets, &cfg).unwrap();
        assert_eq!(a.network, b.network);
    }

    #[test]
    fn training_input_errors() {
        let (recs, targets) = six();
        let cfg = DebiasConfig::default();
        assert!(train_fair_regressor(&recs[..3], &targets[..3], &cfg).is_err());
        assert!(train_fair_regressor(&recs, &targets[..5], &cfg).is_err());
        let bad = DebiasConfig { lambda: -1.0, ..cfg };
        assert!(matches!(train_fair_regressor(&recs, &targets, &bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let (recs, targets) = six();
        let cfg = DebiasConfig {
            learning_rate: f64::MAX,
            epochs: 50,
            ..Default::default()
        };
        assert!(matches!(
            train_fair_regressor(&recs, &targets, &cfg),
            Err(Error::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn spd_examples() {
        let regions = [Region::Haor, Region::Haor, Region::NonHaor, Region::NonHaor];
        assert_eq!(statistical_parity_difference(&[0.5; 4], &regions).unwrap(), 0.0);
        let s = statistical_parity_difference(&[0.7, 0.9, 0.3, 0.5], &regions).unwrap();
        assert!((s - 0.4).abs() < 1e-12);
        let swapped = [Region::NonHaor, Region::NonHaor, Region::Haor, Region::Haor];
        assert_eq!(statistical_parity_difference(&[0.7, 0.9, 0.3, 0.5], &swapped).unwrap(), s);
        assert!(matches!(
            statistical_parity_difference(&[0.1, 0.2], &[Region::Haor, Region::Haor]),
            Err(Error::InsufficientGroups { found: 1 })
        ));
    }

    #[test]
    fn fairness_gap_examples() {
        let regions = [Region::Haor, Region::Haor, Region::NonHaor, Region::NonHaor];
        let t = [0.5, 0.5, 0.5, 0.5];
        assert_eq!(regional_fairness_gap(&t, &t, &regions).unwrap(), 0.0);
        let scores = [0.7, 0.3, 0.55, 0.45];
        let gap = regional_fairness_gap(&scores, &t, &regions).unwrap();
        assert!((gap - 0.15).abs() < 1e-12);
        let doubled = [0.9, 0.1, 0.6, 0.4];
        let gap2 = regional_fairness_gap(&doubled, &t, &regions).unwrap();
        assert!((gap2 - 2.0 * gap).abs() < 1e-12);
    }

    #[test]
    fn ranking_rules() {
        let recs = vec![
            record("Beta", Region::Haor, 0.3, 1.0, 10),
            record("Alpha", Region::NonHaor, 0.3, 1.0, 10),
            record("Gamma", Region::NonHaor, 0.3, 1.0, 10),
        ];
        let r = PriorityRanking::from_scores(&recs, &[0.5, 0.5, 0.9]).unwrap();
        let names: Vec<&str> = r.entries.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["Gamma", "Alpha", "Beta"]);
        assert_eq!(r.entries.iter().map(|e| e.rank).collect::<Vec<_>>(), [1, 2, 3]);
        let single = PriorityRanking::from_scores(&recs[..1], &[0.01]).unwrap();
        assert_eq!(single.entries[0].rank, 1);
        assert!(PriorityRanking::from_scores(&[], &[]).is_err());
        assert_eq!(
            r.to_text(true).lines().next().unwrap(),
            "Rank 1: Gamma (priority=0.9000, non-Haor region)"
        );
        assert_eq!(r.to_text(false).lines().nth(2).unwrap(), "Rank 3: Beta  (priority=0.5000)");
    }

    #[test]
    fn shift_examples() {
        let names: Vec<String> = (0..10).map(|i| format!("u{i}")).collect();
        let recs: Vec<UpazilaRecord> =
            names.iter().map(|n| record(n, Region::Haor, 0.2, 1.0, 1)).collect();
        let base_scores: Vec<f64> = (0..10).map(|i| 1.0 - i as f64 / 10.0).collect();
        let base = PriorityRanking::from_scores(&recs, &base_scores).unwrap();
        let same = ranking_shift(&base, &base).unwrap();
        assert_eq!(same.changed_fraction, 0.0);
        assert!(same.deltas.values().all(|&d| d == 0));

        let mut swapped = base_scores.clone();
        swapped.swap(3, 4);
        let fair = PriorityRanking::from_scores(&recs, &swapped).unwrap();
        let s = ranking_shift(&base, &fair).unwrap();
        assert!((s.changed_fraction - 0.2).abs() < 1e-12);
        assert_eq!(s.deltas["u4"], 1);

        let other = PriorityRanking::from_scores(&recs[..9], &base_scores[..9]).unwrap();
        assert!(ranking_shift(&base, &other).is_err());
    }

    #[test]
    fn rank_fourteen_to_six_is_plus_eight() {
        let recs: Vec<UpazilaRecord> =
            (0..20).map(|i| record(&format!("u{i:02}"), Region::Haor, 0.2, 1.0, 1)).collect();
        let base: Vec<f64> = (0..20).map(|i| 1.0 - i as f64 / 20.0).collect();
        let mut fair = base.clone();
        // lift u13 (rank 14) just above u05 (rank 6)
        fair[13] = base[5] + 0.001;
        let b = PriorityRanking::from_scores(&recs, &base).unwrap();
        let f = PriorityRanking::from_scores(&recs, &fair).unwrap();
        assert_eq!((b.rank_of("u13"), f.rank_of("u13")), (Some(14), Some(6)));
        assert_eq!(ranking_shift(&b, &f).unwrap().deltas["u13"], 8);
    }
}
