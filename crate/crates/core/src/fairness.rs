//! Group and intersectional fairness metrics over binary predictions.
//!
//! Every metric reduces over groups with the worst pair: the largest
//! absolute rate difference, or the smallest min/max rate ratio. With two
//! groups this is the usual pairwise definition.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Binary predictions, optional binary truths and one group label per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledOutcomes {
    predictions: Vec<u8>,
    truths: Option<Vec<u8>>,
    groups: Vec<String>,
}

impl LabeledOutcomes {
    pub fn new<S: Into<String>>(
        predictions: Vec<u8>,
        truths: Option<Vec<u8>>,
        groups: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let groups: Vec<String> = groups.into_iter().map(Into::into).collect();
        if predictions.is_empty() {
            return Err(Error::invalid("no predictions"));
        }
        if groups.len() != predictions.len() {
            return Err(Error::invalid(format!(
                "{} predictions but {} group labels",
                predictions.len(),
                groups.len()
            )));
        }
        check_binary("prediction", &predictions)?;
        if let Some(t) = &truths {
            if t.len() != predictions.len() {
                return Err(Error::invalid(format!(
                    "{} predictions but {} truths",
                    predictions.len(),
                    t.len()
                )));
            }
            check_binary("truth", t)?;
        }
        Ok(Self {
            predictions,
            truths,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn predictions(&self) -> &[u8] {
        &self.predictions
    }

    pub fn truths(&self) -> Option<&[u8]> {
        self.truths.as_deref()
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }
}

fn check_binary(what: &str, xs: &[u8]) -> Result<()> {
    match xs.iter().position(|&v| v > 1) {
        Some(i) => Err(Error::invalid(format!(
            "{what} at row {i} is {}, expected 0 or 1",
            xs[i]
        ))),
        None => Ok(()),
    }
}

/// Per-group confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupCounts {
    pub size: usize,
    pub predicted_positive: usize,
    pub truth_positive: usize,
    pub truth_negative: usize,
    pub true_positive: usize,
    pub false_positive: usize,
}

impl GroupCounts {
    pub fn positive_rate(&self) -> f64 {
        self.predicted_positive as f64 / self.size as f64
    }
}

fn tally(outcomes: &LabeledOutcomes) -> BTreeMap<&str, GroupCounts> {
    let mut table: BTreeMap<&str, GroupCounts> = BTreeMap::new();
    for (i, g) in outcomes.groups.iter().enumerate() {
        let c = table.entry(g.as_str()).or_default();
        let pred = outcomes.predictions[i] == 1;
        c.size += 1;
        c.predicted_positive += usize::from(pred);
        if let Some(t) = &outcomes.truths {
            if t[i] == 1 {
                c.truth_positive += 1;
                c.true_positive += usize::from(pred);
            } else {
                c.truth_negative += 1;
                c.false_positive += usize::from(pred);
            }
        }
    }
    table
}

fn positive_rates(table: &BTreeMap<&str, GroupCounts>) -> Result<Vec<f64>> {
    if table.len() < 2 {
        return Err(Error::InsufficientGroups { found: table.len() });
    }
    Ok(table.values().map(GroupCounts::positive_rate).collect())
}

fn spread(rates: &[f64]) -> f64 {
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

fn ratio(rates: &[f64]) -> f64 {
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        // nobody receives a positive prediction: parity holds trivially
        1.0
    } else {
        min / max
    }
}

/// Largest gap in positive-prediction rate between any two groups.
pub fn demographic_parity_diff(outcomes: &LabeledOutcomes) -> Result<f64> {
    Ok(spread(&positive_rates(&tally(outcomes))?))
}

/// Smallest ratio of positive-prediction rates between any two groups.
pub fn disparate_impact(outcomes: &LabeledOutcomes) -> Result<f64> {
    Ok(ratio(&positive_rates(&tally(outcomes))?))
}

/// Worst of the true-positive-rate gap and the false-positive-rate gap.
///
/// Fails with [`Error::DegenerateGroup`] when some group has no positive
/// truths (TPR undefined) or no negative truths (FPR undefined).
pub fn equalized_odds_diff(outcomes: &LabeledOutcomes) -> Result<f64> {
    if outcomes.truths.is_none() {
        return Err(Error::MissingTruths);
    }
    eod_from_table(&tally(outcomes))
}

fn eod_from_table(table: &BTreeMap<&str, GroupCounts>) -> Result<f64> {
    if table.len() < 2 {
        return Err(Error::InsufficientGroups { found: table.len() });
    }
    let mut tprs = Vec::with_capacity(table.len());
    let mut fprs = Vec::with_capacity(table.len());
    for (group, c) in table {
        if c.truth_positive == 0 {
            return Err(Error::DegenerateGroup {
                group: group.to_string(),
                rate: "true positive rate",
                missing: "positive",
            });
        }
        if c.truth_negative == 0 {
            return Err(Error::DegenerateGroup {
                group: group.to_string(),
                rate: "false positive rate",
                missing: "negative",
            });
        }
        tprs.push(c.true_positive as f64 / c.truth_positive as f64);
        fprs.push(c.false_positive as f64 / c.truth_negative as f64);
    }
    Ok(spread(&tprs).max(spread(&fprs)))
}

/// All metrics in one pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub dpd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eod: Option<f64>,
    pub di: f64,
    pub per_group_positive_rates: BTreeMap<String, f64>,
    pub group_sizes: BTreeMap<String, usize>,
    /// Composite groups dropped by `min_group_size`, with their sizes.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub excluded_groups: BTreeMap<String, usize>,
}

fn report_from_table(
    table: &BTreeMap<&str, GroupCounts>,
    with_truths: bool,
    excluded_groups: BTreeMap<String, usize>,
) -> Result<FairnessReport> {
    let rates = positive_rates(table)?;
    let eod = if with_truths {
        Some(eod_from_table(table)?)
    } else {
        None
    };
    Ok(FairnessReport {
        dpd: spread(&rates),
        eod,
        di: ratio(&rates),
        per_group_positive_rates: table
            .iter()
            .map(|(g, c)| (g.to_string(), c.positive_rate()))
            .collect(),
        group_sizes: table.iter().map(|(g, c)| (g.to_string(), c.size)).collect(),
        excluded_groups,
    })
}

/// DPD, DI and (when truths are present) EOD in a single report.
pub fn fairness_summary(outcomes: &LabeledOutcomes) -> Result<FairnessReport> {
    report_from_table(&tally(outcomes), outcomes.truths.is_some(), BTreeMap::new())
}

/// Separator between attribute values in composite group names.
pub const COMPOSITE_SEPARATOR: &str = "|";

/// Fairness report over composite groups formed by crossing several
/// sensitive attributes (e.g. sex x age band).
///
/// Each row's group is the tuple of its attribute values, named by joining
/// the values with [`COMPOSITE_SEPARATOR`]. Groups smaller than
/// `min_group_size` are dropped before any metric is computed and listed
/// in [`FairnessReport::excluded_groups`].
pub fn intersectional_fairness<S: AsRef<str>>(
    predictions: &[u8],
    truths: Option<&[u8]>,
    attribute_columns: &[Vec<S>],
    min_group_size: usize,
) -> Result<FairnessReport> {
    if attribute_columns.is_empty() {
        return Err(Error::invalid("no attribute columns"));
    }
    let n = predictions.len();
    for (j, col) in attribute_columns.iter().enumerate() {
        if col.len() != n {
            return Err(Error::invalid(format!(
                "attribute column {j} has {} rows, expected {n}",
                col.len()
            )));
        }
    }
    let composite: Vec<String> = (0..n)
        .map(|i| {
            attribute_columns
                .iter()
                .map(|c| c[i].as_ref())
                .collect::<Vec<_>>()
                .join(COMPOSITE_SEPARATOR)
        })
        .collect();
    let outcomes = LabeledOutcomes::new(
        predictions.to_vec(),
        truths.map(<[u8]>::to_vec),
        composite,
    )?;
    let mut table = tally(&outcomes);
    let mut excluded = BTreeMap::new();
    table.retain(|g, c| {
        let keep = c.size >= min_group_size;
        if !keep {
            excluded.insert(g.to_string(), c.size);
        }
        keep
    });
    report_from_table(&table, truths.is_some(), excluded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_groups(a: &[u8], b: &[u8]) -> LabeledOutcomes {
        let preds: Vec<u8> = a.iter().chain(b).copied().collect();
        let groups = std::iter::repeat_n("A", a.len()).chain(std::iter::repeat_n("B", b.len()));
        LabeledOutcomes::new(preds, None, groups).unwrap()
    }

    #[test]
    fn dpd_identical_rates_is_zero() {
        let o = two_groups(&[1, 1, 1], &[1, 1]);
        assert_eq!(demographic_parity_diff(&o).unwrap(), 0.0);
    }

    #[test]
    fn dpd_two_groups() {
        let o = two_groups(&[1, 1, 1, 0, 0], &[1, 0, 0, 0, 0]);
        assert!((demographic_parity_diff(&o).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn dpd_worst_pair_of_three() {
        // rates 0.2, 0.5, 0.9
        let mut preds = vec![];
        let mut groups = vec![];
        for (g, pos) in [("a", 2), ("b", 5), ("c", 9)] {
            for i in 0..10 {
                preds.push(u8::from(i < pos));
                groups.push(g);
            }
        }
        let o = LabeledOutcomes::new(preds, None, groups).unwrap();
        assert!((demographic_parity_diff(&o).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn di_anchor_case() {
        let mut a = vec![0u8; 100];
        a[..23].fill(1);
        let o = two_groups(&a, &[1; 100]);
        assert_eq!(disparate_impact(&o).unwrap(), 0.23);
    }

    #[test]
    fn di_conventions() {
        assert_eq!(disparate_impact(&two_groups(&[0, 0], &[0, 0, 0])).unwrap(), 1.0);
        assert_eq!(disparate_impact(&two_groups(&[0, 0], &[1, 0])).unwrap(), 0.0);
        assert_eq!(disparate_impact(&two_groups(&[1, 0], &[0, 1])).unwrap(), 1.0);
        let o = two_groups(&[1, 1, 0, 0, 0], &[1, 1, 1, 1, 0]);
        assert!((disparate_impact(&o).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eod_hand_computed() {
        let o = LabeledOutcomes::new(
            vec![1, 1, 0, 0, 1, 0, 1, 0],
            Some(vec![1, 1, 0, 0, 1, 1, 0, 0]),
            ["A", "A", "A", "A", "B", "B", "B", "B"],
        )
        .unwrap();
        assert!((equalized_odds_diff(&o).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eod_perfect_classifier() {
        let t = vec![1, 0, 1, 0, 1, 0];
        let o = LabeledOutcomes::new(t.clone(), Some(t), ["x", "x", "y", "y", "z", "z"]).unwrap();
        assert_eq!(equalized_odds_diff(&o).unwrap(), 0.0);
    }

    #[test]
    fn eod_errors() {
        let o = two_groups(&[1, 0], &[1, 0]);
        assert!(matches!(equalized_odds_diff(&o), Err(Error::MissingTruths)));

        let o = LabeledOutcomes::new(vec![1, 0, 1, 0], Some(vec![1, 0, 1, 1]), ["A", "A", "B", "B"])
            .unwrap();
        match equalized_odds_diff(&o) {
            Err(Error::DegenerateGroup { group, rate, .. }) => {
                assert_eq!(group, "B");
                assert_eq!(rate, "false positive rate");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn input_validation() {
        assert!(matches!(
            LabeledOutcomes::new(vec![], None, Vec::<String>::new()),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            LabeledOutcomes::new(vec![1, 0], None, ["a"]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            LabeledOutcomes::new(vec![2], None, ["a"]),
            Err(Error::InvalidInput(_))
        ));
        let single = LabeledOutcomes::new(vec![1, 0], None, ["a", "a"]).unwrap();
        assert!(matches!(
            demographic_parity_diff(&single),
            Err(Error::InsufficientGroups { found: 1 })
        ));
        assert!(matches!(
            disparate_impact(&single),
            Err(Error::InsufficientGroups { .. })
        ));
    }

    #[test]
    fn summary_matches_individual_calls() {
        let o = LabeledOutcomes::new(
            vec![1, 0, 1, 1, 0, 0, 1, 0],
            Some(vec![1, 0, 0, 1, 1, 0, 1, 0]),
            ["m", "m", "m", "m", "f", "f", "f", "f"],
        )
        .unwrap();
        let r = fairness_summary(&o).unwrap();
        assert_eq!(r.dpd.to_bits(), demographic_parity_diff(&o).unwrap().to_bits());
        assert_eq!(r.di.to_bits(), disparate_impact(&o).unwrap().to_bits());
        assert_eq!(r.eod.unwrap().to_bits(), equalized_odds_diff(&o).unwrap().to_bits());
        assert_eq!(r.group_sizes.values().sum::<usize>(), 8);
    }

    #[test]
    fn summary_without_truths_omits_eod() {
        let r = fairness_summary(&two_groups(&[1, 0], &[1, 1])).unwrap();
        assert!(r.eod.is_none());
        assert_eq!(r.dpd, 0.5);
    }

    fn intersect_fixture(rates: [(&str, &str, usize); 4]) -> (Vec<u8>, Vec<Vec<String>>) {
        let mut preds = vec![];
        let mut sex = vec![];
        let mut age = vec![];
        for (s, a, pos) in rates {
            for i in 0..10 {
                preds.push(u8::from(i < pos));
                sex.push(s.to_string());
                age.push(a.to_string());
            }
        }
        (preds, vec![sex, age])
    }

    #[test]
    fn intersectional_uniform() {
        let (p, cols) = intersect_fixture([("M", "Y", 5), ("M", "O", 5), ("F", "Y", 5), ("F", "O", 5)]);
        let r = intersectional_fairness(&p, None, &cols, 1).unwrap();
        assert_eq!(r.dpd, 0.0);
        assert_eq!(r.di, 1.0);
        assert_eq!(r.group_sizes.len(), 4);
    }

    #[test]
    fn intersectional_worst_pair() {
        let (p, cols) = intersect_fixture([("M", "Y", 8), ("M", "O", 5), ("F", "Y", 5), ("F", "O", 2)]);
        let r = intersectional_fairness(&p, None, &cols, 1).unwrap();
        assert!((r.dpd - 0.6).abs() < 1e-12);
        assert!((r.di - 0.25).abs() < 1e-12);
        assert!(r.per_group_positive_rates.contains_key("M|Y"));
    }

    #[test]
    fn intersectional_min_group_size() {
        let (mut p, mut cols) =
            intersect_fixture([("M", "Y", 8), ("M", "O", 5), ("F", "Y", 5), ("F", "O", 2)]);
        for _ in 0..3 {
            p.push(1);
            cols[0].push("X".into());
            cols[1].push("Y".into());
        }
        let r = intersectional_fairness(&p, None, &cols, 5).unwrap();
        assert_eq!(r.excluded_groups.get("X|Y"), Some(&3));
        assert!(!r.group_sizes.contains_key("X|Y"));
        assert!((r.dpd - 0.6).abs() < 1e-12);

        let err = intersectional_fairness(&p, None, &cols, 100).unwrap_err();
        assert!(matches!(err, Error::InsufficientGroups { found: 0 }));
    }
}
