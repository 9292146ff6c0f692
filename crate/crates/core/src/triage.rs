//! Dengue triage: CART training with Gini impurity, Gini feature
//! importance, and a confidence-gated bilingual recommendation flow.
//!
//! Numeric splits test `value <= threshold` (threshold = midpoint between
//! adjacent distinct training values); categorical splits are one-vs-rest
//! and test `value == category`. Both go left on success.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};

/// Confidence below which the case is handed to a doctor.
pub const REROUTE_THRESHOLD: f64 = 0.70;

/// Seed and size of the synthetic dengue sample behind the bundled tree.
pub const REFERENCE_SEED: u64 = 0;
pub const REFERENCE_SAMPLES: usize = 4700;

const REFERENCE_TREE: &str = include_str!("../data/reference_tree.txt");
const STRINGS_TABLE: &str = include_str!("../data/strings.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" => Ok(Gender::Male),
            "female" => Ok(Gender::Female),
            other => Err(Error::invalid(format!("gender {other:?} is not male/female"))),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AreaType {
    Urban,
    Rural,
}

impl FromStr for AreaType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "urban" => Ok(AreaType::Urban),
            "rural" => Ok(AreaType::Rural),
            other => Err(Error::invalid(format!("area type {other:?} is not urban/rural"))),
        }
    }
}

impl fmt::Display for AreaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AreaType::Urban => "urban",
            AreaType::Rural => "rural",
        })
    }
}

/// Outcome classes, in count-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Severity {
    Mild,
    Severe,
}

impl Severity {
    pub const ALL: [Severity; 2] = [Severity::Mild, Severity::Severe];

    fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Mild" | "mild" => Ok(Severity::Mild),
            "Severe" | "severe" => Ok(Severity::Severe),
            other => Err(Error::invalid(format!("outcome {other:?} is not Mild/Severe"))),
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Mild => "Mild",
            Severity::Severe => "Severe",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriageRecord {
    pub age: f64,
    pub gender: Gender,
    pub area_type: AreaType,
    pub house_type: String,
    pub district: String,
}

impl TriageRecord {
    pub fn new(
        age: f64,
        gender: Gender,
        area_type: AreaType,
        house_type: impl Into<String>,
        district: impl Into<String>,
    ) -> Result<Self> {
        let r = Self {
            age,
            gender,
            area_type,
            house_type: house_type.into(),
            district: district.into(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=120.0).contains(&self.age) {
            return Err(Error::invalid(format!("age {} outside [0, 120]", self.age)));
        }
        if self.house_type.trim().is_empty() {
            return Err(Error::invalid("house_type is empty"));
        }
        if self.district.trim().is_empty() {
            return Err(Error::invalid("district is empty"));
        }
        Ok(())
    }

    fn value(&self, feature: Feature) -> FeatureValue<'_> {
        match feature {
            Feature::Age => FeatureValue::Numeric(self.age),
            Feature::Gender => FeatureValue::Category(match self.gender {
                Gender::Male => "male",
                Gender::Female => "female",
            }),
            Feature::AreaType => FeatureValue::Category(match self.area_type {
                AreaType::Urban => "urban",
                AreaType::Rural => "rural",
            }),
            Feature::HouseType => FeatureValue::Category(&self.house_type),
            Feature::District => FeatureValue::Category(&self.district),
        }
    }
}

/// Model features in declaration order, which is also the split
/// tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Age,
    Gender,
    AreaType,
    HouseType,
    District,
}

impl Feature {
    pub const ALL: [Feature; 5] = [
        Feature::Age,
        Feature::Gender,
        Feature::AreaType,
        Feature::HouseType,
        Feature::District,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Age => "age",
            Feature::Gender => "gender",
            Feature::AreaType => "area_type",
            Feature::HouseType => "house_type",
            Feature::District => "district",
        }
    }

    fn is_numeric(self) -> bool {
        self == Feature::Age
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown feature {s:?}")))
    }
}

enum FeatureValue<'a> {
    Numeric(f64),
    Category(&'a str),
}

type Counts = [usize; 2];

/// Gini impurity `1 - sum p_i^2`.
pub fn gini_impurity(class_counts: &[usize]) -> Result<f64> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("class counts are all zero"));
    }
    Ok(gini(class_counts, total))
}

fn gini(counts: &[usize], total: usize) -> f64 {
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn total(c: &Counts) -> usize {
    c[0] + c[1]
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitTest {
    /// Left when `value <= threshold`.
    Threshold(f64),
    /// Left when `value == category`.
    Category(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        counts: Counts,
    },
    Split {
        feature: Feature,
        test: SplitTest,
        counts: Counts,
        /// Branch for categories never seen in training (the larger child).
        default_left: bool,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn counts(&self) -> Counts {
        match self {
            Node::Leaf { counts } | Node::Split { counts, .. } => *counts,
        }
    }

    fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 5,
            min_leaf: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    root: Node,
    params: TreeParams,
    /// Training categories per categorical feature.
    known: BTreeMap<Feature, BTreeSet<String>>,
    /// Most frequent training category per categorical feature, used to
    /// impute a missing house type.
    modes: BTreeMap<Feature, String>,
}

struct Trainer<'a> {
    records: &'a [TriageRecord],
    labels: &'a [Severity],
    params: TreeParams,
}

struct Candidate {
    feature: Feature,
    test: SplitTest,
    decrease: f64,
}

const MIN_DECREASE: f64 = 1e-12;

impl Trainer<'_> {
    fn counts(&self, idx: &[usize]) -> Counts {
        let mut c = [0, 0];
        for &i in idx {
            c[self.labels[i].index()] += 1;
        }
        c
    }

    fn build(&self, idx: Vec<usize>, depth: usize) -> Node {
        let counts = self.counts(&idx);
        let n = idx.len();
        if depth >= self.params.max_depth
            || n < 2 * self.params.min_leaf
            || counts[0] == 0
            || counts[1] == 0
        {
            return Node::Leaf { counts };
        }
        let parent = gini(&counts, n);
        let mut best: Option<Candidate> = None;
        for feature in Feature::ALL {
            let cand = if feature.is_numeric() {
                self.best_numeric(feature, &idx, parent)
            } else {
                self.best_categorical(feature, &idx, parent)
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.decrease > b.decrease) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best.filter(|b| b.decrease > MIN_DECREASE) else {
            return Node::Leaf { counts };
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| goes_left(&self.records[i], best.feature, &best.test));
        let default_left = left_idx.len() >= right_idx.len();
        Node::Split {
            feature: best.feature,
            test: best.test,
            counts,
            default_left,
            left: Box::new(self.build(left_idx, depth + 1)),
            right: Box::new(self.build(right_idx, depth + 1)),
        }
    }

    fn decrease(&self, parent: f64, left: Counts, right: Counts) -> Option<f64> {
        let (nl, nr) = (total(&left), total(&right));
        if nl < self.params.min_leaf || nr < self.params.min_leaf || nl == 0 || nr == 0 {
            return None;
        }
        let n = (nl + nr) as f64;
        Some(parent - (nl as f64 / n) * gini(&left, nl) - (nr as f64 / n) * gini(&right, nr))
    }

    fn best_numeric(&self, feature: Feature, idx: &[usize], parent: f64) -> Option<Candidate> {
        let mut sorted: Vec<(f64, Severity)> = idx
            .iter()
            .map(|&i| match self.records[i].value(feature) {
                FeatureValue::Numeric(v) => (v, self.labels[i]),
                FeatureValue::Category(_) => unreachable!(),
            })
            .collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let all = self.counts(idx);
        let mut left = [0, 0];
        let mut best: Option<Candidate> = None;
        for w in 0..sorted.len() - 1 {
            left[sorted[w].1.index()] += 1;
            let (v, next) = (sorted[w].0, sorted[w + 1].0);
            if v == next {
                continue;
            }
            let right = [all[0] - left[0], all[1] - left[1]];
            if let Some(d) = self.decrease(parent, left, right) {
                if best.as_ref().is_none_or(|b| d > b.decrease) {
                    best = Some(Candidate {
                        feature,
                        test: SplitTest::Threshold(v + (next - v) / 2.0),
                        decrease: d,
                    });
                }
            }
        }
        best
    }

    fn best_categorical(&self, feature: Feature, idx: &[usize], parent: f64) -> Option<Candidate> {
        let mut per_cat: BTreeMap<&str, Counts> = BTreeMap::new();
        for &i in idx {
            if let FeatureValue::Category(c) = self.records[i].value(feature) {
                per_cat.entry(c).or_default()[self.labels[i].index()] += 1;
            }
        }
        if per_cat.len() < 2 {
            return None;
        }
        let all = self.counts(idx);
        let mut best: Option<Candidate> = None;
        for (cat, left) in per_cat {
            let right = [all[0] - left[0], all[1] - left[1]];
            if let Some(d) = self.decrease(parent, left, right) {
                if best.as_ref().is_none_or(|b| d > b.decrease) {
                    best = Some(Candidate {
                        feature,
                        test: SplitTest::Category(cat.to_string()),
                        decrease: d,
                    });
                }
            }
        }
        best
    }
}

fn goes_left(record: &TriageRecord, feature: Feature, test: &SplitTest) -> bool {
    match (record.value(feature), test) {
        (FeatureValue::Numeric(v), SplitTest::Threshold(t)) => v <= *t,
        (FeatureValue::Category(c), SplitTest::Category(cat)) => c == cat,
        _ => unreachable!("feature kind fixed by Feature"),
    }
}

/// Greedy CART on Gini impurity. Stops at `max_depth`, when a node has
/// fewer than `2 * min_leaf` samples, or when it is pure. Equal-gain
/// candidates resolve to the earlier feature, then the lower threshold or
/// the alphabetically first category.
pub fn train_tree(
    records: &[TriageRecord],
    labels: &[Severity],
    params: TreeParams,
) -> Result<DecisionTree> {
    if records.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} records but {} labels",
            records.len(),
            labels.len()
        )));
    }
    if params.max_depth == 0 || params.min_leaf == 0 {
        return Err(Error::config("max_depth and min_leaf must be >= 1"));
    }
    if records.len() < 2 * params.min_leaf {
        return Err(Error::invalid(format!(
            "need at least {} records for min_leaf={}, got {}",
            2 * params.min_leaf,
            params.min_leaf,
            records.len()
        )));
    }
    for r in records {
        r.validate()?;
    }
    let mut known: BTreeMap<Feature, BTreeSet<String>> = BTreeMap::new();
    let mut freq: BTreeMap<Feature, BTreeMap<String, usize>> = BTreeMap::new();
    for r in records {
        for f in Feature::ALL.into_iter().filter(|f| !f.is_numeric()) {
            if let FeatureValue::Category(c) = r.value(f) {
                known.entry(f).or_default().insert(c.to_string());
                *freq.entry(f).or_default().entry(c.to_string()).or_default() += 1;
            }
        }
    }
    let modes = freq
        .into_iter()
        .map(|(f, counts)| {
            // highest count, alphabetical on ties
            let mode = counts
                .into_iter()
                .fold((String::new(), 0), |best, (c, n)| if n > best.1 { (c, n) } else { best })
                .0;
            (f, mode)
        })
        .collect();
    let trainer = Trainer {
        records,
        labels,
        params,
    };
    Ok(DecisionTree {
        root: trainer.build((0..records.len()).collect(), 0),
        params,
        known,
        modes,
    })
}

/// Trains the reference tree from scratch and renders it with a
/// provenance header.
pub fn render_reference_tree() -> Result<String> {
    let (records, labels) = crate::data_io::synth_dengue(REFERENCE_SEED, REFERENCE_SAMPLES);
    let tree = train_tree(&records, &labels, TreeParams::default())?;
    let mut out = format!(
        "# CART triage tree trained on synth_dengue(seed={REFERENCE_SEED}, n={REFERENCE_SAMPLES})\n\
         # with max_depth={} and min_leaf={}. Synthetic data; not clinically validated.\n",
        tree.params.max_depth, tree.params.min_leaf
    );
    out.push_str(&tree.serialize());
    Ok(out)
}

/// Class probabilities from a leaf's count vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassProbabilities {
    #[serde(rename = "Mild")]
    pub mild: f64,
    #[serde(rename = "Severe")]
    pub severe: f64,
}

impl ClassProbabilities {
    pub fn get(&self, class: Severity) -> f64 {
        match class {
            Severity::Mild => self.mild,
            Severity::Severe => self.severe,
        }
    }

    /// Most likely class and its probability; an exact tie resolves to
    /// `Severe`.
    pub fn argmax(&self) -> (Severity, f64) {
        if self.mild > self.severe {
            (Severity::Mild, self.mild)
        } else {
            (Severity::Severe, self.severe)
        }
    }
}

impl DecisionTree {
    /// The tree shipped with the crate; [`render_reference_tree`]
    /// regenerates its file byte for byte.
    pub fn reference() -> &'static DecisionTree {
        static TREE: OnceLock<DecisionTree> = OnceLock::new();
        TREE.get_or_init(|| DecisionTree::parse(REFERENCE_TREE).expect("bundled tree is valid"))
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn params(&self) -> TreeParams {
        self.params
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn training_size(&self) -> usize {
        total(&self.root.counts())
    }

    pub fn mode(&self, feature: Feature) -> Option<&str> {
        self.modes.get(&feature).map(String::as_str)
    }

    fn leaf_for(&self, record: &TriageRecord) -> &Node {
        let mut node = &self.root;
        while let Node::Split {
            feature,
            test,
            default_left,
            left,
            right,
            ..
        } = node
        {
            let go_left = match record.value(*feature) {
                FeatureValue::Category(c)
                    if !self.known.get(feature).is_some_and(|k| k.contains(c)) =>
                {
                    *default_left
                }
                _ => goes_left(record, *feature, test),
            };
            node = if go_left { left } else { right };
        }
        node
    }

    /// Count vector of the leaf the record lands in.
    pub fn leaf_counts(&self, record: &TriageRecord) -> [usize; 2] {
        self.leaf_for(record).counts()
    }

    pub fn predict_proba(&self, record: &TriageRecord) -> Result<ClassProbabilities> {
        record.validate()?;
        let c = self.leaf_counts(record);
        let n = total(&c) as f64;
        Ok(ClassProbabilities {
            mild: c[0] as f64 / n,
            severe: c[1] as f64 / n,
        })
    }

    /// Stable plain-text rendering; [`DecisionTree::parse`] inverts it.
    pub fn serialize(&self) -> String {
        let mut out = String::from("cart-tree v1\n");
        out.push_str("classes\tMild\tSevere\n");
        let _ = writeln!(out, "max_depth\t{}", self.params.max_depth);
        let _ = writeln!(out, "min_leaf\t{}", self.params.min_leaf);
        for (f, cats) in &self.known {
            let _ = write!(out, "known\t{}", f.name());
            for c in cats {
                let _ = write!(out, "\t{c}");
            }
            out.push('\n');
        }
        for (f, m) in &self.modes {
            let _ = writeln!(out, "mode\t{}\t{m}", f.name());
        }
        out.push_str("nodes\n");
        write_node(&mut out, &self.root, 0);
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let bad = |line: usize, message: String| Error::Parse { line, message };
        match lines.next() {
            Some((_, "cart-tree v1")) => {}
            Some((n, other)) => return Err(bad(n, format!("unexpected header {other:?}"))),
            None => return Err(bad(0, "empty tree file".into())),
        }
        let mut params = TreeParams {
            max_depth: 0,
            min_leaf: 0,
        };
        let mut known: BTreeMap<Feature, BTreeSet<String>> = BTreeMap::new();
        let mut modes = BTreeMap::new();
        let mut node_lines = Vec::new();
        let mut in_nodes = false;
        for (n, line) in lines {
            if in_nodes {
                node_lines.push((n, line));
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let parse_usize = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| bad(n, format!("{s:?} is not a count")))
            };
            match fields[0] {
                "classes" if fields[1..] == ["Mild", "Severe"] => {}
                "max_depth" if fields.len() == 2 => params.max_depth = parse_usize(fields[1])?,
                "min_leaf" if fields.len() == 2 => params.min_leaf = parse_usize(fields[1])?,
                "known" if fields.len() >= 2 => {
                    let f: Feature = fields[1].parse().map_err(|e: Error| bad(n, e.to_string()))?;
                    known
                        .entry(f)
                        .or_default()
                        .extend(fields[2..].iter().map(|s| s.to_string()));
                }
                "mode" if fields.len() == 3 => {
                    let f: Feature = fields[1].parse().map_err(|e: Error| bad(n, e.to_string()))?;
                    modes.insert(f, fields[2].to_string());
                }
                "nodes" => in_nodes = true,
                _ => return Err(bad(n, format!("unrecognised line {line:?}"))),
            }
        }
        let mut pos = 0;
        let root = parse_node(&node_lines, &mut pos, 0)?;
        if pos != node_lines.len() {
            return Err(bad(node_lines[pos].0, "trailing node lines".into()));
        }
        let tree = DecisionTree {
            root,
            params,
            known,
            modes,
        };
        if tree.depth() > params.max_depth {
            return Err(bad(0, format!("tree depth {} exceeds max_depth", tree.depth())));
        }
        Ok(tree)
    }
}

fn write_counts(c: &Counts) -> String {
    format!("counts={},{}", c[0], c[1])
}

fn write_node(out: &mut String, node: &Node, depth: usize) {
    let indent = "  ".repeat(depth);
    match node {
        Node::Leaf { counts } => {
            let _ = writeln!(out, "{indent}leaf\t{}", write_counts(counts));
        }
        Node::Split {
            feature,
            test,
            counts,
            default_left,
            left,
            right,
        } => {
            let (op, value) = match test {
                SplitTest::Threshold(t) => ("<=", t.to_string()),
                SplitTest::Category(c) => ("==", c.clone()),
            };
            let default = if *default_left { "left" } else { "right" };
            let _ = writeln!(
                out,
                "{indent}split\t{}\t{op}\t{value}\t{}\tdefault={default}",
                feature.name(),
                write_counts(counts)
            );
            write_node(out, left, depth + 1);
            write_node(out, right, depth + 1);
        }
    }
}

fn parse_counts(s: &str, line: usize) -> Result<Counts> {
    let bad = || Error::Parse {
        line,
        message: format!("bad counts field {s:?}"),
    };
    let body = s.strip_prefix("counts=").ok_or_else(bad)?;
    let (a, b) = body.split_once(',').ok_or_else(bad)?;
    let counts = [a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?];
    if total(&counts) == 0 {
        return Err(bad());
    }
    Ok(counts)
}

fn parse_node(lines: &[(usize, &str)], pos: &mut usize, depth: usize) -> Result<Node> {
    let Some(&(n, raw)) = lines.get(*pos) else {
        return Err(Error::Parse {
            line: lines.last().map_or(0, |l| l.0),
            message: "missing node".into(),
        });
    };
    let bad = |message: String| Error::Parse { line: n, message };
    let indent = raw.len() - raw.trim_start_matches(' ').len();
    if indent != 2 * depth {
        return Err(bad(format!("expected indentation {} got {indent}", 2 * depth)));
    }
    *pos += 1;
    let fields: Vec<&str> = raw.trim_start_matches(' ').split('\t').collect();
    match fields.as_slice() {
        ["leaf", counts] => Ok(Node::Leaf {
            counts: parse_counts(counts, n)?,
        }),
        ["split", feature, op, value, counts, default] => {
            let feature: Feature = feature.parse().map_err(|e: Error| bad(e.to_string()))?;
            let test = match (*op, feature.is_numeric()) {
                ("<=", true) => SplitTest::Threshold(
                    value
                        .parse()
                        .map_err(|_| bad(format!("threshold {value:?} is not a number")))?,
                ),
                ("==", false) => SplitTest::Category(value.to_string()),
                _ => return Err(bad(format!("operator {op:?} does not fit feature {}", feature.name()))),
            };
            let default_left = match *default {
                "default=left" => true,
                "default=right" => false,
                other => return Err(bad(format!("bad default field {other:?}"))),
            };
            let counts = parse_counts(counts, n)?;
            let left = parse_node(lines, pos, depth + 1)?;
            let right = parse_node(lines, pos, depth + 1)?;
            let (l, r) = (left.counts(), right.counts());
            if [l[0] + r[0], l[1] + r[1]] != counts {
                return Err(bad("children counts do not sum to parent".into()));
            }
            Ok(Node::Split {
                feature,
                test,
                counts,
                default_left,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        _ => Err(bad(format!("unrecognised node {raw:?}"))),
    }
}

/// Normalised mean decrease in impurity per feature. All zeros for a
/// single-leaf tree.
pub fn gini_feature_importance(tree: &DecisionTree) -> BTreeMap<Feature, f64> {
    let mut raw: BTreeMap<Feature, f64> = Feature::ALL.iter().map(|&f| (f, 0.0)).collect();
    let n_total = tree.training_size() as f64;
    fn walk(node: &Node, n_total: f64, raw: &mut BTreeMap<Feature, f64>) {
        if let Node::Split {
            feature,
            counts,
            left,
            right,
            ..
        } = node
        {
            let n = total(counts);
            let (lc, rc) = (left.counts(), right.counts());
            let (nl, nr) = (total(&lc), total(&rc));
            let decrease = gini(counts, n)
                - (nl as f64 / n as f64) * gini(&lc, nl)
                - (nr as f64 / n as f64) * gini(&rc, nr);
            *raw.get_mut(feature).unwrap() += (n as f64 / n_total) * decrease;
            walk(left, n_total, raw);
            walk(right, n_total, raw);
        }
    }
    walk(&tree.root, n_total, &mut raw);
    let sum: f64 = raw.values().sum();
    if sum > 0.0 {
        raw.values_mut().for_each(|v| *v /= sum);
    }
    raw
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    English,
    Bangla,
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "english" => Ok(Language::English),
            "bangla" => Ok(Language::Bangla),
            other => Err(Error::invalid(format!("unsupported language {other:?}"))),
        }
    }
}

/// Recommendation message ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Message {
    Severe,
    Mild,
    Reroute,
}

impl Message {
    pub const ALL: [Message; 3] = [Message::Severe, Message::Mild, Message::Reroute];

    fn key(self) -> &'static str {
        match self {
            Message::Severe => "severe",
            Message::Mild => "mild",
            Message::Reroute => "reroute",
        }
    }
}

/// Localised strings keyed by message id (`data/strings.tsv`).
#[derive(Debug, Clone, PartialEq)]
pub struct StringTable {
    entries: BTreeMap<String, (String, String)>,
}

impl StringTable {
    pub fn builtin() -> &'static StringTable {
        static TABLE: OnceLock<StringTable> = OnceLock::new();
        TABLE.get_or_init(|| StringTable::parse(STRINGS_TABLE).expect("bundled strings are valid"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields[1].is_empty() || fields[2].is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected key, english and bangla columns".into(),
                });
            }
            entries.insert(fields[0].to_string(), (fields[1].to_string(), fields[2].to_string()));
        }
        for m in Message::ALL {
            if !entries.contains_key(m.key()) {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("missing message {:?}", m.key()),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, message: Message, language: Language) -> &str {
        let (en, bn) = &self.entries[message.key()];
        match language {
            Language::English => en,
            Language::Bangla => bn,
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriageResult {
    pub prediction: Severity,
    pub confidence: f64,
    pub recommendation: String,
    pub rerouted: bool,
    pub language: Language,
}

/// Whether a prediction at this confidence must go to a doctor.
pub fn needs_reroute(confidence: f64) -> bool {
    confidence < REROUTE_THRESHOLD
}

/// Triage a record with a trained tree.
pub fn triage(tree: &DecisionTree, record: &TriageRecord, language: Language) -> Result<TriageResult> {
    let probs = tree.predict_proba(record)?;
    let (prediction, confidence) = probs.argmax();
    let rerouted = needs_reroute(confidence);
    let message = match (rerouted, prediction) {
        (true, _) => Message::Reroute,
        (false, Severity::Severe) => Message::Severe,
        (false, Severity::Mild) => Message::Mild,
    };
    Ok(TriageResult {
        prediction,
        confidence,
        recommendation: StringTable::builtin().get(message, language).to_string(),
        rerouted,
        language,
    })
}

/// String-typed entry point. A missing `house_type` is imputed with the
/// tree's training mode.
pub fn assess_dengue_risk(
    age: f64,
    gender: &str,
    area_type: &str,
    district: &str,
    language: &str,
    model: &DecisionTree,
    house_type: Option<&str>,
) -> Result<TriageResult> {
    let language: Language = language.parse()?;
    let house_type = match house_type {
        Some(h) => h.to_string(),
        None => model
            .mode(Feature::HouseType)
            .ok_or_else(|| Error::invalid("house_type missing and model has no training mode"))?
            .to_string(),
    };
    let record = TriageRecord::new(age, gender.parse()?, area_type.parse()?, house_type, district)?;
    triage(model, &record, language)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(age: f64, district: &str) -> TriageRecord {
        TriageRecord::new(age, Gender::Male, AreaType::Urban, "building", district).unwrap()
    }

    fn age_separable() -> (Vec<TriageRecord>, Vec<Severity>) {
        let records: Vec<_> = (0..20).map(|i| rec(i as f64 * 2.0, "Dhaka")).collect();
        let labels = records
            .iter()
            .map(|r| if r.age < 10.0 { Severity::Severe } else { Severity::Mild })
            .collect();
        (records, labels)
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini_impurity(&[10, 0]).unwrap(), 0.0);
        assert_eq!(gini_impurity(&[5, 5]).unwrap(), 0.5);
        assert_eq!(gini_impurity(&[3, 1]).unwrap(), 0.375);
        assert!(gini_impurity(&[0, 0]).is_err());
    }

    #[test]
    fn age_separable_gives_depth_one_stump() {
        let (records, labels) = age_separable();
        let tree = train_tree(&records, &labels, TreeParams { max_depth: 4, min_leaf: 1 }).unwrap();
        assert_eq!(tree.depth(), 1);
        match tree.root() {
            Node::Split { feature, test, .. } => {
                assert_eq!(*feature, Feature::Age);
                assert_eq!(*test, SplitTest::Threshold(9.0));
            }
            other => panic!("{other:?}"),
        }
        for (r, l) in records.iter().zip(&labels) {
            assert_eq!(tree.predict_proba(r).unwrap().argmax().0, *l);
        }
        let imp = gini_feature_importance(&tree);
        assert_eq!(imp[&Feature::Age], 1.0);
        assert_eq!(imp[&Feature::District], 0.0);
    }

    #[test]
    fn single_class_gives_leaf() {
        let (records, _) = age_separable();
        let labels = vec![Severity::Mild; records.len()];
        let tree = train_tree(&records, &labels, TreeParams { max_depth: 3, min_leaf: 5 }).unwrap();
        assert_eq!(tree.depth(), 0);
        let p = tree.predict_proba(&records[0]).unwrap();
        assert_eq!(p.argmax(), (Severity::Mild, 1.0));
        assert!(gini_feature_importance(&tree).values().all(|&v| v == 0.0));
    }

    #[test]
    fn training_rejects_bad_input() {
        let (records, labels) = age_separable();
        assert!(train_tree(&records, &labels[1..], TreeParams::default()).is_err());
        assert!(train_tree(&records, &labels, TreeParams { max_depth: 3, min_leaf: 11 }).is_err());
        assert!(TriageRecord::new(130.0, Gender::Male, AreaType::Urban, "building", "Dhaka").is_err());
        assert!(TriageRecord::new(3.0, Gender::Male, AreaType::Urban, "", "Dhaka").is_err());
    }

    fn boundary_tree(severe: usize, mild: usize) -> DecisionTree {
        let text = format!(
            "cart-tree v1\nclasses\tMild\tSevere\nmax_depth\t1\nmin_leaf\t1\n\
             known\tdistrict\tDhaka\tSylhet\nmode\thouse_type\tbuilding\nnodes\n\
             split\tdistrict\t==\tDhaka\tcounts={},{}\tdefault=left\n  leaf\tcounts={mild},{severe}\n  leaf\tcounts=5,0\n",
            mild + 5,
            severe
        );
        DecisionTree::parse(&text).unwrap()
    }

    #[test]
    fn reroute_boundary() {
        for (severe, expect_reroute) in [(69, true), (70, false), (71, false)] {
            let tree = boundary_tree(severe, 100 - severe);
            let r = triage(&tree, &rec(30.0, "Dhaka"), Language::English).unwrap();
            assert_eq!(r.prediction, Severity::Severe);
            assert_eq!(r.rerouted, expect_reroute, "severe={severe}");
            assert_eq!(r.rerouted, r.confidence < 0.70);
            if expect_reroute {
                assert_eq!(r.recommendation, StringTable::builtin().get(Message::Reroute, Language::English));
            }
        }
    }

    #[test]
    fn leaf_proportions() {
        let tree = boundary_tree(8, 2);
        let p = tree.predict_proba(&rec(30.0, "Dhaka")).unwrap();
        assert!((p.severe - 0.8).abs() < 1e-12 && (p.mild - 0.2).abs() < 1e-12);
        let p = tree.predict_proba(&rec(30.0, "Sylhet")).unwrap();
        assert_eq!(p.mild, 1.0);
    }

    #[test]
    fn unseen_category_takes_default_branch() {
        let tree = boundary_tree(8, 2);
        // "Khulna" was never seen; the default branch is the left (Dhaka) leaf
        assert_eq!(tree.leaf_counts(&rec(30.0, "Khulna")), [2, 8]);
    }

    #[test]
    fn serialization_round_trip() {
        let (records, labels) = age_separable();
        let tree = train_tree(&records, &labels, TreeParams { max_depth: 3, min_leaf: 2 }).unwrap();
        let text = tree.serialize();
        let back = DecisionTree::parse(&text).unwrap();
        assert_eq!(back, tree);
        assert_eq!(back.serialize(), text);
    }

    #[test]
    fn parse_rejects_inconsistent_counts() {
        let text = "cart-tree v1\nmax_depth\t1\nmin_leaf\t1\nnodes\nsplit\tage\t<=\t5\tcounts=3,3\tdefault=left\n  leaf\tcounts=1,1\n  leaf\tcounts=1,1\n";
        assert!(matches!(DecisionTree::parse(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn language_contract() {
        let tree = boundary_tree(90, 10);
        let en = assess_dengue_risk(8.0, "male", "urban", "Dhaka", "english", &tree, None).unwrap();
        let bn = assess_dengue_risk(8.0, "male", "urban", "Dhaka", "bangla", &tree, None).unwrap();
        assert_eq!((en.prediction, en.confidence), (bn.prediction, bn.confidence));
        assert_ne!(en.recommendation, bn.recommendation);
        assert_eq!(en.recommendation, "Seek immediate medical attention");
        assert!(assess_dengue_risk(8.0, "male", "urban", "Dhaka", "french", &tree, None).is_err());
        assert!(assess_dengue_risk(8.0, "other", "urban", "Dhaka", "english", &tree, None).is_err());
    }

    #[test]
    fn string_table_complete() {
        let t = StringTable::builtin();
        for m in Message::ALL {
            for l in [Language::English, Language::Bangla] {
                assert!(!t.get(m, l).is_empty());
            }
        }
        assert_eq!(t.keys().count(), Message::ALL.len());
    }
}
