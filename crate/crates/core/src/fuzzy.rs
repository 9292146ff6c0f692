//! Mamdani fuzzy rule engine for ante-hoc maternal-risk explanations.
//!
//! Inputs are age, systolic blood pressure, blood sugar and heart rate.
//! Rule activation is the minimum of its antecedent memberships; fired
//! consequents are clipped at their activation, combined by pointwise max
//! and defuzzified by the centroid over a 1001-point grid on [0, 1].
//!
//! The bundled rule base (`data/fuzzy_rules.tsv`) is a reconstruction: only
//! two of its seven rules ("High BP AND High Blood Sugar" and "High Heart
//! Rate AND High BP") come from published examples, and the membership
//! breakpoints were chosen from clinical thresholds. The table can be
//! replaced with an edited copy via [`FuzzyEngine::from_path`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};

const BUILTIN_TABLE: &str = include_str!("../data/fuzzy_rules.tsv");
const GRID_POINTS: usize = 1001;
const NO_RULE_SCORE: f64 = 0.5;

/// Input variables in declaration order; `risk` is the output variable.
pub const INPUT_VARIABLES: [&str; 4] = ["age", "sbp", "bs", "hr"];
pub const OUTPUT_VARIABLE: &str = "risk";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trapezoid {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Trapezoid {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if [a, b, c, d].iter().any(|v| v.is_nan()) || !(a <= b && b <= c && c <= d) {
            return Err(Error::invalid(format!(
                "trapezoid breakpoints must satisfy a <= b <= c <= d, got {a} {b} {c} {d}"
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn membership(&self, x: f64) -> f64 {
        if x >= self.b && x <= self.c {
            1.0
        } else if x <= self.a || x >= self.d {
            0.0
        } else if x < self.b {
            (x - self.a) / (self.b - self.a)
        } else {
            (self.d - x) / (self.d - self.c)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinguisticVariable {
    pub name: String,
    /// Terms in table order.
    pub terms: Vec<(String, Trapezoid)>,
}

impl LinguisticVariable {
    pub fn term(&self, name: &str) -> Option<&Trapezoid> {
        self.terms.iter().find(|(t, _)| t == name).map(|(_, m)| m)
    }
}

/// Evaluates every term of `variable` at `x`.
pub fn fuzzify(variable: &LinguisticVariable, x: f64) -> BTreeMap<String, f64> {
    variable
        .terms
        .iter()
        .map(|(name, mf)| (name.clone(), mf.membership(x)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyRule {
    pub id: u32,
    /// (variable, term) pairs joined by AND.
    pub antecedent: Vec<(String, String)>,
    pub consequent: String,
    pub condition_text: String,
    pub outcome_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiredRule {
    pub id: u32,
    pub condition: String,
    pub outcome: String,
    pub activation: f64,
}

impl fmt::Display for FiredRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rule {}: {} -> {}", self.id, self.condition, self.outcome)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Vitals {
    pub age: f64,
    pub sbp: f64,
    pub bs: f64,
    pub hr: f64,
}

impl Vitals {
    pub fn new(age: f64, sbp: f64, bs: f64, hr: f64) -> Self {
        Self { age, sbp, bs, hr }
    }

    fn get(&self, variable: &str) -> f64 {
        match variable {
            "age" => self.age,
            "sbp" => self.sbp,
            "bs" => self.bs,
            "hr" => self.hr,
            _ => unreachable!("validated at load time"),
        }
    }

    fn check(&self) -> Result<()> {
        for v in INPUT_VARIABLES {
            if !self.get(v).is_finite() {
                return Err(Error::invalid(format!("{v} is not finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RiskLabel {
    #[serde(rename = "low risk")]
    Low,
    #[serde(rename = "mid risk")]
    Mid,
    #[serde(rename = "high risk")]
    High,
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskLabel::Low => "low risk",
            RiskLabel::Mid => "mid risk",
            RiskLabel::High => "high risk",
        })
    }
}

/// Tertile labels: below 0.33 low, below 0.66 mid, otherwise high.
pub fn score_to_label(score: f64) -> Result<RiskLabel> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::invalid(format!("score {score} outside [0, 1]")));
    }
    Ok(if score < 0.33 {
        RiskLabel::Low
    } else if score < 0.66 {
        RiskLabel::Mid
    } else {
        RiskLabel::High
    })
}

/// Immutable variables + rule base.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyEngine {
    variables: Vec<LinguisticVariable>,
    rules: Vec<FuzzyRule>,
}

impl FuzzyEngine {
    /// The bundled rule base, parsed once.
    pub fn builtin() -> &'static FuzzyEngine {
        static ENGINE: OnceLock<FuzzyEngine> = OnceLock::new();
        ENGINE.get_or_init(|| FuzzyEngine::from_table(BUILTIN_TABLE).expect("bundled table is valid"))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_table(&text)
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut variables: Vec<LinguisticVariable> = Vec::new();
        let mut rules = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            let bad = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            match fields[0] {
                "term" => {
                    if fields.len() != 7 {
                        return Err(bad(format!("term needs 7 fields, got {}", fields.len())));
                    }
                    let mut bp = [0.0; 4];
                    for (slot, f) in bp.iter_mut().zip(&fields[3..7]) {
                        *slot = f
                            .parse()
                            .map_err(|_| bad(format!("breakpoint {f:?} is not a number")))?;
                    }
                    let mf = Trapezoid::new(bp[0], bp[1], bp[2], bp[3])
                        .map_err(|e| bad(e.to_string()))?;
                    let var_name = fields[1];
                    if var_name != OUTPUT_VARIABLE && !INPUT_VARIABLES.contains(&var_name) {
                        return Err(bad(format!("unknown variable {var_name:?}")));
                    }
                    let var = match variables.iter_mut().find(|v| v.name == var_name) {
                        Some(v) => v,
                        None => {
                            variables.push(LinguisticVariable {
                                name: var_name.to_string(),
                                terms: Vec::new(),
                            });
                            variables.last_mut().unwrap()
                        }
                    };
                    if var.term(fields[2]).is_some() {
                        return Err(bad(format!("duplicate term {var_name}.{}", fields[2])));
                    }
                    var.terms.push((fields[2].to_string(), mf));
                }
                "rule" => {
                    if fields.len() != 6 {
                        return Err(bad(format!("rule needs 6 fields, got {}", fields.len())));
                    }
                    let id = fields[1]
                        .parse()
                        .map_err(|_| bad(format!("rule id {:?} is not an integer", fields[1])))?;
                    let antecedent = fields[3]
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|pair| {
                            pair.split_once('=')
                                .map(|(v, t)| (v.trim().to_string(), t.trim().to_string()))
                                .ok_or_else(|| bad(format!("antecedent {pair:?} is not var=term")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    rules.push((
                        line_no,
                        FuzzyRule {
                            id,
                            antecedent,
                            consequent: fields[2].to_string(),
                            condition_text: fields[4].to_string(),
                            outcome_text: fields[5].to_string(),
                        },
                    ));
                }
                other => return Err(bad(format!("unknown record kind {other:?}"))),
            }
        }

        let lookup = |var: &str, term: &str| {
            variables
                .iter()
                .find(|v| v.name == var)
                .and_then(|v| v.term(term))
                .is_some()
        };
        let mut checked = Vec::with_capacity(rules.len());
        for (line, rule) in rules {
            let bad = |message: String| Error::Parse { line, message };
            if rule.antecedent.is_empty() {
                return Err(bad(format!("rule {} has an empty antecedent", rule.id)));
            }
            for (v, t) in &rule.antecedent {
                if v == OUTPUT_VARIABLE || !lookup(v, t) {
                    return Err(bad(format!("rule {} references unknown input term {v}={t}", rule.id)));
                }
            }
            if !lookup(OUTPUT_VARIABLE, &rule.consequent) {
                return Err(bad(format!(
                    "rule {} consequent {:?} is not a risk term",
                    rule.id, rule.consequent
                )));
            }
            if checked.iter().any(|r: &FuzzyRule| r.id == rule.id) {
                return Err(bad(format!("duplicate rule id {}", rule.id)));
            }
            checked.push(rule);
        }
        Ok(Self {
            variables,
            rules: checked,
        })
    }

    /// Renders the engine back into the tab-separated table format.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for v in &self.variables {
            for (t, m) in &v.terms {
                out.push_str(&format!("term\t{}\t{t}\t{}\t{}\t{}\t{}\n", v.name, m.a, m.b, m.c, m.d));
            }
        }
        for r in &self.rules {
            let ante: Vec<String> = r.antecedent.iter().map(|(v, t)| format!("{v}={t}")).collect();
            out.push_str(&format!(
                "rule\t{}\t{}\t{}\t{}\t{}\n",
                r.id,
                r.consequent,
                ante.join(","),
                r.condition_text,
                r.outcome_text
            ));
        }
        out
    }

    pub fn variable(&self, name: &str) -> Option<&LinguisticVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn rules(&self) -> &[FuzzyRule] {
        &self.rules
    }

    /// Same variables with a different rule list.
    pub fn with_rules(&self, rules: Vec<FuzzyRule>) -> Self {
        Self {
            variables: self.variables.clone(),
            rules,
        }
    }

    fn membership(&self, var: &str, term: &str, x: f64) -> f64 {
        self.variable(var)
            .and_then(|v| v.term(term))
            .map_or(0.0, |m| m.membership(x))
    }

    fn activation(&self, rule: &FuzzyRule, vitals: &Vitals) -> f64 {
        rule.antecedent
            .iter()
            .map(|(v, t)| self.membership(v, t, vitals.get(v)))
            .fold(1.0, f64::min)
    }

    /// Rules with non-zero activation, strongest first, ties by id.
    pub fn fired_rules(&self, vitals: &Vitals) -> Result<Vec<FiredRule>> {
        vitals.check()?;
        let mut fired: Vec<FiredRule> = self
            .rules
            .iter()
            .filter_map(|r| {
                let activation = self.activation(r, vitals);
                (activation > 0.0).then(|| FiredRule {
                    id: r.id,
                    condition: r.condition_text.clone(),
                    outcome: r.outcome_text.clone(),
                    activation,
                })
            })
            .collect();
        fired.sort_by(|a, b| b.activation.total_cmp(&a.activation).then(a.id.cmp(&b.id)));
        Ok(fired)
    }

    /// Centroid-defuzzified risk in [0, 1]; 0.5 when no rule fires.
    pub fn risk_score(&self, vitals: &Vitals) -> Result<f64> {
        vitals.check()?;
        let risk = self
            .variable(OUTPUT_VARIABLE)
            .ok_or_else(|| Error::invalid("rule base has no risk variable"))?;
        let clipped: Vec<(&Trapezoid, f64)> = self
            .rules
            .iter()
            .filter_map(|r| {
                let a = self.activation(r, vitals);
                (a > 0.0).then(|| (risk.term(&r.consequent).expect("validated"), a))
            })
            .collect();
        if clipped.is_empty() {
            return Ok(NO_RULE_SCORE);
        }
        let (mut mass, mut moment) = (0.0, 0.0);
        for i in 0..GRID_POINTS {
            let x = i as f64 / (GRID_POINTS - 1) as f64;
            let mu = clipped
                .iter()
                .map(|(m, a)| m.membership(x).min(*a))
                .fold(0.0, f64::max);
            mass += mu;
            moment += mu * x;
        }
        if mass == 0.0 {
            return Ok(NO_RULE_SCORE);
        }
        Ok(moment / mass)
    }
}

/// Fired rules of the bundled rule base.
pub fn get_fired_rules(age: f64, sbp: f64, bs: f64, hr: f64) -> Result<Vec<FiredRule>> {
    FuzzyEngine::builtin().fired_rules(&Vitals::new(age, sbp, bs, hr))
}

/// Risk score of the bundled rule base.
pub fn risk_score(age: f64, sbp: f64, bs: f64, hr: f64) -> Result<f64> {
    FuzzyEngine::builtin().risk_score(&Vitals::new(age, sbp, bs, hr))
}
