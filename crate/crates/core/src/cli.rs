//! Batch command-line front end.
//!
//! Standard output carries only the payload (JSON documents, JSON lines or
//! listing text); diagnostics go to standard error. Exit codes: 0 success,
//! 2 usage error, 3 input or schema error, 4 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data_io::{self, Schema};
use crate::equity::{self, DebiasConfig, PriorityRanking, Region, RankingShift};
use crate::error::{Error, Result};
use crate::fairness::{self, FairnessReport};
use crate::fedsim::{self, AggregationMode, FederatedConfig};
use crate::fuzzy::{self, FiredRule, FuzzyEngine, RiskLabel, Vitals};
use crate::output;
use crate::privacy::{ClipConfig, Epsilon, PrivacyBudget};
use crate::triage::{self, DecisionTree};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "trustml", version, about = "Fairness, privacy and explainability tools for health data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Group fairness report for binary predictions in a CSV file.
    Audit(AuditArgs),
    /// Federated logistic regression on synthetic clients; one JSON line per round.
    Fedsim(FedsimArgs),
    /// Fuzzy clinical rules fired by a set of vital signs.
    Explain(ExplainArgs),
    /// Dengue severity triage with confidence-based rerouting.
    Triage(TriageArgs),
    /// Debiased flood-aid priority ranking.
    RankAid(RankAidArgs),
    /// Write a synthetic data set as CSV.
    GenData(GenDataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, clap::Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Column of 0/1 predictions.
    #[arg(long)]
    pub pred_col: String,
    /// Sensitive attribute column(s); several are crossed into composite groups.
    #[arg(long, value_delimiter = ',', required = true)]
    pub group_cols: Vec<String>,
    /// Column of 0/1 ground truth; enables the equalized odds difference.
    #[arg(long)]
    pub truth_col: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub min_group_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Dense,
    Sparse,
    #[value(name = "sparse_dp")]
    SparseDp,
}

#[derive(Debug, clap::Args)]
pub struct FedsimArgs {
    #[arg(long, value_enum, default_value = "dense")]
    pub mode: ModeArg,
    /// Fraction of coordinates dropped per upload (sparse modes; default 0.9).
    #[arg(long)]
    pub sparsity: Option<f64>,
    /// Privacy budget epsilon, or "inf" (sparse_dp; default 1).
    #[arg(long)]
    pub epsilon: Option<Epsilon>,
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 30)]
    pub rounds: usize,
    #[arg(long, default_value_t = 4)]
    pub clients: usize,
    #[arg(long, default_value_t = 5)]
    pub local_epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    pub samples_per_client: usize,
    #[arg(long, default_value_t = 10)]
    pub features: usize,
    #[arg(long, default_value_t = 0.0)]
    pub heterogeneity: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, clap::Args)]
pub struct ExplainArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub age: f64,
    /// Systolic blood pressure, mmHg.
    #[arg(long, allow_negative_numbers = true)]
    pub sbp: f64,
    /// Blood sugar, mmol/L.
    #[arg(long, allow_negative_numbers = true)]
    pub bs: f64,
    /// Heart rate, beats per minute.
    #[arg(long, allow_negative_numbers = true)]
    pub hr: f64,
    /// Alternative rule table (same TSV format as the built-in one).
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, clap::Args)]
pub struct TriageArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub age: f64,
    #[arg(long)]
    pub gender: String,
    #[arg(long)]
    pub area_type: String,
    #[arg(long)]
    pub district: String,
    /// Defaults to the model's most common training value.
    #[arg(long)]
    pub house_type: Option<String>,
    #[arg(long, default_value = "english")]
    pub language: String,
    /// Serialized tree; defaults to the bundled reference tree.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct RankAidArgs {
    /// Upazila CSV; the bundled 87-row fixture when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Only list the first K ranks in text output.
    #[arg(long)]
    pub top: Option<usize>,
    /// Annotate each rank with its region.
    #[arg(long)]
    pub verbose: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Dengue,
    Pdna,
    Clients,
}

#[derive(Debug, clap::Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub kind: DataKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rows (dengue) or samples per client (clients); pdna is always 87 rows.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) => EXIT_USAGE,
        Error::TrainingDiverged { .. } => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns
/// the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let to_stdout = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let text = e.render().to_string();
            if to_stdout {
                let _ = stdout.write_all(text.as_bytes());
                return EXIT_OK;
            }
            let _ = stderr.write_all(text.as_bytes());
            return EXIT_USAGE;
        }
    };
    match execute(&cli.command) {
        Ok(payload) => match stdout.write_all(payload.as_bytes()) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(stderr, "error: writing output: {e}");
                EXIT_INPUT
            }
        },
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command and returns its standard-output payload.
pub fn execute(command: &Command) -> Result<String> {
    match command {
        Command::Audit(a) => output::document(&audit(a)?),
        Command::Fedsim(a) => fedsim_cmd(a),
        Command::Explain(a) => explain(a),
        Command::Triage(a) => triage_cmd(a),
        Command::RankAid(a) => rank_aid(a),
        Command::GenData(a) => gen_data(a),
    }
}

fn binary_cell(raw: &str, line: u64, column: &str) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Row {
            line,
            column: column.to_string(),
            message: format!("{other:?} is not 0 or 1"),
        }),
    }
}

/// Fairness report for the columns named in `args`.
pub fn audit(args: &AuditArgs) -> Result<FairnessReport> {
    let path = data_io::resolve_input(&args.input);
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let index = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaViolation(format!("{} has no column {name:?}", path.display())))
    };
    let pred = index(&args.pred_col)?;
    let truth = args.truth_col.as_deref().map(index).transpose()?;
    let groups: Vec<usize> = args.group_cols.iter().map(|g| index(g)).collect::<Result<_>>()?;

    let mut predictions = Vec::new();
    let mut truths = Vec::new();
    let mut attributes: Vec<Vec<String>> = vec![Vec::new(); groups.len()];
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |i: usize| record.get(i).unwrap_or("");
        predictions.push(binary_cell(get(pred), line, &args.pred_col)?);
        if let (Some(t), Some(name)) = (truth, &args.truth_col) {
            truths.push(binary_cell(get(t), line, name)?);
        }
        for (col, &i) in attributes.iter_mut().zip(&groups) {
            col.push(get(i).trim().to_string());
        }
    }
    let truths = truth.map(|_| truths);
    fairness::intersectional_fairness(&predictions, truths.as_deref(), &attributes, args.min_group_size)
}

fn fedsim_config(args: &FedsimArgs) -> Result<(FederatedConfig, AggregationMode)> {
    let mode = match args.mode {
        ModeArg::Dense => AggregationMode::Dense,
        ModeArg::Sparse => AggregationMode::Sparse,
        ModeArg::SparseDp => AggregationMode::SparseDp,
    };
    if mode != AggregationMode::SparseDp && args.epsilon.is_some() {
        log::warn!("--epsilon only applies to --mode sparse_dp; ignoring it");
    }
    if mode == AggregationMode::Dense && args.sparsity.is_some() {
        log::warn!("--sparsity does not apply to --mode dense; ignoring it");
    }
    let budget = match mode {
        AggregationMode::SparseDp => {
            PrivacyBudget::new(args.epsilon.unwrap_or(Epsilon::Finite(1.0)), args.delta)?
        }
        _ => PrivacyBudget::disabled(),
    };
    let sparsity = match mode {
        AggregationMode::Dense => 0.0,
        _ => args.sparsity.unwrap_or(0.9),
    };
    let config = FederatedConfig {
        num_clients: args.clients,
        rounds: args.rounds,
        local_epochs: args.local_epochs,
        learning_rate: args.learning_rate,
        sparsity,
        budget,
        clip: ClipConfig::new(args.clip)?,
        seed: args.seed,
        samples_per_client: args.samples_per_client,
        num_features: args.features,
        heterogeneity: args.heterogeneity,
        ..FederatedConfig::default()
    };
    config.validate()?;
    Ok((config, mode))
}

fn fedsim_cmd(args: &FedsimArgs) -> Result<String> {
    let (config, mode) = fedsim_config(args)?;
    let run = fedsim::run_federated(&config, mode)?;
    let mut out = String::new();
    for m in &run.history {
        out.push_str(&output::line(m)?);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Explanation {
    pub fired_rules: Vec<FiredRule>,
    pub risk_score: f64,
    pub risk_label: RiskLabel,
}

/// Fired rules, score and label for one set of vitals.
pub fn explanation(engine: &FuzzyEngine, vitals: &Vitals) -> Result<Explanation> {
    let risk_score = engine.risk_score(vitals)?;
    Ok(Explanation {
        fired_rules: engine.fired_rules(vitals)?,
        risk_score,
        risk_label: fuzzy::score_to_label(risk_score)?,
    })
}

/// Listing text: one `Rule N: condition -> OUTCOME` line per fired rule,
/// then the score and label.
pub fn explanation_text(e: &Explanation) -> String {
    let mut out = String::new();
    if e.fired_rules.is_empty() {
        out.push_str("No rules fired\n");
    }
    for r in &e.fired_rules {
        let _ = writeln!(out, "{r}");
    }
    let _ = writeln!(out, "risk_score: {}", output::fixed(e.risk_score, 4));
    let _ = writeln!(out, "risk_label: {}", e.risk_label);
    out
}

fn explain(args: &ExplainArgs) -> Result<String> {
    let loaded;
    let engine = match &args.rules {
        Some(p) => {
            loaded = FuzzyEngine::from_path(data_io::resolve_input(p))?;
            &loaded
        }
        None => FuzzyEngine::builtin(),
    };
    let e = explanation(engine, &Vitals::new(args.age, args.sbp, args.bs, args.hr))?;
    match args.format {
        Format::Text => Ok(explanation_text(&e)),
        Format::Json => output::document(&e),
    }
}

fn triage_cmd(args: &TriageArgs) -> Result<String> {
    let loaded;
    let model = match &args.model {
        Some(p) => {
            loaded = DecisionTree::load(data_io::resolve_input(p))?;
            &loaded
        }
        None => DecisionTree::reference(),
    };
    let result = triage::assess_dengue_risk(
        args.age,
        &args.gender,
        &args.area_type,
        &args.district,
        &args.language,
        model,
        args.house_type.as_deref(),
    )?;
    output::document(&result)
}

#[derive(Debug, Serialize)]
pub struct RegionalMetrics {
    pub baseline: f64,
    pub fair: f64,
}

#[derive(Debug, Serialize)]
pub struct RankAidReport {
    pub lambda: f64,
    pub seed: u64,
    pub ranking: PriorityRanking,
    pub shift: RankingShift,
    pub statistical_parity_difference: RegionalMetrics,
    pub regional_fairness_gap: RegionalMetrics,
}

/// Trains the baseline (lambda 0) and debiased models and compares them.
pub fn rank_aid_report(
    records: &[equity::UpazilaRecord],
    targets: &[f64],
    config: &DebiasConfig,
) -> Result<RankAidReport> {
    let baseline_cfg = DebiasConfig {
        lambda: 0.0,
        ..*config
    };
    let baseline = equity::train_fair_regressor(records, targets, &baseline_cfg)?;
    let fair = equity::train_fair_regressor(records, targets, config)?;
    let regions: Vec<Region> = records.iter().map(|r| r.region_type).collect();
    let (bs, fs) = (baseline.scores(records), fair.scores(records));
    let base_rank = PriorityRanking::from_scores(records, &bs)?;
    let ranking = PriorityRanking::from_scores(records, &fs)?;
    Ok(RankAidReport {
        lambda: config.lambda,
        seed: config.seed,
        shift: equity::ranking_shift(&base_rank, &ranking)?,
        ranking,
        statistical_parity_difference: RegionalMetrics {
            baseline: equity::statistical_parity_difference(&bs, &regions)?,
            fair: equity::statistical_parity_difference(&fs, &regions)?,
        },
        regional_fairness_gap: RegionalMetrics {
            baseline: equity::regional_fairness_gap(&bs, targets, &regions)?,
            fair: equity::regional_fairness_gap(&fs, targets, &regions)?,
        },
    })
}

fn load_pdna(path: Option<&Path>) -> Result<(Vec<equity::UpazilaRecord>, Vec<f64>)> {
    let Some(path) = path else {
        return Ok(data_io::bundled_pdna());
    };
    let table = data_io::parse_csv(data_io::resolve_input(path), &Schema::pdna(), true)?;
    let (records, targets) = data_io::pdna_records(&table)?;
    let targets = match targets {
        Some(t) => t,
        None => {
            log::warn!("no priority column; using the composite damage/poverty/population target");
            data_io::composite_priority(&records)
        }
    };
    Ok((records, targets))
}

fn rank_aid(args: &RankAidArgs) -> Result<String> {
    let (records, targets) = load_pdna(args.input.as_deref())?;
    let defaults = DebiasConfig::default();
    let config = DebiasConfig {
        lambda: args.lambda,
        seed: args.seed,
        epochs: args.epochs.unwrap_or(defaults.epochs),
        ..defaults
    };
    let report = rank_aid_report(&records, &targets, &config)?;
    match args.format {
        Format::Json => output::document(&report),
        Format::Text => {
            let mut shown = report.ranking.clone();
            if let Some(k) = args.top {
                shown.entries.truncate(k);
            }
            let mut out = shown.to_text(args.verbose);
            let r = &report;
            let _ = writeln!(out);
            let _ = writeln!(out, "changed_fraction: {}", output::fixed(r.shift.changed_fraction, 4));
            let _ = writeln!(
                out,
                "statistical_parity_difference: baseline={} fair={}",
                output::fixed(r.statistical_parity_difference.baseline, 4),
                output::fixed(r.statistical_parity_difference.fair, 4)
            );
            let _ = writeln!(
                out,
                "regional_fairness_gap: baseline={} fair={}",
                output::fixed(r.regional_fairness_gap.baseline, 4),
                output::fixed(r.regional_fairness_gap.fair, 4)
            );
            Ok(out)
        }
    }
}

#[derive(Debug, Serialize)]
struct Written {
    kind: &'static str,
    seed: u64,
    rows: usize,
    path: String,
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn gen_data(args: &GenDataArgs) -> Result<String> {
    let (kind, rows) = match args.kind {
        DataKind::Dengue => {
            let n = args.n.unwrap_or(data_io::DENGUE_DEFAULT_N);
            if n == 0 {
                return Err(Error::config("--n must be >= 1"));
            }
            let (records, labels) = data_io::synth_dengue(args.seed, n);
            data_io::write_dengue_csv(create(&args.out)?, &records, Some(&labels))?;
            ("dengue", n)
        }
        DataKind::Pdna => {
            if args.n.is_some_and(|n| n != data_io::PDNA_ROWS) {
                return Err(Error::config(format!("pdna tables always have {} rows", data_io::PDNA_ROWS)));
            }
            let (records, targets) = data_io::synth_pdna(args.seed);
            data_io::write_pdna_csv(create(&args.out)?, &records, Some(&targets))?;
            ("pdna", records.len())
        }
        DataKind::Clients => {
            let config = FederatedConfig {
                seed: args.seed,
                samples_per_client: args.n.unwrap_or(FederatedConfig::default().samples_per_client),
                ..FederatedConfig::default()
            };
            let clients = fedsim::partition_synthetic(&config)?;
            let rows = write_clients_csv(create(&args.out)?, &clients)?;
            ("clients", rows)
        }
    };
    output::document(&Written {
        kind,
        seed: args.seed,
        rows,
        path: args.out.display().to_string(),
    })
}

fn write_clients_csv<W: Write>(out: W, clients: &[fedsim::ClientDataset]) -> Result<usize> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let d = clients.first().map_or(0, |c| c.num_features());
    let mut header = vec!["client_id".to_string()];
    header.extend((0..d).map(|j| format!("x{j}")));
    header.push("label".into());
    w.write_record(&header)?;
    let mut rows = 0;
    for c in clients {
        for (x, y) in c.features.iter().zip(&c.labels) {
            let mut rec = vec![c.client_id.to_string()];
            rec.extend(x.iter().map(|v| data_io::format_number(*v)));
            rec.push(y.to_string());
            w.write_record(&rec)?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("trustml").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_args(&[]).0, EXIT_USAGE);
        assert_eq!(run_args(&["explain", "--age", "1"]).0, EXIT_USAGE);
        let (code, out, err) = run_args(&["audit", "--bogus"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(out.is_empty() && !err.is_empty());
    }

    #[test]
    fn help_goes_to_stdout() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("rank-aid"));
    }

    #[test]
    fn bad_epsilon_is_usage_error() {
        let (code, out, err) = run_args(&["fedsim", "--mode", "sparse_dp", "--epsilon", "-1", "--rounds", "1"]);
        assert_eq!(code, EXIT_USAGE, "{err}");
        assert!(out.is_empty());
    }

    #[test]
    fn missing_file_is_input_error() {
        let (code, _, err) = run_args(&[
            "audit", "--input", "/nonexistent/x.csv", "--pred-col", "p", "--group-cols", "g",
        ]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.starts_with("error:"));
    }

    #[test]
    fn invalid_triage_value_is_input_error() {
        let (code, out, _) = run_args(&[
            "triage", "--age", "8", "--gender", "robot", "--area-type", "urban", "--district", "Dhaka",
        ]);
        assert_eq!(code, EXIT_INPUT);
        assert!(out.is_empty());
    }

    #[test]
    fn divergence_maps_to_numeric_exit() {
        assert_eq!(exit_code(&Error::TrainingDiverged { epoch: 3 }), EXIT_NUMERIC);
    }
}
