//! CSV schemas, validating parsers, writers and seeded synthetic
//! generators for the three dataset shapes: maternal vitals, dengue
//! triage and flood-damage upazila tables.
//!
//! Dialect: comma separator, double-quote escaping, UTF-8, LF line
//! endings, header row first. Numbers are written in the shortest form
//! that parses back to the same `f64`.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::equity::{Region, UpazilaRecord};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::triage::{AreaType, Gender, Severity, TriageRecord};

/// Environment variable overriding the default data directory.
pub const DATA_DIR_ENV: &str = "TRUSTML_DATA_DIR";

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    /// Inclusive range; `integer` rejects fractional values.
    Numeric { min: f64, max: f64, integer: bool },
    /// Empty `allowed` accepts any non-empty value.
    Categorical { allowed: Vec<String> },
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub required: bool,
}

impl Column {
    fn numeric(name: &str, min: f64, max: f64, required: bool) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric {
                min,
                max,
                integer: false,
            },
            required,
        }
    }

    fn integer(name: &str, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric {
                min,
                max,
                integer: true,
            },
            required: true,
        }
    }

    fn categorical(name: &str, allowed: &[&str], required: bool) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical {
                allowed: allowed.iter().map(|s| s.to_string()).collect(),
            },
            required,
        }
    }

    fn text(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Text,
            required: true,
        }
    }

    fn parse_cell(&self, raw: &str) -> std::result::Result<Cell, String> {
        let raw = raw.trim();
        if raw.is_empty() {
            return if self.required {
                Err("required value is empty".into())
            } else {
                Ok(Cell::Missing)
            };
        }
        match &self.kind {
            ColumnKind::Numeric { min, max, integer } => {
                let v: f64 = raw.parse().map_err(|_| format!("{raw:?} is not a number"))?;
                if !v.is_finite() {
                    return Err(format!("{raw:?} is not finite"));
                }
                if v < *min || v > *max {
                    return Err(format!("{v} outside [{min}, {max}]"));
                }
                if *integer && v.fract() != 0.0 {
                    return Err(format!("{v} is not an integer"));
                }
                Ok(Cell::Number(v))
            }
            ColumnKind::Categorical { allowed } => {
                if allowed.is_empty() || allowed.iter().any(|a| a == raw) {
                    Ok(Cell::Category(raw.to_string()))
                } else {
                    Err(format!("{raw:?} not one of {allowed:?}"))
                }
            }
            ColumnKind::Text => Ok(Cell::Text(raw.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub name: &'static str,
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(name: &'static str, columns: Vec<Column>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::SchemaViolation(format!("duplicate column {:?}", c.name)));
            }
        }
        Ok(Self { name, columns })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Dengue triage records; `outcome` is the training label.
    pub fn dengue() -> Self {
        Self {
            name: "dengue",
            columns: vec![
                Column::numeric("age", 0.0, 120.0, true),
                Column::categorical("gender", &["male", "female"], true),
                Column::categorical("area_type", &["urban", "rural"], true),
                Column::categorical("house_type", &[], false),
                Column::text("district"),
                Column::categorical("outcome", &["Mild", "Severe"], false),
            ],
        }
    }

    /// Upazila flood-damage table; `priority` is the regression target.
    pub fn pdna() -> Self {
        Self {
            name: "pdna",
            columns: vec![
                Column::text("name"),
                Column::text("district"),
                Column::categorical("region_type", &["Haor", "non-Haor"], true),
                Column::numeric("poverty_rate", 0.0, 1.0, true),
                Column::numeric("damage_usd_m", 0.0, f64::MAX, true),
                Column::integer("affected_population", 0.0, 9.0e15),
                Column::numeric("priority", 0.0, 1.0, false),
            ],
        }
    }

    /// Maternal vital signs with a three-level risk label.
    pub fn maternal() -> Self {
        Self {
            name: "maternal",
            columns: vec![
                Column::numeric("Age", 0.0, 120.0, true),
                Column::numeric("SystolicBP", 40.0, 260.0, true),
                Column::numeric("DiastolicBP", 20.0, 200.0, true),
                Column::numeric("BS", 0.0, 40.0, true),
                Column::numeric("BodyTemp", 90.0, 110.0, true),
                Column::numeric("HeartRate", 20.0, 250.0, true),
                Column::categorical("RiskLevel", &["low risk", "mid risk", "high risk"], false),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Category(String),
    Text(String),
    Missing,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Category(s) | Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Number(v) => format_number(*v),
            Cell::Category(s) | Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }
}

/// Shortest round-trip representation of a number.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// 1-based line in the source file.
    pub line: u64,
    /// Cells in schema column order.
    pub cells: Vec<Cell>,
}

/// Rows that passed validation, plus everything that did not.
#[derive(Debug)]
pub struct Table {
    pub schema: Schema,
    pub rows: Vec<Row>,
    pub warnings: Vec<String>,
    pub errors: Vec<Error>,
}

impl Table {
    pub fn column<'a>(&'a self, name: &str) -> Result<impl Iterator<Item = &'a Cell> + 'a> {
        let i = self
            .schema
            .column_index(name)
            .ok_or_else(|| Error::SchemaViolation(format!("{} has no column {name:?}", self.schema.name)))?;
        Ok(self.rows.iter().map(move |r| &r.cells[i]))
    }

    /// Writes the schema's columns in order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record(self.schema.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            w.write_record(row.cells.iter().map(Cell::render))?;
        }
        flush(w)
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| Error::Csv(e.into()))
}

/// Validates a CSV file against `schema`. With `fail_fast` the first bad
/// row aborts; otherwise bad rows are dropped and listed in `errors`.
pub fn parse_csv(path: impl AsRef<Path>, schema: &Schema, fail_fast: bool) -> Result<Table> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_reader(file, schema, fail_fast)
}

pub fn parse_csv_str(text: &str, schema: &Schema, fail_fast: bool) -> Result<Table> {
    parse_csv_reader(text.as_bytes(), schema, fail_fast)
}

pub fn parse_csv_reader<R: Read>(input: R, schema: &Schema, fail_fast: bool) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let mut seen = BTreeSet::new();
    if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
        return Err(Error::SchemaViolation(format!("header repeats column {dup:?}")));
    }
    let missing: Vec<&str> = schema
        .columns
        .iter()
        .filter(|c| c.required && !header.contains(&c.name))
        .map(|c| c.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::SchemaViolation(format!(
            "{} file lacks required column(s): {}",
            schema.name,
            missing.join(", ")
        )));
    }
    let mut warnings = Vec::new();
    for extra in header.iter().filter(|h| schema.column_index(h).is_none()) {
        let msg = format!("ignoring column {extra:?} not in {} schema", schema.name);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let positions: Vec<Option<usize>> = schema
        .columns
        .iter()
        .map(|c| header.iter().position(|h| *h == c.name))
        .collect();

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let mut cells = Vec::with_capacity(schema.columns.len());
        let mut bad = None;
        for (col, pos) in schema.columns.iter().zip(&positions) {
            let raw = pos.and_then(|p| record.get(p)).unwrap_or("");
            match col.parse_cell(raw) {
                Ok(c) => cells.push(c),
                Err(message) => {
                    bad = Some(Error::Row {
                        line,
                        column: col.name.clone(),
                        message,
                    });
                    break;
                }
            }
        }
        match bad {
            None => rows.push(Row { line, cells }),
            Some(e) if fail_fast => return Err(e),
            Some(e) => errors.push(e),
        }
    }
    Ok(Table {
        schema: schema.clone(),
        rows,
        warnings,
        errors,
    })
}

fn cell<'a>(table: &Table, row: &'a Row, name: &str) -> &'a Cell {
    let i = table.schema.column_index(name).expect("column in schema");
    &row.cells[i]
}

fn text_cell<'a>(table: &Table, row: &'a Row, name: &str) -> &'a str {
    cell(table, row, name).as_str().unwrap_or("")
}

/// Converts a dengue-schema table; labels are present only if every row
/// has an outcome.
pub fn dengue_records(table: &Table) -> Result<(Vec<TriageRecord>, Option<Vec<Severity>>)> {
    if table.schema.name != "dengue" {
        return Err(Error::SchemaViolation(format!("expected dengue table, got {}", table.schema.name)));
    }
    let mut records = Vec::with_capacity(table.rows.len());
    let mut labels = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let house = match cell(table, row, "house_type") {
            Cell::Category(s) => s.clone(),
            _ => "unknown".to_string(),
        };
        records.push(TriageRecord {
            age: cell(table, row, "age").as_f64().unwrap_or_default(),
            gender: text_cell(table, row, "gender").parse::<Gender>()?,
            area_type: text_cell(table, row, "area_type").parse::<AreaType>()?,
            house_type: house,
            district: text_cell(table, row, "district").to_string(),
        });
        if let Some(s) = cell(table, row, "outcome").as_str() {
            labels.push(s.parse::<Severity>()?);
        }
    }
    let labels = (labels.len() == records.len() && !records.is_empty()).then_some(labels);
    Ok((records, labels))
}

/// Converts a flood-damage table; targets are present only if every row
/// has a priority.
pub fn pdna_records(table: &Table) -> Result<(Vec<UpazilaRecord>, Option<Vec<f64>>)> {
    if table.schema.name != "pdna" {
        return Err(Error::SchemaViolation(format!("expected pdna table, got {}", table.schema.name)));
    }
    let mut records = Vec::with_capacity(table.rows.len());
    let mut targets = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let num = |name| cell(table, row, name).as_f64().unwrap_or_default();
        records.push(UpazilaRecord {
            name: text_cell(table, row, "name").to_string(),
            district: text_cell(table, row, "district").to_string(),
            region_type: text_cell(table, row, "region_type").parse::<Region>()?,
            poverty_rate: num("poverty_rate"),
            damage_usd_m: num("damage_usd_m"),
            affected_population: num("affected_population") as u64,
        });
        if let Some(p) = cell(table, row, "priority").as_f64() {
            targets.push(p);
        }
    }
    let targets = (targets.len() == records.len() && !records.is_empty()).then_some(targets);
    Ok((records, targets))
}

pub fn write_dengue_csv<W: Write>(
    out: W,
    records: &[TriageRecord],
    labels: Option<&[Severity]>,
) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["age", "gender", "area_type", "house_type", "district", "outcome"])?;
    for (i, r) in records.iter().enumerate() {
        let outcome = labels.map(|l| l[i].to_string()).unwrap_or_default();
        w.write_record([
            format_number(r.age),
            r.gender.to_string(),
            r.area_type.to_string(),
            r.house_type.clone(),
            r.district.clone(),
            outcome,
        ])?;
    }
    flush(w)
}

pub fn write_pdna_csv<W: Write>(
    out: W,
    records: &[UpazilaRecord],
    targets: Option<&[f64]>,
) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record([
        "name",
        "district",
        "region_type",
        "poverty_rate",
        "damage_usd_m",
        "affected_population",
        "priority",
    ])?;
    for (i, r) in records.iter().enumerate() {
        w.write_record([
            r.name.clone(),
            r.district.clone(),
            r.region_type.to_string(),
            format_number(r.poverty_rate),
            format_number(r.damage_usd_m),
            r.affected_population.to_string(),
            targets.map(|t| format_number(t[i])).unwrap_or_default(),
        ])?;
    }
    flush(w)
}

/// All 64 districts of Bangladesh.
pub const DISTRICTS: [&str; 64] = [
    "Bagerhat", "Bandarban", "Barguna", "Barishal", "Bhola", "Bogura", "Brahmanbaria",
    "Chandpur", "Chapai Nawabganj", "Chattogram", "Chuadanga", "Cox's Bazar", "Cumilla",
    "Dhaka", "Dinajpur", "Faridpur", "Feni", "Gaibandha", "Gazipur", "Gopalganj", "Habiganj",
    "Jamalpur", "Jashore", "Jhalokati", "Jhenaidah", "Joypurhat", "Khagrachhari", "Khulna",
    "Kishoreganj", "Kurigram", "Kushtia", "Lakshmipur", "Lalmonirhat", "Madaripur", "Magura",
    "Manikganj", "Meherpur", "Moulvibazar", "Munshiganj", "Mymensingh", "Naogaon", "Narail",
    "Narayanganj", "Narsingdi", "Natore", "Netrokona", "Nilphamari", "Noakhali", "Pabna",
    "Panchagarh", "Patuakhali", "Pirojpur", "Rajbari", "Rajshahi", "Rangamati", "Rangpur",
    "Satkhira", "Shariatpur", "Sherpur", "Sirajganj", "Sunamganj", "Sylhet", "Tangail",
    "Thakurgaon",
];

/// Default size of a generated dengue table.
pub const DENGUE_DEFAULT_N: usize = 4700;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Synthetic dengue cases. Age dominates the severity log-odds (young
/// children and the elderly skew severe); district, house type and area
/// add smaller effects.
pub fn synth_dengue(seed: u64, n: usize) -> (Vec<TriageRecord>, Vec<Severity>) {
    let mut rng = SeededRng::new(seed);
    let others: Vec<&str> = DISTRICTS
        .iter()
        .copied()
        .filter(|d| !matches!(*d, "Dhaka" | "Chattogram"))
        .collect();
    let mut records = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let age = match rng.weighted_index(&[0.35, 0.50, 0.15]) {
            0 => rng.below(18),
            1 => 18 + rng.below(42),
            _ => 60 + rng.below(31),
        } as f64;
        let gender = if rng.bernoulli(0.5) {
            Gender::Male
        } else {
            Gender::Female
        };
        let area_type = if rng.bernoulli(0.65) {
            AreaType::Urban
        } else {
            AreaType::Rural
        };
        let house_type = ["building", "tinshed", "other"][rng.weighted_index(&[0.45, 0.35, 0.20])];
        let district = match rng.weighted_index(&[0.40, 0.12, 0.48]) {
            0 => "Dhaka",
            1 => "Chattogram",
            _ => others[rng.below(others.len() as u64) as usize],
        };

        let mut z = -0.9;
        z += if age < 12.0 {
            2.2
        } else if age < 18.0 {
            1.0
        } else if age >= 60.0 {
            1.8
        } else {
            0.0
        };
        z += match district {
            "Dhaka" => 0.5,
            "Chattogram" => 0.3,
            _ => 0.0,
        };
        z += match house_type {
            "tinshed" => 0.4,
            "other" => 0.2,
            _ => 0.0,
        };
        if area_type == AreaType::Urban {
            z += 0.1;
        }
        labels.push(if rng.bernoulli(sigmoid(z)) {
            Severity::Severe
        } else {
            Severity::Mild
        });
        records.push(TriageRecord {
            age,
            gender,
            area_type,
            house_type: house_type.to_string(),
            district: district.to_string(),
        });
    }
    (records, labels)
}

/// Rows in a generated flood-damage table.
pub const PDNA_ROWS: usize = 87;

const HAOR_DISTRICTS: [&str; 7] = [
    "Sunamganj",
    "Sylhet",
    "Habiganj",
    "Moulvibazar",
    "Netrokona",
    "Kishoreganj",
    "Brahmanbaria",
];
const RIVERINE_DISTRICTS: [&str; 4] = ["Kurigram", "Gaibandha", "Jamalpur", "Sirajganj"];

/// Composite priority target: min-max scaled log damage, poverty and log
/// affected population, weighted 0.5 / 0.3 / 0.2.
pub fn composite_priority(records: &[UpazilaRecord]) -> Vec<f64> {
    let columns: [Vec<f64>; 3] = [
        records.iter().map(|r| r.damage_usd_m.ln_1p()).collect(),
        records.iter().map(|r| r.poverty_rate).collect(),
        records.iter().map(|r| (r.affected_population as f64).ln_1p()).collect(),
    ];
    let scaled: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            c.iter().map(|v| if span > 0.0 { (v - lo) / span } else { 0.5 }).collect()
        })
        .collect();
    (0..records.len())
        .map(|i| 0.5 * scaled[0][i] + 0.3 * scaled[1][i] + 0.2 * scaled[2][i])
        .collect()
}

/// Synthetic 87-upazila flood-damage table with composite targets.
///
/// Two fixed Haor anchor rows (Sunamganj, Sylhet) carry the largest
/// losses; the other 85 rows are drawn so that Haor upazilas are poorer
/// and harder hit than riverine ones, which is the regional bias a
/// debiased ranker should reduce.
pub fn synth_pdna(seed: u64) -> (Vec<UpazilaRecord>, Vec<f64>) {
    let mut rng = SeededRng::new(seed);
    let mut records = vec![
        UpazilaRecord {
            name: "Sunamganj".into(),
            district: "Sunamganj".into(),
            region_type: Region::Haor,
            poverty_rate: 0.427,
            damage_usd_m: 159.6,
            affected_population: 2_100_000,
        },
        UpazilaRecord {
            name: "Sylhet".into(),
            district: "Sylhet".into(),
            region_type: Region::Haor,
            poverty_rate: 0.381,
            damage_usd_m: 96.4,
            affected_population: 1_800_000,
        },
    ];
    let districts: Vec<(&str, Region)> = HAOR_DISTRICTS
        .iter()
        .map(|d| (*d, Region::Haor))
        .chain(RIVERINE_DISTRICTS.iter().map(|d| (*d, Region::NonHaor)))
        .collect();
    let mut per_district = vec![0usize; districts.len()];
    for i in 0..PDNA_ROWS - records.len() {
        let k = i % districts.len();
        let (district, region) = districts[k];
        per_district[k] += 1;
        let (pov_mean, dmg_median, pop_median) = match region {
            Region::Haor => (0.32, 35.0, 260_000.0),
            Region::NonHaor => (0.21, 14.0, 200_000.0),
        };
        let poverty = rng.normal(pov_mean, 0.05).clamp(0.05, 0.42);
        let damage = (dmg_median * rng.normal(0.0, 0.5).exp()).min(70.0);
        let people = pop_median * rng.normal(0.0, 0.35).exp();
        records.push(UpazilaRecord {
            name: format!("{district}-{:02}", per_district[k]),
            district: district.into(),
            region_type: region,
            poverty_rate: (poverty * 1000.0).round() / 1000.0,
            damage_usd_m: (damage * 10.0).round() / 10.0,
            affected_population: people.round() as u64,
        });
    }
    let targets = composite_priority(&records);
    (records, targets)
}

/// Seed of the bundled flood-damage fixture.
pub const PDNA_FIXTURE_SEED: u64 = 0;

const PDNA_FIXTURE: &str = include_str!("../data/pdna_fixture.csv");

/// The bundled flood-damage fixture and its targets.
pub fn bundled_pdna() -> (Vec<UpazilaRecord>, Vec<f64>) {
    let table = parse_csv_str(PDNA_FIXTURE, &Schema::pdna(), true).expect("bundled fixture is valid");
    let (records, targets) = pdna_records(&table).expect("bundled fixture is valid");
    (records, targets.expect("bundled fixture has targets"))
}

/// Renders `synth_pdna(PDNA_FIXTURE_SEED)` as the bundled CSV.
pub fn render_pdna_fixture() -> Result<String> {
    let (records, targets) = synth_pdna(PDNA_FIXTURE_SEED);
    let mut buf = Vec::new();
    write_pdna_csv(&mut buf, &records, Some(&targets))?;
    Ok(String::from_utf8(buf).expect("csv writer emits UTF-8"))
}

/// Per-user directory searched for real CSVs: `$TRUSTML_DATA_DIR`, else
/// `~/.trustml/data`.
pub fn default_data_dir() -> Option<PathBuf> {
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV).filter(|d| !d.is_empty()) {
        return Some(PathBuf::from(dir));
    }
    std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".trustml").join("data"))
}

/// Existing paths are used as is; bare relative names fall back to the
/// data directory.
pub fn resolve_input(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    match default_data_dir().map(|d| d.join(path)) {
        Some(candidate) if candidate.exists() => candidate,
        _ => path.to_path_buf(),
    }
}
