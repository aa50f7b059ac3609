//! Long-format CSV ingestion and report rendering.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::inference::{TestResult, ThresholdSearchResult};
use crate::montecarlo::{AccuracyTable, SizePowerTable};
use crate::panel::{PanelData, Unit};

/// Column names of a long-format panel file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelSchema {
    pub unit_col: String,
    pub time_col: String,
    pub y_col: String,
    pub x_col: String,
    pub delimiter: u8,
}

impl Default for PanelSchema {
    fn default() -> Self {
        PanelSchema {
            unit_col: "unit".into(),
            time_col: "time".into(),
            y_col: "y".into(),
            x_col: "x".into(),
            delimiter: b',',
        }
    }
}

impl PanelSchema {
    pub fn validate(&self) -> Result<()> {
        let names = [&self.unit_col, &self.time_col, &self.y_col, &self.x_col];
        let distinct: HashSet<&&String> = names.iter().collect();
        if distinct.len() != 4 {
            return Err(Error::InvalidConfig(
                "schema column names must be distinct".into(),
            ));
        }
        Ok(())
    }
}

impl FromStr for PanelSchema {
    type Err = Error;

    /// `unit,time,y,x` column names in that order.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [unit, time, y, x] = parts.as_slice() else {
            return Err(Error::InvalidConfig(format!(
                "schema needs four comma-separated column names (unit,time,y,x), got `{s}`"
            )));
        };
        let schema = PanelSchema {
            unit_col: unit.to_string(),
            time_col: time.to_string(),
            y_col: y.to_string(),
            x_col: x.to_string(),
            ..PanelSchema::default()
        };
        schema.validate()?;
        Ok(schema)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_panel_csv(path: &Path, schema: &PanelSchema) -> Result<PanelData> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_panel(file, schema)
}

#[derive(Debug, Clone, PartialEq)]
enum TimeKey {
    Num(f64),
    Text(String),
}

impl TimeKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self, other) {
            (TimeKey::Num(a), TimeKey::Num(b)) => a.total_cmp(b),
            (TimeKey::Text(a), TimeKey::Text(b)) => a.cmp(b),
            (TimeKey::Num(_), TimeKey::Text(_)) => std::cmp::Ordering::Less,
            (TimeKey::Text(_), TimeKey::Num(_)) => std::cmp::Ordering::Greater,
        }
    }
}

/// Reads a long-format panel. Units are ordered by id and observations by
/// time within each unit; times sort numerically when every time value is
/// numeric and as text otherwise. Row numbers in errors are file lines.
pub fn read_panel<R: Read>(reader: R, schema: &PanelSchema) -> Result<PanelData> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (ui, ti, yi, xi) = (
        col(&schema.unit_col)?,
        col(&schema.time_col)?,
        col(&schema.y_col)?,
        col(&schema.x_col)?,
    );

    struct Row {
        unit: String,
        time: String,
        y: f64,
        x: f64,
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize, name: &str| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonFiniteValue {
                    row: line,
                    column: name.to_string(),
                })
        };
        rows.push(Row {
            unit: field(ui).to_string(),
            time: field(ti).to_string(),
            y: num(yi, &schema.y_col)?,
            x: num(xi, &schema.x_col)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let numeric_time = rows
        .iter()
        .all(|r| r.time.parse::<f64>().is_ok_and(f64::is_finite));
    let key = |s: &str| match numeric_time {
        true => TimeKey::Num(s.parse().expect("checked numeric")),
        false => TimeKey::Text(s.to_string()),
    };

    let mut grouped: BTreeMap<String, Vec<(TimeKey, String, f64, f64)>> = BTreeMap::new();
    for r in rows {
        if r.unit.is_empty() {
            return Err(Error::EmptyUnit(String::new()));
        }
        grouped
            .entry(r.unit)
            .or_default()
            .push((key(&r.time), r.time, r.y, r.x));
    }
    let mut units = Vec::with_capacity(grouped.len());
    for (id, mut obs) in grouped {
        obs.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateKey {
                unit: id,
                time: w[1].1.clone(),
            });
        }
        let y = obs.iter().map(|o| o.2).collect();
        let x = obs.iter().map(|o| o.3).collect();
        units.push(Unit::new(id, y, x)?);
    }
    Ok(PanelData::new(units))
}

/// Per-unit thresholds from a two-column file `unit,c` with a header row.
pub fn read_thresholds_csv(path: &Path) -> Result<BTreeMap<String, f64>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_thresholds(file)
}

pub fn read_thresholds<R: Read>(reader: R) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::MissingColumn("threshold (second column)".into()));
    }
    let name = headers.get(1).unwrap_or("c").to_string();
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let unit = rec.get(0).unwrap_or("").to_string();
        let c = rec
            .get(1)
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::NonFiniteValue {
                row: line,
                column: name.clone(),
            })?;
        if out.insert(unit.clone(), c).is_some() {
            return Err(Error::DuplicateKey {
                unit,
                time: "threshold".into(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Tsv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "tsv" => Ok(ReportFormat::Tsv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::InvalidConfig(format!("unknown format `{s}`"))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Tsv => "tsv",
            ReportFormat::Markdown => "markdown",
        })
    }
}

/// A titled table of preformatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: &str, headers: &[&str]) -> Self {
        Table {
            title: title.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

/// Shortest representation that parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v}")
}

fn kv(t: &mut Table, key: &str, value: String) {
    t.push(vec![key.to_string(), value]);
}

const UNIT_HEADERS: [&str; 10] = [
    "unit",
    "threshold",
    "bandwidth",
    "gamma_hat",
    "deviation",
    "std_err",
    "stat",
    "scale",
    "obs",
    "eff_obs",
];

/// Per-unit rows, a key/value summary, and skipped units when present.
pub fn test_result_tables(r: &TestResult) -> Vec<Table> {
    let mut units = Table::new("units", &UNIT_HEADERS);
    for u in &r.per_unit {
        units.push(vec![
            u.unit_id.clone(),
            num(u.threshold),
            num(u.bandwidth),
            num(u.gamma_hat),
            num(u.deviation),
            num(u.std_err),
            num(u.stat),
            num(u.scale),
            u.n_obs.to_string(),
            u.eff_obs.to_string(),
        ]);
    }
    let mut summary = Table::new("summary", &["key", "value"]);
    kv(&mut summary, "test", r.kind.to_string());
    kv(&mut summary, "sidedness", r.sidedness.to_string());
    if let Some(c) = r.center {
        kv(&mut summary, "center", c.to_string());
    }
    kv(&mut summary, "statistic", num(r.statistic));
    kv(&mut summary, "n_effective", r.n_effective().to_string());
    kv(&mut summary, "n_skipped", r.skipped.len().to_string());
    kv(&mut summary, "n_comparisons", r.n_comparisons.to_string());
    for ((a, q), rej) in r.alphas.iter().zip(&r.critical_values).zip(&r.reject) {
        kv(&mut summary, &format!("critical_value_{a}"), num(*q));
        kv(&mut summary, &format!("reject_{a}"), rej.to_string());
    }
    let mut out = vec![units, summary];
    if !r.skipped.is_empty() {
        let mut skipped = Table::new("skipped", &["unit", "reason"]);
        for s in &r.skipped {
            skipped.push(vec![s.unit_id.clone(), s.reason.clone()]);
        }
        out.push(skipped);
    }
    if !r.warnings.is_empty() {
        let mut w = Table::new("warnings", &["warning"]);
        for s in &r.warnings {
            w.push(vec![s.clone()]);
        }
        out.push(w);
    }
    out
}

/// Report tables for a threshold search plus the full statistic profile.
pub fn search_result_tables(r: &ThresholdSearchResult) -> Vec<Table> {
    let mut out = test_result_tables(&r.to_test_result());
    let mut profile = Table::new("profile", &["unit", "c", "gamma_hat", "v_hat", "stat", "eff_obs"]);
    for u in &r.units {
        for p in u.points.iter().flatten() {
            profile.push(vec![
                u.unit_id.clone(),
                num(p.c),
                num(p.gamma_hat),
                num(p.v_hat),
                num(p.stat),
                p.eff_obs.to_string(),
            ]);
        }
    }
    out.insert(2, profile);
    out
}

pub fn size_power_table(tables: &[SizePowerTable]) -> Table {
    let mut t = Table::new(
        "rejection_rates",
        &[
            "test", "dgp", "n", "t", "reps", "failed", "alpha", "rate", "std_err",
        ],
    );
    for s in tables {
        for ((a, r), se) in s.alphas.iter().zip(s.rates()).zip(s.std_errs()) {
            t.push(vec![
                s.kind.to_string(),
                s.dgp.to_string(),
                s.n_units.to_string(),
                s.t.to_string(),
                s.reps.to_string(),
                s.failed_reps.to_string(),
                num(*a),
                num(r),
                num(se),
            ]);
        }
    }
    t
}

pub fn accuracy_table(tables: &[AccuracyTable]) -> Table {
    let mut t = Table::new(
        "threshold_accuracy",
        &[
            "dgp",
            "n",
            "t",
            "reps",
            "failed",
            "mean_abs_err",
            "mean_max_err",
            "max_abs_err",
        ],
    );
    for a in tables {
        t.push(vec![
            a.dgp.to_string(),
            a.n_units.to_string(),
            a.t.to_string(),
            a.reps.to_string(),
            a.failed_reps.to_string(),
            num(a.mean_abs_err),
            num(a.mean_max_err),
            num(a.max_abs_err),
        ]);
    }
    t
}

/// Renders tables one after another; delimited sections are separated by
/// a blank line, markdown sections carry their title as a heading.
pub fn render_tables(tables: &[Table], format: ReportFormat) -> Result<String> {
    let mut out = String::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match format {
            ReportFormat::Csv | ReportFormat::Tsv => {
                let delim = if format == ReportFormat::Csv { b',' } else { b'\t' };
                let mut w = csv::WriterBuilder::new().delimiter(delim).from_writer(Vec::new());
                w.write_record(&t.headers)?;
                for r in &t.rows {
                    w.write_record(r)?;
                }
                let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
                out.push_str(&String::from_utf8_lossy(&bytes));
            }
            ReportFormat::Markdown => {
                let cell = |s: &str| s.replace('|', "\\|");
                out.push_str(&format!("## {}\n\n", t.title));
                out.push_str(&format!(
                    "| {} |\n",
                    t.headers.iter().map(|h| cell(h)).collect::<Vec<_>>().join(" | ")
                ));
                out.push_str(&format!("|{}\n", "---|".repeat(t.headers.len())));
                for r in &t.rows {
                    out.push_str(&format!(
                        "| {} |\n",
                        r.iter().map(|c| cell(c)).collect::<Vec<_>>().join(" | ")
                    ));
                }
            }
        }
    }
    Ok(out)
}

/// Parses delimited output of [`render_tables`] back into tables; titles
/// are not stored in delimited output and come back empty.
pub fn parse_tables(text: &str, format: ReportFormat) -> Result<Vec<Table>> {
    let delim = match format {
        ReportFormat::Csv => b',',
        ReportFormat::Tsv => b'\t',
        ReportFormat::Markdown => {
            return Err(Error::InvalidConfig("markdown reports are not parsed".into()));
        }
    };
    let mut out = Vec::new();
    for section in text.split("\n\n").filter(|s| !s.trim().is_empty()) {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delim)
            .flexible(true)
            .from_reader(section.as_bytes());
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        out.push(Table {
            title: String::new(),
            headers,
            rows,
        });
    }
    Ok(out)
}

pub fn render_report(result: &TestResult, format: ReportFormat) -> Result<String> {
    render_tables(&test_result_tables(result), format)
}

pub fn write_report(result: &TestResult, format: ReportFormat, path: &Path) -> Result<()> {
    write_atomic(path, render_report(result, format)?.as_bytes())
}

/// Writes through a temporary sibling file and renames it into place, so
/// a failure never leaves a partial file at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
    })
}
