//! Experiment records: one `(C, N, D, metric)` observation per training-run
//! snapshot, plus JSONL/CSV ingestion and grouping into isoFLOP budgets.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::flops::FlopRule;

/// Column order shared by the JSONL key order and the CSV header.
pub const FIELDS: [&str; 9] = [
    "domain",
    "setting",
    "flops",
    "params",
    "samples",
    "loss",
    "mean_return",
    "seed",
    "meta",
];

/// Default relative tolerance used to bin snapshot FLOPs into budgets.
pub const DEFAULT_BUDGET_REL_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: field `{field}`: {message}")]
    Field {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("rel_tol out of range: {0} (expected 0 < rel_tol < 0.5)")]
    RelTolOutOfRange(f64),
    #[error("cannot group records with mixed settings ({0} and {1})")]
    MixedSettings(Setting, Setting),
    #[error("no records to group")]
    Empty,
    #[error("record flops {flops} disagree with {rule} rule value {expected}")]
    RuleMismatch {
        flops: f64,
        expected: f64,
        rule: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which quantity a run was measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    BcLoss,
    BcReturn,
    RlReturn,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::BcLoss => "bc_loss",
            Setting::BcReturn => "bc_return",
            Setting::RlReturn => "rl_return",
        }
    }

    /// The metric a record of this setting must carry.
    pub fn required_metric(self) -> Metric {
        match self {
            Setting::BcLoss => Metric::Loss,
            Setting::BcReturn | Setting::RlReturn => Metric::Return,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bc_loss" => Ok(Setting::BcLoss),
            "bc_return" => Ok(Setting::BcReturn),
            "rl_return" => Ok(Setting::RlReturn),
            other => Err(format!(
                "unknown setting `{other}` (expected bc_loss, bc_return or rl_return)"
            )),
        }
    }
}

/// Validation loss (minimized) or mean episode return (maximized).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Loss,
    Return,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Loss => "loss",
            Metric::Return => "return",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "loss" => Ok(Metric::Loss),
            "return" => Ok(Metric::Return),
            other => Err(format!("unknown metric `{other}` (expected loss or return)")),
        }
    }
}

/// Line-oriented input formats understood by [`parse_records`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guess the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &std::path::Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

/// One observation from a training-run snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub domain: String,
    pub setting: Setting,
    /// Total training FLOPs `C`.
    pub flops: f64,
    /// Effective parameter count `N`.
    pub params: u64,
    /// Training samples or environment interactions `D`.
    pub samples: f64,
    /// Validation cross-entropy in nats.
    pub loss: Option<f64>,
    pub mean_return: Option<f64>,
    pub seed: i64,
    pub meta: BTreeMap<String, String>,
}

impl ExperimentRecord {
    pub fn metric(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Loss => self.loss,
            Metric::Return => self.mean_return,
        }
    }

    /// Check the record invariants, returning the offending field on failure.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !(self.flops.is_finite() && self.flops > 0.0) {
            return Err(("flops", "flops must be > 0".into()));
        }
        if self.params < 1 {
            return Err(("params", "params must be ≥ 1".into()));
        }
        if !(self.samples.is_finite() && self.samples > 0.0) {
            return Err(("samples", "samples must be > 0".into()));
        }
        if let Some(loss) = self.loss {
            if !(loss.is_finite() && loss >= 0.0) {
                return Err(("loss", "loss must be a finite nonnegative number".into()));
            }
        }
        if let Some(ret) = self.mean_return {
            if !ret.is_finite() {
                return Err(("mean_return", "mean_return must be finite".into()));
            }
        }
        match self.setting.required_metric() {
            Metric::Loss if self.loss.is_none() => {
                Err(("loss", format!("setting {} requires loss", self.setting)))
            }
            Metric::Return if self.mean_return.is_none() => Err((
                "mean_return",
                format!("setting {} requires mean_return", self.setting),
            )),
            _ => Ok(()),
        }
    }

    /// Returns are allowed to be nonpositive but cannot enter log-space fits.
    pub fn has_nonpositive_return(&self) -> bool {
        matches!(self.mean_return, Some(r) if r <= 0.0)
    }

    /// Check `|flops - rule(N, D)| / flops <= 1e-6`.
    pub fn check_rule(&self, rule: &FlopRule) -> Result<(), RecordError> {
        let expected = rule
            .flops(self.params as f64, self.samples)
            .map_err(|e| RecordError::Malformed {
                line: 0,
                message: e.to_string(),
            })?;
        if ((self.flops - expected) / self.flops).abs() > 1e-6 {
            return Err(RecordError::RuleMismatch {
                flops: self.flops,
                expected,
                rule: rule.to_string(),
            });
        }
        Ok(())
    }

    /// One JSONL line (no trailing newline), floats at 17 significant digits.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::with_capacity(256);
        out.push('{');
        push_key(&mut out, "domain");
        out.push_str(&json_string(&self.domain));
        out.push(',');
        push_key(&mut out, "setting");
        out.push_str(&json_string(self.setting.as_str()));
        out.push(',');
        push_key(&mut out, "flops");
        out.push_str(&fmt_f64(self.flops));
        out.push(',');
        push_key(&mut out, "params");
        out.push_str(&self.params.to_string());
        out.push(',');
        push_key(&mut out, "samples");
        out.push_str(&fmt_f64(self.samples));
        out.push(',');
        push_key(&mut out, "loss");
        out.push_str(&self.loss.map_or_else(|| "null".to_string(), fmt_f64));
        out.push(',');
        push_key(&mut out, "mean_return");
        out.push_str(&self.mean_return.map_or_else(|| "null".to_string(), fmt_f64));
        out.push(',');
        push_key(&mut out, "seed");
        out.push_str(&self.seed.to_string());
        out.push(',');
        push_key(&mut out, "meta");
        out.push_str(&meta_json(&self.meta));
        out.push('}');
        out
    }
}

/// Fixed 17-significant-digit scientific notation; parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_key(out: &mut String, key: &str) {
    out.push('"');
    out.push_str(key);
    out.push_str("\":");
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

fn meta_json(meta: &BTreeMap<String, String>) -> String {
    serde_json::to_string(meta).expect("string map serialization is infallible")
}

/// Serialize records as JSONL, one record per line, trailing newline included.
pub fn to_jsonl(records: &[ExperimentRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_jsonl());
        out.push('\n');
    }
    out
}

/// Serialize records as CSV with the canonical header.
pub fn to_csv(records: &[ExperimentRecord]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(FIELDS).expect("writing to a Vec cannot fail");
    for r in records {
        let row = [
            r.domain.clone(),
            r.setting.as_str().to_string(),
            fmt_f64(r.flops),
            r.params.to_string(),
            fmt_f64(r.samples),
            r.loss.map(fmt_f64).unwrap_or_default(),
            r.mean_return.map(fmt_f64).unwrap_or_default(),
            r.seed.to_string(),
            if r.meta.is_empty() {
                String::new()
            } else {
                meta_json(&r.meta)
            },
        ];
        w.write_record(&row).expect("writing to a Vec cannot fail");
    }
    String::from_utf8(w.into_inner().expect("flush to Vec")).expect("csv output is utf-8")
}

/// Parse a record stream. Records come back in input order; keys outside the
/// schema are kept as strings in `meta`.
pub fn parse_records<R: Read>(stream: R, format: Format) -> Result<Vec<ExperimentRecord>, RecordError> {
    let records = match format {
        Format::Jsonl => parse_jsonl(stream)?,
        Format::Csv => parse_csv(stream)?,
    };
    let flagged = records.iter().filter(|r| r.has_nonpositive_return()).count();
    if flagged > 0 {
        log::warn!("{flagged} record(s) have nonpositive mean_return; log-space fits will exclude them");
    }
    Ok(records)
}

/// Convenience wrapper for in-memory text.
pub fn parse_records_str(text: &str, format: Format) -> Result<Vec<ExperimentRecord>, RecordError> {
    parse_records(text.as_bytes(), format)
}

fn field_err(line: usize, field: &str, message: impl Into<String>) -> RecordError {
    RecordError::Field {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_jsonl<R: Read>(stream: R) -> Result<Vec<ExperimentRecord>, RecordError> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(stream).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> =
            serde_json::from_str(&line).map_err(|e| RecordError::Malformed {
                line: line_no,
                message: format!("invalid JSON object: {e}"),
            })?;
        out.push(record_from_fields(line_no, &JsonFields(&obj))?);
    }
    Ok(out)
}

fn parse_csv<R: Read>(stream: R) -> Result<Vec<ExperimentRecord>, RecordError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(stream);
    let headers = reader
        .headers()
        .map_err(|e| RecordError::Malformed {
            line: 1,
            message: format!("invalid CSV header: {e}"),
        })?
        .clone();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| RecordError::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line_no = row.position().map_or(0, |p| p.line() as usize);
        let fields = CsvFields {
            headers: &headers,
            row: &row,
        };
        out.push(record_from_fields(line_no, &fields)?);
    }
    Ok(out)
}

/// Uniform access to one input row regardless of source format.
trait RowFields {
    /// `Ok(None)` when the field is absent or null/empty.
    fn number(&self, line: usize, key: &str) -> Result<Option<f64>, RecordError>;
    fn text(&self, line: usize, key: &str) -> Result<Option<String>, RecordError>;
    fn meta(&self, line: usize) -> Result<BTreeMap<String, String>, RecordError>;
    /// Keys outside the schema, stringified.
    fn extras(&self) -> Vec<(String, String)>;
}

struct JsonFields<'a>(&'a Map<String, Value>);

impl RowFields for JsonFields<'_> {
    fn number(&self, line: usize, key: &str) -> Result<Option<f64>, RecordError> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => n
                .as_f64()
                .map(Some)
                .ok_or_else(|| field_err(line, key, "number out of range")),
            Some(other) => Err(field_err(line, key, format!("expected a number, got {other}"))),
        }
    }

    fn text(&self, line: usize, key: &str) -> Result<Option<String>, RecordError> {
        match self.0.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(field_err(line, key, format!("expected a string, got {other}"))),
        }
    }

    fn meta(&self, line: usize) -> Result<BTreeMap<String, String>, RecordError> {
        match self.0.get("meta") {
            None | Some(Value::Null) => Ok(BTreeMap::new()),
            Some(Value::Object(m)) => Ok(m
                .iter()
                .map(|(k, v)| (k.clone(), stringify(v)))
                .collect()),
            Some(other) => Err(field_err(line, "meta", format!("expected an object, got {other}"))),
        }
    }

    fn extras(&self) -> Vec<(String, String)> {
        self.0
            .iter()
            .filter(|(k, _)| !FIELDS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), stringify(v)))
            .collect()
    }
}

fn stringify(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

struct CsvFields<'a> {
    headers: &'a csv::StringRecord,
    row: &'a csv::StringRecord,
}

impl CsvFields<'_> {
    fn cell(&self, key: &str) -> Option<&str> {
        let idx = self.headers.iter().position(|h| h == key)?;
        self.row.get(idx).map(str::trim).filter(|s| !s.is_empty())
    }
}

impl RowFields for CsvFields<'_> {
    fn number(&self, line: usize, key: &str) -> Result<Option<f64>, RecordError> {
        match self.cell(key) {
            None => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .map(Some)
                .map_err(|_| field_err(line, key, format!("expected a number, got `{s}`"))),
        }
    }

    fn text(&self, _line: usize, key: &str) -> Result<Option<String>, RecordError> {
        Ok(self.cell(key).map(str::to_string))
    }

    fn meta(&self, line: usize) -> Result<BTreeMap<String, String>, RecordError> {
        match self.cell("meta") {
            None => Ok(BTreeMap::new()),
            Some(s) => {
                let obj: Map<String, Value> = serde_json::from_str(s)
                    .map_err(|e| field_err(line, "meta", format!("expected a JSON object: {e}")))?;
                Ok(obj.iter().map(|(k, v)| (k.clone(), stringify(v))).collect())
            }
        }
    }

    fn extras(&self) -> Vec<(String, String)> {
        self.headers
            .iter()
            .zip(self.row.iter())
            .filter(|(h, _)| !FIELDS.contains(h))
            .map(|(h, v)| (h.to_string(), v.to_string()))
            .collect()
    }
}

fn record_from_fields(line: usize, f: &dyn RowFields) -> Result<ExperimentRecord, RecordError> {
    let setting: Setting = f
        .text(line, "setting")?
        .ok_or_else(|| field_err(line, "setting", "missing required field"))?
        .parse()
        .map_err(|e: String| field_err(line, "setting", e))?;
    let flops = f
        .number(line, "flops")?
        .ok_or_else(|| field_err(line, "flops", "missing required field"))?;
    let params_raw = f
        .number(line, "params")?
        .ok_or_else(|| field_err(line, "params", "missing required field"))?;
    if !(params_raw >= 1.0) {
        return Err(field_err(line, "params", "params must be ≥ 1"));
    }
    if params_raw.fract() != 0.0 || params_raw > 9.007_199_254_740_992e15 {
        return Err(field_err(line, "params", "params must be an integer"));
    }
    let samples = f
        .number(line, "samples")?
        .ok_or_else(|| field_err(line, "samples", "missing required field"))?;
    let seed = match f.number(line, "seed")? {
        None => 0,
        Some(s) if s.fract() == 0.0 && s.abs() < 9.2e18 => s as i64,
        Some(_) => return Err(field_err(line, "seed", "seed must be an integer")),
    };
    let mut meta = f.meta(line)?;
    for (k, v) in f.extras() {
        meta.entry(k).or_insert(v);
    }
    let record = ExperimentRecord {
        domain: f.text(line, "domain")?.unwrap_or_default(),
        setting,
        flops,
        params: params_raw as u64,
        samples,
        loss: f.number(line, "loss")?,
        mean_return: f.number(line, "mean_return")?,
        seed,
        meta,
    };
    record
        .validate()
        .map_err(|(field, message)| field_err(line, field, message))?;
    Ok(record)
}

/// One isoFLOP contour: records whose FLOPs agree within a relative tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetGroup {
    /// Geometric mean of member FLOPs.
    pub budget: f64,
    pub records: Vec<ExperimentRecord>,
}

impl BudgetGroup {
    pub fn setting(&self) -> Setting {
        self.records[0].setting
    }
}

/// Partition records into budgets, ascending by budget.
///
/// Records are swept in ascending FLOP order (stable, so ties keep input
/// order); a record joins the current group while it lies within `rel_tol`
/// of the group's smallest member, which keeps every member within `rel_tol`
/// of the group's geometric mean. Members keep their input order.
pub fn group_by_budget(records: &[ExperimentRecord], rel_tol: f64) -> Result<Vec<BudgetGroup>, RecordError> {
    if !(rel_tol > 0.0 && rel_tol < 0.5) {
        return Err(RecordError::RelTolOutOfRange(rel_tol));
    }
    let first = records.first().ok_or(RecordError::Empty)?;
    if let Some(other) = records.iter().find(|r| r.setting != first.setting) {
        return Err(RecordError::MixedSettings(first.setting, other.setting));
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].flops.total_cmp(&records[b].flops));

    let mut buckets: Vec<Vec<usize>> = Vec::new();
    let mut anchor = f64::NAN;
    for idx in order {
        let flops = records[idx].flops;
        match buckets.last_mut() {
            Some(bucket) if (flops - anchor) / anchor <= rel_tol => bucket.push(idx),
            _ => {
                anchor = flops;
                buckets.push(vec![idx]);
            }
        }
    }

    Ok(buckets
        .into_iter()
        .map(|mut bucket| {
            bucket.sort_unstable();
            let log_mean =
                bucket.iter().map(|&i| records[i].flops.ln()).sum::<f64>() / bucket.len() as f64;
            BudgetGroup {
                budget: log_mean.exp(),
                records: bucket.into_iter().map(|i| records[i].clone()).collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(flops: f64) -> ExperimentRecord {
        ExperimentRecord {
            domain: "synthetic".into(),
            setting: Setting::BcLoss,
            flops,
            params: 10,
            samples: flops / 60.0,
            loss: Some(1.0),
            mean_return: None,
            seed: 0,
            meta: BTreeMap::new(),
        }
    }

    #[test]
    fn parses_one_jsonl_line() {
        let line = r#"{"domain":"gridworld","setting":"bc_loss","flops":1e13,"params":1e4,"samples":1.667e8,"loss":1.2,"seed":3}"#;
        let records = parse_records_str(line, Format::Jsonl).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.setting, Setting::BcLoss);
        assert_eq!(r.flops, 1e13);
        assert_eq!(r.params, 10_000);
        assert_eq!(r.samples, 1.667e8);
        assert_eq!(r.loss, Some(1.2));
        assert_eq!(r.mean_return, None);
        assert_eq!(r.seed, 3);
    }

    #[test]
    fn empty_stream_is_empty() {
        assert!(parse_records_str("", Format::Jsonl).unwrap().is_empty());
        assert!(parse_records_str("\n\n", Format::Jsonl).unwrap().is_empty());
        assert!(parse_records_str(&FIELDS.join(","), Format::Csv).unwrap().is_empty());
    }

    #[test]
    fn zero_params_is_rejected_with_line_and_field() {
        let text = concat!(
            r#"{"setting":"bc_loss","flops":1e13,"params":10,"samples":1e11,"loss":1.0}"#,
            "\n",
            r#"{"setting":"bc_loss","flops":1e13,"params":0,"samples":100,"loss":1.2}"#
        );
        let err = parse_records_str(text, Format::Jsonl).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("params must be ≥ 1"), "{msg}");
    }

    #[test]
    fn missing_metric_for_setting_is_rejected() {
        let text = r#"{"setting":"bc_return","flops":1e13,"params":10,"samples":100,"loss":1.2}"#;
        let msg = parse_records_str(text, Format::Jsonl).unwrap_err().to_string();
        assert!(msg.contains("mean_return"), "{msg}");
    }

    #[test]
    fn malformed_json_names_line() {
        let msg = parse_records_str("{not json", Format::Jsonl).unwrap_err().to_string();
        assert!(msg.starts_with("line 1"), "{msg}");
    }

    #[test]
    fn unknown_keys_land_in_meta() {
        let text = r#"{"setting":"bc_loss","flops":6000,"params":10,"samples":100,"loss":1.0,"width":8,"tag":"x","meta":{"run":"a"}}"#;
        let r = &parse_records_str(text, Format::Jsonl).unwrap()[0];
        assert_eq!(r.meta.get("width").map(String::as_str), Some("8"));
        assert_eq!(r.meta.get("tag").map(String::as_str), Some("x"));
        assert_eq!(r.meta.get("run").map(String::as_str), Some("a"));
    }

    #[test]
    fn csv_unknown_columns_and_empty_metric_cells() {
        let text = "setting,flops,params,samples,loss,mean_return,width\nbc_return,6000,10,100,,2.5,16\n";
        let r = &parse_records_str(text, Format::Csv).unwrap()[0];
        assert_eq!(r.loss, None);
        assert_eq!(r.mean_return, Some(2.5));
        assert_eq!(r.meta.get("width").map(String::as_str), Some("16"));
    }

    #[test]
    fn nonpositive_return_is_accepted_and_flagged() {
        let text = r#"{"setting":"rl_return","flops":8000,"params":10,"samples":100,"mean_return":-3.0}"#;
        let r = &parse_records_str(text, Format::Jsonl).unwrap()[0];
        assert!(r.has_nonpositive_return());
    }

    #[test]
    fn rule_check_uses_relative_tolerance() {
        let mut r = rec(6000.0);
        r.samples = 100.0;
        r.check_rule(&FlopRule::LinearBc).unwrap();
        r.flops = 6000.1;
        assert!(r.check_rule(&FlopRule::LinearBc).is_err());
    }

    #[test]
    fn groups_near_equal_budgets() {
        let records = vec![rec(1e13), rec(1.0000001e13), rec(1e14)];
        let groups = group_by_budget(&records, 0.01).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].records.len(), 2);
        assert_eq!(groups[1].records.len(), 1);
        assert!((groups[0].budget / (1e13 * 1.0000001e13f64).sqrt() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn groups_sorted_and_members_keep_input_order() {
        let records = vec![rec(1e14), rec(1e13), rec(1.00001e14), rec(0.99999e14)];
        let groups = group_by_budget(&records, 1e-3).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].records[0].flops, 1e13);
        let second: Vec<f64> = groups[1].records.iter().map(|r| r.flops).collect();
        assert_eq!(second, vec![1e14, 1.00001e14, 0.99999e14]);
    }

    #[test]
    fn rel_tol_out_of_range() {
        let err = group_by_budget(&[rec(1e13)], 0.6).unwrap_err();
        assert!(err.to_string().contains("rel_tol out of range"));
        assert!(group_by_budget(&[rec(1e13)], 0.0).is_err());
    }

    #[test]
    fn mixed_settings_rejected() {
        let mut other = rec(1e13);
        other.setting = Setting::BcReturn;
        other.mean_return = Some(1.0);
        assert!(matches!(
            group_by_budget(&[rec(1e13), other], 0.01),
            Err(RecordError::MixedSettings(..))
        ));
        assert!(matches!(group_by_budget(&[], 0.01), Err(RecordError::Empty)));
    }

    #[test]
    fn float_formatting_is_17_significant_digits() {
        assert_eq!(fmt_f64(1e13), "1.0000000000000000e13");
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
