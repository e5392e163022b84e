//! Trial ingestion: parse JSONL/CSV trial files, resolve correctness from
//! free text when needed, and validate into [`TrialRecord`]s.

mod scoring;
pub mod similarity;

use std::cmp::Ordering;
use std::fmt;
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use scoring::{
    normalize_answer, score_answer, score_robustness, strip_preamble, GenerationRow, RobustnessTable, ScoreOutcome,
    ScoringConfig,
};

use crate::error::{Result, SdtError};

/// Cell of the experimental design a trial belongs to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionKey {
    pub model: String,
    pub dataset: String,
    /// Sampling temperature; strictly positive.
    pub temperature: f64,
    pub domain: Option<String>,
}

impl ConditionKey {
    pub fn new(model: impl Into<String>, dataset: impl Into<String>, temperature: f64) -> Self {
        Self {
            model: model.into(),
            dataset: dataset.into(),
            temperature,
            domain: None,
        }
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = Some(domain.into());
        self
    }

    /// The same cell with the domain dropped.
    pub fn without_domain(&self) -> Self {
        Self {
            domain: None,
            ..self.clone()
        }
    }

    /// Filesystem-safe label, stable across runs.
    pub fn slug(&self) -> String {
        let raw = match &self.domain {
            Some(d) => format!("{}_{}_T{}_{}", self.model, self.dataset, self.temperature, d),
            None => format!("{}_{}_T{}", self.model, self.dataset, self.temperature),
        };
        raw.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    }
}

impl fmt::Display for ConditionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/T={}", self.model, self.dataset, self.temperature)?;
        if let Some(d) = &self.domain {
            write!(f, "/{d}")?;
        }
        Ok(())
    }
}

impl PartialEq for ConditionKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ConditionKey {}

impl Hash for ConditionKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.model.hash(state);
        self.dataset.hash(state);
        self.temperature.to_bits().hash(state);
        self.domain.hash(state);
    }
}

impl PartialOrd for ConditionKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ConditionKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.model
            .cmp(&other.model)
            .then_with(|| self.dataset.cmp(&other.dataset))
            .then_with(|| self.temperature.total_cmp(&other.temperature))
            .then_with(|| self.domain.cmp(&other.domain))
    }
}

/// One discrimination trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_id: String,
    pub condition: ConditionKey,
    /// Length-normalised log-probability of the generated answer.
    pub evidence: f64,
    /// Signal (correct answer) vs noise (incorrect answer).
    pub correct: bool,
    pub answer_text: Option<String>,
    pub refusal: bool,
    /// Softmax-derived probability, when the producer recorded one.
    pub confidence: Option<f64>,
}

impl TrialRecord {
    pub fn new(trial_id: impl Into<String>, condition: ConditionKey, evidence: f64, correct: bool) -> Self {
        Self {
            trial_id: trial_id.into(),
            condition,
            evidence,
            correct,
            answer_text: None,
            refusal: false,
            confidence: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("jsonl") | Some("ndjson") | Some("json") => Ok(Self::Jsonl),
            Some("csv") => Ok(Self::Csv),
            _ => Err(SdtError::Config(format!(
                "cannot infer trial format from {}; expected .jsonl or .csv",
                path.display()
            ))),
        }
    }
}

/// Numbers may arrive as JSON numbers or strings ("NaN", "inf", "-1.5").
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Number {
    Num(f64),
    Text(String),
}

impl Number {
    fn value(&self) -> std::result::Result<f64, String> {
        match self {
            Number::Num(v) => Ok(*v),
            Number::Text(s) => s.trim().parse::<f64>().map_err(|_| format!("not a number: {s:?}")),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Id {
    Text(String),
    Int(i64),
}

#[derive(Debug, Deserialize)]
struct JsonRow {
    trial_id: Id,
    model: String,
    dataset: String,
    temperature: Number,
    #[serde(default)]
    domain: Option<String>,
    evidence: Number,
    #[serde(default)]
    correct: Option<bool>,
    #[serde(default)]
    answer_text: Option<String>,
    #[serde(default)]
    aliases: Option<Vec<String>>,
    #[serde(default)]
    refusal: Option<bool>,
    #[serde(default)]
    confidence: Option<Number>,
}

/// Canonical output row; reading it back yields the same record.
#[derive(Debug, Serialize, Deserialize)]
struct CanonicalRow<'a> {
    trial_id: &'a str,
    model: &'a str,
    dataset: &'a str,
    temperature: f64,
    domain: Option<&'a str>,
    evidence: f64,
    correct: bool,
    answer_text: Option<&'a str>,
    refusal: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
}

struct RawFields {
    trial_id: String,
    model: String,
    dataset: String,
    temperature: std::result::Result<f64, String>,
    domain: Option<String>,
    evidence: std::result::Result<f64, String>,
    correct: Option<bool>,
    answer_text: Option<String>,
    aliases: Option<Vec<String>>,
    refusal: Option<bool>,
    confidence: Option<std::result::Result<f64, String>>,
}

fn validate(raw: RawFields, cfg: &ScoringConfig) -> std::result::Result<TrialRecord, String> {
    let evidence = raw.evidence?;
    if !evidence.is_finite() {
        return Err(format!("evidence must be finite, got {evidence}"));
    }
    let temperature = raw.temperature?;
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(format!("temperature must be positive, got {temperature}"));
    }
    let confidence = raw.confidence.transpose()?;
    if let Some(c) = confidence {
        if !(0.0..=1.0).contains(&c) {
            return Err(format!("confidence must lie in [0, 1], got {c}"));
        }
    }

    let (mut correct, mut refusal) = (raw.correct, raw.refusal.unwrap_or(false));
    if let (None, Some(text), Some(aliases)) = (correct, raw.answer_text.as_deref(), raw.aliases.as_deref()) {
        let outcome = score_answer(text, aliases, cfg).map_err(|e| e.to_string())?;
        correct = Some(outcome.correct);
        refusal |= outcome.refusal;
    }
    let Some(correct) = correct else {
        return Err("correctness missing and no answer_text/aliases to score".into());
    };

    Ok(TrialRecord {
        trial_id: raw.trial_id,
        condition: ConditionKey {
            model: raw.model,
            dataset: raw.dataset,
            temperature,
            domain: raw.domain.filter(|d| !d.is_empty()),
        },
        evidence,
        correct: correct && !refusal,
        answer_text: raw.answer_text,
        refusal,
        confidence,
    })
}

/// Read and validate a trial file. Correctness is taken from the `correct`
/// field when present, otherwise scored from `answer_text` against `aliases`.
pub fn ingest_trials(path: &Path, format: InputFormat, cfg: &ScoringConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    match format {
        InputFormat::Jsonl => ingest_jsonl(path, cfg),
        InputFormat::Csv => ingest_csv(path, cfg),
    }
}

fn ingest_jsonl(path: &Path, cfg: &ScoringConfig) -> Result<Vec<TrialRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(&line).map_err(|e| SdtError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        let raw = RawFields {
            trial_id: match row.trial_id {
                Id::Text(s) => s,
                Id::Int(i) => i.to_string(),
            },
            model: row.model,
            dataset: row.dataset,
            temperature: row.temperature.value(),
            domain: row.domain,
            evidence: row.evidence.value(),
            correct: row.correct,
            answer_text: row.answer_text,
            aliases: row.aliases,
            refusal: row.refusal,
            confidence: row.confidence.map(|c| c.value()),
        };
        out.push(validate(raw, cfg).map_err(|message| validation(path, lineno, message))?);
    }
    Ok(out)
}

fn validation(path: &Path, line: usize, message: String) -> SdtError {
    SdtError::Validation {
        path: PathBuf::from(path),
        line,
        message,
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "t" => Ok(true),
        "false" | "0" | "no" | "f" => Ok(false),
        other => Err(format!("not a boolean: {other:?}")),
    }
}

fn ingest_csv(path: &Path, cfg: &ScoringConfig) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = ["trial_id", "model", "dataset", "temperature", "evidence"];
    if let Some(missing) = required.iter().find(|n| col(n).is_none()) {
        return Err(SdtError::Schema(format!(
            "{}: missing column {missing:?}",
            path.display()
        )));
    }
    let (c_correct, c_text, c_aliases) = (col("correct"), col("answer_text"), col("aliases"));
    if c_correct.is_none() && (c_text.is_none() || c_aliases.is_none()) {
        return Err(SdtError::Schema(format!(
            "{}: no \"correct\" column and no answer_text/aliases columns to score from",
            path.display()
        )));
    }
    let (c_domain, c_refusal, c_conf) = (col("domain"), col("refusal"), col("confidence"));
    let idx = |n: &str| col(n).expect("checked above");

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let lineno = i + 2;
        let record = record.map_err(|e| SdtError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        let get = |c: Option<usize>| c.and_then(|c| record.get(c)).filter(|s| !s.is_empty());
        let num = |c: usize| {
            record
                .get(c)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|_| format!("not a number: {:?}", record.get(c).unwrap_or("")))
        };
        let flag = |c: Option<usize>| get(c).map(parse_bool).transpose();
        let correct = flag(c_correct).map_err(|m| validation(path, lineno, m))?;
        let refusal = flag(c_refusal).map_err(|m| validation(path, lineno, m))?;
        let raw = RawFields {
            trial_id: record.get(idx("trial_id")).unwrap_or("").to_string(),
            model: record.get(idx("model")).unwrap_or("").to_string(),
            dataset: record.get(idx("dataset")).unwrap_or("").to_string(),
            temperature: num(idx("temperature")),
            domain: get(c_domain).map(str::to_string),
            evidence: num(idx("evidence")),
            correct,
            answer_text: get(c_text).map(str::to_string),
            aliases: get(c_aliases).map(|s| s.split('|').map(|a| a.trim().to_string()).collect()),
            refusal,
            confidence: get(c_conf).map(|s| s.parse::<f64>().map_err(|_| format!("not a number: {s:?}"))),
        };
        out.push(validate(raw, cfg).map_err(|m| validation(path, lineno, m))?);
    }
    Ok(out)
}

/// Write records as canonical JSONL (correctness resolved).
pub fn write_trials_jsonl<W: Write>(trials: &[TrialRecord], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for t in trials {
        let row = CanonicalRow {
            trial_id: &t.trial_id,
            model: &t.condition.model,
            dataset: &t.condition.dataset,
            temperature: t.condition.temperature,
            domain: t.condition.domain.as_deref(),
            evidence: t.evidence,
            correct: t.correct,
            answer_text: t.answer_text.as_deref(),
            refusal: t.refusal,
            confidence: t.confidence,
        };
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Raw generations (trial id, answer text, aliases) for robustness scoring.
pub fn read_generations(path: &Path, format: InputFormat) -> Result<Vec<GenerationRow>> {
    #[derive(Deserialize)]
    struct Row {
        trial_id: Id,
        answer_text: Option<String>,
        aliases: Option<Vec<String>>,
    }
    let finish = |id: String, text: Option<String>, aliases: Option<Vec<String>>, line: usize| match (text, aliases) {
        (Some(answer_text), Some(aliases)) if !aliases.is_empty() => Ok(GenerationRow {
            trial_id: id,
            answer_text,
            aliases,
        }),
        _ => Err(validation(
            path,
            line,
            "answer_text and non-empty aliases required".into(),
        )),
    };
    let mut out = Vec::new();
    match format {
        InputFormat::Jsonl => {
            let reader = BufReader::new(File::open(path)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: Row = serde_json::from_str(&line).map_err(|e| SdtError::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
                let id = match row.trial_id {
                    Id::Text(s) => s,
                    Id::Int(i) => i.to_string(),
                };
                out.push(finish(id, row.answer_text, row.aliases, idx + 1)?);
            }
        }
        InputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
            let headers = reader.headers()?.clone();
            let col = |n: &str| {
                headers
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| SdtError::Schema(format!("{}: missing column {n:?}", path.display())))
            };
            let (ci, ct, ca) = (col("trial_id")?, col("answer_text")?, col("aliases")?);
            for (i, rec) in reader.records().enumerate() {
                let rec = rec?;
                let aliases = rec
                    .get(ca)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.split('|').map(|a| a.trim().to_string()).collect());
                out.push(finish(
                    rec.get(ci).unwrap_or("").to_string(),
                    rec.get(ct).map(str::to_string),
                    aliases,
                    i + 2,
                )?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file_with(ext: &str, body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    const THREE_ROWS: &str = r#"{"trial_id":"a1","model":"m","dataset":"tqa","temperature":1.0,"domain":null,"evidence":-0.4,"correct":true}
{"trial_id":"a2","model":"m","dataset":"tqa","temperature":1.0,"domain":"science","evidence":-1.2,"answer_text":"The answer is Paris","aliases":["Paris"]}
{"trial_id":3,"model":"m","dataset":"tqa","temperature":0.5,"evidence":"-2.5","answer_text":"I don't know","aliases":["Rome"]}
"#;

    #[test]
    fn well_formed_jsonl() {
        let f = file_with(".jsonl", THREE_ROWS);
        let trials = ingest_trials(f.path(), InputFormat::Jsonl, &ScoringConfig::default()).unwrap();
        assert_eq!(trials.len(), 3);
        assert!(trials[0].correct);
        assert!(trials[1].correct);
        assert_eq!(trials[1].condition.domain.as_deref(), Some("science"));
        assert_eq!(trials[2].trial_id, "3");
        assert!(trials[2].refusal && !trials[2].correct);
    }

    #[test]
    fn nan_evidence_names_the_row() {
        let body = THREE_ROWS.replace("\"-2.5\"", "\"NaN\"");
        let f = file_with(".jsonl", &body);
        let err = ingest_trials(f.path(), InputFormat::Jsonl, &ScoringConfig::default()).unwrap_err();
        match err {
            SdtError::Validation { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("finite"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let f = file_with(".jsonl", "{\"trial_id\":\"x\"\n");
        assert!(matches!(
            ingest_trials(f.path(), InputFormat::Jsonl, &ScoringConfig::default()),
            Err(SdtError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn refusal_flag_forces_incorrect() {
        let f = file_with(
            ".jsonl",
            r#"{"trial_id":"r","model":"m","dataset":"d","temperature":1,"evidence":-1,"correct":true,"refusal":true}"#,
        );
        let t = ingest_trials(f.path(), InputFormat::Jsonl, &ScoringConfig::default()).unwrap();
        assert!(!t[0].correct);
    }

    #[test]
    fn nonpositive_temperature_rejected() {
        let f = file_with(
            ".jsonl",
            r#"{"trial_id":"r","model":"m","dataset":"d","temperature":0,"evidence":-1,"correct":true}"#,
        );
        assert!(matches!(
            ingest_trials(f.path(), InputFormat::Jsonl, &ScoringConfig::default()),
            Err(SdtError::Validation { line: 1, .. })
        ));
    }

    #[test]
    fn csv_with_correct_column() {
        let f = file_with(
            ".csv",
            "trial_id,model,dataset,temperature,domain,evidence,correct\n1,m,d,1.0,,-0.5,true\n2,m,d,1.0,geo,-0.9,0\n",
        );
        let t = ingest_trials(f.path(), InputFormat::Csv, &ScoringConfig::default()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].condition.domain, None);
        assert!(!t[1].correct);
    }

    #[test]
    fn csv_scores_pipe_delimited_aliases() {
        let f = file_with(
            ".csv",
            "trial_id,model,dataset,temperature,evidence,answer_text,aliases\n1,m,d,1.0,-0.5,NYC,New York City|NYC\n",
        );
        let t = ingest_trials(f.path(), InputFormat::Csv, &ScoringConfig::default()).unwrap();
        assert!(t[0].correct);
    }

    #[test]
    fn csv_without_correctness_is_schema_error() {
        let f = file_with(".csv", "trial_id,model,dataset,temperature,evidence\n1,m,d,1.0,-0.5\n");
        assert!(matches!(
            ingest_trials(f.path(), InputFormat::Csv, &ScoringConfig::default()),
            Err(SdtError::Schema(_))
        ));
    }

    #[test]
    fn canonical_round_trip_is_identity() {
        let f = file_with(".jsonl", THREE_ROWS);
        let cfg = ScoringConfig::default();
        let first = ingest_trials(f.path(), InputFormat::Jsonl, &cfg).unwrap();
        let mut buf = Vec::new();
        write_trials_jsonl(&first, &mut buf).unwrap();
        let g = file_with(".jsonl", std::str::from_utf8(&buf).unwrap());
        let second = ingest_trials(g.path(), InputFormat::Jsonl, &cfg).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(
            InputFormat::from_path(Path::new("x.jsonl")).unwrap(),
            InputFormat::Jsonl
        );
        assert_eq!(InputFormat::from_path(Path::new("x.CSV")).unwrap(), InputFormat::Csv);
        assert!(InputFormat::from_path(Path::new("x.txt")).is_err());
    }
}
