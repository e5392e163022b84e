//! Free-text answer scoring against alias sets.

use serde::{Deserialize, Serialize};

use super::similarity;
use crate::error::{Result, SdtError};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    /// Minimum Ratcliff–Obershelp ratio accepted by the fuzzy fallback.
    pub similarity_threshold: f64,
    /// Thresholds swept by [`score_robustness`].
    pub thresholds_for_robustness: Vec<f64>,
    /// Phrases that mark a generation as a refusal (matched on normalised text).
    pub refusal_phrases: Vec<String>,
    pub strip_preamble: bool,
    /// Leading segments removed before normalisation, case-insensitive.
    pub preambles: Vec<String>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.85,
            thresholds_for_robustness: vec![0.80, 0.85, 0.90],
            refusal_phrases: ["i don't know", "i cannot", "i'm not sure", "no answer"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            strip_preamble: true,
            preambles: ["the answer is", "answer:", "a:"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |t: f64| (0.0..=1.0).contains(&t);
        if !in_unit(self.similarity_threshold) {
            return Err(SdtError::Config(format!(
                "similarity_threshold {} outside [0, 1]",
                self.similarity_threshold
            )));
        }
        if let Some(t) = self.thresholds_for_robustness.iter().find(|t| !in_unit(**t)) {
            return Err(SdtError::Config(format!("robustness threshold {t} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Self {
            similarity_threshold: threshold,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreOutcome {
    pub correct: bool,
    pub matched_alias: Option<String>,
    /// Best similarity over the aliases (1.0 for an exact match).
    pub similarity: f64,
    pub refusal: bool,
}

/// Lowercase, drop punctuation, collapse whitespace and remove leading
/// English articles.
pub fn normalize_answer(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let kept: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let mut words: Vec<&str> = kept.split_whitespace().collect();
    let leading = words.iter().take_while(|w| ARTICLES.contains(w)).count();
    words.drain(..leading);
    words.join(" ")
}

/// Remove one leading preamble such as "Answer:" or "The answer is".
pub fn strip_preamble<'a>(raw: &'a str, preambles: &[String]) -> &'a str {
    let trimmed = raw.trim_start();
    let mut sorted: Vec<&String> = preambles.iter().collect();
    sorted.sort_by_key(|p| std::cmp::Reverse(p.len()));
    for p in sorted {
        let n = p.len();
        if trimmed.len() >= n && trimmed.is_char_boundary(n) && trimmed[..n].eq_ignore_ascii_case(p) {
            let rest = trimmed[n..].trim_start();
            return rest.strip_prefix(':').unwrap_or(rest).trim_start();
        }
    }
    trimmed
}

fn is_refusal(normalized: &str, phrases: &[String]) -> bool {
    let padded = format!(" {normalized} ");
    phrases
        .iter()
        .map(|p| normalize_answer(p))
        .filter(|p| !p.is_empty())
        .any(|p| padded.contains(&format!(" {p} ")))
}

/// Score one generation against its accepted aliases.
pub fn score_answer(generated: &str, aliases: &[String], cfg: &ScoringConfig) -> Result<ScoreOutcome> {
    if aliases.is_empty() {
        return Err(SdtError::Config("alias list is empty".into()));
    }
    let text = if cfg.strip_preamble {
        strip_preamble(generated, &cfg.preambles)
    } else {
        generated
    };
    let answer = normalize_answer(text);

    if is_refusal(&answer, &cfg.refusal_phrases) {
        return Ok(ScoreOutcome {
            correct: false,
            matched_alias: None,
            similarity: best_similarity(&answer, aliases).1,
            refusal: true,
        });
    }

    if let Some(alias) = aliases.iter().find(|a| normalize_answer(a) == answer) {
        return Ok(ScoreOutcome {
            correct: true,
            matched_alias: Some(alias.clone()),
            similarity: 1.0,
            refusal: false,
        });
    }

    let (best, similarity) = best_similarity(&answer, aliases);
    let correct = similarity >= cfg.similarity_threshold;
    Ok(ScoreOutcome {
        correct,
        matched_alias: correct.then(|| aliases[best].clone()),
        similarity,
        refusal: false,
    })
}

fn best_similarity(answer: &str, aliases: &[String]) -> (usize, f64) {
    aliases
        .iter()
        .enumerate()
        .map(|(i, a)| (i, similarity::ratio(answer, &normalize_answer(a))))
        .fold(
            (0, f64::NEG_INFINITY),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        )
}

/// One raw generation awaiting scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub trial_id: String,
    pub answer_text: String,
    pub aliases: Vec<String>,
}

/// Correctness under each robustness threshold, one column per threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessTable {
    pub thresholds: Vec<f64>,
    pub trial_ids: Vec<String>,
    pub similarity: Vec<f64>,
    /// `columns[t][i]`: correctness of trial `i` at `thresholds[t]`.
    pub columns: Vec<Vec<bool>>,
}

impl RobustnessTable {
    /// Trials whose verdict differs between any two thresholds.
    pub fn unstable_trials(&self) -> Vec<&str> {
        (0..self.trial_ids.len())
            .filter(|&i| self.columns.iter().any(|col| col[i] != self.columns[0][i]))
            .map(|i| self.trial_ids[i].as_str())
            .collect()
    }
}

pub fn score_robustness(rows: &[GenerationRow], cfg: &ScoringConfig) -> Result<RobustnessTable> {
    if cfg.thresholds_for_robustness.is_empty() {
        return Err(SdtError::Config("no robustness thresholds configured".into()));
    }
    cfg.validate()?;

    // Similarity and refusal do not depend on the threshold, so score once
    // and re-threshold.
    let base: Vec<ScoreOutcome> = rows
        .iter()
        .map(|r| score_answer(&r.answer_text, &r.aliases, cfg))
        .collect::<Result<_>>()?;

    let columns = cfg
        .thresholds_for_robustness
        .iter()
        .map(|&t| base.iter().map(|o| !o.refusal && o.similarity >= t).collect())
        .collect();

    Ok(RobustnessTable {
        thresholds: cfg.thresholds_for_robustness.clone(),
        trial_ids: rows.iter().map(|r| r.trial_id.clone()).collect(),
        similarity: base.iter().map(|o| o.similarity).collect(),
        columns,
    })
}
