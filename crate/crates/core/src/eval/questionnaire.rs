use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Doctor,
    PlainLlm,
    AgentUser,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Doctor, Group::PlainLlm, Group::AgentUser];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Doctor => "doctor",
            Group::PlainLlm => "plain_llm",
            Group::AgentUser => "agent_user",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Group::ALL
            .into_iter()
            .find(|g| g.as_str() == norm)
            .ok_or_else(|| format!("unknown group {s:?}; expected doctor, plain_llm or agent_user"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub question: String,
    pub choices: Vec<Choice>,
    pub key: String,
}

impl Item {
    fn has_label(&self, label: &str) -> bool {
        self.choices.iter().any(|c| c.label.eq_ignore_ascii_case(label))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Questionnaire {
    pub id: String,
    /// Provenance of the answer key, e.g. "editorial".
    #[serde(default)]
    pub key_status: Option<String>,
    pub items: Vec<Item>,
}

impl Questionnaire {
    pub fn from_json(json: &str) -> Result<Self, EvalError> {
        let q: Questionnaire =
            serde_json::from_str(json).map_err(|e| EvalError::InvalidQuestionnaire(e.to_string()))?;
        q.validate()?;
        Ok(q)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.items.is_empty() {
            return Err(EvalError::InvalidQuestionnaire("no items".into()));
        }
        for item in &self.items {
            let mut seen = HashSet::new();
            for c in &item.choices {
                if !seen.insert(c.label.to_ascii_uppercase()) {
                    return Err(EvalError::InvalidQuestionnaire(format!(
                        "item {}: duplicate choice label {:?}",
                        item.id, c.label
                    )));
                }
            }
            if !item.has_label(&item.key) {
                return Err(EvalError::InvalidQuestionnaire(format!(
                    "item {}: key {:?} is not a choice label",
                    item.id, item.key
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSheet {
    pub respondent_id: String,
    pub group: Group,
    pub answers: Vec<String>,
}

/// One point per answer equal to the item key (labels compare
/// case-insensitively).
pub fn score_sheet(q: &Questionnaire, s: &AnswerSheet) -> Result<u32, EvalError> {
    if s.answers.len() != q.items.len() {
        return Err(EvalError::LengthMismatch {
            respondent: s.respondent_id.clone(),
            expected: q.items.len(),
            got: s.answers.len(),
        });
    }
    let mut score = 0;
    for (item, answer) in q.items.iter().zip(&s.answers) {
        let answer = answer.trim();
        if !item.has_label(answer) {
            return Err(EvalError::UnknownChoiceLabel {
                respondent: s.respondent_id.clone(),
                item: item.id.clone(),
                label: answer.to_string(),
            });
        }
        if answer.eq_ignore_ascii_case(&item.key) {
            score += 1;
        }
    }
    Ok(score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub group: Group,
    pub sheets: u64,
    pub total_score: u64,
    /// `total_score / sheets`, divided once at the end.
    pub mean: f64,
}

/// Mean score of every group that has at least one sheet.
pub fn group_means(q: &Questionnaire, sheets: &[AnswerSheet]) -> Result<BTreeMap<Group, GroupMean>, EvalError> {
    if sheets.is_empty() {
        return Err(EvalError::EmptyEvaluationSet);
    }
    let mut acc: BTreeMap<Group, (u64, u64)> = BTreeMap::new();
    for s in sheets {
        let score = score_sheet(q, s)?;
        let e = acc.entry(s.group).or_default();
        e.0 += 1;
        e.1 += u64::from(score);
    }
    Ok(acc
        .into_iter()
        .map(|(group, (n, total))| {
            (
                group,
                GroupMean {
                    group,
                    sheets: n,
                    total_score: total,
                    mean: total as f64 / n as f64,
                },
            )
        })
        .collect())
}

/// Like [`group_means`] but every group in `required` must have sheets.
pub fn group_means_for(
    q: &Questionnaire,
    sheets: &[AnswerSheet],
    required: &[Group],
) -> Result<BTreeMap<Group, GroupMean>, EvalError> {
    for g in required {
        if !sheets.iter().any(|s| s.group == *g) {
            return Err(EvalError::EmptyGroup(*g));
        }
    }
    group_means(q, sheets)
}

pub fn means_to_json(means: &BTreeMap<Group, GroupMean>) -> String {
    let list: Vec<&GroupMean> = means.values().collect();
    serde_json::to_string_pretty(&list).expect("means serialise")
}

pub fn render_means_table(means: &BTreeMap<Group, GroupMean>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>6} {:>6} {:>6}", "group", "sheets", "total", "mean");
    for m in means.values() {
        let _ = writeln!(out, "{:<12} {:>6} {:>6} {:>6.2}", m.group.as_str(), m.sheets, m.total_score, m.mean);
    }
    out
}

/// Reads `respondent,group,a1..aN` rows (header required). Trailing empty
/// answer cells are dropped, so short rows surface as a length mismatch when
/// scored.
pub fn read_answer_sheets(path: &Path) -> Result<Vec<AnswerSheet>, EvalError> {
    parse_answer_sheets(std::fs::File::open(path)?)
}

pub fn parse_answer_sheets<R: std::io::Read>(r: R) -> Result<Vec<AnswerSheet>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| EvalError::Input {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() < 2 {
            return Err(EvalError::Input {
                line,
                message: "expected respondent,group,answers...".into(),
            });
        }
        let group = rec[1].parse::<Group>().map_err(|message| EvalError::Input { line, message })?;
        let mut answers: Vec<String> = rec.iter().skip(2).map(str::to_string).collect();
        while answers.last().is_some_and(|a| a.is_empty()) {
            answers.pop();
        }
        out.push(AnswerSheet {
            respondent_id: rec[0].to_string(),
            group,
            answers,
        });
    }
    Ok(out)
}
