//! Offline evaluations: detector classification reports, questionnaire
//! scoring and router regression.

pub mod classification;
pub mod questionnaire;
pub mod routing;

use thiserror::Error;

pub use classification::{classification_report, read_predictions, ClassificationReport, LabeledPrediction};
pub use questionnaire::{group_means, read_answer_sheets, score_sheet, AnswerSheet, Group, GroupMean, Questionnaire};
pub use routing::{read_labeled_prompts, routing_eval, LabeledPrompt, RouteConfusion};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    EmptyEvaluationSet,
    #[error("respondent {respondent}: {got} answers for {expected} items")]
    LengthMismatch {
        respondent: String,
        expected: usize,
        got: usize,
    },
    #[error("respondent {respondent}, item {item}: unknown choice label {label:?}")]
    UnknownChoiceLabel {
        respondent: String,
        item: String,
        label: String,
    },
    #[error("group {0} has no answer sheets")]
    EmptyGroup(Group),
    #[error("invalid questionnaire: {0}")]
    InvalidQuestionnaire(String),
    /// Malformed input file; `line` is 1-based.
    #[error("line {line}: {message}")]
    Input { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
