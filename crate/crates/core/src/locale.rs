//! User-facing strings in Chinese and English.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::EarClass;

const PACKAGED_LOCALE: &str = include_str!("../data/locale.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[default]
    En,
    Zh,
}

impl Language {
    pub fn tag(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Zh => "zh",
        }
    }

    /// `Zh` when the text contains any CJK ideograph, `En` otherwise.
    pub fn detect(text: &str) -> Language {
        if text.chars().any(is_cjk) {
            Language::Zh
        } else {
            Language::En
        }
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32, 0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0xF900..=0xFAFF)
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Error)]
#[error("unknown language tag {0:?}")]
pub struct UnknownLanguage(pub String);

impl FromStr for Language {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" | "en-us" | "en-gb" | "english" => Ok(Language::En),
            "zh" | "zh-cn" | "zh-hans" | "chinese" => Ok(Language::Zh),
            other => Err(UnknownLanguage(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum LocaleError {
    #[error("locale file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("locale file has no English table")]
    MissingEnglish,
    #[error("English table lacks required key {0:?}")]
    MissingKey(String),
}

pub const REQUIRED_KEYS: &[&str] = &[
    "disclaimer",
    "diagnosis_abnormal",
    "diagnosis_normal",
    "advice_abnormal",
    "advice_normal",
    "irrelevant_image",
    "knowledge_unavailable",
    "backend_unavailable",
];

/// Locale tables keyed by language. Missing keys in a non-English table fall
/// back to English; the English table must be complete.
#[derive(Debug, Clone)]
pub struct Locale {
    tables: HashMap<Language, HashMap<String, String>>,
}

impl Locale {
    pub fn from_json(json: &str) -> Result<Self, LocaleError> {
        let tables: HashMap<Language, HashMap<String, String>> = serde_json::from_str(json)?;
        let en = tables.get(&Language::En).ok_or(LocaleError::MissingEnglish)?;
        let class_keys = EarClass::ALL.map(|c| format!("class.{}", c.canonical_label()));
        for key in REQUIRED_KEYS.iter().copied().chain(class_keys.iter().map(String::as_str)) {
            if !en.contains_key(key) {
                return Err(LocaleError::MissingKey(key.to_string()));
            }
        }
        Ok(Self { tables })
    }

    pub fn packaged() -> Arc<Locale> {
        static LOCALE: OnceLock<Arc<Locale>> = OnceLock::new();
        LOCALE
            .get_or_init(|| Arc::new(Locale::from_json(PACKAGED_LOCALE).expect("packaged locale is valid")))
            .clone()
    }

    pub fn get(&self, lang: Language, key: &str) -> &str {
        if let Some(s) = self.tables.get(&lang).and_then(|t| t.get(key)) {
            return s;
        }
        if lang != Language::En {
            tracing::warn!(lang = %lang, key, "locale key missing, falling back to en");
        }
        self.tables
            .get(&Language::En)
            .and_then(|t| t.get(key))
            .map(String::as_str)
            .unwrap_or("")
    }

    pub fn class_name(&self, lang: Language, class: EarClass) -> &str {
        self.get(lang, &format!("class.{}", class.canonical_label()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packaged_tables_are_complete_in_both_languages() {
        let locale = Locale::packaged();
        for lang in [Language::En, Language::Zh] {
            for key in REQUIRED_KEYS {
                assert!(locale.tables[&lang].contains_key(*key), "{lang} lacks {key}");
            }
        }
    }

    #[test]
    fn missing_key_falls_back_to_english() {
        let json = r#"{"en": {"disclaimer": "see a doctor", "diagnosis_abnormal": "a",
            "diagnosis_normal": "b", "advice_abnormal": "c", "advice_normal": "d",
            "irrelevant_image": "e", "knowledge_unavailable": "f", "backend_unavailable": "g",
            "class.normal": "n", "class.lop_ear": "l", "class.stahls_ear": "s", "class.cup_ear": "c",
            "class.constricted_ear": "k", "class.helical_deformity": "h", "class.cryptotia": "y",
            "class.microtia": "m"},
            "zh": {}}"#;
        let locale = Locale::from_json(json).unwrap();
        assert_eq!(locale.get(Language::Zh, "disclaimer"), "see a doctor");
    }

    #[test]
    fn incomplete_english_table_is_rejected() {
        assert!(matches!(
            Locale::from_json(r#"{"en": {"disclaimer": "x"}}"#),
            Err(LocaleError::MissingKey(_))
        ));
        assert!(matches!(
            Locale::from_json(r#"{"zh": {}}"#),
            Err(LocaleError::MissingEnglish)
        ));
    }

    #[test]
    fn detects_chinese() {
        assert_eq!(Language::detect("什么是耳廓畸形？"), Language::Zh);
        assert_eq!(Language::detect("What is auricular deformity?"), Language::En);
        assert_eq!("ZH".parse::<Language>().unwrap(), Language::Zh);
    }
}
