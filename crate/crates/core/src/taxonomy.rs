//! Closed ear-class taxonomy and the normal/abnormal collapse.
//!
//! The eight variants are fixed. The set of spellings that map onto them is
//! data (`data/class_aliases.json`) so deployments can extend it without a
//! rebuild, see [`AliasTable::from_json`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const PACKAGED_ALIASES: &str = include_str!("../data/class_aliases.json");

/// One of the eight ear classes a detector may report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarClass {
    Normal,
    LopEar,
    StahlsEar,
    CupEar,
    ConstrictedEar,
    HelicalDeformity,
    Cryptotia,
    Microtia,
}

/// Result of collapsing an [`EarClass`] to normal vs. deformed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryClass {
    NormalEar,
    AbnormalEar,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("unknown ear class label {0:?}")]
    UnknownClass(String),
    #[error("alias table: {0}")]
    AliasTable(String),
}

impl EarClass {
    /// All variants in a fixed order; confusion matrices index by this order.
    pub const ALL: [EarClass; 8] = [
        EarClass::Normal,
        EarClass::LopEar,
        EarClass::StahlsEar,
        EarClass::CupEar,
        EarClass::ConstrictedEar,
        EarClass::HelicalDeformity,
        EarClass::Cryptotia,
        EarClass::Microtia,
    ];

    /// Lower-case snake_case label used on every wire format.
    pub fn canonical_label(self) -> &'static str {
        match self {
            EarClass::Normal => "normal",
            EarClass::LopEar => "lop_ear",
            EarClass::StahlsEar => "stahls_ear",
            EarClass::CupEar => "cup_ear",
            EarClass::ConstrictedEar => "constricted_ear",
            EarClass::HelicalDeformity => "helical_deformity",
            EarClass::Cryptotia => "cryptotia",
            EarClass::Microtia => "microtia",
        }
    }

    /// Position in [`EarClass::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_canonical(label: &str) -> Option<EarClass> {
        EarClass::ALL.into_iter().find(|c| c.canonical_label() == label)
    }

    pub fn collapse(self) -> BinaryClass {
        collapse(self)
    }

    pub fn is_normal(self) -> bool {
        self == EarClass::Normal
    }
}

impl fmt::Display for EarClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_label())
    }
}

impl FromStr for EarClass {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_class(s)
    }
}

impl BinaryClass {
    pub const ALL: [BinaryClass; 2] = [BinaryClass::NormalEar, BinaryClass::AbnormalEar];

    pub fn canonical_label(self) -> &'static str {
        match self {
            BinaryClass::NormalEar => "normal_ear",
            BinaryClass::AbnormalEar => "abnormal_ear",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BinaryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_label())
    }
}

/// Normal maps to `NormalEar`; every deformity maps to `AbnormalEar`.
pub fn collapse(class: EarClass) -> BinaryClass {
    match class {
        EarClass::Normal => BinaryClass::NormalEar,
        EarClass::LopEar
        | EarClass::StahlsEar
        | EarClass::CupEar
        | EarClass::ConstrictedEar
        | EarClass::HelicalDeformity
        | EarClass::Cryptotia
        | EarClass::Microtia => BinaryClass::AbnormalEar,
    }
}

/// Normalised spelling -> class.
#[derive(Debug, Clone)]
pub struct AliasTable {
    map: HashMap<String, EarClass>,
}

impl AliasTable {
    /// Parses an alias file: an object keyed by canonical label, each value a
    /// list of extra spellings. Keys starting with `_` are ignored.
    pub fn from_json(json: &str) -> Result<Self, TaxonomyError> {
        let raw: HashMap<String, serde_json::Value> =
            serde_json::from_str(json).map_err(|e| TaxonomyError::AliasTable(e.to_string()))?;
        let mut map = HashMap::new();
        for class in EarClass::ALL {
            map.insert(normalize_label(class.canonical_label()), class);
        }
        for (key, value) in raw {
            if key.starts_with('_') {
                continue;
            }
            let class = EarClass::from_canonical(&key)
                .ok_or_else(|| TaxonomyError::AliasTable(format!("unknown class key {key:?}")))?;
            let spellings: Vec<String> = serde_json::from_value(value)
                .map_err(|e| TaxonomyError::AliasTable(format!("{key}: {e}")))?;
            for spelling in spellings {
                let norm = normalize_label(&spelling);
                if let Some(prev) = map.insert(norm.clone(), class) {
                    if prev != class {
                        return Err(TaxonomyError::AliasTable(format!(
                            "alias {spelling:?} maps to both {prev} and {class}"
                        )));
                    }
                }
            }
        }
        Ok(Self { map })
    }

    pub fn packaged() -> &'static AliasTable {
        static TABLE: OnceLock<AliasTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            AliasTable::from_json(PACKAGED_ALIASES).expect("packaged alias table is valid")
        })
    }

    pub fn parse(&self, label: &str) -> Result<EarClass, TaxonomyError> {
        self.map
            .get(&normalize_label(label))
            .copied()
            .ok_or_else(|| TaxonomyError::UnknownClass(label.to_string()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Case-insensitive parse against the packaged alias table.
pub fn parse_class(label: &str) -> Result<EarClass, TaxonomyError> {
    AliasTable::packaged().parse(label)
}

fn normalize_label(label: &str) -> String {
    let mapped: String = label
        .chars()
        .filter(|c| !matches!(c, '\'' | '\u{2019}'))
        .map(|c| if c == '_' || c == '-' { ' ' } else { c })
        .collect::<String>()
        .to_lowercase();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}
