//! Corpus documents: the packaged fixture corpus and directory loading.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
        }
    }
}

const PACKAGED: &[(&str, &str)] = &[
    ("01_overview", include_str!("../../data/corpus/01_overview.md")),
    ("02_types", include_str!("../../data/corpus/02_types.md")),
    ("03_molding", include_str!("../../data/corpus/03_molding.md")),
    ("04_microtia_hearing", include_str!("../../data/corpus/04_microtia_hearing.md")),
    ("05_photos_and_screening", include_str!("../../data/corpus/05_photos_and_screening.md")),
    ("06_myths_faq", include_str!("../../data/corpus/06_myths_faq.md")),
    ("07_overview_zh", include_str!("../../data/corpus/07_overview_zh.md")),
];

/// Small non-clinical fixture corpus compiled into the crate.
pub fn packaged() -> Vec<Document> {
    PACKAGED.iter().map(|(id, text)| Document::new(*id, *text)).collect()
}

/// Reads every `.md` and `.txt` file directly under `dir`, in file name
/// order. The document id is the file stem.
pub fn load_dir(dir: &Path) -> std::io::Result<Vec<Document>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("md") | Some("txt")
                )
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p)?;
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("document")
                .to_string();
            Ok(Document::new(id, text))
        })
        .collect()
}

/// Loads a single file, or every document in a directory.
pub fn load_path(path: &Path) -> std::io::Result<Vec<Document>> {
    if path.is_dir() {
        return load_dir(path);
    }
    let text = std::fs::read_to_string(path)?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("document")
        .to_string();
    Ok(vec![Document::new(id, text)])
}
