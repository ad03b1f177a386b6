use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::diagnosis::ImageFormat;
use crate::router::{ImagePayload, Prompt, RoutePath, Router};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPrompt {
    pub text: Option<String>,
    pub image: Option<ImagePayload>,
    pub expected: RoutePath,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RouteConfusion {
    /// Rows expected, columns actual, both in `RoutePath::ALL` order.
    pub matrix: [[u64; 3]; 3],
    /// Prompts whose routing failed; each is a misroute outside the matrix.
    pub errors: u64,
    pub total: u64,
}

impl RouteConfusion {
    pub fn correct(&self) -> u64 {
        (0..3).map(|i| self.matrix[i][i]).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.errors == 0 && (0..3).all(|i| (0..3).all(|j| i == j || self.matrix[i][j] == 0))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("confusion serialises")
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "routed correctly: {}/{} (errors: {})", self.correct(), self.total, self.errors);
        let _ = write!(out, "{:<18}", "expected \\ actual");
        for p in RoutePath::ALL {
            let _ = write!(out, " {:>16}", p.as_str());
        }
        let _ = writeln!(out);
        for (i, row) in self.matrix.iter().enumerate() {
            let _ = write!(out, "{:<18}", RoutePath::ALL[i].as_str());
            for v in row {
                let _ = write!(out, " {v:>16}");
            }
            let _ = writeln!(out);
        }
        out
    }
}

pub async fn routing_eval(router: &Router, prompts: &[LabeledPrompt]) -> RouteConfusion {
    let mut conf = RouteConfusion::default();
    for (i, lp) in prompts.iter().enumerate() {
        conf.total += 1;
        let routed = match Prompt::new(format!("eval-{i}"), lp.text.clone(), lp.image.clone()) {
            Ok(p) => router.route(&p).await,
            Err(e) => Err(e),
        };
        match routed {
            Ok(d) => conf.matrix[lp.expected.index()][d.path.index()] += 1,
            Err(e) => {
                tracing::warn!(prompt = i, error = %e, "routing failed during evaluation");
                conf.errors += 1;
            }
        }
    }
    conf
}

#[derive(Deserialize)]
struct RawLabeledPrompt {
    #[serde(default)]
    text: Option<String>,
    /// Path relative to the prompt file.
    #[serde(default)]
    image: Option<String>,
    expected: RoutePath,
}

/// JSON lines of `{"text"?, "image"?, "expected"}`; image paths resolve
/// against the file's directory.
pub fn read_labeled_prompts(path: &Path) -> Result<Vec<LabeledPrompt>, EvalError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLabeledPrompt = serde_json::from_str(&line).map_err(|e| EvalError::Input {
            line: line_no,
            message: e.to_string(),
        })?;
        let image = match raw.image {
            Some(rel) => {
                let p = dir.join(&rel);
                let bytes = std::fs::read(&p).map_err(|e| EvalError::Input {
                    line: line_no,
                    message: format!("{}: {e}", p.display()),
                })?;
                let media_type = ImageFormat::sniff(&bytes)
                    .map(|f| f.media_type().to_string())
                    .unwrap_or_else(|| "application/octet-stream".into());
                Some(ImagePayload { bytes, media_type })
            }
            None => None,
        };
        out.push(LabeledPrompt {
            text: raw.text,
            image,
            expected: raw.expected,
        });
    }
    Ok(out)
}
