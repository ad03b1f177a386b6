//! Expert diagnosis path: image checks, detector clients, confidence
//! filtering and the rendered verdict.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Cursor;
use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use image::ImageDecoder;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::{self, TransportError};
use crate::locale::{Language, Locale};
use crate::taxonomy::{collapse, parse_class, BinaryClass, EarClass};

pub const DEFAULT_IGNORE_THRESH: f64 = 0.7;

/// Resolutions of the phone photos the detector was trained on. Other sizes
/// are accepted with a warning.
pub const OBSERVED_RESOLUTIONS: [(u32, u32); 3] = [(1080, 1440), (3456, 4608), (3024, 4032)];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageError {
    #[error("image could not be decoded: {0}")]
    UndecodableImage(String),
    #[error("unsupported media type {0:?}; expected image/jpeg or image/png")]
    UnsupportedMediaType(String),
    #[error("image has {0} channel(s); three RGB channels are required")]
    NotThreeChannels(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    Jpeg,
    Png,
}

impl ImageFormat {
    pub fn media_type(self) -> &'static str {
        match self {
            ImageFormat::Jpeg => "image/jpeg",
            ImageFormat::Png => "image/png",
        }
    }

    pub fn from_media_type(media_type: &str) -> Option<Self> {
        let base = media_type.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
        match base.as_str() {
            "image/jpeg" | "image/jpg" | "image/pjpeg" => Some(ImageFormat::Jpeg),
            "image/png" => Some(ImageFormat::Png),
            _ => None,
        }
    }

    /// Guesses the format from magic bytes.
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
            Some(ImageFormat::Jpeg)
        } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
            Some(ImageFormat::Png)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub media_type: String,
    pub byte_len: usize,
}

impl ImageMeta {
    pub fn is_observed_resolution(&self) -> bool {
        OBSERVED_RESOLUTIONS
            .iter()
            .any(|&(w, h)| (self.width, self.height) == (w, h) || (self.width, self.height) == (h, w))
    }
}

/// Reads the image header and checks the RGB requirement.
pub fn validate_image(bytes: &[u8], media_type: &str) -> Result<ImageMeta, ImageError> {
    if bytes.is_empty() {
        return Err(ImageError::UndecodableImage("empty payload".into()));
    }
    let format = ImageFormat::from_media_type(media_type)
        .ok_or_else(|| ImageError::UnsupportedMediaType(media_type.to_string()))?;
    let undecodable = |e: image::ImageError| ImageError::UndecodableImage(e.to_string());
    let ((width, height), color) = match format {
        ImageFormat::Jpeg => {
            let d = image::codecs::jpeg::JpegDecoder::new(Cursor::new(bytes)).map_err(undecodable)?;
            (d.dimensions(), d.color_type())
        }
        ImageFormat::Png => {
            let d = image::codecs::png::PngDecoder::new(Cursor::new(bytes)).map_err(undecodable)?;
            (d.dimensions(), d.color_type())
        }
    };
    if width == 0 || height == 0 {
        return Err(ImageError::UndecodableImage("zero-sized image".into()));
    }
    let channels = color.channel_count();
    if channels != 3 {
        return Err(ImageError::NotThreeChannels(channels));
    }
    let meta = ImageMeta {
        width,
        height,
        channels,
        media_type: format.media_type().to_string(),
        byte_len: bytes.len(),
    };
    if !meta.is_observed_resolution() {
        tracing::warn!(width, height, "image resolution outside the detector's training set");
    }
    Ok(meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Laterality {
    Left,
    Right,
    Unknown,
}

/// Pixel box `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox {
            x_min: v[0],
            y_min: v[1],
            x_max: v[2],
            y_max: v[3],
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BBox {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn is_well_formed(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= f64::from(width) && self.y_max <= f64::from(height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    #[serde(rename = "class", with = "class_label")]
    pub ear_class: EarClass,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laterality: Option<Laterality>,
}

mod class_label {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &EarClass, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(c.canonical_label())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<EarClass, D::Error> {
        let label = String::deserialize(d)?;
        parse_class(&label).map_err(serde::de::Error::custom)
    }
}

impl Detection {
    pub fn new(bbox: impl Into<BBox>, ear_class: EarClass, confidence: f64) -> Self {
        Self {
            bbox: bbox.into(),
            ear_class,
            confidence,
            laterality: None,
        }
    }

    pub fn with_laterality(mut self, laterality: Laterality) -> Self {
        self.laterality = Some(laterality);
        self
    }

    /// Box ordering and confidence range; bounds need the image, see
    /// [`Detection::check_against`].
    pub fn check(&self) -> Result<(), String> {
        if !self.bbox.is_well_formed() {
            return Err(format!("malformed bbox {:?}", <[f64; 4]>::from(self.bbox)));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        Ok(())
    }

    pub fn check_against(&self, meta: &ImageMeta) -> Result<(), String> {
        self.check()?;
        if !self.bbox.within(meta.width, meta.height) {
            return Err(format!(
                "bbox {:?} outside {}x{} image",
                <[f64; 4]>::from(self.bbox),
                meta.width,
                meta.height
            ));
        }
        Ok(())
    }
}

/// Keeps detections with `confidence >= ignore_thresh`, in input order.
pub fn filter_detections(dets: &[Detection], ignore_thresh: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.confidence >= ignore_thresh).cloned().collect()
}

/// Ranking used to pick the primary detection: higher confidence, then larger
/// box area, then the lexicographically smaller canonical label.
pub fn rank_detections(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| b.bbox.area().total_cmp(&a.bbox.area()))
        .then_with(|| a.ear_class.canonical_label().cmp(b.ear_class.canonical_label()))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosisError {
    #[error("detection backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("detection backend returned an invalid response: {0}")]
    InvalidBackendResponse(String),
}

impl DiagnosisError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, DiagnosisError::BackendUnavailable(_))
    }
}

impl From<TransportError> for DiagnosisError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Unavailable(m) | TransportError::RateLimited(m, _) => DiagnosisError::BackendUnavailable(m),
            TransportError::InvalidResponse(m) => DiagnosisError::InvalidBackendResponse(m),
        }
    }
}

/// An object detector for ear photos. Implementations must say whether they
/// are safe to call concurrently; both shipped ones are.
#[async_trait]
pub trait DetectionBackend: Send + Sync {
    fn descriptor(&self) -> &str;

    fn supports_concurrent_calls(&self) -> bool {
        true
    }

    async fn detect(&self, image: &[u8], media_type: &str) -> Result<Vec<Detection>, DiagnosisError>;

    async fn ping(&self) -> bool {
        true
    }
}

/// Offline detector whose reply is a pure function of the image bytes:
/// registered images (by SHA-256) get their scripted detections, anything
/// else gets the default list.
#[derive(Debug, Clone)]
pub struct MockDetector {
    descriptor: String,
    scripted: HashMap<[u8; 32], Vec<Detection>>,
    default: Vec<Detection>,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    #[serde(default = "default_mock_descriptor")]
    descriptor: String,
    #[serde(default)]
    default: Vec<Detection>,
    fixtures: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    file: String,
    detections: Vec<Detection>,
}

fn default_mock_descriptor() -> String {
    "mock-detector/v1".into()
}

const PACKAGED_MANIFEST: &str = include_str!("../data/fixtures/mock_detections.json");

/// Fixture images compiled into the crate, by file name.
pub const PACKAGED_IMAGES: &[(&str, &[u8])] = &[
    ("ear_lop.jpg", include_bytes!("../data/fixtures/ear_lop.jpg")),
    ("ear_normal.jpg", include_bytes!("../data/fixtures/ear_normal.jpg")),
    ("robot.png", include_bytes!("../data/fixtures/robot.png")),
];

pub fn packaged_image(name: &str) -> Option<&'static [u8]> {
    PACKAGED_IMAGES.iter().find(|(n, _)| *n == name).map(|(_, b)| *b)
}

fn digest(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

impl Default for MockDetector {
    fn default() -> Self {
        Self::new()
    }
}

impl MockDetector {
    pub fn new() -> Self {
        Self {
            descriptor: default_mock_descriptor(),
            scripted: HashMap::new(),
            default: Vec::new(),
        }
    }

    pub fn with_image(mut self, image: &[u8], detections: Vec<Detection>) -> Self {
        self.scripted.insert(digest(image), detections);
        self
    }

    pub fn with_default(mut self, detections: Vec<Detection>) -> Self {
        self.default = detections;
        self
    }

    /// Mock scripted by the packaged manifest and fixture images.
    pub fn packaged() -> Self {
        Self::from_manifest_json(PACKAGED_MANIFEST, |name| {
            packaged_image(name)
                .map(<[u8]>::to_vec)
                .ok_or_else(|| format!("no packaged fixture {name:?}"))
        })
        .expect("packaged mock manifest is valid")
    }

    /// Loads a manifest file; fixture paths are relative to its directory.
    pub fn from_manifest(path: &Path) -> Result<Self, String> {
        let json = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_manifest_json(&json, |name| {
            let p = dir.join(name);
            std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()))
        })
    }

    fn from_manifest_json(
        json: &str,
        mut read: impl FnMut(&str) -> Result<Vec<u8>, String>,
    ) -> Result<Self, String> {
        let manifest: Manifest = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let mut mock = MockDetector::new().with_default(manifest.default);
        mock.descriptor = manifest.descriptor;
        for entry in manifest.fixtures {
            let bytes = read(&entry.file)?;
            mock = mock.with_image(&bytes, entry.detections);
        }
        Ok(mock)
    }
}

#[async_trait]
impl DetectionBackend for MockDetector {
    fn descriptor(&self) -> &str {
        &self.descriptor
    }

    async fn detect(&self, image: &[u8], _media_type: &str) -> Result<Vec<Detection>, DiagnosisError> {
        Ok(self.scripted.get(&digest(image)).unwrap_or(&self.default).clone())
    }
}

#[derive(Serialize)]
struct DetectRequest<'a> {
    image_b64: String,
    media_type: &'a str,
}

#[derive(Deserialize)]
struct DetectReply {
    detections: Vec<Detection>,
    #[allow(dead_code)]
    backend: Option<String>,
}

/// Client for a remote detector speaking
/// `POST {endpoint}/detect {"image_b64", "media_type"} -> {"detections", "backend"}`.
#[derive(Debug, Clone)]
pub struct HttpDetector {
    client: reqwest::Client,
    endpoint: String,
    descriptor: String,
}

impl HttpDetector {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, DiagnosisError> {
        let endpoint = http::trim_endpoint(endpoint.into());
        Ok(Self {
            client: http::client(timeout)?,
            descriptor: format!("http:{endpoint}"),
            endpoint,
        })
    }
}

#[async_trait]
impl DetectionBackend for HttpDetector {
    fn descriptor(&self) -> &str {
        &self.descriptor
    }

    async fn detect(&self, image: &[u8], media_type: &str) -> Result<Vec<Detection>, DiagnosisError> {
        let url = format!("{}/detect", self.endpoint);
        let body = DetectRequest {
            image_b64: base64::engine::general_purpose::STANDARD.encode(image),
            media_type,
        };
        let reply: DetectReply = http::post_json(&self.client, &url, &body, None).await?;
        Ok(reply.detections)
    }

    async fn ping(&self) -> bool {
        http::ping(&self.client, &self.endpoint).await
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosisConfig {
    pub ignore_thresh: f64,
}

impl Default for DiagnosisConfig {
    fn default() -> Self {
        Self {
            ignore_thresh: DEFAULT_IGNORE_THRESH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub primary_class: EarClass,
    pub binary: BinaryClass,
    pub confidence: f64,
    /// Surviving detections, best first.
    pub detections: Vec<Detection>,
    pub finding: String,
    pub advice: String,
    pub disclaimer: String,
}

impl Diagnosis {
    /// Finding, advice and disclaimer, one paragraph each.
    pub fn render(&self) -> String {
        format!("{}\n\n{}\n\n{}", self.finding, self.advice, self.disclaimer)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiagnosisOutcome {
    Diagnosed(Diagnosis),
    NoEarFound,
}

/// Runs the detector, drops hits below the ignore threshold and renders the
/// best surviving one.
pub async fn diagnose(
    image: &[u8],
    meta: &ImageMeta,
    backend: &dyn DetectionBackend,
    cfg: &DiagnosisConfig,
    locale: &Locale,
    lang: Language,
) -> Result<DiagnosisOutcome, DiagnosisError> {
    let raw = backend.detect(image, &meta.media_type).await?;
    for d in &raw {
        d.check_against(meta).map_err(DiagnosisError::InvalidBackendResponse)?;
    }
    let mut kept = filter_detections(&raw, cfg.ignore_thresh);
    tracing::debug!(raw = raw.len(), kept = kept.len(), backend = backend.descriptor(), "detections filtered");
    if kept.is_empty() {
        return Ok(DiagnosisOutcome::NoEarFound);
    }
    kept.sort_by(rank_detections);
    let primary = &kept[0];
    let class = primary.ear_class;
    let (finding, advice) = if class.is_normal() {
        (
            locale.get(lang, "diagnosis_normal").to_string(),
            locale.get(lang, "advice_normal").to_string(),
        )
    } else {
        (
            locale
                .get(lang, "diagnosis_abnormal")
                .replace("{class}", locale.class_name(lang, class)),
            locale.get(lang, "advice_abnormal").to_string(),
        )
    };
    Ok(DiagnosisOutcome::Diagnosed(Diagnosis {
        primary_class: class,
        binary: collapse(class),
        confidence: primary.confidence,
        finding,
        advice,
        disclaimer: locale.get(lang, "disclaimer").to_string(),
        detections: kept,
    }))
}
