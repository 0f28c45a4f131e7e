//! Capability contracts for the external models the editor drives, a
//! registry that resolves engines by name, and deterministic stubs.
//!
//! Every capability is a small trait. Stubs implement the contracts with
//! fully specified rules (see [`stub`]) so the whole system runs without
//! any neural model; [`remote::RemoteAdapter`] forwards calls to a
//! server speaking the HTTP wire contract.

pub mod ocr;
pub mod remote;
pub mod stub;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelRect;
use crate::media::{MediaError, MediaStore};
use crate::project::Asset;
use crate::time::Time;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdapterError {
    #[error("unsupported language {0}")]
    UnsupportedLanguage(String),
    #[error("no face found")]
    NoFaceFound,
    #[error("empty text")]
    EmptyText,
    #[error("adapter failure: {0}")]
    AdapterFailure(String),
    #[error("no adapter named {name} for {capability}")]
    UnknownAdapter { capability: Capability, name: String },
    #[error("{0} already has a default adapter")]
    DuplicateDefault(Capability),
    #[error(transparent)]
    Media(#[from] MediaError),
}

pub type Result<T> = std::result::Result<T, AdapterError>;

impl AdapterError {
    /// Stable machine-readable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            AdapterError::UnsupportedLanguage(_) => "UnsupportedLanguage",
            AdapterError::NoFaceFound => "NoFaceFound",
            AdapterError::EmptyText => "EmptyText",
            AdapterError::AdapterFailure(_) => "AdapterFailure",
            AdapterError::UnknownAdapter { .. } => "UnknownAdapter",
            AdapterError::DuplicateDefault(_) => "DuplicateDefault",
            AdapterError::Media(_) => "MediaError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Lipsync,
    TalkingHead,
    Reenact,
    Asr,
    Nmt,
    Tts,
    VocalSeparation,
    OcrLines,
}

impl Capability {
    pub const ALL: [Capability; 8] = [
        Capability::Lipsync,
        Capability::TalkingHead,
        Capability::Reenact,
        Capability::Asr,
        Capability::Nmt,
        Capability::Tts,
        Capability::VocalSeparation,
        Capability::OcrLines,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Capability::Lipsync => "lipsync",
            Capability::TalkingHead => "talking_head",
            Capability::Reenact => "reenact",
            Capability::Asr => "asr",
            Capability::Nmt => "nmt",
            Capability::Tts => "tts",
            Capability::VocalSeparation => "vocal_separation",
            Capability::OcrLines => "ocr_lines",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Capability {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Capability::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown capability {s}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterDescriptor {
    pub capability: Capability,
    pub name: String,
    pub is_stub: bool,
    /// BCP-47 primary language subtags; empty for language-agnostic engines.
    pub supported_languages: BTreeSet<String>,
    /// Concurrent calls the engine tolerates; `None` means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_parallelism: Option<u32>,
}

impl AdapterDescriptor {
    pub fn supports(&self, language: &str) -> bool {
        self.supported_languages.is_empty() || self.supported_languages.contains(primary_subtag(language))
    }

    pub fn require_language(&self, language: &str) -> Result<()> {
        if self.supports(language) {
            Ok(())
        } else {
            Err(AdapterError::UnsupportedLanguage(language.to_string()))
        }
    }
}

/// `"en-US"` -> `"en"`.
pub fn primary_subtag(tag: &str) -> &str {
    tag.split(['-', '_']).next().unwrap_or(tag)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub id: u32,
    pub start: Time,
    pub end: Time,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedTranscript {
    pub segments: Vec<TranscriptSegment>,
}

impl TimedTranscript {
    /// Ordered, non-overlapping, positive-length segments with unique ids.
    pub fn is_well_formed(&self) -> bool {
        let mut ids = BTreeSet::new();
        self.segments.iter().all(|s| s.end > s.start && ids.insert(s.id))
            && self.segments.windows(2).all(|w| w[0].end <= w[1].start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRegion {
    pub bbox: PixelRect,
    pub line_text: String,
    pub confidence: f32,
}

pub trait Transcriber: Send + Sync {
    fn descriptor(&self) -> &AdapterDescriptor;
    fn transcribe(&self, store: &MediaStore, audio: &Asset, language: &str) -> Result<TimedTranscript>;
}

pub trait Translator: Send + Sync {
    fn descriptor(&self) -> &AdapterDescriptor;
    fn translate(&self, text: &str, src_lang: &str, tgt_lang: &str) -> Result<String>;
}

pub trait Synthesizer: Send + Sync {
    fn descriptor(&self) -> &AdapterDescriptor;
    fn synthesize(&self, store: &MediaStore, text: &str, voice: &str) -> Result<Asset>;
}

pub trait LipSyncer: Send + Sync {
    fn descriptor(&self) -> &AdapterDescriptor;
    /// Output duration follows the audio; `roi` restricts face search.
    fn lipsync(&self, store: &MediaStore, video: &Asset, audio: &Asset, roi: Option<PixelRect>) -> Result<Asset>;
}

pub trait TalkingHeadGenerator: Send + Sync {
    fn descriptor(&self) -> &AdapterDescriptor;
    fn talking_head(&self, store: &MediaStore, image: &Asset, audio: &Asset) -> Result<Asset>;
}

pub trait Reenactor: Send + Sync {
    fn descriptor(&self) -> &AdapterDescriptor;
    fn reenact(&self, store: &MediaStore, source_image: &Asset, driving_video: &Asset) -> Result<Asset>;
}

pub trait VocalSeparator: Send + Sync {
    fn descriptor(&self) -> &AdapterDescriptor;
    /// Returns `(speech, music)` stems.
    fn separate_vocals(&self, store: &MediaStore, audio: &Asset) -> Result<(Asset, Asset)>;
}

pub trait LineReader: Send + Sync {
    fn descriptor(&self) -> &AdapterDescriptor;
    /// Text lines in reading order (top to bottom).
    fn ocr_lines(&self, frame: &RgbImage) -> Result<Vec<TextRegion>>;
}

#[derive(Clone)]
pub enum AdapterImpl {
    Transcriber(Arc<dyn Transcriber>),
    Translator(Arc<dyn Translator>),
    Synthesizer(Arc<dyn Synthesizer>),
    LipSyncer(Arc<dyn LipSyncer>),
    TalkingHead(Arc<dyn TalkingHeadGenerator>),
    Reenactor(Arc<dyn Reenactor>),
    VocalSeparator(Arc<dyn VocalSeparator>),
    LineReader(Arc<dyn LineReader>),
}

impl AdapterImpl {
    pub fn descriptor(&self) -> &AdapterDescriptor {
        match self {
            AdapterImpl::Transcriber(a) => a.descriptor(),
            AdapterImpl::Translator(a) => a.descriptor(),
            AdapterImpl::Synthesizer(a) => a.descriptor(),
            AdapterImpl::LipSyncer(a) => a.descriptor(),
            AdapterImpl::TalkingHead(a) => a.descriptor(),
            AdapterImpl::Reenactor(a) => a.descriptor(),
            AdapterImpl::VocalSeparator(a) => a.descriptor(),
            AdapterImpl::LineReader(a) => a.descriptor(),
        }
    }
}

/// Engines by capability, with exactly one default each.
#[derive(Clone, Default)]
pub struct AdapterRegistry {
    entries: BTreeMap<Capability, Vec<AdapterImpl>>,
    defaults: BTreeMap<Capability, String>,
    /// Per-capability engine overrides chosen by configuration.
    selected: BTreeMap<Capability, String>,
}

macro_rules! typed_lookup {
    ($fn:ident, $cap:expr, $variant:ident, $trait:ident) => {
        pub fn $fn(&self) -> Result<Arc<dyn $trait>> {
            match self.resolve($cap)? {
                AdapterImpl::$variant(a) => Ok(a),
                _ => unreachable!("registry stores adapters under their own capability"),
            }
        }
    };
}

impl AdapterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with every stub registered as the default.
    pub fn with_stubs() -> Self {
        let mut r = AdapterRegistry::new();
        for imp in stub::all() {
            r.register(imp, true).expect("stubs register once");
        }
        r
    }

    pub fn register(&mut self, adapter: AdapterImpl, make_default: bool) -> Result<()> {
        let desc = adapter.descriptor().clone();
        if make_default {
            if self.defaults.contains_key(&desc.capability) {
                return Err(AdapterError::DuplicateDefault(desc.capability));
            }
            self.defaults.insert(desc.capability, desc.name.clone());
        }
        let list = self.entries.entry(desc.capability).or_default();
        list.retain(|a| a.descriptor().name != desc.name);
        list.push(adapter);
        Ok(())
    }

    /// Registers and selects an adapter for its capability, replacing any
    /// previous selection.
    pub fn register_selected(&mut self, adapter: AdapterImpl) {
        let desc = adapter.descriptor().clone();
        let list = self.entries.entry(desc.capability).or_default();
        list.retain(|a| a.descriptor().name != desc.name);
        list.push(adapter);
        self.selected.insert(desc.capability, desc.name);
    }

    /// Chooses `name` for a capability. Unknown names fall back to the
    /// default with a logged notice.
    pub fn select(&mut self, capability: Capability, name: &str) -> bool {
        let known = self.get(capability, name).is_some();
        if known {
            self.selected.insert(capability, name.to_string());
        } else {
            log::warn!("engine {name} for {capability} is not available; using the default");
        }
        known
    }

    pub fn get(&self, capability: Capability, name: &str) -> Option<&AdapterImpl> {
        self.entries.get(&capability)?.iter().find(|a| a.descriptor().name == name)
    }

    pub fn descriptors(&self) -> Vec<AdapterDescriptor> {
        self.entries.values().flatten().map(|a| a.descriptor().clone()).collect()
    }

    pub fn default_name(&self, capability: Capability) -> Option<&str> {
        self.defaults.get(&capability).map(String::as_str)
    }

    /// The selected engine, else the default.
    pub fn resolve(&self, capability: Capability) -> Result<AdapterImpl> {
        let name = self
            .selected
            .get(&capability)
            .or_else(|| self.defaults.get(&capability))
            .ok_or(AdapterError::UnknownAdapter { capability, name: "<default>".into() })?;
        self.get(capability, name)
            .cloned()
            .ok_or_else(|| AdapterError::UnknownAdapter { capability, name: name.clone() })
    }

    typed_lookup!(transcriber, Capability::Asr, Transcriber, Transcriber);
    typed_lookup!(translator, Capability::Nmt, Translator, Translator);
    typed_lookup!(synthesizer, Capability::Tts, Synthesizer, Synthesizer);
    typed_lookup!(lipsyncer, Capability::Lipsync, LipSyncer, LipSyncer);
    typed_lookup!(talking_head, Capability::TalkingHead, TalkingHead, TalkingHeadGenerator);
    typed_lookup!(reenactor, Capability::Reenact, Reenactor, Reenactor);
    typed_lookup!(vocal_separator, Capability::VocalSeparation, VocalSeparator, VocalSeparator);
    typed_lookup!(line_reader, Capability::OcrLines, LineReader, LineReader);
}
