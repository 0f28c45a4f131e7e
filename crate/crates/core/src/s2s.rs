//! Speech-to-speech translation with editable checkpoints between stages.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterError, AdapterRegistry, Capability, TimedTranscript};
use crate::media::MediaStore;
use crate::project::Asset;
use crate::sync::SegmentPair;
use crate::time::Time;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum S2sError {
    #[error("{op} is not allowed in state {state}")]
    WrongState { op: Operation, state: SessionState },
    #[error("unknown segment {0}")]
    UnknownSegment(u32),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("session io: {0}")]
    Io(String),
}

impl S2sError {
    pub fn code(&self) -> &'static str {
        match self {
            S2sError::WrongState { .. } => "WrongState",
            S2sError::UnknownSegment(_) => "UnknownSegment",
            S2sError::Adapter(e) => e.code(),
            S2sError::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, S2sError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionState {
    New,
    Transcribed,
    TranscriptEdited,
    Translated,
    TranslationEdited,
    Synthesized,
}

impl SessionState {
    pub const ALL: [SessionState; 6] = [
        SessionState::New,
        SessionState::Transcribed,
        SessionState::TranscriptEdited,
        SessionState::Translated,
        SessionState::TranslationEdited,
        SessionState::Synthesized,
    ];
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("state serializes");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextDoc {
    Transcript,
    Translation,
}

impl std::str::FromStr for TextDoc {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "transcript" => Ok(TextDoc::Transcript),
            "translation" => Ok(TextDoc::Translation),
            _ => Err(format!("unknown document {s}")),
        }
    }
}

/// Session operations, for permission checks and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    RunAsr,
    EditTranscript,
    RunNmt,
    EditTranslation,
    RunTts,
    Chunks,
}

impl Operation {
    pub const ALL: [Operation; 6] = [
        Operation::RunAsr,
        Operation::EditTranscript,
        Operation::RunNmt,
        Operation::EditTranslation,
        Operation::RunTts,
        Operation::Chunks,
    ];

    pub fn permitted_in(self, state: SessionState) -> bool {
        use SessionState::*;
        match self {
            Operation::RunAsr => state == New,
            Operation::EditTranscript | Operation::RunNmt => matches!(state, Transcribed | TranscriptEdited),
            Operation::EditTranslation | Operation::RunTts => matches!(state, Translated | TranslationEdited),
            Operation::Chunks => state == Synthesized,
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("operation serializes");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

/// One translated segment; times come from the source segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationUnit {
    pub segment_id: u32,
    pub start: Time,
    pub end: Time,
    pub source_text: String,
    pub target_text: String,
    pub edited: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationDoc {
    pub units: Vec<TranslationUnit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedUnit {
    pub segment_id: u32,
    pub asset: Asset,
}

/// A subtitle-style cue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cue {
    pub id: u32,
    pub start: Time,
    pub end: Time,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSession {
    pub id: String,
    pub source_lang: String,
    pub target_lang: String,
    pub state: SessionState,
    pub transcript: TimedTranscript,
    /// Segments whose transcript text was edited.
    #[serde(default)]
    pub transcript_edited: BTreeSet<u32>,
    pub translation: TranslationDoc,
    pub tts_assets: Vec<SynthesizedUnit>,
    #[serde(default)]
    pub notices: Vec<String>,
    /// Unedited stage outputs, restored on reset.
    #[serde(default)]
    raw_transcript: TimedTranscript,
    #[serde(default)]
    raw_translation: TranslationDoc,
}

fn with_engine<'a>(registry: &'a AdapterRegistry, capability: Capability, engine: Option<&str>) -> std::borrow::Cow<'a, AdapterRegistry> {
    match engine {
        Some(name) => {
            let mut r = registry.clone();
            r.select(capability, name);
            std::borrow::Cow::Owned(r)
        }
        None => std::borrow::Cow::Borrowed(registry),
    }
}

impl PipelineSession {
    pub fn new(id: impl Into<String>, source_lang: impl Into<String>, target_lang: impl Into<String>) -> Self {
        PipelineSession {
            id: id.into(),
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
            state: SessionState::New,
            transcript: TimedTranscript::default(),
            transcript_edited: BTreeSet::new(),
            translation: TranslationDoc::default(),
            tts_assets: Vec::new(),
            notices: Vec::new(),
            raw_transcript: TimedTranscript::default(),
            raw_translation: TranslationDoc::default(),
        }
    }

    fn require(&self, op: Operation) -> Result<()> {
        if op.permitted_in(self.state) {
            Ok(())
        } else {
            Err(S2sError::WrongState { op, state: self.state })
        }
    }

    pub fn run_asr(&mut self, store: &MediaStore, registry: &AdapterRegistry, audio: &Asset, engine: Option<&str>) -> Result<()> {
        self.require(Operation::RunAsr)?;
        let registry = with_engine(registry, Capability::Asr, engine);
        let transcript = registry.transcriber()?.transcribe(store, audio, &self.source_lang)?;
        self.raw_transcript = transcript.clone();
        self.transcript = transcript;
        self.transcript_edited.clear();
        self.state = SessionState::Transcribed;
        Ok(())
    }

    pub fn edit_text(&mut self, doc: TextDoc, segment_id: u32, text: &str) -> Result<()> {
        match doc {
            TextDoc::Transcript => {
                self.require(Operation::EditTranscript)?;
                let seg = self
                    .transcript
                    .segments
                    .iter_mut()
                    .find(|s| s.id == segment_id)
                    .ok_or(S2sError::UnknownSegment(segment_id))?;
                seg.text = text.to_string();
                self.transcript_edited.insert(segment_id);
                self.state = SessionState::TranscriptEdited;
            }
            TextDoc::Translation => {
                self.require(Operation::EditTranslation)?;
                let unit = self
                    .translation
                    .units
                    .iter_mut()
                    .find(|u| u.segment_id == segment_id)
                    .ok_or(S2sError::UnknownSegment(segment_id))?;
                unit.target_text = text.to_string();
                unit.edited = true;
                self.state = SessionState::TranslationEdited;
            }
        }
        Ok(())
    }

    pub fn run_nmt(&mut self, registry: &AdapterRegistry, engine: Option<&str>) -> Result<()> {
        self.require(Operation::RunNmt)?;
        let registry = with_engine(registry, Capability::Nmt, engine);
        let translator = registry.translator()?;
        let units = self
            .transcript
            .segments
            .iter()
            .map(|s| {
                Ok(TranslationUnit {
                    segment_id: s.id,
                    start: s.start,
                    end: s.end,
                    source_text: s.text.clone(),
                    target_text: translator.translate(&s.text, &self.source_lang, &self.target_lang)?,
                    edited: false,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.translation = TranslationDoc { units };
        self.raw_translation = self.translation.clone();
        self.state = SessionState::Translated;
        Ok(())
    }

    /// Synthesizes each unit. Units with no text are skipped and noted.
    pub fn run_tts(&mut self, store: &MediaStore, registry: &AdapterRegistry, voice: &str, engine: Option<&str>) -> Result<()> {
        self.require(Operation::RunTts)?;
        let registry = with_engine(registry, Capability::Tts, engine);
        let synth = registry.synthesizer()?;
        let mut assets = Vec::new();
        let mut notices = Vec::new();
        for u in &self.translation.units {
            if u.target_text.trim().is_empty() {
                notices.push(format!("segment {} skipped: empty text", u.segment_id));
                continue;
            }
            match synth.synthesize(store, &u.target_text, voice) {
                Ok(asset) => assets.push(SynthesizedUnit { segment_id: u.segment_id, asset }),
                Err(AdapterError::EmptyText) => notices.push(format!("segment {} skipped: empty text", u.segment_id)),
                Err(e) => return Err(e.into()),
            }
        }
        self.tts_assets = assets;
        self.notices.extend(notices);
        self.state = SessionState::Synthesized;
        Ok(())
    }

    /// Planner input: one pair per synthesized unit, in segment order.
    pub fn session_chunks(&self, face_available: bool) -> Result<Vec<SegmentPair>> {
        self.require(Operation::Chunks)?;
        let mut pairs: Vec<(Time, SegmentPair)> = self
            .tts_assets
            .iter()
            .filter_map(|t| {
                let u = self.translation.units.iter().find(|u| u.segment_id == t.segment_id)?;
                Some((
                    u.start,
                    SegmentPair {
                        chunk_id: u.segment_id,
                        video_duration: (u.end - u.start).as_secs_f64(),
                        audio_duration: t.asset.duration.as_secs_f64(),
                        face_available,
                    },
                ))
            })
            .collect();
        pairs.sort_by_key(|(start, p)| (*start, p.chunk_id));
        Ok(pairs.into_iter().map(|(_, p)| p).collect())
    }

    /// Returns to an earlier state and drops everything produced after it.
    pub fn reset(&mut self, to: SessionState) -> Result<()> {
        if to > self.state {
            return Err(S2sError::WrongState { op: Operation::for_reset(to), state: self.state });
        }
        use SessionState::*;
        if to < Synthesized {
            self.tts_assets.clear();
        }
        match to {
            New => {
                self.transcript = TimedTranscript::default();
                self.raw_transcript = TimedTranscript::default();
                self.transcript_edited.clear();
                self.translation = TranslationDoc::default();
                self.raw_translation = TranslationDoc::default();
            }
            Transcribed => {
                self.transcript = self.raw_transcript.clone();
                self.transcript_edited.clear();
                self.translation = TranslationDoc::default();
            }
            TranscriptEdited => self.translation = TranslationDoc::default(),
            Translated => self.translation = self.raw_translation.clone(),
            TranslationEdited | Synthesized => {}
        }
        self.state = to;
        Ok(())
    }

    pub fn cues(&self, doc: TextDoc) -> Vec<Cue> {
        match doc {
            TextDoc::Transcript => self
                .transcript
                .segments
                .iter()
                .map(|s| Cue { id: s.id, start: s.start, end: s.end, text: s.text.clone() })
                .collect(),
            TextDoc::Translation => self
                .translation
                .units
                .iter()
                .map(|u| Cue { id: u.segment_id, start: u.start, end: u.end, text: u.target_text.clone() })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("session serializes");
        std::fs::write(path, text).map_err(|e| S2sError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| S2sError::Io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| S2sError::Io(e.to_string()))
    }
}

impl Operation {
    /// The stage whose output a reset target would need.
    fn for_reset(to: SessionState) -> Operation {
        match to {
            SessionState::New | SessionState::Transcribed => Operation::RunAsr,
            SessionState::TranscriptEdited => Operation::EditTranscript,
            SessionState::Translated => Operation::RunNmt,
            SessionState::TranslationEdited => Operation::EditTranslation,
            SessionState::Synthesized => Operation::RunTts,
        }
    }
}
