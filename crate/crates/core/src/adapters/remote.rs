//! Remote adapters over HTTP.
//!
//! Wire contract: `POST {endpoint}/adapters/{capability}` with a multipart
//! body holding a `params` JSON part and one part per input medium (an
//! optional `{name}.faces` part carries face annotations of stills). The
//! reply is `{"artifacts": [{"ref", "name", "kind"}], "metadata": {...}}`;
//! artifacts are then fetched with `GET {endpoint}/artifacts/{ref}`.
//! Failures come back as `{"code", "message"}` with a 4xx/5xx status.
//!
//! [`execute`] and [`ingest_parts`] are the server half of the contract.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    AdapterDescriptor, AdapterError, AdapterImpl, AdapterRegistry, Capability, LineReader, LipSyncer, Reenactor,
    Result, Synthesizer, TalkingHeadGenerator, TextRegion, TimedTranscript, Transcriber, Translator, VocalSeparator,
};
use crate::geometry::PixelRect;
use crate::media::{Media, MediaStore};
use crate::project::{Asset, AssetKind};

pub const REMOTE_NAME: &str = "remote";
/// Store subdirectory for fetched artifacts.
pub const FETCH_DIR: &str = "remote";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout: Duration,
    /// Extra attempts after a transport error or 5xx reply.
    pub retries: u32,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig { endpoint: endpoint.into().trim_end_matches('/').to_string(), timeout: Duration::from_secs(600), retries: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    #[serde(rename = "ref")]
    pub reference: String,
    pub name: String,
    pub kind: AssetKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub artifacts: Vec<ArtifactRef>,
    #[serde(default)]
    pub metadata: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

impl From<&AdapterError> for WireError {
    fn from(e: &AdapterError) -> Self {
        let message = match e {
            AdapterError::UnsupportedLanguage(l) => l.clone(),
            AdapterError::AdapterFailure(m) => m.clone(),
            other => other.to_string(),
        };
        WireError { code: e.code().to_string(), message }
    }
}

impl From<WireError> for AdapterError {
    fn from(w: WireError) -> Self {
        match w.code.as_str() {
            "UnsupportedLanguage" => AdapterError::UnsupportedLanguage(w.message),
            "NoFaceFound" => AdapterError::NoFaceFound,
            "EmptyText" => AdapterError::EmptyText,
            _ => AdapterError::AdapterFailure(format!("{}: {}", w.code, w.message)),
        }
    }
}

/// One uploaded medium as received by the server.
#[derive(Debug, Clone)]
pub struct MediaPart {
    pub name: String,
    pub filename: String,
    pub bytes: Vec<u8>,
    pub faces: Option<Vec<u8>>,
}

fn failure(e: impl std::fmt::Display) -> AdapterError {
    AdapterError::AdapterFailure(e.to_string())
}

fn file_name(path: &str) -> &str {
    Path::new(path).file_name().and_then(|n| n.to_str()).unwrap_or(path)
}

/// Writes uploaded parts to the store and returns them by part name.
pub fn ingest_parts(store: &MediaStore, parts: Vec<MediaPart>) -> Result<BTreeMap<String, Asset>> {
    let dir = tempfile::tempdir().map_err(failure)?;
    let mut out = BTreeMap::new();
    for part in parts {
        let safe = file_name(&part.filename);
        if safe.is_empty() || safe.starts_with('.') {
            return Err(failure(format!("bad file name for part {}", part.name)));
        }
        let path = dir.path().join(format!("{}-{safe}", part.name));
        std::fs::write(&path, &part.bytes).map_err(failure)?;
        if let Some(faces) = &part.faces {
            let mut side = path.clone().into_os_string();
            side.push(".faces.json");
            std::fs::write(side, faces).map_err(failure)?;
        }
        out.insert(part.name, store.import(&path, "uploads")?);
    }
    Ok(out)
}

fn input<'a>(inputs: &'a BTreeMap<String, Asset>, name: &str) -> Result<&'a Asset> {
    inputs.get(name).ok_or_else(|| failure(format!("missing input {name}")))
}

fn param<'a>(params: &'a Value, name: &str) -> Result<&'a str> {
    params.get(name).and_then(Value::as_str).ok_or_else(|| failure(format!("missing parameter {name}")))
}

/// Runs `capability` on the registry's selected engine.
pub fn execute(
    registry: &AdapterRegistry,
    store: &MediaStore,
    capability: Capability,
    params: &Value,
    inputs: &BTreeMap<String, Asset>,
) -> Result<(Vec<(String, Asset)>, Value)> {
    let none = Value::Null;
    match capability {
        Capability::Asr => {
            let t = registry.transcriber()?.transcribe(store, input(inputs, "audio")?, param(params, "language")?)?;
            Ok((vec![], json!({ "transcript": t })))
        }
        Capability::Nmt => {
            let text = registry.translator()?.translate(
                param(params, "text")?,
                param(params, "src_lang")?,
                param(params, "tgt_lang")?,
            )?;
            Ok((vec![], json!({ "text": text })))
        }
        Capability::Tts => {
            let a = registry.synthesizer()?.synthesize(store, param(params, "text")?, param(params, "voice")?)?;
            Ok((vec![("audio".into(), a)], none))
        }
        Capability::Lipsync => {
            let roi: Option<PixelRect> = match params.get("roi") {
                None | Some(Value::Null) => None,
                Some(v) => Some(serde_json::from_value(v.clone()).map_err(failure)?),
            };
            let v = registry.lipsyncer()?.lipsync(store, input(inputs, "video")?, input(inputs, "audio")?, roi)?;
            Ok((vec![("video".into(), v)], none))
        }
        Capability::TalkingHead => {
            let v = registry.talking_head()?.talking_head(store, input(inputs, "image")?, input(inputs, "audio")?)?;
            Ok((vec![("video".into(), v)], none))
        }
        Capability::Reenact => {
            let v = registry.reenactor()?.reenact(
                store,
                input(inputs, "source_image")?,
                input(inputs, "driving_video")?,
            )?;
            Ok((vec![("video".into(), v)], none))
        }
        Capability::VocalSeparation => {
            let (s, m) = registry.vocal_separator()?.separate_vocals(store, input(inputs, "audio")?)?;
            Ok((vec![("speech".into(), s), ("music".into(), m)], none))
        }
        Capability::OcrLines => {
            let (img, _) = store.load(input(inputs, "frame")?)?.into_image()?;
            let regions = registry.line_reader()?.ocr_lines(&img)?;
            Ok((vec![], json!({ "regions": regions })))
        }
    }
}

/// Client for one capability on a remote server.
pub struct RemoteAdapter {
    config: RemoteConfig,
    descriptor: AdapterDescriptor,
    client: reqwest::blocking::Client,
}

impl RemoteAdapter {
    pub fn new(config: RemoteConfig, capability: Capability) -> Result<Self> {
        let client = reqwest::blocking::Client::builder().timeout(config.timeout).build().map_err(failure)?;
        Ok(RemoteAdapter {
            config,
            descriptor: AdapterDescriptor {
                capability,
                name: REMOTE_NAME.to_string(),
                is_stub: false,
                supported_languages: Default::default(),
                max_parallelism: None,
            },
            client,
        })
    }

    /// Remote adapters for every capability.
    pub fn all(config: &RemoteConfig) -> Result<Vec<AdapterImpl>> {
        let mk = |c| RemoteAdapter::new(config.clone(), c).map(Arc::new);
        Ok(vec![
            AdapterImpl::Transcriber(mk(Capability::Asr)?),
            AdapterImpl::Translator(mk(Capability::Nmt)?),
            AdapterImpl::Synthesizer(mk(Capability::Tts)?),
            AdapterImpl::LipSyncer(mk(Capability::Lipsync)?),
            AdapterImpl::TalkingHead(mk(Capability::TalkingHead)?),
            AdapterImpl::Reenactor(mk(Capability::Reenact)?),
            AdapterImpl::VocalSeparator(mk(Capability::VocalSeparation)?),
            AdapterImpl::LineReader(mk(Capability::OcrLines)?),
        ])
    }

    fn with_retries<T>(&self, mut attempt: impl FnMut() -> std::result::Result<T, (AdapterError, bool)>) -> Result<T> {
        let mut tries = 0;
        loop {
            match attempt() {
                Ok(v) => return Ok(v),
                Err((e, retryable)) if retryable && tries < self.config.retries => {
                    log::warn!("remote {} failed ({e}); retrying", self.descriptor.capability);
                    tries += 1;
                    thread::sleep(Duration::from_millis(100 * (1 << tries.min(5))));
                }
                Err((e, _)) => return Err(e),
            }
        }
    }

    fn media_part(store: &MediaStore, asset: &Asset) -> Result<(Vec<u8>, Option<Vec<u8>>, String)> {
        let path = store.resolve(&asset.uri);
        let bytes = std::fs::read(&path).map_err(failure)?;
        let mut side = path.clone().into_os_string();
        side.push(".faces.json");
        let faces = std::fs::read(side).ok();
        Ok((bytes, faces, file_name(&asset.uri).to_string()))
    }

    fn call(&self, store: Option<&MediaStore>, params: Value, inputs: &[(&str, &Asset)]) -> Result<RemoteResponse> {
        let mut parts = Vec::new();
        for (name, asset) in inputs {
            let store = store.expect("media inputs need a store");
            parts.push((name.to_string(), Self::media_part(store, asset)?));
        }
        let url = format!("{}/adapters/{}", self.config.endpoint, self.descriptor.capability);
        self.with_retries(|| {
            let mut form = reqwest::blocking::multipart::Form::new().text("params", params.to_string());
            for (name, (bytes, faces, filename)) in &parts {
                form = form.part(
                    name.clone(),
                    reqwest::blocking::multipart::Part::bytes(bytes.clone()).file_name(filename.clone()),
                );
                if let Some(f) = faces {
                    form = form.part(format!("{name}.faces"), reqwest::blocking::multipart::Part::bytes(f.clone()));
                }
            }
            let resp = self.client.post(&url).multipart(form).send().map_err(|e| (failure(e), true))?;
            let status = resp.status();
            if status.is_success() {
                return resp.json::<RemoteResponse>().map_err(|e| (failure(e), false));
            }
            let retry = status.is_server_error();
            let err = match resp.json::<WireError>() {
                Ok(w) => AdapterError::from(w),
                Err(_) => failure(format!("HTTP {status}")),
            };
            Err((err, retry))
        })
    }

    fn fetch(&self, store: &MediaStore, artifact: &ArtifactRef) -> Result<Asset> {
        let url = format!("{}/artifacts/{}", self.config.endpoint, artifact.reference);
        let bytes = self.with_retries(|| {
            let resp = self.client.get(&url).send().map_err(|e| (failure(e), true))?;
            let status = resp.status();
            if !status.is_success() {
                return Err((failure(format!("fetching {}: HTTP {status}", artifact.reference)), status.is_server_error()));
            }
            resp.bytes().map(|b| b.to_vec()).map_err(|e| (failure(e), true))
        })?;
        let dir = tempfile::tempdir().map_err(failure)?;
        let path = dir.path().join(file_name(&artifact.reference));
        std::fs::write(&path, bytes).map_err(failure)?;
        Ok(store.import(&path, FETCH_DIR)?)
    }

    fn artifact(&self, store: &MediaStore, resp: &RemoteResponse, name: &str) -> Result<Asset> {
        let a = resp
            .artifacts
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| failure(format!("reply has no {name} artifact")))?;
        self.fetch(store, a)
    }

    fn metadata<T: for<'de> Deserialize<'de>>(resp: &RemoteResponse, key: &str) -> Result<T> {
        serde_json::from_value(resp.metadata.get(key).cloned().unwrap_or(Value::Null)).map_err(failure)
    }
}

impl Transcriber for RemoteAdapter {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.descriptor
    }

    fn transcribe(&self, store: &MediaStore, audio: &Asset, language: &str) -> Result<TimedTranscript> {
        let resp = self.call(Some(store), json!({ "language": language }), &[("audio", audio)])?;
        Self::metadata(&resp, "transcript")
    }
}

impl Translator for RemoteAdapter {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.descriptor
    }

    fn translate(&self, text: &str, src_lang: &str, tgt_lang: &str) -> Result<String> {
        let resp = self.call(None, json!({ "text": text, "src_lang": src_lang, "tgt_lang": tgt_lang }), &[])?;
        Self::metadata(&resp, "text")
    }
}

impl Synthesizer for RemoteAdapter {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.descriptor
    }

    fn synthesize(&self, store: &MediaStore, text: &str, voice: &str) -> Result<Asset> {
        let resp = self.call(Some(store), json!({ "text": text, "voice": voice }), &[])?;
        self.artifact(store, &resp, "audio")
    }
}

impl LipSyncer for RemoteAdapter {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.descriptor
    }

    fn lipsync(&self, store: &MediaStore, video: &Asset, audio: &Asset, roi: Option<PixelRect>) -> Result<Asset> {
        let resp = self.call(Some(store), json!({ "roi": roi }), &[("video", video), ("audio", audio)])?;
        self.artifact(store, &resp, "video")
    }
}

impl TalkingHeadGenerator for RemoteAdapter {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.descriptor
    }

    fn talking_head(&self, store: &MediaStore, image: &Asset, audio: &Asset) -> Result<Asset> {
        let resp = self.call(Some(store), json!({}), &[("image", image), ("audio", audio)])?;
        self.artifact(store, &resp, "video")
    }
}

impl Reenactor for RemoteAdapter {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.descriptor
    }

    fn reenact(&self, store: &MediaStore, source_image: &Asset, driving_video: &Asset) -> Result<Asset> {
        let resp =
            self.call(Some(store), json!({}), &[("source_image", source_image), ("driving_video", driving_video)])?;
        self.artifact(store, &resp, "video")
    }
}

impl VocalSeparator for RemoteAdapter {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.descriptor
    }

    fn separate_vocals(&self, store: &MediaStore, audio: &Asset) -> Result<(Asset, Asset)> {
        let resp = self.call(Some(store), json!({}), &[("audio", audio)])?;
        Ok((self.artifact(store, &resp, "speech")?, self.artifact(store, &resp, "music")?))
    }
}

impl LineReader for RemoteAdapter {
    fn descriptor(&self) -> &AdapterDescriptor {
        &self.descriptor
    }

    fn ocr_lines(&self, frame: &RgbImage) -> Result<Vec<TextRegion>> {
        let dir = tempfile::tempdir().map_err(failure)?;
        let store = MediaStore::open(dir.path())?;
        let asset = store.put(&Media::Image { image: frame.clone(), faces: vec![] }, "")?;
        let resp = self.call(Some(&store), json!({}), &[("frame", &asset)])?;
        Self::metadata(&resp, "regions")
    }
}
