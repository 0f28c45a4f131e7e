use std::path::Path;
use std::time::{Duration, Instant};

use dubedit::adapters::remote::{RemoteAdapter, RemoteConfig};
use dubedit::adapters::AdapterRegistry;
use dubedit::fixtures::{face_video, lecture, speech_audio, FacePlacement};
use dubedit::lecture::{translate_lecture, LectureOptions};
use dubedit::media::{self, Media, MediaStore};
use dubedit::time::Fps;
use dubedit_server::{serve, AppState, ServerConfig};
use reqwest::blocking::{multipart, Client};
use reqwest::StatusCode;
use serde_json::{json, Value};

struct Server {
    base: String,
    client: Client,
    _runtime: tokio::runtime::Runtime,
}

fn start(root: &Path) -> Server {
    let state = AppState::open(ServerConfig::new(root)).unwrap();
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    runtime.spawn(serve(listener, state));
    Server { base, client: Client::new(), _runtime: runtime }
}

impl Server {
    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn send(&self, req: reqwest::blocking::RequestBuilder) -> (StatusCode, Value) {
        let resp = req.send().unwrap();
        let status = resp.status();
        let text = resp.text().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    fn get(&self, path: &str) -> (StatusCode, Value) {
        self.send(self.client.get(self.url(path)))
    }

    fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.send(self.client.post(self.url(path)).json(&body))
    }

    fn put(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.send(self.client.put(self.url(path)).json(&body))
    }

    fn delete(&self, path: &str) -> (StatusCode, Value) {
        self.send(self.client.delete(self.url(path)))
    }

    fn upload(&self, project: &str, media: &Media, name: &str) -> Value {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        media::write_media(media, &path).unwrap();
        let form = multipart::Form::new().part("file", multipart::Part::bytes(std::fs::read(&path).unwrap()).file_name(name.to_string()));
        let (status, body) = self.send(self.client.post(self.url(&format!("/projects/{project}/media"))).multipart(form));
        assert_eq!(status, StatusCode::OK, "{body}");
        body["assets"]["file"].clone()
    }

    fn wait_job(&self, id: &str) -> Value {
        let deadline = Instant::now() + Duration::from_secs(60);
        loop {
            let (status, body) = self.get(&format!("/jobs/{id}"));
            assert_eq!(status, StatusCode::OK, "{body}");
            if ["DONE", "FAILED", "CANCELLED"].contains(&body["state"].as_str().unwrap()) {
                return body;
            }
            assert!(Instant::now() < deadline, "job {id} did not finish");
            std::thread::sleep(Duration::from_millis(20));
        }
    }

    fn step(&self, session: &str, step: &str, body: Value) -> Value {
        let (status, reply) = self.post(&format!("/sessions/{session}/s2s/{step}"), body);
        assert_eq!(status, StatusCode::ACCEPTED, "{reply}");
        let done = self.wait_job(reply["job_id"].as_str().unwrap());
        assert_eq!(done["state"], "DONE", "{done}");
        done
    }
}

fn face_clip() -> Media {
    let face = FacePlacement { center: [80.0, 60.0], width: 56.0, sway: 1.0 };
    face_video(160, 120, Fps::integer(10), 20, &[face], Some(speech_audio(16_000, 2.0)))
}

#[test]
fn project_documents_round_trip_with_revision_checks() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(dir.path());
    let (status, project) = srv.post("/projects", json!({}));
    assert_eq!(status, StatusCode::CREATED);
    let id = project["id"].as_str().unwrap().to_string();
    let asset = srv.upload(&id, &face_clip(), "face.mzv");
    let (_, track) = srv.post(&format!("/projects/{id}/tracks"), json!({ "kind": "video" }));
    let track_id = track["track_id"].as_str().unwrap();
    let (status, clip) = srv.post(&format!("/projects/{id}/clips"), json!({ "track_id": track_id, "asset": asset["id"], "at": 0.5 }));
    assert_eq!(status, StatusCode::OK, "{clip}");
    let (status, err) = srv.post(&format!("/projects/{id}/clips"), json!({ "track_id": track_id, "asset": asset["id"], "at": 1.0 }));
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "Overlap");
    assert!(err["message"].is_string());

    let (status, markers) = srv.put(&format!("/projects/{id}/markers"), json!({ "start": 1.0, "end": 2.0 }));
    assert_eq!(status, StatusCode::OK, "{markers}");
    assert_eq!((markers["start"].as_f64(), markers["end"].as_f64()), (Some(1.0), Some(2.0)));

    let (_, current) = srv.get(&format!("/projects/{id}"));
    assert_eq!(current["tracks"][0]["clips"][0]["id"], clip["id"]);
    let mut stale = current.clone();
    stale["revision"] = json!(current["revision"].as_u64().unwrap() - 1);
    let (status, err) = srv.put(&format!("/projects/{id}"), stale);
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "RevisionConflict");
    let mut edited = current.clone();
    edited["markers"] = Value::Null;
    let (status, saved) = srv.put(&format!("/projects/{id}"), edited);
    assert_eq!(status, StatusCode::OK, "{saved}");
    assert_eq!(saved["revision"].as_u64(), Some(current["revision"].as_u64().unwrap() + 1));
    assert!(saved["markers"].is_null());

    let (status, err) = srv.get("/projects/nope");
    assert_eq!((status, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownProject")));

    drop(srv);
    let srv = start(dir.path());
    let (status, reloaded) = srv.get(&format!("/projects/{id}"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(reloaded, saved);
}

#[test]
fn speech_session_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(dir.path());
    let (_, project) = srv.post("/projects", json!({ "id": "talk" }));
    assert_eq!(project["id"], "talk");
    let audio = srv.upload("talk", &Media::Audio(speech_audio(16_000, 4.0)), "speech.wav");

    let (status, err) = srv.post("/sessions/s1/s2s/nmt", json!({}));
    assert_eq!((status, err["code"].as_str()), (StatusCode::CONFLICT, Some("WrongState")));
    let done = srv.step("s1", "asr", json!({ "audio": audio["id"], "source_lang": "en", "target_lang": "hi" }));
    assert_eq!(done["metadata"]["state"], "TRANSCRIBED");

    let (status, err) = srv.put("/sessions/s1/text/translation/1", json!({ "text": "early" }));
    assert_eq!((status, err["code"].as_str()), (StatusCode::CONFLICT, Some("WrongState")));
    let (status, edit) = srv.put("/sessions/s1/text/transcript/1", json!({ "text": "fixed line" }));
    assert_eq!(status, StatusCode::OK, "{edit}");
    assert_eq!(edit["state"], "TRANSCRIPT_EDITED");
    assert_eq!(edit["cues"][0]["text"], "fixed line");
    let (status, err) = srv.put("/sessions/s1/text/transcript/99", json!({ "text": "x" }));
    assert_eq!((status, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownSegment")));

    srv.step("s1", "nmt", json!({}));
    let (_, session) = srv.get("/sessions/s1");
    assert_eq!(session["translation"]["units"][0]["target_text"], "⟦hi⟧fixed line");
    srv.step("s1", "tts", json!({ "voice": "a" }));
    let (_, listing) = srv.get("/sessions/s1/artifacts");
    assert_eq!(listing["artifacts"].as_array().unwrap().len(), 2);
    let (status, chunks) = srv.post("/sessions/s1/s2s/chunks", json!({ "face_available": true }));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(chunks["pairs"].as_array().unwrap().len(), 2);

    let (status, reset) = srv.post("/sessions/s1/s2s/reset", json!({ "to": "TRANSCRIBED" }));
    assert_eq!((status, reset["state"].as_str()), (StatusCode::OK, Some("TRANSCRIBED")));
    drop(srv);
    let srv = start(dir.path());
    let (_, session) = srv.get("/sessions/s1");
    assert_eq!(session["state"], "TRANSCRIBED");
    assert_eq!(session["transcript"]["segments"][0]["text"].as_str().map(|t| t != "fixed line"), Some(true));
}

#[test]
fn jobs_artifacts_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(dir.path());
    let (_, _) = srv.post("/projects", json!({ "id": "p" }));
    let video = srv.upload("p", &face_clip(), "face.mzv");
    let audio = srv.upload("p", &Media::Audio(speech_audio(16_000, 2.0)), "voice.wav");

    let (status, err) = srv.post("/projects/p/jobs", json!({ "kind": "lipsync", "inputs": { "video": "m0", "audio": audio["id"] }, "session_id": "e" }));
    assert_eq!((status, err["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("UnresolvedInput")));
    let (status, reply) = srv.post(
        "/projects/p/jobs",
        json!({ "kind": "lipsync", "inputs": { "video": video["id"], "audio": audio["id"] }, "session_id": "e" }),
    );
    assert_eq!(status, StatusCode::ACCEPTED, "{reply}");
    let job = reply["job_id"].as_str().unwrap().to_string();
    let done = srv.wait_job(&job);
    assert_eq!((done["state"].as_str(), done["progress"].as_f64()), (Some("DONE"), Some(1.0)));
    let reference = done["output_artifact_refs"][0].as_str().unwrap();
    let bytes = srv.client.get(srv.url(&format!("/artifacts/{reference}"))).send().unwrap().bytes().unwrap();
    let fetched = dir.path().join("fetched.mzv");
    std::fs::write(&fetched, &bytes).unwrap();
    assert!(matches!(media::read_media(&fetched).unwrap(), Media::Video { .. }));

    let (status, err) = srv.delete(&format!("/jobs/{job}"));
    assert_eq!((status, err["code"].as_str()), (StatusCode::CONFLICT, Some("AlreadyTerminal")));
    let (status, err) = srv.get("/jobs/j999");
    assert_eq!((status, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownJob")));
    let (status, _) = srv.get("/artifacts/..%2F..%2Fetc%2Fpasswd");
    assert_ne!(status, StatusCode::OK);
    let (status, _) = srv.get("/artifacts/sessions/../../jobs/j1.json");
    assert_ne!(status, StatusCode::OK);

    let (_, track) = srv.post("/projects/p/tracks", json!({ "kind": "video" }));
    let (status, placed) = srv.post("/projects/p/clips", json!({ "track_id": track["track_id"], "asset": reference, "at": 0.0 }));
    assert_eq!(status, StatusCode::OK, "{placed}");
    let (status, err) = srv.post("/export", json!({ "project_id": "p", "fps": 0 }));
    assert_eq!((status, err["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("InvalidSettings")));
    let (status, reply) = srv.post("/export", json!({ "project_id": "p", "quality": "low", "fps": 10 }));
    assert_eq!(status, StatusCode::ACCEPTED, "{reply}");
    let done = srv.wait_job(reply["job_id"].as_str().unwrap());
    assert_eq!(done["state"], "DONE", "{done}");

    let (status, closed) = srv.delete("/sessions/e?project=p");
    assert_eq!(status, StatusCode::OK);
    assert!(closed["deleted"].as_array().unwrap().iter().all(|u| u.as_str() != Some(reference)));
    assert!(dir.path().join("media").join(reference).exists());
}

#[test]
fn remote_adapters_reproduce_local_results() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(&dir.path().join("server"));
    let mut remote = AdapterRegistry::with_stubs();
    for adapter in RemoteAdapter::all(&RemoteConfig::new(srv.base.clone())).unwrap() {
        remote.register_selected(adapter);
    }
    let input = dir.path().join("lecture.mzv");
    media::write_media(&lecture(6).media, &input).unwrap();
    let mut opts = LectureOptions::new("en", "hi");
    opts.bg_translate = true;
    opts.lipsync = true;
    opts.separate_music = true;
    let mut outputs = Vec::new();
    for (name, registry) in [("local", AdapterRegistry::with_stubs()), ("remote", remote)] {
        let store = MediaStore::open(dir.path().join(name)).unwrap();
        let out = dir.path().join(format!("{name}.mzv"));
        let report = translate_lecture(&store, &registry, &input, &out, &opts).unwrap();
        outputs.push((std::fs::read(&out).unwrap(), report.session.translation, report.overlays));
    }
    assert_eq!(outputs[0].1, outputs[1].1);
    assert_eq!(outputs[0].2, outputs[1].2);
    assert!(outputs[0].0 == outputs[1].0, "remote and local renders differ");
}

#[test]
fn remote_errors_keep_their_codes() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(dir.path());
    let form = multipart::Form::new().text("params", json!({ "text": "", "voice": "a" }).to_string());
    let (status, err) = srv.send(srv.client.post(srv.url("/adapters/tts")).multipart(form));
    assert!(status.is_client_error(), "{status}");
    assert_eq!(err["code"], "EmptyText");
    let form = multipart::Form::new().text("params", "{}");
    let (status, err) = srv.send(srv.client.post(srv.url("/adapters/teleport")).multipart(form));
    assert_eq!((status, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownCapability")));
}
