use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dubedit::fixtures::lecture;
use dubedit::media::{self, Media};
use dubedit::s2s::PipelineSession;

fn dubedit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dubedit")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(dir: &Path) -> PathBuf {
    let input = dir.join("lecture.mzv");
    media::write_media(&lecture(6).media, &input).unwrap();
    input
}

fn translate(dir: &Path, extra: &[&str]) -> (Output, PathBuf) {
    let input = fixture(dir);
    let out = dir.join("out.mzv");
    let mut args = vec!["translate-lecture", input.to_str().unwrap(), "--src", "en", "--tgt", "hi", "-o", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (dubedit(&args), out)
}

#[test]
fn translates_fixture_and_matches_planned_length() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = translate(dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out.work/report.json")).unwrap()).unwrap();
    let planned = report["timeline_length"].as_f64().unwrap();
    let probe = media::probe(&out).unwrap();
    assert!((probe.duration.as_secs_f64() - planned).abs() <= 0.1 + 1e-9);
    for c in report["chunks"].as_array().unwrap() {
        assert!(c["mismatch"].as_f64().unwrap() <= 0.05);
    }
}

#[test]
fn undecodable_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mzv");
    std::fs::write(&bad, b"definitely not media").unwrap();
    let out = dir.path().join("o.mzv");
    let o = dubedit(&["translate-lecture", bad.to_str().unwrap(), "--src", "en", "--tgt", "hi", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("undecodable input"), "{}", stderr(&o));
}

#[test]
fn edits_sidecar_reaches_tts_text() {
    let dir = tempfile::tempdir().unwrap();
    let edits = dir.path().join("edits.json");
    std::fs::write(&edits, r#"{"transcript": {"1": "fixed words"}}"#).unwrap();
    let (o, _) = translate(dir.path(), &["--edits", edits.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let session = PipelineSession::load(&dir.path().join("out.work/session.json")).unwrap();
    assert_eq!(session.translation.units[0].target_text, "⟦hi⟧fixed words");
    assert_eq!(session.tts_assets[0].segment_id, 1);
}

#[test]
fn bad_policy_and_engine_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = translate(dir.path(), &["--policy", "s_min=2"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let (o, _) = translate(dir.path(), &["--engine", "nonsense=x"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unreachable_remote_is_an_adapter_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = translate(dir.path(), &["--remote", "http://127.0.0.1:9"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn export_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = translate(dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let project = dir.path().join("out.work/project.json");
    let again = dir.path().join("again.mzv");
    let o = dubedit(&["export", project.to_str().unwrap(), "-o", again.to_str().unwrap(), "--quality", "high"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(matches!(media::read_media(&again).unwrap(), Media::Video { .. }));

    let o = dubedit(&["export", project.to_str().unwrap(), "-o", again.to_str().unwrap(), "--fps", "0"]);
    assert_eq!(o.status.code(), Some(2));

    let corrupt = dir.path().join("corrupt.json");
    std::fs::write(&corrupt, "{ not json").unwrap();
    let o = dubedit(&["export", corrupt.to_str().unwrap(), "-o", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plan_prints_edl() {
    let o = dubedit(&["plan", "10", "10.5"]);
    assert!(o.status.success());
    let edl: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let actions = edl["actions"].as_array().unwrap();
    assert_eq!(actions.len(), 1);
    assert_eq!(actions[0]["action"], "RETIME_VIDEO");
}
