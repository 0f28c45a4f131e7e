use dubedit::adapters::AdapterRegistry;
use dubedit::fixtures::speech_audio;
use dubedit::media::{Media, MediaStore};
use dubedit::project::Asset;
use dubedit::s2s::{Operation, PipelineSession, S2sError, SessionState, TextDoc};
use proptest::prelude::*;

struct Rig {
    _dir: tempfile::TempDir,
    store: MediaStore,
    registry: AdapterRegistry,
    audio: Asset,
}

fn rig() -> Rig {
    let dir = tempfile::tempdir().unwrap();
    let store = MediaStore::open(dir.path()).unwrap();
    let audio = store.put(&Media::Audio(speech_audio(16_000, 4.0)), "imports").unwrap();
    Rig { _dir: dir, store, registry: AdapterRegistry::with_stubs(), audio }
}

// Rows follow SessionState::ALL, columns follow Operation::ALL.
const ALLOWED: [[bool; 6]; 6] = [
    // asr    edit_t  nmt    edit_tl tts    chunks
    [true, false, false, false, false, false],
    [false, true, true, false, false, false],
    [false, true, true, false, false, false],
    [false, false, false, true, true, false],
    [false, false, false, true, true, false],
    [false, false, false, false, false, true],
];

fn apply(rig: &Rig, s: &mut PipelineSession, op: Operation) -> Result<(), S2sError> {
    match op {
        Operation::RunAsr => s.run_asr(&rig.store, &rig.registry, &rig.audio, None),
        Operation::EditTranscript => s.edit_text(TextDoc::Transcript, 1, "corrected"),
        Operation::RunNmt => s.run_nmt(&rig.registry, None),
        Operation::EditTranslation => s.edit_text(TextDoc::Translation, 1, "revised"),
        Operation::RunTts => s.run_tts(&rig.store, &rig.registry, "v", None),
        Operation::Chunks => s.session_chunks(false).map(|_| ()),
    }
}

fn session_in(rig: &Rig, state: SessionState) -> PipelineSession {
    let path: &[Operation] = match state {
        SessionState::New => &[],
        SessionState::Transcribed => &[Operation::RunAsr],
        SessionState::TranscriptEdited => &[Operation::RunAsr, Operation::EditTranscript],
        SessionState::Translated => &[Operation::RunAsr, Operation::RunNmt],
        SessionState::TranslationEdited => &[Operation::RunAsr, Operation::RunNmt, Operation::EditTranslation],
        SessionState::Synthesized => &[Operation::RunAsr, Operation::RunNmt, Operation::RunTts],
    };
    let mut s = PipelineSession::new("s", "en", "hi");
    for op in path {
        apply(rig, &mut s, *op).unwrap();
    }
    assert_eq!(s.state, state);
    s
}

#[test]
fn every_state_operation_pair_matches_the_table() {
    let rig = rig();
    for (si, state) in SessionState::ALL.iter().enumerate() {
        for (oi, op) in Operation::ALL.iter().enumerate() {
            let mut s = session_in(&rig, *state);
            let before = s.clone();
            let result = apply(&rig, &mut s, *op);
            if ALLOWED[si][oi] {
                assert!(result.is_ok(), "{op} in {state}: {result:?}");
            } else {
                assert_eq!(result, Err(S2sError::WrongState { op: *op, state: *state }));
                assert_eq!(s, before, "{op} in {state} mutated a refused session");
            }
        }
    }
}

#[test]
fn edited_transcript_reaches_translation() {
    let rig = rig();
    let mut s = session_in(&rig, SessionState::Transcribed);
    s.edit_text(TextDoc::Transcript, 2, "a fixed sentence").unwrap();
    s.run_nmt(&rig.registry, None).unwrap();
    let unit = s.translation.units.iter().find(|u| u.segment_id == 2).unwrap();
    assert_eq!(unit.source_text, "a fixed sentence");
    assert_eq!(unit.target_text, "⟦hi⟧a fixed sentence");
}

fn rank(state: SessionState) -> usize {
    SessionState::ALL.iter().position(|s| *s == state).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_call_sequences_only_move_forward(ops in prop::collection::vec(0usize..6, 1..14)) {
        let rig = rig();
        let mut s = PipelineSession::new("s", "en", "hi");
        for i in ops {
            let op = Operation::ALL[i];
            let before = s.state;
            let allowed = ALLOWED[rank(before)][i];
            let result = apply(&rig, &mut s, op);
            prop_assert_eq!(result.is_ok(), allowed, "{} in {}", op, before);
            prop_assert!(rank(s.state) >= rank(before));
            if !allowed {
                prop_assert_eq!(s.state, before);
            }
        }
    }
}
