//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Every check compares against an oracle written here, not
//! against library helpers.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use dubedit::adapters::AdapterRegistry;
use dubedit::face::{build_face_mask, composite_face, crop, default_feather, hull_mask, lipsync_segment, KeypointSet, LipsyncOptions};
use dubedit::fixtures::{self, cut_video, deck_slide, face_video, lecture, slide_frame, speech_over_music, FacePlacement};
use dubedit::geometry::PixelRect;
use dubedit::jobs::{JobConfig, JobOutput, JobService, JobSpec, JobState};
use dubedit::media::{self, Audio, Media, MediaStore};
use dubedit::project::{Asset, AssetKind, Clip, Project, Resolution, TimeRange, TrackKind};
use dubedit::s2s::{Operation, PipelineSession, S2sError, SessionState, TextDoc};
use dubedit::slides::{
    detect_constant_slide_spans, extract_slide_text, layout_boxes, render_overlay, translate_regions, OverlaySpec,
    DEFAULT_STABILITY_THRESHOLD,
};
use dubedit::sync::{compute_sync_plan, validate_plan, ActionKind, SegmentPair, SyncPolicy};
use dubedit::time::{Fps, Speed, Time};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Check = fn() -> Result<String>;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 8] = [
        ("end-to-end stub lecture translation", e2e_lecture),
        ("sync planner matches brute force on the duration grid", planner_grid),
        ("face compositing exactness", face_compositing),
        ("slide span detection and overlay containment", slide_spans),
        ("speech pipeline state machine", s2s_machine),
        ("vocal separation round trip", vocal_separation),
        ("timeline algebra", timeline_algebra),
        ("job service", job_service),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            bail!("panicked: {}", msg.unwrap_or_default())
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{}] {name} ({secs:.1} s): {detail}", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL [{}] {name} ({secs:.1} s): {e:#}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn e2e_lecture() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("lecture.mzv");
    media::write_media(&lecture(30).media, &input)?;
    let mut outputs = Vec::new();
    let mut slowest = 0.0f64;
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}.mzv"));
        let started = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_dubedit"))
            .args(["translate-lecture", input.to_str().unwrap(), "--src", "en", "--tgt", "hi", "-o", out.to_str().unwrap()])
            .args(["--bg-translate", "--lipsync"])
            .output()?;
        let elapsed = started.elapsed().as_secs_f64();
        slowest = slowest.max(elapsed);
        ensure!(status.status.success(), "exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr));
        ensure!(elapsed < 60.0, "run {run} took {elapsed:.1} s");
        let work = dir.path().join(format!("run{run}.work"));
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(work.join("report.json"))?)?;
        let chunks = report["chunks"].as_array().context("chunks")?;
        ensure!(!chunks.is_empty(), "no chunks were synchronised");
        for c in chunks {
            let gap = (c["video_duration"].as_f64().unwrap() - c["audio_duration"].as_f64().unwrap()).abs();
            ensure!(gap <= 0.05 + 1e-12, "chunk {} mismatch {gap:.4} s", c["chunk_id"]);
        }
        let probe = media::probe(&out)?;
        let planned = report["timeline_length"].as_f64().unwrap();
        let frame = fixtures::LECTURE_FPS.frame_duration().as_secs_f64();
        ensure!((probe.duration.as_secs_f64() - planned).abs() <= frame + 1e-9, "output {} vs planned {planned}", probe.duration);
        outputs.push((std::fs::read(&out)?, std::fs::read(work.join("project.json"))?));
    }
    ensure!(outputs[0].0 == outputs[1].0, "rendered outputs differ between runs");
    ensure!(outputs[0].1 == outputs[1].1, "project files differ between runs");
    Ok(format!("exit 0, slowest run {slowest:.1} s, mismatch within 50 ms, runs bit-identical"))
}

fn oracle_cost(policy: &SyncPolicy, pair: &SegmentPair, f_v: f64, f_a: f64) -> f64 {
    let retime = |f: f64| policy.retime_cost_weight * (1.0 - f).abs();
    let video = pair.video_duration / f_v;
    let audio = pair.audio_duration / f_a;
    let closing = if audio > video {
        let short = audio - video;
        let hold = policy.hold_cost_weight * short;
        if pair.face_available {
            hold.min(policy.fill_cost_weight * short)
        } else {
            hold
        }
    } else {
        policy.hold_cost_weight * (video - audio)
    };
    retime(f_v) + retime(f_a) + closing
}

fn oracle_min(policy: &SyncPolicy, pair: &SegmentPair) -> f64 {
    let [lo, hi] = policy.speed_bounds;
    let n = ((hi - lo) / 1e-3).round() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    grid.push(1.0);
    let (v, a) = (pair.video_duration, pair.audio_duration);
    let mut best = f64::INFINITY;
    for &x in &grid {
        for &y in &grid {
            best = best.min(oracle_cost(policy, pair, x, y));
        }
        for (fv, fa) in [(x, a / v * x), (v / a * x, x)] {
            if (lo..=hi).contains(&fv) && (lo..=hi).contains(&fa) {
                best = best.min(oracle_cost(policy, pair, fv, fa));
            }
        }
    }
    best
}

fn planner_grid() -> Result<String> {
    let policy = SyncPolicy::default();
    let durations: Vec<f64> = (2..=30).map(|k| k as f64 * 0.5).collect();
    let mut worst = 0.0f64;
    let mut count = 0;
    for face in [false, true] {
        for &v in &durations {
            for &a in &durations {
                let pair = SegmentPair { chunk_id: 1, video_duration: v, audio_duration: a, face_available: face };
                let plan = compute_sync_plan(&[pair], &policy)?;
                let findings = validate_plan(&plan, &[pair]).findings;
                ensure!(findings.is_empty(), "({v}, {a}, face={face}) has findings {findings:?}");
                let diff = (plan.total_cost - oracle_min(&policy, &pair)).abs();
                ensure!(diff <= 1e-6, "({v}, {a}, face={face}) cost {} off by {diff:e}", plan.total_cost);
                let (mut f_v, mut f_a) = (1.0, 1.0);
                for action in &plan.actions {
                    match action.kind {
                        ActionKind::RetimeVideo { factor } => f_v = factor,
                        ActionKind::RetimeAudio { factor } => f_a = factor,
                        _ => {}
                    }
                }
                let own = oracle_cost(&policy, &pair, f_v, f_a);
                ensure!((own - plan.total_cost).abs() <= 1e-6, "({v}, {a}) reported cost {} but its factors cost {own}", plan.total_cost);
                worst = worst.max(diff);
                count += 1;
            }
        }
    }
    Ok(format!("{count} plans validate, worst cost gap {worst:.1e}"))
}

/// Lattice points of the closed convex hull, found as the union of every
/// non-degenerate triangle over the point set.
fn brute_hull_count(points: &[[i64; 2]], width: i64, height: i64) -> usize {
    let cross = |a: [i64; 2], b: [i64; 2], p: [i64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let mut triangles = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            for k in j + 1..points.len() {
                if cross(points[i], points[j], points[k]) != 0 {
                    triangles.push([points[i], points[j], points[k]]);
                }
            }
        }
    }
    let mut count = 0;
    for y in 0..height {
        for x in 0..width {
            let p = [x, y];
            let inside = triangles.iter().any(|t| {
                let d = [cross(t[0], t[1], p), cross(t[1], t[2], p), cross(t[2], t[0], p)];
                d.iter().all(|v| *v >= 0) || d.iter().all(|v| *v <= 0)
            });
            count += usize::from(inside);
        }
    }
    count
}

fn face_compositing() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (w, h) = (160u32, 120u32);
    let mut frames_checked = 0;
    while frames_checked < 50 {
        let face = FacePlacement {
            center: [rng.gen_range(50.0..110.0f32).round(), rng.gen_range(45.0..75.0f32).round()],
            width: rng.gen_range(36.0..60.0),
            sway: rng.gen_range(0.0..3.0),
        };
        let media = face_video(w, h, Fps::integer(10), 12, &[face], None);
        let (video, _, faces) = media.into_video()?;
        for _ in 0..10 {
            let i = rng.gen_range(0..video.frames.len());
            let frame = &video.frames[i];
            let kp = KeypointSet::new(faces[0].landmarks_at(i).context("landmarks")?, w, h)?;
            let mask = build_face_mask(&kp, default_feather(kp.face_width()), w, h)?;
            let bbox = mask.rect;
            let same = composite_face(frame, &crop(frame, bbox), &mask, bbox)?;
            ensure!(&same == frame, "identity composite changed frame {i}");
            let noise = RgbImage::from_fn(bbox.width(), bbox.height(), |_, _| Rgb([rng.gen(), rng.gen(), rng.gen()]));
            let out = composite_face(frame, &noise, &mask, bbox)?;
            for (x, y, p) in out.enumerate_pixels() {
                let inside = x >= bbox.x0 && x < bbox.x1 && y >= bbox.y0 && y < bbox.y1;
                ensure!(inside || p == frame.get_pixel(x, y), "pixel ({x},{y}) outside the bbox changed");
            }
            ensure!(&out != frame, "noise composite left the face untouched");
            frames_checked += 1;
        }
    }
    let mut areas = Vec::new();
    for _ in 0..20 {
        let n = rng.gen_range(3..16);
        let pts: Vec<[i64; 2]> = (0..n).map(|_| [rng.gen_range(0..64), rng.gen_range(0..64)]).collect();
        let expected = brute_hull_count(&pts, 64, 64);
        let floats: Vec<[f32; 2]> = pts.iter().map(|p| [p[0] as f32, p[1] as f32]).collect();
        match hull_mask(&floats, 0.0, 64, 64) {
            Ok(mask) => {
                ensure!(mask.opaque_count() == expected, "hull of {pts:?}: mask {} vs brute {expected}", mask.opaque_count());
                ensure!(mask.support_count() == expected, "unfeathered mask has partial alpha");
                areas.push(expected);
            }
            Err(_) => ensure!(expected == 0, "degenerate verdict for a hull covering {expected} pixels"),
        }
    }
    Ok(format!("{frames_checked} frames bit-exact, outside-bbox pixels untouched, {} hull areas exact", areas.len()))
}

fn slide_spans() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let store = MediaStore::open(dir.path())?;
    let registry = AdapterRegistry::with_stubs();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let fps = Fps::integer(10);
    let mut worst = 0u64;
    for _ in 0..20 {
        let frames = 40;
        let cut = rng.gen_range(2..frames - 2);
        let asset = store.put(&cut_video(160, 90, fps, frames, &[cut]), "fixtures")?;
        let range = TimeRange::new(Time::ZERO, asset.duration)?;
        let spans = detect_constant_slide_spans(&store, &asset, &range, DEFAULT_STABILITY_THRESHOLD)?;
        ensure!(spans.len() == 2, "cut at {cut}: {} spans", spans.len());
        let found = spans[1].range.start.frame_round(fps);
        let err = found.abs_diff(cut as u64);
        ensure!(err <= 1, "cut at {cut} detected at {found}");
        worst = worst.max(err);
    }
    let mut regions_checked = 0;
    for k in 0..4 {
        let (bg, ink) = [(fixtures::SLIDE_BG, fixtures::SLIDE_INK), (Rgb([30, 40, 60]), Rgb([250, 250, 250]))][k % 2];
        let (img, _) = slide_frame(320, 180, bg, ink, &deck_slide(k));
        let found = extract_slide_text(&registry, &img, None)?;
        ensure!(!found.is_empty(), "slide {k}: no text found");
        let translated = translate_regions(&registry, &found, "en", "hi", None)?;
        let spec = OverlaySpec::from_regions(&img, &translated);
        let out = render_overlay(&img, &spec)?;
        let inside = |x: u32, y: u32| spec.regions.iter().any(|r| x >= r.bbox.x0 && x < r.bbox.x1 && y >= r.bbox.y0 && y < r.bbox.y1);
        for (x, y, p) in out.enumerate_pixels() {
            ensure!(inside(x, y) || p == img.get_pixel(x, y), "slide {k}: pixel ({x},{y}) outside regions changed");
        }
        for (r, boxes) in spec.regions.iter().zip(layout_boxes(&spec)?) {
            let mut ink_box: Option<[u32; 4]> = None;
            for y in r.bbox.y0..r.bbox.y1 {
                for x in r.bbox.x0..r.bbox.x1 {
                    if out.get_pixel(x, y).0 != r.fill_color {
                        let b = ink_box.get_or_insert([x, y, x + 1, y + 1]);
                        *b = [b[0].min(x), b[1].min(y), b[2].max(x + 1), b[3].max(y + 1)];
                    }
                }
            }
            let ink_box = ink_box.with_context(|| format!("slide {k}: nothing drawn for {:?}", r.translated_text))?;
            let within = |o: &PixelRect| o.x0 >= r.bbox.x0 && o.y0 >= r.bbox.y0 && o.x1 <= r.bbox.x1 && o.y1 <= r.bbox.y1;
            ensure!(within(&PixelRect::new(ink_box[0], ink_box[1], ink_box[2], ink_box[3])), "slide {k}: ink escapes region");
            for b in &boxes {
                ensure!(within(b), "slide {k}: text box {b:?} escapes region {:?}", r.bbox);
            }
            regions_checked += 1;
        }
    }
    Ok(format!("20 cuts recovered (worst error {worst} frames), {regions_checked} overlay regions contained"))
}

fn s2s_machine() -> Result<String> {
    // Rows: NEW, TRANSCRIBED, TRANSCRIPT_EDITED, TRANSLATED, TRANSLATION_EDITED, SYNTHESIZED.
    // Columns: asr, edit transcript, nmt, edit translation, tts, chunks.
    const TABLE: [[bool; 6]; 6] = [
        [true, false, false, false, false, false],
        [false, true, true, false, false, false],
        [false, true, true, false, false, false],
        [false, false, false, true, true, false],
        [false, false, false, true, true, false],
        [false, false, false, false, false, true],
    ];
    let dir = tempfile::tempdir()?;
    let store = MediaStore::open(dir.path())?;
    let registry = AdapterRegistry::with_stubs();
    let audio = store.put(&Media::Audio(fixtures::speech_audio(16_000, 4.0)), "imports")?;
    let apply = |s: &mut PipelineSession, op: Operation| -> std::result::Result<(), S2sError> {
        match op {
            Operation::RunAsr => s.run_asr(&store, &registry, &audio, None),
            Operation::EditTranscript => s.edit_text(TextDoc::Transcript, 1, "edited words"),
            Operation::RunNmt => s.run_nmt(&registry, None),
            Operation::EditTranslation => s.edit_text(TextDoc::Translation, 1, "revised"),
            Operation::RunTts => s.run_tts(&store, &registry, "v", None),
            Operation::Chunks => s.session_chunks(false).map(|_| ()),
        }
    };
    let paths: [&[Operation]; 6] = [
        &[],
        &[Operation::RunAsr],
        &[Operation::RunAsr, Operation::EditTranscript],
        &[Operation::RunAsr, Operation::RunNmt],
        &[Operation::RunAsr, Operation::RunNmt, Operation::EditTranslation],
        &[Operation::RunAsr, Operation::RunNmt, Operation::RunTts],
    ];
    let mut refused = 0;
    for (si, state) in SessionState::ALL.iter().enumerate() {
        for (oi, op) in Operation::ALL.iter().enumerate() {
            let mut s = PipelineSession::new("s", "en", "hi");
            for step in paths[si] {
                apply(&mut s, *step)?;
            }
            ensure!(s.state == *state, "setup reached {} instead of {state}", s.state);
            let result = apply(&mut s, *op);
            if TABLE[si][oi] {
                ensure!(result.is_ok(), "{op} refused in {state}: {result:?}");
            } else {
                ensure!(
                    result == Err(S2sError::WrongState { op: *op, state: *state }),
                    "{op} in {state} gave {result:?}, expected WrongState"
                );
                refused += 1;
            }
        }
    }
    let mut s = PipelineSession::new("s", "en", "hi");
    s.run_asr(&store, &registry, &audio, None)?;
    let raw = s.transcript.segments[0].text.clone();
    s.edit_text(TextDoc::Transcript, 1, "edited words")?;
    s.run_nmt(&registry, None)?;
    let target = &s.translation.units[0].target_text;
    ensure!(target == "⟦hi⟧edited words", "NMT saw {target:?}, raw ASR text was {raw:?}");
    Ok(format!("36 pairs checked, {refused} refused with WrongState, edited text reached NMT"))
}

fn energy(x: &[f32]) -> f64 {
    x.iter().map(|v| (*v as f64) * (*v as f64)).sum()
}

/// Amplitude of the `freq` component via a Hann-windowed single-bin DFT.
fn tone_amplitude(x: &[f32], sample_rate: u32, freq: f64) -> f64 {
    let n = x.len() as f64;
    let (mut re, mut im, mut wsum) = (0.0, 0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n).cos();
        let phase = 2.0 * std::f64::consts::PI * freq * i as f64 / sample_rate as f64;
        re += w * *v as f64 * phase.cos();
        im -= w * *v as f64 * phase.sin();
        wsum += w;
    }
    2.0 * (re * re + im * im).sqrt() / wsum
}

fn vocal_separation() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let store = MediaStore::open(dir.path())?;
    let registry = AdapterRegistry::with_stubs();
    let rate = 16_000;
    let input = speech_over_music(rate, 3.0);
    let asset = store.put(&Media::Audio(input.clone()), "imports")?;
    let (speech, music) = registry.vocal_separator()?.separate_vocals(&store, &asset)?;
    let (speech, music) = (store.load(&speech)?.into_audio()?, store.load(&music)?.into_audio()?);
    ensure!(speech.samples.len() == input.samples.len() && music.samples.len() == input.samples.len(), "stem lengths differ");
    let residual: Vec<f32> = (0..input.samples.len()).map(|i| input.samples[i] - speech.samples[i] - music.samples[i]).collect();
    let residual_db = 10.0 * (energy(&residual).max(1e-300) / energy(&input.samples)).log10();
    ensure!(residual_db < -40.0, "stem residual {residual_db:.1} dB");

    let fps = Fps::integer(10);
    let face = FacePlacement { center: [80.0, 60.0], width: 56.0, sway: 1.0 };
    let video = store.put(&face_video(160, 120, fps, 30, &[face], None), "imports")?;
    let mut project = Project::new("p");
    project.register_asset(video.clone())?;
    let track = project.add_track(TrackKind::Video);
    project.place_clip(&track, Clip::new(video.id.clone(), TimeRange::new(Time::ZERO, video.duration)?), Time::ZERO)?;
    let range = TimeRange::new(Time::ZERO, video.duration)?;
    let options = LipsyncOptions { separate_music: true, ..LipsyncOptions::default() };
    let result = lipsync_segment(&store, &registry, &project, &range, None, &asset, &options)?;
    let (_, out_audio, _) = store.load(&result.asset)?.into_video()?;
    let out_audio: Audio = out_audio.context("lipsync output has no audio")?;
    let before = 20.0 * tone_amplitude(&input.samples, rate, 440.0).log10();
    let after = 20.0 * tone_amplitude(&out_audio.samples, out_audio.sample_rate, 440.0).log10();
    ensure!((after - before).abs() <= 1.0, "440 Hz peak moved from {before:.2} dB to {after:.2} dB");
    Ok(format!("residual {residual_db:.1} dB, 440 Hz peak change {:.3} dB", after - before))
}

fn timeline_project() -> (Project, [String; 2]) {
    let mut p = Project::new("t");
    p.register_asset(Asset {
        id: "v".into(),
        kind: AssetKind::Video,
        uri: "v.mzv".into(),
        duration: Time::from_secs(12),
        fps: Some(Fps::integer(25)),
        resolution: Some(Resolution::new(64, 48)),
        sample_rate: Some(16_000),
    })
    .expect("valid asset");
    let tracks = [p.add_track(TrackKind::Video), p.add_track(TrackKind::Audio)];
    (p, tracks)
}

fn check_tracks(p: &Project) -> Result<()> {
    for t in &p.tracks {
        for (i, a) in t.clips.iter().enumerate() {
            ensure!(a.speed.is_positive() && a.source_range.start < a.source_range.end, "clip {} malformed", a.id);
            let end = a.timeline_start + a.source_range.duration() * a.speed.recip();
            for b in &t.clips[i + 1..] {
                ensure!(a.timeline_start < b.timeline_start, "clips {} and {} unsorted", a.id, b.id);
                ensure!(end <= b.timeline_start, "clips {} and {} overlap", a.id, b.id);
            }
        }
    }
    Ok(())
}

fn random_mutation(p: &mut Project, tracks: &[String; 2], rng: &mut ChaCha8Rng) {
    let ids: Vec<String> = p.tracks.iter().flat_map(|t| t.clips.iter().map(|c| c.id.clone())).collect();
    let ms = |v: i64| Time::from_millis(v);
    let pick = |rng: &mut ChaCha8Rng| (!ids.is_empty()).then(|| ids[rng.gen_range(0..ids.len())].clone());
    let _ = match rng.gen_range(0..9) {
        0..=2 => {
            let start = rng.gen_range(0..8_000);
            let end = (start + rng.gen_range(100..4_000)).min(12_000);
            let at = ms(rng.gen_range(0..30_000));
            let track = &tracks[rng.gen_range(0..2)];
            TimeRange::new(ms(start), ms(end)).and_then(|r| p.place_clip(track, Clip::new("v", r), at).map(|_| ()))
        }
        3 | 4 => match pick(rng) {
            Some(id) => {
                let c = p.clip(&id).expect("listed").clone();
                let at = c.timeline_start + c.duration() * Speed::new(rng.gen_range(0..=100), 100);
                p.split_clip(&id, at).map(|_| ())
            }
            None => Ok(()),
        },
        5 | 6 => match pick(rng) {
            Some(id) => p.retime_clip(&id, Speed::new(rng.gen_range(1..40), rng.gen_range(1..40))).map(|_| ()),
            None => Ok(()),
        },
        7 => match pick(rng) {
            Some(id) => p.remove_clip(&id).map(|_| ()),
            None => Ok(()),
        },
        _ => p.shift_clips(&tracks[rng.gen_range(0..2)], ms(rng.gen_range(0..30_000)), ms(rng.gen_range(-3_000..3_000))),
    };
}

fn timeline_algebra() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mutations = 0;
    for seq in 0..1000 {
        let (mut p, tracks) = timeline_project();
        for _ in 0..rng.gen_range(1..40) {
            let revision = p.revision;
            let before = p.clone();
            random_mutation(&mut p, &tracks, &mut rng);
            check_tracks(&p).with_context(|| format!("sequence {seq}"))?;
            ensure!(p == before || p.revision > revision, "sequence {seq}: mutation without a revision bump");
            mutations += 1;
        }
    }
    let mut worst_retime = 0.0f64;
    for _ in 0..1000 {
        let (mut p, tracks) = timeline_project();
        let start = rng.gen_range(0..6_000);
        let len = rng.gen_range(2..6_000);
        let speed = Speed::new(rng.gen_range(1..30), rng.gen_range(1..30));
        let clip = Clip::new("v", TimeRange::new(Time::from_millis(start), Time::from_millis(start + len))?).with_speed(speed);
        let original = p.place_clip(&tracks[0], clip, Time::from_millis(500))?;
        let at = original.timeline_start + original.duration() * Speed::new(rng.gen_range(1..1000), 1000);
        let (left, right) = p.split_clip(&original.id, at)?;
        ensure!(left.source_range.end == right.source_range.start, "split leaves a source gap");
        let rejoined = Clip { source_range: TimeRange::new(left.source_range.start, right.source_range.end)?, ..left };
        ensure!(rejoined == original, "rejoined {rejoined:?} != {original:?}");

        let (mut p, tracks) = timeline_project();
        let original = p.place_clip(&tracks[0], Clip::new("v", TimeRange::new(Time::ZERO, Time::from_millis(len))?), Time::ZERO)?;
        let f = rng.gen_range(0.05..8.0f64);
        p.retime_clip(&original.id, Speed::from_f64(f))?;
        let restored = p.retime_clip(&original.id, original.speed)?;
        let drift = (restored.duration().as_secs_f64() - original.duration().as_secs_f64()).abs();
        ensure!(drift <= 1e-9, "retime inverse drifted {drift:e} s");
        worst_retime = worst_retime.max(drift);
    }
    Ok(format!("1000 sequences ({mutations} mutations) keep tracks sorted and disjoint, 1000 split/rejoin exact, retime drift {worst_retime:e} s"))
}

fn stub_handler(counts: Arc<Mutex<HashMap<u64, u32>>>) -> dubedit::jobs::JobHandler {
    Arc::new(move |ctx| {
        let n = ctx.spec.params["n"].as_u64().ok_or("missing n")?;
        *counts.lock().unwrap().entry(n).or_default() += 1;
        for step in 1..=4 {
            std::thread::sleep(Duration::from_millis(1));
            ctx.report_progress(step as f64 / 5.0);
        }
        let tone = fixtures::sine_audio(200.0 + n as f32, 0.1, 8_000, 0.05);
        let asset = ctx.store.put(&Media::Audio(tone), "generated").map_err(|e| e.to_string())?;
        Ok(JobOutput { artifacts: vec![("tone".into(), asset)], metadata: json!({ "n": n }) })
    })
}

fn spec(kind: &str, params: serde_json::Value) -> JobSpec {
    JobSpec { id: String::new(), kind: kind.into(), params, input_artifact_refs: BTreeMap::new(), session_id: "acceptance".into() }
}

fn open_service(dir: &Path, workers: usize) -> Result<JobService> {
    let store = MediaStore::open(dir.join("media"))?;
    Ok(JobService::open(store, AdapterRegistry::with_stubs(), JobConfig { workers, state_dir: dir.join("jobs") })?)
}

fn job_service() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let svc = open_service(dir.path(), 2)?;
    let counts = Arc::new(Mutex::new(HashMap::new()));
    svc.register_handler("stub", stub_handler(counts.clone()));
    let ids: Vec<String> = (0..100).map(|n| svc.submit(spec("stub", json!({ "n": n })))).collect::<Result<_, _>>()?;
    let mut last: HashMap<String, f64> = HashMap::new();
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        let mut open = 0;
        for id in &ids {
            let st = svc.poll(id)?;
            let prev = last.insert(id.clone(), st.progress).unwrap_or(0.0);
            ensure!(st.progress >= prev, "job {id} progress fell from {prev} to {}", st.progress);
            open += usize::from(!st.state.is_terminal());
        }
        if open == 0 {
            break;
        }
        ensure!(Instant::now() < deadline, "{open} jobs still open after 120 s");
        std::thread::sleep(Duration::from_millis(1));
    }
    for id in &ids {
        let rec = svc.record(id)?;
        ensure!(rec.status.state == JobState::Done, "job {id} ended {:?}: {:?}", rec.status.state, rec.status.error_message);
        ensure!(rec.executions == 1, "job {id} executed {} times", rec.executions);
    }
    let counts = counts.lock().unwrap();
    ensure!(counts.len() == 100 && counts.values().all(|c| *c == 1), "handler call counts {counts:?}");
    drop(svc);

    let texts = ["first", "second", "third", "fourth", "fifth", "sixth"];
    let reference = tempfile::tempdir()?;
    let svc = open_service(reference.path(), 2)?;
    let expected: Vec<Vec<String>> = texts
        .iter()
        .map(|t| {
            let id = svc.submit(spec("tts", json!({ "text": t, "voice": "a" })))?;
            let rec = svc.wait(&id, Duration::from_secs(30)).map(|_| svc.record(&id))??;
            Ok(rec.artifacts.iter().map(|a| a.asset.id.clone()).collect())
        })
        .collect::<Result<_>>()?;
    drop(svc);

    let crashed = tempfile::tempdir()?;
    let svc = open_service(crashed.path(), 0)?;
    let ids: Vec<String> = texts.iter().map(|t| svc.submit(spec("tts", json!({ "text": t, "voice": "a" })))).collect::<Result<_, _>>()?;
    ensure!(ids.iter().all(|id| svc.poll(id).map(|s| s.state == JobState::Pending).unwrap_or(false)), "jobs ran without workers");
    drop(svc);
    let svc = open_service(crashed.path(), 2)?;
    for (id, want) in ids.iter().zip(&expected) {
        let st = svc.wait(id, Duration::from_secs(30))?;
        ensure!(st.state == JobState::Done, "resumed job {id} ended {:?}", st.state);
        let got: Vec<String> = svc.record(id)?.artifacts.iter().map(|a| a.asset.id.clone()).collect();
        ensure!(&got == want, "resumed job {id} produced {got:?}, uninterrupted run produced {want:?}");
    }
    Ok("100 jobs done once each with monotone progress; 6 pending jobs resumed after restart with identical artifacts".into())
}
