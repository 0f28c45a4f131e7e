use dubedit::project::{Asset, AssetKind, Clip, Project, Resolution, TimeRange, TrackKind};
use dubedit::time::{Fps, Speed, Time};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Place { track: usize, src_start: i64, len: i64, at: i64 },
    Split { clip: usize, frac: u32 },
    Retime { clip: usize, num: i128, den: i128 },
    Trim { clip: usize, cut: i64 },
    Remove { clip: usize },
    Shift { track: usize, from: i64, delta: i64 },
}

fn ms(v: i64) -> Time {
    Time::from_millis(v)
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0usize..2, 0i64..8_000, 100i64..4_000, 0i64..30_000)
            .prop_map(|(track, src_start, len, at)| Op::Place { track, src_start, len, at }),
        2 => (any::<usize>(), 1u32..100).prop_map(|(clip, frac)| Op::Split { clip, frac }),
        2 => (any::<usize>(), 1i128..40, 1i128..40).prop_map(|(clip, num, den)| Op::Retime { clip, num, den }),
        1 => (any::<usize>(), 1i64..500).prop_map(|(clip, cut)| Op::Trim { clip, cut }),
        1 => any::<usize>().prop_map(|clip| Op::Remove { clip }),
        1 => (0usize..2, 0i64..30_000, -3_000i64..3_000).prop_map(|(track, from, delta)| Op::Shift { track, from, delta }),
    ]
}

fn project() -> (Project, Vec<String>) {
    let mut p = Project::new("p");
    p.register_asset(Asset {
        id: "v".into(),
        kind: AssetKind::Video,
        uri: "v.mzv".into(),
        duration: Time::from_secs(12),
        fps: Some(Fps::integer(25)),
        resolution: Some(Resolution::new(64, 48)),
        sample_rate: Some(16_000),
    })
    .unwrap();
    let tracks = vec![p.add_track(TrackKind::Video), p.add_track(TrackKind::Audio)];
    (p, tracks)
}

fn clip_ids(p: &Project) -> Vec<String> {
    p.tracks.iter().flat_map(|t| t.clips.iter().map(|c| c.id.clone())).collect()
}

fn pick(p: &Project, i: usize) -> Option<String> {
    let ids = clip_ids(p);
    (!ids.is_empty()).then(|| ids[i % ids.len()].clone())
}

fn run(p: &mut Project, tracks: &[String], op: &Op) {
    let _ = match op {
        Op::Place { track, src_start, len, at } => {
            let end = (src_start + len).min(12_000);
            TimeRange::new(ms(*src_start), ms(end)).and_then(|r| p.place_clip(&tracks[*track], Clip::new("v", r), ms(*at)).map(|_| ()))
        }
        Op::Split { clip, frac } => match pick(p, *clip) {
            Some(id) => {
                let c = p.clip(&id).unwrap().clone();
                let at = c.timeline_start + c.duration() * Speed::new(*frac as i128, 100);
                p.split_clip(&id, at).map(|_| ())
            }
            None => Ok(()),
        },
        Op::Retime { clip, num, den } => match pick(p, *clip) {
            Some(id) => p.retime_clip(&id, Speed::new(*num, *den)).map(|_| ()),
            None => Ok(()),
        },
        Op::Trim { clip, cut } => match pick(p, *clip) {
            Some(id) => {
                let r = p.clip(&id).unwrap().source_range;
                TimeRange::new(r.start, r.end - ms(*cut)).and_then(|nr| p.trim_clip(&id, nr).map(|_| ()))
            }
            None => Ok(()),
        },
        Op::Remove { clip } => match pick(p, *clip) {
            Some(id) => p.remove_clip(&id).map(|_| ()),
            None => Ok(()),
        },
        Op::Shift { track, from, delta } => p.shift_clips(&tracks[*track], ms(*from), ms(*delta)),
    };
}

fn assert_sorted_disjoint(p: &Project) {
    for t in &p.tracks {
        for w in t.clips.windows(2) {
            assert!(w[0].timeline_start < w[1].timeline_start, "unsorted on {}", t.id);
            assert!(w[0].timeline_end() <= w[1].timeline_start, "overlap on {}", t.id);
        }
        for c in &t.clips {
            assert!(c.speed.is_positive());
            assert!(c.source_range.start < c.source_range.end);
            assert!(!c.timeline_start.is_negative());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mutations_keep_tracks_sorted_and_disjoint(ops in prop::collection::vec(op(), 1..30)) {
        let (mut p, tracks) = project();
        let mut revision = p.revision;
        for o in &ops {
            let before = p.clone();
            run(&mut p, &tracks, o);
            assert_sorted_disjoint(&p);
            prop_assert!(p.validate().is_ok());
            if p != before {
                prop_assert!(p.revision > revision);
            }
            revision = p.revision;
        }
    }

    #[test]
    fn split_then_rejoin_is_identity(start in 0i64..6_000, len in 2i64..6_000, frac in 1u32..1000, num in 1i128..30, den in 1i128..30) {
        let (mut p, tracks) = project();
        let clip = Clip::new("v", TimeRange::new(ms(start), ms(start + len)).unwrap()).with_speed(Speed::new(num, den));
        let original = p.place_clip(&tracks[0], clip, ms(700)).unwrap();
        let at = original.timeline_start + original.duration() * Speed::new(frac as i128, 1000);
        let (left, right) = p.split_clip(&original.id, at).unwrap();
        prop_assert_eq!(left.source_range.end, right.source_range.start);
        prop_assert_eq!(left.timeline_end(), right.timeline_start);
        let rejoined = Clip {
            source_range: TimeRange::new(left.source_range.start, right.source_range.end).unwrap(),
            ..left
        };
        prop_assert_eq!(rejoined, original);
    }

    #[test]
    fn retime_inverse_restores_duration(len in 1i64..10_000, f in 0.05f64..8.0, num in 1i128..30, den in 1i128..30) {
        let (mut p, tracks) = project();
        let clip = Clip::new("v", TimeRange::new(ms(0), ms(len)).unwrap()).with_speed(Speed::new(num, den));
        let original = p.place_clip(&tracks[0], clip, ms(0)).unwrap();
        let factor = Speed::from_f64(f);
        p.retime_clip(&original.id, factor).unwrap();
        let restored = p.retime_clip(&original.id, factor.recip() * factor * original.speed).unwrap();
        let err = (restored.duration().as_secs_f64() - original.duration().as_secs_f64()).abs();
        prop_assert!(err <= 1e-9, "drift {err}");
        prop_assert_eq!(restored.duration(), original.duration());
    }
}
