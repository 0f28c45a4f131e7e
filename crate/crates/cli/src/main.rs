//! `dubedit`: translate lectures and export projects without the editor.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dubedit::adapters::remote::{RemoteAdapter, RemoteConfig};
use dubedit::adapters::{AdapterError, AdapterRegistry, Capability};
use dubedit::lecture::{translate_lecture, EditsSidecar, LectureError, LectureOptions};
use dubedit::media::{self, ExportSettings, MediaError, MediaStore, Quality};
use dubedit::sync::{compute_sync_plan, SegmentPair, SyncPolicy};
use dubedit::{Fps, Project};

#[derive(Parser)]
#[command(name = "dubedit", version, about = "Translate lecture videos and export dubbing projects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EngineArgs {
    /// Engine choice, CAPABILITY=NAME; repeatable.
    #[arg(long = "engine", value_name = "CAPABILITY=NAME")]
    engines: Vec<String>,
    /// Run every capability on a remote adapter server.
    #[arg(long, value_name = "URL")]
    remote: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run speech translation, sync, and export on a lecture video.
    TranslateLecture {
        input: PathBuf,
        #[arg(long)]
        src: String,
        #[arg(long)]
        tgt: String,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        lipsync: bool,
        #[arg(long)]
        bg_translate: bool,
        #[arg(long)]
        separate_music: bool,
        /// Sync policy override, KEY=VALUE; repeatable.
        #[arg(long = "policy", value_name = "KEY=VALUE")]
        policy: Vec<String>,
        /// JSON file with corrected transcript and translation text.
        #[arg(long)]
        edits: Option<PathBuf>,
        #[arg(long, default_value = "medium")]
        quality: String,
        #[arg(long)]
        fps: Option<u32>,
        #[arg(long, default_value = "default")]
        voice: String,
        /// Media store and project directory; defaults to OUT with a .work extension.
        #[arg(long)]
        work: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Render a saved project.
    Export {
        project: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Directory the project's media uris are relative to; defaults to the project's directory.
        #[arg(long)]
        media_root: Option<PathBuf>,
        #[arg(long, default_value = "medium")]
        quality: String,
        #[arg(long)]
        fps: Option<u32>,
    },
    /// Print the sync plan for one chunk as an edit decision list.
    Plan {
        video_seconds: f64,
        audio_seconds: f64,
        #[arg(long)]
        face: bool,
        #[arg(long = "policy", value_name = "KEY=VALUE")]
        policy: Vec<String>,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Input,
    Adapter,
    Encoder,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input => 2,
            Failure::Adapter => 3,
            Failure::Encoder => 4,
        }
    }
}

fn classify(err: &anyhow::Error) -> Failure {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<LectureError>() {
            return match e.exit_code() {
                3 => Failure::Adapter,
                4 => Failure::Encoder,
                _ => Failure::Input,
            };
        }
        if let Some(MediaError::EncoderFailure(_)) = cause.downcast_ref::<MediaError>() {
            return Failure::Encoder;
        }
        if cause.downcast_ref::<AdapterError>().is_some() {
            return Failure::Adapter;
        }
    }
    Failure::Input
}

fn key_value(s: &str) -> Result<(&str, &str)> {
    s.split_once('=').ok_or_else(|| anyhow!("expected KEY=VALUE, got {s:?}"))
}

fn policy_from(overrides: &[String]) -> Result<SyncPolicy> {
    let mut policy = SyncPolicy::default();
    for o in overrides {
        let (k, v) = key_value(o)?;
        policy.set(k, v).with_context(|| format!("--policy {o}"))?;
    }
    Ok(policy)
}

fn registry_from(args: &EngineArgs) -> Result<AdapterRegistry> {
    let mut registry = AdapterRegistry::with_stubs();
    if let Some(url) = &args.remote {
        for adapter in RemoteAdapter::all(&RemoteConfig::new(url.clone()))? {
            registry.register_selected(adapter);
        }
    }
    for e in &args.engines {
        let (cap, name) = key_value(e)?;
        let cap = Capability::from_str(cap).map_err(|_| anyhow!("unknown capability {cap}"))?;
        registry.select(cap, name);
    }
    Ok(registry)
}

fn quality(s: &str) -> Result<Quality> {
    Ok(Quality::from_str(s)?)
}

fn fps(n: Option<u32>) -> Result<Option<Fps>> {
    match n {
        Some(0) => bail!("fps must be positive"),
        Some(n) => Ok(Some(Fps::integer(n))),
        None => Ok(None),
    }
}

fn work_dir(out: &Path, work: Option<PathBuf>) -> PathBuf {
    work.unwrap_or_else(|| out.with_extension("work"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TranslateLecture {
            input,
            src,
            tgt,
            out,
            lipsync,
            bg_translate,
            separate_music,
            policy,
            edits,
            quality: q,
            fps: f,
            voice,
            work,
            engine,
        } => {
            let mut opts = LectureOptions::new(&src, &tgt);
            opts.lipsync = lipsync;
            opts.bg_translate = bg_translate;
            opts.separate_music = separate_music;
            opts.policy = policy_from(&policy)?;
            opts.voice = voice;
            opts.quality = quality(&q)?;
            if let Some(path) = edits {
                opts.edits = EditsSidecar::load(&path)?;
            }
            let fps = fps(f)?;
            if let Some(fps) = fps {
                let probe = media::probe(&input).map_err(LectureError::from)?;
                let resolution = probe.resolution.ok_or_else(|| LectureError::Input("input has no video".into()))?;
                opts.export = Some(ExportSettings { quality: opts.quality, fps, resolution });
            }
            let registry = registry_from(&engine)?;
            let work = work_dir(&out, work);
            let store = MediaStore::open(&work)?;
            let report = translate_lecture(&store, &registry, &input, &out, &opts)?;
            report.project.save(&work.join("project.json"))?;
            report.session.save(&work.join("session.json")).map_err(|e| anyhow!(e))?;
            if let Some(plan) = &report.plan {
                std::fs::write(work.join("plan.json"), plan.to_edl())?;
            }
            let summary = serde_json::json!({
                "timeline_length": report.project.timeline_length().as_secs_f64(),
                "output_duration": report.output.duration.as_secs_f64(),
                "chunks": report.applied.iter().map(|a| serde_json::json!({
                    "chunk_id": a.chunk_id,
                    "video_duration": a.video_duration.as_secs_f64(),
                    "audio_duration": a.audio_duration.as_secs_f64(),
                    "mismatch": a.mismatch(),
                })).collect::<Vec<_>>(),
            });
            std::fs::write(work.join("report.json"), serde_json::to_string_pretty(&summary)?)?;
            for notice in &report.session.notices {
                log::warn!("{notice}");
            }
            println!(
                "wrote {} ({:.3} s, {} chunks); project at {}",
                out.display(),
                report.output.duration.as_secs_f64(),
                report.applied.len(),
                work.join("project.json").display()
            );
            Ok(())
        }
        Command::Export { project, out, media_root, quality: q, fps: f } => {
            let settings_fps = fps(f)?;
            let q = quality(&q)?;
            let p = Project::load(&project).with_context(|| format!("cannot load {}", project.display()))?;
            let root = media_root.unwrap_or_else(|| project.parent().map(Path::to_path_buf).unwrap_or_default());
            let store = MediaStore::open(root)?;
            let first_video = p.assets.values().find(|a| a.resolution.is_some());
            let resolution = first_video
                .and_then(|a| a.resolution)
                .ok_or_else(|| anyhow!("project has no visual media"))?;
            let fps = settings_fps.or_else(|| first_video.and_then(|a| a.fps)).unwrap_or(Fps::integer(25));
            let probe = media::export(&store, &p, &ExportSettings { quality: q, fps, resolution }, &out)?;
            println!("wrote {} ({:.3} s)", out.display(), probe.duration.as_secs_f64());
            Ok(())
        }
        Command::Plan { video_seconds, audio_seconds, face, policy } => {
            let pair = SegmentPair { chunk_id: 1, video_duration: video_seconds, audio_duration: audio_seconds, face_available: face };
            let plan = compute_sync_plan(&[pair], &policy_from(&policy)?)?;
            println!("{}", plan.to_edl());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let failure = classify(&err);
            eprintln!("error: {err:#}");
            ExitCode::from(failure.code())
        }
    }
}
