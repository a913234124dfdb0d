use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use brushwork::audio::{read_wav, AudioClip, CLIP_SAMPLES, SAMPLE_RATE};
use brushwork::correspondence::{
    holdout_pairs, train_correspondence as train_scorer, evaluate_pairs, CorrespondenceConfig, TrainConfig, TrainRun,
};
use brushwork::embedder::{
    class_separation, classification_accuracy, load_labeled_clips, train_embedder as train_clips, EmbedderConfig, EmbedderRun,
    EmbedderTrainConfig,
};
use brushwork::imaging::ingest_image;
use brushwork::index::{build_index as embed_library, IndexManifest, IndexedTrack};
use brushwork::manifest::{Catalog, LabelManifest, LibraryManifest, PaintingEntry, TrackEntry};
use brushwork::mel::mel_patch;
use brushwork::selection::{stage2_retrieve, ChunkLibrary, StageOneScorer};
use brushwork::toy::{generate, ToySpec};
use brushwork::{AudioEmbedder, CorrespondenceModel, EmbeddingIndex, ImageTensor};
use brushwork_engine::replay::{replay_with, to_jsonl, ReplayScript};
use brushwork_engine::{Resources, Session, SessionConfig};
use log::{info, warn};
use serde_json::json;
use walkdir::WalkDir;

use crate::{check_positive, emit, read_bytes, sidecar_path, BuildIndexArgs, EvalArgs, GenToyArgs, IngestArgs, ReplayArgs, RetrieveArgs, ScoreArgs, TrainArgs};

const IMAGE_EXTENSIONS: [&str; 2] = ["png", "bmp"];
const PAINTINGS_DIR: &str = "paintings";

pub fn gen_toy(args: &GenToyArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let spec = ToySpec {
        n_tracks: args.tracks,
        classes: args.classes,
        seed,
        track_duration: args.duration,
        tracks_per_album: args.tracks_per_album,
        clips_per_class: args.clips_per_class,
        ..ToySpec::default()
    };
    let corpus = generate(&spec, &args.out)?;
    info!("wrote {} tracks and {} paintings to {}", corpus.manifest.tracks.len(), corpus.manifest.paintings.len(), args.out.display());
    emit(
        out,
        &json!({
            "manifest": corpus.manifest_path,
            "labels": corpus.labels_path,
            "brush": corpus.brush_path,
            "tracks": corpus.manifest.tracks.len(),
            "paintings": corpus.manifest.paintings.len(),
        }),
    )
}

/// `path` relative to `base` when it lies below it, else unchanged.
fn relative_to(path: &Path, base: &Path) -> PathBuf {
    path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

fn has_extension(path: &Path, exts: &[&str]) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Build a manifest from a folder. Every `<name>.wav` needs a `<name>.png`
/// (or `.bmp`) somewhere in the folder; the audio file's directory relative
/// to the folder is its album (the track id for files at the top level).
/// Images under `paintings/` become library paintings. Paths are written
/// relative to `manifest_dir` when possible.
pub fn ingest_folder(folder: &Path, manifest_dir: &Path) -> Result<LibraryManifest> {
    if !folder.is_dir() {
        bail!("{} is not a directory", folder.display());
    }
    let mut audio = vec![];
    let mut images: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let mut paintings = vec![];
    for entry in WalkDir::new(folder).sort_by_file_name() {
        let entry = entry?;
        let path = entry.path();
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = relative_to(path, folder);
        let in_paintings = rel.components().next().is_some_and(|c| c.as_os_str() == PAINTINGS_DIR);
        if has_extension(path, &["wav"]) {
            audio.push(path.to_path_buf());
        } else if has_extension(path, &IMAGE_EXTENSIONS) {
            if in_paintings {
                paintings.push(path.to_path_buf());
            } else {
                images.entry(stem(path)).or_default().push(path.to_path_buf());
            }
        }
    }
    let mut manifest = LibraryManifest::default();
    for path in audio {
        let id = stem(&path);
        let art = match images.get(&id).map(Vec::as_slice) {
            Some([one]) => one.clone(),
            Some(many) => bail!("track {id:?} has {} candidate artworks", many.len()),
            None => bail!("track {id:?} ({}) has no artwork named {id}.png", path.display()),
        };
        let parent = relative_to(path.parent().unwrap_or(folder), folder);
        let album_id = if parent.as_os_str().is_empty() { id.clone() } else { parent.to_string_lossy().replace('\\', "/") };
        manifest.tracks.push(TrackEntry {
            track_id: id,
            audio_path: relative_to(&path, manifest_dir),
            artwork_path: relative_to(&art, manifest_dir),
            album_id,
            class_id: None,
        });
    }
    for path in paintings {
        manifest.paintings.push(PaintingEntry { painting_id: stem(&path), image_path: relative_to(&path, manifest_dir) });
    }
    let ids: BTreeSet<&str> = manifest.tracks.iter().map(|t| t.track_id.as_str()).collect();
    if ids.len() != manifest.tracks.len() {
        bail!("duplicate track names under {}", folder.display());
    }
    if manifest.tracks.is_empty() {
        bail!("no .wav tracks under {}", folder.display());
    }
    Ok(manifest)
}

pub fn ingest(args: &IngestArgs, out: &mut dyn Write) -> Result<()> {
    let dir = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let folder = std::path::absolute(&args.folder)?;
    let dir = std::path::absolute(dir)?;
    let manifest = ingest_folder(&folder, &dir)?;
    manifest.save(&args.out)?;
    // reload to check that every referenced file resolves
    LibraryManifest::load(&args.out)?;
    emit(out, &json!({"manifest": args.out, "tracks": manifest.tracks.len(), "paintings": manifest.paintings.len()}))
}

fn branch_overrides(config: &mut CorrespondenceConfig, args: &TrainArgs) {
    if let Some(ch) = &args.channels {
        config.image.channels = ch.clone();
        config.audio.channels = ch.clone();
    }
    if let Some(p) = args.projection {
        config.image.output_dim = p;
        config.audio.output_dim = p;
    }
}

fn check_train_args(args: &TrainArgs) -> Result<()> {
    check_positive("lr", args.lr)?;
    if args.steps == Some(0) || args.batch == Some(0) {
        bail!("--steps and --batch must be at least 1");
    }
    if let Some(h) = args.holdout {
        if !(0.0..1.0).contains(&h) {
            bail!("--holdout must be in [0, 1), got {h}");
        }
    }
    Ok(())
}

fn save_run(checkpoint: &Path, run: &impl serde::Serialize) -> Result<()> {
    let path = sidecar_path(checkpoint);
    std::fs::write(&path, serde_json::to_string_pretty(run)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn train_correspondence(args: &TrainArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    check_train_args(args)?;
    let manifest = LibraryManifest::load(&args.manifest)?;
    let catalog = Catalog::load(&manifest)?;
    let mut model_config = CorrespondenceConfig::default();
    branch_overrides(&mut model_config, args);
    let d = TrainConfig::default();
    let config = TrainConfig {
        steps: args.steps.unwrap_or(d.steps),
        lr: args.lr.unwrap_or(d.lr),
        batch_size: args.batch.unwrap_or(d.batch_size),
        holdout_fraction: args.holdout.unwrap_or(d.holdout_fraction),
        eval_every: args.eval_every.unwrap_or(d.eval_every),
        seed,
        ..d
    };
    info!("training on {} tracks for {} steps", catalog.len(), config.steps);
    let mut write_err = None;
    let (model, run): (CorrespondenceModel, TrainRun) = train_scorer(&catalog, &model_config, &config, |m| {
        if let Err(e) = emit(out, m) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    model.save(&args.out)?;
    save_run(&args.out, &run)?;
    emit(out, &json!({"checkpoint": args.out, "final_eval": run.final_eval, "final_loss": run.final_loss}))
}

pub fn train_embedder(args: &TrainArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    check_train_args(args)?;
    let labels = LabelManifest::load(&args.manifest)?;
    let dataset = load_labeled_clips::<f32>(&labels)?;
    let mut model_config = EmbedderConfig { classes: labels.classes.len(), ..EmbedderConfig::default() };
    if let Some(ch) = &args.channels {
        model_config.channels = ch.clone();
    }
    let d = EmbedderTrainConfig::default();
    let config = EmbedderTrainConfig {
        steps: args.steps.unwrap_or(d.steps),
        lr: args.lr.unwrap_or(d.lr),
        batch_size: args.batch.unwrap_or(d.batch_size),
        holdout_fraction: args.holdout.unwrap_or(d.holdout_fraction),
        eval_every: args.eval_every.unwrap_or(d.eval_every),
        seed,
        ..d
    };
    info!("training on {} clips in {} classes", dataset.len(), labels.classes.len());
    let mut write_err = None;
    let (model, run): (AudioEmbedder, EmbedderRun) = train_clips(&dataset, &model_config, &config, |m| {
        if let Err(e) = emit(out, m) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    model.save(&args.out)?;
    save_run(&args.out, &run)?;
    emit(out, &json!({"checkpoint": args.out, "holdout_accuracy": run.holdout_accuracy, "final_loss": run.final_loss}))
}

pub fn build_index(args: &BuildIndexArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = LibraryManifest::load(&args.manifest)?;
    let embedder = AudioEmbedder::load(&args.model)?;
    let tracks = manifest
        .tracks
        .iter()
        .map(|t| Ok((t.track_id.clone(), read_wav(&t.audio_path, SAMPLE_RATE)?)))
        .collect::<brushwork::Result<Vec<(String, AudioClip)>>>()?;
    let (index, report) = embed_library(&tracks, &embedder)?;
    for w in &report.warnings {
        warn!("{w}");
    }
    index.save(&args.out)?;

    let dir = std::path::absolute(args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")))?;
    let rel = |p: &Path| -> Result<PathBuf> { Ok(relative_to(&std::path::absolute(p)?, &dir)) };
    let mut companion = IndexManifest {
        embedder: Some(rel(&args.model)?),
        correspondence: args.correspondence.as_deref().map(rel).transpose()?,
        library: if manifest.paintings.is_empty() { None } else { Some(rel(&args.manifest)?) },
        ..IndexManifest::default()
    };
    for (entry, (_, clip)) in manifest.tracks.iter().zip(&tracks) {
        let chunks = clip.len() / CLIP_SAMPLES;
        if chunks > 0 {
            companion.tracks.push(IndexedTrack { track_id: entry.track_id.clone(), source: rel(&entry.audio_path)?, duration: clip.duration(), chunks });
        }
    }
    companion.save(IndexManifest::path_for(&args.out))?;
    emit(out, &json!({"index": args.out, "records": report.records, "dimension": index.dimension(), "warnings": report.warnings}))
}

/// A 4 s excerpt starting at `start` seconds, zero-padded past the end.
fn excerpt(path: &Path, start: f64) -> Result<AudioClip> {
    if !(start >= 0.0 && start.is_finite()) {
        bail!("--start must be a non-negative number of seconds, got {start}");
    }
    let clip = read_wav(path, SAMPLE_RATE)?;
    let offset = (start * SAMPLE_RATE as f64).round() as usize;
    if offset >= clip.len() {
        bail!("{} is {:.2} s long, excerpt start {start} s is past its end", path.display(), clip.duration());
    }
    Ok(clip.slice(offset, CLIP_SAMPLES))
}

fn load_painting(path: &Path) -> Result<ImageTensor> {
    Ok(ingest_image(&read_bytes(path)?).with_context(|| format!("decoding {}", path.display()))?)
}

pub fn score(args: &ScoreArgs, out: &mut dyn Write) -> Result<()> {
    let model = CorrespondenceModel::load(&args.model)?;
    let painting = load_painting(&args.painting)?;
    let mel = mel_patch(&excerpt(&args.audio, args.start)?)?;
    let [p_match, p_mismatch] = model.probabilities(&painting, &mel)?;
    emit(out, &json!({"score": p_mismatch, "match_probability": p_match, "congruity": 1.0 - p_mismatch}))
}

/// Checkpoint paths given on the command line or recorded with the index.
fn model_paths(index: &Path, model: Option<&Path>, embedder: Option<&Path>) -> Result<(IndexManifest, PathBuf, PathBuf)> {
    let manifest_path = IndexManifest::path_for(index);
    let manifest = IndexManifest::load(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let pick = |given: Option<&Path>, recorded: &Option<PathBuf>, flag: &str| -> Result<PathBuf> {
        match (given, recorded) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(r)) => Ok(base.join(r)),
            (None, None) => bail!("no {flag} checkpoint given and none recorded in {}", manifest_path.display()),
        }
    };
    let c = pick(model, &manifest.correspondence, "--model")?;
    let e = pick(embedder, &manifest.embedder, "--embedder")?;
    Ok((manifest, c, e))
}

pub fn retrieve(args: &RetrieveArgs, out: &mut dyn Write) -> Result<()> {
    brushwork::selection::check_fraction(args.fraction)?;
    let (manifest, model_path, embedder_path) = model_paths(&args.index, args.model.as_deref(), args.embedder.as_deref())?;
    let model = Arc::new(CorrespondenceModel::load(&model_path)?);
    let embedder = AudioEmbedder::load(&embedder_path)?;
    let index = EmbeddingIndex::load(&args.index)?;
    let base = IndexManifest::path_for(&args.index).parent().map(Path::to_path_buf).unwrap_or_default();
    let tracks = manifest
        .tracks
        .iter()
        .map(|t| Ok((t.track_id.clone(), read_wav(base.join(&t.source), SAMPLE_RATE)?)))
        .collect::<brushwork::Result<Vec<_>>>()?;
    let library = ChunkLibrary::from_tracks(&tracks)?;
    if !library.keys.iter().eq(index.keys()) {
        bail!("index {} does not match the tracks listed in its manifest", args.index.display());
    }
    let painting = load_painting(&args.painting)?;
    let scorer = StageOneScorer::new(model, &library)?;
    let stage1 = scorer.filter(&painting, &args.painting.to_string_lossy(), args.fraction)?;
    info!("stage 1 kept {} of {} chunks", stage1.survivors.len(), stage1.total);
    if args.survivors {
        emit(out, &stage1)?;
    }
    let brush = mel_patch(&excerpt(&args.brush, args.start)?)?;
    let event = stage2_retrieve(&embedder, &index, &stage1, &brush, args.start + 4.0)?;
    emit(out, &event)
}

pub fn eval(args: &EvalArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    match (&args.model, &args.embedder) {
        (Some(model), None) => eval_correspondence(model, args, seed, out),
        (None, Some(embedder)) => eval_embedder(embedder, args, out),
        _ => bail!("give exactly one of --model or --embedder"),
    }
}

fn eval_correspondence(path: &Path, args: &EvalArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    if args.pairs < 2 {
        bail!("--pairs must be at least 2");
    }
    let model = CorrespondenceModel::load(path)?;
    let manifest = LibraryManifest::load(&args.manifest)?;
    let catalog = Catalog::load(&manifest)?;
    let sidecar = sidecar_path(path);
    let anchors: Vec<usize> = if args.all || !sidecar.exists() {
        if !args.all {
            warn!("no run record at {}, evaluating on every track", sidecar.display());
        }
        (0..catalog.len()).collect()
    } else {
        let run: TrainRun = serde_json::from_str(&std::fs::read_to_string(&sidecar)?).with_context(|| format!("reading {}", sidecar.display()))?;
        run.holdout_tracks
            .iter()
            .map(|id| catalog.index_of(id).with_context(|| format!("held-out track {id:?} is not in {}", args.manifest.display())))
            .collect::<Result<_>>()?
    };
    let pairs = holdout_pairs::<f32>(&catalog, &anchors, args.pairs, seed)?;
    let acc = evaluate_pairs(&model, &catalog, &pairs)?;
    let tracks: Vec<&str> = anchors.iter().map(|&i| catalog.tracks[i].track_id.as_str()).collect();
    emit(out, &json!({"model": path, "anchor_tracks": tracks, "eval": acc}))
}

fn eval_embedder(path: &Path, args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model = AudioEmbedder::load(path)?;
    let labels = LabelManifest::load(&args.manifest)?;
    let dataset = load_labeled_clips::<f32>(&labels)?;
    let sidecar = sidecar_path(path);
    let which: Vec<usize> = if args.all || !sidecar.exists() {
        (0..dataset.len()).collect()
    } else {
        let run: EmbedderRun = serde_json::from_str(&std::fs::read_to_string(&sidecar)?).with_context(|| format!("reading {}", sidecar.display()))?;
        if let Some(&bad) = run.holdout.iter().find(|&&i| i >= dataset.len()) {
            bail!("held-out clip {bad} is outside the {} clips in {}", dataset.len(), args.manifest.display());
        }
        run.holdout
    };
    let accuracy = classification_accuracy(&model, &dataset, &which)?;
    let embedded = which
        .iter()
        .map(|&i| Ok((dataset[i].class_id, model.embed(&dataset[i].audio)?)))
        .collect::<brushwork::Result<Vec<_>>>()?;
    // undefined when no class has two clips in the evaluated set
    let separation = class_separation(&embedded).ok();
    emit(out, &json!({"model": path, "clips": which.len(), "accuracy": accuracy, "separation": separation}))
}

pub fn replay(args: &ReplayArgs, out: &mut dyn Write) -> Result<()> {
    let (_, model, embedder) = model_paths(&args.index, args.model.as_deref(), args.embedder.as_deref())?;
    let config = SessionConfig {
        mode: args.mode,
        fraction: args.fraction,
        tick_interval: args.tick,
        ..SessionConfig::new(model, embedder, &args.index)
    };
    config.validate()?;
    let script = ReplayScript::load(&args.script)?;
    let resources = Arc::new(Resources::load(&config)?);
    let (mut session, mut events) = Session::start(config, resources, 0.0)?;
    events.extend(replay_with(&mut session, &script, args.until, |_, _| {})?);
    let log = to_jsonl(&events);
    match &args.out {
        Some(path) => std::fs::write(path, &log).with_context(|| format!("writing {}", path.display()))?,
        None => out.write_all(log.as_bytes())?,
    }
    info!("{} events", events.len());
    Ok(())
}
