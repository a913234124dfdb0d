mod common;

use std::path::{Path, PathBuf};

use brushwork::audio::{write_wav_pcm16, AudioClip, SAMPLE_RATE};
use brushwork::imaging::ingest_image;
use brushwork::mel::mel_patch;
use brushwork::selection::stage2_retrieve;
use brushwork_engine::replay::{replay, replay_with, script_end, to_jsonl, Action, ReplayScript, ScriptEntry};
use brushwork_engine::*;
use common::*;

fn write_script(dir: &Path) -> (ReplayScript, AudioClip) {
    let clip = brush(10.0, 30);
    write_wav_pcm16(dir.join("brush.wav"), &clip).unwrap();
    std::fs::write(dir.join("canvas-a.png"), painting_png(0, 5)).unwrap();
    std::fs::write(dir.join("canvas-b.png"), painting_png(3, 6)).unwrap();
    let entries = vec![
        ScriptEntry { t: 0.0, action: Action::PushAudio { path: "brush.wav".into() } },
        ScriptEntry { t: 0.5, action: Action::PushImage { path: "canvas-a.png".into() } },
        ScriptEntry { t: 6.0, action: Action::PushImage { path: "canvas-b.png".into() } },
        ScriptEntry { t: 7.0, action: Action::SetParams { params: ParamUpdate { fraction: Some(0.3), ..ParamUpdate::default() } } },
    ];
    ReplayScript { entries }.save(dir.join("script.json")).unwrap();
    (ReplayScript::load(dir.join("script.json")).unwrap(), clip)
}

fn run(script: &ReplayScript) -> Vec<EngineEvent> {
    let cfg = SessionConfig { fraction: 0.1, ..SessionConfig::new("a", "b", "c") };
    let (mut session, mut events) = Session::start(cfg, resources(5, 16.0), 0.0).unwrap();
    events.extend(replay(&mut session, script, None).unwrap());
    events
}

#[test]
fn replay_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (script, _) = write_script(dir.path());
    let a = to_jsonl(&run(&script));
    let b = to_jsonl(&run(&script));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), run(&script).len());
    for line in a.lines() {
        serde_json::from_str::<EngineEvent>(line).unwrap();
    }
}

#[test]
fn script_paths_resolve_against_the_script_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (script, _) = write_script(dir.path());
    match &script.entries[0].action {
        Action::PushAudio { path } => assert_eq!(path, &dir.path().join("brush.wav")),
        other => panic!("{other:?}"),
    }
    assert_eq!(script_end(&script).unwrap(), 10.0);
}

#[test]
fn replay_ticks_agree_with_the_offline_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (script, clip) = write_script(dir.path());
    // the clip as the session hears it, after PCM16 quantization
    let heard = brushwork::audio::read_wav(dir.path().join("brush.wav"), SAMPLE_RATE).unwrap();
    assert_eq!(heard.samples.len(), clip.samples.len());
    let canvases = [
        ingest_image(&std::fs::read(dir.path().join("canvas-a.png")).unwrap()).unwrap(),
        ingest_image(&std::fs::read(dir.path().join("canvas-b.png")).unwrap()).unwrap(),
    ];
    let res = resources(5, 16.0);
    let cfg = SessionConfig { fraction: 0.1, ..SessionConfig::new("a", "b", "c") };
    let (mut session, _) = Session::start(cfg, res.clone(), 0.0).unwrap();
    let mut checked = 0;
    let mut statuses = vec![];
    replay_with(&mut session, &script, None, |s, fired| {
        let e = &fired[0];
        let Some(m) = e.as_match() else {
            statuses.push((e.time, e.as_status().unwrap().to_string()));
            return;
        };
        let end = (e.time * SAMPLE_RATE as f64).round() as usize;
        let window = AudioClip::new(heard.samples[end - 64_000..end].to_vec(), SAMPLE_RATE).unwrap();
        // canvas b arrives at 6 s, the 0.3 fraction at 7 s
        let canvas = if e.time >= 6.0 { &canvases[1] } else { &canvases[0] };
        let fraction = if e.time >= 7.0 { 0.3 } else { 0.1 };
        let s1 = res.scorer.filter(canvas, "oracle", fraction).unwrap();
        let oracle = stage2_retrieve(&res.embedder, &res.index, &s1, &mel_patch(&window).unwrap(), e.time).unwrap();
        assert_eq!(m.key(), oracle.key(), "tick at {}", e.time);
        assert!((m.stage2_distance - oracle.stage2_distance).abs() < 1e-6);
        assert_eq!(s.stage1().unwrap().survivors.len(), s1.survivors.len());
        checked += 1;
    })
    .unwrap();
    assert_eq!(checked, 7);
    assert_eq!(statuses.len(), 3);
}

#[test]
fn inputs_at_a_tick_instant_apply_before_it() {
    let dir = tempfile::tempdir().unwrap();
    let (mut script, _) = write_script(dir.path());
    script.entries[1].t = 4.0;
    let events = run(&script);
    let first = events.iter().find(|e| e.time == 4.0 && e.kind() != "status").unwrap();
    assert!(first.as_match().is_some());
}

#[test]
fn bad_scripts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"[{"t": 0, "action": "dance"}]"#).unwrap();
    assert!(matches!(ReplayScript::load(dir.path().join("bad.json")).unwrap_err(), EngineError::Script(_)));
    std::fs::write(dir.path().join("neg.json"), r#"[{"t": -1, "action": "push_image", "path": "x.png"}]"#).unwrap();
    assert!(matches!(ReplayScript::load(dir.path().join("neg.json")).unwrap_err(), EngineError::Script(_)));
    let missing = ReplayScript { entries: vec![ScriptEntry { t: 0.0, action: Action::PushImage { path: PathBuf::from("/nonexistent.png") } }] };
    let (mut session, _) = Session::start(SessionConfig::new("a", "b", "c"), resources(2, 8.0), 0.0).unwrap();
    assert!(replay(&mut session, &missing, None).is_err());
}
