//! Scripted sessions on a virtual clock.
//!
//! A script is a JSON list of timed actions:
//!
//! ```json
//! [
//!   {"t": 0.0, "action": "push_audio", "path": "brush.wav"},
//!   {"t": 0.5, "action": "push_image", "path": "canvas-1.png"},
//!   {"t": 6.0, "action": "set_params", "params": {"fraction": 0.05}}
//! ]
//! ```
//!
//! `push_audio` streams the file in real time from `t` on, in blocks of
//! [`AUDIO_BLOCK_SECONDS`]; each block arrives when it has fully elapsed.
//! Inputs due at the same instant as a tick are applied before it.

use std::path::{Path, PathBuf};

use brushwork::audio::{read_wav, AudioClip, SAMPLE_RATE};
use serde::{Deserialize, Serialize};

use crate::config::ParamUpdate;
use crate::error::{EngineError, Result};
use crate::event::EngineEvent;
use crate::session::Session;

pub const AUDIO_BLOCK_SECONDS: f64 = 0.25;
pub const AUDIO_BLOCK_SAMPLES: usize = 4000;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    PushAudio { path: PathBuf },
    PushImage { path: PathBuf },
    SetParams { params: ParamUpdate },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub t: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplayScript {
    pub entries: Vec<ScriptEntry>,
}

impl ReplayScript {
    /// Parse and resolve relative paths against the script's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EngineError::Script(format!("{}: {e}", path.display())))?;
        let mut script: ReplayScript =
            serde_json::from_str(&text).map_err(|e| EngineError::Script(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for entry in &mut script.entries {
            match &mut entry.action {
                Action::PushAudio { path } | Action::PushImage { path } => *path = base.join(&*path),
                Action::SetParams { .. } => {}
            }
        }
        script.validate()?;
        Ok(script)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.entries.iter().find(|e| !(e.t >= 0.0 && e.t.is_finite())) {
            return Err(EngineError::Script(format!("action time must be finite and >= 0, got {}", e.t)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Input {
    Audio(AudioClip),
    Image(Vec<u8>),
    Params(ParamUpdate),
}

/// Every input with its arrival time, in arrival order (ties keep script order).
fn timeline(script: &ReplayScript) -> Result<Vec<(f64, Input)>> {
    let mut out = vec![];
    for entry in &script.entries {
        match &entry.action {
            Action::PushAudio { path } => {
                let clip = read_wav(path, SAMPLE_RATE)?;
                for (k, block) in clip.samples.chunks(AUDIO_BLOCK_SAMPLES).enumerate() {
                    let arrival = entry.t + (k * AUDIO_BLOCK_SAMPLES + block.len()) as f64 / SAMPLE_RATE as f64;
                    out.push((arrival, Input::Audio(AudioClip { samples: block.to_vec(), sample_rate: SAMPLE_RATE })));
                }
            }
            Action::PushImage { path } => {
                let raw = std::fs::read(path).map_err(|e| EngineError::Script(format!("{}: {e}", path.display())))?;
                out.push((entry.t, Input::Image(raw)));
            }
            Action::SetParams { params } => out.push((entry.t, Input::Params(params.clone()))),
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Time of the last input, the default end of a replay.
pub fn script_end(script: &ReplayScript) -> Result<f64> {
    Ok(timeline(script)?.last().map_or(0.0, |(t, _)| *t))
}

/// Drive `session` through the script up to `until` (inclusive). Returns the
/// events in emission order; `on_tick` sees the session after each tick.
pub fn replay_with(
    session: &mut Session,
    script: &ReplayScript,
    until: Option<f64>,
    mut on_tick: impl FnMut(&Session, &[EngineEvent]),
) -> Result<Vec<EngineEvent>> {
    let inputs = timeline(script)?;
    let end = until.unwrap_or_else(|| inputs.last().map_or(0.0, |(t, _)| *t));
    let mut events = vec![];
    let mut run_ticks_before = |session: &mut Session, t: f64, inclusive: bool, events: &mut Vec<EngineEvent>| {
        while session.next_tick() < t - EPS || (inclusive && session.next_tick() <= t + EPS) {
            let fired = session.advance(session.next_tick());
            on_tick(session, &fired);
            events.extend(fired);
        }
    };
    for (t, input) in inputs {
        if t > end + EPS {
            break;
        }
        run_ticks_before(session, t, false, &mut events);
        match input {
            Input::Audio(block) => {
                session.push_audio(&block)?;
            }
            Input::Image(raw) => events.extend(session.push_image_bytes(&raw, t)?.1),
            Input::Params(update) => events.extend(session.set_params(&update, t)?.1),
        }
    }
    run_ticks_before(session, end, true, &mut events);
    Ok(events)
}

pub fn replay(session: &mut Session, script: &ReplayScript, until: Option<f64>) -> Result<Vec<EngineEvent>> {
    replay_with(session, script, until, |_, _| {})
}

/// One JSON object per line.
pub fn to_jsonl(events: &[EngineEvent]) -> String {
    events.iter().map(|e| e.to_json_line() + "\n").collect()
}
