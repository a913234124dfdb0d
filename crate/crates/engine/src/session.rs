use std::sync::Arc;

use brushwork::audio::{decode_native, AudioClip, SAMPLE_RATE};
use brushwork::imaging::ingest_image;
use brushwork::mel::MelExtractor;
use brushwork::selection::{stage2_from_embedding, CongruityState, StageOneResult};
use brushwork::ImageTensor;
use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::buffer::RollingBuffer;
use crate::config::{Mode, ParamUpdate, SessionConfig};
use crate::error::{EngineError, Result};
use crate::event::{EngineEvent, EventBody, STATUS_NO_CANVAS, STATUS_STAGE1_REFRESH, STATUS_STARTED, STATUS_WARMING_UP};
use crate::resources::Resources;

#[derive(Debug, Clone)]
struct Canvas {
    hash: String,
    image: ImageTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioAck {
    pub buffered: usize,
    pub total_pushed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAck {
    pub hash: String,
    /// False when the snapshot matches the current canvas.
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub config: SessionConfig,
    pub time: f64,
    pub buffered: usize,
    pub total_pushed: u64,
    pub last_sequence: u64,
    pub next_tick: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub canvas_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub survivors: Option<usize>,
    pub library_chunks: usize,
    pub congruity: CongruityState,
}

/// One running performance session. Time is supplied by the caller, so the
/// same inputs at the same times always give the same events.
pub struct Session {
    config: SessionConfig,
    resources: Arc<Resources>,
    extractor: MelExtractor<f32>,
    buffer: RollingBuffer,
    canvas: Option<Canvas>,
    stage1: Option<StageOneResult>,
    stage1_dirty: bool,
    force_refilter: bool,
    last_refresh: Option<f64>,
    congruity: CongruityState,
    sequence: u64,
    next_tick: f64,
    clock: f64,
}

impl Session {
    /// Starts at session time `now`; the first tick is due one interval later.
    pub fn start(config: SessionConfig, resources: Arc<Resources>, now: f64) -> Result<(Self, Vec<EngineEvent>)> {
        config.validate()?;
        let congruity = CongruityState::new(config.alpha)?;
        let next_tick = now + config.tick_interval;
        let mut session = Session {
            config,
            resources,
            extractor: MelExtractor::new(),
            buffer: RollingBuffer::default(),
            canvas: None,
            stage1: None,
            stage1_dirty: false,
            force_refilter: false,
            last_refresh: None,
            congruity,
            sequence: 0,
            next_tick,
            clock: now,
        };
        let started = session.emit(now, EventBody::Status(STATUS_STARTED.into()));
        Ok((session, vec![started]))
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn resources(&self) -> &Arc<Resources> {
        &self.resources
    }

    pub fn buffer(&self) -> &RollingBuffer {
        &self.buffer
    }

    pub fn stage1(&self) -> Option<&StageOneResult> {
        self.stage1.as_ref()
    }

    pub fn canvas_hash(&self) -> Option<&str> {
        self.canvas.as_ref().map(|c| c.hash.as_str())
    }

    pub fn next_tick(&self) -> f64 {
        self.next_tick
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            config: self.config.clone(),
            time: self.clock,
            buffered: self.buffer.len(),
            total_pushed: self.buffer.total_pushed(),
            last_sequence: self.sequence,
            next_tick: self.next_tick,
            canvas_hash: self.canvas.as_ref().map(|c| c.hash.clone()),
            survivors: self.stage1.as_ref().map(|s| s.survivors.len()),
            library_chunks: self.resources.scorer.len(),
            congruity: self.congruity,
        }
    }

    fn emit(&mut self, time: f64, body: EventBody) -> EngineEvent {
        self.sequence += 1;
        EngineEvent { sequence: self.sequence, time, body }
    }

    /// Append a 16 kHz mono block; never triggers a tick.
    pub fn push_audio(&mut self, block: &AudioClip) -> Result<AudioAck> {
        if block.sample_rate != SAMPLE_RATE {
            return Err(brushwork::Error::Precondition(format!(
                "audio blocks must be {SAMPLE_RATE} Hz, got {}",
                block.sample_rate
            ))
            .into());
        }
        self.buffer.push(&block.samples);
        Ok(AudioAck { buffered: self.buffer.len(), total_pushed: self.buffer.total_pushed() })
    }

    /// Decode a WAV block; it must already be 16 kHz mono.
    pub fn push_wav(&mut self, raw: &[u8]) -> Result<AudioAck> {
        let (clip, channels) = decode_native(raw)?;
        if channels != 1 {
            return Err(brushwork::Error::Precondition(format!("audio blocks must be mono, got {channels} channels")).into());
        }
        self.push_audio(&clip)
    }

    /// Replace the canvas snapshot. A changed snapshot schedules a stage-1
    /// re-filter and emits a status event.
    pub fn push_image(&mut self, image: ImageTensor, now: f64) -> (ImageAck, Vec<EngineEvent>) {
        self.clock = self.clock.max(now);
        let hash = image.content_hash();
        if self.canvas.as_ref().is_some_and(|c| c.hash == hash) {
            return (ImageAck { hash, changed: false }, vec![]);
        }
        self.canvas = Some(Canvas { hash: hash.clone(), image });
        self.stage1_dirty = true;
        let event = self.emit(now, EventBody::Status(STATUS_STAGE1_REFRESH.into()));
        (ImageAck { hash, changed: true }, vec![event])
    }

    pub fn push_image_bytes(&mut self, raw: &[u8], now: f64) -> Result<(ImageAck, Vec<EngineEvent>)> {
        let image = ingest_image(raw)?;
        Ok(self.push_image(image, now))
    }

    /// Validate and apply; on error the config is unchanged. Changes take
    /// effect from the next tick, and a new fraction forces a re-filter.
    pub fn set_params(&mut self, update: &ParamUpdate, now: f64) -> Result<(SessionConfig, Vec<EngineEvent>)> {
        let next = self.config.with(update)?;
        self.clock = self.clock.max(now);
        let mut events = vec![];
        if next.fraction != self.config.fraction {
            self.stage1_dirty = true;
            self.force_refilter = true;
            if self.canvas.is_some() {
                events.push(self.emit(now, EventBody::Status(STATUS_STAGE1_REFRESH.into())));
            }
        }
        if next.alpha != self.config.alpha {
            self.congruity.alpha = next.alpha;
        }
        self.config = next;
        Ok((self.config.clone(), events))
    }

    /// Run every tick due at or before `now`.
    pub fn advance(&mut self, now: f64) -> Vec<EngineEvent> {
        let mut events = vec![];
        while self.next_tick <= now + 1e-9 {
            let t = self.next_tick;
            events.extend(self.tick(t));
            self.next_tick = t + self.config.tick_interval;
        }
        self.clock = self.clock.max(now);
        events
    }

    /// One tick at session time `now`. Degraded states produce status events.
    pub fn tick(&mut self, now: f64) -> Vec<EngineEvent> {
        self.clock = self.clock.max(now);
        if !self.buffer.is_full() {
            return vec![self.emit(now, EventBody::Status(STATUS_WARMING_UP.into()))];
        }
        if self.canvas.is_none() {
            return vec![self.emit(now, EventBody::Status(STATUS_NO_CANVAS.into()))];
        }
        let body = match self.config.mode {
            Mode::Scenario1Crossfeed => self.crossfeed(now).map(EventBody::Match),
            Mode::Scenario2Congruity => self.congruity_step().map(EventBody::Congruity),
        };
        let body = body.unwrap_or_else(|e| {
            warn!("tick at {now:.3}s failed: {e}");
            EventBody::Status(format!("tick failed: {e}"))
        });
        vec![self.emit(now, body)]
    }

    fn refresh_stage1(&mut self, now: f64) -> Result<()> {
        let due = self.stage1.is_none()
            || self.force_refilter
            || self.last_refresh.map_or(true, |t| now - t >= self.config.image_refresh - 1e-9);
        if !(self.stage1_dirty && due) {
            return Ok(());
        }
        let canvas = self.canvas.as_ref().ok_or_else(|| EngineError::State("no canvas".into()))?;
        let id = format!("canvas:{}", &canvas.hash[..12.min(canvas.hash.len())]);
        let result = self.resources.scorer.filter(&canvas.image, &id, self.config.fraction)?;
        debug!("stage-1 at {now:.3}s: {} of {} chunks survive", result.survivors.len(), result.total);
        self.stage1 = Some(result);
        self.stage1_dirty = false;
        self.force_refilter = false;
        self.last_refresh = Some(now);
        Ok(())
    }

    fn crossfeed(&mut self, now: f64) -> Result<brushwork::selection::MatchEvent> {
        self.refresh_stage1(now)?;
        let stage1 = self.stage1.as_ref().ok_or_else(|| EngineError::State("stage-1 survivors missing".into()))?;
        let mel = self.extractor.extract(&self.buffer.snapshot())?;
        let brush = self.resources.embedder.embed(&mel)?;
        let mut event = stage2_from_embedding(&self.resources.index, stage1, &brush, now)?;
        if let Some(paintings) = &self.resources.paintings {
            event.painting_id = paintings.best(&mel)?.map(|(id, _)| id);
        }
        Ok(event)
    }

    fn congruity_step(&mut self) -> Result<CongruityState> {
        let canvas = self.canvas.as_ref().ok_or_else(|| EngineError::State("no canvas".into()))?;
        let mel = self.extractor.extract(&self.buffer.snapshot())?;
        let score = self.resources.model.score_pair(&canvas.image, &mel)?;
        self.congruity = self.congruity.apply(score);
        Ok(self.congruity)
    }
}

/// Lifecycle wrapper: inputs before a session exists are state errors.
#[derive(Default)]
pub struct Engine {
    session: Option<Session>,
}

impl Engine {
    pub fn new() -> Self {
        Engine::default()
    }

    pub fn is_running(&self) -> bool {
        self.session.is_some()
    }

    /// Replaces any running session.
    pub fn start(&mut self, config: SessionConfig, resources: Arc<Resources>, now: f64) -> Result<Vec<EngineEvent>> {
        let (session, events) = Session::start(config, resources, now)?;
        self.session = Some(session);
        Ok(events)
    }

    pub fn stop(&mut self) -> Option<Session> {
        self.session.take()
    }

    pub fn session(&self) -> Result<&Session> {
        self.session.as_ref().ok_or_else(|| EngineError::State("no session has been started".into()))
    }

    pub fn session_mut(&mut self) -> Result<&mut Session> {
        self.session.as_mut().ok_or_else(|| EngineError::State("no session has been started".into()))
    }
}
