use std::path::PathBuf;

use brushwork::selection::{check_fraction, DEFAULT_ALPHA, DEFAULT_FRACTION};
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Brush audio retrieves music through the two-step filter.
    Scenario1Crossfeed,
    /// Live music is scored against the canvas as a congruity meter.
    Scenario2Congruity,
}

impl std::str::FromStr for Mode {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scenario1_crossfeed" | "scenario1" | "crossfeed" => Ok(Mode::Scenario1Crossfeed),
            "scenario2_congruity" | "scenario2" | "congruity" => Ok(Mode::Scenario2Congruity),
            other => Err(EngineError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    /// Seconds between ticks.
    #[serde(default = "default_tick")]
    pub tick_interval: f64,
    /// Minimum seconds between canvas-triggered stage-1 re-filters.
    #[serde(default = "default_refresh")]
    pub image_refresh: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub correspondence: PathBuf,
    pub embedder: PathBuf,
    pub index: PathBuf,
    /// Library manifest whose paintings feed the music-to-painting direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library: Option<PathBuf>,
}

fn default_mode() -> Mode {
    Mode::Scenario1Crossfeed
}

fn default_fraction() -> f64 {
    DEFAULT_FRACTION
}

fn default_tick() -> f64 {
    1.0
}

fn default_refresh() -> f64 {
    2.0
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl SessionConfig {
    pub fn new(correspondence: impl Into<PathBuf>, embedder: impl Into<PathBuf>, index: impl Into<PathBuf>) -> Self {
        SessionConfig {
            mode: default_mode(),
            fraction: default_fraction(),
            tick_interval: default_tick(),
            image_refresh: default_refresh(),
            alpha: default_alpha(),
            correspondence: correspondence.into(),
            embedder: embedder.into(),
            index: index.into(),
            library: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction(self.fraction).map_err(|e| EngineError::Config(e.to_string()))?;
        if !(self.tick_interval > 0.0 && self.tick_interval.is_finite()) {
            return Err(EngineError::Config(format!("tick_interval must be > 0, got {}", self.tick_interval)));
        }
        if !(self.image_refresh >= 0.0 && self.image_refresh.is_finite()) {
            return Err(EngineError::Config(format!("image_refresh must be >= 0, got {}", self.image_refresh)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(EngineError::Config(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        Ok(())
    }

    /// The config with `update` applied, validated; `self` is left untouched.
    pub fn with(&self, update: &ParamUpdate) -> Result<SessionConfig> {
        let mut next = self.clone();
        if let Some(mode) = update.mode {
            next.mode = mode;
        }
        if let Some(f) = update.fraction {
            next.fraction = f;
        }
        if let Some(t) = update.tick_interval {
            next.tick_interval = t;
        }
        if let Some(r) = update.image_refresh {
            next.image_refresh = r;
        }
        if let Some(a) = update.alpha {
            next.alpha = a;
        }
        next.validate()?;
        Ok(next)
    }
}

/// Runtime-adjustable subset of [`SessionConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamUpdate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick_interval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_refresh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}
