use brushwork::selection::{CongruityState, MatchEvent};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    Match(MatchEvent),
    Congruity(CongruityState),
    Status(String),
}

/// One entry of a session's event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineEvent {
    /// Starts at 1 and increases by one per event.
    pub sequence: u64,
    /// Session time in seconds.
    pub time: f64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl EngineEvent {
    pub fn kind(&self) -> &'static str {
        match self.body {
            EventBody::Match(_) => "match",
            EventBody::Congruity(_) => "congruity",
            EventBody::Status(_) => "status",
        }
    }

    pub fn as_match(&self) -> Option<&MatchEvent> {
        match &self.body {
            EventBody::Match(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_congruity(&self) -> Option<&CongruityState> {
        match &self.body {
            EventBody::Congruity(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_status(&self) -> Option<&str> {
        match &self.body {
            EventBody::Status(s) => Some(s),
            _ => None,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

pub const STATUS_STARTED: &str = "session started";
pub const STATUS_WARMING_UP: &str = "warming up";
pub const STATUS_NO_CANVAS: &str = "waiting for canvas";
pub const STATUS_STAGE1_REFRESH: &str = "stage1 refresh";
