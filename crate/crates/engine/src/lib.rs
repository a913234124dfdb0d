//! Live session engine: a rolling 4 s brush-audio window and the current
//! canvas feed periodic ticks of the selection pipeline, whose results go out
//! as a numbered event stream. Sessions can be driven over HTTP or replayed
//! from a script on a virtual clock.

pub mod buffer;
pub mod config;
pub mod error;
pub mod event;
pub mod replay;
pub mod resources;
pub mod server;
pub mod session;

pub use buffer::RollingBuffer;
pub use config::{Mode, ParamUpdate, SessionConfig};
pub use error::{EngineError, Result};
pub use event::{EngineEvent, EventBody};
pub use resources::Resources;
pub use session::{Engine, Session};
