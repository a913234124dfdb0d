use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("session state: {0}")]
    State(String),
    #[error("startup failed: {0}")]
    Startup(#[source] brushwork::Error),
    #[error(transparent)]
    Core(#[from] brushwork::Error),
    #[error("replay script: {0}")]
    Script(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EngineError>;
