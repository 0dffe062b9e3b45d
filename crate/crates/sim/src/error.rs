use std::path::PathBuf;

/// Errors of the harness. Library errors carry the experiment context they
/// occurred in.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Core { context: String, source: mimo_core::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl SimError {
    /// 2 for configuration problems, 3 for numerical non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use mimo_core::Error as E;
        match self {
            SimError::Config(_) => 2,
            SimError::Json(e) if e.is_data() || e.is_syntax() || e.is_eof() => 2,
            SimError::Core { source: E::Config(_) | E::Domain(_), .. } => 2,
            SimError::Core { source: E::Convergence { .. } | E::Numerical(_), .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, f: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for mimo_core::Result<T> {
    fn context(self, f: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| SimError::Core { context: f(), source })
    }
}

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> SimError {
    let path = path.into();
    move |source| SimError::Io { path, source }
}
