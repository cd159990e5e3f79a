use std::fmt;
use std::path::PathBuf;

/// A rejected input line, 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {cause}")]
    File { path: PathBuf, cause: std::io::Error },
    #[error("{}", format_lines(.0))]
    Parse(Vec<LineError>),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] crtrack_core::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

fn format_lines(errs: &[LineError]) -> String {
    let shown: Vec<String> = errs.iter().take(5).map(|e| e.to_string()).collect();
    let more = errs.len().saturating_sub(5);
    if more > 0 {
        format!("parse error: {} (and {more} more)", shown.join("; "))
    } else {
        format!("parse error: {}", shown.join("; "))
    }
}

impl IoError {
    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::File { path: path.into(), cause: source }
    }

    /// Offending line numbers of a parse failure.
    pub fn lines(&self) -> Vec<usize> {
        match self {
            IoError::Parse(v) => v.iter().map(|e| e.line).collect(),
            _ => Vec::new(),
        }
    }
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;

pub fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))
}

pub fn write_string(path: &std::path::Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| IoError::file(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| IoError::file(path, e))
}
