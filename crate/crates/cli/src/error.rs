use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Core(combmem::Error),
    Io(String),
    /// `verify` ran to completion but some checks did not pass.
    ChecksFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use combmem::Error as E;
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Core(E::InvalidParameter { .. } | E::Domain(_) | E::DimensionMismatch { .. } | E::Index { .. }) => 2,
            Self::Core(_) | Self::Io(_) | Self::ChecksFailed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Core(e) => write!(f, "{e}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
            Self::ChecksFailed(names) => write!(f, "failed checks: {}", names.join(", ")),
        }
    }
}

impl std::error::Error for CliError {}

impl From<combmem::Error> for CliError {
    fn from(e: combmem::Error) -> Self {
        Self::Core(e)
    }
}
