//! Error categories and the process exit codes they map to.

use std::fmt;

/// Problems with the input files themselves (missing, misnamed, mismatched).
#[derive(Debug)]
pub struct InputError(pub String);

/// Missing or contradictory configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}
impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Missing, unreadable or inconsistent input files.
    Input,
    /// Bad configuration or arguments.
    Config,
    /// A stage could not process otherwise valid data.
    Processing,
    Internal,
}

impl Category {
    /// Exit status; 2 is left to argument parsing.
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Internal => 1,
            Category::Input => 3,
            Category::Config => 4,
            Category::Processing => 5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::Input => "input error",
            Category::Config => "configuration error",
            Category::Processing => "processing error",
            Category::Internal => "internal error",
        }
    }
}

/// Classifies by the innermost recognized cause.
pub fn categorize(err: &anyhow::Error) -> Category {
    use slicereg::Error as E;
    let mut found = Category::Internal;
    for cause in err.chain() {
        let c = if cause.is::<InputError>() || cause.is::<std::io::Error>() {
            Category::Input
        } else if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() {
            Category::Config
        } else if let Some(e) = cause.downcast_ref::<E>() {
            match e {
                E::Codec { .. } => Category::Input,
                E::InvalidArgument(_) | E::InvalidSpec(_) => Category::Config,
                E::BlankSlide | E::DegenerateCorrespondence(_) | E::RoiTooSmall { .. } | E::UndefinedSimilarity => {
                    Category::Processing
                }
            }
        } else {
            continue;
        };
        found = c;
    }
    found
}
