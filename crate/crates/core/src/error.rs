use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("blank slide: no tissue contour found")]
    BlankSlide,
    #[error("degenerate correspondences: {0}")]
    DegenerateCorrespondence(&'static str),
    #[error("region of interest too small ({width}x{height}, need at least {min}x{min})")]
    RoiTooSmall { width: usize, height: usize, min: usize },
    #[error("similarity undefined: both masks are empty")]
    UndefinedSimilarity,
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error("image codec error for {path}: {source}")]
    Codec {
        path: String,
        #[source]
        source: ::image::ImageError,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
