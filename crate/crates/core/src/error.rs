use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid fixation: {0}")]
    InvalidFixation(String),

    #[error("fixation {index} at ({px}, {py}) lies outside the {width}x{height} image")]
    OutOfBounds {
        index: usize,
        px: f64,
        py: f64,
        width: u32,
        height: u32,
    },

    #[error("image dimensions must be positive, got {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },

    #[error("cannot render heatmap of empty scanpath")]
    EmptyScanpath,

    #[error("heatmap dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),

    #[error("constant heatmap has undefined CC")]
    ConstantHeatmap,

    #[error("MultiMatch undefined for scanpaths shorter than 2")]
    ScanpathTooShort,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("rating {rating} outside the scale of criterion '{criterion}'")]
    RatingOutOfScale { criterion: String, rating: i64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("case '{case_id}': {source}")]
    Case {
        case_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn for_case(self, case_id: &str) -> Self {
        Error::Case {
            case_id: case_id.to_string(),
            source: Box::new(self),
        }
    }
}
