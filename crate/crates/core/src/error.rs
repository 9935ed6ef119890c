use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image {width}x{height} is too small for ROI at ({x}, {y}) of size {crop_width}x{crop_height}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        x: usize,
        y: usize,
        crop_width: usize,
        crop_height: usize,
    },

    #[error("crop of size {size} does not fit in {width}x{height}")]
    CropTooLarge { size: usize, width: usize, height: usize },

    #[error("polygon has {distinct} distinct vertices, need at least 3")]
    DegeneratePolygon { distinct: usize },

    #[error("image {width}x{height} cannot be split into a {tiles_x}x{tiles_y} tile grid")]
    TileTooSmall {
        width: usize,
        height: usize,
        tiles_x: usize,
        tiles_y: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite activation in {0}")]
    NonFiniteActivation(String),

    #[error("non-finite gradient for {0}")]
    NonFiniteGradient(String),

    #[error("{samples} samples cannot fill {k} folds")]
    TooFewSamples { samples: usize, k: usize },

    #[error("baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),

    #[error("sample {sample} has no mask for rater {rater}")]
    MissingRaterMask { sample: String, rater: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
