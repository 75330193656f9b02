use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is not readable as UTF-8 text: {0}")]
    UnreadableInput(String),
    #[error("corpus contains no valid records ({skipped} skipped)")]
    EmptyCorpus { skipped: usize },
    #[error("invalid thematic field: {0}")]
    InvalidField(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no interactions of the selected kinds were found")]
    EmptyGraph,

    #[error("no tweet contains a thematic-field term")]
    NoTransactions,
    #[error("requested {requested} groups but only {available} distinct antecedents exist")]
    TooFewAntecedents { requested: usize, available: usize },

    #[error("lag {lag} does not fit a series of length {len}")]
    LagTooLarge { lag: usize, len: usize },
    #[error("series are not on a shared day axis: {0}")]
    MisalignedSeries(String),
    #[error("price on {date} is not positive: {price}")]
    NonpositivePrice { date: String, price: f64 },
    #[error("features and target have no overlapping dates")]
    NoOverlap,

    #[error("target is constant; no penalty path exists")]
    DegenerateTarget,
    #[error("feature `{0}` is missing from the design matrix")]
    MissingFeature(String),
    #[error("chain {chain} produced a non-finite log-posterior at iteration {iteration}")]
    ChainDiverged { chain: usize, iteration: usize },

    #[error("environment inputs are misaligned: {0}")]
    Misaligned(String),
    #[error("episode already finished at step {0}")]
    EpisodeFinished(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
