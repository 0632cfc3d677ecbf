use thiserror::Error;

/// Errors surfaced by the library operations. Variants carry machine-readable
/// codes via [`Error::code`] for the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("words belong to different presentations")]
    PresentationMismatch,
    #[error("operation undefined on the identity word")]
    IdentityWord,
    #[error("element is elliptic (peripheral or trivial): {0}")]
    EllipticElement(String),
    #[error("presentation is sporadic (complexity {0} < 3)")]
    SporadicPresentation(i64),
    #[error("complexity {0} < 3 is outside the bound formulas")]
    SporadicComplexity(i64),
    #[error("generators lie in more than one factor")]
    MixedFactors,
    #[error("collapse would leave no edge")]
    NothingLeft,
    #[error("collapse set contains a loop edge `{0}`")]
    NonForestCollapse(String),
    #[error("cut data is not an admissible cut: {0}")]
    InvalidCut(String),
    #[error("subgraph is not connected")]
    DisconnectedSubgraph,
    #[error("vertex has trivial stabilizer")]
    TrivialStabilizer,
    #[error("search budget of {0} exhausted without a certificate")]
    BudgetExceeded(usize),
    #[error("tree is not Whitehead reduced for the line collection: {0}")]
    NotReduced(String),
    #[error("loose-end pairing mismatch: {0}")]
    PairingMismatch(String),
    #[error("no line crosses the edge")]
    NoLinesCrossE,
    #[error("element is simple; operation expects a non-simple element")]
    SimpleElement,
    #[error("axis is not a cut pair (component count {0} < 2)")]
    NotACutPair(usize),
    #[error("certificate step {0} requires a supplied splitting")]
    MissingSuppliedSplitting(usize),
    #[error("validation failure: {0}")]
    ValidationFailure(String),
    #[error("no valid random move found after {0} retries")]
    NoValidMove(usize),
    #[error("the two quadraticity criteria disagree; internal inconsistency: {0}")]
    InternalInconsistency(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code for CLI output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownGenerator(_) => "UnknownGenerator",
            Error::PresentationMismatch => "PresentationMismatch",
            Error::IdentityWord => "IdentityWord",
            Error::EllipticElement(_) => "EllipticElement",
            Error::SporadicPresentation(_) => "SporadicPresentation",
            Error::SporadicComplexity(_) => "SporadicComplexity",
            Error::MixedFactors => "MixedFactors",
            Error::NothingLeft => "NothingLeft",
            Error::NonForestCollapse(_) => "NonForestCollapse",
            Error::InvalidCut(_) => "InvalidCut",
            Error::DisconnectedSubgraph => "DisconnectedSubgraph",
            Error::TrivialStabilizer => "TrivialStabilizer",
            Error::BudgetExceeded(_) => "BudgetExceeded",
            Error::NotReduced(_) => "NotReduced",
            Error::PairingMismatch(_) => "PairingMismatch",
            Error::NoLinesCrossE => "NoLinesCrossE",
            Error::SimpleElement => "SimpleElement",
            Error::NotACutPair(_) => "NotACutPair",
            Error::MissingSuppliedSplitting(_) => "MissingSuppliedSplitting",
            Error::ValidationFailure(_) => "ValidationFailure",
            Error::NoValidMove(_) => "NoValidMove",
            Error::InternalInconsistency(_) => "InternalInconsistency",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
