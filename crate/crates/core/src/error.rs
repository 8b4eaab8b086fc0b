use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mask dimension mismatch: {}x{} vs {}x{}", lhs.0, lhs.1, rhs.0, rhs.1)]
    DimensionMismatch {
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("invalid RLE: {0}")]
    InvalidRle(String),

    #[error("present-class set is empty")]
    EmptyPresentSet,

    #[error("class {0} missing from candidate")]
    MissingClass(u32),

    #[error("invalid candidate set: {0}")]
    InvalidCandidateSet(String),

    #[error("invalid bank config: {0}")]
    InvalidBankConfig(String),

    #[error("ORM already holds frame {0}")]
    DuplicateOrmFrame(usize),

    #[error("prompt for class {0} already installed")]
    DuplicatePrompt(u32),

    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),

    #[error("proposer contract violation: {0}")]
    ProposerContract(String),

    #[error("invalid scenario script: {0}")]
    InvalidScript(String),

    #[error("sequence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("no evaluable frames: ground truth has no present classes")]
    NoEvaluableFrames,

    #[error("ablation cell failed (policy={policy}, scenario={scenario}, seed={seed}): {source}")]
    AblationCell {
        policy: &'static str,
        scenario: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}
