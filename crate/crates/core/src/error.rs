use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the pipeline. Errors carry enough
/// context (paths, line numbers, ids) to be actionable from a CLI run.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),

    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),

    #[error("unknown label `{label}` (label space is {space:?})")]
    UnknownLabel { label: String, space: Vec<String> },

    #[error("unknown labeling function `{0}`")]
    UnknownLabelingFunction(String),

    #[error("labeling function `{lf}` is only defined for binary label spaces")]
    BinaryLabelSpaceRequired { lf: String },

    #[error("template `{id}`: {msg}")]
    InvalidTemplate { id: String, msg: String },

    #[error("ground factor from template `{template}` references variable {variable} but the graph has {n_variables} variables")]
    DanglingVariable {
        template: String,
        variable: usize,
        n_variables: usize,
    },

    #[error("ground factor from template `{template}` repeats variable {variable}")]
    RepeatedVariable { template: String, variable: usize },

    #[error("prediction row {index} sums to {sum} (must be within 1e-9 of 1)")]
    UnnormalizedDistribution { index: usize, sum: f64 },

    #[error("marginals have {got} rows but {want} were required")]
    MarginalCount { got: usize, want: usize },

    #[error("factor {factor} produced a non-finite message")]
    NonFiniteMessage { factor: usize },

    #[error("exact inference state space too large: component has {states} joint states (bound {bound})")]
    StateSpaceTooLarge { states: f64, bound: f64 },

    #[error("weight for template `{template}` diverged to {value} (|w| > {bound})")]
    WeightDiverged {
        template: String,
        value: f64,
        bound: f64,
    },

    #[error("graph still carries prediction potentials; supervision M-step requires a supervision-only graph")]
    PredictionFactorsPresent,

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("EM iteration {iteration}: {source}")]
    EmStep {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("exact coverage solver bound exceeded: C({n},{k}) = {combinations} subsets (bound {bound})")]
    CombinatorialBound {
        n: usize,
        k: usize,
        combinations: f64,
        bound: f64,
    },

    #[error("question `{question}` references unknown document `{doc}`")]
    UnknownDocument { question: String, doc: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
