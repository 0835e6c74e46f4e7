use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("state {state} out of range (|S| = {num_states})")]
    StateOutOfRange { state: usize, num_states: usize },

    #[error("action {action} out of range (|A| = {num_actions})")]
    ActionOutOfRange { action: usize, num_actions: usize },

    #[error("node {node} out of range (|U| = {num_nodes})")]
    NodeOutOfRange { node: usize, num_nodes: usize },

    #[error("unknown observation symbol `{0}`")]
    UnknownSymbol(String),

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("reward trace length {rewards} does not match word length {word}")]
    LengthMismatch { word: usize, rewards: usize },

    #[error("teacher contradicts itself on `{word}`: cached {cached:?}, now {answered:?}")]
    Contradiction {
        word: String,
        cached: Vec<f64>,
        answered: Vec<f64>,
    },

    #[error("observation table has {0} unfilled cells")]
    UnfilledTable(usize),

    #[error("observation table is not closed and consistent")]
    IncompleteTable,

    #[error("`{0}` is not a counterexample to the current hypothesis")]
    NotACounterexample(String),

    #[error("model is not strongly connected ({components} components)")]
    NotStronglyConnected { components: usize },

    #[error("singular linear system while solving bottom component {component:?}")]
    SingularSystem { component: Vec<usize> },

    #[error("membership query `{word}` cannot be realized from the initial state")]
    UnrealizableQuery { word: String },

    #[error("step budget of {budget} exhausted after {steps} steps ({context})")]
    BudgetExhausted {
        budget: u64,
        steps: u64,
        context: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
