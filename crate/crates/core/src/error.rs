use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("control and target must differ (both are qubit {0})")]
    SameControlTarget(usize),

    #[error("duplicate measured qubit {0}")]
    DuplicateQubit(usize),

    #[error("empty measurement list")]
    EmptyMeasurement,

    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),

    #[error("amplitude vector length {len} is not 2^{num_qubits}")]
    BadStateLength { len: usize, num_qubits: usize },

    #[error("cannot encode an empty feature vector")]
    EmptyFeatures,

    #[error("cannot encode an all-zero feature vector")]
    ZeroFeatures,

    #[error("empty label list")]
    EmptyLabels,

    #[error("invalid complexity input: {0}")]
    Complexity(String),

    #[error("gate index {0} outside 1..=13")]
    GateIndex(i64),

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("parameter vector has length {got}, layout expects {expected}")]
    ParamLength { expected: usize, got: usize },

    #[error("input register has {got} qubits, layout expects {expected}")]
    InputQubits { expected: usize, got: usize },

    #[error("all probability mass lies on masked bitstrings")]
    DegenerateMask,

    #[error("empty probability vector")]
    EmptyProbabilities,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("lambda {0} outside [0, 1]")]
    Lambda(f64),

    #[error("no reports to select from")]
    NoReports,

    #[error("fusion undefined: {0}")]
    Fusion(String),

    #[error("malformed IDX data: {0}")]
    Idx(String),

    #[error("infeasible partition: {0}")]
    Partition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed model record: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
