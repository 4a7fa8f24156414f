use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },

    #[error("unresolved edge: two band edges in scan cell [{lo}, {hi}]; refine the grid")]
    UnresolvedEdge { lo: f64, hi: f64 },

    #[error("energy {energy} is not in a band interior (|discriminant| = {disc})")]
    NotInBand { energy: f64, disc: f64 },

    #[error("Floquet eigenvector degenerate at energy {energy} (|discriminant| = {disc})")]
    DegenerateEigenvector { energy: f64, disc: f64 },

    #[error("phase grid too coarse: step of {step} rad at x = {x}")]
    PhaseGridTooCoarse { x: f64, step: f64 },

    #[error("resonant pair: k = {k1} and k = {k2} ({reason})")]
    ResonantPair { k1: f64, k2: f64, reason: String },

    #[error("resonant set: {0}")]
    ResonantSet(String),

    #[error("empty target set")]
    EmptyTargetSet,

    #[error("stage not admissible: {0}")]
    StageNotAdmissible(String),

    #[error("contract violated: {name} at {location}: {lhs} > {rhs}")]
    ContractViolated {
        name: String,
        location: f64,
        lhs: f64,
        rhs: f64,
    },

    #[error("epoch contract failed: epoch {epoch}, energy {energy}: {lhs} > {rhs}")]
    EpochContractFailed {
        epoch: usize,
        energy: f64,
        lhs: f64,
        rhs: f64,
    },

    #[error("infeasible scaling: {0}")]
    InfeasibleScaling(String),

    #[error("infeasible h: {0}")]
    InfeasibleEnvelope(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}
