use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shared pilot count Q={q} exceeds min({k}, {l})")]
    PilotRange { q: usize, k: usize, l: usize },

    #[error("pilot length tau_p={tau_p} shorter than {needed}")]
    PilotLength { tau_p: usize, needed: usize },

    #[error("cluster size {size} outside 1..={max}")]
    ClusterSize { size: usize, max: usize },

    #[error("per-AP power budget violated at {system} AP {ap}: {load} > 1")]
    PowerBudget { system: &'static str, ap: usize, load: f64 },

    #[error("overhead {overhead} symbols leaves no payload in tau_c={tau_c}")]
    Overhead { overhead: usize, tau_c: usize },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("conic solver did not converge at lambda={lambda}: {status}")]
    Solver { lambda: f64, status: String },

    #[error("bisection bracket could not be initialised after {0} doublings")]
    Bracket(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
