use crate::resource::Resource;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown {kind} `{id}`")]
    Reference { kind: &'static str, id: String },

    #[error("device index {index} out of range for {count} devices")]
    Range { index: usize, count: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("vertex `{vertex}` exceeds the thresholded {resource} capacity of every device")]
    InfeasibleVertex { vertex: String, resource: Resource },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error(
        "device {device} needs {streams} network streams but only {capacity} fit on its ports"
    )]
    PortExhaustion {
        device: usize,
        streams: usize,
        capacity: usize,
    },

    #[error("packet size {0} B is below the 64 B minimum transfer unit")]
    UnsupportedPacket(u64),

    #[error("device {device}: region {region} infeasible on {resource}")]
    RegionInfeasible {
        device: usize,
        region: String,
        resource: Resource,
    },

    #[error("device {device}: {ports} HBM ports exceed binding capacity {capacity}")]
    BindingCapacity {
        device: usize,
        ports: usize,
        capacity: usize,
    },

    #[error("deadlock risk in cycle [{}]: added latency {latency} exceeds total depth {depth}", cycle.join(", "))]
    DeadlockRisk {
        cycle: Vec<String>,
        latency: u64,
        depth: u64,
    },

    #[error("deadlock at cycle {time}: blocked vertices [{}]", waiting.join(", "))]
    Deadlock { time: u64, waiting: Vec<String> },

    #[error("sink `{sink}` received {got} tokens, expected {expected}")]
    TokenMismatch {
        sink: String,
        expected: u64,
        got: u64,
    },

    #[error("output digest changed under latency perturbation {perturbation:?}")]
    DigestMismatch { perturbation: Vec<(String, u64)> },

    #[error("reports describe different workloads: {0}")]
    WorkloadMismatch(String),

    #[error("missing stage output: {0}")]
    StageMissing(String),

    #[error("solver backend: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_)
            | Error::InfeasibleVertex { .. }
            | Error::RegionInfeasible { .. }
            | Error::BindingCapacity { .. }
            | Error::PortExhaustion { .. }
            | Error::Capacity(_) => 3,
            Error::Deadlock { .. } | Error::DeadlockRisk { .. } => 5,
            Error::Solver(_) | Error::Io(_) => 1,
            _ => 2,
        }
    }
}
