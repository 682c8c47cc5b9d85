use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible for an operation.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Wrong rank for an operation.
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    /// Input does not match the model configuration.
    InputShape {
        expected_frames: usize,
        expected_joints: usize,
        shape: Vec<usize>,
    },
    /// An API contract was violated (non-scalar root, empty set, ...).
    Contract(String),
    /// Skeleton layout is not a valid rooted tree.
    Topology(String),
    UnknownLayout(String),
    /// Invalid configuration value.
    Config(String),
    /// A parameter tensor does not have the shape the configuration implies.
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    /// Procrustes alignment on a target with rank < 2 after centering.
    DegenerateTarget,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            Error::Rank { op, expected, shape } => {
                write!(f, "{op}: expected rank {expected}, got shape {shape:?}")
            }
            Error::InputShape {
                expected_frames,
                expected_joints,
                shape,
            } => write!(
                f,
                "input shape {shape:?} does not match expected (T={expected_frames}, N={expected_joints}, 2)"
            ),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Topology(msg) => write!(f, "invalid skeleton topology: {msg}"),
            Error::UnknownLayout(name) => write!(f, "unknown skeleton layout '{name}'"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::ParamShape {
                name,
                expected,
                found,
            } => write!(f, "parameter '{name}': expected shape {expected:?}, found {found:?}"),
            Error::DegenerateTarget => {
                f.write_str("procrustes: target has rank < 2 after centering")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
