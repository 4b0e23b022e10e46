use std::fmt;

use thiserror::Error;

/// A single problem found while validating a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveInductance { name: String, value: f64 },
    NegativeResistance { name: String, value: f64 },
    NegativeVoltage { name: String, value: f64 },
    NonPositiveTurns { name: String, value: f64 },
    PhaseShiftOutOfRange { port: usize, value: f64 },
    NonPositiveFrequency { value: f64 },
    NonFinite { name: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveInductance { name, value } => {
                write!(f, "inductance {name} must be > 0 (got {value})")
            }
            Violation::NegativeResistance { name, value } => {
                write!(f, "resistance {name} must be >= 0 (got {value})")
            }
            Violation::NegativeVoltage { name, value } => {
                write!(f, "voltage {name} must be >= 0 (got {value})")
            }
            Violation::NonPositiveTurns { name, value } => {
                write!(f, "turns ratio {name} must be > 0 (got {value})")
            }
            Violation::PhaseShiftOutOfRange { port, value } => {
                write!(f, "delta{port} must lie in [-1, 1] (got {value})")
            }
            Violation::NonPositiveFrequency { value } => {
                write!(f, "switching frequency must be > 0 (got {value})")
            }
            Violation::NonFinite { name } => write!(f, "{name} is not a finite number"),
        }
    }
}

/// Every violation found in a parameter set, in field order.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid converter configuration: ")?;
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl ConfigError {
    pub fn contains(&self, pred: impl Fn(&Violation) -> bool) -> bool {
        self.violations.iter().any(pred)
    }
}

#[derive(Debug, Error)]
pub enum QabError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("inductance matrix is numerically singular (condition number {condition:.3e})")]
    SingularInductanceMatrix { condition: f64 },

    #[error("impedance matrix is singular at the switching frequency")]
    SingularImpedance,

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("no unique periodic steady state: I - Phi_T is singular (lossless network?)")]
    NoUniqueSteadyState,

    #[error("long-run integration did not settle after {cycles} cycles")]
    SteadyStateNotReached { cycles: usize },

    #[error("waveform window must hold at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("samples do not cover exactly one switching period: {reason}")]
    WrongWindowLength { reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config file: {0}")]
    ConfigFile(String),

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = QabError> = std::result::Result<T, E>;
