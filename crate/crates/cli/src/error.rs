use std::process::ExitCode;

use bsch::assembly::AssemblyError;
use bsch::diagnostics::DiagnosticsError;
use bsch::elliptic::EllipticError;
use bsch::stepper::StepperError;
use thiserror::Error;

/// Failures reported as `error: <code>: <message>`.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    pub fn config(line: usize, message: impl Into<String>) -> Self {
        CliError::Config { line, message: message.into() }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Validation(_) => "validation",
            CliError::Io(_) => "io",
            CliError::Solver(_) => "solver",
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Solver(_) => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }
}

fn assembly_is_input(e: &AssemblyError) -> bool {
    matches!(e, AssemblyError::InvalidCoupling(_) | AssemblyError::Incompatible(_) | AssemblyError::ShapeMismatch(..))
}

impl From<StepperError> for CliError {
    fn from(e: StepperError) -> Self {
        let input = match &e {
            StepperError::InvalidConfig(_) | StepperError::InitialData(_) | StepperError::Potential(_) | StepperError::Velocity(_) => true,
            StepperError::Assembly(a) => assembly_is_input(a),
            _ => false,
        };
        if input {
            CliError::Validation(e.to_string())
        } else {
            CliError::Solver(e.to_string())
        }
    }
}

impl From<EllipticError> for CliError {
    fn from(e: EllipticError) -> Self {
        let input = match &e {
            EllipticError::InfiniteK | EllipticError::InvalidSchedule | EllipticError::InitialDataOutOfRange | EllipticError::Potential(_) => true,
            EllipticError::Assembly(a) => assembly_is_input(a),
            _ => false,
        };
        if input {
            CliError::Validation(e.to_string())
        } else {
            CliError::Solver(e.to_string())
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Precondition(m) | DiagnosticsError::Mesh(m) => CliError::Validation(m),
            DiagnosticsError::Stepper(s) => s.into(),
            DiagnosticsError::Elliptic(s) => s.into(),
            DiagnosticsError::Assembly(a) if assembly_is_input(&a) => CliError::Validation(a.to_string()),
            DiagnosticsError::Assembly(a) => CliError::Solver(a.to_string()),
        }
    }
}

impl From<bsch::mesh::MeshError> for CliError {
    fn from(e: bsch::mesh::MeshError) -> Self {
        CliError::Validation(format!("mesh: {e}"))
    }
}

impl From<bsch::output::OutputError> for CliError {
    fn from(e: bsch::output::OutputError) -> Self {
        CliError::Io(e.to_string())
    }
}
