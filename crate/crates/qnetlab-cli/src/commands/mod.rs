//! Subcommand implementations and the argument parsing they share. All
//! user-input validation lives here and maps to `CliError::Parse` (exit 2);
//! anything failing after inputs were accepted surfaces as `CliError::Lib`.

pub mod repeater;
pub mod sweep;
pub mod teleport;
pub mod twirl;

use qnetlab::{NoiseSpec, PreprocessAngles};

use crate::format::sig10;
use crate::CliError;

pub(crate) fn parse_spec(text: &str) -> Result<NoiseSpec, CliError> {
    NoiseSpec::parse(text).map_err(|err| CliError::Parse(err.to_string()))
}

/// `n1,n2` or `n1,n2,alpha,beta` with radian preprocessing angles.
pub(crate) fn parse_resource(
    text: &str,
) -> Result<(NoiseSpec, NoiseSpec, PreprocessAngles), CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    let (n1, n2, alpha, beta) = match parts.as_slice() {
        [a, b] => (*a, *b, 0.0, 0.0),
        [a, b, al, be] => {
            let alpha = parse_float("resource alpha", al)?;
            let beta = parse_float("resource beta", be)?;
            (*a, *b, alpha, beta)
        }
        _ => {
            return Err(CliError::Parse(format!(
                "--resource expects n1,n2 or n1,n2,alpha,beta, got '{text}'"
            )))
        }
    };
    let n1 = parse_spec(n1)?;
    let n2 = parse_spec(n2)?;
    let angles = PreprocessAngles::new(alpha, beta)
        .map_err(|err| CliError::Parse(err.to_string()))?;
    Ok((n1, n2, angles))
}

pub(crate) fn parse_float(what: &str, text: &str) -> Result<f64, CliError> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Parse(format!("{what} must be a number, got '{text}'")))
}

/// Canonical manifest value for a resource argument.
pub(crate) fn resource_argument(
    n1: &NoiseSpec,
    n2: &NoiseSpec,
    angles: &PreprocessAngles,
) -> String {
    format!(
        "{},{},{},{}",
        n1.canonical(),
        n2.canonical(),
        sig10(angles.alpha()),
        sig10(angles.beta())
    )
}

pub(crate) fn out_argument(out: &Option<std::path::PathBuf>) -> String {
    out.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "-".to_string())
}
