use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Numerical(#[from] multibump::Error),

    #[error("{failed} of {total} verification criteria failed")]
    Verification { failed: usize, total: usize },

    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),

    #[error("cannot write table: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable form written to stderr and to `summary.json`.
    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            CliError::Config(_) => "config".to_string(),
            CliError::Numerical(e) => variant_name(e),
            CliError::Verification { .. } => "verification".to_string(),
            CliError::Io(_) | CliError::Csv(_) => "io".to_string(),
        };
        json!({ "error": { "kind": kind, "message": self.to_string(), "exit_code": self.exit_code() } })
    }
}

fn variant_name(e: &multibump::Error) -> String {
    let debug = format!("{e:?}");
    let end = debug.find(['(', ' ', '{']).unwrap_or(debug.len());
    debug[..end].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_separate_configuration_from_numerics() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Numerical(multibump::Error::NoFeasibleRestart).exit_code(), 1);
    }

    #[test]
    fn numerical_errors_carry_their_variant() {
        let e = CliError::Numerical(multibump::Error::NewtonDiverged {
            iterations: 3,
            history: vec![1.0],
        });
        assert_eq!(e.to_json()["error"]["kind"], "NewtonDiverged");
        let e = CliError::Numerical(multibump::Error::NoFeasibleRestart);
        assert_eq!(e.to_json()["error"]["kind"], "NoFeasibleRestart");
    }
}
