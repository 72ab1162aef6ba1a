//! Problem files, solver dispatch and reports for the `timeblocks` binary.

pub mod build;
pub mod dam;
pub mod file;
pub mod report;
pub mod run;

use std::fmt;

/// Why a command did not produce a passing report.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    /// Bad flags, bad file, or a command that does not fit the file.
    Usage(String),
    /// The instance failed a check; carries the witness.
    Verification(String),
    /// A table or enumeration exceeded its limit.
    Capacity(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Capacity(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "error: {m}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
            Failure::Capacity(m) => write!(f, "error: {m}"),
        }
    }
}

/// Runs `command` on the file contents `text`: the text to print and the
/// exit status.
pub fn execute(text: &str, command: run::Command, opts: &run::RunOptions) -> (String, i32) {
    let outcome = match command {
        run::Command::BuildDam => dam::parse_dam(text)
            .map_err(|e| Failure::Usage(e.to_string()))
            .and_then(|f| dam::dam_problem(&f))
            .map(|p| (file::to_canonical(&p), 0)),
        _ => run::run(text, command, opts).map(|r| {
            let code = if r.passed() { 0 } else { 1 };
            (file::to_canonical(&r), code)
        }),
    };
    match outcome {
        Ok(ok) => ok,
        Err(f) => (format!("{f}\n"), f.exit_code()),
    }
}
