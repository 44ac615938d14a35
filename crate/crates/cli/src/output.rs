//! Files written and read by the commands.

use std::fs::File;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<String, CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
    std::fs::write(dir.join(name), format!("{text}\n"))?;
    Ok(name.to_string())
}

pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_path(dir.join(name)).map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
    }
    w.flush()?;
    Ok(name.to_string())
}

/// Reads a JSON file produced by an earlier command. Absence is a
/// configuration problem: the pipeline was run out of order.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Rows of an optional CSV input; `None` when the file does not exist.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Option<Vec<T>>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let rows = r
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Some(rows))
}

/// One point of the empirical survival curve of the coupling time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub x: f64,
    pub t: f64,
    pub survival: f64,
    pub stderr: f64,
    /// Certified bound, defined for `t ≥ x` only.
    pub bound: Option<f64>,
}

/// `U((t, t+h])` and its distance to the limit `h/μ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalRow {
    pub t: f64,
    pub h: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridRow {
    pub beta: f64,
    pub delta: f64,
    pub theta: f64,
    pub c: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub eta_tilde: f64,
    pub q: f64,
    /// Empty when the point is infeasible.
    pub rate: Option<f64>,
}
