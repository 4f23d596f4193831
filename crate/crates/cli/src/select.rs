//! Resolution of names, dates and windows given on the command line.

use std::fmt;
use std::ops::Range;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: arguments, files, data or configuration.
    User(String),
    /// Failure inside the sampler or the analysis.
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    pub fn user(msg: impl Into<String>) -> Self {
        CliError::User(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<tvpbart::error::Error> for CliError {
    fn from(e: tvpbart::error::Error) -> Self {
        use tvpbart::error::Error as E;
        match e {
            E::Numerical { .. } | E::DegenerateScale(_) | E::Tree(_) => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::User(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn index_of(names: &[String], name: &str, what: &str) -> CliResult<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| CliError::user(format!("unknown {what} `{name}` (available: {})", names.join(", "))))
}

/// Rows whose ISO date lies in the inclusive window `START:END`.
pub fn window(dates: &[String], spec: &str) -> CliResult<Range<usize>> {
    let (start, end) = spec
        .split_once(':')
        .ok_or_else(|| CliError::user(format!("window `{spec}` is not of the form START:END")))?;
    let (start, end) = (start.trim(), end.trim());
    let first = dates.iter().position(|d| d.as_str() >= start);
    let last = dates.iter().rposition(|d| d.as_str() <= end);
    match (first, last) {
        (Some(a), Some(b)) if a <= b => Ok(a..b + 1),
        _ => Err(CliError::user(format!("window `{spec}` contains no sample period"))),
    }
}

pub fn flags(dates: &[String], windows: &[String]) -> CliResult<Vec<bool>> {
    let mut out = vec![false; dates.len()];
    for w in windows {
        for r in window(dates, w)? {
            out[r] = true;
        }
    }
    Ok(out)
}

/// `all`, an exact date, or a zero-based period index.
pub fn periods(dates: &[String], time: &str) -> CliResult<Vec<usize>> {
    if time.eq_ignore_ascii_case("all") {
        return Ok((0..dates.len()).collect());
    }
    if let Some(p) = dates.iter().position(|d| d == time) {
        return Ok(vec![p]);
    }
    match time.parse::<usize>() {
        Ok(p) if p < dates.len() => Ok(vec![p]),
        _ => Err(CliError::user(format!("--time `{time}` is neither `all`, a sample date, nor a period index"))),
    }
}

pub fn band(coverage: f64) -> CliResult<(f64, f64)> {
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(CliError::user(format!("coverage must lie in (0, 1), got {coverage}")));
    }
    Ok((0.5 - coverage / 2.0, 0.5 + coverage / 2.0))
}
