use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use evtpr_core::io::read_frame;
use evtpr_core::representations::parse_rational;
use evtpr_core::{Error, IntensityFrame};
use num_rational::BigRational;
use num_traits::ToPrimitive;

pub const TIMESTAMPS_FILE: &str = "timestamps.txt";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, missing or inconsistent inputs. Exit code 2.
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(Error::Format(_) | Error::Io(_)) => 3,
            CliError::Core(Error::InvalidInput(_) | Error::Numeric(_)) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// A duration or instant in seconds: a decimal or `p/q`, optionally
/// suffixed with `s`, `ms` or `us`.
pub fn parse_seconds(text: &str) -> CliResult<BigRational> {
    let t = text.trim();
    let (body, per_second) = if let Some(b) = t.strip_suffix("us") {
        (b, 1_000_000)
    } else if let Some(b) = t.strip_suffix("ms") {
        (b, 1_000)
    } else if let Some(b) = t.strip_suffix('s') {
        (b, 1)
    } else {
        (t, 1)
    };
    let value = parse_rational(body).map_err(|_| usage(format!("cannot parse time {text:?}")))?;
    Ok(value / BigRational::from_integer(per_second.into()))
}

pub fn seconds_to_micros_f64(s: &BigRational) -> f64 {
    (s * BigRational::from_integer(1_000_000.into())).to_f64().unwrap_or(f64::NAN)
}

/// Converts to whole microseconds; fractional microseconds are rejected.
pub fn seconds_to_micros(s: &BigRational, what: &str) -> CliResult<u64> {
    let us = s * BigRational::from_integer(1_000_000.into());
    if !us.is_integer() {
        return Err(usage(format!("{what} is not a whole number of microseconds")));
    }
    us.to_integer().to_u64().ok_or_else(|| usage(format!("{what} is negative or too large")))
}

pub fn parse_time_list(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            parse_rational(s)
                .ok()
                .and_then(|r| r.to_f64())
                .ok_or_else(|| usage(format!("cannot parse time value {s:?}")))
        })
        .collect()
}

fn is_pixmap(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm"))
}

/// Pixmaps in `dir`, sorted by file name.
pub fn list_pixmaps(dir: &Path) -> CliResult<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(usage(format!("{} is not a directory", dir.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| is_pixmap(p))
        .collect();
    files.sort();
    Ok(files)
}

/// One microsecond timestamp per line; blank lines and `#` comments are
/// skipped.
pub fn read_timestamps(path: &Path) -> CliResult<Vec<u64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read timestamps {}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<u64>().map_err(|_| usage(format!("bad timestamp line {l:?} in {}", path.display()))))
        .collect()
}

/// Loads a clip directory: pixmaps sorted by name plus `timestamps.txt`.
pub fn read_clip(dir: &Path) -> CliResult<Vec<IntensityFrame>> {
    let files = list_pixmaps(dir)?;
    let stamps = read_timestamps(&dir.join(TIMESTAMPS_FILE))?;
    if files.len() != stamps.len() {
        return Err(usage(format!(
            "{} has {} pixmaps but {} timestamps",
            dir.display(),
            files.len(),
            stamps.len()
        )));
    }
    if files.is_empty() {
        return Err(usage(format!("{} contains no pixmaps", dir.display())));
    }
    files.iter().zip(stamps).map(|(f, t)| Ok(read_frame(f, t)?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_syntax() {
        let half = parse_rational("1/2").unwrap();
        for s in ["0.5", "0.5s", "1/2", "1/2s", "500ms", "500000us"] {
            assert_eq!(parse_seconds(s).unwrap(), half, "{s}");
        }
        assert!(parse_seconds("half").is_err());
        assert_eq!(seconds_to_micros(&half, "t").unwrap(), 500_000);
        assert!(seconds_to_micros(&parse_seconds("1/3").unwrap(), "t").is_err());
    }

    #[test]
    fn time_lists() {
        assert_eq!(parse_time_list("0,0.5,1/4").unwrap(), vec![0.0, 0.5, 0.25]);
        assert!(parse_time_list("0,x").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(usage("x").exit_code(), 2);
        assert_eq!(CliError::from(Error::Format("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(Error::InvalidInput("x".into())).exit_code(), 4);
        assert_eq!(CliError::from(Error::Numeric("x".into())).exit_code(), 4);
    }
}
