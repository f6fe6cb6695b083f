use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::CliError;

/// Writes `content` to `dir/name`, creating `dir`, or to stdout without a directory.
pub fn emit(dir: Option<&Path>, name: &str, content: &str) -> Result<(), CliError> {
    match dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(CliError::io(dir))?;
            let path = dir.join(name);
            fs::write(&path, content).map_err(CliError::io(path))
        }
        None => std::io::stdout()
            .write_all(content.as_bytes())
            .map_err(CliError::io("<stdout>")),
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(quadnet::Error::from)?;
    s.push('\n');
    Ok(s)
}

/// Seconds since the epoch, or `None` when suppressed.
pub fn timestamp(suppressed: bool) -> Option<u64> {
    if suppressed {
        return None;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
}
