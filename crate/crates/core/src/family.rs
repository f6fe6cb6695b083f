use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which four-mode state the network is tuned to produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Cluster,
    Ghz,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Cluster, Family::Ghz];

    /// Superscript used in criterion names, `I^C` or `I^G`.
    pub fn tag(self) -> char {
        match self {
            Family::Cluster => 'C',
            Family::Ghz => 'G',
        }
    }

    pub fn other(self) -> Family {
        match self {
            Family::Cluster => Family::Ghz,
            Family::Ghz => Family::Cluster,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Cluster => "cluster",
            Family::Ghz => "ghz",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown family `{0}` (expected `cluster` or `ghz`)")]
pub struct UnknownFamily(pub String);

impl FromStr for Family {
    type Err = UnknownFamily;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cluster" | "c" => Ok(Family::Cluster),
            "ghz" | "g" => Ok(Family::Ghz),
            _ => Err(UnknownFamily(s.to_string())),
        }
    }
}
