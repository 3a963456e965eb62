use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Image class. The integer encoding is the one used by prediction logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Fake = 0,
    Real = 1,
    Synthetic = 2,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Fake, ClassLabel::Real, ClassLabel::Synthetic];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Directory / report name.
    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Fake => "fake",
            ClassLabel::Real => "real",
            ClassLabel::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown class {0:?} (expected fake, real or synthetic)")]
pub struct UnknownClass(pub String);

impl FromStr for ClassLabel {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fake" | "0" => Ok(ClassLabel::Fake),
            "real" | "1" => Ok(ClassLabel::Real),
            "synthetic" | "2" => Ok(ClassLabel::Synthetic),
            _ => Err(UnknownClass(s.to_string())),
        }
    }
}
