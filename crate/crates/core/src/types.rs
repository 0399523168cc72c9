//! Domain vocabulary shared by every module: task levels, layer ids,
//! modalities, label sets and the attribute used to split them into classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Task level of the prompt gradient. `L1` is the identity-mapping baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3,
    L4,
    L5,
}

impl Level {
    pub const ALL: [Level; 5] = [Level::L1, Level::L2, Level::L3, Level::L4, Level::L5];

    /// Levels whose activations are compared against the `L1` baseline.
    pub const TASKS: [Level; 4] = [Level::L2, Level::L3, Level::L4, Level::L5];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::L1 => "L1",
            Level::L2 => "L2",
            Level::L3 => "L3",
            Level::L4 => "L4",
            Level::L5 => "L5",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Level::L1 => "Identity (Baseline)",
            Level::L2 => "Magnitude (Simple)",
            Level::L3 => "Parity (Medium)",
            Level::L4 => "Primality (Complex)",
            Level::L5 => "Sycophancy (Induced)",
        }
    }

    /// The label the task asks about. `L5` asks about parity under social pressure.
    pub fn default_attribute(self) -> Option<Attribute> {
        match self {
            Level::L1 => None,
            Level::L2 => Some(Attribute::IsLarge),
            Level::L3 | Level::L5 => Some(Attribute::IsEven),
            Level::L4 => Some(Attribute::IsPrime),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L1" => Ok(Level::L1),
            "L2" => Ok(Level::L2),
            "L3" => Ok(Level::L3),
            "L4" => Ok(Level::L4),
            "L5" => Ok(Level::L5),
            other => Err(Error::InvalidArgument(format!("unknown task level {other:?}"))),
        }
    }
}

/// A residual-stream capture point: a block index, or the pre-output-norm
/// position after the last block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LayerId {
    Index(u32),
    Final,
}

impl LayerId {
    pub fn index(self) -> Option<u32> {
        match self {
            LayerId::Index(i) => Some(i),
            LayerId::Final => None,
        }
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerId::Index(i) => write!(f, "{i}"),
            LayerId::Final => f.write_str("FINAL"),
        }
    }
}

impl FromStr for LayerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("final") {
            return Ok(LayerId::Final);
        }
        s.parse::<u32>()
            .map(LayerId::Index)
            .map_err(|_| Error::InvalidArgument(format!("invalid layer id {s:?}")))
    }
}

// JSON form: decimal integer for block indices, the string "FINAL" for the sentinel.
impl Serialize for LayerId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LayerId::Index(i) => serializer.serialize_u32(*i),
            LayerId::Final => serializer.serialize_str("FINAL"),
        }
    }
}

impl<'de> Deserialize<'de> for LayerId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Index(u32),
            Name(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Index(i) => Ok(LayerId::Index(i)),
            Raw::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Arabic,
    EnglishWord,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Arabic => "arabic",
            Modality::EnglishWord => "english_word",
        }
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "arabic" => Ok(Modality::Arabic),
            "english_word" | "english" => Ok(Modality::EnglishWord),
            other => Err(Error::InvalidArgument(format!("unknown modality {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Labels {
    pub is_large: bool,
    pub is_even: bool,
    pub is_prime: bool,
}

impl Labels {
    pub fn for_value(value: u32) -> Self {
        Labels {
            is_large: value > 100,
            is_even: value % 2 == 0,
            is_prime: is_prime(value),
        }
    }

    pub fn get(&self, attribute: Attribute) -> bool {
        match attribute {
            Attribute::IsLarge => self.is_large,
            Attribute::IsEven => self.is_even,
            Attribute::IsPrime => self.is_prime,
        }
    }
}

/// Trial division. 0 and 1 are not prime.
pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d.saturating_mul(d) <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Binary label that splits samples into same-class and cross-class pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    IsLarge,
    IsEven,
    IsPrime,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::IsLarge, Attribute::IsEven, Attribute::IsPrime];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::IsLarge => "is_large",
            Attribute::IsEven => "is_even",
            Attribute::IsPrime => "is_prime",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "is_large" | "magnitude" => Ok(Attribute::IsLarge),
            "is_even" | "parity" => Ok(Attribute::IsEven),
            "is_prime" | "primality" => Ok(Attribute::IsPrime),
            other => Err(Error::InvalidArgument(format!("unknown attribute {other:?}"))),
        }
    }
}
