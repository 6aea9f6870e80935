//! Sentiment classes and intensity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Sentence-level polarity class.
///
/// The declaration order is the canonical class order used for tie-breaking,
/// few-shot example ordering and table columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SentimentLabel {
    Pos,
    Neg,
    Neut,
    Mix,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 4] = [Self::Pos, Self::Neg, Self::Neut, Self::Mix];
    pub const BINARY: [SentimentLabel; 2] = [Self::Pos, Self::Neg];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pos => "pos",
            Self::Neg => "neg",
            Self::Neut => "neut",
            Self::Mix => "mix",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_polar(self) -> bool {
        matches!(self, Self::Pos | Self::Neg)
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_uppercase())
    }
}

impl FromStr for SentimentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "pos" => Ok(Self::Pos),
            "neg" => Ok(Self::Neg),
            "neut" => Ok(Self::Neut),
            "mix" => Ok(Self::Mix),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

impl Serialize for SentimentLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SentimentLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which label set an evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    FourClass,
    Binary,
}

impl Mode {
    pub fn labels(self) -> &'static [SentimentLabel] {
        match self {
            Mode::FourClass => &SentimentLabel::ALL,
            Mode::Binary => &SentimentLabel::BINARY,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FourClass => "four_class",
            Mode::Binary => "binary",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "four_class" | "four-class" | "4" => Ok(Mode::FourClass),
            "binary" | "2" => Ok(Mode::Binary),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Annotated polarity strength. Stored, never used for classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    Slight,
    Standard,
    Strong,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip_through_wire_names() {
        for label in SentimentLabel::ALL {
            assert_eq!(label.as_str().parse::<SentimentLabel>().unwrap(), label);
            let json = serde_json::to_string(&label).unwrap();
            assert_eq!(serde_json::from_str::<SentimentLabel>(&json).unwrap(), label);
        }
    }

    #[test]
    fn unknown_label_is_named() {
        let err = "positive-ish".parse::<SentimentLabel>().unwrap_err();
        assert!(err.to_string().contains("positive-ish"));
    }
}
