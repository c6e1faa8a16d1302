// Copyright 2026 The Scopeflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Declared type of a vertex or edge property.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropType {
    Int,
    String,
    Bool,
    /// Stored as an integer (`YYYYMMDD` when parsed from an ISO date).
    Date,
}

/// A typed property value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropValue {
    Int(i64),
    Bool(bool),
    Str(String),
}

impl PropValue {
    /// Parses a raw CSV cell according to its declared type.
    pub fn parse(ty: PropType, raw: &str) -> Result<PropValue, String> {
        let raw = raw.trim();
        match ty {
            PropType::Int => raw
                .parse::<i64>()
                .map(PropValue::Int)
                .map_err(|e| format!("invalid int {raw:?}: {e}")),
            PropType::Bool => match raw {
                "true" | "TRUE" | "1" => Ok(PropValue::Bool(true)),
                "false" | "FALSE" | "0" => Ok(PropValue::Bool(false)),
                _ => Err(format!("invalid bool {raw:?}")),
            },
            PropType::String => Ok(PropValue::Str(raw.to_string())),
            PropType::Date => parse_date(raw).map(PropValue::Int),
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            PropValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            PropValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for PropValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropValue::Int(v) => write!(f, "{v}"),
            PropValue::Bool(v) => write!(f, "{v}"),
            PropValue::Str(v) => write!(f, "{v}"),
        }
    }
}

fn parse_date(raw: &str) -> Result<i64, String> {
    if let Ok(v) = raw.parse::<i64>() {
        return Ok(v);
    }
    // ISO date, optionally followed by a time component.
    let date = raw.split(['T', ' ']).next().unwrap_or(raw);
    let parts: Vec<&str> = date.split('-').collect();
    if parts.len() == 3 {
        let y: i64 = parts[0].parse().map_err(|_| format!("invalid date {raw:?}"))?;
        let m: i64 = parts[1].parse().map_err(|_| format!("invalid date {raw:?}"))?;
        let d: i64 = parts[2].parse().map_err(|_| format!("invalid date {raw:?}"))?;
        if (1..=12).contains(&m) && (1..=31).contains(&d) {
            return Ok(y * 10_000 + m * 100 + d);
        }
    }
    Err(format!("invalid date {raw:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typed_cells() {
        assert_eq!(PropValue::parse(PropType::Int, " 42"), Ok(PropValue::Int(42)));
        assert_eq!(PropValue::parse(PropType::Bool, "true"), Ok(PropValue::Bool(true)));
        assert_eq!(
            PropValue::parse(PropType::Date, "2010-03-07T10:00:00.000+0000"),
            Ok(PropValue::Int(20100307))
        );
        assert!(PropValue::parse(PropType::Int, "x").is_err());
        assert!(PropValue::parse(PropType::Date, "2010-13-01").is_err());
    }
}
