//! Provenance-tagged constants and canonical JSON serialization.
//!
//! Every numeric constant leaving the library carries an exact/estimate
//! provenance flag and is rendered as a 12-significant-digit decimal
//! string, so reports are byte-stable across reruns with the same config
//! and seed.

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::numeric::format_sig12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Exact,
    Estimate,
}

/// A constant with provenance, serialized as
/// {"provenance": "exact", "value": "1.23456789012e0"}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tagged {
    pub value: f64,
    pub provenance: Provenance,
}

impl Tagged {
    pub fn exact(value: f64) -> Self {
        Tagged {
            value,
            provenance: Provenance::Exact,
        }
    }

    pub fn estimate(value: f64) -> Self {
        Tagged {
            value,
            provenance: Provenance::Estimate,
        }
    }

    pub fn with(value: f64, provenance: Provenance) -> Self {
        Tagged { value, provenance }
    }
}

impl Serialize for Tagged {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry(
            "provenance",
            match self.provenance {
                Provenance::Exact => "exact",
                Provenance::Estimate => "estimate",
            },
        )?;
        map.serialize_entry("value", &format_sig12(self.value))?;
        map.end()
    }
}

/// Canonical rendering: serde_json object keys are sorted (BTreeMap), so
/// pretty-printing the value is already byte-stable.
pub fn canonical_json(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

/// Reject untagged constants: inside the given subtree, every non-integer
/// number must live inside a {"provenance", "value"} object (where values
/// are strings), and every object carrying a "value" key must carry a
/// valid provenance.  Integers (counts, indices, resolutions) may stay
/// bare.
pub fn validate_tagged(value: &Value) -> std::result::Result<(), String> {
    match value {
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                Ok(())
            } else {
                Err(format!("untagged float constant {}", n))
            }
        }
        Value::Array(items) => items.iter().try_for_each(validate_tagged),
        Value::Object(map) => {
            if map.contains_key("value") {
                match map.get("provenance").and_then(Value::as_str) {
                    Some("exact") | Some("estimate") => {}
                    other => {
                        return Err(format!(
                            "value object with invalid provenance {:?}",
                            other
                        ))
                    }
                }
                if !map["value"].is_string() {
                    return Err("tagged value must be a decimal string".into());
                }
                return Ok(());
            }
            map.values().try_for_each(validate_tagged)
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn tagged_serialization_shape() {
        let t = Tagged::exact(7.0 / 3.0);
        let v = serde_json::to_value(t).unwrap();
        assert_eq!(
            v,
            json!({"provenance": "exact", "value": "2.33333333333e0"})
        );
    }

    #[test]
    fn validator_rejects_bare_floats() {
        let good = json!({"a": {"provenance": "estimate", "value": "1.00000000000e0"}, "n": 3});
        assert!(validate_tagged(&good).is_ok());
        let bad = json!({"a": 1.5});
        assert!(validate_tagged(&bad).is_err());
        let missing = json!({"a": {"value": "1.00000000000e0"}});
        assert!(validate_tagged(&missing).is_err());
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v = json!({"zeta": 1, "alpha": 2});
        let s = canonical_json(&v);
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
    }
}
