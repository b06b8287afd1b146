//! Fixed 17-significant-digit number output for CSV and JSON.
//!
//! Every emitted float uses `{:.16e}` so values round-trip exactly and the
//! text does not depend on the shortest-representation algorithm. Non-finite
//! values become `null` in JSON and `inf`/`NaN` in CSV.

use serde::de::Deserializer;
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

/// Formats `x` with 17 significant digits.
pub fn f17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn raw(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() { f17(x) } else { "null".to_string() };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

/// `serialize_with` adapter for a single `f64`.
pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        raw(*x).serialize(s)
    }

    /// `null` reads back as `+inf`: the only non-finite values we write are
    /// blown-up error norms.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// `serialize_with` adapter for `Vec<f64>`.
pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for &x in xs {
            seq.serialize_element(&raw(x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let xs = Vec::<Option<f64>>::deserialize(d)?;
        Ok(xs.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

/// `serialize_with` adapter for complex values stored as `[re, im]` pairs.
pub mod pairs {
    use super::*;

    pub fn serialize<S: Serializer>(xs: &[[f64; 2]], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for p in xs {
            seq.serialize_element(&[raw(p[0]), raw(p[1])])?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<[f64; 2]>, D::Error> {
        let xs = Vec::<[Option<f64>; 2]>::deserialize(d)?;
        Ok(xs
            .into_iter()
            .map(|[a, b]| [a.unwrap_or(f64::NAN), b.unwrap_or(f64::NAN)])
            .collect())
    }
}
