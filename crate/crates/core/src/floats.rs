//! Serde adapters that carry non-finite floats through JSON as the strings
//! `"NaN"`, `"Infinity"` and `"-Infinity"`.

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy)]
struct Lossless(f64);

impl Serialize for Lossless {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_nan() {
            s.serialize_str("NaN")
        } else if v == f64::INFINITY {
            s.serialize_str("Infinity")
        } else if v == f64::NEG_INFINITY {
            s.serialize_str("-Infinity")
        } else {
            s.serialize_f64(v)
        }
    }
}

impl<'de> Deserialize<'de> for Lossless {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Lossless(v)),
            Repr::Str(s) => match s.as_str() {
                "NaN" => Ok(Lossless(f64::NAN)),
                "Infinity" => Ok(Lossless(f64::INFINITY)),
                "-Infinity" => Ok(Lossless(f64::NEG_INFINITY)),
                other => Err(de::Error::custom(format!("invalid float string {other:?}"))),
            },
        }
    }
}

/// One float as a JSON value, non-finite values as strings.
pub fn to_json(v: f64) -> serde_json::Value {
    serde_json::to_value(Lossless(v)).expect("floats always serialize")
}

pub fn from_json(v: &serde_json::Value) -> Result<f64, String> {
    Lossless::deserialize(v).map(|l| l.0).map_err(|e| e.to_string())
}

pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        Lossless(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Lossless::deserialize(d).map(|l| l.0)
    }
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(Lossless).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Lossless>::deserialize(d)?.map(|l| l.0))
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| Lossless(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Lossless>::deserialize(d)?.into_iter().map(|l| l.0).collect())
    }
}

/// Bitwise float equality (NaN equals NaN of the same payload); used where
/// structural equality must survive non-finite values.
pub fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()))
}
