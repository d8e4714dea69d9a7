//! Serialization of extended nonnegative reals: finite values as JSON numbers,
//! `+∞` as the string `"+inf"`.

use serde::de::{self, Visitor};
use serde::{Deserializer, Serializer};

pub const INFINITY_TAG: &str = "+inf";

pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if *v == f64::INFINITY {
        s.serialize_str(INFINITY_TAG)
    } else {
        s.serialize_f64(*v)
    }
}

struct ExtVisitor;

impl Visitor<'_> for ExtVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str("a number or \"+inf\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
        if v == INFINITY_TAG {
            Ok(f64::INFINITY)
        } else {
            Err(E::invalid_value(de::Unexpected::Str(v), &self))
        }
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    d.deserialize_any(ExtVisitor)
}

/// Text form used in CSV output.
pub fn format(v: f64) -> String {
    if v == f64::INFINITY {
        INFINITY_TAG.to_string()
    } else {
        let mut buf = ryu_like(v);
        if buf == "-0" {
            buf = "0".into();
        }
        buf
    }
}

fn ryu_like(v: f64) -> String {
    // serde_json writes shortest round-trip decimals
    serde_json::to_string(&v).unwrap_or_else(|_| "null".into())
}
