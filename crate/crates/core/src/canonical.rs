//! Canonical JSON: object keys sorted, floats in shortest round-trip form.
//! Every file the store writes and every hashed document goes through here.

use serde::Serialize;

use crate::{Error, Result};

pub fn to_value<T: Serialize>(value: &T) -> serde_json::Value {
    // serde_json's default map is a BTreeMap, so converting through `Value`
    // sorts every object's keys.
    serde_json::to_value(value).expect("in-memory types always serialize")
}

pub fn to_string<T: Serialize>(value: &T) -> String {
    serde_json::to_string(&to_value(value)).expect("Value always serializes")
}

pub fn to_string_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(&to_value(value)).expect("Value always serializes");
    s.push('\n');
    s
}

pub fn from_str<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(Error::from_json)
}
