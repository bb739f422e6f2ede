//! Flat `key = value` text files. `#` starts a comment line; blank lines are
//! ignored; later keys override earlier ones.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: i as u64 + 1,
                message: format!("expected `key = value`, found `{line}`"),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                line: i as u64 + 1,
                message: "empty key".into(),
            });
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}
