//! Portable text form of a trained network.
//!
//! ```text
//! # ica-mlp model
//! topology = 6,16,24,1
//! hidden_activation = tansig
//! output_activation = purelin
//! normalization = <sha-256 of the normalization file contents>
//! params = 545
//! -3.1415926535897931e-1
//! ...
//! ```
//!
//! Values carry 17 significant digits, which round-trips every `f64`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mlp::{MlpTopology, ParamVector};

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub topology: MlpTopology,
    pub params: ParamVector,
    /// Fingerprint of the normalization the network was trained under.
    pub normalization: String,
}

impl SavedModel {
    pub fn new(topology: MlpTopology, params: ParamVector, normalization: String) -> Result<Self> {
        if params.len() != topology.param_count() {
            return Err(Error::Codec {
                expected: topology.param_count(),
                actual: params.len(),
            });
        }
        Ok(Self {
            topology,
            params,
            normalization,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# ica-mlp model\n");
        let _ = writeln!(s, "topology = {}", self.topology.sizes_string());
        let _ = writeln!(
            s,
            "hidden_activation = {}",
            self.topology.hidden_activation()
        );
        let _ = writeln!(
            s,
            "output_activation = {}",
            self.topology.output_activation()
        );
        let _ = writeln!(s, "normalization = {}", self.normalization);
        let _ = writeln!(s, "params = {}", self.params.len());
        for v in self.params.as_slice() {
            let _ = writeln!(s, "{v:.16e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut header = std::collections::BTreeMap::new();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            let err = |m: String| Error::Parse {
                line: i as u64 + 1,
                message: m,
            };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                if !values.is_empty() {
                    return Err(err("header key after parameter values".into()));
                }
                header.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                values.push(
                    line.parse::<f64>()
                        .map_err(|_| err(format!("bad parameter value `{line}`")))?,
                );
            }
        }
        let field = |k: &str| {
            header.get(k).cloned().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("model file lacks `{k}`"),
            })
        };
        let sizes = MlpTopology::parse_sizes(&field("topology")?)?;
        let topology = MlpTopology::with_activations(
            sizes.input_dim(),
            sizes.hidden_sizes().to_vec(),
            sizes.output_dim(),
            field("hidden_activation")?.parse()?,
            field("output_activation")?.parse()?,
        )?;
        let declared: usize = field("params")?.parse().map_err(|_| Error::Parse {
            line: 0,
            message: "`params` is not a count".into(),
        })?;
        if declared != values.len() {
            return Err(Error::Codec {
                expected: declared,
                actual: values.len(),
            });
        }
        Self::new(topology, ParamVector::new(values)?, field("normalization")?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn text_round_trip_is_exact(values in prop::collection::vec(-1e6f64..1e6, 9)) {
            let t = MlpTopology::new(2, vec![2], 1).unwrap();
            let m = SavedModel::new(t, ParamVector::new(values).unwrap(), "abc".into()).unwrap();
            prop_assert_eq!(SavedModel::from_text(&m.to_text()).unwrap(), m);
        }
    }

    #[test]
    fn rejects_wrong_count() {
        let t = MlpTopology::new(1, vec![], 1).unwrap();
        let m = SavedModel::new(t, ParamVector::new(vec![1.0, 2.0]).unwrap(), "x".into()).unwrap();
        let text = m.to_text().replace("params = 2", "params = 3");
        assert!(SavedModel::from_text(&text).is_err());
        let short = m.to_text().replace("topology = 1,1", "topology = 2,1");
        assert!(SavedModel::from_text(&short).is_err());
    }
}
