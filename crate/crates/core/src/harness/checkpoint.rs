use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::HarnessError;
use crate::model::Network;
use crate::tensor::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: RunConfig,
    /// Environment steps trained so far.
    pub step: u64,
    pub episodes: u64,
    pub params: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new(config: &RunConfig, network: &Network, step: u64, episodes: u64) -> Self {
        let params = network
            .params()
            .iter()
            .map(|(_, p)| NamedArray {
                name: p.name.clone(),
                shape: [p.value.rows(), p.value.cols()],
                data: p.value.as_slice().to_vec(),
            })
            .collect();
        Self { format_version: CHECKPOINT_VERSION, config: config.clone(), step, episodes, params }
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let doc: serde_json::Value =
            serde_json::from_str(text).map_err(|e| HarnessError::Corrupt(e.to_string()))?;
        let found = doc.get("format_version").and_then(serde_json::Value::as_u64);
        match found {
            Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
            other => return Err(HarnessError::Version { found: other, supported: CHECKPOINT_VERSION }),
        }
        serde_json::from_value(doc).map_err(|e| HarnessError::Corrupt(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_json()?).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Builds the network described by `config` and fills it with the
    /// stored parameters.
    pub fn restore(&self, config: &RunConfig) -> Result<Network, HarnessError> {
        let mut network = Network::new(config.model_spec(), config.seed)?;
        let store = network.params_mut();
        let mut seen = vec![false; store.len()];
        for p in &self.params {
            let id = store.find(&p.name).ok_or_else(|| HarnessError::UnknownParam(p.name.clone()))?;
            let expected = store.value(id).shape();
            if (p.shape[0], p.shape[1]) != expected || p.data.len() != p.shape[0] * p.shape[1] {
                return Err(HarnessError::ShapeMismatch { name: p.name.clone(), expected, found: p.shape });
            }
            *store.value_mut(id) = Matrix::from_vec(p.shape[0], p.shape[1], p.data.clone());
            seen[id.0] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(HarnessError::MissingParam(store.name(crate::tensor::ParamId(i)).to_string()));
        }
        Ok(network)
    }

    pub fn network(&self) -> Result<Network, HarnessError> {
        self.restore(&self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::GateWidths;

    fn config() -> RunConfig {
        let mut c = RunConfig::default();
        c.model.embed_dim = 8;
        c.model.key_dim = 4;
        c.model.head_hidden = 6;
        c.model.gate = GateWidths { phi1: 3, phi2: 3, psi: 5 };
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = config();
        let mut net = Network::new(c.model_spec(), 4).unwrap();
        // Values whose shortest decimal form is long.
        let id = net.params().find("policy.1.bias").unwrap();
        *net.params_mut().value_mut(id) = Matrix::row_vector(&[0.1 + 0.2, 1.0 / 3.0, -2.0f64.sqrt(), 1e-300, 5e-324]);
        let ck = Checkpoint::new(&c, &net, 1234, 56);
        let first = ck.to_json().unwrap();
        let loaded = Checkpoint::from_json(&first).unwrap();
        assert_eq!(loaded, ck);
        assert_eq!(loaded.to_json().unwrap(), first);
        let restored = loaded.network().unwrap();
        for ((_, a), (_, b)) in restored.params().iter().zip(net.params().iter()) {
            let bits = |m: &Matrix| m.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value), "{}", a.name);
        }
    }

    #[test]
    fn width_change_names_the_parameter() {
        let c = config();
        let ck = Checkpoint::new(&c, &Network::new(c.model_spec(), 0).unwrap(), 0, 0);
        let mut wider = c.clone();
        wider.model.head_hidden = 7;
        match ck.restore(&wider) {
            Err(HarnessError::ShapeMismatch { name, .. }) => assert!(name.starts_with("policy.") || name.starts_with("value.")),
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn unknown_version_is_refused() {
        let c = config();
        let mut ck = Checkpoint::new(&c, &Network::new(c.model_spec(), 0).unwrap(), 0, 0);
        ck.format_version = 9;
        let err = Checkpoint::from_json(&serde_json::to_string(&ck).unwrap()).unwrap_err();
        assert!(matches!(err, HarnessError::Version { found: Some(9), supported: 1 }));
        assert!(err.to_string().contains('9') && err.to_string().contains('1'));
    }

    #[test]
    fn corrupt_file_is_reported() {
        assert!(matches!(Checkpoint::from_json("{\"format_version\": 1, \"config\""), Err(HarnessError::Corrupt(_))));
        assert!(matches!(Checkpoint::from_json("{\"format_version\": 1}"), Err(HarnessError::Corrupt(_))));
    }
}
