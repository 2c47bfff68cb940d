use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activations::GateWidths;

/// How attention logits are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationMode {
    /// Dense attention; the baseline.
    Softmax,
    Sparsemax,
    /// Learned gate and scale in front of the simplex projection.
    Adaptive,
}

impl fmt::Display for ActivationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivationMode::Softmax => "softmax",
            ActivationMode::Sparsemax => "sparsemax",
            ActivationMode::Adaptive => "adaptive",
        })
    }
}

impl FromStr for ActivationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "softmax" => Ok(ActivationMode::Softmax),
            "sparsemax" => Ok(ActivationMode::Sparsemax),
            "adaptive" => Ok(ActivationMode::Adaptive),
            other => Err(format!("unknown activation `{other}` (expected softmax, sparsemax or adaptive)")),
        }
    }
}

/// Network architecture. All agents share one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub activation: ActivationMode,
    pub agent_dim: usize,
    pub entity_dim: usize,
    /// Width of every agent embedding.
    pub embed_dim: usize,
    /// Width of queries, keys and values.
    pub key_dim: usize,
    /// Message-passing rounds.
    pub hops: usize,
    /// Attention heads per relation.
    pub heads: usize,
    /// Separate teammate/enemy heads instead of a single relation.
    pub relational: bool,
    pub gate: GateWidths,
    /// Hidden width of the policy and value heads.
    pub head_hidden: usize,
    pub num_actions: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            activation: ActivationMode::Adaptive,
            agent_dim: 4,
            entity_dim: 2,
            embed_dim: 128,
            key_dim: 128,
            hops: 2,
            heads: 1,
            relational: false,
            gate: GateWidths::default(),
            head_hidden: 64,
            num_actions: 5,
        }
    }
}

impl ModelSpec {
    pub fn relation_count(&self) -> usize {
        if self.relational {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("agent_dim", self.agent_dim),
            ("entity_dim", self.entity_dim),
            ("embed_dim", self.embed_dim),
            ("key_dim", self.key_dim),
            ("head_hidden", self.head_hidden),
            ("num_actions", self.num_actions),
            ("gate.phi1", self.gate.phi1),
            ("gate.phi2", self.gate.phi2),
            ("gate.psi", self.gate.psi),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(1..=4).contains(&self.heads) {
            return Err(format!("heads must be between 1 and 4, got {}", self.heads));
        }
        Ok(())
    }
}
