use super::graph::AgentGraph;
use super::ModelError;
use crate::env::Observation;
use crate::tensor::Matrix;

/// Observations of several scenes with the same agent and entity counts,
/// flattened for batched evaluation. Agent `i` of scene `s` is row
/// `s * n_agents + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBatch {
    pub n_agents: usize,
    pub n_entities: usize,
    pub n_scenes: usize,
    /// `(scenes * n_agents) x agent_dim`.
    pub agent_states: Matrix,
    /// `(scenes * n_agents * n_entities) x entity_dim`.
    pub entity_states: Matrix,
    /// One `(scenes * n_agents) x n_agents` mask per relation of the graph.
    pub masks: Vec<Matrix>,
    pub relational: bool,
}

impl SceneBatch {
    pub fn single(graph: &AgentGraph, observations: &[Observation]) -> Result<Self, ModelError> {
        Self::from_scenes(&[(graph, observations)])
    }

    pub fn from_scenes(scenes: &[(&AgentGraph, &[Observation])]) -> Result<Self, ModelError> {
        let (first_graph, first_obs) = scenes.first().ok_or(ModelError::EmptyBatch)?;
        let n = first_graph.n();
        let n_entities = first_obs.first().map_or(0, |o| o.entities.len());
        let relational = first_graph.is_relational();
        let relations = first_graph.relations();
        let rows = scenes.len() * n;
        let mut agent_states = Vec::with_capacity(rows * Observation::AGENT_DIM);
        let mut entity_states = Vec::with_capacity(rows * n_entities * Observation::ENTITY_DIM);
        let mut masks: Vec<Vec<f64>> = vec![Vec::with_capacity(rows * n); relations.len()];
        for (graph, obs) in scenes {
            if graph.n() != n || obs.len() != n {
                return Err(ModelError::AgentCount { expected: n, found: obs.len().max(graph.n()) });
            }
            if graph.is_relational() != relational {
                return Err(ModelError::RelationMismatch);
            }
            for o in obs.iter() {
                if o.entities.len() != n_entities {
                    return Err(ModelError::EntityCount { expected: n_entities, found: o.entities.len() });
                }
                agent_states.extend_from_slice(&o.agent);
                for e in &o.entities {
                    entity_states.extend_from_slice(e);
                }
            }
            for (r, &rel) in relations.iter().enumerate() {
                masks[r].extend_from_slice(graph.mask(rel).as_slice());
            }
        }
        Ok(Self {
            n_agents: n,
            n_entities,
            n_scenes: scenes.len(),
            agent_states: Matrix::from_vec(rows, Observation::AGENT_DIM, agent_states),
            entity_states: Matrix::from_vec(rows * n_entities, Observation::ENTITY_DIM, entity_states),
            masks: masks.into_iter().map(|m| Matrix::from_vec(rows, n, m)).collect(),
            relational,
        })
    }

    pub fn rows(&self) -> usize {
        self.n_scenes * self.n_agents
    }
}
