use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::batch::SceneBatch;
use super::graph::{AgentGraph, AttentionMatrix, Relation};
use super::spec::{ActivationMode, ModelSpec};
use super::ModelError;
use crate::activations::{adaptive_sparse_rows, MaskedNormalize, MonotoneGate, Normalizer, SparsityScale};
use crate::tensor::{Axis, Graph, Linear, Matrix, ParamId, ParamStore, TensorId};

/// Scaled dot-product attention head with its normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    pub relation: Relation,
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub mode: ActivationMode,
    /// Present in adaptive mode only.
    pub gate: Option<MonotoneGate>,
    /// Present in adaptive mode only; one scale per head.
    pub scale: Option<SparsityScale>,
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct HopLayer {
    /// `heads[relation][k]`.
    pub(super) heads: Vec<Vec<AttentionHead>>,
    pub(super) update: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Layout {
    pub(super) agent_encoder: Linear,
    pub(super) entity_encoder: [Linear; 2],
    pub(super) embed: Linear,
    pub(super) hops: Vec<HopLayer>,
    pub(super) policy: [Linear; 2],
    pub(super) value: [Linear; 2],
}

/// Attention weights of one head as a graph node (`rows x n_agents`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionTrace {
    pub hop: usize,
    pub relation: Relation,
    pub head: usize,
    pub weights: TensorId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `rows x num_actions`.
    pub logits: TensorId,
    /// `rows x 1`.
    pub values: TensorId,
    pub attention: Vec<AttentionTrace>,
}

/// Detached result of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub n_agents: usize,
    pub logits: Matrix,
    pub values: Vec<f64>,
    /// Weights for the whole batch; see [`Inference::scene_attention`].
    pub attention: Vec<AttentionMatrix>,
}

impl Inference {
    /// The `n x n` attention matrices of scene `s`.
    pub fn scene_attention(&self, s: usize) -> Vec<AttentionMatrix> {
        self.attention
            .iter()
            .map(|a| AttentionMatrix {
                hop: a.hop,
                relation: a.relation,
                head: a.head,
                weights: a.weights.slice_rows(s * self.n_agents, self.n_agents),
            })
            .collect()
    }
}

/// Coarse parameter families, used to check gradient flow per family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Encoders,
    MessagePassing,
    Attention,
    Gate,
    Scale,
    Policy,
    Value,
}

impl ParamGroup {
    pub fn of(name: &str) -> Self {
        if name.starts_with("policy.") {
            ParamGroup::Policy
        } else if name.starts_with("value.") {
            ParamGroup::Value
        } else if name.contains(".gate.") {
            ParamGroup::Gate
        } else if name.ends_with(".gamma") {
            ParamGroup::Scale
        } else if name.ends_with(".query") || name.ends_with(".key") || name.ends_with(".value") {
            ParamGroup::Attention
        } else if name.starts_with("embed.") || name.contains(".update.") {
            ParamGroup::MessagePassing
        } else {
            ParamGroup::Encoders
        }
    }
}

/// Shared policy/value network: encoders, `hops` rounds of attention
/// message passing, and per-agent policy and value heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    params: ParamStore,
    pub(super) layout: Layout,
}

fn projection(store: &mut ParamStore, name: String, inputs: usize, outputs: usize, rng: &mut impl Rng) -> ParamId {
    let bound = (3.0 / inputs as f64).sqrt();
    let data = (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect();
    store.add(name, Matrix::from_vec(inputs, outputs, data))
}

impl Network {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate().map_err(ModelError::Spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let e = spec.embed_dim;
        let agent_encoder = Linear::new(&mut store, "agent_encoder", spec.agent_dim, e, 1.0, &mut rng);
        let entity_encoder = [
            Linear::new(&mut store, "entity_encoder.0", spec.entity_dim, e, 1.0, &mut rng),
            Linear::new(&mut store, "entity_encoder.1", e, e, 1.0, &mut rng),
        ];
        let embed = Linear::new(&mut store, "embed", 2 * e, e, 1.0, &mut rng);
        let relations: &[Relation] =
            if spec.relational { &[Relation::Teammate, Relation::Enemy] } else { &[Relation::All] };
        let mut hops = Vec::with_capacity(spec.hops);
        for l in 0..spec.hops {
            let mut heads = Vec::new();
            for &relation in relations {
                let mut per_relation = Vec::new();
                for k in 0..spec.heads {
                    let prefix = format!("hop{l}.{relation}.head{k}");
                    let query = projection(&mut store, format!("{prefix}.query"), e, spec.key_dim, &mut rng);
                    let key = projection(&mut store, format!("{prefix}.key"), e, spec.key_dim, &mut rng);
                    let value = projection(&mut store, format!("{prefix}.value"), e, spec.key_dim, &mut rng);
                    let (gate, scale) = if spec.activation == ActivationMode::Adaptive {
                        let gate = MonotoneGate::new(&mut store, &format!("{prefix}.gate"), spec.gate, &mut rng);
                        let scale = SparsityScale::new(&mut store, &format!("{prefix}.gamma"));
                        (Some(gate), Some(scale))
                    } else {
                        (None, None)
                    };
                    per_relation.push(AttentionHead {
                        relation,
                        query,
                        key,
                        value,
                        mode: spec.activation,
                        gate,
                        scale,
                    });
                }
                heads.push(per_relation);
            }
            let width = e + relations.len() * spec.heads * spec.key_dim;
            let update = Linear::new(&mut store, &format!("hop{l}.update"), width, e, 1.0, &mut rng);
            hops.push(HopLayer { heads, update });
        }
        let policy = [
            Linear::new(&mut store, "policy.0", e, spec.head_hidden, 1.0, &mut rng),
            Linear::new(&mut store, "policy.1", spec.head_hidden, spec.num_actions, 0.01, &mut rng),
        ];
        let value = [
            Linear::new(&mut store, "value.0", e, spec.head_hidden, 1.0, &mut rng),
            Linear::new(&mut store, "value.1", spec.head_hidden, 1, 1.0, &mut rng),
        ];
        let layout = Layout { agent_encoder, entity_encoder, embed, hops, policy, value };
        Ok(Self { spec, params: store, layout })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Attention heads of hop `l`, indexed `[relation][head]`.
    pub fn heads(&self, hop: usize) -> &[Vec<AttentionHead>] {
        &self.layout.hops[hop].heads
    }

    /// Agent encoder `f_a` over `rows x agent_dim` states.
    pub fn encode_agents(&self, g: &mut Graph, states: TensorId) -> Result<TensorId, ModelError> {
        let (_, cols) = g.shape(states);
        if cols != self.spec.agent_dim {
            return Err(ModelError::ObservationDim { expected: self.spec.agent_dim, found: cols });
        }
        Ok(self.layout.agent_encoder.forward_relu(g, &self.params, states)?)
    }

    /// Two-layer entity encoder followed by a mean over each agent's entities.
    /// `entities` holds `rows * per_agent` entity states; with no entities
    /// the result is a zero embedding.
    pub fn encode_entities(
        &self,
        g: &mut Graph,
        entities: &Matrix,
        rows: usize,
        per_agent: usize,
    ) -> Result<TensorId, ModelError> {
        if per_agent == 0 {
            return Ok(g.constant(Matrix::zeros(rows, self.spec.embed_dim)));
        }
        if entities.cols() != self.spec.entity_dim {
            return Err(ModelError::ObservationDim { expected: self.spec.entity_dim, found: entities.cols() });
        }
        if entities.rows() != rows * per_agent {
            return Err(ModelError::EntityCount { expected: rows * per_agent, found: entities.rows() });
        }
        let x = g.constant(entities.clone());
        let hidden = self.layout.entity_encoder[0].forward_relu(g, &self.params, x)?;
        let enc = self.layout.entity_encoder[1].forward_relu(g, &self.params, hidden)?;
        Ok(g.segment_mean(enc, per_agent)?)
    }

    /// `h1 = f_mp(U || E)`.
    pub fn initial_embedding(&self, g: &mut Graph, agents: TensorId, entities: TensorId) -> Result<TensorId, ModelError> {
        let joint = g.concat(&[agents, entities], Axis::Cols)?;
        if g.shape(joint).1 != self.layout.embed.inputs {
            return Err(ModelError::ObservationDim { expected: self.layout.embed.inputs, found: g.shape(joint).1 });
        }
        Ok(self.layout.embed.forward_relu(g, &self.params, joint)?)
    }

    /// Scaled dot-product attention of every row over its masked
    /// neighborhood within its scene. Returns the blended values and the
    /// attention weights. Rows with an empty mask get zero weights and a
    /// zero output.
    pub fn attend(
        &self,
        g: &mut Graph,
        head: &AttentionHead,
        h: TensorId,
        mask: &Matrix,
        n_agents: usize,
    ) -> Result<(TensorId, TensorId), ModelError> {
        let p = &self.params;
        let wq = g.param(p, head.query);
        let wk = g.param(p, head.key);
        let wv = g.param(p, head.value);
        let q = g.matmul(h, wq)?;
        let k = g.matmul(h, wk)?;
        let v = g.matmul(h, wv)?;
        let scores = g.grouped_scores(q, k, n_agents)?;
        let logits = g.scale(scores, 1.0 / (self.spec.key_dim as f64).sqrt());
        let weights = match head.mode {
            ActivationMode::Softmax => {
                g.custom(Box::new(MaskedNormalize::new(Normalizer::Softmax, mask.clone())), &[logits])?
            }
            ActivationMode::Sparsemax => {
                g.custom(Box::new(MaskedNormalize::new(Normalizer::Sparsemax, mask.clone())), &[logits])?
            }
            ActivationMode::Adaptive => {
                let gate = head.gate.as_ref().expect("adaptive head without gate");
                let scale = head.scale.as_ref().expect("adaptive head without scale");
                adaptive_sparse_rows(g, p, gate, scale, logits, mask)?
            }
        };
        let out = g.grouped_mix(weights, v, n_agents)?;
        Ok((out, weights))
    }

    fn hop(
        &self,
        g: &mut Graph,
        l: usize,
        h: TensorId,
        batch: &SceneBatch,
    ) -> Result<(TensorId, Vec<AttentionTrace>), ModelError> {
        let layer = &self.layout.hops[l];
        let mut parts = vec![h];
        let mut traces = Vec::new();
        for (heads, mask) in layer.heads.iter().zip(&batch.masks) {
            for (k, head) in heads.iter().enumerate() {
                let (agg, weights) = self.attend(g, head, h, mask, batch.n_agents)?;
                parts.push(agg);
                traces.push(AttentionTrace { hop: l, relation: head.relation, head: k, weights });
            }
        }
        let joint = g.concat(&parts, Axis::Cols)?;
        Ok((layer.update.forward_relu(g, &self.params, joint)?, traces))
    }

    /// Homogeneous round: `h' = f_mp(h || Att(h))`.
    pub fn message_pass_hop(
        &self,
        g: &mut Graph,
        l: usize,
        h: TensorId,
        batch: &SceneBatch,
    ) -> Result<(TensorId, Vec<AttentionTrace>), ModelError> {
        if self.spec.relational || batch.relational {
            return Err(ModelError::RelationMismatch);
        }
        self.hop(g, l, h, batch)
    }

    /// Two-relation round: `h' = f_mp(h || Att_teammates(h) || Att_enemies(h))`.
    pub fn relational_message_pass_hop(
        &self,
        g: &mut Graph,
        l: usize,
        h: TensorId,
        batch: &SceneBatch,
    ) -> Result<(TensorId, Vec<AttentionTrace>), ModelError> {
        if !self.spec.relational || !batch.relational {
            return Err(ModelError::RelationMismatch);
        }
        self.hop(g, l, h, batch)
    }

    pub fn forward(&self, g: &mut Graph, batch: &SceneBatch) -> Result<ForwardOutput, ModelError> {
        if batch.relational != self.spec.relational {
            return Err(ModelError::RelationMismatch);
        }
        let rows = batch.rows();
        let states = g.constant(batch.agent_states.clone());
        let u = self.encode_agents(g, states)?;
        let e = self.encode_entities(g, &batch.entity_states, rows, batch.n_entities)?;
        let mut h = self.initial_embedding(g, u, e)?;
        let mut attention = Vec::new();
        for l in 0..self.spec.hops {
            let (next, traces) = if self.spec.relational {
                self.relational_message_pass_hop(g, l, h, batch)?
            } else {
                self.message_pass_hop(g, l, h, batch)?
            };
            h = next;
            attention.extend(traces);
        }
        let [p0, p1] = &self.layout.policy;
        let ph = p0.forward_relu(g, &self.params, h)?;
        let logits = p1.forward(g, &self.params, ph)?;
        let [v0, v1] = &self.layout.value;
        let vh = v0.forward_relu(g, &self.params, h)?;
        let values = v1.forward(g, &self.params, vh)?;
        Ok(ForwardOutput { logits, values, attention })
    }

    /// Forward pass without keeping the graph.
    pub fn infer(&self, batch: &SceneBatch) -> Result<Inference, ModelError> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, batch)?;
        let logits = g.value(out.logits).clone();
        if !logits.is_finite() {
            return Err(ModelError::NonFinite("policy logits"));
        }
        Ok(Inference {
            n_agents: batch.n_agents,
            logits,
            values: g.value(out.values).as_slice().to_vec(),
            attention: out
                .attention
                .iter()
                .map(|t| AttentionMatrix {
                    hop: t.hop,
                    relation: t.relation,
                    head: t.head,
                    weights: g.value(t.weights).clone(),
                })
                .collect(),
        })
    }

    /// Runs one scene and stores the attention matrices in its graph.
    pub fn record_attention(
        &self,
        graph: &mut AgentGraph,
        observations: &[crate::env::Observation],
    ) -> Result<Inference, ModelError> {
        let batch = SceneBatch::single(graph, observations)?;
        let inference = self.infer(&batch)?;
        graph.learned_weights = inference.scene_attention(0);
        Ok(inference)
    }
}
