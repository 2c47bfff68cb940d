use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::rollout::{Sample, Trajectory};
use super::PpoError;
use crate::model::{AgentGraph, ForwardOutput, Network, SceneBatch};
use crate::tensor::{Adam, Axis, Graph, Matrix, TensorId};

/// Policy term of the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)`.
    Clipped { epsilon: f64 },
    /// `A * log pi(a)`.
    Vanilla,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub mean_support: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
    /// A non-finite loss stopped the update and the parameters were restored.
    pub aborted: bool,
}

struct Loss {
    total: TensorId,
    policy: TensorId,
    value: TensorId,
    entropy: TensorId,
    log_ratio: TensorId,
    forward: ForwardOutput,
}

fn column(values: impl Iterator<Item = f64>) -> Matrix {
    let v: Vec<f64> = values.collect();
    Matrix::column_vector(&v)
}

fn build_loss(
    g: &mut Graph,
    network: &Network,
    graph: &AgentGraph,
    samples: &[&Sample],
    objective: Objective,
    value_coef: f64,
    entropy_coef: f64,
) -> Result<(Loss, SceneBatch), PpoError> {
    let scenes: Vec<_> = samples.iter().map(|s| (graph, s.observations.as_slice())).collect();
    let batch = SceneBatch::from_scenes(&scenes)?;
    let rows = batch.rows();
    let forward = network.forward(g, &batch)?;
    let actions = network.spec().num_actions;

    let mut onehot = Matrix::zeros(rows, actions);
    for (r, a) in samples.iter().flat_map(|s| &s.actions).enumerate() {
        onehot[(r, *a)] = 1.0;
    }
    let log_probs = g.log_softmax_rows(forward.logits);
    let onehot = g.constant(onehot);
    let taken = g.mul(log_probs, onehot)?;
    let taken = g.sum(taken, Some(Axis::Cols));
    let adv = g.constant(column(samples.iter().flat_map(|s| s.advantages.iter().copied())));

    let old = g.constant(column(samples.iter().flat_map(|s| s.log_probs.iter().copied())));
    let log_ratio = g.sub(taken, old)?;
    let surrogate = match objective {
        Objective::Clipped { epsilon } => {
            let ratio = g.exp(log_ratio);
            let unclipped = g.mul(ratio, adv)?;
            let clipped = g.clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
            let clipped = g.mul(clipped, adv)?;
            g.minimum(unclipped, clipped)?
        }
        Objective::Vanilla => g.mul(taken, adv)?,
    };
    let surrogate = g.mean(surrogate, None)?;
    let policy = g.neg(surrogate);

    let returns = g.constant(column(samples.iter().flat_map(|s| s.returns.iter().copied())));
    let err = g.sub(forward.values, returns)?;
    let sq = g.mul(err, err)?;
    let value = g.mean(sq, None)?;

    let probs = g.exp(log_probs);
    let plogp = g.mul(probs, log_probs)?;
    let plogp = g.sum(plogp, Some(Axis::Cols));
    let neg_entropy = g.mean(plogp, None)?;
    let entropy = g.neg(neg_entropy);

    let weighted_value = g.scale(value, value_coef);
    let weighted_entropy = g.scale(neg_entropy, entropy_coef);
    let total = g.add(policy, weighted_value)?;
    let total = g.add(total, weighted_entropy)?;
    Ok((Loss { total, policy, value, entropy, log_ratio, forward }, batch))
}

/// Mean support size over attention rows with a non-empty neighborhood.
fn support_stats(g: &Graph, forward: &ForwardOutput, batch: &SceneBatch, graph: &AgentGraph) -> (f64, usize) {
    let relations = graph.relations();
    let mut total = 0usize;
    let mut count = 0usize;
    for trace in &forward.attention {
        let r = relations.iter().position(|&x| x == trace.relation).unwrap_or(0);
        let mask = &batch.masks[r];
        let w = g.value(trace.weights);
        for row in 0..w.rows() {
            if mask.row(row).iter().any(|&m| m > 0.0) {
                total += w.row(row).iter().filter(|&&x| x > 0.0).count();
                count += 1;
            }
        }
    }
    (total as f64, count)
}

/// Gradient of the policy term alone, per parameter.
pub fn policy_gradient(
    network: &Network,
    graph: &AgentGraph,
    samples: &[&Sample],
    objective: Objective,
) -> Result<Vec<Option<Matrix>>, PpoError> {
    let mut g = Graph::new();
    let (loss, _) = build_loss(&mut g, network, graph, samples, objective, 0.0, 0.0)?;
    g.backward(loss.policy)?;
    Ok(g.param_grads(network.params()))
}

fn global_norm(grads: &[Option<Matrix>]) -> f64 {
    grads.iter().flatten().map(|m| m.as_slice().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
}

/// Runs the configured epochs of minibatch updates over `trajectory`, whose
/// advantages must already be filled in.
pub fn ppo_update(
    network: &mut Network,
    adam: &mut Adam,
    trajectory: &Trajectory,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, PpoError> {
    let samples: Vec<&Sample> = trajectory.samples().collect();
    if samples.is_empty() {
        return Err(PpoError::EmptyTrajectory);
    }
    if samples.iter().any(|s| s.advantages.len() != s.actions.len()) {
        return Err(PpoError::MissingAdvantages);
    }
    let backup = (network.params().clone(), adam.clone());
    let objective = Objective::Clipped { epsilon: config.clip_epsilon };
    let per_batch = samples.len().div_ceil(config.minibatches);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut stats = UpdateStats::default();
    let mut support = (0.0, 0usize);

    for _ in 0..config.ppo_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(per_batch) {
            let batch_samples: Vec<&Sample> = chunk.iter().map(|&i| samples[i]).collect();
            let mut g = Graph::new();
            let (loss, batch) = build_loss(
                &mut g,
                network,
                &trajectory.graph,
                &batch_samples,
                objective,
                config.value_coef,
                config.entropy_coef,
            )?;
            let total = g.value(loss.total).item();
            if !total.is_finite() {
                *network.params_mut() = backup.0;
                *adam = backup.1;
                stats.aborted = true;
                return Ok(stats);
            }
            g.backward(loss.total)?;
            let mut grads = g.param_grads(network.params());
            let norm = global_norm(&grads);
            if let Some(max) = config.max_grad_norm {
                if norm > max {
                    let s = max / norm;
                    for m in grads.iter_mut().flatten() {
                        m.scale_in_place(s);
                    }
                }
            }
            adam.step(network.params_mut(), &grads)?;

            let lr = g.value(loss.log_ratio);
            let n = lr.len() as f64;
            stats.approx_kl += lr.as_slice().iter().map(|x| -x).sum::<f64>() / n;
            stats.clip_fraction +=
                lr.as_slice().iter().filter(|x| (x.exp() - 1.0).abs() > config.clip_epsilon).count() as f64 / n;
            stats.policy_loss += g.value(loss.policy).item();
            stats.value_loss += g.value(loss.value).item();
            stats.entropy += g.value(loss.entropy).item();
            stats.grad_norm += norm;
            let (s, c) = support_stats(&g, &loss.forward, &batch, &trajectory.graph);
            support.0 += s;
            support.1 += c;
            stats.minibatches += 1;
        }
    }
    let m = stats.minibatches as f64;
    stats.policy_loss /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    stats.approx_kl /= m;
    stats.clip_fraction /= m;
    stats.grad_norm /= m;
    stats.mean_support = if support.1 > 0 { support.0 / support.1 as f64 } else { 0.0 };
    Ok(stats)
}
