//! Episode rollouts, shaped terminal rewards and REINFORCE updates.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::Adam;
use crate::error::{EkarError, Result};
use crate::eval;
use crate::graph::{EntityId, FanoutMode, IntegratedGraph, RelationId, REL_START};
use crate::inference::{self, RankStrategy};
use crate::kge::{EmbeddingTable, ScoreModel};
use crate::math::{all_finite, clip_global_norm};
use crate::policy::{
    self, action_distribution, dropout_mask, encode_initial, encode_step, sample_action,
    DecisionPoint, PolicyGrads, PolicyParams,
};

/// One episode: the traversed (r, e) sequence including the artificial
/// start pair, the decision record needed for backprop, per-step
/// log-probabilities, and the shaped terminal reward.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<(RelationId, EntityId)>,
    pub decisions: Vec<DecisionPoint>,
    pub log_probs: Vec<f64>,
    pub reward: f64,
}

impl Trajectory {
    pub fn terminal(&self) -> EntityId {
        self.steps.last().unwrap().1
    }
}

/// Terminal reward: 1 for an interacted item, σ(ψ(u, e_T)) for a
/// non-interacted item (0 when shaping is disabled), −1 otherwise.
pub fn terminal_reward(
    graph: &IntegratedGraph,
    score_model: &ScoreModel,
    u: EntityId,
    e_t: EntityId,
    reward_shaping: bool,
) -> f64 {
    if !graph.is_item(e_t) {
        return -1.0;
    }
    if graph.is_interaction(u, e_t) {
        return 1.0;
    }
    if reward_shaping {
        score_model.shaping_score(u, e_t)
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub max_len: usize,
    /// LSTM hidden width.
    pub hidden: usize,
    pub action_dropout: f64,
    pub lr: f64,
    pub max_fanout: usize,
    pub reward_shaping: bool,
    pub freeze_embeddings: bool,
    /// Optional moving-average reward baseline (default off).
    pub baseline: bool,
    pub grad_clip: f64,
    pub seed: u64,
    /// Validate (and checkpoint the best policy) every this many epochs;
    /// 0 disables validation entirely.
    pub eval_every: usize,
    pub beam: usize,
    pub k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch: 512,
            max_len: 3,
            hidden: 64,
            action_dropout: 0.5,
            lr: 1e-3,
            max_fanout: 512,
            reward_shaping: true,
            freeze_embeddings: false,
            baseline: false,
            grad_clip: 5.0,
            seed: 0,
            eval_every: 0,
            beam: 64,
            k: 10,
        }
    }
}

/// Runs one episode of exactly `max_len` actions from user `u`.
/// Self-loops let the agent stay once it has found an item.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    graph: &IntegratedGraph,
    score_model: &ScoreModel,
    params: &PolicyParams,
    table: &EmbeddingTable,
    u: EntityId,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    episode_seed: u64,
) -> Result<Trajectory> {
    let mut steps = vec![(REL_START, u)];
    let mut decisions = Vec::with_capacity(cfg.max_len);
    let mut log_probs = Vec::with_capacity(cfg.max_len);
    let mut state = encode_initial(params, table, REL_START, u);
    let mut here = u;
    for t in 0..cfg.max_len {
        let candidates = graph.action_set(
            here,
            cfg.max_fanout,
            FanoutMode::Episode(episode_seed.wrapping_add(t as u64)),
        )?;
        let keep = if cfg.action_dropout > 0.0 {
            dropout_mask(&candidates, cfg.action_dropout, rng)
        } else {
            vec![true; candidates.len()]
        };
        let dist = action_distribution(params, table, &state, &candidates, Some(&keep));
        let chosen = sample_action(&dist, rng);
        log_probs.push(dist[chosen].max(f64::MIN_POSITIVE).ln());
        let (r, e) = candidates[chosen];
        decisions.push(DecisionPoint { candidates, keep, chosen });
        steps.push((r, e));
        if t + 1 < cfg.max_len {
            state = encode_step(params, table, &state, r, e);
        }
        here = e;
    }
    let reward = terminal_reward(graph, score_model, u, here, cfg.reward_shaping);
    Ok(Trajectory { steps, decisions, log_probs, reward })
}

/// Per-update statistics returned by `reinforce_update`.
#[derive(Debug, Clone, Copy)]
pub struct BatchStats {
    pub mean_reward: f64,
    pub grad_norm: f64,
}

pub struct Optimizers {
    pub policy: Adam,
    pub entity: Adam,
    pub relation: Adam,
}

impl Optimizers {
    pub fn new(params: &PolicyParams, table: &EmbeddingTable, lr: f64) -> Self {
        Optimizers {
            policy: Adam::new(params.to_flat().len(), lr),
            entity: Adam::new(table.entity.len(), lr),
            relation: Adam::new(table.relation.len(), lr),
        }
    }
}

/// One REINFORCE ascent step on −(1/B) Σ R_T Σ_t log π_θ(a_t|s_t).
/// `baseline` is subtracted from each trajectory's reward when enabled.
pub fn reinforce_update(
    batch: &[Trajectory],
    params: &mut PolicyParams,
    table: &mut EmbeddingTable,
    opts: &mut Optimizers,
    cfg: &TrainConfig,
    baseline: f64,
) -> Result<BatchStats> {
    assert!(!batch.is_empty());
    let mut grads = PolicyGrads::zeros(params, table);
    let inv = 1.0 / batch.len() as f64;
    for traj in batch {
        let weight = (traj.reward - baseline) * inv;
        policy::trajectory_logprob_and_grads(
            params,
            table,
            traj.steps[0],
            &traj.decisions,
            weight,
            &mut grads,
        );
    }
    let mut pflat = grads.params.to_flat();
    if !all_finite(&pflat) || !all_finite(&grads.entity) || !all_finite(&grads.relation) {
        return Err(EkarError::Diverged("non-finite policy gradient".into()));
    }
    let grad_norm = if cfg.freeze_embeddings {
        clip_global_norm(&mut [&mut pflat], cfg.grad_clip)
    } else {
        clip_global_norm(
            &mut [&mut pflat, &mut grads.entity, &mut grads.relation],
            cfg.grad_clip,
        )
    };
    let mut flat = params.to_flat();
    opts.policy.step(&mut flat, &pflat);
    params.set_from_flat(&flat);
    if !cfg.freeze_embeddings {
        opts.entity.step(&mut table.entity, &grads.entity);
        opts.relation.step(&mut table.relation, &grads.relation);
    }
    if !params.is_finite() || !table.is_finite() {
        return Err(EkarError::Diverged("non-finite parameters after update".into()));
    }
    let mean_reward = batch.iter().map(|t| t.reward).sum::<f64>() * inv;
    Ok(BatchStats { mean_reward, grad_norm })
}

/// Reward-curve entry: (update step, minutes elapsed, mean batch reward).
pub type CurvePoint = (usize, f64, f64);

pub struct TrainOutcome {
    pub params: PolicyParams,
    pub table: EmbeddingTable,
    pub curve: Vec<CurvePoint>,
    pub best_val_hr: Option<f64>,
}

/// Trains the policy. One trajectory per training-interaction occurrence
/// per epoch, users shuffled. When validation pairs are supplied and
/// `eval_every > 0`, the best policy by validation HR@10 is returned.
pub fn train(
    graph: &IntegratedGraph,
    score_model: &ScoreModel,
    cfg: &TrainConfig,
    valid: Option<&HashMap<EntityId, Vec<EntityId>>>,
) -> Result<TrainOutcome> {
    let mut params = PolicyParams::init(score_model.table.dim, cfg.hidden, cfg.seed);
    let mut table = score_model.table.clone();
    let mut opts = Optimizers::new(&params, &table, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));

    // one occurrence per (user, training item) event
    let mut occurrences: Vec<EntityId> = graph
        .users()
        .flat_map(|u| std::iter::repeat(u).take(graph.user_items(u).len()))
        .collect();
    if occurrences.is_empty() {
        return Err(EkarError::Config("no training interactions".into()));
    }

    let start_time = Instant::now();
    let mut curve = Vec::new();
    let mut step = 0usize;
    let mut baseline = 0.0;
    let mut best: Option<(f64, PolicyParams, EmbeddingTable)> = None;

    for epoch in 0..cfg.epochs {
        occurrences.shuffle(&mut rng);
        for chunk in occurrences.chunks(cfg.batch.max(1)) {
            let mut batch = Vec::with_capacity(chunk.len());
            for &u in chunk {
                let episode_seed: u64 = rng.gen();
                batch.push(rollout(
                    graph,
                    score_model,
                    &params,
                    &table,
                    u,
                    cfg,
                    &mut rng,
                    episode_seed,
                )?);
            }
            let used_baseline = if cfg.baseline { baseline } else { 0.0 };
            let stats = reinforce_update(&batch, &mut params, &mut table, &mut opts, cfg, used_baseline)?;
            if cfg.baseline {
                baseline = 0.9 * baseline + 0.1 * stats.mean_reward;
            }
            step += 1;
            curve.push((step, start_time.elapsed().as_secs_f64() / 60.0, stats.mean_reward));
        }

        if cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 {
            if let Some(valid) = valid {
                let hr = validation_hr(graph, score_model, &params, &table, cfg, valid)?;
                if best.as_ref().map_or(true, |(b, _, _)| hr > *b) {
                    best = Some((hr, params.clone(), table.clone()));
                }
            }
        }
    }

    let (best_val_hr, params, table) = match best {
        Some((hr, p, t)) => (Some(hr), p, t),
        None => (None, params, table),
    };
    Ok(TrainOutcome { params, table, curve, best_val_hr })
}

fn validation_hr(
    graph: &IntegratedGraph,
    score_model: &ScoreModel,
    params: &PolicyParams,
    table: &EmbeddingTable,
    cfg: &TrainConfig,
    valid: &HashMap<EntityId, Vec<EntityId>>,
) -> Result<f64> {
    let mut per_user = Vec::new();
    for (&u, held_out) in valid {
        if held_out.is_empty() {
            continue;
        }
        let paths = inference::beam_search(
            graph,
            params,
            table,
            u,
            cfg.max_len,
            cfg.beam,
            cfg.max_fanout,
            cfg.seed,
        )?;
        let deduped = inference::dedup(paths, graph);
        let exclusions: std::collections::HashSet<EntityId> =
            graph.user_items(u).iter().copied().collect();
        let list = inference::rank(
            &deduped,
            RankStrategy::PathProb,
            score_model,
            u,
            cfg.k,
            &exclusions,
        );
        let ranked: Vec<EntityId> = list.entries.iter().map(|e| e.item).collect();
        let test: std::collections::HashSet<EntityId> = held_out.iter().copied().collect();
        per_user.push(eval::hit_ratio_at_k(&ranked, &test, cfg.k));
    }
    if per_user.is_empty() {
        return Ok(0.0);
    }
    Ok(per_user.iter().sum::<f64>() / per_user.len() as f64)
}
