//! Knowledge-graph embedding pre-training (DistMult) and the score
//! function used for reward shaping and the KGE-Rec ranker.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::Adam;
use crate::error::{EkarError, Result};
use crate::graph::{EntityId, EntityKind, IntegratedGraph, RelationId, REL_INTERACT, REL_SELF_LOOP};
use crate::math::sigmoid;

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub entity: Vec<f64>,
    pub relation: Vec<f64>,
}

impl EmbeddingTable {
    /// Uniform init in [-0.5/d, 0.5/d].
    pub fn init(num_entities: usize, num_relations: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = 0.5 / dim as f64;
        let mut fill = |n: usize| -> Vec<f64> {
            (0..n * dim).map(|_| rng.gen_range(-half..half)).collect()
        };
        let entity = fill(num_entities);
        let relation = fill(num_relations);
        EmbeddingTable { dim, num_entities, num_relations, entity, relation }
    }

    pub fn entity_row(&self, e: EntityId) -> &[f64] {
        &self.entity[e.idx() * self.dim..(e.idx() + 1) * self.dim]
    }

    pub fn relation_row(&self, r: RelationId) -> &[f64] {
        &self.relation[r.idx() * self.dim..(r.idx() + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        crate::math::all_finite(&self.entity) && crate::math::all_finite(&self.relation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreVariant {
    DistMult,
    /// Interface slot only; selecting it is a configuration error.
    ConvE,
}

impl std::str::FromStr for ScoreVariant {
    type Err = EkarError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "distmult" => Ok(ScoreVariant::DistMult),
            "conve" => Err(EkarError::Config(
                "score model 'conve' is declared but not implemented; use 'distmult'".into(),
            )),
            other => Err(EkarError::Config(format!("unknown score model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoreModel {
    pub table: EmbeddingTable,
    pub variant: ScoreVariant,
}

impl ScoreModel {
    pub fn new(table: EmbeddingTable) -> Self {
        ScoreModel { table, variant: ScoreVariant::DistMult }
    }

    /// Generalized inner product Σ_k e_h[k]·r[k]·e_t[k].
    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        distmult_score(&self.table, h, r, t)
    }

    /// σ(ψ(u, i)) with ψ taken over the Interact relation; in (0,1)
    /// for all finite embeddings.
    pub fn shaping_score(&self, u: EntityId, i: EntityId) -> f64 {
        sigmoid(self.score(u, REL_INTERACT, i))
    }
}

pub fn distmult_score(table: &EmbeddingTable, h: EntityId, r: RelationId, t: EntityId) -> f64 {
    let eh = table.entity_row(h);
    let er = table.relation_row(r);
    let et = table.entity_row(t);
    let mut s = 0.0;
    for k in 0..table.dim {
        s += eh[k] * er[k] * et[k];
    }
    s
}

#[derive(Debug, Clone)]
pub struct KgeConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub lr: f64,
    pub dropout: f64,
    pub batch: usize,
    pub seed: u64,
    /// Ablation: drop Interact edges from the training triplet set.
    pub include_interactions: bool,
}

impl Default for KgeConfig {
    fn default() -> Self {
        KgeConfig {
            dim: 32,
            epochs: 100,
            negatives: 8,
            lr: 1e-3,
            dropout: 0.0,
            batch: 512,
            seed: 0,
            include_interactions: true,
        }
    }
}

/// BCE loss for one positive and its negatives, without dropout:
/// −log σ(s⁺) − Σ log(1 − σ(s⁻)). Pure; used as the oracle target for
/// finite-difference checks of the analytic gradients.
pub fn bce_loss(
    table: &EmbeddingTable,
    pos: (EntityId, RelationId, EntityId),
    negs: &[(EntityId, RelationId, EntityId)],
) -> f64 {
    let sp = distmult_score(table, pos.0, pos.1, pos.2);
    let mut loss = -ln_sigmoid(sp);
    for &(h, r, t) in negs {
        let sn = distmult_score(table, h, r, t);
        loss -= ln_sigmoid(-sn);
    }
    loss
}

fn ln_sigmoid(x: f64) -> f64 {
    // log σ(x), stable for large |x|
    if x >= 0.0 {
        -(1.0 + (-x).exp()).ln()
    } else {
        x - (1.0 + x.exp()).ln()
    }
}

/// Accumulates analytic gradients of `bce_loss` into dense buffers
/// (same layout as the table). Optional per-slot dropout scale vectors
/// multiply the embedding rows elementwise before scoring.
#[allow(clippy::too_many_arguments)]
pub fn bce_loss_grads(
    table: &EmbeddingTable,
    pos: (EntityId, RelationId, EntityId),
    negs: &[(EntityId, RelationId, EntityId)],
    scales: Option<&SampleScales>,
    grad_entity: &mut [f64],
    grad_relation: &mut [f64],
) -> f64 {
    let d = table.dim;
    let one = vec![1.0; d];
    let (sh, sr, st) = match scales {
        Some(s) => (s.head.as_slice(), s.rel.as_slice(), s.tail.as_slice()),
        None => (one.as_slice(), one.as_slice(), one.as_slice()),
    };

    let mut total = 0.0;
    let accumulate = |h: EntityId,
                          r: RelationId,
                          t: EntityId,
                          th: &[f64],
                          tt: &[f64],
                          positive: bool,
                          grad_entity: &mut [f64],
                          grad_relation: &mut [f64]|
     -> f64 {
        let eh = table.entity_row(h);
        let er = table.relation_row(r);
        let et = table.entity_row(t);
        let mut s = 0.0;
        for k in 0..d {
            s += (eh[k] * th[k]) * (er[k] * sr[k]) * (et[k] * tt[k]);
        }
        let (loss, dls) = if positive {
            (-ln_sigmoid(s), sigmoid(s) - 1.0)
        } else {
            (-ln_sigmoid(-s), sigmoid(s))
        };
        let gh = &mut grad_entity[h.idx() * d..(h.idx() + 1) * d];
        for k in 0..d {
            gh[k] += dls * th[k] * (er[k] * sr[k]) * (et[k] * tt[k]);
        }
        let gr = &mut grad_relation[r.idx() * d..(r.idx() + 1) * d];
        for k in 0..d {
            gr[k] += dls * sr[k] * (eh[k] * th[k]) * (et[k] * tt[k]);
        }
        let gt = &mut grad_entity[t.idx() * d..(t.idx() + 1) * d];
        for k in 0..d {
            gt[k] += dls * tt[k] * (eh[k] * th[k]) * (er[k] * sr[k]);
        }
        loss
    };

    total += accumulate(pos.0, pos.1, pos.2, sh, st, true, grad_entity, grad_relation);
    for &(h, r, t) in negs {
        // Corrupted slots reuse the positive's scales for the shared rows;
        // the corrupted row is scored with the fresh-tail or fresh-head scale.
        let (th, tt) = if h == pos.0 { (sh, st) } else { (st, sh) };
        total += accumulate(h, r, t, th, tt, false, grad_entity, grad_relation);
    }
    total
}

/// Dropout scale vectors for one training sample (0 or 1/(1-p) per dim).
#[derive(Debug, Clone)]
pub struct SampleScales {
    pub head: Vec<f64>,
    pub rel: Vec<f64>,
    pub tail: Vec<f64>,
}

impl SampleScales {
    pub fn draw<R: Rng>(dim: usize, rate: f64, rng: &mut R) -> Self {
        let mut draw_one = || -> Vec<f64> {
            (0..dim)
                .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / (1.0 - rate) })
                .collect()
        };
        SampleScales { head: draw_one(), rel: draw_one(), tail: draw_one() }
    }
}

/// Collects all training triplets of the graph: every stored non-self-loop
/// edge, optionally excluding the Interact edges.
pub fn training_triplets(
    graph: &IntegratedGraph,
    include_interactions: bool,
) -> Vec<(EntityId, RelationId, EntityId)> {
    let interact_inv = graph.inverse(REL_INTERACT);
    let mut out = Vec::new();
    for h in 0..graph.num_entities() as u32 {
        let h = EntityId(h);
        for &(r, t) in graph.neighbors(h).unwrap() {
            if r == REL_SELF_LOOP {
                continue;
            }
            if !include_interactions && (r == REL_INTERACT || r == interact_inv) {
                continue;
            }
            out.push((h, r, t));
        }
    }
    out
}

/// Pre-trains DistMult embeddings on the graph with BCE over uniformly
/// sampled kind-matched corruptions. Returns the model and the per-epoch
/// mean loss curve.
pub fn train_kge(graph: &IntegratedGraph, cfg: &KgeConfig) -> Result<(ScoreModel, Vec<f64>)> {
    let mut table = EmbeddingTable::init(
        graph.num_entities(),
        graph.num_relations(),
        cfg.dim,
        cfg.seed,
    );
    if cfg.epochs == 0 {
        return Ok((ScoreModel::new(table), Vec::new()));
    }

    let positives = training_triplets(graph, cfg.include_interactions);
    if positives.is_empty() {
        return Err(EkarError::Config("no training triplets for KGE".into()));
    }

    // Entities grouped by kind for kind-matched negative sampling.
    let mut by_kind: [Vec<EntityId>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for e in 0..graph.num_entities() as u32 {
        let e = EntityId(e);
        let slot = match graph.kind(e) {
            EntityKind::User => 0,
            EntityKind::Item => 1,
            EntityKind::Attribute => 2,
        };
        by_kind[slot].push(e);
    }
    let kind_pool = |e: EntityId| -> &Vec<EntityId> {
        match graph.kind(e) {
            EntityKind::User => &by_kind[0],
            EntityKind::Item => &by_kind[1],
            EntityKind::Attribute => &by_kind[2],
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut opt_e = Adam::new(table.entity.len(), cfg.lr);
    let mut opt_r = Adam::new(table.relation.len(), cfg.lr);
    let mut grad_e = vec![0.0; table.entity.len()];
    let mut grad_r = vec![0.0; table.relation.len()];
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_samples = 0usize;
        for chunk in order.chunks(cfg.batch.max(1)) {
            grad_e.fill(0.0);
            grad_r.fill(0.0);
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let pos = positives[idx];
                let mut negs = Vec::with_capacity(cfg.negatives);
                for _ in 0..cfg.negatives {
                    if rng.gen::<bool>() {
                        let pool = kind_pool(pos.2);
                        let t = pool[rng.gen_range(0..pool.len())];
                        negs.push((pos.0, pos.1, t));
                    } else {
                        let pool = kind_pool(pos.0);
                        let h = pool[rng.gen_range(0..pool.len())];
                        negs.push((h, pos.1, pos.2));
                    }
                }
                let scales = if cfg.dropout > 0.0 {
                    Some(SampleScales::draw(cfg.dim, cfg.dropout, &mut rng))
                } else {
                    None
                };
                batch_loss +=
                    bce_loss_grads(&table, pos, &negs, scales.as_ref(), &mut grad_e, &mut grad_r);
            }
            if !batch_loss.is_finite() {
                return Err(EkarError::Diverged(format!(
                    "KGE loss became non-finite at epoch {epoch}"
                )));
            }
            let inv = 1.0 / chunk.len() as f64;
            grad_e.iter_mut().for_each(|g| *g *= inv);
            grad_r.iter_mut().for_each(|g| *g *= inv);
            opt_e.step(&mut table.entity, &grad_e);
            opt_r.step(&mut table.relation, &grad_r);
            epoch_loss += batch_loss;
            epoch_samples += chunk.len();
        }
        curve.push(epoch_loss / epoch_samples as f64);
        if !table.is_finite() {
            return Err(EkarError::Diverged(format!(
                "KGE embeddings non-finite after epoch {epoch}"
            )));
        }
    }
    Ok((ScoreModel::new(table), curve))
}
