//! Ranking metrics, similarity/KGE baselines and path-pattern statistics.

use std::collections::{HashMap, HashSet};

use crate::graph::{EntityId, IntegratedGraph, REL_INTERACT};
use crate::inference::ScoredPath;
use crate::kge::ScoreModel;

/// Per-user hit ratio: |top-k ∩ test| / |test|.
pub fn hit_ratio_at_k(recommended: &[EntityId], test_items: &HashSet<EntityId>, k: usize) -> f64 {
    assert!(k >= 1);
    assert!(!test_items.is_empty());
    let hits = recommended
        .iter()
        .take(k)
        .filter(|e| test_items.contains(e))
        .count();
    hits as f64 / test_items.len() as f64
}

/// NDCG@k with DCG = Σ 1/log₂(rank+1) over hits and IDCG truncated at
/// min(k, |test|).
pub fn ndcg_at_k(recommended: &[EntityId], test_items: &HashSet<EntityId>, k: usize) -> f64 {
    assert!(k >= 1);
    assert!(!test_items.is_empty());
    let mut dcg = 0.0;
    for (idx, e) in recommended.iter().take(k).enumerate() {
        if test_items.contains(e) {
            dcg += 1.0 / ((idx + 2) as f64).log2();
        }
    }
    let ideal = k.min(test_items.len());
    let idcg: f64 = (0..ideal).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
    dcg / idcg
}

/// Mean of per-user metric values; users with empty test sets must be
/// filtered out by the caller.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub k: usize,
    pub per_run_hr: Vec<f64>,
    pub per_run_ndcg: Vec<f64>,
    pub users_skipped: usize,
}

impl MetricReport {
    pub fn mean_hr(&self) -> f64 {
        mean(&self.per_run_hr)
    }

    pub fn mean_ndcg(&self) -> f64 {
        mean(&self.per_run_ndcg)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("run\thr_at_k\tndcg_at_k\n");
        for (i, (hr, nd)) in self.per_run_hr.iter().zip(&self.per_run_ndcg).enumerate() {
            out.push_str(&format!("{}\t{:.6}\t{:.6}\n", i, hr, nd));
        }
        out.push_str(&format!("mean\t{:.6}\t{:.6}\n", self.mean_hr(), self.mean_ndcg()));
        out.push_str(&format!("# k={} users_skipped={}\n", self.k, self.users_skipped));
        out
    }
}

/// Item-item cosine similarity over the binary training matrix.
/// score(i) = Σ_{j ∈ hist(u)} cos(i, j), training items excluded.
pub struct ItemKnn {
    /// item -> set of users who interacted with it (training split)
    item_users: HashMap<EntityId, HashSet<EntityId>>,
}

impl ItemKnn {
    pub fn fit(graph: &IntegratedGraph) -> Self {
        let mut item_users: HashMap<EntityId, HashSet<EntityId>> = HashMap::new();
        for u in graph.users() {
            for &i in graph.user_items(u) {
                item_users.entry(i).or_default().insert(u);
            }
        }
        ItemKnn { item_users }
    }

    pub fn cosine(&self, a: EntityId, b: EntityId) -> f64 {
        let (ua, ub) = match (self.item_users.get(&a), self.item_users.get(&b)) {
            (Some(x), Some(y)) => (x, y),
            _ => return 0.0,
        };
        let inter = ua.intersection(ub).count() as f64;
        if inter == 0.0 {
            return 0.0;
        }
        inter / ((ua.len() as f64).sqrt() * (ub.len() as f64).sqrt())
    }

    pub fn recommend(&self, graph: &IntegratedGraph, u: EntityId, k: usize) -> Vec<EntityId> {
        let hist = graph.user_items(u);
        if hist.is_empty() {
            return Vec::new();
        }
        let hist_set: HashSet<EntityId> = hist.iter().copied().collect();
        let mut scored: Vec<(EntityId, f64)> = graph
            .items()
            .filter(|i| !hist_set.contains(i))
            .map(|i| (i, hist.iter().map(|&j| self.cosine(i, j)).sum::<f64>()))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored.into_iter().map(|(i, _)| i).collect()
    }
}

/// Ranks all non-training items by ψ(u, Interact, item) descending.
pub fn kge_rec_recommend(
    graph: &IntegratedGraph,
    model: &ScoreModel,
    u: EntityId,
    k: usize,
) -> Vec<EntityId> {
    let hist: HashSet<EntityId> = graph.user_items(u).iter().copied().collect();
    let mut scored: Vec<(EntityId, f64)> = graph
        .items()
        .filter(|i| !hist.contains(i))
        .map(|i| (i, model.score(u, REL_INTERACT, i)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored.into_iter().map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, Default)]
pub struct PathPatternStats {
    /// (signature, percentage of all kept paths), sorted descending.
    pub patterns: Vec<(String, f64)>,
    pub total_paths: usize,
}

/// Signature of a path: entity-kind letters joined by relation labels,
/// e.g. `U-Interact-I-InteractedBy-U-Interact-I`. Self-loop steps are
/// kept: they are part of the learned stop behavior.
pub fn path_signature(graph: &IntegratedGraph, path: &ScoredPath) -> String {
    let mut sig = String::new();
    for (idx, (r, e)) in path.steps.iter().enumerate() {
        if idx == 0 {
            sig.push(graph.kind(*e).letter());
        } else {
            sig.push_str(&format!(
                "-{}-{}",
                graph.relation_label(*r),
                graph.kind(*e).letter()
            ));
        }
    }
    sig
}

pub fn path_pattern_stats(graph: &IntegratedGraph, paths: &[&ScoredPath]) -> PathPatternStats {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for p in paths {
        *counts.entry(path_signature(graph, p)).or_default() += 1;
    }
    let total = paths.len();
    let mut patterns: Vec<(String, f64)> = counts
        .into_iter()
        .map(|(sig, c)| (sig, 100.0 * c as f64 / total.max(1) as f64))
        .collect();
    patterns.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    PathPatternStats { patterns, total_paths: total }
}

impl PathPatternStats {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("pattern\tpct\n");
        for (sig, pct) in &self.patterns {
            out.push_str(&format!("{}\t{:.1}\n", sig, pct));
        }
        out
    }
}
