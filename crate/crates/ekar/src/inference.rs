//! Beam-search recommendation: expand walks breadth-synchronously, keep
//! the best `beam_width` partial paths by cumulative log-probability,
//! deduplicate per terminal item and rank by path probability (Ekar) or
//! by the shaped reward score (Ekar*).

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::Result;
use crate::graph::{EntityId, FanoutMode, IntegratedGraph, RelationId, REL_SELF_LOOP, REL_START};
use crate::kge::{EmbeddingTable, ScoreModel};
use crate::policy::{action_distribution, encode_initial, encode_step, PolicyParams, StateEncoding};

#[derive(Debug, Clone)]
pub struct ScoredPath {
    /// (r, e) sequence starting with the artificial (Start, user) pair.
    pub steps: Vec<(RelationId, EntityId)>,
    /// Sum of step log-probabilities under the policy.
    pub log_prob: f64,
}

impl ScoredPath {
    pub fn terminal(&self) -> EntityId {
        self.steps.last().unwrap().1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankStrategy {
    /// Ekar: rank searched items by path probability.
    PathProb,
    /// Ekar*: rank searched items by σ(ψ(u, item)).
    Reward,
}

impl std::str::FromStr for RankStrategy {
    type Err = crate::error::EkarError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "path" | "ekar" | "pathprob" => Ok(RankStrategy::PathProb),
            "reward" | "ekar-star" | "ekar*" => Ok(RankStrategy::Reward),
            other => Err(crate::error::EkarError::Config(format!(
                "unknown ranking strategy '{other}' (expected 'path' or 'reward')"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Recommendation {
    pub item: EntityId,
    pub score: f64,
    pub path: ScoredPath,
}

#[derive(Debug, Clone)]
pub struct RecommendationList {
    pub user: EntityId,
    pub entries: Vec<Recommendation>,
    /// Set when fewer than K candidates survived exclusion.
    pub short: bool,
}

/// Breadth-synchronous beam search for `t_max` steps. No action dropout.
/// Ties in cumulative log-prob break by (EntityId, RelationId) ascending
/// on the newest step.
#[allow(clippy::too_many_arguments)]
pub fn beam_search(
    graph: &IntegratedGraph,
    params: &PolicyParams,
    table: &EmbeddingTable,
    u: EntityId,
    t_max: usize,
    beam_width: usize,
    max_fanout: usize,
    seed: u64,
) -> Result<Vec<ScoredPath>> {
    assert!(beam_width >= 1);
    struct Beam {
        steps: Vec<(RelationId, EntityId)>,
        log_prob: f64,
        state: StateEncoding,
    }
    let mut beams = vec![Beam {
        steps: vec![(REL_START, u)],
        log_prob: 0.0,
        state: encode_initial(params, table, REL_START, u),
    }];
    for _ in 0..t_max {
        // (source beam, action, new log-prob)
        let mut expansions: Vec<(usize, (RelationId, EntityId), f64)> = Vec::new();
        for (bi, beam) in beams.iter().enumerate() {
            let here = beam.steps.last().unwrap().1;
            let candidates = graph.action_set(here, max_fanout, FanoutMode::Seeded(seed))?;
            let dist = action_distribution(params, table, &beam.state, &candidates, None);
            for (j, &(r, e)) in candidates.iter().enumerate() {
                if dist[j] > 0.0 {
                    expansions.push((bi, (r, e), beam.log_prob + dist[j].ln()));
                }
            }
        }
        expansions.sort_by(|a, b| {
            b.2.total_cmp(&a.2)
                .then_with(|| (a.1 .1, a.1 .0).cmp(&(b.1 .1, b.1 .0)))
        });
        expansions.truncate(beam_width);
        let mut next = Vec::with_capacity(expansions.len());
        for (bi, (r, e), lp) in expansions {
            let mut steps = beams[bi].steps.clone();
            steps.push((r, e));
            let state = encode_step(params, table, &beams[bi].state, r, e);
            next.push(Beam { steps, log_prob: lp, state });
        }
        beams = next;
    }
    Ok(beams
        .into_iter()
        .map(|b| ScoredPath { steps: b.steps, log_prob: b.log_prob })
        .collect())
}

/// Keeps the most probable path per terminal item and drops paths that
/// end anywhere other than an item. Output sorted by log-prob descending.
pub fn dedup(paths: Vec<ScoredPath>, graph: &IntegratedGraph) -> Vec<ScoredPath> {
    let mut best: HashMap<EntityId, ScoredPath> = HashMap::new();
    for p in paths {
        let t = p.terminal();
        if !graph.is_item(t) {
            continue;
        }
        match best.get(&t) {
            Some(cur) if cur.log_prob >= p.log_prob => {}
            _ => {
                best.insert(t, p);
            }
        }
    }
    let mut out: Vec<ScoredPath> = best.into_values().collect();
    out.sort_by(|a, b| {
        b.log_prob
            .total_cmp(&a.log_prob)
            .then_with(|| a.terminal().cmp(&b.terminal()))
    });
    out
}

/// Ranks deduplicated paths into a top-K list; `exclusions` (training
/// and optionally validation items) are removed before truncation.
pub fn rank(
    paths: &[ScoredPath],
    strategy: RankStrategy,
    score_model: &ScoreModel,
    u: EntityId,
    k: usize,
    exclusions: &HashSet<EntityId>,
) -> RecommendationList {
    let mut entries: Vec<Recommendation> = paths
        .iter()
        .filter(|p| !exclusions.contains(&p.terminal()))
        .map(|p| {
            let item = p.terminal();
            let score = match strategy {
                RankStrategy::PathProb => p.log_prob,
                RankStrategy::Reward => score_model.shaping_score(u, item),
            };
            Recommendation { item, score, path: p.clone() }
        })
        .collect();
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.item.cmp(&b.item)));
    let short = entries.len() < k;
    entries.truncate(k);
    RecommendationList { user: u, entries, short }
}

/// Explanation view of a path: self-loop steps are mechanism, not
/// explanation, so they are stripped.
pub fn strip_self_loops(steps: &[(RelationId, EntityId)]) -> Vec<(RelationId, EntityId)> {
    steps.iter().copied().filter(|&(r, _)| r != REL_SELF_LOOP).collect()
}

/// `alice --Interact--> Titanic --StarredBy--> Leo` style rendering.
pub fn render_path(graph: &IntegratedGraph, steps: &[(RelationId, EntityId)]) -> String {
    let stripped = strip_self_loops(steps);
    let mut out = String::new();
    for (idx, (r, e)) in stripped.iter().enumerate() {
        if idx == 0 {
            out.push_str(graph.entity_label(*e));
        } else {
            out.push_str(&format!(
                " --{}--> {}",
                graph.relation_label(*r),
                graph.entity_label(*e)
            ));
        }
    }
    out
}

#[derive(Serialize)]
struct JsonStep<'a> {
    relation: &'a str,
    entity: &'a str,
}

#[derive(Serialize)]
struct JsonEntry<'a> {
    item: &'a str,
    score: f64,
    path: Vec<JsonStep<'a>>,
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    user: &'a str,
    items: Vec<JsonEntry<'a>>,
}

/// One JSON Lines record per user.
pub fn to_jsonl(graph: &IntegratedGraph, list: &RecommendationList) -> String {
    let record = JsonRecord {
        user: graph.entity_label(list.user),
        items: list
            .entries
            .iter()
            .map(|e| JsonEntry {
                item: graph.entity_label(e.item),
                score: e.score,
                path: e.path.steps[1..]
                    .iter()
                    .map(|(r, ent)| JsonStep {
                        relation: graph.relation_label(*r),
                        entity: graph.entity_label(*ent),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string(&record).expect("serializable record")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphInput};
    use crate::kge::EmbeddingTable;
    use crate::policy::PolicyParams;

    fn tiny_graph(inter: &[(&str, &str)], kg: &[(&str, &str, &str)]) -> IntegratedGraph {
        let interactions: Vec<(String, String)> =
            inter.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let triplets: Vec<(String, String, String)> = kg
            .iter()
            .map(|(a, b, c)| (a.to_string(), b.to_string(), c.to_string()))
            .collect();
        build_graph(GraphInput {
            interactions: &interactions,
            triplets: &triplets,
            matches: &HashMap::new(),
            extra_items: &[],
        })
        .unwrap()
    }

    /// Exhaustive enumeration of all length-T paths with their exact
    /// cumulative log-probabilities under the same policy.
    fn enumerate_paths(
        graph: &IntegratedGraph,
        params: &PolicyParams,
        table: &EmbeddingTable,
        u: EntityId,
        t_max: usize,
    ) -> Vec<ScoredPath> {
        let mut done = Vec::new();
        let mut frontier = vec![(
            vec![(REL_START, u)],
            0.0f64,
            encode_initial(params, table, REL_START, u),
        )];
        for _ in 0..t_max {
            let mut next = Vec::new();
            for (steps, lp, state) in frontier {
                let here = steps.last().unwrap().1;
                let cands = graph.neighbors(here).unwrap().to_vec();
                let dist = action_distribution(params, table, &state, &cands, None);
                for (j, &(r, e)) in cands.iter().enumerate() {
                    let mut s = steps.clone();
                    s.push((r, e));
                    let ns = encode_step(params, table, &state, r, e);
                    next.push((s, lp + dist[j].ln(), ns));
                }
            }
            frontier = next;
        }
        for (steps, lp, _) in frontier {
            done.push(ScoredPath { steps, log_prob: lp });
        }
        done
    }

    #[test]
    fn beam_matches_exhaustive_enumeration_when_wide() {
        let g = tiny_graph(
            &[("u", "i1"), ("u", "i2"), ("v", "i1")],
            &[("i1", "HasGenre", "a"), ("i2", "HasGenre", "a")],
        );
        let table = EmbeddingTable::init(g.num_entities(), g.num_relations(), 4, 1);
        let params = PolicyParams::init(4, 8, 2);
        let u = g.entity_id("u").unwrap();
        let mut exhaustive = enumerate_paths(&g, &params, &table, u, 3);
        exhaustive.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
        let beams = beam_search(&g, &params, &table, u, 3, 10_000, 512, 0).unwrap();
        assert_eq!(beams.len(), exhaustive.len());
        let mut got: Vec<Vec<(RelationId, EntityId)>> =
            beams.iter().map(|p| p.steps.clone()).collect();
        let mut want: Vec<Vec<(RelationId, EntityId)>> =
            exhaustive.iter().map(|p| p.steps.clone()).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn beam_width_one_is_greedy() {
        let g = tiny_graph(&[("u", "i")], &[]);
        let table = EmbeddingTable::init(g.num_entities(), g.num_relations(), 4, 3);
        let params = PolicyParams::init(4, 8, 4);
        let u = g.entity_id("u").unwrap();
        let beams = beam_search(&g, &params, &table, u, 3, 1, 512, 0).unwrap();
        assert_eq!(beams.len(), 1);
        // greedy path = argmax at each step
        let mut state = encode_initial(&params, &table, REL_START, u);
        let mut here = u;
        let mut expect = vec![(REL_START, u)];
        for _ in 0..3 {
            let cands = g.neighbors(here).unwrap().to_vec();
            let dist = action_distribution(&params, &table, &state, &cands, None);
            let best = (0..dist.len())
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]))
                .unwrap();
            let (r, e) = cands[best];
            expect.push((r, e));
            state = encode_step(&params, &table, &state, r, e);
            here = e;
        }
        assert_eq!(beams[0].steps, expect);
    }

    #[test]
    fn dedup_keeps_highest_probability_per_item() {
        let g = tiny_graph(&[("u", "i"), ("v", "j")], &[]);
        let i = g.entity_id("i").unwrap();
        let u = g.entity_id("u").unwrap();
        let mk = |lp: f64, t: EntityId| ScoredPath {
            steps: vec![(REL_START, u), (crate::graph::REL_INTERACT, t)],
            log_prob: lp,
        };
        let a = g.entity_id("v").unwrap(); // a user terminal: dropped
        let out = dedup(vec![mk(-2.0, i), mk(-1.0, i), mk(-0.5, a)], &g);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].log_prob, -1.0);
        assert_eq!(out[0].terminal(), i);
    }

    #[test]
    fn dedup_distinct_terminals_unchanged() {
        let g = tiny_graph(&[("u", "i"), ("u", "j")], &[]);
        let u = g.entity_id("u").unwrap();
        let i = g.entity_id("i").unwrap();
        let j = g.entity_id("j").unwrap();
        let mk = |lp: f64, t: EntityId| ScoredPath {
            steps: vec![(REL_START, u), (crate::graph::REL_INTERACT, t)],
            log_prob: lp,
        };
        let out = dedup(vec![mk(-1.0, i), mk(-2.0, j)], &g);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn rank_strategies_can_disagree() {
        let g = tiny_graph(&[("u", "a"), ("v", "b")], &[]);
        let u = g.entity_id("u").unwrap();
        let a = g.entity_id("a").unwrap();
        let b = g.entity_id("b").unwrap();
        // paths: a at logprob -1, b at -2
        let mk = |lp: f64, t: EntityId| ScoredPath {
            steps: vec![(REL_START, u), (crate::graph::REL_INTERACT, t)],
            log_prob: lp,
        };
        let paths = vec![mk(-1.0, a), mk(-2.0, b)];
        // embeddings engineered so sigma(psi(u,b)) > sigma(psi(u,a)):
        // d=1, e_u=1, r_interact=1, e_a=-1, e_b=+2
        let mut table = EmbeddingTable::init(g.num_entities(), g.num_relations(), 1, 0);
        table.entity[u.idx()] = 1.0;
        table.entity[a.idx()] = -1.0;
        table.entity[b.idx()] = 2.0;
        table.relation[crate::graph::REL_INTERACT.idx()] = 1.0;
        let m = ScoreModel::new(table);
        let none = HashSet::new();
        let by_path = rank(&paths, RankStrategy::PathProb, &m, u, 10, &none);
        let by_reward = rank(&paths, RankStrategy::Reward, &m, u, 10, &none);
        assert_eq!(by_path.entries[0].item, a);
        assert_eq!(by_reward.entries[0].item, b);
        // scores non-increasing
        for w in by_reward.entries.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn rank_excludes_and_flags_short_lists() {
        let g = tiny_graph(&[("u", "a"), ("v", "b")], &[]);
        let u = g.entity_id("u").unwrap();
        let a = g.entity_id("a").unwrap();
        let mk = |lp: f64, t: EntityId| ScoredPath {
            steps: vec![(REL_START, u), (crate::graph::REL_INTERACT, t)],
            log_prob: lp,
        };
        let m = ScoreModel::new(EmbeddingTable::init(g.num_entities(), g.num_relations(), 2, 1));
        let excl: HashSet<EntityId> = [a].into();
        let out = rank(&[mk(-1.0, a)], RankStrategy::PathProb, &m, u, 10, &excl);
        assert!(out.entries.is_empty());
        assert!(out.short);
    }

    #[test]
    fn top_k_is_prefix_of_top_k_plus_one() {
        let g = tiny_graph(&[("u", "a"), ("u", "b"), ("u", "c")], &[]);
        let u = g.entity_id("u").unwrap();
        let mk = |lp: f64, label: &str| ScoredPath {
            steps: vec![
                (REL_START, u),
                (crate::graph::REL_INTERACT, g.entity_id(label).unwrap()),
            ],
            log_prob: lp,
        };
        let paths = vec![mk(-3.0, "c"), mk(-1.0, "a"), mk(-2.0, "b")];
        let m = ScoreModel::new(EmbeddingTable::init(g.num_entities(), g.num_relations(), 2, 2));
        let none = HashSet::new();
        for k in 1..3 {
            let small = rank(&paths, RankStrategy::PathProb, &m, u, k, &none);
            let big = rank(&paths, RankStrategy::PathProb, &m, u, k + 1, &none);
            let small_items: Vec<EntityId> = small.entries.iter().map(|e| e.item).collect();
            let big_items: Vec<EntityId> = big.entries.iter().map(|e| e.item).collect();
            assert_eq!(small_items[..], big_items[..k.min(big_items.len())]);
        }
    }

    #[test]
    fn self_loops_stripped_from_explanation() {
        let g = tiny_graph(&[("u", "i")], &[]);
        let u = g.entity_id("u").unwrap();
        let i = g.entity_id("i").unwrap();
        let steps = vec![
            (REL_START, u),
            (crate::graph::REL_INTERACT, i),
            (REL_SELF_LOOP, i),
            (REL_SELF_LOOP, i),
        ];
        let stripped = strip_self_loops(&steps);
        assert_eq!(stripped.len(), 2);
        let rendered = render_path(&g, &steps);
        assert_eq!(rendered, "u --Interact--> i");
    }

    #[test]
    fn beam_is_deterministic() {
        let g = tiny_graph(
            &[("u", "i1"), ("u", "i2"), ("v", "i1")],
            &[("i1", "HasGenre", "a")],
        );
        let table = EmbeddingTable::init(g.num_entities(), g.num_relations(), 4, 5);
        let params = PolicyParams::init(4, 8, 6);
        let u = g.entity_id("u").unwrap();
        let a = beam_search(&g, &params, &table, u, 3, 8, 512, 7).unwrap();
        let b = beam_search(&g, &params, &table, u, 3, 8, 512, 7).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.steps, y.steps);
            assert_eq!(x.log_prob, y.log_prob);
        }
    }
}
