//! Shared fixtures for the integration suites: a planted-pattern graph
//! where each user's held-out item is reachable only through a 3-hop
//! user → item → attribute → item walk, plus a uniform-random-walk
//! ranking baseline.
//!
//! Each integration target uses a subset of these helpers.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::Path;

use ekar::graph::{build_graph, EntityId, GraphInput, IntegratedGraph};

/// Small config for CLI-level tests: tiny widths and epoch counts keep
/// the full pipeline under a second.
#[allow(dead_code)]
pub const DEMO_CONFIG: &str = "\
dim = 8
hidden = 8
epochs = 3
kge_epochs = 5
batch = 16
beam = 8
k = 5
max_fanout = 64
";

/// Writes a deterministic toy dataset (8 users x 5 events over 10 items,
/// three genres) for exercising the command-line pipeline.
#[allow(dead_code)]
pub fn write_demo_dataset(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let mut interactions = String::new();
    for u in 0..8 {
        for j in 0..5 {
            interactions.push_str(&format!("user{u}\titem{}\n", (u + j) % 10));
        }
    }
    std::fs::write(dir.join("interactions.tsv"), interactions).unwrap();
    let mut triplets = String::new();
    for i in 0..10 {
        triplets.push_str(&format!("item{i}\tGenre\tgenre{}\n", i % 3));
    }
    std::fs::write(dir.join("triplets.tsv"), triplets).unwrap();
}

pub const PLANTED_USERS: usize = 30;
pub const PLANTED_ITEMS: usize = 40;
pub const PLANTED_ATTRS: usize = 20;

/// Number of decoy items; they sit on every bridge attribute.
const DECOYS: usize = 19;

pub struct Planted {
    pub graph: IntegratedGraph,
    /// user id -> the single held-out item id.
    pub test_items: HashMap<EntityId, EntityId>,
}

/// Ten groups `g` of three users who all interact with item `x{g}` plus
/// one hub item `h0` shared by every user (two interactions per user,
/// so an epoch covers sixty episodes and the logged reward means are
/// smooth, and other groups' items become reachable competitors).
/// Each group's held-out item `y{g}` hangs off a group-private bridge
/// attribute `b{g}` shared with `x{g}`, so with T=3 it is reachable only
/// through the planted user → item → attribute → item walk. Every bridge
/// also carries all twenty decoy items, and a second thin attribute
/// `t{g}` on `x{g}` carries decoys d10..d19, so those ten decoys have
/// strictly more uniform-random-walk mass than `y{g}` (two attribute
/// paths versus one) and push it out of the walk baseline's top ten.
///
/// The held-out item is the unique never-interacted item whose embedding
/// the score model aligns with the user's item through their private
/// bridge; the decoys sit on every bridge and wash out. With reward
/// shaping the terminal σ singles `y{g}` out of the many reachable
/// never-interacted candidates; without it every such candidate earns
/// reward 0 and supplies no ordering gradient at all.
pub fn planted_fixture() -> Planted {
    let mut interactions: Vec<(String, String)> = Vec::new();
    let mut held_out: Vec<(String, String)> = Vec::new();
    for g in 0..10 {
        for i in 0..3 {
            interactions.push((format!("u{g}_{i}"), format!("x{g}")));
            interactions.push((format!("u{g}_{i}"), "h0".into()));
            held_out.push((format!("u{g}_{i}"), format!("y{g}")));
        }
    }

    let mut triplets: Vec<(String, String, String)> = Vec::new();
    for g in 0..10 {
        triplets.push((format!("x{g}"), "HasAttr".into(), format!("b{g}")));
        triplets.push((format!("y{g}"), "HasAttr".into(), format!("b{g}")));
        triplets.push((format!("x{g}"), "HasAttr".into(), format!("t{g}")));
        for d in 0..DECOYS {
            triplets.push((format!("d{d}"), "HasAttr".into(), format!("b{g}")));
            if d >= DECOYS / 2 {
                triplets.push((format!("d{d}"), "HasAttr".into(), format!("t{g}")));
            }
        }
    }

    // Decoys and held-out items never appear in a training interaction
    // but must still be items.
    let extra_items: Vec<String> = (0..DECOYS)
        .map(|d| format!("d{d}"))
        .chain((0..10).map(|g| format!("y{g}")))
        .collect();

    let graph = build_graph(GraphInput {
        interactions: &interactions,
        triplets: &triplets,
        matches: &HashMap::new(),
        extra_items: &extra_items,
    })
    .expect("planted fixture graph");
    assert_eq!(graph.users().count(), PLANTED_USERS);
    assert_eq!(graph.items().count(), PLANTED_ITEMS);
    assert_eq!(
        graph.num_entities() - PLANTED_USERS - PLANTED_ITEMS,
        PLANTED_ATTRS
    );

    let test_items = held_out
        .into_iter()
        .map(|(u, i)| {
            (
                graph.entity_id(&u).expect("fixture user"),
                graph.entity_id(&i).expect("fixture item"),
            )
        })
        .collect();
    Planted { graph, test_items }
}

/// Exact terminal distribution of a `t`-step uniform random walk from `u`;
/// items are ranked by terminal probability (ties by id), with zero-mass
/// and excluded items dropped.
pub fn random_walk_rank(
    graph: &IntegratedGraph,
    u: EntityId,
    t: usize,
    k: usize,
    exclusions: &HashSet<EntityId>,
) -> Vec<EntityId> {
    let n = graph.num_entities();
    let mut dist = vec![0.0f64; n];
    dist[u.idx()] = 1.0;
    for _ in 0..t {
        let mut next = vec![0.0f64; n];
        for (e, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let nbrs = graph.neighbors(EntityId(e as u32)).unwrap();
            let share = p / nbrs.len() as f64;
            for &(_, to) in nbrs {
                next[to.idx()] += share;
            }
        }
        dist = next;
    }
    let mut scored: Vec<(EntityId, f64)> = (0..n as u32)
        .map(EntityId)
        .filter(|&e| graph.is_item(e) && !exclusions.contains(&e) && dist[e.idx()] > 0.0)
        .map(|e| (e, dist[e.idx()]))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored.into_iter().map(|(e, _)| e).collect()
}
