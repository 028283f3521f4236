//! Integrated user-item-entity graph.
//!
//! The graph merges the user-item interaction bipartite graph with an
//! item-linked knowledge graph. User-item edges carry the reserved
//! `Interact` relation, every stored edge has its inverse stored too,
//! and every vertex carries a self-loop that acts as the agent's stop
//! action. The structure is immutable after construction.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EkarError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    User,
    Item,
    Attribute,
}

impl EntityKind {
    pub fn letter(self) -> char {
        match self {
            EntityKind::User => 'U',
            EntityKind::Item => 'I',
            EntityKind::Attribute => 'A',
        }
    }
}

/// Reserved relation slots. KG relations and their inverses follow.
pub const REL_INTERACT: RelationId = RelationId(0);
pub const REL_INTERACTED_BY: RelationId = RelationId(1);
pub const REL_SELF_LOOP: RelationId = RelationId(2);
pub const REL_START: RelationId = RelationId(3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// Immutable integrated graph with per-entity sorted adjacency.
#[derive(Debug, Clone)]
pub struct IntegratedGraph {
    adjacency: Vec<Vec<(RelationId, EntityId)>>,
    kinds: Vec<EntityKind>,
    entity_labels: Vec<String>,
    relation_labels: Vec<String>,
    inverse: Vec<u32>,
    interaction_set: HashSet<(u32, u32)>,
    /// Training items per user, sorted.
    user_items: HashMap<u32, Vec<EntityId>>,
    /// Duplicate edges dropped during construction.
    pub duplicates_dropped: usize,
}

/// How to subsample oversized action sets.
#[derive(Debug, Clone, Copy)]
pub enum FanoutMode {
    /// Re-drawn per episode during training.
    Episode(u64),
    /// Fixed per-entity sample at inference time.
    Seeded(u64),
}

pub struct GraphInput<'a> {
    /// Training-split (user_label, item_label) pairs only.
    pub interactions: &'a [(String, String)],
    /// KG triplets as (head_label, relation_label, tail_label).
    pub triplets: &'a [(String, String, String)],
    /// item_label -> entity_label; matched entities merge into the item vertex.
    pub matches: &'a HashMap<String, String>,
    /// Items with no training interactions (held-out only) that must still
    /// exist as Item vertices so they stay reachable through KG edges.
    pub extra_items: &'a [String],
}

pub fn build_graph(input: GraphInput<'_>) -> Result<IntegratedGraph> {
    if input.interactions.is_empty() {
        return Err(EkarError::Config("no interactions supplied".into()));
    }

    // Entity labels of matched items resolve to the item vertex.
    let mut entity_alias: HashMap<&str, &str> = HashMap::new();
    for (item, ent) in input.matches {
        entity_alias.insert(ent.as_str(), item.as_str());
    }

    let mut entity_ids: HashMap<String, u32> = HashMap::new();
    let mut entity_labels: Vec<String> = Vec::new();
    let mut kinds: Vec<EntityKind> = Vec::new();
    let intern_entity = |label: &str, kind: EntityKind,
                             ids: &mut HashMap<String, u32>,
                             labels: &mut Vec<String>,
                             kinds: &mut Vec<EntityKind>|
     -> u32 {
        if let Some(&id) = ids.get(label) {
            return id;
        }
        let id = labels.len() as u32;
        ids.insert(label.to_string(), id);
        labels.push(label.to_string());
        kinds.push(kind);
        id
    };

    // Dense ids in first-seen order: interaction file first, then triplets.
    for (u, i) in input.interactions {
        intern_entity(u, EntityKind::User, &mut entity_ids, &mut entity_labels, &mut kinds);
        intern_entity(i, EntityKind::Item, &mut entity_ids, &mut entity_labels, &mut kinds);
    }
    for i in input.extra_items {
        intern_entity(i, EntityKind::Item, &mut entity_ids, &mut entity_labels, &mut kinds);
    }

    let mut relation_ids: HashMap<String, u32> = HashMap::new();
    let mut relation_labels: Vec<String> = Vec::new();
    let mut inverse: Vec<u32> = Vec::new();
    for (label, inv) in [
        ("Interact", 1u32),
        ("InteractedBy", 0),
        ("Self-loop", 2),
        ("Start", 3),
    ] {
        relation_ids.insert(label.to_string(), relation_labels.len() as u32);
        relation_labels.push(label.to_string());
        inverse.push(inv);
    }

    fn resolve<'a>(alias: &HashMap<&'a str, &'a str>, label: &'a str) -> &'a str {
        alias.get(label).copied().unwrap_or(label)
    }

    let mut edges: HashSet<(u32, u32, u32)> = HashSet::new();
    let mut duplicates = 0usize;
    let mut interaction_set: HashSet<(u32, u32)> = HashSet::new();
    let mut user_items: HashMap<u32, Vec<EntityId>> = HashMap::new();

    for (u, i) in input.interactions {
        let uid = entity_ids[u.as_str()];
        let iid = entity_ids[i.as_str()];
        if edges.insert((uid, REL_INTERACT.0, iid)) {
            edges.insert((iid, REL_INTERACTED_BY.0, uid));
            interaction_set.insert((uid, iid));
            user_items.entry(uid).or_default().push(EntityId(iid));
        } else {
            duplicates += 1;
        }
    }

    for (h, r, t) in input.triplets {
        let hid = intern_entity(
            resolve(&entity_alias, h),
            EntityKind::Attribute,
            &mut entity_ids,
            &mut entity_labels,
            &mut kinds,
        );
        let tid = intern_entity(
            resolve(&entity_alias, t),
            EntityKind::Attribute,
            &mut entity_ids,
            &mut entity_labels,
            &mut kinds,
        );
        let rid = match relation_ids.get(r.as_str()) {
            Some(&id) => id,
            None => {
                // Relation and its inverse occupy adjacent slots.
                let id = relation_labels.len() as u32;
                relation_ids.insert(r.clone(), id);
                relation_labels.push(r.clone());
                relation_labels.push(format!("{r}_inv"));
                inverse.push(id + 1);
                inverse.push(id);
                id
            }
        };
        if edges.insert((hid, rid, tid)) {
            edges.insert((tid, inverse[rid as usize], hid));
        } else {
            duplicates += 1;
        }
    }

    let n = entity_labels.len();
    let mut adjacency: Vec<Vec<(RelationId, EntityId)>> = vec![Vec::new(); n];
    for v in 0..n as u32 {
        adjacency[v as usize].push((REL_SELF_LOOP, EntityId(v)));
    }
    for (h, r, t) in edges {
        adjacency[h as usize].push((RelationId(r), EntityId(t)));
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    for items in user_items.values_mut() {
        items.sort_unstable();
    }

    Ok(IntegratedGraph {
        adjacency,
        kinds,
        entity_labels,
        relation_labels,
        inverse,
        interaction_set,
        user_items,
        duplicates_dropped: duplicates,
    })
}

impl IntegratedGraph {
    pub fn num_entities(&self) -> usize {
        self.kinds.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_labels.len()
    }

    pub fn kind(&self, e: EntityId) -> EntityKind {
        self.kinds[e.idx()]
    }

    pub fn is_item(&self, e: EntityId) -> bool {
        self.kinds[e.idx()] == EntityKind::Item
    }

    /// Full action set of `e`: all outgoing edges including the self-loop,
    /// in (relation, entity) order.
    pub fn neighbors(&self, e: EntityId) -> Result<&[(RelationId, EntityId)]> {
        self.adjacency
            .get(e.idx())
            .map(|v| v.as_slice())
            .ok_or(EkarError::UnknownEntity(e.0))
    }

    /// True iff (u, Interact, i) is a training interaction.
    pub fn is_interaction(&self, u: EntityId, i: EntityId) -> bool {
        self.interaction_set.contains(&(u.0, i.0))
    }

    pub fn interaction_count(&self) -> usize {
        self.interaction_set.len()
    }

    pub fn user_items(&self, u: EntityId) -> &[EntityId] {
        self.user_items.get(&u.0).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn users(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == EntityKind::User)
            .map(|(i, _)| EntityId(i as u32))
    }

    pub fn items(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == EntityKind::Item)
            .map(|(i, _)| EntityId(i as u32))
    }

    pub fn inverse(&self, r: RelationId) -> RelationId {
        RelationId(self.inverse[r.idx()])
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        &self.entity_labels[e.idx()]
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        &self.relation_labels[r.idx()]
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entity_labels
            .iter()
            .position(|l| l == label)
            .map(|i| EntityId(i as u32))
    }

    /// Action set with the fanout cap applied. The self-loop is always
    /// kept; when the set is oversized the remainder is a uniform sample
    /// without replacement, re-drawn per episode during training and
    /// fixed per entity at inference.
    pub fn action_set(
        &self,
        e: EntityId,
        max_fanout: usize,
        mode: FanoutMode,
    ) -> Result<Vec<(RelationId, EntityId)>> {
        let all = self.neighbors(e)?;
        if all.len() <= max_fanout {
            return Ok(all.to_vec());
        }
        let mut rng = match mode {
            FanoutMode::Episode(seed) => ChaCha8Rng::seed_from_u64(seed),
            FanoutMode::Seeded(seed) => {
                ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(e.0 as u64 + 1)))
            }
        };
        let self_loop = (REL_SELF_LOOP, e);
        let mut others: Vec<(RelationId, EntityId)> =
            all.iter().copied().filter(|a| *a != self_loop).collect();
        others.shuffle(&mut rng);
        others.truncate(max_fanout - 1);
        others.push(self_loop);
        others.sort_unstable();
        Ok(others)
    }

    /// Writes a TSV snapshot: version header, entity table, relation
    /// table, interaction pairs, then all non-self-loop edges.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| EkarError::io(path, e))?;
        let mut out = String::new();
        out.push_str("#ekar-graph\tv1\n");
        out.push_str(&format!("#entities\t{}\n", self.num_entities()));
        for (i, label) in self.entity_labels.iter().enumerate() {
            out.push_str(&format!("E\t{}\t{}\t{}\n", i, self.kinds[i].letter(), label));
        }
        out.push_str(&format!("#relations\t{}\n", self.num_relations()));
        for (i, label) in self.relation_labels.iter().enumerate() {
            out.push_str(&format!("R\t{}\t{}\t{}\n", i, self.inverse[i], label));
        }
        for (u, i) in &self.interaction_set {
            out.push_str(&format!("I\t{u}\t{i}\n"));
        }
        for (h, list) in self.adjacency.iter().enumerate() {
            for (r, t) in list {
                if *r != REL_SELF_LOOP {
                    out.push_str(&format!("T\t{}\t{}\t{}\n", h, r.0, t.0));
                }
            }
        }
        f.write_all(out.as_bytes()).map_err(|e| EkarError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| EkarError::io(path, e))?;
        let reader = BufReader::new(f);
        let mut entity_labels = Vec::new();
        let mut kinds = Vec::new();
        let mut relation_labels = Vec::new();
        let mut inverse = Vec::new();
        let mut interaction_set = HashSet::new();
        let mut raw_edges: Vec<(u32, u32, u32)> = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| EkarError::io(path, e))?;
            let mut cols = line.split('\t');
            let tag = cols.next().unwrap_or("");
            if lineno == 0 {
                if tag != "#ekar-graph" {
                    return Err(EkarError::data(path, 1, "missing #ekar-graph header"));
                }
                header_seen = true;
                continue;
            }
            match tag {
                "E" => {
                    let _id = cols.next();
                    let kind = match cols.next() {
                        Some("U") => EntityKind::User,
                        Some("I") => EntityKind::Item,
                        Some("A") => EntityKind::Attribute,
                        _ => return Err(EkarError::data(path, lineno + 1, "bad entity kind")),
                    };
                    let label = cols.next().unwrap_or("").to_string();
                    kinds.push(kind);
                    entity_labels.push(label);
                }
                "R" => {
                    let _id = cols.next();
                    let inv: u32 = cols
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| EkarError::data(path, lineno + 1, "bad inverse id"))?;
                    relation_labels.push(cols.next().unwrap_or("").to_string());
                    inverse.push(inv);
                }
                "I" => {
                    let u: u32 = cols.next().and_then(|s| s.parse().ok()).ok_or_else(|| {
                        EkarError::data(path, lineno + 1, "bad interaction line")
                    })?;
                    let i: u32 = cols.next().and_then(|s| s.parse().ok()).ok_or_else(|| {
                        EkarError::data(path, lineno + 1, "bad interaction line")
                    })?;
                    interaction_set.insert((u, i));
                }
                "T" => {
                    let mut parse = || -> Option<u32> { cols.next().and_then(|s| s.parse().ok()) };
                    match (parse(), parse(), parse()) {
                        (Some(h), Some(r), Some(t)) => raw_edges.push((h, r, t)),
                        _ => return Err(EkarError::data(path, lineno + 1, "bad edge line")),
                    }
                }
                _ if tag.starts_with('#') => {}
                _ => return Err(EkarError::data(path, lineno + 1, format!("unknown tag {tag}"))),
            }
        }
        if !header_seen {
            return Err(EkarError::data(path, 1, "empty file"));
        }
        let n = entity_labels.len();
        let mut adjacency: Vec<Vec<(RelationId, EntityId)>> = vec![Vec::new(); n];
        for v in 0..n as u32 {
            adjacency[v as usize].push((REL_SELF_LOOP, EntityId(v)));
        }
        for (h, r, t) in raw_edges {
            if h as usize >= n || t as usize >= n {
                return Err(EkarError::UnknownEntity(h.max(t)));
            }
            adjacency[h as usize].push((RelationId(r), EntityId(t)));
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let mut user_items: HashMap<u32, Vec<EntityId>> = HashMap::new();
        for (u, i) in &interaction_set {
            user_items.entry(*u).or_default().push(EntityId(*i));
        }
        for items in user_items.values_mut() {
            items.sort_unstable();
        }
        Ok(IntegratedGraph {
            adjacency,
            kinds,
            entity_labels,
            relation_labels,
            inverse,
            interaction_set,
            user_items,
            duplicates_dropped: 0,
        })
    }
}

/// Derives a per-episode fanout seed from a base seed and episode counter.
pub fn episode_seed(base: u64, episode: u64) -> u64 {
    // splitmix64 step
    let mut z = base.wrapping_add(episode.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Convenience for deriving from an rng without consuming graph state.
pub fn draw_seed<R: Rng>(rng: &mut R) -> u64 {
    rng.gen()
}
