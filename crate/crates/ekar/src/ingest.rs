//! Raw file parsing, triplet filtering and the per-user 6:2:2 split.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{EkarError, Result};

#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub train: Vec<(String, String)>,
    pub valid: Vec<(String, String)>,
    pub test: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default)]
pub struct IngestStats {
    pub users: usize,
    pub items: usize,
    pub events: usize,
    pub sparsity: f64,
    pub entities: usize,
    pub relations: usize,
    pub triplets: usize,
    pub unmatched_items_removed: usize,
    pub users_dropped: usize,
}

/// Parses a two-column TSV of (user, item) events.
pub fn read_interactions(path: &Path) -> Result<Vec<(String, String)>> {
    read_columns(path, 2).map(|rows| {
        rows.into_iter()
            .map(|mut r| (std::mem::take(&mut r[0]), std::mem::take(&mut r[1])))
            .collect()
    })
}

/// Parses a three-column TSV of (head, relation, tail) triplets.
pub fn read_triplets(path: &Path) -> Result<Vec<(String, String, String)>> {
    read_columns(path, 3).map(|rows| {
        rows.into_iter()
            .map(|mut r| {
                (
                    std::mem::take(&mut r[0]),
                    std::mem::take(&mut r[1]),
                    std::mem::take(&mut r[2]),
                )
            })
            .collect()
    })
}

/// Parses the item->entity matching TSV.
pub fn read_matches(path: &Path) -> Result<HashMap<String, String>> {
    let rows = read_columns(path, 2)?;
    Ok(rows
        .into_iter()
        .map(|mut r| (std::mem::take(&mut r[0]), std::mem::take(&mut r[1])))
        .collect())
}

fn read_columns(path: &Path, ncols: usize) -> Result<Vec<Vec<String>>> {
    let f = std::fs::File::open(path).map_err(|e| EkarError::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| EkarError::io(path, e))?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(|s| s.trim().to_string()).collect();
        if cols.len() != ncols || cols.iter().any(|c| c.is_empty()) {
            return Err(EkarError::data(
                path,
                lineno + 1,
                format!("expected {ncols} tab-separated non-empty columns, got {:?}", line),
            ));
        }
        rows.push(cols);
    }
    Ok(rows)
}

/// Keeps only triplets with head or tail among the item-matched entities.
pub fn filter_triplets(
    triplets: &[(String, String, String)],
    item_entities: &HashSet<String>,
) -> Vec<(String, String, String)> {
    triplets
        .iter()
        .filter(|(h, _, t)| item_entities.contains(h) || item_entities.contains(t))
        .cloned()
        .collect()
}

/// Drops interactions whose item has no KG match; users left with zero
/// events are removed entirely. Returns (kept, removed_events, dropped_users).
pub fn remove_unmatched_items(
    interactions: &[(String, String)],
    matched_items: &HashSet<String>,
) -> (Vec<(String, String)>, usize, usize) {
    let users_before: HashSet<&String> = interactions.iter().map(|(u, _)| u).collect();
    let kept: Vec<(String, String)> = interactions
        .iter()
        .filter(|(_, i)| matched_items.contains(i))
        .cloned()
        .collect();
    let users_after: HashSet<&String> = kept.iter().map(|(u, _)| u).collect();
    let removed = interactions.len() - kept.len();
    let dropped = users_before.len() - users_after.len();
    (kept, removed, dropped)
}

/// Per-user shuffle and 6:2:2 assignment. Duplicate events are collapsed
/// first. valid = floor(0.2 n), test = floor(0.2 n), train = remainder,
/// so every user keeps at least one training event.
pub fn split_interactions(interactions: &[(String, String)], seed: u64) -> DatasetSplit {
    let mut per_user: Vec<(String, Vec<String>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    for (u, i) in interactions {
        if !seen.insert((u.as_str(), i.as_str())) {
            continue;
        }
        let slot = *index.entry(u.clone()).or_insert_with(|| {
            per_user.push((u.clone(), Vec::new()));
            per_user.len() - 1
        });
        per_user[slot].1.push(i.clone());
    }

    let mut split = DatasetSplit::default();
    for (uidx, (user, items)) in per_user.iter_mut().enumerate() {
        // Independent stream per user so the split of one user does not
        // depend on how many events earlier users had.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((uidx as u64 + 1) << 20));
        items.shuffle(&mut rng);
        let n = items.len();
        let n_valid = n / 5;
        let n_test = n / 5;
        let n_train = n - n_valid - n_test;
        for (k, item) in items.iter().enumerate() {
            let pair = (user.clone(), item.clone());
            if k < n_train {
                split.train.push(pair);
            } else if k < n_train + n_valid {
                split.valid.push(pair);
            } else {
                split.test.push(pair);
            }
        }
    }
    split
}

pub fn write_pairs(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| EkarError::io(path, e))?;
    let mut out = String::new();
    for (a, b) in pairs {
        out.push_str(a);
        out.push('\t');
        out.push_str(b);
        out.push('\n');
    }
    f.write_all(out.as_bytes()).map_err(|e| EkarError::io(path, e))
}

pub fn compute_stats(
    interactions: &[(String, String)],
    triplets: &[(String, String, String)],
    removed_events: usize,
    dropped_users: usize,
) -> IngestStats {
    let users: HashSet<&String> = interactions.iter().map(|(u, _)| u).collect();
    let items: HashSet<&String> = interactions.iter().map(|(_, i)| i).collect();
    let mut entities: HashSet<&String> = HashSet::new();
    let mut relations: HashSet<&String> = HashSet::new();
    for (h, r, t) in triplets {
        entities.insert(h);
        entities.insert(t);
        relations.insert(r);
    }
    let denom = (users.len() * items.len()) as f64;
    let sparsity = if denom > 0.0 {
        1.0 - interactions.len() as f64 / denom
    } else {
        0.0
    };
    IngestStats {
        users: users.len(),
        items: items.len(),
        events: interactions.len(),
        sparsity,
        entities: entities.len(),
        relations: relations.len(),
        triplets: triplets.len(),
        unmatched_items_removed: removed_events,
        users_dropped: dropped_users,
    }
}

impl IngestStats {
    pub fn to_tsv(&self) -> String {
        format!(
            "users\t{}\nitems\t{}\nevents\t{}\nsparsity\t{:.4}\nentities\t{}\nrelations\t{}\ntriplets\t{}\nunmatched_events_removed\t{}\nusers_dropped\t{}\n",
            self.users,
            self.items,
            self.events,
            self.sparsity,
            self.entities,
            self.relations,
            self.triplets,
            self.unmatched_items_removed,
            self.users_dropped
        )
    }
}
