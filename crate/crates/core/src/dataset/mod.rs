//! Interaction logs: parsing, rating thresholding, k-core filtering, dense id
//! maps and per-user train/validation/test splits.

mod io;
pub mod synthetic;

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::rng;

pub use io::{load_split, write_split, ID_MAP_FILE};
pub use synthetic::PlantedBlocks;

pub type ContextId = u32;
pub type ItemId = u32;

/// One row of a raw log, before id mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub user_token: String,
    pub item_token: String,
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

/// Positivity rule applied to rated rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingThreshold {
    pub value: f64,
    /// `true` keeps `rating >= value`, `false` keeps `rating > value`.
    #[serde(default = "default_inclusive")]
    pub inclusive: bool,
}

fn default_inclusive() -> bool {
    true
}

impl RatingThreshold {
    pub fn inclusive(value: f64) -> Self {
        Self { value, inclusive: true }
    }

    pub fn strict(value: f64) -> Self {
        Self { value, inclusive: false }
    }

    fn keeps(&self, rating: f64) -> bool {
        if self.inclusive {
            rating >= self.value
        } else {
            rating > self.value
        }
    }
}

/// Parses whitespace-separated `user item [rating] [timestamp]` lines.
///
/// Blank lines and lines starting with `#` are skipped. Rows whose rating
/// fails `threshold` are dropped; rows without a rating are always kept.
pub fn parse_interactions<R: BufRead>(
    reader: R,
    threshold: Option<RatingThreshold>,
) -> Result<Vec<RawInteraction>> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if !(2..=4).contains(&fields.len()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 to 4 fields, found {}", fields.len()),
            });
        }
        let rating = match fields.get(2) {
            Some(raw) => {
                let r: f64 = raw.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("rating {raw:?} is not a number"),
                })?;
                if !r.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("rating {raw:?} is not finite"),
                    });
                }
                Some(r)
            }
            None => None,
        };
        let timestamp = match fields.get(3) {
            Some(raw) => Some(raw.parse::<i64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("timestamp {raw:?} is not an integer"),
            })?),
            None => None,
        };
        if let (Some(t), Some(r)) = (threshold, rating) {
            if !t.keeps(r) {
                continue;
            }
        }
        rows.push(RawInteraction {
            user_token: fields[0].to_string(),
            item_token: fields[1].to_string(),
            rating,
            timestamp,
        });
    }
    Ok(rows)
}

/// Drops repeated (user, item) rows, keeping the first occurrence.
pub fn dedup_interactions(rows: Vec<RawInteraction>) -> Vec<RawInteraction> {
    let mut seen = HashSet::new();
    rows.into_iter()
        .filter(|r| seen.insert((r.user_token.clone(), r.item_token.clone())))
        .collect()
}

/// Maximal sub-log in which every user and every item has at least `k`
/// interactions. Duplicate pairs are removed first; row order is preserved.
pub fn k_core_filter(rows: Vec<RawInteraction>, k: usize) -> Vec<RawInteraction> {
    let rows = dedup_interactions(rows);
    if k <= 1 {
        return rows;
    }

    let mut user_ix: HashMap<&str, usize> = HashMap::new();
    let mut item_ix: HashMap<&str, usize> = HashMap::new();
    let edges: Vec<(usize, usize)> = rows
        .iter()
        .map(|r| {
            let nu = user_ix.len();
            let u = *user_ix.entry(r.user_token.as_str()).or_insert(nu);
            let ni = item_ix.len();
            let i = *item_ix.entry(r.item_token.as_str()).or_insert(ni);
            (u, i)
        })
        .collect();

    let mut user_edges = vec![Vec::new(); user_ix.len()];
    let mut item_edges = vec![Vec::new(); item_ix.len()];
    for (e, &(u, i)) in edges.iter().enumerate() {
        user_edges[u].push(e);
        item_edges[i].push(e);
    }
    let mut user_deg: Vec<usize> = user_edges.iter().map(Vec::len).collect();
    let mut item_deg: Vec<usize> = item_edges.iter().map(Vec::len).collect();
    let mut alive = vec![true; edges.len()];
    let mut user_gone = vec![false; user_deg.len()];
    let mut item_gone = vec![false; item_deg.len()];

    // Work list of (is_user, node) whose degree dropped below k.
    let mut queue: Vec<(bool, usize)> = Vec::new();
    for (u, &d) in user_deg.iter().enumerate() {
        if d < k {
            queue.push((true, u));
        }
    }
    for (i, &d) in item_deg.iter().enumerate() {
        if d < k {
            queue.push((false, i));
        }
    }

    while let Some((is_user, node)) = queue.pop() {
        let (gone, incident) = if is_user {
            (&mut user_gone[node], &user_edges[node])
        } else {
            (&mut item_gone[node], &item_edges[node])
        };
        if *gone {
            continue;
        }
        *gone = true;
        for &e in incident {
            if !alive[e] {
                continue;
            }
            alive[e] = false;
            let (u, i) = edges[e];
            if is_user {
                item_deg[i] -= 1;
                if item_deg[i] < k && !item_gone[i] {
                    queue.push((false, i));
                }
            } else {
                user_deg[u] -= 1;
                if user_deg[u] < k && !user_gone[u] {
                    queue.push((true, u));
                }
            }
        }
    }

    rows.into_iter()
        .zip(alive)
        .filter_map(|(r, keep)| keep.then_some(r))
        .collect()
}

/// Bijection between external tokens and dense indices, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(invalid("empty token in id map"));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(invalid(format!("duplicate token {t:?} in id map")));
            }
        }
        Ok(Self { tokens, index })
    }

    fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// User and item id maps shared by the three splits of one dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub users: IdMap,
    pub items: IdMap,
}

#[derive(Serialize, Deserialize)]
struct IdMapsFile {
    users: Vec<String>,
    items: Vec<String>,
}

impl IdMaps {
    pub fn to_json(&self) -> Result<String> {
        let file = IdMapsFile {
            users: self.users.tokens.clone(),
            items: self.items.tokens.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: IdMapsFile = serde_json::from_str(text)?;
        Ok(Self {
            users: IdMap::from_tokens(file.users)?,
            items: IdMap::from_tokens(file.items)?,
        })
    }

    /// Hex SHA-256 over both token lists; checkpoints carry it so a model is
    /// never scored against a dataset with a different id assignment.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (tag, map) in [("users", &self.users), ("items", &self.items)] {
            h.update(tag.as_bytes());
            h.update((map.len() as u64).to_le_bytes());
            for t in &map.tokens {
                h.update((t.len() as u64).to_le_bytes());
                h.update(t.as_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Valid,
    Test,
}

impl Role {
    pub fn file_stem(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Valid => "valid",
            Role::Test => "test",
        }
    }
}

/// Immutable per-context positive sets over dense ids.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSet {
    num_contexts: usize,
    num_items: usize,
    positives: Vec<Vec<ItemId>>,
    role: Role,
    id_maps: Arc<IdMaps>,
}

impl InteractionSet {
    /// Builds a set from per-context item lists; lists are sorted and deduplicated.
    pub fn new(
        num_contexts: usize,
        num_items: usize,
        mut positives: Vec<Vec<ItemId>>,
        role: Role,
        id_maps: Arc<IdMaps>,
    ) -> Result<Self> {
        if positives.len() != num_contexts {
            return Err(invalid(format!(
                "{} positive lists for {num_contexts} contexts",
                positives.len()
            )));
        }
        for list in &mut positives {
            list.sort_unstable();
            list.dedup();
            if let Some(&last) = list.last() {
                if last as usize >= num_items {
                    return Err(invalid(format!("item id {last} >= num_items {num_items}")));
                }
            }
        }
        Ok(Self { num_contexts, num_items, positives, role, id_maps })
    }

    /// Set with anonymous id maps (`u<n>` / `i<n>` tokens).
    pub fn from_lists(num_items: usize, positives: Vec<Vec<ItemId>>, role: Role) -> Result<Self> {
        let maps = IdMaps {
            users: IdMap::from_tokens((0..positives.len()).map(|u| format!("u{u}")).collect())?,
            items: IdMap::from_tokens((0..num_items).map(|i| format!("i{i}")).collect())?,
        };
        Self::new(positives.len(), num_items, positives, role, Arc::new(maps))
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn id_maps(&self) -> &Arc<IdMaps> {
        &self.id_maps
    }

    /// Sorted positives of context `c`.
    pub fn positives(&self, c: ContextId) -> &[ItemId] {
        &self.positives[c as usize]
    }

    pub fn is_positive(&self, c: ContextId, item: ItemId) -> bool {
        self.positives(c).binary_search(&item).is_ok()
    }

    pub fn num_interactions(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }

    /// All (context, item) positive pairs, context-major.
    pub fn pairs(&self) -> impl Iterator<Item = (ContextId, ItemId)> + '_ {
        self.positives
            .iter()
            .enumerate()
            .flat_map(|(c, items)| items.iter().map(move |&i| (c as ContextId, i)))
    }

    /// Interaction count per item.
    pub fn item_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_items];
        for items in &self.positives {
            for &i in items {
                counts[i as usize] += 1;
            }
        }
        counts
    }

    /// Per-context union with `other`, which must share the id space.
    pub fn union(&self, other: &InteractionSet) -> Result<InteractionSet> {
        if self.num_contexts != other.num_contexts || self.num_items != other.num_items {
            return Err(invalid("union of interaction sets with different shapes"));
        }
        let merged = self
            .positives
            .iter()
            .zip(&other.positives)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        Self::new(self.num_contexts, self.num_items, merged, self.role, self.id_maps.clone())
    }
}

/// Items of context `c` that are not positives, ascending.
pub fn negatives_of(set: &InteractionSet, c: ContextId) -> impl Iterator<Item = ItemId> + '_ {
    let pos = set.positives(c);
    let mut next = 0usize;
    (0..set.num_items() as ItemId).filter(move |&item| {
        while next < pos.len() && pos[next] < item {
            next += 1;
        }
        !(next < pos.len() && pos[next] == item)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub valid_fraction_of_train: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_fraction: 0.8, valid_fraction_of_train: 0.1, seed: 0 }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid(format!("train_fraction {} not in (0,1)", self.train_fraction)));
        }
        if !(self.valid_fraction_of_train >= 0.0 && self.valid_fraction_of_train < 1.0) {
            return Err(invalid(format!(
                "valid_fraction_of_train {} not in [0,1)",
                self.valid_fraction_of_train
            )));
        }
        Ok(())
    }

    /// (train-side, of which valid) counts for a user with `n` items.
    pub fn counts(&self, n: usize) -> (usize, usize) {
        let train_side = if n <= 1 {
            n
        } else {
            ((n as f64 * self.train_fraction).round() as usize).clamp(1, n - 1)
        };
        let valid = (train_side as f64 * self.valid_fraction_of_train).floor() as usize;
        (train_side, valid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: InteractionSet,
    pub valid: InteractionSet,
    pub test: InteractionSet,
}

impl Split {
    pub fn id_maps(&self) -> &Arc<IdMaps> {
        self.train.id_maps()
    }

    pub fn get(&self, role: Role) -> &InteractionSet {
        match role {
            Role::Train => &self.train,
            Role::Valid => &self.valid,
            Role::Test => &self.test,
        }
    }
}

/// Maps tokens to dense ids and splits every user's items.
///
/// Per user, items are shuffled with the `dataset-split` stream, the first
/// `train_side` go to the training side and the rest to test; the first
/// `valid` of the training side form the validation set.
pub fn build_and_split(rows: &[RawInteraction], cfg: &SplitConfig) -> Result<Split> {
    cfg.validate()?;
    if rows.is_empty() {
        return Err(invalid("no interactions left to split"));
    }
    let mut maps = IdMaps::default();
    let mut per_user: Vec<Vec<ItemId>> = Vec::new();
    let mut seen = HashSet::new();
    for r in rows {
        if r.user_token.is_empty() || r.item_token.is_empty() {
            return Err(invalid("empty user or item token"));
        }
        let u = maps.users.intern(&r.user_token) as usize;
        let i = maps.items.intern(&r.item_token);
        if u == per_user.len() {
            per_user.push(Vec::new());
        }
        if seen.insert((u, i)) {
            per_user[u].push(i);
        }
    }

    let mut rng = rng::stream(cfg.seed, rng::SPLIT_STREAM, 0);
    let mut train = Vec::with_capacity(per_user.len());
    let mut valid = Vec::with_capacity(per_user.len());
    let mut test = Vec::with_capacity(per_user.len());
    for mut items in per_user {
        items.shuffle(&mut rng);
        let (train_side, n_valid) = cfg.counts(items.len());
        let test_part = items.split_off(train_side);
        let train_part = items.split_off(n_valid);
        valid.push(items);
        train.push(train_part);
        test.push(test_part);
    }

    let maps = Arc::new(maps);
    let nc = maps.users.len();
    let ni = maps.items.len();
    Ok(Split {
        train: InteractionSet::new(nc, ni, train, Role::Train, maps.clone())?,
        valid: InteractionSet::new(nc, ni, valid, Role::Valid, maps.clone())?,
        test: InteractionSet::new(nc, ni, test, Role::Test, maps)?,
    })
}
