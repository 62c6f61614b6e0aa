//! Split manifests on disk: `train.txt`, `valid.txt`, `test.txt` holding
//! `user_id item_id` dense-index pairs, plus an `id_map.json` sidecar.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{IdMaps, InteractionSet, ItemId, Role, Split};
use crate::error::{Error, Result};

pub const ID_MAP_FILE: &str = "id_map.json";

fn role_path(dir: &Path, role: Role) -> PathBuf {
    dir.join(format!("{}.txt", role.file_stem()))
}

/// Writes the three split files and the id-map sidecar; returns the paths written.
pub fn write_split(dir: &Path, split: &Split) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for role in [Role::Train, Role::Valid, Role::Test] {
        let path = role_path(dir, role);
        let mut out = BufWriter::new(fs::File::create(&path)?);
        for (c, i) in split.get(role).pairs() {
            writeln!(out, "{c} {i}")?;
        }
        out.flush()?;
        written.push(path);
    }
    let path = dir.join(ID_MAP_FILE);
    fs::write(&path, split.id_maps().to_json()?)?;
    written.push(path);
    Ok(written)
}

fn read_pairs(path: &Path, maps: &Arc<IdMaps>, role: Role) -> Result<InteractionSet> {
    let nc = maps.users.len();
    let ni = maps.items.len();
    let mut lists: Vec<Vec<ItemId>> = vec![Vec::new(); nc];
    let reader = BufReader::new(fs::File::open(path)?);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: idx + 1, message };
        let mut it = line.split_whitespace();
        let (Some(c), Some(i), None) = (it.next(), it.next(), it.next()) else {
            return Err(bad(format!("{}: expected `user_id item_id`", path.display())));
        };
        let c: usize = c.parse().map_err(|_| bad(format!("bad user id {c:?}")))?;
        let i: ItemId = i.parse().map_err(|_| bad(format!("bad item id {i:?}")))?;
        if c >= nc || i as usize >= ni {
            return Err(bad(format!("pair ({c}, {i}) outside id maps ({nc} users, {ni} items)")));
        }
        lists[c].push(i);
    }
    InteractionSet::new(nc, ni, lists, role, maps.clone())
}

pub fn load_split(dir: &Path) -> Result<Split> {
    let maps = Arc::new(IdMaps::from_json(&fs::read_to_string(dir.join(ID_MAP_FILE))?)?);
    Ok(Split {
        train: read_pairs(&role_path(dir, Role::Train), &maps, Role::Train)?,
        valid: read_pairs(&role_path(dir, Role::Valid), &maps, Role::Valid)?,
        test: read_pairs(&role_path(dir, Role::Test), &maps, Role::Test)?,
    })
}
