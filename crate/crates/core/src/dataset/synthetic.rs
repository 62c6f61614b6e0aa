//! Synthetic implicit-feedback logs with planted preference blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RawInteraction;
use crate::rng;

/// Users and items are split into `blocks` equal groups, and each group
/// into `sub_blocks` equal subgroups. A user interacts with items of their
/// own subgroup with probability `in_sub`, with the rest of their group
/// with probability `in_block`, and with any other item with probability
/// `out_block`. With `sub_blocks = 1` this is a plain block model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedBlocks {
    pub users: usize,
    pub items: usize,
    pub blocks: usize,
    pub sub_blocks: usize,
    pub in_sub: f64,
    pub in_block: f64,
    pub out_block: f64,
    pub seed: u64,
}

impl Default for PlantedBlocks {
    fn default() -> Self {
        Self {
            users: 100,
            items: 200,
            blocks: 5,
            sub_blocks: 4,
            in_sub: 0.8,
            in_block: 0.1,
            out_block: 0.01,
            seed: 2023,
        }
    }
}

impl PlantedBlocks {
    pub fn block_of_user(&self, u: usize) -> usize {
        u * self.blocks / self.users
    }

    pub fn block_of_item(&self, i: usize) -> usize {
        i * self.blocks / self.items
    }

    /// Subgroup index over all groups, `0..blocks * sub_blocks`.
    pub fn sub_block_of_user(&self, u: usize) -> usize {
        u * self.blocks * self.sub_blocks / self.users
    }

    pub fn sub_block_of_item(&self, i: usize) -> usize {
        i * self.blocks * self.sub_blocks / self.items
    }

    pub fn probability(&self, u: usize, i: usize) -> f64 {
        if self.sub_block_of_user(u) == self.sub_block_of_item(i) {
            self.in_sub
        } else if self.block_of_user(u) == self.block_of_item(i) {
            self.in_block
        } else {
            self.out_block
        }
    }

    pub fn generate(&self) -> Vec<RawInteraction> {
        let mut rng = rng::stream(self.seed, "synthetic", 0);
        let mut rows = Vec::new();
        for u in 0..self.users {
            for i in 0..self.items {
                if rng.random::<f64>() < self.probability(u, i) {
                    rows.push(RawInteraction {
                        user_token: format!("u{u}"),
                        item_token: format!("i{i}"),
                        rating: None,
                        timestamp: None,
                    });
                }
            }
        }
        rows
    }

    /// The log as `user item` text lines.
    pub fn to_text(&self) -> String {
        self.generate()
            .iter()
            .map(|r| format!("{} {}\n", r.user_token, r.item_token))
            .collect()
    }
}
