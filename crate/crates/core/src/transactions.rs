//! Conversion of feature channels into a transaction database.
//!
//! Each channel becomes one transaction. A grid position becomes an item of
//! that transaction when its activation is strictly above the channel's mean
//! of positive activations. Item ids are row-major: `y * grid_w + x`.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::FeatureStack;

pub type ItemId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionDatabase {
    grid_h: usize,
    grid_w: usize,
    transactions: Vec<Vec<ItemId>>,
}

impl TransactionDatabase {
    /// Builds a database over a `grid_h x grid_w` item universe.
    ///
    /// Each transaction must be strictly ascending and inside the universe.
    pub fn new(grid_h: usize, grid_w: usize, transactions: Vec<Vec<ItemId>>) -> Result<Self> {
        let universe = grid_h
            .checked_mul(grid_w)
            .filter(|&u| u <= ItemId::MAX as usize + 1)
            .ok_or_else(|| Error::Argument(format!("grid {grid_h}x{grid_w} is too large")))?;
        for (t, items) in transactions.iter().enumerate() {
            if let Some(w) = items.windows(2).find(|w| w[0] >= w[1]) {
                return Err(Error::Argument(format!(
                    "transaction {t} is not strictly ascending ({} then {})",
                    w[0], w[1]
                )));
            }
            if let Some(&last) = items.last() {
                if last as usize >= universe {
                    return Err(Error::Argument(format!(
                        "transaction {t} item {last} outside universe of {universe}"
                    )));
                }
            }
        }
        Ok(TransactionDatabase {
            grid_h,
            grid_w,
            transactions,
        })
    }

    /// A database over a flat universe of `universe` items (a `1 x universe` grid).
    pub fn flat(universe: usize, transactions: Vec<Vec<ItemId>>) -> Result<Self> {
        Self::new(1, universe, transactions)
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn item_universe_size(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn transactions(&self) -> &[Vec<ItemId>] {
        &self.transactions
    }
}

/// Mean of the strictly positive values, or `None` when there are none.
pub fn channel_threshold(channel: &[f32]) -> Option<f64> {
    let (sum, count) = channel
        .iter()
        .filter(|&&v| v > 0.0)
        .fold((0.0f64, 0usize), |(s, n), &v| (s + v as f64, n + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Item ids of the positions strictly above the channel's threshold.
pub fn channel_items(channel: &[f32]) -> Vec<ItemId> {
    match channel_threshold(channel) {
        None => Vec::new(),
        Some(beta) => channel
            .iter()
            .enumerate()
            .filter(|(_, &v)| v as f64 > beta)
            .map(|(i, _)| i as ItemId)
            .collect(),
    }
}

/// One transaction per channel, in channel order. Empty transactions are kept.
pub fn build_transactions(stack: &FeatureStack) -> Result<TransactionDatabase> {
    stack.validate()?;
    let transactions: Vec<Vec<ItemId>> = stack
        .data
        .par_chunks_exact(stack.plane_len())
        .map(channel_items)
        .collect();
    TransactionDatabase::new(stack.height, stack.width, transactions)
}

/// Parses one transaction per line of space-separated item ids.
///
/// Blank lines are empty transactions. Ids within a line are sorted and
/// deduplicated. The universe spans `0..=max_id`.
pub fn parse_transactions_text(text: &str) -> Result<TransactionDatabase> {
    let mut transactions = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut items = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<ItemId>().map_err(|e| {
                    Error::Format(format!("line {}: bad item id `{tok}`: {e}", lineno + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        items.sort_unstable();
        items.dedup();
        transactions.push(items);
    }
    let universe = transactions
        .iter()
        .filter_map(|t| t.last())
        .max()
        .map_or(0, |&m| m as usize + 1);
    TransactionDatabase::flat(universe, transactions)
}

pub fn read_transactions_text(path: impl AsRef<Path>) -> Result<TransactionDatabase> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_transactions_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_mean_of_positives() {
        assert_eq!(channel_threshold(&[0.0, 2.0, 4.0, 0.0]), Some(3.0));
        assert_eq!(channel_threshold(&[0.0; 4]), None);
        assert_eq!(channel_threshold(&[1.0; 4]), Some(1.0));
    }

    #[test]
    fn uniform_channel_yields_empty_transaction() {
        assert!(channel_items(&[1.0; 4]).is_empty());
        assert!(channel_items(&[0.0; 4]).is_empty());
    }

    #[test]
    fn item_id_is_row_major() {
        let s = FeatureStack::new("c", 1, 2, 2, vec![0.0, 2.0, 4.0, 0.0]).unwrap();
        let db = build_transactions(&s).unwrap();
        assert_eq!(db.transactions(), &[vec![2]]);
    }

    #[test]
    fn five_fired_positions_make_five_items() {
        let mut data = vec![0.1f32; 16];
        for p in [1, 4, 6, 9, 15] {
            data[p] = 10.0;
        }
        let s = FeatureStack::new("c", 1, 4, 4, data).unwrap();
        let db = build_transactions(&s).unwrap();
        assert_eq!(db.transactions()[0], vec![1, 4, 6, 9, 15]);
    }

    #[test]
    fn identical_channels_identical_transactions() {
        let plane = [0.0f32, 3.0, 1.0, 5.0, 0.5, 0.0];
        let data: Vec<f32> = plane.iter().copied().cycle().take(6 * 4).collect();
        let s = FeatureStack::new("c", 4, 2, 3, data).unwrap();
        let db = build_transactions(&s).unwrap();
        assert_eq!(db.len(), 4);
        assert!(db.transactions().iter().all(|t| t == &db.transactions()[0]));
    }

    #[test]
    fn empty_transactions_are_counted() {
        let s = FeatureStack::new("c", 3, 1, 2, vec![0.0, 0.0, 1.0, 1.0, 1.0, 3.0]).unwrap();
        let db = build_transactions(&s).unwrap();
        assert_eq!(db.len(), 3);
        assert_eq!(db.transactions(), &[vec![], vec![], vec![1]]);
    }

    #[test]
    fn rejects_unsorted_and_out_of_range() {
        assert!(TransactionDatabase::flat(5, vec![vec![2, 1]]).is_err());
        assert!(TransactionDatabase::flat(5, vec![vec![1, 1]]).is_err());
        assert!(TransactionDatabase::flat(5, vec![vec![5]]).is_err());
    }

    #[test]
    fn text_loader() {
        let db = parse_transactions_text("1 2 7\n4 3 9 3\n\n2 7\n").unwrap();
        assert_eq!(db.len(), 4);
        assert_eq!(db.item_universe_size(), 10);
        assert_eq!(db.transactions()[1], vec![3, 4, 9]);
        assert!(db.transactions()[2].is_empty());
        assert!(parse_transactions_text("1 x\n").is_err());
    }
}
