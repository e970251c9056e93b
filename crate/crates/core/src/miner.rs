//! Frequent-itemset mining with Apriori.
//!
//! Levels are generated by joining frequent `(k-1)`-itemsets that share a
//! `(k-2)`-prefix, pruned by downward closure. Candidate supports are counted
//! by intersecting per-itemset transaction bitsets, so counts stay exact
//! integers and ratios are derived only at the end.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::transactions::{ItemId, TransactionDatabase};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequentItemset {
    pub items: Vec<ItemId>,
    pub support_count: usize,
    pub support_ratio: f64,
}

/// Per-position occurrence counts over all transactions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyGrid {
    pub grid_h: usize,
    pub grid_w: usize,
    pub transaction_count: usize,
    pub counts: Vec<u32>,
}

impl FrequencyGrid {
    /// `counts[p] / N`; zero everywhere for an empty database.
    pub fn ratio(&self, p: usize) -> f64 {
        if self.transaction_count == 0 {
            0.0
        } else {
            self.counts[p] as f64 / self.transaction_count as f64
        }
    }

    pub fn ratios(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|p| self.ratio(p)).collect()
    }

    pub fn is_frequent(&self, p: usize, alpha: f64) -> bool {
        is_frequent(self.counts[p] as usize, self.transaction_count, alpha)
    }
}

/// `count / n >= alpha`, the single definition of "frequent" used everywhere.
pub fn is_frequent(count: usize, n: usize, alpha: f64) -> bool {
    n > 0 && count as f64 / n as f64 >= alpha
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("alpha must be in (0, 1], got {alpha}")))
    }
}

fn normalized_itemset(db: &TransactionDatabase, itemset: &[ItemId]) -> Result<Vec<ItemId>> {
    let universe = db.item_universe_size();
    if let Some(&bad) = itemset.iter().find(|&&i| i as usize >= universe) {
        return Err(Error::Argument(format!(
            "item {bad} outside universe of {universe}"
        )));
    }
    let mut items = itemset.to_vec();
    items.sort_unstable();
    items.dedup();
    Ok(items)
}

/// Number of transactions containing every item of `itemset`.
pub fn support_count(db: &TransactionDatabase, itemset: &[ItemId]) -> Result<usize> {
    let items = normalized_itemset(db, itemset)?;
    Ok(db
        .transactions()
        .iter()
        .filter(|t| items.iter().all(|i| t.binary_search(i).is_ok()))
        .count())
}

/// Fraction of transactions containing `itemset`.
pub fn support(db: &TransactionDatabase, itemset: &[ItemId]) -> Result<f64> {
    if db.is_empty() {
        return Err(Error::Argument("support is undefined on an empty database".into()));
    }
    Ok(support_count(db, itemset)? as f64 / db.len() as f64)
}

/// Counts each item's occurrences. Partitioned over transactions.
pub fn item_frequencies(db: &TransactionDatabase) -> FrequencyGrid {
    let universe = db.item_universe_size();
    let counts = db
        .transactions()
        .par_chunks(64)
        .fold(
            || vec![0u32; universe],
            |mut acc, chunk| {
                for t in chunk {
                    for &i in t {
                        acc[i as usize] += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u32; universe],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    FrequencyGrid {
        grid_h: db.grid_h(),
        grid_w: db.grid_w(),
        transaction_count: db.len(),
        counts,
    }
}

/// Bitset over transaction indices.
#[derive(Debug, Clone)]
struct Tidset(Vec<u64>);

impl Tidset {
    fn intersect(&self, other: &Tidset) -> Tidset {
        Tidset(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
}

struct LevelEntry {
    items: Vec<ItemId>,
    tids: Tidset,
}

/// All itemsets with support ratio `>= alpha`, up to `max_len` items.
///
/// Output is ordered by size, then lexicographically by items.
pub fn mine_frequent(
    db: &TransactionDatabase,
    alpha: f64,
    max_len: Option<usize>,
) -> Result<Vec<FrequentItemset>> {
    check_alpha(alpha)?;
    let n = db.len();
    let max_len = max_len.unwrap_or(usize::MAX);
    if n == 0 || max_len == 0 {
        return Ok(Vec::new());
    }
    let ratio = |count: usize| count as f64 / n as f64;

    let freq = item_frequencies(db);
    let frequent_items: Vec<ItemId> = (0..freq.counts.len())
        .filter(|&p| freq.is_frequent(p, alpha))
        .map(|p| p as ItemId)
        .collect();
    let mut out: Vec<FrequentItemset> = frequent_items
        .iter()
        .map(|&i| {
            let count = freq.counts[i as usize] as usize;
            FrequentItemset {
                items: vec![i],
                support_count: count,
                support_ratio: ratio(count),
            }
        })
        .collect();
    if max_len == 1 || frequent_items.len() < 2 {
        return Ok(out);
    }

    // Vertical layout for the frequent items only.
    let words = n.div_ceil(64);
    let mut slot = vec![usize::MAX; db.item_universe_size()];
    for (k, &i) in frequent_items.iter().enumerate() {
        slot[i as usize] = k;
    }
    let mut tidsets = vec![Tidset(vec![0u64; words]); frequent_items.len()];
    for (t, items) in db.transactions().iter().enumerate() {
        for &i in items {
            let k = slot[i as usize];
            if k != usize::MAX {
                tidsets[k].0[t / 64] |= 1 << (t % 64);
            }
        }
    }
    let mut level: Vec<LevelEntry> = frequent_items
        .iter()
        .zip(tidsets)
        .map(|(&i, tids)| LevelEntry { items: vec![i], tids })
        .collect();

    let mut size = 1;
    while size < max_len && level.len() > 1 {
        size += 1;
        let next = next_level(&level, alpha, n);
        out.extend(next.iter().map(|e| {
            let count = e.tids.count();
            FrequentItemset {
                items: e.items.clone(),
                support_count: count,
                support_ratio: ratio(count),
            }
        }));
        level = next;
    }
    Ok(out)
}

/// Joins a lexicographically sorted level into the next one.
fn next_level(level: &[LevelEntry], alpha: f64, n: usize) -> Vec<LevelEntry> {
    let prefix_len = level[0].items.len() - 1;
    let contains = |items: &[ItemId]| {
        level
            .binary_search_by(|e| e.items.as_slice().cmp(items))
            .is_ok()
    };
    let per_left: Vec<Vec<LevelEntry>> = (0..level.len())
        .into_par_iter()
        .map(|i| {
            let a = &level[i];
            let mut found = Vec::new();
            for b in level[i + 1..]
                .iter()
                .take_while(|b| b.items[..prefix_len] == a.items[..prefix_len])
            {
                let mut cand = a.items.clone();
                cand.push(*b.items.last().unwrap());
                // Subsets dropping either of the last two items are `a` and `b`.
                let mut subset = Vec::with_capacity(prefix_len + 1);
                let closed = (0..prefix_len).all(|skip| {
                    subset.clear();
                    subset.extend(
                        cand.iter()
                            .enumerate()
                            .filter(|&(k, _)| k != skip)
                            .map(|(_, &v)| v),
                    );
                    contains(&subset)
                });
                if !closed {
                    continue;
                }
                let tids = a.tids.intersect(&b.tids);
                if is_frequent(tids.count(), n, alpha) {
                    found.push(LevelEntry { items: cand, tids });
                }
            }
            found
        })
        .collect();
    per_left.into_iter().flatten().collect()
}
