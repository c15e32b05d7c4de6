//! Representative interval families.
//!
//! Level `l` merges consecutive runs of `2^l` base intervals (only complete
//! runs, so the tail may stay uncovered). The union of all levels lets any
//! prefix `I_1 ∪ … ∪ I_k` be written with one block per set bit of `k`.

use crate::error::{Error, Result};
use crate::geometry::{Interval, OrderedPartition};

/// One merged block: base intervals `first .. first + len` (0-based) at `level`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub level: u32,
    pub index: usize,
    pub first: usize,
    pub len: usize,
    pub interval: Interval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockId {
    pub level: u32,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelFamily {
    base: OrderedPartition,
    levels: Vec<Vec<Block>>,
}

/// Builds levels `0..=floor(log2 m)` over `base`, `m = |base|`.
pub fn build_levels(base: &OrderedPartition) -> LevelFamily {
    LevelFamily {
        base: base.clone(),
        levels: merge_levels(base.intervals()),
    }
}

fn merge_levels(base: &[Interval]) -> Vec<Vec<Block>> {
    let m = base.len();
    let mut levels = vec![base
        .iter()
        .enumerate()
        .map(|(i, &interval)| Block {
            level: 0,
            index: i,
            first: i,
            len: 1,
            interval,
        })
        .collect::<Vec<_>>()];
    let top_level = usize::BITS - 1 - m.leading_zeros();
    for level in 1..=top_level {
        let below = levels.last().expect("level 0 exists");
        let merged = below
            .chunks_exact(2)
            .enumerate()
            .map(|(q, pair)| Block {
                level,
                index: q,
                first: pair[0].first,
                len: pair[0].len * 2,
                interval: pair[0]
                    .interval
                    .merge(&pair[1].interval)
                    .expect("blocks abut"),
            })
            .collect();
        levels.push(merged);
    }
    levels
}

impl LevelFamily {
    pub fn base(&self) -> &OrderedPartition {
        &self.base
    }

    /// `m`.
    pub fn base_len(&self) -> usize {
        self.base.len()
    }

    pub fn levels(&self) -> &[Vec<Block>] {
        &self.levels
    }

    pub fn block(&self, id: BlockId) -> Option<&Block> {
        self.levels.get(id.level as usize)?.get(id.index)
    }

    /// All blocks of all levels, level by level.
    pub fn star(&self) -> impl Iterator<Item = &Block> {
        self.levels.iter().flatten()
    }

    pub fn star_len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Disjoint blocks, left to right, whose union is the first `k` base intervals.
    pub fn prefix_decompose(&self, k: usize) -> Result<Vec<BlockId>> {
        if k > self.base_len() {
            return Err(Error::ContractViolation(format!(
                "prefix of {k} intervals requested from a partition of {}",
                self.base_len()
            )));
        }
        let mut covered = 0;
        let mut blocks = Vec::with_capacity(k.count_ones() as usize);
        for level in (0..usize::BITS - k.leading_zeros()).rev() {
            let size = 1usize << level;
            if k & size != 0 {
                blocks.push(BlockId {
                    level,
                    index: covered / size,
                });
                covered += size;
            }
        }
        Ok(blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridEndpoint, GridSpec};

    /// `{0}` followed by `m - 1` unit cells on a grid of resolution `m - 1`.
    fn partition(m: usize) -> OrderedPartition {
        let k = (m - 1).next_power_of_two().max(1) as u32;
        let grid = GridSpec::new(1, k).unwrap();
        let mut intervals = vec![Interval::degenerate_zero()];
        let cells = m as u32 - 1;
        for i in 0..cells {
            let hi = if i + 1 == cells { k } else { i + 1 };
            intervals.push(Interval::half_open(GridEndpoint(i), GridEndpoint(hi)).unwrap());
        }
        OrderedPartition::new(intervals, &grid).unwrap()
    }

    fn sizes(f: &LevelFamily) -> Vec<usize> {
        f.levels().iter().map(Vec::len).collect()
    }

    #[test]
    fn eight_intervals() {
        let f = build_levels(&partition(8));
        assert_eq!(sizes(&f), vec![8, 4, 2, 1]);
        assert_eq!(f.star_len(), 15);
        let top = f.levels()[3][0];
        assert_eq!((top.first, top.len), (0, 8));
        assert_eq!(
            top.interval,
            Interval::closed_from_zero(GridEndpoint(8)).unwrap()
        );
    }

    #[test]
    fn single_interval() {
        let levels = merge_levels(&[Interval::degenerate_zero()]);
        assert_eq!(levels.len(), 1);
        assert_eq!(levels[0].len(), 1);
        let coarsest = build_levels(&OrderedPartition::coarsest(&GridSpec::new(1, 1).unwrap()));
        assert_eq!(sizes(&coarsest), vec![2, 1]);
    }

    #[test]
    fn five_intervals_leave_tails_uncovered() {
        let f = build_levels(&partition(5));
        assert_eq!(sizes(&f), vec![5, 2, 1]);
        // Base index 5 (1-based) is not covered at levels 1 and 2.
        assert!(f.levels()[1].iter().all(|b| b.first + b.len <= 4));
        assert!(f.levels()[2].iter().all(|b| b.first + b.len <= 4));
    }

    #[test]
    fn thirteen_of_sixteen() {
        let f = build_levels(&partition(16));
        let blocks = f.prefix_decompose(13).unwrap();
        let levels: Vec<u32> = blocks.iter().map(|b| b.level).collect();
        assert_eq!(levels, vec![3, 2, 0]);
    }

    #[test]
    fn power_of_two_prefix_is_one_block() {
        let f = build_levels(&partition(8));
        assert_eq!(
            f.prefix_decompose(8).unwrap(),
            vec![BlockId { level: 3, index: 0 }]
        );
        assert!(f.prefix_decompose(0).unwrap().is_empty());
        assert!(f.prefix_decompose(9).is_err());
    }

    #[test]
    fn exhaustive_prefix_cover_up_to_64() {
        for m in 2..=64 {
            let f = build_levels(&partition(m));
            assert!(f.star_len() <= 2 * m);
            let max_blocks = (usize::BITS - 1 - m.leading_zeros()) as usize + 1;
            for k in 0..=m {
                let ids = f.prefix_decompose(k).unwrap();
                assert!(ids.len() <= max_blocks);
                let mut next = 0;
                for id in ids {
                    let b = f.block(id).expect("block exists");
                    assert_eq!(b.first, next, "m = {m}, k = {k}");
                    next += b.len;
                }
                assert_eq!(next, k);
            }
        }
    }
}
