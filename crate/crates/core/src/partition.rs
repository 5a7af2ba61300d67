//! Partitions of the state space and stochastic bisimulation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math::{abs, round};
use crate::mdp::Mdp;
use crate::transport::DistanceMatrix;

/// A disjoint cover of `0..n` by nonempty blocks, kept in canonical form:
/// states ascending within each block, blocks ordered by their smallest state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    block_of: Vec<usize>,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Canonicalizes an arbitrary labelling of states.
    pub fn from_block_of(labels: Vec<usize>) -> Self {
        let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
        let mut block_of = Vec::with_capacity(labels.len());
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (s, label) in labels.into_iter().enumerate() {
            let next = relabel.len();
            let b = *relabel.entry(label).or_insert(next);
            if b == blocks.len() {
                blocks.push(Vec::new());
            }
            blocks[b].push(s);
            block_of.push(b);
        }
        Partition { block_of, blocks }
    }

    /// Validates that `blocks` is a disjoint, nonempty cover of `0..n`.
    pub fn from_blocks(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition(format!("block {b} is empty")));
            }
            for &s in block {
                if s >= n {
                    return Err(Error::InvalidPartition(format!(
                        "state {s} out of range 0..{n}"
                    )));
                }
                if labels[s] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("state {s} appears twice")));
                }
                labels[s] = b;
            }
        }
        if let Some(s) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::InvalidPartition(format!("state {s} is not covered")));
        }
        Ok(Self::from_block_of(labels))
    }

    pub fn singletons(n: usize) -> Self {
        Self::from_block_of((0..n).collect())
    }

    pub fn single_block(n: usize) -> Self {
        Self::from_block_of(vec![0; n])
    }

    pub fn n_states(&self) -> usize {
        self.block_of.len()
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_of(&self) -> &[usize] {
        &self.block_of
    }

    #[inline]
    pub fn block_index(&self, state: usize) -> usize {
        self.block_of[state]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// The block containing `state`.
    pub fn class_of(&self, state: usize) -> &[usize] {
        &self.blocks[self.block_of[state]]
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.block_of[a] == self.block_of[b]
    }
}

/// `block_id: s1 s2 ...`, one line per block.
impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (b, block) in self.blocks.iter().enumerate() {
            write!(f, "{b}:")?;
            for s in block {
                write!(f, " {s}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Total mass `p` puts on `block`.
pub fn class_probability(p: &[f64], block: &[usize]) -> f64 {
    block.iter().map(|&s| p[s]).sum()
}

/// Maps a value onto a hashable key. With `tol > 0` values are rounded to a
/// grid of spacing `tol`; with `tol = 0` the exact bit pattern is used.
fn bucket(x: f64, tol: f64) -> i64 {
    if tol > 0.0 {
        let scaled = x / tol;
        if scaled.is_finite() && abs(scaled) < 9.0e18 {
            return round(scaled) as i64;
        }
    }
    // +0.0 and -0.0 must share a key.
    let x = if x == 0.0 { 0.0 } else { x };
    x.to_bits() as i64
}

fn refine(mdp: &Mdp, current: &Partition, tol: f64) -> Partition {
    let n = mdp.n_states();
    let mut classes: BTreeMap<(usize, Vec<i64>), usize> = BTreeMap::new();
    let mut labels = Vec::with_capacity(n);
    for s in 0..n {
        let mut signature = Vec::with_capacity(mdp.n_actions() * (1 + current.len()));
        for a in 0..mdp.n_actions() {
            signature.push(bucket(mdp.reward(a, s), tol));
            let row = mdp.row(a, s);
            for block in current.blocks() {
                signature.push(bucket(class_probability(row, block), tol));
            }
        }
        let next = classes.len();
        labels.push(
            *classes
                .entry((current.block_index(s), signature))
                .or_insert(next),
        );
    }
    Partition::from_block_of(labels)
}

/// Coarsest partition stable under the reward / class-probability signature,
/// found by refinement from the single-block partition. With `tol = 0` this
/// is stochastic bisimulation (on exactly representable inputs).
///
/// For `tol > 0` signature entries are bucketed on a grid of spacing `tol`,
/// so two values closer than `tol` that straddle a grid boundary still split.
pub fn bisimulation_partition(mdp: &Mdp, tol: f64) -> Partition {
    refine_from(mdp, Partition::single_block(mdp.n_states()), tol)
}

fn refine_from(mdp: &Mdp, mut current: Partition, tol: f64) -> Partition {
    loop {
        let next = refine(mdp, &current, tol);
        if next.len() == current.len() {
            return current;
        }
        current = next;
    }
}

/// Connected components of the graph joining states at distance `<= tol`.
pub fn induced_partition(d: &DistanceMatrix, tol: f64) -> Partition {
    let n = d.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if d.get(i, j) <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let labels = (0..n).map(|s| find(&mut parent, s)).collect();
    Partition::from_block_of(labels)
}
