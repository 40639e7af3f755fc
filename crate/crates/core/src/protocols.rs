//! Target selection: who each replica sends to in a round.

use std::ops::Range;

use rand::seq::index;
use rand::Rng;

use crate::model::{InvalidParameter, Protocol, ReplicaId, Round};

/// Blocks of replicas placed on the nodes of a binary tree in level order.
///
/// Node `i` has children `2i + 1` and `2i + 2`. Replicas fill blocks in
/// ascending contiguous runs; the last block may be short when `ℓ ∤ n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeLayout {
    n: usize,
    block_size: usize,
    blocks: Vec<Range<u32>>,
    // Root ∪ children of each node. Includes the node's own block only
    // for the root.
    node_candidates: Vec<Vec<ReplicaId>>,
}

pub fn build_tree_layout(n: usize, block_size: usize) -> Result<TreeLayout, InvalidParameter> {
    if block_size < 1 || block_size > n {
        return Err(InvalidParameter::new("ell", format!("1 ≤ ℓ ≤ n (ℓ={block_size}, n={n})")));
    }
    let blocks: Vec<Range<u32>> =
        (0..n).step_by(block_size).map(|lo| lo as u32..(lo + block_size).min(n) as u32).collect();
    let members = |node: usize| blocks.get(node).cloned().into_iter().flatten().map(ReplicaId);
    let node_candidates = (0..blocks.len())
        .map(|node| {
            let mut c: Vec<ReplicaId> = members(0).collect();
            for child in [2 * node + 1, 2 * node + 2] {
                c.extend(members(child));
            }
            // blocks are disjoint and ascending, so `c` is already sorted
            debug_assert!(c.windows(2).all(|w| w[0] < w[1]));
            c
        })
        .collect();
    Ok(TreeLayout { n, block_size, blocks, node_candidates })
}

impl TreeLayout {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Blocks in level order.
    pub fn blocks(&self) -> &[Range<u32>] {
        &self.blocks
    }

    pub fn node_of(&self, p: ReplicaId) -> usize {
        p.index() / self.block_size
    }

    pub fn block_members(&self, node: usize) -> impl Iterator<Item = ReplicaId> + '_ {
        self.blocks.get(node).cloned().into_iter().flatten().map(ReplicaId)
    }

    pub fn root_members(&self) -> impl Iterator<Item = ReplicaId> + '_ {
        self.block_members(0)
    }

    /// Root block ∪ child blocks of `p`'s node, without `p`.
    pub fn candidate_set(&self, p: ReplicaId) -> Vec<ReplicaId> {
        self.node_candidates[self.node_of(p)].iter().copied().filter(|&q| q != p).collect()
    }

    pub fn candidate_count(&self, p: ReplicaId) -> usize {
        let list = &self.node_candidates[self.node_of(p)];
        list.len() - usize::from(list.binary_search(&p).is_ok())
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, p: ReplicaId, fan_out: usize, out: &mut Vec<ReplicaId>) {
        let list = &self.node_candidates[self.node_of(p)];
        let skip = list.binary_search(&p).ok();
        let len = list.len() - usize::from(skip.is_some());
        sample_skipping(rng, len, fan_out.min(len), skip, out, |i| list[i]);
    }
}

/// Draws `amount` distinct positions from `0..len` and maps them to ids,
/// stepping over the excluded position `skip` of the underlying list.
fn sample_skipping<R, F>(
    rng: &mut R,
    len: usize,
    amount: usize,
    skip: Option<usize>,
    out: &mut Vec<ReplicaId>,
    id_at: F,
) where
    R: Rng + ?Sized,
    F: Fn(usize) -> ReplicaId,
{
    if amount == 0 {
        return;
    }
    let shift = |i: usize| match skip {
        Some(s) if i >= s => i + 1,
        _ => i,
    };
    if amount == 1 {
        out.push(id_at(shift(rng.gen_range(0..len))));
        return;
    }
    out.extend(index::sample(rng, len, amount).into_iter().map(|i| id_at(shift(i))));
}

/// `fan_out` distinct ids drawn uniformly from every replica except `me`.
pub fn random_targets<R: Rng + ?Sized>(rng: &mut R, n: usize, me: ReplicaId, fan_out: usize) -> Vec<ReplicaId> {
    let mut out = Vec::with_capacity(fan_out);
    random_into(rng, n, me, fan_out, &mut out);
    out
}

fn random_into<R: Rng + ?Sized>(rng: &mut R, n: usize, me: ReplicaId, fan_out: usize, out: &mut Vec<ReplicaId>) {
    assert!(fan_out < n, "fan_out {fan_out} exceeds the {} other replicas", n.saturating_sub(1));
    sample_skipping(rng, n - 1, fan_out, Some(me.index()), out, ReplicaId::from);
}

/// Up to `fan_out` distinct ids drawn uniformly from `me`'s candidate set.
pub fn ltree_targets<R: Rng + ?Sized>(
    rng: &mut R,
    layout: &TreeLayout,
    me: ReplicaId,
    fan_out: usize,
) -> Vec<ReplicaId> {
    let mut out = Vec::with_capacity(fan_out);
    layout.sample_into(rng, me, fan_out, &mut out);
    out
}

/// The `fan_out` ids after `me`'s cursor in the cyclic order of the other
/// replicas; the cursor moves `fan_out` positions per round.
pub fn round_robin_targets(round: Round, n: usize, me: ReplicaId, fan_out: usize) -> Vec<ReplicaId> {
    let mut out = Vec::with_capacity(fan_out);
    round_robin_into(round, n, me, fan_out, &mut out);
    out
}

fn round_robin_into(round: Round, n: usize, me: ReplicaId, fan_out: usize, out: &mut Vec<ReplicaId>) {
    assert!(fan_out < n, "fan_out {fan_out} exceeds the {} other replicas", n.saturating_sub(1));
    let others = (n - 1) as u64;
    let start = (round % others) * fan_out as u64;
    out.extend((0..fan_out as u64).map(|i| {
        let k = (start + i) % others;
        ReplicaId::from((me.index() + 1 + k as usize) % n)
    }));
}

/// A protocol instantiated for a system size.
#[derive(Clone, Debug)]
pub enum TargetSelector {
    Random { n: usize },
    Tree(TreeLayout),
    RoundRobin { n: usize },
}

impl TargetSelector {
    pub fn new(protocol: Protocol, n: usize) -> Result<Self, InvalidParameter> {
        Ok(match protocol {
            Protocol::Random => TargetSelector::Random { n },
            Protocol::LTree { ell } => TargetSelector::Tree(build_tree_layout(n, ell)?),
            Protocol::RoundRobin => TargetSelector::RoundRobin { n },
        })
    }

    /// Appends this round's targets for `me` to `out`.
    pub fn select_into<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        round: Round,
        me: ReplicaId,
        fan_out: usize,
        out: &mut Vec<ReplicaId>,
    ) {
        match self {
            TargetSelector::Random { n } => random_into(rng, *n, me, fan_out, out),
            TargetSelector::Tree(layout) => layout.sample_into(rng, me, fan_out, out),
            TargetSelector::RoundRobin { n } => round_robin_into(round, *n, me, fan_out, out),
        }
    }

    /// Every replica `me` may ever target.
    pub fn candidate_set(&self, me: ReplicaId) -> Vec<ReplicaId> {
        match self {
            TargetSelector::Random { n } | TargetSelector::RoundRobin { n } => {
                (0..*n).map(ReplicaId::from).filter(|&q| q != me).collect()
            }
            TargetSelector::Tree(layout) => layout.candidate_set(me),
        }
    }
}
