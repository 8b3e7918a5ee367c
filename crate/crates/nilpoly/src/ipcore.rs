//! The partial semigroup of finite subsets of ℕ (as bitmasks over a bounded
//! ground set), ordered tuples, IP-rings, and exhaustive desk-scale searches
//! for monochrome union structures.
//!
//! A chain α₀ < α₁ < … of pairwise disjoint finite sets spans an *IP-ring*:
//! the family of all finite unions of chain members. The searches look for
//! chains whose span is monochrome under a given coloring; they are
//! exhaustive over the ground set, so `None` is a proof of absence at that
//! size, never merely a timeout.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Largest supported ground-set size (masks are `u64`, one bit spare).
pub const GROUND_CAP: usize = 63;

/// A finite subset of {0, …, 62} as a bitmask. The empty set is a valid
/// value; operations that require nonemptiness say so.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FinSet {
    mask: u64,
}

impl FinSet {
    pub fn new(mask: u64) -> FinSet {
        FinSet { mask }
    }

    pub fn empty() -> FinSet {
        FinSet { mask: 0 }
    }

    pub fn from_elems(elems: &[usize]) -> Result<FinSet> {
        let mut mask = 0u64;
        for &e in elems {
            if e >= GROUND_CAP {
                return Err(Error::invalid(format!(
                    "element {e} exceeds the ground cap {GROUND_CAP}"
                )));
            }
            mask |= 1 << e;
        }
        Ok(FinSet { mask })
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn card(&self) -> u32 {
        self.mask.count_ones()
    }

    pub fn min(&self) -> Option<usize> {
        (!self.is_empty()).then(|| self.mask.trailing_zeros() as usize)
    }

    pub fn max(&self) -> Option<usize> {
        (!self.is_empty()).then(|| 63 - self.mask.leading_zeros() as usize)
    }

    pub fn union(&self, other: &FinSet) -> FinSet {
        FinSet {
            mask: self.mask | other.mask,
        }
    }

    pub fn is_disjoint(&self, other: &FinSet) -> bool {
        self.mask & other.mask == 0
    }

    pub fn is_subset(&self, other: &FinSet) -> bool {
        self.mask & !other.mask == 0
    }

    pub fn elems(&self) -> Vec<usize> {
        (0..64).filter(|&i| self.mask >> i & 1 == 1).collect()
    }
}

/// max a < min b; the empty set both precedes and succeeds everything.
pub fn precedes(a: &FinSet, b: &FinSet) -> bool {
    match (a.max(), b.min()) {
        (Some(ma), Some(mb)) => ma < mb,
        _ => true,
    }
}

/// The partial semigroup operation: disjoint union, undefined otherwise.
pub fn star(a: &FinSet, b: &FinSet) -> Option<FinSet> {
    a.is_disjoint(b).then(|| a.union(b))
}

/// A tuple α₁ < … < α_m of nonempty sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderedTuple {
    sets: Vec<FinSet>,
}

impl OrderedTuple {
    pub fn new(sets: Vec<FinSet>) -> Result<OrderedTuple> {
        for s in &sets {
            if s.is_empty() {
                return Err(Error::invalid("ordered tuples consist of nonempty sets"));
            }
        }
        for w in sets.windows(2) {
            if !precedes(&w[0], &w[1]) {
                return Err(Error::invalid(format!(
                    "tuple is not ordered: {:?} does not precede {:?}",
                    w[0].elems(),
                    w[1].elems()
                )));
            }
        }
        Ok(OrderedTuple { sets })
    }

    pub fn sets(&self) -> &[FinSet] {
        &self.sets
    }

    pub fn arity(&self) -> usize {
        self.sets.len()
    }
}

/// A strictly increasing chain of disjoint nonempty sets; spans the IP-ring
/// of its 2ᵏ−1 nonempty unions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IPRing {
    chain: Vec<FinSet>,
}

impl IPRing {
    pub fn new(chain: Vec<FinSet>) -> Result<IPRing> {
        for s in &chain {
            if s.is_empty() {
                return Err(Error::invalid("chain members must be nonempty"));
            }
        }
        for w in chain.windows(2) {
            if !precedes(&w[0], &w[1]) {
                return Err(Error::invalid(
                    "chain must be strictly increasing (each block below the next)",
                ));
            }
        }
        Ok(IPRing { chain })
    }

    pub fn chain(&self) -> &[FinSet] {
        &self.chain
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    /// Union of the blocks selected by `sel` (bit i = chain[i]).
    pub fn union_of(&self, sel: u64) -> FinSet {
        let mut u = FinSet::empty();
        for (i, b) in self.chain.iter().enumerate() {
            if sel >> i & 1 == 1 {
                u = u.union(b);
            }
        }
        u
    }

    /// All nonempty unions of chain members. Because blocks are increasing,
    /// ascending selector order is also ascending union-mask order.
    pub fn enumerate(&self) -> Vec<FinSet> {
        (1u64..1 << self.chain.len())
            .map(|sel| self.union_of(sel))
            .collect()
    }
}

/// A total coloring of nonempty subsets of a ground set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    pub ground: usize,
    pub colors: u32,
    pub rule: ColorRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorRule {
    /// Explicit table keyed by mask; must cover every nonempty subset.
    Table(BTreeMap<u64, u32>),
    /// |α| mod 2.
    Parity,
    /// |α| mod q.
    CardMod(u32),
    /// max α mod q.
    MaxMod(u32),
}

impl Coloring {
    pub fn validate(&self) -> Result<()> {
        if self.ground > GROUND_CAP {
            return Err(Error::invalid("ground set too large"));
        }
        if self.colors == 0 {
            return Err(Error::invalid("at least one color is required"));
        }
        match &self.rule {
            ColorRule::Table(t) => {
                for mask in 1u64..1 << self.ground {
                    match t.get(&mask) {
                        None => {
                            return Err(Error::invalid(format!(
                                "coloring table is missing mask {mask}"
                            )))
                        }
                        Some(&c) if c >= self.colors => {
                            return Err(Error::invalid(format!(
                                "coloring table assigns out-of-range color {c} to mask {mask}"
                            )))
                        }
                        _ => {}
                    }
                }
            }
            ColorRule::CardMod(q) | ColorRule::MaxMod(q) => {
                if *q == 0 || *q > self.colors {
                    return Err(Error::invalid("rule modulus must be in 1..=colors"));
                }
            }
            ColorRule::Parity => {
                if self.colors < 2 {
                    return Err(Error::invalid("parity coloring needs two colors"));
                }
            }
        }
        Ok(())
    }

    pub fn color(&self, s: &FinSet) -> u32 {
        debug_assert!(!s.is_empty());
        match &self.rule {
            ColorRule::Table(t) => t[&s.mask()],
            ColorRule::Parity => s.card() % 2,
            ColorRule::CardMod(q) => s.card() % q,
            ColorRule::MaxMod(q) => s.max().unwrap() as u32 % q,
        }
    }
}

/// Exhaustive search for a chain of `chain_len` disjoint nonempty subsets of
/// {0,…,ground−1} whose 2ᵏ−1 unions all share one color. Returns the
/// lexicographically least witness (chains compared block by block as
/// masks), or `None` when no chain exists at this ground size.
pub fn hindman_search<C>(color: &C, ground: usize, chain_len: usize) -> Result<Option<IPRing>>
where
    C: Fn(&FinSet) -> u32 + Sync,
{
    if ground > GROUND_CAP {
        return Err(Error::CapExceeded(format!(
            "ground {ground} exceeds the cap {GROUND_CAP}"
        )));
    }
    if chain_len == 0 {
        return Ok(Some(IPRing { chain: vec![] }));
    }
    let full = if ground == 64 { !0 } else { (1u64 << ground) - 1 };
    // the first block determines the candidate color; branches are
    // independent, so scanning them in parallel with find_first keeps the
    // lexicographically-least-witness contract regardless of worker count
    use rayon::prelude::*;
    let found = (1u64..=full)
        .into_par_iter()
        .find_map_first(|first| {
            let first = FinSet::new(first);
            let target = color(&first);
            let mut chain = vec![first];
            extend_chain(color, full, target, &mut chain, chain_len)
        });
    Ok(found.map(|chain| IPRing { chain }))
}

/// Depth-first extension: a new block must lie strictly above the last one
/// and keep every union containing it in the target color.
fn extend_chain<C>(
    color: &C,
    full: u64,
    target: u32,
    chain: &mut Vec<FinSet>,
    chain_len: usize,
) -> Option<Vec<FinSet>>
where
    C: Fn(&FinSet) -> u32,
{
    if chain.len() == chain_len {
        return Some(chain.clone());
    }
    let last_max = chain.last().and_then(|s| s.max()).map_or(0, |m| m + 1);
    let lo = 1u64 << last_max;
    let mut next = lo;
    while next <= full {
        if next & (lo - 1) == 0 {
            let cand = FinSet::new(next);
            // every union of previous blocks (including none) with cand
            let k = chain.len();
            let mono = (0u64..1 << k).all(|sel| {
                let mut u = cand;
                for (i, b) in chain.iter().enumerate() {
                    if sel >> i & 1 == 1 {
                        u = u.union(b);
                    }
                }
                color(&u) == target
            });
            if mono {
                chain.push(cand);
                if let Some(w) = extend_chain(color, full, target, chain, chain_len) {
                    return Some(w);
                }
                chain.pop();
            }
        }
        next += 1;
    }
    None
}

/// Exhaustive search for a chain such that every ordered `arity`-tuple of
/// unions of disjoint, order-respecting selections of chain blocks gets one
/// color. `arity == 1` is exactly `hindman_search`.
pub fn milliken_search<C>(
    color: &C,
    ground: usize,
    arity: usize,
    chain_len: usize,
) -> Result<Option<IPRing>>
where
    C: Fn(&[FinSet]) -> u32 + Sync,
{
    if ground > GROUND_CAP {
        return Err(Error::CapExceeded(format!(
            "ground {ground} exceeds the cap {GROUND_CAP}"
        )));
    }
    if arity == 0 {
        return Err(Error::invalid("tuple arity must be positive"));
    }
    if chain_len == 0 {
        return Ok(Some(IPRing { chain: vec![] }));
    }
    let full = if ground == 64 { !0 } else { (1u64 << ground) - 1 };
    use rayon::prelude::*;
    let found = (1u64..=full)
        .into_par_iter()
        .find_map_first(|first| {
            let mut chain = vec![FinSet::new(first)];
            extend_chain_tuples(color, full, None, &mut chain, arity, chain_len)
        });
    Ok(found.map(|chain| IPRing { chain }))
}

/// Enumerates the ordered `arity`-tuples spanned by a chain: selections
/// s₁, …, s_arity of block indices with max(sᵢ) < min(s_{i+1}).
fn chain_tuples(chain: &[FinSet], arity: usize) -> Vec<Vec<FinSet>> {
    let mut out = Vec::new();
    let mut sels = Vec::with_capacity(arity);
    fn rec(
        chain: &[FinSet],
        arity: usize,
        from: usize,
        sels: &mut Vec<FinSet>,
        out: &mut Vec<Vec<FinSet>>,
    ) {
        if sels.len() == arity {
            out.push(sels.clone());
            return;
        }
        // choose a nonempty selection of blocks starting at `from`, entirely
        // below the next variable's blocks
        for hi in from..chain.len() {
            // selections whose maximal block is `hi`
            let free = hi - from; // blocks from..hi-1 are free to include
            for sub in 0u64..1 << free {
                let mut u = chain[hi];
                for (j, b) in chain[from..hi].iter().enumerate() {
                    if sub >> j & 1 == 1 {
                        u = u.union(b);
                    }
                }
                sels.push(u);
                rec(chain, arity, hi + 1, sels, out);
                sels.pop();
            }
        }
    }
    rec(chain, arity, 0, &mut sels, &mut out);
    out
}

fn extend_chain_tuples<C>(
    color: &C,
    full: u64,
    target: Option<u32>,
    chain: &mut Vec<FinSet>,
    arity: usize,
    chain_len: usize,
) -> Option<Vec<FinSet>>
where
    C: Fn(&[FinSet]) -> u32,
{
    let mut target = target;
    // desk scale: re-check every tuple the extended chain spans
    let tuples = chain_tuples(chain, arity);
    for t in &tuples {
        let c = color(t);
        match target {
            None => target = Some(c),
            Some(tc) if tc != c => return None,
            _ => {}
        }
    }
    if chain.len() == chain_len {
        return Some(chain.clone());
    }
    let last_max = chain.last().and_then(|s| s.max()).map_or(0, |m| m + 1);
    if last_max > 63 {
        return None;
    }
    let lo = 1u64 << last_max;
    let mut next = lo;
    while next <= full {
        if next & (lo - 1) == 0 {
            chain.push(FinSet::new(next));
            if let Some(w) = extend_chain_tuples(color, full, target, chain, arity, chain_len) {
                return Some(w);
            }
            chain.pop();
        }
        next += 1;
    }
    None
}

/// Independent re-check that the ring spanned by `chain` is monochrome.
pub fn verify_monochrome_ring<C>(color: &C, ring: &IPRing) -> bool
where
    C: Fn(&FinSet) -> u32,
{
    let unions = ring.enumerate();
    if unions.is_empty() {
        return true;
    }
    let c0 = color(&unions[0]);
    unions.iter().all(|u| color(u) == c0)
}

/// Independent re-check for the tuple version.
pub fn verify_monochrome_tuples<C>(color: &C, ring: &IPRing, arity: usize) -> bool
where
    C: Fn(&[FinSet]) -> u32,
{
    let tuples = chain_tuples(ring.chain(), arity);
    if tuples.is_empty() {
        return true;
    }
    let c0 = color(&tuples[0]);
    tuples.iter().all(|t| color(t) == c0)
}
