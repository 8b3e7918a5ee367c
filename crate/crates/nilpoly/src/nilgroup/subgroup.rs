//! Finitely generated subgroups, stored as pivot sequences.
//!
//! A subgroup keeps at most one pivot element per generator index; the
//! pivot at k has its first nonzero exponent at coordinate k. Because
//! commutator words reference only higher indices, coordinate k is additive
//! (modulo a finite order) on products of elements supported at indices
//! ≥ k, so a Euclid-style elimination per coordinate is sound. The pivot
//! set is closed under pairwise commutators, finite-order gcd combinations
//! and overflow powers — and, for normal closures, conjugation by the
//! ambient generators — which makes membership sifting complete.

use super::{GroupElement, NilGroup};
use crate::{Error, Result};
use num::integer::Integer;
use std::collections::{BTreeMap, VecDeque};

/// Work budget for one closure computation.
const CLOSURE_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct Subgroup {
    pivots: BTreeMap<usize, GroupElement>,
    normal: bool,
}

fn leading(x: &GroupElement) -> Option<usize> {
    x.exps.iter().position(|&e| e != 0)
}

impl Subgroup {
    pub fn trivial() -> Subgroup {
        Subgroup {
            pivots: BTreeMap::new(),
            normal: true,
        }
    }

    /// Subgroup generated by the given elements.
    pub fn generated(group: &NilGroup, gens: &[GroupElement]) -> Result<Subgroup> {
        Self::close(group, gens, false)
    }

    /// Smallest normal subgroup of the ambient group containing the
    /// given elements.
    pub fn normal_closure(group: &NilGroup, gens: &[GroupElement]) -> Result<Subgroup> {
        Self::close(group, gens, true)
    }

    /// The whole ambient group.
    pub fn whole(group: &NilGroup) -> Result<Subgroup> {
        let gens: Vec<GroupElement> = (0..group.rank())
            .map(|i| group.generator(i))
            .collect::<Result<_>>()?;
        Self::close(group, &gens, true)
    }

    fn close(group: &NilGroup, gens: &[GroupElement], normal: bool) -> Result<Subgroup> {
        let mut sub = Subgroup {
            pivots: BTreeMap::new(),
            normal,
        };
        let mut queue: VecDeque<GroupElement> = gens.iter().cloned().collect();
        let mut budget = CLOSURE_BUDGET;
        while let Some(x) = queue.pop_front() {
            budget = budget
                .checked_sub(1)
                .ok_or_else(|| Error::CapExceeded("subgroup closure budget exhausted".into()))?;
            let Some(k) = sub.sift_place(group, x, &mut queue)? else {
                continue;
            };
            // a pivot at k was placed or replaced: re-close around it
            let p = sub.pivots[&k].clone();
            if let Some(m) = group.order(k) {
                let m = m as i64;
                let a = p.exponents()[k];
                let eg = a.extended_gcd(&m);
                if eg.gcd != a {
                    // bring the coordinate's gcd with the order into play
                    queue.push_back(group.power(&p, eg.x.rem_euclid(m))?);
                }
                queue.push_back(group.power(&p, m / eg.gcd)?);
            }
            let partners: Vec<GroupElement> = sub.pivots.values().cloned().collect();
            for q in partners {
                queue.push_back(group.commutator(&p, &q)?);
            }
            if normal {
                for s in 0..group.rank() {
                    let g = group.generator(s)?;
                    queue.push_back(group.conjugate(&p, &g)?);
                    queue.push_back(group.conjugate(&p, &group.inverse(&g)?)?);
                }
            }
        }
        Ok(sub)
    }

    /// Sifts x against the pivots, placing it (or a combination) when it
    /// cannot be reduced. Returns the index of a placed or changed pivot;
    /// displaced remainders go back on the queue.
    fn sift_place(
        &mut self,
        group: &NilGroup,
        mut x: GroupElement,
        queue: &mut VecDeque<GroupElement>,
    ) -> Result<Option<usize>> {
        loop {
            let Some(k) = leading(&x) else { return Ok(None) };
            match self.pivots.get(&k).cloned() {
                None => {
                    if group.order(k).is_none() && x.exponents()[k] < 0 {
                        x = group.inverse(&x)?;
                    }
                    self.pivots.insert(k, x);
                    return Ok(Some(k));
                }
                Some(mut p) => {
                    let mut swapped = false;
                    loop {
                        let a = p.exponents()[k];
                        let c = x.exponents()[k];
                        if c == 0 {
                            break;
                        }
                        let q = c.div_euclid(a);
                        if q != 0 {
                            x = group.product(&group.power(&p, -q)?, &x)?;
                        }
                        if x.exponents()[k] != 0 {
                            std::mem::swap(&mut p, &mut x);
                            swapped = true;
                        }
                    }
                    if swapped {
                        self.pivots.insert(k, p);
                        if !x.is_identity() {
                            queue.push_back(x);
                        }
                        return Ok(Some(k));
                    }
                    // coordinate k eliminated; x now leads strictly deeper
                }
            }
        }
    }

    /// Membership by sifting. Sound and complete once the closure has
    /// stabilized.
    pub fn contains(&self, group: &NilGroup, g: &GroupElement) -> Result<bool> {
        let mut x = g.clone();
        loop {
            let Some(k) = leading(&x) else { return Ok(true) };
            let Some(p) = self.pivots.get(&k) else {
                return Ok(false);
            };
            let a = p.exponents()[k];
            let c = x.exponents()[k];
            if c % a != 0 {
                return Ok(false);
            }
            x = group.product(&group.power(p, -(c / a))?, &x)?;
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.pivots.is_empty()
    }

    pub fn is_normal_by_construction(&self) -> bool {
        self.normal
    }

    /// Pivot elements in ascending leading-index order; they generate the
    /// subgroup.
    pub fn generators(&self) -> Vec<GroupElement> {
        self.pivots.values().cloned().collect()
    }

    /// Number of pivots sitting at infinite-order coordinates: the Hirsch
    /// length of the subgroup.
    pub fn hirsch(&self, group: &NilGroup) -> usize {
        self.pivots
            .keys()
            .filter(|&&k| group.order(k).is_none())
            .count()
    }

    pub fn join(&self, group: &NilGroup, other: &Subgroup) -> Result<Subgroup> {
        let mut gens = self.generators();
        gens.extend(other.generators());
        if self.normal && other.normal {
            Subgroup::normal_closure(group, &gens)
        } else {
            Subgroup::generated(group, &gens)
        }
    }

    /// Normal closure of [G, H] for H = self, G the ambient group.
    pub fn bracket_with_ambient(&self, group: &NilGroup) -> Result<Subgroup> {
        let mut gens = Vec::new();
        for s in 0..group.rank() {
            let g = group.generator(s)?;
            for p in self.pivots.values() {
                gens.push(group.commutator(&g, p)?);
            }
        }
        Subgroup::normal_closure(group, &gens)
    }

    pub fn contains_subgroup(&self, group: &NilGroup, other: &Subgroup) -> Result<bool> {
        for p in other.pivots.values() {
            if !self.contains(group, p)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn same(&self, group: &NilGroup, other: &Subgroup) -> Result<bool> {
        Ok(self.contains_subgroup(group, other)? && other.contains_subgroup(group, self)?)
    }
}

/// Hirsch length of the subgroup generated by `gens`.
pub fn hirsch_length(group: &NilGroup, gens: &[GroupElement]) -> Result<usize> {
    Ok(Subgroup::generated(group, gens)?.hirsch(group))
}

/// Finite-index criterion: the generated subgroup has finite index iff its
/// Hirsch length equals that of the whole group.
pub fn finite_index_test(group: &NilGroup, gens: &[GroupElement]) -> Result<bool> {
    let whole = Subgroup::whole(group)?.hirsch(group);
    Ok(hirsch_length(group, gens)? == whole)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abelian_pivots_and_membership() {
        let g = NilGroup::free_abelian(2);
        let v = Subgroup::generated(
            &g,
            &[g.element(vec![2, 0]).unwrap(), g.element(vec![0, 3]).unwrap()],
        )
        .unwrap();
        assert!(v.contains(&g, &g.element(vec![4, 3]).unwrap()).unwrap());
        assert!(!v.contains(&g, &g.element(vec![1, 0]).unwrap()).unwrap());
        assert_eq!(v.hirsch(&g), 2);
    }

    #[test]
    fn gcd_combination_found() {
        let g = NilGroup::free_abelian(1);
        let v = Subgroup::generated(
            &g,
            &[g.element(vec![6]).unwrap(), g.element(vec![10]).unwrap()],
        )
        .unwrap();
        assert!(v.contains(&g, &g.element(vec![2]).unwrap()).unwrap());
        assert!(!v.contains(&g, &g.element(vec![1]).unwrap()).unwrap());
    }

    #[test]
    fn finite_coordinate_gcd() {
        // in ℤ/12, ⟨8⟩ = ⟨4⟩
        let g = NilGroup::cyclic(12);
        let v = Subgroup::generated(&g, &[g.element(vec![8]).unwrap()]).unwrap();
        assert!(v.contains(&g, &g.element(vec![4]).unwrap()).unwrap());
        assert!(!v.contains(&g, &g.element(vec![2]).unwrap()).unwrap());
    }

    #[test]
    fn heisenberg_commutator_closure() {
        let g = NilGroup::heisenberg();
        let x2 = g.element(vec![2, 0, 0]).unwrap();
        let y2 = g.element(vec![0, 2, 0]).unwrap();
        // [x², y²] = c⁴, so c⁴ must be inside without being listed
        let v = Subgroup::generated(&g, &[x2, y2]).unwrap();
        assert!(v.contains(&g, &g.element(vec![0, 0, 4]).unwrap()).unwrap());
        assert!(!v.contains(&g, &g.element(vec![0, 0, 2]).unwrap()).unwrap());
        assert_eq!(v.hirsch(&g), 3);
    }

    #[test]
    fn hirsch_examples() {
        let g = NilGroup::heisenberg();
        let x = g.generator(0).unwrap();
        assert_eq!(hirsch_length(&g, &[x.clone()]).unwrap(), 1);
        assert!(!finite_index_test(&g, &[x]).unwrap());
        let gens = vec![
            g.element(vec![2, 0, 0]).unwrap(),
            g.element(vec![0, 2, 0]).unwrap(),
            g.element(vec![0, 0, 1]).unwrap(),
        ];
        assert!(finite_index_test(&g, &gens).unwrap());
    }

    #[test]
    fn dihedral_twisted_subgroup() {
        // ⟨x₀x₁⟩ in the infinite dihedral group: (x₀x₁)² = 1... actually
        // (x₀x₁)² = x₀x₁x₀x₁ = x₀²·(x₁^{x₀})·x₁ = x₁⁻¹x₁ = 1
        let g = NilGroup::z2_semidirect_z();
        let t = g.element(vec![1, 1]).unwrap();
        let v = Subgroup::generated(&g, &[t.clone()]).unwrap();
        assert!(v.contains(&g, &t).unwrap());
        assert!(!v.contains(&g, &g.element(vec![0, 1]).unwrap()).unwrap());
        assert_eq!(v.hirsch(&g), 0);
    }

    #[test]
    fn normal_closure_grows() {
        // normal closure of ⟨x₁⟩ in the dihedral group contains x₁⁻¹
        // via conjugation; plain generation already does here, but the
        // normal closure of ⟨x₀⟩ picks up x₀-conjugates of everything
        let g = NilGroup::z2_semidirect_z();
        let x0 = g.generator(0).unwrap();
        let n = Subgroup::normal_closure(&g, &[x0]).unwrap();
        // x₀ normal closure: contains [x₀, x₁] = x₁² hence all of ⟨x₀, x₁²⟩
        assert!(n.contains(&g, &g.element(vec![0, 2]).unwrap()).unwrap());
        assert!(!n.contains(&g, &g.element(vec![0, 1]).unwrap()).unwrap());
    }
}
