//! Prefiltrations G₀ ≥ G₁ ≥ … with [Gᵢ,Gⱼ] ⊆ G_{i+j}, the lower central
//! series, and the three derived constructions: index shift, quotient by a
//! fixed level, and superadditive reindexing.
//!
//! A quotient prefiltration is represented without forming quotient
//! presentations: a `modulus` subgroup M is carried alongside, every level
//! is stored joined with M, and membership beyond the last level means
//! membership in M.

use super::subgroup::Subgroup;
use super::{GroupElement, NilGroup};
use crate::{Error, Result};
use std::sync::Arc;

/// Longest representable (pre)filtration.
const LENGTH_CAP: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Length {
    /// G₀ itself is trivial (modulo the modulus).
    MinusInfinity,
    Finite(u32),
}

impl Length {
    pub fn finite(self) -> Option<u32> {
        match self {
            Length::MinusInfinity => None,
            Length::Finite(d) => Some(d),
        }
    }
}

#[derive(Debug, Clone)]
pub enum DeriveOp {
    Shift(u32),
    Quotient(u32),
    Reindex(Vec<u64>),
}

#[derive(Debug, Clone)]
pub struct Filtration {
    group: Arc<NilGroup>,
    /// Level subgroups for indices 0..=d, each already joined with the
    /// modulus; empty exactly when the length is −∞.
    levels: Vec<Subgroup>,
    modulus: Option<Subgroup>,
}

impl Filtration {
    /// Internal constructor for levels known to satisfy the prefiltration
    /// conditions (modulus, when present, already folded into each level).
    pub(crate) fn from_parts(
        group: Arc<NilGroup>,
        levels: Vec<Subgroup>,
        modulus: Option<Subgroup>,
    ) -> Filtration {
        Filtration {
            group,
            levels,
            modulus,
        }
    }

    /// Validating constructor for externally supplied levels.
    pub fn new(
        group: Arc<NilGroup>,
        levels: Vec<Subgroup>,
        modulus: Option<Subgroup>,
    ) -> Result<Filtration> {
        let folded = match &modulus {
            None => levels,
            Some(m) => levels
                .iter()
                .map(|l| l.join(&group, m))
                .collect::<Result<_>>()?,
        };
        let f = Filtration::from_parts(group, folded, modulus);
        f.validate()?;
        Ok(f)
    }

    pub fn group(&self) -> &Arc<NilGroup> {
        &self.group
    }

    pub fn length(&self) -> Length {
        if self.levels.is_empty() {
            Length::MinusInfinity
        } else {
            Length::Finite(self.levels.len() as u32 - 1)
        }
    }

    pub fn levels(&self) -> &[Subgroup] {
        &self.levels
    }

    pub fn modulus(&self) -> Option<&Subgroup> {
        self.modulus.as_ref()
    }

    /// The level subgroup at index i (trivial-mod-modulus past the end).
    pub fn subgroup_at(&self, i: u32) -> Subgroup {
        match self.levels.get(i as usize) {
            Some(s) => s.clone(),
            None => self
                .modulus
                .clone()
                .unwrap_or_else(Subgroup::trivial),
        }
    }

    /// Membership of g in Gᵢ.
    pub fn member(&self, i: u32, g: &GroupElement) -> Result<bool> {
        match self.levels.get(i as usize) {
            Some(s) => s.contains(&self.group, g),
            None => match &self.modulus {
                Some(m) => m.contains(&self.group, g),
                None => Ok(g.is_identity()),
            },
        }
    }

    /// Gb[+t]: level i of the result is level i+t of the input; the length
    /// drops by t (to −∞ once everything is trivial).
    pub fn shift(&self, t: u32) -> Filtration {
        let levels = if (t as usize) < self.levels.len() {
            self.levels[t as usize..].to_vec()
        } else {
            Vec::new()
        };
        Filtration::from_parts(self.group.clone(), levels, self.modulus.clone())
    }

    /// Gb[/t]: quotient by G_t, keeping length min(d, t−1).
    pub fn quotient(&self, t: u32) -> Result<Filtration> {
        let modulus = self.subgroup_at(t);
        let keep = match self.length() {
            Length::MinusInfinity => 0,
            Length::Finite(d) => {
                if t == 0 {
                    0
                } else {
                    (d.min(t - 1) + 1) as usize
                }
            }
        };
        let levels = self.levels[..keep]
            .iter()
            .map(|l| l.join(&self.group, &modulus))
            .collect::<Result<Vec<_>>>()?;
        Ok(Filtration::from_parts(
            self.group.clone(),
            levels,
            Some(modulus),
        ))
    }

    /// Gb^d̄ for a superadditive reindexing sequence d̄ = (d₀=0, d₁, …):
    /// level i of the result is level j of the input for d_{j−1} < i ≤ dⱼ.
    pub fn reindex(&self, dbar: &[u64]) -> Result<Filtration> {
        if dbar.is_empty() || dbar[0] != 0 {
            return Err(Error::invalid("reindex sequence must start with d₀ = 0"));
        }
        if dbar.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("reindex sequence must be nondecreasing"));
        }
        for i in 0..dbar.len() {
            for j in 0..dbar.len() - i {
                let sum = dbar[i].checked_add(dbar[j]);
                if sum.map_or(true, |s| dbar[i + j] < s) {
                    return Err(Error::invalid(format!(
                        "reindex sequence is not superadditive at ({i},{j})"
                    )));
                }
            }
        }
        let Length::Finite(d) = self.length() else {
            return Ok(self.clone());
        };
        let d = d as usize;
        if dbar.len() <= d {
            return Err(Error::invalid(format!(
                "reindex sequence must cover indices 0..={d}"
            )));
        }
        let new_d = dbar[d];
        if new_d > LENGTH_CAP {
            return Err(Error::CapExceeded(format!(
                "reindexed length {new_d} exceeds the supported bound {LENGTH_CAP}"
            )));
        }
        let mut levels = Vec::with_capacity(new_d as usize + 1);
        for i in 0..=new_d {
            let j = dbar
                .iter()
                .position(|&dj| dj >= i)
                .expect("dbar[d] bounds i");
            levels.push(self.levels[j.min(d)].clone());
        }
        Ok(Filtration::from_parts(
            self.group.clone(),
            levels,
            self.modulus.clone(),
        ))
    }

    pub fn derive(&self, op: &DeriveOp) -> Result<Filtration> {
        match op {
            DeriveOp::Shift(t) => Ok(self.shift(*t)),
            DeriveOp::Quotient(t) => self.quotient(*t),
            DeriveOp::Reindex(dbar) => self.reindex(dbar),
        }
    }

    /// A filtration (as opposed to a mere prefiltration) has G₀ = G₁.
    pub fn is_filtration(&self) -> Result<bool> {
        if self.levels.is_empty() {
            return Ok(true);
        }
        if self.levels.len() < 2 {
            return Ok(false);
        }
        self.levels[0].same(&self.group, &self.levels[1])
    }

    /// Checks nesting, normality of every level, the commutator condition
    /// [Gᵢ,Gⱼ] ⊆ G_{i+j} on level generators, and modulus containment.
    pub fn validate(&self) -> Result<()> {
        let g = &*self.group;
        if let Some(m) = &self.modulus {
            if !Subgroup::normal_closure(g, &m.generators())?.same(g, m)? {
                return Err(Error::invalid("modulus subgroup is not normal"));
            }
            if let Some(last) = self.levels.last() {
                if !last.contains_subgroup(g, m)? {
                    return Err(Error::invalid(
                        "modulus subgroup must sit inside the deepest level",
                    ));
                }
            }
        }
        for (i, l) in self.levels.iter().enumerate() {
            if !Subgroup::normal_closure(g, &l.generators())?.same(g, l)? {
                return Err(Error::invalid(format!("level {i} is not normal")));
            }
            if i + 1 < self.levels.len()
                && !l.contains_subgroup(g, &self.levels[i + 1])?
            {
                return Err(Error::invalid(format!(
                    "levels are not nested at index {i}"
                )));
            }
        }
        for i in 0..self.levels.len() {
            for j in i..self.levels.len() {
                for p in self.levels[i].generators() {
                    for q in self.levels[j].generators() {
                        let c = g.commutator(&p, &q)?;
                        if !self.member((i + j) as u32, &c)? {
                            return Err(Error::invalid(format!(
                                "commutator condition fails between levels {i} and {j}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Levelwise equality of two prefiltrations over the same group.
    pub fn equivalent(&self, other: &Filtration) -> Result<bool> {
        if self.length() != other.length() {
            return Ok(false);
        }
        let g = &*self.group;
        for (a, b) in self.levels.iter().zip(&other.levels) {
            if !a.same(g, b)? {
                return Ok(false);
            }
        }
        match (&self.modulus, &other.modulus) {
            (None, None) => Ok(true),
            (Some(a), Some(b)) => a.same(g, b),
            (Some(m), None) | (None, Some(m)) => Ok(m.is_trivial()),
        }
    }
}

/// The lower central series G = G₀ = G₁ ≥ G₂ ≥ …, iterating
/// G_{i+1} = [G, Gᵢ] until trivial. Fails with the computed layers if the
/// series has not reached the trivial subgroup within the class cap.
pub fn lower_central_series(group: &Arc<NilGroup>) -> Result<Filtration> {
    let g = &**group;
    let whole = Subgroup::whole(g)?;
    if whole.is_trivial() {
        return Ok(Filtration::from_parts(group.clone(), Vec::new(), None));
    }
    let mut levels = vec![whole.clone(), whole];
    loop {
        let next = levels.last().unwrap().bracket_with_ambient(g)?;
        if next.is_trivial() {
            return Ok(Filtration::from_parts(group.clone(), levels, None));
        }
        if levels.len() as u32 > g.class_cap() {
            let layers = levels
                .iter()
                .chain(std::iter::once(&next))
                .map(|s| s.generators())
                .collect();
            return Err(Error::NotNilpotent {
                cap: g.class_cap(),
                layers,
            });
        }
        levels.push(next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    fn lcs(g: NilGroup) -> (Arc<NilGroup>, Filtration) {
        let g = Arc::new(g);
        let f = lower_central_series(&g).unwrap();
        (g, f)
    }

    #[test]
    fn abelian_series() {
        let (_, f) = lcs(NilGroup::free_abelian(2));
        assert_eq!(f.length(), Length::Finite(1));
        assert!(f.is_filtration().unwrap());
    }

    #[test]
    fn heisenberg_series() {
        let (g, f) = lcs(NilGroup::heisenberg());
        assert_eq!(f.length(), Length::Finite(2));
        let c = g.element(vec![0, 0, 1]).unwrap();
        assert!(f.member(2, &c).unwrap());
        assert!(!f.member(2, &g.generator(0).unwrap()).unwrap());
        assert!(f.member(3, &g.identity()).unwrap());
        assert!(!f.member(3, &c).unwrap());
        let center = Subgroup::generated(&g, &[c]).unwrap();
        assert!(f.levels()[2].same(&g, &center).unwrap());
        f.validate().unwrap();
    }

    #[test]
    fn dihedral_not_nilpotent() {
        let g = Arc::new(NilGroup::z2_semidirect_z());
        let err = lower_central_series(&g).unwrap_err();
        let Error::NotNilpotent { cap, layers } = err else {
            panic!("expected non-nilpotence report");
        };
        assert_eq!(cap, 6);
        // G_{i+1} = 2ⁱℤ for 1 ≤ i ≤ cap
        for i in 1..=cap as usize {
            assert_eq!(layers[i + 1], vec![g.element(vec![0, 1 << i]).unwrap()]);
        }
    }

    #[test]
    fn shift_lengths() {
        let (_, f) = lcs(NilGroup::heisenberg());
        assert_eq!(f.shift(1).length(), Length::Finite(1));
        assert_eq!(f.shift(2).length(), Length::Finite(0));
        assert_eq!(f.shift(3).length(), Length::MinusInfinity);
        assert!(f.shift(1).is_filtration().is_ok());
    }

    #[test]
    fn quotient_by_center() {
        let (g, f) = lcs(NilGroup::heisenberg());
        let q = f.quotient(2).unwrap();
        assert_eq!(q.length(), Length::Finite(1));
        let c = g.element(vec![0, 0, 1]).unwrap();
        // c is trivial in the quotient, at every level
        assert!(q.member(0, &c).unwrap());
        assert!(q.member(5, &c).unwrap());
        assert!(!q.member(5, &g.generator(0).unwrap()).unwrap());
        let q0 = f.quotient(0).unwrap();
        assert_eq!(q0.length(), Length::MinusInfinity);
        assert!(q0.member(7, &g.generator(0).unwrap()).unwrap());
    }

    #[test]
    fn reindex_doubles_levels() {
        let (g, f) = lcs(NilGroup::heisenberg());
        let r = f.reindex(&[0, 2, 4]).unwrap();
        assert_eq!(r.length(), Length::Finite(4));
        assert!(r.levels()[1].same(&g, &f.levels()[1]).unwrap());
        assert!(r.levels()[2].same(&g, &f.levels()[1]).unwrap());
        assert!(r.levels()[3].same(&g, &f.levels()[2]).unwrap());
        assert!(r.levels()[4].same(&g, &f.levels()[2]).unwrap());
        r.validate().unwrap();
        // sublinear sequences are rejected
        assert!(f.reindex(&[0, 2, 3]).is_err());
        assert!(f.reindex(&[1, 2, 4]).is_err());
    }

    #[test]
    fn validation_rejects_non_normal_level() {
        let g = Arc::new(NilGroup::heisenberg());
        let whole = Subgroup::whole(&g).unwrap();
        let x_only = Subgroup::generated(&g, &[g.generator(0).unwrap()]).unwrap();
        let err = Filtration::new(g.clone(), vec![whole.clone(), whole, x_only], None);
        assert!(err.is_err());
    }
}
