//! Maps from finite subsets of a ground set into a nilpotent group,
//! classified against a prefiltration: discrete derivatives, the recursive
//! polynomiality test, levels, equivalence, weight vectors, and the
//! induction step that strictly decreases them.
//!
//! A map g is polynomial with respect to Gb when its values lie in G₀ and
//! every derivative D_βg(α) = g(α)⁻¹ g(α∪β) is polynomial with respect to
//! the shifted prefiltration Gb[+1]. On a finite ground set the recursion
//! terminates because each derivative strictly shrinks the domain and a
//! prefiltration of length −∞ admits only the identity map.

use crate::nilgroup::{Filtration, GroupElement, Length, NilGroup};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Default bound on the ground-set size for the recursive polynomiality
/// test; the test walks ordered set partitions, so this is a cost guard,
/// not a correctness bound.
pub const VERIFY_GROUND_CAP: usize = 5;

/// Hard bound on table-backed ground sets (tables hold 2^ground entries).
pub const TABLE_GROUND_CAP: usize = 12;

/// All submasks of `domain`, ascending (including 0 and `domain` itself).
pub fn submasks(domain: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(1 << domain.count_ones());
    let mut s = 0u64;
    loop {
        out.push(s);
        if s == domain {
            return out;
        }
        s = (s.wrapping_sub(domain)) & domain;
    }
}

/// A table-backed map from subsets of {0,…,ground−1} into a group, labeled
/// by the prefiltration `base[+shift]` it is measured against. The domain
/// is the set of submasks of `domain`; maps produced by derivatives live on
/// shrunken domains.
#[derive(Debug, Clone)]
pub struct PolyMap {
    group: Arc<NilGroup>,
    base: Arc<Filtration>,
    shift: u32,
    ground: usize,
    domain: u64,
    values: BTreeMap<u64, GroupElement>,
}

impl PartialEq for PolyMap {
    /// Equality as functions: same group, same domain, same values.
    /// The prefiltration label is bookkeeping, not part of the function.
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.group, &other.group)
            && self.ground == other.ground
            && self.domain == other.domain
            && self.values == other.values
    }
}

impl Eq for PolyMap {}

impl PolyMap {
    pub fn from_table(
        base: &Arc<Filtration>,
        shift: u32,
        ground: usize,
        domain: u64,
        values: BTreeMap<u64, GroupElement>,
    ) -> Result<PolyMap> {
        if ground > TABLE_GROUND_CAP {
            return Err(Error::CapExceeded(format!(
                "ground {ground} exceeds the table cap {TABLE_GROUND_CAP}"
            )));
        }
        let full = (1u64 << ground) - 1;
        if domain & !full != 0 {
            return Err(Error::invalid(
                "domain mask mentions elements outside the ground set",
            ));
        }
        let group = base.group().clone();
        for mask in submasks(domain) {
            match values.get(&mask) {
                None => {
                    return Err(Error::invalid(format!(
                        "table is missing a value for mask {mask}"
                    )))
                }
                Some(v) => {
                    if v.exponents().len() != group.rank() {
                        return Err(Error::invalid(format!(
                            "value at mask {mask} has the wrong rank"
                        )));
                    }
                }
            }
        }
        if values.len() != submasks(domain).len() {
            return Err(Error::invalid(
                "table carries values for masks outside the domain",
            ));
        }
        Ok(PolyMap {
            group,
            base: base.clone(),
            shift,
            ground,
            domain,
            values,
        })
    }

    /// Builds a full-domain map from a closure.
    pub fn from_fn<F>(base: &Arc<Filtration>, shift: u32, ground: usize, f: F) -> Result<PolyMap>
    where
        F: Fn(u64) -> Result<GroupElement>,
    {
        if ground > TABLE_GROUND_CAP {
            return Err(Error::CapExceeded(format!(
                "ground {ground} exceeds the table cap {TABLE_GROUND_CAP}"
            )));
        }
        let full = (1u64 << ground) - 1;
        let mut values = BTreeMap::new();
        for mask in submasks(full) {
            values.insert(mask, f(mask)?);
        }
        PolyMap::from_table(base, shift, ground, full, values)
    }

    pub fn constant(base: &Arc<Filtration>, ground: usize, c: &GroupElement) -> Result<PolyMap> {
        PolyMap::from_fn(base, 0, ground, |_| Ok(c.clone()))
    }

    pub fn identity_map(base: &Arc<Filtration>, ground: usize) -> Result<PolyMap> {
        let id = base.group().identity();
        PolyMap::constant(base, ground, &id)
    }

    pub fn group(&self) -> &Arc<NilGroup> {
        &self.group
    }

    pub fn base(&self) -> &Arc<Filtration> {
        &self.base
    }

    /// The prefiltration this map is labeled against: base[+shift].
    pub fn label(&self) -> Filtration {
        self.base.shift(self.shift)
    }

    pub fn shift(&self) -> u32 {
        self.shift
    }

    pub fn ground(&self) -> usize {
        self.ground
    }

    pub fn domain(&self) -> u64 {
        self.domain
    }

    pub fn values(&self) -> &BTreeMap<u64, GroupElement> {
        &self.values
    }

    pub fn eval(&self, mask: u64) -> Result<&GroupElement> {
        self.values.get(&mask).ok_or_else(|| {
            Error::invalid(format!("mask {mask} is outside the map's domain"))
        })
    }

    pub fn is_identity_map(&self) -> bool {
        self.values.values().all(|v| v.is_identity())
    }

    /// Vanishes at the empty set.
    pub fn is_vip_shaped(&self) -> bool {
        self.values[&0].is_identity()
    }

    /// Restriction to the submasks of `new_domain`.
    pub fn restrict(&self, new_domain: u64) -> Result<PolyMap> {
        if new_domain & !self.domain != 0 {
            return Err(Error::invalid(
                "restriction domain is not contained in the map's domain",
            ));
        }
        let values = submasks(new_domain)
            .into_iter()
            .map(|m| (m, self.values[&m].clone()))
            .collect();
        Ok(PolyMap {
            domain: new_domain,
            values,
            ..self.clone()
        })
    }

    fn check_compatible(&self, other: &PolyMap) -> Result<()> {
        if !Arc::ptr_eq(&self.group, &other.group) {
            return Err(Error::invalid("maps live over different groups"));
        }
        if self.ground != other.ground {
            return Err(Error::invalid("maps have different ground sets"));
        }
        if !Arc::ptr_eq(&self.base, &other.base) && !self.base.equivalent(&other.base)? {
            return Err(Error::invalid(
                "maps are labeled against different prefiltrations",
            ));
        }
        Ok(())
    }

    /// Pointwise product, on the common domain. Both factors are labeled
    /// base[+shift], and products of Gb-polynomials are Gb-polynomial, so
    /// the product keeps the weaker (smaller) shift.
    pub fn product(&self, other: &PolyMap) -> Result<PolyMap> {
        self.check_compatible(other)?;
        let domain = self.domain & other.domain;
        let mut values = BTreeMap::new();
        for m in submasks(domain) {
            values.insert(m, self.group.product(&self.values[&m], &other.values[&m])?);
        }
        Ok(PolyMap {
            group: self.group.clone(),
            base: self.base.clone(),
            shift: self.shift.min(other.shift),
            ground: self.ground,
            domain,
            values,
        })
    }

    /// Pointwise inverse; inverses of Gb-polynomials are Gb-polynomial.
    pub fn inverse(&self) -> Result<PolyMap> {
        let mut values = BTreeMap::new();
        for (m, v) in &self.values {
            values.insert(*m, self.group.inverse(v)?);
        }
        Ok(PolyMap {
            values,
            ..self.clone()
        })
    }

    /// Pointwise commutator. A commutator of maps labeled base[+t₀] and
    /// base[+t₁] is polynomial at base[+t₀+t₁].
    pub fn commutator(&self, other: &PolyMap) -> Result<PolyMap> {
        self.check_compatible(other)?;
        let domain = self.domain & other.domain;
        let mut values = BTreeMap::new();
        for m in submasks(domain) {
            values.insert(
                m,
                self.group
                    .commutator(&self.values[&m], &other.values[&m])?,
            );
        }
        Ok(PolyMap {
            group: self.group.clone(),
            base: self.base.clone(),
            shift: self.shift + other.shift,
            ground: self.ground,
            domain,
            values,
        })
    }

    /// α ↦ b · g(α) · b⁻¹.
    pub fn conjugate_pointwise(&self, b: &GroupElement) -> Result<PolyMap> {
        let bi = self.group.inverse(b)?;
        let mut values = BTreeMap::new();
        for (m, v) in &self.values {
            values.insert(*m, self.group.product(&self.group.product(b, v)?, &bi)?);
        }
        Ok(PolyMap {
            values,
            ..self.clone()
        })
    }

    /// D_βg(α) = g(α)⁻¹ g(α∪β) on {α ⊆ domain∖β}; labeled one shift deeper.
    pub fn derivative(&self, beta: u64) -> Result<PolyMap> {
        if beta == 0 {
            return Err(Error::invalid("derivative direction must be nonempty"));
        }
        if beta & !self.domain != 0 {
            return Err(Error::invalid(
                "derivative direction leaves the map's domain",
            ));
        }
        let domain = self.domain & !beta;
        let mut values = BTreeMap::new();
        for m in submasks(domain) {
            let v = self
                .group
                .product(&self.group.inverse(&self.values[&m])?, &self.values[&(m | beta)])?;
            values.insert(m, v);
        }
        Ok(PolyMap {
            group: self.group.clone(),
            base: self.base.clone(),
            shift: self.shift + 1,
            ground: self.ground,
            domain,
            values,
        })
    }

    /// sD_βg(α) = g(α)⁻¹ g(α∪β) g(β)⁻¹ = D_βg(α) · g(β)⁻¹, defined for
    /// maps vanishing at ∅; for those it is again such a map, one shift
    /// deeper.
    pub fn symmetric_derivative(&self, beta: u64) -> Result<PolyMap> {
        if !self.is_vip_shaped() {
            return Err(Error::invalid(
                "symmetric derivative requires a map vanishing at the empty set",
            ));
        }
        let d = self.derivative(beta)?;
        let binv = self.group.inverse(&self.values[&beta])?;
        let mut values = BTreeMap::new();
        for (m, v) in &d.values {
            values.insert(*m, self.group.product(v, &binv)?);
        }
        Ok(PolyMap { values, ..d })
    }

    /// The recursive polynomiality test against an explicit prefiltration:
    /// values in G₀ and every derivative polynomial one shift deeper; at
    /// length −∞ only the identity map (or the modulus, for quotients)
    /// remains.
    pub fn verify_polynomial(&self, f: &Filtration) -> Result<bool> {
        if self.ground > VERIFY_GROUND_CAP {
            return Err(Error::CapExceeded(format!(
                "polynomiality test capped at ground {VERIFY_GROUND_CAP}, got {}",
                self.ground
            )));
        }
        self.verify_rec(f)
    }

    fn verify_rec(&self, f: &Filtration) -> Result<bool> {
        for v in self.values.values() {
            if !f.member(0, v)? {
                return Ok(false);
            }
        }
        if f.length() == Length::MinusInfinity {
            return Ok(true);
        }
        let deeper = f.shift(1);
        for beta in submasks(self.domain) {
            if beta == 0 {
                continue;
            }
            if !self.derivative(beta)?.verify_rec(&deeper)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// The greatest l such that the map is polynomial against base[+l].
    /// The identity map is polynomial at every shift and has no level.
    pub fn level(&self) -> Result<u32> {
        if self.is_identity_map() {
            return Err(Error::invalid("the identity map has no level"));
        }
        let top = match self.base.length() {
            Length::MinusInfinity => {
                return Err(Error::invalid(
                    "no nonidentity map is polynomial against a length −∞ prefiltration",
                ))
            }
            Length::Finite(d) => d + 1,
        };
        for l in (0..=top).rev() {
            if self.verify_polynomial(&self.base.shift(l))? {
                return Ok(l);
            }
        }
        Err(Error::invalid(
            "map is not polynomial against its base prefiltration",
        ))
    }

    /// g ~ h: equal levels and l(g⁻¹h) strictly larger (with g = h
    /// trivially equivalent).
    pub fn equivalent_map(&self, other: &PolyMap) -> Result<bool> {
        let lg = self.level()?;
        let lh = other.level()?;
        if lg != lh {
            return Ok(false);
        }
        let q = self.inverse()?.product(other)?;
        if q.is_identity_map() {
            return Ok(true);
        }
        Ok(q.level()? > lg)
    }
}

/// Number of ~-classes per level. Zero counts are dropped. Comparison is
/// lexicographic with the count at level 0 most significant: the induction
/// step leaves the counts below the working level untouched, strictly
/// lowers the count at that level, and may grow counts above it, so this
/// is the order it descends along. Levels are bounded by length+1, so the
/// order is a well-order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightVector {
    counts: BTreeMap<u32, usize>,
}

impl WeightVector {
    pub fn counts(&self) -> &BTreeMap<u32, usize> {
        &self.counts
    }
}

impl PartialOrd for WeightVector {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for WeightVector {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let top = self
            .counts
            .keys()
            .chain(other.counts.keys())
            .max()
            .copied()
            .unwrap_or(0);
        for l in 0..=top {
            let a = self.counts.get(&l).copied().unwrap_or(0);
            let b = other.counts.get(&l).copied().unwrap_or(0);
            if a != b {
                return a.cmp(&b);
            }
        }
        std::cmp::Ordering::Equal
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "{{")?;
        for (i, (l, c)) in self.counts.iter().rev().enumerate() {
            if i > 0 {
                write!(out, ", ")?;
            }
            write!(out, "{l}: {c}")?;
        }
        write!(out, "}}")
    }
}

/// Partitions the non-identity maps of a system into ~-classes per level
/// and counts them.
pub fn weight_vector(system: &[PolyMap]) -> Result<WeightVector> {
    let mut by_level: BTreeMap<u32, Vec<&PolyMap>> = BTreeMap::new();
    for m in system {
        if m.is_identity_map() {
            continue;
        }
        by_level.entry(m.level()?).or_default().push(m);
    }
    let mut counts = BTreeMap::new();
    for (l, maps) in by_level {
        let mut reps: Vec<&PolyMap> = Vec::new();
        'maps: for m in maps {
            for r in &reps {
                if r.equivalent_map(m)? {
                    continue 'maps;
                }
            }
            reps.push(m);
        }
        counts.insert(l, reps.len());
    }
    Ok(WeightVector { counts })
}

/// The outcome of one induction step: the reduced system together with the
/// weights before and after (both computed on the reduced system's domain,
/// where the two are comparable).
#[derive(Debug, Clone)]
pub struct PetOutcome {
    pub reduced: Vec<PolyMap>,
    pub before: WeightVector,
    pub after: WeightVector,
}

/// One weight-reduction step: given a system A, a member h of maximal
/// level, a finite set B inside level 1, and nonempty direction sets M,
/// build A″ = { b · h⁻¹ g sD_βg · b⁻¹ : g ∈ A, β ∈ M, b ∈ B ∪ {1} } minus
/// identity maps, restricted to sets disjoint from every β. The weight
/// must strictly drop; a non-drop is an internal error, never returned as
/// a result.
pub fn pet_step(
    system: &[PolyMap],
    h_idx: usize,
    b_set: &[GroupElement],
    betas: &[u64],
) -> Result<PetOutcome> {
    let h = system
        .get(h_idx)
        .ok_or_else(|| Error::invalid("h index out of range"))?;
    if betas.is_empty() {
        return Err(Error::invalid("at least one direction set is required"));
    }
    let mut union = 0u64;
    for &b in betas {
        if b == 0 || b & !h.domain() != 0 {
            return Err(Error::invalid(
                "direction sets must be nonempty subsets of the domain",
            ));
        }
        union |= b;
    }
    for m in system {
        if !m.is_vip_shaped() {
            return Err(Error::invalid("the system must vanish at the empty set"));
        }
    }
    let h_level = h.level()?;
    for (i, m) in system.iter().enumerate() {
        if !m.is_identity_map() && m.level()? > h_level {
            return Err(Error::invalid(format!(
                "map {i} exceeds the designated maximal level"
            )));
        }
    }
    let level_one = h.base().subgroup_at(1);
    for b in b_set {
        if !level_one.contains(h.group(), b)? {
            return Err(Error::invalid(
                "conjugators must lie in the level-1 subgroup",
            ));
        }
    }
    let domain = h.domain() & !union;
    let h_inv = h.inverse()?;
    let mut reduced: Vec<PolyMap> = Vec::new();
    let identity = h.group().identity();
    let mut conjugators: Vec<&GroupElement> = vec![&identity];
    conjugators.extend(b_set.iter());
    for g in system {
        for &beta in betas {
            let sd = g.symmetric_derivative(beta)?;
            let core = h_inv.product(g)?.product(&sd)?.restrict(domain)?;
            for b in &conjugators {
                let map = core.conjugate_pointwise(b)?;
                if map.is_identity_map() || reduced.contains(&map) {
                    continue;
                }
                reduced.push(map);
            }
        }
    }
    let before_sys: Vec<PolyMap> = system
        .iter()
        .map(|m| m.restrict(domain))
        .collect::<Result<_>>()?;
    let before = weight_vector(&before_sys)?;
    let after = weight_vector(&reduced)?;
    if after >= before {
        return Err(Error::Internal(format!(
            "weight did not decrease: {after} against {before}"
        )));
    }
    Ok(PetOutcome {
        reduced,
        before,
        after,
    })
}

/// One named family of generators for a monomial-sum map: at level i, a
/// value g_{(t)} for every i-tuple t over the ground set. The empty tuple
/// (level 0) contributes a constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialEntry {
    pub level: u32,
    pub values: BTreeMap<Vec<usize>, GroupElement>,
}

/// A monomial-sum specification: g(α) = ∏ g_{(t)} over all entries and all
/// tuples t drawn from α, multiplied in a fixed linear order (entries in
/// listed order, tuples lexicographically within an entry). Any linear
/// order yields a polynomial map as long as level-i values sit in Gᵢ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialSpec {
    pub ground: usize,
    pub entries: Vec<MonomialEntry>,
}

fn tuples(ground: usize, len: u32) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..ground).map(move |x| {
                    let mut t2 = t.clone();
                    t2.push(x);
                    t2
                })
            })
            .collect();
    }
    out
}

/// Materializes a monomial-sum specification into a table-backed map,
/// after checking the level condition: every level-i value must lie in the
/// i-th level of the prefiltration.
pub fn monomial_map(spec: &MonomialSpec, base: &Arc<Filtration>) -> Result<PolyMap> {
    if spec.ground > TABLE_GROUND_CAP {
        return Err(Error::CapExceeded("monomial ground set too large".into()));
    }
    let group = base.group().clone();
    for (idx, entry) in spec.entries.iter().enumerate() {
        let expect = tuples(spec.ground, entry.level);
        if entry.values.len() != expect.len()
            || expect.iter().any(|t| !entry.values.contains_key(t))
        {
            return Err(Error::invalid(format!(
                "entry {idx} must assign a value to every {}-tuple over the ground set",
                entry.level
            )));
        }
        for (t, v) in &entry.values {
            if !base.member(entry.level, v)? {
                return Err(Error::invalid(format!(
                    "entry {idx} value at tuple {t:?} is not in level {}",
                    entry.level
                )));
            }
        }
    }
    PolyMap::from_fn(base, 0, spec.ground, |mask| {
        let mut acc = group.identity();
        for entry in &spec.entries {
            for (t, v) in &entry.values {
                if t.iter().all(|&x| mask >> x & 1 == 1) {
                    acc = group.product(&acc, v)?;
                }
            }
        }
        Ok(acc)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nilgroup::lower_central_series;

    /// ℤ with levels G₀ = … = G_d = ℤ: integer-valued maps measured by
    /// how many derivatives they survive.
    fn z_chain(d: u32) -> Arc<Filtration> {
        let g = Arc::new(NilGroup::free_abelian(1));
        let whole = crate::nilgroup::Subgroup::whole(&g).unwrap();
        Arc::new(Filtration::new(g, vec![whole; d as usize + 1], None).unwrap())
    }

    fn int_map(base: &Arc<Filtration>, ground: usize, f: impl Fn(u32) -> i64) -> PolyMap {
        let group = base.group().clone();
        PolyMap::from_fn(base, 0, ground, |mask| {
            group.element(vec![f(mask.count_ones())])
        })
        .unwrap()
    }

    #[test]
    fn cardinality_maps_have_expected_levels() {
        let base = z_chain(2);
        let card = int_map(&base, 4, |c| c as i64);
        let twice = int_map(&base, 4, |c| 2 * c as i64);
        let square = int_map(&base, 4, |c| (c * c) as i64);
        assert!(card.verify_polynomial(&base).unwrap());
        assert!(square.verify_polynomial(&base).unwrap());
        assert_eq!(card.level().unwrap(), 1);
        assert_eq!(twice.level().unwrap(), 1);
        assert_eq!(square.level().unwrap(), 0);
        // |α|³ needs three derivatives to die, one more than the chain has
        let cube = int_map(&base, 4, |c| (c * c * c) as i64);
        assert!(!cube.verify_polynomial(&base).unwrap());
        assert!(cube.verify_polynomial(&z_chain(3)).unwrap());
    }

    #[test]
    fn weight_vector_of_the_reference_system() {
        let base = z_chain(2);
        let system = vec![
            int_map(&base, 4, |c| c as i64),
            int_map(&base, 4, |c| 2 * c as i64),
            int_map(&base, 4, |c| (c * c) as i64),
        ];
        let w = weight_vector(&system).unwrap();
        let mut expect = BTreeMap::new();
        expect.insert(1u32, 2usize);
        expect.insert(0u32, 1usize);
        assert_eq!(w.counts(), &expect);
        assert_eq!(w.to_string(), "{1: 2, 0: 1}");
    }

    #[test]
    fn weight_order_prefers_lower_levels() {
        let mk = |pairs: &[(u32, usize)]| WeightVector {
            counts: pairs.iter().copied().collect(),
        };
        // the induction trades one class at a low level for many above it
        assert!(mk(&[(1, 5)]) < mk(&[(0, 1)]));
        assert!(mk(&[(0, 1), (1, 1)]) < mk(&[(0, 2)]));
        assert!(mk(&[]) < mk(&[(3, 1)]));
        assert_eq!(mk(&[(2, 1)]).cmp(&mk(&[(2, 1)])), std::cmp::Ordering::Equal);
    }

    #[test]
    fn pet_step_on_the_square() {
        let base = z_chain(2);
        let square = int_map(&base, 3, |c| (c * c) as i64);
        let out = pet_step(std::slice::from_ref(&square), 0, &[], &[0b001]).unwrap();
        assert!(out.after < out.before);
        assert_eq!(out.reduced.len(), 1);
        // sD over a singleton turns |α|² into 2|α|, one level up
        let d = &out.reduced[0];
        assert_eq!(d.level().unwrap(), 1);
        for m in submasks(d.domain()) {
            assert_eq!(d.eval(m).unwrap().exponents(), [2 * m.count_ones() as i64]);
        }
    }

    #[test]
    fn derivative_product_rule() {
        // D_β(g₀g₁) = Dg₀ · [Dg₀, g₁] · Dg₁ with every factor read at α
        let g = Arc::new(NilGroup::heisenberg());
        let f = Arc::new(lower_central_series(&g).unwrap());
        let m0 = PolyMap::from_fn(&f, 0, 3, |m| {
            let c = m.count_ones() as i64;
            f.group().element(vec![c, c * c, 1 - c])
        })
        .unwrap();
        let m1 = PolyMap::from_fn(&f, 0, 3, |m| {
            let c = (m & 0b101).count_ones() as i64;
            f.group().element(vec![-c, 3 * c, c * c])
        })
        .unwrap();
        for beta in [0b001u64, 0b010, 0b110] {
            let lhs = m0.product(&m1).unwrap().derivative(beta).unwrap();
            let d0 = m0.derivative(beta).unwrap();
            let d1 = m1.derivative(beta).unwrap();
            let m1r = m1.restrict(d0.domain()).unwrap();
            let rhs = d0.product(&d0.commutator(&m1r).unwrap()).unwrap().product(&d1).unwrap();
            assert_eq!(lhs, rhs, "direction {beta:#b}");
        }
    }

    #[test]
    fn derivative_inverse_rule() {
        // D_β(g⁻¹) = [g⁻¹, Dg] · (Dg)⁻¹
        let g = Arc::new(NilGroup::free_nilpotent_c3_r2());
        let f = Arc::new(lower_central_series(&g).unwrap());
        let m = PolyMap::from_fn(&f, 0, 3, |mask| {
            let c = mask.count_ones() as i64;
            f.group().element(vec![c * c, -c, 0, c, 2 * c])
        })
        .unwrap();
        for beta in [0b001u64, 0b011, 0b100] {
            let lhs = m.inverse().unwrap().derivative(beta).unwrap();
            let d = m.derivative(beta).unwrap();
            let mi = m.inverse().unwrap().restrict(d.domain()).unwrap();
            let rhs = mi.commutator(&d).unwrap().product(&d.inverse().unwrap()).unwrap();
            assert_eq!(lhs, rhs, "direction {beta:#b}");
        }
    }

    #[test]
    fn derivative_commutator_rule() {
        // D_β[g₀,g₁] = [g₀,Dg₁]·[[g₀,Dg₁],[g₀,g₁]]·[[g₀,g₁],Dg₁]
        //             ·[[g₀,g₁Dg₁],Dg₀]·[Dg₀,g₁Dg₁]
        let g = Arc::new(NilGroup::free_nilpotent_c3_r2());
        let f = Arc::new(lower_central_series(&g).unwrap());
        let m0 = PolyMap::from_fn(&f, 0, 3, |mask| {
            let c = mask.count_ones() as i64;
            f.group().element(vec![c, c - 2, 0, 1, c])
        })
        .unwrap();
        let m1 = PolyMap::from_fn(&f, 0, 3, |mask| {
            let c = (mask & 0b011).count_ones() as i64;
            f.group().element(vec![2 - c, c, c, 0, -c])
        })
        .unwrap();
        for beta in [0b001u64, 0b010, 0b101] {
            let lhs = m0.commutator(&m1).unwrap().derivative(beta).unwrap();
            let dom = lhs.domain();
            let g0 = m0.restrict(dom).unwrap();
            let g1 = m1.restrict(dom).unwrap();
            let d0 = m0.derivative(beta).unwrap();
            let d1 = m1.derivative(beta).unwrap();
            let c01 = g0.commutator(&g1).unwrap();
            let g1d1 = g1.product(&d1).unwrap();
            let t1 = g0.commutator(&d1).unwrap();
            let t2 = t1.commutator(&c01).unwrap();
            let t3 = c01.commutator(&d1).unwrap();
            let t4 = g0.commutator(&g1d1).unwrap().commutator(&d0).unwrap();
            let t5 = d0.commutator(&g1d1).unwrap();
            let rhs = t1
                .product(&t2)
                .unwrap()
                .product(&t3)
                .unwrap()
                .product(&t4)
                .unwrap()
                .product(&t5)
                .unwrap();
            assert_eq!(lhs, rhs, "direction {beta:#b}");
        }
    }

    #[test]
    fn symmetric_derivative_relation() {
        let base = z_chain(2);
        let square = int_map(&base, 4, |c| (c * c) as i64);
        for beta in [0b0001u64, 0b0110] {
            let sd = square.symmetric_derivative(beta).unwrap();
            let d = square.derivative(beta).unwrap();
            let shift = square.eval(beta).unwrap().clone();
            for m in submasks(sd.domain()) {
                let expect = base
                    .group()
                    .product(d.eval(m).unwrap(), &base.group().inverse(&shift).unwrap())
                    .unwrap();
                assert_eq!(sd.eval(m).unwrap(), &expect);
            }
        }
        // rejected on maps that do not vanish at ∅
        let c1 = int_map(&base, 4, |_| 7);
        assert!(c1.symmetric_derivative(1).is_err());
    }

    #[test]
    fn vip_values_live_one_level_deep() {
        // maps vanishing at ∅ that pass the polynomiality test take all
        // their values inside level 1 — here a proper subgroup
        let g = Arc::new(NilGroup::heisenberg());
        let whole = crate::nilgroup::Subgroup::whole(&g).unwrap();
        let yc = crate::nilgroup::Subgroup::generated(
            &g,
            &[g.generator(1).unwrap(), g.generator(2).unwrap()],
        )
        .unwrap();
        let center =
            crate::nilgroup::Subgroup::generated(&g, &[g.generator(2).unwrap()]).unwrap();
        let f = Arc::new(Filtration::new(g.clone(), vec![whole, yc, center], None).unwrap());
        let level1 = f.subgroup_at(1);
        let m = PolyMap::from_fn(&f, 0, 3, |mask| {
            let c = mask.count_ones() as i64;
            f.group().element(vec![0, c, c * c])
        })
        .unwrap();
        assert!(m.is_vip_shaped());
        assert!(m.verify_polynomial(&f).unwrap());
        for v in m.values().values() {
            assert!(level1.contains(&g, v).unwrap());
        }
        // and a VIP-shaped map that leaves level 1 is not polynomial
        let bad = PolyMap::from_fn(&f, 0, 3, |mask| {
            let c = mask.count_ones() as i64;
            f.group().element(vec![c, 0, 0])
        })
        .unwrap();
        assert!(bad.is_vip_shaped());
        assert!(!bad.verify_polynomial(&f).unwrap());
    }

    #[test]
    fn monomial_maps_are_polynomial() {
        let g = Arc::new(NilGroup::heisenberg());
        let f = Arc::new(lower_central_series(&g).unwrap());
        let gens = |level: u32, seed: i64| -> MonomialEntry {
            let mut values = BTreeMap::new();
            for t in tuples(3, level) {
                let k = t.iter().map(|&x| x as i64 + 1).sum::<i64>() + seed;
                let v = match level {
                    0 | 1 => f.group().element(vec![k, -k, 0]).unwrap(),
                    _ => f.group().element(vec![0, 0, k]).unwrap(),
                };
                values.insert(t, v);
            }
            MonomialEntry { level, values }
        };
        let spec = MonomialSpec {
            ground: 3,
            entries: vec![gens(1, 0), gens(2, 3)],
        };
        let m = monomial_map(&spec, &f).unwrap();
        assert!(m.verify_polynomial(&f).unwrap());
        // level condition is enforced: a level-2 value outside the center
        // is rejected
        let mut bad = spec.clone();
        bad.entries[1]
            .values
            .insert(vec![0, 0], f.group().element(vec![1, 0, 0]).unwrap());
        assert!(monomial_map(&bad, &f).is_err());
    }

    #[test]
    fn length_minus_infinity_admits_only_identity() {
        let g = Arc::new(NilGroup::free_abelian(1));
        let empty = Arc::new(Filtration::new(g.clone(), vec![], None).unwrap());
        let id = PolyMap::identity_map(&empty, 3).unwrap();
        assert!(id.verify_polynomial(&empty).unwrap());
        let c = PolyMap::constant(&empty, 3, &g.element(vec![1]).unwrap()).unwrap();
        assert!(!c.verify_polynomial(&empty).unwrap());
    }

    #[test]
    fn equivalence_is_an_equivalence_on_equal_levels() {
        let base = z_chain(3);
        let maps = vec![
            int_map(&base, 4, |c| (c * c) as i64),
            int_map(&base, 4, |c| (c * c) as i64 + c as i64),
            int_map(&base, 4, |c| (c * c * c) as i64),
            int_map(&base, 4, |c| c as i64),
        ];
        // |α|² ~ |α|²+|α| (difference |α| has higher level than... level
        // of |α| is 2 here, level of |α|² is 1, so they are equivalent)
        assert!(maps[0].equivalent_map(&maps[1]).unwrap());
        assert!(maps[1].equivalent_map(&maps[0]).unwrap());
        // |α|³ has level 0, different level ⇒ not equivalent
        assert!(!maps[0].equivalent_map(&maps[2]).unwrap());
        // reflexive
        assert!(maps[2].equivalent_map(&maps[2]).unwrap());
        // transitivity spot check at one level
        let a = int_map(&base, 4, |c| (c * c) as i64 + 2 * c as i64);
        assert!(maps[1].equivalent_map(&a).unwrap());
        assert!(maps[0].equivalent_map(&a).unwrap());
    }
}
