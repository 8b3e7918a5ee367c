//! Desk-scale certification of multiple recurrence on finite
//! measure-preserving systems: exact rational measures of joint return
//! sets μ(⋂ᵢ A·Sᵢ⁻¹), and exhaustive positivity scans over the
//! depth-bounded sub-ring of an IP system of times. Everything is finite
//! and exact — no limits, no sampling; a report covers every ring element
//! of the requested depth.

use std::sync::Arc;

use num::bigint::BigInt;
use num::{BigRational, Integer, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::genpoly::{GenPoly, IPSystem};
use crate::hjsearch::PermAction;
use crate::ipcore::{FinSet, IPRing, OrderedTuple};
use crate::nilgroup::{GroupElement, NilGroup};
use crate::pexpr::PolyExpr;
use crate::{Error, Result};

/// Most chain blocks a positivity scan may expand (2^depth − 1 ring
/// elements).
pub const RING_DEPTH_CAP: usize = 12;

/// A finite measure-preserving system: a validated right action together
/// with rational point weights that sum to one and are constant along
/// every generator's permutation (hence along the whole group).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMPS {
    action: PermAction,
    weights: Vec<BigRational>,
}

impl FiniteMPS {
    pub fn new(action: PermAction, weights: Vec<BigRational>) -> Result<FiniteMPS> {
        let n = action.points();
        if weights.len() != n {
            return Err(Error::invalid(format!(
                "expected one weight per point: got {}, the space has {n}",
                weights.len()
            )));
        }
        if weights.iter().any(BigRational::is_negative) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        let total: BigRational = weights.iter().sum();
        if total != BigRational::from_integer(BigInt::from(1)) {
            return Err(Error::invalid(format!("weights must sum to 1, got {total}")));
        }
        // invariance under each generator extends to the whole group
        for i in 0..action.group().rank() {
            let perm = action.perm(i)?;
            for p in 0..n {
                if weights[perm[p]] != weights[p] {
                    return Err(Error::invalid(format!(
                        "generator {i} does not preserve the measure at point {p}"
                    )));
                }
            }
        }
        Ok(FiniteMPS { action, weights })
    }

    pub fn uniform(action: PermAction) -> Result<FiniteMPS> {
        let n = action.points();
        let w = BigRational::new(BigInt::from(1), BigInt::from(n));
        FiniteMPS::new(action, vec![w; n])
    }

    pub fn action(&self) -> &PermAction {
        &self.action
    }

    pub fn group(&self) -> &Arc<NilGroup> {
        self.action.group()
    }

    pub fn points(&self) -> usize {
        self.action.points()
    }

    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    /// μ of a point set; duplicates are counted once.
    pub fn measure(&self, set: &[usize]) -> Result<BigRational> {
        Ok(self
            .membership(set)?
            .iter()
            .zip(&self.weights)
            .filter(|(m, _)| **m)
            .map(|(_, w)| w)
            .sum())
    }

    fn membership(&self, set: &[usize]) -> Result<Vec<bool>> {
        let mut in_set = vec![false; self.points()];
        for &p in set {
            if p >= self.points() {
                return Err(Error::invalid(format!(
                    "point {p} out of range; the space has {} points",
                    self.points()
                )));
            }
            in_set[p] = true;
        }
        Ok(in_set)
    }

    /// μ({x : x·g ∈ A for every g}), optionally intersected with A itself.
    fn joint_measure(
        &self,
        in_a: &[bool],
        elems: &[GroupElement],
        include_a: bool,
    ) -> Result<BigRational> {
        let mut total = BigRational::zero();
        'point: for p in 0..self.points() {
            if include_a && !in_a[p] {
                continue;
            }
            for g in elems {
                if !in_a[self.action.act(p, g)?] {
                    continue 'point;
                }
            }
            total += &self.weights[p];
        }
        Ok(total)
    }
}

// ----- built-in systems -----

/// ℤ_n with uniform measure, rotated by right translation; point p is the
/// residue p.
pub fn cyclic_rotation(n: u64) -> Result<FiniteMPS> {
    let g = Arc::new(NilGroup::cyclic(n));
    let n_points = usize::try_from(n)
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::invalid("the rotation needs at least one residue"))?;
    let (_, action) = PermAction::right_translation(&g, n_points)?;
    FiniteMPS::uniform(action)
}

/// The skew product T(x, y) = (x + a, y + x) on ℤ_n × ℤ_n with uniform
/// measure, as a ℤ-action; point (x, y) is the index x·n + y. Iterates
/// pick up the quadratic term T^k(x, y) = (x + ka, y + kx + C(k,2)·a).
pub fn torus_skew(n: usize, a: usize) -> Result<FiniteMPS> {
    if n == 0 {
        return Err(Error::invalid("the torus needs a positive modulus"));
    }
    let n_points = n
        .checked_mul(n)
        .ok_or_else(|| Error::invalid("torus modulus out of range"))?;
    let g = Arc::new(NilGroup::free_abelian(1));
    let mut perm = Vec::with_capacity(n_points);
    for x in 0..n {
        for y in 0..n {
            perm.push(((x + a) % n) * n + (y + x) % n);
        }
    }
    let action = PermAction::new(&g, n_points, vec![perm])?;
    FiniteMPS::uniform(action)
}

/// A finite group acting on itself by right translation under uniform
/// (Haar) measure; also hands back the point-index-to-element table.
pub fn translation_system(
    group: &Arc<NilGroup>,
    cap: usize,
) -> Result<(Vec<GroupElement>, FiniteMPS)> {
    let (elems, action) = PermAction::right_translation(group, cap)?;
    Ok((elems, FiniteMPS::uniform(action)?))
}

// ----- joint return measures -----

/// μ(⋂ᵢ A·Sᵢ(t)⁻¹), exactly: the weight of the points x with x·Sᵢ(t) ∈ A
/// for every map of the system. The system is explicit — include the
/// identity expression when A itself should participate.
pub fn return_measure(
    sys: &FiniteMPS,
    a: &[usize],
    system: &[PolyExpr],
    tuple: &OrderedTuple,
) -> Result<BigRational> {
    if system.is_empty() {
        return Err(Error::invalid("nothing to intersect: the system is empty"));
    }
    for e in system {
        if **e.group() != **sys.group() {
            return Err(Error::invalid("system and space disagree about the group"));
        }
    }
    let tuple = OrderedTuple::new(tuple.sets().to_vec())?;
    let in_a = sys.membership(a)?;
    let elems: Vec<GroupElement> = system
        .iter()
        .map(|e| e.eval(tuple.sets()))
        .collect::<Result<_>>()?;
    sys.joint_measure(&in_a, &elems, false)
}

/// One positivity scan: the exact measure at every nonempty union of the
/// first `depth` chain blocks, the minimum over that table, and the ring
/// elements with positive measure. Entries are in ascending order of the
/// block-selector mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReturnReport {
    pub entries: Vec<(FinSet, BigRational)>,
    pub minimum: BigRational,
    pub positive: Vec<FinSet>,
}

impl ReturnReport {
    /// Whether some ring element yields positive measure — the
    /// intersection witness at this depth.
    pub fn found(&self) -> bool {
        !self.positive.is_empty()
    }
}

/// Exponents reduce modulo a finite generator order before they must fit
/// the machine range; an infinite-order exponent that does not fit is a
/// resource failure, not a wrong answer.
fn reduce_exponent(group: &NilGroup, i: usize, e: BigInt) -> Result<i64> {
    match group.order(i) {
        Some(m) => {
            if m > i64::MAX as u64 {
                return Err(Error::invalid(format!(
                    "generator {i} order too large to reduce against"
                )));
            }
            let r = e.mod_floor(&BigInt::from(m));
            Ok(r.to_i64().expect("residue below a fitting modulus"))
        }
        None => e.to_i64().ok_or_else(|| {
            Error::CapExceeded(format!(
                "exponent of generator {i} exceeds the machine range"
            ))
        }),
    }
}

/// Scans every nonempty union α of the first `depth` chain blocks and
/// computes μ(A ∩ ⋂ⱼ A·Sⱼ(α)⁻¹) with Sⱼ(α) = ∏ᵢ Tᵢ^{pᵢⱼ(n_α)}: the Tᵢ
/// are the acting group's generators in normal-form order, pᵢⱼ is the
/// exponent matrix entry for generator i and column j, and n_α is the IP
/// system's sum over α. The identity factor (A itself) is always part of
/// the intersection. Embarrassingly parallel over ring elements with a
/// deterministic table order.
pub fn recurrence_check(
    sys: &FiniteMPS,
    a: &[usize],
    polys: &[Vec<GenPoly>],
    times: &IPSystem,
    chain: &IPRing,
    depth: usize,
) -> Result<ReturnReport> {
    let group = sys.group().clone();
    if depth == 0 {
        return Err(Error::invalid("a depth-0 ring is empty; nothing to scan"));
    }
    if depth > RING_DEPTH_CAP {
        return Err(Error::CapExceeded(format!(
            "positivity scans are capped at depth {RING_DEPTH_CAP}"
        )));
    }
    if depth > chain.len() {
        return Err(Error::invalid(format!(
            "depth {depth} asks for more blocks than the chain's {}",
            chain.len()
        )));
    }
    if polys.len() != group.rank() {
        return Err(Error::invalid(format!(
            "expected one exponent row per generator: got {}, rank is {}",
            polys.len(),
            group.rank()
        )));
    }
    let cols = polys[0].len();
    if cols == 0 || polys.iter().any(|row| row.len() != cols) {
        return Err(Error::invalid(
            "the exponent matrix needs one nonempty column set shared by every row",
        ));
    }
    for row in polys {
        for p in row {
            if p.arity() > times.dim() {
                return Err(Error::invalid(format!(
                    "an exponent polynomial uses {} variables, the times have dimension {}",
                    p.arity(),
                    times.dim()
                )));
            }
        }
    }
    for (b, block) in chain.chain()[..depth].iter().enumerate() {
        if block.max().is_none_or(|m| m >= times.len()) {
            return Err(Error::invalid(format!(
                "chain block {b} leaves the IP system's {} positions",
                times.len()
            )));
        }
    }
    let in_a = sys.membership(a)?;
    let entries: Vec<(FinSet, BigRational)> = (1u64..(1 << depth))
        .into_par_iter()
        .map(|sel| -> Result<(FinSet, BigRational)> {
            let alpha = chain.union_of(sel);
            let n = times.n_at(alpha.mask());
            let mut elems = Vec::with_capacity(cols);
            for j in 0..cols {
                let mut exps = Vec::with_capacity(group.rank());
                for (i, row) in polys.iter().enumerate() {
                    exps.push(reduce_exponent(&group, i, row[j].eval(&n)?)?);
                }
                elems.push(group.element(exps)?);
            }
            Ok((alpha, sys.joint_measure(&in_a, &elems, true)?))
        })
        .collect::<Result<_>>()?;
    let minimum = entries
        .iter()
        .map(|(_, m)| m)
        .min()
        .expect("depth >= 1 produced entries")
        .clone();
    let positive = entries
        .iter()
        .filter(|(_, m)| m.is_positive())
        .map(|(s, _)| *s)
        .collect();
    Ok(ReturnReport {
        entries,
        minimum,
        positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genpoly::parse_genpoly;
    use crate::nilgroup::{Filtration, Subgroup};
    use crate::polymap::PolyMap;
    use proptest::prelude::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn whole_chain(group: &Arc<NilGroup>, d: usize) -> Arc<Filtration> {
        let whole = Subgroup::whole(group).unwrap();
        Arc::new(Filtration::new(group.clone(), vec![whole; d + 1], None).unwrap())
    }

    /// α ↦ x₀^f(|α|) as an arity-1 expression.
    fn count_expr(base: &Arc<Filtration>, ground: usize, f: impl Fn(u32) -> i64) -> PolyExpr {
        let group = base.group().clone();
        let map = PolyMap::from_fn(base, 0, ground, |mask| {
            group.element({
                let mut exps = vec![0; group.rank()];
                exps[0] = f(mask.count_ones());
                exps
            })
        })
        .unwrap();
        PolyExpr::from_map(map).unwrap()
    }

    fn identity_expr(base: &Arc<Filtration>, ground: usize) -> PolyExpr {
        PolyExpr::from_map(PolyMap::identity_map(base, ground).unwrap()).unwrap()
    }

    fn singleton_chain(len: usize) -> IPRing {
        IPRing::new((0..len).map(|i| FinSet::new(1 << i)).collect()).unwrap()
    }

    /// Two 3-cycles under ℤ₃ with distinct orbit weights: the smallest
    /// honestly nonuniform system.
    fn two_orbit_system() -> (Arc<NilGroup>, FiniteMPS) {
        let g = Arc::new(NilGroup::cyclic(3));
        let action = PermAction::new(&g, 6, vec![vec![1, 2, 0, 4, 5, 3]]).unwrap();
        let weights = vec![
            rat(1, 12),
            rat(1, 12),
            rat(1, 12),
            rat(3, 12),
            rat(3, 12),
            rat(3, 12),
        ];
        (g, FiniteMPS::new(action, weights).unwrap())
    }

    #[test]
    fn weights_must_preserve_the_measure() {
        let g = Arc::new(NilGroup::cyclic(3));
        let action = PermAction::new(&g, 6, vec![vec![1, 2, 0, 4, 5, 3]]).unwrap();
        // not constant along the first orbit
        let skewed = vec![
            rat(1, 12),
            rat(2, 12),
            rat(0, 12),
            rat(3, 12),
            rat(3, 12),
            rat(3, 12),
        ];
        assert!(FiniteMPS::new(action.clone(), skewed).is_err());
        // wrong total
        let short = vec![rat(1, 12); 6];
        assert!(FiniteMPS::new(action.clone(), short).is_err());
        // negative weight
        let negative = vec![
            rat(-1, 12),
            rat(-1, 12),
            rat(-1, 12),
            rat(5, 12),
            rat(5, 12),
            rat(5, 12),
        ];
        assert!(FiniteMPS::new(action, negative).is_err());
    }

    #[test]
    fn translation_invariance_of_the_measure() {
        let (g, sys) = two_orbit_system();
        let sets: [&[usize]; 4] = [&[0], &[0, 3], &[1, 2, 4], &[0, 1, 2, 3, 4, 5]];
        for e in g.elements(8).unwrap() {
            for b in sets {
                let image: Vec<usize> = b
                    .iter()
                    .map(|&p| sys.action().act(p, &e).unwrap())
                    .collect();
                assert_eq!(sys.measure(&image).unwrap(), sys.measure(b).unwrap());
            }
        }
        assert_eq!(sys.measure(&[0, 3]).unwrap(), rat(4, 12));
        // duplicates count once
        assert_eq!(sys.measure(&[0, 0, 3]).unwrap(), rat(4, 12));
    }

    #[test]
    fn identity_system_returns_the_measure_of_a() {
        let sys = cyclic_rotation(4).unwrap();
        let base = whole_chain(sys.group(), 2);
        let system = vec![identity_expr(&base, 2)];
        let t = OrderedTuple::new(vec![FinSet::new(1)]).unwrap();
        let a = [0usize, 1, 2];
        assert_eq!(
            return_measure(&sys, &a, &system, &t).unwrap(),
            sys.measure(&a).unwrap()
        );
    }

    #[test]
    fn rotation_by_one_drops_a_point() {
        let sys = cyclic_rotation(4).unwrap();
        let base = whole_chain(sys.group(), 2);
        let system = vec![
            identity_expr(&base, 2),
            count_expr(&base, 2, |c| c as i64),
        ];
        let t = OrderedTuple::new(vec![FinSet::new(1)]).unwrap();
        // A ∩ A·T⁻¹ over A = {0,1,2}: the points whose successor also
        // lies in A, namely {0, 1}
        let direct: Vec<usize> = (0..4)
            .filter(|&p| [0, 1, 2].contains(&p) && [0, 1, 2].contains(&((p + 1) % 4)))
            .collect();
        assert_eq!(direct, vec![0, 1]);
        assert_eq!(
            return_measure(&sys, &[0, 1, 2], &system, &t).unwrap(),
            rat(1, 2)
        );
    }

    #[test]
    fn whole_space_always_returns_one() {
        let sys = cyclic_rotation(5).unwrap();
        let base = whole_chain(sys.group(), 2);
        let system = vec![
            count_expr(&base, 2, |c| c as i64),
            count_expr(&base, 2, |c| 3 * c as i64),
        ];
        let t = OrderedTuple::new(vec![FinSet::new(3)]).unwrap();
        let all: Vec<usize> = (0..5).collect();
        assert_eq!(return_measure(&sys, &all, &system, &t).unwrap(), rat(1, 1));
    }

    #[test]
    fn empty_systems_and_foreign_groups_are_rejected() {
        let sys = cyclic_rotation(4).unwrap();
        let t = OrderedTuple::new(vec![FinSet::new(1)]).unwrap();
        assert!(return_measure(&sys, &[0], &[], &t).is_err());
        let other = Arc::new(NilGroup::cyclic(5));
        let foreign = identity_expr(&whole_chain(&other, 2), 2);
        assert!(return_measure(&sys, &[0], &[foreign], &t).is_err());
        assert!(sys.measure(&[7]).is_err());
    }

    #[test]
    fn skew_product_matches_direct_iteration() {
        let n = 3usize;
        let sys = torus_skew(n, 1).unwrap();
        let g = sys.group().clone();
        for x in 0..n {
            for y in 0..n {
                let p = x * n + y;
                let mut manual = (x, y);
                for k in 0..=6i64 {
                    // closed form (x + k, y + kx + C(k,2)) mod n
                    let kk = k as usize;
                    let closed =
                        ((x + kk) % n) * n + (y + kk * x + kk * kk.saturating_sub(1) / 2) % n;
                    let via_action = sys
                        .action()
                        .act(p, &g.element(vec![k]).unwrap())
                        .unwrap();
                    assert_eq!(via_action, manual.0 * n + manual.1, "k = {k}");
                    assert_eq!(via_action, closed, "k = {k}");
                    manual = ((manual.0 + 1) % n, (manual.1 + manual.0) % n);
                }
            }
        }
    }

    #[test]
    fn trivial_action_keeps_every_measure_at_mu_a() {
        let g = Arc::new(NilGroup::free_abelian(1));
        let action = PermAction::new(&g, 5, vec![(0..5).collect()]).unwrap();
        let sys = FiniteMPS::uniform(action).unwrap();
        let polys = vec![vec![parse_genpoly("x1").unwrap()]];
        let times = IPSystem::new(vec![vec![1], vec![2], vec![4]]).unwrap();
        let chain = singleton_chain(3);
        let report = recurrence_check(&sys, &[0, 2], &polys, &times, &chain, 3).unwrap();
        assert_eq!(report.entries.len(), 7);
        for (_, m) in &report.entries {
            assert_eq!(*m, rat(2, 5));
        }
        assert_eq!(report.minimum, rat(2, 5));
        assert_eq!(report.positive.len(), 7);
        assert!(report.found());
    }

    #[test]
    fn forced_positivity_on_the_twelve_point_rotation() {
        let sys = cyclic_rotation(12).unwrap();
        let a: Vec<usize> = (0..7).collect();
        assert_eq!(sys.measure(&a).unwrap(), rat(7, 12));
        let polys = vec![vec![parse_genpoly("x1").unwrap()]];
        let times = IPSystem::new((0..3).map(|i| vec![1i64 << i]).collect()).unwrap();
        let chain = singleton_chain(3);
        let report = recurrence_check(&sys, &a, &polys, &times, &chain, 3).unwrap();
        // n_α ranges over 1..=7; the overlap of two length-7 arcs of ℤ₁₂
        // is ≥ 2 points with equality at shifts 5, 6, 7
        assert_eq!(report.entries.len(), 7);
        assert_eq!(report.minimum, rat(1, 6));
        assert!(report.found());
        assert_eq!(report.positive.len(), 7);
        // inclusion–exclusion floor 2μ(A) − 1 holds with equality at the
        // minimum
        assert!(report.entries.iter().all(|(_, m)| *m >= rat(1, 6)));
        // independent recomputation of every entry
        for (alpha, m) in &report.entries {
            let k = times.n_at(alpha.mask())[0].to_i64().unwrap();
            let direct: Vec<usize> = (0..12)
                .filter(|&p| a.contains(&p) && a.contains(&(((p as i64 + k) % 12) as usize)))
                .collect();
            assert_eq!(sys.measure(&direct).unwrap(), *m);
        }
    }

    #[test]
    fn heisenberg_translations_certify_recurrence() {
        let g = Arc::new(NilGroup::heisenberg_mod(5));
        let (_, sys) = translation_system(&g, 200).unwrap();
        assert_eq!(sys.points(), 125);
        let a: Vec<usize> = (0..75).collect();
        assert_eq!(sys.measure(&a).unwrap(), rat(3, 5));
        // T₁^n · T₂^{n²} against a single intersected set
        let polys = vec![
            vec![parse_genpoly("x1").unwrap()],
            vec![parse_genpoly("x1^2").unwrap()],
            vec![GenPoly::Const(BigInt::zero())],
        ];
        let times = IPSystem::new(vec![vec![1], vec![2], vec![4]]).unwrap();
        let chain = singleton_chain(3);
        let report = recurrence_check(&sys, &a, &polys, &times, &chain, 3).unwrap();
        // μ(A ∩ A·S⁻¹) ≥ 2μ(A) − 1 = 1/5 forces a witness everywhere
        assert!(report.found());
        assert_eq!(report.positive.len(), 7);
        assert!(report.minimum >= rat(1, 5));
        // independent recomputation of a positive witness
        let (alpha, m) = &report.entries[2];
        let k = times.n_at(alpha.mask())[0].to_i64().unwrap();
        let s = g
            .element(vec![k.rem_euclid(5), (k * k).rem_euclid(5), 0])
            .unwrap();
        let direct: Vec<usize> = (0..125)
            .filter(|&p| a.contains(&p) && a.contains(&sys.action().act(p, &s).unwrap()))
            .collect();
        assert_eq!(sys.measure(&direct).unwrap(), *m);
        assert!(m.is_positive());
    }

    #[test]
    fn skew_quadratic_orbits_certify_recurrence() {
        let sys = torus_skew(3, 1).unwrap();
        let a: Vec<usize> = (0..6).collect();
        let polys = vec![vec![parse_genpoly("x1^2").unwrap()]];
        let times = IPSystem::new(vec![vec![1], vec![2], vec![3]]).unwrap();
        let chain = singleton_chain(3);
        let report = recurrence_check(&sys, &a, &polys, &times, &chain, 3).unwrap();
        // μ(A) = 2/3: positivity is forced at every ring element
        assert!(report.minimum >= rat(1, 3));
        assert_eq!(report.positive.len(), 7);
    }

    #[test]
    fn finite_orders_reduce_large_exponents() {
        let sys = cyclic_rotation(4).unwrap();
        let a = [0usize, 1, 2];
        let polys = vec![vec![parse_genpoly("x1^2").unwrap()]];
        // n₀ = 2^20: n² = 2^40 reduces to 0 mod 4, so the scan sees the
        // identity rotation
        let times = IPSystem::new(vec![vec![1 << 20]]).unwrap();
        let chain = singleton_chain(1);
        let report = recurrence_check(&sys, &a, &polys, &times, &chain, 1).unwrap();
        assert_eq!(report.entries.len(), 1);
        assert_eq!(report.minimum, rat(3, 4));
    }

    #[test]
    fn infinite_order_exponents_must_fit_the_machine() {
        let g = Arc::new(NilGroup::free_abelian(1));
        let action = PermAction::new(&g, 3, vec![(0..3).collect()]).unwrap();
        let sys = FiniteMPS::uniform(action).unwrap();
        let polys = vec![vec![parse_genpoly("x1^4").unwrap()]];
        // (2^20)^4 = 2^80 overflows i64 and cannot reduce
        let times = IPSystem::new(vec![vec![1 << 20]]).unwrap();
        let chain = singleton_chain(1);
        let err = recurrence_check(&sys, &[0], &polys, &times, &chain, 1).unwrap_err();
        assert!(matches!(err, Error::CapExceeded(_)), "{err}");
    }

    #[test]
    fn malformed_scans_are_rejected() {
        let sys = cyclic_rotation(4).unwrap();
        let polys = vec![vec![parse_genpoly("x1").unwrap()]];
        let times = IPSystem::new(vec![vec![1], vec![2]]).unwrap();
        let chain = singleton_chain(2);
        // depth 0
        assert!(recurrence_check(&sys, &[0], &polys, &times, &chain, 0).is_err());
        // more depth than chain
        assert!(recurrence_check(&sys, &[0], &polys, &times, &chain, 3).is_err());
        // wrong number of rows
        let fat = vec![
            vec![parse_genpoly("x1").unwrap()],
            vec![parse_genpoly("x1").unwrap()],
        ];
        assert!(recurrence_check(&sys, &[0], &fat, &times, &chain, 2).is_err());
        // ragged columns
        let ragged = vec![vec![
            parse_genpoly("x1").unwrap(),
            parse_genpoly("x1").unwrap(),
        ]];
        let thin = vec![vec![parse_genpoly("x1").unwrap()]];
        let two_gen = Arc::new(NilGroup::free_abelian(2));
        let action = PermAction::new(&two_gen, 2, vec![vec![0, 1], vec![0, 1]]).unwrap();
        let two_sys = FiniteMPS::uniform(action).unwrap();
        let uneven = vec![ragged[0].clone(), thin[0].clone()];
        assert!(recurrence_check(&two_sys, &[0], &uneven, &times, &chain, 2).is_err());
        // exponent polynomial over more variables than the times carry
        let wide = vec![vec![parse_genpoly("x2").unwrap()]];
        assert!(recurrence_check(&sys, &[0], &wide, &times, &chain, 2).is_err());
        // chain block outside the IP system's positions
        let long_chain = singleton_chain(3);
        let narrow = IPSystem::new(vec![vec![1], vec![2]]).unwrap();
        assert!(recurrence_check(&sys, &[0], &polys, &narrow, &long_chain, 3).is_err());
    }

    #[test]
    fn reports_are_deterministic_and_consistent() {
        let sys = cyclic_rotation(12).unwrap();
        let a: Vec<usize> = (0..7).collect();
        let polys = vec![vec![parse_genpoly("x1").unwrap()]];
        let times = IPSystem::new((0..3).map(|i| vec![1i64 << i]).collect()).unwrap();
        let chain = singleton_chain(3);
        let once = recurrence_check(&sys, &a, &polys, &times, &chain, 3).unwrap();
        let twice = recurrence_check(&sys, &a, &polys, &times, &chain, 3).unwrap();
        assert_eq!(once, twice);
        assert_eq!(
            once.minimum,
            once.entries.iter().map(|(_, m)| m).min().unwrap().clone()
        );
        let positive: Vec<FinSet> = once
            .entries
            .iter()
            .filter(|(_, m)| m.is_positive())
            .map(|(s, _)| *s)
            .collect();
        assert_eq!(once.positive, positive);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// μ(⋂ᵢ A·Sᵢ⁻¹) ≥ Σᵢ μ(A·Sᵢ⁻¹) − (|S|−1) on random sets, with
        /// each μ(A·Sᵢ⁻¹) recomputed directly from the permutation.
        #[test]
        fn inclusion_exclusion_lower_bound(a_mask in 0u8..=255) {
            let sys = cyclic_rotation(8).unwrap();
            let base = whole_chain(sys.group(), 2);
            let system = vec![
                identity_expr(&base, 2),
                count_expr(&base, 2, |c| c as i64),
                count_expr(&base, 2, |c| 2 * c as i64),
            ];
            let a: Vec<usize> = (0..8).filter(|&p| a_mask >> p & 1 == 1).collect();
            for mask in [1u64, 2, 3] {
                let t = OrderedTuple::new(vec![FinSet::new(mask)]).unwrap();
                let joint = return_measure(&sys, &a, &system, &t).unwrap();
                let mut bound = rat(-2, 1); // −(|S|−1)
                for e in &system {
                    let g = e.eval(t.sets()).unwrap();
                    let preimage: Vec<usize> = (0..8)
                        .filter(|&p| a.contains(&sys.action().act(p, &g).unwrap()))
                        .collect();
                    bound += sys.measure(&preimage).unwrap();
                }
                prop_assert!(joint >= bound, "joint {joint} under bound {bound}");
                prop_assert!(joint <= sys.measure(&a).unwrap());
            }
        }
    }
}
