//! Exact arithmetic in finitely generated nilpotent groups given by
//! polycyclic presentations, together with the subgroup and filtration
//! calculus built on top of it.
//!
//! A presentation fixes generators x₀,…,x_{r−1}, a relative order per
//! generator (finite or infinite), and for each pair i < j a normal-form
//! word for the commutator [xᵢ,xⱼ] = xᵢ⁻¹xⱼ⁻¹xᵢxⱼ referencing only
//! generators of index greater than i. Finite-order generators may carry a
//! power-overflow word for xᵢ^{mᵢ} (identity when absent). Every element
//! then has a unique normal form x₀^{e₀}⋯x_{r−1}^{e_{r−1}} with the
//! exponents of finite-order generators reduced into [0, order); products
//! are computed by collection from the left.
//!
//! At construction the per-generator conjugation tables xⱼ^{xᵢ} and
//! xⱼ^{xᵢ⁻¹} are derived once — the positive one from the stored
//! commutator, the negative one by inverting the conjugation automorphism
//! (a terminating fixpoint when the action is unipotent, as it must be for
//! an infinite-order generator of a nilpotent group; finite-order
//! generators reduce negative powers to positive ones instead).

mod filtration;
mod subgroup;
mod word;

pub use filtration::{lower_central_series, DeriveOp, Filtration, Length};
pub use subgroup::{finite_index_test, hirsch_length, Subgroup};
pub use word::{inverse_word, push_run, word_power, Word};

use crate::{Error, Result};
use std::collections::{BTreeMap, VecDeque};

/// Default bound on nilpotency class used by series computations.
pub const DEFAULT_CLASS_CAP: u32 = 6;

/// Unit-letter budget for a single collection pass.
const COLLECTION_FUEL: u64 = 1 << 22;

/// Finite orders above this bound skip the iterated-conjugation part of the
/// consistency sweep (everything else is still checked).
const CONSISTENCY_ORDER_BOUND: u64 = 512;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NilGroup {
    rank: usize,
    orders: Vec<Option<u64>>,
    /// (i, j) with i < j  →  normal-form word for [xᵢ, xⱼ].
    comms: BTreeMap<(usize, usize), Word>,
    /// i → normal-form word for xᵢ^{mᵢ} when that overflow is nontrivial.
    powers: BTreeMap<usize, Word>,
    class_cap: u32,
    /// (i, j) → xⱼ^{xᵢ}, derived.
    pos_conj: BTreeMap<(usize, usize), GroupElement>,
    /// (i, j) → xⱼ^{xᵢ⁻¹}, derived for infinite-order xᵢ only.
    neg_conj: BTreeMap<(usize, usize), GroupElement>,
}

/// An element in normal form; exponents of finite-order generators lie in
/// [0, order).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement {
    pub(crate) exps: Vec<i64>,
}

impl GroupElement {
    pub fn exponents(&self) -> &[i64] {
        &self.exps
    }

    pub fn is_identity(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }
}

fn cap(msg: &str) -> Error {
    Error::CapExceeded(msg.into())
}

fn charge(fuel: &mut u64, amount: u64) -> Result<()> {
    *fuel = fuel
        .checked_sub(amount)
        .ok_or_else(|| cap("collection budget exhausted; check nilpotency and exponent sizes"))?;
    Ok(())
}

impl NilGroup {
    /// Validating constructor. Checks triangularity of the structure
    /// constants, derives the conjugation tables, and runs a consistency
    /// sweep (generator-triple associativity and finite-order
    /// compatibility).
    pub fn new(
        rank: usize,
        orders: Vec<Option<u64>>,
        comms: BTreeMap<(usize, usize), Word>,
        powers: BTreeMap<usize, Word>,
        class_cap: u32,
    ) -> Result<NilGroup> {
        if orders.len() != rank {
            return Err(Error::invalid("orders length must equal rank"));
        }
        if orders.iter().any(|o| *o == Some(0)) {
            return Err(Error::invalid("relative orders must be positive or null"));
        }
        for (&(i, j), w) in &comms {
            if i >= j || j >= rank {
                return Err(Error::invalid(format!(
                    "commutator key ({i},{j}) out of range for rank {rank}"
                )));
            }
            for &(g, _) in w {
                if g >= rank || g <= i {
                    return Err(Error::invalid(format!(
                        "commutator [{i},{j}] references generator {g}; only indices above {i} are allowed"
                    )));
                }
            }
        }
        for (&i, w) in &powers {
            if i >= rank {
                return Err(Error::invalid("power-overflow index out of range"));
            }
            if orders[i].is_none() {
                return Err(Error::invalid(
                    "power-overflow words apply only to finite-order generators",
                ));
            }
            for &(g, _) in w {
                if g >= rank || g <= i {
                    return Err(Error::invalid(format!(
                        "power overflow of generator {i} references generator {g}; only indices above {i} are allowed"
                    )));
                }
            }
        }
        let mut group = NilGroup {
            rank,
            orders,
            comms,
            powers,
            class_cap,
            pos_conj: BTreeMap::new(),
            neg_conj: BTreeMap::new(),
        };
        group.derive_conj_tables()?;
        group.consistency_check()?;
        Ok(group)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn orders(&self) -> &[Option<u64>] {
        &self.orders
    }

    pub fn order(&self, i: usize) -> Option<u64> {
        self.orders[i]
    }

    pub fn class_cap(&self) -> u32 {
        self.class_cap
    }

    pub fn with_class_cap(mut self, cap: u32) -> NilGroup {
        self.class_cap = cap;
        self
    }

    pub fn commutator_words(&self) -> &BTreeMap<(usize, usize), Word> {
        &self.comms
    }

    pub fn power_words(&self) -> &BTreeMap<usize, Word> {
        &self.powers
    }

    // ----- constructions used throughout the test corpus -----

    /// ℤᵏ with the trivial commutator table.
    pub fn free_abelian(k: usize) -> NilGroup {
        NilGroup::new(k, vec![None; k], BTreeMap::new(), BTreeMap::new(), DEFAULT_CLASS_CAP)
            .expect("abelian presentation is consistent")
    }

    /// ℤ/m.
    pub fn cyclic(m: u64) -> NilGroup {
        NilGroup::new(1, vec![Some(m)], BTreeMap::new(), BTreeMap::new(), DEFAULT_CLASS_CAP)
            .expect("cyclic presentation is consistent")
    }

    /// Integer Heisenberg group: x₀, x₁ with [x₀,x₁] = x₂ central; the free
    /// class-2 nilpotent group on two generators.
    pub fn heisenberg() -> NilGroup {
        let mut comms = BTreeMap::new();
        comms.insert((0, 1), vec![(2, 1)]);
        NilGroup::new(3, vec![None; 3], comms, BTreeMap::new(), DEFAULT_CLASS_CAP)
            .expect("Heisenberg presentation is consistent")
    }

    /// Heisenberg group over ℤ/m: all three generators of order m.
    pub fn heisenberg_mod(m: u64) -> NilGroup {
        let mut comms = BTreeMap::new();
        comms.insert((0, 1), vec![(2, 1)]);
        NilGroup::new(
            3,
            vec![Some(m); 3],
            comms,
            BTreeMap::new(),
            DEFAULT_CLASS_CAP,
        )
        .expect("finite Heisenberg presentation is consistent")
    }

    /// Free class-3 nilpotent group on two generators, on the Hall basis
    /// x₀, x₁, x₂=[x₀,x₁], x₃=[x₂,x₀], x₄=[x₂,x₁].
    pub fn free_nilpotent_c3_r2() -> NilGroup {
        let mut comms = BTreeMap::new();
        comms.insert((0, 1), vec![(2, 1)]);
        comms.insert((0, 2), vec![(3, -1)]);
        comms.insert((1, 2), vec![(4, -1)]);
        NilGroup::new(5, vec![None; 5], comms, BTreeMap::new(), DEFAULT_CLASS_CAP)
            .expect("free class-3 presentation is consistent")
    }

    /// Infinite dihedral group ℤ₂ ⋉ ℤ with the inversion action:
    /// x₀² = 1 and [x₀,x₁] = x₁². Polycyclic but not nilpotent.
    pub fn z2_semidirect_z() -> NilGroup {
        let mut comms = BTreeMap::new();
        comms.insert((0, 1), vec![(1, 2)]);
        NilGroup::new(
            2,
            vec![Some(2), None],
            comms,
            BTreeMap::new(),
            DEFAULT_CLASS_CAP,
        )
        .expect("dihedral presentation is consistent")
    }

    // ----- elements -----

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            exps: vec![0; self.rank],
        }
    }

    pub fn generator(&self, i: usize) -> Result<GroupElement> {
        if i >= self.rank {
            return Err(Error::invalid(format!(
                "generator index {i} out of range for rank {}",
                self.rank
            )));
        }
        self.eval_word(&[(i, 1)])
    }

    /// The element x₀^{e₀}⋯x_{r−1}^{e_{r−1}} for an arbitrary exponent
    /// vector (finite-order coordinates are reduced).
    pub fn element(&self, exps: Vec<i64>) -> Result<GroupElement> {
        if exps.len() != self.rank {
            return Err(Error::invalid(format!(
                "exponent vector length {} does not match rank {}",
                exps.len(),
                self.rank
            )));
        }
        let word: Word = exps
            .iter()
            .enumerate()
            .filter(|&(_, &e)| e != 0)
            .map(|(g, &e)| (g, e))
            .collect();
        self.eval_word(&word)
    }

    /// Every element of a finite group (each generator of finite order),
    /// in ascending lexicographic order of normal-form exponent vectors.
    pub fn elements(&self, cap: usize) -> Result<Vec<GroupElement>> {
        let mut total: usize = 1;
        for (i, o) in self.orders.iter().enumerate() {
            let m = o.ok_or_else(|| {
                Error::invalid(format!(
                    "generator {i} has infinite order; the group is not finite"
                ))
            })?;
            let m = usize::try_from(m)
                .ok()
                .filter(|&m| m > 0)
                .ok_or_else(|| Error::invalid(format!("generator {i} order out of range")))?;
            total = total
                .checked_mul(m)
                .filter(|&t| t <= cap)
                .ok_or_else(|| {
                    Error::CapExceeded(format!("group order exceeds the cap of {cap} elements"))
                })?;
        }
        let mut out = Vec::with_capacity(total);
        let mut exps = vec![0i64; self.rank];
        loop {
            out.push(self.element(exps.clone())?);
            // odometer, last coordinate fastest
            let mut i = self.rank;
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                exps[i] += 1;
                if exps[i] < self.orders[i].unwrap() as i64 {
                    break;
                }
                exps[i] = 0;
            }
        }
    }

    fn check_element(&self, a: &GroupElement) -> Result<()> {
        if a.exps.len() != self.rank {
            return Err(Error::invalid(
                "element does not belong to this group (rank mismatch)",
            ));
        }
        Ok(())
    }

    /// Normal form of a word in the generators.
    pub fn eval_word(&self, w: &[(usize, i64)]) -> Result<GroupElement> {
        let mut exps = vec![0; self.rank];
        self.collect(&mut exps, w)?;
        Ok(GroupElement { exps })
    }

    /// The normal-form word of an element, ascending generator order.
    pub fn word_of(&self, a: &GroupElement) -> Word {
        a.exps
            .iter()
            .enumerate()
            .filter(|&(_, &e)| e != 0)
            .map(|(g, &e)| (g, e))
            .collect()
    }

    pub fn product(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check_element(a)?;
        self.check_element(b)?;
        let mut exps = a.exps.clone();
        self.collect(&mut exps, &self.word_of(b))?;
        Ok(GroupElement { exps })
    }

    pub fn inverse(&self, a: &GroupElement) -> Result<GroupElement> {
        self.check_element(a)?;
        self.eval_word(&inverse_word(&self.word_of(a)))
    }

    pub fn power(&self, a: &GroupElement, n: i64) -> Result<GroupElement> {
        self.check_element(a)?;
        if n == 0 {
            return Ok(self.identity());
        }
        if n < 0 {
            let n = n
                .checked_neg()
                .ok_or_else(|| Error::invalid("power exponent out of range"))?;
            let inv = self.inverse(a)?;
            return self.power(&inv, n);
        }
        let mut base = a.clone();
        let mut acc = self.identity();
        let mut k = n as u64;
        while k > 0 {
            if k & 1 == 1 {
                acc = self.product(&acc, &base)?;
            }
            k >>= 1;
            if k > 0 {
                base = self.product(&base, &base)?;
            }
        }
        Ok(acc)
    }

    /// [a, b] = a⁻¹b⁻¹ab.
    pub fn commutator(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check_element(a)?;
        self.check_element(b)?;
        let wa = self.word_of(a);
        let wb = self.word_of(b);
        let mut w = inverse_word(&wa);
        w.extend(inverse_word(&wb));
        w.extend(wa);
        w.extend(wb);
        self.eval_word(&w)
    }

    /// b⁻¹ a b.
    pub fn conjugate(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check_element(a)?;
        self.check_element(b)?;
        let wb = self.word_of(b);
        let mut w = inverse_word(&wb);
        w.extend(self.word_of(a));
        w.extend(wb);
        self.eval_word(&w)
    }

    // ----- collection -----

    fn commutes(&self, a: usize, b: usize) -> bool {
        a == b
            || self
                .comms
                .get(&(a.min(b), a.max(b)))
                .map_or(true, |w| w.is_empty())
    }

    fn nontrivial_power(&self, i: usize) -> Option<&Word> {
        self.powers.get(&i).filter(|w| !w.is_empty())
    }

    /// Multiplies the normal form in `exps` by `word` on the right,
    /// collecting from the left.
    fn collect(&self, exps: &mut [i64], word: &[(usize, i64)]) -> Result<()> {
        let mut queue: VecDeque<(usize, i64)> = VecDeque::new();
        for &(g, e) in word {
            if g >= self.rank {
                return Err(Error::invalid(format!(
                    "word references generator {g}, rank is {}",
                    self.rank
                )));
            }
            if e != 0 {
                queue.push_back((g, e));
            }
        }
        let mut fuel = COLLECTION_FUEL;
        while let Some((i, mut e)) = queue.pop_front() {
            charge(&mut fuel, 1)?;
            // reduce the run exponent modulo a finite order up front,
            // spawning the overflow word: xᵢ^e = xᵢ^{e mod m}·(xᵢ^m)^q
            if let Some(m) = self.orders[i] {
                let m = m as i64;
                if e < 0 || e >= m {
                    let q = e.div_euclid(m);
                    e = e.rem_euclid(m);
                    if q != 0 {
                        if let Some(w) = self.nontrivial_power(i) {
                            // (xᵢ^m)^q, collected one index level down
                            let el = self.power(&self.eval_word(w)?, q)?;
                            let pre = self.word_of(&el);
                            charge(&mut fuel, pre.len() as u64 + 1)?;
                            for &r in pre.iter().rev() {
                                queue.push_front(r);
                            }
                        }
                    }
                }
            }
            if e == 0 {
                continue;
            }
            let total = exps[i]
                .checked_add(e)
                .ok_or_else(|| cap("exponent magnitude overflow during collection"))?;
            let (q2, r2) = match self.orders[i] {
                Some(m) => (total.div_euclid(m as i64), total.rem_euclid(m as i64)),
                None => (0, total),
            };
            let spawn = if q2 != 0 { self.nontrivial_power(i) } else { None };
            let tail_busy =
                (i + 1..self.rank).any(|j| exps[j] != 0 && !self.commutes(i, j));
            if !tail_busy && spawn.is_none() {
                exps[i] = r2;
                continue;
            }
            // acc = P·xᵢ^a·T and we append xᵢ^e:
            //   P·xᵢ^a·T·xᵢ^e = P·xᵢ^{a+e}·(xᵢ^{-e}·T·xᵢ^e)
            //                 = P·xᵢ^{r2}·w^{q2}·(xᵢ^{-e}·T·xᵢ^e)
            let tail: Vec<(usize, i64)> = (i + 1..self.rank)
                .filter(|&j| exps[j] != 0)
                .map(|j| (j, exps[j]))
                .collect();
            for j in i + 1..self.rank {
                exps[j] = 0;
            }
            exps[i] = r2;
            // conjugated tail, computed recursively one index level down
            let mut conj_tail = self.identity();
            for &(k, b) in &tail {
                let rep = self.conj_gen_power(k, i, e)?;
                conj_tail = self.product(&conj_tail, &self.power(&rep, b)?)?;
            }
            let mut pre: Word = Word::new();
            if let Some(w) = spawn {
                charge(&mut fuel, (w.len() as u64).saturating_mul(q2.unsigned_abs()))?;
                for r in word_power(w, q2) {
                    push_run(&mut pre, r);
                }
            }
            pre.extend(self.word_of(&conj_tail));
            charge(&mut fuel, pre.len() as u64)?;
            for &r in pre.iter().rev() {
                queue.push_front(r);
            }
        }
        Ok(())
    }

    /// xⱼ^{xᵢ^e} for j > i, via binary powering of the conjugation
    /// automorphism of ⟨x_{i+1}, …⟩. All recursive collection stays at
    /// indices above i, so the recursion descends strictly.
    fn conj_gen_power(&self, j: usize, i: usize, e: i64) -> Result<GroupElement> {
        debug_assert!(j > i);
        if e == 0 || self.commutes(j, i) {
            return self.generator(j);
        }
        // for finite-order xᵢ: conj by xᵢ^e = conj by xᵢ^{e mod m}, then by
        // (xᵢ^m)^q — the latter only matters with a nontrivial overflow word
        let (e, overflow_q) = match self.orders[i] {
            Some(m) => {
                let m = m as i64;
                (e.rem_euclid(m), e.div_euclid(m))
            }
            None => (e, 0),
        };
        let mut result = self.generator(j)?;
        if e != 0 {
            let map = self.unit_conj_map(i, e > 0)?;
            let mut cur = map;
            let mut n = e.unsigned_abs();
            loop {
                if n & 1 == 1 {
                    result = self.apply_auto(&cur, &result)?;
                }
                n >>= 1;
                if n == 0 {
                    break;
                }
                let mut sq = BTreeMap::new();
                for (&k, el) in &cur {
                    sq.insert(k, self.apply_auto(&cur, el)?);
                }
                cur = sq;
            }
        }
        if overflow_q != 0 {
            if let Some(w) = self.nontrivial_power(i) {
                let c = self.power(&self.eval_word(w)?, overflow_q)?;
                result = self.conjugate(&result, &c)?;
            }
        }
        Ok(result)
    }

    /// Images of the noncommuting tail generators under conjugation by
    /// xᵢ^{±1}.
    fn unit_conj_map(&self, i: usize, positive: bool) -> Result<BTreeMap<usize, GroupElement>> {
        let mut map = BTreeMap::new();
        for k in i + 1..self.rank {
            if self.commutes(i, k) {
                continue;
            }
            let table = if positive { &self.pos_conj } else { &self.neg_conj };
            let el = table.get(&(i, k)).ok_or_else(|| {
                Error::Internal(format!(
                    "conjugation table missing entry ({i},{k}); construction should have rejected this presentation"
                ))
            })?;
            map.insert(k, el.clone());
        }
        Ok(map)
    }

    /// Applies a generator-image map multiplicatively to an element.
    fn apply_auto(
        &self,
        map: &BTreeMap<usize, GroupElement>,
        x: &GroupElement,
    ) -> Result<GroupElement> {
        let mut acc = self.identity();
        for (g, b) in self.word_of(x) {
            let img = match map.get(&g) {
                Some(el) => self.power(el, b)?,
                None => self.power(&self.generator(g)?, b)?,
            };
            acc = self.product(&acc, &img)?;
        }
        Ok(acc)
    }

    /// Fills `pos_conj` and `neg_conj`, working from the highest generator
    /// index down so every collection stays inside already-derived levels.
    fn derive_conj_tables(&mut self) -> Result<()> {
        for i in (0..self.rank).rev() {
            for j in i + 1..self.rank {
                if self.commutes(i, j) {
                    continue;
                }
                // xⱼ^{xᵢ} = xⱼ·[xⱼ,xᵢ] = xⱼ·[xᵢ,xⱼ]⁻¹
                let mut w: Word = vec![(j, 1)];
                w.extend(inverse_word(&self.comms[&(i, j)]));
                let pos = self.eval_word(&w)?;
                self.pos_conj.insert((i, j), pos);
            }
            if self.orders[i].is_some() {
                // negative conjugation is never consulted: exponents of a
                // finite-order conjugator reduce into [0, order)
                continue;
            }
            for j in i + 1..self.rank {
                if self.commutes(i, j) {
                    continue;
                }
                // solve u^{xᵢ} = xⱼ by the unipotent fixpoint
                // u ← u·(ψ(u)⁻¹xⱼ), which sharpens one class level per step
                let map = self.unit_conj_map(i, true)?;
                let target = self.generator(j)?;
                let mut u = target.clone();
                let mut done = false;
                for _ in 0..=self.class_cap + 1 {
                    let psi = self.apply_auto(&map, &u)?;
                    let err = self.product(&self.inverse(&psi)?, &target)?;
                    if err.is_identity() {
                        done = true;
                        break;
                    }
                    u = self.product(&u, &err)?;
                }
                if !done {
                    return Err(Error::invalid(format!(
                        "generator {i} has infinite order but does not act unipotently on generator {j}; within the class cap this presentation cannot be nilpotent"
                    )));
                }
                self.neg_conj.insert((i, j), u);
            }
        }
        Ok(())
    }

    // ----- validation -----

    /// Consistency sweep: both association orders agree on all generator
    /// triples, finite orders are compatible with the conjugation action,
    /// and power-overflow words behave like the powers they replace.
    fn consistency_check(&self) -> Result<()> {
        for a in 0..self.rank {
            let ga = self.generator(a)?;
            for b in 0..self.rank {
                for c in 0..self.rank {
                    let left = self.eval_word(&[(a, 1), (b, 1), (c, 1)])?;
                    let bc = self.eval_word(&[(b, 1), (c, 1)])?;
                    let right = self.product(&ga, &bc)?;
                    if left != right {
                        return Err(Error::invalid(format!(
                            "inconsistent presentation: associativity fails on generators ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        for i in 0..self.rank {
            let gi = self.generator(i)?;
            // conjugation by xᵢ then by xᵢ⁻¹ must be the identity map
            for j in i + 1..self.rank {
                let gj = self.generator(j)?;
                let there = self.conjugate(&gj, &gi)?;
                let back = self.conjugate(&there, &self.inverse(&gi)?)?;
                if back != gj {
                    return Err(Error::invalid(format!(
                        "inconsistent presentation: conjugation by generator {i} is not invertible on generator {j}"
                    )));
                }
            }
            let Some(m) = self.orders[i] else { continue };
            let overflow = self
                .powers
                .get(&i)
                .map(|w| self.eval_word(w))
                .transpose()?
                .unwrap_or_else(|| self.identity());
            // xᵢ^{mᵢ} must commute with xᵢ
            if self.conjugate(&gi, &overflow)? != gi {
                return Err(Error::invalid(format!(
                    "inconsistent presentation: overflow word of generator {i} does not commute with it"
                )));
            }
            for j in 0..self.rank {
                if j == i {
                    continue;
                }
                let gj = self.generator(j)?;
                if m <= CONSISTENCY_ORDER_BOUND {
                    // conjugating m times by xᵢ = conjugating by xᵢ^{mᵢ}
                    let mut cur = gj.clone();
                    for _ in 0..m {
                        cur = self.conjugate(&cur, &gi)?;
                    }
                    if cur != self.conjugate(&gj, &overflow)? {
                        return Err(Error::invalid(format!(
                            "inconsistent presentation: order of generator {i} incompatible with its action on generator {j}"
                        )));
                    }
                }
                if let Some(mj) = self.orders[j] {
                    // (x_j^{xᵢ})^{m_j} must vanish like x_j^{m_j} does
                    let u = self.conjugate(&gj, &gi)?;
                    let overflow_j = self
                        .powers
                        .get(&j)
                        .map(|w| self.eval_word(w))
                        .transpose()?
                        .unwrap_or_else(|| self.identity());
                    let lhs = self.power(&u, mj as i64)?;
                    let rhs = self.conjugate(&overflow_j, &gi)?;
                    if lhs != rhs {
                        return Err(Error::invalid(format!(
                            "inconsistent presentation: conjugate of generator {j} by {i} violates the order relation"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heisenberg_basic_products() {
        let g = NilGroup::heisenberg();
        let x = g.generator(0).unwrap();
        let y = g.generator(1).unwrap();
        let xy = g.product(&x, &y).unwrap();
        assert_eq!(xy.exponents(), &[1, 1, 0]);
        let yx = g.product(&y, &x).unwrap();
        assert_eq!(yx.exponents(), &[1, 1, -1]);
    }

    #[test]
    fn heisenberg_commutators() {
        let g = NilGroup::heisenberg();
        let x = g.generator(0).unwrap();
        let y = g.generator(1).unwrap();
        let c = g.generator(2).unwrap();
        assert_eq!(g.commutator(&x, &x).unwrap(), g.identity());
        assert_eq!(g.commutator(&x, &y).unwrap(), c);
        let xy = g.product(&x, &y).unwrap();
        assert_eq!(g.commutator(&xy, &y).unwrap(), c);
    }

    #[test]
    fn inverse_law() {
        let g = NilGroup::heisenberg();
        let a = g.element(vec![2, -3, 5]).unwrap();
        let ai = g.inverse(&a).unwrap();
        assert_eq!(ai.exponents(), &[-2, 3, 1]);
        assert_eq!(g.product(&a, &ai).unwrap(), g.identity());
        assert_eq!(g.product(&ai, &a).unwrap(), g.identity());
    }

    #[test]
    fn dihedral_action_inverts() {
        let g = NilGroup::z2_semidirect_z();
        let x = g.generator(0).unwrap();
        let y = g.generator(1).unwrap();
        // x⁻¹yx = y⁻¹, so y·x collects to x·y⁻¹
        let yx = g.product(&y, &x).unwrap();
        assert_eq!(yx.exponents(), &[1, -1]);
        assert_eq!(g.conjugate(&y, &x).unwrap().exponents(), &[0, -1]);
        assert_eq!(g.power(&x, 2).unwrap(), g.identity());
    }

    #[test]
    fn finite_orders_reduce() {
        let g = NilGroup::heisenberg_mod(5);
        let x = g.generator(0).unwrap();
        assert_eq!(g.power(&x, 5).unwrap(), g.identity());
        assert_eq!(g.power(&x, -1).unwrap().exponents(), &[4, 0, 0]);
        let y = g.generator(1).unwrap();
        let p = g
            .product(&g.power(&x, 3).unwrap(), &g.power(&y, 4).unwrap())
            .unwrap();
        assert_eq!(g.power(&p, 5).unwrap(), g.identity());
    }

    #[test]
    fn big_exponents_collect() {
        let g = NilGroup::heisenberg();
        let a = g.element(vec![100, 200, 0]).unwrap();
        let b = g.element(vec![1, 1, 0]).unwrap();
        // (x^100 y^200)(x y) = x^101 y^201 c^{-200}
        let ab = g.product(&a, &b).unwrap();
        assert_eq!(ab.exponents(), &[101, 201, -200]);
        let big = g.element(vec![1 << 30, 5, -(1 << 40)]).unwrap();
        let sq = g.product(&big, &big).unwrap();
        assert_eq!(
            sq.exponents(),
            &[1 << 31, 10, -(1i64 << 41) - 5 * (1 << 30)]
        );
    }

    #[test]
    fn free_c3_structure() {
        let g = NilGroup::free_nilpotent_c3_r2();
        let x = g.generator(0).unwrap();
        let y = g.generator(1).unwrap();
        let c = g.commutator(&x, &y).unwrap();
        assert_eq!(c.exponents(), &[0, 0, 1, 0, 0]);
        assert_eq!(g.commutator(&c, &x).unwrap().exponents(), &[0, 0, 0, 1, 0]);
        assert_eq!(g.commutator(&c, &y).unwrap().exponents(), &[0, 0, 0, 0, 1]);
        // class 3: weight-4 commutators vanish
        let d = g.generator(3).unwrap();
        assert_eq!(g.commutator(&d, &x).unwrap(), g.identity());
        assert_eq!(g.commutator(&d, &y).unwrap(), g.identity());
    }

    #[test]
    fn rejects_bad_presentations() {
        // commutator referencing an index that is not above i
        let mut comms = BTreeMap::new();
        comms.insert((0, 1), vec![(0, 1)]);
        assert!(NilGroup::new(2, vec![None; 2], comms, BTreeMap::new(), 6).is_err());
        // [x₀,x₁] = x₁ collapses x₁ under conjugation by x₀, which is
        // incompatible with x₀ having order 2
        let mut comms = BTreeMap::new();
        comms.insert((0, 1), vec![(1, 1)]);
        assert!(NilGroup::new(2, vec![Some(2), None], comms, BTreeMap::new(), 6).is_err());
        // inversion action by an infinite-order generator is not unipotent
        let mut comms = BTreeMap::new();
        comms.insert((0, 1), vec![(1, -2)]);
        assert!(NilGroup::new(2, vec![None, None], comms, BTreeMap::new(), 6).is_err());
    }

    #[test]
    fn element_normalizes_via_word() {
        let g = NilGroup::heisenberg_mod(5);
        let e = g.element(vec![7, -2, 13]).unwrap();
        assert_eq!(e.exponents(), &[2, 3, 3]);
    }

    #[test]
    fn conjugation_tables_invert() {
        for g in [
            NilGroup::heisenberg(),
            NilGroup::free_nilpotent_c3_r2(),
            NilGroup::z2_semidirect_z(),
        ] {
            for i in 0..g.rank() {
                let gi = g.generator(i).unwrap();
                for j in 0..g.rank() {
                    let gj = g.generator(j).unwrap();
                    let fwd = g.conjugate(&gj, &gi).unwrap();
                    let back = g.conjugate(&fwd, &g.inverse(&gi).unwrap()).unwrap();
                    assert_eq!(back, gj, "conj by x{i}^±1 on x{j}");
                }
            }
        }
    }
}
