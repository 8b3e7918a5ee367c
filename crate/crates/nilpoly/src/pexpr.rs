//! Layered expressions over ordered tuples of finite sets: evaluation,
//! closure under product and inverse, substitution of variable groups, and
//! finitely generated groups of set-maps with exact or bounded membership.
//!
//! An expression of arity m assigns to every ordered tuple (α₁ < … < α_m)
//! the value W^{α₁…α_{m−1}}(α_m) · S(α₁…α_{m−1}), where every layer map W
//! is a set-map of the kind `polymap` handles and S is an expression of
//! arity m−1. Arity 0 is the constant identity.

use crate::ipcore::{precedes, FinSet};
use crate::nilgroup::{Filtration, GroupElement, NilGroup};
use crate::polymap::{submasks, PolyMap};
use crate::zlin::ZLattice;
use crate::{Error, Result};
use num::bigint::BigInt;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

/// All ordered `len`-tuples of nonempty subsets of {0,…,ground−1}, as mask
/// vectors, lexicographically ascending.
pub fn ordered_tuples(ground: usize, len: usize) -> Vec<Vec<u64>> {
    fn rec(ground: usize, len: usize, min_elem: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        // nonempty masks whose least element is ≥ min_elem
        let full = (1u64 << ground) - 1;
        let lo = if min_elem >= ground { return } else { 1u64 << min_elem };
        let mut m = lo;
        while m <= full {
            if m & (lo - 1) == 0 {
                let top = 63 - m.leading_zeros() as usize;
                cur.push(m);
                rec(ground, len, top + 1, cur, out);
                cur.pop();
            }
            m += 1;
        }
    }
    let mut out = Vec::new();
    rec(ground, len, 0, &mut Vec::new(), &mut out);
    out
}

/// A layered expression; see the module docs for the evaluation rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyExpr {
    group: Arc<NilGroup>,
    ground: usize,
    arity: usize,
    /// Keyed by the ordered (arity−1)-tuple of the leading variables; for
    /// arity 1 the single key is the empty tuple.
    layers: BTreeMap<Vec<u64>, PolyMap>,
    base: Option<Box<PolyExpr>>,
}

impl PolyExpr {
    /// The arity-0 expression: the constant identity.
    pub fn identity(group: &Arc<NilGroup>, ground: usize) -> PolyExpr {
        PolyExpr {
            group: group.clone(),
            ground,
            arity: 0,
            layers: BTreeMap::new(),
            base: None,
        }
    }

    /// Builds an arity-(base.arity+1) expression from a base and one layer
    /// map per leading tuple. Each layer's domain must cover every set
    /// lying above its key tuple.
    pub fn from_layers(
        layers: BTreeMap<Vec<u64>, PolyMap>,
        base: PolyExpr,
    ) -> Result<PolyExpr> {
        let arity = base.arity + 1;
        let expect = ordered_tuples(base.ground, arity - 1);
        if layers.len() != expect.len() || expect.iter().any(|t| !layers.contains_key(t)) {
            return Err(Error::invalid(format!(
                "an arity-{arity} expression needs exactly one layer per ordered {}-tuple",
                arity - 1
            )));
        }
        for (key, w) in &layers {
            if !Arc::ptr_eq(w.group(), &base.group) {
                return Err(Error::invalid("layer map over a different group"));
            }
            if w.ground() != base.ground {
                return Err(Error::invalid("layer map over a different ground set"));
            }
            let above = above_mask(base.ground, key);
            if above & !w.domain() != 0 {
                return Err(Error::invalid(
                    "layer map's domain misses sets above its key tuple",
                ));
            }
        }
        Ok(PolyExpr {
            group: base.group.clone(),
            ground: base.ground,
            arity,
            layers,
            base: Some(Box::new(base)),
        })
    }

    /// Convenience: arity-1 expression from a single map.
    pub fn from_map(map: PolyMap) -> Result<PolyExpr> {
        let base = PolyExpr::identity(map.group(), map.ground());
        let mut layers = BTreeMap::new();
        layers.insert(Vec::new(), map);
        PolyExpr::from_layers(layers, base)
    }

    pub fn group(&self) -> &Arc<NilGroup> {
        &self.group
    }

    pub fn ground(&self) -> usize {
        self.ground
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn layers(&self) -> &BTreeMap<Vec<u64>, PolyMap> {
        &self.layers
    }

    pub fn base(&self) -> Option<&PolyExpr> {
        self.base.as_deref()
    }

    pub fn eval(&self, tuple: &[FinSet]) -> Result<GroupElement> {
        if tuple.len() != self.arity {
            return Err(Error::invalid(format!(
                "expression of arity {} evaluated on a {}-tuple",
                self.arity,
                tuple.len()
            )));
        }
        for s in tuple {
            if s.is_empty() {
                return Err(Error::invalid("tuple entries must be nonempty"));
            }
            if s.max().unwrap() >= self.ground {
                return Err(Error::invalid("tuple entry leaves the ground set"));
            }
        }
        for w in tuple.windows(2) {
            if !precedes(&w[0], &w[1]) {
                return Err(Error::invalid("tuple is not ordered"));
            }
        }
        self.eval_unchecked(tuple)
    }

    fn eval_unchecked(&self, tuple: &[FinSet]) -> Result<GroupElement> {
        if self.arity == 0 {
            return Ok(self.group.identity());
        }
        let (lead, last) = tuple.split_at(self.arity - 1);
        let key: Vec<u64> = lead.iter().map(|s| s.mask()).collect();
        let w = self
            .layers
            .get(&key)
            .ok_or_else(|| Error::Internal("layer table is incomplete".into()))?;
        let top = w.eval(last[0].mask())?;
        let s = self.base.as_ref().unwrap().eval_unchecked(lead)?;
        self.group.product(top, &s)
    }

    /// Pointwise product. The layered form is preserved: the new layer at
    /// ᾱ is W₀ · (S₀(ᾱ) W₁ S₀(ᾱ)⁻¹) and the new base is the product of
    /// the bases.
    pub fn product(&self, other: &PolyExpr) -> Result<PolyExpr> {
        if self.arity != other.arity || self.ground != other.ground {
            return Err(Error::invalid(
                "expressions must share arity and ground set",
            ));
        }
        if !Arc::ptr_eq(&self.group, &other.group) {
            return Err(Error::invalid("expressions live over different groups"));
        }
        if self.arity == 0 {
            return Ok(self.clone());
        }
        let base0 = self.base.as_ref().unwrap();
        let base1 = other.base.as_ref().unwrap();
        let mut layers = BTreeMap::new();
        for (key, w0) in &self.layers {
            let w1 = &other.layers[key];
            let tuple: Vec<FinSet> = key.iter().map(|&m| FinSet::new(m)).collect();
            let s0 = base0.eval_unchecked(&tuple)?;
            let dom = w0.domain() & w1.domain();
            let conj = w1.restrict(dom & w1.domain())?.conjugate_pointwise(&s0)?;
            layers.insert(key.clone(), w0.restrict(dom)?.product(&conj)?);
        }
        let base = base0.product(base1)?;
        PolyExpr::from_layers(layers, base)
    }

    /// Pointwise inverse: layer S(ᾱ)⁻¹ W⁻¹ S(ᾱ), base S⁻¹.
    pub fn inverse(&self) -> Result<PolyExpr> {
        if self.arity == 0 {
            return Ok(self.clone());
        }
        let base0 = self.base.as_ref().unwrap();
        let mut layers = BTreeMap::new();
        for (key, w) in &self.layers {
            let tuple: Vec<FinSet> = key.iter().map(|&m| FinSet::new(m)).collect();
            let s0 = base0.eval_unchecked(&tuple)?;
            let s0i = self.group.inverse(&s0)?;
            layers.insert(key.clone(), w.inverse()?.conjugate_pointwise(&s0i)?);
        }
        let base = base0.inverse()?;
        PolyExpr::from_layers(layers, base)
    }

    /// Substitutes groups of variables: given β₁ < … < β_m (sets of
    /// variable positions, m = arity), returns the expression of arity
    /// max(β_m)+1 evaluating ᾱ ↦ self(∪_{i∈β₁} αᵢ, …, ∪_{i∈β_m} αᵢ).
    ///
    /// The layered form is rebuilt with the peeling identity
    /// W(α ∪ γ) = W(α) · sD_γW(α) · W(γ), so every new layer is a product
    /// of old layers and their symmetric derivatives.
    pub fn substitute(&self, betas: &[FinSet]) -> Result<PolyExpr> {
        if betas.len() != self.arity {
            return Err(Error::invalid(
                "one variable group per expression variable is required",
            ));
        }
        for b in betas {
            if b.is_empty() {
                return Err(Error::invalid("variable groups must be nonempty"));
            }
        }
        for w in betas.windows(2) {
            if !precedes(&w[0], &w[1]) {
                return Err(Error::invalid("variable groups must be ordered"));
            }
        }
        if self.arity == 0 {
            return Ok(self.clone());
        }
        let window = betas.last().unwrap().max().unwrap() + 1;
        let filt = self.layers.values().next().unwrap().base().clone();
        self.substitute_rec(betas, window, &filt)
    }

    fn substitute_rec(
        &self,
        betas: &[FinSet],
        window: usize,
        filt: &Arc<Filtration>,
    ) -> Result<PolyExpr> {
        if self.arity == 0 {
            return pad_to(PolyExpr::identity(&self.group, self.ground), window, filt);
        }
        let beta_m = *betas.last().unwrap();
        let top = FinSet::max(&beta_m).unwrap();
        debug_assert_eq!(top + 1, window);
        let rest = FinSet::new(beta_m.mask() & !(1 << top));
        // the expression whose value at the leading window is self with
        // the last variable group shrunk by its top position
        let (base, peeled): (PolyExpr, bool) = if rest.is_empty() {
            let b = self.base.as_ref().unwrap();
            let sub_window = betas[..betas.len() - 1]
                .last()
                .map_or(0, |b| b.max().unwrap() + 1);
            let sub = b.substitute_rec(&betas[..betas.len() - 1], sub_window, filt)?;
            (pad_to(sub, window - 1, filt)?, false)
        } else {
            let mut shrunk = betas.to_vec();
            *shrunk.last_mut().unwrap() = rest;
            let sub_window = FinSet::max(&rest).unwrap() + 1;
            let sub = self.substitute_rec(&shrunk, sub_window, filt)?;
            (pad_to(sub, window - 1, filt)?, true)
        };
        let mut layers = BTreeMap::new();
        for key in ordered_tuples(self.ground, window - 1) {
            // the old layer is selected by the substituted leading tuple
            let gamma: Vec<u64> = betas[..betas.len() - 1]
                .iter()
                .map(|b| {
                    b.elems()
                        .into_iter()
                        .fold(0u64, |acc, i| acc | key[i])
                })
                .collect();
            let w = &self.layers[&gamma];
            let layer = if peeled {
                let gamma_m: u64 = rest.elems().into_iter().fold(0, |acc, i| acc | key[i]);
                w.product(&w.symmetric_derivative(gamma_m)?)?
            } else {
                w.clone()
            };
            layers.insert(key, layer);
        }
        PolyExpr::from_layers(layers, base)
    }
}

/// Appends trivial trailing variables (identity layers) until the
/// expression has the requested arity.
fn pad_to(mut e: PolyExpr, arity: usize, filt: &Arc<Filtration>) -> Result<PolyExpr> {
    while e.arity < arity {
        let id = PolyMap::identity_map(filt, e.ground)?;
        let mut layers = BTreeMap::new();
        for t in ordered_tuples(e.ground, e.arity) {
            layers.insert(t, id.clone());
        }
        e = PolyExpr::from_layers(layers, e)?;
    }
    if e.arity != arity {
        return Err(Error::Internal("padding overshot the target arity".into()));
    }
    Ok(e)
}

fn above_mask(ground: usize, key: &[u64]) -> u64 {
    let full = (1u64 << ground) - 1;
    match key.iter().flat_map(|&m| FinSet::max(&FinSet::new(m))).max() {
        None => full,
        Some(top) => full & !((1u64 << (top + 1)) - 1),
    }
}

/// Result of a membership query in a finitely generated group of maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Membership {
    /// With a witness: a word over the generators (index, exponent).
    Yes(Vec<(usize, i64)>),
    No,
    /// The bounded search was exhausted without a decision.
    Inconclusive,
}

impl Membership {
    pub fn is_yes(&self) -> bool {
        matches!(self, Membership::Yes(_))
    }
}

/// A group of set-maps given by finitely many generators, with a bound on
/// membership search. Over commutative groups membership is exact (integer
/// lattices); otherwise it is a breadth-first word search that can return
/// `Inconclusive`.
#[derive(Debug, Clone)]
pub struct VipGroup {
    generators: Vec<PolyMap>,
    word_bound: usize,
}

/// Cap on distinct tables the word search may visit.
const SEARCH_STATE_CAP: usize = 200_000;

impl VipGroup {
    pub fn new(generators: Vec<PolyMap>, word_bound: usize) -> Result<VipGroup> {
        if generators.is_empty() {
            return Err(Error::invalid("at least one generator is required"));
        }
        let g0 = &generators[0];
        for g in &generators[1..] {
            if !Arc::ptr_eq(g.group(), g0.group()) || g.ground() != g0.ground() {
                return Err(Error::invalid(
                    "generators must share one group and ground set",
                ));
            }
        }
        for g in &generators {
            if !g.is_vip_shaped() {
                return Err(Error::invalid("generators must vanish at the empty set"));
            }
        }
        Ok(VipGroup {
            generators,
            word_bound,
        })
    }

    pub fn generators(&self) -> &[PolyMap] {
        &self.generators
    }

    pub fn group(&self) -> &Arc<NilGroup> {
        self.generators[0].group()
    }

    pub fn ground(&self) -> usize {
        self.generators[0].ground()
    }

    fn is_commutative(&self) -> bool {
        self.group().commutator_words().values().all(|w| w.is_empty())
    }

    fn flatten(map: &PolyMap, domain: u64) -> Vec<i64> {
        submasks(domain)
            .into_iter()
            .flat_map(|m| map.values()[&m].exponents().to_vec())
            .collect()
    }

    /// Membership of `target`, compared as a function on the target's own
    /// domain (generators are restricted to it first).
    pub fn membership(&self, target: &PolyMap) -> Result<Membership> {
        if !Arc::ptr_eq(target.group(), self.group()) || target.ground() != self.ground() {
            return Err(Error::invalid(
                "membership target over a different group or ground set",
            ));
        }
        let domain = target.domain();
        for g in &self.generators {
            if domain & !g.domain() != 0 {
                return Err(Error::invalid(
                    "target domain is not covered by the generators",
                ));
            }
        }
        if self.is_commutative() {
            return self.membership_lattice(target, domain);
        }
        self.membership_bfs(target, domain)
    }

    fn membership_lattice(&self, target: &PolyMap, domain: u64) -> Result<Membership> {
        let rank = self.group().rank();
        let masks = submasks(domain);
        let dim = masks.len() * rank;
        let mut vectors: Vec<Vec<i64>> = self
            .generators
            .iter()
            .map(|g| g.restrict(domain).map(|r| VipGroup::flatten(&r, domain)))
            .collect::<Result<_>>()?;
        let n_gens = vectors.len();
        // finite-order coordinates are stored reduced, so membership is
        // modulo the torsion relations: adjoin m·e_c for every coordinate
        // of a generator of order m
        for (pos, _) in masks.iter().enumerate() {
            for (i, order) in self.group().orders().iter().enumerate() {
                if let Some(m) = order {
                    let mut v = vec![0i64; dim];
                    v[pos * rank + i] = i64::try_from(*m).map_err(|_| {
                        Error::CapExceeded("generator order exceeds i64".into())
                    })?;
                    vectors.push(v);
                }
            }
        }
        let lat = ZLattice::from_vectors(dim, vectors);
        match lat.member_i64(&VipGroup::flatten(target, domain)) {
            None => Ok(Membership::No),
            Some(coeffs) => {
                let word = coeffs
                    .iter()
                    .take(n_gens)
                    .enumerate()
                    .filter(|(_, c)| **c != BigInt::from(0))
                    .map(|(i, c)| {
                        i64::try_from(c).map(|e| (i, e)).map_err(|_| {
                            Error::CapExceeded("witness coefficient exceeds i64".into())
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Membership::Yes(word))
            }
        }
    }

    fn membership_bfs(&self, target: &PolyMap, domain: u64) -> Result<Membership> {
        let gens: Vec<PolyMap> = self
            .generators
            .iter()
            .map(|g| g.restrict(domain))
            .collect::<Result<_>>()?;
        let target = target.restrict(domain)?;
        let id = PolyMap::identity_map(gens[0].base(), gens[0].ground())?.restrict(domain)?;
        if target == id {
            return Ok(Membership::Yes(Vec::new()));
        }
        let mut seen: BTreeSet<Vec<i64>> = BTreeSet::new();
        let key = |m: &PolyMap| VipGroup::flatten(m, domain);
        seen.insert(key(&id));
        let mut frontier: VecDeque<(PolyMap, Vec<(usize, i64)>, usize)> = VecDeque::new();
        frontier.push_back((id, Vec::new(), 0));
        let mut exhausted_within_bound = true;
        while let Some((cur, word, depth)) = frontier.pop_front() {
            if depth >= self.word_bound {
                exhausted_within_bound = false;
                continue;
            }
            for (i, g) in gens.iter().enumerate() {
                for e in [1i64, -1] {
                    let step = if e == 1 { g.clone() } else { g.inverse()? };
                    let next = cur.product(&step)?;
                    if seen.len() >= SEARCH_STATE_CAP {
                        return Ok(Membership::Inconclusive);
                    }
                    if !seen.insert(key(&next)) {
                        continue;
                    }
                    let mut w = word.clone();
                    match w.last_mut() {
                        Some(last) if last.0 == i && last.1.signum() == e => last.1 += e,
                        _ => w.push((i, e)),
                    }
                    if next == target {
                        return Ok(Membership::Yes(w));
                    }
                    frontier.push_back((next, w, depth + 1));
                }
            }
        }
        if exhausted_within_bound {
            // the reachable set closed up strictly inside the bound: the
            // generated group (restricted to this domain) is finite and
            // fully enumerated
            Ok(Membership::No)
        } else {
            Ok(Membership::Inconclusive)
        }
    }

    /// Checks closure under symmetric derivatives of all generators, in
    /// every direction inside `domain_mask`.
    pub fn sd_closure(&self, domain_mask: u64) -> Result<Membership> {
        let mut all_yes = Vec::new();
        for (i, g) in self.generators.iter().enumerate() {
            for beta in submasks(domain_mask & g.domain()) {
                if beta == 0 {
                    continue;
                }
                match self.membership(&g.symmetric_derivative(beta)?)? {
                    Membership::Yes(_) => all_yes.push((i, beta)),
                    Membership::No => return Ok(Membership::No),
                    Membership::Inconclusive => return Ok(Membership::Inconclusive),
                }
            }
        }
        Ok(Membership::Yes(Vec::new()))
    }
}

/// Output of `decompose_mixing`: expressions T (pairwise thoroughly mixed
/// layer quotients) and residuals R with every residual layer inside K,
/// such that S_j = T_{assign[j]} · R_j pointwise.
#[derive(Debug, Clone)]
pub struct Mixing {
    pub t: Vec<PolyExpr>,
    pub r: Vec<PolyExpr>,
    pub assign: Vec<usize>,
}

/// Splits each expression into a K-mixing part and a K-residual: walking
/// up the arity, layer maps are grouped by whether their quotients lie in
/// K uniformly over the leading tuple; quotients inside K are pushed into
/// the residual (conjugated by the matching base value), the group
/// representative's layer becomes part of T.
///
/// The first expression must be the identity. A quotient that is in K for
/// some leading tuples and not others, or an inconclusive membership,
/// aborts with `Error::Inconclusive`.
pub fn decompose_mixing(system: &[PolyExpr], k: &VipGroup) -> Result<Mixing> {
    if system.is_empty() {
        return Err(Error::invalid("empty system"));
    }
    let arity = system[0].arity();
    let ground = system[0].ground();
    for s in system {
        if s.arity() != arity || s.ground() != ground || !Arc::ptr_eq(s.group(), system[0].group())
        {
            return Err(Error::invalid(
                "system members must share arity, ground set, and group",
            ));
        }
    }
    let id_check = ordered_tuples(ground, arity);
    for t in &id_check {
        let tuple: Vec<FinSet> = t.iter().map(|&m| FinSet::new(m)).collect();
        if !system[0].eval(&tuple)?.is_identity() {
            return Err(Error::invalid("the first expression must be the identity"));
        }
    }
    let mixing = decompose_rec(system, k)?;
    // re-verify the factorization pointwise and the residual layers' K-membership
    for (j, s) in system.iter().enumerate() {
        for t in &id_check {
            let tuple: Vec<FinSet> = t.iter().map(|&m| FinSet::new(m)).collect();
            let lhs = s.eval(&tuple)?;
            let rhs = s
                .group()
                .product(&mixing.t[mixing.assign[j]].eval(&tuple)?, &mixing.r[j].eval(&tuple)?)?;
            if lhs != rhs {
                return Err(Error::Internal(
                    "mixing factorization failed to reproduce the system".into(),
                ));
            }
        }
    }
    Ok(mixing)
}

fn decompose_rec(system: &[PolyExpr], k: &VipGroup) -> Result<Mixing> {
    let arity = system[0].arity();
    let group = system[0].group().clone();
    let ground = system[0].ground();
    if arity == 0 {
        let id = PolyExpr::identity(&group, ground);
        return Ok(Mixing {
            t: vec![id.clone()],
            r: system.iter().map(|_| id.clone()).collect(),
            assign: vec![0; system.len()],
        });
    }
    let bases: Vec<PolyExpr> = system
        .iter()
        .map(|s| s.base().unwrap().clone())
        .collect();
    let inner = decompose_rec(&bases, k)?;
    // group indices by K-uniform layer quotients against the least
    // representative
    let mut reps: Vec<usize> = Vec::new();
    let mut w_class = vec![usize::MAX; system.len()];
    let keys: Vec<Vec<u64>> = system[0].layers().keys().cloned().collect();
    for j in 0..system.len() {
        'reps: for &r in &reps {
            let mut verdict: Option<bool> = None;
            for key in &keys {
                let wr = &system[r].layers()[key];
                let wj = &system[j].layers()[key];
                let q = wr.inverse()?.product(wj)?;
                let m = match k.membership(&q)? {
                    Membership::Yes(_) => true,
                    Membership::No => false,
                    Membership::Inconclusive => {
                        return Err(Error::Inconclusive(
                            "layer-quotient membership could not be decided".into(),
                        ))
                    }
                };
                match verdict {
                    None => verdict = Some(m),
                    Some(v) if v != m => {
                        return Err(Error::Inconclusive(
                            "layer quotient mixes across leading tuples".into(),
                        ))
                    }
                    _ => {}
                }
            }
            if verdict == Some(true) {
                w_class[j] = r;
                continue 'reps;
            }
        }
        if w_class[j] == usize::MAX {
            reps.push(j);
            w_class[j] = j;
        }
    }
    // assemble T per occurring (w-class, inner-class) pair, and residuals
    let mut pair_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut t_out: Vec<PolyExpr> = Vec::new();
    let mut r_out: Vec<PolyExpr> = Vec::new();
    let mut assign = Vec::with_capacity(system.len());
    for j in 0..system.len() {
        let rep = w_class[j];
        let ki = inner.assign[j];
        let idx = match pair_index.get(&(rep, ki)) {
            Some(&i) => i,
            None => {
                let mut layers = BTreeMap::new();
                for key in &keys {
                    layers.insert(key.clone(), system[rep].layers()[key].clone());
                }
                let t_expr = PolyExpr::from_layers(layers, inner.t[ki].clone())?;
                t_out.push(t_expr);
                pair_index.insert((rep, ki), t_out.len() - 1);
                t_out.len() - 1
            }
        };
        assign.push(idx);
        // residual layer at ᾱ: T̃(ᾱ)⁻¹ · (W_rep^ᾱ)⁻¹W_j^ᾱ · T̃(ᾱ)
        let t_inner = &inner.t[ki];
        let mut layers = BTreeMap::new();
        for key in &keys {
            let tuple: Vec<FinSet> = key.iter().map(|&m| FinSet::new(m)).collect();
            let tv = t_inner.eval_unchecked(&tuple)?;
            let tvi = group.inverse(&tv)?;
            let q = system[rep].layers()[key]
                .inverse()?
                .product(&system[j].layers()[key])?;
            let conj = q.conjugate_pointwise(&tvi)?;
            match k.membership(&conj)? {
                Membership::Yes(_) => {}
                Membership::No => {
                    return Err(Error::Inconclusive(
                        "conjugated residual left the subgroup; it may not be \
                         closed under conjugation"
                            .into(),
                    ))
                }
                Membership::Inconclusive => {
                    return Err(Error::Inconclusive(
                        "residual membership could not be decided".into(),
                    ))
                }
            }
            layers.insert(key.clone(), conj);
        }
        r_out.push(PolyExpr::from_layers(layers, inner.r[j].clone())?);
    }
    Ok(Mixing {
        t: t_out,
        r: r_out,
        assign,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nilgroup::{lower_central_series, NilGroup};

    fn z_filtration(group: &Arc<NilGroup>) -> Arc<Filtration> {
        Arc::new(lower_central_series(group).unwrap())
    }

    fn card_map(f: &Arc<Filtration>, ground: usize, scale: i64) -> PolyMap {
        let g = f.group().clone();
        PolyMap::from_fn(f, 0, ground, |m| {
            g.element(vec![scale * m.count_ones() as i64])
        })
        .unwrap()
    }

    fn fs(mask: u64) -> FinSet {
        FinSet::new(mask)
    }

    #[test]
    fn tuple_enumeration_counts() {
        assert_eq!(ordered_tuples(3, 0), vec![Vec::<u64>::new()]);
        assert_eq!(ordered_tuples(3, 1).len(), 7);
        // pairs over {0,1,2}: first block determines how much room is left
        let pairs = ordered_tuples(3, 2);
        assert!(pairs.contains(&vec![0b001, 0b110]));
        assert!(pairs.contains(&vec![0b011, 0b100]));
        assert!(!pairs.iter().any(|t| t[0] == 0b101));
        // first blocks {0}, {1}, {0,1} admit 3, 1, 1 continuations
        assert_eq!(pairs.len(), 5);
    }

    #[test]
    fn evaluation_layers_over_base() {
        let g = Arc::new(NilGroup::free_abelian(1));
        let f = z_filtration(&g);
        // e(α₁, α₂) = 10·|α₂| + |α₁| via layer 10·card and base card
        let base = PolyExpr::from_map(card_map(&f, 4, 1)).unwrap();
        let mut layers = BTreeMap::new();
        for t in ordered_tuples(4, 1) {
            layers.insert(t, card_map(&f, 4, 10));
        }
        let e = PolyExpr::from_layers(layers, base).unwrap();
        let v = e.eval(&[fs(0b0011), fs(0b0100)]).unwrap();
        assert_eq!(v.exponents(), [12]);
        assert!(e.eval(&[fs(0b0100), fs(0b0011)]).is_err());
        assert!(e.eval(&[fs(0b0011)]).is_err());
    }

    #[test]
    fn product_and_inverse_match_pointwise() {
        let g = Arc::new(NilGroup::heisenberg());
        let f = Arc::new(lower_central_series(&g).unwrap());
        let mk = |a: i64, b: i64| {
            let gg = g.clone();
            PolyMap::from_fn(&f, 0, 3, move |m| {
                let c = m.count_ones() as i64;
                gg.element(vec![a * c, b * c, c * c])
            })
            .unwrap()
        };
        let base0 = PolyExpr::from_map(mk(1, 0)).unwrap();
        let base1 = PolyExpr::from_map(mk(0, 2)).unwrap();
        let mut l0 = BTreeMap::new();
        let mut l1 = BTreeMap::new();
        for t in ordered_tuples(3, 1) {
            l0.insert(t.clone(), mk(2, 1));
            l1.insert(t, mk(-1, 1));
        }
        let e0 = PolyExpr::from_layers(l0, base0).unwrap();
        let e1 = PolyExpr::from_layers(l1, base1).unwrap();
        let prod = e0.product(&e1).unwrap();
        let inv = e0.inverse().unwrap();
        for t in ordered_tuples(3, 2) {
            let tuple: Vec<FinSet> = t.iter().map(|&m| fs(m)).collect();
            let v0 = e0.eval(&tuple).unwrap();
            let v1 = e1.eval(&tuple).unwrap();
            assert_eq!(prod.eval(&tuple).unwrap(), g.product(&v0, &v1).unwrap());
            assert_eq!(inv.eval(&tuple).unwrap(), g.inverse(&v0).unwrap());
        }
        // the combined quotient R₀R₁⁻¹ keeps the layered shape and value
        let quot = e0.product(&e1.inverse().unwrap()).unwrap();
        for t in ordered_tuples(3, 2) {
            let tuple: Vec<FinSet> = t.iter().map(|&m| fs(m)).collect();
            let expect = g
                .product(
                    &e0.eval(&tuple).unwrap(),
                    &g.inverse(&e1.eval(&tuple).unwrap()).unwrap(),
                )
                .unwrap();
            assert_eq!(quot.eval(&tuple).unwrap(), expect);
        }
    }

    #[test]
    fn substitution_agrees_with_direct_evaluation() {
        let g = Arc::new(NilGroup::heisenberg());
        let f = Arc::new(lower_central_series(&g).unwrap());
        let gg = g.clone();
        let w = PolyMap::from_fn(&f, 0, 5, move |m| {
            let c = m.count_ones() as i64;
            gg.element(vec![c, 2 * c, 0])
        })
        .unwrap();
        let base = PolyExpr::from_map({
            let gg = g.clone();
            PolyMap::from_fn(&f, 0, 5, move |m| {
                let c = m.count_ones() as i64;
                gg.element(vec![0, c, c * c])
            })
            .unwrap()
        })
        .unwrap();
        let mut layers = BTreeMap::new();
        for t in ordered_tuples(5, 1) {
            layers.insert(t, w.clone());
        }
        let e = PolyExpr::from_layers(layers, base).unwrap();
        // β₁ = {0}, β₂ = {1,3}: h(α₁,α₂,α₃,α₄) = e(α₁, α₂∪α₄)
        let h = e.substitute(&[fs(0b0001), fs(0b1010)]).unwrap();
        assert_eq!(h.arity(), 4);
        for t in ordered_tuples(5, 4) {
            let tuple: Vec<FinSet> = t.iter().map(|&m| fs(m)).collect();
            let direct = e
                .eval(&[fs(t[0]), fs(t[1] | t[3])])
                .unwrap();
            assert_eq!(h.eval(&tuple).unwrap(), direct, "tuple {t:?}");
        }
    }

    #[test]
    fn substitution_keeps_single_variable_case_trivial() {
        let g = Arc::new(NilGroup::free_abelian(2));
        let f = z_filtration(&g);
        let gg = g.clone();
        let m = PolyMap::from_fn(&f, 0, 4, move |mask| {
            let c = mask.count_ones() as i64;
            gg.element(vec![c, c * c])
        })
        .unwrap();
        let e = PolyExpr::from_map(m).unwrap();
        let s = e.substitute(&[fs(0b11)]).unwrap();
        assert_eq!(s.arity(), 2);
        for t in ordered_tuples(4, 2) {
            let tuple: Vec<FinSet> = t.iter().map(|&m| fs(m)).collect();
            let direct = e.eval(&[fs(t[0] | t[1])]).unwrap();
            assert_eq!(s.eval(&tuple).unwrap(), direct);
        }
    }

    #[test]
    fn membership_exact_over_commutative_groups() {
        let g = Arc::new(NilGroup::free_abelian(1));
        let f = z_filtration(&g);
        let even = card_map(&f, 4, 2);
        let k = VipGroup::new(vec![even], 10).unwrap();
        assert!(k.membership(&card_map(&f, 4, 6)).unwrap().is_yes());
        assert_eq!(k.membership(&card_map(&f, 4, 3)).unwrap(), Membership::No);
        // witness reconstructs the target
        let target = card_map(&f, 4, -4);
        let Membership::Yes(word) = k.membership(&target).unwrap() else {
            panic!("expected membership");
        };
        assert_eq!(word, vec![(0, -2)]);
    }

    #[test]
    fn membership_word_search_in_nilpotent_groups() {
        let g = Arc::new(NilGroup::heisenberg_mod(3));
        let f = Arc::new(lower_central_series(&g).unwrap());
        let gg = g.clone();
        let gen = PolyMap::from_fn(&f, 0, 3, move |m| {
            let c = m.count_ones() as i64;
            gg.element(vec![c, c, 0])
        })
        .unwrap();
        let k = VipGroup::new(vec![gen.clone()], 30).unwrap();
        let sq = gen.product(&gen).unwrap();
        assert!(k.membership(&sq).unwrap().is_yes());
        // the generated group on this domain is finite, so absence is exact
        let gg = g.clone();
        let other = PolyMap::from_fn(&f, 0, 3, move |m| {
            let c = m.count_ones() as i64;
            gg.element(vec![c, 0, 0])
        })
        .unwrap();
        assert_eq!(k.membership(&other).unwrap(), Membership::No);
    }

    #[test]
    fn sd_closure_of_an_additive_group() {
        let g = Arc::new(NilGroup::free_abelian(1));
        let f = z_filtration(&g);
        // sD of k·|α| vanishes, so the group is closed
        let k = VipGroup::new(vec![card_map(&f, 4, 1)], 6).unwrap();
        assert!(k.sd_closure(0b1111).unwrap().is_yes());
        // |α|² is not closed: sD produces 2|β||α| ∉ ⟨|α|²⟩... its sD in
        // direction β is 2|β|·|α|, which is not a multiple of |α|²
        let gg = g.clone();
        let square = PolyMap::from_fn(&f, 0, 4, move |m| {
            let c = m.count_ones() as i64;
            gg.element(vec![c * c])
        })
        .unwrap();
        let k2 = VipGroup::new(vec![square], 6).unwrap();
        assert_eq!(k2.sd_closure(0b1111).unwrap(), Membership::No);
    }

    #[test]
    fn mixing_decomposition_over_the_integers() {
        let g = Arc::new(NilGroup::free_abelian(1));
        let f = z_filtration(&g);
        let zero = PolyExpr::from_map(card_map(&f, 4, 0)).unwrap();
        let one = PolyExpr::from_map(card_map(&f, 4, 1)).unwrap();
        let two = PolyExpr::from_map(card_map(&f, 4, 2)).unwrap();
        let k = VipGroup::new(vec![card_map(&f, 4, 2)], 10).unwrap();
        let mix = decompose_mixing(&[zero, one, two], &k).unwrap();
        // |α| is odd against K = ⟨2|α|⟩, 2|α| pairs with the zero map
        assert_eq!(mix.assign, vec![0, 1, 0]);
        assert_eq!(mix.t.len(), 2);
        let probe = [fs(0b0011)];
        assert!(mix.t[0].eval(&probe).unwrap().is_identity());
        assert_eq!(mix.t[1].eval(&probe).unwrap().exponents(), [2]);
        assert!(mix.r[0].eval(&probe).unwrap().is_identity());
        assert!(mix.r[1].eval(&probe).unwrap().is_identity());
        assert_eq!(mix.r[2].eval(&probe).unwrap().exponents(), [4]);
    }

    #[test]
    fn mixing_requires_uniform_quotients() {
        let g = Arc::new(NilGroup::free_abelian(1));
        let f = z_filtration(&g);
        let gg = g.clone();
        // a map whose parity against K depends on the set, on a 2-variable
        // expression whose layer quotient flips with the leading tuple
        let flip = PolyMap::from_fn(&f, 0, 3, move |m| {
            gg.element(vec![if m & 1 == 1 { 1 } else { 0 }])
        })
        .unwrap();
        let id_map = card_map(&f, 3, 0);
        let mut l0 = BTreeMap::new();
        let mut l1 = BTreeMap::new();
        for t in ordered_tuples(3, 1) {
            l0.insert(t.clone(), id_map.clone());
            // quotient is even for some leading tuples, odd for others
            l1.insert(
                t.clone(),
                if t[0] & 1 == 1 {
                    card_map(&f, 3, 1)
                } else {
                    card_map(&f, 3, 2)
                },
            );
        }
        let zero2 =
            PolyExpr::from_layers(l0, PolyExpr::from_map(id_map.clone()).unwrap()).unwrap();
        let mixed =
            PolyExpr::from_layers(l1, PolyExpr::from_map(id_map).unwrap()).unwrap();
        let k = VipGroup::new(vec![card_map(&f, 3, 2)], 10).unwrap();
        let err = decompose_mixing(&[zero2, mixed], &k).unwrap_err();
        assert!(matches!(err, Error::Inconclusive(_)));
        let _ = flip;
    }
}
