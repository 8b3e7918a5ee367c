//! Exhaustive witness searches over finite windows: monochrome shifted
//! systems under a coloring of a group, near-returns of a finite isometric
//! action, and monochrome pair windows under substitution. Every search
//! scans its entire window, so a not-found answer disproves existence
//! inside the window (and says nothing beyond it), and every found witness
//! is replayed through a checker that shares no evaluation code with the
//! search before it is reported.
//!
//! Windows are explicit inputs by design: the inductive constructions that
//! produce them in principle blow up far past desk scale. The one place
//! the induction is executed literally is [`trace_cascade`], a pedagogical
//! mode restricted to systems of weight at most {1: 1}.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use num::bigint::BigInt;
use num::{BigRational, Signed, Zero};
use rayon::prelude::*;

use crate::ipcore::{FinSet, OrderedTuple};
use crate::nilgroup::{Filtration, GroupElement, NilGroup, Word};
use crate::pexpr::{ordered_tuples, PolyExpr};
use crate::polymap::{submasks, weight_vector, PolyMap, WeightVector};
use crate::{Error, Result};

/// Positions a search window may offer to the set variables.
pub const WINDOW_GROUND_CAP: usize = 10;
/// Most set variables a searched system may have.
pub const WINDOW_ARITY_CAP: usize = 4;
/// Work budget for one search call (tuples × maps × window entries).
pub const SEARCH_WORK_CAP: u64 = 1 << 24;
/// Most points a metric table may carry; the axiom sweep is cubic.
pub const METRIC_POINTS_CAP: usize = 128;

const TRACE_POINTS_CAP: usize = 24;
const TRACE_DEPTH_CAP: usize = 8;
const TRACE_SET_CAP: usize = 4096;

// ----- permutation actions -----

/// A right action of a group on {0, …, n−1}, one permutation per
/// generator. Construction checks that every defining commutator and
/// power relation of the presentation acts as the identity, so the
/// generator images extend to a homomorphism into the symmetric group and
/// normal-form application is a genuine action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermAction {
    group: Arc<NilGroup>,
    n_points: usize,
    perms: Vec<Vec<usize>>,
}

impl PermAction {
    pub fn new(group: &Arc<NilGroup>, n_points: usize, perms: Vec<Vec<usize>>) -> Result<PermAction> {
        if n_points == 0 {
            return Err(Error::invalid("an action needs at least one point"));
        }
        if perms.len() != group.rank() {
            return Err(Error::invalid(format!(
                "expected one permutation per generator: got {}, rank is {}",
                perms.len(),
                group.rank()
            )));
        }
        for (i, p) in perms.iter().enumerate() {
            if p.len() != n_points {
                return Err(Error::invalid(format!(
                    "permutation {i} moves {} points, the space has {n_points}",
                    p.len()
                )));
            }
            let mut seen = vec![false; n_points];
            for &q in p {
                if q >= n_points || seen[q] {
                    return Err(Error::invalid(format!("permutation {i} is not a bijection")));
                }
                seen[q] = true;
            }
        }
        let action = PermAction {
            group: group.clone(),
            n_points,
            perms,
        };
        action.check_relations()?;
        Ok(action)
    }

    /// The right-translation action of a finite group on itself: points
    /// are the elements in [`NilGroup::elements`] order, generator i sends
    /// the point at g to the point at g·xᵢ.
    pub fn right_translation(
        group: &Arc<NilGroup>,
        cap: usize,
    ) -> Result<(Vec<GroupElement>, PermAction)> {
        let elems = group.elements(cap)?;
        let index: BTreeMap<&GroupElement, usize> =
            elems.iter().enumerate().map(|(i, e)| (e, i)).collect();
        let mut perms = Vec::with_capacity(group.rank());
        for i in 0..group.rank() {
            let xi = group.generator(i)?;
            let mut perm = Vec::with_capacity(elems.len());
            for e in &elems {
                let img = group.product(e, &xi)?;
                perm.push(*index.get(&img).ok_or_else(|| {
                    Error::Internal("translation left the element enumeration".into())
                })?);
            }
            perms.push(perm);
        }
        let action = PermAction::new(group, elems.len(), perms)?;
        Ok((elems, action))
    }

    /// The defining relations generate all relations of the presentation,
    /// so checking them on every point is exactly what extending to a
    /// right action requires.
    fn check_relations(&self) -> Result<()> {
        let rank = self.group.rank();
        for i in 0..rank {
            for j in (i + 1)..rank {
                let lhs: Word = vec![(i, -1), (j, -1), (i, 1), (j, 1)];
                let rhs: Word = self
                    .group
                    .commutator_words()
                    .get(&(i, j))
                    .cloned()
                    .unwrap_or_default();
                for p in 0..self.n_points {
                    if self.apply_word(&lhs, p) != self.apply_word(&rhs, p) {
                        return Err(Error::invalid(format!(
                            "the permutations break the commutator relation of generators {i} and {j}"
                        )));
                    }
                }
            }
            if let Some(m) = self.group.order(i) {
                let m = i64::try_from(m).map_err(|_| {
                    Error::invalid(format!("generator {i} order too large to validate"))
                })?;
                let lhs: Word = vec![(i, m)];
                let rhs: Word = self.group.power_words().get(&i).cloned().unwrap_or_default();
                for p in 0..self.n_points {
                    if self.apply_word(&lhs, p) != self.apply_word(&rhs, p) {
                        return Err(Error::invalid(format!(
                            "the permutations break the power relation of generator {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn group(&self) -> &Arc<NilGroup> {
        &self.group
    }

    pub fn points(&self) -> usize {
        self.n_points
    }

    pub fn perm(&self, i: usize) -> Result<&[usize]> {
        self.perms
            .get(i)
            .map(|p| p.as_slice())
            .ok_or_else(|| Error::invalid(format!("no generator {i}")))
    }

    /// p·g, applying each generator's power of the normal form in turn.
    pub fn act(&self, p: usize, g: &GroupElement) -> Result<usize> {
        if g.exponents().len() != self.group.rank() {
            return Err(Error::invalid("element does not belong to the acting group"));
        }
        if p >= self.n_points {
            return Err(Error::invalid("point index out of range"));
        }
        let mut q = p;
        for (i, &e) in g.exponents().iter().enumerate() {
            q = self.gen_pow(i, e, q);
        }
        Ok(q)
    }

    /// πᵢᵉ at p: walk p's cycle once for its length, then step e reduced
    /// mod that length.
    fn gen_pow(&self, i: usize, e: i64, p: usize) -> usize {
        if e == 0 {
            return p;
        }
        let perm = &self.perms[i];
        let mut len = 1usize;
        let mut q = perm[p];
        while q != p {
            q = perm[q];
            len += 1;
        }
        let steps = e.rem_euclid(len as i64) as usize;
        let mut q = p;
        for _ in 0..steps {
            q = perm[q];
        }
        q
    }

    fn apply_word(&self, w: &[(usize, i64)], p: usize) -> usize {
        let mut q = p;
        for &(g, e) in w {
            q = self.gen_pow(g, e, q);
        }
        q
    }
}

/// Checker-side action evaluation: each generator power is built as a
/// whole permutation by binary exponentiation instead of per-point cycle
/// walks.
fn act_by_squaring(action: &PermAction, p: usize, g: &GroupElement) -> Result<usize> {
    let n = action.points();
    if p >= n || g.exponents().len() != action.group().rank() {
        return Err(Error::invalid("point or element out of range"));
    }
    let compose = |a: &[usize], b: &[usize]| -> Vec<usize> { a.iter().map(|&x| b[x]).collect() };
    let mut q = p;
    for (i, &e) in g.exponents().iter().enumerate() {
        if e == 0 {
            continue;
        }
        let forward = action.perm(i)?;
        let base: Vec<usize> = if e < 0 {
            let mut inv = vec![0usize; n];
            for (x, &y) in forward.iter().enumerate() {
                inv[y] = x;
            }
            inv
        } else {
            forward.to_vec()
        };
        let mut k = e.unsigned_abs();
        let mut pw: Vec<usize> = (0..n).collect();
        let mut sq = base;
        while k > 0 {
            if k & 1 == 1 {
                pw = compose(&pw, &sq);
            }
            k >>= 1;
            if k > 0 {
                sq = compose(&sq, &sq);
            }
        }
        q = pw[q];
    }
    Ok(q)
}

// ----- coloring and metric spaces -----

/// A partial coloring of group elements; keys are normalized on entry and
/// a key colored twice with different colors is rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementColoring {
    group: Arc<NilGroup>,
    colors: BTreeMap<GroupElement, u32>,
}

impl ElementColoring {
    pub fn new(group: &Arc<NilGroup>, entries: Vec<(GroupElement, u32)>) -> Result<ElementColoring> {
        let mut colors = BTreeMap::new();
        for (e, c) in entries {
            let e = group.element(e.exponents().to_vec())?;
            if let Some(&prev) = colors.get(&e) {
                if prev != c {
                    return Err(Error::invalid(
                        "an element is colored twice with different colors",
                    ));
                }
            }
            colors.insert(e, c);
        }
        Ok(ElementColoring {
            group: group.clone(),
            colors,
        })
    }

    pub fn group(&self) -> &Arc<NilGroup> {
        &self.group
    }

    /// None for elements the coloring does not cover; such elements can
    /// never take part in a monochrome witness.
    pub fn color(&self, e: &GroupElement) -> Option<u32> {
        self.colors.get(e).copied()
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }
}

/// A finite metric space carrying a right action by isometries. The table
/// is validated against the metric axioms (zero diagonal, symmetry,
/// positivity off the diagonal, the triangle inequality) and every
/// generator permutation is checked to preserve it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricSpace {
    action: PermAction,
    metric: Vec<Vec<BigRational>>,
}

impl MetricSpace {
    pub fn new(action: PermAction, metric: Vec<Vec<BigRational>>) -> Result<MetricSpace> {
        let n = action.points();
        if n > METRIC_POINTS_CAP {
            return Err(Error::CapExceeded(format!(
                "metric spaces are capped at {METRIC_POINTS_CAP} points"
            )));
        }
        if metric.len() != n || metric.iter().any(|row| row.len() != n) {
            return Err(Error::invalid("the metric table must be square over the points"));
        }
        for i in 0..n {
            if !metric[i][i].is_zero() {
                return Err(Error::invalid("self-distances must vanish"));
            }
            for j in 0..i {
                if metric[i][j] != metric[j][i] {
                    return Err(Error::invalid("the metric table must be symmetric"));
                }
                if !metric[i][j].is_positive() {
                    return Err(Error::invalid(
                        "distinct points must be at positive distance",
                    ));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if metric[i][k] > &metric[i][j] + &metric[j][k] {
                        return Err(Error::invalid("the triangle inequality fails"));
                    }
                }
            }
        }
        for (g, perm) in action.perms.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    if metric[perm[i]][perm[j]] != metric[i][j] {
                        return Err(Error::invalid(format!(
                            "generator {g} does not act by isometries"
                        )));
                    }
                }
            }
        }
        Ok(MetricSpace { action, metric })
    }

    pub fn action(&self) -> &PermAction {
        &self.action
    }

    pub fn points(&self) -> usize {
        self.action.points()
    }

    pub fn distance(&self, i: usize, j: usize) -> Result<&BigRational> {
        if i >= self.points() || j >= self.points() {
            return Err(Error::invalid("point index out of range"));
        }
        Ok(&self.metric[i][j])
    }

    pub fn diameter(&self) -> BigRational {
        self.metric
            .iter()
            .flatten()
            .max()
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }
}

/// Either a coloring of group elements or a finite isometric action with a
/// metric; each search demands the matching variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColoringSpace {
    Colors(ElementColoring),
    Metric(MetricSpace),
}

impl ColoringSpace {
    pub fn as_coloring(&self) -> Result<&ElementColoring> {
        match self {
            ColoringSpace::Colors(c) => Ok(c),
            ColoringSpace::Metric(_) => {
                Err(Error::invalid("this search needs a coloring, not a metric space"))
            }
        }
    }

    pub fn as_metric(&self) -> Result<&MetricSpace> {
        match self {
            ColoringSpace::Metric(m) => Ok(m),
            ColoringSpace::Colors(_) => {
                Err(Error::invalid("this search needs a metric space, not a coloring"))
            }
        }
    }

    /// The right-translation orbit of a total coloring x of a finite
    /// group: points are the distinct colorings x·g with (x·g)(h) =
    /// x(g·h), the metric is normalized Hamming distance (right-invariant,
    /// so generators act by isometries), and the returned index is the
    /// point of x itself. Two colorings closer than 1/|G| are equal, so
    /// any color pattern survives below that threshold. The construction
    /// law is re-checked on every pair of elements before the space is
    /// returned.
    pub fn coloring_orbit(coloring: &ElementColoring) -> Result<(ColoringSpace, usize)> {
        let group = coloring.group().clone();
        let elems = group.elements(METRIC_POINTS_CAP)?;
        let index: BTreeMap<&GroupElement, usize> =
            elems.iter().enumerate().map(|(i, e)| (e, i)).collect();
        let pattern = |g: &GroupElement| -> Result<Vec<u32>> {
            elems
                .iter()
                .map(|h| {
                    coloring.color(&group.product(g, h)?).ok_or_else(|| {
                        Error::invalid("the orbit construction needs a total coloring")
                    })
                })
                .collect()
        };
        let mut points: Vec<Vec<u32>> = Vec::new();
        let mut point_of: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        let mut orbit_of: Vec<usize> = Vec::with_capacity(elems.len());
        for g in &elems {
            let v = pattern(g)?;
            let next = points.len();
            let id = *point_of.entry(v.clone()).or_insert(next);
            if id == next {
                points.push(v);
            }
            orbit_of.push(id);
        }
        // translated-coloring law on every pair, read back through the
        // deduplicated tables
        for (gi, g) in elems.iter().enumerate() {
            for (hi, h) in elems.iter().enumerate() {
                let direct = coloring
                    .color(&group.product(g, h)?)
                    .expect("totality was checked above");
                if points[orbit_of[gi]][hi] != direct {
                    return Err(Error::Internal(
                        "translated coloring table disagrees with the construction law".into(),
                    ));
                }
            }
        }
        let mut perms = Vec::with_capacity(group.rank());
        for i in 0..group.rank() {
            let xi = group.generator(i)?;
            let shift: Vec<usize> = elems
                .iter()
                .map(|h| Ok(index[&group.product(&xi, h)?]))
                .collect::<Result<_>>()?;
            let mut perm = Vec::with_capacity(points.len());
            for v in &points {
                let moved: Vec<u32> = shift.iter().map(|&t| v[t]).collect();
                perm.push(*point_of.get(&moved).ok_or_else(|| {
                    Error::Internal("the orbit is not closed under translation".into())
                })?);
            }
            perms.push(perm);
        }
        // the action must agree with translation inside the group
        for i in 0..group.rank() {
            let xi = group.generator(i)?;
            for (gi, g) in elems.iter().enumerate() {
                if orbit_of[index[&group.product(g, &xi)?]] != perms[i][orbit_of[gi]] {
                    return Err(Error::Internal(
                        "orbit action disagrees with right translation".into(),
                    ));
                }
            }
        }
        let action = PermAction::new(&group, points.len(), perms)?;
        let total = BigInt::from(elems.len());
        let mut metric = vec![vec![BigRational::zero(); points.len()]; points.len()];
        for a in 0..points.len() {
            for b in 0..points.len() {
                let differ = points[a]
                    .iter()
                    .zip(&points[b])
                    .filter(|(x, y)| x != y)
                    .count();
                metric[a][b] = BigRational::new(BigInt::from(differ), total.clone());
            }
        }
        let start = orbit_of[index[&group.identity()]];
        let space = MetricSpace::new(action, metric)?;
        Ok((ColoringSpace::Metric(space), start))
    }
}

// ----- witnesses -----

/// What a witness certifies: one shared color, or one exact distance per
/// searched map, each strictly below the bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WitnessCert {
    Color(u32),
    WithinEps {
        eps: BigRational,
        distances: Vec<BigRational>,
    },
}

/// A simultaneous-return witness: the window element s and the ordered
/// tuple ᾱ every searched map accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HJWitness {
    pub s: GroupElement,
    pub alphas: OrderedTuple,
    pub cert: WitnessCert,
}

/// A monochrome-pair witness: the window index a and the substitution
/// tuple β⃗ whose generated pairs all land in the window with one color.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairWitness {
    pub index: usize,
    pub betas: OrderedTuple,
    pub color: u32,
}

// ----- shared window plumbing -----

/// Uniform arity, ground, and group across a searched system.
fn system_shape(system: &[PolyExpr]) -> Result<(&Arc<NilGroup>, usize, usize)> {
    let first = system
        .first()
        .ok_or_else(|| Error::invalid("the searched system is empty"))?;
    for e in system {
        if e.arity() != first.arity() || e.ground() != first.ground() {
            return Err(Error::invalid("searched maps must share arity and ground"));
        }
        if **e.group() != **first.group() {
            return Err(Error::invalid("searched maps must live over one group"));
        }
    }
    Ok((first.group(), first.arity(), first.ground()))
}

fn window_tuples(ground: usize, arity: usize, expr_ground: usize) -> Result<Vec<Vec<FinSet>>> {
    if ground > expr_ground {
        return Err(Error::invalid(format!(
            "window ground {ground} exceeds the maps' ground {expr_ground}"
        )));
    }
    if ground == 0 && arity > 0 {
        return Err(Error::invalid("an empty ground cannot host nonempty sets"));
    }
    if ground > WINDOW_GROUND_CAP {
        return Err(Error::CapExceeded(format!(
            "window grounds are capped at {WINDOW_GROUND_CAP} positions"
        )));
    }
    if arity > WINDOW_ARITY_CAP {
        return Err(Error::CapExceeded(format!(
            "searched systems are capped at {WINDOW_ARITY_CAP} set variables"
        )));
    }
    Ok(ordered_tuples(ground, arity)
        .into_iter()
        .map(|t| t.into_iter().map(FinSet::new).collect())
        .collect())
}

fn budget(parts: &[usize]) -> Result<()> {
    let mut work: u64 = 1;
    for &p in parts {
        work = work.saturating_mul(p as u64);
    }
    if work > SEARCH_WORK_CAP {
        return Err(Error::CapExceeded(format!(
            "the search would take {work} evaluations; the cap is {SEARCH_WORK_CAP}"
        )));
    }
    Ok(())
}

fn normalize_window(group: &Arc<NilGroup>, s_window: &[GroupElement]) -> Result<Vec<GroupElement>> {
    s_window
        .iter()
        .map(|s| group.element(s.exponents().to_vec()))
        .collect()
}

/// Checker-side expression evaluation: unwinds the layered form
/// iteratively through the public accessors instead of the expression's
/// own evaluator.
fn eval_by_layers(e: &PolyExpr, tuple: &[FinSet]) -> Result<GroupElement> {
    if tuple.len() != e.arity() {
        return Err(Error::invalid("witness tuple arity mismatch"));
    }
    let group = e.group().clone();
    let mut chain: Vec<&PolyExpr> = Vec::new();
    let mut cur = Some(e);
    while let Some(x) = cur {
        chain.push(x);
        cur = x.base();
    }
    chain.reverse();
    for (r, sub) in chain.iter().enumerate() {
        if sub.arity() != r {
            return Err(Error::invalid("malformed expression chain"));
        }
    }
    let mut acc = group.identity();
    for r in 1..=tuple.len() {
        let key: Vec<u64> = tuple[..r - 1].iter().map(|s| s.mask()).collect();
        let layer = chain[r]
            .layers()
            .get(&key)
            .ok_or_else(|| Error::invalid("layer table misses the witness tuple"))?;
        let top = layer.eval(tuple[r - 1].mask())?;
        acc = group.product(top, &acc)?;
    }
    Ok(acc)
}

// ----- monochrome search -----

/// Exhaustive monochrome search: an s in the window and an ordered tuple
/// ᾱ over the ground positions with every s·g(ᾱ) the same color. The
/// system must contain the identity expression, so s itself shares that
/// color. Parallel over the window with a deterministic least witness
/// (window order first, then tuple order); the witness is replayed through
/// [`verify_hj`] before being reported.
pub fn hj_search(
    space: &ColoringSpace,
    system: &[PolyExpr],
    ground: usize,
    s_window: &[GroupElement],
) -> Result<Option<HJWitness>> {
    let coloring = space.as_coloring()?;
    let (group, arity, expr_ground) = system_shape(system)?;
    if **coloring.group() != **group {
        return Err(Error::invalid("coloring and system disagree about the group"));
    }
    let group = group.clone();
    let s_window = normalize_window(&group, s_window)?;
    let tuples = window_tuples(ground, arity, expr_ground)?;
    budget(&[tuples.len(), system.len(), s_window.len().max(1)])?;
    let values: Vec<Vec<GroupElement>> = system
        .iter()
        .map(|e| tuples.iter().map(|t| e.eval(t)).collect())
        .collect::<Result<_>>()?;
    if !values
        .iter()
        .any(|row| row.iter().all(GroupElement::is_identity))
    {
        return Err(Error::invalid(
            "the searched system must contain the identity expression",
        ));
    }
    let hits: Vec<Option<(usize, usize, u32)>> = s_window
        .par_iter()
        .enumerate()
        .map(|(si, s)| -> Result<Option<(usize, usize, u32)>> {
            'tuple: for ti in 0..tuples.len() {
                let mut shared: Option<u32> = None;
                for row in &values {
                    let e = group.product(s, &row[ti])?;
                    let Some(c) = coloring.color(&e) else {
                        continue 'tuple;
                    };
                    if *shared.get_or_insert(c) != c {
                        continue 'tuple;
                    }
                }
                if let Some(c) = shared {
                    return Ok(Some((si, ti, c)));
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let Some((si, ti, color)) = hits.into_iter().flatten().min() else {
        return Ok(None);
    };
    let witness = HJWitness {
        s: s_window[si].clone(),
        alphas: OrderedTuple::new(tuples[ti].clone())?,
        cert: WitnessCert::Color(color),
    };
    verify_hj(space, system, ground, &s_window, &witness)
        .map_err(|e| Error::Internal(format!("a found witness failed its replay: {e}")))?;
    Ok(Some(witness))
}

/// Independent replay of a monochrome witness: every map is re-evaluated
/// by unwinding its layer tables directly, the colors are re-read, and all
/// must equal the recorded one; window membership and tuple shape are
/// re-validated.
pub fn verify_hj(
    space: &ColoringSpace,
    system: &[PolyExpr],
    ground: usize,
    s_window: &[GroupElement],
    witness: &HJWitness,
) -> Result<()> {
    let coloring = space.as_coloring()?;
    let (group, arity, _) = system_shape(system)?;
    if **coloring.group() != **group {
        return Err(Error::invalid("coloring and system disagree about the group"));
    }
    let WitnessCert::Color(expect) = &witness.cert else {
        return Err(Error::invalid("a coloring witness must carry a color"));
    };
    if !s_window.contains(&witness.s) {
        return Err(Error::invalid("the witness shift is not in the window"));
    }
    let sets = OrderedTuple::new(witness.alphas.sets().to_vec())?;
    let sets = sets.sets();
    if sets.len() != arity {
        return Err(Error::invalid("witness tuple arity mismatch"));
    }
    for a in sets {
        if a.max().is_none_or(|m| m >= ground) {
            return Err(Error::invalid("witness tuple leaves the ground window"));
        }
    }
    for e in system {
        let v = eval_by_layers(e, sets)?;
        if coloring.color(&group.product(&witness.s, &v)?) != Some(*expect) {
            return Err(Error::invalid("replay found a mismatched or missing color"));
        }
    }
    Ok(())
}

// ----- metric near-return search -----

/// Exhaustive near-return search on a finite isometric action: an s in the
/// window and a tuple ᾱ with ρ(x·s·g(ᾱ), x·s) < ε for every searched map.
/// Exhaustive within the window, deterministic least witness, replayed
/// through [`verify_metric`] before being reported.
pub fn metric_orbit_search(
    space: &ColoringSpace,
    system: &[PolyExpr],
    eps: &BigRational,
    ground: usize,
    s_window: &[GroupElement],
    x: usize,
) -> Result<Option<HJWitness>> {
    let ms = space.as_metric()?;
    let (group, arity, expr_ground) = system_shape(system)?;
    if **ms.action().group() != **group {
        return Err(Error::invalid("action and system disagree about the group"));
    }
    if !eps.is_positive() {
        return Err(Error::invalid("the return bound must be positive"));
    }
    if x >= ms.points() {
        return Err(Error::invalid("start point out of range"));
    }
    let group = group.clone();
    let s_window = normalize_window(&group, s_window)?;
    let tuples = window_tuples(ground, arity, expr_ground)?;
    budget(&[tuples.len(), system.len(), s_window.len().max(1)])?;
    let values: Vec<Vec<GroupElement>> = system
        .iter()
        .map(|e| tuples.iter().map(|t| e.eval(t)).collect())
        .collect::<Result<_>>()?;
    let hits: Vec<Option<(usize, usize, Vec<BigRational>)>> = s_window
        .par_iter()
        .enumerate()
        .map(|(si, s)| -> Result<Option<(usize, usize, Vec<BigRational>)>> {
            let ps = ms.action().act(x, s)?;
            'tuple: for ti in 0..tuples.len() {
                let mut ds = Vec::with_capacity(values.len());
                for row in &values {
                    let q = ms.action().act(ps, &row[ti])?;
                    let d = &ms.metric[q][ps];
                    if d >= eps {
                        continue 'tuple;
                    }
                    ds.push(d.clone());
                }
                return Ok(Some((si, ti, ds)));
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let Some((si, ti, distances)) = hits
        .into_iter()
        .flatten()
        .min_by_key(|(si, ti, _)| (*si, *ti))
    else {
        return Ok(None);
    };
    let witness = HJWitness {
        s: s_window[si].clone(),
        alphas: OrderedTuple::new(tuples[ti].clone())?,
        cert: WitnessCert::WithinEps {
            eps: eps.clone(),
            distances,
        },
    };
    verify_metric(space, system, eps, ground, &s_window, x, &witness)
        .map_err(|e| Error::Internal(format!("a found witness failed its replay: {e}")))?;
    Ok(Some(witness))
}

/// Independent replay of a near-return witness: distances are recomputed
/// with layer-table evaluation and squaring-based permutation powers
/// (neither shared with the search), compared to the recorded values, and
/// checked against the bound.
pub fn verify_metric(
    space: &ColoringSpace,
    system: &[PolyExpr],
    eps: &BigRational,
    ground: usize,
    s_window: &[GroupElement],
    x: usize,
    witness: &HJWitness,
) -> Result<()> {
    let ms = space.as_metric()?;
    let (group, arity, _) = system_shape(system)?;
    if **ms.action().group() != **group {
        return Err(Error::invalid("action and system disagree about the group"));
    }
    if x >= ms.points() {
        return Err(Error::invalid("start point out of range"));
    }
    let WitnessCert::WithinEps {
        eps: w_eps,
        distances,
    } = &witness.cert
    else {
        return Err(Error::invalid("a metric witness must carry distances"));
    };
    if w_eps != eps {
        return Err(Error::invalid("the witness records a different bound"));
    }
    if !s_window.contains(&witness.s) {
        return Err(Error::invalid("the witness shift is not in the window"));
    }
    let sets = OrderedTuple::new(witness.alphas.sets().to_vec())?;
    let sets = sets.sets();
    if sets.len() != arity {
        return Err(Error::invalid("witness tuple arity mismatch"));
    }
    for a in sets {
        if a.max().is_none_or(|m| m >= ground) {
            return Err(Error::invalid("witness tuple leaves the ground window"));
        }
    }
    if distances.len() != system.len() {
        return Err(Error::invalid("one distance per searched map is required"));
    }
    let ps = act_by_squaring(ms.action(), x, &witness.s)?;
    for (e, recorded) in system.iter().zip(distances) {
        let v = eval_by_layers(e, sets)?;
        let q = act_by_squaring(ms.action(), ps, &v)?;
        let d = &ms.metric[q][ps];
        if d != recorded {
            return Err(Error::invalid(
                "a replayed distance differs from the recorded one",
            ));
        }
        if d >= eps {
            return Err(Error::invalid("a recorded distance reaches the bound"));
        }
    }
    Ok(())
}

// ----- monochrome pair search -----

struct PairShape {
    group: Arc<NilGroup>,
    arity: usize,
    set_ground: usize,
    window_arity: usize,
}

fn check_shared_base(e: &PolyExpr, base: &mut Option<Arc<Filtration>>) -> Result<()> {
    let mut cur = Some(e);
    while let Some(x) = cur {
        for m in x.layers().values() {
            match base {
                None => *base = Some(m.base().clone()),
                Some(f) => {
                    if !Arc::ptr_eq(f, m.base()) && !f.equivalent(m.base())? {
                        return Err(Error::invalid(
                            "pair searches multiply expressions; all must share one base filtration",
                        ));
                    }
                }
            }
        }
        cur = x.base();
    }
    Ok(())
}

fn pair_shape(
    r_system: &[PolyExpr],
    w_system: &[PolyExpr],
    window: &[(PolyExpr, PolyExpr)],
    colors: &[u32],
    ground: usize,
) -> Result<PairShape> {
    let first = r_system
        .first()
        .ok_or_else(|| Error::invalid("at least one substituted map is required"))?;
    if window.is_empty() {
        return Err(Error::invalid("the pair window is empty"));
    }
    if colors.len() != window.len() {
        return Err(Error::invalid("one color per window pair is required"));
    }
    let group = first.group().clone();
    let arity = first.arity();
    let set_ground = first.ground();
    for e in r_system.iter().chain(w_system) {
        if e.arity() != arity || e.ground() != set_ground {
            return Err(Error::invalid("substituted maps must share arity and ground"));
        }
        if !Arc::ptr_eq(e.group(), &group) {
            return Err(Error::invalid(
                "pair searches need every expression over one group instance",
            ));
        }
    }
    let window_arity = window[0].0.arity();
    if window_arity == 0 {
        return Err(Error::invalid("window expressions need at least one variable"));
    }
    for (l, m) in window {
        if l.arity() != window_arity || m.arity() != window_arity {
            return Err(Error::invalid("window pairs must share one arity"));
        }
        if l.ground() != set_ground || m.ground() != set_ground {
            return Err(Error::invalid("window pairs must share the maps' ground"));
        }
        if !Arc::ptr_eq(l.group(), &group) || !Arc::ptr_eq(m.group(), &group) {
            return Err(Error::invalid(
                "pair searches need every expression over one group instance",
            ));
        }
    }
    if ground > window_arity {
        return Err(Error::invalid(
            "substitution positions exceed the window arity",
        ));
    }
    if arity > WINDOW_ARITY_CAP || window_arity > WINDOW_ARITY_CAP {
        return Err(Error::CapExceeded(format!(
            "searched systems are capped at {WINDOW_ARITY_CAP} set variables"
        )));
    }
    if ground > WINDOW_GROUND_CAP || set_ground > WINDOW_GROUND_CAP {
        return Err(Error::CapExceeded(format!(
            "window grounds are capped at {WINDOW_GROUND_CAP} positions"
        )));
    }
    let mut base = None;
    for e in r_system.iter().chain(w_system) {
        check_shared_base(e, &mut base)?;
    }
    for (l, m) in window {
        check_shared_base(l, &mut base)?;
        check_shared_base(m, &mut base)?;
    }
    Ok(PairShape {
        group,
        arity,
        set_ground,
        window_arity,
    })
}

/// Exhaustive monochrome pair search. For a window index a and a tuple β⃗
/// of position groups, the generated pairs (Lₐ·Rᵢ[β⃗], Mₐ·W_k[β⃗]·Lₐ⁻¹)
/// over all i and k must each agree pointwise with a window pair, all of
/// one color. The first window pair anchors the translation, so its
/// left component must be the identity expression. The scan works in the
/// transformed coloring χ̃(g, h) = χ(g, h·g⁻¹), under which the target
/// pairs take the product form (Lₐ·Rᵢ[β⃗], Mₐ·W_k[β⃗]·Rᵢ[β⃗]); the
/// checker replays the displayed form instead. With no W maps the second
/// components degenerate and pairs are matched by their left parts alone.
/// Deterministic least witness (window index first, then tuple order),
/// replayed through [`verify_pair`] before being reported.
pub fn pair_color_search(
    r_system: &[PolyExpr],
    w_system: &[PolyExpr],
    window: &[(PolyExpr, PolyExpr)],
    colors: &[u32],
    ground: usize,
) -> Result<Option<PairWitness>> {
    let shape = pair_shape(r_system, w_system, window, colors, ground)?;
    let group = shape.group.clone();
    let eval_tuples = window_tuples(shape.set_ground, shape.window_arity, shape.set_ground)?;
    let beta_tuples = window_tuples(ground, shape.arity, ground.max(shape.set_ground))?;
    budget(&[
        beta_tuples.len().max(1),
        r_system.len() * (w_system.len() + 1) + window.len(),
        eval_tuples.len(),
        window.len(),
    ])?;
    let sig_of = |e: &PolyExpr| -> Result<Vec<GroupElement>> {
        eval_tuples.iter().map(|t| e.eval(t)).collect()
    };
    let mut window_sigs: Vec<(Vec<GroupElement>, Vec<GroupElement>)> = Vec::new();
    for (l, m) in window {
        window_sigs.push((sig_of(l)?, sig_of(m)?));
    }
    if window_sigs[0].0.iter().any(|v| !v.is_identity()) {
        return Err(Error::invalid(
            "the first window pair must have the identity as its left part",
        ));
    }
    let empty_w = w_system.is_empty();
    // color tables keyed by pointwise values; ambiguous windows are input
    // errors
    let mut pair_color: BTreeMap<&[GroupElement], BTreeMap<&[GroupElement], u32>> = BTreeMap::new();
    let mut left_color: BTreeMap<&[GroupElement], u32> = BTreeMap::new();
    for (i, (sl, sm)) in window_sigs.iter().enumerate() {
        if empty_w {
            if let Some(&c) = left_color.get(sl.as_slice()) {
                if c != colors[i] {
                    return Err(Error::invalid(
                        "with no W maps, window pairs sharing a left part must share a color",
                    ));
                }
            } else {
                left_color.insert(sl, colors[i]);
            }
        } else if let Some(&c) = pair_color
            .get(sl.as_slice())
            .and_then(|by_m| by_m.get(sm.as_slice()))
        {
            if c != colors[i] {
                return Err(Error::invalid(
                    "two window pairs agree pointwise but carry different colors",
                ));
            }
        } else {
            pair_color.entry(sl).or_default().insert(sm, colors[i]);
        }
    }
    // per-β substituted value tables; a padded expression evaluates as its
    // core on the leading coordinates, so the full-arity signature is the
    // core's value at each tuple prefix
    let sub_sig = |e: &PolyExpr, betas: &[FinSet]| -> Result<Vec<GroupElement>> {
        let s = e.substitute(betas)?;
        if s.arity() > shape.window_arity {
            return Err(Error::Internal("substitution exceeded the window arity".into()));
        }
        eval_tuples.iter().map(|t| s.eval(&t[..s.arity()])).collect()
    };
    let mut per_beta: Vec<(Vec<Vec<GroupElement>>, Vec<Vec<GroupElement>>)> = Vec::new();
    for betas in &beta_tuples {
        let rs: Vec<Vec<GroupElement>> = r_system
            .iter()
            .map(|e| sub_sig(e, betas))
            .collect::<Result<_>>()?;
        let ws: Vec<Vec<GroupElement>> = w_system
            .iter()
            .map(|e| sub_sig(e, betas))
            .collect::<Result<_>>()?;
        per_beta.push((rs, ws));
    }
    let hits: Vec<Option<(usize, usize, u32)>> = (0..window.len())
        .into_par_iter()
        .map(|a| -> Result<Option<(usize, usize, u32)>> {
            let (sig_l, sig_m) = &window_sigs[a];
            'beta: for (bi, (rs, ws)) in per_beta.iter().enumerate() {
                let mut shared: Option<u32> = None;
                for rsig in rs {
                    let g: Vec<GroupElement> = sig_l
                        .iter()
                        .zip(rsig)
                        .map(|(l, r)| group.product(l, r))
                        .collect::<Result<_>>()?;
                    if empty_w {
                        let Some(&c) = left_color.get(g.as_slice()) else {
                            continue 'beta;
                        };
                        if *shared.get_or_insert(c) != c {
                            continue 'beta;
                        }
                    } else {
                        let Some(by_m) = pair_color.get(g.as_slice()) else {
                            continue 'beta;
                        };
                        for wsig in ws {
                            // the product form Mₐ·W_k[β⃗]·Rᵢ[β⃗], carried
                            // back through the transform as h·g⁻¹
                            let mut key = Vec::with_capacity(g.len());
                            for t in 0..g.len() {
                                let h = group
                                    .product(&group.product(&sig_m[t], &wsig[t])?, &rsig[t])?;
                                key.push(group.product(&h, &group.inverse(&g[t])?)?);
                            }
                            let Some(&c) = by_m.get(key.as_slice()) else {
                                continue 'beta;
                            };
                            if *shared.get_or_insert(c) != c {
                                continue 'beta;
                            }
                        }
                    }
                }
                if let Some(c) = shared {
                    return Ok(Some((a, bi, c)));
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let Some((a, bi, color)) = hits.into_iter().flatten().min() else {
        return Ok(None);
    };
    let witness = PairWitness {
        index: a,
        betas: OrderedTuple::new(beta_tuples[bi].clone())?,
        color,
    };
    verify_pair(r_system, w_system, window, colors, ground, &witness)
        .map_err(|e| Error::Internal(format!("a found witness failed its replay: {e}")))?;
    Ok(Some(witness))
}

/// Pads an expression up to the window arity with identity layers; the
/// added trailing variables do not change its values.
fn pad_expr(mut e: PolyExpr, arity: usize, filt: &Arc<Filtration>) -> Result<PolyExpr> {
    if e.arity() > arity {
        return Err(Error::invalid("substituted expression exceeds the window arity"));
    }
    while e.arity() < arity {
        let id = PolyMap::identity_map(filt, e.ground())?;
        let mut layers = BTreeMap::new();
        for key in ordered_tuples(e.ground(), e.arity()) {
            layers.insert(key, id.clone());
        }
        e = PolyExpr::from_layers(layers, e)?;
    }
    Ok(e)
}

/// Independent replay of a pair witness: each displayed pair
/// (Lₐ·Rᵢ[β⃗], Mₐ·W_k[β⃗]·Lₐ⁻¹) is built as an actual expression via
/// substitution, padding, product, and inverse, then compared pointwise
/// against the window; every matching window pair must carry the recorded
/// color.
pub fn verify_pair(
    r_system: &[PolyExpr],
    w_system: &[PolyExpr],
    window: &[(PolyExpr, PolyExpr)],
    colors: &[u32],
    ground: usize,
    witness: &PairWitness,
) -> Result<()> {
    let shape = pair_shape(r_system, w_system, window, colors, ground)?;
    if witness.index >= window.len() {
        return Err(Error::invalid("witness window index out of range"));
    }
    let betas = OrderedTuple::new(witness.betas.sets().to_vec())?;
    if betas.arity() != shape.arity {
        return Err(Error::invalid("witness tuple arity mismatch"));
    }
    for b in betas.sets() {
        if b.max().is_none_or(|m| m >= ground) {
            return Err(Error::invalid("witness tuple leaves the position window"));
        }
    }
    let (la, ma) = &window[witness.index];
    let filt = la
        .layers()
        .values()
        .next()
        .ok_or_else(|| Error::invalid("window expressions need at least one variable"))?
        .base()
        .clone();
    let la_inv = la.inverse()?;
    let eval_tuples = window_tuples(shape.set_ground, shape.window_arity, shape.set_ground)?;
    let agree = |x: &PolyExpr, y: &PolyExpr| -> Result<bool> {
        for t in &eval_tuples {
            if x.eval(t)? != y.eval(t)? {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let check_in_window = |left: &PolyExpr, right: Option<&PolyExpr>| -> Result<()> {
        let mut matched = false;
        for (j, (l, m)) in window.iter().enumerate() {
            let hit = agree(l, left)?
                && match right {
                    Some(r) => agree(m, r)?,
                    None => true,
                };
            if hit {
                if colors[j] != witness.color {
                    return Err(Error::invalid(
                        "a generated pair matches a window pair of a different color",
                    ));
                }
                matched = true;
            }
        }
        if !matched {
            return Err(Error::invalid("a generated pair does not land in the window"));
        }
        Ok(())
    };
    for r in r_system {
        let g = la.product(&pad_expr(
            r.substitute(betas.sets())?,
            shape.window_arity,
            &filt,
        )?)?;
        if w_system.is_empty() {
            check_in_window(&g, None)?;
        } else {
            for w in w_system {
                let h = ma
                    .product(&pad_expr(
                        w.substitute(betas.sets())?,
                        shape.window_arity,
                        &filt,
                    )?)?
                    .product(&la_inv)?;
                check_in_window(&g, Some(&h))?;
            }
        }
    }
    Ok(())
}

// ----- pedagogical cascade trace -----

/// One induction round: the derived system (which must lose weight), the
/// continuity bound the round runs under, the fresh positions and shifts
/// its recursive call produced, and the carried set sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeRound {
    pub derived_size: usize,
    pub derived_weight: WeightVector,
    pub eps_round: BigRational,
    pub fresh: FinSet,
    pub shifts: Vec<GroupElement>,
    pub carried: usize,
    pub carried_translations: usize,
    pub trace: Box<CascadeTrace>,
}

/// A verified return certificate for one point: x·s comes back ε-close to
/// itself along every map at the set α, found at the pigeonhole pair of
/// walk indices recorded here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointCertificate {
    pub point: usize,
    pub s: GroupElement,
    pub alpha: FinSet,
    pub pigeon: (usize, usize),
    pub distances: Vec<BigRational>,
}

/// A literal, desk-scale run of the induction behind the searches, for
/// systems of weight at most {1: 1}: per-round derived systems, continuity
/// bounds, fresh position blocks, and a verified certificate for every
/// point of the space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeTrace {
    pub weight: WeightVector,
    pub covering: usize,
    pub rounds: Vec<CascadeRound>,
    pub fresh_union: FinSet,
    pub shifts: Vec<GroupElement>,
    pub per_point: Vec<PointCertificate>,
}

impl CascadeTrace {
    /// Indented outline of the whole recursion.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(0, &mut out);
        out
    }

    fn render_into(&self, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        let _ = writeln!(
            out,
            "{pad}system of weight {}, covering number {}, {} round(s)",
            self.weight,
            self.covering,
            self.rounds.len()
        );
        for (i, r) in self.rounds.iter().enumerate() {
            let _ = writeln!(
                out,
                "{pad}round {i}: derived {} map(s) of weight {}, bound {}, fresh {:?}, \
                 {} shift(s), carrying {}/{}",
                r.derived_size,
                r.derived_weight,
                r.eps_round,
                r.fresh.elems(),
                r.shifts.len(),
                r.carried,
                r.carried_translations
            );
            r.trace.render_into(depth + 1, out);
        }
        let _ = writeln!(
            out,
            "{pad}fresh union {:?}, {} shift(s), {} point certificate(s)",
            self.fresh_union.elems(),
            self.shifts.len(),
            self.per_point.len()
        );
    }
}

/// At most one equivalence class, and only at level 1: the counts are
/// empty or exactly {1: 1}.
fn within_trace_weight(w: &WeightVector) -> bool {
    w.counts().iter().all(|(&l, &c)| l == 1 && c <= 1)
}

/// Size of the largest subset with all pairwise distances at or above the
/// threshold, found exactly by branch and bound. One more point than this
/// always contains a pair below the threshold.
fn packing_number(ms: &MetricSpace, threshold: &BigRational) -> usize {
    let n = ms.points();
    let far: Vec<u64> = (0..n)
        .map(|i| {
            let mut m = 0u64;
            for j in 0..n {
                if j != i && ms.metric[i][j] >= *threshold {
                    m |= 1 << j;
                }
            }
            m
        })
        .collect();
    fn grow(far: &[u64], cand: u64, size: usize, best: &mut usize) {
        if size + cand.count_ones() as usize <= *best {
            return;
        }
        if cand == 0 {
            *best = size;
            return;
        }
        let v = cand.trailing_zeros() as usize;
        grow(far, cand & far[v], size + 1, best);
        grow(far, cand & !(1u64 << v), size, best);
    }
    let mut best = 0;
    grow(&far, (1u64 << n) - 1, 0, &mut best);
    best
}

/// The loosest bound that still transfers through every carried
/// translation: the least distance among pairs some translator pushes to
/// the target or beyond (past the diameter when no pair is pushed that
/// far). Isometric actions transfer every pair, so this degenerates to
/// the least distance at or above the target; the scan is kept in the
/// induction's shape regardless.
fn continuity_bound(
    ms: &MetricSpace,
    translators: &[GroupElement],
    target: &BigRational,
) -> Result<BigRational> {
    let n = ms.points();
    let mut bound: Option<BigRational> = None;
    for b in translators {
        let img: Vec<usize> = (0..n)
            .map(|p| ms.action().act(p, b))
            .collect::<Result<_>>()?;
        for x in 1..n {
            for y in 0..x {
                if ms.metric[img[x]][img[y]] >= *target
                    && bound.as_ref().map_or(true, |cur| ms.metric[x][y] < *cur)
                {
                    bound = Some(ms.metric[x][y].clone());
                }
            }
        }
    }
    Ok(bound.unwrap_or_else(|| ms.diameter() + BigRational::from_integer(BigInt::from(1))))
}

/// Runs the induction literally on a finite isometric action and hands
/// back the full trace. Restricted to vanishing-at-∅ systems of weight at
/// most {1: 1} taking values in the first filtration level, over spaces of
/// at most a couple dozen points: anything heavier belongs to the window
/// searches, not the trace.
pub fn trace_cascade(
    space: &ColoringSpace,
    system: &[PolyMap],
    eps: &BigRational,
) -> Result<CascadeTrace> {
    let ms = space.as_metric()?;
    if ms.points() > TRACE_POINTS_CAP {
        return Err(Error::CapExceeded(format!(
            "the trace runs the full induction; it is capped at {TRACE_POINTS_CAP} points"
        )));
    }
    if !eps.is_positive() {
        return Err(Error::invalid("the return bound must be positive"));
    }
    let first = system
        .first()
        .ok_or_else(|| Error::invalid("nothing to trace: the system is empty"))?;
    let group = first.group().clone();
    if **ms.action().group() != *group {
        return Err(Error::invalid("action and system disagree about the group"));
    }
    let ground = first.ground();
    let full = if ground >= 64 { u64::MAX } else { (1u64 << ground) - 1 };
    for m in system {
        if !Arc::ptr_eq(m.group(), &group) || m.ground() != ground {
            return Err(Error::invalid("trace maps must share one group and ground"));
        }
        if !Arc::ptr_eq(m.base(), first.base()) && !m.base().equivalent(first.base())? {
            return Err(Error::invalid("trace maps must share one base filtration"));
        }
        if m.domain() != full {
            return Err(Error::invalid(
                "trace maps must be defined on every subset of the ground",
            ));
        }
        if !m.is_vip_shaped() {
            return Err(Error::invalid("trace maps must vanish at the empty set"));
        }
        let level_one = m.base().subgroup_at(1);
        for v in m.values().values() {
            if !level_one.contains(&group, v)? {
                return Err(Error::invalid(
                    "trace maps must take values inside the first filtration level",
                ));
            }
        }
    }
    let cleaned: Vec<PolyMap> = system
        .iter()
        .filter(|m| !m.is_identity_map())
        .cloned()
        .collect();
    let w = weight_vector(&cleaned)?;
    if !within_trace_weight(&w) {
        return Err(Error::invalid(format!(
            "the trace handles one class at level one; the system weighs {w}"
        )));
    }
    let mut alloc = 0usize;
    cascade(ms, &group, ground, &cleaned, eps, &mut alloc, 0)
}

struct RoundLocal {
    derived_size: usize,
    derived_weight: WeightVector,
    eps_round: BigRational,
    fresh: FinSet,
    carried: usize,
    carried_translations: usize,
    sub: CascadeTrace,
}

fn push_unique(set: &mut Vec<GroupElement>, v: GroupElement, what: &str) -> Result<()> {
    if !set.contains(&v) {
        set.push(v);
        if set.len() > TRACE_SET_CAP {
            return Err(Error::CapExceeded(format!(
                "the carried {what} set outgrew {TRACE_SET_CAP} elements"
            )));
        }
    }
    Ok(())
}

fn cascade(
    ms: &MetricSpace,
    group: &Arc<NilGroup>,
    ground: usize,
    system: &[PolyMap],
    eps: &BigRational,
    alloc: &mut usize,
    depth: usize,
) -> Result<CascadeTrace> {
    if depth > TRACE_DEPTH_CAP {
        return Err(Error::CapExceeded(format!(
            "the induction recursed past {TRACE_DEPTH_CAP} levels"
        )));
    }
    let n_points = ms.points();
    let weight = weight_vector(system)?;
    if system.is_empty() {
        // nothing to return along: one fresh block, the identity shift,
        // and trivial certificates
        let pos = *alloc;
        *alloc += 1;
        if pos >= ground {
            return Err(Error::CapExceeded(
                "the maps' ground ran out of fresh positions".into(),
            ));
        }
        let fresh = FinSet::new(1u64 << pos);
        return Ok(CascadeTrace {
            weight,
            covering: 0,
            rounds: Vec::new(),
            fresh_union: fresh,
            shifts: vec![group.identity()],
            per_point: (0..n_points)
                .map(|p| PointCertificate {
                    point: p,
                    s: group.identity(),
                    alpha: fresh,
                    pigeon: (0, 0),
                    distances: Vec::new(),
                })
                .collect(),
        });
    }
    // the pivot: the least-index map of maximal level
    let levels: Vec<u32> = system.iter().map(PolyMap::level).collect::<Result<_>>()?;
    let max_level = *levels.iter().max().expect("system is nonempty");
    let pivot = &system[levels.iter().position(|&l| l == max_level).unwrap()];
    let two = BigRational::from_integer(BigInt::from(2));
    let half = eps / &two;
    let covering = packing_number(ms, &half) + 1;
    let per_step = eps / BigRational::from_integer(BigInt::from(2 * covering as i64));
    let mut b_set: Vec<GroupElement> = vec![group.identity()];
    let mut b_tilde: Vec<GroupElement> = vec![group.identity()];
    let mut prior: u64 = 0;
    let mut rounds: Vec<RoundLocal> = Vec::with_capacity(covering + 1);
    let pivot_inv = pivot.inverse()?;
    for _ in 0..=covering {
        // the derived system: conjugated pivot-relative shifted returns
        // over every already-used direction, restricted to fresh ground
        let mut derived: Vec<PolyMap> = Vec::new();
        for g in system {
            for m_mask in submasks(prior) {
                let core = if m_mask == 0 {
                    pivot_inv.product(g)?
                } else {
                    pivot_inv.product(g)?.product(&g.symmetric_derivative(m_mask)?)?
                };
                let core = core.restrict(core.domain() & !prior)?;
                for b in &b_set {
                    let map = if b.is_identity() {
                        core.clone()
                    } else {
                        core.conjugate_pointwise(b)?
                    };
                    if map.is_identity_map()
                        || derived
                            .iter()
                            .any(|d| d.domain() == map.domain() && d.values() == map.values())
                    {
                        continue;
                    }
                    derived.push(map);
                    if derived.len() > TRACE_SET_CAP {
                        return Err(Error::CapExceeded(format!(
                            "the derived system outgrew {TRACE_SET_CAP} maps"
                        )));
                    }
                }
            }
        }
        let remaining: Vec<PolyMap> = system
            .iter()
            .map(|m| m.restrict(m.domain() & !prior))
            .collect::<Result<_>>()?;
        let derived_weight = weight_vector(&derived)?;
        if derived_weight >= weight_vector(&remaining)? {
            return Err(Error::Internal("the derived system did not lose weight".into()));
        }
        let eps_round = continuity_bound(ms, &b_tilde, &per_step)?;
        let sub = cascade(ms, group, ground, &derived, &eps_round, alloc, depth + 1)?;
        let fresh = sub.fresh_union;
        // carry the shift set forward: new shifts compose a recursive
        // shift, an old carry, and an inverse pivot value on the fresh
        // block
        let mut next_b = Vec::new();
        for s in &sub.shifts {
            for b in &b_set {
                for a_mask in submasks(fresh.mask()) {
                    if a_mask == 0 {
                        continue;
                    }
                    let v = group.product(
                        &group.product(s, b)?,
                        &group.inverse(pivot.eval(a_mask)?)?,
                    )?;
                    push_unique(&mut next_b, v, "shift")?;
                }
            }
        }
        b_set = next_b;
        prior |= fresh.mask();
        let mut next_bt = Vec::new();
        for b in &b_set {
            for g in system {
                for m_mask in submasks(prior) {
                    let v = group.product(b, g.eval(m_mask)?)?;
                    push_unique(&mut next_bt, v, "translation")?;
                }
            }
        }
        b_tilde = next_bt;
        rounds.push(RoundLocal {
            derived_size: derived.len(),
            derived_weight,
            eps_round,
            fresh,
            carried: b_set.len(),
            carried_translations: b_tilde.len(),
            sub,
        });
    }
    // descent: walk each point down the rounds, then pigeonhole the walk
    let mut per_point = Vec::with_capacity(n_points);
    let mut shifts: Vec<GroupElement> = Vec::new();
    for x in 0..n_points {
        let mut s_choice = vec![group.identity(); covering + 1];
        let mut n_choice = vec![FinSet::empty(); covering + 1];
        let mut y = x;
        for i in (0..=covering).rev() {
            let cert = &rounds[i].sub.per_point[y];
            s_choice[i] = cert.s.clone();
            n_choice[i] = cert.alpha;
            y = ms.action().act(y, &cert.s)?;
        }
        let mut walk = Vec::with_capacity(covering + 1);
        let mut cur = y;
        for n in &n_choice {
            cur = ms
                .action()
                .act(cur, &group.inverse(pivot.eval(n.mask())?)?)?;
            walk.push(cur);
        }
        let mut pigeon = None;
        'pair: for i in 0..covering {
            for j in (i + 1)..=covering {
                if ms.metric[walk[i]][walk[j]] < half {
                    pigeon = Some((i, j));
                    break 'pair;
                }
            }
        }
        let Some((pi, pj)) = pigeon else {
            return Err(Error::Internal(
                "no close pair appeared along the walk".into(),
            ));
        };
        let mut s_elem = group.identity();
        for i in (0..=covering).rev() {
            s_elem = group.product(&s_elem, &s_choice[i])?;
        }
        for n in &n_choice[..=pj] {
            s_elem = group.product(&s_elem, &group.inverse(pivot.eval(n.mask())?)?)?;
        }
        if ms.action().act(x, &s_elem)? != walk[pj] {
            return Err(Error::Internal("shift bookkeeping went astray".into()));
        }
        let alpha = n_choice[pi + 1..=pj]
            .iter()
            .fold(FinSet::empty(), |acc, n| acc.union(n));
        let mut distances = Vec::with_capacity(system.len());
        for g in system {
            let q = ms.action().act(walk[pj], g.eval(alpha.mask())?)?;
            let d = &ms.metric[q][walk[pj]];
            if d >= eps {
                return Err(Error::Internal(
                    "the induction's guarantee failed to materialize".into(),
                ));
            }
            distances.push(d.clone());
        }
        if !shifts.contains(&s_elem) {
            shifts.push(s_elem.clone());
        }
        per_point.push(PointCertificate {
            point: x,
            s: s_elem,
            alpha,
            pigeon: (pi, pj),
            distances,
        });
    }
    Ok(CascadeTrace {
        weight,
        covering,
        rounds: rounds
            .into_iter()
            .map(|r| CascadeRound {
                derived_size: r.derived_size,
                derived_weight: r.derived_weight,
                eps_round: r.eps_round,
                fresh: r.fresh,
                shifts: r.sub.shifts.clone(),
                carried: r.carried,
                carried_translations: r.carried_translations,
                trace: Box::new(r.sub),
            })
            .collect(),
        fresh_union: FinSet::new(prior),
        shifts,
        per_point,
    })
}
