use std::sync::Arc;

use nilpoly::genpoly::{
    certificate_product, fvip_extract, near_identity_refine, parse_genpoly, verify_fvip, IPSystem,
    Real,
};
use nilpoly::hjsearch::{hj_search, trace_cascade, ColoringSpace, ElementColoring};
use nilpoly::ipcore::{FinSet, IPRing};
use nilpoly::nilgroup::{Filtration, NilGroup, Subgroup};
use nilpoly::pexpr::PolyExpr;
use nilpoly::polymap::PolyMap;
use nilpoly::recurrence::{cyclic_rotation, recurrence_check};
use num::{BigInt, BigRational};

fn main() {
    // end-to-end: parse -> evaluate -> refine -> extract -> independently verify
    let p = parse_genpoly("floor(sqrt(2)*x1)*floor(sqrt(3)*x1)").expect("parse");
    assert_eq!(p.eval(&[BigInt::from(4)]).expect("eval"), BigInt::from(30));

    let sys = IPSystem::new((0..40).map(|i| vec![1i64 << i]).collect()).expect("system");
    let chain = IPRing::new((0..40).map(|i| FinSet::new(1 << i)).collect()).expect("chain");

    let val = |mask: u64| Ok(Real::sqrt_of(2).mul_int(&sys.n_at(mask)[0]));
    let refined = near_identity_refine(&val, &chain, &Real::Rat(num::BigRational::new(num::BigInt::from(1), num::BigInt::from(5))), 3)
        .expect("refine")
        .expect("a sub-chain exists");
    println!("refined to {} blocks", refined.chain().len());

    let cert = fvip_extract(&p, &sys, &chain, 3).expect("extract");
    verify_fvip(&p, &sys, &chain, &cert).expect("verify");
    println!(
        "certificate: shift {}, {} generators, {} witnesses",
        cert.shift,
        cert.generators.len(),
        cert.witnesses.len()
    );

    let sq = parse_genpoly("x1^2").expect("parse");
    let lin = parse_genpoly("3*x1").expect("parse");
    let ca = fvip_extract(&sq, &sys, &chain, 3).expect("extract sq");
    let cb = fvip_extract(&lin, &sys, &chain, 3).expect("extract lin");
    let prod = certificate_product(&ca, &cb).expect("product");
    let p_prod = nilpoly::genpoly::GenPoly::Prod(Box::new(sq), Box::new(lin));
    verify_fvip(&p_prod, &sys, &chain, &prod).expect("verify product");
    println!("product certificate verified: length {}", prod.chain_length);

    // monochrome search over a parity coloring of ℤ, witness replayed by
    // the independent checker inside hj_search itself
    let g = Arc::new(NilGroup::free_abelian(1));
    let whole = Subgroup::whole(&g).expect("whole");
    let base = Arc::new(Filtration::new(g.clone(), vec![whole; 3], None).expect("chain"));
    let card = PolyMap::from_fn(&base, 0, 3, |mask| {
        g.element(vec![mask.count_ones() as i64])
    })
    .expect("map");
    let system = vec![
        PolyExpr::from_map(PolyMap::identity_map(&base, 3).expect("id")).expect("expr"),
        PolyExpr::from_map(card).expect("expr"),
    ];
    let coloring = ElementColoring::new(
        &g,
        (-8..=8)
            .map(|n| (g.element(vec![n]).expect("elem"), n.rem_euclid(2) as u32))
            .collect(),
    )
    .expect("coloring");
    let space = ColoringSpace::Colors(coloring);
    let window = vec![g.identity(), g.element(vec![1]).expect("elem")];
    let hit = hj_search(&space, &system, 3, &window)
        .expect("search")
        .expect("a parity witness exists");
    println!(
        "monochrome witness: shift {:?}, tuple {:?}",
        hit.s.exponents(),
        hit.alphas.sets()
    );

    // the full induction at desk scale: rotation of ℤ₃ under a single
    // cardinality map
    let small = Arc::new(NilGroup::cyclic(3));
    let (_, action) =
        nilpoly::hjsearch::PermAction::right_translation(&small, 8).expect("action");
    let metric: Vec<Vec<BigRational>> = (0..3)
        .map(|i| {
            (0..3)
                .map(|j| BigRational::new(BigInt::from(if i == j { 0 } else { 1 }), BigInt::from(1)))
                .collect()
        })
        .collect();
    let ms = nilpoly::hjsearch::MetricSpace::new(action, metric).expect("metric");
    let small_base = Arc::new(
        Filtration::new(
            small.clone(),
            vec![Subgroup::whole(&small).expect("whole"); 3],
            None,
        )
        .expect("chain"),
    );
    let small_card = PolyMap::from_fn(&small_base, 0, 5, |mask| {
        small.element(vec![mask.count_ones() as i64])
    })
    .expect("map");
    let eps = BigRational::new(BigInt::from(1), BigInt::from(2));
    let trace = trace_cascade(&ColoringSpace::Metric(ms), &[small_card], &eps).expect("trace");
    println!(
        "cascade: covering {}, {} rounds, {} certificates",
        trace.covering,
        trace.rounds.len(),
        trace.per_point.len()
    );

    // positivity scan: the 12-point rotation against IP times n_α = Σ 2^i
    let sys = cyclic_rotation(12).expect("rotation");
    let a: Vec<usize> = (0..7).collect();
    let times = IPSystem::new((0..3).map(|i| vec![1i64 << i]).collect()).expect("times");
    let ring = IPRing::new((0..3).map(|i| FinSet::new(1 << i)).collect()).expect("ring");
    let polys = vec![vec![parse_genpoly("x1").expect("poly")]];
    let report = recurrence_check(&sys, &a, &polys, &times, &ring, 3).expect("scan");
    println!(
        "recurrence: {} ring elements, minimum measure {}, {} positive",
        report.entries.len(),
        report.minimum,
        report.positive.len()
    );
    println!("OK");
}
