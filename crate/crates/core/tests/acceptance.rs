//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::time::{Duration, Instant};

use crreflect_core::expr::{parse_expression, print_series};
use crreflect_core::generate::{self, random_cr_map, random_manifold, random_real_system, random_series};
use crreflect_core::manifold::{GraphedManifold, RealDefiningSystem, VarNames};
use crreflect_core::nondegen::{
    classify_manifold, classify_map_cr, cr_implications_hold, degenerate_selfmap_generator,
    holomorphic_degeneracy_field, nd_implications_hold, psi_and_h_conditions, seeded_t_series, ManifoldClassification,
};
use crreflect_core::reflection::{
    check_parity_collapse, check_resolution, formal_cramer_solve, forward_expansion, invert_expansion,
    parity_collapses, q_jbeta_cramer, reflection_components, reflection_identities, relation_kernel,
    resolve_finitely_nondeg, verify_formal_cr_map, ExpansionTable, FormalCRMap, Half, ReflectionComponents,
};
use crreflect_core::segre::{chain, chain_rank, minimality, ChainStart};
use crreflect_core::series::{
    multidegrees_up_to, Gq, Matrix, Multidegree, SeriesMap, TruncatedSeries, VariableContext,
};

type Series = TruncatedSeries;
type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

/// Graph of `ρ = 0` with `ρ` written in `z1.., w1.., zb1.., wb1..`.
fn real_graph(m: usize, d: usize, rho: &[&str], names: VarNames, order: i32) -> GraphedManifold {
    let mut vars: Vec<String> = (1..=m).map(|k| format!("z{k}")).collect();
    vars.extend((1..=d).map(|j| format!("w{j}")));
    let conj: Vec<String> = vars.iter().map(|v| format!("{}b{}", &v[..1], &v[1..])).collect();
    vars.extend(conj);
    let ctx = VariableContext::new(&vars).unwrap();
    let rho = rho.iter().map(|r| parse_expression(r, &ctx, order).unwrap()).collect();
    let sys = RealDefiningSystem::new(&ctx, rho).unwrap();
    GraphedManifold::complexify_and_graph(&sys, None, names).unwrap()
}

fn heisenberg(names: VarNames, order: i32) -> GraphedManifold {
    real_graph(1, 1, &["w1 - wb1 - i*z1*zb1"], names, order)
}

fn sphere3(names: VarNames, order: i32) -> GraphedManifold {
    real_graph(2, 1, &["w1 - wb1 - i*z1*zb1 - i*z2*zb2"], names, order)
}

/// `w = w̄ + i z1 z̄1` in three variables.
fn degenerate3(names: VarNames, order: i32) -> GraphedManifold {
    real_graph(2, 1, &["w1 - wb1 - i*z1*zb1"], names, order)
}

fn map_of(source: &GraphedManifold, target: &GraphedManifold, comps: &[&str]) -> FormalCRMap {
    let h = comps.iter().map(|c| parse_expression(c, source.context(), source.order()).unwrap()).collect();
    FormalCRMap::into_target(source, target, h).unwrap()
}

fn print_table(c: &ReflectionComponents) -> String {
    c.table
        .iter()
        .map(|(g, v)| format!("{g:?}: {}", v.iter().map(print_series).collect::<Vec<_>>().join(", ")))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Entries `(γ', printed Θ'_γ')` that are nonzero.
fn nonzero_entries(c: &ReflectionComponents) -> Vec<(Vec<u32>, String)> {
    c.table.iter().filter(|(_, v)| !v[0].is_zero()).map(|(g, v)| (g.to_vec(), print_series(&v[0]))).collect()
}

fn involution_invariant() -> Outcome {
    let shapes = [(1, 1), (2, 1), (3, 1), (2, 2), (3, 2)];
    let start = Instant::now();
    for seed in 0..50u64 {
        let (n, d) = shapes[seed as usize % shapes.len()];
        let sys = random_real_system(n, d, 3, 6, seed).map_err(fail)?;
        let m = GraphedManifold::complexify_and_graph(&sys, None, VarNames::source()).map_err(fail)?;
        let rep = m.verify_reality();
        ensure(rep.ok, || format!("seed {seed} (n={n}, d={d}) fails at degree {:?}", rep.first_failing_degree))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(60), || format!("took {t:?}"))?;
    Ok("50 systems".into())
}

fn heisenberg_suite() -> Outcome {
    let start = Instant::now();
    let m = heisenberg(VarNames::source(), 8);
    let t = heisenberg(VarNames::target(), 8);
    let c = classify_manifold(&t, 2, 4, 0).map_err(fail)?;
    ensure(c.nd1.verdict.holds(), || format!("nd1 {:?}", c.nd1))?;
    let min = minimality(&m, 5, 0).map_err(fail)?;
    ensure(min.minimal && min.nu0.is_some_and(|nu| nu <= 2), || format!("minimality {min:?}"))?;
    let r3 = chain_rank(&chain(&m, 3, ChainStart::Unbarred).map_err(fail)?, 0);
    ensure(r3.rank == 3 && r3.certified, || format!("rank of the 3-chain {r3:?}"))?;
    let h = FormalCRMap::into_target(&m, &t, vec![m.var(0), m.var(1)]).map_err(fail)?;
    let comps = reflection_components(&h, &t, 8).map_err(fail)?;
    let want = vec![(vec![0], "w1".to_string()), (vec![1], "-i*z1".to_string())];
    ensure(nonzero_entries(&comps) == want, || format!("components\n{}", print_table(&comps)))?;
    let rep = reflection_identities(&h, &m, &t, 3, &[1, 2, 3, 4]).map_err(fail)?;
    ensure(rep.pass(), || "a reflection identity residual is nonzero".into())?;
    let el = start.elapsed();
    ensure(el < Duration::from_secs(30), || format!("took {el:?}"))?;
    Ok(format!("nu0 = {:?}", min.nu0.unwrap()))
}

fn degenerate_example() -> Outcome {
    let m = degenerate3(VarNames::source(), 8);
    let t = degenerate3(VarNames::target(), 8);
    let field = holomorphic_degeneracy_field(&t, 4).map_err(fail)?.ok_or("no tangent field")?;
    let nonzero: Vec<usize> = (0..3).filter(|&i| !field.coefficients[i].is_zero()).collect();
    ensure(nonzero == vec![1], || format!("field {:?}", field.coefficients))?;
    let a = &field.coefficients[1];
    ensure(a.num_terms() == 1 && a.constant_term() != Gq::zero(), || format!("coefficient {}", print_series(a)))?;
    let mut printed = Vec::new();
    for seed in [1u64, 2] {
        let mut rng = generate::rng(seed);
        let z2 = m.var(1);
        let varpi = &z2 + &random_series(&mut rng, m.context(), &[1], 2, 8, 8, 0.9);
        let h = FormalCRMap::into_target(&m, &t, vec![m.var(0), varpi, m.var(2)]).map_err(fail)?;
        ensure(verify_formal_cr_map(&h, &m, &t).map_err(fail)?.pass(), || format!("map {seed} is not CR"))?;
        let comps = reflection_components(&h, &t, 8).map_err(fail)?;
        let want = vec![(vec![0, 0], "w1".to_string()), (vec![1, 0], "-i*z1".to_string())];
        ensure(nonzero_entries(&comps) == want, || format!("components\n{}", print_table(&comps)))?;
        printed.push(print_table(&comps));
    }
    ensure(printed[0] == printed[1], || "tables depend on the series".into())?;
    Ok("field d/dz2, two series".into())
}

fn cramer_equivalence() -> Outcome {
    let mut count = 0;
    let cases: Vec<(GraphedManifold, GraphedManifold, Vec<&str>, Vec<&str>)> = vec![
        (heisenberg(VarNames::source(), 8), heisenberg(VarNames::target(), 8), vec!["z1", "w1"], vec!["2*z1", "4*w1"]),
        (
            sphere3(VarNames::source(), 8),
            sphere3(VarNames::target(), 8),
            vec!["z1", "z2", "w1"],
            vec!["3*z1", "3*z2", "9*w1"],
        ),
    ];
    for (m, t, id, dil) in &cases {
        for comps in [id, dil] {
            let h = map_of(m, t, comps);
            let rep = q_jbeta_cramer(&h, m, t, 3).map_err(fail)?;
            ensure(!rep.det_at_origin.is_zero(), || format!("determinant vanishes for {comps:?}"))?;
            for e in &rep.entries {
                ensure(e.agrees, || format!("{comps:?} disagrees at j={} beta={:?}", e.j, e.beta))?;
                ensure(e.order >= 8 - 3, || format!("precision {} at beta={:?}", e.order, e.beta))?;
            }
            count += rep.entries.len();
        }
    }
    Ok(format!("{count} entries"))
}

fn inversion_roundtrip() -> Outcome {
    let ctx = VariableContext::new(&["a", "b", "c"]).unwrap();
    let vars = [0, 1, 2];
    for seed in 0..100u64 {
        let mut rng = generate::rng(seed);
        let arity = 1 + (seed % 2) as usize;
        let point: Vec<Series> = (0..arity).map(|_| random_series(&mut rng, &ctx, &vars, 1, 3, 6, 0.5)).collect();
        let table: ExpansionTable = multidegrees_up_to(arity, 3)
            .into_iter()
            .map(|b| (b, random_series(&mut rng, &ctx, &vars, 0, 4, 6, 0.4)))
            .collect();
        let q = forward_expansion(&table, &point, 3).map_err(fail)?;
        let back = invert_expansion(&q, &point, 3).map_err(fail)?;
        ensure(back == table, || format!("seed {seed}"))?;
    }
    Ok("100 tables".into())
}

fn family_equivalence() -> Outcome {
    let mut cr = 0;
    for seed in 0..20u64 {
        let m = random_manifold(1 + (seed % 2) as usize, 1, 3, 6, 1000 + seed).map_err(fail)?;
        let (h, t) = random_cr_map(&m, 3, seed).map_err(fail)?;
        let is_cr = seed % 2 == 0;
        let h = if is_cr { h } else { generate::perturbed(&h, &m, seed).map_err(fail)? };
        let rep = reflection_identities(&h, &m, &t, 3, &[1, 2, 3, 4]).map_err(fail)?;
        ensure(rep.family_vanishes(1) == is_cr, || format!("seed {seed}: family 1 verdict"))?;
        ensure(rep.family_vanishes(1) == rep.family_vanishes(2), || format!("seed {seed}: families 1, 2 differ"))?;
        ensure(rep.family_vanishes(3) == rep.family_vanishes(4), || format!("seed {seed}: families 3, 4 differ"))?;
        ensure(rep.first_failure(1) == rep.first_failure(3), || format!("seed {seed}: first failures 1, 3 differ"))?;
        ensure(rep.first_failure(2) == rep.first_failure(4), || format!("seed {seed}: first failures 2, 4 differ"))?;
        cr += is_cr as usize;
    }
    Ok(format!("{cr} CR, {} perturbed", 20 - cr))
}

fn planted_cramer() -> Outcome {
    const N: i32 = 8;
    let ctx = VariableContext::new(&["x", "y"]).unwrap();
    let vars = [0, 1];
    for seed in 0..50u64 {
        let mut rng = generate::rng(seed);
        let mu = (seed % 3) as u32;
        let k = 2 + (seed % 2) as usize;
        let mut rand = |lo, hi| random_series(&mut rng, &ctx, &vars, lo, hi, N, 0.4);
        let unit_tri = |upper: bool, rand: &mut dyn FnMut(u32, u32) -> Series| -> Vec<Vec<Series>> {
            (0..k)
                .map(|i| {
                    (0..k)
                        .map(|j| match (i == j, (j > i) == upper) {
                            (true, _) => Series::one(&ctx, N),
                            (false, true) => rand(0, 4),
                            (false, false) => Series::zero(&ctx, N),
                        })
                        .collect()
                })
                .collect()
        };
        let u = unit_tri(true, &mut rand);
        let v = unit_tri(false, &mut rand);
        let lead = match mu {
            0 => Series::one(&ctx, N),
            _ => {
                let mut p = rand(mu, mu);
                if p.is_zero() {
                    p = Series::var(&ctx, N, 0).pow(mu);
                }
                p
            }
        };
        let p = &lead * &(&Series::one(&ctx, N) + &rand(1, 3));
        let mul = |a: &[Vec<Series>], b: &[Vec<Series>]| -> Vec<Vec<Series>> {
            (0..k)
                .map(|i| {
                    (0..k).map(|j| (0..k).fold(Series::zero(&ctx, N), |acc, l| &acc + &(&a[i][l] * &b[l][j]))).collect()
                })
                .collect()
        };
        let diag: Vec<Vec<Series>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| match (i == j, i) {
                        (true, 0) => p.clone(),
                        (true, _) => Series::one(&ctx, N),
                        _ => Series::zero(&ctx, N),
                    })
                    .collect()
            })
            .collect();
        let r = mul(&mul(&u, &diag), &v);
        let a: Vec<Series> = (0..k).map(|_| rand(0, 6)).collect();
        let b: Vec<Series> =
            r.iter().map(|row| row.iter().zip(&a).fold(Series::zero(&ctx, N), |acc, (x, y)| &acc + &(x * y))).collect();
        let sol = formal_cramer_solve(&r, &b).map_err(fail)?;
        ensure(sol.lost_order == mu, || format!("seed {seed}: lost order {} want {mu}", sol.lost_order))?;
        let keep = N - mu as i32;
        for (s, want) in sol.solution.iter().zip(&a) {
            ensure(s.truncate(keep) == want.truncate(keep), || format!("seed {seed}: solution differs"))?;
        }
    }
    Ok("50 systems".into())
}

fn resolution() -> Outcome {
    const N: i32 = 8;
    // inputs carry four extra degrees for the jet identities
    let m = heisenberg(VarNames::source(), N + 4);
    let t = heisenberg(VarNames::target(), N + 4);
    for comps in [vec!["z1", "w1"], vec!["2*z1", "4*w1"]] {
        let h = map_of(&m, &t, &comps);
        let res = resolve_finitely_nondeg(&h, &m, &t, 1).map_err(fail)?;
        let chk = check_resolution(&res, &h, &m, 3).map_err(fail)?;
        ensure(chk.direct.is_none() && chk.conjugate.is_none(), || format!("{comps:?}: {chk:?}"))?;
        ensure(chk.order >= N, || format!("{comps:?}: residuals known through {}", chk.order))?;
        ensure(chk.jet_levels.len() == 4, || format!("{comps:?}: levels {:?}", chk.jet_levels))?;
        for &(ell, v, o) in &chk.jet_levels {
            ensure(v.is_none(), || format!("{comps:?}: level {ell} fails at {v:?}"))?;
            ensure(o >= N - ell as i32, || format!("{comps:?}: level {ell} known through {o}"))?;
        }
    }
    Ok("identity and dilation".into())
}

fn minimal_manifold(seed: u64, order: i32) -> Result<GraphedManifold, String> {
    for attempt in 0..20 {
        let m = random_manifold(1, 1, 3, order, seed * 100 + attempt).map_err(fail)?;
        if minimality(&m, 5, seed).map_err(fail)?.minimal {
            return Ok(m);
        }
    }
    Err(format!("no minimal manifold for seed {seed}"))
}

fn chain_collapses() -> Outcome {
    let mut checks = 0;
    for seed in 0..20u64 {
        let m = minimal_manifold(seed, 6)?;
        let (h, _) = random_cr_map(&m, 3, seed).map_err(fail)?;
        let mut jets: Vec<Series> = h.h().to_vec();
        for c in h.h() {
            jets.extend((0..m.n()).map(|v| c.derive(v)));
        }
        let conj: Vec<Series> = jets.iter().map(crreflect_core::manifold::conj_swap).collect();
        let jh = SeriesMap::new(m.context(), jets).map_err(fail)?;
        let jhb = SeriesMap::new(m.context(), conj).map_err(fail)?;
        for start in [ChainStart::Unbarred, ChainStart::Barred] {
            for k in 1..=4 {
                for (f, half) in [(&jh, Half::T), (&jhb, Half::Tau)] {
                    if parity_collapses(start, k, half) {
                        let ok = check_parity_collapse(&m, f, half, start, k).map_err(fail)?;
                        ensure(ok, || format!("seed {seed}, {start:?}, k={k}, {half:?}"))?;
                        checks += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{checks} identities"))
}

fn transversality() -> Outcome {
    let ctx = VariableContext::new(&["zeta1", "zeta2"]).unwrap();
    let p = |s: &str| parse_expression(s, &ctx, 8).unwrap();
    let k1 = relation_kernel(&[p("zeta1"), p("zeta2")], 4, 8).map_err(fail)?;
    ensure(k1.is_empty(), || format!("{} relations among (zeta1, zeta2)", k1.len()))?;
    let k2 = relation_kernel(&[p("zeta1^2")], 4, 8).map_err(fail)?;
    ensure(k2.is_empty(), || format!("{} relations for zeta1^2", k2.len()))?;
    let diag = [p("zeta1"), p("zeta1")];
    let k3 = relation_kernel(&diag, 1, 8).map_err(fail)?;
    ensure(k3.len() == 1, || format!("{} linear relations for (zeta1, zeta1)", k3.len()))?;
    let x_minus_y = |r: &Series| {
        let c = r.coeff(&Multidegree::from_slice(&[1, 0]));
        !c.is_zero() && r.coeff(&Multidegree::from_slice(&[0, 1])) == -c && r.num_terms() == 2
    };
    ensure(x_minus_y(&k3[0]), || format!("relation {}", print_series(&k3[0])))?;
    let k4 = relation_kernel(&diag, 4, 8).map_err(fail)?;
    let cols: Vec<Multidegree> = multidegrees_up_to(2, 4).into_iter().filter(|a| !a.is_zero()).collect();
    let basis = Matrix::from_rows(k4.iter().map(|r| cols.iter().map(|a| r.coeff(a)).collect()).collect());
    let target: Vec<Gq> = cols
        .iter()
        .map(|a| match a.to_vec().as_slice() {
            [1, 0] => Gq::one(),
            [0, 1] => -Gq::one(),
            _ => Gq::zero(),
        })
        .collect();
    ensure(basis.row_span_contains(&target), || "x - y missing at degree 4".into())?;

    let mp = degenerate3(VarNames::source(), 8);
    let field = holomorphic_degeneracy_field(&mp, 4).map_err(fail)?.ok_or("no tangent field")?;
    for seed in 0..20u64 {
        let varpi = seeded_t_series(&mp, 8, seed);
        let h = degenerate_selfmap_generator(&mp, &field.coefficients, &varpi).map_err(fail)?;
        ensure(verify_formal_cr_map(&h, &mp, &mp).map_err(fail)?.pass(), || format!("self-map {seed}"))?;
    }
    Ok("3 kernels, 20 self-maps".into())
}

fn implication_chains() -> Outcome {
    let mut manifolds: Vec<(String, GraphedManifold)> = vec![
        ("heisenberg".into(), heisenberg(VarNames::target(), 6)),
        ("sphere3".into(), sphere3(VarNames::target(), 6)),
        ("degenerate3".into(), degenerate3(VarNames::target(), 6)),
        ("z2-tangency".into(), real_graph(1, 1, &["w1 - wb1 - i*z1^2*zb1^2"], VarNames::target(), 8)),
        ("flat".into(), real_graph(1, 1, &["w1 - wb1"], VarNames::target(), 6)),
    ];
    for seed in 0..4u64 {
        let m = random_manifold(1 + (seed % 2) as usize, 1, 3, 5, 500 + seed).map_err(fail)?;
        manifolds.push((format!("random{seed}"), m.renamed(VarNames::target()).map_err(fail)?));
    }
    let mut decided = 0;
    for (name, m) in &manifolds {
        let c: ManifoldClassification = classify_manifold(m, 4.min(m.order() as u32), 3, 0).map_err(fail)?;
        ensure(nd_implications_hold(&c), || format!("{name}: {c:?}"))?;
        ensure(c.nd5_cross_check != Some(false), || format!("{name}: nd5 cross-check"))?;
        decided += c.flags().iter().filter(|f| f.verdict.is_decided()).count();
    }

    let heis_s = heisenberg(VarNames::source(), 6);
    let heis_t = heisenberg(VarNames::target(), 6);
    let flat_t = real_graph(1, 1, &["w1 - wb1"], VarNames::target(), 6);
    let sph_s = sphere3(VarNames::source(), 6);
    let flat3 = real_graph(2, 1, &["w1 - wb1"], VarNames::target(), 6);
    let deg_s = degenerate3(VarNames::source(), 6);
    let deg_t = degenerate3(VarNames::target(), 6);
    let mut maps: Vec<(String, FormalCRMap, GraphedManifold, GraphedManifold)> = vec![
        ("identity".into(), map_of(&heis_s, &heis_t, &["z1", "w1"]), heis_s.clone(), heis_t.clone()),
        ("dilation".into(), map_of(&heis_s, &heis_t, &["2*z1", "4*w1"]), heis_s.clone(), heis_t.clone()),
        ("square".into(), map_of(&heis_s, &flat_t, &["z1^2", "0"]), heis_s.clone(), flat_t),
        ("diagonal".into(), map_of(&sph_s, &flat3, &["z1", "z1", "0"]), sph_s.clone(), flat3),
        ("degenerate".into(), map_of(&deg_s, &deg_t, &["z1", "z2 + z2^2 - i*z2^3", "w1"]), deg_s, deg_t),
    ];
    for seed in 0..4u64 {
        let m = random_manifold(1 + (seed % 2) as usize, 1, 3, 5, 700 + seed).map_err(fail)?;
        let (h, t) = random_cr_map(&m, 3, seed).map_err(fail)?;
        maps.push((format!("random{seed}"), h, m, t));
    }
    for (name, h, s, t) in &maps {
        let c = classify_map_cr(h, s, t, 3, 0).map_err(fail)?;
        ensure(cr_implications_hold(&c), || format!("{name}: {c:?}"))?;
        decided += c.flags().iter().filter(|f| f.verdict.is_decided()).count();
        let hc = psi_and_h_conditions(h, s, t, 2, 3, 0).map_err(fail)?;
        decided += hc.flags().iter().filter(|f| f.verdict.is_decided()).count();
    }
    Ok(format!("{} manifolds, {} maps, {decided} decided flags", manifolds.len(), maps.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("involution invariant on random real systems", involution_invariant),
        ("Heisenberg suite", heisenberg_suite),
        ("holomorphically degenerate example", degenerate_example),
        ("Cramer jets versus direct differentiation", cramer_equivalence),
        ("expansion inversion round trip", inversion_roundtrip),
        ("conjugate family equivalence", family_equivalence),
        ("formal Cramer solve on planted systems", planted_cramer),
        ("finitely nondegenerate resolution", resolution),
        ("chain parity collapses", chain_collapses),
        ("transversality kernels and degenerate self-maps", transversality),
        ("implication chains of decided flags", implication_chains),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(note) => println!("PASS {:>2} {name} ({note}) [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
