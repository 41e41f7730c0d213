use proptest::prelude::*;

use crreflect_core::expr::{parse_expression, print_series};
use crreflect_core::generate::{self, random_cr_map, random_manifold, random_series};
use crreflect_core::manifold::{conj_swap, GraphedManifold, Restriction, VarNames};
use crreflect_core::nondegen::{
    degenerate_selfmap_generator, determinant_criterion, holomorphic_degeneracy_field, seeded_t_series,
};
use crreflect_core::reflection::{
    formal_cramer_solve, forward_expansion, invert_expansion, reflection_components, reflection_identities,
    verify_formal_cr_map, ExpansionTable,
};
use crreflect_core::segre::{chain, chain_at, chain_rank, ChainStart};
use crreflect_core::series::{formal_ift, multidegrees_up_to, Gq, SeriesMap, TruncatedSeries, VariableContext, EXACT};

type Series = TruncatedSeries;

const N: i32 = 5;

fn xyz() -> VariableContext {
    VariableContext::new(&["x", "y", "z"]).unwrap()
}

fn series(seed: u64, ctx: &VariableContext, lo: u32, hi: u32) -> Series {
    let vars: Vec<usize> = (0..ctx.arity()).collect();
    random_series(&mut generate::rng(seed), ctx, &vars, lo, hi, N, 0.4)
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn ring_axioms(s in any::<u64>()) {
        let ctx = xyz();
        let (a, b, c) = (series(s, &ctx, 0, 4), series(s ^ 1, &ctx, 0, 4), series(s ^ 2, &ctx, 0, 4));
        prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
        prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
        prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert_eq!(&a + &b, &b + &a);
    }

    #[test]
    fn composition_is_associative(s in any::<u64>()) {
        let outer = VariableContext::new(&["x", "y"]).unwrap();
        let mid = VariableContext::new(&["u", "v"]).unwrap();
        let inner = VariableContext::new(&["p", "q"]).unwrap();
        let f = series(s, &outer, 0, 4);
        let g: Vec<Series> = (0..2).map(|i| series(s ^ (10 + i), &mid, 1, 3)).collect();
        let h: Vec<Series> = (0..2).map(|i| series(s ^ (20 + i), &inner, 1, 3)).collect();
        let gh: Vec<Series> = g.iter().map(|gi| gi.compose(&h).unwrap()).collect();
        let left = f.compose(&g).unwrap().compose(&h).unwrap();
        let right = f.compose(&gh).unwrap();
        let o = left.order().min(right.order());
        prop_assert_eq!(left.truncate(o), right.truncate(o));
    }

    #[test]
    fn conjugation_is_a_ring_involution(s in any::<u64>()) {
        let ctx = xyz();
        let (a, b) = (series(s, &ctx, 0, 4), series(s ^ 7, &ctx, 0, 4));
        prop_assert_eq!((&a + &b).conjugate(), &a.conjugate() + &b.conjugate());
        prop_assert_eq!((&a * &b).conjugate(), &a.conjugate() * &b.conjugate());
        prop_assert_eq!(a.conjugate().conjugate(), a);
    }

    #[test]
    fn leibniz_rule(s in any::<u64>(), v in 0usize..3) {
        let ctx = xyz();
        let (f, g) = (series(s, &ctx, 0, 4), series(s ^ 3, &ctx, 0, 4));
        let lhs = (&f * &g).derive(v);
        let rhs = &(&f * &g.derive(v)) + &(&g * &f.derive(v));
        prop_assert_eq!(lhs.order(), N - 1);
        prop_assert_eq!(lhs, rhs.truncate(N - 1));
    }

    #[test]
    fn implicit_solution_solves_the_system(s in any::<u64>()) {
        let ctx = VariableContext::new(&["x1", "x2", "u1", "u2"]).unwrap();
        let sys: Vec<Series> = (0..2)
            .map(|i| &Series::var(&ctx, N, 2 + i) + &series(s ^ i as u64, &ctx, 2, 4))
            .collect();
        let sys = SeriesMap::new(&ctx, sys).unwrap();
        let sol = formal_ift(&sys, &[2, 3]).unwrap();
        let sctx = sol.context().clone();
        let mut args: Vec<Series> = (0..2).map(|i| Series::var(&sctx, N, i)).collect();
        args.extend(sol.components().iter().cloned());
        for c in sys.compose(&args).unwrap().components() {
            prop_assert!(c.is_zero());
        }
    }

    #[test]
    fn generic_rank_is_invariant_under_linear_changes(s in any::<u64>()) {
        let ctx = xyz();
        let f = SeriesMap::new(&ctx, (0..3).map(|i| series(s ^ (40 + i), &ctx, 1, 3)).collect()).unwrap();
        let mut rng = generate::rng(s);
        // unit triangular change of variables
        let change: Vec<Series> = (0..3)
            .map(|i| {
                let mut c = Series::var(&ctx, EXACT, i);
                for k in 0..i {
                    c = &c + &Series::var(&ctx, EXACT, k).scale(&generate::small_gq(&mut rng, 2));
                }
                c
            })
            .collect();
        let g = f.compose(&change).unwrap();
        prop_assert_eq!(f.generic_rank(s).rank, g.generic_rank(s).rank);
    }

    #[test]
    fn division_multiplies_back(s in any::<u64>(), mu in 0u32..3) {
        let ctx = VariableContext::new(&["x", "y"]).unwrap();
        let unit = &Series::one(&ctx, N) + &series(s, &ctx, 1, 4);
        let den = &Series::monomial(&ctx, EXACT, crreflect_core::Multidegree::from_slice(&[mu, 0]), Gq::one()) * &unit;
        let q = series(s ^ 5, &ctx, 0, 4);
        let num = &den * &q;
        let (quot, got) = Series::divide_with_valuation(&num, &den).unwrap();
        prop_assert_eq!(got, mu);
        let o = N - mu as i32;
        prop_assert_eq!((&den * &quot).truncate(o), num.truncate(o));
    }

    #[test]
    fn parse_print_round_trip(s in any::<u64>()) {
        let ctx = xyz();
        let a = series(s, &ctx, 0, 4);
        let again = parse_expression(&print_series(&a), &ctx, N).unwrap();
        prop_assert_eq!(again, a);
    }
}

fn manifold(seed: u64, m: usize, d: usize) -> GraphedManifold {
    random_manifold(m, d, 3, N, seed).unwrap()
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn graphs_are_real_and_fields_tangent(s in any::<u64>()) {
        let m = manifold(s, 2, 1);
        prop_assert!(m.verify_reality().ok);
        let (l, lb) = m.cr_fields();
        let wminus = &m.var(m.w(0)) - &m.theta_bar()[0];
        let ximinus = &m.var(m.xi(0)) - &m.theta()[0];
        for k in 0..2 {
            let a = m.restrict(&l[k].apply(&wminus), Restriction::SubstituteW).unwrap();
            prop_assert!(a.is_zero());
            let b = m.restrict(&lb[k].apply(&ximinus), Restriction::SubstituteXi).unwrap();
            prop_assert!(b.is_zero());
        }
    }

    #[test]
    fn cr_fields_commute(s in any::<u64>()) {
        let m = manifold(s, 2, 1);
        let (l, lb) = m.cr_fields();
        let f = series(s ^ 9, m.context(), 0, 4);
        for fields in [&l, &lb] {
            let ab = fields[0].apply(&fields[1].apply(&f));
            let ba = fields[1].apply(&fields[0].apply(&f));
            let o = ab.order().min(ba.order());
            prop_assert_eq!(ab.truncate(o), ba.truncate(o));
        }
    }

    #[test]
    fn zeta_derivative_along_graph_is_lbar(s in any::<u64>()) {
        let m = manifold(s, 1, 1);
        let ctx = m.context().clone();
        let tau: Vec<usize> = vec![m.zeta(0), m.xi(0)];
        let psi = random_series(&mut generate::rng(s ^ 4), &ctx, &tau, 0, 4, N, 0.5);
        let (_, lb) = m.cr_fields();
        let lhs = m.restrict(&psi, Restriction::SubstituteXi).unwrap().derive(m.zeta(0));
        let rhs = m.restrict(&lb[0].apply(&psi), Restriction::SubstituteXi).unwrap();
        let o = lhs.order().min(rhs.order());
        prop_assert_eq!(lhs.truncate(o), rhs.truncate(o));
    }

    #[test]
    fn chains_extend_lie_on_the_manifold_and_grow_in_rank(s in any::<u64>()) {
        let m = manifold(s, 1, 1);
        let mut last = 0;
        for k in 1..=3 {
            let c = chain(&m, k, ChainStart::Unbarred).unwrap();
            let p = &c.point;
            let res = &p.xi[0] - &m.theta_at(&p.zeta, &p.z, &p.w).unwrap()[0];
            prop_assert!(res.is_zero());
            let r = chain_rank(&c, s).rank;
            prop_assert!(r >= last && r <= 3);
            last = r;
            let next = chain(&m, k + 1, ChainStart::Unbarred).unwrap();
            let ctx = next.context().clone();
            let mut times: Vec<Series> = (0..k).map(|i| Series::var(&ctx, N, i)).collect();
            times.push(Series::zero(&ctx, N));
            let cut = chain_at(&m, k + 1, ChainStart::Unbarred, &times).unwrap();
            let prefix = chain_at(&m, k, ChainStart::Unbarred, &times[..k]).unwrap();
            prop_assert_eq!(cut.point.components(), prefix.point.components());
        }
    }

    #[test]
    fn conjugate_chain_is_the_barred_chain(s in any::<u64>()) {
        let m = manifold(s, 1, 1);
        for k in 1..=3 {
            let a = chain(&m, k, ChainStart::Unbarred).unwrap().point.components();
            let b = chain(&m, k, ChainStart::Barred).unwrap().point.components();
            let n = m.n();
            for i in 0..2 * n {
                prop_assert_eq!(a[(i + n) % (2 * n)].conjugate(), b[i].clone());
            }
        }
    }

    #[test]
    fn reassembly_and_family_equivalence(s in any::<u64>()) {
        let m = manifold(s, 1, 1);
        let (h, t) = random_cr_map(&m, 3, s ^ 1).unwrap();
        let comps = reflection_components(&h, &t, N as u32).unwrap();
        prop_assert_eq!(comps.reassembly_residual(&h, &t).unwrap(), None);
        let bad = generate::perturbed(&h, &m, s).unwrap();
        for map in [&h, &bad] {
            let rep = reflection_identities(map, &m, &t, 2, &[1, 2, 3, 4]).unwrap();
            prop_assert_eq!(rep.family_vanishes(1), rep.family_vanishes(2));
            prop_assert_eq!(rep.family_vanishes(3), rep.family_vanishes(4));
            prop_assert_eq!(rep.first_failure(1), rep.first_failure(3));
            prop_assert_eq!(rep.first_failure(2), rep.first_failure(4));
        }
    }

    #[test]
    fn expansion_inverse(s in any::<u64>(), arity in 1usize..3) {
        let ctx = xyz();
        let point: Vec<Series> = (0..arity).map(|i| series(s ^ (60 + i as u64), &ctx, 1, 3)).collect();
        let table: ExpansionTable = multidegrees_up_to(arity, 3)
            .into_iter()
            .enumerate()
            .map(|(i, b)| (b, series(s ^ (100 + i as u64), &ctx, 0, 4)))
            .collect();
        let q = forward_expansion(&table, &point, 3).unwrap();
        prop_assert_eq!(invert_expansion(&q, &point, 3).unwrap(), table);
    }

    #[test]
    fn cramer_solutions_are_unique(s in any::<u64>()) {
        let ctx = VariableContext::new(&["x", "y"]).unwrap();
        let r: Vec<Vec<Series>> = (0..2)
            .map(|i| (0..2).map(|j| {
                let base = if i == j { Series::one(&ctx, N) } else { Series::zero(&ctx, N) };
                &base + &series(s ^ (i * 2 + j) as u64, &ctx, 1, 4)
            }).collect())
            .collect();
        let b: Vec<Series> = (0..2).map(|i| series(s ^ (9 + i), &ctx, 0, 4)).collect();
        let sol = formal_cramer_solve(&r, &b).unwrap();
        prop_assert_eq!(sol.lost_order, 0);
        for (row, bi) in r.iter().zip(&b) {
            let back = &(&row[0] * &sol.solution[0]) + &(&row[1] * &sol.solution[1]);
            prop_assert_eq!(back.truncate(N), bi.truncate(N));
        }
    }

    #[test]
    fn conj_swap_is_an_involution(s in any::<u64>()) {
        let m = manifold(s, 1, 1);
        let f = series(s, m.context(), 0, 4);
        prop_assert_eq!(conj_swap(&conj_swap(&f)), f);
    }
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn degeneracy_fields_generate_cr_self_maps(s in any::<u64>()) {
        let ctx = VariableContext::new(&VarNames::source().ambient(2, 1)).unwrap();
        let tb = parse_expression("xi1 + i*z1*zeta1", &ctx, N).unwrap();
        let m = GraphedManifold::from_theta_bar(2, 1, VarNames::source(), vec![tb]).unwrap().mark_exact();
        let f = holomorphic_degeneracy_field(&m, 2).unwrap().unwrap();
        prop_assert!(!determinant_criterion(&m, 3, s).verdict.holds());
        let varpi = seeded_t_series(&m, N as u32, s);
        let h = degenerate_selfmap_generator(&m, &f.coefficients, &varpi).unwrap();
        prop_assert!(verify_formal_cr_map(&h, &m, &m).unwrap().pass());
    }

    #[test]
    fn determinant_criterion_matches_field_search(s in any::<u64>()) {
        let m = manifold(s, 1, 1);
        let field = holomorphic_degeneracy_field(&m, 2).unwrap();
        let det = determinant_criterion(&m, 3, s);
        if det.verdict.holds() {
            prop_assert!(field.is_none());
        }
    }
}
