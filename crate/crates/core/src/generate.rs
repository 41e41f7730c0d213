//! Seeded random inputs: series, real defining systems, manifolds and CR
//! maps between them. Used by the test suites and the command line tool.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::manifold::{GraphedManifold, ManifoldError, RealDefiningSystem, VarNames};
use crate::reflection::{transformed_manifold, FormalCRMap, ReflectionError};
use crate::series::{multidegrees_of_degree, Gq, Multidegree, Rational, SeriesMap, TruncatedSeries, VariableContext};

type Series = TruncatedSeries;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian integer with parts in `-bound..=bound`.
pub fn small_gq(rng: &mut ChaCha8Rng, bound: i64) -> Gq {
    Gq::new(Rational::from_int(rng.gen_range(-bound..=bound)), Rational::from_int(rng.gen_range(-bound..=bound)))
}

/// Random series in the variables `vars` of `ctx` with terms of degree
/// `lo..=hi`, each present with probability `density`.
pub fn random_series(
    rng: &mut ChaCha8Rng,
    ctx: &VariableContext,
    vars: &[usize],
    lo: u32,
    hi: u32,
    order: i32,
    density: f64,
) -> Series {
    let mut terms = Vec::new();
    for deg in lo..=hi {
        for a in multidegrees_of_degree(vars.len(), deg) {
            if !rng.gen_bool(density) {
                continue;
            }
            let mut e = vec![0u32; ctx.arity()];
            for (k, &v) in vars.iter().enumerate() {
                e[v] = a.get(k);
            }
            terms.push((Multidegree::from_slice(&e), small_gq(rng, 3)));
        }
    }
    Series::from_terms(ctx, order, terms)
}

/// `ρ_j = Im w_j + (random terms of degree 2..=degree)`, symmetrized, over
/// `[t1..tn, tb1..tbn]` with `w_j = t_{m+j}`.
pub fn random_real_system(
    n: usize,
    d: usize,
    degree: u32,
    order: i32,
    seed: u64,
) -> Result<RealDefiningSystem, ManifoldError> {
    let mut rng = rng(seed);
    let mut names: Vec<String> = (1..=n).map(|i| format!("t{i}")).collect();
    names.extend((1..=n).map(|i| format!("tb{i}")));
    let ctx = VariableContext::new(&names)?;
    let all: Vec<usize> = (0..2 * n).collect();
    let m = n - d;
    let half_i = Gq::new(Rational::zero(), Rational::new(-1, 2));
    let rho = (0..d)
        .map(|j| {
            let w = m + j;
            let lin = &Series::var(&ctx, order, w) - &Series::var(&ctx, order, w + n);
            &lin.scale(&half_i) + &random_series(&mut rng, &ctx, &all, 2, degree, order, 0.35)
        })
        .collect();
    RealDefiningSystem::symmetrized(&ctx, rho)
}

pub fn random_manifold(
    m: usize,
    d: usize,
    degree: u32,
    order: i32,
    seed: u64,
) -> Result<GraphedManifold, ManifoldError> {
    let sys = random_real_system(m + d, d, degree, order, seed)?;
    GraphedManifold::complexify_and_graph(&sys, None, VarNames::source())
}

/// Random invertible map of `t` over the ambient context of `m`: a random
/// invertible linear part plus terms of degree `2..=degree`.
pub fn random_biholomorphism(m: &GraphedManifold, degree: u32, seed: u64) -> SeriesMap {
    let mut rng = rng(seed);
    let n = m.n();
    let ctx = m.context();
    let t: Vec<usize> = (0..n).collect();
    let order = m.order();
    let comps = (0..n)
        .map(|i| {
            // unit lower-triangular linear part keeps the map invertible
            let mut lin = Series::var(ctx, order, i).scale(&Gq::from_int(rng.gen_range(1..=3)));
            for k in 0..i {
                lin = &lin + &Series::var(ctx, order, k).scale(&small_gq(&mut rng, 2));
            }
            &lin + &random_series(&mut rng, ctx, &t, 2, degree, order, 0.3)
        })
        .collect();
    SeriesMap::new(ctx, comps).expect("shared context")
}

/// A CR map from `source` onto its image under a random biholomorphism:
/// returns the map and the graphed image.
pub fn random_cr_map(
    source: &GraphedManifold,
    degree: u32,
    seed: u64,
) -> Result<(FormalCRMap, GraphedManifold), ReflectionError> {
    let target = source.renamed(VarNames::target())?;
    let phi = random_biholomorphism(&target, degree, seed);
    let image = transformed_manifold(&target, &phi, VarNames::target().suffixed("p"))?;
    let map: Vec<Option<usize>> = (0..source.context().arity()).map(Some).collect();
    let h = phi.components().iter().map(|c| c.reindex(source.context(), &map)).collect::<Result<Vec<_>, _>>()?;
    Ok((FormalCRMap::into_target(source, &image, h)?, image))
}

/// `h` with a random degree-2 term added to its last component. The result
/// is not CR and its residuals first fail at degree 2.
pub fn perturbed(h: &FormalCRMap, source: &GraphedManifold, seed: u64) -> Result<FormalCRMap, ReflectionError> {
    let mut rng = rng(seed);
    let mut comps = h.h().to_vec();
    let last = comps.len() - 1;
    let t: Vec<usize> = (0..source.n()).collect();
    let mut bump = random_series(&mut rng, source.context(), &t, 2, 2, source.order(), 0.5);
    if bump.is_zero() {
        bump = Series::var(source.context(), source.order(), 0).pow(2);
    }
    comps[last] = &comps[last] + &bump;
    FormalCRMap::new(source, h.m_target(), h.d_target(), comps)
}
