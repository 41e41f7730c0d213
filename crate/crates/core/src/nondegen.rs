//! Nondegeneracy classifications of target manifolds (nd1–nd5), of the
//! CR-horizontal part of maps (cr1–cr5) and of maps through the jets of
//! their reflection identities (h1–h4). Holomorphic degeneracy fields and
//! the degenerate self-maps they generate.
//!
//! Every condition is decided on the stored truncations. A verdict is
//! `Holds`, `Fails`, or `Inconclusive` with the bound that was exhausted.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::manifold::GraphedManifold;
use crate::reflection::{transversality_kernel, verify_formal_cr_map, FormalCRMap, ReflectionError};
use crate::segre::{chain, segre_jet_map, ChainStart, JetMapData, SegreError};
use crate::series::{
    generic_rank_matrix, multidegrees_of_degree, multidegrees_up_to, Gq, Matrix, Multidegree, RankReport, Rational,
    SeriesError, TruncatedSeries, VariableContext, EXACT,
};

type Series = TruncatedSeries;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NondegenError {
    #[error("map is not a formal CR map: residual at degree {0}")]
    NotCrMap(u32),
    #[error("field is not tangent: residual at degree {0}")]
    NotTangent(u32),
    #[error("field has {found} coefficients, expected {expected}")]
    FieldDimension { expected: usize, found: usize },
    #[error("flow parameter must vanish at the origin")]
    NonzeroFlowTime,
    #[error("generated map fails the CR identity at degree {0}")]
    GeneratedMapInvalid(u32),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Segre(#[from] SegreError),
    #[error(transparent)]
    Reflection(#[from] ReflectionError),
}

pub type Result<T> = std::result::Result<T, NondegenError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    /// Undecided after exhausting `bound` (jet order or degree).
    Inconclusive {
        bound: u32,
    },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }

    pub fn fails(&self) -> bool {
        matches!(self, Verdict::Fails)
    }

    pub fn is_decided(&self) -> bool {
        !matches!(self, Verdict::Inconclusive { .. })
    }
}

/// A verdict with the jet order `k0` and ideal degree that witnessed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub verdict: Verdict,
    pub k0: Option<u32>,
    pub degree: Option<u32>,
}

impl Decision {
    fn holds_at(k0: Option<u32>, degree: Option<u32>) -> Self {
        Decision { verdict: Verdict::Holds, k0, degree }
    }

    fn fails() -> Self {
        Decision { verdict: Verdict::Fails, k0: None, degree: None }
    }

    fn inconclusive(bound: u32) -> Self {
        Decision { verdict: Verdict::Inconclusive { bound }, k0: None, degree: None }
    }
}

/// Outcome of the truncated ideal test for finiteness of a map germ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiniteMapTest {
    /// The ideal contains every monomial of this degree.
    Finite { degree: u32 },
    /// No degree up to `bound` was absorbed.
    Unknown { bound: u32 },
}

/// Tests whether the ideal generated by `gens` (series vanishing at 0, in
/// the variables `vars`, other variables set to 0) contains all monomials
/// of some degree `D ≤ dmax`. Works modulo degree `D + 1`, which suffices
/// by Nakayama's lemma.
pub fn finite_map_test(gens: &[Series], vars: &[usize], dmax: u32) -> Result<FiniteMapTest> {
    let Some(first) = gens.first() else {
        return Ok(FiniteMapTest::Unknown { bound: dmax });
    };
    let ctx = first.context().clone();
    let names: Vec<&str> = vars.iter().map(|&v| ctx.name(v)).collect();
    let vctx = VariableContext::new(&names)?;
    let mut map = vec![None; ctx.arity()];
    for (i, &v) in vars.iter().enumerate() {
        map[v] = Some(i);
    }
    let others: Vec<usize> = (0..ctx.arity()).filter(|v| !vars.contains(v)).collect();
    let gens: Vec<Series> = gens
        .iter()
        .map(|g| {
            let g = g.set_zero(&others);
            let g = &g - &Series::constant(&ctx, EXACT, g.constant_term());
            g.reindex(&vctx, &map)
        })
        .collect::<std::result::Result<_, _>>()?;
    let known = gens.iter().map(|g| g.order()).min().unwrap_or(EXACT);
    let k = vars.len();
    for d in 1..=dmax {
        if d as i64 > known as i64 {
            return Ok(FiniteMapTest::Unknown { bound: d - 1 });
        }
        let cols = multidegrees_up_to(k, d);
        let col_of: BTreeMap<&Multidegree, usize> = cols.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let mut rows: Vec<Vec<Gq>> = Vec::new();
        for g in &gens {
            for a in multidegrees_up_to(k, d - 1) {
                let mut row = vec![Gq::zero(); cols.len()];
                let mut any = false;
                for (md, c) in g.terms() {
                    let e = md.add(&a);
                    if e.degree() <= d {
                        row[col_of[&e]] = c.clone();
                        any = true;
                    }
                }
                if any {
                    rows.push(row);
                }
            }
        }
        let base = Matrix::from_rows(rows.clone()).rank();
        for mono in multidegrees_of_degree(k, d) {
            let mut u = vec![Gq::zero(); cols.len()];
            u[col_of[&mono]] = Gq::one();
            rows.push(u);
        }
        if Matrix::from_rows(rows).rank() == base {
            return Ok(FiniteMapTest::Finite { degree: d });
        }
    }
    Ok(FiniteMapTest::Unknown { bound: dmax })
}

/// Holomorphic vector field `Σ a_i(t) ∂/∂t_i` tangent to a manifold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegeneracyField {
    /// `a_i(t)` over the ambient context, polynomial in `t`.
    pub coefficients: Vec<Series>,
    /// Dimension of the solution space of the ansatz.
    pub kernel_dim: usize,
    /// Tangency holds as a polynomial identity for an exact manifold.
    pub exact_tangent: bool,
}

impl DegeneracyField {
    pub fn nonzero_at_origin(&self) -> bool {
        self.coefficients.iter().any(|a| !a.constant_term().is_zero())
    }
}

/// `Σ_i a_i ∂Θ_j/∂t_i` for each `j`.
pub fn tangency_residual(m: &GraphedManifold, coefficients: &[Series]) -> Result<Vec<Series>> {
    if coefficients.len() != m.n() {
        return Err(NondegenError::FieldDimension { expected: m.n(), found: coefficients.len() });
    }
    Ok(m.theta()
        .iter()
        .map(|th| {
            let mut acc = Series::zero(m.context(), EXACT);
            for (i, a) in coefficients.iter().enumerate() {
                acc = &acc + &a.mul_tracked(&th.derive(i));
            }
            acc
        })
        .collect())
}

/// Searches for a nonzero field with polynomial coefficients of degree
/// `≤ min(dmax, N − 2)` tangent to `m` through the known order. Prefers a
/// solution not vanishing at the origin.
pub fn holomorphic_degeneracy_field(m: &GraphedManifold, dmax: u32) -> Result<Option<DegeneracyField>> {
    let n = m.n();
    let ctx = m.context();
    let deg = dmax.min((m.order() - 2).max(0) as u32);
    let monos = multidegrees_up_to(n, deg);
    let spread = |a: &Multidegree| {
        let mut e = a.to_vec();
        e.resize(2 * n, 0);
        Multidegree::from_slice(&e)
    };
    let derivs: Vec<Vec<Series>> = m.theta().iter().map(|th| (0..n).map(|i| th.derive(i)).collect()).collect();
    let top = derivs.iter().flatten().map(|s| s.order()).min().unwrap_or(EXACT);
    let mut images: Vec<Vec<Series>> = Vec::new();
    for i in 0..n {
        for a in &monos {
            let mono = Series::monomial(ctx, EXACT, spread(a), Gq::one());
            images.push(derivs.iter().map(|dj| (&mono * &dj[i]).truncate(top)).collect());
        }
    }
    let mut rows_keys: Vec<(usize, Multidegree)> = images
        .iter()
        .flat_map(|col| col.iter().enumerate().flat_map(|(j, s)| s.terms().map(move |(md, _)| (j, md.clone()))))
        .collect();
    rows_keys.sort();
    rows_keys.dedup();
    let kernel = if rows_keys.is_empty() {
        (0..images.len())
            .map(|c| (0..images.len()).map(|r| if r == c { Gq::one() } else { Gq::zero() }).collect())
            .collect()
    } else {
        let rows = rows_keys.iter().map(|(j, md)| images.iter().map(|col| col[*j].coeff(md)).collect()).collect();
        Matrix::from_rows(rows).kernel()
    };
    if kernel.is_empty() {
        return Ok(None);
    }
    let field_of = |v: &[Gq]| -> Vec<Series> {
        (0..n)
            .map(|i| {
                let terms = monos.iter().enumerate().map(|(p, a)| (spread(a), v[i * monos.len() + p].clone()));
                Series::from_terms(ctx, EXACT, terms)
            })
            .collect()
    };
    let fields: Vec<Vec<Series>> = kernel.iter().map(|v| field_of(v)).collect();
    let chosen = fields.iter().find(|f| f.iter().any(|a| !a.constant_term().is_zero())).unwrap_or(&fields[0]).clone();
    let exact_tangent = m.is_exact() && {
        let exact: Vec<Series> = m.theta().iter().map(|s| s.assume_exact_to(EXACT)).collect();
        exact.iter().all(|th| {
            let mut acc = Series::zero(ctx, EXACT);
            for (i, a) in chosen.iter().enumerate() {
                acc = &acc + &(a * &th.derive(i));
            }
            acc.is_zero()
        })
    };
    Ok(Some(DegeneracyField { coefficients: chosen, kernel_dim: kernel.len(), exact_tangent }))
}

/// Highest total `ζ`-degree among the stored terms of `Θ`.
fn zeta_degree(m: &GraphedManifold) -> u32 {
    let zv: Vec<usize> = (0..m.m()).map(|k| m.zeta(k)).collect();
    m.theta()
        .iter()
        .flat_map(|s| s.terms().map(|(md, _)| zv.iter().map(|&v| md.get(v)).sum::<u32>()))
        .max()
        .unwrap_or(0)
}

fn rank_at_origin(entries: &[Vec<Series>]) -> usize {
    if entries.is_empty() {
        return 0;
    }
    Matrix::from_rows(entries.iter().map(|r| r.iter().map(|e| e.constant_term()).collect()).collect()).rank()
}

/// `∂_{t'}` of `Θ'_{j,γ'}(t')` for `|γ'| ≤ k`: rows `(j, γ')`, columns `t'`.
fn component_jacobian(m: &GraphedManifold, k: u32) -> Vec<Vec<Series>> {
    let mut rows = Vec::new();
    for j in 0..m.d() {
        for g in multidegrees_up_to(m.m(), k) {
            let c = m.theta_component(j, &g);
            rows.push((0..m.n()).map(|i| c.derive(i)).collect());
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifoldClassification {
    pub nd1: Decision,
    pub nd2: Decision,
    pub nd3: Decision,
    pub nd4: Decision,
    pub nd5: Decision,
    pub degeneracy_field: Option<DegeneracyField>,
    /// Whether the field search and the jet-map rank agree on `nd5`, when
    /// both are decided.
    pub nd5_cross_check: Option<bool>,
}

impl ManifoldClassification {
    pub fn flags(&self) -> [Decision; 5] {
        [self.nd1, self.nd2, self.nd3, self.nd4, self.nd5]
    }
}

/// Decided flags never contradict `nd1 ⇒ nd2 ⇒ nd3 ⇒ nd4 ⇒ nd5`.
pub fn nd_implications_hold(c: &ManifoldClassification) -> bool {
    let f = c.flags();
    (0..5).all(|i| (i + 1..5).all(|j| !(f[i].verdict.holds() && f[j].verdict.fails())))
}

/// Classifies `m` by the jet maps `φ_k`, `k ≤ kmax`, and a tangent-field
/// search of degree `≤ dmax`.
pub fn classify_manifold(m: &GraphedManifold, kmax: u32, dmax: u32, seed: u64) -> Result<ManifoldClassification> {
    let full = m.m() + m.n();
    let kmax = kmax.min(m.order().max(0) as u32);
    let field = holomorphic_degeneracy_field(m, dmax)?;
    let certified_field = field.as_ref().filter(|f| f.exact_tangent);
    let degenerate = certified_field.is_some();
    let stabilized = m.is_exact() && kmax >= zeta_degree(m);
    let src_vars = JetMapData::source_vars(m);
    let t_vars: Vec<usize> = (0..m.n()).collect();
    let zeta_vars: Vec<usize> = (0..m.m()).map(|k| m.zeta(k)).collect();

    // restriction to ζ = 0 and w = Θ̄(z, 0, 0)
    let ctx = m.context();
    let zeros = vec![Series::zero(ctx, EXACT); m.n()];
    let zs: Vec<Series> = (0..m.m()).map(|k| m.var(m.z(k))).collect();
    let ws = m.theta_bar_at(&zs, &zeros[..m.m()], &zeros[..m.d()])?;
    let mut segre_args = zs.clone();
    segre_args.extend(ws);
    segre_args.extend(zeros.iter().cloned());

    let mut nd1 = Decision::inconclusive(1);
    let mut nd2 = None;
    let mut nd3 = None;
    let mut nd4 = None;
    let mut nd5 = None;
    let mut rank_certified = true;
    let mut finite_bound = 0;
    for k in 1..=kmax {
        let jm = segre_jet_map(m, k)?;
        let jac = jm.components.jacobian(&src_vars);
        let r0 = rank_at_origin(&jac);
        if k == 1 {
            nd1 = if r0 == full { Decision::holds_at(Some(1), None) } else { Decision::fails() };
        }
        if nd2.is_none() && r0 == full {
            nd2 = Some(Decision::holds_at(Some(k), None));
        }
        if nd3.is_none() {
            let gens = &jm.components.components()[m.m()..];
            let at_zero: Vec<Series> = gens.iter().map(|g| g.set_zero(&zeta_vars)).collect();
            match finite_map_test(&at_zero, &t_vars, dmax)? {
                FiniteMapTest::Finite { degree } => nd3 = Some(Decision::holds_at(Some(k), Some(degree))),
                FiniteMapTest::Unknown { bound } => finite_bound = finite_bound.max(bound),
            }
        }
        if nd4.is_none() {
            let restricted: Vec<Vec<Series>> = jm.components.components()[m.m()..]
                .iter()
                .map(|g| {
                    let r = g.compose(&segre_args)?;
                    Ok(zs.iter().enumerate().map(|(k, _)| r.derive(m.z(k))).collect())
                })
                .collect::<Result<_>>()?;
            let rep = generic_rank_matrix(&restricted, seed);
            rank_certified &= rep.certified;
            if rep.certified && rep.rank == m.m() {
                nd4 = Some(Decision::holds_at(Some(k), None));
            }
        }
        if nd5.is_none() {
            let rep = generic_rank_matrix(&jac, seed);
            rank_certified &= rep.certified;
            if rep.certified && rep.rank == full {
                nd5 = Some(Decision::holds_at(Some(k), None));
            }
        }
    }
    let undecided = |bound: u32, fails: bool| if fails { Decision::fails() } else { Decision::inconclusive(bound) };
    let nd2 = nd2.unwrap_or_else(|| undecided(kmax, degenerate || stabilized));
    let nd3 = nd3.unwrap_or_else(|| undecided(finite_bound.max(kmax), degenerate));
    let nd4 = nd4.unwrap_or_else(|| undecided(kmax, degenerate || (stabilized && rank_certified)));
    let nd5 = nd5.unwrap_or_else(|| undecided(kmax, degenerate || (stabilized && rank_certified)));
    let nd5_cross_check = nd5.verdict.is_decided().then(|| nd5.verdict.holds() == field.is_none());
    Ok(ManifoldClassification { nd1, nd2, nd3, nd4, nd5, degeneracy_field: field, nd5_cross_check })
}

/// Generic rank of `∂_{t'} Θ'_{j,γ'}(t')` over `|γ'| ≤ k`: the determinant
/// criterion holds when some maximal minor is not identically zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeterminantCriterion {
    pub verdict: Verdict,
    pub rank: RankReport,
}

pub fn determinant_criterion(m: &GraphedManifold, k: u32, seed: u64) -> DeterminantCriterion {
    let k = k.min(m.order().max(0) as u32);
    let rank = generic_rank_matrix(&component_jacobian(m, k), seed);
    let verdict = if rank.certified && rank.rank == m.n() {
        Verdict::Holds
    } else if rank.certified && m.is_exact() && k >= zeta_degree(m) {
        Verdict::Fails
    } else {
        Verdict::Inconclusive { bound: k }
    };
    DeterminantCriterion { verdict, rank }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrClassification {
    pub m: usize,
    pub m_target: usize,
    pub cr1: Decision,
    pub cr2: Decision,
    pub cr3: Decision,
    pub cr4: Decision,
    pub cr5: Decision,
    /// Polynomial relations found among the conjugate horizontal components.
    pub relations: Vec<Series>,
}

impl CrClassification {
    pub fn flags(&self) -> [Decision; 5] {
        [self.cr1, self.cr2, self.cr3, self.cr4, self.cr5]
    }
}

/// Decided flags respect `cr1 ⇒ cr2`, `cr4 ⇒ cr5`, and when `m' = m` also
/// `cr2 ⇒ cr3 ⇒ cr4`.
pub fn cr_implications_hold(c: &CrClassification) -> bool {
    let f = c.flags();
    let mut pairs = vec![(0, 1), (3, 4)];
    if c.m == c.m_target {
        pairs.extend([(1, 2), (2, 3), (0, 2), (0, 3), (1, 3), (0, 4), (1, 4), (2, 4)]);
    }
    pairs.iter().all(|&(a, b)| !(f[a].verdict.holds() && f[b].verdict.fails()))
}

/// `z ↦ f(z, Θ̄(z, 0, 0))` over the chain multitime context.
pub fn horizontal_part(h: &FormalCRMap, source: &GraphedManifold) -> Result<Vec<Series>> {
    let g1 = chain(source, 1, ChainStart::Unbarred)?;
    let pt = g1.point.components();
    Ok(h.f().iter().map(|c| c.compose(&pt)).collect::<std::result::Result<_, _>>()?)
}

fn require_cr(h: &FormalCRMap, source: &GraphedManifold, target: &GraphedManifold) -> Result<()> {
    let rep = verify_formal_cr_map(h, source, target)?;
    match rep.entries.iter().filter_map(|e| e.valuation).min() {
        Some(v) => Err(NondegenError::NotCrMap(v)),
        None => Ok(()),
    }
}

/// Classifies the CR-horizontal part of `h`. Finiteness and relations are
/// searched up to degree `dmax`.
pub fn classify_map_cr(
    h: &FormalCRMap,
    source: &GraphedManifold,
    target: &GraphedManifold,
    dmax: u32,
    seed: u64,
) -> Result<CrClassification> {
    require_cr(h, source, target)?;
    let (m, mp) = (source.m(), target.m());
    let hor = horizontal_part(h, source)?;
    let vars: Vec<usize> = (0..m).collect();
    let jac: Vec<Vec<Series>> = hor.iter().map(|c| vars.iter().map(|&v| c.derive(v)).collect()).collect();
    let r0 = rank_at_origin(&jac);
    let decided = |b: bool| if b { Decision::holds_at(None, None) } else { Decision::fails() };
    let cr1 = decided(m == mp && r0 == m);
    let cr2 = decided(r0 == mp);
    let rank = generic_rank_matrix(&jac, seed);
    let cr4 = if !rank.certified {
        Decision::inconclusive(hor.iter().map(|s| s.order()).min().unwrap_or(0).max(0) as u32)
    } else {
        decided(rank.rank == mp)
    };
    let cr3 = match finite_map_test(&hor, &vars, dmax)? {
        FiniteMapTest::Finite { degree } => Decision::holds_at(None, Some(degree)),
        FiniteMapTest::Unknown { .. } if rank.certified && rank.rank < m => Decision::fails(),
        FiniteMapTest::Unknown { bound } => Decision::inconclusive(bound),
    };
    let known = hor.iter().map(|s| s.order()).min().unwrap_or(EXACT).max(0) as u32;
    let nwork = known.min(source.order().max(0) as u32);
    let relations = transversality_kernel(h, source, dmax, nwork)?;
    let exact_relation = relations.iter().filter(|r| relation_is_exact(r, &hor)).filter_map(|r| r.degree()).min();
    let cr5 = if let Some(degree) = exact_relation {
        Decision { verdict: Verdict::Fails, k0: None, degree: Some(degree) }
    } else if relations.is_empty() && rank.certified && rank.rank == mp {
        Decision::holds_at(None, None)
    } else {
        Decision::inconclusive(dmax)
    };
    Ok(CrClassification { m, m_target: mp, cr1, cr2, cr3, cr4, cr5, relations })
}

/// `F(conj H) ≡ 0` as a polynomial identity on the stored truncation.
fn relation_is_exact(rel: &Series, hor: &[Series]) -> bool {
    let conj: Vec<Series> = hor.iter().map(|s| s.conjugate().assume_exact_to(EXACT)).collect();
    match rel.compose(&conj) {
        Ok(v) => v.is_zero(),
        Err(_) => false,
    }
}

/// `Ψ'_{j',β}(t, τ, t')` for `|β| ≤ kmax` over the source ambient context
/// extended by the target `t'` names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsiTable {
    pub context: VariableContext,
    /// First `t'` variable.
    pub offset: usize,
    pub entries: BTreeMap<(usize, Multidegree), Series>,
}

impl PsiTable {
    /// Rows `(j', β)` with `|β| ≤ k` and their `t'`-gradients.
    pub fn jacobian(&self, k: u32, n_target: usize) -> Vec<Vec<Series>> {
        self.entries
            .iter()
            .filter(|((_, b), _)| b.degree() <= k)
            .map(|(_, s)| (0..n_target).map(|i| s.derive(self.offset + i)).collect())
            .collect()
    }
}

fn derivative_table(
    fields: &[crate::manifold::VectorField],
    f: &Series,
    betas: &[Multidegree],
) -> BTreeMap<Multidegree, Series> {
    let mut out: BTreeMap<Multidegree, Series> = BTreeMap::new();
    for b in betas {
        let v = match (0..b.arity()).rev().find(|&k| b.get(k) > 0) {
            None => f.clone(),
            Some(k) => fields[k].apply(&out[&b.with(k, b.get(k) - 1)]),
        };
        out.insert(b.clone(), v);
    }
    out
}

/// `L̲^β ḡ_{j'} − Σ_{γ'} L̲^β[f̄^{γ'}] Θ'_{j',γ'}(t')`.
pub fn psi_table(h: &FormalCRMap, source: &GraphedManifold, target: &GraphedManifold, kmax: u32) -> Result<PsiTable> {
    let sctx = source.context();
    let np = target.n();
    let tnames: Vec<String> = target.context().names()[..np].to_vec();
    let ctx = sctx.extended(&tnames)?;
    let offset = sctx.arity();
    let order = h.order().min(source.order()).min(target.order());
    let gmax = order.max(0) as u32;
    let (_, lb) = source.cr_fields();
    let betas = multidegrees_up_to(source.m(), kmax);
    let mut tmap = vec![None; target.context().arity()];
    for (i, slot) in tmap.iter_mut().enumerate().take(np) {
        *slot = Some(offset + i);
    }
    let mut pows: BTreeMap<Multidegree, Series> = BTreeMap::new();
    let mut acc: BTreeMap<(usize, Multidegree), Series> = BTreeMap::new();
    for j in 0..target.d() {
        for (b, s) in derivative_table(&lb, &h.g_bar()[j], &betas) {
            acc.insert((j, b), s.embed(&ctx)?);
        }
    }
    for g in multidegrees_up_to(target.m(), gmax) {
        let p = match (0..g.arity()).rev().find(|&k| g.get(k) > 0) {
            None => Series::one(sctx, EXACT),
            Some(k) => &pows[&g.with(k, g.get(k) - 1)] * &h.f_bar()[k],
        };
        pows.insert(g.clone(), p.clone());
        let dp = derivative_table(&lb, &p, &betas);
        for j in 0..target.d() {
            let c = target.theta_component(j, &g).reindex(&ctx, &tmap)?;
            for b in &betas {
                let term = dp[b].embed(&ctx)?.mul_tracked(&c);
                let e = acc.get_mut(&(j, b.clone())).expect("entry");
                *e = &*e - &term;
            }
        }
    }
    let entries = acc
        .into_iter()
        .map(|((j, b), s)| {
            let o = s.order().min(order - b.degree() as i32);
            ((j, b), s.truncate(o))
        })
        .collect();
    Ok(PsiTable { context: ctx, offset, entries })
}

/// Valuation of `Ψ'(t, Θ-restricted τ, h(t))`; `None` when it vanishes.
pub fn psi_specialization_residual(table: &PsiTable, h: &FormalCRMap, source: &GraphedManifold) -> Result<Option<u32>> {
    let sctx = source.context();
    let mut args: Vec<Series> = (0..sctx.arity()).map(|v| Series::var(sctx, EXACT, v)).collect();
    args.extend(h.h().iter().cloned());
    let mut worst: Option<u32> = None;
    for s in table.entries.values() {
        let r = source.restrict(&s.compose(&args)?, crate::manifold::Restriction::SubstituteXi)?;
        if let Some(v) = r.valuation() {
            worst = Some(worst.map_or(v, |w| w.min(v)));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HClassification {
    pub h1: Decision,
    pub h2: Decision,
    pub h3: Decision,
    pub h4: Decision,
    /// Smallest `k` with `ψ'_k` of rank `n'` at the origin.
    pub ell0: Option<u32>,
    pub psi: PsiTable,
}

impl HClassification {
    pub fn flags(&self) -> [Decision; 4] {
        [self.h1, self.h2, self.h3, self.h4]
    }
}

pub fn h_implications_hold(c: &HClassification) -> bool {
    let f = c.flags();
    (0..4).all(|i| (i + 1..4).all(|j| !(f[i].verdict.holds() && f[j].verdict.fails())))
}

/// Decides h1–h4 from `ψ'_k`, `k ≤ kmax`.
pub fn psi_and_h_conditions(
    h: &FormalCRMap,
    source: &GraphedManifold,
    target: &GraphedManifold,
    kmax: u32,
    dmax: u32,
    seed: u64,
) -> Result<HClassification> {
    let np = target.n();
    let kmax = kmax.min(h.order().min(source.order()).min(target.order()).max(0) as u32);
    let psi = psi_table(h, source, target, kmax)?;
    let field = holomorphic_degeneracy_field(target, dmax)?;
    let degenerate = field.as_ref().is_some_and(|f| f.exact_tangent && f.nonzero_at_origin());
    let undecided = |bound: u32| if degenerate { Decision::fails() } else { Decision::inconclusive(bound) };

    let mut ell0 = None;
    let mut h3 = None;
    let mut finite_bound = 0;
    let src_vars: Vec<usize> = (0..psi.offset).collect();
    let tp_vars: Vec<usize> = (psi.offset..psi.offset + np).collect();
    for k in 1..=kmax {
        if ell0.is_none() && rank_at_origin(&psi.jacobian(k, np)) == np {
            ell0 = Some(k);
        }
        if h3.is_none() {
            let gens: Vec<Series> =
                psi.entries.iter().filter(|((_, b), _)| b.degree() <= k).map(|(_, s)| s.set_zero(&src_vars)).collect();
            match finite_map_test(&gens, &tp_vars, dmax)? {
                FiniteMapTest::Finite { degree } => h3 = Some(Decision::holds_at(Some(k), Some(degree))),
                FiniteMapTest::Unknown { bound } => finite_bound = finite_bound.max(bound),
            }
        }
    }
    let h1 = match ell0 {
        Some(1) => Decision::holds_at(Some(1), None),
        _ if kmax >= 1 && degenerate => Decision::fails(),
        _ => Decision::inconclusive(1),
    };
    let h2 = match ell0 {
        Some(k) => Decision::holds_at(Some(k), None),
        None => undecided(kmax),
    };
    let h3 = h3.unwrap_or_else(|| undecided(finite_bound.max(kmax)));

    // along (z, Θ̄(z, 0, 0), 0, 0, h(z, Θ̄(z, 0, 0)))
    let g1 = chain(source, 1, ChainStart::Unbarred)?;
    let mut args = g1.point.components();
    args.extend(h.h().iter().map(|c| c.compose(&g1.point.components())).collect::<std::result::Result<Vec<_>, _>>()?);
    let along: Vec<Vec<Series>> = psi
        .jacobian(kmax, np)
        .iter()
        .map(|row| row.iter().map(|e| e.compose(&args)).collect::<std::result::Result<_, _>>())
        .collect::<std::result::Result<_, _>>()?;
    let rep = generic_rank_matrix(&along, seed);
    let h4 = if rep.certified && rep.rank == np { Decision::holds_at(Some(kmax), None) } else { undecided(kmax) };
    Ok(HClassification { h1, h2, h3, h4, ell0, psi })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapClassification {
    pub cr: CrClassification,
    pub h: HClassification,
}

pub fn classify_map(
    h: &FormalCRMap,
    source: &GraphedManifold,
    target: &GraphedManifold,
    kmax: u32,
    dmax: u32,
    seed: u64,
) -> Result<MapClassification> {
    Ok(MapClassification {
        cr: classify_map_cr(h, source, target, dmax, seed)?,
        h: psi_and_h_conditions(h, source, target, kmax, dmax, seed)?,
    })
}

/// Seeded random series in the `t` variables of `m`, vanishing at the
/// origin, with small Gaussian-integer coefficients up to `degree`.
pub fn seeded_t_series(m: &GraphedManifold, degree: u32, seed: u64) -> Series {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m.n();
    let terms: Vec<(Multidegree, Gq)> = multidegrees_up_to(n, degree)
        .into_iter()
        .filter(|a| !a.is_zero())
        .map(|a| {
            let mut e = a.to_vec();
            e.resize(2 * n, 0);
            let c = Gq::new(Rational::from_int(rng.gen_range(-3..=3)), Rational::from_int(rng.gen_range(-3..=3)));
            (Multidegree::from_slice(&e), c)
        })
        .collect();
    Series::from_terms(m.context(), m.order(), terms)
}

fn integrate_first(s: &Series) -> Series {
    let terms: Vec<(Multidegree, Gq)> = s
        .terms()
        .map(|(md, c)| {
            let e = md.get(0);
            (md.with(0, e + 1), c.scale(&Rational::new(1, e as i64 + 1)))
        })
        .collect();
    Series::from_terms(s.context(), s.order(), terms)
}

/// `t' ↦ exp(ϖ(t') X)(t')`: the time-`ϖ(t')` flow of a tangent field,
/// a formal CR self-map of `m`.
pub fn degenerate_selfmap_generator(m: &GraphedManifold, field: &[Series], varpi: &Series) -> Result<FormalCRMap> {
    let n = m.n();
    if field.len() != n {
        return Err(NondegenError::FieldDimension { expected: n, found: field.len() });
    }
    if !varpi.constant_term().is_zero() {
        return Err(NondegenError::NonzeroFlowTime);
    }
    let order = m.order();
    for r in tangency_residual(m, field)? {
        if let Some(v) = r.truncate(order - 1).valuation() {
            return Err(NondegenError::NotTangent(v));
        }
    }
    let ctx = m.context();
    let mut names = vec!["s".to_string()];
    names.extend(ctx.names()[..n].iter().cloned());
    let fctx = VariableContext::new(&names)?;
    let mut to_flow = vec![None; ctx.arity()];
    for (i, slot) in to_flow.iter_mut().enumerate().take(n) {
        *slot = Some(i + 1);
    }
    let a: Vec<Series> =
        field.iter().map(|c| Ok(c.truncate(order).reindex(&fctx, &to_flow)?)).collect::<Result<_>>()?;
    let start: Vec<Series> = (0..n).map(|i| Series::var(&fctx, order, i + 1)).collect();
    let mut phi = start.clone();
    for _ in 0..=order.max(0) + 1 {
        let mut args = vec![Series::var(&fctx, order, 0)];
        args.extend(phi.iter().cloned());
        let next: Vec<Series> =
            a.iter().zip(&start).map(|(ai, t)| Ok(t + &integrate_first(&ai.compose(&args)?))).collect::<Result<_>>()?;
        if next == phi {
            break;
        }
        phi = next;
    }
    let mut args = vec![varpi.clone()];
    args.extend((0..n).map(|i| Series::var(ctx, order, i)));
    let h: Vec<Series> = phi.iter().map(|c| c.compose(&args)).collect::<std::result::Result<_, _>>()?;
    let map = FormalCRMap::new(m, m.m(), m.d(), h)?;
    if let Some(v) = verify_formal_cr_map(&map, m, m)?.entries.iter().filter_map(|e| e.valuation).min() {
        return Err(NondegenError::GeneratedMapInvalid(v));
    }
    Ok(map)
}
