//! Formal CR maps, the reflection map and its components, the four families
//! of reflection identities, and the solving procedures built on them.
//!
//! A map `h = (f, g)` is stored over the ambient context of its source,
//! depending on `t` only; `h̄` is its conjugate in `τ`. Target objects are
//! composed in through explicit argument lists, so source and target may
//! use any variable names as long as they differ.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::manifold::{
    conj_swap, DerivationWord, GraphedManifold, ManifoldError, Restriction, Side, VarNames, VectorField,
};
use crate::segre::{chain, chain_at, ChainStart, SegreChain, SegreError};
use crate::series::{
    binomial, formal_ift, multidegrees_up_to, Gq, Matrix, Multidegree, Rational, SeriesError, SeriesMap,
    TruncatedSeries, VariableContext, EXACT,
};

type Series = TruncatedSeries;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReflectionError {
    #[error("expected {expected} components, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("component {0} does not vanish at the origin")]
    NonzeroConstant(usize),
    #[error("component {0} depends on the wrong half of the variables")]
    WrongHalf(usize),
    #[error("component box {gmax} exceeds the order {order}")]
    BoxTooLarge { gmax: u32, order: i32 },
    #[error("determinant vanishes at the origin")]
    SingularDeterminant,
    #[error("linear part is not invertible")]
    NotInvertible,
    #[error("transformed target cannot be graphed in the chosen split")]
    SplitFailure,
    #[error("rank hypothesis fails: rank {rank} at the origin, need {needed}")]
    RankHypothesis { rank: usize, needed: usize },
    #[error("determinant vanishes through order {0}")]
    DeterminantVanishes(i32),
    #[error("expansion table lacks entry {0:?}")]
    MissingEntry(Multidegree),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Segre(#[from] SegreError),
}

pub type Result<T> = std::result::Result<T, ReflectionError>;

/// Arguments for a series over a `2n`-variable ambient context: `t` and `τ`
/// halves, zero where absent.
fn slot_args(n: usize, ctx: &VariableContext, t: Option<&[Series]>, tau: Option<&[Series]>) -> Vec<Series> {
    let zero = Series::zero(ctx, EXACT);
    let mut args = Vec::with_capacity(2 * n);
    match t {
        Some(t) => args.extend(t.iter().cloned()),
        None => args.extend(std::iter::repeat(zero.clone()).take(n)),
    }
    match tau {
        Some(t) => args.extend(t.iter().cloned()),
        None => args.extend(std::iter::repeat(zero).take(n)),
    }
    args
}

/// `∂^β` in the variables `vars` of a larger context.
fn spread(beta: &Multidegree, vars: &[usize], arity: usize) -> Multidegree {
    let mut e = vec![0u32; arity];
    for (k, &v) in vars.iter().enumerate() {
        e[v] = beta.get(k);
    }
    Multidegree::from_slice(&e)
}

fn inv_factorial(beta: &Multidegree) -> Rational {
    beta.factorial().recip().expect("nonzero factorial")
}

/// Iterated applications of commuting fields, keyed by the exponent of
/// each field. `betas` must be closed under lowering an exponent.
fn derivative_table(fields: &[VectorField], f: &Series, betas: &[Multidegree]) -> BTreeMap<Multidegree, Series> {
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

fn diff_valuation(a: &Series, b: &Series) -> (Option<u32>, i32) {
    let d = a - b;
    (d.valuation(), d.order())
}

/// Formal holomorphic map between the ambient spaces of two manifolds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormalCRMap {
    m_target: usize,
    d_target: usize,
    ctx: VariableContext,
    h: Vec<Series>,
    h_bar: Vec<Series>,
}

impl FormalCRMap {
    /// `h` is given over the source ambient context and must depend on
    /// `t` alone and vanish at 0.
    pub fn new(source: &GraphedManifold, m_target: usize, d_target: usize, h: Vec<Series>) -> Result<Self> {
        let n_target = m_target + d_target;
        if h.len() != n_target {
            return Err(ReflectionError::Dimension { expected: n_target, found: h.len() });
        }
        let ctx = source.context().clone();
        let n = source.n();
        for (i, c) in h.iter().enumerate() {
            if c.context() != &ctx {
                return Err(SeriesError::ContextMismatch {
                    left: format!("{ctx:?}"),
                    right: format!("{:?}", c.context()),
                }
                .into());
            }
            if !c.constant_term().is_zero() {
                return Err(ReflectionError::NonzeroConstant(i));
            }
            if (n..2 * n).any(|v| c.depends_on(v)) {
                return Err(ReflectionError::WrongHalf(i));
            }
        }
        let h_bar = h.iter().map(conj_swap).collect();
        Ok(FormalCRMap { m_target, d_target, ctx, h, h_bar })
    }

    pub fn into_target(source: &GraphedManifold, target: &GraphedManifold, h: Vec<Series>) -> Result<Self> {
        Self::new(source, target.m(), target.d(), h)
    }

    pub fn identity(m: &GraphedManifold) -> Self {
        let h = (0..m.n()).map(|i| m.var(i)).collect();
        Self::new(m, m.m(), m.d(), h).expect("identity is a valid map")
    }

    pub fn n(&self) -> usize {
        self.ctx.arity() / 2
    }

    pub fn n_target(&self) -> usize {
        self.m_target + self.d_target
    }

    pub fn m_target(&self) -> usize {
        self.m_target
    }

    pub fn d_target(&self) -> usize {
        self.d_target
    }

    pub fn context(&self) -> &VariableContext {
        &self.ctx
    }

    pub fn order(&self) -> i32 {
        self.h.iter().map(|s| s.order()).min().unwrap_or(EXACT)
    }

    pub fn h(&self) -> &[Series] {
        &self.h
    }

    pub fn h_bar(&self) -> &[Series] {
        &self.h_bar
    }

    pub fn f(&self) -> &[Series] {
        &self.h[..self.m_target]
    }

    pub fn g(&self) -> &[Series] {
        &self.h[self.m_target..]
    }

    pub fn f_bar(&self) -> &[Series] {
        &self.h_bar[..self.m_target]
    }

    pub fn g_bar(&self) -> &[Series] {
        &self.h_bar[self.m_target..]
    }

    /// `φ'∘h` for `φ'` a map of `t'` alone over the target ambient context.
    pub fn followed_by(&self, phi: &SeriesMap, target_n: usize, m_target: usize) -> Result<Self> {
        let args = slot_args(target_n, &self.ctx, Some(&self.h), None);
        let h = phi.components().iter().map(|c| c.compose(&args)).collect::<std::result::Result<Vec<_>, _>>()?;
        let d_target = h.len() - m_target;
        let h_bar = h.iter().map(conj_swap).collect();
        Ok(FormalCRMap { m_target, d_target, ctx: self.ctx.clone(), h, h_bar })
    }

    /// The `t`-part of the map evaluated with `τ` arbitrary; `SeriesMap` view.
    pub fn as_map(&self) -> SeriesMap {
        SeriesMap::new(&self.ctx, self.h.clone()).expect("shared context")
    }
}

/// One residual of a reflection identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualEntry {
    pub family: u8,
    pub j: usize,
    pub beta: Multidegree,
    pub residual: Series,
    pub valuation: Option<u32>,
    pub order: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
}

impl ResidualReport {
    fn push(&mut self, family: u8, j: usize, beta: Multidegree, residual: Series) {
        let valuation = residual.valuation();
        let order = residual.order();
        self.entries.push(ResidualEntry { family, j, beta, residual, valuation, order });
    }

    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.valuation.is_none())
    }

    pub fn family_vanishes(&self, family: u8) -> bool {
        self.entries.iter().filter(|e| e.family == family).all(|e| e.valuation.is_none())
    }

    /// Lowest degree at which some residual of the family is nonzero.
    pub fn first_failure(&self, family: u8) -> Option<u32> {
        self.entries.iter().filter(|e| e.family == family).filter_map(|e| e.valuation).min()
    }

    /// Smallest order through which the residuals are known.
    pub fn min_order(&self) -> i32 {
        self.entries.iter().map(|e| e.order).min().unwrap_or(EXACT)
    }
}

/// `g(z, Θ̄(z, τ)) − Θ̄'(f(z, Θ̄(z, τ)), h̄(τ))` (family 2) and its conjugate
/// `ḡ(ζ, Θ(ζ, t)) − Θ'(f̄(ζ, Θ(ζ, t)), h(t))` (family 1).
pub fn verify_formal_cr_map(
    h: &FormalCRMap,
    source: &GraphedManifold,
    target: &GraphedManifold,
) -> Result<ResidualReport> {
    check_dims(h, source, target)?;
    let np = target.n();
    let zero_beta = Multidegree::zero(source.m());
    let mut rep = ResidualReport::default();
    let zero_xi = std::iter::repeat(Series::zero(&h.ctx, EXACT)).take(target.d());
    let tau1: Vec<Series> = h.f_bar().iter().cloned().chain(zero_xi).collect();
    let args1 = slot_args(np, &h.ctx, Some(&h.h), Some(&tau1));
    let mut args2: Vec<Series> = h.f().to_vec();
    args2.extend(std::iter::repeat(Series::zero(&h.ctx, EXACT)).take(target.d()));
    args2.extend(h.h_bar.iter().cloned());
    for j in 0..target.d() {
        let r1 = &h.g_bar()[j] - &target.theta()[j].compose(&args1)?;
        rep.push(1, j, zero_beta.clone(), source.restrict(&r1, Restriction::SubstituteXi)?);
    }
    for j in 0..target.d() {
        let r2 = &h.g()[j] - &target.theta_bar()[j].compose(&args2)?;
        rep.push(2, j, zero_beta.clone(), source.restrict(&r2, Restriction::SubstituteW)?);
    }
    Ok(rep)
}

fn check_dims(h: &FormalCRMap, source: &GraphedManifold, target: &GraphedManifold) -> Result<()> {
    if h.ctx != *source.context() {
        return Err(SeriesError::ContextMismatch {
            left: format!("{:?}", h.ctx),
            right: format!("{:?}", source.context()),
        }
        .into());
    }
    if h.m_target != target.m() || h.d_target != target.d() {
        return Err(ReflectionError::Dimension { expected: target.n(), found: h.n_target() });
    }
    Ok(())
}

/// The table `γ' ↦ (Θ'_{j,γ'}(h(t)))_j` for `|γ'| ≤ gmax`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReflectionComponents {
    pub gmax: u32,
    pub table: BTreeMap<Multidegree, Vec<Series>>,
}

impl ReflectionComponents {
    pub fn get(&self, gamma: &Multidegree) -> Option<&[Series]> {
        self.table.get(gamma).map(|v| v.as_slice())
    }

    pub fn context(&self) -> &VariableContext {
        self.table.values().next().and_then(|v| v.first()).expect("nonempty table").context()
    }

    /// Equality of every entry through the smaller of the two orders.
    pub fn agrees_with(&self, other: &ReflectionComponents) -> bool {
        self.table.len() == other.table.len()
            && self.table.iter().all(|(g, v)| match other.table.get(g) {
                None => false,
                Some(w) => v.iter().zip(w).all(|(a, b)| {
                    let o = a.order().min(b.order());
                    a.truncate(o) == b.truncate(o)
                }),
            })
    }

    /// Valuation of `Σ ζ'^γ' T_γ' − Θ'(ζ', h(t))` inside the box
    /// `|γ'| ≤ gmax`, jointly in `(ζ', t)`.
    pub fn reassembly_residual(&self, h: &FormalCRMap, target: &GraphedManifold) -> Result<Option<u32>> {
        let src = h.context();
        let zeta_names: Vec<String> = (1..=target.m()).map(|k| format!("{}{k}", target.names().zeta)).collect();
        let joint = src.extended(&zeta_names)?;
        let zvars: Vec<usize> = (src.arity()..joint.arity()).collect();
        let order = h.order().min(target.order());
        let hj: Vec<Series> = h.h().iter().map(|c| c.embed(&joint)).collect::<std::result::Result<_, _>>()?;
        let mut args = hj;
        args.extend(zvars.iter().map(|&v| Series::var(&joint, order, v)));
        args.extend(std::iter::repeat(Series::zero(&joint, EXACT)).take(target.d()));
        let mut worst: Option<u32> = None;
        for j in 0..target.d() {
            let full = target.theta()[j].compose(&args)?;
            let boxed = Series::from_terms(
                &joint,
                full.order(),
                full.terms()
                    .filter(|(md, _)| zvars.iter().map(|&v| md.get(v)).sum::<u32>() <= self.gmax)
                    .map(|(md, c)| (md.clone(), c.clone())),
            );
            let mut sum = Series::zero(&joint, EXACT);
            for (g, comps) in &self.table {
                let mono = Series::monomial(&joint, EXACT, spread(g, &zvars, joint.arity()), Gq::one());
                sum = &sum + &mono.mul_tracked(&comps[j].embed(&joint)?);
            }
            if let Some(v) = (&sum - &boxed).valuation() {
                worst = Some(worst.map_or(v, |w| w.min(v)));
            }
        }
        Ok(worst)
    }
}

/// `Θ'_{j,γ'}(h(t))` for all `|γ'| ≤ gmax`.
pub fn reflection_components(h: &FormalCRMap, target: &GraphedManifold, gmax: u32) -> Result<ReflectionComponents> {
    let order = h.order().min(target.order());
    if gmax as i64 > order as i64 {
        return Err(ReflectionError::BoxTooLarge { gmax, order });
    }
    if h.m_target != target.m() || h.d_target != target.d() {
        return Err(ReflectionError::Dimension { expected: target.n(), found: h.n_target() });
    }
    let args = slot_args(target.n(), h.context(), Some(h.h()), None);
    let mut table = BTreeMap::new();
    for g in multidegrees_up_to(target.m(), gmax) {
        let comps = (0..target.d())
            .map(|j| target.theta_component(j, &g).compose(&args))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        table.insert(g, comps);
    }
    Ok(ReflectionComponents { gmax, table })
}

/// Residuals of the four families of reflection identities for `|β| ≤ beta_max`:
///
/// 1. `L̲^β ḡ − Σ L̲^β[f̄^γ'] Θ'_γ'(h)` on `ξ = Θ(ζ, t)`
/// 2. `L̲^β [g − Σ f^γ' Θ̄'_γ'(h̄)]` on `w = Θ̄(z, τ)`
/// 3. `L^β g − Σ L^β[f^γ'] Θ̄'_γ'(h̄)` on `w = Θ̄(z, τ)`
/// 4. `L^β [ḡ − Σ f̄^γ' Θ'_γ'(h)]` on `ξ = Θ(ζ, t)`
///
/// Families 1 and 3, and 2 and 4, are conjugate to each other.
pub fn reflection_identities(
    h: &FormalCRMap,
    source: &GraphedManifold,
    target: &GraphedManifold,
    beta_max: u32,
    families: &[u8],
) -> Result<ResidualReport> {
    check_dims(h, source, target)?;
    let n_ord = h.order().min(source.order()).min(target.order());
    if beta_max as i64 > n_ord as i64 {
        return Err(SeriesError::OrderExhausted { needed: beta_max, order: n_ord }.into());
    }
    let gmax = n_ord.max(0) as u32;
    let comps = reflection_components(h, target, gmax)?;
    let mp = target.m();
    let dp = target.d();
    let gammas = multidegrees_up_to(mp, gmax);
    let betas = multidegrees_up_to(source.m(), beta_max);
    let ctx = h.context().clone();

    let comps_bar: BTreeMap<Multidegree, Vec<Series>> =
        comps.table.iter().map(|(g, v)| (g.clone(), v.iter().map(conj_swap).collect())).collect();
    let mut fpow: BTreeMap<Multidegree, Series> = BTreeMap::new();
    for g in &gammas {
        let v = match (0..mp).rev().find(|&k| g.get(k) > 0) {
            None => Series::one(&ctx, EXACT),
            Some(k) => &fpow[&g.with(k, g.get(k) - 1)] * &h.f()[k],
        };
        fpow.insert(g.clone(), v);
    }
    let fbarpow: BTreeMap<Multidegree, Series> = fpow.iter().map(|(g, s)| (g.clone(), conj_swap(s))).collect();
    let (l, lb) = source.cr_fields();
    let cap = |s: Series, beta: &Multidegree| {
        let o = s.order().min(n_ord - beta.degree() as i32);
        s.truncate(o)
    };

    let mut rep = ResidualReport::default();
    for &fam in families {
        match fam {
            1 | 3 => {
                let (fields, pows, cs, gs, side) = if fam == 1 {
                    (&lb, &fbarpow, &comps.table, h.g_bar(), Restriction::SubstituteXi)
                } else {
                    (&l, &fpow, &comps_bar, h.g(), Restriction::SubstituteW)
                };
                let dpow: BTreeMap<&Multidegree, BTreeMap<Multidegree, Series>> =
                    pows.iter().map(|(g, s)| (g, derivative_table(fields, s, &betas))).collect();
                for j in 0..dp {
                    let dg = derivative_table(fields, &gs[j], &betas);
                    for b in &betas {
                        let mut r = dg[b].clone();
                        for g in &gammas {
                            r = &r - &dpow[g][b].mul_tracked(&cs[g][j]);
                        }
                        let r = source.restrict(&r, side)?;
                        rep.push(fam, j, b.clone(), cap(r, b));
                    }
                }
            }
            2 | 4 => {
                let (fields, pows, cs, gs, side) = if fam == 2 {
                    (&lb, &fpow, &comps_bar, h.g(), Restriction::SubstituteW)
                } else {
                    (&l, &fbarpow, &comps.table, h.g_bar(), Restriction::SubstituteXi)
                };
                for j in 0..dp {
                    let dc: BTreeMap<&Multidegree, BTreeMap<Multidegree, Series>> =
                        gammas.iter().map(|g| (g, derivative_table(fields, &cs[g][j], &betas))).collect();
                    for b in &betas {
                        let mut r = if b.is_zero() { gs[j].clone() } else { Series::zero(&ctx, EXACT) };
                        for g in &gammas {
                            r = &r - &pows[g].mul_tracked(&dc[g][b]);
                        }
                        let r = source.restrict(&r, side)?;
                        rep.push(fam, j, b.clone(), cap(r, b));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(rep)
}

/// Expansion table of one component: multi-index `β` ↦ series.
pub type ExpansionTable = BTreeMap<Multidegree, Series>;

fn shift_binomial(beta: &Multidegree, gamma: &Multidegree) -> Rational {
    let mut c = Rational::one();
    for k in 0..beta.arity() {
        c = &c * &binomial((beta.get(k) + gamma.get(k)) as u64, beta.get(k) as u64);
    }
    c
}

fn point_power(point: &[Series], gamma: &Multidegree, ctx: &VariableContext) -> Series {
    let mut p = Series::one(ctx, EXACT);
    for (k, x) in point.iter().enumerate() {
        for _ in 0..gamma.get(k) {
            p = p.mul_tracked(x);
        }
    }
    p
}

fn expansion(table: &ExpansionTable, point: &[Series], bmax: u32, sign: bool) -> Result<ExpansionTable> {
    let arity = point.len();
    let all = multidegrees_up_to(arity, bmax);
    for b in &all {
        if !table.contains_key(b) {
            return Err(ReflectionError::MissingEntry(b.clone()));
        }
    }
    let ctx = table.values().next().expect("nonempty table").context().clone();
    let mut out = ExpansionTable::new();
    for b in &all {
        let mut acc = Series::zero(&ctx, EXACT);
        for g in multidegrees_up_to(arity, bmax - b.degree()) {
            let mut c = shift_binomial(b, &g);
            if sign && g.degree() % 2 == 1 {
                c = -c;
            }
            let term = point_power(point, &g, &ctx).mul_tracked(&table[&b.add(&g)]);
            acc = &acc + &term.scale_rational(&c);
        }
        out.insert(b.clone(), acc);
    }
    Ok(out)
}

/// `q_β = Σ_γ C(β+γ, β) ζ'^γ θ_{β+γ}` over the box `|β+γ| ≤ bmax`: Taylor
/// coefficients at `ζ'` from those at 0.
pub fn forward_expansion(theta: &ExpansionTable, point: &[Series], bmax: u32) -> Result<ExpansionTable> {
    expansion(theta, point, bmax, false)
}

/// `θ_β = Σ_γ (−1)^{|γ|} C(β+γ, β) ζ'^γ q_{β+γ}`, the inverse of
/// [`forward_expansion`] on the same box.
pub fn invert_expansion(q: &ExpansionTable, point: &[Series], bmax: u32) -> Result<ExpansionTable> {
    expansion(q, point, bmax, true)
}

fn series_det(a: &[Vec<Series>]) -> Series {
    let k = a.len();
    match k {
        1 => a[0][0].clone(),
        2 => &(&a[0][0] * &a[1][1]) - &(&a[0][1] * &a[1][0]),
        _ => {
            let mut acc = Series::zero(a[0][0].context(), EXACT);
            for c in 0..k {
                let minor = minor_of(a, 0, c);
                let t = &a[0][c] * &series_det(&minor);
                acc = if c % 2 == 0 { &acc + &t } else { &acc - &t };
            }
            acc
        }
    }
}

fn minor_of(a: &[Vec<Series>], r: usize, c: usize) -> Vec<Vec<Series>> {
    a.iter()
        .enumerate()
        .filter(|(i, _)| *i != r)
        .map(|(_, row)| row.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, x)| x.clone()).collect())
        .collect()
}

/// `adj(A)` with `A·adj(A) = det(A)·I`.
fn series_adjugate(a: &[Vec<Series>]) -> Vec<Vec<Series>> {
    let k = a.len();
    let ctx = a[0][0].context().clone();
    if k == 1 {
        return vec![vec![Series::one(&ctx, EXACT)]];
    }
    (0..k)
        .map(|l| {
            (0..k)
                .map(|c| {
                    let m = series_det(&minor_of(a, c, l));
                    if (l + c) % 2 == 0 {
                        m
                    } else {
                        -m
                    }
                })
                .collect()
        })
        .collect()
}

/// Solves `∂_{x_k} Y_β = Σ_l ∂_{x_k} F̄_l · Y_{β+e_l}` upward from
/// `Y_0 = y0` by Cramer's rule and returns `(det A(0), Y_β/β!)`.
fn cramer_jets(
    fbar: &[Series],
    y0: &[Series],
    vars: &[usize],
    bmax: u32,
) -> Result<(Gq, BTreeMap<Multidegree, Vec<Series>>)> {
    let m = vars.len();
    if fbar.len() != m {
        return Err(ReflectionError::Dimension { expected: m, found: fbar.len() });
    }
    let a: Vec<Vec<Series>> = (0..m).map(|k| (0..m).map(|l| fbar[l].derive(vars[k])).collect()).collect();
    let det = series_det(&a);
    let det0 = det.constant_term();
    if det0.is_zero() {
        return Err(ReflectionError::SingularDeterminant);
    }
    let dinv = det.invert_unit()?;
    let adj = series_adjugate(&a);
    let ainv: Vec<Vec<Series>> = adj.iter().map(|row| row.iter().map(|x| x * &dinv).collect()).collect();
    let mut y: BTreeMap<Multidegree, Vec<Series>> = BTreeMap::new();
    for b in multidegrees_up_to(m, bmax) {
        let v = match (0..m).rev().find(|&k| b.get(k) > 0) {
            None => y0.to_vec(),
            Some(l) => {
                let prev = &y[&b.with(l, b.get(l) - 1)];
                prev.iter()
                    .map(|p| {
                        let mut acc = Series::zero(p.context(), EXACT);
                        for k in 0..m {
                            acc = &acc + &(&ainv[l][k] * &p.derive(vars[k]));
                        }
                        acc
                    })
                    .collect()
            }
        };
        y.insert(b, v);
    }
    let out = y
        .into_iter()
        .map(|(b, v)| {
            let s = inv_factorial(&b);
            let v = v.iter().map(|x| x.scale_rational(&s)).collect();
            (b, v)
        })
        .collect();
    Ok((det0, out))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CramerEntry {
    pub j: usize,
    pub beta: Multidegree,
    pub cramer: Series,
    pub direct: Series,
    pub order: i32,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CramerReport {
    /// `det(∂_{ζ_k} f̄_l(ζ, Θ(ζ, t)))` at the origin.
    pub det_at_origin: Gq,
    pub entries: Vec<CramerEntry>,
}

impl CramerReport {
    pub fn all_agree(&self) -> bool {
        self.entries.iter().all(|e| e.agrees)
    }
}

/// `(1/β!) ∂^β_{ζ'} Θ'_j(f̄(ζ, Θ(ζ, t)), h(t))` two ways: by Cramer solving
/// of the `ζ`-differentiated fundamental identity, and by differentiating
/// `Θ'` and composing.
pub fn q_jbeta_cramer(
    h: &FormalCRMap,
    source: &GraphedManifold,
    target: &GraphedManifold,
    beta_max: u32,
) -> Result<CramerReport> {
    check_dims(h, source, target)?;
    if target.m() != source.m() {
        return Err(ReflectionError::Dimension { expected: source.m(), found: target.m() });
    }
    let fbar: Vec<Series> = h
        .f_bar()
        .iter()
        .map(|s| source.restrict(s, Restriction::SubstituteXi))
        .collect::<std::result::Result<_, _>>()?;
    let y0: Vec<Series> = h
        .g_bar()
        .iter()
        .map(|s| source.restrict(s, Restriction::SubstituteXi))
        .collect::<std::result::Result<_, _>>()?;
    let zvars: Vec<usize> = (0..source.m()).map(|k| source.zeta(k)).collect();
    let (det0, jets) = cramer_jets(&fbar, &y0, &zvars, beta_max)?;

    let mut tau = fbar.clone();
    tau.extend(std::iter::repeat(Series::zero(h.context(), EXACT)).take(target.d()));
    let args = slot_args(target.n(), h.context(), Some(h.h()), Some(&tau));
    let tz: Vec<usize> = (0..target.m()).map(|k| target.zeta(k)).collect();
    let mut entries = Vec::new();
    for (b, ys) in &jets {
        let db = spread(b, &tz, target.context().arity());
        for (j, c) in ys.iter().enumerate() {
            let direct = target.theta()[j].derive_multi(&db).scale_rational(&inv_factorial(b)).compose(&args)?;
            let order = c.order().min(direct.order());
            let agrees = c.truncate(order) == direct.truncate(order);
            entries.push(CramerEntry { j, beta: b.clone(), cramer: c.clone(), direct, order, agrees });
        }
    }
    Ok(CramerReport { det_at_origin: det0, entries })
}

fn check_target_change(target: &GraphedManifold, phi: &SeriesMap) -> Result<()> {
    let np = target.n();
    if phi.len() != np {
        return Err(ReflectionError::Dimension { expected: np, found: phi.len() });
    }
    if phi.context() != target.context() {
        return Err(SeriesError::ContextMismatch {
            left: format!("{:?}", target.context()),
            right: format!("{:?}", phi.context()),
        }
        .into());
    }
    for (i, c) in phi.components().iter().enumerate() {
        if !c.constant_term().is_zero() {
            return Err(ReflectionError::NonzeroConstant(i));
        }
        if (np..2 * np).any(|v| c.depends_on(v)) {
            return Err(ReflectionError::WrongHalf(i));
        }
    }
    let lin = Matrix::from_rows(
        phi.components().iter().map(|c| (0..np).map(|v| c.derive(v).constant_term()).collect()).collect(),
    );
    if lin.rank() < np {
        return Err(ReflectionError::NotInvertible);
    }
    Ok(())
}

/// `φ'(M')` graphed over the same split, with ambient names `names`.
pub fn transformed_manifold(target: &GraphedManifold, phi: &SeriesMap, names: VarNames) -> Result<GraphedManifold> {
    check_target_change(target, phi)?;
    let (mp, dp, np) = (target.m(), target.d(), target.n());
    let amb = VariableContext::new(&names.ambient(mp, dp))?;
    let mut knames: Vec<String> = amb.names()[..np].to_vec();
    knames.extend(target.context().names()[..np].iter().cloned());
    let k = VariableContext::new(&knames)?;
    let order = phi.order();
    let map: Vec<Option<usize>> = (0..2 * np).map(|v| if v < np { Some(np + v) } else { None }).collect();
    let sys: Vec<Series> = phi
        .components()
        .iter()
        .enumerate()
        .map(|(i, c)| Ok(&Series::var(&k, order, i) - &c.reindex(&k, &map)?))
        .collect::<Result<_>>()?;
    let unknowns: Vec<usize> = (np..2 * np).collect();
    let psi = formal_ift(&SeriesMap::new(&k, sys)?, &unknowns).map_err(|e| match e {
        SeriesError::IftSingular => ReflectionError::NotInvertible,
        other => other.into(),
    })?;
    let psi: Vec<Series> = psi.components().iter().map(|c| c.embed(&amb)).collect::<std::result::Result<_, _>>()?;
    let psi_bar: Vec<Series> = psi.iter().map(conj_swap).collect();
    let mut args = psi.clone();
    args.extend(psi_bar.iter().cloned());
    let rho: Vec<Series> =
        (0..dp).map(|j| Ok(&psi[mp + j] - &target.theta_bar()[j].compose(&args)?)).collect::<Result<_>>()?;
    let w_vars: Vec<usize> = (mp..np).collect();
    let sol = formal_ift(&SeriesMap::new(&amb, rho)?, &w_vars).map_err(|e| match e {
        SeriesError::IftSingular | SeriesError::IftNonzeroConstant => ReflectionError::SplitFailure,
        other => other.into(),
    })?;
    let theta_bar: Vec<Series> =
        sol.components().iter().map(|c| c.embed(&amb)).collect::<std::result::Result<_, _>>()?;
    Ok(GraphedManifold::from_theta_bar(mp, dp, names, theta_bar)?)
}

/// Components for `φ'∘h` into `φ'(M')`, computed from the components for
/// `h` alone: reassemble `Θ'(ζ', h(t))`, push it through `φ̄'`, solve for
/// the `ζ''`-jets of `Θ''` at `φ̄'_z(ζ', ·)` by Cramer's rule, set `ζ' = 0`
/// and move the expansion point back to 0. Entry `γ` is known through
/// `N − |γ|`. Returns the transformed manifold too.
pub fn target_change_transport(
    components: &ReflectionComponents,
    target: &GraphedManifold,
    phi: &SeriesMap,
    names: VarNames,
) -> Result<(ReflectionComponents, GraphedManifold)> {
    let new_target = transformed_manifold(target, phi, names)?;
    let (mp, dp, np) = (target.m(), target.d(), target.n());
    let gmax = components.gmax;
    let src = components.context().clone();
    let zeta_names: Vec<String> = (1..=mp).map(|k| format!("{}{k}", target.names().zeta)).collect();
    let joint = src.extended(&zeta_names)?;
    let zvars: Vec<usize> = (src.arity()..joint.arity()).collect();
    let mut r: Vec<Series> = vec![Series::zero(&joint, EXACT); dp];
    for (g, comps) in &components.table {
        let mono = Series::monomial(&joint, EXACT, spread(g, &zvars, joint.arity()), Gq::one());
        for j in 0..dp {
            r[j] = &r[j] + &mono.mul_tracked(&comps[j].embed(&joint)?);
        }
    }
    let r: Vec<Series> = r.iter().map(|s| s.truncate(s.order().min(gmax as i32))).collect();
    let mut tau: Vec<Series> = zvars.iter().map(|&v| Series::var(&joint, EXACT, v)).collect();
    tau.extend(r);
    let args = slot_args(np, &joint, None, Some(&tau));
    let pushed: Vec<Series> =
        phi.components().iter().map(|c| conj_swap(c).compose(&args)).collect::<std::result::Result<_, _>>()?;
    let (_, jets) = cramer_jets(&pushed[..mp], &pushed[mp..], &zvars, gmax)?;

    let back: Vec<Option<usize>> = (0..joint.arity()).map(|v| if v < src.arity() { Some(v) } else { None }).collect();
    let at_zero = |s: &Series| s.set_zero(&zvars).reindex(&src, &back);
    let point: Vec<Series> = pushed[..mp].iter().map(at_zero).collect::<std::result::Result<_, _>>()?;
    let mut table: BTreeMap<Multidegree, Vec<Series>> =
        jets.keys().map(|g| (g.clone(), Vec::with_capacity(dp))).collect();
    for j in 0..dp {
        let q: ExpansionTable = jets.iter().map(|(g, v)| Ok((g.clone(), at_zero(&v[j])?))).collect::<Result<_>>()?;
        for (g, s) in invert_expansion(&q, &point, gmax)? {
            table.get_mut(&g).expect("same box").push(s);
        }
    }
    Ok((ReflectionComponents { gmax, table }, new_target))
}

/// Solution of `r·a = b` over truncated series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CramerSolution {
    pub solution: Vec<Series>,
    /// Valuation of `det r`: the solution is known through `N − lost_order`.
    pub lost_order: u32,
}

/// Solves the square system `r·a = b` through adjugate multiplication and
/// division by `det r`.
pub fn formal_cramer_solve(r: &[Vec<Series>], b: &[Series]) -> Result<CramerSolution> {
    let k = r.len();
    if b.len() != k || r.iter().any(|row| row.len() != k) {
        return Err(ReflectionError::Dimension { expected: k, found: b.len() });
    }
    let det = series_det(r);
    let order = r.iter().flatten().chain(b).map(|s| s.order()).min().unwrap_or(EXACT);
    let det = det.truncate(order);
    if det.is_zero() {
        return Err(ReflectionError::DeterminantVanishes(order));
    }
    let adj = series_adjugate(r);
    let mut solution = Vec::with_capacity(k);
    let mut lost = 0;
    for row in &adj {
        let mut num = Series::zero(&det.ctx, EXACT);
        for (a, bb) in row.iter().zip(b) {
            num = &num + &(a * bb);
        }
        let (q, mu) = Series::divide_with_valuation(&num, &det)?;
        lost = mu;
        solution.push(q);
    }
    Ok(CramerSolution { solution, lost_order: lost })
}

/// Which half of the ambient variables a function depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    T,
    Tau,
}

/// `F ∘ Γ_k` for `F` over the ambient context of the chain's manifold.
pub fn chain_pullback(f: &SeriesMap, chain: &SegreChain) -> Result<SeriesMap> {
    Ok(f.compose(&chain.point.components())?)
}

/// True when the last step of the chain leaves the given half fixed, so
/// that functions of that half pull back along `Γ_k` as along `Γ_{k−1}`.
pub fn parity_collapses(start: ChainStart, k: usize, half: Half) -> bool {
    let last_barred = ((k - 1) % 2 == 0) == (start == ChainStart::Barred);
    match half {
        Half::T => last_barred,
        Half::Tau => !last_barred,
    }
}

/// Compares `F∘Γ_k` and `F∘Γ_{k−1}` for `F` depending on `half` only;
/// returns whether they agree exactly.
pub fn check_parity_collapse(
    m: &GraphedManifold,
    f: &SeriesMap,
    half: Half,
    start: ChainStart,
    k: usize,
) -> Result<bool> {
    let n = m.n();
    let other = match half {
        Half::T => n..2 * n,
        Half::Tau => 0..n,
    };
    for (i, c) in f.components().iter().enumerate() {
        if other.clone().any(|v| c.depends_on(v)) {
            return Err(ReflectionError::WrongHalf(i));
        }
    }
    let gk = chain(m, k, start)?;
    let ctx = gk.context().clone();
    let prev_point = if k == 1 {
        crate::segre::Point::origin(m, &ctx, m.order())
    } else {
        let times: Vec<Series> = (0..(k - 1) * m.m()).map(|i| Series::var(&ctx, m.order(), i)).collect();
        chain_at(m, k - 1, start, &times)?.point
    };
    let a = chain_pullback(f, &gk)?;
    let b = f.compose(&prev_point.components())?;
    Ok(a.components().iter().zip(b.components()).all(|(x, y)| (x - y).is_zero()))
}

/// Horizontal part `f̄(ζ, Θ(ζ, 0))` of the conjugate map, over the source
/// ambient context.
pub fn conjugate_horizontal_part(h: &FormalCRMap, source: &GraphedManifold) -> Result<Vec<Series>> {
    let ctx = source.context();
    let order = source.order();
    let zeta: Vec<Series> = (0..source.m()).map(|k| Series::var(ctx, order, source.zeta(k))).collect();
    let zero = vec![Series::zero(ctx, EXACT); source.n()];
    let xi = source.theta_at(&zeta, &zero[..source.m()], &zero[..source.d()])?;
    let mut tau = zeta;
    tau.extend(xi);
    let args = slot_args(source.n(), ctx, None, Some(&tau));
    Ok(h.f_bar().iter().map(|c| c.compose(&args)).collect::<std::result::Result<_, _>>()?)
}

/// Basis of the polynomials `F(x_1..x_k)` of degree `1..=degree` with
/// `F(hor) ≡ 0` through degree `nwork`; `hor` are series over one context.
pub fn relation_kernel(hor: &[Series], degree: u32, nwork: u32) -> Result<Vec<Series>> {
    let k = hor.len();
    let names: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
    let xctx = VariableContext::new(&names)?;
    let Some(first) = hor.first() else {
        return Ok(Vec::new());
    };
    let ctx = first.context().clone();
    let known = hor.iter().map(|s| s.order()).min().unwrap_or(EXACT);
    if nwork as i64 > known as i64 {
        return Err(SeriesError::OrderExhausted { needed: nwork, order: known }.into());
    }
    let hor: Vec<Series> = hor.iter().map(|s| s.truncate(nwork as i32)).collect();
    let cols: Vec<Multidegree> = multidegrees_up_to(k, degree).into_iter().filter(|a| !a.is_zero()).collect();
    let mut images: Vec<Series> = Vec::with_capacity(cols.len());
    for a in &cols {
        let mut p = Series::one(&ctx, nwork as i32);
        for (i, x) in hor.iter().enumerate() {
            for _ in 0..a.get(i) {
                p = &p * x;
            }
        }
        images.push(p);
    }
    let rows: Vec<Multidegree> = {
        let mut all: Vec<Multidegree> = images.iter().flat_map(|s| s.terms().map(|(m, _)| m.clone())).collect();
        all.sort();
        all.dedup();
        all
    };
    if rows.is_empty() {
        // every monomial vanishes: the whole space is the kernel
        return Ok(cols.iter().map(|a| Series::monomial(&xctx, EXACT, a.clone(), Gq::one())).collect());
    }
    let mat = Matrix::from_rows(rows.iter().map(|md| images.iter().map(|s| s.coeff(md)).collect()).collect());
    Ok(mat.kernel().into_iter().map(|v| Series::from_terms(&xctx, EXACT, cols.iter().cloned().zip(v))).collect())
}

/// Relations among the conjugate horizontal components of `h`: nonempty
/// means `h` is not CR-transversal.
pub fn transversality_kernel(
    h: &FormalCRMap,
    source: &GraphedManifold,
    degree: u32,
    nwork: u32,
) -> Result<Vec<Series>> {
    relation_kernel(&conjugate_horizontal_part(h, source)?, degree, nwork)
}

/// Coefficients `a_{β,γ'}(z_1) = L̲^β[f̄^γ'](z_1, Θ̄(z_1, 0), 0, 0)` of the
/// generalized uniqueness system, over the context `s1_1..s1_m`.
pub fn generalized_coefficients(
    h: &FormalCRMap,
    source: &GraphedManifold,
    gmax: u32,
    beta_max: u32,
) -> Result<BTreeMap<(Multidegree, Multidegree), Series>> {
    let (_, lb) = source.cr_fields();
    let g1 = chain(source, 1, ChainStart::Unbarred)?;
    let pt = g1.point.components();
    let betas = multidegrees_up_to(source.m(), beta_max);
    let ctx = h.context().clone();
    let mut out = BTreeMap::new();
    let mut pows: BTreeMap<Multidegree, Series> = BTreeMap::new();
    for g in multidegrees_up_to(h.m_target(), gmax) {
        let p = match (0..g.arity()).rev().find(|&k| g.get(k) > 0) {
            None => Series::one(&ctx, EXACT),
            Some(k) => &pows[&g.with(k, g.get(k) - 1)] * &h.f_bar()[k],
        };
        pows.insert(g.clone(), p.clone());
        for (b, s) in derivative_table(&lb, &p, &betas) {
            out.insert((b, g.clone()), s.compose(&pt)?);
        }
    }
    Ok(out)
}

/// Kernel of `Σ_γ' a_{β,γ'}(z_1) F_γ'(z_1) ≡ 0` for all `|β| ≤ beta_max`,
/// with unknown polynomials `F_γ'` of degree `≤ degree` for `|γ'| ≤ gmax`.
/// Each kernel vector lists the `F_γ'` in graded `γ'` order.
pub fn generalized_kernel(
    h: &FormalCRMap,
    source: &GraphedManifold,
    degree: u32,
    gmax: u32,
    beta_max: u32,
    nwork: u32,
) -> Result<Vec<Vec<Series>>> {
    let coeffs = generalized_coefficients(h, source, gmax, beta_max)?;
    let gammas = multidegrees_up_to(h.m_target(), gmax);
    let betas = multidegrees_up_to(source.m(), beta_max);
    let m = source.m();
    let ctx = coeffs.values().next().expect("nonempty").context().clone();
    let monos = multidegrees_up_to(m, degree);
    let cols: Vec<(usize, &Multidegree)> = (0..gammas.len()).flat_map(|g| monos.iter().map(move |a| (g, a))).collect();
    let mut rows: Vec<Vec<Gq>> = Vec::new();
    for b in &betas {
        let known = gammas.iter().map(|g| coeffs[&(b.clone(), g.clone())].order()).min().unwrap_or(EXACT);
        let top = known.min(nwork as i32);
        if top < 0 {
            continue;
        }
        for kappa in multidegrees_up_to(m, top as u32) {
            let row = cols
                .iter()
                .map(|(g, a)| match kappa.checked_sub(a) {
                    Some(rest) => coeffs[&(b.clone(), gammas[*g].clone())].coeff(&rest),
                    None => Gq::zero(),
                })
                .collect();
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let kernel = Matrix::from_rows(rows).kernel();
    Ok(kernel
        .into_iter()
        .map(|v| {
            (0..gammas.len())
                .map(|g| {
                    Series::from_terms(
                        &ctx,
                        EXACT,
                        monos.iter().enumerate().map(|(i, a)| (a.clone(), v[g * monos.len() + i].clone())),
                    )
                })
                .collect()
        })
        .collect())
}

/// Jet variables `J_{i,α}` standing for `∂^α h̄_i` (α over the `n`
/// conjugate coordinates), appended to a base context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JetVariables {
    pub ctx: VariableContext,
    /// Position of the first jet variable.
    pub offset: usize,
    pub index: Vec<(usize, Multidegree)>,
    pub max_order: u32,
}

impl JetVariables {
    fn new(base: &VariableContext, components: usize, n: usize, max_order: u32, extra: &[String]) -> Result<Self> {
        let index: Vec<(usize, Multidegree)> = SeriesMap::jet_layout(n, components, max_order);
        let mut names: Vec<String> = index
            .iter()
            .map(|(i, a)| {
                let e: Vec<String> = a.exponents().map(|x| x.to_string()).collect();
                format!("jet{}_{}", i + 1, e.join("_"))
            })
            .collect();
        names.extend(extra.iter().cloned());
        Ok(JetVariables { ctx: base.extended(&names)?, offset: base.arity(), index, max_order })
    }

    pub fn var(&self, i: usize, alpha: &Multidegree) -> Option<usize> {
        self.index.iter().position(|(c, a)| *c == i && a == alpha).map(|p| self.offset + p)
    }
}

/// Result of solving the jet form of the reflection identities for `h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub ell0: u32,
    /// `(j', β)` of the rows of the solved system.
    pub rows: Vec<(usize, Multidegree)>,
    pub jets: JetVariables,
    /// `∂^α h̄_i(0)` for each jet variable; the variables are shifted by it.
    pub jet_base: Vec<Gq>,
    /// `Φ(t, ζ, J − J(0))`, one component per target coordinate.
    pub phi: SeriesMap,
}

/// `D_x = ∂_x + Σ ∂_x[J_{i,α}(ζ, Θ(ζ, t))] ∂_{J_{i,α}}` for `x` among the
/// source `(z, w, ζ)` coordinates, on a jet context.
fn total_derivative(source: &GraphedManifold, jets: &JetVariables, base: &[Gq], x: usize) -> Result<VectorField> {
    let ctx = &jets.ctx;
    let order = source.order();
    let (m, d, n) = (source.m(), source.d(), source.n());
    let mut terms = vec![(x, Series::one(ctx, EXACT))];
    let dtheta: Vec<Series> =
        (0..d).map(|l| source.theta()[l].derive(x).embed(ctx)).collect::<std::result::Result<_, _>>()?;
    let actual = |i: usize, a: &Multidegree| -> Option<Series> {
        let v = jets.var(i, a)?;
        let p = v - jets.offset;
        Some(&Series::var(ctx, order, v) + &Series::constant(ctx, EXACT, base[p].clone()))
    };
    for (p, (i, alpha)) in jets.index.iter().enumerate() {
        if alpha.degree() >= jets.max_order {
            continue;
        }
        let mut coef = Series::zero(ctx, EXACT);
        if x >= n && x < n + m {
            let k = x - n;
            coef = &coef + &actual(*i, &alpha.with(k, alpha.get(k) + 1)).expect("jet in range");
        }
        for l in 0..d {
            if dtheta[l].is_zero() {
                continue;
            }
            let up = actual(*i, &alpha.with(m + l, alpha.get(m + l) + 1)).expect("jet in range");
            coef = &coef + &(&dtheta[l] * &up);
        }
        if !coef.is_zero() {
            terms.push((jets.offset + p, coef));
        }
    }
    Ok(VectorField { terms })
}

fn jet_base(h: &FormalCRMap, jets: &JetVariables, n: usize) -> Vec<Gq> {
    let tau: Vec<usize> = (n..2 * n).collect();
    jets.index
        .iter()
        .map(|(i, a)| {
            let md = spread(a, &tau, 2 * n);
            h.h_bar()[*i].coeff(&md) * Gq::real(a.factorial())
        })
        .collect()
}

/// Actual shifted jets `∂^α h̄_i(ζ, Θ(ζ, t)) − ∂^α h̄_i(0)` over the source
/// context, in jet-variable order.
fn actual_jets(h: &FormalCRMap, source: &GraphedManifold, jets: &JetVariables, base: &[Gq]) -> Result<Vec<Series>> {
    let n = source.n();
    let tau: Vec<usize> = (n..2 * n).collect();
    jets.index
        .iter()
        .zip(base)
        .map(|((i, a), c)| {
            let der = h.h_bar()[*i].derive_multi(&spread(a, &tau, 2 * n));
            let r = source.restrict(&der, Restriction::SubstituteXi)?;
            Ok(&r - &Series::constant(r.context(), EXACT, c.clone()))
        })
        .collect()
}

/// Solves `L̲^β[ḡ − Θ'(f̄, t')] = 0`, written in jet variables of `h̄`, for
/// `t'` by the implicit function theorem, using `n'` rows with `|β| ≤ ell0`
/// whose `t'`-Jacobian is invertible at the origin.
pub fn resolve_finitely_nondeg(
    h: &FormalCRMap,
    source: &GraphedManifold,
    target: &GraphedManifold,
    ell0: u32,
) -> Result<Resolution> {
    check_dims(h, source, target)?;
    let (n, np, mp) = (source.n(), target.n(), target.m());
    let tnames: Vec<String> = target.context().names()[..np].to_vec();
    let jets = JetVariables::new(source.context(), np, n, ell0, &tnames)?;
    let base = jet_base(h, &jets, n);
    let ctx = jets.ctx.clone();
    let order = h.order().min(source.order()).min(target.order());
    let tp0 = ctx.arity() - np;
    let zero_alpha = Multidegree::zero(n);
    let jet0 = |i: usize| Series::var(&ctx, order, jets.var(i, &zero_alpha).expect("order-0 jet"));

    let mut args: Vec<Series> = (0..np).map(|i| Series::var(&ctx, order, tp0 + i)).collect();
    args.extend((0..mp).map(jet0));
    args.extend(std::iter::repeat(Series::zero(&ctx, EXACT)).take(target.d()));
    let fields: Vec<VectorField> =
        (0..source.m()).map(|k| total_derivative(source, &jets, &base, source.zeta(k))).collect::<Result<_>>()?;
    let betas = multidegrees_up_to(source.m(), ell0);
    let mut all_rows: Vec<((usize, Multidegree), Series)> = Vec::new();
    for j in 0..target.d() {
        let e = &jet0(mp + j) - &target.theta()[j].compose(&args)?;
        for (b, s) in derivative_table(&fields, &e, &betas) {
            all_rows.push(((j, b), s));
        }
    }
    let mut chosen: Vec<usize> = Vec::new();
    let mut lin: Vec<Vec<Gq>> = Vec::new();
    for (p, (_, s)) in all_rows.iter().enumerate() {
        let row: Vec<Gq> = (0..np).map(|i| s.derive(tp0 + i).constant_term()).collect();
        let mut trial = lin.clone();
        trial.push(row.clone());
        if Matrix::from_rows(trial).rank() > lin.len() {
            lin.push(row);
            chosen.push(p);
        }
        if chosen.len() == np {
            break;
        }
    }
    if chosen.len() < np {
        return Err(ReflectionError::RankHypothesis { rank: chosen.len(), needed: np });
    }
    let sys = SeriesMap::new(&ctx, chosen.iter().map(|&p| all_rows[p].1.clone()).collect())?;
    let unknowns: Vec<usize> = (tp0..ctx.arity()).collect();
    let sol = formal_ift(&sys, &unknowns)?;
    let jctx_names: Vec<String> = ctx.names()[..tp0].to_vec();
    let jets = JetVariables {
        ctx: VariableContext::new(&jctx_names)?,
        offset: jets.offset,
        index: jets.index.clone(),
        max_order: jets.max_order,
    };
    let phi = SeriesMap::new(
        &jets.ctx,
        sol.components().iter().map(|c| c.embed(&jets.ctx)).collect::<std::result::Result<_, _>>()?,
    )?;
    let rows = chosen.iter().map(|&p| all_rows[p].0.clone()).collect();
    Ok(Resolution { ell0, rows, jets, jet_base: base, phi })
}

/// Residual valuations of the resolution identities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolutionCheck {
    /// `h(t) − Φ(t, ζ, J h̄(ζ, Θ(ζ, t)))`.
    pub direct: Option<u32>,
    /// `h̄(τ) − Φ̄(τ, z, J h(z, Θ̄(z, τ)))`.
    pub conjugate: Option<u32>,
    pub order: i32,
    /// For each `ℓ`: `∂^α h(t) − Φ_α(t, ζ, J^{ℓ0+ℓ} h̄)` over `|α| = ℓ`.
    pub jet_levels: Vec<(u32, Option<u32>, i32)>,
}

impl ResolutionCheck {
    pub fn pass(&self) -> bool {
        self.direct.is_none() && self.conjugate.is_none() && self.jet_levels.iter().all(|l| l.1.is_none())
    }
}

fn min_val(acc: Option<u32>, v: Option<u32>) -> Option<u32> {
    match (acc, v) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Checks the resolution identity and its conjugate, then differentiates
/// it along `L` and `Υ` and recovers `∂^α h` for `|α| ≤ ell_max` by
/// trigonal inversion.
pub fn check_resolution(
    res: &Resolution,
    h: &FormalCRMap,
    source: &GraphedManifold,
    ell_max: u32,
) -> Result<ResolutionCheck> {
    let n = source.n();
    let sctx = source.context().clone();
    let order = source.order().min(h.order());
    let actual = actual_jets(h, source, &res.jets, &res.jet_base)?;
    let mut args: Vec<Series> = (0..2 * n).map(|v| Series::var(&sctx, order, v)).collect();
    args.extend(actual.iter().cloned());
    let mut direct = None;
    let mut res_order = EXACT;
    for (i, c) in res.phi.components().iter().enumerate() {
        let (v, o) = diff_valuation(&h.h()[i], &c.compose(&args)?);
        direct = min_val(direct, v);
        res_order = res_order.min(o);
    }

    // conjugate: swap the halves, conjugate coefficients, jets of h
    let t: Vec<usize> = (0..n).collect();
    let mut cargs: Vec<Series> = (0..2 * n).map(|v| Series::var(&sctx, order, (v + n) % (2 * n))).collect();
    for ((i, a), c) in res.jets.index.iter().zip(&res.jet_base) {
        let der = h.h()[*i].derive_multi(&spread(a, &t, 2 * n));
        let r = source.restrict(&der, Restriction::SubstituteW)?;
        cargs.push(&r - &Series::constant(&sctx, EXACT, c.conj()));
    }
    let mut conjugate = None;
    for (i, c) in res.phi.components().iter().enumerate() {
        let (v, o) = diff_valuation(&h.h_bar()[i], &c.conjugate().compose(&cargs)?);
        conjugate = min_val(conjugate, v);
        res_order = res_order.min(o);
    }

    let mut jet_levels = Vec::new();
    if ell_max > 0 {
        let big = JetVariables::new(&sctx, h.n_target(), n, res.ell0 + ell_max, &[])?;
        let base = jet_base(h, &big, n);
        let yctx = big.ctx.clone();
        let phi: Vec<Series> =
            res.phi.components().iter().map(|c| c.embed(&yctx)).collect::<std::result::Result<_, _>>()?;
        let (m, d) = (source.m(), source.d());
        let ups: Vec<VectorField> =
            (0..d).map(|j| total_derivative(source, &big, &base, source.w(j))).collect::<Result<_>>()?;
        let ls: Vec<VectorField> = (0..m)
            .map(|k| {
                let mut terms = vec![(source.z(k), Series::one(&yctx, EXACT))];
                for j in 0..d {
                    let a = source.restrict(&source.theta_bar()[j].derive(source.z(k)), Restriction::SubstituteXi)?;
                    terms.push((source.w(j), a.embed(&yctx)?));
                }
                Ok(VectorField { terms })
            })
            .collect::<Result<_>>()?;
        let deltas = multidegrees_up_to(d, ell_max);
        let betas = multidegrees_up_to(m, ell_max);
        let big_actual = actual_jets(h, source, &big, &base)?;
        let mut yargs: Vec<Series> = (0..2 * n).map(|v| Series::var(&sctx, order, v)).collect();
        yargs.extend(big_actual);
        let mut worst: BTreeMap<u32, (Option<u32>, i32)> = BTreeMap::new();
        for (i, p) in phi.iter().enumerate() {
            let mut values: BTreeMap<(Multidegree, Multidegree), Series> = BTreeMap::new();
            for (dl, s) in derivative_table(&ups, p, &deltas) {
                let left = ell_max - dl.degree();
                let bs: Vec<Multidegree> = betas.iter().filter(|b| b.degree() <= left).cloned().collect();
                for (b, v) in derivative_table(&ls, &s, &bs) {
                    values.insert((b, dl.clone()), v);
                }
            }
            let mut alphas = multidegrees_up_to(n, ell_max);
            alphas.sort_by_key(|a| (0..m).map(|k| a.get(k)).sum::<u32>());
            let mut out: BTreeMap<Multidegree, Series> = BTreeMap::new();
            for alpha in alphas {
                let beta = Multidegree::from_slice(&alpha.to_vec()[..m]);
                let delta = Multidegree::from_slice(&alpha.to_vec()[m..]);
                let word = DerivationWord::new(beta.clone(), delta.clone(), Side::Unbarred);
                let mut acc = values[&(beta, delta)].clone();
                for (a, c) in source.expand_word(&word) {
                    if a == alpha {
                        continue;
                    }
                    let c = source.restrict(&c, Restriction::SubstituteXi)?.embed(&yctx)?;
                    acc = &acc - &(&c * &out[&a]);
                }
                let lhs = h.h()[i].derive_multi(&spread(&alpha, &t, 2 * n));
                let (v, o) = diff_valuation(&lhs, &acc.compose(&yargs)?);
                let e = worst.entry(alpha.degree()).or_insert((None, EXACT));
                e.0 = min_val(e.0, v);
                e.1 = e.1.min(o);
                out.insert(alpha, acc);
            }
        }
        jet_levels = worst.into_iter().map(|(l, (v, o))| (l, v, o)).collect();
    }
    Ok(ResolutionCheck { direct, conjugate, order: res_order, jet_levels })
}
