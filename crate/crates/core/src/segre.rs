//! Flows of the complexified CR fields, Segre chains, minimality and jet
//! maps of Segre varieties.

use thiserror::Error;

use crate::manifold::GraphedManifold;
use crate::series::{
    generic_rank_matrix, multidegrees_up_to, rank::random_point, Gq, Multidegree, SeriesError, SeriesMap,
    TruncatedSeries, VariableContext,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegreError {
    #[error("point is not on the complexified manifold (residual valuation {0})")]
    OffManifold(u32),
    #[error("chain of length {k} needs {vars} variables, budget is {budget}")]
    BudgetExceeded { k: usize, vars: usize, budget: usize },
    #[error("chain length must be at least 1")]
    EmptyChain,
    #[error("jet order {k} exceeds the manifold order {order}")]
    JetOrder { k: u32, order: i32 },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Point of the complexification with series coordinates over one context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Point {
    pub z: Vec<TruncatedSeries>,
    pub w: Vec<TruncatedSeries>,
    pub zeta: Vec<TruncatedSeries>,
    pub xi: Vec<TruncatedSeries>,
}

impl Point {
    pub fn origin(m: &GraphedManifold, ctx: &VariableContext, order: i32) -> Self {
        let zero = TruncatedSeries::zero(ctx, order);
        Point {
            z: vec![zero.clone(); m.m()],
            w: vec![zero.clone(); m.d()],
            zeta: vec![zero.clone(); m.m()],
            xi: vec![zero; m.d()],
        }
    }

    /// `(z, w, ζ, ξ)` flattened.
    pub fn components(&self) -> Vec<TruncatedSeries> {
        self.z.iter().chain(&self.w).chain(&self.zeta).chain(&self.xi).cloned().collect()
    }

    pub fn t(&self) -> Vec<TruncatedSeries> {
        self.z.iter().chain(&self.w).cloned().collect()
    }

    pub fn tau(&self) -> Vec<TruncatedSeries> {
        self.zeta.iter().chain(&self.xi).cloned().collect()
    }

    /// Valuation of `ξ − Θ(ζ, z, w)`, `None` when the point is on the
    /// manifold through its order.
    pub fn off_manifold(&self, m: &GraphedManifold) -> Result<Option<u32>, SeriesError> {
        let th = m.theta_at(&self.zeta, &self.z, &self.w)?;
        Ok(self.xi.iter().zip(&th).filter_map(|(x, t)| (x - t).valuation()).min())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowField {
    L,
    LBar,
    Upsilon,
    UpsilonBar,
}

fn shifted(a: &[TruncatedSeries], s: &[TruncatedSeries]) -> Vec<TruncatedSeries> {
    a.iter().zip(s).map(|(x, y)| x + y).collect()
}

/// Image of `p` under the flow of `field` at multitime `time`.
pub fn flow(m: &GraphedManifold, field: FlowField, p: &Point, time: &[TruncatedSeries]) -> Result<Point, SegreError> {
    if let Some(v) = p.off_manifold(m)? {
        return Err(SegreError::OffManifold(v));
    }
    flow_unchecked(m, field, p, time)
}

fn flow_unchecked(
    m: &GraphedManifold,
    field: FlowField,
    p: &Point,
    time: &[TruncatedSeries],
) -> Result<Point, SegreError> {
    let mut q = p.clone();
    match field {
        FlowField::L => {
            q.z = shifted(&p.z, time);
            q.w = m.theta_bar_at(&q.z, &p.zeta, &p.xi)?;
        }
        FlowField::LBar => {
            q.zeta = shifted(&p.zeta, time);
            q.xi = m.theta_at(&q.zeta, &p.z, &p.w)?;
        }
        FlowField::Upsilon => {
            q.w = shifted(&p.w, time);
            q.xi = m.theta_at(&p.zeta, &p.z, &q.w)?;
        }
        FlowField::UpsilonBar => {
            q.xi = shifted(&p.xi, time);
            q.w = m.theta_bar_at(&p.z, &p.zeta, &q.xi)?;
        }
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStart {
    /// `Γ_k`: first step along `L`.
    Unbarred,
    /// `Γ̲_k`: first step along `L̲`.
    Barred,
}

/// Names of the chain multitime variables: `s{step}_{k}`, 1-based.
pub fn chain_context(m: usize, k: usize) -> Result<VariableContext, SeriesError> {
    let names: Vec<String> = (1..=k).flat_map(|s| (1..=m).map(move |c| format!("s{s}_{c}"))).collect();
    VariableContext::new(&names)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegreChain {
    pub k: usize,
    pub start: ChainStart,
    pub point: Point,
}

impl SegreChain {
    pub fn context(&self) -> &VariableContext {
        self.point.z[0].context()
    }

    pub fn components(&self) -> SeriesMap {
        SeriesMap::new(self.context(), self.point.components()).expect("shared context")
    }
}

pub const DEFAULT_CHAIN_VAR_BUDGET: usize = 48;

/// Alternating flows from the origin over `k` multitimes.
pub fn chain(m: &GraphedManifold, k: usize, start: ChainStart) -> Result<SegreChain, SegreError> {
    let ctx = chain_context(m.m(), k)?;
    let args: Vec<TruncatedSeries> = (0..ctx.arity()).map(|i| TruncatedSeries::var(&ctx, m.order(), i)).collect();
    chain_at(m, k, start, &args)
}

/// The chain with its multitimes replaced by `times` (`k·m` series over a
/// common context).
pub fn chain_at(
    m: &GraphedManifold,
    k: usize,
    start: ChainStart,
    times: &[TruncatedSeries],
) -> Result<SegreChain, SegreError> {
    if k == 0 {
        return Err(SegreError::EmptyChain);
    }
    let vars = k * m.m();
    if vars > DEFAULT_CHAIN_VAR_BUDGET {
        return Err(SegreError::BudgetExceeded { k, vars, budget: DEFAULT_CHAIN_VAR_BUDGET });
    }
    assert_eq!(times.len(), vars);
    let ctx = times[0].context().clone();
    let mut p = Point::origin(m, &ctx, m.order());
    for step in 0..k {
        let barred_step = (step % 2 == 0) == (start == ChainStart::Barred);
        let field = if barred_step { FlowField::LBar } else { FlowField::L };
        p = flow_unchecked(m, field, &p, &times[step * m.m()..(step + 1) * m.m()])?;
    }
    Ok(SegreChain { k, start, point: p })
}

/// Generic rank of a chain as a map of its multitimes.
pub fn chain_rank(c: &SegreChain, seed: u64) -> crate::series::RankReport {
    c.components().generic_rank(seed)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinimalityReport {
    pub minimal: bool,
    pub nu0: Option<usize>,
    /// Ranks of `Γ_k`, `k = 1..=kmax`.
    pub ranks: Vec<usize>,
    /// Ranks of `Γ̲_k`.
    pub ranks_barred: Vec<usize>,
    pub certified: bool,
    pub mu0_witness: Option<Mu0Witness>,
}

/// A family of points of the zero fiber of `Γ_{μ₀}`, `μ₀ = 2ν₀ + 1`, where
/// the chain Jacobian reaches full rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mu0Witness {
    pub mu0: usize,
    /// Multitime `(s_1..s_ν, 0, −s_ν..−s_1)` at a seeded rational `s`.
    pub times: Vec<Gq>,
    /// Generic Jacobian rank of `Γ_{μ₀}` along the mirrored family.
    pub rank: usize,
}

pub fn default_kmax(d: usize) -> usize {
    2 * (d + 1) + 1
}

/// Decides minimality by the generic ranks of both chain parities.
pub fn minimality(m: &GraphedManifold, kmax: usize, seed: u64) -> Result<MinimalityReport, SegreError> {
    let full = 2 * m.m() + m.d();
    let mut ranks = Vec::new();
    let mut ranks_barred = Vec::new();
    let mut certified = true;
    let mut nu0 = None;
    for k in 1..=kmax {
        let a = chain_rank(&chain(m, k, ChainStart::Unbarred)?, seed);
        let b = chain_rank(&chain(m, k, ChainStart::Barred)?, seed);
        certified &= a.certified && b.certified;
        ranks.push(a.rank);
        ranks_barred.push(b.rank);
        if a.rank == full && b.rank == full {
            nu0 = Some(k - 1);
            break;
        }
    }
    let minimal = ranks.iter().chain(&ranks_barred).any(|&r| r == full);
    let mu0_witness = match nu0 {
        Some(nu) if nu >= 1 && (2 * nu + 1) * m.m() <= DEFAULT_CHAIN_VAR_BUDGET => mu0_witness(m, nu, seed)?,
        _ => None,
    };
    Ok(MinimalityReport { minimal, nu0, ranks, ranks_barred, certified, mu0_witness })
}

/// Mirrored multitime `(s_1..s_ν, 0, −s_ν..−s_1)` parametrizes part of the
/// zero fiber of `Γ_{2ν+1}`. Returns a witness when the fiber identity holds
/// as a series identity and the chain Jacobian along the family has full
/// generic rank.
pub fn mu0_witness(m: &GraphedManifold, nu: usize, seed: u64) -> Result<Option<Mu0Witness>, SegreError> {
    let mm = m.m();
    let mu0 = 2 * nu + 1;
    let g = chain(m, mu0, ChainStart::Unbarred)?;
    let sctx = chain_context(mm, nu)?;
    let order = m.order();
    let svar = |i: usize| TruncatedSeries::var(&sctx, order, i);
    let mut family: Vec<TruncatedSeries> = (0..nu * mm).map(svar).collect();
    family.extend(std::iter::repeat(TruncatedSeries::zero(&sctx, order)).take(mm));
    for step in (0..nu).rev() {
        family.extend((step * mm..(step + 1) * mm).map(|i| -svar(i)));
    }
    let on_fiber = g.components().compose(&family)?;
    if on_fiber.components().iter().any(|c| !c.is_zero()) {
        return Ok(None);
    }
    let vars: Vec<usize> = (0..g.context().arity()).collect();
    let jac: Vec<Vec<TruncatedSeries>> = g
        .components()
        .jacobian(&vars)
        .iter()
        .map(|row| row.iter().map(|e| e.compose(&family)).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    let report = generic_rank_matrix(&jac, seed);
    if report.rank != 2 * mm + m.d() {
        return Ok(None);
    }
    let s = random_point(nu * mm, seed);
    let times = family.iter().map(|f| f.eval(&s)).collect();
    Ok(Some(Mu0Witness { mu0, times, rank: report.rank }))
}

/// `φ'_k(ζ', t') = (ζ', (1/β'!) ∂^{β'}_{ζ'} Θ'_{j'}(ζ', t'))` with `j'`
/// major and `β'` in graded order, `|β'| ≤ k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JetMapData {
    pub k: u32,
    pub components: SeriesMap,
    /// `(j', β')` of each component after the first `m'`.
    pub index: Vec<(usize, Multidegree)>,
}

impl JetMapData {
    /// Drops the components with `|β'| > k1`.
    pub fn project(&self, k1: u32) -> JetMapData {
        let mm = self.components.len() - self.index.len();
        let mut comps: Vec<TruncatedSeries> = self.components.components()[..mm].to_vec();
        let mut index = Vec::new();
        for (p, (j, b)) in self.index.iter().enumerate() {
            if b.degree() <= k1 {
                comps.push(self.components.get(mm + p).clone());
                index.push((*j, b.clone()));
            }
        }
        let comps = SeriesMap::new(self.components.context(), comps).expect("shared context");
        JetMapData { k: k1, components: comps, index }
    }

    /// Variables `(ζ', z', w')` of the jet map in the ambient context.
    pub fn source_vars(m: &GraphedManifold) -> Vec<usize> {
        let mut v: Vec<usize> = (0..m.m()).map(|k| m.zeta(k)).collect();
        v.extend((0..m.m()).map(|k| m.z(k)));
        v.extend((0..m.d()).map(|j| m.w(j)));
        v
    }
}

pub fn segre_jet_map(m: &GraphedManifold, k: u32) -> Result<JetMapData, SegreError> {
    if k as i64 > m.order() as i64 {
        return Err(SegreError::JetOrder { k, order: m.order() });
    }
    let order = m.order() - k as i32;
    let mut comps: Vec<TruncatedSeries> = (0..m.m()).map(|i| m.var(m.zeta(i)).truncate(order)).collect();
    let mut index = Vec::new();
    let betas = multidegrees_up_to(m.m(), k);
    for j in 0..m.d() {
        for b in &betas {
            let mut full = vec![0u32; 2 * m.n()];
            for (i, e) in b.exponents().enumerate() {
                full[m.zeta(i)] = e;
            }
            let der = m.theta()[j].derive_multi(&Multidegree::from_slice(&full));
            let s = der.scale_rational(&b.factorial().recip().unwrap()).truncate(order);
            comps.push(s);
            index.push((j, b.clone()));
        }
    }
    Ok(JetMapData { k, components: SeriesMap::new(m.context(), comps)?, index })
}

/// Generic rank of a jet map in its `m' + n'` source variables.
pub fn jet_map_generic_rank(m: &GraphedManifold, jm: &JetMapData, seed: u64) -> crate::series::RankReport {
    let jac = jm.components.jacobian(&JetMapData::source_vars(m));
    generic_rank_matrix(&jac, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::manifold::VarNames;

    fn heisenberg(order: i32) -> GraphedManifold {
        let ctx = VariableContext::new(&VarNames::source().ambient(1, 1)).unwrap();
        let tb = parse_expression("xi1 + i*z1*zeta1", &ctx, order).unwrap();
        GraphedManifold::from_theta_bar(1, 1, VarNames::source(), vec![tb]).unwrap()
    }

    fn expect(c: &SegreChain, texts: [&str; 4]) {
        let ctx = c.context().clone();
        for (got, t) in c.point.components().iter().zip(texts) {
            assert_eq!(got, &parse_expression(t, &ctx, got.order()).unwrap(), "{t}");
        }
    }

    #[test]
    fn heisenberg_chains() {
        let m = heisenberg(8);
        let g2 = chain(&m, 2, ChainStart::Barred).unwrap();
        expect(&g2, ["s2_1", "i*s1_1*s2_1", "s1_1", "0"]);
        let g3 = chain(&m, 3, ChainStart::Unbarred).unwrap();
        expect(&g3, ["s1_1 + s3_1", "i*s2_1*s3_1", "s2_1", "-i*s1_1*s2_1"]);
        assert_eq!(chain_rank(&g3, 0).rank, 3);
        assert_eq!(chain_rank(&chain(&m, 2, ChainStart::Unbarred).unwrap(), 0).rank, 2);
    }

    #[test]
    fn heisenberg_minimality() {
        let m = heisenberg(8);
        let rep = minimality(&m, default_kmax(1), 0).unwrap();
        assert!(rep.minimal);
        assert_eq!(rep.nu0, Some(2));
        assert_eq!(rep.mu0_witness.as_ref().unwrap().mu0, 5);
    }

    #[test]
    fn flat_is_not_minimal() {
        let ctx = VariableContext::new(&VarNames::source().ambient(1, 1)).unwrap();
        let tb = parse_expression("xi1", &ctx, 6).unwrap();
        let m = GraphedManifold::from_theta_bar(1, 1, VarNames::source(), vec![tb]).unwrap();
        let rep = minimality(&m, 5, 0).unwrap();
        assert!(!rep.minimal);
        assert!(rep.ranks.iter().all(|&r| r <= 2));
    }

    #[test]
    fn off_manifold_point_rejected() {
        let m = heisenberg(4);
        let ctx = m.context().clone();
        let mut p = Point::origin(&m, &ctx, 4);
        p.xi[0] = m.var(m.z(0));
        assert!(matches!(flow(&m, FlowField::L, &p, &[m.var(0)]), Err(SegreError::OffManifold(1))));
    }

    #[test]
    fn heisenberg_jet_map() {
        let m = heisenberg(6);
        let jm = segre_jet_map(&m, 1).unwrap();
        let ctx = m.context().clone();
        let want = ["zeta1", "w1 - i*zeta1*z1", "-i*z1"];
        for (got, t) in jm.components.components().iter().zip(want) {
            assert_eq!(got, &parse_expression(t, &ctx, 5).unwrap());
        }
        assert_eq!(jet_map_generic_rank(&m, &jm, 0).rank, 3);
    }
}
