//! Generic submanifolds in complexified graphed form.
//!
//! A manifold of CR dimension `m` and codimension `d` lives in the ambient
//! context `(z_1..z_m, w_1..w_d, ζ_1..ζ_m, ξ_1..ξ_d)`, where `(ζ, ξ)` stand
//! for the complexified conjugates of `(z, w)`. Both graphing functions are
//! stored over that context: `Θ(ζ, z, w)` never involves `ξ` and
//! `Θ̄(z, ζ, ξ)` never involves `w`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::series::{
    formal_ift, multidegrees_up_to, Gq, Matrix, Multidegree, SeriesError, SeriesMap, TruncatedSeries, VariableContext,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifoldError {
    #[error("defining function {0} is neither real nor purely imaginary")]
    NotReal(usize),
    #[error("defining function {0} does not vanish at the origin")]
    NonzeroConstant(usize),
    #[error("not generic: rank of the t-differential at 0 is {rank}, need {needed}")]
    NotGeneric { rank: usize, needed: usize },
    #[error("invalid coordinate split")]
    BadSplit,
    #[error("expected {expected} graphing functions, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("graphing function {0} depends on a forbidden variable")]
    ForbiddenVariable(usize),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Role prefixes for ambient variable names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarNames {
    pub z: String,
    pub w: String,
    pub zeta: String,
    pub xi: String,
}

impl VarNames {
    pub fn source() -> Self {
        VarNames { z: "z".into(), w: "w".into(), zeta: "zeta".into(), xi: "xi".into() }
    }

    pub fn target() -> Self {
        VarNames { z: "zp".into(), w: "wp".into(), zeta: "zetap".into(), xi: "xip".into() }
    }

    /// Every prefix with `suffix` appended.
    pub fn suffixed(&self, suffix: &str) -> Self {
        VarNames {
            z: format!("{}{suffix}", self.z),
            w: format!("{}{suffix}", self.w),
            zeta: format!("{}{suffix}", self.zeta),
            xi: format!("{}{suffix}", self.xi),
        }
    }

    /// `[z1..zm, w1..wd, zeta1..zetam, xi1..xid]`.
    pub fn ambient(&self, m: usize, d: usize) -> Vec<String> {
        let mut v = Vec::with_capacity(2 * (m + d));
        v.extend((1..=m).map(|k| format!("{}{k}", self.z)));
        v.extend((1..=d).map(|j| format!("{}{j}", self.w)));
        v.extend((1..=m).map(|k| format!("{}{k}", self.zeta)));
        v.extend((1..=d).map(|j| format!("{}{j}", self.xi)));
        v
    }
}

/// Conjugates coefficients and swaps the `t` and `τ` halves of a context of
/// even arity: the complexified form of `f ↦ f̄`.
pub fn conj_swap(f: &TruncatedSeries) -> TruncatedSeries {
    let ctx = f.context();
    let n = ctx.arity() / 2;
    let map: Vec<Option<usize>> = (0..2 * n).map(|i| Some(if i < n { i + n } else { i - n })).collect();
    f.reindex(ctx, &map).expect("total map").conjugate()
}

/// Real-analytic defining equations `ρ(t, t̄) = 0` over a context whose
/// first half is `t` and second half is `t̄`.
#[derive(Debug, Clone)]
pub struct RealDefiningSystem {
    ctx: VariableContext,
    rho: Vec<TruncatedSeries>,
}

impl RealDefiningSystem {
    /// Checks vanishing at 0 and reality. A purely imaginary component
    /// (`ρ̄ = −ρ` after swapping) is multiplied by `i`.
    pub fn new(ctx: &VariableContext, rho: Vec<TruncatedSeries>) -> Result<Self, ManifoldError> {
        if ctx.arity() % 2 != 0 {
            return Err(ManifoldError::BadSplit);
        }
        let mut out = Vec::with_capacity(rho.len());
        for (j, r) in rho.into_iter().enumerate() {
            if r.context() != ctx {
                return Err(SeriesError::ContextMismatch {
                    left: format!("{ctx:?}"),
                    right: format!("{:?}", r.context()),
                }
                .into());
            }
            if !r.constant_term().is_zero() {
                return Err(ManifoldError::NonzeroConstant(j));
            }
            let c = conj_swap(&r);
            if c == r {
                out.push(r);
            } else if c == -&r {
                out.push(r.scale(&Gq::i()));
            } else {
                return Err(ManifoldError::NotReal(j));
            }
        }
        Ok(RealDefiningSystem { ctx: ctx.clone(), rho: out })
    }

    /// `(ρ + ρ̄)/2` componentwise, which is always real.
    pub fn symmetrized(ctx: &VariableContext, rho: Vec<TruncatedSeries>) -> Result<Self, ManifoldError> {
        let half = Gq::ratio(1, 2);
        let sym = rho.iter().map(|r| (r + &conj_swap(r)).scale(&half)).collect();
        Self::new(ctx, sym)
    }

    pub fn n(&self) -> usize {
        self.ctx.arity() / 2
    }

    pub fn d(&self) -> usize {
        self.rho.len()
    }

    pub fn context(&self) -> &VariableContext {
        &self.ctx
    }

    pub fn rho(&self) -> &[TruncatedSeries] {
        &self.rho
    }

    /// `∂ρ/∂t` at 0, `d × n`.
    pub fn linear_part(&self) -> Matrix {
        let n = self.n();
        Matrix::from_rows(self.rho.iter().map(|r| (0..n).map(|i| r.derive(i).constant_term()).collect()).collect())
    }

    /// Pivot columns of `∂ρ/∂t` at 0, taken as the `w` coordinates.
    pub fn auto_split(&self) -> Result<Vec<usize>, ManifoldError> {
        let mut lin = self.linear_part();
        let piv = lin.rref();
        if piv.len() < self.d() {
            return Err(ManifoldError::NotGeneric { rank: piv.len(), needed: self.d() });
        }
        let n = self.n();
        let mut split: Vec<usize> = (0..n).filter(|c| !piv.contains(c)).collect();
        split.extend(piv);
        Ok(split)
    }
}

/// How a series on the complexification is pulled back to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restriction {
    /// `ξ := Θ(ζ, t)`; result is free of `ξ`.
    SubstituteXi,
    /// `w := Θ̄(z, τ)`; result is free of `w`.
    SubstituteW,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealityReport {
    pub ok: bool,
    pub first_failing_degree: Option<u32>,
}

/// First-order operator `Σ c_i ∂/∂x_i` with series coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorField {
    pub terms: Vec<(usize, TruncatedSeries)>,
}

impl VectorField {
    pub fn apply(&self, f: &TruncatedSeries) -> TruncatedSeries {
        let mut acc: Option<TruncatedSeries> = None;
        for (v, c) in &self.terms {
            let t = c * &f.derive(*v);
            acc = Some(match acc {
                Some(a) => &a + &t,
                None => t,
            });
        }
        acc.unwrap_or_else(|| TruncatedSeries::zero(f.context(), f.order() - 1))
    }

    /// Coefficient of `∂/∂x_var`, if present.
    pub fn coefficient(&self, var: usize) -> Option<&TruncatedSeries> {
        self.terms.iter().find(|(v, _)| *v == var).map(|(_, c)| c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `L`, `Υ`: differentiate along `t` holding `τ`.
    Unbarred,
    /// `L̲`, `Υ̲`: differentiate along `τ` holding `t`.
    Barred,
}

/// `L^β Υ^δ` (or the barred variant); `Υ^δ` acts first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationWord {
    pub beta: Multidegree,
    pub delta: Multidegree,
    pub side: Side,
}

impl DerivationWord {
    pub fn new(beta: Multidegree, delta: Multidegree, side: Side) -> Self {
        DerivationWord { beta, delta, side }
    }

    pub fn len(&self) -> u32 {
        self.beta.degree() + self.delta.degree()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphedManifold {
    m: usize,
    d: usize,
    order: i32,
    names: VarNames,
    ctx: VariableContext,
    theta: Vec<TruncatedSeries>,
    theta_bar: Vec<TruncatedSeries>,
    exact: bool,
}

/// Largest input for which exactness of a graph is checked by composition.
const EXACT_CHECK_TERMS: usize = 256;

impl GraphedManifold {
    /// From `Θ̄(z, ζ, ξ)` over the ambient context; `Θ` is its conjugate.
    pub fn from_theta_bar(
        m: usize,
        d: usize,
        names: VarNames,
        theta_bar: Vec<TruncatedSeries>,
    ) -> Result<Self, ManifoldError> {
        let ctx = VariableContext::new(&names.ambient(m, d))?;
        if theta_bar.len() != d {
            return Err(ManifoldError::DimensionMismatch { expected: d, found: theta_bar.len() });
        }
        let n = m + d;
        for (j, tb) in theta_bar.iter().enumerate() {
            if tb.context() != &ctx {
                return Err(SeriesError::ContextMismatch {
                    left: format!("{ctx:?}"),
                    right: format!("{:?}", tb.context()),
                }
                .into());
            }
            if !tb.constant_term().is_zero() {
                return Err(ManifoldError::NonzeroConstant(j));
            }
            if (m..n).any(|v| tb.depends_on(v)) {
                return Err(ManifoldError::ForbiddenVariable(j));
            }
        }
        let order = theta_bar.iter().map(|s| s.order()).min().unwrap_or(crate::series::EXACT);
        let theta_bar: Vec<TruncatedSeries> = theta_bar.iter().map(|s| s.truncate(order)).collect();
        let theta = theta_bar.iter().map(conj_swap).collect();
        Ok(GraphedManifold { m, d, order, names, ctx, theta, theta_bar, exact: false })
    }

    /// Solves `ρ(z, w, ζ, ξ) = 0` for `w = Θ̄(z, ζ, ξ)`. `split` lists the
    /// `t` indices in the order `(z_1..z_m, w_1..w_d)`; when absent it is
    /// chosen by column pivoting on `∂ρ/∂t` at 0.
    pub fn complexify_and_graph(
        rho: &RealDefiningSystem,
        split: Option<&[usize]>,
        names: VarNames,
    ) -> Result<Self, ManifoldError> {
        let n = rho.n();
        let d = rho.d();
        if d > n {
            return Err(ManifoldError::NotGeneric { rank: n, needed: d });
        }
        let rank = rho.linear_part().rank();
        if rank < d {
            return Err(ManifoldError::NotGeneric { rank, needed: d });
        }
        let split: Vec<usize> = match split {
            Some(s) => s.to_vec(),
            None => rho.auto_split()?,
        };
        let mut sorted = split.clone();
        sorted.sort_unstable();
        if sorted != (0..n).collect::<Vec<_>>() {
            return Err(ManifoldError::BadSplit);
        }
        let m = n - d;
        let ctx = VariableContext::new(&names.ambient(m, d))?;
        // t-index split[p] becomes ambient position p, its conjugate p + n
        let mut map = vec![None; 2 * n];
        for (p, &ti) in split.iter().enumerate() {
            map[ti] = Some(p);
            map[ti + n] = Some(p + n);
        }
        let sys: Vec<TruncatedSeries> = rho.rho().iter().map(|r| r.reindex(&ctx, &map)).collect::<Result<_, _>>()?;
        let sys = SeriesMap::new(&ctx, sys)?;
        let w_vars: Vec<usize> = (m..n).collect();
        let sol = formal_ift(&sys, &w_vars)?;
        let theta_bar = sol.components().iter().map(|s| s.embed(&ctx)).collect::<Result<Vec<_>, _>>()?;
        let mut out = Self::from_theta_bar(m, d, names, theta_bar)?;
        out.exact = out.solves_exactly(&sys);
        Ok(out)
    }

    /// Whether the stored polynomials `Θ̄` satisfy `ρ(z, Θ̄, ζ, ξ) = 0` with
    /// nothing truncated.
    fn solves_exactly(&self, sys: &SeriesMap) -> bool {
        use crate::series::EXACT;
        let size: usize = sys.components().iter().chain(&self.theta_bar).map(|s| s.num_terms()).sum();
        if size > EXACT_CHECK_TERMS || sys.components().iter().any(|r| r.degree().unwrap_or(0) > 4) {
            return false;
        }
        let mut args: Vec<TruncatedSeries> =
            (0..2 * self.n()).map(|i| TruncatedSeries::var(&self.ctx, EXACT, i)).collect();
        for j in 0..self.d {
            args[self.w(j)] = self.theta_bar[j].assume_exact_to(EXACT);
        }
        sys.components().iter().all(|r| match r.assume_exact_to(EXACT).compose(&args) {
            Ok(res) => res.is_zero(),
            Err(_) => false,
        })
    }

    /// Declares `Θ̄` to be an exact polynomial rather than a truncation.
    pub fn mark_exact(mut self) -> Self {
        self.exact = true;
        self
    }

    /// True when `Θ̄` is known to be an exact polynomial.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// The same manifold over differently named variables.
    pub fn renamed(&self, names: VarNames) -> Result<Self, ManifoldError> {
        let ctx = VariableContext::new(&names.ambient(self.m, self.d))?;
        let map: Vec<Option<usize>> = (0..ctx.arity()).map(Some).collect();
        let mut out = self.clone();
        out.theta = self.theta.iter().map(|s| s.reindex(&ctx, &map)).collect::<Result<_, _>>()?;
        out.theta_bar = self.theta_bar.iter().map(|s| s.reindex(&ctx, &map)).collect::<Result<_, _>>()?;
        out.ctx = ctx;
        out.names = names;
        Ok(out)
    }

    /// Coefficient of `ζ^γ` in `Θ_j`, a series in `t` known through
    /// `order − |γ|`.
    pub fn theta_component(&self, j: usize, gamma: &Multidegree) -> TruncatedSeries {
        self.strip_component(&self.theta[j], self.n(), gamma)
    }

    /// Coefficient of `z^γ` in `Θ̄_j`, a series in `τ`.
    pub fn theta_bar_component(&self, j: usize, gamma: &Multidegree) -> TruncatedSeries {
        self.strip_component(&self.theta_bar[j], 0, gamma)
    }

    fn strip_component(&self, f: &TruncatedSeries, base: usize, gamma: &Multidegree) -> TruncatedSeries {
        let order = self.order.saturating_sub(gamma.degree() as i32);
        let mut out = TruncatedSeries::zero(&self.ctx, order);
        for (md, c) in f.terms() {
            if (0..self.m).all(|k| md.get(base + k) == gamma.get(k)) {
                let mut e = md.to_vec();
                for k in 0..self.m {
                    e[base + k] = 0;
                }
                let e = Multidegree::from_slice(&e);
                if e.degree() as i64 <= order as i64 {
                    out.accumulate(e, c);
                }
            }
        }
        out
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.m + self.d
    }

    pub fn order(&self) -> i32 {
        self.order
    }

    pub fn names(&self) -> &VarNames {
        &self.names
    }

    pub fn context(&self) -> &VariableContext {
        &self.ctx
    }

    pub fn theta(&self) -> &[TruncatedSeries] {
        &self.theta
    }

    pub fn theta_bar(&self) -> &[TruncatedSeries] {
        &self.theta_bar
    }

    pub fn z(&self, k: usize) -> usize {
        k
    }

    pub fn w(&self, j: usize) -> usize {
        self.m + j
    }

    pub fn zeta(&self, k: usize) -> usize {
        self.n() + k
    }

    pub fn xi(&self, j: usize) -> usize {
        self.n() + self.m + j
    }

    pub fn var(&self, i: usize) -> TruncatedSeries {
        TruncatedSeries::var(&self.ctx, self.order, i)
    }

    /// The same manifold with every series cut to `order`.
    pub fn truncated(&self, order: i32) -> Self {
        let mut out = self.clone();
        out.exact = self.exact && self.theta_bar.iter().all(|s| s.degree().unwrap_or(0) as i64 <= order as i64);
        out.order = order.min(self.order);
        out.theta = self.theta.iter().map(|s| s.truncate(order)).collect();
        out.theta_bar = self.theta_bar.iter().map(|s| s.truncate(order)).collect();
        out
    }

    /// `Θ(ζ, z, w)` at the given argument series (any common context).
    pub fn theta_at(
        &self,
        zeta: &[TruncatedSeries],
        z: &[TruncatedSeries],
        w: &[TruncatedSeries],
    ) -> Result<Vec<TruncatedSeries>, SeriesError> {
        let zero = TruncatedSeries::zero(zeta.first().or(z.first()).unwrap().context(), crate::series::EXACT);
        let mut args: Vec<TruncatedSeries> = Vec::with_capacity(2 * self.n());
        args.extend(z.iter().cloned());
        args.extend(w.iter().cloned());
        args.extend(zeta.iter().cloned());
        args.extend(std::iter::repeat(zero).take(self.d));
        self.theta.iter().map(|t| t.compose(&args)).collect()
    }

    /// `Θ̄(z, ζ, ξ)` at the given argument series.
    pub fn theta_bar_at(
        &self,
        z: &[TruncatedSeries],
        zeta: &[TruncatedSeries],
        xi: &[TruncatedSeries],
    ) -> Result<Vec<TruncatedSeries>, SeriesError> {
        let zero = TruncatedSeries::zero(z.first().or(zeta.first()).unwrap().context(), crate::series::EXACT);
        let mut args: Vec<TruncatedSeries> = Vec::with_capacity(2 * self.n());
        args.extend(z.iter().cloned());
        args.extend(std::iter::repeat(zero).take(self.d));
        args.extend(zeta.iter().cloned());
        args.extend(xi.iter().cloned());
        self.theta_bar.iter().map(|t| t.compose(&args)).collect()
    }

    fn substitution(&self, side: Restriction) -> Vec<TruncatedSeries> {
        let mut args: Vec<TruncatedSeries> = (0..2 * self.n()).map(|i| self.var(i)).collect();
        for j in 0..self.d {
            match side {
                Restriction::SubstituteXi => args[self.xi(j)] = self.theta[j].clone(),
                Restriction::SubstituteW => args[self.w(j)] = self.theta_bar[j].clone(),
            }
        }
        args
    }

    /// Pulls an ambient series back to the complexification.
    pub fn restrict(&self, f: &TruncatedSeries, side: Restriction) -> Result<TruncatedSeries, SeriesError> {
        f.compose(&self.substitution(side))
    }

    /// Checks `Θ̄(z, ζ, Θ(ζ, z, w)) ≡ w` and `Θ(ζ, z, Θ̄(z, ζ, ξ)) ≡ ξ`.
    pub fn verify_reality(&self) -> RealityReport {
        let mut worst: Option<u32> = None;
        let mut note = |r: TruncatedSeries| {
            if let Some(v) = r.valuation() {
                worst = Some(worst.map_or(v, |w: u32| w.min(v)));
            }
        };
        for j in 0..self.d {
            match self.restrict(&self.theta_bar[j], Restriction::SubstituteXi) {
                Ok(s) => note(&s - &self.var(self.w(j))),
                Err(_) => note(TruncatedSeries::one(&self.ctx, 0)),
            }
            match self.restrict(&self.theta[j], Restriction::SubstituteW) {
                Ok(s) => note(&s - &self.var(self.xi(j))),
                Err(_) => note(TruncatedSeries::one(&self.ctx, 0)),
            }
        }
        RealityReport { ok: worst.is_none(), first_failing_degree: worst }
    }

    /// `L_k = ∂/∂z_k + Σ_j ∂Θ̄_j/∂z_k ∂/∂w_j` and
    /// `L̲_k = ∂/∂ζ_k + Σ_j ∂Θ_j/∂ζ_k ∂/∂ξ_j`.
    pub fn cr_fields(&self) -> (Vec<VectorField>, Vec<VectorField>) {
        let one = TruncatedSeries::one(&self.ctx, self.order);
        let l = (0..self.m)
            .map(|k| {
                let mut terms = vec![(self.z(k), one.clone())];
                terms.extend((0..self.d).map(|j| (self.w(j), self.theta_bar[j].derive(self.z(k)))));
                VectorField { terms }
            })
            .collect();
        let lb = (0..self.m)
            .map(|k| {
                let mut terms = vec![(self.zeta(k), one.clone())];
                terms.extend((0..self.d).map(|j| (self.xi(j), self.theta[j].derive(self.zeta(k)))));
                VectorField { terms }
            })
            .collect();
        (l, lb)
    }

    /// `Υ_j = ∂/∂w_j + Σ_l ∂Θ_l/∂w_j ∂/∂ξ_l` and
    /// `Υ̲_j = ∂/∂ξ_j + Σ_l ∂Θ̄_l/∂ξ_j ∂/∂w_l`.
    pub fn transversal_fields(&self) -> (Vec<VectorField>, Vec<VectorField>) {
        let one = TruncatedSeries::one(&self.ctx, self.order);
        let u = (0..self.d)
            .map(|j| {
                let mut terms = vec![(self.w(j), one.clone())];
                terms.extend((0..self.d).map(|l| (self.xi(l), self.theta[l].derive(self.w(j)))));
                VectorField { terms }
            })
            .collect();
        let ub = (0..self.d)
            .map(|j| {
                let mut terms = vec![(self.xi(j), one.clone())];
                terms.extend((0..self.d).map(|l| (self.w(l), self.theta_bar[l].derive(self.xi(j)))));
                VectorField { terms }
            })
            .collect();
        (u, ub)
    }

    /// `L^β Υ^δ f` (or barred); precision drops by the word length.
    pub fn apply_derivation(&self, word: &DerivationWord, f: &TruncatedSeries) -> Result<TruncatedSeries, SeriesError> {
        if word.len() as i64 > f.order() as i64 {
            return Err(SeriesError::OrderExhausted { needed: word.len(), order: f.order() });
        }
        let (l, lb) = self.cr_fields();
        let (u, ub) = self.transversal_fields();
        let (cr, tr) = match word.side {
            Side::Unbarred => (l, u),
            Side::Barred => (lb, ub),
        };
        let mut g = f.clone();
        for (j, e) in word.delta.exponents().enumerate() {
            for _ in 0..e {
                g = tr[j].apply(&g);
            }
        }
        for (k, e) in word.beta.exponents().enumerate() {
            for _ in 0..e {
                g = cr[k].apply(&g);
            }
        }
        Ok(g)
    }

    /// Expands `L^β Υ^δ` acting on series of `t` alone (or `τ` alone for
    /// the barred side) as `Σ_α c_α ∂^α` with `α` over the `n` variables of
    /// that side. The `∂^{(β,δ)}` coefficient is 1; every other `α` has
    /// smaller `z`-degree.
    pub fn expand_word(&self, word: &DerivationWord) -> BTreeMap<Multidegree, TruncatedSeries> {
        let n = self.n();
        let (l, _) = match word.side {
            Side::Unbarred => self.cr_fields(),
            Side::Barred => {
                let (a, b) = self.cr_fields();
                (b, a)
            }
        };
        let base = match word.side {
            Side::Unbarred => 0,
            Side::Barred => n,
        };
        let mut op: BTreeMap<Multidegree, TruncatedSeries> = BTreeMap::new();
        let mut a0 = vec![0u32; n];
        for (j, e) in word.delta.exponents().enumerate() {
            a0[self.m + j] = e;
        }
        op.insert(Multidegree::from_slice(&a0), TruncatedSeries::one(&self.ctx, self.order));
        for (k, e) in word.beta.exponents().enumerate() {
            for _ in 0..e {
                let field = &l[k];
                let mut next: BTreeMap<Multidegree, TruncatedSeries> = BTreeMap::new();
                let mut add = |md: Multidegree, s: TruncatedSeries| {
                    if s.is_zero() {
                        // keep the order bookkeeping of zero coefficients
                        next.entry(md).or_insert(s);
                        return;
                    }
                    match next.get_mut(&md) {
                        Some(x) => *x = &*x + &s,
                        None => {
                            next.insert(md, s);
                        }
                    }
                };
                for (alpha, c) in &op {
                    add(alpha.clone(), field.apply(c));
                    for (v, coef) in &field.terms {
                        let local = v - base;
                        let md = alpha.with(local, alpha.get(local) + 1);
                        add(md, coef * c);
                    }
                }
                op = next;
            }
        }
        op.retain(|_, c| !c.is_zero());
        op
    }

    /// Recovers `∂^α h` for `|α| ≤ max_len` from the values `L^β Υ^δ h`,
    /// keyed by `(β, δ)`, of a series `h` of `t` alone (resp. `τ`).
    pub fn trigonal_inversion(
        &self,
        side: Side,
        values: &BTreeMap<(Multidegree, Multidegree), TruncatedSeries>,
        max_len: u32,
    ) -> Result<BTreeMap<Multidegree, TruncatedSeries>, SeriesError> {
        let n = self.n();
        let mut out: BTreeMap<Multidegree, TruncatedSeries> = BTreeMap::new();
        let mut alphas = multidegrees_up_to(n, max_len);
        // increasing z-degree so every lower term is already known
        alphas.sort_by_key(|a| (0..self.m).map(|k| a.get(k)).sum::<u32>());
        for alpha in alphas {
            let beta = Multidegree::from_slice(&alpha.to_vec()[..self.m]);
            let delta = Multidegree::from_slice(&alpha.to_vec()[self.m..]);
            let Some(v) = values.get(&(beta.clone(), delta.clone())) else {
                return Err(SeriesError::OrderExhausted { needed: alpha.degree(), order: -1 });
            };
            let word = DerivationWord::new(beta, delta, side);
            let mut acc = v.clone();
            for (a, c) in self.expand_word(&word) {
                if a == alpha {
                    continue;
                }
                let known =
                    out.get(&a).ok_or(SeriesError::OrderExhausted { needed: a.degree(), order: max_len as i32 })?;
                acc = &acc - &(&c * known);
            }
            out.insert(alpha, acc);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    pub(crate) fn heisenberg(order: i32) -> GraphedManifold {
        let ctx = VariableContext::new(&VarNames::source().ambient(1, 1)).unwrap();
        let tb = parse_expression("xi1 + i*z1*zeta1", &ctx, order).unwrap();
        GraphedManifold::from_theta_bar(1, 1, VarNames::source(), vec![tb]).unwrap()
    }

    #[test]
    fn heisenberg_is_real() {
        let m = heisenberg(6);
        assert!(m.verify_reality().ok);
        let ctx = m.context().clone();
        assert_eq!(m.theta()[0], parse_expression("w1 - i*zeta1*z1", &ctx, 6).unwrap());
    }

    #[test]
    fn constructed_violation_fails_at_degree_one() {
        let ctx = VariableContext::new(&VarNames::source().ambient(1, 1)).unwrap();
        let tb = parse_expression("xi1 + z1", &ctx, 4).unwrap();
        let m = GraphedManifold::from_theta_bar(1, 1, VarNames::source(), vec![tb]).unwrap();
        assert_eq!(m.verify_reality(), RealityReport { ok: false, first_failing_degree: Some(1) });
    }

    #[test]
    fn anti_real_rho_is_normalized() {
        let ctx = VariableContext::new(&["t1", "t2", "s1", "s2"]).unwrap();
        let rho = parse_expression("t2 - s2 - i*t1*s1", &ctx, 6).unwrap();
        let sys = RealDefiningSystem::new(&ctx, vec![rho]).unwrap();
        let m = GraphedManifold::complexify_and_graph(&sys, None, VarNames::source()).unwrap();
        let want = parse_expression("xi1 + i*z1*zeta1", m.context(), 6).unwrap();
        assert_eq!(m.theta_bar()[0], want);
    }

    #[test]
    fn cr_fields_of_heisenberg() {
        let m = heisenberg(6);
        let (l, lb) = m.cr_fields();
        let ctx = m.context().clone();
        assert_eq!(l[0].coefficient(m.w(0)).unwrap(), &parse_expression("i*zeta1", &ctx, 5).unwrap());
        assert_eq!(lb[0].coefficient(m.xi(0)).unwrap(), &parse_expression("-i*z1", &ctx, 5).unwrap());
        let w_minus = &m.var(m.w(0)) - &m.theta_bar()[0];
        assert!(l[0].apply(&w_minus).is_zero());
    }
}
