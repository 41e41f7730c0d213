//! Vectors of series sharing one context: formal maps, jets, Jacobians.

use super::context::{multidegrees_up_to, Multidegree, VariableContext};
use super::truncated::TruncatedSeries;
use super::SeriesError;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SeriesMap {
    ctx: VariableContext,
    components: Vec<TruncatedSeries>,
}

impl SeriesMap {
    /// All components must share `ctx`; they are truncated to the common
    /// minimum order.
    pub fn new(ctx: &VariableContext, components: Vec<TruncatedSeries>) -> Result<Self, SeriesError> {
        for c in &components {
            if c.context() != ctx {
                return Err(SeriesError::ContextMismatch {
                    left: format!("{:?}", ctx),
                    right: format!("{:?}", c.context()),
                });
            }
        }
        let order = components.iter().map(|c| c.order()).min();
        let components = match order {
            Some(o) => components.iter().map(|c| c.truncate(o)).collect(),
            None => components,
        };
        Ok(SeriesMap { ctx: ctx.clone(), components })
    }

    /// The identity map of `ctx` at the given order.
    pub fn identity(ctx: &VariableContext, order: i32) -> Self {
        let comps = (0..ctx.arity()).map(|i| TruncatedSeries::var(ctx, order, i)).collect();
        SeriesMap { ctx: ctx.clone(), components: comps }
    }

    pub fn context(&self) -> &VariableContext {
        &self.ctx
    }

    pub fn components(&self) -> &[TruncatedSeries] {
        &self.components
    }

    pub fn into_components(self) -> Vec<TruncatedSeries> {
        self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn get(&self, i: usize) -> &TruncatedSeries {
        &self.components[i]
    }

    pub fn order(&self) -> i32 {
        self.components.iter().map(|c| c.order()).min().unwrap_or(super::truncated::EXACT)
    }

    pub fn compose(&self, args: &[TruncatedSeries]) -> Result<SeriesMap, SeriesError> {
        let comps: Vec<TruncatedSeries> = self.components.iter().map(|c| c.compose(args)).collect::<Result<_, _>>()?;
        let ctx = args.first().map(|a| a.context().clone()).unwrap_or_else(|| self.ctx.clone());
        SeriesMap::new(&ctx, comps)
    }

    pub fn conjugate(&self) -> SeriesMap {
        SeriesMap { ctx: self.ctx.clone(), components: self.components.iter().map(|c| c.conjugate()).collect() }
    }

    pub fn truncate(&self, order: i32) -> SeriesMap {
        SeriesMap { ctx: self.ctx.clone(), components: self.components.iter().map(|c| c.truncate(order)).collect() }
    }

    /// Jacobian entries ∂F_i/∂x_j for the listed variables.
    pub fn jacobian(&self, vars: &[usize]) -> Vec<Vec<TruncatedSeries>> {
        self.components.iter().map(|c| vars.iter().map(|&v| c.derive(v)).collect()).collect()
    }

    /// All partials (∂^α F_i) for |α| ≤ ℓ, grouped by component then α in
    /// graded order: n'·(n+ℓ)!/(n!ℓ!) series of order N − ℓ.
    pub fn jet(&self, ell: u32) -> Result<SeriesMap, SeriesError> {
        let order = self.order();
        if ell as i64 > order as i64 {
            return Err(SeriesError::JetOrderTooLarge { ell, order });
        }
        let alphas = multidegrees_up_to(self.ctx.arity(), ell);
        let mut comps = Vec::with_capacity(self.components.len() * alphas.len());
        for c in &self.components {
            for a in &alphas {
                comps.push(c.derive_multi(a).truncate(order - ell as i32));
            }
        }
        SeriesMap::new(&self.ctx, comps)
    }

    /// Indices matching the layout of [`SeriesMap::jet`].
    pub fn jet_layout(arity: usize, components: usize, ell: u32) -> Vec<(usize, Multidegree)> {
        let alphas = multidegrees_up_to(arity, ell);
        (0..components).flat_map(|i| alphas.iter().map(move |a| (i, a.clone()))).collect()
    }

    /// Generic rank of the Jacobian in all context variables.
    pub fn generic_rank(&self, seed: u64) -> super::rank::RankReport {
        let vars: Vec<usize> = (0..self.ctx.arity()).collect();
        super::rank::generic_rank_matrix(&self.jacobian(&vars), seed)
    }
}

/// Number of jet components n'·(n+ℓ)!/(n!ℓ!).
pub fn jet_component_count(n_target: usize, n_source: usize, ell: u32) -> usize {
    let mut c: u128 = 1;
    for j in 1..=ell as u128 {
        c = c * (n_source as u128 + j) / j;
    }
    n_target * c as usize
}
