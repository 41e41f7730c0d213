//! Sparse truncated multivariate power series over ℚ(i).
//!
//! A series carries the degree through which its coefficients are known
//! (`order`); everything above is unknown, never assumed zero. Results of
//! binary operations take the smaller order, differentiation lowers it by
//! one, division by a non-unit lowers it by the divisor's valuation.
//!
//! Invariants:
//! - every stored multidegree has total degree ≤ `order`
//! - no stored coefficient is zero
//! - a negative order means no coefficient is known (the map is empty)

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use super::context::{Multidegree, VariableContext};
use super::scalar::{Gq, Rational};
use super::SeriesError;

/// Order used for exact polynomials: large enough never to truncate.
pub const EXACT: i32 = i32::MAX / 4;

#[derive(Clone, PartialEq, Eq)]
pub struct TruncatedSeries {
    pub(crate) ctx: VariableContext,
    pub(crate) order: i32,
    pub(crate) terms: BTreeMap<Multidegree, Gq>,
}

pub type Series = TruncatedSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithKind {
    Add,
    Sub,
    Mul,
}

impl TruncatedSeries {
    pub fn zero(ctx: &VariableContext, order: i32) -> Self {
        TruncatedSeries { ctx: ctx.clone(), order, terms: BTreeMap::new() }
    }

    pub fn constant(ctx: &VariableContext, order: i32, c: Gq) -> Self {
        let mut s = Self::zero(ctx, order);
        s.insert(Multidegree::zero(ctx.arity()), c);
        s
    }

    pub fn one(ctx: &VariableContext, order: i32) -> Self {
        Self::constant(ctx, order, Gq::one())
    }

    pub fn var(ctx: &VariableContext, order: i32, var: usize) -> Self {
        Self::monomial(ctx, order, Multidegree::unit(ctx.arity(), var), Gq::one())
    }

    pub fn monomial(ctx: &VariableContext, order: i32, md: Multidegree, c: Gq) -> Self {
        let mut s = Self::zero(ctx, order);
        s.insert(md, c);
        s
    }

    pub fn from_terms<I>(ctx: &VariableContext, order: i32, terms: I) -> Self
    where
        I: IntoIterator<Item = (Multidegree, Gq)>,
    {
        let mut s = Self::zero(ctx, order);
        for (md, c) in terms {
            debug_assert_eq!(md.arity(), ctx.arity());
            s.accumulate(md, &c);
        }
        s
    }

    /// Adds `c·x^md`, dropping it when above the order.
    pub(crate) fn accumulate(&mut self, md: Multidegree, c: &Gq) {
        if c.is_zero() || md.degree() as i64 > self.order as i64 {
            return;
        }
        match self.terms.entry(md) {
            Entry::Vacant(v) => {
                v.insert(c.clone());
            }
            Entry::Occupied(mut o) => {
                let s = o.get() + c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    fn insert(&mut self, md: Multidegree, c: Gq) {
        if !c.is_zero() && md.degree() as i64 <= self.order as i64 {
            self.terms.insert(md, c);
        }
    }

    pub fn context(&self) -> &VariableContext {
        &self.ctx
    }

    /// Degree through which the coefficients are valid.
    pub fn order(&self) -> i32 {
        self.order
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Multidegree, &Gq)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, md: &Multidegree) -> Gq {
        self.terms.get(md).cloned().unwrap_or_default()
    }

    pub fn constant_term(&self) -> Gq {
        self.coeff(&Multidegree::zero(self.ctx.arity()))
    }

    /// True when every known coefficient vanishes.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Lowest degree of a nonzero term.
    pub fn valuation(&self) -> Option<u32> {
        self.terms.keys().next().map(|m| m.degree())
    }

    /// Highest degree of a stored term.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(|m| m.degree())
    }

    pub fn depends_on(&self, var: usize) -> bool {
        self.terms.keys().any(|m| m.get(var) > 0)
    }

    /// Drops everything above `order` (no-op if already lower).
    pub fn truncate(&self, order: i32) -> Self {
        if order >= self.order {
            return self.clone();
        }
        let terms = self
            .terms
            .iter()
            .filter(|(m, _)| m.degree() as i64 <= order as i64)
            .map(|(m, c)| (m.clone(), c.clone()))
            .collect();
        TruncatedSeries { ctx: self.ctx.clone(), order, terms }
    }

    /// Declares the stored terms exact through `order`. Only for inputs that
    /// are polynomials known to the caller.
    pub fn assume_exact_to(&self, order: i32) -> Self {
        let mut s = self.clone();
        s.order = order;
        s.terms.retain(|m, _| m.degree() as i64 <= order as i64);
        s
    }

    pub fn homogeneous_part(&self, k: u32) -> Self {
        let terms = self.terms.iter().filter(|(m, _)| m.degree() == k).map(|(m, c)| (m.clone(), c.clone())).collect();
        TruncatedSeries { ctx: self.ctx.clone(), order: self.order, terms }
    }

    fn check_ctx(&self, other: &Self) -> Result<(), SeriesError> {
        if self.ctx != other.ctx {
            return Err(SeriesError::ContextMismatch {
                left: format!("{:?}", self.ctx),
                right: format!("{:?}", other.ctx),
            });
        }
        Ok(())
    }

    /// Ring operation with an explicit context check; the result has the
    /// smaller of the two orders.
    pub fn arith(&self, other: &Self, kind: ArithKind) -> Result<Self, SeriesError> {
        self.check_ctx(other)?;
        Ok(match kind {
            ArithKind::Add => self.add_impl(other, false),
            ArithKind::Sub => self.add_impl(other, true),
            ArithKind::Mul => self.mul_impl(other, self.order.min(other.order)),
        })
    }

    /// Lowest degree that can carry a nonzero coefficient: the valuation,
    /// or one past the known range when no term is stored.
    pub fn valuation_bound(&self) -> i32 {
        match self.valuation() {
            Some(v) => v as i32,
            None => (self.order.saturating_add(1)).max(0),
        }
    }

    /// Product whose order accounts for valuations: an unknown term of
    /// degree > a.order meets b only from degree val(b) upward.
    pub fn mul_tracked(&self, other: &Self) -> Self {
        self.check_ctx(other).expect("series context mismatch");
        let o1 = self.order as i64 + other.valuation_bound() as i64;
        let o2 = other.order as i64 + self.valuation_bound() as i64;
        let order = o1.min(o2).min(EXACT as i64) as i32;
        self.mul_impl(other, order)
    }

    fn add_impl(&self, other: &Self, negate: bool) -> Self {
        let order = self.order.min(other.order);
        let mut out = self.truncate(order);
        for (m, c) in &other.terms {
            if negate {
                out.accumulate(m.clone(), &(-c));
            } else {
                out.accumulate(m.clone(), c);
            }
        }
        out
    }

    fn mul_impl(&self, other: &Self, order: i32) -> Self {
        let mut out = Self::zero(&self.ctx, order);
        if order < 0 {
            return out;
        }
        let (a, b) = if self.terms.len() <= other.terms.len() { (self, other) } else { (other, self) };
        let bt: Vec<(&Multidegree, &Gq)> = b.terms.iter().collect();
        let mut acc: HashMap<Multidegree, Gq> = HashMap::new();
        for (ma, ca) in &a.terms {
            let room = order as i64 - ma.degree() as i64;
            if room < 0 {
                break;
            }
            for (mb, cb) in &bt {
                if mb.degree() as i64 > room {
                    break;
                }
                let p = ca * *cb;
                match acc.entry(ma.add(mb)) {
                    std::collections::hash_map::Entry::Vacant(v) => {
                        v.insert(p);
                    }
                    std::collections::hash_map::Entry::Occupied(mut o) => {
                        let s = o.get() + &p;
                        *o.get_mut() = s;
                    }
                }
            }
        }
        out.terms = acc.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        out
    }

    pub fn scale(&self, c: &Gq) -> Self {
        if c.is_zero() {
            return Self::zero(&self.ctx, self.order);
        }
        let terms = self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect();
        TruncatedSeries { ctx: self.ctx.clone(), order: self.order, terms }
    }

    pub fn scale_rational(&self, r: &Rational) -> Self {
        self.scale(&Gq::real(r.clone()))
    }

    /// Coefficient conjugation φ ↦ φ̄ (variables untouched).
    pub fn conjugate(&self) -> Self {
        let terms = self.terms.iter().map(|(m, c)| (m.clone(), c.conj())).collect();
        TruncatedSeries { ctx: self.ctx.clone(), order: self.order, terms }
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one(&self.ctx, self.order);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// ∂/∂x_var; the order drops by one.
    pub fn derive(&self, var: usize) -> Self {
        let mut out = Self::zero(&self.ctx, self.order - 1);
        for (m, c) in &self.terms {
            let e = m.get(var);
            if e == 0 {
                continue;
            }
            out.accumulate(m.with(var, e - 1), &c.scale(&Rational::from_int(e as i64)));
        }
        out
    }

    /// ∂^α; the order drops by |α|.
    pub fn derive_multi(&self, alpha: &Multidegree) -> Self {
        let mut out = self.clone();
        for (v, e) in alpha.exponents().enumerate() {
            for _ in 0..e {
                out = out.derive(v);
            }
        }
        out
    }

    /// Evaluates the stored polynomial at a point.
    pub fn eval(&self, point: &[Gq]) -> Gq {
        assert_eq!(point.len(), self.ctx.arity());
        let mut powers: Vec<Vec<Gq>> = point.iter().map(|p| vec![Gq::one(), p.clone()]).collect();
        let mut acc = Gq::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (v, e) in m.exponents().enumerate() {
                if e == 0 {
                    continue;
                }
                while powers[v].len() <= e as usize {
                    let next = powers[v].last().unwrap() * &point[v];
                    powers[v].push(next);
                }
                t = &t * &powers[v][e as usize];
            }
            acc = &acc + &t;
        }
        acc
    }

    /// Sets the listed variables to zero (same context).
    pub fn set_zero(&self, vars: &[usize]) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(m, _)| vars.iter().all(|&v| m.get(v) == 0))
            .map(|(m, c)| (m.clone(), c.clone()))
            .collect();
        TruncatedSeries { ctx: self.ctx.clone(), order: self.order, terms }
    }

    /// Moves the series into `target`: variable `i` here becomes variable
    /// `map[i]` there. Variables mapped to `None` must not occur.
    pub fn reindex(&self, target: &VariableContext, map: &[Option<usize>]) -> Result<Self, SeriesError> {
        assert_eq!(map.len(), self.ctx.arity());
        let mut out = Self::zero(target, self.order);
        for (m, c) in &self.terms {
            let mut e = vec![0u32; target.arity()];
            for (i, x) in m.exponents().enumerate() {
                if x == 0 {
                    continue;
                }
                match map[i] {
                    Some(j) => e[j] += x,
                    None => {
                        return Err(SeriesError::UnmappedVariable(self.ctx.name(i).to_string()));
                    }
                }
            }
            out.accumulate(Multidegree::from_slice(&e), c);
        }
        Ok(out)
    }

    /// Reindexes by name: each variable goes to the same name in `target`.
    pub fn embed(&self, target: &VariableContext) -> Result<Self, SeriesError> {
        let map: Vec<Option<usize>> = self.ctx.names().iter().map(|n| target.index_of(n)).collect();
        self.reindex(target, &map)
    }

    /// f(args): substitutes `args[i]` for variable `i`. Every argument must
    /// vanish at the origin; the result lives in the arguments' context with
    /// order min(order of f, orders of args).
    pub fn compose(&self, args: &[TruncatedSeries]) -> Result<Self, SeriesError> {
        if args.len() != self.ctx.arity() {
            return Err(SeriesError::ArityMismatch { expected: self.ctx.arity(), found: args.len() });
        }
        let Some(first) = args.first() else {
            return Ok(self.clone());
        };
        let tctx = first.ctx.clone();
        for (i, a) in args.iter().enumerate() {
            if a.ctx != tctx {
                return Err(SeriesError::ContextMismatch {
                    left: format!("{:?}", tctx),
                    right: format!("{:?}", a.ctx),
                });
            }
            if !a.constant_term().is_zero() {
                return Err(SeriesError::NonzeroConstantArgument(i));
            }
        }
        let order = args.iter().map(|a| a.order).min().unwrap().min(self.order);
        let args: Vec<TruncatedSeries> = args.iter().map(|a| a.truncate(order)).collect();
        let mut powers: Vec<Vec<TruncatedSeries>> =
            args.iter().map(|a| vec![Self::one(&tctx, order), a.clone()]).collect();
        let mut out = Self::zero(&tctx, order);
        // prefix products over the first k variables, reused across the
        // lexicographically sorted exponent list
        let mut sorted: Vec<(&Multidegree, &Gq)> = self.terms.iter().collect();
        sorted.sort_by(|a, b| a.0.to_vec().cmp(&b.0.to_vec()));
        let n = self.ctx.arity();
        let mut prefix: Vec<(Vec<u32>, TruncatedSeries)> = Vec::new();
        for (m, c) in sorted {
            if m.degree() as i64 > order as i64 {
                continue;
            }
            let e = m.to_vec();
            let mut k = 0;
            while k < prefix.len() && k < n && prefix[k].0[k] == e[k] && prefix[k].0[..k] == e[..k] {
                k += 1;
            }
            prefix.truncate(k);
            while prefix.len() < n {
                let v = prefix.len();
                let base = match prefix.last() {
                    Some((_, s)) => s.clone(),
                    None => Self::one(&tctx, order),
                };
                let ev = e[v] as usize;
                while powers[v].len() <= ev {
                    let next = &powers[v][powers[v].len() - 1] * &args[v];
                    powers[v].push(next);
                }
                let s = if ev == 0 { base } else { &base * &powers[v][ev] };
                prefix.push((e.clone(), s));
            }
            let mono = match prefix.last() {
                Some((_, s)) => s.clone(),
                None => Self::one(&tctx, order),
            };
            for (mm, cc) in &mono.terms {
                out.accumulate(mm.clone(), &(cc * c));
            }
        }
        Ok(out)
    }

    /// 1/f for f(0) ≠ 0, valid through the same order.
    pub fn invert_unit(&self) -> Result<Self, SeriesError> {
        let c0 = self.constant_term();
        let inv0 = c0.inv().ok_or(SeriesError::ZeroConstantTerm)?;
        // g = inv0 · Σ (−u)^k with u = f·inv0 − 1, u(0) = 0
        let u = &self.scale(&inv0) - &Self::one(&self.ctx, self.order);
        let mut acc = Self::one(&self.ctx, self.order);
        let mut power = Self::one(&self.ctx, self.order);
        let neg_u = -&u;
        for _ in 0..=self.order.max(0) {
            power = &power * &neg_u;
            if power.is_zero() {
                break;
            }
            acc = &acc + &power;
        }
        Ok(acc.scale(&inv0))
    }

    /// num/den when den divides num. With μ the valuation of den, the
    /// quotient is determined through degree order − μ; returns
    /// `(quotient, μ)`.
    pub fn divide_with_valuation(num: &Self, den: &Self) -> Result<(Self, u32), SeriesError> {
        num.check_ctx(den)?;
        let order = num.order.min(den.order);
        let den = den.truncate(order);
        let num = num.truncate(order);
        let Some(mu) = den.valuation() else {
            return Err(SeriesError::ZeroDivisor { order });
        };
        let qorder = order - mu as i32;
        // long division on the leading (lowest-degree, then order-first) term
        let lead = den.terms.iter().next().map(|(m, c)| (m.clone(), c.clone())).unwrap();
        let lead_inv = lead.1.inv().unwrap();
        let mut rem = num.clone();
        let mut q = Self::zero(&num.ctx, qorder);
        while let Some((m, c)) = rem.terms.iter().next().map(|(m, c)| (m.clone(), c.clone())) {
            if m.degree() as i64 > order as i64 {
                break;
            }
            if m.degree() as i64 > (qorder as i64 + mu as i64) {
                break;
            }
            let Some(qm) = m.checked_sub(&lead.0) else {
                return Err(SeriesError::NotDivisible { degree: m.degree() });
            };
            let qc = &c * &lead_inv;
            let t = Self::monomial(&num.ctx, order, qm.clone(), qc.clone());
            rem = &rem - &(&t * &den);
            q.accumulate(qm, &qc);
        }
        Ok((q, mu))
    }

    /// p / d for polynomials when the division is exact (multivariate long
    /// division on leading terms). `None` if d does not divide p.
    pub fn exact_poly_div(p: &Self, d: &Self) -> Option<Self> {
        let (dl, dc) = d.terms.iter().next_back()?;
        let dinv = dc.inv()?;
        let mut rem = p.clone();
        let mut q = Self::zero(&p.ctx, p.order);
        while let Some((m, c)) = rem.terms.iter().next_back().map(|(m, c)| (m.clone(), c.clone())) {
            let qm = m.checked_sub(dl)?;
            let qc = &c * &dinv;
            let t = Self::monomial(&p.ctx, p.order, qm, qc);
            rem = &rem - &(&t * d);
            q = &q + &t;
        }
        Some(q)
    }
}

impl Add for &TruncatedSeries {
    type Output = TruncatedSeries;
    /// Panics on context mismatch; use [`TruncatedSeries::arith`] to check.
    fn add(self, rhs: &TruncatedSeries) -> TruncatedSeries {
        self.arith(rhs, ArithKind::Add).expect("series context mismatch")
    }
}

impl Sub for &TruncatedSeries {
    type Output = TruncatedSeries;
    fn sub(self, rhs: &TruncatedSeries) -> TruncatedSeries {
        self.arith(rhs, ArithKind::Sub).expect("series context mismatch")
    }
}

impl Mul for &TruncatedSeries {
    type Output = TruncatedSeries;
    fn mul(self, rhs: &TruncatedSeries) -> TruncatedSeries {
        self.arith(rhs, ArithKind::Mul).expect("series context mismatch")
    }
}

impl Neg for &TruncatedSeries {
    type Output = TruncatedSeries;
    fn neg(self) -> TruncatedSeries {
        self.scale(&Gq::from_int(-1))
    }
}

impl Neg for TruncatedSeries {
    type Output = TruncatedSeries;
    fn neg(self) -> TruncatedSeries {
        (&self).neg()
    }
}

impl fmt::Debug for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + O({})", crate::expr::print_series(self), self.order + 1)
    }
}
