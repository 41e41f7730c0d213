//! Variable contexts and multidegrees.

use std::fmt;
use std::sync::Arc;

use smallvec::SmallVec;

use super::SeriesError;

/// Ordered, duplicate-free list of variable names shared by series.
///
/// Cloning is cheap; equality compares names.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VariableContext {
    names: Arc<[String]>,
}

impl VariableContext {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, SeriesError> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(SeriesError::DuplicateVariable(a.clone()));
            }
        }
        Ok(VariableContext { names: names.into() })
    }

    pub fn arity(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// This context followed by `extra` names.
    pub fn extended<S: AsRef<str>>(&self, extra: &[S]) -> Result<Self, SeriesError> {
        let mut all: Vec<String> = self.names.to_vec();
        all.extend(extra.iter().map(|s| s.as_ref().to_string()));
        Self::new(&all)
    }
}

impl fmt::Debug for VariableContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.names.join(", "))
    }
}

/// Exponent vector. Ordered by total degree first, then lexicographically,
/// so the first term of a series map has the lowest degree.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Multidegree {
    deg: u32,
    exps: SmallVec<[u8; 16]>,
}

impl Multidegree {
    pub fn zero(arity: usize) -> Self {
        Multidegree { deg: 0, exps: SmallVec::from_elem(0, arity) }
    }

    pub fn unit(arity: usize, var: usize) -> Self {
        let mut m = Self::zero(arity);
        m.exps[var] = 1;
        m.deg = 1;
        m
    }

    /// Panics if an exponent exceeds 255.
    pub fn from_slice(exps: &[u32]) -> Self {
        let exps: SmallVec<[u8; 16]> = exps.iter().map(|&e| u8::try_from(e).expect("exponent above 255")).collect();
        let deg = exps.iter().map(|&e| e as u32).sum();
        Multidegree { deg, exps }
    }

    pub fn arity(&self) -> usize {
        self.exps.len()
    }

    pub fn degree(&self) -> u32 {
        self.deg
    }

    pub fn get(&self, var: usize) -> u32 {
        self.exps[var] as u32
    }

    pub fn exponents(&self) -> impl Iterator<Item = u32> + '_ {
        self.exps.iter().map(|&e| e as u32)
    }

    pub fn to_vec(&self) -> Vec<u32> {
        self.exponents().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.deg == 0
    }

    pub fn add(&self, other: &Multidegree) -> Multidegree {
        debug_assert_eq!(self.arity(), other.arity());
        let exps =
            self.exps.iter().zip(&other.exps).map(|(a, b)| a.checked_add(*b).expect("exponent above 255")).collect();
        Multidegree { deg: self.deg + other.deg, exps }
    }

    /// `self − other` when componentwise nonnegative.
    pub fn checked_sub(&self, other: &Multidegree) -> Option<Multidegree> {
        let mut exps = SmallVec::with_capacity(self.arity());
        for (a, b) in self.exps.iter().zip(&other.exps) {
            exps.push(a.checked_sub(*b)?);
        }
        Some(Multidegree { deg: self.deg - other.deg, exps })
    }

    pub fn divides(&self, other: &Multidegree) -> bool {
        self.exps.iter().zip(&other.exps).all(|(a, b)| a <= b)
    }

    pub fn with(&self, var: usize, e: u32) -> Multidegree {
        let mut m = self.clone();
        let e = u8::try_from(e).expect("exponent above 255");
        m.deg = m.deg - m.exps[var] as u32 + e as u32;
        m.exps[var] = e;
        m
    }

    /// Exponents reordered: entry `i` of the result is entry `perm[i]` here.
    pub fn gather(&self, perm: &[usize]) -> Multidegree {
        let exps: SmallVec<[u8; 16]> = perm.iter().map(|&p| self.exps[p]).collect();
        let deg = exps.iter().map(|&e| e as u32).sum();
        Multidegree { deg, exps }
    }

    /// α! = Π αᵢ!.
    pub fn factorial(&self) -> super::Rational {
        let mut acc = super::Rational::one();
        for e in self.exponents() {
            acc = &acc * &super::scalar::factorial(e as u64);
        }
        acc
    }
}

impl fmt::Debug for Multidegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.exps.as_slice())
    }
}

/// All multidegrees in `arity` variables of total degree exactly `deg`,
/// in increasing `Multidegree` order.
pub fn multidegrees_of_degree(arity: usize, deg: u32) -> Vec<Multidegree> {
    fn rec(prefix: &mut Vec<u32>, left: u32, slots: usize, out: &mut Vec<Multidegree>) {
        if slots == 1 {
            prefix.push(left);
            out.push(Multidegree::from_slice(prefix));
            prefix.pop();
            return;
        }
        for e in 0..=left {
            prefix.push(e);
            rec(prefix, left - e, slots - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if arity == 0 {
        if deg == 0 {
            out.push(Multidegree::zero(0));
        }
        return out;
    }
    rec(&mut Vec::new(), deg, arity, &mut out);
    out.sort();
    out
}

/// All multidegrees of total degree at most `deg`, ascending.
pub fn multidegrees_up_to(arity: usize, deg: u32) -> Vec<Multidegree> {
    (0..=deg).flat_map(|k| multidegrees_of_degree(arity, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_order() {
        let a = Multidegree::from_slice(&[2, 0]);
        let b = Multidegree::from_slice(&[0, 3]);
        assert!(a < b);
        assert_eq!(multidegrees_of_degree(3, 2).len(), 6);
        assert_eq!(multidegrees_up_to(2, 2).len(), 6);
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(VariableContext::new(&["z1", "z1"]).is_err());
    }
}
