//! Formal implicit function solver.

use super::linalg::Matrix;
use super::map::SeriesMap;
use super::truncated::TruncatedSeries;
use super::{Gq, SeriesError, VariableContext};

/// Solves `F(x, u) = 0` for `u = u(x)` with `u(0) = 0`.
///
/// `unknowns` lists the positions of the `u` variables in the context of
/// `system`; there must be as many equations as unknowns and the block
/// `∂F/∂u(0)` must be invertible. Each sweep `u ← u − A⁻¹F(x, u)` with the
/// constant block `A` fixes one more degree. The result lives in the
/// context of the remaining variables, in their original order.
pub fn formal_ift(system: &SeriesMap, unknowns: &[usize]) -> Result<SeriesMap, SeriesError> {
    let ctx = system.context().clone();
    let k = unknowns.len();
    if system.len() != k {
        return Err(SeriesError::ArityMismatch { expected: k, found: system.len() });
    }
    if system.components().iter().any(|c| !c.constant_term().is_zero()) {
        return Err(SeriesError::IftNonzeroConstant);
    }
    let order = system.order();
    let mut a = Matrix::zeros(k, k);
    for (i, f) in system.components().iter().enumerate() {
        for (j, &u) in unknowns.iter().enumerate() {
            a[(i, j)] = f.derive(u).constant_term();
        }
    }
    let ainv = a.inverse().ok_or(SeriesError::IftSingular)?;

    let mut u: Vec<TruncatedSeries> = vec![TruncatedSeries::zero(&ctx, order); k];
    for _ in 0..=order.max(0) {
        let args: Vec<TruncatedSeries> = (0..ctx.arity())
            .map(|v| match unknowns.iter().position(|&x| x == v) {
                Some(j) => u[j].clone(),
                None => TruncatedSeries::var(&ctx, order, v),
            })
            .collect();
        let residual = system.compose(&args)?;
        if residual.components().iter().all(|r| r.is_zero()) {
            break;
        }
        for (j, uj) in u.iter_mut().enumerate() {
            let mut corr = TruncatedSeries::zero(&ctx, order);
            for (i, r) in residual.components().iter().enumerate() {
                let c: &Gq = &ainv[(j, i)];
                if !c.is_zero() {
                    corr = &corr + &r.scale(c);
                }
            }
            *uj = &*uj - &corr;
        }
    }

    let keep: Vec<usize> = (0..ctx.arity()).filter(|v| !unknowns.contains(v)).collect();
    let names: Vec<&str> = keep.iter().map(|&v| ctx.name(v)).collect();
    let out_ctx = VariableContext::new(&names)?;
    let mut map = vec![None; ctx.arity()];
    for (new, &old) in keep.iter().enumerate() {
        map[old] = Some(new);
    }
    let comps = u.iter().map(|s| s.reindex(&out_ctx, &map)).collect::<Result<Vec<_>, _>>()?;
    SeriesMap::new(&out_ctx, comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Multidegree;

    #[test]
    fn catalan_fixed_point() {
        let ctx = VariableContext::new(&["x", "u"]).unwrap();
        let x = TruncatedSeries::var(&ctx, 4, 0);
        let u = TruncatedSeries::var(&ctx, 4, 1);
        // u − x − u² = 0
        let f = &(&u - &x) - &(&u * &u);
        let sys = SeriesMap::new(&ctx, vec![f]).unwrap();
        let sol = formal_ift(&sys, &[1]).unwrap();
        let s = sol.get(0);
        let want = [1, 1, 2, 5];
        for (d, c) in want.iter().enumerate() {
            assert_eq!(s.coeff(&Multidegree::from_slice(&[d as u32 + 1])), Gq::from_int(*c));
        }
    }

    #[test]
    fn singular_block_is_an_error() {
        let ctx = VariableContext::new(&["x", "u"]).unwrap();
        let u = TruncatedSeries::var(&ctx, 3, 1);
        let sys = SeriesMap::new(&ctx, vec![&u * &u]).unwrap();
        assert_eq!(formal_ift(&sys, &[1]), Err(SeriesError::IftSingular));
    }
}
