//! Generic rank of matrices of polynomials.
//!
//! A random rational evaluation gives a lower bound that is already exact
//! when it reaches the row or column count. Otherwise fraction-free
//! elimination over the polynomial ring decides the rank symbolically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::Matrix;
use super::truncated::{TruncatedSeries, EXACT};
use super::Gq;

/// Entries above this many terms abort symbolic elimination.
pub const TERM_BUDGET: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankReport {
    /// Best known rank: symbolic when `certified`, else the sampled value.
    pub rank: usize,
    /// Rank at the seeded random point.
    pub sampled: usize,
    pub certified: bool,
}

/// Seeded random Gaussian-integer point of the given arity.
pub fn random_point(arity: usize, seed: u64) -> Vec<Gq> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..arity)
        .map(|_| {
            let re = rng.gen_range(-24i64..=24);
            let im = rng.gen_range(-24i64..=24);
            Gq::new(re.into(), im.into())
        })
        .collect()
}

pub fn rank_at_point(entries: &[Vec<TruncatedSeries>], point: &[Gq]) -> usize {
    if entries.is_empty() || entries[0].is_empty() {
        return 0;
    }
    let rows = entries.iter().map(|r| r.iter().map(|e| e.eval(point)).collect()).collect();
    Matrix::from_rows(rows).rank()
}

/// Generic rank of a matrix whose entries are read as exact polynomials
/// (their stored truncations).
pub fn generic_rank_matrix(entries: &[Vec<TruncatedSeries>], seed: u64) -> RankReport {
    let rows = entries.len();
    let cols = entries.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return RankReport { rank: 0, sampled: 0, certified: true };
    }
    let arity = entries[0][0].context().arity();
    let sampled = rank_at_point(entries, &random_point(arity, seed));
    if sampled == rows.min(cols) {
        return RankReport { rank: sampled, sampled, certified: true };
    }
    match bareiss_rank(entries) {
        Some(r) => RankReport { rank: r.max(sampled), sampled, certified: true },
        None => RankReport { rank: sampled, sampled, certified: false },
    }
}

/// Fraction-free elimination with row pivoting; `None` if an entry grows
/// past [`TERM_BUDGET`].
pub fn bareiss_rank(entries: &[Vec<TruncatedSeries>]) -> Option<usize> {
    let mut m: Vec<Vec<TruncatedSeries>> =
        entries.iter().map(|r| r.iter().map(|e| e.assume_exact_to(EXACT)).collect()).collect();
    let rows = m.len();
    let cols = m[0].len();
    let ctx = m[0][0].context().clone();
    let mut prev = TruncatedSeries::one(&ctx, EXACT);
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let pivot = (r..rows).filter(|&i| !m[i][c].is_zero()).min_by_key(|&i| m[i][c].num_terms());
        let Some(p) = pivot else { continue };
        m.swap(r, p);
        for i in r + 1..rows {
            for j in c + 1..cols {
                let num = &(&m[r][c] * &m[i][j]) - &(&m[i][c] * &m[r][j]);
                let q = TruncatedSeries::exact_poly_div(&num, &prev)?;
                if q.num_terms() > TERM_BUDGET {
                    return None;
                }
                m[i][j] = q;
            }
            m[i][c] = TruncatedSeries::zero(&ctx, EXACT);
        }
        prev = m[r][c].clone();
        r += 1;
    }
    Some(r)
}
