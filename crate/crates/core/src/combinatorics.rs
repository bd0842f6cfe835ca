//! Binomial coefficients and lexicographically ordered index subsets.
//!
//! Subsets index the rows and columns of compound matrices and the basis
//! states of fixed Hamming-weight sectors, so the ordering defined here is
//! used everywhere in the crate.

use crate::error::{domain, Result};

/// `C(n, k)`, zero when `k > n`.
pub fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// All size-`k` subsets of `{0, .., n-1}` in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetBasis {
    n: usize,
    k: usize,
    subsets: Vec<Vec<usize>>,
}

impl SubsetBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn get(&self, rank: usize) -> Option<&[usize]> {
        self.subsets.get(rank).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.subsets.iter().map(Vec::as_slice)
    }

    /// Position of `subset` in this basis.
    pub fn rank(&self, subset: &[usize]) -> Result<usize> {
        rank_subset(self.n, subset)
    }

    pub fn unrank(&self, rank: usize) -> Result<Vec<usize>> {
        unrank_subset(self.n, self.k, rank)
    }
}

/// Enumerates every size-`k` subset of `{0, .., n-1}` in lexicographic order.
pub fn enumerate_subsets(n: usize, k: usize) -> Result<SubsetBasis> {
    if k == 0 || k > n {
        return domain(format!("subset size k={k} must satisfy 0 < k <= n={n}"));
    }
    Ok(SubsetBasis {
        n,
        k,
        subsets: lex_subsets(n, k),
    })
}

/// Lexicographic subsets including the degenerate `k == 0` case (one empty subset).
pub(crate) fn lex_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binom(n, k));
    if k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // rightmost position that can still be advanced
        let mut i = k;
        while i > 0 && cur[i - 1] == n - k + (i - 1) {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
    out
}

/// Lexicographic rank of a strictly increasing subset of `{0, .., n-1}`.
pub fn rank_subset(n: usize, subset: &[usize]) -> Result<usize> {
    let k = subset.len();
    let mut rank = 0;
    let mut prev: Option<usize> = None;
    for (i, &s) in subset.iter().enumerate() {
        if s >= n {
            return domain(format!("index {s} out of range for n={n}"));
        }
        if prev.is_some_and(|p| s <= p) {
            return domain("subset must be strictly increasing");
        }
        let start = prev.map_or(0, |p| p + 1);
        for v in start..s {
            rank += binom(n - 1 - v, k - 1 - i);
        }
        prev = Some(s);
    }
    Ok(rank)
}

/// Inverse of [`rank_subset`].
pub fn unrank_subset(n: usize, k: usize, mut rank: usize) -> Result<Vec<usize>> {
    if k > n || rank >= binom(n, k) {
        return domain(format!("rank {rank} out of range for C({n},{k})"));
    }
    let mut out = Vec::with_capacity(k);
    let mut v = 0;
    for i in 0..k {
        loop {
            let block = binom(n - 1 - v, k - 1 - i);
            if rank < block {
                break;
            }
            rank -= block;
            v += 1;
        }
        out.push(v);
        v += 1;
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binomials() {
        assert_eq!(binom(4, 2), 6);
        assert_eq!(binom(22, 2), 231);
        assert_eq!(binom(12, 3), 220);
        assert_eq!(binom(3, 5), 0);
        assert_eq!(binom(7, 0), 1);
    }

    #[test]
    fn single_pair() {
        let b = enumerate_subsets(2, 2).unwrap();
        assert_eq!(b.subsets(), &[vec![0, 1]]);
    }

    #[test]
    fn pairs_of_four_match_brute_force() {
        let mut brute = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                if i < j {
                    brute.push(vec![i, j]);
                }
            }
        }
        brute.sort();
        let b = enumerate_subsets(4, 2).unwrap();
        assert_eq!(b.subsets(), brute.as_slice());
        assert_eq!(
            b.subsets(),
            &[
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }

    #[test]
    fn singletons() {
        let b = enumerate_subsets(5, 1).unwrap();
        let expect: Vec<Vec<usize>> = (0..5).map(|i| vec![i]).collect();
        assert_eq!(b.subsets(), expect.as_slice());
    }

    #[test]
    fn rejects_bad_k() {
        assert!(enumerate_subsets(3, 0).is_err());
        assert!(enumerate_subsets(3, 4).is_err());
    }

    #[test]
    fn rank_rejects_malformed() {
        assert!(rank_subset(4, &[1, 1]).is_err());
        assert!(rank_subset(4, &[0, 4]).is_err());
        assert!(unrank_subset(4, 2, 6).is_err());
    }

    proptest! {
        #[test]
        fn basis_is_sorted_and_ranks_roundtrip(n in 1usize..10, k_frac in 0.0f64..1.0) {
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let b = enumerate_subsets(n, k).unwrap();
            prop_assert_eq!(b.len(), binom(n, k));
            for w in b.subsets().windows(2) {
                prop_assert!(w[0] < w[1]);
            }
            for (r, s) in b.iter().enumerate() {
                prop_assert!(s.windows(2).all(|p| p[0] < p[1]));
                prop_assert_eq!(b.rank(s).unwrap(), r);
                prop_assert_eq!(b.unrank(r).unwrap(), s.to_vec());
            }
        }
    }
}
