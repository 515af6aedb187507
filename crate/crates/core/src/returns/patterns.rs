use serde::Serialize;

use crate::error::{Error, Result};

/// Strictly increasing return times `1 ≤ v_1 < … < v_r ≤ N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReturnPattern {
    v: Vec<u64>,
    horizon: u64,
}

impl ReturnPattern {
    pub fn new(v: Vec<u64>, horizon: u64) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidParameter("return pattern must be nonempty".into()));
        }
        if v[0] < 1 || *v.last().unwrap() > horizon || v.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidParameter(format!(
                "return times {v:?} must be strictly increasing within [1, {horizon}]"
            )));
        }
        Ok(ReturnPattern { v, horizon })
    }

    pub fn times(&self) -> &[u64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }
}

/// Block structure of a return pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PatternClass {
    /// Number of blocks of immediate returns.
    pub blocks: usize,
    /// 0-based indices of block heads; always starts with 0.
    pub heads: Vec<usize>,
    /// `(v_k - v_{k-1}) / m` for within-block steps, `None` at heads and at non-multiples.
    pub overlaps: Vec<Option<u64>>,
    pub total_overlap: u64,
    /// Minimal gap between the last return of a block and the next head; `None` for one block.
    pub delta: Option<u64>,
    /// Indices of within-block gaps that are not multiples of `m`.
    pub non_multiple_gaps: Vec<usize>,
}

/// Splits `v` into blocks: gaps `≤ M` stay inside a block, gaps `> M` start a new one.
pub fn classify_pattern(v: &ReturnPattern, big_m: u64, m: u64) -> Result<PatternClass> {
    if m == 0 || big_m < m {
        return Err(Error::InvalidParameter(format!("need 1 ≤ m ≤ M, got m = {m}, M = {big_m}")));
    }
    let t = v.times();
    let mut heads = vec![0];
    let mut overlaps = vec![None];
    let mut total_overlap = 0;
    let mut delta: Option<u64> = None;
    let mut non_multiple_gaps = Vec::new();
    for k in 1..t.len() {
        let gap = t[k] - t[k - 1];
        if gap > big_m {
            heads.push(k);
            overlaps.push(None);
            delta = Some(delta.map_or(gap, |d| d.min(gap)));
        } else if gap % m == 0 {
            overlaps.push(Some(gap / m));
            total_overlap += gap / m;
        } else {
            overlaps.push(None);
            non_multiple_gaps.push(k);
        }
    }
    Ok(PatternClass { blocks: heads.len(), heads, overlaps, total_overlap, delta, non_multiple_gaps })
}

/// `Δ(v) - n < δ`; a single block is never rare.
pub fn is_rare(class: &PatternClass, delta: u64, n: usize) -> bool {
    match class.delta {
        Some(d) => (d as i128) - (n as i128) < delta as i128,
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pat(v: &[u64]) -> ReturnPattern {
        ReturnPattern::new(v.to_vec(), 1000).unwrap()
    }

    #[test]
    fn validation() {
        assert!(ReturnPattern::new(vec![], 5).is_err());
        assert!(ReturnPattern::new(vec![0, 2], 5).is_err());
        assert!(ReturnPattern::new(vec![2, 2], 5).is_err());
        assert!(ReturnPattern::new(vec![2, 6], 5).is_err());
        assert!(classify_pattern(&pat(&[1]), 2, 3).is_err());
    }

    #[test]
    fn classify_examples() {
        let c = classify_pattern(&pat(&[1, 2, 3]), 5, 1).unwrap();
        assert_eq!((c.blocks, c.total_overlap), (1, 2));
        assert_eq!(c.delta, None);
        let c = classify_pattern(&pat(&[1, 100]), 5, 1).unwrap();
        assert_eq!((c.blocks, c.total_overlap, c.delta), (2, 0, Some(99)));
        let c = classify_pattern(&pat(&[7]), 5, 1).unwrap();
        assert_eq!((c.blocks, c.total_overlap, c.delta), (1, 0, None));
    }

    #[test]
    fn classify_reports_non_multiples() {
        let c = classify_pattern(&pat(&[1, 3, 4, 20, 22]), 6, 2).unwrap();
        assert_eq!(c.heads, vec![0, 3]);
        assert_eq!(c.non_multiple_gaps, vec![2]);
        assert_eq!(c.overlaps, vec![None, Some(1), None, None, Some(1)]);
        assert_eq!(c.total_overlap, 2);
        assert_eq!(c.delta, Some(16));
    }

    #[test]
    fn rare_examples() {
        let (n, d) = (8usize, 3u64);
        let v = pat(&[1, 2 + n as u64 + d]);
        assert!(!is_rare(&classify_pattern(&v, 5, 1).unwrap(), d, n));
        let v = pat(&[1, n as u64 + 2]);
        assert!(is_rare(&classify_pattern(&v, 5, 1).unwrap(), 2, n));
        let single = classify_pattern(&pat(&[1, 2, 3]), 5, 1).unwrap();
        assert!(!is_rare(&single, 100, 1));
    }

    #[test]
    fn block_counts_match_binomial_structure() {
        // exhaustive over G_3(12) with M = 2: |G_{r,j}| by brute classification
        let (big_n, big_m) = (12u64, 2u64);
        let mut by_blocks = [0usize; 4];
        for a in 1..=big_n {
            for b in a + 1..=big_n {
                for c in b + 1..=big_n {
                    let cl = classify_pattern(&ReturnPattern::new(vec![a, b, c], big_n).unwrap(), big_m, 1).unwrap();
                    by_blocks[cl.blocks] += 1;
                }
            }
        }
        assert_eq!(by_blocks.iter().sum::<usize>(), 220);
        // j = 1: both gaps in {1, 2}: 4 gap choices, v_1 ranges so that v_3 ≤ 12
        let single: usize = (1..=2u64).flat_map(|g1| (1..=2u64).map(move |g2| (big_n - g1 - g2) as usize)).sum();
        assert_eq!(by_blocks[1], single);
    }
}
