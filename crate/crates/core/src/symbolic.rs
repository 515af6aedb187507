//! Words, cylinders, periodic points and the overlap structure of cylinders.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Symbol = u64;

/// Placeholder for symbols outside a model's effective alphabet. Never part of a target word.
pub const SENTINEL: Symbol = Symbol::MAX;

/// A nonempty finite word; as a set, the cylinder `[w_0 … w_{n-1}]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Symbol>", into = "Vec<Symbol>")]
pub struct Word(Vec<Symbol>);

impl Word {
    pub fn new(symbols: Vec<Symbol>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidParameter("words must be nonempty".into()));
        }
        Ok(Word(symbols))
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&s| s < 2)
    }

    /// `0101`-style rendering, only meaningful for binary words.
    pub fn to_compact(&self) -> Option<String> {
        self.is_binary()
            .then(|| self.0.iter().map(|&s| if s == 0 { '0' } else { '1' }).collect())
    }
}

impl TryFrom<Vec<Symbol>> for Word {
    type Error = Error;

    fn try_from(v: Vec<Symbol>) -> Result<Self> {
        Word::new(v)
    }
}

impl From<Word> for Vec<Symbol> {
    fn from(w: Word) -> Self {
        w.0
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Accepts `3,0,12` or, for binary words, the compact form `0101`.
/// A string without commas made only of `0`/`1` is read in compact form; append a comma
/// (`10,`) to force a single multi-digit symbol.
impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if !s.contains(',') && !s.is_empty() && s.chars().all(|c| c == '0' || c == '1') {
            return Word::new(s.chars().map(|c| if c == '0' { 0 } else { 1 }).collect());
        }
        let symbols = s
            .split(',')
            .map(str::trim)
            .filter(|tok| !tok.is_empty())
            .map(|tok| {
                tok.parse::<Symbol>()
                    .map_err(|e| Error::InvalidParameter(format!("bad symbol {tok:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Word::new(symbols)
    }
}

/// Border (failure) array: `b[i]` is the length of the longest proper border of `w[..=i]`.
pub fn border_array(w: &[Symbol]) -> Vec<usize> {
    let mut b = vec![0usize; w.len()];
    let mut k = 0;
    for i in 1..w.len() {
        while k > 0 && w[k] != w[i] {
            k = b[k - 1];
        }
        if w[k] == w[i] {
            k += 1;
        }
        b[i] = k;
    }
    b
}

/// Smallest `d ≥ 1` with `w_i = w_{i+d}` wherever both are defined.
pub fn minimal_period(w: &Word) -> usize {
    let b = border_array(w.symbols());
    w.len() - b[w.len() - 1]
}

/// Shifts `ℓ ∈ [1, |w|-1]` with `[w] ∩ σ^{-ℓ}[w] ≠ ∅`, ascending.
pub fn self_overlaps(w: &Word) -> Vec<usize> {
    let b = border_array(w.symbols());
    let n = w.len();
    let mut out = Vec::new();
    let mut k = b[n - 1];
    while k > 0 {
        out.push(n - k);
        k = b[k - 1];
    }
    out
}

/// The periodic sequence `generator^∞` with `generator` reduced to its primitive root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PeriodicPoint {
    generator: Word,
}

impl PeriodicPoint {
    pub fn new(generator: Word) -> Self {
        let d = minimal_period(&generator);
        let m = generator.len();
        let generator = if m % d == 0 && d < m {
            Word(generator.0[..d].to_vec())
        } else {
            generator
        };
        PeriodicPoint { generator }
    }

    pub fn generator(&self) -> &Word {
        &self.generator
    }

    /// Minimal period in shift steps.
    pub fn period(&self) -> usize {
        self.generator.len()
    }

    pub fn symbol_at(&self, i: usize) -> Symbol {
        self.generator.0[i % self.period()]
    }

    /// The cyclic rotation `σ^k x`.
    pub fn shifted(&self, k: usize) -> PeriodicPoint {
        let m = self.period();
        PeriodicPoint {
            generator: Word((0..m).map(|i| self.symbol_at(i + k)).collect()),
        }
    }
}

impl fmt::Display for PeriodicPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})^inf", self.generator)
    }
}

/// `A_n(x)`: the first `n` symbols of `x`.
pub fn cylinder_at(x: &PeriodicPoint, n: usize) -> Result<Word> {
    if n == 0 {
        return Err(Error::InvalidParameter("cylinder length must be at least 1".into()));
    }
    Word::new((0..n).map(|i| x.symbol_at(i)).collect())
}

/// 0/1 transition matrix over the finite alphabet `0..size`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    rows: Vec<Vec<bool>>,
}

impl TransitionMatrix {
    pub fn full(size: usize) -> Self {
        TransitionMatrix { rows: vec![vec![true; size]; size] }
    }

    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::InvalidParameter("empty transition matrix".into()));
        }
        let mut out = Vec::with_capacity(size);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != size {
                return Err(Error::InvalidParameter(format!(
                    "transition matrix row {i} has {} entries, expected {size}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|&&v| v > 1) {
                return Err(Error::InvalidParameter(format!("transition entry {v} is not 0/1")));
            }
            out.push(row.into_iter().map(|v| v == 1).collect());
        }
        Ok(TransitionMatrix { rows: out })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn allows(&self, from: Symbol, to: Symbol) -> bool {
        let n = self.size() as Symbol;
        from < n && to < n && self.rows[from as usize][to as usize]
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.rows.iter().map(|r| r.iter().map(|&b| b as u8).collect()).collect()
    }

    pub fn is_admissible(&self, w: &[Symbol]) -> bool {
        w.iter().all(|&s| (s as usize) < self.size()) && w.windows(2).all(|p| self.allows(p[0], p[1]))
    }

    /// Whether the periodic orbit respects the transitions, including the wrap-around step.
    pub fn admits_orbit(&self, x: &PeriodicPoint) -> bool {
        let g = x.generator().symbols();
        self.is_admissible(g) && self.allows(g[g.len() - 1], g[0])
    }

    /// Primitivity test: some power `A^k`, `k ≤ size²`, is strictly positive.
    pub fn mixing_exponent(&self) -> Option<usize> {
        let n = self.size();
        let mut power = self.rows.clone();
        for k in 1..=n * n {
            if power.iter().all(|r| r.iter().all(|&b| b)) {
                return Some(k);
            }
            let mut next = vec![vec![false; n]; n];
            for i in 0..n {
                for l in 0..n {
                    if power[i][l] {
                        for j in 0..n {
                            next[i][j] |= self.rows[l][j];
                        }
                    }
                }
            }
            power = next;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn parse_forms() {
        assert_eq!(w("0101").symbols(), &[0, 1, 0, 1]);
        assert_eq!(w("3, 4,12").symbols(), &[3, 4, 12]);
        assert_eq!(w("10,").symbols(), &[10]);
        assert!("".parse::<Word>().is_err());
        assert!("a,b".parse::<Word>().is_err());
        assert_eq!(w("3,4").to_string(), "3,4");
        assert_eq!(w("0110").to_compact().as_deref(), Some("0110"));
    }

    #[test]
    fn minimal_period_examples() {
        assert_eq!(minimal_period(&w("000")), 1);
        assert_eq!(minimal_period(&w("0101")), 2);
        assert_eq!(minimal_period(&w("011")), 3);
    }

    #[test]
    fn cylinder_examples() {
        let p = |s: &str| PeriodicPoint::new(w(s));
        assert_eq!(cylinder_at(&p("0"), 3).unwrap(), w("000"));
        assert_eq!(cylinder_at(&p("01"), 5).unwrap(), w("01010"));
        assert_eq!(cylinder_at(&p("0,1,2"), 4).unwrap(), w("0,1,2,0"));
        assert!(cylinder_at(&p("0"), 0).is_err());
    }

    #[test]
    fn generator_is_reduced_to_primitive_root() {
        let x = PeriodicPoint::new(w("010101"));
        assert_eq!(x.period(), 2);
        assert_eq!(PeriodicPoint::new(w("0100")).period(), 4);
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(self_overlaps(&w("0,0,0,0")), vec![1, 2, 3]);
        assert!(self_overlaps(&w("0,1")).is_empty());
        assert_eq!(self_overlaps(&w("01010")), vec![2, 4]);
    }

    #[test]
    fn mixing_detection() {
        let golden = TransitionMatrix::from_rows(vec![vec![1, 1], vec![1, 0]]).unwrap();
        assert_eq!(golden.mixing_exponent(), Some(2));
        let swap = TransitionMatrix::from_rows(vec![vec![0, 1], vec![1, 0]]).unwrap();
        assert_eq!(swap.mixing_exponent(), None);
        assert!(!golden.admits_orbit(&PeriodicPoint::new(w("1"))));
        assert!(golden.admits_orbit(&PeriodicPoint::new(w("01"))));
        assert!(!golden.admits_orbit(&PeriodicPoint::new(w("011"))));
    }

    fn brute_overlaps(s: &[Symbol]) -> Vec<usize> {
        let n = s.len();
        (1..n).filter(|&l| s[l..] == s[..n - l]).collect()
    }

    proptest! {
        #[test]
        fn overlaps_match_brute_force(s in prop::collection::vec(0u64..3, 2..24)) {
            let word = Word::new(s.clone()).unwrap();
            prop_assert_eq!(self_overlaps(&word), brute_overlaps(&s));
        }

        #[test]
        fn short_overlaps_at_periodic_cylinders_are_multiples_of_period(
            g in prop::collection::vec(0u64..3, 1..6),
            k in 2usize..12,
            extra in 0usize..5,
        ) {
            let x = PeriodicPoint::new(Word::new(g).unwrap());
            let m = x.period();
            let n = k * m + extra.min(m - 1);
            let a = cylinder_at(&x, n).unwrap();
            for l in self_overlaps(&a) {
                if l <= n - m {
                    prop_assert_eq!(l % m, 0);
                }
            }
            prop_assert_eq!(minimal_period(&cylinder_at(&x, k * m).unwrap()), m);
        }
    }
}
