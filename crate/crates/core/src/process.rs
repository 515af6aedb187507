//! Shift-invariant and fibred measures seen as symbol-generating processes.
//!
//! Every measure the return-count engines consume implements [`ShiftMeasure`]. The
//! engines never look at a model directly: they ask for a [`SymbolProcess`] that
//! distinguishes a given set of relevant symbols and lumps all others into one
//! class labelled [`SENTINEL`]. Lumping is exact for counting a fixed target,
//! because symbols absent from the target are interchangeable.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::symbolic::{Symbol, SENTINEL};

/// A finite-state description of the law of `x_0 x_1 … x_{len-1}`.
#[derive(Debug, Clone)]
pub enum SymbolProcess<T> {
    /// Independent positions: `weights[i][c]` is the probability of class `c` at position `i`.
    Independent { classes: Vec<Symbol>, weights: Vec<Vec<T>> },
    /// A stationary chain on context words. `initial` lists the first `context`
    /// classes with the resulting hidden state; `transitions[h]` lists
    /// `(class, next_hidden, probability)`.
    Markov {
        classes: Vec<Symbol>,
        context: usize,
        initial: Vec<(Vec<usize>, usize, T)>,
        transitions: Vec<Vec<(usize, usize, T)>>,
    },
}

impl<T: Real> SymbolProcess<T> {
    pub fn classes(&self) -> &[Symbol] {
        match self {
            SymbolProcess::Independent { classes, .. } | SymbolProcess::Markov { classes, .. } => {
                classes
            }
        }
    }

    pub fn class_of(&self, s: Symbol) -> Option<usize> {
        self.classes().iter().position(|&c| c == s)
    }

    pub fn hidden_count(&self) -> usize {
        match self {
            SymbolProcess::Independent { .. } => 1,
            SymbolProcess::Markov { transitions, .. } => transitions.len(),
        }
    }

    /// Mass of the set of words matching `pattern` (`None` is a wildcard).
    pub fn pattern_mass(&self, pattern: &[Option<Symbol>]) -> T {
        let class_ok = |pos: usize, class: usize| match pattern[pos] {
            None => true,
            Some(s) => self.classes()[class] == s,
        };
        match self {
            SymbolProcess::Independent { classes, weights } => {
                let mut acc = T::one();
                for (pos, want) in pattern.iter().enumerate() {
                    if let Some(s) = want {
                        match classes.iter().position(|c| c == s) {
                            Some(c) => acc = acc * weights[pos][c],
                            None => return T::zero(),
                        }
                    }
                }
                acc
            }
            SymbolProcess::Markov { context, initial, transitions, .. } => {
                let len = pattern.len();
                let mut alpha = vec![T::zero(); transitions.len()];
                for (prefix, h, pr) in initial {
                    let fits = prefix.iter().take(len).enumerate().all(|(i, &c)| class_ok(i, c));
                    if fits {
                        alpha[*h] = alpha[*h] + *pr;
                    }
                }
                for pos in *context..len {
                    let mut next = vec![T::zero(); transitions.len()];
                    for (h, &a) in alpha.iter().enumerate() {
                        if a == T::zero() {
                            continue;
                        }
                        for &(c, h2, pr) in &transitions[h] {
                            if class_ok(pos, c) {
                                next[h2] = next[h2] + a * pr;
                            }
                        }
                    }
                    alpha = next;
                }
                alpha.into_iter().sum()
            }
        }
    }

    /// Draws a word of `len` symbols (lumped symbols come out as [`SENTINEL`]).
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<Symbol> {
        let mut out = Vec::with_capacity(len);
        match self {
            SymbolProcess::Independent { classes, weights } => {
                for w in weights.iter().take(len) {
                    out.push(classes[pick(w.iter().copied(), rng)]);
                }
            }
            SymbolProcess::Markov { classes, initial, transitions, .. } => {
                let i = pick(initial.iter().map(|e| e.2), rng);
                let (prefix, mut h, _) = &initial[i];
                out.extend(prefix.iter().take(len).map(|&c| classes[c]));
                while out.len() < len {
                    let row = &transitions[h];
                    let k = pick(row.iter().map(|e| e.2), rng);
                    out.push(classes[row[k].0]);
                    h = row[k].1;
                }
            }
        }
        out
    }
}

/// Index drawn proportionally to `weights` (which sum to one up to rounding).
fn pick<T: Real, R: Rng + ?Sized>(weights: impl Iterator<Item = T> + Clone, rng: &mut R) -> usize {
    let u = T::c(rng.random::<f64>());
    let mut acc = T::zero();
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > T::zero() {
            last = i;
        }
        acc = acc + w;
        if u < acc {
            return i;
        }
    }
    last
}

/// A probability measure on one-sided sequences, possibly attached to an environment.
pub trait ShiftMeasure<T: Real>: Sync {
    /// Mass of the cylinder `[w]` placed at `offset`, i.e. `μ(σ^{-offset}[w])`.
    fn cylinder_mass(&self, w: &[Symbol], offset: usize) -> Result<T>;

    /// Size of the alphabet when it is finite; exhaustive oracles need it.
    fn finite_alphabet(&self) -> Option<usize>;

    /// Process for positions `0..len`, keeping at least the `relevant` symbols distinct.
    fn process(&self, relevant: &[Symbol], len: usize) -> Result<SymbolProcess<T>>;

    /// Upper bound on the per-position mass the sampler may lump into [`SENTINEL`].
    fn sentinel_mass_bound(&self) -> T {
        T::zero()
    }
}

/// Class list for an independent process: every symbol when the alphabet is finite,
/// otherwise the relevant ones plus a lumped remainder.
pub(crate) fn independent_classes(relevant: &[Symbol], finite: Option<usize>) -> Vec<Symbol> {
    match finite {
        Some(k) => (0..k as Symbol).collect(),
        None => {
            let mut v: Vec<Symbol> = relevant.iter().copied().filter(|&s| s != SENTINEL).collect();
            v.sort_unstable();
            v.dedup();
            v.push(SENTINEL);
            v
        }
    }
}

/// Errors when `needed` coordinates exceed the window.
pub(crate) fn check_window(needed: usize, available: usize) -> Result<()> {
    if needed > available {
        return Err(Error::WindowOverflow { needed, available });
    }
    Ok(())
}
