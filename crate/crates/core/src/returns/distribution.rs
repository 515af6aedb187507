use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::counting::count_returns;
use crate::error::{Error, Result};
use crate::process::{ShiftMeasure, SymbolProcess};
use crate::rng::derive_seed;
use crate::scalar::{binomial, pairwise_sum, Real};
use crate::symbolic::{border_array, Symbol, Word};

pub const DEFAULT_R_MAX: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Engine {
    #[serde(rename = "exact-dp")]
    ExactDp,
    #[serde(rename = "enumeration")]
    Enumeration,
    #[serde(rename = "monte-carlo")]
    MonteCarlo,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::ExactDp => "exact-dp",
            Engine::Enumeration => "enumeration",
            Engine::MonteCarlo => "monte-carlo",
        }
    }

    pub fn is_exact(self) -> bool {
        !matches!(self, Engine::MonteCarlo)
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// Law of a return count on `0..=r_max`, with everything above in `tail_mass`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountDistribution<T> {
    pub masses: Vec<T>,
    pub tail_mass: T,
    pub engine: Engine,
    /// Bound on the downward bias from symbols the engine could not represent.
    pub bias_bound: T,
    /// Number of samples behind a Monte Carlo estimate.
    pub trials: Option<u64>,
}

impl<T: Real> CountDistribution<T> {
    pub fn point_mass_at_zero(r_max: usize, engine: Engine) -> Self {
        let mut masses = vec![T::zero(); r_max + 1];
        masses[0] = T::one();
        CountDistribution { masses, tail_mass: T::zero(), engine, bias_bound: T::zero(), trials: None }
    }

    pub fn r_max(&self) -> usize {
        self.masses.len() - 1
    }

    pub fn mass(&self, r: usize) -> T {
        self.masses.get(r).copied().unwrap_or(T::zero())
    }

    pub fn total(&self) -> T {
        pairwise_sum(&self.masses) + self.tail_mass
    }

    /// `Σ_r r · P(ζ = r)` over the represented range.
    pub fn truncated_mean(&self) -> T {
        self.masses.iter().enumerate().map(|(r, &m)| T::from_count(r as u64) * m).sum()
    }

    /// `Σ_r C(r, k) · P(ζ = r)` over the represented range.
    pub fn binomial_moment(&self, k: u64) -> T {
        self.masses
            .iter()
            .enumerate()
            .map(|(r, &m)| binomial::<T>(r as u64, k) * m)
            .sum()
    }

    /// Monte Carlo standard error of `masses[r]`; zero for exact engines.
    pub fn standard_error(&self, r: usize) -> T {
        match self.trials {
            Some(n) => {
                let p = self.mass(r);
                (p * (T::one() - p) / T::from_count(n)).sqrt()
            }
            None => T::zero(),
        }
    }

    /// CSV with columns `r,mass,engine,tail_mass,bias_bound`; numbers carry 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "mass", "engine", "tail_mass", "bias_bound"])?;
        let tail = fmt_num(self.tail_mass);
        let bias = fmt_num(self.bias_bound);
        for (r, &m) in self.masses.iter().enumerate() {
            w.write_record([r.to_string(), fmt_num(m), self.engine.to_string(), tail.clone(), bias.clone()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Round-trip decimal form with 17 significant digits.
pub fn fmt_num<T: Real>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

/// KMP automaton over the classes of a process. State `q` is the length of the
/// matched prefix; state `n` means a full match ended at the current position.
fn build_automaton(target: &[Symbol], classes: &[Symbol]) -> Vec<Vec<usize>> {
    let n = target.len();
    let border = border_array(target);
    (0..=n)
        .map(|q0| {
            classes
                .iter()
                .map(|&s| {
                    let mut q = if q0 == n { border[n - 1] } else { q0 };
                    while q > 0 && target[q] != s {
                        q = border[q - 1];
                    }
                    if target[q] == s {
                        q += 1;
                    }
                    q
                })
                .collect()
        })
        .collect()
}

fn check_budget(what: &'static str, needed: u128, budget: u128) -> Result<()> {
    if needed > budget {
        return Err(Error::BudgetExceeded { what, needed, budget });
    }
    Ok(())
}

/// Exact law of `ζ` by forward dynamic programming over
/// (automaton state, hidden process state, count clamped at `r_max + 1`).
pub fn exact_count_distribution<T: Real, S: ShiftMeasure<T> + ?Sized>(
    measure: &S,
    target: &Word,
    horizon: usize,
    r_max: usize,
    budget: u128,
) -> Result<CountDistribution<T>> {
    if horizon == 0 {
        return Ok(CountDistribution::point_mass_at_zero(r_max, Engine::ExactDp));
    }
    let n = target.len();
    let len = horizon + n;
    let process = measure.process(target.symbols(), len)?;
    let hidden = process.hidden_count();
    let buckets = r_max + 2;
    let cells = (n + 1) * hidden * buckets;
    let classes = process.classes().len();
    check_budget("exact-dp state updates", (len as u128) * (cells as u128) * (classes as u128), budget)?;

    let delta = build_automaton(target.symbols(), process.classes());
    let at = |q: usize, h: usize, c: usize| (q * hidden + h) * buckets + c;
    let mut dist = vec![T::zero(); cells];
    let mut next = vec![T::zero(); cells];
    // counts reached so far are bounded by the number of completed positions
    let mut reach = 0usize;

    let bump = |q_next: usize, pos: usize, c: usize| {
        if q_next == n && pos >= n {
            (c + 1).min(r_max + 1)
        } else {
            c
        }
    };

    let start_pos = match &process {
        SymbolProcess::Independent { .. } => {
            dist[at(0, 0, 0)] = T::one();
            0
        }
        SymbolProcess::Markov { context, initial, .. } => {
            let ctx = (*context).min(len);
            for (prefix, h, pr) in initial {
                let (mut q, mut c) = (0usize, 0usize);
                for (pos, &cls) in prefix.iter().take(ctx).enumerate() {
                    q = delta[q][cls];
                    c = bump(q, pos, c);
                }
                let i = at(q, *h, c);
                dist[i] = dist[i] + *pr;
            }
            reach = ctx.min(buckets - 1);
            ctx
        }
    };

    for pos in start_pos..len {
        next.iter_mut().for_each(|x| *x = T::zero());
        let c_hi = reach.min(buckets - 1);
        match &process {
            SymbolProcess::Independent { weights, .. } => {
                let row = &weights[pos];
                for q in 0..=n {
                    for (cls, &w) in row.iter().enumerate() {
                        if w == T::zero() {
                            continue;
                        }
                        let q2 = delta[q][cls];
                        for c in 0..=c_hi {
                            let v = dist[at(q, 0, c)];
                            if v == T::zero() {
                                continue;
                            }
                            let j = at(q2, 0, bump(q2, pos, c));
                            next[j] = next[j] + v * w;
                        }
                    }
                }
            }
            SymbolProcess::Markov { transitions, .. } => {
                for q in 0..=n {
                    for (h, row) in transitions.iter().enumerate() {
                        for &(cls, h2, w) in row {
                            let q2 = delta[q][cls];
                            for c in 0..=c_hi {
                                let v = dist[at(q, h, c)];
                                if v == T::zero() {
                                    continue;
                                }
                                let j = at(q2, h2, bump(q2, pos, c));
                                next[j] = next[j] + v * w;
                            }
                        }
                    }
                }
            }
        }
        std::mem::swap(&mut dist, &mut next);
        reach = (reach + 1).min(buckets - 1);
    }

    let mut masses = vec![T::zero(); buckets];
    for q in 0..=n {
        for h in 0..hidden {
            for (c, m) in masses.iter_mut().enumerate() {
                *m = *m + dist[at(q, h, c)];
            }
        }
    }
    let tail_mass = masses.pop().unwrap();
    Ok(CountDistribution { masses, tail_mass, engine: Engine::ExactDp, bias_bound: T::zero(), trials: None })
}

/// Law of `ζ` by summing `μ([z])` over every word `z` of length `N + n`.
/// Independent of the automaton and of the process representation.
pub fn exhaustive_count_distribution<T: Real, S: ShiftMeasure<T> + ?Sized>(
    measure: &S,
    target: &Word,
    horizon: usize,
    r_max: usize,
    budget: u128,
) -> Result<CountDistribution<T>> {
    let k = measure
        .finite_alphabet()
        .ok_or_else(|| Error::InvalidParameter("exhaustive enumeration needs a finite alphabet".into()))?;
    let len = horizon + target.len();
    let words = (k as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    check_budget("exhaustive words", words, budget)?;
    let mut masses = vec![T::zero(); r_max + 2];
    let mut z: Vec<Symbol> = vec![0; len];
    loop {
        let m = measure.cylinder_mass(&z, 0)?;
        if m > T::zero() {
            let c = (count_returns(&z, target, horizon)? as usize).min(r_max + 1);
            masses[c] = masses[c] + m;
        }
        // odometer increment, last position fastest
        let mut i = len;
        loop {
            if i == 0 {
                let tail_mass = masses.pop().unwrap();
                return Ok(CountDistribution {
                    masses,
                    tail_mass,
                    engine: Engine::Enumeration,
                    bias_bound: T::zero(),
                    trials: None,
                });
            }
            i -= 1;
            z[i] += 1;
            if (z[i] as usize) < k {
                break;
            }
            z[i] = 0;
        }
    }
}

const MC_CHUNK: u64 = 4096;

/// Empirical law of `ζ` from `trials` independent words. Trial `i` uses the stream
/// seeded by `derive_seed(&[master_seed, stream_id, i])`, so the histogram does not
/// depend on thread count.
pub fn monte_carlo_count_distribution<T: Real, S: ShiftMeasure<T> + ?Sized>(
    measure: &S,
    target: &Word,
    horizon: usize,
    r_max: usize,
    trials: u64,
    master_seed: u64,
    stream_id: u64,
) -> Result<CountDistribution<T>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least one trial".into()));
    }
    let len = horizon + target.len();
    let process = measure.process(target.symbols(), len)?;
    let chunks = trials.div_ceil(MC_CHUNK);
    let histograms: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut hist = vec![0u64; r_max + 2];
            let lo = chunk * MC_CHUNK;
            for trial in lo..(lo + MC_CHUNK).min(trials) {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[master_seed, stream_id, trial]));
                let z = process.sample(len, &mut rng);
                let c = count_returns(&z, target, horizon).expect("sampled word has full length") as usize;
                hist[c.min(r_max + 1)] += 1;
            }
            hist
        })
        .collect();
    let mut hist = vec![0u64; r_max + 2];
    for h in histograms {
        for (a, b) in hist.iter_mut().zip(h) {
            *a += b;
        }
    }
    let scale = T::from_count(trials);
    let mut masses: Vec<T> = hist.iter().map(|&c| T::from_count(c) / scale).collect();
    let tail_mass = masses.pop().unwrap();
    Ok(CountDistribution {
        masses,
        tail_mass,
        engine: Engine::MonteCarlo,
        bias_bound: T::zero(),
        trials: Some(trials),
    })
}
