//! Random Bernoulli measure families driven by an i.i.d. environment.
//!
//! An environment `ω = (ω_0, ω_1, …)` is a finite window of driving coordinates.
//! The fibre measure `μ_ω` gives the cylinder `[w]` at offset `k` the mass
//! `Π_i p_{w_i}(ω_{k+i})`, and the marginal `μ = ∫ μ_ω dP` is Bernoulli with weights
//! `p̄_s = ∫ p_s(ω_0) dP`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::{check_window, independent_classes, ShiftMeasure, SymbolProcess};
use crate::scalar::{gauss_legendre, Real};
use crate::symbolic::{cylinder_at, PeriodicPoint, Symbol, Word, SENTINEL};

/// A fixed, finite draw of driving coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment<C> {
    coords: Vec<C>,
    seed: u64,
}

impl<C: Copy> Environment<C> {
    pub fn from_coords(coords: Vec<C>, seed: u64) -> Self {
        Environment { coords, seed }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn coords(&self) -> &[C] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> Result<C> {
        self.coords
            .get(i)
            .copied()
            .ok_or(Error::WindowOverflow { needed: i + 1, available: self.coords.len() })
    }
}

impl<C: Copy + fmt::Display> Environment<C> {
    /// CSV with columns `index,coordinate`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "coordinate"])?;
        for (i, c) in self.coords.iter().enumerate() {
            w.write_record([i.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Bounds describing the mixing behaviour of a model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingProfile<T> {
    pub psi: Psi<T>,
    /// Lower rate: `η_0^n ≤ μ(A)` for n-cylinders. `None` when no such bound exists.
    pub eta0: Option<T>,
    /// Upper rate: sup of the one-symbol fibre weights.
    pub eta1: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Psi<T> {
    Zero,
    Geometric { constant: T, rate: T },
    Tabulated(Vec<T>),
}

impl<T: Real> Psi<T> {
    pub fn at(&self, k: usize) -> T {
        match self {
            Psi::Zero => T::zero(),
            Psi::Geometric { constant, rate } => *constant * rate.powi(k as i32),
            Psi::Tabulated(v) => v.get(k).or(v.last()).copied().unwrap_or(T::zero()),
        }
    }
}

/// A family `{μ_ω}` of Bernoulli fibre measures whose weights at a position depend
/// only on the driving coordinate there.
pub trait BernoulliFamily<T: Real>: Sync {
    type Coord: Copy + Send + Sync + fmt::Display;

    fn draw_coord<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Coord;

    /// `p_s(c)`.
    fn symbol_weight(&self, c: Self::Coord, s: Symbol) -> T;

    /// `p̄_s`.
    fn marginal_weight(&self, s: Symbol) -> T;

    /// Finite alphabet size, `None` for countable alphabets.
    fn finite_alphabet(&self) -> Option<usize>;

    /// One symbol from `p_·(c)`; may return [`SENTINEL`] for truncated alphabets.
    fn sample_symbol<R: Rng + ?Sized>(&self, c: Self::Coord, rng: &mut R) -> Symbol;

    /// Per-position bound on the mass that [`Self::sample_symbol`] maps to [`SENTINEL`].
    fn tail_mass_bound(&self) -> T {
        T::zero()
    }

    fn mixing_profile(&self) -> MixingProfile<T>;
}

/// Two-symbol random Bernoulli measure: `p_0(ω) = α` if `ω_0 = 0` and `β` otherwise,
/// `p_1 = 1 - p_0`, with `ω_i` i.i.d. taking the value 0 with probability `driving_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoElementModel<T> {
    alpha: T,
    beta: T,
    driving_p: T,
}

impl<T: Real> TwoElementModel<T> {
    pub fn new(alpha: T, beta: T, driving_p: T) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("driving_p", driving_p)] {
            if !(v > T::zero() && v < T::one()) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(TwoElementModel { alpha, beta, driving_p })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn driving_p(&self) -> T {
        self.driving_p
    }

    fn zero_weight(&self, c: u8) -> T {
        if c == 0 {
            self.alpha
        } else {
            self.beta
        }
    }
}

impl<T: Real> BernoulliFamily<T> for TwoElementModel<T> {
    type Coord = u8;

    fn draw_coord<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        u8::from(T::c(rng.random::<f64>()) >= self.driving_p)
    }

    fn symbol_weight(&self, c: u8, s: Symbol) -> T {
        match s {
            0 => self.zero_weight(c),
            1 => T::one() - self.zero_weight(c),
            _ => T::zero(),
        }
    }

    fn marginal_weight(&self, s: Symbol) -> T {
        let (p, q) = (self.driving_p, T::one() - self.driving_p);
        match s {
            0 => self.alpha * p + self.beta * q,
            1 => (T::one() - self.alpha) * p + (T::one() - self.beta) * q,
            _ => T::zero(),
        }
    }

    fn finite_alphabet(&self) -> Option<usize> {
        Some(2)
    }

    fn sample_symbol<R: Rng + ?Sized>(&self, c: u8, rng: &mut R) -> Symbol {
        Symbol::from(T::c(rng.random::<f64>()) >= self.zero_weight(c))
    }

    fn mixing_profile(&self) -> MixingProfile<T> {
        let ws = [self.alpha, self.beta, T::one() - self.alpha, T::one() - self.beta];
        let eta1 = ws.iter().copied().fold(T::zero(), T::max);
        let eta0 = ws.iter().copied().fold(T::one(), T::min);
        MixingProfile { psi: Psi::Zero, eta0: Some(eta0), eta1 }
    }
}

/// Driving coordinate of the countable model together with its normalising constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountableCoord<T> {
    pub value: T,
    pub normalizer: T,
}

impl<T: Real> fmt::Display for CountableCoord<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.16e}", self.value)
    }
}

/// Symbols below this are summed term by term; beyond it sums use Euler-Maclaurin.
const DIRECT_TERMS: u64 = 64;
const QUAD_PANELS: usize = 8;
const QUAD_ORDER: usize = 16;

/// Countable-alphabet family with `p_n(ω_0) = G(ω_0) / (n log^{1+ω_0} n)` for `n ≥ 3`,
/// `p_1 = p_2 = 0`, and `ω_0` uniform on `[ε, 1]`.
#[derive(Debug, Clone)]
pub struct CountableModel<T> {
    epsilon: T,
    cutoff: Symbol,
    tail_mass_bound: T,
    /// Quadrature nodes over `[ε, 1]`: (node, weight / (1 - ε), G(node)).
    quad: Vec<(T, T, T)>,
}

pub const DEFAULT_ALPHABET_CUTOFF: Symbol = 1 << 40;

impl<T: Real> CountableModel<T> {
    pub fn new(epsilon: T, cutoff: Symbol) -> Result<Self> {
        if !(epsilon > T::zero() && epsilon < T::one()) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        if cutoff <= DIRECT_TERMS {
            return Err(Error::InvalidParameter(format!(
                "alphabet cutoff must exceed {DIRECT_TERMS}, got {cutoff}"
            )));
        }
        let span = T::one() - epsilon;
        let width = span / T::from_count(QUAD_PANELS as u64);
        let rule = gauss_legendre(QUAD_ORDER);
        let mut quad = Vec::with_capacity(QUAD_PANELS * QUAD_ORDER);
        for panel in 0..QUAD_PANELS {
            let mid = epsilon + width * (T::from_count(panel as u64) + T::c(0.5));
            for &(x, w) in &rule {
                let node = mid + width / T::c(2.0) * T::c(x);
                let weight = T::c(w) * width / T::c(2.0) / span;
                quad.push((node, weight, normalizer(node)));
            }
        }
        // G is increasing and (log S)^{-w}/w decreasing in w, so the worst case pairs G(1)
        // with w = ε.
        let ln_cut = T::from_count(cutoff).ln();
        let tail_mass_bound = normalizer(T::one()) * ln_cut.powf(-epsilon) / epsilon;
        Ok(CountableModel { epsilon, cutoff, tail_mass_bound, quad })
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn alphabet_cutoff(&self) -> Symbol {
        self.cutoff
    }

    /// Certified bound on `Σ_{n > S} p_n(ω_0)` over all `ω_0 ∈ [ε, 1]`.
    pub fn tail_mass_bound(&self) -> T {
        self.tail_mass_bound
    }

    pub fn coord(&self, value: T) -> CountableCoord<T> {
        CountableCoord { value, normalizer: normalizer(value) }
    }

    /// `P(X ≤ n)` under `p_·(c)`.
    pub fn cdf(&self, c: CountableCoord<T>, n: Symbol) -> T {
        if n < 3 {
            return T::zero();
        }
        if n <= DIRECT_TERMS {
            return c.normalizer * (3..=n).map(|k| series_term(c.value, k)).sum::<T>();
        }
        T::one() - c.normalizer * series_tail(c.value, n)
    }
}

/// `1 / (n log^{1+w} n)`.
fn series_term<T: Real>(w: T, n: Symbol) -> T {
    let x = T::from_count(n);
    T::one() / (x * x.ln().powf(T::one() + w))
}

/// `Σ_{k > n} 1/(k log^{1+w} k)` by Euler-Maclaurin; accurate for `n ≥ 64`.
fn series_tail<T: Real>(w: T, n: Symbol) -> T {
    let x = T::from_count(n);
    let l = x.ln();
    let a = T::one() + w;
    // f^{(d)}(x) = x^{-(d+1)} Σ_e c_e L^{-e}; start from h_0 = L^{-a}
    let mut h: Vec<(T, T)> = vec![(T::one(), a)];
    let mut derivs = Vec::with_capacity(6);
    for d in 0..=5u32 {
        let val: T = h.iter().map(|&(c, e)| c * l.powf(-e)).sum();
        derivs.push(val / x.powi(d as i32 + 1));
        // h_{d+1} = -(d+1) h_d + dh_d/dL
        let mut next: Vec<(T, T)> = h.iter().map(|&(c, e)| (-T::from_count(d as u64 + 1) * c, e)).collect();
        next.extend(h.iter().map(|&(c, e)| (-e * c, e + T::one())));
        h = next;
    }
    let integral = l.powf(-w) / w;
    let from_n = integral + derivs[0] / T::c(2.0) - derivs[1] / T::c(12.0) + derivs[3] / T::c(720.0)
        - derivs[5] / T::c(30240.0);
    from_n - derivs[0]
}

/// `G(w)` with `Σ_{n ≥ 3} G(w) / (n log^{1+w} n) = 1`.
fn normalizer<T: Real>(w: T) -> T {
    let head: T = (3..=DIRECT_TERMS).map(|k| series_term(w, k)).sum();
    T::one() / (head + series_tail(w, DIRECT_TERMS))
}

impl<T: Real> BernoulliFamily<T> for CountableModel<T> {
    type Coord = CountableCoord<T>;

    fn draw_coord<R: Rng + ?Sized>(&self, rng: &mut R) -> CountableCoord<T> {
        let u = T::c(rng.random::<f64>());
        self.coord(self.epsilon + (T::one() - self.epsilon) * u)
    }

    fn symbol_weight(&self, c: CountableCoord<T>, s: Symbol) -> T {
        if s < 3 || s == SENTINEL {
            return T::zero();
        }
        c.normalizer * series_term(c.value, s)
    }

    fn marginal_weight(&self, s: Symbol) -> T {
        if s < 3 || s == SENTINEL {
            return T::zero();
        }
        self.quad.iter().map(|&(w, q, g)| q * g * series_term(w, s)).sum()
    }

    fn finite_alphabet(&self) -> Option<usize> {
        None
    }

    /// Inverse-CDF sampling over `3..=S`; the remaining mass maps to [`SENTINEL`].
    fn sample_symbol<R: Rng + ?Sized>(&self, c: CountableCoord<T>, rng: &mut R) -> Symbol {
        let u = T::c(rng.random::<f64>());
        let mut acc = T::zero();
        for k in 3..=DIRECT_TERMS {
            acc = acc + c.normalizer * series_term(c.value, k);
            if u < acc {
                return k;
            }
        }
        if u >= self.cdf(c, self.cutoff) {
            return SENTINEL;
        }
        // smallest n in (DIRECT_TERMS, S] with cdf(n) > u
        let (mut lo, mut hi) = (DIRECT_TERMS, self.cutoff);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.cdf(c, mid) > u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    fn tail_mass_bound(&self) -> T {
        self.tail_mass_bound
    }

    fn mixing_profile(&self) -> MixingProfile<T> {
        // largest weight is p_3, maximised by G(1) and the smallest exponent 1 + ε
        let ln3 = T::c(3.0).ln();
        let eta1 = normalizer(T::one()) / (T::c(3.0) * ln3.powf(T::one() + self.epsilon));
        MixingProfile { psi: Psi::Zero, eta0: None, eta1 }
    }
}

/// i.i.d. environment of `window_length` coordinates, reproducible from `seed`.
pub fn draw_environment<T: Real, M: BernoulliFamily<T>>(
    model: &M,
    window_length: usize,
    seed: u64,
) -> Result<Environment<M::Coord>> {
    if window_length == 0 {
        return Err(Error::InvalidParameter("window length must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..window_length).map(|_| model.draw_coord(&mut rng)).collect();
    Ok(Environment { coords, seed })
}

/// `μ_{θ^offset ω}([w]) = Π_i p_{w_i}(ω_{offset+i})`.
pub fn fiber_cylinder_mass<T: Real, M: BernoulliFamily<T>>(
    model: &M,
    env: &Environment<M::Coord>,
    w: &[Symbol],
    offset: usize,
) -> Result<T> {
    check_window(offset + w.len(), env.len())?;
    Ok(w
        .iter()
        .zip(&env.coords[offset..])
        .map(|(&s, &c)| model.symbol_weight(c, s))
        .fold(T::one(), |a, b| a * b))
}

pub fn marginal_symbol_weight<T: Real, M: BernoulliFamily<T>>(model: &M, s: Symbol) -> T {
    model.marginal_weight(s)
}

/// `μ([w]) = Π_i p̄_{w_i}`.
pub fn marginal_cylinder_mass<T: Real, M: BernoulliFamily<T>>(model: &M, w: &[Symbol]) -> T {
    w.iter().map(|&s| model.marginal_weight(s)).fold(T::one(), |a, b| a * b)
}

/// `ϑ(x) = Π_s p̄_s^{N_s}` with `N_s` the number of occurrences of `s` in one period.
pub fn theta_closed_form<T: Real, M: BernoulliFamily<T>>(model: &M, x: &PeriodicPoint) -> Result<T> {
    let mut theta = T::one();
    for &s in x.generator().symbols() {
        let w = model.marginal_weight(s);
        if !(w > T::zero()) {
            return Err(Error::Domain(format!("symbol {s} has zero marginal weight")));
        }
        theta = theta * w;
    }
    Ok(theta)
}

/// `μ(A_{n+m}(x)) / μ(A_n(x))` for each `n`.
pub fn theta_ratio_sequence<T: Real, M: BernoulliFamily<T>>(
    model: &M,
    x: &PeriodicPoint,
    n_list: &[usize],
) -> Result<Vec<T>> {
    let m = x.period();
    n_list
        .iter()
        .map(|&n| {
            let long = cylinder_at(x, n + m)?;
            let short = cylinder_at(x, n)?;
            let denom = marginal_cylinder_mass(model, short.symbols());
            if denom == T::zero() {
                return Err(Error::Domain(format!("A_{n}(x) has zero mass")));
            }
            Ok(marginal_cylinder_mass(model, long.symbols()) / denom)
        })
        .collect()
}

/// `x ~ μ_ω` restricted to its first `length` symbols.
pub fn sample_fiber_point<T: Real, M: BernoulliFamily<T>, R: Rng + ?Sized>(
    model: &M,
    env: &Environment<M::Coord>,
    length: usize,
    rng: &mut R,
) -> Result<Word> {
    check_window(length, env.len())?;
    Word::new(env.coords[..length].iter().map(|&c| model.sample_symbol(c, rng)).collect())
}

/// The fibre measure `μ_ω` for a fixed environment.
#[derive(Debug, Clone, Copy)]
pub struct Fiber<'a, M, C> {
    pub model: &'a M,
    pub env: &'a Environment<C>,
}

impl<'a, M, C> Fiber<'a, M, C> {
    pub fn new(model: &'a M, env: &'a Environment<C>) -> Self {
        Fiber { model, env }
    }
}

impl<'a, T: Real, M: BernoulliFamily<T>> ShiftMeasure<T> for Fiber<'a, M, M::Coord> {
    fn cylinder_mass(&self, w: &[Symbol], offset: usize) -> Result<T> {
        fiber_cylinder_mass(self.model, self.env, w, offset)
    }

    fn finite_alphabet(&self) -> Option<usize> {
        self.model.finite_alphabet()
    }

    fn process(&self, relevant: &[Symbol], len: usize) -> Result<SymbolProcess<T>> {
        check_window(len, self.env.len())?;
        let classes = independent_classes(relevant, self.model.finite_alphabet());
        let weights = self.env.coords[..len]
            .iter()
            .map(|&c| lumped_weights(&classes, |s| self.model.symbol_weight(c, s)))
            .collect();
        Ok(SymbolProcess::Independent { classes, weights })
    }

    fn sentinel_mass_bound(&self) -> T {
        self.model.tail_mass_bound()
    }
}

/// The marginal (annealed) measure `μ`.
#[derive(Debug, Clone, Copy)]
pub struct Marginal<'a, M> {
    pub model: &'a M,
}

impl<'a, T: Real, M: BernoulliFamily<T>> ShiftMeasure<T> for Marginal<'a, M> {
    fn cylinder_mass(&self, w: &[Symbol], _offset: usize) -> Result<T> {
        Ok(marginal_cylinder_mass(self.model, w))
    }

    fn finite_alphabet(&self) -> Option<usize> {
        self.model.finite_alphabet()
    }

    fn process(&self, relevant: &[Symbol], len: usize) -> Result<SymbolProcess<T>> {
        let classes = independent_classes(relevant, self.model.finite_alphabet());
        let row = lumped_weights(&classes, |s| self.model.marginal_weight(s));
        Ok(SymbolProcess::Independent { classes, weights: vec![row; len] })
    }

    fn sentinel_mass_bound(&self) -> T {
        self.model.tail_mass_bound()
    }
}

/// Class weights with the [`SENTINEL`] class (if present) taking the remaining mass.
fn lumped_weights<T: Real>(classes: &[Symbol], weight: impl Fn(Symbol) -> T) -> Vec<T> {
    let mut row: Vec<T> = classes
        .iter()
        .map(|&s| if s == SENTINEL { T::zero() } else { weight(s) })
        .collect();
    if let Some(i) = classes.iter().position(|&s| s == SENTINEL) {
        let named: T = row.iter().copied().sum();
        row[i] = (T::one() - named).max(T::zero());
    }
    row
}

/// Worst relative deviation from independence found by [`check_psi_mixing`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingReport<T> {
    pub max_deviation: T,
    /// `(A, B, k)` attaining the maximum.
    pub worst: Option<(Word, Word, usize)>,
    pub pairs_checked: usize,
}

/// Max over `A, B` in the pool and `k` in `gaps` of
/// `|μ(A ∩ σ^{-|A|-k} B) - μ(A) μ(σ^{-|A|-k} B)| / (μ(A) μ(σ^{-|A|-k} B))`.
/// Pairs with a null factor are skipped.
pub fn check_psi_mixing<T: Real, S: ShiftMeasure<T> + ?Sized>(
    measure: &S,
    gaps: &[usize],
    pool: &[Word],
) -> Result<MixingReport<T>> {
    let mut report = MixingReport { max_deviation: T::zero(), worst: None, pairs_checked: 0 };
    for a in pool {
        for b in pool {
            for &k in gaps {
                let shift = a.len() + k;
                let len = shift + b.len();
                let mut relevant = a.symbols().to_vec();
                relevant.extend_from_slice(b.symbols());
                let process = measure.process(&relevant, len)?;
                let mut pattern: Vec<Option<Symbol>> = vec![None; len];
                for (i, &s) in a.symbols().iter().enumerate() {
                    pattern[i] = Some(s);
                }
                for (i, &s) in b.symbols().iter().enumerate() {
                    pattern[shift + i] = Some(s);
                }
                let joint = process.pattern_mass(&pattern);
                let product = measure.cylinder_mass(a.symbols(), 0)? * measure.cylinder_mass(b.symbols(), shift)?;
                if !(product > T::zero()) {
                    continue;
                }
                report.pairs_checked += 1;
                let dev = (joint - product).abs() / product;
                if dev > report.max_deviation || report.worst.is_none() {
                    report.max_deviation = report.max_deviation.max(dev);
                    report.worst = Some((a.clone(), b.clone(), k));
                }
            }
        }
    }
    Ok(report)
}
