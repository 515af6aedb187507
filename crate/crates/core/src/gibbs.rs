//! Ruelle transfer operators for locally constant potentials on finite mixing SFTs.
//!
//! A potential of depth `k` depends on `x_0 … x_{k-1}`. The operator
//! `(L g)(x) = Σ_{a: ax admissible} e^{f(ax)} g(ax)` acts on functions of the first
//! `L = max(k-1, 1)` coordinates, so it is a matrix indexed by admissible `L`-words:
//! `M[u][u'] = e^{f(au)}` where `u' = prefix_L(au)`.
//!
//! With Perron data `M h = λ h`, `ν M = λ ν`, the normalised potential
//! `f̃ = f - log λ + log h - log h∘σ` satisfies `L̃ 1 = 1`, and the Gibbs state is
//! the Markov measure with state masses `h·ν` and cylinder masses
//! `μ[w] = μ_state(w_{n-L} … w_{n-1}) · Π_{i ≤ n-L-1} e^{f̃(w_i … w_{i+L})}`.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::{ShiftMeasure, SymbolProcess};
use crate::scalar::Real;
use crate::symbolic::{cylinder_at, PeriodicPoint, Symbol, TransitionMatrix};

/// Matrices up to this size get a dense inverse-iteration refinement.
const DENSE_LIMIT: usize = 64;
const ITERATION_CAP: usize = 1_000_000;
const RESIDUAL_TOL: f64 = 1e-12;

/// Locally constant potential: a value per admissible word of length `depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential<T> {
    depth: usize,
    values: HashMap<Vec<Symbol>, T>,
}

impl<T: Real> Potential<T> {
    /// Checks that `values` covers exactly the admissible `depth`-words.
    pub fn new(
        depth: usize,
        values: HashMap<Vec<Symbol>, T>,
        transitions: &TransitionMatrix,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidParameter("potential depth must be at least 1".into()));
        }
        let words = admissible_words(transitions, depth);
        if words.len() != values.len() || words.iter().any(|w| !values.contains_key(w)) {
            return Err(Error::InvalidParameter(format!(
                "potential must define exactly the {} admissible words of length {depth}",
                words.len()
            )));
        }
        if let Some((w, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("potential value {v} at {w:?} is not finite")));
        }
        Ok(Potential { depth, values })
    }

    pub fn from_fn(depth: usize, transitions: &TransitionMatrix, f: impl Fn(&[Symbol]) -> T) -> Result<Self> {
        let values = admissible_words(transitions, depth)
            .into_iter()
            .map(|w| {
                let v = f(&w);
                (w, v)
            })
            .collect();
        Potential::new(depth, values, transitions)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `f(w)` reading the first `depth` symbols of `w`.
    pub fn value(&self, w: &[Symbol]) -> Option<T> {
        self.values.get(w.get(..self.depth)?).copied()
    }

    /// Entries sorted by word.
    pub fn entries(&self) -> Vec<(Vec<Symbol>, T)> {
        let mut v: Vec<_> = self.values.iter().map(|(w, &x)| (w.clone(), x)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

/// All admissible words of a given length, in lexicographic order.
pub fn admissible_words(transitions: &TransitionMatrix, len: usize) -> Vec<Vec<Symbol>> {
    let k = transitions.size() as Symbol;
    let mut words: Vec<Vec<Symbol>> = (0..k).map(|s| vec![s]).collect();
    for _ in 1..len {
        words = words
            .into_iter()
            .flat_map(|w| {
                let last = *w.last().unwrap();
                (0..k).filter(move |&b| transitions.allows(last, b)).map(move |b| {
                    let mut v = w.clone();
                    v.push(b);
                    v
                })
            })
            .collect();
    }
    words
}

/// Transfer matrix over admissible `L`-word states.
#[derive(Debug, Clone)]
pub struct TransferMatrix<T> {
    state_len: usize,
    states: Vec<Vec<Symbol>>,
    index: HashMap<Vec<Symbol>, usize>,
    entries: Vec<Vec<T>>,
}

impl<T: Real> TransferMatrix<T> {
    pub fn state_len(&self) -> usize {
        self.state_len
    }

    pub fn states(&self) -> &[Vec<Symbol>] {
        &self.states
    }

    pub fn entries(&self) -> &[Vec<T>] {
        &self.entries
    }

    pub fn state_index(&self, w: &[Symbol]) -> Option<usize> {
        self.index.get(w).copied()
    }
}

pub fn build_transfer_matrix<T: Real>(
    potential: &Potential<T>,
    transitions: &TransitionMatrix,
) -> Result<TransferMatrix<T>> {
    if transitions.mixing_exponent().is_none() {
        return Err(Error::NotMixing(format!(
            "no power A^k with k <= {} is strictly positive",
            transitions.size() * transitions.size()
        )));
    }
    let state_len = potential.depth().saturating_sub(1).max(1);
    let states = admissible_words(transitions, state_len);
    let index: HashMap<_, _> = states.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
    let n = states.len();
    let mut entries = vec![vec![T::zero(); n]; n];
    for (i, u) in states.iter().enumerate() {
        for a in 0..transitions.size() as Symbol {
            if !transitions.allows(a, u[0]) {
                continue;
            }
            let mut au = Vec::with_capacity(state_len + 1);
            au.push(a);
            au.extend_from_slice(u);
            let f = potential
                .value(&au)
                .ok_or_else(|| Error::InvalidParameter(format!("potential undefined at {au:?}")))?;
            let j = index[&au[..state_len]];
            entries[i][j] = entries[i][j] + f.exp();
        }
    }
    Ok(TransferMatrix { state_len, states, index, entries })
}

/// Leading eigenvalue with positive right (`h`) and left (`ν`) eigenvectors,
/// normalised so that `Σ ν = 1` and `ν · h = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerronData<T> {
    pub lambda: T,
    pub h: Vec<T>,
    pub nu: Vec<T>,
}

pub fn perron_eigendata<T: Real>(matrix: &[Vec<T>]) -> Result<PerronData<T>> {
    let n = matrix.len();
    if n == 0 || matrix.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParameter("matrix must be square and nonempty".into()));
    }
    if matrix.iter().flatten().any(|&x| x < T::zero() || !x.is_finite()) {
        return Err(Error::InvalidParameter("matrix entries must be finite and nonnegative".into()));
    }
    let transpose: Vec<Vec<T>> = (0..n).map(|j| (0..n).map(|i| matrix[i][j]).collect()).collect();
    let (lambda, mut h) = leading_vector(matrix)?;
    let (_, mut nu) = leading_vector(&transpose)?;
    let s: T = nu.iter().copied().sum();
    nu.iter_mut().for_each(|x| *x = *x / s);
    let dot: T = nu.iter().zip(&h).map(|(&a, &b)| a * b).sum();
    h.iter_mut().for_each(|x| *x = *x / dot);
    Ok(PerronData { lambda, h, nu })
}

fn mat_vec<T: Real>(m: &[Vec<T>], v: &[T]) -> Vec<T> {
    m.iter().map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum()).collect()
}

fn residual<T: Real>(m: &[Vec<T>], lambda: T, v: &[T]) -> T {
    let mv = mat_vec(m, v);
    let num = mv.iter().zip(v).map(|(&a, &b)| (a - lambda * b).abs()).fold(T::zero(), T::max);
    let den = v.iter().map(|&b| (lambda * b).abs()).fold(T::zero(), T::max);
    num / den
}

/// Power iteration on `M + I` (same eigenvector, spectral gap never worse), followed by
/// dense inverse iteration for small matrices.
fn leading_vector<T: Real>(m: &[Vec<T>]) -> Result<(T, Vec<T>)> {
    let n = m.len();
    let tol = T::c(RESIDUAL_TOL).max(T::epsilon() * T::c(64.0));
    let mut v = vec![T::one() / T::from_count(n as u64); n];
    let mut lambda = T::zero();
    let rough = if n <= DENSE_LIMIT { T::c(1e-6).max(tol) } else { tol };
    let mut res = T::infinity();
    let mut iterations = 0;
    while iterations < ITERATION_CAP {
        iterations += 1;
        let mv = mat_vec(m, &v);
        let w: Vec<T> = mv.iter().zip(&v).map(|(&a, &b)| a + b).collect();
        let s: T = w.iter().copied().sum();
        if !(s > T::zero()) {
            return Err(Error::InvalidParameter("matrix annihilates the positive cone".into()));
        }
        v = w.into_iter().map(|x| x / s).collect();
        if iterations % 8 == 0 {
            lambda = rayleigh(m, &v);
            res = residual(m, lambda, &v);
            if res < rough {
                break;
            }
        }
    }
    if n <= DENSE_LIMIT {
        for _ in 0..8 {
            if res < tol {
                break;
            }
            let shift = lambda * (T::one() + T::c(1e3) * T::epsilon());
            let Some(y) = solve_shifted(m, shift, &v) else { break };
            let s: T = y.iter().copied().sum();
            v = y.into_iter().map(|x| (x / s).abs()).collect();
            lambda = rayleigh(m, &v);
            res = residual(m, lambda, &v);
        }
    }
    if res >= tol {
        return Err(Error::NoConvergence { iterations, residual: res.as_f64() });
    }
    Ok((lambda, v))
}

fn rayleigh<T: Real>(m: &[Vec<T>], v: &[T]) -> T {
    let mv = mat_vec(m, v);
    mv.iter().copied().sum::<T>() / v.iter().copied().sum::<T>()
}

/// Solves `(M - shift·I) y = b` by Gaussian elimination with partial pivoting.
fn solve_shifted<T: Real>(m: &[Vec<T>], shift: T, b: &[T]) -> Option<Vec<T>> {
    let n = m.len();
    let mut a: Vec<Vec<T>> = m.to_vec();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = row[i] - shift;
    }
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col] == T::zero() {
            return None;
        }
        a.swap(col, piv);
        x.swap(col, piv);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            if factor != T::zero() {
                for c in col..n {
                    a[r][c] = a[r][c] - factor * a[col][c];
                }
                x[r] = x[r] - factor * x[col];
            }
        }
    }
    for col in (0..n).rev() {
        let s: T = (col + 1..n).map(|c| a[col][c] * x[c]).sum();
        x[col] = (x[col] - s) / a[col][col];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// `f̃ = f - log λ + log h - log h∘σ`, a potential of depth `L + 1`.
pub fn normalize_potential<T: Real>(
    potential: &Potential<T>,
    matrix: &TransferMatrix<T>,
    perron: &PerronData<T>,
    transitions: &TransitionMatrix,
) -> Result<Potential<T>> {
    let l = matrix.state_len();
    let ln_lambda = perron.lambda.ln();
    Potential::from_fn(l + 1, transitions, |w| {
        let head = matrix.index[&w[..l]];
        let tail = matrix.index[&w[1..=l]];
        potential.value(w).expect("admissible word") - ln_lambda + perron.h[head].ln() - perron.h[tail].ln()
    })
}

/// Geometric fit `deviation ≈ constant · rate^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit<T> {
    pub constant: T,
    pub rate: T,
    /// Deviations at or below this level count as exact.
    pub floor: T,
    /// With `rate == 0`: the first `n` from which every deviation is at the floor.
    pub exact_from: Option<usize>,
}

impl<T: Real> DecayFit<T> {
    pub fn bound(&self, n: usize) -> T {
        let scale = match self.exact_from {
            Some(n0) if self.rate == T::zero() => {
                if n < n0 {
                    T::one()
                } else {
                    T::zero()
                }
            }
            None if self.rate == T::zero() => T::one(),
            _ => self.rate.powi(n as i32),
        };
        self.constant * scale + self.floor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioConvergence<T> {
    pub theta: T,
    /// `(n, μ(A_{n+m}) / μ(A_n), |ratio - ϑ|)`.
    pub rows: Vec<(usize, T, T)>,
    pub fit: DecayFit<T>,
}

impl<T: Real> RatioConvergence<T> {
    /// Whether every deviation is within `constant · rate^n` (plus the exactness floor).
    pub fn bounded_by_fit(&self) -> bool {
        self.rows
            .iter()
            .all(|&(n, _, d)| d <= self.fit.bound(n))
    }
}

/// Least-squares fit of `log d_n` against `n` over deviations above `floor`.
/// With fewer than two such points the convergence is exact and the rate is 0.
pub fn fit_geometric_decay<T: Real>(rows: &[(usize, T)], floor: T) -> DecayFit<T> {
    let pts: Vec<(T, T)> = rows
        .iter()
        .filter(|(_, d)| *d > floor)
        .map(|&(n, d)| (T::from_count(n as u64), d.ln()))
        .collect();
    if pts.len() < 2 {
        let constant = rows.iter().map(|r| r.1).fold(T::zero(), T::max);
        let exact_from = rows
            .iter()
            .rposition(|r| r.1 > floor)
            .map_or(rows.first().map(|r| r.0), |i| rows.get(i + 1).map(|r| r.0));
        return DecayFit { constant, rate: T::zero(), floor, exact_from };
    }
    let k = T::from_count(pts.len() as u64);
    let mx = pts.iter().map(|p| p.0).sum::<T>() / k;
    let my = pts.iter().map(|p| p.1).sum::<T>() / k;
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let rate = (sxy / sxx).exp();
    // smallest constant that dominates every point
    let constant = rows
        .iter()
        .map(|&(n, d)| d / rate.powi(n as i32))
        .fold(T::zero(), T::max);
    DecayFit { constant, rate, floor, exact_from: None }
}

/// A normalised Gibbs state for a deterministic locally constant potential.
#[derive(Debug, Clone)]
pub struct GibbsSystem<T> {
    transitions: TransitionMatrix,
    potential: Potential<T>,
    matrix: TransferMatrix<T>,
    perron: PerronData<T>,
    normalized: Potential<T>,
    /// `μ` on the `L`-word states, `h_i ν_i`.
    state_mass: Vec<T>,
}

impl<T: Real> GibbsSystem<T> {
    pub fn new(potential: Potential<T>, transitions: TransitionMatrix) -> Result<Self> {
        let matrix = build_transfer_matrix(&potential, &transitions)?;
        let perron = perron_eigendata(matrix.entries())?;
        let normalized = normalize_potential(&potential, &matrix, &perron, &transitions)?;
        let state_mass = perron.h.iter().zip(&perron.nu).map(|(&a, &b)| a * b).collect();
        Ok(GibbsSystem { transitions, potential, matrix, perron, normalized, state_mass })
    }

    /// Bernoulli measure with weights `p` as the Gibbs state of `f(x) = log p_{x_0}`.
    pub fn bernoulli(weights: &[T]) -> Result<Self> {
        let tm = TransitionMatrix::full(weights.len());
        let pot = Potential::from_fn(1, &tm, |w| weights[w[0] as usize].ln())?;
        GibbsSystem::new(pot, tm)
    }

    pub fn transitions(&self) -> &TransitionMatrix {
        &self.transitions
    }

    pub fn potential(&self) -> &Potential<T> {
        &self.potential
    }

    pub fn normalized_potential(&self) -> &Potential<T> {
        &self.normalized
    }

    pub fn perron(&self) -> &PerronData<T> {
        &self.perron
    }

    pub fn transfer_matrix(&self) -> &TransferMatrix<T> {
        &self.matrix
    }

    /// Transfer matrix of `f̃`.
    pub fn normalized_matrix(&self) -> Result<TransferMatrix<T>> {
        build_transfer_matrix(&self.normalized, &self.transitions)
    }

    fn state_len(&self) -> usize {
        self.matrix.state_len()
    }

    /// `μ([w])`; zero for inadmissible words.
    pub fn cylinder_mass(&self, w: &[Symbol]) -> T {
        if w.is_empty() {
            return T::one();
        }
        if !self.transitions.is_admissible(w) {
            return T::zero();
        }
        let l = self.state_len();
        let n = w.len();
        if n <= l {
            return self
                .matrix
                .states
                .iter()
                .zip(&self.state_mass)
                .filter(|(s, _)| s.starts_with(w))
                .map(|(_, &m)| m)
                .sum();
        }
        let tail = self.matrix.index[&w[n - l..]];
        let log_weight: T = (0..n - l)
            .map(|i| self.normalized.value(&w[i..i + l + 1]).expect("admissible"))
            .sum();
        self.state_mass[tail] * log_weight.exp()
    }

    /// `ϑ(x) = exp Σ_{j<m} f̃(σ^j x)`.
    pub fn theta(&self, x: &PeriodicPoint) -> Result<T> {
        if !self.transitions.admits_orbit(x) {
            return Err(Error::Inadmissible(format!("periodic orbit {x} violates the transitions")));
        }
        let l = self.state_len();
        let m = x.period();
        let sum: T = (0..m)
            .map(|j| {
                let w: Vec<Symbol> = (0..=l).map(|i| x.symbol_at(j + i)).collect();
                self.normalized.value(&w).expect("admissible orbit")
            })
            .sum();
        Ok(sum.exp())
    }

    /// Ratios `μ(A_{n+m}(x)) / μ(A_n(x))` for `n = 1..=n_max` with their distance to `ϑ`.
    pub fn theta_ratio_convergence(&self, x: &PeriodicPoint, n_max: usize) -> Result<RatioConvergence<T>> {
        let m = x.period();
        if n_max < 2 * m {
            return Err(Error::InvalidParameter(format!("n_max = {n_max} must be at least 2m = {}", 2 * m)));
        }
        let theta = self.theta(x)?;
        let mut rows = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let short = self.cylinder_mass(cylinder_at(x, n)?.symbols());
            let long = self.cylinder_mass(cylinder_at(x, n + m)?.symbols());
            let ratio = long / short;
            rows.push((n, ratio, (ratio - theta).abs()));
        }
        let floor = T::epsilon() * T::c(64.0) * theta;
        let fit = fit_geometric_decay(&rows.iter().map(|r| (r.0, r.2)).collect::<Vec<_>>(), floor);
        Ok(RatioConvergence { theta, rows, fit })
    }
}

impl<T: Real> ShiftMeasure<T> for GibbsSystem<T> {
    fn cylinder_mass(&self, w: &[Symbol], _offset: usize) -> Result<T> {
        Ok(GibbsSystem::cylinder_mass(self, w))
    }

    fn finite_alphabet(&self) -> Option<usize> {
        Some(self.transitions.size())
    }

    fn process(&self, _relevant: &[Symbol], _len: usize) -> Result<SymbolProcess<T>> {
        let l = self.state_len();
        let classes: Vec<Symbol> = (0..self.transitions.size() as Symbol).collect();
        let initial = self
            .matrix
            .states
            .iter()
            .zip(&self.state_mass)
            .enumerate()
            .map(|(i, (s, &m))| (s.iter().map(|&c| c as usize).collect(), i, m))
            .collect();
        let transitions = self
            .matrix
            .states
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let last = u[l - 1];
                classes
                    .iter()
                    .filter(|&&b| self.transitions.allows(last, b))
                    .map(|&b| {
                        let mut ub = u.clone();
                        ub.push(b);
                        let j = self.matrix.index[&ub[1..]];
                        let w = self.normalized.value(&ub).expect("admissible").exp();
                        (b as usize, j, self.state_mass[j] * w / self.state_mass[i])
                    })
                    .collect()
            })
            .collect();
        Ok(SymbolProcess::Markov { classes, context: l, initial, transitions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::Word;

    fn golden() -> TransitionMatrix {
        TransitionMatrix::from_rows(vec![vec![1, 1], vec![1, 0]]).unwrap()
    }

    fn point(s: &str) -> PeriodicPoint {
        PeriodicPoint::new(s.parse::<Word>().unwrap())
    }

    const PHI: f64 = 1.618_033_988_749_895;

    #[test]
    fn potential_must_cover_admissible_words() {
        let tm = golden();
        let mut vals = HashMap::new();
        vals.insert(vec![0, 0], 0.0);
        vals.insert(vec![0, 1], 0.0);
        assert!(Potential::new(2, vals.clone(), &tm).is_err());
        vals.insert(vec![1, 0], 0.0);
        assert!(Potential::new(2, vals.clone(), &tm).is_ok());
        vals.insert(vec![1, 1], 0.0);
        assert!(Potential::new(2, vals, &tm).is_err());
    }

    #[test]
    fn transfer_matrix_examples() {
        let tm = TransitionMatrix::full(2);
        let half = Potential::from_fn(1, &tm, |_| 0.5f64.ln()).unwrap();
        let m = build_transfer_matrix(&half, &tm).unwrap();
        for row in m.entries() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        let zero = Potential::from_fn(1, &golden(), |_| 0.0f64).unwrap();
        let m = build_transfer_matrix(&zero, &golden()).unwrap();
        assert_eq!(m.entries(), &[vec![1.0, 1.0], vec![1.0, 0.0]]);
        let swap = TransitionMatrix::from_rows(vec![vec![0, 1], vec![1, 0]]).unwrap();
        let p = Potential::from_fn(1, &swap, |_| 0.0f64).unwrap();
        assert!(matches!(build_transfer_matrix(&p, &swap), Err(Error::NotMixing(_))));
    }

    #[test]
    fn perron_examples() {
        let pd = perron_eigendata(&[vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!((pd.lambda - PHI).abs() < 1e-12);
        let pd = perron_eigendata(&[vec![2.5f64]]).unwrap();
        assert!((pd.lambda - 2.5).abs() < 1e-15);
        let ds: Vec<Vec<f64>> = vec![vec![0.2, 0.5, 0.3], vec![0.5, 0.3, 0.2], vec![0.3, 0.2, 0.5]];
        let pd = perron_eigendata(&ds).unwrap();
        assert!((pd.lambda - 1.0).abs() < 1e-12);
        for &x in &pd.h {
            assert!((x - pd.h[0]).abs() < 1e-12);
        }
        assert!((pd.nu.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let dot: f64 = pd.nu.iter().zip(&pd.h).map(|(a, b)| a * b).sum();
        assert!((dot - 1.0).abs() < 1e-14);
    }

    #[test]
    fn perron_residuals_on_larger_matrix() {
        // 81 states: the power-iteration-only route
        let tm = TransitionMatrix::full(3);
        let pot = Potential::from_fn(5, &tm, |w| {
            0.1 * w.iter().enumerate().map(|(i, &s)| (i as f64 + 1.0) * s as f64).sum::<f64>().sin()
        })
        .unwrap();
        let m = build_transfer_matrix(&pot, &tm).unwrap();
        assert_eq!(m.states().len(), 81);
        let pd = perron_eigendata(m.entries()).unwrap();
        assert!(residual(m.entries(), pd.lambda, &pd.h) < 1e-10);
        let t: Vec<Vec<f64>> = (0..81).map(|j| (0..81).map(|i| m.entries()[i][j]).collect()).collect();
        assert!(residual(&t, pd.lambda, &pd.nu) < 1e-10);
    }

    #[test]
    fn bernoulli_is_a_fixed_point_of_normalization() {
        let sys = GibbsSystem::<f64>::bernoulli(&[0.3, 0.7]).unwrap();
        assert!((sys.perron().lambda - 1.0).abs() < 1e-12);
        assert!((sys.perron().nu[0] - 0.3).abs() < 1e-12);
        for (w, v) in sys.normalized_potential().entries() {
            let orig = sys.potential().value(&w).unwrap();
            assert!((v - orig).abs() < 1e-12);
        }
        assert!((sys.cylinder_mass(&[0, 1]) - 0.21).abs() < 1e-12);
        assert!((sys.theta(&point("0")).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn normalized_operator_fixes_constants() {
        let sys = GibbsSystem::new(Potential::from_fn(1, &golden(), |_| 0.0f64).unwrap(), golden()).unwrap();
        assert!((sys.perron().lambda - PHI).abs() < 1e-10);
        let nm = sys.normalized_matrix().unwrap();
        for row in nm.entries() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        let pd = perron_eigendata(nm.entries()).unwrap();
        assert!(pd.lambda.ln().abs() < 1e-10);
    }

    #[test]
    fn cylinder_mass_examples() {
        let uniform = GibbsSystem::<f64>::bernoulli(&[0.5, 0.5]).unwrap();
        let w: Vec<Symbol> = vec![0, 1, 1, 0, 1];
        assert!((uniform.cylinder_mass(&w) - 0.5f64.powi(5)).abs() < 1e-14);
        let g = GibbsSystem::new(Potential::from_fn(1, &golden(), |_| 0.0f64).unwrap(), golden()).unwrap();
        assert_eq!(g.cylinder_mass(&[1, 1]), 0.0);
        // measure of maximal entropy on the golden-mean shift
        assert!((g.cylinder_mass(&[1]) - 1.0 / (1.0 + PHI * PHI)).abs() < 1e-12);
    }

    fn sample_systems() -> Vec<GibbsSystem<f64>> {
        let full3 = TransitionMatrix::full(3);
        let tri = TransitionMatrix::from_rows(vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 1, 1]]).unwrap();
        vec![
            GibbsSystem::new(Potential::from_fn(2, &golden(), |w| 0.3 * w[0] as f64 - 0.7 * w[1] as f64).unwrap(), golden()).unwrap(),
            GibbsSystem::new(Potential::from_fn(3, &full3, |w| ((w[0] + 2 * w[1] + 3 * w[2]) as f64).cos()).unwrap(), full3).unwrap(),
            GibbsSystem::new(Potential::from_fn(2, &tri, |w| 0.2 * (w[0] * w[1]) as f64).unwrap(), tri).unwrap(),
        ]
    }

    #[test]
    fn kolmogorov_consistency_and_shift_invariance() {
        for sys in sample_systems() {
            let k = sys.transitions().size();
            for len in 1..5 {
                for w in admissible_words(sys.transitions(), len) {
                    let m = sys.cylinder_mass(&w);
                    let mut right = 0.0;
                    let mut left = 0.0;
                    for a in 0..k as Symbol {
                        let mut wa = w.clone();
                        wa.push(a);
                        right += sys.cylinder_mass(&wa);
                        let mut aw = vec![a];
                        aw.extend_from_slice(&w);
                        left += sys.cylinder_mass(&aw);
                    }
                    assert!((right - m).abs() < 1e-12, "{w:?}");
                    assert!((left - m).abs() < 1e-12, "{w:?}");
                }
                let total: f64 = admissible_words(sys.transitions(), len).iter().map(|w| sys.cylinder_mass(w)).sum();
                assert!((total - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn theta_matches_ratio_limit() {
        for sys in sample_systems() {
            for g in ["0", "01", "0,1,2", "0,2", "1,2"] {
                let x = point(g);
                if !sys.transitions().admits_orbit(&x) {
                    assert!(sys.theta(&x).is_err());
                    continue;
                }
                let conv = sys.theta_ratio_convergence(&x, 12).unwrap();
                let last = conv.rows.last().unwrap();
                assert!(last.2 < 1e-8, "{g}: {:?}", conv.rows);
                assert!(conv.fit.rate < 1.0);
                assert!(conv.bounded_by_fit());
            }
        }
    }

    #[test]
    fn inadmissible_orbit_rejected() {
        let g = GibbsSystem::new(Potential::from_fn(1, &golden(), |_| 0.0f64).unwrap(), golden()).unwrap();
        assert!(matches!(g.theta(&point("1")), Err(Error::Inadmissible(_))));
        assert!(g.theta_ratio_convergence(&point("01"), 3).is_err());
    }

    #[test]
    fn geometric_fit_recovers_rate() {
        let rows: Vec<(usize, f64)> = (1..20).map(|n| (n, 3.0 * 0.6f64.powi(n as i32))).collect();
        let fit = fit_geometric_decay(&rows, 1e-300);
        assert!((fit.rate - 0.6).abs() < 1e-12);
        assert!((fit.constant - 3.0).abs() < 1e-9);
    }

    #[test]
    fn markov_process_reproduces_cylinder_masses() {
        for sys in sample_systems() {
            let p = sys.process(&[], 6).unwrap();
            for w in admissible_words(sys.transitions(), 4) {
                let pattern: Vec<Option<Symbol>> = w.iter().map(|&s| Some(s)).collect();
                assert!((p.pattern_mass(&pattern) - sys.cylinder_mass(&w)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn single_precision_gibbs() {
        let sys = GibbsSystem::<f32>::bernoulli(&[0.25, 0.75]).unwrap();
        assert!((sys.cylinder_mass(&[1, 1]) - 0.5625).abs() < 1e-5);
    }
}
