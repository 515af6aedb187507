//! The Pólya-Aeppli law: a compound Poisson distribution with geometric
//! cluster sizes.
//!
//! With parameters `t > 0` and `p ∈ [0, 1)` the mass at `r ≥ 1` is
//!
//! ```text
//! e^{-t} Σ_{j=1}^{r} p^{r-j} (1-p)^j t^j / j! · C(r-1, j-1)
//! ```
//!
//! and `e^{-t}` at `r = 0`. Its probability generating function is
//! `exp(t (z - 1) / (1 - p z))`; `p = 0` gives the Poisson law.

use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{binomial, log_add_exp, Real};

/// Above this `r` the mass is accumulated in log space.
const LOG_SPACE_THRESHOLD: u64 = 50;

/// Default bound on the neglected tail used by [`PolyaAeppli::pmf_adaptive`].
pub const DEFAULT_TAIL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolyaAeppli<T> {
    t: T,
    p: T,
}

/// A truncated probability mass function with explicit leftover mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf<T> {
    pub masses: Vec<T>,
    pub tail_mass: T,
}

impl<T: Real> Pmf<T> {
    pub fn from_masses(masses: Vec<T>) -> Self {
        let total: T = crate::scalar::pairwise_sum(&masses);
        let tail_mass = (T::one() - total).max(T::zero());
        Pmf { masses, tail_mass }
    }

    pub fn r_max(&self) -> usize {
        self.masses.len().saturating_sub(1)
    }

    pub fn mass(&self, r: usize) -> T {
        self.masses.get(r).copied().unwrap_or(T::zero())
    }

    /// Mean of the truncated part (the tail contributes nothing).
    pub fn truncated_mean(&self) -> T {
        self.masses
            .iter()
            .enumerate()
            .map(|(r, &m)| T::from_count(r as u64) * m)
            .sum()
    }
}

impl<T: Real> PolyaAeppli<T> {
    pub fn new(t: T, p: T) -> Result<Self> {
        if !(t > T::zero()) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("t must be positive and finite, got {t}")));
        }
        if !(p >= T::zero() && p < T::one()) {
            return Err(Error::InvalidParameter(format!("p must lie in [0, 1), got {p}")));
        }
        Ok(PolyaAeppli { t, p })
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn p(&self) -> T {
        self.p
    }

    /// `P(ζ = r)`.
    pub fn pmf(&self, r: u64) -> T {
        let (t, p) = (self.t, self.p);
        if r == 0 {
            return (-t).exp();
        }
        if p == T::zero() {
            return poisson_mass(t, r);
        }
        if r > LOG_SPACE_THRESHOLD {
            return self.ln_polynomial(r).map_or(T::zero(), |l| (l - t).exp());
        }
        // Start at the j = r term so that a tiny p underflows harmlessly.
        let q = T::one() - p;
        let mut term = (1..=r).fold(T::one(), |acc, k| acc * q * t / T::from_count(k));
        let mut sum = term;
        for j in (2..=r).rev() {
            // term_{j-1} / term_j = p j (j-1) / ((1-p) t (r-j+1))
            term = term * p * T::from_count(j) * T::from_count(j - 1)
                / (q * t * T::from_count(r - j + 1));
            sum = sum + term;
        }
        sum * (-t).exp()
    }

    /// `ln P_r(t, p)` accumulated with log-sum-exp. `None` when every term vanishes.
    fn ln_polynomial(&self, r: u64) -> Option<T> {
        let (t, p) = (self.t, self.p);
        let q = T::one() - p;
        let (ln_p, ln_q, ln_t) = (p.ln(), q.ln(), t.ln());
        // j = 1 term: p^{r-1} (1-p) t
        let mut ln_term = T::from_count(r - 1) * ln_p + ln_q + ln_t;
        let mut acc = ln_term;
        for j in 1..r {
            ln_term = ln_term
                + (q * t * T::from_count(r - j)).ln()
                - (p * T::from_count(j + 1) * T::from_count(j)).ln();
            acc = log_add_exp(acc, ln_term);
        }
        acc.is_finite().then_some(acc)
    }

    pub fn pmf_table(&self, r_max: usize) -> Pmf<T> {
        Pmf::from_masses((0..=r_max as u64).map(|r| self.pmf(r)).collect())
    }

    /// Table truncated where the Chernoff bound on `P(ζ > r_max)` drops below `eps`.
    pub fn pmf_adaptive(&self, eps: T) -> Pmf<T> {
        let mean = self.mean_variance().0;
        let mut r_max = mean.ceil().to_u64().unwrap_or(0);
        while self.tail_bound(r_max + 1) >= eps {
            r_max += 1;
        }
        self.pmf_table(r_max as usize)
    }

    /// Upper bound on `P(ζ ≥ r)` from `P(ζ ≥ r) ≤ g(z) / z^r`, minimised over a grid of `z > 1`.
    pub fn tail_bound(&self, r: u64) -> T {
        if r == 0 {
            return T::one();
        }
        let (t, p) = (self.t, self.p);
        let rf = T::from_count(r);
        let z_max = if p > T::zero() {
            T::one() / p
        } else {
            (rf / t).max(T::c(2.0)) * T::c(2.0)
        };
        let mut best = T::zero();
        for k in 1..256u64 {
            let z = T::one() + (z_max - T::one()) * T::from_count(k) / T::c(256.0);
            let ln_bound = t * (z - T::one()) / (T::one() - p * z) - rf * z.ln();
            best = best.min(ln_bound);
        }
        if p == T::zero() && rf > t {
            let z = rf / t;
            best = best.min(t * (z - T::one()) - rf * z.ln());
        }
        best.exp().min(T::one())
    }

    /// `Q_k(t, p)`, the k-th **binomial** moment `E[C(ζ, k)]`.
    ///
    /// The k-th classical factorial moment `E[ζ(ζ-1)…(ζ-k+1)]` equals `k! · Q_k`.
    pub fn binomial_moment(&self, k: u64) -> T {
        if k == 0 {
            return T::one();
        }
        let (t, p) = (self.t, self.p);
        let mut sum = T::zero();
        let mut t_pow_over_fact = T::one();
        for j in 1..=k {
            t_pow_over_fact = t_pow_over_fact * t / T::from_count(j);
            sum = sum + p.powi((k - j) as i32) * t_pow_over_fact * binomial::<T>(k - 1, j - 1);
        }
        sum / (T::one() - self.p).powi(k as i32)
    }

    pub fn mean_variance(&self) -> (T, T) {
        let q = T::one() - self.p;
        (self.t / q, self.t * (T::one() + self.p) / (q * q))
    }

    /// `g_p(z) = exp(t (z - 1) / (1 - p z))`; an error when `p z ≥ 1`.
    pub fn pgf(&self, z: T) -> Result<T> {
        if self.p * z >= T::one() {
            return Err(Error::Domain(format!(
                "pgf evaluated at z = {z} beyond the singularity 1/p (p = {})",
                self.p
            )));
        }
        if z == T::one() {
            return Ok(T::one());
        }
        Ok((self.t * (z - T::one()) / (T::one() - self.p * z)).exp())
    }

    /// Draws `Σ_{i ≤ K} G_i` with `K ~ Poisson(t)` and `G_i` geometric on `{1, 2, ...}`
    /// with `P(G = j) = p^{j-1} (1 - p)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let t = self.t.as_f64();
        let clusters = Poisson::new(t).expect("validated rate").sample(rng) as u64;
        if self.p == T::zero() {
            return clusters;
        }
        let geometric = Geometric::new(1.0 - self.p.as_f64()).expect("validated p");
        (0..clusters).map(|_| 1 + geometric.sample(rng)).sum()
    }
}

/// `e^{-t} t^r / r!` by a running product.
fn poisson_mass<T: Real>(t: T, r: u64) -> T {
    if r as f64 > 170.0 {
        let ln_fact: T = (1..=r).map(|k| T::from_count(k).ln()).sum();
        return (T::from_count(r) * t.ln() - t - ln_fact).exp();
    }
    let mut acc = (-t).exp();
    for k in 1..=r {
        acc = acc * t / T::from_count(k);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pa(t: f64, p: f64) -> PolyaAeppli<f64> {
        PolyaAeppli::new(t, p).unwrap()
    }

    /// Direct evaluation of the defining polynomial, independent of the recursion.
    fn pmf_by_definition(t: f64, p: f64, r: u64) -> f64 {
        if r == 0 {
            return (-t).exp();
        }
        let mut s = 0.0;
        let mut fact = 1.0;
        for j in 1..=r {
            fact *= j as f64;
            s += p.powi((r - j) as i32) * (1.0 - p).powi(j as i32) * t.powi(j as i32) / fact
                * binomial::<f64>(r - 1, j - 1);
        }
        (-t).exp() * s
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PolyaAeppli::new(0.0, 0.5).is_err());
        assert!(PolyaAeppli::new(-1.0, 0.5).is_err());
        assert!(PolyaAeppli::new(1.0, 1.0).is_err());
        assert!(PolyaAeppli::new(1.0, -0.1).is_err());
        assert!(PolyaAeppli::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn pmf_examples() {
        assert!((pa(1.0, 0.0).pmf(0) - (-1f64).exp()).abs() < 1e-16);
        for &(t, p) in &[(0.5f64, 0.2f64), (2.0, 0.7), (3.0, 0.0)] {
            let want = (-t).exp() * (1.0 - p) * t;
            assert!((pa(t, p).pmf(1) - want).abs() < 1e-15);
        }
        assert!((pa(2.0, 0.0).pmf(2) - 2.0 * (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn recursion_matches_definition() {
        for &(t, p) in &[(0.5, 0.3), (2.0, 0.5), (5.0, 0.9), (1.0, 1e-3)] {
            for r in 0..=40 {
                let a = pa(t, p).pmf(r);
                let b = pmf_by_definition(t, p, r);
                assert!((a - b).abs() <= 1e-13 * b.max(1e-300), "t={t} p={p} r={r}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn log_space_branch_is_continuous() {
        let law = pa(5.0, 0.9);
        // the two branches straddle r = 50
        let direct = pmf_by_definition(5.0, 0.9, 51);
        assert!((law.pmf(51) - direct).abs() < 1e-12 * direct);
        let lower = law.pmf(50);
        assert!((lower - pmf_by_definition(5.0, 0.9, 50)).abs() < 1e-12 * lower);
    }

    #[test]
    fn table_examples() {
        let tab = pa(1.0, 0.0).pmf_table(0);
        assert_eq!(tab.masses.len(), 1);
        assert!((tab.tail_mass - (1.0 - (-1f64).exp())).abs() < 1e-15);
        let tab = pa(2.0, 0.5).pmf_table(200);
        assert!(tab.tail_mass < 1e-12);
    }

    #[test]
    fn binomial_moment_examples() {
        assert_eq!(pa(2.0, 0.5).binomial_moment(0), 1.0);
        assert!((pa(2.0, 0.5).binomial_moment(1) - 4.0).abs() < 1e-14);
        assert!((pa(2.0, 0.0).binomial_moment(2) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn mean_variance_examples() {
        let (m, v) = pa(2.0, 0.5).mean_variance();
        assert!((m - 4.0).abs() < 1e-14 && (v - 12.0).abs() < 1e-14);
        assert_eq!(pa(3.0, 0.0).mean_variance(), (3.0, 3.0));
        let (m, v) = pa(1.0, 0.9).mean_variance();
        assert!((m - 10.0).abs() < 1e-12 && (v - 190.0).abs() < 1e-10);
    }

    #[test]
    fn pgf_examples() {
        assert_eq!(pa(2.0, 0.5).pgf(1.0).unwrap(), 1.0);
        assert!((pa(1.0, 0.0).pgf(0.0).unwrap() - (-1f64).exp()).abs() < 1e-16);
        let v = pa(2.0, 0.5).pgf(0.5).unwrap();
        assert!((v - (-4.0f64 / 3.0).exp()).abs() < 1e-15);
        assert!(pa(2.0, 0.5).pgf(2.0).is_err());
    }

    #[test]
    fn pgf_consistency() {
        for &(t, p) in &[(1.0, 0.3), (2.0, 0.5), (0.5, 0.9)] {
            let law = pa(t, p);
            let tab = law.pmf_table(2000);
            for &z in &[0.0, 0.25, 0.5, 0.9] {
                if p * z >= 1.0 {
                    continue;
                }
                let series: f64 = tab.masses.iter().enumerate().map(|(r, m)| m * z.powi(r as i32)).sum();
                assert!((series - law.pgf(z).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn moment_consistency() {
        for &(t, p) in &[(1.0, 0.3), (2.0, 0.5), (0.5, 0.9), (5.0, 0.0)] {
            let law = pa(t, p);
            let tab = law.pmf_adaptive(1e-15);
            for k in 0..=5u64 {
                let s: f64 = tab
                    .masses
                    .iter()
                    .enumerate()
                    .map(|(r, m)| binomial::<f64>(r as u64, k) * m)
                    .sum();
                let q = law.binomial_moment(k);
                assert!((s - q).abs() < 1e-8 * q.max(1.0), "t={t} p={p} k={k}: {s} vs {q}");
            }
        }
    }

    #[test]
    fn normalization_at_2000() {
        for &t in &[0.5, 1.0, 5.0, 10.0] {
            for &p in &[0.0, 0.5, 0.95] {
                let s: f64 = (0..=2000).map(|r| pa(t, p).pmf(r)).sum();
                assert!((s - 1.0).abs() < 1e-10, "t={t} p={p}: {s}");
            }
        }
    }

    #[test]
    fn tail_bound_dominates_true_tail() {
        let law = pa(2.0, 0.5);
        let tab = law.pmf_table(400);
        for r in [1u64, 5, 10, 30, 60] {
            let true_tail: f64 = tab.masses[r as usize..].iter().sum();
            assert!(law.tail_bound(r) >= true_tail * (1.0 - 1e-12));
        }
    }

    #[test]
    fn sampler_reduces_to_poisson() {
        let law = pa(1.5, 0.0);
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let poisson = Poisson::new(1.5).unwrap();
        for _ in 0..1000 {
            assert_eq!(law.sample(&mut a), poisson.sample(&mut b) as u64);
        }
    }

    #[test]
    fn sampler_matches_pmf() {
        let law = pa(1.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut counts = vec![0u64; 64];
        for _ in 0..n {
            let k = law.sample(&mut rng) as usize;
            counts[k.min(63)] += 1;
        }
        let tab = law.pmf_table(62);
        let mut tv = 0.0;
        for r in 0..63 {
            tv += (counts[r] as f64 / n as f64 - tab.masses[r]).abs();
        }
        tv += (counts[63] as f64 / n as f64 - tab.tail_mass).abs();
        assert!(tv / 2.0 < 0.005, "tv = {}", tv / 2.0);
    }

    #[test]
    fn works_in_single_precision() {
        let law = PolyaAeppli::new(2.0f32, 0.5).unwrap();
        let (m, v) = law.mean_variance();
        assert!((m - 4.0).abs() < 1e-5 && (v - 12.0).abs() < 1e-4);
        let s: f32 = law.pmf_table(120).masses.iter().sum();
        assert!((s - 1.0).abs() < 1e-5);
    }
}
