use serde::Serialize;

use super::patterns::{classify_pattern, is_rare, ReturnPattern};
use crate::error::{Error, Result};
use crate::process::{ShiftMeasure, SymbolProcess};
use crate::scalar::Real;
use crate::symbolic::{self_overlaps, Symbol, Word};

/// Binomial moment split into the rare-set part and the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSplit<T> {
    pub rare: T,
    pub main: T,
}

impl<T: Real> MomentSplit<T> {
    pub fn total(&self) -> T {
        self.rare + self.main
    }
}

/// Rule deciding which gaps between consecutive returns make a pattern rare.
#[derive(Debug, Clone, Copy)]
struct RareRule {
    delta: u64,
    big_m: u64,
    n: usize,
}

impl RareRule {
    /// Gap `d` separates two blocks and sits closer than `n + δ`.
    fn is_rare_gap(&self, d: usize) -> bool {
        d as u64 > self.big_m && (d as i128) - (self.n as i128) < self.delta as i128
    }
}

/// `E[C(ζ, r)] = Σ_{1 ≤ v_1 < … < v_r ≤ N} μ(C_v)`, where `C_v` is the set of words with
/// the target at every `v_i`.
pub fn binomial_moment_enumeration<T: Real, S: ShiftMeasure<T> + ?Sized>(
    measure: &S,
    target: &Word,
    horizon: usize,
    r: usize,
    budget: u128,
) -> Result<T> {
    let rule = RareRule { delta: 0, big_m: u64::MAX, n: target.len() };
    Ok(split(measure, target, horizon, r, rule, budget)?.total())
}

/// Partitions the enumeration of [`binomial_moment_enumeration`] into patterns with
/// `Δ(v) - n < δ` (rare) and the rest, using blocks with internal gaps `≤ M`.
#[allow(clippy::too_many_arguments)]
pub fn rare_vs_main_split<T: Real, S: ShiftMeasure<T> + ?Sized>(
    measure: &S,
    target: &Word,
    horizon: usize,
    r: usize,
    delta: u64,
    big_m: u64,
    m: u64,
    budget: u128,
) -> Result<MomentSplit<T>> {
    if m == 0 || big_m < m {
        return Err(Error::InvalidParameter(format!("need 1 ≤ m ≤ M, got m = {m}, M = {big_m}")));
    }
    let rule = RareRule { delta, big_m, n: target.len() };
    split(measure, target, horizon, r, rule, budget)
}

fn split<T: Real, S: ShiftMeasure<T> + ?Sized>(
    measure: &S,
    target: &Word,
    horizon: usize,
    r: usize,
    rule: RareRule,
    budget: u128,
) -> Result<MomentSplit<T>> {
    if r == 0 {
        return Ok(MomentSplit { rare: T::zero(), main: T::one() });
    }
    if r > horizon {
        return Ok(MomentSplit { rare: T::zero(), main: T::zero() });
    }
    let process = measure.process(target.symbols(), horizon + target.len())?;
    match &process {
        SymbolProcess::Independent { classes, weights } => {
            let overlaps = self_overlaps(target);
            let cost = (r as u128) * (horizon as u128) * ((overlaps.len() + 1) as u128) * (target.len() as u128);
            check_budget("moment chain updates", cost, budget)?;
            Ok(chain_split(classes, weights, target, &overlaps, horizon, r, rule))
        }
        SymbolProcess::Markov { .. } => {
            let tuples = tuple_count(horizon, r);
            let per = ((horizon + target.len()) * process.hidden_count() * process.classes().len()) as u128;
            check_budget("moment tuple enumeration", tuples.saturating_mul(per), budget)?;
            enumerate_split(&process, target, horizon, r, rule)
        }
    }
}

fn check_budget(what: &'static str, needed: u128, budget: u128) -> Result<()> {
    if needed > budget {
        return Err(Error::BudgetExceeded { what, needed, budget });
    }
    Ok(())
}

fn tuple_count(n: usize, r: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 0..r as u128 {
        c = c.saturating_mul(n as u128 - i) / (i + 1);
    }
    c
}

/// For independent positions the mass of `C_v` factorises along consecutive returns:
/// placement `k` contributes the weights of `target[..min(n, v_{k+1} - v_k)]` at `v_k`.
/// Two consecutive placements are compatible iff their gap is `≥ n` or a self-overlap,
/// and consecutive compatibility implies global compatibility.
fn chain_split<T: Real>(
    classes: &[Symbol],
    weights: &[Vec<T>],
    target: &Word,
    overlaps: &[usize],
    horizon: usize,
    r: usize,
    rule: RareRule,
) -> MomentSplit<T> {
    let n = target.len();
    let cls: Vec<Option<usize>> =
        target.symbols().iter().map(|s| classes.iter().position(|c| c == s)).collect();
    // prefix weight of the first `o` target symbols placed at `v`
    let prefix = |v: usize, o: usize| -> T {
        let mut acc = T::one();
        for (i, c) in cls.iter().take(o).enumerate() {
            match c {
                Some(c) => acc = acc * weights[v + i][*c],
                None => return T::zero(),
            }
        }
        acc
    };
    let full: Vec<T> = (0..=horizon).map(|v| if v == 0 { T::zero() } else { prefix(v, n) }).collect();

    // all[v], main[v], rare[v]: sums over chains of the current length starting at v
    let mut all = full.clone();
    let mut main = full.clone();
    let mut rare = vec![T::zero(); horizon + 1];
    let cum = |xs: &[T]| {
        let mut c = vec![T::zero(); xs.len() + 1];
        for (i, &x) in xs.iter().enumerate() {
            c[i + 1] = c[i] + x;
        }
        c
    };
    // sum of xs[v'] for v' in [lo, hi], clipped to 1..=horizon
    let range = |c: &[T], lo: usize, hi: usize| {
        let hi = hi.min(horizon);
        if lo > hi { T::zero() } else { c[hi + 1] - c[lo] }
    };
    // gaps d ≥ n are rare iff d ∈ [lo_rare, hi_rare)
    let lo_rare = rule.big_m.saturating_add(1).max(n as u64);
    let hi_rare = (n as u64).saturating_add(rule.delta);
    let far = |c: &[T], v: usize| -> (T, T) {
        let everything = range(c, v + n, horizon);
        if lo_rare >= hi_rare {
            return (T::zero(), everything);
        }
        let r = range(c, clip(v as u64 + lo_rare), clip(v as u64 + hi_rare - 1));
        let mut rest = range(c, clip(v as u64 + hi_rare), horizon);
        if lo_rare > n as u64 {
            rest = rest + range(c, v + n, clip(v as u64 + lo_rare - 1));
        }
        (r, rest)
    };
    for _ in 1..r {
        let (ca, cm, cr) = (cum(&all), cum(&main), cum(&rare));
        let mut next_all = vec![T::zero(); horizon + 1];
        let mut next_main = vec![T::zero(); horizon + 1];
        let mut next_rare = vec![T::zero(); horizon + 1];
        for v in 1..=horizon {
            let (mut a, mut b, mut c) = (T::zero(), T::zero(), T::zero());
            for &d in overlaps {
                if v + d > horizon {
                    break;
                }
                let w = prefix(v, d);
                a = a + w * all[v + d];
                if rule.is_rare_gap(d) {
                    c = c + w * all[v + d];
                } else {
                    b = b + w * main[v + d];
                    c = c + w * rare[v + d];
                }
            }
            if v + n <= horizon {
                a = a + full[v] * range(&ca, v + n, horizon);
                let (_, main_rest) = far(&cm, v);
                let (all_rare, _) = far(&ca, v);
                let (_, rare_rest) = far(&cr, v);
                b = b + full[v] * main_rest;
                c = c + full[v] * (all_rare + rare_rest);
            }
            next_all[v] = a;
            next_main[v] = b;
            next_rare[v] = c;
        }
        all = next_all;
        main = next_main;
        rare = next_rare;
    }
    MomentSplit { rare: rare.iter().copied().sum(), main: main.iter().copied().sum() }
}

fn clip(x: u64) -> usize {
    x.min(usize::MAX as u64) as usize
}

/// Literal enumeration over `G_r(N)` with pattern classification.
fn enumerate_split<T: Real>(
    process: &SymbolProcess<T>,
    target: &Word,
    horizon: usize,
    r: usize,
    rule: RareRule,
) -> Result<MomentSplit<T>> {
    let n = target.len();
    let len = horizon + n;
    let mut v: Vec<usize> = (1..=r).collect();
    let (mut rare, mut main) = (T::zero(), T::zero());
    let mut pattern: Vec<Option<Symbol>> = vec![None; len];
    loop {
        if let Some(mass) = placement_mass(process, target, &v, &mut pattern) {
            let rp = ReturnPattern::new(v.iter().map(|&x| x as u64).collect(), horizon as u64)?;
            let class = classify_pattern(&rp, rule.big_m.max(1), 1)?;
            if is_rare(&class, rule.delta, rule.n) {
                rare = rare + mass;
            } else {
                main = main + mass;
            }
        }
        // next increasing tuple in lexicographic order
        let mut i = r;
        loop {
            if i == 0 {
                return Ok(MomentSplit { rare, main });
            }
            i -= 1;
            if v[i] < horizon - (r - 1 - i) {
                v[i] += 1;
                for j in i + 1..r {
                    v[j] = v[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// `μ(C_v)`, or `None` when two placements disagree.
fn placement_mass<T: Real>(
    process: &SymbolProcess<T>,
    target: &Word,
    v: &[usize],
    pattern: &mut [Option<Symbol>],
) -> Option<T> {
    pattern.iter_mut().for_each(|p| *p = None);
    for &start in v {
        for (i, &s) in target.symbols().iter().enumerate() {
            match pattern[start + i] {
                Some(prev) if prev != s => return None,
                _ => pattern[start + i] = Some(s),
            }
        }
    }
    Some(process.pattern_mass(pattern))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{GibbsSystem, Potential};
    use crate::models::{draw_environment, Fiber, Marginal, TwoElementModel};
    use crate::returns::exact_count_distribution;
    use crate::symbolic::TransitionMatrix;

    const BUDGET: u128 = 1 << 40;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    fn coin() -> TwoElementModel<f64> {
        TwoElementModel::<f64>::new(0.5, 0.5, 0.5).unwrap()
    }

    #[test]
    fn fair_coin_examples() {
        let m = coin();
        let marg = Marginal { model: &m };
        let t = w("0");
        assert!((binomial_moment_enumeration(&marg, &t, 2, 1, BUDGET).unwrap() - 1.0).abs() < 1e-15);
        assert!((binomial_moment_enumeration(&marg, &t, 2, 2, BUDGET).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(binomial_moment_enumeration(&marg, &t, 2, 3, BUDGET).unwrap(), 0.0);
    }

    #[test]
    fn single_return_is_never_rare() {
        let m = coin();
        let s = rare_vs_main_split(&Marginal { model: &m }, &w("00"), 30, 1, 5, 1, 1, BUDGET).unwrap();
        assert_eq!(s.rare, 0.0);
        assert!((s.main - 30.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn partition_identity() {
        let m = coin();
        let marg = Marginal { model: &m };
        let t = w("00");
        let s = rare_vs_main_split(&marg, &t, 40, 2, 4, 1, 1, BUDGET).unwrap();
        let full = binomial_moment_enumeration(&marg, &t, 40, 2, BUDGET).unwrap();
        assert!((s.rare + s.main - full).abs() <= 1e-14 * full);
        assert!(s.rare > 0.0);
    }

    #[test]
    fn chain_matches_literal_enumeration() {
        let m = TwoElementModel::<f64>::new(0.2, 0.7, 0.6).unwrap();
        let env = draw_environment(&m, 40, 11).unwrap();
        let fiber = Fiber::new(&m, &env);
        for t in ["0", "00", "0101", "0110", "000"] {
            let target = w(t);
            let horizon = 40 - target.len();
            let process = fiber.process(target.symbols(), horizon + target.len()).unwrap();
            for r in 1..=3 {
                for (delta, big_m) in [(0, u64::MAX), (3, 1), (5, 2), (1, 6)] {
                    let rule = RareRule { delta, big_m, n: target.len() };
                    let fast = chain_split(
                        process.classes(),
                        match &process {
                            SymbolProcess::Independent { weights, .. } => weights,
                            _ => unreachable!(),
                        },
                        &target,
                        &self_overlaps(&target),
                        horizon,
                        r,
                        rule,
                    );
                    let slow = enumerate_split(&process, &target, horizon, r, rule).unwrap();
                    assert!((fast.rare - slow.rare).abs() <= 1e-12 * slow.total().max(1.0), "{t} r={r} δ={delta} M={big_m}");
                    assert!((fast.main - slow.main).abs() <= 1e-12 * slow.total().max(1.0), "{t} r={r} δ={delta} M={big_m}");
                }
            }
        }
    }

    #[test]
    fn moments_match_dp_law() {
        let m = TwoElementModel::<f64>::new(0.3, 0.9, 0.5).unwrap();
        let env = draw_environment(&m, 60, 3).unwrap();
        let fiber = Fiber::new(&m, &env);
        let target = w("010");
        let d = exact_count_distribution(&fiber, &target, 50, 64, BUDGET).unwrap();
        assert!(d.tail_mass < 1e-12);
        for k in 1..=3 {
            let e = binomial_moment_enumeration(&fiber, &target, 50, k, BUDGET).unwrap();
            assert!((d.binomial_moment(k as u64) - e).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn gibbs_moments_match_dp_law() {
        let tm = TransitionMatrix::from_rows(vec![vec![1, 1], vec![1, 0]]).unwrap();
        let pot = Potential::from_fn(2, &tm, |x| 0.4 * x[0] as f64 - 0.1 * x[1] as f64).unwrap();
        let g = GibbsSystem::new(pot, tm).unwrap();
        let target = w("0,1,0");
        let d = exact_count_distribution(&g, &target, 14, 20, BUDGET).unwrap();
        for k in 1..=3 {
            let e = binomial_moment_enumeration(&g, &target, 14, k, BUDGET).unwrap();
            assert!((d.binomial_moment(k as u64) - e).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn budget_is_enforced() {
        let m = coin();
        assert!(matches!(
            binomial_moment_enumeration(&Marginal { model: &m }, &w("0"), 1000, 3, 100),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
