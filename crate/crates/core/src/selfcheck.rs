//! Small-scale invariant suites run by `reclab selfcheck`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::experiment::{ExperimentConfig, LinearRule, System};
use crate::gibbs::{GibbsSystem, Potential};
use crate::models::{check_psi_mixing, draw_environment, Fiber, Marginal, TwoElementModel};
use crate::polya_aeppli::PolyaAeppli;
use crate::returns::{
    binomial_moment_enumeration, exact_count_distribution, exhaustive_count_distribution, Engine, DEFAULT_R_MAX,
};
use crate::symbolic::{cylinder_at, self_overlaps, PeriodicPoint, TransitionMatrix, Word};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Pólya-Aeppli mass function `(t, p, r) ↦ P(ζ = r)` under test.
pub type PmfFn = dyn Fn(f64, f64, u64) -> f64 + Sync;

const BUDGET: u128 = 1 << 34;

fn outcome(name: &'static str, result: crate::Result<(bool, String)>) -> CheckOutcome {
    match result {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: e.to_string() },
    }
}

/// Runs every suite with the library's own mass function.
pub fn run_selfcheck() -> Vec<CheckOutcome> {
    run_selfcheck_with(&|t, p, r| PolyaAeppli::new(t, p).map_or(f64::NAN, |law| law.pmf(r)))
}

/// Runs every suite, taking the Pólya-Aeppli mass function from `pmf`.
pub fn run_selfcheck_with(pmf: &PmfFn) -> Vec<CheckOutcome> {
    vec![
        outcome("pa-normalization-and-moments", pa_suite(pmf)),
        outcome("pa-poisson-reduction", poisson_suite(pmf)),
        outcome("overlaps-are-multiples-of-period", overlap_suite()),
        outcome("dp-matches-exhaustive", oracle_suite()),
        outcome("moment-identity", moment_suite()),
        outcome("gibbs-perron-root", gibbs_suite()),
        outcome("product-psi-mixing", mixing_suite()),
        outcome("quenched-tv-decreases", convergence_suite()),
    ]
}

fn pa_suite(pmf: &PmfFn) -> crate::Result<(bool, String)> {
    let mut worst = 0.0f64;
    for t in [0.5, 1.0, 2.0] {
        for p in [0.0, 0.3, 0.5] {
            let masses: Vec<f64> = (0..400).map(|r| pmf(t, p, r)).collect();
            let total: f64 = masses.iter().sum();
            let mean: f64 = masses.iter().enumerate().map(|(r, m)| r as f64 * m).sum();
            let var: f64 = masses.iter().enumerate().map(|(r, m)| (r as f64 - mean).powi(2) * m).sum();
            worst = worst
                .max((total - 1.0).abs())
                .max((mean - t / (1.0 - p)).abs())
                .max((var - t * (1.0 + p) / (1.0 - p).powi(2)).abs());
        }
    }
    Ok((worst < 1e-8, format!("max error {worst:.3e}")))
}

fn poisson_suite(pmf: &PmfFn) -> crate::Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut fact = 1.0f64;
    for r in 0..=20u64 {
        if r > 0 {
            fact *= r as f64;
        }
        let want = (-1.5f64).exp() * 1.5f64.powi(r as i32) / fact;
        worst = worst.max(((pmf(1.5, 0.0, r) - want) / want).abs());
    }
    Ok((worst < 1e-12, format!("max relative error {worst:.3e}")))
}

fn overlap_suite() -> crate::Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let m = rng.random_range(1..=4);
        let gen: Vec<u64> = (0..m).map(|_| rng.random_range(0..3)).collect();
        let x = PeriodicPoint::new(Word::new(gen)?);
        let m = x.period();
        for n in 2 * m..=8 * m {
            let w = cylinder_at(&x, n)?;
            if let Some(l) = self_overlaps(&w).into_iter().find(|&l| l <= n - m && l % m != 0) {
                return Ok((false, format!("overlap {l} of A_{n}({x}) is not a multiple of {m}")));
            }
        }
    }
    Ok((true, "50 periodic points".into()))
}

fn oracle_suite() -> crate::Result<(bool, String)> {
    let model = TwoElementModel::<f64>::new(0.3, 0.8, 0.5)?;
    let env = draw_environment(&model, 16, 4)?;
    let fiber = Fiber::new(&model, &env);
    let mut worst = 0.0f64;
    for t in ["00", "010", "1"] {
        let target: Word = t.parse()?;
        let horizon = 12 - target.len();
        let a = exact_count_distribution(&fiber, &target, horizon, 12, BUDGET)?;
        let b = exhaustive_count_distribution(&fiber, &target, horizon, 12, BUDGET)?;
        for r in 0..=12 {
            worst = worst.max((a.mass(r) - b.mass(r)).abs());
        }
    }
    Ok((worst < 1e-12, format!("max difference {worst:.3e}")))
}

fn moment_suite() -> crate::Result<(bool, String)> {
    let model = TwoElementModel::<f64>::new(0.2, 0.6, 0.4)?;
    let target: Word = "0,0".parse()?;
    let marg = Marginal { model: &model };
    let d = exact_count_distribution(&marg, &target, 30, DEFAULT_R_MAX, BUDGET)?;
    let mut worst = 0.0f64;
    for k in 1..=3 {
        let e = binomial_moment_enumeration(&marg, &target, 30, k, BUDGET)?;
        worst = worst.max((d.binomial_moment(k as u64) - e).abs());
    }
    Ok((worst < 1e-10, format!("max difference {worst:.3e}")))
}

fn gibbs_suite() -> crate::Result<(bool, String)> {
    let golden = TransitionMatrix::from_rows(vec![vec![1, 1], vec![1, 0]])?;
    let g = GibbsSystem::new(Potential::from_fn(1, &golden, |_| 0.0)?, golden)?;
    let err = (g.perron().lambda - (1.0 + 5f64.sqrt()) / 2.0).abs();
    Ok((err < 1e-10, format!("|λ - φ| = {err:.3e}")))
}

fn mixing_suite() -> crate::Result<(bool, String)> {
    let model = TwoElementModel::<f64>::new(0.3, 0.7, 0.5)?;
    let env = draw_environment(&model, 24, 2)?;
    let pool: Vec<Word> = ["0", "1", "01"].iter().map(|s| s.parse()).collect::<crate::Result<_>>()?;
    let rep = check_psi_mixing(&Fiber::new(&model, &env), &[0, 1, 4], &pool)?;
    Ok((rep.max_deviation < 1e-12, format!("max deviation {:.3e}", rep.max_deviation)))
}

fn convergence_suite() -> crate::Result<(bool, String)> {
    let exp = ExperimentConfig {
        system: System::TwoElement(TwoElementModel::<f64>::new(0.3, 0.7, 0.5)?),
        point: PeriodicPoint::new("0".parse()?),
        t: 1.0,
        n_list: vec![4, 10],
        u_list: vec![0],
        environments: 4,
        trials: 0,
        master_seed: 1,
        delta_rule: LinearRule::IDENTITY,
        m_rule: LinearRule::HALF,
        engines: vec![Engine::ExactDp],
        r_max: DEFAULT_R_MAX,
        budget: BUDGET,
    };
    let envs = exp.draw_environments()?;
    let q = exp.run_quenched(&envs)?;
    let bad = q.iter().filter(|r| r.rows[1].tv >= r.rows[0].tv).count();
    Ok((bad == 0, format!("{bad} of {} environments without decrease", q.len())))
}
