//! Quenched and annealed convergence experiments at a periodic point.
//!
//! For each cylinder length `n` the horizon is `N_n = ⌊t / μ(A_n(x))⌋` with `μ` the
//! marginal measure. The law of the return count under a fixed fibre `μ_ω` is obtained
//! from the selected engines and compared with the Pólya-Aeppli law `PA((1-ϑ)t, ϑ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::GibbsSystem;
use crate::models::{
    draw_environment, theta_closed_form, CountableCoord, CountableModel, Environment, Fiber,
    Marginal, TwoElementModel,
};
use crate::polya_aeppli::{Pmf, PolyaAeppli};
use crate::process::ShiftMeasure;
use crate::returns::{
    exact_count_distribution, exhaustive_count_distribution, monte_carlo_count_distribution, observation_time,
    rare_vs_main_split, CountDistribution, Engine,
};
use crate::rng::derive_seed;
use crate::scalar::{pairwise_sum, Real};
use crate::symbolic::{cylinder_at, PeriodicPoint};

/// `n ↦ ⌊num · n / den⌋ + add`, clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearRule {
    pub num: u64,
    pub den: u64,
    #[serde(default)]
    pub add: i64,
}

impl LinearRule {
    pub const IDENTITY: LinearRule = LinearRule { num: 1, den: 1, add: 0 };
    pub const HALF: LinearRule = LinearRule { num: 1, den: 2, add: 0 };

    pub fn at(&self, n: usize) -> u64 {
        let base = (self.num as u128 * n as u128 / self.den.max(1) as u128) as i128;
        (base + self.add as i128).max(0) as u64
    }
}

/// The measure family an experiment runs on.
#[derive(Debug, Clone)]
pub enum System<T> {
    TwoElement(TwoElementModel<T>),
    Countable(CountableModel<T>),
    /// A deterministic Gibbs state; there is a single, trivial environment.
    Gibbs(GibbsSystem<T>),
}

/// Environments drawn for one experiment.
#[derive(Debug, Clone)]
pub enum Environments<T> {
    TwoElement(Vec<Environment<u8>>),
    Countable(Vec<Environment<CountableCoord<T>>>),
    Fixed,
}

impl<T: Real> Environments<T> {
    pub fn len(&self) -> usize {
        match self {
            Environments::TwoElement(v) => v.len(),
            Environments::Countable(v) => v.len(),
            Environments::Fixed => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Seed of environment `i`; zero for the fixed environment.
    pub fn seed(&self, i: usize) -> u64 {
        match self {
            Environments::TwoElement(v) => v[i].seed(),
            Environments::Countable(v) => v[i].seed(),
            Environments::Fixed => 0,
        }
    }

    /// CSV export (`index,coordinate`) of environment `i`; nothing for the fixed environment.
    pub fn write_csv<W: std::io::Write>(&self, i: usize, out: W) -> Result<bool> {
        match self {
            Environments::TwoElement(v) => v[i].write_csv(out).map(|_| true),
            Environments::Countable(v) => v[i].write_csv(out).map(|_| true),
            Environments::Fixed => Ok(false),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig<T> {
    pub system: System<T>,
    pub point: PeriodicPoint,
    pub t: T,
    pub n_list: Vec<usize>,
    /// Overlap orders for the `ζ_{n,u}` check.
    pub u_list: Vec<usize>,
    pub environments: usize,
    pub trials: u64,
    pub master_seed: u64,
    pub delta_rule: LinearRule,
    pub m_rule: LinearRule,
    pub engines: Vec<Engine>,
    pub r_max: usize,
    pub budget: u128,
}

/// Comparison of one engine's law with the limit law at one `n`.
#[derive(Debug, Clone, Serialize)]
pub struct LawComparison<T> {
    pub n: usize,
    pub horizon: usize,
    pub engine: Engine,
    pub distribution: CountDistribution<T>,
    pub tv: T,
    pub mean_abs_error: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuenchedResult<T> {
    pub env_id: usize,
    pub env_seed: u64,
    pub theta: T,
    pub rows: Vec<LawComparison<T>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnnealedResult<T> {
    pub theta: T,
    /// Environment averages of the quenched laws.
    pub rows: Vec<LawComparison<T>>,
    /// Law of the count under the marginal measure, when the exact engine is enabled.
    pub marginal: Vec<LawComparison<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanRow<T> {
    pub n: usize,
    pub env_id: usize,
    pub u: usize,
    pub horizon: usize,
    pub expectation: T,
    pub target: T,
    pub abs_error: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RareRow<T> {
    pub n: usize,
    pub env_id: usize,
    pub horizon: usize,
    pub delta: u64,
    pub big_m: u64,
    pub rare: T,
    pub main: T,
    pub limit: T,
}

/// `(Σ_r |a_r - b_r| + |tail_a - tail_b|) / 2`, folding everything beyond the shorter
/// table into the tails.
pub fn tv_distance<T: Real>(a: &CountDistribution<T>, b: &Pmf<T>) -> T {
    let common = a.r_max().min(b.r_max());
    let fold = |masses: &[T], tail: T| pairwise_sum(&masses[(common + 1).min(masses.len())..]) + tail;
    let diff: Vec<T> = (0..=common).map(|r| (a.mass(r) - b.mass(r)).abs()).collect();
    let tail = (fold(&a.masses, a.tail_mass) - fold(&b.masses, b.tail_mass)).abs();
    (pairwise_sum(&diff) + tail) / T::c(2.0)
}

/// `PA((1-ϑ)t, ϑ)`, whose mean is `t`.
pub fn limit_law<T: Real>(t: T, theta: T) -> Result<PolyaAeppli<T>> {
    PolyaAeppli::new((T::one() - theta) * t, theta)
}

impl<T: Real> ExperimentConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let m = self.point.period();
        if self.n_list.is_empty() {
            return Err(Error::Config("n_list must not be empty".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("n_list {:?} must be strictly increasing", self.n_list)));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < 2 * m) {
            return Err(Error::Config(format!("n = {n} is below 2m = {}", 2 * m)));
        }
        if !(self.t > T::zero()) {
            return Err(Error::Config(format!("t must be positive, got {}", self.t)));
        }
        if self.engines.is_empty() {
            return Err(Error::Config("at least one engine must be enabled".into()));
        }
        if self.environments == 0 {
            return Err(Error::Config("at least one environment is required".into()));
        }
        if self.engines.contains(&Engine::MonteCarlo) && self.trials == 0 {
            return Err(Error::Config("monte-carlo needs a positive trial count".into()));
        }
        if let System::Gibbs(g) = &self.system {
            if !g.transitions().admits_orbit(&self.point) {
                return Err(Error::Inadmissible(format!("periodic orbit {} violates the transitions", self.point)));
            }
        }
        self.theta()?;
        Ok(())
    }

    pub fn theta(&self) -> Result<T> {
        match &self.system {
            System::TwoElement(m) => theta_closed_form(m, &self.point),
            System::Countable(m) => theta_closed_form(m, &self.point),
            System::Gibbs(g) => g.theta(&self.point),
        }
    }

    /// `μ(A_n(x))` under the marginal measure.
    pub fn marginal_mass(&self, n: usize) -> Result<T> {
        let w = cylinder_at(&self.point, n)?;
        match &self.system {
            System::TwoElement(m) => Marginal { model: m }.cylinder_mass(w.symbols(), 0),
            System::Countable(m) => Marginal { model: m }.cylinder_mass(w.symbols(), 0),
            System::Gibbs(g) => Ok(g.cylinder_mass(w.symbols())),
        }
    }

    /// `N_n`.
    pub fn horizon(&self, n: usize) -> Result<usize> {
        observation_time(self.t, self.marginal_mass(n)?)
    }

    /// Environment length covering every horizon and overlap order.
    pub fn window(&self) -> Result<usize> {
        let extra = self.point.period() * self.u_list.iter().copied().max().unwrap_or(0);
        let mut w = 0;
        for &n in &self.n_list {
            w = w.max(self.horizon(n)? + n + extra);
        }
        Ok(w)
    }

    pub fn environment_seed(&self, i: usize) -> u64 {
        derive_seed(&[self.master_seed, i as u64])
    }

    pub fn draw_environments(&self) -> Result<Environments<T>> {
        let window = self.window()?;
        let ids: Vec<usize> = (0..self.environments).collect();
        Ok(match &self.system {
            System::TwoElement(m) => Environments::TwoElement(
                ids.par_iter()
                    .map(|&i| draw_environment(m, window, self.environment_seed(i)))
                    .collect::<Result<_>>()?,
            ),
            System::Countable(m) => Environments::Countable(
                ids.par_iter()
                    .map(|&i| draw_environment(m, window, self.environment_seed(i)))
                    .collect::<Result<_>>()?,
            ),
            System::Gibbs(_) => Environments::Fixed,
        })
    }

    /// Runs `f` on the fibre measure of environment `i`.
    fn with_fiber<R>(&self, envs: &Environments<T>, i: usize, f: impl FnOnce(&dyn ShiftMeasure<T>) -> R) -> R {
        match (&self.system, envs) {
            (System::TwoElement(m), Environments::TwoElement(v)) => f(&Fiber::new(m, &v[i])),
            (System::Countable(m), Environments::Countable(v)) => f(&Fiber::new(m, &v[i])),
            (System::Gibbs(g), _) => f(g),
            _ => unreachable!("environments drawn for another system"),
        }
    }

    fn with_marginal<R>(&self, f: impl FnOnce(&dyn ShiftMeasure<T>) -> R) -> R {
        match &self.system {
            System::TwoElement(m) => f(&Marginal { model: m }),
            System::Countable(m) => f(&Marginal { model: m }),
            System::Gibbs(g) => f(g),
        }
    }

    fn law(
        &self,
        measure: &dyn ShiftMeasure<T>,
        engine: Engine,
        n: usize,
        horizon: usize,
        stream: u64,
    ) -> Result<CountDistribution<T>> {
        let target = cylinder_at(&self.point, n)?;
        match engine {
            Engine::ExactDp => exact_count_distribution(measure, &target, horizon, self.r_max, self.budget),
            Engine::Enumeration => exhaustive_count_distribution(measure, &target, horizon, self.r_max, self.budget),
            Engine::MonteCarlo => monte_carlo_count_distribution(
                measure,
                &target,
                horizon,
                self.r_max,
                self.trials,
                self.master_seed,
                stream,
            ),
        }
    }

    fn compare(&self, n: usize, horizon: usize, engine: Engine, d: CountDistribution<T>, theory: &Pmf<T>) -> LawComparison<T> {
        let tv = tv_distance(&d, theory);
        let mean_abs_error = (d.truncated_mean() - self.t).abs();
        LawComparison { n, horizon, engine, distribution: d, tv, mean_abs_error }
    }

    /// Quenched laws for every environment, in environment order.
    pub fn run_quenched(&self, envs: &Environments<T>) -> Result<Vec<QuenchedResult<T>>> {
        self.validate()?;
        let theta = self.theta()?;
        let theory = limit_law(self.t, theta)?.pmf_table(self.r_max);
        let horizons: Vec<usize> = self.n_list.iter().map(|&n| self.horizon(n)).collect::<Result<_>>()?;
        (0..envs.len())
            .into_par_iter()
            .map(|i| {
                let mut rows = Vec::new();
                for (&n, &horizon) in self.n_list.iter().zip(&horizons) {
                    for &engine in &self.engines {
                        let stream = derive_seed(&[i as u64, n as u64]);
                        let d = self
                            .with_fiber(envs, i, |mu| self.law(mu, engine, n, horizon, stream))
                            .map_err(|e| context(e, engine, n, i))?;
                        rows.push(self.compare(n, horizon, engine, d, &theory));
                    }
                }
                Ok(QuenchedResult { env_id: i, env_seed: envs.seed(i), theta, rows })
            })
            .collect()
    }

    /// Environment average of the quenched laws, plus the law under the marginal measure.
    pub fn run_annealed(&self, quenched: &[QuenchedResult<T>]) -> Result<AnnealedResult<T>> {
        if quenched.is_empty() {
            return Err(Error::InvalidParameter("annealed averaging needs at least one environment".into()));
        }
        let theta = self.theta()?;
        let theory = limit_law(self.t, theta)?.pmf_table(self.r_max);
        let scale = T::from_count(quenched.len() as u64);
        let mut rows = Vec::new();
        for (k, first) in quenched[0].rows.iter().enumerate() {
            let column = |f: &dyn Fn(&CountDistribution<T>) -> T| {
                pairwise_sum(&quenched.iter().map(|q| f(&q.rows[k].distribution)).collect::<Vec<_>>()) / scale
            };
            let masses = (0..=self.r_max).map(|r| column(&|d| d.mass(r))).collect();
            let d = CountDistribution {
                masses,
                tail_mass: column(&|d| d.tail_mass),
                engine: first.engine,
                bias_bound: column(&|d| d.bias_bound),
                trials: first.distribution.trials.map(|t| t * quenched.len() as u64),
            };
            rows.push(self.compare(first.n, first.horizon, first.engine, d, &theory));
        }
        let mut marginal = Vec::new();
        if self.engines.contains(&Engine::ExactDp) {
            for &n in &self.n_list {
                let horizon = self.horizon(n)?;
                let d = self
                    .with_marginal(|mu| self.law(mu, Engine::ExactDp, n, horizon, 0))
                    .map_err(|e| context(e, Engine::ExactDp, n, usize::MAX))?;
                marginal.push(self.compare(n, horizon, Engine::ExactDp, d, &theory));
            }
        }
        Ok(AnnealedResult { theta, rows, marginal })
    }

    /// `E_ω[ζ_{n,u}] = Σ_{i=1}^{N_n} μ_ω(σ^{-i} A_{n+mu}(x))` against `ϑ^u t` for every
    /// environment, `n` and `u`; `u = 0` is the plain mean.
    pub fn overlap_count_check(&self, envs: &Environments<T>, u_list: &[usize]) -> Result<Vec<MeanRow<T>>> {
        let theta = self.theta()?;
        let m = self.point.period();
        let horizons: Vec<usize> = self.n_list.iter().map(|&n| self.horizon(n)).collect::<Result<_>>()?;
        let per_env: Vec<Vec<MeanRow<T>>> = (0..envs.len())
            .into_par_iter()
            .map(|i| {
                let mut rows = Vec::new();
                for (&n, &horizon) in self.n_list.iter().zip(&horizons) {
                    for &u in u_list {
                        let w = cylinder_at(&self.point, n + m * u)?;
                        let masses = self.with_fiber(envs, i, |mu| {
                            (1..=horizon).map(|j| mu.cylinder_mass(w.symbols(), j)).collect::<Result<Vec<T>>>()
                        })?;
                        let expectation = pairwise_sum(&masses);
                        let target = theta.powi(u as i32) * self.t;
                        rows.push(MeanRow {
                            n,
                            env_id: i,
                            u,
                            horizon,
                            expectation,
                            target,
                            abs_error: (expectation - target).abs(),
                        });
                    }
                }
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        Ok(per_env.into_iter().flatten().collect())
    }

    /// `E_ω[ζ_n]` against `t`.
    pub fn mean_convergence_check(&self, envs: &Environments<T>) -> Result<Vec<MeanRow<T>>> {
        self.overlap_count_check(envs, &[0])
    }

    /// Rare and main parts of the `r`-th binomial moment for each environment and `n`,
    /// with `δ(n)` and `M(n)` from the configured rules.
    pub fn rare_split_check(&self, envs: &Environments<T>, r: usize) -> Result<Vec<RareRow<T>>> {
        let theta = self.theta()?;
        let limit = limit_law(self.t, theta)?.binomial_moment(r as u64);
        let m = self.point.period() as u64;
        let per_env: Vec<Vec<RareRow<T>>> = (0..envs.len())
            .into_par_iter()
            .map(|i| {
                let mut rows = Vec::new();
                for &n in &self.n_list {
                    let horizon = self.horizon(n)?;
                    let target = cylinder_at(&self.point, n)?;
                    let (delta, big_m) = (self.delta_rule.at(n), self.m_rule.at(n).max(m));
                    let s = self.with_fiber(envs, i, |mu| {
                        rare_vs_main_split(mu, &target, horizon, r, delta, big_m, m, self.budget)
                    })?;
                    rows.push(RareRow { n, env_id: i, horizon, delta, big_m, rare: s.rare, main: s.main, limit });
                }
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        Ok(per_env.into_iter().flatten().collect())
    }
}

fn context(e: Error, engine: Engine, n: usize, env: usize) -> Error {
    let env = if env == usize::MAX { "marginal".to_string() } else { format!("environment {env}") };
    match e {
        Error::BudgetExceeded { .. } | Error::WindowOverflow { .. } => {
            Error::Config(format!("{engine} at n = {n}, {env}: {e}"))
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::returns::DEFAULT_R_MAX;

    fn canonical(alpha: f64, beta: f64, point: &str, n_list: Vec<usize>, envs: usize) -> ExperimentConfig<f64> {
        ExperimentConfig {
            system: System::TwoElement(TwoElementModel::new(alpha, beta, 0.5).unwrap()),
            point: PeriodicPoint::new(point.parse().unwrap()),
            t: 1.0,
            n_list,
            u_list: vec![0, 1, 2],
            environments: envs,
            trials: 2000,
            master_seed: 17,
            delta_rule: LinearRule::IDENTITY,
            m_rule: LinearRule::HALF,
            engines: vec![Engine::ExactDp],
            r_max: DEFAULT_R_MAX,
            budget: 1 << 40,
        }
    }

    fn d(masses: Vec<f64>) -> CountDistribution<f64> {
        CountDistribution { masses, tail_mass: 0.0, engine: Engine::ExactDp, bias_bound: 0.0, trials: None }
    }

    #[test]
    fn tv_examples() {
        let a = d(vec![0.25, 0.5, 0.25]);
        assert_eq!(tv_distance(&a, &Pmf::from_masses(vec![0.25, 0.5, 0.25])), 0.0);
        assert!((tv_distance(&a, &Pmf::from_masses(vec![0.5, 0.5, 0.0])) - 0.25).abs() < 1e-15);
        assert_eq!(tv_distance(&d(vec![1.0, 0.0]), &Pmf::from_masses(vec![0.0, 1.0])), 1.0);
        // folding: a point mass at 2 against a table that stops at 1
        assert_eq!(tv_distance(&d(vec![0.0, 0.0, 1.0]), &Pmf::from_masses(vec![0.0, 0.0])), 0.0);
    }

    #[test]
    fn limit_law_mean_is_t() {
        for theta in [0.1, 0.25, 0.5, 0.9] {
            let (mean, _) = limit_law(1.7, theta).unwrap().mean_variance();
            assert!((mean - 1.7f64).abs() < 1e-14);
        }
    }

    #[test]
    fn tv_decreases_along_n() {
        let cfg = canonical(0.3, 0.7, "0", vec![4, 12], 3);
        let envs = cfg.draw_environments().unwrap();
        for q in cfg.run_quenched(&envs).unwrap() {
            assert!(q.rows[1].tv < q.rows[0].tv, "env {}", q.env_id);
        }
    }

    #[test]
    fn degenerate_model_ignores_environment() {
        let cfg = canonical(0.4, 0.4, "01", vec![4, 6], 3);
        let envs = cfg.draw_environments().unwrap();
        let q = cfg.run_quenched(&envs).unwrap();
        for other in &q[1..] {
            for (a, b) in q[0].rows.iter().zip(&other.rows) {
                assert_eq!(a.distribution.masses, b.distribution.masses);
            }
        }
        let ann = cfg.run_annealed(&q).unwrap();
        for (a, b) in ann.rows.iter().zip(&q[0].rows) {
            for r in 0..=cfg.r_max {
                assert!((a.distribution.mass(r) - b.distribution.mass(r)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn annealed_mean_is_horizon_times_mass() {
        let cfg = canonical(0.3, 0.7, "0", vec![4, 6], 4);
        let envs = cfg.draw_environments().unwrap();
        let ann = cfg.run_annealed(&cfg.run_quenched(&envs).unwrap()).unwrap();
        for row in &ann.marginal {
            let expected = row.horizon as f64 * cfg.marginal_mass(row.n).unwrap();
            assert!((row.distribution.truncated_mean() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn dyadic_mean_is_exact() {
        let cfg = canonical(0.5, 0.5, "0", vec![4, 8], 2);
        let envs = cfg.draw_environments().unwrap();
        for row in cfg.mean_convergence_check(&envs).unwrap() {
            assert_eq!(row.expectation, 1.0);
        }
    }

    #[test]
    fn overlap_order_zero_is_the_mean_and_theta_estimate_is_close() {
        let cfg = canonical(0.3, 0.7, "0", vec![8, 12], 2);
        let envs = cfg.draw_environments().unwrap();
        let rows = cfg.overlap_count_check(&envs, &[0, 1]).unwrap();
        let means = cfg.mean_convergence_check(&envs).unwrap();
        for m in &means {
            let r = rows.iter().find(|r| r.u == 0 && r.n == m.n && r.env_id == m.env_id).unwrap();
            assert_eq!(r.expectation, m.expectation);
            // fraction of returns followed by another at lag m
            let lag = rows.iter().find(|r| r.u == 1 && r.n == m.n && r.env_id == m.env_id).unwrap();
            if m.n == 12 {
                assert!((lag.expectation / m.expectation - 0.5).abs() < 0.05);
            }
        }
    }

    #[test]
    fn validation_errors() {
        let mut cfg = canonical(0.3, 0.7, "01", vec![], 1);
        assert!(cfg.validate().is_err());
        cfg.n_list = vec![3, 6];
        assert!(cfg.validate().is_err());
        cfg.n_list = vec![6, 4];
        assert!(cfg.validate().is_err());
        cfg.n_list = vec![4, 6];
        assert!(cfg.validate().is_ok());
        cfg.engines.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn monte_carlo_runs_are_reproducible() {
        let mut cfg = canonical(0.3, 0.7, "0", vec![4], 2);
        cfg.engines = vec![Engine::MonteCarlo];
        let envs = cfg.draw_environments().unwrap();
        let a = cfg.run_quenched(&envs).unwrap();
        let b = cfg.run_quenched(&envs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.rows[0].distribution, y.rows[0].distribution);
        }
    }

    #[test]
    fn gibbs_system_runs_as_single_environment() {
        let g = GibbsSystem::bernoulli(&[0.5, 0.5]).unwrap();
        let mut cfg = canonical(0.3, 0.7, "0", vec![4, 8], 5);
        cfg.system = System::Gibbs(g);
        let envs = cfg.draw_environments().unwrap();
        assert_eq!(envs.len(), 1);
        let q = cfg.run_quenched(&envs).unwrap();
        assert_eq!(q.len(), 1);
        assert!((q[0].theta - 0.5).abs() < 1e-12);
    }
}
