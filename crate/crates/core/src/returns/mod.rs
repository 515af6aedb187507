//! Return counting at a target cylinder, return-pattern taxonomy, and the engines
//! that produce the law of the return count `ζ = Σ_{j=1}^{N} 1_A ∘ σ^j`.

mod counting;
mod distribution;
mod moments;
mod patterns;

pub use counting::{count_returns, observation_time};
pub use distribution::{
    exact_count_distribution, exhaustive_count_distribution, monte_carlo_count_distribution,
    fmt_num, CountDistribution, Engine, DEFAULT_R_MAX,
};
pub use moments::{binomial_moment_enumeration, rare_vs_main_split, MomentSplit};
pub use patterns::{classify_pattern, is_rare, PatternClass, ReturnPattern};
