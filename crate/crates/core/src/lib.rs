//! Finite-horizon Gaussian Gittins index: exact computation by backward
//! induction, a closed-form approximation, bandit policies built on them and
//! a seeded regret simulator.

pub mod approx;
pub mod bayes2;
pub mod engine;
pub mod error;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod roots;
pub mod special;
pub mod spline;
pub mod table;
pub mod verify;

pub use engine::{
    backward_induction, bellman_backup, exploration_bonus, gauss_expect_positive_spline, gittins_index, index_zero_root,
    noise_variance, posterior_update, EngineConfig, IndexEngine, IndexQuery, Posterior, ValueFunction,
};
pub use approx::{approx_gittins, beta, compare_with_exact, ApproxParams, Deviation};
pub use bayes2::{bayes_select, bayes_value, closed_form_n2, gittins_threshold_n2, BayesPolicy, BayesSolution, BayesState};
pub use error::{Error, Result};
pub use policy::{BanditPolicy, IndexSource, Policy, PolicyKind, PolicySpec, PolicyState};
pub use spline::{AffineTail, FitOptions, PiecewiseQuadratic, QuadSegment};
pub use table::{BuildStats, IndexTable};
pub use sim::{play, run_episode, run_sweep, BanditInstance, RegretEstimate, SweepConfig, SweepResult};
pub use verify::{check_f_beta, check_thm1_bracket, f_beta, mc_expected_tau, mc_gaussian_tails, stopping_time, MCCheckReport, StoppingRule};
