//! Adaptive online methods: bandit allocation over variants and Bayesian
//! optimisation over variant parameters.
//!
//! Inference after adaptive allocation is not corrected here; bandit and BO
//! outputs are search results, not unbiased effect estimates.

pub mod bandit;
pub mod bo;
pub mod gp;

pub use bandit::{bandit_update, run_bandit, thompson_select, BanditConfig, BanditRun, BanditState, Strategy};
pub use bo::{run_bo_offline, run_bo_online, BoConfig, BoResult, ParamSpec, ParamTarget, ScorerTemplate};
pub use gp::{expected_improvement, gp_fit, gp_predict, GpModel, KernelParams};
