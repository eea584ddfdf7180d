//! Evaluation-funnel toolkit for search and recommender systems.
//!
//! Stages, cheapest first: counterfactual reconstruction and its quality
//! check, offline verification (width/depth), offline validation (judged
//! relevance metrics), then online validation against a simulated search
//! world (A/B tests with sequential guardrails, regression adjustment and
//! exposure filtering, team-draft interleaving, bandits and Bayesian
//! optimization). [`funnel`] chains the stages behind criteria gates.

pub mod adaptive;
pub mod chart;
pub mod counterfactual;
pub mod error;
pub mod funnel;
pub mod gates;
pub mod interleave;
pub mod logs;
pub mod offline;
pub mod online;
pub mod rng;
pub mod similarity;
pub mod simworld;
pub mod stats;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
