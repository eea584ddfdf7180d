//! The evaluation funnel: ordered stages behind necessary, sufficient and
//! guardrail gates, with early exit and a decision log.

pub mod config;
pub mod report;
pub mod run;

pub use config::{load_config, parse_config, FunnelConfig, StageKind};
pub use report::{emit_report, summary_markdown};
pub use run::{run_funnel, DecisionLog, FinalVerdict, StageRecord, StageVerdict};
