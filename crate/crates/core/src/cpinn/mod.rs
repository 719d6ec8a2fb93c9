//! Coupled solution/source networks: hybrid loss, optimizer and the
//! alternating training loop.

pub mod diagnostics;
pub mod lbfgs;
pub mod loss;
pub mod train;

pub use diagnostics::{diagnostics, Diagnostics};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsResult, LbfgsStatus};
pub use loss::{hybrid_loss, mse_dn, mse_pn, HybridLossParts, SolutionObjective, SourceObjective};
pub use train::{
    hierarchical_train, hierarchical_train_from, read_records, train_netg_phase, train_netu_phase, Checkpoint,
    OuterRecord, PhaseOutcome, RecordLine, SourceMode, TrainConfig, TrainOutcome, TrainReport, TrainStatus,
};
