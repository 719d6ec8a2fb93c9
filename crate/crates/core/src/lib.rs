//! Coupled physics-informed networks for source-term discovery in 1-D
//! heat and wave problems, with a recurrent soft-sensing extension.
//!
//! The numerical core is generic over the scalar type (`f32`/`f64`); the
//! aliases at the bottom fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cpinn;
pub mod error;
pub mod field;
pub mod metrics;
pub mod network;
pub mod pde;
pub mod rp;
pub mod sampling;
pub mod scalar;

pub use autodiff::{jet_forward, jet_forward_xt, loss_grad, Jet2, Order, ParamGrad};
pub use cpinn::{
    diagnostics, hierarchical_train, lbfgs_minimize, Diagnostics, HybridLossParts, LbfgsConfig, SourceMode,
    TrainConfig, TrainOutcome, TrainReport, TrainStatus,
};
pub use error::{Error, Result};
pub use field::Field;
pub use metrics::{evaluate, pearson_cc, rmse, spearman, EvalResult};
pub use network::{fold_input_box, init_xavier, MlpParams, NetRole, NetSpec};
pub use pde::{EdgeCondition, PdeProblem, ProblemKind};
pub use rp::{RpConfig, SensorSeries, SoftSensorConfig, TapSource};
pub use sampling::{sample, Dataset, EvalGrid, NeumannLabels, Sample, SamplingConfig};
pub use scalar::Scalar;

pub type Jet = Jet2<f64>;
pub type Mlp = MlpParams<f64>;
pub type Problem = PdeProblem<f64>;
pub type Data = Dataset<f64>;
pub type Grid = EvalGrid<f64>;
pub type Rp = RpConfig<f64>;
pub type Sensor = SensorSeries<f64>;
