//! Measurement and inference for blockchain consensus decentralization.
//!
//! The crate is `no_std` with `alloc`: block attribution, per-day decentralization metrics,
//! event panels, the difference-in-differences estimator family, and a seeded block
//! production simulator. File formats and the command line live in the `decentralab` crate.

#![no_std]
// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod attribution;
pub mod econometrics;
pub mod error;
pub mod metrics;
pub mod panel;
pub mod records;
pub mod shocklab;

pub use error::{Error, Result};
pub use metrics::{DailyDistribution, Metric, MetricsRow};
pub use panel::{assemble_panel, Panel, PanelObservation};
pub use records::{LabelRegistry, NodeDayRecord, RawBlockRecord};
