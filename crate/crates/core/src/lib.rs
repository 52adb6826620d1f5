//! Discrete-event simulator for cooperative monitoring of road events by
//! vehicles, with dissemination of the collected data to base stations.
//!
//! The pipeline is: a [`scenario::ScenarioFile`] is validated and built into
//! a [`protocol::SimSetup`]; [`protocol::run`] steps it tick by tick and
//! returns a [`protocol::SimLog`]; [`metrics`] turns the log into series and
//! summaries.

pub mod clustering;
pub mod metrics;
pub mod mobility;
pub mod model;
pub mod protocol;
pub mod radio;
pub mod scenario;

pub use clustering::StrategyKind;
pub use protocol::{run, SimLog, SimSetup};
