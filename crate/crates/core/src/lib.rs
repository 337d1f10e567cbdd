//! Participatory classification systems.
//!
//! A participatory system lets each person decide, at prediction time, which
//! categorical group attributes to disclose. Every reporting option that
//! survives learning carries a held-out certificate that it improves on the
//! option one step closer to opting out, and opting out entirely is served by
//! a generic model.
//!
//! The pipeline is: [`pool::build_pool`] trains candidate models,
//! [`interface`] builds reporting trees, and [`assembly::learn_systems`]
//! assigns models to tree nodes and prunes uncertified options.
//! [`metrics`] evaluates systems and static models, and [`simulate`] models
//! individual disclosure decisions.

pub mod assembly;
pub mod config;
pub mod dataset;
pub mod error;
pub mod interface;
pub mod metrics;
pub mod models;
pub mod pool;
pub mod simulate;
pub mod synth;

pub use assembly::{learn_systems, GainCertificate, LearnConfig, ParticipatorySystem, SystemKind};
pub use config::SchemaConfig;
pub use dataset::{Dataset, GroupSchema, ReportingGroup, SplitBundle};
pub use error::{Error, Result};
pub use models::{Metric, ModelClass, TrainedModel};
pub use pool::ModelPool;

use sha2::{Digest, Sha256};

/// Toolkit version recorded in artifact provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Child seed for a named stream under `root`.
pub fn derive_seed(root: u64, stream: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(stream.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
