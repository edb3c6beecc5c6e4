//! Product-space relatedness analytics over country trade flows and firm
//! component data: revealed comparative advantage, proximity networks,
//! product complexity, country-specific closeness centrality, complexity
//! potential, logistic validation of switches, expected-gain forecasts and
//! import concentration.

pub mod centrality;
pub mod concentration;
pub mod error;
pub mod fixture;
pub mod forecast;
pub mod ingest;
pub mod matrix;
pub mod pipeline;
pub mod potential;
pub mod productspace;
pub mod regress;
pub mod specialization;
pub mod stats;

pub use nalgebra;

pub use centrality::{ClosenessMode, CountrySubspace};
pub use error::{Error, ErrorKind, Result};
pub use ingest::{ComponentTaxonomy, FirmProductTable, Powertrain, TradeRecord, TradeTable};
pub use matrix::BinaryMatrix;
pub use pipeline::{Manifest, Pipeline, PipelineConfig, PipelineError, Stage};
pub use productspace::ProductSpace;
pub use regress::RegressionResult;
pub use specialization::{Scope, SpecializationSet};
