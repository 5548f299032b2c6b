//! Estimation of nested-CES production with labor-augmenting productivity,
//! output markups and worker-type labor-market markdowns, together with a
//! synthetic-panel generator that satisfies every estimating equation.

pub mod bootstrap;
pub mod dgp;
pub mod error;
pub mod estim;
pub mod kalman;
pub mod laborsupply;
pub mod markets;
pub mod model;
pub mod panel;
pub mod stats;

pub use error::{Error, Result};
pub use model::{GeometricMeans, PanelObservation, ProductionParams};
pub use panel::Panel;
