//! Labor supply by worker type, bargaining conduct and the decomposition of
//! composite labor frictions.

pub mod iv;
pub mod supply;
pub mod theta;

pub use iv::{ols, tsls, Block, IvResult};
pub use supply::{
    estimate_labor_supply, inverse_elasticity, inverse_supply_elasticity_term, panel_shares, LaborSupplyData,
    LaborSupplyParams, SupplyEstimate, SupplyInstruments, SupplyMethod, TimeFactor, WorkerType,
};
pub use theta::{
    apply_conduct, conduct_inputs, estimate_theta, in_bargaining_range, theta_from_coef, ConductInputs, ThetaEstimate,
    ThetaOptions,
};
