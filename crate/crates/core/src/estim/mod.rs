//! GMM engine and the production-function estimators.

pub mod gmm;
pub mod instruments;
pub mod optimize;
pub mod step1;
pub mod step2;

pub use gmm::{
    gmm_estimate, gmm_estimate_profiled, identification_rank_check, profiled_rank_check, FullSystem, GmmOptions,
    GmmResult, LinearDesign, MomentData, MomentSystem, ProfiledSystem, RankReport, Weighting,
};
pub use instruments::{InstrumentSet, InstrumentTerm};
pub use optimize::OptimOptions;
pub use step1::{step1_estimate, Step1Options, Step1Output, Step1System};
pub use step2::{step2_estimate, Step2Options, Step2Output, Step2System};

use crate::panel::Panel;

/// Group index per sampled observation and the sorted distinct years.
pub(crate) fn year_groups(panel: &Panel, sample: &[usize]) -> (Vec<usize>, Vec<i32>) {
    let mut years: Vec<i32> = sample.iter().map(|&i| panel.obs()[i].year).collect();
    years.sort_unstable();
    years.dedup();
    let groups = sample
        .iter()
        .map(|&i| years.binary_search(&panel.obs()[i].year).expect("year present"))
        .collect();
    (groups, years)
}
