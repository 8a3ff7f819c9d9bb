//! Partition functions, entropy, the J statistic, empirical fields, DLR
//! residuals and exact enumeration of micro-instances.

mod dlr;
mod entropy;
mod enumerate;
mod field;
mod functionals;
mod partition;

pub use dlr::{dlr_residuals, kernel_draws, DlrReport, DlrSettings, DEFAULT_DLR_K, MIN_INNER_SAMPLES};
pub use entropy::{
    gibbs_samples, j_statistic, relative_entropy_estimate, specific_entropy_curve, CurvePoint, CurveSettings,
    EntropyCurve, EntropyReport, JStatistic, SamplerChoice, MIN_J_SAMPLES,
};
pub use enumerate::{
    empirical_law, enumerate_gibbs, kernel_compatibility_check, total_variation, ExactLaw, MicroInstance,
    STATE_LIMIT,
};
pub use field::{empirical_field_draw, FieldDraw};
pub use functionals::{library, FunctionalKind, TestFunctional, LIBRARY_VERSION};
pub use partition::{from_log_weights, partition_estimate, PartitionEstimate, MIN_PARTITION_SAMPLES};
