//! Mixed-model fitting, hypothesis tests and report tables.

pub mod design;
pub mod inference;
pub mod lmm;
pub mod report;
pub mod special;
pub mod tables;

pub use design::{build_design, Design, ModelSpec, Subset};
pub use inference::{bh_adjust, lrt, select_model, stars, wald_tests, LrtResult, WaldTest};
pub use lmm::{fit_lmm_ml, profiled_loglik, LmmFit};
pub use report::{seasonal_profile_report, ProfileRow};
pub use tables::{fit_all, fit_spec, FitTables};
