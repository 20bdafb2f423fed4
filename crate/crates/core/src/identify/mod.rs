//! Applied-torque identification (CFAT), torque ranges, trajectory metrics and cost-weight fitting.

pub mod cfat;
pub mod fitting;
pub mod ranges;
pub mod reference;
pub mod rmse;

pub use cfat::{cfat_loss, cfat_run, cfat_run_all, cfat_step, inverse_dynamics_torques, reapply_torques, CfatOptions, CfatResult, CfatStep, CfatTarget};
pub use fitting::{cmaes_fit, fitting_loss, initial_state, trial_rmse, FitEvaluation, FitResult, FIT_START_LOG10};
pub use ranges::{extract_torque_ranges, torque_report, TorqueRanges};
pub use reference::{ReferenceTrajectory, TrialMeta};
pub use rmse::{rmse, rmse_cursor, rmse_joint, RmseField};
