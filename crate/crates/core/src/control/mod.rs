//! Stage costs, open-loop optimal control, motor noise and the receding-horizon loop.

pub mod config;
pub mod cost;
pub mod mpc;
pub mod noise;
pub mod ocp;

pub use config::{MpcConfig, TrialMode};
pub use cost::{commanded_torque_derivative, CostFamily, CostSpec};
pub use mpc::{run_mpc, shift_guess, LogRow, SolverRecord, TrialLog};
pub use noise::{inject_noise, sample_noisy_control, NoiseConfig};
pub use ocp::{horizon_costs, rollout, solve_ocp, stage_cost, OcpSolution, Plant, Rollout, SystemState};
