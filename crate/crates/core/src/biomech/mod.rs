//! Torque-actuated serial arm: geometry, rigid-body dynamics and muscle activation.

pub mod dynamics;
pub mod kinematics;
pub mod model;
pub mod muscle;
pub mod state;

pub use dynamics::{bias_torque, forward_dynamics, gravity_torque, inverse_dynamics, mass_matrix};
pub use kinematics::{forward_kinematics, inverse_kinematics, marker_jacobian, IkOptions};
pub use model::{ChainModel, Joint, LimitParams, MuscleConstants, Segment};
pub use muscle::{activation_to_torque, step_muscle};
pub use state::{joint_limit_torque, step_torque_in_place, step_user, step_user_in_place, BodyState};
