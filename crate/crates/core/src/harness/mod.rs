//! Pointing task, trial events, signal utilities, synthetic data and horizon diagnostics.

pub mod events;
pub mod iso;
pub mod signal;
pub mod synth;
pub mod turnpike;

pub use iso::{nominal_posture, rest_state, IsoTask};
pub use signal::{gradient, project_onto_axis, resample_to_grid, AxisProjection};
pub use events::{detect_hit, detect_onset, trial_events, TrialEvents, HIT_SPEED, ONSET_ACCELERATION};
pub use synth::{synthesize_references, Dataset, Manifest, ManifestEntry, SynthSpec};
pub use turnpike::{open_loop, turnpike_diagnostic, OpenLoop, TurnpikeCurve, TurnpikeResult, TURNPIKE_EPSILON};
