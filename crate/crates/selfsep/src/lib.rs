//! Two-pilot collision-avoidance simulation and predictors of joint pilot
//! decisions.
//!
//! The library simulates encounters between two aircraft whose pilots each
//! pick a single heading change by weighing separation against maneuver
//! effort, observed through noisy sensors at two fidelities (out-the-window
//! only, or fused with instruments). On top of the simulator it builds
//! predictors of the joint decision from recorded data: nonparametric
//! locally weighted regression, and Bayesian inference over the pilots'
//! utility weights through kernel density estimates of simulated action
//! distributions. Both come in single-fidelity and multi-fidelity forms,
//! and the evaluation module compares their prediction error against the
//! error floor of the generative model itself.

pub mod density;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod kinematics;
pub mod model_based;
pub mod model_free;
pub mod perception;
pub mod pilot;
pub mod scenario;
pub mod seeds;

pub use error::{Error, Result};
pub use evaluation::Method;
pub use experiment::{run_experiment, ExperimentConfig, ExperimentSummary};
pub use kinematics::{distance, propagate, AircraftState};
pub use perception::{Fidelity, ObservationModel};
pub use pilot::{DecisionConfig, DistanceScale, JointAction, UtilityWeights};
pub use scenario::{Dataset, Encounter, GeometryConfig};
