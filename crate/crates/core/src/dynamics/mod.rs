//! Opinion dynamics with short- and long-term incentives.

mod augmented;
mod kernel;
mod model;
mod observe;
mod simulate;

pub use augmented::{assemble_augmented, AugmentedModel};
pub use kernel::{kernel_weights, memory_convolution, KernelVariant, MemoryKernel};
pub use model::{
    effective_input, long_term_headroom, opinion_update, short_term_headroom, step,
    IncentiveInput, SimState, BOX_TOL,
};
pub use observe::{estimate_inclination, sample_observation, Estimator, EstimatorKind};
pub use simulate::{
    simulate_trajectory, DecisionContext, Policy, ScheduledPolicy, Trajectory, TrajectoryStep,
    ZeroPolicy,
};
