//! End-effector perturbation search.
//!
//! Contactless frames draw an independent random rigid motion per arm.
//! Contact-rich frames search for one world-frame translation shared by
//! both arms with generalized simulated annealing over a penalty cost.

mod anneal;
mod sampler;

pub use anneal::{dual_annealing, AnnealConfig, AnnealError, AnnealResult, StopReason};
pub use sampler::{
    check_constraints, cost, frame_rng, sample_contact_rich, sample_contactless, ConstraintReport, CostBreakdown,
    CostContext, IdentityPerturbation, PenaltyWeights, PerturbationConfig, PerturbationSample, PerturbationSource, PhaseSampler,
    SamplingError,
};
