//! Co-optimization of shared-cache partitioning and partitioned task
//! allocation for hard real-time tasks on multicore platforms.
//!
//! The core search ([`optimizer`]) is generic over the [`Scalar`] used for
//! utilization arithmetic; [`Rational`] gives exact tie handling and `f64`
//! is the fast alternative.

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod generator;
pub mod optimizer;
pub mod oracle;
pub mod scalar;
pub mod taskmodel;

pub use analysis::{CoreAssignment, CoreTask, Policy, SchedulabilityTest};
pub use error::{Error, Result};
pub use optimizer::{optimize, Optimizer, Outcome, PartialSolution, SortCriterion, Solution};
pub use scalar::Scalar;
pub use taskmodel::{ExecProfile, PlatformConfig, Task, TaskSet, Tick};

/// Exact utilization arithmetic.
pub type Rational = num_rational::Ratio<i128>;

/// Arbitrary-precision utilization arithmetic for instances whose period
/// hyperperiod does not fit `Rational`.
pub type BigRational = num_rational::BigRational;

/// Floating-point utilization arithmetic.
pub type Real = f64;

pub type ExactPartialSolution = PartialSolution<Rational>;
pub type FloatPartialSolution = PartialSolution<Real>;
pub type ExactOutcome = Outcome<Rational>;
pub type FloatOutcome = Outcome<Real>;
