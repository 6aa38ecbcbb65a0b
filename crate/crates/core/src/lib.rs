//! Differentially private bandit convex optimization over sets reached only
//! through a linear optimization oracle.
//!
//! The bandit loop ([`private_bandit`]) batches one-point gradient estimates
//! ([`smoothing`]), releases their prefix sums through a noisy binary tree
//! ([`tree_agg`]) and maps the released sums back to the set with
//! conditional gradient ([`frank_wolfe`]). [`noisy_oco`] is the full-information
//! template it instantiates; [`bench_audit`] and [`privacy_audit`] hold the
//! experiment and verification harness.

pub mod bench_audit;
pub mod error;
pub mod frank_wolfe;
pub mod geometry;
pub mod losses;
pub mod noisy_oco;
pub mod point;
pub mod privacy_audit;
pub mod private_bandit;
pub mod randomness;
pub mod smoothing;
pub mod tree_agg;

pub use error::{Error, Result};
pub use geometry::{DecisionSet, DomainKind, LinearOracle, MatroidPart};
pub use point::Point;
pub use private_bandit::{BanditParams, FeasibilityMode, Privacy, RegretTrace};
pub use randomness::{NoiseKind, NoiseSpec, RandomSource};
pub use smoothing::{Loss, LossOracle};

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
/// Output order is always `0..n`.
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
