//! Two-stage group testing for community-structured populations under a
//! per-test pool-size budget.
//!
//! A population of `F` families with `M` members each hides `k_f` infected
//! families, each with `k_m` infected members; at most `rho_T` members may
//! share a test. Stage 1 pools small representative sets from `rho` families
//! per test and identifies the infected families with a score-threshold
//! decoder; stage 2 recovers the infected members inside them. The crate
//! implements the designs, the decoders, the closed-form test-count
//! expressions, and independent verifiers for all of them, plus the classical
//! dilution model as a special case.
//!
//! ```
//! use commgt::params::{Parameters, sample_ground_truth};
//! use commgt::design::choose_stage1_params;
//! use commgt::decode::decode_stage1;
//! use commgt::rng::trial_rng;
//!
//! let p = Parameters {
//!     families: 40,
//!     family_size: 8,
//!     infected_families: 2,
//!     infected_per_family: 4,
//!     pool_budget: 8,
//!     lambda: 0.5,
//!     zeta_override: Some(16.0),
//!     seed: 1,
//! };
//! let cfg = choose_stage1_params(&p).unwrap();
//! let truth = sample_ground_truth(&p, &mut trial_rng(p.seed, 0));
//! let run = decode_stage1(&p, &cfg, &truth, &mut trial_rng(p.seed, 1));
//! assert!(run.pool_size <= p.pool_budget);
//! assert_eq!(run.report.declared, truth.infected_families);
//! ```

pub mod bitmat;
pub mod bounds;
pub mod combin;
pub mod decode;
pub mod design;
pub mod params;
pub mod rng;
pub mod stage2;
pub mod verify;

pub mod guide;

pub use bounds::{BoundReport, PoolBudget};
pub use decode::{ScoreMoments, ScoreReport};
pub use design::{DilutionParams, Stage1Config};
pub use params::{GroundTruth, Parameters};
pub use verify::{McReport, VerificationReport};
