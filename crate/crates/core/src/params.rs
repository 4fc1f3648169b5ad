//! Problem parameters and ground truth for the community model.
//!
//! A population of `F` families with `M` members each (`n = F * M` in total)
//! hides `k_f` infected families; each infected family hides `k_m` infected
//! members. Both levels are drawn uniformly at random (combinatorial prior).
//! Indexing is 0-based everywhere in memory; human-readable output adds 1.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::uniform_subset;

/// Default decoder constant: `64 e^4`.
pub fn default_zeta() -> f64 {
    64.0 * (4.0f64).exp()
}

/// Problem constants. `n = F * M` is always derived, never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// Number of families `F`.
    pub families: u32,
    /// Members per family `M`.
    pub family_size: u32,
    /// Number of infected families `k_f`.
    pub infected_families: u32,
    /// Infected members inside each infected family `k_m`.
    pub infected_per_family: u32,
    /// Largest number of members that may share one test, `rho_T`.
    pub pool_budget: u32,
    /// Error-exponent target: decoding fails with probability at most `n^-lambda`.
    pub lambda: f64,
    /// Optional override for the decoder constant zeta (default `64 e^4`).
    pub zeta_override: Option<f64>,
    /// Master PRNG seed; per-trial substreams derive from it.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ParamError {
    #[error("k_f >= 2 violated (k_f = {0})")]
    TooFewInfectedFamilies(u32),
    #[error("F >= 2 k_f violated (F = {families}, k_f = {infected})")]
    TooManyInfectedFamilies { families: u32, infected: u32 },
    #[error("M >= 1 violated")]
    EmptyFamilies,
    #[error("1 <= k_m <= M violated (k_m = {infected}, M = {family_size})")]
    BadInfectedMembers { infected: u32, family_size: u32 },
    #[error("rho_T >= 1 violated")]
    ZeroPoolBudget,
    #[error("lambda > 0 violated (lambda = {0})")]
    NonPositiveLambda(f64),
    #[error("zeta > 0 violated (zeta = {0})")]
    NonPositiveZeta(f64),
    #[error("family id {family} out of range [0, {families})")]
    FamilyOutOfRange { family: u32, families: u32 },
    #[error("member index {member} out of range [0, {family_size})")]
    MemberOutOfRange { member: u32, family_size: u32 },
}

impl Parameters {
    /// Total population size `n = F * M`.
    pub fn population(&self) -> u64 {
        self.families as u64 * self.family_size as u64
    }

    /// Decoder constant zeta: the override if given, else `64 e^4`.
    pub fn zeta(&self) -> f64 {
        self.zeta_override.unwrap_or_else(default_zeta)
    }

    /// Check every structural constraint, naming the first violated one.
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.infected_families < 2 {
            return Err(ParamError::TooFewInfectedFamilies(self.infected_families));
        }
        if self.families < 2 * self.infected_families {
            return Err(ParamError::TooManyInfectedFamilies {
                families: self.families,
                infected: self.infected_families,
            });
        }
        if self.family_size == 0 {
            return Err(ParamError::EmptyFamilies);
        }
        if self.infected_per_family == 0 || self.infected_per_family > self.family_size {
            return Err(ParamError::BadInfectedMembers {
                infected: self.infected_per_family,
                family_size: self.family_size,
            });
        }
        if self.pool_budget == 0 {
            return Err(ParamError::ZeroPoolBudget);
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(ParamError::NonPositiveLambda(self.lambda));
        }
        if let Some(z) = self.zeta_override {
            if z.is_nan() || z <= 0.0 {
                return Err(ParamError::NonPositiveZeta(z));
            }
        }
        Ok(())
    }
}

/// 0-based global id of member `member` of family `family`:
/// `family * M + member`. Printed ids are this value plus one.
pub fn global_member_id(family: u32, member: u32, p: &Parameters) -> Result<u64, ParamError> {
    if family >= p.families {
        return Err(ParamError::FamilyOutOfRange {
            family,
            families: p.families,
        });
    }
    if member >= p.family_size {
        return Err(ParamError::MemberOutOfRange {
            member,
            family_size: p.family_size,
        });
    }
    Ok(family as u64 * p.family_size as u64 + member as u64)
}

/// The hidden infected sets: which families, and which members inside each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GroundTruth {
    /// Sorted ids of the infected families.
    pub infected_families: Vec<u32>,
    /// Sorted infected member indices per infected family, aligned with
    /// `infected_families`.
    pub infected_members: Vec<Vec<u32>>,
}

impl GroundTruth {
    pub fn is_infected(&self, family: u32) -> bool {
        self.infected_families.binary_search(&family).is_ok()
    }

    /// Infected member indices of `family`; `None` for healthy families.
    pub fn members_of(&self, family: u32) -> Option<&[u32]> {
        self.infected_families
            .binary_search(&family)
            .ok()
            .map(|i| self.infected_members[i].as_slice())
    }
}

/// Draw ground truth under the combinatorial prior: a uniform `k_f`-subset of
/// families, then an independent uniform `k_m`-subset of members per infected
/// family.
///
/// Only needs `k_f <= F` and `k_m <= M`; the scheme-level assumptions are
/// checked by [`Parameters::validate`], not here.
pub fn sample_ground_truth<R: Rng>(p: &Parameters, rng: &mut R) -> GroundTruth {
    let infected_families = uniform_subset(rng, p.families, p.infected_families);
    let infected_members = infected_families
        .iter()
        .map(|_| uniform_subset(rng, p.family_size, p.infected_per_family))
        .collect();
    GroundTruth {
        infected_families,
        infected_members,
    }
}
