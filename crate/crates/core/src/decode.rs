//! Stage-1 scoring and threshold decoding.
//!
//! A family's score counts the positive tests it was selected for. Healthy
//! families score `mu_p = T_I (h_{k_f} - (1 - rho/F))` in expectation and
//! infected ones `mu_m = T_I (alpha + (1 - alpha) h_{k_f - 1} - (1 - rho/F))`,
//! where
//!
//! ```text
//! h_x = sum_{l=0..x} C(x,l) alpha^l (1-alpha)^(x-l) (1 - C(F-l-1, rho-1)/C(F, rho)).
//! ```
//!
//! The decoder declares a family infected iff its score reaches the threshold
//! `d = (mu_m + mu_p) / 2` (inclusive; `d` stays a real midpoint, the integer
//! scores are compared against it directly).

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bitmat::Outcomes;
use crate::combin::{binomial, prob_selects_and_misses};
use crate::design::{
    sample_contact_matrix, sample_representatives, run_tests, ContactMatrix, Stage1Config,
};
use crate::params::{GroundTruth, Parameters};

#[derive(Debug, Error, PartialEq)]
pub enum MomentsError {
    #[error("score moments need k_f >= 2 (k_f = {0})")]
    TooFewInfected(u32),
    #[error("rho = {rho} exceeds floor(F / 2 k_f) = {max}; the closed-form bounds are only proven below it")]
    RhoTooLarge { rho: u32, max: u32 },
    #[error("alpha must lie in (0, 1] (alpha = {0})")]
    BadAlpha(f64),
    #[error("score moments need at least one test")]
    NoTests,
}

/// `h_x`: probability that a uniform weight-`rho` row selects a fixed healthy
/// family or misses all of `x` active infected families, averaged over the
/// binomial activity pattern.
pub fn h_value(x: u32, f_total: u32, rho: u32, alpha: f64) -> f64 {
    assert!(rho >= 1 && rho <= f_total, "need 1 <= rho <= F");
    assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
    assert!(x < f_total, "x = {x} leaves no healthy family");
    let mut total = 0.0;
    for ell in 0..=x {
        let weight = binomial(x as u64, ell as u64)
            * alpha.powi(ell as i32)
            * (1.0 - alpha).powi((x - ell) as i32);
        if weight == 0.0 {
            continue;
        }
        total += weight * (1.0 - prob_selects_and_misses(f_total, rho, ell));
    }
    total
}

/// Per-test expected scores `(mu_p / T_I, mu_m / T_I)` for a healthy and an
/// infected family. Exact for any `1 <= rho <= F`; the proposition-style
/// *bounds* additionally need `rho <= floor(F / 2 k_f)` (see
/// [`ScoreMoments::new`]).
pub fn expected_score_rates(f_total: u32, k_f: u32, rho: u32, alpha: f64) -> (f64, f64) {
    assert!(k_f >= 1 && k_f < f_total);
    let miss_all = 1.0 - rho as f64 / f_total as f64;
    let mu_p = h_value(k_f, f_total, rho, alpha) - miss_all;
    let mu_m = alpha + (1.0 - alpha) * h_value(k_f - 1, f_total, rho, alpha) - miss_all;
    (mu_p, mu_m)
}

/// Closed-form score statistics used to place the decoder threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreMoments {
    /// Expected score of a healthy family over `t1` tests.
    pub mu_p: f64,
    /// Expected score of an infected family over `t1` tests.
    pub mu_m: f64,
    /// `h_x` for `x = 0..=k_f`.
    pub h: Vec<f64>,
    /// Proven floor on `mu_m - mu_p`: `alpha rho T_I e^-2 / (2 F)`.
    pub gap_lower_bound: f64,
    pub t1: u32,
}

impl ScoreMoments {
    /// Evaluate the closed forms and check the proven bounds. Refuses inputs
    /// outside the hypotheses (`k_f >= 2`, `rho <= floor(F / 2 k_f)`) rather
    /// than extrapolating.
    pub fn new(
        f_total: u32,
        k_f: u32,
        rho: u32,
        alpha: f64,
        t1: u32,
    ) -> Result<Self, MomentsError> {
        if k_f < 2 {
            return Err(MomentsError::TooFewInfected(k_f));
        }
        let max_rho = f_total / (2 * k_f);
        if rho > max_rho {
            return Err(MomentsError::RhoTooLarge { rho, max: max_rho });
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(MomentsError::BadAlpha(alpha));
        }
        if t1 == 0 {
            return Err(MomentsError::NoTests);
        }
        let (rate_p, rate_m) = expected_score_rates(f_total, k_f, rho, alpha);
        let t = t1 as f64;
        let mu_p = t * rate_p;
        let mu_m = t * rate_m;
        let scale = alpha * rho as f64 * t / f_total as f64;
        let gap_lower_bound = 0.5 * scale * (-2.0f64).exp();
        let h = (0..=k_f)
            .map(|x| h_value(x, f_total, rho, alpha))
            .collect();

        let moments = Self {
            mu_p,
            mu_m,
            h,
            gap_lower_bound,
            t1,
        };
        // Proven bounds; fail loudly if the closed forms ever drift.
        let slack = 1e-9 * t;
        assert!(moments.mu_m > moments.mu_p, "mu_m <= mu_p");
        assert!(moments.mu_p <= scale + slack, "mu_p above alpha rho T / F");
        assert!(
            moments.mu_m <= 2.0 * scale + slack,
            "mu_m above 2 alpha rho T / F"
        );
        assert!(
            moments.mu_m - moments.mu_p >= moments.gap_lower_bound - slack,
            "score gap below its proven floor"
        );
        Ok(moments)
    }
}

/// Per-family scores: `S_f` counts the positive tests that selected `f`.
pub fn score(matrix: &ContactMatrix, outcomes: &Outcomes) -> Vec<u32> {
    assert_eq!(
        matrix.tests(),
        outcomes.len(),
        "outcomes length differs from the number of tests"
    );
    let mut scores = vec![0u32; matrix.families()];
    for t in 0..matrix.tests() {
        if outcomes.get(t) {
            for f in matrix.support(t) {
                scores[f] += 1;
            }
        }
    }
    scores
}

/// Families whose score reaches `d` (inclusive), ascending.
pub fn threshold_decode(scores: &[u32], d: f64) -> Vec<u32> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s as f64 >= d)
        .map(|(f, _)| f as u32)
        .collect()
}

/// Outcome of one stage-1 decode, with error sets against the ground truth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreReport {
    pub scores: Vec<u32>,
    pub threshold: f64,
    pub declared: Vec<u32>,
    pub false_positives: Vec<u32>,
    pub misses: Vec<u32>,
}

impl ScoreReport {
    pub fn is_exact(&self) -> bool {
        self.false_positives.is_empty() && self.misses.is_empty()
    }
}

/// One full stage-1 pass plus bookkeeping the caller audits.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stage1Run {
    pub report: ScoreReport,
    /// Members pooled per test (`rho * r`); must never exceed `rho_T`.
    pub pool_size: u32,
}

/// Sample a design, run the tests, score, and threshold-decode.
pub fn decode_stage1<R: Rng>(
    p: &Parameters,
    cfg: &Stage1Config,
    truth: &GroundTruth,
    rng: &mut R,
) -> Stage1Run {
    let matrix = sample_contact_matrix(cfg.tests, p.families, cfg.rho, rng);
    let plan = sample_representatives(&matrix, p.family_size, cfg.reps_per_family, rng);
    let outcomes = run_tests(truth, &matrix, &plan);
    let scores = score(&matrix, &outcomes);
    let declared = threshold_decode(&scores, cfg.threshold);
    let false_positives = declared
        .iter()
        .copied()
        .filter(|&f| !truth.is_infected(f))
        .collect();
    let misses = truth
        .infected_families
        .iter()
        .copied()
        .filter(|f| declared.binary_search(f).is_err())
        .collect();
    Stage1Run {
        report: ScoreReport {
            scores,
            threshold: cfg.threshold,
            declared,
            false_positives,
            misses,
        },
        pool_size: plan.pool_size(),
    }
}
