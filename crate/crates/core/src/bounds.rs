//! Closed-form test-count expressions and order-wise comparisons.
//!
//! Every quantity here is an "order term": the argument of a Theta with the
//! multiplicative constant set to 1 and natural logarithms throughout. The
//! stage-1 guarantee evaluates to `zeta (1+lambda) F ln(n) / f(rho_hat)` with
//! `f(rho) = rho (1 - (1 - k_m/M)^(rho_T / 2 rho))` and
//! `rho_hat = min(rho_T, floor(F / 2 k_f))`.

use serde::Serialize;

use crate::params::{ParamError, Parameters};

/// Pool budget for the formula evaluators. `Unbounded` is accepted here only;
/// simulation always needs a finite budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolBudget {
    Finite(u32),
    Unbounded,
}

impl PoolBudget {
    pub fn as_f64(self) -> f64 {
        match self {
            PoolBudget::Finite(b) => b as f64,
            PoolBudget::Unbounded => f64::INFINITY,
        }
    }
}

/// `f(rho) = rho (1 - (1 - k_m/M)^(rho_T / 2 rho))`.
pub fn f_of_rho(rho: u32, pool_budget: f64, infected: u32, family_size: u32) -> f64 {
    assert!(rho >= 1, "rho must be positive");
    assert!(
        (rho as f64) <= pool_budget,
        "rho = {rho} exceeds the pool budget"
    );
    assert!(infected >= 1 && infected <= family_size, "need 1 <= k_m <= M");
    let base = 1.0 - infected as f64 / family_size as f64;
    rho as f64 * (1.0 - base.powf(pool_budget / (2.0 * rho as f64)))
}

/// `g(rho) = rho (1 - upsilon^(rho_T / rho))` for `upsilon` in (0, 1).
pub fn g_of_rho(rho: u32, upsilon: f64, pool_budget: f64) -> f64 {
    assert!(rho >= 1, "rho must be positive");
    assert!(upsilon > 0.0 && upsilon < 1.0, "upsilon must lie in (0, 1)");
    rho as f64 * (1.0 - upsilon.powf(pool_budget / rho as f64))
}

/// Scan `rho = 1..=u` for the maximizer of [`g_of_rho`]; ties break toward
/// larger `rho`. The maximum always sits at `u`.
pub fn argmax_g(u: u32, upsilon: f64, pool_budget: f64) -> u32 {
    assert!(u >= 1);
    let mut best = 1;
    let mut best_value = g_of_rho(1, upsilon, pool_budget);
    for rho in 2..=u {
        let value = g_of_rho(rho, upsilon, pool_budget);
        if value >= best_value {
            best = rho;
            best_value = value;
        }
    }
    best
}

/// `rho_hat = min(rho_T, floor(F / 2 k_f))`, at least 1.
pub fn rho_hat(families: u32, infected_families: u32, budget: PoolBudget) -> u32 {
    let unconstrained = families / (2 * infected_families);
    match budget {
        PoolBudget::Finite(b) => b.min(unconstrained),
        PoolBudget::Unbounded => unconstrained,
    }
    .max(1)
}

/// Generic sparsity-constrained test count:
/// `max(N / rho_U, k ln N) * (ln(N~) / ln N)`.
pub fn t_hat(items: f64, defectives: f64, pool_budget: f64, error_scale: f64) -> f64 {
    (items / pool_budget).max(defectives * items.ln()) * (error_scale.ln() / items.ln())
}

/// Baseline order terms from prior schemes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Baselines {
    /// Generic bound at the naive arguments `(n, k_f k_m, rho_T, n)`.
    pub t_hat: f64,
    /// Ignore the community: `max(n / rho_T, k_f k_m ln n)`.
    pub ignore_community: f64,
    /// Community-aware, unconstrained, stage 1: `k_f ln n`.
    pub community_unconstrained_stage1: f64,
    /// Community-aware, unconstrained, stage 2: `k_f M` when `k_m >= M/2`,
    /// else `k_f k_m ln n`.
    pub community_unconstrained_stage2: f64,
    /// Community-aware under the budget, whole families pooled:
    /// `max(F M / rho_T, k_f ln F) * ln(n) / ln(F)`.
    pub community_constrained_stage1: f64,
}

/// Evaluate every baseline at `p` under `budget`.
pub fn baseline_counts(p: &Parameters, budget: PoolBudget) -> Baselines {
    let f = p.families as f64;
    let m = p.family_size as f64;
    let k_f = p.infected_families as f64;
    let k_m = p.infected_per_family as f64;
    let n = p.population() as f64;
    let rho_t = budget.as_f64();
    let naive = t_hat(n, k_f * k_m, rho_t, n);
    Baselines {
        t_hat: naive,
        ignore_community: naive,
        community_unconstrained_stage1: k_f * n.ln(),
        community_unconstrained_stage2: if 2 * p.infected_per_family >= p.family_size {
            k_f * m
        } else {
            k_f * k_m * n.ln()
        },
        community_constrained_stage1: t_hat(f, k_f, rho_t / m, n),
    }
}

/// Stage-2 order term in the linear regime: `k_f M` (Eq.-style individual
/// testing cost).
pub fn t2_linear(p: &Parameters) -> f64 {
    p.infected_families as f64 * p.family_size as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SublinearBranch {
    /// `rho_T` small: the budget dominates, `k_f (M / rho_T) ln(n) / ln(M)`.
    BudgetBound,
    /// `rho_T` of order `M / k_m`: counting dominates, `k_f k_m ln n`.
    CountingBound,
}

/// Stage-2 order term in the sublinear regime:
/// `k_f max(M / rho_T, k_m ln M) * ln(n) / ln(M)`, with the active branch.
pub fn t2_sublinear(p: &Parameters, budget: PoolBudget) -> (f64, SublinearBranch) {
    assert!(p.family_size >= 2, "sublinear stage-2 needs M >= 2");
    let m = p.family_size as f64;
    let k_m = p.infected_per_family as f64;
    let n = p.population() as f64;
    let per_family = t_hat(m, k_m, budget.as_f64(), n);
    let branch = if m / budget.as_f64() >= k_m * m.ln() {
        SublinearBranch::BudgetBound
    } else {
        SublinearBranch::CountingBound
    };
    (p.infected_families as f64 * per_family, branch)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `rho_T >= F M / (k_f k_m)`: the budget is effectively unconstrained.
    I,
    /// `rho_T < F M / (k_f k_m)`: the budget binds.
    II,
}

/// The simplified stage-1 ceiling and the regime lower bound on `f(rho_hat)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorollaryBound {
    /// `max(F M / (rho_T k_m), k_f) * ln n`.
    pub value: f64,
    pub regime: Regime,
    pub f_rhohat: f64,
    /// Regime I: `rho_hat (1 - e^-1)`; regime II: `rho_T k_m / (4 M)`.
    pub lower_bound: f64,
    /// Whether `f_rhohat >= lower_bound` held. The regime-II bound is proven
    /// under the simplifying assumption that `2 k_f` divides `F`; it is
    /// reported, not asserted, elsewhere.
    pub holds: bool,
}

/// Detect the regime (boundary inclusive in regime I) and evaluate the
/// simplified bound.
pub fn corollary_bound(p: &Parameters, budget: PoolBudget) -> CorollaryBound {
    let f = p.families as f64;
    let m = p.family_size as f64;
    let k_f = p.infected_families as f64;
    let k_m = p.infected_per_family as f64;
    let n = p.population() as f64;
    let rho_t = budget.as_f64();
    let regime = if rho_t >= f * m / (k_f * k_m) {
        Regime::I
    } else {
        Regime::II
    };
    let hat = rho_hat(p.families, p.infected_families, budget);
    let f_rhohat = f_of_rho(hat, rho_t, p.infected_per_family, p.family_size);
    let lower_bound = match regime {
        Regime::I => hat as f64 * (1.0 - (-1.0f64).exp()),
        Regime::II => rho_t * k_m / (4.0 * m),
    };
    CorollaryBound {
        value: (f * m / (rho_t * k_m)).max(k_f) * n.ln(),
        regime,
        f_rhohat,
        lower_bound,
        holds: f_rhohat >= lower_bound - 1e-12,
    }
}

/// Which comparison branch the budget falls in when racing the
/// whole-family-pooling baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BudgetBranch {
    /// `rho_T < n / (k_m k_f)`: ratio of order `log(F) / M`.
    #[serde(rename = "theta(log(F)/M)")]
    LogFOverM,
    /// `n / (k_f k_m) <= rho_T < n / (k_f ln F)`: ratio of order
    /// `rho_T k_f log(F) / n`.
    #[serde(rename = "theta(rho_T k_f log(F)/n)")]
    Intermediate,
    /// `rho_T >= n / (k_f ln F)`: both schemes are order-equivalent.
    #[serde(rename = "theta(1)")]
    Constant,
}

/// Order-wise comparisons against the two baselines.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ratios {
    /// `(T_I + k_f M) / ignore_community`.
    pub total_vs_ignore_community: f64,
    /// `T_I / community_constrained_stage1`.
    pub stage1_vs_constrained_baseline: f64,
    pub budget_branch: BudgetBranch,
}

pub fn comparison_ratios(p: &Parameters, budget: PoolBudget) -> Ratios {
    let n = p.population() as f64;
    let k_f = p.infected_families as f64;
    let ln_f = (p.families as f64).ln();
    let rho_t = budget.as_f64();
    let t1 = corollary_bound(p, budget).value;
    let baselines = baseline_counts(p, budget);
    let budget_branch = if rho_t < n / (p.infected_per_family as f64 * k_f) {
        BudgetBranch::LogFOverM
    } else if rho_t < n / (k_f * ln_f) {
        BudgetBranch::Intermediate
    } else {
        BudgetBranch::Constant
    };
    Ratios {
        total_vs_ignore_community: (t1 + t2_linear(p)) / baselines.ignore_community,
        stage1_vs_constrained_baseline: t1 / baselines.community_constrained_stage1,
        budget_branch,
    }
}

/// Everything the `bounds` command reports for one parameter point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub rho_hat: u32,
    pub f_rhohat: f64,
    /// `zeta (1+lambda) F ln(n) / f(rho_hat)`.
    pub t1_theorem: f64,
    /// `max(F M / (rho_T k_m), k_f) * ln n`.
    pub t1_corollary: f64,
    pub regime: Regime,
    pub regime_lower_bound: f64,
    pub regime_bound_holds: bool,
    pub t2_linear: f64,
    pub baselines: Baselines,
    pub ratios: Ratios,
}

impl BoundReport {
    pub fn compute(p: &Parameters) -> Result<Self, ParamError> {
        Self::compute_with_budget(p, PoolBudget::Finite(p.pool_budget))
    }

    pub fn compute_with_budget(p: &Parameters, budget: PoolBudget) -> Result<Self, ParamError> {
        p.validate()?;
        let hat = rho_hat(p.families, p.infected_families, budget);
        let corollary = corollary_bound(p, budget);
        let n = p.population() as f64;
        let t1_theorem =
            p.zeta() * (1.0 + p.lambda) * p.families as f64 * n.ln() / corollary.f_rhohat;
        Ok(BoundReport {
            rho_hat: hat,
            f_rhohat: corollary.f_rhohat,
            t1_theorem,
            t1_corollary: corollary.value,
            regime: corollary.regime,
            regime_lower_bound: corollary.lower_bound,
            regime_bound_holds: corollary.holds,
            t2_linear: t2_linear(p),
            baselines: baseline_counts(p, budget),
            ratios: comparison_ratios(p, budget),
        })
    }
}
