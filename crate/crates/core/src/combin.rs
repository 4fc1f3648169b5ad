//! Small combinatorial probability helpers.
//!
//! Ratios of binomial coefficients are evaluated as telescoping products of
//! factors in [0, 1], never as quotients of large factorials, so they stay
//! exact to within a few ulps for any argument size. Derived probabilities
//! carry an absolute tolerance of 1e-12 throughout the crate.

/// Binomial coefficient `C(n, k)` as `f64`; 0 when `k > n`.
///
/// Exact for values below 2^53; intended for counting small enumeration
/// spaces, not for probability ratios.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for j in 0..k {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc
}

/// Probability that a uniform `r`-subset of `{1, .., m}` avoids a fixed
/// `k`-subset: `C(m-k, r) / C(m, r)`, with the `C(a, b) = 0` convention for
/// `b > a`.
pub fn prob_subset_misses(m: u32, k: u32, r: u32) -> f64 {
    assert!(k <= m, "k = {k} exceeds m = {m}");
    assert!(r <= m, "r = {r} exceeds m = {m}");
    if r + k > m {
        return 0.0;
    }
    let mut acc = 1.0f64;
    for j in 1..=r {
        acc *= (m - k - j + 1) as f64 / (m - j + 1) as f64;
    }
    acc
}

/// Probability that a uniform weight-`rho` row over `f_total` columns selects
/// a fixed column while avoiding a disjoint fixed `ell`-set of columns:
/// `C(f_total - ell - 1, rho - 1) / C(f_total, rho)`.
///
/// Telescoped as `(rho / (f_total - ell)) * prod_{j=1..ell} (1 - rho / (f_total - j + 1))`.
pub fn prob_selects_and_misses(f_total: u32, rho: u32, ell: u32) -> f64 {
    assert!(rho >= 1 && rho <= f_total);
    assert!(ell < f_total, "ell = {ell} leaves no column to select");
    let mut acc = rho as f64 / (f_total - ell) as f64;
    for j in 1..=ell {
        let factor = 1.0 - rho as f64 / (f_total - j + 1) as f64;
        if factor <= 0.0 {
            return 0.0;
        }
        acc *= factor;
    }
    acc
}
