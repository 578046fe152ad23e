//! Confidence regions, per-coordinate tests, Benjamini–Hochberg, and the
//! global max-norm Monte-Carlo test, all on top of studentized moment
//! estimates.
//!
//! Normal CDF and quantile are implemented here rather than pulled in as a
//! dependency: the quantile sits on the hot path of every normal draw in
//! the crate (see [`crate::rng::Stream::next_normal`]) and the tails must
//! be trustworthy for small p-values.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::moments::{MomentEstimate, NodeStatus, VarianceBundle};
use crate::rng::{domain, Stream};

// --- standard normal CDF ---------------------------------------------------
//
// Cody's rational-approximation scheme for erf/erfc (the SPECFUN "calerf"
// coefficients): three regimes, relative error around 1e-16 across the
// double range. The CDF is 0.5 * erfc(-x / sqrt(2)).

const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERFC_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERFC_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERFC_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERFC_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];
const FRAC_1_SQRT_PI: f64 = 5.641895835477562869e-1;

/// exp(-y*y) with the argument split to limit cancellation, as in calerf.
#[inline]
fn exp_neg_sq(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

/// Complementary error function for y >= 0.
fn erfc_nonneg(y: f64) -> f64 {
    if y <= 0.46875 {
        // erfc = 1 - erf with the central erf approximation.
        let z = y * y;
        let mut num = ERF_A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + ERF_A[i]) * z;
            den = (den + ERF_B[i]) * z;
        }
        1.0 - y * (num + ERF_A[3]) / (den + ERF_B[3])
    } else if y <= 4.0 {
        let mut num = ERFC_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + ERFC_C[i]) * y;
            den = (den + ERFC_D[i]) * y;
        }
        exp_neg_sq(y) * (num + ERFC_C[7]) / (den + ERFC_D[7])
    } else if y < 26.6 {
        let z = 1.0 / (y * y);
        let mut num = ERFC_P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + ERFC_P[i]) * z;
            den = (den + ERFC_Q[i]) * z;
        }
        let r = z * (num + ERFC_P[4]) / (den + ERFC_Q[4]);
        exp_neg_sq(y) * (FRAC_1_SQRT_PI - r) / y
    } else {
        0.0 // below the smallest positive double
    }
}

fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        erfc_nonneg(x)
    } else {
        2.0 - erfc_nonneg(-x)
    }
}

/// Standard normal CDF Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal survival function 1 − Φ(x), accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() * 0.3989422804014326779
}

// --- standard normal quantile ----------------------------------------------
//
// Acklam's rational approximation (relative error ~1.15e-9) refined by one
// Halley step against the CDF above, which leaves errors at the level of
// the CDF itself — far inside the 1e-9 absolute tolerance promised here.

const QNT_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const QNT_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const QNT_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const QNT_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

pub(crate) fn normal_quantile_unchecked(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    let x = if u < 0.02425 {
        let q = (-2.0 * u.ln()).sqrt();
        (((((QNT_C[0] * q + QNT_C[1]) * q + QNT_C[2]) * q + QNT_C[3]) * q + QNT_C[4]) * q
            + QNT_C[5])
            / ((((QNT_D[0] * q + QNT_D[1]) * q + QNT_D[2]) * q + QNT_D[3]) * q + 1.0)
    } else if u <= 1.0 - 0.02425 {
        let q = u - 0.5;
        let r = q * q;
        (((((QNT_A[0] * r + QNT_A[1]) * r + QNT_A[2]) * r + QNT_A[3]) * r + QNT_A[4]) * r
            + QNT_A[5])
            * q
            / (((((QNT_B[0] * r + QNT_B[1]) * r + QNT_B[2]) * r + QNT_B[3]) * r + QNT_B[4]) * r
                + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -((((((QNT_C[0] * q + QNT_C[1]) * q + QNT_C[2]) * q + QNT_C[3]) * q + QNT_C[4]) * q
            + QNT_C[5])
            / ((((QNT_D[0] * q + QNT_D[1]) * q + QNT_D[2]) * q + QNT_D[3]) * q + 1.0))
    };
    // One Halley refinement: with f = Φ(x) − u, f' = φ(x), f'' = −x φ(x).
    let e = normal_cdf(x) - u;
    let r = e / normal_pdf(x);
    x - r / (1.0 + 0.5 * x * r)
}

/// Inverse standard normal CDF Φ⁻¹(u) for `0 < u < 1`.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "normal quantile needs 0 < u < 1, got {u}"
        )));
    }
    Ok(normal_quantile_unchecked(u))
}

// --- simultaneous confidence regions ---------------------------------------

/// Axis-aligned simultaneous confidence box for a node subset.
#[derive(Clone, Debug)]
pub struct ConfidenceRegion {
    /// Node indices the box covers, in caller order.
    pub subset: Vec<usize>,
    /// Point estimates θ̂_ℓ for the subset.
    pub center: Vec<f64>,
    /// Per-node radius: `multiplier · sqrt(ν̂_ℓ / N)`.
    pub halfwidths: Vec<f64>,
    /// Simultaneous confidence level in (0, 1).
    pub level: f64,
    /// The max-norm critical value Φ⁻¹((1 + level^{1/|S|}) / 2).
    pub multiplier: f64,
    /// Pair count N = (p−1)(p−2) used for studentization.
    pub n_pairs: f64,
}

impl ConfidenceRegion {
    /// Whether `a` lies in the box: componentwise |θ̂_ℓ − a_ℓ| ≤ radius,
    /// equivalently sqrt(N) · max_ℓ |θ̂_ℓ − a_ℓ| / sqrt(ν̂_ℓ) ≤ multiplier.
    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.center.len()
            && self
                .center
                .iter()
                .zip(a)
                .zip(&self.halfwidths)
                .all(|((&c, &v), &r)| (c - v).abs() <= r)
    }

    /// Serialize as `index,center,halfwidth` lines under a header.
    pub fn to_csv<W: std::io::Write>(&self, writer: &mut W) -> std::io::Result<()> {
        writeln!(writer, "index,center,halfwidth")?;
        for ((&l, &c), &r) in self.subset.iter().zip(&self.center).zip(&self.halfwidths) {
            writeln!(writer, "{l},{c:?},{r:?}")?;
        }
        Ok(())
    }
}

/// Simultaneous confidence box for the nodes in `subset`.
///
/// `theta_hat_s` and `nu_hat_s` are the estimates and variance estimates for
/// exactly those nodes; `p` is the node count of the underlying graph. The
/// half-width is Φ⁻¹((1 + level^{1/|S|}) / 2) · sqrt(ν̂_ℓ / N) with
/// N = (p−1)(p−2).
pub fn simultaneous_region(
    subset: &[usize],
    theta_hat_s: &[f64],
    nu_hat_s: &[f64],
    level: f64,
    p: usize,
) -> Result<ConfidenceRegion> {
    if subset.is_empty() || subset.len() != theta_hat_s.len() || subset.len() != nu_hat_s.len() {
        return Err(Error::DimensionMismatch(format!(
            "subset/estimate/variance lengths {}, {}, {}",
            subset.len(),
            theta_hat_s.len(),
            nu_hat_s.len()
        )));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    if p < 3 {
        return Err(Error::InvalidArgument(format!(
            "confidence region needs p >= 3, got {p}"
        )));
    }
    for (&l, &v) in subset.iter().zip(nu_hat_s) {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "node {l} has no valid variance estimate (nu = {v})"
            )));
        }
    }
    if let Some((&l, _)) = subset
        .iter()
        .zip(theta_hat_s)
        .find(|(_, &t)| !t.is_finite())
    {
        return Err(Error::InvalidArgument(format!(
            "node {l} has no valid point estimate"
        )));
    }
    let k = subset.len() as f64;
    let multiplier = normal_quantile_unchecked((1.0 + level.powf(1.0 / k)) / 2.0);
    let n_pairs = ((p - 1) * (p - 2)) as f64;
    let halfwidths = nu_hat_s
        .iter()
        .map(|&v| multiplier * (v / n_pairs).sqrt())
        .collect();
    Ok(ConfidenceRegion {
        subset: subset.to_vec(),
        center: theta_hat_s.to_vec(),
        halfwidths,
        level,
        multiplier,
        n_pairs,
    })
}

// --- hypothesis tests -------------------------------------------------------

/// Which test produced a [`TestResult`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestMethod {
    CoordinateZ,
    GlobalMaxNormMc,
}

impl std::fmt::Display for TestMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestMethod::CoordinateZ => "per-coordinate z",
            TestMethod::GlobalMaxNormMc => "global max-norm MC",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub pvalue: f64,
    pub method: TestMethod,
    /// Monte-Carlo replicate count, for the MC method only.
    pub m_mc: Option<usize>,
}

/// Variance scale for the per-coordinate z-tests of `H0: θ_ℓ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PvalueMode {
    /// Fixed-signal regime: statistic sqrt(p−1) · |θ̂_ℓ| / sqrt(b̂_ℓ).
    FixedGamma,
    /// Vanishing-signal regime: statistic sqrt(N) · |θ̂_ℓ| / sqrt(ν̂_ℓ).
    VanishingGamma,
}

/// Two-sided per-coordinate z-test p-values; `None` where the estimate or
/// variance is flagged invalid.
pub fn coordinate_pvalues(
    est: &MomentEstimate,
    vb: &VarianceBundle,
    mode: PvalueMode,
) -> Vec<Option<TestResult>> {
    let variances = match mode {
        PvalueMode::FixedGamma => &vb.b_hat,
        PvalueMode::VanishingGamma => &vb.nu_hat,
    };
    coordinate_pvalues_scaled(est, variances, mode)
}

/// Vanishing-signal p-values with an externally supplied variance vector,
/// e.g. the bootstrap ν̂† in place of the plug-in ν̂.
pub fn coordinate_pvalues_with_nu(est: &MomentEstimate, nu: &[f64]) -> Vec<Option<TestResult>> {
    coordinate_pvalues_scaled(est, nu, PvalueMode::VanishingGamma)
}

fn coordinate_pvalues_scaled(
    est: &MomentEstimate,
    variances: &[f64],
    mode: PvalueMode,
) -> Vec<Option<TestResult>> {
    let p = est.node_count();
    let scale = match mode {
        PvalueMode::FixedGamma => (p as f64 - 1.0).sqrt(),
        PvalueMode::VanishingGamma => (((p - 1) * (p - 2)) as f64).sqrt(),
    };
    est.theta_hat
        .iter()
        .zip(&est.status)
        .zip(variances)
        .map(|((&t, &st), &v)| {
            if st != NodeStatus::Ok || !t.is_finite() || !(v > 0.0) || !v.is_finite() {
                return None;
            }
            let statistic = scale * t.abs() / v.sqrt();
            Some(TestResult {
                statistic,
                pvalue: 2.0 * normal_sf(statistic),
                method: TestMethod::CoordinateZ,
                m_mc: None,
            })
        })
        .collect()
}

/// Benjamini–Hochberg step-up at rate `q`; returns the rejected indices in
/// ascending order. Missing (NaN) p-values act like 1.
pub fn bh_procedure(pvalues: &[f64], q: f64) -> Vec<usize> {
    let m = pvalues.len();
    if m == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..m).collect();
    let clean = |v: f64| if v.is_nan() { 1.0 } else { v };
    order.sort_by(|&a, &b| {
        clean(pvalues[a])
            .partial_cmp(&clean(pvalues[b]))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut k = 0;
    for (rank, &idx) in order.iter().enumerate() {
        if clean(pvalues[idx]) <= q * (rank + 1) as f64 / m as f64 {
            k = rank + 1;
        }
    }
    let mut rejected: Vec<usize> = order[..k].to_vec();
    rejected.sort_unstable();
    rejected
}

/// Closed-form max-norm p-value for independent standard normal
/// coordinates: 1 − (2Φ(t) − 1)^k. Reference point for the Monte-Carlo
/// test, and exact for k = 1.
pub fn maxnorm_closed_form_pvalue(statistic: f64, k: usize) -> f64 {
    let eps = erfc(statistic * std::f64::consts::FRAC_1_SQRT_2);
    -((k as f64) * (-eps).ln_1p()).exp_m1()
}

/// Monte-Carlo max-norm test of `H0: θ_S = null_value`.
///
/// Statistic: sqrt(N) · max_ℓ |θ̂_ℓ − null_ℓ| / sqrt(ν̂_ℓ). The p-value is
/// the fraction of `m_mc` i.i.d. N(0, I_{|S|}) draws whose max-norm reaches
/// the statistic; replicates use per-index streams, so the result does not
/// depend on thread count.
pub fn global_maxnorm_test(
    theta_hat_s: &[f64],
    nu_hat_s: &[f64],
    p: usize,
    null_value: &[f64],
    m_mc: usize,
    seed: u64,
) -> Result<TestResult> {
    let k = theta_hat_s.len();
    if k == 0 || nu_hat_s.len() != k || null_value.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "estimate/variance/null lengths {}, {}, {}",
            k,
            nu_hat_s.len(),
            null_value.len()
        )));
    }
    if m_mc < 1000 {
        return Err(Error::InvalidArgument(format!(
            "max-norm test needs m_mc >= 1000, got {m_mc}"
        )));
    }
    if p < 3 {
        return Err(Error::InvalidArgument(format!(
            "max-norm test needs p >= 3, got {p}"
        )));
    }
    for (i, (&t, &v)) in theta_hat_s.iter().zip(nu_hat_s).enumerate() {
        if !t.is_finite() || !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid estimate or variance at subset position {i} (theta = {t}, nu = {v})"
            )));
        }
    }
    let n_pairs = ((p - 1) * (p - 2)) as f64;
    let statistic = theta_hat_s
        .iter()
        .zip(null_value)
        .zip(nu_hat_s)
        .map(|((&t, &a), &v)| n_pairs.sqrt() * (t - a).abs() / v.sqrt())
        .fold(0.0, f64::max);
    let hits = (0..m_mc)
        .into_par_iter()
        .filter(|&m| {
            let mut s = Stream::derive(seed, &[domain::MAXNORM_MC, m as u64]);
            let mut max = 0.0f64;
            for _ in 0..k {
                max = max.max(s.next_normal().abs());
            }
            max >= statistic
        })
        .count();
    Ok(TestResult {
        statistic,
        pvalue: hits as f64 / m_mc as f64,
        method: TestMethod::GlobalMaxNormMc,
        m_mc: Some(m_mc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Φ⁻¹(0.975) to full double precision; standard high-precision value.
    const Z_975: f64 = 1.959963984540054;

    #[test]
    fn cdf_matches_frozen_anchors() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(Z_975) - 0.975).abs() < 1e-14);
        assert!((normal_cdf(-Z_975) - 0.025).abs() < 1e-14);
        // 1 − Φ(5), classical tail value.
        assert!((normal_sf(5.0) - 2.866515718791939e-7).abs() < 1e-19);
        // Deep tail stays positive and finite.
        assert!(normal_sf(8.0) > 0.0 && normal_sf(8.0) < 1e-14);
        assert_eq!(normal_cdf(-40.0), 0.0);
        assert_eq!(normal_cdf(40.0), 1.0);
    }

    #[test]
    fn cdf_is_symmetric() {
        for &x in &[0.1, 0.5, 1.0, 2.345, 4.0, 6.5] {
            assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn quantile_matches_frozen_anchors() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - Z_975).abs() < 1e-12);
        assert!((normal_quantile(0.025).unwrap() + Z_975).abs() < 1e-12);
        assert!((normal_quantile(0.9).unwrap() - 1.2815515655446004).abs() < 1e-12);
        assert!((normal_quantile(0.99).unwrap() - 2.3263478740408408).abs() < 1e-12);
        // The |S|=10, level-0.95 multiplier.
        let u = (1.0 + 0.95f64.powf(0.1)) / 2.0;
        assert!((normal_quantile(u).unwrap() - 2.7993).abs() < 1e-3);
    }

    #[test]
    fn quantile_round_trips_through_the_cdf() {
        let mut u = 1e-12;
        while u < 1.0 {
            let x = normal_quantile(u).unwrap();
            assert!(
                (normal_cdf(x) - u).abs() <= 1e-12 * u.max(1.0 - u).max(1e-3),
                "u = {u}, x = {x}, cdf = {}",
                normal_cdf(x)
            );
            u *= 1.7;
        }
        // Monotone on a grid.
        let mut last = f64::NEG_INFINITY;
        for i in 1..2000 {
            let x = normal_quantile(i as f64 / 2000.0).unwrap();
            assert!(x > last);
            last = x;
        }
    }

    #[test]
    fn quantile_rejects_bad_input() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(-0.5).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    fn toy_region() -> ConfidenceRegion {
        simultaneous_region(&[3, 7], &[0.5, -0.2], &[2.0, 3.0], 0.95, 100).unwrap()
    }

    #[test]
    fn region_has_the_documented_geometry() {
        let r = toy_region();
        let n = (99.0 * 98.0) as f64;
        let mult = normal_quantile((1.0 + 0.95f64.sqrt()) / 2.0).unwrap();
        assert!((r.multiplier - mult).abs() < 1e-12);
        assert!((r.halfwidths[0] - mult * (2.0 / n).sqrt()).abs() < 1e-15);
        assert!(r.contains(&[0.5, -0.2]), "center is always inside");
        assert!(!r.contains(&[0.5, 5.0]));
        // Singleton subset reduces to the two-sided z interval.
        let r1 = simultaneous_region(&[0], &[0.0], &[1.0], 0.95, 100).unwrap();
        assert!((r1.multiplier - Z_975).abs() < 1e-9);
    }

    #[test]
    fn region_grows_with_the_level() {
        let lo = simultaneous_region(&[0, 1], &[0.0, 0.0], &[1.0, 1.0], 0.9, 50).unwrap();
        let hi = simultaneous_region(&[0, 1], &[0.0, 0.0], &[1.0, 1.0], 0.99, 50).unwrap();
        assert!(hi.halfwidths[0] > lo.halfwidths[0]);
        // Monotone containment: anything in the smaller box is in the larger.
        assert!(hi.contains(&[lo.halfwidths[0], -lo.halfwidths[1]]));
    }

    #[test]
    fn region_rejects_invalid_variances() {
        assert!(simultaneous_region(&[0], &[0.0], &[0.0], 0.95, 10).is_err());
        assert!(simultaneous_region(&[0], &[0.0], &[f64::NAN], 0.95, 10).is_err());
        assert!(simultaneous_region(&[0], &[f64::NAN], &[1.0], 0.95, 10).is_err());
        assert!(simultaneous_region(&[0], &[0.0], &[1.0], 1.0, 10).is_err());
        assert!(simultaneous_region(&[0, 1], &[0.0], &[1.0], 0.95, 10).is_err());
    }

    #[test]
    fn region_csv_format() {
        let mut buf = Vec::new();
        toy_region().to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("index,center,halfwidth"));
        assert!(lines.next().unwrap().starts_with("3,0.5,"));
        assert!(lines.next().unwrap().starts_with("7,-0.2,"));
    }

    #[test]
    fn gaussian_fixture_coverage_smoke() {
        // Draw θ̂ = θ + sqrt(ν/N)·ξ directly and check the box covers θ at
        // roughly the nominal rate. The tight ±0.005 version at 1e5 draws
        // runs in the acceptance suite; this is a fast sanity check.
        let p = 50;
        let k = 50;
        let n = ((p - 1) * (p - 2)) as f64;
        let subset: Vec<usize> = (0..k).collect();
        let theta: Vec<f64> = (0..k).map(|i| (i as f64 - 25.0) / 50.0).collect();
        let nu: Vec<f64> = (0..k).map(|i| 1.0 + (i % 7) as f64).collect();
        let draws = 20_000;
        let mut covered = 0;
        for rep in 0..draws {
            let mut s = Stream::derive(505, &[domain::REPLICATE, rep]);
            let hat: Vec<f64> = theta
                .iter()
                .zip(&nu)
                .map(|(&t, &v)| t + (v / n).sqrt() * s.next_normal())
                .collect();
            let r = simultaneous_region(&subset, &hat, &nu, 0.9, p).unwrap();
            covered += usize::from(r.contains(&theta));
        }
        let rate = covered as f64 / draws as f64;
        // 4 binomial se at 0.9/20000 is 0.0085.
        assert!((rate - 0.9).abs() < 0.0085, "coverage {rate}");
    }

    #[test]
    fn bh_hand_traced_example() {
        // Step-up: k is the largest rank with p_(k) <= k q / m. Here
        // p_(4) = 0.041 <= 4*0.05/4 = 0.05, so all four are rejected even
        // though rank 3 fails its own bound.
        let rejected = bh_procedure(&[0.039, 0.001, 0.041, 0.008], 0.05);
        assert_eq!(rejected, vec![0, 1, 2, 3]);
    }

    #[test]
    fn bh_edge_cases() {
        assert!(bh_procedure(&[1.0, 1.0, 1.0], 0.05).is_empty());
        assert!(bh_procedure(&[], 0.05).is_empty());
        assert_eq!(bh_procedure(&[0.01], 0.05), vec![0]);
        // NaN behaves as a non-rejectable 1.
        assert_eq!(bh_procedure(&[0.001, f64::NAN, 0.002], 0.05), vec![0, 2]);
    }

    #[test]
    fn bh_matches_brute_force_on_random_vectors() {
        // Brute force: reject at the threshold t in {p_i} maximizing the
        // rejection count subject to t <= (#{p <= t}) q / m.
        let mut s = Stream::derive(77, &[domain::REPLICATE]);
        for trial in 0..200 {
            let m = 1 + (s.next_u64() % 50) as usize;
            let pv: Vec<f64> = (0..m).map(|_| s.next_f64()).collect();
            let q = 0.2 * s.next_f64();
            let got = bh_procedure(&pv, q);
            let mut best: Vec<usize> = Vec::new();
            for &t in &pv {
                let idx: Vec<usize> =
                    (0..m).filter(|&i| pv[i] <= t).collect();
                if t <= q * idx.len() as f64 / m as f64 && idx.len() > best.len() {
                    best = idx;
                }
            }
            assert_eq!(got, best, "trial {trial}: pv {pv:?} q {q}");
        }
    }

    #[test]
    fn maxnorm_test_matches_closed_form() {
        // |S| = 1: the max-norm p-value is the two-sided z p-value.
        let r = global_maxnorm_test(&[0.02], &[1.0], 400, &[0.0], 100_000, 9).unwrap();
        let exact = 2.0 * normal_sf(r.statistic);
        let se = (exact * (1.0 - exact) / 1e5).sqrt();
        assert!((r.pvalue - exact).abs() < 3.0 * se, "{} vs {exact}", r.pvalue);

        // |S| = 10, statistic 2.80: closed form 1 − (2Φ(2.80) − 1)^10.
        let p = 334;
        let n = ((p - 1) * (p - 2)) as f64;
        let stat = 2.80;
        let theta: Vec<f64> = std::iter::once(stat / n.sqrt())
            .chain(std::iter::repeat(0.0).take(9))
            .collect();
        let nu = vec![1.0; 10];
        let r = global_maxnorm_test(&theta, &nu, p, &vec![0.0; 10], 200_000, 4).unwrap();
        let exact = maxnorm_closed_form_pvalue(stat, 10);
        assert!((exact - 0.0498).abs() < 5e-4, "closed form {exact}");
        let se = (exact * (1.0 - exact) / 2e5).sqrt();
        assert!((r.pvalue - exact).abs() < 3.0 * se, "{} vs {exact}", r.pvalue);
    }

    #[test]
    fn maxnorm_test_degenerate_and_invalid_inputs() {
        // Statistic 0 ⇒ every draw reaches it ⇒ p-value 1.
        let r = global_maxnorm_test(&[0.3], &[1.0], 50, &[0.3], 1000, 1).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.pvalue, 1.0);
        assert_eq!(r.m_mc, Some(1000));

        assert!(global_maxnorm_test(&[0.1], &[1.0], 50, &[0.0], 999, 1).is_err());
        assert!(global_maxnorm_test(&[0.1], &[0.0], 50, &[0.0], 1000, 1).is_err());
        assert!(global_maxnorm_test(&[f64::NAN], &[1.0], 50, &[0.0], 1000, 1).is_err());
        assert!(global_maxnorm_test(&[0.1, 0.2], &[1.0], 50, &[0.0], 1000, 1).is_err());
    }

    #[test]
    fn maxnorm_test_is_thread_deterministic() {
        let theta = vec![0.01, -0.02, 0.005];
        let nu = vec![1.0, 2.0, 0.5];
        let a = global_maxnorm_test(&theta, &nu, 100, &[0.0; 3], 5000, 11).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| global_maxnorm_test(&theta, &nu, 100, &[0.0; 3], 5000, 11).unwrap());
        assert_eq!(a.pvalue, b.pvalue);
        assert_eq!(a.statistic, b.statistic);
    }
}
