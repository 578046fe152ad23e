//! The logistic degree model: sampling, exact population quantities, and
//! maximum-likelihood fitting (plain and noise-corrected).
//!
//! Under the model, edge `{i, j}` appears independently with probability
//! `σ(θ_i + θ_j)` where `σ` is the logistic function; the degree sequence is
//! sufficient for `θ`. [`population_oracle`] evaluates, in closed form, every
//! moment and variance quantity the estimation pipeline targets — the test
//! suites lean on it as the source of truth, and the bootstrap uses it for
//! its exact scaling identities.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{DegreeSequence, Graph};
use crate::privacy::NoiseSchedule;
use crate::rng::{domain, pair_uniform};

/// Heterogeneity parameters `θ_1, …, θ_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaParams {
    theta: Vec<f64>,
}

impl BetaParams {
    pub fn new(theta: Vec<f64>) -> Result<BetaParams> {
        if theta.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 parameters, got {}",
                theta.len()
            )));
        }
        if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "theta[{i}] = {} is not finite",
                theta[i]
            )));
        }
        Ok(BetaParams { theta })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn node_count(&self) -> usize {
        self.theta.len()
    }

    /// `|θ|_∞`, surfaced for diagnostics (boundedness is assumed by the
    /// asymptotics, not enforced here).
    pub fn max_abs(&self) -> f64 {
        self.theta.iter().fold(0.0, |m, t| m.max(t.abs()))
    }

    /// Write as CSV `index,theta` with a header line.
    pub fn save_csv<W: Write>(&self, writer: &mut W) -> std::io::Result<()> {
        writeln!(writer, "index,theta")?;
        for (i, t) in self.theta.iter().enumerate() {
            writeln!(writer, "{i},{t:?}")?;
        }
        Ok(())
    }

    /// Read the CSV form; the header is optional and every index in
    /// `0..p-1` must appear exactly once.
    pub fn load_csv<R: BufRead>(reader: R) -> Result<BetaParams> {
        let mut rows: Vec<(usize, f64)> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || (lineno == 1 && trimmed.starts_with("index")) {
                continue;
            }
            let mut fields = trimmed.split(',');
            match (fields.next(), fields.next(), fields.next()) {
                (Some(i), Some(t), None) => {
                    let i = i.trim().parse::<usize>().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad node index {i:?}"),
                    })?;
                    let t = t.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad value {t:?}"),
                    })?;
                    rows.push((i, t));
                }
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected `index,theta`, got {line:?}"),
                    })
                }
            }
        }
        let p = rows.len();
        let mut theta = vec![f64::NAN; p];
        for (i, t) in rows {
            if i >= p || !theta[i].is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "parameter rows must cover each index 0..{} exactly once (offending index {i})",
                    p.saturating_sub(1)
                )));
            }
            theta[i] = t;
        }
        BetaParams::new(theta)
    }
}

/// Edge probability `σ(θ_i + θ_j)`, evaluated on the stable side of the
/// logistic so large arguments never overflow.
pub fn edge_prob(theta_i: f64, theta_j: f64) -> f64 {
    let s = theta_i + theta_j;
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Sample one graph from the model; pair `{i, j}` uses its own counter-based
/// stream, so the draw is reproducible at any thread count.
pub fn sample_graph(params: &BetaParams, seed: u64) -> Graph {
    let theta = &params.theta;
    Graph::from_pair_fn(theta.len(), |i, j| {
        pair_uniform(seed, domain::SAMPLE, i, j) < edge_prob(theta[i], theta[j])
    })
}

/// Exact population values of every quantity the estimators target, for a
/// given parameter vector and noise schedule.
///
/// With `γ_{ij} = 1 − α_{ij} − β_{ij}` and `p_{ij} = σ(θ_i + θ_j)`, the
/// building blocks are `E φ_{(i,j),1} = γ_{ij} p_{ij}` and
/// `E φ_{(i,j),0} = γ_{ij} (1 − p_{ij})`; triples over disjoint pairs
/// multiply by independence.
#[derive(Clone, Debug)]
pub struct PopulationOracle {
    p: usize,
    /// μ_{ℓ,1}: mean triple product with edge-facing weights at ℓ.
    pub mu1: Vec<f64>,
    /// μ_{ℓ,2}: the τ-flipped counterpart.
    pub mu2: Vec<f64>,
    /// λ_{i,ℓ}, row-major `[i][ℓ]`; diagonal unused (zero).
    pub lambda: Vec<f64>,
    /// Var(Z_{i,j}) = m(1−m) with m = α_{ij} + γ_{ij} p_{ij}; diagonal zero.
    pub varz: Vec<f64>,
    /// b_ℓ = (p−1)⁻¹ Σ_{i≠ℓ} λ²_{i,ℓ} Var(Z_{i,ℓ}).
    pub b: Vec<f64>,
    /// b̃_ℓ = (2N)⁻¹ ((μ₁+μ₂)/(μ₁μ₂))² Σ_{i≠j≠ℓ} Var(Z_{iℓ}) Var(Z_{ℓj}) Var(Z_{ij}).
    pub btilde: Vec<f64>,
    /// ν_ℓ = (p−2) b_ℓ + b̃_ℓ, the phase-uniform variance scale.
    pub nu: Vec<f64>,
}

impl PopulationOracle {
    pub fn node_count(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn lambda(&self, i: usize, l: usize) -> f64 {
        self.lambda[i * self.p + l]
    }

    #[inline]
    pub fn varz(&self, i: usize, j: usize) -> f64 {
        self.varz[i * self.p + j]
    }
}

/// Evaluate the population oracle. Requires every pair to retain signal
/// (`γ_min > 0`), since the moment ratios divide by γ-weighted products.
pub fn population_oracle(
    params: &BetaParams,
    schedule: &NoiseSchedule,
) -> Result<PopulationOracle> {
    let p = params.node_count();
    if p < 3 {
        return Err(Error::InvalidArgument(format!(
            "population oracle needs p >= 3, got {p}"
        )));
    }
    schedule.check_dim(p)?;
    if schedule.gamma_range().0 <= 0.0 {
        return Err(Error::InvalidArgument(
            "population oracle needs gamma = 1 - alpha - beta > 0 for every pair".into(),
        ));
    }
    let theta = params.theta();

    // Pairwise tables: e1 = E φ_1, e0 = E φ_0, varz; diagonals zero.
    let mut e1 = vec![0.0; p * p];
    let mut e0 = vec![0.0; p * p];
    let mut varz = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let (alpha, beta) = schedule.rates(i, j);
            let gamma = 1.0 - alpha - beta;
            let pij = edge_prob(theta[i], theta[j]);
            e1[i * p + j] = gamma * pij;
            e0[i * p + j] = gamma * (1.0 - pij);
            let m = alpha + gamma * pij;
            varz[i * p + j] = m * (1.0 - m);
        }
    }

    let h_size = ((p - 1) * (p - 2) / 2) as f64;
    let mus: Vec<(f64, f64)> = (0..p)
        .into_par_iter()
        .map(|l| {
            let (mut s1, mut s2) = (0.0, 0.0);
            for i in 0..p {
                if i == l {
                    continue;
                }
                for j in (i + 1)..p {
                    if j == l {
                        continue;
                    }
                    s1 += e1[i * p + l] * e0[i * p + j] * e1[l * p + j];
                    s2 += e0[i * p + l] * e1[i * p + j] * e0[l * p + j];
                }
            }
            (s1 / h_size, s2 / h_size)
        })
        .collect();
    let mu1: Vec<f64> = mus.iter().map(|m| m.0).collect();
    let mu2: Vec<f64> = mus.iter().map(|m| m.1).collect();

    // λ_{i,ℓ} = (p−2)⁻¹ Σ_{j≠ℓ,i} { μ_{ℓ,1}⁻¹ E φ_{(ℓ,j),1} E φ_{(i,j),0}
    //                              + μ_{ℓ,2}⁻¹ E φ_{(ℓ,j),0} E φ_{(i,j),1} }.
    let mut lambda = vec![0.0; p * p];
    lambda
        .par_chunks_mut(p)
        .enumerate()
        .for_each(|(i, row)| {
            for (l, slot) in row.iter_mut().enumerate() {
                if l == i {
                    continue;
                }
                let mut acc = 0.0;
                for j in 0..p {
                    if j == l || j == i {
                        continue;
                    }
                    acc += e1[l * p + j] * e0[i * p + j] / mu1[l]
                        + e0[l * p + j] * e1[i * p + j] / mu2[l];
                }
                *slot = acc / (p as f64 - 2.0);
            }
        });

    let n_pairs = ((p - 1) * (p - 2)) as f64;
    let per_node: Vec<(f64, f64)> = (0..p)
        .into_par_iter()
        .map(|l| {
            let mut b = 0.0;
            for i in 0..p {
                if i != l {
                    let lam = lambda[i * p + l];
                    b += lam * lam * varz[i * p + l];
                }
            }
            b /= p as f64 - 1.0;

            // Ordered sum over i ≠ j, both ≠ ℓ, of w_i w_j Var(Z_{ij}) with
            // w_i = Var(Z_{iℓ}); the diagonal of varz is zero, so the j = i
            // term drops out on its own.
            let mut triple = 0.0;
            for i in 0..p {
                if i == l {
                    continue;
                }
                let wi = varz[i * p + l];
                let mut inner = 0.0;
                for j in 0..p {
                    if j != l {
                        inner += varz[i * p + j] * varz[j * p + l];
                    }
                }
                triple += wi * inner;
            }
            let ratio = (mu1[l] + mu2[l]) / (mu1[l] * mu2[l]);
            let btilde = ratio * ratio / (2.0 * n_pairs) * triple;
            (b, btilde)
        })
        .collect();

    let b: Vec<f64> = per_node.iter().map(|x| x.0).collect();
    let btilde: Vec<f64> = per_node.iter().map(|x| x.1).collect();
    let nu: Vec<f64> = b
        .iter()
        .zip(&btilde)
        .map(|(&b, &bt)| (p as f64 - 2.0) * b + bt)
        .collect();

    Ok(PopulationOracle {
        p,
        mu1,
        mu2,
        lambda,
        varz,
        b,
        btilde,
        nu,
    })
}

/// Residual tolerance on fitted degrees for the fixed-point solver.
const FIT_TOL: f64 = 1e-8;
/// Sweep budget; the iteration converges linearly, so hitting this bound
/// signals a near-degenerate target rather than slow progress.
const MAX_SWEEPS: usize = 5000;
/// Corrected degrees are clamped this far inside the open range (0, p−1).
const DEGREE_CLAMP: f64 = 1e-6;

/// Maximum-likelihood fit from an integer degree sequence.
///
/// Solves `U_i = Σ_{j≠i} σ(θ_i + θ_j)` by the fixed-point iteration
/// `θ_i ← log U_i − log Σ_{j≠i} e^{θ_j} / (1 + e^{θ_i + θ_j})` from `θ = 0`,
/// stopping when fitted degrees match within `1e-8` in max-norm.
pub fn mle_fit(u: &DegreeSequence) -> Result<BetaParams> {
    let p = u.len();
    if p < 3 {
        return Err(Error::InvalidArgument(format!(
            "degree fitting needs p >= 3, got {p}"
        )));
    }
    for (i, &d) in u.as_slice().iter().enumerate() {
        if d == 0 || d >= p - 1 {
            return Err(Error::DegenerateDegree {
                node: i,
                value: d as f64,
                max: (p - 1) as f64,
            });
        }
    }
    let targets: Vec<f64> = u.as_slice().iter().map(|&d| d as f64).collect();
    mle_fit_targets(&targets)
}

/// Fixed-point fit against real-valued degree targets in the open range
/// `(0, p−1)`; used directly by the noise-corrected fit.
pub fn mle_fit_targets(targets: &[f64]) -> Result<BetaParams> {
    let p = targets.len();
    if p < 3 {
        return Err(Error::InvalidArgument(format!(
            "degree fitting needs p >= 3, got {p}"
        )));
    }
    let max = (p - 1) as f64;
    for (i, &t) in targets.iter().enumerate() {
        if !t.is_finite() || t <= 0.0 || t >= max {
            return Err(Error::DegenerateDegree {
                node: i,
                value: t,
                max,
            });
        }
    }

    let mut theta = vec![0.0f64; p];
    let mut residual = f64::INFINITY;
    for _sweep in 0..MAX_SWEEPS {
        let e: Vec<f64> = theta.iter().map(|&t| t.exp()).collect();
        // s_i = Σ_{j≠i} e_j / (1 + e_i e_j); fitted degree is e_i s_i.
        let s: Vec<f64> = (0..p)
            .into_par_iter()
            .map(|i| {
                let ei = e[i];
                let mut acc = 0.0;
                for (j, &ej) in e.iter().enumerate() {
                    if j != i {
                        acc += ej / (1.0 + ei * ej);
                    }
                }
                acc
            })
            .collect();
        residual = (0..p)
            .map(|i| (e[i] * s[i] - targets[i]).abs())
            .fold(0.0, f64::max);
        if residual <= FIT_TOL {
            return BetaParams::new(theta);
        }
        for i in 0..p {
            theta[i] = targets[i].ln() - s[i].ln();
        }
    }
    Err(Error::NoConvergence {
        sweeps: MAX_SWEEPS,
        residual,
        last_iterate: theta,
    })
}

/// Noise-corrected maximum-likelihood fit from a released graph.
///
/// For a constant schedule, the released degrees are debiased elementwise as
/// `(U_i − (p−1) α) / (1 − α − β)`, clamped just inside `(0, p−1)` so the
/// solver has a well-posed target, and fitted like [`mle_fit_targets`].
pub fn mle_private_fit(z: &Graph, schedule: &NoiseSchedule) -> Result<BetaParams> {
    let Some((alpha, beta)) = schedule.as_constant() else {
        return Err(Error::InvalidArgument(
            "the corrected-degree fit needs a constant schedule".into(),
        ));
    };
    let gamma = 1.0 - alpha - beta;
    if gamma <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "corrected-degree fit needs gamma > 0, got alpha={alpha}, beta={beta}"
        )));
    }
    let p = z.node_count();
    if p < 3 {
        return Err(Error::InvalidArgument(format!(
            "degree fitting needs p >= 3, got {p}"
        )));
    }
    let max = (p - 1) as f64;
    let targets: Vec<f64> = z
        .degrees()
        .as_slice()
        .iter()
        .map(|&u| {
            let corrected = (u as f64 - max * alpha) / gamma;
            corrected.clamp(DEGREE_CLAMP, max - DEGREE_CLAMP)
        })
        .collect();
    mle_fit_targets(&targets)
}

/// Fitted degrees `Σ_{j≠i} σ(θ_i + θ_j)` of a parameter vector.
pub fn fitted_degrees(params: &BetaParams) -> Vec<f64> {
    let theta = params.theta();
    let p = theta.len();
    (0..p)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..p {
                if j != i {
                    acc += edge_prob(theta[i], theta[j]);
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn edge_prob_anchors_and_symmetry() {
        assert_eq!(edge_prob(0.0, 0.0), 0.5);
        // 1 / (1 + e^{-2}) by direct evaluation.
        assert!((edge_prob(1.0, 1.0) - 0.8807970779778823).abs() < 1e-15);
        assert_eq!(edge_prob(0.7, -0.3), edge_prob(-0.3, 0.7));
        // Logistic antisymmetry, including far in the tails.
        for &(a, b) in &[(0.3, 0.4), (2.0, -1.0), (25.0, 10.0), (-40.0, 5.0)] {
            assert!((edge_prob(a, b) + edge_prob(-a, -b) - 1.0).abs() < 1e-12);
        }
        assert!(edge_prob(-50.0, -50.0) > 0.0); // no underflow to negative
        assert!(edge_prob(50.0, 50.0) <= 1.0);
    }

    #[test]
    fn sample_graph_degenerate_limits() {
        let low = BetaParams::new(vec![-50.0; 8]).unwrap();
        assert_eq!(sample_graph(&low, 1).edge_count(), 0);
        let high = BetaParams::new(vec![50.0; 8]).unwrap();
        assert_eq!(sample_graph(&high, 1), Graph::complete(8));
    }

    #[test]
    fn sample_graph_density_and_determinism() {
        let p = 300;
        let params = BetaParams::new(vec![0.0; p]).unwrap();
        let g = sample_graph(&params, 99);
        let pairs = (p * (p - 1) / 2) as f64;
        let sd = (pairs * 0.25).sqrt();
        assert!(
            (g.edge_count() as f64 - 0.5 * pairs).abs() < 4.0 * sd,
            "edges {}",
            g.edge_count()
        );
        assert_eq!(sample_graph(&params, 99), g);
        assert_ne!(sample_graph(&params, 100), g);
    }

    fn random_params(p: usize, spread: f64, seed: u64) -> BetaParams {
        let mut s = Stream::derive(seed, &[domain::THETA]);
        BetaParams::new((0..p).map(|_| spread * (s.next_f64() - 0.5)).collect()).unwrap()
    }

    #[test]
    fn oracle_symmetric_zero_case() {
        let params = BetaParams::new(vec![0.0; 6]).unwrap();
        let oracle = population_oracle(&params, &NoiseSchedule::zero()).unwrap();
        for l in 0..6 {
            assert!((oracle.mu1[l] - 0.125).abs() < 1e-15);
            assert!((oracle.mu2[l] - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn oracle_ratio_identity_and_translation() {
        let params = random_params(12, 2.0, 5);
        let sched = NoiseSchedule::constant(0.15, 0.25).unwrap();
        let oracle = population_oracle(&params, &sched).unwrap();
        for l in 0..12 {
            let expect = (2.0 * params.theta()[l]).exp();
            let ratio = oracle.mu1[l] / oracle.mu2[l];
            assert!(
                (ratio / expect - 1.0).abs() < 1e-12,
                "node {l}: {ratio} vs {expect}"
            );
        }
        // Shifting every theta by c multiplies each ratio by e^{2c}.
        let c = 0.3;
        let shifted = BetaParams::new(params.theta().iter().map(|t| t + c).collect()).unwrap();
        let oracle2 = population_oracle(&shifted, &sched).unwrap();
        for l in 0..12 {
            let r1 = oracle.mu1[l] / oracle.mu2[l];
            let r2 = oracle2.mu1[l] / oracle2.mu2[l];
            assert!((r2 / (r1 * (2.0 * c).exp()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_ratio_identity_per_pair_schedule() {
        let p = 7;
        let mut s = Stream::derive(3, &[domain::REPLICATE]);
        let mut entries = Vec::new();
        for i in 0..p {
            for j in (i + 1)..p {
                entries.push((i, j, 0.4 * s.next_f64(), 0.4 * s.next_f64()));
            }
        }
        let sched = NoiseSchedule::per_pair(entries).unwrap();
        let params = random_params(p, 1.5, 8);
        let oracle = population_oracle(&params, &sched).unwrap();
        for l in 0..p {
            let expect = (2.0 * params.theta()[l]).exp();
            assert!((oracle.mu1[l] / oracle.mu2[l] / expect - 1.0).abs() < 1e-12);
        }
        // Positivity when gamma_min > 0.
        for l in 0..p {
            assert!(oracle.mu1[l] > 0.0 && oracle.b[l] > 0.0 && oracle.nu[l] > 0.0);
        }
    }

    #[test]
    fn oracle_rejects_zero_gamma() {
        let params = BetaParams::new(vec![0.0; 5]).unwrap();
        assert!(population_oracle(&params, &NoiseSchedule::max_privacy()).is_err());
    }

    #[test]
    fn mle_regular_degrees_closed_form() {
        // Regular degree d on p nodes: θ_i = ½ logit(d / (p−1)).
        let fit = mle_fit(&DegreeSequence(vec![2; 4])).unwrap();
        let expect = 0.5 * (2.0f64 / 3.0 / (1.0 - 2.0 / 3.0)).ln(); // ½ ln 2
        for &t in fit.theta() {
            assert!((t - expect).abs() < 1e-6, "{t} vs {expect}");
        }
        assert!((expect - 0.34657359).abs() < 1e-7);

        let fit = mle_fit(&DegreeSequence(vec![7; 30])).unwrap();
        let expect = 0.5 * (7.0f64 / 29.0 / (1.0 - 7.0 / 29.0)).ln();
        for &t in fit.theta() {
            assert!((t - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn mle_reproduces_degrees_and_is_a_fixed_point() {
        let params = random_params(40, 1.6, 21);
        let g = sample_graph(&params, 77);
        let u = g.degrees();
        if u.as_slice().iter().any(|&d| d == 0 || d >= 39) {
            panic!("test fixture degenerate; pick another seed");
        }
        let fit = mle_fit(&u).unwrap();
        let fitted = fitted_degrees(&fit);
        for (f, &target) in fitted.iter().zip(u.as_slice()) {
            assert!((f - target as f64).abs() <= 1e-8, "{f} vs {target}");
        }
        // Re-fitting on the fitted real-valued degrees returns the same θ.
        let refit = mle_fit_targets(&fitted).unwrap();
        for (a, b) in fit.theta().iter().zip(refit.theta()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn mle_rejects_degenerate_degrees() {
        let err = mle_fit(&DegreeSequence(vec![2, 0, 2, 2])).unwrap_err();
        assert!(err.to_string().contains("node 1"), "{err}");
        let err = mle_fit(&DegreeSequence(vec![3, 2, 2, 2])).unwrap_err();
        assert!(err.to_string().contains("node 0"), "{err}");
        assert!(mle_fit_targets(&[1.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn private_fit_reduces_to_plain_fit_without_noise() {
        let params = random_params(25, 1.0, 4);
        let g = sample_graph(&params, 12);
        let plain = mle_fit(&g.degrees()).unwrap();
        let private = mle_private_fit(&g, &NoiseSchedule::zero()).unwrap();
        for (a, b) in plain.theta().iter().zip(private.theta()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn private_fit_clamps_all_noise_degrees() {
        // A released graph whose degrees all equal (p−1)α corrects to 0 and
        // clamps to the tiny positive target; the fit is near-isolated.
        let p = 12;
        let g = Graph::from_pair_fn(p, |i, j| j == i + 1); // path: degrees 1..2
        let sched = NoiseSchedule::constant(1.0 / 11.0, 0.5).unwrap();
        // Degree-1 endpoints correct to exactly 0 before clamping.
        let fit = mle_private_fit(&g, &sched).unwrap();
        assert!(fit.theta()[0] < -4.0);
    }

    #[test]
    fn private_fit_rejects_per_pair_schedules() {
        let sched = NoiseSchedule::per_pair([(0, 1, 0.1, 0.1), (0, 2, 0.1, 0.1), (1, 2, 0.1, 0.1)])
            .unwrap();
        let g = Graph::complete(3);
        assert!(mle_private_fit(&g, &sched).is_err());
    }

    #[test]
    fn params_csv_round_trip() {
        let params = BetaParams::new(vec![0.5, -0.25, 0.0]).unwrap();
        let mut buf = Vec::new();
        params.save_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,theta\n0,0.5\n"));
        assert_eq!(BetaParams::load_csv(buf.as_slice()).unwrap(), params);
        // Missing index rejected.
        assert!(BetaParams::load_csv("0,0.5\n2,0.1\n".as_bytes()).is_err());
    }
}
