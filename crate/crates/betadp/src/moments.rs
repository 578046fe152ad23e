//! Method-of-moments estimation of the heterogeneity parameters from a
//! jittered graph, plus the plug-in variance estimators that studentize it.
//!
//! For each node `ℓ`, the estimator averages noise-cancelling triple
//! products over `H_ℓ = {(i,j) : i < j, both ≠ ℓ}`:
//!
//! ```text
//! μ̂_{ℓ,1} = |H_ℓ|⁻¹ Σ φ_{(i,ℓ),1} φ_{(i,j),0} φ_{(ℓ,j),1}
//! μ̂_{ℓ,2} = |H_ℓ|⁻¹ Σ φ_{(i,ℓ),0} φ_{(i,j),1} φ_{(ℓ,j),0}
//! θ̂_ℓ     = ½ log(μ̂_{ℓ,1} / μ̂_{ℓ,2})
//! ```
//!
//! with `φ_{(i,j),1}(x) = x − α_{ij}` and `φ_{(i,j),0}(x) = 1 − β_{ij} − x`.
//! Two execution paths produce the same numbers: a literal O(p³) reference
//! loop (any schedule), and a fast path for constant schedules that reduces
//! each node's sums to degree, triangle, and common-neighbour counts of the
//! released graph — O(p·|E|/64 + p²) overall. The fast path is what makes
//! the bootstrap affordable, and the reference path is its anti-regression
//! oracle.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::privacy::NoiseSchedule;

/// Noise-centred edge weight: `x − α` for τ = 1, `1 − β − x` for τ = 0.
#[inline]
pub fn phi(x: f64, tau: u8, alpha: f64, beta: f64) -> f64 {
    debug_assert!(tau <= 1);
    if tau == 1 {
        x - alpha
    } else {
        1.0 - beta - x
    }
}

/// Validity of one node's moment estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeStatus {
    Ok,
    /// μ̂_{ℓ,1} or μ̂_{ℓ,2} came out non-positive, so the log-ratio is
    /// undefined; θ̂_ℓ is NaN and downstream quantities inherit it.
    NonpositiveMu,
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeStatus::Ok => "ok",
            NodeStatus::NonpositiveMu => "nonpositive-mu",
        })
    }
}

impl FromStr for NodeStatus {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ok" => Ok(NodeStatus::Ok),
            "nonpositive-mu" => Ok(NodeStatus::NonpositiveMu),
            other => Err(format!("unknown node status {other:?}")),
        }
    }
}

/// Per-node moment estimates with validity flags.
#[derive(Clone, Debug)]
pub struct MomentEstimate {
    pub mu1_hat: Vec<f64>,
    pub mu2_hat: Vec<f64>,
    /// ½ log(μ̂₁/μ̂₂) where both moments are positive, NaN otherwise.
    pub theta_hat: Vec<f64>,
    pub status: Vec<NodeStatus>,
}

impl MomentEstimate {
    /// Derive θ̂ and status from raw per-node moments.
    pub fn from_moments(mu1_hat: Vec<f64>, mu2_hat: Vec<f64>) -> MomentEstimate {
        let (theta_hat, status): (Vec<f64>, Vec<NodeStatus>) = mu1_hat
            .iter()
            .zip(&mu2_hat)
            .map(|(&m1, &m2)| {
                if m1 > 0.0 && m2 > 0.0 {
                    (0.5 * (m1 / m2).ln(), NodeStatus::Ok)
                } else {
                    (f64::NAN, NodeStatus::NonpositiveMu)
                }
            })
            .unzip();
        MomentEstimate {
            mu1_hat,
            mu2_hat,
            theta_hat,
            status,
        }
    }

    pub fn node_count(&self) -> usize {
        self.theta_hat.len()
    }

    /// Number of nodes flagged invalid.
    pub fn invalid_count(&self) -> usize {
        self.status
            .iter()
            .filter(|s| **s != NodeStatus::Ok)
            .count()
    }

    /// Write as CSV `index,theta_hat,mu1,mu2,status` with a header.
    pub fn save_csv<W: Write>(&self, writer: &mut W) -> std::io::Result<()> {
        writeln!(writer, "index,theta_hat,mu1,mu2,status")?;
        for i in 0..self.node_count() {
            writeln!(
                writer,
                "{i},{:?},{:?},{:?},{}",
                self.theta_hat[i], self.mu1_hat[i], self.mu2_hat[i], self.status[i]
            )?;
        }
        Ok(())
    }

    /// Read the CSV form written by [`MomentEstimate::save_csv`].
    pub fn load_csv<R: BufRead>(reader: R) -> Result<MomentEstimate> {
        let mut rows: Vec<(usize, f64, f64, f64, NodeStatus)> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || (lineno == 1 && trimmed.starts_with("index")) {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            let [i, t, m1, m2, st] = fields.as_slice() else {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected 5 fields, got {line:?}"),
                });
            };
            let bad = |what: &str| Error::Parse {
                line: lineno,
                message: format!("bad {what} in {line:?}"),
            };
            rows.push((
                i.parse().map_err(|_| bad("index"))?,
                t.parse().map_err(|_| bad("theta_hat"))?,
                m1.parse().map_err(|_| bad("mu1"))?,
                m2.parse().map_err(|_| bad("mu2"))?,
                st.parse().map_err(|_| bad("status"))?,
            ));
        }
        let p = rows.len();
        let mut est = MomentEstimate {
            mu1_hat: vec![f64::NAN; p],
            mu2_hat: vec![f64::NAN; p],
            theta_hat: vec![f64::NAN; p],
            status: vec![NodeStatus::NonpositiveMu; p],
        };
        let mut seen = vec![false; p];
        for (i, t, m1, m2, st) in rows {
            if i >= p || seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "estimate rows must cover each index exactly once (offending index {i})"
                )));
            }
            seen[i] = true;
            est.theta_hat[i] = t;
            est.mu1_hat[i] = m1;
            est.mu2_hat[i] = m2;
            est.status[i] = st;
        }
        Ok(est)
    }
}

/// Compensated accumulator; the reference path adds hundreds of thousands
/// of ±1-scale terms whose total can be orders of magnitude smaller.
#[derive(Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    #[inline]
    fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum
    }
}

fn check_estimation_inputs(z: &Graph, schedule: &NoiseSchedule) -> Result<()> {
    if z.node_count() < 3 {
        return Err(Error::InvalidArgument(format!(
            "moment estimation needs p >= 3, got {}",
            z.node_count()
        )));
    }
    schedule.check_dim(z.node_count())
}

/// Moment estimates for every node: fast path for constant schedules,
/// reference path otherwise.
pub fn estimate_theta(z: &Graph, schedule: &NoiseSchedule) -> Result<MomentEstimate> {
    check_estimation_inputs(z, schedule)?;
    Ok(match schedule.as_constant() {
        Some((alpha, beta)) => estimate_theta_fast(z, alpha, beta),
        None => reference_impl(z, schedule),
    })
}

/// The literal O(p³) triple loop over `H_ℓ`, valid for any schedule. This
/// is the semantic definition; the fast path must match it.
pub fn estimate_theta_reference(z: &Graph, schedule: &NoiseSchedule) -> Result<MomentEstimate> {
    check_estimation_inputs(z, schedule)?;
    Ok(reference_impl(z, schedule))
}

fn reference_impl(z: &Graph, schedule: &NoiseSchedule) -> MomentEstimate {
    let p = z.node_count();
    let h_size = ((p - 1) * (p - 2) / 2) as f64;
    let edge = |a: usize, b: usize| z.has_edge(a, b) as u8 as f64;
    let mus: Vec<(f64, f64)> = (0..p)
        .into_par_iter()
        .map(|l| {
            let (mut s1, mut s2) = (KahanSum::default(), KahanSum::default());
            for i in 0..p {
                if i == l {
                    continue;
                }
                let (a_il, b_il) = schedule.rates(i, l);
                let phi_il_1 = phi(edge(i, l), 1, a_il, b_il);
                let phi_il_0 = phi(edge(i, l), 0, a_il, b_il);
                for j in (i + 1)..p {
                    if j == l {
                        continue;
                    }
                    let (a_ij, b_ij) = schedule.rates(i, j);
                    let (a_lj, b_lj) = schedule.rates(l, j);
                    s1.add(
                        phi_il_1
                            * phi(edge(i, j), 0, a_ij, b_ij)
                            * phi(edge(l, j), 1, a_lj, b_lj),
                    );
                    s2.add(
                        phi_il_0
                            * phi(edge(i, j), 1, a_ij, b_ij)
                            * phi(edge(l, j), 0, a_lj, b_lj),
                    );
                }
            }
            (s1.total() / h_size, s2.total() / h_size)
        })
        .collect();
    MomentEstimate::from_moments(
        mus.iter().map(|m| m.0).collect(),
        mus.iter().map(|m| m.1).collect(),
    )
}

/// Constant-schedule fast path. With `a_i = Z_{iℓ} − α` and
/// `d_i = 1 − β − Z_{iℓ}`, expand
///
/// ```text
/// |H_ℓ| μ̂_{ℓ,1} = (1−β) Σ_{i<j≠ℓ} a_i a_j − Σ_{{i,j} ∈ E(Z), i,j≠ℓ} a_i a_j
/// |H_ℓ| μ̂_{ℓ,2} = Σ_{{i,j} ∈ E(Z), i,j≠ℓ} d_i d_j − α Σ_{i<j≠ℓ} d_i d_j
/// ```
///
/// Every piece reduces to integer graph statistics: the degree U_ℓ, the
/// edge total |E|, the triangle count through ℓ, and the sum of neighbour
/// degrees at ℓ. Pair sums use (Σx)² − Σx² over i ≠ ℓ.
fn estimate_theta_fast(z: &Graph, alpha: f64, beta: f64) -> MomentEstimate {
    let p = z.node_count();
    let pf = p as f64;
    let h_size = ((p - 1) * (p - 2) / 2) as f64;
    let degrees = z.degrees();
    let edge_total = degrees.sum() as f64 / 2.0;
    let triangles = z.triangles_per_node();
    // SS_ℓ = Σ_{j ∈ N(ℓ)} U_j.
    let neighbor_degree_sum: Vec<u64> = (0..p)
        .into_par_iter()
        .map(|l| z.neighbors(l).map(|j| degrees.as_slice()[j] as u64).sum())
        .collect();

    let mus: Vec<(f64, f64)> = (0..p)
        .into_par_iter()
        .map(|l| {
            let u = degrees.as_slice()[l] as f64;
            let t = triangles[l] as f64;
            // Σ over edges avoiding ℓ of (Z_{iℓ} + Z_{jℓ}).
            let ns = neighbor_degree_sum[l] as f64 - u;
            let edges_avoiding = edge_total - u;

            let sa = u - alpha * (pf - 1.0);
            let qa = (1.0 - 2.0 * alpha) * u + alpha * alpha * (pf - 1.0);
            let pair_a = (sa * sa - qa) / 2.0;
            let edge_a = t - alpha * ns + alpha * alpha * edges_avoiding;
            let mu1 = ((1.0 - beta) * pair_a - edge_a) / h_size;

            let omb = 1.0 - beta;
            let sd = omb * (pf - 1.0) - u;
            let qd = omb * omb * (pf - 1.0) - (1.0 - 2.0 * beta) * u;
            let pair_d = (sd * sd - qd) / 2.0;
            let edge_d = omb * omb * edges_avoiding - omb * ns + t;
            let mu2 = (edge_d - alpha * pair_d) / h_size;
            (mu1, mu2)
        })
        .collect();
    MomentEstimate::from_moments(
        mus.iter().map(|m| m.0).collect(),
        mus.iter().map(|m| m.1).collect(),
    )
}

/// Plug-in variance estimates for the studentized estimator.
#[derive(Clone, Debug)]
pub struct VarianceBundle {
    p: usize,
    /// λ̂_{i,ℓ}, row-major `[i][ℓ]`; diagonal unused (zero).
    pub lambda_hat: Vec<f64>,
    /// V̂ar(Z_{i,j}) from the closed form at θ̂; diagonal zero.
    pub varz_hat: Vec<f64>,
    /// b̂_ℓ = (p−1)⁻¹ Σ_{i≠ℓ} λ̂²_{i,ℓ} V̂ar(Z_{i,ℓ}).
    pub b_hat: Vec<f64>,
    /// b̃̂_ℓ = (2N)⁻¹ ((μ̂₁+μ̂₂)/(μ̂₁μ̂₂))² Σ_{i≠j≠ℓ} V̂ar(Z_{iℓ}) V̂ar(Z_{ℓj}) V̂ar(Z_{ij}).
    pub btilde_hat: Vec<f64>,
    /// ν̂_ℓ = (p−2) b̂_ℓ + b̃̂_ℓ.
    pub nu_hat: Vec<f64>,
}

impl VarianceBundle {
    pub fn node_count(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn lambda(&self, i: usize, l: usize) -> f64 {
        self.lambda_hat[i * self.p + l]
    }

    #[inline]
    pub fn varz(&self, i: usize, j: usize) -> f64 {
        self.varz_hat[i * self.p + j]
    }

    /// Write as CSV `index,b_hat,btilde_hat,nu_hat` with a header.
    pub fn save_csv<W: Write>(&self, writer: &mut W) -> std::io::Result<()> {
        writeln!(writer, "index,b_hat,btilde_hat,nu_hat")?;
        for i in 0..self.p {
            writeln!(
                writer,
                "{i},{:?},{:?},{:?}",
                self.b_hat[i], self.btilde_hat[i], self.nu_hat[i]
            )?;
        }
        Ok(())
    }
}

/// Plug-in variance chain evaluated at the observed graph and estimates.
///
/// Nodes flagged invalid in `est` produce NaN entries, and — because
/// V̂ar(Z_{i,ℓ}) involves both endpoints' θ̂ — their NaN contaminates the
/// b̂/b̃̂ sums of other nodes too. That is deliberate propagation, not a
/// bug: variance claims are unsound once any ingredient is missing, and
/// callers can see exactly which nodes started it via `est.status`.
pub fn plugin_variances(
    z: &Graph,
    schedule: &NoiseSchedule,
    est: &MomentEstimate,
) -> Result<VarianceBundle> {
    check_estimation_inputs(z, schedule)?;
    let p = z.node_count();
    if est.node_count() != p {
        return Err(Error::DimensionMismatch(format!(
            "estimate covers {} nodes, graph has {p}",
            est.node_count()
        )));
    }

    // V̂ar(Z_{ij}) = m(1−m) with m = α + γ σ(θ̂_i + θ̂_j): the mean of the
    // released indicator under the plugged-in model.
    let mut varz_hat = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let (alpha, beta) = schedule.rates(i, j);
            let gamma = 1.0 - alpha - beta;
            let m = alpha + gamma * crate::betamodel::edge_prob(est.theta_hat[i], est.theta_hat[j]);
            varz_hat[i * p + j] = m * (1.0 - m);
        }
    }

    let lambda_hat = match schedule.as_constant() {
        Some((alpha, beta)) => lambda_fast(z, alpha, beta, est),
        None => lambda_reference(z, schedule, est),
    };

    let n_pairs = ((p - 1) * (p - 2)) as f64;
    let per_node: Vec<(f64, f64)> = (0..p)
        .into_par_iter()
        .map(|l| {
            let mut b = 0.0;
            for i in 0..p {
                if i != l {
                    let lam = lambda_hat[i * p + l];
                    b += lam * lam * varz_hat[i * p + l];
                }
            }
            b /= p as f64 - 1.0;

            let mut triple = 0.0;
            for i in 0..p {
                if i == l {
                    continue;
                }
                let wi = varz_hat[i * p + l];
                let mut inner = 0.0;
                for j in 0..p {
                    if j != l {
                        inner += varz_hat[i * p + j] * varz_hat[j * p + l];
                    }
                }
                triple += wi * inner;
            }
            let (m1, m2) = (est.mu1_hat[l], est.mu2_hat[l]);
            let ratio = if est.status[l] == NodeStatus::Ok {
                (m1 + m2) / (m1 * m2)
            } else {
                f64::NAN
            };
            let btilde = ratio * ratio / (2.0 * n_pairs) * triple;
            (b, btilde)
        })
        .collect();

    let b_hat: Vec<f64> = per_node.iter().map(|x| x.0).collect();
    let btilde_hat: Vec<f64> = per_node.iter().map(|x| x.1).collect();
    let nu_hat: Vec<f64> = b_hat
        .iter()
        .zip(&btilde_hat)
        .map(|(&b, &bt)| (p as f64 - 2.0) * b + bt)
        .collect();
    Ok(VarianceBundle {
        p,
        lambda_hat,
        varz_hat,
        b_hat,
        btilde_hat,
        nu_hat,
    })
}

/// λ̂_{i,ℓ} by the definition: observed φ products averaged over the third
/// node, weighted by the reciprocal moments of ℓ.
fn lambda_reference(z: &Graph, schedule: &NoiseSchedule, est: &MomentEstimate) -> Vec<f64> {
    let p = z.node_count();
    let edge = |a: usize, b: usize| z.has_edge(a, b) as u8 as f64;
    let mut lambda = vec![0.0; p * p];
    lambda.par_chunks_mut(p).enumerate().for_each(|(i, row)| {
        for (l, slot) in row.iter_mut().enumerate() {
            if l == i {
                continue;
            }
            if est.status[l] != NodeStatus::Ok {
                *slot = f64::NAN;
                continue;
            }
            let (m1, m2) = (est.mu1_hat[l], est.mu2_hat[l]);
            let mut acc = KahanSum::default();
            for j in 0..p {
                if j == l || j == i {
                    continue;
                }
                let (a_lj, b_lj) = schedule.rates(l, j);
                let (a_ij, b_ij) = schedule.rates(i, j);
                acc.add(
                    phi(edge(l, j), 1, a_lj, b_lj) * phi(edge(i, j), 0, a_ij, b_ij) / m1
                        + phi(edge(l, j), 0, a_lj, b_lj) * phi(edge(i, j), 1, a_ij, b_ij) / m2,
                );
            }
            *slot = acc.total() / (p as f64 - 2.0);
        }
    });
    lambda
}

/// Constant-schedule λ̂: the j-sums collapse to degrees and common-neighbour
/// counts,
///
/// ```text
/// Σ_{j≠ℓ,i} (Z_{ℓj} − α)(1 − β − Z_{ij})
///   = (1−β)(U_ℓ − Z_{iℓ}) − CN_{iℓ} − α(1−β)(p−2) + α(U_i − Z_{iℓ})
/// ```
///
/// and the τ-flipped sum swaps U_ℓ with U_i.
fn lambda_fast(z: &Graph, alpha: f64, beta: f64, est: &MomentEstimate) -> Vec<f64> {
    let p = z.node_count();
    let pf = p as f64;
    let degrees = z.degrees();
    let mut lambda = vec![0.0; p * p];
    lambda.par_chunks_mut(p).enumerate().for_each(|(i, row)| {
        let ui = degrees.as_slice()[i] as f64;
        for (l, slot) in row.iter_mut().enumerate() {
            if l == i {
                continue;
            }
            if est.status[l] != NodeStatus::Ok {
                *slot = f64::NAN;
                continue;
            }
            let ul = degrees.as_slice()[l] as f64;
            let zil = z.has_edge(i, l) as u8 as f64;
            let cn = z.common_neighbors(i, l) as f64;
            let shared = -cn - alpha * (1.0 - beta) * (pf - 2.0);
            let a_sum = (1.0 - beta) * (ul - zil) + shared + alpha * (ui - zil);
            let d_sum = (1.0 - beta) * (ui - zil) + shared + alpha * (ul - zil);
            *slot = (a_sum / est.mu1_hat[l] + d_sum / est.mu2_hat[l]) / (pf - 2.0);
        }
    });
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::betamodel::{sample_graph, BetaParams};
    use crate::privacy::jitter;
    use crate::rng::{domain, Stream};

    #[test]
    fn phi_closed_forms() {
        assert!((phi(1.0, 1, 0.1, 0.2) - 0.9).abs() < 1e-15);
        assert!((phi(0.0, 0, 0.1, 0.2) - 0.8).abs() < 1e-15);
        // φ₁ + φ₀ = 1 − α − β for binary inputs (up to float association).
        for z in [0.0, 1.0] {
            for &(a, b) in &[(0.1, 0.2), (0.0, 0.0), (0.45, 0.45)] {
                let sum = phi(z, 1, a, b) + phi(z, 0, a, b);
                assert!((sum - (1.0 - a - b)).abs() < 1e-15, "{z} {a} {b}");
            }
        }
    }

    fn random_instance(p: usize, seed: u64) -> (Graph, NoiseSchedule) {
        let mut s = Stream::derive(seed, &[domain::REPLICATE]);
        let theta: Vec<f64> = (0..p).map(|_| 1.6 * (s.next_f64() - 0.5)).collect();
        let params = BetaParams::new(theta).unwrap();
        let x = sample_graph(&params, s.next_u64());
        let alpha = 0.35 * s.next_f64();
        let beta = 0.35 * s.next_f64();
        let sched = NoiseSchedule::constant(alpha, beta).unwrap();
        let z = jitter(&x, &sched, s.next_u64()).unwrap();
        (z, sched)
    }

    #[test]
    fn fast_path_matches_reference_path() {
        for seed in 0..25 {
            let p = 5 + (seed as usize % 26);
            let (z, sched) = random_instance(p, seed);
            let fast = estimate_theta(&z, &sched).unwrap();
            let refr = estimate_theta_reference(&z, &sched).unwrap();
            for l in 0..p {
                let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
                assert!(
                    rel(fast.mu1_hat[l], refr.mu1_hat[l]) < 1e-10,
                    "seed {seed} node {l}: mu1 {} vs {}",
                    fast.mu1_hat[l],
                    refr.mu1_hat[l]
                );
                assert!(rel(fast.mu2_hat[l], refr.mu2_hat[l]) < 1e-10);
                assert_eq!(fast.status[l], refr.status[l]);
                if fast.status[l] == NodeStatus::Ok {
                    assert!((fast.theta_hat[l] - refr.theta_hat[l]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn estimator_recovers_parameters_without_noise() {
        // With no jitter and moderate p the estimator should sit near the
        // truth; this is a smoke bound, the calibrated windows live in the
        // acceptance suite.
        let p = 400;
        let mut s = Stream::derive(11, &[domain::THETA]);
        let theta: Vec<f64> = (0..p).map(|_| 0.8 * (s.next_f64() - 0.5)).collect();
        let params = BetaParams::new(theta.clone()).unwrap();
        let x = sample_graph(&params, 3);
        let est = estimate_theta(&x, &NoiseSchedule::zero()).unwrap();
        assert_eq!(est.invalid_count(), 0);
        let mse: f64 =
            theta.iter().zip(&est.theta_hat).map(|(t, e)| (t - e) * (t - e)).sum::<f64>()
                / p as f64;
        assert!(mse < 0.02, "mse {mse}");
    }

    #[test]
    fn relabeling_equivariance() {
        let (z, sched) = random_instance(9, 3);
        let p = 9;
        // A fixed permutation σ; per-pair schedule built to match.
        let perm: Vec<usize> = vec![4, 7, 0, 8, 2, 6, 1, 3, 5];
        let mut relabeled = Graph::empty(p);
        for (i, j) in z.edges() {
            relabeled.set_edge(perm[i], perm[j], true);
        }
        let (alpha, beta) = sched.as_constant().unwrap();
        let _ = (alpha, beta); // constant schedule is permutation-invariant
        let base = estimate_theta(&z, &sched).unwrap();
        let moved = estimate_theta(&relabeled, &sched).unwrap();
        for l in 0..p {
            assert!(
                (base.mu1_hat[l] - moved.mu1_hat[perm[l]]).abs() < 1e-12,
                "node {l}"
            );
            assert!((base.mu2_hat[l] - moved.mu2_hat[perm[l]]).abs() < 1e-12);
        }
    }

    #[test]
    fn nonpositive_moments_are_flagged_not_clamped() {
        // Heavy, asymmetric noise on a tiny graph reliably produces some
        // non-positive moment estimates across seeds; find one and check the
        // flagged invariants rather than a specific seed's layout.
        let mut hit = false;
        for seed in 0..200 {
            let params = BetaParams::new(vec![-1.0, 2.0, -0.5, 1.0, 0.0]).unwrap();
            let x = sample_graph(&params, seed);
            let sched = NoiseSchedule::constant(0.42, 0.45).unwrap();
            let z = jitter(&x, &sched, seed ^ 0xABCD).unwrap();
            let est = estimate_theta(&z, &sched).unwrap();
            for l in 0..5 {
                match est.status[l] {
                    NodeStatus::Ok => {
                        assert!(est.theta_hat[l].is_finite());
                        assert_eq!(
                            est.theta_hat[l],
                            0.5 * (est.mu1_hat[l] / est.mu2_hat[l]).ln()
                        );
                    }
                    NodeStatus::NonpositiveMu => {
                        hit = true;
                        assert!(est.theta_hat[l].is_nan());
                        assert!(est.mu1_hat[l] <= 0.0 || est.mu2_hat[l] <= 0.0);
                    }
                }
            }
            if hit {
                break;
            }
        }
        assert!(hit, "no invalid node found across 200 seeds; fixture too tame");
    }

    #[test]
    fn estimator_rejects_tiny_or_mismatched_inputs() {
        let g = Graph::complete(2);
        assert!(estimate_theta(&g, &NoiseSchedule::zero()).is_err());
        let sched3 = NoiseSchedule::per_pair([
            (0, 1, 0.1, 0.1),
            (0, 2, 0.1, 0.1),
            (1, 2, 0.1, 0.1),
        ])
        .unwrap();
        let g4 = Graph::complete(4);
        assert!(estimate_theta(&g4, &sched3).is_err());
    }

    /// Naive re-implementation of b̂ and b̃̂ that expands every sum term by
    /// term straight from the definitions, sharing nothing with the
    /// production code path.
    fn naive_b_btilde(
        z: &Graph,
        sched: &NoiseSchedule,
        est: &MomentEstimate,
    ) -> (Vec<f64>, Vec<f64>) {
        let p = z.node_count();
        let edge = |a: usize, b: usize| z.has_edge(a, b) as u8 as f64;
        let varz = |i: usize, j: usize| {
            let (a, b) = sched.rates(i, j);
            let g = 1.0 - a - b;
            let m = a + g * crate::betamodel::edge_prob(est.theta_hat[i], est.theta_hat[j]);
            m * (1.0 - m)
        };
        let lam = |i: usize, l: usize| {
            let mut acc = 0.0;
            for j in 0..p {
                if j == l || j == i {
                    continue;
                }
                let (a_lj, b_lj) = sched.rates(l, j);
                let (a_ij, b_ij) = sched.rates(i, j);
                acc += phi(edge(l, j), 1, a_lj, b_lj) * phi(edge(i, j), 0, a_ij, b_ij)
                    / est.mu1_hat[l]
                    + phi(edge(l, j), 0, a_lj, b_lj) * phi(edge(i, j), 1, a_ij, b_ij)
                        / est.mu2_hat[l];
            }
            acc / (p as f64 - 2.0)
        };
        let mut bs = Vec::new();
        let mut bts = Vec::new();
        for l in 0..p {
            let mut b = 0.0;
            for i in 0..p {
                if i != l {
                    b += lam(i, l).powi(2) * varz(i, l);
                }
            }
            b /= p as f64 - 1.0;
            let mut triple = 0.0;
            for i in 0..p {
                for j in 0..p {
                    if i != j && i != l && j != l {
                        triple += varz(i, l) * varz(l, j) * varz(i, j);
                    }
                }
            }
            let n = ((p - 1) * (p - 2)) as f64;
            let ratio = (est.mu1_hat[l] + est.mu2_hat[l]) / (est.mu1_hat[l] * est.mu2_hat[l]);
            bts.push(ratio * ratio / (2.0 * n) * triple);
            bs.push(b);
        }
        (bs, bts)
    }

    #[test]
    fn variance_bundle_matches_naive_expansion() {
        for seed in [2, 9, 14] {
            let p = 8 + 2 * (seed as usize % 5);
            let (z, sched) = random_instance(p, seed + 100);
            let est = estimate_theta(&z, &sched).unwrap();
            if est.invalid_count() > 0 {
                continue;
            }
            let vb = plugin_variances(&z, &sched, &est).unwrap();
            let (nb, nbt) = naive_b_btilde(&z, &sched, &est);
            for l in 0..p {
                let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
                assert!(rel(vb.b_hat[l], nb[l]) < 1e-10, "b node {l}");
                assert!(rel(vb.btilde_hat[l], nbt[l]) < 1e-10, "btilde node {l}");
                assert!(
                    (vb.nu_hat[l] - ((p as f64 - 2.0) * nb[l] + nbt[l])).abs()
                        / vb.nu_hat[l].abs()
                        < 1e-10
                );
            }
        }
    }

    #[test]
    fn variance_bundle_per_pair_schedule_agrees_with_naive() {
        let p = 7;
        let mut s = Stream::derive(55, &[domain::REPLICATE]);
        let mut entries = Vec::new();
        for i in 0..p {
            for j in (i + 1)..p {
                entries.push((i, j, 0.3 * s.next_f64(), 0.3 * s.next_f64()));
            }
        }
        let sched = NoiseSchedule::per_pair(entries).unwrap();
        let params = BetaParams::new(vec![0.4, -0.2, 0.1, 0.0, 0.3, -0.4, 0.2]).unwrap();
        let x = sample_graph(&params, 6);
        let z = jitter(&x, &sched, 7).unwrap();
        let est = estimate_theta(&z, &sched).unwrap();
        if est.invalid_count() > 0 {
            return; // tiny-p fixture can be unlucky; covered by other seeds
        }
        let vb = plugin_variances(&z, &sched, &est).unwrap();
        let (nb, nbt) = naive_b_btilde(&z, &sched, &est);
        for l in 0..p {
            assert!((vb.b_hat[l] - nb[l]).abs() / nb[l].abs() < 1e-10);
            assert!((vb.btilde_hat[l] - nbt[l]).abs() / nbt[l].abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_nodes_propagate_through_variances() {
        let (z, sched) = random_instance(8, 0);
        let mut est = estimate_theta(&z, &sched).unwrap();
        // Force node 2 invalid.
        est.mu1_hat[2] = -0.01;
        est.theta_hat[2] = f64::NAN;
        est.status[2] = NodeStatus::NonpositiveMu;
        let vb = plugin_variances(&z, &sched, &est).unwrap();
        assert!(vb.b_hat[2].is_nan());
        assert!(vb.nu_hat[2].is_nan());
        // Sums of other nodes include Var(Z_{i,2}), which is NaN.
        assert!(vb.b_hat[0].is_nan());
    }

    #[test]
    fn estimate_csv_round_trip() {
        let (z, sched) = random_instance(6, 8);
        let est = estimate_theta(&z, &sched).unwrap();
        let mut buf = Vec::new();
        est.save_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,theta_hat,mu1,mu2,status\n"));
        let back = MomentEstimate::load_csv(buf.as_slice()).unwrap();
        assert_eq!(back.node_count(), 6);
        for l in 0..6 {
            assert_eq!(back.status[l], est.status[l]);
            if est.theta_hat[l].is_nan() {
                assert!(back.theta_hat[l].is_nan());
            } else {
                assert_eq!(back.theta_hat[l], est.theta_hat[l]);
            }
        }
    }
}
