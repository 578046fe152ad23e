//! Bootstrap variance estimation ν̂†, leave-one-out bias correction of θ̂,
//! and the data-driven selection of the re-jitter rate δ.
//!
//! Each bootstrap replicate rebuilds the whole release pipeline at the
//! fitted parameters: sample a fresh graph from the model at θ̂, pass it
//! through the declared noise schedule, then apply a second, symmetric
//! re-jitter at rate δ. Because jitters compose, the twice-jittered graph
//! is distributed as a single jitter with rates `δ + α(1−2δ)`,
//! `δ + β(1−2δ)`, so the moment pipeline applies verbatim with those
//! effective rates and yields replicate estimates θ̂†. Their spread across
//! the M independent replicates estimates the total sampling variance:
//! `ν̂†_ℓ = N · M⁻¹ Σ_m (θ̂†_ℓ^(m) − mean)²` with `N = (p−1)(p−2)`.
//!
//! The re-jitter inflates that variance by a factor that grows with δ
//! (exactly 1 at δ = 0), so δ is chosen by matching ν̂†(δ) against an
//! independent plug-in target ν̂^bc computed at bias-corrected parameters:
//! δ_opt minimizes `max_{ℓ∈S} |ν̂†_ℓ(δ) − ν̂^bc_ℓ|` over a candidate grid,
//! ties toward the smaller δ. Small candidates therefore dominate, and the
//! grid acts as a robustness sweep rather than a bandwidth knob. The bias
//! correction itself removes the second-order term that the log-ratio
//! ½log(μ̂₁/μ̂₂) inherits from the fluctuations of μ̂₁ and μ̂₂, estimated by
//! leave-one-out perturbations of plug-in moment sums.
//!
//! Everything is deterministic given the seed: replicates, grid points,
//! and per-node leave-one-out draws all derive their own streams from
//! `(seed, domain, index)`.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::betamodel::{sample_graph, BetaParams};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::moments::{estimate_theta, plugin_variances, MomentEstimate, NodeStatus, VarianceBundle};
use crate::privacy::{jitter, NoiseSchedule};
use crate::rng::{domain, pair_uniform, Stream};

/// Settings for one bootstrap variance run.
#[derive(Clone, Copy, Debug)]
pub struct BootstrapConfig {
    /// Re-jitter rate, strictly inside (0, 0.5).
    pub delta: f64,
    /// Replicate count M.
    pub m: usize,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(delta: f64, m: usize, seed: u64) -> Result<BootstrapConfig> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "bootstrap delta={delta} must lie strictly inside (0, 0.5)"
            )));
        }
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "bootstrap needs at least 2 replicates, got {m}"
            )));
        }
        Ok(BootstrapConfig { delta, m, seed })
    }
}

/// Symmetric re-jitter of a released graph: each pair keeps its value with
/// probability 1−2δ, is forced to an edge with probability δ, and forced to
/// a non-edge with probability δ, independently across pairs.
///
/// This is exactly a jitter with rates (δ, δ) applied to `z`, and the
/// sampler shares the jitter's per-pair stream and branch layout so the two
/// agree draw for draw, not just in distribution. Pairs are i.i.d., so the
/// mechanism commutes with node relabeling in distribution by construction.
pub fn rejitter(z: &Graph, delta: f64, seed: u64) -> Result<Graph> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "re-jitter rate delta={delta} must lie strictly inside (0, 0.5)"
        )));
    }
    Ok(Graph::from_pair_fn(z.node_count(), |i, j| {
        let u = pair_uniform(seed, domain::JITTER, i, j);
        if u < delta {
            true
        } else if u < 2.0 * delta {
            false
        } else {
            z.has_edge(i, j)
        }
    }))
}

/// Moment estimation on a re-jittered graph: the same pipeline as
/// [`estimate_theta`], run at the effective rates `δ + α(1−2δ)`,
/// `δ + β(1−2δ)` of the composed mechanism. At δ = 0 this reduces exactly
/// to `estimate_theta(zdag, schedule)`.
pub fn estimate_theta_dagger(
    zdag: &Graph,
    schedule: &NoiseSchedule,
    delta: f64,
) -> Result<MomentEstimate> {
    let effective = schedule.rejittered(delta)?;
    estimate_theta(zdag, &effective)
}

/// Per-node bootstrap variance estimates over a node subset.
#[derive(Clone, Debug)]
pub struct NuDagger {
    pub subset: Vec<usize>,
    /// ν̂†_ℓ for ℓ in `subset`, same order.
    pub nu_dagger: Vec<f64>,
    /// Valid replicate count per subset node after dropping replicates
    /// whose θ̂†_ℓ was invalid.
    pub effective_m: Vec<usize>,
}

fn check_subset(subset: &[usize], p: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument(
            "node subset must be non-empty".into(),
        ));
    }
    if let Some(&bad) = subset.iter().find(|&&l| l >= p) {
        return Err(Error::InvalidArgument(format!(
            "subset node {bad} out of range for {p} nodes"
        )));
    }
    Ok(())
}

/// Draw M independent replicates of the full release pipeline at the
/// fitted parameters — fresh graph at θ̂, declared noise schedule, then a
/// symmetric re-jitter at rate δ — estimate θ̂† on each, and return the
/// scaled replicate variance `ν̂†_ℓ = N · M_eff⁻¹ Σ (θ̂†_ℓ − mean)²` per
/// subset node. Replicates where θ̂†_ℓ is invalid are dropped for that ℓ
/// only; fewer than 2 survivors for any requested node is an error.
///
/// Nodes whose θ̂ is invalid contribute θ = 0 to replicate generation (the
/// centre of the parameter scale); their own ν̂† is still reported if
/// requested but inherits that substitution, so callers normally exclude
/// them from `subset`.
pub fn estimate_nu_dagger(
    z: &Graph,
    schedule: &NoiseSchedule,
    cfg: &BootstrapConfig,
    subset: &[usize],
) -> Result<NuDagger> {
    let est = estimate_theta(z, schedule)?;
    estimate_nu_dagger_at(&est, schedule, cfg, subset)
}

/// [`estimate_nu_dagger`] with the moment fit already in hand, so grid
/// sweeps fit the data once.
pub fn estimate_nu_dagger_at(
    est: &MomentEstimate,
    schedule: &NoiseSchedule,
    cfg: &BootstrapConfig,
    subset: &[usize],
) -> Result<NuDagger> {
    BootstrapConfig::new(cfg.delta, cfg.m, cfg.seed)?;
    let p = est.theta_hat.len();
    schedule.check_dim(p)?;
    check_subset(subset, p)?;

    let theta_gen: Vec<f64> = est
        .theta_hat
        .iter()
        .zip(&est.status)
        .map(|(&t, &s)| if s == NodeStatus::Ok { t } else { 0.0 })
        .collect();
    let params = BetaParams::new(theta_gen)?;

    // Each replicate owns the stream (seed, BOOTSTRAP, k) and draws its
    // graph, release, and re-jitter seeds from it in that order; collect()
    // keeps replicate order regardless of scheduling.
    let reps: Vec<Result<(Vec<f64>, Vec<bool>)>> = (0..cfg.m)
        .into_par_iter()
        .map(|k| {
            let mut rs = Stream::derive(cfg.seed, &[domain::BOOTSTRAP, k as u64]);
            let xdag = sample_graph(&params, rs.next_u64());
            let zrel = jitter(&xdag, schedule, rs.next_u64())?;
            let zdag = rejitter(&zrel, cfg.delta, rs.next_u64())?;
            let est = estimate_theta_dagger(&zdag, schedule, cfg.delta)?;
            let theta: Vec<f64> = subset.iter().map(|&l| est.theta_hat[l]).collect();
            let valid: Vec<bool> = subset
                .iter()
                .map(|&l| est.status[l] == NodeStatus::Ok)
                .collect();
            Ok((theta, valid))
        })
        .collect();
    let mut thetas = Vec::with_capacity(cfg.m);
    let mut valids = Vec::with_capacity(cfg.m);
    for rep in reps {
        let (t, v) = rep?;
        thetas.push(t);
        valids.push(v);
    }

    let n_pairs = ((p - 1) * (p - 2)) as f64;
    let mut nu_dagger = Vec::with_capacity(subset.len());
    let mut effective_m = Vec::with_capacity(subset.len());
    for (k, &l) in subset.iter().enumerate() {
        let n_eff = valids.iter().filter(|v| v[k]).count();
        if n_eff < 2 {
            return Err(Error::TooFewReplicates {
                node: l,
                valid: n_eff,
                total: cfg.m,
            });
        }
        let mut mean = 0.0;
        for m in 0..cfg.m {
            if valids[m][k] {
                mean += thetas[m][k];
            }
        }
        mean /= n_eff as f64;
        let mut ss = 0.0;
        for m in 0..cfg.m {
            if valids[m][k] {
                let d = thetas[m][k] - mean;
                ss += d * d;
            }
        }
        nu_dagger.push(n_pairs * ss / n_eff as f64);
        effective_m.push(n_eff);
    }
    Ok(NuDagger {
        subset: subset.to_vec(),
        nu_dagger,
        effective_m,
    })
}

/// Output of the leave-one-out bias correction.
#[derive(Clone, Debug)]
pub struct BiasCorrected {
    /// Estimated second-order bias per node; θ̂^bc = θ̂ − bias.
    pub bias: Vec<f64>,
    /// The substituted estimate: θ̂^bc together with the full-set plug-in
    /// moments μ̃^bc evaluated at θ̂^bc. Status is Ok where θ̂^bc is finite
    /// and both plug-in moments are positive.
    pub estimate: MomentEstimate,
    /// Variance chain [`plugin_variances`] evaluated at the substituted
    /// estimate; its `nu_hat` is the matching target ν̂^bc for δ selection.
    pub variances: VarianceBundle,
}

impl BiasCorrected {
    pub fn theta_bc(&self) -> &[f64] {
        &self.estimate.theta_hat
    }

    pub fn nu_bc(&self) -> &[f64] {
        &self.variances.nu_hat
    }
}

/// σ(θ̂_i + θ̂_j) for all pairs, row-major with a meaningless diagonal.
fn fitted_prob_matrix(theta: &[f64]) -> Vec<f64> {
    let p = theta.len();
    let mut q = vec![0.0; p * p];
    q.par_chunks_mut(p).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = crate::betamodel::edge_prob(theta[i], theta[j]);
        }
    });
    q
}

/// Plug-in moment sums `S_{ℓ,1} = Σ_{(i,j)∈H_ℓ} φ̂₁(i,j,ℓ)` and the
/// τ-flipped `S_{ℓ,2}`, where `φ̂₁ = γ_{iℓ}q_{iℓ} · γ_{ij}(1−q_{ij}) ·
/// γ_{ℓj}q_{ℓj}` and q is the fitted edge probability. The per-node weight
/// vectors w1/w2 are returned so callers can reconstruct individual terms:
/// `φ̂₁(i,j,ℓ) = w1[i] · γ_{ij}(1−q_{ij}) · w1[j]`.
struct PluginSums {
    s1: f64,
    s2: f64,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

fn plugin_sums(schedule: &NoiseSchedule, q: &[f64], p: usize, l: usize) -> PluginSums {
    let mut w1 = vec![0.0; p];
    let mut w2 = vec![0.0; p];
    for i in 0..p {
        if i == l {
            continue;
        }
        let g = schedule.gamma(i, l);
        let qv = q[i * p + l];
        w1[i] = g * qv;
        w2[i] = g * (1.0 - qv);
    }
    // Compensated sums: ~p²/2 terms whose total we later perturb by a
    // single term, so carried rounding must stay far below one term.
    let (mut s1, mut s2, mut c1, mut c2) = (0.0, 0.0, 0.0, 0.0);
    let add = |s: &mut f64, c: &mut f64, v: f64| {
        let y = v - *c;
        let t = *s + y;
        *c = (t - *s) - y;
        *s = t;
    };
    match schedule.as_constant() {
        Some((alpha, beta)) => {
            let g = 1.0 - alpha - beta;
            for i in 0..p {
                if i == l || (w1[i] == 0.0 && w2[i] == 0.0) {
                    continue;
                }
                for j in (i + 1)..p {
                    if j == l {
                        continue;
                    }
                    let qij = q[i * p + j];
                    add(&mut s1, &mut c1, w1[i] * g * (1.0 - qij) * w1[j]);
                    add(&mut s2, &mut c2, w2[i] * g * qij * w2[j]);
                }
            }
        }
        None => {
            for i in 0..p {
                if i == l {
                    continue;
                }
                for j in (i + 1)..p {
                    if j == l {
                        continue;
                    }
                    let g = schedule.gamma(i, j);
                    let qij = q[i * p + j];
                    add(&mut s1, &mut c1, w1[i] * g * (1.0 - qij) * w1[j]);
                    add(&mut s2, &mut c2, w2[i] * g * qij * w2[j]);
                }
            }
        }
    }
    PluginSums { s1, s2, w1, w2 }
}

/// Map a rank in `[0, C(p−1, 2))` to the pair `(i, j)`, `i < j`, both ≠ `l`,
/// enumerating pairs of `[p] \ {l}` in colex order.
fn unrank_pair(rank: u64, p: usize, l: usize) -> (usize, usize) {
    debug_assert!(rank < (p as u64 - 1) * (p as u64 - 2) / 2);
    let mut b = ((1.0 + (1.0 + 8.0 * rank as f64).sqrt()) / 2.0) as u64;
    while b * (b - 1) / 2 > rank {
        b -= 1;
    }
    while (b + 1) * b / 2 <= rank {
        b += 1;
    }
    let a = rank - b * (b - 1) / 2;
    let expand = |t: u64| {
        let t = t as usize;
        if t < l {
            t
        } else {
            t + 1
        }
    };
    (expand(a), expand(b))
}

/// Estimate θ̂ first, then apply the leave-one-out bias correction.
pub fn bias_corrected_theta(
    z: &Graph,
    schedule: &NoiseSchedule,
    m: usize,
    seed: u64,
) -> Result<BiasCorrected> {
    let est = estimate_theta(z, schedule)?;
    bias_corrected_with_estimate(z, schedule, &est, m, seed)
}

/// Leave-one-out bias correction of an existing estimate.
///
/// Steps: form the plug-in moment sums at θ̂; for each node run `m` rounds,
/// each removing one uniformly drawn pair from `H_ℓ` (without replacement
/// across rounds when `m ≤ |H_ℓ|`) and evaluating
/// `bias = ¼ μ̃₂⁻²(μ̂₂−μ̃₂)² − ¼ μ̃₁⁻²(μ̂₁−μ̃₁)²` against the leave-one-out
/// plug-in moments μ̃; average the rounds, set θ̂^bc = θ̂ − bias; recompute
/// the full-set plug-in moments at θ̂^bc and rerun the variance chain on the
/// substituted estimate.
///
/// Invalid nodes in `est` propagate: their NaN θ̂ poisons every plug-in
/// product they touch, which spans all of H_ℓ for every ℓ, so any invalid
/// node leaves the whole correction NaN. Callers that tolerate partial
/// failure should check `est.invalid_count()` before asking for bias
/// correction.
pub fn bias_corrected_with_estimate(
    z: &Graph,
    schedule: &NoiseSchedule,
    est: &MomentEstimate,
    m: usize,
    seed: u64,
) -> Result<BiasCorrected> {
    let p = z.node_count();
    schedule.check_dim(p)?;
    if est.node_count() != p {
        return Err(Error::DimensionMismatch(format!(
            "estimate covers {} nodes, graph has {p}",
            est.node_count()
        )));
    }
    if p < 3 {
        return Err(Error::InvalidArgument(format!(
            "bias correction needs p >= 3, got {p}"
        )));
    }
    if m < 1 {
        return Err(Error::InvalidArgument(
            "bias correction needs at least 1 leave-one-out round".into(),
        ));
    }

    let h_size = ((p - 1) * (p - 2) / 2) as u64;
    let q = fitted_prob_matrix(&est.theta_hat);

    let bias: Vec<f64> = (0..p)
        .into_par_iter()
        .map(|l| {
            let sums = plugin_sums(schedule, &q, p, l);
            let term = |i: usize, j: usize| {
                let g = schedule.gamma(i, j);
                let qij = q[i * p + j];
                (
                    sums.w1[i] * g * (1.0 - qij) * sums.w1[j],
                    sums.w2[i] * g * qij * sums.w2[j],
                )
            };
            let mut stream = Stream::derive(seed, &[domain::BIAS, l as u64]);
            let ranks: Vec<u64> = if (m as u64) <= h_size {
                let mut seen = HashSet::with_capacity(m);
                let mut out = Vec::with_capacity(m);
                while out.len() < m {
                    let r = stream.next_below(h_size);
                    if seen.insert(r) {
                        out.push(r);
                    }
                }
                out
            } else {
                (0..m).map(|_| stream.next_below(h_size)).collect()
            };
            let denom = (h_size - 1) as f64;
            let (mu1, mu2) = (est.mu1_hat[l], est.mu2_hat[l]);
            let mut acc = 0.0;
            for r in ranks {
                let (i, j) = unrank_pair(r, p, l);
                let (t1, t2) = term(i, j);
                let mu1_tilde = (sums.s1 - t1) / denom;
                let mu2_tilde = (sums.s2 - t2) / denom;
                let d1 = mu1 - mu1_tilde;
                let d2 = mu2 - mu2_tilde;
                acc += 0.25 * (d2 * d2 / (mu2_tilde * mu2_tilde)
                    - d1 * d1 / (mu1_tilde * mu1_tilde));
            }
            acc / m as f64
        })
        .collect();

    let theta_bc: Vec<f64> = est
        .theta_hat
        .iter()
        .zip(&bias)
        .map(|(t, b)| t - b)
        .collect();

    // Full-set plug-in moments at the corrected parameters.
    let q_bc = fitted_prob_matrix(&theta_bc);
    let mu_bc: Vec<(f64, f64)> = (0..p)
        .into_par_iter()
        .map(|l| {
            let sums = plugin_sums(schedule, &q_bc, p, l);
            (sums.s1 / h_size as f64, sums.s2 / h_size as f64)
        })
        .collect();
    let status: Vec<NodeStatus> = (0..p)
        .map(|l| {
            if theta_bc[l].is_finite() && mu_bc[l].0 > 0.0 && mu_bc[l].1 > 0.0 {
                NodeStatus::Ok
            } else {
                NodeStatus::NonpositiveMu
            }
        })
        .collect();
    let estimate = MomentEstimate {
        mu1_hat: mu_bc.iter().map(|x| x.0).collect(),
        mu2_hat: mu_bc.iter().map(|x| x.1).collect(),
        theta_hat: theta_bc,
        status,
    };
    let variances = plugin_variances(z, schedule, &estimate)?;
    Ok(BiasCorrected {
        bias,
        estimate,
        variances,
    })
}

/// Result of the grid search for the re-jitter rate.
#[derive(Clone, Debug)]
pub struct DeltaSelection {
    pub grid: Vec<f64>,
    pub subset: Vec<usize>,
    /// ν̂†_ℓ(δ) rows, one per grid δ, aligned with `subset`.
    pub nu_dagger_by_delta: Vec<Vec<f64>>,
    /// Valid replicate counts, one row per grid δ, aligned with `subset`.
    pub effective_m: Vec<Vec<usize>>,
    /// `max_{ℓ∈S} |ν̂†_ℓ(δ) − ν̂^bc_ℓ|` per grid δ, skipping nodes where
    /// either side is not finite; NaN when no node is comparable.
    pub max_gap_by_delta: Vec<f64>,
    /// Bias-corrected θ̂^bc for all p nodes.
    pub theta_bc: Vec<f64>,
    /// Plug-in target ν̂^bc for all p nodes.
    pub nu_bc: Vec<f64>,
    pub delta_opt: f64,
}

impl DeltaSelection {
    /// ν̂†(δ_opt), aligned with `subset`.
    pub fn nu_dagger_opt(&self) -> &[f64] {
        let idx = self
            .grid
            .iter()
            .position(|&d| d == self.delta_opt)
            .expect("delta_opt is drawn from the grid");
        &self.nu_dagger_by_delta[idx]
    }
}

/// Argmin over the grid with ties broken toward the smaller δ, considering
/// only candidates with a finite gap. The grid need not be sorted.
fn pick_delta(grid: &[f64], max_gaps: &[f64]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (&delta, &gap) in grid.iter().zip(max_gaps) {
        if !gap.is_finite() {
            continue;
        }
        best = match best {
            None => Some((gap, delta)),
            Some((bg, bd)) if gap < bg || (gap == bg && delta < bd) => Some((gap, delta)),
            other => other,
        };
    }
    best.map(|(_, delta)| delta)
}

/// Grid search for δ with one replicate count for both the bias loop and
/// the bootstrap loop (the usual choice).
pub fn select_delta(
    z: &Graph,
    schedule: &NoiseSchedule,
    grid: &[f64],
    m: usize,
    subset: &[usize],
    seed: u64,
) -> Result<DeltaSelection> {
    select_delta_with(z, schedule, grid, m, m, subset, seed)
}

/// Grid search for δ: bias-correct θ̂ to get the target ν̂^bc, run the
/// bootstrap at every grid δ, and pick the δ whose ν̂† lands closest to the
/// target in the max norm over the subset.
///
/// `m_boot` is the bootstrap replicate count, `m_bias` the leave-one-out
/// round count; the two loops are independent.
pub fn select_delta_with(
    z: &Graph,
    schedule: &NoiseSchedule,
    grid: &[f64],
    m_boot: usize,
    m_bias: usize,
    subset: &[usize],
    seed: u64,
) -> Result<DeltaSelection> {
    let p = z.node_count();
    schedule.check_dim(p)?;
    check_subset(subset, p)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("delta grid must be non-empty".into()));
    }
    for &d in grid {
        if !(d > 0.0 && d < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "grid delta={d} must lie strictly inside (0, 0.5)"
            )));
        }
    }

    let est = estimate_theta(z, schedule)?;
    let bc = bias_corrected_with_estimate(z, schedule, &est, m_bias, seed)?;

    let mut nu_dagger_by_delta = Vec::with_capacity(grid.len());
    let mut effective_m = Vec::with_capacity(grid.len());
    let mut max_gap_by_delta = Vec::with_capacity(grid.len());
    for (d_idx, &delta) in grid.iter().enumerate() {
        let grid_seed = Stream::derive(seed, &[domain::DELTA_GRID, d_idx as u64]).next_u64();
        let cfg = BootstrapConfig::new(delta, m_boot, grid_seed)?;
        let nd = estimate_nu_dagger_at(&est, schedule, &cfg, subset)?;
        let mut gap = f64::NAN;
        for (k, &l) in subset.iter().enumerate() {
            let d = (nd.nu_dagger[k] - bc.variances.nu_hat[l]).abs();
            // NaN-seeded max over the finite gaps: `!(gap >= d)` is true both
            // when gap is still NaN and when d strictly exceeds it.
            if d.is_finite() && !(gap >= d) {
                gap = d;
            }
        }
        nu_dagger_by_delta.push(nd.nu_dagger);
        effective_m.push(nd.effective_m);
        max_gap_by_delta.push(gap);
    }

    let delta_opt = pick_delta(grid, &max_gap_by_delta).ok_or_else(|| {
        Error::InvalidArgument(
            "delta selection has no valid node: every subset node's ν̂† or ν̂^bc is non-finite"
                .into(),
        )
    })?;
    Ok(DeltaSelection {
        grid: grid.to_vec(),
        subset: subset.to_vec(),
        nu_dagger_by_delta,
        effective_m,
        max_gap_by_delta,
        theta_bc: bc.estimate.theta_hat,
        nu_bc: bc.variances.nu_hat,
        delta_opt,
    })
}
