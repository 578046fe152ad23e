//! `betadp simulate`: synthetic-data studies. Draws node parameters from a
//! centered normal, samples the graph, jitters it, and either measures
//! estimation error (`--mode error`) or simultaneous-region coverage
//! (`--mode coverage`).
//!
//! Replicates are deterministic given `--seed`: replicate `r` derives its own
//! stream, draws the `p` parameters first, then three sub-seeds (graph,
//! jitter, inference) in that order. The outer loop is sequential so that
//! per-replicate numbers are comparable; parallelism lives inside the
//! estimators.

use std::path::PathBuf;
use std::time::Instant;

use betadp::betamodel::{sample_graph, BetaParams};
use betadp::bootstrap::select_delta_with;
use betadp::inference::simultaneous_region;
use betadp::moments::estimate_theta;
use betadp::privacy::{jitter, privacy_level};
use betadp::rng::{domain, Stream};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::{
    fmt_f64, init_threads, json_float, json_float_vec, load_config, numeric, resolve_seed, say,
    usage, CliResult, NoiseArgs, Workspace,
};

use super::infer::DEFAULT_GRID;

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateArgs {
    /// Study type: error (parameter MSE) or coverage (region coverage).
    #[arg(long, value_name = "MODE")]
    pub mode: Option<String>,

    /// Number of nodes.
    #[arg(long)]
    pub p: Option<usize>,

    /// Number of independent replicates.
    #[arg(long)]
    pub replicates: Option<usize>,

    #[command(flatten)]
    #[serde(flatten)]
    pub noise: NoiseArgs,

    /// Standard deviation of the node parameters (default 0.2; conflicts
    /// with --theta-var).
    #[arg(long, value_name = "SD", conflicts_with = "theta_var")]
    pub theta_std: Option<f64>,

    /// Variance of the node parameters (conflicts with --theta-std).
    #[arg(long, value_name = "VAR")]
    pub theta_var: Option<f64>,

    /// Confidence levels for coverage mode, comma-separated (default 0.95).
    #[arg(long, value_delimiter = ',', value_name = "LEVELS")]
    pub levels: Option<Vec<f64>>,

    /// Bootstrap re-jitter grid for coverage mode.
    #[arg(long, value_delimiter = ',', value_name = "DELTAS")]
    pub grid: Option<Vec<f64>>,

    /// Bootstrap replicates per grid point (default 500).
    #[arg(long)]
    pub m_boot: Option<usize>,

    /// Leave-one-out rounds for the bias correction (default: same as --m-boot).
    #[arg(long)]
    pub m_bias: Option<usize>,

    /// In error mode, also fit the logistic baseline per replicate.
    #[arg(long)]
    pub mle: bool,

    /// RNG seed; drawn from entropy (and recorded) when absent.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads (0 or absent = automatic).
    #[arg(long)]
    pub threads: Option<usize>,

    /// JSON file supplying defaults for any flag not given on the command line.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl SimulateArgs {
    fn merged(mut self) -> CliResult<Self> {
        if let Some(path) = self.config.take() {
            let f: SimulateArgs = load_config(&path)?;
            self.mode = self.mode.or(f.mode);
            self.p = self.p.or(f.p);
            self.replicates = self.replicates.or(f.replicates);
            self.noise.fill_from(f.noise);
            self.theta_std = self.theta_std.or(f.theta_std);
            self.theta_var = self.theta_var.or(f.theta_var);
            self.levels = self.levels.or(f.levels);
            self.grid = self.grid.or(f.grid);
            self.m_boot = self.m_boot.or(f.m_boot);
            self.m_bias = self.m_bias.or(f.m_bias);
            self.mle = self.mle || f.mle;
            self.seed = self.seed.or(f.seed);
            self.out = self.out.or(f.out);
            self.threads = self.threads.or(f.threads);
        }
        Ok(self)
    }

    fn theta_sd(&self) -> CliResult<f64> {
        if self.theta_std.is_some() && self.theta_var.is_some() {
            return Err(usage("give --theta-std or --theta-var, not both"));
        }
        let sd = match (self.theta_std, self.theta_var) {
            (Some(sd), _) => sd,
            (None, Some(v)) if v >= 0.0 => v.sqrt(),
            (None, Some(v)) => return Err(usage(format!("--theta-var must be >= 0, got {v}"))),
            // The node parameters default to the N(0, 0.2^2) draw that the
            // frozen golden error values were generated under.
            (None, None) => 0.2,
        };
        if !(sd.is_finite() && sd >= 0.0) {
            return Err(usage(format!("parameter spread must be finite and >= 0, got {sd}")));
        }
        Ok(sd)
    }
}

fn mean_sq_gap(est: &[f64], truth: &[f64]) -> f64 {
    let s: f64 = est.iter().zip(truth).map(|(&a, &b)| (a - b) * (a - b)).sum();
    s / truth.len() as f64
}

struct Draw {
    theta: Vec<f64>,
    z: betadp::Graph,
    infer_seed: u64,
}

fn draw_replicate(
    r: usize,
    seed: u64,
    p: usize,
    sd: f64,
    schedule: &betadp::NoiseSchedule,
) -> CliResult<Draw> {
    let mut rs = Stream::derive(seed, &[domain::REPLICATE, r as u64]);
    let theta: Vec<f64> = (0..p).map(|_| sd * rs.next_normal()).collect();
    let xseed = rs.next_u64();
    let zseed = rs.next_u64();
    let infer_seed = rs.next_u64();
    let params = BetaParams::new(theta.clone())
        .map_err(|e| numeric(format!("replicate {r}: {e}")))?;
    let x = sample_graph(&params, xseed);
    let z = jitter(&x, schedule, zseed)
        .map_err(|e| numeric(format!("replicate {r}: {e}")))?;
    Ok(Draw { theta, z, infer_seed })
}

fn finite_summary(xs: &[f64]) -> (usize, f64, f64, f64) {
    let mut finite: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    let n = finite.len();
    if n == 0 {
        return (0, f64::NAN, f64::NAN, f64::NAN);
    }
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = finite.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        finite[n / 2]
    } else {
        0.5 * (finite[n / 2 - 1] + finite[n / 2])
    };
    let sd = if n < 2 {
        f64::NAN
    } else {
        (finite.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    (n, mean, median, sd)
}

pub fn run(args: SimulateArgs) -> CliResult<()> {
    let args = args.merged()?;
    init_threads(args.threads)?;
    let out = args.out.as_ref().ok_or_else(|| usage("missing --out directory"))?;
    let p = args.p.ok_or_else(|| usage("missing --p (node count)"))?;
    let reps = args.replicates.ok_or_else(|| usage("missing --replicates"))?;
    if reps == 0 {
        return Err(usage("--replicates must be at least 1"));
    }
    let sd = args.theta_sd()?;
    let schedule = match args.noise.resolve(false)? {
        Some(s) => s,
        None => betadp::NoiseSchedule::zero(),
    };
    let mode = args.mode.as_deref().unwrap_or("error");
    let seed = resolve_seed(args.seed);
    let mut ws = Workspace::create(out)?;
    let level_info = privacy_level(&schedule);

    let start = Instant::now();
    match mode {
        "error" => run_error(&args, &mut ws, p, reps, sd, &schedule, seed)?,
        "coverage" => {
            if args.mle {
                return Err(usage("--mle applies to error mode only"));
            }
            run_coverage(&args, &mut ws, p, reps, sd, &schedule, seed)?
        }
        other => {
            return Err(usage(format!(
                "unknown --mode {other:?}; expected error or coverage"
            )))
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ws.write_metrics(&json!({
        "wall_clock_sec": elapsed,
        "sec_per_replicate": elapsed / reps as f64,
        "peak_rss_kb": crate::common::peak_rss_kb(),
    }))?;
    ws.write_manifest("simulate", &args, Some(seed))?;
    say(&format!(
        "{mode} study: p = {p}, {reps} replicates, pi = {}, done in {elapsed:.1}s",
        level_info.pi
    ));
    Ok(())
}

fn run_error(
    args: &SimulateArgs,
    ws: &mut Workspace,
    p: usize,
    reps: usize,
    sd: f64,
    schedule: &betadp::NoiseSchedule,
    seed: u64,
) -> CliResult<()> {
    let mut l2 = Vec::with_capacity(reps);
    let mut mle_l2: Vec<Option<f64>> = Vec::with_capacity(reps);
    let mut invalid_counts = Vec::with_capacity(reps);
    let mut mle_failures = 0usize;

    let mut csv = String::from(if args.mle {
        "replicate,l2_error,invalid_nodes,mle_l2\n"
    } else {
        "replicate,l2_error,invalid_nodes\n"
    });
    for r in 0..reps {
        let draw = draw_replicate(r, seed, p, sd, schedule)?;
        let est = estimate_theta(&draw.z, schedule)
            .map_err(|e| numeric(format!("replicate {r}: {e}")))?;
        let err = mean_sq_gap(&est.theta_hat, &draw.theta);
        l2.push(err);
        invalid_counts.push(est.invalid_count());
        let fit_err = if args.mle {
            match betadp::betamodel::mle_private_fit(&draw.z, schedule) {
                Ok(fit) => Some(mean_sq_gap(fit.theta(), &draw.theta)),
                Err(_) => {
                    mle_failures += 1;
                    None
                }
            }
        } else {
            None
        };
        mle_l2.push(fit_err);
        if args.mle {
            let mle_field = fit_err.map(fmt_f64).unwrap_or_default();
            csv.push_str(&format!(
                "{r},{},{},{mle_field}\n",
                fmt_f64(err),
                est.invalid_count()
            ));
        } else {
            csv.push_str(&format!("{r},{},{}\n", fmt_f64(err), est.invalid_count()));
        }
    }
    ws.write_bytes("replicates.csv", csv.as_bytes())?;

    let strict_mean = l2.iter().sum::<f64>() / reps as f64;
    let (n_valid, mean_v, median_v, sd_v) = finite_summary(&l2);
    let mle_json = if args.mle {
        let vals: Vec<f64> = mle_l2.iter().filter_map(|&x| x).collect();
        let (n, mean, median, sdev) = finite_summary(&vals);
        json!({
            "n_valid": n,
            "failures": mle_failures,
            "mean_l2": json_float(mean),
            "median_l2": json_float(median),
            "sd_l2": json_float(sdev),
        })
    } else {
        serde_json::Value::Null
    };
    let summary = json!({
        "mode": "error",
        "p": p,
        "replicates": reps,
        "theta_var": sd * sd,
        "pi": json_float(privacy_level(schedule).pi),
        "gamma_min": json_float(schedule.gamma_range().0),
        "mean_l2": json_float(strict_mean),
        "valid": {
            "n": n_valid,
            "mean_l2": json_float(mean_v),
            "median_l2": json_float(median_v),
            "sd_l2": json_float(sd_v),
        },
        "invalid_nodes_total": invalid_counts.iter().sum::<usize>(),
        "mle": mle_json,
        "seed": seed,
    });
    ws.write_json("simulate.json", &summary)
}

fn run_coverage(
    args: &SimulateArgs,
    ws: &mut Workspace,
    p: usize,
    reps: usize,
    sd: f64,
    schedule: &betadp::NoiseSchedule,
    seed: u64,
) -> CliResult<()> {
    let levels = args.levels.clone().unwrap_or_else(|| vec![0.95]);
    for &lv in &levels {
        if !(0.0 < lv && lv < 1.0) {
            return Err(usage(format!("confidence level must be in (0, 1), got {lv}")));
        }
    }
    let grid = args.grid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec());
    let m_boot = args.m_boot.unwrap_or(500);
    let m_bias = args.m_bias.unwrap_or(m_boot);
    let subset: Vec<usize> = (0..p).collect();

    let mut covered = vec![0usize; levels.len()];
    let mut delta_opts = Vec::new();
    let mut dropped: Vec<usize> = Vec::new();
    let mut csv = String::from("replicate,delta_opt");
    for lv in &levels {
        csv.push_str(&format!(",covered_{lv}"));
    }
    csv.push('\n');

    for r in 0..reps {
        // Configuration-level failures (bad parameters, impossible jitter)
        // abort the run; statistical degeneracy of a single replicate —
        // some node's moment estimate landing nonpositive, which poisons the
        // bias-corrected target — drops that replicate with a loud note
        // instead of voiding hours of completed work.
        let draw = draw_replicate(r, seed, p, sd, schedule)?;
        let attempt = (|| -> betadp::Result<(f64, Vec<bool>)> {
            let est = estimate_theta(&draw.z, schedule)?;
            let sel = select_delta_with(
                &draw.z,
                schedule,
                &grid,
                m_boot,
                m_bias,
                &subset,
                draw.infer_seed,
            )?;
            let theta_s: Vec<f64> = subset.iter().map(|&l| est.theta_hat[l]).collect();
            let nu_s = sel.nu_dagger_opt();
            let mut hits = Vec::with_capacity(levels.len());
            for &lv in &levels {
                let region = simultaneous_region(&subset, &theta_s, nu_s, lv, p)?;
                hits.push(region.contains(&draw.theta));
            }
            Ok((sel.delta_opt, hits))
        })();
        match attempt {
            Ok((delta_opt, hits)) => {
                csv.push_str(&format!("{r},{}", fmt_f64(delta_opt)));
                for (k, &hit) in hits.iter().enumerate() {
                    if hit {
                        covered[k] += 1;
                    }
                    csv.push_str(if hit { ",true" } else { ",false" });
                }
                csv.push('\n');
                delta_opts.push(delta_opt);
            }
            Err(e) => {
                eprintln!("replicate {r} dropped: {e}");
                csv.push_str(&format!("{r},NaN{}\n", ",".repeat(levels.len())));
                dropped.push(r);
            }
        }
    }
    ws.write_bytes("replicates.csv", csv.as_bytes())?;

    let completed = reps - dropped.len();
    if completed == 0 {
        return Err(numeric(
            "every coverage replicate failed; the configuration is too noisy for this sample size"
                .to_string(),
        ));
    }
    let coverage: Vec<serde_json::Value> = levels
        .iter()
        .zip(&covered)
        .map(|(&lv, &c)| {
            json!({ "level": lv, "rate": c as f64 / completed as f64, "hits": c })
        })
        .collect();
    let summary = json!({
        "mode": "coverage",
        "p": p,
        "replicates": reps,
        "replicates_completed": completed,
        "replicates_dropped": dropped,
        "theta_var": sd * sd,
        "pi": json_float(privacy_level(schedule).pi),
        "gamma_min": json_float(schedule.gamma_range().0),
        "grid": json_float_vec(&grid),
        "m_boot": m_boot,
        "m_bias": m_bias,
        "coverage": coverage,
        "mean_delta_opt": json_float(
            delta_opts.iter().sum::<f64>() / delta_opts.len() as f64
        ),
        "seed": seed,
    });
    ws.write_json("simulate.json", &summary)
}
