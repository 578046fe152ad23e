//! `betadp estimate`: moment-based node-parameter estimates from a released
//! graph, with optional plug-in variances and a logistic-fit baseline.

use std::path::PathBuf;
use std::time::Instant;

use betadp::betamodel::mle_private_fit;
use betadp::moments::{estimate_theta, plugin_variances, NodeStatus};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::{
    init_threads, json_float, load_config, load_graph, numeric, say, usage, CliResult, NoiseArgs,
    Workspace,
};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateArgs {
    /// Released edge list to estimate from.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub noise: NoiseArgs,

    /// Also compute per-node plug-in variances (variances.csv).
    #[arg(long)]
    pub variances: bool,

    /// Also fit the logistic baseline on noise-corrected degrees (mle.csv).
    #[arg(long)]
    pub mle: bool,

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

impl EstimateArgs {
    fn merged(mut self) -> CliResult<Self> {
        if let Some(path) = self.config.take() {
            let fallback: EstimateArgs = load_config(&path)?;
            self.input = self.input.or(fallback.input);
            self.noise.fill_from(fallback.noise);
            self.variances = self.variances || fallback.variances;
            self.mle = self.mle || fallback.mle;
            self.out = self.out.or(fallback.out);
            self.threads = self.threads.or(fallback.threads);
        }
        Ok(self)
    }
}

pub fn run(args: EstimateArgs) -> CliResult<()> {
    let args = args.merged()?;
    init_threads(args.threads)?;
    let input = args.input.as_ref().ok_or_else(|| usage("missing --input edge list"))?;
    let out = args.out.as_ref().ok_or_else(|| usage("missing --out directory"))?;
    let schedule = args
        .noise
        .resolve(true)?
        .expect("resolve(true) returns a schedule or errors");

    let z = load_graph(input)?;
    let p = z.node_count();

    let start = Instant::now();
    let est = estimate_theta(&z, &schedule)?;
    let moment_sec = start.elapsed().as_secs_f64();

    // A handful of flagged nodes is expected under heavy noise and is
    // reported, not fatal; a majority means the released data carries too
    // little signal for the estimates to be usable at all.
    let invalid: Vec<usize> = est
        .status
        .iter()
        .enumerate()
        .filter(|(_, s)| **s != NodeStatus::Ok)
        .map(|(i, _)| i)
        .collect();
    if 2 * invalid.len() > p {
        return Err(numeric(format!(
            "estimation failed: {} of {p} nodes have nonpositive moment estimates; \
             the noise level is too high for this sample",
            invalid.len()
        )));
    }

    let mut ws = Workspace::create(out)?;
    let mut csv = Vec::new();
    est.save_csv(&mut csv)
        .map_err(|e| usage(format!("cannot encode estimates: {e}")))?;
    ws.write_bytes("estimates.csv", &csv)?;

    let mut variance_sec = None;
    if args.variances {
        let t = Instant::now();
        let vb = plugin_variances(&z, &schedule, &est)?;
        variance_sec = Some(t.elapsed().as_secs_f64());
        let mut csv = Vec::new();
        vb.save_csv(&mut csv)
            .map_err(|e| usage(format!("cannot encode variances: {e}")))?;
        ws.write_bytes("variances.csv", &csv)?;
    }

    let mut mle_sec = None;
    if args.mle {
        let t = Instant::now();
        let fit = mle_private_fit(&z, &schedule)?;
        mle_sec = Some(t.elapsed().as_secs_f64());
        let mut csv = Vec::new();
        fit.save_csv(&mut csv)
            .map_err(|e| usage(format!("cannot encode logistic fit: {e}")))?;
        ws.write_bytes("mle.csv", &csv)?;
    }

    let (gmin, gmax) = schedule.gamma_range();
    let summary = json!({
        "p": p,
        "invalid_count": invalid.len(),
        "invalid_nodes": invalid,
        "gamma_min": json_float(gmin),
        "gamma_max": json_float(gmax),
        "variances": args.variances,
        "mle": args.mle,
    });
    ws.write_json("estimate.json", &summary)?;
    ws.write_metrics(&json!({
        "moment_sec": moment_sec,
        "variance_sec": variance_sec,
        "mle_sec": mle_sec,
        "peak_rss_kb": crate::common::peak_rss_kb(),
    }))?;
    ws.write_manifest("estimate", &args, None)?;
    say(&format!(
        "estimated {p} node parameters ({} flagged invalid)",
        invalid.len()
    ));
    Ok(())
}
