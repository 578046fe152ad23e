//! `betadp release`: apply pair-level jitter to an edge list and write the
//! released graph together with its privacy summary.

use std::path::PathBuf;
use std::time::Instant;

use betadp::privacy::{jitter, privacy_level, regime_diagnostic};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::common::{
    init_threads, json_float, load_config, load_graph, resolve_seed, say, usage, CliResult,
    NoiseArgs, Workspace,
};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ReleaseArgs {
    /// Input edge list: `p` on the first line, then `i j` pairs.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub noise: NoiseArgs,

    /// RNG seed; drawn from entropy (and recorded) when absent.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory for release.edges, release.json, manifest.json.
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

impl ReleaseArgs {
    fn merged(mut self) -> CliResult<Self> {
        if let Some(path) = self.config.take() {
            let fallback: ReleaseArgs = load_config(&path)?;
            self.input = self.input.or(fallback.input);
            self.noise.fill_from(fallback.noise);
            self.seed = self.seed.or(fallback.seed);
            self.out = self.out.or(fallback.out);
            self.threads = self.threads.or(fallback.threads);
        }
        Ok(self)
    }
}

pub fn run(args: ReleaseArgs) -> CliResult<()> {
    let args = args.merged()?;
    init_threads(args.threads)?;
    let input = args.input.as_ref().ok_or_else(|| usage("missing --input edge list"))?;
    let out = args.out.as_ref().ok_or_else(|| usage("missing --out directory"))?;
    let schedule = args
        .noise
        .resolve(true)?
        .expect("resolve(true) returns a schedule or errors");
    let seed = resolve_seed(args.seed);

    let start = Instant::now();
    let x = load_graph(input)?;
    let z = jitter(&x, &schedule, seed).map_err(crate::common::CliError::from)?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut ws = Workspace::create(out)?;
    let mut edges = Vec::new();
    z.save_edge_list(&mut edges)
        .map_err(|e| usage(format!("cannot encode released edge list: {e}")))?;
    ws.write_bytes("release.edges", &edges)?;

    let level = privacy_level(&schedule);
    // The diagnostic is driven by the least-private pair: the largest gamma
    // is where the estimator's noise-regime question is most optimistic, so
    // report the conservative end (smallest gamma) instead.
    let diag = regime_diagnostic(z.node_count(), level.gamma_min).ok();
    let summary = json!({
        "p": z.node_count(),
        "input_edges": x.edge_count(),
        "released_edges": z.edge_count(),
        "pi": json_float(level.pi),
        "gamma_min": json_float(level.gamma_min),
        "gamma_max": json_float(level.gamma_max),
        "seed": seed,
        "regime": diag.map(|d| json!({
            "label": d.label.to_string(),
            "gamma": json_float(d.gamma),
            "c1": json_float(d.c1),
            "c2": json_float(d.c2),
            "kappa": d.kappa,
        })),
    });
    ws.write_json("release.json", &summary)?;
    ws.write_metrics(&json!({
        "wall_clock_sec": elapsed,
        "peak_rss_kb": crate::common::peak_rss_kb(),
    }))?;
    ws.write_manifest("release", &args, Some(seed))?;
    say(&format!(
        "released {} nodes, {} edges (input had {}); pi = {}",
        z.node_count(),
        z.edge_count(),
        x.edge_count(),
        level.pi
    ));
    Ok(())
}
