//! `betadp infer`: simultaneous confidence regions and hypothesis tests on a
//! released graph, or on a precomputed `index,theta_hat,nu_hat` fixture.
//!
//! Default mode (`vanishing-gamma`) runs the pipeline bootstrap over a δ
//! grid, picks the δ whose ν̂† best matches the bias-corrected plug-in target,
//! and builds the region from ν̂†(δ_opt). `fixed-gamma` skips the bootstrap
//! and uses the plug-in b̂ scale appropriate when the noise level does not
//! shrink with p.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use betadp::bootstrap::select_delta_with;
use betadp::inference::{
    bh_procedure, coordinate_pvalues, coordinate_pvalues_with_nu, global_maxnorm_test,
    normal_sf, simultaneous_region, PvalueMode, TestResult,
};
use betadp::moments::{estimate_theta, plugin_variances, NodeStatus};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::common::{
    fmt_f64, init_threads, json_float, json_float_vec, load_config, load_graph, numeric,
    resolve_seed, say, usage, CliResult, NoiseArgs, Workspace,
};

pub const DEFAULT_GRID: [f64; 5] = [0.005, 0.01, 0.02, 0.05, 0.1];

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct InferArgs {
    /// Released edge list to infer from (omit when using --fixture).
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub noise: NoiseArgs,

    /// Simultaneous confidence level (default 0.95).
    #[arg(long)]
    pub level: Option<f64>,

    /// Nodes to cover, comma-separated (default: every node with a valid
    /// estimate; explicitly requested invalid nodes are an error).
    #[arg(long, value_delimiter = ',', value_name = "NODES")]
    pub subset: Option<Vec<usize>>,

    /// Bootstrap re-jitter grid, comma-separated (default 0.005,0.01,0.02,0.05,0.1).
    #[arg(long, value_delimiter = ',', value_name = "DELTAS")]
    pub grid: Option<Vec<f64>>,

    /// Bootstrap replicates per grid point (default 500).
    #[arg(long)]
    pub m: Option<usize>,

    /// Leave-one-out rounds for the bias correction (default: same as --m).
    #[arg(long)]
    pub bias_rounds: Option<usize>,

    /// Variance regime: vanishing-gamma (bootstrap, default) or fixed-gamma.
    #[arg(long, value_name = "MODE")]
    pub mode: Option<String>,

    /// Also run Benjamini-Hochberg per-node tests of theta = 0 at this rate.
    #[arg(long, value_name = "Q")]
    pub bh_q: Option<f64>,

    /// Also run the global Monte-Carlo max-norm test of theta_S = null.
    #[arg(long)]
    pub global_null: bool,

    /// Null value broadcast to every tested node (default 0).
    #[arg(long, value_name = "THETA")]
    pub null_theta: Option<f64>,

    /// Monte-Carlo replicates for the global test (default 1000).
    #[arg(long)]
    pub mc_reps: Option<usize>,

    /// Precomputed `index,theta_hat,nu_hat` CSV; bypasses estimation.
    #[arg(long, value_name = "FILE", conflicts_with = "input")]
    pub fixture: Option<PathBuf>,

    /// Underlying node count, required with --fixture.
    #[arg(long)]
    pub p: Option<usize>,

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

impl InferArgs {
    fn merged(mut self) -> CliResult<Self> {
        if let Some(path) = self.config.take() {
            let f: InferArgs = load_config(&path)?;
            self.input = self.input.or(f.input);
            self.noise.fill_from(f.noise);
            self.level = self.level.or(f.level);
            self.subset = self.subset.or(f.subset);
            self.grid = self.grid.or(f.grid);
            self.m = self.m.or(f.m);
            self.bias_rounds = self.bias_rounds.or(f.bias_rounds);
            self.mode = self.mode.or(f.mode);
            self.bh_q = self.bh_q.or(f.bh_q);
            self.global_null = self.global_null || f.global_null;
            self.null_theta = self.null_theta.or(f.null_theta);
            self.mc_reps = self.mc_reps.or(f.mc_reps);
            self.fixture = self.fixture.or(f.fixture);
            self.p = self.p.or(f.p);
            self.seed = self.seed.or(f.seed);
            self.out = self.out.or(f.out);
            self.threads = self.threads.or(f.threads);
        }
        Ok(self)
    }
}

enum Mode {
    VanishingGamma,
    FixedGamma,
}

fn parse_mode(s: Option<&str>) -> CliResult<Mode> {
    match s.unwrap_or("vanishing-gamma") {
        "vanishing-gamma" => Ok(Mode::VanishingGamma),
        "fixed-gamma" => Ok(Mode::FixedGamma),
        other => Err(usage(format!(
            "unknown --mode {other:?}; expected vanishing-gamma or fixed-gamma"
        ))),
    }
}

/// Per-node inputs for region building and testing, plus the diagnostics the
/// path that produced them wants recorded.
struct Prepared {
    p: usize,
    subset: Vec<usize>,
    theta_s: Vec<f64>,
    nu_s: Vec<f64>,
    /// Aligned with `subset`: per-node z statistic/p-value where defined.
    tests_s: Vec<Option<TestResult>>,
    excluded: Vec<usize>,
    explicit_subset: bool,
    nu_source: &'static str,
    delta_opt: Option<f64>,
    grid: Option<Vec<f64>>,
    max_gap_by_delta: Option<Vec<f64>>,
    m: Option<usize>,
    bias_rounds: Option<usize>,
    selection_sec: Option<f64>,
}

fn load_fixture(path: &Path) -> CliResult<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read fixture {}: {e}", path.display())))?;
    let mut subset = Vec::new();
    let mut theta = Vec::new();
    let mut nu = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if idx == 0 && fields.first().map_or(false, |f| f.parse::<usize>().is_err()) {
            continue; // header
        }
        if fields.len() != 3 {
            return Err(usage(format!(
                "fixture {} line {}: expected index,theta_hat,nu_hat",
                path.display(),
                idx + 1
            )));
        }
        let bad = |what: &str| {
            usage(format!(
                "fixture {} line {}: bad {what} {:?}",
                path.display(),
                idx + 1,
                fields.join(",")
            ))
        };
        subset.push(fields[0].parse::<usize>().map_err(|_| bad("index"))?);
        theta.push(fields[1].parse::<f64>().map_err(|_| bad("theta_hat"))?);
        nu.push(fields[2].parse::<f64>().map_err(|_| bad("nu_hat"))?);
    }
    if subset.is_empty() {
        return Err(usage(format!("fixture {} has no rows", path.display())));
    }
    Ok((subset, theta, nu))
}

fn check_subset_ids(subset: &[usize], p: usize) -> CliResult<()> {
    let mut seen = HashSet::new();
    for &l in subset {
        if l >= p {
            return Err(usage(format!("subset node {l} is out of range for p = {p}")));
        }
        if !seen.insert(l) {
            return Err(usage(format!("duplicate node {l} in subset")));
        }
    }
    Ok(())
}

fn prepare_from_fixture(args: &InferArgs) -> CliResult<Prepared> {
    let path = args.fixture.as_ref().expect("caller checked");
    let p = args.p.ok_or_else(|| usage("--fixture requires --p (the underlying node count)"))?;
    let (subset, theta_s, nu_s) = load_fixture(path)?;
    check_subset_ids(&subset, p)?;
    let n_pairs = ((p.saturating_sub(1)) * (p.saturating_sub(2))) as f64;
    let tests_s = theta_s
        .iter()
        .zip(&nu_s)
        .map(|(&t, &v)| {
            if !t.is_finite() || !(v > 0.0) || !v.is_finite() {
                return None;
            }
            let statistic = n_pairs.sqrt() * t.abs() / v.sqrt();
            Some(TestResult {
                statistic,
                pvalue: 2.0 * normal_sf(statistic),
                method: betadp::inference::TestMethod::CoordinateZ,
                m_mc: None,
            })
        })
        .collect();
    Ok(Prepared {
        p,
        subset,
        theta_s,
        nu_s,
        tests_s,
        excluded: Vec::new(),
        explicit_subset: true,
        nu_source: "fixture",
        delta_opt: None,
        grid: None,
        max_gap_by_delta: None,
        m: None,
        bias_rounds: None,
        selection_sec: None,
    })
}

fn prepare_from_graph(args: &InferArgs, seed: u64) -> CliResult<Prepared> {
    let input = args
        .input
        .as_ref()
        .ok_or_else(|| usage("missing --input edge list (or --fixture)"))?;
    let schedule = args
        .noise
        .resolve(true)?
        .expect("resolve(true) returns a schedule or errors");
    let z = load_graph(input)?;
    let p = z.node_count();

    let explicit_subset = args.subset.is_some();
    let mut subset = match &args.subset {
        Some(s) => s.clone(),
        None => (0..p).collect(),
    };
    if subset.is_empty() {
        return Err(usage("--subset must name at least one node"));
    }
    check_subset_ids(&subset, p)?;

    let est = estimate_theta(&z, &schedule)?;
    let invalid: Vec<usize> = subset
        .iter()
        .copied()
        .filter(|&l| est.status[l] != NodeStatus::Ok)
        .collect();
    let mut excluded = Vec::new();
    if !invalid.is_empty() {
        if explicit_subset {
            return Err(numeric(format!(
                "requested nodes {invalid:?} have no valid moment estimate at this noise level"
            )));
        }
        // Default subset: report and work with what remains.
        subset.retain(|&l| est.status[l] == NodeStatus::Ok);
        excluded = invalid;
        if subset.is_empty() {
            return Err(numeric(
                "no node has a valid moment estimate at this noise level".to_string(),
            ));
        }
    }
    let theta_s: Vec<f64> = subset.iter().map(|&l| est.theta_hat[l]).collect();

    match parse_mode(args.mode.as_deref())? {
        Mode::FixedGamma => {
            let t = Instant::now();
            let vb = plugin_variances(&z, &schedule, &est)?;
            let selection_sec = Some(t.elapsed().as_secs_f64());
            // The region half-width is multiplier * sqrt(nu / N) with
            // N = (p-1)(p-2); feeding nu = (p-2) * b_hat makes that equal to
            // the fixed-noise scale multiplier * sqrt(b_hat / (p-1)).
            let nu_s: Vec<f64> =
                subset.iter().map(|&l| (p as f64 - 2.0) * vb.b_hat[l]).collect();
            let tests_all = coordinate_pvalues(&est, &vb, PvalueMode::FixedGamma);
            let tests_s = subset.iter().map(|&l| tests_all[l]).collect();
            Ok(Prepared {
                p,
                subset,
                theta_s,
                nu_s,
                tests_s,
                excluded,
                explicit_subset,
                nu_source: "plugin-fixed-gamma",
                delta_opt: None,
                grid: None,
                max_gap_by_delta: None,
                m: None,
                bias_rounds: None,
                selection_sec,
            })
        }
        Mode::VanishingGamma => {
            let grid = args.grid.clone().unwrap_or_else(|| DEFAULT_GRID.to_vec());
            let m = args.m.unwrap_or(500);
            let bias_rounds = args.bias_rounds.unwrap_or(m);
            let t = Instant::now();
            let sel = select_delta_with(&z, &schedule, &grid, m, bias_rounds, &subset, seed)
                .map_err(|e| {
                    if excluded.is_empty() {
                        crate::common::CliError::from(e)
                    } else {
                        // One invalid node contaminates the bias-corrected
                        // matching target for every node, so exclusion alone
                        // cannot rescue the bootstrap calibration.
                        numeric(format!(
                            "{e}; {} of {p} nodes have invalid moment estimates, which \
                             poisons the bias-corrected target the bootstrap matches against",
                            excluded.len()
                        ))
                    }
                })?;
            let selection_sec = Some(t.elapsed().as_secs_f64());
            let nu_s = sel.nu_dagger_opt().to_vec();
            // Per-node tests studentized by the same bootstrap variance the
            // region uses; nodes outside the subset carry no variance here.
            let mut nu_full = vec![f64::NAN; p];
            for (&l, &v) in subset.iter().zip(&nu_s) {
                nu_full[l] = v;
            }
            let tests_all = coordinate_pvalues_with_nu(&est, &nu_full);
            let tests_s = subset.iter().map(|&l| tests_all[l]).collect();
            Ok(Prepared {
                p,
                subset,
                theta_s,
                nu_s,
                tests_s,
                excluded,
                explicit_subset,
                nu_source: "bootstrap-nu-dagger",
                delta_opt: Some(sel.delta_opt),
                grid: Some(grid),
                max_gap_by_delta: Some(sel.max_gap_by_delta),
                m: Some(m),
                bias_rounds: Some(bias_rounds),
                selection_sec,
            })
        }
    }
}

pub fn run(args: InferArgs) -> CliResult<()> {
    let args = args.merged()?;
    init_threads(args.threads)?;
    let out = args.out.as_ref().ok_or_else(|| usage("missing --out directory"))?;
    let seed = resolve_seed(args.seed);
    let level = args.level.unwrap_or(0.95);

    let start = Instant::now();
    let prep = if args.fixture.is_some() {
        prepare_from_fixture(&args)?
    } else {
        prepare_from_graph(&args, seed)?
    };

    let region = simultaneous_region(&prep.subset, &prep.theta_s, &prep.nu_s, level, prep.p)
        .map_err(|e| {
            if prep.excluded.is_empty() {
                crate::common::CliError::from(e)
            } else {
                numeric(format!(
                    "{e}; {} nodes have invalid moment estimates, which contaminates \
                     every plug-in variance",
                    prep.excluded.len()
                ))
            }
        })?;

    let mut ws = Workspace::create(out)?;
    let mut csv = Vec::new();
    region
        .to_csv(&mut csv)
        .map_err(|e| usage(format!("cannot encode region: {e}")))?;
    ws.write_bytes("region.csv", &csv)?;

    let mut bh_json = Value::Null;
    if let Some(q) = args.bh_q {
        if !(0.0 < q && q < 1.0) {
            return Err(usage(format!("--bh-q must lie in (0, 1), got {q}")));
        }
        let pvals: Vec<f64> = prep
            .tests_s
            .iter()
            .map(|t| t.map_or(f64::NAN, |t| t.pvalue))
            .collect();
        let rejected_pos = bh_procedure(&pvals, q);
        let rejected: Vec<usize> = rejected_pos.iter().map(|&i| prep.subset[i]).collect();
        let mut csv = String::from("index,statistic,pvalue,rejected\n");
        for (i, &l) in prep.subset.iter().enumerate() {
            let (stat, pv) = prep.tests_s[i]
                .map_or((f64::NAN, f64::NAN), |t| (t.statistic, t.pvalue));
            let rej = rejected_pos.binary_search(&i).is_ok();
            csv.push_str(&format!("{l},{},{},{}\n", fmt_f64(stat), fmt_f64(pv), rej));
        }
        ws.write_bytes("pvalues.csv", csv.as_bytes())?;
        bh_json = json!({ "q": q, "rejected": rejected });
    }

    let mut global_json = Value::Null;
    if args.global_null {
        let m_mc = args.mc_reps.unwrap_or(1000);
        let null = vec![args.null_theta.unwrap_or(0.0); prep.subset.len()];
        let test = global_maxnorm_test(&prep.theta_s, &prep.nu_s, prep.p, &null, m_mc, seed)?;
        global_json = json!({
            "statistic": json_float(test.statistic),
            "pvalue": json_float(test.pvalue),
            "method": test.method.to_string(),
            "m_mc": test.m_mc,
            "null_theta": args.null_theta.unwrap_or(0.0),
        });
    }

    let summary = json!({
        "mode": if args.fixture.is_some() { "fixture" } else {
            args.mode.as_deref().unwrap_or("vanishing-gamma")
        },
        "level": level,
        "multiplier": json_float(region.multiplier),
        "p": prep.p,
        "subset_size": prep.subset.len(),
        "explicit_subset": prep.explicit_subset,
        "excluded": prep.excluded,
        "nu_source": prep.nu_source,
        "delta_opt": prep.delta_opt.map_or(Value::Null, json_float),
        "grid": prep.grid.as_deref().map_or(Value::Null, json_float_vec),
        "max_gap_by_delta": prep.max_gap_by_delta.as_deref().map_or(Value::Null, json_float_vec),
        "bootstrap_replicates": prep.m,
        "bias_rounds": prep.bias_rounds,
        "bh": bh_json,
        "global_test": global_json,
        "seed": seed,
    });
    ws.write_json("infer.json", &summary)?;
    ws.write_metrics(&json!({
        "wall_clock_sec": start.elapsed().as_secs_f64(),
        "selection_sec": prep.selection_sec,
        "peak_rss_kb": crate::common::peak_rss_kb(),
    }))?;
    ws.write_manifest("infer", &args, Some(seed))?;

    let delta_note = prep
        .delta_opt
        .map(|d| format!(", delta_opt = {d}"))
        .unwrap_or_default();
    say(&format!(
        "simultaneous {}% region over {} nodes{delta_note}",
        level * 100.0,
        prep.subset.len()
    ));
    Ok(())
}
