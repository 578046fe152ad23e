//! Shared plumbing for the `betadp` subcommands: error-to-exit-code mapping,
//! output workspace with a hashed artifact manifest, noise-schedule resolution,
//! and small JSON helpers.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufReader, Write as _};
use std::path::{Path, PathBuf};

use betadp::graph::Graph;
use betadp::privacy::NoiseSchedule;
use betadp::rng::Stream;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// CLI failure carrying the process exit code.
///
/// `Usage` (exit 2) covers bad invocations: unreadable inputs, malformed
/// files, contradictory flags. `Numeric` (exit 1) covers well-formed runs
/// whose computation failed: too much noise, no valid node, degenerate fits.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Numeric(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CliError {}

impl From<betadp::Error> for CliError {
    fn from(err: betadp::Error) -> Self {
        match &err {
            betadp::Error::Io(_) | betadp::Error::Parse { .. } => {
                CliError::Usage(err.to_string())
            }
            _ => CliError::Numeric(err.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn numeric(msg: impl Into<String>) -> CliError {
    CliError::Numeric(msg.into())
}

/// Output directory handle that records a SHA-256 digest of every data
/// artifact it writes. `metrics.json` is deliberately written *outside* the
/// digest map: it holds wall-clock and memory readings that legitimately vary
/// between runs, while everything listed in the manifest must be byte-stable
/// for a fixed seed regardless of thread count.
pub struct Workspace {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Workspace {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Workspace { dir: dir.to_path_buf(), hashes: BTreeMap::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write a tracked artifact and record its digest for the manifest.
    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(name);
        fs::write(&path, bytes)
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
        self.hashes.insert(name.to_string(), hex_digest(bytes));
        Ok(())
    }

    /// Serialize a JSON value with a trailing newline and track it.
    pub fn write_json(&mut self, name: &str, value: &Value) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| numeric(format!("cannot serialize {name}: {e}")))?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Write the volatile metrics file. Not hashed, not listed in the
    /// manifest: timings and memory change run to run by design.
    pub fn write_metrics(&self, value: &Value) -> CliResult<()> {
        let path = self.path("metrics.json");
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| numeric(format!("cannot serialize metrics: {e}")))?;
        bytes.push(b'\n');
        fs::write(&path, bytes)
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
    }

    /// Write `manifest.json`: the subcommand, its fully-resolved configuration,
    /// the seed actually used, and the digest of every tracked artifact.
    pub fn write_manifest(
        &self,
        command: &str,
        config: &impl Serialize,
        seed: Option<u64>,
    ) -> CliResult<()> {
        let config_value = serde_json::to_value(config)
            .map_err(|e| numeric(format!("cannot serialize config: {e}")))?;
        let manifest = json!({
            "command": command,
            "config": config_value,
            "seed": seed,
            "artifacts": self.hashes,
        });
        let path = self.path("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| numeric(format!("cannot serialize manifest: {e}")))?;
        bytes.push(b'\n');
        fs::write(&path, bytes)
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Resolve the run seed: the flag wins; otherwise draw one from OS entropy so
/// that the manifest can still record the value that was actually used.
pub fn resolve_seed(flag: Option<u64>) -> u64 {
    match flag {
        Some(s) => s,
        None => {
            // Entropy fallback without pulling in a dependency: hash the
            // current time and PID through the library's stream derivation.
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0);
            let pid = std::process::id() as u64;
            Stream::derive(now ^ pid.rotate_left(32), &[u64::from_le_bytes(*b"seedinit")])
                .next_u64()
        }
    }
}

/// Configure the global rayon pool. `0` (or absence) keeps rayon's default.
pub fn init_threads(threads: Option<usize>) -> CliResult<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("cannot configure {n} worker threads: {e}")))
}

/// Peak resident set size in kilobytes, read from the kernel's high-water
/// mark. `None` on platforms without /proc.
pub fn peak_rss_kb() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            return rest.trim().trim_end_matches(" kB").trim().parse().ok();
        }
    }
    None
}

pub fn load_graph(path: &Path) -> CliResult<Graph> {
    let file = fs::File::open(path)
        .map_err(|e| usage(format!("cannot open edge list {}: {e}", path.display())))?;
    Graph::load_edge_list(BufReader::new(file))
        .map_err(|e| usage(format!("bad edge list {}: {e}", path.display())))
}

/// Noise source flags shared by every subcommand that consumes a jittered
/// graph. Exactly one of the three sources must be given (unless the caller
/// treats noise as optional, e.g. `mle` on raw data).
#[derive(Debug, Clone, Default, clap::Args, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NoiseArgs {
    /// Noise schedule CSV: a single `alpha,beta` line for a constant
    /// schedule, or `i,j,alpha,beta` rows covering every unordered pair.
    #[arg(long, value_name = "FILE")]
    pub schedule: Option<PathBuf>,

    /// Constant forced-edge probability (requires --beta).
    #[arg(long, value_name = "PROB")]
    pub alpha: Option<f64>,

    /// Constant forced-non-edge probability (requires --alpha).
    #[arg(long, value_name = "PROB")]
    pub beta: Option<f64>,

    /// Choose the symmetric schedule alpha = beta = 1/(1+e^PI) that attains
    /// the requested privacy level PI. Conflicts with the other sources.
    #[arg(long, value_name = "PI")]
    pub target_pi: Option<f64>,
}

impl NoiseArgs {
    pub fn fill_from(&mut self, other: NoiseArgs) {
        if self.schedule.is_none() {
            self.schedule = other.schedule;
        }
        if self.alpha.is_none() {
            self.alpha = other.alpha;
        }
        if self.beta.is_none() {
            self.beta = other.beta;
        }
        if self.target_pi.is_none() {
            self.target_pi = other.target_pi;
        }
    }

    /// Build the schedule, or `Ok(None)` when no source was given and the
    /// caller allows that. Conflicting or incomplete sources are usage errors
    /// (they can arise from config-file merging even though the flag parser
    /// already rejects conflicting command lines).
    pub fn resolve(&self, required: bool) -> CliResult<Option<NoiseSchedule>> {
        let has_const = self.alpha.is_some() || self.beta.is_some();
        if has_const && (self.alpha.is_none() || self.beta.is_none()) {
            return Err(usage("--alpha and --beta must be given together"));
        }
        let sources =
            self.schedule.is_some() as u8 + has_const as u8 + self.target_pi.is_some() as u8;
        match sources {
            0 if required => {
                return Err(usage(
                    "no noise schedule: provide --schedule FILE, --alpha/--beta, or --target-pi",
                ))
            }
            0 => return Ok(None),
            1 => {}
            _ => {
                return Err(usage(
                    "conflicting noise sources: choose one of --schedule, --alpha/--beta, --target-pi",
                ))
            }
        }
        if let Some(path) = &self.schedule {
            let file = fs::File::open(path)
                .map_err(|e| usage(format!("cannot open schedule {}: {e}", path.display())))?;
            let sched = NoiseSchedule::load_csv(BufReader::new(file))
                .map_err(|e| usage(format!("bad schedule {}: {e}", path.display())))?;
            return Ok(Some(sched));
        }
        if let (Some(a), Some(b)) = (self.alpha, self.beta) {
            let sched = NoiseSchedule::constant(a, b)
                .map_err(|e| usage(format!("invalid noise rates: {e}")))?;
            return Ok(Some(sched));
        }
        let pi = self.target_pi.expect("source counting guarantees target_pi");
        if !pi.is_finite() || pi < 0.0 {
            return Err(usage(format!(
                "--target-pi must be a nonnegative finite number, got {pi}"
            )));
        }
        let rate = 1.0 / (1.0 + pi.exp());
        let sched = NoiseSchedule::constant(rate, rate)
            .map_err(|e| numeric(format!("cannot build schedule for pi={pi}: {e}")))?;
        Ok(Some(sched))
    }
}

/// Read a JSON config file used as a fallback for flags the user did not set.
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("bad config {}: {e}", path.display())))
}

/// JSON cannot hold non-finite floats; encode them as strings so the files
/// stay loadable while still recording what happened.
pub fn json_float(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// Render a float array, tolerating non-finite entries.
pub fn json_float_vec(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| json_float(x)).collect())
}

/// Stable float formatting for CSV artifacts: shortest representation that
/// round-trips, matching the library's own writers.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Write stdout without panicking on a closed pipe.
pub fn say(msg: &str) {
    let _ = writeln!(std::io::stdout(), "{msg}");
}
