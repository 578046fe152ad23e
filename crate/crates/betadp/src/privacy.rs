//! The edge-jittering release mechanism and its privacy accounting.
//!
//! Each unordered node pair of the input graph is perturbed independently:
//! with probability `alpha` the released pair is forced to an edge, with
//! probability `beta` forced to a non-edge, and otherwise the original value
//! is copied. The released graph satisfies edge differential privacy at
//! level `π = max over pairs of log max{α/(1−β), β/(1−α), (1−α)/β, (1−β)/α}`,
//! which [`privacy_level`] evaluates in closed form.
//!
//! `γ = 1 − α − β` is the fraction of signal surviving the noise; all
//! downstream estimators consume it through the schedule, and
//! [`regime_diagnostic`] reports where a given `γ` sits relative to the
//! sample-size thresholds that govern estimator behaviour.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{domain, pair_uniform};

/// Per-pair jitter probabilities `(alpha, beta)`.
///
/// `Constant` schedules apply one `(alpha, beta)` to every pair and unlock
/// the fast estimation paths; `PerPair` schedules store a full
/// upper-triangular table.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseSchedule {
    Constant { alpha: f64, beta: f64 },
    PerPair(PairTable),
}

/// Upper-triangular `(alpha, beta)` table for a per-pair schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTable {
    p: usize,
    /// `(alpha, beta)` for pairs (0,1), (0,2), …, (p-2,p-1) in row order.
    entries: Vec<(f64, f64)>,
}

impl PairTable {
    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.p);
        i * self.p - i * (i + 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> (f64, f64) {
        self.entries[self.index(i, j)]
    }

    pub fn node_count(&self) -> usize {
        self.p
    }
}

/// A single `(alpha, beta)` is admissible when both are probabilities and
/// some signal survives (`alpha + beta < 1`), or at the one fully private
/// point `alpha = beta = 1/2` where the output ignores the input entirely.
fn check_rates(alpha: f64, beta: f64, at: impl fmt::Display) -> Result<()> {
    let ok_range = (0.0..=1.0).contains(&alpha) && (0.0..=1.0).contains(&beta);
    let ok_mass = alpha + beta < 1.0 || (alpha == 0.5 && beta == 0.5);
    if ok_range && ok_mass {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "inadmissible jitter rates alpha={alpha}, beta={beta} {at}: need alpha, beta in [0,1] \
             with alpha + beta < 1 (or exactly alpha = beta = 1/2)"
        )))
    }
}

impl NoiseSchedule {
    /// Constant schedule applying `(alpha, beta)` to every pair.
    pub fn constant(alpha: f64, beta: f64) -> Result<NoiseSchedule> {
        check_rates(alpha, beta, "")?;
        Ok(NoiseSchedule::Constant { alpha, beta })
    }

    /// The fully private schedule `alpha = beta = 1/2`: every released pair
    /// is a fair coin regardless of the input.
    pub fn max_privacy() -> NoiseSchedule {
        NoiseSchedule::Constant { alpha: 0.5, beta: 0.5 }
    }

    /// The identity schedule `alpha = beta = 0` (release equals input).
    pub fn zero() -> NoiseSchedule {
        NoiseSchedule::Constant { alpha: 0.0, beta: 0.0 }
    }

    /// Per-pair schedule from `(i, j, alpha, beta)` entries. Every pair of
    /// `{0, …, p-1}` must be covered exactly once (reversed indices and
    /// consistent duplicates are tolerated), with `p` inferred from the
    /// largest index seen.
    pub fn per_pair<I>(entries: I) -> Result<NoiseSchedule>
    where
        I: IntoIterator<Item = (usize, usize, f64, f64)>,
    {
        let raw: Vec<_> = entries.into_iter().collect();
        let p = raw
            .iter()
            .map(|&(i, j, _, _)| i.max(j) + 1)
            .max()
            .unwrap_or(0);
        if p < 2 {
            return Err(Error::InvalidArgument(
                "per-pair schedule needs at least one pair".into(),
            ));
        }
        let mut table = PairTable {
            p,
            entries: vec![(f64::NAN, f64::NAN); p * (p - 1) / 2],
        };
        for (i, j, alpha, beta) in raw {
            if i == j {
                return Err(Error::InvalidArgument(format!(
                    "schedule entry for self-pair ({i}, {j})"
                )));
            }
            check_rates(alpha, beta, format_args!("for pair ({i}, {j})"))?;
            let (a, b) = (i.min(j), i.max(j));
            let idx = table.index(a, b);
            let old = table.entries[idx];
            if !old.0.is_nan() && old != (alpha, beta) {
                return Err(Error::InvalidArgument(format!(
                    "conflicting schedule entries for pair ({a}, {b})"
                )));
            }
            table.entries[idx] = (alpha, beta);
        }
        if let Some(k) = table.entries.iter().position(|e| e.0.is_nan()) {
            // Invert the row-order index to name the first uncovered pair.
            let (mut i, mut k) = (0, k);
            while k >= table.p - i - 1 {
                k -= table.p - i - 1;
                i += 1;
            }
            return Err(Error::InvalidArgument(format!(
                "per-pair schedule on {p} nodes is missing pair ({i}, {})",
                i + k + 1
            )));
        }
        Ok(NoiseSchedule::PerPair(table))
    }

    /// Jitter rates for the pair `{i, j}`.
    #[inline]
    pub fn rates(&self, i: usize, j: usize) -> (f64, f64) {
        match self {
            NoiseSchedule::Constant { alpha, beta } => (*alpha, *beta),
            NoiseSchedule::PerPair(t) => t.get(i.min(j), i.max(j)),
        }
    }

    /// Surviving-signal fraction `γ = 1 − α − β` for the pair `{i, j}`.
    #[inline]
    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        let (a, b) = self.rates(i, j);
        1.0 - a - b
    }

    /// `(alpha, beta)` if the schedule is constant.
    pub fn as_constant(&self) -> Option<(f64, f64)> {
        match self {
            NoiseSchedule::Constant { alpha, beta } => Some((*alpha, *beta)),
            NoiseSchedule::PerPair(_) => None,
        }
    }

    /// Smallest and largest `γ` over pairs.
    pub fn gamma_range(&self) -> (f64, f64) {
        match self {
            NoiseSchedule::Constant { alpha, beta } => {
                let g = 1.0 - alpha - beta;
                (g, g)
            }
            NoiseSchedule::PerPair(t) => t.entries.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &(a, b)| {
                    let g = 1.0 - a - b;
                    (lo.min(g), hi.max(g))
                },
            ),
        }
    }

    /// Check the schedule covers graphs on `p` nodes.
    pub fn check_dim(&self, p: usize) -> Result<()> {
        match self {
            NoiseSchedule::Constant { .. } => Ok(()),
            NoiseSchedule::PerPair(t) if t.p == p => Ok(()),
            NoiseSchedule::PerPair(t) => Err(Error::DimensionMismatch(format!(
                "per-pair schedule covers {} nodes, graph has {p}",
                t.p
            ))),
        }
    }

    /// The schedule describing the composition of this jitter with a further
    /// symmetric re-jitter at rate `delta`: each rate becomes
    /// `delta + rate · (1 − 2 delta)`.
    pub fn rejittered(&self, delta: f64) -> Result<NoiseSchedule> {
        if !(0.0..0.5).contains(&delta) {
            return Err(Error::InvalidArgument(format!(
                "re-jitter rate delta={delta} must lie in [0, 0.5)"
            )));
        }
        let shift = |r: f64| delta + r * (1.0 - 2.0 * delta);
        Ok(match self {
            NoiseSchedule::Constant { alpha, beta } => NoiseSchedule::Constant {
                alpha: shift(*alpha),
                beta: shift(*beta),
            },
            NoiseSchedule::PerPair(t) => NoiseSchedule::PerPair(PairTable {
                p: t.p,
                entries: t
                    .entries
                    .iter()
                    .map(|&(a, b)| (shift(a), shift(b)))
                    .collect(),
            }),
        })
    }

    /// Parse the schedule CSV: one `alpha,beta` line for a constant
    /// schedule, or `i,j,alpha,beta` lines covering every pair.
    pub fn load_csv<R: BufRead>(reader: R) -> Result<NoiseSchedule> {
        let mut constant: Option<(f64, f64)> = None;
        let mut pairs: Vec<(usize, usize, f64, f64)> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse_f = |t: &str| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad rate {t:?}"),
                })
            };
            let parse_i = |t: &str| {
                t.parse::<usize>().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad node index {t:?}"),
                })
            };
            match fields.as_slice() {
                [a, b] => {
                    if constant.is_some() || !pairs.is_empty() {
                        return Err(Error::Parse {
                            line: lineno,
                            message: "constant schedule must be a single `alpha,beta` line".into(),
                        });
                    }
                    constant = Some((parse_f(a)?, parse_f(b)?));
                }
                [i, j, a, b] => {
                    if constant.is_some() {
                        return Err(Error::Parse {
                            line: lineno,
                            message: "cannot mix `alpha,beta` and `i,j,alpha,beta` lines".into(),
                        });
                    }
                    pairs.push((parse_i(i)?, parse_i(j)?, parse_f(a)?, parse_f(b)?));
                }
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected `alpha,beta` or `i,j,alpha,beta`, got {line:?}"),
                    })
                }
            }
        }
        match constant {
            Some((a, b)) => NoiseSchedule::constant(a, b),
            None if pairs.is_empty() => Err(Error::Parse {
                line: 1,
                message: "empty schedule file".into(),
            }),
            None => NoiseSchedule::per_pair(pairs),
        }
    }

    /// Write the schedule in the form `load_csv` reads.
    pub fn save_csv<W: Write>(&self, writer: &mut W) -> std::io::Result<()> {
        match self {
            NoiseSchedule::Constant { alpha, beta } => writeln!(writer, "{alpha:?},{beta:?}"),
            NoiseSchedule::PerPair(t) => {
                for i in 0..t.p {
                    for j in (i + 1)..t.p {
                        let (a, b) = t.get(i, j);
                        writeln!(writer, "{i},{j},{a:?},{b:?}")?;
                    }
                }
                Ok(())
            }
        }
    }
}

/// Closed-form privacy accounting for a schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyLevel {
    /// Edge differential privacy level; `+∞` when some pair leaks an edge
    /// state deterministically, `0` at maximum privacy.
    pub pi: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

fn pair_pi(alpha: f64, beta: f64) -> f64 {
    if alpha == 0.0 || beta == 0.0 || alpha == 1.0 || beta == 1.0 {
        return f64::INFINITY;
    }
    let ratios = [
        alpha / (1.0 - beta),
        beta / (1.0 - alpha),
        (1.0 - alpha) / beta,
        (1.0 - beta) / alpha,
    ];
    ratios.into_iter().fold(f64::MIN, f64::max).ln()
}

/// The edge privacy level `π` of the jitter mechanism under `schedule`,
/// together with the range of surviving signal `γ`.
pub fn privacy_level(schedule: &NoiseSchedule) -> PrivacyLevel {
    let pi = match schedule {
        NoiseSchedule::Constant { alpha, beta } => pair_pi(*alpha, *beta),
        NoiseSchedule::PerPair(t) => t
            .entries
            .iter()
            .map(|&(a, b)| pair_pi(a, b))
            .fold(f64::MIN, f64::max),
    };
    let (gamma_min, gamma_max) = schedule.gamma_range();
    PrivacyLevel {
        pi,
        gamma_min,
        gamma_max,
    }
}

/// Release a jittered copy of `x` under `schedule`.
///
/// Each unordered pair draws one uniform from its own counter-based stream:
/// below `alpha` the pair is forced to an edge, below `alpha + beta` forced
/// to a non-edge, and otherwise copied from `x`. Output is identical for any
/// thread count and any pair evaluation order.
pub fn jitter(x: &Graph, schedule: &NoiseSchedule, seed: u64) -> Result<Graph> {
    schedule.check_dim(x.node_count())?;
    Ok(Graph::from_pair_fn(x.node_count(), |i, j| {
        let (alpha, beta) = schedule.rates(i, j);
        let u = pair_uniform(seed, domain::JITTER, i, j);
        if u < alpha {
            true
        } else if u < alpha + beta {
            false
        } else {
            x.has_edge(i, j)
        }
    }))
}

/// Multiplicative slack used to turn the asymptotic thresholds into
/// finite-sample bands.
pub const REGIME_KAPPA: f64 = 2.0;

/// Position of a schedule's `γ` relative to the estimator's sample-size
/// thresholds. Advisory only; nothing downstream gates on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// `γ` well above `p^{-1/4}`: plug-in variance `ν̂` is the right scale.
    PhaseA,
    /// `γ` within a factor `κ` of `p^{-1/4}`: boundary behaviour.
    Boundary,
    /// `γ` below the boundary band but safely above the consistency
    /// threshold `p^{-1/3} (log p)^{1/6}`.
    PhaseC,
    /// `γ` at or below the consistency threshold (up to `κ`): estimation is
    /// not expected to concentrate.
    ConsistencyRisk,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::PhaseA => "phase-a",
            Regime::Boundary => "phase-b/boundary",
            Regime::PhaseC => "phase-c",
            Regime::ConsistencyRisk => "consistency-risk",
        })
    }
}

/// Regime label plus the thresholds it was judged against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeDiagnostic {
    pub label: Regime,
    pub gamma: f64,
    /// `p^{-1/4}`, the variance phase-transition scale.
    pub c1: f64,
    /// `p^{-1/3} (log p)^{1/6}`, the consistency scale.
    pub c2: f64,
    pub kappa: f64,
}

/// Classify `gamma` against the thresholds `c1 = p^{-1/4}` and
/// `c2 = p^{-1/3} (log p)^{1/6}`, with a multiplicative band `κ = 2`:
/// above `κ·c1` is phase-a, within the band around `c1` is the boundary,
/// at or below `c2/κ` is consistency-risk, and in between is phase-c.
pub fn regime_diagnostic(p: usize, gamma: f64) -> Result<RegimeDiagnostic> {
    if p < 3 {
        return Err(Error::InvalidArgument(format!(
            "regime diagnostic needs p >= 3, got {p}"
        )));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "regime diagnostic needs 0 < gamma <= 1, got {gamma}"
        )));
    }
    let pf = p as f64;
    let c1 = pf.powf(-0.25);
    let c2 = pf.powf(-1.0 / 3.0) * pf.ln().powf(1.0 / 6.0);
    let kappa = REGIME_KAPPA;
    let label = if gamma > kappa * c1 {
        Regime::PhaseA
    } else if gamma >= c1 / kappa {
        Regime::Boundary
    } else if gamma > c2 / kappa {
        Regime::PhaseC
    } else {
        Regime::ConsistencyRisk
    };
    Ok(RegimeDiagnostic {
        label,
        gamma,
        c1,
        c2,
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOG9: f64 = 2.197224577336220; // ln 9, the level at alpha = beta = 0.1

    #[test]
    fn constant_schedule_validation() {
        assert!(NoiseSchedule::constant(0.3, 0.2).is_ok());
        assert!(NoiseSchedule::constant(0.0, 0.0).is_ok());
        assert!(NoiseSchedule::constant(0.6, 0.4).is_err());
        assert!(NoiseSchedule::constant(-0.1, 0.2).is_err());
        assert!(NoiseSchedule::constant(0.5, 0.5).is_ok(), "max privacy is explicit-legal");
        assert!(NoiseSchedule::constant(0.4, 0.6).is_err());
    }

    #[test]
    fn privacy_level_matches_closed_form() {
        let lvl = privacy_level(&NoiseSchedule::constant(0.1, 0.1).unwrap());
        assert!((lvl.pi - LOG9).abs() < 1e-12, "pi {}", lvl.pi);
        assert!((lvl.gamma_min - 0.8).abs() < 1e-15);

        // Asymmetric rates: max ratio is (1-beta)/alpha = 0.95/0.02.
        let lvl = privacy_level(&NoiseSchedule::constant(0.02, 0.05).unwrap());
        assert!((lvl.pi - (0.95f64 / 0.02).ln()).abs() < 1e-12);

        assert_eq!(privacy_level(&NoiseSchedule::max_privacy()).pi, 0.0);
        assert_eq!(privacy_level(&NoiseSchedule::zero()).pi, f64::INFINITY);
        assert_eq!(
            privacy_level(&NoiseSchedule::constant(0.3, 0.0).unwrap()).pi,
            f64::INFINITY
        );
    }

    #[test]
    fn per_pair_level_is_the_worst_pair() {
        let s = NoiseSchedule::per_pair([
            (0, 1, 0.1, 0.1),
            (0, 2, 0.3, 0.3),
            (1, 2, 0.2, 0.2),
        ])
        .unwrap();
        let lvl = privacy_level(&s);
        assert!((lvl.pi - LOG9).abs() < 1e-12);
        assert!((lvl.gamma_min - 0.4).abs() < 1e-12);
        assert!((lvl.gamma_max - 0.8).abs() < 1e-12);
    }

    #[test]
    fn per_pair_requires_complete_coverage() {
        let err = NoiseSchedule::per_pair([(0, 1, 0.1, 0.1), (0, 2, 0.1, 0.1)]).unwrap_err();
        assert!(err.to_string().contains("missing pair (1, 2)"), "{err}");

        let err =
            NoiseSchedule::per_pair([(0, 1, 0.1, 0.1), (1, 0, 0.2, 0.1)]).unwrap_err();
        assert!(err.to_string().contains("conflicting"), "{err}");
    }

    #[test]
    fn jitter_zero_schedule_is_identity() {
        let x = Graph::from_edges(6, [(0, 1), (2, 5), (3, 4)]).unwrap();
        let z = jitter(&x, &NoiseSchedule::zero(), 99).unwrap();
        assert_eq!(z, x);
        // And composing it twice stays the identity.
        let z2 = jitter(&z, &NoiseSchedule::zero(), 7).unwrap();
        assert_eq!(z2, x);
    }

    #[test]
    fn jitter_is_deterministic_in_the_seed() {
        let x = Graph::from_edges(20, (0..19).map(|i| (i, i + 1))).unwrap();
        let s = NoiseSchedule::constant(0.2, 0.3).unwrap();
        assert_eq!(jitter(&x, &s, 5).unwrap(), jitter(&x, &s, 5).unwrap());
        assert_ne!(jitter(&x, &s, 5).unwrap(), jitter(&x, &s, 6).unwrap());
    }

    #[test]
    fn max_privacy_output_ignores_the_input() {
        // At alpha = beta = 1/2 the copy branch has probability zero, so the
        // release is a function of the seed alone.
        let a = Graph::empty(12);
        let b = Graph::complete(12);
        let s = NoiseSchedule::max_privacy();
        assert_eq!(jitter(&a, &s, 31).unwrap(), jitter(&b, &s, 31).unwrap());
    }

    #[test]
    fn empirical_flip_rates_match_the_schedule() {
        // One jitter of a large graph: pairs are independent, so the flip
        // counts are binomial. 4 standard errors keeps this deterministic.
        let p = 500;
        let x = Graph::from_pair_fn(p, |i, j| (i + j) % 2 == 0);
        let s = NoiseSchedule::constant(0.3, 0.2).unwrap();
        let z = jitter(&x, &s, 424242).unwrap();
        let (mut n0, mut f01, mut n1, mut f10) = (0u64, 0u64, 0u64, 0u64);
        for i in 0..p {
            for j in (i + 1)..p {
                if x.has_edge(i, j) {
                    n1 += 1;
                    f10 += u64::from(!z.has_edge(i, j));
                } else {
                    n0 += 1;
                    f01 += u64::from(z.has_edge(i, j));
                }
            }
        }
        let rate01 = f01 as f64 / n0 as f64;
        let rate10 = f10 as f64 / n1 as f64;
        let se = |r: f64, n: u64| (r * (1.0 - r) / n as f64).sqrt();
        assert!((rate01 - 0.3).abs() < 4.0 * se(0.3, n0), "P(Z=1|X=0) = {rate01}");
        assert!((rate10 - 0.2).abs() < 4.0 * se(0.2, n1), "P(Z=0|X=1) = {rate10}");
    }

    #[test]
    fn expected_release_size_from_an_empty_graph() {
        // Every pair of the empty 4-node graph turns into an edge with
        // probability alpha = 0.3, so the expected released edge count is
        // 6 * 0.3 = 1.8. Averaging many seeded releases should land within
        // 4 standard errors, se = sqrt(6 * 0.3 * 0.7 / n).
        let x = Graph::empty(4);
        let s = NoiseSchedule::constant(0.3, 0.2).unwrap();
        let n = 100_000;
        let total: u64 = (0..n)
            .map(|seed| jitter(&x, &s, seed).unwrap().edge_count() as u64)
            .sum();
        let mean = total as f64 / n as f64;
        let se = (6.0 * 0.3 * 0.7 / n as f64).sqrt();
        assert!((mean - 1.8).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn rejittered_composes_the_rates() {
        let s = NoiseSchedule::constant(0.1, 0.3).unwrap();
        let (a, b) = s.rejittered(0.05).unwrap().as_constant().unwrap();
        assert!((a - (0.05 + 0.1 * 0.9)).abs() < 1e-15);
        assert!((b - (0.05 + 0.3 * 0.9)).abs() < 1e-15);
        assert!(s.rejittered(0.5).is_err());
        // Max privacy is a fixed point.
        let (a, b) = NoiseSchedule::max_privacy()
            .rejittered(0.2)
            .unwrap()
            .as_constant()
            .unwrap();
        assert_eq!((a, b), (0.5, 0.5));
    }

    #[test]
    fn schedule_csv_round_trips() {
        let s = NoiseSchedule::constant(0.125, 0.25).unwrap();
        let mut buf = Vec::new();
        s.save_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0.125,0.25\n");
        assert_eq!(NoiseSchedule::load_csv(buf.as_slice()).unwrap(), s);

        let t = NoiseSchedule::per_pair([
            (0, 1, 0.1, 0.2),
            (0, 2, 0.05, 0.1),
            (1, 2, 0.3, 0.3),
        ])
        .unwrap();
        let mut buf = Vec::new();
        t.save_csv(&mut buf).unwrap();
        assert_eq!(NoiseSchedule::load_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn schedule_csv_rejects_malformed_input() {
        for (text, needle) in [
            ("0.1,0.2\n0.1,0.2\n", "single"),
            ("0.1\n", "expected"),
            ("0.1,0.2\n0,1,0.1,0.2\n", "mix"),
            ("", "empty"),
            ("0.6,0.6\n", "inadmissible"),
        ] {
            let err = NoiseSchedule::load_csv(text.as_bytes()).unwrap_err();
            assert!(err.to_string().contains(needle), "{text:?} -> {err}");
        }
    }

    #[test]
    fn regime_bands_match_the_thresholds() {
        let p = 1_000_000;
        assert_eq!(regime_diagnostic(p, 0.5).unwrap().label, Regime::PhaseA);
        assert_eq!(regime_diagnostic(p, 0.0316).unwrap().label, Regime::Boundary);
        assert_eq!(
            regime_diagnostic(p, 0.001).unwrap().label,
            Regime::ConsistencyRisk
        );
        // Between the boundary band and the consistency band.
        assert_eq!(regime_diagnostic(p, 0.012).unwrap().label, Regime::PhaseC);

        let d = regime_diagnostic(p, 0.5).unwrap();
        assert!((d.c1 - 0.0316227766).abs() < 1e-9);
        assert!((d.c2 - 0.01549).abs() < 1e-4);

        assert!(regime_diagnostic(2, 0.5).is_err());
        assert!(regime_diagnostic(100, 0.0).is_err());
        assert!(regime_diagnostic(100, 1.5).is_err());
    }

    #[test]
    fn regime_labels_render_for_reports() {
        assert_eq!(Regime::PhaseA.to_string(), "phase-a");
        assert_eq!(Regime::Boundary.to_string(), "phase-b/boundary");
        assert_eq!(Regime::PhaseC.to_string(), "phase-c");
        assert_eq!(Regime::ConsistencyRisk.to_string(), "consistency-risk");
    }
}
