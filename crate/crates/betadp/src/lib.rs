//! Edge-private network release and inference for degree heterogeneity.
//!
//! The pipeline has three stages, each usable on its own:
//!
//! 1. **Release** ([`privacy`]): a data holder perturbs a simple undirected
//!    graph by flipping each potential edge independently — force an edge in
//!    with probability `alpha`, force it out with probability `beta`, keep it
//!    otherwise. The released graph satisfies edge differential privacy at a
//!    level computable in closed form from `(alpha, beta)`.
//! 2. **Estimation** ([`moments`]): anyone holding the released graph and the
//!    public `(alpha, beta)` schedule can estimate each node's heterogeneity
//!    parameter in the logistic degree model by a method of moments that
//!    averages noise-cancelling products over node triples, together with
//!    plug-in variance estimates.
//! 3. **Inference** ([`bootstrap`], [`inference`]): variances for studentized
//!    confidence statements come from bootstrap replicates of the release
//!    pipeline at the fitted parameters, each re-jittered at a small rate δ;
//!    that rate is chosen per dataset by matching against a
//!    bias-corrected plug-in target. Simultaneous confidence regions and
//!    multiple-testing helpers sit on top.
//!
//! [`betamodel`] provides the logistic degree model itself (sampling, exact
//! population moments, maximum likelihood fitting) and [`graph`] a compact
//! bit-set graph type with plain-text I/O. All randomized routines take
//! explicit seeds and produce output that is byte-identical regardless of
//! thread count.

pub mod betamodel;
pub mod bootstrap;
pub mod error;
pub mod graph;
pub mod inference;
pub mod moments;
pub mod privacy;
pub mod rng;

pub use error::{Error, Result};
pub use graph::{DegreeSequence, Graph};
pub use privacy::NoiseSchedule;
