pub mod estimate;
pub mod infer;
pub mod mle;
pub mod release;
pub mod simulate;
