//! Score normalization for verification scores.
//!
//! The core of the crate is a linear-Gaussian score model (LGSM): every raw
//! score in an enrollment-by-test grid gets a class-dependent mean that is an
//! affine function of a hidden variable per enrollment and one per test
//! segment. Training is EM with minimum-divergence re-standardization, and
//! normalization of a trial score is the log-likelihood ratio of the whole
//! score grid under the two hypotheses for the trial cell.
//!
//! Classical cohort-based baselines (T-norm, Z-norm, ZT-norm, S-norm), a
//! seeded synthetic score generator and calibration/discrimination metrics
//! (EER, DET, Cllr, minCllr) round out the toolkit. The `scorenorm` binary
//! wires these into a simulate / train / normalize / eval pipeline.

pub mod cli;
pub mod data;
pub mod error;
pub mod lgsm;
pub mod metrics;
pub mod norms;
pub(crate) mod par;
pub mod synth;

pub use data::{Hypothesis, Label, LabelMatrix, Prior, ScoreMatrix, TrialContext};
pub use error::{Error, Result};
