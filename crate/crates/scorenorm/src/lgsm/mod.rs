//! The linear-Gaussian score model.
//!
//! Every score in an enrollment-by-test grid is modeled as
//! `s_ij ~ N(mu_h + alpha_h'x_i + beta_h'y_j, var_h)` where `h` is the cell's
//! hypothesis label, `x_i` and `y_j` are D-dimensional hidden variables with
//! standard Gaussian priors, shared along rows and columns respectively.
//! That gives 4 + 4D trainable scalars.

mod em;
mod posterior;
mod scoring;

pub use em::{accumulate_stats, e_step, em_fit, expected_complete_ll, m_step, min_div_step,
             EmConfig, SufficientStats, TrainTrace};
pub use posterior::{build_posterior, log_marginal, PosteriorMoments, PosteriorSummary};
pub use scoring::{normalize_batch, normalize_trial, target_posterior, BatchNormalizer};

use std::path::Path;

use crate::data::Hypothesis;
use crate::error::{Error, Result};

/// Variance floor applied throughout training.
pub const VAR_FLOOR: f64 = 1e-6;

/// Trainable parameters of the model.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LgsmParams {
    pub d: usize,
    pub mu_tar: f64,
    pub mu_non: f64,
    pub var_tar: f64,
    pub var_non: f64,
    pub alpha_tar: Vec<f64>,
    pub alpha_non: Vec<f64>,
    pub beta_tar: Vec<f64>,
    pub beta_non: Vec<f64>,
}

impl LgsmParams {
    pub fn new(
        d: usize,
        mu_tar: f64,
        mu_non: f64,
        var_tar: f64,
        var_non: f64,
        alpha_tar: Vec<f64>,
        alpha_non: Vec<f64>,
        beta_tar: Vec<f64>,
        beta_non: Vec<f64>,
    ) -> Result<Self> {
        let p = LgsmParams { d, mu_tar, mu_non, var_tar, var_non, alpha_tar, alpha_non, beta_tar, beta_non };
        p.validate()?;
        Ok(p)
    }

    /// A D=0 model (pure Gaussian calibration).
    pub fn gaussian(mu_tar: f64, mu_non: f64, var_tar: f64, var_non: f64) -> Result<Self> {
        Self::new(0, mu_tar, mu_non, var_tar, var_non, vec![], vec![], vec![], vec![])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.var_tar > 0.0) || !(self.var_non > 0.0) {
            return Err(Error::InvalidParam(format!(
                "variances must be positive, got var_tar={}, var_non={}",
                self.var_tar, self.var_non
            )));
        }
        for (name, v) in [
            ("alpha_tar", &self.alpha_tar),
            ("alpha_non", &self.alpha_non),
            ("beta_tar", &self.beta_tar),
            ("beta_non", &self.beta_non),
        ] {
            if v.len() != self.d {
                return Err(Error::InvalidParam(format!(
                    "{name} has length {}, expected d={}",
                    v.len(),
                    self.d
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} contains a non-finite entry")));
            }
        }
        if ![self.mu_tar, self.mu_non, self.var_tar, self.var_non]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Error::InvalidParam("non-finite scalar parameter".into()));
        }
        Ok(())
    }

    /// Total trainable scalar count, always `4 + 4 d`.
    pub fn scalar_count(&self) -> usize {
        4 + 4 * self.d
    }

    pub fn mu(&self, h: Hypothesis) -> f64 {
        match h {
            Hypothesis::Target => self.mu_tar,
            Hypothesis::NonTarget => self.mu_non,
        }
    }

    pub fn var(&self, h: Hypothesis) -> f64 {
        match h {
            Hypothesis::Target => self.var_tar,
            Hypothesis::NonTarget => self.var_non,
        }
    }

    pub fn alpha(&self, h: Hypothesis) -> &[f64] {
        match h {
            Hypothesis::Target => &self.alpha_tar,
            Hypothesis::NonTarget => &self.alpha_non,
        }
    }

    pub fn beta(&self, h: Hypothesis) -> &[f64] {
        match h {
            Hypothesis::Target => &self.beta_tar,
            Hypothesis::NonTarget => &self.beta_non,
        }
    }

    /// Hidden-variable share of the class-h score variance,
    /// `alpha_h'alpha_h + beta_h'beta_h`.
    pub fn nu(&self, h: Hypothesis) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        sq(self.alpha(h)) + sq(self.beta(h))
    }

    /// Marginal variance of a single class-h score, `var_h + nu_h`.
    pub fn single_score_variance(&self, h: Hypothesis) -> f64 {
        self.var(h) + self.nu(h)
    }
}

/// Training metadata stored alongside the parameters.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub iterations: usize,
    pub final_objective: f64,
    pub converged: bool,
}

/// On-disk model document.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub params: LgsmParams,
    pub meta: TrainMeta,
}

const MODEL_FORMAT: &str = "scorenorm-model";
const MODEL_VERSION: u32 = 1;

impl ModelFile {
    pub fn new(params: LgsmParams, meta: TrainMeta) -> Self {
        ModelFile { format: MODEL_FORMAT.into(), version: MODEL_VERSION, params, meta }
    }
}

/// Writes a model as JSON. serde_json emits shortest round-trip decimals, so
/// a read recovers every parameter bit-exactly.
pub fn write_model(path: &Path, model: &ModelFile) -> Result<()> {
    let text = serde_json::to_string_pretty(model)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)?;
    let model: ModelFile = serde_json::from_str(&text)?;
    if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
        return Err(Error::InvalidParam(format!(
            "unsupported model file {}/{}",
            model.format, model.version
        )));
    }
    model.params.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_count_is_4_plus_4d() {
        let p = LgsmParams::new(
            3, 1.0, 0.0, 1.0, 1.0,
            vec![0.1; 3], vec![0.2; 3], vec![0.3; 3], vec![0.4; 3],
        )
        .unwrap();
        assert_eq!(p.scalar_count(), 16);
    }

    #[test]
    fn invalid_variance_rejected() {
        assert!(LgsmParams::gaussian(0.0, 0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn mismatched_loading_length_rejected() {
        let p = LgsmParams::new(2, 0.0, 0.0, 1.0, 1.0, vec![0.1], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]);
        assert!(p.is_err());
    }

    #[test]
    fn model_file_round_trip_is_bit_exact() {
        let params = LgsmParams::new(
            2,
            1.0 / 3.0,
            -2.0 / 7.0,
            std::f64::consts::PI,
            0.1 + 0.2,
            vec![1e-17, 2.5],
            vec![0.0, -0.0],
            vec![f64::MIN_POSITIVE, 1.0],
            vec![123.456789012345678, -9.0],
        )
        .unwrap();
        let model = ModelFile::new(params.clone(), TrainMeta { seed: 7, iterations: 3, final_objective: -1.5, converged: true });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        write_model(&path, &model).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(back.params, params);
        assert_eq!(back.meta.seed, 7);
    }
}
