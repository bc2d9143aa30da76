//! Experiment configuration schema.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::VarianceMethod;

/// Reference-model recipe per family. Reference parameters that the
/// problem construction perturbs are drawn once per run from the listed
/// seeds, so a config file fully determines the study.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyConfig {
    /// Weights are i.i.d. U[0,1] entries from `weight_seed`; candidates
    /// add their delta to the (1,1) weight entry.
    Ppca {
        d: usize,
        d_z: usize,
        psi: f64,
        weight_seed: u64,
    },
    /// Topic rows are Dir(1) draws from `topic_seed`; the reference
    /// concentration is (a0,…,a0) and candidates add their delta to
    /// every component. Documents have `d` words over `l` vocabulary.
    Lda {
        k: usize,
        l: usize,
        d: usize,
        a0: f64,
        topic_seed: u64,
    },
    /// Data comes from the zero-mean marginal N(0, (φ²+1)I); candidates
    /// use prior mean δ·1/√D and condition on a shared training draw of
    /// `n_tr` points.
    Gdpm { d: usize, phi_sq: f64, n_tr: usize },
}

impl FamilyConfig {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyConfig::Ppca { .. } => "ppca",
            FamilyConfig::Lda { .. } => "lda",
            FamilyConfig::Gdpm { .. } => "gdpm",
        }
    }

    /// Desk-scale sampler defaults (m draws, t burn-in).
    pub fn desk_scale(&self) -> (usize, usize) {
        match self {
            FamilyConfig::Ppca { .. } => (200, 100),
            FamilyConfig::Lda { .. } => (200, 1000),
            FamilyConfig::Gdpm { .. } => (200, 500),
        }
    }

    /// Sampler settings matching the published study scale.
    pub fn paper_scale(&self) -> (usize, usize) {
        match self {
            FamilyConfig::Ppca { .. } => (500, 200),
            FamilyConfig::Lda { .. } => (500, 5000),
            FamilyConfig::Gdpm { .. } => (500, 1000),
        }
    }
}

fn default_schema_version() -> u32 {
    crate::SCHEMA_VERSION
}

fn default_variance_method() -> VarianceMethod {
    VarianceMethod::VStat
}

fn default_true() -> bool {
    true
}

/// One simulation study: a reference model, two perturbed candidates,
/// and the trial grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub family: FamilyConfig,
    pub delta_p: f64,
    pub delta_q: f64,
    /// Test sample sizes, one table block per entry.
    pub n: Vec<usize>,
    pub trials: usize,
    /// Significance levels evaluated on the same statistics.
    pub alpha: Vec<f64>,
    /// Latent draws per observation; family desk default when absent.
    #[serde(default)]
    pub m: Option<usize>,
    /// Burn-in steps; family desk default when absent.
    #[serde(default)]
    pub t: Option<usize>,
    #[serde(default = "default_variance_method")]
    pub variance_method: VarianceMethod,
    /// Master seed; fully determines every random draw in the run.
    pub seed: u64,
    /// Reuse P's chains for Q (meaningful for identical models; makes
    /// the grams equal by construction).
    #[serde(default)]
    pub shared_draws: bool,
    /// Also run the exact-marginal-score baseline where the family has
    /// one (PPCA).
    #[serde(default = "default_true")]
    pub include_exact: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != crate::SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported schema_version {} (expected {})",
                self.schema_version,
                crate::SCHEMA_VERSION
            )));
        }
        if self.trials < 1 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.n.is_empty() || self.n.iter().any(|n| *n < 4) {
            return Err(Error::InvalidParameter(
                "every sample size must be >= 4".into(),
            ));
        }
        if self.alpha.is_empty() || self.alpha.iter().any(|a| !(*a > 0.0 && *a <= 0.5)) {
            return Err(Error::InvalidParameter(
                "significance levels must lie in (0, 0.5]".into(),
            ));
        }
        if !self.delta_p.is_finite() || !self.delta_q.is_finite() {
            return Err(Error::InvalidParameter("perturbations must be finite".into()));
        }
        match &self.family {
            FamilyConfig::Ppca { d, d_z, psi, .. } => {
                if *d_z < 1 || d_z >= d {
                    return Err(Error::InvalidParameter("need 1 <= d_z < d".into()));
                }
                if !(*psi > 0.0) {
                    return Err(Error::InvalidParameter("psi must be positive".into()));
                }
            }
            FamilyConfig::Lda { k, l, d, a0, .. } => {
                if *k < 1 || *l < 2 || *d < 1 {
                    return Err(Error::InvalidParameter(
                        "need k >= 1, l >= 2, d >= 1".into(),
                    ));
                }
                if !(*a0 > 0.0) || self.delta_p + a0 <= 0.0 || self.delta_q + a0 <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "perturbed concentrations must stay positive".into(),
                    ));
                }
            }
            FamilyConfig::Gdpm { d, phi_sq, .. } => {
                if *d < 1 || !(*phi_sq > 0.0) {
                    return Err(Error::InvalidParameter(
                        "need d >= 1 and positive phi_sq".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Sampler settings after applying defaults.
    pub fn sampler_settings(&self) -> (usize, usize) {
        let (dm, dt) = self.family.desk_scale();
        (self.m.unwrap_or(dm), self.t.unwrap_or(dt))
    }

    /// Switch trial count and sampler settings to the published scale.
    pub fn apply_paper_scale(&mut self) {
        let (m, t) = self.family.paper_scale();
        self.m = Some(m);
        self.t = Some(t);
        self.trials = 300;
    }
}
