//! Experiment engine: problem construction by perturbation, trial
//! loops, and rejection-rate aggregation.
//!
//! Each trial draws a fresh dataset from the reference model, builds
//! the two candidates via the family's perturbation, runs one posterior
//! chain per (observation, model), assembles the grams once, and
//! evaluates every (alpha, method) cell on those shared grams. Trials
//! are independent tasks with seeds derived from the master seed by
//! (role, n, trial index), so results are identical for any worker
//! count and any single trial can be reproduced alone.

mod config;
mod table;

pub use config::{ExperimentConfig, FamilyConfig};
pub use table::{wilson_ci, RejectionRow, RejectionTable, TestMethod, TrialFailure};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::VarianceMethod;
use crate::kernels::{median_heuristic, KernelSpec};
use crate::models::{GdpmModel, LdaModel, Model, PpcaModel};
use crate::reltest::{relative_test, TestConfig};
use crate::stein::{stein_gram, SteinGram};
use crate::util::{derive_seed, role};

/// Thread-pool honouring the STEINCMP_THREADS cap (0 or unset: rayon's
/// default).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var("STEINCMP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

struct PreparedRun {
    cfg: ExperimentConfig,
    model_p: Model,
    model_q: Model,
    /// Data generator: the reference model itself.
    reference: ReferenceSampler,
    m: usize,
    t: usize,
    include_exact: bool,
}

enum ReferenceSampler {
    Ppca(PpcaModel),
    Lda { model: LdaModel, d_words: usize },
    Gdpm(GdpmModel),
}

impl ReferenceSampler {
    fn sample(&self, n: usize, seed: u64) -> Dataset {
        match self {
            ReferenceSampler::Ppca(m) => m.sample(n, seed),
            ReferenceSampler::Lda { model, d_words } => model.sample(n, *d_words, seed),
            ReferenceSampler::Gdpm(m) => m.marginal_sample(n, seed),
        }
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<PreparedRun> {
    cfg.validate()?;
    let (m, t) = cfg.sampler_settings();
    match &cfg.family {
        FamilyConfig::Ppca {
            d,
            d_z,
            psi,
            weight_seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(*weight_seed, &[role::PARAMS]));
            let weights =
                ndarray::Array2::from_shape_fn((*d, *d_z), |_| rng.gen_range(0.0..1.0));
            let reference = PpcaModel::new(weights, *psi)?;
            let model_p = Model::Ppca(reference.perturbed(cfg.delta_p)?);
            let model_q = Model::Ppca(reference.perturbed(cfg.delta_q)?);
            Ok(PreparedRun {
                cfg: cfg.clone(),
                model_p,
                model_q,
                reference: ReferenceSampler::Ppca(reference),
                m,
                t,
                include_exact: cfg.include_exact,
            })
        }
        FamilyConfig::Lda {
            k,
            l,
            d,
            a0,
            topic_seed,
        } => {
            let topics = LdaModel::random_topics(*k, *l, derive_seed(*topic_seed, &[role::PARAMS]));
            let reference = LdaModel::new(vec![*a0; *k], topics)?;
            let model_p = Model::Lda(reference.perturbed(cfg.delta_p)?);
            let model_q = Model::Lda(reference.perturbed(cfg.delta_q)?);
            Ok(PreparedRun {
                cfg: cfg.clone(),
                model_p,
                model_q,
                reference: ReferenceSampler::Lda {
                    model: reference,
                    d_words: *d,
                },
                m,
                t,
                include_exact: false,
            })
        }
        FamilyConfig::Gdpm { d, phi_sq, n_tr } => {
            let reference = GdpmModel::new(vec![0.0; *d], *phi_sq)?;
            // one training draw shared by the whole run and both models
            let training = reference
                .marginal_sample(*n_tr, derive_seed(cfg.seed, &[role::TRAIN]))
                .values()
                .clone();
            let model_p = Model::Gdpm(
                GdpmModel::with_scaled_ones_mean(*d, cfg.delta_p, *phi_sq)?
                    .with_training(training.clone())?,
            );
            let model_q = Model::Gdpm(
                GdpmModel::with_scaled_ones_mean(*d, cfg.delta_q, *phi_sq)?
                    .with_training(training)?,
            );
            Ok(PreparedRun {
                cfg: cfg.clone(),
                model_p,
                model_q,
                reference: ReferenceSampler::Gdpm(reference),
                m,
                t,
                include_exact: false,
            })
        }
    }
}

#[derive(Clone, Copy)]
struct Outcome {
    alpha: f64,
    method: TestMethod,
    reject: bool,
    degenerate: bool,
}

impl PreparedRun {
    fn kernel_for(&self, data: &Dataset) -> Result<KernelSpec> {
        match &self.reference {
            ReferenceSampler::Lda { model, .. } => Ok(KernelSpec::BowGaussian {
                vocab_size: model.vocab_size(),
            }),
            _ => Ok(KernelSpec::GaussianSq {
                bandwidth: median_heuristic(data)?,
            }),
        }
    }

    fn run_trial(&self, n: usize, trial: usize) -> Result<Vec<Outcome>> {
        let data_seed = derive_seed(self.cfg.seed, &[role::DATA, n as u64, trial as u64]);
        let data = self.reference.sample(n, data_seed);
        let kernel = self.kernel_for(&data)?;

        let seed_p = derive_seed(self.cfg.seed, &[role::CHAIN_P, n as u64, trial as u64]);
        let seed_q = if self.cfg.shared_draws {
            seed_p
        } else {
            derive_seed(self.cfg.seed, &[role::CHAIN_Q, n as u64, trial as u64])
        };
        let scores_p = self.model_p.averaged_score_matrix(&data, self.m, self.t, seed_p)?;
        let scores_q = self.model_q.averaged_score_matrix(&data, self.m, self.t, seed_q)?;
        let gram_p = stein_gram(&scores_p, &data, &kernel)?;
        let gram_q = stein_gram(&scores_q, &data, &kernel)?;

        let exact_grams: Option<(SteinGram, SteinGram)> = if self.include_exact {
            let ep = self.model_p.exact_score_matrix(&data)?;
            let eq = self.model_q.exact_score_matrix(&data)?;
            Some((
                stein_gram(&ep, &data, &kernel)?,
                stein_gram(&eq, &data, &kernel)?,
            ))
        } else {
            None
        };

        let mut outcomes = Vec::new();
        for &alpha in &self.cfg.alpha {
            for (method, variance) in [
                (TestMethod::LksdV, VarianceMethod::VStat),
                (TestMethod::LksdU, VarianceMethod::UStat),
            ] {
                let cfg = TestConfig::new(alpha)?
                    .with_variance_method(variance)
                    .with_sampler_settings(self.m, self.t);
                let report = relative_test(&gram_p, &gram_q, &cfg)?;
                outcomes.push(Outcome {
                    alpha,
                    method,
                    reject: report.reject,
                    degenerate: report.degenerate,
                });
            }
            if let Some((ep, eq)) = &exact_grams {
                let cfg = TestConfig::new(alpha)?;
                let report = relative_test(ep, eq, &cfg)?;
                outcomes.push(Outcome {
                    alpha,
                    method: TestMethod::KsdExact,
                    reject: report.reject,
                    degenerate: report.degenerate,
                });
            }
        }
        Ok(outcomes)
    }
}

#[derive(Default, Clone, Copy)]
struct Counts {
    rejects: usize,
    degenerate: usize,
    trials: usize,
}

/// Run the full study described by the config.
///
/// Both variance methods are always evaluated on the shared difference
/// gram; the exact-score baseline is added where the family has one.
/// More than 5% aborted trials fails the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RejectionTable> {
    let pool = thread_pool()?;
    pool.install(|| run_experiment_inner(cfg))
}

/// Identical-models study: forces δ_Q = δ_P and runs the same engine,
/// whose table carries both the UStat- and VStat-calibrated rows.
pub fn run_identical_models(cfg: &ExperimentConfig) -> Result<RejectionTable> {
    let mut cfg = cfg.clone();
    cfg.delta_q = cfg.delta_p;
    run_experiment(&cfg)
}

fn run_experiment_inner(cfg: &ExperimentConfig) -> Result<RejectionTable> {
    let run = prepare(cfg)?;
    let mut counts: BTreeMap<(usize, u64, TestMethod), Counts> = BTreeMap::new();
    let mut aborted: Vec<TrialFailure> = Vec::new();
    let mut total_trials = 0usize;

    for &n in &cfg.n {
        let results: Vec<Result<Vec<Outcome>>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| run.run_trial(n, trial))
            .collect();
        total_trials += cfg.trials;
        for (trial, res) in results.into_iter().enumerate() {
            match res {
                Ok(outcomes) => {
                    for o in outcomes {
                        let key = (n, o.alpha.to_bits(), o.method);
                        let slot = counts.entry(key).or_default();
                        slot.trials += 1;
                        if o.reject {
                            slot.rejects += 1;
                        }
                        if o.degenerate {
                            slot.degenerate += 1;
                        }
                    }
                }
                Err(e) => aborted.push(TrialFailure {
                    n,
                    trial,
                    data_seed: derive_seed(cfg.seed, &[role::DATA, n as u64, trial as u64]),
                    message: e.to_string(),
                }),
            }
        }
    }

    if aborted.len() * 20 > total_trials {
        return Err(Error::TooManyAbortedTrials {
            failed: aborted.len(),
            total: total_trials,
            first: aborted[0].message.clone(),
        });
    }

    let rows = counts
        .into_iter()
        .map(|((n, alpha_bits, method), c)| {
            RejectionRow::from_counts(
                n,
                f64::from_bits(alpha_bits),
                method,
                c.rejects,
                c.degenerate,
                c.trials,
            )
        })
        .collect();
    Ok(RejectionTable::new(rows, aborted))
}

/// Dense CSV dump of a gram matrix (debugging aid behind the CLI).
pub fn write_gram_csv<W: Write>(gram: &SteinGram, mut w: W) -> Result<()> {
    let n = gram.n();
    for i in 0..n {
        for j in 0..n {
            if j > 0 {
                write!(w, ",")?;
            }
            write!(w, "{}", gram.get(i, j))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_ppca_cfg() -> ExperimentConfig {
        ExperimentConfig {
            schema_version: crate::SCHEMA_VERSION,
            family: FamilyConfig::Ppca {
                d: 6,
                d_z: 2,
                psi: 1.0,
                weight_seed: 3,
            },
            delta_p: 1.0,
            delta_q: 1.1,
            n: vec![12],
            trials: 3,
            alpha: vec![0.05],
            m: Some(20),
            t: Some(20),
            variance_method: VarianceMethod::VStat,
            seed: 99,
            shared_draws: false,
            include_exact: true,
        }
    }

    #[test]
    fn experiment_is_deterministic_across_runs() {
        let cfg = tiny_ppca_cfg();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        a.write_csv(&mut csv_a).unwrap();
        b.write_csv(&mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
        assert!(a.aborted_trials.is_empty());
        // three methods present for PPCA
        assert_eq!(a.rows.len(), 3);
        for row in &a.rows {
            assert_eq!(row.trials, 3);
        }
    }

    #[test]
    fn shared_draws_on_identical_models_degenerate_every_trial() {
        let mut cfg = tiny_ppca_cfg();
        cfg.shared_draws = true;
        cfg.include_exact = false;
        let table = run_identical_models(&cfg).unwrap();
        for method in [TestMethod::LksdV, TestMethod::LksdU] {
            assert_eq!(table.degenerate_fraction(12, 0.05, method), Some(1.0));
            assert_eq!(table.rate(12, 0.05, method), Some(0.0));
        }
    }

    #[test]
    fn gram_csv_shape() {
        let g = SteinGram::from_matrix(ndarray::Array2::eye(3), true).unwrap();
        let mut buf = Vec::new();
        write_gram_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next().unwrap(), "1,0,0");
    }
}
