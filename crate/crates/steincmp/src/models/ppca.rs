//! Probabilistic PCA.
//!
//! ```text
//! z ~ N(0, I_z),  x | z ~ N(Az, ψ²I_x),  A ∈ R^{D×D_z}, 1 ≤ D_z < D
//! ```
//!
//! The marginal is N(0, AAᵀ + ψ²I) and the posterior of z given x is the
//! conjugate Gaussian N(M⁻¹Aᵀx/ψ², M⁻¹) with M = I + AᵀA/ψ², so this
//! family admits both an exact-score baseline and an exact posterior
//! sampler against which the MCMC pipeline can be checked.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::stein::{ChainMeta, LatentBatch};

/// Metropolis-adjusted Langevin settings for the posterior sampler.
#[derive(Clone, Copy, Debug)]
pub struct MalaParams {
    /// Initial step size; adapted during burn-in when `adapt` is set.
    pub initial_step: f64,
    /// Acceptance rate targeted by the adaptation.
    pub target_accept: f64,
    pub adapt: bool,
}

impl Default for MalaParams {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            target_accept: 0.574,
            adapt: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PpcaModel {
    a: Array2<f64>,
    psi: f64,
    /// Cholesky of the marginal covariance AAᵀ + ψ²I.
    chol_cov: Cholesky<f64, Dyn>,
    /// Posterior mean operator M⁻¹Aᵀ/ψ² and the factor W with WWᵀ = M⁻¹.
    post_mean_op: DMatrix<f64>,
    post_noise_op: DMatrix<f64>,
}

impl PpcaModel {
    pub fn new(a: Array2<f64>, psi: f64) -> Result<Self> {
        let (d, d_z) = a.dim();
        if !(psi > 0.0 && psi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "psi must be positive, got {psi}"
            )));
        }
        if d_z < 1 || d_z >= d {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= D_z < D, got D={d} D_z={d_z}"
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight entry".into()));
        }
        let an = DMatrix::from_fn(d, d_z, |i, j| a[[i, j]]);
        let psi_sq = psi * psi;
        let cov = &an * an.transpose() + DMatrix::identity(d, d) * psi_sq;
        let chol_cov = Cholesky::new(cov).ok_or(Error::NotPositiveDefinite)?;
        let m = DMatrix::identity(d_z, d_z) + an.transpose() * &an / psi_sq;
        let chol_m = Cholesky::new(m).ok_or(Error::NotPositiveDefinite)?;
        // M⁻¹Aᵀ/ψ²
        let post_mean_op = chol_m.solve(&(an.transpose() / psi_sq));
        // W = L⁻ᵀ so that WWᵀ = M⁻¹
        let l_t = chol_m.l().transpose();
        let post_noise_op = l_t
            .solve_upper_triangular(&DMatrix::identity(d_z, d_z))
            .ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            a,
            psi,
            chol_cov,
            post_mean_op,
            post_noise_op,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.a.dim()
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.a
    }

    /// Copy with δ added to the (1,1) weight entry.
    pub fn perturbed(&self, delta: f64) -> Result<Self> {
        let mut a = self.a.clone();
        a[[0, 0]] += delta;
        Self::new(a, self.psi)
    }

    fn a_mul(&self, z: &[f64]) -> Vec<f64> {
        let (d, d_z) = self.a.dim();
        let mut out = vec![0.0; d];
        for (i, out_i) in out.iter_mut().enumerate() {
            let row = self.a.row(i);
            let mut acc = 0.0;
            for j in 0..d_z {
                acc += row[j] * z[j];
            }
            *out_i = acc;
        }
        out
    }

    fn a_t_mul(&self, r: &[f64]) -> Vec<f64> {
        let (d, d_z) = self.a.dim();
        let mut out = vec![0.0; d_z];
        for i in 0..d {
            let row = self.a.row(i);
            let ri = r[i];
            for (j, out_j) in out.iter_mut().enumerate() {
                *out_j += row[j] * ri;
            }
        }
        out
    }

    /// n i.i.d. draws from the marginal N(0, AAᵀ + ψ²I), generated as
    /// x = Az + ψε.
    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        let (d, d_z) = self.a.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Array2::<f64>::zeros((n, d));
        for i in 0..n {
            let z: Vec<f64> = (0..d_z).map(|_| rng.sample(StandardNormal)).collect();
            let az = self.a_mul(&z);
            for j in 0..d {
                let eps: f64 = rng.sample(StandardNormal);
                values[[i, j]] = az[j] + self.psi * eps;
            }
        }
        Dataset::continuous(values).expect("finite draws")
    }

    /// Conditional score −(x − Az)/ψ².
    pub fn cond_score(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let az = self.a_mul(z);
        let inv = 1.0 / (self.psi * self.psi);
        x.iter().zip(az).map(|(xi, azi)| -(xi - azi) * inv).collect()
    }

    /// Marginal score −(AAᵀ + ψ²I)⁻¹x via the cached factorization.
    pub fn marginal_score(&self, x: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(x);
        let s = self.chol_cov.solve(&v);
        s.iter().map(|v| -v).collect()
    }

    /// Marginal log-density of one observation (up to nothing: full
    /// normal log-density, used by tests).
    pub fn marginal_log_density(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        let v = DVector::from_column_slice(x);
        let s = self.chol_cov.solve(&v);
        let quad: f64 = v.dot(&s);
        let log_det: f64 = self.chol_cov.l().diagonal().iter().map(|l| l.ln()).sum::<f64>() * 2.0;
        -0.5 * (quad + log_det + d * (2.0 * std::f64::consts::PI).ln())
    }

    /// m i.i.d. draws from the exact posterior N(M⁻¹Aᵀx/ψ², M⁻¹).
    pub fn posterior_exact(&self, x: &[f64], m: usize, seed: u64) -> LatentBatch<Vec<f64>> {
        let d_z = self.a.dim().1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xv = DVector::from_column_slice(x);
        let mean = &self.post_mean_op * &xv;
        let draws = (0..m)
            .map(|_| {
                let eps = DVector::from_fn(d_z, |_, _| rng.sample(StandardNormal));
                let noise = &self.post_noise_op * eps;
                (0..d_z).map(|j| mean[j] + noise[j]).collect()
            })
            .collect();
        LatentBatch {
            draws,
            burn_in: 0,
            meta: ChainMeta {
                sampler: "exact-posterior",
                seed,
                acceptance_rate: None,
            },
        }
    }

    /// Unnormalized posterior log-density and its gradient at z.
    fn posterior_logp_grad(&self, x: &[f64], z: &[f64]) -> (f64, Vec<f64>) {
        let az = self.a_mul(z);
        let inv = 1.0 / (self.psi * self.psi);
        let mut resid = vec![0.0; x.len()];
        let mut sq_resid = 0.0;
        for i in 0..x.len() {
            let r = x[i] - az[i];
            resid[i] = r;
            sq_resid += r * r;
        }
        let sq_z: f64 = z.iter().map(|v| v * v).sum();
        let logp = -0.5 * inv * sq_resid - 0.5 * sq_z;
        let atr = self.a_t_mul(&resid);
        let grad = (0..z.len()).map(|j| atr[j] * inv - z[j]).collect();
        (logp, grad)
    }

    /// m states of a Metropolis-adjusted Langevin chain targeting the
    /// posterior, recorded after t burn-in transitions. Step size adapts
    /// toward the target acceptance during burn-in only.
    pub fn posterior_mala(
        &self,
        x: &[f64],
        m: usize,
        t: usize,
        params: MalaParams,
        seed: u64,
    ) -> Result<LatentBatch<Vec<f64>>> {
        let d_z = self.a.dim().1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = vec![0.0; d_z];
        let (mut logp, mut grad) = self.posterior_logp_grad(x, &z);
        if !logp.is_finite() {
            return Err(Error::NonFinite("posterior log-density at init".into()));
        }
        let mut step = params.initial_step;
        let mut draws = Vec::with_capacity(m);
        let mut accepted_sampling = 0usize;
        for iter in 0..(t + m) {
            let half_sq = 0.5 * step * step;
            let fwd_mean: Vec<f64> = (0..d_z).map(|j| z[j] + half_sq * grad[j]).collect();
            let prop: Vec<f64> = (0..d_z)
                .map(|j| fwd_mean[j] + step * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let (logp_prop, grad_prop) = self.posterior_logp_grad(x, &prop);
            if !logp_prop.is_finite() {
                return Err(Error::NonFinite("posterior log-density at proposal".into()));
            }
            let bwd_mean: Vec<f64> = (0..d_z).map(|j| prop[j] + half_sq * grad_prop[j]).collect();
            let inv_2step_sq = 1.0 / (2.0 * step * step);
            let mut log_q_fwd = 0.0;
            let mut log_q_bwd = 0.0;
            for j in 0..d_z {
                let df = prop[j] - fwd_mean[j];
                let db = z[j] - bwd_mean[j];
                log_q_fwd -= df * df * inv_2step_sq;
                log_q_bwd -= db * db * inv_2step_sq;
            }
            let log_alpha = (logp_prop - logp + log_q_bwd - log_q_fwd).min(0.0);
            let accept = rng.gen::<f64>().ln() < log_alpha;
            if accept {
                z = prop;
                logp = logp_prop;
                grad = grad_prop;
            }
            if iter < t {
                if params.adapt {
                    let alpha = log_alpha.exp();
                    step *= (0.05 * (alpha - params.target_accept)).exp();
                }
            } else {
                if accept {
                    accepted_sampling += 1;
                }
                draws.push(z.clone());
            }
        }
        Ok(LatentBatch {
            draws,
            burn_in: t,
            meta: ChainMeta {
                sampler: "mala",
                seed,
                acceptance_rate: Some(accepted_sampling as f64 / m.max(1) as f64),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn simple_model() -> PpcaModel {
        // D=2, D_z=1, A=(1,0)ᵀ, ψ=1: marginal cov [[2,0],[0,1]]
        PpcaModel::new(array![[1.0], [0.0]], 1.0).unwrap()
    }

    #[test]
    fn constructor_validates() {
        assert!(PpcaModel::new(array![[1.0], [0.0]], 0.0).is_err());
        assert!(PpcaModel::new(array![[1.0, 2.0]], 1.0).is_err()); // D_z >= D
    }

    #[test]
    fn sample_is_seed_deterministic() {
        let model = simple_model();
        let a = model.sample(5, 42);
        let b = model.sample(5, 42);
        assert_eq!(a.values(), b.values());
        let c = model.sample(5, 43);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn sample_covariance_matches_marginal() {
        // A = 0-ish via tiny weights is disallowed by D_z < D only; use the
        // (1,0) model and 100k draws: cov ≈ [[2,0],[0,1]] within 5%.
        let model = simple_model();
        let data = model.sample(100_000, 7);
        let v = data.values();
        let n = v.nrows() as f64;
        let mut cov = [[0.0; 2]; 2];
        for r in 0..v.nrows() {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += v[[r, i]] * v[[r, j]] / n;
                }
            }
        }
        assert!((cov[0][0] - 2.0).abs() < 0.1);
        assert!((cov[1][1] - 1.0).abs() < 0.05);
        assert!(cov[0][1].abs() < 0.05);
    }

    #[test]
    fn cond_score_formula() {
        // D=1 is not constructible (D_z < D); check through D=2.
        let model = simple_model();
        // x = Az → score 0
        let s = model.cond_score(&[1.0, 0.0], &[1.0]);
        assert_eq!(s, vec![0.0, 0.0]);
        // generic: −(x − Az)/ψ²
        let s = model.cond_score(&[2.0, 1.0], &[1.0]);
        assert_eq!(s, vec![-1.0, -1.0]);
        let model2 = PpcaModel::new(array![[1.0], [0.0]], 2.0).unwrap();
        let s = model2.cond_score(&[2.0, 0.0], &[1.0]);
        assert_eq!(s, vec![-0.25, 0.0]);
    }

    #[test]
    fn marginal_score_closed_forms() {
        let model = simple_model();
        assert_eq!(model.marginal_score(&[0.0, 0.0]), vec![0.0, 0.0]);
        // cov diag (2,1): score at x = (2, 3) is (−1, −3)
        let s = model.marginal_score(&[2.0, 3.0]);
        assert_abs_diff_eq!(s[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], -3.0, epsilon = 1e-12);
    }

    #[test]
    fn marginal_score_matches_log_density_gradient() {
        let model = PpcaModel::new(array![[0.8, 0.1], [0.3, 0.5], [0.2, 0.9]], 0.7).unwrap();
        let x = [0.4, -1.1, 0.6];
        let s = model.marginal_score(&x);
        let h = 1e-5;
        for d in 0..3 {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[d] += h;
            xm[d] -= h;
            let fd =
                (model.marginal_log_density(&xp) - model.marginal_log_density(&xm)) / (2.0 * h);
            assert_abs_diff_eq!(s[d], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn exact_posterior_moments() {
        // D_z=1, A=(1,0)ᵀ, ψ=1, x=(2,0): posterior N(1, 1/2)
        let model = simple_model();
        let batch = model.posterior_exact(&[2.0, 0.0], 200_000, 3);
        let mean: f64 = batch.draws.iter().map(|z| z[0]).sum::<f64>() / 200_000.0;
        let var: f64 =
            batch.draws.iter().map(|z| (z[0] - mean) * (z[0] - mean)).sum::<f64>() / 200_000.0;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!((var - 0.5).abs() < 0.01, "var {var}");
    }

    #[test]
    fn mala_tiny_step_stays_near_init() {
        let model = simple_model();
        let params = MalaParams {
            initial_step: 1e-12,
            target_accept: 0.574,
            adapt: false,
        };
        let batch = model
            .posterior_mala(&[2.0, 0.0], 50, 10, params, 5)
            .unwrap();
        assert!(batch.meta.acceptance_rate.unwrap() > 0.95);
        for z in &batch.draws {
            assert!(z[0].abs() < 1e-6);
        }
    }

    #[test]
    fn mala_is_seed_deterministic() {
        let model = simple_model();
        let a = model
            .posterior_mala(&[2.0, 0.0], 20, 20, MalaParams::default(), 9)
            .unwrap();
        let b = model
            .posterior_mala(&[2.0, 0.0], 20, 20, MalaParams::default(), 9)
            .unwrap();
        assert_eq!(a.draws, b.draws);
    }

    #[test]
    fn perturbation_hits_first_entry_only() {
        let model = PpcaModel::new(array![[0.5, 0.2], [0.1, 0.4], [0.3, 0.3]], 1.0).unwrap();
        let shifted = model.perturbed(2.0).unwrap();
        assert_eq!(shifted.weights()[[0, 0]], 2.5);
        assert_eq!(shifted.weights()[[0, 1]], 0.2);
        assert_eq!(shifted.weights()[[1, 0]], 0.1);
    }
}
