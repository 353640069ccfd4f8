use nalgebra::DVector;
use rand::seq::index::sample as sample_indices;

use super::{log_joint_with, pilot_variance, ChlrmDraws, ChlrmPrior, ChlrmSample, PriorCache};
use crate::config::{DrawMeta, GibbsConfig};
use crate::dataset::{GroupedDataset, Ols, SuffStats};
use crate::error::{Error, Result};
use crate::exp_family::{
    categorical_sample_log, dirichlet_sample, gamma_sample, invgamma_sample, invwishart_sample,
    mvn_sample_precision, DirichletParams, GammaParams, InvGammaParams, InvWishartParams, SeededRng,
};
use crate::linalg::Cholesky;

/// Gibbs sampler sweeping γ, ω, {β_k}, {σ²_k}, β, Σ, ξ² in that order.
///
/// Empty clusters draw β_k and σ²_k from their conditional priors; the
/// population-level updates only use the κ nonempty clusters.
pub fn chlrm_gibbs(data: &GroupedDataset, prior: &ChlrmPrior, cfg: &GibbsConfig) -> Result<ChlrmDraws> {
    prior.check_data(data)?;
    cfg.validate()?;
    let k = prior.k();
    let p = prior.p();
    let m = data.m();
    let cache = PriorCache::new(prior)?;
    let mut rng = SeededRng::new(cfg.seed);
    let mut state = initial_sample(data, prior, &mut rng)?;

    let mut samples = Vec::with_capacity(cfg.retained());
    let mut log_joint = Vec::with_capacity(cfg.n_samples);
    let mut logw = vec![0.0; k];
    for t in 1..=cfg.n_samples {
        let ctx = |e: Error, what: &str| e.with_context(format!("{what}, iteration {t}"));

        // γ_j
        let ln_omega: Vec<f64> = state.omega.iter().map(|w| w.ln()).collect();
        let ln_s2: Vec<f64> = state.sigma2.iter().map(|s| s.ln()).collect();
        for j in 0..m {
            let st = data.group(j).stats();
            for c in 0..k {
                logw[c] = ln_omega[c] - 0.5 * st.n as f64 * ln_s2[c] - 0.5 * st.rss(&state.betas[c]) / state.sigma2[c];
            }
            state.gamma[j] = categorical_sample_log(&mut rng, &logw);
        }

        // ω
        let counts = state.counts();
        let conc = prior.alpha0.iter().zip(&counts).map(|(a, &n)| a + n as f64).collect();
        state.omega = dirichlet_sample(&mut rng, &DirichletParams { conc });

        // β_k
        let mut cluster = vec![SuffStats::zeros(p); k];
        for j in 0..m {
            cluster[state.gamma[j]].add(data.group(j).stats());
        }
        let sigma_c = Cholesky::new_jittered(&state.sigma, "Sigma").map_err(|e| ctx(e, "Sigma"))?;
        let sigma_inv = sigma_c.inverse();
        let prior_h = &sigma_inv * &state.beta;
        for c in 0..k {
            let st = &cluster[c];
            let prec = &sigma_inv + &st.xtx / state.sigma2[c];
            let h = &prior_h + &st.xty / state.sigma2[c];
            let pc = Cholesky::new_jittered(&prec, "V_k^-1").map_err(|e| ctx(e, &format!("beta_{}", c + 1)))?;
            state.betas[c] = mvn_sample_precision(&mut rng, &h, &pc);
        }

        // σ²_k
        for c in 0..k {
            let st = &cluster[c];
            let q = InvGammaParams {
                shape: (prior.nu0 + st.n as f64) / 2.0,
                scale: (prior.nu0 * state.xi2 + st.rss(&state.betas[c])) / 2.0,
            };
            state.sigma2[c] = invgamma_sample(&mut rng, &q);
        }

        // β
        let nonempty: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
        let kappa = nonempty.len() as f64;
        let sum_beta = nonempty.iter().fold(DVector::zeros(p), |acc, &c| acc + &state.betas[c]);
        let prec = &cache.lambda0_inv + &sigma_inv * kappa;
        let h = &cache.h0 + &sigma_inv * sum_beta;
        let pc = Cholesky::new_jittered(&prec, "V_beta^-1").map_err(|e| ctx(e, "beta"))?;
        state.beta = mvn_sample_precision(&mut rng, &h, &pc);

        // Σ
        let mut scale = prior.s0.clone();
        for &c in &nonempty {
            let d = &state.betas[c] - &state.beta;
            scale += &d * d.transpose();
        }
        let iw = InvWishartParams {
            dof: prior.n0 + kappa,
            scale: crate::linalg::symmetrize(&scale),
        };
        state.sigma = invwishart_sample(&mut rng, &iw).map_err(|e| ctx(e, "Sigma"))?;

        // ξ²
        let inv_sum: f64 = nonempty.iter().map(|&c| 1.0 / state.sigma2[c]).sum();
        state.xi2 = gamma_sample(
            &mut rng,
            &GammaParams {
                shape: prior.a0 + kappa * prior.nu0 / 2.0,
                rate: prior.b0 + prior.nu0 / 2.0 * inv_sum,
            },
        );

        log_joint.push(log_joint_with(data, prior, &cache, &state)?);
        if cfg.keeps(t) {
            samples.push(state.clone());
        }
    }
    Ok(ChlrmDraws {
        k,
        p,
        m,
        samples,
        meta: DrawMeta::mcmc(cfg),
        log_joint,
    })
}

/// β_k from OLS on distinct random groups (μ₀ when a group cannot support a fit),
/// σ²_k = σ̂², uniform ω, β = μ₀, Σ at the prior mode S₀/(n₀ + p + 1), ξ² = σ̂².
fn initial_sample(data: &GroupedDataset, prior: &ChlrmPrior, rng: &mut SeededRng) -> Result<ChlrmSample> {
    let k = prior.k();
    let p = prior.p();
    let m = data.m();
    let s2 = pilot_variance(data);
    let seeds = sample_indices(rng, m, k.min(m)).into_vec();
    let betas = (0..k)
        .map(|c| {
            seeds
                .get(c)
                .and_then(|&j| Ols::fit(data.group(j)).ok())
                .map(|o| o.beta)
                .unwrap_or_else(|| prior.mu0.clone())
        })
        .collect();
    let sigma = &prior.s0 / (prior.n0 + p as f64 + 1.0);
    Cholesky::new_jittered(&sigma, "initial Sigma")?;
    Ok(ChlrmSample {
        gamma: vec![0; m],
        omega: vec![1.0 / k as f64; k],
        betas,
        sigma2: vec![s2; k],
        beta: prior.mu0.clone(),
        sigma,
        xi2: s2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chlrm::chlrm_default_prior;
    use crate::dataio::{simulate, SimulationSpec};

    #[test]
    fn counts_are_conserved_and_draws_valid() {
        let (data, _) = simulate(&SimulationSpec::paper_chlrm(11)).unwrap();
        let prior = chlrm_default_prior(&data, 4).unwrap();
        let cfg = GibbsConfig {
            n_samples: 300,
            burn_in: 100,
            thin: 2,
            seed: 3,
        };
        let d = chlrm_gibbs(&data, &prior, &cfg).unwrap();
        assert_eq!(d.n_draws(), 100);
        for s in &d.samples {
            assert_eq!(s.counts().iter().sum::<usize>(), data.m());
            assert!((s.omega.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.sigma2.iter().all(|v| *v > 0.0) && s.xi2 > 0.0);
            assert!(Cholesky::new(&s.sigma, "Sigma").is_ok());
        }
    }

    #[test]
    fn more_clusters_than_groups_is_safe() {
        let (data, _) = simulate(&SimulationSpec::paper_chlrm(12)).unwrap();
        let prior = chlrm_default_prior(&data, 20).unwrap();
        let cfg = GibbsConfig {
            n_samples: 200,
            burn_in: 50,
            thin: 1,
            seed: 4,
        };
        let d = chlrm_gibbs(&data, &prior, &cfg).unwrap();
        assert!(d.kappas().iter().all(|&k| k <= data.m()));
    }

    #[test]
    fn reproducible_given_seed() {
        let (data, _) = simulate(&SimulationSpec::paper_chlrm(13)).unwrap();
        let prior = chlrm_default_prior(&data, 3).unwrap();
        let cfg = GibbsConfig {
            n_samples: 50,
            burn_in: 10,
            thin: 1,
            seed: 9,
        };
        assert_eq!(chlrm_gibbs(&data, &prior, &cfg).unwrap(), chlrm_gibbs(&data, &prior, &cfg).unwrap());
    }
}
