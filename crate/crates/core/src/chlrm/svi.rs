//! Stochastic variational inference for the clustered model.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;

use super::vi::{
    beta_k_target, beta_target, elbo_terms_with, initial_state_with, omega_target, sigma2_k_target, sigma_target,
    update_globals, update_rho_rows, weighted_stats, xi_target, WeightedStats,
};
use super::{ChlrmPrior, ChlrmVarState, PriorCache};
use crate::config::SviConfig;
use crate::dataset::GroupedDataset;
use crate::error::Result;
use crate::exp_family::{derive_seed, SeededRng};
use crate::linalg::Cholesky;

/// Stream offset separating minibatch draws from the initialisation stream.
const MINIBATCH_STREAM: u64 = 1 << 32;

/// Robbins–Monro SVI. Initialisation matches the first coordinate-ascent
/// restart with the same seed; minibatches come from a separate stream.
pub fn chlrm_svi(data: &GroupedDataset, prior: &ChlrmPrior, cfg: &SviConfig) -> Result<ChlrmVarState> {
    prior.check_data(data)?;
    cfg.validate(data.m())?;
    let cache = PriorCache::new(prior)?;
    let mut state = initial_state_with(data, prior, &cache, derive_seed(cfg.seed, 0))?;
    let mut rng = SeededRng::new(derive_seed(cfg.seed, MINIBATCH_STREAM));
    let mut prev = elbo_terms_with(&state, data, prior, &cache)?.total();
    state.elbo_trace.push(prev);
    for t in 1..=cfg.iters {
        step_with(&mut state, data, prior, &cache, cfg, t, &mut rng)
            .map_err(|e| e.with_context(format!("SVI iteration {t}")))?;
        let elbo = elbo_terms_with(&state, data, prior, &cache)?.total();
        state.elbo_trace.push(elbo);
        state.iterations = t;
        if cfg.rel_tol > 0.0 && ((elbo - prev) / elbo.abs()).abs() < cfg.rel_tol {
            state.converged = true;
            break;
        }
        prev = elbo;
    }
    Ok(state)
}

/// One SVI iteration: draw a minibatch, refresh its responsibilities, then
/// blend every global factor towards the m/|S|-scaled update with step (t + τ)^{−χ}.
pub fn svi_step(
    state: &mut ChlrmVarState,
    data: &GroupedDataset,
    prior: &ChlrmPrior,
    cfg: &SviConfig,
    t: usize,
    rng: &mut SeededRng,
) -> Result<()> {
    cfg.validate(data.m())?;
    let cache = PriorCache::new(prior)?;
    step_with(state, data, prior, &cache, cfg, t, rng)
}

fn step_with(
    state: &mut ChlrmVarState,
    data: &GroupedDataset,
    prior: &ChlrmPrior,
    cache: &PriorCache,
    cfg: &SviConfig,
    t: usize,
    rng: &mut SeededRng,
) -> Result<()> {
    let m = data.m();
    let mut batch = sample_indices(rng, m, cfg.minibatch).into_vec();
    batch.sort_unstable();
    update_rho_rows(state, data, &batch)?;
    let scale = m as f64 / batch.len() as f64;
    let stats = weighted_stats(&state.rho, data, &batch, scale);
    update_globals(state, &stats, prior, cache, Some(cfg.step(t)))
}

/// Intermediate global parameters in the space SVI blends in.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalNatural {
    pub alpha: Vec<f64>,
    pub prec_k: Vec<DMatrix<f64>>,
    pub h_k: Vec<DVector<f64>>,
    pub a_k: Vec<f64>,
    pub b_k: Vec<f64>,
    pub prec_beta: DMatrix<f64>,
    pub h_beta: DVector<f64>,
    pub s_sigma: DMatrix<f64>,
    pub b_xi: f64,
}

impl GlobalNatural {
    /// All entries in a fixed order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.alpha.clone();
        for (p, h) in self.prec_k.iter().zip(&self.h_k) {
            v.extend(p.iter());
            v.extend(h.iter());
        }
        v.extend(&self.a_k);
        v.extend(&self.b_k);
        v.extend(self.prec_beta.iter());
        v.extend(self.h_beta.iter());
        v.extend(self.s_sigma.iter());
        v.push(self.b_xi);
        v
    }
}

/// Intermediate parameters from `minibatch` with every other factor held at
/// `state`. Responsibilities of the batch are refreshed first.
pub fn svi_intermediate(
    state: &ChlrmVarState,
    data: &GroupedDataset,
    prior: &ChlrmPrior,
    minibatch: &[usize],
) -> Result<GlobalNatural> {
    prior.check_data(data)?;
    let cache = PriorCache::new(prior)?;
    let mut batch = minibatch.to_vec();
    batch.sort_unstable();
    let mut s = state.clone();
    update_rho_rows(&mut s, data, &batch)?;
    let stats = weighted_stats(&s.rho, data, &batch, data.m() as f64 / batch.len() as f64);
    intermediate(&s, prior, &cache, &stats)
}

/// The same with every group in the batch.
pub fn full_intermediate(state: &ChlrmVarState, data: &GroupedDataset, prior: &ChlrmPrior) -> Result<GlobalNatural> {
    let all: Vec<usize> = (0..data.m()).collect();
    svi_intermediate(state, data, prior, &all)
}

fn intermediate(state: &ChlrmVarState, prior: &ChlrmPrior, cache: &PriorCache, stats: &[WeightedStats]) -> Result<GlobalNatural> {
    let k = state.k();
    let e_sigma_inv = Cholesky::new_jittered(&state.s_sigma, "S_Sigma")?.inverse() * state.nu_sigma;
    let mut prec_k = Vec::with_capacity(k);
    let mut h_k = Vec::with_capacity(k);
    let mut a_k = Vec::with_capacity(k);
    let mut b_k = Vec::with_capacity(k);
    for c in 0..k {
        let (p, h) = beta_k_target(state, &e_sigma_inv, &stats[c], c);
        prec_k.push(p);
        h_k.push(h);
        let (a, b) = sigma2_k_target(state, prior, &stats[c], c);
        a_k.push(a);
        b_k.push(b);
    }
    let (prec_beta, h_beta) = beta_target(state, cache, &e_sigma_inv);
    Ok(GlobalNatural {
        alpha: omega_target(prior, stats),
        prec_k,
        h_k,
        a_k,
        b_k,
        prec_beta,
        h_beta,
        s_sigma: sigma_target(state, prior),
        b_xi: xi_target(state, prior),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chlrm::{cavi_step, chlrm_default_prior, initial_state};
    use crate::config::SviConfig;
    use crate::dataio::{simulate, SimulationSpec};

    #[test]
    fn full_batch_unit_step_matches_cavi_sweep() {
        let (data, _) = simulate(&SimulationSpec::paper_chlrm(4)).unwrap();
        let prior = chlrm_default_prior(&data, 3).unwrap();
        let init = initial_state(&data, &prior, 17).unwrap();
        let mut a = init.clone();
        cavi_step(&mut a, &data, &prior).unwrap();
        let cfg = SviConfig {
            minibatch: data.m(),
            tau: 0.0,
            chi: 1.0,
            iters: 1,
            seed: 0,
            rel_tol: 0.0,
        };
        let mut b = init;
        svi_step(&mut b, &data, &prior, &cfg, 1, &mut SeededRng::new(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn svi_runs_and_keeps_invariants() {
        let (data, _) = simulate(&SimulationSpec::paper_chlrm(5)).unwrap();
        let prior = chlrm_default_prior(&data, 3).unwrap();
        let cfg = SviConfig {
            minibatch: 5,
            tau: 1.0,
            chi: 0.7,
            iters: 30,
            seed: 2,
            rel_tol: 0.0,
        };
        let s = chlrm_svi(&data, &prior, &cfg).unwrap();
        assert_eq!(s.elbo_trace.len(), 31);
        for j in 0..data.m() {
            assert!((s.rho.row(j).sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(s, chlrm_svi(&data, &prior, &cfg).unwrap());
    }

    #[test]
    fn minibatch_intermediates_average_to_full_update() {
        let spec = SimulationSpec {
            m: 4,
            n_j: 10,
            ..SimulationSpec::paper_chlrm(21)
        };
        let (data, _) = simulate(&spec).unwrap();
        let prior = chlrm_default_prior(&data, 3).unwrap();
        let mut state = initial_state(&data, &prior, 2).unwrap();
        cavi_step(&mut state, &data, &prior).unwrap();
        let full = full_intermediate(&state, &data, &prior).unwrap().flatten();
        let mut mean = vec![0.0; full.len()];
        for i in 0..4 {
            for j in i + 1..4 {
                let v = svi_intermediate(&state, &data, &prior, &[i, j]).unwrap().flatten();
                mean.iter_mut().zip(v).for_each(|(m, x)| *m += x / 6.0);
            }
        }
        for (i, (m, f)) in mean.iter().zip(&full).enumerate() {
            assert!((m - f).abs() <= 1e-10 * f.abs(), "entry {i}: {m} vs {f}");
        }
    }

    #[test]
    fn elbo_ends_above_its_start_on_the_benchmark() {
        let (data, _) = simulate(&SimulationSpec::paper_chlrm(15)).unwrap();
        let prior = chlrm_default_prior(&data, 3).unwrap();
        for seed in 0..4 {
            let cfg = SviConfig {
                minibatch: 12,
                tau: 25.8,
                chi: 0.7,
                iters: 15,
                seed,
                rel_tol: 0.0,
            };
            let s = chlrm_svi(&data, &prior, &cfg).unwrap();
            assert!(s.elbo() > s.elbo_trace[0], "seed {seed}");
        }
    }
}
