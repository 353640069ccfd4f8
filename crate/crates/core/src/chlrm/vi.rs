//! Coordinate-ascent updates and the ELBO of the clustered model.
//!
//! The global step is written once and shared with the stochastic variant:
//! each factor's update is computed from the current state and then either
//! assigned (coordinate ascent) or blended with a step size (SVI).

use nalgebra::{DMatrix, DVector};

use super::{pilot_variance, ChlrmPrior, ChlrmVarState, PriorCache};
use crate::config::{CaviConfig, ELBO_DECREASE_TOL};
use crate::dataset::GroupedDataset;
use crate::error::{Error, Result};
use crate::exp_family::{
    derive_seed, dirichlet_elog_raw, dirichlet_sample, invwishart_log_norm, ln_gamma, mv_digamma, mvn_neg_entropy,
    softmax_in_place, DirichletParams, SeededRng, HALF_LN_2PI,
};
use crate::linalg::{symmetrize, trace_of_product, Cholesky};

/// Responsibility-weighted sufficient statistics of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct WeightedStats {
    pub sum_rho: f64,
    pub sum_rho_n: f64,
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
}

impl WeightedStats {
    /// Σ_j ρ_jk E‖y_j − X_j β_k‖².
    pub fn expected_rss(&self, mu: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        self.yty - 2.0 * mu.dot(&self.xty) + mu.dot(&(&self.xtx * mu)) + trace_of_product(&self.xtx, cov)
    }
}

/// Statistics over `groups` (ascending), multiplied by `scale`.
pub(crate) fn weighted_stats(rho: &DMatrix<f64>, data: &GroupedDataset, groups: &[usize], scale: f64) -> Vec<WeightedStats> {
    let p = data.p();
    (0..rho.ncols())
        .map(|k| {
            let mut ws = WeightedStats {
                sum_rho: 0.0,
                sum_rho_n: 0.0,
                xtx: DMatrix::zeros(p, p),
                xty: DVector::zeros(p),
                yty: 0.0,
            };
            for &j in groups {
                let r = rho[(j, k)];
                let st = data.group(j).stats();
                ws.sum_rho += r;
                ws.sum_rho_n += r * st.n as f64;
                ws.xtx += &st.xtx * r;
                ws.xty += &st.xty * r;
                ws.yty += r * st.yty;
            }
            ws.sum_rho *= scale;
            ws.sum_rho_n *= scale;
            ws.xtx *= scale;
            ws.xty *= scale;
            ws.yty *= scale;
            ws
        })
        .collect()
}

/// Expectations under the current factors that the updates consume.
pub(crate) struct Moments {
    pub e_inv_s2: Vec<f64>,
    pub e_log_s2: Vec<f64>,
    pub e_log_omega: Vec<f64>,
    pub e_sigma_inv: DMatrix<f64>,
    pub e_logdet_sigma: f64,
    pub e_xi: f64,
    pub e_log_xi: f64,
}

impl Moments {
    pub fn of(state: &ChlrmVarState) -> Result<Self> {
        let k = state.k();
        let p = state.p();
        let cs = Cholesky::new_jittered(&state.s_sigma, "S_Sigma")?;
        Ok(Self {
            e_inv_s2: (0..k).map(|i| state.a_sig[i] / state.b_sig[i]).collect(),
            e_log_s2: (0..k).map(|i| state.q_sigma2(i).mean_log()).collect(),
            e_log_omega: dirichlet_elog_raw(&state.alpha_omega),
            e_sigma_inv: cs.inverse() * state.nu_sigma,
            e_logdet_sigma: cs.ln_det() - mv_digamma(p, state.nu_sigma) - p as f64 * 2f64.ln(),
            e_xi: state.a_xi / state.b_xi,
            e_log_xi: state.q_xi().mean_log(),
        })
    }
}

/// Local step: refresh ρ_j· for the listed groups from the current globals.
pub(crate) fn update_rho_rows(state: &mut ChlrmVarState, data: &GroupedDataset, groups: &[usize]) -> Result<()> {
    let k = state.k();
    let e_log_omega = dirichlet_elog_raw(&state.alpha_omega);
    let e_log_s2: Vec<f64> = (0..k).map(|i| state.q_sigma2(i).mean_log()).collect();
    let e_inv_s2: Vec<f64> = (0..k).map(|i| state.a_sig[i] / state.b_sig[i]).collect();
    let mut logw = vec![0.0; k];
    for &j in groups {
        let st = data.group(j).stats();
        for c in 0..k {
            let erss = st.expected_rss(&state.mu_k[c], &state.sigma_k[c]);
            logw[c] = -0.5 * st.n as f64 * e_log_s2[c] + e_log_omega[c] - 0.5 * e_inv_s2[c] * erss;
        }
        if logw.iter().any(|v| v.is_nan()) {
            return Err(Error::Domain(format!("responsibility of group {} is NaN", j + 1)));
        }
        softmax_in_place(&mut logw);
        for c in 0..k {
            state.rho[(j, c)] = logw[c];
        }
    }
    Ok(())
}

// Per-factor targets. Each is the coordinate-ascent optimum given the rest of
// `state` and the (possibly minibatch-scaled) statistics.

pub(crate) fn omega_target(prior: &ChlrmPrior, stats: &[WeightedStats]) -> Vec<f64> {
    prior.alpha0.iter().zip(stats).map(|(a, s)| a + s.sum_rho).collect()
}

pub(crate) fn beta_k_target(
    state: &ChlrmVarState,
    e_sigma_inv: &DMatrix<f64>,
    stats: &WeightedStats,
    k: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let e = state.a_sig[k] / state.b_sig[k];
    let prec = e_sigma_inv + &stats.xtx * e;
    let h = e_sigma_inv * &state.mu_beta + &stats.xty * e;
    (prec, h)
}

pub(crate) fn sigma2_k_target(state: &ChlrmVarState, prior: &ChlrmPrior, stats: &WeightedStats, k: usize) -> (f64, f64) {
    let e_xi = state.a_xi / state.b_xi;
    let a = (prior.nu0 + stats.sum_rho_n) / 2.0;
    let b = (prior.nu0 * e_xi + stats.expected_rss(&state.mu_k[k], &state.sigma_k[k])) / 2.0;
    (a, b)
}

pub(crate) fn beta_target(
    state: &ChlrmVarState,
    cache: &PriorCache,
    e_sigma_inv: &DMatrix<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let k = state.k() as f64;
    let sum_mu = state.mu_k.iter().fold(DVector::zeros(state.p()), |acc, m| acc + m);
    (&cache.lambda0_inv + e_sigma_inv * k, &cache.h0 + e_sigma_inv * sum_mu)
}

pub(crate) fn sigma_target(state: &ChlrmVarState, prior: &ChlrmPrior) -> DMatrix<f64> {
    let mut s = prior.s0.clone();
    for k in 0..state.k() {
        let d = &state.mu_k[k] - &state.mu_beta;
        s += &d * d.transpose() + &state.sigma_k[k] + &state.sigma_beta;
    }
    symmetrize(&s)
}

pub(crate) fn xi_target(state: &ChlrmVarState, prior: &ChlrmPrior) -> f64 {
    let sum: f64 = (0..state.k()).map(|k| state.a_sig[k] / state.b_sig[k]).sum();
    prior.b0 + prior.nu0 / 2.0 * sum
}

fn mix(old: f64, new: f64, step: Option<f64>) -> f64 {
    match step {
        None => new,
        Some(r) => (1.0 - r) * old + r * new,
    }
}

fn mix_vec(old: &DVector<f64>, new: DVector<f64>, step: Option<f64>) -> DVector<f64> {
    match step {
        None => new,
        Some(r) => old * (1.0 - r) + new * r,
    }
}

fn mix_mat(old: &DMatrix<f64>, new: DMatrix<f64>, step: Option<f64>) -> DMatrix<f64> {
    match step {
        None => new,
        Some(r) => old * (1.0 - r) + new * r,
    }
}

/// (μ, Σ) from natural parameters (precision, precision × mean).
fn gaussian_from_natural(prec: &DMatrix<f64>, h: &DVector<f64>, what: &str) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let c = Cholesky::new_jittered(prec, what)?;
    Ok((c.solve(h), c.inverse()))
}

/// Global step in the order ω, {β_k}, {σ²_k}, β, Σ, ξ². `step = None`
/// assigns each target; `Some(r)` blends it with weight r.
pub(crate) fn update_globals(
    state: &mut ChlrmVarState,
    stats: &[WeightedStats],
    prior: &ChlrmPrior,
    cache: &PriorCache,
    step: Option<f64>,
) -> Result<()> {
    let k = state.k();
    let target = omega_target(prior, stats);
    state.alpha_omega = state
        .alpha_omega
        .iter()
        .zip(target)
        .map(|(&o, t)| mix(o, t, step))
        .collect();

    let e_sigma_inv = Cholesky::new_jittered(&state.s_sigma, "S_Sigma")?.inverse() * state.nu_sigma;
    for c in 0..k {
        let (prec, h) = beta_k_target(state, &e_sigma_inv, &stats[c], c);
        state.prec_k[c] = symmetrize(&mix_mat(&state.prec_k[c], prec, step));
        state.h_k[c] = mix_vec(&state.h_k[c], h, step);
        let (mu, cov) = gaussian_from_natural(&state.prec_k[c], &state.h_k[c], "Sigma_beta_k^-1")
            .map_err(|e| e.with_context(format!("q(beta_{})", c + 1)))?;
        state.mu_k[c] = mu;
        state.sigma_k[c] = cov;
    }

    for c in 0..k {
        let (a, b) = sigma2_k_target(state, prior, &stats[c], c);
        state.a_sig[c] = mix(state.a_sig[c], a, step);
        state.b_sig[c] = mix(state.b_sig[c], b, step);
    }

    let (prec, h) = beta_target(state, cache, &e_sigma_inv);
    state.prec_beta = symmetrize(&mix_mat(&state.prec_beta, prec, step));
    state.h_beta = mix_vec(&state.h_beta, h, step);
    let (mu, cov) = gaussian_from_natural(&state.prec_beta, &state.h_beta, "Sigma_beta^-1")
        .map_err(|e| e.with_context("q(beta)"))?;
    state.mu_beta = mu;
    state.sigma_beta = cov;

    state.nu_sigma = prior.n0 + k as f64;
    let s = sigma_target(state, prior);
    state.s_sigma = symmetrize(&mix_mat(&state.s_sigma, s, step));

    state.a_xi = prior.a0 + k as f64 * prior.nu0 / 2.0;
    state.b_xi = mix(state.b_xi, xi_target(state, prior), step);
    Ok(())
}

/// Random responsibilities (rows from Dir(1, …, 1)), cluster and population
/// Gaussians at N(μ₀, Λ₀), E[σ_k⁻²] = 1/σ̂², E[Σ⁻¹] = n₀ S₀⁻¹, q(ξ²) at its prior;
/// followed by one global step so every factor is consistent with ρ.
pub fn initial_state(data: &GroupedDataset, prior: &ChlrmPrior, seed: u64) -> Result<ChlrmVarState> {
    prior.check_data(data)?;
    let cache = PriorCache::new(prior)?;
    initial_state_with(data, prior, &cache, seed)
}

pub(crate) fn initial_state_with(
    data: &GroupedDataset,
    prior: &ChlrmPrior,
    cache: &PriorCache,
    seed: u64,
) -> Result<ChlrmVarState> {
    let k = prior.k();
    let m = data.m();
    let mut rng = SeededRng::new(seed);
    let flat = DirichletParams { conc: vec![1.0; k] };
    let mut rho = DMatrix::zeros(m, k);
    for j in 0..m {
        let row = dirichlet_sample(&mut rng, &flat);
        for c in 0..k {
            rho[(j, c)] = row[c];
        }
    }
    let s2 = pilot_variance(data);
    let nu_sigma = prior.n0 + k as f64;
    let mut state = ChlrmVarState {
        rho,
        alpha_omega: prior.alpha0.clone(),
        mu_k: vec![prior.mu0.clone(); k],
        sigma_k: vec![prior.lambda0.clone(); k],
        prec_k: vec![cache.lambda0_inv.clone(); k],
        h_k: vec![cache.h0.clone(); k],
        a_sig: vec![1.0; k],
        b_sig: vec![s2; k],
        mu_beta: prior.mu0.clone(),
        sigma_beta: prior.lambda0.clone(),
        prec_beta: cache.lambda0_inv.clone(),
        h_beta: cache.h0.clone(),
        nu_sigma,
        s_sigma: &prior.s0 * (nu_sigma / prior.n0),
        a_xi: prior.a0,
        b_xi: prior.b0,
        elbo_trace: Vec::new(),
        iterations: 0,
        converged: false,
        restart: 0,
    };
    let all: Vec<usize> = (0..m).collect();
    let stats = weighted_stats(&state.rho, data, &all, 1.0);
    update_globals(&mut state, &stats, prior, cache, None)?;
    Ok(state)
}

/// One full coordinate-ascent sweep: every ρ row, then every global factor.
pub fn cavi_step(state: &mut ChlrmVarState, data: &GroupedDataset, prior: &ChlrmPrior) -> Result<()> {
    let cache = PriorCache::new(prior)?;
    cavi_step_with(state, data, prior, &cache)
}

fn cavi_step_with(state: &mut ChlrmVarState, data: &GroupedDataset, prior: &ChlrmPrior, cache: &PriorCache) -> Result<()> {
    let all: Vec<usize> = (0..data.m()).collect();
    update_rho_rows(state, data, &all)?;
    let stats = weighted_stats(&state.rho, data, &all, 1.0);
    update_globals(state, &stats, prior, cache, None)
}

/// Coordinate ascent from `cfg.restarts` random initialisations; returns the
/// run with the highest final ELBO.
pub fn chlrm_cavi(data: &GroupedDataset, prior: &ChlrmPrior, cfg: &CaviConfig) -> Result<ChlrmVarState> {
    prior.check_data(data)?;
    cfg.validate()?;
    let cache = PriorCache::new(prior)?;
    let mut best: Option<ChlrmVarState> = None;
    for r in 0..cfg.restarts {
        let mut state = initial_state_with(data, prior, &cache, derive_seed(cfg.seed, r as u64))?;
        state.restart = r;
        let mut prev = f64::NEG_INFINITY;
        for iter in 1..=cfg.max_iter {
            cavi_step_with(&mut state, data, prior, &cache).map_err(|e| e.with_context(format!("iteration {iter}")))?;
            let elbo = elbo_terms_with(&state, data, prior, &cache)?.total();
            state.elbo_trace.push(elbo);
            state.iterations = iter;
            if prev.is_finite() {
                if elbo < prev - ELBO_DECREASE_TOL * prev.abs() {
                    return Err(Error::ElboDecrease {
                        iter,
                        previous: prev,
                        current: elbo,
                    });
                }
                if ((elbo - prev) / elbo.abs()).abs() < cfg.rel_tol {
                    state.converged = true;
                    break;
                }
            }
            prev = elbo;
        }
        if best.as_ref().map_or(true, |b| state.elbo() > b.elbo()) {
            best = Some(state);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// The ELBO split into its factor groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChlrmElboTerms {
    /// E log p(y | γ, β, σ²)
    pub loglik: f64,
    /// E log p(γ | ω) − E log q(γ)
    pub gamma: f64,
    /// E log p(ω) − E log q(ω)
    pub omega: f64,
    /// Σ_k E log p(β_k | β, Σ) − E log q(β_k)
    pub beta_k: f64,
    /// E log p(β) − E log q(β)
    pub beta: f64,
    /// E log p(Σ) − E log q(Σ)
    pub sigma: f64,
    /// Σ_k E log p(σ²_k | ξ²) − E log q(σ²_k)
    pub sigma2_k: f64,
    /// E log p(ξ²) − E log q(ξ²)
    pub xi: f64,
}

impl ChlrmElboTerms {
    pub fn total(&self) -> f64 {
        self.loglik + self.gamma + self.omega + self.beta_k + self.beta + self.sigma + self.sigma2_k + self.xi
    }
}

pub fn chlrm_elbo(state: &ChlrmVarState, data: &GroupedDataset, prior: &ChlrmPrior) -> Result<f64> {
    Ok(chlrm_elbo_terms(state, data, prior)?.total())
}

pub fn chlrm_elbo_terms(state: &ChlrmVarState, data: &GroupedDataset, prior: &ChlrmPrior) -> Result<ChlrmElboTerms> {
    prior.check_data(data)?;
    let cache = PriorCache::new(prior)?;
    elbo_terms_with(state, data, prior, &cache)
}

pub(crate) fn elbo_terms_with(
    state: &ChlrmVarState,
    data: &GroupedDataset,
    prior: &ChlrmPrior,
    cache: &PriorCache,
) -> Result<ChlrmElboTerms> {
    let k = state.k();
    let p = state.p();
    let pf = p as f64;
    let mo = Moments::of(state)?;

    let mut loglik = 0.0;
    let mut gamma = 0.0;
    for (j, g) in data.groups().iter().enumerate() {
        let st = g.stats();
        let n = st.n as f64;
        for c in 0..k {
            let r = state.rho[(j, c)];
            if r == 0.0 {
                continue;
            }
            let erss = st.expected_rss(&state.mu_k[c], &state.sigma_k[c]);
            loglik += r * (-n * HALF_LN_2PI - 0.5 * n * mo.e_log_s2[c] - 0.5 * mo.e_inv_s2[c] * erss);
            gamma += r * (mo.e_log_omega[c] - r.ln());
        }
    }

    let q_omega = DirichletParams {
        conc: state.alpha_omega.clone(),
    };
    let p_omega = DirichletParams {
        conc: prior.alpha0.clone(),
    };
    let omega = p_omega.expected_ln_pdf(&state.alpha_omega) - q_omega.neg_entropy();

    let mut beta_k = 0.0;
    for c in 0..k {
        let d = &state.mu_k[c] - &state.mu_beta;
        let second = &d * d.transpose() + &state.sigma_k[c] + &state.sigma_beta;
        let e_log_p = -pf * HALF_LN_2PI - 0.5 * mo.e_logdet_sigma - 0.5 * trace_of_product(&mo.e_sigma_inv, &second);
        let ln_det = Cholesky::new_jittered(&state.sigma_k[c], "Sigma_beta_k")?.ln_det();
        beta_k += e_log_p - mvn_neg_entropy(p, ln_det);
    }

    let d = &state.mu_beta - &prior.mu0;
    let e_log_p_beta = -pf * HALF_LN_2PI
        - 0.5 * cache.ln_det_lambda0
        - 0.5 * (d.dot(&(&cache.lambda0_inv * &d)) + trace_of_product(&cache.lambda0_inv, &state.sigma_beta));
    let ln_det_b = Cholesky::new_jittered(&state.sigma_beta, "Sigma_beta")?.ln_det();
    let beta = e_log_p_beta - mvn_neg_entropy(p, ln_det_b);

    let e_log_p_sigma = invwishart_log_norm(p, prior.n0, cache.ln_det_s0)
        - 0.5 * (prior.n0 + pf + 1.0) * mo.e_logdet_sigma
        - 0.5 * trace_of_product(&prior.s0, &mo.e_sigma_inv);
    let sigma = e_log_p_sigma - state.q_sigma().neg_entropy()?;

    let h = prior.nu0 / 2.0;
    let mut sigma2_k = 0.0;
    for c in 0..k {
        let e_log_p = h * h.ln() + h * mo.e_log_xi - ln_gamma(h) - (h + 1.0) * mo.e_log_s2[c] - h * mo.e_xi * mo.e_inv_s2[c];
        sigma2_k += e_log_p - state.q_sigma2(c).neg_entropy();
    }

    let e_log_p_xi = prior.a0 * prior.b0.ln() - ln_gamma(prior.a0) + (prior.a0 - 1.0) * mo.e_log_xi - prior.b0 * mo.e_xi;
    let xi = e_log_p_xi - state.q_xi().neg_entropy();

    Ok(ChlrmElboTerms {
        loglik,
        gamma,
        omega,
        beta_k,
        beta,
        sigma,
        sigma2_k,
        xi,
    })
}
