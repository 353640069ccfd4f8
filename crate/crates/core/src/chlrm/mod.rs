//! Clustered hierarchical linear regression.
//!
//! Group j belongs to cluster γ_j ~ Cat(ω); y_j ~ N(X_j β_{γ_j}, σ²_{γ_j} I).
//! Cluster parameters share a hierarchy: β_k ~ N(β, Σ), σ²_k ~ IG(ν₀/2, ν₀ξ²/2),
//! with ω ~ Dir(α₀), β ~ N(μ₀, Λ₀), Σ ~ IW(n₀, S₀) and ξ² ~ Gamma(a₀, b₀).
//!
//! Cluster indices are 0-based in memory and 1-based in written output.

mod gibbs;
mod svi;
mod vi;

pub use gibbs::chlrm_gibbs;
pub use svi::{chlrm_svi, full_intermediate, svi_intermediate, svi_step, GlobalNatural};
pub use vi::{cavi_step, chlrm_cavi, chlrm_elbo, chlrm_elbo_terms, initial_state, ChlrmElboTerms};

use nalgebra::{DMatrix, DVector};

use crate::config::DrawMeta;
use crate::dataset::{GroupedDataset, Ols};
use crate::error::{Error, Result};
use crate::exp_family::{
    categorical_sample, dirichlet_sample, gamma_sample, invgamma_sample, invwishart_sample, ln_gamma,
    mvn_sample_chol, DirichletParams, GammaParams, InvGammaParams, InvWishartParams, SeededRng, HALF_LN_2PI,
};
use crate::linalg::Cholesky;

/// Hyperparameters of the clustered hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct ChlrmPrior {
    pub mu0: DVector<f64>,
    pub lambda0: DMatrix<f64>,
    pub n0: f64,
    pub s0: DMatrix<f64>,
    pub nu0: f64,
    pub a0: f64,
    pub b0: f64,
    pub alpha0: Vec<f64>,
}

impl ChlrmPrior {
    pub fn validate(&self) -> Result<()> {
        let p = self.mu0.len();
        for (name, m) in [("Lambda0", &self.lambda0), ("S0", &self.s0)] {
            if m.nrows() != p || m.ncols() != p {
                return Err(Error::Dimension(format!("{name} must be {p}x{p}")));
            }
            Cholesky::new(m, name)?;
        }
        if !(self.n0 > p as f64 - 1.0) {
            return Err(Error::invalid("n0", format!("must exceed p - 1 = {}", p as f64 - 1.0)));
        }
        for (name, v) in [("nu0", self.nu0), ("a0", self.a0), ("b0", self.b0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if self.alpha0.is_empty() || self.alpha0.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::invalid("alpha0", "needs K positive entries"));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.mu0.len()
    }

    pub fn k(&self) -> usize {
        self.alpha0.len()
    }

    pub(crate) fn check_data(&self, data: &GroupedDataset) -> Result<()> {
        self.validate()?;
        if data.p() != self.p() {
            return Err(Error::Dimension(format!(
                "prior has p = {} but the data have {} columns",
                self.p(),
                data.p()
            )));
        }
        Ok(())
    }
}

/// μ₀ = stacked OLS, Λ₀ = N σ̂² (XᵀX)⁻¹, n₀ = p + 2, S₀ = Λ₀, ν₀ = 1,
/// a₀ = 1, b₀ = 1/σ̂² (so E[ξ²] = σ̂²), α₀ = (1/K, …, 1/K).
pub fn chlrm_default_prior(data: &GroupedDataset, k: usize) -> Result<ChlrmPrior> {
    if k == 0 {
        return Err(Error::invalid("K", "must be at least 1"));
    }
    let stacked = data.stacked();
    let ols = Ols::fit(&stacked)?;
    let lambda0 = &ols.xtx_inv * (stacked.n() as f64 * ols.sigma2);
    let prior = ChlrmPrior {
        mu0: ols.beta,
        s0: lambda0.clone(),
        lambda0,
        n0: data.p() as f64 + 2.0,
        nu0: 1.0,
        a0: 1.0,
        b0: 1.0 / ols.sigma2,
        alpha0: vec![1.0 / k as f64; k],
    };
    prior.validate()?;
    Ok(prior)
}

/// Stacked-OLS residual variance, falling back to the response variance.
pub(crate) fn pilot_variance(data: &GroupedDataset) -> f64 {
    match Ols::fit(&data.stacked()) {
        Ok(o) if o.sigma2 > 0.0 => o.sigma2,
        _ => {
            let y = data.pooled_y();
            let n = y.len() as f64;
            let m = y.iter().sum::<f64>() / n;
            (y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).max(1e-12)
        }
    }
}

/// One joint draw of every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ChlrmSample {
    pub gamma: Vec<usize>,
    pub omega: Vec<f64>,
    pub betas: Vec<DVector<f64>>,
    pub sigma2: Vec<f64>,
    pub beta: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub xi2: f64,
}

impl ChlrmSample {
    pub fn k(&self) -> usize {
        self.omega.len()
    }

    /// Groups per cluster.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k()];
        for &g in &self.gamma {
            c[g] += 1;
        }
        c
    }

    /// Number of nonempty clusters κ.
    pub fn kappa(&self) -> usize {
        self.counts().iter().filter(|&&c| c > 0).count()
    }

    /// Reorder clusters so that `order[new] = old`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut inv = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        Self {
            gamma: self.gamma.iter().map(|&g| inv[g]).collect(),
            omega: order.iter().map(|&o| self.omega[o]).collect(),
            betas: order.iter().map(|&o| self.betas[o].clone()).collect(),
            sigma2: order.iter().map(|&o| self.sigma2[o]).collect(),
            beta: self.beta.clone(),
            sigma: self.sigma.clone(),
            xi2: self.xi2,
        }
    }
}

/// Retained draws of the clustered model.
#[derive(Debug, Clone, PartialEq)]
pub struct ChlrmDraws {
    pub k: usize,
    pub p: usize,
    pub m: usize,
    pub samples: Vec<ChlrmSample>,
    pub meta: DrawMeta,
    /// Log joint density per sweep (burn-in included); empty for variational draws.
    pub log_joint: Vec<f64>,
}

impl ChlrmDraws {
    pub fn n_draws(&self) -> usize {
        self.samples.len()
    }

    pub fn assignments(&self) -> Vec<Vec<usize>> {
        self.samples.iter().map(|s| s.gamma.clone()).collect()
    }

    pub fn kappas(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.kappa()).collect()
    }

    /// At most `max` draws spread evenly over the run.
    pub fn subsample(&self, max: usize) -> Self {
        let idx = crate::diagnostics::even_indices(self.n_draws(), max);
        self.with_samples(idx.iter().map(|&i| self.samples[i].clone()).collect())
    }

    fn with_samples(&self, samples: Vec<ChlrmSample>) -> Self {
        Self {
            k: self.k,
            p: self.p,
            m: self.m,
            samples,
            meta: self.meta,
            log_joint: self.log_joint.clone(),
        }
    }

    /// Within each draw, sort clusters by the first coordinate of β_k.
    /// Only per-cluster summaries need this; partitions are label-free.
    pub fn relabel_by_first_coordinate(&self) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let mut order: Vec<usize> = (0..s.k()).collect();
                order.sort_by(|&a, &b| s.betas[a][0].total_cmp(&s.betas[b][0]));
                s.permuted(&order)
            })
            .collect();
        self.with_samples(samples)
    }
}

/// Mean-field variational factors of the clustered model.
///
/// Gaussian factors also keep their natural parameters (precision and
/// precision × mean), which is the space the stochastic updates blend in.
#[derive(Debug, Clone, PartialEq)]
pub struct ChlrmVarState {
    /// m × K responsibilities.
    pub rho: DMatrix<f64>,
    pub alpha_omega: Vec<f64>,
    pub mu_k: Vec<DVector<f64>>,
    pub sigma_k: Vec<DMatrix<f64>>,
    pub prec_k: Vec<DMatrix<f64>>,
    pub h_k: Vec<DVector<f64>>,
    pub a_sig: Vec<f64>,
    pub b_sig: Vec<f64>,
    pub mu_beta: DVector<f64>,
    pub sigma_beta: DMatrix<f64>,
    pub prec_beta: DMatrix<f64>,
    pub h_beta: DVector<f64>,
    pub nu_sigma: f64,
    pub s_sigma: DMatrix<f64>,
    pub a_xi: f64,
    pub b_xi: f64,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the restart that produced this state.
    pub restart: usize,
}

impl ChlrmVarState {
    pub fn k(&self) -> usize {
        self.alpha_omega.len()
    }

    pub fn m(&self) -> usize {
        self.rho.nrows()
    }

    pub fn p(&self) -> usize {
        self.mu_beta.len()
    }

    pub fn elbo(&self) -> f64 {
        self.elbo_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// argmax_k ρ_jk per group (lowest index on exact ties).
    pub fn hard_assignments(&self) -> Vec<usize> {
        (0..self.m())
            .map(|j| {
                let row = self.rho.row(j);
                (0..self.k()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
            })
            .collect()
    }

    pub fn q_sigma2(&self, k: usize) -> InvGammaParams {
        InvGammaParams {
            shape: self.a_sig[k],
            scale: self.b_sig[k],
        }
    }

    pub fn q_xi(&self) -> GammaParams {
        GammaParams {
            shape: self.a_xi,
            rate: self.b_xi,
        }
    }

    pub fn q_sigma(&self) -> InvWishartParams {
        InvWishartParams {
            dof: self.nu_sigma,
            scale: self.s_sigma.clone(),
        }
    }

    /// Cluster permutation `order[new] = old` applied to every per-cluster quantity.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut s = self.clone();
        s.rho = DMatrix::from_fn(self.m(), self.k(), |j, k| self.rho[(j, order[k])]);
        s.alpha_omega = order.iter().map(|&o| self.alpha_omega[o]).collect();
        s.mu_k = order.iter().map(|&o| self.mu_k[o].clone()).collect();
        s.sigma_k = order.iter().map(|&o| self.sigma_k[o].clone()).collect();
        s.prec_k = order.iter().map(|&o| self.prec_k[o].clone()).collect();
        s.h_k = order.iter().map(|&o| self.h_k[o].clone()).collect();
        s.a_sig = order.iter().map(|&o| self.a_sig[o]).collect();
        s.b_sig = order.iter().map(|&o| self.b_sig[o]).collect();
        s
    }
}

/// Independent draws from every variational factor.
pub fn chlrm_sample_variational(state: &ChlrmVarState, n_draws: usize, seed: u64) -> Result<ChlrmDraws> {
    let k = state.k();
    let mut rng = SeededRng::new(seed);
    let chol_k = state
        .sigma_k
        .iter()
        .enumerate()
        .map(|(i, s)| Cholesky::new_jittered(s, "Sigma_beta_k").map_err(|e| e.with_context(format!("cluster {}", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    let chol_b = Cholesky::new_jittered(&state.sigma_beta, "Sigma_beta")?;
    let q_omega = DirichletParams::new(state.alpha_omega.clone())?;
    let q_sigma = InvWishartParams::new(state.nu_sigma, state.s_sigma.clone())?;
    let q_xi = GammaParams::new(state.a_xi, state.b_xi)?;
    let q_s2: Vec<InvGammaParams> = (0..k).map(|i| state.q_sigma2(i)).collect();
    for q in &q_s2 {
        InvGammaParams::new(q.shape, q.scale)?;
    }

    let mut samples = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let gamma = (0..state.m())
            .map(|j| {
                let row: Vec<f64> = state.rho.row(j).iter().copied().collect();
                categorical_sample(&mut rng, &row)
            })
            .collect::<Result<Vec<_>>>()?;
        let omega = dirichlet_sample(&mut rng, &q_omega);
        let betas = (0..k).map(|i| mvn_sample_chol(&mut rng, &state.mu_k[i], &chol_k[i])).collect();
        let sigma2 = q_s2.iter().map(|q| invgamma_sample(&mut rng, q)).collect();
        let beta = mvn_sample_chol(&mut rng, &state.mu_beta, &chol_b);
        let sigma = invwishart_sample(&mut rng, &q_sigma)?;
        let xi2 = gamma_sample(&mut rng, &q_xi);
        samples.push(ChlrmSample {
            gamma,
            omega,
            betas,
            sigma2,
            beta,
            sigma,
            xi2,
        });
    }
    Ok(ChlrmDraws {
        k,
        p: state.p(),
        m: state.m(),
        samples,
        meta: DrawMeta::variational(n_draws, seed),
        log_joint: Vec::new(),
    })
}

/// Precomputed prior quantities reused across sweeps.
pub(crate) struct PriorCache {
    pub lambda0_inv: DMatrix<f64>,
    pub h0: DVector<f64>,
    pub ln_det_lambda0: f64,
    pub ln_det_s0: f64,
    pub chol_lambda0: Cholesky,
}

impl PriorCache {
    pub fn new(prior: &ChlrmPrior) -> Result<Self> {
        let chol_lambda0 = Cholesky::new_jittered(&prior.lambda0, "Lambda0")?;
        let lambda0_inv = chol_lambda0.inverse();
        let h0 = &lambda0_inv * &prior.mu0;
        Ok(Self {
            ln_det_lambda0: chol_lambda0.ln_det(),
            ln_det_s0: Cholesky::new_jittered(&prior.s0, "S0")?.ln_det(),
            lambda0_inv,
            h0,
            chol_lambda0,
        })
    }
}

/// log p(y, γ, ω, {β_k}, {σ²_k}, β, Σ, ξ²) for one joint draw.
pub fn chlrm_log_joint(data: &GroupedDataset, prior: &ChlrmPrior, s: &ChlrmSample) -> Result<f64> {
    let cache = PriorCache::new(prior)?;
    log_joint_with(data, prior, &cache, s)
}

pub(crate) fn log_joint_with(data: &GroupedDataset, prior: &ChlrmPrior, cache: &PriorCache, s: &ChlrmSample) -> Result<f64> {
    let p = prior.p() as f64;
    let mut lj = 0.0;
    for (j, g) in data.groups().iter().enumerate() {
        let k = s.gamma[j];
        let st = g.stats();
        lj += -(st.n as f64) * (HALF_LN_2PI + 0.5 * s.sigma2[k].ln()) - 0.5 * st.rss(&s.betas[k]) / s.sigma2[k];
        lj += s.omega[k].max(f64::MIN_POSITIVE).ln();
    }
    let a_sum: f64 = prior.alpha0.iter().sum();
    lj += ln_gamma(a_sum) - prior.alpha0.iter().map(|&a| ln_gamma(a)).sum::<f64>()
        + prior
            .alpha0
            .iter()
            .zip(&s.omega)
            .map(|(a, w)| (a - 1.0) * w.max(f64::MIN_POSITIVE).ln())
            .sum::<f64>();

    let cs = Cholesky::new_jittered(&s.sigma, "Sigma")?;
    let sig_prior = InvGammaParams {
        shape: prior.nu0 / 2.0,
        scale: prior.nu0 * s.xi2 / 2.0,
    };
    for k in 0..s.k() {
        let z = cs.solve_lower(&(&s.betas[k] - &s.beta));
        lj += -p * HALF_LN_2PI - 0.5 * cs.ln_det() - 0.5 * z.norm_squared();
        lj += sig_prior.ln_pdf(s.sigma2[k]);
    }
    let z = cache.chol_lambda0.solve_lower(&(&s.beta - &prior.mu0));
    lj += -p * HALF_LN_2PI - 0.5 * cache.ln_det_lambda0 - 0.5 * z.norm_squared();
    lj += InvWishartParams {
        dof: prior.n0,
        scale: prior.s0.clone(),
    }
    .ln_pdf(&s.sigma)?;
    lj += GammaParams {
        shape: prior.a0,
        rate: prior.b0,
    }
    .ln_pdf(s.xi2);
    Ok(lj)
}
