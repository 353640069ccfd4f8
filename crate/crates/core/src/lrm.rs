//! Bayesian linear regression y ~ N(Xβ, σ²I) with independent priors
//! β ~ N(β₀, Σ₀) and σ² ~ IG(ν₀/2, ν₀σ₀²/2).

use nalgebra::{DMatrix, DVector};

use crate::config::{CaviConfig, DrawMeta, GibbsConfig, ELBO_DECREASE_TOL};
use crate::dataset::{Ols, RegressionData, SuffStats};
use crate::error::{Error, Result};
use crate::exp_family::{
    invgamma_sample, mvn_neg_entropy, mvn_sample_chol, mvn_sample_precision, InvGammaParams, SeededRng,
    HALF_LN_2PI,
};
use crate::linalg::{trace_of_product, Cholesky};

/// Prior hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LrmPrior {
    pub beta0: DVector<f64>,
    pub sigma0: DMatrix<f64>,
    pub nu0: f64,
    pub sigma0_sq: f64,
}

impl LrmPrior {
    pub fn new(beta0: DVector<f64>, sigma0: DMatrix<f64>, nu0: f64, sigma0_sq: f64) -> Result<Self> {
        let prior = Self {
            beta0,
            sigma0,
            nu0,
            sigma0_sq,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma0.nrows() != self.beta0.len() || self.sigma0.ncols() != self.beta0.len() {
            return Err(Error::Dimension("Σ₀ must be p×p with p = len(β₀)".into()));
        }
        Cholesky::new(&self.sigma0, "Sigma0")?;
        if !(self.nu0 > 0.0) {
            return Err(Error::invalid("nu0", "must be positive"));
        }
        if !(self.sigma0_sq > 0.0) {
            return Err(Error::invalid("sigma0_sq", "must be positive"));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.beta0.len()
    }

    fn check_data(&self, data: &RegressionData) -> Result<()> {
        if data.p() != self.p() {
            return Err(Error::Dimension(format!(
                "prior has p = {} but design has {} columns",
                self.p(),
                data.p()
            )));
        }
        Ok(())
    }

    /// IG(ν₀/2, ν₀σ₀²/2) prior on σ².
    pub fn sigma2_prior(&self) -> InvGammaParams {
        InvGammaParams {
            shape: self.nu0 / 2.0,
            scale: self.nu0 * self.sigma0_sq / 2.0,
        }
    }
}

/// β₀ = β̂, Σ₀ = n σ̂² (XᵀX)⁻¹, ν₀ = 1, σ₀² = σ̂².
pub fn unit_info_prior(data: &RegressionData) -> Result<LrmPrior> {
    let ols = Ols::fit(data)?;
    let sigma0 = &ols.xtx_inv * (data.n() as f64 * ols.sigma2);
    LrmPrior::new(ols.beta, sigma0, 1.0, ols.sigma2)
}

/// β₀ = 0, Σ₀ = g σ̂² (XᵀX)⁻¹ (g = n when omitted), ν₀ = 1, σ₀² = σ̂².
pub fn zellner_prior(data: &RegressionData, g: Option<f64>) -> Result<LrmPrior> {
    let g = g.unwrap_or(data.n() as f64);
    if !(g > 0.0) {
        return Err(Error::invalid("g", format!("must be positive, got {g}")));
    }
    let ols = Ols::fit(data)?;
    let sigma0 = &ols.xtx_inv * (g * ols.sigma2);
    LrmPrior::new(DVector::zeros(data.p()), sigma0, 1.0, ols.sigma2)
}

/// Retained draws, one row each: β columns then σ².
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub draws: DMatrix<f64>,
    pub meta: DrawMeta,
    /// Log joint density at every sweep (burn-in included); empty for variational draws.
    pub log_joint: Vec<f64>,
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.draws.nrows()
    }

    pub fn p(&self) -> usize {
        self.draws.ncols() - 1
    }

    pub fn beta(&self, b: usize) -> DVector<f64> {
        DVector::from_iterator(self.p(), (0..self.p()).map(|c| self.draws[(b, c)]))
    }

    pub fn sigma2(&self, b: usize) -> f64 {
        self.draws[(b, self.p())]
    }

    /// Column means (β̄, σ̄²).
    pub fn mean(&self) -> DVector<f64> {
        let b = self.n_draws() as f64;
        DVector::from_iterator(self.draws.ncols(), self.draws.column_iter().map(|c| c.sum() / b))
    }

    /// Empirical (lo, hi) quantile interval of column `c`.
    pub fn interval(&self, c: usize, level: f64) -> (f64, f64) {
        let mut v: Vec<f64> = self.draws.column(c).iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let a = (1.0 - level) / 2.0;
        (crate::diagnostics::quantile_sorted(&v, a), crate::diagnostics::quantile_sorted(&v, 1.0 - a))
    }

    /// Every `stride`-spaced row, giving at most `max` evenly spread draws.
    pub fn subsample(&self, max: usize) -> Self {
        let idx = crate::diagnostics::even_indices(self.n_draws(), max);
        let draws = DMatrix::from_fn(idx.len(), self.draws.ncols(), |r, c| self.draws[(idx[r], c)]);
        Self {
            names: self.names.clone(),
            draws,
            meta: self.meta,
            log_joint: self.log_joint.clone(),
        }
    }
}

pub(crate) fn param_names(p: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..p).map(|i| format!("beta_{i}")).collect();
    names.push("sigma2".into());
    names
}

/// Pointwise log N(y_i | x_iᵀβ, σ²).
pub fn pointwise_loglik(data: &RegressionData, beta: &DVector<f64>, sigma2: f64) -> Vec<f64> {
    let fitted = data.x() * beta;
    let ln_s = sigma2.ln();
    data.y()
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| -HALF_LN_2PI - 0.5 * ln_s - 0.5 * (y - f) * (y - f) / sigma2)
        .collect()
}

fn loglik_from_stats(stats: &SuffStats, beta: &DVector<f64>, sigma2: f64) -> f64 {
    -(stats.n as f64) * (HALF_LN_2PI + 0.5 * sigma2.ln()) - 0.5 * stats.rss(beta) / sigma2
}

/// log p(y, β, σ²).
pub fn log_joint(data: &RegressionData, prior: &LrmPrior, beta: &DVector<f64>, sigma2: f64) -> Result<f64> {
    let c0 = Cholesky::new_jittered(&prior.sigma0, "Sigma0")?;
    Ok(log_joint_with(data.stats(), prior, &c0, beta, sigma2))
}

fn log_joint_with(stats: &SuffStats, prior: &LrmPrior, c0: &Cholesky, beta: &DVector<f64>, sigma2: f64) -> f64 {
    let p = prior.p() as f64;
    let z = c0.solve_lower(&(beta - &prior.beta0));
    let ln_prior_beta = -p * HALF_LN_2PI - 0.5 * c0.ln_det() - 0.5 * z.norm_squared();
    loglik_from_stats(stats, beta, sigma2) + ln_prior_beta + prior.sigma2_prior().ln_pdf(sigma2)
}

struct GibbsKernel {
    prec0: DMatrix<f64>,
    h0: DVector<f64>,
    c0: Cholesky,
}

impl GibbsKernel {
    fn new(prior: &LrmPrior) -> Result<Self> {
        let c0 = Cholesky::new_jittered(&prior.sigma0, "Sigma0")?;
        let prec0 = c0.inverse();
        let h0 = &prec0 * &prior.beta0;
        Ok(Self { prec0, h0, c0 })
    }

    fn draw_beta(&self, rng: &mut SeededRng, stats: &SuffStats, sigma2: f64, iter: usize) -> Result<DVector<f64>> {
        let prec = &self.prec0 + &stats.xtx / sigma2;
        let h = &self.h0 + &stats.xty / sigma2;
        let c = Cholesky::new_jittered(&prec, "V^-1").map_err(|e| e.with_context(format!("beta, iteration {iter}")))?;
        Ok(mvn_sample_precision(rng, &h, &c))
    }
}

/// Gibbs sampler alternating β | σ², y and σ² | β, y.
pub fn lrm_gibbs(data: &RegressionData, prior: &LrmPrior, cfg: &GibbsConfig) -> Result<PosteriorDraws> {
    run_gibbs(data, prior, cfg, None)
}

/// Gibbs with σ² held fixed, leaving only the conjugate β update.
pub fn lrm_gibbs_fixed_sigma2(
    data: &RegressionData,
    prior: &LrmPrior,
    cfg: &GibbsConfig,
    sigma2: f64,
) -> Result<PosteriorDraws> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid("sigma2", "must be positive"));
    }
    run_gibbs(data, prior, cfg, Some(sigma2))
}

fn run_gibbs(
    data: &RegressionData,
    prior: &LrmPrior,
    cfg: &GibbsConfig,
    fixed_sigma2: Option<f64>,
) -> Result<PosteriorDraws> {
    prior.validate()?;
    prior.check_data(data)?;
    cfg.validate()?;
    let kernel = GibbsKernel::new(prior)?;
    let stats = data.stats();
    let p = data.p();
    let mut rng = SeededRng::new(cfg.seed);

    let mut sigma2 = fixed_sigma2.unwrap_or(match Ols::fit(data) {
        Ok(o) if o.sigma2 > 0.0 => o.sigma2,
        _ => prior.sigma0_sq,
    });
    let shape = (stats.n as f64 + prior.nu0) / 2.0;

    let mut out = DMatrix::zeros(cfg.retained(), p + 1);
    let mut log_joint = Vec::with_capacity(cfg.n_samples);
    let mut row = 0;
    for t in 1..=cfg.n_samples {
        let beta = kernel.draw_beta(&mut rng, stats, sigma2, t)?;
        if fixed_sigma2.is_none() {
            let scale = (prior.nu0 * prior.sigma0_sq + stats.rss(&beta)) / 2.0;
            sigma2 = invgamma_sample(&mut rng, &InvGammaParams { shape, scale });
        }
        log_joint.push(log_joint_with(stats, prior, &kernel.c0, &beta, sigma2));
        if cfg.keeps(t) {
            for c in 0..p {
                out[(row, c)] = beta[c];
            }
            out[(row, p)] = sigma2;
            row += 1;
        }
    }
    Ok(PosteriorDraws {
        names: param_names(p),
        draws: out,
        meta: DrawMeta::mcmc(cfg),
        log_joint,
    })
}

/// Mean-field factors q(β) = N(μ_β, Σ_β), q(σ²) = IG(a, b).
#[derive(Debug, Clone, PartialEq)]
pub struct LrmVarState {
    pub mu_beta: DVector<f64>,
    pub sigma_beta: DMatrix<f64>,
    pub a: f64,
    pub b: f64,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LrmVarState {
    pub fn q_sigma2(&self) -> InvGammaParams {
        InvGammaParams {
            shape: self.a,
            scale: self.b,
        }
    }

    pub fn elbo(&self) -> f64 {
        self.elbo_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

/// Coordinate ascent over q(β) then q(σ²) until the relative ELBO change drops below `rel_tol`.
pub fn lrm_cavi(data: &RegressionData, prior: &LrmPrior, cfg: &CaviConfig) -> Result<LrmVarState> {
    run_cavi(data, prior, cfg, None)
}

/// Coordinate ascent with E[1/σ²] pinned, so only q(β) moves.
pub fn lrm_cavi_known_precision(
    data: &RegressionData,
    prior: &LrmPrior,
    cfg: &CaviConfig,
    inv_sigma2: f64,
) -> Result<LrmVarState> {
    if !(inv_sigma2 > 0.0) {
        return Err(Error::invalid("inv_sigma2", "must be positive"));
    }
    run_cavi(data, prior, cfg, Some(inv_sigma2))
}

fn run_cavi(
    data: &RegressionData,
    prior: &LrmPrior,
    cfg: &CaviConfig,
    pinned_precision: Option<f64>,
) -> Result<LrmVarState> {
    prior.validate()?;
    prior.check_data(data)?;
    cfg.validate()?;
    let stats = data.stats();
    let c0 = Cholesky::new_jittered(&prior.sigma0, "Sigma0")?;
    let prec0 = c0.inverse();
    let h0 = &prec0 * &prior.beta0;
    let a = (stats.n as f64 + prior.nu0) / 2.0;

    let mut state = initial_state(data, prior, a);
    if let Some(tau) = pinned_precision {
        state.b = state.a / tau;
    }

    let mut prev = f64::NEG_INFINITY;
    for iter in 1..=cfg.max_iter {
        let e_inv = state.a / state.b;
        let prec = &prec0 + &stats.xtx * e_inv;
        let cq = Cholesky::new_jittered(&prec, "Sigma_beta^-1")
            .map_err(|e| e.with_context(format!("q(beta), iteration {iter}")))?;
        state.sigma_beta = cq.inverse();
        state.mu_beta = cq.solve(&(&h0 + &stats.xty * e_inv));
        if pinned_precision.is_none() {
            state.a = a;
            state.b = (prior.nu0 * prior.sigma0_sq + stats.expected_rss(&state.mu_beta, &state.sigma_beta)) / 2.0;
        }
        let elbo = elbo_with(&state, stats, prior, &c0, &prec0);
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
    Ok(state)
}

fn initial_state(data: &RegressionData, prior: &LrmPrior, a: f64) -> LrmVarState {
    // OLS start when it exists, otherwise the prior
    let (mu, s2) = match Ols::fit(data) {
        Ok(o) if o.sigma2 > 0.0 => (o.beta, o.sigma2),
        _ => (prior.beta0.clone(), prior.sigma0_sq),
    };
    LrmVarState {
        mu_beta: mu,
        sigma_beta: prior.sigma0.clone(),
        a,
        b: a * s2,
        elbo_trace: Vec::new(),
        iterations: 0,
        converged: false,
    }
}

/// Evidence lower bound of `state`.
pub fn lrm_elbo(state: &LrmVarState, data: &RegressionData, prior: &LrmPrior) -> Result<f64> {
    prior.check_data(data)?;
    let c0 = Cholesky::new_jittered(&prior.sigma0, "Sigma0")?;
    let prec0 = c0.inverse();
    Ok(elbo_with(state, data.stats(), prior, &c0, &prec0))
}

/// Per-term breakdown of the ELBO.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrmElboTerms {
    pub loglik: f64,
    pub log_p_beta: f64,
    pub log_q_beta: f64,
    pub log_p_sigma2: f64,
    pub log_q_sigma2: f64,
}

impl LrmElboTerms {
    pub fn total(&self) -> f64 {
        self.loglik + (self.log_p_beta - self.log_q_beta) + (self.log_p_sigma2 - self.log_q_sigma2)
    }
}

pub fn lrm_elbo_terms(state: &LrmVarState, data: &RegressionData, prior: &LrmPrior) -> Result<LrmElboTerms> {
    prior.check_data(data)?;
    let c0 = Cholesky::new_jittered(&prior.sigma0, "Sigma0")?;
    let prec0 = c0.inverse();
    Ok(terms_with(state, data.stats(), prior, &c0, &prec0))
}

fn elbo_with(state: &LrmVarState, stats: &SuffStats, prior: &LrmPrior, c0: &Cholesky, prec0: &DMatrix<f64>) -> f64 {
    terms_with(state, stats, prior, c0, prec0).total()
}

fn terms_with(
    state: &LrmVarState,
    stats: &SuffStats,
    prior: &LrmPrior,
    c0: &Cholesky,
    prec0: &DMatrix<f64>,
) -> LrmElboTerms {
    let p = prior.p();
    let n = stats.n as f64;
    let q = state.q_sigma2();
    let e_inv = q.mean_inv();
    let e_log = q.mean_log();
    let loglik = -n * HALF_LN_2PI - 0.5 * n * e_log - 0.5 * e_inv * stats.expected_rss(&state.mu_beta, &state.sigma_beta);

    let d = &state.mu_beta - &prior.beta0;
    let log_p_beta = -(p as f64) * HALF_LN_2PI
        - 0.5 * c0.ln_det()
        - 0.5 * (d.dot(&(prec0 * &d)) + trace_of_product(prec0, &state.sigma_beta));
    let ln_det_q = Cholesky::new_jittered(&state.sigma_beta, "Sigma_beta")
        .map(|c| c.ln_det())
        .unwrap_or(f64::NEG_INFINITY);
    let log_q_beta = mvn_neg_entropy(p, ln_det_q);

    let pr = prior.sigma2_prior();
    let log_p_sigma2 = pr.shape * pr.scale.ln() - crate::exp_family::ln_gamma(pr.shape) - (pr.shape + 1.0) * e_log
        - pr.scale * e_inv;
    LrmElboTerms {
        loglik,
        log_p_beta,
        log_q_beta,
        log_p_sigma2,
        log_q_sigma2: q.neg_entropy(),
    }
}

/// Independent draws β ~ q(β), σ² ~ q(σ²).
pub fn lrm_sample_variational(state: &LrmVarState, n_draws: usize, seed: u64) -> Result<PosteriorDraws> {
    let p = state.mu_beta.len();
    let c = Cholesky::new_jittered(&state.sigma_beta, "Sigma_beta")?;
    let q = InvGammaParams::new(state.a, state.b)?;
    let mut rng = SeededRng::new(seed);
    let mut out = DMatrix::zeros(n_draws, p + 1);
    for r in 0..n_draws {
        let beta = mvn_sample_chol(&mut rng, &state.mu_beta, &c);
        for i in 0..p {
            out[(r, i)] = beta[i];
        }
        out[(r, p)] = invgamma_sample(&mut rng, &q);
    }
    Ok(PosteriorDraws {
        names: param_names(p),
        draws: out,
        meta: DrawMeta::variational(n_draws, seed),
        log_joint: Vec::new(),
    })
}

/// Exact Gaussian posterior of β when σ² is known: N(m, V).
pub fn conjugate_beta_posterior(
    data: &RegressionData,
    prior: &LrmPrior,
    sigma2: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let prec0 = Cholesky::new_jittered(&prior.sigma0, "Sigma0")?.inverse();
    let prec = &prec0 + &data.stats().xtx / sigma2;
    let c = Cholesky::new_jittered(&prec, "V^-1")?;
    let m = c.solve(&(&prec0 * &prior.beta0 + &data.stats().xty / sigma2));
    Ok((m, c.inverse()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data() -> RegressionData {
        let n = 40;
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 / 10.0 });
        let y = DVector::from_fn(n, |i, _| 1.0 + 0.5 * (i as f64 / 10.0) + ((i * 7919) % 13) as f64 / 13.0 - 0.5);
        RegressionData::new(y, x).unwrap()
    }

    #[test]
    fn unit_info_prior_on_constant_design() {
        let d = RegressionData::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), DMatrix::from_element(3, 1, 1.0)).unwrap();
        let pr = unit_info_prior(&d).unwrap();
        assert!((pr.beta0[0] - 2.0).abs() < 1e-14);
        assert!((pr.sigma0_sq - 1.0).abs() < 1e-14);
        assert_eq!(pr.nu0, 1.0);
        // Σ₀ = n σ̂² (XᵀX)⁻¹ = 3 · 1 · 1/3
        assert!((pr.sigma0[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unit_info_prior_scales_with_response() {
        let d = line_data();
        let scaled = RegressionData::new(d.y() * 3.0, d.x().clone()).unwrap();
        let a = unit_info_prior(&d).unwrap();
        let b = unit_info_prior(&scaled).unwrap();
        assert!((&a.beta0 * 3.0 - &b.beta0).amax() < 1e-10);
        assert!((a.sigma0_sq * 9.0 - b.sigma0_sq).abs() < 1e-10);
    }

    #[test]
    fn zellner_with_g_n_matches_unit_info_scale() {
        let d = line_data();
        let u = unit_info_prior(&d).unwrap();
        let z = zellner_prior(&d, None).unwrap();
        assert_eq!(z.beta0, DVector::zeros(2));
        assert!((&u.sigma0 - &z.sigma0).amax() < 1e-12);
        let big = zellner_prior(&d, Some(4.0 * d.n() as f64)).unwrap();
        assert!((&z.sigma0 * 4.0 - &big.sigma0).amax() < 1e-10);
        assert!(zellner_prior(&d, Some(0.0)).is_err());
    }

    #[test]
    fn cavi_with_no_data_returns_prior() {
        let prior = LrmPrior::new(
            DVector::from_vec(vec![1.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            3.0,
            2.0,
        )
        .unwrap();
        let empty = RegressionData::new(DVector::zeros(0), DMatrix::zeros(0, 2)).unwrap();
        let s = lrm_cavi(&empty, &prior, &CaviConfig::default()).unwrap();
        assert!((&s.mu_beta - &prior.beta0).amax() < 1e-12);
        assert!((&s.sigma_beta - &prior.sigma0).amax() < 1e-12);
        assert_eq!(s.a, 1.5);
        assert!((s.b - 3.0).abs() < 1e-14);
    }

    #[test]
    fn cavi_elbo_is_monotone_and_optimal() {
        let d = line_data();
        let prior = unit_info_prior(&d).unwrap();
        let s = lrm_cavi(&d, &prior, &CaviConfig::default()).unwrap();
        assert!(s.converged);
        for w in s.elbo_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs());
        }
        let at = lrm_elbo(&s, &d, &prior).unwrap();
        let mut moved = s.clone();
        moved.mu_beta[1] += 1e-3;
        assert!(lrm_elbo(&moved, &d, &prior).unwrap() < at);
    }

    #[test]
    fn known_precision_gives_conjugate_posterior() {
        let d = line_data();
        let prior = unit_info_prior(&d).unwrap();
        let s = lrm_cavi_known_precision(&d, &prior, &CaviConfig::default(), 1.0 / 0.3).unwrap();
        let (m, v) = conjugate_beta_posterior(&d, &prior, 0.3).unwrap();
        assert!((&s.mu_beta - m).amax() < 1e-12);
        assert!((&s.sigma_beta - v).amax() < 1e-12);
    }

    #[test]
    fn gibbs_retains_configured_draws_and_is_reproducible() {
        let d = line_data();
        let prior = unit_info_prior(&d).unwrap();
        let cfg = GibbsConfig {
            n_samples: 300,
            burn_in: 100,
            thin: 4,
            seed: 5,
        };
        let a = lrm_gibbs(&d, &prior, &cfg).unwrap();
        let b = lrm_gibbs(&d, &prior, &cfg).unwrap();
        assert_eq!(a.n_draws(), 50);
        assert_eq!(a.log_joint.len(), 300);
        assert_eq!(a, b);
        assert!(a.draws.column(2).iter().all(|v| *v > 0.0));
    }

    #[test]
    fn row_permutation_leaves_fixed_point_unchanged() {
        let d = line_data();
        let perm: Vec<usize> = (0..d.n()).rev().collect();
        let dp = d.permute_rows(&perm).unwrap();
        let prior = unit_info_prior(&d).unwrap();
        let a = lrm_cavi(&d, &prior, &CaviConfig::default()).unwrap();
        let b = lrm_cavi(&dp, &prior, &CaviConfig::default()).unwrap();
        assert!((&a.mu_beta - &b.mu_beta).amax() < 1e-10);
        assert!(((a.b - b.b) / a.b).abs() < 1e-10);
    }
}
