//! Fit-and-evaluate orchestration shared by the command line and the
//! acceptance suite.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::chlrm::{
    chlrm_cavi, chlrm_default_prior, chlrm_gibbs, chlrm_sample_variational, chlrm_svi, ChlrmDraws, ChlrmPrior,
    ChlrmVarState,
};
use crate::config::{CaviConfig, GibbsConfig, SviConfig};
use crate::dataset::GroupedDataset;
use crate::diagnostics::{
    cocluster_mcmc, cocluster_vi, dic, fit_metrics, k_posterior, loglik_matrix, ppp, waic, FitReport,
    PosteriorPredictive, DEFAULT_CRITERION_DRAWS,
};
use crate::error::{Error, Result};
use crate::exp_family::derive_seed;
use crate::lrm::{lrm_cavi, lrm_gibbs, lrm_sample_variational, unit_info_prior, LrmPrior, LrmVarState, PosteriorDraws};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Lrm,
    Chlrm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mcmc,
    Vi,
    Svi,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lrm => "lrm",
            Self::Chlrm => "chlrm",
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mcmc => "mcmc",
            Self::Vi => "vi",
            Self::Svi => "svi",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lrm" => Ok(Self::Lrm),
            "chlrm" => Ok(Self::Chlrm),
            _ => Err(Error::invalid("model", format!("unknown model {s:?} (expected lrm or chlrm)"))),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mcmc" => Ok(Self::Mcmc),
            "vi" => Ok(Self::Vi),
            "svi" => Ok(Self::Svi),
            _ => Err(Error::invalid("method", format!("unknown method {s:?} (expected mcmc, vi or svi)"))),
        }
    }
}

/// Settings for one fit. Only the block matching the method is used.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub k: usize,
    pub gibbs: GibbsConfig,
    pub cavi: CaviConfig,
    pub svi: SviConfig,
    /// Draws behind WAIC, DIC, MSE and R².
    pub criterion_draws: usize,
    /// Posterior predictive replicates; `None` skips the check.
    pub ppp_reps: Option<usize>,
    /// Seed for variational draws and predictive replicates.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            k: 3,
            gibbs: GibbsConfig::default(),
            cavi: CaviConfig::default(),
            svi: SviConfig {
                minibatch: 1,
                tau: 1.0,
                chi: 0.7,
                iters: 100,
                seed: 0,
                rel_tol: 0.0,
            },
            criterion_draws: DEFAULT_CRITERION_DRAWS,
            ppp_reps: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Fitted {
    LrmMcmc(PosteriorDraws),
    LrmVi(LrmVarState, PosteriorDraws),
    ChlrmMcmc(ChlrmDraws),
    ChlrmVi(ChlrmVarState, ChlrmDraws),
}

impl Fitted {
    /// Cluster assignments used for partition summaries: the hard
    /// assignment of a variational fit, or the representative draw.
    pub fn partition(&self) -> Option<Result<Vec<usize>>> {
        match self {
            Self::ChlrmMcmc(d) => Some(crate::diagnostics::representative_partition(&d.assignments())),
            Self::ChlrmVi(s, _) => Some(Ok(s.hard_assignments())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub fitted: Fitted,
    pub report: FitReport,
    /// Log joint per sweep (MCMC) or ELBO per iteration (VI, SVI).
    pub trace: Vec<f64>,
}

pub fn default_lrm_prior(data: &GroupedDataset) -> Result<LrmPrior> {
    unit_info_prior(&data.stacked())
}

/// Fit with the default prior of the chosen model and evaluate every criterion.
pub fn fit(data: &GroupedDataset, model: ModelKind, method: Method, opts: &FitOptions) -> Result<FitOutcome> {
    match model {
        ModelKind::Lrm => fit_lrm(data, &default_lrm_prior(data)?, method, opts),
        ModelKind::Chlrm => fit_chlrm(data, &chlrm_default_prior(data, opts.k)?, method, opts),
    }
}

pub fn fit_lrm(data: &GroupedDataset, prior: &LrmPrior, method: Method, opts: &FitOptions) -> Result<FitOutcome> {
    let stacked = data.stacked();
    let start = Instant::now();
    let (fitted, settings, trace, elbo, iterations) = match method {
        Method::Mcmc => {
            let d = lrm_gibbs(&stacked, prior, &opts.gibbs)?;
            let trace = d.log_joint.clone();
            (Fitted::LrmMcmc(d), gibbs_settings(&opts.gibbs), trace, None, None)
        }
        Method::Vi => {
            let s = lrm_cavi(&stacked, prior, &opts.cavi)?;
            let d = lrm_sample_variational(&s, opts.criterion_draws, derive_seed(opts.seed, 2))?;
            let trace = s.elbo_trace.clone();
            let (e, it) = (s.elbo(), s.iterations);
            (Fitted::LrmVi(s, d), cavi_settings(&opts.cavi), trace, Some(e), Some(it))
        }
        Method::Svi => return Err(Error::invalid("method", "svi is only available for the clustered model")),
    };
    let runtime = start.elapsed().as_secs_f64();
    finish(data, fitted, ModelKind::Lrm, method, settings, trace, elbo, iterations, runtime, opts)
}

pub fn fit_chlrm(data: &GroupedDataset, prior: &ChlrmPrior, method: Method, opts: &FitOptions) -> Result<FitOutcome> {
    let start = Instant::now();
    let (fitted, settings, trace, elbo, iterations) = match method {
        Method::Mcmc => {
            let d = chlrm_gibbs(data, prior, &opts.gibbs)?;
            let trace = d.log_joint.clone();
            (Fitted::ChlrmMcmc(d), gibbs_settings(&opts.gibbs), trace, None, None)
        }
        Method::Vi => {
            let s = chlrm_cavi(data, prior, &opts.cavi)?;
            let d = chlrm_sample_variational(&s, opts.criterion_draws, derive_seed(opts.seed, 2))?;
            let trace = s.elbo_trace.clone();
            let (e, it) = (s.elbo(), s.iterations);
            (Fitted::ChlrmVi(s, d), cavi_settings(&opts.cavi), trace, Some(e), Some(it))
        }
        Method::Svi => {
            let s = chlrm_svi(data, prior, &opts.svi)?;
            let d = chlrm_sample_variational(&s, opts.criterion_draws, derive_seed(opts.seed, 2))?;
            let trace = s.elbo_trace.clone();
            let (e, it) = (s.elbo(), s.iterations);
            (Fitted::ChlrmVi(s, d), svi_settings(&opts.svi), trace, Some(e), Some(it))
        }
    };
    let runtime = start.elapsed().as_secs_f64();
    let mut out = finish(data, fitted, ModelKind::Chlrm, method, settings, trace, elbo, iterations, runtime, opts)?;
    out.report.k = Some(prior.k());
    Ok(out)
}

fn gibbs_settings(c: &GibbsConfig) -> String {
    format!("samples={} burn_in={} thin={} seed={}", c.n_samples, c.burn_in, c.thin, c.seed)
}

fn cavi_settings(c: &CaviConfig) -> String {
    format!("rel_tol={:e} max_iter={} restarts={} seed={}", c.rel_tol, c.max_iter, c.restarts, c.seed)
}

fn svi_settings(c: &SviConfig) -> String {
    format!("minibatch={} chi={} tau={} iters={} seed={}", c.minibatch, c.chi, c.tau, c.iters, c.seed)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    data: &GroupedDataset,
    fitted: Fitted,
    model: ModelKind,
    method: Method,
    settings: String,
    trace: Vec<f64>,
    elbo: Option<f64>,
    iterations: Option<usize>,
    runtime_sec: f64,
    opts: &FitOptions,
) -> Result<FitOutcome> {
    let mut report = FitReport {
        model: model.to_string(),
        method: method.to_string(),
        settings,
        dataset: data.fingerprint(),
        runtime_sec,
        elbo,
        iterations,
        ..Default::default()
    };
    let ppp_seed = derive_seed(opts.seed, 3);
    match &fitted {
        Fitted::LrmMcmc(d) => {
            let sub = d.subsample(opts.criterion_draws);
            evaluate(&sub, data, opts, ppp_seed, &mut report)?;
        }
        Fitted::LrmVi(_, d) => evaluate(d, data, opts, ppp_seed, &mut report)?,
        Fitted::ChlrmMcmc(d) => {
            let sub = d.subsample(opts.criterion_draws);
            evaluate(&sub, data, opts, ppp_seed, &mut report)?;
            report.k_posterior = Some(k_posterior(&d.assignments()));
            report.cocluster = Some(cocluster_mcmc(&d.assignments())?);
        }
        Fitted::ChlrmVi(s, d) => {
            evaluate(d, data, opts, ppp_seed, &mut report)?;
            report.cocluster = Some(cocluster_vi(&s.rho));
        }
    }
    Ok(FitOutcome { fitted, report, trace })
}

fn evaluate<M: PosteriorPredictive>(
    model: &M,
    data: &GroupedDataset,
    opts: &FitOptions,
    ppp_seed: u64,
    report: &mut FitReport,
) -> Result<()> {
    let ll = loglik_matrix(model, data)?;
    report.waic = waic(&ll).waic;
    report.dic = dic(&ll, &model.plugin_loglik(data))?.dic;
    let (mse, r2) = fit_metrics(&data.pooled_y(), &model.predict_mean(data))?;
    report.mse = mse;
    report.r2 = r2;
    if let Some(reps) = opts.ppp_reps {
        report.ppp = Some(ppp(model, data, reps, ppp_seed)?);
    }
    Ok(())
}

/// ELBO of the best coordinate-ascent fit for each K.
pub fn elbo_by_k(data: &GroupedDataset, ks: &[usize], cavi: &CaviConfig) -> Result<Vec<(usize, f64)>> {
    ks.iter()
        .map(|&k| {
            let prior = chlrm_default_prior(data, k)?;
            Ok((k, chlrm_cavi(data, &prior, cavi)?.elbo()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{simulate, SimulationSpec};

    #[test]
    fn quick_fits_produce_sane_reports() {
        let (data, _) = simulate(&SimulationSpec::paper_chlrm(7)).unwrap();
        let mut opts = FitOptions {
            criterion_draws: 200,
            ppp_reps: Some(100),
            ..Default::default()
        };
        opts.gibbs = GibbsConfig {
            n_samples: 400,
            burn_in: 100,
            thin: 1,
            seed: 1,
        };
        opts.svi.minibatch = 12;
        for method in [Method::Mcmc, Method::Vi, Method::Svi] {
            let out = fit(&data, ModelKind::Chlrm, method, &opts).unwrap();
            let r = &out.report;
            assert!(r.waic.is_finite() && r.dic.is_finite());
            assert!(r.r2 > 0.0 && r.r2 <= 1.0, "{method}: r2 {}", r.r2);
            let p = r.ppp.unwrap();
            assert!((0.0..=1.0).contains(&p.mean));
            let c = r.cocluster.as_ref().unwrap();
            assert_eq!(c, &c.transpose());
            assert!(!out.trace.is_empty());
        }
        assert!(fit(&data, ModelKind::Lrm, Method::Svi, &opts).is_err());
        assert_eq!("svi".parse::<Method>().unwrap(), Method::Svi);
        assert!("nuts".parse::<Method>().is_err());
    }
}
