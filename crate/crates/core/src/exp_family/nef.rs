//! Natural-parameter view: p(x | η) = h(x) exp{ηᵀt(x) − a(η)}.

use super::special::ln_gamma;
use super::{log_sum_exp, DirichletParams, GammaParams, InvGammaParams};
use crate::error::{Error, Result};

/// A member of an exponential family in canonical form.
pub trait NaturalFamily: Sized {
    type Point: ?Sized;

    /// Natural parameter η.
    fn natural(&self) -> Vec<f64>;
    /// Conventional parameters from η; errors outside the natural space.
    fn from_natural(eta: &[f64]) -> Result<Self>;
    /// Sufficient statistic t(x).
    fn sufficient(x: &Self::Point) -> Vec<f64>;
    /// log h(x).
    fn ln_base(&self, x: &Self::Point) -> f64;
    /// Log-partition a(η).
    fn log_partition(&self) -> f64;
    /// E[t(X)] = ∇a(η).
    fn mean_sufficient(&self) -> Vec<f64>;

    fn ln_density(&self, x: &Self::Point) -> f64 {
        let eta = self.natural();
        let t = Self::sufficient(x);
        self.ln_base(x) + eta.iter().zip(&t).map(|(e, t)| e * t).sum::<f64>() - self.log_partition()
    }
}

fn expect_len(eta: &[f64], n: usize) -> Result<()> {
    if eta.len() != n {
        return Err(Error::Dimension(format!("natural parameter has length {}, expected {n}", eta.len())));
    }
    Ok(())
}

impl NaturalFamily for GammaParams {
    type Point = f64;

    fn natural(&self) -> Vec<f64> {
        vec![self.shape - 1.0, -self.rate]
    }

    fn from_natural(eta: &[f64]) -> Result<Self> {
        expect_len(eta, 2)?;
        GammaParams::new(eta[0] + 1.0, -eta[1])
    }

    fn sufficient(x: &f64) -> Vec<f64> {
        vec![x.ln(), *x]
    }

    fn ln_base(&self, _x: &f64) -> f64 {
        0.0
    }

    fn log_partition(&self) -> f64 {
        ln_gamma(self.shape) - self.shape * self.rate.ln()
    }

    fn mean_sufficient(&self) -> Vec<f64> {
        vec![self.mean_log(), self.mean()]
    }
}

impl NaturalFamily for InvGammaParams {
    type Point = f64;

    fn natural(&self) -> Vec<f64> {
        vec![-self.shape - 1.0, -self.scale]
    }

    fn from_natural(eta: &[f64]) -> Result<Self> {
        expect_len(eta, 2)?;
        InvGammaParams::new(-eta[0] - 1.0, -eta[1])
    }

    fn sufficient(x: &f64) -> Vec<f64> {
        vec![x.ln(), 1.0 / x]
    }

    fn ln_base(&self, _x: &f64) -> f64 {
        0.0
    }

    fn log_partition(&self) -> f64 {
        ln_gamma(self.shape) - self.shape * self.scale.ln()
    }

    fn mean_sufficient(&self) -> Vec<f64> {
        vec![self.mean_log(), self.mean_inv()]
    }
}

impl NaturalFamily for DirichletParams {
    type Point = [f64];

    fn natural(&self) -> Vec<f64> {
        self.conc.iter().map(|a| a - 1.0).collect()
    }

    fn from_natural(eta: &[f64]) -> Result<Self> {
        DirichletParams::new(eta.iter().map(|e| e + 1.0).collect())
    }

    fn sufficient(x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v.ln()).collect()
    }

    fn ln_base(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn log_partition(&self) -> f64 {
        self.conc.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(self.conc.iter().sum())
    }

    fn mean_sufficient(&self) -> Vec<f64> {
        super::dirichlet_elog(self)
    }
}

/// Categorical over K outcomes, stored by its probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    pub probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_simplex(&probs)?;
        Ok(Self { probs })
    }
}

fn validate_simplex(probs: &[f64]) -> Result<()> {
    if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::invalid("probs", "need a non-empty vector of non-negative probabilities"));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("probs", format!("probabilities sum to {s}, not 1")));
    }
    Ok(())
}

fn softmax(eta: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(eta);
    eta.iter().map(|e| (e - lse).exp()).collect()
}

impl NaturalFamily for Categorical {
    /// Outcome index.
    type Point = usize;

    /// η_k = log p_k (the over-complete parameterisation, a(η) = log Σ e^η).
    fn natural(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.ln()).collect()
    }

    fn from_natural(eta: &[f64]) -> Result<Self> {
        if eta.is_empty() {
            return Err(Error::invalid("eta", "empty"));
        }
        Categorical::new(softmax(eta))
    }

    fn sufficient(x: &usize) -> Vec<f64> {
        // length is unknown without the parameter; ln_density is overridden
        let mut t = vec![0.0; x + 1];
        t[*x] = 1.0;
        t
    }

    fn ln_base(&self, _x: &usize) -> f64 {
        0.0
    }

    fn log_partition(&self) -> f64 {
        log_sum_exp(&self.natural())
    }

    fn mean_sufficient(&self) -> Vec<f64> {
        softmax(&self.natural())
    }

    fn ln_density(&self, x: &usize) -> f64 {
        self.natural()[*x] - self.log_partition()
    }
}

/// Multinomial(n, p).
#[derive(Debug, Clone, PartialEq)]
pub struct Multinomial {
    pub trials: u64,
    pub probs: Vec<f64>,
}

impl Multinomial {
    pub fn new(trials: u64, probs: Vec<f64>) -> Result<Self> {
        validate_simplex(&probs)?;
        Ok(Self { trials, probs })
    }

    pub fn ln_pmf(&self, counts: &[u64]) -> Result<f64> {
        if counts.len() != self.probs.len() {
            return Err(Error::Dimension("counts and probabilities differ in length".into()));
        }
        if counts.iter().sum::<u64>() != self.trials {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.ln_density(counts))
    }
}

impl NaturalFamily for Multinomial {
    type Point = [u64];

    fn natural(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.ln()).collect()
    }

    /// η carries no trial count; it is taken as 1 and can be set afterwards.
    fn from_natural(eta: &[f64]) -> Result<Self> {
        Multinomial::new(1, softmax(eta))
    }

    fn sufficient(x: &[u64]) -> Vec<f64> {
        x.iter().map(|&c| c as f64).collect()
    }

    fn ln_base(&self, x: &[u64]) -> f64 {
        ln_gamma(self.trials as f64 + 1.0) - x.iter().map(|&c| ln_gamma(c as f64 + 1.0)).sum::<f64>()
    }

    fn log_partition(&self) -> f64 {
        self.trials as f64 * log_sum_exp(&self.natural())
    }

    fn mean_sufficient(&self) -> Vec<f64> {
        softmax(&self.natural()).iter().map(|p| p * self.trials as f64).collect()
    }

    fn ln_density(&self, x: &[u64]) -> f64 {
        // 0·log 0 = 0 for outcomes with zero probability and zero count
        let eta = self.natural();
        let dot: f64 = eta
            .iter()
            .zip(x)
            .map(|(e, &c)| if c == 0 { 0.0 } else { e * c as f64 })
            .sum();
        self.ln_base(x) + dot - self.log_partition()
    }
}
