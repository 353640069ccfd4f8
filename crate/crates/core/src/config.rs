//! Sampler and optimiser settings shared by both models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gibbs run length: `n_samples` total sweeps, the first `burn_in` discarded,
/// then every `thin`-th sweep retained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub n_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl GibbsConfig {
    /// Burn-in defaults to 10% of the sweeps, thinning to 1.
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            burn_in: n_samples / 10,
            thin: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::invalid("thin", "must be at least 1"));
        }
        if self.n_samples <= self.burn_in {
            return Err(Error::invalid(
                "n_samples",
                format!("must exceed burn_in ({} <= {})", self.n_samples, self.burn_in),
            ));
        }
        if self.retained() == 0 {
            return Err(Error::invalid("thin", "no draws would be retained"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.n_samples - self.burn_in) / self.thin
    }

    /// Whether sweep `t` (1-based) is kept.
    pub fn keeps(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in) % self.thin == 0
    }
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self::new(10_000, 0)
    }
}

/// Coordinate-ascent stopping rule and restarts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaviConfig {
    pub max_iter: usize,
    /// Stop when |ΔELBO| / |ELBO| falls below this.
    pub rel_tol: f64,
    pub seed: u64,
    /// Random initialisations tried by the clustered model; the best final ELBO wins.
    pub restarts: usize,
}

impl CaviConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be at least 1"));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::invalid("rel_tol", "must be non-negative"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for CaviConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            rel_tol: 1e-9,
            seed: 0,
            restarts: 5,
        }
    }
}

/// Relative ELBO decrease tolerated before a coordinate-ascent run is declared broken.
pub const ELBO_DECREASE_TOL: f64 = 1e-8;

/// Minibatch size, Robbins–Monro schedule (t + τ)^{−χ} and iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SviConfig {
    pub minibatch: usize,
    pub tau: f64,
    pub chi: f64,
    pub iters: usize,
    pub seed: u64,
    /// Optional early stop on relative ELBO change (0 disables it).
    pub rel_tol: f64,
}

impl SviConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.minibatch == 0 || self.minibatch > m {
            return Err(Error::invalid("minibatch", format!("must lie in 1..={m}, got {}", self.minibatch)));
        }
        if !(self.chi > 0.5 && self.chi <= 1.0) {
            return Err(Error::invalid("chi", format!("must lie in (0.5, 1], got {}", self.chi)));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::invalid("tau", "must be non-negative"));
        }
        if self.iters == 0 {
            return Err(Error::invalid("iters", "must be at least 1"));
        }
        Ok(())
    }

    /// Step size at iteration t (1-based).
    pub fn step(&self, t: usize) -> f64 {
        (t as f64 + self.tau).powf(-self.chi)
    }
}

/// Where a set of draws came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawSource {
    Mcmc,
    Variational,
}

/// Provenance carried alongside stored draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawMeta {
    pub seed: u64,
    pub source: DrawSource,
    pub n_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl DrawMeta {
    pub fn mcmc(cfg: &GibbsConfig) -> Self {
        Self {
            seed: cfg.seed,
            source: DrawSource::Mcmc,
            n_samples: cfg.n_samples,
            burn_in: cfg.burn_in,
            thin: cfg.thin,
        }
    }

    pub fn variational(n_draws: usize, seed: u64) -> Self {
        Self {
            seed,
            source: DrawSource::Variational,
            n_samples: n_draws,
            burn_in: 0,
            thin: 1,
        }
    }
}
