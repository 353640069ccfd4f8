//! Exponential-family toolkit: parameter types, seeded samplers,
//! log-densities and the closed-form expectations consumed by the
//! variational updates and ELBOs.
//!
//! Parameterisations:
//! - `Gamma(shape α, rate β)`, density ∝ x^{α−1} e^{−βx}
//! - `InvGamma(shape α, scale β)`, density ∝ x^{−α−1} e^{−β/x}
//! - `InvWishart(ν, S)`, density ∝ |W|^{−(ν+d+1)/2} exp{−tr(S W⁻¹)/2}, so
//!   `W⁻¹ ~ Wishart(ν, S⁻¹)` and `E[W⁻¹] = ν S⁻¹`
//! - `Dirichlet(α)` on the K-simplex

mod nef;
mod rng;
pub mod special;

pub use nef::{Categorical, Multinomial, NaturalFamily};
pub use rng::{derive_seed, SeededRng};
pub use special::{digamma, ln_gamma, ln_mvgamma, mv_digamma};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{trace_of_product, Cholesky};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Multivariate normal N_d(μ, Σ).
#[derive(Debug, Clone, PartialEq)]
pub struct MvnParams {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl MvnParams {
    /// Validates dimensions, symmetry and positive definiteness.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Cholesky::new(&cov, "covariance")?;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Gamma(shape, rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        check_positive("shape", shape)?;
        check_positive("rate", rate)?;
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn mean_log(&self) -> f64 {
        digamma(self.shape) - self.rate.ln()
    }

    /// E[log q(X)] under this Gamma (its negative entropy).
    pub fn neg_entropy(&self) -> f64 {
        let a = self.shape;
        self.rate.ln() - ln_gamma(a) + (a - 1.0) * digamma(a) - a
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln() - self.rate * x
    }
}

/// Inverse-Gamma(shape, scale).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaParams {
    pub shape: f64,
    pub scale: f64,
}

impl InvGammaParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        check_positive("shape", shape)?;
        check_positive("scale", scale)?;
        Ok(Self { shape, scale })
    }

    /// E[1/X] = α/β.
    pub fn mean_inv(&self) -> f64 {
        self.shape / self.scale
    }

    /// E[log X] = log β − ψ(α).
    pub fn mean_log(&self) -> f64 {
        self.scale.ln() - digamma(self.shape)
    }

    /// E[X] = β/(α−1), defined for α > 1.
    pub fn mean(&self) -> Result<f64> {
        if self.shape <= 1.0 {
            return Err(Error::Domain(format!(
                "inverse-gamma mean requires shape > 1, got {}",
                self.shape
            )));
        }
        Ok(self.scale / (self.shape - 1.0))
    }

    /// E[log q(X)] under this Inverse-Gamma.
    pub fn neg_entropy(&self) -> f64 {
        let a = self.shape;
        -self.scale.ln() - ln_gamma(a) + (a + 1.0) * digamma(a) - a
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.scale.ln() - ln_gamma(self.shape) - (self.shape + 1.0) * x.ln() - self.scale / x
    }
}

/// Inverse-Wishart(ν, S) with S the scale matrix (see module docs).
#[derive(Debug, Clone, PartialEq)]
pub struct InvWishartParams {
    pub dof: f64,
    pub scale: DMatrix<f64>,
}

impl InvWishartParams {
    pub fn new(dof: f64, scale: DMatrix<f64>) -> Result<Self> {
        let d = scale.nrows();
        if scale.ncols() != d {
            return Err(Error::Dimension("inverse-Wishart scale must be square".into()));
        }
        if !(dof > d as f64 - 1.0) {
            return Err(Error::invalid("dof", format!("need dof > d - 1 = {}, got {dof}", d as f64 - 1.0)));
        }
        Cholesky::new(&scale, "inverse-Wishart scale")?;
        Ok(Self { dof, scale })
    }

    pub fn dim(&self) -> usize {
        self.scale.nrows()
    }

    /// E[W⁻¹] = ν S⁻¹.
    pub fn mean_inverse(&self) -> Result<DMatrix<f64>> {
        Ok(Cholesky::new_jittered(&self.scale, "inverse-Wishart scale")?.inverse() * self.dof)
    }

    /// E[W] = S/(ν − d − 1), defined for ν > d + 1.
    pub fn mean(&self) -> Result<DMatrix<f64>> {
        let d = self.dim() as f64;
        if self.dof <= d + 1.0 {
            return Err(Error::Domain(format!(
                "inverse-Wishart mean requires dof > d + 1, got {}",
                self.dof
            )));
        }
        Ok(&self.scale / (self.dof - d - 1.0))
    }

    /// E[log q(W)] under this Inverse-Wishart.
    pub fn neg_entropy(&self) -> Result<f64> {
        let d = self.dim();
        let ln_det_s = Cholesky::new_jittered(&self.scale, "inverse-Wishart scale")?.ln_det();
        let elogdet = invwishart_elogdet_from(d, self.dof, ln_det_s);
        // E[tr(S W⁻¹)] = ν d
        Ok(invwishart_log_norm(d, self.dof, ln_det_s)
            - 0.5 * (self.dof + d as f64 + 1.0) * elogdet
            - 0.5 * self.dof * d as f64)
    }

    pub fn ln_pdf(&self, w: &DMatrix<f64>) -> Result<f64> {
        let d = self.dim();
        let cw = Cholesky::new_jittered(w, "inverse-Wishart argument")?;
        let ln_det_s = Cholesky::new_jittered(&self.scale, "inverse-Wishart scale")?.ln_det();
        let w_inv = cw.inverse();
        Ok(invwishart_log_norm(d, self.dof, ln_det_s)
            - 0.5 * (self.dof + d as f64 + 1.0) * cw.ln_det()
            - 0.5 * trace_of_product(&self.scale, &w_inv))
    }
}

/// ln of the inverse-Wishart normaliser: (ν/2) ln|S| − (νd/2) ln 2 − ln Γ_d(ν/2).
pub fn invwishart_log_norm(d: usize, dof: f64, ln_det_scale: f64) -> f64 {
    0.5 * dof * ln_det_scale - 0.5 * dof * d as f64 * 2f64.ln() - ln_mvgamma(d, 0.5 * dof)
}

fn invwishart_elogdet_from(d: usize, dof: f64, ln_det_scale: f64) -> f64 {
    -mv_digamma(d, dof) - d as f64 * 2f64.ln() + ln_det_scale
}

/// Dirichlet(α).
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    pub conc: Vec<f64>,
}

impl DirichletParams {
    pub fn new(conc: Vec<f64>) -> Result<Self> {
        if conc.is_empty() {
            return Err(Error::invalid("conc", "empty concentration vector"));
        }
        for &a in &conc {
            check_positive("conc", a)?;
        }
        Ok(Self { conc })
    }

    pub fn mean(&self) -> Vec<f64> {
        let s: f64 = self.conc.iter().sum();
        self.conc.iter().map(|a| a / s).collect()
    }

    /// E[log p(X | α)] under the same Dirichlet, i.e. its negative entropy.
    pub fn neg_entropy(&self) -> f64 {
        self.expected_ln_pdf(&self.conc)
    }

    /// E_{Dir(q)}[log Dir(X | self)] with `q` the concentration of the expectation.
    pub fn expected_ln_pdf(&self, q_conc: &[f64]) -> f64 {
        let elog = dirichlet_elog_raw(q_conc);
        let s: f64 = self.conc.iter().sum();
        ln_gamma(s) - self.conc.iter().map(|&a| ln_gamma(a)).sum::<f64>()
            + self.conc.iter().zip(&elog).map(|(a, e)| (a - 1.0) * e).sum::<f64>()
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
    }
}

// ---------------------------------------------------------------------------
// expectations

/// Inverse-Gamma key expectations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaMoments {
    pub e_x: f64,
    pub e_inv: f64,
    pub e_log: f64,
}

/// (E[X], E[1/X], E[log X]); requires α > 1 for E[X].
pub fn invgamma_expectations(p: &InvGammaParams) -> Result<InvGammaMoments> {
    Ok(InvGammaMoments {
        e_x: p.mean()?,
        e_inv: p.mean_inv(),
        e_log: p.mean_log(),
    })
}

/// (E[X], E[log X]) for a Gamma.
pub fn gamma_expectations(p: &GammaParams) -> (f64, f64) {
    (p.mean(), p.mean_log())
}

/// E[log|W|] = −Σ_{i=1}^{d} ψ((ν+1−i)/2) − d log 2 + log|S| for W ~ IW(ν, S).
pub fn invwishart_elogdet(p: &InvWishartParams) -> Result<f64> {
    let ln_det = Cholesky::new_jittered(&p.scale, "inverse-Wishart scale")?.ln_det();
    Ok(invwishart_elogdet_from(p.dim(), p.dof, ln_det))
}

/// E[log X_k] = ψ(α_k) − ψ(Σα).
pub fn dirichlet_elog(p: &DirichletParams) -> Vec<f64> {
    dirichlet_elog_raw(&p.conc)
}

pub(crate) fn dirichlet_elog_raw(conc: &[f64]) -> Vec<f64> {
    let total = digamma(conc.iter().sum());
    conc.iter().map(|&a| digamma(a) - total).collect()
}

/// E[log q(β)] = −(d/2) log(2πe) − ½ log|Σ| for a Gaussian with the given log-determinant.
pub fn mvn_neg_entropy(d: usize, ln_det_cov: f64) -> f64 {
    -0.5 * d as f64 * (LN_2PI + 1.0) - 0.5 * ln_det_cov
}

/// KL(p ‖ q) between two multivariate normals.
pub fn gaussian_kl(p: &MvnParams, q: &MvnParams) -> Result<f64> {
    let d = p.dim();
    if q.dim() != d {
        return Err(Error::Dimension("KL between Gaussians of different dimension".into()));
    }
    let cp = Cholesky::new(&p.cov, "p covariance")?;
    let cq = Cholesky::new(&q.cov, "q covariance")?;
    let q_inv = cq.inverse();
    let diff = &q.mean - &p.mean;
    let maha = diff.dot(&cq.solve(&diff));
    Ok(0.5 * (trace_of_product(&q_inv, &p.cov) + maha - d as f64 + cq.ln_det() - cp.ln_det()))
}

// ---------------------------------------------------------------------------
// log densities

pub fn mvn_logpdf(x: &DVector<f64>, p: &MvnParams) -> Result<f64> {
    if x.len() != p.dim() {
        return Err(Error::Dimension("point and mean differ in length".into()));
    }
    let c = Cholesky::new(&p.cov, "covariance")?;
    let z = c.solve_lower(&(x - &p.mean));
    Ok(-0.5 * p.dim() as f64 * LN_2PI - 0.5 * c.ln_det() - 0.5 * z.norm_squared())
}

/// Univariate normal log density.
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + var.ln()) - 0.5 * r * r / var
}

/// Multinomial log pmf.
pub fn multinomial_logpmf(counts: &[u64], probs: &[f64]) -> Result<f64> {
    Multinomial::new(counts.iter().sum(), probs.to_vec())?.ln_pmf(counts)
}

// ---------------------------------------------------------------------------
// samplers

/// N_d(μ, Σ) draw via the Cholesky factor of Σ.
pub fn mvn_sample<R: Rng + ?Sized>(rng: &mut R, p: &MvnParams) -> Result<DVector<f64>> {
    let c = Cholesky::new(&p.cov, "covariance")?;
    Ok(mvn_sample_chol(rng, &p.mean, &c))
}

/// N(μ, LLᵀ) draw given a precomputed factor.
pub fn mvn_sample_chol<R: Rng + ?Sized>(rng: &mut R, mean: &DVector<f64>, chol: &Cholesky) -> DVector<f64> {
    let z = standard_normal_vec(rng, mean.len());
    mean + chol.mul_l(&z)
}

/// Draw from N(P⁻¹h, P⁻¹) given the Cholesky factor of the precision P.
pub fn mvn_sample_precision<R: Rng + ?Sized>(rng: &mut R, h: &DVector<f64>, prec: &Cholesky) -> DVector<f64> {
    let mean = prec.solve(h);
    let z = standard_normal_vec(rng, h.len());
    // solve Lᵀ x = z so that Cov(x) = (L Lᵀ)⁻¹
    let l = prec.l();
    let n = z.len();
    let mut x = z;
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    mean + x
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Gamma(shape, rate) draw.
pub fn gamma_sample<R: Rng + ?Sized>(rng: &mut R, p: &GammaParams) -> f64 {
    gamma_draw(rng, p.shape, p.rate)
}

fn gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("validated gamma parameters")
        .sample(rng)
}

/// log of a Gamma(shape, 1) draw; stays finite for tiny shapes using
/// G(α) = G(α+1)·U^{1/α}.
fn ln_gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        gamma_draw(rng, shape, 1.0).ln()
    } else {
        let g = gamma_draw(rng, shape + 1.0, 1.0);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        g.ln() + u.ln() / shape
    }
}

/// Inverse-Gamma(shape, scale) draw as 1/Gamma(shape, rate = scale).
pub fn invgamma_sample<R: Rng + ?Sized>(rng: &mut R, p: &InvGammaParams) -> f64 {
    1.0 / gamma_draw(rng, p.shape, p.scale)
}

/// Wishart(ν, V) draw by the Bartlett decomposition, given the Cholesky factor of V.
pub fn wishart_sample_chol<R: Rng + ?Sized>(rng: &mut R, dof: f64, scale_chol: &Cholesky) -> DMatrix<f64> {
    let d = scale_chol.dim();
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        // chi-square with ν − i degrees of freedom = Gamma((ν−i)/2, rate 1/2)
        a[(i, i)] = gamma_draw(rng, 0.5 * (dof - i as f64), 0.5).sqrt();
        for j in 0..i {
            a[(i, j)] = standard_normal(rng);
        }
    }
    let la = scale_chol.l() * a;
    crate::linalg::symmetrize(&(&la * la.transpose()))
}

/// Inverse-Wishart(ν, S) draw: Wishart(ν, S⁻¹) by Bartlett, then inverted.
pub fn invwishart_sample<R: Rng + ?Sized>(rng: &mut R, p: &InvWishartParams) -> Result<DMatrix<f64>> {
    let s_inv = Cholesky::new(&p.scale, "inverse-Wishart scale")?.inverse();
    let c = Cholesky::new_jittered(&s_inv, "inverse-Wishart scale inverse")?;
    let w = wishart_sample_chol(rng, p.dof, &c);
    Ok(Cholesky::new_jittered(&w, "Wishart draw")?.inverse())
}

/// Dirichlet(α) draw, normalised in log space so tiny concentrations do not
/// collapse to an all-zero vector.
pub fn dirichlet_sample<R: Rng + ?Sized>(rng: &mut R, p: &DirichletParams) -> Vec<f64> {
    let logs: Vec<f64> = p.conc.iter().map(|&a| ln_gamma_draw(rng, a)).collect();
    let lse = log_sum_exp(&logs);
    logs.iter().map(|l| (l - lse).exp()).collect()
}

/// Index drawn with probability proportional to `weights` (normalised here).
pub fn categorical_sample<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || !(total > 0.0) || !total.is_finite() || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::invalid("weights", "need non-negative weights with positive finite sum"));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(k);
        }
    }
    // u landed on the rounding gap at the top; take the last positive weight
    Ok(weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1))
}

/// Index drawn with probability proportional to `exp(log_weights)`.
pub fn categorical_sample_log<R: Rng + ?Sized>(rng: &mut R, log_weights: &[f64]) -> usize {
    let lse = log_sum_exp(log_weights);
    let probs: Vec<f64> = log_weights.iter().map(|l| (l - lse).exp()).collect();
    categorical_sample(rng, &probs).expect("softmax weights are valid")
}

/// log Σ exp(x_i), stable; −∞ for an empty or all −∞ input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// In-place softmax of log weights.
pub fn softmax_in_place(xs: &mut [f64]) {
    let lse = log_sum_exp(xs);
    for x in xs.iter_mut() {
        *x = (*x - lse).exp();
    }
}

/// Gaussian constant (2π)^{−1/2} in log form, exported for likelihood code.
pub const HALF_LN_2PI: f64 = 0.5 * LN_2PI;
