//! Information criteria, fit metrics, posterior predictive checks and
//! partition summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chlrm::{ChlrmDraws, ChlrmVarState};
use crate::dataset::GroupedDataset;
use crate::error::{Error, Result};
use crate::exp_family::{derive_seed, log_sum_exp, standard_normal, SeededRng};
use crate::lrm::{pointwise_loglik, PosteriorDraws};

/// Draws used for every criterion unless a caller asks otherwise.
pub const DEFAULT_CRITERION_DRAWS: usize = 1000;

/// Type-7 quantile of an ascending slice.
pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    assert!(!v.is_empty(), "quantile of an empty slice");
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// At most `max` indices spread evenly over 0..n.
pub fn even_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    (0..max).map(|i| i * n / max).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// B × N pointwise log-likelihoods, draw b in row b.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikMatrix {
    values: DMatrix<f64>,
}

impl LogLikMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::invalid("draws", format!("need at least 2, got {}", values.nrows())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (i % values.nrows(), i / values.nrows());
            return Err(Error::Domain(format!("log-likelihood at draw {r}, observation {c} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let b = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("log-likelihood rows differ in length".into()));
        }
        Self::new(DMatrix::from_fn(b, n, |i, j| rows[i][j]))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_draws(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_obs(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waic {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
}

/// WAIC = −2(lppd − p_WAIC) with the variance form of p_WAIC.
pub fn waic(ll: &LogLikMatrix) -> Waic {
    let b = ll.n_draws() as f64;
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    for col in ll.values.column_iter() {
        let v: Vec<f64> = col.iter().copied().collect();
        lppd += log_sum_exp(&v) - b.ln();
        p_waic += sample_var(&v);
    }
    Waic {
        waic: -2.0 * (lppd - p_waic),
        lppd,
        p_waic,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dic {
    pub dic: f64,
    pub p_dic: f64,
    pub d_bar: f64,
    pub d_hat: f64,
}

/// DIC = D(θ̄) + 2 p_DIC, p_DIC = D̄ − D(θ̄).
pub fn dic(ll: &LogLikMatrix, ll_at_mean: &[f64]) -> Result<Dic> {
    if ll_at_mean.len() != ll.n_obs() {
        return Err(Error::Dimension(format!(
            "plug-in log-likelihood has {} entries, expected {}",
            ll_at_mean.len(),
            ll.n_obs()
        )));
    }
    let d_bar = -2.0 * ll.values.row_iter().map(|r| r.sum()).sum::<f64>() / ll.n_draws() as f64;
    let d_hat = -2.0 * ll_at_mean.iter().sum::<f64>();
    let p_dic = d_bar - d_hat;
    Ok(Dic {
        dic: d_hat + 2.0 * p_dic,
        p_dic,
        d_bar,
        d_hat,
    })
}

/// (MSE, R²) of a prediction.
pub fn fit_metrics(y: &[f64], yhat: &[f64]) -> Result<(f64, f64)> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(Error::Dimension(format!("y has {} entries, yhat {}", y.len(), yhat.len())));
    }
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    let m = mean(y);
    let sst: f64 = y.iter().map(|a| (a - m) * (a - m)).sum();
    Ok((sse / y.len() as f64, 1.0 - sse / sst))
}

/// A fitted model that can score and replicate pooled observations
/// (groups in order, rows within each group).
pub trait PosteriorPredictive {
    fn n_draws(&self) -> usize;

    fn pointwise_loglik(&self, b: usize, data: &GroupedDataset) -> Vec<f64>;

    /// Pointwise log-likelihood at the plug-in estimate used by DIC.
    fn plugin_loglik(&self, data: &GroupedDataset) -> Vec<f64>;

    /// Posterior-mean prediction of every observation.
    fn predict_mean(&self, data: &GroupedDataset) -> Vec<f64>;

    /// Replicated responses from draw b.
    fn replicate(&self, b: usize, data: &GroupedDataset, rng: &mut SeededRng) -> Vec<f64>;
}

impl PosteriorPredictive for PosteriorDraws {
    fn n_draws(&self) -> usize {
        PosteriorDraws::n_draws(self)
    }

    fn pointwise_loglik(&self, b: usize, data: &GroupedDataset) -> Vec<f64> {
        let beta = self.beta(b);
        let s2 = self.sigma2(b);
        data.groups().iter().flat_map(|g| pointwise_loglik(g, &beta, s2)).collect()
    }

    fn plugin_loglik(&self, data: &GroupedDataset) -> Vec<f64> {
        let m = self.mean();
        let beta = m.rows(0, self.p()).into_owned();
        let s2 = m[self.p()];
        data.groups().iter().flat_map(|g| pointwise_loglik(g, &beta, s2)).collect()
    }

    fn predict_mean(&self, data: &GroupedDataset) -> Vec<f64> {
        let beta = self.mean().rows(0, self.p()).into_owned();
        data.groups().iter().flat_map(|g| (g.x() * &beta).iter().copied().collect::<Vec<_>>()).collect()
    }

    fn replicate(&self, b: usize, data: &GroupedDataset, rng: &mut SeededRng) -> Vec<f64> {
        let beta = self.beta(b);
        let sd = self.sigma2(b).sqrt();
        let mut out = Vec::with_capacity(data.total_n());
        for g in data.groups() {
            for f in (g.x() * &beta).iter() {
                out.push(f + sd * standard_normal(rng));
            }
        }
        out
    }
}

impl PosteriorPredictive for ChlrmDraws {
    fn n_draws(&self) -> usize {
        ChlrmDraws::n_draws(self)
    }

    fn pointwise_loglik(&self, b: usize, data: &GroupedDataset) -> Vec<f64> {
        let s = &self.samples[b];
        data.groups()
            .iter()
            .zip(&s.gamma)
            .flat_map(|(g, &k)| pointwise_loglik(g, &s.betas[k], s.sigma2[k]))
            .collect()
    }

    /// Per group, the posterior means of the coefficients and variance of the
    /// cluster that group is assigned to. This is invariant to label switching.
    fn plugin_loglik(&self, data: &GroupedDataset) -> Vec<f64> {
        let b = self.n_draws() as f64;
        let mut out = Vec::with_capacity(data.total_n());
        for (j, g) in data.groups().iter().enumerate() {
            let mut beta = DVector::zeros(self.p);
            let mut s2 = 0.0;
            for s in &self.samples {
                let k = s.gamma[j];
                beta += &s.betas[k];
                s2 += s.sigma2[k];
            }
            out.extend(pointwise_loglik(g, &(beta / b), s2 / b));
        }
        out
    }

    fn predict_mean(&self, data: &GroupedDataset) -> Vec<f64> {
        let b = self.n_draws() as f64;
        let mut out = Vec::with_capacity(data.total_n());
        for (j, g) in data.groups().iter().enumerate() {
            let beta = self
                .samples
                .iter()
                .fold(DVector::zeros(self.p), |acc, s| acc + &s.betas[s.gamma[j]])
                / b;
            out.extend((g.x() * beta).iter());
        }
        out
    }

    fn replicate(&self, b: usize, data: &GroupedDataset, rng: &mut SeededRng) -> Vec<f64> {
        let s = &self.samples[b];
        let mut out = Vec::with_capacity(data.total_n());
        for (g, &k) in data.groups().iter().zip(&s.gamma) {
            let sd = s.sigma2[k].sqrt();
            for f in (g.x() * &s.betas[k]).iter() {
                out.push(f + sd * standard_normal(rng));
            }
        }
        out
    }
}

pub fn loglik_matrix<M: PosteriorPredictive + ?Sized>(model: &M, data: &GroupedDataset) -> Result<LogLikMatrix> {
    let rows: Vec<Vec<f64>> = (0..model.n_draws()).map(|b| model.pointwise_loglik(b, data)).collect();
    LogLikMatrix::from_rows(&rows)
}

/// Summary statistics of a response vector used as discrepancies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discrepancy {
    Min,
    Max,
    Iqr,
    Mean,
    Median,
    Sd,
}

impl Discrepancy {
    pub const ALL: [Discrepancy; 6] = [Self::Min, Self::Max, Self::Iqr, Self::Mean, Self::Median, Self::Sd];

    pub fn name(self) -> &'static str {
        match self {
            Self::Min => "min",
            Self::Max => "max",
            Self::Iqr => "iqr",
            Self::Mean => "mean",
            Self::Median => "median",
            Self::Sd => "sd",
        }
    }

    pub fn eval(self, y: &[f64]) -> f64 {
        match self {
            Self::Mean => mean(y),
            Self::Sd => sample_var(y).sqrt(),
            Self::Min => y.iter().copied().fold(f64::INFINITY, f64::min),
            Self::Max => y.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Self::Iqr | Self::Median => {
                let mut v = y.to_vec();
                v.sort_by(f64::total_cmp);
                if self == Self::Median {
                    quantile_sorted(&v, 0.5)
                } else {
                    quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)
                }
            }
        }
    }
}

/// Posterior predictive p-value of each discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PppSummary {
    pub min: f64,
    pub max: f64,
    pub iqr: f64,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
}

impl PppSummary {
    pub fn get(&self, d: Discrepancy) -> f64 {
        match d {
            Discrepancy::Min => self.min,
            Discrepancy::Max => self.max,
            Discrepancy::Iqr => self.iqr,
            Discrepancy::Mean => self.mean,
            Discrepancy::Median => self.median,
            Discrepancy::Sd => self.sd,
        }
    }

    fn set(&mut self, d: Discrepancy, v: f64) {
        match d {
            Discrepancy::Min => self.min = v,
            Discrepancy::Max => self.max = v,
            Discrepancy::Iqr => self.iqr = v,
            Discrepancy::Mean => self.mean = v,
            Discrepancy::Median => self.median = v,
            Discrepancy::Sd => self.sd = v,
        }
    }
}

/// Pr(T(y_rep) ≥ T(y)) for each discrepancy, ties counted as one half.
///
/// Replicate r uses draw r mod B and its own stream derived from `seed`, so
/// a run with more replicates extends a shorter one.
pub fn ppp<M: PosteriorPredictive + ?Sized>(model: &M, data: &GroupedDataset, reps: usize, seed: u64) -> Result<PppSummary> {
    if reps < 100 {
        return Err(Error::invalid("reps", format!("must be at least 100, got {reps}")));
    }
    let b = model.n_draws();
    if b == 0 {
        return Err(Error::invalid("draws", "no posterior draws"));
    }
    let y = data.pooled_y();
    let observed: Vec<f64> = Discrepancy::ALL.iter().map(|d| d.eval(&y)).collect();
    let mut score = [0.0; 6];
    for r in 0..reps {
        let mut rng = SeededRng::new(derive_seed(seed, r as u64));
        let yrep = model.replicate(r % b, data, &mut rng);
        for (i, d) in Discrepancy::ALL.iter().enumerate() {
            let t = d.eval(&yrep);
            score[i] += if t > observed[i] {
                1.0
            } else if t == observed[i] {
                0.5
            } else {
                0.0
            };
        }
    }
    let mut out = PppSummary {
        min: 0.0,
        max: 0.0,
        iqr: 0.0,
        mean: 0.0,
        median: 0.0,
        sd: 0.0,
    };
    for (i, d) in Discrepancy::ALL.iter().enumerate() {
        out.set(*d, score[i] / reps as f64);
    }
    Ok(out)
}

/// Fraction of draws in which groups j and k share a cluster.
pub fn cocluster_mcmc(assignments: &[Vec<usize>]) -> Result<DMatrix<f64>> {
    let m = assignments.first().map_or(0, Vec::len);
    if assignments.is_empty() || assignments.iter().any(|a| a.len() != m) {
        return Err(Error::Dimension("assignment draws must be nonempty and of equal length".into()));
    }
    let mut c = DMatrix::zeros(m, m);
    for a in assignments {
        for j in 0..m {
            for k in (j + 1)..m {
                if a[j] == a[k] {
                    c[(j, k)] += 1.0;
                }
            }
        }
    }
    let b = assignments.len() as f64;
    for j in 0..m {
        c[(j, j)] = 1.0;
        for k in (j + 1)..m {
            c[(j, k)] /= b;
            c[(k, j)] = c[(j, k)];
        }
    }
    Ok(c)
}

/// Σ_c ρ_jc ρ_kc off the diagonal, 1 on it.
pub fn cocluster_vi(rho: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = rho * rho.transpose();
    for j in 0..c.nrows() {
        c[(j, j)] = 1.0;
    }
    c
}

/// Raw diagonal Σ_c ρ_jc², the probability that two independent draws of γ_j agree.
pub fn vi_self_agreement(state: &ChlrmVarState) -> Vec<f64> {
    state.rho.row_iter().map(|r| r.iter().map(|v| v * v).sum()).collect()
}

/// Normalised frequency of the number of nonempty clusters.
pub fn k_posterior(assignments: &[Vec<usize>]) -> BTreeMap<usize, f64> {
    let mut h = BTreeMap::new();
    for a in assignments {
        let mut labels = a.clone();
        labels.sort_unstable();
        labels.dedup();
        *h.entry(labels.len()).or_insert(0.0) += 1.0;
    }
    let b = assignments.len() as f64;
    h.values_mut().for_each(|v| *v /= b);
    h
}

/// Most probable κ, the smaller one on ties.
pub fn k_mode(hist: &BTreeMap<usize, f64>) -> Option<usize> {
    hist.iter().fold(None, |best: Option<(usize, f64)>, (&k, &p)| match best {
        Some((_, bp)) if bp >= p => best,
        _ => Some((k, p)),
    })
    .map(|(k, _)| k)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("partitions have {} and {} items", a.len(), b.len())));
    }
    let n = a.len();
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, u64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let total = c2(n as u64);
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// The sampled partition closest in squared error to the co-clustering
/// matrix, relabelled 0, 1, … by first appearance.
pub fn representative_partition(assignments: &[Vec<usize>]) -> Result<Vec<usize>> {
    let pi = cocluster_mcmc(assignments)?;
    let m = pi.nrows();
    let mut best = (f64::INFINITY, 0);
    for (i, a) in assignments.iter().enumerate() {
        let mut loss = 0.0;
        for j in 0..m {
            for k in (j + 1)..m {
                let d = if a[j] == a[k] { 1.0 } else { 0.0 } - pi[(j, k)];
                loss += d * d;
            }
        }
        if loss < best.0 {
            best = (loss, i);
        }
    }
    Ok(canonical_labels(&assignments[best.1]))
}

/// Relabel clusters 0, 1, … in order of first appearance.
pub fn canonical_labels(a: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    a.iter()
        .map(|&x| {
            let next = map.len();
            *map.entry(x).or_insert(next)
        })
        .collect()
}

/// Everything reported for one fit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitReport {
    pub model: String,
    pub method: String,
    pub settings: String,
    pub dataset: String,
    pub k: Option<usize>,
    pub waic: f64,
    pub dic: f64,
    pub mse: f64,
    pub r2: f64,
    pub runtime_sec: f64,
    pub elbo: Option<f64>,
    pub iterations: Option<usize>,
    pub ppp: Option<PppSummary>,
    pub k_posterior: Option<BTreeMap<usize, f64>>,
    pub cocluster: Option<DMatrix<f64>>,
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that parses back to the same value
    format!("{v:?}")
}

impl FitReport {
    /// One `key=value` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("model", self.model.clone());
        put("method", self.method.clone());
        put("settings", self.settings.clone());
        put("dataset", self.dataset.clone());
        if let Some(k) = self.k {
            put("k", k.to_string());
        }
        put("waic", fmt_f64(self.waic));
        put("dic", fmt_f64(self.dic));
        put("mse", fmt_f64(self.mse));
        put("r2", fmt_f64(self.r2));
        put("runtime_sec", fmt_f64(self.runtime_sec));
        if let Some(e) = self.elbo {
            put("elbo", fmt_f64(e));
        }
        if let Some(i) = self.iterations {
            put("iterations", i.to_string());
        }
        if let Some(p) = &self.ppp {
            for d in Discrepancy::ALL {
                put(&format!("ppp_{}", d.name()), fmt_f64(p.get(d)));
            }
        }
        if let Some(h) = &self.k_posterior {
            let v: Vec<String> = h.iter().map(|(k, p)| format!("{k}:{}", fmt_f64(*p))).collect();
            put("k_posterior", v.join(","));
        }
        if let Some(c) = &self.cocluster {
            let rows: Vec<String> = c
                .row_iter()
                .map(|r| r.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","))
                .collect();
            put("cocluster", rows.join(";"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = FitReport::default();
        let mut ppp: BTreeMap<Discrepancy, f64> = BTreeMap::new();
        let num = |k: &str, v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("report key {k}: cannot parse {v:?} as a number")))
        };
        let int = |k: &str, v: &str| -> Result<usize> {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("report key {k}: cannot parse {v:?} as an integer")))
        };
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("report line {}: expected key=value", ln + 1)))?;
            match k {
                "model" => r.model = v.to_string(),
                "method" => r.method = v.to_string(),
                "settings" => r.settings = v.to_string(),
                "dataset" => r.dataset = v.to_string(),
                "k" => r.k = Some(int(k, v)?),
                "waic" => r.waic = num(k, v)?,
                "dic" => r.dic = num(k, v)?,
                "mse" => r.mse = num(k, v)?,
                "r2" => r.r2 = num(k, v)?,
                "runtime_sec" => r.runtime_sec = num(k, v)?,
                "elbo" => r.elbo = Some(num(k, v)?),
                "iterations" => r.iterations = Some(int(k, v)?),
                "k_posterior" => {
                    let mut h = BTreeMap::new();
                    for item in v.split(',').filter(|s| !s.is_empty()) {
                        let (a, b) = item
                            .split_once(':')
                            .ok_or_else(|| Error::Format(format!("k_posterior entry {item:?}")))?;
                        h.insert(int(k, a)?, num(k, b)?);
                    }
                    r.k_posterior = Some(h);
                }
                "cocluster" => {
                    let rows: Vec<Vec<f64>> = v
                        .split(';')
                        .map(|row| row.split(',').map(|x| num(k, x)).collect::<Result<Vec<_>>>())
                        .collect::<Result<_>>()?;
                    let m = rows.len();
                    if rows.iter().any(|row| row.len() != m) {
                        return Err(Error::Format("cocluster matrix is not square".into()));
                    }
                    r.cocluster = Some(DMatrix::from_fn(m, m, |i, j| rows[i][j]));
                }
                _ => {
                    let d = k
                        .strip_prefix("ppp_")
                        .and_then(|n| Discrepancy::ALL.into_iter().find(|d| d.name() == n))
                        .ok_or_else(|| Error::Format(format!("report line {}: unknown key {k:?}", ln + 1)))?;
                    ppp.insert(d, num(k, v)?);
                }
            }
        }
        if !ppp.is_empty() {
            if ppp.len() != Discrepancy::ALL.len() {
                return Err(Error::Format("report has only some ppp_ entries".into()));
            }
            let mut s = PppSummary {
                min: 0.0,
                max: 0.0,
                iqr: 0.0,
                mean: 0.0,
                median: 0.0,
                sd: 0.0,
            };
            for (d, v) in ppp {
                s.set(d, v);
            }
            r.ppp = Some(s);
        }
        Ok(r)
    }
}
