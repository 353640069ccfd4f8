//! Regression data containers with cached sufficient statistics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{gram_rank, trace_of_product, Cholesky};

/// (n, XᵀX, Xᵀy, yᵀy) for one block of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub n: usize,
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
}

impl SuffStats {
    pub fn zeros(p: usize) -> Self {
        Self {
            n: 0,
            xtx: DMatrix::zeros(p, p),
            xty: DVector::zeros(p),
            yty: 0.0,
        }
    }

    pub fn from_data(y: &DVector<f64>, x: &DMatrix<f64>) -> Self {
        Self {
            n: y.len(),
            xtx: x.tr_mul(x),
            xty: x.tr_mul(y),
            yty: y.dot(y),
        }
    }

    pub fn add(&mut self, other: &SuffStats) {
        self.n += other.n;
        self.xtx += &other.xtx;
        self.xty += &other.xty;
        self.yty += other.yty;
    }

    /// ‖y − Xβ‖² expanded through the statistics.
    pub fn rss(&self, beta: &DVector<f64>) -> f64 {
        let v = self.yty - 2.0 * beta.dot(&self.xty) + beta.dot(&(&self.xtx * beta));
        v.max(0.0)
    }

    /// E‖y − Xβ‖² for β with mean `mu` and covariance `cov`.
    pub fn expected_rss(&self, mu: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        self.rss(mu) + trace_of_product(&self.xtx, cov)
    }
}

/// Response vector and design matrix of one regression block.
#[derive(Debug, Clone)]
pub struct RegressionData {
    y: DVector<f64>,
    x: DMatrix<f64>,
    stats: SuffStats,
}

impl PartialEq for RegressionData {
    fn eq(&self, other: &Self) -> bool {
        self.y == other.y && self.x == other.x
    }
}

impl RegressionData {
    /// Checks shapes and finiteness; rank is checked by the consumers that need it.
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but response has {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::Dimension("design matrix has no columns".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite response at row {i}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite entry in design matrix".into()));
        }
        let stats = SuffStats::from_data(&y, &x);
        Ok(Self { y, x, stats })
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn stats(&self) -> &SuffStats {
        &self.stats
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Errors unless n ≥ p + 1 and XᵀX has full rank.
    pub fn check_full_rank(&self) -> Result<()> {
        let p = self.p();
        if self.n() < p + 1 {
            return Err(Error::Data(format!("need at least p + 1 = {} rows, got {}", p + 1, self.n())));
        }
        let rank = gram_rank(&self.stats.xtx);
        if rank < p {
            return Err(Error::RankDeficient { rank, p });
        }
        Ok(())
    }

    /// Rows reordered by `perm` (row i of the result is row perm[i]).
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n() {
            return Err(Error::Dimension("permutation length differs from n".into()));
        }
        let y = DVector::from_iterator(self.n(), perm.iter().map(|&i| self.y[i]));
        let x = DMatrix::from_fn(self.n(), self.p(), |r, c| self.x[(perm[r], c)]);
        Self::new(y, x)
    }
}

/// Ordinary least squares fit with the unbiased residual variance.
#[derive(Debug, Clone)]
pub struct Ols {
    pub beta: DVector<f64>,
    /// RSS / (n − p)
    pub sigma2: f64,
    pub rss: f64,
    pub xtx_inv: DMatrix<f64>,
}

impl Ols {
    pub fn fit(data: &RegressionData) -> Result<Self> {
        data.check_full_rank()?;
        Self::from_stats(data.stats(), data.p())
    }

    fn from_stats(stats: &SuffStats, p: usize) -> Result<Self> {
        let chol = Cholesky::new_jittered(&stats.xtx, "XᵀX")?;
        let beta = chol.solve(&stats.xty);
        let rss = stats.rss(&beta);
        let dof = stats.n as f64 - p as f64;
        Ok(Self {
            beta,
            sigma2: rss / dof,
            rss,
            xtx_inv: chol.inverse(),
        })
    }
}

/// Responses and designs partitioned into m groups sharing p columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    groups: Vec<RegressionData>,
    labels: Vec<String>,
    response_name: String,
    predictor_names: Vec<String>,
}

impl GroupedDataset {
    /// `predictor_names` names the columns of each X_j (including any intercept).
    pub fn new(
        groups: Vec<RegressionData>,
        labels: Vec<String>,
        response_name: impl Into<String>,
        predictor_names: Vec<String>,
    ) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Data("dataset has no groups".into()));
        }
        if labels.len() != groups.len() {
            return Err(Error::Dimension("one label per group required".into()));
        }
        let p = groups[0].p();
        for (g, l) in groups.iter().zip(&labels) {
            if g.p() != p {
                return Err(Error::Dimension(format!("group `{l}` has {} columns, expected {p}", g.p())));
            }
            if g.n() == 0 {
                return Err(Error::Data(format!("group `{l}` is empty")));
            }
        }
        if predictor_names.len() != p {
            return Err(Error::Dimension(format!(
                "{} predictor names for {p} design columns",
                predictor_names.len()
            )));
        }
        Ok(Self {
            groups,
            labels,
            response_name: response_name.into(),
            predictor_names,
        })
    }

    /// One-group dataset with generic column names.
    pub fn single(data: RegressionData) -> Self {
        let p = data.p();
        Self {
            groups: vec![data],
            labels: vec!["all".into()],
            response_name: "y".into(),
            predictor_names: (0..p).map(|i| format!("x{i}")).collect(),
        }
    }

    pub fn groups(&self) -> &[RegressionData] {
        &self.groups
    }

    pub fn group(&self, j: usize) -> &RegressionData {
        &self.groups[j]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn predictor_names(&self) -> &[String] {
        &self.predictor_names
    }

    pub fn m(&self) -> usize {
        self.groups.len()
    }

    pub fn p(&self) -> usize {
        self.groups[0].p()
    }

    pub fn total_n(&self) -> usize {
        self.groups.iter().map(|g| g.n()).sum()
    }

    /// All groups stacked in group order.
    pub fn stacked(&self) -> RegressionData {
        let n = self.total_n();
        let p = self.p();
        let mut y = DVector::zeros(n);
        let mut x = DMatrix::zeros(n, p);
        let mut r = 0;
        for g in &self.groups {
            for i in 0..g.n() {
                y[r] = g.y()[i];
                x.set_row(r, &g.x().row(i));
                r += 1;
            }
        }
        RegressionData::new(y, x).expect("groups were validated")
    }

    /// Responses pooled in group order.
    pub fn pooled_y(&self) -> Vec<f64> {
        self.groups.iter().flat_map(|g| g.y().iter().copied()).collect()
    }

    /// Group index of every pooled observation.
    pub fn observation_groups(&self) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(j, g)| std::iter::repeat(j).take(g.n()))
            .collect()
    }

    /// A cheap fingerprint used to flag comparisons across different datasets.
    pub fn fingerprint(&self) -> String {
        let y = self.pooled_y();
        let s: f64 = y.iter().sum();
        let s2: f64 = y.iter().map(|v| v * v).sum();
        format!("m{}-n{}-p{}-{:.6e}-{:.6e}", self.m(), self.total_n(), self.p(), s, s2)
    }
}
