use nalgebra::{DMatrix, DVector};

use super::csvio::INTERCEPT_NAME;
use super::parse_key_values;
use crate::dataset::{GroupedDataset, RegressionData};
use crate::error::{Error, Result};
use crate::exp_family::{categorical_sample, standard_normal, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimModel {
    Lrm,
    Chlrm,
}

impl SimModel {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lrm => "lrm",
            Self::Chlrm => "chlrm",
        }
    }
}

/// Generating parameters of a synthetic dataset.
///
/// Every design has a leading intercept column followed by p − 1 independent
/// standard normal covariates, so each coefficient vector has length p.
/// A linear-regression spec is the special case K = 1, m = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub model: SimModel,
    pub k: usize,
    pub m: usize,
    pub n_j: usize,
    pub p: usize,
    pub betas: Vec<DVector<f64>>,
    pub sigma2: Vec<f64>,
    pub omega: Vec<f64>,
    pub seed: u64,
}

/// The realised assignments next to the generating parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub gamma: Vec<usize>,
    pub betas: Vec<DVector<f64>>,
    pub sigma2: Vec<f64>,
    pub omega: Vec<f64>,
}

impl Truth {
    /// `key=value` lines; clusters are written 1-based.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut s = format!(
            "gamma={}\n",
            self.gamma.iter().map(|g| (g + 1).to_string()).collect::<Vec<_>>().join(",")
        );
        for (k, b) in self.betas.iter().enumerate() {
            s.push_str(&format!("beta_{}={}\n", k + 1, join(b.as_slice())));
        }
        s.push_str(&format!("sigma2={}\nomega={}\n", join(&self.sigma2), join(&self.omega)));
        s
    }
}

impl SimulationSpec {
    /// Three well separated clusters over 15 groups of 20 rows, p = 3.
    pub fn paper_chlrm(seed: u64) -> Self {
        Self {
            model: SimModel::Chlrm,
            k: 3,
            m: 15,
            n_j: 20,
            p: 3,
            betas: vec![
                DVector::from_vec(vec![-5.0, 8.0, 3.0]),
                DVector::from_vec(vec![10.0, -1.0, -2.0]),
                DVector::from_vec(vec![35.0, -8.0, -2.0]),
            ],
            sigma2: vec![16.0, 9.0, 4.0],
            omega: vec![0.4, 0.3, 0.3],
            seed,
        }
    }

    /// A single regression with n rows.
    pub fn lrm(n: usize, beta: Vec<f64>, sigma2: f64, seed: u64) -> Self {
        Self {
            model: SimModel::Lrm,
            k: 1,
            m: 1,
            n_j: n,
            p: beta.len(),
            betas: vec![DVector::from_vec(beta)],
            sigma2: vec![sigma2],
            omega: vec![1.0],
            seed,
        }
    }

    /// The six linear-regression scenarios: n ∈ {50, 100, 1000} crossed with
    /// β = (25, 10, −30), σ = 100 and β = (2, −12), σ = 4.
    pub fn lrm_scenarios(seed: u64) -> Vec<Self> {
        let mut out = Vec::new();
        for n in [50, 100, 1000] {
            out.push(Self::lrm(n, vec![25.0, 10.0, -30.0], 100.0 * 100.0, seed));
            out.push(Self::lrm(n, vec![2.0, -12.0], 4.0 * 4.0, seed));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 || self.n_j == 0 || self.p == 0 {
            return Err(Error::invalid("spec", "k, m, n_j and p must be positive"));
        }
        if self.model == SimModel::Lrm && (self.k != 1 || self.m != 1) {
            return Err(Error::invalid("spec", "a linear-regression spec has k = 1 and m = 1"));
        }
        if self.betas.len() != self.k || self.sigma2.len() != self.k || self.omega.len() != self.k {
            return Err(Error::Dimension(format!(
                "need {} coefficient vectors, variances and weights; got {}, {}, {}",
                self.k,
                self.betas.len(),
                self.sigma2.len(),
                self.omega.len()
            )));
        }
        if let Some(b) = self.betas.iter().position(|b| b.len() != self.p) {
            return Err(Error::Dimension(format!("beta_{} has length {}, expected p = {}", b + 1, self.betas[b].len(), self.p)));
        }
        if self.sigma2.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("sigma2", "variances must be positive"));
        }
        let sum: f64 = self.omega.iter().sum();
        if self.omega.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("omega", format!("must lie on the simplex (sum = {sum})")));
        }
        Ok(())
    }

    /// `model=lrm|chlrm`, `k`, `m`, `n_j` (or `n`), `p`, `beta_1..beta_K`
    /// (or `beta` when K = 1), `sigma2`, `omega` (comma lists) and `seed`.
    /// Missing dimensions are inferred from the parameter lists.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let list = |v: &str| -> Result<Vec<f64>> {
            v.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Format(format!("cannot parse {s:?} as a number"))))
                .collect()
        };
        let int = |k: &str, v: &str| -> Result<u64> {
            v.parse().map_err(|_| Error::Format(format!("{k}: cannot parse {v:?} as an integer")))
        };
        let mut model = SimModel::Chlrm;
        let (mut k, mut m, mut n_j, mut p) = (None, None, None, None);
        let mut betas: Vec<(usize, DVector<f64>)> = Vec::new();
        let mut sigma2 = None;
        let mut omega = None;
        let mut seed = 0;
        for (key, v) in &kv {
            match key.as_str() {
                "model" => {
                    model = match v.as_str() {
                        "lrm" => SimModel::Lrm,
                        "chlrm" => SimModel::Chlrm,
                        other => return Err(Error::Format(format!("unknown model {other:?}"))),
                    }
                }
                "k" => k = Some(int(key, v)? as usize),
                "m" => m = Some(int(key, v)? as usize),
                "n_j" | "n" => n_j = Some(int(key, v)? as usize),
                "p" => p = Some(int(key, v)? as usize),
                "seed" => seed = int(key, v)?,
                "beta" => betas.push((1, DVector::from_vec(list(v)?))),
                "sigma2" => sigma2 = Some(list(v)?),
                "omega" => omega = Some(list(v)?),
                other => {
                    let idx = other
                        .strip_prefix("beta_")
                        .and_then(|s| s.parse::<usize>().ok())
                        .filter(|&i| i >= 1)
                        .ok_or_else(|| Error::Format(format!("unknown spec key {other:?}")))?;
                    betas.push((idx, DVector::from_vec(list(v)?)));
                }
            }
        }
        betas.sort_by_key(|(i, _)| *i);
        if betas.iter().enumerate().any(|(pos, (i, _))| *i != pos + 1) {
            return Err(Error::Format("beta_k keys must run 1..K without gaps or repeats".into()));
        }
        let betas: Vec<DVector<f64>> = betas.into_iter().map(|(_, b)| b).collect();
        let k = k.unwrap_or(betas.len());
        let m = m.unwrap_or(if model == SimModel::Lrm { 1 } else { 0 });
        let spec = Self {
            model,
            k,
            m,
            n_j: n_j.ok_or_else(|| Error::Format("spec needs n_j (or n)".into()))?,
            p: p.unwrap_or_else(|| betas.first().map_or(0, |b| b.len())),
            omega: omega.unwrap_or_else(|| if k == 1 { vec![1.0] } else { Vec::new() }),
            sigma2: sigma2.ok_or_else(|| Error::Format("spec needs sigma2".into()))?,
            betas,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut s = format!(
            "model={}\nk={}\nm={}\nn_j={}\np={}\n",
            self.model.name(),
            self.k,
            self.m,
            self.n_j,
            self.p
        );
        for (i, b) in self.betas.iter().enumerate() {
            s.push_str(&format!("beta_{}={}\n", i + 1, join(b.as_slice())));
        }
        s.push_str(&format!(
            "sigma2={}\nomega={}\nseed={}\n",
            join(&self.sigma2),
            join(&self.omega),
            self.seed
        ));
        s
    }
}

/// Draw γ_j ~ Cat(ω) for every group, then each group's design and
/// y_ij ~ N(x_ijᵀβ_{γ_j}, σ²_{γ_j}). Deterministic in (spec, seed).
pub fn simulate(spec: &SimulationSpec) -> Result<(GroupedDataset, Truth)> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let gamma = (0..spec.m)
        .map(|_| categorical_sample(&mut rng, &spec.omega))
        .collect::<Result<Vec<_>>>()?;
    let mut groups = Vec::with_capacity(spec.m);
    for &k in &gamma {
        let mut x = DMatrix::zeros(spec.n_j, spec.p);
        for i in 0..spec.n_j {
            x[(i, 0)] = 1.0;
            for c in 1..spec.p {
                x[(i, c)] = standard_normal(&mut rng);
            }
        }
        let sd = spec.sigma2[k].sqrt();
        let mean = &x * &spec.betas[k];
        let y = DVector::from_fn(spec.n_j, |i, _| mean[i] + sd * standard_normal(&mut rng));
        groups.push(RegressionData::new(y, x)?);
    }
    let labels = (1..=spec.m).map(|j| format!("g{j}")).collect();
    let mut names = vec![INTERCEPT_NAME.to_string()];
    names.extend((1..spec.p).map(|c| format!("x{c}")));
    let data = GroupedDataset::new(groups, labels, "y", names)?;
    Ok((
        data,
        Truth {
            gamma,
            betas: spec.betas.clone(),
            sigma2: spec.sigma2.clone(),
            omega: spec.omega.clone(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Ols;

    #[test]
    fn chlrm_spec_shape_and_determinism() {
        let spec = SimulationSpec::paper_chlrm(8);
        let (d, t) = simulate(&spec).unwrap();
        assert_eq!(d.total_n(), 300);
        assert_eq!(d.m(), 15);
        assert_eq!(d.p(), 3);
        assert_eq!(t.gamma.len(), 15);
        let (d2, t2) = simulate(&spec).unwrap();
        assert_eq!(d, d2);
        assert_eq!(t, t2);
    }

    #[test]
    fn degenerate_weights_put_every_group_in_cluster_one() {
        let mut spec = SimulationSpec::paper_chlrm(1);
        spec.omega = vec![1.0, 0.0, 0.0];
        let (_, t) = simulate(&spec).unwrap();
        assert!(t.gamma.iter().all(|&g| g == 0));
    }

    #[test]
    fn lrm_ols_recovers_coefficients() {
        let spec = SimulationSpec::lrm(1000, vec![25.0, 10.0, -30.0], 100.0 * 100.0, 3);
        let (d, _) = simulate(&spec).unwrap();
        let ols = Ols::fit(&d.stacked()).unwrap();
        for c in 0..3 {
            let se = (ols.sigma2 * ols.xtx_inv[(c, c)]).sqrt();
            assert!((ols.beta[c] - spec.betas[0][c]).abs() < 3.0 * se, "coef {c}");
        }
    }

    #[test]
    fn spec_text_round_trip_and_validation() {
        let spec = SimulationSpec::paper_chlrm(42);
        assert_eq!(SimulationSpec::parse(&spec.to_text()).unwrap(), spec);
        let bad = spec.to_text().replace("omega=0.4,0.3,0.3", "omega=0.4,0.3,0.2");
        assert!(matches!(SimulationSpec::parse(&bad), Err(Error::InvalidParameter { .. })));
        let lrm = SimulationSpec::parse("model=lrm\nn=50\nbeta=2,-12\nsigma2=16\nseed=1\n").unwrap();
        assert_eq!(lrm, SimulationSpec::lrm(50, vec![2.0, -12.0], 16.0, 1));
    }
}
