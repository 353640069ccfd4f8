//! Column-major binary store.
//!
//! Layout: one line of JSON (format tag, version, kind, attributes and the
//! name and length of every column), a newline, then each column's values as
//! little-endian f64 in header order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chlrm::{ChlrmDraws, ChlrmSample, ChlrmVarState};
use crate::config::DrawMeta;
use crate::error::{Error, Result};
use crate::lrm::{LrmVarState, PosteriorDraws};

pub const STORE_VERSION: u32 = 1;
const FORMAT_TAG: &str = "hlrm-store";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
    attrs: Value,
    columns: Vec<(String, usize)>,
}

/// Named f64 columns plus JSON attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStore {
    pub kind: String,
    pub attrs: Value,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl ColumnStore {
    pub fn new(kind: &str, attrs: Value) -> Self {
        Self {
            kind: kind.to_string(),
            attrs,
            columns: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, values: impl IntoIterator<Item = f64>) {
        self.columns.push((name.to_string(), values.into_iter().collect()));
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Format(format!("{} store has no column `{name}`", self.kind)))
    }

    fn attr<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self
            .attrs
            .get(key)
            .ok_or_else(|| Error::Format(format!("{} store lacks attribute `{key}`", self.kind)))?;
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            format: FORMAT_TAG.into(),
            version: STORE_VERSION,
            kind: self.kind.clone(),
            attrs: self.attrs.clone(),
            columns: self.columns.iter().map(|(n, v)| (n.clone(), v.len())).collect(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for (_, v) in &self.columns {
            let mut buf = Vec::with_capacity(v.len() * 8);
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if !line.ends_with('\n') {
            return Err(Error::Format("truncated header".into()));
        }
        let header: Header = serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Format(format!("unreadable header: {e}")))?;
        if header.format != FORMAT_TAG {
            return Err(Error::Format(format!("not a store file (format {:?})", header.format)));
        }
        if header.version != STORE_VERSION {
            return Err(Error::Version {
                found: header.version,
                expected: STORE_VERSION,
            });
        }
        let mut columns = Vec::with_capacity(header.columns.len());
        for (name, len) in header.columns {
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes).map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated in column `{name}`")),
                _ => Error::Io(e),
            })?;
            let v = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            columns.push((name, v));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after the last column".into()));
        }
        Ok(Self {
            kind: header.kind,
            attrs: header.attrs,
            columns,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }

    fn expect_kind(self, kind: &str) -> Result<Self> {
        if self.kind != kind {
            return Err(Error::Format(format!("expected a {kind} store, found {}", self.kind)));
        }
        Ok(self)
    }
}

fn need_len(v: &[f64], len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::Format(format!("column `{what}` has {} values, expected {len}", v.len())));
    }
    Ok(())
}

fn to_index(x: f64, k: usize) -> Result<usize> {
    if x.fract() != 0.0 || x < 0.0 || x >= k as f64 {
        return Err(Error::Format(format!("assignment {x} outside 0..{k}")));
    }
    Ok(x as usize)
}

fn draws_store(d: &PosteriorDraws) -> ColumnStore {
    let mut s = ColumnStore::new(
        "lrm_draws",
        json!({ "meta": d.meta, "names": d.names, "n_draws": d.n_draws() }),
    );
    for (c, name) in d.names.iter().enumerate() {
        s.push(name, d.draws.column(c).iter().copied());
    }
    s.push("log_joint", d.log_joint.iter().copied());
    s
}

pub fn save_draws(path: impl AsRef<Path>, d: &PosteriorDraws) -> Result<()> {
    draws_store(d).save(path)
}

pub fn load_draws(path: impl AsRef<Path>) -> Result<PosteriorDraws> {
    let s = ColumnStore::load(path)?.expect_kind("lrm_draws")?;
    let names: Vec<String> = s.attr("names")?;
    let n: usize = s.attr("n_draws")?;
    let cols = names.iter().map(|nm| s.column(nm)).collect::<Result<Vec<_>>>()?;
    for (c, nm) in cols.iter().zip(&names) {
        need_len(c, n, nm)?;
    }
    Ok(PosteriorDraws {
        draws: DMatrix::from_fn(n, names.len(), |r, c| cols[c][r]),
        names,
        meta: s.attr::<DrawMeta>("meta")?,
        log_joint: s.column("log_joint")?.to_vec(),
    })
}

pub fn save_chlrm_draws(path: impl AsRef<Path>, d: &ChlrmDraws) -> Result<()> {
    let mut s = ColumnStore::new(
        "chlrm_draws",
        json!({ "meta": d.meta, "k": d.k, "p": d.p, "m": d.m, "n_draws": d.n_draws() }),
    );
    let smp = &d.samples;
    s.push("gamma", smp.iter().flat_map(|x| x.gamma.iter().map(|&g| g as f64)));
    s.push("omega", smp.iter().flat_map(|x| x.omega.iter().copied()));
    s.push("betas", smp.iter().flat_map(|x| x.betas.iter().flat_map(|b| b.iter().copied())));
    s.push("sigma2", smp.iter().flat_map(|x| x.sigma2.iter().copied()));
    s.push("beta", smp.iter().flat_map(|x| x.beta.iter().copied()));
    s.push("sigma", smp.iter().flat_map(|x| x.sigma.iter().copied()));
    s.push("xi2", smp.iter().map(|x| x.xi2));
    s.push("log_joint", d.log_joint.iter().copied());
    s.save(path)
}

pub fn load_chlrm_draws(path: impl AsRef<Path>) -> Result<ChlrmDraws> {
    let s = ColumnStore::load(path)?.expect_kind("chlrm_draws")?;
    let (k, p, m, n): (usize, usize, usize, usize) = (s.attr("k")?, s.attr("p")?, s.attr("m")?, s.attr("n_draws")?);
    let gamma = s.column("gamma")?;
    let omega = s.column("omega")?;
    let betas = s.column("betas")?;
    let sigma2 = s.column("sigma2")?;
    let beta = s.column("beta")?;
    let sigma = s.column("sigma")?;
    let xi2 = s.column("xi2")?;
    need_len(gamma, n * m, "gamma")?;
    need_len(omega, n * k, "omega")?;
    need_len(betas, n * k * p, "betas")?;
    need_len(sigma2, n * k, "sigma2")?;
    need_len(beta, n * p, "beta")?;
    need_len(sigma, n * p * p, "sigma")?;
    need_len(xi2, n, "xi2")?;
    let mut samples = Vec::with_capacity(n);
    for b in 0..n {
        samples.push(ChlrmSample {
            gamma: gamma[b * m..(b + 1) * m]
                .iter()
                .map(|&g| to_index(g, k))
                .collect::<Result<_>>()?,
            omega: omega[b * k..(b + 1) * k].to_vec(),
            betas: (0..k)
                .map(|c| DVector::from_column_slice(&betas[(b * k + c) * p..(b * k + c + 1) * p]))
                .collect(),
            sigma2: sigma2[b * k..(b + 1) * k].to_vec(),
            beta: DVector::from_column_slice(&beta[b * p..(b + 1) * p]),
            sigma: DMatrix::from_column_slice(p, p, &sigma[b * p * p..(b + 1) * p * p]),
            xi2: xi2[b],
        });
    }
    Ok(ChlrmDraws {
        k,
        p,
        m,
        samples,
        meta: s.attr("meta")?,
        log_joint: s.column("log_joint")?.to_vec(),
    })
}

pub fn save_lrm_state(path: impl AsRef<Path>, st: &LrmVarState) -> Result<()> {
    let mut s = ColumnStore::new(
        "lrm_state",
        json!({ "p": st.mu_beta.len(), "iterations": st.iterations, "converged": st.converged }),
    );
    s.push("mu_beta", st.mu_beta.iter().copied());
    s.push("sigma_beta", st.sigma_beta.iter().copied());
    s.push("ab", [st.a, st.b]);
    s.push("elbo_trace", st.elbo_trace.iter().copied());
    s.save(path)
}

pub fn load_lrm_state(path: impl AsRef<Path>) -> Result<LrmVarState> {
    let s = ColumnStore::load(path)?.expect_kind("lrm_state")?;
    let p: usize = s.attr("p")?;
    let mu = s.column("mu_beta")?;
    let sig = s.column("sigma_beta")?;
    let ab = s.column("ab")?;
    need_len(mu, p, "mu_beta")?;
    need_len(sig, p * p, "sigma_beta")?;
    need_len(ab, 2, "ab")?;
    Ok(LrmVarState {
        mu_beta: DVector::from_column_slice(mu),
        sigma_beta: DMatrix::from_column_slice(p, p, sig),
        a: ab[0],
        b: ab[1],
        elbo_trace: s.column("elbo_trace")?.to_vec(),
        iterations: s.attr("iterations")?,
        converged: s.attr("converged")?,
    })
}

pub fn save_chlrm_state(path: impl AsRef<Path>, st: &ChlrmVarState) -> Result<()> {
    let mut s = ColumnStore::new(
        "chlrm_state",
        json!({
            "k": st.k(), "p": st.p(), "m": st.m(),
            "iterations": st.iterations, "converged": st.converged, "restart": st.restart,
        }),
    );
    let flat_m = |v: &[DMatrix<f64>]| v.iter().flat_map(|x| x.iter().copied()).collect::<Vec<_>>();
    let flat_v = |v: &[DVector<f64>]| v.iter().flat_map(|x| x.iter().copied()).collect::<Vec<_>>();
    s.push("rho", st.rho.iter().copied());
    s.push("alpha_omega", st.alpha_omega.iter().copied());
    s.push("mu_k", flat_v(&st.mu_k));
    s.push("sigma_k", flat_m(&st.sigma_k));
    s.push("prec_k", flat_m(&st.prec_k));
    s.push("h_k", flat_v(&st.h_k));
    s.push("a_sig", st.a_sig.iter().copied());
    s.push("b_sig", st.b_sig.iter().copied());
    s.push("mu_beta", st.mu_beta.iter().copied());
    s.push("sigma_beta", st.sigma_beta.iter().copied());
    s.push("prec_beta", st.prec_beta.iter().copied());
    s.push("h_beta", st.h_beta.iter().copied());
    s.push("s_sigma", st.s_sigma.iter().copied());
    s.push("scalars", [st.nu_sigma, st.a_xi, st.b_xi]);
    s.push("elbo_trace", st.elbo_trace.iter().copied());
    s.save(path)
}

pub fn load_chlrm_state(path: impl AsRef<Path>) -> Result<ChlrmVarState> {
    let s = ColumnStore::load(path)?.expect_kind("chlrm_state")?;
    let (k, p, m): (usize, usize, usize) = (s.attr("k")?, s.attr("p")?, s.attr("m")?);
    let col = |name: &str, len: usize| -> Result<&[f64]> {
        let c = s.column(name)?;
        need_len(c, len, name)?;
        Ok(c)
    };
    let vecs = |v: &[f64]| (0..k).map(|c| DVector::from_column_slice(&v[c * p..(c + 1) * p])).collect::<Vec<_>>();
    let mats = |v: &[f64]| {
        (0..k)
            .map(|c| DMatrix::from_column_slice(p, p, &v[c * p * p..(c + 1) * p * p]))
            .collect::<Vec<_>>()
    };
    let scalars = col("scalars", 3)?;
    Ok(ChlrmVarState {
        rho: DMatrix::from_column_slice(m, k, col("rho", m * k)?),
        alpha_omega: col("alpha_omega", k)?.to_vec(),
        mu_k: vecs(col("mu_k", k * p)?),
        sigma_k: mats(col("sigma_k", k * p * p)?),
        prec_k: mats(col("prec_k", k * p * p)?),
        h_k: vecs(col("h_k", k * p)?),
        a_sig: col("a_sig", k)?.to_vec(),
        b_sig: col("b_sig", k)?.to_vec(),
        mu_beta: DVector::from_column_slice(col("mu_beta", p)?),
        sigma_beta: DMatrix::from_column_slice(p, p, col("sigma_beta", p * p)?),
        prec_beta: DMatrix::from_column_slice(p, p, col("prec_beta", p * p)?),
        h_beta: DVector::from_column_slice(col("h_beta", p)?),
        nu_sigma: scalars[0],
        s_sigma: DMatrix::from_column_slice(p, p, col("s_sigma", p * p)?),
        a_xi: scalars[1],
        b_xi: scalars[2],
        elbo_trace: s.column("elbo_trace")?.to_vec(),
        iterations: s.attr("iterations")?,
        converged: s.attr("converged")?,
        restart: s.attr("restart")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chlrm::{chlrm_default_prior, chlrm_gibbs, initial_state};
    use crate::config::GibbsConfig;
    use crate::dataio::{simulate, SimulationSpec};

    #[test]
    fn chlrm_draws_and_state_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (data, _) = simulate(&SimulationSpec::paper_chlrm(2)).unwrap();
        let prior = chlrm_default_prior(&data, 3).unwrap();
        let cfg = GibbsConfig {
            n_samples: 60,
            burn_in: 10,
            thin: 1,
            seed: 5,
        };
        let d = chlrm_gibbs(&data, &prior, &cfg).unwrap();
        let path = dir.path().join("d.bin");
        save_chlrm_draws(&path, &d).unwrap();
        assert_eq!(load_chlrm_draws(&path).unwrap(), d);

        let st = initial_state(&data, &prior, 3).unwrap();
        let path = dir.path().join("s.bin");
        save_chlrm_state(&path, &st).unwrap();
        assert_eq!(load_chlrm_state(&path).unwrap(), st);
    }

    #[test]
    fn version_and_truncation_errors() {
        let mut s = ColumnStore::new("x", json!({}));
        s.push("a", [1.0, 2.0, f64::MIN_POSITIVE]);
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(ColumnStore::read_from(buf.as_slice()).unwrap(), s);

        let cut = &buf[..buf.len() - 3];
        assert!(matches!(ColumnStore::read_from(cut), Err(Error::Format(_))));

        let text = String::from_utf8_lossy(&buf).replace("\"version\":1", "\"version\":2");
        let mut bumped = text.split('\n').next().unwrap().as_bytes().to_vec();
        bumped.push(b'\n');
        bumped.extend_from_slice(&buf[buf.iter().position(|&b| b == b'\n').unwrap() + 1..]);
        assert!(matches!(
            ColumnStore::read_from(bumped.as_slice()),
            Err(Error::Version { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn lrm_state_round_trip() {
        let (data, _) = simulate(&SimulationSpec::lrm(40, vec![1.0, 2.0], 1.0, 4)).unwrap();
        let prior = crate::lrm::unit_info_prior(data.group(0)).unwrap();
        let s = crate::lrm::lrm_cavi(data.group(0), &prior, &crate::config::CaviConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lrm.bin");
        save_lrm_state(&path, &s).unwrap();
        assert_eq!(load_lrm_state(&path).unwrap(), s);
    }
}
