use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hlrm_core::chlrm::{chlrm_cavi, chlrm_default_prior, chlrm_gibbs};
use hlrm_core::config::{CaviConfig, GibbsConfig, SviConfig};
use hlrm_core::dataio::{
    load_csv, parse_key_values, save_chlrm_draws, save_chlrm_state, save_draws, save_lrm_state, simulate, write_csv,
    DatasetSchema, SimulationSpec,
};
use hlrm_core::dataset::GroupedDataset;
use hlrm_core::diagnostics::{k_posterior, FitReport};
use hlrm_core::workflow::{fit, FitOptions, Fitted, Method, ModelKind};

#[derive(Parser)]
#[command(name = "hlrm", version, about = "Bayesian linear and clustered hierarchical linear regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and write data.csv, schema.txt, truth.txt and spec.txt.
    Simulate(SimulateArgs),
    /// Fit one model with one method and write the report, trace and draws.
    Fit(FitArgs),
    /// Fit the clustered model by coordinate ascent over a range of K.
    SelectK(SelectKArgs),
    /// Tabulate two or more fit reports.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation spec (key=value). Defaults to the three-cluster benchmark.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// Options shared by `fit` and `select-k`. Every option may also be given in
/// the `--config` file as `name=value` using the long flag name; flags win.
#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Column roles (key=value). Without it the CSV layout written by `simulate` is assumed.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Relative ELBO change that stops coordinate ascent.
    #[arg(long)]
    tol: Option<f64>,
    /// Coordinate-ascent iteration cap, or the SVI iteration count.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    minibatch: Option<usize>,
    #[arg(long)]
    chi: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Draws used for WAIC, DIC, MSE and R².
    #[arg(long)]
    draws: Option<usize>,
    /// Posterior predictive replicates (0 skips the check).
    #[arg(long)]
    ppp_reps: Option<usize>,
}

#[derive(Args)]
struct SelectKArgs {
    #[command(flatten)]
    common: Common,
    /// `a..b` (inclusive) or a single K.
    #[arg(long)]
    k_range: Option<String>,
    /// Also run the Gibbs sampler at the largest K and report the posterior
    /// of the number of nonempty clusters.
    #[arg(long)]
    mcmc: bool,
}

#[derive(Args)]
struct CompareArgs {
    reports: Vec<PathBuf>,
    /// Also write the table as tab-separated values.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Bad command-line input; mapped to exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let res = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::SelectK(a) => cmd_select_k(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Flag values layered over an optional config file.
struct Layered {
    file: HashMap<String, String>,
}

impl Layered {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self { file: HashMap::new() });
        };
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let file: HashMap<String, String> = parse_key_values(&text)
            .map_err(|e| usage(format!("config {}: {e}", path.display())))?
            .into_iter()
            .map(|(k, v)| (k.replace('_', "-"), v))
            .collect();
        Ok(Self { file })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config key {key}: cannot parse {v:?}: {e}"))),
        }
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        let mut bad: Vec<&String> = self.file.keys().filter(|k| !known.contains(&k.as_str())).collect();
        bad.sort();
        match bad.first() {
            Some(k) => Err(usage(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }
}

const COMMON_KEYS: [&str; 10] =
    ["data", "schema", "samples", "burn-in", "thin", "tol", "max-iter", "restarts", "seed", "out"];

/// Settings resolved from flags, config file and defaults.
struct RunConfig {
    data: PathBuf,
    schema: Option<PathBuf>,
    gibbs: GibbsConfig,
    cavi: CaviConfig,
    max_iter: Option<usize>,
    seed: u64,
    out: PathBuf,
}

impl RunConfig {
    fn resolve(c: &Common, cfg: &Layered) -> Result<Self> {
        let data = cfg
            .get(c.data.clone(), "data")?
            .ok_or_else(|| usage("--data is required"))?;
        let seed = cfg.get(c.seed, "seed")?.unwrap_or(0);
        let samples = cfg.get(c.samples, "samples")?.unwrap_or(50_000);
        let gibbs = GibbsConfig {
            n_samples: samples,
            burn_in: cfg.get(c.burn_in, "burn-in")?.unwrap_or(samples / 5),
            thin: cfg.get(c.thin, "thin")?.unwrap_or(10),
            seed,
        };
        gibbs.validate().map_err(|e| usage(e.to_string()))?;
        let max_iter = cfg.get(c.max_iter, "max-iter")?;
        let cavi = CaviConfig {
            max_iter: max_iter.unwrap_or(1000),
            rel_tol: cfg.get(c.tol, "tol")?.unwrap_or(1e-9),
            seed,
            restarts: cfg.get(c.restarts, "restarts")?.unwrap_or(5),
        };
        cavi.validate().map_err(|e| usage(e.to_string()))?;
        Ok(Self {
            data,
            schema: cfg.get(c.schema.clone(), "schema")?,
            gibbs,
            cavi,
            max_iter,
            seed,
            out: cfg.get(c.out.clone(), "out")?.unwrap_or_else(|| PathBuf::from("hlrm_out")),
        })
    }

    fn load_data(&self) -> Result<GroupedDataset> {
        let schema = match &self.schema {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("cannot read schema {}", p.display()))?;
                DatasetSchema::parse(&text).with_context(|| format!("schema {}", p.display()))?
            }
            None => default_schema(&self.data)?,
        };
        Ok(load_csv(&self.data, &schema)?)
    }
}

/// `schema.txt` next to the CSV if present, else `y ~ x1..` grouped by `group`.
fn default_schema(data: &Path) -> Result<DatasetSchema> {
    let sibling = data.with_file_name("schema.txt");
    if sibling.is_file() {
        let text = fs::read_to_string(&sibling)?;
        return Ok(DatasetSchema::parse(&text).with_context(|| format!("schema {}", sibling.display()))?);
    }
    let header = fs::read_to_string(data)
        .with_context(|| format!("cannot read {}", data.display()))?
        .lines()
        .next()
        .unwrap_or("")
        .to_string();
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if !cols.contains(&"y") {
        return Err(usage("no --schema given and the CSV has no `y` column"));
    }
    Ok(DatasetSchema {
        response: "y".into(),
        predictors: cols.iter().filter(|c| c.starts_with('x')).map(|c| c.to_string()).collect(),
        group: cols.contains(&"group").then(|| "group".to_string()),
        intercept: true,
    })
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read spec {}", p.display()))?;
            SimulationSpec::parse(&text).with_context(|| format!("spec {}", p.display()))?
        }
        None => SimulationSpec::paper_chlrm(0),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    spec.validate()?;
    let (data, truth) = simulate(&spec)?;
    fs::create_dir_all(&a.out)?;
    let mut buf = Vec::new();
    let schema = write_csv(&mut buf, &data, data.m() > 1)?;
    fs::write(a.out.join("data.csv"), buf)?;
    fs::write(a.out.join("schema.txt"), schema.to_text())?;
    fs::write(a.out.join("truth.txt"), truth.to_text())?;
    fs::write(a.out.join("spec.txt"), spec.to_text())?;
    println!(
        "simulated {} rows in {} groups (seed {}) -> {}",
        data.total_n(),
        data.m(),
        spec.seed,
        a.out.display()
    );
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let cfg = Layered::load(a.common.config.as_deref())?;
    let mut known = COMMON_KEYS.to_vec();
    known.extend(["model", "method", "k", "minibatch", "chi", "tau", "draws", "ppp-reps"]);
    cfg.reject_unknown(&known)?;
    let run = RunConfig::resolve(&a.common, &cfg)?;
    let model: ModelKind = cfg
        .get(a.model.clone(), "model")?
        .ok_or_else(|| usage("--model is required"))?
        .parse()
        .map_err(|e: hlrm_core::Error| usage(e.to_string()))?;
    let method: Method = cfg
        .get(a.method.clone(), "method")?
        .ok_or_else(|| usage("--method is required"))?
        .parse()
        .map_err(|e: hlrm_core::Error| usage(e.to_string()))?;
    if model == ModelKind::Lrm && method == Method::Svi {
        return Err(usage("svi is only available for --model chlrm"));
    }
    let k = cfg.get(a.k, "k")?.unwrap_or(3);
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let chi = cfg.get(a.chi, "chi")?.unwrap_or(0.7);
    let tau = cfg.get(a.tau, "tau")?.unwrap_or(25.8);
    let minibatch = cfg.get(a.minibatch, "minibatch")?;
    if method == Method::Svi {
        // range checks that do not need the data
        let probe = SviConfig { minibatch: 1, tau, chi, iters: 1, seed: 0, rel_tol: 0.0 };
        probe.validate(1).map_err(|e| usage(e.to_string()))?;
        if minibatch == Some(0) {
            return Err(usage("--minibatch must be at least 1"));
        }
    }
    let draws = cfg.get(a.draws, "draws")?.unwrap_or(1000);
    if draws < 2 {
        return Err(usage("--draws must be at least 2"));
    }
    let ppp_reps = cfg.get(a.ppp_reps, "ppp-reps")?.unwrap_or(1000);
    if ppp_reps != 0 && ppp_reps < 100 {
        return Err(usage("--ppp-reps must be 0 or at least 100"));
    }

    let data = run.load_data()?;
    let m = data.m();
    let svi = SviConfig {
        minibatch: minibatch.unwrap_or((4 * m).div_ceil(5)),
        tau,
        chi,
        iters: run.max_iter.unwrap_or(100),
        seed: run.seed,
        rel_tol: 0.0,
    };
    if method == Method::Svi {
        svi.validate(m).map_err(|e| usage(e.to_string()))?;
    }
    let opts = FitOptions {
        k,
        gibbs: run.gibbs,
        cavi: run.cavi,
        svi,
        criterion_draws: draws,
        ppp_reps: (ppp_reps > 0).then_some(ppp_reps),
        seed: run.seed,
    };
    let out = fit(&data, model, method, &opts)?;

    fs::create_dir_all(&run.out)?;
    fs::write(run.out.join("report.txt"), out.report.to_text())?;
    let first = if method == Method::Svi { 0 } else { 1 };
    fs::write(run.out.join("trace.txt"), trace_text(&out.trace, first))?;
    match &out.fitted {
        Fitted::LrmMcmc(d) => save_draws(run.out.join("draws.bin"), d)?,
        Fitted::LrmVi(s, d) => {
            save_lrm_state(run.out.join("state.bin"), s)?;
            save_draws(run.out.join("draws.bin"), d)?;
        }
        Fitted::ChlrmMcmc(d) => save_chlrm_draws(run.out.join("draws.bin"), d)?,
        Fitted::ChlrmVi(s, d) => {
            save_chlrm_state(run.out.join("state.bin"), s)?;
            save_chlrm_draws(run.out.join("draws.bin"), d)?;
        }
    }
    print!("{}", report_summary(&out.report));
    println!("outputs written to {}", run.out.display());
    Ok(())
}

fn trace_text(values: &[f64], first: usize) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{} {v:?}", i + first);
    }
    s
}

fn report_summary(r: &FitReport) -> String {
    let mut s = String::new();
    let k = r.k.map(|k| format!(" K={k}")).unwrap_or_default();
    let _ = writeln!(s, "{} {}{k}  [{}]", r.model, r.method, r.settings);
    let _ = writeln!(s, "  WAIC {:>12.3}   DIC {:>12.3}", r.waic, r.dic);
    let _ = writeln!(s, "  MSE  {:>12.4}   R²  {:>12.4}", r.mse, r.r2);
    if let Some(e) = r.elbo {
        let _ = writeln!(s, "  ELBO {e:>12.3}   iterations {}", r.iterations.unwrap_or(0));
    }
    let _ = writeln!(s, "  time {:>10.3} s", r.runtime_sec);
    if let Some(p) = &r.ppp {
        let _ = writeln!(
            s,
            "  ppp  min {:.2} max {:.2} IQR {:.2} mean {:.2} median {:.2} sd {:.2}",
            p.min, p.max, p.iqr, p.mean, p.median, p.sd
        );
    }
    if let Some(h) = &r.k_posterior {
        let cells: Vec<String> = h.iter().map(|(k, p)| format!("{k}:{p:.3}")).collect();
        let _ = writeln!(s, "  nonempty clusters  {}", cells.join(" "));
    }
    s
}

fn parse_k_range(s: &str) -> Result<Vec<usize>> {
    let bad = || usage(format!("--k-range expects `a..b` or a single K, got {s:?}"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let k: usize = s.trim().parse().map_err(|_| bad())?;
            (k, k)
        }
    };
    if lo == 0 || hi < lo {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

fn cmd_select_k(a: SelectKArgs) -> Result<()> {
    let cfg = Layered::load(a.common.config.as_deref())?;
    let mut known = COMMON_KEYS.to_vec();
    known.extend(["k-range", "mcmc"]);
    cfg.reject_unknown(&known)?;
    let run = RunConfig::resolve(&a.common, &cfg)?;
    let ks = parse_k_range(
        &cfg.get(a.k_range.clone(), "k-range")?
            .ok_or_else(|| usage("--k-range is required"))?,
    )?;
    let with_mcmc = a.mcmc || cfg.get(None::<bool>, "mcmc")?.unwrap_or(false);
    let data = run.load_data()?;

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(ks.len());
    let mut rows: Vec<(usize, f64)> = Vec::with_capacity(ks.len());
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let mine: Vec<usize> = ks.iter().copied().skip(w).step_by(workers).collect();
                let (data, cavi) = (&data, &run.cavi);
                scope.spawn(move || -> hlrm_core::Result<Vec<(usize, f64)>> {
                    mine.into_iter()
                        .map(|k| {
                            let prior = chlrm_default_prior(data, k)?;
                            Ok((k, chlrm_cavi(data, &prior, cavi)?.elbo()))
                        })
                        .collect()
                })
            })
            .collect();
        for h in handles {
            rows.extend(h.join().expect("worker panicked")?);
        }
        Ok(())
    })?;
    rows.sort_by_key(|r| r.0);

    let best = rows.iter().copied().fold((0, f64::NEG_INFINITY), |b, r| if r.1 > b.1 { r } else { b });
    fs::create_dir_all(&run.out)?;
    let mut table = String::new();
    for &(k, e) in &rows {
        let _ = writeln!(table, "{k} {e:?}");
    }
    fs::write(run.out.join("elbo_k.txt"), &table)?;
    println!("{:>4}  {:>14}", "K", "ELBO");
    for &(k, e) in &rows {
        let mark = if k == best.0 { "  <- max" } else { "" };
        println!("{k:>4}  {e:>14.3}{mark}");
    }

    if with_mcmc {
        let kmax = *ks.last().expect("non-empty range");
        let prior = chlrm_default_prior(&data, kmax)?;
        let draws = chlrm_gibbs(&data, &prior, &run.gibbs)?;
        let hist = k_posterior(&draws.assignments());
        let mut text = String::new();
        for (k, p) in &hist {
            let _ = writeln!(text, "{k} {p:?}");
        }
        fs::write(run.out.join("kappa.txt"), &text)?;
        println!("nonempty clusters under MCMC with K = {kmax}:");
        for (k, p) in &hist {
            println!("{k:>4}  {p:>8.4}");
        }
    }
    println!("outputs written to {}", run.out.display());
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    if a.reports.len() < 2 {
        return Err(usage("compare needs at least two reports"));
    }
    let reports = a
        .reports
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            FitReport::parse(&text).with_context(|| format!("report {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mismatch = reports.iter().any(|r| r.dataset != reports[0].dataset);
    let banner = "WARNING: reports were fitted to different datasets";

    let header = ["Model", "Method", "Settings", "WAIC", "DIC", "MSE", "R2", "Time(s)"];
    let rows: Vec<[String; 8]> = reports
        .iter()
        .map(|r| {
            let model = match r.k {
                Some(k) => format!("{} K={k}", r.model),
                None => r.model.clone(),
            };
            [
                model,
                r.method.clone(),
                r.settings.clone(),
                format!("{:.3}", r.waic),
                format!("{:.3}", r.dic),
                format!("{:.3}", r.mse),
                format!("{:.3}", r.r2),
                format!("{:.3}", r.runtime_sec),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    if mismatch {
        println!("{banner}");
    }
    let line = |cells: Vec<&str>| -> String {
        cells
            .iter()
            .zip(width)
            .enumerate()
            .map(|(i, (c, w))| if i < 3 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", line(header.to_vec()));
    for row in &rows {
        println!("{}", line(row.iter().map(String::as_str).collect()));
    }

    if let Some(path) = &a.out {
        let mut tsv = String::new();
        if mismatch {
            let _ = writeln!(tsv, "# {banner}");
        }
        let _ = writeln!(tsv, "{}", header.join("\t"));
        for row in &rows {
            let _ = writeln!(tsv, "{}", row.join("\t"));
        }
        fs::write(path, tsv)?;
    }
    Ok(())
}
