//! The five subcommands, as library functions plus thin file wrappers.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use survcausal::design::DesignMatrix;
use survcausal::diagnostics::{prob_label, psrf, quantile, summarize, PsrfReport, SummaryTable};
use survcausal::freq_oracle::pch_mle;
use survcausal::gcomp::{gcompute, GcompConfig, GcompResult, GridSource};
use survcausal::hazard_model::SurvivalData;
use survcausal::rng::RNG_ID;
use survcausal::sampler::{sample, HazardPosterior};
use survcausal::{build_design, load_csv, parse_formula};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::files::{fmt17, time_header, write_draws, FitMeta, Table, ARTIFACT_VERSION};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Runs the sampler for `cfg`.
pub fn fit(cfg: &RunConfig) -> Result<(HazardPosterior, FitMeta), CliError> {
    let data = load_csv(&cfg.data, &cfg.time_col, &cfg.event_col, &cfg.treat_col)?;
    let spec = parse_formula(&cfg.formula)?;
    let posterior = sample(&data, &spec, &cfg.prior(), &cfg.sampler())?;
    let meta = FitMeta::new(cfg, &posterior);
    Ok((posterior, meta))
}

/// `fit`: writes `draws.csv` and `meta.json` into the output directory.
pub fn cmd_fit(cfg: &RunConfig) -> Result<(PathBuf, PathBuf), CliError> {
    let (posterior, meta) = fit(cfg)?;
    create_dir(&cfg.out_dir)?;
    let draws = cfg.out_dir.join("draws.csv");
    let meta_path = cfg.out_dir.join("meta.json");
    write_draws(&posterior, &draws)?;
    meta.write(&meta_path)?;
    eprintln!(
        "fit: {} draws × {} parameters, accept rate {:.3}, {} divergences",
        posterior.len(),
        posterior.layout().dim(),
        meta.accept_rate,
        meta.divergences
    );
    Ok((draws, meta_path))
}

/// Reloads the data and design a fit was run on, checking they still match.
pub fn fit_design(meta: &FitMeta) -> Result<DesignMatrix, CliError> {
    let data = load_csv(&meta.data, &meta.time_col, &meta.event_col, &meta.treat_col)?;
    let design = build_design(&data, &parse_formula(&meta.formula)?)?;
    if design.names != meta.term_names {
        return Err(CliError::Data(format!(
            "design terms {:?} differ from the fitted terms {:?}",
            design.names, meta.term_names
        )));
    }
    let horizon = meta.endpoints[meta.partitions];
    if data.max_time() != horizon {
        return Err(CliError::Data(format!(
            "{}: maximum time {} differs from the fitted horizon {horizon}; was the data changed?",
            meta.data,
            data.max_time()
        )));
    }
    Ok(design)
}

pub fn load_fit(draws: &Path, meta: &Path) -> Result<(HazardPosterior, FitMeta), CliError> {
    let meta = FitMeta::read(meta)?;
    let posterior = crate::files::read_posterior(draws, &meta)?;
    Ok((posterior, meta))
}

#[derive(Debug, Clone, Args)]
pub struct GcompArgs {
    /// draws.csv written by `fit`.
    #[arg(long)]
    pub draws: PathBuf,
    /// meta.json written by `fit`.
    #[arg(long)]
    pub meta: PathBuf,
    /// Reference treatment level, 0 or 1.
    #[arg(long = "ref", default_value_t = 0)]
    pub ref_level: u8,
    /// Simulated event times per subject, arm and draw.
    #[arg(long = "B", alias = "b", default_value_t = 1000)]
    pub b: usize,
    /// Comma-separated evaluation times [default: partition midpoints].
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Seed for the simulation streams [default: the fit's seed].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcompMeta {
    pub artifact_version: u32,
    pub ref_level: u8,
    #[serde(rename = "B")]
    pub b: usize,
    pub grid_source: GridSource,
    pub times: Vec<f64>,
    pub seed: u64,
    pub rng: String,
    pub draws: usize,
    pub chains: usize,
}

pub fn gcomp(args: &GcompArgs) -> Result<(GcompResult, GcompMeta), CliError> {
    let (posterior, meta) = load_fit(&args.draws, &args.meta)?;
    let design = fit_design(&meta)?;
    let cfg = GcompConfig {
        ref_level: args.ref_level,
        b: args.b,
        grid: args.times.clone(),
        seed: args.seed.unwrap_or(meta.seed),
        threads: args.threads,
        ..GcompConfig::default()
    };
    let res = gcompute(&posterior, &design, &cfg)?;
    let mut chains: Vec<usize> = res.chain.clone();
    chains.dedup();
    let gmeta = GcompMeta {
        artifact_version: ARTIFACT_VERSION,
        ref_level: res.ref_level,
        b: res.b,
        grid_source: res.grid_source,
        times: res.times.clone(),
        seed: cfg.seed,
        rng: RNG_ID.to_string(),
        draws: res.ate.len(),
        chains: chains.len(),
    };
    Ok((res, gmeta))
}

/// `gcomp`: writes `surv_ref.csv`, `surv_trt.csv`, `ate.csv` and
/// `gcomp_meta.json`; with several chains also `ate_chain<c>.csv` per chain.
pub fn cmd_gcomp(args: &GcompArgs) -> Result<Vec<PathBuf>, CliError> {
    let (res, gmeta) = gcomp(args)?;
    create_dir(&args.out_dir)?;
    let header = time_header(&res.times);
    let mut written = Vec::new();
    for (name, rows) in [("surv_ref.csv", &res.surv_ref), ("surv_trt.csv", &res.surv_trt), ("ate.csv", &res.ate)] {
        let path = args.out_dir.join(name);
        Table { header: header.clone(), rows: rows.clone() }.write(&path)?;
        written.push(path);
    }
    if gmeta.chains > 1 {
        let mut ids = res.chain.clone();
        ids.dedup();
        for c in ids {
            let path = args.out_dir.join(format!("ate_chain{}.csv", c + 1));
            Table { header: header.clone(), rows: res.chain_ate(c) }.write(&path)?;
            written.push(path);
        }
    }
    let path = args.out_dir.join("gcomp_meta.json");
    let text = serde_json::to_string_pretty(&gmeta).map_err(|e| CliError::io(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    written.push(path);
    eprintln!("gcomp: {} draws × {} times, B = {}", gmeta.draws, gmeta.times.len(), gmeta.b);
    Ok(written)
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    /// A draws.csv or a gcomp output table.
    #[arg(long)]
    pub file: PathBuf,
    /// Comma-separated quantile levels.
    #[arg(long, value_delimiter = ',', default_value = "0.025,0.25,0.5,0.75,0.975")]
    pub probs: Vec<f64>,
    /// Comma-separated subset of columns [default: all].
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    /// CSV output [default: <file stem>_summary.csv beside the input].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Draws per chain, each a row of parameter values.
type Chains = Vec<Vec<Vec<f64>>>;

/// Keeps `columns` (in the given order) of every chain.
fn select(
    names: Vec<String>,
    chains: Chains,
    columns: Option<&[String]>,
    file: &Path,
) -> Result<(Vec<String>, Chains), CliError> {
    let Some(cols) = columns else {
        return Ok((names, chains));
    };
    let idx = cols
        .iter()
        .map(|c| {
            names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| CliError::Data(format!("{}: no column `{c}`", file.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let chains = chains
        .into_iter()
        .map(|ch| ch.into_iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect())
        .collect();
    Ok((cols.to_vec(), chains))
}

fn sibling(file: &Path, suffix: &str) -> PathBuf {
    let stem = file.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    file.with_file_name(format!("{stem}{suffix}"))
}

pub fn summarize_file(args: &SummarizeArgs) -> Result<SummaryTable, CliError> {
    let (names, chains) = Table::read(&args.file)?.into_chains();
    let (names, chains) = select(names, chains, args.columns.as_deref(), &args.file)?;
    Ok(summarize(&chains, &names, &args.probs)?)
}

fn write_text_csv(path: &Path, header: &[String], rows: &[(String, Vec<Option<f64>>)]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let err = |e: csv::Error| CliError::io(path, e);
    w.write_record(header).map_err(err)?;
    for (name, vals) in rows {
        let fields = std::iter::once(name.clone()).chain(vals.iter().map(|v| v.map_or_else(|| "NA".into(), fmt17)));
        w.write_record(fields).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `summarize`: prints the two-block table and writes it as CSV.
pub fn cmd_summarize(args: &SummarizeArgs) -> Result<PathBuf, CliError> {
    let table = summarize_file(args)?;
    print!("{table}");
    let out = args.out.clone().unwrap_or_else(|| sibling(&args.file, "_summary.csv"));
    let mut header: Vec<String> = ["name", "mean", "sd", "naive_se", "ts_se"].map(String::from).to_vec();
    header.extend(table.probs.iter().map(|&p| prob_label(p)));
    let rows: Vec<(String, Vec<Option<f64>>)> = table
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![Some(r.mean), Some(r.sd), Some(r.naive_se), r.ts_se];
            v.extend(r.quantiles.iter().map(|&q| Some(q)));
            (r.name.clone(), v)
        })
        .collect();
    write_text_csv(&out, &header, &rows)?;
    Ok(out)
}

#[derive(Debug, Clone, Args)]
pub struct DiagArgs {
    /// Chain files: one chain each, or draws.csv files split by their `chain` column.
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    pub files: Vec<PathBuf>,
    /// Comma-separated subset of columns [default: all].
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    /// CSV output [default: psrf.csv beside the first file].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn diag_files(args: &DiagArgs) -> Result<PsrfReport, CliError> {
    let mut names: Option<Vec<String>> = None;
    let mut all = Vec::new();
    for f in &args.files {
        let (n, chains) = Table::read(f)?.into_chains();
        let (n, chains) = select(n, chains, args.columns.as_deref(), f)?;
        match &names {
            Some(first) if *first != n => {
                return Err(CliError::Data(format!(
                    "{}: columns {:?} do not match {:?} of {}",
                    f.display(),
                    n,
                    first,
                    args.files[0].display()
                )))
            }
            Some(_) => {}
            None => names = Some(n),
        }
        all.extend(chains);
    }
    if all.len() < 2 {
        return Err(CliError::Data("diag needs at least two chains".into()));
    }
    Ok(psrf(&all, &names.unwrap_or_default())?)
}

/// `diag`: prints PSRF point estimates and upper limits and writes them as CSV.
pub fn cmd_diag(args: &DiagArgs) -> Result<PathBuf, CliError> {
    let report = diag_files(args)?;
    print!("{report}");
    let out = args.out.clone().unwrap_or_else(|| args.files[0].with_file_name("psrf.csv"));
    let header = ["name", "point", "upper"].map(String::from).to_vec();
    let rows: Vec<_> = report.rows.iter().map(|r| (r.name.clone(), vec![Some(r.point), Some(r.upper)])).collect();
    write_text_csv(&out, &header, &rows)?;
    Ok(out)
}

#[derive(Debug, Clone, Args)]
pub struct HazardExportArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub meta: PathBuf,
    /// Credible mass of the interval.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// CSV output [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Per-interval posterior mean and credible band of the baseline hazard,
/// next to the maximum likelihood fit on the same partition.
pub fn hazard_table(posterior: &HazardPosterior, level: f64, mle: &[f64]) -> Result<Table, CliError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::Data(format!("level must lie in (0, 1), got {level}")));
    }
    let layout = posterior.layout();
    let alpha = (1.0 - level) / 2.0;
    let m = posterior.len() as f64;
    let rows = layout
        .theta()
        .enumerate()
        .map(|(k, col)| {
            let h: Vec<f64> = posterior.draws.iter().map(|d| d[col].exp()).collect();
            // shifted by the first draw so a constant column averages exactly
            let mean = h[0] + h.iter().map(|x| x - h[0]).sum::<f64>() / m;
            vec![
                posterior.partition.midpoints[k],
                mean,
                quantile(&h, alpha),
                quantile(&h, 1.0 - alpha),
                mle[k],
            ]
        })
        .collect();
    Ok(Table {
        header: ["midpoint", "post_mean", "lo", "hi", "mle_hazard"].map(String::from).to_vec(),
        rows,
    })
}

pub fn hazard_export(args: &HazardExportArgs) -> Result<Table, CliError> {
    let (posterior, meta) = load_fit(&args.draws, &args.meta)?;
    let design = fit_design(&meta)?;
    let data = SurvivalData::new(design, posterior.partition.clone())?;
    let mle = pch_mle(&data)?;
    hazard_table(&posterior, args.level, &mle.theta_hat)
}

/// `hazard-export`: CSV to `--out` or stdout.
pub fn cmd_hazard_export(args: &HazardExportArgs) -> Result<(), CliError> {
    let table = hazard_export(args)?;
    match &args.out {
        Some(path) => table.write(path),
        None => {
            let stdout = std::io::stdout();
            let mut w = csv::Writer::from_writer(stdout.lock());
            let err = |e: csv::Error| CliError::Data(format!("stdout: {e}"));
            w.write_record(&table.header).map_err(err)?;
            for row in &table.rows {
                w.write_record(row.iter().map(|&x| fmt17(x))).map_err(err)?;
            }
            w.flush().map_err(|e| CliError::Data(format!("stdout: {e}")))
        }
    }
}

