//! On-disk formats: draws.csv, meta.json and plain numeric tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use survcausal::hazard_model::Layout;
use survcausal::rng::RNG_ID;
use survcausal::sampler::{ChainStats, HazardPosterior};
use survcausal::{ModelKind, Partition};

use crate::config::RunConfig;
use crate::error::CliError;

pub const ARTIFACT_VERSION: u32 = 1;

/// 17 significant digits, enough to re-parse every f64 bit-exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// A named-column numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let err = |e: csv::Error| CliError::io(path, e);
        w.write_record(&self.header).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|&x| fmt17(x))).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Table, CliError> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let header: Vec<String> = r
            .headers()
            .map_err(|e| CliError::io(path, e))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| CliError::io(path, e))?;
            if rec.len() != header.len() {
                return Err(CliError::Data(format!(
                    "{}: row {} has {} fields, header has {}",
                    path.display(),
                    i + 1,
                    rec.len(),
                    header.len()
                )));
            }
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| CliError::Data(format!("{}: row {}: {e}", path.display(), i + 1)))?;
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    /// Splits rows by a `chain` column when present (dropping it and any
    /// `iter` column); otherwise the whole table is one chain.
    pub fn into_chains(self) -> (Vec<String>, Vec<Vec<Vec<f64>>>) {
        let chain_ix = self.column_index("chain");
        let drop: Vec<usize> = ["chain", "iter"].iter().filter_map(|c| self.column_index(c)).collect();
        let keep: Vec<usize> = (0..self.header.len()).filter(|i| !drop.contains(i)).collect();
        let names = keep.iter().map(|&i| self.header[i].clone()).collect();
        let mut chains: Vec<(i64, Vec<Vec<f64>>)> = Vec::new();
        for row in self.rows {
            let id = chain_ix.map_or(0, |c| row[c] as i64);
            let vals: Vec<f64> = keep.iter().map(|&i| row[i]).collect();
            match chains.iter_mut().find(|(c, _)| *c == id) {
                Some((_, rows)) => rows.push(vals),
                None => chains.push((id, vec![vals])),
            }
        }
        (names, chains.into_iter().map(|(_, r)| r).collect())
    }
}

/// Time values as header labels; shortest round-trip form.
pub fn time_header(times: &[f64]) -> Vec<String> {
    times.iter().map(|t| t.to_string()).collect()
}

/// Metadata written next to draws.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub artifact_version: u32,
    pub tool_version: String,
    pub rng: String,
    /// Absolute path of the input CSV.
    pub data: String,
    pub formula: String,
    pub time_col: String,
    pub event_col: String,
    pub treat_col: String,
    pub model_kind: ModelKind,
    pub partitions: usize,
    pub sigma: f64,
    pub seed: u64,
    pub warmup: usize,
    pub iters: usize,
    pub chains: usize,
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    pub endpoints: Vec<f64>,
    pub midpoints: Vec<f64>,
    pub term_names: Vec<String>,
    pub accept_rate: f64,
    pub divergences: usize,
    pub chain_stats: Vec<ChainStats>,
}

impl FitMeta {
    pub fn new(cfg: &RunConfig, posterior: &HazardPosterior) -> FitMeta {
        let data = std::fs::canonicalize(&cfg.data).unwrap_or_else(|_| cfg.data.clone());
        FitMeta {
            artifact_version: ARTIFACT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            rng: RNG_ID.to_string(),
            data: data.display().to_string(),
            formula: cfg.formula.clone(),
            time_col: cfg.time_col.clone(),
            event_col: cfg.event_col.clone(),
            treat_col: cfg.treat_col.clone(),
            model_kind: cfg.model_kind,
            partitions: cfg.k,
            sigma: cfg.sigma,
            seed: cfg.seed,
            warmup: cfg.warmup,
            iters: cfg.post_iter,
            chains: cfg.chains,
            leapfrog_steps: cfg.leapfrog_steps,
            target_accept: cfg.target_accept,
            endpoints: posterior.partition.endpoints.clone(),
            midpoints: posterior.partition.midpoints.clone(),
            term_names: posterior.term_names.clone(),
            accept_rate: posterior.accept_rate(),
            divergences: posterior.divergences(),
            chain_stats: posterior.chain_stats.clone(),
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.partitions, self.term_names.len(), self.model_kind)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| CliError::io(path, e))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<FitMeta, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let meta: FitMeta = serde_json::from_str(&text).map_err(|e| CliError::io(path, e))?;
        if meta.artifact_version != ARTIFACT_VERSION {
            return Err(CliError::Data(format!(
                "{}: artifact version {} is not supported (expected {ARTIFACT_VERSION})",
                path.display(),
                meta.artifact_version
            )));
        }
        if meta.endpoints.len() != meta.partitions + 1 {
            return Err(CliError::Data(format!(
                "{}: {} endpoints for K={}",
                path.display(),
                meta.endpoints.len(),
                meta.partitions
            )));
        }
        Ok(meta)
    }
}

/// draws.csv: parameter columns, then 1-based `chain` and `iter`.
pub fn draws_table(posterior: &HazardPosterior) -> Table {
    let mut header = posterior.column_names();
    header.push("chain".into());
    header.push("iter".into());
    let rows = posterior
        .draws
        .iter()
        .zip(posterior.chain.iter().zip(&posterior.iter))
        .map(|(d, (&c, &it))| {
            let mut row = d.clone();
            row.push((c + 1) as f64);
            row.push(it as f64);
            row
        })
        .collect();
    Table { header, rows }
}

/// Writes draws with integer `chain`/`iter` columns.
pub fn write_draws(posterior: &HazardPosterior, path: &Path) -> Result<(), CliError> {
    let table = draws_table(posterior);
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let err = |e: csv::Error| CliError::io(path, e);
    w.write_record(&table.header).map_err(err)?;
    let q = table.header.len() - 2;
    for row in &table.rows {
        let fields = row[..q]
            .iter()
            .map(|&x| fmt17(x))
            .chain(row[q..].iter().map(|&x| (x as u64).to_string()));
        w.write_record(fields).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads draws.csv back into a posterior described by `meta`.
pub fn read_posterior(draws: &Path, meta: &FitMeta) -> Result<HazardPosterior, CliError> {
    let table = Table::read(draws)?;
    let layout = meta.layout();
    let mut expected = layout.names(&meta.term_names);
    expected.push("chain".into());
    expected.push("iter".into());
    if table.header.len() != expected.len() {
        return Err(CliError::Data(format!(
            "{} has {} columns but the metadata implies {}",
            draws.display(),
            table.header.len(),
            expected.len()
        )));
    }
    if table.header != expected {
        let (got, want) = table
            .header
            .iter()
            .zip(&expected)
            .find(|(a, b)| a != b)
            .expect("headers differ");
        return Err(CliError::Data(format!(
            "{}: column `{got}` where the metadata expects `{want}`",
            draws.display()
        )));
    }
    if table.rows.is_empty() {
        return Err(CliError::Data(format!("{} has no draws", draws.display())));
    }
    let q = layout.dim();
    let mut out = HazardPosterior {
        draws: Vec::with_capacity(table.rows.len()),
        chain: Vec::with_capacity(table.rows.len()),
        iter: Vec::with_capacity(table.rows.len()),
        partition: Partition::from_endpoints(meta.endpoints.clone())?,
        term_names: meta.term_names.clone(),
        treat_col: meta.treat_col.clone(),
        formula: meta.formula.clone(),
        model_kind: meta.model_kind,
        chain_stats: meta.chain_stats.clone(),
    };
    for (i, row) in table.rows.into_iter().enumerate() {
        let (chain, iter) = (row[q], row[q + 1]);
        if !(chain >= 1.0 && chain.fract() == 0.0 && iter >= 1.0 && iter.fract() == 0.0) {
            return Err(CliError::Data(format!(
                "{}: row {}: chain and iter must be positive integers",
                draws.display(),
                i + 1
            )));
        }
        layout
            .from_constrained(&row[..q])
            .map_err(|e| CliError::Data(format!("{}: row {}: {e}", draws.display(), i + 1)))?;
        out.chain.push(chain as usize - 1);
        out.iter.push(iter as usize);
        out.draws.push(row[..q].to_vec());
    }
    Ok(out)
}
