//! Writes experiment outputs to disk.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Resolved};
use crate::error::CliError;
use crate::experiments::{self, Check, Output};

pub const SCHEMA: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";
pub const ERROR_FILE: &str = "error.json";

#[derive(Serialize)]
struct Summary<'a> {
    schema: u32,
    experiment: &'a str,
    config: &'a Resolved,
    results: &'a serde_json::Value,
    checks: &'a [Check],
}

#[derive(Serialize)]
struct ErrorSummary<'a> {
    schema: u32,
    experiment: &'a str,
    config: &'a Resolved,
    error: String,
    failed_run: Option<&'a str>,
    failed_iter: Option<usize>,
    partial_log: Option<String>,
}

#[derive(Serialize)]
struct IndexEntry {
    seed: u64,
    dir: String,
    checks_passed: usize,
    checks_total: usize,
}

#[derive(Serialize)]
struct Index<'a> {
    schema: u32,
    experiment: &'a str,
    replicates: Vec<IndexEntry>,
}

/// What `run` produced.
#[derive(Debug)]
pub struct Outcome {
    pub out_dir: PathBuf,
    /// One entry per seed, in seed order.
    pub seeds: Vec<(u64, Vec<Check>)>,
}

impl Outcome {
    pub fn all_passed(&self) -> bool {
        self.seeds.iter().all(|(_, c)| c.iter().all(|c| c.pass))
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io(path))
}

fn json_bytes<S: Serialize>(v: &S) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("summaries serialize");
    s.push('\n');
    s.into_bytes()
}

/// Runs one resolved config into `dir`, writing either the summary and artifacts or an error record.
pub fn run_one(cfg: &Resolved, dir: &Path) -> Result<Vec<Check>, CliError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let name = cfg.experiment.name();
    match experiments::execute(cfg) {
        Ok(Output {
            results,
            checks,
            artifacts,
        }) => {
            for a in &artifacts {
                write(&dir.join(&a.name), &a.bytes)?;
            }
            let summary = Summary {
                schema: SCHEMA,
                experiment: name,
                config: cfg,
                results: &results,
                checks: &checks,
            };
            write(&dir.join(SUMMARY_FILE), &json_bytes(&summary))?;
            Ok(checks)
        }
        Err(e) => {
            if let CliError::Numerical { message, partial } = &e {
                let mut log = None;
                if let Some(p) = partial {
                    let file = format!("{}-partial.csv", p.label);
                    write(&dir.join(&file), &p.csv)?;
                    log = Some(file);
                }
                let rec = ErrorSummary {
                    schema: SCHEMA,
                    experiment: name,
                    config: cfg,
                    error: message.clone(),
                    failed_run: partial.as_ref().map(|p| p.label.as_str()),
                    failed_iter: partial.as_ref().map(|p| p.iter),
                    partial_log: log,
                };
                write(&dir.join(ERROR_FILE), &json_bytes(&rec))?;
            }
            Err(e)
        }
    }
}

/// Resolves every replicate up front, then runs them on `jobs` workers.
///
/// A single replicate writes straight into `out`; several go to `out/seed-<s>/` with an `index.json` on top.
pub fn run(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Outcome, CliError> {
    let resolved: Vec<Resolved> = cfg.seeds().into_iter().map(|s| cfg.resolve_seed(s)).collect::<Result<_, _>>()?;
    if let [single] = resolved.as_slice() {
        let checks = run_one(single, out)?;
        return Ok(Outcome {
            out_dir: out.to_path_buf(),
            seeds: vec![(single.seed, checks)],
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(vec![format!("--jobs: {e}")]))?;
    let results: Vec<Result<Vec<Check>, CliError>> = pool.install(|| {
        resolved
            .par_iter()
            .map(|r| run_one(r, &out.join(seed_dir(r.seed))))
            .collect()
    });
    let mut seeds = Vec::new();
    for (r, res) in resolved.iter().zip(results) {
        seeds.push((r.seed, res?));
    }
    let index = Index {
        schema: SCHEMA,
        experiment: cfg.experiment.name(),
        replicates: seeds
            .iter()
            .map(|(s, c)| IndexEntry {
                seed: *s,
                dir: seed_dir(*s),
                checks_passed: c.iter().filter(|c| c.pass).count(),
                checks_total: c.len(),
            })
            .collect(),
    };
    write(&out.join("index.json"), &json_bytes(&index))?;
    Ok(Outcome {
        out_dir: out.to_path_buf(),
        seeds,
    })
}

pub fn seed_dir(seed: u64) -> String {
    format!("seed-{seed}")
}

/// `--out` beats `NTKDIP_OUTPUT_DIR`, which beats the config file, which beats the default.
pub fn output_dir(cfg: &ExperimentConfig, cli_out: Option<&Path>) -> PathBuf {
    cli_out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| cfg.default_output_dir())
}
