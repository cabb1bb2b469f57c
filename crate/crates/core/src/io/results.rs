use std::path::Path;

use serde::Serialize;

use super::job::{write_json, EstimationJob};
use crate::error::{Error, Result};
use crate::estimation::{FitOutput, FitQuality};
use crate::inference::{ChainConfig, Histogram, Histogram2d, LsResult, ParamSummary};

#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    model: &'a str,
    n_samples: usize,
    parameters: &'a [ParamSummary],
    correlation: &'a [Vec<f64>],
    acceptance_rate: f64,
    ess: &'a [f64],
    epsilon: &'a [f64],
    seed: u64,
    config: &'a ChainConfig,
    fit: FitSection<'a>,
    surrogate: Option<SurrogateSection<'a>>,
}

#[derive(Debug, Serialize)]
struct FitSection<'a> {
    #[serde(flatten)]
    quality: &'a FitQuality,
    target: Option<f64>,
    target_met: bool,
}

#[derive(Debug, Serialize)]
pub struct SurrogateSection<'a> {
    pub level: usize,
    pub n_nodes: usize,
    pub n_basis: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub history: &'a [(usize, f64)],
    pub target: f64,
    pub target_met: bool,
}

#[derive(Debug, Serialize)]
struct HistogramFile<'a> {
    names: &'a [String],
    marginals: &'a [Histogram],
    pairs: &'a [Histogram2d],
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One row per retained sample, header = parameter names.
pub fn write_samples(path: &Path, names: &[String], samples: &[Vec<f64>]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(names).map_err(csv_err)?;
    for s in samples {
        w.write_record(s.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a samples file back as `(names, rows)`.
pub fn read_samples(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(file);
    let names: Vec<String> = r
        .headers()
        .map_err(|e| Error::data(None, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(Some(k + 1), e.to_string()))?;
        let row = rec
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::data(Some(k + 1), format!("`{v}` is not a finite number")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((names, rows))
}

pub fn surrogate_section(out: &crate::estimation::SurrogateOutcome, target: f64) -> SurrogateSection<'_> {
    SurrogateSection {
        level: out.build.level,
        n_nodes: out.build.n_nodes,
        n_basis: out.build.n_basis,
        max_rel_error: out.validation.max_rel_error,
        mean_rel_error: out.validation.mean_rel_error,
        history: &out.history,
        target,
        target_met: out.target_met,
    }
}

/// Writes the fit bundle into `dir`: `samples.csv`, `summary.json`,
/// `histograms.json`, `resolved_config.json`, `timings.json` and, when one
/// was built, `surrogate.json`. Everything except the timings is a pure
/// function of the job, data and seed.
pub fn write_results(dir: &Path, job: &EstimationJob, out: &FitOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_samples(&dir.join("samples.csv"), &out.names, &out.chain.samples)?;
    let summary = SummaryFile {
        model: job.model.name(),
        n_samples: out.chain.samples.len(),
        parameters: &out.summary.parameters,
        correlation: &out.summary.correlation,
        acceptance_rate: out.chain.acceptance_rate,
        ess: &out.ess,
        epsilon: &out.chain.epsilon,
        seed: out.chain.seed,
        config: &out.chain.config,
        fit: FitSection {
            quality: &out.quality,
            target: job.fit_target,
            target_met: out.target_met,
        },
        surrogate: out.surrogate.as_ref().map(|s| surrogate_section(s, job.surrogate.target)),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(
        &dir.join("histograms.json"),
        &HistogramFile {
            names: &out.names,
            marginals: &out.marginals,
            pairs: &out.pairs,
        },
    )?;
    write_json(&dir.join("resolved_config.json"), job)?;
    write_json(&dir.join("timings.json"), &out.timings)?;
    if let Some(s) = &out.surrogate {
        write_json(&dir.join("surrogate.json"), &s.model)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct LsFile<'a> {
    pub model: &'a str,
    pub params: std::collections::BTreeMap<String, f64>,
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residuals of the direct simulation at the estimate.
    pub fit: &'a FitQuality,
}

pub fn write_ls_result(path: &Path, job: &EstimationJob, res: &LsResult, quality: &FitQuality) -> Result<()> {
    write_json(
        path,
        &LsFile {
            model: job.model.name(),
            params: job.param_map(&res.params),
            rmse: res.rmse,
            iterations: res.iterations,
            converged: res.converged,
            fit: quality,
        },
    )
}
