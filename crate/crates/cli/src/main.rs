use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use aelfit::estimation::{
    build_problem_surrogate, run_fit, run_ls_fit, simulate_series, simulation_input, FitProblem, ForwardMode,
    Simulator,
};
use aelfit::inference::{effective_sample_size, marginal_density, marginal_density_2d, posterior_summary, Proposal};
use aelfit::io::{
    generate_synthetic, read_job, read_json_file, read_observations, read_samples, surrogate_section, write_json,
    write_ls_result, write_observations, write_results, write_truth, EstimationJob, ObservationSeries,
    SimulationSpec,
};
use aelfit::surrogate::SurrogateModel;
use aelfit::{Error, ErrorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;
const EXIT_TARGET: u8 = 5;

/// Bayesian parameter estimation for alkaline electrolysis plant models.
///
/// Exit status: 0 success, 2 configuration error, 3 data error, 4 numerical
/// failure, 5 accuracy or fit target missed.
#[derive(Debug, Parser)]
#[command(name = "aelfit", version)]
struct Cli {
    /// Seed for all random draws [u64]. Overrides the job's chain, surrogate
    /// and synth seeds. Default: the seeds in the job file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print progress to stderr. Default: off.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the job's synthetic recipe, add noise and write a data CSV
    /// plus a `<out>.truth.json` sidecar.
    Synth(SynthArgs),
    /// Build a surrogate with level escalation until the job's accuracy
    /// target and write it as JSON.
    Surrogate(SurrogateArgs),
    /// Sample the posterior and write samples, summary, histograms,
    /// resolved config and timings.
    Fit(FitArgs),
    /// Least-squares point estimate with its RMSE.
    LsFit(LsFitArgs),
    /// Forward simulation at explicit parameters, written as a data-style
    /// CSV.
    Simulate(SimulateArgs),
    /// Summaries, ESS and histograms of an existing samples CSV.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ForwardArg {
    Surrogate,
    Direct,
}

impl From<ForwardArg> for ForwardMode {
    fn from(f: ForwardArg) -> Self {
        match f {
            ForwardArg::Surrogate => ForwardMode::Surrogate,
            ForwardArg::Direct => ForwardMode::Direct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProposalArg {
    Mala,
    #[value(name = "random_walk")]
    RandomWalk,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Job JSON with a `synth` section.
    #[arg(long)]
    job: PathBuf,
    /// JSON object `{name: value}` of true parameters in model units.
    /// Default: `synth.true_params` from the job.
    #[arg(long = "true-params")]
    true_params: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SurrogateArgs {
    /// Job JSON; its `surrogate` section sets levels, target and validation.
    #[arg(long)]
    job: PathBuf,
    /// Observation CSV fixing the inputs and rows the surrogate reproduces.
    #[arg(long)]
    data: PathBuf,
    /// Output surrogate JSON. A `<out-model>.report.json` is written
    /// beside it.
    #[arg(long = "out-model")]
    out_model: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Job JSON.
    #[arg(long)]
    job: PathBuf,
    /// Observation CSV.
    #[arg(long)]
    data: PathBuf,
    /// Prebuilt surrogate JSON. Default: build one from the job.
    #[arg(long)]
    surrogate: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    /// Forward model inside the chain. `direct` needs the random_walk
    /// proposal.
    #[arg(long, value_enum, default_value = "surrogate")]
    forward: ForwardArg,
    /// Number of concurrent chains, merged after burn-in. Default: the
    /// job's `chain.n_chains`.
    #[arg(long)]
    chains: Option<usize>,
    /// Proposal kernel. Default: the job's `chain.proposal`.
    #[arg(long = "chain.proposal", value_enum)]
    chain_proposal: Option<ProposalArg>,
    /// Steps per chain including burn-in. Default: the job's
    /// `chain.n_steps`.
    #[arg(long = "chain.steps")]
    chain_steps: Option<usize>,
}

#[derive(Debug, Args)]
struct LsFitArgs {
    /// Job JSON; `ls` sets the iteration cap, `chain.init` the start.
    #[arg(long)]
    job: PathBuf,
    /// Observation CSV.
    #[arg(long)]
    data: PathBuf,
    /// Prebuilt surrogate JSON supplying the Jacobian. Default: build one
    /// when the forward is `surrogate`.
    #[arg(long)]
    surrogate: Option<PathBuf>,
    /// Forward model; `direct` uses finite-difference Jacobians.
    #[arg(long, value_enum, default_value = "surrogate")]
    forward: ForwardArg,
    /// Output JSON with params, rmse and iterations.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Job JSON supplying the model, plant and initial state.
    #[arg(long)]
    job: PathBuf,
    /// JSON object `{name: value}` of parameters in model units.
    #[arg(long)]
    params: PathBuf,
    /// JSON with `segments` (duration s, i_cell A/m², p_bar bar, optional
    /// t_c_in K and temperature K) and `sample_step` s, or a `sweep` for
    /// the polarization model.
    #[arg(long)]
    schedule: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    /// Samples CSV as written by `fit`.
    #[arg(long)]
    data: PathBuf,
    /// Histogram bins per axis.
    #[arg(long, default_value_t = 40)]
    bins: usize,
    /// Output JSON.
    #[arg(long)]
    out: PathBuf,
}

/// An error with the exit status it maps to.
struct Failure {
    code: u8,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error.kind() {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Data => EXIT_DATA,
            ErrorKind::Numeric => EXIT_NUMERIC,
        };
        Failure { code, error }
    }
}

type CmdResult = Result<u8, Failure>;

fn config_failure(error: Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error,
    }
}

fn data_failure(error: Error) -> Failure {
    Failure { code: EXIT_DATA, error }
}

fn load_job(path: &Path, seed: Option<u64>) -> Result<EstimationJob, Failure> {
    let mut job = read_job(path).map_err(config_failure)?;
    if let Some(s) = seed {
        job.chain.seed = s;
        job.surrogate.seed = s;
        if let Some(synth) = job.synth.as_mut() {
            synth.seed = s;
        }
    }
    Ok(job)
}

fn load_data(path: &Path) -> Result<ObservationSeries, Failure> {
    read_observations(path).map_err(data_failure)
}

fn load_params(job: &EstimationJob, path: &Path) -> Result<Vec<f64>, Failure> {
    let map: BTreeMap<String, f64> = read_json_file(path).map_err(config_failure)?;
    job.params_from_map(&map).map_err(config_failure)
}

fn load_surrogate(path: &Path) -> Result<SurrogateModel, Failure> {
    read_json_file(path).map_err(config_failure)
}

fn log(verbose: bool, msg: impl AsRef<str>) {
    if verbose {
        eprintln!("{}", msg.as_ref());
    }
}

fn report_path(model: &Path) -> PathBuf {
    let mut name = model.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".report.json");
    model.with_file_name(name)
}

fn cmd_synth(a: &SynthArgs, seed: Option<u64>, verbose: bool) -> CmdResult {
    let job = load_job(&a.job, seed)?;
    let synth = job
        .synth
        .as_ref()
        .ok_or_else(|| config_failure(Error::config("synth", "the job has no synthetic-data recipe")))?;
    let truth = match &a.true_params {
        Some(p) => load_params(&job, p)?,
        None => {
            let map = synth.true_params.as_ref().ok_or_else(|| {
                config_failure(Error::config("synth.true_params", "pass --true-params or set it in the job"))
            })?;
            job.params_from_map(map).map_err(config_failure)?
        }
    };
    log(verbose, format!("simulating {} model", job.model.name()));
    let (series, sidecar) = generate_synthetic(&job, &truth, synth.seed)?;
    write_observations(&a.out, &series)?;
    let side = write_truth(&a.out, &sidecar)?;
    println!("wrote {} rows to {}", series.len(), a.out.display());
    println!("{}", side.display());
    Ok(0)
}

fn cmd_surrogate(a: &SurrogateArgs, seed: Option<u64>, verbose: bool) -> CmdResult {
    let job = load_job(&a.job, seed)?;
    let series = load_data(&a.data)?;
    let problem = FitProblem::new(&job, &series)?;
    log(verbose, format!("building surrogate for {} outputs", problem.labels.len()));
    let out = build_problem_surrogate(&problem, &job, &job.surrogate)?;
    write_json(&a.out_model, &out.model)?;
    write_json(&report_path(&a.out_model), &surrogate_section(&out, job.surrogate.target))?;
    println!("level {}", out.build.level);
    println!("nodes {}", out.build.n_nodes);
    println!("basis {}", out.build.n_basis);
    println!("max validation error {:.3e} (target {:.1e})", out.validation.max_rel_error, job.surrogate.target);
    println!("build time {:.2} s", out.build_seconds);
    if out.target_met {
        Ok(0)
    } else {
        eprintln!(
            "accuracy target {:e} not reached by level {}: achieved {:e}",
            job.surrogate.target, job.surrogate.max_level, out.validation.max_rel_error
        );
        Ok(EXIT_TARGET)
    }
}

fn cmd_fit(a: &FitArgs, seed: Option<u64>, verbose: bool) -> CmdResult {
    let mut job = load_job(&a.job, seed)?;
    if let Some(n) = a.chains {
        job.chain.n_chains = n;
    }
    if let Some(n) = a.chain_steps {
        job.chain.n_steps = n;
    }
    if let Some(p) = a.chain_proposal {
        job.chain.proposal = match p {
            ProposalArg::Mala => Proposal::Mala,
            ProposalArg::RandomWalk => Proposal::RandomWalk,
        };
    }
    job.validate().map_err(config_failure)?;
    let series = load_data(&a.data)?;
    let problem = FitProblem::new(&job, &series)?;
    let supplied = a.surrogate.as_deref().map(load_surrogate).transpose()?;
    log(verbose, format!("fitting {} model to {} observations", job.model.name(), problem.data.len()));
    let out = run_fit(&job, &problem, a.forward.into(), supplied)?;
    write_results(&a.out_dir, &job, &out)?;

    println!("{:<10} {:>13} {:>13} {:>13} {:>13} {:>9}", "param", "mean", "sd", "q05", "q95", "ess");
    for (p, ess) in out.summary.parameters.iter().zip(&out.ess) {
        println!("{:<10} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e} {:>9.1}", p.name, p.mean, p.sd, p.q05, p.q95, ess);
    }
    println!("acceptance rate {:.3}", out.chain.acceptance_rate);
    for (col, rmse) in &out.quality.rmse {
        println!("rmse {col} {rmse:.6e}");
    }
    let t = &out.timings;
    if let Some(b) = t.surrogate_build_s {
        println!("surrogate build {b:.3} s");
    }
    println!("sampling {:.3} s", t.sampling_s);
    match (t.posterior_eval_surrogate_s, t.speedup) {
        (Some(s), Some(x)) => println!(
            "posterior evaluation: surrogate {s:.3e} s, direct {:.3e} s ({x:.1}x)",
            t.posterior_eval_direct_s
        ),
        _ => println!("posterior evaluation: direct {:.3e} s", t.posterior_eval_direct_s),
    }
    println!("results in {}", a.out_dir.display());

    if let Some(s) = &out.surrogate {
        if !s.target_met {
            eprintln!("surrogate accuracy target missed: {:e}", s.validation.max_rel_error);
            return Ok(EXIT_TARGET);
        }
    }
    if !out.target_met {
        eprintln!(
            "fit target missed: standardized residual RMS {:.4} exceeds {}",
            out.quality.standardized_rms,
            job.fit_target.unwrap_or(f64::NAN)
        );
        return Ok(EXIT_TARGET);
    }
    Ok(0)
}

fn cmd_ls_fit(a: &LsFitArgs, seed: Option<u64>, verbose: bool) -> CmdResult {
    let job = load_job(&a.job, seed)?;
    let series = load_data(&a.data)?;
    let problem = FitProblem::new(&job, &series)?;
    let surrogate = match (a.forward, &a.surrogate) {
        (ForwardArg::Direct, _) => None,
        (ForwardArg::Surrogate, Some(p)) => Some(load_surrogate(p)?),
        (ForwardArg::Surrogate, None) => {
            log(verbose, "building surrogate");
            let out = build_problem_surrogate(&problem, &job, &job.surrogate)?;
            if !out.target_met {
                eprintln!("surrogate accuracy target missed: {:e}", out.validation.max_rel_error);
            }
            Some(out.model)
        }
    };
    let (res, quality) = run_ls_fit(&job, &problem, surrogate)?;
    write_ls_result(&a.out, &job, &res, &quality)?;
    for (name, v) in job.param_map(&res.params) {
        println!("{name:<10} {v:>14.6e}");
    }
    println!("rmse {:.6e} after {} iterations{}", res.rmse, res.iterations, if res.converged { "" } else { " (not converged)" });
    Ok(0)
}

fn cmd_simulate(a: &SimulateArgs, seed: Option<u64>, _verbose: bool) -> CmdResult {
    let job = load_job(&a.job, seed)?;
    let params = load_params(&job, &a.params)?;
    let spec: SimulationSpec = read_json_file(&a.schedule).map_err(config_failure)?;
    let input = simulation_input(&job, &spec).map_err(config_failure)?;
    let sim = Simulator::new(&job, input)?;
    let series = simulate_series(&sim, &params)?;
    write_observations(&a.out, &series)?;
    println!("wrote {} rows to {}", series.len(), a.out.display());
    Ok(0)
}

fn cmd_summarize(a: &SummarizeArgs, _seed: Option<u64>, _verbose: bool) -> CmdResult {
    let (names, samples) = read_samples(&a.data).map_err(data_failure)?;
    if a.bins < 2 {
        return Err(config_failure(Error::config("--bins", "must be >= 2")));
    }
    let summary = posterior_summary(&samples, &names).map_err(data_failure)?;
    let ess = (0..names.len())
        .map(|k| effective_sample_size(&samples, k))
        .collect::<aelfit::Result<Vec<_>>>()
        .map_err(data_failure)?;
    let marginals = (0..names.len())
        .map(|k| marginal_density(&samples, k, a.bins))
        .collect::<aelfit::Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            pairs.push(marginal_density_2d(&samples, i, j, a.bins)?);
        }
    }
    let value = serde_json::json!({
        "n_samples": samples.len(),
        "parameters": summary.parameters,
        "correlation": summary.correlation,
        "ess": ess,
        "marginals": marginals,
        "pairs": pairs,
    });
    write_json(&a.out, &value)?;
    for (p, e) in summary.parameters.iter().zip(&ess) {
        println!("{:<10} mean {:>13.6e} sd {:>13.6e} ess {:>9.1}", p.name, p.mean, p.sd, e);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a, cli.seed, cli.verbose),
        Command::Surrogate(a) => cmd_surrogate(a, cli.seed, cli.verbose),
        Command::Fit(a) => cmd_fit(a, cli.seed, cli.verbose),
        Command::LsFit(a) => cmd_ls_fit(a, cli.seed, cli.verbose),
        Command::Simulate(a) => cmd_simulate(a, cli.seed, cli.verbose),
        Command::Summarize(a) => cmd_summarize(a, cli.seed, cli.verbose),
    };
    log(cli.verbose, format!("done in {:.2} s", start.elapsed().as_secs_f64()));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
