mod chain;
mod lsq;
mod posterior;
mod prior;
mod summary;

pub use chain::{accept, propose, run_chain, ChainConfig, ChainResult, Proposal};
pub use lsq::{least_squares_fit, LsConfig, LsResult};
pub use posterior::{
    grad_log_posterior, log_likelihood, log_posterior, log_posterior_and_grad, AnalyticTarget, Forward, ForwardFn,
    PosteriorProblem, Target,
};
pub use prior::{grad_log_prior, log_prior, Distribution, PriorEntry, PriorSpec};
pub use summary::{
    effective_sample_size, effective_sample_size_of, marginal_density, marginal_density_2d, posterior_summary,
    Histogram, Histogram2d, ParamSummary, PosteriorSummary,
};
