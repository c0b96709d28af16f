//! Likelihood machinery and the particle-marginal MCMC sampler.

mod diagnostics;
mod filter;
mod pmmh;
mod theta;

pub use diagnostics::{
    chain_diagnostics, ess_ips, quantile_sorted, ChainSummary, NodeBand, ScalarSummary,
};
pub use filter::{direct_log_likelihood, particle_filter, PfOutput};
pub use pmmh::{adapt_proposal, mh_accept, pmmh, Chain, PmmhConfig};
pub use theta::{ModelKind, Prior, ThetaSpec, ThetaVector, Transform, N_EPI_COORDS, N_F};
