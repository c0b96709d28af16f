//! Workflows and persistence: configuration, observation ingestion, and the
//! artifact set each CLI subcommand writes.

pub mod artifacts;
pub mod config;
pub mod observations;

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

pub use artifacts::{
    atomic_write, chain_from_artifacts, load_chain_table, load_cu_paths, load_run_meta,
    parse_chain_bytes, parse_cu_paths_bytes, ChainTable, Provenance, RunMeta,
};
pub use config::{
    config_hash, default_grid, load_config, midrange_epi_params, parse_config_bytes,
    FileConfig, Overrides, PriorCheckSettings, SimulateSettings, SCHEMA_VERSION,
};
pub use observations::{load_observations, observations_to_csv, parse_observations_bytes};

use crate::eval::{run_ensemble, simulate_observations};
use crate::inference::{chain_diagnostics, pmmh, quantile_sorted};
use crate::rng::{stream, substream};
use crate::traj::{prior_delta_cu_draws, sample_path};
use crate::{epi, Error, Result};

fn provenance(cfg: &FileConfig) -> Provenance {
    Provenance { config_hash: config_hash(cfg), seed: cfg.seed }
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn meta_for(cfg: &FileConfig, workflow: &str) -> RunMeta {
    RunMeta {
        schema: SCHEMA_VERSION,
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        workflow: workflow.to_string(),
        config: cfg.clone(),
    }
}

/// Fit the configured trajectory prior to the observations and write the
/// chain, path, and summary artifacts.
pub fn run_fit(cfg: &FileConfig, out: &Path) -> Result<()> {
    let obs_path = cfg.observations.as_ref().ok_or_else(|| {
        Error::Config("fit requires an observations path in the config".into())
    })?;
    let obs = load_observations(obs_path)?;
    if obs.is_empty() {
        return Err(Error::Data(format!(
            "observations file {} is empty; fitting requires at least one observation",
            obs_path.display()
        )));
    }
    prepare_out(out)?;
    let prov = provenance(cfg);
    let mut pcfg = cfg.inference.clone();
    pcfg.seed = cfg.seed;
    let chain = pmmh(cfg.model, &obs, &cfg.grid, &pcfg)?;
    let burn = chain.burn_in_len();
    let summary = chain_diagnostics(&chain, burn, cfg.thin)?;
    artifacts::write_run_meta(out, &meta_for(cfg, "fit"))?;
    artifacts::write_chain_csv(out, &chain, &prov)?;
    artifacts::write_cu_paths_csv(out, &chain, &prov)?;
    artifacts::write_cu_summary_csv(out, &summary, &prov)?;
    artifacts::write_chain_summary_json(out, &summary, &prov)?;
    artifacts::write_prevalence_fit_csv(out, &chain, burn, &prov)?;
    artifacts::write_observed_csv(out, &obs, &prov)?;
    Ok(())
}

/// Simulate data under a known truth and write the dataset plus the true
/// paths.
pub fn run_simulate(cfg: &FileConfig, out: &Path) -> Result<()> {
    let model = cfg.simulate.model.clone().ok_or_else(|| {
        Error::Config("simulate requires simulate.model in the config".into())
    })?;
    let params = cfg.simulate.params.unwrap_or_else(midrange_epi_params);
    if cfg.simulate.schedule.is_empty() {
        return Err(Error::Config("simulate.schedule must be non-empty".into()));
    }
    prepare_out(out)?;
    let prov = provenance(cfg);
    let mut path_rng = substream(cfg.seed, &[stream::TRUTH]);
    let cu_path = sample_path(&model, &cfg.grid, &mut path_rng)?;
    let states = epi::integrate(&params, &cu_path, &cfg.grid)?;
    let mut obs_rng = substream(cfg.seed, &[stream::OBS]);
    let obs = simulate_observations(&states, &cfg.simulate.schedule, &cfg.grid, &mut obs_rng)?;

    artifacts::write_run_meta(out, &meta_for(cfg, "simulate"))?;
    let obs_csv = observations_to_csv(&obs, &prov.comment_line());
    atomic_write(&out.join("observations.csv"), obs_csv.as_bytes())?;

    let mut truth_csv = prov.comment_line();
    truth_csv.push('\n');
    truth_csv.push_str("node,time,cu,fsw_prev,client_prev\n");
    for (j, (cu, state)) in cu_path.iter().zip(&states).enumerate() {
        let _ = writeln!(
            truth_csv,
            "{j},{},{cu},{},{}",
            cfg.grid.node_year(j),
            epi::observe_prevalence(state, epi::Stratum::Fsw),
            epi::observe_prevalence(state, epi::Stratum::Client)
        );
    }
    atomic_write(&out.join("true_path.csv"), truth_csv.as_bytes())?;
    Ok(())
}

/// Run the replicate ensemble and write the metrics report plus the full
/// replicate record.
pub fn run_ensemble_workflow(cfg: &FileConfig, out: &Path) -> Result<()> {
    prepare_out(out)?;
    let prov = provenance(cfg);
    let (outcomes, report) = run_ensemble(&cfg.ensemble, &cfg.grid)?;
    artifacts::write_run_meta(out, &meta_for(cfg, "ensemble"))?;

    #[derive(Serialize)]
    struct ReportPayload<'a, R: Serialize> {
        report: &'a R,
    }
    artifacts::write_wrapped_json(
        &out.join("ensemble_report.json"),
        &prov,
        ReportPayload { report: &report },
    )?;
    #[derive(Serialize)]
    struct OutcomesPayload<'a, R: Serialize> {
        outcomes: &'a [R],
    }
    artifacts::write_wrapped_json(
        &out.join("replicates.json"),
        &prov,
        OutcomesPayload { outcomes: &outcomes },
    )?;

    let mut text = prov.comment_line();
    text.push('\n');
    text.push_str("method,n_used,n_failed_fits,bias,mse,std,T,sensitivity,specificity,auc\n");
    let fmt_opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for m in &report.methods {
        for t in &m.thresholds {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{},{},{},{}",
                m.method.name(),
                m.n_used,
                m.n_failed_fits,
                fmt_opt(m.bias),
                fmt_opt(m.mse),
                fmt_opt(m.std),
                t.t_threshold,
                fmt_opt(t.sensitivity),
                fmt_opt(t.specificity),
                fmt_opt(t.auc)
            );
        }
    }
    atomic_write(&out.join("metrics.csv"), text.as_bytes())?;
    Ok(())
}

/// Monte-Carlo check of the prior-implied condom-use change for the
/// configured model.
pub fn run_prior_check(cfg: &FileConfig, out: &Path) -> Result<()> {
    if cfg.prior_check.draws == 0 {
        return Err(Error::Config("prior_check.draws must be >= 1".into()));
    }
    prepare_out(out)?;
    let prov = provenance(cfg);
    let mut draws = prior_delta_cu_draws(
        cfg.model.name(),
        &cfg.grid,
        cfg.inference.delta_t_a,
        cfg.inference.delta_t_b,
        cfg.prior_check.draws,
        cfg.seed,
    )?;
    draws.sort_by(f64::total_cmp);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;

    #[derive(Serialize)]
    struct Payload {
        model: String,
        n_draws: usize,
        mean: f64,
        q025: f64,
        median: f64,
        q975: f64,
    }
    artifacts::write_run_meta(out, &meta_for(cfg, "prior-check"))?;
    artifacts::write_wrapped_json(
        &out.join("prior_delta_cu.json"),
        &prov,
        Payload {
            model: cfg.model.name().to_string(),
            n_draws: draws.len(),
            mean,
            q025: quantile_sorted(&draws, 0.025),
            median: quantile_sorted(&draws, 0.5),
            q975: quantile_sorted(&draws, 0.975),
        },
    )?;
    Ok(())
}

/// Recompute the summary artifacts of an earlier `fit` run from its
/// persisted chain.
pub fn run_report(out: &Path) -> Result<()> {
    let meta = load_run_meta(out)?;
    if meta.workflow != "fit" {
        return Err(Error::Config(format!(
            "report requires a fit output directory, found workflow {:?}",
            meta.workflow
        )));
    }
    let table = load_chain_table(&out.join("chain.csv"))?;
    let paths = load_cu_paths(&out.join("cu_paths.csv"))?;
    let chain = chain_from_artifacts(table, paths, &meta)?;
    let burn = chain.burn_in_len();
    let summary = chain_diagnostics(&chain, burn, meta.config.thin)?;
    let prov = Provenance { config_hash: meta.config_hash.clone(), seed: meta.seed };
    artifacts::write_cu_summary_csv(out, &summary, &prov)?;
    artifacts::write_chain_summary_json(out, &summary, &prov)?;
    artifacts::write_prevalence_fit_csv(out, &chain, burn, &prov)?;
    Ok(())
}
