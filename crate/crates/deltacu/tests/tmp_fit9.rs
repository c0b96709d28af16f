use deltacu::eval::{default_schedule, generate_truth, simulate_observations, TruthFilters, TruthKind};
use deltacu::grid::TimeGrid;
use deltacu::inference::{chain_diagnostics, pmmh, ModelKind, PmmhConfig};
use deltacu::rng::{stream, substream};

#[test]
fn fit9() {
    let grid = TimeGrid::new(1985.0, 2010.0, 6.0).unwrap();
    let filters = TruthFilters::default();
    let seed = 2026u64;
    for rep in [1usize, 2, 9, 15, 17] {
        let bin = rep % 18;
        let bin_lo = bin as f64 * 0.05;
        let bin_hi = bin_lo + 0.05;
        let truth = generate_truth(
            TruthKind::DSigm,
            bin_lo,
            bin_hi,
            &filters,
            &grid,
            2003.0,
            2009.25,
            seed,
            rep as u64,
            200_000,
        )
        .unwrap();
        let mut obs_rng = substream(seed, &[stream::OBS, rep as u64]);
        let observations =
            simulate_observations(&truth.states, &default_schedule(), &grid, &mut obs_rng).unwrap();
        let counts: Vec<u32> = observations.iter().map(|o| o.positives).collect();
        println!(
            "rep {rep}: true_delta {:.4} model {:?} counts {:?}",
            truth.delta_cu, truth.model, counts
        );
        let cfg = PmmhConfig {
            iterations: 400_000,
            particles: 1,
            path_thin: usize::MAX,
            cov_snapshot_every: 0,
            seed: 4242 + rep as u64,
            ..PmmhConfig::default()
        };
        let chain = pmmh(ModelKind::DSigm, &observations, &grid, &cfg).unwrap();
        let burn = chain.burn_in_len();
        let s = chain_diagnostics(&chain, burn, 50).unwrap();
        let ti = chain.names.iter().position(|n| n == "t_in").unwrap();
        let col = chain.coord_column(ti);
        let inwin =
            col[burn..].iter().filter(|&&t| t > 2003.0).count() as f64 / (col.len() - burn) as f64;
        println!(
            "  exact: accept {:.3} delta med {:.4} [{:.4},{:.4}] mean {:.4}  P(t_in>2003)={:.3}",
            s.acceptance_rate, s.delta_cu.median, s.delta_cu.q025, s.delta_cu.q975,
            s.delta_cu.mean, inwin
        );
    }
}
