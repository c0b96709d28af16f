//! Contracts for the persistence layer and the command-line workflows:
//! parsers, artifact round-trips, exit codes, and determinism of reruns.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deltacu::epi::{Observation, Stratum};
use deltacu::grid::TimeGrid;
use deltacu::inference::{pmmh, ModelKind, PmmhConfig};
use deltacu::io::{
    atomic_write, config_hash, observations_to_csv, parse_chain_bytes, parse_config_bytes,
    parse_cu_paths_bytes, parse_observations_bytes, FileConfig, Overrides, Provenance,
};
use deltacu::Error;

fn grid6() -> TimeGrid {
    TimeGrid::new(1985.0, 2010.0, 6.0).unwrap()
}

#[test]
fn observations_parse_sorts_and_trims() {
    let csv = b"time,stratum,positives,sample_size\n\
        # a comment line\n\
        2008.75,fsw,106,425\n\
        2004.75, fsw , 110 , 425\n\
        2009.0,client,24,425\n";
    let obs = parse_observations_bytes(csv).unwrap();
    assert_eq!(obs.len(), 3);
    let times: Vec<f64> = obs.iter().map(|o| o.time).collect();
    assert_eq!(times, vec![2004.75, 2008.75, 2009.0]);
    assert_eq!(obs[0].positives, 110);
    assert_eq!(obs[2].stratum, Stratum::Client);
}

#[test]
fn observations_allow_same_time_across_strata() {
    let csv = b"time,stratum,positives,sample_size\n2005,client,10,100\n2005,fsw,20,100\n";
    let obs = parse_observations_bytes(csv).unwrap();
    assert_eq!(obs.len(), 2);
    assert_eq!(obs[0].time, obs[1].time);
    assert_ne!(obs[0].stratum, obs[1].stratum);
}

#[test]
fn observations_parse_rejections() {
    let cases: &[(&[u8], &str)] = &[
        (b"time,who,positives,sample_size\n", "header"),
        (b"time,stratum,positives,sample_size\n2005,nurse,1,10\n", "line 2"),
        (b"time,stratum,positives,sample_size\n2005,fsw,500,425\n", "positives 500 exceed"),
        (
            b"time,stratum,positives,sample_size\n2005,fsw,1,10\n2005,fsw,2,10\n",
            "duplicate observation",
        ),
        (b"time,stratum,positives,sample_size\nabc,fsw,1,10\n", "bad time"),
        (b"time,stratum,positives,sample_size\ninf,fsw,1,10\n", "finite"),
        (b"time,stratum,positives,sample_size\n2005,fsw,0,0\n", "sample_size"),
        (b"time,stratum,positives,sample_size\n2005,fsw,-1,10\n", "bad positives"),
    ];
    for (bytes, needle) in cases {
        match parse_observations_bytes(bytes) {
            Err(Error::Data(msg)) => {
                assert!(msg.contains(needle), "expected {needle:?} in {msg:?}")
            }
            other => panic!("expected data error with {needle:?}, got {other:?}"),
        }
    }
}

#[test]
fn observations_csv_round_trip() {
    let obs = vec![
        Observation { time: 2004.75, stratum: Stratum::Fsw, positives: 110, sample_size: 425 },
        Observation { time: 2009.0, stratum: Stratum::Client, positives: 24, sample_size: 425 },
    ];
    let text = observations_to_csv(&obs, "# prov line");
    assert!(text.starts_with("# prov line\ntime,stratum,positives,sample_size\n"));
    let back = parse_observations_bytes(text.as_bytes()).unwrap();
    assert_eq!(back, obs);
}

#[test]
fn config_defaults_and_unknown_fields() {
    let cfg = parse_config_bytes(b"{}").unwrap();
    let def = FileConfig::default();
    assert_eq!(cfg.grid, def.grid);
    assert_eq!(cfg.model, def.model);
    assert_eq!(cfg.seed, 1);
    assert_eq!(cfg.thin, 1);
    assert!(cfg.observations.is_none());

    assert!(matches!(parse_config_bytes(b"{\"grids\":{}}"), Err(Error::Config(_))));
    assert!(matches!(
        parse_config_bytes(b"{\"inference\":{\"partickles\":3}}"),
        Err(Error::Config(_))
    ));
    assert!(matches!(parse_config_bytes(b"not json"), Err(Error::Config(_))));
    assert!(matches!(parse_config_bytes(&[0xff, 0xfe]), Err(Error::Config(_))));

    // Invalid nested values surface as config errors too.
    assert!(parse_config_bytes(
        b"{\"grid\":{\"t0\":1985.0,\"t_end\":2010.0,\"delta_months\":7.0}}"
    )
    .is_err());
}

#[test]
fn config_resolve_propagates_master_seed() {
    let mut cfg =
        parse_config_bytes(b"{\"seed\":9,\"inference\":{\"seed\":123},\"ensemble\":{\"seed\":456}}")
            .unwrap();
    cfg.resolve(&Overrides::default()).unwrap();
    assert_eq!(cfg.inference.seed, 9);
    assert_eq!(cfg.ensemble.seed, 9);
    assert_eq!(cfg.ensemble.inference.seed, 9);

    let mut cfg = FileConfig::default();
    let ov = Overrides {
        seed: Some(42),
        model: Some(ModelKind::Dbr),
        particles: Some(77),
        iterations: Some(1234),
    };
    cfg.resolve(&ov).unwrap();
    assert_eq!(cfg.seed, 42);
    assert_eq!(cfg.model, ModelKind::Dbr);
    assert_eq!(cfg.inference.particles, 77);
    assert_eq!(cfg.ensemble.inference.particles, 77);
    assert_eq!(cfg.inference.iterations, 1234);
    assert_eq!(cfg.ensemble.inference.iterations, 1234);
    assert_eq!(cfg.inference.seed, 42);

    let mut cfg = FileConfig { thin: 0, ..FileConfig::default() };
    assert!(matches!(cfg.resolve(&Overrides::default()), Err(Error::Config(_))));
}

#[test]
fn config_hash_is_short_stable_and_seed_sensitive() {
    let a = FileConfig::default();
    let h1 = config_hash(&a);
    let h2 = config_hash(&a.clone());
    assert_eq!(h1.len(), 16);
    assert!(h1.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(h1, h2);
    let b = FileConfig { seed: 2, ..FileConfig::default() };
    assert_ne!(h1, config_hash(&b));
}

#[test]
fn chain_artifacts_round_trip_exactly() {
    let grid = grid6();
    let cfg = PmmhConfig {
        iterations: 30,
        particles: 5,
        path_thin: 7,
        cov_snapshot_every: 0,
        seed: 9,
        ..PmmhConfig::default()
    };
    let chain = pmmh(ModelKind::Bm, &[], &grid, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let prov = Provenance { config_hash: "abcd1234abcd1234".into(), seed: 9 };
    deltacu::io::artifacts::write_chain_csv(dir.path(), &chain, &prov).unwrap();
    deltacu::io::artifacts::write_cu_paths_csv(dir.path(), &chain, &prov).unwrap();

    let table = parse_chain_bytes(&std::fs::read(dir.path().join("chain.csv")).unwrap()).unwrap();
    assert_eq!(table.names, chain.names);
    assert_eq!(table.iterations, (0..chain.n_draws()).collect::<Vec<_>>());
    assert_eq!(table.accepted, chain.accepted);
    // Display formatting is shortest-round-trip, so everything comes back
    // bit-for-bit.
    assert_eq!(table.log_liks, chain.log_liks);
    assert_eq!(table.draws, chain.draws);
    assert_eq!(table.delta_cus, chain.delta_cus);

    let paths =
        parse_cu_paths_bytes(&std::fs::read(dir.path().join("cu_paths.csv")).unwrap()).unwrap();
    assert_eq!(paths.len(), chain.paths.len());
    for ((it, path), (cit, cpath)) in paths.iter().zip(&chain.paths) {
        assert_eq!(it, cit);
        assert_eq!(path, cpath);
    }
}

#[test]
fn chain_parse_rejections() {
    let bad_header = b"iter,log_lik,accepted,x,delta_cu\n";
    assert!(matches!(parse_chain_bytes(bad_header), Err(Error::Data(_))));
    let no_delta = b"iteration,log_lik,accepted,x\n";
    assert!(matches!(parse_chain_bytes(no_delta), Err(Error::Data(_))));
    let bad_flag = b"iteration,log_lik,accepted,x,delta_cu\n0,-1.0,TRUE,0.2,0.1\n";
    match parse_chain_bytes(bad_flag) {
        Err(Error::Data(msg)) => assert!(msg.contains("accepted flag"), "{msg}"),
        other => panic!("expected flag error, got {other:?}"),
    }
    let bad_float = b"iteration,log_lik,accepted,x,delta_cu\n0,nope,true,0.2,0.1\n";
    assert!(matches!(parse_chain_bytes(bad_float), Err(Error::Data(_))));
    let ragged = b"iteration,log_lik,accepted,x,delta_cu\n0,-1.0,true,0.2\n";
    assert!(parse_chain_bytes(ragged).is_err());
    // Special float values written by the chain writer must survive.
    let inf = b"iteration,log_lik,accepted,x,delta_cu\n0,-inf,true,0.2,0.1\n";
    let t = parse_chain_bytes(inf).unwrap();
    assert_eq!(t.log_liks[0], f64::NEG_INFINITY);
}

#[test]
fn cu_paths_parse_rejections() {
    assert!(matches!(parse_cu_paths_bytes(b"node_0,node_1\n"), Err(Error::Data(_))));
    assert!(matches!(parse_cu_paths_bytes(b"iteration\n"), Err(Error::Data(_))));
    let ragged = b"iteration,node_0,node_1\n0,0.5\n";
    assert!(parse_cu_paths_bytes(ragged).is_err());
    let bad = b"iteration,node_0\nzero,0.5\n";
    assert!(matches!(parse_cu_paths_bytes(bad), Err(Error::Data(_))));
    let ok = parse_cu_paths_bytes(b"iteration,node_0,node_1\n3,0.5,0.25\n").unwrap();
    assert_eq!(ok, vec![(3, vec![0.5, 0.25])]);
}

#[test]
fn atomic_write_creates_and_replaces() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("artifact.txt");
    atomic_write(&target, b"first").unwrap();
    assert_eq!(std::fs::read(&target).unwrap(), b"first");
    atomic_write(&target, b"second, longer payload").unwrap();
    assert_eq!(std::fs::read(&target).unwrap(), b"second, longer payload");
    // No stray temporaries left behind.
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n != "artifact.txt")
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn fuzz_corpus_seeds_feed_the_parsers() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let read_all = |sub: &str| -> Vec<(PathBuf, Vec<u8>)> {
        let dir = root.join(sub);
        let mut files: Vec<_> = std::fs::read_dir(&dir)
            .unwrap_or_else(|e| panic!("missing corpus dir {}: {e}", dir.display()))
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files.into_iter().map(|p| (p.clone(), std::fs::read(&p).unwrap())).collect()
    };

    let obs = read_all("fuzz_observations");
    assert!(!obs.is_empty());
    let ok = obs.iter().filter(|(_, b)| parse_observations_bytes(b).is_ok()).count();
    assert!(ok >= 1, "no observation seed parses cleanly");

    let cfgs = read_all("fuzz_config");
    assert!(!cfgs.is_empty());
    let ok = cfgs.iter().filter(|(_, b)| parse_config_bytes(b).is_ok()).count();
    assert!(ok >= 2, "config corpus should contain parseable seeds");

    let chains = read_all("fuzz_chain");
    assert!(!chains.is_empty());
    let ok = chains
        .iter()
        .filter(|(_, b)| parse_chain_bytes(b).is_ok() || parse_cu_paths_bytes(b).is_ok())
        .count();
    assert!(ok >= 2, "chain corpus should contain parseable seeds");
}

// ---- CLI end-to-end ----

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deltacu"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn deltacu");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn cli_simulate_fit_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = dir.path().join("sim.json");
    std::fs::write(
        &sim_cfg,
        r#"{
            "grid": {"t0": 1985.0, "t_end": 2010.0, "delta_months": 3.0},
            "seed": 21,
            "simulate": {
                "model": {"type": "dsigm", "cu0": 0.1, "eta": 0.8, "k": 0.05, "t_in": 2004.0}
            }
        }"#,
    )
    .unwrap();
    let sim_out = dir.path().join("sim");
    run_ok(bin().args(["simulate", "--config"]).arg(&sim_cfg).arg("--out").arg(&sim_out));
    assert!(sim_out.join("observations.csv").is_file());
    assert!(sim_out.join("true_path.csv").is_file());
    assert!(sim_out.join("run_meta.json").is_file());
    let obs =
        parse_observations_bytes(&std::fs::read(sim_out.join("observations.csv")).unwrap())
            .unwrap();
    assert_eq!(obs.len(), 4);

    let fit_cfg = dir.path().join("fit.json");
    std::fs::write(
        &fit_cfg,
        format!(
            r#"{{
                "grid": {{"t0": 1985.0, "t_end": 2010.0, "delta_months": 3.0}},
                "seed": 5,
                "model": "bm",
                "thin": 2,
                "observations": {:?},
                "inference": {{"iterations": 80, "particles": 25, "path_thin": 10,
                               "cov_snapshot_every": 40}}
            }}"#,
            sim_out.join("observations.csv")
        ),
    )
    .unwrap();
    let fit_a = dir.path().join("fit_a");
    let fit_b = dir.path().join("fit_b");
    run_ok(bin().args(["fit", "--config"]).arg(&fit_cfg).arg("--out").arg(&fit_a));
    for artifact in [
        "chain.csv",
        "cu_paths.csv",
        "cu_summary.csv",
        "delta_cu_summary.json",
        "prevalence_fit.csv",
        "observed.csv",
        "run_meta.json",
    ] {
        assert!(fit_a.join(artifact).is_file(), "missing {artifact}");
    }
    // Same config, same seed: the rerun is byte-identical.
    run_ok(bin().args(["fit", "--config"]).arg(&fit_cfg).arg("--out").arg(&fit_b));
    for artifact in ["chain.csv", "cu_paths.csv", "cu_summary.csv", "delta_cu_summary.json"] {
        assert_eq!(
            std::fs::read(fit_a.join(artifact)).unwrap(),
            std::fs::read(fit_b.join(artifact)).unwrap(),
            "{artifact} differs between identical runs"
        );
    }
    // A different seed produces a different chain.
    let fit_c = dir.path().join("fit_c");
    run_ok(
        bin()
            .args(["fit", "--config"])
            .arg(&fit_cfg)
            .args(["--seed", "6", "--out"])
            .arg(&fit_c),
    );
    assert_ne!(
        std::fs::read(fit_a.join("chain.csv")).unwrap(),
        std::fs::read(fit_c.join("chain.csv")).unwrap()
    );

    // Report regenerates the summaries from the persisted chain without
    // changing them.
    let before = std::fs::read(fit_a.join("cu_summary.csv")).unwrap();
    let before_json = std::fs::read(fit_a.join("delta_cu_summary.json")).unwrap();
    run_ok(bin().args(["report", "--out"]).arg(&fit_a));
    assert_eq!(std::fs::read(fit_a.join("cu_summary.csv")).unwrap(), before);
    assert_eq!(std::fs::read(fit_a.join("delta_cu_summary.json")).unwrap(), before_json);

    // Report refuses a non-fit directory.
    let out = bin().args(["report", "--out"]).arg(&sim_out).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // Missing config file -> config error -> exit 2.
    let out = bin()
        .args(["fit", "--config", "/nonexistent/cfg.json", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    // Fit without an observations path -> config error -> exit 2.
    let cfg = dir.path().join("no_obs.json");
    std::fs::write(&cfg, "{}").unwrap();
    let out =
        bin().args(["fit", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("y")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Corrupt observations -> data error -> exit 3.
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "time,stratum,positives,sample_size\n2005,fsw,500,425\n").unwrap();
    let cfg = dir.path().join("bad_obs.json");
    std::fs::write(
        &cfg,
        format!(r#"{{"observations": {:?}, "inference": {{"iterations": 10, "particles": 5}}}}"#, bad),
    )
    .unwrap();
    let out =
        bin().args(["fit", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("z")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");

    // Unknown model name on the command line -> exit 2.
    let out = bin()
        .args(["prior-check", "--model", "cubic", "--out"])
        .arg(dir.path().join("w"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_prior_check_writes_quantiles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pc.json");
    std::fs::write(
        &cfg,
        r#"{
            "grid": {"t0": 1985.0, "t_end": 2010.0, "delta_months": 6.0},
            "model": "bm",
            "seed": 3,
            "prior_check": {"draws": 4000}
        }"#,
    )
    .unwrap();
    let out_dir = dir.path().join("pc");
    run_ok(bin().args(["prior-check", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));
    let payload: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("prior_delta_cu.json")).unwrap())
            .unwrap();
    let q025 = payload["q025"].as_f64().unwrap();
    let median = payload["median"].as_f64().unwrap();
    let q975 = payload["q975"].as_f64().unwrap();
    assert!(q025 < median && median < q975);
    assert!(q025 > -1.0 && q975 < 1.0);
    assert_eq!(payload["n_draws"].as_u64(), Some(4000));
    assert_eq!(payload["model"].as_str(), Some("bm"));
}
