mod common;

use std::path::Path;

use ppd::algo::{ppo_train, PpoConfig, RunOptions};
use ppd::experiments::{run_cell, CellKey, SizeVariant, TeacherScores};
use ppd::io::{read_metrics, AgentCheckpoint, ExperimentConfig, MetricsWriter, FORMAT_VERSION};
use ppd::seeding::rng_for;
use ppd::{Agent, EnvFamily, Error};

fn trained(family: EnvFamily, steps: usize) -> AgentCheckpoint {
    let mut cfg = PpoConfig::teacher_defaults(family);
    cfg.n_steps = 32;
    let out = ppo_train(family, &[16, 16], &cfg, &RunOptions::new("t", 41, steps), &mut |_| Ok(())).unwrap();
    AgentCheckpoint::new(out.agent).with_seed(41).with_tag("role", "teacher")
}

#[test]
fn checkpoint_file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for family in EnvFamily::ALL {
        let ckpt = trained(family, 3000);
        let path = dir.path().join(format!("{family}/teacher.ckpt"));
        ckpt.save(&path).unwrap();
        let back = AgentCheckpoint::load(&path).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.agent.policy.params()), bits(ckpt.agent.policy.params()));
        assert_eq!(bits(back.agent.value.params()), bits(ckpt.agent.value.params()));
        assert_eq!(bits(&back.agent.log_std), bits(&ckpt.agent.log_std));
        assert_eq!(back.agent, ckpt.agent);
        assert_eq!(back.seed, Some(41));
        assert_eq!(back.tag("role"), Some("teacher"));
        assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes().unwrap());
    }
}

#[test]
fn checkpoint_for_another_env_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.ckpt");
    let chain = trained(EnvFamily::ChainWalk, 1000);
    chain.save(&path).unwrap();
    assert!(matches!(AgentCheckpoint::load_for(&path, EnvFamily::ProcMaze), Err(Error::Config(_))));
    assert!(AgentCheckpoint::load_for(&path, EnvFamily::ChainWalk).is_ok());
    let scores = TeacherScores { eval: 1.0, reference: 1.0 };
    let key = CellKey::new(EnvFamily::PointMass, ppd::algo::Method::Ppd, SizeVariant::Same, 1, 1.0);
    let settings = ppd::experiments::DistillSettings::new(1000);
    assert!(run_cell(&chain, &scores, key, &settings, None).is_err());
}

#[test]
fn missing_and_stale_checkpoints_are_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.ckpt");
    assert!(matches!(AgentCheckpoint::load(&missing), Err(Error::MissingInput(_))));
    let agent = Agent::new(EnvFamily::ChainWalk, &[4], &mut rng_for(1, 0)).unwrap();
    let mut bytes = AgentCheckpoint::new(agent).to_bytes().unwrap();
    let text = String::from_utf8_lossy(&bytes).into_owned();
    let needle = format!("\"format_version\":{FORMAT_VERSION}");
    let at = text.find(&needle).expect("version in header") + needle.len() - 1;
    bytes[at] = b'9';
    assert!(matches!(AgentCheckpoint::from_bytes(&bytes), Err(Error::Version { .. })));
}

#[test]
fn seeded_initialization_survives_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("init.ckpt");
    let fresh = Agent::new(EnvFamily::PointMass, &[64, 64], &mut rng_for(7, 1)).unwrap();
    AgentCheckpoint::new(fresh).with_seed(7).save(&path).unwrap();
    let loaded = AgentCheckpoint::load(&path).unwrap();
    let reseeded = Agent::new(EnvFamily::PointMass, &[64, 64], &mut rng_for(loaded.seed.unwrap(), 1)).unwrap();
    assert_eq!(loaded.agent, reseeded);
}

#[test]
fn metrics_file_parses_back_to_the_emitted_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.csv");
    let mut writer = MetricsWriter::create(&path).unwrap();
    let mut opts = RunOptions::new("pm", 42, 6000);
    opts.log_interval = 1000;
    let cfg = PpoConfig::teacher_defaults(EnvFamily::PointMass);
    let out = ppo_train(EnvFamily::PointMass, &[8], &cfg, &opts, &mut |r| writer.write(r)).unwrap();
    drop(writer);
    let back = read_metrics(&path).unwrap();
    assert_eq!(back.len(), out.rows.len());
    for (a, b) in back.iter().zip(&out.rows) {
        // NaN returns before the first episode do not compare equal
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
    assert!(back.windows(2).all(|w| w[0].env_steps < w[1].env_steps));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let overrides: Vec<String> =
        ["env=\"chain_walk\"", "distill.total_steps=4000", "distill.lambda=2.0", "seed=9", "log_interval=500"]
            .map(String::from)
            .to_vec();
    let cfg = ExperimentConfig::load(None, &overrides).unwrap();
    cfg.write_resolved(dir.path()).unwrap();
    let reloaded = ExperimentConfig::load(Some(&dir.path().join("config.toml")), &[]).unwrap();
    assert_eq!(cfg, reloaded);

    let teacher = trained(EnvFamily::ChainWalk, 2000);
    let scores = TeacherScores::measure(&teacher, 9).unwrap();
    let run = |c: &ExperimentConfig, sub: &str| {
        let key = CellKey::new(c.env().unwrap(), ppd::algo::Method::Ppd, SizeVariant::Same, c.seed, c.distill.lambda);
        let out = dir.path().join(sub);
        let r = run_cell(&teacher, &scores, key, &c.distill_settings(), Some(&out)).unwrap();
        let run_dir = out.join(r.row.run_id);
        (std::fs::read(run_dir.join("metrics.csv")).unwrap(), std::fs::read(run_dir.join("student.ckpt")).unwrap())
    };
    assert_eq!(run(&cfg, "a"), run(&reloaded, "b"));
}

#[test]
fn documented_default_config_matches_the_built_in_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let cfg = ExperimentConfig::load(Some(&path), &[]).unwrap();
    assert_eq!(cfg, ExperimentConfig::defaults_for(EnvFamily::ProcMaze));
}
