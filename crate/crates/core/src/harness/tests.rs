// SPDX-License-Identifier: Apache-2.0

use super::*;
use crate::netgen::GammaTable;

fn tiny(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dims: GridDims { x: 7, y: 7, z: 2 },
        runs_per_sample: 2,
        dataset: DatasetConfig {
            source: DatasetSource::Synthetic,
            classes: vec![0, 5],
            train_per_class: 4,
            test_per_class: 2,
            augment: true,
        },
        output_dir: dir.to_path_buf(),
        workers: 2,
        ..Default::default()
    }
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = tiny(Path::new("out"));
    let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
}

#[test]
fn hash_ignores_plumbing_only() {
    let a = tiny(Path::new("a"));
    let mut b = tiny(Path::new("b"));
    b.transport = Transport::Udp { endpoint: None };
    b.workers = 7;
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.run_dir(), b.run_dir());
    b.seeds.jitter += 1;
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn validation() {
    let ok = tiny(Path::new("x"));
    for f in [
        |c: &mut ExperimentConfig| c.runs_per_sample = 0,
        |c: &mut ExperimentConfig| c.dataset.classes = vec![1, 1],
        |c: &mut ExperimentConfig| c.dataset.classes = vec![1, 20],
        |c: &mut ExperimentConfig| c.jitter_sigma_ps = -1.0,
        |c: &mut ExperimentConfig| c.train.c = 0.0,
        |c: &mut ExperimentConfig| c.dataset.test_per_class = 0,
    ] {
        let mut c = ok.clone();
        f(&mut c);
        assert!(c.validate().is_err());
    }
}

#[test]
fn sessions_pack_slot_and_sample() {
    let s = session_id(5, 123_456);
    assert_eq!(session_slot(s), 5);
    assert_eq!(s & ((1 << 20) - 1), 123_456);
    assert_ne!(slot_seed(2, 0), slot_seed(2, 1));
}

#[test]
fn mean_std_sample_convention() {
    assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
    let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
    assert_eq!(m, 2.0);
    assert_eq!(s, 1.0);
}

#[test]
fn sweep_covers_discussion_range() {
    let rows = sweep_scaling(2..=5, &ConnectivityParams::default(), 1).unwrap();
    let n: Vec<usize> = rows.iter().map(|r| r.neurons).collect();
    assert_eq!(n, [98, 147, 196, 245]);
    assert!(rows.iter().all(|r| r.relative_error.is_finite()));
    assert_eq!(rows[0].law, 12_437);
    assert_eq!(scaling_csv(&rows).lines().count(), 5);
}

#[test]
fn observation_cache_round_trip() {
    let mut a = ObservationMatrix::zeros(1024, 3);
    a.set(0, 0);
    a.set(1023, 2);
    let b = ObservationMatrix::zeros(1024, 3);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("o.bin");
    write_observations(&p, &[a.clone(), b.clone()]).unwrap();
    assert_eq!(read_observations(&p).unwrap(), vec![a, b]);
    std::fs::write(&p, b"BSOB\x01").unwrap();
    assert!(read_observations(&p).is_err());
}

#[test]
fn synthetic_subset_with_augmentation() {
    let cfg = tiny(Path::new("x"));
    let d = load_dataset(&cfg).unwrap();
    assert_eq!(d.train.len(), 16);
    assert_eq!(d.test.len(), 4);
    assert!(d.train.iter().chain(&d.test).all(|s| s.label < 2));
}

#[test]
fn missing_dataset_leaves_failure_marker() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.dataset.source = DatasetSource::Shd {
        dir: dir.path().join("nowhere"),
    };
    assert!(matches!(run_experiment(&cfg), Err(HarnessError::DatasetNotFound(_))));
    let run = cfg.run_dir();
    assert!(run.join(FAILURE_MARKER).is_file());
    assert!(run.join("config.toml").is_file());
}

#[test]
fn pipeline_is_reproducible_and_transport_blind() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let a = compare_encodings(&cfg).unwrap();
    assert_eq!(a.results.len(), 3);
    assert!(a.results.iter().all(ModeResult::is_consistent));
    assert_eq!(a.neurons, 98);
    assert!(a.mean_window_spikes > 0.0);
    for f in ["config.toml", "network.json", "resources.csv", "report.json", "accuracy.csv", "raster.svg", "model-combined.bin", "observations-0-1.bin"] {
        assert!(a.run_dir.join(f).is_file(), "{f}");
    }
    assert!(!a.run_dir.join(FAILURE_MARKER).exists());
    let reloaded = Observations::load(&a.run_dir, 0).unwrap();
    assert_eq!(reloaded.features(EncodingMode::Combined).unwrap().digest(), a.results[2].feature_digest);
    let ck = Checkpoint::load(&a.run_dir.join("model-combined.bin")).unwrap();
    let f = reloaded.features_with(&ck.scaler, ck.mode).unwrap();
    assert_eq!(evaluate(&ck.model, &f.x_test, &f.y_test).accuracy, a.results[2].per_run_accuracy[0]);
    let total: usize = a.results[2].confusion.iter().flatten().sum();
    assert_eq!(total, 4);

    let mut udp = cfg.clone();
    udp.output_dir = dir.path().join("udp");
    udp.transport = Transport::Udp { endpoint: None };
    let b = compare_encodings(&udp).unwrap();
    assert_eq!(a.config_hash, b.config_hash);
    for (x, y) in a.results.iter().zip(&b.results) {
        assert_eq!(x.feature_digest, y.feature_digest);
        assert_eq!(x.per_run_accuracy, y.per_run_accuracy);
    }
}

#[test]
fn silent_reservoir_only_fires_receptive_layer() {
    let mut cfg = tiny(Path::new("unused"));
    cfg.connectivity.gamma = GammaTable::zero();
    cfg.runs_per_sample = 1;
    let data = load_dataset(&cfg).unwrap();
    let spec = generate(cfg.dims, &cfg.connectivity, Some(1), shd::CHANNELS).unwrap();
    assert!(spec.synapses.is_empty());
    let net = Arc::new(elaborate(&spec, &cfg.block_config()).unwrap());
    let obs = simulate(&cfg, net, &data, 0).unwrap();
    for w in &obs.windows[0] {
        assert!((49..98).all(|n| w.count(n) == 0));
    }
    assert!(obs.windows[0].iter().any(|w| w.total() > 0));
}
