use std::path::PathBuf;

use ntn_hfl::network::Medium;
use ntn_hfl::scenario::{builtin_scenario, config_hash, load_scenario, parse_scenario, to_canonical, BUILTIN_NAMES};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(format!("{name}.scn"))
}

fn repo_scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn builtins_match_golden_files() {
    for name in BUILTIN_NAMES {
        let golden = std::fs::read_to_string(fixture(name)).unwrap();
        let cfg = builtin_scenario(name).unwrap();
        assert_eq!(to_canonical(&cfg), golden, "{name} drifted from its fixture");
    }
}

#[test]
fn golden_files_load_back_to_the_builtins() {
    for name in BUILTIN_NAMES {
        let loaded = load_scenario(fixture(name)).unwrap();
        let builtin = builtin_scenario(name).unwrap();
        assert_eq!(loaded, builtin);
        assert_eq!(config_hash(&loaded), config_hash(&builtin));
    }
}

#[test]
fn table_two_columns() {
    let t = builtin_scenario("terrestrial_only").unwrap();
    assert_eq!((t.counts.ground_clients, t.counts.leo_clients), (20, 0));
    assert_eq!((t.counts.base_stations, t.counts.haps), (1, 0));
    assert_eq!(t.delay.channel_s, 0.005);

    for (name, delay, medium) in [("satellite_rf", 0.050, Medium::Rf), ("satellite_fso", 0.010, Medium::Fso)] {
        let s = builtin_scenario(name).unwrap();
        assert_eq!((s.counts.ground_clients, s.counts.leo_clients, s.counts.haps), (0, 5, 1));
        assert_eq!(s.delay.channel_s, delay);
        assert_eq!(s.link.satellite_aerial_medium, medium);
    }

    let d = builtin_scenario("distributed_haps").unwrap();
    assert_eq!((d.counts.ground_clients, d.counts.leo_clients, d.counts.haps), (200, 5, 5));
    assert_eq!(d.delay.channel_s, 0.008);

    for name in BUILTIN_NAMES {
        let c = builtin_scenario(name).unwrap();
        assert_eq!(c.rounds, 10);
        assert_eq!(c.train.learning_rate, 0.01);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.train.epochs_per_round, 120);
        assert_eq!(c.combiner.name, "weighted_mean");
        assert_eq!(c.partition.name, "dirichlet");
    }
}

#[test]
fn shipped_scenarios_load() {
    let multi = load_scenario(repo_scenario("multi_constellation.scn")).unwrap();
    assert!(multi.multi_constellation);
    assert_eq!(multi.counts.haps, 5);
    assert_eq!(multi.train.epochs_per_round, 20);
    let quick = load_scenario(repo_scenario("quick_terrestrial.scn")).unwrap();
    assert_eq!(quick.rounds, 3);
    assert_eq!(quick.counts.ground_clients, 20);
}

#[test]
fn canonical_text_is_a_fixed_point() {
    for name in BUILTIN_NAMES {
        let text = to_canonical(&builtin_scenario(name).unwrap());
        assert_eq!(to_canonical(&parse_scenario(&text).unwrap()), text);
    }
}
