mod common;

use greensim_gateway::{GatewayConfig, CONFIG_ENV};

#[test]
fn environment_variable_overrides_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let chosen = dir.path().join("chosen.toml");
    let fallback = dir.path().join("fallback.toml");
    std::fs::write(&chosen, common::config_text(250, 5)).unwrap();
    std::fs::write(&fallback, "max_internet_sessions = 3\n").unwrap();

    std::env::remove_var(CONFIG_ENV);
    assert_eq!(GatewayConfig::load_from_env(Some(&fallback)).unwrap().max_internet_sessions, 3);
    assert_eq!(GatewayConfig::load_from_env(None).unwrap(), GatewayConfig::default());

    std::env::set_var(CONFIG_ENV, &chosen);
    let cfg = GatewayConfig::load_from_env(Some(&fallback)).unwrap();
    assert_eq!(cfg.profile("internet").unwrap().one_way_delay_ms, 250);
    assert_eq!(cfg.clients.len(), 4);

    std::env::set_var(CONFIG_ENV, dir.path().join("missing.toml"));
    assert!(GatewayConfig::load_from_env(Some(&fallback)).is_err());
    std::env::remove_var(CONFIG_ENV);
}
